//! Builders and brute-force oracles shared by the integration tests.
#![allow(dead_code)]

use banditmesh_core::comms::{exchange_views, ClientSummary, FiltrationView, StampMatrix};
use banditmesh_core::estimators::MomMode;
use banditmesh_core::graph::{EdgeSampling, GraphSnapshot};
use banditmesh_core::heterogeneous::{run_heterogeneous, HeterogOptions};
use banditmesh_core::homogeneous::{run_homogeneous, RunOptions};
use banditmesh_core::params::{AlgoParams, ParamInputs};
use banditmesh_core::sampling::{RewardKind, RewardModel, WeightLaw};
use banditmesh_core::scenario::Scenario;

pub fn scenario(means: Vec<Vec<f64>>, kind: RewardKind, alpha: f64, c_h: f64, seed: u64) -> Scenario {
    Scenario {
        model: RewardModel::new(kind, means, 1.0, 1.0, None, None).unwrap(),
        law: WeightLaw::new(alpha, c_h).unwrap(),
        sampling: EdgeSampling::Auto,
        seed,
    }
}

pub fn params(sc: &Scenario, horizon: u64, kappa: f64, alpha: f64, zeta: f64, gate: bool) -> AlgoParams {
    AlgoParams::new(ParamInputs {
        clients: sc.clients(),
        arms: sc.arms(),
        horizon,
        epsilon: 1.0,
        rho: 1.0,
        kappa,
        zeta,
        alpha,
        gate,
        mom_mode: MomMode::Contiguous,
    })
    .unwrap()
}

/// Clients reached by information leaving `origin` in round `from`, after
/// the exchanges of rounds `from..=to` (one hop per round).
pub fn reached(snaps: &[GraphSnapshot], origin: usize, from: u64, to: u64) -> Vec<bool> {
    let m = snaps[0].m();
    let mut has = vec![false; m];
    has[origin] = true;
    for r in from..=to {
        let g = &snaps[(r - 1) as usize];
        let before = has.clone();
        for i in 0..m {
            if before[i] {
                for &k in g.neighbors(i) {
                    has[k] = true;
                }
            }
        }
    }
    has
}

/// Freshest round of `origin` known to `client` after round `t`, by search
/// over every start round.
pub fn oracle_stamp(snaps: &[GraphSnapshot], client: usize, origin: usize, t: u64) -> u64 {
    (1..=t)
        .rev()
        .find(|&s| reached(snaps, origin, s, t)[client])
        .unwrap_or(0)
}

/// Per arm, pulls of rounds `> id_rounds` whose information reached
/// `center` by the end of round `t`.
pub fn oracle_hub_tally(
    snaps: &[GraphSnapshot],
    actions: &[Option<Vec<usize>>],
    center: usize,
    arms: usize,
    t: u64,
) -> Vec<u64> {
    let mut counts = vec![0u64; arms];
    for s in 1..=t {
        if let Some(acts) = &actions[(s - 1) as usize] {
            for (j, &a) in acts.iter().enumerate() {
                if reached(snaps, j, s, t)[center] {
                    counts[a] += 1;
                }
            }
        }
    }
    counts
}

/// Cumulative regret from an action log: `None` rounds are charged the
/// largest gap. Means are averaged over clients, summed per round in client
/// order and divided by the client count.
pub fn replay_regret(means: &[Vec<f64>], actions: &[Option<Vec<usize>>]) -> Vec<f64> {
    let m = means.len();
    let k = means[0].len();
    let mut mu = vec![0.0; k];
    for i in 0..k {
        let mut s = 0.0;
        for row in means {
            s += row[i];
        }
        mu[i] = s / m as f64;
    }
    let mut best = 0;
    for i in 0..k {
        if mu[i] > mu[best] {
            best = i;
        }
    }
    let worst = mu.iter().map(|x| mu[best] - x).fold(0.0, f64::max);
    let mut total = 0.0;
    let mut out = Vec::with_capacity(actions.len());
    for acts in actions {
        match acts {
            Some(acts) => {
                let mut s = 0.0;
                for &a in acts {
                    s += mu[best] - mu[a];
                }
                total += s / m as f64;
            }
            None => total += worst,
        }
        out.push(total);
    }
    out
}

/// Relay replay on `seeds` random small graphs. Counts every (round, client,
/// origin) where the stamp matrix or the message-level views disagree with
/// the search oracle.
pub fn filtration_mismatches(seeds: std::ops::Range<u64>) -> usize {
    let mut bad = 0;
    for seed in seeds {
        let m = 2 + (seed % 7) as usize;
        let horizon = 10 + seed % 11;
        let sc = scenario(vec![vec![0.0]; m], RewardKind::Gaussian, 1.5, 1.5, seed);
        let proc = sc.graph(0).unwrap();
        let mut rng = sc.graph_rng(0);
        let snaps: Vec<GraphSnapshot> = (1..=horizon).map(|t| proc.sample(t, &mut rng)).collect();
        let mut stamps = StampMatrix::new(m);
        let mut views: Vec<FiltrationView> = (0..m).map(|i| FiltrationView::new(i, m)).collect();
        for (idx, g) in snaps.iter().enumerate() {
            let t = idx as u64 + 1;
            stamps.exchange(t, g);
            for (i, v) in views.iter_mut().enumerate() {
                v.set_own(ClientSummary::blank(i, t, 1)).unwrap();
            }
            exchange_views(&mut views, g).unwrap();
            for i in 0..m {
                for j in 0..m {
                    let want = oracle_stamp(&snaps, i, j, t);
                    if stamps.stamp(i, j) != want || views[i].stamp(j) != want {
                        bad += 1;
                    }
                }
                let known: Vec<usize> = (0..m).filter(|&j| oracle_stamp(&snaps, i, j, t) > 0).collect();
                if views[i].known_origins() != known {
                    bad += 1;
                }
            }
        }
    }
    bad
}

/// Center log sizes of ungated homogeneous runs against the forward
/// propagation tally. Counts mismatching (round, arm) entries.
pub fn hub_tally_mismatches(seeds: std::ops::Range<u64>) -> usize {
    let mut bad = 0;
    for seed in seeds {
        let m = 2 + (seed % 5) as usize;
        let k = 2 + (seed % 2) as usize;
        let horizon = 20 + seed % 11;
        let means = vec![(0..k).map(|i| 0.2 * i as f64).collect(); m];
        let sc = scenario(means, RewardKind::ParetoShifted, 1.5, 1.5, seed);
        let p = params(&sc, horizon, 0.05, 1.5, 0.1, false);
        let run = run_homogeneous(&sc, &p, 0, RunOptions { record: true }).unwrap();
        let rec = run.record.unwrap();
        for t in (rec.id_rounds + 1)..=horizon {
            let want = oracle_hub_tally(&rec.effective, &rec.actions, rec.true_center, k, t);
            let got = &rec.hub_log_sizes[(t - 1) as usize];
            bad += (0..k).filter(|&a| got.get(a) != Some(&want[a])).count();
        }
    }
    bad
}

/// Streamed regret of both algorithms against the replay of their action
/// logs, compared bit for bit. Counts mismatching rounds.
pub fn regret_mismatches(seeds: std::ops::Range<u64>) -> usize {
    let mut bad = 0;
    for seed in seeds {
        let m = 1 + (seed % 4) as usize;
        let k = 1 + (seed % 3) as usize;
        let horizon = 20 + seed % 31;
        let homog = vec![(0..k).map(|i| 0.9 - 0.3 * i as f64).collect::<Vec<f64>>(); m];
        let sc = scenario(homog, RewardKind::ParetoShifted, 1.5, 1.0, seed);
        let p = params(&sc, horizon, 0.05, 1.5, 0.1, false);
        let run = run_homogeneous(&sc, &p, 0, RunOptions { record: true }).unwrap();
        let rec = run.record.unwrap();
        let want = replay_regret(sc.model.means(), &rec.actions);
        for (row, w) in run.output.trace.rows.iter().zip(&want) {
            bad += (row.regret != *w) as usize;
        }

        let heterog: Vec<Vec<f64>> = (0..m)
            .map(|c| {
                (0..k)
                    .map(|i| ((c + 2 * i + seed as usize) % 5) as f64 * 0.2)
                    .collect()
            })
            .collect();
        let sc = scenario(heterog, RewardKind::Gaussian, 1.5, 1.0, seed);
        let p = params(&sc, horizon, 0.05, 1.5, 0.1, false);
        let run = run_heterogeneous(&sc, &p, 0, HeterogOptions { record: true }).unwrap();
        let rec = run.record.unwrap();
        let acts: Vec<Option<Vec<usize>>> = rec.actions.into_iter().map(Some).collect();
        let want = replay_regret(sc.model.means(), &acts);
        for (row, w) in run.output.trace.rows.iter().zip(&want) {
            bad += (row.regret != *w) as usize;
        }
    }
    bad
}
