//! Cooperative heavy-tailed UCB for clients that share arm means.
//!
//! Rounds `1..=L` only identify the hub center: every client floods the
//! first-round degrees it knows and finally elects the largest (smallest
//! index on ties). From round `L + 1` on, each client pulls the arm with the
//! largest UCB index. A self-elected center keeps a deduplicated log of every
//! reward whose information has reached it and publishes the median of means
//! of that log together with its size. Other clients adopt the freshest
//! center publication they hold, falling back to their own rewards for arms
//! on which the center has nothing yet.

use std::cmp::Reverse;
use std::collections::VecDeque;

use crate::comms::StampMatrix;
use crate::error::{config_err, Result};
use crate::estimators::{argmax_ucb, RewardLog, UcbParams};
use crate::graph::{deterministic_hub_core, max_degree_client, GraphSnapshot, HubTracker};
use crate::harness::regret::{Mode, RegretAccumulator, RegretTrace, TraceRow};
use crate::harness::summary::{PullTally, ReplicationSummary, RunOutput};
use crate::params::AlgoParams;
use crate::scenario::Scenario;

/// First-round degrees known to one client; `-1` marks unknown entries.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HubIdState {
    known: Vec<i64>,
}

impl HubIdState {
    /// Each client starts knowing only its own degree in `g1`.
    pub fn from_first_round(g1: &GraphSnapshot) -> Vec<Self> {
        let m = g1.m();
        (0..m)
            .map(|i| {
                let mut known = vec![-1; m];
                known[i] = g1.neighbors(i).len() as i64;
                Self { known }
            })
            .collect()
    }

    pub fn known(&self) -> &[i64] {
        &self.known
    }

    /// Largest known degree, smallest index on ties.
    pub fn elect(&self) -> usize {
        let mut best = 0;
        for (j, &d) in self.known.iter().enumerate() {
            if d > self.known[best] {
                best = j;
            }
        }
        best
    }
}

/// One flooding round: every client learns every degree its neighbors knew
/// before the round.
pub fn hub_identification_round(states: &mut [HubIdState], snap: &GraphSnapshot) {
    let before: Vec<Vec<i64>> = states.iter().map(|s| s.known.clone()).collect();
    for (i, state) in states.iter_mut().enumerate() {
        for &k in snap.neighbors(i) {
            for (mine, &theirs) in state.known.iter_mut().zip(&before[k]) {
                if *mine < 0 && theirs >= 0 {
                    *mine = theirs;
                }
            }
        }
    }
}

pub fn homog_select_arm(est: &[f64], counts: &[u64], t: u64, ucb: &UcbParams) -> usize {
    argmax_ucb(est, counts, t, ucb)
}

/// Extra output kept only when asked for (tests and dumps).
#[derive(Debug, Clone, Default)]
pub struct RunRecord {
    /// Graphs as sampled.
    pub snapshots: Vec<GraphSnapshot>,
    /// Graphs actually used for exchange (differ from `snapshots` when gated).
    pub effective: Vec<GraphSnapshot>,
    /// Arm pulled by each client, `None` in rounds without pulls.
    pub actions: Vec<Option<Vec<usize>>>,
    pub rewards: Vec<Option<Vec<f64>>>,
    /// Per round, per arm: size of the true center's log (empty if it is not a center).
    pub hub_log_sizes: Vec<Vec<u64>>,
    /// Per round, per client: stamp of the adopted center publication (0 if none).
    pub adopted_stamps: Vec<Vec<u64>>,
    pub elected: Vec<usize>,
    pub true_center: usize,
    pub id_rounds: u64,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    pub record: bool,
}

/// Log-keeping state of a self-elected center.
struct Center {
    client: usize,
    logs: Vec<RewardLog>,
    est: Vec<f64>,
    counts: Vec<u64>,
    /// Rounds of each origin already in the log: `(L, applied[j]]`.
    applied: Vec<u64>,
    /// Publications at the beginning of each learning round, flattened `rounds x K`.
    pub_est: Vec<f64>,
    pub_counts: Vec<u64>,
}

impl Center {
    fn new(client: usize, p: &AlgoParams) -> Self {
        Self {
            client,
            logs: (0..p.arms).map(|_| RewardLog::new(p.mom_mode, &p.mom)).collect(),
            est: vec![0.0; p.arms],
            counts: vec![0; p.arms],
            applied: vec![p.id_rounds; p.clients],
            pub_est: Vec::new(),
            pub_counts: Vec::new(),
        }
    }

    fn publish(&mut self) {
        self.pub_est.extend_from_slice(&self.est);
        self.pub_counts.extend_from_slice(&self.counts);
    }

    /// Publication made at the beginning of round `stamp`.
    fn publication(&self, stamp: u64, id_rounds: u64, arms: usize) -> (&[f64], &[u64]) {
        let i = (stamp - id_rounds - 1) as usize * arms;
        (&self.pub_est[i..i + arms], &self.pub_counts[i..i + arms])
    }

    /// Pull into the log every reward newly covered by the center's stamps.
    /// Returns how many relayed rewards arrived more than once.
    fn absorb(
        &mut self,
        stamps: &StampMatrix,
        snap: &GraphSnapshot,
        history: &[VecDeque<(u64, usize, f64)>],
        p: &AlgoParams,
        scratch: &mut Vec<f64>,
    ) -> u64 {
        let c = self.client;
        let row = stamps.row(c);
        let mut delivered = 0u64;
        for &k in snap.neighbors(c) {
            for (j, &s) in stamps.prev_row(k).iter().enumerate() {
                let hi = (s as u64).min(row[j] as u64);
                delivered += hi.saturating_sub(self.applied[j]);
            }
        }
        let mut fresh_from_neighbors = 0u64;
        let mut changed = vec![false; p.arms];
        for j in 0..p.clients {
            let hi = row[j] as u64;
            let lo = self.applied[j];
            if hi <= lo {
                continue;
            }
            if j != c {
                fresh_from_neighbors += hi - lo;
            }
            let q = &history[j];
            let front = q.front().map_or(hi + 1, |e| e.0);
            for s in (lo + 1)..=hi {
                let (round, arm, r) = q[(s - front) as usize];
                debug_assert_eq!(round, s);
                self.logs[arm].push(r);
                changed[arm] = true;
            }
            self.applied[j] = hi;
        }
        for (i, ch) in changed.into_iter().enumerate() {
            if ch {
                self.est[i] = self.logs[i].estimate(&p.mom, scratch).unwrap_or(0.0);
                self.counts[i] = self.logs[i].len();
            }
        }
        delivered.saturating_sub(fresh_from_neighbors)
    }
}

struct Client {
    n: Vec<u64>,
    logs: Vec<RewardLog>,
    est: Vec<f64>,
    agg: Vec<u64>,
}

fn install_centers(elected: &[usize], p: &AlgoParams, center_of: &mut [Option<usize>]) -> Vec<Center> {
    let mut centers = Vec::new();
    for (i, &e) in elected.iter().enumerate() {
        if e == i {
            center_of[i] = Some(centers.len());
            centers.push(Center::new(i, p));
        }
    }
    centers
}

pub struct HomogRun {
    pub output: RunOutput,
    pub record: Option<RunRecord>,
}

pub fn run_homogeneous(
    sc: &Scenario,
    p: &AlgoParams,
    replication: u64,
    opts: RunOptions,
) -> Result<HomogRun> {
    if !sc.model.is_homogeneous() {
        return Err(config_err(
            "the homogeneous algorithm needs identical means across clients",
        ));
    }
    if sc.clients() != p.clients || sc.arms() != p.arms {
        return Err(config_err("scenario and parameters disagree on sizes"));
    }
    let (m, k, horizon, l) = (p.clients, p.arms, p.horizon, p.id_rounds);
    let gm = sc.global_means()?;
    let proc = sc.graph(replication)?;
    let mut grng = sc.graph_rng(replication);
    let mut rewards = sc.rewards(replication);

    let mut acc = RegretAccumulator::new(&gm, m);
    let mut tally = PullTally::new(m, k, horizon, &gm);
    let mut trace = RegretTrace::new(replication, k);
    let mut summary = ReplicationSummary::new(replication);
    let mut record = opts.record.then(|| RunRecord {
        id_rounds: l,
        ..RunRecord::default()
    });

    let mut stamps = StampMatrix::new(m);
    let mut snap = GraphSnapshot::empty(0, m);
    let mut keys: Vec<(usize, Reverse<usize>)> = Vec::new();
    let mut next_keys: Vec<(usize, Reverse<usize>)> = Vec::new();
    let mut elected: Vec<usize> = Vec::new();
    let mut centers: Vec<Center> = Vec::new();
    let mut center_of: Vec<Option<usize>> = vec![None; m];
    if l == 0 {
        elected = (0..m).collect();
        centers = install_centers(&elected, p, &mut center_of);
    }

    let mut clients: Vec<Client> = (0..m)
        .map(|_| Client {
            n: vec![0; k],
            logs: (0..k).map(|_| RewardLog::new(p.mom_mode, &p.mom)).collect(),
            est: vec![0.0; k],
            agg: vec![0; k],
        })
        .collect();
    let mut history: Vec<VecDeque<(u64, usize, f64)>> = vec![VecDeque::new(); m];
    let mut adopted = vec![0u64; m];
    let mut hub: Option<HubTracker> = None;
    let mut true_center = 0;
    let mut actions = vec![0usize; m];
    let mut round_rewards = vec![0.0; m];
    let mut pulls = vec![0u64; k];
    let mut scratch = Vec::new();

    for t in 1..=horizon {
        let learning = t > l;
        if learning {
            for c in &mut centers {
                c.publish();
            }
            for (i, cl) in clients.iter_mut().enumerate() {
                let a = homog_select_arm(&cl.est, &cl.agg, t, &p.ucb);
                let r = rewards.next(&sc.model, i, a);
                actions[i] = a;
                round_rewards[i] = r;
                cl.n[a] += 1;
                cl.logs[a].push(r);
                history[i].push_back((t, a, r));
                tally.record(t, i, a);
                pulls[a] += 1;
            }
            acc.add_actions(&actions);
            summary.ucb_client_rounds += m as u64;
        } else {
            acc.add_worst();
        }

        proc.sample_into(t, &mut grng, &mut snap);
        if t == 1 {
            true_center = max_degree_client(&snap);
            hub = Some(HubTracker::new(m, true_center, p.large_hub_threshold()));
            keys = (0..m).map(|i| (snap.neighbors(i).len(), Reverse(i))).collect();
        }
        let hub_size = snap.neighbors(true_center).len();
        if let Some(h) = hub.as_mut() {
            h.observe(t, snap.neighbors(true_center));
        }
        if let Some(rec) = record.as_mut() {
            rec.snapshots.push(snap.clone());
        }

        if !learning {
            next_keys.clone_from(&keys);
            for (i, nk) in next_keys.iter_mut().enumerate() {
                for &j in snap.neighbors(i) {
                    *nk = (*nk).max(keys[j]);
                }
            }
            std::mem::swap(&mut keys, &mut next_keys);
            if t == l {
                elected = keys.iter().map(|key| key.1 .0).collect();
                centers = install_centers(&elected, p, &mut center_of);
            }
        } else if p.gate {
            let mut gated = false;
            for c in &centers {
                if (snap.neighbors(c.client).len() as u64) < p.gate_threshold {
                    snap.isolate(c.client);
                    gated = true;
                }
            }
            summary.gated_rounds += gated as u64;
        }
        if let Some(rec) = record.as_mut() {
            rec.effective.push(snap.clone());
        }

        let st = stamps.exchange(t, &snap);
        if learning {
            summary.staleness_max = summary.staleness_max.max(st.staleness_max);
            for c in &mut centers {
                summary.duplicates_suppressed += c.absorb(&stamps, &snap, &history, p, &mut scratch);
            }
            for (j, q) in history.iter_mut().enumerate() {
                let keep_after = centers.iter().map(|c| c.applied[j]).min().unwrap_or(t);
                while q.front().is_some_and(|e| e.0 <= keep_after) {
                    q.pop_front();
                }
            }
            for (i, cl) in clients.iter_mut().enumerate() {
                if let Some(ci) = center_of[i] {
                    cl.est.copy_from_slice(&centers[ci].est);
                    cl.agg.copy_from_slice(&centers[ci].counts);
                    adopted[i] = t + 1;
                    continue;
                }
                let e = elected[i];
                let publication = center_of[e].and_then(|ci| {
                    let s = stamps.stamp(i, e);
                    (s > l).then(|| (s, centers[ci].publication(s, l, k)))
                });
                if let Some((s, _)) = publication {
                    adopted[i] = s;
                }
                for a in 0..k {
                    match publication {
                        Some((_, (est, counts))) if counts[a] > 0 => {
                            cl.est[a] = est[a];
                            cl.agg[a] = counts[a];
                        }
                        _ => {
                            cl.agg[a] = cl.n[a];
                            if cl.n[a] > 0 {
                                cl.est[a] = cl.logs[a].estimate(&p.mom, &mut scratch).unwrap_or(0.0);
                            }
                        }
                    }
                }
            }
        }

        if let Some(rec) = record.as_mut() {
            rec.actions.push(learning.then(|| actions.clone()));
            rec.rewards.push(learning.then(|| round_rewards.clone()));
            rec.hub_log_sizes.push(
                center_of[true_center]
                    .filter(|_| learning)
                    .map_or_else(Vec::new, |ci| centers[ci].counts.clone()),
            );
            rec.adopted_stamps
                .push(if learning { adopted.clone() } else { vec![0; m] });
        }
        trace.rows.push(TraceRow {
            t,
            regret: acc.total(),
            staleness_max: st.staleness_max,
            hub_size: hub_size as i64,
            mode: if learning { Mode::Ucb } else { Mode::Idphase },
            pulls: pulls.clone(),
        });
    }

    let hub = hub.expect("horizon is at least one round");
    summary.regret = acc.total();
    summary.hub_center = true_center;
    summary.hub_center_weight = proc.weights()[true_center];
    summary.persistent_hub_size = hub.persistent_size();
    summary.deterministic_core_size = deterministic_hub_core(&proc, true_center)?.len();
    summary.events.a1 = Some(hub.persistent_size() as f64 >= p.hub_size_threshold());
    summary.events.a2 = Some(summary.staleness_max as f64 <= p.staleness_bound());
    summary.events.a3 = Some(elected.iter().all(|&e| e == true_center));
    summary.events.a_alpha_zeta = Some(summary.hub_center_weight >= p.center_weight_threshold());
    tally.fill(&mut summary);
    if let Some(rec) = record.as_mut() {
        rec.elected = elected;
        rec.true_center = true_center;
    }
    Ok(HomogRun {
        output: RunOutput { trace, summary },
        record,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::{median_of_means, MomMode};
    use crate::graph::EdgeSampling;
    use crate::params::ParamInputs;
    use crate::sampling::{RewardKind, RewardModel, WeightLaw};

    fn scenario(m: usize, means: Vec<f64>, kind: RewardKind, seed: u64, c_h: f64) -> Scenario {
        let model = RewardModel::new(kind, vec![means; m], 1.0, 1.0, None, None).unwrap();
        Scenario {
            model,
            law: WeightLaw::new(1.5, c_h).unwrap(),
            sampling: EdgeSampling::Auto,
            seed,
        }
    }

    fn params(m: usize, k: usize, horizon: u64, kappa: f64, gate: bool) -> AlgoParams {
        AlgoParams::new(ParamInputs {
            clients: m,
            arms: k,
            horizon,
            epsilon: 1.0,
            rho: 1.0,
            kappa,
            zeta: 0.1,
            alpha: 1.5,
            gate,
            mom_mode: MomMode::Contiguous,
        })
        .unwrap()
    }

    #[test]
    fn election_examples() {
        let g = GraphSnapshot::from_edges(1, 4, &[(0, 1), (1, 2), (2, 3)]).unwrap();
        let mut states = HubIdState::from_first_round(&g);
        assert_eq!(states[3].known(), &[-1, -1, -1, 1]);
        hub_identification_round(&mut states, &GraphSnapshot::complete(2, 4));
        for s in &states {
            assert_eq!(s.known(), &[1, 2, 2, 1]);
            assert_eq!(s.elect(), 1);
        }
        let single = HubIdState::from_first_round(&GraphSnapshot::empty(1, 1));
        assert_eq!(single[0].elect(), 0);
    }

    #[test]
    fn select_examples() {
        let ucb = UcbParams::new(1.0, 1.0).unwrap();
        assert_eq!(homog_select_arm(&[0.0; 3], &[0; 3], 2, &ucb), 0);
        assert_eq!(homog_select_arm(&[0.9, 0.1], &[50, 50], 100, &ucb), 0);
        assert_eq!(homog_select_arm(&[0.5, 0.6], &[1000, 4], 100, &ucb), 1);
    }

    #[test]
    fn single_arm_and_equal_means_have_zero_regret() {
        let sc = scenario(5, vec![0.4], RewardKind::ParetoShifted, 1, 1.0);
        let run = run_homogeneous(&sc, &params(5, 1, 300, 0.3, false), 0, RunOptions::default()).unwrap();
        assert_eq!(run.output.summary.regret, 0.0);
        let sc = scenario(5, vec![0.4; 3], RewardKind::ParetoShifted, 1, 1.0);
        let run = run_homogeneous(&sc, &params(5, 3, 300, 0.3, false), 0, RunOptions::default()).unwrap();
        assert_eq!(run.output.summary.regret, 0.0);
    }

    #[test]
    fn single_client_is_mom_ucb() {
        let sc = scenario(1, vec![0.2, 0.5, 0.4], RewardKind::ParetoShifted, 3, 1.0);
        let p = params(1, 3, 400, 0.3, false);
        let run = run_homogeneous(&sc, &p, 0, RunOptions { record: true }).unwrap();
        let rec = run.record.unwrap();
        let mut logs: Vec<Vec<f64>> = vec![Vec::new(); 3];
        for t in 0..400usize {
            let counts: Vec<u64> = logs.iter().map(|l| l.len() as u64).collect();
            let est: Vec<f64> = logs
                .iter()
                .map(|l| {
                    if l.is_empty() {
                        0.0
                    } else {
                        median_of_means(l, &p.mom).unwrap()
                    }
                })
                .collect();
            let a = argmax_ucb(&est, &counts, t as u64 + 1, &p.ucb);
            assert_eq!(rec.actions[t].as_ref().unwrap()[0], a, "round {}", t + 1);
            logs[a].push(rec.rewards[t].as_ref().unwrap()[0]);
        }
    }

    #[test]
    fn complete_graph_hub_counts_every_pull() {
        // Weights large enough that every pair connects each round.
        let sc = scenario(3, vec![0.3, 0.7], RewardKind::Bernoulli, 5, 1e4);
        let p = params(3, 2, 40, 0.1, false);
        let run = run_homogeneous(&sc, &p, 0, RunOptions { record: true }).unwrap();
        let rec = run.record.unwrap();
        assert_eq!(run.output.summary.events.a3, Some(true));
        let mut tally = [0u64; 2];
        for (t, acts) in rec.actions.iter().enumerate() {
            if let Some(acts) = acts {
                for &a in acts {
                    tally[a] += 1;
                }
                assert_eq!(rec.hub_log_sizes[t], tally.to_vec());
            }
        }
    }

    #[test]
    fn closed_gate_blocks_publications() {
        let sc = scenario(30, vec![0.3, 0.7], RewardKind::Gaussian, 2, 1.0);
        let mut p = params(30, 2, 200, 0.2, true);
        p.gate_threshold = 1000;
        let run = run_homogeneous(&sc, &p, 0, RunOptions { record: true }).unwrap();
        let rec = run.record.unwrap();
        for (t, row) in rec.adopted_stamps.iter().enumerate() {
            for (i, &s) in row.iter().enumerate() {
                if rec.elected[i] != i {
                    assert_eq!(s, 0, "client {i} adopted at round {}", t + 1);
                }
            }
        }
        assert_eq!(run.output.summary.gated_rounds, 200 - p.id_rounds);
    }

    #[test]
    fn trace_invariants() {
        let sc = scenario(20, vec![0.1, 0.3, 0.5], RewardKind::ParetoShifted, 9, 1.0);
        let p = params(20, 3, 600, 0.2, false);
        let run = run_homogeneous(&sc, &p, 0, RunOptions::default()).unwrap();
        let rows = &run.output.trace.rows;
        assert_eq!(rows.len(), 600);
        let dmax = 0.4;
        for w in rows.windows(2) {
            assert!(w[1].regret >= w[0].regret);
        }
        assert!(rows.last().unwrap().regret <= 600.0 * dmax + 1e-9);
        let learning = 600 - p.id_rounds;
        assert_eq!(rows.last().unwrap().pulls.iter().sum::<u64>(), learning * 20);
        assert!(rows[..p.id_rounds as usize]
            .iter()
            .all(|r| r.mode == Mode::Idphase));
    }

    #[test]
    fn rejects_heterogeneous_means() {
        let model = RewardModel::new(
            RewardKind::Bernoulli,
            vec![vec![0.1, 0.2], vec![0.2, 0.1]],
            1.0,
            1.0,
            None,
            None,
        );
        // Bernoulli moments are below rho = 1 for these means.
        let sc = Scenario {
            model: model.unwrap(),
            law: WeightLaw::new(1.5, 1.0).unwrap(),
            sampling: EdgeSampling::Auto,
            seed: 0,
        };
        assert!(run_homogeneous(&sc, &params(2, 2, 10, 0.1, false), 0, RunOptions::default()).is_err());
    }
}
