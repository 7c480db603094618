//! Cooperative heavy-tailed UCB for clients whose arm means differ.
//!
//! A round-robin burn-in collects local averages and contact statistics and
//! seeds each client's global estimate with a uniform average over the
//! clients it met. In the learning period each client mixes stored global
//! and local estimates of every origin (three-term aggregation) and pulls by
//! UCB on the aggregate count, unless its local count lags that aggregate by
//! more than the slack, in which case it pulls round-robin until it catches
//! up.
//!
//! What origin `j` publishes at stamp `s` is its state right after the
//! round-`s` pull: local counts and local estimates including that pull, and
//! aggregate count and global estimate as they stood at the start of the round.

use crate::comms::{Archive, StampMatrix};
use crate::error::{config_err, usage_err, Result};
use crate::estimators::{argmax_ucb, RewardLog, UcbParams};
use crate::graph::{
    deterministic_hub_core, max_degree_client, EmpiricalAdjacency, GraphSnapshot, HubTracker,
};
use crate::harness::regret::{Mode, RegretAccumulator, RegretTrace, TraceRow};
use crate::harness::summary::{PullTally, ReplicationSummary, RunOutput};
use crate::params::AlgoParams;
use crate::scenario::Scenario;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rule2Weights {
    /// Weight on each stored global estimate (after clamping at 0).
    pub p_prime: f64,
    /// Weight on each stored local estimate.
    pub d: f64,
    /// `12^{1/eps} + 1`.
    pub n_const: f64,
    /// The unclamped weight.
    pub raw_p_prime: f64,
}

impl Rule2Weights {
    pub fn clamped(&self) -> bool {
        self.raw_p_prime < 0.0
    }
}

pub fn rule2_weights(m: usize, epsilon: f64) -> Result<Rule2Weights> {
    if m == 0 {
        return Err(usage_err("weights need at least one client"));
    }
    if !(epsilon > 0.0 && epsilon <= 1.0) {
        return Err(usage_err(format!("epsilon must lie in (0, 1], got {epsilon}")));
    }
    let n_const = 12f64.powf(1.0 / epsilon) + 1.0;
    let s = 2f64.powf(1.0 / (1.0 + epsilon));
    let mf = m as f64;
    let raw = (n_const - mf * s) / (mf * n_const * s);
    let p_prime = raw.max(0.0);
    Ok(Rule2Weights {
        p_prime,
        d: (1.0 - mf * p_prime) / mf,
        n_const,
        raw_p_prime: raw,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeterogMode {
    Ucb,
    Resync,
}

/// UCB on the aggregate counts, or `t mod K` when some local count is at
/// least `slack` behind its aggregate.
pub fn heterog_select_arm(
    local_counts: &[u64],
    agg_counts: &[u64],
    global_est: &[f64],
    t: u64,
    ucb: &UcbParams,
    slack: u64,
) -> (usize, HeterogMode) {
    let lagging = local_counts
        .iter()
        .zip(agg_counts)
        .any(|(&n, &big_n)| big_n >= slack && n <= big_n - slack);
    if lagging {
        ((t % global_est.len() as u64) as usize, HeterogMode::Resync)
    } else {
        (argmax_ucb(global_est, agg_counts, t, ucb), HeterogMode::Ucb)
    }
}

/// Published content of one client at one stamp.
#[derive(Debug, Clone, PartialEq)]
pub struct Published {
    pub local_counts: Vec<u64>,
    pub local_est: Vec<f64>,
    pub agg_counts: Vec<u64>,
    pub global_est: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct HeterogClient {
    pub n: Vec<u64>,
    pub agg: Vec<u64>,
    pub local: Vec<f64>,
    pub global: Vec<f64>,
    logs: Vec<RewardLog>,
    sums: Vec<f64>,
}

impl HeterogClient {
    pub fn new(p: &AlgoParams) -> Self {
        Self {
            n: vec![0; p.arms],
            agg: vec![0; p.arms],
            local: vec![0.0; p.arms],
            global: vec![0.0; p.arms],
            logs: (0..p.arms).map(|_| RewardLog::new(p.mom_mode, &p.mom)).collect(),
            sums: vec![0.0; p.arms],
        }
    }

    fn publish(&self) -> Published {
        Published {
            local_counts: self.n.clone(),
            local_est: self.local.clone(),
            agg_counts: self.agg.clone(),
            global_est: self.global.clone(),
        }
    }
}

/// Aggregation of one client at the end of a learning round.
///
/// `stored(j)` is the client's stored copy of origin `j` (`None` if nothing
/// from `j` ever arrived); the owner's own entry uses `own` instead. Returns
/// the number of origins that contributed nothing.
pub fn rule2_update(
    owner: usize,
    own: &mut HeterogClient,
    neighbors: &[usize],
    stored: impl Fn(usize) -> Option<Published>,
    m: usize,
    w: &Rule2Weights,
) -> u64 {
    let k = own.n.len();
    let mut gaps = 0;
    let mut agg = own.agg.clone();
    for a in 0..k {
        agg[a] = agg[a].max(own.n[a]);
    }
    for &j in neighbors {
        if let Some(s) = stored(j) {
            for a in 0..k {
                agg[a] = agg[a].max(s.agg_counts[a]);
            }
        }
    }
    let mut global = vec![0.0; k];
    for j in 0..m {
        if j == owner {
            for a in 0..k {
                global[a] += w.p_prime * own.global[a] + w.d * own.local[a];
            }
            continue;
        }
        match stored(j) {
            Some(s) => {
                for a in 0..k {
                    global[a] += w.p_prime * s.global_est[a] + w.d * s.local_est[a];
                }
            }
            None => gaps += 1,
        }
    }
    own.agg = agg;
    own.global = global;
    gaps
}

/// Recorded trajectory for tests and estimator checks.
#[derive(Debug, Clone, Default)]
pub struct HeterogRecord {
    pub snapshots: Vec<GraphSnapshot>,
    pub actions: Vec<Vec<usize>>,
    pub rewards: Vec<Vec<f64>>,
    pub modes: Vec<Vec<HeterogMode>>,
    /// Per round, flattened `M x K`, values at the start of the next round.
    pub global_est: Vec<Vec<f64>>,
    pub local_counts: Vec<Vec<u64>>,
    pub agg_counts: Vec<Vec<u64>>,
    pub burn_in: u64,
}

pub struct HeterogRun {
    pub output: RunOutput,
    pub record: Option<HeterogRecord>,
    pub weights: Rule2Weights,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct HeterogOptions {
    pub record: bool,
}

pub fn run_heterogeneous(
    sc: &Scenario,
    p: &AlgoParams,
    replication: u64,
    opts: HeterogOptions,
) -> Result<HeterogRun> {
    if sc.clients() != p.clients || sc.arms() != p.arms {
        return Err(config_err("scenario and parameters disagree on sizes"));
    }
    if p.burn_in < p.arms as u64 {
        return Err(config_err("burn-in must cover every arm at least once"));
    }
    let (m, k, horizon, lb) = (p.clients, p.arms, p.horizon, p.burn_in);
    let w = rule2_weights(m, p.ucb.epsilon)?;
    let gm = sc.global_means()?;
    let proc = sc.graph(replication)?;
    let mut grng = sc.graph_rng(replication);
    let mut rewards = sc.rewards(replication);

    let mut acc = RegretAccumulator::new(&gm, m);
    let mut tally = PullTally::new(m, k, horizon, &gm);
    let mut trace = RegretTrace::new(replication, k);
    let mut summary = ReplicationSummary::new(replication);
    summary.p_prime_clamped = w.clamped();
    let mut record = opts.record.then(|| HeterogRecord {
        burn_in: lb,
        ..HeterogRecord::default()
    });

    let mut clients: Vec<HeterogClient> = (0..m).map(|_| HeterogClient::new(p)).collect();
    let mut stamps = StampMatrix::new(m);
    let mut archive: Archive<Published> = Archive::new(m);
    let mut adjacency = EmpiricalAdjacency::new(m);
    // Local estimate of `j` as published at the last direct contact with `m`.
    let mut direct: Vec<Option<Vec<f64>>> = vec![None; m * m];
    let mut snap = GraphSnapshot::empty(0, m);
    let mut hub: Option<HubTracker> = None;
    let mut true_center = 0;
    let mut actions = vec![0usize; m];
    let mut modes = vec![HeterogMode::Ucb; m];
    let mut round_rewards = vec![0.0; m];
    let mut pulls = vec![0u64; k];
    let mut streak = vec![0u64; m];
    let mut longest_streak = 0u64;
    let mut scratch = Vec::new();

    for t in 1..=horizon {
        let burning = t <= lb;
        for (i, cl) in clients.iter_mut().enumerate() {
            let (a, mode) = if burning {
                ((t % k as u64) as usize, HeterogMode::Ucb)
            } else {
                heterog_select_arm(&cl.n, &cl.agg, &cl.global, t, &p.ucb, p.sync_slack)
            };
            let r = rewards.next(&sc.model, i, a);
            actions[i] = a;
            modes[i] = mode;
            round_rewards[i] = r;
            cl.n[a] += 1;
            cl.sums[a] += r;
            cl.logs[a].push(r);
            cl.local[a] = if burning {
                cl.sums[a] / cl.n[a] as f64
            } else {
                cl.logs[a].estimate(&p.mom, &mut scratch).unwrap_or(0.0)
            };
            if burning {
                // Until the learning period, the global estimate defaults to the local one.
                cl.global.clone_from(&cl.local);
                cl.agg.clone_from(&cl.n);
            }
            tally.record(t, i, a);
            pulls[a] += 1;
            if !burning {
                match mode {
                    HeterogMode::Ucb => {
                        summary.ucb_client_rounds += 1;
                        streak[i] = 0;
                    }
                    HeterogMode::Resync => {
                        summary.resync_client_rounds += 1;
                        streak[i] += 1;
                        longest_streak = longest_streak.max(streak[i]);
                    }
                }
            }
            archive.push(i, t, cl.publish());
        }
        acc.add_actions(&actions);

        proc.sample_into(t, &mut grng, &mut snap);
        if t == 1 {
            true_center = max_degree_client(&snap);
            hub = Some(HubTracker::new(m, true_center, p.large_hub_threshold()));
        }
        if let Some(h) = hub.as_mut() {
            h.observe(t, snap.neighbors(true_center));
        }
        let st = stamps.exchange(t, &snap);

        if burning {
            adjacency.update(&snap)?;
            for (a, b) in snap.edges() {
                direct[a * m + b] = Some(clients[b].local.clone());
                direct[b * m + a] = Some(clients[a].local.clone());
            }
            if t == lb {
                for (i, cl) in clients.iter_mut().enumerate() {
                    let view = adjacency.client_view(i);
                    let mut global = vec![0.0; k];
                    for j in 0..m {
                        let est = if j == i {
                            Some(&cl.local)
                        } else if view.contacted(j) {
                            direct[i * m + j].as_ref()
                        } else {
                            None
                        };
                        if let Some(est) = est {
                            for a in 0..k {
                                global[a] += est[a] / m as f64;
                            }
                        }
                    }
                    cl.global = global;
                    cl.agg.clone_from(&cl.n);
                    // MoM takes over from the running averages.
                    for a in 0..k {
                        cl.local[a] = cl.logs[a].estimate(&p.mom, &mut scratch).unwrap_or(0.0);
                    }
                }
            }
        } else {
            summary.staleness_max = summary.staleness_max.max(st.staleness_max);
            for (i, cl) in clients.iter_mut().enumerate() {
                let row = stamps.row(i);
                let lookup = |j: usize| match row[j] as u64 {
                    0 => None,
                    s => archive.get(j, s).cloned(),
                };
                summary.coverage_gaps += rule2_update(i, cl, snap.neighbors(i), lookup, m, &w);
            }
        }
        for j in 0..m {
            let oldest = stamps.column(j).min().unwrap_or(t);
            archive.prune_below(j, oldest.max(1));
        }

        if let Some(rec) = record.as_mut() {
            rec.snapshots.push(snap.clone());
            rec.actions.push(actions.clone());
            rec.rewards.push(round_rewards.clone());
            rec.modes.push(modes.clone());
            rec.global_est
                .push(clients.iter().flat_map(|c| c.global.clone()).collect());
            rec.local_counts
                .push(clients.iter().flat_map(|c| c.n.clone()).collect());
            rec.agg_counts
                .push(clients.iter().flat_map(|c| c.agg.clone()).collect());
        }
        let mode = if burning {
            Mode::Burnin
        } else if modes.contains(&HeterogMode::Resync) {
            Mode::Resync
        } else {
            Mode::Ucb
        };
        trace.rows.push(TraceRow {
            t,
            regret: acc.total(),
            staleness_max: st.staleness_max,
            hub_size: -1,
            mode,
            pulls: pulls.clone(),
        });
    }

    let hub = hub.expect("horizon is at least one round");
    summary.regret = acc.total();
    summary.hub_center = true_center;
    summary.hub_center_weight = proc.weights()[true_center];
    summary.persistent_hub_size = hub.persistent_size();
    summary.deterministic_core_size = deterministic_hub_core(&proc, true_center)?.len();
    summary.longest_resync_streak = longest_streak;
    if horizon > lb {
        summary.events.a2 = Some(summary.staleness_max as f64 <= p.staleness_bound());
    }
    tally.fill(&mut summary);
    Ok(HeterogRun {
        output: RunOutput { trace, summary },
        record,
        weights: w,
    })
}
