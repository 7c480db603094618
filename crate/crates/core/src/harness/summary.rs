//! Per-replication outcomes and their aggregate.

use serde::Serialize;

use crate::harness::regret::{GlobalMeans, RegretTrace};

/// High-probability events of one replication. `None` when the event is not
/// defined for the algorithm that ran.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Events {
    /// Persistent hub larger than `M^{2-alpha-zeta}`.
    pub a1: Option<bool>,
    /// Staleness never above `kappa (log M)^2 log T` once learning starts.
    pub a2: Option<bool>,
    /// Every client elected the true hub center.
    pub a3: Option<bool>,
    /// Hub center weight at least `M^{1/alpha - zeta/2}`.
    pub a_alpha_zeta: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicationSummary {
    pub replication: u64,
    pub regret: f64,
    pub events: Events,
    pub hub_center: usize,
    pub hub_center_weight: f64,
    pub persistent_hub_size: usize,
    pub deterministic_core_size: usize,
    /// Worst staleness over the learning rounds.
    pub staleness_max: u64,
    /// Client-rounds spent in UCB mode and in resync mode.
    pub ucb_client_rounds: u64,
    pub resync_client_rounds: u64,
    /// Longest run of consecutive resync rounds of any client.
    pub longest_resync_streak: u64,
    /// Relayed rewards that reached a center more than once and were dropped.
    pub duplicates_suppressed: u64,
    /// Rounds in which gating paused the hub's links.
    pub gated_rounds: u64,
    /// Aggregation terms with no information from their origin.
    pub coverage_gaps: u64,
    pub p_prime_clamped: bool,
    /// Fraction of each client's final-10% pulls that went to the global best arm.
    pub tail_best_fraction: Vec<f64>,
    /// Pulls of arms other than the global best, averaged over clients.
    pub suboptimal_pulls_per_client: f64,
}

impl ReplicationSummary {
    pub fn new(replication: u64) -> Self {
        Self {
            replication,
            regret: 0.0,
            events: Events::default(),
            hub_center: 0,
            hub_center_weight: 0.0,
            persistent_hub_size: 0,
            deterministic_core_size: 0,
            staleness_max: 0,
            ucb_client_rounds: 0,
            resync_client_rounds: 0,
            longest_resync_streak: 0,
            duplicates_suppressed: 0,
            gated_rounds: 0,
            coverage_gaps: 0,
            p_prime_clamped: false,
            tail_best_fraction: Vec::new(),
            suboptimal_pulls_per_client: 0.0,
        }
    }
}

/// First round of the final 10% of a horizon.
pub fn tail_start(horizon: u64) -> u64 {
    horizon - (horizon / 10).max(1) + 1
}

/// Per-client pull tallies needed by the summary.
#[derive(Debug, Clone)]
pub struct PullTally {
    arms: usize,
    tail_from: u64,
    best: usize,
    counts: Vec<u64>,
    tail_best: Vec<u64>,
    tail_total: Vec<u64>,
}

impl PullTally {
    pub fn new(clients: usize, arms: usize, horizon: u64, gm: &GlobalMeans) -> Self {
        Self {
            arms,
            tail_from: tail_start(horizon),
            best: gm.best,
            counts: vec![0; clients * arms],
            tail_best: vec![0; clients],
            tail_total: vec![0; clients],
        }
    }

    pub fn record(&mut self, t: u64, client: usize, arm: usize) {
        self.counts[client * self.arms + arm] += 1;
        if t >= self.tail_from {
            self.tail_total[client] += 1;
            if arm == self.best {
                self.tail_best[client] += 1;
            }
        }
    }

    pub fn fill(&self, s: &mut ReplicationSummary) {
        let clients = self.tail_total.len();
        s.tail_best_fraction = (0..clients)
            .map(|m| {
                if self.tail_total[m] == 0 {
                    0.0
                } else {
                    self.tail_best[m] as f64 / self.tail_total[m] as f64
                }
            })
            .collect();
        let sub: u64 = (0..clients)
            .flat_map(|m| (0..self.arms).map(move |i| (m, i)))
            .filter(|&(_, i)| i != self.best)
            .map(|(m, i)| self.counts[m * self.arms + i])
            .sum();
        s.suboptimal_pulls_per_client = sub as f64 / clients as f64;
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct EventFrequencies {
    #[serde(rename = "A1")]
    pub a1: Option<f64>,
    #[serde(rename = "A2")]
    pub a2: Option<f64>,
    #[serde(rename = "A3")]
    pub a3: Option<f64>,
    #[serde(rename = "A_alpha_zeta")]
    pub a_alpha_zeta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegretStats {
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
    pub per_replication: Vec<f64>,
}

impl RegretStats {
    pub fn from_values(values: Vec<f64>) -> Self {
        let n = values.len();
        if n == 0 {
            return Self {
                mean: 0.0,
                std: 0.0,
                min: 0.0,
                max: 0.0,
                per_replication: values,
            };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let var = if n > 1 {
            values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64
        } else {
            0.0
        };
        Self {
            mean,
            std: var.sqrt(),
            min: values.iter().copied().fold(f64::INFINITY, f64::min),
            max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            per_replication: values,
        }
    }
}

fn frequency(values: impl Iterator<Item = Option<bool>>) -> Option<f64> {
    let (mut hits, mut n) = (0usize, 0usize);
    for v in values.flatten() {
        n += 1;
        hits += v as usize;
    }
    (n > 0).then(|| hits as f64 / n as f64)
}

pub fn event_frequencies(runs: &[ReplicationSummary]) -> EventFrequencies {
    EventFrequencies {
        a1: frequency(runs.iter().map(|r| r.events.a1)),
        a2: frequency(runs.iter().map(|r| r.events.a2)),
        a3: frequency(runs.iter().map(|r| r.events.a3)),
        a_alpha_zeta: frequency(runs.iter().map(|r| r.events.a_alpha_zeta)),
    }
}

/// The output of one replication of a regret experiment.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub trace: RegretTrace,
    pub summary: ReplicationSummary,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::regret::compute_global_means;

    #[test]
    fn stats_and_frequencies() {
        let s = RegretStats::from_values(vec![1.0, 2.0, 3.0]);
        assert_eq!(s.mean, 2.0);
        assert_eq!(s.std, 1.0);
        assert_eq!((s.min, s.max), (1.0, 3.0));
        let mut a = ReplicationSummary::new(0);
        a.events.a1 = Some(true);
        let mut b = ReplicationSummary::new(1);
        b.events.a1 = Some(false);
        let f = event_frequencies(&[a, b]);
        assert_eq!(f.a1, Some(0.5));
        assert_eq!(f.a3, None);
    }

    #[test]
    fn tally() {
        let gm = compute_global_means(&[vec![0.1, 0.9]]).unwrap();
        let mut t = PullTally::new(2, 2, 20, &gm);
        assert_eq!(tail_start(20), 19);
        for r in 1..=20 {
            t.record(r, 0, 1);
            t.record(r, 1, if r == 20 { 0 } else { 1 });
        }
        let mut s = ReplicationSummary::new(0);
        t.fill(&mut s);
        assert_eq!(s.tail_best_fraction, vec![1.0, 0.5]);
        assert_eq!(s.suboptimal_pulls_per_client, 0.5);
    }
}
