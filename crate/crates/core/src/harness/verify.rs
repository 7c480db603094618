//! Monte-Carlo checks of the graph properties and of the MoM deviation bound.

use serde::Serialize;

use crate::error::Result;
use crate::estimators::{median_of_means, mom_radius, MomConfig, UcbParams};
use crate::graph::{
    deterministic_hub_core, max_degree_client, CoverTime, EdgeSampling, GraphProcess, GraphSnapshot,
    HubTracker,
};
use crate::harness::kappa::cover_time_from_random_seed;
use crate::rng::{Purpose, RngStream};
use crate::sampling::{RewardModel, RewardStreams, WeightLaw};

/// Graph-only inputs of the property checks.
#[derive(Debug, Clone, Copy)]
pub struct GraphSetup {
    pub law: WeightLaw,
    pub sampling: EdgeSampling,
    pub clients: usize,
    pub seed: u64,
}

impl GraphSetup {
    pub fn process(&self, replication: u64) -> Result<GraphProcess> {
        let stream = RngStream::new(self.seed, replication, Purpose::Weights);
        Ok(GraphProcess::from_law(&self.law, self.clients, stream)?.with_sampling(self.sampling))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HubReplication {
    pub replication: u64,
    pub center: usize,
    pub center_weight: f64,
    pub persistent_size: usize,
    pub core_size: usize,
    pub core_inside: bool,
    pub sup_gap: u64,
}

/// Follow the hub of the first-round max-degree client for `horizon` rounds.
/// Round 1 is a full snapshot; later rounds only need the center's row.
pub fn track_hub(setup: &GraphSetup, replication: u64, horizon: u64, large: f64) -> Result<HubReplication> {
    let proc = setup.process(replication)?;
    let mut rng = RngStream::new(setup.seed, replication, Purpose::Graph).rng();
    let first: GraphSnapshot = proc.sample(1, &mut rng);
    let center = max_degree_client(&first);
    let mut tracker = HubTracker::new(proc.m(), center, large);
    tracker.observe(1, first.neighbors(center));
    let mut row = Vec::new();
    for t in 2..=horizon {
        proc.sample_row(center, &mut rng, &mut row);
        tracker.observe(t, &row);
    }
    let core = deterministic_hub_core(&proc, center)?;
    Ok(HubReplication {
        replication,
        center,
        center_weight: proc.weights()[center],
        persistent_size: tracker.persistent_size(),
        core_size: core.len(),
        core_inside: core.iter().all(|&j| tracker.contains_persistent(j)),
        sup_gap: tracker.sup_gap(),
    })
}

fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HubSizeReport {
    /// `M^{2 - alpha - zeta}`.
    pub threshold: f64,
    pub replications: u64,
    /// Share of replications whose persistent hub exceeds the threshold.
    pub pass_fraction: f64,
    pub median_persistent_size: f64,
    pub median_core_size: f64,
    /// Share of replications whose deterministic core lies inside the persistent hub.
    pub core_inside_fraction: f64,
    pub runs: Vec<HubReplication>,
}

pub fn verify_hub_size(setup: &GraphSetup, zeta: f64, runs: Vec<HubReplication>) -> HubSizeReport {
    let threshold = (setup.clients as f64).powf(2.0 - setup.law.alpha() - zeta);
    let n = runs.len() as f64;
    HubSizeReport {
        threshold,
        replications: runs.len() as u64,
        pass_fraction: runs
            .iter()
            .filter(|r| r.persistent_size as f64 > threshold)
            .count() as f64
            / n,
        median_persistent_size: median(runs.iter().map(|r| r.persistent_size as f64).collect()),
        median_core_size: median(runs.iter().map(|r| r.core_size as f64).collect()),
        core_inside_fraction: runs.iter().filter(|r| r.core_inside).count() as f64 / n,
        runs,
    }
}

/// `M^{1/alpha - zeta}`: hub size that makes a round count as large.
pub fn large_hub_threshold(clients: usize, alpha: f64, zeta: f64) -> f64 {
    (clients as f64).powf(1.0 / alpha - zeta)
}

/// `M^{1/alpha - zeta/2}`: center weight that defines the conditioning event.
pub fn center_weight_threshold(clients: usize, alpha: f64, zeta: f64) -> f64 {
    (clients as f64).powf(1.0 / alpha - zeta / 2.0)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HubRecurrenceReport {
    pub large_hub_threshold: f64,
    pub center_weight_threshold: f64,
    /// `log T`.
    pub gap_bound: f64,
    pub replications: u64,
    /// Replications where the center weight reached its threshold.
    pub conditioned: u64,
    pub violations: u64,
    /// `violations / conditioned`, `None` when nothing qualified.
    pub violation_frequency: Option<f64>,
    pub runs: Vec<HubReplication>,
}

pub fn verify_hub_recurrence(
    setup: &GraphSetup,
    zeta: f64,
    horizon: u64,
    runs: Vec<HubReplication>,
) -> HubRecurrenceReport {
    let alpha = setup.law.alpha();
    let wt = center_weight_threshold(setup.clients, alpha, zeta);
    let bound = (horizon as f64).ln();
    let cond: Vec<&HubReplication> = runs.iter().filter(|r| r.center_weight >= wt).collect();
    let violations = cond.iter().filter(|r| r.sup_gap as f64 > bound).count() as u64;
    HubRecurrenceReport {
        large_hub_threshold: large_hub_threshold(setup.clients, alpha, zeta),
        center_weight_threshold: wt,
        gap_bound: bound,
        replications: runs.len() as u64,
        conditioned: cond.len() as u64,
        violations,
        violation_frequency: (!cond.is_empty()).then(|| violations as f64 / cond.len() as f64),
        runs,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BroadcastReport {
    pub kappa: f64,
    pub factor: f64,
    /// `factor * kappa * (log M)^2`.
    pub bound_rounds: f64,
    pub replications: u64,
    pub within_bound: u64,
    pub timeouts: u64,
    pub fraction_within: f64,
    pub cover_times: Vec<Option<u64>>,
}

pub fn broadcast_cover_time_for(setup: &GraphSetup, replication: u64, max_rounds: u64) -> Result<CoverTime> {
    let proc = setup.process(replication)?;
    cover_time_from_random_seed(&proc, setup.seed, replication, max_rounds)
}

pub fn verify_broadcast(setup: &GraphSetup, kappa: f64, factor: f64, times: &[CoverTime]) -> BroadcastReport {
    let log_m = (setup.clients as f64).ln();
    let bound = factor * kappa * log_m * log_m;
    let within = times
        .iter()
        .filter(|t| matches!(t, CoverTime::Covered(r) if *r as f64 <= bound))
        .count() as u64;
    let timeouts = times.iter().filter(|t| **t == CoverTime::Timeout).count() as u64;
    BroadcastReport {
        kappa,
        factor,
        bound_rounds: bound,
        replications: times.len() as u64,
        within_bound: within,
        timeouts,
        fraction_within: within as f64 / times.len() as f64,
        cover_times: times
            .iter()
            .map(|t| match t {
                CoverTime::Covered(r) => Some(*r),
                CoverTime::Timeout => None,
            })
            .collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomReport {
    pub samples: u64,
    pub batches: usize,
    pub delta: f64,
    pub radius: f64,
    pub trials: u64,
    /// Share of trials with `|MoM - mu| <= radius`.
    pub coverage: f64,
    /// `1 - 2 delta`.
    pub nominal: f64,
}

/// MoM trials on draws of arm 0 of client 0 of `model`. Trial `r` uses the
/// reward stream of replication `r`.
pub fn verify_mom(
    model: &RewardModel,
    seed: u64,
    samples: u64,
    delta: f64,
    trial_range: std::ops::Range<u64>,
) -> Result<(usize, f64, Vec<bool>)> {
    let cfg = MomConfig::from_confidence(delta)?;
    let ucb = UcbParams::new(model.rho(), model.epsilon())?;
    let radius = mom_radius(samples, delta, &ucb)?;
    let mu = model.mean(0, 0);
    let mut buf = Vec::with_capacity(samples as usize);
    let hits = trial_range
        .map(|r| {
            let mut streams = RewardStreams::new(seed, r, 1, 1);
            buf.clear();
            buf.extend((0..samples).map(|_| streams.next(model, 0, 0)));
            median_of_means(&buf, &cfg).map(|est| (est - mu).abs() <= radius)
        })
        .collect::<Result<Vec<bool>>>()?;
    Ok((cfg.effective_batches(samples as usize), radius, hits))
}

pub fn mom_report(samples: u64, delta: f64, batches: usize, radius: f64, hits: &[bool]) -> MomReport {
    MomReport {
        samples,
        batches,
        delta,
        radius,
        trials: hits.len() as u64,
        coverage: hits.iter().filter(|&&h| h).count() as f64 / hits.len() as f64,
        nominal: 1.0 - 2.0 * delta,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::RewardKind;

    #[test]
    fn median_even_and_odd() {
        assert_eq!(median(vec![3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(vec![4.0, 1.0, 2.0, 3.0]), 2.5);
        assert!(median(vec![]).is_nan());
    }

    #[test]
    fn zero_threshold_means_no_gap() {
        let setup = GraphSetup {
            law: WeightLaw::new(1.5, 1.0).unwrap(),
            sampling: EdgeSampling::Auto,
            clients: 200,
            seed: 3,
        };
        // Threshold M^0 = 1 is strict, so use a negative one to make every round large.
        let run = track_hub(&setup, 0, 50, -1.0).unwrap();
        assert_eq!(run.sup_gap, 0);
        assert!(run.core_inside);
    }

    #[test]
    fn hub_reports() {
        let setup = GraphSetup {
            law: WeightLaw::new(1.5, 1.0).unwrap(),
            sampling: EdgeSampling::Auto,
            clients: 300,
            seed: 9,
        };
        let runs: Vec<_> = (0..6).map(|r| track_hub(&setup, r, 40, 1e9).unwrap()).collect();
        // Nothing is large, so the gap grows with every round.
        assert!(runs.iter().all(|r| r.sup_gap == 40));
        let rep = verify_hub_size(&setup, 0.1, runs.clone());
        assert_eq!(rep.replications, 6);
        assert_eq!(rep.core_inside_fraction, 1.0);
        assert_eq!(rep.threshold, 300f64.powf(0.4));
        let rec = verify_hub_recurrence(&setup, 0.1, 40, runs);
        assert_eq!(rec.violations, rec.conditioned);
    }

    #[test]
    fn broadcast_report_counts() {
        let setup = GraphSetup {
            law: WeightLaw::new(1.5, 1.0).unwrap(),
            sampling: EdgeSampling::Auto,
            clients: 10,
            seed: 0,
        };
        let l = 10f64.ln();
        let times = [CoverTime::Covered(1), CoverTime::Covered(100), CoverTime::Timeout];
        let rep = verify_broadcast(&setup, 1.0 / (l * l), 2.0, &times);
        assert_eq!(rep.bound_rounds, 2.0 * (1.0 / (l * l)) * l * l);
        assert_eq!((rep.within_bound, rep.timeouts), (1, 1));
        assert_eq!(rep.cover_times, vec![Some(1), Some(100), None]);
    }

    #[test]
    fn mom_coverage_gaussian() {
        let model = RewardModel::new(RewardKind::Gaussian, vec![vec![0.3]], 1.0, 1.0, None, None).unwrap();
        let (batches, radius, hits) = verify_mom(&model, 1, 256, 0.05, 0..200).unwrap();
        assert_eq!(
            batches,
            MomConfig::from_confidence(0.05).unwrap().effective_batches(256)
        );
        assert!(radius > 0.0);
        assert!(hits.iter().filter(|&&h| h).count() >= 190);
    }
}
