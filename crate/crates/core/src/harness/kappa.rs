//! Calibration of the broadcast constant `kappa`.
//!
//! `kappa` scales every delay-dependent count (identification rounds,
//! burn-in, resync slack). It is fixed in the config, read from an artifact
//! written by `calibrate-kappa`, or estimated on the fly, in that order.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{config_err, Error, Result};
use crate::graph::{broadcast_cover_time, CoverTime, EdgeSampling, GraphProcess};
use crate::harness::config::ExperimentConfig;
use crate::rng::{Purpose, RngStream};
use crate::sampling::WeightLaw;
use rand::Rng;

/// Cover times of single-seed broadcasts, one per replication. Replication
/// `r` draws fresh weights, a fresh graph sequence and a uniform seed node.
pub fn sample_cover_times(
    law: &WeightLaw,
    sampling: EdgeSampling,
    clients: usize,
    seed: u64,
    replications: u64,
    max_rounds: u64,
) -> Result<Vec<CoverTime>> {
    (0..replications)
        .map(|r| {
            let stream = RngStream::new(seed, r, Purpose::Weights);
            let proc = GraphProcess::from_law(law, clients, stream)?.with_sampling(sampling);
            cover_time_from_random_seed(&proc, seed, r, max_rounds)
        })
        .collect()
}

pub(crate) fn cover_time_from_random_seed(
    proc: &GraphProcess,
    seed: u64,
    replication: u64,
    max_rounds: u64,
) -> Result<CoverTime> {
    let start = RngStream::new(seed, replication, Purpose::BroadcastSeed)
        .rng()
        .random_range(0..proc.m());
    let mut rng = RngStream::new(seed, replication, Purpose::Graph).rng();
    broadcast_cover_time(proc, &[start], &mut rng, max_rounds)
}

/// Stored result of a calibration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KappaEstimate {
    pub kappa: f64,
    pub clients: usize,
    pub replications: u64,
    /// Probability level of the cover-time quantile, `1 - 1/M`.
    pub level: f64,
    pub quantile_rounds: u64,
    pub timeouts: u64,
}

/// `kappa = q / (log M)^2`, where `q` is the empirical `(1 - 1/M)`-quantile
/// of the cover times (inverse-CDF convention, timeouts ranked last).
pub fn kappa_from_cover_times(
    times: &[CoverTime],
    clients: usize,
    max_timeout_share: f64,
) -> Result<KappaEstimate> {
    if clients < 2 {
        return Err(config_err("kappa needs at least two clients"));
    }
    if times.is_empty() {
        return Err(Error::Calibration("no broadcasts were run".into()));
    }
    let n = times.len();
    let mut covered: Vec<u64> = times
        .iter()
        .filter_map(|t| match t {
            CoverTime::Covered(r) => Some(*r),
            CoverTime::Timeout => None,
        })
        .collect();
    let timeouts = (n - covered.len()) as u64;
    if timeouts as f64 > max_timeout_share * n as f64 {
        return Err(Error::Calibration(format!(
            "{timeouts} of {n} broadcasts timed out (allowed share {max_timeout_share})"
        )));
    }
    covered.sort_unstable();
    let level = 1.0 - 1.0 / clients as f64;
    let idx = ((level * n as f64).ceil() as usize).clamp(1, n) - 1;
    let q = *covered
        .get(idx)
        .ok_or_else(|| Error::Calibration(format!("the {level}-quantile of the cover times is a timeout")))?;
    let log_m = (clients as f64).ln();
    Ok(KappaEstimate {
        kappa: q as f64 / (log_m * log_m),
        clients,
        replications: n as u64,
        level,
        quantile_rounds: q,
        timeouts,
    })
}

/// Calibrate `kappa` at the config's size.
pub fn estimate_kappa(cfg: &ExperimentConfig, replications: u64) -> Result<KappaEstimate> {
    if cfg.clients < 10 {
        return Err(config_err(format!(
            "kappa can only be estimated with at least 10 clients (got {}); set `kappa` in the config",
            cfg.clients
        )));
    }
    let times = sample_cover_times(
        &cfg.law()?,
        cfg.edge_sampling,
        cfg.clients,
        cfg.seed,
        replications,
        cfg.broadcast.max_rounds,
    )?;
    kappa_from_cover_times(&times, cfg.clients, cfg.broadcast.max_timeout_share)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "source", rename_all = "kebab-case")]
pub enum KappaSource {
    Config,
    File { path: PathBuf },
    Estimated { estimate: KappaEstimate },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KappaChoice {
    pub value: f64,
    #[serde(flatten)]
    pub source: KappaSource,
}

pub fn read_kappa_file(path: &Path) -> Result<KappaEstimate> {
    let est: KappaEstimate = serde_json::from_reader(std::fs::File::open(path)?)?;
    if !(est.kappa > 0.0 && est.kappa.is_finite()) {
        return Err(config_err(format!(
            "{} holds a non-positive kappa",
            path.display()
        )));
    }
    Ok(est)
}

pub fn write_kappa_file(path: &Path, est: &KappaEstimate) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    let mut text = serde_json::to_string_pretty(est)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

/// Config value, else an existing artifact file, else a fresh estimate.
pub fn resolve_kappa(cfg: &ExperimentConfig) -> Result<KappaChoice> {
    if let Some(value) = cfg.kappa {
        return Ok(KappaChoice {
            value,
            source: KappaSource::Config,
        });
    }
    if let Some(path) = cfg.kappa_file.as_ref().filter(|p| p.exists()) {
        let est = read_kappa_file(path)?;
        return Ok(KappaChoice {
            value: est.kappa,
            source: KappaSource::File { path: path.clone() },
        });
    }
    let estimate = estimate_kappa(cfg, cfg.kappa_replications)?;
    Ok(KappaChoice {
        value: estimate.kappa,
        source: KappaSource::Estimated { estimate },
    })
}
