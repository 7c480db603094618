//! Experiment dispatch, replication pool and output files.
//!
//! Replications run on a private thread pool. Results are collected in
//! replication order and written by one thread, so the files depend only on
//! the config and the seed.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::comms::{MessageTraceWriter, StampMatrix};
use crate::error::{config_err, Result};
use crate::graph::{EdgeCsvWriter, GraphSnapshot};
use crate::harness::baseline::baseline_no_comm;
use crate::harness::config::{ExperimentConfig, ExperimentKind};
use crate::harness::kappa::{estimate_kappa, resolve_kappa, write_kappa_file, KappaChoice};
use crate::harness::regret::{write_traces_csv, RegretTrace};
use crate::harness::summary::{event_frequencies, RegretStats, ReplicationSummary, RunOutput};
use crate::harness::verify::{
    broadcast_cover_time_for, large_hub_threshold, mom_report, track_hub, verify_broadcast,
    verify_hub_recurrence, verify_hub_size, verify_mom, GraphSetup,
};
use crate::heterogeneous::{run_heterogeneous, HeterogOptions};
use crate::homogeneous::{run_homogeneous, RunOptions};
use crate::params::AlgoParams;
use crate::scenario::Scenario;

pub const TRACE_FILE: &str = "trace.csv";
pub const BASELINE_TRACE_FILE: &str = "baseline_trace.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const EDGES_FILE: &str = "edges.csv";
pub const MESSAGES_FILE: &str = "messages.csv";
pub const KAPPA_FILE: &str = "kappa.json";

/// What an experiment wrote.
#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub summary: Value,
    pub files: Vec<PathBuf>,
}

/// Worker count: explicit value, else every available core.
pub fn default_threads() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn pool(threads: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| config_err(format!("cannot start {threads} worker threads: {e}")))
}

/// Run `f` for replications `0..n` on the pool, results in replication order.
fn replicate<T: Send>(
    pool: &rayon::ThreadPool,
    n: u64,
    f: impl Fn(u64) -> Result<T> + Sync + Send,
) -> Result<Vec<T>> {
    pool.install(|| (0..n).into_par_iter().map(f).collect())
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

fn write_traces(path: &Path, arms: usize, traces: &[RegretTrace]) -> Result<()> {
    write_traces_csv(BufWriter::new(File::create(path)?), arms, traces)
}

pub fn run_experiment(cfg: &ExperimentConfig, threads: usize) -> Result<ExperimentOutcome> {
    cfg.validate()?;
    std::fs::create_dir_all(&cfg.output)?;
    let pool = pool(threads)?;
    let mut files = Vec::new();
    let body = match cfg.experiment {
        ExperimentKind::HomogRegret | ExperimentKind::HeterogRegret => {
            regret_experiment(cfg, &pool, &mut files)?
        }
        ExperimentKind::Mom => mom_experiment(cfg, &pool)?,
        ExperimentKind::HubSize | ExperimentKind::HubRecurrence => hub_experiment(cfg, &pool)?,
        ExperimentKind::BroadcastDelay => broadcast_experiment(cfg, &pool)?,
        ExperimentKind::CalibrateKappa => calibrate_experiment(cfg, &mut files)?,
    };
    let mut summary = json!({
        "experiment": cfg.experiment.name(),
        "config": cfg,
        "seed": cfg.seed,
    });
    if let (Value::Object(dst), Value::Object(src)) = (&mut summary, body) {
        dst.extend(src);
    }
    let path = cfg.output.join(SUMMARY_FILE);
    write_json(&path, &summary)?;
    files.push(path);
    Ok(ExperimentOutcome { summary, files })
}

/// Estimate `kappa` at the config's size and store it as an artifact.
pub fn calibrate_kappa(cfg: &ExperimentConfig) -> Result<(crate::harness::kappa::KappaEstimate, PathBuf)> {
    let est = estimate_kappa(cfg, cfg.replications)?;
    let path = cfg
        .kappa_file
        .clone()
        .unwrap_or_else(|| cfg.output.join(KAPPA_FILE));
    write_kappa_file(&path, &est)?;
    Ok((est, path))
}

fn calibrate_experiment(cfg: &ExperimentConfig, files: &mut Vec<PathBuf>) -> Result<Value> {
    let (est, path) = calibrate_kappa(cfg)?;
    files.push(path.clone());
    Ok(json!({ "kappa_used": est.kappa, "kappa": est, "kappa_file": path }))
}

fn algorithm_run(sc: &Scenario, p: &AlgoParams, kind: ExperimentKind, rep: u64) -> Result<RunOutput> {
    match kind {
        ExperimentKind::HomogRegret => Ok(run_homogeneous(sc, p, rep, RunOptions::default())?.output),
        _ => Ok(run_heterogeneous(sc, p, rep, HeterogOptions::default())?.output),
    }
}

/// Graphs as the algorithm exchanged over them in replication 0 (after gating).
fn effective_graphs(sc: &Scenario, p: &AlgoParams, kind: ExperimentKind) -> Result<Vec<GraphSnapshot>> {
    Ok(match kind {
        ExperimentKind::HomogRegret => run_homogeneous(sc, p, 0, RunOptions { record: true })?
            .record
            .map(|r| r.effective)
            .unwrap_or_default(),
        _ => run_heterogeneous(sc, p, 0, HeterogOptions { record: true })?
            .record
            .map(|r| r.snapshots)
            .unwrap_or_default(),
    })
}

#[derive(Serialize)]
struct SideSummary<'a> {
    regret: RegretStats,
    replications: &'a [ReplicationSummary],
}

fn regret_experiment(
    cfg: &ExperimentConfig,
    pool: &rayon::ThreadPool,
    files: &mut Vec<PathBuf>,
) -> Result<Value> {
    let sc = cfg.scenario()?;
    let kappa: KappaChoice = resolve_kappa(cfg)?;
    let p = cfg.algo_params(kappa.value)?;
    let kind = cfg.experiment;

    let runs = replicate(pool, cfg.replications, |rep| {
        let alg = algorithm_run(&sc, &p, kind, rep)?;
        let base = if cfg.baseline {
            Some(baseline_no_comm(&sc, &p, rep)?)
        } else {
            None
        };
        Ok((alg, base))
    })?;

    let traces: Vec<RegretTrace> = runs.iter().map(|(a, _)| a.trace.clone()).collect();
    let path = cfg.output.join(TRACE_FILE);
    write_traces(&path, cfg.arms, &traces)?;
    files.push(path);
    let summaries: Vec<ReplicationSummary> = runs.iter().map(|(a, _)| a.summary.clone()).collect();

    let baseline = if cfg.baseline {
        let base: Vec<&RunOutput> = runs.iter().filter_map(|(_, b)| b.as_ref()).collect();
        let traces: Vec<RegretTrace> = base.iter().map(|b| b.trace.clone()).collect();
        let path = cfg.output.join(BASELINE_TRACE_FILE);
        write_traces(&path, cfg.arms, &traces)?;
        files.push(path);
        let sums: Vec<ReplicationSummary> = base.iter().map(|b| b.summary.clone()).collect();
        Some(serde_json::to_value(SideSummary {
            regret: RegretStats::from_values(sums.iter().map(|s| s.regret).collect()),
            replications: &sums,
        })?)
    } else {
        None
    };

    if cfg.write_edges {
        let proc = sc.graph(0)?;
        let mut rng = sc.graph_rng(0);
        let path = cfg.output.join(EDGES_FILE);
        let mut w = EdgeCsvWriter::new(BufWriter::new(File::create(&path)?))?;
        let mut snap = GraphSnapshot::empty(0, cfg.clients);
        for t in 1..=cfg.horizon {
            proc.sample_into(t, &mut rng, &mut snap);
            w.write(&snap)?;
        }
        w.finish()?;
        files.push(path);
    }
    if cfg.write_messages {
        let path = cfg.output.join(MESSAGES_FILE);
        let mut w = MessageTraceWriter::new(BufWriter::new(File::create(&path)?))?;
        let mut stamps = StampMatrix::new(cfg.clients);
        let mut failure = None;
        for snap in effective_graphs(&sc, &p, kind)? {
            let t = snap.round();
            stamps.exchange_traced(t, &snap, |from, to, origin, stamp| {
                if failure.is_none() {
                    failure = w.row(t, from, to, origin, stamp).err();
                }
            });
            if let Some(e) = failure.take() {
                return Err(e);
            }
        }
        w.finish()?;
        files.push(path);
    }

    let mut out = json!({
        "kappa_used": kappa.value,
        "kappa": kappa,
        "params": p,
        "events": event_frequencies(&summaries),
        "regret": RegretStats::from_values(summaries.iter().map(|s| s.regret).collect()),
        "replications": summaries,
    });
    if let Some(b) = baseline {
        out["baseline"] = b;
    }
    Ok(out)
}

const MOM_CHUNK: u64 = 256;

fn mom_experiment(cfg: &ExperimentConfig, pool: &rayon::ThreadPool) -> Result<Value> {
    let model = crate::sampling::RewardModel::new(
        cfg.reward,
        vec![vec![cfg.mom.mean]],
        cfg.epsilon,
        cfg.rho,
        cfg.reward_scale,
        cfg.reward_dof,
    )?;
    let m = &cfg.mom;
    let chunks = m.trials.div_ceil(MOM_CHUNK);
    let parts = replicate(pool, chunks, |c| {
        let range = c * MOM_CHUNK..((c + 1) * MOM_CHUNK).min(m.trials);
        verify_mom(&model, cfg.seed, m.samples, m.delta, range)
    })?;
    let (batches, radius) = parts.first().map_or((0, 0.0), |p| (p.0, p.1));
    let hits: Vec<bool> = parts.into_iter().flat_map(|p| p.2).collect();
    Ok(json!({ "report": mom_report(m.samples, m.delta, batches, radius, &hits) }))
}

fn graph_setup(cfg: &ExperimentConfig) -> Result<GraphSetup> {
    Ok(GraphSetup {
        law: cfg.law()?,
        sampling: cfg.edge_sampling,
        clients: cfg.clients,
        seed: cfg.seed,
    })
}

fn hub_experiment(cfg: &ExperimentConfig, pool: &rayon::ThreadPool) -> Result<Value> {
    let setup = graph_setup(cfg)?;
    let large = large_hub_threshold(cfg.clients, cfg.alpha, cfg.zeta);
    let runs = replicate(pool, cfg.replications, |rep| {
        track_hub(&setup, rep, cfg.horizon, large)
    })?;
    Ok(match cfg.experiment {
        ExperimentKind::HubSize => json!({ "report": verify_hub_size(&setup, cfg.zeta, runs) }),
        _ => json!({ "report": verify_hub_recurrence(&setup, cfg.zeta, cfg.horizon, runs) }),
    })
}

fn broadcast_experiment(cfg: &ExperimentConfig, pool: &rayon::ThreadPool) -> Result<Value> {
    let setup = graph_setup(cfg)?;
    let kappa = resolve_kappa(cfg)?;
    let times = replicate(pool, cfg.replications, |rep| {
        broadcast_cover_time_for(&setup, rep, cfg.broadcast.max_rounds)
    })?;
    let report = verify_broadcast(&setup, kappa.value, cfg.broadcast.factor, &times);
    Ok(json!({ "kappa_used": kappa.value, "kappa": kappa, "report": report }))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn smoke(kind: &str, dir: &Path) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::from_toml_str(&format!(
            "experiment = \"{kind}\"\nclients = 12\narms = 2\nhorizon = 60\nreplications = 2\nkappa = 0.1\n\
             kappa_replications = 20\n[mom]\ntrials = 300\nsamples = 64"
        ))
        .unwrap();
        cfg.output = dir.to_path_buf();
        cfg
    }

    #[test]
    fn every_kind_runs() {
        for kind in ExperimentKind::ALL {
            let dir = tempfile::tempdir().unwrap();
            let mut cfg = smoke(kind.name(), dir.path());
            if kind == ExperimentKind::HubSize {
                cfg.alpha = 1.3;
            }
            let out = run_experiment(&cfg, 1).unwrap();
            assert_eq!(out.summary["experiment"], kind.name());
            assert!(dir.path().join(SUMMARY_FILE).exists(), "{kind}");
        }
    }

    #[test]
    fn regret_outputs_and_optional_files() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = smoke("homog-regret", dir.path());
        cfg.write_edges = true;
        cfg.write_messages = true;
        let out = run_experiment(&cfg, 2).unwrap();
        for f in [
            TRACE_FILE,
            BASELINE_TRACE_FILE,
            SUMMARY_FILE,
            EDGES_FILE,
            MESSAGES_FILE,
        ] {
            assert!(dir.path().join(f).exists(), "{f}");
        }
        assert_eq!(
            out.summary["regret"]["per_replication"].as_array().unwrap().len(),
            2
        );
        assert_eq!(out.summary["kappa_used"], 0.1);
        let traces =
            crate::harness::regret::read_traces_csv(File::open(dir.path().join(TRACE_FILE)).unwrap())
                .unwrap();
        assert_eq!(traces.len(), 2);
        assert!(traces.iter().all(|t| t.rows.len() == 60));
    }
}
