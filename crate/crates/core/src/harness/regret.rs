//! Pseudo-regret accounting and the per-round trace.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{usage_err, Result};

/// Across-client average means, the global best arm and the gaps.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GlobalMeans {
    pub mu: Vec<f64>,
    pub best: usize,
    pub gaps: Vec<f64>,
}

impl GlobalMeans {
    pub fn max_gap(&self) -> f64 {
        self.gaps.iter().copied().fold(0.0, f64::max)
    }
}

/// `mu_i = (1/M) sum_m mu_i^m`, `i* = argmax` (smallest on ties), `gap_i = mu_{i*} - mu_i`.
pub fn compute_global_means(means: &[Vec<f64>]) -> Result<GlobalMeans> {
    let k = means.first().map_or(0, Vec::len);
    if k == 0 || means.iter().any(|row| row.len() != k) {
        return Err(usage_err("means must be a non-empty rectangular matrix"));
    }
    let m = means.len() as f64;
    let mu: Vec<f64> = (0..k)
        .map(|i| means.iter().map(|row| row[i]).sum::<f64>() / m)
        .collect();
    let mut best = 0;
    for i in 1..k {
        if mu[i] > mu[best] {
            best = i;
        }
    }
    let gaps = mu.iter().map(|&x| mu[best] - x).collect();
    Ok(GlobalMeans { mu, best, gaps })
}

/// Running `R_t`. Each round adds `(sum_m gap[a_m]) / M`, summed in client
/// order, so any replay of the same actions reproduces the same bits.
#[derive(Debug, Clone)]
pub struct RegretAccumulator {
    gaps: Vec<f64>,
    clients: usize,
    total: f64,
}

impl RegretAccumulator {
    pub fn new(gm: &GlobalMeans, clients: usize) -> Self {
        Self {
            gaps: gm.gaps.clone(),
            clients,
            total: 0.0,
        }
    }

    /// Round in which every client pulls an arm.
    pub fn add_actions(&mut self, actions: &[usize]) -> f64 {
        let mut s = 0.0;
        for &a in actions {
            s += self.gaps[a];
        }
        self.total += s / self.clients as f64;
        self.total
    }

    /// Round charged at the worst gap (no pulls happen).
    pub fn add_worst(&mut self) -> f64 {
        self.total += self.gaps.iter().copied().fold(0.0, f64::max);
        self.total
    }

    pub fn total(&self) -> f64 {
        self.total
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Ucb,
    Resync,
    Idphase,
    Burnin,
}

impl Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::Ucb => "ucb",
            Mode::Resync => "resync",
            Mode::Idphase => "idphase",
            Mode::Burnin => "burnin",
        }
    }

    fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "ucb" => Mode::Ucb,
            "resync" => Mode::Resync,
            "idphase" => Mode::Idphase,
            "burnin" => Mode::Burnin,
            other => return Err(usage_err(format!("unknown mode {other:?}"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub t: u64,
    pub regret: f64,
    pub staleness_max: u64,
    /// `-1` when the run has no hub.
    pub hub_size: i64,
    pub mode: Mode,
    /// Cumulative pulls of each arm summed over clients.
    pub pulls: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegretTrace {
    pub replication: u64,
    pub arms: usize,
    pub rows: Vec<TraceRow>,
}

impl RegretTrace {
    pub fn new(replication: u64, arms: usize) -> Self {
        Self {
            replication,
            arms,
            rows: Vec::new(),
        }
    }

    pub fn final_regret(&self) -> f64 {
        self.rows.last().map_or(0.0, |r| r.regret)
    }
}

fn header(arms: usize) -> Vec<String> {
    let mut h: Vec<String> = ["replication", "t", "regret", "staleness_max", "hub_size", "mode"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    h.extend((0..arms).map(|i| format!("pulls_arm_{i}")));
    h
}

/// Write traces (all with the same arm count) as one CSV table.
pub fn write_traces_csv<W: Write>(writer: W, arms: usize, traces: &[RegretTrace]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(header(arms))?;
    let mut rec: Vec<String> = Vec::with_capacity(6 + arms);
    for tr in traces {
        if tr.arms != arms {
            return Err(usage_err("traces disagree on the number of arms"));
        }
        for row in &tr.rows {
            rec.clear();
            rec.push(tr.replication.to_string());
            rec.push(row.t.to_string());
            // Shortest representation that round-trips exactly.
            rec.push(format!("{:?}", row.regret));
            rec.push(row.staleness_max.to_string());
            rec.push(row.hub_size.to_string());
            rec.push(row.mode.as_str().to_string());
            rec.extend(row.pulls.iter().map(u64::to_string));
            w.write_record(&rec)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Parse a CSV written by [`write_traces_csv`], grouping rows by replication.
pub fn read_traces_csv<R: Read>(reader: R) -> Result<Vec<RegretTrace>> {
    let mut r = csv::Reader::from_reader(reader);
    let arms = r
        .headers()?
        .len()
        .checked_sub(6)
        .ok_or_else(|| usage_err("short header"))?;
    let mut out: Vec<RegretTrace> = Vec::new();
    let bad = |e: std::num::ParseIntError| usage_err(e.to_string());
    for rec in r.records() {
        let rec = rec?;
        let replication: u64 = rec[0].parse().map_err(bad)?;
        let row = TraceRow {
            t: rec[1].parse().map_err(bad)?,
            regret: rec[2]
                .parse()
                .map_err(|e: std::num::ParseFloatError| usage_err(e.to_string()))?,
            staleness_max: rec[3].parse().map_err(bad)?,
            hub_size: rec[4].parse().map_err(bad)?,
            mode: Mode::parse(&rec[5])?,
            pulls: (0..arms)
                .map(|i| rec[6 + i].parse().map_err(bad))
                .collect::<Result<_>>()?,
        };
        match out.last_mut() {
            Some(tr) if tr.replication == replication => tr.rows.push(row),
            _ => {
                let mut tr = RegretTrace::new(replication, arms);
                tr.rows.push(row);
                out.push(tr);
            }
        }
    }
    Ok(out)
}
