//! Median-of-means estimation and the heavy-tailed UCB index.
//!
//! All logarithms are natural.

use serde::{Deserialize, Serialize};

use crate::error::{usage_err, Result};

/// How a growing reward log is turned into a MoM estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MomMode {
    /// Re-partition the full log into contiguous batches every time.
    #[default]
    Contiguous,
    /// Sample `i` goes to batch `i mod B`; batch sums are kept incrementally.
    Streaming,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MomConfig {
    batches: usize,
}

impl MomConfig {
    pub fn new(batches: usize) -> Result<Self> {
        if batches == 0 {
            return Err(usage_err("median-of-means needs at least one batch"));
        }
        Ok(Self { batches })
    }

    /// `B = ceil(8 log(e^{1/8} T))`.
    pub fn from_horizon(horizon: u64) -> Result<Self> {
        if horizon == 0 {
            return Err(usage_err("horizon must be positive"));
        }
        Self::new((1.0 + 8.0 * (horizon as f64).ln()).ceil() as usize)
    }

    /// `k = floor(8 log(e^{1/8} / delta))`, at least 1.
    pub fn from_confidence(delta: f64) -> Result<Self> {
        if !(delta > 0.0 && delta < 1.0) {
            return Err(usage_err(format!("delta must lie in (0, 1), got {delta}")));
        }
        Self::new(((1.0 - 8.0 * delta.ln()).floor() as usize).max(1))
    }

    pub fn batches(&self) -> usize {
        self.batches
    }

    /// `min(B, floor(n/2))` for `n >= 2`, else 1.
    pub fn effective_batches(&self, n: usize) -> usize {
        if n >= 2 {
            self.batches.min(n / 2)
        } else {
            1
        }
    }
}

/// Median in place; midpoint of the two central values for even length.
fn median_in_place(xs: &mut [f64]) -> f64 {
    let k = xs.len();
    debug_assert!(k > 0);
    let mid = k / 2;
    let (left, upper, _) = xs.select_nth_unstable_by(mid, f64::total_cmp);
    let upper = *upper;
    if k % 2 == 1 {
        upper
    } else {
        let lower = left.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        0.5 * (lower + upper)
    }
}

/// Contiguous-batch median of means over `samples` in their given order.
pub fn median_of_means(samples: &[f64], cfg: &MomConfig) -> Result<f64> {
    if samples.is_empty() {
        return Err(usage_err("median of means over an empty sample"));
    }
    let n = samples.len();
    let k = cfg.effective_batches(n);
    let size = n / k;
    let mut means: Vec<f64> = samples[..k * size]
        .chunks_exact(size)
        .map(|c| c.iter().sum::<f64>() / size as f64)
        .collect();
    Ok(median_in_place(&mut means))
}

/// Reward log with prefix sums, so the contiguous MoM of the whole log costs
/// `O(B)` per query instead of `O(n)`.
#[derive(Debug, Clone)]
pub struct MomLog {
    prefix: Vec<f64>,
}

impl Default for MomLog {
    fn default() -> Self {
        Self { prefix: vec![0.0] }
    }
}

impl MomLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, x: f64) {
        let last = *self.prefix.last().expect("prefix starts with 0");
        self.prefix.push(last + x);
    }

    pub fn len(&self) -> usize {
        self.prefix.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn sum(&self) -> f64 {
        self.prefix[self.len()]
    }

    /// MoM of the first `n` samples. `scratch` is reused across calls.
    pub fn estimate_prefix(&self, n: usize, cfg: &MomConfig, scratch: &mut Vec<f64>) -> Option<f64> {
        if n == 0 || n > self.len() {
            return None;
        }
        let k = cfg.effective_batches(n);
        let size = n / k;
        scratch.clear();
        scratch.extend((0..k).map(|b| (self.prefix[(b + 1) * size] - self.prefix[b * size]) / size as f64));
        Some(median_in_place(scratch))
    }

    pub fn estimate(&self, cfg: &MomConfig, scratch: &mut Vec<f64>) -> Option<f64> {
        self.estimate_prefix(self.len(), cfg, scratch)
    }
}

/// Round-robin batch sums.
#[derive(Debug, Clone)]
pub struct StreamingMom {
    sums: Vec<f64>,
    counts: Vec<u64>,
    n: u64,
}

impl StreamingMom {
    pub fn new(cfg: &MomConfig) -> Self {
        Self {
            sums: vec![0.0; cfg.batches()],
            counts: vec![0; cfg.batches()],
            n: 0,
        }
    }

    pub fn push(&mut self, x: f64) {
        let b = (self.n % self.sums.len() as u64) as usize;
        self.sums[b] += x;
        self.counts[b] += 1;
        self.n += 1;
    }

    pub fn len(&self) -> u64 {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Median of the non-empty batch means.
    pub fn estimate(&self, scratch: &mut Vec<f64>) -> Option<f64> {
        if self.n == 0 {
            return None;
        }
        scratch.clear();
        scratch.extend(
            self.sums
                .iter()
                .zip(&self.counts)
                .filter(|(_, &c)| c > 0)
                .map(|(s, &c)| s / c as f64),
        );
        Some(median_in_place(scratch))
    }
}

/// A per-arm reward log estimated in either [`MomMode`].
#[derive(Debug, Clone)]
pub enum RewardLog {
    Contiguous(MomLog),
    Streaming(StreamingMom),
}

impl RewardLog {
    pub fn new(mode: MomMode, cfg: &MomConfig) -> Self {
        match mode {
            MomMode::Contiguous => RewardLog::Contiguous(MomLog::new()),
            MomMode::Streaming => RewardLog::Streaming(StreamingMom::new(cfg)),
        }
    }

    pub fn push(&mut self, x: f64) {
        match self {
            RewardLog::Contiguous(l) => l.push(x),
            RewardLog::Streaming(l) => l.push(x),
        }
    }

    pub fn len(&self) -> u64 {
        match self {
            RewardLog::Contiguous(l) => l.len() as u64,
            RewardLog::Streaming(l) => l.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn estimate(&self, cfg: &MomConfig, scratch: &mut Vec<f64>) -> Option<f64> {
        match self {
            RewardLog::Contiguous(l) => l.estimate(cfg, scratch),
            RewardLog::Streaming(l) => l.estimate(scratch),
        }
    }
}

/// Constants shared by every UCB computation of a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UcbParams {
    pub rho: f64,
    pub epsilon: f64,
    /// Exploration constant used by the index.
    pub c: f64,
    /// MoM deviation constant `12^{1/(1+eps)}`; reported, not used by the index.
    pub big_c: f64,
}

impl UcbParams {
    /// `c = (16 log(2 e^{1/8}))^{eps/(1+eps)}`, `C = 12^{1/(1+eps)}`.
    pub fn new(rho: f64, epsilon: f64) -> Result<Self> {
        if !(rho > 0.0) {
            return Err(usage_err(format!("rho must be positive, got {rho}")));
        }
        if !(epsilon > 0.0 && epsilon <= 1.0) {
            return Err(usage_err(format!("epsilon must lie in (0, 1], got {epsilon}")));
        }
        let e = epsilon / (1.0 + epsilon);
        Ok(Self {
            rho,
            epsilon,
            c: (16.0 * (2.0f64.ln() + 0.125)).powf(e),
            big_c: 12f64.powf(1.0 / (1.0 + epsilon)),
        })
    }

    pub fn with_c(mut self, c: f64) -> Self {
        self.c = c;
        self
    }

    fn exponent(&self) -> f64 {
        self.epsilon / (1.0 + self.epsilon)
    }

    /// `rho^{1/(1+eps)} (c log t / n)^{eps/(1+eps)}`; infinite for `n = 0`.
    /// `log t` is taken as 0 for `t <= 1`.
    pub fn bonus(&self, n_eff: u64, t: u64) -> f64 {
        self.bonus_at_log(n_eff, (t.max(1) as f64).ln())
    }

    /// The bonus with `log t` supplied directly.
    pub fn bonus_at_log(&self, n_eff: u64, log_t: f64) -> f64 {
        if n_eff == 0 {
            return f64::INFINITY;
        }
        self.rho.powf(1.0 / (1.0 + self.epsilon)) * (self.c * log_t / n_eff as f64).powf(self.exponent())
    }
}

pub fn ucb_index(mean_estimate: f64, n_eff: u64, t: u64, p: &UcbParams) -> f64 {
    if n_eff == 0 {
        f64::INFINITY
    } else {
        mean_estimate + p.bonus(n_eff, t)
    }
}

/// Arm with the largest index; smallest arm on ties.
pub fn argmax_ucb(means: &[f64], counts: &[u64], t: u64, p: &UcbParams) -> usize {
    let mut best = 0;
    let mut best_val = f64::NEG_INFINITY;
    for (i, (&mu, &n)) in means.iter().zip(counts).enumerate() {
        let v = ucb_index(mu, n, t, p);
        if v > best_val {
            best = i;
            best_val = v;
        }
    }
    best
}

/// `(12 rho)^{1/(1+eps)} (16 log(e^{1/8}/delta) / n)^{eps/(1+eps)}`.
pub fn mom_radius(n: u64, delta: f64, p: &UcbParams) -> Result<f64> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(usage_err(format!("delta must lie in (0, 1), got {delta}")));
    }
    if n == 0 {
        return Err(usage_err("radius needs at least one sample"));
    }
    let e = p.exponent();
    Ok((12.0 * p.rho).powf(1.0 / (1.0 + p.epsilon)) * (16.0 * (0.125 - delta.ln()) / n as f64).powf(e))
}
