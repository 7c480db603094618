//! Rank-1 inhomogeneous random graphs.
//!
//! Each round an undirected graph on `M` clients is drawn afresh: the pair
//! `(i, j)` is an edge independently with probability
//! `min(1, h_i h_j / (theta M))`. The module also carries the empirical
//! adjacency frequencies, hub bookkeeping around the round-1 maximum-degree
//! client, and the flooding process used to measure broadcast delay.

use std::io::Write;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{usage_err, Error, Result};
use crate::rng::RngStream;
use crate::sampling::{sample_weights, WeightLaw};

/// `min(1, u v / (theta m))`.
pub fn connect_prob(u: f64, v: f64, theta: f64, m: usize) -> Result<f64> {
    if !(u > 0.0 && v > 0.0 && theta > 0.0) || m == 0 {
        return Err(usage_err(format!(
            "kernel needs positive weights, theta and m (u={u}, v={v}, theta={theta}, m={m})"
        )));
    }
    Ok(kernel(u, v, theta * m as f64))
}

#[inline]
fn kernel(u: f64, v: f64, norm: f64) -> f64 {
    (u * v / norm).min(1.0)
}

/// How edges are drawn each round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EdgeSampling {
    /// One Bernoulli trial per unordered pair, `O(M^2)`.
    Pairwise,
    /// Geometric skipping over pairs in decreasing-weight order, `O(M + |E|)`.
    /// Same edge law as `Pairwise`, different random stream consumption.
    Skip,
    /// `Pairwise` up to [`AUTO_PAIRWISE_MAX`] clients, `Skip` beyond.
    #[default]
    Auto,
}

pub const AUTO_PAIRWISE_MAX: usize = 64;

/// Weights plus the normalization of the kernel. Immutable once built.
#[derive(Debug, Clone)]
pub struct GraphProcess {
    weights: Vec<f64>,
    theta: f64,
    norm: f64,
    /// Client indices sorted by decreasing weight (ties by index).
    order: Vec<usize>,
    sampling: EdgeSampling,
}

impl GraphProcess {
    pub fn new(weights: Vec<f64>, theta: f64) -> Result<Self> {
        if weights.is_empty() {
            return Err(usage_err("graph needs at least one client"));
        }
        if !(theta > 0.0) || weights.iter().any(|w| !(*w > 0.0)) {
            return Err(usage_err("weights and theta must be positive"));
        }
        let m = weights.len();
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&a, &b| weights[b].total_cmp(&weights[a]).then(a.cmp(&b)));
        Ok(Self {
            norm: theta * m as f64,
            weights,
            theta,
            order,
            sampling: EdgeSampling::Auto,
        })
    }

    /// Draw `m` weights from `law` and use the law's mean as `theta`.
    pub fn from_law(law: &WeightLaw, m: usize, stream: RngStream) -> Result<Self> {
        Self::new(sample_weights(law, m, stream)?, law.theta())
    }

    pub fn with_sampling(mut self, sampling: EdgeSampling) -> Self {
        self.sampling = sampling;
        self
    }

    pub fn m(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn prob(&self, i: usize, j: usize) -> f64 {
        kernel(self.weights[i], self.weights[j], self.norm)
    }

    /// `(1/M) sum_i sum_{j != i} P(h_i, h_j)`.
    pub fn expected_mean_degree(&self) -> f64 {
        let m = self.m();
        let mut total = 0.0;
        for i in 0..m {
            for j in 0..m {
                if i != j {
                    total += self.prob(i, j);
                }
            }
        }
        total / m as f64
    }

    fn effective_sampling(&self) -> EdgeSampling {
        match self.sampling {
            EdgeSampling::Auto if self.m() <= AUTO_PAIRWISE_MAX => EdgeSampling::Pairwise,
            EdgeSampling::Auto => EdgeSampling::Skip,
            s => s,
        }
    }

    pub fn sample(&self, round: u64, rng: &mut ChaCha8Rng) -> GraphSnapshot {
        let mut snap = GraphSnapshot::empty(round, self.m());
        self.sample_into(round, rng, &mut snap);
        snap
    }

    /// Resample into an existing snapshot, reusing its allocations.
    pub fn sample_into(&self, round: u64, rng: &mut ChaCha8Rng, snap: &mut GraphSnapshot) {
        let m = self.m();
        snap.reset(round, m);
        match self.effective_sampling() {
            EdgeSampling::Pairwise => {
                for i in 0..m {
                    for j in (i + 1)..m {
                        let p = self.prob(i, j);
                        if rng.random::<f64>() < p {
                            snap.adj[i].push(j);
                            snap.adj[j].push(i);
                        }
                    }
                }
            }
            _ => {
                for a in 0..m.saturating_sub(1) {
                    let u = self.order[a];
                    let wu = self.weights[u];
                    skip_sample(
                        rng,
                        m - a - 1,
                        |k| self.weights[self.order[a + 1 + k]] * wu / self.norm,
                        |k| {
                            let v = self.order[a + 1 + k];
                            snap.adj[u].push(v);
                            snap.adj[v].push(u);
                        },
                    );
                }
                for row in &mut snap.adj {
                    row.sort_unstable();
                }
            }
        }
    }

    /// Sample only the neighborhood of `center` for one round.
    ///
    /// Edges are independent, so this has exactly the law of row `center` of
    /// a full snapshot at a fraction of the cost.
    pub fn sample_row(&self, center: usize, rng: &mut ChaCha8Rng, out: &mut Vec<usize>) {
        out.clear();
        let wc = self.weights[center];
        // Positions in `order`, skipping the center itself.
        let pos_center = self.order.iter().position(|&x| x == center).unwrap_or(usize::MAX);
        let n = self.m() - 1;
        let idx = |k: usize| {
            if k < pos_center {
                self.order[k]
            } else {
                self.order[k + 1]
            }
        };
        skip_sample(
            rng,
            n,
            |k| self.weights[idx(k)] * wc / self.norm,
            |k| out.push(idx(k)),
        );
        out.sort_unstable();
    }
}

/// Bernoulli trials over positions `0..n` whose success probabilities
/// `raw(k).min(1)` are non-increasing in `k`, drawn by geometric skipping.
fn skip_sample(rng: &mut ChaCha8Rng, n: usize, raw: impl Fn(usize) -> f64, mut accept: impl FnMut(usize)) {
    if n == 0 {
        return;
    }
    let mut k = 0usize;
    let mut p = raw(0).min(1.0);
    while k < n && p > 0.0 {
        if p < 1.0 {
            let r = 1.0 - rng.random::<f64>();
            let skip = (r.ln() / (-p).ln_1p()).floor();
            if skip >= (n - k) as f64 {
                break;
            }
            k += skip as usize;
        }
        let q = raw(k).min(1.0);
        if rng.random::<f64>() < q / p {
            accept(k);
        }
        p = q;
        k += 1;
    }
}

/// One round's undirected graph. Self-loops are implicit (`X_ii = 1`) and
/// never stored in the neighbor lists.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GraphSnapshot {
    round: u64,
    adj: Vec<Vec<usize>>,
}

impl GraphSnapshot {
    pub fn empty(round: u64, m: usize) -> Self {
        Self {
            round,
            adj: vec![Vec::new(); m],
        }
    }

    fn reset(&mut self, round: u64, m: usize) {
        self.round = round;
        self.adj.resize_with(m, Vec::new);
        for row in &mut self.adj {
            row.clear();
        }
    }

    /// Build from an explicit edge list. Duplicates and self-loops are rejected.
    pub fn from_edges(round: u64, m: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut snap = Self::empty(round, m);
        for &(i, j) in edges {
            if i >= m || j >= m || i == j {
                return Err(usage_err(format!("invalid edge ({i}, {j}) for m = {m}")));
            }
            if snap.adj[i].contains(&j) {
                return Err(usage_err(format!("duplicate edge ({i}, {j})")));
            }
            snap.adj[i].push(j);
            snap.adj[j].push(i);
        }
        for row in &mut snap.adj {
            row.sort_unstable();
        }
        Ok(snap)
    }

    pub fn complete(round: u64, m: usize) -> Self {
        Self {
            round,
            adj: (0..m).map(|i| (0..m).filter(|&j| j != i).collect()).collect(),
        }
    }

    pub fn round(&self) -> u64 {
        self.round
    }

    pub fn m(&self) -> usize {
        self.adj.len()
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.adj[i]
    }

    pub fn degree(&self, i: usize) -> Result<usize> {
        self.adj
            .get(i)
            .map(Vec::len)
            .ok_or_else(|| usage_err(format!("client {i} out of range (m = {})", self.m())))
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        i == j || self.adj[i].binary_search(&j).is_ok()
    }

    pub fn edge_count(&self) -> usize {
        self.adj.iter().map(Vec::len).sum::<usize>() / 2
    }

    /// Edges `(i, j)` with `i < j`, sorted.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.adj
            .iter()
            .enumerate()
            .flat_map(|(i, row)| row.iter().filter(move |&&j| j > i).map(move |&j| (i, j)))
    }

    /// Drop every edge incident to `i`.
    pub fn isolate(&mut self, i: usize) {
        let nbrs = std::mem::take(&mut self.adj[i]);
        for j in nbrs {
            self.adj[j].retain(|&x| x != i);
        }
    }
}

/// Client with the largest degree; smallest index on ties.
pub fn max_degree_client(snap: &GraphSnapshot) -> usize {
    let mut best = 0;
    for i in 1..snap.m() {
        if snap.adj[i].len() > snap.adj[best].len() {
            best = i;
        }
    }
    best
}

/// Cumulative edge counts `sum_s X_ij^s`.
#[derive(Debug, Clone)]
pub struct EmpiricalAdjacency {
    m: usize,
    t: u64,
    counts: Vec<u32>,
}

/// What client `owner` may see of the empirical adjacency: its own row.
#[derive(Debug, Clone, Copy)]
pub struct ClientAdjacency<'a> {
    owner: usize,
    t: u64,
    row: &'a [u32],
}

impl ClientAdjacency<'_> {
    pub fn owner(&self) -> usize {
        self.owner
    }

    /// `P_t(owner, j)`.
    pub fn frequency(&self, j: usize) -> f64 {
        if self.t == 0 {
            return 0.0;
        }
        if j == self.owner {
            return 1.0;
        }
        self.row[j] as f64 / self.t as f64
    }

    pub fn contacted(&self, j: usize) -> bool {
        self.frequency(j) > 0.0
    }
}

impl EmpiricalAdjacency {
    pub fn new(m: usize) -> Self {
        Self {
            m,
            t: 0,
            counts: vec![0; m * m],
        }
    }

    pub fn rounds(&self) -> u64 {
        self.t
    }

    pub fn update(&mut self, snap: &GraphSnapshot) -> Result<()> {
        if snap.round() != self.t + 1 {
            return Err(Error::Sequencing {
                expected: self.t + 1,
                got: snap.round(),
            });
        }
        if snap.m() != self.m {
            return Err(usage_err("snapshot size does not match adjacency"));
        }
        for (i, j) in snap.edges() {
            self.counts[i * self.m + j] += 1;
            self.counts[j * self.m + i] += 1;
        }
        self.t += 1;
        Ok(())
    }

    pub fn client_view(&self, owner: usize) -> ClientAdjacency<'_> {
        ClientAdjacency {
            owner,
            t: self.t,
            row: &self.counts[owner * self.m..(owner + 1) * self.m],
        }
    }
}

/// `{ j != center : h_j h_center >= theta M }`: clients linked to the
/// center with probability one in every round.
pub fn deterministic_hub_core(proc: &GraphProcess, center: usize) -> Result<Vec<usize>> {
    if center >= proc.m() {
        return Err(usage_err(format!("center {center} out of range")));
    }
    let hc = proc.weights[center];
    Ok((0..proc.m())
        .filter(|&j| j != center && proc.weights[j] * hc >= proc.norm)
        .collect())
}

/// Running statistics of the hub `S_0^t` around a fixed center.
#[derive(Debug, Clone)]
pub struct HubTracker {
    center: usize,
    threshold: f64,
    persistent: Vec<bool>,
    persistent_size: usize,
    rounds: u64,
    last_large_round: u64,
    sup_gap: u64,
    last_size: usize,
}

impl HubTracker {
    /// `threshold` is the strict lower bound defining a "large" hub round.
    pub fn new(m: usize, center: usize, threshold: f64) -> Self {
        Self {
            center,
            threshold,
            persistent: vec![false; m],
            persistent_size: 0,
            rounds: 0,
            last_large_round: 0,
            sup_gap: 0,
            last_size: 0,
        }
    }

    pub fn center(&self) -> usize {
        self.center
    }

    /// Feed the center's neighbor set (sorted) for the next round.
    pub fn observe(&mut self, round: u64, hub_set: &[usize]) {
        if self.rounds == 0 {
            for &j in hub_set {
                self.persistent[j] = true;
            }
            self.persistent_size = hub_set.len();
        } else if self.persistent_size > 0 {
            let mut kept = 0;
            let mut it = hub_set.iter().peekable();
            for j in 0..self.persistent.len() {
                let present = it.peek().is_some_and(|&&x| x == j);
                if present {
                    it.next();
                }
                if self.persistent[j] {
                    if present {
                        kept += 1;
                    } else {
                        self.persistent[j] = false;
                    }
                }
            }
            self.persistent_size = kept;
        }
        self.rounds += 1;
        self.last_size = hub_set.len();
        if hub_set.len() as f64 > self.threshold {
            self.last_large_round = round;
        }
        self.sup_gap = self.sup_gap.max(round - self.last_large_round);
    }

    /// `|S_0^t|` of the latest round.
    pub fn hub_size(&self) -> usize {
        self.last_size
    }

    /// `|S_0|` over the rounds seen so far.
    pub fn persistent_size(&self) -> usize {
        self.persistent_size
    }

    pub fn persistent_members(&self) -> Vec<usize> {
        (0..self.persistent.len())
            .filter(|&j| self.persistent[j])
            .collect()
    }

    pub fn contains_persistent(&self, j: usize) -> bool {
        self.persistent[j]
    }

    /// `tau(t)`: last round with a large hub, 0 if none.
    pub fn last_large_round(&self) -> u64 {
        self.last_large_round
    }

    /// `sup_{u <= t} (u - tau(u))`.
    pub fn sup_gap(&self) -> u64 {
        self.sup_gap
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CoverTime {
    Covered(u64),
    Timeout,
}

/// Rounds until a message injected at `seeds` reaches every client when it is
/// forwarded over a fresh graph each round.
pub fn broadcast_cover_time(
    proc: &GraphProcess,
    seeds: &[usize],
    rng: &mut ChaCha8Rng,
    max_rounds: u64,
) -> Result<CoverTime> {
    broadcast_trace(proc, seeds, rng, max_rounds, |_, _| {})
}

/// As [`broadcast_cover_time`], reporting the covered count after each round.
pub fn broadcast_trace(
    proc: &GraphProcess,
    seeds: &[usize],
    rng: &mut ChaCha8Rng,
    max_rounds: u64,
    mut on_round: impl FnMut(u64, &[bool]),
) -> Result<CoverTime> {
    let m = proc.m();
    if seeds.is_empty() {
        return Err(usage_err("broadcast needs a non-empty seed set"));
    }
    if let Some(&bad) = seeds.iter().find(|&&s| s >= m) {
        return Err(usage_err(format!("seed client {bad} out of range")));
    }
    let mut covered = vec![false; m];
    for &s in seeds {
        covered[s] = true;
    }
    let mut count = covered.iter().filter(|&&c| c).count();
    if count == m {
        return Ok(CoverTime::Covered(0));
    }
    let mut snap = GraphSnapshot::empty(0, m);
    let mut newly = Vec::new();
    for t in 1..=max_rounds {
        proc.sample_into(t, rng, &mut snap);
        newly.clear();
        for (i, j) in snap.edges() {
            if covered[i] && !covered[j] {
                newly.push(j);
            } else if covered[j] && !covered[i] {
                newly.push(i);
            }
        }
        for &j in &newly {
            if !covered[j] {
                covered[j] = true;
                count += 1;
            }
        }
        on_round(t, &covered);
        if count == m {
            return Ok(CoverTime::Covered(t));
        }
    }
    Ok(CoverTime::Timeout)
}

/// Streams snapshots as CSV rows `t,i,j` with `i < j`.
pub struct EdgeCsvWriter<W: Write> {
    inner: csv::Writer<W>,
}

impl<W: Write> EdgeCsvWriter<W> {
    pub fn new(writer: W) -> Result<Self> {
        let mut inner = csv::Writer::from_writer(writer);
        inner.write_record(["t", "i", "j"])?;
        Ok(Self { inner })
    }

    pub fn write(&mut self, snap: &GraphSnapshot) -> Result<()> {
        for (i, j) in snap.edges() {
            self.inner.serialize((snap.round(), i, j))?;
        }
        Ok(())
    }

    pub fn finish(mut self) -> Result<W> {
        self.inner.flush()?;
        self.inner
            .into_inner()
            .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))
    }
}
