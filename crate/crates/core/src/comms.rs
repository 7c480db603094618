//! The information filtration.
//!
//! Client `m` knows, for every origin `j`, the freshest round `t_{m,j}` whose
//! information from `j` has reached it. Each round every client forwards
//! everything it knows to its current neighbors, so `t_{m,j}` after round `t`
//! is the max of its own value and its neighbors' values from before the
//! round. Only stamps travel in the hot loop; the content attached to a
//! stamp is looked up in a per-origin [`Archive`], since the content of
//! origin `j` at stamp `s` is the same no matter which path delivered it.
//!
//! [`FiltrationView`] is the explicit, message-level version of the same
//! process, used where individual summaries matter (tests, traces).

use std::collections::VecDeque;
use std::io::Write;

use crate::error::{usage_err, Error, Result};
use crate::graph::GraphSnapshot;

/// What origin `j` publishes about itself at stamp `s`. Which point of
/// round `s` the snapshot reflects is fixed by the algorithm using it.
#[derive(Debug, Clone, PartialEq)]
pub struct ClientSummary {
    pub origin: usize,
    pub stamp: u64,
    pub local_counts: Vec<u64>,
    pub local_est: Vec<f64>,
    pub global_est: Vec<f64>,
    pub agg_counts: Vec<u64>,
    pub hub: Option<HubPayload>,
}

/// Center-computed estimator and aggregate count per arm.
#[derive(Debug, Clone, PartialEq)]
pub struct HubPayload {
    pub est: Vec<f64>,
    pub counts: Vec<u64>,
}

impl ClientSummary {
    /// Summary with zero counts and estimates, for tests and placeholders.
    pub fn blank(origin: usize, stamp: u64, arms: usize) -> Self {
        Self {
            origin,
            stamp,
            local_counts: vec![0; arms],
            local_est: vec![0.0; arms],
            global_est: vec![0.0; arms],
            agg_counts: vec![0; arms],
            hub: None,
        }
    }
}

/// Message-level filtration of one client.
#[derive(Debug, Clone)]
pub struct FiltrationView {
    owner: usize,
    entries: Vec<Option<ClientSummary>>,
}

impl FiltrationView {
    pub fn new(owner: usize, m: usize) -> Self {
        Self {
            owner,
            entries: vec![None; m],
        }
    }

    pub fn owner(&self) -> usize {
        self.owner
    }

    /// `t_{m,j}`, 0 if nothing from `j` is known.
    pub fn stamp(&self, j: usize) -> u64 {
        self.entries[j].as_ref().map_or(0, |s| s.stamp)
    }

    pub fn get(&self, j: usize) -> Option<&ClientSummary> {
        self.entries[j].as_ref()
    }

    pub fn known_origins(&self) -> Vec<usize> {
        (0..self.entries.len())
            .filter(|&j| self.entries[j].is_some())
            .collect()
    }

    /// Install the owner's own summary for the current round.
    pub fn set_own(&mut self, own: ClientSummary) -> Result<()> {
        if own.origin != self.owner {
            return Err(usage_err("own summary must originate at the owner"));
        }
        if own.stamp < self.stamp(self.owner) {
            return Err(Error::Sequencing {
                expected: self.stamp(self.owner),
                got: own.stamp,
            });
        }
        self.entries[self.owner] = Some(own);
        Ok(())
    }

    /// Everything the owner would forward: the own summary plus every relay.
    pub fn make_message(&self) -> Vec<ClientSummary> {
        self.entries.iter().flatten().cloned().collect()
    }

    /// Keep the freshest summary per origin.
    pub fn merge(&mut self, incoming: &[ClientSummary]) -> Result<()> {
        for s in incoming {
            let slot = self
                .entries
                .get_mut(s.origin)
                .ok_or_else(|| usage_err(format!("origin {} out of range", s.origin)))?;
            match slot {
                Some(cur) if cur.stamp > s.stamp => {}
                Some(cur) if cur.stamp == s.stamp => {
                    if cur != s {
                        return Err(Error::Integrity {
                            origin: s.origin,
                            stamp: s.stamp,
                        });
                    }
                }
                _ => *slot = Some(s.clone()),
            }
        }
        Ok(())
    }

    /// `max_j (t - t_{m,j})` over all origins.
    pub fn staleness(&self, t: u64) -> u64 {
        (0..self.entries.len())
            .map(|j| t.saturating_sub(self.stamp(j)))
            .max()
            .unwrap_or(0)
    }
}

/// Run one synchronous exchange over `snap` for a set of views: every message
/// is built from the pre-round views before any merge is applied.
pub fn exchange_views(views: &mut [FiltrationView], snap: &GraphSnapshot) -> Result<()> {
    let outgoing: Vec<Vec<ClientSummary>> = views.iter().map(|v| v.make_message()).collect();
    for (m, view) in views.iter_mut().enumerate() {
        for &k in snap.neighbors(m) {
            view.merge(&outgoing[k])?;
        }
    }
    Ok(())
}

/// Stamps of every client about every origin, as a flat `M x M` matrix.
#[derive(Debug, Clone)]
pub struct StampMatrix {
    m: usize,
    cur: Vec<u32>,
    prev: Vec<u32>,
}

/// Per-round summary of the stamp matrix after an exchange.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StampStats {
    /// `max_{m,j} (t - t_{m,j})`.
    pub staleness_max: u64,
    /// Smallest stamp anywhere in the matrix.
    pub min_stamp: u64,
}

impl StampMatrix {
    pub fn new(m: usize) -> Self {
        Self {
            m,
            cur: vec![0; m * m],
            prev: vec![0; m * m],
        }
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn stamp(&self, m: usize, j: usize) -> u64 {
        self.cur[m * self.m + j] as u64
    }

    pub fn row(&self, m: usize) -> &[u32] {
        &self.cur[m * self.m..(m + 1) * self.m]
    }

    /// Row `m` as it was before the latest exchange.
    pub fn prev_row(&self, m: usize) -> &[u32] {
        &self.prev[m * self.m..(m + 1) * self.m]
    }

    /// Column `j`: every client's stamp about origin `j`.
    pub fn column(&self, j: usize) -> impl Iterator<Item = u64> + '_ {
        (0..self.m).map(move |m| self.cur[m * self.m + j] as u64)
    }

    /// Round `round`: each client publishes its own stamp `round`, then merges
    /// its neighbors' pre-round rows.
    pub fn exchange(&mut self, round: u64, snap: &GraphSnapshot) -> StampStats {
        let m = self.m;
        let r = u32::try_from(round).expect("round fits in u32");
        for i in 0..m {
            self.cur[i * m + i] = r;
        }
        std::mem::swap(&mut self.cur, &mut self.prev);
        let mut min_stamp = r;
        for i in 0..m {
            let dst = &mut self.cur[i * m..(i + 1) * m];
            dst.copy_from_slice(&self.prev[i * m..(i + 1) * m]);
            for &k in snap.neighbors(i) {
                let src = &self.prev[k * m..(k + 1) * m];
                for (d, &s) in dst.iter_mut().zip(src) {
                    *d = (*d).max(s);
                }
            }
            min_stamp = min_stamp.min(dst.iter().copied().min().unwrap_or(r));
        }
        StampStats {
            staleness_max: (r - min_stamp) as u64,
            min_stamp: min_stamp as u64,
        }
    }

    /// As [`exchange`](Self::exchange), reporting every relayed
    /// `(from, to, origin, stamp)`.
    pub fn exchange_traced(
        &mut self,
        round: u64,
        snap: &GraphSnapshot,
        mut on_relay: impl FnMut(usize, usize, usize, u64),
    ) -> StampStats {
        let stats = self.exchange(round, snap);
        let m = self.m;
        for i in 0..m {
            for &k in snap.neighbors(i) {
                for j in 0..m {
                    let s = self.prev[k * m + j];
                    if s > 0 {
                        on_relay(k, i, j, s as u64);
                    }
                }
            }
        }
        stats
    }
}

/// Content published by each origin, indexed by stamp, with old stamps
/// dropped once no client can still reference them.
#[derive(Debug, Clone)]
pub struct Archive<T> {
    per_origin: Vec<VecDeque<(u64, T)>>,
}

impl<T> Archive<T> {
    pub fn new(m: usize) -> Self {
        Self {
            per_origin: (0..m).map(|_| VecDeque::new()).collect(),
        }
    }

    /// Stamps must be pushed in increasing order per origin.
    pub fn push(&mut self, origin: usize, stamp: u64, value: T) {
        let q = &mut self.per_origin[origin];
        debug_assert!(q.back().is_none_or(|(s, _)| *s < stamp));
        q.push_back((stamp, value));
    }

    pub fn get(&self, origin: usize, stamp: u64) -> Option<&T> {
        let q = &self.per_origin[origin];
        let first = q.front()?.0;
        if stamp < first {
            return None;
        }
        // Stamps are consecutive after the first push.
        let idx = (stamp - first) as usize;
        match q.get(idx) {
            Some((s, v)) if *s == stamp => Some(v),
            _ => q.binary_search_by_key(&stamp, |(s, _)| *s).ok().map(|i| &q[i].1),
        }
    }

    /// Drop entries of `origin` with stamp below `stamp`.
    pub fn prune_below(&mut self, origin: usize, stamp: u64) {
        let q = &mut self.per_origin[origin];
        while q.front().is_some_and(|(s, _)| *s < stamp) {
            q.pop_front();
        }
    }

    pub fn len(&self, origin: usize) -> usize {
        self.per_origin[origin].len()
    }
}

/// CSV rows `t,from,to,origin,stamp`.
pub struct MessageTraceWriter<W: Write> {
    inner: csv::Writer<W>,
}

impl<W: Write> MessageTraceWriter<W> {
    pub fn new(writer: W) -> Result<Self> {
        let mut inner = csv::Writer::from_writer(writer);
        inner.write_record(["t", "from", "to", "origin", "stamp"])?;
        Ok(Self { inner })
    }

    pub fn row(&mut self, t: u64, from: usize, to: usize, origin: usize, stamp: u64) -> Result<()> {
        self.inner.serialize((t, from, to, origin, stamp))?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<W> {
        self.inner.flush()?;
        self.inner
            .into_inner()
            .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))
    }
}
