//! Independent single-agent learners: every client runs MoM-UCB on its own
//! rewards and never communicates.

use crate::error::Result;
use crate::estimators::{argmax_ucb, RewardLog};
use crate::harness::regret::{Mode, RegretAccumulator, RegretTrace, TraceRow};
use crate::harness::summary::{PullTally, ReplicationSummary, RunOutput};
use crate::params::AlgoParams;
use crate::scenario::Scenario;

/// Consumes the same reward streams as the cooperative algorithms, so a
/// comparison on one `(seed, replication)` is paired pull by pull.
pub fn baseline_no_comm(sc: &Scenario, p: &AlgoParams, replication: u64) -> Result<RunOutput> {
    let (m, k) = (sc.clients(), sc.arms());
    let gm = sc.global_means()?;
    let mut rewards = sc.rewards(replication);
    let mut acc = RegretAccumulator::new(&gm, m);
    let mut tally = PullTally::new(m, k, p.horizon, &gm);
    let mut trace = RegretTrace::new(replication, k);
    let mut summary = ReplicationSummary::new(replication);

    let mut logs: Vec<Vec<RewardLog>> = (0..m)
        .map(|_| (0..k).map(|_| RewardLog::new(p.mom_mode, &p.mom)).collect())
        .collect();
    let mut est = vec![vec![0.0; k]; m];
    let mut n = vec![vec![0u64; k]; m];
    let mut actions = vec![0usize; m];
    let mut pulls = vec![0u64; k];
    let mut scratch = Vec::new();

    for t in 1..=p.horizon {
        for i in 0..m {
            let a = argmax_ucb(&est[i], &n[i], t, &p.ucb);
            let r = rewards.next(&sc.model, i, a);
            logs[i][a].push(r);
            n[i][a] += 1;
            est[i][a] = logs[i][a].estimate(&p.mom, &mut scratch).unwrap_or(0.0);
            actions[i] = a;
            tally.record(t, i, a);
            pulls[a] += 1;
        }
        acc.add_actions(&actions);
        summary.ucb_client_rounds += m as u64;
        trace.rows.push(TraceRow {
            t,
            regret: acc.total(),
            staleness_max: 0,
            hub_size: -1,
            mode: Mode::Ucb,
            pulls: pulls.clone(),
        });
    }
    summary.regret = acc.total();
    tally.fill(&mut summary);
    Ok(RunOutput { trace, summary })
}
