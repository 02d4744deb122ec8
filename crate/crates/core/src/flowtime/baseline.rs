use crate::engine::{Admission, MachineBank, Policy, QueueKey};
use crate::error::Result;
use crate::model::{Job, JobId};
use crate::rational::Rational;

/// Per-size-class least-load dispatch with a load cap, processing the job with
/// the shortest remaining time. Used as a cautionary baseline: it keeps
/// starving long jobs on a machine that keeps receiving short ones.
#[derive(Debug, Clone)]
pub struct SrptBaseline {
    cap: Rational,
}

impl SrptBaseline {
    /// Rejects a job when every allowed machine's queue for its size class
    /// holds at least `cap` remaining work.
    pub fn new(cap: Rational) -> Self {
        SrptBaseline { cap }
    }
}

impl Policy for SrptBaseline {
    fn name(&self) -> &str {
        "srpt"
    }

    fn queue_key(&self, job: &Job) -> QueueKey {
        QueueKey(job.size_class(), 0)
    }

    fn on_release(&mut self, job: &Job, _now: &Rational, state: &MachineBank) -> Result<Admission> {
        let key = self.queue_key(job);
        let mut best: Option<(usize, Rational)> = None;
        for &i in &job.allowed {
            let load = state.machine(i).load(&key);
            if best.as_ref().map_or(true, |(_, b)| load < *b) {
                best = Some((i, load));
            }
        }
        Ok(match best {
            Some((i, load)) if load < self.cap => Admission::dispatch(i, load),
            _ => Admission::reject(),
        })
    }

    fn select(&mut self, machine: usize, _now: &Rational, state: &MachineBank) -> Option<JobId> {
        state
            .machine(machine)
            .members()
            .min_by(|a, b| (&a.remaining, &a.release, a.rank).cmp(&(&b.remaining, &b.release, b.rank)))
            .map(|m| m.job)
    }
}
