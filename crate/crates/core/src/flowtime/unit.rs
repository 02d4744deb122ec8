use crate::engine::{Admission, MachineBank, Policy, QueueKey};
use crate::error::Result;
use crate::model::{Job, JobId, Params};
use crate::rational::{int, Rational};

/// Unit-size max flow-time: least-queue dispatch with threshold `T*/ε`, FIFO
/// processing. The load of a machine is the number of jobs waiting on it.
#[derive(Debug, Clone)]
pub struct FtUnit {
    threshold: Rational,
}

impl FtUnit {
    pub fn new(params: &Params) -> Result<Self> {
        Ok(FtUnit {
            threshold: &params.alpha * params.require_t_star()?,
        })
    }

    pub fn threshold(&self) -> &Rational {
        &self.threshold
    }
}

impl Policy for FtUnit {
    fn name(&self) -> &str {
        "ft-unit"
    }

    fn queue_key(&self, _job: &Job) -> QueueKey {
        QueueKey::FIFO
    }

    fn on_release(&mut self, job: &Job, _now: &Rational, state: &MachineBank) -> Result<Admission> {
        let best = job
            .allowed
            .iter()
            .map(|&i| (i, state.machine(i).pending_count()))
            .min_by_key(|&(i, n)| (n, i));
        Ok(match best {
            Some((i, n)) if int(n as i64) < self.threshold => Admission::dispatch(i, int(n as i64)),
            _ => Admission::reject(),
        })
    }

    fn select(&mut self, machine: usize, _now: &Rational, state: &MachineBank) -> Option<JobId> {
        state
            .machine(machine)
            .queue(&QueueKey::FIFO)
            .and_then(|q| q.head())
            .map(|m| m.job)
    }
}
