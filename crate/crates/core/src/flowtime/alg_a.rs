use crate::engine::{Admission, MachineBank, Policy, QueueKey};
use crate::error::Result;
use crate::model::{density_class, weight_class, Job, JobId, Params};
use crate::rational::{pow2, Rational};

/// Which weights define a job's type.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    /// Type `(w, d)` from the single weight.
    Weighted,
    /// Type `(w^f, d^r)`: flow-time-weight class and rejection-density class.
    Generalized,
}

impl Variant {
    /// Queue key of `job`. Densities use the rounded weight `2^class`.
    pub fn key(self, job: &Job) -> Result<QueueKey> {
        Ok(match self {
            Variant::Weighted => {
                let w = weight_class(&job.weight)?;
                QueueKey(w, density_class(&pow2(w), &job.size)?)
            }
            Variant::Generalized => {
                let wf = weight_class(&job.flow_weight)?;
                let wr = weight_class(&job.rejection_weight)?;
                QueueKey(wf, density_class(&pow2(wr), &job.size)?)
            }
        })
    }
}

/// The background scheduler: per-type queues bounded by `α²T*`, processing the
/// queue with the highest `2^d · load`.
#[derive(Debug, Clone)]
pub struct AlgA {
    variant: Variant,
    threshold: Rational,
}

impl AlgA {
    /// `params` should come from [`Params::alg_a`].
    pub fn new(params: &Params, variant: Variant) -> Result<Self> {
        let t = params.require_t_star()?;
        Ok(AlgA {
            variant,
            threshold: &params.alpha * &params.alpha * t,
        })
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    /// `α²T*`.
    pub fn threshold(&self) -> &Rational {
        &self.threshold
    }

    /// Queue with the highest `2^d · load` on `machine`; ties go to the smaller key.
    pub fn top_queue(state: &MachineBank, machine: usize) -> Option<QueueKey> {
        let mut best: Option<(QueueKey, Rational)> = None;
        for q in state.machine(machine).queues.values() {
            let p = pow2(q.key.1) * &q.load;
            if best.as_ref().map_or(true, |(_, b)| p > *b) {
                best = Some((q.key, p));
            }
        }
        best.map(|(k, _)| k)
    }
}

impl Policy for AlgA {
    fn name(&self) -> &str {
        match self.variant {
            Variant::Weighted => "alg-a",
            Variant::Generalized => "gen-a",
        }
    }

    fn queue_key(&self, job: &Job) -> QueueKey {
        self.variant.key(job).expect("validated job has positive size and weights")
    }

    fn load_factor(&self, job: &Job) -> Rational {
        pow2(self.queue_key(job).0)
    }

    fn on_release(&mut self, job: &Job, _now: &Rational, state: &MachineBank) -> Result<Admission> {
        let key = self.variant.key(job)?;
        let added = pow2(key.0) * &job.size;
        let mut best: Option<(usize, Rational)> = None;
        for &i in &job.allowed {
            let load = state.machine(i).load(&key);
            if best.as_ref().map_or(true, |(_, b)| load < *b) {
                best = Some((i, load));
            }
        }
        Ok(match best {
            Some((i, load)) if &load + &added < self.threshold => Admission::dispatch(i, load + added),
            _ => Admission::reject(),
        })
    }

    fn select(&mut self, machine: usize, _now: &Rational, state: &MachineBank) -> Option<JobId> {
        let key = Self::top_queue(state, machine)?;
        state.machine(machine).queue(&key)?.head().map(|m| m.job)
    }

    fn priority_scale(&self, key: &QueueKey) -> Option<Rational> {
        Some(pow2(key.1))
    }

    fn local_selection(&self) -> bool {
        true
    }
}
