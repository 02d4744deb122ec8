//! Online load balancing with rejection: greedy with a load threshold, the
//! two-stage algorithm for Δ-separated size classes, and the doubling wrapper
//! for an unknown optimum.
//!
//! All three run in dispatch-only mode: a machine's load is the volume
//! dispatched to it that has not been rejected.

use std::collections::BTreeMap;

use num_traits::{One, Zero};

use crate::engine::{Admission, Decision, Effect, MachineBank, Policy, QueueKey, RejectReason};
use crate::error::Result;
use crate::metrics::exceeds_budget;
use crate::model::{size_class, Job, JobId, Params};
use crate::rational::{int, rem_euclid, Rational};

/// Index of the minimum, ties to the first.
fn argmin<'a>(items: impl Iterator<Item = (usize, &'a Rational)>) -> Option<(usize, &'a Rational)> {
    items.fold(None, |best, (i, v)| match best {
        Some((_, b)) if b <= v => best,
        _ => Some((i, v)),
    })
}

/// Greedy dispatch to the least-loaded allowed machine; rejects when even that
/// machine holds at least `α·T*`.
#[derive(Debug, Clone)]
pub struct LbUnit {
    alpha: Rational,
    t_star: Rational,
}

impl LbUnit {
    pub fn new(params: &Params) -> Result<Self> {
        Ok(LbUnit {
            alpha: params.alpha.clone(),
            t_star: params.require_t_star()?.clone(),
        })
    }

    pub fn threshold(&self) -> Rational {
        &self.alpha * &self.t_star
    }

    /// The dispatch rule on its own: `loads[i]` is the load of `allowed[i]`.
    pub fn dispatch(&self, allowed: &[usize], loads: &[Rational]) -> Decision {
        match argmin(loads.iter().enumerate()) {
            Some((k, load)) if *load < self.threshold() => Decision::Dispatch {
                machine: allowed[k],
                level: load.clone(),
            },
            _ => Decision::Reject,
        }
    }
}

impl Policy for LbUnit {
    fn name(&self) -> &str {
        "lb-unit"
    }

    fn processes(&self) -> bool {
        false
    }

    fn queue_key(&self, _job: &Job) -> QueueKey {
        QueueKey::FIFO
    }

    fn on_release(&mut self, job: &Job, _now: &Rational, state: &MachineBank) -> Result<Admission> {
        let loads: Vec<Rational> = job
            .allowed
            .iter()
            .map(|&i| state.machine(i).backlog.clone())
            .collect();
        Ok(match self.dispatch(&job.allowed, &loads) {
            Decision::Dispatch { machine, level } => Admission::dispatch(machine, level),
            Decision::Reject => Admission::reject(),
        })
    }

    fn select(&mut self, _machine: usize, _now: &Rational, _state: &MachineBank) -> Option<JobId> {
        None
    }
}

/// A job as Stage 2 sees it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pending {
    pub job: JobId,
    pub size: Rational,
    pub rank: u64,
}

/// Stage 2 pruning: drops the largest jobs (on equal size, the later arrival)
/// until the total is at most `cap`. Returns the dropped jobs in removal order.
pub fn stage2_prune(jobs: &[Pending], cap: &Rational) -> Vec<JobId> {
    let mut total: Rational = jobs.iter().map(|p| p.size.clone()).sum();
    if total <= *cap {
        return Vec::new();
    }
    let mut order: Vec<&Pending> = jobs.iter().collect();
    order.sort_by(|a, b| b.size.cmp(&a.size).then(b.rank.cmp(&a.rank)));
    let mut removed = Vec::new();
    for p in order {
        if total <= *cap {
            break;
        }
        total -= &p.size;
        removed.push(p.job);
    }
    removed
}

/// Stage 1 + Stage 2 for every residue class of size classes modulo Δ.
#[derive(Debug, Clone)]
pub struct Separated {
    alpha: Rational,
    t_star: Rational,
    delta: i64,
    /// `load_{i,l}` per (machine, size class); never reduced by pruning.
    stage1: BTreeMap<(usize, i64), Rational>,
    /// Surviving jobs per (sub-algorithm, machine).
    stage2: BTreeMap<(i64, usize), Vec<Pending>>,
    rejected: usize,
}

impl Separated {
    /// `params` should come from [`Params::lb_range`].
    pub fn new(params: &Params) -> Result<Self> {
        Ok(Separated {
            alpha: params.alpha.clone(),
            t_star: params.require_t_star()?.clone(),
            delta: params.delta,
            stage1: BTreeMap::new(),
            stage2: BTreeMap::new(),
            rejected: 0,
        })
    }

    pub fn t_star(&self) -> &Rational {
        &self.t_star
    }

    pub fn alpha(&self) -> &Rational {
        &self.alpha
    }

    pub fn delta(&self) -> i64 {
        self.delta
    }

    pub fn sub_algorithm(&self, class: i64) -> i64 {
        rem_euclid(class, self.delta)
    }

    pub fn stage1_load(&self, machine: usize, class: i64) -> Rational {
        self.stage1
            .get(&(machine, class))
            .cloned()
            .unwrap_or_else(Rational::zero)
    }

    pub fn stage1_loads(&self) -> &BTreeMap<(usize, i64), Rational> {
        &self.stage1
    }

    /// Pruned load of one sub-algorithm on one machine.
    pub fn stage2_load(&self, sub: i64, machine: usize) -> Rational {
        self.stage2
            .get(&(sub, machine))
            .map(|v| v.iter().map(|p| p.size.clone()).sum())
            .unwrap_or_else(Rational::zero)
    }

    /// Sum of pruned loads over every sub-algorithm on `machine`.
    pub fn composite_load(&self, machine: usize) -> Rational {
        self.stage2
            .iter()
            .filter(|((_, m), _)| *m == machine)
            .flat_map(|(_, v)| v.iter().map(|p| p.size.clone()))
            .sum()
    }

    pub fn rejected(&self) -> usize {
        self.rejected
    }

    /// Stage 1 alone: the least `load_{i,l}` machine unless all are full.
    pub fn stage1_dispatch(&self, job: &Job) -> Result<Decision> {
        let class = size_class(&job.size)?;
        let loads: Vec<Rational> = job.allowed.iter().map(|&i| self.stage1_load(i, class)).collect();
        let threshold = &self.alpha * &self.t_star;
        Ok(match argmin(loads.iter().enumerate()) {
            Some((k, load)) if *load < threshold => Decision::Dispatch {
                machine: job.allowed[k],
                level: load.clone(),
            },
            _ => Decision::Reject,
        })
    }

    /// Runs both stages for one arrival and returns the decision together with
    /// any jobs pruned as a consequence.
    pub fn admit(&mut self, job: &Job) -> Result<(Decision, Vec<JobId>)> {
        let decision = self.stage1_dispatch(job)?;
        let Decision::Dispatch { machine, .. } = &decision else {
            self.rejected += 1;
            return Ok((decision, Vec::new()));
        };
        let class = size_class(&job.size)?;
        *self.stage1.entry((*machine, class)).or_insert_with(Rational::zero) += &job.size;
        let sub = self.sub_algorithm(class);
        let queue = self.stage2.entry((sub, *machine)).or_default();
        queue.push(Pending {
            job: job.id,
            size: job.size.clone(),
            rank: job.rank,
        });
        let cap = int(2) * &self.alpha * &self.t_star;
        let pruned = stage2_prune(queue, &cap);
        queue.retain(|p| !pruned.contains(&p.job));
        self.rejected += pruned.len();
        Ok((decision, pruned))
    }
}

fn admission(decision: Decision, pruned: Vec<JobId>) -> Admission {
    let base = match decision {
        Decision::Dispatch { machine, level } => Admission::dispatch(machine, level),
        Decision::Reject => Admission::reject(),
    };
    base.then(pruned.into_iter().map(|job| Effect::Reject {
        job,
        reason: RejectReason::Pruned,
    }))
}

impl Policy for Separated {
    fn name(&self) -> &str {
        "lb-separated"
    }

    fn processes(&self) -> bool {
        false
    }

    fn queue_key(&self, job: &Job) -> QueueKey {
        QueueKey(job.size_class(), 0)
    }

    fn on_release(&mut self, job: &Job, _now: &Rational, _state: &MachineBank) -> Result<Admission> {
        let (decision, pruned) = self.admit(job)?;
        Ok(admission(decision, pruned))
    }

    fn select(&mut self, _machine: usize, _now: &Rational, _state: &MachineBank) -> Option<JobId> {
        None
    }
}

/// Runs [`Separated`] in phases, doubling `T*` whenever a phase rejects more
/// than an ε-fraction of its own arrivals. Jobs of earlier phases are ignored.
#[derive(Debug, Clone)]
pub struct LbDoubling {
    epsilon: Rational,
    phase: Option<Separated>,
    arrived: Rational,
    rejected: Rational,
    /// `T*` of every phase so far, in order.
    history: Vec<Rational>,
}

impl LbDoubling {
    pub fn new(epsilon: &Rational) -> Result<Self> {
        crate::model::check_epsilon(epsilon)?;
        Ok(LbDoubling {
            epsilon: epsilon.clone(),
            phase: None,
            arrived: Rational::zero(),
            rejected: Rational::zero(),
            history: Vec::new(),
        })
    }

    pub fn t_star(&self) -> Option<&Rational> {
        self.history.last()
    }

    pub fn phases(&self) -> &[Rational] {
        &self.history
    }

    pub fn current(&self) -> Option<&Separated> {
        self.phase.as_ref()
    }

    fn start_phase(&mut self, t_star: Rational) -> Result<()> {
        let params = Params::lb_range(&self.epsilon, Some(t_star.clone()))?;
        self.phase = Some(Separated::new(&params)?);
        self.arrived = Rational::zero();
        self.rejected = Rational::zero();
        self.history.push(t_star);
        Ok(())
    }
}

impl Policy for LbDoubling {
    fn name(&self) -> &str {
        "lb-doubling"
    }

    fn processes(&self) -> bool {
        false
    }

    fn queue_key(&self, job: &Job) -> QueueKey {
        QueueKey(job.size_class(), 0)
    }

    fn on_release(&mut self, job: &Job, _now: &Rational, _state: &MachineBank) -> Result<Admission> {
        let opening = self.phase.is_none();
        if opening {
            self.start_phase(job.size.clone())?;
        }
        let phase = self.phase.as_mut().expect("phase started");
        let (decision, pruned) = phase.admit(job)?;
        self.arrived += Rational::one();
        let lost = pruned.len() + usize::from(decision == Decision::Reject);
        self.rejected += int(lost as i64);
        let mut admission = admission(decision, pruned);
        if opening {
            admission.before.push(Effect::PhaseBoundary { t_star: job.size.clone() });
        }
        if exceeds_budget(&self.rejected, &self.arrived, &self.epsilon) {
            let next = int(2) * self.t_star().expect("phase started");
            self.start_phase(next.clone())?;
            admission.after.push(Effect::PhaseBoundary { t_star: next });
        }
        Ok(admission)
    }

    fn select(&mut self, _machine: usize, _now: &Rational, _state: &MachineBank) -> Option<JobId> {
        None
    }
}
