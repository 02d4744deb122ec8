//! Adaptive lower-bound constructions. Each adversary drives a live
//! [`Simulation`], releasing the next jobs only after observing the policy's
//! previous decisions, and records an offline assignment that certifies a
//! small offline objective.

mod flow;
mod load;

use std::collections::BTreeMap;

use num_traits::Zero;

pub use flow::{adv_maxflow, max_after_deletions, FlowAdversary, GadgetOutcome};
pub use load::{adv_load_immediate, adv_load_unit};

use crate::engine::{simulate, Admission, Decision, Event, MachineBank, Policy, QueueKey, Simulation, Trace};
use crate::error::{Error, Result};
use crate::model::{Instance, Job, JobId, ProblemKind};
use crate::oracle::pending_profile;
use crate::rational::{int, Rational};

#[derive(Debug, Clone)]
pub struct AdversaryReport {
    /// Every job the adversary released, in release order.
    pub generated_instance: Instance,
    /// Maximum load (or queue length) forced on the policy.
    pub online_objective: Rational,
    /// The offline value the construction guarantees.
    pub offline_objective_bound: Rational,
    pub rejection_fraction_used: Rational,
    pub phases_completed: usize,
    /// Jobs released in each completed phase or stage.
    pub phase_jobs: Vec<usize>,
    /// Size of the surviving machine set at the start of each phase (load
    /// adversaries only).
    pub phase_machines: Vec<usize>,
    /// Per-machine online load (or queue length) when the construction ends.
    pub final_loads: Vec<Rational>,
    /// Offline machine of each job of `generated_instance`.
    pub offline_assignment: Vec<usize>,
    /// The policy's full run on the generated instance.
    pub trace: Trace,
}

impl AdversaryReport {
    pub fn rejected_count(&self) -> usize {
        self.trace.rejected_jobs().len()
    }
}

/// Releases jobs into a live simulation and keeps the instance and the
/// offline assignment in step with it.
pub(crate) struct Recorder<P: Policy> {
    pub sim: Simulation<P>,
    pub jobs: Vec<Job>,
    pub offline: Vec<usize>,
    seen: usize,
}

impl<P: Policy> Recorder<P> {
    pub fn new(policy: P, machines: usize) -> Self {
        Recorder {
            sim: Simulation::new(policy, machines),
            jobs: Vec::new(),
            offline: Vec::new(),
            seen: 0,
        }
    }

    /// Releases one job and returns the machine the policy dispatched it to.
    /// `offline` picks the job's offline machine given that choice.
    pub fn release(
        &mut self,
        t: &Rational,
        size: Rational,
        allowed: Vec<usize>,
        offline: impl FnOnce(Option<usize>) -> usize,
    ) -> Result<Option<usize>> {
        let job = Job::new(self.jobs.len() as JobId, t.clone(), size, allowed);
        let outcome = self.sim.release(&job)?;
        let online = match outcome.decision {
            Decision::Dispatch { machine, .. } => Some(machine),
            Decision::Reject => None,
        };
        let o = offline(online);
        debug_assert!(job.can_run_on(o));
        self.offline.push(o);
        self.jobs.push(job);
        Ok(online)
    }

    /// First rejection recorded since the previous call, if any.
    pub fn new_rejection(&mut self) -> Option<JobId> {
        let events = &self.sim.trace().events;
        let found = events[self.seen..].iter().find(|e| e.is_rejection()).and_then(|e| e.job());
        self.seen = events.len();
        found
    }

    /// First later (non-arrival) rejection since the previous call, if any.
    pub fn new_later_rejection(&mut self) -> Option<JobId> {
        let events = &self.sim.trace().events;
        let found = events[self.seen..].iter().find_map(|e| match e {
            Event::RejectLater { job, .. } => Some(*job),
            _ => None,
        });
        self.seen = events.len();
        found
    }

    pub fn finish(
        mut self,
        kind: ProblemKind,
        epsilon: &Rational,
        online_objective: Rational,
        offline_bound: Rational,
        phases: (usize, Vec<usize>, Vec<usize>),
        final_loads: Vec<Rational>,
    ) -> Result<AdversaryReport> {
        self.sim.finish()?;
        let machines = self.sim.bank().len();
        let trace = self.sim.into_trace();
        let n = self.jobs.len();
        let rejected = trace.rejected_jobs().len();
        let rejection_fraction_used = if n == 0 {
            Rational::zero()
        } else {
            int(rejected as i64) / int(n as i64)
        };
        Ok(AdversaryReport {
            generated_instance: Instance::new(machines, epsilon.clone(), kind, self.jobs),
            online_objective,
            offline_objective_bound: offline_bound,
            rejection_fraction_used,
            phases_completed: phases.0,
            phase_jobs: phases.1,
            phase_machines: phases.2,
            final_loads,
            offline_assignment: self.offline,
            trace,
        })
    }
}

/// Dispatches every job to a fixed machine and processes each machine FIFO.
#[derive(Debug, Clone)]
pub struct Assigned {
    machine_of: BTreeMap<JobId, usize>,
}

impl Assigned {
    pub fn new(instance: &Instance, assignment: &[usize]) -> Result<Self> {
        if assignment.len() != instance.jobs.len() {
            return Err(Error::InvalidArgument("assignment length differs from job count".into()));
        }
        for (j, &m) in instance.jobs.iter().zip(assignment) {
            if !j.can_run_on(m) {
                return Err(Error::InvalidArgument(format!("job {} assigned outside its allowed set", j.id)));
            }
        }
        Ok(Assigned {
            machine_of: instance.jobs.iter().map(|j| j.id).zip(assignment.iter().copied()).collect(),
        })
    }
}

impl Policy for Assigned {
    fn name(&self) -> &str {
        "offline"
    }

    fn queue_key(&self, _job: &Job) -> QueueKey {
        QueueKey::FIFO
    }

    fn on_release(&mut self, job: &Job, _now: &Rational, _state: &MachineBank) -> Result<Admission> {
        let machine = self.machine_of[&job.id];
        Ok(Admission::dispatch(machine, Rational::zero()))
    }

    fn select(&mut self, machine: usize, _now: &Rational, state: &MachineBank) -> Option<JobId> {
        state.machine(machine).queue(&QueueKey::FIFO)?.head().map(|m| m.job)
    }
}

/// Maximum total size assigned to one machine.
pub fn witness_max_load(instance: &Instance, assignment: &[usize]) -> Result<Rational> {
    Assigned::new(instance, assignment)?;
    let mut loads = vec![Rational::zero(); instance.machines];
    for (j, &m) in instance.jobs.iter().zip(assignment) {
        loads[m] += &j.size;
    }
    Ok(loads.into_iter().max().unwrap_or_default())
}

/// Runs the assignment FIFO and returns the largest end-of-instant queue length.
pub fn witness_max_queue(instance: &Instance, assignment: &[usize]) -> Result<i64> {
    let trace = simulate(Assigned::new(instance, assignment)?, instance)?;
    let end = trace.events.last().map(|e| e.time().clone()).unwrap_or_default();
    Ok(pending_profile(&trace, &end)?
        .iter()
        .flatten()
        .map(|(_, c)| *c)
        .max()
        .unwrap_or(0))
}
