use num_traits::{One, Zero};

use super::machine::{MachineBank, Member, QueueKey};
use super::trace::{Event, RejectReason, Trace};
use crate::error::{Error, Result};
use crate::model::{Instance, Job, JobId};
use crate::rational::{fmt, Rational};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Decision {
    Dispatch { machine: usize, level: Rational },
    Reject,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Effect {
    Reject { job: JobId, reason: RejectReason },
    PhaseBoundary { t_star: Rational },
}

/// What a policy answers when a job arrives.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Admission {
    /// Applied before the decision is recorded.
    pub before: Vec<Effect>,
    pub decision: Decision,
    /// Applied after the decision, so they may name the arriving job.
    pub after: Vec<Effect>,
}

impl Admission {
    pub fn dispatch(machine: usize, level: Rational) -> Self {
        Admission {
            before: Vec::new(),
            decision: Decision::Dispatch { machine, level },
            after: Vec::new(),
        }
    }

    pub fn reject() -> Self {
        Admission {
            before: Vec::new(),
            decision: Decision::Reject,
            after: Vec::new(),
        }
    }

    pub fn then(mut self, effects: impl IntoIterator<Item = Effect>) -> Self {
        self.after.extend(effects);
        self
    }
}

/// An online scheduling algorithm driven by [`Simulation`].
///
/// Hooks must be deterministic in their arguments and the policy's own state.
pub trait Policy {
    fn name(&self) -> &str;

    /// `false` runs the policy in dispatch-only mode: nothing is ever processed.
    fn processes(&self) -> bool {
        true
    }

    fn queue_key(&self, job: &Job) -> QueueKey;

    /// Factor turning remaining processing time into queue load.
    fn load_factor(&self, _job: &Job) -> Rational {
        Rational::one()
    }

    fn on_release(&mut self, job: &Job, now: &Rational, state: &MachineBank) -> Result<Admission>;

    /// Job to run on `machine` from `now` on, or `None` to idle.
    fn select(&mut self, machine: usize, now: &Rational, state: &MachineBank) -> Option<JobId>;

    /// Called whenever the clock moves forward, after real progress is applied.
    fn sync(&mut self, _now: &Rational, _state: &MachineBank) -> Result<()> {
        Ok(())
    }

    /// Called once per event instant, after that instant's releases.
    fn on_tick(&mut self, _now: &Rational, _state: &MachineBank) -> Result<Vec<Effect>> {
        Ok(Vec::new())
    }

    /// Earliest future instant (strictly after `now`) the policy wants to be woken.
    fn next_wakeup(&self, _now: &Rational) -> Option<Rational> {
        None
    }

    fn on_complete(&mut self, _job: JobId, _machine: usize, _now: &Rational) {}

    /// Told about every rejection the engine applies, including the policy's own.
    fn on_reject(&mut self, _job: JobId, _now: &Rational) {}

    /// Multiplier `s` of the queue priority `s * load`. Returning `Some` makes
    /// the engine schedule crossing events for the running queue.
    fn priority_scale(&self, _key: &QueueKey) -> Option<Rational> {
        None
    }

    /// `true` re-selects a machine only at its own events (an arrival or
    /// removal there, or its running job's completion or crossing). Policies
    /// whose choice depends on outside state keep the default and are asked
    /// on every machine at every event.
    fn local_selection(&self) -> bool {
        false
    }
}

/// Outcome of one release, as observed by an online adversary.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReleaseOutcome {
    pub decision: Decision,
    /// Jobs rejected as a side effect of this release (pruning, etc.).
    pub rejected: Vec<JobId>,
}

#[derive(Debug, Clone)]
struct Run {
    job: JobId,
    start: Rational,
}

/// Step-wise event-driven simulator.
///
/// Same-instant ordering: completions, then releases in rank order, then the
/// policy tick, then re-selection (on every machine, or on the machines with
/// an own event for policies with [`Policy::local_selection`]).
pub struct Simulation<P: Policy> {
    policy: P,
    bank: MachineBank,
    now: Rational,
    ticked: bool,
    running: Vec<Option<Run>>,
    trace: Trace,
    last_release: Option<(Rational, u64)>,
    released_work: Rational,
    dirty: Vec<bool>,
}

impl<P: Policy> Simulation<P> {
    pub fn new(policy: P, machines: usize) -> Self {
        Self::starting_at(policy, machines, Rational::zero())
    }

    pub fn starting_at(policy: P, machines: usize, start: Rational) -> Self {
        let trace = Trace::new(policy.name(), machines);
        Simulation {
            policy,
            bank: MachineBank::new(machines),
            now: start,
            ticked: true,
            running: vec![None; machines],
            trace,
            last_release: None,
            released_work: Rational::zero(),
            dirty: vec![true; machines],
        }
    }

    pub fn now(&self) -> &Rational {
        &self.now
    }

    pub fn policy(&self) -> &P {
        &self.policy
    }

    pub fn bank(&self) -> &MachineBank {
        &self.bank
    }

    pub fn trace(&self) -> &Trace {
        &self.trace
    }

    pub fn into_trace(self) -> Trace {
        self.trace
    }

    pub fn into_parts(self) -> (P, Trace) {
        (self.policy, self.trace)
    }

    /// Job currently being processed on `machine`.
    pub fn running(&self, machine: usize) -> Option<JobId> {
        self.running[machine].as_ref().map(|r| r.job)
    }

    /// Releases `job` at its release time, advancing the clock first.
    pub fn release(&mut self, job: &Job) -> Result<ReleaseOutcome> {
        if job.release < self.now {
            return Err(Error::ProtocolViolation(format!(
                "job {} released at {} but the clock is at {}",
                job.id,
                fmt(&job.release),
                fmt(&self.now)
            )));
        }
        if let Some((r, rank)) = &self.last_release {
            if (r, *rank) >= (&job.release, job.rank) {
                return Err(Error::InvalidInstance(format!(
                    "job {} breaks (release, rank) order",
                    job.id
                )));
            }
        }
        if job.allowed.is_empty() || job.allowed.iter().any(|&m| m >= self.bank.len()) {
            return Err(Error::InvalidInstance(format!("job {} has a bad allowed set", job.id)));
        }
        self.advance_to(&job.release)?;
        self.last_release = Some((job.release.clone(), job.rank));
        self.released_work += &job.size;
        self.ticked = false;

        let admission = self.policy.on_release(job, &self.now, &self.bank)?;
        let mut rejected = Vec::new();
        self.apply(admission.before, &mut rejected)?;
        match &admission.decision {
            Decision::Dispatch { machine, level } => {
                if !job.can_run_on(*machine) {
                    return Err(Error::ProtocolViolation(format!(
                        "job {} dispatched to machine {} outside its allowed set",
                        job.id, machine
                    )));
                }
                self.trace.events.push(Event::Dispatch {
                    time: self.now.clone(),
                    job: job.id,
                    machine: *machine,
                    level: level.clone(),
                    backlog: self.bank.machine(*machine).backlog.clone(),
                });
                let key = self.policy.queue_key(job);
                let factor = self.policy.load_factor(job);
                self.bank.insert(*machine, key, Member::from_job(job, factor));
                self.dirty[*machine] = true;
            }
            Decision::Reject => {
                self.trace.events.push(Event::RejectAtArrival {
                    time: self.now.clone(),
                    job: job.id,
                });
                self.policy.on_reject(job.id, &self.now);
            }
        }
        self.apply(admission.after, &mut rejected)?;
        Ok(ReleaseOutcome {
            decision: admission.decision,
            rejected,
        })
    }

    fn apply(&mut self, effects: Vec<Effect>, rejected: &mut Vec<JobId>) -> Result<()> {
        for effect in effects {
            match effect {
                Effect::Reject { job, reason } => {
                    let Some((machine, _)) = self.bank.remove(job) else {
                        return Err(Error::ProtocolViolation(format!(
                            "policy rejected job {job} which is not pending"
                        )));
                    };
                    self.dirty[machine] = true;
                    if self.running(machine) == Some(job) {
                        self.close_slice(machine);
                        self.running[machine] = None;
                    }
                    self.trace.events.push(Event::RejectLater {
                        time: self.now.clone(),
                        job,
                        reason,
                    });
                    self.policy.on_reject(job, &self.now);
                    rejected.push(job);
                }
                Effect::PhaseBoundary { t_star } => self.trace.events.push(Event::PhaseBoundary {
                    time: self.now.clone(),
                    t_star,
                }),
            }
        }
        Ok(())
    }

    fn close_slice(&mut self, machine: usize) {
        if let Some(run) = &self.running[machine] {
            if run.start < self.now {
                self.trace.events.push(Event::ProcessSlice {
                    machine,
                    job: run.job,
                    start: run.start.clone(),
                    end: self.now.clone(),
                });
            }
        }
    }

    /// Runs the pending tick at `now` (if any) and re-selects on every machine.
    pub fn settle(&mut self) -> Result<()> {
        if !self.ticked {
            self.ticked = true;
            let effects = self.policy.on_tick(&self.now, &self.bank)?;
            let mut sink = Vec::new();
            self.apply(effects, &mut sink)?;
        }
        if !self.policy.processes() {
            return Ok(());
        }
        let local = self.policy.local_selection();
        for machine in 0..self.bank.len() {
            if local && !std::mem::take(&mut self.dirty[machine]) {
                continue;
            }
            let choice = self.policy.select(machine, &self.now, &self.bank);
            if let Some(job) = choice {
                if self.bank.location(job).map(|(m, _)| m) != Some(machine) {
                    return Err(Error::ProtocolViolation(format!(
                        "policy selected job {job} which is not pending on machine {machine}"
                    )));
                }
            }
            let current = self.running(machine);
            if current != choice {
                self.close_slice(machine);
                self.running[machine] = choice.map(|job| Run {
                    job,
                    start: self.now.clone(),
                });
            }
        }
        Ok(())
    }

    /// Earliest internal event strictly after `now`.
    pub fn next_event_time(&self) -> Option<Rational> {
        let mut best: Option<Rational> = None;
        let mut offer = |t: Rational| {
            if best.as_ref().map_or(true, |b| &t < b) {
                best = Some(t);
            }
        };
        for (machine, run) in self.running.iter().enumerate() {
            let Some(run) = run else { continue };
            let member = self.bank.member(run.job).expect("running job is pending");
            let completion = &self.now + &member.remaining;
            if let Some(t) = self.crossing(machine, run.job, &completion) {
                offer(t);
            }
            offer(completion);
        }
        if let Some(t) = self.policy.next_wakeup(&self.now) {
            if t > self.now {
                offer(t);
            }
        }
        best
    }

    fn crossing(&self, machine: usize, job: JobId, completion: &Rational) -> Option<Rational> {
        let (_, key) = self.bank.location(job)?;
        let scale = self.policy.priority_scale(&key)?;
        let state = self.bank.machine(machine);
        let queue = state.queue(&key)?;
        let member = self.bank.member(job)?;
        let rivals: Vec<(QueueKey, Rational)> = state
            .queues
            .values()
            .filter(|q| q.key != key)
            .filter_map(|q| Some((q.key, self.policy.priority_scale(&q.key)? * &q.load)))
            .collect();
        let t = next_crossing(&self.now, &key, &queue.load, &scale, &member.load_factor, &rivals)?;
        (t < *completion && t > self.now).then_some(t)
    }

    fn step_to(&mut self, t: Rational) -> Result<()> {
        debug_assert!(t >= self.now);
        for machine in 0..self.bank.len() {
            let crossing = self.running[machine].as_ref().and_then(|run| {
                let member = self.bank.member(run.job)?;
                self.crossing(machine, run.job, &(&self.now + &member.remaining))
            });
            if crossing.as_ref() == Some(&t) {
                self.dirty[machine] = true;
            }
        }
        let dt = &t - &self.now;
        if !dt.is_zero() {
            for run in self.running.iter().flatten() {
                self.bank.progress(run.job, &dt);
            }
        }
        self.now = t;
        self.policy.sync(&self.now, &self.bank)?;
        for machine in 0..self.bank.len() {
            let done = match &self.running[machine] {
                Some(run) => self.bank.member(run.job).is_some_and(|m| m.remaining.is_zero()),
                None => false,
            };
            if done {
                self.close_slice(machine);
                let job = self.running[machine].take().expect("checked above").job;
                self.bank.remove(job);
                self.dirty[machine] = true;
                self.trace.events.push(Event::Complete {
                    time: self.now.clone(),
                    job,
                });
                self.policy.on_complete(job, machine, &self.now);
            }
        }
        self.ticked = false;
        Ok(())
    }

    /// Processes every internal event before `t`, then moves the clock to `t`
    /// (applying completions due exactly at `t`).
    pub fn advance_to(&mut self, t: &Rational) -> Result<()> {
        loop {
            self.settle()?;
            match self.next_event_time() {
                Some(e) if &e < t => self.step_to(e)?,
                _ => break,
            }
        }
        if *t > self.now {
            self.step_to(t.clone())?;
        }
        Ok(())
    }

    /// Settles, then moves to the next internal event if it lies strictly
    /// before `limit` (or anywhere, without a limit). Returns whether it moved.
    pub fn step_before(&mut self, limit: Option<&Rational>) -> Result<bool> {
        self.settle()?;
        match self.next_event_time() {
            Some(e) if limit.map_or(true, |l| &e < l) => {
                self.step_to(e)?;
                Ok(true)
            }
            _ => Ok(false),
        }
    }

    /// Runs until no pending work remains (or, in dispatch-only mode, until
    /// the last tick has been applied).
    pub fn finish(&mut self) -> Result<()> {
        let horizon = self
            .last_release
            .as_ref()
            .map(|(r, _)| r.clone())
            .unwrap_or_else(|| self.now.clone())
            + &self.released_work
            + Rational::one();
        loop {
            self.settle()?;
            if !self.policy.processes() || self.bank.is_empty() {
                break;
            }
            match self.next_event_time() {
                Some(e) if e <= horizon => self.step_to(e)?,
                _ => return Err(Error::NoQuiescence(fmt(&self.now))),
            }
        }
        Ok(())
    }
}

/// Runs `policy` over the whole instance and returns the trace.
pub fn simulate<P: Policy>(policy: P, instance: &Instance) -> Result<Trace> {
    Ok(run(policy, instance)?.into_trace())
}

/// Like [`simulate`] but hands back the finished simulation for inspection.
pub fn run<P: Policy>(policy: P, instance: &Instance) -> Result<Simulation<P>> {
    instance.ensure_valid()?;
    let mut sim = Simulation::new(policy, instance.machines);
    for job in &instance.jobs {
        sim.release(job)?;
    }
    sim.finish()?;
    Ok(sim)
}

/// Earliest time at which a rival queue overtakes the draining queue `current`.
///
/// The draining priority is `scale * (load - rate * (t - now))`; rival
/// priorities are static. A rival with a smaller key wins ties, so it takes
/// over once the priorities meet. A rival with a larger key would only win
/// strictly after meeting, which would make the two queues alternate without
/// bound; such rivals are left to the next ordinary event and ignored here.
pub fn next_crossing(
    now: &Rational,
    current: &QueueKey,
    load: &Rational,
    scale: &Rational,
    rate: &Rational,
    rivals: &[(QueueKey, Rational)],
) -> Option<Rational> {
    let draining = scale * load;
    let slope = scale * rate;
    rivals
        .iter()
        .filter_map(|(key, priority)| {
            if priority > &draining {
                return Some(now.clone());
            }
            if key > current || slope.is_zero() {
                return None;
            }
            Some(now + (&draining - priority) / &slope)
        })
        .min()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::{int, pow2, rat};

    #[test]
    fn crossing_single_queue_is_absent() {
        assert_eq!(
            next_crossing(&int(0), &QueueKey(0, 1), &int(5), &int(2), &int(1), &[]),
            None
        );
    }

    #[test]
    fn crossing_solves_the_linear_equation() {
        // Priority 10 - (t - t0) * 2^d against a static rival at 6, d = 2.
        let d = 2;
        let t0 = rat(3, 2);
        let load = int(10) / pow2(d);
        let t = next_crossing(&t0, &QueueKey(0, 5), &load, &pow2(d), &int(1), &[(QueueKey(0, 1), int(6))]);
        assert_eq!(t, Some(&t0 + int(4) / pow2(d)));
    }

    #[test]
    fn crossing_immediate_when_rival_already_ahead() {
        let t = next_crossing(&int(7), &QueueKey(0, 0), &int(3), &int(1), &int(1), &[(QueueKey(9, 9), int(4))]);
        assert_eq!(t, Some(int(7)));
    }

    #[test]
    fn crossing_ignores_larger_key_rivals_until_strictly_ahead() {
        let t = next_crossing(&int(0), &QueueKey(0, 0), &int(3), &int(1), &int(1), &[(QueueKey(1, 0), int(2))]);
        assert_eq!(t, None);
    }
}
