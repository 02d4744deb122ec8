use std::collections::BinaryHeap;

use num_traits::Zero;

use super::{AdversaryReport, Recorder};
use crate::engine::{Policy, Simulation};
use crate::error::{Error, Result};
use crate::model::{check_epsilon, ProblemKind};
use crate::rational::{floor, int, Rational};

/// Result of one load-increasing gadget.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GadgetOutcome {
    /// The gadget's machines relabeled by the policy's choices: label `k`
    /// holds `k` jobs for `k < m`, and label `m` holds `m + 1`.
    pub labels: Vec<usize>,
    pub jobs_released: usize,
}

/// The max-flow-time construction against an immediate-dispatch policy on
/// unit jobs. Exposes the gadget and the stage procedure for step-wise use.
pub struct FlowAdversary<P: Policy> {
    rec: Recorder<P>,
    t: Rational,
    /// `stack[k]` is the machine holding `k + 1` jobs at a stage boundary.
    stack: Vec<usize>,
    stage_jobs: Vec<usize>,
}

impl<P: Policy> FlowAdversary<P> {
    pub fn new(policy: P, machines: usize) -> Self {
        FlowAdversary {
            rec: Recorder::new(policy, machines),
            t: Rational::zero(),
            stack: Vec::new(),
            stage_jobs: Vec::new(),
        }
    }

    pub fn simulation(&self) -> &Simulation<P> {
        &self.rec.sim
    }

    /// The adversary's clock: the earliest time of the next release.
    pub fn time(&self) -> &Rational {
        &self.t
    }

    pub fn jobs_released(&self) -> usize {
        self.rec.jobs.len()
    }

    /// Machines holding `1, 2, ...` jobs at the last stage boundary.
    pub fn stack(&self) -> &[usize] {
        &self.stack
    }

    /// Queue length of `machine` at time `t`, after completions at `t`.
    pub fn queue_at(&mut self, machine: usize, t: &Rational) -> Result<usize> {
        self.rec.sim.advance_to(t)?;
        Ok(self.rec.sim.bank().machine(machine).pending_count())
    }

    /// Releases one unit job. A rejection in the middle of a stage aborts the
    /// construction; the queue bookkeeping assumes every job stays.
    pub fn release_unit(
        &mut self,
        t: &Rational,
        allowed: Vec<usize>,
        offline: impl FnOnce(Option<usize>) -> usize,
    ) -> Result<Option<usize>> {
        let online = self.rec.release(t, int(1), allowed, offline)?;
        if let Some(job) = self.rec.new_rejection() {
            return Err(Error::GadgetPrecondition(format!(
                "policy rejected job {job} in the middle of a stage"
            )));
        }
        Ok(online)
    }

    fn single(&mut self, t: &Rational, machine: usize) -> Result<()> {
        self.release_unit(t, vec![machine], |_| machine).map(|_| ())
    }

    fn expect_queue(&mut self, machine: usize, t: &Rational, want: usize) -> Result<()> {
        let got = self.queue_at(machine, t)?;
        if got == want {
            Ok(())
        } else {
            Err(Error::GadgetPrecondition(format!(
                "machine {machine} holds {got} jobs at time {t}, expected {want}"
            )))
        }
    }

    /// Runs the gadget at time `t` on `machines[k]` holding `k` jobs each,
    /// keeping `busy` machines at their queue length during `[t, t + 2]`.
    /// The two-machine job `j_i` goes offline to the machine the policy did
    /// not choose.
    pub fn increase_load(&mut self, t: &Rational, machines: &[usize], busy: &[usize]) -> Result<GadgetOutcome> {
        let m = machines.len().checked_sub(1).filter(|&m| m >= 1).ok_or_else(|| {
            Error::GadgetPrecondition("the gadget needs at least two machines".into())
        })?;
        for (k, &i) in machines.iter().enumerate() {
            self.expect_queue(i, t, k)?;
        }
        let before = self.jobs_released();
        let mut lab = machines.to_vec();

        self.single(t, lab[0])?;
        for i in 1..=m {
            let (a, b) = (lab[i - 1], lab[i]);
            let online = self.release_unit(t, vec![a, b], |o| if o == Some(a) { b } else { a })?;
            if online == Some(a) {
                lab.swap(i - 1, i);
            }
        }
        for &i in busy {
            self.single(t, i)?;
        }
        let t1 = t + int(1);
        self.single(&t1, lab[m])?;
        for &i in busy {
            self.single(&t1, i)?;
        }
        let t2 = t + int(2);
        for &i in &lab[1..] {
            self.single(&t2, i)?;
        }
        for (k, &i) in lab.iter().enumerate() {
            let want = if k == m { m + 1 } else { k };
            self.expect_queue(i, &t2, want)?;
        }
        Ok(GadgetOutcome {
            labels: lab,
            jobs_released: self.jobs_released() - before,
        })
    }

    /// Stage `l`: turns machines holding `1..=l` jobs into machines holding
    /// `1..=l+1`, using two idle machines.
    pub fn stage(&mut self) -> Result<()> {
        let l = self.stack.len();
        let machines = self.rec.sim.bank().len();
        if machines < l + 2 {
            return Err(Error::GadgetPrecondition(format!("stage {l} needs {} machines", l + 2)));
        }
        let t = self.t.clone();
        for i in 0..machines {
            let want = self.stack.iter().position(|&s| s == i).map_or(0, |k| k + 1);
            self.expect_queue(i, &t, want)?;
        }
        let before = self.jobs_released();
        let idle: Vec<usize> = (0..machines).filter(|i| !self.stack.contains(i)).collect();
        let mut ms: Vec<usize> = std::iter::once(idle[0]).chain(self.stack.iter().copied()).collect();

        let mut t = t;
        for i in (1..=l).rev() {
            let busy = ms[i + 1..].to_vec();
            let out = self.increase_load(&t, &ms[..=i], &busy)?;
            ms[..=i].copy_from_slice(&out.labels);
            t += int(2);
        }
        let spare = *idle.iter().find(|i| !ms.contains(i)).expect("l + 2 machines");
        let m0 = ms[0];
        let online = self.release_unit(&t, vec![m0, spare], |o| if o == Some(spare) { m0 } else { spare })?;
        if online == Some(spare) {
            ms[0] = spare;
        }
        for &i in &ms {
            self.single(&t, i)?;
        }
        self.t = t + int(1);
        self.stack = ms;
        self.stage_jobs.push(self.jobs_released() - before);
        Ok(())
    }

    pub fn stage_jobs(&self) -> &[usize] {
        &self.stage_jobs
    }

    /// Queue lengths of all machines at the adversary's current time.
    pub fn queues(&mut self) -> Result<Vec<usize>> {
        let t = self.t.clone();
        self.rec.sim.advance_to(&t)?;
        Ok(self.rec.sim.bank().machines().iter().map(|s| s.pending_count()).collect())
    }

    pub fn into_report(mut self, epsilon: &Rational) -> Result<AdversaryReport> {
        let queues = self.queues()?;
        let loads: Vec<Rational> = queues.iter().map(|&q| int(q as i64)).collect();
        let online = loads.iter().max().cloned().unwrap_or_default();
        let stages = self.stage_jobs.len();
        self.rec.finish(
            ProblemKind::MaxFlowTime,
            epsilon,
            online,
            int(3),
            (stages, self.stage_jobs, Vec::new()),
            loads,
        )
    }
}

/// `Δ = ⌊1/(2ε)⌋` machines and `Δ - 2` stages; afterwards the policy holds
/// queues of length `1..=Δ-2` while an offline schedule never queues more
/// than 3 jobs on a machine.
pub fn adv_maxflow<P: Policy>(epsilon: &Rational, policy: P) -> Result<AdversaryReport> {
    check_epsilon(epsilon)?;
    let delta: usize = floor(&(int(2) * epsilon).recip())
        .try_into()
        .map_err(|_| Error::InvalidArgument("epsilon too small".into()))?;
    if delta < 3 {
        return Err(Error::InvalidArgument("need epsilon ≤ 1/6 for at least one stage".into()));
    }
    let mut adv = FlowAdversary::new(policy, delta);
    for _ in 0..delta - 2 {
        adv.stage()?;
    }
    adv.into_report(epsilon)
}

/// Smallest possible maximum queue after deleting at most `budget` jobs.
pub fn max_after_deletions(loads: &[i64], budget: usize) -> i64 {
    let mut heap: BinaryHeap<i64> = loads.iter().copied().collect();
    for _ in 0..budget {
        match heap.pop() {
            Some(top) if top > 0 => heap.push(top - 1),
            Some(top) => {
                heap.push(top);
                break;
            }
            None => break,
        }
    }
    heap.peek().copied().unwrap_or(0)
}
