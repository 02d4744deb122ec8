use std::collections::{BTreeMap, BTreeSet};

use num_traits::Zero;

use super::alg_a::{AlgA, Variant};
use crate::engine::{Admission, Decision, Effect, MachineBank, Policy, QueueKey, RejectReason, Simulation};
use crate::error::Result;
use crate::metrics::exceeds_budget;
use crate::model::{log_inv_eps, size_class, Job, JobId, Params};
use crate::rational::{ceil, floor, int, pow2, Rational};

/// The foreground scheduler B, driven by a shadow run of A.
///
/// A sees every arrival and decides dispatch; B copies those decisions,
/// chooses what to process from A's current density class, and rejects jobs
/// that outlive the segment after their release segment. The generalized
/// variant additionally rejects every `⌈1/ε⌉`-th dispatched job of each
/// (flow-weight class, rejection-density class, size class) triple.
///
/// Without a known `T*` the policy runs in phases: `T` starts at the first
/// job's weighted size and doubles whenever A rejects more than an ε-fraction
/// of the phase's arrived weight. Each phase gets a fresh A; B keeps its
/// pending jobs and treats them as released at the phase start.
pub struct Coupled {
    variant: Variant,
    epsilon: Rational,
    alpha: Rational,
    t: Option<Rational>,
    doubling: bool,
    offset: i64,
    every: u64,
    shadow: Option<Simulation<AlgA>>,
    deadlines: BTreeSet<(Rational, JobId)>,
    deadline_of: BTreeMap<JobId, Rational>,
    counters: BTreeMap<(i64, i64, i64), u64>,
    phase_arrived: Rational,
    phase_rejected: Rational,
    phases: Vec<(Rational, Rational)>,
    name: &'static str,
}

impl Coupled {
    /// `t_star = None` selects the doubling wrapper.
    pub fn new(epsilon: &Rational, t_star: Option<Rational>, variant: Variant) -> Result<Self> {
        let params = Params::alg_a(epsilon, t_star.clone())?;
        let log = log_inv_eps(epsilon)?;
        let offset = match variant {
            Variant::Weighted => log,
            Variant::Generalized => 2 * log,
        };
        let every: u64 = ceil(&epsilon.recip()).try_into().expect("1/ε fits in u64");
        let doubling = t_star.is_none();
        let name = match (variant, doubling) {
            (Variant::Weighted, false) => "ab",
            (Variant::Weighted, true) => "ab-doubling",
            (Variant::Generalized, false) => "gen-ab",
            (Variant::Generalized, true) => "gen-ab-doubling",
        };
        let phases = t_star.iter().map(|t| (Rational::zero(), t.clone())).collect();
        Ok(Coupled {
            variant,
            epsilon: epsilon.clone(),
            alpha: params.alpha,
            t: t_star,
            doubling,
            offset,
            every,
            shadow: None,
            deadlines: BTreeSet::new(),
            deadline_of: BTreeMap::new(),
            counters: BTreeMap::new(),
            phase_arrived: Rational::zero(),
            phase_rejected: Rational::zero(),
            phases,
            name,
        })
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    /// Current estimate (or the known value) of `T*`.
    pub fn t_star(&self) -> Option<&Rational> {
        self.t.as_ref()
    }

    /// `(start time, T)` of every phase.
    pub fn phases(&self) -> &[(Rational, Rational)] {
        &self.phases
    }

    pub fn alpha(&self) -> &Rational {
        &self.alpha
    }

    /// The shadow run of A for the current phase.
    pub fn shadow(&self) -> Option<&Simulation<AlgA>> {
        self.shadow.as_ref()
    }

    /// Density-class offset B uses to prefer much denser jobs.
    pub fn offset(&self) -> i64 {
        self.offset
    }

    pub fn every(&self) -> u64 {
        self.every
    }

    pub fn counters(&self) -> &BTreeMap<(i64, i64, i64), u64> {
        &self.counters
    }

    pub fn deadline(&self, job: JobId) -> Option<&Rational> {
        self.deadline_of.get(&job)
    }

    /// Segment length for weight class `w` under the current `T`.
    pub fn segment_pitch(&self, w: i64) -> Option<Rational> {
        let t = self.t.as_ref()?;
        let a2 = &self.alpha * &self.alpha;
        let e = &self.epsilon;
        Some(match self.variant {
            Variant::Weighted => a2 * t / (e * e * pow2(w)),
            Variant::Generalized => int(6) * (a2 + int(2)) * t / (e * e * e * e * pow2(w)),
        })
    }

    /// Density class of the job A is processing on `machine`.
    pub fn d_a(&self, machine: usize) -> Option<i64> {
        let shadow = self.shadow.as_ref()?;
        let job = shadow.running(machine)?;
        shadow.bank().location(job).map(|(_, k)| k.1)
    }

    fn fresh_shadow(&self, t: &Rational, machines: usize, now: &Rational) -> Result<Simulation<AlgA>> {
        let params = Params::alg_a(&self.epsilon, Some(t.clone()))?;
        Ok(Simulation::starting_at(AlgA::new(&params, self.variant)?, machines, now.clone()))
    }

    fn set_deadline(&mut self, job: JobId, w: i64, released: &Rational) {
        let pitch = self.segment_pitch(w).expect("phase started");
        let segment = Rational::from_integer(floor(&(released / &pitch)));
        let deadline = (segment + int(2)) * pitch;
        if let Some(old) = self.deadline_of.insert(job, deadline.clone()) {
            self.deadlines.remove(&(old, job));
        }
        self.deadlines.insert((deadline, job));
    }

    fn forget(&mut self, job: JobId) {
        if let Some(d) = self.deadline_of.remove(&job) {
            self.deadlines.remove(&(d, job));
        }
    }

    fn weighted_size(&self, job: &Job) -> Rational {
        match self.variant {
            Variant::Weighted => &job.weight * &job.size,
            Variant::Generalized => &job.flow_weight * &job.size,
        }
    }

    /// B's processing rule.
    pub fn choose(&self, machine: usize, state: &MachineBank) -> Option<JobId> {
        let m = state.machine(machine);
        let earliest_head = |keep: &dyn Fn(&QueueKey) -> bool| {
            m.queues
                .values()
                .filter(|q| keep(&q.key))
                .filter_map(|q| q.head())
                .min_by(|a, b| (&a.release, a.rank).cmp(&(&b.release, b.rank)))
                .map(|h| h.job)
        };
        if let Some(d) = self.d_a(machine) {
            let dense = m
                .queues
                .keys()
                .filter(|k| k.1 >= d + self.offset)
                .map(|k| k.1)
                .max();
            if let Some(top) = dense {
                return earliest_head(&|k| k.1 == top);
            }
            let heaviest = m.queues.keys().filter(|k| k.1 == d).map(|k| k.0).max();
            if let Some(w) = heaviest {
                return earliest_head(&|k| k.1 == d && k.0 == w);
            }
        }
        m.earliest().map(|h| h.job)
    }
}

impl Policy for Coupled {
    fn name(&self) -> &str {
        self.name
    }

    fn queue_key(&self, job: &Job) -> QueueKey {
        self.variant.key(job).expect("validated job has positive size and weights")
    }

    fn load_factor(&self, job: &Job) -> Rational {
        pow2(self.queue_key(job).0)
    }

    fn on_release(&mut self, job: &Job, now: &Rational, state: &MachineBank) -> Result<Admission> {
        let machines = state.len();
        let mut before = Vec::new();
        if self.shadow.is_none() {
            let t = match &self.t {
                Some(t) => t.clone(),
                None => {
                    let t = self.weighted_size(job);
                    before.push(Effect::PhaseBoundary { t_star: t.clone() });
                    self.phases.push((now.clone(), t.clone()));
                    self.t = Some(t.clone());
                    t
                }
            };
            self.shadow = Some(self.fresh_shadow(&t, machines, now)?);
        }
        let decision = loop {
            let shadow = self.shadow.as_mut().expect("shadow exists");
            let outcome = shadow.release(job)?;
            if !self.doubling {
                break outcome.decision;
            }
            self.phase_arrived += &job.rejection_weight;
            if outcome.decision == Decision::Reject {
                self.phase_rejected += &job.rejection_weight;
                if exceeds_budget(&self.phase_rejected, &self.phase_arrived, &self.epsilon) {
                    let next = int(2) * self.t.as_ref().expect("phase started");
                    before.push(Effect::PhaseBoundary { t_star: next.clone() });
                    self.shadow = Some(self.fresh_shadow(&next, machines, now)?);
                    self.t = Some(next.clone());
                    self.phase_arrived = Rational::zero();
                    self.phase_rejected = Rational::zero();
                    self.phases.push((now.clone(), next));
                    let adopted: Vec<(JobId, i64)> = state
                        .pending_jobs()
                        .filter_map(|j| state.location(j).map(|(_, k)| (j, k.0)))
                        .collect();
                    for (j, w) in adopted {
                        self.set_deadline(j, w, now);
                    }
                    continue;
                }
            }
            break outcome.decision;
        };
        let admission = match decision {
            Decision::Reject => Admission::reject(),
            Decision::Dispatch { machine, level } => {
                let key = self.variant.key(job)?;
                let immediate = self.variant == Variant::Generalized && {
                    let c = self.counters.entry((key.0, key.1, size_class(&job.size)?)).or_insert(0);
                    *c += 1;
                    *c % self.every == 0
                };
                if immediate {
                    Admission::reject()
                } else {
                    self.set_deadline(job.id, key.0, &job.release);
                    Admission::dispatch(machine, level)
                }
            }
        };
        Ok(Admission { before, ..admission })
    }

    fn select(&mut self, machine: usize, _now: &Rational, state: &MachineBank) -> Option<JobId> {
        self.choose(machine, state)
    }

    fn sync(&mut self, now: &Rational, _state: &MachineBank) -> Result<()> {
        if let Some(s) = self.shadow.as_mut() {
            s.advance_to(now)?;
        }
        Ok(())
    }

    fn on_tick(&mut self, now: &Rational, state: &MachineBank) -> Result<Vec<Effect>> {
        if let Some(s) = self.shadow.as_mut() {
            s.settle()?;
        }
        let due: Vec<JobId> = self
            .deadlines
            .iter()
            .take_while(|(d, _)| d <= now)
            .map(|(_, j)| *j)
            .filter(|j| state.contains(*j))
            .collect();
        Ok(due
            .into_iter()
            .map(|job| Effect::Reject {
                job,
                reason: RejectReason::SegmentExpired,
            })
            .collect())
    }

    fn next_wakeup(&self, now: &Rational) -> Option<Rational> {
        let shadow = self.shadow.as_ref().and_then(|s| s.next_event_time());
        let segment = self.deadlines.iter().map(|(d, _)| d).find(|d| *d > now).cloned();
        match (shadow, segment) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        }
    }

    fn on_complete(&mut self, job: JobId, _machine: usize, _now: &Rational) {
        self.forget(job);
    }

    fn on_reject(&mut self, job: JobId, _now: &Rational) {
        self.forget(job);
    }
}
