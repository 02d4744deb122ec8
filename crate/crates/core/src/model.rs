//! Instance model: jobs, machines, dyadic classes and derived parameters.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use num_traits::{One, Signed};

use crate::error::{Error, Result};
use crate::rational::{ceil_log2, floor_log2, fmt, int, Rational};

pub type JobId = u64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ProblemKind {
    LoadBalancing,
    MaxFlowTime,
    WtdMaxFlowTime,
    GenWtdMaxFlowTime,
}

impl ProblemKind {
    pub fn name(self) -> &'static str {
        match self {
            ProblemKind::LoadBalancing => "load-balancing",
            ProblemKind::MaxFlowTime => "max-flow-time",
            ProblemKind::WtdMaxFlowTime => "wtd-max-flow-time",
            ProblemKind::GenWtdMaxFlowTime => "gen-wtd-max-flow-time",
        }
    }

    pub fn from_name(s: &str) -> Result<Self> {
        Ok(match s {
            "load-balancing" => ProblemKind::LoadBalancing,
            "max-flow-time" => ProblemKind::MaxFlowTime,
            "wtd-max-flow-time" => ProblemKind::WtdMaxFlowTime,
            "gen-wtd-max-flow-time" => ProblemKind::GenWtdMaxFlowTime,
            other => return Err(Error::Parse(format!("unknown problem kind {other:?}"))),
        })
    }
}

impl fmt::Display for ProblemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Job {
    pub id: JobId,
    pub release: Rational,
    pub size: Rational,
    /// Weight for the single-weight problem; equals both weights below there.
    pub weight: Rational,
    pub rejection_weight: Rational,
    pub flow_weight: Rational,
    /// Allowed machines `S_j`, kept sorted and deduplicated.
    pub allowed: Vec<usize>,
    /// Breaks ties between equal release times; strictly increasing along the instance.
    pub rank: u64,
}

impl Job {
    /// A unit-weight job. `rank` defaults to the id.
    pub fn new(id: JobId, release: Rational, size: Rational, allowed: impl IntoIterator<Item = usize>) -> Self {
        let allowed: BTreeSet<usize> = allowed.into_iter().collect();
        Job {
            id,
            release,
            size,
            weight: Rational::one(),
            rejection_weight: Rational::one(),
            flow_weight: Rational::one(),
            allowed: allowed.into_iter().collect(),
            rank: id,
        }
    }

    pub fn unit(id: JobId, release: Rational, allowed: impl IntoIterator<Item = usize>) -> Self {
        Job::new(id, release, int(1), allowed)
    }

    /// Sets one weight used for both flow-time and rejection accounting.
    pub fn with_weight(mut self, w: Rational) -> Self {
        self.weight = w.clone();
        self.rejection_weight = w.clone();
        self.flow_weight = w;
        self
    }

    /// Sets distinct rejection and flow-time weights.
    pub fn with_weights(mut self, rejection: Rational, flow: Rational) -> Self {
        self.weight = flow.clone();
        self.rejection_weight = rejection;
        self.flow_weight = flow;
        self
    }

    pub fn with_rank(mut self, rank: u64) -> Self {
        self.rank = rank;
        self
    }

    pub fn can_run_on(&self, machine: usize) -> bool {
        self.allowed.binary_search(&machine).is_ok()
    }

    pub fn size_class(&self) -> i64 {
        size_class(&self.size).expect("validated job has positive size")
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Instance {
    pub machines: usize,
    pub epsilon: Rational,
    pub kind: ProblemKind,
    pub jobs: Vec<Job>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    NoMachines,
    EpsilonOutOfRange(Rational),
    EmptyAllowed(JobId),
    MachineOutOfRange { job: JobId, machine: usize },
    NonPositiveSize(JobId),
    NonPositiveWeight(JobId),
    NegativeRelease(JobId),
    /// Weighted single-weight instances need `w = w^r = w^f`.
    WeightMismatch(JobId),
    /// Job at `index` precedes its predecessor in (release, rank) order.
    Unordered { index: usize, job: JobId },
    DuplicateId(JobId),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NoMachines => write!(f, "instance has no machines"),
            Violation::EpsilonOutOfRange(e) => write!(f, "epsilon {} not in (0, 1)", fmt(e)),
            Violation::EmptyAllowed(j) => write!(f, "job {j} has an empty allowed set"),
            Violation::MachineOutOfRange { job, machine } => {
                write!(f, "job {job} allows machine {machine} which does not exist")
            }
            Violation::NonPositiveSize(j) => write!(f, "job {j} has non-positive size"),
            Violation::NonPositiveWeight(j) => write!(f, "job {j} has a non-positive weight"),
            Violation::NegativeRelease(j) => write!(f, "job {j} has a negative release time"),
            Violation::WeightMismatch(j) => {
                write!(f, "job {j}: rejection and flow weights must equal the weight")
            }
            Violation::Unordered { index, job } => {
                write!(f, "job {job} at position {index} is out of (release, rank) order")
            }
            Violation::DuplicateId(j) => write!(f, "duplicate job id {j}"),
        }
    }
}

impl Instance {
    pub fn new(machines: usize, epsilon: Rational, kind: ProblemKind, jobs: Vec<Job>) -> Self {
        Instance {
            machines,
            epsilon,
            kind,
            jobs,
        }
    }

    /// Reports every invariant violation; an empty list means the instance is well formed.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        if self.machines == 0 {
            out.push(Violation::NoMachines);
        }
        if !(self.epsilon.is_positive() && self.epsilon < Rational::one()) {
            out.push(Violation::EpsilonOutOfRange(self.epsilon.clone()));
        }
        let mut seen = BTreeSet::new();
        for (index, job) in self.jobs.iter().enumerate() {
            if !seen.insert(job.id) {
                out.push(Violation::DuplicateId(job.id));
            }
            if job.allowed.is_empty() {
                out.push(Violation::EmptyAllowed(job.id));
            }
            for &m in &job.allowed {
                if m >= self.machines {
                    out.push(Violation::MachineOutOfRange { job: job.id, machine: m });
                }
            }
            if !job.size.is_positive() {
                out.push(Violation::NonPositiveSize(job.id));
            }
            if !(job.weight.is_positive() && job.rejection_weight.is_positive() && job.flow_weight.is_positive()) {
                out.push(Violation::NonPositiveWeight(job.id));
            }
            if job.release.is_negative() {
                out.push(Violation::NegativeRelease(job.id));
            }
            if matches!(self.kind, ProblemKind::WtdMaxFlowTime | ProblemKind::MaxFlowTime | ProblemKind::LoadBalancing)
                && (job.rejection_weight != job.weight || job.flow_weight != job.weight)
            {
                out.push(Violation::WeightMismatch(job.id));
            }
            if index > 0 {
                let prev = &self.jobs[index - 1];
                if (&prev.release, prev.rank) >= (&job.release, job.rank) {
                    out.push(Violation::Unordered { index, job: job.id });
                }
            }
        }
        out
    }

    pub fn ensure_valid(&self) -> Result<()> {
        let v = self.validate();
        if v.is_empty() {
            Ok(())
        } else {
            let msg: Vec<String> = v.iter().map(ToString::to_string).collect();
            Err(Error::InvalidInstance(msg.join("; ")))
        }
    }

    pub fn job_index(&self) -> BTreeMap<JobId, usize> {
        self.jobs.iter().enumerate().map(|(i, j)| (j.id, i)).collect()
    }

    pub fn total_size(&self) -> Rational {
        self.jobs.iter().map(|j| j.size.clone()).sum()
    }

    /// Sorts jobs by (release, rank). Handy for generators and hand-built fixtures.
    pub fn sort_jobs(&mut self) {
        self.jobs
            .sort_by(|a, b| (&a.release, a.rank).cmp(&(&b.release, b.rank)));
    }
}

/// Size class `p` with `2^p <= size < 2^{p+1}`.
pub fn size_class(size: &Rational) -> Result<i64> {
    floor_log2(size)
}

/// Weight class `⌊log2 w⌋`; the algorithms treat the weight as `2^class`.
pub fn weight_class(weight: &Rational) -> Result<i64> {
    floor_log2(weight)
}

/// Density class `⌊log2(w/p)⌋`.
pub fn density_class(weight: &Rational, size: &Rational) -> Result<i64> {
    if !weight.is_positive() || !size.is_positive() {
        return Err(Error::InvalidArgument(
            "density class needs positive weight and size".into(),
        ));
    }
    floor_log2(&(weight / size))
}

/// Class triple of a job under a rounded weight.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ClassKey {
    pub size_class: i64,
    pub weight_class: i64,
    pub density_class: i64,
}

impl ClassKey {
    /// Classes of `size` under the rounded weight `2^weight_class(weight)`.
    pub fn of(weight: &Rational, size: &Rational) -> Result<Self> {
        let w = weight_class(weight)?;
        let p = size_class(size)?;
        let d = density_class(&crate::rational::pow2(w), size)?;
        Ok(ClassKey {
            size_class: p,
            weight_class: w,
            density_class: d,
        })
    }
}

/// Parameters an algorithm runs with.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Params {
    pub epsilon: Rational,
    pub t_star: Option<Rational>,
    pub alpha: Rational,
    pub delta: i64,
    pub beta: Rational,
}

/// `⌈log2(1/ε)⌉`.
pub fn log_inv_eps(epsilon: &Rational) -> Result<i64> {
    check_epsilon(epsilon)?;
    ceil_log2(&epsilon.recip())
}

pub fn check_epsilon(epsilon: &Rational) -> Result<()> {
    if epsilon.is_positive() && *epsilon < Rational::one() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "epsilon {} must lie in (0, 1)",
            fmt(epsilon)
        )))
    }
}

impl Params {
    fn base(epsilon: &Rational, t_star: Option<Rational>, alpha: Rational) -> Result<Self> {
        check_epsilon(epsilon)?;
        if let Some(t) = &t_star {
            if !t.is_positive() {
                return Err(Error::InvalidArgument("t_star must be positive".into()));
            }
        }
        let delta = log_inv_eps(epsilon)? + 2;
        let beta = &alpha * &alpha / (epsilon * epsilon);
        Ok(Params {
            epsilon: epsilon.clone(),
            t_star,
            alpha,
            delta,
            beta,
        })
    }

    /// Greedy load balancing with unit sizes: `α = ⌈log2(1/ε)⌉ + 2`.
    pub fn lb_unit(epsilon: &Rational, t_star: Option<Rational>) -> Result<Self> {
        let a = log_inv_eps(epsilon)? + 2;
        Self::base(epsilon, t_star, int(a))
    }

    /// Greedy load balancing with sizes in `[1, 2]` (and each size class of the
    /// separated algorithm): `α = 2⌈log2(1/ε)⌉ + 2`.
    pub fn lb_range(epsilon: &Rational, t_star: Option<Rational>) -> Result<Self> {
        let a = 2 * log_inv_eps(epsilon)? + 2;
        Self::base(epsilon, t_star, int(a))
    }

    /// Unit max-flow-time: threshold `T*/ε`, i.e. `α = 1/ε`.
    pub fn ft_unit(epsilon: &Rational, t_star: Option<Rational>) -> Result<Self> {
        check_epsilon(epsilon)?;
        Self::base(epsilon, t_star, epsilon.recip())
    }

    /// Algorithms A and B: `α = 76/ε`, `β = α²/ε²`.
    pub fn alg_a(epsilon: &Rational, t_star: Option<Rational>) -> Result<Self> {
        check_epsilon(epsilon)?;
        Self::base(epsilon, t_star, int(76) / epsilon)
    }

    pub fn require_t_star(&self) -> Result<&Rational> {
        self.t_star
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument("t_star is required".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::{pow2, rat};

    #[test]
    fn class_examples() {
        assert_eq!(size_class(&int(1)).unwrap(), 0);
        assert_eq!(size_class(&int(3)).unwrap(), 1);
        assert_eq!(size_class(&rat(1, 8)).unwrap(), -3);
        assert_eq!(weight_class(&int(4)).unwrap(), 2);
        assert_eq!(weight_class(&int(5)).unwrap(), 2);
        assert_eq!(weight_class(&rat(1, 2)).unwrap(), -1);
        assert_eq!(density_class(&int(1), &int(1)).unwrap(), 0);
        assert_eq!(density_class(&int(4), &int(3)).unwrap(), 0);
        assert!(size_class(&int(0)).is_err());
        assert!(weight_class(&rat(-1, 2)).is_err());
        assert!(density_class(&int(1), &int(0)).is_err());
    }

    #[test]
    fn density_relation_with_size_and_weight_class() {
        // 2^3 weight, size 3 (class 1, not a power of two) -> d = 3 - 1 - 1.
        assert_eq!(density_class(&pow2(3), &int(3)).unwrap(), 1);
        // size exactly 4 -> d = 3 - 2.
        assert_eq!(density_class(&pow2(3), &int(4)).unwrap(), 1);
        let k = ClassKey::of(&int(5), &int(3)).unwrap();
        assert_eq!((k.size_class, k.weight_class, k.density_class), (1, 2, 0));
    }

    #[test]
    fn validate_reports_each_violation() {
        let ok = Instance::new(
            2,
            rat(1, 4),
            ProblemKind::MaxFlowTime,
            vec![Job::unit(0, int(0), [0, 1]), Job::unit(1, int(1), [1])],
        );
        assert!(ok.validate().is_empty());

        let mut empty = ok.clone();
        empty.jobs[1].allowed.clear();
        assert_eq!(empty.validate(), vec![Violation::EmptyAllowed(1)]);

        let mut unordered = ok.clone();
        unordered.jobs[0].release = int(5);
        assert_eq!(
            unordered.validate(),
            vec![Violation::Unordered { index: 1, job: 1 }]
        );

        let mut dup = ok.clone();
        dup.jobs[1].id = 0;
        assert!(dup.validate().contains(&Violation::DuplicateId(0)));

        let mut eps = ok;
        eps.epsilon = int(1);
        assert_eq!(eps.validate(), vec![Violation::EpsilonOutOfRange(int(1))]);
    }

    #[test]
    fn params_derivation() {
        let e = rat(1, 8);
        assert_eq!(Params::lb_unit(&e, None).unwrap().alpha, int(5));
        assert_eq!(Params::lb_range(&e, None).unwrap().alpha, int(8));
        assert_eq!(Params::lb_range(&e, None).unwrap().delta, 5);
        let a = Params::alg_a(&rat(1, 4), Some(int(1))).unwrap();
        assert_eq!(a.alpha, int(304));
        assert_eq!(a.beta, int(304 * 304 * 16));
        assert!(Params::ft_unit(&int(1), None).is_err());
    }
}
