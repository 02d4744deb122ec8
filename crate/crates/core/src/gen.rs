//! Seeded instance generators.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::{Instance, Job, ProblemKind};
use crate::rational::{int, pow2, rat, Rational};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shape {
    /// Sizes in `[1/2, 2]`, random allowed sets.
    Uniform,
    /// Every job may run on exactly two machines.
    RestrictedPairs,
    /// Power-of-two sizes spread over at least six size classes.
    PowerlawSizes,
}

impl Shape {
    pub fn from_name(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(Shape::Uniform),
            "restricted-pairs" => Ok(Shape::RestrictedPairs),
            "powerlaw-sizes" => Ok(Shape::PowerlawSizes),
            _ => Err(Error::InvalidArgument(format!("unknown shape {s:?}"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Shape::Uniform => "uniform",
            Shape::RestrictedPairs => "restricted-pairs",
            Shape::PowerlawSizes => "powerlaw-sizes",
        }
    }
}

#[derive(Debug, Clone)]
pub struct GenSpec {
    pub kind: ProblemKind,
    pub jobs: usize,
    pub machines: usize,
    pub epsilon: Rational,
    pub seed: u64,
    pub shape: Shape,
}

fn allowed_set(rng: &mut ChaCha8Rng, m: usize, shape: Shape) -> Vec<usize> {
    let k = match shape {
        Shape::RestrictedPairs => m.min(2),
        _ => rng.gen_range(1..=m),
    };
    let mut v = sample(rng, m, k).into_vec();
    v.sort_unstable();
    v
}

fn weight(rng: &mut ChaCha8Rng) -> Rational {
    pow2(rng.gen_range(-2..=3))
}

/// Deterministic pseudo-random instance; the same spec always yields the same jobs.
pub fn generate(spec: &GenSpec) -> Result<Instance> {
    if spec.machines == 0 {
        return Err(Error::InvalidArgument("machines must be positive".into()));
    }
    crate::model::check_epsilon(&spec.epsilon)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut jobs = Vec::with_capacity(spec.jobs);
    let mut t = int(0);
    for id in 0..spec.jobs as u64 {
        if rng.gen_bool(0.6) {
            t += rat(rng.gen_range(1..=4), 2);
        }
        let size = match (spec.kind, spec.shape) {
            (ProblemKind::MaxFlowTime, _) => int(1),
            (_, Shape::PowerlawSizes) => {
                // Class c with probability proportional to 2^-c/2, spanning classes -2..=5.
                let c = (0..8).find(|_| rng.gen_bool(0.35)).unwrap_or(7) as i64 - 2;
                pow2(c) * rat(rng.gen_range(4..8), 4)
            }
            _ => rat(rng.gen_range(2..=8), 4),
        };
        let allowed = allowed_set(&mut rng, spec.machines, spec.shape);
        let mut job = Job::new(id, t.clone(), size, allowed);
        match spec.kind {
            ProblemKind::WtdMaxFlowTime => job = job.with_weight(weight(&mut rng)),
            ProblemKind::GenWtdMaxFlowTime => {
                let (r, f) = (weight(&mut rng), weight(&mut rng));
                job = job.with_weights(r, f);
            }
            _ => {}
        }
        jobs.push(job);
    }
    let inst = Instance::new(spec.machines, spec.epsilon.clone(), spec.kind, jobs);
    inst.ensure_valid()?;
    Ok(inst)
}

/// Eight machines; a burst of seven size-2 jobs and one size-1 job at time 0
/// (four unrestricted, one on machines {0, 1}, one on {2, 3}, one on {0}),
/// then an unrestricted size-1 job at every integer time `1..=horizon` and a
/// size-2 job for machine 0 at every even time. At equal times the size-1 job
/// comes first. The offline optimum has maximum flow-time 2.
pub fn starvation_scenario(horizon: u64) -> Instance {
    let all: Vec<usize> = (0..8).collect();
    let mut jobs = Vec::new();
    let mut id = 0u64;
    let mut push = |release: u64, size: i64, allowed: &[usize]| {
        jobs.push(Job::new(id, int(release as i64), int(size), allowed.iter().copied()));
        id += 1;
    };
    for _ in 0..4 {
        push(0, 2, &all);
    }
    push(0, 2, &[0, 1]);
    push(0, 2, &[2, 3]);
    push(0, 2, &[0]);
    push(0, 1, &all);
    for t in 1..=horizon {
        push(t, 1, &all);
        if t % 2 == 0 {
            push(t, 2, &[0]);
        }
    }
    Instance::new(8, rat(1, 4), ProblemKind::MaxFlowTime, jobs)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(shape: Shape, seed: u64) -> GenSpec {
        GenSpec {
            kind: ProblemKind::LoadBalancing,
            jobs: 200,
            machines: 4,
            epsilon: rat(1, 4),
            seed,
            shape,
        }
    }

    #[test]
    fn same_seed_same_instance() {
        let a = generate(&spec(Shape::Uniform, 7)).unwrap();
        let b = generate(&spec(Shape::Uniform, 7)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, generate(&spec(Shape::Uniform, 8)).unwrap());
    }

    #[test]
    fn pairs_have_two_machines() {
        let a = generate(&spec(Shape::RestrictedPairs, 1)).unwrap();
        assert!(a.jobs.iter().all(|j| j.allowed.len() == 2));
    }

    #[test]
    fn powerlaw_spans_six_classes() {
        let a = generate(&spec(Shape::PowerlawSizes, 3)).unwrap();
        let classes: std::collections::BTreeSet<i64> = a.jobs.iter().map(|j| j.size_class()).collect();
        assert!(classes.len() >= 6, "{classes:?}");
    }

    #[test]
    fn empty_instance() {
        let mut s = spec(Shape::Uniform, 1);
        s.jobs = 0;
        assert!(generate(&s).unwrap().jobs.is_empty());
    }

    #[test]
    fn scenario_is_valid() {
        let s = starvation_scenario(10);
        assert!(s.validate().is_empty());
        assert_eq!(s.jobs.len(), 8 + 10 + 5);
    }
}
