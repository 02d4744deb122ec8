use std::collections::BTreeMap;

use num_traits::{Signed, ToPrimitive, Zero};

use crate::engine::{Event, Trace};
use crate::error::{Error, Result};
use crate::model::{weight_class, Instance, JobId, Params};
use crate::rational::{floor, int, pow2, Rational};

/// A closed time interval on one machine, optionally tagged with a weight class.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct MachineInterval {
    pub start: Rational,
    pub end: Rational,
    pub machine: usize,
    pub weight_class: Option<i64>,
}

impl MachineInterval {
    pub fn new(start: Rational, end: Rational, machine: usize) -> Self {
        assert!(start <= end, "interval end before start");
        MachineInterval {
            start,
            end,
            machine,
            weight_class: None,
        }
    }

    pub fn weighted(start: Rational, end: Rational, machine: usize, w: i64) -> Self {
        MachineInterval {
            weight_class: Some(w),
            ..Self::new(start, end, machine)
        }
    }

    pub fn contains(&self, t: &Rational) -> bool {
        &self.start <= t && t <= &self.end
    }

    pub fn length(&self) -> Rational {
        &self.end - &self.start
    }
}

/// Dual values proving a lower bound on the offline optimum. `intervals` is a
/// multiset: repeated entries count repeatedly.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DualCertificate {
    pub intervals: Vec<MachineInterval>,
    pub alphas: BTreeMap<JobId, Rational>,
    pub t_star_claimed: Rational,
}

impl DualCertificate {
    pub fn is_weighted(&self) -> bool {
        self.intervals.iter().any(|iv| iv.weight_class.is_some())
    }
}

/// End-of-instant pending counts per machine: `(time, count)` steps, the count
/// holding from `time` until the next step.
pub fn pending_profile(trace: &Trace, until: &Rational) -> Result<Vec<Vec<(Rational, i64)>>> {
    let mut profile: Vec<Vec<(Rational, i64)>> = vec![Vec::new(); trace.machines];
    let mut count = vec![0i64; trace.machines];
    let mut home: BTreeMap<JobId, usize> = BTreeMap::new();
    for e in &trace.events {
        if e.time() > until {
            break;
        }
        let (machine, delta) = match e {
            Event::Dispatch { job, machine, .. } => {
                if *machine >= trace.machines {
                    return Err(Error::CorruptTrace(format!("job {job} on unknown machine {machine}")));
                }
                home.insert(*job, *machine);
                (*machine, 1)
            }
            Event::Complete { job, .. } | Event::RejectLater { job, .. } => match home.remove(job) {
                Some(m) => (m, -1),
                None => return Err(Error::CorruptTrace(format!("job {job} leaves before arriving"))),
            },
            _ => continue,
        };
        count[machine] += delta;
        let steps = &mut profile[machine];
        match steps.last_mut() {
            Some((t, c)) if t == e.time() => *c = count[machine],
            _ => steps.push((e.time().clone(), count[machine])),
        }
    }
    Ok(profile)
}

/// Disjoint intervals `[t1, t2]` of one machine for level `l`, scanning right
/// to left: `t2` is the latest time the count is `≥ l·T*` (the step after the
/// last such step, since a count holds until the next step) and `t1` the
/// first step of the run of counts above `(l-1)·T*` ending there.
fn level_intervals(steps: &[(Rational, i64)], l: i64, t_star: &Rational, machine: usize) -> Vec<MachineInterval> {
    let high = int(l) * t_star;
    let low = int(l - 1) * t_star;
    let mut out = Vec::new();
    let mut k = steps.len();
    while k > 0 {
        k -= 1;
        if int(steps[k].1) < high {
            continue;
        }
        let end = k;
        let mut start = k;
        while start > 0 && int(steps[start - 1].1) > low {
            start -= 1;
        }
        let t2 = steps.get(end + 1).unwrap_or(&steps[end]).0.clone();
        out.push(MachineInterval::new(steps[start].0.clone(), t2, machine));
        k = start;
    }
    out.reverse();
    out
}

// Integral level count; covering needs α·T* not above the rejection threshold.
fn unit_alpha(params: &Params) -> i64 {
    floor(&params.alpha).to_i64().expect("α fits in i64")
}

/// The interval families for levels `1..=⌊α⌋`, element `l - 1` holding level `l`.
pub fn unit_interval_families(trace: &Trace, params: &Params, until: &Rational) -> Result<Vec<Vec<MachineInterval>>> {
    let t_star = params.require_t_star()?;
    let profile = pending_profile(trace, until)?;
    Ok((1..=unit_alpha(params))
        .map(|l| {
            profile
                .iter()
                .enumerate()
                .flat_map(|(machine, steps)| level_intervals(steps, l, t_star, machine))
                .collect()
        })
        .collect())
}

/// Builds the dual certificate for a trace of the unit flow-time policy,
/// evaluated at the trace's last event.
pub fn build_unit_certificate(trace: &Trace, params: &Params) -> Result<DualCertificate> {
    let end = trace.events.last().map(|e| e.time().clone()).unwrap_or_else(Rational::zero);
    build_unit_certificate_at(trace, params, &end)
}

/// As [`build_unit_certificate`], using only the events up to `until`.
pub fn build_unit_certificate_at(trace: &Trace, params: &Params, until: &Rational) -> Result<DualCertificate> {
    if trace.policy != "ft-unit" {
        return Err(Error::WrongPolicy {
            expected: "ft-unit".into(),
            found: trace.policy.clone(),
        });
    }
    let t_star = params.require_t_star()?;
    let alpha = unit_alpha(params);
    let intervals = unit_interval_families(trace, params, until)?.into_iter().flatten().collect();
    let mut alphas = BTreeMap::new();
    for e in &trace.events {
        if e.time() > until {
            break;
        }
        match e {
            Event::Dispatch { job, level, .. } => {
                let k = floor(&(level / t_star)).to_i64().expect("level fits").min(alpha);
                alphas.insert(*job, int(k));
            }
            Event::RejectAtArrival { job, .. } => {
                alphas.insert(*job, int(alpha));
            }
            _ => {}
        }
    }
    Ok(DualCertificate {
        intervals,
        alphas,
        t_star_claimed: t_star.clone(),
    })
}

/// Checks the dual feasibility conditions exactly and returns the implied
/// lower bound on the optimal (weighted) maximum flow-time.
///
/// Unweighted: `α_j ≤ p_j · #{(I, i) : r_j ∈ I}` for every `i ∈ S_j`, which
/// for unit jobs is the plain counting condition. Weighted: `α_j / p_j ≤
/// #{(I, i, w') : r_j ∈ I, w' ≤ w}` with `w` the class of the flow weight.
/// An empty certificate proves the vacuous bound 0.
pub fn verify_certificate(cert: &DualCertificate, instance: &Instance) -> Result<Rational> {
    let weighted = cert.is_weighted();
    if weighted && cert.intervals.iter().any(|iv| iv.weight_class.is_none()) {
        return Err(Error::InvalidArgument(
            "certificate mixes weighted and unweighted intervals".into(),
        ));
    }
    for iv in &cert.intervals {
        if iv.start > iv.end || iv.machine >= instance.machines {
            return Err(Error::InvalidArgument(format!("malformed interval {iv:?}")));
        }
    }
    let index = instance.job_index();
    for (job, a) in &cert.alphas {
        if a.is_negative() {
            return Err(Error::InfeasibleCertificate {
                job: *job,
                machine: 0,
                detail: "negative dual value".into(),
            });
        }
        let Some(&k) = index.get(job) else {
            return Err(Error::InvalidArgument(format!("certificate names unknown job {job}")));
        };
        let j = &instance.jobs[k];
        let w = if weighted { Some(weight_class(&j.flow_weight)?) } else { None };
        for &i in &j.allowed {
            let covering = cert
                .intervals
                .iter()
                .filter(|iv| iv.machine == i && iv.contains(&j.release))
                .filter(|iv| match (iv.weight_class, w) {
                    (Some(wi), Some(w)) => wi <= w,
                    _ => true,
                })
                .count();
            if *a > &j.size * int(covering as i64) {
                return Err(Error::InfeasibleCertificate {
                    job: *job,
                    machine: i,
                    detail: format!("dual value exceeds {covering} covering interval(s)"),
                });
            }
        }
    }
    let denominator: Rational = if weighted {
        cert.intervals
            .iter()
            .map(|iv| pow2(-iv.weight_class.expect("weighted")))
            .sum()
    } else {
        int(cert.intervals.len() as i64)
    };
    if denominator.is_zero() {
        return Ok(Rational::zero());
    }
    let total: Rational = cert.alphas.values().sum();
    let lengths: Rational = cert.intervals.iter().map(MachineInterval::length).sum();
    Ok((total - lengths) / denominator)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::simulate;
    use crate::flowtime::FtUnit;
    use crate::model::{Job, ProblemKind};
    use crate::rational::rat;

    fn unit_run(machines: usize, releases: &[(i64, Vec<usize>)], t_star: i64) -> (Instance, Trace, Params) {
        let jobs = releases
            .iter()
            .enumerate()
            .map(|(k, (r, allowed))| Job::unit(k as u64, int(*r), allowed.clone()))
            .collect();
        let inst = Instance::new(machines, rat(1, 4), ProblemKind::MaxFlowTime, jobs);
        let params = Params::ft_unit(&inst.epsilon, Some(int(t_star))).unwrap();
        let trace = simulate(FtUnit::new(&params).unwrap(), &inst).unwrap();
        (inst, trace, params)
    }

    #[test]
    fn quiet_trace_has_no_intervals() {
        let (inst, trace, params) = unit_run(2, &[(0, vec![0, 1]), (3, vec![0, 1])], 2);
        let cert = build_unit_certificate(&trace, &params).unwrap();
        assert!(cert.intervals.is_empty());
        assert!(cert.alphas.values().all(Zero::is_zero));
        assert_eq!(verify_certificate(&cert, &inst).unwrap(), int(0));
    }

    #[test]
    fn burst_on_one_machine() {
        // Four unit jobs at 0 with T* = 2. Counts step 4, 3, 2, 1, 0 at times 0..=4.
        let (inst, trace, params) = unit_run(1, &vec![(0, vec![0]); 4], 2);
        let cert = build_unit_certificate(&trace, &params).unwrap();
        let l1 = MachineInterval::new(int(0), int(3), 0);
        let l2 = MachineInterval::new(int(0), int(1), 0);
        assert_eq!(cert.intervals, vec![l1, l2]);
        let levels: Vec<Rational> = cert.alphas.values().cloned().collect();
        assert_eq!(levels, vec![int(0), int(0), int(1), int(1)]);
        // (1 + 1 - 3 - 1) / 2: vacuous but exact.
        assert_eq!(verify_certificate(&cert, &inst).unwrap(), int(-1));
    }

    #[test]
    fn wrong_policy() {
        let (_, mut trace, params) = unit_run(1, &[(0, vec![0])], 1);
        trace.policy = "srpt".into();
        assert_eq!(build_unit_certificate(&trace, &params).unwrap_err().code(), "wrong-policy");
    }

    #[test]
    fn inflated_dual_is_named() {
        let inst = Instance::new(2, rat(1, 4), ProblemKind::MaxFlowTime, vec![Job::unit(7, int(1), [0, 1])]);
        let cert = DualCertificate {
            intervals: vec![MachineInterval::new(int(0), int(2), 0)],
            alphas: [(7, int(1))].into(),
            t_star_claimed: int(1),
        };
        match verify_certificate(&cert, &inst).unwrap_err() {
            Error::InfeasibleCertificate { job, machine, .. } => assert_eq!((job, machine), (7, 1)),
            e => panic!("{e}"),
        }
    }

    #[test]
    fn weighted_single_interval() {
        // One job of size 3 and flow weight 4 (class 2); one interval of class 1
        // and length 1; α = p. Bound = (3 - 1) / 2^-1 = 4.
        let job = Job::new(0, int(5), int(3), [0]).with_weights(int(1), int(4));
        let inst = Instance::new(1, rat(1, 4), ProblemKind::GenWtdMaxFlowTime, vec![job]);
        let cert = DualCertificate {
            intervals: vec![MachineInterval::weighted(int(5), int(6), 0, 1)],
            alphas: [(0, int(3))].into(),
            t_star_claimed: int(4),
        };
        assert_eq!(verify_certificate(&cert, &inst).unwrap(), int(4));
        // An interval of a heavier class does not cover the job.
        let heavy = DualCertificate {
            intervals: vec![MachineInterval::weighted(int(5), int(6), 0, 3)],
            ..cert
        };
        assert_eq!(verify_certificate(&heavy, &inst).unwrap_err().code(), "infeasible-certificate");
    }
}
