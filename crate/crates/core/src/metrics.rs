//! Objective values and rejection accounting recomputed from a trace.

use std::collections::BTreeMap;

use num_traits::Zero;

use crate::engine::{Event, Trace};
use crate::error::{Error, Result};
use crate::model::{Instance, JobId};
use crate::rational::Rational;

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Metrics {
    /// Largest unweighted backlog any machine held at any instant.
    pub max_load_over_time: Rational,
    /// `max flow_weight * (C - r)` over completed jobs.
    pub max_weighted_flowtime: Rational,
    pub max_flowtime: Rational,
    pub rejected_count_fraction_prefix_max: Rational,
    pub rejected_weight_fraction_prefix_max: Rational,
    /// Same prefix maximum, measured in processing volume.
    pub rejected_volume_fraction_prefix_max: Rational,
    pub arrivals: usize,
    pub completions: usize,
    pub rejections: usize,
}

/// The rejection budget check used by the doubling wrappers and by tests:
/// `rejected <= ε · arrived` is within budget.
pub fn exceeds_budget(rejected: &Rational, arrived: &Rational, epsilon: &Rational) -> bool {
    rejected > &(epsilon * arrived)
}

fn ratio(num: &Rational, den: &Rational) -> Rational {
    if den.is_zero() {
        Rational::zero()
    } else {
        num / den
    }
}

/// Recomputes every metric by replaying `trace` against `instance`.
pub fn metrics(trace: &Trace, instance: &Instance) -> Result<Metrics> {
    let index = instance.job_index();
    let job = |id: JobId| {
        index
            .get(&id)
            .map(|&i| &instance.jobs[i])
            .ok_or_else(|| Error::CorruptTrace(format!("unknown job {id}")))
    };

    let mut slices: BTreeMap<JobId, Vec<(Rational, Rational)>> = BTreeMap::new();
    for e in &trace.events {
        if let Event::ProcessSlice { job: j, start, end, .. } = e {
            job(*j)?;
            slices.entry(*j).or_default().push((start.clone(), end.clone()));
        }
    }
    let processed_before = |j: JobId, t: &Rational| -> Rational {
        slices.get(&j).map_or_else(Rational::zero, |v| {
            v.iter()
                .filter(|(s, _)| s < t)
                .map(|(s, e)| if e < t { e - s } else { t - s })
                .sum()
        })
    };

    let mut m = Metrics::default();
    let (mut arrived_n, mut rejected_n) = (Rational::zero(), Rational::zero());
    let (mut arrived_w, mut rejected_w) = (Rational::zero(), Rational::zero());
    let (mut arrived_v, mut rejected_v) = (Rational::zero(), Rational::zero());
    let mut pending: Vec<BTreeMap<JobId, Rational>> = vec![BTreeMap::new(); trace.machines];
    let mut location: BTreeMap<JobId, usize> = BTreeMap::new();
    let mut touched: Vec<usize> = Vec::new();

    let events = &trace.events;
    for (k, e) in events.iter().enumerate() {
        match e {
            Event::Dispatch { job: j, .. } | Event::RejectAtArrival { job: j, .. } => {
                let spec = job(*j)?;
                m.arrivals += 1;
                arrived_n += Rational::from_integer(1.into());
                arrived_w += &spec.rejection_weight;
                arrived_v += &spec.size;
                if let Event::Dispatch { machine, .. } = e {
                    if *machine >= trace.machines {
                        return Err(Error::CorruptTrace(format!("machine {machine} out of range")));
                    }
                    pending[*machine].insert(*j, spec.size.clone());
                    location.insert(*j, *machine);
                    touched.push(*machine);
                } else {
                    m.rejections += 1;
                    rejected_n += Rational::from_integer(1.into());
                    rejected_w += &spec.rejection_weight;
                    rejected_v += &spec.size;
                }
            }
            Event::RejectLater { job: j, .. } => {
                let spec = job(*j)?;
                m.rejections += 1;
                rejected_n += Rational::from_integer(1.into());
                rejected_w += &spec.rejection_weight;
                rejected_v += &spec.size;
                if let Some(machine) = location.remove(j) {
                    pending[machine].remove(j);
                }
            }
            Event::Complete { job: j, time } => {
                let spec = job(*j)?;
                m.completions += 1;
                let flow = time - &spec.release;
                let weighted = &spec.flow_weight * &flow;
                if weighted > m.max_weighted_flowtime {
                    m.max_weighted_flowtime = weighted;
                }
                if flow > m.max_flowtime {
                    m.max_flowtime = flow;
                }
                if let Some(machine) = location.remove(j) {
                    pending[machine].remove(j);
                }
            }
            Event::ProcessSlice { .. } | Event::PhaseBoundary { .. } => {}
        }
        if e.is_arrival() || e.is_rejection() {
            for (frac, (r, a)) in [
                (&mut m.rejected_count_fraction_prefix_max, (&rejected_n, &arrived_n)),
                (&mut m.rejected_weight_fraction_prefix_max, (&rejected_w, &arrived_w)),
                (&mut m.rejected_volume_fraction_prefix_max, (&rejected_v, &arrived_v)),
            ] {
                let f = ratio(r, a);
                if f > *frac {
                    *frac = f;
                }
            }
        }
        // Loads only grow at dispatches, so evaluate machines that received a
        // job once every event at this instant has been applied.
        let instant_ends = events.get(k + 1).map_or(true, |n| n.time() != e.time());
        if instant_ends && !touched.is_empty() {
            let now = e.time();
            touched.sort_unstable();
            touched.dedup();
            for &machine in &touched {
                let load: Rational = pending[machine]
                    .iter()
                    .map(|(j, size)| size - processed_before(*j, now))
                    .sum();
                if load > m.max_load_over_time {
                    m.max_load_over_time = load;
                }
            }
            touched.clear();
        }
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Job, ProblemKind};
    use crate::rational::{int, rat};

    fn inst(jobs: Vec<Job>) -> Instance {
        Instance::new(1, rat(1, 2), ProblemKind::MaxFlowTime, jobs)
    }

    #[test]
    fn single_job_flow() {
        let i = inst(vec![Job::unit(0, int(0), [0])]);
        let mut t = Trace::new("x", 1);
        t.events = vec![
            Event::Dispatch { time: int(0), job: 0, machine: 0, level: int(0), backlog: int(0) },
            Event::ProcessSlice { machine: 0, job: 0, start: int(0), end: int(1) },
            Event::Complete { time: int(1), job: 0 },
        ];
        let m = metrics(&t, &i).unwrap();
        assert_eq!(m.max_weighted_flowtime, int(1));
        assert_eq!(m.max_load_over_time, int(1));
        assert_eq!((m.completions, m.rejections), (1, 0));
    }

    #[test]
    fn half_rejected() {
        let i = inst(vec![Job::unit(0, int(0), [0]), Job::unit(1, int(0), [0])]);
        let mut t = Trace::new("x", 1);
        t.events = vec![
            Event::Dispatch { time: int(0), job: 0, machine: 0, level: int(0), backlog: int(0) },
            Event::RejectAtArrival { time: int(0), job: 1 },
        ];
        let m = metrics(&t, &i).unwrap();
        assert_eq!(m.rejected_count_fraction_prefix_max, rat(1, 2));
    }

    #[test]
    fn unknown_job_is_corrupt() {
        let i = inst(vec![]);
        let mut t = Trace::new("x", 1);
        t.events = vec![Event::RejectAtArrival { time: int(0), job: 9 }];
        assert_eq!(metrics(&t, &i).unwrap_err().code(), "corrupt-trace");
    }

    #[test]
    fn budget_is_weak() {
        assert!(!exceeds_budget(&int(1), &int(4), &rat(1, 4)));
        assert!(exceeds_budget(&int(2), &int(4), &rat(1, 4)));
    }
}
