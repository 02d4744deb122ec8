use std::collections::BTreeMap;

use num_traits::Zero;

use super::trace::{Event, Trace};
use crate::model::{Instance, JobId};
use crate::rational::{fmt, Rational};

/// First point where a trace stops agreeing with a from-scratch replay.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Divergence {
    /// Index into `trace.events`, or `trace.events.len()` for end-of-trace findings.
    pub event: usize,
    pub detail: String,
}

#[derive(Default)]
struct JobState {
    machine: Option<usize>,
    processed: Rational,
    slices: Vec<(Rational, Rational)>,
    completed: bool,
    rejected: bool,
}

/// Re-derives machine state from the trace alone and checks it against what
/// the trace claims: slice placement, conservation, completion times and the
/// backlog recorded at each dispatch.
pub fn replay_check(trace: &Trace, instance: &Instance) -> Result<(), Divergence> {
    let jobs = instance.job_index();
    let mut state: BTreeMap<JobId, JobState> = BTreeMap::new();
    let mut last_time: Option<&Rational> = None;
    // Slices seen so far per machine, for overlap checks.
    let mut slices: Vec<Vec<(Rational, Rational, JobId)>> = vec![Vec::new(); trace.machines];
    // Every slice in the trace. A slice is recorded when it closes, so the
    // backlog at a dispatch may depend on slices that appear later.
    let mut all_slices: Vec<Vec<(Rational, Rational, JobId)>> = vec![Vec::new(); trace.machines];
    for e in &trace.events {
        if let Event::ProcessSlice { machine, job, start, end } = e {
            if *machine < trace.machines {
                all_slices[*machine].push((start.clone(), end.clone(), *job));
            }
        }
    }
    let fail = |event: usize, detail: String| Err(Divergence { event, detail });

    for (idx, e) in trace.events.iter().enumerate() {
        if let Some(prev) = last_time {
            if e.time() < prev {
                return fail(idx, format!("event time {} precedes {}", fmt(e.time()), fmt(prev)));
            }
        }
        last_time = Some(e.time());
        let job = match e.job() {
            Some(j) => match jobs.get(&j) {
                Some(&i) => Some((j, &instance.jobs[i])),
                None => return fail(idx, format!("unknown job {j}")),
            },
            None => None,
        };
        match e {
            Event::Dispatch { time, machine, backlog, .. } => {
                let (id, spec) = job.expect("dispatch names a job");
                if *machine >= trace.machines || !spec.can_run_on(*machine) {
                    return fail(idx, format!("job {id} dispatched to disallowed machine {machine}"));
                }
                if *time != spec.release {
                    return fail(idx, format!("job {id} dispatched away from its release"));
                }
                if state.get(&id).is_some_and(|st| st.machine.is_some() || st.rejected) {
                    return fail(idx, format!("job {id} arrives twice"));
                }
                let derived = backlog_at(*machine, time, &state, instance, &jobs, &all_slices);
                if derived != *backlog {
                    return fail(
                        idx,
                        format!(
                            "backlog of machine {machine} at {} is {} but the trace records {}",
                            fmt(time),
                            fmt(&derived),
                            fmt(backlog)
                        ),
                    );
                }
                state.entry(id).or_default().machine = Some(*machine);
            }
            Event::RejectAtArrival { time, .. } => {
                let (id, spec) = job.expect("rejection names a job");
                if *time != spec.release {
                    return fail(idx, format!("job {id} rejected at arrival away from its release"));
                }
                let st = state.entry(id).or_default();
                if st.machine.is_some() || st.rejected {
                    return fail(idx, format!("job {id} arrives twice"));
                }
                st.rejected = true;
            }
            Event::RejectLater { .. } => {
                let (id, spec) = job.expect("rejection names a job");
                let st = state.entry(id).or_default();
                if st.machine.is_none() || st.rejected || st.completed {
                    return fail(idx, format!("job {id} rejected while not pending"));
                }
                if st.processed >= spec.size {
                    return fail(idx, format!("job {id} rejected after full processing"));
                }
                st.rejected = true;
            }
            Event::ProcessSlice { machine, start, end, .. } => {
                let (id, spec) = job.expect("slice names a job");
                let st = state.entry(id).or_default();
                if st.machine != Some(*machine) {
                    return fail(idx, format!("job {id} processed on machine {machine} it was not dispatched to"));
                }
                if st.completed || st.rejected {
                    return fail(idx, format!("job {id} processed after leaving the system"));
                }
                if start >= end || *start < spec.release {
                    return fail(idx, format!("job {id} has an invalid slice [{}, {}]", fmt(start), fmt(end)));
                }
                if let Some((s, t, other)) = slices[*machine].iter().find(|(s, t, _)| start < t && s < end) {
                    return fail(
                        idx,
                        format!(
                            "slice of job {id} [{}, {}] overlaps slice of job {other} [{}, {}] on machine {machine}",
                            fmt(start),
                            fmt(end),
                            fmt(s),
                            fmt(t)
                        ),
                    );
                }
                st.processed += end - start;
                if st.processed > spec.size {
                    return fail(idx, format!("job {id} processed beyond its size"));
                }
                st.slices.push((start.clone(), end.clone()));
                slices[*machine].push((start.clone(), end.clone(), id));
            }
            Event::Complete { time, .. } => {
                let (id, spec) = job.expect("complete names a job");
                let st = state.entry(id).or_default();
                if st.completed || st.rejected {
                    return fail(idx, format!("job {id} completes twice"));
                }
                if st.processed != spec.size {
                    return fail(
                        idx,
                        format!("job {id} completes with {} of {} processed", fmt(&st.processed), fmt(&spec.size)),
                    );
                }
                let last_end = st.slices.iter().map(|(_, t)| t).max();
                if last_end != Some(time) {
                    return fail(idx, format!("job {id} completes at {} but its last slice ends elsewhere", fmt(time)));
                }
                st.completed = true;
            }
            Event::PhaseBoundary { .. } => {}
        }
    }
    let end = trace.events.len();
    for (id, st) in &state {
        let size = &instance.jobs[jobs[id]].size;
        if !st.completed && st.processed == *size {
            return fail(end, format!("job {id} fully processed but never completed"));
        }
    }
    Ok(())
}

/// Unweighted remaining work on `machine` at `time`, counting jobs dispatched
/// so far that are neither completed nor rejected by then.
fn backlog_at(
    machine: usize,
    time: &Rational,
    state: &BTreeMap<JobId, JobState>,
    instance: &Instance,
    jobs: &BTreeMap<JobId, usize>,
    slices: &[Vec<(Rational, Rational, JobId)>],
) -> Rational {
    let mut total = Rational::zero();
    for (id, st) in state {
        if st.machine != Some(machine) || st.completed || st.rejected {
            continue;
        }
        total += &instance.jobs[jobs[id]].size;
    }
    // Subtract processing done before `time` by jobs still counted.
    for (s, t, id) in &slices[machine] {
        match state.get(id) {
            Some(st) if st.machine == Some(machine) && !st.completed && !st.rejected => {}
            _ => continue,
        }
        let upto = if t < time { t } else { time };
        if s < upto {
            total -= upto - s;
        }
    }
    total
}
