use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::model::JobId;
use crate::rational::{fmt, parse, Rational};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RejectReason {
    /// Removed by load-balancing stage-2 pruning.
    Pruned,
    /// Unfinished at the end of the segment after its release segment.
    SegmentExpired,
    /// Any other policy-initiated rejection.
    Policy,
}

impl RejectReason {
    pub fn name(self) -> &'static str {
        match self {
            RejectReason::Pruned => "pruned",
            RejectReason::SegmentExpired => "segment",
            RejectReason::Policy => "policy",
        }
    }

    pub fn from_name(s: &str) -> Result<Self> {
        match s {
            "pruned" => Ok(RejectReason::Pruned),
            "segment" => Ok(RejectReason::SegmentExpired),
            "policy" => Ok(RejectReason::Policy),
            _ => Err(Error::Parse(format!("unknown reject reason {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Event {
    /// `level` is the policy's queue-position measure; `backlog` is the
    /// machine's total remaining work just before the job joins it.
    Dispatch {
        time: Rational,
        job: JobId,
        machine: usize,
        level: Rational,
        backlog: Rational,
    },
    RejectAtArrival {
        time: Rational,
        job: JobId,
    },
    RejectLater {
        time: Rational,
        job: JobId,
        reason: RejectReason,
    },
    /// Recorded when the slice closes, so it sorts by `end`.
    ProcessSlice {
        machine: usize,
        job: JobId,
        start: Rational,
        end: Rational,
    },
    Complete {
        time: Rational,
        job: JobId,
    },
    /// A doubling wrapper starts a phase with guess `t_star`; the first phase is recorded too.
    PhaseBoundary {
        time: Rational,
        t_star: Rational,
    },
}

impl Event {
    /// The instant at which the event was recorded.
    pub fn time(&self) -> &Rational {
        match self {
            Event::Dispatch { time, .. }
            | Event::RejectAtArrival { time, .. }
            | Event::RejectLater { time, .. }
            | Event::Complete { time, .. }
            | Event::PhaseBoundary { time, .. } => time,
            Event::ProcessSlice { end, .. } => end,
        }
    }

    pub fn job(&self) -> Option<JobId> {
        match self {
            Event::Dispatch { job, .. }
            | Event::RejectAtArrival { job, .. }
            | Event::RejectLater { job, .. }
            | Event::ProcessSlice { job, .. }
            | Event::Complete { job, .. } => Some(*job),
            Event::PhaseBoundary { .. } => None,
        }
    }

    pub fn is_arrival(&self) -> bool {
        matches!(self, Event::Dispatch { .. } | Event::RejectAtArrival { .. })
    }

    pub fn is_rejection(&self) -> bool {
        matches!(self, Event::RejectAtArrival { .. } | Event::RejectLater { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Trace {
    pub policy: String,
    pub machines: usize,
    pub events: Vec<Event>,
}

pub const CSV_HEADER: &str = "event_type,time_num,time_den,job,machine,aux";

fn push_row(out: &mut String, kind: &str, time: &Rational, job: Option<JobId>, machine: Option<usize>, aux: &str) {
    let job = job.map(|j| j.to_string()).unwrap_or_default();
    let machine = machine.map(|m| m.to_string()).unwrap_or_default();
    let _ = writeln!(
        out,
        "{kind},{},{},{job},{machine},{aux}",
        time.numer(),
        time.denom()
    );
}

impl Trace {
    pub fn new(policy: impl Into<String>, machines: usize) -> Self {
        Trace {
            policy: policy.into(),
            machines,
            events: Vec::new(),
        }
    }

    pub fn phase_boundaries(&self) -> Vec<(Rational, Rational)> {
        self.events
            .iter()
            .filter_map(|e| match e {
                Event::PhaseBoundary { time, t_star } => Some((time.clone(), t_star.clone())),
                _ => None,
            })
            .collect()
    }

    pub fn dispatches(&self) -> impl Iterator<Item = (JobId, usize, &Rational)> {
        self.events.iter().filter_map(|e| match e {
            Event::Dispatch { job, machine, time, .. } => Some((*job, *machine, time)),
            _ => None,
        })
    }

    pub fn rejected_jobs(&self) -> Vec<JobId> {
        self.events
            .iter()
            .filter(|e| e.is_rejection())
            .filter_map(Event::job)
            .collect()
    }

    /// Serializes as CSV. Rationals are split into numerator and denominator
    /// columns (or `n/d` strings inside `aux`), so the encoding is exact.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str(CSV_HEADER);
        out.push('\n');
        let zero = Rational::default();
        push_row(&mut out, "policy", &zero, None, Some(self.machines), &self.policy);
        for e in &self.events {
            match e {
                Event::Dispatch { time, job, machine, level, backlog } => push_row(
                    &mut out,
                    "dispatch",
                    time,
                    Some(*job),
                    Some(*machine),
                    &format!("{}|{}", fmt(level), fmt(backlog)),
                ),
                Event::RejectAtArrival { time, job } => {
                    push_row(&mut out, "reject_at_arrival", time, Some(*job), None, "")
                }
                Event::RejectLater { time, job, reason } => {
                    push_row(&mut out, "reject_later", time, Some(*job), None, reason.name())
                }
                Event::ProcessSlice { machine, job, start, end } => {
                    push_row(&mut out, "slice", start, Some(*job), Some(*machine), &fmt(end))
                }
                Event::Complete { time, job } => push_row(&mut out, "complete", time, Some(*job), None, ""),
                Event::PhaseBoundary { time, t_star } => {
                    push_row(&mut out, "phase", time, None, None, &fmt(t_star))
                }
            }
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Trace> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        match lines.next() {
            Some(h) if h.trim() == CSV_HEADER => {}
            other => return Err(Error::Parse(format!("bad trace header {other:?}"))),
        }
        let mut trace = Trace::default();
        for (n, line) in lines.enumerate() {
            let bad = |what: &str| Error::Parse(format!("trace row {}: {what}: {line:?}", n + 2));
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != 6 {
                return Err(bad("expected 6 columns"));
            }
            let time = parse(&format!("{}/{}", cols[1], cols[2])).map_err(|_| bad("time"))?;
            let job = || cols[3].parse::<JobId>().map_err(|_| bad("job"));
            let machine = || cols[4].parse::<usize>().map_err(|_| bad("machine"));
            let aux = cols[5];
            let event = match cols[0] {
                "policy" => {
                    trace.policy = aux.to_string();
                    trace.machines = machine()?;
                    continue;
                }
                "dispatch" => {
                    let (level, backlog) = aux.split_once('|').ok_or_else(|| bad("aux"))?;
                    Event::Dispatch {
                        time,
                        job: job()?,
                        machine: machine()?,
                        level: parse(level)?,
                        backlog: parse(backlog)?,
                    }
                }
                "reject_at_arrival" => Event::RejectAtArrival { time, job: job()? },
                "reject_later" => Event::RejectLater {
                    time,
                    job: job()?,
                    reason: RejectReason::from_name(aux)?,
                },
                "slice" => Event::ProcessSlice {
                    machine: machine()?,
                    job: job()?,
                    start: time,
                    end: parse(aux)?,
                },
                "complete" => Event::Complete { time, job: job()? },
                "phase" => Event::PhaseBoundary {
                    time,
                    t_star: parse(aux)?,
                },
                _ => return Err(bad("unknown event type")),
            };
            trace.events.push(event);
        }
        Ok(trace)
    }
}
