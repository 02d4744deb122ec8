use rejsched::engine::{simulate, Event, Trace};
use rejsched::flowtime::{Coupled, Variant};
use rejsched::gen::starvation_scenario;
use rejsched::rational::{int, rat};

const GOLDEN: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/../../fixtures/golden/ab_starvation_8.csv");

fn ab_trace() -> Trace {
    let inst = starvation_scenario(8);
    simulate(Coupled::new(&rat(1, 4), Some(int(2)), Variant::Weighted).unwrap(), &inst).unwrap()
}

/// Set `REJSCHED_BLESS=1` to rewrite the golden file.
#[test]
fn ab_on_the_opening_of_the_starvation_scenario() {
    let trace = ab_trace();
    if std::env::var_os("REJSCHED_BLESS").is_some() {
        std::fs::write(GOLDEN, trace.to_csv()).unwrap();
    }
    let golden = std::fs::read_to_string(GOLDEN).unwrap();
    assert_eq!(trace.to_csv(), golden);
    assert_eq!(Trace::from_csv(&golden).unwrap(), trace);
}

#[test]
fn ab_opening_dispatches_by_type_load() {
    let trace = ab_trace();
    let first: Vec<(u64, usize, String)> = trace
        .events
        .iter()
        .filter_map(|e| match e {
            Event::Dispatch { job, machine, level, .. } if *job < 8 => Some((*job, *machine, level.to_string())),
            _ => None,
        })
        .collect();
    let want = [(0, 0, "2"), (1, 1, "2"), (2, 2, "2"), (3, 3, "2"), (4, 0, "4"), (5, 2, "4"), (6, 0, "6"), (7, 0, "1")];
    let want: Vec<(u64, usize, String)> = want.iter().map(|&(j, m, l)| (j, m, l.to_string())).collect();
    assert_eq!(first, want);
    // The short job on machine 0 waits behind the stream of size-2 jobs.
    let last = trace.events.iter().rev().find(|e| matches!(e, Event::Complete { .. })).unwrap();
    assert_eq!(last, &Event::Complete { time: int(15), job: 7 });
    assert!(trace.rejected_jobs().is_empty());
}
