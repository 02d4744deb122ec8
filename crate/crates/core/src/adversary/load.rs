use num_traits::Zero;

use super::{AdversaryReport, Recorder};
use crate::engine::Policy;
use crate::error::{Error, Result};
use crate::model::{check_epsilon, JobId, ProblemKind};
use crate::rational::{int, pow2, rat, Rational};

fn check_power_of_four(m: usize, least: usize) -> Result<()> {
    if m >= least && m.is_power_of_two() && m.trailing_zeros() % 2 == 0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "machine count {m} must be a power of 4 and at least {least}"
        )))
    }
}

fn max_load<P: Policy>(rec: &Recorder<P>) -> (Rational, Vec<Rational>) {
    let loads: Vec<Rational> = rec.sim.bank().machines().iter().map(|s| s.backlog.clone()).collect();
    (loads.iter().max().cloned().unwrap_or_default(), loads)
}

/// Repeatedly pairs up the surviving machines and releases two unit jobs per
/// pair restricted to it. The machine of each pair that received a job
/// survives if it still holds one after the policy's rejections, so the
/// survivors' load grows by one per phase while the offline assignment (both
/// jobs to the other machine) never exceeds 2.
pub fn adv_load_unit<P: Policy>(epsilon: &Rational, m: usize, policy: P) -> Result<AdversaryReport> {
    check_epsilon(epsilon)?;
    check_power_of_four(m, 64)?;
    let mut rec = Recorder::new(policy, m);
    let t = Rational::zero();
    let floor = int(8) * epsilon * int(m as i64);
    let mut alive: Vec<usize> = (0..m).collect();
    let (mut phase_jobs, mut phase_machines) = (Vec::new(), Vec::new());

    while alive.len() >= 2 && int(alive.len() as i64) >= floor {
        phase_machines.push(alive.len());
        let mut chosen: Vec<(usize, Vec<JobId>)> = Vec::new();
        for pair in alive.chunks_exact(2) {
            let (a, b) = (pair[0], pair[1]);
            let mut got: Vec<(JobId, Option<usize>)> = Vec::new();
            for _ in 0..2 {
                let id = rec.jobs.len() as JobId;
                let online = rec.release(&t, int(1), vec![a, b], |_| a)?;
                got.push((id, online));
            }
            let to = |x: usize| got.iter().filter(|(_, o)| *o == Some(x)).map(|(j, _)| *j).collect::<Vec<_>>();
            let x = if !to(a).is_empty() {
                Some(a)
            } else if !to(b).is_empty() {
                Some(b)
            } else {
                None
            };
            if let Some(x) = x {
                let other = if x == a { b } else { a };
                for (j, _) in &got {
                    rec.offline[*j as usize] = other;
                }
                chosen.push((x, to(x)));
            }
        }
        phase_jobs.push(2 * (alive.len() / 2));
        let bank = rec.sim.bank();
        alive = chosen
            .into_iter()
            .filter(|(x, jobs)| jobs.iter().any(|j| bank.location(*j).map(|(mm, _)| mm) == Some(*x)))
            .map(|(x, _)| x)
            .collect();
        if alive.is_empty() {
            break;
        }
    }
    let (online, loads) = max_load(&rec);
    let phases = phase_jobs.len();
    rec.finish(
        ProblemKind::LoadBalancing,
        epsilon,
        online,
        int(2),
        (phases, phase_jobs, phase_machines),
        loads,
    )
}

/// Like [`adv_load_unit`], but phase `l` releases `2·8^l` jobs of size `8^-l`
/// per pair, so the number of phases is limited only by `m`. Applies to
/// policies that reject only at arrival.
pub fn adv_load_immediate<P: Policy>(
    epsilon: &Rational,
    m: usize,
    policy: P,
    phase_budget: usize,
) -> Result<AdversaryReport> {
    check_epsilon(epsilon)?;
    if *epsilon >= rat(1, 16) {
        return Err(Error::InvalidArgument("this construction needs epsilon < 1/16".into()));
    }
    check_power_of_four(m, 4)?;
    let phases = phase_budget.min(m.trailing_zeros() as usize / 2);
    let mut rec = Recorder::new(policy, m);
    let t = Rational::zero();
    let mut alive: Vec<usize> = (0..m).collect();
    let (mut phase_jobs, mut phase_machines) = (Vec::new(), Vec::new());
    let mut completed = 0;

    for l in 0..phases {
        let k = 8usize.pow(l as u32);
        let size = pow2(-3 * l as i64);
        phase_machines.push(alive.len());
        let mut x_counts: Vec<(usize, usize)> = Vec::new();
        for pair in alive.chunks_exact(2) {
            let (a, b) = (pair[0], pair[1]);
            let first = rec.jobs.len();
            let (mut on_a, mut on_b) = (0, 0);
            for _ in 0..2 * k {
                let online = rec.release(&t, size.clone(), vec![a, b], |_| a)?;
                if let Some(job) = rec.new_later_rejection() {
                    return Err(Error::NotImmediateReject(job));
                }
                match online {
                    Some(i) if i == a => on_a += 1,
                    Some(_) => on_b += 1,
                    None => {}
                }
            }
            let (x, count) = if on_a >= on_b { (a, on_a) } else { (b, on_b) };
            let other = if x == a { b } else { a };
            for o in &mut rec.offline[first..] {
                *o = other;
            }
            x_counts.push((x, count));
        }
        phase_jobs.push(2 * k * (alive.len() / 2));
        let want = alive.len() / 4;
        let next: Vec<usize> = x_counts
            .into_iter()
            .filter(|&(_, c)| 2 * c >= k)
            .map(|(x, _)| x)
            .take(want)
            .collect();
        // Fewer survivors than m_l/4 means the policy overspent its budget.
        let short = next.len() < want;
        alive = next;
        if short {
            break;
        }
        completed += 1;
    }
    let (online, loads) = max_load(&rec);
    rec.finish(
        ProblemKind::LoadBalancing,
        epsilon,
        online,
        int(2),
        (completed, phase_jobs, phase_machines),
        loads,
    )
}
