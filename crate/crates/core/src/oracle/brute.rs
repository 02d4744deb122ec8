use std::collections::BTreeSet;

use num_traits::{One, Zero};

use crate::error::{Error, Result};
use crate::model::{Instance, Job};
use crate::rational::{ceil, int, rat, Rational};

/// Limits and tolerance for the exhaustive oracles.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OracleConfig {
    pub max_jobs: usize,
    pub max_machines: usize,
    /// Relative tolerance of the flow-time binary search.
    pub tolerance: Rational,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            max_jobs: 12,
            max_machines: 5,
            tolerance: rat(1, 1_000_000_000),
        }
    }
}

impl OracleConfig {
    fn check(&self, instance: &Instance) -> Result<()> {
        if instance.jobs.len() > self.max_jobs || instance.machines > self.max_machines {
            return Err(Error::TooLarge(format!(
                "{} jobs on {} machines (cap {} jobs, {} machines)",
                instance.jobs.len(),
                instance.machines,
                self.max_jobs,
                self.max_machines
            )));
        }
        instance.ensure_valid()
    }
}

/// Minimum over all assignments of the maximum machine load. The offline
/// benchmark never rejects.
pub fn brute_force_opt_load(instance: &Instance, config: &OracleConfig) -> Result<Rational> {
    config.check(instance)?;
    Ok(opt_assignment_load(instance).0)
}

/// The optimum and one assignment achieving it (`assignment[k]` is the
/// machine of `instance.jobs[k]`).
pub fn opt_assignment_load(instance: &Instance) -> (Rational, Vec<usize>) {
    let mut order: Vec<usize> = (0..instance.jobs.len()).collect();
    order.sort_by(|&a, &b| instance.jobs[b].size.cmp(&instance.jobs[a].size));

    // Greedy start gives a finite upper bound to prune against.
    let mut loads = vec![Rational::zero(); instance.machines];
    let mut best_assign = vec![0; instance.jobs.len()];
    for &k in &order {
        let job = &instance.jobs[k];
        let i = *job.allowed.iter().min_by(|&&a, &&b| loads[a].cmp(&loads[b])).expect("validated");
        loads[i] += &job.size;
        best_assign[k] = i;
    }
    let mut best = loads.iter().max().cloned().unwrap_or_else(Rational::zero);

    struct Search<'a> {
        jobs: &'a [Job],
        order: Vec<usize>,
        loads: Vec<Rational>,
        assign: Vec<usize>,
        symmetric: bool,
    }
    fn dfs(s: &mut Search, depth: usize, current: &Rational, best: &mut Rational, best_assign: &mut Vec<usize>) {
        if current >= best {
            return;
        }
        if depth == s.order.len() {
            *best = current.clone();
            best_assign.clone_from(&s.assign);
            return;
        }
        let k = s.order[depth];
        let job = &s.jobs[k];
        let mut tried: BTreeSet<Rational> = BTreeSet::new();
        for &i in &job.allowed {
            // With no restrictions at all, machines of equal load are interchangeable.
            if !tried.insert(s.loads[i].clone()) && s.symmetric {
                continue;
            }
            s.loads[i] += &job.size;
            s.assign[k] = i;
            let next = current.max(&s.loads[i]).clone();
            dfs(s, depth + 1, &next, best, best_assign);
            s.loads[i] -= &job.size;
        }
    }
    let mut s = Search {
        jobs: &instance.jobs,
        order,
        loads: vec![Rational::zero(); instance.machines],
        assign: vec![0; instance.jobs.len()],
        symmetric: unrestricted(instance),
    };
    dfs(&mut s, 0, &Rational::zero(), &mut best, &mut best_assign);
    (best, best_assign)
}

fn unrestricted(instance: &Instance) -> bool {
    instance.jobs.iter().all(|j| j.allowed.len() == instance.machines)
}

/// Preemptive single-machine feasibility with deadlines `r_j + T / w^f_j`,
/// decided by simulating earliest-deadline-first.
pub fn edf_feasible(jobs: &[&Job], t: &Rational) -> bool {
    let mut order: Vec<&Job> = jobs.to_vec();
    order.sort_by(|a, b| a.release.cmp(&b.release));
    let deadline = |j: &Job| &j.release + t / &j.flow_weight;

    // (deadline, index) -> remaining
    let mut ready: BTreeSet<(Rational, usize)> = BTreeSet::new();
    let mut remaining: Vec<Rational> = order.iter().map(|j| j.size.clone()).collect();
    let mut now = Rational::zero();
    let mut next = 0;
    while next < order.len() || !ready.is_empty() {
        if ready.is_empty() && now < order[next].release {
            now = order[next].release.clone();
        }
        while next < order.len() && order[next].release <= now {
            ready.insert((deadline(order[next]), next));
            next += 1;
        }
        let (d, k) = ready.iter().next().cloned().expect("non-empty");
        let finish = &now + &remaining[k];
        let horizon = order.get(next).map(|j| j.release.clone());
        match horizon {
            Some(r) if r < finish => {
                remaining[k] -= &r - &now;
                now = r;
            }
            _ => {
                if finish > d {
                    return false;
                }
                now = finish;
                ready.remove(&(d, k));
            }
        }
    }
    true
}

fn assignment_feasible(instance: &Instance, t: &Rational) -> bool {
    let mut order: Vec<usize> = (0..instance.jobs.len()).collect();
    order.sort_by(|&a, &b| {
        let (x, y) = (&instance.jobs[a], &instance.jobs[b]);
        (&y.size * &y.flow_weight).cmp(&(&x.size * &x.flow_weight))
    });
    fn dfs<'a>(jobs: &'a [Job], order: &[usize], bins: &mut Vec<Vec<&'a Job>>, t: &Rational, symmetric: bool) -> bool {
        let Some((&k, rest)) = order.split_first() else {
            return true;
        };
        let job = &jobs[k];
        let mut empty_tried = false;
        for &i in &job.allowed {
            if bins[i].is_empty() {
                if empty_tried && symmetric {
                    continue;
                }
                empty_tried = true;
            }
            bins[i].push(job);
            let ok = edf_feasible(&bins[i], t) && dfs(jobs, rest, bins, t, symmetric);
            bins[i].pop();
            if ok {
                return true;
            }
        }
        false
    }
    let symmetric = unrestricted(instance);
    dfs(&instance.jobs, &order, &mut vec![Vec::new(); instance.machines], t, symmetric)
}

/// Minimum over assignments of the maximum weighted flow-time, by binary
/// search on `T`. Exact when every job has unit size, unit flow weight and an
/// integer release; otherwise the returned value is a feasible `T` within the
/// configured relative tolerance of the optimum.
pub fn brute_force_opt_maxflow(instance: &Instance, config: &OracleConfig) -> Result<Rational> {
    config.check(instance)?;
    if instance.jobs.is_empty() {
        return Ok(Rational::zero());
    }
    let max_w = instance.jobs.iter().map(|j| &j.flow_weight).max().expect("non-empty").clone();
    let hi = instance.total_size() * max_w;
    let integral = instance
        .jobs
        .iter()
        .all(|j| j.size.is_one() && j.flow_weight.is_one() && j.release.is_integer());
    if integral {
        let (mut lo, mut hi) = (0i64, ceil(&hi).try_into().expect("small instance"));
        while lo + 1 < hi {
            let mid = (lo + hi) / 2;
            if assignment_feasible(instance, &int(mid)) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        return Ok(int(hi));
    }
    let (mut lo, mut hi) = (Rational::zero(), hi);
    while &hi - &lo > &config.tolerance * &hi {
        let mid = (&lo + &hi) / int(2);
        if assignment_feasible(instance, &mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ProblemKind;

    fn inst(machines: usize, jobs: Vec<Job>) -> Instance {
        Instance::new(machines, rat(1, 4), ProblemKind::MaxFlowTime, jobs)
    }

    #[test]
    fn load_examples() {
        let c = OracleConfig::default();
        let one = inst(2, vec![Job::new(0, int(0), int(5), [0, 1])]);
        assert_eq!(brute_force_opt_load(&one, &c).unwrap(), int(5));
        let two = inst(2, vec![Job::unit(0, int(0), [0]), Job::unit(1, int(0), [0])]);
        assert_eq!(brute_force_opt_load(&two, &c).unwrap(), int(2));
    }

    #[test]
    fn load_needs_search() {
        // Largest-first greedy ends at 7.
        let sizes = [3, 3, 2, 2, 2];
        let jobs = sizes.iter().enumerate().map(|(k, &s)| Job::new(k as u64, int(0), int(s), [0, 1])).collect();
        assert_eq!(brute_force_opt_load(&inst(2, jobs), &OracleConfig::default()).unwrap(), int(6));
    }

    #[test]
    fn too_large() {
        let jobs = (0..13).map(|k| Job::unit(k, int(0), [0])).collect();
        let err = brute_force_opt_load(&inst(1, jobs), &OracleConfig::default()).unwrap_err();
        assert_eq!(err.code(), "too-large");
    }

    #[test]
    fn edf_examples() {
        let a = Job::new(0, int(0), int(3), [0]).with_weights(int(1), int(2));
        assert!(edf_feasible(&[&a], &int(6)));
        assert!(!edf_feasible(&[&a], &rat(11, 2)));
        let (x, y) = (Job::unit(1, int(0), [0]), Job::unit(2, int(0), [0]));
        assert!(!edf_feasible(&[&x, &y], &int(1)));
        assert!(edf_feasible(&[&x, &y], &int(2)));
    }

    #[test]
    fn maxflow_examples() {
        let c = OracleConfig::default();
        let job = Job::unit(0, int(0), [0]).with_weights(int(1), int(4));
        let single = Instance::new(1, rat(1, 4), ProblemKind::GenWtdMaxFlowTime, vec![job]);
        let v = brute_force_opt_maxflow(&single, &c).unwrap();
        assert!(v >= int(4) && v - int(4) <= rat(4, 1_000_000_000));
        let stack = inst(2, (0..4).map(|k| Job::unit(k, int(0), [0])).collect());
        assert_eq!(brute_force_opt_maxflow(&stack, &c).unwrap(), int(4));
        let spread = inst(2, (0..4).map(|k| Job::unit(k, int(0), [0, 1])).collect());
        assert_eq!(brute_force_opt_maxflow(&spread, &c).unwrap(), int(2));
        assert_eq!(brute_force_opt_maxflow(&inst(1, vec![]), &c).unwrap(), int(0));
    }
}
