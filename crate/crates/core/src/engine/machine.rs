use std::collections::{BTreeMap, HashMap};

use num_traits::Zero;

use crate::model::{Job, JobId};
use crate::rational::Rational;

/// Queue identifier within one machine. The meaning of the two components is
/// policy specific: `(weight_class, density_class)` for A/B, `(size_class, 0)`
/// for the per-class load-balancing queues, `(0, 0)` for a single FIFO.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct QueueKey(pub i64, pub i64);

impl QueueKey {
    pub const FIFO: QueueKey = QueueKey(0, 0);
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Member {
    pub job: JobId,
    pub release: Rational,
    pub rank: u64,
    pub size: Rational,
    pub remaining: Rational,
    /// Multiplier turning remaining time into queue load (e.g. `2^w`).
    pub load_factor: Rational,
}

impl Member {
    pub fn from_job(job: &Job, load_factor: Rational) -> Self {
        Member {
            job: job.id,
            release: job.release.clone(),
            rank: job.rank,
            size: job.size.clone(),
            remaining: job.size.clone(),
            load_factor,
        }
    }

    pub fn is_partial(&self) -> bool {
        self.remaining < self.size
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Queue {
    pub key: QueueKey,
    /// Ordered by (release, rank).
    pub members: Vec<Member>,
    pub load: Rational,
}

impl Queue {
    fn new(key: QueueKey) -> Self {
        Queue {
            key,
            members: Vec::new(),
            load: Rational::zero(),
        }
    }

    pub fn head(&self) -> Option<&Member> {
        self.members.first()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Load recomputed from the members.
    pub fn derived_load(&self) -> Rational {
        self.members
            .iter()
            .map(|m| &m.load_factor * &m.remaining)
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MachineState {
    pub id: usize,
    pub queues: BTreeMap<QueueKey, Queue>,
    /// Total unweighted remaining work of pending jobs.
    pub backlog: Rational,
}

impl MachineState {
    fn new(id: usize) -> Self {
        MachineState {
            id,
            queues: BTreeMap::new(),
            backlog: Rational::zero(),
        }
    }

    pub fn queue(&self, key: &QueueKey) -> Option<&Queue> {
        self.queues.get(key)
    }

    pub fn load(&self, key: &QueueKey) -> Rational {
        self.queues
            .get(key)
            .map(|q| q.load.clone())
            .unwrap_or_else(Rational::zero)
    }

    pub fn members(&self) -> impl Iterator<Item = &Member> {
        self.queues.values().flat_map(|q| q.members.iter())
    }

    pub fn pending_count(&self) -> usize {
        self.queues.values().map(|q| q.members.len()).sum()
    }

    pub fn is_idle(&self) -> bool {
        self.queues.is_empty()
    }

    /// Earliest (release, rank) pending job on the machine.
    pub fn earliest(&self) -> Option<&Member> {
        self.members().min_by(|a, b| (&a.release, a.rank).cmp(&(&b.release, b.rank)))
    }
}

/// Pending jobs of every machine, with incrementally maintained loads.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MachineBank {
    machines: Vec<MachineState>,
    location: HashMap<JobId, (usize, QueueKey)>,
}

impl MachineBank {
    pub fn new(machines: usize) -> Self {
        MachineBank {
            machines: (0..machines).map(MachineState::new).collect(),
            location: HashMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.machines.len()
    }

    pub fn is_empty(&self) -> bool {
        self.location.is_empty()
    }

    pub fn machine(&self, i: usize) -> &MachineState {
        &self.machines[i]
    }

    pub fn machines(&self) -> &[MachineState] {
        &self.machines
    }

    pub fn location(&self, job: JobId) -> Option<(usize, QueueKey)> {
        self.location.get(&job).copied()
    }

    pub fn contains(&self, job: JobId) -> bool {
        self.location.contains_key(&job)
    }

    pub fn member(&self, job: JobId) -> Option<&Member> {
        let (m, key) = self.location.get(&job)?;
        self.machines[*m].queues[key]
            .members
            .iter()
            .find(|x| x.job == job)
    }

    pub fn pending_jobs(&self) -> impl Iterator<Item = JobId> + '_ {
        self.location.keys().copied()
    }

    pub fn insert(&mut self, machine: usize, key: QueueKey, member: Member) {
        let state = &mut self.machines[machine];
        state.backlog += &member.remaining;
        let queue = state.queues.entry(key).or_insert_with(|| Queue::new(key));
        queue.load += &member.load_factor * &member.remaining;
        let pos = queue
            .members
            .partition_point(|m| (&m.release, m.rank) < (&member.release, member.rank));
        self.location.insert(member.job, (machine, key));
        queue.members.insert(pos, member);
    }

    pub fn remove(&mut self, job: JobId) -> Option<(usize, Member)> {
        let (machine, key) = self.location.remove(&job)?;
        let state = &mut self.machines[machine];
        let queue = state.queues.get_mut(&key).expect("located queue exists");
        let pos = queue.members.iter().position(|m| m.job == job)?;
        let member = queue.members.remove(pos);
        queue.load -= &member.load_factor * &member.remaining;
        state.backlog -= &member.remaining;
        if queue.members.is_empty() {
            state.queues.remove(&key);
        }
        Some((machine, member))
    }

    /// Processes `amount` of `job`. The caller keeps `amount <= remaining`.
    pub fn progress(&mut self, job: JobId, amount: &Rational) {
        let (machine, key) = self.location[&job];
        let state = &mut self.machines[machine];
        let queue = state.queues.get_mut(&key).expect("located queue exists");
        let member = queue
            .members
            .iter_mut()
            .find(|m| m.job == job)
            .expect("located member exists");
        debug_assert!(amount <= &member.remaining);
        member.remaining -= amount;
        queue.load -= &member.load_factor * amount;
        state.backlog -= amount;
    }

    /// Confirms every incremental load against a from-scratch sum.
    pub fn loads_consistent(&self) -> bool {
        self.machines.iter().all(|s| {
            let backlog: Rational = s.members().map(|m| m.remaining.clone()).sum();
            backlog == s.backlog && s.queues.values().all(|q| q.derived_load() == q.load)
        })
    }
}
