//! MEC host resource pool.
//!
//! Admission keeps the sum of allocations within capacity, component by
//! component. `compute(N)` turns an instruction count into a completion time
//! using either the stipulated rate (segregation) or the rate scaled up by
//! `R / Σ r_j` over the apps active at the time of the call (fair sharing).
//! The scaled rate is frozen when the task is created.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::SimTime;
use crate::ids::{AppId, HostId};

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ResourceVector {
    /// instructions per second
    pub cpu: f64,
    /// bytes
    #[serde(default)]
    pub ram: f64,
    /// bytes
    #[serde(default)]
    pub disk: f64,
}

impl ResourceVector {
    pub const fn new(cpu: f64, ram: f64, disk: f64) -> Self {
        ResourceVector { cpu, ram, disk }
    }

    pub const fn cpu(cpu: f64) -> Self {
        ResourceVector {
            cpu,
            ram: 0.0,
            disk: 0.0,
        }
    }

    pub fn is_valid(&self) -> bool {
        [self.cpu, self.ram, self.disk]
            .iter()
            .all(|v| v.is_finite() && *v >= 0.0)
    }

    fn add(&self, o: &ResourceVector) -> ResourceVector {
        ResourceVector::new(self.cpu + o.cpu, self.ram + o.ram, self.disk + o.disk)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResourceKind {
    Cpu,
    Ram,
    Disk,
}

impl fmt::Display for ResourceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ResourceKind::Cpu => "cpu",
            ResourceKind::Ram => "ram",
            ResourceKind::Disk => "disk",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SchedulingMode {
    Segregation,
    #[default]
    FairSharing,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ComputeError {
    #[error("admission rejected: not enough {0}")]
    Rejected(ResourceKind),
    #[error("invalid resource request")]
    InvalidRequest,
    #[error("unknown {0}")]
    UnknownApp(AppId),
    #[error("instruction count must be positive")]
    NonPositiveInstructions,
    #[error("{0} has a zero cpu rate")]
    ZeroRate(AppId),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TaskId(pub u64);

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ComputeTask {
    pub id: TaskId,
    pub app: AppId,
    pub instructions: f64,
    pub requested_at: SimTime,
    /// Later than `requested_at` when queued behind the app's previous task.
    pub started_at: SimTime,
    pub effective_rate: f64,
    pub completes_at: SimTime,
}

#[derive(Clone, Debug)]
struct Allocation {
    request: ResourceVector,
    dummy: bool,
    tasks: VecDeque<ComputeTask>,
}

#[derive(Clone, Debug)]
pub struct HostState {
    pub id: HostId,
    pub capacity: ResourceVector,
    pub mode: SchedulingMode,
    pub services: BTreeSet<String>,
    allocations: BTreeMap<AppId, Allocation>,
    next_app: u32,
    next_task: u64,
}

impl HostState {
    pub fn new(id: HostId, capacity: ResourceVector, mode: SchedulingMode) -> Self {
        HostState {
            id,
            capacity,
            mode,
            services: BTreeSet::new(),
            allocations: BTreeMap::new(),
            next_app: 1,
            next_task: 1,
        }
    }

    pub fn with_services<I, S>(mut self, services: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.services = services.into_iter().map(Into::into).collect();
        self
    }

    pub fn allocated(&self) -> ResourceVector {
        self.allocations
            .values()
            .fold(ResourceVector::default(), |acc, a| acc.add(&a.request))
    }

    /// Σ r_j / R.
    pub fn utilization(&self) -> f64 {
        if self.capacity.cpu > 0.0 {
            self.allocated().cpu / self.capacity.cpu
        } else {
            1.0
        }
    }

    pub fn allocation(&self, app: AppId) -> Option<ResourceVector> {
        self.allocations.get(&app).map(|a| a.request)
    }

    pub fn app_count(&self) -> usize {
        self.allocations.len()
    }

    /// Would `request` fit next to the current allocations?
    pub fn fits(&self, request: &ResourceVector) -> Result<(), ComputeError> {
        if !request.is_valid() {
            return Err(ComputeError::InvalidRequest);
        }
        let total = self.allocated().add(request);
        if total.cpu > self.capacity.cpu {
            return Err(ComputeError::Rejected(ResourceKind::Cpu));
        }
        if total.ram > self.capacity.ram {
            return Err(ComputeError::Rejected(ResourceKind::Ram));
        }
        if total.disk > self.capacity.disk {
            return Err(ComputeError::Rejected(ResourceKind::Disk));
        }
        Ok(())
    }

    pub fn admit(&mut self, request: ResourceVector) -> Result<AppId, ComputeError> {
        self.insert(request, false)
    }

    /// An allocation with no logic that always counts as active.
    pub fn install_dummy_load(&mut self, cpu_rate: f64) -> Result<AppId, ComputeError> {
        self.insert(ResourceVector::cpu(cpu_rate), true)
    }

    fn insert(&mut self, request: ResourceVector, dummy: bool) -> Result<AppId, ComputeError> {
        self.fits(&request)?;
        let id = AppId(self.next_app);
        self.next_app += 1;
        self.allocations.insert(
            id,
            Allocation {
                request,
                dummy,
                tasks: VecDeque::new(),
            },
        );
        Ok(id)
    }

    /// Removes the allocation and returns the tasks it still had queued or
    /// running, so their completion events can be cancelled.
    pub fn release(&mut self, app: AppId) -> Result<Vec<TaskId>, ComputeError> {
        let alloc = self
            .allocations
            .remove(&app)
            .ok_or(ComputeError::UnknownApp(app))?;
        Ok(alloc.tasks.iter().map(|t| t.id).collect())
    }

    /// Rate `app` would get for a computation requested at `now`.
    pub fn effective_rate(&self, app: AppId, now: SimTime) -> Result<f64, ComputeError> {
        let own = self
            .allocations
            .get(&app)
            .ok_or(ComputeError::UnknownApp(app))?
            .request
            .cpu;
        if own <= 0.0 {
            return Err(ComputeError::ZeroRate(app));
        }
        Ok(match self.mode {
            SchedulingMode::Segregation => own,
            SchedulingMode::FairSharing => {
                let others: f64 = self
                    .allocations
                    .iter()
                    .filter(|(id, a)| **id != app && a.is_active(now))
                    .map(|(_, a)| a.request.cpu)
                    .sum();
                own * self.capacity.cpu / (own + others)
            }
        })
    }

    /// Creates a task of `instructions` for `app`. The task starts at `now`,
    /// or when the app's previous task completes if that is later.
    pub fn compute(
        &mut self,
        app: AppId,
        instructions: f64,
        now: SimTime,
    ) -> Result<ComputeTask, ComputeError> {
        if !(instructions > 0.0 && instructions.is_finite()) {
            return Err(ComputeError::NonPositiveInstructions);
        }
        let rate = self.effective_rate(app, now)?;
        let id = TaskId(self.next_task);
        self.next_task += 1;
        let alloc = self.allocations.get_mut(&app).expect("rate lookup succeeded");
        alloc.tasks.retain(|t| t.completes_at > now);
        let started_at = alloc
            .tasks
            .back()
            .map_or(now, |t| t.completes_at.max(now));
        let task = ComputeTask {
            id,
            app,
            instructions,
            requested_at: now,
            started_at,
            effective_rate: rate,
            completes_at: started_at.after(instructions / rate),
        };
        alloc.tasks.push_back(task);
        Ok(task)
    }

    /// Drops a finished task from its app's queue.
    pub fn finish(&mut self, app: AppId, task: TaskId) {
        if let Some(a) = self.allocations.get_mut(&app) {
            a.tasks.retain(|t| t.id != task);
        }
    }
}

impl Allocation {
    fn is_active(&self, now: SimTime) -> bool {
        self.dummy || self.tasks.iter().any(|t| t.completes_at > now)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn host(r: f64, mode: SchedulingMode) -> HostState {
        HostState::new(HostId(1), ResourceVector::new(r, 1e9, 1e9), mode)
    }

    #[test]
    fn admission_boundary() {
        let mut h = host(1000.0, SchedulingMode::FairSharing);
        h.admit(ResourceVector::cpu(700.0)).unwrap();
        assert_eq!(
            h.fits(&ResourceVector::cpu(301.0)),
            Err(ComputeError::Rejected(ResourceKind::Cpu))
        );
        h.admit(ResourceVector::cpu(300.0)).unwrap();
        assert_eq!(h.allocated().cpu, 1000.0);
    }

    #[test]
    fn ram_rejection_never_allocates() {
        let mut h = HostState::new(
            HostId(1),
            ResourceVector::new(1000.0, 100.0, 100.0),
            SchedulingMode::Segregation,
        );
        let before = h.allocated();
        assert_eq!(
            h.admit(ResourceVector::new(10.0, 101.0, 0.0)),
            Err(ComputeError::Rejected(ResourceKind::Ram))
        );
        assert_eq!(h.allocated(), before);
        assert_eq!(h.app_count(), 0);
    }

    #[test]
    fn segregation_rate_is_stipulated() {
        let mut h = host(1e7, SchedulingMode::Segregation);
        let a = h.admit(ResourceVector::cpu(1e6)).unwrap();
        let b = h.admit(ResourceVector::cpu(2e6)).unwrap();
        h.compute(b, 1e9, SimTime::ZERO).unwrap();
        let t = h.compute(a, 1e6, SimTime::ZERO).unwrap();
        assert_eq!(t.completes_at, SimTime::from_secs_f64(1.0));
    }

    #[test]
    fn fair_sharing_scales_by_active_set() {
        let mut h = host(100.0, SchedulingMode::FairSharing);
        let a1 = h.admit(ResourceVector::cpu(20.0)).unwrap();
        let a2 = h.admit(ResourceVector::cpu(30.0)).unwrap();
        h.compute(a2, 1e6, SimTime::ZERO).unwrap();
        let t = h.compute(a1, 80.0, SimTime::ZERO).unwrap();
        assert_eq!(t.effective_rate, 40.0);
        assert_eq!(t.completes_at, SimTime::from_secs_f64(2.0));
    }

    #[test]
    fn fair_sharing_at_full_admission_equals_stipulated() {
        let mut h = host(100.0, SchedulingMode::FairSharing);
        let a = h.admit(ResourceVector::cpu(60.0)).unwrap();
        h.install_dummy_load(40.0).unwrap();
        assert_eq!(h.effective_rate(a, SimTime::ZERO).unwrap(), 60.0);
    }

    #[test]
    fn dummy_load_counts_under_fair_sharing_only() {
        let mut fair = host(100.0, SchedulingMode::FairSharing);
        fair.install_dummy_load(50.0).unwrap();
        let a = fair.admit(ResourceVector::cpu(25.0)).unwrap();
        let r = fair.effective_rate(a, SimTime::ZERO).unwrap();
        assert!((r - 100.0 / 3.0).abs() < 1e-12);

        let mut seg = host(100.0, SchedulingMode::Segregation);
        seg.install_dummy_load(50.0).unwrap();
        let a = seg.admit(ResourceVector::cpu(25.0)).unwrap();
        assert_eq!(seg.effective_rate(a, SimTime::ZERO).unwrap(), 25.0);

        assert_eq!(
            seg.install_dummy_load(101.0),
            Err(ComputeError::Rejected(ResourceKind::Cpu))
        );
    }

    #[test]
    fn release_cancels_and_frees() {
        let mut h = host(100.0, SchedulingMode::FairSharing);
        let before = h.allocated();
        let a = h.admit(ResourceVector::cpu(10.0)).unwrap();
        let t = h.compute(a, 100.0, SimTime::ZERO).unwrap();
        assert_eq!(h.release(a), Ok(vec![t.id]));
        assert_eq!(h.allocated(), before);
        assert_eq!(h.release(a), Err(ComputeError::UnknownApp(a)));
    }

    #[test]
    fn bad_compute_calls() {
        let mut h = host(100.0, SchedulingMode::FairSharing);
        let a = h.admit(ResourceVector::cpu(10.0)).unwrap();
        assert_eq!(
            h.compute(a, 0.0, SimTime::ZERO),
            Err(ComputeError::NonPositiveInstructions)
        );
        assert_eq!(
            h.compute(AppId(99), 1.0, SimTime::ZERO),
            Err(ComputeError::UnknownApp(AppId(99)))
        );
    }

    #[test]
    fn second_task_queues_behind_first() {
        let mut h = host(10.0, SchedulingMode::Segregation);
        let a = h.admit(ResourceVector::cpu(10.0)).unwrap();
        let t1 = h.compute(a, 10.0, SimTime::ZERO).unwrap();
        let t2 = h.compute(a, 10.0, SimTime::from_millis(500)).unwrap();
        assert_eq!(t2.started_at, t1.completes_at);
        assert_eq!(t2.completes_at, SimTime::from_secs_f64(2.0));
    }

    #[test]
    fn completed_tasks_leave_the_active_set() {
        let mut h = host(100.0, SchedulingMode::FairSharing);
        let a = h.admit(ResourceVector::cpu(50.0)).unwrap();
        let b = h.admit(ResourceVector::cpu(50.0)).unwrap();
        let tb = h.compute(b, 50.0, SimTime::ZERO).unwrap();
        assert_eq!(h.effective_rate(a, SimTime::ZERO).unwrap(), 50.0);
        assert_eq!(h.effective_rate(a, tb.completes_at).unwrap(), 100.0);
    }

    proptest! {
        #[test]
        fn fair_share_formula_and_bounds(
            cap in 1.0f64..1e9,
            fracs in prop::collection::vec(0.01f64..1.0, 1..8),
            busy in prop::collection::vec(any::<bool>(), 8),
            fill in any::<bool>(),
        ) {
            // scale requests into admission
            let total: f64 = fracs.iter().sum();
            let scale = if fill { cap / total } else { cap / total * 0.9 };
            let mut h = host(cap, SchedulingMode::FairSharing);
            let mut apps = Vec::new();
            for f in &fracs {
                let r = f * scale;
                if let Ok(id) = h.admit(ResourceVector::cpu(r)) {
                    apps.push((id, r));
                }
            }
            prop_assume!(!apps.is_empty());
            let now = SimTime::ZERO;
            for (i, (id, _)) in apps.iter().enumerate().skip(1) {
                if busy[i % busy.len()] {
                    h.compute(*id, 1e12, now).unwrap();
                }
            }
            let (caller, r_i) = apps[0];
            let active: f64 = r_i + apps.iter().enumerate().skip(1)
                .filter(|(i, _)| busy[i % busy.len()])
                .map(|(_, a)| a.1)
                .sum::<f64>();
            let got = h.effective_rate(caller, now).unwrap();
            let want = r_i * cap / active;
            prop_assert!((got - want).abs() <= 4.0 * f64::EPSILON * want);
            prop_assert!(got >= r_i * (1.0 - 4.0 * f64::EPSILON));
            prop_assert!(h.allocated().cpu <= cap * (1.0 + 1e-12));
            if (active - cap).abs() > 1e-9 * cap {
                prop_assert!(got > r_i);
            }
        }

        #[test]
        fn segregation_completion_is_bit_identical_under_contention(
            rate in 1.0f64..1e6,
            n in 1.0f64..1e9,
            others in prop::collection::vec((1.0f64..1e6, 1.0f64..1e9), 0..6),
            at_ms in 0u64..10_000,
        ) {
            let cap = (rate + others.iter().map(|o| o.0).sum::<f64>()) * 1.001;
            let now = SimTime::from_millis(at_ms);

            let mut lone = host(cap, SchedulingMode::Segregation);
            let a = lone.admit(ResourceVector::cpu(rate)).unwrap();
            let alone = lone.compute(a, n, now).unwrap();

            let mut busy = host(cap, SchedulingMode::Segregation);
            let a = busy.admit(ResourceVector::cpu(rate)).unwrap();
            for (r, m) in &others {
                let id = busy.admit(ResourceVector::cpu(*r)).unwrap();
                busy.compute(id, *m, SimTime::ZERO).unwrap();
            }
            let contended = busy.compute(a, n, now).unwrap();
            prop_assert_eq!(alone.completes_at, contended.completes_at);
            prop_assert_eq!(alone.effective_rate.to_bits(), contended.effective_rate.to_bits());
        }
    }
}
