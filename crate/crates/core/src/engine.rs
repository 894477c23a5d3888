//! Deterministic discrete-event kernel.
//!
//! Time is an integer count of microseconds, events with equal fire times are
//! dispatched in insertion order, and the whole loop is single threaded. The
//! real-time runner paces dispatch against the wall clock and accepts events
//! from other threads through an ingress channel.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashSet};
use std::fmt;
use std::ops::{Add, Sub};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering as AtomicOrdering};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

const MICROS_PER_SEC: f64 = 1_000_000.0;

/// Simulated time, stored as whole microseconds since the start of the run.
#[derive(
    Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct SimTime(u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);
    pub const MAX: SimTime = SimTime(u64::MAX);

    pub const fn from_micros(us: u64) -> Self {
        SimTime(us)
    }

    pub const fn from_millis(ms: u64) -> Self {
        SimTime(ms * 1_000)
    }

    /// Rounds to the nearest microsecond. Negative and NaN inputs map to zero,
    /// values beyond the representable range saturate.
    pub fn from_secs_f64(secs: f64) -> Self {
        if secs.is_nan() || secs <= 0.0 {
            return SimTime::ZERO;
        }
        let us = (secs * MICROS_PER_SEC).round();
        if us >= u64::MAX as f64 {
            SimTime::MAX
        } else {
            SimTime(us as u64)
        }
    }

    pub const fn as_micros(self) -> u64 {
        self.0
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / MICROS_PER_SEC
    }

    /// `self + secs`, saturating. `secs` must be non-negative.
    pub fn after(self, secs: f64) -> Self {
        self + SimTime::from_secs_f64(secs)
    }

    pub fn saturating_sub(self, other: SimTime) -> SimTime {
        SimTime(self.0.saturating_sub(other.0))
    }
}

impl Add for SimTime {
    type Output = SimTime;
    fn add(self, rhs: SimTime) -> SimTime {
        SimTime(self.0.saturating_add(rhs.0))
    }
}

impl Sub for SimTime {
    type Output = SimTime;
    fn sub(self, rhs: SimTime) -> SimTime {
        self.saturating_sub(rhs)
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{:06}", self.0 / 1_000_000, self.0 % 1_000_000)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EngineError {
    #[error("cannot schedule at {at}: clock is already at {now}")]
    SchedulingInPast { at: SimTime, now: SimTime },
    #[error("pace must be a positive finite number, got {0}")]
    InvalidPace(f64),
}

/// Handle to a scheduled event, usable for cancellation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EventHandle(u64);

impl EventHandle {
    pub fn seq(self) -> u64 {
        self.0
    }
}

struct Entry<E> {
    at: SimTime,
    seq: u64,
    payload: E,
}

impl<E> PartialEq for Entry<E> {
    fn eq(&self, other: &Self) -> bool {
        self.at == other.at && self.seq == other.seq
    }
}

impl<E> Eq for Entry<E> {}

impl<E> PartialOrd for Entry<E> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<E> Ord for Entry<E> {
    // reversed: BinaryHeap is a max-heap
    fn cmp(&self, other: &Self) -> Ordering {
        other.at.cmp(&self.at).then_with(|| other.seq.cmp(&self.seq))
    }
}

/// Future event list plus the simulated clock.
pub struct Scheduler<E> {
    now: SimTime,
    next_seq: u64,
    queue: BinaryHeap<Entry<E>>,
    cancelled: HashSet<u64>,
}

impl<E> Default for Scheduler<E> {
    fn default() -> Self {
        Self::new()
    }
}

impl<E> Scheduler<E> {
    pub fn new() -> Self {
        Scheduler {
            now: SimTime::ZERO,
            next_seq: 0,
            queue: BinaryHeap::new(),
            cancelled: HashSet::new(),
        }
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    pub fn schedule_at(&mut self, at: SimTime, payload: E) -> Result<EventHandle, EngineError> {
        if at < self.now {
            return Err(EngineError::SchedulingInPast { at, now: self.now });
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.queue.push(Entry { at, seq, payload });
        Ok(EventHandle(seq))
    }

    /// Schedules `delay_secs` after the current clock. Negative delays are
    /// clamped to zero.
    pub fn schedule_in(&mut self, delay_secs: f64, payload: E) -> EventHandle {
        let at = self.now.after(delay_secs.max(0.0));
        self.schedule_at(at, payload)
            .expect("a non-negative delay never lands in the past")
    }

    /// Marks a pending event as cancelled. Returns false if the handle was
    /// already cancelled.
    pub fn cancel(&mut self, handle: EventHandle) -> bool {
        if handle.0 >= self.next_seq {
            return false;
        }
        self.cancelled.insert(handle.0)
    }

    /// Number of queued entries, including cancelled ones not yet discarded.
    pub fn pending(&self) -> usize {
        self.queue.len()
    }

    /// Fire time of the next live event.
    pub fn peek_time(&mut self) -> Option<SimTime> {
        while let Some(top) = self.queue.peek() {
            if self.cancelled.remove(&top.seq) {
                self.queue.pop();
                continue;
            }
            return Some(top.at);
        }
        None
    }

    fn pop_due(&mut self, limit: SimTime) -> Option<(SimTime, E)> {
        let at = self.peek_time()?;
        if at > limit {
            return None;
        }
        let entry = self.queue.pop()?;
        self.now = entry.at;
        Some((entry.at, entry.payload))
    }

    fn advance_to(&mut self, t: SimTime) {
        if t > self.now {
            self.now = t;
        }
    }
}

/// The simulated system. The engine hands every dispatched event to
/// [`Model::handle`] together with the scheduler, so handlers can schedule
/// follow-ups.
pub trait Model {
    type Event;

    fn handle(&mut self, sched: &mut Scheduler<Self::Event>, event: Self::Event);
}

/// Configuration of the wall-clock paced runner.
#[derive(Clone, Debug)]
pub struct RealtimeConfig {
    /// Simulated seconds per wall second; 1.0 is real time.
    pub pace: f64,
    /// Dispatch lag beyond which an overrun is counted and logged.
    pub overrun_threshold: Duration,
    /// Stop once the clock reaches this time.
    pub until: SimTime,
}

impl Default for RealtimeConfig {
    fn default() -> Self {
        RealtimeConfig {
            pace: 1.0,
            overrun_threshold: Duration::from_millis(50),
            until: SimTime::MAX,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct RealtimeReport {
    pub events: u64,
    pub injected: u64,
    pub overruns: u64,
    pub max_lag: Duration,
    pub wall: Duration,
}

/// State the runner publishes for other threads: current dispatch lag, a stop
/// flag, and whether the loop is running.
#[derive(Debug, Default)]
pub struct RealtimeStatus {
    lag_us: AtomicU64,
    overruns: AtomicU64,
    running: AtomicBool,
    stop: AtomicBool,
}

impl RealtimeStatus {
    pub fn lag(&self) -> Duration {
        Duration::from_micros(self.lag_us.load(AtomicOrdering::Relaxed))
    }

    pub fn overruns(&self) -> u64 {
        self.overruns.load(AtomicOrdering::Relaxed)
    }

    pub fn is_running(&self) -> bool {
        self.running.load(AtomicOrdering::Acquire)
    }

    pub fn request_stop(&self) {
        self.stop.store(true, AtomicOrdering::Release);
    }

    fn stop_requested(&self) -> bool {
        self.stop.load(AtomicOrdering::Acquire)
    }
}

/// Producer side of the real-time ingress channel. Cloneable and safe to use
/// from any thread; every message becomes an event on the loop.
pub struct Ingress<E> {
    tx: Sender<E>,
}

impl<E> Clone for Ingress<E> {
    fn clone(&self) -> Self {
        Ingress {
            tx: self.tx.clone(),
        }
    }
}

impl<E> Ingress<E> {
    /// Returns the event back if the loop has gone away.
    pub fn send(&self, event: E) -> Result<(), E> {
        self.tx.send(event).map_err(|e| e.0)
    }
}

/// Consumer side of the ingress channel, owned by the event loop.
pub struct IngressReceiver<E> {
    rx: Receiver<E>,
}

pub fn ingress_channel<E>() -> (Ingress<E>, IngressReceiver<E>) {
    let (tx, rx) = mpsc::channel();
    (Ingress { tx }, IngressReceiver { rx })
}

pub struct Engine<M: Model> {
    sched: Scheduler<M::Event>,
    model: M,
    dispatched: u64,
}

impl<M: Model> Engine<M> {
    pub fn new(model: M) -> Self {
        Engine {
            sched: Scheduler::new(),
            model,
            dispatched: 0,
        }
    }

    pub fn now(&self) -> SimTime {
        self.sched.now()
    }

    pub fn model(&self) -> &M {
        &self.model
    }

    pub fn model_mut(&mut self) -> &mut M {
        &mut self.model
    }

    pub fn into_model(self) -> M {
        self.model
    }

    pub fn scheduler_mut(&mut self) -> &mut Scheduler<M::Event> {
        &mut self.sched
    }

    /// Total number of events dispatched so far.
    pub fn dispatched(&self) -> u64 {
        self.dispatched
    }

    pub fn schedule_at(&mut self, at: SimTime, event: M::Event) -> Result<EventHandle, EngineError> {
        self.sched.schedule_at(at, event)
    }

    pub fn cancel(&mut self, handle: EventHandle) -> bool {
        self.sched.cancel(handle)
    }

    /// Dispatches every event with `fire_at <= t_end`, including follow-ups
    /// scheduled while running, then sets the clock to `t_end`.
    pub fn run_until(&mut self, t_end: SimTime) -> u64 {
        let mut count = 0;
        while let Some((_, ev)) = self.sched.pop_due(t_end) {
            self.model.handle(&mut self.sched, ev);
            count += 1;
        }
        self.sched.advance_to(t_end);
        self.dispatched += count;
        count
    }

    /// Runs the loop paced against the wall clock: an event firing at `t` is
    /// dispatched no earlier than `wall_start + t / pace`. Messages arriving on
    /// `ingress` are scheduled at their wall arrival time mapped to simulated
    /// time, clamped to the current clock. Returns when the clock reaches
    /// `cfg.until` or a stop is requested through `status`.
    pub fn run_realtime(
        &mut self,
        cfg: &RealtimeConfig,
        ingress: &IngressReceiver<M::Event>,
        status: &RealtimeStatus,
    ) -> Result<RealtimeReport, EngineError> {
        if !(cfg.pace > 0.0 && cfg.pace.is_finite()) {
            return Err(EngineError::InvalidPace(cfg.pace));
        }
        const POLL: Duration = Duration::from_millis(20);

        let wall_start = Instant::now();
        // simulated time already elapsed before this call maps to wall_start
        let sim_origin = self.sched.now();
        let to_wall = |t: SimTime| -> Duration {
            let secs = t.saturating_sub(sim_origin).as_secs_f64() / cfg.pace;
            Duration::from_secs_f64(secs.min(1.0e9))
        };
        let mut report = RealtimeReport::default();
        let mut disconnected = false;
        status.running.store(true, AtomicOrdering::Release);

        loop {
            if status.stop_requested() {
                break;
            }
            let next = self.sched.peek_time();
            let horizon = match next {
                Some(t) if t <= cfg.until => t,
                _ => cfg.until,
            };
            let deadline = wall_start + to_wall(horizon);
            let now_wall = Instant::now();

            if now_wall < deadline {
                let wait = (deadline - now_wall).min(POLL);
                if disconnected {
                    std::thread::sleep(wait);
                    continue;
                }
                match ingress.rx.recv_timeout(wait) {
                    Ok(ev) => {
                        self.inject(ev, wall_start, sim_origin, cfg.pace, &mut report);
                        continue;
                    }
                    Err(RecvTimeoutError::Timeout) => continue,
                    Err(RecvTimeoutError::Disconnected) => {
                        disconnected = true;
                        continue;
                    }
                }
            }

            // Deadline reached. Anything that already arrived maps to a time
            // at or before the horizon, so it goes first.
            let mut drained = false;
            if !disconnected {
                while let Ok(ev) = ingress.rx.try_recv() {
                    self.inject(ev, wall_start, sim_origin, cfg.pace, &mut report);
                    drained = true;
                }
            }
            if drained {
                continue;
            }

            match next {
                Some(t) if t <= cfg.until => {
                    let lag = now_wall.saturating_duration_since(deadline);
                    status
                        .lag_us
                        .store(lag.as_micros() as u64, AtomicOrdering::Relaxed);
                    if lag > report.max_lag {
                        report.max_lag = lag;
                    }
                    if lag > cfg.overrun_threshold {
                        report.overruns += 1;
                        status.overruns.fetch_add(1, AtomicOrdering::Relaxed);
                        log::warn!("real-time overrun: event at {t} dispatched {lag:?} late");
                    }
                    if let Some((_, ev)) = self.sched.pop_due(t) {
                        self.model.handle(&mut self.sched, ev);
                        report.events += 1;
                        self.dispatched += 1;
                    }
                }
                _ => {
                    self.sched.advance_to(cfg.until);
                    break;
                }
            }
        }

        status.running.store(false, AtomicOrdering::Release);
        report.wall = wall_start.elapsed();
        Ok(report)
    }

    fn inject(
        &mut self,
        ev: M::Event,
        wall_start: Instant,
        sim_origin: SimTime,
        pace: f64,
        report: &mut RealtimeReport,
    ) {
        let mapped = sim_origin.after(wall_start.elapsed().as_secs_f64() * pace);
        let at = mapped.max(self.sched.now());
        self.sched
            .schedule_at(at, ev)
            .expect("ingress time is clamped to the clock");
        report.injected += 1;
    }
}

/// Maps a wall-clock arrival to simulated time, clamped to the clock.
pub fn map_wall_to_sim(elapsed: Duration, pace: f64, clock: SimTime) -> SimTime {
    SimTime::from_secs_f64(elapsed.as_secs_f64() * pace).max(clock)
}
