//! Single-server queueing core shared by all MEC services.
//!
//! In explicit mode requests and notifications wait in two FIFO queues and a
//! single server takes one job at a time, notifications first. In generator
//! mode the server is the analytical M/M/1 model of [`background`], which
//! only ever stores foreground jobs.

pub mod background;

use std::collections::VecDeque;
use std::fmt;

use rand::RngCore;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use background::{
    sample_backlog, sample_bg_arrivals, sample_erlang, BackgroundGenerator, BackgroundModel,
};

use crate::engine::SimTime;
use crate::rng::RngStream;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QueueError {
    #[error("queue capacity {0} exceeded")]
    QueueOverflow(usize),
    #[error("unstable configuration: arrival rate {load} >= service rate {mu}")]
    UnstableConfiguration { load: f64, mu: f64 },
    #[error("arrival and service rates must be finite, non-negative, and mu > 0")]
    InvalidRates,
    #[error("service-time mean must be positive, got {0}")]
    InvalidMean(f64),
    #[error("generator mode needs an exponential service-time model")]
    GeneratorNeedsExponential,
    #[error("no job {0} in service")]
    UnknownJob(JobId),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct JobId(pub u64);

impl fmt::Display for JobId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "job{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JobKind {
    Request,
    Notification,
}

#[derive(Clone, Debug)]
pub struct Job<P> {
    pub id: JobId,
    pub kind: JobKind,
    pub arrival: SimTime,
    /// Method and resource, e.g. `GET /location/users`; visible to service
    /// time hooks.
    pub label: &'static str,
    pub payload: P,
}

/// A departure the caller must turn into an event.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Scheduled {
    pub job: JobId,
    pub at: SimTime,
}

/// User-replaceable service time computation.
pub trait ServiceTimeHook: Send {
    fn service_time(&mut self, kind: JobKind, label: &str, rng: &mut dyn RngCore) -> f64;
}

impl<F> ServiceTimeHook for F
where
    F: FnMut(JobKind, &str, &mut dyn RngCore) -> f64 + Send,
{
    fn service_time(&mut self, kind: JobKind, label: &str, rng: &mut dyn RngCore) -> f64 {
        self(kind, label, rng)
    }
}

pub enum ServiceTimeModel {
    Exponential { mean: f64 },
    Constant { mean: f64 },
    Custom(Box<dyn ServiceTimeHook>),
}

impl fmt::Debug for ServiceTimeModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ServiceTimeModel::Exponential { mean } => write!(f, "Exponential({mean})"),
            ServiceTimeModel::Constant { mean } => write!(f, "Constant({mean})"),
            ServiceTimeModel::Custom(_) => f.write_str("Custom"),
        }
    }
}

impl ServiceTimeModel {
    pub fn exponential(mean: f64) -> Result<Self, QueueError> {
        check_mean(mean)?;
        Ok(ServiceTimeModel::Exponential { mean })
    }

    pub fn constant(mean: f64) -> Result<Self, QueueError> {
        check_mean(mean)?;
        Ok(ServiceTimeModel::Constant { mean })
    }

    /// Service rate μ, when the model defines one.
    pub fn mu(&self) -> Option<f64> {
        match self {
            ServiceTimeModel::Exponential { mean } | ServiceTimeModel::Constant { mean } => {
                Some(1.0 / mean)
            }
            ServiceTimeModel::Custom(_) => None,
        }
    }

    pub fn sample(&mut self, kind: JobKind, label: &str, rng: &mut dyn RngCore) -> f64 {
        match self {
            ServiceTimeModel::Exponential { mean } => Exp::new(1.0 / *mean)
                .expect("validated mean")
                .sample(rng),
            ServiceTimeModel::Constant { mean } => *mean,
            ServiceTimeModel::Custom(h) => h.service_time(kind, label, rng).max(0.0),
        }
    }
}

fn check_mean(mean: f64) -> Result<(), QueueError> {
    if mean > 0.0 && mean.is_finite() {
        Ok(())
    } else {
        Err(QueueError::InvalidMean(mean))
    }
}

/// Explicit FIFO server with a precedence queue for notifications.
pub struct ExplicitQueue<P> {
    requests: VecDeque<Job<P>>,
    notifications: VecDeque<Job<P>>,
    in_service: Option<Job<P>>,
    capacity: Option<usize>,
    model: ServiceTimeModel,
    rng: RngStream,
}

impl<P> ExplicitQueue<P> {
    pub fn new(model: ServiceTimeModel, rng: RngStream, capacity: Option<usize>) -> Self {
        ExplicitQueue {
            requests: VecDeque::new(),
            notifications: VecDeque::new(),
            in_service: None,
            capacity,
            model,
            rng,
        }
    }

    /// Draws a service time from the configured model.
    pub fn service_time(&mut self, kind: JobKind, label: &str) -> f64 {
        self.model.sample(kind, label, &mut self.rng)
    }

    pub fn submit(&mut self, job: Job<P>, now: SimTime) -> Result<Option<Scheduled>, QueueError> {
        if self.in_service.is_none() {
            return Ok(Some(self.start(job, now)));
        }
        if let Some(cap) = self.capacity {
            if self.requests.len() + self.notifications.len() >= cap {
                return Err(QueueError::QueueOverflow(cap));
            }
        }
        match job.kind {
            JobKind::Request => self.requests.push_back(job),
            JobKind::Notification => self.notifications.push_back(job),
        }
        Ok(None)
    }

    fn start(&mut self, job: Job<P>, now: SimTime) -> Scheduled {
        let s = self.service_time(job.kind, job.label);
        let scheduled = Scheduled {
            job: job.id,
            at: now.after(s),
        };
        self.in_service = Some(job);
        scheduled
    }

    /// Completes the job in service and starts the next one, notifications
    /// first.
    pub fn finish(
        &mut self,
        id: JobId,
        now: SimTime,
    ) -> Result<(Job<P>, Option<Scheduled>), QueueError> {
        match &self.in_service {
            Some(j) if j.id == id => {}
            _ => return Err(QueueError::UnknownJob(id)),
        }
        let done = self.in_service.take().expect("matched above");
        let next = self
            .notifications
            .pop_front()
            .or_else(|| self.requests.pop_front())
            .map(|j| self.start(j, now));
        Ok((done, next))
    }

    /// Whether a submit now would overflow.
    pub fn is_full(&self) -> bool {
        self.in_service.is_some()
            && self
                .capacity
                .is_some_and(|cap| self.requests.len() + self.notifications.len() >= cap)
    }

    pub fn queued(&self) -> (usize, usize) {
        (self.requests.len(), self.notifications.len())
    }

    pub fn resident(&self) -> usize {
        self.requests.len() + self.notifications.len() + usize::from(self.in_service.is_some())
    }
}

/// Either server back end behind one interface. The two modes are mutually
/// exclusive for a service instance.
#[allow(clippy::large_enum_variant)]
pub enum ServiceQueue<P> {
    Explicit(ExplicitQueue<P>),
    Generator(BackgroundGenerator<P>),
}

impl<P> ServiceQueue<P> {
    /// Explicit-mode queue drawing service times from the `svc-time` stream.
    pub fn explicit(
        model: ServiceTimeModel,
        streams: &crate::rng::RngStreams,
        prefix: &str,
        capacity: Option<usize>,
    ) -> Self {
        ServiceQueue::Explicit(ExplicitQueue::new(
            model,
            streams.stream(&format!("{prefix}/svc-time")),
            capacity,
        ))
    }

    /// Generator-mode queue. `model` must be exponential; μ is taken from it.
    pub fn generator(
        model: &ServiceTimeModel,
        lambda_f: f64,
        lambda_b: f64,
        streams: &crate::rng::RngStreams,
        prefix: &str,
    ) -> Result<Self, QueueError> {
        let mu = match model {
            ServiceTimeModel::Exponential { mean } => 1.0 / mean,
            _ => return Err(QueueError::GeneratorNeedsExponential),
        };
        let bg = BackgroundModel::new(lambda_f, lambda_b, mu)?;
        Ok(ServiceQueue::Generator(BackgroundGenerator::new(
            bg,
            streams.stream(&format!("{prefix}/bg-backlog")),
            streams.stream(&format!("{prefix}/bg-arrivals")),
            streams.stream(&format!("{prefix}/svc-time")),
        )))
    }

    pub fn submit(&mut self, job: Job<P>, now: SimTime) -> Result<Option<Scheduled>, QueueError> {
        match self {
            ServiceQueue::Explicit(q) => q.submit(job, now),
            ServiceQueue::Generator(g) => Ok(Some(g.submit(job, now))),
        }
    }

    pub fn finish(
        &mut self,
        id: JobId,
        now: SimTime,
    ) -> Result<(Job<P>, Option<Scheduled>), QueueError> {
        match self {
            ServiceQueue::Explicit(q) => q.finish(id, now),
            ServiceQueue::Generator(g) => g.finish(id).map(|j| (j, None)),
        }
    }

    pub fn is_full(&self) -> bool {
        match self {
            ServiceQueue::Explicit(q) => q.is_full(),
            ServiceQueue::Generator(_) => false,
        }
    }

    /// Jobs held in memory.
    pub fn resident(&self) -> usize {
        match self {
            ServiceQueue::Explicit(q) => q.resident(),
            ServiceQueue::Generator(g) => g.resident(),
        }
    }

    pub fn background(&self) -> Option<&BackgroundModel> {
        match self {
            ServiceQueue::Explicit(_) => None,
            ServiceQueue::Generator(g) => Some(g.model()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStreams;

    fn job(id: u64, kind: JobKind, at: SimTime) -> Job<()> {
        Job {
            id: JobId(id),
            kind,
            arrival: at,
            label: "test",
            payload: (),
        }
    }

    fn constant_queue(mean: f64) -> ExplicitQueue<()> {
        ExplicitQueue::new(
            ServiceTimeModel::constant(mean).unwrap(),
            RngStreams::new(1).stream("svc"),
            None,
        )
    }

    #[test]
    fn idle_server_responds_after_one_service_time() {
        let mut q = constant_queue(0.010);
        let t = SimTime::from_secs_f64(1.0);
        let s = q.submit(job(1, JobKind::Request, t), t).unwrap().unwrap();
        assert_eq!(s.at, SimTime::from_secs_f64(1.010));
    }

    #[test]
    fn back_to_back_requests_are_fifo() {
        let mut q = constant_queue(0.010);
        let t = SimTime::ZERO;
        let s1 = q.submit(job(1, JobKind::Request, t), t).unwrap().unwrap();
        assert!(q.submit(job(2, JobKind::Request, t), t).unwrap().is_none());
        let (done, next) = q.finish(s1.job, s1.at).unwrap();
        assert_eq!(done.id, JobId(1));
        let next = next.unwrap();
        assert_eq!((next.job, next.at), (JobId(2), SimTime::from_millis(20)));
    }

    #[test]
    fn notification_overtakes_queued_request() {
        let mut q = constant_queue(0.010);
        let t = SimTime::ZERO;
        let s1 = q.submit(job(1, JobKind::Request, t), t).unwrap().unwrap();
        q.submit(job(2, JobKind::Request, t), t).unwrap();
        q.submit(job(3, JobKind::Notification, t), t).unwrap();
        let (_, next) = q.finish(s1.job, s1.at).unwrap();
        assert_eq!(next.unwrap().job, JobId(3));
    }

    #[test]
    fn capacity_bound() {
        let mut q = ExplicitQueue::new(
            ServiceTimeModel::constant(1.0).unwrap(),
            RngStreams::new(1).stream("svc"),
            Some(1),
        );
        let t = SimTime::ZERO;
        q.submit(job(1, JobKind::Request, t), t).unwrap();
        q.submit(job(2, JobKind::Request, t), t).unwrap();
        assert_eq!(
            q.submit(job(3, JobKind::Request, t), t),
            Err(QueueError::QueueOverflow(1))
        );
    }

    #[test]
    fn service_time_models() {
        assert_eq!(
            ServiceTimeModel::exponential(0.0).unwrap_err(),
            QueueError::InvalidMean(0.0)
        );
        let mut c = ServiceTimeModel::constant(0.005).unwrap();
        let mut rng = RngStreams::new(3).stream("svc");
        assert!((0..100).all(|_| c.sample(JobKind::Request, "x", &mut rng) == 0.005));

        let mut e = ServiceTimeModel::exponential(0.010).unwrap();
        let n = 1_000_000;
        let m = (0..n)
            .map(|_| e.sample(JobKind::Request, "x", &mut rng))
            .sum::<f64>()
            / n as f64;
        assert!((m - 0.010).abs() / 0.010 < 0.02, "mean {m}");

        let mut custom = ServiceTimeModel::Custom(Box::new(
            |kind: JobKind, label: &str, _: &mut dyn RngCore| match (kind, label) {
                (JobKind::Notification, _) => 0.001,
                (_, "GET /rni/layer2") => 0.004,
                _ => 0.002,
            },
        ));
        assert_eq!(custom.sample(JobKind::Request, "GET /rni/layer2", &mut rng), 0.004);
        assert_eq!(custom.sample(JobKind::Notification, "x", &mut rng), 0.001);
    }

    #[test]
    fn generator_requires_exponential_and_stability() {
        let streams = RngStreams::new(1);
        let c = ServiceTimeModel::constant(0.1).unwrap();
        assert!(matches!(
            ServiceQueue::<()>::generator(&c, 1.0, 1.0, &streams, "s"),
            Err(QueueError::GeneratorNeedsExponential)
        ));
        let e = ServiceTimeModel::exponential(0.1).unwrap();
        assert!(matches!(
            ServiceQueue::<()>::generator(&e, 5.0, 5.0, &streams, "s"),
            Err(QueueError::UnstableConfiguration { .. })
        ));
    }

    #[test]
    fn generator_stores_only_in_flight_foreground() {
        let streams = RngStreams::new(1);
        let e = ServiceTimeModel::exponential(0.01).unwrap();
        let mut q: ServiceQueue<()> = ServiceQueue::generator(&e, 1.0, 80.0, &streams, "s").unwrap();
        let mut pending = Vec::new();
        for i in 0..50 {
            let t = SimTime::from_millis(i);
            pending.push(q.submit(job(i, JobKind::Request, t), t).unwrap().unwrap());
            assert_eq!(q.resident(), pending.len());
        }
        // departures come out in arrival order
        assert!(pending.windows(2).all(|w| w[0].at <= w[1].at));
        for s in pending {
            q.finish(s.job, s.at).unwrap();
        }
        assert_eq!(q.resident(), 0);
        assert_eq!(q.background().unwrap().fg_in_system, 0);
    }
}
