//! Constant-cost background load.
//!
//! The service is an M/M/1 queue fed by foreground requests (rate λ_f, all
//! explicitly simulated) and background requests (rate λ_b, never
//! materialized). A foreground arrival that finds no other foreground request
//! in the system draws the number of requests ahead of it from the stationary
//! law `ρ^n (1-ρ)`; one that finds a foreground request in flight draws the
//! background arrivals since that request arrived from a Poisson law. Either
//! way the departure is `n* + 1` exponential service times later, i.e. an
//! Erlang draw. Only foreground requests are stored, so the cost does not
//! depend on λ_b.

use std::collections::VecDeque;

use rand::Rng;
use rand_distr::{Distribution, Gamma, Geometric, Poisson};

use super::{Job, JobId, QueueError, Scheduled};
use crate::engine::SimTime;
use crate::rng::RngStream;

#[derive(Clone, Debug, PartialEq)]
pub struct BackgroundModel {
    /// Foreground arrival rate, 1/s. Configured, not estimated.
    pub lambda_f: f64,
    /// Background arrival rate, 1/s.
    pub lambda_b: f64,
    /// Service rate, 1/s.
    pub mu: f64,
    pub fg_in_system: u32,
    pub last_fg_arrival: SimTime,
    pub last_fg_departure: SimTime,
}

impl BackgroundModel {
    pub fn new(lambda_f: f64, lambda_b: f64, mu: f64) -> Result<Self, QueueError> {
        let finite_nonneg = |v: f64| v.is_finite() && v >= 0.0;
        if !(finite_nonneg(lambda_f) && finite_nonneg(lambda_b) && mu.is_finite() && mu > 0.0) {
            return Err(QueueError::InvalidRates);
        }
        if lambda_f + lambda_b >= mu {
            return Err(QueueError::UnstableConfiguration {
                load: lambda_f + lambda_b,
                mu,
            });
        }
        if lambda_f > lambda_b / 10.0 {
            log::warn!(
                "background model assumes λ_f ≪ λ_b, got λ_f={lambda_f} λ_b={lambda_b}; \
                 backlog estimates for foreground requests will be pessimistic"
            );
        }
        Ok(BackgroundModel {
            lambda_f,
            lambda_b,
            mu,
            fg_in_system: 0,
            last_fg_arrival: SimTime::ZERO,
            last_fg_departure: SimTime::ZERO,
        })
    }

    pub fn rho(&self) -> f64 {
        (self.lambda_f + self.lambda_b) / self.mu
    }
}

/// Number of requests found in the system by an arrival, drawn from
/// `P(n) = ρ^n (1-ρ)`.
pub fn sample_backlog<R: Rng + ?Sized>(rho: f64, rng: &mut R) -> u64 {
    if rho <= 0.0 {
        return 0;
    }
    // counts failures before the first success
    Geometric::new(1.0 - rho)
        .expect("0 <= rho < 1")
        .sample(rng)
}

/// Background arrivals in an interval of `dt` seconds.
pub fn sample_bg_arrivals<R: Rng + ?Sized>(lambda_b: f64, dt: f64, rng: &mut R) -> u64 {
    let mean = lambda_b * dt;
    if mean <= 0.0 {
        return 0;
    }
    let v: f64 = Poisson::new(mean).expect("positive mean").sample(rng);
    v as u64
}

/// Sum of `k` exponential(μ) service times.
pub fn sample_erlang<R: Rng + ?Sized>(k: u64, mu: f64, rng: &mut R) -> f64 {
    if k == 0 {
        return 0.0;
    }
    Gamma::new(k as f64, 1.0 / mu)
        .expect("positive shape and scale")
        .sample(rng)
}

/// Service-queue back end for generator mode.
pub struct BackgroundGenerator<P> {
    model: BackgroundModel,
    in_flight: VecDeque<Job<P>>,
    backlog_rng: RngStream,
    arrivals_rng: RngStream,
    service_rng: RngStream,
}

impl<P> BackgroundGenerator<P> {
    pub fn new(
        model: BackgroundModel,
        backlog_rng: RngStream,
        arrivals_rng: RngStream,
        service_rng: RngStream,
    ) -> Self {
        BackgroundGenerator {
            model,
            in_flight: VecDeque::new(),
            backlog_rng,
            arrivals_rng,
            service_rng,
        }
    }

    pub fn model(&self) -> &BackgroundModel {
        &self.model
    }

    /// Departure time for a foreground job arriving at `now`. Updates the
    /// model's foreground state.
    pub fn schedule_fg_departure(&mut self, now: SimTime) -> SimTime {
        let m = &mut self.model;
        let departure = if m.fg_in_system == 0 {
            let n = sample_backlog(m.rho(), &mut self.backlog_rng);
            now.after(sample_erlang(n + 1, m.mu, &mut self.service_rng))
        } else {
            let dt = now.saturating_sub(m.last_fg_arrival).as_secs_f64();
            let n = sample_bg_arrivals(m.lambda_b, dt, &mut self.arrivals_rng);
            let start = m.last_fg_departure.max(now);
            start.after(sample_erlang(n + 1, m.mu, &mut self.service_rng))
        };
        m.fg_in_system += 1;
        m.last_fg_arrival = now;
        m.last_fg_departure = departure;
        departure
    }

    pub fn submit(&mut self, job: Job<P>, now: SimTime) -> Scheduled {
        let at = self.schedule_fg_departure(now);
        let id = job.id;
        self.in_flight.push_back(job);
        Scheduled { job: id, at }
    }

    pub fn finish(&mut self, id: JobId) -> Result<Job<P>, QueueError> {
        let pos = self
            .in_flight
            .iter()
            .position(|j| j.id == id)
            .ok_or(QueueError::UnknownJob(id))?;
        let job = self.in_flight.remove(pos).expect("index from position");
        self.model.fg_in_system = self.model.fg_in_system.saturating_sub(1);
        Ok(job)
    }

    pub fn resident(&self) -> usize {
        self.in_flight.len()
    }
}
