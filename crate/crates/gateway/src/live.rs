//! Running a scenario against the wall clock with the gateway attached.

use std::collections::BTreeSet;
use std::sync::{mpsc, Arc};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use thiserror::Error;

use mecsim::engine::{ingress_channel, Engine, EngineError, RealtimeConfig, RealtimeReport, RealtimeStatus, SimTime};
use mecsim::ids::UeId;
use mecsim::scenario::{build, Manifest, ScenarioConfig, ScenarioError};
use mecsim::world::{RunMode, World};

use crate::{Gateway, GatewayInfo, GatewayOptions, StatsSnapshot};

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("scenario '{0}' is not a real-time scenario")]
    NotRealtime(String),
    #[error("cannot start gateway: {0}")]
    Gateway(#[from] std::io::Error),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error("event loop thread panicked")]
    Panicked,
}

pub struct RealtimeOutcome {
    pub engine: Engine<World>,
    pub manifest: Manifest,
    pub report: RealtimeReport,
    pub gateway: StatsSnapshot,
    pub info: GatewayInfo,
}

/// A scenario running in real time on its own thread.
pub struct RealtimeRun {
    info: GatewayInfo,
    status: Arc<RealtimeStatus>,
    handle: JoinHandle<Result<RealtimeOutcome, RunError>>,
}

impl RealtimeRun {
    /// Validates and builds `cfg`, which must be a real-time scenario, then
    /// starts it. Returns once the gateway is listening and the loop runs.
    pub fn start(cfg: &ScenarioConfig, opts: &GatewayOptions) -> Result<RealtimeRun, RunError> {
        if cfg.mode != RunMode::Realtime {
            return Err(RunError::NotRealtime(cfg.name.clone()));
        }
        cfg.validate().map_err(ScenarioError::Validation)?;
        let engine = build(cfg)?;
        Self::start_built(cfg, engine, opts)
    }

    /// Starts an already built engine under the paced loop, whatever mode
    /// its model was built for.
    pub fn start_built(
        cfg: &ScenarioConfig,
        mut engine: Engine<World>,
        opts: &GatewayOptions,
    ) -> Result<RealtimeRun, RunError> {
        let (ingress, ingress_rx) = ingress_channel();
        let (out_tx, out_rx) = mpsc::channel();
        engine.model_mut().set_outbound(out_tx);
        let status = Arc::new(RealtimeStatus::default());
        let ues: Vec<UeId> = cfg.ues.iter().map(|u| UeId(u.id)).collect();
        let external: BTreeSet<_> = cfg.apps.iter().filter_map(|a| a.endpoint).collect();
        let gateway = Gateway::start(opts, ingress, status.clone(), &ues, external, out_rx)?;
        let info = gateway.info().clone();

        let rt_cfg = RealtimeConfig {
            pace: cfg.pace,
            until: SimTime::from_secs_f64(cfg.duration),
            ..RealtimeConfig::default()
        };
        let cfg = cfg.clone();
        let thread_info = info.clone();
        let thread_status = status.clone();
        let handle = std::thread::Builder::new()
            .name("mecsim-loop".into())
            .spawn(move || {
                let started = Instant::now();
                let report = engine.run_realtime(&rt_cfg, &ingress_rx, &thread_status);
                let gateway = gateway.shutdown();
                let report = report?;
                let manifest = Manifest::new(&cfg, &engine, started.elapsed(), Some(&report));
                Ok(RealtimeOutcome {
                    engine,
                    manifest,
                    report,
                    gateway,
                    info: thread_info,
                })
            })?;

        let deadline = Instant::now() + Duration::from_secs(5);
        while !status.is_running() && !handle.is_finished() && Instant::now() < deadline {
            std::thread::sleep(Duration::from_millis(1));
        }
        Ok(RealtimeRun { info, status, handle })
    }

    pub fn info(&self) -> &GatewayInfo {
        &self.info
    }

    pub fn status(&self) -> &RealtimeStatus {
        &self.status
    }

    /// Asks the loop to stop early.
    pub fn stop(&self) {
        self.status.request_stop();
    }

    /// Waits for the run to reach its duration or a stop request.
    pub fn join(self) -> Result<RealtimeOutcome, RunError> {
        self.handle.join().map_err(|_| RunError::Panicked)?
    }
}

/// Runs a real-time scenario to completion.
pub fn run_realtime(cfg: &ScenarioConfig, opts: &GatewayOptions) -> Result<RealtimeOutcome, RunError> {
    RealtimeRun::start(cfg, opts)?.join()
}
