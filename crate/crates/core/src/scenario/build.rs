//! Turns a validated [`ScenarioConfig`] into a bootstrapped engine.

use crate::compute::{HostState, ResourceVector};
use crate::engine::{Engine, SimTime};
use crate::ids::{CellId, HostId, UeId};
use crate::lifecycle::{AppDescriptor, DefaultPolicy, MecApp, MecSystem};
use crate::queue::{ServiceQueue, ServiceTimeModel};
use crate::ran::{load_mobility_trace, Mobility, Ran, TransportProfile, UeState};
use crate::world::{
    Arrivals, DangerZoneUeApp, EchoApp, EchoClient, Launcher, LoadApp, WarningAlertApp, World,
};

use super::config::{
    to_position, AppBehavior, BackgroundConfig, BackgroundMode, MobilityConfig, ScenarioConfig,
    ServiceConfig, ServiceTimeConfig, UeAppConfig,
};
use super::ScenarioError;

/// Stream the explicit background apps record their response times to.
pub const BACKGROUND_STREAM: &str = "background_response_time";

/// Name of the app descriptor used for explicit background apps of `svc`.
pub fn background_app_name(svc: &ServiceConfig) -> String {
    format!("Background-{}-{}", svc.name, svc.host)
}

fn build_err(e: impl std::fmt::Display) -> ScenarioError {
    ScenarioError::Build(e.to_string())
}

/// Builds the system described by `cfg`. The config must have passed
/// [`ScenarioConfig::validate`].
pub fn build(cfg: &ScenarioConfig) -> Result<Engine<World>, ScenarioError> {
    let mut ran = Ran::default();
    for c in &cfg.cells {
        ran.add_cell(CellId(c.id), to_position(c.position)).map_err(build_err)?;
    }

    let mut mec = MecSystem::new(1, cfg.mec.instantiation_delay, cfg.mec.termination_delay);
    mec.set_policy(Box::new(DefaultPolicy {
        strict: cfg.mec.strict_placement,
    }));
    for h in &cfg.hosts {
        let mut state = HostState::new(HostId(h.id), h.capacity, h.scheduling);
        if let Some(rate) = h.dummy_load.filter(|r| *r > 0.0) {
            state.install_dummy_load(rate).map_err(build_err)?;
        }
        mec.add_host(state, h.address).map_err(build_err)?;
    }

    let mut world = World::new(cfg.seed, ran, mec);
    world.mode = cfg.mode;
    world.mobility_period = cfg.mobility_period;
    world.l2_period = cfg.l2_period;

    for s in &cfg.services {
        let host = HostId(s.host);
        let prefix = World::service_stream_prefix(&s.name, host);
        let model = match s.service_time {
            ServiceTimeConfig::Exponential { mean } => ServiceTimeModel::exponential(mean),
            ServiceTimeConfig::Constant { mean } => ServiceTimeModel::constant(mean),
        }
        .map_err(build_err)?;
        let queue = match &s.background {
            Some(bg) if bg.mode == BackgroundMode::Generator => ServiceQueue::generator(
                &model,
                cfg.lambda_f(s),
                bg.lambda_b(),
                world.streams(),
                &prefix,
            )
            .map_err(build_err)?,
            _ => ServiceQueue::explicit(model, world.streams(), &prefix, s.capacity),
        };
        world.add_service(&s.name, host, queue).map_err(build_err)?;
    }

    for a in &cfg.apps {
        world
            .mec
            .onboard(AppDescriptor {
                app_id: a.id.clone().unwrap_or_else(|| a.name.clone()),
                app_name: a.name.clone(),
                app_provider: a.provider.clone(),
                app_service_required: a.services.clone(),
                virtual_compute: a.compute,
                emulated_endpoint: a.endpoint,
                joinable: a.joinable,
            })
            .map_err(build_err)?;
        if let Some(b) = &a.behavior {
            register_behavior(&mut world, &a.name, b.clone());
        }
    }

    for u in &cfg.ues {
        let mobility = match &u.mobility {
            MobilityConfig::Static => Mobility::Static,
            MobilityConfig::Linear { velocity } => Mobility::Linear {
                velocity: to_position(*velocity),
            },
            MobilityConfig::Waypoints { points, speed } => {
                Mobility::waypoints(points.iter().copied().map(to_position).collect(), *speed)
            }
            MobilityConfig::Trace { file } => {
                let path = cfg.resolve(file);
                let mut traces = load_mobility_trace(&path).map_err(build_err)?;
                let records = traces.remove(&UeId(u.id)).ok_or_else(|| {
                    ScenarioError::Build(format!("{} has no records for UE {}", path.display(), u.id))
                })?;
                Mobility::Trace { records }
            }
        };
        let mut ue = UeState::new(UeId(u.id), to_position(u.position), mobility)
            .with_profile(u.transport.clone());
        if let Some(n) = &u.name {
            ue = ue.with_name(n.clone());
        }
        world.ran.add_ue(ue).map_err(build_err)?;
        if let Some(app) = &u.app {
            let start = SimTime::from_secs_f64(app.start());
            let ue_app: Box<dyn crate::lifecycle::UeApp> = match app {
                UeAppConfig::Launcher { app, stop_after, .. } => Box::new(Launcher::new(app, *stop_after)),
                UeAppConfig::EchoClient { app, period, .. } => Box::new(EchoClient::new(app, *period)),
                UeAppConfig::DangerZone { app, center, radius, .. } => {
                    Box::new(DangerZoneUeApp::new(app, to_position(*center), *radius))
                }
            };
            world.add_ue_app(UeId(u.id), start, ue_app).map_err(build_err)?;
        }
    }

    let mut next_ue = cfg.ues.iter().map(|u| u.id).max().map_or(1, |m| m + 1);
    for s in &cfg.services {
        if let Some(bg) = s.background.as_ref().filter(|b| b.mode == BackgroundMode::Explicit) {
            add_background_population(&mut world, cfg, s, bg, &mut next_ue)?;
        }
    }

    let mut engine = Engine::new(world);
    World::bootstrap(&mut engine);
    Ok(engine)
}

fn register_behavior(world: &mut World, name: &str, behavior: AppBehavior) {
    world.register_app_factory(
        name,
        Box::new(move |_, rng| -> Box<dyn MecApp> {
            match &behavior {
                AppBehavior::Load {
                    service,
                    arrivals,
                    request,
                    stream,
                } => Box::new(LoadApp::new(service, *arrivals, *request, stream, rng)),
                AppBehavior::Echo { instructions } => Box::new(EchoApp::new(*instructions)),
                AppBehavior::WarningAlert => Box::new(WarningAlertApp::new()),
            }
        }),
    );
}

/// One static UE per background app, each launching its own load app at
/// time zero. UEs sit on the first cell.
fn add_background_population(
    world: &mut World,
    cfg: &ScenarioConfig,
    svc: &ServiceConfig,
    bg: &BackgroundConfig,
    next_ue: &mut u32,
) -> Result<(), ScenarioError> {
    let name = background_app_name(svc);
    world
        .mec
        .onboard(AppDescriptor {
            app_id: name.to_lowercase(),
            app_name: name.clone(),
            app_provider: String::new(),
            app_service_required: vec![svc.name.clone()],
            virtual_compute: ResourceVector::cpu(bg.cpu),
            emulated_endpoint: None,
            joinable: false,
        })
        .map_err(build_err)?;
    register_behavior(
        world,
        &name,
        AppBehavior::Load {
            service: svc.name.clone(),
            arrivals: Arrivals::Poisson { rate: bg.rate },
            request: bg.request,
            stream: BACKGROUND_STREAM.to_string(),
        },
    );
    let at = cfg
        .cells
        .first()
        .map(|c| to_position(c.position))
        .ok_or_else(|| ScenarioError::Build("explicit background apps need a cell".into()))?;
    for _ in 0..bg.apps {
        let id = UeId(*next_ue);
        *next_ue += 1;
        world
            .ran
            .add_ue(UeState::new(id, at, Mobility::Static).with_profile(TransportProfile::default()))
            .map_err(build_err)?;
        world
            .add_ue_app(id, SimTime::ZERO, Box::new(Launcher::new(&name, None)))
            .map_err(build_err)?;
    }
    Ok(())
}
