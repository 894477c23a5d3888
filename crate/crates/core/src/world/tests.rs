use std::sync::{Arc, Mutex};

use super::*;
use crate::compute::{ResourceVector, SchedulingMode};
use crate::compute::HostState;
use crate::ids::CellId;
use crate::lifecycle::AppDescriptor;
use crate::queue::ServiceTimeModel;
use crate::ran::{Mobility, Position, TransportProfile, UeState};

const DELAY: f64 = 0.010;

fn world(service_time: f64) -> Engine<World> {
    let mut ran = Ran::default();
    ran.add_cell(CellId(1), Position::ORIGIN).unwrap();
    let mut mec = MecSystem::new(1, 0.1, 0.05);
    mec.add_host(
        HostState::new(HostId(1), ResourceVector::new(1000.0, 1e9, 1e9), SchedulingMode::Segregation),
        None,
    )
    .unwrap();
    let mut w = World::new(7, ran, mec);
    for name in [LOCATION_SERVICE, RNIS] {
        let prefix = World::service_stream_prefix(name, HostId(1));
        let q = ServiceQueue::explicit(
            ServiceTimeModel::constant(service_time).unwrap(),
            w.streams(),
            &prefix,
            None,
        );
        w.add_service(name, HostId(1), q).unwrap();
    }
    w.register_app_factory("Echo", Box::new(|_, _| Box::new(EchoApp::new(None))));
    w.register_app_factory("EchoCompute", Box::new(|_, _| Box::new(EchoApp::new(Some(500.0)))));
    for (name, provider) in [("Echo", "echo"), ("EchoCompute", "echo-compute")] {
        w.mec
            .onboard(AppDescriptor {
                app_id: name.to_lowercase(),
                app_name: name.into(),
                app_provider: provider.into(),
                app_service_required: vec![],
                virtual_compute: ResourceVector::new(100.0, 1.0, 1.0),
                emulated_endpoint: None,
                joinable: false,
            })
            .unwrap();
    }
    Engine::new(w)
}

fn add_ue(e: &mut Engine<World>, id: u32, x: f64, mobility: Mobility) {
    e.model_mut()
        .ran
        .add_ue(
            UeState::new(UeId(id), Position::new(x, 0.0, 0.0), mobility)
                .with_profile(TransportProfile::constant(DELAY)),
        )
        .unwrap();
}

#[test]
fn echo_round_trip_is_two_radio_delays() {
    let mut e = world(0.001);
    add_ue(&mut e, 1, 5.0, Mobility::Static);
    e.model_mut()
        .add_ue_app(UeId(1), SimTime::ZERO, Box::new(EchoClient::new("Echo", 0.5)))
        .unwrap();
    World::bootstrap(&mut e);
    e.run_until(SimTime::from_secs_f64(3.0));
    let rtt = e.model().stats.values("echo_rtt");
    assert!(rtt.len() >= 4, "{rtt:?}");
    for r in rtt {
        assert!((r - 2.0 * DELAY).abs() < 2e-6, "rtt {r}");
    }
}

#[test]
fn compute_adds_instruction_time() {
    let mut e = world(0.001);
    add_ue(&mut e, 1, 5.0, Mobility::Static);
    e.model_mut()
        .add_ue_app(UeId(1), SimTime::ZERO, Box::new(EchoClient::new("EchoCompute", 6.0)))
        .unwrap();
    World::bootstrap(&mut e);
    e.run_until(SimTime::from_secs_f64(20.0));
    let rtt = e.model().stats.values("echo_rtt");
    assert_eq!(rtt.len(), 3);
    // 500 instructions at the stipulated 100 instructions/s
    for r in rtt {
        assert!((r - (2.0 * DELAY + 5.0)).abs() < 2e-6, "rtt {r}");
    }
}

type Replies = Arc<Mutex<Vec<Result<ServiceResponse, ApiError>>>>;

fn external_service(e: &mut Engine<World>, at: SimTime, req: ServiceRequest) -> Replies {
    let out: Replies = Arc::default();
    let sink = out.clone();
    e.schedule_at(
        at,
        Event::External(ExternalRequest::Service {
            request: req,
            reply: Box::new(move |r| sink.lock().unwrap().push(r)),
        }),
    )
    .unwrap();
    out
}

#[test]
fn external_requests_refused_in_sim_mode() {
    let mut e = world(0.001);
    let out = external_service(&mut e, SimTime::ZERO, ServiceRequest::Users(Default::default()));
    e.run_until(SimTime::from_secs_f64(0.01));
    assert_eq!(out.lock().unwrap()[0], Err(ApiError::Mode));
}

/// Records the simulated time at which each response is produced.
struct Timed(Arc<Mutex<Vec<f64>>>);

impl MecApp for Timed {
    fn on_start(&mut self, ctx: &mut AppCtx) {
        ctx.discover(RNIS, 0);
    }

    fn on_registry_response(&mut self, ctx: &mut AppCtx, _tag: u64, found: Vec<ServiceDescriptor>) {
        let to = found[0].endpoint;
        for i in 0..6 {
            ctx.request(
                to,
                ServiceRequest::Layer2(crate::services::L2Query::cell(CellId(1), crate::ran::Aggregator::Average)),
                i,
            );
        }
    }

    fn on_service_response(&mut self, ctx: &mut AppCtx, _tag: u64, r: ServiceResponse) {
        assert!(matches!(r, ServiceResponse::Layer2(_)), "{r:?}");
        self.0.lock().unwrap().push(ctx.now.as_secs_f64());
    }
}

#[test]
fn rnis_request_behind_five_jobs_waits_sixty_ms() {
    let mut e = world(0.010);
    let seen = Arc::new(Mutex::new(Vec::new()));
    let s2 = seen.clone();
    e.model_mut()
        .register_app_factory("Timed", Box::new(move |_, _| Box::new(Timed(s2.clone()))));
    e.model_mut()
        .mec
        .onboard(AppDescriptor {
            app_id: "t".into(),
            app_name: "Timed".into(),
            app_provider: "timed".into(),
            app_service_required: vec![RNIS.into()],
            virtual_compute: ResourceVector::new(1.0, 0.0, 0.0),
            emulated_endpoint: None,
            joinable: false,
        })
        .unwrap();
    add_ue(&mut e, 1, 5.0, Mobility::Static);
    e.model_mut()
        .add_ue_app(UeId(1), SimTime::ZERO, Box::new(Launcher::new("Timed", None)))
        .unwrap();
    World::bootstrap(&mut e);
    e.run_until(SimTime::from_secs_f64(1.0));
    let t = seen.lock().unwrap().clone();
    assert_eq!(t.len(), 6);
    // submitted together at t0; the k-th response leaves (k+1) service times later
    let t0 = t[0] - 0.010;
    for (k, tk) in t.iter().enumerate() {
        assert!(((tk - t0) - 0.010 * (k + 1) as f64).abs() < 2e-6, "{k}: {tk}");
    }
    assert!(t[5] - t0 >= 0.060 - 1e-6);
}

#[test]
fn device_lifecycle_through_the_radio() {
    let mut e = world(0.001);
    add_ue(&mut e, 1, 5.0, Mobility::Static);
    e.model_mut()
        .add_ue_app(UeId(1), SimTime::ZERO, Box::new(Launcher::new("Echo", Some(1.0))))
        .unwrap();
    World::bootstrap(&mut e);
    e.run_until(SimTime::from_secs_f64(0.5));
    let w = e.model();
    let ctx = w.mec.contexts().next().expect("instance running");
    assert_eq!(ctx.state, crate::lifecycle::ContextState::Running);
    // uplink radio + instantiation delay
    let running_at = ctx.history.last().unwrap().1;
    assert_eq!(running_at, SimTime::from_secs_f64(DELAY + 0.1));
    assert_eq!(w.mec.host(HostId(1)).unwrap().allocated().cpu, 100.0);
    e.run_until(SimTime::from_secs_f64(2.0));
    let w = e.model();
    assert_eq!(w.mec.contexts().count(), 0);
    assert_eq!(w.mec.retired().len(), 1);
    assert_eq!(w.mec.host(HostId(1)).unwrap().allocated().cpu, 0.0);
}

#[test]
fn danger_zone_sequence_in_simulation() {
    let mut e = world(0.002);
    e.model_mut()
        .register_app_factory("WarningAlert", Box::new(|_, _| Box::new(WarningAlertApp::new())));
    e.model_mut()
        .mec
        .onboard(AppDescriptor {
            app_id: "wa".into(),
            app_name: "WarningAlert".into(),
            app_provider: "warning-alert".into(),
            app_service_required: vec![LOCATION_SERVICE.into()],
            virtual_compute: ResourceVector::new(10.0, 0.0, 0.0),
            emulated_endpoint: None,
            joinable: false,
        })
        .unwrap();
    add_ue(
        &mut e,
        1,
        -150.0,
        Mobility::Linear {
            velocity: Position::new(15.0, 0.0, 0.0),
        },
    );
    e.model_mut()
        .add_ue_app(
            UeId(1),
            SimTime::ZERO,
            Box::new(DangerZoneUeApp::new("WarningAlert", Position::ORIGIN, 30.0)),
        )
        .unwrap();
    World::bootstrap(&mut e);
    e.run_until(SimTime::from_secs_f64(20.0));
    let steps: Vec<&str> = e
        .model()
        .timeline
        .iter()
        .map(|t| t.step.as_str())
        .filter(|s| !s.starts_with("warned"))
        .collect();
    assert_eq!(
        steps,
        vec![
            "start",
            "ack-start",
            "subscribe-entering",
            "notify-entering",
            "inform-entering",
            "modify-leaving",
            "notify-leaving",
            "inform-leaving",
            "stop",
            "ack-stop"
        ]
    );
    // enters at x = -30 (t = 8 s), leaves past x = 30 (t = 12 s)
    let at = |s: &str| {
        e.model()
            .timeline
            .iter()
            .find(|t| t.step == s)
            .unwrap()
            .time
            .as_secs_f64()
    };
    assert!((at("notify-entering") - 8.0).abs() < 0.15);
    assert!((at("notify-leaving") - 12.1).abs() < 0.15);
}
