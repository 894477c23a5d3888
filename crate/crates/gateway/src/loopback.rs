//! External programs for exercising the gateway: a WarningAlert MEC app
//! that talks to the Location Service over HTTP, and a vehicle UE app that
//! drives the device-app port. Both record into one wall-clock trace so
//! the whole danger-zone exchange can be checked step by step.
//!
//! The vehicle names its UE in the zone request (`ZONE <ue> x y z r`)
//! because relayed datagrams carry no UE identity.

use std::net::SocketAddr;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use axum::extract::State;
use axum::http::StatusCode;
use axum::routing::post;
use axum::{Json, Router};
use serde::Serialize;
use serde_json::json;
use thiserror::Error;
use tokio::net::{TcpListener, UdpSocket};
use tokio::sync::mpsc;

use mecsim::ids::UeId;
use mecsim::lifecycle::DeviceReply;
use mecsim::ran::Position;
use mecsim::scenario::{check_sequence, ScenarioConfig, SequenceViolation, DANGER_ZONE_STEPS};
use mecsim::services::{AreaEvent, AreaNotification, Endpoint};
use mecsim::world::{WARNING_ENTERING, WARNING_LEAVING};

use crate::{GatewayOptions, RealtimeOutcome, RealtimeRun, RunError};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TraceEntry {
    /// Wall time since the trace was created.
    pub at: Duration,
    pub actor: &'static str,
    pub step: String,
}

/// Append-only wall-clock trace shared by the loopback programs.
#[derive(Clone)]
pub struct Trace {
    origin: Instant,
    entries: Arc<Mutex<Vec<TraceEntry>>>,
}

impl Default for Trace {
    fn default() -> Self {
        Trace {
            origin: Instant::now(),
            entries: Arc::default(),
        }
    }
}

impl Trace {
    pub fn record(&self, actor: &'static str, step: impl Into<String>) {
        let entry = TraceEntry {
            at: self.origin.elapsed(),
            actor,
            step: step.into(),
        };
        log::info!("[{:>8.3}s] {}: {}", entry.at.as_secs_f64(), actor, entry.step);
        self.entries.lock().expect("trace lock").push(entry);
    }

    pub fn entries(&self) -> Vec<TraceEntry> {
        self.entries.lock().expect("trace lock").clone()
    }

    /// Steps in recording order, without informational `warned-*` steps.
    pub fn steps(&self) -> Vec<String> {
        self.entries()
            .into_iter()
            .map(|e| e.step)
            .filter(|s| !s.starts_with("warned-"))
            .collect()
    }
}

pub fn zone_request(ue: UeId, center: Position, radius: f64) -> String {
    format!("ZONE {} {} {} {} {}", ue.0, center.x, center.y, center.z, radius)
}

fn parse_zone_request(body: &str) -> Option<(UeId, Position, f64)> {
    let mut it = body.strip_prefix("ZONE ")?.split(' ');
    let ue = UeId(it.next()?.parse().ok()?);
    let v: Vec<f64> = it.map(str::parse).collect::<Result<_, _>>().ok()?;
    match v[..] {
        [x, y, z, r] => Some((ue, Position::new(x, y, z), r)),
        _ => None,
    }
}

#[derive(Debug, Error)]
pub enum LoopbackError {
    #[error("HTTP request failed: {0}")]
    Http(#[from] reqwest::Error),
    #[error("unexpected HTTP status {0} for {1}")]
    Status(u16, &'static str),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("no reply from the device port")]
    NoReply,
    #[error("device refused: {0}")]
    Refused(String),
}

const APP: &str = "app";
const VEHICLE: &str = "vehicle";

/// WarningAlert running outside the simulator. Serves zone requests on
/// `sock` and receives area notifications on its own HTTP callback server.
pub async fn warning_alert_app(sock: UdpSocket, gateway: SocketAddr, trace: Trace) -> Result<(), LoopbackError> {
    let (ntx, mut nrx) = mpsc::unbounded_channel::<AreaNotification>();
    let listener = TcpListener::bind("127.0.0.1:0").await?;
    let callback = format!("http://{}/notify", listener.local_addr()?);
    let router = Router::new()
        .route(
            "/notify",
            post(|State(tx): State<mpsc::UnboundedSender<AreaNotification>>, Json(n): Json<AreaNotification>| async move {
                let _ = tx.send(n);
                StatusCode::NO_CONTENT
            }),
        )
        .with_state(ntx);
    tokio::spawn(async move {
        let _ = axum::serve(listener, router).await;
    });

    let client = reqwest::Client::new();
    let base = format!("http://{gateway}/v1");
    let services = client.get(format!("{base}/mp1/services")).send().await?;
    if !services.status().is_success() {
        return Err(LoopbackError::Status(services.status().as_u16(), "service discovery"));
    }

    let mut buf = vec![0u8; 2048];
    let mut vehicle: Option<SocketAddr> = None;
    let mut zone: Option<(Position, f64)> = None;
    let mut sub: Option<String> = None;
    loop {
        tokio::select! {
            r = sock.recv_from(&mut buf) => {
                let (n, src) = r?;
                let body = String::from_utf8_lossy(&buf[..n]).to_string();
                let Some((ue, center, radius)) = parse_zone_request(&body) else {
                    log::debug!("loopback app: ignoring '{body}'");
                    continue;
                };
                vehicle = Some(src);
                zone = Some((center, radius));
                if sub.is_some() {
                    continue;
                }
                let r = client
                    .post(format!("{base}/location/subscriptions/area"))
                    .json(&json!({
                        "ueId": ue,
                        "center": center,
                        "radius": radius,
                        "event": AreaEvent::Entering,
                        "callbackReference": callback,
                    }))
                    .send()
                    .await?;
                if r.status() != reqwest::StatusCode::CREATED {
                    return Err(LoopbackError::Status(r.status().as_u16(), "subscribe"));
                }
                let v: serde_json::Value = r.json().await?;
                sub = v["subscriptionId"].as_u64().map(|id| id.to_string());
                trace.record(APP, "subscribe-entering");
            }
            Some(n) = nrx.recv() => {
                let (Some(to), Some((center, radius)), Some(id)) = (vehicle, zone, sub.as_ref()) else {
                    continue;
                };
                match n.event {
                    AreaEvent::Entering => {
                        trace.record(APP, "notify-entering");
                        sock.send_to(WARNING_ENTERING.as_bytes(), to).await?;
                        trace.record(APP, "inform-entering");
                        let r = client
                            .put(format!("{base}/location/subscriptions/area/{id}"))
                            .json(&json!({ "center": center, "radius": radius, "event": AreaEvent::Leaving }))
                            .send()
                            .await?;
                        if !r.status().is_success() {
                            return Err(LoopbackError::Status(r.status().as_u16(), "modify"));
                        }
                        trace.record(APP, "modify-leaving");
                    }
                    AreaEvent::Leaving => {
                        trace.record(APP, "notify-leaving");
                        sock.send_to(WARNING_LEAVING.as_bytes(), to).await?;
                        trace.record(APP, "inform-leaving");
                    }
                }
            }
        }
    }
}

async fn device_call(sock: &UdpSocket, device: SocketAddr, cmd: &str) -> Result<DeviceReply, LoopbackError> {
    sock.send_to(cmd.as_bytes(), device).await?;
    let mut buf = [0u8; 512];
    loop {
        let (n, src) = tokio::time::timeout(Duration::from_secs(5), sock.recv_from(&mut buf))
            .await
            .map_err(|_| LoopbackError::NoReply)??;
        if src == device {
            let text = String::from_utf8_lossy(&buf[..n]);
            return text.parse().map_err(|_| LoopbackError::Refused(text.to_string()));
        }
    }
}

/// Vehicle UE app: starts `app_name` through the device port, sends the
/// zone to the instance, and stops it once warned about leaving.
pub async fn vehicle(
    device: SocketAddr,
    app_name: &str,
    ue: UeId,
    center: Position,
    radius: f64,
    trace: Trace,
) -> Result<(), LoopbackError> {
    let dev_sock = UdpSocket::bind("127.0.0.1:0").await?;
    trace.record(VEHICLE, "start");
    let ep = match device_call(&dev_sock, device, &format!("START {app_name}")).await? {
        DeviceReply::Ack(Some(ep)) => ep,
        other => return Err(LoopbackError::Refused(other.to_string())),
    };
    trace.record(VEHICLE, "ack-start");

    let app_sock = UdpSocket::bind("127.0.0.1:0").await?;
    let to = SocketAddr::from((ep.addr, ep.port));
    app_sock.send_to(zone_request(ue, center, radius).as_bytes(), to).await?;
    let mut buf = [0u8; 512];
    loop {
        let (n, _) = app_sock.recv_from(&mut buf).await?;
        match std::str::from_utf8(&buf[..n]).unwrap_or("") {
            WARNING_ENTERING => trace.record(VEHICLE, "warned-entering"),
            WARNING_LEAVING => {
                trace.record(VEHICLE, "warned-leaving");
                break;
            }
            other => log::debug!("vehicle: ignoring '{other}'"),
        }
    }
    trace.record(VEHICLE, "stop");
    match device_call(&dev_sock, device, &format!("STOP {app_name}")).await? {
        DeviceReply::Ack(_) => trace.record(VEHICLE, "ack-stop"),
        other => return Err(LoopbackError::Refused(other.to_string())),
    }
    Ok(())
}

/// Parameters of the live danger-zone exchange.
#[derive(Clone, Debug)]
pub struct LiveDangerZone {
    pub app_name: String,
    pub ue: UeId,
    pub center: Position,
    pub radius: f64,
}

impl Default for LiveDangerZone {
    fn default() -> Self {
        LiveDangerZone {
            app_name: "WarningAlert".into(),
            ue: UeId(1),
            center: Position::ORIGIN,
            radius: 30.0,
        }
    }
}

pub struct LiveDangerZoneReport {
    pub trace: Vec<TraceEntry>,
    pub steps: Vec<String>,
    pub sequence: Result<usize, SequenceViolation>,
    pub vehicle: Result<(), String>,
    pub app_error: Option<String>,
    pub outcome: RealtimeOutcome,
}

impl LiveDangerZoneReport {
    /// Full step sequence seen and both notifications delivered over HTTP.
    pub fn passed(&self) -> bool {
        self.vehicle.is_ok()
            && self.app_error.is_none()
            && self.sequence == Ok(DANGER_ZONE_STEPS.len())
            && self.outcome.gateway.callbacks_delivered == 2
    }
}

#[derive(Debug, Error)]
pub enum LiveError {
    #[error(transparent)]
    Run(#[from] RunError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("scenario has no app named '{0}'")]
    NoApp(String),
    #[error("scenario has no device port for {0}")]
    NoDevice(UeId),
}

/// Runs `cfg` in real time with both danger-zone programs outside the
/// simulator. The app named in `params` gets its endpoint replaced by a
/// freshly bound loopback socket.
pub fn run_live_danger_zone(
    cfg: &ScenarioConfig,
    params: &LiveDangerZone,
    opts: &GatewayOptions,
) -> Result<LiveDangerZoneReport, LiveError> {
    let rt = tokio::runtime::Builder::new_multi_thread()
        .worker_threads(2)
        .enable_all()
        .build()?;
    let sock = rt.block_on(UdpSocket::bind("127.0.0.1:0"))?;
    let SocketAddr::V4(local) = sock.local_addr()? else {
        unreachable!("bound to an IPv4 address")
    };
    let mut cfg = cfg.clone();
    let app = cfg
        .apps
        .iter_mut()
        .find(|a| a.name == params.app_name)
        .ok_or_else(|| LiveError::NoApp(params.app_name.clone()))?;
    app.endpoint = Some(Endpoint::new(*local.ip(), local.port()));

    let run = RealtimeRun::start(&cfg, opts)?;
    let device = *run.info().devices.get(&params.ue).ok_or(LiveError::NoDevice(params.ue))?;
    let trace = Trace::default();
    let app_task = rt.spawn(warning_alert_app(sock, run.info().http, trace.clone()));
    let p = params.clone();
    let vehicle_task = rt.spawn({
        let trace = trace.clone();
        async move { vehicle(device, &p.app_name, p.ue, p.center, p.radius, trace).await }
    });

    let outcome = run.join()?;
    let vehicle = match rt.block_on(async { tokio::time::timeout(Duration::from_secs(1), vehicle_task).await }) {
        Ok(Ok(r)) => r.map_err(|e| e.to_string()),
        Ok(Err(e)) => Err(e.to_string()),
        Err(_) => Err("vehicle did not finish before the run ended".into()),
    };
    let app_error = if app_task.is_finished() {
        match rt.block_on(app_task) {
            Ok(Err(e)) => Some(e.to_string()),
            Err(e) => Some(e.to_string()),
            Ok(Ok(())) => None,
        }
    } else {
        app_task.abort();
        None
    };
    rt.shutdown_timeout(Duration::from_millis(200));

    let steps = trace.steps();
    let sequence = check_sequence(Some(params.ue.0), steps.iter().map(String::as_str));
    Ok(LiveDangerZoneReport {
        trace: trace.entries(),
        steps,
        sequence,
        vehicle,
        app_error,
        outcome,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zone_request_round_trip() {
        let m = zone_request(UeId(7), Position::new(1.5, -2.0, 0.0), 30.0);
        assert_eq!(parse_zone_request(&m), Some((UeId(7), Position::new(1.5, -2.0, 0.0), 30.0)));
        assert_eq!(parse_zone_request("ZONE 1.5 0 0 30"), None);
        assert_eq!(parse_zone_request("ZONE 1 0 0"), None);
    }

    #[test]
    fn trace_filters_informational_steps() {
        let t = Trace::default();
        t.record(VEHICLE, "start");
        t.record(VEHICLE, "warned-entering");
        t.record(APP, "notify-entering");
        assert_eq!(t.steps(), vec!["start", "notify-entering"]);
        assert_eq!(t.entries().len(), 3);
    }
}
