//! Built-in apps used by the bundled scenarios.

use std::collections::BTreeMap;

use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::engine::SimTime;
use crate::ids::{SubscriptionId, UeId};
use crate::lifecycle::{AppCtx, AppMessage, DeviceReply, MecApp, UeApp, UeCtx};
use crate::ran::Position;
use crate::rng::RngStream;
use crate::services::{
    AreaEvent, AreaNotification, Callback, Endpoint, L2Query, ServiceDescriptor, ServiceRequest,
    ServiceResponse, UserQuery, ZoneSpec, LOCATION_SERVICE,
};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Arrivals {
    /// First request `offset` seconds after start, then every `period`.
    Periodic { period: f64, #[serde(default)] offset: f64 },
    /// Exponential inter-request times.
    Poisson { rate: f64 },
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LoadRequest {
    /// Location of the owning UE, or of all UEs when there is no owner.
    #[default]
    Users,
    /// Layer-2 measures of the owning UE.
    Layer2,
}

/// Issues requests to a service and records each response time.
pub struct LoadApp {
    service: String,
    arrivals: Arrivals,
    request: LoadRequest,
    stream: String,
    target: Option<Endpoint>,
    issued: BTreeMap<u64, SimTime>,
    next_tag: u64,
    rng: RngStream,
}

const DISCOVER: u64 = 0;

impl LoadApp {
    pub fn new(service: &str, arrivals: Arrivals, request: LoadRequest, stream: &str, rng: RngStream) -> Self {
        LoadApp {
            service: service.to_string(),
            arrivals,
            request,
            stream: stream.to_string(),
            target: None,
            issued: BTreeMap::new(),
            next_tag: 1,
            rng,
        }
    }

    fn gap(&mut self) -> f64 {
        match self.arrivals {
            Arrivals::Periodic { period, .. } => period,
            Arrivals::Poisson { rate } => Exp::new(rate).expect("positive rate").sample(&mut self.rng),
        }
    }
}

impl MecApp for LoadApp {
    fn on_start(&mut self, ctx: &mut AppCtx) {
        ctx.discover(self.service.clone(), DISCOVER);
    }

    fn on_registry_response(&mut self, ctx: &mut AppCtx, _tag: u64, found: Vec<ServiceDescriptor>) {
        let Some(d) = found.first() else {
            log::warn!("{}: service {} not found", ctx.context, self.service);
            return;
        };
        self.target = Some(d.endpoint);
        let first = match self.arrivals {
            Arrivals::Periodic { offset, .. } => offset,
            Arrivals::Poisson { .. } => self.gap(),
        };
        ctx.set_timer(first, 0);
    }

    fn on_timer(&mut self, ctx: &mut AppCtx, _tag: u64) {
        let Some(to) = self.target else { return };
        let tag = self.next_tag;
        self.next_tag += 1;
        let request = match (self.request, ctx.owner_ue) {
            (LoadRequest::Users, Some(ue)) => ServiceRequest::Users(UserQuery::ue(ue)),
            (LoadRequest::Users, None) => ServiceRequest::Users(UserQuery::default()),
            (LoadRequest::Layer2, Some(ue)) => ServiceRequest::Layer2(L2Query {
                cells: Vec::new(),
                ues: vec![ue],
                measures: Vec::new(),
                aggregator: crate::ran::Aggregator::LastSample,
            }),
            (LoadRequest::Layer2, None) => return,
        };
        self.issued.insert(tag, ctx.now);
        ctx.request(to, request, tag);
        let gap = self.gap();
        ctx.set_timer(gap, 0);
    }

    fn on_service_response(&mut self, ctx: &mut AppCtx, tag: u64, response: ServiceResponse) {
        if let ServiceResponse::Error(e) = &response {
            log::debug!("{}: request {tag} failed: {e}", ctx.context);
        }
        if let Some(t0) = self.issued.remove(&tag) {
            ctx.record(self.stream.clone(), (ctx.now - t0).as_secs_f64());
        }
    }
}

/// Replies to every UE message, optionally after computing for a while.
pub struct EchoApp {
    instructions: Option<f64>,
    waiting: BTreeMap<u64, (UeId, AppMessage)>,
    next_tag: u64,
}

impl EchoApp {
    pub fn new(instructions: Option<f64>) -> Self {
        EchoApp {
            instructions,
            waiting: BTreeMap::new(),
            next_tag: 0,
        }
    }
}

impl MecApp for EchoApp {
    fn on_ue_message(&mut self, ctx: &mut AppCtx, from: UeId, msg: AppMessage) {
        match self.instructions {
            Some(n) => {
                self.next_tag += 1;
                self.waiting.insert(self.next_tag, (from, msg));
                ctx.compute(n, self.next_tag);
            }
            None => ctx.send_to_ue(from, msg),
        }
    }

    fn on_compute_done(&mut self, ctx: &mut AppCtx, tag: u64) {
        if let Some((ue, msg)) = self.waiting.remove(&tag) {
            ctx.send_to_ue(ue, msg);
        }
    }
}

/// Starts an app and pings it periodically, recording round-trip times in
/// `echo_rtt`.
pub struct EchoClient {
    app_name: String,
    period: f64,
    target: Option<Endpoint>,
    sent: BTreeMap<u64, SimTime>,
    seq: u64,
}

impl EchoClient {
    pub fn new(app_name: &str, period: f64) -> Self {
        EchoClient {
            app_name: app_name.to_string(),
            period,
            target: None,
            sent: BTreeMap::new(),
            seq: 0,
        }
    }
}

impl UeApp for EchoClient {
    fn on_start(&mut self, ctx: &mut UeCtx) {
        ctx.device(format!("START {}", self.app_name));
    }

    fn on_device_reply(&mut self, ctx: &mut UeCtx, reply: DeviceReply) {
        if let DeviceReply::Ack(Some(ep)) = reply {
            self.target = Some(ep);
            ctx.set_timer(0.0, 0);
        }
    }

    fn on_timer(&mut self, ctx: &mut UeCtx, _tag: u64) {
        let Some(to) = self.target else { return };
        self.seq += 1;
        self.sent.insert(self.seq, ctx.now);
        ctx.send_to_app(to, AppMessage::new(format!("PING {}", self.seq)));
        ctx.set_timer(self.period, 0);
    }

    fn on_message(&mut self, ctx: &mut UeCtx, _from: Endpoint, msg: AppMessage) {
        let seq = msg.body.strip_prefix("PING ").and_then(|s| s.parse::<u64>().ok());
        if let Some(t0) = seq.and_then(|s| self.sent.remove(&s)) {
            ctx.record("echo_rtt", (ctx.now - t0).as_secs_f64());
        }
    }
}

/// Device app that starts one MEC app and optionally stops it later.
pub struct Launcher {
    app_name: String,
    stop_after: Option<f64>,
}

impl Launcher {
    pub fn new(app_name: &str, stop_after: Option<f64>) -> Self {
        Launcher {
            app_name: app_name.to_string(),
            stop_after,
        }
    }
}

impl UeApp for Launcher {
    fn on_start(&mut self, ctx: &mut UeCtx) {
        ctx.device(format!("START {}", self.app_name));
        if let Some(t) = self.stop_after {
            ctx.set_timer(t, 0);
        }
    }

    fn on_device_reply(&mut self, ctx: &mut UeCtx, reply: DeviceReply) {
        if let DeviceReply::Nack(r) = reply {
            log::warn!("{}: {} refused: {r}", ctx.ue, self.app_name);
        }
    }

    fn on_timer(&mut self, ctx: &mut UeCtx, _tag: u64) {
        ctx.device(format!("STOP {}", self.app_name));
    }
}

/// Wire format of the zone request a UE app sends to its warning app.
pub fn zone_message(center: Position, radius: f64) -> AppMessage {
    AppMessage::new(format!("ZONE {} {} {} {}", center.x, center.y, center.z, radius))
}

fn parse_zone(body: &str) -> Option<(Position, f64)> {
    let rest = body.strip_prefix("ZONE ")?;
    let v: Vec<f64> = rest
        .split(' ')
        .map(str::parse)
        .collect::<Result<_, _>>()
        .ok()?;
    match v[..] {
        [x, y, z, r] => Some((Position::new(x, y, z), r)),
        _ => None,
    }
}

pub const WARNING_ENTERING: &str = "WARNING entering";
pub const WARNING_LEAVING: &str = "WARNING leaving";

const TAG_SUBSCRIBE: u64 = 1;
const TAG_MODIFY: u64 = 2;

/// MEC side of the danger-zone warning service. Watches its UE through an
/// area subscription, warns it on entry, then watches for the exit.
#[derive(Default)]
pub struct WarningAlertApp {
    location: Option<Endpoint>,
    ue: Option<UeId>,
    zone: Option<(Position, f64)>,
    sub: Option<SubscriptionId>,
}

impl WarningAlertApp {
    pub fn new() -> Self {
        WarningAlertApp::default()
    }

    fn subscribe(&mut self, ctx: &mut AppCtx) {
        let (Some(to), Some(ue), Some((center, radius)), None) = (self.location, self.ue, self.zone, self.sub)
        else {
            return;
        };
        let zone = ZoneSpec {
            center,
            radius,
            event: AreaEvent::Entering,
        };
        ctx.request(
            to,
            ServiceRequest::Subscribe {
                ue,
                zone,
                callback: Callback::Context(ctx.context),
            },
            TAG_SUBSCRIBE,
        );
    }
}

impl MecApp for WarningAlertApp {
    fn on_start(&mut self, ctx: &mut AppCtx) {
        ctx.discover(LOCATION_SERVICE, 0);
    }

    fn on_registry_response(&mut self, ctx: &mut AppCtx, _tag: u64, found: Vec<ServiceDescriptor>) {
        self.location = found.first().map(|d| d.endpoint);
        self.subscribe(ctx);
    }

    fn on_ue_message(&mut self, ctx: &mut AppCtx, from: UeId, msg: AppMessage) {
        if let Some(z) = parse_zone(&msg.body) {
            self.ue = Some(from);
            self.zone = Some(z);
            self.subscribe(ctx);
        }
    }

    fn on_service_response(&mut self, ctx: &mut AppCtx, tag: u64, response: ServiceResponse) {
        match (tag, response) {
            (TAG_SUBSCRIBE, ServiceResponse::Subscribed(id)) => {
                self.sub = Some(id);
                ctx.trace("subscribe-entering");
            }
            (TAG_MODIFY, ServiceResponse::Modified(_)) => ctx.trace("modify-leaving"),
            (_, ServiceResponse::Error(e)) => ctx.trace(format!("service-error {e}")),
            _ => {}
        }
    }

    fn on_notification(&mut self, ctx: &mut AppCtx, n: AreaNotification) {
        let Some(ue) = self.ue else { return };
        match n.event {
            AreaEvent::Entering => {
                ctx.trace("notify-entering");
                ctx.send_to_ue(ue, AppMessage::new(WARNING_ENTERING));
                ctx.trace("inform-entering");
                if let (Some(to), Some(id), Some((center, radius))) = (self.location, self.sub, self.zone) {
                    let zone = ZoneSpec {
                        center,
                        radius,
                        event: AreaEvent::Leaving,
                    };
                    ctx.request(to, ServiceRequest::Modify { id, zone }, TAG_MODIFY);
                }
            }
            AreaEvent::Leaving => {
                ctx.trace("notify-leaving");
                ctx.send_to_ue(ue, AppMessage::new(WARNING_LEAVING));
                ctx.trace("inform-leaving");
            }
        }
    }
}

/// Vehicle side of the danger-zone service: starts the warning app, asks it
/// to watch a zone, and stops it once warned about leaving.
pub struct DangerZoneUeApp {
    app_name: String,
    center: Position,
    radius: f64,
    stopping: bool,
}

impl DangerZoneUeApp {
    pub fn new(app_name: &str, center: Position, radius: f64) -> Self {
        DangerZoneUeApp {
            app_name: app_name.to_string(),
            center,
            radius,
            stopping: false,
        }
    }
}

impl UeApp for DangerZoneUeApp {
    fn on_start(&mut self, ctx: &mut UeCtx) {
        ctx.device(format!("START {}", self.app_name));
        ctx.trace("start");
    }

    fn on_device_reply(&mut self, ctx: &mut UeCtx, reply: DeviceReply) {
        match reply {
            DeviceReply::Ack(Some(ep)) if !self.stopping => {
                ctx.trace("ack-start");
                ctx.send_to_app(ep, zone_message(self.center, self.radius));
            }
            DeviceReply::Ack(_) if self.stopping => ctx.trace("ack-stop"),
            DeviceReply::Ack(None) => ctx.trace("ack"),
            DeviceReply::Ack(Some(_)) => ctx.trace("ack-unexpected"),
            DeviceReply::Nack(r) => ctx.trace(format!("nack {r}")),
        }
    }

    fn on_message(&mut self, ctx: &mut UeCtx, _from: Endpoint, msg: AppMessage) {
        match msg.body.as_str() {
            WARNING_ENTERING => ctx.trace("warned-entering"),
            WARNING_LEAVING => {
                ctx.trace("warned-leaving");
                if !self.stopping {
                    self.stopping = true;
                    ctx.device(format!("STOP {}", self.app_name));
                    ctx.trace("stop");
                }
            }
            other => log::debug!("{}: ignoring '{other}'", ctx.ue),
        }
    }
}
