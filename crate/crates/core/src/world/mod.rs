//! The integrated system: RAN, one MEC system with its hosts and services,
//! the apps running on both sides, and the bridge to the outside world.
//!
//! Every interaction is an [`Event`]. UE traffic crosses the RAN transport
//! model, service calls queue at the target service instance, and responses
//! are computed when the job departs.

mod apps;
mod external;
mod stats;

use std::collections::BTreeMap;
use std::sync::mpsc::Sender;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::compute::TaskId;
use crate::engine::{Engine, Model, Scheduler, SimTime};
use crate::ids::{ContextId, HostId, UeId};
use crate::lifecycle::{
    parse_device_command, AppAction, AppContext, AppCtx, AppMessage, DeviceCommand, DeviceReply,
    MecApp, MecSystem, UeAction, UeApp, UeCtx,
};
use crate::queue::{Job, JobId, JobKind, ServiceQueue};
use crate::ran::{Direction, Ran, Transport};
use crate::rng::{RngStream, RngStreams};
use crate::services::{
    layer2_measures, AreaNotification, Callback, Endpoint, LocationService, Registry,
    ServiceDescriptor, ServiceError, ServiceRequest, ServiceResponse, LOCATION_SERVICE, RNIS,
    SERVICE_API_VERSION,
};

pub use apps::{
    Arrivals, DangerZoneUeApp, EchoApp, EchoClient, Launcher, LoadApp, LoadRequest,
    WarningAlertApp, WARNING_ENTERING, WARNING_LEAVING,
};
pub use external::{ApiError, ContextInfo, ExternalRequest, Outbound, Responder};
pub use stats::{Labels, StatRecord, Stats, TimelineEntry};

/// First port used by service instances on a host.
pub const FIRST_SERVICE_PORT: u16 = 10020;

/// Builds the app instance for a freshly placed context.
pub type AppFactory = Box<dyn Fn(&AppContext, RngStream) -> Box<dyn MecApp> + Send>;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunMode {
    #[default]
    Sim,
    Realtime,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WorldError {
    #[error("unknown host {0}")]
    UnknownHost(HostId),
    #[error("unknown UE {0}")]
    UnknownUe(UeId),
    #[error("UE {0} already runs an app")]
    DuplicateUeApp(UeId),
    #[error(transparent)]
    Service(#[from] ServiceError),
}

/// A Location Service or RNIS instance on one host.
pub struct ServiceInstance {
    pub name: String,
    pub host: HostId,
    pub endpoint: Endpoint,
    /// Area subscriptions; unused by RNIS instances.
    pub location: LocationService,
    queue: ServiceQueue<ServiceJob>,
    next_job: u64,
    pub completed: u64,
}

impl ServiceInstance {
    pub fn queue(&self) -> &ServiceQueue<ServiceJob> {
        &self.queue
    }

    fn execute(&mut self, ran: &Ran, req: ServiceRequest, now: SimTime) -> ServiceResponse {
        if req.service_name() != self.name {
            return ServiceResponse::Error(ServiceError::InvalidQuery(format!(
                "{} is not offered by {}",
                req.label(),
                self.name
            )));
        }
        let r = match req {
            ServiceRequest::Layer2(q) => layer2_measures(ran, &q, now).map(ServiceResponse::Layer2),
            ServiceRequest::Users(q) => self.location.users(ran, &q, now).map(ServiceResponse::Users),
            ServiceRequest::Subscribe { ue, zone, callback } => self
                .location
                .subscribe(ran, ue, zone, callback)
                .map(ServiceResponse::Subscribed),
            ServiceRequest::Modify { id, zone } => self
                .location
                .modify(ran, id, zone)
                .map(|_| ServiceResponse::Modified(id)),
            ServiceRequest::Unsubscribe(id) => self
                .location
                .delete(id)
                .map(|_| ServiceResponse::Unsubscribed(id)),
        };
        r.unwrap_or_else(ServiceResponse::Error)
    }
}

/// Payload of a service queue job.
pub struct ServiceJob {
    origin: Origin,
    body: JobBody,
}

enum Origin {
    App { ctx: ContextId, tag: u64 },
    External(Responder<Result<ServiceResponse, ApiError>>),
    Service,
}

enum JobBody {
    Request(ServiceRequest),
    Notification(AreaNotification, Callback),
}

/// The device-app end of a lifecycle exchange.
pub enum DeviceEnd {
    Ue(UeId),
    External {
        name: String,
        ue: Option<UeId>,
        reply: Responder<String>,
    },
}

impl DeviceEnd {
    fn name(&self) -> String {
        match self {
            DeviceEnd::Ue(ue) => device_name(*ue),
            DeviceEnd::External { name, .. } => name.clone(),
        }
    }

    fn ue(&self) -> Option<UeId> {
        match self {
            DeviceEnd::Ue(ue) => Some(*ue),
            DeviceEnd::External { ue, .. } => *ue,
        }
    }
}

/// Device-app identity of a simulated UE.
pub fn device_name(ue: UeId) -> String {
    format!("{ue}/device")
}

enum Pending {
    Device(DeviceEnd),
    Create(Responder<Result<ContextInfo, ApiError>>),
    Delete(Responder<Result<(), ApiError>>),
}

pub enum Event {
    MobilityTick,
    L2Collect,
    UeAppStart(UeId),
    /// Device datagram arriving at the lifecycle proxy.
    DeviceUplink { from: DeviceEnd, datagram: Vec<u8> },
    /// Lifecycle reply arriving at the device app.
    DeviceDownlink { to: DeviceEnd, reply: DeviceReply },
    ContextReady(ContextId),
    ContextGone(ContextId),
    JobDone { service: usize, job: JobId },
    RegistryAnswer { ctx: ContextId, tag: u64, name: String },
    AppServiceResponse { ctx: ContextId, tag: u64, response: ServiceResponse },
    UeToApp { ue: UeId, ctx: ContextId, msg: AppMessage },
    AppToUe { ue: UeId, from: Endpoint, msg: AppMessage },
    AppTimer { ctx: ContextId, tag: u64 },
    UeTimer { ue: UeId, tag: u64 },
    ComputeDone { ctx: ContextId, tag: u64, task: TaskId },
    External(ExternalRequest),
    Deliver(Box<dyn FnOnce() + Send>),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct Counters {
    /// App and UE-app callbacks run.
    pub app_events: u64,
    pub lost_messages: u64,
    pub dropped_messages: u64,
    pub notifications: u64,
    pub callbacks_sent: u64,
    pub external_requests: u64,
}

pub struct World {
    pub ran: Ran,
    pub registry: Registry,
    pub mec: MecSystem,
    pub services: Vec<ServiceInstance>,
    pub stats: Stats,
    pub timeline: Vec<TimelineEntry>,
    pub counters: Counters,
    pub mode: RunMode,
    /// Seconds between mobility updates.
    pub mobility_period: f64,
    /// Seconds between Layer-2 collections.
    pub l2_period: f64,
    streams: RngStreams,
    transport_rng: RngStream,
    factories: BTreeMap<String, AppFactory>,
    apps: BTreeMap<ContextId, Box<dyn MecApp>>,
    ue_apps: BTreeMap<UeId, Box<dyn UeApp>>,
    ue_app_starts: BTreeMap<UeId, SimTime>,
    ctx_ue: BTreeMap<ContextId, UeId>,
    pending: BTreeMap<ContextId, Vec<Pending>>,
    outbound: Option<Sender<Outbound>>,
}

impl World {
    pub fn new(seed: u64, ran: Ran, mec: MecSystem) -> Self {
        let streams = RngStreams::new(seed);
        World {
            ran,
            registry: Registry::new(),
            mec,
            services: Vec::new(),
            stats: Stats::default(),
            timeline: Vec::new(),
            counters: Counters::default(),
            mode: RunMode::Sim,
            mobility_period: crate::ran::DEFAULT_MOBILITY_PERIOD,
            l2_period: crate::ran::DEFAULT_MOBILITY_PERIOD,
            transport_rng: streams.stream("ran/transport"),
            streams,
            factories: BTreeMap::new(),
            apps: BTreeMap::new(),
            ue_apps: BTreeMap::new(),
            ue_app_starts: BTreeMap::new(),
            ctx_ue: BTreeMap::new(),
            pending: BTreeMap::new(),
            outbound: None,
        }
    }

    pub fn streams(&self) -> &RngStreams {
        &self.streams
    }

    /// Starts a service on `host` and registers it. Returns its index.
    pub fn add_service(
        &mut self,
        name: &str,
        host: HostId,
        queue: ServiceQueue<ServiceJob>,
    ) -> Result<usize, WorldError> {
        let addr = self
            .mec
            .host_address(host)
            .ok_or(WorldError::UnknownHost(host))?;
        let on_host = self.services.iter().filter(|s| s.host == host).count() as u16;
        let endpoint = Endpoint::new(addr, FIRST_SERVICE_PORT + on_host);
        self.registry.register(ServiceDescriptor {
            name: name.to_string(),
            host_id: host,
            endpoint,
            version: SERVICE_API_VERSION.to_string(),
        })?;
        if let Some(h) = self.mec.host_mut(host) {
            h.services.insert(name.to_string());
        }
        self.services.push(ServiceInstance {
            name: name.to_string(),
            host,
            endpoint,
            location: LocationService::new(),
            queue,
            next_job: 0,
            completed: 0,
        });
        Ok(self.services.len() - 1)
    }

    /// Service queue configuration helper: stream prefix for an instance.
    pub fn service_stream_prefix(name: &str, host: HostId) -> String {
        format!("svc/{name}/{host}")
    }

    /// Sets the implementation instantiated for contexts of `app_name`.
    pub fn register_app_factory(&mut self, app_name: &str, factory: AppFactory) {
        self.factories.insert(app_name.to_string(), factory);
    }

    pub fn add_ue_app(&mut self, ue: UeId, start: SimTime, app: Box<dyn UeApp>) -> Result<(), WorldError> {
        self.ran.ue(ue).map_err(|_| WorldError::UnknownUe(ue))?;
        if self.ue_apps.contains_key(&ue) {
            return Err(WorldError::DuplicateUeApp(ue));
        }
        self.ue_apps.insert(ue, app);
        self.ue_app_starts.insert(ue, start);
        Ok(())
    }

    pub fn set_outbound(&mut self, tx: Sender<Outbound>) {
        self.outbound = Some(tx);
    }

    /// Schedules the periodic ticks and the UE app starts.
    pub fn bootstrap(engine: &mut Engine<World>) {
        let (mp, lp) = (engine.model().mobility_period, engine.model().l2_period);
        let starts: Vec<(UeId, SimTime)> = engine
            .model()
            .ue_app_starts
            .iter()
            .map(|(u, t)| (*u, *t))
            .collect();
        let sched = engine.scheduler_mut();
        if mp > 0.0 {
            sched.schedule_in(mp, Event::MobilityTick);
        }
        if lp > 0.0 {
            sched.schedule_in(lp, Event::L2Collect);
        }
        for (ue, t) in starts {
            // start times are validated as non-negative by the caller
            let _ = sched.schedule_at(t, Event::UeAppStart(ue));
        }
    }

    pub fn service_index(&self, endpoint: &Endpoint) -> Option<usize> {
        self.services.iter().position(|s| s.endpoint == *endpoint)
    }

    fn first_service(&self, name: &str) -> Option<usize> {
        self.services
            .iter()
            .enumerate()
            .filter(|(_, s)| s.name == name)
            .min_by_key(|(_, s)| s.host)
            .map(|(i, _)| i)
    }

    fn labels_for_ctx(&self, ctx: ContextId) -> Labels {
        let c = self.mec.context(ctx);
        Labels {
            app: c.map(|c| c.app_name.clone()),
            host: c.and_then(|c| c.host),
            service: None,
            ue: self.ctx_ue.get(&ctx).copied(),
        }
    }

    fn trace(&mut self, now: SimTime, step: String, ue: Option<UeId>, context: Option<ContextId>) {
        log::debug!("{now} {step}");
        self.timeline.push(TimelineEntry {
            time: now,
            step,
            ue,
            context,
        });
    }

    /// One-way radio delay for `ue`, booked for Layer-2 statistics. `None`
    /// when the message is lost or the UE has no radio link.
    fn radio(&mut self, ue: UeId, dir: Direction, size: u64) -> Option<f64> {
        match self.ran.transport_delay(ue, dir, size, &mut self.transport_rng) {
            Ok(Transport::Delivered(d)) => Some(d),
            Ok(Transport::Lost) => {
                self.counters.lost_messages += 1;
                None
            }
            Err(e) => {
                log::warn!("no radio path for {ue}: {e}");
                self.counters.dropped_messages += 1;
                None
            }
        }
    }

    // ---- service queues ----

    fn submit(
        &mut self,
        sched: &mut Scheduler<Event>,
        service: usize,
        kind: JobKind,
        origin: Origin,
        body: JobBody,
    ) {
        let now = sched.now();
        let inst = &mut self.services[service];
        if inst.queue.is_full() {
            let job = ServiceJob { origin, body };
            self.reply(sched, job.origin, ServiceResponse::Error(ServiceError::QueueFull));
            return;
        }
        inst.next_job += 1;
        let label = match &body {
            JobBody::Request(r) => r.label(),
            JobBody::Notification(..) => "POST notification",
        };
        let job = Job {
            id: JobId(inst.next_job),
            kind,
            arrival: now,
            label,
            payload: ServiceJob { origin, body },
        };
        match inst.queue.submit(job, now) {
            Ok(Some(s)) => {
                sched
                    .schedule_at(s.at, Event::JobDone { service, job: s.job })
                    .expect("departures are never in the past");
            }
            Ok(None) => {}
            Err(e) => log::warn!("{} on {}: {e}", inst.name, inst.host),
        }
    }

    fn reply(&mut self, sched: &mut Scheduler<Event>, origin: Origin, response: ServiceResponse) {
        match origin {
            Origin::App { ctx, tag } => {
                sched.schedule_in(0.0, Event::AppServiceResponse { ctx, tag, response });
            }
            Origin::External(reply) => reply(match response {
                ServiceResponse::Error(e) => Err(e.into()),
                ok => Ok(ok),
            }),
            Origin::Service => {}
        }
    }

    fn job_done(&mut self, sched: &mut Scheduler<Event>, service: usize, job: JobId) {
        let now = sched.now();
        let inst = &mut self.services[service];
        let (job, next) = match inst.queue.finish(job, now) {
            Ok(x) => x,
            Err(e) => {
                log::warn!("{} on {}: {e}", inst.name, inst.host);
                return;
            }
        };
        inst.completed += 1;
        if let Some(s) = next {
            sched
                .schedule_at(s.at, Event::JobDone { service, job: s.job })
                .expect("departures are never in the past");
        }
        let ServiceJob { origin, body } = job.payload;
        match body {
            JobBody::Request(req) => {
                let resp = self.services[service].execute(&self.ran, req, now);
                match origin {
                    Origin::App { ctx, tag } => {
                        self.with_app(sched, ctx, |app, c| app.on_service_response(c, tag, resp))
                    }
                    other => self.reply(sched, other, resp),
                }
            }
            JobBody::Notification(n, cb) => {
                self.counters.notifications += 1;
                match cb {
                    Callback::Context(ctx) => {
                        self.with_app(sched, ctx, |app, c| app.on_notification(c, n))
                    }
                    Callback::Url(url) => {
                        let service = self.services[service].endpoint;
                        match &self.outbound {
                            Some(tx) if self.mode == RunMode::Realtime => {
                                self.counters.callbacks_sent += 1;
                                let _ = tx.send(Outbound::Callback {
                                    url,
                                    service,
                                    notification: n,
                                });
                            }
                            _ => log::warn!("callback to {url} dropped: no outbound channel"),
                        }
                    }
                }
            }
        }
    }

    fn mobility_tick(&mut self, sched: &mut Scheduler<Event>) {
        let now = sched.now();
        if let Err(e) = self.ran.advance_mobility(self.mobility_period) {
            log::error!("mobility update failed: {e}");
        }
        if let Err(e) = self.ran.associate_all() {
            log::error!("association failed: {e}");
        }
        for i in 0..self.services.len() {
            if self.services[i].name != LOCATION_SERVICE {
                continue;
            }
            let fired = self.services[i].location.evaluate(&self.ran, now);
            for (n, cb) in fired {
                self.submit(
                    sched,
                    i,
                    JobKind::Notification,
                    Origin::Service,
                    JobBody::Notification(n, cb),
                );
            }
        }
        sched.schedule_in(self.mobility_period, Event::MobilityTick);
    }

    // ---- apps ----

    fn with_app(
        &mut self,
        sched: &mut Scheduler<Event>,
        ctx: ContextId,
        f: impl FnOnce(&mut dyn MecApp, &mut AppCtx),
    ) {
        let Some(host) = self.mec.context(ctx).map(|c| c.host) else {
            return;
        };
        let Some(app) = self.apps.get_mut(&ctx) else {
            return;
        };
        let mut actx = AppCtx::new(sched.now(), ctx, host, self.ctx_ue.get(&ctx).copied());
        f(app.as_mut(), &mut actx);
        self.counters.app_events += 1;
        let actions = actx.take_actions();
        self.apply_app_actions(sched, ctx, actions);
    }

    fn apply_app_actions(&mut self, sched: &mut Scheduler<Event>, ctx: ContextId, actions: Vec<AppAction>) {
        let now = sched.now();
        for a in actions {
            match a {
                AppAction::Compute { instructions, tag } => {
                    let Some((Some(h), Some(alloc))) =
                        self.mec.context(ctx).map(|c| (c.host, c.allocation))
                    else {
                        log::warn!("{ctx} has no compute allocation");
                        continue;
                    };
                    let host = self.mec.host_mut(h).expect("context host exists");
                    match host.compute(alloc, instructions, now) {
                        Ok(task) => {
                            sched
                                .schedule_at(
                                    task.completes_at,
                                    Event::ComputeDone { ctx, tag, task: task.id },
                                )
                                .expect("completion is not in the past");
                        }
                        Err(e) => log::warn!("compute for {ctx} refused: {e}"),
                    }
                }
                AppAction::Discover { name, tag } => {
                    sched.schedule_in(0.0, Event::RegistryAnswer { ctx, tag, name });
                }
                AppAction::Request { to, mut request, tag } => {
                    if let ServiceRequest::Subscribe { callback, .. } = &mut request {
                        *callback = Callback::Context(ctx);
                    }
                    match self.service_index(&to) {
                        Some(i) => self.submit(
                            sched,
                            i,
                            JobKind::Request,
                            Origin::App { ctx, tag },
                            JobBody::Request(request),
                        ),
                        None => {
                            sched.schedule_in(
                                0.0,
                                Event::AppServiceResponse {
                                    ctx,
                                    tag,
                                    response: ServiceResponse::Error(ServiceError::InvalidQuery(
                                        format!("no service at {to}"),
                                    )),
                                },
                            );
                        }
                    }
                }
                AppAction::SendToUe { ue, msg } => {
                    let Some(from) = self.mec.context(ctx).and_then(|c| c.endpoint) else {
                        continue;
                    };
                    if let Some(d) = self.radio(ue, Direction::Downlink, msg.size) {
                        sched.schedule_in(d, Event::AppToUe { ue, from, msg });
                    }
                }
                AppAction::Timer { delay, tag } => {
                    sched.schedule_in(delay, Event::AppTimer { ctx, tag });
                }
                AppAction::Record { stream, value } => {
                    let labels = self.labels_for_ctx(ctx);
                    self.stats.record(&stream, now, value, labels);
                }
                AppAction::Trace(step) => {
                    let ue = self.ctx_ue.get(&ctx).copied();
                    self.trace(now, step, ue, Some(ctx));
                }
            }
        }
    }

    fn with_ue_app(&mut self, sched: &mut Scheduler<Event>, ue: UeId, f: impl FnOnce(&mut dyn UeApp, &mut UeCtx)) {
        let Some(app) = self.ue_apps.get_mut(&ue) else {
            return;
        };
        let mut uctx = UeCtx::new(sched.now(), ue);
        f(app.as_mut(), &mut uctx);
        self.counters.app_events += 1;
        let actions = uctx.take_actions();
        self.apply_ue_actions(sched, ue, actions);
    }

    fn apply_ue_actions(&mut self, sched: &mut Scheduler<Event>, ue: UeId, actions: Vec<UeAction>) {
        let now = sched.now();
        for a in actions {
            match a {
                UeAction::Device(text) => {
                    let bytes = text.into_bytes();
                    if let Some(d) = self.radio(ue, Direction::Uplink, bytes.len() as u64 + 28) {
                        sched.schedule_in(
                            d,
                            Event::DeviceUplink {
                                from: DeviceEnd::Ue(ue),
                                datagram: bytes,
                            },
                        );
                    }
                }
                UeAction::SendToApp { to, msg } => {
                    let target = self
                        .mec
                        .contexts()
                        .find(|c| c.endpoint == Some(to) && !c.external)
                        .map(|c| c.id);
                    let Some(ctx) = target else {
                        log::warn!("{ue}: no simulated app listens on {to}");
                        self.counters.dropped_messages += 1;
                        continue;
                    };
                    if let Some(d) = self.radio(ue, Direction::Uplink, msg.size) {
                        sched.schedule_in(d, Event::UeToApp { ue, ctx, msg });
                    }
                }
                UeAction::Timer { delay, tag } => {
                    sched.schedule_in(delay, Event::UeTimer { ue, tag });
                }
                UeAction::Record { stream, value } => {
                    let labels = Labels {
                        ue: Some(ue),
                        ..Labels::default()
                    };
                    self.stats.record(&stream, now, value, labels);
                }
                UeAction::Trace(step) => self.trace(now, step, Some(ue), None),
            }
        }
    }

    // ---- lifecycle ----

    fn device_reply(&mut self, sched: &mut Scheduler<Event>, to: DeviceEnd, reply: DeviceReply) {
        match to.ue() {
            Some(ue) => {
                let size = reply.to_string().len() as u64 + 28;
                if let Some(d) = self.radio(ue, Direction::Downlink, size) {
                    sched.schedule_in(d, Event::DeviceDownlink { to, reply });
                }
            }
            None => self.deliver_device_reply(sched, to, reply),
        }
    }

    fn deliver_device_reply(&mut self, sched: &mut Scheduler<Event>, to: DeviceEnd, reply: DeviceReply) {
        match to {
            DeviceEnd::Ue(ue) => self.with_ue_app(sched, ue, |app, c| app.on_device_reply(c, reply)),
            DeviceEnd::External { reply: r, .. } => r(reply.to_string()),
        }
    }

    fn device_uplink(&mut self, sched: &mut Scheduler<Event>, from: DeviceEnd, datagram: Vec<u8>) {
        let now = sched.now();
        let name = from.name();
        let cmd = match parse_device_command(&datagram) {
            Ok(c) => c,
            Err(nack) => return self.device_reply(sched, from, nack),
        };
        match cmd {
            DeviceCommand::Start(app) => {
                if let Ok(ctx) = self.mec.join_existing(&name, &app) {
                    let ep = ctx.endpoint;
                    return self.device_reply(sched, from, DeviceReply::Ack(ep));
                }
                match self.mec.request_context(&name, &app, &self.registry, now) {
                    Ok(id) => {
                        if let Some(ue) = from.ue() {
                            self.ctx_ue.insert(id, ue);
                        }
                        self.pending.entry(id).or_default().push(Pending::Device(from));
                        sched.schedule_in(self.mec.instantiation_delay, Event::ContextReady(id));
                    }
                    Err(e) => self.device_reply(sched, from, DeviceReply::nack(e.reason())),
                }
            }
            DeviceCommand::Stop(app) => match self.mec.stop_for_device(&name, &app, now) {
                Ok(Some(id)) => {
                    self.pending.entry(id).or_default().push(Pending::Device(from));
                    sched.schedule_in(self.mec.termination_delay, Event::ContextGone(id));
                }
                Ok(None) => self.device_reply(sched, from, DeviceReply::Ack(None)),
                Err(e) => self.device_reply(sched, from, DeviceReply::nack(e.reason())),
            },
        }
    }

    fn context_ready(&mut self, sched: &mut Scheduler<Event>, id: ContextId) {
        let now = sched.now();
        let ctx = match self.mec.complete_instantiation(id, now) {
            Ok(c) => c.clone(),
            Err(e) => {
                log::warn!("instantiation of {id}: {e}");
                return;
            }
        };
        if !ctx.external {
            match self.factories.get(&ctx.app_name) {
                Some(f) => {
                    let rng = self.streams.stream(&format!("app/{}/{}", ctx.app_name, id));
                    self.apps.insert(id, f(&ctx, rng));
                }
                None => log::warn!("no implementation registered for app '{}'", ctx.app_name),
            }
        }
        for p in self.pending.remove(&id).unwrap_or_default() {
            match p {
                Pending::Device(to) => self.device_reply(sched, to, DeviceReply::Ack(ctx.endpoint)),
                Pending::Create(r) => r(Ok(ContextInfo::from(&ctx))),
                Pending::Delete(r) => r(Err(ApiError::BadRequest("context was starting".into()))),
            }
        }
        self.with_app(sched, id, |app, c| app.on_start(c));
    }

    fn context_gone(&mut self, sched: &mut Scheduler<Event>, id: ContextId) {
        let now = sched.now();
        self.with_app(sched, id, |app, c| app.on_stop(c));
        self.apps.remove(&id);
        for s in &mut self.services {
            s.location.remove_context(id);
        }
        if let Err(e) = self.mec.complete_termination(id, now) {
            log::warn!("termination of {id}: {e}");
        }
        self.ctx_ue.remove(&id);
        for p in self.pending.remove(&id).unwrap_or_default() {
            match p {
                Pending::Device(to) => self.device_reply(sched, to, DeviceReply::Ack(None)),
                Pending::Delete(r) => r(Ok(())),
                Pending::Create(r) => r(Err(ApiError::NotFound(format!("{id} terminated")))),
            }
        }
    }

    // ---- outside world ----

    fn external(&mut self, sched: &mut Scheduler<Event>, req: ExternalRequest) {
        self.counters.external_requests += 1;
        if self.mode != RunMode::Realtime {
            return reject_mode(req);
        }
        let now = sched.now();
        match req {
            ExternalRequest::CreateContext { device, app_name, reply } => {
                if let Ok(ctx) = self.mec.join_existing(&device, &app_name) {
                    return reply(Ok(ContextInfo::from(ctx)));
                }
                match self.mec.request_context(&device, &app_name, &self.registry, now) {
                    Ok(id) => {
                        self.pending.entry(id).or_default().push(Pending::Create(reply));
                        sched.schedule_in(self.mec.instantiation_delay, Event::ContextReady(id));
                    }
                    Err(e) => reply(Err(e.into())),
                }
            }
            ExternalRequest::DeleteContext { id, reply } => match self.mec.begin_termination(id, now) {
                Ok(_) => {
                    self.pending.entry(id).or_default().push(Pending::Delete(reply));
                    sched.schedule_in(self.mec.termination_delay, Event::ContextGone(id));
                }
                Err(e) => reply(Err(e.into())),
            },
            ExternalRequest::ListServices { reply } => reply(Ok(self.registry.all().to_vec())),
            ExternalRequest::Service { request, reply } => {
                match self.first_service(request.service_name()) {
                    Some(i) => self.submit(
                        sched,
                        i,
                        JobKind::Request,
                        Origin::External(reply),
                        JobBody::Request(request),
                    ),
                    None => reply(Err(ApiError::NotFound(format!(
                        "no {} instance",
                        request.service_name()
                    )))),
                }
            }
            ExternalRequest::Device { device, ue, datagram, reply } => {
                let from = DeviceEnd::External { name: device, ue, reply };
                match ue {
                    Some(u) => {
                        if let Some(d) = self.radio(u, Direction::Uplink, datagram.len() as u64 + 28) {
                            sched.schedule_in(d, Event::DeviceUplink { from, datagram });
                        }
                    }
                    None => self.device_uplink(sched, from, datagram),
                }
            }
            ExternalRequest::Transit { ue, dir, size, deliver } => {
                if let Some(d) = self.radio(ue, dir, size) {
                    sched.schedule_in(d, Event::Deliver(deliver));
                }
            }
            ExternalRequest::CallbackFailed { service, subscription } => {
                if let Some(i) = self.service_index(&service) {
                    log::warn!("disabling {subscription}: callback unreachable");
                    self.services[i].location.disable(subscription);
                }
            }
        }
    }

    /// Contexts currently known to the orchestrator, for reporting.
    pub fn context_infos(&self) -> Vec<ContextInfo> {
        self.mec.contexts().map(ContextInfo::from).collect()
    }

    pub fn rnis(&self) -> Option<&ServiceInstance> {
        self.first_service(RNIS).map(|i| &self.services[i])
    }

    pub fn location(&self) -> Option<&ServiceInstance> {
        self.first_service(LOCATION_SERVICE).map(|i| &self.services[i])
    }
}

fn reject_mode(req: ExternalRequest) {
    match req {
        ExternalRequest::CreateContext { reply, .. } => reply(Err(ApiError::Mode)),
        ExternalRequest::DeleteContext { reply, .. } => reply(Err(ApiError::Mode)),
        ExternalRequest::ListServices { reply } => reply(Err(ApiError::Mode)),
        ExternalRequest::Service { reply, .. } => reply(Err(ApiError::Mode)),
        ExternalRequest::Device { reply, .. } => reply("NACK mode".to_string()),
        ExternalRequest::Transit { .. } | ExternalRequest::CallbackFailed { .. } => {}
    }
}

impl Model for World {
    type Event = Event;

    fn handle(&mut self, sched: &mut Scheduler<Event>, event: Event) {
        match event {
            Event::MobilityTick => self.mobility_tick(sched),
            Event::L2Collect => {
                self.ran.collect_l2(sched.now(), self.l2_period);
                sched.schedule_in(self.l2_period, Event::L2Collect);
            }
            Event::UeAppStart(ue) => self.with_ue_app(sched, ue, |app, c| app.on_start(c)),
            Event::DeviceUplink { from, datagram } => self.device_uplink(sched, from, datagram),
            Event::DeviceDownlink { to, reply } => self.deliver_device_reply(sched, to, reply),
            Event::ContextReady(id) => self.context_ready(sched, id),
            Event::ContextGone(id) => self.context_gone(sched, id),
            Event::JobDone { service, job } => self.job_done(sched, service, job),
            Event::RegistryAnswer { ctx, tag, name } => {
                let host = self.mec.context(ctx).and_then(|c| c.host);
                let found = self.registry.discover(&name, host);
                self.with_app(sched, ctx, |app, c| app.on_registry_response(c, tag, found));
            }
            Event::AppServiceResponse { ctx, tag, response } => {
                self.with_app(sched, ctx, |app, c| app.on_service_response(c, tag, response))
            }
            Event::UeToApp { ue, ctx, msg } => {
                self.with_app(sched, ctx, |app, c| app.on_ue_message(c, ue, msg))
            }
            Event::AppToUe { ue, from, msg } => {
                self.with_ue_app(sched, ue, |app, c| app.on_message(c, from, msg))
            }
            Event::AppTimer { ctx, tag } => self.with_app(sched, ctx, |app, c| app.on_timer(c, tag)),
            Event::UeTimer { ue, tag } => self.with_ue_app(sched, ue, |app, c| app.on_timer(c, tag)),
            Event::ComputeDone { ctx, tag, task } => {
                let Some((Some(h), Some(alloc))) =
                    self.mec.context(ctx).map(|c| (c.host, c.allocation))
                else {
                    return;
                };
                if let Some(host) = self.mec.host_mut(h) {
                    host.finish(alloc, task);
                }
                self.with_app(sched, ctx, |app, c| app.on_compute_done(c, tag));
            }
            Event::External(req) => self.external(sched, req),
            Event::Deliver(f) => f(),
        }
    }
}

#[cfg(test)]
mod tests;
