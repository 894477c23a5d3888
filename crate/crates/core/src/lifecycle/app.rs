//! Scaffolding for apps that run inside the simulator. An app implements
//! the callbacks it needs; each callback receives a context into which it
//! pushes actions, and the system model carries them out after the callback
//! returns.

use super::DeviceReply;
use crate::engine::SimTime;
use crate::ids::{ContextId, HostId, UeId};
use crate::services::{AreaNotification, Endpoint, ServiceDescriptor, ServiceRequest, ServiceResponse};

/// Application payload exchanged between UE apps and MEC apps.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AppMessage {
    pub body: String,
    /// Bytes on the air, for Layer-2 accounting.
    pub size: u64,
}

impl AppMessage {
    pub fn new(body: impl Into<String>) -> Self {
        let body = body.into();
        let size = body.len() as u64 + 28;
        AppMessage { body, size }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum AppAction {
    /// Run `instructions` on the host; completion calls `on_compute_done`.
    Compute { instructions: f64, tag: u64 },
    /// Look up a service in the registry; answered by `on_registry_response`.
    Discover { name: String, tag: u64 },
    Request {
        to: Endpoint,
        request: ServiceRequest,
        tag: u64,
    },
    SendToUe { ue: UeId, msg: AppMessage },
    Timer { delay: f64, tag: u64 },
    Record { stream: String, value: f64 },
    /// A named step in the run timeline.
    Trace(String),
}

pub struct AppCtx {
    pub now: SimTime,
    pub context: ContextId,
    pub host: Option<HostId>,
    /// UE of the device app that requested the instance, if any.
    pub owner_ue: Option<UeId>,
    actions: Vec<AppAction>,
}

impl AppCtx {
    pub fn new(now: SimTime, context: ContextId, host: Option<HostId>, owner_ue: Option<UeId>) -> Self {
        AppCtx {
            now,
            context,
            host,
            owner_ue,
            actions: Vec::new(),
        }
    }

    pub fn compute(&mut self, instructions: f64, tag: u64) {
        self.actions.push(AppAction::Compute { instructions, tag });
    }

    pub fn discover(&mut self, name: impl Into<String>, tag: u64) {
        self.actions.push(AppAction::Discover {
            name: name.into(),
            tag,
        });
    }

    pub fn request(&mut self, to: Endpoint, request: ServiceRequest, tag: u64) {
        self.actions.push(AppAction::Request { to, request, tag });
    }

    pub fn send_to_ue(&mut self, ue: UeId, msg: AppMessage) {
        self.actions.push(AppAction::SendToUe { ue, msg });
    }

    pub fn set_timer(&mut self, delay: f64, tag: u64) {
        self.actions.push(AppAction::Timer { delay, tag });
    }

    pub fn record(&mut self, stream: impl Into<String>, value: f64) {
        self.actions.push(AppAction::Record {
            stream: stream.into(),
            value,
        });
    }

    pub fn trace(&mut self, step: impl Into<String>) {
        self.actions.push(AppAction::Trace(step.into()));
    }

    pub fn take_actions(&mut self) -> Vec<AppAction> {
        std::mem::take(&mut self.actions)
    }
}

/// A MEC app hosted by the simulator.
#[allow(unused_variables)]
pub trait MecApp: Send {
    fn on_start(&mut self, ctx: &mut AppCtx) {}
    fn on_registry_response(&mut self, ctx: &mut AppCtx, tag: u64, found: Vec<ServiceDescriptor>) {}
    fn on_service_response(&mut self, ctx: &mut AppCtx, tag: u64, response: ServiceResponse) {}
    fn on_notification(&mut self, ctx: &mut AppCtx, notification: AreaNotification) {}
    fn on_ue_message(&mut self, ctx: &mut AppCtx, from: UeId, msg: AppMessage) {}
    fn on_compute_done(&mut self, ctx: &mut AppCtx, tag: u64) {}
    fn on_timer(&mut self, ctx: &mut AppCtx, tag: u64) {}
    fn on_stop(&mut self, ctx: &mut AppCtx) {}
}

#[derive(Clone, Debug, PartialEq)]
pub enum UeAction {
    /// Datagram to the lifecycle proxy.
    Device(String),
    SendToApp { to: Endpoint, msg: AppMessage },
    Timer { delay: f64, tag: u64 },
    Record { stream: String, value: f64 },
    Trace(String),
}

pub struct UeCtx {
    pub now: SimTime,
    pub ue: UeId,
    actions: Vec<UeAction>,
}

impl UeCtx {
    pub fn new(now: SimTime, ue: UeId) -> Self {
        UeCtx {
            now,
            ue,
            actions: Vec::new(),
        }
    }

    pub fn device(&mut self, text: impl Into<String>) {
        self.actions.push(UeAction::Device(text.into()));
    }

    pub fn send_to_app(&mut self, to: Endpoint, msg: AppMessage) {
        self.actions.push(UeAction::SendToApp { to, msg });
    }

    pub fn set_timer(&mut self, delay: f64, tag: u64) {
        self.actions.push(UeAction::Timer { delay, tag });
    }

    pub fn record(&mut self, stream: impl Into<String>, value: f64) {
        self.actions.push(UeAction::Record {
            stream: stream.into(),
            value,
        });
    }

    pub fn trace(&mut self, step: impl Into<String>) {
        self.actions.push(UeAction::Trace(step.into()));
    }

    pub fn take_actions(&mut self) -> Vec<UeAction> {
        std::mem::take(&mut self.actions)
    }
}

/// The UE side of a distributed app, device app included.
#[allow(unused_variables)]
pub trait UeApp: Send {
    fn on_start(&mut self, ctx: &mut UeCtx) {}
    fn on_device_reply(&mut self, ctx: &mut UeCtx, reply: DeviceReply) {}
    fn on_message(&mut self, ctx: &mut UeCtx, from: Endpoint, msg: AppMessage) {}
    fn on_timer(&mut self, ctx: &mut UeCtx, tag: u64) {}
}
