//! MEC system level: app descriptors, the orchestrator and lifecycle proxy,
//! the device-app protocol and the in-simulator app scaffold.

mod app;
mod descriptor;
mod device;
mod orchestrator;

use thiserror::Error;

use crate::ids::{ContextId, HostId};

pub use app::{AppAction, AppCtx, AppMessage, MecApp, UeAction, UeApp, UeCtx};
pub use descriptor::AppDescriptor;
pub use device::{parse_device_command, DeviceCommand, DeviceReply, UNKNOWN_COMMAND};
pub use orchestrator::{
    default_host_address, AppContext, ContextState, DefaultPolicy, MecSystem, PlacementPolicy,
    FIRST_APP_PORT,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LifecycleError {
    #[error("malformed app descriptor: {0}")]
    MalformedDescriptor(String),
    #[error("app id {0} already onboarded")]
    DuplicateAppId(String),
    #[error("app name {0} already onboarded")]
    DuplicateAppName(String),
    #[error("unknown app {0}")]
    UnknownApp(String),
    #[error("placement failed: {0}")]
    PlacementFailed(String),
    #[error("unknown context {0}")]
    UnknownContext(ContextId),
    #[error("no running instance of {0}")]
    NoRunningInstance(String),
    #[error("context {id} is {state}")]
    InvalidState { id: ContextId, state: ContextState },
    #[error("host {0} already in the system")]
    DuplicateHost(HostId),
}

impl LifecycleError {
    /// Short token for NACK replies.
    pub fn reason(&self) -> &'static str {
        match self {
            LifecycleError::MalformedDescriptor(_) => "malformed-descriptor",
            LifecycleError::DuplicateAppId(_) | LifecycleError::DuplicateAppName(_) => "duplicate-app",
            LifecycleError::UnknownApp(_) => "unknown-app",
            LifecycleError::PlacementFailed(_) => "placement-failed",
            LifecycleError::UnknownContext(_) => "unknown-context",
            LifecycleError::NoRunningInstance(_) => "no-running-instance",
            LifecycleError::InvalidState { .. } => "invalid-state",
            LifecycleError::DuplicateHost(_) => "duplicate-host",
        }
    }
}
