//! Requests entering the model from outside the event loop, and messages
//! it sends back out. Replies travel through boxed callbacks so the model
//! does not depend on any particular I/O runtime.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ids::{ContextId, HostId, SubscriptionId, UeId};
use crate::lifecycle::{AppContext, ContextState, LifecycleError};
use crate::ran::Direction;
use crate::services::{
    AreaNotification, Endpoint, ServiceDescriptor, ServiceError, ServiceRequest, ServiceResponse,
};

pub type Responder<T> = Box<dyn FnOnce(T) + Send>;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ApiError {
    #[error("the simulation is not running in real time")]
    Mode,
    #[error("bad request: {0}")]
    BadRequest(String),
    #[error("not found: {0}")]
    NotFound(String),
    #[error("forbidden: {0}")]
    Forbidden(String),
    #[error("unavailable: {0}")]
    Unavailable(String),
}

impl ApiError {
    pub fn status(&self) -> u16 {
        match self {
            ApiError::Mode => 409,
            ApiError::BadRequest(_) => 400,
            ApiError::NotFound(_) => 404,
            ApiError::Forbidden(_) => 403,
            ApiError::Unavailable(_) => 503,
        }
    }
}

impl From<LifecycleError> for ApiError {
    fn from(e: LifecycleError) -> Self {
        let msg = e.to_string();
        match e {
            LifecycleError::UnknownApp(_)
            | LifecycleError::UnknownContext(_)
            | LifecycleError::NoRunningInstance(_) => ApiError::NotFound(msg),
            LifecycleError::PlacementFailed(_) => ApiError::Forbidden(msg),
            _ => ApiError::BadRequest(msg),
        }
    }
}

impl From<ServiceError> for ApiError {
    fn from(e: ServiceError) -> Self {
        let msg = e.to_string();
        match e {
            ServiceError::UnknownUe(_)
            | ServiceError::UnknownCell(_)
            | ServiceError::UnknownSubscription(_) => ApiError::NotFound(msg),
            ServiceError::QueueFull => ApiError::Unavailable(msg),
            _ => ApiError::BadRequest(msg),
        }
    }
}

/// App context as reported over the lifecycle API.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ContextInfo {
    pub context_id: ContextId,
    pub app_name: String,
    pub app_id: String,
    pub state: ContextState,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub host_id: Option<HostId>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub endpoint: Option<Endpoint>,
    pub external: bool,
}

impl From<&AppContext> for ContextInfo {
    fn from(c: &AppContext) -> Self {
        ContextInfo {
            context_id: c.id,
            app_name: c.app_name.clone(),
            app_id: c.app_id.clone(),
            state: c.state,
            host_id: c.host,
            endpoint: c.endpoint,
            external: c.external,
        }
    }
}

pub enum ExternalRequest {
    CreateContext {
        device: String,
        app_name: String,
        reply: Responder<Result<ContextInfo, ApiError>>,
    },
    DeleteContext {
        id: ContextId,
        reply: Responder<Result<(), ApiError>>,
    },
    ListServices {
        reply: Responder<Result<Vec<ServiceDescriptor>, ApiError>>,
    },
    /// Call on the first instance of the request's service.
    Service {
        request: ServiceRequest,
        reply: Responder<Result<ServiceResponse, ApiError>>,
    },
    /// Device-app datagram. When `ue` is set the datagram and its reply
    /// cross that UE's radio link.
    Device {
        device: String,
        ue: Option<UeId>,
        datagram: Vec<u8>,
        reply: Responder<String>,
    },
    /// Carries an opaque message over a UE's radio link; `deliver` runs when
    /// it arrives and is dropped if the message is lost.
    Transit {
        ue: UeId,
        dir: Direction,
        size: u64,
        deliver: Box<dyn FnOnce() + Send>,
    },
    /// Callback delivery gave up for this subscription.
    CallbackFailed {
        service: Endpoint,
        subscription: SubscriptionId,
    },
}

impl std::fmt::Debug for ExternalRequest {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ExternalRequest::CreateContext { device, app_name, .. } => {
                write!(f, "CreateContext({device}, {app_name})")
            }
            ExternalRequest::DeleteContext { id, .. } => write!(f, "DeleteContext({id})"),
            ExternalRequest::ListServices { .. } => f.write_str("ListServices"),
            ExternalRequest::Service { request, .. } => write!(f, "Service({})", request.label()),
            ExternalRequest::Device { device, .. } => write!(f, "Device({device})"),
            ExternalRequest::Transit { ue, dir, .. } => write!(f, "Transit({ue}, {dir:?})"),
            ExternalRequest::CallbackFailed { subscription, .. } => {
                write!(f, "CallbackFailed({subscription})")
            }
        }
    }
}

/// Traffic the model emits towards the outside.
#[derive(Clone, Debug, PartialEq)]
pub enum Outbound {
    Callback {
        url: String,
        service: Endpoint,
        notification: AreaNotification,
    },
}
