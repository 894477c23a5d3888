//! MEC services: the Service Registry, the Location Service and the RNIS.
//!
//! The types here hold service state and compute responses. Queueing and
//! transport are applied by the system model, which submits every request
//! to the owning service's [`crate::queue::ServiceQueue`] and computes the
//! response when the job departs.

mod location;
mod registry;
mod rnis;

use thiserror::Error;

use crate::ids::{CellId, HostId, SubscriptionId, UeId};
use crate::ran::RanError;

pub use location::{
    AreaEvent, AreaNotification, AreaSubscription, Callback, LocationService, UserInfo, UserQuery,
    ZoneSpec,
};
pub use registry::{Endpoint, Registry, ServiceDescriptor};
pub use rnis::{layer2_measures, CellMeasures, L2Query, Layer2Report, MeasureValues, UeMeasures};

pub const LOCATION_SERVICE: &str = "LocationService";
pub const RNIS: &str = "RNIS";
pub const SERVICE_API_VERSION: &str = "1.0";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ServiceError {
    #[error("service {name} already registered on {host}")]
    DuplicateRegistration { name: String, host: HostId },
    #[error("radius must be positive and finite, got {0}")]
    InvalidRadius(f64),
    #[error("unknown UE {0}")]
    UnknownUe(UeId),
    #[error("unknown cell {0}")]
    UnknownCell(CellId),
    #[error("unknown subscription {0}")]
    UnknownSubscription(SubscriptionId),
    #[error("query scope is empty")]
    EmptyScope,
    #[error("invalid query: {0}")]
    InvalidQuery(String),
    #[error("service queue full")]
    QueueFull,
}

impl From<RanError> for ServiceError {
    fn from(e: RanError) -> Self {
        match e {
            RanError::UnknownUe(u) => ServiceError::UnknownUe(u),
            RanError::UnknownCell(c) => ServiceError::UnknownCell(c),
            other => ServiceError::InvalidQuery(other.to_string()),
        }
    }
}

/// A call on a Location Service or RNIS instance.
#[derive(Clone, Debug, PartialEq)]
pub enum ServiceRequest {
    Layer2(L2Query),
    Users(UserQuery),
    Subscribe {
        ue: UeId,
        zone: ZoneSpec,
        callback: Callback,
    },
    Modify { id: SubscriptionId, zone: ZoneSpec },
    Unsubscribe(SubscriptionId),
}

impl ServiceRequest {
    pub fn service_name(&self) -> &'static str {
        match self {
            ServiceRequest::Layer2(_) => RNIS,
            _ => LOCATION_SERVICE,
        }
    }

    /// Method and resource, as seen by service time hooks.
    pub fn label(&self) -> &'static str {
        match self {
            ServiceRequest::Layer2(_) => "GET /rni/queries/layer2_meas",
            ServiceRequest::Users(_) => "GET /location/queries/users",
            ServiceRequest::Subscribe { .. } => "POST /location/subscriptions/area",
            ServiceRequest::Modify { .. } => "PUT /location/subscriptions/area",
            ServiceRequest::Unsubscribe(_) => "DELETE /location/subscriptions/area",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ServiceResponse {
    Layer2(Layer2Report),
    Users(Vec<UserInfo>),
    Subscribed(SubscriptionId),
    Modified(SubscriptionId),
    Unsubscribed(SubscriptionId),
    Error(ServiceError),
}
