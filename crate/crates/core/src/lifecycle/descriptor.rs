use serde::{Deserialize, Serialize};

use super::LifecycleError;
use crate::compute::ResourceVector;
use crate::services::Endpoint;

/// Application package descriptor, one JSON document per app.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct AppDescriptor {
    pub app_id: String,
    pub app_name: String,
    /// Built-in app kind for internal apps; empty for external ones.
    #[serde(default)]
    pub app_provider: String,
    #[serde(default)]
    pub app_service_required: Vec<String>,
    #[serde(rename = "virtualComputeDescriptor")]
    pub virtual_compute: ResourceVector,
    /// Where a live app outside the simulator listens. Set iff the app is
    /// external.
    #[serde(
        rename = "emulatedMecApplication",
        default,
        skip_serializing_if = "Option::is_none"
    )]
    pub emulated_endpoint: Option<Endpoint>,
    /// Whether further device apps may share a running instance.
    #[serde(default)]
    pub joinable: bool,
}

impl AppDescriptor {
    pub fn from_json(text: &str) -> Result<Self, LifecycleError> {
        let d: AppDescriptor = serde_json::from_str(text)
            .map_err(|e| LifecycleError::MalformedDescriptor(e.to_string()))?;
        d.validate()?;
        Ok(d)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("descriptor serializes")
    }

    pub fn validate(&self) -> Result<(), LifecycleError> {
        if self.app_id.trim().is_empty() {
            return Err(LifecycleError::MalformedDescriptor("empty appId".into()));
        }
        if self.app_name.trim().is_empty() || self.app_name.contains(char::is_whitespace) {
            return Err(LifecycleError::MalformedDescriptor(format!(
                "appName '{}' must be a non-empty token",
                self.app_name
            )));
        }
        if !self.virtual_compute.is_valid() {
            return Err(LifecycleError::MalformedDescriptor(
                "virtualComputeDescriptor values must be finite and non-negative".into(),
            ));
        }
        Ok(())
    }

    pub fn is_external(&self) -> bool {
        self.emulated_endpoint.is_some()
    }
}
