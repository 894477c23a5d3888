use std::fmt;
use std::net::Ipv4Addr;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::ServiceError;
use crate::ids::HostId;

/// IPv4 address and port of an app or service.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Endpoint {
    #[serde(rename = "ipAddress")]
    pub addr: Ipv4Addr,
    pub port: u16,
}

impl Endpoint {
    pub const fn new(addr: Ipv4Addr, port: u16) -> Self {
        Endpoint { addr, port }
    }
}

impl fmt::Display for Endpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.addr, self.port)
    }
}

impl FromStr for Endpoint {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (a, p) = s.rsplit_once(':').ok_or_else(|| format!("'{s}' is not ip:port"))?;
        Ok(Endpoint {
            addr: a.parse().map_err(|_| format!("bad address in '{s}'"))?,
            port: p.parse().map_err(|_| format!("bad port in '{s}'"))?,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ServiceDescriptor {
    pub name: String,
    pub host_id: HostId,
    pub endpoint: Endpoint,
    pub version: String,
}

/// System-wide catalogue of MEC services. Every registration is visible from
/// every host; lookups list the caller's own host first.
#[derive(Clone, Debug, Default)]
pub struct Registry {
    entries: Vec<ServiceDescriptor>,
}

impl Registry {
    pub fn new() -> Self {
        Registry::default()
    }

    pub fn register(&mut self, desc: ServiceDescriptor) -> Result<(), ServiceError> {
        if self
            .entries
            .iter()
            .any(|d| d.name == desc.name && d.host_id == desc.host_id)
        {
            return Err(ServiceError::DuplicateRegistration {
                name: desc.name,
                host: desc.host_id,
            });
        }
        self.entries.push(desc);
        Ok(())
    }

    /// Registrations named `name`, local host first, then by host id.
    pub fn discover(&self, name: &str, from: Option<HostId>) -> Vec<ServiceDescriptor> {
        let mut out: Vec<ServiceDescriptor> = self
            .entries
            .iter()
            .filter(|d| d.name == name)
            .cloned()
            .collect();
        out.sort_by_key(|d| (Some(d.host_id) != from, d.host_id));
        out
    }

    pub fn all(&self) -> &[ServiceDescriptor] {
        &self.entries
    }

    pub fn remove_host(&mut self, host: HostId) {
        self.entries.retain(|d| d.host_id != host);
    }

    pub fn offers(&self, name: &str, host: HostId) -> bool {
        self.entries
            .iter()
            .any(|d| d.name == name && d.host_id == host)
    }
}
