use std::collections::BTreeMap;
use std::fmt;
use std::net::Ipv4Addr;

use serde::{Deserialize, Serialize};

use super::device::{parse_device_command, DeviceCommand, DeviceReply};
use super::{AppDescriptor, LifecycleError};
use crate::compute::HostState;
use crate::engine::SimTime;
use crate::ids::{AppId, ContextId, HostId};
use crate::services::{Endpoint, Registry};

/// First port handed to app instances on a host.
pub const FIRST_APP_PORT: u16 = 4500;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ContextState {
    Requested,
    Instantiating,
    Running,
    Terminating,
    Terminated,
}

impl fmt::Display for ContextState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ContextState::Requested => "requested",
            ContextState::Instantiating => "instantiating",
            ContextState::Running => "running",
            ContextState::Terminating => "terminating",
            ContextState::Terminated => "terminated",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AppContext {
    pub id: ContextId,
    pub app_name: String,
    pub app_id: String,
    pub state: ContextState,
    /// Every state entered, with its time.
    pub history: Vec<(ContextState, SimTime)>,
    pub host: Option<HostId>,
    pub allocation: Option<AppId>,
    pub endpoint: Option<Endpoint>,
    /// Device app that requested the instance.
    pub owner: String,
    pub joined: Vec<String>,
    pub external: bool,
}

impl AppContext {
    fn enter(&mut self, state: ContextState, now: SimTime) {
        debug_assert!(state > self.state || self.history.is_empty());
        self.state = state;
        self.history.push((state, now));
    }

    pub fn serves(&self, device: &str) -> bool {
        self.owner == device || self.joined.iter().any(|j| j == device)
    }
}

/// Host selection, replaceable per MEC system.
pub trait PlacementPolicy: Send {
    fn choose_host(
        &self,
        desc: &AppDescriptor,
        hosts: &BTreeMap<HostId, HostState>,
        registry: &Registry,
    ) -> Option<HostId>;
}

/// Keeps hosts that can admit the app and offer its required services, then
/// takes the least CPU-utilized one, lowest id on ties. Strict placement
/// wants the services on the host itself; relaxed placement accepts them
/// anywhere in the registry.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DefaultPolicy {
    pub strict: bool,
}

impl Default for DefaultPolicy {
    fn default() -> Self {
        DefaultPolicy { strict: true }
    }
}

impl PlacementPolicy for DefaultPolicy {
    fn choose_host(
        &self,
        desc: &AppDescriptor,
        hosts: &BTreeMap<HostId, HostState>,
        registry: &Registry,
    ) -> Option<HostId> {
        let offers = |h: &HostState, name: &str| {
            if self.strict {
                h.services.contains(name) || registry.offers(name, h.id)
            } else {
                !registry.discover(name, Some(h.id)).is_empty() || h.services.contains(name)
            }
        };
        hosts
            .values()
            .filter(|h| h.fits(&desc.virtual_compute).is_ok())
            .filter(|h| desc.app_service_required.iter().all(|s| offers(h, s)))
            .map(|h| (h.utilization(), h.id))
            .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
            .map(|(_, id)| id)
    }
}

/// One MEC system: orchestrator, its hosts, the app catalogue and the
/// contexts handled by its lifecycle proxy.
pub struct MecSystem {
    pub id: u32,
    /// Seconds from request to running, grant latency included.
    pub instantiation_delay: f64,
    pub termination_delay: f64,
    hosts: BTreeMap<HostId, HostState>,
    host_addrs: BTreeMap<HostId, Ipv4Addr>,
    next_port: BTreeMap<HostId, u16>,
    catalog: BTreeMap<String, AppDescriptor>,
    contexts: BTreeMap<ContextId, AppContext>,
    retired: Vec<AppContext>,
    next_ctx: u32,
    policy: Box<dyn PlacementPolicy>,
}

impl fmt::Debug for MecSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MecSystem")
            .field("id", &self.id)
            .field("hosts", &self.hosts.keys().collect::<Vec<_>>())
            .field("contexts", &self.contexts.len())
            .finish()
    }
}

/// Default address of a host: 10.0.5.(id + 2).
pub fn default_host_address(id: HostId) -> Ipv4Addr {
    Ipv4Addr::new(10, 0, 5, (id.0 + 2).min(254) as u8)
}

impl MecSystem {
    pub fn new(id: u32, instantiation_delay: f64, termination_delay: f64) -> Self {
        MecSystem {
            id,
            instantiation_delay,
            termination_delay,
            hosts: BTreeMap::new(),
            host_addrs: BTreeMap::new(),
            next_port: BTreeMap::new(),
            catalog: BTreeMap::new(),
            contexts: BTreeMap::new(),
            retired: Vec::new(),
            next_ctx: 0,
            policy: Box::new(DefaultPolicy::default()),
        }
    }

    pub fn set_policy(&mut self, policy: Box<dyn PlacementPolicy>) {
        self.policy = policy;
    }

    pub fn add_host(&mut self, host: HostState, addr: Option<Ipv4Addr>) -> Result<(), LifecycleError> {
        let id = host.id;
        if self.hosts.contains_key(&id) {
            return Err(LifecycleError::DuplicateHost(id));
        }
        self.host_addrs
            .insert(id, addr.unwrap_or_else(|| default_host_address(id)));
        self.next_port.insert(id, FIRST_APP_PORT);
        self.hosts.insert(id, host);
        Ok(())
    }

    pub fn hosts(&self) -> &BTreeMap<HostId, HostState> {
        &self.hosts
    }

    pub fn host(&self, id: HostId) -> Option<&HostState> {
        self.hosts.get(&id)
    }

    pub fn host_mut(&mut self, id: HostId) -> Option<&mut HostState> {
        self.hosts.get_mut(&id)
    }

    pub fn host_address(&self, id: HostId) -> Option<Ipv4Addr> {
        self.host_addrs.get(&id).copied()
    }

    /// Next free port on `host`, for services and app instances alike.
    pub fn allocate_port(&mut self, host: HostId) -> Option<Endpoint> {
        let addr = *self.host_addrs.get(&host)?;
        let port = self.next_port.get_mut(&host)?;
        let ep = Endpoint::new(addr, *port);
        *port += 1;
        Some(ep)
    }

    pub fn onboard(&mut self, desc: AppDescriptor) -> Result<(), LifecycleError> {
        desc.validate()?;
        if self.catalog.values().any(|d| d.app_id == desc.app_id) {
            return Err(LifecycleError::DuplicateAppId(desc.app_id));
        }
        if self.catalog.contains_key(&desc.app_name) {
            return Err(LifecycleError::DuplicateAppName(desc.app_name));
        }
        self.catalog.insert(desc.app_name.clone(), desc);
        Ok(())
    }

    pub fn descriptor(&self, app_name: &str) -> Option<&AppDescriptor> {
        self.catalog.get(app_name)
    }

    pub fn catalog(&self) -> impl Iterator<Item = &AppDescriptor> {
        self.catalog.values()
    }

    pub fn choose_best_mec_host(
        &self,
        desc: &AppDescriptor,
        registry: &Registry,
    ) -> Result<HostId, LifecycleError> {
        if self.hosts.is_empty() {
            return Err(LifecycleError::PlacementFailed("no hosts".into()));
        }
        self.policy
            .choose_host(desc, &self.hosts, registry)
            .ok_or_else(|| LifecycleError::PlacementFailed(format!("no feasible host for {}", desc.app_name)))
    }

    /// Places and admits a new instance of `app_name` and leaves it
    /// instantiating; [`MecSystem::complete_instantiation`] makes it running.
    /// External apps get their emulated endpoint and no admission.
    pub fn request_context(
        &mut self,
        owner: &str,
        app_name: &str,
        registry: &Registry,
        now: SimTime,
    ) -> Result<ContextId, LifecycleError> {
        let desc = self
            .catalog
            .get(app_name)
            .ok_or_else(|| LifecycleError::UnknownApp(app_name.to_string()))?
            .clone();
        let (host, allocation, endpoint) = match desc.emulated_endpoint {
            Some(ep) => (None, None, ep),
            None => {
                let host = self.choose_best_mec_host(&desc, registry)?;
                let alloc = self
                    .hosts
                    .get_mut(&host)
                    .expect("policy returns a known host")
                    .admit(desc.virtual_compute)
                    .map_err(|e| LifecycleError::PlacementFailed(e.to_string()))?;
                let ep = self.allocate_port(host).expect("known host");
                (Some(host), Some(alloc), ep)
            }
        };
        self.next_ctx += 1;
        let id = ContextId(self.next_ctx);
        let mut ctx = AppContext {
            id,
            app_name: desc.app_name.clone(),
            app_id: desc.app_id.clone(),
            state: ContextState::Requested,
            history: Vec::new(),
            host,
            allocation,
            endpoint: Some(endpoint),
            owner: owner.to_string(),
            joined: Vec::new(),
            external: desc.is_external(),
        };
        ctx.enter(ContextState::Requested, now);
        ctx.enter(ContextState::Instantiating, now);
        self.contexts.insert(id, ctx);
        Ok(id)
    }

    pub fn complete_instantiation(&mut self, id: ContextId, now: SimTime) -> Result<&AppContext, LifecycleError> {
        let ctx = self
            .contexts
            .get_mut(&id)
            .ok_or(LifecycleError::UnknownContext(id))?;
        if ctx.state != ContextState::Instantiating {
            return Err(LifecycleError::InvalidState { id, state: ctx.state });
        }
        ctx.enter(ContextState::Running, now);
        Ok(ctx)
    }

    /// Attaches `device` to a running instance of a joinable app.
    pub fn join_existing(&mut self, device: &str, app_name: &str) -> Result<&AppContext, LifecycleError> {
        let joinable = self
            .catalog
            .get(app_name)
            .ok_or_else(|| LifecycleError::UnknownApp(app_name.to_string()))?
            .joinable;
        let none = || LifecycleError::NoRunningInstance(app_name.to_string());
        if !joinable {
            return Err(none());
        }
        let ctx = self
            .contexts
            .values_mut()
            .find(|c| c.app_name == app_name && c.state == ContextState::Running)
            .ok_or_else(none)?;
        if !ctx.serves(device) {
            ctx.joined.push(device.to_string());
        }
        Ok(ctx)
    }

    pub fn begin_termination(&mut self, id: ContextId, now: SimTime) -> Result<&AppContext, LifecycleError> {
        let ctx = self
            .contexts
            .get_mut(&id)
            .filter(|c| c.state == ContextState::Running)
            .ok_or(LifecycleError::UnknownContext(id))?;
        ctx.enter(ContextState::Terminating, now);
        Ok(ctx)
    }

    /// Releases the context's compute allocation and retires it.
    pub fn complete_termination(&mut self, id: ContextId, now: SimTime) -> Result<AppContext, LifecycleError> {
        let mut ctx = self
            .contexts
            .remove(&id)
            .ok_or(LifecycleError::UnknownContext(id))?;
        if let (Some(h), Some(a)) = (ctx.host, ctx.allocation) {
            if let Some(host) = self.hosts.get_mut(&h) {
                // a host-side release failure means the allocation is already gone
                let _ = host.release(a);
            }
        }
        ctx.enter(ContextState::Terminated, now);
        self.retired.push(ctx.clone());
        Ok(ctx)
    }

    pub fn context(&self, id: ContextId) -> Option<&AppContext> {
        self.contexts.get(&id)
    }

    pub fn contexts(&self) -> impl Iterator<Item = &AppContext> {
        self.contexts.values()
    }

    pub fn retired(&self) -> &[AppContext] {
        &self.retired
    }

    /// Running context of `app_name` serving `device`.
    pub fn find_context(&self, device: &str, app_name: &str) -> Option<ContextId> {
        self.contexts
            .values()
            .find(|c| c.app_name == app_name && c.state == ContextState::Running && c.serves(device))
            .map(|c| c.id)
    }

    /// Handles one device-app datagram with no simulated delays. START joins
    /// a running instance of a joinable app, otherwise instantiates one;
    /// STOP tears down the caller's instance, or just detaches the caller
    /// if it had joined someone else's.
    pub fn device_app_handle(
        &mut self,
        device: &str,
        datagram: &[u8],
        registry: &Registry,
        now: SimTime,
    ) -> DeviceReply {
        let cmd = match parse_device_command(datagram) {
            Ok(c) => c,
            Err(nack) => return nack,
        };
        match cmd {
            DeviceCommand::Start(name) => {
                if let Ok(ctx) = self.join_existing(device, &name) {
                    return DeviceReply::Ack(ctx.endpoint);
                }
                match self.request_context(device, &name, registry, now) {
                    Ok(id) => match self.complete_instantiation(id, now) {
                        Ok(ctx) => DeviceReply::Ack(ctx.endpoint),
                        Err(e) => DeviceReply::nack(e.reason()),
                    },
                    Err(e) => DeviceReply::nack(e.reason()),
                }
            }
            DeviceCommand::Stop(name) => match self.stop_for_device(device, &name, now) {
                Ok(Some(id)) => match self.complete_termination(id, now) {
                    Ok(_) => DeviceReply::Ack(None),
                    Err(e) => DeviceReply::nack(e.reason()),
                },
                Ok(None) => DeviceReply::Ack(None),
                Err(e) => DeviceReply::nack(e.reason()),
            },
        }
    }

    /// Detaches `device` from its instance of `app_name`. Returns the
    /// context if it is now terminating.
    pub fn stop_for_device(
        &mut self,
        device: &str,
        app_name: &str,
        now: SimTime,
    ) -> Result<Option<ContextId>, LifecycleError> {
        let id = self
            .find_context(device, app_name)
            .ok_or_else(|| LifecycleError::NoRunningInstance(app_name.to_string()))?;
        let ctx = self.contexts.get_mut(&id).expect("found above");
        if ctx.owner != device {
            ctx.joined.retain(|j| j != device);
            return Ok(None);
        }
        if !ctx.joined.is_empty() {
            // the first joiner inherits the instance
            ctx.owner = ctx.joined.remove(0);
            return Ok(None);
        }
        self.begin_termination(id, now)?;
        Ok(Some(id))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compute::{ResourceVector, SchedulingMode};
    use crate::services::ServiceDescriptor;
    use proptest::prelude::*;

    fn host(id: u32, cpu: f64) -> HostState {
        HostState::new(HostId(id), ResourceVector::new(cpu, 1e9, 1e9), SchedulingMode::FairSharing)
    }

    fn desc(name: &str, cpu: f64, services: &[&str]) -> AppDescriptor {
        AppDescriptor {
            app_id: format!("{name}-id"),
            app_name: name.into(),
            app_provider: "echo".into(),
            app_service_required: services.iter().map(|s| s.to_string()).collect(),
            virtual_compute: ResourceVector::new(cpu, 1.0, 1.0),
            emulated_endpoint: None,
            joinable: false,
        }
    }

    fn system(hosts: Vec<HostState>) -> MecSystem {
        let mut s = MecSystem::new(1, 0.5, 0.2);
        for h in hosts {
            s.add_host(h, None).unwrap();
        }
        s
    }

    #[test]
    fn internal_instantiation_lifecycle() {
        let mut s = system(vec![host(1, 1000.0)]);
        s.onboard(desc("Echo", 100.0, &[])).unwrap();
        let reg = Registry::new();
        let id = s.request_context("ue1", "Echo", &reg, SimTime::ZERO).unwrap();
        assert_eq!(s.context(id).unwrap().state, ContextState::Instantiating);
        let ctx = s.complete_instantiation(id, SimTime::from_millis(500)).unwrap();
        assert_eq!(ctx.state, ContextState::Running);
        assert_eq!(ctx.host, Some(HostId(1)));
        assert_eq!(ctx.endpoint.unwrap().to_string(), "10.0.5.3:4500");
        assert_eq!(s.host(HostId(1)).unwrap().allocated().cpu, 100.0);
        s.begin_termination(id, SimTime::from_secs_f64(1.0)).unwrap();
        let done = s.complete_termination(id, SimTime::from_secs_f64(1.2)).unwrap();
        let states: Vec<ContextState> = done.history.iter().map(|(st, _)| *st).collect();
        assert_eq!(
            states,
            vec![
                ContextState::Requested,
                ContextState::Instantiating,
                ContextState::Running,
                ContextState::Terminating,
                ContextState::Terminated
            ]
        );
        assert_eq!(s.host(HostId(1)).unwrap().allocated().cpu, 0.0);
        assert_eq!(
            s.begin_termination(id, SimTime::from_secs_f64(2.0)).unwrap_err(),
            LifecycleError::UnknownContext(id)
        );
    }

    #[test]
    fn external_app_bypasses_admission() {
        let mut s = system(vec![host(1, 10.0)]);
        let mut d = desc("Ext", 1e6, &[]);
        d.emulated_endpoint = Some("127.0.0.1:4000".parse().unwrap());
        s.onboard(d).unwrap();
        let reg = Registry::new();
        let id = s.request_context("ue1", "Ext", &reg, SimTime::ZERO).unwrap();
        let ctx = s.complete_instantiation(id, SimTime::ZERO).unwrap();
        assert!(ctx.external);
        assert_eq!(ctx.endpoint.unwrap().to_string(), "127.0.0.1:4000");
        assert_eq!(s.host(HostId(1)).unwrap().allocated().cpu, 0.0);
        s.begin_termination(id, SimTime::ZERO).unwrap();
        s.complete_termination(id, SimTime::ZERO).unwrap();
        assert_eq!(s.host(HostId(1)).unwrap().allocated().cpu, 0.0);
    }

    #[test]
    fn full_hosts_fail_placement() {
        let mut s = system(vec![host(1, 50.0), host(2, 50.0)]);
        s.onboard(desc("Big", 100.0, &[])).unwrap();
        assert!(matches!(
            s.request_context("ue1", "Big", &Registry::new(), SimTime::ZERO),
            Err(LifecycleError::PlacementFailed(_))
        ));
        assert!(matches!(
            s.request_context("ue1", "Nope", &Registry::new(), SimTime::ZERO),
            Err(LifecycleError::UnknownApp(_))
        ));
    }

    #[test]
    fn policy_prefers_low_utilization_then_low_id() {
        let mut h1 = host(1, 100.0);
        h1.admit(ResourceVector::new(90.0, 0.0, 0.0)).unwrap();
        let mut h2 = host(2, 100.0);
        h2.admit(ResourceVector::new(20.0, 0.0, 0.0)).unwrap();
        let s = system(vec![h1, h2]);
        let reg = Registry::new();
        assert_eq!(s.choose_best_mec_host(&desc("A", 5.0, &[]), &reg).unwrap(), HostId(2));

        let s = system(vec![host(2, 100.0), host(1, 100.0)]);
        assert_eq!(s.choose_best_mec_host(&desc("A", 5.0, &[]), &reg).unwrap(), HostId(1));
    }

    #[test]
    fn required_service_constrains_host() {
        let h1 = host(1, 100.0);
        let mut h2 = host(2, 100.0);
        h2.admit(ResourceVector::new(80.0, 0.0, 0.0)).unwrap();
        let mut s = system(vec![h1, h2]);
        let mut reg = Registry::new();
        reg.register(ServiceDescriptor {
            name: "LocationService".into(),
            host_id: HostId(2),
            endpoint: "10.0.5.4:10020".parse().unwrap(),
            version: "1".into(),
        })
        .unwrap();
        let d = desc("A", 5.0, &["LocationService"]);
        assert_eq!(s.choose_best_mec_host(&d, &reg).unwrap(), HostId(2));
        s.set_policy(Box::new(DefaultPolicy { strict: false }));
        assert_eq!(s.choose_best_mec_host(&d, &reg).unwrap(), HostId(1));
    }

    #[test]
    fn custom_policy_is_used() {
        struct Last;
        impl PlacementPolicy for Last {
            fn choose_host(
                &self,
                _d: &AppDescriptor,
                hosts: &BTreeMap<HostId, HostState>,
                _r: &Registry,
            ) -> Option<HostId> {
                hosts.keys().next_back().copied()
            }
        }
        let mut s = system(vec![host(1, 100.0), host(2, 100.0), host(3, 100.0)]);
        s.set_policy(Box::new(Last));
        assert_eq!(
            s.choose_best_mec_host(&desc("A", 5.0, &[]), &Registry::new()).unwrap(),
            HostId(3)
        );
    }

    #[test]
    fn joining() {
        let mut s = system(vec![host(1, 1000.0)]);
        let mut d = desc("Shared", 10.0, &[]);
        d.joinable = true;
        s.onboard(d).unwrap();
        s.onboard(desc("Private", 10.0, &[])).unwrap();
        let reg = Registry::new();
        assert_eq!(
            s.join_existing("ue2", "Shared").unwrap_err(),
            LifecycleError::NoRunningInstance("Shared".into())
        );
        let id = s.request_context("ue1", "Shared", &reg, SimTime::ZERO).unwrap();
        let ep = s.complete_instantiation(id, SimTime::ZERO).unwrap().endpoint;
        for dev in ["ue2", "ue3", "ue2"] {
            assert_eq!(s.join_existing(dev, "Shared").unwrap().endpoint, ep);
        }
        assert_eq!(s.contexts().count(), 1);
        let p = s.request_context("ue1", "Private", &reg, SimTime::ZERO).unwrap();
        s.complete_instantiation(p, SimTime::ZERO).unwrap();
        assert_eq!(
            s.join_existing("ue2", "Private").unwrap_err(),
            LifecycleError::NoRunningInstance("Private".into())
        );
    }

    #[test]
    fn device_protocol() {
        let mut s = system(vec![host(1, 1000.0)]);
        s.onboard(desc("WarningAlert", 10.0, &[])).unwrap();
        let reg = Registry::new();
        let r = s.device_app_handle("ue1", b"START WarningAlert", &reg, SimTime::ZERO);
        assert_eq!(r.to_string(), "ACK 10.0.5.3:4500");
        let r = s.device_app_handle("ue1", b"STOP WarningAlert", &reg, SimTime::ZERO);
        assert_eq!(r.to_string(), "ACK");
        let r = s.device_app_handle("ue1", b"FROB X", &reg, SimTime::ZERO);
        assert_eq!(r.to_string(), "NACK unknown-command");
        let r = s.device_app_handle("ue1", b"STOP WarningAlert", &reg, SimTime::ZERO);
        assert!(!r.is_ack());
        let r = s.device_app_handle("ue1", b"START Missing", &reg, SimTime::ZERO);
        assert!(r.to_string().starts_with("NACK "));
    }

    proptest! {
        // random admit/terminate sequences never exceed capacity, and external
        // contexts never touch allocations
        #[test]
        fn allocations_stay_within_capacity(
            ops in proptest::collection::vec((0u8..3, 1.0f64..400.0), 1..60)
        ) {
            let mut s = system(vec![host(1, 1000.0), host(2, 700.0)]);
            let mut ext = desc("Ext", 0.0, &[]);
            ext.emulated_endpoint = Some("127.0.0.1:4000".parse().unwrap());
            s.onboard(ext).unwrap();
            let reg = Registry::new();
            let mut live: Vec<ContextId> = Vec::new();
            for (i, (op, cpu)) in ops.into_iter().enumerate() {
                let t = SimTime::from_millis(i as u64);
                match op {
                    0 => {
                        let name = format!("A{i}");
                        s.onboard(desc(&name, cpu, &[])).unwrap();
                        if let Ok(id) = s.request_context("dev", &name, &reg, t) {
                            s.complete_instantiation(id, t).unwrap();
                            live.push(id);
                        }
                    }
                    1 => {
                        let before: Vec<f64> = s.hosts().values().map(|h| h.allocated().cpu).collect();
                        let id = s.request_context("dev", "Ext", &reg, t).unwrap();
                        s.complete_instantiation(id, t).unwrap();
                        s.begin_termination(id, t).unwrap();
                        s.complete_termination(id, t).unwrap();
                        let after: Vec<f64> = s.hosts().values().map(|h| h.allocated().cpu).collect();
                        prop_assert_eq!(before, after);
                    }
                    _ => {
                        if let Some(id) = live.pop() {
                            s.begin_termination(id, t).unwrap();
                            s.complete_termination(id, t).unwrap();
                        }
                    }
                }
                for h in s.hosts().values() {
                    prop_assert!(h.allocated().cpu <= h.capacity.cpu);
                }
            }
            for c in s.retired() {
                let states: Vec<ContextState> = c.history.iter().map(|(st, _)| *st).collect();
                prop_assert!(states.windows(2).all(|w| w[0] < w[1]));
            }
        }
    }
}
