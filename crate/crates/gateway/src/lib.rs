//! Real-time gateway: exposes a running simulated MEC system to external
//! programs over HTTP (lifecycle, service registry, RNIS, Location Service
//! and its callbacks) and over the UDP device-app protocol.
//!
//! All network I/O runs on a tokio runtime. Every request becomes an
//! [`ExternalRequest`] sent through the engine's ingress channel, so service
//! and lifecycle logic only ever executes on the event loop. Replies are
//! released when the simulated response event fires, which makes queueing
//! and radio delays visible to external clients in wall time.

mod callbacks;
mod device;
mod http;
mod live;
pub mod loopback;

use std::collections::{BTreeMap, BTreeSet};
use std::io;
use std::net::{IpAddr, Ipv4Addr, SocketAddr};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::mpsc::Receiver;
use std::sync::Arc;
use std::time::Duration;

use serde::Serialize;
use thiserror::Error;
use tokio::net::{TcpListener, UdpSocket};
use tokio::runtime::Runtime;
use tokio::sync::{oneshot, Mutex};

use mecsim::engine::{Ingress, RealtimeStatus};
use mecsim::ids::UeId;
use mecsim::services::Endpoint;
use mecsim::world::{ApiError, Event, ExternalRequest, Outbound, Responder};

pub use live::{run_realtime, RealtimeOutcome, RealtimeRun, RunError};

#[derive(Clone, Debug)]
pub struct GatewayOptions {
    /// HTTP listen address; port 0 picks a free one.
    pub http_addr: SocketAddr,
    /// Address device and relay sockets bind to.
    pub device_ip: IpAddr,
    /// UE `n` listens on `base + n` when set, on a free port otherwise.
    pub device_base_port: Option<u16>,
    /// Requests are refused with 503 while the loop lags more than this.
    pub overload_threshold: Duration,
    /// Longest wait for a simulated reply.
    pub request_timeout: Duration,
    pub callback_retries: u32,
    pub callback_backoff: Duration,
}

impl Default for GatewayOptions {
    fn default() -> Self {
        GatewayOptions {
            http_addr: SocketAddr::from((Ipv4Addr::LOCALHOST, 0)),
            device_ip: IpAddr::V4(Ipv4Addr::LOCALHOST),
            device_base_port: None,
            overload_threshold: Duration::from_millis(500),
            request_timeout: Duration::from_secs(30),
            callback_retries: 3,
            callback_backoff: Duration::from_secs(1),
        }
    }
}

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("simulation overrun: event loop is {0:?} behind")]
    Overrun(Duration),
    #[error("simulation is not running")]
    Stopped,
    #[error("no simulated reply within {0:?}")]
    Timeout(Duration),
    #[error(transparent)]
    Api(#[from] ApiError),
}

impl GatewayError {
    pub fn status(&self) -> u16 {
        match self {
            GatewayError::Overrun(_) | GatewayError::Stopped => 503,
            GatewayError::Timeout(_) => 504,
            GatewayError::Api(e) => e.status(),
        }
    }
}

/// Counters shared by all gateway tasks.
#[derive(Debug, Default)]
pub struct GatewayStats {
    pub http_requests: AtomicU64,
    pub refused_overrun: AtomicU64,
    pub device_datagrams: AtomicU64,
    pub relayed_uplink: AtomicU64,
    pub relayed_downlink: AtomicU64,
    pub callback_attempts: AtomicU64,
    pub callbacks_delivered: AtomicU64,
    pub callbacks_failed: AtomicU64,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct StatsSnapshot {
    pub http_requests: u64,
    pub refused_overrun: u64,
    pub device_datagrams: u64,
    pub relayed_uplink: u64,
    pub relayed_downlink: u64,
    pub callback_attempts: u64,
    pub callbacks_delivered: u64,
    pub callbacks_failed: u64,
}

impl GatewayStats {
    pub fn snapshot(&self) -> StatsSnapshot {
        let g = |a: &AtomicU64| a.load(Ordering::Relaxed);
        StatsSnapshot {
            http_requests: g(&self.http_requests),
            refused_overrun: g(&self.refused_overrun),
            device_datagrams: g(&self.device_datagrams),
            relayed_uplink: g(&self.relayed_uplink),
            relayed_downlink: g(&self.relayed_downlink),
            callback_attempts: g(&self.callback_attempts),
            callbacks_delivered: g(&self.callbacks_delivered),
            callbacks_failed: g(&self.callbacks_failed),
        }
    }
}

pub(crate) fn bump(c: &AtomicU64) {
    c.fetch_add(1, Ordering::Relaxed);
}

/// Path from gateway tasks into the event loop.
#[derive(Clone)]
pub(crate) struct Bridge {
    ingress: Ingress<Event>,
    status: Arc<RealtimeStatus>,
    overload: Duration,
    timeout: Duration,
    stats: Arc<GatewayStats>,
}

impl Bridge {
    fn admit(&self) -> Result<(), GatewayError> {
        if !self.status.is_running() {
            return Err(GatewayError::Stopped);
        }
        let lag = self.status.lag();
        if lag > self.overload {
            bump(&self.stats.refused_overrun);
            return Err(GatewayError::Overrun(lag));
        }
        Ok(())
    }

    /// Sends a request that expects no reply.
    pub(crate) fn send(&self, req: ExternalRequest) -> Result<(), GatewayError> {
        self.ingress
            .send(Event::External(req))
            .map_err(|_| GatewayError::Stopped)
    }

    /// Sends a request and waits for the simulated reply.
    pub(crate) async fn call<T: Send + 'static>(
        &self,
        make: impl FnOnce(Responder<T>) -> ExternalRequest,
    ) -> Result<T, GatewayError> {
        self.admit()?;
        let (tx, rx) = oneshot::channel();
        self.send(make(Box::new(move |v| {
            let _ = tx.send(v);
        })))?;
        match tokio::time::timeout(self.timeout, rx).await {
            Ok(Ok(v)) => Ok(v),
            // the loop dropped the responder: it stopped before replying
            Ok(Err(_)) => Err(GatewayError::Stopped),
            Err(_) => Err(GatewayError::Timeout(self.timeout)),
        }
    }
}

/// Addresses a started gateway listens on.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GatewayInfo {
    pub http: SocketAddr,
    /// Device-app port of each simulated UE.
    pub devices: BTreeMap<UeId, SocketAddr>,
}

pub struct Gateway {
    runtime: Option<Runtime>,
    info: GatewayInfo,
    stats: Arc<GatewayStats>,
}

impl Gateway {
    /// Binds all sockets and starts serving. `external` lists endpoints of
    /// apps running outside the simulator; device ACKs naming them are
    /// rewritten to a relay that carries traffic over the UE's radio link.
    pub fn start(
        opts: &GatewayOptions,
        ingress: Ingress<Event>,
        status: Arc<RealtimeStatus>,
        ues: &[UeId],
        external: BTreeSet<Endpoint>,
        outbound: Receiver<Outbound>,
    ) -> io::Result<Gateway> {
        let runtime = tokio::runtime::Builder::new_multi_thread()
            .worker_threads(2)
            .thread_name("mecsim-gateway")
            .enable_all()
            .build()?;
        let stats = Arc::new(GatewayStats::default());
        let bridge = Bridge {
            ingress,
            status,
            overload: opts.overload_threshold,
            timeout: opts.request_timeout,
            stats: stats.clone(),
        };

        let (listener, sockets) = runtime.block_on(async {
            let listener = TcpListener::bind(opts.http_addr).await?;
            let mut sockets = Vec::new();
            for ue in ues {
                let port = match opts.device_base_port {
                    Some(base) => u16::try_from(base as u32 + ue.0)
                        .map_err(|_| io::Error::other(format!("no device port for {ue}")))?,
                    None => 0,
                };
                sockets.push((*ue, UdpSocket::bind((opts.device_ip, port)).await?));
            }
            Ok::<_, io::Error>((listener, sockets))
        })?;

        let http = listener.local_addr()?;
        let mut devices = BTreeMap::new();
        let relays = device::Relays::new(opts.device_ip, bridge.clone(), external);
        for (ue, sock) in sockets {
            devices.insert(ue, sock.local_addr()?);
            runtime.spawn(device::serve(Arc::new(sock), Some(ue), bridge.clone(), relays.clone()));
        }
        runtime.spawn(http::serve(listener, bridge.clone()));
        callbacks::forward(
            runtime.handle().clone(),
            outbound,
            bridge,
            callbacks::Policy {
                retries: opts.callback_retries,
                backoff: opts.callback_backoff,
            },
        );
        log::info!("gateway listening on http://{http}, {} device ports", devices.len());
        Ok(Gateway {
            runtime: Some(runtime),
            info: GatewayInfo { http, devices },
            stats,
        })
    }

    pub fn info(&self) -> &GatewayInfo {
        &self.info
    }

    pub fn stats(&self) -> StatsSnapshot {
        self.stats.snapshot()
    }

    /// Stops serving; pending replies are abandoned.
    pub fn shutdown(mut self) -> StatsSnapshot {
        if let Some(rt) = self.runtime.take() {
            rt.shutdown_timeout(Duration::from_millis(200));
        }
        self.stats.snapshot()
    }
}

impl Drop for Gateway {
    fn drop(&mut self) {
        if let Some(rt) = self.runtime.take() {
            rt.shutdown_background();
        }
    }
}

pub(crate) type RelayTable = Arc<Mutex<BTreeMap<(UeId, Endpoint), SocketAddr>>>;
