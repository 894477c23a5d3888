//! UDP device-app ports and the per-(UE, external app) relays.

use std::collections::BTreeSet;
use std::net::{IpAddr, SocketAddr};
use std::sync::Arc;

use tokio::net::UdpSocket;
use tokio::sync::mpsc;

use mecsim::ids::UeId;
use mecsim::lifecycle::DeviceReply;
use mecsim::ran::Direction;
use mecsim::services::Endpoint;
use mecsim::world::{device_name, ExternalRequest};

use crate::{bump, Bridge, GatewayError, RelayTable};

/// Per-datagram IP and UDP header bytes, charged to the radio link.
const HEADER_BYTES: u64 = 28;
const MAX_DATAGRAM: usize = 65_507;

#[derive(Clone)]
pub(crate) struct Relays {
    ip: IpAddr,
    bridge: Bridge,
    external: Arc<BTreeSet<Endpoint>>,
    table: RelayTable,
}

impl Relays {
    pub(crate) fn new(ip: IpAddr, bridge: Bridge, external: BTreeSet<Endpoint>) -> Self {
        Relays {
            ip,
            bridge,
            external: Arc::new(external),
            table: RelayTable::default(),
        }
    }

    /// Relay address for traffic between `ue` and the external app at
    /// `app`, opened on first use.
    async fn relay_for(&self, ue: UeId, app: Endpoint) -> std::io::Result<SocketAddr> {
        let mut table = self.table.lock().await;
        if let Some(a) = table.get(&(ue, app)) {
            return Ok(*a);
        }
        let addr = open_relay(self.ip, ue, app, self.bridge.clone()).await?;
        table.insert((ue, app), addr);
        Ok(addr)
    }

    /// Replaces an external app's endpoint in an ACK with the UE's relay.
    async fn rewrite(&self, ue: Option<UeId>, reply: String) -> String {
        let (Some(ue), Ok(DeviceReply::Ack(Some(ep)))) = (ue, reply.parse::<DeviceReply>()) else {
            return reply;
        };
        if !self.external.contains(&ep) {
            return reply;
        }
        match self.relay_for(ue, ep).await {
            Ok(SocketAddr::V4(a)) => DeviceReply::Ack(Some(Endpoint::new(*a.ip(), a.port()))).to_string(),
            Ok(SocketAddr::V6(_)) => DeviceReply::nack("relay-unavailable").to_string(),
            Err(e) => {
                log::warn!("cannot open relay for {ue} to {ep}: {e}");
                DeviceReply::nack("relay-unavailable").to_string()
            }
        }
    }
}

/// Serves one device-app port. When `ue` is set, datagrams and replies
/// cross that UE's simulated radio link.
pub(crate) async fn serve(sock: Arc<UdpSocket>, ue: Option<UeId>, bridge: Bridge, relays: Relays) {
    let mut buf = vec![0u8; MAX_DATAGRAM];
    loop {
        let (n, src) = match sock.recv_from(&mut buf).await {
            Ok(x) => x,
            Err(e) => {
                log::warn!("device port receive failed: {e}");
                continue;
            }
        };
        bump(&bridge.stats.device_datagrams);
        let datagram = buf[..n].to_vec();
        let (sock, bridge, relays) = (sock.clone(), bridge.clone(), relays.clone());
        tokio::spawn(async move {
            let device = match ue {
                Some(u) => device_name(u),
                None => format!("udp/{src}"),
            };
            let reply = match bridge
                .call(|reply| ExternalRequest::Device {
                    device,
                    ue,
                    datagram,
                    reply,
                })
                .await
            {
                Ok(r) => relays.rewrite(ue, r).await,
                Err(GatewayError::Overrun(_)) => DeviceReply::nack("overrun").to_string(),
                Err(e) => DeviceReply::nack(format!("unavailable {e}")).to_string(),
            };
            if let Err(e) = sock.send_to(reply.as_bytes(), src).await {
                log::warn!("device reply to {src} failed: {e}");
            }
        });
    }
}

/// Opens a relay socket. Datagrams from the app's address travel downlink
/// to the last UE-side peer; anything else travels uplink to the app.
async fn open_relay(ip: IpAddr, ue: UeId, app: Endpoint, bridge: Bridge) -> std::io::Result<SocketAddr> {
    let sock = Arc::new(UdpSocket::bind((ip, 0)).await?);
    let addr = sock.local_addr()?;
    let app_addr = SocketAddr::from((app.addr, app.port));
    let (tx, mut rx) = mpsc::unbounded_channel::<(SocketAddr, Vec<u8>)>();

    let out = sock.clone();
    tokio::spawn(async move {
        while let Some((to, data)) = rx.recv().await {
            if let Err(e) = out.send_to(&data, to).await {
                log::warn!("relay send to {to} failed: {e}");
            }
        }
    });

    tokio::spawn(async move {
        let mut buf = vec![0u8; MAX_DATAGRAM];
        let mut ue_peer: Option<SocketAddr> = None;
        loop {
            let (n, src) = match sock.recv_from(&mut buf).await {
                Ok(x) => x,
                Err(e) => {
                    log::warn!("relay receive failed: {e}");
                    continue;
                }
            };
            let (dir, to) = if src == app_addr {
                let Some(peer) = ue_peer else {
                    log::debug!("relay {addr}: no UE peer yet, dropping datagram from the app");
                    continue;
                };
                bump(&bridge.stats.relayed_downlink);
                (Direction::Downlink, peer)
            } else {
                ue_peer = Some(src);
                bump(&bridge.stats.relayed_uplink);
                (Direction::Uplink, app_addr)
            };
            let data = buf[..n].to_vec();
            let tx = tx.clone();
            let sent = bridge.send(ExternalRequest::Transit {
                ue,
                dir,
                size: n as u64 + HEADER_BYTES,
                deliver: Box::new(move || {
                    let _ = tx.send((to, data));
                }),
            });
            if sent.is_err() {
                return;
            }
        }
    });
    log::info!("relay {addr} carries {ue} <-> {app}");
    Ok(addr)
}
