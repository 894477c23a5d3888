//! HTTP delivery of Location Service notifications to subscriber URLs.

use std::sync::mpsc::Receiver;
use std::time::Duration;

use tokio::runtime::Handle;

use mecsim::services::{AreaNotification, Endpoint};
use mecsim::world::{ExternalRequest, Outbound};

use crate::{bump, Bridge};

#[derive(Clone, Copy, Debug)]
pub(crate) struct Policy {
    /// Attempts after the first one.
    pub retries: u32,
    pub backoff: Duration,
}

/// Moves outbound traffic from the event loop onto the runtime. The thread
/// ends when the model drops its sender.
pub(crate) fn forward(rt: Handle, outbound: Receiver<Outbound>, bridge: Bridge, policy: Policy) {
    let client = reqwest::Client::builder()
        .timeout(Duration::from_secs(5))
        .build()
        .expect("HTTP client builds");
    std::thread::Builder::new()
        .name("mecsim-callbacks".into())
        .spawn(move || {
            while let Ok(msg) = outbound.recv() {
                match msg {
                    Outbound::Callback {
                        url,
                        service,
                        notification,
                    } => {
                        rt.spawn(deliver(client.clone(), url, service, notification, bridge.clone(), policy));
                    }
                }
            }
        })
        .expect("callback thread starts");
}

async fn deliver(
    client: reqwest::Client,
    url: String,
    service: Endpoint,
    n: AreaNotification,
    bridge: Bridge,
    policy: Policy,
) {
    for attempt in 0..=policy.retries {
        if attempt > 0 {
            tokio::time::sleep(policy.backoff).await;
        }
        bump(&bridge.stats.callback_attempts);
        match client.post(&url).json(&n).send().await {
            Ok(r) if r.status().is_success() => {
                bump(&bridge.stats.callbacks_delivered);
                return;
            }
            Ok(r) => log::warn!("callback {url} for {}: HTTP {}", n.subscription_id, r.status()),
            Err(e) => log::warn!("callback {url} for {}: {e}", n.subscription_id),
        }
    }
    bump(&bridge.stats.callbacks_failed);
    log::warn!(
        "giving up on {url} after {} attempts; disabling {}",
        policy.retries + 1,
        n.subscription_id
    );
    let _ = bridge.send(ExternalRequest::CallbackFailed {
        service,
        subscription: n.subscription_id,
    });
}
