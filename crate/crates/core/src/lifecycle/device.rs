//! Text protocol between device apps and the lifecycle proxy. One ASCII
//! message per datagram: `START <app>` or `STOP <app>`, answered by
//! `ACK [<ip>:<port>]` or `NACK <reason>`.

use std::fmt;
use std::str::FromStr;

use crate::services::Endpoint;

pub const UNKNOWN_COMMAND: &str = "unknown-command";

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum DeviceCommand {
    Start(String),
    Stop(String),
}

impl DeviceCommand {
    pub fn app_name(&self) -> &str {
        match self {
            DeviceCommand::Start(n) | DeviceCommand::Stop(n) => n,
        }
    }
}

impl fmt::Display for DeviceCommand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DeviceCommand::Start(n) => write!(f, "START {n}"),
            DeviceCommand::Stop(n) => write!(f, "STOP {n}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum DeviceReply {
    Ack(Option<Endpoint>),
    Nack(String),
}

impl DeviceReply {
    pub fn nack(reason: impl fmt::Display) -> Self {
        // reasons travel as one token
        let r: String = reason
            .to_string()
            .chars()
            .map(|c| if c.is_ascii_graphic() { c } else { '-' })
            .collect();
        DeviceReply::Nack(r)
    }

    pub fn is_ack(&self) -> bool {
        matches!(self, DeviceReply::Ack(_))
    }
}

impl fmt::Display for DeviceReply {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DeviceReply::Ack(None) => f.write_str("ACK"),
            DeviceReply::Ack(Some(e)) => write!(f, "ACK {e}"),
            DeviceReply::Nack(r) => write!(f, "NACK {r}"),
        }
    }
}

impl FromStr for DeviceReply {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim_end_matches(['\r', '\n']);
        match s.split_once(' ') {
            None if s == "ACK" => Ok(DeviceReply::Ack(None)),
            Some(("ACK", e)) => Ok(DeviceReply::Ack(Some(e.parse()?))),
            Some(("NACK", r)) => Ok(DeviceReply::Nack(r.to_string())),
            _ => Err(format!("not a device reply: '{s}'")),
        }
    }
}

/// Parses one datagram. Anything that is not exactly a known verb followed
/// by one app name is refused with `NACK unknown-command`.
pub fn parse_device_command(datagram: &[u8]) -> Result<DeviceCommand, DeviceReply> {
    let refuse = || DeviceReply::Nack(UNKNOWN_COMMAND.to_string());
    let text = std::str::from_utf8(datagram).map_err(|_| refuse())?;
    let text = text.trim_end_matches(['\r', '\n']);
    if !text.is_ascii() {
        return Err(refuse());
    }
    let mut parts = text.split(' ');
    let (Some(verb), Some(name), None) = (parts.next(), parts.next(), parts.next()) else {
        return Err(refuse());
    };
    if name.is_empty() || !name.chars().all(|c| c.is_ascii_graphic()) {
        return Err(refuse());
    }
    match verb {
        "START" => Ok(DeviceCommand::Start(name.to_string())),
        "STOP" => Ok(DeviceCommand::Stop(name.to_string())),
        _ => Err(refuse()),
    }
}
