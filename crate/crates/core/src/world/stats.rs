use std::collections::BTreeMap;

use serde::Serialize;

use crate::engine::SimTime;
use crate::ids::{ContextId, HostId, UeId};

#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct Labels {
    pub app: Option<String>,
    pub host: Option<HostId>,
    pub service: Option<String>,
    pub ue: Option<UeId>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StatRecord {
    pub time: SimTime,
    pub value: f64,
    pub labels: Labels,
}

/// Named streams of timestamped values, each kept in recording order.
#[derive(Clone, Debug, Default)]
pub struct Stats {
    streams: BTreeMap<String, Vec<StatRecord>>,
}

impl Stats {
    pub fn record(&mut self, stream: &str, time: SimTime, value: f64, labels: Labels) {
        let rec = StatRecord { time, value, labels };
        match self.streams.get_mut(stream) {
            Some(v) => v.push(rec),
            None => {
                self.streams.insert(stream.to_string(), vec![rec]);
            }
        }
    }

    pub fn streams(&self) -> impl Iterator<Item = (&str, &[StatRecord])> {
        self.streams.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }

    pub fn stream(&self, name: &str) -> &[StatRecord] {
        self.streams.get(name).map_or(&[], |v| v.as_slice())
    }

    pub fn values(&self, name: &str) -> Vec<f64> {
        self.stream(name).iter().map(|r| r.value).collect()
    }

    pub fn len(&self) -> usize {
        self.streams.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// One named step of an app-level exchange.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct TimelineEntry {
    pub time: SimTime,
    pub step: String,
    pub ue: Option<UeId>,
    pub context: Option<ContextId>,
}
