use std::collections::{BTreeMap, VecDeque};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::RanError;
use crate::engine::SimTime;
use crate::ids::UeId;

/// Layer-2 measures for one UE or one cell over one collection period.
/// Delays are in milliseconds and absent when no packet was measured.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct L2Sample {
    pub timestamp: SimTime,
    /// `None` for a cell aggregate.
    pub ue: Option<UeId>,
    pub dl_delay: Option<f64>,
    pub ul_delay: Option<f64>,
    /// bit/s
    pub dl_throughput: f64,
    pub ul_throughput: f64,
    pub active_ue_dl: u32,
    pub active_ue_ul: u32,
    /// bytes
    pub data_volume_dl: u64,
    pub data_volume_ul: u64,
}

impl L2Sample {
    pub fn is_valid(&self) -> bool {
        let nonneg = |v: Option<f64>| v.is_none_or(|d| d.is_finite() && d >= 0.0);
        nonneg(self.dl_delay)
            && nonneg(self.ul_delay)
            && self.dl_throughput.is_finite()
            && self.dl_throughput >= 0.0
            && self.ul_throughput.is_finite()
            && self.ul_throughput >= 0.0
    }

    pub fn get(&self, m: Measure) -> Option<f64> {
        match m {
            Measure::DlDelay => self.dl_delay,
            Measure::UlDelay => self.ul_delay,
            Measure::DlThroughput => Some(self.dl_throughput),
            Measure::UlThroughput => Some(self.ul_throughput),
            Measure::ActiveUeDl => Some(self.active_ue_dl as f64),
            Measure::ActiveUeUl => Some(self.active_ue_ul as f64),
            Measure::DataVolumeDl => Some(self.data_volume_dl as f64),
            Measure::DataVolumeUl => Some(self.data_volume_ul as f64),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Measure {
    DlDelay,
    UlDelay,
    DlThroughput,
    UlThroughput,
    ActiveUeDl,
    ActiveUeUl,
    DataVolumeDl,
    DataVolumeUl,
}

impl Measure {
    pub const ALL: [Measure; 8] = [
        Measure::DlDelay,
        Measure::UlDelay,
        Measure::DlThroughput,
        Measure::UlThroughput,
        Measure::ActiveUeDl,
        Measure::ActiveUeUl,
        Measure::DataVolumeDl,
        Measure::DataVolumeUl,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Measure::DlDelay => "dl_delay",
            Measure::UlDelay => "ul_delay",
            Measure::DlThroughput => "dl_throughput",
            Measure::UlThroughput => "ul_throughput",
            Measure::ActiveUeDl => "active_ue_dl",
            Measure::ActiveUeUl => "active_ue_ul",
            Measure::DataVolumeDl => "data_volume_dl",
            Measure::DataVolumeUl => "data_volume_ul",
        }
    }
}

impl fmt::Display for Measure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Measure {
    type Err = RanError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Measure::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| RanError::UnknownMeasure(s.to_owned()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Aggregator {
    Average,
    /// Mean over samples taken in the last `window` seconds.
    MovingAverage { window: f64 },
    LastSample,
}

impl Aggregator {
    pub fn moving_average(window: f64) -> Result<Self, RanError> {
        let a = Aggregator::MovingAverage { window };
        a.validate()?;
        Ok(a)
    }

    pub fn validate(&self) -> Result<(), RanError> {
        match self {
            Aggregator::MovingAverage { window } if !(*window > 0.0 && window.is_finite()) => {
                Err(RanError::InvalidWindow(*window))
            }
            _ => Ok(()),
        }
    }

    /// Applies the aggregator to samples in time order. `now` anchors the
    /// moving-average window, which is closed on the left.
    pub fn apply<'a, I>(&self, samples: I, measure: Measure, now: SimTime) -> Option<f64>
    where
        I: DoubleEndedIterator<Item = &'a L2Sample>,
    {
        match *self {
            Aggregator::LastSample => samples.rev().find_map(|s| s.get(measure)),
            Aggregator::Average => mean(samples.filter_map(|s| s.get(measure))),
            Aggregator::MovingAverage { window } => {
                let from = now.saturating_sub(SimTime::from_secs_f64(window));
                mean(
                    samples
                        .filter(|s| s.timestamp >= from && s.timestamp <= now)
                        .filter_map(|s| s.get(measure)),
                )
            }
        }
    }
}

fn mean(it: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = it.fold((0.0, 0u64), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

#[derive(Clone, Debug)]
pub struct Ring<T> {
    buf: VecDeque<T>,
    capacity: usize,
}

impl<T> Ring<T> {
    pub fn new(capacity: usize) -> Self {
        Ring {
            buf: VecDeque::with_capacity(capacity.min(4096)),
            capacity: capacity.max(1),
        }
    }

    pub fn push(&mut self, v: T) {
        if self.buf.len() == self.capacity {
            self.buf.pop_front();
        }
        self.buf.push_back(v);
    }

    pub fn len(&self) -> usize {
        self.buf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buf.is_empty()
    }

    pub fn iter(&self) -> std::collections::vec_deque::Iter<'_, T> {
        self.buf.iter()
    }
}

/// Cell aggregate samples plus per-UE samples recorded at one cell.
#[derive(Clone, Debug)]
pub struct L2History {
    capacity: usize,
    pub cell: Ring<L2Sample>,
    pub ues: BTreeMap<UeId, Ring<L2Sample>>,
}

impl L2History {
    pub fn new(capacity: usize) -> Self {
        L2History {
            capacity,
            cell: Ring::new(capacity),
            ues: BTreeMap::new(),
        }
    }

    pub fn record(&mut self, sample: L2Sample) {
        match sample.ue {
            None => self.cell.push(sample),
            Some(ue) => {
                let cap = self.capacity;
                self.ues
                    .entry(ue)
                    .or_insert_with(|| Ring::new(cap))
                    .push(sample)
            }
        }
    }
}

/// Traffic counters accumulated for one UE between two collections.
#[derive(Clone, Debug, Default)]
pub(crate) struct TrafficAccumulator {
    pub dl_delay_sum: f64,
    pub dl_packets: u64,
    pub ul_delay_sum: f64,
    pub ul_packets: u64,
    pub dl_bytes: u64,
    pub ul_bytes: u64,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn samples(values: &[f64]) -> Vec<L2Sample> {
        values
            .iter()
            .enumerate()
            .map(|(i, v)| L2Sample {
                timestamp: SimTime::from_secs_f64(i as f64 + 1.0),
                dl_delay: Some(*v),
                ..Default::default()
            })
            .collect()
    }

    #[test]
    fn aggregators_on_two_four_six() {
        let s = samples(&[2.0, 4.0, 6.0]);
        let now = SimTime::from_secs_f64(3.0);
        assert_eq!(Aggregator::Average.apply(s.iter(), Measure::DlDelay, now), Some(4.0));
        assert_eq!(
            Aggregator::LastSample.apply(s.iter(), Measure::DlDelay, now),
            Some(6.0)
        );
        let ma = Aggregator::moving_average(1.0).unwrap();
        assert_eq!(ma.apply(s.iter(), Measure::DlDelay, now), Some(5.0));
    }

    #[test]
    fn zero_window_is_rejected() {
        assert!(matches!(
            Aggregator::moving_average(0.0),
            Err(RanError::InvalidWindow(_))
        ));
    }

    #[test]
    fn ring_evicts_oldest() {
        let mut r = Ring::new(3);
        for i in 0..4 {
            r.push(i);
        }
        assert_eq!(r.iter().copied().collect::<Vec<_>>(), vec![1, 2, 3]);
    }

    #[test]
    fn measure_names_round_trip() {
        for m in Measure::ALL {
            assert_eq!(m.name().parse::<Measure>().unwrap(), m);
        }
        assert!("jitter".parse::<Measure>().is_err());
    }
}
