//! Abstract radio access network.
//!
//! UEs move according to simple mobility models and attach to the nearest
//! cell (lowest cell id on ties). App traffic crossing the RAN gets a delay
//! drawn from the UE's transport profile, and those outcomes feed the per-cell
//! Layer-2 history that the RNIS reads.

mod l2;
mod mobility;
mod transport;

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use thiserror::Error;

pub use l2::{Aggregator, L2History, L2Sample, Measure, Ring};
pub use mobility::{load_mobility_trace, parse_mobility_trace, Mobility, Position};
pub use transport::{DelayDist, Direction, Transport, TransportProfile};

use crate::engine::SimTime;
use crate::ids::{CellId, UeId};
use l2::TrafficAccumulator;

pub const DEFAULT_L2_CAPACITY: usize = 1024;
pub const DEFAULT_MOBILITY_PERIOD: f64 = 0.1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RanError {
    #[error("no cells configured")]
    NoCells,
    #[error("unknown {0}")]
    UnknownUe(UeId),
    #[error("unknown {0}")]
    UnknownCell(CellId),
    #[error("duplicate {0}")]
    DuplicateUe(UeId),
    #[error("duplicate {0}")]
    DuplicateCell(CellId),
    #[error("{0} is not associated to any cell")]
    UeNotAssociated(UeId),
    #[error("{ue} is not attached to {cell}")]
    UeNotInCell { ue: UeId, cell: CellId },
    #[error("no samples available")]
    EmptyHistory,
    #[error("invalid moving-average window {0}")]
    InvalidWindow(f64),
    #[error("unknown measure '{0}'")]
    UnknownMeasure(String),
    #[error("invalid transport profile: {0}")]
    InvalidProfile(String),
    #[error("position must be finite")]
    NonFinitePosition,
    #[error("mobility step must be positive, got {0}")]
    InvalidStep(f64),
    #[error("invalid L2 sample")]
    InvalidSample,
    #[error("trace line {line}: {reason}")]
    TraceParse { line: usize, reason: String },
}

#[derive(Clone, Debug)]
pub struct UeState {
    pub id: UeId,
    pub name: String,
    pub position: Position,
    pub mobility: Mobility,
    pub serving_cell: Option<CellId>,
    pub profile: TransportProfile,
    elapsed: f64,
}

impl UeState {
    pub fn new(id: UeId, position: Position, mobility: Mobility) -> Self {
        UeState {
            id,
            name: id.to_string(),
            position,
            mobility,
            serving_cell: None,
            profile: TransportProfile::default(),
            elapsed: 0.0,
        }
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn with_profile(mut self, profile: TransportProfile) -> Self {
        self.profile = profile;
        self
    }
}

#[derive(Clone, Debug)]
pub struct CellState {
    pub id: CellId,
    pub position: Position,
    pub attached: BTreeSet<UeId>,
    pub history: L2History,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct HandoverEvent {
    pub ue: UeId,
    pub from: CellId,
    pub to: CellId,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Association {
    pub cell: CellId,
    /// Set when the serving cell changed from one cell to another.
    pub handover: Option<HandoverEvent>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum L2Scope {
    Cell(CellId),
    Ue { cell: CellId, ue: UeId },
}

#[derive(Clone, Debug)]
pub struct Ran {
    cells: BTreeMap<CellId, CellState>,
    ues: BTreeMap<UeId, UeState>,
    l2_capacity: usize,
    traffic: BTreeMap<UeId, TrafficAccumulator>,
    handovers: u64,
}

impl Default for Ran {
    fn default() -> Self {
        Ran::new(DEFAULT_L2_CAPACITY)
    }
}

impl Ran {
    pub fn new(l2_capacity: usize) -> Self {
        Ran {
            cells: BTreeMap::new(),
            ues: BTreeMap::new(),
            l2_capacity,
            traffic: BTreeMap::new(),
            handovers: 0,
        }
    }

    pub fn add_cell(&mut self, id: CellId, position: Position) -> Result<(), RanError> {
        if !position.is_finite() {
            return Err(RanError::NonFinitePosition);
        }
        if self.cells.contains_key(&id) {
            return Err(RanError::DuplicateCell(id));
        }
        self.cells.insert(
            id,
            CellState {
                id,
                position,
                attached: BTreeSet::new(),
                history: L2History::new(self.l2_capacity),
            },
        );
        Ok(())
    }

    /// Adds a UE and attaches it to its nearest cell if any cell exists.
    pub fn add_ue(&mut self, mut ue: UeState) -> Result<(), RanError> {
        if !ue.position.is_finite() {
            return Err(RanError::NonFinitePosition);
        }
        if self.ues.contains_key(&ue.id) {
            return Err(RanError::DuplicateUe(ue.id));
        }
        ue.profile.validate()?;
        ue.serving_cell = None;
        let id = ue.id;
        self.ues.insert(id, ue);
        if !self.cells.is_empty() {
            self.associate(id)?;
        }
        Ok(())
    }

    pub fn cells(&self) -> impl Iterator<Item = &CellState> {
        self.cells.values()
    }

    pub fn ues(&self) -> impl Iterator<Item = &UeState> {
        self.ues.values()
    }

    pub fn cell(&self, id: CellId) -> Result<&CellState, RanError> {
        self.cells.get(&id).ok_or(RanError::UnknownCell(id))
    }

    pub fn ue(&self, id: UeId) -> Result<&UeState, RanError> {
        self.ues.get(&id).ok_or(RanError::UnknownUe(id))
    }

    pub fn ue_count(&self) -> usize {
        self.ues.len()
    }

    pub fn position(&self, id: UeId) -> Result<Position, RanError> {
        self.ue(id).map(|u| u.position)
    }

    /// Moves a UE directly. Association is not touched.
    pub fn set_position(&mut self, id: UeId, pos: Position) -> Result<(), RanError> {
        if !pos.is_finite() {
            return Err(RanError::NonFinitePosition);
        }
        self.ues
            .get_mut(&id)
            .ok_or(RanError::UnknownUe(id))?
            .position = pos;
        Ok(())
    }

    pub fn handover_count(&self) -> u64 {
        self.handovers
    }

    /// Advances every UE by `dt` seconds and returns the new positions in
    /// ascending UE order. Association is not touched; see
    /// [`Ran::associate_all`].
    pub fn advance_mobility(&mut self, dt: f64) -> Result<Vec<(UeId, Position)>, RanError> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(RanError::InvalidStep(dt));
        }
        let mut out = Vec::with_capacity(self.ues.len());
        for ue in self.ues.values_mut() {
            ue.elapsed += dt;
            ue.mobility.step(&mut ue.position, dt, ue.elapsed);
            out.push((ue.id, ue.position));
        }
        Ok(out)
    }

    /// Nearest cell by Euclidean distance, lowest id on ties.
    pub fn nearest_cell(&self, pos: &Position) -> Option<CellId> {
        let mut best: Option<(f64, CellId)> = None;
        for c in self.cells.values() {
            let d = c.position.distance(pos);
            // strict < keeps the earlier (lower) id on ties
            if best.is_none_or(|(bd, _)| d < bd) {
                best = Some((d, c.id));
            }
        }
        best.map(|b| b.1)
    }

    pub fn associate(&mut self, ue_id: UeId) -> Result<Association, RanError> {
        let ue = self.ues.get(&ue_id).ok_or(RanError::UnknownUe(ue_id))?;
        let target = self.nearest_cell(&ue.position).ok_or(RanError::NoCells)?;
        let previous = ue.serving_cell;
        if previous == Some(target) {
            return Ok(Association {
                cell: target,
                handover: None,
            });
        }
        if let Some(old) = previous {
            if let Some(c) = self.cells.get_mut(&old) {
                c.attached.remove(&ue_id);
            }
        }
        self.cells
            .get_mut(&target)
            .expect("nearest cell exists")
            .attached
            .insert(ue_id);
        self.ues.get_mut(&ue_id).expect("checked above").serving_cell = Some(target);
        let handover = previous.map(|from| {
            self.handovers += 1;
            HandoverEvent {
                ue: ue_id,
                from,
                to: target,
            }
        });
        Ok(Association {
            cell: target,
            handover,
        })
    }

    /// Re-associates every UE, returning handovers in ascending UE order.
    pub fn associate_all(&mut self) -> Result<Vec<HandoverEvent>, RanError> {
        if self.cells.is_empty() {
            return if self.ues.is_empty() {
                Ok(Vec::new())
            } else {
                Err(RanError::NoCells)
            };
        }
        let ids: Vec<UeId> = self.ues.keys().copied().collect();
        let mut out = Vec::new();
        for id in ids {
            if let Some(h) = self.associate(id)?.handover {
                out.push(h);
            }
        }
        Ok(out)
    }

    /// Samples the one-way RAN delay for a message of `bytes` to or from
    /// `ue`, and books it for the next Layer-2 collection.
    pub fn transport_delay<R: Rng + ?Sized>(
        &mut self,
        ue_id: UeId,
        dir: Direction,
        bytes: u64,
        rng: &mut R,
    ) -> Result<Transport, RanError> {
        let ue = self.ues.get(&ue_id).ok_or(RanError::UnknownUe(ue_id))?;
        if ue.serving_cell.is_none() {
            return Err(RanError::UeNotAssociated(ue_id));
        }
        let p = &ue.profile;
        if p.loss > 0.0 && rng.random::<f64>() < p.loss {
            return Ok(Transport::Lost);
        }
        let delay = match dir {
            Direction::Downlink => p.dl.sample(rng),
            Direction::Uplink => p.ul.sample(rng),
        };
        let acc = self.traffic.entry(ue_id).or_default();
        match dir {
            Direction::Downlink => {
                acc.dl_delay_sum += delay;
                acc.dl_packets += 1;
                acc.dl_bytes += bytes;
            }
            Direction::Uplink => {
                acc.ul_delay_sum += delay;
                acc.ul_packets += 1;
                acc.ul_bytes += bytes;
            }
        }
        Ok(Transport::Delivered(delay))
    }

    pub fn record_l2(&mut self, cell: CellId, sample: L2Sample) -> Result<(), RanError> {
        if !sample.is_valid() {
            return Err(RanError::InvalidSample);
        }
        self.cells
            .get_mut(&cell)
            .ok_or(RanError::UnknownCell(cell))?
            .history
            .record(sample);
        Ok(())
    }

    pub fn query_l2(
        &self,
        scope: L2Scope,
        measure: Measure,
        agg: Aggregator,
        now: SimTime,
    ) -> Result<f64, RanError> {
        agg.validate()?;
        let (cell_id, ue) = match scope {
            L2Scope::Cell(c) => (c, None),
            L2Scope::Ue { cell, ue } => (cell, Some(ue)),
        };
        let cell = self.cell(cell_id)?;
        let value = match ue {
            None => agg.apply(cell.history.cell.iter(), measure, now),
            Some(ue) => {
                if !self.ues.contains_key(&ue) {
                    return Err(RanError::UnknownUe(ue));
                }
                match cell.history.ues.get(&ue) {
                    Some(ring) => agg.apply(ring.iter(), measure, now),
                    None if cell.attached.contains(&ue) => None,
                    None => return Err(RanError::UeNotInCell { ue, cell: cell_id }),
                }
            }
        };
        value.ok_or(RanError::EmptyHistory)
    }

    /// Turns the traffic booked since the last call into one sample per
    /// active UE and one aggregate per cell, stamped `now`. `period` is the
    /// collection interval in seconds, used for throughput.
    pub fn collect_l2(&mut self, now: SimTime, period: f64) {
        let period = period.max(f64::MIN_POSITIVE);
        let mut traffic = std::mem::take(&mut self.traffic);
        for cell in self.cells.values_mut() {
            let mut agg = L2Sample {
                timestamp: now,
                ..Default::default()
            };
            let (mut dl_sum, mut dl_n, mut ul_sum, mut ul_n) = (0.0, 0u64, 0.0, 0u64);
            for ue in &cell.attached {
                let Some(acc) = traffic.remove(ue) else {
                    continue;
                };
                let ue_sample = L2Sample {
                    timestamp: now,
                    ue: Some(*ue),
                    dl_delay: (acc.dl_packets > 0)
                        .then(|| acc.dl_delay_sum / acc.dl_packets as f64 * 1e3),
                    ul_delay: (acc.ul_packets > 0)
                        .then(|| acc.ul_delay_sum / acc.ul_packets as f64 * 1e3),
                    dl_throughput: acc.dl_bytes as f64 * 8.0 / period,
                    ul_throughput: acc.ul_bytes as f64 * 8.0 / period,
                    active_ue_dl: u32::from(acc.dl_packets > 0),
                    active_ue_ul: u32::from(acc.ul_packets > 0),
                    data_volume_dl: acc.dl_bytes,
                    data_volume_ul: acc.ul_bytes,
                };
                agg.dl_throughput += ue_sample.dl_throughput;
                agg.ul_throughput += ue_sample.ul_throughput;
                agg.active_ue_dl += ue_sample.active_ue_dl;
                agg.active_ue_ul += ue_sample.active_ue_ul;
                agg.data_volume_dl += acc.dl_bytes;
                agg.data_volume_ul += acc.ul_bytes;
                dl_sum += acc.dl_delay_sum;
                dl_n += acc.dl_packets;
                ul_sum += acc.ul_delay_sum;
                ul_n += acc.ul_packets;
                cell.history.record(ue_sample);
            }
            agg.dl_delay = (dl_n > 0).then(|| dl_sum / dl_n as f64 * 1e3);
            agg.ul_delay = (ul_n > 0).then(|| ul_sum / ul_n as f64 * 1e3);
            cell.history.record(agg);
        }
        // traffic of UEs that detached mid-period is dropped
    }

    #[cfg(test)]
    pub(crate) fn check_partition(&self) -> bool {
        let mut seen = BTreeSet::new();
        for c in self.cells.values() {
            for ue in &c.attached {
                if !seen.insert(*ue) || self.ues[ue].serving_cell != Some(c.id) {
                    return false;
                }
            }
        }
        let associated = self.ues.values().filter(|u| u.serving_cell.is_some()).count();
        seen.len() == associated
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStreams;
    use proptest::prelude::*;

    fn two_cells() -> Ran {
        let mut ran = Ran::default();
        ran.add_cell(CellId(1), Position::ORIGIN).unwrap();
        ran.add_cell(CellId(2), Position::new(100.0, 0.0, 0.0)).unwrap();
        ran
    }

    #[test]
    fn nearest_cell_wins() {
        let mut ran = two_cells();
        ran.add_ue(UeState::new(UeId(1), Position::new(10.0, 0.0, 0.0), Mobility::Static))
            .unwrap();
        assert_eq!(ran.ue(UeId(1)).unwrap().serving_cell, Some(CellId(1)));
    }

    #[test]
    fn equidistant_goes_to_lowest_id() {
        let mut ran = Ran::default();
        ran.add_cell(CellId(7), Position::new(100.0, 0.0, 0.0)).unwrap();
        ran.add_cell(CellId(3), Position::ORIGIN).unwrap();
        ran.add_ue(UeState::new(UeId(1), Position::new(50.0, 0.0, 0.0), Mobility::Static))
            .unwrap();
        assert_eq!(ran.ue(UeId(1)).unwrap().serving_cell, Some(CellId(3)));
    }

    #[test]
    fn association_needs_a_cell() {
        let mut ran = Ran::default();
        ran.add_ue(UeState::new(UeId(1), Position::ORIGIN, Mobility::Static))
            .unwrap();
        assert_eq!(ran.associate(UeId(1)), Err(RanError::NoCells));
    }

    #[test]
    fn crossing_midpoint_hands_over_once() {
        let mut ran = two_cells();
        let v = Position::new(7.0, 0.0, 0.0);
        ran.add_ue(UeState::new(UeId(1), Position::ORIGIN, Mobility::Linear { velocity: v }))
            .unwrap();
        let mut handovers = Vec::new();
        for _ in 0..12 {
            ran.advance_mobility(1.0).unwrap();
            handovers.extend(ran.associate_all().unwrap());
        }
        // x goes 7, 14, ..., 84; the midpoint x=50 is crossed between 49 and 56
        assert_eq!(
            handovers,
            vec![HandoverEvent {
                ue: UeId(1),
                from: CellId(1),
                to: CellId(2)
            }]
        );
        assert_eq!(ran.cell(CellId(2)).unwrap().attached.len(), 1);
        assert!(ran.cell(CellId(1)).unwrap().attached.is_empty());
    }

    #[test]
    fn constant_profile_and_total_loss() {
        let mut ran = two_cells();
        ran.add_ue(
            UeState::new(UeId(1), Position::ORIGIN, Mobility::Static)
                .with_profile(TransportProfile::constant(0.010)),
        )
        .unwrap();
        let mut lossy = TransportProfile::constant(0.010);
        lossy.loss = 1.0;
        ran.add_ue(UeState::new(UeId(2), Position::ORIGIN, Mobility::Static).with_profile(lossy))
            .unwrap();
        let mut rng = RngStreams::new(1).stream("ran");
        for _ in 0..100 {
            assert_eq!(
                ran.transport_delay(UeId(1), Direction::Uplink, 100, &mut rng),
                Ok(Transport::Delivered(0.010))
            );
            assert_eq!(
                ran.transport_delay(UeId(2), Direction::Downlink, 100, &mut rng),
                Ok(Transport::Lost)
            );
        }
    }

    #[test]
    fn exponential_profile_mean() {
        let mut ran = two_cells();
        let profile = TransportProfile {
            dl: DelayDist::Exponential { mean: 0.020 },
            ul: DelayDist::Exponential { mean: 0.020 },
            loss: 0.0,
        };
        ran.add_ue(UeState::new(UeId(1), Position::ORIGIN, Mobility::Static).with_profile(profile))
            .unwrap();
        let mut rng = RngStreams::new(9).stream("ran");
        let n = 100_000;
        let total: f64 = (0..n)
            .map(|_| {
                ran.transport_delay(UeId(1), Direction::Downlink, 0, &mut rng)
                    .unwrap()
                    .delay()
                    .unwrap()
            })
            .sum();
        let mean = total / n as f64;
        assert!((mean - 0.020).abs() / 0.020 < 0.05, "mean {mean}");
    }

    #[test]
    fn transport_needs_association() {
        let mut ran = Ran::default();
        ran.add_ue(UeState::new(UeId(1), Position::ORIGIN, Mobility::Static))
            .unwrap();
        let mut rng = RngStreams::new(1).stream("ran");
        assert_eq!(
            ran.transport_delay(UeId(1), Direction::Uplink, 1, &mut rng),
            Err(RanError::UeNotAssociated(UeId(1)))
        );
    }

    #[test]
    fn l2_record_and_query() {
        let mut ran = Ran::new(2);
        ran.add_cell(CellId(1), Position::ORIGIN).unwrap();
        let scope = L2Scope::Cell(CellId(1));
        let now = SimTime::from_secs_f64(10.0);
        assert_eq!(
            ran.query_l2(scope, Measure::DlDelay, Aggregator::LastSample, now),
            Err(RanError::EmptyHistory)
        );
        for (t, d) in [(1.0, 2.0), (2.0, 4.0), (3.0, 6.0)] {
            ran.record_l2(
                CellId(1),
                L2Sample {
                    timestamp: SimTime::from_secs_f64(t),
                    dl_delay: Some(d),
                    ..Default::default()
                },
            )
            .unwrap();
        }
        assert_eq!(
            ran.query_l2(scope, Measure::DlDelay, Aggregator::LastSample, now),
            Ok(6.0)
        );
        // capacity 2: the 2 ms sample was evicted
        assert_eq!(
            ran.query_l2(scope, Measure::DlDelay, Aggregator::Average, now),
            Ok(5.0)
        );
    }

    #[test]
    fn single_sample_average_equals_last() {
        let mut ran = Ran::default();
        ran.add_cell(CellId(1), Position::ORIGIN).unwrap();
        ran.record_l2(
            CellId(1),
            L2Sample {
                timestamp: SimTime::from_secs_f64(1.0),
                dl_throughput: 1234.5,
                ..Default::default()
            },
        )
        .unwrap();
        let now = SimTime::from_secs_f64(1.0);
        let q = |a| ran.query_l2(L2Scope::Cell(CellId(1)), Measure::DlThroughput, a, now);
        assert_eq!(q(Aggregator::Average), q(Aggregator::LastSample));
    }

    #[test]
    fn collection_counts_active_ues() {
        let mut ran = Ran::default();
        ran.add_cell(CellId(1), Position::ORIGIN).unwrap();
        for i in 1..=4 {
            ran.add_ue(UeState::new(UeId(i), Position::ORIGIN, Mobility::Static))
                .unwrap();
        }
        let mut rng = RngStreams::new(1).stream("ran");
        for i in 1..=3 {
            ran.transport_delay(UeId(i), Direction::Downlink, 1000, &mut rng)
                .unwrap();
        }
        ran.collect_l2(SimTime::from_secs_f64(1.0), 1.0);
        let now = SimTime::from_secs_f64(1.0);
        let scope = L2Scope::Cell(CellId(1));
        assert_eq!(
            ran.query_l2(scope, Measure::ActiveUeDl, Aggregator::LastSample, now),
            Ok(3.0)
        );
        assert_eq!(
            ran.query_l2(scope, Measure::DlDelay, Aggregator::LastSample, now),
            Ok(10.0)
        );
        assert_eq!(
            ran.query_l2(scope, Measure::DlThroughput, Aggregator::LastSample, now),
            Ok(24_000.0)
        );
        let ue_scope = L2Scope::Ue {
            cell: CellId(1),
            ue: UeId(4),
        };
        assert_eq!(
            ran.query_l2(ue_scope, Measure::DlDelay, Aggregator::LastSample, now),
            Err(RanError::EmptyHistory)
        );
    }

    proptest! {
        #[test]
        fn partition_and_handover_conservation(
            cells in prop::collection::vec((-500.0f64..500.0, -500.0f64..500.0), 1..5),
            ues in prop::collection::vec(
                ((-500.0f64..500.0, -500.0f64..500.0), (-30.0f64..30.0, -30.0f64..30.0)),
                1..6,
            ),
            steps in 1usize..40,
        ) {
            let mut ran = Ran::default();
            for (i, (x, y)) in cells.iter().enumerate() {
                ran.add_cell(CellId(i as u32), Position::new(*x, *y, 0.0)).unwrap();
            }
            for (i, ((x, y), (vx, vy))) in ues.iter().enumerate() {
                ran.add_ue(UeState::new(
                    UeId(i as u32),
                    Position::new(*x, *y, 0.0),
                    Mobility::Linear { velocity: Position::new(*vx, *vy, 0.0) },
                )).unwrap();
            }
            // oracle: argmin over cells computed independently at each sample
            let argmin = |p: &Position| {
                let mut best = (f64::INFINITY, 0u32);
                for (i, (x, y)) in cells.iter().enumerate() {
                    let d = p.distance(&Position::new(*x, *y, 0.0));
                    if d < best.0 { best = (d, i as u32); }
                }
                best.1
            };
            let mut expected = vec![0usize; ues.len()];
            let mut last: Vec<u32> = ran.ues().map(|u| argmin(&u.position)).collect();
            let mut observed = vec![0usize; ues.len()];
            for _ in 0..steps {
                let moved = ran.advance_mobility(0.5).unwrap();
                for h in ran.associate_all().unwrap() {
                    observed[h.ue.0 as usize] += 1;
                }
                for (ue, pos) in moved {
                    let a = argmin(&pos);
                    if a != last[ue.0 as usize] {
                        expected[ue.0 as usize] += 1;
                        last[ue.0 as usize] = a;
                    }
                }
                prop_assert!(ran.check_partition());
            }
            prop_assert_eq!(observed, expected);
        }
    }
}
