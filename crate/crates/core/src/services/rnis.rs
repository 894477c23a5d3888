use serde::{Deserialize, Serialize};

use super::ServiceError;
use crate::engine::SimTime;
use crate::ids::{CellId, UeId};
use crate::ran::{Aggregator, L2Scope, Measure, Ran, RanError};

/// Layer-2 measures request. Measures default to all of them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct L2Query {
    #[serde(default)]
    pub cells: Vec<CellId>,
    #[serde(default)]
    pub ues: Vec<UeId>,
    #[serde(default)]
    pub measures: Vec<Measure>,
    #[serde(default = "default_aggregator")]
    pub aggregator: Aggregator,
}

fn default_aggregator() -> Aggregator {
    Aggregator::LastSample
}

impl L2Query {
    pub fn cell(cell: CellId, aggregator: Aggregator) -> Self {
        L2Query {
            cells: vec![cell],
            ues: Vec::new(),
            measures: Vec::new(),
            aggregator,
        }
    }
}

/// Absent fields had no samples under the chosen aggregator.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct MeasureValues {
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub dl_delay: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub ul_delay: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub dl_throughput: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub ul_throughput: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub active_ue_dl: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub active_ue_ul: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub data_volume_dl: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub data_volume_ul: Option<f64>,
}

impl MeasureValues {
    fn slot(&mut self, m: Measure) -> &mut Option<f64> {
        match m {
            Measure::DlDelay => &mut self.dl_delay,
            Measure::UlDelay => &mut self.ul_delay,
            Measure::DlThroughput => &mut self.dl_throughput,
            Measure::UlThroughput => &mut self.ul_throughput,
            Measure::ActiveUeDl => &mut self.active_ue_dl,
            Measure::ActiveUeUl => &mut self.active_ue_ul,
            Measure::DataVolumeDl => &mut self.data_volume_dl,
            Measure::DataVolumeUl => &mut self.data_volume_ul,
        }
    }

    pub fn get(&self, m: Measure) -> Option<f64> {
        match m {
            Measure::DlDelay => self.dl_delay,
            Measure::UlDelay => self.ul_delay,
            Measure::DlThroughput => self.dl_throughput,
            Measure::UlThroughput => self.ul_throughput,
            Measure::ActiveUeDl => self.active_ue_dl,
            Measure::ActiveUeUl => self.active_ue_ul,
            Measure::DataVolumeDl => self.data_volume_dl,
            Measure::DataVolumeUl => self.data_volume_ul,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CellMeasures {
    pub cell_id: CellId,
    #[serde(flatten)]
    pub values: MeasureValues,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct UeMeasures {
    pub ue_id: UeId,
    pub cell_id: Option<CellId>,
    #[serde(flatten)]
    pub values: MeasureValues,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Layer2Report {
    pub timestamp: f64,
    pub cell_info: Vec<CellMeasures>,
    pub ue_info: Vec<UeMeasures>,
}

fn fill(ran: &Ran, scope: L2Scope, q: &L2Query, now: SimTime) -> Result<MeasureValues, ServiceError> {
    let mut v = MeasureValues::default();
    let measures: &[Measure] = if q.measures.is_empty() {
        &Measure::ALL
    } else {
        &q.measures
    };
    for m in measures {
        match ran.query_l2(scope, *m, q.aggregator, now) {
            Ok(x) => *v.slot(*m) = Some(x),
            Err(RanError::EmptyHistory) => {}
            Err(e) => return Err(e.into()),
        }
    }
    Ok(v)
}

/// Answers a Layer-2 measures query from the RAN's history. A UE is
/// reported against its current serving cell.
pub fn layer2_measures(ran: &Ran, q: &L2Query, now: SimTime) -> Result<Layer2Report, ServiceError> {
    if q.cells.is_empty() && q.ues.is_empty() {
        return Err(ServiceError::EmptyScope);
    }
    q.aggregator
        .validate()
        .map_err(|e| ServiceError::InvalidQuery(e.to_string()))?;
    let mut cell_info = Vec::with_capacity(q.cells.len());
    for c in &q.cells {
        cell_info.push(CellMeasures {
            cell_id: *c,
            values: fill(ran, L2Scope::Cell(*c), q, now)?,
        });
    }
    let mut ue_info = Vec::with_capacity(q.ues.len());
    for u in &q.ues {
        let cell = ran.ue(*u)?.serving_cell;
        let values = match cell {
            Some(cell) => fill(ran, L2Scope::Ue { cell, ue: *u }, q, now)?,
            None => MeasureValues::default(),
        };
        ue_info.push(UeMeasures {
            ue_id: *u,
            cell_id: cell,
            values,
        });
    }
    Ok(Layer2Report {
        timestamp: now.as_secs_f64(),
        cell_info,
        ue_info,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ran::{Direction, L2Sample, Mobility, Position, UeState};
    use crate::rng::RngStreams;

    fn ran() -> Ran {
        let mut ran = Ran::default();
        ran.add_cell(CellId(1), Position::ORIGIN).unwrap();
        ran
    }

    #[test]
    fn average_dl_delay() {
        let mut ran = ran();
        for (i, d) in [2.0, 4.0, 6.0].into_iter().enumerate() {
            ran.record_l2(
                CellId(1),
                L2Sample {
                    timestamp: SimTime::from_millis(i as u64 * 100),
                    dl_delay: Some(d),
                    ..Default::default()
                },
            )
            .unwrap();
        }
        let r = layer2_measures(
            &ran,
            &L2Query::cell(CellId(1), Aggregator::Average),
            SimTime::from_secs_f64(1.0),
        )
        .unwrap();
        assert_eq!(r.cell_info[0].values.dl_delay, Some(4.0));
        let v = serde_json::to_value(&r).unwrap();
        assert_eq!(v["cellInfo"][0]["dlDelay"], 4.0);
        assert!(v["cellInfo"][0].get("ulDelay").is_none());
    }

    #[test]
    fn active_ue_count_from_traffic() {
        let mut ran = ran();
        let mut rng = RngStreams::new(1).stream("t");
        for u in 1..=3 {
            ran.add_ue(UeState::new(UeId(u), Position::new(u as f64, 0.0, 0.0), Mobility::Static))
                .unwrap();
            ran.transport_delay(UeId(u), Direction::Downlink, 1000, &mut rng)
                .unwrap();
        }
        let now = SimTime::from_millis(100);
        ran.collect_l2(now, 0.1);
        let r = layer2_measures(&ran, &L2Query::cell(CellId(1), Aggregator::LastSample), now)
            .unwrap();
        assert_eq!(r.cell_info[0].values.active_ue_dl, Some(3.0));
    }

    #[test]
    fn empty_history_gives_empty_fields() {
        let ran = ran();
        let r = layer2_measures(&ran, &L2Query::cell(CellId(1), Aggregator::Average), SimTime::ZERO)
            .unwrap();
        assert_eq!(r.cell_info[0].values, MeasureValues::default());
    }

    #[test]
    fn scope_errors() {
        let ran = ran();
        let empty = L2Query {
            cells: vec![],
            ues: vec![],
            measures: vec![],
            aggregator: Aggregator::Average,
        };
        assert_eq!(layer2_measures(&ran, &empty, SimTime::ZERO), Err(ServiceError::EmptyScope));
        assert_eq!(
            layer2_measures(&ran, &L2Query::cell(CellId(7), Aggregator::Average), SimTime::ZERO),
            Err(ServiceError::UnknownCell(CellId(7)))
        );
        let q = L2Query {
            ues: vec![UeId(4)],
            ..L2Query::cell(CellId(1), Aggregator::Average)
        };
        assert_eq!(layer2_measures(&ran, &q, SimTime::ZERO), Err(ServiceError::UnknownUe(UeId(4))));
    }
}
