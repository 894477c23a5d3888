use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::ServiceError;
use crate::engine::SimTime;
use crate::ids::{CellId, ContextId, SubscriptionId, UeId};
use crate::ran::{Position, Ran};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AreaEvent {
    Entering,
    Leaving,
}

impl AreaEvent {
    pub fn as_str(self) -> &'static str {
        match self {
            AreaEvent::Entering => "entering",
            AreaEvent::Leaving => "leaving",
        }
    }
}

/// Where notifications for a subscription go.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Callback {
    /// An app instance inside the simulator.
    Context(ContextId),
    /// An HTTP endpoint outside it, reached through the gateway.
    Url(String),
}

/// Circle zone and the transition of interest.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZoneSpec {
    pub center: Position,
    pub radius: f64,
    pub event: AreaEvent,
}

impl ZoneSpec {
    pub fn validate(&self) -> Result<(), ServiceError> {
        if !(self.radius.is_finite() && self.radius > 0.0) {
            return Err(ServiceError::InvalidRadius(self.radius));
        }
        if !self.center.is_finite() {
            return Err(ServiceError::InvalidQuery("non-finite zone center".into()));
        }
        Ok(())
    }

    /// Closed disc: the boundary counts as inside.
    pub fn contains(&self, p: &Position) -> bool {
        p.distance(&self.center) <= self.radius
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AreaSubscription {
    pub id: SubscriptionId,
    pub ue: UeId,
    pub zone: ZoneSpec,
    pub callback: Callback,
    pub last_inside: bool,
    /// Cleared when callback delivery gives up.
    pub enabled: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct AreaNotification {
    pub subscription_id: SubscriptionId,
    pub ue_id: UeId,
    pub event: AreaEvent,
    pub position: Position,
    /// Simulated seconds.
    pub timestamp: f64,
}

/// Filter for user position queries. An empty filter selects every UE.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserQuery {
    #[serde(default)]
    pub ues: Vec<UeId>,
    #[serde(default)]
    pub cells: Vec<CellId>,
}

impl UserQuery {
    pub fn ue(ue: UeId) -> Self {
        UserQuery {
            ues: vec![ue],
            cells: Vec::new(),
        }
    }

    pub fn cell(cell: CellId) -> Self {
        UserQuery {
            ues: Vec::new(),
            cells: vec![cell],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct UserInfo {
    pub ue_id: UeId,
    pub cell_id: Option<CellId>,
    pub position: Position,
    pub timestamp: f64,
}

#[derive(Clone, Debug, Default)]
pub struct LocationService {
    subs: BTreeMap<SubscriptionId, AreaSubscription>,
    next_id: u32,
}

impl LocationService {
    pub fn new() -> Self {
        LocationService::default()
    }

    pub fn subscribe(
        &mut self,
        ran: &Ran,
        ue: UeId,
        zone: ZoneSpec,
        callback: Callback,
    ) -> Result<SubscriptionId, ServiceError> {
        zone.validate()?;
        let pos = ran.position(ue)?;
        self.next_id += 1;
        let id = SubscriptionId(self.next_id);
        self.subs.insert(
            id,
            AreaSubscription {
                id,
                ue,
                zone,
                callback,
                last_inside: zone.contains(&pos),
                enabled: true,
            },
        );
        Ok(id)
    }

    /// Replaces the zone and direction, re-reading the inside flag from the
    /// UE's current position.
    pub fn modify(&mut self, ran: &Ran, id: SubscriptionId, zone: ZoneSpec) -> Result<(), ServiceError> {
        zone.validate()?;
        let sub = self
            .subs
            .get_mut(&id)
            .ok_or(ServiceError::UnknownSubscription(id))?;
        let pos = ran.position(sub.ue)?;
        sub.zone = zone;
        sub.last_inside = zone.contains(&pos);
        Ok(())
    }

    pub fn delete(&mut self, id: SubscriptionId) -> Result<AreaSubscription, ServiceError> {
        self.subs
            .remove(&id)
            .ok_or(ServiceError::UnknownSubscription(id))
    }

    pub fn disable(&mut self, id: SubscriptionId) {
        if let Some(s) = self.subs.get_mut(&id) {
            s.enabled = false;
        }
    }

    pub fn get(&self, id: SubscriptionId) -> Option<&AreaSubscription> {
        self.subs.get(&id)
    }

    pub fn subscriptions(&self) -> impl Iterator<Item = &AreaSubscription> {
        self.subs.values()
    }

    /// Drops every subscription delivering to `ctx`.
    pub fn remove_context(&mut self, ctx: ContextId) {
        self.subs.retain(|_, s| s.callback != Callback::Context(ctx));
    }

    /// Checks every subscription against the current UE positions and
    /// returns the transitions matching their direction, by subscription id.
    pub fn evaluate(&mut self, ran: &Ran, now: SimTime) -> Vec<(AreaNotification, Callback)> {
        let mut out = Vec::new();
        for sub in self.subs.values_mut() {
            let Ok(pos) = ran.position(sub.ue) else {
                continue;
            };
            let inside = sub.zone.contains(&pos);
            if inside == sub.last_inside {
                continue;
            }
            sub.last_inside = inside;
            let event = if inside {
                AreaEvent::Entering
            } else {
                AreaEvent::Leaving
            };
            if sub.enabled && event == sub.zone.event {
                out.push((
                    AreaNotification {
                        subscription_id: sub.id,
                        ue_id: sub.ue,
                        event,
                        position: pos,
                        timestamp: now.as_secs_f64(),
                    },
                    sub.callback.clone(),
                ));
            }
        }
        out
    }

    /// Positions of the selected UEs in ascending id order.
    pub fn users(&self, ran: &Ran, q: &UserQuery, now: SimTime) -> Result<Vec<UserInfo>, ServiceError> {
        let mut ids: BTreeSet<UeId> = BTreeSet::new();
        if q.ues.is_empty() && q.cells.is_empty() {
            ids.extend(ran.ues().map(|u| u.id));
        }
        for ue in &q.ues {
            ran.ue(*ue)?;
            ids.insert(*ue);
        }
        for c in &q.cells {
            ids.extend(ran.cell(*c)?.attached.iter().copied());
        }
        ids.into_iter()
            .map(|id| {
                let ue = ran.ue(id)?;
                Ok(UserInfo {
                    ue_id: id,
                    cell_id: ue.serving_cell,
                    position: ue.position,
                    timestamp: now.as_secs_f64(),
                })
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ran::{Mobility, UeState};

    fn ran_with(ues: &[(u32, f64)]) -> Ran {
        let mut ran = Ran::default();
        ran.add_cell(CellId(1), Position::ORIGIN).unwrap();
        for (id, x) in ues {
            ran.add_ue(UeState::new(
                UeId(*id),
                Position::new(*x, 0.0, 0.0),
                Mobility::Static,
            ))
            .unwrap();
        }
        ran
    }

    fn move_ue(ran: &mut Ran, id: u32, x: f64) {
        ran.set_position(UeId(id), Position::new(x, 0.0, 0.0)).unwrap();
    }

    fn zone(r: f64, event: AreaEvent) -> ZoneSpec {
        ZoneSpec {
            center: Position::ORIGIN,
            radius: r,
            event,
        }
    }

    #[test]
    fn entering_fires_once_on_crossing() {
        let mut ran = ran_with(&[(1, 7.0)]);
        let mut loc = LocationService::new();
        let cb = Callback::Url("http://127.0.0.1:9/cb".into());
        loc.subscribe(&ran, UeId(1), zone(5.0, AreaEvent::Entering), cb)
            .unwrap();
        move_ue(&mut ran, 1, 4.0);
        let n = loc.evaluate(&ran, SimTime::from_secs_f64(1.0));
        assert_eq!(n.len(), 1);
        assert_eq!(n[0].0.event, AreaEvent::Entering);
        move_ue(&mut ran, 1, 3.0);
        assert!(loc.evaluate(&ran, SimTime::from_secs_f64(1.1)).is_empty());
    }

    #[test]
    fn already_inside_needs_leave_and_reenter() {
        let mut ran = ran_with(&[(1, 1.0)]);
        let mut loc = LocationService::new();
        loc.subscribe(&ran, UeId(1), zone(5.0, AreaEvent::Entering), Callback::Context(ContextId(1)))
            .unwrap();
        move_ue(&mut ran, 1, 2.0);
        assert!(loc.evaluate(&ran, SimTime::ZERO).is_empty());
        move_ue(&mut ran, 1, 9.0);
        assert!(loc.evaluate(&ran, SimTime::ZERO).is_empty());
        move_ue(&mut ran, 1, 0.0);
        assert_eq!(loc.evaluate(&ran, SimTime::ZERO).len(), 1);
    }

    #[test]
    fn leaving_never_inside_is_silent() {
        let mut ran = ran_with(&[(1, 50.0)]);
        let mut loc = LocationService::new();
        loc.subscribe(&ran, UeId(1), zone(5.0, AreaEvent::Leaving), Callback::Context(ContextId(1)))
            .unwrap();
        for x in [40.0, 30.0, 20.0, 10.0, 6.0, 60.0] {
            move_ue(&mut ran, 1, x);
            assert!(loc.evaluate(&ran, SimTime::ZERO).is_empty());
        }
    }

    #[test]
    fn boundary_is_inside() {
        let mut ran = ran_with(&[(1, 6.0)]);
        let mut loc = LocationService::new();
        loc.subscribe(&ran, UeId(1), zone(5.0, AreaEvent::Entering), Callback::Context(ContextId(1)))
            .unwrap();
        move_ue(&mut ran, 1, 5.0);
        assert_eq!(loc.evaluate(&ran, SimTime::ZERO).len(), 1);
    }

    #[test]
    fn simultaneous_crossings_in_subscription_order() {
        let mut ran = ran_with(&[(1, 9.0), (2, 9.0)]);
        let mut loc = LocationService::new();
        let b = loc
            .subscribe(&ran, UeId(2), zone(5.0, AreaEvent::Entering), Callback::Context(ContextId(1)))
            .unwrap();
        let a = loc
            .subscribe(&ran, UeId(1), zone(5.0, AreaEvent::Entering), Callback::Context(ContextId(1)))
            .unwrap();
        move_ue(&mut ran, 1, 1.0);
        move_ue(&mut ran, 2, 1.0);
        let n = loc.evaluate(&ran, SimTime::ZERO);
        let ids: Vec<_> = n.iter().map(|(n, _)| n.subscription_id).collect();
        assert_eq!(ids, vec![b, a]);
        assert!(b < a);
    }

    #[test]
    fn tunneling_between_samples_is_missed() {
        let mut ran = ran_with(&[(1, -10.0)]);
        let mut loc = LocationService::new();
        loc.subscribe(&ran, UeId(1), zone(5.0, AreaEvent::Entering), Callback::Context(ContextId(1)))
            .unwrap();
        move_ue(&mut ran, 1, 10.0);
        assert!(loc.evaluate(&ran, SimTime::ZERO).is_empty());
    }

    #[test]
    fn modify_to_leaving_after_enter() {
        let mut ran = ran_with(&[(1, 9.0)]);
        let mut loc = LocationService::new();
        let id = loc
            .subscribe(&ran, UeId(1), zone(5.0, AreaEvent::Entering), Callback::Context(ContextId(1)))
            .unwrap();
        move_ue(&mut ran, 1, 0.0);
        assert_eq!(loc.evaluate(&ran, SimTime::ZERO)[0].0.event, AreaEvent::Entering);
        loc.modify(&ran, id, zone(5.0, AreaEvent::Leaving)).unwrap();
        move_ue(&mut ran, 1, -9.0);
        let n = loc.evaluate(&ran, SimTime::ZERO);
        assert_eq!(n.len(), 1);
        assert_eq!(n[0].0.event, AreaEvent::Leaving);
    }

    #[test]
    fn identical_modify_is_silent_and_unknown_rejected() {
        let ran = ran_with(&[(1, 1.0)]);
        let mut loc = LocationService::new();
        let id = loc
            .subscribe(&ran, UeId(1), zone(5.0, AreaEvent::Entering), Callback::Context(ContextId(1)))
            .unwrap();
        loc.modify(&ran, id, zone(5.0, AreaEvent::Entering)).unwrap();
        assert!(loc.evaluate(&ran, SimTime::ZERO).is_empty());
        assert_eq!(
            loc.modify(&ran, SubscriptionId(99), zone(5.0, AreaEvent::Entering)),
            Err(ServiceError::UnknownSubscription(SubscriptionId(99)))
        );
    }

    #[test]
    fn invalid_radius_and_unknown_ue() {
        let ran = ran_with(&[(1, 1.0)]);
        let mut loc = LocationService::new();
        assert_eq!(
            loc.subscribe(&ran, UeId(1), zone(0.0, AreaEvent::Entering), Callback::Context(ContextId(1))),
            Err(ServiceError::InvalidRadius(0.0))
        );
        assert_eq!(
            loc.subscribe(&ran, UeId(5), zone(1.0, AreaEvent::Entering), Callback::Context(ContextId(1))),
            Err(ServiceError::UnknownUe(UeId(5)))
        );
    }

    #[test]
    fn disabled_subscription_stays_silent() {
        let mut ran = ran_with(&[(1, 9.0)]);
        let mut loc = LocationService::new();
        let id = loc
            .subscribe(&ran, UeId(1), zone(5.0, AreaEvent::Entering), Callback::Url("x".into()))
            .unwrap();
        loc.disable(id);
        move_ue(&mut ran, 1, 0.0);
        assert!(loc.evaluate(&ran, SimTime::ZERO).is_empty());
    }

    #[test]
    fn user_queries() {
        let mut ran = ran_with(&[(1, 2.0), (2, 3.0)]);
        ran.add_cell(CellId(2), Position::new(1000.0, 0.0, 0.0)).unwrap();
        ran.add_ue(UeState::new(UeId(3), Position::new(990.0, 0.0, 0.0), Mobility::Static))
            .unwrap();
        let loc = LocationService::new();
        let one = loc.users(&ran, &UserQuery::ue(UeId(1)), SimTime::ZERO).unwrap();
        assert_eq!(one[0].position, Position::new(2.0, 0.0, 0.0));
        let by_cell: Vec<UeId> = loc
            .users(&ran, &UserQuery::cell(CellId(1)), SimTime::ZERO)
            .unwrap()
            .iter()
            .map(|u| u.ue_id)
            .collect();
        assert_eq!(by_cell, vec![UeId(1), UeId(2)]);
        let all = loc.users(&ran, &UserQuery::default(), SimTime::ZERO).unwrap();
        assert_eq!(all.len(), 3);
        assert_eq!(
            loc.users(&ran, &UserQuery::ue(UeId(9)), SimTime::ZERO),
            Err(ServiceError::UnknownUe(UeId(9)))
        );
        assert_eq!(
            loc.users(&ran, &UserQuery::cell(CellId(9)), SimTime::ZERO),
            Err(ServiceError::UnknownCell(CellId(9)))
        );
    }

    #[test]
    fn notification_document_keys() {
        let n = AreaNotification {
            subscription_id: SubscriptionId(3),
            ue_id: UeId(1),
            event: AreaEvent::Leaving,
            position: Position::new(1.0, 2.0, 0.0),
            timestamp: 4.5,
        };
        let v = serde_json::to_value(&n).unwrap();
        assert_eq!(v["subscriptionId"], 3);
        assert_eq!(v["ueId"], 1);
        assert_eq!(v["event"], "leaving");
        assert_eq!(v["position"]["y"], 2.0);
        assert_eq!(v["timestamp"], 4.5);
    }
}
