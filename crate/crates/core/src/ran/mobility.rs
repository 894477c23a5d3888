use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::RanError;
use crate::ids::UeId;

/// Euclidean coordinates in meters.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Position {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Position {
    pub const ORIGIN: Position = Position {
        x: 0.0,
        y: 0.0,
        z: 0.0,
    };

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Position { x, y, z }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn distance(&self, other: &Position) -> f64 {
        let (dx, dy, dz) = (self.x - other.x, self.y - other.y, self.z - other.z);
        (dx * dx + dy * dy + dz * dz).sqrt()
    }

    pub fn offset(&self, v: &Position, scale: f64) -> Position {
        Position::new(
            self.x + v.x * scale,
            self.y + v.y * scale,
            self.z + v.z * scale,
        )
    }

    /// Point a fraction `f` of the way from `self` to `to`.
    pub fn lerp(&self, to: &Position, f: f64) -> Position {
        Position::new(
            self.x + (to.x - self.x) * f,
            self.y + (to.y - self.y) * f,
            self.z + (to.z - self.z) * f,
        )
    }
}

impl From<[f64; 3]> for Position {
    fn from(v: [f64; 3]) -> Self {
        Position::new(v[0], v[1], v[2])
    }
}

/// How a UE moves between mobility updates.
#[derive(Clone, Debug, PartialEq)]
pub enum Mobility {
    Static,
    /// Constant velocity in m/s.
    Linear { velocity: Position },
    /// Piecewise-linear path at constant speed; the UE stops at the last point.
    Waypoints {
        points: Vec<Position>,
        speed: f64,
        next: usize,
    },
    /// Timed positions, linearly interpolated and held at the ends.
    Trace { records: Vec<(f64, Position)> },
}

impl Mobility {
    pub fn waypoints(points: Vec<Position>, speed: f64) -> Self {
        Mobility::Waypoints {
            points,
            speed,
            next: 0,
        }
    }

    /// Moves `pos` forward by `dt` seconds. `elapsed` is the UE's total
    /// simulated time after the step, used by traces.
    pub fn step(&mut self, pos: &mut Position, dt: f64, elapsed: f64) {
        match self {
            Mobility::Static => {}
            Mobility::Linear { velocity } => *pos = pos.offset(velocity, dt),
            Mobility::Waypoints {
                points,
                speed,
                next,
            } => {
                let mut budget = *speed * dt;
                while budget > 0.0 && *next < points.len() {
                    let target = points[*next];
                    let d = pos.distance(&target);
                    if d <= budget {
                        *pos = target;
                        budget -= d;
                        *next += 1;
                    } else {
                        *pos = pos.lerp(&target, budget / d);
                        budget = 0.0;
                    }
                }
            }
            Mobility::Trace { records } => {
                if let Some(p) = trace_position(records, elapsed) {
                    *pos = p;
                }
            }
        }
    }
}

fn trace_position(records: &[(f64, Position)], t: f64) -> Option<Position> {
    let first = records.first()?;
    if t <= first.0 {
        return Some(first.1);
    }
    let idx = records.partition_point(|r| r.0 <= t);
    if idx >= records.len() {
        return records.last().map(|r| r.1);
    }
    let (t0, p0) = records[idx - 1];
    let (t1, p1) = records[idx];
    if t1 <= t0 {
        return Some(p1);
    }
    Some(p0.lerp(&p1, (t - t0) / (t1 - t0)))
}

/// Parses a mobility trace: one `time ue_id x y z` record per line, seconds
/// and meters. Blank lines and `#` comments are skipped. Records are sorted
/// by time per UE.
pub fn parse_mobility_trace(text: &str) -> Result<BTreeMap<UeId, Vec<(f64, Position)>>, RanError> {
    let mut out: BTreeMap<UeId, Vec<(f64, Position)>> = BTreeMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = |what: &str| RanError::TraceParse {
            line: lineno + 1,
            reason: what.to_owned(),
        };
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 5 {
            return Err(bad("expected 5 fields: time ue_id x y z"));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|_| bad("not a number"));
        let t = num(fields[0])?;
        let ue: u32 = fields[1].parse().map_err(|_| bad("ue_id is not an integer"))?;
        let p = Position::new(num(fields[2])?, num(fields[3])?, num(fields[4])?);
        if !t.is_finite() || t < 0.0 || !p.is_finite() {
            return Err(bad("non-finite or negative value"));
        }
        out.entry(UeId(ue)).or_default().push((t, p));
    }
    for recs in out.values_mut() {
        recs.sort_by(|a, b| a.0.total_cmp(&b.0));
    }
    Ok(out)
}

pub fn load_mobility_trace(path: &Path) -> Result<BTreeMap<UeId, Vec<(f64, Position)>>, RanError> {
    let text = fs::read_to_string(path).map_err(|e| RanError::TraceParse {
        line: 0,
        reason: format!("{}: {e}", path.display()),
    })?;
    parse_mobility_trace(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_step() {
        let mut m = Mobility::Linear {
            velocity: Position::new(1.0, 0.0, 0.0),
        };
        let mut p = Position::ORIGIN;
        m.step(&mut p, 2.0, 2.0);
        assert_eq!(p, Position::new(2.0, 0.0, 0.0));
    }

    #[test]
    fn zero_velocity_keeps_position() {
        let mut m = Mobility::Linear {
            velocity: Position::ORIGIN,
        };
        let mut p = Position::new(3.0, 4.0, 5.0);
        m.step(&mut p, 10.0, 10.0);
        assert_eq!(p, Position::new(3.0, 4.0, 5.0));
    }

    /// Independent oracle: the position at arc length `s` along the polyline
    /// starting at `start`.
    fn along_path(start: Position, pts: &[Position], s: f64) -> Position {
        let mut prev = start;
        let mut acc = 0.0;
        for p in pts {
            let seg = prev.distance(p);
            if acc + seg >= s {
                let f = if seg == 0.0 { 1.0 } else { (s - acc) / seg };
                return prev.lerp(p, f);
            }
            acc += seg;
            prev = *p;
        }
        prev
    }

    #[test]
    fn waypoints_follow_the_path_and_halt() {
        let pts = vec![
            Position::new(10.0, 0.0, 0.0),
            Position::new(10.0, 10.0, 0.0),
            Position::new(0.0, 10.0, 0.0),
        ];
        let mut m = Mobility::waypoints(pts.clone(), 3.0);
        let mut p = Position::ORIGIN;
        let dt = 0.7;
        for k in 1..=30 {
            m.step(&mut p, dt, k as f64 * dt);
            let expect = along_path(Position::ORIGIN, &pts, 3.0 * dt * k as f64);
            assert!(p.distance(&expect) < 1e-9, "step {k}: {p:?} vs {expect:?}");
        }
        assert_eq!(p, Position::new(0.0, 10.0, 0.0));
    }

    #[test]
    fn trace_interpolates_and_holds() {
        let recs = vec![
            (0.0, Position::ORIGIN),
            (10.0, Position::new(100.0, 0.0, 0.0)),
        ];
        assert_eq!(trace_position(&recs, 5.0), Some(Position::new(50.0, 0.0, 0.0)));
        assert_eq!(trace_position(&recs, 20.0), Some(Position::new(100.0, 0.0, 0.0)));
    }

    #[test]
    fn trace_file_parsing() {
        let text = "# t ue x y z\n0 1 0 0 0\n1.5 1 3 0 0\n\n0 2 5 5 0\n";
        let parsed = parse_mobility_trace(text).unwrap();
        assert_eq!(parsed[&UeId(1)].len(), 2);
        assert_eq!(parsed[&UeId(2)][0].1, Position::new(5.0, 5.0, 0.0));
        assert!(matches!(
            parse_mobility_trace("0 1 0 0"),
            Err(RanError::TraceParse { line: 1, .. })
        ));
    }
}
