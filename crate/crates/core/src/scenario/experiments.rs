//! Built-in reproduction experiments.

use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

use crate::world::TimelineEntry;

use super::analysis::{ks_distance, linear_fit, mean_ci95, MeanCi, SlopeFit};
use super::config::{BackgroundMode, ScenarioConfig};
use super::output::run_sim;
use super::ScenarioError;

pub const BG_VALIDATION: &str = include_str!("../../scenarios/bg-validation.toml");
pub const DANGER_ZONE: &str = include_str!("../../scenarios/danger-zone.toml");
pub const DANGER_ZONE_TWO_VEHICLES: &str = include_str!("../../scenarios/danger-zone-two-vehicles.toml");
pub const DANGER_ZONE_LIVE: &str = include_str!("../../scenarios/danger-zone-live.toml");

/// Scenarios shipped with the simulator, by name.
pub const BUNDLED: [(&str, &str); 4] = [
    ("bg-validation", BG_VALIDATION),
    ("danger-zone", DANGER_ZONE),
    ("danger-zone-two-vehicles", DANGER_ZONE_TWO_VEHICLES),
    ("danger-zone-live", DANGER_ZONE_LIVE),
];

/// Parses a bundled scenario.
pub fn bundled(name: &str) -> Option<ScenarioConfig> {
    BUNDLED
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, text)| ScenarioConfig::parse(text, None).expect("bundled scenarios parse"))
}

pub const FOREGROUND_STREAM: &str = "fg_response_time";

#[derive(Clone, Debug)]
pub struct BgValidationParams {
    pub counts: Vec<u32>,
    pub reps: u32,
    pub seed: u64,
    /// Overrides the scenario duration.
    pub duration: Option<f64>,
}

impl Default for BgValidationParams {
    fn default() -> Self {
        BgValidationParams {
            counts: vec![10, 50, 100, 200, 300],
            reps: 15,
            seed: 1,
            duration: None,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct CountResult {
    pub count: u32,
    /// KS distance between pooled foreground response times of both modes.
    pub ks: f64,
    pub explicit_samples: usize,
    pub generator_samples: usize,
    pub explicit_mean_response: f64,
    pub generator_mean_response: f64,
    /// Wall seconds per run.
    pub explicit_wall: MeanCi,
    pub generator_wall: MeanCi,
}

#[derive(Clone, Debug, Serialize)]
pub struct BgValidationReport {
    pub mu: f64,
    pub rate_per_app: f64,
    pub duration: f64,
    pub reps: u32,
    pub counts: Vec<CountResult>,
    /// Generator wall time regressed on the background app count.
    pub generator_slope: Option<SlopeFit>,
    /// (max − min) / min over the generator mean wall times.
    pub generator_spread: f64,
    /// Explicit mean wall time strictly increases with the count.
    pub explicit_monotone: bool,
    /// Explicit over generator mean wall time at the largest count.
    pub ratio_at_max: f64,
    /// Pooled foreground response times per (count, mode).
    #[serde(skip)]
    pub samples: BTreeMap<(u32, BackgroundMode), Vec<f64>>,
}

impl BgValidationReport {
    pub fn count(&self, n: u32) -> Option<&CountResult> {
        self.counts.iter().find(|c| c.count == n)
    }
}

fn with_background(base: &ScenarioConfig, mode: BackgroundMode, apps: u32, seed: u64) -> ScenarioConfig {
    let mut cfg = base.clone();
    cfg.seed = seed;
    for s in &mut cfg.services {
        if let Some(bg) = &mut s.background {
            bg.mode = mode;
            bg.apps = apps;
        }
    }
    cfg
}

/// Runs the bundled validation scenario in both background modes for every
/// count and repetition. Repetition `r` uses seed `params.seed + r` in both
/// modes. Runs are interleaved so slow drifts in machine load hit both modes
/// alike; one untimed run per mode warms caches first.
pub fn experiment_bg_validation(params: &BgValidationParams) -> Result<BgValidationReport, ScenarioError> {
    let mut base = bundled("bg-validation").expect("bundled");
    if let Some(d) = params.duration {
        base.duration = d;
    }
    let svc = base
        .services
        .iter()
        .find(|s| s.background.is_some())
        .expect("validation scenario has a background service");
    let mu = svc.service_time.mu();
    let rate = svc.background.as_ref().map_or(0.0, |b| b.rate);

    let modes = [BackgroundMode::Explicit, BackgroundMode::Generator];
    if let Some(&first) = params.counts.first() {
        let mut warm = base.clone();
        warm.duration = warm.duration.min(10.0);
        for m in modes {
            run_sim(&with_background(&warm, m, first, params.seed))?;
        }
    }

    let mut samples: BTreeMap<(u32, BackgroundMode), Vec<f64>> = BTreeMap::new();
    let mut walls: BTreeMap<(u32, BackgroundMode), Vec<f64>> = BTreeMap::new();
    for rep in 0..params.reps {
        for &count in &params.counts {
            for m in modes {
                let cfg = with_background(&base, m, count, params.seed + rep as u64);
                let (engine, manifest) = run_sim(&cfg)?;
                log::info!(
                    "bg-validation count={count} mode={m:?} rep={rep} wall={:.3}s",
                    manifest.wall_time_secs
                );
                samples
                    .entry((count, m))
                    .or_default()
                    .extend(engine.model().stats.values(FOREGROUND_STREAM));
                walls.entry((count, m)).or_default().push(manifest.wall_time_secs);
            }
        }
    }

    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len().max(1) as f64;
    let counts: Vec<CountResult> = params
        .counts
        .iter()
        .map(|&count| {
            let e = &samples[&(count, BackgroundMode::Explicit)];
            let g = &samples[&(count, BackgroundMode::Generator)];
            CountResult {
                count,
                ks: ks_distance(e, g),
                explicit_samples: e.len(),
                generator_samples: g.len(),
                explicit_mean_response: mean(e),
                generator_mean_response: mean(g),
                explicit_wall: mean_ci95(&walls[&(count, BackgroundMode::Explicit)]),
                generator_wall: mean_ci95(&walls[&(count, BackgroundMode::Generator)]),
            }
        })
        .collect();

    let (xs, ys): (Vec<f64>, Vec<f64>) = params
        .counts
        .iter()
        .flat_map(|&c| walls[&(c, BackgroundMode::Generator)].iter().map(move |w| (c as f64, *w)))
        .unzip();
    let gen_means: Vec<f64> = counts.iter().map(|c| c.generator_wall.mean).collect();
    let gmin = gen_means.iter().copied().fold(f64::INFINITY, f64::min);
    let gmax = gen_means.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let explicit_monotone = counts
        .windows(2)
        .all(|w| w[1].explicit_wall.mean > w[0].explicit_wall.mean);
    let ratio_at_max = counts
        .iter()
        .max_by_key(|c| c.count)
        .map_or(f64::NAN, |c| c.explicit_wall.mean / c.generator_wall.mean);

    Ok(BgValidationReport {
        mu,
        rate_per_app: rate,
        duration: base.duration,
        reps: params.reps,
        counts,
        generator_slope: linear_fit(&xs, &ys),
        generator_spread: (gmax - gmin) / gmin,
        explicit_monotone,
        ratio_at_max,
        samples,
    })
}

/// Expected danger-zone steps, in order.
pub const DANGER_ZONE_STEPS: [&str; 10] = [
    "start",
    "ack-start",
    "subscribe-entering",
    "notify-entering",
    "inform-entering",
    "modify-leaving",
    "notify-leaving",
    "inform-leaving",
    "stop",
    "ack-stop",
];

/// Steps recording a warning's arrival at the UE; not part of the sequence.
fn informational(step: &str) -> bool {
    step.starts_with("warned-")
}

#[derive(Clone, Debug, Error, PartialEq, Serialize)]
#[error("sequence violation for {}: step {index} should be '{expected}', got '{found}'", ue.map_or("unattributed steps".to_string(), |u| format!("ue{u}")))]
pub struct SequenceViolation {
    pub ue: Option<u32>,
    pub index: usize,
    pub expected: String,
    pub found: String,
}

/// Checks `steps` against [`DANGER_ZONE_STEPS`], skipping informational
/// ones. Returns how many expected steps were seen; a shorter run is a valid
/// prefix.
pub fn check_sequence<'a>(
    ue: Option<u32>,
    steps: impl IntoIterator<Item = &'a str>,
) -> Result<usize, SequenceViolation> {
    let mut seen = 0;
    for step in steps.into_iter().filter(|s| !informational(s)) {
        match DANGER_ZONE_STEPS.get(seen) {
            Some(expected) if *expected == step => seen += 1,
            expected => {
                return Err(SequenceViolation {
                    ue,
                    index: seen,
                    expected: expected.unwrap_or(&"<end>").to_string(),
                    found: step.to_string(),
                })
            }
        }
    }
    Ok(seen)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VehicleTimeline {
    pub ue: u32,
    /// (simulated seconds, step), including informational steps.
    pub steps: Vec<(f64, String)>,
    /// Expected steps completed.
    pub completed: usize,
}

impl VehicleTimeline {
    pub fn is_complete(&self) -> bool {
        self.completed == DANGER_ZONE_STEPS.len()
    }

    pub fn time_of(&self, step: &str) -> Option<f64> {
        self.steps.iter().find(|s| s.1 == step).map(|s| s.0)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct DangerZoneReport {
    pub vehicles: Vec<VehicleTimeline>,
    pub notifications: u64,
}

/// Splits a timeline per UE and checks each against the expected sequence.
pub fn vehicle_timelines(timeline: &[TimelineEntry]) -> Result<Vec<VehicleTimeline>, SequenceViolation> {
    if let Some(t) = timeline.iter().find(|t| t.ue.is_none()) {
        return Err(SequenceViolation {
            ue: None,
            index: 0,
            expected: DANGER_ZONE_STEPS[0].to_string(),
            found: t.step.clone(),
        });
    }
    let mut per_ue: BTreeMap<u32, Vec<(f64, String)>> = BTreeMap::new();
    for t in timeline {
        let ue = t.ue.expect("checked above").0;
        per_ue
            .entry(ue)
            .or_default()
            .push((t.time.as_secs_f64(), t.step.clone()));
    }
    per_ue
        .into_iter()
        .map(|(ue, steps)| {
            let completed = check_sequence(Some(ue), steps.iter().map(|s| s.1.as_str()))?;
            Ok(VehicleTimeline { ue, steps, completed })
        })
        .collect()
}

/// Runs a danger-zone scenario in simulated time and checks every vehicle's
/// sequence of events.
pub fn experiment_danger_zone(cfg: &ScenarioConfig) -> Result<DangerZoneReport, ScenarioError> {
    let (engine, _) = run_sim(cfg)?;
    let w = engine.model();
    Ok(DangerZoneReport {
        vehicles: vehicle_timelines(&w.timeline)?,
        notifications: w.counters.notifications,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::config::{MobilityConfig, UeAppConfig};

    #[test]
    fn bundled_scenarios_are_valid() {
        for (name, _) in BUNDLED {
            let cfg = bundled(name).unwrap();
            cfg.validate().unwrap_or_else(|e| panic!("{name}: {e:?}"));
            assert_eq!(cfg.name, name);
        }
    }

    #[test]
    fn bg_validation_parameters() {
        let cfg = bundled("bg-validation").unwrap();
        assert_eq!(cfg.duration, 180.0);
        let bg = cfg.services[0].background.as_ref().unwrap();
        assert_eq!(bg.rate, 0.024);
        assert_eq!(cfg.derived_lambda_f("LocationService"), 6.0);
        assert_eq!(cfg.services[0].service_time.mu(), 200.0);
        let fg = cfg.app("Foreground").unwrap();
        let text = toml::to_string(fg).unwrap();
        assert!(text.contains("period = 0.5"), "{text}");
    }

    #[test]
    fn sequence_checker() {
        assert_eq!(check_sequence(Some(1), DANGER_ZONE_STEPS), Ok(10));
        assert_eq!(check_sequence(Some(1), ["start", "warned-entering", "ack-start"]), Ok(2));
        let err = check_sequence(Some(3), ["start", "subscribe-entering"]).unwrap_err();
        assert_eq!(err.index, 1);
        assert_eq!(err.expected, "ack-start");
        assert_eq!(err.found, "subscribe-entering");
        assert!(err.to_string().contains("ue3"));
        let mut extra: Vec<&str> = DANGER_ZONE_STEPS.to_vec();
        extra.push("start");
        assert_eq!(check_sequence(None, extra).unwrap_err().expected, "<end>");
    }

    #[test]
    fn nominal_vehicle_completes_the_sequence() {
        let report = experiment_danger_zone(&bundled("danger-zone").unwrap()).unwrap();
        assert_eq!(report.vehicles.len(), 1);
        let v = &report.vehicles[0];
        assert!(v.is_complete(), "{v:?}");
        assert_eq!(report.notifications, 2);
        // enters at t = 8 s, leaves at t = 12 s, within one mobility period plus queueing
        assert!((v.time_of("notify-entering").unwrap() - 8.0).abs() < 0.2);
        assert!((v.time_of("notify-leaving").unwrap() - 12.0).abs() < 0.2);
    }

    #[test]
    fn two_vehicles_get_independent_sequences() {
        let report = experiment_danger_zone(&bundled("danger-zone-two-vehicles").unwrap()).unwrap();
        assert_eq!(report.vehicles.len(), 2);
        assert!(report.vehicles.iter().all(VehicleTimeline::is_complete), "{report:?}");
        assert_eq!(report.notifications, 4);
    }

    #[test]
    fn vehicle_missing_the_zone_stops_after_subscribing() {
        let mut cfg = bundled("danger-zone").unwrap();
        cfg.ues[0].position = [-150.0, 100.0, 0.0];
        assert!(matches!(cfg.ues[0].mobility, MobilityConfig::Linear { .. }));
        assert!(matches!(cfg.ues[0].app, Some(UeAppConfig::DangerZone { .. })));
        let report = experiment_danger_zone(&cfg).unwrap();
        let v = &report.vehicles[0];
        assert_eq!(v.completed, 3);
        assert_eq!(v.steps.last().unwrap().1, "subscribe-entering");
        assert_eq!(report.notifications, 0);
    }

    #[test]
    fn short_bg_validation_reports_every_count() {
        let params = BgValidationParams {
            counts: vec![5, 20],
            reps: 2,
            seed: 3,
            duration: Some(20.0),
        };
        let r = experiment_bg_validation(&params).unwrap();
        assert_eq!(r.counts.len(), 2);
        for c in &r.counts {
            // three apps at 2/s for about 20 s, twice
            assert!(c.explicit_samples > 200 && c.generator_samples > 200, "{c:?}");
            assert!(c.ks < 0.2, "{c:?}");
        }
        assert_eq!(r.mu, 200.0);
    }
}
