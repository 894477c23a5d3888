//! Running a scenario in simulated time and writing its results.
//!
//! A results directory holds one `<stream>.csv` per statistics stream
//! (`time,value,app,host,service,ue`), one `<stream>.cdf.csv` per selected
//! stream (`value,quantile`), `timeline.csv` and `manifest.json`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use serde::Serialize;

use crate::engine::{Engine, RealtimeReport, SimTime};
use crate::world::{RunMode, StatRecord, World};

use super::build::build;
use super::config::{BackgroundMode, ScenarioConfig};
use super::ScenarioError;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ServiceManifest {
    pub name: String,
    pub host: u32,
    /// Service rate, 1/s.
    pub mu: f64,
    pub background: Option<BackgroundMode>,
    pub lambda_f: f64,
    pub lambda_b: f64,
    pub background_apps: u32,
    pub completed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Manifest {
    pub config_version: u32,
    pub name: String,
    pub seed: u64,
    pub mode: RunMode,
    pub pace: f64,
    pub duration: f64,
    pub wall_time_secs: f64,
    pub events: u64,
    pub app_events: u64,
    pub overruns: u64,
    pub max_lag_ms: f64,
    pub injected: u64,
    pub ues: usize,
    pub contexts_started: usize,
    pub notifications: u64,
    pub callbacks_sent: u64,
    pub lost_messages: u64,
    pub dropped_messages: u64,
    pub handovers: u64,
    pub services: Vec<ServiceManifest>,
    /// Record count per statistics stream.
    pub streams: BTreeMap<String, usize>,
}

impl Manifest {
    pub fn new(
        cfg: &ScenarioConfig,
        engine: &Engine<World>,
        wall: Duration,
        realtime: Option<&RealtimeReport>,
    ) -> Self {
        let w = engine.model();
        let services = cfg
            .services
            .iter()
            .map(|s| {
                let completed = w
                    .services
                    .iter()
                    .find(|i| i.name == s.name && i.host.0 == s.host)
                    .map_or(0, |i| i.completed);
                ServiceManifest {
                    name: s.name.clone(),
                    host: s.host,
                    mu: s.service_time.mu(),
                    background: s.background.as_ref().map(|b| b.mode),
                    lambda_f: cfg.lambda_f(s),
                    lambda_b: s.background.as_ref().map_or(0.0, |b| b.lambda_b()),
                    background_apps: s.background.as_ref().map_or(0, |b| b.apps),
                    completed,
                }
            })
            .collect();
        Manifest {
            config_version: cfg.version,
            name: cfg.name.clone(),
            seed: cfg.seed,
            mode: cfg.mode,
            pace: cfg.pace,
            duration: cfg.duration,
            wall_time_secs: wall.as_secs_f64(),
            events: engine.dispatched(),
            app_events: w.counters.app_events,
            overruns: realtime.map_or(0, |r| r.overruns),
            max_lag_ms: realtime.map_or(0.0, |r| r.max_lag.as_secs_f64() * 1e3),
            injected: realtime.map_or(0, |r| r.injected),
            ues: w.ran.ue_count(),
            contexts_started: w.mec.contexts().count() + w.mec.retired().len(),
            notifications: w.counters.notifications,
            callbacks_sent: w.counters.callbacks_sent,
            lost_messages: w.counters.lost_messages,
            dropped_messages: w.counters.dropped_messages,
            handovers: w.ran.handover_count(),
            services,
            streams: w.stats.streams().map(|(n, r)| (n.to_string(), r.len())).collect(),
        }
    }
}

/// Builds and runs `cfg` in simulated time. Wall time covers both.
pub fn run_sim(cfg: &ScenarioConfig) -> Result<(Engine<World>, Manifest), ScenarioError> {
    if cfg.mode != RunMode::Sim {
        return Err(ScenarioError::Build(
            "real-time scenarios run through the gateway".into(),
        ));
    }
    cfg.validate().map_err(ScenarioError::Validation)?;
    let started = Instant::now();
    let mut engine = build(cfg)?;
    engine.run_until(SimTime::from_secs_f64(cfg.duration));
    let manifest = Manifest::new(cfg, &engine, started.elapsed(), None);
    Ok((engine, manifest))
}

/// File name component for a stream.
pub fn stream_file_stem(stream: &str) -> String {
    stream
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> ScenarioError + '_ {
    move |e| ScenarioError::Output {
        path: path.to_path_buf(),
        source: e.into(),
    }
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> ScenarioError + '_ {
    move |source| ScenarioError::Output {
        path: path.to_path_buf(),
        source,
    }
}

fn secs(t: SimTime) -> String {
    t.as_secs_f64().to_string()
}

fn opt<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map(ToString::to_string).unwrap_or_default()
}

fn write_stream(path: &Path, records: &[StatRecord]) -> Result<(), ScenarioError> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    w.write_record(["time", "value", "app", "host", "service", "ue"])
        .map_err(csv_err(path))?;
    for r in records {
        let l = &r.labels;
        w.write_record([
            secs(r.time),
            r.value.to_string(),
            opt(&l.app),
            opt(&l.host),
            opt(&l.service),
            opt(&l.ue),
        ])
        .map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

/// Sorted values with their empirical quantiles `i/n`.
pub fn cdf_rows(values: &[f64]) -> Vec<(f64, f64)> {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| !x.is_nan()).collect();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    v.into_iter()
        .enumerate()
        .map(|(i, x)| (x, (i + 1) as f64 / n))
        .collect()
}

fn write_cdf(path: &Path, records: &[StatRecord]) -> Result<(), ScenarioError> {
    let values: Vec<f64> = records.iter().map(|r| r.value).collect();
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    w.write_record(["value", "quantile"]).map_err(csv_err(path))?;
    for (x, q) in cdf_rows(&values) {
        w.write_record([x.to_string(), q.to_string()]).map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

/// Writes every result file into `dir` and returns their paths.
pub fn write_outputs(
    cfg: &ScenarioConfig,
    world: &World,
    manifest: &Manifest,
    dir: &Path,
) -> Result<Vec<PathBuf>, ScenarioError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut written = Vec::new();
    for (name, records) in world.stats.streams() {
        let stem = stream_file_stem(name);
        let path = dir.join(format!("{stem}.csv"));
        write_stream(&path, records)?;
        written.push(path);
        if cfg.stats.cdf.is_empty() || cfg.stats.cdf.iter().any(|c| c == name) {
            let path = dir.join(format!("{stem}.cdf.csv"));
            write_cdf(&path, records)?;
            written.push(path);
        }
    }

    let path = dir.join("timeline.csv");
    let mut w = csv::Writer::from_path(&path).map_err(csv_err(&path))?;
    w.write_record(["time", "step", "ue", "context"]).map_err(csv_err(&path))?;
    for t in &world.timeline {
        w.write_record([secs(t.time), t.step.clone(), opt(&t.ue), opt(&t.context)])
            .map_err(csv_err(&path))?;
    }
    w.flush().map_err(io_err(&path))?;
    written.push(path);

    let path = dir.join("manifest.json");
    let json = serde_json::to_string_pretty(manifest).expect("manifest serializes");
    fs::write(&path, json + "\n").map_err(io_err(&path))?;
    written.push(path);
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cdf_rows_are_a_distribution() {
        let rows = cdf_rows(&[3.0, 1.0, 2.0, 2.0]);
        assert_eq!(rows, vec![(1.0, 0.25), (2.0, 0.5), (2.0, 0.75), (3.0, 1.0)]);
        assert!(cdf_rows(&[]).is_empty());
    }

    #[test]
    fn stream_names_become_safe_file_names() {
        assert_eq!(stream_file_stem("fg_response-time"), "fg_response-time");
        assert_eq!(stream_file_stem("a/b c"), "a_b_c");
    }

    #[test]
    fn empty_scenario_runs_without_app_events() {
        let cfg = ScenarioConfig::parse("version = 1\nduration = 10.0\n", None).unwrap();
        let (engine, m) = run_sim(&cfg).unwrap();
        assert_eq!(m.app_events, 0);
        assert_eq!(engine.now(), SimTime::from_secs_f64(10.0));
        let dir = tempfile::tempdir().unwrap();
        let files = write_outputs(&cfg, engine.model(), &m, dir.path()).unwrap();
        assert_eq!(files.len(), 2);
        let json: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
        assert_eq!(json["app_events"], 0);
        assert_eq!(json["mode"], "sim");
    }
}
