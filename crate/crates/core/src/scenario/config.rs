//! Scenario files: a versioned TOML document describing the whole system.
//!
//! ```toml
//! version = 1
//! name = "example"
//! seed = 7
//! duration = 60.0            # simulated seconds
//! mode = "sim"               # or "realtime"
//! pace = 1.0                 # realtime only: simulated seconds per wall second
//!
//! [mec]
//! instantiation_delay = 0.1
//! termination_delay = 0.05
//!
//! [[cells]]
//! id = 1
//! position = [0.0, 0.0, 0.0]
//!
//! [[hosts]]
//! id = 1
//! capacity = { cpu = 1000.0 }
//! scheduling = "segregation"    # or "fair-sharing"
//!
//! [[services]]
//! name = "LocationService"      # or "RNIS"
//! host = 1
//! service_time = { dist = "exponential", mean = 0.005 }
//! background = { mode = "generator", apps = 100, rate = 0.024 }
//!
//! [[apps]]
//! name = "Probe"
//! services = ["LocationService"]
//! compute = { cpu = 10.0 }
//! behavior = { kind = "load", service = "LocationService", arrivals = { kind = "periodic", period = 0.5 } }
//!
//! [[ues]]
//! id = 1
//! position = [10.0, 0.0, 0.0]
//! mobility = { kind = "static" }
//! app = { kind = "launcher", app = "Probe" }
//! ```
//!
//! [`ScenarioConfig::validate`] reports every violated invariant at once.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::net::Ipv4Addr;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::compute::{ResourceVector, SchedulingMode};
use crate::ran::{Position, TransportProfile};
use crate::services::{Endpoint, LOCATION_SERVICE, RNIS};
use crate::world::{Arrivals, LoadRequest, RunMode};

use super::ScenarioError;

pub const CONFIG_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub version: u32,
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    /// Simulated seconds.
    pub duration: f64,
    #[serde(default)]
    pub mode: RunMode,
    #[serde(default = "one")]
    pub pace: f64,
    #[serde(default = "default_period")]
    pub mobility_period: f64,
    #[serde(default = "default_period")]
    pub l2_period: f64,
    #[serde(default)]
    pub mec: MecConfig,
    #[serde(default)]
    pub cells: Vec<CellConfig>,
    #[serde(default)]
    pub hosts: Vec<HostConfig>,
    #[serde(default)]
    pub services: Vec<ServiceConfig>,
    #[serde(default)]
    pub apps: Vec<AppConfig>,
    #[serde(default)]
    pub ues: Vec<UeConfig>,
    #[serde(default)]
    pub stats: StatsConfig,
    /// Directory relative paths resolve against; set by the loader.
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

fn one() -> f64 {
    1.0
}

fn default_period() -> f64 {
    crate::ran::DEFAULT_MOBILITY_PERIOD
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MecConfig {
    #[serde(default = "default_instantiation")]
    pub instantiation_delay: f64,
    #[serde(default = "default_termination")]
    pub termination_delay: f64,
    /// Hosts must offer every service an app requires.
    #[serde(default = "yes")]
    pub strict_placement: bool,
}

fn default_instantiation() -> f64 {
    0.1
}

fn default_termination() -> f64 {
    0.05
}

fn yes() -> bool {
    true
}

impl Default for MecConfig {
    fn default() -> Self {
        MecConfig {
            instantiation_delay: default_instantiation(),
            termination_delay: default_termination(),
            strict_placement: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellConfig {
    pub id: u32,
    pub position: [f64; 3],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HostConfig {
    pub id: u32,
    pub capacity: ResourceVector,
    #[serde(default)]
    pub scheduling: SchedulingMode,
    #[serde(default)]
    pub address: Option<Ipv4Addr>,
    /// CPU rate held by an always-active dummy load.
    #[serde(default)]
    pub dummy_load: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "dist", rename_all = "lowercase", deny_unknown_fields)]
pub enum ServiceTimeConfig {
    Exponential { mean: f64 },
    Constant { mean: f64 },
}

impl ServiceTimeConfig {
    pub fn mean(&self) -> f64 {
        match self {
            ServiceTimeConfig::Exponential { mean } | ServiceTimeConfig::Constant { mean } => *mean,
        }
    }

    pub fn mu(&self) -> f64 {
        1.0 / self.mean()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackgroundMode {
    /// Every background app is simulated: one MEC app per static UE.
    Explicit,
    /// Background load is folded into the service-time sampler.
    Generator,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackgroundConfig {
    pub mode: BackgroundMode,
    /// Number of background apps.
    pub apps: u32,
    /// Poisson request rate per background app, 1/s.
    pub rate: f64,
    /// Foreground rate assumed by the generator. Derived from the load apps
    /// targeting this service when absent.
    #[serde(default)]
    pub lambda_f: Option<f64>,
    #[serde(default)]
    pub request: LoadRequest,
    /// CPU rate reserved by each explicit background app.
    #[serde(default = "one")]
    pub cpu: f64,
}

impl BackgroundConfig {
    pub fn lambda_b(&self) -> f64 {
        self.apps as f64 * self.rate
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServiceConfig {
    pub name: String,
    pub host: u32,
    pub service_time: ServiceTimeConfig,
    /// Waiting-room size; unbounded when absent.
    #[serde(default)]
    pub capacity: Option<usize>,
    #[serde(default)]
    pub background: Option<BackgroundConfig>,
}

/// Built-in MEC app implementations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum AppBehavior {
    Load {
        service: String,
        arrivals: Arrivals,
        #[serde(default)]
        request: LoadRequest,
        #[serde(default = "default_stream")]
        stream: String,
    },
    Echo {
        #[serde(default)]
        instructions: Option<f64>,
    },
    WarningAlert,
}

fn default_stream() -> String {
    "response_time".to_string()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AppConfig {
    pub name: String,
    /// Defaults to the name.
    #[serde(default)]
    pub id: Option<String>,
    #[serde(default)]
    pub provider: String,
    #[serde(default)]
    pub services: Vec<String>,
    #[serde(default)]
    pub compute: ResourceVector,
    #[serde(default)]
    pub joinable: bool,
    /// Address of an app running outside the simulator.
    #[serde(default)]
    pub endpoint: Option<Endpoint>,
    /// Simulated implementation; absent for external apps.
    #[serde(default)]
    pub behavior: Option<AppBehavior>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum MobilityConfig {
    Static,
    Linear {
        velocity: [f64; 3],
    },
    Waypoints {
        points: Vec<[f64; 3]>,
        speed: f64,
    },
    /// Records for this UE from a `time ue x y z` trace file.
    Trace {
        file: PathBuf,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum UeAppConfig {
    Launcher {
        app: String,
        #[serde(default)]
        start: f64,
        #[serde(default)]
        stop_after: Option<f64>,
    },
    EchoClient {
        app: String,
        period: f64,
        #[serde(default)]
        start: f64,
    },
    DangerZone {
        app: String,
        center: [f64; 3],
        radius: f64,
        #[serde(default)]
        start: f64,
    },
}

impl UeAppConfig {
    pub fn app(&self) -> &str {
        match self {
            UeAppConfig::Launcher { app, .. }
            | UeAppConfig::EchoClient { app, .. }
            | UeAppConfig::DangerZone { app, .. } => app,
        }
    }

    pub fn start(&self) -> f64 {
        match self {
            UeAppConfig::Launcher { start, .. }
            | UeAppConfig::EchoClient { start, .. }
            | UeAppConfig::DangerZone { start, .. } => *start,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UeConfig {
    pub id: u32,
    #[serde(default)]
    pub name: Option<String>,
    pub position: [f64; 3],
    #[serde(default = "static_mobility")]
    pub mobility: MobilityConfig,
    #[serde(default)]
    pub transport: TransportProfile,
    #[serde(default)]
    pub app: Option<UeAppConfig>,
}

fn static_mobility() -> MobilityConfig {
    MobilityConfig::Static
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StatsConfig {
    /// Streams that get a CDF file; every stream when empty.
    #[serde(default)]
    pub cdf: Vec<String>,
}

/// One violated invariant.
#[derive(Clone, Debug, PartialEq)]
pub struct ValidationError {
    /// Dotted path of the offending field.
    pub field: String,
    pub kind: ValidationKind,
}

#[derive(Clone, Debug, PartialEq)]
pub enum ValidationKind {
    UnsupportedVersion(u32),
    Invalid(String),
    Duplicate(String),
    Dangling(String),
    Unstable { load: f64, mu: f64 },
}

impl fmt::Display for ValidationError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            ValidationKind::UnsupportedVersion(v) => write!(
                f,
                "{}: unsupported version {v}, expected {CONFIG_VERSION}",
                self.field
            ),
            ValidationKind::Invalid(why) => write!(f, "{}: invalid: {why}", self.field),
            ValidationKind::Duplicate(what) => write!(f, "{}: duplicate {what}", self.field),
            ValidationKind::Dangling(what) => write!(f, "{}: dangling reference to {what}", self.field),
            ValidationKind::Unstable { load, mu } => write!(
                f,
                "{}: unstable: offered load {load}/s is not below service rate {mu}/s",
                self.field
            ),
        }
    }
}

impl ScenarioConfig {
    /// Parses TOML text. Relative paths resolve against `base_dir`.
    pub fn parse(text: &str, base_dir: Option<&Path>) -> Result<Self, ScenarioError> {
        let mut cfg: ScenarioConfig = toml::from_str(text).map_err(|e| {
            let (line, column) = e
                .span()
                .map(|s| line_col(text, s.start))
                .unwrap_or((0, 0));
            ScenarioError::Parse {
                line,
                column,
                message: e.message().to_string(),
            }
        })?;
        cfg.base_dir = base_dir.map(Path::to_path_buf);
        Ok(cfg)
    }

    /// Reads, parses and validates a scenario file.
    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let cfg = Self::parse(&text, path.parent())?;
        cfg.validate().map_err(ScenarioError::Validation)?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        match &self.base_dir {
            Some(dir) if p.is_relative() => dir.join(p),
            _ => p.to_path_buf(),
        }
    }

    pub fn app(&self, name: &str) -> Option<&AppConfig> {
        self.apps.iter().find(|a| a.name == name)
    }

    /// Foreground request rate offered to services named `service`: one
    /// term per load app started by a UE launcher.
    pub fn derived_lambda_f(&self, service: &str) -> f64 {
        self.ues
            .iter()
            .filter_map(|u| match &u.app {
                Some(UeAppConfig::Launcher { app, .. }) => self.app(app),
                _ => None,
            })
            .filter_map(|a| match &a.behavior {
                Some(AppBehavior::Load { service: s, arrivals, .. }) if s == service => {
                    Some(match arrivals {
                        Arrivals::Periodic { period, .. } => 1.0 / period,
                        Arrivals::Poisson { rate } => *rate,
                    })
                }
                _ => None,
            })
            .sum()
    }

    /// Foreground rate used for `svc`'s background model.
    pub fn lambda_f(&self, svc: &ServiceConfig) -> f64 {
        svc.background
            .as_ref()
            .and_then(|b| b.lambda_f)
            .unwrap_or_else(|| self.derived_lambda_f(&svc.name))
    }

    /// Checks every invariant and returns all violations.
    pub fn validate(&self) -> Result<(), Vec<ValidationError>> {
        let mut errs = Vec::new();
        let mut err = |field: String, kind: ValidationKind| errs.push(ValidationError { field, kind });
        let positive = |v: f64| v.is_finite() && v > 0.0;
        let non_negative = |v: f64| v.is_finite() && v >= 0.0;

        if self.version != CONFIG_VERSION {
            err("version".into(), ValidationKind::UnsupportedVersion(self.version));
        }
        if !positive(self.duration) {
            err("duration".into(), ValidationKind::Invalid("must be positive".into()));
        }
        if !positive(self.pace) {
            err("pace".into(), ValidationKind::Invalid("must be positive".into()));
        }
        for (f, v) in [("mobility_period", self.mobility_period), ("l2_period", self.l2_period)] {
            if !positive(v) {
                err(f.into(), ValidationKind::Invalid("must be positive".into()));
            }
        }
        for (f, v) in [
            ("mec.instantiation_delay", self.mec.instantiation_delay),
            ("mec.termination_delay", self.mec.termination_delay),
        ] {
            if !non_negative(v) {
                err(f.into(), ValidationKind::Invalid("must be non-negative".into()));
            }
        }

        let mut cells = BTreeSet::new();
        for (i, c) in self.cells.iter().enumerate() {
            if !cells.insert(c.id) {
                err(format!("cells[{i}].id"), ValidationKind::Duplicate(format!("cell {}", c.id)));
            }
            if !c.position.iter().all(|v| v.is_finite()) {
                err(format!("cells[{i}].position"), ValidationKind::Invalid("not finite".into()));
            }
        }

        let mut hosts = BTreeMap::new();
        for (i, h) in self.hosts.iter().enumerate() {
            if hosts.insert(h.id, h).is_some() {
                err(format!("hosts[{i}].id"), ValidationKind::Duplicate(format!("host {}", h.id)));
            }
            if !h.capacity.is_valid() {
                err(format!("hosts[{i}].capacity"), ValidationKind::Invalid("negative or not finite".into()));
            }
            if let Some(d) = h.dummy_load {
                if !non_negative(d) || d > h.capacity.cpu {
                    err(
                        format!("hosts[{i}].dummy_load"),
                        ValidationKind::Invalid(format!("must lie in [0, {}]", h.capacity.cpu)),
                    );
                }
            }
        }

        let mut offered = BTreeSet::new();
        for (i, s) in self.services.iter().enumerate() {
            let at = |f: &str| format!("services[{i}].{f}");
            if s.name != LOCATION_SERVICE && s.name != RNIS {
                err(
                    at("name"),
                    ValidationKind::Invalid(format!("unknown service '{}', expected {LOCATION_SERVICE} or {RNIS}", s.name)),
                );
            }
            if !hosts.contains_key(&s.host) {
                err(at("host"), ValidationKind::Dangling(format!("host {}", s.host)));
            }
            if !offered.insert((s.name.clone(), s.host)) {
                err(at("name"), ValidationKind::Duplicate(format!("{} on host {}", s.name, s.host)));
            }
            if !positive(s.service_time.mean()) {
                err(at("service_time.mean"), ValidationKind::Invalid("must be positive".into()));
                continue;
            }
            if s.capacity == Some(0) {
                err(at("capacity"), ValidationKind::Invalid("must be at least 1".into()));
            }
            let Some(bg) = &s.background else { continue };
            if !non_negative(bg.rate) {
                err(at("background.rate"), ValidationKind::Invalid("must be non-negative".into()));
                continue;
            }
            if bg.mode == BackgroundMode::Generator
                && !matches!(s.service_time, ServiceTimeConfig::Exponential { .. })
            {
                err(
                    at("service_time.dist"),
                    ValidationKind::Invalid("generator mode needs exponential service times".into()),
                );
            }
            if bg.lambda_f.is_some_and(|l| !non_negative(l)) {
                err(at("background.lambda_f"), ValidationKind::Invalid("must be non-negative".into()));
            }
            if !positive(bg.cpu) {
                err(at("background.cpu"), ValidationKind::Invalid("must be positive".into()));
            }
            let load = self.lambda_f(s) + bg.lambda_b();
            let mu = s.service_time.mu();
            if load >= mu {
                err(at("background"), ValidationKind::Unstable { load, mu });
            }
            if bg.mode == BackgroundMode::Explicit {
                if let Some(h) = hosts.get(&s.host) {
                    let need = bg.apps as f64 * bg.cpu;
                    if need > h.capacity.cpu - h.dummy_load.unwrap_or(0.0) {
                        err(
                            at("background.apps"),
                            ValidationKind::Invalid(format!("{need} cpu does not fit on host {}", s.host)),
                        );
                    }
                }
            }
        }

        let mut apps = BTreeSet::new();
        let mut app_ids = BTreeSet::new();
        for (i, a) in self.apps.iter().enumerate() {
            let at = |f: &str| format!("apps[{i}].{f}");
            if a.name.is_empty() || a.name.contains(char::is_whitespace) {
                err(at("name"), ValidationKind::Invalid("must be one non-empty word".into()));
            }
            if !apps.insert(a.name.as_str()) {
                err(at("name"), ValidationKind::Duplicate(format!("app {}", a.name)));
            }
            let id = a.id.as_deref().unwrap_or(&a.name);
            if !app_ids.insert(id) {
                err(at("id"), ValidationKind::Duplicate(format!("app id {id}")));
            }
            if !a.compute.is_valid() {
                err(at("compute"), ValidationKind::Invalid("negative or not finite".into()));
            }
            for (j, s) in a.services.iter().enumerate() {
                if !self.services.iter().any(|x| &x.name == s) {
                    err(format!("apps[{i}].services[{j}]"), ValidationKind::Dangling(format!("service {s}")));
                }
            }
            match (&a.endpoint, &a.behavior) {
                (Some(_), Some(_)) => err(
                    at("behavior"),
                    ValidationKind::Invalid("an external app has no simulated behavior".into()),
                ),
                (None, None) => err(
                    at("behavior"),
                    ValidationKind::Invalid("needs a behavior or an external endpoint".into()),
                ),
                _ => {}
            }
            match &a.behavior {
                Some(AppBehavior::Load { service, arrivals, .. }) => {
                    if !self.services.iter().any(|x| &x.name == service) {
                        err(at("behavior.service"), ValidationKind::Dangling(format!("service {service}")));
                    }
                    let ok = match arrivals {
                        Arrivals::Periodic { period, offset } => positive(*period) && non_negative(*offset),
                        Arrivals::Poisson { rate } => positive(*rate),
                    };
                    if !ok {
                        err(at("behavior.arrivals"), ValidationKind::Invalid("rates and periods must be positive".into()));
                    }
                }
                Some(AppBehavior::Echo { instructions: Some(n) }) if !positive(*n) => {
                    err(at("behavior.instructions"), ValidationKind::Invalid("must be positive".into()));
                }
                _ => {}
            }
        }

        let mut ues = BTreeSet::new();
        for (i, u) in self.ues.iter().enumerate() {
            let at = |f: &str| format!("ues[{i}].{f}");
            if !ues.insert(u.id) {
                err(at("id"), ValidationKind::Duplicate(format!("UE {}", u.id)));
            }
            if !u.position.iter().all(|v| v.is_finite()) {
                err(at("position"), ValidationKind::Invalid("not finite".into()));
            }
            if let Err(e) = u.transport.validate() {
                err(at("transport"), ValidationKind::Invalid(e.to_string()));
            }
            match &u.mobility {
                MobilityConfig::Static => {}
                MobilityConfig::Linear { velocity } => {
                    if !velocity.iter().all(|v| v.is_finite()) {
                        err(at("mobility.velocity"), ValidationKind::Invalid("not finite".into()));
                    }
                }
                MobilityConfig::Waypoints { points, speed } => {
                    if points.is_empty() || !positive(*speed) {
                        err(at("mobility"), ValidationKind::Invalid("needs points and a positive speed".into()));
                    }
                }
                MobilityConfig::Trace { file } => {
                    if !self.resolve(file).is_file() {
                        err(at("mobility.file"), ValidationKind::Dangling(format!("file {}", file.display())));
                    }
                }
            }
            let Some(app) = &u.app else { continue };
            if self.app(app.app()).is_none() {
                err(at("app.app"), ValidationKind::Dangling(format!("app {}", app.app())));
            }
            if !non_negative(app.start()) {
                err(at("app.start"), ValidationKind::Invalid("must be non-negative".into()));
            }
            match app {
                UeAppConfig::Launcher { stop_after: Some(t), .. } if !non_negative(*t) => {
                    err(at("app.stop_after"), ValidationKind::Invalid("must be non-negative".into()))
                }
                UeAppConfig::EchoClient { period, .. } if !positive(*period) => {
                    err(at("app.period"), ValidationKind::Invalid("must be positive".into()))
                }
                UeAppConfig::DangerZone { radius, center, .. }
                    if !positive(*radius) || !center.iter().all(|v| v.is_finite()) =>
                {
                    err(at("app.radius"), ValidationKind::Invalid("zone needs a finite center and positive radius".into()))
                }
                _ => {}
            }
        }
        if !self.ues.is_empty() && self.cells.is_empty() {
            err("cells".into(), ValidationKind::Invalid("UEs need at least one cell".into()));
        }
        if self.services.iter().any(|s| s.background.as_ref().is_some_and(|b| b.mode == BackgroundMode::Explicit && b.apps > 0))
            && self.cells.is_empty()
        {
            err("cells".into(), ValidationKind::Invalid("explicit background apps need a cell".into()));
        }

        if errs.is_empty() {
            Ok(())
        } else {
            Err(errs)
        }
    }
}

pub(crate) fn to_position(p: [f64; 3]) -> Position {
    Position::new(p[0], p[1], p[2])
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.len() - before.rfind('\n').map_or(0, |i| i + 1) + 1;
    (line, column)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "version = 1\nduration = 10.0\n";

    fn with_service(extra: &str) -> String {
        format!(
            "version = 1\nduration = 10.0\n\
             [[cells]]\nid = 1\nposition = [0.0, 0.0, 0.0]\n\
             [[hosts]]\nid = 1\ncapacity = {{ cpu = 1000.0 }}\n\
             [[services]]\nname = \"LocationService\"\nhost = 1\n\
             service_time = {{ dist = \"exponential\", mean = 0.1 }}\n{extra}"
        )
    }

    fn kinds(text: &str) -> Vec<ValidationKind> {
        ScenarioConfig::parse(text, None)
            .unwrap()
            .validate()
            .unwrap_err()
            .into_iter()
            .map(|e| e.kind)
            .collect()
    }

    #[test]
    fn minimal_document_is_valid() {
        let cfg = ScenarioConfig::parse(MINIMAL, None).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.mode, RunMode::Sim);
        assert_eq!(cfg.mec, MecConfig::default());
    }

    #[test]
    fn parse_error_points_at_the_line() {
        let err = ScenarioConfig::parse("version = 1\nduration = \"long\"\n", None).unwrap_err();
        match err {
            ScenarioError::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        let err = ScenarioConfig::parse("version = 1\nduration = 1.0\nbogus = 3\n", None).unwrap_err();
        assert!(matches!(err, ScenarioError::Parse { line: 3, .. }), "{err:?}");
    }

    #[test]
    fn unstable_background_is_rejected() {
        // mu = 10, lambda_b = 100 * 0.1
        let text = with_service("background = { mode = \"generator\", apps = 100, rate = 0.1 }\n");
        let k = kinds(&text);
        assert!(matches!(k[..], [ValidationKind::Unstable { .. }]), "{k:?}");
        let msg = ScenarioConfig::parse(&text, None).unwrap().validate().unwrap_err()[0].to_string();
        assert!(msg.contains("unstable"), "{msg}");

        let stable = with_service("background = { mode = \"generator\", apps = 99, rate = 0.1 }\n");
        ScenarioConfig::parse(&stable, None).unwrap().validate().unwrap();
    }

    #[test]
    fn foreground_load_counts_towards_stability() {
        let text = with_service(
            "background = { mode = \"generator\", apps = 90, rate = 0.1 }\n\
             [[apps]]\nname = \"Fg\"\nbehavior = { kind = \"load\", service = \"LocationService\", \
             arrivals = { kind = \"periodic\", period = 0.5 } }\n\
             [[ues]]\nid = 1\nposition = [0.0, 0.0, 0.0]\napp = { kind = \"launcher\", app = \"Fg\" }\n",
        );
        let cfg = ScenarioConfig::parse(&text, None).unwrap();
        assert_eq!(cfg.derived_lambda_f("LocationService"), 2.0);
        // 9 + 2 >= 10
        assert!(matches!(kinds(&text)[..], [ValidationKind::Unstable { .. }]));
    }

    #[test]
    fn every_violation_is_reported() {
        let text = "version = 2\nduration = -1.0\n\
                    [[services]]\nname = \"RNIS\"\nhost = 9\n\
                    service_time = { dist = \"constant\", mean = 0.1 }\n\
                    [[ues]]\nid = 1\nposition = [0.0, 0.0, 0.0]\napp = { kind = \"launcher\", app = \"Nope\" }\n";
        let errs = ScenarioConfig::parse(text, None).unwrap().validate().unwrap_err();
        let fields: Vec<&str> = errs.iter().map(|e| e.field.as_str()).collect();
        assert_eq!(
            fields,
            vec!["version", "duration", "services[0].host", "ues[0].app.app", "cells"]
        );
        assert!(matches!(errs[2].kind, ValidationKind::Dangling(_)));
    }

    #[test]
    fn generator_requires_exponential_service_times() {
        let text = with_service("background = { mode = \"generator\", apps = 1, rate = 0.1 }\n")
            .replace("\"exponential\"", "\"constant\"");
        assert!(matches!(kinds(&text)[..], [ValidationKind::Invalid(_)]));
    }

    #[test]
    fn round_trips_through_toml() {
        let text = with_service("background = { mode = \"explicit\", apps = 3, rate = 0.5 }\n");
        let cfg = ScenarioConfig::parse(&text, None).unwrap();
        let again = ScenarioConfig::parse(&cfg.to_toml(), None).unwrap();
        assert_eq!(cfg, again);
    }
}
