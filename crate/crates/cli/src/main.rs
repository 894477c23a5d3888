//! `mecsim`: runs scenarios, the built-in experiments, and config checks.
//!
//! Exit codes: 0 success, 2 usage, 3 unreadable or malformed scenario,
//! 4 invalid scenario, 5 runtime failure, 6 cannot write results,
//! 7 an experiment ran but its check failed.

use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use thiserror::Error;

use mecsim::scenario::{
    bundled, cdf_rows, experiment_bg_validation, experiment_danger_zone, run_sim, write_outputs,
    BgValidationParams, BgValidationReport, ScenarioConfig, ScenarioError, BUNDLED, DANGER_ZONE_STEPS,
};
use mecsim::world::RunMode;
use mecsim_gateway::loopback::{run_live_danger_zone, LiveDangerZone, LiveError};
use mecsim_gateway::{GatewayOptions, RealtimeRun, RunError};

/// Pass thresholds of `experiment bg-validation`.
const MAX_KS: f64 = 0.05;
const MAX_GENERATOR_SPREAD: f64 = 0.20;
const MIN_WALL_RATIO: f64 = 5.0;

#[derive(Parser)]
#[command(name = "mecsim", version, about = "Discrete-event simulator of a MEC system")]
struct Cli {
    /// More log output; repeat for debug logs.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario file or a bundled scenario by name.
    Run(RunArgs),
    /// Run a built-in experiment and check its outcome.
    #[command(subcommand)]
    Experiment(Experiment),
    /// Parse and validate a scenario without running it.
    Validate {
        scenario: String,
    },
    /// List the bundled scenarios.
    Scenarios,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Sim,
    Realtime,
}

#[derive(Args)]
struct RunArgs {
    /// Path to a scenario file, or the name of a bundled scenario.
    scenario: String,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    mode: Option<Mode>,
    /// Simulated seconds per wall second in real-time mode.
    #[arg(long)]
    pace: Option<f64>,
    /// Overrides the scenario duration, in simulated seconds.
    #[arg(long)]
    duration: Option<f64>,
    /// Results directory; defaults to results/<scenario name>.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    gateway: GatewayArgs,
}

#[derive(Args)]
struct GatewayArgs {
    /// HTTP listen address of the gateway in real-time mode.
    #[arg(long, default_value = "127.0.0.1:8080")]
    http: SocketAddr,
    /// UE n gets device port base+n; free ports when absent.
    #[arg(long)]
    device_base_port: Option<u16>,
}

impl GatewayArgs {
    fn options(&self) -> GatewayOptions {
        GatewayOptions {
            http_addr: self.http,
            device_ip: self.http.ip(),
            device_base_port: self.device_base_port,
            ..GatewayOptions::default()
        }
    }
}

#[derive(Subcommand)]
enum Experiment {
    /// Compare explicit background apps with the background generator.
    BgValidation(BgArgs),
    /// Run the danger-zone warning service and check its event sequence.
    DangerZone(DangerZoneArgs),
}

#[derive(Args)]
struct BgArgs {
    /// Background app counts.
    #[arg(long, value_delimiter = ',', default_value = "10,50,100,200,300")]
    counts: Vec<u32>,
    #[arg(long, default_value_t = 15)]
    reps: u32,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Overrides the simulated duration of each run.
    #[arg(long)]
    duration: Option<f64>,
    /// Directory for the report and foreground CDFs.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DangerZoneArgs {
    /// Scenario file or bundled name; defaults to the bundled danger-zone
    /// scenario for the chosen mode.
    #[arg(long)]
    scenario: Option<String>,
    /// Run against the wall clock with both apps outside the simulator.
    #[arg(long)]
    realtime: bool,
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    gateway: GatewayArgs,
}

#[derive(Debug, Error)]
enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Run(#[from] RunError),
    #[error(transparent)]
    Live(#[from] LiveError),
    #[error("cannot write {}: {source}", path.display())]
    Output { path: PathBuf, source: std::io::Error },
    #[error("check failed: {0}")]
    Check(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Scenario(e) | CliError::Run(RunError::Scenario(e)) | CliError::Live(LiveError::Run(RunError::Scenario(e))) => {
                scenario_code(e)
            }
            CliError::Run(RunError::NotRealtime(_)) => 2,
            CliError::Live(LiveError::NoApp(_) | LiveError::NoDevice(_)) => 4,
            CliError::Run(_) | CliError::Live(_) => 5,
            CliError::Output { .. } => 6,
            CliError::Check(_) => 7,
        }
    }
}

fn scenario_code(e: &ScenarioError) -> u8 {
    match e {
        ScenarioError::Io { .. } | ScenarioError::Parse { .. } => 3,
        ScenarioError::Validation(_) => 4,
        ScenarioError::Build(_) | ScenarioError::Sequence(_) => 5,
        ScenarioError::Output { .. } => 6,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let result = match cli.command {
        Command::Run(a) => run(a),
        Command::Experiment(Experiment::BgValidation(a)) => bg_validation(a),
        Command::Experiment(Experiment::DangerZone(a)) => danger_zone(a),
        Command::Validate { scenario } => validate(&scenario),
        Command::Scenarios => {
            for (name, _) in BUNDLED {
                println!("{name}");
            }
            Ok(())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

/// Loads a scenario from a path, falling back to a bundled name.
fn load(scenario: &str) -> Result<ScenarioConfig, CliError> {
    let path = Path::new(scenario);
    if !path.exists() {
        if let Some(cfg) = bundled(scenario) {
            return Ok(cfg);
        }
    }
    Ok(ScenarioConfig::load(path)?)
}

fn validate(scenario: &str) -> Result<(), CliError> {
    let cfg = load(scenario)?;
    cfg.validate().map_err(ScenarioError::Validation)?;
    println!(
        "{}: valid ({} cells, {} hosts, {} services, {} apps, {} UEs)",
        cfg.name,
        cfg.cells.len(),
        cfg.hosts.len(),
        cfg.services.len(),
        cfg.apps.len(),
        cfg.ues.len()
    );
    Ok(())
}

fn run(a: RunArgs) -> Result<(), CliError> {
    let mut cfg = load(&a.scenario)?;
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(m) = a.mode {
        cfg.mode = match m {
            Mode::Sim => RunMode::Sim,
            Mode::Realtime => RunMode::Realtime,
        };
    }
    if let Some(p) = a.pace {
        if !(p > 0.0 && p.is_finite()) {
            return Err(CliError::Usage(format!("--pace must be positive, got {p}")));
        }
        cfg.pace = p;
    }
    if let Some(d) = a.duration {
        cfg.duration = d;
    }
    let out = a.out.unwrap_or_else(|| Path::new("results").join(&cfg.name));

    let (engine, manifest) = match cfg.mode {
        RunMode::Sim => run_sim(&cfg)?,
        RunMode::Realtime => {
            let run = RealtimeRun::start(&cfg, &a.gateway.options())?;
            println!("gateway: http://{}/v1", run.info().http);
            for (ue, addr) in &run.info().devices {
                println!("device port {ue}: {addr}");
            }
            let o = run.join()?;
            (o.engine, o.manifest)
        }
    };
    let files = write_outputs(&cfg, engine.model(), &manifest, &out)?;
    println!(
        "{}: {:.1} simulated s in {:.3} wall s, {} events; {} files in {}",
        cfg.name,
        cfg.duration,
        manifest.wall_time_secs,
        manifest.events,
        files.len(),
        out.display()
    );
    Ok(())
}

fn write_file(path: &Path, contents: &[u8]) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|source| CliError::Output {
        path: path.to_path_buf(),
        source,
    })
}

fn write_bg_report(r: &BgValidationReport, dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|source| CliError::Output {
        path: dir.to_path_buf(),
        source,
    })?;
    let json = serde_json::to_vec_pretty(r).expect("report serializes");
    write_file(&dir.join("bg-validation.json"), &json)?;
    for ((count, mode), values) in &r.samples {
        let mut text = String::from("value,quantile\n");
        for (v, q) in cdf_rows(values) {
            text.push_str(&format!("{v},{q}\n"));
        }
        let mode = format!("{mode:?}").to_lowercase();
        write_file(&dir.join(format!("fg_cdf_{count}_{mode}.csv")), text.as_bytes())?;
    }
    Ok(())
}

fn bg_validation(a: BgArgs) -> Result<(), CliError> {
    if a.counts.is_empty() || a.reps == 0 {
        return Err(CliError::Usage("need at least one count and one repetition".into()));
    }
    let params = BgValidationParams {
        counts: a.counts,
        reps: a.reps,
        seed: a.seed,
        duration: a.duration,
    };
    let r = experiment_bg_validation(&params)?;
    println!(
        "mu = {} /s, {} /s per background app, {} s x {} reps",
        r.mu, r.rate_per_app, r.duration, r.reps
    );
    println!("{:>6} {:>8} {:>12} {:>12} {:>12} {:>12}", "count", "KS", "fg mean E", "fg mean G", "wall E [s]", "wall G [s]");
    for c in &r.counts {
        println!(
            "{:>6} {:>8.4} {:>12.6} {:>12.6} {:>12.4} {:>12.4}",
            c.count, c.ks, c.explicit_mean_response, c.generator_mean_response, c.explicit_wall.mean, c.generator_wall.mean
        );
    }
    println!(
        "generator spread {:.1}%, explicit monotone {}, explicit/generator at max count {:.1}",
        100.0 * r.generator_spread,
        r.explicit_monotone,
        r.ratio_at_max
    );
    if let Some(dir) = &a.out {
        write_bg_report(&r, dir)?;
    }

    let mut failed = Vec::new();
    for c in r.counts.iter().filter(|c| c.ks > MAX_KS) {
        failed.push(format!("KS {:.4} > {MAX_KS} at {} apps", c.ks, c.count));
    }
    if r.generator_spread >= MAX_GENERATOR_SPREAD {
        failed.push(format!("generator wall time spread {:.1}%", 100.0 * r.generator_spread));
    }
    if !r.explicit_monotone {
        failed.push("explicit wall time is not increasing".into());
    }
    if r.counts.len() > 1 && r.ratio_at_max < MIN_WALL_RATIO {
        failed.push(format!("wall time ratio {:.1} < {MIN_WALL_RATIO}", r.ratio_at_max));
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Check(failed.join("; ")))
    }
}

fn print_steps<'a>(label: &str, steps: impl Iterator<Item = (f64, &'a str)>) {
    println!("{label}");
    for (t, s) in steps {
        println!("  {t:>9.3}s  {s}");
    }
}

fn danger_zone(a: DangerZoneArgs) -> Result<(), CliError> {
    let default = if a.realtime { "danger-zone-live" } else { "danger-zone" };
    let mut cfg = load(a.scenario.as_deref().unwrap_or(default))?;
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if a.realtime {
        cfg.mode = RunMode::Realtime;
        let r = run_live_danger_zone(&cfg, &LiveDangerZone::default(), &a.gateway.options())?;
        print_steps(
            "wall-clock trace:",
            r.trace.iter().map(|e| (e.at.as_secs_f64(), e.step.as_str())),
        );
        println!("callbacks delivered: {}", r.outcome.gateway.callbacks_delivered);
        if r.passed() {
            println!("sequence complete ({} steps)", DANGER_ZONE_STEPS.len());
            return Ok(());
        }
        let mut why = Vec::new();
        if let Err(e) = &r.vehicle {
            why.push(format!("vehicle: {e}"));
        }
        if let Some(e) = &r.app_error {
            why.push(format!("app: {e}"));
        }
        match &r.sequence {
            Err(v) => why.push(v.to_string()),
            Ok(n) if *n < DANGER_ZONE_STEPS.len() => {
                why.push(format!("sequence stopped after {n} of {} steps", DANGER_ZONE_STEPS.len()))
            }
            Ok(_) => {}
        }
        if r.outcome.gateway.callbacks_delivered != 2 {
            why.push(format!("{} callbacks delivered", r.outcome.gateway.callbacks_delivered));
        }
        return Err(CliError::Check(why.join("; ")));
    }

    cfg.mode = RunMode::Sim;
    let r = experiment_danger_zone(&cfg)?;
    for v in &r.vehicles {
        print_steps(&format!("ue{}:", v.ue), v.steps.iter().map(|(t, s)| (*t, s.as_str())));
    }
    println!("notifications: {}", r.notifications);
    let incomplete: Vec<String> = r
        .vehicles
        .iter()
        .filter(|v| !v.is_complete())
        .map(|v| format!("ue{} stopped after {} of {} steps", v.ue, v.completed, DANGER_ZONE_STEPS.len()))
        .collect();
    if r.vehicles.is_empty() {
        return Err(CliError::Check("no vehicle ran the danger-zone app".into()));
    }
    if !incomplete.is_empty() {
        return Err(CliError::Check(incomplete.join("; ")));
    }
    println!("{} vehicle(s) completed the {}-step sequence", r.vehicles.len(), DANGER_ZONE_STEPS.len());
    Ok(())
}
