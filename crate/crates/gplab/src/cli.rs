//! Command-line front end: JSON-configured runs with flag overrides.
//!
//! Exit codes: 0 success, 2 configuration error, 3 model or geometry
//! error, 4 numeric or statistical failure. Reports are deterministic
//! JSON keyed only by configuration and seed; timing goes to stderr.

use crate::field::{default_spacing, snap_epsilon_down, FieldError, FieldModel};
use crate::grid::Window;
use crate::kernel::{self, KernelError, KernelSpec};
use crate::perc::{self, Adjacency, EventSpec, OccupancyGrid, PercError};
use crate::rng::substream;
use crate::stats::{self, Estimate, StatsError, Z_TWO_SIDED_95};
use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::PathBuf;
use std::time::Instant;

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Model(String),
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Model(_) => 3,
            CliError::Numeric(_) => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration: {m}"),
            CliError::Model(m) => write!(f, "model: {m}"),
            CliError::Numeric(m) => write!(f, "numeric: {m}"),
        }
    }
}

fn config_err(m: impl Into<String>) -> CliError {
    CliError::Config(m.into())
}

impl From<KernelError> for CliError {
    fn from(e: KernelError) -> Self {
        match e {
            KernelError::QuadratureNonConvergent { .. } => CliError::Numeric(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl From<FieldError> for CliError {
    fn from(e: FieldError) -> Self {
        CliError::Model(e.to_string())
    }
}

impl From<PercError> for CliError {
    fn from(e: PercError) -> Self {
        CliError::Model(e.to_string())
    }
}

impl From<StatsError> for CliError {
    fn from(e: StatsError) -> Self {
        CliError::Numeric(e.to_string())
    }
}

#[derive(Parser)]
#[command(name = "gplab", version, about = "Level-set percolation lab for smooth Gaussian fields")]
pub struct Args {
    #[command(subcommand)]
    pub cmd: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Print the parameter triple (s, ε, δ) for a truncation range.
    Schedule(ScheduleArgs),
    /// Estimate the probability of a connectivity event.
    Run(Box<RunArgs>),
}

#[derive(clap::Args)]
pub struct ScheduleArgs {
    /// Truncation range N.
    #[arg(long = "N")]
    pub n: f64,
    /// Ambient dimension.
    #[arg(long, default_value_t = 2)]
    pub d: usize,
    /// Sprinkling exponent η of the polynomial schedule.
    #[arg(long)]
    pub eta: Option<f64>,
    /// Kernel decay exponent β of the polynomial schedule.
    #[arg(long)]
    pub beta: Option<f64>,
    /// Use the squared-exponential schedule (needs --gamma and --c).
    #[arg(long)]
    pub bf_schedule: bool,
    /// Flag exponent γ.
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Gaussian rate c of the squared-exponential schedule.
    #[arg(long)]
    pub c: Option<f64>,
}

#[derive(clap::Args)]
pub struct RunArgs {
    /// JSON configuration file; flags override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, env = "GPLAB_SEED")]
    pub seed: Option<u64>,
    #[arg(long)]
    pub replicas: Option<u64>,
    /// Worker threads (0 uses every core).
    #[arg(long)]
    pub threads: Option<usize>,
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Occupancy level ℓ.
    #[arg(long, allow_negative_numbers = true)]
    pub level: Option<f64>,
    /// Truncation range N (omit in the config for the untruncated field).
    #[arg(long = "N")]
    pub truncation: Option<f64>,
    /// Cell side ε (snapped down to a power of two before use).
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Ternary resampling rate δ.
    #[arg(long)]
    pub delta: Option<f64>,
    /// Event: "full:r,R", "slab:r,R,M", or "cross:side".
    #[arg(long)]
    pub event: Option<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KernelConfig {
    /// "bargmann-fock", "rational-quadratic", or "tabulated".
    pub family: String,
    pub d: usize,
    pub beta: Option<f64>,
    /// CSV of (radius, value) rows for the tabulated family.
    pub table: Option<PathBuf>,
}

impl Default for KernelConfig {
    fn default() -> Self {
        KernelConfig { family: "bargmann-fock".into(), d: 2, beta: None, table: None }
    }
}

impl KernelConfig {
    pub fn to_spec(&self) -> Result<KernelSpec, CliError> {
        match self.family.as_str() {
            "bargmann-fock" => Ok(KernelSpec::bargmann_fock(self.d)),
            "rational-quadratic" => {
                let beta = self.beta.ok_or_else(|| config_err("rational-quadratic needs \"beta\""))?;
                Ok(KernelSpec::rational_quadratic(beta, self.d)?)
            }
            "tabulated" => {
                let beta = self.beta.ok_or_else(|| config_err("tabulated kernel needs \"beta\""))?;
                let path = self
                    .table
                    .as_ref()
                    .ok_or_else(|| config_err("tabulated kernel needs \"table\""))?;
                let text = std::fs::read_to_string(path)
                    .map_err(|e| config_err(format!("reading {}: {e}", path.display())))?;
                Ok(KernelSpec::tabulated_from_csv(&text, beta, self.d)?)
            }
            other => Err(config_err(format!("unknown kernel family \"{other}\""))),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub kernel: KernelConfig,
    /// Truncation range N; absent means the untruncated field.
    pub truncation: Option<f64>,
    pub epsilon: f64,
    pub delta: f64,
    /// Field spacing h; defaults to ε split into steps of at most 1/4.
    pub spacing: Option<f64>,
    /// Half-side of the centered observation window.
    pub window_half: f64,
    pub level: f64,
    pub event: String,
    /// "nearest" or "star".
    pub adjacency: String,
    pub seed: u64,
    pub replicas: u64,
    pub threads: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            kernel: KernelConfig::default(),
            truncation: None,
            epsilon: 0.25,
            delta: 0.0,
            spacing: None,
            window_half: 8.0,
            level: 0.0,
            event: "full:1,4".into(),
            adjacency: "nearest".into(),
            seed: 1,
            replicas: 1000,
            threads: 0,
        }
    }
}

pub fn parse_event(text: &str, d: usize) -> Result<EventSpec, CliError> {
    let shape = "events look like full:r,R or slab:r,R,M or cross:side";
    let (kind, rest) = text
        .split_once(':')
        .ok_or_else(|| config_err(format!("event \"{text}\": {shape}")))?;
    let nums: Vec<f64> = rest
        .split(',')
        .map(|t| t.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|e| config_err(format!("event \"{text}\": {e}")))?;
    let positive = |v: f64, name: &str| {
        if v > 0.0 {
            Ok(v)
        } else {
            Err(config_err(format!("event \"{text}\": {name} must be positive")))
        }
    };
    match (kind, nums.as_slice()) {
        ("full", [r, big_r]) => {
            positive(*r, "r")?;
            if big_r <= r {
                return Err(config_err(format!("event \"{text}\": R must exceed r")));
            }
            Ok(EventSpec::FullSpace { r: *r, big_r: *big_r })
        }
        ("slab", [r, big_r, m]) => {
            positive(*r, "r")?;
            positive(*m, "M")?;
            if big_r <= r {
                return Err(config_err(format!("event \"{text}\": R must exceed r")));
            }
            Ok(EventSpec::Slab { r: *r, big_r: *big_r, m: *m })
        }
        ("cross", [side]) => {
            positive(*side, "side")?;
            Ok(EventSpec::square_crossing(d, *side))
        }
        _ => Err(config_err(format!("event \"{text}\": {shape}"))),
    }
}

pub fn parse_adjacency(text: &str) -> Result<Adjacency, CliError> {
    match text {
        "nearest" => Ok(Adjacency::Nearest),
        "star" => Ok(Adjacency::Star),
        other => Err(config_err(format!("unknown adjacency \"{other}\" (nearest or star)"))),
    }
}

#[derive(Serialize)]
struct ScheduleReport {
    n: f64,
    eta: Option<f64>,
    gamma: f64,
    s: f64,
    epsilon: f64,
    epsilon_snapped: f64,
    spacing: f64,
    delta: f64,
    log_delta: f64,
}

#[derive(Serialize)]
struct RunReport<'a> {
    config: &'a RunConfig,
    /// Cell side actually used (the configured ε snapped down).
    epsilon: f64,
    spacing: f64,
    cells: Vec<usize>,
    estimate: Estimate,
}

pub fn run(args: Args) -> i32 {
    match dispatch(args) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(args: Args) -> Result<(), CliError> {
    match args.cmd {
        Command::Schedule(a) => cmd_schedule(a),
        Command::Run(a) => cmd_run(*a),
    }
}

fn cmd_schedule(a: ScheduleArgs) -> Result<(), CliError> {
    let sched = if a.bf_schedule {
        let gamma = a.gamma.ok_or_else(|| config_err("--bf-schedule needs --gamma"))?;
        let c = a.c.ok_or_else(|| config_err("--bf-schedule needs --c"))?;
        kernel::bf_schedule(a.n, gamma, c, a.d)?
    } else {
        let eta = a.eta.ok_or_else(|| config_err("the polynomial schedule needs --eta"))?;
        let beta = a.beta.ok_or_else(|| config_err("the polynomial schedule needs --beta"))?;
        kernel::schedule(a.n, eta, beta, a.d)?
    };
    let snapped = snap_epsilon_down(sched.epsilon);
    let report = ScheduleReport {
        n: sched.n,
        eta: if sched.eta.is_nan() { None } else { Some(sched.eta) },
        gamma: sched.gamma,
        s: sched.s,
        epsilon: sched.epsilon,
        epsilon_snapped: snapped,
        spacing: default_spacing(snapped),
        delta: sched.delta,
        log_delta: sched.log_delta,
    };
    println!("{}", to_pretty(&report)?);
    Ok(())
}

fn load_config(a: &RunArgs) -> Result<RunConfig, CliError> {
    let mut cfg = match &a.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| config_err(format!("reading {}: {e}", path.display())))?;
            serde_json::from_str(&text).map_err(|e| config_err(format!("{}: {e}", path.display())))?
        }
        None => RunConfig::default(),
    };
    if let Some(v) = a.seed {
        cfg.seed = v;
    }
    if let Some(v) = a.replicas {
        cfg.replicas = v;
    }
    if let Some(v) = a.threads {
        cfg.threads = v;
    }
    if let Some(v) = a.level {
        cfg.level = v;
    }
    if let Some(v) = a.truncation {
        cfg.truncation = Some(v);
    }
    if let Some(v) = a.epsilon {
        cfg.epsilon = v;
    }
    if let Some(v) = a.delta {
        cfg.delta = v;
    }
    if let Some(v) = &a.event {
        cfg.event = v.clone();
    }
    if cfg.replicas == 0 {
        return Err(config_err("replicas must be positive"));
    }
    if !(cfg.epsilon > 0.0) {
        return Err(config_err("epsilon must be positive"));
    }
    if !(0.0..=1.0).contains(&cfg.delta) {
        return Err(config_err("delta must lie in [0, 1]"));
    }
    if !(cfg.window_half > 0.0) {
        return Err(config_err("window_half must be positive"));
    }
    if let Some(n) = cfg.truncation {
        if !(n > 0.0) {
            return Err(config_err("truncation must be positive"));
        }
    }
    if let Some(h) = cfg.spacing {
        if !(h > 0.0) {
            return Err(config_err("spacing must be positive"));
        }
    }
    Ok(cfg)
}

fn cmd_run(a: RunArgs) -> Result<(), CliError> {
    let out = a.out.clone();
    let cfg = load_config(&a)?;
    let spec = cfg.kernel.to_spec()?;
    let event = parse_event(&cfg.event, spec.d)?;
    let adjacency = parse_adjacency(&cfg.adjacency)?;
    let epsilon = snap_epsilon_down(cfg.epsilon);
    let spacing = cfg.spacing.unwrap_or_else(|| default_spacing(epsilon));
    let window = Window::cube(spec.d, cfg.window_half);
    let model = FieldModel::new(
        spec,
        cfg.truncation,
        epsilon,
        cfg.delta,
        window,
        spacing,
        substream::TERNARY,
    )?
    .into_shared();
    // validate the event geometry once, on an empty configuration
    let probe = OccupancyGrid { geom: model.coarse.clone(), open: vec![false; model.coarse.len()] };
    perc::occurs(&probe, &event, adjacency)?;

    let start = Instant::now();
    let estimate = in_pool(cfg.threads, || {
        stats::estimate(cfg.replicas, Z_TWO_SIDED_95, |replica| {
            let occ = perc::threshold(&crate::field::bundle_from(&model, cfg.seed, replica), cfg.level);
            perc::occurs(&occ, &event, adjacency).expect("geometry validated")
        })
    })?;
    eprintln!(
        "{} replicas on {} cells in {:.1}s",
        cfg.replicas,
        model.coarse.len(),
        start.elapsed().as_secs_f64()
    );

    let report = RunReport {
        config: &cfg,
        epsilon,
        spacing,
        cells: model.coarse.extents(),
        estimate,
    };
    emit(out.as_deref(), &to_pretty(&report)?)
}

fn in_pool<T: Send>(threads: usize, job: impl FnOnce() -> T + Send) -> Result<T, CliError> {
    if threads == 0 {
        return Ok(job());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| config_err(format!("thread pool: {e}")))?;
    Ok(pool.install(job))
}

fn to_pretty<T: Serialize>(value: &T) -> Result<String, CliError> {
    serde_json::to_string_pretty(value).map_err(|e| CliError::Numeric(format!("serializing report: {e}")))
}

fn emit(out: Option<&std::path::Path>, text: &str) -> Result<(), CliError> {
    match out {
        Some(path) => std::fs::write(path, format!("{text}\n"))
            .map_err(|e| config_err(format!("writing {}: {e}", path.display()))),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn event_strings_round_trip() {
        assert_eq!(
            parse_event("full:1,4", 2).unwrap(),
            EventSpec::FullSpace { r: 1.0, big_r: 4.0 }
        );
        assert_eq!(
            parse_event("slab: 1, 6, 2", 3).unwrap(),
            EventSpec::Slab { r: 1.0, big_r: 6.0, m: 2.0 }
        );
        assert_eq!(parse_event("cross:8", 2).unwrap(), EventSpec::square_crossing(2, 8.0));
        for bad in ["full:4,1", "full:1", "ring:1,4", "full:a,b", "cross:-1", ""] {
            assert!(parse_event(bad, 2).is_err(), "{bad:?} should be rejected");
        }
    }

    #[test]
    fn overrides_beat_the_config_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cfg.json");
        std::fs::write(&path, r#"{"seed": 7, "replicas": 50, "level": -0.5}"#).unwrap();
        let args = RunArgs {
            config: Some(path),
            seed: Some(9),
            replicas: None,
            threads: None,
            out: None,
            level: None,
            truncation: None,
            epsilon: None,
            delta: None,
            event: None,
        };
        let cfg = load_config(&args).unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.replicas, 50);
        assert_eq!(cfg.level, -0.5);
        assert_eq!(cfg.epsilon, 0.25);
    }

    #[test]
    fn unknown_config_keys_are_rejected() {
        let err = serde_json::from_str::<RunConfig>(r#"{"replcias": 10}"#);
        assert!(err.is_err());
    }

    #[test]
    fn error_kinds_map_to_exit_codes() {
        assert_eq!(CliError::Config("x".into()).exit_code(), 2);
        assert_eq!(CliError::Model("x".into()).exit_code(), 3);
        assert_eq!(CliError::Numeric("x".into()).exit_code(), 4);
        let e: CliError = KernelError::InvalidSchedule("bad".into()).into();
        assert_eq!(e.exit_code(), 2);
        let e: CliError = KernelError::QuadratureNonConvergent { last_change: 1.0, tol: 0.1 }.into();
        assert_eq!(e.exit_code(), 4);
    }
}
