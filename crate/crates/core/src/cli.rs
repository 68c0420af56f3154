//! Command-line front end: a flat JSON config, overridable by flags, drives
//! one pipeline and writes its artifacts into the output directory.
//!
//! Exit codes: 0 success, 2 configuration error, 3 numerical failure.

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Parser, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::boundary_ops::{default_boundary_order, max_boundary_order};
use crate::cgpt::{radial_cgpt_oracle, CgptMatrix};
use crate::error::Error;
use crate::field::{project_sigma, AnalyticSigma};
use crate::forward::ForwardModel;
use crate::inverse::config::{default_schedule, min_level};
use crate::inverse::{
    l2_error, perturb_target, recursive_reconstruct, EigenWeight, Functional, InitialGuess, InversionConfig,
    Method, Penalty, Reconstruction, SearchSpace, Stage, StageSummary, StepRule, StopReason, TargetData,
    WeightScheme,
};
use crate::io::write_json_pretty;
use crate::mesh::build_refined_mesh;
use crate::msr::{recover_cgpt, simulate_msr, MsrMatrix, SensorArray};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Forward,
    OracleRadial,
    MsrSim,
    MsrRecover,
    Invert,
    EndToEnd,
}

/// Every key a config file may contain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub command: Command,
    pub output_dir: PathBuf,
    pub sigma: Option<AnalyticSigma>,
    /// Mesh level of forward solves and target generation.
    pub level: usize,
    pub base_boundary_count: usize,
    /// CGPT order `K`.
    pub order: usize,
    pub sensors: usize,
    pub radius: f64,
    /// MSR noise standard deviation.
    pub noise: f64,
    pub seed: u64,
    /// Order of the CGPTs that generate the MSR data; `order` when unset.
    pub simulation_order: Option<usize>,
    /// MSR CSV for `msr-recover`, target CGPT JSON for `invert`.
    pub input: Option<PathBuf>,
    pub final_level: usize,
    pub max_iterations: usize,
    /// Explicit schedule; otherwise orders `1..=order` ending on `final_level`.
    pub schedule: Option<Vec<Stage>>,
    pub boundary_order: Option<usize>,
    pub functional: Functional,
    pub method: Method,
    pub weights: WeightScheme,
    pub eigen_weights: EigenWeight,
    pub step: StepRule,
    pub regularization: f64,
    pub penalty: Penalty,
    /// Frobenius noise on the targets: added by `end-to-end`, declared for Morozov.
    pub noise_level: f64,
    pub morozov_tau: f64,
    pub clamp: f64,
    pub initial: InitialGuess,
    pub search_space: SearchSpace,
}

impl Default for RunConfig {
    fn default() -> Self {
        let inv = InversionConfig::default();
        Self {
            command: Command::Forward,
            output_dir: PathBuf::from("out"),
            sigma: None,
            level: 6,
            base_boundary_count: 8,
            order: 5,
            sensors: 32,
            radius: 3.0,
            noise: 0.0,
            seed: 0,
            simulation_order: None,
            input: None,
            final_level: 5,
            max_iterations: 400,
            schedule: None,
            boundary_order: None,
            functional: inv.functional,
            method: inv.method,
            weights: inv.weights,
            eigen_weights: inv.eigen_weights,
            step: inv.step,
            regularization: inv.regularization,
            penalty: inv.penalty,
            noise_level: inv.noise_level,
            morozov_tau: inv.morozov_tau,
            clamp: inv.clamp,
            initial: inv.initial,
            search_space: inv.search_space,
        }
    }
}

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Numerical(_) => EXIT_NUMERICAL,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Numerical(m) => write!(f, "numerical failure: {m}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidArgument(_) | Error::Nyquist { .. } | Error::Parse(_) | Error::Json(_) | Error::Csv(_) => {
                CliError::Config(e.to_string())
            }
            Error::Io(_) => CliError::Config(e.to_string()),
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

fn config_err(key: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{key}: {msg}"))
}

impl RunConfig {
    pub fn schedule(&self) -> Vec<Stage> {
        self.schedule
            .clone()
            .unwrap_or_else(|| default_schedule(self.base_boundary_count, self.order, self.final_level, self.max_iterations))
    }

    pub fn inversion(&self) -> InversionConfig {
        InversionConfig {
            base_boundary_count: self.base_boundary_count,
            schedule: self.schedule(),
            boundary_order: self.boundary_order,
            functional: self.functional,
            method: self.method,
            weights: self.weights,
            eigen_weights: self.eigen_weights,
            step: self.step,
            regularization: self.regularization,
            penalty: self.penalty,
            noise_level: self.noise_level,
            morozov_tau: self.morozov_tau,
            clamp: self.clamp,
            initial: self.initial,
            search_space: self.search_space,
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.order == 0 {
            return Err(config_err("order", "must be at least 1"));
        }
        if self.base_boundary_count < 8 || self.base_boundary_count % 2 != 0 {
            return Err(config_err("base_boundary_count", "must be an even number of at least 8"));
        }
        let needs_sigma = matches!(self.command, Command::Forward | Command::OracleRadial | Command::MsrSim | Command::EndToEnd);
        let sigma = self.sigma.as_ref();
        if needs_sigma && sigma.is_none() {
            return Err(config_err("sigma", "required for this command"));
        }
        if self.command == Command::OracleRadial && sigma.and_then(|s| s.radial_profile()).is_none() {
            return Err(config_err("sigma", "oracle-radial needs a constant or radial conductivity"));
        }
        if matches!(self.command, Command::MsrRecover | Command::Invert) && self.input.is_none() {
            return Err(config_err("input", "required for this command"));
        }
        if matches!(self.command, Command::Forward | Command::MsrSim | Command::EndToEnd) {
            let kb = default_boundary_order(self.order.max(self.simulation_order.unwrap_or(0)));
            let need = min_level(self.base_boundary_count, kb);
            if self.level < need {
                return Err(config_err("level", format!("must be at least {need} to resolve order {}", self.order)));
            }
        }
        if matches!(self.command, Command::MsrSim | Command::MsrRecover) {
            SensorArray::new(self.sensors, self.radius).map_err(|e| config_err("sensors/radius", e))?;
            if 2 * self.order >= self.sensors {
                return Err(config_err("order", format!("needs 2·order < sensors = {}", self.sensors)));
            }
            if !(self.noise >= 0.0) || !self.noise.is_finite() {
                return Err(config_err("noise", "must be finite and non-negative"));
            }
            if let Some(k) = self.simulation_order {
                if k == 0 {
                    return Err(config_err("simulation_order", "must be at least 1"));
                }
            }
        }
        if matches!(self.command, Command::Invert | Command::EndToEnd) {
            let inv = self.inversion();
            if inv.final_order() > self.order {
                return Err(config_err("schedule", format!("final order exceeds order = {}", self.order)));
            }
            inv.validate().map_err(|e| match e {
                Error::InvalidArgument(m) => CliError::Config(m),
                other => other.into(),
            })?;
        }
        Ok(())
    }
}

#[derive(Debug, Parser)]
#[command(name = "cgpt-eit", version, about = "Conductivity imaging from contracted generalized polarization tensors")]
pub struct Cli {
    pub command: Command,
    /// JSON config file; flags override its keys.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
    /// Conductivity as JSON (`{"kind":"constant","value":2}`) or a bare kind such as `benchmark1`.
    #[arg(long)]
    pub sigma: Option<String>,
    #[arg(long)]
    pub level: Option<usize>,
    #[arg(long)]
    pub order: Option<usize>,
    #[arg(long)]
    pub sensors: Option<usize>,
    #[arg(long)]
    pub radius: Option<f64>,
    #[arg(long)]
    pub noise: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub final_level: Option<usize>,
    #[arg(long)]
    pub max_iterations: Option<usize>,
    #[arg(long)]
    pub noise_level: Option<f64>,
    /// Any other key, as `key=value` with a JSON value.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

fn json_or_string(raw: &str) -> Value {
    serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()))
}

/// Merges the config file (if any) with flag overrides and validates.
pub fn parse_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut map = match &cli.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| config_err("config", format!("{}: {e}", path.display())))?;
            match serde_json::from_str::<Value>(&text) {
                Ok(Value::Object(m)) => m,
                Ok(_) => return Err(config_err("config", "top level must be a JSON object")),
                Err(e) => return Err(config_err("config", e)),
            }
        }
        None => Map::new(),
    };
    map.insert("command".into(), serde_json::to_value(cli.command).expect("command serializes"));
    let mut put = |key: &str, v: Option<Value>| {
        if let Some(v) = v {
            map.insert(key.into(), v);
        }
    };
    put("output_dir", cli.output_dir.as_ref().map(|p| Value::String(p.display().to_string())));
    put(
        "sigma",
        cli.sigma.as_ref().map(|s| match json_or_string(s) {
            Value::String(kind) => serde_json::json!({ "kind": kind }),
            v => v,
        }),
    );
    put("level", cli.level.map(Value::from));
    put("order", cli.order.map(Value::from));
    put("sensors", cli.sensors.map(Value::from));
    put("radius", cli.radius.map(Value::from));
    put("noise", cli.noise.map(Value::from));
    put("seed", cli.seed.map(Value::from));
    put("input", cli.input.as_ref().map(|p| Value::String(p.display().to_string())));
    put("final_level", cli.final_level.map(Value::from));
    put("max_iterations", cli.max_iterations.map(Value::from));
    put("noise_level", cli.noise_level.map(Value::from));
    for item in &cli.set {
        let (k, v) = item.split_once('=').ok_or_else(|| config_err("set", format!("expected key=value, got `{item}`")))?;
        put(k.trim(), Some(json_or_string(v.trim())));
    }
    let config: RunConfig = serde_json::from_value(Value::Object(map)).map_err(|e| CliError::Config(e.to_string()))?;
    config.validate()?;
    Ok(config)
}

#[derive(Debug, Serialize)]
pub struct Summary {
    pub command: Command,
    pub final_order: usize,
    pub iterations: usize,
    pub stop_reason: StopReason,
    /// Artifacts come from an aborted run.
    pub partial: bool,
    pub eps_m: f64,
    pub eps_sigma: Option<f64>,
    /// `‖Y − M(σ)‖_F` over the final active order.
    pub residual_frobenius: f64,
    /// `‖σ* − σ‖_{L²}`
    pub l2_error: Option<f64>,
    pub stages: Vec<StageSummary>,
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>, CliError> {
    let path = dir.join(name);
    File::create(&path)
        .map(BufWriter::new)
        .map_err(|e| CliError::Numerical(format!("cannot write {}: {e}", path.display())))
}

fn finish(mut w: BufWriter<File>) -> Result<(), CliError> {
    w.flush().map_err(|e| CliError::Numerical(e.to_string()))
}

fn write_cgpt(dir: &Path, name: &str, m: &CgptMatrix) -> Result<(), CliError> {
    let mut w = create(dir, name)?;
    m.write_json(&mut w)?;
    finish(w)
}

fn forward_cgpt(config: &RunConfig, order: usize) -> Result<CgptMatrix, CliError> {
    let sigma_spec = config.sigma.as_ref().expect("validated");
    let mesh = Arc::new(build_refined_mesh(config.base_boundary_count, config.level)?);
    let sigma = project_sigma(sigma_spec, mesh.clone())?;
    let kb = default_boundary_order(order).min(max_boundary_order(&mesh));
    Ok(ForwardModel::new(&sigma, kb)?.cgpt(order)?)
}

fn read_input(config: &RunConfig) -> Result<BufReader<File>, CliError> {
    let path = config.input.as_ref().expect("validated");
    File::open(path).map(BufReader::new).map_err(|e| config_err("input", format!("{}: {e}", path.display())))
}

fn write_reconstruction(
    config: &RunConfig,
    target: &TargetData,
    out: &Reconstruction,
) -> Result<Summary, CliError> {
    let dir = &config.output_dir;
    let mut w = create(dir, "history.csv")?;
    out.history.write_csv(&mut w)?;
    finish(w)?;
    let mut w = create(dir, "field.csv")?;
    out.field.write_csv(&mut w)?;
    finish(w)?;
    let last = out.history.records.last();
    let l2 = match &target.truth {
        Some(spec) => Some(l2_error(&out.field, &project_sigma(spec, out.field.mesh().clone())?)?),
        None => None,
    };
    let summary = Summary {
        command: config.command,
        final_order: last.map_or(0, |r| r.stage_order),
        iterations: out.history.iterations(),
        stop_reason: out.history.stop.clone(),
        partial: out.history.stop.is_failure(),
        eps_m: last.map_or(f64::NAN, |r| r.eps_m),
        eps_sigma: last.map(|r| r.eps_sigma).filter(|v| v.is_finite()),
        residual_frobenius: last.map_or(f64::NAN, |r| r.eps_m.sqrt()),
        l2_error: l2,
        stages: out.history.stages.clone(),
    };
    let mut w = create(dir, "summary.json")?;
    write_json_pretty(&mut w, &summary)?;
    finish(w)?;
    Ok(summary)
}

/// Runs the configured pipeline; numerical failures inside a reconstruction
/// still write partial artifacts before reporting.
pub fn run_pipeline(config: &RunConfig) -> Result<(), CliError> {
    let dir = &config.output_dir;
    fs::create_dir_all(dir).map_err(|e| config_err("output_dir", format!("{}: {e}", dir.display())))?;
    let mut w = create(dir, "resolved_config.json")?;
    write_json_pretty(&mut w, config)?;
    finish(w)?;

    match config.command {
        Command::Forward => write_cgpt(dir, "cgpt.json", &forward_cgpt(config, config.order)?),
        Command::OracleRadial => {
            let spec = config.sigma.as_ref().expect("validated");
            let profile = spec.radial_profile().expect("validated");
            write_cgpt(dir, "oracle_cgpt.json", &radial_cgpt_oracle(profile, config.order)?)
        }
        Command::MsrSim => {
            let k_sim = config.simulation_order.unwrap_or(config.order);
            let source = forward_cgpt(config, k_sim)?;
            let array = SensorArray::new(config.sensors, config.radius)?;
            let v = simulate_msr(&source, &array, k_sim, config.noise, config.seed)?;
            write_cgpt(dir, "source_cgpt.json", &source)?;
            let mut w = create(dir, "msr.csv")?;
            v.write_csv(&mut w)?;
            finish(w)
        }
        Command::MsrRecover => {
            let array = SensorArray::new(config.sensors, config.radius)?;
            let v = MsrMatrix::read_csv(read_input(config)?)?;
            write_cgpt(dir, "recovered_cgpt.json", &recover_cgpt(&v, &array, config.order)?)
        }
        Command::Invert | Command::EndToEnd => {
            let cgpt = if config.command == Command::Invert {
                CgptMatrix::read_json(read_input(config)?)?
            } else {
                let clean = forward_cgpt(config, config.order)?;
                let noisy = perturb_target(&clean, config.noise_level, config.seed)?;
                write_cgpt(dir, "targets.json", &noisy)?;
                noisy
            };
            let target = TargetData { cgpt, noise_level: config.noise_level, truth: config.sigma.clone() };
            let out = recursive_reconstruct(&target, &config.inversion())?;
            let summary = write_reconstruction(config, &target, &out)?;
            match summary.stop_reason {
                StopReason::Failed(msg) => Err(CliError::Numerical(msg)),
                _ => Ok(()),
            }
        }
    }
}

/// Parses `args` (program name first), runs, and returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let result = parse_config(&cli).and_then(|config| run_pipeline(&config));
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("cgpt-eit: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> Result<RunConfig, CliError> {
        let cli = Cli::try_parse_from(std::iter::once("cgpt-eit").chain(args.iter().copied())).unwrap();
        parse_config(&cli)
    }

    #[test]
    fn minimal_invert_config_fills_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("c.json");
        fs::write(&cfg, r#"{"sigma": {"kind": "benchmark1"}, "input": "t.json", "order": 5}"#).unwrap();
        let c = parse(&["invert", "--config", cfg.to_str().unwrap()]).unwrap();
        assert_eq!(c.schedule().iter().map(|s| s.order).collect::<Vec<_>>(), vec![1, 2, 3, 4, 5]);
        assert_eq!(c.morozov_tau, 1.2);
        assert_eq!(c.method, Method::Landweber);
    }

    #[test]
    fn zero_order_names_the_key() {
        let e = parse(&["forward", "--sigma", "benchmark1", "--order", "0"]).unwrap_err();
        assert_eq!(e.exit_code(), EXIT_CONFIG);
        assert!(e.to_string().contains("order"), "{e}");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let e = parse(&["forward", "--sigma", "benchmark1", "--set", "colour=3"]).unwrap_err();
        assert!(e.to_string().contains("colour"), "{e}");
        assert_eq!(e.exit_code(), EXIT_CONFIG);
    }

    #[test]
    fn flags_override_file() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("c.json");
        fs::write(&cfg, r#"{"sigma": {"kind": "constant", "value": 2.0}, "level": 5, "order": 3}"#).unwrap();
        let c = parse(&["forward", "--config", cfg.to_str().unwrap(), "--level", "4", "--set", "seed=9"]).unwrap();
        assert_eq!((c.level, c.order, c.seed), (4, 3, 9));
        assert_eq!(c.sigma, Some(AnalyticSigma::Constant { value: 2.0 }));
    }

    #[test]
    fn sigma_flag_accepts_json() {
        let c = parse(&["forward", "--sigma", r#"{"kind":"benchmark2","a":0.5,"b":1.0}"#]).unwrap();
        assert_eq!(c.sigma, Some(AnalyticSigma::Benchmark2 { a: 0.5, b: 1.0 }));
    }

    #[test]
    fn coarse_level_is_rejected() {
        let e = parse(&["forward", "--sigma", "benchmark1", "--level", "2"]).unwrap_err();
        assert!(e.to_string().starts_with("configuration error: level"), "{e}");
    }
}
