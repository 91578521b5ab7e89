//! Run configuration: per-subcommand defaults, JSON config files, and
//! `key=value` overrides.

use std::path::{Path, PathBuf};

use num_complex::Complex64 as C64;
use qjump_core::ensemble::ChiGrid;
use qjump_core::trajectory::{Sampler, SimOptions, DEFAULT_DIVERGENCE_CAP, DEFAULT_KAPPA_DT};
use qjump_core::{CavityParams, DriveMode};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::Failure;

pub const FULL_SCALE_TRAJECTORIES: u64 = 1_000_000;
pub const FULL_SCALE_CHI_PER_CELL: u64 = 10_000;

/// Complex number written as `[re, im]`; a bare number is read as real.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "ComplexInput", into = "[f64; 2]")]
pub struct Complex(pub C64);

#[derive(Deserialize)]
#[serde(untagged)]
enum ComplexInput {
    Real(f64),
    Pair([f64; 2]),
}

impl From<ComplexInput> for Complex {
    fn from(c: ComplexInput) -> Self {
        match c {
            ComplexInput::Real(re) => Complex(C64::new(re, 0.0)),
            ComplexInput::Pair([re, im]) => Complex(C64::new(re, im)),
        }
    }
}

impl From<Complex> for [f64; 2] {
    fn from(c: Complex) -> Self {
        [c.0.re, c.0.im]
    }
}

impl From<f64> for Complex {
    fn from(re: f64) -> Self {
        Complex(C64::new(re, 0.0))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Subcommand {
    LaserRun,
    FeedbackRun,
    ChiMap,
    OracleCheck,
    Ergodicity,
}

impl Subcommand {
    pub fn name(self) -> &'static str {
        match self {
            Self::LaserRun => "laser-run",
            Self::FeedbackRun => "feedback-run",
            Self::ChiMap => "chi-map",
            Self::OracleCheck => "oracle-check",
            Self::Ergodicity => "ergodicity",
        }
    }
}

/// Every knob of a run. Times are in units of `1/κ`, rates in units of `κ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub mode: DriveMode,
    pub kappa: f64,
    pub omega: f64,
    pub eta: f64,
    pub beta: Complex,
    /// Cavity frequency, used only for Schrödinger-picture output.
    pub omega_cav: f64,
    pub alpha0: Complex,
    pub trajectories: u64,
    pub horizon: f64,
    pub grid_points: usize,
    pub base_seed: u64,
    pub sampler: Sampler,
    pub kappa_dt: f64,
    pub vacuum_radius: f64,
    pub divergence_cap: f64,
    /// Trajectories dumped to `trajectories.csv`, `events.csv` and `magnitudes.csv`.
    pub displayed_trajectories: usize,
    pub spiral_points: usize,
    pub beta_list: Option<Vec<Complex>>,
    pub phase_list: Option<Vec<f64>>,
    pub chi_grid: ChiGrid,
    pub chi_trajectories_per_cell: u64,
    /// Fock truncation level; `None` applies the truncation rule.
    pub truncation: Option<usize>,
    pub oracle_dt: f64,
    /// Relative spread of time averages below which a run counts as ergodic.
    pub ergodicity_tolerance: f64,
    pub out_dir: PathBuf,
}

impl RunConfig {
    /// Fully defaulted configuration for a subcommand.
    pub fn defaults(cmd: Subcommand) -> Self {
        let laser = Self {
            mode: DriveMode::LaserDriven,
            kappa: 1.0,
            omega: 8.0,
            eta: 0.0,
            beta: 0.0.into(),
            omega_cav: 2.0,
            alpha0: 0.0.into(),
            trajectories: 10_000,
            horizon: 10.0,
            grid_points: 101,
            base_seed: 1,
            sampler: Sampler::FixedStep,
            kappa_dt: DEFAULT_KAPPA_DT,
            vacuum_radius: 0.1,
            divergence_cap: DEFAULT_DIVERGENCE_CAP,
            displayed_trajectories: 10,
            spiral_points: 1001,
            beta_list: None,
            phase_list: None,
            chi_grid: ChiGrid::default(),
            chi_trajectories_per_cell: 1_000,
            truncation: None,
            oracle_dt: 1e-3,
            ergodicity_tolerance: 0.1,
            out_dir: PathBuf::from("out").join(cmd.name()),
        };
        let feedback = Self {
            mode: DriveMode::Feedback,
            omega: 0.0,
            eta: 0.5,
            beta: 2.0.into(),
            alpha0: 2.0.into(),
            sampler: Sampler::WaitingTime,
            ..laser.clone()
        };
        match cmd {
            Subcommand::LaserRun => laser,
            Subcommand::FeedbackRun | Subcommand::ChiMap => feedback,
            Subcommand::OracleCheck => Self { omega: 2.0, ..laser },
            Subcommand::Ergodicity => Self {
                horizon: 50.0,
                grid_points: 501,
                ..laser
            },
        }
    }

    pub fn params(&self) -> CavityParams {
        CavityParams {
            kappa: self.kappa,
            omega: self.omega,
            eta: self.eta,
            beta: self.beta.0,
            omega_cav: self.omega_cav,
            mode: self.mode,
        }
    }

    pub fn sim_options(&self) -> SimOptions {
        SimOptions {
            sampler: self.sampler,
            kappa_dt: self.kappa_dt,
            divergence_cap: self.divergence_cap,
        }
    }

    pub fn validate(&self) -> Result<(), Failure> {
        self.params().validate()?;
        let mut bad = Vec::new();
        if self.trajectories == 0 {
            bad.push("trajectories must be ≥ 1".to_string());
        }
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            bad.push(format!("horizon must be finite and > 0, got {}", self.horizon));
        }
        if self.grid_points < 2 {
            bad.push(format!("grid_points must be ≥ 2, got {}", self.grid_points));
        }
        if self.spiral_points < 2 {
            bad.push(format!("spiral_points must be ≥ 2, got {}", self.spiral_points));
        }
        if !(self.kappa_dt.is_finite() && self.kappa_dt > 0.0) {
            bad.push(format!("kappa_dt must be finite and > 0, got {}", self.kappa_dt));
        }
        if !(self.vacuum_radius > 0.0) {
            bad.push(format!("vacuum_radius must be > 0, got {}", self.vacuum_radius));
        }
        if !(self.divergence_cap > 0.0) {
            bad.push(format!("divergence_cap must be > 0, got {}", self.divergence_cap));
        }
        if !self.alpha0.0.is_finite() {
            bad.push("alpha0 must be finite".to_string());
        }
        if self.chi_trajectories_per_cell == 0 {
            bad.push("chi_trajectories_per_cell must be ≥ 1".to_string());
        }
        if !(self.oracle_dt > 0.0) {
            bad.push(format!("oracle_dt must be > 0, got {}", self.oracle_dt));
        }
        if !(self.ergodicity_tolerance >= 0.0) {
            bad.push(format!("ergodicity_tolerance must be ≥ 0, got {}", self.ergodicity_tolerance));
        }
        if self.sampler == Sampler::WaitingTime && self.mode == DriveMode::LaserDriven {
            bad.push("the waiting-time sampler requires mode = feedback".to_string());
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Failure::Validation(bad.join("; ")))
        }
    }

    pub fn grid(&self) -> Vec<f64> {
        qjump_core::ensemble::uniform_grid(self.horizon, self.grid_points)
    }
}

/// Layered configuration sources, applied in the order listed.
#[derive(Debug, Default, Clone)]
pub struct Sources<'a> {
    pub config_file: Option<&'a Path>,
    pub full_scale: bool,
    pub overrides: &'a [String],
    pub seed: Option<u64>,
    pub out: Option<&'a Path>,
}

/// Defaults, then the config file, then `--full-scale`, then overrides,
/// then `--seed` and `--out`.
pub fn resolve(cmd: Subcommand, src: &Sources<'_>) -> Result<RunConfig, Failure> {
    let mut value = serde_json::to_value(RunConfig::defaults(cmd)).expect("defaults serialise");
    if let Some(path) = src.config_file {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::Validation(format!("cannot read config {}: {e}", path.display())))?;
        let file: Value = serde_json::from_str(&text)
            .map_err(|e| Failure::Validation(format!("config {} is not valid JSON: {e}", path.display())))?;
        let Value::Object(entries) = file else {
            return Err(Failure::Validation(format!("config {} must be a JSON object", path.display())));
        };
        merge(&mut value, entries);
    }
    if src.full_scale {
        value["trajectories"] = FULL_SCALE_TRAJECTORIES.into();
        value["chi_trajectories_per_cell"] = FULL_SCALE_CHI_PER_CELL.into();
    }
    for item in src.overrides {
        apply_override(&mut value, item)?;
    }
    if let Some(seed) = src.seed {
        value["base_seed"] = seed.into();
    }
    if let Some(out) = src.out {
        value["out_dir"] = out.to_string_lossy().into_owned().into();
    }
    let cfg: RunConfig =
        serde_json::from_value(value).map_err(|e| Failure::Validation(format!("invalid configuration: {e}")))?;
    cfg.validate()?;
    Ok(cfg)
}

fn merge(base: &mut Value, entries: Map<String, Value>) {
    for (k, v) in entries {
        match (base.get_mut(&k), v) {
            (Some(Value::Object(dst)), Value::Object(src)) => {
                let mut inner = Value::Object(std::mem::take(dst));
                merge(&mut inner, src);
                base[&k] = inner;
            }
            (_, v) => base[&k] = v,
        }
    }
}

/// `key=value` with a dotted key path; the value is parsed as JSON and
/// falls back to a plain string.
fn apply_override(value: &mut Value, item: &str) -> Result<(), Failure> {
    let (key, raw) = item
        .split_once('=')
        .ok_or_else(|| Failure::Validation(format!("override {item:?} is not of the form key=value")))?;
    let parsed = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut slot = value;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let Value::Object(map) = slot else {
            return Err(Failure::Validation(format!("override key {key:?}: {part:?} is not a table")));
        };
        if !map.contains_key(*part) {
            return Err(Failure::Validation(format!("override key {key:?}: unknown field {part:?}")));
        }
        let next = map.get_mut(*part).expect("checked");
        if i + 1 == parts.len() {
            *next = parsed;
            return Ok(());
        }
        slot = next;
    }
    unreachable!("split yields at least one part")
}
