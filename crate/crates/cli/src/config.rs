//! Run configuration: a TOML file, the setup's one-way working point for
//! anything it leaves out, and `key.path=value` overrides from the command line.

use std::f64::consts::TAU;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use wgqb::configs::{nonreciprocal_point, CouplingRates, PhaseSet, SetupKind};
use wgqb::dynamics::{DriveKind, DriveSide, DriveSpec};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sides {
    Left,
    Right,
    Both,
}

impl Sides {
    pub fn list(self) -> Vec<DriveSide> {
        match self {
            Sides::Left => vec![DriveSide::Left],
            Sides::Right => vec![DriveSide::Right],
            Sides::Both => vec![DriveSide::Left, DriveSide::Right],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScanMetric {
    R,
    Eta,
    Zeta,
}

impl ScanMetric {
    pub fn label(self) -> &'static str {
        match self {
            ScanMetric::R => "r_inf",
            ScanMetric::Eta => "eta_inf",
            ScanMetric::Zeta => "zeta_inf",
        }
    }
}

/// Parameters a sweep axis may vary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepParam {
    Phi1,
    Phiw,
    Phi2,
    Phim,
    Theta1,
    Theta2,
    Gamma,
    Kappa1,
    Kappa2,
    Omega,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::Phi1 => "phi1",
            SweepParam::Phiw => "phiw",
            SweepParam::Phi2 => "phi2",
            SweepParam::Phim => "phim",
            SweepParam::Theta1 => "theta1",
            SweepParam::Theta2 => "theta2",
            SweepParam::Gamma => "gamma",
            SweepParam::Kappa1 => "kappa1",
            SweepParam::Kappa2 => "kappa2",
            SweepParam::Omega => "omega",
        }
    }

    pub fn apply(self, cfg: &mut RunConfig, v: f64) {
        let p = &mut cfg.phases;
        match self {
            SweepParam::Phi1 => p.phi1 = v,
            SweepParam::Phiw => p.phiw = v,
            SweepParam::Phi2 => p.phi2 = v,
            SweepParam::Phim => p.phim = v,
            SweepParam::Theta1 => p.theta1 = v,
            SweepParam::Theta2 => p.theta2 = v,
            SweepParam::Gamma => {
                let CouplingRates { kappa1, kappa2, .. } = cfg.rates;
                cfg.rates = CouplingRates::equal(v, kappa1, kappa2);
            }
            SweepParam::Kappa1 => cfg.rates.kappa1 = v,
            SweepParam::Kappa2 => cfg.rates.kappa2 = v,
            SweepParam::Omega => cfg.drive.amplitude = v,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Axis {
    pub param: SweepParam,
    #[serde(default)]
    pub start: f64,
    #[serde(default = "tau")]
    pub stop: f64,
    #[serde(default = "default_steps")]
    pub steps: usize,
    /// Include `stop` itself; off by default so periodic phase axes do not
    /// repeat their first column.
    #[serde(default)]
    pub endpoint: bool,
}

fn tau() -> f64 {
    TAU
}

fn default_steps() -> usize {
    201
}

impl Axis {
    pub fn values(&self) -> Vec<f64> {
        let div = if self.endpoint { self.steps - 1 } else { self.steps } as f64;
        (0..self.steps)
            .map(|k| self.start + (self.stop - self.start) * k as f64 / div)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    #[serde(default = "default_axis1")]
    pub axis1: Axis,
    #[serde(default = "default_axis2")]
    pub axis2: Axis,
    #[serde(default = "default_metrics")]
    pub metrics: Vec<ScanMetric>,
}

fn default_axis1() -> Axis {
    Axis { param: SweepParam::Theta2, start: 0.0, stop: TAU, steps: 201, endpoint: false }
}

fn default_axis2() -> Axis {
    Axis { param: SweepParam::Phiw, start: 0.0, stop: TAU, steps: 201, endpoint: false }
}

fn default_metrics() -> Vec<ScanMetric> {
    vec![ScanMetric::R, ScanMetric::Eta, ScanMetric::Zeta]
}

impl Default for Sweep {
    fn default() -> Self {
        Self { axis1: default_axis1(), axis2: default_axis2(), metrics: default_metrics() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeGrid {
    /// Final time in units of 1/gamma.
    pub t_max: f64,
    pub n_points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Output {
    pub directory: PathBuf,
    pub formats: Vec<Format>,
    pub plots: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValidateOptions {
    /// Output times for the oracle comparison over [0, t_max].
    pub n_points: usize,
    pub allow_strong_drive: bool,
}

/// Fully resolved configuration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub setup: SetupKind,
    pub phases: PhaseSet,
    pub rates: CouplingRates,
    pub drive: DriveSpec,
    pub sides: Sides,
    /// Effective detunings; zero is effective resonance.
    pub detuning: [f64; 2],
    pub time: TimeGrid,
    pub sweep: Sweep,
    pub output: Output,
    pub validate: ValidateOptions,
}

// File layout. Every field is optional; `resolve` fills the gaps.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    setup: Option<SetupKind>,
    #[serde(default)]
    phases: RawPhases,
    #[serde(default)]
    rates: RawRates,
    #[serde(default)]
    drive: RawDrive,
    #[serde(default)]
    detuning: RawDetuning,
    time: Option<RawTime>,
    sweep: Option<Sweep>,
    #[serde(default)]
    output: RawOutput,
    #[serde(default)]
    validate: RawValidate,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPhases {
    phi1: Option<f64>,
    phiw: Option<f64>,
    phi2: Option<f64>,
    phim: Option<f64>,
    theta1: Option<f64>,
    theta2: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRates {
    gamma: Option<f64>,
    kappa1: Option<f64>,
    kappa2: Option<f64>,
    gamma11: Option<f64>,
    gamma12: Option<f64>,
    gamma21: Option<f64>,
    gamma22: Option<f64>,
    gamma1: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDrive {
    kind: Option<DriveKind>,
    side: Option<Sides>,
    amplitude: Option<f64>,
    omega1: Option<f64>,
    omega2: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDetuning {
    delta1: Option<f64>,
    delta2: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTime {
    t_max: Option<f64>,
    n_points: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    directory: Option<PathBuf>,
    formats: Option<Vec<Format>>,
    plots: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawValidate {
    n_points: Option<usize>,
    allow_strong_drive: Option<bool>,
}

pub const DEFAULT_GAMMA: f64 = 0.01;
pub const DEFAULT_AMPLITUDE: f64 = 0.15;

impl RunConfig {
    /// Defaults for `setup`: its one-way working point, equal rates of 0.01 and a linear drive of 0.15.
    pub fn defaults(setup: SetupKind) -> Self {
        resolve(RawConfig { setup: Some(setup), ..Default::default() }).expect("defaults are valid")
    }

    /// Reads `path` (if any) and applies `overrides` of the form
    /// `section.key=value`.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self, CliError> {
        let mut table = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
                text.parse::<toml::Table>()
                    .map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?
            }
            None => toml::Table::new(),
        };
        for ov in overrides {
            apply_override(&mut table, ov)?;
        }
        Self::from_table(table)
    }

    pub fn from_toml_str(text: &str) -> Result<Self, CliError> {
        let table = text.parse::<toml::Table>().map_err(|e| CliError::Config(e.to_string()))?;
        Self::from_table(table)
    }

    fn from_table(table: toml::Table) -> Result<Self, CliError> {
        let raw: RawConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| CliError::Config(e.to_string()))?;
        resolve(raw)
    }

    /// Time grid in absolute units (1/omega_0).
    pub fn times(&self) -> Vec<f64> {
        grid(self.time.t_max / self.rates.gamma, self.time.n_points)
    }

    pub fn drive_for(&self, side: DriveSide) -> DriveSpec {
        self.drive.with_side(side)
    }
}

pub fn grid(t_end: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![t_end];
    }
    (0..n).map(|k| t_end * k as f64 / (n - 1) as f64).collect()
}

fn resolve(raw: RawConfig) -> Result<RunConfig, CliError> {
    let setup = raw
        .setup
        .ok_or_else(|| CliError::Config("missing field `setup` (one of 4P, 4P+M, 3P, 3P+M)".into()))?;
    let base = nonreciprocal_point(setup);
    let rp = raw.phases;
    let phases = PhaseSet {
        phi1: rp.phi1.unwrap_or(base.phi1),
        phiw: rp.phiw.unwrap_or(base.phiw),
        phi2: rp.phi2.unwrap_or(base.phi2),
        phim: rp.phim.unwrap_or(base.phim),
        theta1: rp.theta1.unwrap_or(base.theta1),
        theta2: rp.theta2.unwrap_or(base.theta2),
    };
    let rr = raw.rates;
    let gamma = rr.gamma.unwrap_or(DEFAULT_GAMMA);
    let rates = CouplingRates {
        gamma11: rr.gamma11.unwrap_or(gamma),
        gamma12: rr.gamma12.unwrap_or(gamma),
        gamma21: rr.gamma21.unwrap_or(gamma),
        gamma22: rr.gamma22.unwrap_or(gamma),
        gamma1: rr.gamma1.unwrap_or(gamma),
        gamma,
        kappa1: rr.kappa1.unwrap_or(gamma),
        kappa2: rr.kappa2.unwrap_or(gamma),
    };
    let rd = raw.drive;
    let mut drive = DriveSpec::new(
        rd.kind.unwrap_or(DriveKind::Linear),
        DriveSide::Left,
        rd.amplitude.unwrap_or(DEFAULT_AMPLITUDE),
    );
    drive.omega1 = rd.omega1.unwrap_or(drive.omega1);
    drive.omega2 = rd.omega2.unwrap_or(drive.omega2);
    let rt = raw.time.unwrap_or_default();
    let ro = raw.output;
    let rv = raw.validate;
    let cfg = RunConfig {
        setup,
        phases,
        rates,
        drive,
        sides: rd.side.unwrap_or(Sides::Both),
        detuning: [raw.detuning.delta1.unwrap_or(0.0), raw.detuning.delta2.unwrap_or(0.0)],
        time: TimeGrid { t_max: rt.t_max.unwrap_or(10.0), n_points: rt.n_points.unwrap_or(2001) },
        sweep: raw.sweep.unwrap_or_default(),
        output: Output {
            directory: ro.directory.unwrap_or_else(|| PathBuf::from("out")),
            formats: ro.formats.unwrap_or_else(|| vec![Format::Csv, Format::Json]),
            plots: ro.plots.unwrap_or(false),
        },
        validate: ValidateOptions {
            n_points: rv.n_points.unwrap_or(101),
            allow_strong_drive: rv.allow_strong_drive.unwrap_or(false),
        },
    };
    cfg.check()?;
    Ok(cfg)
}

impl RunConfig {
    fn check(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        self.phases.validate().map_err(|e| CliError::Config(format!("phases: {e}")))?;
        self.rates.validate().map_err(|e| CliError::Config(format!("rates: {e}")))?;
        self.drive.validate().map_err(|e| CliError::Config(format!("drive: {e}")))?;
        if !self.detuning.iter().all(|d| d.is_finite()) {
            return bad("detuning: values must be finite".into());
        }
        if !(self.time.t_max > 0.0 && self.time.t_max.is_finite()) {
            return bad(format!("time.t_max: must be positive, got {}", self.time.t_max));
        }
        if self.time.n_points < 2 {
            return bad(format!("time.n_points: must be >= 2, got {}", self.time.n_points));
        }
        if self.validate.n_points < 2 {
            return bad(format!("validate.n_points: must be >= 2, got {}", self.validate.n_points));
        }
        for (name, ax) in [("sweep.axis1", &self.sweep.axis1), ("sweep.axis2", &self.sweep.axis2)] {
            if ax.steps < 2 {
                return bad(format!("{name}.steps: must be >= 2, got {}", ax.steps));
            }
            if !(ax.start.is_finite() && ax.stop.is_finite()) {
                return bad(format!("{name}: range must be finite"));
            }
        }
        if self.sweep.axis1.param == self.sweep.axis2.param {
            return bad("sweep: the two axes must vary different parameters".into());
        }
        if self.sweep.metrics.is_empty() {
            return bad("sweep.metrics: at least one metric is required".into());
        }
        if self.output.formats.is_empty() {
            return bad("output.formats: at least one format is required".into());
        }
        Ok(())
    }
}

fn apply_override(table: &mut toml::Table, ov: &str) -> Result<(), CliError> {
    let (key, value) = ov
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("override '{ov}' is not key=value")))?;
    let path: Vec<&str> = key.trim().split('.').collect();
    if path.iter().any(|p| p.is_empty()) {
        return Err(CliError::Config(format!("override '{ov}' has an empty key segment")));
    }
    // Bare words that are not valid TOML (e.g. 3P+M, left) become strings.
    let value = value.trim();
    let parsed = format!("v = {value}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(value.to_string()));
    let mut node = table;
    for seg in &path[..path.len() - 1] {
        let entry = node
            .entry(seg.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        node = entry
            .as_table_mut()
            .ok_or_else(|| CliError::Config(format!("override '{ov}': '{seg}' is not a table")))?;
    }
    node.insert(path[path.len() - 1].to_string(), parsed);
    Ok(())
}
