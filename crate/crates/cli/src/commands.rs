use std::path::PathBuf;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use wgqb::configs::{
    closed_form_for_rates, coefficients, directional_couplings, tabulated_coefficients_uncorrected,
    DirectionalCouplings,
};
use wgqb::dynamics::{
    closed_form_linear, closed_form_quadratic_nr, evolve, instability_threshold, second_moment_system,
    stability, steady_state, DriveKind, DriveSide, DriveSpec, Evaluation, MomentState,
};
use wgqb::metrics::{battery_metrics, nonreciprocal_ratio, storage_ratio};
use wgqb::oracle::{compare_with_moments, OracleOptions};
use wgqb::slh::MasterEqCoefficients;
use wgqb::Error;

use crate::config::{grid, Format, RunConfig, ScanMetric};
use crate::output::{ensure_dir, metadata, num, to_json, write_csv, write_json};
use crate::plot;
use crate::CliError;

/// Largest drive amplitude `validate` accepts without an override.
pub const WEAK_DRIVE_LIMIT: f64 = 0.002;
/// Oracle-vs-moments agreement required by `validate`.
pub const VALIDATION_TOL: f64 = 1e-5;
/// `|R| >= 1 - LOCUS_TOL` marks a one-way cell in scan summaries.
pub const LOCUS_TOL: f64 = 1e-6;

/// What a command produced: a JSON document for stdout and the files it
/// wrote.
#[derive(Debug)]
pub struct Outcome {
    pub report: String,
    pub files: Vec<PathBuf>,
}

pub(crate) fn physics(e: Error) -> CliError {
    match e {
        Error::InvalidArgument(m) | Error::UnsupportedNetwork(m) => CliError::Config(m),
        e @ Error::CutoffNotConverged { .. } => CliError::Validation(e.to_string()),
        e => CliError::Physics(e.to_string()),
    }
}

pub fn coefficients_for(cfg: &RunConfig) -> Result<MasterEqCoefficients, CliError> {
    let c = coefficients(cfg.setup, &cfg.phases, &cfg.rates).map_err(physics)?;
    Ok(c.with_effective_detunings(cfg.detuning[0], cfg.detuning[1]))
}

fn wants(cfg: &RunConfig, f: Format) -> bool {
    cfg.output.formats.contains(&f)
}

// ---------------------------------------------------------------- coeffs

#[derive(Debug, Serialize)]
pub struct CoeffReport {
    pub setup: String,
    pub slh: MasterEqCoefficients,
    pub closed_form: Option<MasterEqCoefficients>,
    /// Why `closed_form` is absent, if it is.
    pub closed_form_note: Option<String>,
    /// Max |SLH - closed form| over the six waveguide coefficients.
    pub max_abs_diff: Option<f64>,
    pub max_abs_diff_over_gamma: Option<f64>,
    /// Max |SLH - tabulated| with the two known table corrections undone.
    pub uncorrected_table_diff: Option<f64>,
    pub directional: DirectionalCouplings,
    pub g_fwd_abs: f64,
    pub g_bwd_abs: f64,
    pub nonreciprocal: bool,
    pub nonreciprocal_tol: f64,
}

pub fn coeff_report(cfg: &RunConfig) -> Result<CoeffReport, CliError> {
    let slh = coefficients_for(cfg)?;
    let (closed_form, note) = match closed_form_for_rates(cfg.setup, &cfg.phases, &cfg.rates) {
        Ok(c) => (Some(c.with_effective_detunings(cfg.detuning[0], cfg.detuning[1])), None),
        Err(e) => (None, Some(e.to_string())),
    };
    let diff = closed_form.map(|c| slh.max_waveguide_diff(&c));
    let gamma = cfg.rates.gamma;
    let uncorrected = closed_form.and_then(|_| {
        tabulated_coefficients_uncorrected(cfg.setup, &cfg.phases, gamma, cfg.rates.kappa1, cfg.rates.kappa2)
            .ok()
            .map(|t| slh.max_waveguide_diff(&t))
    });
    let dc = directional_couplings(&slh);
    let tol = 1e-12 * gamma;
    Ok(CoeffReport {
        setup: cfg.setup.to_string(),
        slh,
        closed_form,
        closed_form_note: note,
        max_abs_diff: diff,
        max_abs_diff_over_gamma: diff.filter(|_| gamma > 0.0).map(|d| d / gamma),
        uncorrected_table_diff: uncorrected,
        directional: dc,
        g_fwd_abs: dc.g_fwd.norm(),
        g_bwd_abs: dc.g_bwd.norm(),
        nonreciprocal: dc.g_bwd.norm() <= tol && dc.g_fwd.norm() > tol,
        nonreciprocal_tol: tol,
    })
}

pub fn cmd_coeffs(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let report = coeff_report(cfg)?;
    let mut files = Vec::new();
    if wants(cfg, Format::Json) {
        let dir = ensure_dir(&cfg.output.directory)?;
        let p = dir.join("coeffs.json");
        write_json(&p, &report)?;
        files.push(p);
    }
    Ok(Outcome { report: to_json(&report)?, files })
}

// -------------------------------------------------------------- dynamics

#[derive(Debug, Clone, Serialize)]
pub struct DynamicsRow {
    pub t_scaled: f64,
    pub e_b: f64,
    pub e_c: f64,
    pub ergotropy: f64,
    pub zeta: f64,
    pub e_b_closed: Option<f64>,
    pub e_c_closed: Option<f64>,
    pub residual: Option<f64>,
    pub closed_path: Option<Evaluation>,
}

#[derive(Debug, Serialize)]
pub struct SideSummary {
    pub side: DriveSide,
    pub final_e_b: f64,
    pub final_e_c: f64,
    pub final_ergotropy: f64,
    pub final_zeta: f64,
    pub max_residual: Option<f64>,
    pub closed_form_points: usize,
    pub numerical_points: usize,
    pub max_real_eigenvalue: f64,
}

fn stability_refusal(coeffs: &MasterEqCoefficients, drive: &DriveSpec) -> Result<(), CliError> {
    let rep = stability(coeffs, drive).map_err(physics)?;
    if rep.stable {
        return Ok(());
    }
    let eig: Vec<[f64; 2]> = rep.eigenvalues.iter().map(|z| [z.re, z.im]).collect();
    Err(CliError::Physics(format!(
        "{} drive is unstable: max Re(lambda) = {:e}; eigenvalues {:?}",
        drive.side.label(),
        rep.max_real,
        eig
    )))
}

/// Moment trajectory and metrics for one drive side on the configured grid.
pub fn dynamics_rows(cfg: &RunConfig, side: DriveSide) -> Result<(Vec<DynamicsRow>, SideSummary), CliError> {
    if !(cfg.rates.gamma > 0.0) {
        return Err(CliError::Config("rates.gamma must be positive for a time grid in units of 1/gamma".into()));
    }
    let coeffs = coefficients_for(cfg)?;
    let drive = cfg.drive_for(side);
    if drive.kind == DriveKind::Quadratic {
        stability_refusal(&coeffs, &drive)?;
    }
    let max_real = stability(&coeffs, &drive).map_err(physics)?.max_real;
    let times = cfg.times();
    let sys = second_moment_system(&coeffs, &drive);
    let traj = evolve(&sys, &sys.vacuum(), &times).map_err(physics)?;
    let (bm, cm) = (drive.battery_mode(), drive.driven_mode());
    let (wb, wc) = (drive.omega_battery(), drive.omega_charger());
    let mut rows = Vec::with_capacity(times.len());
    let (mut n_cf, mut n_num) = (0, 0);
    let mut max_res: Option<f64> = None;
    for (k, &t) in times.iter().enumerate() {
        let m = traj.moments(k);
        let b = battery_metrics(&m, bm + 1, wb).map_err(physics)?;
        let e_c = wc * m.mode(cm).1;
        let closed = match drive.kind {
            DriveKind::Linear => closed_form_linear(&coeffs, &drive, t).ok().map(|e| (e.e_b, e.e_c, e.via)),
            DriveKind::Quadratic => closed_form_quadratic_nr(&coeffs, &drive, t).ok().map(|e| (e.e_b, e.e_c, e.via)),
        };
        let residual = closed.map(|(cb, cc, _)| (cb - b.energy).abs().max((cc - e_c).abs()));
        if let Some((_, _, via)) = closed {
            match via {
                Evaluation::ClosedForm => n_cf += 1,
                Evaluation::Numerical => n_num += 1,
            }
        }
        if let Some(r) = residual {
            max_res = Some(max_res.map_or(r, |m: f64| m.max(r)));
        }
        rows.push(DynamicsRow {
            t_scaled: t * cfg.rates.gamma,
            e_b: b.energy / wb,
            e_c: e_c / wc,
            ergotropy: b.ergotropy / wb,
            zeta: b.extractable_fraction,
            e_b_closed: closed.map(|c| c.0 / wb),
            e_c_closed: closed.map(|c| c.1 / wc),
            residual,
            closed_path: closed.map(|c| c.2),
        });
    }
    let last = rows.last().expect("grid has at least two points");
    let summary = SideSummary {
        side,
        final_e_b: last.e_b,
        final_e_c: last.e_c,
        final_ergotropy: last.ergotropy,
        final_zeta: last.zeta,
        max_residual: max_res,
        closed_form_points: n_cf,
        numerical_points: n_num,
        max_real_eigenvalue: max_real,
    };
    Ok((rows, summary))
}

pub fn cmd_dynamics(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let mut runs = Vec::new();
    for side in cfg.sides.list() {
        runs.push(dynamics_rows(cfg, side)?);
    }
    let dir = ensure_dir(&cfg.output.directory)?;
    let mut files = Vec::new();
    let header = [
        "t_scaled",
        "E_b_over_wb",
        "E_c_over_wc",
        "ergotropy_over_wb",
        "zeta",
        "E_b_closed_over_wb",
        "E_c_closed_over_wc",
        "closed_form_residual",
        "closed_form_path",
    ];
    for (rows, summary) in &runs {
        let side = summary.side.label();
        if wants(cfg, Format::Csv) {
            let table: Vec<Vec<String>> = rows
                .iter()
                .map(|r| {
                    vec![
                        num(Some(r.t_scaled)),
                        num(Some(r.e_b)),
                        num(Some(r.e_c)),
                        num(Some(r.ergotropy)),
                        num(Some(r.zeta)),
                        num(r.e_b_closed),
                        num(r.e_c_closed),
                        num(r.residual),
                        r.closed_path
                            .map(|p| match p {
                                Evaluation::ClosedForm => "closed_form".to_string(),
                                Evaluation::Numerical => "numerical".to_string(),
                            })
                            .unwrap_or_default(),
                    ]
                })
                .collect();
            let mut meta = metadata(cfg, "dynamics");
            meta.push(format!("drive side: {side}"));
            let p = dir.join(format!("dynamics_{side}.csv"));
            write_csv(&p, &meta, &header, &table)?;
            files.push(p);
        }
        if cfg.output.plots {
            let x: Vec<f64> = rows.iter().map(|r| r.t_scaled).collect();
            let series = [
                ("E_b/w_b", rows.iter().map(|r| r.e_b).collect::<Vec<_>>()),
                ("E_c/w_c", rows.iter().map(|r| r.e_c).collect()),
                ("W_b/w_b", rows.iter().map(|r| r.ergotropy).collect()),
            ];
            let p = dir.join(format!("dynamics_{side}.svg"));
            plot::write_lines(&p, &format!("{} {side} drive", cfg.setup), "gamma t", &x, &series)?;
            files.push(p);
        }
    }
    let summaries: Vec<&SideSummary> = runs.iter().map(|(_, s)| s).collect();
    if wants(cfg, Format::Json) {
        let p = dir.join("dynamics.json");
        write_json(&p, &summaries)?;
        files.push(p);
    }
    Ok(Outcome { report: to_json(&summaries)?, files })
}

// ------------------------------------------------------------------ scan

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct CellValues {
    pub r: Option<f64>,
    pub eta: Option<f64>,
    pub zeta: Option<f64>,
}

impl CellValues {
    pub fn get(&self, m: ScanMetric) -> Option<f64> {
        match m {
            ScanMetric::R => self.r,
            ScanMetric::Eta => self.eta,
            ScanMetric::Zeta => self.zeta,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ScanGrid {
    pub axis1: Vec<f64>,
    pub axis2: Vec<f64>,
    /// Row-major: `cells[i * axis2.len() + j]`.
    pub cells: Vec<CellValues>,
}

impl ScanGrid {
    pub fn at(&self, i: usize, j: usize) -> &CellValues {
        &self.cells[i * self.axis2.len() + j]
    }
}

fn is_resonant(c: &MasterEqCoefficients) -> bool {
    c.detuning_eff_1 == 0.0 && c.detuning_eff_2 == 0.0
}

// (battery energy, charger energy) in the steady state.
fn steady_energies(c: &MasterEqCoefficients, drive: &DriveSpec) -> Option<(f64, f64)> {
    if drive.kind == DriveKind::Linear && is_resonant(c) {
        return closed_form_linear(c, drive, f64::INFINITY).ok().map(|e| (e.e_b, e.e_c));
    }
    let m = steady_moments(c, drive)?;
    Some((drive.omega_battery() * m.mode(drive.battery_mode()).1, drive.omega_charger() * m.mode(drive.driven_mode()).1))
}

fn steady_moments(c: &MasterEqCoefficients, drive: &DriveSpec) -> Option<MomentState> {
    let sys = second_moment_system(c, drive);
    steady_state(&sys).ok().map(|x| MomentState::from_vector(&sys.labels, &x))
}

/// Steady-state metrics for one configuration. Anything undefined (no
/// steady state, 0/0 ratio, invalid swept value) is `None`.
pub fn scan_cell(cfg: &RunConfig, metrics: &[ScanMetric]) -> CellValues {
    let Ok(c) = coefficients_for(cfg) else {
        return CellValues::default();
    };
    if cfg.drive.validate().is_err() {
        return CellValues::default();
    }
    let left = cfg.drive_for(DriveSide::Left);
    let mut out = CellValues::default();
    let need_left = metrics.iter().any(|m| matches!(m, ScanMetric::R | ScanMetric::Eta));
    let el = if need_left { steady_energies(&c, &left) } else { None };
    if metrics.contains(&ScanMetric::R) {
        let er = steady_energies(&c, &cfg.drive_for(DriveSide::Right));
        out.r = match (el, er) {
            (Some((l, _)), Some((r, _))) => nonreciprocal_ratio(l, r).ok(),
            _ => None,
        };
    }
    if metrics.contains(&ScanMetric::Eta) {
        out.eta = el.and_then(|(b, ch)| storage_ratio(b, ch).ok());
    }
    if metrics.contains(&ScanMetric::Zeta) {
        out.zeta = steady_moments(&c, &left)
            .and_then(|m| battery_metrics(&m, left.battery_mode() + 1, left.omega_battery()).ok())
            .map(|b| b.extractable_fraction);
    }
    out
}

pub fn scan_grid(cfg: &RunConfig) -> ScanGrid {
    let (a1, a2) = (cfg.sweep.axis1, cfg.sweep.axis2);
    let (v1, v2) = (a1.values(), a2.values());
    let n2 = v2.len();
    let metrics = cfg.sweep.metrics.clone();
    let cells = (0..v1.len() * n2)
        .into_par_iter()
        .map(|k| {
            let mut c = cfg.clone();
            a1.param.apply(&mut c, v1[k / n2]);
            a2.param.apply(&mut c, v2[k % n2]);
            scan_cell(&c, &metrics)
        })
        .collect();
    ScanGrid { axis1: v1, axis2: v2, cells }
}

#[derive(Debug, Serialize)]
pub struct Extremum {
    pub value: f64,
    pub axis1: f64,
    pub axis2: f64,
}

#[derive(Debug, Serialize)]
pub struct MetricSummary {
    pub metric: &'static str,
    pub defined: usize,
    pub undefined: usize,
    pub min: Option<Extremum>,
    pub max: Option<Extremum>,
    /// `(axis1, axis2)` cells with `|R| >= 1 - 1e-6`; R only.
    pub one_way_loci: Option<Vec<[f64; 2]>>,
}

#[derive(Debug, Serialize)]
pub struct ScanSummary {
    pub axis1: String,
    pub axis2: String,
    pub steps: [usize; 2],
    pub metrics: Vec<MetricSummary>,
}

pub fn summarize(cfg: &RunConfig, g: &ScanGrid) -> ScanSummary {
    let n2 = g.axis2.len();
    let mut metrics = Vec::new();
    for &m in &cfg.sweep.metrics {
        let (mut lo, mut hi): (Option<Extremum>, Option<Extremum>) = (None, None);
        let mut defined = 0;
        let mut loci = Vec::new();
        for (k, cell) in g.cells.iter().enumerate() {
            let Some(v) = cell.get(m) else { continue };
            defined += 1;
            let (x, y) = (g.axis1[k / n2], g.axis2[k % n2]);
            if lo.as_ref().is_none_or(|e| v < e.value) {
                lo = Some(Extremum { value: v, axis1: x, axis2: y });
            }
            if hi.as_ref().is_none_or(|e| v > e.value) {
                hi = Some(Extremum { value: v, axis1: x, axis2: y });
            }
            if m == ScanMetric::R && v.abs() >= 1.0 - LOCUS_TOL {
                loci.push([x, y]);
            }
        }
        metrics.push(MetricSummary {
            metric: m.label(),
            defined,
            undefined: g.cells.len() - defined,
            min: lo,
            max: hi,
            one_way_loci: (m == ScanMetric::R).then_some(loci),
        });
    }
    ScanSummary {
        axis1: cfg.sweep.axis1.param.name().into(),
        axis2: cfg.sweep.axis2.param.name().into(),
        steps: [g.axis1.len(), g.axis2.len()],
        metrics,
    }
}

pub fn cmd_scan(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let g = scan_grid(cfg);
    let summary = summarize(cfg, &g);
    let dir = ensure_dir(&cfg.output.directory)?;
    let mut files = Vec::new();
    let (n1, n2) = (cfg.sweep.axis1.param.name(), cfg.sweep.axis2.param.name());
    for &m in &cfg.sweep.metrics {
        if wants(cfg, Format::Csv) {
            let rows: Vec<Vec<String>> = g
                .cells
                .iter()
                .enumerate()
                .map(|(k, c)| {
                    let (i, j) = (k / g.axis2.len(), k % g.axis2.len());
                    vec![i.to_string(), j.to_string(), num(Some(g.axis1[i])), num(Some(g.axis2[j])), num(c.get(m))]
                })
                .collect();
            let mut meta = metadata(cfg, "scan");
            meta.push(format!("metric: {}", m.label()));
            let p = dir.join(format!("scan_{}.csv", m.label()));
            write_csv(&p, &meta, &["i", "j", n1, n2, m.label()], &rows)?;
            files.push(p);
        }
        if cfg.output.plots {
            let values: Vec<Option<f64>> = g.cells.iter().map(|c| c.get(m)).collect();
            let p = dir.join(format!("scan_{}.svg", m.label()));
            plot::write_heatmap(&p, &format!("{} {}", cfg.setup, m.label()), n1, n2, &g.axis1, &g.axis2, &values)?;
            files.push(p);
        }
    }
    if wants(cfg, Format::Json) {
        let p = dir.join("scan_summary.json");
        write_json(&p, &summary)?;
        files.push(p);
    }
    Ok(Outcome { report: to_json(&summary)?, files })
}

// ------------------------------------------------------------- stability

#[derive(Debug, Serialize)]
pub struct StabilityEntry {
    pub side: DriveSide,
    pub eigenvalues: Vec<Complex64>,
    pub max_real: f64,
    pub stable: bool,
    /// Quadratic amplitude where the drift first becomes unstable.
    pub quadratic_threshold: Option<f64>,
    pub threshold_note: Option<String>,
}

pub fn stability_entries(cfg: &RunConfig) -> Result<Vec<StabilityEntry>, CliError> {
    let coeffs = coefficients_for(cfg)?;
    let mut out = Vec::new();
    for side in cfg.sides.list() {
        let rep = stability(&coeffs, &cfg.drive_for(side)).map_err(physics)?;
        let (thr, note) = match instability_threshold(&coeffs, side, 1e-12) {
            Ok(v) => (Some(v), None),
            Err(e) => (None, Some(e.to_string())),
        };
        out.push(StabilityEntry {
            side,
            eigenvalues: rep.eigenvalues,
            max_real: rep.max_real,
            stable: rep.stable,
            quadratic_threshold: thr,
            threshold_note: note,
        });
    }
    Ok(out)
}

pub fn cmd_stability(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let entries = stability_entries(cfg)?;
    let mut files = Vec::new();
    if wants(cfg, Format::Json) {
        let dir = ensure_dir(&cfg.output.directory)?;
        let p = dir.join("stability.json");
        write_json(&p, &entries)?;
        files.push(p);
    }
    Ok(Outcome { report: to_json(&entries)?, files })
}

// -------------------------------------------------------------- validate

#[derive(Debug, Serialize)]
pub struct ValidationEntry {
    pub side: DriveSide,
    pub pass: bool,
    pub cutoff: Option<usize>,
    pub reference_cutoff: Option<usize>,
    pub cutoff_change: Option<f64>,
    /// m1, m2, n1, n2, x12, s1, s2, s12.
    pub per_moment: Option<[f64; 8]>,
    pub max_deviation: Option<f64>,
    pub max_battery_occupation: Option<f64>,
    pub diagnostic: Option<String>,
}

#[derive(Debug, Serialize)]
pub struct ValidationReport {
    pub tolerance: f64,
    pub pass: bool,
    pub entries: Vec<ValidationEntry>,
}

pub fn validation_report(cfg: &RunConfig) -> Result<ValidationReport, CliError> {
    if cfg.drive.amplitude > WEAK_DRIVE_LIMIT && !cfg.validate.allow_strong_drive {
        return Err(CliError::Config(format!(
            "drive amplitude {} exceeds the weak-drive limit {WEAK_DRIVE_LIMIT}; set validate.allow_strong_drive to override",
            cfg.drive.amplitude
        )));
    }
    if !(cfg.rates.gamma > 0.0) {
        return Err(CliError::Config("rates.gamma must be positive".into()));
    }
    let coeffs = coefficients_for(cfg)?;
    let times = grid(cfg.time.t_max / cfg.rates.gamma, cfg.validate.n_points);
    let mut entries = Vec::new();
    for side in cfg.sides.list() {
        let drive = cfg.drive_for(side);
        if drive.kind == DriveKind::Quadratic {
            stability_refusal(&coeffs, &drive)?;
        }
        let entry = match compare_with_moments(&coeffs, &drive, &times, &OracleOptions::default()) {
            Ok(c) => ValidationEntry {
                side,
                pass: c.max_deviation <= VALIDATION_TOL,
                cutoff: Some(c.cutoff),
                reference_cutoff: Some(c.reference_cutoff),
                cutoff_change: Some(c.cutoff_change),
                per_moment: Some(c.per_moment),
                max_deviation: Some(c.max_deviation),
                max_battery_occupation: Some(c.max_battery_occupation),
                diagnostic: None,
            },
            Err(e) => ValidationEntry {
                side,
                pass: false,
                cutoff: None,
                reference_cutoff: None,
                cutoff_change: None,
                per_moment: None,
                max_deviation: None,
                max_battery_occupation: None,
                diagnostic: Some(e.to_string()),
            },
        };
        entries.push(entry);
    }
    Ok(ValidationReport { tolerance: VALIDATION_TOL, pass: entries.iter().all(|e| e.pass), entries })
}

pub fn cmd_validate(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let report = validation_report(cfg)?;
    let text = to_json(&report)?;
    let mut files = Vec::new();
    if wants(cfg, Format::Json) {
        let dir = ensure_dir(&cfg.output.directory)?;
        let p = dir.join("validate.json");
        write_json(&p, &report)?;
        files.push(p);
    }
    if report.pass {
        Ok(Outcome { report: text, files })
    } else {
        Err(CliError::Validation(text))
    }
}
