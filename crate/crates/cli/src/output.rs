use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::RunConfig;
use crate::CliError;

pub const TOOL_VERSION: &str = concat!("wgqb ", env!("CARGO_PKG_VERSION"));

/// 15 significant digits; `None` and non-finite values become empty cells.
pub fn num(x: Option<f64>) -> String {
    match x {
        Some(v) if v.is_finite() => format!("{v:.14e}"),
        _ => String::new(),
    }
}

/// Comment lines describing the run, written above the CSV header.
pub fn metadata(cfg: &RunConfig, command: &str) -> Vec<String> {
    let p = cfg.phases;
    let r = cfg.rates;
    let d = cfg.drive;
    vec![
        format!("tool: {TOOL_VERSION}"),
        format!("command: {command}"),
        format!("setup: {}", cfg.setup),
        format!(
            "phases: phi1={} phiw={} phi2={} phim={} theta1={} theta2={}",
            p.phi1, p.phiw, p.phi2, p.phim, p.theta1, p.theta2
        ),
        format!(
            "rates: gamma={} gamma11={} gamma12={} gamma21={} gamma22={} gamma1={} kappa1={} kappa2={}",
            r.gamma, r.gamma11, r.gamma12, r.gamma21, r.gamma22, r.gamma1, r.kappa1, r.kappa2
        ),
        format!(
            "drive: kind={} amplitude={} omega1={} omega2={}",
            match d.kind {
                wgqb::dynamics::DriveKind::Linear => "linear",
                wgqb::dynamics::DriveKind::Quadratic => "quadratic",
            },
            d.amplitude,
            d.omega1,
            d.omega2
        ),
        format!("detuning: delta1={} delta2={}", cfg.detuning[0], cfg.detuning[1]),
        format!("time: t_max={} (1/gamma) n_points={}", cfg.time.t_max, cfg.time.n_points),
    ]
}

pub fn write_csv(path: &Path, meta: &[String], header: &[&str], rows: &[Vec<String>]) -> Result<(), CliError> {
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut out = BufWriter::new(file);
    for line in meta {
        writeln!(out, "# {line}").map_err(|e| CliError::io(path, e))?;
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    for row in rows {
        w.write_record(row).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = to_json(value)?;
    std::fs::write(path, text + "\n").map_err(|e| CliError::io(path, e))
}

pub fn to_json<T: Serialize>(value: &T) -> Result<String, CliError> {
    serde_json::to_string_pretty(value).map_err(|e| CliError::Io(format!("json: {e}")))
}

pub fn ensure_dir(dir: &Path) -> Result<PathBuf, CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    Ok(dir.to_path_buf())
}
