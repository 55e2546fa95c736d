//! Stored energy, Gaussian ergotropy and the transfer ratios.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::configs::{DirectionalCouplings, PhaseSet, SetupKind};
use crate::dynamics::MomentState;
use crate::error::{ensure_finite, ensure_nonnegative, Error, Result};

/// `D_b` below `1 - UNPHYSICAL_TOL` is reported as an error.
pub const UNPHYSICAL_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatteryMetrics {
    pub energy: f64,
    pub passive_energy: f64,
    pub d_param: f64,
    pub ergotropy: f64,
    /// `ergotropy / energy`, defined as 0 for an empty battery.
    pub extractable_fraction: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransferMetrics {
    pub r_ratio: Option<f64>,
    pub eta: Option<f64>,
}

/// Determinant of the single-mode covariance (in units where vacuum is 1).
pub fn d_param(mean: Complex64, occupation: f64, anomalous: Complex64) -> f64 {
    let a = 1.0 + 2.0 * occupation - 2.0 * mean.norm_sqr();
    a * a - 4.0 * (anomalous - mean * mean).norm_sqr()
}

/// Metrics of mode `battery_mode` (1 or 2) with frequency `omega_b`.
pub fn battery_metrics(moments: &MomentState, battery_mode: usize, omega_b: f64) -> Result<BatteryMetrics> {
    ensure_nonnegative("omega_b", omega_b)?;
    if !(1..=2).contains(&battery_mode) {
        return Err(Error::InvalidArgument(format!(
            "battery_mode must be 1 or 2, got {battery_mode}"
        )));
    }
    let (m, n, s) = moments.mode(battery_mode - 1);
    ensure_finite("occupation", n)?;
    let d = d_param(m, n, s);
    if !(d >= 1.0 - UNPHYSICAL_TOL) {
        return Err(Error::UnphysicalState { d_param: d });
    }
    let energy = omega_b * n;
    let passive_energy = omega_b * (d.max(1.0).sqrt() - 1.0) / 2.0;
    let ergotropy = (energy - passive_energy).clamp(0.0, energy.max(0.0));
    let extractable_fraction = if energy > 0.0 { ergotropy / energy } else { 0.0 };
    Ok(BatteryMetrics {
        energy,
        passive_energy: energy - ergotropy,
        d_param: d,
        ergotropy,
        extractable_fraction,
    })
}

/// Ergotropy per unit frequency of a mode with zero mean, from its
/// occupation and anomalous moment.
pub fn ergotropy_zero_mean(occupation: f64, anomalous: Complex64) -> f64 {
    let a = 1.0 + 2.0 * occupation;
    occupation - ((a * a - 4.0 * anomalous.norm_sqr()).sqrt() - 1.0) / 2.0
}

pub fn nonreciprocal_ratio(e_b_left: f64, e_b_right: f64) -> Result<f64> {
    ensure_nonnegative("e_b_left", e_b_left)?;
    ensure_nonnegative("e_b_right", e_b_right)?;
    let sum = e_b_left + e_b_right;
    if sum == 0.0 {
        return Err(Error::UndefinedRatio("both battery energies vanish"));
    }
    Ok((e_b_left - e_b_right) / sum)
}

pub fn steady_r_from_couplings(dc: &DirectionalCouplings) -> Result<f64> {
    let f = dc.g_fwd.norm_sqr();
    let b = dc.g_bwd.norm_sqr();
    if f + b == 0.0 {
        return Err(Error::UndefinedRatio("both directional couplings vanish"));
    }
    Ok((f - b) / (f + b))
}

pub fn analytic_r_threepoint(phi2: f64, theta2: f64) -> Result<f64> {
    let den = 1.0 + phi2.cos() * theta2.cos();
    if den.abs() < 1e-14 {
        return Err(Error::SingularPoint(format!(
            "1 + cos(phi2) cos(theta2) vanishes at phi2 = {phi2}, theta2 = {theta2}"
        )));
    }
    Ok(phi2.sin() * theta2.sin() / den)
}

pub fn storage_ratio(e_b_left: f64, e_c_left: f64) -> Result<f64> {
    if !(e_c_left > 0.0) {
        return Err(Error::UndefinedRatio("charger energy is zero"));
    }
    Ok(e_b_left / e_c_left)
}

/// Battery linewidth of the mirror-terminated three-point setup.
pub fn threepoint_mirror_linewidth(phases: &PhaseSet, gamma: f64, kappa2: f64) -> f64 {
    let p = phases;
    let z = Complex64::new((p.phiw + p.phim / 2.0).cos(), 0.0)
        + Complex64::from_polar(1.0, p.theta2) * (p.phiw + p.phi2 + p.phim / 2.0).cos();
    kappa2 + 2.0 * gamma * z.norm_sqr()
}

/// Steady storage ratio of the three-point setups at equal couplings.
pub fn analytic_eta_threepoint(kind: SetupKind, phases: &PhaseSet, gamma: f64, kappa2: f64) -> Result<f64> {
    phases.validate()?;
    ensure_nonnegative("gamma", gamma)?;
    ensure_nonnegative("kappa2", kappa2)?;
    let p = phases;
    let c2 = ((p.phi2 - p.theta2) / 2.0).cos().powi(2);
    let (num, lw) = match kind {
        SetupKind::ThreePointOpen => (
            4.0 * gamma * gamma * c2,
            kappa2 + 2.0 * gamma * (1.0 + p.phi2.cos() * p.theta2.cos()),
        ),
        SetupKind::ThreePointMirror => (
            16.0 * gamma * gamma * (p.phim / 2.0).cos().powi(2) * c2,
            threepoint_mirror_linewidth(phases, gamma, kappa2),
        ),
        _ => {
            return Err(Error::InvalidArgument(format!(
                "analytic storage ratio exists for 3P and 3P+M only, got {kind}"
            )))
        }
    };
    if lw == 0.0 {
        return Err(Error::UndefinedRatio("battery linewidth is zero"));
    }
    Ok(num / (lw * lw))
}

/// The scan form at `phi2 = pi/2` (and `phim = 0` for the mirror setup).
pub fn analytic_eta_threepoint_scan(kind: SetupKind, theta2: f64, phiw: f64, gamma: f64, kappa2: f64) -> Result<f64> {
    let c2 = (std::f64::consts::FRAC_PI_4 - theta2 / 2.0).cos().powi(2);
    let (num, lw) = match kind {
        SetupKind::ThreePointOpen => (4.0 * gamma * gamma * c2, 2.0 * gamma + kappa2),
        SetupKind::ThreePointMirror => (
            16.0 * gamma * gamma * c2,
            kappa2 + 2.0 * gamma * (1.0 - (2.0 * phiw).sin() * theta2.cos()),
        ),
        _ => {
            return Err(Error::InvalidArgument(format!(
                "analytic storage ratio exists for 3P and 3P+M only, got {kind}"
            )))
        }
    };
    if lw == 0.0 {
        return Err(Error::UndefinedRatio("battery linewidth is zero"));
    }
    Ok(num / (lw * lw))
}
