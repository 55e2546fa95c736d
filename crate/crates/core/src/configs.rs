//! The four coupling geometries, their closed-form coefficients and the
//! directional couplings derived from them.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, FRAC_PI_6, PI, TAU};
use std::fmt;
use std::str::FromStr;

use nalgebra::Matrix2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, ensure_nonnegative, Error, Result};
use crate::slh::{
    chain, concatenate, coupling_point, extract_coefficients, phase_element, MasterEqCoefficients,
    SlhTriplet,
};

/// Default tolerance factor for [`is_nonreciprocal`], relative to gamma.
pub const NONRECIPROCAL_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SetupKind {
    #[serde(rename = "4P")]
    FourPointOpen,
    #[serde(rename = "4P+M")]
    FourPointMirror,
    #[serde(rename = "3P")]
    ThreePointOpen,
    #[serde(rename = "3P+M")]
    ThreePointMirror,
}

impl SetupKind {
    pub const ALL: [SetupKind; 4] = [
        SetupKind::FourPointOpen,
        SetupKind::FourPointMirror,
        SetupKind::ThreePointOpen,
        SetupKind::ThreePointMirror,
    ];

    pub fn label(self) -> &'static str {
        match self {
            SetupKind::FourPointOpen => "4P",
            SetupKind::FourPointMirror => "4P+M",
            SetupKind::ThreePointOpen => "3P",
            SetupKind::ThreePointMirror => "3P+M",
        }
    }

    pub fn is_mirror(self) -> bool {
        matches!(self, SetupKind::FourPointMirror | SetupKind::ThreePointMirror)
    }

    pub fn is_four_point(self) -> bool {
        matches!(self, SetupKind::FourPointOpen | SetupKind::FourPointMirror)
    }
}

impl fmt::Display for SetupKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for SetupKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().replace(['_', '-', ' '], "").as_str() {
            "4P" | "FOURPOINTOPEN" => Ok(SetupKind::FourPointOpen),
            "4P+M" | "4PM" | "FOURPOINTMIRROR" => Ok(SetupKind::FourPointMirror),
            "3P" | "THREEPOINTOPEN" => Ok(SetupKind::ThreePointOpen),
            "3P+M" | "3PM" | "THREEPOINTMIRROR" => Ok(SetupKind::ThreePointMirror),
            _ => Err(Error::InvalidArgument(format!("unknown setup kind '{s}'"))),
        }
    }
}

/// Propagation phases, mirror phase and local coupling phases (radians).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PhaseSet {
    pub phi1: f64,
    pub phiw: f64,
    pub phi2: f64,
    pub phim: f64,
    pub theta1: f64,
    pub theta2: f64,
}

impl PhaseSet {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in self.named() {
            ensure_finite(name, v)?;
        }
        Ok(())
    }

    pub fn named(&self) -> [(&'static str, f64); 6] {
        [
            ("phi1", self.phi1),
            ("phiw", self.phiw),
            ("phi2", self.phi2),
            ("phim", self.phim),
            ("theta1", self.theta1),
            ("theta2", self.theta2),
        ]
    }

    /// Copy with every phase wrapped into [0, 2pi). For reporting only.
    pub fn canonical(&self) -> Self {
        let w = |x: f64| x.rem_euclid(TAU);
        Self {
            phi1: w(self.phi1),
            phiw: w(self.phiw),
            phi2: w(self.phi2),
            phim: w(self.phim),
            theta1: w(self.theta1),
            theta2: w(self.theta2),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CouplingRates {
    pub gamma11: f64,
    pub gamma12: f64,
    pub gamma21: f64,
    pub gamma22: f64,
    /// Single coupling point of mode 1 in the three-point setups.
    pub gamma1: f64,
    pub gamma: f64,
    pub kappa1: f64,
    pub kappa2: f64,
}

impl CouplingRates {
    pub fn equal(gamma: f64, kappa1: f64, kappa2: f64) -> Self {
        Self {
            gamma11: gamma,
            gamma12: gamma,
            gamma21: gamma,
            gamma22: gamma,
            gamma1: gamma,
            gamma,
            kappa1,
            kappa2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        ensure_nonnegative("gamma11", self.gamma11)?;
        ensure_nonnegative("gamma12", self.gamma12)?;
        ensure_nonnegative("gamma21", self.gamma21)?;
        ensure_nonnegative("gamma22", self.gamma22)?;
        ensure_nonnegative("gamma1", self.gamma1)?;
        ensure_nonnegative("gamma", self.gamma)?;
        ensure_nonnegative("kappa1", self.kappa1)?;
        ensure_nonnegative("kappa2", self.kappa2)
    }

    /// True when every per-point rate equals `gamma`.
    pub fn is_equal_coupling(&self) -> bool {
        [self.gamma11, self.gamma12, self.gamma21, self.gamma22, self.gamma1]
            .iter()
            .all(|&g| g == self.gamma)
    }
}

/// Effective forward (charger to battery) and backward couplings plus the
/// linewidth combinations used by the closed forms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DirectionalCouplings {
    pub g_fwd: Complex64,
    pub g_bwd: Complex64,
    pub lambda_sum: f64,
    pub lambda_diff: f64,
    pub s_param: Complex64,
}

impl DirectionalCouplings {
    /// The same quantities with the roles of the two modes exchanged, as seen
    /// by a drive on mode 2.
    pub fn swapped(&self) -> Self {
        let s2 = self.lambda_diff * self.lambda_diff + 16.0 * self.g_fwd * self.g_bwd;
        Self {
            g_fwd: self.g_bwd,
            g_bwd: self.g_fwd,
            lambda_sum: self.lambda_sum,
            lambda_diff: -self.lambda_diff,
            s_param: s2.sqrt(),
        }
    }
}

pub fn directional_couplings(coeffs: &MasterEqCoefficients) -> DirectionalCouplings {
    let i = Complex64::i();
    let j = coeffs.exchange;
    let g12 = coeffs.collective;
    let g_fwd = -i * j - g12 / 2.0;
    let g_bwd = -i * j.conj() - g12.conj() / 2.0;
    let lambda_sum = coeffs.linewidth_1 + coeffs.linewidth_2;
    let lambda_diff = coeffs.linewidth_2 - coeffs.linewidth_1;
    let s2 = Complex64::new(lambda_diff * lambda_diff, 0.0) + 16.0 * g_bwd * g_fwd;
    DirectionalCouplings {
        g_fwd,
        g_bwd,
        lambda_sum,
        lambda_diff,
        s_param: s2.sqrt(),
    }
}

/// Representative phase tuple with `g_bwd = 0` for each geometry. For the
/// three-point kinds `phiw` is free; the value here is the default.
pub fn nonreciprocal_point(kind: SetupKind) -> PhaseSet {
    match kind {
        SetupKind::FourPointOpen => PhaseSet {
            phi1: 0.0,
            phiw: PI,
            phi2: FRAC_PI_2,
            phim: 0.0,
            theta1: 0.0,
            theta2: FRAC_PI_2,
        },
        SetupKind::FourPointMirror => PhaseSet {
            phi1: 0.0,
            phiw: FRAC_PI_4,
            phi2: FRAC_PI_6,
            phim: 2.0 * PI / 3.0,
            theta1: 0.0,
            theta2: 1.5 * PI,
        },
        SetupKind::ThreePointOpen | SetupKind::ThreePointMirror => PhaseSet {
            phi1: 0.0,
            phiw: PI,
            phi2: FRAC_PI_2,
            phim: 0.0,
            theta1: 0.0,
            theta2: FRAC_PI_2,
        },
    }
}

pub fn is_nonreciprocal(coeffs: &MasterEqCoefficients, tol: f64) -> Result<bool> {
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tol must be positive, got {tol}")));
    }
    Ok(directional_couplings(coeffs).g_bwd.norm() <= tol)
}

fn point(mode: usize, rate: f64, phase: f64) -> Result<SlhTriplet> {
    coupling_point(mode, rate, phase, Matrix2::zeros())
}

/// Composes the network for `kind`. Open geometries give two channels
/// (right-going then left-going); mirror geometries give one channel that
/// runs leftward, reflects and runs back to the right.
pub fn build_network(kind: SetupKind, phases: &PhaseSet, rates: &CouplingRates) -> Result<SlhTriplet> {
    phases.validate()?;
    rates.validate()?;
    let p = phases;
    let r = rates;
    let ph = phase_element;
    // Elements listed left to right along the waveguide.
    let line: Vec<SlhTriplet> = match kind {
        SetupKind::FourPointOpen => vec![
            point(1, r.gamma11, 0.0)?,
            ph(p.phi1)?,
            point(1, r.gamma12, p.theta1)?,
            ph(p.phiw)?,
            point(2, r.gamma21, 0.0)?,
            ph(p.phi2)?,
            point(2, r.gamma22, p.theta2)?,
        ],
        // With the mirror on the left, phi2 separates the two mode-1 points
        // and phi1 the two mode-2 points.
        SetupKind::FourPointMirror => vec![
            point(1, r.gamma11, 0.0)?,
            ph(p.phi2)?,
            point(1, r.gamma12, p.theta1)?,
            ph(p.phiw)?,
            point(2, r.gamma21, 0.0)?,
            ph(p.phi1)?,
            point(2, r.gamma22, p.theta2)?,
        ],
        SetupKind::ThreePointOpen | SetupKind::ThreePointMirror => vec![
            point(1, r.gamma1, 0.0)?,
            ph(p.phiw)?,
            point(2, r.gamma21, 0.0)?,
            ph(p.phi2)?,
            point(2, r.gamma22, p.theta2)?,
        ],
    };
    let right = chain(&line)?;
    let reversed: Vec<SlhTriplet> = line.into_iter().rev().collect();
    let left = chain(&reversed)?;
    if kind.is_mirror() {
        chain(&[left, ph(p.phim)?, right])
    } else {
        Ok(concatenate(&right, &left))
    }
}

/// SLH-derived coefficients for a geometry.
pub fn coefficients(kind: SetupKind, phases: &PhaseSet, rates: &CouplingRates) -> Result<MasterEqCoefficients> {
    extract_coefficients(&build_network(kind, phases, rates)?, rates.kappa1, rates.kappa2)
}

struct Cells {
    d1: f64,
    d2: f64,
    j: Complex64,
    g1: f64,
    g2: f64,
    g12: Complex64,
}

fn tabulated(kind: SetupKind, p: &PhaseSet, g: f64) -> Cells {
    let (f1, fw, f2, fm, t1, t2) = (p.phi1, p.phiw, p.phi2, p.phim, p.theta1, p.theta2);
    let e = |x: f64| Complex64::from_polar(1.0, x);
    let (s, c) = (f64::sin, f64::cos);
    let i = Complex64::i();
    match kind {
        SetupKind::FourPointOpen => Cells {
            d1: g * s(f1) * c(t1),
            d2: g * s(f2) * c(t2),
            j: g / 2.0
                * (s(f1 + fw) + e(-t2) * s(f1 + fw + f2) + e(t1) * s(fw) + e(t1 - t2) * s(fw + f2)),
            g1: 2.0 * g * (1.0 + c(f1) * c(t1)),
            g2: 2.0 * g * (1.0 + c(f2) * c(t2)),
            g12: g * (e(t2 - t1) * c(fw + f2) + e(t2) * c(f1 + fw + f2) + e(-t1) * c(fw) + c(f1 + fw)),
        },
        SetupKind::FourPointMirror => {
            let a = fw + f1 / 2.0 + f2 + fm / 2.0;
            Cells {
                d1: g * c(t1) * (s(f2) + s(fm + f2)) + g / 2.0 * s(fm) + g / 2.0 * s(fm + 2.0 * f2),
                d2: g / 2.0 * s(fm + 2.0 * f2 + 2.0 * fw)
                    + g / 2.0 * s(fm + 2.0 * f2 + 2.0 * fw + 2.0 * f1)
                    + g * c(t2) * (s(f1) + s(fm + 2.0 * f2 + 2.0 * fw + f1)),
                j: -i * g
                    * e(t2 / 2.0)
                    * (c(fm / 2.0) + e(-t1) * c(f2 + fm / 2.0))
                    * (e(-a) * c((t2 - f1) / 2.0) - e(a) * c((t2 + f1) / 2.0)),
                g1: g * (1.0 + c(fm))
                    + g * (1.0 + c(fm + 2.0 * f2))
                    + 2.0 * g * c(t1) * (c(f2) + c(fm + f2)),
                g2: g * (1.0 + c(fm + 2.0 * f2 + 2.0 * fw))
                    + g * (1.0 + c(2.0 * f1 + fm + 2.0 * f2 + 2.0 * fw))
                    + 2.0 * g * c(t2) * (c(f1) + c(f1 + fm + 2.0 * f2 + 2.0 * fw)),
                g12: 2.0
                    * g
                    * (e(t1) * c(f2 + fm / 2.0) + c(fm / 2.0))
                    * (c(fw + f2 + fm / 2.0) + e(-t2) * c(f1 + fw + f2 + fm / 2.0)),
            }
        }
        SetupKind::ThreePointOpen => Cells {
            d1: 0.0,
            d2: g * s(f2) * c(t2),
            j: g / 2.0 * (s(fw) + e(-t2) * s(fw + f2)),
            g1: g,
            g2: 2.0 * g * (1.0 + c(f2) * c(t2)),
            g12: g * (c(fw) + e(-t2) * c(fw + f2)),
        },
        SetupKind::ThreePointMirror => Cells {
            d1: g / 2.0 * s(fm),
            d2: g / 2.0 * s(fm + 2.0 * fw)
                + g / 2.0 * s(fm + 2.0 * fw + 2.0 * f2)
                + g * c(t2) * (s(f2) + s(fm + 2.0 * fw + f2)),
            j: g / 2.0 * (s(fw) + s(fm + fw) + e(-t2) * (s(fw + f2) + s(fm + fw + f2))),
            g1: g * (1.0 + c(fm)),
            g2: g * (1.0 + c(fm + 2.0 * fw))
                + g * (1.0 + c(fm + 2.0 * fw + 2.0 * f2))
                + 2.0 * g * c(t2) * (c(f2) + c(fm + 2.0 * fw + f2)),
            g12: g * (c(fw) + c(fm + fw) + e(-t2) * (c(fw + f2) + c(fm + fw + f2))),
        },
    }
}

fn to_coefficients(cells: Cells, kappa1: f64, kappa2: f64) -> MasterEqCoefficients {
    MasterEqCoefficients::new(
        [cells.d1, cells.d2],
        cells.j,
        [cells.g1, cells.g2],
        cells.g12,
        kappa1,
        kappa2,
    )
}

fn check_closed_form_inputs(phases: &PhaseSet, gamma: f64, kappa1: f64, kappa2: f64) -> Result<()> {
    phases.validate()?;
    ensure_nonnegative("gamma", gamma)?;
    ensure_nonnegative("kappa1", kappa1)?;
    ensure_nonnegative("kappa2", kappa2)
}

/// Trigonometric closed forms for the coefficients at equal coupling rates.
///
/// Two tabulated cells are replaced by the form the series product actually
/// produces: the 4P collective rate is the complex conjugate of the tabulated
/// expression, and the 4P+M exchange is minus its conjugate.
pub fn closed_form_coefficients(
    kind: SetupKind,
    phases: &PhaseSet,
    gamma: f64,
    kappa1: f64,
    kappa2: f64,
) -> Result<MasterEqCoefficients> {
    check_closed_form_inputs(phases, gamma, kappa1, kappa2)?;
    let mut cells = tabulated(kind, phases, gamma);
    match kind {
        SetupKind::FourPointOpen => cells.g12 = cells.g12.conj(),
        SetupKind::FourPointMirror => cells.j = -cells.j.conj(),
        _ => {}
    }
    Ok(to_coefficients(cells, kappa1, kappa2))
}

/// The tabulated closed forms without the two corrections applied in
/// [`closed_form_coefficients`]. Kept so the discrepancy can be reported.
pub fn tabulated_coefficients_uncorrected(
    kind: SetupKind,
    phases: &PhaseSet,
    gamma: f64,
    kappa1: f64,
    kappa2: f64,
) -> Result<MasterEqCoefficients> {
    check_closed_form_inputs(phases, gamma, kappa1, kappa2)?;
    Ok(to_coefficients(tabulated(kind, phases, gamma), kappa1, kappa2))
}

/// Closed-form coefficients that also accept a [`CouplingRates`]; fails off
/// the equal-coupling manifold where only the SLH path applies.
pub fn closed_form_for_rates(kind: SetupKind, phases: &PhaseSet, rates: &CouplingRates) -> Result<MasterEqCoefficients> {
    rates.validate()?;
    if !rates.is_equal_coupling() {
        return Err(Error::PreconditionViolation(
            "closed-form coefficients need equal coupling rates".into(),
        ));
    }
    closed_form_coefficients(kind, phases, rates.gamma, rates.kappa1, rates.kappa2)
}
