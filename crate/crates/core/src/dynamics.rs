//! Moment equations for linear and quadratic driving, their exact solution on
//! a time grid, stability of the quadratic drift, and the closed-form
//! energies at effective resonance.

use nalgebra::{DMatrix, DVector, Matrix2};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::configs::{directional_couplings, DirectionalCouplings, NONRECIPROCAL_TOL};
use crate::error::{ensure_nonnegative, Error, Result};
use crate::slh::MasterEqCoefficients;

type C = Complex64;

/// Default margin for the stability verdict, `stable <=> max Re < -margin`.
pub const STABILITY_MARGIN: f64 = 1e-12;

/// Closed-form denominators below this (relative to the matching power of the
/// rate scale) are treated as singular.
pub const SINGULAR_TOL: f64 = 1e-8;

/// Largest accepted estimate of the relative rounding error of a closed-form
/// sum before the numerical path takes over.
pub const CANCELLATION_TOL: f64 = 1e-10;

const ZERO: C = C::new(0.0, 0.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DriveKind {
    Linear,
    Quadratic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DriveSide {
    Left,
    Right,
}

impl DriveSide {
    pub fn label(self) -> &'static str {
        match self {
            DriveSide::Left => "left",
            DriveSide::Right => "right",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriveSpec {
    pub kind: DriveKind,
    pub side: DriveSide,
    pub amplitude: f64,
    pub omega1: f64,
    pub omega2: f64,
    pub omega0: f64,
}

impl DriveSpec {
    /// Drive with all mode frequencies at the reference value 1.
    pub fn new(kind: DriveKind, side: DriveSide, amplitude: f64) -> Self {
        Self {
            kind,
            side,
            amplitude,
            omega1: 1.0,
            omega2: 1.0,
            omega0: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        ensure_nonnegative("amplitude", self.amplitude)?;
        ensure_nonnegative("omega1", self.omega1)?;
        ensure_nonnegative("omega2", self.omega2)?;
        ensure_nonnegative("omega0", self.omega0)
    }

    /// Zero-based index of the driven (charger) mode.
    pub fn driven_mode(&self) -> usize {
        match self.side {
            DriveSide::Left => 0,
            DriveSide::Right => 1,
        }
    }

    /// Zero-based index of the battery mode.
    pub fn battery_mode(&self) -> usize {
        1 - self.driven_mode()
    }

    pub fn omega_battery(&self) -> f64 {
        [self.omega1, self.omega2][self.battery_mode()]
    }

    pub fn omega_charger(&self) -> f64 {
        [self.omega1, self.omega2][self.driven_mode()]
    }

    pub fn with_amplitude(mut self, amplitude: f64) -> Self {
        self.amplitude = amplitude;
        self
    }

    pub fn with_side(mut self, side: DriveSide) -> Self {
        self.side = side;
        self
    }
}

/// First and second moments of the two modes.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MomentState {
    pub m1: C,
    pub m2: C,
    pub n1: f64,
    pub n2: f64,
    /// `<a1^dag a2>`; `<a2^dag a1>` is its conjugate.
    pub x12: C,
    pub s1: C,
    pub s2: C,
    pub s12: C,
}

impl MomentState {
    /// (mean, occupation, anomalous moment) of one mode (0-based index).
    pub fn mode(&self, index: usize) -> (C, f64, C) {
        if index == 0 {
            (self.m1, self.n1, self.s1)
        } else {
            (self.m2, self.n2, self.s2)
        }
    }

    /// Largest absolute difference over all tracked moments.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        [
            (self.m1 - other.m1).norm(),
            (self.m2 - other.m2).norm(),
            (self.n1 - other.n1).abs(),
            (self.n2 - other.n2).abs(),
            (self.x12 - other.x12).norm(),
            (self.s1 - other.s1).norm(),
            (self.s2 - other.s2).norm(),
            (self.s12 - other.s12).norm(),
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }

    /// Reads the named moments out of a state vector; absent moments are 0.
    pub fn from_vector(labels: &[String], x: &DVector<C>) -> Self {
        let get = |name: &str| {
            labels
                .iter()
                .position(|l| l == name)
                .map(|k| x[k])
                .unwrap_or(ZERO)
        };
        Self {
            m1: get("m1"),
            m2: get("m2"),
            n1: get("n1").re,
            n2: get("n2").re,
            x12: get("x12"),
            s1: get("s1"),
            s2: get("s2"),
            s12: get("s12"),
        }
    }
}

/// Affine linear system `dx/dt = matrix x + source`.
#[derive(Debug, Clone, PartialEq)]
pub struct DriftSystem {
    pub matrix: DMatrix<C>,
    pub source: DVector<C>,
    pub labels: Vec<String>,
}

impl DriftSystem {
    pub fn dim(&self) -> usize {
        self.labels.len()
    }

    pub fn vacuum(&self) -> DVector<C> {
        DVector::zeros(self.dim())
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<DVector<C>>,
    pub labels: Vec<String>,
}

impl Trajectory {
    pub fn moments(&self, k: usize) -> MomentState {
        MomentState::from_vector(&self.labels, &self.states[k])
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub eigenvalues: Vec<C>,
    pub max_real: f64,
    pub stable: bool,
}

// Moment variables. Indices are zero-based modes; P and Q are symmetric and
// stored with i <= j.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Var {
    M(usize),
    Mc(usize),
    N(usize, usize),
    P(usize, usize),
    Q(usize, usize),
}

fn sym(i: usize, j: usize) -> (usize, usize) {
    (i.min(j), i.max(j))
}

impl Var {
    fn p(i: usize, j: usize) -> Var {
        let (a, b) = sym(i, j);
        Var::P(a, b)
    }

    fn q(i: usize, j: usize) -> Var {
        let (a, b) = sym(i, j);
        Var::Q(a, b)
    }

    fn conj(self) -> Var {
        match self {
            Var::M(i) => Var::Mc(i),
            Var::Mc(i) => Var::M(i),
            Var::N(i, j) => Var::N(j, i),
            Var::P(i, j) => Var::Q(i, j),
            Var::Q(i, j) => Var::P(i, j),
        }
    }

    fn label(self) -> String {
        let n = |i: usize| i + 1;
        match self {
            Var::M(i) => format!("m{}", n(i)),
            Var::Mc(i) => format!("m{}*", n(i)),
            Var::N(i, j) if i == j => format!("n{}", n(i)),
            Var::N(i, j) => format!("x{}{}", n(i), n(j)),
            Var::P(i, j) if i == j => format!("s{}", n(i)),
            Var::P(i, j) => format!("s{}{}", n(i), n(j)),
            Var::Q(i, j) if i == j => format!("s{}*", n(i)),
            Var::Q(i, j) => format!("s{}{}*", n(i), n(j)),
        }
    }
}

struct Row {
    terms: Vec<(Var, C)>,
    constant: C,
}

/// Mean-field drift `A` with `d<a>/dt = A <a> + drive`.
fn drift_2x2(coeffs: &MasterEqCoefficients, dc: &DirectionalCouplings) -> Matrix2<C> {
    let a1 = -C::new(coeffs.linewidth_1 / 2.0, coeffs.detuning_eff_1);
    let a2 = -C::new(coeffs.linewidth_2 / 2.0, coeffs.detuning_eff_2);
    Matrix2::new(a1, dc.g_bwd, dc.g_fwd, a2)
}

fn row(var: Var, a: &Matrix2<C>, drive: &DriveSpec) -> Row {
    let d = drive.driven_mode();
    let om = drive.amplitude;
    let mi = C::new(0.0, -om);
    let pi = C::new(0.0, om);
    let lin = drive.kind == DriveKind::Linear;
    let mut terms = Vec::new();
    let mut constant = ZERO;
    match var {
        Var::M(i) => {
            for k in 0..2 {
                terms.push((Var::M(k), a[(i, k)]));
            }
            if i == d {
                if lin {
                    constant += mi;
                } else {
                    terms.push((Var::Mc(d), mi));
                }
            }
        }
        Var::N(i, j) => {
            for k in 0..2 {
                terms.push((Var::N(k, j), a[(i, k)].conj()));
                terms.push((Var::N(i, k), a[(j, k)]));
            }
            if lin {
                if i == d {
                    terms.push((Var::M(j), pi));
                }
                if j == d {
                    terms.push((Var::Mc(i), mi));
                }
            } else {
                if i == d {
                    terms.push((Var::p(d, j), pi));
                }
                if j == d {
                    terms.push((Var::q(i, d), mi));
                }
            }
        }
        Var::P(i, j) => {
            for k in 0..2 {
                terms.push((Var::p(k, j), a[(i, k)]));
                terms.push((Var::p(i, k), a[(j, k)]));
            }
            if lin {
                if i == d {
                    terms.push((Var::M(j), mi));
                }
                if j == d {
                    terms.push((Var::M(i), mi));
                }
            } else {
                if i == d {
                    terms.push((Var::N(d, j), mi));
                }
                if j == d {
                    terms.push((Var::N(d, i), mi));
                }
                if i == d && j == d {
                    constant += mi;
                }
            }
        }
        Var::Mc(_) | Var::Q(_, _) => {
            let r = row(var.conj(), a, drive);
            terms = r.terms.into_iter().map(|(v, c)| (v.conj(), c.conj())).collect();
            constant = r.constant.conj();
        }
    }
    Row { terms, constant }
}

fn assemble(vars: &[Var], coeffs: &MasterEqCoefficients, drive: &DriveSpec) -> DriftSystem {
    let dc = directional_couplings(coeffs);
    let a = drift_2x2(coeffs, &dc);
    let n = vars.len();
    let mut matrix = DMatrix::zeros(n, n);
    let mut source = DVector::zeros(n);
    for (r, &v) in vars.iter().enumerate() {
        let row = row(v, &a, drive);
        for (w, c) in row.terms {
            let col = vars
                .iter()
                .position(|&u| u == w)
                .expect("moment system does not close over its variables");
            matrix[(r, col)] += c;
        }
        source[r] = row.constant;
    }
    DriftSystem {
        matrix,
        source,
        labels: vars.iter().map(|v| v.label()).collect(),
    }
}

const FIRST_LINEAR: [Var; 2] = [Var::M(0), Var::M(1)];
const FIRST_QUADRATIC: [Var; 4] = [Var::M(0), Var::M(1), Var::Mc(0), Var::Mc(1)];
// The nominal six second moments come first; their conjugate partners close
// the system over the complex numbers.
const SECOND_QUADRATIC: [Var; 10] = [
    Var::N(0, 0),
    Var::N(1, 1),
    Var::P(0, 1),
    Var::N(0, 1),
    Var::P(0, 0),
    Var::P(1, 1),
    Var::N(1, 0),
    Var::Q(0, 1),
    Var::Q(0, 0),
    Var::Q(1, 1),
];
const COMPOSITE_LINEAR: [Var; 14] = [
    Var::M(0),
    Var::M(1),
    Var::Mc(0),
    Var::Mc(1),
    Var::N(0, 0),
    Var::N(1, 1),
    Var::N(0, 1),
    Var::N(1, 0),
    Var::P(0, 0),
    Var::P(1, 1),
    Var::P(0, 1),
    Var::Q(0, 0),
    Var::Q(1, 1),
    Var::Q(0, 1),
];

/// Linear drive: `(m1, m2)` with source `-i Omega` on the driven mode.
/// Quadratic drive: the homogeneous system `M(Omega)` over `(m1, m2, m1*, m2*)`.
pub fn first_moment_system(coeffs: &MasterEqCoefficients, drive: &DriveSpec) -> DriftSystem {
    match drive.kind {
        DriveKind::Linear => assemble(&FIRST_LINEAR, coeffs, drive),
        DriveKind::Quadratic => assemble(&FIRST_QUADRATIC, coeffs, drive),
    }
}

/// Linear drive: the 14-dimensional composite system (first moments,
/// normal and anomalous second moments). Quadratic drive: the closed
/// 10-dimensional second-moment system.
pub fn second_moment_system(coeffs: &MasterEqCoefficients, drive: &DriveSpec) -> DriftSystem {
    match drive.kind {
        DriveKind::Linear => assemble(&COMPOSITE_LINEAR, coeffs, drive),
        DriveKind::Quadratic => assemble(&SECOND_QUADRATIC, coeffs, drive),
    }
}

fn augmented_propagator(system: &DriftSystem, dt: f64) -> DMatrix<C> {
    let n = system.dim();
    let mut aug = DMatrix::zeros(n + 1, n + 1);
    aug.view_mut((0, 0), (n, n)).copy_from(&system.matrix);
    aug.view_mut((0, n), (n, 1)).copy_from(&system.source);
    (aug * C::new(dt, 0.0)).exp()
}

fn apply(prop: &DMatrix<C>, x: &DVector<C>) -> DVector<C> {
    let n = x.len();
    let mut out = DVector::zeros(n);
    for r in 0..n {
        let mut acc = prop[(r, n)];
        for c in 0..n {
            acc += prop[(r, c)] * x[c];
        }
        out[r] = acc;
    }
    out
}

/// Solves the affine system from `initial` at t = 0 onto `t_grid` with exact
/// exponential steps. A step whose length matches the previous one to
/// 1e-13 relative reuses its propagator.
pub fn evolve(system: &DriftSystem, initial: &DVector<C>, t_grid: &[f64]) -> Result<Trajectory> {
    if initial.len() != system.dim() {
        return Err(Error::InvalidArgument(format!(
            "initial state has length {}, system has dimension {}",
            initial.len(),
            system.dim()
        )));
    }
    let mut prev = 0.0;
    for &t in t_grid {
        if !t.is_finite() || t < prev {
            return Err(Error::InvalidArgument(
                "time grid must be finite, start at t >= 0 and be ascending".into(),
            ));
        }
        prev = t;
    }
    let mut states = Vec::with_capacity(t_grid.len());
    let mut x = initial.clone();
    let mut t_now = 0.0;
    let mut cache: Option<(f64, DMatrix<C>)> = None;
    for &t in t_grid {
        let dt = t - t_now;
        if dt > 0.0 {
            let reuse = matches!(&cache, Some((h, _)) if (h - dt).abs() <= 1e-13 * dt);
            if !reuse {
                cache = Some((dt, augmented_propagator(system, dt)));
            }
            x = apply(&cache.as_ref().expect("propagator cached").1, &x);
        }
        t_now = t;
        states.push(x.clone());
    }
    Ok(Trajectory {
        times: t_grid.to_vec(),
        states,
        labels: system.labels.clone(),
    })
}

/// State at a single time, propagated from `initial` in one exact step.
pub fn evolve_to(system: &DriftSystem, initial: &DVector<C>, t: f64) -> Result<DVector<C>> {
    let mut traj = evolve(system, initial, &[t])?;
    Ok(traj.states.pop().expect("one state"))
}

pub fn eigenvalues(matrix: &DMatrix<C>) -> Result<Vec<C>> {
    // Near-defective drifts (close to threshold) can stall the QR sweep at
    // machine precision; loosen the deflation tolerance before giving up.
    for eps in [f64::EPSILON, 1e-14, 1e-12] {
        if let Some(v) = nalgebra::Schur::try_new(matrix.clone(), eps, 500).and_then(|s| s.eigenvalues()) {
            return Ok(v.iter().copied().collect());
        }
    }
    Err(Error::SingularPoint("Schur decomposition did not converge".into()))
}

pub fn stability_with_margin(
    coeffs: &MasterEqCoefficients,
    drive: &DriveSpec,
    margin: f64,
) -> Result<StabilityReport> {
    drive.validate()?;
    let system = first_moment_system(coeffs, drive);
    let eig = eigenvalues(&system.matrix)?;
    let max_real = eig.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);
    Ok(StabilityReport {
        eigenvalues: eig,
        max_real,
        stable: max_real < -margin,
    })
}

/// Eigenvalues of the first-moment drift. For quadratic driving this is
/// `M(Omega)`; for linear driving the drive only adds a source, so the
/// report reflects the 2x2 mean-field drift.
pub fn stability(coeffs: &MasterEqCoefficients, drive: &DriveSpec) -> Result<StabilityReport> {
    stability_with_margin(coeffs, drive, STABILITY_MARGIN)
}

/// Quadratic-drive amplitude at which `max Re lambda(M(Omega))` crosses
/// zero, located by bisection to `tol` (absolute, in rate units).
pub fn instability_threshold(coeffs: &MasterEqCoefficients, side: DriveSide, tol: f64) -> Result<f64> {
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument("tol must be positive".into()));
    }
    let drive = DriveSpec::new(DriveKind::Quadratic, side, 0.0);
    let max_re = |om: f64| -> Result<f64> {
        Ok(stability_with_margin(coeffs, &drive.with_amplitude(om), 0.0)?.max_real)
    };
    if max_re(0.0)? >= 0.0 {
        return Err(Error::PreconditionViolation(
            "system is unstable without drive".into(),
        ));
    }
    let mut lo = 0.0;
    let mut hi = coeffs.linewidth_1.max(coeffs.linewidth_2).max(tol);
    let mut guard = 0;
    while max_re(hi)? < 0.0 {
        lo = hi;
        hi *= 2.0;
        guard += 1;
        if guard > 200 {
            return Err(Error::NoSteadyState("no instability found".into()));
        }
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if max_re(mid)? < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Solves `matrix x = -source` for a stable system.
pub fn steady_state(system: &DriftSystem) -> Result<DVector<C>> {
    let eig = eigenvalues(&system.matrix)?;
    let max_real = eig.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);
    if !(max_real < -STABILITY_MARGIN) {
        return Err(Error::NoSteadyState(format!(
            "generator has an eigenvalue with real part {max_real:e}"
        )));
    }
    system
        .matrix
        .clone()
        .lu()
        .solve(&(-&system.source))
        .ok_or_else(|| Error::NoSteadyState("generator is singular".into()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Evaluation {
    ClosedForm,
    /// A closed-form denominator was singular or the closed-form sum was
    /// too ill-conditioned; the value comes from exact numerical evolution.
    Numerical,
}

/// Battery and charger energies (not divided by the mode frequencies).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Energies {
    pub e_b: f64,
    pub e_c: f64,
    pub via: Evaluation,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadraticEnergies {
    pub e_b: f64,
    pub e_c: f64,
    /// Battery anomalous moment `<a_b^2>`.
    pub s2: C,
    pub via: Evaluation,
}

// Running sum that also tracks the sum of magnitudes, to estimate the
// relative rounding error left after cancellation.
#[derive(Default)]
struct TermSum {
    sum: C,
    mag: f64,
}

impl TermSum {
    fn add(&mut self, z: C) {
        self.sum += z;
        self.mag += z.norm();
    }

    fn well_conditioned(&self) -> bool {
        let s = self.sum.norm();
        s > 0.0 && 16.0 * f64::EPSILON * self.mag <= CANCELLATION_TOL * s
    }
}

fn check_time(t: f64) -> Result<()> {
    if t.is_nan() || t < 0.0 {
        return Err(Error::InvalidArgument(format!("t must be >= 0, got {t}")));
    }
    Ok(())
}

fn check_resonant(coeffs: &MasterEqCoefficients) -> Result<()> {
    let tol = 1e-12 * coeffs.rate_scale().max(f64::MIN_POSITIVE);
    if coeffs.detuning_eff_1.abs() > tol || coeffs.detuning_eff_2.abs() > tol {
        return Err(Error::PreconditionViolation(
            "closed forms assume zero effective detuning".into(),
        ));
    }
    Ok(())
}

fn nr_tol(coeffs: &MasterEqCoefficients) -> f64 {
    NONRECIPROCAL_TOL * coeffs.rate_scale()
}

// e^{-L t/4} [cosh(x), sinh(x)/x] with x = S t / 4, without overflow.
fn damped_cosh_sinhc(s: C, lam: f64, t: f64) -> (C, C) {
    let x = s * (t / 4.0);
    let damp = -lam * t / 4.0;
    let ep = (x + damp).exp();
    let em = (-x + damp).exp();
    let cosh = (ep + em) * 0.5;
    let sinhc = if x.norm() > 1e-3 {
        (ep - em) / (x * 2.0)
    } else {
        let x2 = x * x;
        (C::new(1.0, 0.0) + x2 / 6.0 + x2 * x2 / 120.0 + x2 * x2 * x2 / 5040.0) * damp.exp()
    };
    (cosh, sinhc)
}

fn linear_fallback(coeffs: &MasterEqCoefficients, drive: &DriveSpec, t: f64) -> Result<Energies> {
    let system = first_moment_system(coeffs, drive);
    let x = if t.is_infinite() {
        steady_state(&system)?
    } else {
        evolve_to(&system, &system.vacuum(), t)?
    };
    Ok(Energies {
        e_b: drive.omega_battery() * x[drive.battery_mode()].norm_sqr(),
        e_c: drive.omega_charger() * x[drive.driven_mode()].norm_sqr(),
        via: Evaluation::Numerical,
    })
}

/// Closed-form energies under linear driving from vacuum at effective
/// resonance. `t` may be `f64::INFINITY` for the steady state.
pub fn closed_form_linear(coeffs: &MasterEqCoefficients, drive: &DriveSpec, t: f64) -> Result<Energies> {
    check_time(t)?;
    drive.validate()?;
    if drive.kind != DriveKind::Linear {
        return Err(Error::PreconditionViolation("closed_form_linear needs a linear drive".into()));
    }
    check_resonant(coeffs)?;
    if t == 0.0 || drive.amplitude == 0.0 {
        return Ok(Energies { e_b: 0.0, e_c: 0.0, via: Evaluation::ClosedForm });
    }
    let mut dc = directional_couplings(coeffs);
    let (mut l1, mut l2) = (coeffs.linewidth_1, coeffs.linewidth_2);
    if drive.side == DriveSide::Right {
        dc = dc.swapped();
        std::mem::swap(&mut l1, &mut l2);
    }
    let (wb, wc) = (drive.omega_battery(), drive.omega_charger());
    let om2 = drive.amplitude * drive.amplitude;
    let lam = dc.lambda_sum;
    let scale = coeffs.rate_scale();

    if dc.g_bwd.norm() < nr_tol(coeffs) {
        // Cascaded forms: the charger is a single damped driven mode.
        if l1 < SINGULAR_TOL * scale || l2 < SINGULAR_TOL * scale {
            return linear_fallback(coeffs, drive, t);
        }
        let e_c = if t.is_infinite() {
            4.0 * wc * om2 / (l1 * l1)
        } else {
            let f = -(-l1 * t / 2.0).exp_m1();
            4.0 * wc * om2 / (l1 * l1) * f * f
        };
        let pref = 16.0 * wb * dc.g_fwd.norm_sqr() * om2 / (l1 * l1 * l2 * l2);
        if pref == 0.0 {
            return Ok(Energies { e_b: 0.0, e_c, via: Evaluation::ClosedForm });
        }
        let bracket = if t.is_infinite() {
            C::new(-1.0, 0.0)
        } else {
            let (ch, shc) = damped_cosh_sinhc(C::new(dc.lambda_diff, 0.0), lam, t);
            let mut sum = TermSum::default();
            sum.add(ch);
            sum.add(shc * (lam * t / 4.0));
            sum.add(C::new(-1.0, 0.0));
            if !sum.well_conditioned() {
                return linear_fallback(coeffs, drive, t);
            }
            sum.sum
        };
        return Ok(Energies { e_b: pref * bracket.norm_sqr(), e_c, via: Evaluation::ClosedForm });
    }

    let den = C::new(l1 * l2, 0.0) - 4.0 * dc.g_bwd * dc.g_fwd;
    if den.norm() < SINGULAR_TOL * scale * scale {
        return linear_fallback(coeffs, drive, t);
    }
    let den2 = den.norm_sqr();
    let s = dc.s_param;
    let two_l2 = C::new(2.0 * l2, 0.0);
    let (b_bracket, c_bracket) = if t.is_infinite() {
        (C::new(-1.0, 0.0), two_l2)
    } else {
        let (ch, shc) = damped_cosh_sinhc(s, lam, t);
        let mut b = TermSum::default();
        b.add(ch);
        b.add(shc * (lam * t / 4.0));
        b.add(C::new(-1.0, 0.0));
        let mut c = TermSum::default();
        c.add(two_l2);
        c.add(-two_l2 * ch);
        c.add(-(s * s + lam * dc.lambda_diff) * shc * (t / 4.0));
        let ok_b = b.well_conditioned() || dc.g_fwd.norm() == 0.0;
        if !ok_b || !c.well_conditioned() {
            return linear_fallback(coeffs, drive, t);
        }
        (b.sum, c.sum)
    };
    Ok(Energies {
        e_b: 16.0 * wb * dc.g_fwd.norm_sqr() * om2 / den2 * b_bracket.norm_sqr(),
        e_c: wc * om2 / den2 * c_bracket.norm_sqr(),
        via: Evaluation::ClosedForm,
    })
}

fn quadratic_fallback(coeffs: &MasterEqCoefficients, drive: &DriveSpec, t: f64) -> Result<QuadraticEnergies> {
    let system = second_moment_system(coeffs, drive);
    let x = if t.is_infinite() {
        steady_state(&system)?
    } else {
        evolve_to(&system, &system.vacuum(), t)?
    };
    let m = MomentState::from_vector(&system.labels, &x);
    Ok(QuadraticEnergies {
        e_b: drive.omega2 * m.n2,
        e_c: drive.omega1 * m.n1,
        s2: m.s2,
        via: Evaluation::Numerical,
    })
}

/// Closed-form energies and battery anomalous moment for left quadratic
/// driving at a nonreciprocal working point, from vacuum.
pub fn closed_form_quadratic_nr(
    coeffs: &MasterEqCoefficients,
    drive: &DriveSpec,
    t: f64,
) -> Result<QuadraticEnergies> {
    check_time(t)?;
    drive.validate()?;
    if drive.kind != DriveKind::Quadratic || drive.side != DriveSide::Left {
        return Err(Error::PreconditionViolation(
            "closed forms exist for left quadratic driving only".into(),
        ));
    }
    check_resonant(coeffs)?;
    let dc = directional_couplings(coeffs);
    if dc.g_bwd.norm() >= nr_tol(coeffs).max(f64::MIN_POSITIVE) {
        return Err(Error::PreconditionViolation(format!(
            "not a nonreciprocal working point (|g_bwd| = {:e})",
            dc.g_bwd.norm()
        )));
    }
    let report = stability(coeffs, drive)?;
    if !report.stable {
        return Err(Error::PreconditionViolation(format!(
            "quadratic drive is unstable (max Re lambda = {:e})",
            report.max_real
        )));
    }
    if t == 0.0 {
        return Ok(QuadraticEnergies { e_b: 0.0, e_c: 0.0, s2: ZERO, via: Evaluation::ClosedForm });
    }
    let (l1, l2, w) = (coeffs.linewidth_1, coeffs.linewidth_2, drive.amplitude);
    let g2 = coeffs.collective.norm_sqr();
    let scale = coeffs.rate_scale().max(w);
    let dens = [
        l1 - 2.0 * w,
        l1 + 2.0 * w,
        l2,
        l2 + l1 - 2.0 * w,
        l2 + l1 + 2.0 * w,
        l2 - l1 + 2.0 * w,
        l2 - l1 - 2.0 * w,
    ];
    if dens.iter().any(|d| d.abs() < SINGULAR_TOL * scale) {
        return quadratic_fallback(coeffs, drive, t);
    }
    let (w1, w2) = (drive.omega1, drive.omega2);
    if t.is_infinite() {
        let ec = 2.0 * w * w / (l1 * l1 - 4.0 * w * w);
        let q = (l2 + l1) * (l2 + l1) - 4.0 * w * w;
        let eb = 4.0 * g2 * (l2 + 2.0 * l1) / (l2 * q) * ec;
        let s2 = C::new(0.0, 2.0 * g2 * w)
            * (-2.0 * (l1 * (l2 + l1) + 4.0 * w * w) / (l2 * (l1 * l1 - 4.0 * w * w) * q));
        return Ok(QuadraticEnergies { e_b: w2 * eb, e_c: w1 * ec, s2, via: Evaluation::ClosedForm });
    }
    let e = |rate: f64| (-rate * t).exp();
    let (ea, eb_, ec_, ed, ee) = (
        e(l2),
        e((l2 + l1 + 2.0 * w) / 2.0),
        e(l1 - 2.0 * w),
        e((l2 + l1 - 2.0 * w) / 2.0),
        e(l1 + 2.0 * w),
    );
    let dm = l2 - l1 + 2.0 * w; // appears squared
    let dp = -l2 + l1 + 2.0 * w;
    let diff2 = (l2 - l1) * (l2 - l1) - 4.0 * w * w;

    let mut b = TermSum::default();
    b.add(C::new(
        4.0 * w * (l2 + 2.0 * l1)
            / (l2 * (l1 - 2.0 * w) * (l1 + 2.0 * w) * (l2 + l1 - 2.0 * w) * (l2 + l1 + 2.0 * w)),
        0.0,
    ));
    b.add(C::new(8.0 * w * (l2 - l1) * ea / (l2 * diff2 * diff2), 0.0));
    b.add(C::new(-4.0 * eb_ / (dp * dp * (l2 + l1 + 2.0 * w)), 0.0));
    b.add(C::new(-ec_ / ((l1 - 2.0 * w) * dm * dm), 0.0));
    b.add(C::new(4.0 * ed / ((l2 + l1 - 2.0 * w) * dm * dm), 0.0));
    b.add(C::new(ee / ((l1 + 2.0 * w) * dp * dp), 0.0));

    // Charger: E_c = W/(2(L1^2-4W^2)) [2W(1-a) + 2W(1-b) - L1(a-b)] with
    // a = e^{-(L1-2W)t}, b = e^{-(L1+2W)t}.
    let one_m_a = -(-(l1 - 2.0 * w) * t).exp_m1();
    let one_m_b = -(-(l1 + 2.0 * w) * t).exp_m1();
    let mut c = TermSum::default();
    c.add(C::new(2.0 * w * one_m_a, 0.0));
    c.add(C::new(2.0 * w * one_m_b, 0.0));
    c.add(C::new(-l1 * (ec_ - ee), 0.0));

    let mut s = TermSum::default();
    s.add(C::new(
        -2.0 * (l1 * (l2 + l1) + 4.0 * w * w)
            / (l2 * (l1 * l1 - 4.0 * w * w) * ((l2 + l1) * (l2 + l1) - 4.0 * w * w)),
        0.0,
    ));
    s.add(C::new(2.0 * ea * ((l2 - l1) * (l2 - l1) + 4.0 * w * w) / (l2 * diff2 * diff2), 0.0));
    s.add(C::new(-4.0 * eb_ / (dp * dp * (l2 + l1 + 2.0 * w)), 0.0));
    s.add(C::new(ec_ / ((l1 - 2.0 * w) * dm * dm), 0.0));
    s.add(C::new(-4.0 * ed / ((l2 + l1 - 2.0 * w) * dm * dm), 0.0));
    s.add(C::new(ee / ((l1 + 2.0 * w) * dp * dp), 0.0));

    let battery_ok = g2 == 0.0 || (b.well_conditioned() && s.well_conditioned());
    if w > 0.0 && (!battery_ok || !c.well_conditioned()) {
        return quadratic_fallback(coeffs, drive, t);
    }
    let n2 = 2.0 * g2 * w * b.sum.re;
    let n1 = w / (2.0 * (l1 * l1 - 4.0 * w * w)) * c.sum.re;
    let s2 = C::new(0.0, 2.0 * g2 * w) * s.sum;
    Ok(QuadraticEnergies { e_b: w2 * n2, e_c: w1 * n1, s2, via: Evaluation::ClosedForm })
}
