//! Brute-force check of the moment equations: the full two-mode master
//! equation in a truncated Fock space, integrated with fixed-step RK4.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dynamics::{evolve, second_moment_system, DriveKind, DriveSpec, MomentState};
use crate::error::{Error, Result};
use crate::slh::MasterEqCoefficients;

type C = Complex64;

const HERMITIAN_TOL: f64 = 1e-10;
const TRACE_TOL: f64 = 1e-8;
const POSITIVITY_TOL: f64 = 1e-8;
const STEP_TRACE_TOL: f64 = 1e-10;

/// Two-mode density matrix on `|n1, n2>`, index `n1 * cutoff + n2`.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    pub cutoff: usize,
    pub data: DMatrix<C>,
}

impl DensityMatrix {
    pub fn vacuum(cutoff: usize) -> Result<Self> {
        check_cutoff(cutoff)?;
        let d = cutoff * cutoff;
        let mut data = DMatrix::zeros(d, d);
        data[(0, 0)] = C::new(1.0, 0.0);
        Ok(Self { cutoff, data })
    }

    /// Pure state `|psi><psi|` from amplitudes `psi[n1 * cutoff + n2]`,
    /// normalized on the way in.
    pub fn from_pure(cutoff: usize, psi: &[C]) -> Result<Self> {
        check_cutoff(cutoff)?;
        let d = cutoff * cutoff;
        if psi.len() != d {
            return Err(Error::InvalidArgument(format!(
                "state has {} amplitudes, expected {d}",
                psi.len()
            )));
        }
        let norm: f64 = psi.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if !(norm > 0.0) {
            return Err(Error::InvalidArgument("zero state vector".into()));
        }
        let data = DMatrix::from_fn(d, d, |r, c| psi[r] * psi[c].conj() / (norm * norm));
        Ok(Self { cutoff, data })
    }

    /// Product state with mode-1 amplitudes `a` and mode-2 amplitudes `b`.
    pub fn from_product(cutoff: usize, a: &[C], b: &[C]) -> Result<Self> {
        if a.len() != cutoff || b.len() != cutoff {
            return Err(Error::InvalidArgument("single-mode amplitudes must have cutoff entries".into()));
        }
        let psi: Vec<C> = (0..cutoff * cutoff).map(|k| a[k / cutoff] * b[k % cutoff]).collect();
        Self::from_pure(cutoff, &psi)
    }

    pub fn trace(&self) -> C {
        self.data.trace()
    }

    /// Checks Hermiticity, unit trace and positivity within the oracle
    /// tolerances.
    pub fn check(&self, time: f64) -> Result<()> {
        let herm = (&self.data - self.data.adjoint()).camax();
        if herm > HERMITIAN_TOL {
            return Err(Error::UnphysicalEvolution { time, reason: format!("non-Hermitian by {herm:e}") });
        }
        let tr = self.trace();
        if (tr - C::new(1.0, 0.0)).norm() > TRACE_TOL {
            return Err(Error::UnphysicalEvolution { time, reason: format!("trace {tr}") });
        }
        // Entries far below the tolerance underflow inside the eigensolver.
        let h = ((&self.data + self.data.adjoint()) * C::new(0.5, 0.0))
            .map(|z| if z.norm() < 1e-30 { C::new(0.0, 0.0) } else { z });
        let min = SymmetricEigen::new(h).eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
        if min < -POSITIVITY_TOL {
            return Err(Error::UnphysicalEvolution { time, reason: format!("eigenvalue {min:e}") });
        }
        Ok(())
    }
}

fn check_cutoff(cutoff: usize) -> Result<()> {
    if cutoff < 2 {
        return Err(Error::InvalidArgument(format!("cutoff must be >= 2, got {cutoff}")));
    }
    Ok(())
}

#[derive(Debug, Clone, Default)]
struct SparseOp {
    // (row, col, value)
    entries: Vec<(usize, usize, C)>,
}

impl SparseOp {
    fn from_dense(m: &DMatrix<C>) -> Self {
        let mut entries = Vec::new();
        for r in 0..m.nrows() {
            for c in 0..m.ncols() {
                if m[(r, c)] != C::new(0.0, 0.0) {
                    entries.push((r, c, m[(r, c)]));
                }
            }
        }
        Self { entries }
    }

    // out += self * rho
    fn left_mul_add(&self, rho: &[C], d: usize, out: &mut [C], scale: C) {
        for &(r, c, v) in &self.entries {
            let v = v * scale;
            let src = &rho[c * d..(c + 1) * d];
            let dst = &mut out[r * d..(r + 1) * d];
            for (o, s) in dst.iter_mut().zip(src) {
                *o += v * s;
            }
        }
    }

    // out += rho * self^dag
    fn right_mul_adjoint_add(&self, rho: &[C], d: usize, out: &mut [C]) {
        for x in 0..d {
            let row = &rho[x * d..(x + 1) * d];
            let dst = &mut out[x * d..(x + 1) * d];
            for &(r, c, v) in &self.entries {
                // (rho B^dag)[x, r] += rho[x, c] conj(B[r, c])
                dst[r] += row[c] * v.conj();
            }
        }
    }

    // Tr(self * rho) for row-major rho.
    fn expectation(&self, rho: &DMatrix<C>) -> C {
        self.entries.iter().map(|&(r, c, v)| v * rho[(c, r)]).sum()
    }
}

fn ladder(cutoff: usize, mode: usize) -> DMatrix<C> {
    let d = cutoff * cutoff;
    let mut a = DMatrix::zeros(d, d);
    for n1 in 0..cutoff {
        for n2 in 0..cutoff {
            let col = n1 * cutoff + n2;
            let k = if mode == 0 { n1 } else { n2 };
            if k > 0 {
                let row = if mode == 0 { col - cutoff } else { col - 1 };
                a[(row, col)] = C::new((k as f64).sqrt(), 0.0);
            }
        }
    }
    a
}

/// Right-hand side of the master equation in a fixed truncation.
#[derive(Debug, Clone)]
pub struct LindbladGenerator {
    cutoff: usize,
    // Effective non-Hermitian Hamiltonian K, with rho' = -iK rho + h.c. + jumps.
    k_eff: SparseOp,
    lowering: [SparseOp; 2],
    // G[j][k]: coefficient of a_j rho a_k^dag.
    jump: [[C; 2]; 2],
    rate_bound: f64,
}

pub fn lindblad_generator(coeffs: &MasterEqCoefficients, drive: &DriveSpec, cutoff: usize) -> Result<LindbladGenerator> {
    check_cutoff(cutoff)?;
    drive.validate()?;
    let a = [ladder(cutoff, 0), ladder(cutoff, 1)];
    let ad = [a[0].adjoint(), a[1].adjoint()];
    let re = |x: f64| C::new(x, 0.0);
    let g = [
        [re(coeffs.linewidth_1), coeffs.collective],
        [coeffs.collective.conj(), re(coeffs.linewidth_2)],
    ];
    let j = coeffs.exchange;
    let mut h = &ad[0] * &a[0] * re(coeffs.detuning_eff_1)
        + &ad[1] * &a[1] * re(coeffs.detuning_eff_2)
        + &ad[1] * &a[0] * j
        + &ad[0] * &a[1] * j.conj();
    let dm = drive.driven_mode();
    let om = drive.amplitude;
    match drive.kind {
        DriveKind::Linear => h += (&ad[dm] + &a[dm]) * re(om),
        DriveKind::Quadratic => h += (&ad[dm] * &ad[dm] + &a[dm] * &a[dm]) * re(om / 2.0),
    }
    let mut damping = DMatrix::zeros(cutoff * cutoff, cutoff * cutoff);
    for jj in 0..2 {
        for kk in 0..2 {
            damping += &ad[kk] * &a[jj] * g[jj][kk];
        }
    }
    let k_eff = h - damping * C::new(0.0, 0.5);
    let nf = cutoff as f64;
    let rate_bound = nf
        * (coeffs.linewidth_1
            + coeffs.linewidth_2
            + 2.0 * coeffs.collective.norm()
            + 2.0 * j.norm()
            + coeffs.detuning_eff_1.abs()
            + coeffs.detuning_eff_2.abs()
            + 2.0 * om);
    Ok(LindbladGenerator {
        cutoff,
        k_eff: SparseOp::from_dense(&k_eff),
        lowering: [SparseOp::from_dense(&a[0]), SparseOp::from_dense(&a[1])],
        jump: g,
        rate_bound,
    })
}

impl LindbladGenerator {
    pub fn cutoff(&self) -> usize {
        self.cutoff
    }

    /// Upper bound on the generator's spectral radius, used to pick the RK4
    /// step.
    pub fn rate_bound(&self) -> f64 {
        self.rate_bound
    }

    // out = L(rho); rho must be Hermitian.
    fn apply(&self, rho: &[C], out: &mut [C], scratch: &mut [Vec<C>; 3]) {
        let d = self.cutoff * self.cutoff;
        let [x, a1r, a2r] = scratch;
        x.fill(C::new(0.0, 0.0));
        self.k_eff.left_mul_add(rho, d, x, C::new(0.0, -1.0));
        // X + X^dag
        for r in 0..d {
            for c in r..d {
                let v = x[r * d + c] + x[c * d + r].conj();
                out[r * d + c] = v;
                out[c * d + r] = v.conj();
            }
        }
        a1r.fill(C::new(0.0, 0.0));
        a2r.fill(C::new(0.0, 0.0));
        self.lowering[0].left_mul_add(rho, d, a1r, C::new(1.0, 0.0));
        self.lowering[1].left_mul_add(rho, d, a2r, C::new(1.0, 0.0));
        // sum_k (sum_j G_jk a_j rho) a_k^dag, reusing x as Y_k.
        for kk in 0..2 {
            let (g1, g2) = (self.jump[0][kk], self.jump[1][kk]);
            if g1 == C::new(0.0, 0.0) && g2 == C::new(0.0, 0.0) {
                continue;
            }
            for ((y, p), q) in x.iter_mut().zip(a1r.iter()).zip(a2r.iter()) {
                *y = g1 * p + g2 * q;
            }
            self.lowering[kk].right_mul_adjoint_add(x, d, out);
        }
        // The jump sum is Hermitian; drop the rounding asymmetry.
        for r in 0..d {
            for c in r + 1..d {
                let v = (out[r * d + c] + out[c * d + r].conj()) * 0.5;
                out[r * d + c] = v;
                out[c * d + r] = v.conj();
            }
            out[r * d + r].im = 0.0;
        }
    }
}

/// Integrates `rho0` onto `t_grid` (ascending, starting at t >= 0 with rho0
/// taken at t = 0) with fixed RK4 steps no longer than `max_step`.
pub fn evolve_density(
    rho0: &DensityMatrix,
    generator: &LindbladGenerator,
    t_grid: &[f64],
    max_step: f64,
) -> Result<Vec<DensityMatrix>> {
    if rho0.cutoff != generator.cutoff {
        return Err(Error::InvalidArgument("cutoff mismatch between state and generator".into()));
    }
    if !(max_step > 0.0) {
        return Err(Error::InvalidArgument("max_step must be positive".into()));
    }
    let mut prev = 0.0;
    for &t in t_grid {
        if !t.is_finite() || t < prev {
            return Err(Error::InvalidArgument("time grid must be ascending from t >= 0".into()));
        }
        prev = t;
    }
    rho0.check(0.0)?;
    let n = rho0.cutoff;
    let d = n * n;
    let mut rho: Vec<C> = rho0.data.transpose().iter().copied().collect(); // row-major
    let zero = || vec![C::new(0.0, 0.0); d * d];
    let mut scratch = [zero(), zero(), zero()];
    let (mut k1, mut k2, mut k3, mut k4, mut tmp) = (zero(), zero(), zero(), zero(), zero());
    let mut out = Vec::with_capacity(t_grid.len());
    let mut t_now = 0.0;
    for &t in t_grid {
        let span = t - t_now;
        let steps = (span / max_step).ceil().max(if span > 0.0 { 1.0 } else { 0.0 }) as usize;
        let h = if steps > 0 { span / steps as f64 } else { 0.0 };
        for s in 0..steps {
            generator.apply(&rho, &mut k1, &mut scratch);
            axpy(&rho, &k1, h / 2.0, &mut tmp);
            generator.apply(&tmp, &mut k2, &mut scratch);
            axpy(&rho, &k2, h / 2.0, &mut tmp);
            generator.apply(&tmp, &mut k3, &mut scratch);
            axpy(&rho, &k3, h, &mut tmp);
            generator.apply(&tmp, &mut k4, &mut scratch);
            for i in 0..d * d {
                rho[i] += (k1[i] + (k2[i] + k3[i]) * 2.0 + k4[i]) * (h / 6.0);
            }
            let tr: C = (0..d).map(|k| rho[k * d + k]).sum();
            let drift = (tr - C::new(1.0, 0.0)).norm();
            if drift > STEP_TRACE_TOL {
                return Err(Error::UnphysicalEvolution {
                    time: t_now + (s + 1) as f64 * h,
                    reason: format!("trace drifted by {drift:e} in one step"),
                });
            }
            for z in rho.iter_mut() {
                *z /= tr;
            }
        }
        t_now = t;
        let dm = DensityMatrix { cutoff: n, data: DMatrix::from_row_slice(d, d, &rho) };
        dm.check(t)?;
        out.push(dm);
    }
    Ok(out)
}

fn axpy(x: &[C], y: &[C], a: f64, out: &mut [C]) {
    for ((o, xi), yi) in out.iter_mut().zip(x).zip(y) {
        *o = xi + yi * a;
    }
}

/// Moment operators for one cutoff, built once and reused.
pub struct MomentProbe {
    ops: [SparseOp; 8],
}

impl MomentProbe {
    pub fn new(cutoff: usize) -> Result<Self> {
        check_cutoff(cutoff)?;
        let a1 = ladder(cutoff, 0);
        let a2 = ladder(cutoff, 1);
        let ops = [
            SparseOp::from_dense(&a1),
            SparseOp::from_dense(&a2),
            SparseOp::from_dense(&(a1.adjoint() * &a1)),
            SparseOp::from_dense(&(a2.adjoint() * &a2)),
            SparseOp::from_dense(&(a1.adjoint() * &a2)),
            SparseOp::from_dense(&(&a1 * &a1)),
            SparseOp::from_dense(&(&a2 * &a2)),
            SparseOp::from_dense(&(&a1 * &a2)),
        ];
        Ok(Self { ops })
    }

    pub fn moments(&self, rho: &DensityMatrix) -> MomentState {
        let e = |k: usize| self.ops[k].expectation(&rho.data);
        MomentState {
            m1: e(0),
            m2: e(1),
            n1: e(2).re,
            n2: e(3).re,
            x12: e(4),
            s1: e(5),
            s2: e(6),
            s12: e(7),
        }
    }
}

pub fn moments_from_density(rho: &DensityMatrix) -> MomentState {
    MomentProbe::new(rho.cutoff).expect("density matrix has a valid cutoff").moments(rho)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleOptions {
    pub start_cutoff: usize,
    pub cutoff_step: usize,
    pub max_cutoff: usize,
    /// Largest accepted moment change between consecutive cutoffs.
    pub convergence_tol: f64,
    /// RK4 step as a fraction of `1 / rate_bound` at `max_cutoff`.
    pub step_factor: f64,
}

impl Default for OracleOptions {
    fn default() -> Self {
        Self {
            start_cutoff: 6,
            cutoff_step: 2,
            max_cutoff: 16,
            convergence_tol: 1e-8,
            step_factor: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleRun {
    /// Smallest cutoff whose moments agree with the next one.
    pub cutoff: usize,
    /// Cutoff of the reported trajectory, one step above `cutoff`.
    pub reference_cutoff: usize,
    /// Max moment change between the two.
    pub cutoff_change: f64,
    pub times: Vec<f64>,
    pub moments: Vec<MomentState>,
}

fn run_at(coeffs: &MasterEqCoefficients, drive: &DriveSpec, cutoff: usize, t_grid: &[f64], step: f64) -> Result<Vec<MomentState>> {
    let gen = lindblad_generator(coeffs, drive, cutoff)?;
    let probe = MomentProbe::new(cutoff)?;
    let traj = evolve_density(&DensityMatrix::vacuum(cutoff)?, &gen, t_grid, step)?;
    Ok(traj.iter().map(|r| probe.moments(r)).collect())
}

/// Runs the oracle from vacuum, raising the cutoff until consecutive
/// cutoffs agree on every moment at every grid time.
pub fn converged_oracle(
    coeffs: &MasterEqCoefficients,
    drive: &DriveSpec,
    t_grid: &[f64],
    opts: &OracleOptions,
) -> Result<OracleRun> {
    if opts.cutoff_step == 0 || opts.start_cutoff < 2 {
        return Err(Error::InvalidArgument("bad cutoff schedule".into()));
    }
    // Same step at every cutoff so the comparison isolates truncation.
    let bound = lindblad_generator(coeffs, drive, opts.max_cutoff)?.rate_bound();
    let step = if bound > 0.0 { opts.step_factor / bound } else { f64::INFINITY };
    let step = step.min(t_grid.last().copied().unwrap_or(1.0).max(1e-300));
    let mut cutoff = opts.start_cutoff;
    let mut prev = run_at(coeffs, drive, cutoff, t_grid, step)?;
    loop {
        let next_cutoff = cutoff + opts.cutoff_step;
        if next_cutoff > opts.max_cutoff {
            let change = f64::NAN;
            return Err(Error::CutoffNotConverged { cutoff, max_cutoff: opts.max_cutoff, change });
        }
        let next = run_at(coeffs, drive, next_cutoff, t_grid, step)?;
        let change = prev
            .iter()
            .zip(&next)
            .map(|(a, b)| a.max_abs_diff(b))
            .fold(0.0, f64::max);
        if change < opts.convergence_tol {
            return Ok(OracleRun {
                cutoff,
                reference_cutoff: next_cutoff,
                cutoff_change: change,
                times: t_grid.to_vec(),
                moments: next,
            });
        }
        if next_cutoff + opts.cutoff_step > opts.max_cutoff {
            return Err(Error::CutoffNotConverged { cutoff: next_cutoff, max_cutoff: opts.max_cutoff, change });
        }
        cutoff = next_cutoff;
        prev = next;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleComparison {
    pub cutoff: usize,
    pub reference_cutoff: usize,
    pub cutoff_change: f64,
    /// Largest deviation per moment: m1, m2, n1, n2, x12, s1, s2, s12.
    pub per_moment: [f64; 8],
    pub max_deviation: f64,
    /// Largest battery occupation seen by the oracle.
    pub max_battery_occupation: f64,
}

/// Compares the converged oracle against the moment equations from vacuum.
pub fn compare_with_moments(
    coeffs: &MasterEqCoefficients,
    drive: &DriveSpec,
    t_grid: &[f64],
    opts: &OracleOptions,
) -> Result<OracleComparison> {
    let run = converged_oracle(coeffs, drive, t_grid, opts)?;
    let system = second_moment_system(coeffs, drive);
    let traj = evolve(&system, &system.vacuum(), t_grid)?;
    let mut per = [0.0f64; 8];
    let mut nb = 0.0f64;
    for (k, o) in run.moments.iter().enumerate() {
        let m = traj.moments(k);
        let diffs = [
            (o.m1 - m.m1).norm(),
            (o.m2 - m.m2).norm(),
            (o.n1 - m.n1).abs(),
            (o.n2 - m.n2).abs(),
            (o.x12 - m.x12).norm(),
            (o.s1 - m.s1).norm(),
            (o.s2 - m.s2).norm(),
            (o.s12 - m.s12).norm(),
        ];
        for (p, d) in per.iter_mut().zip(diffs) {
            *p = p.max(d);
        }
        nb = nb.max(o.mode(drive.battery_mode()).1);
    }
    Ok(OracleComparison {
        cutoff: run.cutoff,
        reference_cutoff: run.reference_cutoff,
        cutoff_change: run.cutoff_change,
        per_moment: per,
        max_deviation: per.iter().copied().fold(0.0, f64::max),
        max_battery_occupation: nb,
    })
}
