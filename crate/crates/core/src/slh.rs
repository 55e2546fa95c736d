//! SLH triplets for linear two-mode networks.
//!
//! A triplet carries one scattering phase and one coupling vector per output
//! channel, plus a 2x2 Hermitian matrix `h` for `H = sum_ij h_ij a_i^dag a_j`.

use nalgebra::{Matrix2, Vector2};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, ensure_nonnegative, Error, Result};

const UNIT_TOL: f64 = 1e-12;
const HERMITIAN_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct SlhTriplet {
    scattering: Vec<Complex64>,
    coupling: Vec<Vector2<Complex64>>,
    hamiltonian: Matrix2<Complex64>,
    // Detuning terms supplied at coupling points, tracked apart from the
    // waveguide-induced part of `hamiltonian` so Lamb shifts can be isolated.
    bare: Matrix2<Complex64>,
}

impl SlhTriplet {
    /// Single-channel identity (unit scattering, no coupling, no Hamiltonian).
    pub fn identity() -> Self {
        Self {
            scattering: vec![Complex64::new(1.0, 0.0)],
            coupling: vec![Vector2::zeros()],
            hamiltonian: Matrix2::zeros(),
            bare: Matrix2::zeros(),
        }
    }

    pub fn channels(&self) -> usize {
        self.scattering.len()
    }

    pub fn scattering(&self) -> &[Complex64] {
        &self.scattering
    }

    pub fn coupling(&self) -> &[Vector2<Complex64>] {
        &self.coupling
    }

    pub fn hamiltonian(&self) -> &Matrix2<Complex64> {
        &self.hamiltonian
    }

    /// The part of the Hamiltonian that was supplied at coupling points.
    pub fn bare_hamiltonian(&self) -> &Matrix2<Complex64> {
        &self.bare
    }

    /// Checks the structural invariants (unit scattering, Hermitian `h`).
    pub fn check_invariants(&self) -> Result<()> {
        if self.scattering.len() != self.coupling.len() {
            return Err(Error::InvalidArgument(
                "scattering and coupling channel counts differ".into(),
            ));
        }
        for s in &self.scattering {
            if (s.norm() - 1.0).abs() > UNIT_TOL {
                return Err(Error::InvalidArgument(format!(
                    "scattering entry {s} is not unit modulus"
                )));
            }
        }
        let h = &self.hamiltonian;
        if (h - h.adjoint()).camax() > HERMITIAN_TOL * (1.0 + h.camax()) {
            return Err(Error::InvalidArgument("hamiltonian is not Hermitian".into()));
        }
        Ok(())
    }
}

pub fn phase_element(phi: f64) -> Result<SlhTriplet> {
    ensure_finite("phi", phi)?;
    Ok(SlhTriplet {
        scattering: vec![Complex64::from_polar(1.0, phi)],
        ..SlhTriplet::identity()
    })
}

/// Point coupling of `mode_index` (1 or 2) with rate `rate`, coupling
/// operator `sqrt(rate/2) e^{i local_phase} a_mode`. `hamiltonian` holds the
/// bare node terms (detunings) and must be Hermitian.
pub fn coupling_point(
    mode_index: usize,
    rate: f64,
    local_phase: f64,
    hamiltonian: Matrix2<Complex64>,
) -> Result<SlhTriplet> {
    ensure_nonnegative("rate", rate)?;
    ensure_finite("local_phase", local_phase)?;
    if !(1..=2).contains(&mode_index) {
        return Err(Error::InvalidArgument(format!(
            "mode_index must be 1 or 2, got {mode_index}"
        )));
    }
    if (hamiltonian - hamiltonian.adjoint()).camax()
        > HERMITIAN_TOL * (1.0 + hamiltonian.camax())
    {
        return Err(Error::InvalidArgument("node hamiltonian is not Hermitian".into()));
    }
    let mut c = Vector2::zeros();
    c[mode_index - 1] = Complex64::from_polar((rate / 2.0).sqrt(), local_phase);
    Ok(SlhTriplet {
        scattering: vec![Complex64::new(1.0, 0.0)],
        coupling: vec![c],
        hamiltonian,
        bare: hamiltonian,
    })
}

/// Series product: the output of `upstream` feeds `downstream`.
pub fn series(downstream: &SlhTriplet, upstream: &SlhTriplet) -> Result<SlhTriplet> {
    if downstream.channels() != 1 || upstream.channels() != 1 {
        return Err(Error::InvalidArgument(format!(
            "series product needs single-channel triplets, got {} and {}",
            downstream.channels(),
            upstream.channels()
        )));
    }
    let s2 = downstream.scattering[0];
    let s1 = upstream.scattering[0];
    let l2 = downstream.coupling[0];
    let l1 = upstream.coupling[0];
    // L2^dag S2 L1 as a quadratic form: coefficient of a_i^dag a_j is
    // conj(l2_i) s2 l1_j.
    let m = l2.map(|z| z.conj()) * l1.transpose() * s2;
    let i2 = Complex64::new(0.0, 2.0);
    let cross = (m - m.adjoint()) / i2;
    Ok(SlhTriplet {
        scattering: vec![s2 * s1],
        coupling: vec![l2 + l1 * s2],
        hamiltonian: upstream.hamiltonian + downstream.hamiltonian + cross,
        bare: upstream.bare + downstream.bare,
    })
}

/// Series-composes a chain listed in propagation order (first element is
/// hit first by the field).
pub fn chain(elements: &[SlhTriplet]) -> Result<SlhTriplet> {
    let mut iter = elements.iter();
    let mut acc = match iter.next() {
        Some(first) => first.clone(),
        None => return Ok(SlhTriplet::identity()),
    };
    for next in iter {
        acc = series(next, &acc)?;
    }
    Ok(acc)
}

pub fn concatenate(a: &SlhTriplet, b: &SlhTriplet) -> SlhTriplet {
    let mut scattering = a.scattering.clone();
    scattering.extend_from_slice(&b.scattering);
    let mut coupling = a.coupling.clone();
    coupling.extend_from_slice(&b.coupling);
    SlhTriplet {
        scattering,
        coupling,
        hamiltonian: a.hamiltonian + b.hamiltonian,
        bare: a.bare + b.bare,
    }
}

/// Master-equation parameters for the two modes. All rates are in units of
/// the reference frequency.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MasterEqCoefficients {
    pub lamb_shift_1: f64,
    pub lamb_shift_2: f64,
    pub detuning_eff_1: f64,
    pub detuning_eff_2: f64,
    pub exchange: Complex64,
    pub decay_1: f64,
    pub decay_2: f64,
    pub collective: Complex64,
    pub intrinsic_1: f64,
    pub intrinsic_2: f64,
    pub linewidth_1: f64,
    pub linewidth_2: f64,
}

impl MasterEqCoefficients {
    /// Builds a coefficient set from the waveguide part alone. The effective
    /// detunings equal the Lamb shifts (no bare detuning).
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        lamb_shift: [f64; 2],
        exchange: Complex64,
        decay: [f64; 2],
        collective: Complex64,
        kappa1: f64,
        kappa2: f64,
    ) -> Self {
        Self {
            lamb_shift_1: lamb_shift[0],
            lamb_shift_2: lamb_shift[1],
            detuning_eff_1: lamb_shift[0],
            detuning_eff_2: lamb_shift[1],
            exchange,
            decay_1: decay[0],
            decay_2: decay[1],
            collective,
            intrinsic_1: kappa1,
            intrinsic_2: kappa2,
            linewidth_1: decay[0] + kappa1,
            linewidth_2: decay[1] + kappa2,
        }
    }

    /// Sets the bare detunings to cancel the Lamb shifts, giving zero
    /// effective detuning on both modes.
    pub fn tuned_to_resonance(mut self) -> Self {
        self.detuning_eff_1 = 0.0;
        self.detuning_eff_2 = 0.0;
        self
    }

    pub fn with_effective_detunings(mut self, d1: f64, d2: f64) -> Self {
        self.detuning_eff_1 = d1;
        self.detuning_eff_2 = d2;
        self
    }

    /// Bare detunings implied by the effective detunings, `Delta_j = Delta_j^eff - dw_j`.
    pub fn bare_detunings(&self) -> [f64; 2] {
        [
            self.detuning_eff_1 - self.lamb_shift_1,
            self.detuning_eff_2 - self.lamb_shift_2,
        ]
    }

    /// Largest waveguide coefficient magnitude; the natural rate scale.
    pub fn rate_scale(&self) -> f64 {
        [
            self.lamb_shift_1.abs(),
            self.lamb_shift_2.abs(),
            self.exchange.norm(),
            self.decay_1,
            self.decay_2,
            self.collective.norm(),
            self.linewidth_1,
            self.linewidth_2,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }

    /// Largest absolute difference over the six waveguide coefficients.
    pub fn max_waveguide_diff(&self, other: &Self) -> f64 {
        [
            (self.lamb_shift_1 - other.lamb_shift_1).abs(),
            (self.lamb_shift_2 - other.lamb_shift_2).abs(),
            (self.exchange - other.exchange).norm(),
            (self.decay_1 - other.decay_1).abs(),
            (self.decay_2 - other.decay_2).abs(),
            (self.collective - other.collective).norm(),
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

pub fn extract_coefficients(
    net: &SlhTriplet,
    kappa1: f64,
    kappa2: f64,
) -> Result<MasterEqCoefficients> {
    ensure_nonnegative("kappa1", kappa1)?;
    ensure_nonnegative("kappa2", kappa2)?;
    if net.channels() == 0 || net.channels() > 2 {
        return Err(Error::UnsupportedNetwork(format!(
            "expected 1 or 2 channels, got {}",
            net.channels()
        )));
    }
    net.check_invariants()?;
    let mut g1 = 0.0;
    let mut g2 = 0.0;
    let mut g12 = Complex64::new(0.0, 0.0);
    for c in &net.coupling {
        g1 += c[0].norm_sqr();
        g2 += c[1].norm_sqr();
        // Coefficient of a1 rho a2^dag in the dissipator.
        g12 += c[0] * c[1].conj();
    }
    let h = &net.hamiltonian;
    let b = &net.bare;
    let lamb = [(h[(0, 0)] - b[(0, 0)]).re, (h[(1, 1)] - b[(1, 1)]).re];
    let mut out = MasterEqCoefficients::new(lamb, h[(1, 0)], [g1, g2], g12, kappa1, kappa2);
    out.detuning_eff_1 = h[(0, 0)].re;
    out.detuning_eff_2 = h[(1, 1)].re;
    Ok(out)
}
