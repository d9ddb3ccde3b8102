//! Delay thresholds for plant stability (Lyapunov–Razumikhin bound on the
//! delayed error dynamics) and string stability (Padé-approximated
//! transfer-function magnitude).

use alloc::vec::Vec;

use nalgebra::{Complex, DMatrix, SymmetricEigen};

use crate::error::{Error, GainCondition, Result};
use crate::model::PlatoonSpec;

/// Default Razumikhin constant `k`; the bound needs `k > 1` and is least
/// conservative as `k → 1⁺`.
pub const DEFAULT_RAZUMIKHIN_K: f64 = 1.01;

/// Relative size of an imaginary eigenvalue part that is still treated as
/// rounding noise.
const IMAGINARY_TOLERANCE: f64 = 1e-9;

/// The constants `A = a·v_max/(d_sparse − d_dense)`, `B = b`, `C = a + b`
/// of the linearized follower dynamics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoopConstants {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl LoopConstants {
    pub fn of(spec: &PlatoonSpec) -> Self {
        Self {
            a: spec.gain_a * spec.ramp_slope(),
            b: spec.gain_b,
            c: spec.gain_a + spec.gain_b,
        }
    }
}

/// `a² + b² + 2ab − 4a`; nonnegative gains admit a plant-stability bound.
pub fn plant_gain_margin(a: f64, b: f64) -> f64 {
    a * a + b * b + 2.0 * a * b - 4.0 * a
}

/// `a + 2b − 2`; nonnegative gains satisfy the string-stability premise.
pub fn string_gain_margin(a: f64, b: f64) -> f64 {
    a + 2.0 * b - 2.0
}

/// Linear delayed error dynamics `ė = M1·e + Σ_i M2^i·e(t − τ_i)` over the
/// state `e = [δ_1..δ_M, z_1..z_M]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorDynamics {
    pub m1: DMatrix<f64>,
    pub m2: Vec<DMatrix<f64>>,
    pub constants: LoopConstants,
}

impl ErrorDynamics {
    pub fn followers(&self) -> usize {
        self.m2.len()
    }

    /// `M3 = −2(M1 + Σ_i M2^i)`.
    pub fn m3(&self) -> DMatrix<f64> {
        let mut sum = self.m1.clone();
        for m in &self.m2 {
            sum += m;
        }
        sum * -2.0
    }

    /// `M4 = Σ_i M2^i M1 M1ᵀ M2^iᵀ + Σ_{i≥2} M2^i M2^{i−1} M2^{i−1}ᵀ M2^iᵀ + 2Mk·I`.
    pub fn m4(&self, k: f64) -> DMatrix<f64> {
        let n = self.m1.nrows();
        let followers = self.followers();
        let mut out = DMatrix::<f64>::identity(n, n) * (2.0 * followers as f64 * k);
        let m1m1t = &self.m1 * self.m1.transpose();
        for m in &self.m2 {
            out += m * &m1m1t * m.transpose();
        }
        for pair in self.m2.windows(2) {
            let prod = &pair[1] * &pair[0];
            out += &prod * prod.transpose();
        }
        out
    }
}

/// Assembles `M1` and the per-link delay matrices `M2^i`.
pub fn build_dynamics(spec: &PlatoonSpec) -> ErrorDynamics {
    let m = spec.followers;
    let constants = LoopConstants::of(spec);
    let mut m1 = DMatrix::<f64>::zeros(2 * m, 2 * m);
    for i in 0..m {
        // δ̇_i = z_{i−1} − z_i
        m1[(i, m + i)] = -1.0;
        if i > 0 {
            m1[(i, m + i - 1)] = 1.0;
        }
        m1[(m + i, m + i)] = -constants.c;
    }
    let m2 = (0..m)
        .map(|i| {
            let mut mat = DMatrix::<f64>::zeros(2 * m, 2 * m);
            mat[(m + i, i)] = constants.a;
            if i > 0 {
                mat[(m + i, m + i - 1)] = constants.b;
            }
            mat
        })
        .collect();
    ErrorDynamics { m1, m2, constants }
}

/// Eigenvalues of the `M3`-shaped matrix. When reordering the state as
/// `(δ_1, z_1, δ_2, z_2, …)` makes the matrix block lower triangular, the
/// spectrum is read off the 2×2 diagonal blocks; this sidesteps the
/// defective repeated eigenvalues that a dense solver splits by
/// `O(ε^{1/M})`. Other matrices go to a dense Schur solver.
pub fn error_spectrum(mat: &DMatrix<f64>) -> Vec<Complex<f64>> {
    let n = mat.nrows();
    if n % 2 == 0 && n > 0 {
        let m = n / 2;
        let slot = |v: usize, which: usize| which * m + v;
        let upper_is_zero = (0..m).all(|bi| {
            (bi + 1..m)
                .all(|bj| (0..2).all(|p| (0..2).all(|q| mat[(slot(bi, p), slot(bj, q))] == 0.0)))
        });
        if upper_is_zero {
            let mut out = Vec::with_capacity(n);
            for v in 0..m {
                let p = mat[(slot(v, 0), slot(v, 0))];
                let q = mat[(slot(v, 0), slot(v, 1))];
                let r = mat[(slot(v, 1), slot(v, 0))];
                let s = mat[(slot(v, 1), slot(v, 1))];
                let (l1, l2) = quadratic_eigenvalues(p, q, r, s);
                out.push(l1);
                out.push(l2);
            }
            return out;
        }
    }
    mat.complex_eigenvalues().iter().copied().collect()
}

/// Eigenvalues of `[[p, q], [r, s]]`.
pub fn quadratic_eigenvalues(p: f64, q: f64, r: f64, s: f64) -> (Complex<f64>, Complex<f64>) {
    let half_trace = 0.5 * (p + s);
    let det = p * s - q * r;
    let disc = half_trace * half_trace - det;
    if disc >= 0.0 {
        let root = libm::sqrt(disc);
        // Avoid cancellation in the smaller-magnitude root.
        let big = if half_trace >= 0.0 {
            half_trace + root
        } else {
            half_trace - root
        };
        let small = if big != 0.0 { det / big } else { 0.0 };
        let (lo, hi) = if small <= big {
            (small, big)
        } else {
            (big, small)
        };
        (Complex::new(lo, 0.0), Complex::new(hi, 0.0))
    } else {
        let im = libm::sqrt(-disc);
        (Complex::new(half_trace, -im), Complex::new(half_trace, im))
    }
}

/// Smallest eigenvalue of a matrix whose spectrum must be real.
fn min_real_eigenvalue(mat: &DMatrix<f64>) -> Result<f64> {
    let scale = mat.amax().max(f64::MIN_POSITIVE);
    let spectrum = error_spectrum(mat);
    let imaginary = spectrum.iter().map(|z| z.im.abs()).fold(0.0, f64::max);
    if imaginary > IMAGINARY_TOLERANCE * scale {
        return Err(Error::NonRealSpectrum { imaginary });
    }
    Ok(spectrum.iter().map(|z| z.re).fold(f64::INFINITY, f64::min))
}

/// Largest eigenvalue of a symmetric matrix. Diagonal input, which is what
/// `M4` reduces to for a chain of followers, skips the iterative solver.
pub fn max_symmetric_eigenvalue(mat: &DMatrix<f64>) -> f64 {
    let n = mat.nrows();
    let diagonal = (0..n).all(|i| (0..n).all(|j| i == j || mat[(i, j)] == 0.0));
    if diagonal {
        return mat
            .diagonal()
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
    }
    SymmetricEigen::new(mat.clone())
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max)
}

/// The two spectral quantities behind the plant threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlantSpectra {
    /// `λ_min(M3)`.
    pub min_m3: f64,
    /// `λ_max(M4)`.
    pub max_m4: f64,
}

impl PlantSpectra {
    pub fn threshold(&self) -> f64 {
        self.min_m3 / self.max_m4
    }
}

/// `λ_min(M3)` and `λ_max(M4)` for the given dynamics, without checking the
/// gain premise.
pub fn plant_spectra(dynamics: &ErrorDynamics, k: f64) -> Result<PlantSpectra> {
    if !(k > 1.0) {
        return Err(Error::InvalidParameter {
            name: "razumikhin_k",
            reason: "must exceed 1",
        });
    }
    Ok(PlantSpectra {
        min_m3: min_real_eigenvalue(&dynamics.m3())?,
        max_m4: max_symmetric_eigenvalue(&dynamics.m4(k)),
    })
}

/// Plant-stability delay threshold `τ₁ = λ_min(M3)/λ_max(M4)`.
pub fn plant_threshold(dynamics: &ErrorDynamics, gain_a: f64, gain_b: f64, k: f64) -> Result<f64> {
    let margin = plant_gain_margin(gain_a, gain_b);
    if margin < 0.0 {
        return Err(Error::InfeasibleGains {
            condition: GainCondition::Plant,
            value: margin,
        });
    }
    Ok(plant_spectra(dynamics, k)?.threshold())
}

/// Convenience wrapper building the dynamics from `spec`.
pub fn plant_threshold_for(spec: &PlatoonSpec, k: f64) -> Result<f64> {
    plant_threshold(&build_dynamics(spec), spec.gain_a, spec.gain_b, k)
}

/// String-stability threshold together with the premise flag.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StringThreshold {
    /// `τ₂ = (C² − 2A − B²)/(2AC)`, s.
    pub tau: f64,
    /// Whether `a + 2b − 2 ≥ 0` holds. The threshold is still reported when
    /// it does not.
    pub premise_ok: bool,
}

pub fn string_threshold(spec: &PlatoonSpec) -> Result<StringThreshold> {
    let LoopConstants { a, b, c } = LoopConstants::of(spec);
    let numerator = c * c - 2.0 * a - b * b;
    if numerator < 0.0 {
        return Err(Error::InfeasibleGains {
            condition: GainCondition::StringThreshold,
            value: numerator,
        });
    }
    Ok(StringThreshold {
        tau: numerator / (2.0 * a * c),
        premise_ok: string_gain_margin(spec.gain_a, spec.gain_b) >= 0.0,
    })
}

/// `|T(jf)|` for `T(s) = (A + sB·e^{−sτ})/(s² + Cs + A)` with the exact delay.
pub fn string_transfer_magnitude(spec: &PlatoonSpec, tau: f64, f: f64) -> f64 {
    let LoopConstants { a, b, c } = LoopConstants::of(spec);
    let (sin, cos) = libm::sincos(f * tau);
    let num_re = a + f * b * sin;
    let num_im = f * b * cos;
    let den_re = a - f * f;
    let den_im = c * f;
    libm::hypot(num_re, num_im) / libm::hypot(den_re, den_im)
}

/// `Γ(f) = E f⁴ + F f² + G`; nonnegative exactly when the Padé-approximated
/// transfer function has magnitude at most one.
pub fn string_quartic(spec: &PlatoonSpec, tau: f64, f: f64) -> f64 {
    let LoopConstants { a, b, c } = LoopConstants::of(spec);
    let e = 0.25 * tau * tau;
    let ff = (0.5 * a - 0.25 * b * b + 0.25 * c * c) * tau * tau + 1.0;
    let g = c * c - 2.0 * a - b * b - 2.0 * a * c * tau;
    let f2 = f * f;
    e * f2 * f2 + ff * f2 + g
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityReport {
    pub tau1: Option<f64>,
    pub tau2: Option<f64>,
    /// `min(τ₁, τ₂)` when both thresholds exist.
    pub tau_min: Option<f64>,
    pub plant_gain_condition_ok: bool,
    pub string_gain_condition_ok: bool,
    pub razumikhin_k: f64,
    pub tau1_error: Option<Error>,
    pub tau2_error: Option<Error>,
}

impl StabilityReport {
    /// Which of the two thresholds binds, if both exist.
    pub fn plant_binds(&self) -> Option<bool> {
        Some(self.tau1? <= self.tau2?)
    }
}

pub fn stability_report(spec: &PlatoonSpec, k: f64) -> StabilityReport {
    let (tau1, tau1_error) = match plant_threshold_for(spec, k) {
        Ok(t) => (Some(t), None),
        Err(e) => (None, Some(e)),
    };
    let (tau2, tau2_error) = match string_threshold(spec) {
        Ok(t) => (Some(t.tau), None),
        Err(e) => (None, Some(e)),
    };
    let tau_min = match (tau1, tau2) {
        (Some(x), Some(y)) => Some(x.min(y)),
        _ => None,
    };
    StabilityReport {
        tau1,
        tau2,
        tau_min,
        plant_gain_condition_ok: plant_gain_margin(spec.gain_a, spec.gain_b) >= 0.0,
        string_gain_condition_ok: string_gain_margin(spec.gain_a, spec.gain_b) >= 0.0,
        razumikhin_k: k,
        tau1_error,
        tau2_error,
    }
}
