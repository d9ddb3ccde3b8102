//! Choice of the control gains `(a, b)` that maximizes the tolerable link
//! delay `min(τ₁, τ₂)`.
//!
//! The gain conditions are dualized with multipliers `v = (v₁, v₂, v₃, v₄)`;
//! for fixed `v` the inner maximization runs over a dense gain grid with
//! `τ` eliminated, and the dual is minimized by an ellipsoid method (or a
//! projected subgradient method) in the 4-dimensional multiplier space.

use alloc::vec::Vec;

use crate::delay::DelayReport;
use crate::error::{Error, Result};
use crate::model::PlatoonSpec;
use crate::reliability::{reliability_lower_bound, LowerBound, Pipeline};
use crate::stability::{
    build_dynamics, plant_gain_margin, plant_spectra, string_gain_margin, LoopConstants,
};

/// Rectangle of admissible gains, 1/s.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GainBox {
    pub a_min: f64,
    pub a_max: f64,
    pub b_min: f64,
    pub b_max: f64,
}

impl Default for GainBox {
    fn default() -> Self {
        Self {
            a_min: 2.0,
            a_max: 4.0,
            b_min: 2.0,
            b_max: 4.0,
        }
    }
}

impl GainBox {
    pub fn validate(&self) -> Result<()> {
        let ok = self.a_min > 0.0
            && self.b_min > 0.0
            && self.a_min < self.a_max
            && self.b_min < self.b_max
            && self.a_max.is_finite()
            && self.b_max.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter {
                name: "gain box",
                reason: "need 0 < a_min < a_max and 0 < b_min < b_max",
            })
        }
    }

    pub fn contains(&self, a: f64, b: f64) -> bool {
        (self.a_min..=self.a_max).contains(&a) && (self.b_min..=self.b_max).contains(&b)
    }

    /// `n × n` lattice including the corners, `a` varying slowest.
    pub fn lattice(&self, n: usize) -> Vec<(f64, f64)> {
        let n = n.max(2);
        let step = |lo: f64, hi: f64, i: usize| lo + (hi - lo) * i as f64 / (n - 1) as f64;
        let mut out = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                out.push((
                    step(self.a_min, self.a_max, i),
                    step(self.b_min, self.b_max, j),
                ));
            }
        }
        out
    }
}

/// Duals `v₁..v₄` on the plant-delay, string-delay, plant-gain and
/// string-gain constraints.
pub type Duals = [f64; 4];

/// Constraint residuals at `(a, b, τ)`, each required to be nonnegative:
/// `λ_min(M₃) − λ_max(M₄)τ`, `(a+2b)Δd − 2(a+b)v_max τ − 2v_max`,
/// `a²+b²+2ab−4a` and `a+2b−2`.
pub fn subgradient(a: f64, b: f64, tau: f64, spec: &PlatoonSpec, k: f64) -> Result<Duals> {
    let s = spec.with_gains(a, b);
    let spectra = plant_spectra(&build_dynamics(&s), k)?;
    Ok(residuals(a, b, tau, spectra.min_m3, spectra.max_m4, spec))
}

fn residuals(a: f64, b: f64, tau: f64, min_m3: f64, max_m4: f64, spec: &PlatoonSpec) -> Duals {
    let span = spec.d_sparse - spec.d_dense;
    [
        min_m3 - max_m4 * tau,
        (a + 2.0 * b) * span - 2.0 * (a + b) * spec.v_max * tau - 2.0 * spec.v_max,
        plant_gain_margin(a, b),
        string_gain_margin(a, b),
    ]
}

/// `τ + Σ v_i · residual_i`.
pub fn lagrangian(
    a: f64,
    b: f64,
    tau: f64,
    duals: &Duals,
    spec: &PlatoonSpec,
    k: f64,
) -> Result<f64> {
    if duals.iter().any(|&v| v < 0.0) {
        return Err(Error::InvalidParameter {
            name: "duals",
            reason: "must be nonnegative",
        });
    }
    let g = subgradient(a, b, tau, spec, k)?;
    Ok(tau + dot(duals, &g))
}

fn dot(x: &Duals, y: &Duals) -> f64 {
    x.iter().zip(y).map(|(p, q)| p * q).sum()
}

/// One gain pair of the inner search with its thresholds.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Candidate {
    a: f64,
    b: f64,
    /// `max(0, min(τ₁, τ₂))`.
    tau: f64,
    residuals: Duals,
}

impl Candidate {
    fn feasible(&self) -> bool {
        self.residuals[2] >= 0.0 && self.residuals[3] >= 0.0
    }
}

/// Gain pairs at which both threshold formulas are defined.
fn candidates(bx: &GainBox, n: usize, spec: &PlatoonSpec, k: f64) -> Vec<Candidate> {
    bx.lattice(n)
        .into_iter()
        .filter_map(|(a, b)| {
            let s = spec.with_gains(a, b);
            let spectra = plant_spectra(&build_dynamics(&s), k).ok()?;
            let LoopConstants {
                a: ca,
                b: cb,
                c: cc,
            } = LoopConstants::of(&s);
            let tau2 = (cc * cc - 2.0 * ca - cb * cb) / (2.0 * ca * cc);
            let tau = spectra.threshold().min(tau2).max(0.0);
            Some(Candidate {
                a,
                b,
                tau,
                residuals: residuals(a, b, tau, spectra.min_m3, spectra.max_m4, spec),
            })
        })
        .collect()
}

/// Per-constraint best residual over the box; all gain residuals negative
/// proves that no pair in the box is admissible.
#[derive(Debug, Clone, PartialEq)]
pub struct InfeasibilityCertificate {
    pub gain_box: GainBox,
    /// Largest `a²+b²+2ab−4a` over the box.
    pub max_plant_margin: f64,
    /// Largest `a+2b−2` over the box.
    pub max_string_margin: f64,
    /// Largest value of the smaller of the two margins over the box.
    pub max_joint_margin: f64,
    /// Names of the conditions that fail everywhere in the box.
    pub violated: Vec<&'static str>,
}

fn certify(bx: &GainBox, n: usize) -> Option<InfeasibilityCertificate> {
    let lattice = bx.lattice(n);
    let max_of = |f: &dyn Fn(f64, f64) -> f64| {
        lattice
            .iter()
            .map(|&(a, b)| f(a, b))
            .fold(f64::NEG_INFINITY, f64::max)
    };
    // Both margins are convex quadratics/affine in (a, b), so their maxima
    // over the box sit at corners, which the lattice includes.
    let plant = max_of(&plant_gain_margin);
    let string = max_of(&string_gain_margin);
    let joint = max_of(&|a, b| plant_gain_margin(a, b).min(string_gain_margin(a, b)));
    if joint >= 0.0 {
        return None;
    }
    let mut violated = Vec::new();
    if plant < 0.0 {
        violated.push("a²+b²+2ab−4a ≥ 0");
    }
    if string < 0.0 {
        violated.push("a+2b−2 ≥ 0");
    }
    if violated.is_empty() {
        violated.push("a²+b²+2ab−4a ≥ 0 and a+2b−2 ≥ 0 jointly");
    }
    Some(InfeasibilityCertificate {
        gain_box: *bx,
        max_plant_margin: plant,
        max_string_margin: string,
        max_joint_margin: joint,
        violated,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DualMethod {
    #[default]
    Ellipsoid,
    /// Diminishing steps `1/t`.
    ProjectedSubgradient,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizeOptions {
    pub method: DualMethod,
    /// Lattice points per axis for the inner maximization.
    pub grid: usize,
    /// Dual accuracy `ε`.
    pub epsilon: f64,
    pub max_iterations: usize,
    pub razumikhin_k: f64,
    /// Resolution of the exhaustive oracle run alongside, if any.
    pub oracle_grid: Option<usize>,
}

impl Default for OptimizeOptions {
    fn default() -> Self {
        Self {
            method: DualMethod::Ellipsoid,
            grid: 101,
            epsilon: 1e-4,
            max_iterations: 5000,
            razumikhin_k: crate::stability::DEFAULT_RAZUMIKHIN_K,
            oracle_grid: None,
        }
    }
}

/// One dual iterate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DualStep {
    pub duals: Duals,
    /// Dual function value `max L(·, v)`.
    pub dual_value: f64,
    /// Best primal objective recovered so far.
    pub primal_value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptResult {
    pub a_star: f64,
    pub b_star: f64,
    /// `min(τ₁, τ₂)` at the returned gains, s.
    pub tau_star: f64,
    pub duals: Duals,
    pub iterations: usize,
    /// Whether the stopping rule fired before the iteration cap.
    pub converged: bool,
    /// `|τ_oracle − τ*|` against an exhaustive grid, s.
    pub oracle_gap: Option<f64>,
    pub trace: Vec<DualStep>,
}

struct Inner<'a> {
    pool: &'a [Candidate],
    best: Option<Candidate>,
}

impl Inner<'_> {
    /// Evaluates the dual function at `v`, recording the maximizer as a
    /// primal candidate when it is admissible.
    fn dual(&mut self, v: &Duals) -> (f64, Duals) {
        let mut arg = &self.pool[0];
        let mut value = f64::NEG_INFINITY;
        for c in self.pool {
            let l = c.tau + dot(v, &c.residuals);
            if l > value {
                value = l;
                arg = c;
            }
        }
        if arg.feasible() && self.best.is_none_or(|b| better(arg, &b)) {
            self.best = Some(*arg);
        }
        (value, arg.residuals)
    }

    fn primal(&self) -> f64 {
        self.best.map_or(f64::NEG_INFINITY, |c| c.tau)
    }

    /// Largest magnitude of each residual over the pool.
    fn residual_scale(&self) -> Duals {
        core::array::from_fn(|i| {
            self.pool
                .iter()
                .map(|c| libm::fabs(c.residuals[i]))
                .fold(0.0, f64::max)
                .max(1e-12)
        })
    }
}

/// Larger `τ`; ties go to smaller `a`, then smaller `b`.
fn better(x: &Candidate, y: &Candidate) -> bool {
    (x.tau, -x.a, -x.b) > (y.tau, -y.a, -y.b)
}

const DIM: usize = 4;

fn ellipsoid(
    inner: &mut Inner<'_>,
    opts: &OptimizeOptions,
    trace: &mut Vec<DualStep>,
) -> (Duals, usize, bool) {
    let n = DIM as f64;
    // Work in w_i = v_i·scale_i so every residual is O(1); otherwise the
    // shape matrix spans many decades and loses definiteness.
    let scale = inner.residual_scale();
    let to_duals = |w: &Duals| -> Duals { core::array::from_fn(|i| w[i] / scale[i]) };
    let mut center: Duals = core::array::from_fn(|i| 50.0 * scale[i]);
    let mut shape = [[0.0; DIM]; DIM];
    for (i, row) in shape.iter_mut().enumerate() {
        row[i] = (100.0 * scale[i]) * (100.0 * scale[i]);
    }
    let mut best_duals = to_duals(&center);
    let mut best_value = f64::INFINITY;
    for it in 1..=opts.max_iterations {
        let g: Duals = if let Some(i) = (0..DIM).find(|&i| center[i] < 0.0) {
            let mut cut = [0.0; DIM];
            cut[i] = -1.0;
            cut
        } else {
            let v = to_duals(&center);
            let (value, g) = inner.dual(&v);
            if value < best_value {
                best_value = value;
                best_duals = v;
            }
            trace.push(DualStep {
                duals: v,
                dual_value: value,
                primal_value: inner.primal(),
            });
            if best_value - inner.primal() <= opts.epsilon {
                return (best_duals, it, true);
            }
            core::array::from_fn(|i| g[i] / scale[i])
        };
        let pg: Duals = core::array::from_fn(|i| (0..DIM).map(|j| shape[i][j] * g[j]).sum());
        let gpg = dot(&g, &pg);
        if !(gpg > 0.0) {
            break;
        }
        let width = libm::sqrt(gpg);
        if center.iter().all(|&x| x >= 0.0) && width <= opts.epsilon {
            return (best_duals, it, true);
        }
        let step: Duals = core::array::from_fn(|i| pg[i] / width);
        for i in 0..DIM {
            center[i] -= step[i] / (n + 1.0);
        }
        let grow = n * n / (n * n - 1.0);
        for i in 0..DIM {
            for j in i..DIM {
                let updated = grow * (shape[i][j] - 2.0 / (n + 1.0) * step[i] * step[j]);
                shape[i][j] = updated;
                shape[j][i] = updated;
            }
        }
    }
    (best_duals, trace.len(), false)
}

fn projected_subgradient(
    inner: &mut Inner<'_>,
    opts: &OptimizeOptions,
    trace: &mut Vec<DualStep>,
) -> (Duals, usize, bool) {
    let mut v: Duals = [1.0; DIM];
    let mut best_duals = v;
    let mut best_value = f64::INFINITY;
    for t in 1..=opts.max_iterations {
        let (value, g) = inner.dual(&v);
        if value < best_value {
            best_value = value;
            best_duals = v;
        }
        trace.push(DualStep {
            duals: v,
            dual_value: value,
            primal_value: inner.primal(),
        });
        if best_value - inner.primal() <= opts.epsilon {
            return (best_duals, t, true);
        }
        let step = 1.0 / t as f64;
        let next: Duals = core::array::from_fn(|i| (v[i] - step * g[i]).max(0.0));
        let moved = libm::sqrt(next.iter().zip(&v).map(|(p, q)| (p - q) * (p - q)).sum());
        v = next;
        if moved <= opts.epsilon {
            return (best_duals, t, true);
        }
    }
    (best_duals, opts.max_iterations, false)
}

/// Exhaustive search over an `n × n` lattice: the admissible pair with the
/// largest `min(τ₁, τ₂)`, or `None` when no lattice point is admissible.
pub fn grid_oracle(bx: &GainBox, n: usize, spec: &PlatoonSpec, k: f64) -> Option<(f64, f64, f64)> {
    candidates(bx, n, spec, k)
        .into_iter()
        .filter(Candidate::feasible)
        .reduce(|x, y| if better(&y, &x) { y } else { x })
        .map(|c| (c.a, c.b, c.tau))
}

pub fn optimize_gains(
    bx: &GainBox,
    spec: &PlatoonSpec,
    opts: &OptimizeOptions,
) -> Result<OptResult> {
    bx.validate()?;
    spec.validate()?;
    if let Some(cert) = certify(bx, opts.grid) {
        return Err(Error::InfeasibleBox(cert));
    }
    let pool = candidates(bx, opts.grid, spec, opts.razumikhin_k);
    if pool.is_empty() {
        return Err(Error::InfeasibleBox(InfeasibilityCertificate {
            gain_box: *bx,
            max_plant_margin: f64::NAN,
            max_string_margin: f64::NAN,
            max_joint_margin: f64::NAN,
            violated: alloc::vec!["real spectrum of the error dynamics"],
        }));
    }
    let mut inner = Inner {
        pool: &pool,
        best: None,
    };
    let mut trace = Vec::new();
    let (duals, iterations, converged) = match opts.method {
        DualMethod::Ellipsoid => ellipsoid(&mut inner, opts, &mut trace),
        DualMethod::ProjectedSubgradient => projected_subgradient(&mut inner, opts, &mut trace),
    };
    inner.dual(&duals);
    let best = inner
        .best
        .ok_or(Error::InfeasibleBox(InfeasibilityCertificate {
            gain_box: *bx,
            max_plant_margin: f64::NAN,
            max_string_margin: f64::NAN,
            max_joint_margin: f64::NAN,
            violated: alloc::vec!["no admissible maximizer recovered"],
        }))?;
    let oracle_gap = opts
        .oracle_grid
        .and_then(|n| grid_oracle(bx, n, spec, opts.razumikhin_k))
        .map(|(_, _, tau)| libm::fabs(tau - best.tau));
    Ok(OptResult {
        a_star: best.a,
        b_star: best.b,
        tau_star: best.tau,
        duals,
        iterations,
        converged,
        oracle_gap,
        trace,
    })
}

/// Gains maximizing the reliability lower bound, with the delay and bound
/// at the optimum.
#[derive(Debug, Clone, PartialEq)]
pub struct LowerBoundOpt {
    pub gains: OptResult,
    pub delay: DelayReport,
    pub bound: LowerBound,
}

/// Both bound terms decrease in `T̄/τ` and the mean delay does not depend
/// on the gains, so maximizing the bound reduces to maximizing
/// `min(τ₁, τ₂)` as long as `T̄ ≤ τ*`.
pub fn optimize_lower_bound(
    bx: &GainBox,
    ctx: &Pipeline,
    opts: &OptimizeOptions,
) -> Result<LowerBoundOpt> {
    let opts = OptimizeOptions {
        razumikhin_k: ctx.razumikhin_k,
        ..*opts
    };
    let gains = optimize_gains(bx, &ctx.spec, &opts)?;
    let (_, _, delay) = ctx.delay()?;
    if delay.end_to_end > gains.tau_star {
        return Err(Error::ProvisoFailed {
            mean_delay: delay.end_to_end,
            tau_star: gains.tau_star,
        });
    }
    let bound = reliability_lower_bound(delay.end_to_end, gains.tau_star)?;
    Ok(LowerBoundOpt {
        gains,
        delay,
        bound,
    })
}
