//! Interference and SINR statistics of a platoon V2V link on a multi-lane
//! highway. Interferers form Poisson point processes: homogeneous on the
//! other lanes, and on the platoon lane only ahead of the head and behind
//! the tail. Interfering links see Rayleigh fading; the desired link sees
//! Nakagami fading with integer shape `β`.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::model::{HighwayScene, RadioSpec};
use crate::quad::{integrate, integrate_to_infinity, Estimate, Tolerance};

/// Tolerance used for the Laplace-transform integrals. It is tight so the
/// CCDF can be differenced.
const LAPLACE_TOLERANCE: Tolerance = Tolerance {
    abs: 1e-300,
    rel: 1e-12,
    max_intervals: 4000,
};

const MOMENT_TOLERANCE: Tolerance = Tolerance {
    abs: 1e-300,
    rel: 1e-8,
    max_intervals: 4000,
};

/// Probability mass left out at either end of the moment integrals.
pub const TAIL_MASS: f64 = 1e-9;

/// Densities more negative than this are reported as errors.
const DENSITY_FLOOR: f64 = -1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct SinrModel {
    pub scene: HighwayScene,
    pub radio: RadioSpec,
    /// Number of followers `M`; each link gets a subcarrier of `ω/M`.
    pub followers: usize,
}

impl SinrModel {
    pub fn new(scene: HighwayScene, radio: RadioSpec, followers: usize) -> Result<Self> {
        scene.validate()?;
        radio.validate()?;
        if followers == 0 {
            return Err(Error::InvalidParameter {
                name: "followers",
                reason: "need at least one follower",
            });
        }
        Ok(Self {
            scene,
            radio,
            followers,
        })
    }

    /// Subcarrier bandwidth `ω/M`, Hz.
    pub fn subcarrier_bandwidth(&self) -> f64 {
        self.radio.total_bandwidth / self.followers as f64
    }

    /// Noise power over one subcarrier, W.
    pub fn noise_power(&self) -> f64 {
        self.radio.noise_psd * self.subcarrier_bandwidth()
    }

    /// `η = β (β!)^{−1/β}` of the Gamma-tail bound.
    pub fn eta(&self) -> f64 {
        gamma_tail_eta(self.radio.nakagami_shape)
    }

    /// Service time `S·M/(ω log₂(1 + γ))` of one packet at SINR `gamma`.
    pub fn service_time(&self, gamma: f64) -> f64 {
        self.radio.packet_size / (self.subcarrier_bandwidth() * libm::log2(1.0 + gamma))
    }

    /// SINR at which a packet takes exactly `tau` to transmit,
    /// `2^{SM/(ωτ)} − 1`.
    pub fn sinr_for_service_time(&self, tau: f64) -> f64 {
        libm::exp2(self.radio.packet_size / (self.subcarrier_bandwidth() * tau)) - 1.0
    }
}

pub fn gamma_tail_eta(shape: u32) -> f64 {
    let beta = shape as f64;
    let factorial: f64 = (1..=shape).map(|k| k as f64).product();
    beta * libm::pow(factorial, -1.0 / beta)
}

fn binomial(n: u32, k: u32) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// `∫ sP/(r^α + sP)` along a lane offset laterally by `offset`, over the
/// whole lane, parametrized by the along-road coordinate.
fn lane_exponent(sp: f64, alpha: f64, offset: f64) -> Result<f64> {
    let scale = offset.max(libm::pow(sp, 1.0 / alpha)).max(1.0);
    let half = integrate_to_infinity(
        |x| {
            let r2 = x * x + offset * offset;
            sp / (libm::pow(r2, 0.5 * alpha) + sp)
        },
        0.0,
        scale,
        LAPLACE_TOLERANCE,
    )?;
    Ok(2.0 * half.value)
}

/// `∫_{start}^∞ sP/(r^α + sP) dr` along the platoon lane.
fn ray_exponent(sp: f64, alpha: f64, start: f64) -> Result<f64> {
    let scale = start.max(libm::pow(sp, 1.0 / alpha)).max(1.0);
    Ok(integrate_to_infinity(
        |r| sp / (libm::pow(r, alpha) + sp),
        start,
        scale,
        LAPLACE_TOLERANCE,
    )?
    .value)
}

/// Laplace transform of the aggregate interference from the other lanes.
pub fn laplace_nonplatoon(s: f64, model: &SinrModel) -> Result<f64> {
    if s < 0.0 {
        return Err(Error::InvalidParameter {
            name: "s",
            reason: "must be nonnegative",
        });
    }
    if s == 0.0 {
        return Ok(1.0);
    }
    let sp = s * model.radio.tx_power;
    let alpha = model.radio.pathloss_exponent;
    let mut exponent = 0.0;
    for lane in &model.scene.nonplatoon {
        if lane.density > 0.0 {
            let offset = model.scene.lateral_offset(lane.lane);
            exponent += lane.density * lane_exponent(sp, alpha, offset)?;
        }
    }
    Ok(libm::exp(-exponent))
}

/// Laplace transform of the interference from non-platoon vehicles on the
/// platoon lane, ahead of the head and behind the tail.
pub fn laplace_platoon(s: f64, model: &SinrModel) -> Result<f64> {
    if s < 0.0 {
        return Err(Error::InvalidParameter {
            name: "s",
            reason: "must be nonnegative",
        });
    }
    if s == 0.0 {
        return Ok(1.0);
    }
    let sp = s * model.radio.tx_power;
    let alpha = model.radio.pathloss_exponent;
    let scene = &model.scene;
    let mut exponent = 0.0;
    if scene.ahead_density > 0.0 {
        exponent += scene.ahead_density * ray_exponent(sp, alpha, scene.dist_to_head)?;
    }
    if scene.behind_density > 0.0 {
        exponent += scene.behind_density * ray_exponent(sp, alpha, scene.dist_to_tail)?;
    }
    Ok(libm::exp(-exponent))
}

/// `ℙ(SINR > θ)` of the tagged link, using the Gamma-tail expansion of the
/// desired-link fading.
pub fn sinr_ccdf(theta: f64, model: &SinrModel) -> Result<f64> {
    if !(theta > 0.0) {
        return Err(Error::InvalidParameter {
            name: "theta",
            reason: "must be positive",
        });
    }
    let beta = model.radio.nakagami_shape;
    let base =
        model.eta() * theta * libm::pow(model.radio.link_distance, model.radio.pathloss_exponent)
            / model.radio.tx_power;
    let noise = model.noise_power();
    let mut total = 0.0;
    for k in 1..=beta {
        let s = k as f64 * base;
        let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
        total += sign
            * binomial(beta, k)
            * libm::exp(-s * noise)
            * laplace_nonplatoon(s, model)?
            * laplace_platoon(s, model)?;
    }
    Ok(total.clamp(0.0, 1.0))
}

/// Central-difference step used by [`sinr_pdf`].
pub fn pdf_step(theta: f64) -> f64 {
    (1e-4 * theta).max(1e-6).min(0.5 * theta)
}

/// SINR density `−d𝔽/dθ` by central differences of the CCDF.
pub fn sinr_pdf(theta: f64, model: &SinrModel) -> Result<f64> {
    let h = pdf_step(theta);
    let value = (sinr_ccdf(theta - h, model)? - sinr_ccdf(theta + h, model)?) / (2.0 * h);
    if value < DENSITY_FLOOR {
        return Err(Error::NegativeDensity { theta, value });
    }
    Ok(value.max(0.0))
}

/// Tabulated CCDF on an ascending SINR grid.
#[derive(Debug, Clone, PartialEq)]
pub struct CcdfTable {
    pub theta_grid: Vec<f64>,
    pub ccdf_values: Vec<f64>,
}

impl CcdfTable {
    pub fn build(model: &SinrModel, theta_grid: &[f64]) -> Result<Self> {
        let values = theta_grid
            .iter()
            .map(|&t| sinr_ccdf(t, model))
            .collect::<Result<Vec<_>>>()?;
        Self::from_values(theta_grid.to_vec(), values)
    }

    /// Wraps precomputed values, checking the table invariants.
    pub fn from_values(theta_grid: Vec<f64>, mut ccdf_values: Vec<f64>) -> Result<Self> {
        if theta_grid.len() != ccdf_values.len() {
            return Err(Error::InvalidParameter {
                name: "ccdf_values",
                reason: "length differs from theta_grid",
            });
        }
        if theta_grid.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidParameter {
                name: "theta_grid",
                reason: "must be strictly ascending",
            });
        }
        for v in &mut ccdf_values {
            *v = v.clamp(0.0, 1.0);
        }
        // Flatten round-off wiggles so the table is exactly monotone.
        for i in 1..ccdf_values.len() {
            if ccdf_values[i] > ccdf_values[i - 1] {
                if ccdf_values[i] - ccdf_values[i - 1] > 1e-9 {
                    return Err(Error::InvalidParameter {
                        name: "ccdf_values",
                        reason: "must be nonincreasing",
                    });
                }
                ccdf_values[i] = ccdf_values[i - 1];
            }
        }
        Ok(Self {
            theta_grid,
            ccdf_values,
        })
    }
}

/// `n` points spaced evenly in dB between `lo_db` and `hi_db`, as linear
/// SINR values.
pub fn db_grid(lo_db: f64, hi_db: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => alloc::vec![crate::model::db_to_linear(lo_db)],
        _ => (0..n)
            .map(|i| {
                let db = lo_db + (hi_db - lo_db) * i as f64 / (n - 1) as f64;
                crate::model::db_to_linear(db)
            })
            .collect(),
    }
}

/// First two moments of the service time `D` of one packet.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ServiceMoments {
    /// `𝔼(D)`, s.
    pub mean: f64,
    /// `Var(D)`, s².
    pub variance: f64,
    /// SINR mass outside the integration range, `ℙ(γ < θ_min) + ℙ(γ > θ_max)`.
    pub truncated_mass: f64,
    pub theta_min: f64,
    pub theta_max: f64,
}

impl ServiceMoments {
    /// `μ₂ = 1/𝔼(D)`, packets/s.
    pub fn service_rate(&self) -> f64 {
        1.0 / self.mean
    }

    /// `ρ₂ = λ_a 𝔼(D)`.
    pub fn utilization(&self, arrival_rate: f64) -> f64 {
        arrival_rate * self.mean
    }

    /// `𝔼(D²)`.
    pub fn second_moment(&self) -> f64 {
        self.variance + self.mean * self.mean
    }
}

/// Integration range `[θ_min, θ_max]` with at most [`TAIL_MASS`] left out
/// on either side.
pub fn truncation_range(model: &SinrModel) -> Result<(f64, f64, f64)> {
    let mut lo = 1.0;
    let mut lo_mass = 1.0 - sinr_ccdf(lo, model)?;
    while lo_mass >= TAIL_MASS {
        lo *= 0.5;
        if lo < 1e-30 {
            return Err(Error::Quadrature {
                estimate: lo_mass,
                error: lo,
            });
        }
        lo_mass = 1.0 - sinr_ccdf(lo, model)?;
    }
    let mut hi = 1.0;
    let mut hi_mass = sinr_ccdf(hi, model)?;
    while hi_mass >= TAIL_MASS {
        hi *= 2.0;
        if hi > 1e30 {
            return Err(Error::Quadrature {
                estimate: hi_mass,
                error: hi,
            });
        }
        hi_mass = sinr_ccdf(hi, model)?;
    }
    Ok((lo, hi, lo_mass.max(0.0) + hi_mass.max(0.0)))
}

/// `∫ D(θ)^power f(θ) dθ` over `[lo, hi]`, integrated by parts against the
/// CDF `F = 1 − F̄` so no numerical derivative of the CCDF is needed:
/// `[g F]_lo^hi − ∫ g'(θ) F(θ) dθ` with `g = D^power`, done in `ln θ`.
fn service_integral(model: &SinrModel, power: i32, lo: f64, hi: f64) -> Result<Estimate> {
    let p = power as f64;
    let g = |theta: f64| libm::pow(model.service_time(theta), p);
    let cdf = |theta: f64| sinr_ccdf(theta, model).map(|c| 1.0 - c);
    let boundary = g(hi) * cdf(hi)? - g(lo) * cdf(lo)?;
    let mut failure = None;
    let est = integrate(
        |t| {
            let theta = libm::exp(t);
            match cdf(theta) {
                // −g'(θ) = p·D^p / ((1 + θ) ln(1 + θ)).
                Ok(f) => p * g(theta) / ((1.0 + theta) * libm::log1p(theta)) * f * theta,
                Err(e) => {
                    failure.get_or_insert(e);
                    0.0
                }
            }
        },
        libm::log(lo),
        libm::log(hi),
        MOMENT_TOLERANCE,
    );
    if let Some(e) = failure {
        return Err(e);
    }
    let est = est?;
    Ok(Estimate {
        value: boundary + est.value,
        error: est.error,
    })
}

/// Mean and variance of the service time over the SINR distribution.
pub fn service_moments(model: &SinrModel) -> Result<ServiceMoments> {
    let (lo, hi, truncated_mass) = truncation_range(model)?;
    let mean = service_integral(model, 1, lo, hi)?.value;
    let second = service_integral(model, 2, lo, hi)?.value;
    Ok(ServiceMoments {
        mean,
        variance: (second - mean * mean).max(0.0),
        truncated_mass,
        theta_min: lo,
        theta_max: hi,
    })
}
