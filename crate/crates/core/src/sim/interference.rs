use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, Exp1, Gamma, Poisson};

use super::rng;
use crate::error::{Error, Result};
use crate::sinr::{sinr_ccdf, truncation_range, SinrModel};

/// Law of the desired-link power gain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DesiredGain {
    /// Unit-mean Gamma with shape `β` (Nakagami-β amplitude).
    #[default]
    Gamma,
    /// Largest of `β` exponentials with rate `η`: CDF `(1 − e^{−ηx})^β`, the
    /// law the closed-form CCDF is exact for.
    MaxExponential,
}

/// One Monte Carlo drop.
#[derive(Debug, Clone, PartialEq)]
pub struct SinrDraw {
    pub sinr: f64,
    /// Aggregate interference, W.
    pub interference: f64,
    /// Interferers per non-platoon lane, then ahead of and behind the platoon.
    pub counts: Vec<usize>,
}

/// Samples the interference field around the tagged receiver, which sits at
/// the origin of the platoon lane. Interferers live on
/// `[−segment/2, segment/2]`.
#[derive(Debug, Clone)]
pub struct SinrSampler {
    lanes: Vec<(Poisson<f64>, f64)>,
    ahead: Option<(Poisson<f64>, f64)>,
    behind: Option<(Poisson<f64>, f64)>,
    half_length: f64,
    power: f64,
    alpha: f64,
    link_gain: f64,
    noise: f64,
    shape: u32,
    eta: f64,
    desired: DesiredGain,
    gamma: Gamma<f64>,
}

fn poisson(mean: f64) -> Option<Poisson<f64>> {
    if mean > 0.0 {
        Poisson::new(mean).ok()
    } else {
        None
    }
}

impl SinrSampler {
    pub fn new(model: &SinrModel, desired: DesiredGain) -> Result<Self> {
        let scene = &model.scene;
        scene.validate()?;
        let half = 0.5 * scene.segment_length;
        let lanes = scene
            .nonplatoon
            .iter()
            .filter_map(|l| {
                Some((
                    poisson(l.density * scene.segment_length)?,
                    scene.lateral_offset(l.lane),
                ))
            })
            .collect();
        let ray = |density: f64, start: f64| {
            let span = half - start;
            if span > 0.0 {
                poisson(density * span).map(|p| (p, start))
            } else {
                None
            }
        };
        let beta = model.radio.nakagami_shape as f64;
        Ok(Self {
            lanes,
            ahead: ray(scene.ahead_density, scene.dist_to_head),
            behind: ray(scene.behind_density, scene.dist_to_tail),
            half_length: half,
            power: model.radio.tx_power,
            alpha: model.radio.pathloss_exponent,
            link_gain: model.radio.tx_power
                * libm::pow(model.radio.link_distance, -model.radio.pathloss_exponent),
            noise: model.noise_power(),
            shape: model.radio.nakagami_shape,
            eta: model.eta(),
            desired,
            gamma: Gamma::new(beta, 1.0 / beta).map_err(|_| Error::InvalidParameter {
                name: "nakagami_shape",
                reason: "must be at least 1",
            })?,
        })
    }

    fn desired_gain<R: Rng>(&self, r: &mut R) -> f64 {
        match self.desired {
            DesiredGain::Gamma => self.gamma.sample(r),
            DesiredGain::MaxExponential => (0..self.shape)
                .map(|_| {
                    let e: f64 = Exp1.sample(r);
                    e / self.eta
                })
                .fold(0.0, f64::max),
        }
    }

    fn interference<R: Rng>(&self, r: &mut R, mut counts: Option<&mut Vec<usize>>) -> f64 {
        let mut total = 0.0;
        let mut tally = |n: usize| {
            if let Some(c) = counts.as_deref_mut() {
                c.push(n);
            }
        };
        for (count, offset) in &self.lanes {
            let n = count.sample(r) as usize;
            tally(n);
            for _ in 0..n {
                let x = r.random_range(-self.half_length..self.half_length);
                let g: f64 = Exp1.sample(r);
                total += g * libm::pow(x * x + offset * offset, -0.5 * self.alpha);
            }
        }
        for ray in [&self.ahead, &self.behind] {
            match ray {
                Some((count, start)) => {
                    let n = count.sample(r) as usize;
                    tally(n);
                    for _ in 0..n {
                        let d = r.random_range(*start..self.half_length);
                        let g: f64 = Exp1.sample(r);
                        total += g * libm::pow(d, -self.alpha);
                    }
                }
                None => tally(0),
            }
        }
        self.power * total
    }

    pub fn draw_sinr<R: Rng>(&self, r: &mut R) -> f64 {
        let i = self.interference(r, None);
        self.desired_gain(r) * self.link_gain / (self.noise + i)
    }

    pub fn draw<R: Rng>(&self, r: &mut R) -> SinrDraw {
        let mut counts = Vec::with_capacity(self.lanes.len() + 2);
        let interference = self.interference(r, Some(&mut counts));
        SinrDraw {
            sinr: self.desired_gain(r) * self.link_gain / (self.noise + interference),
            interference,
            counts,
        }
    }
}

/// Monte Carlo SINR drops in draw order, with a sorted copy for CCDF
/// queries.
#[derive(Debug, Clone, PartialEq)]
pub struct SinrSamples {
    pub samples: Vec<f64>,
    sorted: Vec<f64>,
}

impl SinrSamples {
    pub fn new(samples: Vec<f64>) -> Self {
        let mut sorted = samples.clone();
        sorted.sort_by(f64::total_cmp);
        Self { samples, sorted }
    }

    /// Fraction of drops with SINR above `theta`.
    pub fn ccdf(&self, theta: f64) -> f64 {
        let at_most = self.sorted.partition_point(|&x| x <= theta);
        (self.sorted.len() - at_most) as f64 / self.sorted.len() as f64
    }

    /// `max |empirical − reference|` over `(θ, reference CCDF)` pairs.
    pub fn max_gap(&self, reference: &[(f64, f64)]) -> f64 {
        reference
            .iter()
            .map(|&(t, p)| libm::fabs(self.ccdf(t) - p))
            .fold(0.0, f64::max)
    }
}

/// `n` independent drops for the scene, reproducible from `seed`.
pub fn sample_sinr(
    model: &SinrModel,
    n: usize,
    seed: u64,
    desired: DesiredGain,
) -> Result<SinrSamples> {
    if n == 0 {
        return Err(Error::InvalidParameter {
            name: "draws",
            reason: "need at least one",
        });
    }
    let sampler = SinrSampler::new(model, desired)?;
    let mut r = rng(seed);
    Ok(SinrSamples::new(
        (0..n).map(|_| sampler.draw_sinr(&mut r)).collect(),
    ))
}

/// Inverse-CDF sampler for the closed-form SINR law, tabulated on a
/// logarithmic grid over the range that carries all but a negligible mass.
#[derive(Debug, Clone, PartialEq)]
pub struct TabulatedSinr {
    log_theta: Vec<f64>,
    /// CCDF values, nonincreasing.
    ccdf: Vec<f64>,
}

impl TabulatedSinr {
    pub fn from_model(model: &SinrModel, points: usize) -> Result<Self> {
        let (lo, hi, _) = truncation_range(model)?;
        let points = points.max(2);
        let (a, b) = (libm::log(lo), libm::log(hi));
        let log_theta: Vec<f64> = (0..points)
            .map(|i| a + (b - a) * i as f64 / (points - 1) as f64)
            .collect();
        let mut ccdf = log_theta
            .iter()
            .map(|&t| sinr_ccdf(libm::exp(t), model))
            .collect::<Result<Vec<_>>>()?;
        for i in 1..ccdf.len() {
            ccdf[i] = ccdf[i].min(ccdf[i - 1]);
        }
        Ok(Self { log_theta, ccdf })
    }

    /// SINR with `ℙ(γ > θ) = u`, interpolating linearly in `ln θ`.
    pub fn quantile(&self, u: f64) -> f64 {
        let n = self.ccdf.len();
        // First index whose CCDF drops to u or below.
        let k = self.ccdf.partition_point(|&p| p > u);
        if k == 0 {
            return libm::exp(self.log_theta[0]);
        }
        if k >= n {
            return libm::exp(self.log_theta[n - 1]);
        }
        let (p0, p1) = (self.ccdf[k - 1], self.ccdf[k]);
        let w = if p0 > p1 { (p0 - u) / (p0 - p1) } else { 0.0 };
        libm::exp(self.log_theta[k - 1] + w * (self.log_theta[k] - self.log_theta[k - 1]))
    }

    pub fn draw<R: Rng>(&self, r: &mut R) -> f64 {
        self.quantile(r.random::<f64>())
    }
}
