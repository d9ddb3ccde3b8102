//! Control-aware reliability: the probability that the end-to-end wireless
//! delay stays below the delay the controller tolerates.

use crate::delay::{end_to_end_delay, DelayReport};
use crate::error::{Error, Result};
use crate::model::{HighwayScene, PlatoonSpec, QueueSpec, RadioSpec};
use crate::sinr::{service_moments, sinr_ccdf, ServiceMoments, SinrModel};
use crate::stability::{stability_report, StabilityReport, DEFAULT_RAZUMIKHIN_K};

/// Which delay threshold the link has to meet.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StabilityTarget {
    /// `τ₁` only.
    Plant,
    /// `τ₂` only.
    String,
    /// `min(τ₁, τ₂)`.
    #[default]
    Both,
}

impl StabilityTarget {
    pub fn threshold(self, report: &StabilityReport) -> Option<f64> {
        match self {
            StabilityTarget::Plant => report.tau1,
            StabilityTarget::String => report.tau2,
            StabilityTarget::Both => report.tau_min,
        }
    }

    /// The error explaining a missing threshold, if any.
    fn missing(self, report: &StabilityReport) -> Error {
        let first = match self {
            StabilityTarget::Plant => report.tau1_error.clone(),
            StabilityTarget::String => report.tau2_error.clone(),
            StabilityTarget::Both => report
                .tau1_error
                .clone()
                .or_else(|| report.tau2_error.clone()),
        };
        first.unwrap_or(Error::InvalidParameter {
            name: "stability threshold",
            reason: "unavailable",
        })
    }
}

/// The two terms of the delay-tail lower bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LowerBound {
    /// `1 − T̄/τ`.
    pub markov_term: f64,
    /// `1 − exp(T̄ − τ ln(τ/T̄))`, clamped to `[0, 1]`.
    pub chernoff_term: f64,
}

impl LowerBound {
    pub fn value(&self) -> f64 {
        self.markov_term.max(self.chernoff_term)
    }
}

/// Lower bound on `ℙ(T ≤ τ)` given only the mean delay `T̄ < τ`.
pub fn reliability_lower_bound(mean_delay: f64, tau: f64) -> Result<LowerBound> {
    if !(mean_delay > 0.0) || !(tau > 0.0) {
        return Err(Error::InvalidParameter {
            name: "mean_delay/tau",
            reason: "must be positive",
        });
    }
    if mean_delay >= tau {
        return Err(Error::PremiseViolated { mean_delay, tau });
    }
    let chernoff = 1.0 - libm::exp(mean_delay - tau * libm::log(tau / mean_delay));
    Ok(LowerBound {
        markov_term: 1.0 - mean_delay / tau,
        chernoff_term: chernoff.clamp(0.0, 1.0),
    })
}

/// Reliability when transmission time dominates: `𝔽(2^{SM/(ωτ)} − 1)`.
pub fn reliability_approx(model: &SinrModel, tau: f64) -> Result<f64> {
    if !(tau > 0.0) {
        return Err(Error::InvalidParameter {
            name: "tau",
            reason: "must be positive",
        });
    }
    let theta = model.sinr_for_service_time(tau);
    if !theta.is_finite() {
        return Ok(0.0);
    }
    sinr_ccdf(theta, model)
}

/// Everything needed to go from control gains and radio settings to a
/// reliability figure.
#[derive(Debug, Clone, PartialEq)]
pub struct Pipeline {
    pub spec: PlatoonSpec,
    pub scene: HighwayScene,
    pub radio: RadioSpec,
    pub queue: QueueSpec,
    pub razumikhin_k: f64,
}

impl Pipeline {
    pub fn new(spec: PlatoonSpec, scene: HighwayScene, radio: RadioSpec, queue: QueueSpec) -> Self {
        Self {
            spec,
            scene,
            radio,
            queue,
            razumikhin_k: DEFAULT_RAZUMIKHIN_K,
        }
    }

    /// SINR model of the tagged link. The link spans one target spacing and
    /// the receiver sits at the middle of the platoon, so both follow the
    /// current `spec`.
    pub fn sinr_model(&self) -> Result<SinrModel> {
        let mut scene = self.scene.clone();
        scene.place_at_midpoint(&self.spec);
        let radio = RadioSpec {
            link_distance: self.spec.target_spacing,
            ..self.radio.clone()
        };
        SinrModel::new(scene, radio, self.spec.followers)
    }

    pub fn stability(&self) -> StabilityReport {
        stability_report(&self.spec, self.razumikhin_k)
    }

    /// Service moments and delay, the gain-independent half of the pipeline.
    pub fn delay(&self) -> Result<(SinrModel, ServiceMoments, DelayReport)> {
        self.queue.validate()?;
        let model = self.sinr_model()?;
        let moments = service_moments(&model)?;
        let delay = end_to_end_delay(&self.queue, &moments)?;
        Ok((model, moments, delay))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReliabilityReport {
    pub which_stability: StabilityTarget,
    pub tau_used: f64,
    pub delay: DelayReport,
    /// Absent when `T̄ ≥ τ`; see `bound_error`.
    pub lower_bound: Option<LowerBound>,
    pub bound_error: Option<Error>,
    pub approx: f64,
}

/// Combines precomputed pieces into a report for one stability target.
pub fn assemble_report(
    model: &SinrModel,
    stability: &StabilityReport,
    delay: &DelayReport,
    target: StabilityTarget,
) -> Result<ReliabilityReport> {
    let tau = target
        .threshold(stability)
        .ok_or_else(|| target.missing(stability))?;
    let (lower_bound, bound_error) = match reliability_lower_bound(delay.end_to_end, tau) {
        Ok(b) => (Some(b), None),
        Err(e) => (None, Some(e)),
    };
    Ok(ReliabilityReport {
        which_stability: target,
        tau_used: tau,
        delay: *delay,
        lower_bound,
        bound_error,
        approx: reliability_approx(model, tau)?,
    })
}

pub fn reliability_report(ctx: &Pipeline, target: StabilityTarget) -> Result<ReliabilityReport> {
    let stability = ctx.stability();
    // Fail on the gains before paying for the SINR integrals.
    target
        .threshold(&stability)
        .ok_or_else(|| target.missing(&stability))?;
    let (model, _, delay) = ctx.delay()?;
    assemble_report(&model, &stability, &delay, target)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::DensityPreset;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn pipeline(spacing: f64) -> Pipeline {
        let spec = PlatoonSpec {
            target_spacing: spacing,
            ..PlatoonSpec::default()
        };
        let scene = HighwayScene::four_lane(DensityPreset::Small, &spec);
        Pipeline::new(spec, scene, RadioSpec::default(), QueueSpec::default())
    }

    #[test]
    fn bound_examples() {
        let b = reliability_lower_bound(0.5, 1.0).unwrap();
        assert_relative_eq!(b.markov_term, 0.5);
        assert_relative_eq!(
            b.chernoff_term,
            1.0 - (0.5f64 - 2f64.ln()).exp(),
            epsilon = 1e-15
        );
        assert!((b.chernoff_term - 0.1756).abs() < 1e-4);
        assert_eq!(b.value(), 0.5);

        let b = reliability_lower_bound(0.01, 1.0).unwrap();
        assert_relative_eq!(b.markov_term, 0.99, epsilon = 1e-15);
        assert!((b.chernoff_term - 0.9899).abs() < 1e-4);
        assert_eq!(b.value(), b.markov_term);

        let b = reliability_lower_bound(1e-12, 1.0).unwrap();
        assert!(b.value() > 1.0 - 1e-11);

        assert!(matches!(
            reliability_lower_bound(1.0, 1.0),
            Err(Error::PremiseViolated { .. })
        ));
    }

    #[test]
    fn chernoff_clamped_near_threshold() {
        let b = reliability_lower_bound(0.99, 1.0).unwrap();
        assert!((0.0..=1.0).contains(&b.chernoff_term));
        assert_eq!(b.value(), b.markov_term);
    }

    #[test]
    fn approx_is_ccdf_at_required_sinr() {
        let model = pipeline(10.0).sinr_model().unwrap();
        for tau in [0.0139, 0.5, 2e-4] {
            let theta = (2f64).powf(3200.0 * 6.0 / (40e6 * tau)) - 1.0;
            let expected = sinr_ccdf(theta, &model).unwrap();
            assert_relative_eq!(
                reliability_approx(&model, tau).unwrap(),
                expected,
                max_relative = 1e-12
            );
        }
        assert_eq!(reliability_approx(&model, 1e-9).unwrap(), 0.0);
    }

    #[test]
    fn approx_monotone_in_inputs() {
        let base = pipeline(15.0).sinr_model().unwrap();
        let tau = 0.0139;
        let p = reliability_approx(&base, tau).unwrap();
        let mut bigger = base.clone();
        bigger.radio.packet_size *= 1.5;
        let mut wider = base.clone();
        wider.radio.total_bandwidth *= 1.5;
        let mut dense = base.clone();
        dense.scene.scale_densities(1.5);
        let mut far = base.clone();
        far.radio.link_distance = 18.0;
        let mut crowd = base.clone();
        crowd.followers = 8;
        assert!(reliability_approx(&bigger, tau).unwrap() <= p);
        assert!(reliability_approx(&wider, tau).unwrap() >= p);
        assert!(reliability_approx(&dense, tau).unwrap() <= p);
        assert!(reliability_approx(&far, tau).unwrap() <= p);
        assert!(reliability_approx(&crowd, tau).unwrap() <= p);
        assert!(reliability_approx(&base, 2.0 * tau).unwrap() >= p);
    }

    #[test]
    fn baseline_report_uses_binding_threshold() {
        let ctx = pipeline(20.0);
        let both = reliability_report(&ctx, StabilityTarget::Both).unwrap();
        assert!((both.tau_used - 0.0139).abs() < 5e-4);
        let string = reliability_report(&ctx, StabilityTarget::String).unwrap();
        assert_relative_eq!(string.tau_used, 0.5, epsilon = 1e-15);
        assert_eq!(both.delay, string.delay);
        assert!(string.approx >= both.approx);
    }

    #[test]
    fn violated_premise_still_reports_approx() {
        let mut ctx = pipeline(20.0);
        ctx.radio.packet_size = 1e6;
        ctx.queue.arrival_rate = 0.5;
        let r = reliability_report(&ctx, StabilityTarget::Both).unwrap();
        assert!(r.lower_bound.is_none());
        assert!(matches!(r.bound_error, Some(Error::PremiseViolated { .. })));
        assert!((0.0..=1.0).contains(&r.approx));
    }

    #[test]
    fn infeasible_gains_fail_before_integration() {
        let mut ctx = pipeline(20.0);
        ctx.spec = ctx.spec.with_gains(1.0, 0.0);
        assert!(matches!(
            reliability_report(&ctx, StabilityTarget::Plant),
            Err(Error::InfeasibleGains { .. })
        ));
    }

    proptest! {
        #[test]
        fn bound_monotone(t1 in 1e-4..0.5f64, t2 in 1e-4..0.5f64, tau in 0.5..2.0f64, tau2 in 0.5..2.0f64) {
            let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
            let a = reliability_lower_bound(lo, tau).unwrap();
            let b = reliability_lower_bound(hi, tau).unwrap();
            prop_assert!(a.markov_term >= b.markov_term);
            prop_assert!(a.chernoff_term >= b.chernoff_term - 1e-15);
            let (tlo, thi) = if tau <= tau2 { (tau, tau2) } else { (tau2, tau) };
            let c = reliability_lower_bound(lo, tlo).unwrap();
            let d = reliability_lower_bound(lo, thi).unwrap();
            prop_assert!(c.value() <= d.value() + 1e-15);
            prop_assert!((0.0..=1.0).contains(&c.value()));
        }
    }
}
