//! Mean end-to-end delay of the transmit-side tandem queue: an M/M/1
//! processor queue feeding an M/G/1 transceiver queue.

use crate::error::{Error, Result};
use crate::model::QueueSpec;
use crate::sinr::ServiceMoments;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DelayReport {
    /// Mean sojourn at the processor queue, s.
    pub t1_mean: f64,
    /// Mean sojourn at the transceiver queue, s.
    pub t2_mean: f64,
    /// `T̄ = T̄₁ + T̄₂`, s.
    pub end_to_end: f64,
    /// Transceiver utilization `λ_a 𝔼(D)`.
    pub rho2: f64,
}

/// `T̄₁ = λ_a/(μ₁(μ₁ − λ_a)) + 1/μ₁`.
pub fn processor_delay(q: &QueueSpec) -> Result<f64> {
    q.validate()?;
    let (la, mu) = (q.arrival_rate, q.processor_rate);
    Ok(la / (mu * (mu - la)) + 1.0 / mu)
}

/// Pollaczek–Khinchine mean sojourn `(ρ₂ + λ_a μ₂ Var(D))/(2(μ₂ − λ_a)) + 1/μ₂`
/// from raw service-time moments.
pub fn pollaczek_khinchine(arrival_rate: f64, mean: f64, variance: f64) -> Result<f64> {
    if !(arrival_rate > 0.0) || !(mean > 0.0) || !(variance >= 0.0) {
        return Err(Error::InvalidParameter {
            name: "service moments",
            reason: "need λ_a > 0, 𝔼(D) > 0, Var(D) ≥ 0",
        });
    }
    let rho = arrival_rate * mean;
    if rho >= 1.0 {
        return Err(Error::UnstableQueue { utilization: rho });
    }
    let mu = 1.0 / mean;
    Ok((rho + arrival_rate * mu * variance) / (2.0 * (mu - arrival_rate)) + mean)
}

pub fn transceiver_delay(q: &QueueSpec, m: &ServiceMoments) -> Result<f64> {
    pollaczek_khinchine(q.arrival_rate, m.mean, m.variance)
}

pub fn end_to_end_delay(q: &QueueSpec, m: &ServiceMoments) -> Result<DelayReport> {
    let t1_mean = processor_delay(q)?;
    let t2_mean = transceiver_delay(q, m)?;
    Ok(DelayReport {
        t1_mean,
        t2_mean,
        end_to_end: t1_mean + t2_mean,
        rho2: m.utilization(q.arrival_rate),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn moments(mean: f64, variance: f64) -> ServiceMoments {
        ServiceMoments {
            mean,
            variance,
            truncated_mass: 0.0,
            theta_min: 0.0,
            theta_max: f64::INFINITY,
        }
    }

    #[test]
    fn processor_delay_examples() {
        let q = QueueSpec::default();
        let t1 = processor_delay(&q).unwrap();
        assert_relative_eq!(t1, 10.0 / (1e4 * 9990.0) + 1e-4, max_relative = 1e-15);
        assert!((t1 - 1.0010e-4).abs() < 1e-8);
        let idle = QueueSpec {
            arrival_rate: 1e-9,
            ..q
        };
        assert_relative_eq!(processor_delay(&idle).unwrap(), 1e-4, max_relative = 1e-9);
        let saturated = QueueSpec {
            arrival_rate: 10.0,
            processor_rate: 10.0,
        };
        assert!(matches!(
            processor_delay(&saturated),
            Err(Error::UnstableQueue { .. })
        ));
    }

    #[test]
    fn transceiver_delay_examples() {
        let q = QueueSpec::default();
        let t2 = transceiver_delay(&q, &moments(1e-3, 1e-6)).unwrap();
        assert_relative_eq!(t2, 0.02 / (2.0 * 990.0) + 1e-3, max_relative = 1e-14);
        assert!((t2 - 1.0101e-3).abs() < 1e-7);
        let deterministic = pollaczek_khinchine(1e-9, 2e-3, 0.0).unwrap();
        assert_relative_eq!(deterministic, 2e-3, max_relative = 1e-9);
        match transceiver_delay(&q, &moments(0.1, 0.0)) {
            Err(Error::UnstableQueue { utilization }) => assert_relative_eq!(utilization, 1.0),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn end_to_end_is_sum() {
        let q = QueueSpec::default();
        let m = moments(1e-3, 1e-6);
        let r = end_to_end_delay(&q, &m).unwrap();
        assert_eq!(
            r.end_to_end,
            processor_delay(&q).unwrap() + transceiver_delay(&q, &m).unwrap()
        );
        assert_relative_eq!(r.rho2, 0.01, max_relative = 1e-15);
    }

    proptest! {
        #[test]
        fn exponential_service_reduces_to_mm1(la in 0.01..100.0f64, ratio in 1.01..100.0f64) {
            let mu = la * ratio;
            let t = pollaczek_khinchine(la, 1.0 / mu, 1.0 / (mu * mu)).unwrap();
            let mm1 = 1.0 / (mu - la);
            prop_assert!((t - mm1).abs() <= 1e-12 * mm1);
        }

        #[test]
        fn sojourn_nondecreasing_in_variance_and_load(
            la in 0.1..50.0f64, mean in 1e-4..1e-2f64, v1 in 0.0..1e-4f64, v2 in 0.0..1e-4f64, bump in 1.0..1.5f64,
        ) {
            prop_assume!(la * bump * mean < 1.0);
            let (lo, hi) = if v1 <= v2 { (v1, v2) } else { (v2, v1) };
            prop_assert!(pollaczek_khinchine(la, mean, lo).unwrap() <= pollaczek_khinchine(la, mean, hi).unwrap());
            prop_assert!(pollaczek_khinchine(la, mean, lo).unwrap() <= pollaczek_khinchine(la * bump, mean, lo).unwrap());
        }
    }
}
