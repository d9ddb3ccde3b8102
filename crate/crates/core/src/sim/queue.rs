use alloc::vec::Vec;

use rand_distr::{Distribution, Exp};

use super::interference::{DesiredGain, SinrSampler, TabulatedSinr};
use super::{rng, SimRng};
use crate::error::{Error, Result};
use crate::model::QueueSpec;
use crate::sinr::SinrModel;

/// Transceiver service-time law.
#[derive(Debug, Clone)]
#[allow(clippy::large_enum_variant)]
pub enum ServiceSampler {
    Exponential {
        rate: f64,
    },
    Deterministic {
        time: f64,
    },
    /// `D = SM/(ω log₂(1 + γ))` with `γ` drawn from the closed-form law.
    Analytic {
        table: TabulatedSinr,
        model: SinrModel,
    },
    /// Same map with `γ` drawn from a fresh interference field each packet.
    MonteCarlo {
        sampler: SinrSampler,
        model: SinrModel,
    },
}

impl ServiceSampler {
    pub fn analytic(model: &SinrModel, points: usize) -> Result<Self> {
        Ok(ServiceSampler::Analytic {
            table: TabulatedSinr::from_model(model, points)?,
            model: model.clone(),
        })
    }

    pub fn monte_carlo(model: &SinrModel, desired: DesiredGain) -> Result<Self> {
        Ok(ServiceSampler::MonteCarlo {
            sampler: SinrSampler::new(model, desired)?,
            model: model.clone(),
        })
    }

    fn validate(&self) -> Result<()> {
        let ok = match self {
            ServiceSampler::Exponential { rate } => *rate > 0.0 && rate.is_finite(),
            ServiceSampler::Deterministic { time } => *time > 0.0 && time.is_finite(),
            _ => true,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter {
                name: "service sampler",
                reason: "rate or time must be positive and finite",
            })
        }
    }

    pub fn draw(&self, r: &mut SimRng) -> f64 {
        match self {
            ServiceSampler::Exponential { rate } => {
                let e: f64 = rand_distr::Exp1.sample(r);
                e / rate
            }
            ServiceSampler::Deterministic { time } => *time,
            ServiceSampler::Analytic { table, model } => model.service_time(table.draw(r)),
            ServiceSampler::MonteCarlo { sampler, model } => {
                model.service_time(sampler.draw_sinr(r))
            }
        }
    }
}

/// Per-packet output of the tandem simulation, warm-up excluded.
#[derive(Debug, Clone, PartialEq)]
pub struct TandemTrace {
    /// End-to-end sojourn `T₁ + T₂`, s.
    pub sojourn: Vec<f64>,
    /// Sojourn in the transceiver queue only, s.
    pub q2_sojourn: Vec<f64>,
    /// Gaps between successive departures from the processor queue, s.
    pub q1_interdeparture: Vec<f64>,
    /// Service time drawn for each packet at the transceiver, s.
    pub service: Vec<f64>,
    /// Offered transceiver load measured over the run reached 1.
    pub flagged_unstable: bool,
}

/// Two FIFO single-server queues in series fed by Poisson arrivals, run by
/// the Lindley recursion. The first `warmup` packets are dropped from the
/// trace.
pub fn simulate_tandem_queue(
    q: &QueueSpec,
    service: &ServiceSampler,
    packets: usize,
    warmup: usize,
    seed: u64,
) -> Result<TandemTrace> {
    q.validate()?;
    service.validate()?;
    if packets == 0 {
        return Err(Error::InvalidParameter {
            name: "packets",
            reason: "need at least one",
        });
    }
    let arrivals = Exp::new(q.arrival_rate).map_err(|_| Error::InvalidParameter {
        name: "arrival_rate",
        reason: "must be positive",
    })?;
    let processing = Exp::new(q.processor_rate).map_err(|_| Error::InvalidParameter {
        name: "processor_rate",
        reason: "must be positive",
    })?;
    let mut r = rng(seed);
    let total = packets + warmup;
    let mut trace = TandemTrace {
        sojourn: Vec::with_capacity(packets),
        q2_sojourn: Vec::with_capacity(packets),
        q1_interdeparture: Vec::with_capacity(packets),
        service: Vec::with_capacity(packets),
        flagged_unstable: false,
    };
    let (mut now, mut dep1, mut dep2) = (0.0f64, 0.0f64, 0.0f64);
    let mut busy2 = 0.0;
    let mut first_arrival = None;
    for n in 0..total {
        now += arrivals.sample(&mut r);
        let s1 = processing.sample(&mut r);
        let s2 = service.draw(&mut r);
        let prev_dep1 = dep1;
        dep1 = now.max(dep1) + s1;
        dep2 = dep1.max(dep2) + s2;
        if n >= warmup {
            if first_arrival.is_none() {
                first_arrival = Some(now);
            } else {
                trace.q1_interdeparture.push(dep1 - prev_dep1);
            }
            busy2 += s2;
            trace.sojourn.push(dep2 - now);
            trace.q2_sojourn.push(dep2 - dep1);
            trace.service.push(s2);
        }
    }
    let span = now - first_arrival.unwrap_or(0.0);
    trace.flagged_unstable = span > 0.0 && busy2 >= span;
    Ok(trace)
}

/// Fraction of delays at or below `tau` with a 95% normal-approximation
/// half-width.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmpiricalReliability {
    pub value: f64,
    pub half_width: f64,
    pub n: usize,
}

pub fn empirical_reliability(samples: &[f64], tau: f64) -> EmpiricalReliability {
    let n = samples.len();
    if n == 0 {
        return EmpiricalReliability {
            value: f64::NAN,
            half_width: f64::NAN,
            n,
        };
    }
    let p = samples.iter().filter(|&&t| t <= tau).count() as f64 / n as f64;
    EmpiricalReliability {
        value: p,
        half_width: 1.96 * libm::sqrt(p * (1.0 - p) / n as f64),
        n,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::delay::{pollaczek_khinchine, processor_delay};
    use crate::sim::stats::{ks_critical, ks_statistic, mean};

    fn spec(la: f64, mu: f64) -> QueueSpec {
        QueueSpec {
            arrival_rate: la,
            processor_rate: mu,
        }
    }

    #[test]
    fn mm1_then_mm1_matches_product_form() {
        let q = spec(50.0, 100.0);
        let service = ServiceSampler::Exponential { rate: 80.0 };
        let trace = simulate_tandem_queue(&q, &service, 400_000, 10_000, 1).unwrap();
        let expected = processor_delay(&q).unwrap() + 1.0 / (80.0 - 50.0);
        let got = mean(&trace.sojourn);
        assert!(
            (got - expected).abs() < 0.02 * expected,
            "{got} vs {expected}"
        );
        assert!(!trace.flagged_unstable);
    }

    #[test]
    fn deterministic_service_matches_pk() {
        let q = spec(40.0, 1e4);
        let service = ServiceSampler::Deterministic { time: 0.015 };
        let trace = simulate_tandem_queue(&q, &service, 300_000, 5_000, 2).unwrap();
        let expected = pollaczek_khinchine(40.0, 0.015, 0.0).unwrap();
        let got = mean(&trace.q2_sojourn);
        assert!(
            (got - expected).abs() < 0.02 * expected,
            "{got} vs {expected}"
        );
    }

    #[test]
    fn processor_departures_are_poisson() {
        let q = spec(30.0, 45.0);
        let service = ServiceSampler::Deterministic { time: 1e-3 };
        let trace = simulate_tandem_queue(&q, &service, 20_000, 5_000, 3).unwrap();
        let gaps: Vec<f64> = trace
            .q1_interdeparture
            .iter()
            .step_by(10)
            .copied()
            .collect();
        let d = ks_statistic(&gaps, |x| 1.0 - (-30.0 * x).exp());
        assert!(d < ks_critical(gaps.len(), 0.01), "D = {d}");
    }

    #[test]
    fn overload_is_flagged() {
        let q = spec(100.0, 1e4);
        let service = ServiceSampler::Deterministic { time: 0.011 };
        let trace = simulate_tandem_queue(&q, &service, 20_000, 0, 4).unwrap();
        assert!(trace.flagged_unstable);
    }

    #[test]
    fn seeded_runs_repeat() {
        let q = spec(10.0, 1e4);
        let service = ServiceSampler::Exponential { rate: 200.0 };
        let a = simulate_tandem_queue(&q, &service, 1000, 10, 7).unwrap();
        assert_eq!(a, simulate_tandem_queue(&q, &service, 1000, 10, 7).unwrap());
    }

    #[test]
    fn empirical_reliability_counts_inclusive() {
        let r = empirical_reliability(&[0.1, 0.2, 0.3, 0.4], 0.2);
        assert_eq!(r.value, 0.5);
        assert!((r.half_width - 1.96 * 0.25f64.sqrt() / 2.0).abs() < 1e-15);
        assert!(empirical_reliability(&[], 1.0).value.is_nan());
    }
}
