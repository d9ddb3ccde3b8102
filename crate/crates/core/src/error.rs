use core::fmt;

/// Which gain premise a rejected control gain pair failed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GainCondition {
    /// `a² + b² + 2ab − 4a ≥ 0`, required for a real plant-stability spectrum.
    Plant,
    /// `a + 2b − 2 ≥ 0`, the string-stability premise.
    String,
    /// `C² − 2A − B² ≥ 0`, positivity of the string-stability threshold.
    StringThreshold,
}

impl fmt::Display for GainCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GainCondition::Plant => f.write_str("a²+b²+2ab−4a ≥ 0"),
            GainCondition::String => f.write_str("a+2b−2 ≥ 0"),
            GainCondition::StringThreshold => f.write_str("C²−2A−B² ≥ 0"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid {name}: {reason}")]
    InvalidParameter {
        name: &'static str,
        reason: &'static str,
    },

    #[error("control gains violate {condition} (value {value:.6})")]
    InfeasibleGains {
        condition: GainCondition,
        value: f64,
    },

    #[error("error-dynamics spectrum is not real (imaginary part {imaginary:.3e})")]
    NonRealSpectrum { imaginary: f64 },

    #[error("quadrature did not converge: estimate {estimate:.6e}, error {error:.3e}")]
    Quadrature { estimate: f64, error: f64 },

    #[error("negative SINR density {value:.3e} at theta = {theta:.6e}")]
    NegativeDensity { theta: f64, value: f64 },

    #[error("queue is unstable: utilization {utilization:.6}")]
    UnstableQueue { utilization: f64 },

    #[error("mean delay {mean_delay:.6e} s is not below the requirement {tau:.6e} s")]
    PremiseViolated { mean_delay: f64, tau: f64 },

    #[error("collision: follower {follower} headway reached {headway:.4} m at t = {time:.4} s")]
    Collision {
        time: f64,
        follower: usize,
        headway: f64,
    },

    #[error("no gain pair in the box satisfies the stability conditions")]
    InfeasibleBox(crate::optimize::InfeasibilityCertificate),

    #[error("optimized mean delay {mean_delay:.6e} s exceeds tau* = {tau_star:.6e} s")]
    ProvisoFailed { mean_delay: f64, tau_star: f64 },
}

pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn ensure(ok: bool, name: &'static str, reason: &'static str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::InvalidParameter { name, reason })
    }
}
