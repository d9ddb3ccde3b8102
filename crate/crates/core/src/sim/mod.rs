//! Simulation oracles: the delayed platoon dynamics, Monte Carlo sampling
//! of the interference field, and a discrete-event model of the tandem
//! queue.

mod interference;
mod platoon;
mod queue;
pub mod stats;

pub use interference::{
    sample_sinr, DesiredGain, SinrDraw, SinrSampler, SinrSamples, TabulatedSinr,
};
pub use platoon::{simulate_platoon, DelayModel, LeaderProfile, SimScenario, SimTrace};
pub use queue::{
    empirical_reliability, simulate_tandem_queue, EmpiricalReliability, ServiceSampler, TandemTrace,
};

/// Generator used by every simulator; seeded runs are bit-reproducible.
pub type SimRng = rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> SimRng {
    use rand::SeedableRng;
    SimRng::seed_from_u64(seed)
}
