//! Domain types shared across the analysis, the optimal-velocity control law
//! and the tracking-error definitions.
//!
//! All quantities are SI: meters, seconds, watts, hertz, bits.

use alloc::vec::Vec;

use crate::error::{ensure, Error, Result};

/// Converts a power level in dBm to watts.
pub fn dbm_to_watts(dbm: f64) -> f64 {
    libm::pow(10.0, dbm / 10.0) * 1e-3
}

/// Converts a power ratio in dB to linear scale.
pub fn db_to_linear(db: f64) -> f64 {
    libm::pow(10.0, db / 10.0)
}

/// Platoon geometry and control parameters. Vehicles are identical, so a
/// single gain pair `(a, b)` applies to every follower.
#[derive(Debug, Clone, PartialEq)]
pub struct PlatoonSpec {
    /// Number of followers `M` (the leader is not counted).
    pub followers: usize,
    /// Target spacing `L̂` between consecutive vehicles, m.
    pub target_spacing: f64,
    /// Target velocity `v̂`, m/s.
    pub target_velocity: f64,
    /// Gain on the headway-velocity mismatch, 1/s.
    pub gain_a: f64,
    /// Gain on the velocity difference to the predecessor, 1/s.
    pub gain_b: f64,
    /// Free-flow speed, m/s.
    pub v_max: f64,
    /// Headway above which vehicles drive at `v_max`, m.
    pub d_sparse: f64,
    /// Headway below which vehicles stop, m.
    pub d_dense: f64,
}

impl Default for PlatoonSpec {
    fn default() -> Self {
        Self {
            followers: 6,
            target_spacing: 20.0,
            target_velocity: 15.0,
            gain_a: 2.0,
            gain_b: 2.0,
            v_max: 30.0,
            d_sparse: 35.0,
            d_dense: 5.0,
        }
    }
}

impl PlatoonSpec {
    pub fn validate(&self) -> Result<()> {
        ensure(
            self.followers >= 1,
            "followers",
            "need at least one follower",
        )?;
        ensure(
            self.d_dense > 0.0 && self.d_dense < self.d_sparse,
            "d_dense/d_sparse",
            "need 0 < d_dense < d_sparse",
        )?;
        ensure(
            self.target_velocity > 0.0 && self.target_velocity <= self.v_max,
            "target_velocity",
            "need 0 < v̂ ≤ v_max",
        )?;
        ensure(self.gain_a > 0.0, "gain_a", "must be positive")?;
        ensure(self.gain_b >= 0.0, "gain_b", "must be nonnegative")?;
        ensure(
            self.target_spacing > 0.0,
            "target_spacing",
            "must be positive",
        )?;
        Ok(())
    }

    pub fn with_gains(&self, a: f64, b: f64) -> Self {
        Self {
            gain_a: a,
            gain_b: b,
            ..self.clone()
        }
    }

    /// Slope of the headway-velocity ramp, `v_max / (d_sparse − d_dense)`.
    pub fn ramp_slope(&self) -> f64 {
        self.v_max / (self.d_sparse - self.d_dense)
    }

    /// Optimal-velocity function `V(d)`: zero below `d_dense`, a linear ramp
    /// up to `v_max` at `d_sparse`, and `v_max` beyond.
    pub fn headway_velocity(&self, headway: f64) -> f64 {
        if headway < self.d_dense {
            0.0
        } else if headway <= self.d_sparse {
            self.v_max * (headway - self.d_dense) / (self.d_sparse - self.d_dense)
        } else {
            self.v_max
        }
    }

    /// Equilibrium headway for a cruise velocity inside the ramp.
    pub fn equilibrium_headway(&self, velocity: f64) -> f64 {
        self.d_dense + velocity / self.ramp_slope()
    }

    /// Acceleration command for a follower driving at `velocity`, given the
    /// delayed headway and predecessor velocity received over the V2V link.
    pub fn control_accel(&self, velocity: f64, received: &DelayedObservation) -> f64 {
        self.gain_a * (self.headway_velocity(received.headway) - velocity)
            + self.gain_b * (received.predecessor_velocity - velocity)
    }
}

/// Predecessor information as seen by a follower after the link delay:
/// the headway `d(t − τ)` and predecessor velocity `v_{i−1}(t − τ)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DelayedObservation {
    pub headway: f64,
    pub predecessor_velocity: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct VehicleState {
    /// Rear-bumper position, m.
    pub position: f64,
    /// Velocity, m/s.
    pub velocity: f64,
}

impl VehicleState {
    pub fn new(position: f64, velocity: f64) -> Self {
        Self { position, velocity }
    }
}

/// Spacing errors `δ_i` and velocity errors `z_i`, leader first (`δ₀ = z₀ = 0`).
#[derive(Debug, Clone, PartialEq)]
pub struct TrackingErrors {
    pub spacing: Vec<f64>,
    pub velocity: Vec<f64>,
}

/// Tracking errors of a leader-first list of vehicle states against the
/// platoon targets.
pub fn tracking_errors(states: &[VehicleState], spec: &PlatoonSpec) -> Result<TrackingErrors> {
    if states.len() < 2 {
        return Err(Error::InvalidParameter {
            name: "states",
            reason: "need a leader and at least one follower",
        });
    }
    let mut spacing = Vec::with_capacity(states.len());
    let mut velocity = Vec::with_capacity(states.len());
    spacing.push(0.0);
    velocity.push(0.0);
    for pair in states.windows(2) {
        spacing.push(pair[0].position - pair[1].position - spec.target_spacing);
        velocity.push(pair[1].velocity - spec.target_velocity);
    }
    Ok(TrackingErrors { spacing, velocity })
}

/// Interferer density on one non-platoon lane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LaneDensity {
    /// 1-based lane label.
    pub lane: usize,
    /// Transmitting vehicles per meter.
    pub density: f64,
}

/// Lane layout and interferer densities around the tagged platoon link.
#[derive(Debug, Clone, PartialEq)]
pub struct HighwayScene {
    pub lane_count: usize,
    /// Lane width `l`, m.
    pub lane_width: f64,
    /// 1-based label of the platoon lane `n`.
    pub platoon_lane: usize,
    /// Densities of the homogeneous PPPs on the other lanes.
    pub nonplatoon: Vec<LaneDensity>,
    /// Density of transmitters ahead of the platoon on its own lane.
    pub ahead_density: f64,
    /// Density of transmitters behind the platoon on its own lane.
    pub behind_density: f64,
    /// Distance from the tagged receiver to the platoon head, m.
    pub dist_to_head: f64,
    /// Distance from the tagged receiver to the platoon tail, m.
    pub dist_to_tail: f64,
    /// Highway length used by the Monte Carlo sampler, m.
    pub segment_length: f64,
}

/// The two traffic presets used in the reliability experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DensityPreset {
    Small,
    High,
}

impl DensityPreset {
    /// `(λ₁, λ₂, λ₃, λ₄⁽¹⁾, λ₄⁽²⁾)` on the four-lane highway.
    pub fn densities(self) -> [f64; 5] {
        match self {
            DensityPreset::Small => [0.01, 0.005, 0.005, 0.01, 0.01],
            DensityPreset::High => [0.015, 0.01, 0.01, 0.015, 0.015],
        }
    }
}

impl HighwayScene {
    /// Four lanes of 3.7 m with the platoon on lane 4 and the given traffic
    /// preset; the tagged receiver sits at the middle of the platoon.
    pub fn four_lane(preset: DensityPreset, spec: &PlatoonSpec) -> Self {
        let [l1, l2, l3, ahead, behind] = preset.densities();
        let mut scene = Self {
            lane_count: 4,
            lane_width: 3.7,
            platoon_lane: 4,
            nonplatoon: alloc::vec![
                LaneDensity {
                    lane: 1,
                    density: l1
                },
                LaneDensity {
                    lane: 2,
                    density: l2
                },
                LaneDensity {
                    lane: 3,
                    density: l3
                },
            ],
            ahead_density: ahead,
            behind_density: behind,
            dist_to_head: 0.0,
            dist_to_tail: 0.0,
            segment_length: 10_000.0,
        };
        scene.place_at_midpoint(spec);
        scene
    }

    /// Puts the tagged receiver halfway between head and tail of a platoon
    /// of `M` gaps of `L̂`.
    pub fn place_at_midpoint(&mut self, spec: &PlatoonSpec) {
        let half = spec.followers as f64 * spec.target_spacing / 2.0;
        self.dist_to_head = half;
        self.dist_to_tail = half;
    }

    /// Multiplies every interferer density by `factor`.
    pub fn scale_densities(&mut self, factor: f64) {
        for lane in &mut self.nonplatoon {
            lane.density *= factor;
        }
        self.ahead_density *= factor;
        self.behind_density *= factor;
    }

    /// Lateral offset `|n − h|·l` of a lane from the platoon lane.
    pub fn lateral_offset(&self, lane: usize) -> f64 {
        (lane as f64 - self.platoon_lane as f64).abs() * self.lane_width
    }

    pub fn validate(&self) -> Result<()> {
        ensure(self.lane_count >= 1, "lane_count", "need at least one lane")?;
        ensure(
            (1..=self.lane_count).contains(&self.platoon_lane),
            "platoon_lane",
            "must be within 1..=lane_count",
        )?;
        ensure(self.lane_width > 0.0, "lane_width", "must be positive")?;
        for (i, lane) in self.nonplatoon.iter().enumerate() {
            ensure(
                (1..=self.lane_count).contains(&lane.lane) && lane.lane != self.platoon_lane,
                "nonplatoon lane",
                "must be a lane other than the platoon lane",
            )?;
            ensure(
                self.nonplatoon[..i].iter().all(|l| l.lane != lane.lane),
                "nonplatoon lane",
                "listed twice",
            )?;
            ensure(lane.density >= 0.0, "lane density", "must be nonnegative")?;
        }
        ensure(
            self.ahead_density >= 0.0 && self.behind_density >= 0.0,
            "platoon-lane density",
            "must be nonnegative",
        )?;
        ensure(
            self.dist_to_head >= 0.0 && self.dist_to_tail >= 0.0,
            "dist_to_head/dist_to_tail",
            "must be nonnegative",
        )?;
        ensure(
            self.segment_length > 0.0,
            "segment_length",
            "must be positive",
        )?;
        Ok(())
    }
}

/// Radio parameters of the tagged V2V link.
#[derive(Debug, Clone, PartialEq)]
pub struct RadioSpec {
    /// Transmit power `P_t`, W.
    pub tx_power: f64,
    /// Path-loss exponent `α`, must exceed 2.
    pub pathloss_exponent: f64,
    /// Integer Nakagami shape `β` of the desired link.
    pub nakagami_shape: u32,
    /// Total bandwidth `ω` shared by the platoon, Hz.
    pub total_bandwidth: f64,
    /// Noise power spectral density, W/Hz.
    pub noise_psd: f64,
    /// Packet size `S`, bits.
    pub packet_size: f64,
    /// Transmitter–receiver distance `d_{i−1,i}`, m.
    pub link_distance: f64,
}

impl Default for RadioSpec {
    fn default() -> Self {
        Self {
            tx_power: dbm_to_watts(27.0),
            pathloss_exponent: 3.0,
            nakagami_shape: 3,
            total_bandwidth: 40e6,
            noise_psd: dbm_to_watts(-174.0),
            packet_size: 3200.0,
            link_distance: 20.0,
        }
    }
}

impl RadioSpec {
    pub fn validate(&self) -> Result<()> {
        ensure(self.tx_power > 0.0, "tx_power", "must be positive")?;
        ensure(
            self.pathloss_exponent > 2.0,
            "pathloss_exponent",
            "must exceed 2 for finite interference",
        )?;
        ensure(
            self.nakagami_shape >= 1,
            "nakagami_shape",
            "must be at least 1",
        )?;
        ensure(
            self.total_bandwidth > 0.0,
            "total_bandwidth",
            "must be positive",
        )?;
        ensure(self.noise_psd >= 0.0, "noise_psd", "must be nonnegative")?;
        ensure(self.packet_size > 0.0, "packet_size", "must be positive")?;
        ensure(
            self.link_distance > 0.0,
            "link_distance",
            "must be positive",
        )?;
        Ok(())
    }
}

/// Arrival and processor rates of the transmit-side tandem queue.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QueueSpec {
    /// Poisson packet arrival rate `λ_a`, packets/s.
    pub arrival_rate: f64,
    /// Exponential processor service rate `μ₁`, packets/s.
    pub processor_rate: f64,
}

impl Default for QueueSpec {
    fn default() -> Self {
        Self {
            arrival_rate: 10.0,
            processor_rate: 10_000.0,
        }
    }
}

impl QueueSpec {
    pub fn validate(&self) -> Result<()> {
        ensure(self.arrival_rate > 0.0, "arrival_rate", "must be positive")?;
        if self.processor_rate <= self.arrival_rate {
            return Err(Error::UnstableQueue {
                utilization: self.arrival_rate / self.processor_rate,
            });
        }
        Ok(())
    }
}
