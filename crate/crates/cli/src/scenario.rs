//! Scenario files: TOML with sections `platoon`, `highway`, `radio`,
//! `queue`, `simulation`, `optimization` and an optional `sweep`. Every key
//! is optional and falls back to the baseline setup; unknown keys are
//! rejected.

use serde::Deserialize;
use toml::Spanned;

use platoon_core::model::{
    DensityPreset, HighwayScene, LaneDensity, PlatoonSpec, QueueSpec, RadioSpec,
};
use platoon_core::optimize::{DualMethod, GainBox, OptimizeOptions};
use platoon_core::sim::DesiredGain;

use crate::error::{line_column, CliError};
use crate::units::{Kind, Quantity};

type Q = Option<Spanned<Quantity>>;
type Word = Option<Spanned<String>>;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawScenario {
    platoon: RawPlatoon,
    highway: RawHighway,
    radio: RawRadio,
    queue: RawQueue,
    simulation: RawSimulation,
    optimization: RawOptimization,
    sweep: Option<RawSweep>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawPlatoon {
    followers: Option<usize>,
    target_spacing: Q,
    /// Defaults to the optimal-velocity value at `target_spacing`.
    target_velocity: Q,
    gain_a: Option<f64>,
    gain_b: Option<f64>,
    v_max: Q,
    d_sparse: Q,
    d_dense: Q,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLane {
    lane: usize,
    density: Spanned<Quantity>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawHighway {
    preset: Word,
    lane_count: Option<usize>,
    lane_width: Q,
    platoon_lane: Option<usize>,
    lanes: Option<Vec<RawLane>>,
    ahead_density: Q,
    behind_density: Q,
    segment_length: Q,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawRadio {
    tx_power: Q,
    pathloss_exponent: Option<f64>,
    nakagami_shape: Option<u32>,
    total_bandwidth: Q,
    noise_psd: Q,
    packet_size: Q,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawQueue {
    arrival_rate: Q,
    processor_rate: Q,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawSimulation {
    duration: Q,
    time_step: Q,
    delay: Word,
    delay_max: Q,
    spacing_spread: Q,
    velocity_spread: Q,
    leader_changes: Option<Vec<[f64; 2]>>,
    record_stride: Option<usize>,
    draws: Option<usize>,
    spacings: Option<Vec<f64>>,
    theta_db_min: Option<f64>,
    theta_db_max: Option<f64>,
    theta_points: Option<usize>,
    desired_gain: Word,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawOptimization {
    a_min: Option<f64>,
    a_max: Option<f64>,
    b_min: Option<f64>,
    b_max: Option<f64>,
    method: Word,
    grid: Option<usize>,
    epsilon: Option<f64>,
    max_iterations: Option<usize>,
    oracle_grid: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSweep {
    parameter: Spanned<String>,
    from: Q,
    to: Q,
    step: Q,
    #[serde(default)]
    values: Option<Vec<Spanned<Quantity>>>,
    #[serde(default)]
    pairs: Option<Vec<[f64; 2]>>,
}

/// How V2V delays are drawn in the platoon simulation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DelayChoice {
    None,
    Fixed(f64),
    /// Uniform on `(0, max)`; `None` means `(0, τ₁)`.
    Uniform(Option<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationConfig {
    pub duration: f64,
    pub time_step: f64,
    pub delay: DelayChoice,
    pub spacing_spread: f64,
    pub velocity_spread: f64,
    pub leader_changes: Vec<(f64, f64)>,
    pub record_stride: usize,
    pub draws: usize,
    pub spacings: Vec<f64>,
    pub theta_db: (f64, f64, usize),
    pub desired_gain: DesiredGain,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizationConfig {
    pub gain_box: GainBox,
    pub options: OptimizeOptions,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParameter {
    Spacing,
    Bandwidth,
    DensityScale,
    PacketSize,
    FollowerCount,
    GainPair,
}

impl SweepParameter {
    pub fn name(self) -> &'static str {
        match self {
            SweepParameter::Spacing => "spacing",
            SweepParameter::Bandwidth => "bandwidth",
            SweepParameter::DensityScale => "density_scale",
            SweepParameter::PacketSize => "packet_size",
            SweepParameter::FollowerCount => "follower_count",
            SweepParameter::GainPair => "gain_pair",
        }
    }

    pub fn kind(self) -> Kind {
        match self {
            SweepParameter::Spacing => Kind::Length,
            SweepParameter::Bandwidth => Kind::Frequency,
            SweepParameter::PacketSize => Kind::Bits,
            _ => Kind::Dimensionless,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SweepPoint {
    Value(f64),
    Gains(f64, f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub parameter: SweepParameter,
    pub points: Vec<SweepPoint>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    /// The file as read; empty when running on built-in defaults.
    pub source: String,
    pub spec: PlatoonSpec,
    pub scene: HighwayScene,
    pub radio: RadioSpec,
    pub queue: QueueSpec,
    pub simulation: SimulationConfig,
    pub optimization: OptimizationConfig,
    pub sweep: Option<SweepConfig>,
}

impl Default for Scenario {
    fn default() -> Self {
        parse_scenario("", "<defaults>").expect("empty scenario parses")
    }
}

struct Ctx<'a> {
    path: &'a str,
    text: &'a str,
}

impl Ctx<'_> {
    fn error_at(&self, offset: usize, message: impl Into<String>) -> CliError {
        let (line, column) = line_column(self.text, offset);
        CliError::Parse {
            path: self.path.to_string(),
            line,
            column,
            message: message.into(),
        }
    }

    fn quantity(&self, q: &Spanned<Quantity>, kind: Kind) -> Result<f64, CliError> {
        q.get_ref()
            .to_si(kind)
            .map_err(|m| self.error_at(q.span().start, m))
    }

    fn get(&self, q: &Q, kind: Kind, default: f64) -> Result<f64, CliError> {
        q.as_ref().map_or(Ok(default), |q| self.quantity(q, kind))
    }

    fn word<T>(&self, w: &Word, default: T, choices: &[(&str, T)]) -> Result<T, CliError>
    where
        T: Copy,
    {
        let Some(w) = w else { return Ok(default) };
        choices
            .iter()
            .find(|(name, _)| *name == w.get_ref())
            .map(|(_, v)| *v)
            .ok_or_else(|| {
                let names: Vec<&str> = choices.iter().map(|(n, _)| *n).collect();
                self.error_at(
                    w.span().start,
                    format!(
                        "unknown value {:?}, expected one of {}",
                        w.get_ref(),
                        names.join(", ")
                    ),
                )
            })
    }
}

pub fn parse_scenario(text: &str, path: &str) -> Result<Scenario, CliError> {
    let ctx = Ctx { path, text };
    let raw: RawScenario = toml::from_str(text).map_err(|e| {
        let offset = e.span().map_or(0, |s| s.start);
        ctx.error_at(offset, e.message().trim().to_string())
    })?;

    let base = PlatoonSpec::default();
    let p = &raw.platoon;
    let mut spec = PlatoonSpec {
        followers: p.followers.unwrap_or(base.followers),
        target_spacing: ctx.get(&p.target_spacing, Kind::Length, base.target_spacing)?,
        target_velocity: base.target_velocity,
        gain_a: p.gain_a.unwrap_or(base.gain_a),
        gain_b: p.gain_b.unwrap_or(base.gain_b),
        v_max: ctx.get(&p.v_max, Kind::Speed, base.v_max)?,
        d_sparse: ctx.get(&p.d_sparse, Kind::Length, base.d_sparse)?,
        d_dense: ctx.get(&p.d_dense, Kind::Length, base.d_dense)?,
    };
    spec.target_velocity = match &p.target_velocity {
        Some(q) => ctx.quantity(q, Kind::Speed)?,
        None => spec.headway_velocity(spec.target_spacing),
    };

    let h = &raw.highway;
    let preset = ctx.word(
        &h.preset,
        DensityPreset::Small,
        &[
            ("small", DensityPreset::Small),
            ("high", DensityPreset::High),
        ],
    )?;
    let mut scene = HighwayScene::four_lane(preset, &spec);
    if let Some(n) = h.lane_count {
        scene.lane_count = n;
    }
    if let Some(n) = h.platoon_lane {
        scene.platoon_lane = n;
    }
    scene.lane_width = ctx.get(&h.lane_width, Kind::Length, scene.lane_width)?;
    if let Some(lanes) = &h.lanes {
        scene.nonplatoon = lanes
            .iter()
            .map(|l| {
                Ok(LaneDensity {
                    lane: l.lane,
                    density: ctx.quantity(&l.density, Kind::LinearDensity)?,
                })
            })
            .collect::<Result<_, CliError>>()?;
    }
    scene.ahead_density = ctx.get(&h.ahead_density, Kind::LinearDensity, scene.ahead_density)?;
    scene.behind_density = ctx.get(&h.behind_density, Kind::LinearDensity, scene.behind_density)?;
    scene.segment_length = ctx.get(&h.segment_length, Kind::Length, scene.segment_length)?;

    let r = &raw.radio;
    let base_radio = RadioSpec::default();
    let radio = RadioSpec {
        tx_power: ctx.get(&r.tx_power, Kind::Power, base_radio.tx_power)?,
        pathloss_exponent: r.pathloss_exponent.unwrap_or(base_radio.pathloss_exponent),
        nakagami_shape: r.nakagami_shape.unwrap_or(base_radio.nakagami_shape),
        total_bandwidth: ctx.get(
            &r.total_bandwidth,
            Kind::Frequency,
            base_radio.total_bandwidth,
        )?,
        noise_psd: ctx.get(&r.noise_psd, Kind::PowerDensity, base_radio.noise_psd)?,
        packet_size: ctx.get(&r.packet_size, Kind::Bits, base_radio.packet_size)?,
        link_distance: spec.target_spacing,
    };

    let base_queue = QueueSpec::default();
    let queue = QueueSpec {
        arrival_rate: ctx.get(&raw.queue.arrival_rate, Kind::Rate, base_queue.arrival_rate)?,
        processor_rate: ctx.get(
            &raw.queue.processor_rate,
            Kind::Rate,
            base_queue.processor_rate,
        )?,
    };

    let s = &raw.simulation;
    let delay_kind = ctx.word(&s.delay, 2u8, &[("none", 0), ("fixed", 1), ("uniform", 2)])?;
    let delay_max = s
        .delay_max
        .as_ref()
        .map(|q| ctx.quantity(q, Kind::Time))
        .transpose()?;
    let delay = match (delay_kind, delay_max) {
        (0, _) => DelayChoice::None,
        (1, Some(t)) => DelayChoice::Fixed(t),
        (1, None) => {
            let at = s.delay.as_ref().map_or(0, |w| w.span().start);
            return Err(ctx.error_at(at, "delay = \"fixed\" needs delay_max"));
        }
        (_, max) => DelayChoice::Uniform(max),
    };
    let simulation = SimulationConfig {
        duration: ctx.get(&s.duration, Kind::Time, 60.0)?,
        time_step: ctx.get(&s.time_step, Kind::Time, 1e-3)?,
        delay,
        spacing_spread: ctx.get(&s.spacing_spread, Kind::Length, 5.0)?,
        velocity_spread: ctx.get(&s.velocity_spread, Kind::Speed, 3.0)?,
        leader_changes: s
            .leader_changes
            .as_ref()
            .map_or_else(Vec::new, |v| v.iter().map(|&[t, v]| (t, v)).collect()),
        record_stride: s.record_stride.unwrap_or(100).max(1),
        draws: s.draws.unwrap_or(100_000),
        spacings: s.spacings.clone().unwrap_or_else(|| vec![5.0, 10.0, 15.0]),
        theta_db: (
            s.theta_db_min.unwrap_or(-10.0),
            s.theta_db_max.unwrap_or(30.0),
            s.theta_points.unwrap_or(41),
        ),
        desired_gain: ctx.word(
            &s.desired_gain,
            DesiredGain::Gamma,
            &[
                ("gamma", DesiredGain::Gamma),
                ("max-exponential", DesiredGain::MaxExponential),
            ],
        )?,
    };

    let o = &raw.optimization;
    let base_box = GainBox::default();
    let base_opts = OptimizeOptions::default();
    let optimization = OptimizationConfig {
        gain_box: GainBox {
            a_min: o.a_min.unwrap_or(base_box.a_min),
            a_max: o.a_max.unwrap_or(base_box.a_max),
            b_min: o.b_min.unwrap_or(base_box.b_min),
            b_max: o.b_max.unwrap_or(base_box.b_max),
        },
        options: OptimizeOptions {
            method: ctx.word(
                &o.method,
                base_opts.method,
                &[
                    ("ellipsoid", DualMethod::Ellipsoid),
                    ("subgradient", DualMethod::ProjectedSubgradient),
                ],
            )?,
            grid: o.grid.unwrap_or(base_opts.grid),
            epsilon: o.epsilon.unwrap_or(base_opts.epsilon),
            max_iterations: o.max_iterations.unwrap_or(base_opts.max_iterations),
            oracle_grid: o.oracle_grid.or(Some(200)),
            ..base_opts
        },
    };

    let sweep = raw
        .sweep
        .as_ref()
        .map(|w| parse_sweep(&ctx, w))
        .transpose()?;

    Ok(Scenario {
        source: text.to_string(),
        spec,
        scene,
        radio,
        queue,
        simulation,
        optimization,
        sweep,
    })
}

fn parse_sweep(ctx: &Ctx<'_>, w: &RawSweep) -> Result<SweepConfig, CliError> {
    let parameter = ctx.word(
        &Some(w.parameter.clone()),
        SweepParameter::Spacing,
        &[
            ("spacing", SweepParameter::Spacing),
            ("bandwidth", SweepParameter::Bandwidth),
            ("density_scale", SweepParameter::DensityScale),
            ("packet_size", SweepParameter::PacketSize),
            ("follower_count", SweepParameter::FollowerCount),
            ("gain_pair", SweepParameter::GainPair),
        ],
    )?;
    let at = w.parameter.span().start;
    let points = if parameter == SweepParameter::GainPair {
        let pairs = w
            .pairs
            .as_ref()
            .ok_or_else(|| ctx.error_at(at, "gain_pair sweeps list their points in `pairs`"))?;
        pairs
            .iter()
            .map(|&[a, b]| SweepPoint::Gains(a, b))
            .collect()
    } else if let Some(values) = &w.values {
        values
            .iter()
            .map(|q| ctx.quantity(q, parameter.kind()).map(SweepPoint::Value))
            .collect::<Result<Vec<_>, _>>()?
    } else {
        let need = |q: &Q, name: &str| {
            q.as_ref()
                .ok_or_else(|| ctx.error_at(at, format!("sweep needs `{name}` or a `values` list")))
                .and_then(|q| ctx.quantity(q, parameter.kind()))
        };
        let (from, to, step) = (
            need(&w.from, "from")?,
            need(&w.to, "to")?,
            need(&w.step, "step")?,
        );
        if !(step > 0.0) || to < from {
            return Err(ctx.error_at(at, "sweep range needs from <= to and step > 0"));
        }
        let n = ((to - from) / step + 1e-9).floor() as usize + 1;
        (0..n)
            .map(|i| SweepPoint::Value(from + i as f64 * step))
            .collect()
    };
    if points.is_empty() {
        return Err(ctx.error_at(at, "sweep has no points"));
    }
    if parameter == SweepParameter::FollowerCount
        && points
            .iter()
            .any(|p| matches!(p, SweepPoint::Value(v) if *v < 1.0 || v.fract() != 0.0))
    {
        return Err(ctx.error_at(at, "follower_count values must be positive integers"));
    }
    Ok(SweepConfig { parameter, points })
}
