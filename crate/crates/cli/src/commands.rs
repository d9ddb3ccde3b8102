//! One function per subcommand. Each returns the table it produced and,
//! when the run should still end with a nonzero status, the error behind it.

use rayon::prelude::*;

use platoon_core::delay::DelayReport;
use platoon_core::optimize::{optimize_gains, optimize_lower_bound, OptimizeOptions};
use platoon_core::reliability::{
    assemble_report, reliability_approx, reliability_lower_bound, Pipeline, StabilityTarget,
};
use platoon_core::sim::{sample_sinr, simulate_platoon, DelayModel, LeaderProfile, SimScenario};
use platoon_core::sinr::{db_grid, sinr_ccdf, ServiceMoments, TAIL_MASS};
use platoon_core::stability::{plant_threshold_for, stability_report, StabilityReport};
use platoon_core::Error as CoreError;

use crate::error::CliError;
use crate::scenario::{DelayChoice, Scenario, SweepParameter, SweepPoint};
use crate::table::{Cell, Column, Metadata, ResultTable};

const ANALYTIC_TOLERANCES: &str = "laplace_rel=1e-12; moment_rel=1e-8; tail_mass=1e-9";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Stability,
    Sweep,
    Optimize,
    Simulate,
    Montecarlo,
    Delay,
    Reliability,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Stability => "stability",
            Command::Sweep => "sweep",
            Command::Optimize => "optimize",
            Command::Simulate => "simulate",
            Command::Montecarlo => "montecarlo",
            Command::Delay => "delay",
            Command::Reliability => "reliability",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        [
            Command::Stability,
            Command::Sweep,
            Command::Optimize,
            Command::Simulate,
            Command::Montecarlo,
            Command::Delay,
            Command::Reliability,
        ]
        .into_iter()
        .find(|c| c.name() == name)
    }
}

/// Everything a run depends on.
#[derive(Debug, Clone)]
pub struct Run {
    pub scenario: Scenario,
    pub seed: u64,
    pub razumikhin_k: f64,
}

pub struct Outcome {
    pub table: ResultTable,
    /// Set when the table is written but the exit status is nonzero.
    pub failure: Option<CliError>,
}

impl Outcome {
    fn ok(table: ResultTable) -> Self {
        Self {
            table,
            failure: None,
        }
    }
}

impl Run {
    fn pipeline(&self) -> Pipeline {
        let s = &self.scenario;
        let mut p = Pipeline::new(s.spec.clone(), s.scene.clone(), s.radio.clone(), s.queue);
        p.razumikhin_k = self.razumikhin_k;
        p
    }

    fn metadata(&self, command: Command, tolerances: &str) -> Metadata {
        Metadata::new(
            command.name(),
            self.seed,
            self.razumikhin_k,
            tolerances,
            &self.scenario.source,
        )
    }

    pub fn execute(&self, command: Command) -> Result<Outcome, CliError> {
        match command {
            Command::Stability => self.stability(),
            Command::Sweep => self.sweep(),
            Command::Optimize => self.optimize(),
            Command::Simulate => self.simulate(),
            Command::Montecarlo => self.montecarlo(),
            Command::Delay => self.delay(),
            Command::Reliability => self.reliability(),
        }
    }

    fn stability(&self) -> Result<Outcome, CliError> {
        let spec = &self.scenario.spec;
        let r = stability_report(spec, self.razumikhin_k);
        let mut t = ResultTable::new(
            self.metadata(Command::Stability, "eigen=structured 2x2 blocks"),
            vec![
                Column::new("followers", "count"),
                Column::new("gain_a", "1"),
                Column::new("gain_b", "1"),
                Column::new("razumikhin_k", "1"),
                Column::new("tau1", "s"),
                Column::new("tau2", "s"),
                Column::new("tau_min", "s"),
                Column::new("binding", "-"),
                Column::new("plant_gain_condition", "-"),
                Column::new("string_gain_condition", "-"),
            ],
        );
        let flag = |ok: bool| Cell::from(if ok { "ok" } else { "violated" });
        t.push(vec![
            spec.followers.into(),
            spec.gain_a.into(),
            spec.gain_b.into(),
            self.razumikhin_k.into(),
            r.tau1.into(),
            r.tau2.into(),
            r.tau_min.into(),
            binding(&r).into(),
            flag(r.plant_gain_condition_ok),
            flag(r.string_gain_condition_ok),
        ]);
        let failure = r
            .tau1_error
            .clone()
            .or_else(|| r.tau2_error.clone())
            .map(CliError::Core);
        Ok(Outcome { table: t, failure })
    }

    fn delay(&self) -> Result<Outcome, CliError> {
        let (_, m, d) = self.pipeline().delay()?;
        let mut t = ResultTable::new(
            self.metadata(Command::Delay, ANALYTIC_TOLERANCES),
            delay_columns(),
        );
        t.push(delay_cells(&m, &d));
        Ok(Outcome::ok(t))
    }

    fn reliability(&self) -> Result<Outcome, CliError> {
        let ctx = self.pipeline();
        let stability = ctx.stability();
        let (model, _, delay) = ctx.delay()?;
        let mut t = ResultTable::new(
            self.metadata(Command::Reliability, ANALYTIC_TOLERANCES),
            vec![
                Column::new("target", "-"),
                Column::new("tau", "s"),
                Column::new("t_total", "s"),
                Column::new("lower_bound", "1"),
                Column::new("markov_term", "1"),
                Column::new("chernoff_term", "1"),
                Column::new("approx", "1"),
                Column::new("status", "-"),
            ],
        );
        let mut failure = None;
        for target in [
            StabilityTarget::Plant,
            StabilityTarget::String,
            StabilityTarget::Both,
        ] {
            match assemble_report(&model, &stability, &delay, target) {
                Ok(r) => {
                    let b = r.lower_bound;
                    t.push(vec![
                        target_name(target).into(),
                        r.tau_used.into(),
                        r.delay.end_to_end.into(),
                        b.map(|b| b.value()).into(),
                        b.map(|b| b.markov_term).into(),
                        b.map(|b| b.chernoff_term).into(),
                        r.approx.into(),
                        r.bound_error
                            .map_or_else(|| "ok".to_string(), |e| e.to_string())
                            .into(),
                    ]);
                }
                Err(e) => {
                    t.push(vec![
                        target_name(target).into(),
                        f64::NAN.into(),
                        delay.end_to_end.into(),
                        f64::NAN.into(),
                        f64::NAN.into(),
                        f64::NAN.into(),
                        f64::NAN.into(),
                        e.to_string().into(),
                    ]);
                    failure.get_or_insert(CliError::Core(e));
                }
            }
        }
        Ok(Outcome { table: t, failure })
    }

    fn sweep(&self) -> Result<Outcome, CliError> {
        let sweep =
            self.scenario.sweep.as_ref().ok_or_else(|| {
                CliError::Usage("the scenario has no [sweep] section".to_string())
            })?;
        let mut columns = match sweep.parameter {
            SweepParameter::GainPair => {
                vec![Column::new("gain_a", "1"), Column::new("gain_b", "1")]
            }
            SweepParameter::FollowerCount => vec![Column::new("follower_count", "count")],
            p => vec![Column::new(p.name(), p.kind().si_unit())],
        };
        columns.extend([
            Column::new("tau1", "s"),
            Column::new("tau2", "s"),
            Column::new("tau_min", "s"),
            Column::new("mean_service", "s"),
            Column::new("t_total", "s"),
            Column::new("rho2", "1"),
            Column::new("approx_plant", "1"),
            Column::new("approx_string", "1"),
            Column::new("approx_both", "1"),
            Column::new("lower_bound_plant", "1"),
            Column::new("lower_bound_string", "1"),
            Column::new("lower_bound_both", "1"),
            Column::new("status", "-"),
        ]);
        let mut t = ResultTable::new(self.metadata(Command::Sweep, ANALYTIC_TOLERANCES), columns);
        let rows: Vec<Vec<Cell>> = sweep
            .points
            .par_iter()
            .map(|&point| self.sweep_row(sweep.parameter, point))
            .collect();
        for row in rows {
            t.push(row);
        }
        Ok(Outcome::ok(t))
    }

    fn sweep_row(&self, parameter: SweepParameter, point: SweepPoint) -> Vec<Cell> {
        let mut ctx = self.pipeline();
        let mut row: Vec<Cell> = match point {
            SweepPoint::Gains(a, b) => {
                ctx.spec = ctx.spec.with_gains(a, b);
                vec![a.into(), b.into()]
            }
            SweepPoint::Value(v) => {
                match parameter {
                    SweepParameter::Spacing => ctx.spec.target_spacing = v,
                    SweepParameter::Bandwidth => ctx.radio.total_bandwidth = v,
                    SweepParameter::DensityScale => ctx.scene.scale_densities(v),
                    SweepParameter::PacketSize => ctx.radio.packet_size = v,
                    SweepParameter::FollowerCount => ctx.spec.followers = v as usize,
                    SweepParameter::GainPair => unreachable!("gain sweeps carry pairs"),
                }
                if parameter == SweepParameter::FollowerCount {
                    vec![(v as usize).into()]
                } else {
                    vec![v.into()]
                }
            }
        };
        let stability = ctx.stability();
        let targets = [
            StabilityTarget::Plant,
            StabilityTarget::String,
            StabilityTarget::Both,
        ];
        let mut status = Vec::new();
        if let Some(e) = stability
            .tau1_error
            .as_ref()
            .or(stability.tau2_error.as_ref())
        {
            status.push(format!("infeasible-gains: {e}"));
        }
        let model = ctx.sinr_model();
        let delay = ctx.delay();
        let (mean_service, t_total, rho2) = match &delay {
            Ok((_, m, d)) => (m.mean, d.end_to_end, d.rho2),
            Err(CoreError::UnstableQueue { utilization }) => {
                status.push("unstable-queue".to_string());
                (f64::NAN, f64::NAN, *utilization)
            }
            Err(e) => {
                status.push(format!("numerical: {e}"));
                (f64::NAN, f64::NAN, f64::NAN)
            }
        };
        row.extend([
            Cell::from(stability.tau1),
            stability.tau2.into(),
            stability.tau_min.into(),
            mean_service.into(),
            t_total.into(),
            rho2.into(),
        ]);
        for target in targets {
            let approx = match (&model, target.threshold(&stability)) {
                (Ok(m), Some(tau)) => reliability_approx(m, tau).unwrap_or(f64::NAN),
                _ => f64::NAN,
            };
            row.push(approx.into());
        }
        let mut premise = Vec::new();
        for target in targets {
            let bound = match (&delay, target.threshold(&stability)) {
                (Ok((_, _, d)), Some(tau)) => match reliability_lower_bound(d.end_to_end, tau) {
                    Ok(b) => b.value(),
                    Err(_) => {
                        premise.push(target_name(target));
                        f64::NAN
                    }
                },
                _ => f64::NAN,
            };
            row.push(bound.into());
        }
        if !premise.is_empty() {
            status.push(format!("premise-violated({})", premise.join("/")));
        }
        row.push(
            if status.is_empty() {
                "ok".to_string()
            } else {
                status.join("; ")
            }
            .into(),
        );
        row
    }

    fn optimize(&self) -> Result<Outcome, CliError> {
        let cfg = &self.scenario.optimization;
        let opts = OptimizeOptions {
            razumikhin_k: self.razumikhin_k,
            ..cfg.options
        };
        let ctx = self.pipeline();
        let gains = optimize_gains(&cfg.gain_box, &ctx.spec, &opts)?;
        let mut t = ResultTable::new(
            self.metadata(
                Command::Optimize,
                &format!(
                    "epsilon={}; grid={}; max_iterations={}; {ANALYTIC_TOLERANCES}",
                    opts.epsilon, opts.grid, opts.max_iterations
                ),
            ),
            vec![
                Column::new("method", "-"),
                Column::new("a_star", "1"),
                Column::new("b_star", "1"),
                Column::new("tau_star", "s"),
                Column::new("oracle_gap", "s"),
                Column::new("iterations", "count"),
                Column::new("converged", "-"),
                Column::new("t_total", "s"),
                Column::new("lower_bound", "1"),
                Column::new("status", "-"),
            ],
        );
        let (t_total, bound, status) = match optimize_lower_bound(&cfg.gain_box, &ctx, &opts) {
            Ok(lb) => (lb.delay.end_to_end, lb.bound.value(), "ok".to_string()),
            Err(CoreError::ProvisoFailed { mean_delay, .. }) => (
                mean_delay,
                f64::NAN,
                "mean delay exceeds tau_star".to_string(),
            ),
            Err(e) => (f64::NAN, f64::NAN, e.to_string()),
        };
        t.push(vec![
            match opts.method {
                platoon_core::optimize::DualMethod::Ellipsoid => "ellipsoid",
                platoon_core::optimize::DualMethod::ProjectedSubgradient => "subgradient",
            }
            .into(),
            gains.a_star.into(),
            gains.b_star.into(),
            gains.tau_star.into(),
            gains.oracle_gap.into(),
            gains.iterations.into(),
            gains.converged.into(),
            t_total.into(),
            bound.into(),
            status.into(),
        ]);
        Ok(Outcome::ok(t))
    }

    fn simulate(&self) -> Result<Outcome, CliError> {
        let s = &self.scenario;
        let cfg = &s.simulation;
        let delay_model = match cfg.delay {
            DelayChoice::None => DelayModel::None,
            DelayChoice::Fixed(t) => DelayModel::Fixed(t),
            DelayChoice::Uniform(Some(max)) => DelayModel::Uniform { max },
            DelayChoice::Uniform(None) => DelayModel::Uniform {
                max: plant_threshold_for(&s.spec, self.razumikhin_k)?,
            },
        };
        let mut sc = if cfg.spacing_spread > 0.0 || cfg.velocity_spread > 0.0 {
            SimScenario::perturbed(
                &s.spec,
                delay_model,
                cfg.spacing_spread,
                cfg.velocity_spread,
                self.seed,
            )
        } else {
            let mut sc = SimScenario::at_equilibrium(&s.spec, delay_model);
            sc.rng_seed = self.seed;
            sc
        };
        sc.leader = LeaderProfile {
            initial_velocity: s.spec.target_velocity,
            changes: cfg.leader_changes.clone(),
        };
        sc.duration = cfg.duration;
        sc.time_step = cfg.time_step;
        sc.record_stride = cfg.record_stride;
        let trace = simulate_platoon(&sc)?;
        let m = s.spec.followers;
        let mut columns = vec![
            Column::new("time", "s"),
            Column::new("leader_velocity", "m/s"),
        ];
        columns.extend((1..=m).map(|i| Column::new(format!("delta_{i}"), "m")));
        columns.extend((1..=m).map(|i| Column::new(format!("z_{i}"), "m/s")));
        let mut t = ResultTable::new(
            self.metadata(
                Command::Simulate,
                &format!(
                    "rk4 h={}; delay={}",
                    cfg.time_step,
                    delay_label(&sc.delay_model)
                ),
            ),
            columns,
        );
        for (k, &time) in trace.time.iter().enumerate() {
            let mut row: Vec<Cell> = vec![time.into(), trace.velocity[0][k].into()];
            row.extend((1..=m).map(|i| Cell::from(trace.spacing_error[i][k])));
            row.extend((1..=m).map(|i| Cell::from(trace.velocity_error[i][k])));
            t.push(row);
        }
        Ok(Outcome::ok(t))
    }

    fn montecarlo(&self) -> Result<Outcome, CliError> {
        let s = &self.scenario;
        let cfg = &s.simulation;
        let (lo, hi, n) = cfg.theta_db;
        let grid = db_grid(lo, hi, n.max(2));
        let per_spacing: Vec<(Vec<f64>, Vec<f64>)> = cfg
            .spacings
            .par_iter()
            .enumerate()
            .map(|(i, &spacing)| {
                let mut ctx = self.pipeline();
                ctx.spec.target_spacing = spacing;
                let model = ctx.sinr_model()?;
                let samples = sample_sinr(
                    &model,
                    cfg.draws,
                    self.seed.wrapping_add(i as u64),
                    cfg.desired_gain,
                )?;
                let analytic = grid
                    .iter()
                    .map(|&th| sinr_ccdf(th, &model))
                    .collect::<Result<Vec<_>, _>>()?;
                Ok((grid.iter().map(|&th| samples.ccdf(th)).collect(), analytic))
            })
            .collect::<Result<_, CoreError>>()?;
        let mut columns = vec![Column::new("theta_db", "dB"), Column::new("theta", "1")];
        for &spacing in &cfg.spacings {
            columns.push(Column::new(format!("ccdf_mc_{spacing}m"), "1"));
            columns.push(Column::new(format!("ccdf_analytic_{spacing}m"), "1"));
        }
        let mut t = ResultTable::new(
            self.metadata(
                Command::Montecarlo,
                &format!(
                    "draws={}; desired_gain={:?}; {ANALYTIC_TOLERANCES}",
                    cfg.draws, cfg.desired_gain
                ),
            ),
            columns,
        );
        let step = (hi - lo) / (grid.len() - 1) as f64;
        for (k, &theta) in grid.iter().enumerate() {
            let mut row: Vec<Cell> = vec![(lo + k as f64 * step).into(), theta.into()];
            for (mc, analytic) in &per_spacing {
                row.push(mc[k].into());
                row.push(analytic[k].into());
            }
            t.push(row);
        }
        Ok(Outcome::ok(t))
    }
}

fn delay_label(model: &DelayModel) -> String {
    match model {
        DelayModel::None => "none".to_string(),
        DelayModel::Fixed(t) => format!("fixed {t} s"),
        DelayModel::Uniform { max } => format!("uniform(0, {max} s)"),
        DelayModel::Samples(s) => format!("{} recorded samples", s.len()),
    }
}

fn binding(r: &StabilityReport) -> &'static str {
    match r.plant_binds() {
        Some(true) => "plant",
        Some(false) => "string",
        None => "none",
    }
}

fn target_name(t: StabilityTarget) -> &'static str {
    match t {
        StabilityTarget::Plant => "plant",
        StabilityTarget::String => "string",
        StabilityTarget::Both => "both",
    }
}

fn delay_columns() -> Vec<Column> {
    vec![
        Column::new("mean_service", "s"),
        Column::new("var_service", "s^2"),
        Column::new("service_rate", "1/s"),
        Column::new("rho2", "1"),
        Column::new("t1", "s"),
        Column::new("t2", "s"),
        Column::new("t_total", "s"),
        Column::new("truncated_mass", "1"),
        Column::new("theta_min", "1"),
        Column::new("theta_max", "1"),
    ]
}

fn delay_cells(m: &ServiceMoments, d: &DelayReport) -> Vec<Cell> {
    debug_assert!(m.truncated_mass <= 2.0 * TAIL_MASS);
    vec![
        m.mean.into(),
        m.variance.into(),
        m.service_rate().into(),
        d.rho2.into(),
        d.t1_mean.into(),
        d.t2_mean.into(),
        d.end_to_end.into(),
        m.truncated_mass.into(),
        m.theta_min.into(),
        m.theta_max.into(),
    ]
}
