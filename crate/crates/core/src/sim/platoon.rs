use alloc::collections::VecDeque;
use alloc::vec::Vec;

use rand::Rng;

use super::{rng, SimRng};
use crate::error::{Error, Result};
use crate::model::{DelayedObservation, PlatoonSpec, VehicleState};

/// How the V2V delay of each link is realized. A fresh delay is drawn per
/// link at every integration step and held for that step.
#[derive(Debug, Clone, PartialEq)]
pub enum DelayModel {
    None,
    Fixed(f64),
    Uniform {
        max: f64,
    },
    /// Resampled uniformly from recorded delays, e.g. queue sojourn times.
    Samples(Vec<f64>),
}

impl DelayModel {
    pub fn max_delay(&self) -> f64 {
        match self {
            DelayModel::None => 0.0,
            DelayModel::Fixed(t) => *t,
            DelayModel::Uniform { max } => *max,
            DelayModel::Samples(s) => s.iter().copied().fold(0.0, f64::max),
        }
    }

    fn draw(&self, rng: &mut SimRng) -> f64 {
        match self {
            DelayModel::None => 0.0,
            DelayModel::Fixed(t) => *t,
            DelayModel::Uniform { max } => rng.random::<f64>() * max,
            DelayModel::Samples(s) => s[rng.random_range(0..s.len())],
        }
    }
}

/// Piecewise-constant leader velocity.
#[derive(Debug, Clone, PartialEq)]
pub struct LeaderProfile {
    pub initial_velocity: f64,
    /// `(time, velocity)` switches, ascending in time.
    pub changes: Vec<(f64, f64)>,
}

impl LeaderProfile {
    pub fn constant(velocity: f64) -> Self {
        Self {
            initial_velocity: velocity,
            changes: Vec::new(),
        }
    }

    pub fn velocity_at(&self, t: f64) -> f64 {
        self.changes
            .iter()
            .take_while(|&&(at, _)| at <= t)
            .last()
            .map_or(self.initial_velocity, |&(_, v)| v)
    }

    /// Distance covered over `[0, t]`.
    pub fn distance_to(&self, t: f64) -> f64 {
        let mut covered = 0.0;
        let mut since = 0.0;
        let mut v = self.initial_velocity;
        for &(at, next) in &self.changes {
            if at >= t {
                break;
            }
            let at = at.max(0.0);
            covered += v * (at - since);
            since = at;
            v = next;
        }
        covered + v * (t - since)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimScenario {
    pub spec: PlatoonSpec,
    /// Leader first, then the `M` followers.
    pub initial: Vec<VehicleState>,
    pub delay_model: DelayModel,
    pub leader: LeaderProfile,
    pub duration: f64,
    pub time_step: f64,
    pub rng_seed: u64,
    /// Keep every `record_stride`-th step in the trace.
    pub record_stride: usize,
}

impl SimScenario {
    /// Vehicles at the target spacing and velocity, leader at the origin.
    pub fn at_equilibrium(spec: &PlatoonSpec, delay_model: DelayModel) -> Self {
        let initial = (0..=spec.followers)
            .map(|i| VehicleState::new(-(i as f64) * spec.target_spacing, spec.target_velocity))
            .collect();
        Self {
            spec: spec.clone(),
            initial,
            delay_model,
            leader: LeaderProfile::constant(spec.target_velocity),
            duration: 60.0,
            time_step: 1e-3,
            rng_seed: 0,
            record_stride: 10,
        }
    }

    /// Spacing errors uniform in `[−spacing_spread, spacing_spread]` and
    /// velocity errors uniform in `[−velocity_spread, velocity_spread]`.
    pub fn perturbed(
        spec: &PlatoonSpec,
        delay_model: DelayModel,
        spacing_spread: f64,
        velocity_spread: f64,
        seed: u64,
    ) -> Self {
        let mut r = rng(seed ^ 0x9e37_79b9_7f4a_7c15);
        let mut sc = Self::at_equilibrium(spec, delay_model);
        let mut x = 0.0;
        for state in sc.initial.iter_mut().skip(1) {
            let delta = r.random_range(-spacing_spread..=spacing_spread);
            let z = r.random_range(-velocity_spread..=velocity_spread);
            x -= spec.target_spacing + delta;
            *state = VehicleState::new(x, spec.target_velocity + z);
        }
        sc.rng_seed = seed;
        sc
    }

    pub fn validate(&self) -> Result<()> {
        self.spec.validate()?;
        let bad = |name, reason| Err(Error::InvalidParameter { name, reason });
        if self.initial.len() != self.spec.followers + 1 {
            return bad("initial", "need one state per vehicle, leader first");
        }
        if !(self.duration > 0.0) || !(self.time_step > 0.0) {
            return bad("duration/time_step", "must be positive");
        }
        let tau = self.delay_model.max_delay();
        if tau > 0.0 && self.time_step >= tau / 10.0 {
            return bad("time_step", "must be below a tenth of the largest delay");
        }
        if let DelayModel::Samples(s) = &self.delay_model {
            if s.is_empty() || s.iter().any(|&t| !(t >= 0.0)) {
                return bad("delay samples", "need at least one nonnegative delay");
            }
        }
        if self
            .initial
            .windows(2)
            .any(|w| w[0].position - w[1].position <= 0.0)
        {
            return bad("initial", "headways must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimTrace {
    pub time: Vec<f64>,
    /// `[vehicle][sample]`, leader first.
    pub position: Vec<Vec<f64>>,
    pub velocity: Vec<Vec<f64>>,
    pub spacing_error: Vec<Vec<f64>>,
    pub velocity_error: Vec<Vec<f64>>,
    /// `sup_t |z_i(t)|` over every integration step, leader first (zero).
    pub sup_velocity_error: Vec<f64>,
    pub final_state: Vec<VehicleState>,
}

impl SimTrace {
    /// `max_i |δ_i|` at the final time.
    pub fn final_max_spacing_error(&self) -> f64 {
        self.spacing_error
            .iter()
            .map(|s| s.last().map_or(0.0, |x| x.abs()))
            .fold(0.0, f64::max)
    }
}

/// Follower states `[x_1..x_M, v_1..v_M]` at past step boundaries.
struct History {
    step: f64,
    /// Index of the oldest stored step.
    first: usize,
    states: VecDeque<Vec<f64>>,
    capacity: usize,
    initial: Vec<f64>,
}

impl History {
    fn push(&mut self, y: Vec<f64>) {
        if self.states.len() == self.capacity {
            self.states.pop_front();
            self.first += 1;
        }
        self.states.push_back(y);
    }

    /// Linear interpolation at time `s`, no later than the newest step.
    fn at(&self, s: f64, j: usize) -> f64 {
        if s <= 0.0 {
            return self.initial[j];
        }
        let pos = s / self.step;
        let n = (libm::floor(pos) as usize).max(self.first);
        let last = self.first + self.states.len() - 1;
        if n >= last {
            return self.states[last - self.first][j];
        }
        let w = (pos - n as f64).clamp(0.0, 1.0);
        let lo = self.states[n - self.first][j];
        let hi = self.states[n + 1 - self.first][j];
        lo + w * (hi - lo)
    }
}

struct Dynamics<'a> {
    spec: &'a PlatoonSpec,
    leader: &'a LeaderProfile,
    leader_start: VehicleState,
    followers: usize,
}

impl Dynamics<'_> {
    fn leader_at(&self, s: f64) -> (f64, f64) {
        if s <= 0.0 {
            (self.leader_start.position, self.leader_start.velocity)
        } else {
            (
                self.leader_start.position + self.leader.distance_to(s),
                self.leader.velocity_at(s),
            )
        }
    }

    /// Right-hand side at `(t, y)`. Delayed values inside the current step
    /// `(t_n, t]` come from the chord between `y_n` and `y`.
    #[allow(clippy::too_many_arguments)]
    fn rhs(
        &self,
        t: f64,
        y: &[f64],
        t_n: f64,
        y_n: &[f64],
        hist: &History,
        delays: &[f64],
        out: &mut [f64],
    ) {
        let m = self.followers;
        let past = |s: f64, j: usize| -> f64 {
            if s <= t_n || t <= t_n {
                hist.at(s, j)
            } else {
                let w = (s - t_n) / (t - t_n);
                y_n[j] + w * (y[j] - y_n[j])
            }
        };
        for i in 0..m {
            let s = t - delays[i];
            let (pred_x, pred_v) = if i == 0 {
                self.leader_at(s)
            } else {
                (past(s, i - 1), past(s, m + i - 1))
            };
            let obs = DelayedObservation {
                headway: pred_x - past(s, i),
                predecessor_velocity: pred_v,
            };
            out[i] = y[m + i];
            out[m + i] = self.spec.control_accel(y[m + i], &obs);
        }
    }
}

/// Integrates the delayed platoon dynamics with classical RK4 on a fixed
/// step. The leader follows its velocity profile exactly.
pub fn simulate_platoon(sc: &SimScenario) -> Result<SimTrace> {
    sc.validate()?;
    let m = sc.spec.followers;
    let h = sc.time_step;
    let steps = libm::ceil(sc.duration / h - 1e-9) as usize;
    let stride = sc.record_stride.max(1);
    let mut r = rng(sc.rng_seed);

    let mut y: Vec<f64> = sc.initial[1..]
        .iter()
        .map(|s| s.position)
        .chain(sc.initial[1..].iter().map(|s| s.velocity))
        .collect();
    let dynamics = Dynamics {
        spec: &sc.spec,
        leader: &sc.leader,
        leader_start: sc.initial[0],
        followers: m,
    };
    let lag = libm::ceil(sc.delay_model.max_delay() / h) as usize;
    let mut hist = History {
        step: h,
        first: 0,
        states: VecDeque::with_capacity(lag + 3),
        capacity: lag + 3,
        initial: y.clone(),
    };
    hist.push(y.clone());

    let vehicles = m + 1;
    let mut trace = SimTrace {
        time: Vec::new(),
        position: alloc::vec![Vec::new(); vehicles],
        velocity: alloc::vec![Vec::new(); vehicles],
        spacing_error: alloc::vec![Vec::new(); vehicles],
        velocity_error: alloc::vec![Vec::new(); vehicles],
        sup_velocity_error: alloc::vec![0.0; vehicles],
        final_state: Vec::new(),
    };
    let spec = &sc.spec;
    let observe = |trace: &mut SimTrace, t: f64, y: &[f64], record: bool| {
        let (lx, lv) = dynamics.leader_at(t);
        for i in 1..vehicles {
            let z = libm::fabs(y[m + i - 1] - spec.target_velocity);
            if z > trace.sup_velocity_error[i] {
                trace.sup_velocity_error[i] = z;
            }
        }
        if record {
            trace.time.push(t);
            for i in 0..vehicles {
                let (x, v) = if i == 0 {
                    (lx, lv)
                } else {
                    (y[i - 1], y[m + i - 1])
                };
                let (ahead, _) = if i <= 1 { (lx, lv) } else { (y[i - 2], 0.0) };
                trace.position[i].push(x);
                trace.velocity[i].push(v);
                if i == 0 {
                    trace.spacing_error[0].push(0.0);
                    trace.velocity_error[0].push(0.0);
                } else {
                    trace.spacing_error[i].push(ahead - x - spec.target_spacing);
                    trace.velocity_error[i].push(v - spec.target_velocity);
                }
            }
        }
    };
    observe(&mut trace, 0.0, &y, true);

    let n = 2 * m;
    let mut delays = alloc::vec![0.0; m];
    let (mut k1, mut k2, mut k3, mut k4) = (
        alloc::vec![0.0; n],
        alloc::vec![0.0; n],
        alloc::vec![0.0; n],
        alloc::vec![0.0; n],
    );
    let mut stage = alloc::vec![0.0; n];
    for step in 0..steps {
        let t = step as f64 * h;
        for d in delays.iter_mut() {
            *d = sc.delay_model.draw(&mut r);
        }
        dynamics.rhs(t, &y, t, &y, &hist, &delays, &mut k1);
        for j in 0..n {
            stage[j] = y[j] + 0.5 * h * k1[j];
        }
        dynamics.rhs(t + 0.5 * h, &stage, t, &y, &hist, &delays, &mut k2);
        for j in 0..n {
            stage[j] = y[j] + 0.5 * h * k2[j];
        }
        dynamics.rhs(t + 0.5 * h, &stage, t, &y, &hist, &delays, &mut k3);
        for j in 0..n {
            stage[j] = y[j] + h * k3[j];
        }
        dynamics.rhs(t + h, &stage, t, &y, &hist, &delays, &mut k4);
        for j in 0..n {
            y[j] += h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
        }
        let t_next = (step + 1) as f64 * h;
        let (lx, _) = dynamics.leader_at(t_next);
        for i in 0..m {
            let ahead = if i == 0 { lx } else { y[i - 1] };
            let headway = ahead - y[i];
            if !(headway > 0.0) {
                return Err(Error::Collision {
                    time: t_next,
                    follower: i + 1,
                    headway,
                });
            }
        }
        hist.push(y.clone());
        let record = (step + 1) % stride == 0 || step + 1 == steps;
        observe(&mut trace, t_next, &y, record);
    }
    let t_end = steps as f64 * h;
    let (lx, lv) = dynamics.leader_at(t_end);
    trace.final_state = core::iter::once(VehicleState::new(lx, lv))
        .chain((0..m).map(|i| VehicleState::new(y[i], y[m + i])))
        .collect();
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stability::build_dynamics;
    use approx::assert_relative_eq;

    #[test]
    fn leader_profile_integrates_steps() {
        let p = LeaderProfile {
            initial_velocity: 18.0,
            changes: alloc::vec![(20.0, 21.0), (40.0, 15.0)],
        };
        assert_eq!(p.velocity_at(19.999), 18.0);
        assert_eq!(p.velocity_at(20.0), 21.0);
        assert_eq!(p.velocity_at(50.0), 15.0);
        assert_relative_eq!(p.distance_to(10.0), 180.0);
        assert_relative_eq!(p.distance_to(30.0), 360.0 + 210.0);
        assert_relative_eq!(p.distance_to(60.0), 360.0 + 420.0 + 300.0);
    }

    #[test]
    fn history_interpolates_and_forgets() {
        let mut hist = History {
            step: 0.5,
            first: 0,
            states: VecDeque::new(),
            capacity: 3,
            initial: alloc::vec![-1.0],
        };
        for k in 0..5 {
            hist.push(alloc::vec![k as f64]);
        }
        assert_eq!(hist.first, 2);
        assert_eq!(hist.at(-0.1, 0), -1.0);
        assert_relative_eq!(hist.at(1.25, 0), 2.5);
        assert_eq!(hist.at(2.0, 0), 4.0);
    }

    #[test]
    fn equilibrium_is_preserved() {
        let spec = PlatoonSpec::default();
        let mut sc = SimScenario::at_equilibrium(&spec, DelayModel::Uniform { max: 0.0139 });
        sc.duration = 10.0;
        let trace = simulate_platoon(&sc).unwrap();
        for i in 0..=spec.followers {
            assert!(trace.spacing_error[i].iter().all(|e| e.abs() < 1e-9));
            assert!(trace.velocity_error[i].iter().all(|e| e.abs() < 1e-9));
        }
    }

    #[test]
    fn zero_delay_decay_rate_matches_spectrum() {
        let spec = PlatoonSpec {
            followers: 1,
            ..PlatoonSpec::default()
        };
        let mut sc = SimScenario::at_equilibrium(&spec, DelayModel::None);
        sc.initial[1].position -= 1.0;
        sc.duration = 20.0;
        sc.record_stride = 1000;
        let trace = simulate_platoon(&sc).unwrap();
        let e = &trace.spacing_error[1];
        // Samples each second; the slow mode dominates late.
        let rate = -(e[20].abs() / e[15].abs()).ln() / 5.0;
        let dynamics = build_dynamics(&spec);
        let mut closed = dynamics.m1.clone();
        for m2 in &dynamics.m2 {
            closed += m2;
        }
        let slowest = closed
            .complex_eigenvalues()
            .iter()
            .map(|z| z.re)
            .fold(f64::NEG_INFINITY, f64::max);
        assert!(slowest < 0.0);
        assert_relative_eq!(rate, -slowest, max_relative = 1e-3);
    }

    #[test]
    fn collision_is_reported() {
        let spec = PlatoonSpec::default();
        let mut sc = SimScenario::at_equilibrium(&spec, DelayModel::None);
        // 0.5 m behind follower 1 and 10 m/s faster: full braking closes
        // about 0.7 m before the gap opens again.
        sc.initial[2] = VehicleState::new(-20.5, 25.0);
        sc.duration = 5.0;
        match simulate_platoon(&sc) {
            Err(Error::Collision { follower, .. }) => assert_eq!(follower, 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn rejects_coarse_step_and_bad_initial() {
        let spec = PlatoonSpec::default();
        let mut sc = SimScenario::at_equilibrium(&spec, DelayModel::Fixed(0.005));
        assert!(sc.validate().is_err());
        sc.time_step = 1e-4;
        assert!(sc.validate().is_ok());
        sc.initial.pop();
        assert!(sc.validate().is_err());
    }

    #[test]
    fn identical_seeds_identical_traces() {
        let spec = PlatoonSpec::default();
        let mut sc =
            SimScenario::perturbed(&spec, DelayModel::Uniform { max: 0.0139 }, 5.0, 3.0, 7);
        sc.duration = 5.0;
        let a = simulate_platoon(&sc).unwrap();
        let b = simulate_platoon(&sc).unwrap();
        assert_eq!(a, b);
        sc.rng_seed = 8;
        assert_ne!(simulate_platoon(&sc).unwrap(), a);
    }
}
