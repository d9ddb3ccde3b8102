//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any of them fails.

use std::process::ExitCode;
use std::time::Instant;

use platoon_core::delay::pollaczek_khinchine;
use platoon_core::model::{DensityPreset, HighwayScene, PlatoonSpec, QueueSpec, RadioSpec};
use platoon_core::optimize::{grid_oracle, optimize_gains, DualMethod, GainBox, OptimizeOptions};
use platoon_core::reliability::{
    reliability_approx, reliability_lower_bound, Pipeline, StabilityTarget,
};
use platoon_core::sim::{
    empirical_reliability, sample_sinr, simulate_platoon, simulate_tandem_queue, DelayModel,
    DesiredGain, LeaderProfile, ServiceSampler, SimScenario,
};
use platoon_core::sinr::{db_grid, sinr_ccdf, SinrModel};
use platoon_core::stability::{
    plant_threshold_for, stability_report, string_threshold, DEFAULT_RAZUMIKHIN_K,
};

const K: f64 = DEFAULT_RAZUMIKHIN_K;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn spec(followers: usize, spacing: f64, a: f64, b: f64) -> PlatoonSpec {
    PlatoonSpec {
        followers,
        target_spacing: spacing,
        ..PlatoonSpec::default()
    }
    .with_gains(a, b)
}

fn pipeline(
    spec: PlatoonSpec,
    preset: DensityPreset,
    packet_size: f64,
    bandwidth: f64,
) -> Pipeline {
    let scene = HighwayScene::four_lane(preset, &spec);
    let radio = RadioSpec {
        packet_size,
        total_bandwidth: bandwidth,
        ..RadioSpec::default()
    };
    Pipeline::new(spec, scene, radio, QueueSpec::default())
}

fn tau_for(spec: &PlatoonSpec, target: StabilityTarget) -> f64 {
    target
        .threshold(&stability_report(spec, K))
        .expect("feasible gains")
}

/// Largest `x` in `[lo, hi]` with `f(x) ≥ level`, for `f` decreasing in `x`.
fn last_above(mut lo: f64, mut hi: f64, level: f64, f: impl Fn(f64) -> f64) -> f64 {
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if f(mid) >= level {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn criterion_1() -> Outcome {
    let s = spec(6, 20.0, 2.0, 2.0);
    let tau2 = string_threshold(&s).unwrap().tau;
    // A = a·v_max/(d_sparse − d_dense) = 2, B = b = 2, C = a + b = 4.
    let (a, b, c) = (2.0 * 30.0 / 30.0, 2.0, 4.0);
    let oracle = (c * c - 2.0 * a - b * b) / (2.0 * a * c);
    let pass = (tau2 - 0.5).abs() <= 1e-12 && (tau2 - oracle).abs() <= 1e-12;
    outcome(pass, format!("tau2 = {tau2:.15} s (expected 0.5)"))
}

fn criterion_2() -> Outcome {
    let ks = [1.0001, 1.001, 1.01, 1.05, 1.1];
    let taus: Vec<f64> = ks
        .iter()
        .map(|&k| plant_threshold_for(&spec(6, 20.0, 2.0, 2.0), k).unwrap())
        .collect();
    let band = taus.iter().all(|t| (0.012..=0.016).contains(t));
    let single = plant_threshold_for(&spec(1, 20.0, 2.0, 2.0), K).unwrap();
    // M = 1: λ_min(M3) = 4 − 2√2, λ_max(M4) = 4 + 2k.
    let oracle = (4.0 - 2.0 * 2f64.sqrt()) / (4.0 + 2.0 * K);
    let closed = (single - oracle).abs() <= 1e-6 && (single - 0.19462).abs() <= 1e-5;
    let listing: Vec<String> = ks
        .iter()
        .zip(&taus)
        .map(|(k, t)| format!("k={k}: {:.3} ms", t * 1e3))
        .collect();
    outcome(
        band && closed,
        format!(
            "M=6 {}; M=1 tau1 = {single:.7} s vs {oracle:.7}",
            listing.join(", ")
        ),
    )
}

fn criterion_3() -> Outcome {
    let s = PlatoonSpec {
        target_spacing: 20.0,
        target_velocity: 15.0,
        ..PlatoonSpec::default()
    };
    let tau1 = plant_threshold_for(&s, K).unwrap();
    let mut worst: f64 = 0.0;
    let mut failures = Vec::new();
    for seed in 0..10 {
        let sc = SimScenario::perturbed(&s, DelayModel::Uniform { max: tau1 }, 5.0, 3.0, seed);
        match simulate_platoon(&sc) {
            Ok(trace) => worst = worst.max(trace.final_max_spacing_error()),
            Err(e) => failures.push(format!("seed {seed}: {e}")),
        }
    }
    let pass = failures.is_empty() && worst < 0.01;
    outcome(
        pass,
        format!(
            "max_i |delta_i(60 s)| over 10 seeds = {worst:.3e} m, delays U(0, {:.2} ms){}",
            tau1 * 1e3,
            if failures.is_empty() {
                String::new()
            } else {
                format!("; {}", failures.join("; "))
            }
        ),
    )
}

fn criterion_4() -> Outcome {
    let s = PlatoonSpec {
        target_spacing: 23.0,
        target_velocity: 18.0,
        ..PlatoonSpec::default()
    };
    let tau1 = plant_threshold_for(&s, K).unwrap();
    let mut sc = SimScenario::at_equilibrium(&s, DelayModel::Uniform { max: tau1 });
    sc.leader = LeaderProfile {
        initial_velocity: 18.0,
        changes: vec![(20.0, 21.0), (40.0, 15.0)],
    };
    sc.rng_seed = 1;
    let trace = match simulate_platoon(&sc) {
        Ok(t) => t,
        Err(e) => return outcome(false, format!("simulation failed: {e}")),
    };
    let sup = &trace.sup_velocity_error[1..];
    let pass = sup.windows(2).all(|w| w[1] <= w[0] + 1e-3);
    let listing: Vec<String> = sup.iter().map(|z| format!("{z:.4}")).collect();
    outcome(
        pass,
        format!("sup_t |z_i| for i = 1..6: [{}] m/s", listing.join(", ")),
    )
}

fn lane_scene_model(spacing: f64) -> SinrModel {
    let s = spec(6, spacing, 2.0, 2.0);
    pipeline(s, DensityPreset::Small, 3200.0, 40e6)
        .sinr_model()
        .unwrap()
}

fn criterion_5() -> Outcome {
    let grid = db_grid(-10.0, 30.0, 41);
    let mut worst: f64 = 0.0;
    let mut spots = Vec::new();
    for (i, spacing) in [5.0, 10.0, 15.0].into_iter().enumerate() {
        let model = lane_scene_model(spacing);
        let samples = sample_sinr(&model, 100_000, 500 + i as u64, DesiredGain::Gamma).unwrap();
        let reference: Vec<(f64, f64)> = grid
            .iter()
            .map(|&t| (t, sinr_ccdf(t, &model).unwrap()))
            .collect();
        worst = worst.max(samples.max_gap(&reference));
        spots.push(sinr_ccdf(10.0, &model).unwrap());
    }
    // Doubling the segment must not move the empirical CCDF.
    let mut long = lane_scene_model(5.0);
    long.scene.segment_length = 20_000.0;
    let long_samples = sample_sinr(&long, 100_000, 500, DesiredGain::Gamma).unwrap();
    let short_samples =
        sample_sinr(&lane_scene_model(5.0), 100_000, 500, DesiredGain::Gamma).unwrap();
    let truncation = grid
        .iter()
        .map(|&t| (long_samples.ccdf(t) - short_samples.ccdf(t)).abs())
        .fold(0.0, f64::max);
    let pass = worst <= 0.02 && (spots[0] - 0.76).abs() <= 0.03 && (spots[2] - 0.24).abs() <= 0.03;
    outcome(
        pass,
        format!(
            "max |empirical - analytic| = {worst:.4} over 41 grid points x 3 spacings; \
             P(SINR > 10 dB) = {:.4} (5 m), {:.4} (10 m), {:.4} (15 m); 10 km vs 20 km gap {truncation:.4}",
            spots[0], spots[1], spots[2]
        ),
    )
}

fn criterion_6() -> Outcome {
    let s = spec(6, 20.0, 2.0, 2.0);
    let spacing_crossing = |target: StabilityTarget| {
        let tau = tau_for(&s, target);
        last_above(1.0, 60.0, 0.99, |spacing| {
            let ctx = pipeline(
                spec(6, spacing, 2.0, 2.0),
                DensityPreset::Small,
                10_000.0,
                40e6,
            );
            reliability_approx(&ctx.sinr_model().unwrap(), tau).unwrap()
        })
    };
    let plant_spacing = spacing_crossing(StabilityTarget::Plant);
    let string_spacing = spacing_crossing(StabilityTarget::String);

    // Smallest bandwidth reaching 0.90 at the baseline spacing.
    let bandwidth_crossing = |target: StabilityTarget| {
        let tau = tau_for(&s, target);
        let ctx = |w: f64| pipeline(s.clone(), DensityPreset::Small, 10_000.0, w);
        let need = |w: f64| -reliability_approx(&ctx(w).sinr_model().unwrap(), tau).unwrap();
        // `need` is decreasing in w, so the last w with need ≥ −0.9 is the crossing.
        last_above(1e4, 1e10, -0.9, need)
    };
    let plant_bw = bandwidth_crossing(StabilityTarget::Plant);
    let string_bw = bandwidth_crossing(StabilityTarget::String);

    let spacing_ok = (plant_spacing - 8.0).abs() <= 2.0 && (string_spacing - 26.0).abs() <= 2.0;
    let bandwidth_ok = (string_bw / 2e6 - 1.0).abs() <= 0.2 && (plant_bw / 31e6 - 1.0).abs() <= 0.2;
    outcome(
        spacing_ok && bandwidth_ok,
        format!(
            "0.99 crossing at {plant_spacing:.2} m (plant), {string_spacing:.2} m (string) [{}]; \
             0.90 at {:.2} MHz (string), {:.2} MHz (plant) [{}], bandwidth ratio {:.1} vs 15.5 published",
            if spacing_ok { "ok" } else { "off" },
            string_bw / 1e6,
            plant_bw / 1e6,
            if bandwidth_ok { "ok" } else { "off" },
            plant_bw / string_bw,
        ),
    )
}

fn criterion_7() -> Outcome {
    let mut pk_worst: f64 = 0.0;
    for (la, mu) in [
        (10.0, 50.0),
        (0.3, 1.0),
        (99.0, 100.0),
        (1e-3, 7.0),
        (5e3, 1e4),
    ] {
        let t = pollaczek_khinchine(la, 1.0 / mu, 1.0 / (mu * mu)).unwrap();
        pk_worst = pk_worst.max((t * (mu - la) - 1.0).abs());
    }
    let ctx = pipeline(spec(6, 10.0, 2.0, 2.0), DensityPreset::Small, 3200.0, 40e6);
    let (model, _, delay) = ctx.delay().unwrap();
    let service = ServiceSampler::analytic(&model, 4000).unwrap();
    let trace = simulate_tandem_queue(&ctx.queue, &service, 1_000_000, 10_000, 77).unwrap();
    let des = trace.sojourn.iter().sum::<f64>() / trace.sojourn.len() as f64;
    let rel = (des / delay.end_to_end - 1.0).abs();
    outcome(
        pk_worst <= 1e-12 && rel <= 0.02,
        format!(
            "P-K vs M/M/1 max rel error {pk_worst:.1e}; DES mean sojourn {:.4} ms vs T1+T2 = {:.4} ms ({:.2}%)",
            des * 1e3,
            delay.end_to_end * 1e3,
            rel * 100.0
        ),
    )
}

fn criterion_8() -> Outcome {
    let mut lines = Vec::new();
    let mut pass = true;
    let mut seed = 900;
    for preset in [DensityPreset::Small, DensityPreset::High] {
        for (spacing, size) in [
            (5.0, 3200.0),
            (10.0, 3200.0),
            (15.0, 3200.0),
            (5.0, 10_000.0),
        ] {
            seed += 1;
            let s = spec(6, spacing, 2.0, 2.0);
            let ctx = pipeline(s.clone(), preset, size, 40e6);
            let tau = tau_for(&s, StabilityTarget::Both);
            let (model, _, delay) = match ctx.delay() {
                Ok(d) => d,
                Err(e) => {
                    lines.push(format!("{preset:?}/{spacing} m/{size} bit: {e}"));
                    continue;
                }
            };
            let bound = match reliability_lower_bound(delay.end_to_end, tau) {
                Ok(b) => b.value(),
                Err(_) => {
                    lines.push(format!(
                        "{preset:?}/{spacing} m/{size} bit: T >= tau, skipped"
                    ));
                    continue;
                }
            };
            let service = ServiceSampler::analytic(&model, 2000).unwrap();
            let trace = simulate_tandem_queue(&ctx.queue, &service, 100_000, 1_000, seed).unwrap();
            let emp = empirical_reliability(&trace.sojourn, tau);
            // Drive the baseline platoon, perturbed, with the sampled delays.
            let delays: Vec<f64> = trace.sojourn.iter().take(20_000).copied().collect();
            let mut sc = SimScenario::perturbed(
                &PlatoonSpec::default(),
                DelayModel::Samples(delays),
                2.0,
                1.0,
                seed,
            );
            sc.duration = 60.0;
            sc.time_step = sc
                .time_step
                .min(sc.delay_model.max_delay() / 20.0)
                .max(1e-5);
            let dde = simulate_platoon(&sc).map(|t| t.final_max_spacing_error());
            let ok = emp.value >= bound - emp.half_width;
            pass &= ok;
            lines.push(format!(
                "{preset:?}/{spacing} m/{size} bit: empirical {:.4} +/- {:.4} vs bound {bound:.4}{}",
                emp.value,
                emp.half_width,
                match dde {
                    Ok(e) => format!(", DDE final |delta| {e:.1e} m"),
                    Err(e) => format!(", DDE {e}"),
                }
            ));
        }
    }
    outcome(pass, lines.join("; "))
}

fn criterion_9() -> Outcome {
    let bx = GainBox::default();
    let s = PlatoonSpec::default();
    let opts = OptimizeOptions {
        method: DualMethod::Ellipsoid,
        oracle_grid: Some(200),
        ..OptimizeOptions::default()
    };
    let r = optimize_gains(&bx, &s, &opts).unwrap();
    let (_, _, oracle_tau) = grid_oracle(&bx, 200, &s, K).unwrap();
    let gains_ok = (r.a_star - 2.0).abs() < 1e-9 && (r.b_star - 2.0).abs() < 1e-9;
    let gap = (r.tau_star - oracle_tau).abs();

    let tau_opt = tau_for(&s.with_gains(r.a_star, r.b_star), StabilityTarget::Both);
    let tau_ref = tau_for(&s.with_gains(4.0, 2.0), StabilityTarget::Both);
    let mut best_bound = (0.0, 0.0);
    let mut best_approx = (0.0, 0.0);
    for spacing in (2..=40).map(f64::from) {
        let ctx = pipeline(
            spec(6, spacing, 2.0, 2.0),
            DensityPreset::Small,
            3200.0,
            40e6,
        );
        let (model, _, delay) = ctx.delay().unwrap();
        let lb =
            |tau: f64| reliability_lower_bound(delay.end_to_end, tau).map_or(0.0, |b| b.value());
        let gain = lb(tau_opt) - lb(tau_ref);
        if gain > best_bound.0 {
            best_bound = (gain, spacing);
        }
        let gain = reliability_approx(&model, tau_opt).unwrap()
            - reliability_approx(&model, tau_ref).unwrap();
        if gain > best_approx.0 {
            best_approx = (gain, spacing);
        }
    }
    let pass = gains_ok && gap <= 1e-3 && best_bound.0 >= 0.12;
    outcome(
        pass,
        format!(
            "(a*, b*) = ({:.4}, {:.4}), tau* = {:.5} s, 200x200 oracle {oracle_tau:.5} s (gap {gap:.1e}); \
             lower-bound gain over (4, 2) peaks at {:.1} pp (L = {} m); approx gain peaks at {:.1} pp (L = {} m)",
            r.a_star,
            r.b_star,
            r.tau_star,
            best_bound.0 * 100.0,
            best_bound.1,
            best_approx.0 * 100.0,
            best_approx.1
        ),
    )
}

fn criterion_10() -> Outcome {
    let mut lines = Vec::new();
    let mut pass = true;
    for preset in [DensityPreset::Small, DensityPreset::High] {
        let bounds: Vec<(usize, f64)> = (1..=12)
            .map(|m| {
                let s = spec(m, 10.0, 4.0, 2.0);
                let tau = tau_for(&s, StabilityTarget::Both);
                let ctx = pipeline(s, preset, 3200.0, 40e6);
                let lb = ctx
                    .delay()
                    .ok()
                    .and_then(|(_, _, d)| reliability_lower_bound(d.end_to_end, tau).ok())
                    .map_or(0.0, |b| b.value());
                (m, lb)
            })
            .collect();
        let holds_through_7 = bounds
            .iter()
            .filter(|(m, _)| *m <= 7)
            .all(|(_, lb)| *lb >= 0.9);
        let drops_after = bounds
            .iter()
            .filter(|(m, _)| *m > 7)
            .all(|(_, lb)| *lb < 0.9);
        let largest_ok = bounds
            .iter()
            .filter(|(_, lb)| *lb >= 0.9)
            .map(|(m, _)| *m)
            .max();
        pass &= holds_through_7 && drops_after;
        let listing: Vec<String> = bounds
            .iter()
            .map(|(m, lb)| format!("M={m}: {lb:.4}"))
            .collect();
        lines.push(format!(
            "{preset:?} (L = 10 m): largest M with bound >= 0.9 is {}; {}",
            largest_ok.map_or("none".to_string(), |m| m.to_string()),
            listing.join(", ")
        ));
    }
    lines.push("published reading is M < 7".to_string());
    outcome(pass, lines.join("; "))
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("string threshold exact", criterion_1),
        ("plant threshold band", criterion_2),
        ("delayed plant stability", criterion_3),
        ("string stability replication", criterion_4),
        ("CCDF oracle equivalence", criterion_5),
        ("reliability thresholds", criterion_6),
        ("queueing identities", criterion_7),
        ("bound validity", criterion_8),
        ("optimizer", criterion_9),
        ("follower-count guideline", criterion_10),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let o = check();
        if !o.pass {
            failed += 1;
        }
        println!(
            "criterion {:>2} {}: {} ({:.1} s) {}",
            i + 1,
            if o.pass { "PASS" } else { "FAIL" },
            name,
            start.elapsed().as_secs_f64(),
            o.detail
        );
    }
    println!("acceptance: {} of 10 criteria passed", 10 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
