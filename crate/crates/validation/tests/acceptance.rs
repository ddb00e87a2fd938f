//! One PASS/FAIL line per acceptance criterion. Exits 1 if any line fails.

use std::process::ExitCode;
use std::time::Instant;

use jumpmart::benes_harness::{
    entropy_identity_check, gronwall_margin, run_martingale_test, second_moment_check,
    single_thread_check, sweep, with_threads, Verdict,
};
use jumpmart::brownian_ref::refinement_ladder;
use jumpmart::config::Driver;
use jumpmart::girsanov::verify_girsanov;
use jumpmart::path_sim::simulate_path;
use jumpmart::report::results_csv_string;
use jumpmart::rng::path_stream;
use jumpmart::stoch_exp::{doleans_dade, stopped_exponential};
use jumpmart::{
    ControlSpec, ExperimentConfig, JumpKind, JumpMeasureSpec, JumpPath, Result, TiltedBatch,
};
use jumpmart_validation::{
    brute_force_running_sup, brute_force_sigma, constant_control_power_mean,
    constant_control_tilted_log, euler_exponential,
};
use rand::Rng;

const K: f64 = 4.0;
const PATHS: usize = 100_000;

struct Outcome {
    pass: bool,
    detail: String,
}

type Criterion<'a> = (&'static str, Box<dyn Fn() -> Result<Outcome> + 'a>);

fn outcome(pass: bool, detail: String) -> Result<Outcome> {
    Ok(Outcome { pass, detail })
}

fn unit_constant(a: f64) -> ExperimentConfig {
    ExperimentConfig::jump(JumpMeasureSpec::unit(1.0), ControlSpec::Constant { a }, 1.0)
        .with_paths(PATHS)
}

fn c1_martingale() -> Result<Outcome> {
    let started = Instant::now();
    let t = with_threads(1, || run_martingale_test(&unit_constant(0.5)))??;
    let secs = started.elapsed().as_secs_f64();
    let e = t.estimate;
    let expected_se = ((0.25f64.exp() - 1.0) / PATHS as f64).sqrt();
    outcome(
        e.within(1.0, K) && secs < 10.0,
        format!(
            "mean {:.6} stderr {:.3e} (expected {:.3e}) z {:+.2}, {:.2} s on one thread",
            e.mean,
            e.stderr,
            expected_se,
            e.z_score(1.0),
            secs
        ),
    )
}

fn c2_second_moment() -> Result<Outcome> {
    let m = second_moment_check(&unit_constant(0.5))?;
    let oracle = constant_control_power_mean(0.5, 1.0, 1.0, &[(1.0, 1.0)], 2.0);
    let closed =
        (m.closed_form - 0.25f64.exp()).abs() < 1e-14 && (oracle - m.closed_form).abs() < 1e-14;
    outcome(
        m.consistent && closed,
        format!(
            "mean {:.6} target {:.6} stderr {:.3e} z {:+.2}",
            m.estimate.mean, m.closed_form, m.estimate.stderr, m.z_score
        ),
    )
}

fn c3_benes_cells() -> Result<Outcome> {
    let mut cells = Vec::new();
    let mut pass = true;
    for (label, measure) in [
        ("unit", JumpMeasureSpec::unit(1.0)),
        ("exp", JumpMeasureSpec::exponential(1.0, 1.0)),
    ] {
        for c in [0.5, 1.0, 2.0] {
            let cfg = ExperimentConfig::jump(measure.clone(), ControlSpec::BenesSqrt { c }, 1.0)
                .with_paths(PATHS);
            let t = run_martingale_test(&cfg)?;
            pass &= t.verdict == Verdict::Consistent;
            cells.push(format!(
                "{label} c={c}: {} {:.4}±{:.4} (z {:+.2})",
                t.verdict,
                t.estimate.mean,
                t.estimate.stderr,
                t.estimate.z_score(1.0)
            ));
        }
    }
    outcome(pass, cells.join("; "))
}

fn girsanov_batch() -> Result<TiltedBatch> {
    let cfg = unit_constant(0.5);
    TiltedBatch::simulate(
        &JumpMeasureSpec::unit(1.0),
        &cfg.control,
        None,
        cfg.horizon,
        PATHS,
        cfg.seed,
        cfg.quad_step,
    )
}

fn c4_compensator(batch: &TiltedBatch) -> Result<Outcome> {
    let check = verify_girsanov(batch, &[1.0], K)?;
    let count = check.tilted_jump_count;
    let rows: Vec<String> = check
        .compensator
        .rows
        .iter()
        .map(|r| format!("{} z {:+.2}", r.name, r.z_score))
        .collect();
    outcome(
        count.within(1.5, K) && check.compensator.all_within(K),
        format!(
            "jump count {:.4}±{:.4} vs 1.5 (z {:+.2}); {}",
            count.mean,
            count.stderr,
            count.z_score(1.5),
            rows.join(", ")
        ),
    )
}

fn c5_tilted_martingale(batch: &TiltedBatch) -> Result<Outcome> {
    let check = verify_girsanov(batch, &[0.25, 0.5, 1.0], K)?;
    let mut pass = check.second_moment.len() == 3;
    let mut parts = Vec::new();
    for (m, q) in check.martingale.iter().zip(&check.second_moment) {
        pass &=
            m.estimate.within(0.0, K) && q.estimate.within(1.5 * q.t, K) && q.target == 1.5 * q.t;
        parts.push(format!(
            "t={}: drift z {:+.2}, second moment {:.4} vs {:.4} z {:+.2}",
            m.t, m.z_score, q.estimate.mean, q.target, q.z_score
        ));
    }
    outcome(pass, parts.join("; "))
}

fn c6_entropy() -> Result<Outcome> {
    let tilted_target = constant_control_tilted_log(0.5, 1.0, 1.0, &[(1.0, 1.0)]);
    let mut pass = (tilted_target - (-0.5 + 1.5 * 1.5f64.ln())).abs() < 1e-15;
    let mut parts = Vec::new();
    for (label, control) in [
        ("constant a=0.5", ControlSpec::Constant { a: 0.5 }),
        ("benes c=1", ControlSpec::BenesSqrt { c: 1.0 }),
    ] {
        let cfg = ExperimentConfig::jump(JumpMeasureSpec::unit(1.0), control, 1.0)
            .with_paths(PATHS)
            .with_stop_level(Some(100.0));
        let e = entropy_identity_check(&cfg)?;
        pass &= e.identity_holds;
        let mut line = format!(
            "{label}: psi {:.4} zlogz {:.4} gap z {:+.2}",
            e.psi_mean.mean,
            e.tilted_log.mean,
            e.identity_gap.z_score(0.0)
        );
        if let ControlSpec::Constant { .. } = control {
            pass &= e.tilted_log.within(tilted_target, K);
            line += &format!(
                " vs {tilted_target:.4} (z {:+.2})",
                e.tilted_log.z_score(tilted_target)
            );
        }
        parts.push(line);
    }
    outcome(pass, parts.join("; "))
}

fn random_pair(i: u64) -> Result<(JumpPath, ControlSpec)> {
    let mut rng = path_stream(7, i);
    let rate = rng.random_range(0.5..1.5);
    let spec = if i.is_multiple_of(2) {
        JumpMeasureSpec::unit(rate)
    } else {
        JumpMeasureSpec::exponential(rng.random_range(0.3..1.0), rate)
    };
    let control = match i % 4 {
        0 => ControlSpec::Constant {
            a: rng.random_range(0.0..1.0),
        },
        1 | 2 => ControlSpec::BenesSqrt {
            c: rng.random_range(0.0..1.0),
        },
        _ => ControlSpec::Power {
            c: rng.random_range(0.0..0.8),
            p: rng.random_range(0.3..1.0),
        },
    };
    Ok((simulate_path(&spec, 1.0, &mut rng, i)?, control))
}

fn c7_oracle() -> Result<Outcome> {
    let mut worst: f64 = 0.0;
    let mut worst_quad: f64 = 0.0;
    let (mut err_h, mut err_2h) = (0.0, 0.0);
    for i in 0..100 {
        let (path, control) = random_pair(i)?;
        let z = doleans_dade(&path, &control, 1e-5)?.terminal();
        let euler = |h: f64| {
            euler_exponential(
                path.jump_times(),
                path.jump_sizes(),
                path.drift_rate(),
                1.0,
                h,
                |s| control.alpha_from_sup(s),
            )
        };
        let (e1, e2) = (euler(1e-4), euler(2e-4));
        worst = worst.max(((e1 - z) / z).abs());
        err_h += (e1 - z).abs();
        err_2h += (e2 - z).abs();
        let coarse = doleans_dade(&path, &control, 1e-3)?.terminal();
        let fine = doleans_dade(&path, &control, 5e-4)?.terminal();
        worst_quad = worst_quad.max(((coarse - fine) / fine).abs());
    }
    let ratio = err_2h / err_h;
    outcome(
        worst < 1e-3 && (1.8..=2.2).contains(&ratio) && worst_quad < 1e-6,
        format!(
            "max relative gap {worst:.2e} at h=1e-4; error ratio 2h/h {ratio:.3}; quadrature step-halving gap {worst_quad:.2e}"
        ),
    )
}

fn c8_stopping() -> Result<Outcome> {
    let step = 1e-6;
    let measures = [
        JumpMeasureSpec::unit(2.0),
        JumpMeasureSpec::exponential(1.0, 3.0),
        JumpMeasureSpec::new(JumpKind::FixedAtoms(vec![(0.5, 1.0), (2.0, 1.0)]), 1.5),
        JumpMeasureSpec::new(
            JumpKind::ParetoSizes {
                scale: 0.5,
                shape: 4.0,
            },
            2.0,
        ),
    ];
    let mut stop_gap: f64 = 0.0;
    let mut sup_gap: f64 = 0.0;
    let mut sigma_gap: f64 = 0.0;
    for i in 0..100u64 {
        let spec = &measures[(i % 4) as usize];
        let path = simulate_path(spec, 1.0, &mut path_stream(60, i), i)?;
        let control = ControlSpec::BenesSqrt { c: 1.0 };
        let full = doleans_dade(&path, &control, 1e-3)?;
        let (times, sizes, drift) = (path.jump_times(), path.jump_sizes(), path.drift_rate());
        for n in [1.5, 3.0, 10.0] {
            let stop = path.sigma_n(n);
            let stopped = stopped_exponential(&path, &control, &stop, 1e-3)?;
            let want = full.value_at(stop.effective(1.0))?;
            stop_gap = stop_gap.max(((stopped.terminal() - want) / want).abs());

            let scan = brute_force_sigma(times, sizes, drift, 1.0, step, n);
            let gap = match (stop.value, scan) {
                (Some(s), Some(o)) => (o - s).abs(),
                (None, None) => 0.0,
                // a crossing in the last grid cell is seen by one side only
                (got, want) => 1.0 - got.or(want).unwrap_or(0.0),
            };
            sigma_gap = sigma_gap.max(gap);
        }
        for t in [0.37, 0.73, 1.0] {
            let got = path.running_sup_sq(t)?;
            let want = brute_force_running_sup(times, sizes, drift, t, step);
            sup_gap = sup_gap.max((got - want).abs() / want.max(1.0));
        }
    }
    outcome(
        stop_gap <= 1e-10 && sigma_gap <= 1e-6 + 1e-12 && sup_gap <= 1e-6,
        format!("stopped vs unstopped {stop_gap:.1e} rel; sigma vs 1e-6 grid {sigma_gap:.1e}; running sup {sup_gap:.1e}"),
    )
}

fn c9_gronwall() -> Result<Outcome> {
    let cfg = ExperimentConfig::jump(
        JumpMeasureSpec::unit(1.0),
        ControlSpec::BenesSqrt { c: 1.0 },
        1.0,
    )
    .with_paths(PATHS)
    .with_stop_level(Some(1e4));
    let g = gronwall_margin(&cfg)?;
    let k = &g.constants;
    outcome(
        g.ok,
        format!(
            "V {:.4}±{:.4} <= r e^(rT) = {:.4e} with m2 {} m3 {} c² {} k_free {} k_alpha {} r {} (sharper (k_free+k_alpha)T e^(k_alpha T) = {:.4e})",
            g.v_hat.mean, g.v_hat.stderr, k.bound, k.m2, k.m3, k.growth, k.k_free, k.k_alpha, k.r, k.sharp_bound
        ),
    )
}

fn c10_brownian() -> Result<Outcome> {
    let h = 2f64.powi(-10);
    let cfg = ExperimentConfig::new(
        Driver::Brownian { grid_step: h },
        ControlSpec::Constant { a: 1.0 },
        1.0,
    )
    .with_paths(10_000);
    let t = run_martingale_test(&cfg)?;
    let ladder = refinement_ladder(
        &ControlSpec::BenesSqrt { c: 1.0 },
        1.0,
        2f64.powi(-12),
        4,
        10_000,
        1,
    )?;
    let shrinks = ladder
        .windows(2)
        .all(|w| w[1].strong_error.mean < w[0].strong_error.mean);
    let rungs: Vec<String> = ladder
        .iter()
        .map(|l| format!("h=2^{} err {:.2e}", l.grid_step.log2(), l.strong_error.mean))
        .collect();
    outcome(
        t.verdict == Verdict::Consistent && shrinks,
        format!(
            "constant a=1: {:.4}±{:.4} (z {:+.2}); benes c=1 against h=2^-12: {}",
            t.estimate.mean,
            t.estimate.stderr,
            t.estimate.z_score(1.0),
            rungs.join(", ")
        ),
    )
}

fn c11_determinism() -> Result<Outcome> {
    let configs = vec![
        unit_constant(0.5).with_paths(20_000),
        ExperimentConfig::jump(
            JumpMeasureSpec::unit(1.0),
            ControlSpec::BenesSqrt { c: 1.0 },
            1.0,
        )
        .with_paths(20_000)
        .with_stop_level(Some(100.0)),
        ExperimentConfig::jump(
            JumpMeasureSpec::exponential(1.0, 1.0),
            ControlSpec::BenesSqrt { c: 0.5 },
            1.0,
        )
        .with_paths(20_000),
    ];
    let csv = |threads| -> Result<String> {
        results_csv_string(&with_threads(threads, || sweep(&configs))??, false)
    };
    let (a, b, serial) = (csv(4)?, csv(4)?, csv(1)?);
    let check = single_thread_check(&configs, 4)?;
    outcome(
        a == b && a == serial && check.ok,
        format!(
            "repeat run byte-identical: {}; serial csv byte-identical: {}; max relative difference {:e}",
            a == b,
            a == serial,
            check.max_relative_difference
        ),
    )
}

fn main() -> ExitCode {
    let batch = girsanov_batch();
    let criteria: Vec<Criterion> = vec![
        ("E z_T = 1 for a constant control", Box::new(c1_martingale)),
        ("E z_T² = e^(a² m2 T)", Box::new(c2_second_moment)),
        (
            "Benes square-root controls are martingales",
            Box::new(c3_benes_cells),
        ),
        (
            "tilted compensator",
            Box::new(|| c4_compensator(batch.as_ref().map_err(Clone::clone)?)),
        ),
        (
            "tilted drift and quadratic variation",
            Box::new(|| c5_tilted_martingale(batch.as_ref().map_err(Clone::clone)?)),
        ),
        ("entropy identity on stopped runs", Box::new(c6_entropy)),
        ("product formula vs Euler oracle", Box::new(c7_oracle)),
        ("stopping times and running sup", Box::new(c8_stopping)),
        ("Gronwall bound", Box::new(c9_gronwall)),
        ("Brownian reference", Box::new(c10_brownian)),
        ("determinism", Box::new(c11_determinism)),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let started = Instant::now();
        let (pass, detail) = match check() {
            Ok(o) => (o.pass, o.detail),
            Err(e) => (false, format!("error: {e}")),
        };
        failed += usize::from(!pass);
        println!(
            "{} criterion {:>2} {name} [{:.1} s]: {detail}",
            if pass { "PASS" } else { "FAIL" },
            i + 1,
            started.elapsed().as_secs_f64()
        );
    }
    println!(
        "acceptance: {} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
