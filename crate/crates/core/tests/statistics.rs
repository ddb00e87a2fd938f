//! Monte Carlo checks against closed forms. Every assertion is at 4 standard errors.

use jumpmart::benes_harness::{
    entropy_identity_check, gronwall_margin, gronwall_profile, run_experiment, run_martingale_test,
    second_moment_check, Verdict,
};
use jumpmart::brownian_ref::{bm_drift_residual, refinement_ladder, simulate_bm, BrownianPath};
use jumpmart::config::{Driver, ExperimentConfig};
use jumpmart::jump_measure::{JumpKind, JumpMeasureSpec};
use jumpmart::path_sim::simulate_path;
use jumpmart::rng::path_stream;
use jumpmart::stats::McEstimate;
use jumpmart::stoch_exp::ControlSpec;
use jumpmart_validation::{constant_control_power_mean, constant_control_tilted_log, poisson_pmf};

const K: f64 = 4.0;

fn atoms() -> Vec<(f64, f64)> {
    vec![(0.5, 0.25), (1.0, 0.5), (3.0, 0.25)]
}

fn atomic(rate: f64) -> JumpMeasureSpec<f64> {
    JumpMeasureSpec::new(JumpKind::FixedAtoms(atoms()), rate)
}

#[test]
fn jump_counts_are_poisson() {
    let spec = JumpMeasureSpec::exponential(1.0, 2.5);
    let n = 20_000;
    let mut counts = [0usize; 20];
    for i in 0..n {
        let p = simulate_path(&spec, 1.0, &mut path_stream(3, i), i).unwrap();
        counts[p.jump_count().min(19)] += 1;
    }
    for (k, &p) in poisson_pmf(2.5, 8).iter().enumerate() {
        let freq = counts[k] as f64 / n as f64;
        let se = (p * (1.0 - p) / n as f64).sqrt();
        assert!((freq - p).abs() <= K * se, "k={k}: {freq} vs {p}");
    }
}

#[test]
fn constant_control_moments_with_atoms() {
    let cfg = ExperimentConfig::jump(atomic(1.5), ControlSpec::Constant { a: 0.3 }, 1.0)
        .with_paths(40_000);
    let t = run_martingale_test(&cfg).unwrap();
    assert_eq!(t.verdict, Verdict::Consistent);
    let m = second_moment_check(&cfg).unwrap();
    let want = constant_control_power_mean(0.3, 1.5, 1.0, &atoms(), 2.0);
    assert!((m.closed_form - want).abs() < 1e-12 * want);
    assert!(m.consistent, "{} vs {}", m.estimate.mean, want);
}

#[test]
fn second_moment_at_higher_rate() {
    // a = 1, λ = 2 unit jumps, T = 0.5 gives e
    let cfg = ExperimentConfig::jump(
        JumpMeasureSpec::unit(2.0),
        ControlSpec::Constant { a: 1.0 },
        0.5,
    )
    .with_paths(40_000);
    let m = second_moment_check(&cfg).unwrap();
    assert!((m.closed_form - std::f64::consts::E).abs() < 1e-14);
    assert!(m.consistent, "{:?}", m.estimate);
}

#[test]
fn tilted_log_with_atoms() {
    let cfg = ExperimentConfig::jump(atomic(1.0), ControlSpec::Constant { a: 0.5 }, 1.0)
        .with_paths(40_000)
        .with_stop_level(Some(1e6));
    let e = entropy_identity_check(&cfg).unwrap();
    let want = constant_control_tilted_log(0.5, 1.0, 1.0, &atoms());
    assert!(e.tilted_log.within(want, K), "{:?} vs {want}", e.tilted_log);
    assert!(e.identity_holds);
    assert!(e.bound_holds);
}

#[test]
fn benes_with_exponential_sizes_small_c() {
    let cfg = ExperimentConfig::jump(
        JumpMeasureSpec::exponential(0.5, 1.0),
        ControlSpec::BenesSqrt { c: 0.5 },
        1.0,
    )
    .with_paths(40_000);
    assert_eq!(
        run_martingale_test(&cfg).unwrap().verdict,
        Verdict::Consistent
    );
}

#[test]
fn stop_levels_stay_near_one() {
    let base = ExperimentConfig::jump(
        JumpMeasureSpec::unit(1.0),
        ControlSpec::BenesSqrt { c: 1.0 },
        1.0,
    )
    .with_paths(40_000);
    for n in [10.0, 100.0, 1000.0] {
        let t = run_martingale_test(&base.clone().with_stop_level(Some(n))).unwrap();
        assert_eq!(t.verdict, Verdict::Consistent, "n={n}: {:?}", t.estimate);
    }
}

#[test]
fn supermartingale_bound_for_violators() {
    for p in [1.5, 2.0, 3.0] {
        let cfg = ExperimentConfig::jump(
            JumpMeasureSpec::unit(1.0),
            ControlSpec::Power { c: 1.0, p },
            1.0,
        )
        .with_paths(20_000);
        let r = run_experiment(&cfg, 0).unwrap();
        let e = r.martingale.estimate;
        assert!(r.martingale.exploratory);
        assert!(e.mean <= 1.0 + K * e.stderr, "p={p}: {e:?}");
        let tails: Vec<f64> = r.diagnostics.tail_mass.iter().map(|t| t.mass).collect();
        assert!(tails.windows(2).all(|w| w[1] <= w[0]));
        assert!(r.diagnostics.entropy.psi_mean.mean >= -K * r.diagnostics.entropy.psi_mean.stderr);
    }
}

#[test]
fn gronwall_bound_and_profile() {
    let cfg: ExperimentConfig<f64> = ExperimentConfig::jump(
        JumpMeasureSpec::unit(1.0),
        ControlSpec::BenesSqrt { c: 1.0 },
        1.0,
    )
    .with_paths(20_000)
    .with_stop_level(Some(1e4));
    let g = gronwall_margin(&cfg).unwrap();
    assert!(g.ok);
    assert_eq!(g.constants.r, 18.0);
    let profile = gronwall_profile(&cfg, &[0.25, 0.5, 0.75, 1.0]).unwrap();
    assert!(profile.windows(2).all(|w| w[1].mean >= w[0].mean));
    assert!((profile[3].mean - g.v_hat.mean).abs() <= 1e-9 * g.v_hat.mean);

    // without a control V is the plain E sup M², at most 4 m2 T by Doob
    let zero = ExperimentConfig::jump(JumpMeasureSpec::unit(1.0), ControlSpec::Zero, 1.0)
        .with_paths(20_000);
    let g0 = gronwall_margin(&zero).unwrap();
    assert!(g0.v_hat.mean <= 4.0 + K * g0.v_hat.stderr);
    assert_eq!(g0.constants.k_alpha, 0.0);
}

fn bm_batch(n: u64, horizon: f64, h: f64, seed: u64) -> Vec<BrownianPath<f64>> {
    (0..n)
        .map(|i| simulate_bm(horizon, h, &mut path_stream(seed, i)).unwrap())
        .collect()
}

#[test]
fn brownian_marginals() {
    let paths = bm_batch(10_000, 2.0, 1.0 / 64.0, 5);
    let terminal: Vec<f64> = paths.iter().map(|p| p.terminal()).collect();
    let mean = McEstimate::from_samples(&terminal, 5).unwrap();
    assert!(mean.within(0.0, K));
    let sq: Vec<f64> = terminal.iter().map(|b| b * b).collect();
    assert!(McEstimate::from_samples(&sq, 5).unwrap().within(2.0, K));
    let incs: Vec<f64> = paths[0].increments().collect();
    assert_eq!(incs.len(), 128);

    let sup = |horizon| {
        let s: Vec<f64> = bm_batch(4000, horizon, 1.0 / 64.0, 6)
            .iter()
            .map(|p| p.sup_sq())
            .collect();
        McEstimate::from_samples(&s, 6).unwrap()
    };
    let (s1, s2) = (sup(1.0), sup(2.0));
    assert!(s1.mean < s2.mean);
    assert!(s2.mean <= 8.0 + K * s2.stderr);
}

#[test]
fn brownian_girsanov_shift() {
    let paths = bm_batch(10_000, 1.0, 1.0 / 256.0, 9);
    let zero = bm_drift_residual(&paths, &ControlSpec::Zero, 9).unwrap();
    assert!(zero.within(0.0, K));
    // Ẽ B_T = a T for constant a
    let a = 0.8;
    let shifted: Vec<f64> = paths
        .iter()
        .map(|p| {
            let (z, _) = jumpmart::brownian_ref::bm_drift_check(p, &ControlSpec::Constant { a });
            z * p.terminal()
        })
        .collect();
    assert!(McEstimate::from_samples(&shifted, 9).unwrap().within(a, K));
    let benes = bm_drift_residual(&paths, &ControlSpec::BenesSqrt { c: 1.0 }, 9).unwrap();
    assert!(benes.within(0.0, K), "{benes:?}");
}

#[test]
fn brownian_constant_control_has_no_bias() {
    for h in [1.0 / 16.0, 1.0 / 256.0] {
        let cfg = ExperimentConfig::new(
            Driver::Brownian { grid_step: h },
            ControlSpec::Constant { a: 1.0 },
            1.0,
        )
        .with_paths(10_000);
        assert_eq!(
            run_martingale_test(&cfg).unwrap().verdict,
            Verdict::Consistent,
            "h={h}"
        );
        let m = second_moment_check(&cfg).unwrap();
        assert!(m.consistent, "h={h}: {:?}", m.estimate);
    }
}

#[test]
fn brownian_benes_refinement() {
    let ladder = refinement_ladder(
        &ControlSpec::BenesSqrt { c: 1.0 },
        1.0,
        1.0 / 1024.0,
        3,
        4000,
        11,
    )
    .unwrap();
    assert!(ladder
        .windows(2)
        .all(|w| w[1].strong_error.mean < w[0].strong_error.mean));
    for level in &ladder {
        assert!(level.mean_z.within(1.0, K));
    }
}
