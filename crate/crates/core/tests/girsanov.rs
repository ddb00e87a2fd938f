//! Tilted-measure checks on simulated batches.

use jumpmart::girsanov::{
    default_test_functions, verify_compensator, verify_girsanov, TestFunction, TestShape,
    TiltedBatch,
};
use jumpmart::jump_measure::{JumpKind, JumpMeasureSpec};
use jumpmart::stoch_exp::ControlSpec;

const K: f64 = 4.0;

fn atoms() -> Vec<(f64, f64)> {
    vec![(0.5, 0.5), (2.0, 0.5)]
}

#[test]
fn constant_control_with_atoms() {
    let (rate, a) = (1.5, 0.6);
    let measure = JumpMeasureSpec::new(JumpKind::FixedAtoms(atoms()), rate);
    let batch = TiltedBatch::simulate(
        &measure,
        &ControlSpec::Constant { a },
        None,
        1.0,
        40_000,
        21,
        1e-3,
    )
    .unwrap();
    let check = verify_girsanov(&batch, &[0.5, 1.0], K).unwrap();
    assert!(check.consistent, "{check:#?}");

    // tilted intensity of jumps above q on (lo, hi]: Σ λ w (1 + a z) 1{z > q} · (hi − lo)
    let window = |q: f64, lo: f64, hi: f64| -> f64 {
        atoms()
            .iter()
            .filter(|&&(z, _)| z > q)
            .map(|&(z, w)| rate * w * (1.0 + a * z))
            .sum::<f64>()
            * (hi - lo)
    };
    let tests = [
        TestFunction::new("big-late", TestShape::Indicator { q: 1.0 }).windowed(0.5, 1.0),
        TestFunction::new("all-early", TestShape::Indicator { q: 0.1 }).windowed(0.0, 0.25),
    ];
    let report = verify_compensator(&batch, &tests).unwrap();
    let targets = [window(1.0, 0.5, 1.0), window(0.1, 0.0, 0.25)];
    for (row, target) in report.rows.iter().zip(targets) {
        assert!(
            row.lhs.within(target, K),
            "{}: {:?} vs {target}",
            row.name,
            row.lhs
        );
        assert!(
            (row.rhs.mean - target).abs() <= K * row.rhs.stderr + 1e-12,
            "{}",
            row.name
        );
    }
    let expected_count = (rate + a * 1.25 * rate) * 1.0;
    assert!((check.tilted_jump_count_closed_form.unwrap() - expected_count).abs() < 1e-12);
}

#[test]
fn benes_control_stopped_and_unstopped() {
    // unstopped weights on exponential sizes are too heavy-tailed for a 4σ check
    for (measure, c, stops) in [
        (JumpMeasureSpec::unit(1.0), 0.5, vec![Some(10.0), None]),
        (
            JumpMeasureSpec::exponential(1.0, 1.0),
            0.3,
            vec![Some(10.0)],
        ),
    ] {
        for stop in stops {
            let batch = TiltedBatch::simulate(
                &measure,
                &ControlSpec::BenesSqrt { c },
                stop,
                1.0,
                20_000,
                22,
                1e-3,
            )
            .unwrap();
            let check = verify_girsanov(&batch, &[0.25, 0.5, 1.0], K).unwrap();
            assert!(
                check.consistent,
                "c={c} stop={stop:?}: {:#?}",
                check.compensator.rows
            );
            assert!(check.second_moment.is_empty());
            assert!(check.tilted_jump_count_closed_form.is_none());
        }
    }
}

#[test]
fn exponential_sizes_default_suite() {
    let measure = JumpMeasureSpec::exponential(0.8, 2.0);
    let suite = default_test_functions(&measure);
    let batch = TiltedBatch::simulate(
        &measure,
        &ControlSpec::Constant { a: 0.4 },
        None,
        1.0,
        20_000,
        23,
        1e-3,
    )
    .unwrap();
    let report = verify_compensator(&batch, &suite).unwrap();
    assert_eq!(report.rows.len(), suite.len());
    assert!(report.all_within(K), "max |z| = {}", report.max_abs_z());
}

#[test]
fn residuals_shrink_with_more_paths() {
    let measure = JumpMeasureSpec::unit(1.0);
    let se = |n| {
        let b = TiltedBatch::simulate(
            &measure,
            &ControlSpec::BenesSqrt { c: 0.5 },
            Some(10.0),
            1.0,
            n,
            24,
            1e-3,
        )
        .unwrap();
        verify_girsanov(&b, &[1.0], K).unwrap().martingale[0]
            .estimate
            .stderr
    };
    let (small, big) = (se(2_000), se(32_000));
    // stderr scales like n^{-1/2}: a factor of 4 here
    assert!((2.5..6.0).contains(&(small / big)), "{small} vs {big}");
}

#[test]
fn paths_reused_from_another_batch() {
    let measure = JumpMeasureSpec::unit(1.0);
    let control = ControlSpec::BenesSqrt { c: 1.0 };
    let a = TiltedBatch::simulate(&measure, &control, Some(10.0), 1.0, 500, 25, 1e-3).unwrap();
    let paths = a.samples.iter().map(|s| s.path.clone()).collect();
    let b = TiltedBatch::from_paths(paths, &measure, &control, Some(10.0), 1e-3, 25).unwrap();
    assert_eq!(a.weights(), b.weights());
    assert!(TiltedBatch::from_paths(Vec::new(), &measure, &control, None, 1e-3, 0).is_err());
}
