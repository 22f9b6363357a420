use effect_ci::graphs::Density;
use effect_ci::sim::{replicate_table, run_experiment, run_experiment_with_threads, EffectMode, ExperimentSpec};
use effect_ci::Method;

fn spec(n: usize) -> ExperimentSpec {
    ExperimentSpec {
        d: 6,
        n,
        beta_mean: 0.5,
        reps: 200,
        seed: 21,
        ..ExperimentSpec::default()
    }
}

#[test]
fn lrt_width_shrinks_with_sample_size() {
    let widths: Vec<f64> = [100, 500, 1000]
        .into_iter()
        .map(|n| run_experiment(&spec(n)).unwrap().summary(Method::Lrt).unwrap().mean_width)
        .collect();
    // non-strict monotone with 10% Monte Carlo slack
    for w in widths.windows(2) {
        assert!(w[1] <= 1.1 * w[0], "widths {widths:?}");
    }
}

#[test]
fn dense_coverage() {
    let dense = ExperimentSpec {
        density: Density::Dense,
        ..spec(500)
    };
    let result = run_experiment(&dense).unwrap();
    let coverage = result.summary(Method::Lrt).unwrap().coverage;
    assert!(coverage >= 0.92, "coverage {coverage}");
    for s in &result.summaries {
        assert!((0.0..=1.0).contains(&s.coverage) && (0.0..=1.0).contains(&s.zero_rate));
        assert!(s.mean_width >= 0.0);
    }
}

#[test]
fn no_effect_zero_inclusion_all_methods() {
    let none = ExperimentSpec {
        reps: 100,
        methods: vec![Method::Lrt, Method::Slrt, Method::Bootstrap],
        effect_mode: EffectMode::NoEffect,
        ..spec(500)
    };
    let result = run_experiment(&none).unwrap();
    for s in &result.summaries {
        assert!(s.zero_rate >= 0.97, "{}: {}", s.method, s.zero_rate);
    }
}

#[test]
fn zero_variance_spread_reproduces_equal_variance_run() {
    let base = ExperimentSpec {
        reps: 20,
        methods: vec![Method::Lrt, Method::Slrt],
        ..spec(200)
    };
    let a = run_experiment(&base).unwrap();
    let b = run_experiment_with_threads(
        &ExperimentSpec {
            variance_spread: 0.0,
            ..base.clone()
        },
        3,
    )
    .unwrap();
    assert_eq!(replicate_table(&a), replicate_table(&b));
}

#[test]
fn unequal_variances_still_run() {
    let spread = ExperimentSpec {
        reps: 30,
        variance_spread: 1.8,
        ..spec(500)
    };
    let result = run_experiment(&spread).unwrap();
    assert_eq!(result.records.len(), 30);
    assert_eq!(result.summary(Method::Lrt).unwrap().failures, 0);
}

/// Long-running d = 12 run; opt in with `cargo test --test simulation -- --ignored`.
#[test]
#[ignore]
fn twelve_node_lrt_run() {
    let big = ExperimentSpec {
        d: 12,
        n: 1000,
        reps: 20,
        ..spec(1000)
    };
    let result = run_experiment(&big).unwrap();
    print!("{}", effect_ci::sim::summary_lines(&result));
}
