use std::sync::OnceLock;

use backflow_core::capdesign::{
    objective, optimize, stationarity, survivals, DesignError, DesignResult, DesignSpec,
};
use backflow_core::capscatter::LayeredPotential;

fn run(spec: &DesignSpec, seed: u64) -> DesignResult {
    match optimize(spec, seed) {
        Ok(r) => r,
        Err(DesignError::TargetMissed(r)) => *r,
        Err(e) => panic!("{e}"),
    }
}

fn reference() -> &'static DesignResult {
    static R: OnceLock<DesignResult> = OnceLock::new();
    R.get_or_init(|| run(&DesignSpec::default(), 1))
}

#[test]
fn default_band_meets_target_on_fine_grid() {
    let r = reference();
    assert!(r.target_reached);
    assert!(r.max_check_survival < 1e-3, "{:e}", r.max_check_survival);
    assert!(r.potential.layers().iter().all(|v| v.im < 0.0));
    assert!(r.objective / 49.0 < 1e-3);
}

#[test]
fn stored_objective_recomputes() {
    let r = reference();
    let f = objective(&r.potential, &r.spec).unwrap();
    assert!((f - r.objective).abs() <= 1e-12 * r.objective);
    let back = LayeredPotential::from_interchange(&r.potential.to_interchange()).unwrap();
    let f2 = objective(&back, &r.spec).unwrap();
    assert!((f2 - r.objective).abs() <= 1e-12 * r.objective);
}

#[test]
fn check_grid_does_not_overshoot_training_grid() {
    let r = reference();
    let train = r.objective / r.spec.samples as f64;
    assert!(r.mean_check_survival <= 3.0 * train);
    let sum = &r.sum_optimum;
    let s = survivals(sum, &r.spec.check_momenta(), &r.spec.units).unwrap();
    let mean = s.iter().sum::<f64>() / s.len() as f64;
    assert!(mean <= 3.0 * r.sum_objective / r.spec.samples as f64);
}

#[test]
fn plain_sum_optimum_is_stationary() {
    let r = reference();
    let g = stationarity(&r.sum_optimum, &r.spec).unwrap();
    assert!(g < 1e-8, "{g:e}");
}

#[test]
fn same_seed_same_design() {
    let spec = DesignSpec {
        max_restarts: 4,
        reweight_rounds: 5,
        ..DesignSpec::default()
    };
    let a = run(&spec, 7);
    let b = run(&spec, 7);
    assert_eq!(a.potential.to_interchange(), b.potential.to_interchange());
    assert_eq!(a.report(), b.report());
}

#[test]
fn single_layer_is_worse() {
    let one = run(
        &DesignSpec {
            layers: 1,
            ..DesignSpec::default()
        },
        1,
    );
    assert!(!one.target_reached);
    assert!(one.sum_objective > reference().sum_objective);
}

#[test]
fn narrow_band_is_easier() {
    let r = run(
        &DesignSpec {
            band: (300.0, 310.0),
            max_restarts: 8,
            reweight_rounds: 0,
            ..DesignSpec::default()
        },
        1,
    );
    assert!(r.objective / 49.0 < 1e-5, "{:e}", r.objective / 49.0);
    assert!(r.objective / 49.0 <= reference().objective / 49.0);
}

#[test]
fn report_is_key_value() {
    let rep = reference().report();
    for line in rep.lines() {
        let (k, v) = line.split_once('=').expect("key=value");
        assert!(!k.is_empty() && !v.is_empty());
    }
    assert!(rep.contains("target_reached=true"));
}
