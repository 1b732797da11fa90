use backflow_core::specfun::{faddeeva_w, SpecFunError};
use num_complex::Complex64;

const GRID: &str = include_str!("data/faddeeva_grid.txt");

fn grid() -> Vec<(Complex64, Complex64)> {
    GRID.lines()
        .filter(|l| !l.starts_with('#') && !l.trim().is_empty())
        .map(|l| {
            let v: Vec<f64> = l.split_whitespace().map(|t| t.parse().unwrap()).collect();
            (Complex64::new(v[0], v[1]), Complex64::new(v[2], v[3]))
        })
        .collect()
}

#[test]
fn matches_extended_precision_grid() {
    let pts = grid();
    assert!(pts.len() > 2000);
    let mut worst = (0.0, Complex64::new(0.0, 0.0));
    for (z, w) in &pts {
        let got = faddeeva_w(*z).unwrap();
        let err = (got - w).norm() / w.norm();
        if err > worst.0 {
            worst = (err, *z);
        }
    }
    println!("worst relative error {:e} at {}", worst.0, worst.1);
    assert!(worst.0 <= 1e-12, "worst relative error {:e} at {}", worst.0, worst.1);
}

#[test]
fn overflow_is_signaled_below_grid() {
    for re in [-3.0, 0.0, 2.0] {
        let r = faddeeva_w(Complex64::new(re, -27.0));
        assert!(matches!(r, Err(SpecFunError::Overflow { .. })), "{re}: {r:?}");
    }
}
