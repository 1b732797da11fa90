//! Optimal layered absorbers: choose the layer energies `V_j` so that plane
//! waves in a momentum band neither reflect nor transmit.
//!
//! Layers are parametrized as `Re V_j = E_2 x_j`, `Im V_j = -exp(u_j)` with
//! `E_2 = p_2^2 / 2m`, which keeps every layer strictly absorbing.

use std::fmt::Write as _;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::capscatter::{solve_scatter, survival_gradient, LayeredPotential, ScatterError};
use crate::wavepacket::Units;

type C = Complex64;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DesignError {
    #[error("invalid design spec: {0}")]
    InvalidSpec(String),
    #[error("no restart reached the target: best max survival {:e} on the check grid, target {:e}", .0.max_check_survival, .0.target)]
    TargetMissed(Box<DesignResult>),
    #[error(transparent)]
    Scatter(#[from] ScatterError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DesignSpec {
    pub width: f64,
    pub layers: usize,
    pub band: (f64, f64),
    /// Training momenta, evenly spaced over the band including both ends.
    pub samples: usize,
    pub max_restarts: usize,
    /// Relative gradient tolerance for the local minimizer.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Goal for the largest survival on the check grid.
    pub target: f64,
    /// Check grid is this many times finer than the training grid.
    pub check_factor: usize,
    /// Reweighting rounds after the plain-sum minimization; 0 disables.
    pub reweight_rounds: usize,
    pub reweight_exponent: f64,
    pub units: Units,
}

impl Default for DesignSpec {
    fn default() -> Self {
        Self {
            width: 0.01,
            layers: 4,
            band: (260.0, 740.0),
            samples: 49,
            max_restarts: 20,
            tolerance: 1e-10,
            max_iterations: 500,
            target: 1e-3,
            check_factor: 10,
            reweight_rounds: 60,
            reweight_exponent: 0.5,
            units: Units::ATOMIC,
        }
    }
}

impl DesignSpec {
    pub fn validate(&self) -> Result<(), DesignError> {
        let bad = |m: &str| Err(DesignError::InvalidSpec(m.into()));
        let (p1, p2) = self.band;
        if !(self.width.is_finite() && self.width > 0.0) {
            return bad("width must be positive");
        }
        if self.layers == 0 {
            return bad("at least one layer");
        }
        if !(p1 > 0.0 && p2 > p1 && p2.is_finite()) {
            return bad("band must satisfy 0 < p1 < p2");
        }
        if self.samples < 2 {
            return bad("at least two samples");
        }
        if self.max_restarts == 0 {
            return bad("at least one restart");
        }
        if self.check_factor == 0 {
            return bad("check factor must be positive");
        }
        if !(self.tolerance > 0.0 && self.target > 0.0) {
            return bad("tolerance and target must be positive");
        }
        Ok(())
    }

    pub fn training_momenta(&self) -> Vec<f64> {
        linspace(self.band, self.samples)
    }

    pub fn check_momenta(&self) -> Vec<f64> {
        linspace(self.band, (self.samples - 1) * self.check_factor + 1)
    }

    fn energy_scale(&self) -> f64 {
        self.band.1 * self.band.1 / (2.0 * self.units.mass)
    }

    fn potential_from(&self, x: &[f64]) -> Option<LayeredPotential> {
        let n = self.layers;
        if x.iter().any(|v| !v.is_finite() || v.abs() > 60.0) {
            return None;
        }
        let e2 = self.energy_scale();
        let layers = (0..n)
            .map(|j| C::new(e2 * x[j], -x[n + j].exp()))
            .collect();
        LayeredPotential::new(self.width, layers).ok()
    }

    fn params_from(&self, pot: &LayeredPotential) -> Vec<f64> {
        let e2 = self.energy_scale();
        let mut x: Vec<f64> = pot.layers().iter().map(|v| v.re / e2).collect();
        x.extend(pot.layers().iter().map(|v| (-v.im).max(1e-300).ln()));
        x
    }
}

fn linspace((a, b): (f64, f64), n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| a + (b - a) * i as f64 / (n - 1) as f64)
        .collect()
}

/// `sum_alpha S(p_alpha)` over the training momenta.
pub fn objective(pot: &LayeredPotential, spec: &DesignSpec) -> Result<f64, ScatterError> {
    survivals(pot, &spec.training_momenta(), &spec.units).map(|s| s.iter().sum())
}

/// `(df/dRe V_j, df/dIm V_j)` packed as `Re + i Im`.
pub fn gradient(pot: &LayeredPotential, spec: &DesignSpec) -> Result<Vec<C>, ScatterError> {
    let w = vec![1.0; spec.samples];
    weighted(pot, &spec.training_momenta(), &w, &spec.units).map(|(_, g)| g)
}

pub fn survivals(
    pot: &LayeredPotential,
    momenta: &[f64],
    units: &Units,
) -> Result<Vec<f64>, ScatterError> {
    momenta
        .par_iter()
        .map(|&p| solve_scatter(pot, p, units).map(|s| s.survival))
        .collect()
}

fn weighted(
    pot: &LayeredPotential,
    momenta: &[f64],
    weights: &[f64],
    units: &Units,
) -> Result<(f64, Vec<C>), ScatterError> {
    let parts: Vec<(f64, Vec<C>)> = momenta
        .par_iter()
        .map(|&p| survival_gradient(pot, p, units))
        .collect::<Result<_, _>>()?;
    let mut f = 0.0;
    let mut g = vec![C::new(0.0, 0.0); pot.len()];
    for ((s, gs), w) in parts.iter().zip(weights) {
        f += w * s;
        for (a, b) in g.iter_mut().zip(gs) {
            *a += w * b;
        }
    }
    Ok((f, g))
}

/// Outcome of one local minimization.
#[derive(Debug, Clone, PartialEq)]
pub struct RestartStat {
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DesignResult {
    pub potential: LayeredPotential,
    /// Plain `sum S` on the training grid.
    pub objective: f64,
    pub max_check_survival: f64,
    pub mean_check_survival: f64,
    pub target: f64,
    pub target_reached: bool,
    /// Minimizer of the plain sum before reweighting.
    pub sum_optimum: LayeredPotential,
    pub sum_objective: f64,
    pub restarts: Vec<RestartStat>,
    pub reweight_rounds: usize,
    pub seed: u64,
    pub spec: DesignSpec,
}

impl DesignResult {
    /// Line-oriented `key=value` record.
    pub fn report(&self) -> String {
        let s = &self.spec;
        let mut out = String::new();
        let mut kv = |k: &str, v: String| writeln!(out, "{k}={v}").unwrap();
        kv("width", format!("{:.17e}", s.width));
        kv("layers", s.layers.to_string());
        kv("band.p1", format!("{:.17e}", s.band.0));
        kv("band.p2", format!("{:.17e}", s.band.1));
        kv("samples", s.samples.to_string());
        kv("check_points", s.check_momenta().len().to_string());
        kv("seed", self.seed.to_string());
        kv("restarts", self.restarts.len().to_string());
        kv(
            "restarts_converged",
            self.restarts.iter().filter(|r| r.converged).count().to_string(),
        );
        kv("reweight_rounds", self.reweight_rounds.to_string());
        kv("objective", format!("{:.17e}", self.objective));
        kv(
            "objective_per_sample",
            format!("{:.17e}", self.objective / s.samples as f64),
        );
        kv("sum_objective", format!("{:.17e}", self.sum_objective));
        kv("max_check_survival", format!("{:.17e}", self.max_check_survival));
        kv("mean_check_survival", format!("{:.17e}", self.mean_check_survival));
        kv("target", format!("{:.17e}", self.target));
        kv("target_reached", self.target_reached.to_string());
        for (j, v) in self.potential.layers().iter().enumerate() {
            kv(&format!("V{j}"), format!("{:.17e} {:.17e}", v.re, v.im));
        }
        out
    }
}

struct Local {
    x: Vec<f64>,
    f: f64,
    iterations: usize,
    converged: bool,
}

// f and gradient in the (x, u) parametrization
fn eval_params(
    spec: &DesignSpec,
    momenta: &[f64],
    weights: &[f64],
    x: &[f64],
) -> Option<(f64, Vec<f64>)> {
    let pot = spec.potential_from(x)?;
    let (f, g) = weighted(&pot, momenta, weights, &spec.units).ok()?;
    if !f.is_finite() {
        return None;
    }
    let n = spec.layers;
    let e2 = spec.energy_scale();
    let mut grad = vec![0.0; 2 * n];
    for j in 0..n {
        grad[j] = g[j].re * e2;
        grad[n + j] = -g[j].im * x[n + j].exp();
    }
    if grad.iter().any(|v| !v.is_finite()) {
        return None;
    }
    Some((f, grad))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// BFGS with Armijo backtracking.
fn bfgs(spec: &DesignSpec, momenta: &[f64], weights: &[f64], x0: Vec<f64>) -> Option<Local> {
    let n = x0.len();
    let mut x = x0;
    let (mut f, mut g) = eval_params(spec, momenta, weights, &x)?;
    let mut h = identity(n);
    let mut stalled = 0;
    for it in 0..spec.max_iterations {
        let gnorm = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if gnorm < spec.tolerance * f.max(1.0) {
            return Some(Local {
                x,
                f,
                iterations: it,
                converged: true,
            });
        }
        let mut d: Vec<f64> = (0..n).map(|i| -dot(&h[i], &g)).collect();
        let mut slope = dot(&d, &g);
        if slope >= 0.0 {
            h = identity(n);
            d = g.iter().map(|v| -v).collect();
            slope = dot(&d, &g);
        }
        // keep steps in parameter space moderate
        let dmax = d.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let mut step = if dmax > 2.0 { 2.0 / dmax } else { 1.0 };
        let mut accepted = None;
        for _ in 0..60 {
            let xn: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + step * b).collect();
            if let Some((fnew, gnew)) = eval_params(spec, momenta, weights, &xn) {
                if fnew <= f + 1e-4 * step * slope {
                    accepted = Some((xn, fnew, gnew));
                    break;
                }
            }
            step *= 0.5;
        }
        let Some((xn, fnew, gnew)) = accepted else {
            return Some(Local {
                x,
                f,
                iterations: it,
                converged: false,
            });
        };
        // steps that no longer lower f (pinned against the parameter box or
        // at round-off level) end the run
        if f - fnew <= 1e-15 * f.abs() {
            stalled += 1;
            if stalled >= 5 {
                return Some(Local {
                    x: xn,
                    f: fnew,
                    iterations: it + 1,
                    converged: false,
                });
            }
        } else {
            stalled = 0;
        }
        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gnew.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-300 {
            if it == 0 {
                let scale = sy / dot(&y, &y);
                h = identity(n);
                for (i, row) in h.iter_mut().enumerate() {
                    row[i] = scale;
                }
            }
            let hy: Vec<f64> = (0..n).map(|i| dot(&h[i], &y)).collect();
            let yhy = dot(&y, &hy);
            let rho = 1.0 / sy;
            for i in 0..n {
                for j in 0..n {
                    h[i][j] += (1.0 + rho * yhy) * rho * s[i] * s[j]
                        - rho * (hy[i] * s[j] + s[i] * hy[j]);
                }
            }
        }
        x = xn;
        f = fnew;
        g = gnew;
    }
    Some(Local {
        x,
        f,
        iterations: spec.max_iterations,
        converged: false,
    })
}

fn identity(n: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect()
}

/// Seeded multi-start minimization of `sum S`, followed by rounds of
/// `w <- w (S / mean S)^gamma` reweighting to flatten the survival over the
/// band. The returned design is the iterate with the lowest check-grid
/// maximum.
pub fn optimize(spec: &DesignSpec, seed: u64) -> Result<DesignResult, DesignError> {
    spec.validate()?;
    let n = spec.layers;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (ulo, uhi) = (1e2f64.ln(), 1e6f64.ln());
    let starts: Vec<Vec<f64>> = (0..spec.max_restarts)
        .map(|_| {
            let mut x: Vec<f64> = (0..n).map(|_| rng.gen_range(-0.5..0.5)).collect();
            x.extend((0..n).map(|_| rng.gen_range(ulo..uhi)));
            x
        })
        .collect();
    let momenta = spec.training_momenta();
    let ones = vec![1.0; momenta.len()];
    let locals: Vec<Option<Local>> = starts
        .into_par_iter()
        .map(|x0| bfgs(spec, &momenta, &ones, x0))
        .collect();
    let restarts = locals
        .iter()
        .map(|l| match l {
            Some(l) => RestartStat {
                objective: l.f,
                iterations: l.iterations,
                converged: l.converged,
            },
            None => RestartStat {
                objective: f64::INFINITY,
                iterations: 0,
                converged: false,
            },
        })
        .collect();
    let best = locals
        .into_iter()
        .flatten()
        .min_by(|a, b| a.f.total_cmp(&b.f))
        .ok_or_else(|| DesignError::InvalidSpec("every start was infeasible".into()))?;
    let check = spec.check_momenta();
    let sum_optimum = spec.potential_from(&best.x).expect("feasible optimum");
    let sum_objective = best.f;

    let check_max = |pot: &LayeredPotential| -> Result<f64, ScatterError> {
        Ok(survivals(pot, &check, &spec.units)?
            .into_iter()
            .fold(0.0, f64::max))
    };
    let mut chosen = (check_max(&sum_optimum)?, best.x.clone());
    let mut x = best.x;
    let mut w = ones.clone();
    for _ in 0..spec.reweight_rounds {
        let pot = spec.potential_from(&x).expect("feasible iterate");
        let s = survivals(&pot, &momenta, &spec.units)?;
        let mean = s.iter().sum::<f64>() / s.len() as f64;
        for (wi, si) in w.iter_mut().zip(&s) {
            *wi *= (si / mean).powf(spec.reweight_exponent);
        }
        let wmean = w.iter().sum::<f64>() / w.len() as f64;
        w.iter_mut().for_each(|v| *v /= wmean);
        let Some(l) = bfgs(spec, &momenta, &w, x.clone()) else {
            break;
        };
        x = l.x;
        let m = check_max(&spec.potential_from(&x).expect("feasible iterate"))?;
        if m < chosen.0 {
            chosen = (m, x.clone());
        }
    }
    let potential = spec.potential_from(&chosen.1).expect("feasible design");
    let cs = survivals(&potential, &check, &spec.units)?;
    let result = DesignResult {
        objective: objective(&potential, spec)?,
        max_check_survival: cs.iter().copied().fold(0.0, f64::max),
        mean_check_survival: cs.iter().sum::<f64>() / cs.len() as f64,
        target: spec.target,
        target_reached: chosen.0 < spec.target,
        potential,
        sum_optimum,
        sum_objective,
        restarts,
        reweight_rounds: spec.reweight_rounds,
        seed,
        spec: spec.clone(),
    };
    if result.target_reached {
        Ok(result)
    } else {
        Err(DesignError::TargetMissed(Box::new(result)))
    }
}

/// Largest component of the plain-sum gradient in the optimizer's
/// parameters; zero at an unconstrained stationary point.
pub fn stationarity(pot: &LayeredPotential, spec: &DesignSpec) -> Option<f64> {
    let x = spec.params_from(pot);
    let ones = vec![1.0; spec.samples];
    let (_, g) = eval_params(spec, &spec.training_momenta(), &ones, &x)?;
    Some(g.iter().fold(0.0, |m, v| m.max(v.abs())))
}

/// Re-expresses a potential in the optimizer's parameters and back; used to
/// check that the parametrization is lossless for feasible layers.
pub fn reparametrize(pot: &LayeredPotential, spec: &DesignSpec) -> Option<LayeredPotential> {
    spec.potential_from(&spec.params_from(pot))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pot(v: &[(f64, f64)]) -> LayeredPotential {
        LayeredPotential::new(0.01, v.iter().map(|&(a, b)| C::new(a, b)).collect()).unwrap()
    }

    #[test]
    fn grids() {
        let s = DesignSpec::default();
        let t = s.training_momenta();
        assert_eq!(t.len(), 49);
        assert_eq!((t[0], t[48]), (260.0, 740.0));
        assert!((t[1] - 270.0).abs() < 1e-12);
        let c = s.check_momenta();
        assert_eq!(c.len(), 481);
        assert!((c[10] - t[1]).abs() < 1e-12);
    }

    #[test]
    fn free_limit_is_continuous() {
        // survival tends to one as absorption vanishes
        let spec = DesignSpec::default();
        let mut prev = 0.0;
        for eps in [1e-1, 1e-3, 1e-5, 1e-7] {
            let f = objective(&pot(&[(0.0, -eps); 4]), &spec).unwrap();
            assert!(f >= prev);
            prev = f;
        }
        assert!((prev - spec.samples as f64).abs() < 1e-6);
    }

    #[test]
    fn equal_adjacent_layers_act_as_one() {
        let spec = DesignSpec {
            layers: 2,
            ..DesignSpec::default()
        };
        let v = C::new(-3.0e4, -2.0e5);
        let h = 1e-6 * v.norm();
        let two = |d: C| LayeredPotential::new(0.01, vec![v + d, v + d]).unwrap();
        let one = |d: C| LayeredPotential::new(0.01, vec![v + d]).unwrap();
        for dir in [C::new(1.0, 0.0), C::new(0.0, 1.0)] {
            let a = objective(&two(h * dir), &spec).unwrap() - objective(&two(-h * dir), &spec).unwrap();
            let b = objective(&one(h * dir), &spec).unwrap() - objective(&one(-h * dir), &spec).unwrap();
            assert!((a - b).abs() <= 1e-9 * a.abs().max(1e-15));
        }
        let g2 = gradient(&two(C::new(0.0, 0.0)), &spec).unwrap();
        let g1 = gradient(&one(C::new(0.0, 0.0)), &spec).unwrap();
        assert!((g2[0] + g2[1] - g1[0]).norm() <= 1e-8 * g1[0].norm());
    }

    #[test]
    fn parametrization_round_trip() {
        let spec = DesignSpec::default();
        let p = pot(&[(1.0e4, -3.0), (-2.0e5, -1e6), (0.0, -1e-9), (5.0, -7.0e4)]);
        let q = reparametrize(&p, &spec).unwrap();
        for (a, b) in p.layers().iter().zip(q.layers()) {
            assert!((a - b).norm() <= 1e-12 * a.norm());
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(10))]
        #[test]
        fn gradient_matches_central_differences(
            re in prop::collection::vec(-1.0f64..1.0, 4),
            lim in prop::collection::vec(2.0f64..6.0, 4),
        ) {
            let spec = DesignSpec::default();
            let e2 = 740.0f64 * 740.0 / 2.0;
            let layers: Vec<C> = re.iter().zip(&lim).map(|(r, l)| C::new(r * e2 * 0.5, -(10f64.powf(*l)))).collect();
            let p = LayeredPotential::new(0.01, layers.clone()).unwrap();
            let g = gradient(&p, &spec).unwrap();
            let f0 = objective(&p, &spec).unwrap();
            for j in 0..4 {
                for (dir, comp) in [(C::new(1.0, 0.0), g[j].re), (C::new(0.0, 1.0), g[j].im)] {
                    let h = 1e-6 * layers[j].norm();
                    let mut up = layers.clone();
                    let mut dn = layers.clone();
                    up[j] += h * dir;
                    dn[j] -= h * dir;
                    let fu = objective(&LayeredPotential::new(0.01, up).unwrap(), &spec).unwrap();
                    let fd = objective(&LayeredPotential::new(0.01, dn).unwrap(), &spec).unwrap();
                    let num = (fu - fd) / (2.0 * h);
                    // floor: round-off in f over the step
                    let floor = 1e-13 * f0.max(1.0) / h;
                    prop_assert!((num - comp).abs() <= 1e-5 * comp.abs() + floor,
                        "j={} dir={}: fd {:e} analytic {:e}", j, dir, num, comp);
                }
            }
        }
    }
}
