//! Direct time stepping of the Schrödinger equation with the layered
//! absorber on a spatial grid, used as an independent check of the
//! scattering-state evolution.
//!
//! Space: finite-element DVR on Gauss–Lobatto nodes, with element edges on
//! every layer interface so the discontinuous potential is represented
//! exactly element by element. Time: the diagonal Padé approximant of
//! `exp(-i H dt / hbar)` in product form; degree 1 is Crank–Nicolson. Every
//! factor is unitary for real potentials.

use std::fmt::Write as _;
use std::path::Path;

use num_complex::Complex64;
use thiserror::Error;

use crate::capscatter::LayeredPotential;
use crate::wavepacket::Units;

type C = Complex64;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("step halving changed the checkpoint at t = {t} by {change:e} (limit {limit:e})")]
    NotConverged { t: f64, change: f64, limit: f64 },
    #[error("{0}")]
    Io(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub domain: (f64, f64),
    /// Element width outside the absorber.
    pub element_width: f64,
    /// Largest element width inside the absorber.
    pub inner_width: f64,
    /// Lobatto nodes per element, edges included.
    pub order: usize,
    pub dt: f64,
    /// Degree of the diagonal Padé propagator.
    pub pade: usize,
    /// Width of the smooth absorbing pad at each end of the domain.
    pub pad: f64,
    /// `|Im V|` reached at the outer edge of a pad.
    pub pad_strength: f64,
    /// Extra element edges (e.g. the ends of a comparison window).
    pub align: Vec<f64>,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            domain: (-5.0, 2.5),
            element_width: 2e-2,
            inner_width: 2.5e-3,
            order: 16,
            dt: 4e-6,
            pade: 4,
            pad: 1.0,
            pad_strength: 1e4,
            align: vec![-0.5],
        }
    }
}

impl GridSpec {
    /// Both spatial and temporal steps halved.
    pub fn halved(&self) -> Self {
        Self {
            element_width: self.element_width / 2.0,
            inner_width: self.inner_width / 2.0,
            dt: self.dt / 2.0,
            ..self.clone()
        }
    }

    fn validate(&self, pot: &LayeredPotential) -> Result<(), OracleError> {
        let bad = |m: String| Err(OracleError::InvalidGrid(m));
        let (a, b) = self.domain;
        if !(a < 0.0 && b > pot.width()) {
            return bad(format!("domain ({a}, {b}) must contain [0, {}]", pot.width()));
        }
        if !(self.element_width > 0.0 && self.inner_width > 0.0 && self.dt > 0.0) {
            return bad("widths and time step must be positive".into());
        }
        if self.order < 3 {
            return bad("at least three nodes per element".into());
        }
        if self.pade == 0 || self.pade > 8 {
            return bad("Padé degree must be in 1..=8".into());
        }
        if !(self.pad >= 0.0 && 2.0 * self.pad < (b - a)) {
            return bad("pads overlap".into());
        }
        Ok(())
    }
}

/// Gauss–Lobatto–Legendre nodes and weights on `[-1, 1]`, ascending.
pub fn lobatto(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 2);
    let nn = n - 1;
    let mut x: Vec<f64> = (0..n)
        .map(|j| -(std::f64::consts::PI * j as f64 / nn as f64).cos())
        .collect();
    let legendre = |x: f64| {
        let (mut p0, mut p1) = (1.0, x);
        for k in 2..=nn {
            let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
            p0 = p1;
            p1 = p2;
        }
        (p1, p0)
    };
    for _ in 0..100 {
        let mut delta: f64 = 0.0;
        for xi in x.iter_mut().take(nn).skip(1) {
            let (pn, pm) = legendre(*xi);
            let step = (*xi * pn - pm) / ((nn + 1) as f64 * pn);
            *xi -= step;
            delta = delta.max(step.abs());
        }
        if delta < 1e-16 {
            break;
        }
    }
    let w = x
        .iter()
        .map(|&xi| {
            let (pn, _) = legendre(xi);
            2.0 / ((nn * (nn + 1)) as f64 * pn * pn)
        })
        .collect();
    (x, w)
}

// d l_j / dx at node i for the Lagrange basis on the nodes
fn derivative_matrix(x: &[f64]) -> Vec<Vec<f64>> {
    let n = x.len();
    let bary: Vec<f64> = (0..n)
        .map(|j| {
            1.0 / (0..n)
                .filter(|&k| k != j)
                .map(|k| x[j] - x[k])
                .product::<f64>()
        })
        .collect();
    let mut d = vec![vec![0.0; n]; n];
    for i in 0..n {
        let mut diag = 0.0;
        for j in 0..n {
            if i != j {
                d[i][j] = bary[j] / bary[i] / (x[i] - x[j]);
                diag -= d[i][j];
            }
        }
        d[i][i] = diag;
    }
    d
}

/// Banded complex matrix, row-major, half-bandwidth `b`.
#[derive(Debug, Clone)]
struct Band {
    n: usize,
    b: usize,
    data: Vec<C>,
}

impl Band {
    fn zeros(n: usize, b: usize) -> Self {
        Self {
            n,
            b,
            data: vec![C::new(0.0, 0.0); n * (2 * b + 1)],
        }
    }

    fn idx(&self, i: usize, j: usize) -> usize {
        i * (2 * self.b + 1) + (j + self.b - i)
    }

    fn add(&mut self, i: usize, j: usize, v: C) {
        let k = self.idx(i, j);
        self.data[k] += v;
    }

    fn get(&self, i: usize, j: usize) -> C {
        self.data[self.idx(i, j)]
    }

    fn cols(&self, i: usize) -> std::ops::Range<usize> {
        i.saturating_sub(self.b)..(i + self.b + 1).min(self.n)
    }

    fn row(&self, i: usize) -> &[C] {
        let w = 2 * self.b + 1;
        &self.data[i * w..(i + 1) * w]
    }

    fn mul(&self, x: &[C], out: &mut [C]) {
        let b = self.b;
        for (i, o) in out.iter_mut().enumerate() {
            let lo = i.saturating_sub(b);
            let hi = (i + b + 1).min(self.n);
            let row = &self.row(i)[lo + b - i..hi + b - i];
            *o = row.iter().zip(&x[lo..hi]).map(|(a, v)| a * v).sum();
        }
    }

    // In-place LU without pivoting. The shifted matrices used here have a
    // definite Hermitian part, for which elimination is stable unpivoted.
    fn factor(mut self) -> Self {
        let n = self.n;
        for k in 0..n {
            let piv = self.get(k, k);
            let end = (k + self.b + 1).min(n);
            for i in k + 1..end {
                let l = self.get(i, k) / piv;
                let ik = self.idx(i, k);
                self.data[ik] = l;
                for j in k + 1..end {
                    let a = self.get(k, j);
                    let ij = self.idx(i, j);
                    self.data[ij] -= l * a;
                }
            }
        }
        self
    }

    fn solve(&self, x: &mut [C]) {
        let (n, b) = (self.n, self.b);
        for i in 0..n {
            let lo = i.saturating_sub(b);
            let row = &self.row(i)[lo + b - i..b];
            let s: C = row.iter().zip(&x[lo..i]).map(|(a, v)| a * v).sum();
            x[i] -= s;
        }
        for i in (0..n).rev() {
            let hi = (i + b + 1).min(n);
            let row = self.row(i);
            let s: C = row[b + 1..hi + b - i].iter().zip(&x[i + 1..hi]).map(|(a, v)| a * v).sum();
            x[i] = (x[i] - s) / row[b];
        }
    }
}

/// Roots of the numerator of the `[m/m]` Padé approximant of `e^z`.
fn pade_roots(m: usize) -> Vec<C> {
    // P(z) = sum_j c_j z^j, c_j = (2m-j)! m! / ((2m)! j! (m-j)!)
    let fact = |k: usize| (1..=k).map(|v| v as f64).product::<f64>();
    let c: Vec<f64> = (0..=m)
        .map(|j| fact(2 * m - j) * fact(m) / (fact(2 * m) * fact(j) * fact(m - j)))
        .collect();
    let lead = c[m];
    let poly = |z: C| {
        let mut v = C::new(0.0, 0.0);
        for cj in c.iter().rev() {
            v = v * z + cj / lead;
        }
        v
    };
    // Durand–Kerner
    let mut r: Vec<C> = (0..m)
        .map(|k| C::from_polar(m as f64, 0.4 + 2.0 * std::f64::consts::PI * k as f64 / m as f64))
        .collect();
    for _ in 0..500 {
        let mut delta: f64 = 0.0;
        for i in 0..m {
            let mut den = C::new(1.0, 0.0);
            for j in 0..m {
                if i != j {
                    den *= r[i] - r[j];
                }
            }
            let step = poly(r[i]) / den;
            r[i] -= step;
            delta = delta.max(step.norm());
        }
        if delta < 1e-15 {
            break;
        }
    }
    r
}

/// Node set and Hamiltonian of the discretized problem.
#[derive(Debug, Clone)]
pub struct Grid {
    /// Interior nodes (the two domain ends are Dirichlet and dropped).
    pub x: Vec<f64>,
    /// Quadrature weight of each node's basis function.
    pub weights: Vec<f64>,
    /// Diagonal potential, weight-averaged over adjoining elements.
    pub potential: Vec<C>,
    /// Pad part of `potential`.
    pub pad: Vec<f64>,
    /// Element edges, domain ends included.
    pub breaks: Vec<f64>,
    hamiltonian: Band,
    spec: GridSpec,
}

fn element_breaks(spec: &GridSpec, pot: &LayeredPotential) -> Vec<f64> {
    let (a, b) = spec.domain;
    let l = pot.width();
    let mut fixed: Vec<f64> = (0..=pot.len()).map(|j| pot.layer_start(j)).collect();
    fixed[pot.len()] = l;
    fixed.push(a);
    fixed.push(b);
    fixed.extend(spec.align.iter().copied().filter(|x| *x > a && *x < b));
    for p in [a + spec.pad, b - spec.pad] {
        if p > a && p < b {
            fixed.push(p);
        }
    }
    fixed.sort_by(f64::total_cmp);
    fixed.dedup_by(|u, v| (*u - *v).abs() < 1e-12);
    let mut out = vec![fixed[0]];
    for w in fixed.windows(2) {
        let inside = w[0] >= 0.0 && w[1] <= l;
        let h = if inside { spec.inner_width } else { spec.element_width };
        let n = ((w[1] - w[0]) / h).ceil().max(1.0) as usize;
        for k in 1..=n {
            out.push(w[0] + (w[1] - w[0]) * k as f64 / n as f64);
        }
    }
    out
}

impl Grid {
    pub fn new(spec: &GridSpec, pot: &LayeredPotential, units: &Units) -> Result<Self, OracleError> {
        spec.validate(pot)?;
        let breaks = element_breaks(spec, pot);
        let (xi, wi) = lobatto(spec.order);
        let d = derivative_matrix(&xi);
        let q = spec.order - 1;
        let ne = breaks.len() - 1;
        let total = ne * q + 1;
        let mut x = vec![0.0; total];
        let mut w = vec![0.0; total];
        let mut vw = vec![C::new(0.0, 0.0); total];
        let mut padw = vec![0.0; total];
        let mut kin = Band::zeros(total, q);
        let kscale = units.hbar * units.hbar / (2.0 * units.mass);
        let (da, db) = spec.domain;
        for e in 0..ne {
            let (a, b) = (breaks[e], breaks[e + 1]);
            let h = b - a;
            let mid = 0.5 * (a + b);
            let v = pot.value_at(mid);
            let v = if mid > 0.0 && mid < pot.width() { v } else { C::new(0.0, 0.0) };
            for i in 0..spec.order {
                let g = e * q + i;
                let xg = a + 0.5 * (xi[i] + 1.0) * h;
                x[g] = xg;
                let wg = 0.5 * h * wi[i];
                w[g] += wg;
                let s = if xg < da + spec.pad {
                    (da + spec.pad - xg) / spec.pad
                } else if xg > db - spec.pad {
                    (xg - (db - spec.pad)) / spec.pad
                } else {
                    0.0
                };
                let pad = spec.pad_strength * s * s;
                vw[g] += wg * (v - C::new(0.0, pad));
                padw[g] += wg * pad;
                for j in 0..spec.order {
                    let mut s = 0.0;
                    for (k, wk) in wi.iter().enumerate() {
                        s += wk * d[k][i] * d[k][j];
                    }
                    kin.add(g, e * q + j, C::new(kscale * 2.0 / h * s, 0.0));
                }
            }
        }
        // drop the two Dirichlet ends and symmetrize with the weights
        let n = total - 2;
        let mut ham = Band::zeros(n, q);
        for i in 0..n {
            let gi = i + 1;
            for gj in kin.cols(gi) {
                if gj == 0 || gj == total - 1 {
                    continue;
                }
                let v = kin.get(gi, gj) / (w[gi] * w[gj]).sqrt();
                ham.add(i, gj - 1, v);
            }
            ham.add(i, i, vw[gi] / w[gi]);
        }
        Ok(Self {
            x: x[1..total - 1].to_vec(),
            weights: w[1..total - 1].to_vec(),
            potential: (1..total - 1).map(|g| vw[g] / w[g]).collect(),
            pad: (1..total - 1).map(|g| padw[g] / w[g]).collect(),
            hamiltonian: ham,
            breaks,
            spec: spec.clone(),
        })
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// Sampled amplitude to expansion coefficients and back.
    pub fn coefficients(&self, values: &[C]) -> Vec<C> {
        values.iter().zip(&self.weights).map(|(v, w)| v * w.sqrt()).collect()
    }

    pub fn values(&self, coef: &[C]) -> Vec<C> {
        coef.iter().zip(&self.weights).map(|(c, w)| c / w.sqrt()).collect()
    }

    pub fn norm(&self, coef: &[C]) -> f64 {
        coef.iter().map(|c| c.norm_sqr()).sum()
    }

    /// `(2/hbar) sum |Im V| |psi|^2` split into absorber and pads.
    pub fn absorption_rates(&self, coef: &[C], hbar: f64) -> (f64, f64) {
        let mut cap = 0.0;
        let mut pad = 0.0;
        for ((c, v), p) in coef.iter().zip(&self.potential).zip(&self.pad) {
            let rho = c.norm_sqr();
            pad += 2.0 / hbar * p * rho;
            cap += 2.0 / hbar * (-v.im - p).max(0.0) * rho;
        }
        (cap, pad)
    }

    /// Mass within the pads.
    pub fn pad_mass(&self, coef: &[C]) -> f64 {
        let (a, b) = self.spec.domain;
        coef.iter()
            .zip(&self.x)
            .filter(|(_, x)| **x < a + self.spec.pad || **x > b - self.spec.pad)
            .map(|(c, _)| c.norm_sqr())
            .sum()
    }
}

/// Time stepper for a fixed grid and step.
#[derive(Debug, Clone)]
pub struct Stepper {
    grid: Grid,
    dt: f64,
    // (numerator, factored denominator) per Padé factor
    factors: Vec<(Band, Band)>,
}

impl Stepper {
    pub fn new(grid: Grid, dt: f64, pade: usize, units: &Units) -> Self {
        let n = grid.len();
        let b = grid.hamiltonian.b;
        let roots = pade_roots(pade);
        let scale = C::new(0.0, -dt / units.hbar);
        let factors = roots
            .iter()
            .map(|&r| {
                // (z - r) / (-z - r) with z = -i dt H / hbar
                let mut num = Band::zeros(n, b);
                let mut den = Band::zeros(n, b);
                for i in 0..n {
                    for j in grid.hamiltonian.cols(i) {
                        let z = scale * grid.hamiltonian.get(i, j);
                        num.add(i, j, z);
                        den.add(i, j, -z);
                    }
                    num.add(i, i, -r);
                    den.add(i, i, -r);
                }
                (num, den.factor())
            })
            .collect();
        Self { grid, dt, factors }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn step(&self, coef: &mut Vec<C>) {
        let mut tmp = vec![C::new(0.0, 0.0); coef.len()];
        for (num, den) in &self.factors {
            num.mul(coef, &mut tmp);
            den.solve(&mut tmp);
            std::mem::swap(coef, &mut tmp);
        }
    }
}

/// Grid amplitude at one time.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub t: f64,
    pub x: Vec<f64>,
    pub weights: Vec<f64>,
    pub psi: Vec<C>,
    /// Element edges, domain ends included.
    pub breaks: Vec<f64>,
    /// Lobatto nodes per element.
    pub order: usize,
}

impl Checkpoint {
    /// `||psi - f||` over nodes in `[a, b]`; `f` is sampled in one batch.
    pub fn l2_distance<F: Fn(&[f64]) -> Vec<C>>(&self, f: F, (a, b): (f64, f64)) -> f64 {
        let inside: Vec<usize> = (0..self.x.len())
            .filter(|&i| self.x[i] >= a && self.x[i] <= b)
            .collect();
        let xs: Vec<f64> = inside.iter().map(|&i| self.x[i]).collect();
        let want = f(&xs);
        inside
            .iter()
            .zip(&want)
            .map(|(&i, v)| self.weights[i] * (self.psi[i] - v).norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    /// `∫_a^b |psi|^2` on the nodes.
    pub fn mass(&self, (a, b): (f64, f64)) -> f64 {
        self.x
            .iter()
            .zip(&self.weights)
            .zip(&self.psi)
            .filter(|((x, _), _)| **x >= a && **x <= b)
            .map(|((_, w), p)| w * p.norm_sqr())
            .sum()
    }

    /// One line per node: `x Re(psi) Im(psi)`.
    pub fn to_text(&self) -> String {
        let mut s = String::with_capacity(self.x.len() * 72);
        writeln!(s, "# t = {:.16e}", self.t).unwrap();
        for (x, p) in self.x.iter().zip(&self.psi) {
            writeln!(s, "{:.16e} {:.16e} {:.16e}", x, p.re, p.im).unwrap();
        }
        s
    }

    pub fn write(&self, path: &Path) -> Result<(), OracleError> {
        std::fs::write(path, self.to_text())
            .map_err(|e| OracleError::Io(format!("{}: {e}", path.display())))
    }

    /// Piecewise Lagrange interpolation on the elements; zero outside.
    pub fn interpolate(&self, x: f64) -> C {
        let b = &self.breaks;
        if !(x >= b[0] && x <= b[b.len() - 1]) {
            return C::new(0.0, 0.0);
        }
        let e = b.partition_point(|v| *v <= x).clamp(1, b.len() - 1) - 1;
        let q = self.order - 1;
        // padded index k is node k - 1; the two ends are Dirichlet zeros
        let node = |k: usize| -> (f64, C) {
            if k == 0 {
                (b[0], C::new(0.0, 0.0))
            } else if k == self.x.len() + 1 {
                (b[b.len() - 1], C::new(0.0, 0.0))
            } else {
                (self.x[k - 1], self.psi[k - 1])
            }
        };
        let pts: Vec<(f64, C)> = (e * q..=e * q + q).map(node).collect();
        let mut v = C::new(0.0, 0.0);
        for (i, (xi, pi)) in pts.iter().enumerate() {
            let mut l = 1.0;
            for (j, (xj, _)) in pts.iter().enumerate() {
                if i != j {
                    l *= (x - xj) / (xi - xj);
                }
            }
            v += pi * l;
        }
        v
    }
}

/// Result of one grid run.
#[derive(Debug, Clone)]
pub struct Propagation {
    pub checkpoints: Vec<Checkpoint>,
    /// `(t, N, absorber rate, pad rate)` after every step.
    pub history: Vec<(f64, f64, f64, f64)>,
    /// Mass absorbed by the pads over the run.
    pub pad_absorbed: f64,
    pub initial_pad_mass: f64,
    pub nodes: usize,
}

/// Smooth cut-off applied to the initial amplitude inside the pads.
pub fn taper(spec: &GridSpec, x: f64) -> f64 {
    let (a, b) = spec.domain;
    let s = if x < a + spec.pad {
        (a + spec.pad - x) / spec.pad
    } else if x > b - spec.pad {
        (x - (b - spec.pad)) / spec.pad
    } else {
        return 1.0;
    };
    let c = (0.5 * std::f64::consts::PI * s.min(1.0)).cos();
    c * c
}

/// Propagates the amplitude at `t0` to each of `times`. `initial` samples
/// it at a batch of points; it is tapered to zero across the pads first.
pub fn propagate<F>(
    spec: &GridSpec,
    pot: &LayeredPotential,
    units: &Units,
    initial: F,
    t0: f64,
    times: &[f64],
) -> Result<Propagation, OracleError>
where
    F: Fn(&[f64]) -> Vec<C>,
{
    let grid = Grid::new(spec, pot, units)?;
    let samples: Vec<C> = initial(&grid.x)
        .into_iter()
        .zip(&grid.x)
        .map(|(v, &x)| v * taper(spec, x))
        .collect();
    let mut coef = grid.coefficients(&samples);
    let initial_pad_mass = grid.pad_mass(&coef);
    let stepper = Stepper::new(grid, spec.dt, spec.pade, units);
    let grid = stepper.grid();
    let mut t = t0;
    let mut history = vec![];
    let (c0, p0) = grid.absorption_rates(&coef, units.hbar);
    history.push((t, grid.norm(&coef), c0, p0));
    let mut checkpoints = Vec::with_capacity(times.len());
    let mut pad_absorbed = 0.0;
    let mut sorted: Vec<f64> = times.to_vec();
    sorted.sort_by(f64::total_cmp);
    for &target in &sorted {
        if target < t - 1e-15 {
            return Err(OracleError::InvalidGrid(format!(
                "checkpoint {target} precedes the start time {t0}"
            )));
        }
        let steps = ((target - t) / spec.dt).round() as usize;
        for _ in 0..steps {
            stepper.step(&mut coef);
            t += spec.dt;
            let (c, p) = grid.absorption_rates(&coef, units.hbar);
            let prev = history.last().unwrap().3;
            pad_absorbed += 0.5 * (p + prev) * spec.dt;
            history.push((t, grid.norm(&coef), c, p));
        }
        // land exactly on the checkpoint
        let rest = target - t;
        if rest.abs() > 1e-9 * spec.dt {
            let s = Stepper::new(grid.clone(), rest, spec.pade, units);
            s.step(&mut coef);
            t = target;
            let (c, p) = grid.absorption_rates(&coef, units.hbar);
            history.push((t, grid.norm(&coef), c, p));
        }
        checkpoints.push(Checkpoint {
            t: target,
            x: grid.x.clone(),
            weights: grid.weights.clone(),
            psi: grid.values(&coef),
            breaks: grid.breaks.clone(),
            order: grid.spec.order,
        });
    }
    Ok(Propagation {
        checkpoints,
        history,
        pad_absorbed,
        initial_pad_mass,
        nodes: grid.len(),
    })
}

/// Runs `spec` and its halved refinement and checks the checkpoints agree
/// to `tol` in L2 over `window`. Returns the refined run and the largest
/// change.
pub fn propagate_certified<F>(
    spec: &GridSpec,
    pot: &LayeredPotential,
    units: &Units,
    initial: F,
    t0: f64,
    times: &[f64],
    window: (f64, f64),
    tol: f64,
) -> Result<(Propagation, f64), OracleError>
where
    F: Fn(&[f64]) -> Vec<C>,
{
    let coarse = propagate(spec, pot, units, &initial, t0, times)?;
    let fine = propagate(&spec.halved(), pot, units, &initial, t0, times)?;
    let mut worst: f64 = 0.0;
    for (c, f) in coarse.checkpoints.iter().zip(&fine.checkpoints) {
        let change = c.l2_distance(|xs| xs.iter().map(|&x| f.interpolate(x)).collect(), window);
        if change > tol {
            return Err(OracleError::NotConverged {
                t: c.t,
                change,
                limit: tol,
            });
        }
        worst = worst.max(change);
    }
    Ok((fine, worst))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lobatto_rule_integrates_polynomials() {
        for n in [3, 6, 14] {
            let (x, w) = lobatto(n);
            assert_eq!(x[0], -1.0);
            assert_eq!(x[n - 1], 1.0);
            // exact to degree 2n-3
            for d in 0..=(2 * n - 3) {
                let s: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(d as i32)).sum();
                let want = if d % 2 == 1 { 0.0 } else { 2.0 / (d + 1) as f64 };
                assert!((s - want).abs() < 1e-13, "n={n} d={d}");
            }
        }
    }

    #[test]
    fn derivative_matrix_is_exact_on_polynomials() {
        let (x, _) = lobatto(8);
        let d = derivative_matrix(&x);
        for i in 0..8 {
            let s: f64 = (0..8).map(|j| d[i][j] * x[j].powi(5)).sum();
            assert!((s - 5.0 * x[i].powi(4)).abs() < 1e-11);
        }
    }

    #[test]
    fn pade_roots_are_left_half_plane() {
        for m in 1..=6 {
            let r = pade_roots(m);
            assert_eq!(r.len(), m);
            assert!(r.iter().all(|z| z.re < 0.0));
        }
        // Crank–Nicolson: P(z) = 1 + z/2
        assert!((pade_roots(1)[0] + 2.0).norm() < 1e-14);
    }

    fn gaussian(x: f64, t: f64) -> C {
        let (s, x0, p0) = (0.02f64, -0.2, 500.0);
        let a = C::new(1.0, t / (2.0 * s * s));
        let n = (2.0 * std::f64::consts::PI * s * s).powf(-0.25);
        let u = x - x0 - p0 * t;
        n / a.sqrt()
            * (-(u * u) / (4.0 * s * s) / a).exp()
            * C::from_polar(1.0, p0 * (x - x0) - 0.5 * p0 * p0 * t)
    }

    fn small() -> GridSpec {
        GridSpec {
            domain: (-1.0, 1.0),
            pad: 0.2,
            ..GridSpec::default()
        }
    }

    fn sample(xs: &[f64]) -> Vec<C> {
        xs.iter().map(|&x| gaussian(x, 0.0)).collect()
    }

    #[test]
    fn free_gaussian_matches_closed_form() {
        let pot = LayeredPotential::free(0.01, 4);
        let r = propagate(&small(), &pot, &Units::ATOMIC, sample, 0.0, &[2e-4, 5e-4]).unwrap();
        assert!((r.history[0].1 - 1.0).abs() < 1e-10);
        for c in &r.checkpoints {
            let err = c.l2_distance(|xs| xs.iter().map(|&x| gaussian(x, c.t)).collect(), (-1.0, 1.0));
            assert!(err < 1e-7, "t = {}: {err:e}", c.t);
        }
    }

    #[test]
    fn real_barrier_conserves_norm() {
        let pot = LayeredPotential::new(0.01, vec![C::new(1e5, 0.0), C::new(-4e4, 0.0)]).unwrap();
        let spec = GridSpec {
            pad_strength: 0.0,
            ..small()
        };
        let r = propagate(&spec, &pot, &Units::ATOMIC, sample, 0.0, &[6e-4]).unwrap();
        let n0 = r.history[0].1;
        for h in &r.history {
            assert!((h.1 - n0).abs() < 1e-10, "t = {}: {:e}", h.0, h.1 - n0);
        }
    }

    #[test]
    fn norm_loss_matches_absorbed_volume() {
        let pot = LayeredPotential::new(0.01, vec![C::new(-2e4, -5e4), C::new(0.0, -2e5)]).unwrap();
        let spec = GridSpec {
            dt: 1e-7,
            ..small()
        };
        let r = propagate(&spec, &pot, &Units::ATOMIC, sample, 0.0, &[6e-4]).unwrap();
        let h = &r.history;
        let peak = h.iter().map(|v| v.2 + v.3).fold(0.0, f64::max);
        assert!(peak > 100.0);
        for w in h.windows(5).step_by(7) {
            let dt = w[1].0 - w[0].0;
            if (w[4].0 - w[0].0 - 4.0 * dt).abs() > 1e-12 {
                continue;
            }
            let fd = (w[0].1 - 8.0 * w[1].1 + 8.0 * w[3].1 - w[4].1) / (12.0 * dt);
            let vol = w[2].2 + w[2].3;
            assert!((fd + vol).abs() < 1e-6 * peak, "t = {}: {fd:e} vs {vol:e}", w[2].0);
        }
    }

    #[test]
    fn checkpoint_text_round_trips() {
        let pot = LayeredPotential::free(0.01, 1);
        let r = propagate(&small(), &pot, &Units::ATOMIC, sample, 0.0, &[1e-5]).unwrap();
        let c = &r.checkpoints[0];
        let text = c.to_text();
        let rows: Vec<Vec<f64>> = text
            .lines()
            .filter(|l| !l.starts_with('#'))
            .map(|l| l.split(' ').map(|v| v.parse().unwrap()).collect())
            .collect();
        assert_eq!(rows.len(), c.x.len());
        for (row, (x, p)) in rows.iter().zip(c.x.iter().zip(&c.psi)) {
            assert_eq!(row, &vec![*x, p.re, p.im]);
        }
    }

    #[test]
    fn interpolation_reproduces_nodes_and_smooth_data() {
        let pot = LayeredPotential::free(0.01, 2);
        let r = propagate(&small(), &pot, &Units::ATOMIC, sample, 0.0, &[0.0]).unwrap();
        let c = &r.checkpoints[0];
        for i in (0..c.x.len()).step_by(37) {
            assert!((c.interpolate(c.x[i]) - c.psi[i]).norm() < 1e-12);
        }
        for x in [-0.25, -0.2001, -0.13] {
            let d = (c.interpolate(x) - gaussian(x, 0.0)).norm();
            assert!(d < 1e-6, "{x}: {d:e}");
        }
    }

    #[test]
    fn under_resolved_grid_fails_certification() {
        let pot = LayeredPotential::free(0.01, 1);
        let spec = GridSpec {
            element_width: 0.1,
            order: 5,
            dt: 5e-5,
            ..small()
        };
        let err = propagate_certified(&spec, &pot, &Units::ATOMIC, sample, 0.0, &[3e-4], (-0.5, 0.5), 1e-7)
            .unwrap_err();
        assert!(matches!(err, OracleError::NotConverged { .. }));
    }

    #[test]
    fn grid_rejects_domain_without_absorber() {
        let pot = LayeredPotential::free(0.01, 1);
        let spec = GridSpec {
            domain: (0.001, 1.0),
            ..small()
        };
        assert!(Grid::new(&spec, &pot, &Units::ATOMIC).is_err());
    }

    #[test]
    fn band_solve_matches_multiplication() {
        let n = 9;
        let mut a = Band::zeros(n, 2);
        for i in 0..n {
            for j in a.cols(i) {
                let v = C::new(((i * 7 + j * 3) % 5) as f64 * 0.1, (i as f64 - j as f64) * 0.05);
                a.add(i, j, v);
            }
            a.add(i, i, C::new(-3.0, 0.5));
        }
        let x: Vec<C> = (0..n).map(|i| C::new(i as f64, 1.0 - i as f64)).collect();
        let mut y = vec![C::new(0.0, 0.0); n];
        a.mul(&x, &mut y);
        let lu = a.factor();
        lu.solve(&mut y);
        for (u, v) in x.iter().zip(&y) {
            assert!((u - v).norm() < 1e-12);
        }
    }
}
