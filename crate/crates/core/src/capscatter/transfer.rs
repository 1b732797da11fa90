//! Transfer matrices for `(psi, psi')` across constant-potential segments.
//!
//! Across a segment of width `h` with wavenumber `k`,
//! `(psi, psi')(x + h) = [[c, s/k], [-k s, c]] (psi, psi')(x)` with
//! `c = cos kh`, `s = sin kh`. The entries are even in `k`, so the branch of
//! the square root never matters and `k -> 0` is regular. The solution is
//! built from the transmitted side backwards, renormalizing after each
//! segment and carrying the scale in a log.

use num_complex::Complex64;

use super::{LayeredPotential, ScatterError};
use crate::wavepacket::Units;

/// Segments with `|Im k| h` above this are split.
pub const MAX_DECAY_PER_SEGMENT: f64 = 30.0;

// Beyond this many pieces per layer the scaled matrices carry the decay.
const MAX_PIECES: usize = 64;

type C = Complex64;

// Entries are stored scaled by `exp(-y)`, `y = |Im k h|`, so that no
// segment overflows however strong the absorber; callers carry `y` in their
// log-scale.
#[derive(Debug, Clone, Copy)]
struct Step {
    c: C,
    // sin(kh)/k
    f: C,
    // k sin(kh)
    g: C,
    y: f64,
}

impl Step {
    fn new(kappa: C, h: f64) -> Self {
        let k = kappa.sqrt();
        let z = k * h;
        let y = z.im.abs();
        let (c, f) = if z.norm() < 1e-3 {
            let damp = (-y).exp();
            (z.cos() * damp, h * sinc(z) * damp)
        } else {
            let ep = (C::i() * z - y).exp();
            let em = (-C::i() * z - y).exp();
            let s = (ep - em) / (2.0 * C::i());
            (0.5 * (ep + em), s / k)
        };
        let g = kappa * f;
        Self { c, f, g, y }
    }

    // d/dkappa of (c, f, g)
    fn derivative(&self, kappa: C, h: f64) -> (C, C, C) {
        let dc = -0.5 * h * self.f;
        let x = kappa * h * h;
        let df = if x.norm() < 1e-2 {
            // h^3 sum_{n>=1} (-1)^n n x^(n-1) / (2n+1)!
            let mut term = C::new(-h * h * h / 6.0 * (-self.y).exp(), 0.0);
            let mut sum = term;
            for n in 2..12 {
                let nf = n as f64;
                term *= -x * nf / ((nf - 1.0) * (2.0 * nf) * (2.0 * nf + 1.0));
                sum += term;
            }
            sum
        } else {
            (h * self.c - self.f) / (2.0 * kappa)
        };
        let dg = 0.5 * (self.f + h * self.c);
        (dc, df, dg)
    }

    // backward propagation: state at x from state at x + h
    fn back(&self, v: [C; 2]) -> [C; 2] {
        [self.c * v[0] - self.f * v[1], self.g * v[0] + self.c * v[1]]
    }

    fn forward(&self, v: [C; 2]) -> [C; 2] {
        [self.c * v[0] + self.f * v[1], -self.g * v[0] + self.c * v[1]]
    }
}

fn sinc(z: C) -> C {
    if z.norm() < 1e-3 {
        let z2 = z * z;
        1.0 - z2 / 6.0 * (1.0 - z2 / 20.0)
    } else {
        z.sin() / z
    }
}

/// One constant-potential piece of `[0, L]` and the solution at its left edge.
#[derive(Debug, Clone, Copy)]
pub struct Segment {
    pub x: f64,
    pub width: f64,
    pub layer: usize,
    /// `k^2 = 2m(E - V)/hbar^2`.
    pub kappa: C,
    pub psi: C,
    pub dpsi: C,
    /// Solution at the right edge.
    pub psi_right: C,
    pub dpsi_right: C,
}

impl Segment {
    pub fn wavenumber(&self) -> C {
        self.kappa.sqrt()
    }

    // Propagates from whichever edge gives the smaller round-off bound: the
    // matrix entries grow like exp(|Im k| distance).
    fn eval(&self, x: f64) -> (C, C) {
        let k = self.wavenumber();
        let kn = k.norm().max(1e-300);
        let dl = x - self.x;
        let dr = self.x + self.width - x;
        let el = k.im.abs() * dl + (self.psi.norm() + self.dpsi.norm() / kn).max(1e-300).ln();
        let er = k.im.abs() * dr
            + (self.psi_right.norm() + self.dpsi_right.norm() / kn)
                .max(1e-300)
                .ln();
        let (st, edge, forward) = if el <= er {
            (Step::new(self.kappa, dl), [self.psi, self.dpsi], true)
        } else {
            (Step::new(self.kappa, dr), [self.psi_right, self.dpsi_right], false)
        };
        let n = edge[0].norm() + edge[1].norm() / kn;
        if n == 0.0 {
            return (C::new(0.0, 0.0), C::new(0.0, 0.0));
        }
        let unit = [edge[0] / n, edge[1] / n];
        let v = if forward { st.forward(unit) } else { st.back(unit) };
        let scale = (st.y + n.ln()).exp();
        (v[0] * scale, v[1] * scale)
    }
}

/// Scattering state `<x|p+>` (incident amplitude one) of a layered potential.
#[derive(Debug, Clone)]
pub struct ScatterSolution {
    pub p: f64,
    /// Vacuum wavenumber `p / hbar`.
    pub k0: f64,
    pub r: C,
    pub t: C,
    /// `|R|^2 + |T|^2`: the probability of leaving the detector region.
    pub survival: f64,
    /// `1 - |R|^2 - |T|^2`.
    pub absorption: f64,
    pub width: f64,
    pub segments: Vec<Segment>,
}

impl ScatterSolution {
    /// Per-layer wavenumbers on the principal branch.
    pub fn layer_wavenumbers(&self) -> Vec<C> {
        self.first_segments().map(|s| s.wavenumber()).collect()
    }

    /// Plane-wave coefficients `(A_j, B_j)` with
    /// `psi = A_j e^{ik_j (x - x_j)} + B_j e^{-ik_j (x - x_j)}` in layer `j`,
    /// `x_j` its left edge. `None` for a layer with `k_j = 0`.
    pub fn layer_coefficients(&self) -> Vec<Option<(C, C)>> {
        self.first_segments()
            .map(|s| {
                let k = s.wavenumber();
                if k.norm() == 0.0 {
                    return None;
                }
                let d = s.dpsi / (C::i() * k);
                Some((0.5 * (s.psi + d), 0.5 * (s.psi - d)))
            })
            .collect()
    }

    fn first_segments(&self) -> impl Iterator<Item = &Segment> {
        let mut last = usize::MAX;
        self.segments.iter().filter(move |s| {
            let first = s.layer != last;
            last = s.layer;
            first
        })
    }

    /// `<x|p+>` up to the `(2 pi hbar)^{-1/2}` normalization, with its derivative.
    pub fn eval(&self, x: f64) -> (C, C) {
        let k0 = self.k0;
        if x <= 0.0 {
            let e = C::from_polar(1.0, k0 * x);
            let er = e.conj() * self.r;
            return (e + er, C::i() * k0 * (e - er));
        }
        if x >= self.width {
            let e = self.t * C::from_polar(1.0, k0 * x);
            return (e, C::i() * k0 * e);
        }
        let i = self
            .segments
            .partition_point(|s| s.x <= x)
            .saturating_sub(1);
        self.segments[i].eval(x)
    }
}

/// `<x|p+>` (same normalization as [`ScatterSolution::eval`]).
pub fn eigenfunction(sol: &ScatterSolution, x: f64) -> C {
    sol.eval(x).0
}

struct Chain {
    segments: Vec<Segment>,
    steps: Vec<Step>,
    // scaled state at each segment's right edge and its log-scale
    right: Vec<([C; 2], f64)>,
    left_state: [C; 2],
    left_log: f64,
}

fn segment_plan(pot: &LayeredPotential, p: f64, units: &Units) -> Vec<(usize, f64, f64, C)> {
    let e = p * p / (2.0 * units.mass);
    let scale = 2.0 * units.mass / (units.hbar * units.hbar);
    let d = pot.layer_width();
    let mut plan = Vec::new();
    for (j, v) in pot.layers().iter().enumerate() {
        let kappa = scale * (e - v);
        let decay = kappa.sqrt().im.abs() * d;
        let pieces = ((decay / MAX_DECAY_PER_SEGMENT).ceil() as usize).clamp(1, MAX_PIECES);
        let x0 = pot.layer_start(j);
        let h = d / pieces as f64;
        for q in 0..pieces {
            plan.push((j, x0 + q as f64 * h, h, kappa));
        }
    }
    plan
}

fn build_chain(pot: &LayeredPotential, p: f64, units: &Units) -> Chain {
    let k0 = p / units.hbar;
    let plan = segment_plan(pot, p, units);
    let n = plan.len();
    let mut steps = Vec::with_capacity(n);
    let mut right = Vec::with_capacity(n);
    let mut left = Vec::with_capacity(n);
    let mut v = [C::new(1.0, 0.0), C::new(0.0, k0)];
    let mut log = 0.0;
    for &(_, _, h, kappa) in plan.iter().rev() {
        let st = Step::new(kappa, h);
        right.push((v, log));
        v = st.back(v);
        log += st.y;
        let norm = v[0].norm().max(v[1].norm() / k0);
        if norm > 0.0 && norm.is_finite() {
            v = [v[0] / norm, v[1] / norm];
            log += norm.ln();
        }
        steps.push(st);
        left.push((v, log));
    }
    steps.reverse();
    right.reverse();
    left.reverse();
    // physical normalization (unit incident amplitude): scale by e^{log_j - log_0} / a
    let a = 0.5 * (v[0] + v[1] / C::new(0.0, k0));
    let segments = plan
        .iter()
        .zip(left.iter().zip(&right))
        .map(|(&(layer, x, width, kappa), (&(s, lj), &(sr, lr)))| {
            let f = (lj - log).exp() / a;
            let fr = (lr - log).exp() / a;
            Segment {
                x,
                width,
                layer,
                kappa,
                psi: s[0] * f,
                dpsi: s[1] * f,
                psi_right: sr[0] * fr,
                dpsi_right: sr[1] * fr,
            }
        })
        .collect();
    Chain {
        segments,
        steps,
        right,
        left_state: v,
        left_log: log,
    }
}

/// Solves the scattering problem at momentum `p > 0`.
pub fn solve_scatter(
    pot: &LayeredPotential,
    p: f64,
    units: &Units,
) -> Result<ScatterSolution, ScatterError> {
    if !(p.is_finite() && p > 0.0) {
        return Err(ScatterError::InvalidMomentum(p));
    }
    let chain = build_chain(pot, p, units);
    let k0 = p / units.hbar;
    let ik0 = C::new(0.0, k0);
    let v = chain.left_state;
    let a = 0.5 * (v[0] + v[1] / ik0);
    let b = 0.5 * (v[0] - v[1] / ik0);
    if !(a.norm() > 0.0 && a.norm().is_finite() && b.norm().is_finite()) {
        return Err(ScatterError::Degenerate { p });
    }
    let r = b / a;
    // T = e^{-ik0 L} / (a e^{log})
    let t_mag = (-chain.left_log - a.norm().ln()).exp();
    let t = C::from_polar(t_mag, -k0 * pot.width() - a.arg());
    let survival = r.norm_sqr() + t.norm_sqr();
    Ok(ScatterSolution {
        p,
        k0,
        r,
        t,
        survival,
        absorption: 1.0 - survival,
        width: pot.width(),
        segments: chain.segments,
    })
}

/// `|R|^2 + |T|^2` at `p` and its gradient: entry `j` is
/// `d/dRe V_j + i d/dIm V_j`.
pub fn survival_gradient(
    pot: &LayeredPotential,
    p: f64,
    units: &Units,
) -> Result<(f64, Vec<C>), ScatterError> {
    if !(p.is_finite() && p > 0.0) {
        return Err(ScatterError::InvalidMomentum(p));
    }
    let chain = build_chain(pot, p, units);
    let k0 = p / units.hbar;
    let ik0 = C::new(0.0, k0);
    let v = chain.left_state;
    let a = 0.5 * (v[0] + v[1] / ik0);
    let b = 0.5 * (v[0] - v[1] / ik0);
    if !(a.norm() > 0.0 && a.norm().is_finite()) {
        return Err(ScatterError::Degenerate { p });
    }
    let r = b / a;
    let t_mag = (-chain.left_log - a.norm().ln()).exp();
    let s = r.norm_sqr() + t_mag * t_mag;
    let dkappa_dv = -2.0 * units.mass / (units.hbar * units.hbar);

    // rows of the projector onto (a, b), times the prefix product
    let mut q = [
        [C::new(0.5, 0.0), 0.5 / ik0],
        [C::new(0.5, 0.0), -0.5 / ik0],
    ];
    let mut grad = vec![C::new(0.0, 0.0); pot.len()];
    for (idx, seg) in chain.segments.iter().enumerate() {
        let st = &chain.steps[idx];
        let (dc, df, dg) = st.derivative(seg.kappa, seg.width);
        let (sv, _) = chain.right[idx];
        let pv = st.back(sv);
        let dpv = [
            (dc * sv[0] - df * sv[1]) * dkappa_dv,
            (dg * sv[0] + dc * sv[1]) * dkappa_dv,
        ];
        let a_loc = q[0][0] * pv[0] + q[0][1] * pv[1];
        let da = q[0][0] * dpv[0] + q[0][1] * dpv[1];
        let db = q[1][0] * dpv[0] + q[1][1] * dpv[1];
        let alpha = da / a_loc;
        let beta = db / a_loc;
        // Wirtinger derivative dS/dV; real gradient is (2 Re, -2 Im)
        let w = r.conj() * beta - s * alpha;
        grad[seg.layer] += C::new(2.0 * w.re, -2.0 * w.im);
        // q <- q P
        let mut nq = [[C::new(0.0, 0.0); 2]; 2];
        for row in 0..2 {
            nq[row][0] = q[row][0] * st.c + q[row][1] * st.g;
            nq[row][1] = -q[row][0] * st.f + q[row][1] * st.c;
        }
        let norm = nq
            .iter()
            .flat_map(|r| r.iter())
            .map(|z| z.norm())
            .fold(0.0, f64::max);
        if norm > 0.0 && norm.is_finite() {
            for row in nq.iter_mut() {
                for z in row.iter_mut() {
                    *z /= norm;
                }
            }
        }
        q = nq;
    }
    Ok((s, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn units() -> Units {
        Units::ATOMIC
    }

    fn sample_pot() -> LayeredPotential {
        LayeredPotential::new(
            0.01,
            vec![
                C::new(2.0e4, -3.0e3),
                C::new(-1.0e4, -4.0e4),
                C::new(5.0e3, -1.5e5),
                C::new(0.0, -6.0e5),
            ],
        )
        .unwrap()
    }

    #[test]
    fn free_potential_transmits_everything() {
        let pot = LayeredPotential::free(0.01, 4);
        for p in [1.0, 260.0, 740.0, 3000.0] {
            let s = solve_scatter(&pot, p, &units()).unwrap();
            assert!(s.r.norm() < 1e-14);
            assert!((s.t - 1.0).norm() < 1e-12);
            assert!(s.absorption.abs() < 1e-13);
            for x in [-0.3, 0.0013, 0.007, 0.2] {
                let want = C::from_polar(1.0, p * x);
                assert!((eigenfunction(&s, x) - want).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn single_real_barrier_matches_textbook_transmission() {
        // |T|^2 = 1 / (1 + V^2 sin^2(k d) / (4 E (E - V))), E > V
        let (v, d, p) = (1.0e4, 0.01, 200.0);
        let pot = LayeredPotential::new(d, vec![C::new(v, 0.0)]).unwrap();
        let s = solve_scatter(&pot, p, &units()).unwrap();
        let e = p * p / 2.0;
        let k = (2.0 * (e - v)).sqrt();
        let t2 = 1.0 / (1.0 + v * v * (k * d).sin().powi(2) / (4.0 * e * (e - v)));
        assert!((s.t.norm_sqr() - t2).abs() < 1e-13);
        assert!((s.survival - 1.0).abs() < 1e-13);
    }

    #[test]
    fn interfaces_are_continuous() {
        let pot = sample_pot();
        let s = solve_scatter(&pot, 400.0, &units()).unwrap();
        let eps = 1e-16;
        for j in 0..=pot.len() {
            let x = pot.width() * j as f64 / pot.len() as f64;
            let (l, dl) = s.eval(x - eps);
            let (r, dr) = s.eval(x + eps);
            let scale = l.norm().max(1e-300);
            assert!((l - r).norm() / scale < 1e-10, "value at {x}: {l} {r}");
            assert!((dl - dr).norm() / dl.norm().max(1e-300) < 1e-10, "slope at {x}");
        }
    }

    #[test]
    fn strong_absorber_is_split_and_finite() {
        let pot = LayeredPotential::new(0.01, vec![C::new(0.0, -1e9); 2]).unwrap();
        let s = solve_scatter(&pot, 300.0, &units()).unwrap();
        assert!(s.segments.len() > 2);
        assert!(s.survival.is_finite() && s.survival <= 1.0);
        // essentially a hard wall
        assert!(s.r.norm() > 0.9);
        let pot = LayeredPotential::new(0.01, vec![C::new(1e3, -1e26), C::new(0.0, -1e5)]).unwrap();
        let s = solve_scatter(&pot, 300.0, &units()).unwrap();
        assert!(s.segments.len() <= 2 * 64);
        assert!(s.survival.is_finite() && s.survival <= 1.0 && s.survival > 0.99);
        assert!(s.eval(0.003).0.norm() < 1e-200);
        let (g0, g) = survival_gradient(&pot, 300.0, &units()).unwrap();
        assert!((g0 - s.survival).abs() < 1e-14);
        assert!(g.iter().all(|z| z.re.is_finite() && z.im.is_finite()));
    }

    #[test]
    fn branch_flip_relabels_coefficients() {
        let pot = sample_pot();
        let s = solve_scatter(&pot, 500.0, &units()).unwrap();
        let coeffs = s.layer_coefficients();
        let ks = s.layer_wavenumbers();
        for (j, seg) in s.segments.iter().filter(|g| g.x == pot.layer_start(g.layer)).enumerate() {
            let (a, b) = coeffs[j].unwrap();
            // flipped branch -k swaps A and B
            let kf = -ks[j];
            let d = seg.dpsi / (C::i() * kf);
            let (af, bf) = (0.5 * (seg.psi + d), 0.5 * (seg.psi - d));
            assert!((af - b).norm() <= 1e-12 * b.norm().max(1e-300));
            assert!((bf - a).norm() <= 1e-12 * a.norm().max(1e-300));
            // same function either way
            let x = seg.x + 0.3 * seg.width;
            let dx = x - seg.x;
            let v1 = a * (C::i() * ks[j] * dx).exp() + b * (-C::i() * ks[j] * dx).exp();
            let v2 = af * (C::i() * kf * dx).exp() + bf * (-C::i() * kf * dx).exp();
            assert!((v1 - v2).norm() <= 1e-10 * v1.norm());
            assert!((v1 - eigenfunction(&s, x)).norm() <= 1e-10 * v1.norm());
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let pot = sample_pot();
        for p in [260.0, 431.0, 740.0] {
            let (s0, g) = survival_gradient(&pot, p, &units()).unwrap();
            let s1 = solve_scatter(&pot, p, &units()).unwrap().survival;
            assert!((s0 - s1).abs() <= 1e-14 * s1.max(1e-300) + 1e-300);
            for j in 0..pot.len() {
                for (dir, comp) in [(C::new(1.0, 0.0), g[j].re), (C::new(0.0, 1.0), g[j].im)] {
                    let h = 1e-6 * pot.layers()[j].norm();
                    let mut up = pot.layers().to_vec();
                    let mut dn = pot.layers().to_vec();
                    up[j] += h * dir;
                    dn[j] -= h * dir;
                    let su = solve_scatter(&LayeredPotential::new(0.01, up).unwrap(), p, &units())
                        .unwrap()
                        .survival;
                    let sd = solve_scatter(&LayeredPotential::new(0.01, dn).unwrap(), p, &units())
                        .unwrap()
                        .survival;
                    let fd = (su - sd) / (2.0 * h);
                    assert!(
                        (fd - comp).abs() <= 1e-5 * comp.abs().max(1e-12 * s1 / h),
                        "p={p} j={j} {dir}: fd {fd:e} analytic {comp:e}"
                    );
                }
            }
        }
    }

    #[test]
    fn gradient_at_free_potential_near_zero_wavenumber() {
        // E = Re V exactly, tiny absorption: exercises the small-k series
        let p = 300.0;
        let pot = LayeredPotential::new(0.01, vec![C::new(p * p / 2.0, -1e-3)]).unwrap();
        let (_, g) = survival_gradient(&pot, p, &units()).unwrap();
        assert!(g[0].re.is_finite() && g[0].im.is_finite());
    }

    proptest! {
        #[test]
        fn survival_in_unit_interval(
            re in prop::collection::vec(-1e5f64..1e5, 1..6),
            lim in prop::collection::vec(0.0f64..7.0, 6),
            p in 1.0f64..2000.0,
        ) {
            let layers: Vec<C> = re.iter().zip(&lim).map(|(r, l)| C::new(*r, -(10f64.powf(*l)))).collect();
            let pot = LayeredPotential::new(0.01, layers).unwrap();
            let s = solve_scatter(&pot, p, &units()).unwrap();
            prop_assert!(s.survival >= 0.0 && s.survival <= 1.0 + 1e-12, "{}", s.survival);
            prop_assert!(s.absorption >= -1e-12);
        }
    }
}
