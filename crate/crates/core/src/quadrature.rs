//! Quadrature rules: Gauss–Legendre panels and adaptive Gauss–Kronrod.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QuadratureError {
    #[error("adaptive quadrature on [{a}, {b}] stalled after {intervals} subintervals (error estimate {error:e})")]
    NotConverged {
        a: f64,
        b: f64,
        intervals: usize,
        error: f64,
    },
    #[error("integrand is not finite at x = {x}")]
    NonFinite { x: f64 },
    #[error("invalid interval [{a}, {b}]")]
    InvalidInterval { a: f64, b: f64 },
}

/// Gauss–Legendre nodes and weights on [-1, 1].
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "Gauss-Legendre order must be positive");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let nf = n as f64;
        for i in 0..n.div_ceil(2) {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre(n, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        Self { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Nodes and weights mapped onto `[a, b]`.
    pub fn mapped(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(move |(&x, &w)| (mid + half * x, half * w))
    }

    /// Composite rule over consecutive panels delimited by `breaks`.
    pub fn composite(&self, breaks: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut xs = Vec::with_capacity(self.len() * breaks.len().saturating_sub(1));
        let mut ws = Vec::with_capacity(xs.capacity());
        for pair in breaks.windows(2) {
            for (x, w) in self.mapped(pair[0], pair[1]) {
                xs.push(x);
                ws.push(w);
            }
        }
        (xs, ws)
    }
}

// P_n(x) and P_n'(x) by the three-term recurrence.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    if n == 0 {
        return (1.0, 0.0);
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

// 15-point Kronrod extension of the 7-point Gauss rule (QUADPACK constants).
const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

/// Tolerances for [`adaptive`].
#[derive(Debug, Clone, Copy)]
pub struct Tolerance {
    pub abs: f64,
    pub rel: f64,
    pub max_intervals: usize,
}

impl Default for Tolerance {
    fn default() -> Self {
        Self {
            abs: 1e-12,
            rel: 1e-12,
            max_intervals: 20_000,
        }
    }
}

impl Tolerance {
    pub fn new(abs: f64, rel: f64) -> Self {
        Self {
            abs,
            rel,
            ..Self::default()
        }
    }

    pub fn with_max_intervals(mut self, n: usize) -> Self {
        self.max_intervals = n;
        self
    }
}

/// Result of a vector-valued adaptive integration.
#[derive(Debug, Clone, Copy)]
pub struct Integral<const K: usize> {
    pub value: [f64; K],
    pub error: [f64; K],
    pub intervals: usize,
    pub evaluations: usize,
}

struct Piece<const K: usize> {
    a: f64,
    b: f64,
    value: [f64; K],
    error: [f64; K],
    // largest error/tolerance-weight over components, drives bisection order
    key: f64,
}

impl<const K: usize> PartialEq for Piece<K> {
    fn eq(&self, other: &Self) -> bool {
        self.key == other.key
    }
}
impl<const K: usize> Eq for Piece<K> {}
impl<const K: usize> PartialOrd for Piece<K> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<const K: usize> Ord for Piece<K> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.key.total_cmp(&other.key)
    }
}

fn kronrod<const K: usize, F>(
    f: &mut F,
    a: f64,
    b: f64,
) -> Result<([f64; K], [f64; K]), QuadratureError>
where
    F: FnMut(f64) -> [f64; K],
{
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    let mut gk = [0.0; K];
    let mut g = [0.0; K];
    let mut eval = |x: f64| -> Result<[f64; K], QuadratureError> {
        let v = f(x);
        if v.iter().all(|c| c.is_finite()) {
            Ok(v)
        } else {
            Err(QuadratureError::NonFinite { x })
        }
    };
    let fc = eval(mid)?;
    for k in 0..K {
        gk[k] = WGK[7] * fc[k];
        g[k] = WG[3] * fc[k];
    }
    for j in 0..7 {
        let dx = half * XGK[j];
        let f1 = eval(mid - dx)?;
        let f2 = eval(mid + dx)?;
        for k in 0..K {
            let s = f1[k] + f2[k];
            gk[k] += WGK[j] * s;
            if j % 2 == 1 {
                g[k] += WG[j / 2] * s;
            }
        }
    }
    let mut value = [0.0; K];
    let mut error = [0.0; K];
    for k in 0..K {
        value[k] = gk[k] * half;
        error[k] = ((gk[k] - g[k]) * half).abs();
    }
    Ok((value, error))
}

/// Adaptive Gauss–Kronrod (7/15) integration of a vector-valued integrand
/// over `[a, b]`, optionally split first at the interior `breaks`.
///
/// Converges when every component satisfies
/// `error <= max(tol.abs, tol.rel * |value|)`.
pub fn adaptive<const K: usize, F>(
    mut f: F,
    a: f64,
    b: f64,
    breaks: &[f64],
    tol: Tolerance,
) -> Result<Integral<K>, QuadratureError>
where
    F: FnMut(f64) -> [f64; K],
{
    if !(a.is_finite() && b.is_finite()) || b < a {
        return Err(QuadratureError::InvalidInterval { a, b });
    }
    if a == b {
        return Ok(Integral {
            value: [0.0; K],
            error: [0.0; K],
            intervals: 0,
            evaluations: 0,
        });
    }
    let mut pts: Vec<f64> = std::iter::once(a)
        .chain(breaks.iter().copied().filter(|&x| x > a && x < b))
        .chain(std::iter::once(b))
        .collect();
    pts.sort_by(f64::total_cmp);
    pts.dedup();

    let mut heap = BinaryHeap::new();
    let mut total = [0.0; K];
    let mut total_err = [0.0; K];
    let mut evaluations = 0;
    let scale = |tot: &[f64; K], err: &[f64; K]| -> f64 {
        (0..K)
            .map(|k| err[k] / tol.abs.max(tol.rel * tot[k].abs()).max(f64::MIN_POSITIVE))
            .fold(0.0, f64::max)
    };
    for w in pts.windows(2) {
        let (v, e) = kronrod(&mut f, w[0], w[1])?;
        evaluations += 15;
        for k in 0..K {
            total[k] += v[k];
            total_err[k] += e[k];
        }
        heap.push(Piece {
            a: w[0],
            b: w[1],
            value: v,
            error: e,
            key: 0.0,
        });
    }
    // keys are relative to the running totals; refresh them lazily
    let mut pieces: Vec<Piece<K>> = heap.into_vec();
    for p in &mut pieces {
        p.key = scale(&total, &p.error);
    }
    let mut heap: BinaryHeap<Piece<K>> = pieces.into();

    loop {
        if scale(&total, &total_err) <= 1.0 {
            break;
        }
        if heap.len() >= tol.max_intervals {
            return Err(QuadratureError::NotConverged {
                a,
                b,
                intervals: heap.len(),
                error: total_err.iter().copied().fold(0.0, f64::max),
            });
        }
        let worst = heap.pop().expect("heap is never empty");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            // interval at floating-point resolution; nothing left to split
            return Err(QuadratureError::NotConverged {
                a,
                b,
                intervals: heap.len() + 1,
                error: total_err.iter().copied().fold(0.0, f64::max),
            });
        }
        let (v1, e1) = kronrod(&mut f, worst.a, mid)?;
        let (v2, e2) = kronrod(&mut f, mid, worst.b)?;
        evaluations += 30;
        for k in 0..K {
            total[k] += v1[k] + v2[k] - worst.value[k];
            total_err[k] += e1[k] + e2[k] - worst.error[k];
        }
        heap.push(Piece {
            a: worst.a,
            b: mid,
            value: v1,
            error: e1,
            key: scale(&total, &e1),
        });
        heap.push(Piece {
            a: mid,
            b: worst.b,
            value: v2,
            error: e2,
            key: scale(&total, &e2),
        });
    }
    // re-sum to shed accumulated rounding from the running updates
    let pieces = heap.into_vec();
    let mut value = [0.0; K];
    let mut error = [0.0; K];
    for p in &pieces {
        for k in 0..K {
            value[k] += p.value[k];
            error[k] += p.error[k];
        }
    }
    Ok(Integral {
        value,
        error,
        intervals: pieces.len(),
        evaluations,
    })
}

/// Scalar convenience wrapper around [`adaptive`].
pub fn adaptive_scalar<F>(
    mut f: F,
    a: f64,
    b: f64,
    breaks: &[f64],
    tol: Tolerance,
) -> Result<f64, QuadratureError>
where
    F: FnMut(f64) -> f64,
{
    adaptive(|x| [f(x)], a, b, breaks, tol).map(|r| r.value[0])
}

/// `∫_a^∞ f(x) dx` through the substitution `x = a + (1 - s) / s`.
pub fn adaptive_to_infinity<F>(
    mut f: F,
    a: f64,
    scale: f64,
    tol: Tolerance,
) -> Result<f64, QuadratureError>
where
    F: FnMut(f64) -> f64,
{
    adaptive_scalar(
        |s| {
            if s <= 0.0 {
                return 0.0;
            }
            let u = (1.0 - s) / s;
            f(a + scale * u) * scale / (s * s)
        },
        0.0,
        1.0,
        &[],
        tol,
    )
}

/// `∫_a^b f(x) dx` where either end may be infinite. The finite core is
/// bounded by the outermost of `breaks` (and the finite ends); infinite
/// tails beyond it are mapped onto `(0, 1]` with length scale `scale`.
pub fn adaptive_line<F>(
    mut f: F,
    a: f64,
    b: f64,
    breaks: &[f64],
    scale: f64,
    tol: Tolerance,
) -> Result<f64, QuadratureError>
where
    F: FnMut(f64) -> f64,
{
    if a.is_nan() || b.is_nan() || b < a {
        return Err(QuadratureError::InvalidInterval { a, b });
    }
    let inner: Vec<f64> = breaks
        .iter()
        .copied()
        .filter(|x| x.is_finite() && *x > a && *x < b)
        .collect();
    let lo = if a.is_finite() {
        a
    } else {
        inner.iter().copied().fold(f64::INFINITY, f64::min)
    };
    let hi = if b.is_finite() {
        b
    } else {
        inner.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    };
    let (lo, hi) = match (lo.is_finite(), hi.is_finite()) {
        (true, true) => (lo, hi),
        (true, false) => (lo, lo),
        (false, true) => (hi, hi),
        (false, false) => (0.0, 0.0),
    };
    let (lo, hi) = if hi < lo { (lo, lo) } else { (lo, hi) };
    let mut total = adaptive_scalar(&mut f, lo, hi, &inner, tol)?;
    if a == f64::NEG_INFINITY {
        total += adaptive_to_infinity(|x| f(2.0 * lo - x), lo, scale, tol)?;
    }
    if b == f64::INFINITY {
        total += adaptive_to_infinity(&mut f, hi, scale, tol)?;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_integrates_polynomials_exactly() {
        for n in [1, 2, 5, 16, 33] {
            let gl = GaussLegendre::new(n);
            for deg in 0..(2 * n) {
                let approx: f64 = gl.mapped(0.0, 1.0).map(|(x, w)| w * x.powi(deg as i32)).sum();
                let exact = 1.0 / (deg as f64 + 1.0);
                assert!((approx - exact).abs() < 1e-14, "n={n} deg={deg}");
            }
        }
    }

    #[test]
    fn weights_sum_to_interval_length() {
        let gl = GaussLegendre::new(40);
        let s: f64 = gl.weights.iter().sum();
        assert!((s - 2.0).abs() < 1e-14);
        assert!(gl.weights.iter().all(|&w| w > 0.0));
    }

    #[test]
    fn adaptive_handles_peaked_integrand() {
        // ∫_{-1}^{1} 1 / (1e-4 + x^2) dx = 2 atan(100) / 1e-2
        let exact = 2.0 * (100.0f64).atan() / 1e-2;
        let got = adaptive_scalar(|x| 1.0 / (1e-4 + x * x), -1.0, 1.0, &[], Tolerance::default())
            .unwrap();
        assert!((got - exact).abs() / exact < 1e-12);
    }

    #[test]
    fn adaptive_vector_components() {
        let r = adaptive(
            |x| [x.sin(), x.cos(), (-x).exp()],
            0.0,
            std::f64::consts::PI,
            &[1.0],
            Tolerance::new(1e-14, 1e-14),
        )
        .unwrap();
        assert!((r.value[0] - 2.0).abs() < 1e-13);
        assert!(r.value[1].abs() < 1e-13);
        assert!((r.value[2] - (1.0 - (-std::f64::consts::PI).exp())).abs() < 1e-13);
    }

    #[test]
    fn semi_infinite_power_law() {
        // ∫_1^∞ x^-6 dx = 1/5
        let got = adaptive_to_infinity(|x| x.powi(-6), 1.0, 1.0, Tolerance::default()).unwrap();
        assert!((got - 0.2).abs() < 1e-13);
    }

    #[test]
    fn whole_line_gaussian() {
        let pi = std::f64::consts::PI;
        let tol = Tolerance::new(1e-14, 1e-13);
        let g = |x: f64| (-(x - 3.0) * (x - 3.0)).exp();
        let all = adaptive_line(g, f64::NEG_INFINITY, f64::INFINITY, &[2.0, 4.0], 1.0, tol).unwrap();
        assert!((all - pi.sqrt()).abs() < 1e-13);
        let left = adaptive_line(g, f64::NEG_INFINITY, 3.0, &[2.0, 4.0], 1.0, tol).unwrap();
        assert!((left - 0.5 * pi.sqrt()).abs() < 1e-13);
        let right = adaptive_line(g, 3.5, f64::INFINITY, &[], 1.0, tol).unwrap();
        let exact = 0.5 * pi.sqrt() * ERFC_HALF;
        assert!((right - exact).abs() < 1e-13, "{right} {exact}");
    }

    const ERFC_HALF: f64 = 0.479_500_122_186_953_462_3;

    #[test]
    fn stall_is_reported() {
        let err = adaptive_scalar(
            |x| (1.0 / x).sin(),
            1e-12,
            1.0,
            &[],
            Tolerance::new(1e-15, 0.0).with_max_intervals(50),
        )
        .unwrap_err();
        assert!(matches!(err, QuadratureError::NotConverged { .. }));
    }

    #[test]
    fn non_finite_integrand_is_reported() {
        let err = adaptive_scalar(|_| f64::NAN, 0.0, 1.0, &[], Tolerance::default()).unwrap_err();
        assert!(matches!(err, QuadratureError::NonFinite { .. }));
    }
}
