//! Arrival-time distributions at the origin for the free packet: the flux,
//! Kijowski's distribution, the Bohmian `|J|` distribution and trajectories,
//! backflow intervals, and moments of sampled channels.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use thiserror::Error;

use crate::capscatter::{CapEvolution, MomentumQuadrature, ScatterError, Window};
use crate::quadrature::{self, QuadratureError, Tolerance};
use crate::wavepacket::{Packet, PacketError, Units};

type C = Complex64;

/// Bracken–Melloy bound on the probability a single backflow interval can
/// return.
pub const BACKFLOW_BOUND: f64 = 0.04;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ArrivalError {
    #[error("Kijowski amplitude not converged at t = {t}: change {change:e} with {nodes} nodes")]
    NotConverged { t: f64, change: f64, nodes: usize },
    #[error("density {density:e} below threshold at x = {x}, t = {t}")]
    DensityVanishing { t: f64, x: f64, density: f64 },
    #[error("trajectory step size underflow at t = {t}")]
    StepUnderflow { t: f64 },
    #[error("backflow {magnitude:e} on [{start}, {end}] exceeds the bound {BACKFLOW_BOUND}")]
    BoundExceeded { start: f64, end: f64, magnitude: f64 },
    #[error("invalid series: {0}")]
    InvalidSeries(String),
    #[error("channel {0} not present")]
    UnknownChannel(String),
    #[error("channel {channel} has normalization {value:e}")]
    NegativeNormalization { channel: String, value: f64 },
    #[error("channel {channel} is negative at t = {t} but not flagged signed")]
    UnexpectedSign { channel: String, t: f64 },
    #[error(transparent)]
    Packet(#[from] PacketError),
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
    #[error(transparent)]
    Scatter(#[from] ScatterError),
}

/// Amplitude whose modulus squared is Kijowski's distribution at the origin.
pub fn kijowski_amplitude(packet: &Packet, t: f64, quad: &MomentumQuadrature) -> C {
    kijowski_amplitude_of(|p| packet.momentum_amplitude(p), packet.units(), t, quad)
}

/// Same for an arbitrary momentum amplitude supported on positive momenta.
pub fn kijowski_amplitude_of<F: Fn(f64) -> C>(
    phi: F,
    units: &Units,
    t: f64,
    quad: &MomentumQuadrature,
) -> C {
    let h = 2.0 * PI * units.hbar;
    let mut s = C::new(0.0, 0.0);
    for (&p, &w) in quad.nodes.iter().zip(&quad.weights) {
        let phase = -p * p * t / (2.0 * units.mass * units.hbar);
        s += w * p.sqrt() * phi(p) * C::from_polar(1.0, phase);
    }
    s / (units.mass * h).sqrt()
}

pub fn kijowski(packet: &Packet, t: f64, quad: &MomentumQuadrature) -> f64 {
    kijowski_amplitude(packet, t, quad).norm_sqr()
}

/// Largest quadrature the doubling loop builds.
pub const KIJOWSKI_MAX_NODES: usize = 1 << 21;

/// `Π_K(t)`, refining the momentum rule until doubling changes the value by
/// less than `tol · max(1, Π_K)`.
pub fn kijowski_converged(packet: &Packet, t: f64, tol: f64) -> Result<f64, ArrivalError> {
    let mut quad = MomentumQuadrature::for_window(packet, &Window::new((0.0, 0.0), (t, t)));
    let mut value = kijowski(packet, t, &quad);
    loop {
        let fine = quad.refined();
        let next = kijowski(packet, t, &fine);
        let change = (next - value).abs();
        if change <= tol * next.max(1.0) {
            return Ok(next);
        }
        if fine.len() >= KIJOWSKI_MAX_NODES {
            return Err(ArrivalError::NotConverged {
                t,
                change,
                nodes: fine.len(),
            });
        }
        quad = fine;
        value = next;
    }
}

/// `Π_K` for arrival at `x` instead of the origin.
pub fn kijowski_at(packet: &Packet, x: f64, t: f64, tol: f64) -> Result<f64, ArrivalError> {
    kijowski_converged(&packet.shifted(-x), t, tol)
}

/// Largest `|Π_K'(0,t) - Π_K(-bt/m, t) - (b/m) ρ(-bt/m, t)|` over `times`,
/// with unprimed quantities from the unboosted packet. The flux obeys this
/// relation exactly; Kijowski's distribution does not.
pub fn kijowski_boost_residual(
    packet: &Packet,
    times: &[f64],
    tol: f64,
) -> Result<f64, ArrivalError> {
    let b = packet.params().b;
    let m = packet.units().mass;
    let rest = packet.unboosted();
    let r = times
        .par_iter()
        .map(|&t| {
            let xs = -b * t / m;
            let lhs = kijowski_converged(packet, t, tol)?;
            let rhs = kijowski_at(&rest, xs, t, tol)? + b / m * rest.density(xs, t)?;
            Ok((lhs - rhs).abs())
        })
        .collect::<Result<Vec<f64>, ArrivalError>>()?;
    Ok(r.into_iter().fold(0.0, f64::max))
}

/// `∫ Π_K dt` over the whole line. Each evaluation is converged to `tol`.
pub fn kijowski_normalization(packet: &Packet, tol: f64) -> Result<f64, ArrivalError> {
    let (core, scale) = time_core(packet);
    let breaks = crate::capscatter::packet_time_breaks(packet, core);
    let mut err = None;
    let mut f = |t: f64| match kijowski_converged(packet, t, tol) {
        Ok(v) => v,
        Err(e) => {
            err.get_or_insert(e);
            0.0
        }
    };
    let mut b = vec![core.0];
    b.extend(breaks);
    b.push(core.1);
    let v = quadrature::adaptive_line(
        &mut f,
        f64::NEG_INFINITY,
        f64::INFINITY,
        &b,
        scale,
        Tolerance::new(1e-12, 1e-10).with_max_intervals(4000),
    )?;
    match err {
        Some(e) => Err(e),
        None => Ok(v),
    }
}

// time range holding the bulk of the arrivals, and the tail length scale
fn time_core(packet: &Packet) -> ((f64, f64), f64) {
    let (p_lo, p_hi) = packet.momentum_support(1e-16);
    let m = packet.units().mass;
    let par = packet.params();
    let reach = 8.0 * (par.alpha.abs().sqrt() + par.delta) - par.x0.min(0.0);
    let v_lo = p_lo.max(1e-3 * p_hi) / m;
    let t1 = reach / v_lo;
    let t0 = -reach / v_lo;
    ((t0, t1), 0.25 * (t1 - t0))
}

/// One interval of negative flux at the origin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BackflowInterval {
    pub start: f64,
    pub end: f64,
    /// `∫(-J) dt` over the interval.
    pub magnitude: f64,
    /// Smallest flux reached.
    pub min_flux: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct BackflowReport {
    pub intervals: Vec<BackflowInterval>,
    pub total: f64,
}

/// Zero of `f` bracketed by `[a, b]`, bisected to floating-point resolution.
/// Returns whichever final bracket end has the smaller `|f|`.
pub fn bisect<F: FnMut(f64) -> Result<f64, E>, E>(
    mut f: F,
    mut a: f64,
    mut b: f64,
) -> Result<f64, E> {
    let mut fa = f(a)?;
    let mut fb = f(b)?;
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        if mid <= a || mid >= b {
            break;
        }
        let fm = f(mid)?;
        if fm == 0.0 {
            return Ok(mid);
        }
        if (fm < 0.0) == (fa < 0.0) {
            a = mid;
            fa = fm;
        } else {
            b = mid;
            fb = fm;
        }
    }
    Ok(if fa.abs() <= fb.abs() { a } else { b })
}

/// Sign changes of the free flux at the origin located on `t_grid` and
/// refined by bisection.
pub fn flux_zeros(packet: &Packet, t_grid: &[f64]) -> Result<Vec<f64>, ArrivalError> {
    let j = t_grid
        .par_iter()
        .map(|&t| packet.flux(0.0, t))
        .collect::<Result<Vec<f64>, _>>()?;
    let mut out = vec![];
    for k in 1..t_grid.len() {
        if (j[k - 1] < 0.0) != (j[k] < 0.0) {
            out.push(bisect(|t| packet.flux(0.0, t), t_grid[k - 1], t_grid[k])?);
        }
    }
    Ok(out)
}

/// Intervals on `t_grid` where the free flux at the origin is negative. An
/// interval touching the grid edge is cut there.
pub fn backflow_report(packet: &Packet, t_grid: &[f64]) -> Result<BackflowReport, ArrivalError> {
    if t_grid.len() < 2 {
        return Err(ArrivalError::InvalidSeries("need at least two times".into()));
    }
    let zeros = flux_zeros(packet, t_grid)?;
    let first = *t_grid.first().unwrap();
    let last = *t_grid.last().unwrap();
    let mut edges = vec![first];
    edges.extend(&zeros);
    edges.push(last);
    let mut report = BackflowReport::default();
    for w in edges.windows(2) {
        let mid = 0.5 * (w[0] + w[1]);
        if packet.flux(0.0, mid)? >= 0.0 {
            continue;
        }
        let tol = Tolerance::new(1e-15, 1e-12);
        let mut min_flux = 0.0f64;
        let magnitude = quadrature::adaptive_scalar(
            |t| {
                let j = packet.flux(0.0, t).unwrap_or(f64::NAN);
                min_flux = min_flux.min(j);
                -j
            },
            w[0],
            w[1],
            &[],
            tol,
        )?;
        if magnitude >= BACKFLOW_BOUND {
            return Err(ArrivalError::BoundExceeded {
                start: w[0],
                end: w[1],
                magnitude,
            });
        }
        report.intervals.push(BackflowInterval {
            start: w[0],
            end: w[1],
            magnitude,
            min_flux,
        });
        report.total += magnitude;
    }
    Ok(report)
}

/// Uniform grid of `n` times on `[a, b]`.
pub fn time_grid(a: f64, b: f64, n: usize) -> Vec<f64> {
    assert!(n >= 2);
    (0..n)
        .map(|k| a + (b - a) * k as f64 / (n - 1) as f64)
        .collect()
}

/// `Π_B(t) = |J(0,t)| / ∫|J(0,t')| dt'` for the free packet.
#[derive(Debug, Clone)]
pub struct BohmDistribution {
    packet: Packet,
    /// `∫|J| dt` over the whole line.
    pub denominator: f64,
    pub backflow: BackflowReport,
}

impl BohmDistribution {
    /// The denominator is `∫|J|` over `window`, split at the flux zeros
    /// found on `grid_points` samples, plus the half-line norms that cross
    /// the origin outside the window (flux assumed nonnegative there).
    pub fn new(packet: &Packet, window: (f64, f64), grid_points: usize) -> Result<Self, ArrivalError> {
        let grid = time_grid(window.0, window.1, grid_points);
        let backflow = backflow_report(packet, &grid)?;
        let mut breaks: Vec<f64> = backflow
            .intervals
            .iter()
            .flat_map(|i| [i.start, i.end])
            .collect();
        breaks.extend(crate::capscatter::packet_time_breaks(packet, window));
        breaks.sort_by(f64::total_cmp);
        let inner = quadrature::adaptive_scalar(
            |t| packet.flux(0.0, t).map(f64::abs).unwrap_or(f64::NAN),
            window.0,
            window.1,
            &breaks,
            Tolerance::new(1e-13, 1e-12).with_max_intervals(20_000),
        )?;
        let before = packet.half_line_norms(window.0)?.1;
        let after = packet.half_line_norms(window.1)?.0;
        Ok(Self {
            packet: packet.clone(),
            denominator: inner + before + after,
            backflow,
        })
    }

    pub fn value(&self, t: f64) -> Result<f64, ArrivalError> {
        Ok(self.packet.flux(0.0, t)?.abs() / self.denominator)
    }
}

/// Adaptive Dormand–Prince settings for Bohmian trajectories.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryOptions {
    pub rtol: f64,
    pub atol: f64,
    /// Upper bound on a step, so short excursions are not stepped over.
    pub max_step: f64,
    pub min_density: f64,
}

impl Default for TrajectoryOptions {
    fn default() -> Self {
        Self {
            rtol: 1e-10,
            atol: 1e-10,
            max_step: 2e-6,
            min_density: 1e-12,
        }
    }
}

/// Bohmian velocity `J / |psi|^2` of the free packet.
pub fn bohm_velocity(packet: &Packet, x: f64, t: f64, min_density: f64) -> Result<f64, ArrivalError> {
    let (v, d) = packet.amplitude_and_gradient(x, t)?;
    let rho = v.norm_sqr();
    if rho < min_density {
        return Err(ArrivalError::DensityVanishing { t, x, density: rho });
    }
    let u = packet.units();
    Ok(u.hbar / u.mass * (v.conj() * d).im / rho)
}

// Dormand–Prince 5(4)
const DP_A: [[f64; 6]; 6] = [
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const DP_C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const DP_B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const DP_B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

// Integrates from (t, x) to t_end, appending accepted steps to `path`.
fn dopri<F>(v: &F, t_start: f64, x_start: f64, t_end: f64, opts: &TrajectoryOptions, path: &mut Vec<(f64, f64)>) -> Result<f64, ArrivalError>
where
    F: Fn(f64, f64) -> Result<f64, ArrivalError>,
{
    let (mut t, mut x) = (t_start, x_start);
    let mut h = opts.max_step.min(t_end - t) * 0.1;
    let mut k = [0.0; 7];
    k[0] = v(x, t)?;
    while t < t_end {
        let last = t_end - t <= h;
        h = h.min(t_end - t).min(opts.max_step);
        for s in 1..7 {
            let mut xs = x;
            for (j, kj) in k.iter().enumerate().take(s) {
                xs += h * DP_A[s - 1][j] * kj;
            }
            k[s] = v(xs, t + DP_C[s] * h)?;
        }
        let mut x5 = x;
        let mut err = 0.0;
        for j in 0..7 {
            x5 += h * DP_B5[j] * k[j];
            err += h * (DP_B5[j] - DP_B4[j]) * k[j];
        }
        let sc = opts.atol + opts.rtol * x.abs().max(x5.abs());
        let ratio = err.abs() / sc;
        if ratio <= 1.0 {
            t = if last { t_end } else { t + h };
            x = x5;
            path.push((t, x));
            k[0] = k[6];
        }
        let factor = if ratio == 0.0 { 5.0 } else { (0.9 * ratio.powf(-0.2)).clamp(0.2, 5.0) };
        h *= factor;
        if h < 1e-14 * t.abs().max(1e-9) {
            return Err(ArrivalError::StepUnderflow { t });
        }
    }
    Ok(x)
}

/// Accepted steps `(t, x)` of `dx/dt = v(x, t)` from `x_start` over `t_span`.
pub fn bohm_trajectory(
    packet: &Packet,
    x_start: f64,
    t_span: (f64, f64),
    opts: &TrajectoryOptions,
) -> Result<Vec<(f64, f64)>, ArrivalError> {
    let v = |x: f64, t: f64| bohm_velocity(packet, x, t, opts.min_density);
    let mut path = vec![(t_span.0, x_start)];
    dopri(&v, t_span.0, x_start, t_span.1, opts, &mut path)?;
    Ok(path)
}

/// Positions at each of the increasing `times` (the first is the start).
pub fn bohm_positions(
    packet: &Packet,
    x_start: f64,
    times: &[f64],
    opts: &TrajectoryOptions,
) -> Result<Vec<f64>, ArrivalError> {
    let v = |x: f64, t: f64| bohm_velocity(packet, x, t, opts.min_density);
    let mut out = vec![x_start];
    let mut scratch = vec![];
    for w in times.windows(2) {
        let x = dopri(&v, w[0], *out.last().unwrap(), w[1], opts, &mut scratch)?;
        scratch.clear();
        out.push(x);
    }
    Ok(out)
}

/// Number of sign changes of `x` along a path.
pub fn origin_crossings(path: &[(f64, f64)]) -> usize {
    path.windows(2)
        .filter(|w| (w[0].1 < 0.0) != (w[1].1 < 0.0))
        .count()
}

/// `∫_{-∞}^x |psi(x', t)|^2 dx'`.
pub fn cumulative_mass(packet: &Packet, x: f64, t: f64) -> Result<f64, ArrivalError> {
    let (left, _) = packet.half_line_norms(t)?;
    Ok(if x <= 0.0 {
        left - packet.mass_between(t, x, 0.0)?
    } else {
        left + packet.mass_between(t, 0.0, x)?
    })
}

/// Position below which a fraction `q` of the probability lies at time `t`.
pub fn position_quantile(packet: &Packet, q: f64, t: f64) -> Result<f64, ArrivalError> {
    let scale = packet.tail_scale(t).max(1e-3);
    let centre = packet.params().x0 + packet.params().b * t / packet.units().mass;
    let (mut a, mut b) = (centre - scale, centre + scale);
    while cumulative_mass(packet, a, t)? > q {
        a -= 2.0 * (b - a);
    }
    while cumulative_mass(packet, b, t)? < q {
        b += 2.0 * (b - a);
    }
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        if mid <= a || mid >= b || b - a < 1e-13 {
            break;
        }
        if cumulative_mass(packet, mid, t)? < q {
            a = mid;
        } else {
            b = mid;
        }
    }
    Ok(0.5 * (a + b))
}

/// Sampled channels sharing a strictly increasing time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    t: Vec<f64>,
    channels: Vec<(String, Vec<f64>)>,
}

pub const J_FREE: &str = "J_free";
pub const J_CAP: &str = "J_cap";
pub const DNDT_NEG: &str = "dNdt_neg";
pub const PI_K: &str = "Pi_K";
pub const PI_B: &str = "Pi_B";
pub const ABS_J: &str = "absJ";
pub const DNDT_NEG_SHIFTED: &str = "dNdt_neg_shifted";

impl TimeSeries {
    pub fn new(t: Vec<f64>) -> Result<Self, ArrivalError> {
        if t.is_empty() {
            return Err(ArrivalError::InvalidSeries("empty time grid".into()));
        }
        if t.iter().any(|v| !v.is_finite()) || t.windows(2).any(|w| w[1] <= w[0]) {
            return Err(ArrivalError::InvalidSeries("times must be finite and strictly increasing".into()));
        }
        Ok(Self { t, channels: vec![] })
    }

    pub fn t(&self) -> &[f64] {
        &self.t
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn push(&mut self, name: &str, values: Vec<f64>) -> Result<(), ArrivalError> {
        if values.len() != self.t.len() {
            return Err(ArrivalError::InvalidSeries(format!(
                "channel {name} has {} values for {} times",
                values.len(),
                self.t.len()
            )));
        }
        if self.channel(name).is_some() {
            return Err(ArrivalError::InvalidSeries(format!("duplicate channel {name}")));
        }
        self.channels.push((name.to_string(), values));
        Ok(())
    }

    pub fn channel(&self, name: &str) -> Option<&[f64]> {
        self.channels
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.as_slice())
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.channels.iter().map(|(n, _)| n.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Moments {
    /// `∫ c dt`
    pub normalization: f64,
    /// `∫ t c dt / ∫ c dt`
    pub mean: f64,
}

/// Trapezoidal normalization and mean of a channel. `tails` adds the mass
/// and first moment outside the grid when they are known.
pub fn distribution_moments(
    series: &TimeSeries,
    channel: &str,
    signed: bool,
    tails: Option<(f64, f64)>,
) -> Result<Moments, ArrivalError> {
    let c = series
        .channel(channel)
        .ok_or_else(|| ArrivalError::UnknownChannel(channel.to_string()))?;
    let t = series.t();
    if !signed {
        if let Some(k) = c.iter().position(|v| *v < 0.0) {
            return Err(ArrivalError::UnexpectedSign {
                channel: channel.to_string(),
                t: t[k],
            });
        }
    }
    let (mut n, mut m) = tails.unwrap_or((0.0, 0.0));
    for k in 1..t.len() {
        let h = t[k] - t[k - 1];
        n += 0.5 * h * (c[k] + c[k - 1]);
        m += 0.5 * h * (t[k] * c[k] + t[k - 1] * c[k - 1]);
    }
    if !(n > 0.0) {
        return Err(ArrivalError::NegativeNormalization {
            channel: channel.to_string(),
            value: n,
        });
    }
    Ok(Moments {
        normalization: n,
        mean: m / n,
    })
}

/// Channels of the arrival-time comparison on `t_grid`: free and absorber flux at
/// the origin, the absorption rate, its copy delayed by `tau_d`, Kijowski,
/// Bohm and `|J|`.
pub fn arrival_series(
    evo: &CapEvolution,
    bohm: &BohmDistribution,
    t_grid: Vec<f64>,
    tau_d: f64,
    tol: f64,
) -> Result<TimeSeries, ArrivalError> {
    let mut s = TimeSeries::new(t_grid)?;
    let packet = evo.packet();
    let probe = evo.detector();
    let rows = s
        .t()
        .par_iter()
        .map(|&t| {
            let jf = packet.flux(0.0, t)?;
            let now = evo.sample(&probe, t)?;
            let later = evo.sample(&probe, t + tau_d)?;
            let pk = kijowski_converged(packet, t, tol)?;
            let pb = bohm.value(t)?;
            Ok([jf, now.flux_origin, now.detector.rate, pk, pb, jf.abs(), later.detector.rate])
        })
        .collect::<Result<Vec<[f64; 7]>, ArrivalError>>()?;
    let names = [J_FREE, J_CAP, DNDT_NEG, PI_K, PI_B, ABS_J, DNDT_NEG_SHIFTED];
    for (k, name) in names.iter().enumerate() {
        s.push(name, rows.iter().map(|r| r[k]).collect())?;
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bisect_finds_root_to_resolution() {
        let r: Result<f64, ()> = bisect(|t| Ok(t * t - 2.0), 0.0, 3.0);
        assert!((r.unwrap() - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn uniform_channel_has_mean_one_half() {
        let mut s = TimeSeries::new(time_grid(0.0, 1.0, 11)).unwrap();
        s.push("u", vec![1.0; 11]).unwrap();
        let m = distribution_moments(&s, "u", false, None).unwrap();
        assert!((m.mean - 0.5).abs() < 1e-15);
        assert!((m.normalization - 1.0).abs() < 1e-15);
    }

    #[test]
    fn moments_reject_bad_channels() {
        let mut s = TimeSeries::new(time_grid(0.0, 1.0, 5)).unwrap();
        s.push("signed", vec![1.0, -0.5, 1.0, 1.0, 1.0]).unwrap();
        s.push("neg", vec![-1.0; 5]).unwrap();
        assert!(matches!(
            distribution_moments(&s, "signed", false, None),
            Err(ArrivalError::UnexpectedSign { .. })
        ));
        assert!(distribution_moments(&s, "signed", true, None).is_ok());
        assert!(matches!(
            distribution_moments(&s, "neg", true, None),
            Err(ArrivalError::NegativeNormalization { .. })
        ));
        assert!(matches!(
            distribution_moments(&s, "missing", true, None),
            Err(ArrivalError::UnknownChannel(_))
        ));
    }

    #[test]
    fn series_checks_grid_and_lengths() {
        assert!(TimeSeries::new(vec![]).is_err());
        assert!(TimeSeries::new(vec![0.0, 1.0, 1.0]).is_err());
        let mut s = TimeSeries::new(vec![0.0, 1.0]).unwrap();
        assert!(s.push("a", vec![1.0]).is_err());
        s.push("a", vec![1.0, 2.0]).unwrap();
        assert!(s.push("a", vec![1.0, 2.0]).is_err());
        assert_eq!(s.names().collect::<Vec<_>>(), ["a"]);
    }

    #[test]
    fn crossings_count_sign_changes() {
        let path = [(0.0, -1.0), (1.0, 0.5), (2.0, -0.1), (3.0, 2.0), (4.0, 3.0)];
        assert_eq!(origin_crossings(&path), 3);
    }
}
