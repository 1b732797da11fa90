//! Packet evolution under the absorbing potential as a momentum integral
//! over scattering states, `psi(x,t) = ∫ dp <x|p+> e^{-iEt/hbar} <p|psi(0)>`.
//!
//! Left of the potential the incident part is the analytic free packet and
//! only the reflected part is summed on the momentum nodes.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;

use super::transfer::{solve_scatter, ScatterSolution};
use super::{LayeredPotential, ScatterError};
use crate::quadrature::{self, GaussLegendre, Tolerance};
use crate::wavepacket::Packet;

type C = Complex64;

/// Space-time region a quadrature must resolve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Window {
    pub x: (f64, f64),
    pub t: (f64, f64),
}

impl Window {
    pub fn new(x: (f64, f64), t: (f64, f64)) -> Self {
        Self { x, t }
    }
}

/// Composite Gauss–Legendre rule on `[p_lo, p_hi]` for momentum integrals.
#[derive(Debug, Clone)]
pub struct MomentumQuadrature {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    pub p_lo: f64,
    pub p_hi: f64,
    breaks: Vec<f64>,
    order: usize,
}

impl MomentumQuadrature {
    pub const MAX_NODES: usize = 1 << 14;
    pub const DEFAULT_ORDER: usize = 24;

    pub fn from_breaks(breaks: Vec<f64>, order: usize) -> Self {
        assert!(breaks.len() >= 2, "need at least one panel");
        let gl = GaussLegendre::new(order);
        let (nodes, weights) = gl.composite(&breaks);
        Self {
            nodes,
            weights,
            p_lo: breaks[0],
            p_hi: *breaks.last().unwrap(),
            breaks,
            order,
        }
    }

    /// Panels sized so each spans at most three periods of the phase
    /// `(±x - x0) p - p^2 t / 2m` over the window, graded towards the
    /// lower edge where the amplitude vanishes quadratically.
    pub fn for_window(packet: &Packet, window: &Window) -> Self {
        Self::for_window_with_order(packet, window, Self::DEFAULT_ORDER)
    }

    pub fn for_window_with_order(packet: &Packet, window: &Window, order: usize) -> Self {
        let (p_lo, p_hi) = packet.momentum_support(1e-28);
        let hbar = packet.units().hbar;
        let mass = packet.units().mass;
        let par = packet.params();
        let mut omega: f64 = 1.0;
        for x in [window.x.0, window.x.1] {
            for sx in [x, -x] {
                for t in [window.t.0, window.t.1] {
                    for p in [p_lo, p_hi] {
                        omega = omega.max((sx - par.x0 - p * t / mass).abs() / hbar);
                    }
                }
            }
        }
        let h = (6.0 * PI / omega).min((p_hi - p_lo) / 16.0);
        let edge = if par.alpha != 0.0 {
            hbar / par.alpha.abs().sqrt()
        } else {
            hbar / par.delta
        };
        let mut breaks = vec![p_lo];
        let mut e = edge / 64.0;
        while e < edge.min(h) * 4.0 && p_lo + e < p_hi {
            breaks.push(p_lo + e);
            e *= 2.0;
        }
        let start = *breaks.last().unwrap();
        let n = ((p_hi - start) / h).ceil().max(1.0) as usize;
        for j in 1..=n {
            breaks.push(start + (p_hi - start) * j as f64 / n as f64);
        }
        Self::from_breaks(breaks, order)
    }

    /// Every panel bisected: twice the nodes.
    pub fn refined(&self) -> Self {
        let mut b = Vec::with_capacity(2 * self.breaks.len());
        for w in self.breaks.windows(2) {
            b.push(w[0]);
            b.push(0.5 * (w[0] + w[1]));
        }
        b.push(self.p_hi);
        Self::from_breaks(b, self.order)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn panels(&self) -> usize {
        self.breaks.len() - 1
    }
}

/// Precomputed scattering states on the quadrature nodes.
#[derive(Debug, Clone)]
pub struct CapEvolution {
    pot: LayeredPotential,
    packet: Packet,
    quad: MomentumQuadrature,
    sols: Vec<ScatterSolution>,
    coef: Vec<C>,
    freq: Vec<f64>,
}

/// Mass inside `[0, L]` and the absorption rate `-dN/dt` at one time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorState {
    pub mass: f64,
    pub rate: f64,
}

/// Everything the time series needs at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeSample {
    pub t: f64,
    /// `J(0,t)` with the absorber present.
    pub flux_origin: f64,
    /// `J(L,t)`: transmitted current.
    pub flux_exit: f64,
    pub detector: DetectorState,
}

impl CapEvolution {
    pub fn new(
        pot: &LayeredPotential,
        packet: &Packet,
        quad: MomentumQuadrature,
    ) -> Result<Self, ScatterError> {
        let units = *packet.units();
        let norm = (2.0 * PI * units.hbar).sqrt();
        let sols = quad
            .nodes
            .par_iter()
            .map(|&p| solve_scatter(pot, p, &units))
            .collect::<Result<Vec<_>, _>>()?;
        let coef = quad
            .nodes
            .iter()
            .zip(&quad.weights)
            .map(|(&p, &w)| w * packet.momentum_amplitude(p) / norm)
            .collect();
        let freq = quad
            .nodes
            .iter()
            .map(|&p| p * p / (2.0 * units.mass * units.hbar))
            .collect();
        Ok(Self {
            pot: pot.clone(),
            packet: packet.clone(),
            quad,
            sols,
            coef,
            freq,
        })
    }

    /// Sized for `window` and checked against one refinement at the window's
    /// corners; refines until the amplitudes agree to `tol`.
    pub fn converged(
        pot: &LayeredPotential,
        packet: &Packet,
        window: &Window,
        tol: f64,
    ) -> Result<Self, ScatterError> {
        Self::converged_with_cap(pot, packet, window, tol, MomentumQuadrature::MAX_NODES)
    }

    pub fn converged_with_cap(
        pot: &LayeredPotential,
        packet: &Packet,
        window: &Window,
        tol: f64,
        max_nodes: usize,
    ) -> Result<Self, ScatterError> {
        let quad = MomentumQuadrature::for_window(packet, window);
        let mut evo = Self::new(pot, packet, quad)?;
        let xs = [
            window.x.0,
            0.5 * (window.x.0 + window.x.1),
            window.x.1,
            0.0,
            pot.width() * 0.5,
        ];
        let ts = [window.t.0, 0.5 * (window.t.0 + window.t.1), window.t.1];
        loop {
            let fine = evo.refined()?;
            let mut worst = (0.0f64, 0.0, 0.0);
            for &x in &xs {
                for &t in &ts {
                    let a = evo.amplitude(x, t)?;
                    let b = fine.amplitude(x, t)?;
                    let d = (a - b).norm() / b.norm().max(1.0);
                    if d > worst.0 {
                        worst = (d, x, t);
                    }
                }
            }
            if worst.0 <= tol {
                return Ok(fine);
            }
            if fine.quad.len() >= max_nodes {
                return Err(ScatterError::NotConverged {
                    x: worst.1,
                    t: worst.2,
                    change: worst.0,
                    nodes: fine.quad.len(),
                });
            }
            evo = fine;
        }
    }

    pub fn refined(&self) -> Result<Self, ScatterError> {
        Self::new(&self.pot, &self.packet, self.quad.refined())
    }

    pub fn potential(&self) -> &LayeredPotential {
        &self.pot
    }

    pub fn packet(&self) -> &Packet {
        &self.packet
    }

    pub fn quadrature(&self) -> &MomentumQuadrature {
        &self.quad
    }

    pub fn solutions(&self) -> &[ScatterSolution] {
        &self.sols
    }

    /// `w_k <p_k|psi(0)> e^{-i E_k t/hbar} / sqrt(2 pi hbar)`.
    pub fn phases(&self, t: f64) -> Vec<C> {
        self.coef
            .iter()
            .zip(&self.freq)
            .map(|(c, f)| c * C::from_polar(1.0, -f * t))
            .collect()
    }

    fn reflected(&self, phases: &[C], x: f64) -> (C, C) {
        let mut v = C::new(0.0, 0.0);
        let mut d = C::new(0.0, 0.0);
        for (ph, s) in phases.iter().zip(&self.sols) {
            let e = ph * s.r * C::from_polar(1.0, -s.k0 * x);
            v += e;
            d += e * C::new(0.0, -s.k0);
        }
        (v, d)
    }

    fn summed(&self, phases: &[C], x: f64) -> (C, C) {
        let mut v = C::new(0.0, 0.0);
        let mut d = C::new(0.0, 0.0);
        for (ph, s) in phases.iter().zip(&self.sols) {
            let (u, du) = s.eval(x);
            v += ph * u;
            d += ph * du;
        }
        (v, d)
    }

    /// `<x|psi(t)>` and its derivative with the absorber present.
    pub fn amplitude_and_gradient(&self, x: f64, t: f64) -> Result<(C, C), ScatterError> {
        let phases = self.phases(t);
        self.amplitude_with(&phases, x, t)
    }

    fn amplitude_with(&self, phases: &[C], x: f64, t: f64) -> Result<(C, C), ScatterError> {
        if x <= 0.0 {
            let (f, df) = self.packet.amplitude_and_gradient(x, t)?;
            let (r, dr) = self.reflected(phases, x);
            Ok((f + r, df + dr))
        } else {
            Ok(self.summed(phases, x))
        }
    }

    /// Amplitudes at many points sharing one time.
    pub fn amplitudes(&self, xs: &[f64], t: f64) -> Result<Vec<C>, ScatterError> {
        let phases = self.phases(t);
        xs.par_iter()
            .map(|&x| Ok(self.amplitude_with(&phases, x, t)?.0))
            .collect()
    }

    pub fn amplitude(&self, x: f64, t: f64) -> Result<C, ScatterError> {
        Ok(self.amplitude_and_gradient(x, t)?.0)
    }

    pub fn flux(&self, x: f64, t: f64) -> Result<f64, ScatterError> {
        let (v, d) = self.amplitude_and_gradient(x, t)?;
        let u = self.packet.units();
        Ok(u.hbar / u.mass * (v.conj() * d).im)
    }

    /// `∫_0^L |<x|psi_free(0)>|^2 dx`: how much of the initial free packet
    /// already overlaps the absorber.
    pub fn initial_overlap(&self) -> Result<f64, ScatterError> {
        Ok(self.packet.mass_between(0.0, 0.0, self.pot.width())?)
    }

    /// Quadrature nodes inside `[0, L]` fine enough for the steepest decay
    /// among the momentum nodes.
    pub fn detector(&self) -> DetectorProbe {
        DetectorProbe::new(self)
    }

    pub fn sample(&self, probe: &DetectorProbe, t: f64) -> Result<TimeSample, ScatterError> {
        let phases = self.phases(t);
        let u = self.packet.units();
        let (f, df) = self.packet.amplitude_and_gradient(0.0, t)?;
        let (mut r, mut dr) = (C::new(0.0, 0.0), C::new(0.0, 0.0));
        let (mut tr, mut dtr) = (C::new(0.0, 0.0), C::new(0.0, 0.0));
        let l = self.pot.width();
        for (ph, s) in phases.iter().zip(&self.sols) {
            let e = ph * s.r;
            r += e;
            dr += e * C::new(0.0, -s.k0);
            let et = ph * s.t * C::from_polar(1.0, s.k0 * l);
            tr += et;
            dtr += et * C::new(0.0, s.k0);
        }
        let (v, d) = (f + r, df + dr);
        Ok(TimeSample {
            t,
            flux_origin: u.hbar / u.mass * (v.conj() * d).im,
            flux_exit: u.hbar / u.mass * (tr.conj() * dtr).im,
            detector: probe.state(&phases),
        })
    }
}

/// Gauss–Legendre nodes inside the absorber with the scattering states
/// tabulated on them.
#[derive(Debug, Clone)]
pub struct DetectorProbe {
    xs: Vec<f64>,
    weights: Vec<f64>,
    // (2/hbar) |Im V(x)| times the weight
    sink: Vec<f64>,
    rows: Vec<Vec<C>>,
}

impl DetectorProbe {
    pub const ORDER: usize = 16;

    fn new(evo: &CapEvolution) -> Self {
        let pot = &evo.pot;
        let hbar = evo.packet.units().hbar;
        let gl = GaussLegendre::new(Self::ORDER);
        let d = pot.layer_width();
        let mut xs = Vec::new();
        let mut weights = Vec::new();
        let mut sink = Vec::new();
        for (j, v) in pot.layers().iter().enumerate() {
            // density decays like exp(-2 Im k x); keep it under e^{-8} per panel
            let decay = evo
                .sols
                .iter()
                .flat_map(|s| s.segments.iter().filter(|g| g.layer == j))
                .map(|g| g.wavenumber().im.abs())
                .fold(0.0, f64::max);
            let x0 = pot.layer_start(j);
            let breaks = layer_breaks(x0, d, decay);
            let (nx, nw) = gl.composite(&breaks);
            for (x, w) in nx.into_iter().zip(nw) {
                xs.push(x);
                weights.push(w);
                sink.push(2.0 / hbar * v.im.abs() * w);
            }
        }
        let rows = xs
            .par_iter()
            .map(|&x| evo.sols.iter().map(|s| s.eval(x).0).collect())
            .collect();
        Self {
            xs,
            weights,
            sink,
            rows,
        }
    }

    pub fn nodes(&self) -> &[f64] {
        &self.xs
    }

    pub fn state(&self, phases: &[C]) -> DetectorState {
        let mut mass = 0.0;
        let mut rate = 0.0;
        for ((row, w), s) in self.rows.iter().zip(&self.weights).zip(&self.sink) {
            let v: C = row.iter().zip(phases).map(|(u, p)| u * p).sum();
            let rho = v.norm_sqr();
            mass += w * rho;
            rate += s * rho;
        }
        DetectorState { mass, rate }
    }
}

// Panels a few decay lengths wide; a very strong layer gets uniform panels
// only near its edges and geometric growth towards the middle.
fn layer_breaks(x0: f64, d: f64, decay: f64) -> Vec<f64> {
    const MAX_UNIFORM: usize = 256;
    let uniform = (decay * d / 4.0).ceil().max(1.0);
    if uniform <= MAX_UNIFORM as f64 {
        let n = uniform as usize;
        return (0..=n).map(|q| x0 + d * q as f64 / n as f64).collect();
    }
    let ell = 2.0 / decay;
    let mut half = Vec::new();
    let mut pos = 0.0;
    while pos < 0.5 * d {
        half.push(pos);
        pos += if pos < 40.0 * ell { ell } else { pos };
    }
    let mut b: Vec<f64> = half.iter().map(|u| x0 + u).collect();
    b.push(x0 + 0.5 * d);
    b.extend(half.iter().rev().map(|u| x0 + d - u));
    b
}

/// `<x|psi(t)>` with the absorber, converged to 1e-8 under node doubling
/// starting from `quad`.
pub fn evolve_with_cap(
    pot: &LayeredPotential,
    packet: &Packet,
    quad: &MomentumQuadrature,
    x: f64,
    t: f64,
) -> Result<C, ScatterError> {
    let mut evo = CapEvolution::new(pot, packet, quad.clone())?;
    let mut value = evo.amplitude(x, t)?;
    loop {
        let fine = evo.refined()?;
        let v = fine.amplitude(x, t)?;
        let change = (v - value).norm() / v.norm().max(1.0);
        if change <= 1e-8 {
            return Ok(v);
        }
        if fine.quad.len() >= MomentumQuadrature::MAX_NODES {
            return Err(ScatterError::NotConverged {
                x,
                t,
                change,
                nodes: fine.quad.len(),
            });
        }
        evo = fine;
        value = v;
    }
}

/// Norm bookkeeping at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Norms {
    pub total: f64,
    /// Mass left of the origin.
    pub left: f64,
    /// Mass right of the origin (inside the absorber plus transmitted).
    pub right: f64,
    pub detector: f64,
    pub transmitted: f64,
    /// Estimated mass outside the resolved windows.
    pub tail: f64,
}

// Margin, in units of the packet's tail length, added around the reflected
// and transmitted packets.
const TAIL_MARGIN: f64 = 8.0;
const TAIL_LIMIT: f64 = 1e-8;

fn spatial_window(packet: &Packet, pot: &LayeredPotential, t: f64) -> (f64, f64) {
    let (_, p_hi) = packet.momentum_support(1e-28);
    let m = packet.units().mass;
    let x0 = packet.params().x0;
    let w = TAIL_MARGIN * packet.tail_scale(t);
    let far = x0 + p_hi * t.max(0.0) / m;
    let lo = (-far).min(0.0) - w;
    let hi = far.max(pot.width()) + w;
    (lo, hi)
}

// `2 Re ∫_{-∞}^0 conj(psi_free) psi_refl dx`. The x integral of
// `e^{-i(k+k')x}` over the half line is `i/(k+k')`, which leaves a smooth
// double sum over the momentum nodes.
fn interference(evo: &CapEvolution, t: f64) -> f64 {
    let phases = evo.phases(t);
    let a: Vec<C> = phases.iter().zip(&evo.sols).map(|(ph, s)| ph * s.r).collect();
    let k: Vec<f64> = evo.sols.iter().map(|s| s.k0).collect();
    // collected before summing so the result does not depend on threading
    let rows: Vec<C> = phases
        .par_iter()
        .zip(&k)
        .map(|(pi, ki)| {
            let inner: C = a.iter().zip(&k).map(|(aj, kj)| aj / (ki + kj)).sum();
            pi.conj() * inner
        })
        .collect();
    let total: C = rows.iter().sum();
    2.0 * (C::i() * total).re
}

// Interference evaluator refined until doubling moves it by < 1e-13 at
// each of `times`.
fn interference_evolution(
    pot: &LayeredPotential,
    packet: &Packet,
    times: (f64, f64),
) -> Result<CapEvolution, ScatterError> {
    let mut evo = CapEvolution::converged(pot, packet, &Window::new((0.0, 0.0), times), 1e-10)?;
    loop {
        let fine = evo.refined()?;
        let change = [times.0, times.1]
            .iter()
            .map(|&t| (interference(&evo, t) - interference(&fine, t)).abs())
            .fold(0.0, f64::max);
        if change < 1e-13 {
            return Ok(fine);
        }
        if fine.quad.len() >= MomentumQuadrature::MAX_NODES {
            return Err(ScatterError::NotConverged {
                x: 0.0,
                t: times.0,
                change,
                nodes: fine.quad.len(),
            });
        }
        evo = fine;
    }
}

fn norms_with(
    evo: &CapEvolution,
    cross: &CapEvolution,
    t: f64,
    lo: f64,
    hi: f64,
) -> Result<Norms, ScatterError> {
    let packet = &evo.packet;
    let l = evo.pot.width();
    let phases = evo.phases(t);
    let free_left = packet.mass_between(t, f64::NEG_INFINITY, 0.0)?;
    let tol = Tolerance::new(1e-14, 1e-12).with_max_intervals(200_000);
    let breaks: Vec<f64> = packet.position_breaks(t).iter().map(|x| -x).collect();
    let reflected = quadrature::adaptive_scalar(
        |x| evo.reflected(&phases, x).0.norm_sqr(),
        lo.min(0.0),
        0.0,
        &breaks,
        tol,
    )?;
    let correction = interference(cross, t) + reflected;
    let probe = evo.detector();
    let detector = probe.state(&phases).mass;
    let tbreaks = packet.position_breaks(t);
    let transmitted = quadrature::adaptive_scalar(
        |x| {
            let mut v = C::new(0.0, 0.0);
            for (ph, s) in phases.iter().zip(&evo.sols) {
                v += ph * s.t * C::from_polar(1.0, s.k0 * x);
            }
            v.norm_sqr()
        },
        l,
        hi.max(l),
        &tbreaks,
        tol,
    )?;
    // outside [lo, hi]: the reflected (transmitted) packet is bounded by the
    // largest |R| (|T|) times the free packet's mirrored (shifted) tail
    let r_max = evo.sols.iter().map(|s| s.r.norm()).fold(0.0, f64::max);
    let t_max = evo.sols.iter().map(|s| s.t.norm()).fold(0.0, f64::max);
    let refl_beyond = r_max * r_max * packet.mass_between(t, -lo, f64::INFINITY)?;
    let trans_beyond = t_max * t_max * packet.mass_between(t, hi, f64::INFINITY)?;
    let tail = refl_beyond + trans_beyond;
    let left = free_left + correction;
    let right = detector + transmitted;
    Ok(Norms {
        total: left + right,
        left,
        right,
        detector,
        transmitted,
        tail,
    })
}

/// `N(t)`, `N^-(t)`, `N^+(t)` with the absorber, converged under node doubling.
pub fn norms(pot: &LayeredPotential, packet: &Packet, t: f64) -> Result<Norms, ScatterError> {
    let (lo, hi) = spatial_window(packet, pot, t);
    let window = Window::new((lo, hi), (t, t));
    let evo = CapEvolution::converged(pot, packet, &window, 1e-9)?;
    let cross = interference_evolution(pot, packet, (t, t))?;
    let n = norms_with(&evo, &cross, t, lo, hi)?;
    if n.tail > TAIL_LIMIT {
        return Err(ScatterError::TailBound {
            t,
            estimate: n.tail,
            limit: TAIL_LIMIT,
        });
    }
    Ok(n)
}

/// `-dN/dt` from the volume formula and from differentiating `N(t)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AbsorptionRate {
    pub t: f64,
    pub volume: f64,
    pub finite_difference: f64,
    /// `dN^-/dt` by differentiating the mass left of the origin.
    pub left_rate: f64,
    /// `J(0,t)` with the absorber.
    pub flux_origin: f64,
}

impl AbsorptionRate {
    /// Fails when the two methods differ by more than `rel * peak`.
    pub fn check(&self, peak: f64, rel: f64) -> Result<(), ScatterError> {
        if (self.volume - self.finite_difference).abs() > rel * peak {
            return Err(ScatterError::MethodDisagreement {
                t: self.t,
                volume: self.volume,
                finite_difference: self.finite_difference,
            });
        }
        Ok(())
    }
}

/// Step for the finite-difference cross-check of `-dN/dt`.
pub const RATE_STEP: f64 = 1e-7;

pub fn absorption_rate(
    pot: &LayeredPotential,
    packet: &Packet,
    t: f64,
) -> Result<AbsorptionRate, ScatterError> {
    let h = RATE_STEP;
    let (lo, hi) = spatial_window(packet, pot, t + 2.0 * h);
    let window = Window::new((lo, hi), (t - 2.0 * h, t + 2.0 * h));
    let evo = CapEvolution::converged(pot, packet, &window, 1e-9)?;
    let volume = evo.detector().state(&evo.phases(t)).rate;
    let cross = interference_evolution(pot, packet, (t - 2.0 * h, t + 2.0 * h))?;
    let n = [-2.0, -1.0, 1.0, 2.0]
        .iter()
        .map(|k| norms_with(&evo, &cross, t + k * h, lo, hi))
        .collect::<Result<Vec<_>, _>>()?;
    let fd = |f: fn(&Norms) -> f64| {
        (f(&n[0]) - 8.0 * f(&n[1]) + 8.0 * f(&n[2]) - f(&n[3])) / (12.0 * h)
    };
    Ok(AbsorptionRate {
        t,
        volume,
        finite_difference: -fd(|n| n.total),
        left_rate: fd(|n| n.left),
        flux_origin: evo.flux(0.0, t)?,
    })
}

/// Time integrals over a window, all from one adaptive pass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeIntegrals {
    pub window: (f64, f64),
    pub nodes: usize,
    /// `∫ -dN/dt dt`.
    pub absorbed: f64,
    pub absorbed_moment: f64,
    /// `∫ J(0,t) dt` with the absorber.
    pub flux_origin: f64,
    pub flux_origin_moment: f64,
    /// `∫ J(L,t) dt`.
    pub flux_exit: f64,
    pub flux_exit_moment: f64,
    /// `∫ J(0,t) dt` of the free packet.
    pub free_flux: f64,
    pub free_flux_moment: f64,
    /// `∫ N_D dt`, `N_D = ∫_0^L |psi|^2 dx`.
    pub dwell: f64,
    pub detector_start: f64,
    pub detector_end: f64,
    pub error: f64,
}

/// Default node cap for the long windows used by [`time_integrals`].
pub const LONG_WINDOW_MAX_NODES: usize = 1 << 16;

pub fn time_integrals(
    pot: &LayeredPotential,
    packet: &Packet,
    t_window: (f64, f64),
    max_nodes: usize,
) -> Result<TimeIntegrals, ScatterError> {
    let window = Window::new((0.0, pot.width()), t_window);
    let evo = CapEvolution::converged_with_cap(pot, packet, &window, 1e-9, max_nodes)?;
    let probe = evo.detector();
    let failure = std::cell::RefCell::new(None);
    let r = quadrature::adaptive(
        |t| match (evo.sample(&probe, t), packet.flux(0.0, t)) {
            (Ok(s), Ok(jf)) => {
                let a = s.detector.rate;
                [
                    a,
                    t * a,
                    s.flux_origin,
                    t * s.flux_origin,
                    s.flux_exit,
                    t * s.flux_exit,
                    jf,
                    t * jf,
                    s.detector.mass,
                ]
            }
            (Err(e), _) => {
                failure.borrow_mut().get_or_insert(e);
                [0.0; 9]
            }
            (_, Err(e)) => {
                failure.borrow_mut().get_or_insert(e.into());
                [0.0; 9]
            }
        },
        t_window.0,
        t_window.1,
        &packet_time_breaks(packet, t_window),
        Tolerance::new(1e-13, 1e-11).with_max_intervals(200_000),
    )?;
    if let Some(e) = failure.into_inner() {
        return Err(e);
    }
    let v = r.value;
    let ends = |t: f64| probe.state(&evo.phases(t)).mass;
    Ok(TimeIntegrals {
        window: t_window,
        nodes: evo.quad.len(),
        absorbed: v[0],
        absorbed_moment: v[1],
        flux_origin: v[2],
        flux_origin_moment: v[3],
        flux_exit: v[4],
        flux_exit_moment: v[5],
        free_flux: v[6],
        free_flux_moment: v[7],
        dwell: v[8],
        detector_start: ends(t_window.0),
        detector_end: ends(t_window.1),
        error: r.error.iter().fold(0.0, |m: f64, e| m.max(*e)),
    })
}

/// Default window for whole-history integrals of the reference packet.
pub const HISTORY_WINDOW: (f64, f64) = (-6e-3, 6e-3);

/// Mean dwell time in the absorber.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DwellTime {
    pub value: f64,
    /// Estimated contribution from outside the integration window.
    pub tail: f64,
    pub integrals: TimeIntegrals,
}

/// `∫ dt ∫_0^L |psi|^2 dx` over `t_window` plus a tail estimate.
pub fn dwell_time(
    pot: &LayeredPotential,
    packet: &Packet,
    t_window: (f64, f64),
) -> Result<DwellTime, ScatterError> {
    let ti = time_integrals(pot, packet, t_window, LONG_WINDOW_MAX_NODES)?;
    dwell_from(packet, ti)
}

fn dwell_from(packet: &Packet, ti: TimeIntegrals) -> Result<DwellTime, ScatterError> {
    // free mass arriving outside the window spends, on average, as long
    // in the absorber per unit absorbed as the mass inside it
    let (_, before) = packet.half_line_norms(ti.window.0)?;
    let (after, _) = packet.half_line_norms(ti.window.1)?;
    let tail = (before + after) * ti.dwell / ti.absorbed.max(f64::MIN_POSITIVE);
    Ok(DwellTime {
        value: ti.dwell + tail,
        tail,
        integrals: ti,
    })
}

/// Total absorbed probability computed in the time domain and from the
/// momentum distribution, `1 - ∫ |<p|psi>|^2 (|R|^2 + |T|^2) dp`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TotalAbsorption {
    pub time_domain: f64,
    pub momentum_domain: f64,
    /// Part of `time_domain` estimated outside the window.
    pub tail: f64,
    pub integrals: TimeIntegrals,
}

pub fn momentum_absorption(pot: &LayeredPotential, packet: &Packet) -> Result<f64, ScatterError> {
    Ok(1.0 - mean_survival(pot, packet)?)
}

/// `∫ |<p|psi>|^2 (|R|^2 + |T|^2) dp`.
pub fn mean_survival(pot: &LayeredPotential, packet: &Packet) -> Result<f64, ScatterError> {
    let (p_lo, p_hi) = packet.momentum_support(1e-28);
    let units = *packet.units();
    let failure = std::cell::RefCell::new(None);
    let breaks: Vec<f64> = (1..64)
        .map(|j| p_lo + (p_hi - p_lo) * (j as f64 / 64.0).powi(2))
        .collect();
    let r = quadrature::adaptive_scalar(
        |p| match solve_scatter(pot, p, &units) {
            Ok(s) => packet.momentum_density(p) * s.survival,
            Err(e) => {
                failure.borrow_mut().get_or_insert(e);
                0.0
            }
        },
        p_lo,
        p_hi,
        &breaks,
        Tolerance::new(1e-15, 1e-13),
    )?;
    if let Some(e) = failure.into_inner() {
        return Err(e);
    }
    Ok(r)
}

pub fn total_absorption(
    pot: &LayeredPotential,
    packet: &Packet,
    t_window: (f64, f64),
) -> Result<TotalAbsorption, ScatterError> {
    let ti = time_integrals(pot, packet, t_window, LONG_WINDOW_MAX_NODES)?;
    total_from(pot, packet, ti)
}

fn total_from(
    pot: &LayeredPotential,
    packet: &Packet,
    ti: TimeIntegrals,
) -> Result<TotalAbsorption, ScatterError> {
    let survival = mean_survival(pot, packet)?;
    let (_, before) = packet.half_line_norms(ti.window.0)?;
    let (after, _) = packet.half_line_norms(ti.window.1)?;
    // free mass crossing the origin outside the window is absorbed like the
    // packet on average; what sits in the absorber at the ends is absorbed
    // after the window closes, or was not yet absorbed when it opened
    let tail = (before + after) * (1.0 - survival) + ti.detector_end - ti.detector_start;
    Ok(TotalAbsorption {
        time_domain: ti.absorbed + tail,
        momentum_domain: 1.0 - survival,
        tail,
        integrals: ti,
    })
}

/// Dwell time and total absorption sharing one time pass.
pub fn history(
    pot: &LayeredPotential,
    packet: &Packet,
    t_window: (f64, f64),
) -> Result<(DwellTime, TotalAbsorption), ScatterError> {
    let ti = time_integrals(pot, packet, t_window, LONG_WINDOW_MAX_NODES)?;
    Ok((dwell_from(packet, ti)?, total_from(pot, packet, ti)?))
}

/// Time breakpoints for adaptive integrals over `window`: the arrival times
/// at the origin of a ladder of momenta.
pub fn packet_time_breaks(packet: &Packet, window: (f64, f64)) -> Vec<f64> {
    let (p_lo, p_hi) = packet.momentum_support(1e-16);
    let m = packet.units().mass;
    let x0 = packet.params().x0;
    let mut out = Vec::new();
    for j in 0..=32 {
        let p = p_lo + (p_hi - p_lo) * (j as f64 / 32.0).powi(2);
        if p > 0.0 {
            let t = -x0 * m / p;
            if t > window.0 && t < window.1 {
                out.push(t);
            }
        }
    }
    out.push(0.0);
    out.retain(|t| *t > window.0 && *t < window.1);
    out.sort_by(f64::total_cmp);
    out.dedup();
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wavepacket::PacketParams;

    fn compact() -> Packet {
        // well separated from the absorber, short tails
        Packet::atomic(PacketParams {
            alpha: 1e-4,
            delta: 0.01,
            p0: 1.0,
            x0: -0.3,
            b: 400.0,
        })
        .unwrap()
    }

    #[test]
    fn quadrature_refinement_doubles_nodes() {
        let p = compact();
        let q = MomentumQuadrature::for_window(&p, &Window::new((-0.5, 0.01), (0.0, 1e-3)));
        let r = q.refined();
        assert_eq!(r.len(), 2 * q.len());
        assert!(q.weights.iter().all(|w| *w > 0.0));
        assert!(q.nodes.iter().all(|x| *x > q.p_lo && *x < q.p_hi));
        let s: f64 = q.weights.iter().sum();
        assert!((s - (q.p_hi - q.p_lo)).abs() < 1e-9 * s);
    }

    #[test]
    fn zero_potential_reproduces_free_packet() {
        let p = compact();
        let pot = LayeredPotential::free(0.01, 4);
        let quad = MomentumQuadrature::for_window(&p, &Window::new((-0.5, 0.1), (0.0, 1.2e-3)));
        for (x, t) in [(-0.3, 0.0), (0.004, 7e-4), (0.05, 1e-3), (-0.1, 3e-4)] {
            let a = evolve_with_cap(&pot, &p, &quad, x, t).unwrap();
            let b = p.amplitude(x, t).unwrap();
            assert!((a - b).norm() < 1e-9, "({x}, {t}): {a} vs {b}");
        }
    }
}
