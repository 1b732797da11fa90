//! Free packets built only from positive momenta,
//! `<p|psi> = C (1 - exp(-a p^2/hbar^2)) exp(-d^2 (p - p0)^2/hbar^2 - i p x0/hbar)`,
//! their closed-form position representation through the Faddeeva function,
//! and the Galilean boost `<p|psi'> = <p - b|psi>`.

use std::fmt;

use num_complex::Complex64;
use thiserror::Error;

use crate::quadrature::{self, QuadratureError, Tolerance};
use crate::specfun::{faddeeva_w, faddeeva_w_prime_scaled, faddeeva_w_scaled, SpecFunError};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Units {
    pub hbar: f64,
    pub mass: f64,
}

impl Units {
    pub const ATOMIC: Units = Units {
        hbar: 1.0,
        mass: 1.0,
    };
}

impl Default for Units {
    fn default() -> Self {
        Self::ATOMIC
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PacketParams {
    pub alpha: f64,
    pub delta: f64,
    pub p0: f64,
    pub x0: f64,
    /// Boost momentum applied at `t = 0`.
    pub b: f64,
}

impl PacketParams {
    /// Reference packet, with one backflow interval at the origin.
    pub fn reference() -> Self {
        Self {
            alpha: 1.4,
            delta: 0.007,
            p0: 1.0,
            x0: -0.22,
            b: 300.0,
        }
    }

    pub fn with_boost(self, b: f64) -> Self {
        Self { b, ..self }
    }

    /// Checks the parameter invariants. Packets starting between `-10 delta`
    /// and `-3 delta` from the origin are accepted with a warning.
    pub fn validate(&self) -> Result<Vec<PacketWarning>, PacketError> {
        let Self {
            alpha,
            delta,
            p0,
            x0,
            b,
        } = *self;
        if ![alpha, delta, p0, x0, b].iter().all(|v| v.is_finite()) {
            return Err(PacketError::InvalidParams("non-finite parameter".into()));
        }
        if delta <= 0.0 {
            return Err(PacketError::InvalidParams(format!("delta = {delta} must be positive")));
        }
        if delta * delta + alpha <= 0.0 {
            return Err(PacketError::InvalidParams(format!(
                "delta^2 + alpha = {} must be positive",
                delta * delta + alpha
            )));
        }
        if p0 <= 0.0 {
            return Err(PacketError::InvalidParams(format!("p0 = {p0} must be positive")));
        }
        if b < 0.0 {
            return Err(PacketError::InvalidParams(format!("boost b = {b} must be >= 0")));
        }
        if x0 > -3.0 * delta {
            return Err(PacketError::InvalidParams(format!(
                "x0 = {x0} must lie well left of the origin (x0 <= -10 delta)"
            )));
        }
        let mut warnings = Vec::new();
        if x0 > -10.0 * delta {
            warnings.push(PacketWarning::StartsNearOrigin { x0, delta });
        }
        Ok(warnings)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PacketWarning {
    StartsNearOrigin { x0: f64, delta: f64 },
}

impl fmt::Display for PacketWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PacketWarning::StartsNearOrigin { x0, delta } => {
                write!(f, "x0 = {x0} is within 10 delta (delta = {delta}) of the origin")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PacketError {
    #[error("invalid packet parameters: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
    #[error(transparent)]
    Special(#[from] SpecFunError),
}

/// A normalized packet. Construction fixes `C` by quadrature.
#[derive(Debug, Clone)]
pub struct Packet {
    params: PacketParams,
    units: Units,
    c: f64,
    warnings: Vec<PacketWarning>,
}

/// `C > 0` making the momentum density integrate to one.
pub fn normalize(params: &PacketParams, units: &Units) -> Result<f64, PacketError> {
    params.validate()?;
    let integral = momentum_mass(params, units, 1.0)?;
    Ok(integral.sqrt().recip())
}

// ∫ |<p|psi>|^2 dp for amplitude prefactor `c`.
fn momentum_mass(params: &PacketParams, units: &Units, c: f64) -> Result<f64, PacketError> {
    let hbar = units.hbar;
    let q_hi = params.p0.max(0.0) + gaussian_reach(params, hbar, 1e-40);
    let mut breaks = vec![params.p0];
    for k in [1.0, 2.0, 4.0, 8.0] {
        breaks.push(params.p0 + k * hbar / params.delta);
        breaks.push(params.p0 - k * hbar / params.delta);
    }
    if params.alpha != 0.0 {
        let s = hbar / params.alpha.abs().sqrt();
        for k in [0.25, 0.5, 1.0, 2.0, 4.0] {
            breaks.push(k * s);
        }
    }
    let density = |q: f64| {
        let a = momentum_factor(params, hbar, q);
        c * c * a * a
    };
    Ok(quadrature::adaptive_scalar(
        density,
        0.0,
        q_hi,
        &breaks,
        Tolerance::new(1e-15, 1e-14),
    )?)
}

// Real modulus of the amplitude at shifted momentum q > 0, without C.
fn momentum_factor(params: &PacketParams, hbar: f64, q: f64) -> f64 {
    if q <= 0.0 {
        return 0.0;
    }
    let k = q / hbar;
    let u = (q - params.p0) / hbar;
    -(-params.alpha * k * k).exp_m1() * (-params.delta * params.delta * u * u).exp()
}

// Distance past p0 beyond which the Gaussian factor of the density has
// integrated tail below `eps`.
fn gaussian_reach(params: &PacketParams, hbar: f64, eps: f64) -> f64 {
    // for negative alpha the p^2 factor grows; the decay rate is delta^2 + alpha
    let d2 = if params.alpha < 0.0 {
        params.delta * params.delta + params.alpha
    } else {
        params.delta * params.delta
    };
    let d = d2.sqrt();
    let l = (hbar / (d * eps)).ln().max(1.0);
    hbar / d * (0.5 * l).sqrt() + 2.0 * hbar / d
}

/// Closed-form `C'` of the position representation, independent of the
/// numerical normalization.
pub fn c_prime_closed_form(params: &PacketParams, units: &Units) -> Result<f64, PacketError> {
    params.validate()?;
    let k0 = params.p0 / units.hbar;
    let d = params.delta;
    let d2 = d * d;
    let a = params.alpha;
    let i = Complex64::i();
    let t1 = faddeeva_w(-i * (2f64.sqrt() * k0 * d))? / (2f64.powf(1.5) * d);
    let r2 = (2.0 * d2 + a).sqrt();
    let t2 = faddeeva_w(-i * (2.0 * k0 * d2 / r2))? / r2;
    let r3 = (2.0 * (d2 + a)).sqrt();
    let t3 = faddeeva_w(-i * (2.0 * k0 * d2 / r3))? / (8.0 * (d2 + a)).sqrt();
    let brace = (t1 - t2 + t3).re;
    Ok(brace.powf(-0.5) / (2f64.powf(1.5) * std::f64::consts::PI.powf(0.25)))
}

impl Packet {
    pub fn new(params: PacketParams, units: Units) -> Result<Self, PacketError> {
        let warnings = params.validate()?;
        let c = normalize(&params, &units)?;
        Ok(Self {
            params,
            units,
            c,
            warnings,
        })
    }

    pub fn atomic(params: PacketParams) -> Result<Self, PacketError> {
        Self::new(params, Units::ATOMIC)
    }

    pub fn params(&self) -> &PacketParams {
        &self.params
    }

    pub fn units(&self) -> &Units {
        &self.units
    }

    pub fn norm_constant(&self) -> f64 {
        self.c
    }

    pub fn warnings(&self) -> &[PacketWarning] {
        &self.warnings
    }

    /// Same packet without the boost; `C` is unchanged by the momentum shift.
    pub fn unboosted(&self) -> Packet {
        self.with_boost(0.0)
    }

    pub fn with_boost(&self, b: f64) -> Packet {
        Packet {
            params: self.params.with_boost(b),
            ..self.clone()
        }
    }

    /// The same state displaced by `dx`.
    pub fn shifted(&self, dx: f64) -> Packet {
        let mut p = self.clone();
        p.params.x0 += dx;
        p
    }

    /// `<p|psi'(0)>`; zero for `p <= b`.
    pub fn momentum_amplitude(&self, p: f64) -> Complex64 {
        let q = p - self.params.b;
        if q <= 0.0 {
            return Complex64::new(0.0, 0.0);
        }
        let m = self.c * momentum_factor(&self.params, self.units.hbar, q);
        Complex64::from_polar(m, -q * self.params.x0 / self.units.hbar)
    }

    pub fn momentum_density(&self, p: f64) -> f64 {
        let m = self.c * momentum_factor(&self.params, self.units.hbar, p - self.params.b);
        m * m
    }

    /// `[p_lo, p_hi]` outside of which the momentum density carries less than
    /// `eps` of the norm. The lower end is the boost, where the amplitude vanishes.
    pub fn momentum_support(&self, eps: f64) -> (f64, f64) {
        let hbar = self.units.hbar;
        let reach = gaussian_reach(&self.params, hbar, eps / (self.c * self.c));
        (self.params.b, self.params.b + self.params.p0.max(0.0) + reach)
    }

    /// `C'` of the w-function form, from the numerical `C`.
    pub fn c_prime(&self) -> f64 {
        let k0 = self.params.p0 / self.units.hbar;
        let s = k0 * k0 * self.params.delta * self.params.delta;
        self.c * self.units.hbar.sqrt() / (2.0 * 2f64.sqrt()) * (-s).exp()
    }

    /// Unboosted amplitude and its x-derivative at `x`, time `t`.
    pub fn rest_frame(&self, x: f64, t: f64) -> Result<(Complex64, Complex64), PacketError> {
        let PacketParams {
            alpha, delta, p0, x0, ..
        } = self.params;
        let Units { hbar, mass } = self.units;
        let k0 = p0 / hbar;
        let d2 = delta * delta;
        let s = k0 * k0 * d2;
        let pref = self.c * hbar.sqrt() / (2.0 * 2f64.sqrt());
        let a = Complex64::new(d2, hbar * t / (2.0 * mass));
        let aa = a + alpha;
        let g = Complex64::new(2.0 * k0 * d2, x - x0);
        let sa = a.sqrt();
        let sb = aa.sqrt();
        let mi = Complex64::new(0.0, -1.0);
        let z1 = mi * g / (2.0 * sa);
        let z2 = mi * g / (2.0 * sb);
        let psi = pref * (faddeeva_w_scaled(z1, s)? / sa - faddeeva_w_scaled(z2, s)? / sb);
        let dpsi = pref
            * (faddeeva_w_prime_scaled(z1, s)? / (2.0 * a)
                - faddeeva_w_prime_scaled(z2, s)? / (2.0 * aa));
        Ok((psi, dpsi))
    }

    /// `<x|psi'(t)>` and `d/dx <x|psi'(t)>` including the boost phase.
    pub fn amplitude_and_gradient(
        &self,
        x: f64,
        t: f64,
    ) -> Result<(Complex64, Complex64), PacketError> {
        let b = self.params.b;
        if b == 0.0 {
            return self.rest_frame(x, t);
        }
        let Units { hbar, mass } = self.units;
        let (psi, dpsi) = self.rest_frame(x - b * t / mass, t)?;
        let phase = Complex64::from_polar(1.0, (b * x - b * b * t / (2.0 * mass)) / hbar);
        let ik = Complex64::new(0.0, b / hbar);
        Ok((phase * psi, phase * (dpsi + ik * psi)))
    }

    pub fn amplitude(&self, x: f64, t: f64) -> Result<Complex64, PacketError> {
        let b = self.params.b;
        if b == 0.0 {
            return Ok(self.rest_frame(x, t)?.0);
        }
        let Units { hbar, mass } = self.units;
        let (psi, _) = self.rest_frame(x - b * t / mass, t)?;
        Ok(Complex64::from_polar(1.0, (b * x - b * b * t / (2.0 * mass)) / hbar) * psi)
    }

    pub fn density(&self, x: f64, t: f64) -> Result<f64, PacketError> {
        let b = self.params.b;
        Ok(self.rest_frame(x - b * t / self.units.mass, t)?.0.norm_sqr())
    }

    /// Probability current `(hbar/m) Im(psi* dpsi/dx)`.
    pub fn flux(&self, x: f64, t: f64) -> Result<f64, PacketError> {
        let (psi, dpsi) = self.amplitude_and_gradient(x, t)?;
        Ok(self.units.hbar / self.units.mass * (psi.conj() * dpsi).im)
    }

    /// Feature locations of the density at time `t` (lab frame), used as
    /// quadrature breakpoints.
    pub fn position_breaks(&self, t: f64) -> Vec<f64> {
        let PacketParams {
            alpha,
            delta,
            p0,
            x0,
            b,
        } = self.params;
        let Units { hbar, mass } = self.units;
        let tau = hbar * t / (2.0 * mass);
        let d2 = delta * delta;
        let w = (d2 + tau * tau / d2).sqrt();
        let wb = ((d2 + alpha) + tau * tau / (d2 + alpha)).sqrt();
        let centre = x0 + b * t / mass;
        let mut out = vec![centre];
        for j in [1.0, 2.0, 4.0, 8.0, 16.0] {
            out.push(centre + j * w);
            out.push(centre - j * w);
        }
        for j in [0.5, 1.0, 2.0, 4.0, 8.0] {
            out.push(centre + j * wb);
            out.push(centre - j * wb);
        }
        let q_hi = p0 + gaussian_reach(&self.params, hbar, 1e-16);
        for j in 1..=16 {
            out.push(centre + q_hi * j as f64 / 16.0 * t / mass);
        }
        out.sort_by(f64::total_cmp);
        out.dedup();
        out
    }

    /// Length scale for the algebraic tails of the density at time `t`.
    pub fn tail_scale(&self, t: f64) -> f64 {
        let PacketParams { alpha, delta, .. } = self.params;
        let tau = self.units.hbar * t / (2.0 * self.units.mass);
        let d2 = delta * delta;
        ((d2 + alpha) + tau * tau / (d2 + alpha)).sqrt()
    }

    /// `∫_a^b |<x|psi'(t)>|^2 dx`; either end may be infinite.
    pub fn mass_between(&self, t: f64, a: f64, b: f64) -> Result<f64, PacketError> {
        let breaks = self.position_breaks(t);
        let mut err = None;
        let v = quadrature::adaptive_line(
            |x| match self.density(x, t) {
                Ok(v) => v,
                Err(e) => {
                    err.get_or_insert(e);
                    0.0
                }
            },
            a,
            b,
            &breaks,
            self.tail_scale(t),
            Tolerance::new(1e-14, 1e-13),
        )?;
        match err {
            Some(e) => Err(e),
            None => Ok(v),
        }
    }

    /// `(N^-(t), N^+(t))` for free motion: the mass left and right of `x = 0`.
    pub fn half_line_norms(&self, t: f64) -> Result<(f64, f64), PacketError> {
        let left = self.mass_between(t, f64::NEG_INFINITY, 0.0)?;
        let right = self.mass_between(t, 0.0, f64::INFINITY)?;
        Ok((left, right))
    }
}

/// `<x|psi'(t)>` of the free packet.
pub fn position_amplitude_free(packet: &Packet, x: f64, t: f64) -> Result<Complex64, PacketError> {
    packet.amplitude(x, t)
}

/// Free probability current at `(x, t)`.
pub fn flux_free(packet: &Packet, x: f64, t: f64) -> Result<f64, PacketError> {
    packet.flux(x, t)
}

/// `|J_psi'(0,t) - J_psi(-bt/m, t) - (b/m) |psi(-bt/m, t)|^2|` with `psi` the
/// unboosted packet.
pub fn boost_flux_relation_check(packet: &Packet, t: f64) -> Result<f64, PacketError> {
    let b = packet.params.b;
    let m = packet.units.mass;
    let rest = packet.unboosted();
    let xs = -b * t / m;
    let lhs = packet.flux(0.0, t)?;
    let rhs = rest.flux(xs, t)? + b / m * rest.density(xs, t)?;
    Ok((lhs - rhs).abs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn reference() -> Packet {
        Packet::atomic(PacketParams::reference()).unwrap()
    }

    #[test]
    fn amplitude_vanishes_at_and_below_boost() {
        let p = reference();
        assert_eq!(p.momentum_amplitude(300.0), Complex64::new(0.0, 0.0));
        assert_eq!(p.momentum_amplitude(299.0), Complex64::new(0.0, 0.0));
        assert!(p.momentum_amplitude(300.5).norm() > 0.0);
    }

    #[test]
    fn normalization_is_idempotent() {
        let p = reference();
        let again = momentum_mass(&p.params, &p.units, p.c).unwrap();
        assert!((again - 1.0).abs() < 1e-12);
        let doubled = momentum_mass(&p.params, &p.units, 2.0 * p.c).unwrap();
        assert!((doubled - 4.0).abs() < 4e-12);
    }

    #[test]
    fn density_peaks_inside_band() {
        let p = reference();
        let (mut best, mut arg) = (0.0, 0.0);
        for i in 0..=20_000 {
            let q = 300.0 + i as f64 * 0.01;
            let d = p.momentum_density(q);
            if d > best {
                best = d;
                arg = q;
            }
        }
        assert!((260.0..=340.0).contains(&arg), "peak at {arg}");
    }

    #[test]
    fn validation() {
        let mut bad = PacketParams::reference();
        bad.alpha = -1.0;
        assert!(bad.validate().is_err());
        let mut near = PacketParams::reference();
        near.x0 = -0.05;
        assert_eq!(near.validate().unwrap().len(), 1);
        near.x0 = -0.01;
        assert!(near.validate().is_err());
        assert!(PacketParams::reference().with_boost(-1.0).validate().is_err());
        assert!(PacketParams::reference().validate().unwrap().is_empty());
    }

    #[test]
    fn unboosted_at_centre_is_definitional() {
        let p = reference().unboosted();
        let PacketParams {
            alpha, delta, p0, x0, ..
        } = p.params;
        let k0 = p0;
        let g = Complex64::new(2.0 * k0 * delta * delta, 0.0);
        let a = Complex64::new(delta * delta, 0.0);
        let i = Complex64::i();
        let w1 = faddeeva_w(-i * g / (2.0 * a.sqrt())).unwrap() / a.sqrt();
        let w2 = faddeeva_w(-i * g / (2.0 * (a + alpha).sqrt())).unwrap() / (a + alpha).sqrt();
        let direct = p.c_prime() * (w1 - w2);
        let got = p.amplitude(x0, 0.0).unwrap();
        assert!((got - direct).norm() < 1e-13 * direct.norm());
    }

    #[test]
    fn zero_boost_flux_is_rest_frame_flux() {
        let p = reference().unboosted();
        for t in [0.0, 2e-4, 7e-4] {
            assert_eq!(boost_flux_relation_check(&p, t).unwrap(), 0.0);
        }
    }

    #[test]
    fn boost_relation_residual() {
        let p = reference();
        for t in [0.0, 3e-4, 7e-4, 1.2e-3] {
            let r = boost_flux_relation_check(&p, t).unwrap();
            assert!(r <= 1e-10, "t = {t}: {r:e}");
        }
    }

    #[test]
    fn position_norm_is_one() {
        let p = reference();
        for t in [0.0, 7e-4] {
            let n = p.mass_between(t, f64::NEG_INFINITY, f64::INFINITY).unwrap();
            assert!((n - 1.0).abs() < 1e-8, "t = {t}: {n}");
        }
    }

    #[test]
    fn half_lines_sum_to_one() {
        let p = reference();
        for t in [-2e-3, 0.0, 4e-4, 3e-3] {
            let (l, r) = p.half_line_norms(t).unwrap();
            assert!((l + r - 1.0).abs() < 1e-10, "t = {t}");
        }
    }

    #[test]
    fn boosted_support_starts_at_boost() {
        let p = reference();
        let (lo, hi) = p.momentum_support(1e-14);
        assert_eq!(lo, 300.0);
        assert!(hi > 900.0 && hi < 2000.0, "{hi}");
    }

    // fourth-order central difference
    fn d5(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
        (f(x - 2.0 * h) - 8.0 * f(x - h) + 8.0 * f(x + h) - f(x + 2.0 * h)) / (12.0 * h)
    }

    proptest! {
        #[test]
        fn continuity_equation(x in -0.3f64..0.05, t in 1e-4f64..1.2e-3) {
            let p = reference();
            let drho = d5(|s| p.density(x, s).unwrap(), t, 2e-8);
            let dj = d5(|y| p.flux(y, t).unwrap(), x, 2e-6);
            let scale = drho.abs().max(dj.abs()).max(1.0);
            prop_assert!((drho + dj).abs() <= 1e-6 * scale, "{} {}", drho, dj);
        }

        #[test]
        fn boost_shift_keeps_density(x in -0.4f64..0.1, t in 0.0f64..1e-3) {
            let p = reference();
            let r = p.unboosted();
            let a = p.density(x, t).unwrap();
            let b = r.density(x - 300.0 * t, t).unwrap();
            prop_assert!((a - b).abs() <= 1e-12 * a.max(1e-300));
        }
    }
}
