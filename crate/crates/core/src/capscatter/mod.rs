//! Scattering off a layered complex absorbing potential and the evolution
//! of a packet through it as a superposition of scattering states.

mod evolution;
mod potential;
mod transfer;

use thiserror::Error;

use crate::quadrature::QuadratureError;
use crate::wavepacket::PacketError;

pub use evolution::{
    absorption_rate, dwell_time, evolve_with_cap, history, mean_survival, momentum_absorption,
    norms, packet_time_breaks, time_integrals, total_absorption, AbsorptionRate, CapEvolution,
    DetectorProbe, DetectorState, DwellTime, MomentumQuadrature, Norms, TimeIntegrals,
    TimeSample, TotalAbsorption, Window, HISTORY_WINDOW, LONG_WINDOW_MAX_NODES, RATE_STEP,
};
pub use potential::LayeredPotential;
pub use transfer::{
    eigenfunction, solve_scatter, survival_gradient, ScatterSolution, Segment,
    MAX_DECAY_PER_SEGMENT,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScatterError {
    #[error("invalid potential: {0}")]
    InvalidPotential(String),
    #[error("momentum {0} must be positive and finite")]
    InvalidMomentum(f64),
    #[error("transfer chain degenerate at p = {p}")]
    Degenerate { p: f64 },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("{0}")]
    Io(String),
    #[error("momentum quadrature not converged at x = {x}, t = {t}: change {change:e} with {nodes} nodes")]
    NotConverged {
        x: f64,
        t: f64,
        change: f64,
        nodes: usize,
    },
    #[error("truncated tail estimate {estimate:e} exceeds {limit:e} at t = {t}")]
    TailBound { t: f64, estimate: f64, limit: f64 },
    #[error("absorption-rate methods disagree at t = {t}: volume {volume:e}, finite difference {finite_difference:e}")]
    MethodDisagreement {
        t: f64,
        volume: f64,
        finite_difference: f64,
    },
    #[error(transparent)]
    Packet(#[from] PacketError),
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
}
