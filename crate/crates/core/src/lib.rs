//! Arrival-time distributions for free wave packets with quantum backflow,
//! measured by an optimized layered complex absorbing potential.

pub mod arrival;
pub mod capdesign;
pub mod capscatter;
pub mod oracle;
pub mod quadrature;
pub mod specfun;
pub mod wavepacket;

pub use arrival::ArrivalError;
pub use capdesign::DesignError;
pub use capscatter::{LayeredPotential, ScatterError};
pub use num_complex::Complex64;
pub use oracle::OracleError;
pub use quadrature::QuadratureError;
pub use specfun::SpecFunError;
pub use wavepacket::{Packet, PacketError, PacketParams, Units};

/// Any failure from the library.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    SpecFun(#[from] SpecFunError),
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
    #[error(transparent)]
    Packet(#[from] PacketError),
    #[error(transparent)]
    Scatter(#[from] ScatterError),
    #[error(transparent)]
    Design(#[from] DesignError),
    #[error(transparent)]
    Arrival(#[from] ArrivalError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
}

impl Error {
    /// Time at which a quadrature failed to converge, if that is the cause.
    pub fn nonconverged_at(&self) -> Option<f64> {
        match self {
            Error::Scatter(ScatterError::NotConverged { t, .. })
            | Error::Arrival(ArrivalError::NotConverged { t, .. })
            | Error::Arrival(ArrivalError::Scatter(ScatterError::NotConverged { t, .. }))
            | Error::Oracle(OracleError::NotConverged { t, .. }) => Some(*t),
            _ => None,
        }
    }
}
