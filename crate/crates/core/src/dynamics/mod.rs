//! Integration of the Schrödinger, geodesic and brachistochrone equations,
//! fidelity and constant-speed protocol utilities.

pub mod flows;
pub mod ode;
pub mod protocol;

pub use flows::{
    brachistochrone_endpoint, brachistochrone_rhs, geodesic_endpoint, geodesic_rhs, integrate_brachistochrone, integrate_geodesic,
    integrate_schrodinger, propagate_piecewise, replay_allowed, BrachistochroneState, FlowEnd, FlowOptions, Trajectory, TrajectoryKind,
    UNITARITY_TOL,
};
pub use ode::{OdeError, OdeOptions, Record};
pub use protocol::{
    gate_fidelity, geodesic_qbe_residual, normalize_protocol, protocol_from_brachistochrone, qbe_residual, trace_overlap, ControlProtocol,
    CubicSpline, ProtocolSource,
};

use crate::liealg::LieError;

#[derive(Debug, thiserror::Error)]
pub enum DynError {
    #[error("integration failed: {0}")]
    Ode(#[from] OdeError),
    #[error(transparent)]
    Lie(#[from] LieError),
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("generator norm vanishes; constant-speed reparametrization is singular")]
    SingularReparametrization,
}
