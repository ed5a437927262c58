//! Spectral Galerkin simulation of a coupled acoustic chamber / clamped
//! elastic wall system, with diagnostics for its energy balance, a priori
//! bounds, blow-up majorants and continuous dependence on initial data.

pub mod assembly;
pub mod beam;
pub mod config;
pub mod diagnostics;
pub mod error;
pub mod experiments;
pub mod geometry;
pub mod integrator;
pub mod quadrature;

pub use assembly::{assemble, assemble_default, FieldValues, GalerkinOperators, SourceSpec};
pub use beam::{build_plate_basis, solve_beam_roots, BeamMode, PlateBasis};
pub use error::{BasisError, DiagnosticsError, ExperimentError, IntegratorError, SourceError};
pub use geometry::{wave_modes, Domain, Point, WaveMode};
pub use quadrature::{GaussLegendre, Quadrature};
pub use integrator::{
    integrate, rhs, step_implicit_midpoint, step_rk4, BlowUp, IntegrationOptions, ModalRate, ModalState, Scheme,
    Trajectory,
};
