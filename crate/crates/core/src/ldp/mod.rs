//! Discrete Freidlin–Wentzell action for the Galerkin system: evaluation,
//! exact gradient, minimum-action paths, quasipotentials over horizon grids,
//! the multi-scale mode count and the scalar Kramers formula.

mod action;
mod kramers;
mod minimize;
mod multiscale;
mod path;
mod quasipotential;

pub use action::{action_eval, action_gradient, action_three_terms, ActionValue};
pub use kramers::{
    kramers_scalar, DoubleWell, KramersEstimate, ModeZeroPotential, Potential1D, SymmetricQuartic, Well,
};
pub use minimize::{minimize_action, minimize_path, MinimizeOptions, MinimizeResult};
pub use multiscale::{multiscale_truncate, pin_modes, relaxation_deviation, relaxation_factor, MultiscaleReport};
pub use path::{DiscretePath, InitialPath};
pub use quasipotential::{
    boundary_quasipotential, quasipotential, BoundarySearch, QuasipotentialReport, QuasipotentialResult,
};
