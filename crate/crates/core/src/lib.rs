//! Localized hexagon and stripe patterns in a two-component reaction–diffusion
//! system: model kinetics, Neumann grids, time integration, pseudo-arclength
//! continuation and weakly nonlinear amplitude equations.

pub mod amplitude;
pub mod continuation;
pub mod error;
pub mod grid;
pub mod linalg;
pub mod model;
pub mod timestep;

pub use error::{Error, Result};
