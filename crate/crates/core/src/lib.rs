//! Mixed-integer convex optimal power flow for hybrid AC / multi-terminal DC
//! grids with DC topology switching.
//!
//! The crate builds conic models of AC systems (linearized around a power
//! flow operating point), renewable units, VSC stations and the MTDC grid;
//! solves them centrally through branch-and-bound over a pluggable conic
//! backend or distributedly through multi-cut generalized Benders
//! decomposition with simulated asynchronous updates; and robustifies
//! decisions against renewable uncertainty with extreme scenarios.

pub mod accuracy;
pub mod case;
pub mod error;
pub mod formulation;
pub mod gbd;
pub mod powerflow;
pub mod program;
pub mod robust;
pub mod solver;

pub use error::{Error, Result};
