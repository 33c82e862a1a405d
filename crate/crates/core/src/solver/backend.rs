use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::clarabel_backend::ClarabelBackend;
use super::dense::DenseIpm;
use super::standard::StandardForm;
use crate::error::SolverError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum RawStatus {
    Optimal,
    PrimalInfeasible,
    DualInfeasible,
}

/// Result of a continuous conic solve in standard-form coordinates.
///
/// Duals follow the Lagrangian `cᵀx + yᵀ(Ax − b) + zᵀ(Gx − h)` with `z` in the
/// dual cone, so `∂(optimum)/∂b = −y` and `∂(optimum)/∂h = −z`.
#[derive(Clone, Debug)]
pub struct RawSolution {
    pub status: RawStatus,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub z: Vec<f64>,
    pub s: Vec<f64>,
    pub primal_objective: f64,
    pub dual_objective: f64,
    pub iterations: u32,
    /// Set when the backend only reached its relaxed tolerances.
    pub reduced_accuracy: bool,
}

/// Narrow contract every continuous conic solver implements.
pub trait ConicBackend: Send + Sync {
    fn name(&self) -> &'static str;
    fn solve(&self, problem: &StandardForm) -> Result<RawSolution, SolverError>;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    #[default]
    Clarabel,
    Dense,
}

impl BackendKind {
    /// Environment variable consulted by [`BackendKind::from_env`].
    pub const ENV: &'static str = "MTDC_OPF_BACKEND";

    pub fn from_env() -> Result<BackendKind, SolverError> {
        match std::env::var(Self::ENV) {
            Ok(s) if !s.is_empty() => s.parse(),
            _ => Ok(BackendKind::default()),
        }
    }

    pub fn instantiate(self) -> Arc<dyn ConicBackend> {
        match self {
            BackendKind::Clarabel => Arc::new(ClarabelBackend::default()),
            BackendKind::Dense => Arc::new(DenseIpm::default()),
        }
    }
}

impl FromStr for BackendKind {
    type Err = SolverError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "clarabel" => Ok(BackendKind::Clarabel),
            "dense" | "reference" => Ok(BackendKind::Dense),
            other => Err(SolverError::UnknownBackend(other.to_string())),
        }
    }
}

impl fmt::Display for BackendKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BackendKind::Clarabel => f.write_str("clarabel"),
            BackendKind::Dense => f.write_str("dense"),
        }
    }
}
