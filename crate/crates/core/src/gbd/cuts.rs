use serde::{Deserialize, Serialize};

use super::decompose::Subproblem;
use crate::error::{Error, SolverError};
use crate::program::{LinExpr, Owner, Sense};
use crate::solver::{ConicSolver, Status};

/// Relaxation measures at or below this are treated as feasible.
pub const FEASIBILITY_TOL: f64 = 1e-7;

const COUPLING: &str = "gbd.coupling";
const RSP_EPS: &str = "gbd.rsp.eps";
const RSP_SIGMA: &str = "gbd.rsp.sigma";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CutKind {
    /// `z ≥ value + gradientᵀ(b′ − point)`.
    Optimality,
    /// `0 ≥ value + gradientᵀ(b′ − point)`.
    Feasibility,
}

/// Linearization of a subproblem's value (or infeasibility measure) in the
/// master's boundary copy. `sp` is `None` for an aggregated cut spanning
/// every subproblem in order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BendersCut {
    pub kind: CutKind,
    pub sp: Option<usize>,
    pub iteration: usize,
    pub point: Vec<f64>,
    pub gradient: Vec<f64>,
    /// Subproblem value or infeasibility measure at `point`.
    pub value: f64,
}

impl BendersCut {
    /// Right-hand side of the cut at `b`.
    pub fn eval(&self, b: &[f64]) -> f64 {
        self.value + self.gradient.iter().zip(b).zip(&self.point).map(|((g, x), p)| g * (x - p)).sum::<f64>()
    }

    /// Constant term of the cut as an affine function of `b′`.
    pub fn intercept(&self) -> f64 {
        self.value - self.gradient.iter().zip(&self.point).map(|(g, p)| g * p).sum::<f64>()
    }

    /// Sum of per-subproblem cuts of one kind over the concatenated boundary.
    pub fn aggregate(kind: CutKind, iteration: usize, parts: &[BendersCut]) -> BendersCut {
        let mut c = BendersCut { kind, sp: None, iteration, point: Vec::new(), gradient: Vec::new(), value: 0.0 };
        for p in parts {
            c.point.extend(&p.point);
            c.gradient.extend(&p.gradient);
            c.value += p.value;
        }
        c
    }
}

/// Result of evaluating a subproblem at a proposal.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SpOutcome {
    pub feasible: bool,
    /// Optimal value (feasible) or infeasibility measure.
    pub value: f64,
    /// The subproblem's own boundary values.
    pub boundary: Vec<f64>,
    /// `None` for a feasibility subproblem with zero measure.
    pub cut: Option<BendersCut>,
}

fn boundary_ids(sp: &Subproblem) -> Result<Vec<crate::program::VarId>, Error> {
    Ok(sp.boundary.iter().map(|n| sp.program.var_checked(n)).collect::<Result<_, _>>()?)
}

fn check_len(sp: &Subproblem, bhat: &[f64]) -> Result<(), Error> {
    if bhat.len() != sp.boundary.len() {
        return Err(Error::Decomposition(format!(
            "proposal for `{}` has {} entries, boundary has {}",
            sp.name,
            bhat.len(),
            sp.boundary.len()
        )));
    }
    Ok(())
}

/// Optimality subproblem: the boundary pinned to `bhat`. Returns `None` when
/// the pinned subproblem is infeasible. The cut gradient is the shadow price
/// of the pinning rows.
pub fn solve_osp(
    sp: &Subproblem,
    bhat: &[f64],
    sp_id: usize,
    iteration: usize,
    solver: &ConicSolver,
) -> Result<Option<SpOutcome>, Error> {
    check_len(sp, bhat)?;
    let ids = boundary_ids(sp)?;
    let mut p = sp.program.clone();
    for (&v, &b) in ids.iter().zip(bhat) {
        p.add_row(COUPLING, v.into(), Sense::Eq, b);
    }
    let sol = solver.solve_continuous(&p)?;
    match sol.status {
        Status::Optimal => {}
        Status::Infeasible => return Ok(None),
        s => {
            return Err(SolverError::Backend {
                backend: sol.backend,
                message: format!("subproblem `{}` returned {s:?}", sp.name),
            }
            .into())
        }
    }
    let gradient: Vec<f64> = (0..ids.len()).map(|i| sol.dual(COUPLING, i).unwrap_or(0.0)).collect();
    let cut = BendersCut {
        kind: CutKind::Optimality,
        sp: Some(sp_id),
        iteration,
        point: bhat.to_vec(),
        gradient,
        value: sol.objective,
    };
    Ok(Some(SpOutcome {
        feasible: true,
        value: sol.objective,
        boundary: ids.iter().map(|v| sol.x[v.0]).collect(),
        cut: Some(cut),
    }))
}

/// Relaxed subproblem: `min Σ(ε + σ)` s.t. `b − ε ≤ b̂′`, `b + σ ≥ b̂′`.
/// The measure is convex in `b̂′` with gradient `μ^ε + μ^σ`, so the cut is
/// tight at `bhat`. A zero measure produces no cut.
pub fn solve_rsp(
    sp: &Subproblem,
    bhat: &[f64],
    sp_id: usize,
    iteration: usize,
    solver: &ConicSolver,
) -> Result<SpOutcome, Error> {
    check_len(sp, bhat)?;
    let ids = boundary_ids(sp)?;
    let mut p = sp.program.clone();
    p.objective = LinExpr::new();
    for (i, (&v, &b)) in ids.iter().zip(bhat).enumerate() {
        let eps = p.continuous(format!("gbd.eps[{i}]"), 0.0, f64::INFINITY, Owner::Auxiliary)?;
        let sig = p.continuous(format!("gbd.sigma[{i}]"), 0.0, f64::INFINITY, Owner::Auxiliary)?;
        p.add_row(RSP_EPS, LinExpr::from(v).with(eps, -1.0), Sense::Le, b);
        p.add_row(RSP_SIGMA, LinExpr::from(v).with(sig, 1.0), Sense::Ge, b);
        p.add_objective(LinExpr::from(eps).with(sig, 1.0));
    }
    let sol = solver.solve_continuous(&p)?;
    if sol.status != Status::Optimal {
        return Err(SolverError::Backend {
            backend: sol.backend,
            message: format!("relaxed subproblem `{}` returned {:?}", sp.name, sol.status),
        }
        .into());
    }
    let measure = sol.objective.max(0.0);
    let gradient: Vec<f64> = (0..ids.len())
        .map(|i| sol.dual(RSP_EPS, i).unwrap_or(0.0) + sol.dual(RSP_SIGMA, i).unwrap_or(0.0))
        .collect();
    let cut = (measure > FEASIBILITY_TOL).then(|| BendersCut {
        kind: CutKind::Feasibility,
        sp: Some(sp_id),
        iteration,
        point: bhat.to_vec(),
        gradient,
        value: measure,
    });
    Ok(SpOutcome { feasible: false, value: measure, boundary: ids.iter().map(|v| sol.x[v.0]).collect(), cut })
}

/// Optimality subproblem, falling back to the relaxed one when infeasible.
/// A proposal on the edge of the feasible set may be declared infeasible
/// with a negligible measure; the optimality cut is then taken at the
/// relaxed boundary point, which is a valid under-estimator everywhere.
pub fn evaluate_subproblem(
    sp: &Subproblem,
    bhat: &[f64],
    sp_id: usize,
    iteration: usize,
    solver: &ConicSolver,
) -> Result<SpOutcome, Error> {
    if let Some(o) = solve_osp(sp, bhat, sp_id, iteration, solver)? {
        return Ok(o);
    }
    let rsp = solve_rsp(sp, bhat, sp_id, iteration, solver)?;
    if rsp.cut.is_none() {
        if let Some(o) = solve_osp(sp, &rsp.boundary, sp_id, iteration, solver)? {
            return Ok(o);
        }
    }
    Ok(rsp)
}
