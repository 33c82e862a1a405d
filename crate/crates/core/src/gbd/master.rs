use serde::{Deserialize, Serialize};

use super::cuts::{BendersCut, CutKind};
use super::decompose::Decomposition;
use crate::error::{Error, SolverError};
use crate::program::{ConicProgram, LinExpr, Owner, Sense, VarId};
use crate::solver::{ConicSolver, Solution, Status};

/// Relative slack on `Σz` within which the master may move toward the
/// reference point instead of an arbitrary optimal vertex.
pub const PROXIMITY_SLACK: f64 = 1e-7;

/// Master problem: DC side, boundary copies and cost-to-go variables.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MasterProblem {
    pub program: ConicProgram,
    /// One cost-to-go per subproblem, or a single aggregate.
    pub z: Vec<VarId>,
    /// Boundary copies per subproblem, in coupling order.
    pub boundary: Vec<Vec<VarId>>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MpOutcome {
    pub proposal: Vec<Vec<f64>>,
    pub z: Vec<f64>,
    /// `Σz` at the master optimum.
    pub lower_bound: f64,
    pub x: Vec<f64>,
    pub nodes: usize,
}

impl MasterProblem {
    pub fn new(dec: &Decomposition, aggregate: bool) -> Result<Self, Error> {
        let mut program = dec.master.clone();
        let count = if aggregate { 1 } else { dec.num_subproblems() };
        let lo = dec.z_min * if aggregate { dec.num_subproblems() as f64 } else { 1.0 };
        let mut z = Vec::with_capacity(count);
        for n in 0..count {
            let v = program.continuous(format!("gbd.z[{n}]"), lo, f64::INFINITY, Owner::Auxiliary)?;
            program.add_objective(v.into());
            z.push(v);
        }
        let boundary = dec
            .subproblems
            .iter()
            .map(|sp| sp.boundary.iter().map(|n| program.var_checked(n)).collect::<Result<Vec<_>, _>>())
            .collect::<Result<Vec<_>, _>>()?;
        Ok(MasterProblem { program, z, boundary })
    }

    fn cut_vars(&self, cut: &BendersCut) -> Vec<VarId> {
        match cut.sp {
            Some(n) => self.boundary[n].clone(),
            None => self.boundary.concat(),
        }
    }

    fn with_cuts(&self, cuts: &[&BendersCut]) -> ConicProgram {
        let mut p = self.program.clone();
        for cut in cuts {
            let vars = self.cut_vars(cut);
            let mut e = LinExpr::new();
            for (&v, &g) in vars.iter().zip(&cut.gradient) {
                e.add_term(v, g);
            }
            match cut.kind {
                CutKind::Optimality => {
                    let z = self.z[cut.sp.filter(|_| self.z.len() > 1).unwrap_or(0)];
                    p.add_row("gbd.cuts", LinExpr::from(z) - e, Sense::Ge, cut.intercept());
                }
                CutKind::Feasibility => {
                    p.add_row("gbd.cuts", e, Sense::Le, -cut.intercept());
                }
            }
        }
        p
    }

    fn outcome(&self, sol: &Solution, lower_bound: f64) -> MpOutcome {
        MpOutcome {
            proposal: self.boundary.iter().map(|b| b.iter().map(|v| sol.x[v.0]).collect()).collect(),
            z: self.z.iter().map(|v| sol.x[v.0]).collect(),
            lower_bound,
            x: sol.x.clone(),
            nodes: sol.nodes,
        }
    }
}

/// Smallest subset of `cuts` (by deletion filtering) that keeps the master
/// infeasible.
fn minimal_infeasible(mp: &MasterProblem, cuts: &[&BendersCut], solver: &ConicSolver) -> Result<Vec<usize>, Error> {
    let mut keep: Vec<usize> = (0..cuts.len()).collect();
    let mut i = 0;
    while i < keep.len() {
        let trial: Vec<&BendersCut> = keep.iter().enumerate().filter(|&(k, _)| k != i).map(|(_, &c)| cuts[c]).collect();
        if solver.solve(&mp.with_cuts(&trial))?.status == Status::Infeasible {
            keep.remove(i);
        } else {
            i += 1;
        }
    }
    Ok(keep)
}

/// Solves the master over the cut pool. With a `reference`, a second solve
/// picks, among master solutions within [`PROXIMITY_SLACK`] of the optimum,
/// the one nearest (ℓ1) to the reference boundary values, so that the
/// proposal only moves when the cuts demand it.
pub fn solve_mp(
    mp: &MasterProblem,
    cuts: &[BendersCut],
    reference: Option<&[Vec<f64>]>,
    solver: &ConicSolver,
) -> Result<MpOutcome, Error> {
    let pool: Vec<&BendersCut> = cuts.iter().collect();
    let prog = mp.with_cuts(&pool);
    let sol = solver.solve(&prog)?;
    match sol.status {
        Status::Optimal | Status::GapLimit => {}
        Status::Infeasible => {
            let detail = if pool.len() <= 10 {
                let core = minimal_infeasible(mp, &pool, solver)?;
                let ids: Vec<String> = core
                    .iter()
                    .map(|&i| format!("{:?}@{}#{}", cuts[i].kind, cuts[i].iteration, cuts[i].sp.map_or(-1, |s| s as i64)))
                    .collect();
                format!("minimal infeasible cut subset: [{}]", ids.join(", "))
            } else {
                format!("{} cuts in pool", pool.len())
            };
            return Err(Error::Infeasible(format!("master problem infeasible; {detail}")));
        }
        s => {
            return Err(SolverError::Backend { backend: sol.backend, message: format!("master returned {s:?}") }.into())
        }
    }
    let lb = sol.objective;
    let Some(reference) = reference else {
        return Ok(mp.outcome(&sol, lb));
    };

    let mut p = prog;
    let mut sum_z = LinExpr::new();
    for &z in &mp.z {
        sum_z.add_term(z, 1.0);
    }
    p.objective = LinExpr::new();
    p.add_row("gbd.level", sum_z, Sense::Le, lb + PROXIMITY_SLACK * lb.abs().max(1.0));
    for (n, (vars, refs)) in mp.boundary.iter().zip(reference).enumerate() {
        for (i, (&v, &r)) in vars.iter().zip(refs).enumerate() {
            let d = p.continuous(format!("gbd.dist[{n}][{i}]"), 0.0, f64::INFINITY, Owner::Auxiliary)?;
            p.add_row("gbd.dist", LinExpr::from(d).with(v, -1.0), Sense::Ge, -r);
            p.add_row("gbd.dist", LinExpr::from(d).with(v, 1.0), Sense::Ge, r);
            p.add_objective(d.into());
        }
    }
    let near = solver.solve(&p)?;
    if near.has_primal() {
        Ok(mp.outcome(&near, lb))
    } else {
        Ok(mp.outcome(&sol, lb))
    }
}
