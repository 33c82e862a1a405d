//! Successive linear approximation: solve the OPF on the linearized AC
//! model, re-run the nonlinear power flow with the resulting injections,
//! re-linearize there, and repeat.

use serde::{Deserialize, Serialize};

use crate::case::{NetworkCase, Pcc};
use crate::error::{Error, ModelError};
use crate::formulation::{assemble_centralized, names, FormulationOptions, Mode, ScenarioSet};
use crate::powerflow::{accuracy_csv, update_operating_point, AcDispatch, OperatingPoint, PointUpdate};
use crate::program::ConicProgram;
use crate::solver::{ConicSolver, Solution};

/// Net nodal injections and linear-model voltages of an OPF solution with a
/// single AC-grid copy.
pub fn ac_dispatch(case: &NetworkCase, prog: &ConicProgram, sol: &Solution) -> Result<AcDispatch, Error> {
    if !sol.has_primal() {
        return Err(Error::Infeasible(format!("no primal solution for `{}`", prog.name)));
    }
    let val = |name: &str| -> Result<f64, ModelError> { Ok(sol.x[prog.var_checked(name)?.0]) };
    let mut injections: Vec<(f64, f64)> = case.ac_nodes.iter().map(|n| (-n.load_p, -n.load_q)).collect();
    for (g, gen) in case.generators.iter().enumerate() {
        let i = case.ac_index(gen.node).expect("validated case");
        injections[i].0 += val(&names::pg(g))?;
        injections[i].1 += val(&names::qg(g))?;
    }
    for vsc in &case.vsc_stations {
        if let Pcc::Ac(node) = vsc.pcc {
            let i = case.ac_index(node).expect("validated case");
            let [p, q, _] = names::boundary(case, vsc);
            injections[i].0 -= val(&p)?;
            injections[i].1 -= val(&q)?;
        }
    }
    let u = case.ac_nodes.iter().map(|n| val(&names::ac_u(n.id))).collect::<Result<_, _>>()?;
    Ok(AcDispatch { injections, u })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SlaRound {
    pub round: usize,
    pub objective: f64,
    pub update: PointUpdate,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SlaReport {
    /// Round `r` solves the OPF linearized at the point produced by round `r − 1`
    /// (round 0 uses the starting point).
    pub rounds: Vec<SlaRound>,
    /// Set when the nonlinear re-solve failed; the last good point is kept.
    pub stopped: Option<String>,
}

impl SlaReport {
    /// `max |u_lin − u_nonlin|` per round.
    pub fn errors(&self) -> Vec<f64> {
        self.rounds.iter().map(|r| r.update.max_u_error).collect()
    }

    pub fn to_csv(&self) -> String {
        let ups: Vec<PointUpdate> = self.rounds.iter().map(|r| r.update.clone()).collect();
        accuracy_csv(&ups)
    }

    pub fn final_point<'a>(&'a self, start: &'a OperatingPoint) -> &'a OperatingPoint {
        self.rounds.last().map_or(start, |r| &r.update.point)
    }
}

/// `updates` re-linearizations after the initial solve.
pub fn run_sla(
    case: &NetworkCase,
    start: &OperatingPoint,
    scenarios: &ScenarioSet,
    mode: Mode,
    opts: &FormulationOptions,
    updates: usize,
    solver: &ConicSolver,
) -> Result<SlaReport, Error> {
    if mode == Mode::Ropf {
        return Err(ModelError::Config("successive linearization needs a single AC-grid copy".into()).into());
    }
    let mut op = start.clone();
    let mut rounds = Vec::with_capacity(updates + 1);
    for round in 0..=updates {
        let prog = assemble_centralized(case, &op, scenarios, mode, opts)?;
        let sol = solver.solve(&prog)?;
        let dispatch = ac_dispatch(case, &prog, &sol)?;
        match update_operating_point(case, &dispatch) {
            Ok(update) => {
                op = update.point.clone();
                rounds.push(SlaRound { round, objective: sol.objective, update });
            }
            Err(e) => return Ok(SlaReport { rounds, stopped: Some(e.to_string()) }),
        }
    }
    Ok(SlaReport { rounds, stopped: None })
}
