use serde::{Deserialize, Serialize};

use crate::case::{NetworkCase, Pcc};
use crate::error::{Error, ModelError};
use crate::formulation::{
    add_grid_objective, add_res_objective, build_ac_block, build_dc_side, build_res_block, names, res_system, scoped,
    FormulationOptions, Mode, ScenarioSet, GRID_SYSTEM,
};
use crate::powerflow::OperatingPoint;
use crate::program::ConicProgram;

/// One AC-side subproblem: its own variables plus its copy of the boundary.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Subproblem {
    /// System index: 0 for the AC grid, `i + 1` for renewable unit `i`.
    pub system: usize,
    pub name: String,
    pub program: ConicProgram,
    /// Boundary variable names, three per converter attached to the system.
    pub boundary: Vec<String>,
}

/// Entry of the coupling map: boundary slot `slot` of subproblem `sp`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Coupling {
    pub sp: usize,
    pub slot: usize,
    pub name: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Decomposition {
    /// MTDC grid and converters with the master's copy `b′` of every boundary.
    pub master: ConicProgram,
    pub subproblems: Vec<Subproblem>,
    pub coupling: Vec<Coupling>,
    /// Starting proposal `b̂′⁰` per subproblem.
    pub initial: Vec<Vec<f64>>,
    /// Lower bound of every cost-to-go variable.
    pub z_min: f64,
}

impl Decomposition {
    pub fn num_subproblems(&self) -> usize {
        self.subproblems.len()
    }
}

/// Splits the hybrid system into the DC-side master and one subproblem per
/// AC system (the grid and each renewable unit). Only the deterministic and
/// extreme-scenario models separate this way; the joint-scenario model ties
/// every grid copy to every unit.
pub fn decompose(
    case: &NetworkCase,
    op: &OperatingPoint,
    scenarios: &ScenarioSet,
    mode: Mode,
    opts: &FormulationOptions,
) -> Result<Decomposition, Error> {
    if mode == Mode::Ropf {
        return Err(Error::Decomposition("joint-scenario model has no per-system decomposition; use eropf".into()));
    }
    if scenarios.per_res.len() != case.res_units.len() {
        return Err(ModelError::Config(format!(
            "scenario set covers {} renewable units, case has {}",
            scenarios.per_res.len(),
            case.res_units.len()
        ))
        .into());
    }
    if scenarios.is_empty() {
        return Err(ModelError::EmptyScenarioSet.into());
    }
    if mode == Mode::Dopf && scenarios.per_res.iter().any(|v| v.len() != 1) {
        return Err(ModelError::Config("deterministic model needs one realization".into()).into());
    }
    let case = &opts.apply(case);
    let grid_vscs: Vec<_> = case.vsc_stations.iter().filter(|v| matches!(v.pcc, Pcc::Ac(_))).collect();
    if grid_vscs.is_empty() {
        return Err(Error::Decomposition("AC grid has no converter connection".into()));
    }

    let mut subproblems = Vec::new();
    let mut initial = Vec::new();

    let mut ac = build_ac_block(case, op)?;
    add_grid_objective(&mut ac, case)?;
    ac.name = "ac".into();
    let mut bnd = Vec::new();
    let mut init = Vec::new();
    for v in &grid_vscs {
        let node = match v.pcc {
            Pcc::Ac(n) => n,
            Pcc::Res(_) => unreachable!(),
        };
        bnd.extend(names::boundary(case, v));
        let i = case.ac_index(node).expect("validated case");
        init.extend([0.0, 0.0, op.u[i]]);
    }
    subproblems.push(Subproblem { system: GRID_SYSTEM, name: "ac".into(), program: ac, boundary: bnd });
    initial.push(init);

    for (r, vals) in scenarios.per_res.iter().enumerate() {
        let unit = &case.res_units[r];
        let vsc = case.res_vsc(unit.id).expect("validated case").1;
        let bnames = names::boundary(case, vsc).to_vec();
        let w = 1.0 / vals.len() as f64;
        let mut prog = ConicProgram::new(format!("res{}", unit.id));
        for (k, &pa) in vals.iter().enumerate() {
            let mut rb = build_res_block(case, r, pa)?;
            add_res_objective(&mut rb, case, r, w)?;
            prog.merge(&scoped(&rb, &format!("r{r}e{k}/"), |n| bnames.iter().any(|b| b == n)))?;
        }
        prog.boundary.truncate(1);
        subproblems.push(Subproblem { system: res_system(r), name: prog.name.clone(), program: prog, boundary: bnames });
        initial.push(vec![0.0, 0.0, 1.0]);
    }

    let mut master = build_dc_side(case, opts)?;
    master.name = "master".into();
    let mut coupling = Vec::new();
    for (n, sp) in subproblems.iter().enumerate() {
        sp.program.validate()?;
        for (slot, name) in sp.boundary.iter().enumerate() {
            master.var_checked(name)?;
            sp.program.var_checked(name)?;
            coupling.push(Coupling { sp: n, slot, name: name.clone() });
        }
    }
    master.validate()?;
    let c3: f64 = case.generators.iter().map(|g| g.c3).sum();
    Ok(Decomposition { master, subproblems, coupling, initial, z_min: -10.0 * c3.abs() - 10.0 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::powerflow::solve_base_power_flow;

    #[test]
    fn coupling_map_has_three_entries_per_converter() {
        let case = NetworkCase::fig4();
        let op = solve_base_power_flow(&case).unwrap();
        let d = decompose(&case, &op, &ScenarioSet::extremes(&case), Mode::Eropf, &FormulationOptions::default())
            .unwrap();
        assert_eq!(d.coupling.len(), 3 * case.vsc_stations.len());
        assert_eq!(d.num_subproblems(), 1 + case.res_units.len());
        // binaries stay in the master
        assert!(d.subproblems.iter().all(|s| s.program.num_binaries() == 0));
        assert!(d.master.num_binaries() > 0);
        assert!(d.master.var(&names::pg(0)).is_none());
    }

    #[test]
    fn grid_without_converter_is_rejected() {
        let mut case = NetworkCase::fig4();
        case.vsc_stations.retain(|v| matches!(v.pcc, Pcc::Res(_)));
        let op = solve_base_power_flow(&case).unwrap();
        let err = decompose(&case, &op, &ScenarioSet::forecast(&case), Mode::Dopf, &FormulationOptions::default());
        assert!(matches!(err, Err(Error::Decomposition(_))));
    }
}
