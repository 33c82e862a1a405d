//! Mixed-binary conic OPF model of the AC/MTDC hybrid system.
//!
//! Blocks are built per subsystem (AC grid, each renewable unit, the MTDC
//! grid, each converter station) with globally meaningful variable names;
//! merging blocks joins variables by name. Scenario copies are produced by
//! prefixing every non-shared name.

mod ac;
mod mtdc;
mod objective;
mod res;
mod vsc;

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::case::NetworkCase;
use crate::error::ModelError;
use crate::powerflow::OperatingPoint;
use crate::program::{BoundaryGroup, ConicProgram, LinExpr, Sense};

pub use ac::build_ac_block;
pub use mtdc::build_mtdc_block;
pub use objective::{add_grid_objective, add_res_objective, build_objective};
pub use res::build_res_block;
pub use vsc::build_vsc_block;

/// System index of the AC grid; renewable unit `i` (by position) is `i + 1`.
pub const GRID_SYSTEM: usize = 0;

pub fn res_system(res_idx: usize) -> usize {
    res_idx + 1
}

/// Canonical variable names shared between blocks.
pub mod names {
    use crate::case::{NetworkCase, Pcc, VscStation};

    pub fn ac_u(node: u32) -> String {
        format!("ac.u[{node}]")
    }
    pub fn pg(g: usize) -> String {
        format!("ac.pg[{g}]")
    }
    pub fn qg(g: usize) -> String {
        format!("ac.qg[{g}]")
    }
    pub fn dc_u(node: u32) -> String {
        format!("dc.u[{node}]")
    }
    /// Power delivered by the MTDC grid to the converter at `node`.
    pub fn dc_m2v(node: u32) -> String {
        format!("dc.pm2v[{node}]")
    }
    pub fn alpha(line: usize) -> String {
        format!("dc.alpha[{line}]")
    }
    pub fn res_p(res: u32) -> String {
        format!("res{res}.p")
    }
    pub fn avail_param(res: u32) -> String {
        format!("pbar_res{res}")
    }

    /// `(p, q, u)` at the PCC of a converter station, power positive from
    /// the AC side into the converter.
    pub fn boundary(_case: &NetworkCase, vsc: &VscStation) -> [String; 3] {
        match vsc.pcc {
            Pcc::Ac(node) => [format!("ac.pa2v[{}]", vsc.id), format!("ac.qa2v[{}]", vsc.id), ac_u(node)],
            Pcc::Res(r) => [format!("res{r}.pr2v"), format!("res{r}.qr2v"), format!("res{r}.u")],
        }
    }

    pub fn system_of(case: &NetworkCase, vsc: &VscStation) -> usize {
        match vsc.pcc {
            Pcc::Ac(_) => super::GRID_SYSTEM,
            Pcc::Res(r) => super::res_system(case.res_index(r).expect("validated case")),
        }
    }

    /// Here-and-now decisions shared by every scenario copy.
    pub fn is_first_stage(name: &str) -> bool {
        name.starts_with("ac.pg[") || name.starts_with("ac.qg[") || name.starts_with("dc.alpha[")
    }
}

/// Polygon circumscribing the disk `p² + q² ≤ s̄²` with `4N` edges: the cut
/// normals sweep the full circle in steps of `π/(2N)`.
pub fn add_polygon(p: &mut ConicProgram, label: &str, pe: LinExpr, qe: LinExpr, s_max: f64, n: usize) {
    let n = n.max(1);
    for k in 0..2 * n {
        let phi = k as f64 * PI / (2 * n) as f64;
        let e = pe.clone() * phi.cos() + qe.clone() * phi.sin();
        p.add_row(label, e.clone(), Sense::Le, s_max);
        p.add_row(label, e, Sense::Ge, -s_max);
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Deterministic: a single realization of the RES availability.
    Dopf,
    /// Robust over every joint extreme scenario.
    Ropf,
    /// Robust over each unit's local extremes with boundary consensus.
    Eropf,
}

impl std::str::FromStr for Mode {
    type Err = ModelError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('-', "").as_str() {
            "dopf" => Ok(Mode::Dopf),
            "ropf" => Ok(Mode::Ropf),
            "eropf" => Ok(Mode::Eropf),
            _ => Err(ModelError::Config(format!("unknown mode `{s}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FormulationOptions {
    /// DC line status binaries; when off, lines keep their nominal status.
    pub switching: bool,
    /// Overrides the case's envelope segment count.
    pub envelope_k: Option<usize>,
    /// Overrides every polygon's half-edge count.
    pub polygon_n: Option<usize>,
}

impl Default for FormulationOptions {
    fn default() -> Self {
        FormulationOptions { switching: true, envelope_k: None, polygon_n: None }
    }
}

impl FormulationOptions {
    pub fn envelope_k(&self, case: &NetworkCase) -> usize {
        self.envelope_k.unwrap_or(case.options.envelope_k)
    }

    /// Case with the polygon override applied.
    pub fn apply(&self, case: &NetworkCase) -> NetworkCase {
        let mut c = case.clone();
        if let Some(n) = self.polygon_n {
            c.ac_branches.iter_mut().for_each(|b| b.polygon_n = n);
            c.res_units.iter_mut().for_each(|r| r.polygon_n = n);
        }
        c
    }
}

/// Per-unit candidate values of the available RES power.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSet {
    pub per_res: Vec<Vec<f64>>,
}

impl ScenarioSet {
    /// Interval endpoints of every unit's availability box.
    pub fn extremes(case: &NetworkCase) -> Self {
        let per_res = case
            .res_units
            .iter()
            .map(|r| {
                let mut v = vec![r.p_avail_max, r.p_avail_min];
                v.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
                v
            })
            .collect();
        ScenarioSet { per_res }
    }

    /// The forecast realization used by the deterministic model.
    pub fn forecast(case: &NetworkCase) -> Self {
        Self::point(case.res_units.iter().map(|r| r.p_avail_max).collect())
    }

    pub fn point(values: Vec<f64>) -> Self {
        ScenarioSet { per_res: values.into_iter().map(|v| vec![v]).collect() }
    }

    pub fn is_empty(&self) -> bool {
        self.per_res.iter().any(|v| v.is_empty())
    }

    /// Cartesian product of the per-unit values, first unit varying slowest.
    pub fn joint(&self) -> Vec<Vec<f64>> {
        let mut out = vec![Vec::new()];
        for vals in &self.per_res {
            out = out
                .into_iter()
                .flat_map(|prefix| {
                    vals.iter().map(move |&v| {
                        let mut s = prefix.clone();
                        s.push(v);
                        s
                    })
                })
                .collect();
        }
        out
    }
}

/// Copy of `prog` with every variable name not matched by `shared`, every
/// block label and every cone label prefixed.
pub fn scoped(prog: &ConicProgram, prefix: &str, shared: impl Fn(&str) -> bool) -> ConicProgram {
    let mut p = prog.clone();
    for v in &mut p.variables {
        if !shared(&v.name) {
            v.name = format!("{prefix}{}", v.name);
        }
    }
    p.blocks = p
        .blocks
        .into_iter()
        .map(|(k, mut b)| {
            b.label = format!("{prefix}{}", b.label);
            (format!("{prefix}{k}"), b)
        })
        .collect();
    for c in &mut p.cones {
        c.label = format!("{prefix}{}", c.label);
    }
    p.reindex();
    p
}

/// The MTDC grid together with every converter station.
pub fn build_dc_side(case: &NetworkCase, opts: &FormulationOptions) -> Result<ConicProgram, ModelError> {
    let mut p = build_mtdc_block(case, opts.switching)?;
    let k = opts.envelope_k(case);
    for i in 0..case.vsc_stations.len() {
        p.merge(&build_vsc_block(case, i, k)?)?;
    }
    p.name = "dc".into();
    Ok(p)
}

fn dedupe_boundary(p: &mut ConicProgram) {
    let mut seen = Vec::new();
    p.boundary.retain(|g: &BoundaryGroup| {
        if seen.contains(&g.system) {
            false
        } else {
            seen.push(g.system);
            true
        }
    });
    p.boundary.sort_by_key(|g| g.system);
}

/// Monolithic program of the whole hybrid system.
pub fn assemble_centralized(
    case: &NetworkCase,
    op: &OperatingPoint,
    scenarios: &ScenarioSet,
    mode: Mode,
    opts: &FormulationOptions,
) -> Result<ConicProgram, ModelError> {
    if scenarios.per_res.len() != case.res_units.len() {
        return Err(ModelError::Config(format!(
            "scenario set covers {} renewable units, case has {}",
            scenarios.per_res.len(),
            case.res_units.len()
        )));
    }
    if scenarios.is_empty() {
        return Err(ModelError::EmptyScenarioSet);
    }
    let case = &opts.apply(case);
    let mut prog = ConicProgram::new(format!("{mode:?}").to_lowercase());
    match mode {
        Mode::Dopf | Mode::Ropf => {
            let joint = scenarios.joint();
            if mode == Mode::Dopf && joint.len() != 1 {
                return Err(ModelError::Config(format!(
                    "deterministic model needs one realization, got {}",
                    joint.len()
                )));
            }
            let ac = build_ac_block(case, op)?;
            let dc = build_dc_side(case, opts)?;
            let w = 1.0 / joint.len() as f64;
            for (s, avail) in joint.iter().enumerate() {
                let mut copy = ac.clone();
                copy.merge(&dc)?;
                for (r, &pa) in avail.iter().enumerate() {
                    let mut rb = build_res_block(case, r, pa)?;
                    add_res_objective(&mut rb, case, r, w)?;
                    copy.merge(&rb)?;
                }
                if mode == Mode::Ropf {
                    copy = scoped(&copy, &format!("s{s}/"), names::is_first_stage);
                }
                prog.merge(&copy)?;
            }
        }
        Mode::Eropf => {
            prog.merge(&build_ac_block(case, op)?)?;
            prog.merge(&build_dc_side(case, opts)?)?;
            for (r, vals) in scenarios.per_res.iter().enumerate() {
                let vsc = case.res_vsc(case.res_units[r].id).expect("validated case").1;
                let bnames = names::boundary(case, vsc);
                let w = 1.0 / vals.len() as f64;
                for (k, &pa) in vals.iter().enumerate() {
                    let mut rb = build_res_block(case, r, pa)?;
                    add_res_objective(&mut rb, case, r, w)?;
                    let rb = scoped(&rb, &format!("r{r}e{k}/"), |n| bnames.iter().any(|b| b == n));
                    prog.merge(&rb)?;
                }
            }
        }
    }
    add_grid_objective(&mut prog, case)?;
    dedupe_boundary(&mut prog);
    prog.validate()?;
    Ok(prog)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::powerflow::solve_base_power_flow;
    use crate::program::{Owner, VarKind};

    #[test]
    fn polygon_cuts_match_disk() {
        let mut p = ConicProgram::new("t");
        let x = p.continuous("p", -2.0, 2.0, Owner::Auxiliary).unwrap();
        let y = p.continuous("q", -2.0, 2.0, Owner::Auxiliary).unwrap();
        add_polygon(&mut p, "cap", x.into(), y.into(), 1.0, 8);
        let rows = &p.block("cap").unwrap().rows;
        assert_eq!(rows.len(), 32);
        let ok = |pt: [f64; 2]| rows.iter().all(|r| r.violation(&pt) <= 1e-12);
        assert!(ok([1.0, 0.0]));
        assert!(ok([0.0, -1.0]));
        assert!(!ok([0.98, 0.28]));
        assert!(!ok([1.0 + 1e-9, 0.0]));
    }

    #[test]
    fn scenario_products() {
        let s = ScenarioSet { per_res: vec![vec![0.5, 0.3], vec![0.5, 0.2]] };
        assert_eq!(s.joint(), vec![vec![0.5, 0.5], vec![0.5, 0.2], vec![0.3, 0.5], vec![0.3, 0.2]]);
    }

    fn count(p: &ConicProgram, f: impl Fn(&str) -> bool) -> usize {
        p.variables.iter().filter(|v| f(&v.name)).count()
    }

    #[test]
    fn assembly_structure() {
        let case = NetworkCase::fig4();
        let op = solve_base_power_flow(&case).unwrap();
        let opts = FormulationOptions::default();
        let d = assemble_centralized(&case, &op, &ScenarioSet::forecast(&case), Mode::Dopf, &opts).unwrap();
        let ex = ScenarioSet::extremes(&case);
        let r = assemble_centralized(&case, &op, &ex, Mode::Ropf, &opts).unwrap();
        let e = assemble_centralized(&case, &op, &ex, Mode::Eropf, &opts).unwrap();

        let first = |p: &ConicProgram| count(p, names::is_first_stage);
        assert_eq!(first(&d), first(&r));
        assert_eq!(first(&d), first(&e));
        let second = |p: &ConicProgram| count(p, |n| !names::is_first_stage(n) && !n.ends_with(".sq"));
        assert_eq!(second(&r), 4 * second(&d));
        // one copy of the RES boundary per unit, shared by its local scenarios
        assert_eq!(count(&e, |n| n.ends_with(".pr2v")), case.res_units.len());
        assert_eq!(count(&e, |n| n.ends_with("res1.p")), 2);
        for p in [&d, &r, &e] {
            for v in &p.variables {
                if v.kind == VarKind::Binary {
                    assert!(v.owner.is_mtdc_or_vsc(), "{}", v.name);
                }
            }
            assert_eq!(p.boundary.len(), 1 + case.res_units.len());
        }
    }

    #[test]
    fn empty_scenarios_rejected() {
        let case = NetworkCase::fig4();
        let op = solve_base_power_flow(&case).unwrap();
        let s = ScenarioSet { per_res: vec![vec![], vec![0.2]] };
        let err = assemble_centralized(&case, &op, &s, Mode::Ropf, &FormulationOptions::default());
        assert_eq!(err.unwrap_err(), ModelError::EmptyScenarioSet);
    }
}
