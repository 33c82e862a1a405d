use crate::case::{NetworkCase, Pcc};
use crate::error::ModelError;
use crate::powerflow::OperatingPoint;
use crate::program::{BoundaryGroup, ConicProgram, LinExpr, Owner, Sense};

use super::{add_polygon, names, GRID_SYSTEM};

/// Linear AC grid model around `op`: linearized branch flows, nodal
/// balance, generator box and power-factor wedge, polygonal branch
/// capacities and voltage bounds. Exposes `(p_a2v, q_a2v, u)` for each
/// converter station attached to the grid as its boundary.
pub fn build_ac_block(case: &NetworkCase, op: &OperatingPoint) -> Result<ConicProgram, ModelError> {
    if op.branches.len() != case.ac_branches.len() {
        return Err(ModelError::MissingLinearization(op.branches.len().min(case.ac_branches.len())));
    }
    let own = Owner::AcSystem(GRID_SYSTEM);
    let bnd = Owner::Boundary(GRID_SYSTEM);
    let mut p = ConicProgram::new("ac");
    let pcc_nodes: Vec<u32> = case
        .vsc_stations
        .iter()
        .filter_map(|v| match v.pcc {
            Pcc::Ac(n) => Some(n),
            Pcc::Res(_) => None,
        })
        .collect();

    let slack = case.slack_index();
    let mut u = Vec::new();
    let mut th = Vec::new();
    for (i, n) in case.ac_nodes.iter().enumerate() {
        let (lo, hi) = n.u_bounds();
        let owner = if pcc_nodes.contains(&n.id) { bnd } else { own };
        u.push(p.continuous(names::ac_u(n.id), lo, hi, owner)?);
        let (tl, tu) = if Some(i) == slack { (0.0, 0.0) } else { (f64::NEG_INFINITY, f64::INFINITY) };
        th.push(p.continuous(format!("ac.th[{}]", n.id), tl, tu, own)?);
    }

    // injections leaving each node through branches
    let nn = case.ac_nodes.len();
    let mut out_p: Vec<LinExpr> = vec![LinExpr::new(); nn];
    let mut out_q: Vec<LinExpr> = vec![LinExpr::new(); nn];
    let free = (f64::NEG_INFINITY, f64::INFINITY);
    for (k, (br, lin)) in case.ac_branches.iter().zip(&op.branches).enumerate() {
        let (i, j) = (lin.from, lin.to);
        let pf = p.continuous(format!("ac.pf[{k}]"), free.0, free.1, own)?;
        let qf = p.continuous(format!("ac.qf[{k}]"), free.0, free.1, own)?;
        let pt = p.continuous(format!("ac.pt[{k}]"), free.0, free.1, own)?;
        let qt = p.continuous(format!("ac.qt[{k}]"), free.0, free.1, own)?;
        for (var, tan, a, b, sign) in [
            (pf, &lin.p, i, j, 1.0),
            (qf, &lin.q, i, j, 1.0),
            (pt, &lin.p_rev, j, i, -1.0),
            (qt, &lin.q_rev, j, i, -1.0),
        ] {
            // flow = d_a·u_a + d_b·u_b + dθ·(θ_a − θ_b − θᵏ_ab)
            let e = LinExpr::from(var)
                .with(u[a], -tan.d_u_from)
                .with(u[b], -tan.d_u_to)
                .with(th[a], -tan.d_theta)
                .with(th[b], tan.d_theta);
            let label = if var == pf || var == pt { "ac.flow_p" } else { "ac.flow_q" };
            p.eq(label, e, -tan.d_theta * sign * lin.theta_k);
        }
        out_p[i].add_term(pf, 1.0);
        out_q[i].add_term(qf, 1.0);
        out_p[j].add_term(pt, 1.0);
        out_q[j].add_term(qt, 1.0);
        add_polygon(&mut p, "ac.cap", pf.into(), qf.into(), br.s_max, br.polygon_n);
        add_polygon(&mut p, "ac.cap", pt.into(), qt.into(), br.s_max, br.polygon_n);
    }

    let mut gen_p: Vec<LinExpr> = vec![LinExpr::new(); nn];
    let mut gen_q: Vec<LinExpr> = vec![LinExpr::new(); nn];
    for (g, gen) in case.generators.iter().enumerate() {
        let i = case.ac_index(gen.node).expect("validated case");
        let pg = p.continuous(names::pg(g), 0.0, gen.p_max, own)?;
        let qg = p.continuous(names::qg(g), f64::NEG_INFINITY, f64::INFINITY, own)?;
        let (tc, ti) = gen.q_ratios();
        p.add_row("ac.gen_pf", LinExpr::from(qg).with(pg, tc), Sense::Ge, 0.0);
        p.add_row("ac.gen_pf", LinExpr::from(qg).with(pg, -ti), Sense::Le, 0.0);
        gen_p[i].add_term(pg, 1.0);
        gen_q[i].add_term(qg, 1.0);
    }

    let mut boundary = Vec::new();
    let mut exp_p: Vec<LinExpr> = vec![LinExpr::new(); nn];
    let mut exp_q: Vec<LinExpr> = vec![LinExpr::new(); nn];
    for (_, vsc) in case.grid_vscs() {
        let Pcc::Ac(node) = vsc.pcc else { unreachable!() };
        let i = case.ac_index(node).expect("validated case");
        let [pn, qn, _] = names::boundary(case, vsc);
        let pa = p.continuous(pn, free.0, free.1, bnd)?;
        let qa = p.continuous(qn, free.0, free.1, bnd)?;
        exp_p[i].add_term(pa, 1.0);
        exp_q[i].add_term(qa, 1.0);
        boundary.extend([pa, qa, u[i]]);
    }

    // p_i = Σ p_ij + u_i·G_sh = p_G − p_L − p_a2v
    for (i, n) in case.ac_nodes.iter().enumerate() {
        let ep = out_p[i].clone().with(u[i], n.shunt_g) - gen_p[i].clone() + exp_p[i].clone();
        p.eq("ac.balance_p", ep, -n.load_p);
        let eq = out_q[i].clone().with(u[i], -n.shunt_b) - gen_q[i].clone() + exp_q[i].clone();
        p.eq("ac.balance_q", eq, -n.load_q);
    }
    p.boundary.push(BoundaryGroup { system: GRID_SYSTEM, vars: boundary });
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::powerflow::solve_base_power_flow;

    #[test]
    fn zero_capacity_generator_is_pinned() {
        let mut case = NetworkCase::fig4();
        case.generators[1].p_max = 0.0;
        let op = solve_base_power_flow(&NetworkCase::fig4()).unwrap();
        let prog = build_ac_block(&case, &op).unwrap();
        let pg = prog.var(&names::pg(1)).unwrap();
        let qg = prog.var(&names::qg(1)).unwrap();
        assert_eq!(prog.variable(pg).upper, 0.0);
        // wedge rows: q + tan·p ≥ 0 and q − tan·p ≤ 0 with p = 0 force q = 0
        let rows = &prog.block("ac.gen_pf").unwrap().rows;
        let mine: Vec<_> = rows.iter().filter(|r| r.terms.iter().any(|t| t.0 == qg)).collect();
        assert_eq!(mine.len(), 2);
        assert!(mine.iter().any(|r| r.sense == Sense::Ge && r.rhs == 0.0));
        assert!(mine.iter().any(|r| r.sense == Sense::Le && r.rhs == 0.0));
    }

    #[test]
    fn missing_linearization_rejected() {
        let case = NetworkCase::fig4();
        let mut op = solve_base_power_flow(&case).unwrap();
        op.branches.pop();
        assert!(matches!(build_ac_block(&case, &op), Err(ModelError::MissingLinearization(_))));
    }
}
