use crate::case::NetworkCase;
use crate::error::ModelError;
use crate::program::{ConeFamily, ConicProgram, LinExpr, Owner};

use super::names;

/// MTDC grid: relaxed branch flow model with line losses, nodal balance and
/// voltage bounds. With `switching`, every switchable line carries a status
/// binary that gates its flow (big-M) and its voltage-drop equation through
/// the auxiliary pair `(b, t)`; otherwise lines keep their nominal status.
pub fn build_mtdc_block(case: &NetworkCase, switching: bool) -> Result<ConicProgram, ModelError> {
    let own = Owner::Mtdc;
    let mut p = ConicProgram::new("mtdc");
    let inf = f64::INFINITY;
    let mut u = Vec::new();
    for n in &case.dc_nodes {
        let (lo, hi) = n.u_bounds();
        u.push(p.continuous(names::dc_u(n.id), lo, hi, own)?);
    }
    let mut out: Vec<LinExpr> = vec![LinExpr::new(); case.dc_nodes.len()];
    let big_m = case.big_m();

    for (k, line) in case.dc_lines.iter().enumerate() {
        let gated = switching && line.switchable;
        if !gated && !line.closed {
            continue;
        }
        let i = case.dc_index(line.from).expect("validated case");
        let j = case.dc_index(line.to).expect("validated case");
        let pij = p.continuous(format!("dc.p[{k}]"), -inf, inf, own)?;
        let pji = p.continuous(format!("dc.pr[{k}]"), -inf, inf, own)?;
        let l = p.continuous(format!("dc.l[{k}]"), 0.0, inf, own)?;
        out[i].add_term(pij, 1.0);
        out[j].add_term(pji, 1.0);
        p.eq("dc.loss", LinExpr::from(pij).with(pji, 1.0).with(l, -line.r), 0.0);
        p.rotated_cone(&format!("dc.flow[{k}]"), ConeFamily::DcLineFlow, l, u[i], vec![pij.into()]);
        p.rotated_cone(&format!("dc.flow_rev[{k}]"), ConeFamily::DcLineFlow, l, u[j], vec![pji.into()]);

        // drop: (u_i − b) − (u_j − t) = r (p_ij − p_ji)
        let drop = |b: LinExpr, t: LinExpr| {
            LinExpr::from(u[i]) - b - LinExpr::from(u[j]) + t - LinExpr::term(pij, line.r) + LinExpr::term(pji, line.r)
        };
        if !gated {
            p.eq("dc.ohm", drop(LinExpr::new(), LinExpr::new()), 0.0);
            continue;
        }
        let a = p.binary(names::alpha(k), own)?;
        for f in [pij, pji] {
            p.le("dc.gate", LinExpr::from(f).with(a, -big_m), 0.0);
            p.ge("dc.gate", LinExpr::from(f).with(a, big_m), 0.0);
        }
        let b = p.continuous(format!("dc.b[{k}]"), -inf, inf, own)?;
        let t = p.continuous(format!("dc.t[{k}]"), -inf, inf, own)?;
        p.eq("dc.ohm", drop(b.into(), t.into()), 0.0);
        for (aux, node) in [(b, i), (t, j)] {
            let (lo, hi) = case.dc_nodes[node].u_bounds();
            // u̲(1 − α) ≤ aux ≤ ū(1 − α)
            p.ge("dc.aux", LinExpr::from(aux).with(a, lo), lo);
            p.le("dc.aux", LinExpr::from(aux).with(a, hi), hi);
            // u̲α ≤ u − aux ≤ ūα
            p.ge("dc.aux", LinExpr::from(u[node]).with(aux, -1.0).with(a, -lo), 0.0);
            p.le("dc.aux", LinExpr::from(u[node]).with(aux, -1.0).with(a, -hi), 0.0);
        }
    }

    // Σ_j p_ij = p_i = −p_m2v
    let hosted: Vec<u32> = case.vsc_stations.iter().map(|v| v.dc_node).collect();
    for (i, n) in case.dc_nodes.iter().enumerate() {
        let mut e = out[i].clone();
        if hosted.contains(&n.id) {
            let m2v = p.continuous(names::dc_m2v(n.id), -inf, inf, own)?;
            e.add_term(m2v, 1.0);
        }
        p.eq("dc.balance", e, 0.0);
    }
    Ok(p)
}
