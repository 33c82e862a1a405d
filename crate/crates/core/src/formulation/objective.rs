use crate::case::NetworkCase;
use crate::error::ModelError;
use crate::program::{ConicProgram, LinExpr};

use super::names;

/// Generation cost plus grid-side losses `Σ(pᴳ − pᴸ)`; requires the
/// generator variables to be present in `p`.
pub fn add_grid_objective(p: &mut ConicProgram, case: &NetworkCase) -> Result<(), ModelError> {
    let mut e = LinExpr::constant(-case.ac_nodes.iter().map(|n| n.load_p).sum::<f64>());
    for (g, gen) in case.generators.iter().enumerate() {
        let v = p.var_checked(&names::pg(g))?;
        p.add_quadratic_objective(v, gen.c1, &format!("obj.gen[{g}]"))?;
        e.add_term(v, gen.c2 + 1.0);
        e.constant += gen.c3;
    }
    p.add_objective(e);
    Ok(())
}

/// `weight·pᴿ` of a renewable unit.
pub fn add_res_objective(p: &mut ConicProgram, case: &NetworkCase, res_idx: usize, weight: f64) -> Result<(), ModelError> {
    let v = p.var_checked(&names::res_p(case.res_units[res_idx].id))?;
    p.add_objective(LinExpr::term(v, weight));
    Ok(())
}

/// Full objective on an unscoped program holding every block.
pub fn build_objective(p: &mut ConicProgram, case: &NetworkCase) -> Result<(), ModelError> {
    add_grid_objective(p, case)?;
    for r in 0..case.res_units.len() {
        add_res_objective(p, case, r, 1.0)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::case::Generator;
    use crate::program::Owner;

    fn one_gen(c: (f64, f64, f64)) -> (NetworkCase, ConicProgram) {
        let mut case = NetworkCase::fig4();
        case.res_units.clear();
        let node = case.ac_nodes[0].id;
        case.generators = vec![Generator {
            node,
            p_max: 1.0,
            pf_cap: 0.9,
            pf_ind: 0.9,
            c1: c.0,
            c2: c.1,
            c3: c.2,
            p_base: 0.0,
            q_base: 0.0,
        }];
        let mut p = ConicProgram::new("t");
        p.continuous(names::pg(0), 0.0, 1.0, Owner::AcSystem(0)).unwrap();
        (case, p)
    }

    #[test]
    fn linear_cost_and_constant_floor() {
        let (mut case, mut p) = one_gen((0.0, 1.0, 0.0));
        case.ac_nodes.iter_mut().for_each(|n| n.load_p = 0.0);
        build_objective(&mut p, &case).unwrap();
        // cost 0.5 plus generation-minus-load 0.5
        assert!((p.objective_value(&[0.5]) - 1.0).abs() < 1e-12);

        let (case, mut p) = one_gen((0.0, 0.0, 0.7));
        build_objective(&mut p, &case).unwrap();
        let load: f64 = case.ac_nodes.iter().map(|n| n.load_p).sum();
        assert!((p.objective_value(&[0.0]) - (0.7 - load)).abs() < 1e-12);
    }

    #[test]
    fn negative_quadratic_rejected() {
        let (case, mut p) = one_gen((-1.0, 0.0, 0.0));
        assert!(matches!(build_objective(&mut p, &case), Err(ModelError::Nonconvex(_))));
    }
}
