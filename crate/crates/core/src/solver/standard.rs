//! Lowering of a [`ConicProgram`] to the standard conic form
//!
//! ```text
//! min cᵀx + c0   s.t.   A x = b,   G x + s = h,   s ∈ R₊^l × Q^{q1} × … × Q^{qk}
//! ```
//!
//! together with the bookkeeping needed to map duals back to labeled rows.

use crate::error::SolverError;
use crate::program::{ConicProgram, Sense, VarId, VarKind};

pub type SparseRow = Vec<(usize, f64)>;

/// Where a standard-form row came from.
#[derive(Clone, Debug, PartialEq)]
pub enum RowOrigin {
    /// Row `row` of block `block`; standard-form rhs = `sign`·(program rhs).
    Linear { block: usize, row: usize, sign: f64 },
    Upper(VarId),
    Lower(VarId),
    Fixed(VarId),
    Cone { cone: usize, component: usize },
}

#[derive(Clone, Debug, Default)]
pub struct StandardForm {
    pub n: usize,
    pub c: Vec<f64>,
    pub c0: f64,
    pub a: Vec<SparseRow>,
    pub b: Vec<f64>,
    pub g: Vec<SparseRow>,
    pub h: Vec<f64>,
    /// Number of leading rows of `g` in the nonnegative orthant.
    pub nonneg: usize,
    /// Dimensions of the second-order cones following the orthant rows.
    pub soc_dims: Vec<usize>,
    pub eq_origin: Vec<RowOrigin>,
    pub ineq_origin: Vec<RowOrigin>,
}

impl StandardForm {
    /// Lowers `prog` using the given variable bounds (binaries are relaxed to their bounds).
    pub fn from_program(
        prog: &ConicProgram,
        lower: &[f64],
        upper: &[f64],
    ) -> Result<StandardForm, SolverError> {
        if !prog.bilinear.is_empty() {
            return Err(SolverError::Malformed(format!(
                "{} bilinear equalities are not conic-representable",
                prog.bilinear.len()
            )));
        }
        let n = prog.num_vars();
        let mut sf = StandardForm { n, c: vec![0.0; n], c0: prog.objective.constant, ..Default::default() };
        for &(v, coef) in &prog.objective.terms {
            sf.c[v.0] += coef;
        }

        let mut le_rows: Vec<(SparseRow, f64, RowOrigin)> = Vec::new();
        for (bi, block) in prog.blocks.values().enumerate() {
            for (ri, row) in block.rows.iter().enumerate() {
                let terms = merge(&row.terms);
                match row.sense {
                    Sense::Eq => {
                        sf.a.push(terms);
                        sf.b.push(row.rhs);
                        sf.eq_origin.push(RowOrigin::Linear { block: bi, row: ri, sign: 1.0 });
                    }
                    Sense::Le => le_rows.push((
                        terms,
                        row.rhs,
                        RowOrigin::Linear { block: bi, row: ri, sign: 1.0 },
                    )),
                    Sense::Ge => le_rows.push((
                        terms.into_iter().map(|(j, c)| (j, -c)).collect(),
                        -row.rhs,
                        RowOrigin::Linear { block: bi, row: ri, sign: -1.0 },
                    )),
                }
            }
        }

        for j in 0..n {
            let (lo, hi) = (lower[j], upper[j]);
            if lo > hi + 1e-12 {
                return Err(SolverError::Malformed(format!(
                    "variable `{}` has empty bounds [{lo}, {hi}]",
                    prog.variables[j].name
                )));
            }
            if lo.is_finite() && hi.is_finite() && (hi - lo).abs() <= 1e-12 {
                sf.a.push(vec![(j, 1.0)]);
                sf.b.push(lo);
                sf.eq_origin.push(RowOrigin::Fixed(VarId(j)));
                continue;
            }
            if hi.is_finite() {
                le_rows.push((vec![(j, 1.0)], hi, RowOrigin::Upper(VarId(j))));
            }
            if lo.is_finite() {
                le_rows.push((vec![(j, -1.0)], -lo, RowOrigin::Lower(VarId(j))));
            }
        }

        sf.nonneg = le_rows.len();
        for (row, rhs, origin) in le_rows {
            sf.g.push(row);
            sf.h.push(rhs);
            sf.ineq_origin.push(origin);
        }

        // s = h − G x = expr  ⇒  G = −coef, h = constant
        for (ci, cone) in prog.cones.iter().enumerate() {
            let rows = cone.standard_rows();
            sf.soc_dims.push(rows.len());
            for (k, e) in rows.iter().enumerate() {
                let merged = merge(&e.terms);
                sf.g.push(merged.into_iter().map(|(j, c)| (j, -c)).collect());
                sf.h.push(e.constant);
                sf.ineq_origin.push(RowOrigin::Cone { cone: ci, component: k });
            }
        }
        Ok(sf)
    }

    pub fn m(&self) -> usize {
        self.g.len()
    }

    pub fn p(&self) -> usize {
        self.a.len()
    }
}

fn merge(terms: &[(VarId, f64)]) -> SparseRow {
    let mut out: SparseRow = Vec::with_capacity(terms.len());
    let mut sorted: Vec<(usize, f64)> = terms.iter().map(|&(v, c)| (v.0, c)).collect();
    sorted.sort_by_key(|t| t.0);
    for (j, c) in sorted {
        match out.last_mut() {
            Some(last) if last.0 == j => last.1 += c,
            _ => out.push((j, c)),
        }
    }
    out.retain(|t| t.1 != 0.0);
    out
}

/// Bounds of the program with binaries relaxed to `[lower, upper] ⊆ [0, 1]`.
pub fn program_bounds(prog: &ConicProgram) -> (Vec<f64>, Vec<f64>) {
    prog.variables
        .iter()
        .map(|v| match v.kind {
            VarKind::Binary => (v.lower.max(0.0), v.upper.min(1.0)),
            VarKind::Continuous => (v.lower, v.upper),
        })
        .unzip()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::program::{LinExpr, Owner};

    #[test]
    fn ge_rows_flip_sign_and_fixed_vars_become_equalities() {
        let mut p = ConicProgram::new("t");
        let x = p.continuous("x", 0.0, 0.0, Owner::Auxiliary).unwrap();
        let y = p.continuous("y", -1.0, f64::INFINITY, Owner::Auxiliary).unwrap();
        p.ge("r", LinExpr::from(x) + LinExpr::from(y), 2.0);
        let (lo, hi) = program_bounds(&p);
        let sf = StandardForm::from_program(&p, &lo, &hi).unwrap();
        assert_eq!(sf.a, vec![vec![(0, 1.0)]]);
        assert_eq!(sf.g[0], vec![(0, -1.0), (1, -1.0)]);
        assert_eq!(sf.h[0], -2.0);
        // y lower bound only
        assert_eq!(sf.nonneg, 2);
        assert_eq!(sf.g[1], vec![(1, -1.0)]);
        assert_eq!(sf.h[1], 1.0);
    }
}
