//! Extreme-scenario robustness: vertex enumeration of the availability box,
//! seeded Monte-Carlo validation of first-stage decisions, and the structural
//! check that makes vertex enumeration sufficient.
//!
//! When every uncertain parameter enters the model only as a linear
//! right-hand side, the set of parameters for which fixed first-stage
//! decisions admit a feasible recourse is convex; feasibility at every
//! vertex of the box then implies feasibility on the whole box.

use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::case::NetworkCase;
use crate::error::{Error, ModelError};
use crate::formulation::{assemble_centralized, names, FormulationOptions, Mode, ScenarioSet};
use crate::powerflow::OperatingPoint;
use crate::program::ConicProgram;
use crate::solver::{ConicSolver, Solution};

/// Availability interval `(min, max)` of every renewable unit.
pub fn res_boxes(case: &NetworkCase) -> Vec<(f64, f64)> {
    case.res_units.iter().map(|r| (r.p_avail_min, r.p_avail_max)).collect()
}

fn check_boxes(boxes: &[(f64, f64)]) -> Result<(), ModelError> {
    for (i, &(lo, hi)) in boxes.iter().enumerate() {
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(ModelError::Config(format!("box {i} is not an interval: [{lo}, {hi}]")));
        }
    }
    Ok(())
}

/// Per-unit endpoints, upper first, a degenerate interval giving one value.
pub fn extreme_set(boxes: &[(f64, f64)]) -> Result<ScenarioSet, ModelError> {
    check_boxes(boxes)?;
    let per_res = boxes.iter().map(|&(lo, hi)| if lo == hi { vec![hi] } else { vec![hi, lo] }).collect();
    Ok(ScenarioSet { per_res })
}

/// Distinct vertices of the box, first unit varying slowest.
pub fn enumerate_extremes(boxes: &[(f64, f64)]) -> Result<Vec<Vec<f64>>, ModelError> {
    Ok(extreme_set(boxes)?.joint())
}

/// `count` points drawn uniformly from the box with a ChaCha stream.
pub fn sample_scenarios(boxes: &[(f64, f64)], count: usize, seed: u64) -> Result<Vec<Vec<f64>>, ModelError> {
    if count == 0 {
        return Err(ModelError::Config("sample count must be positive".into()));
    }
    check_boxes(boxes)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dists: Vec<Option<Uniform<f64>>> =
        boxes.iter().map(|&(lo, hi)| (lo < hi).then(|| Uniform::new_inclusive(lo, hi))).collect();
    Ok((0..count)
        .map(|_| {
            dists.iter().zip(boxes).map(|(d, &(lo, _))| d.as_ref().map_or(lo, |d| d.sample(&mut rng))).collect()
        })
        .collect())
}

/// Here-and-now decisions by variable name.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FirstStage {
    pub values: Vec<(String, f64)>,
}

impl FirstStage {
    /// Topology and generator set-points; with `mode` E-ROPF also every
    /// boundary, which that model shares across scenarios.
    pub fn from_solution(prog: &ConicProgram, sol: &Solution, mode: Mode) -> Result<FirstStage, Error> {
        if !sol.has_primal() {
            return Err(Error::Infeasible(format!("no primal solution for `{}`", prog.name)));
        }
        let boundary: Vec<usize> = if mode == Mode::Eropf {
            prog.boundary.iter().flat_map(|g| g.vars.iter().map(|v| v.0)).collect()
        } else {
            Vec::new()
        };
        let values = prog
            .variables
            .iter()
            .zip(&sol.x)
            .enumerate()
            .filter(|(i, (v, _))| names::is_first_stage(&v.name) || boundary.contains(i))
            .map(|(_, (v, &x))| (v.name.clone(), x))
            .collect();
        Ok(FirstStage { values })
    }

    /// Pins the decisions in `prog`; binaries are rounded.
    pub fn apply(&self, prog: &mut ConicProgram) -> Result<(), ModelError> {
        for (name, x) in &self.values {
            let v = prog.var_checked(name)?;
            let x = if name.starts_with("dc.alpha[") { x.round() } else { *x };
            prog.fix(v, x);
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleOutcome {
    pub availability: Vec<f64>,
    pub feasible: bool,
    pub objective: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RobustnessReport {
    pub samples: usize,
    pub feasible: usize,
    pub feasible_ratio: f64,
    /// Statistics over feasible samples; `None` when there are none.
    pub objective_min: Option<f64>,
    pub objective_max: Option<f64>,
    pub objective_mean: Option<f64>,
    pub outcomes: Vec<SampleOutcome>,
}

/// Re-solves the deterministic model at every sample with the first stage
/// pinned; the recourse (renewable and converter operation, envelope
/// segments, and boundaries unless pinned) is re-optimized.
pub fn evaluate_robustness(
    case: &NetworkCase,
    op: &OperatingPoint,
    decisions: &FirstStage,
    samples: &[Vec<f64>],
    opts: &FormulationOptions,
    solver: &ConicSolver,
) -> Result<RobustnessReport, Error> {
    if samples.is_empty() {
        return Err(ModelError::Config("no samples to evaluate".into()).into());
    }
    let mut outcomes = Vec::with_capacity(samples.len());
    for s in samples {
        let mut prog = assemble_centralized(case, op, &ScenarioSet::point(s.clone()), Mode::Dopf, opts)?;
        decisions.apply(&mut prog)?;
        let sol = solver.solve(&prog)?;
        let feasible = sol.has_primal();
        outcomes.push(SampleOutcome {
            availability: s.clone(),
            feasible,
            objective: feasible.then_some(sol.objective),
        });
    }
    let objs: Vec<f64> = outcomes.iter().filter_map(|o| o.objective).collect();
    let feasible = objs.len();
    Ok(RobustnessReport {
        samples: samples.len(),
        feasible,
        feasible_ratio: feasible as f64 / samples.len() as f64,
        objective_min: objs.iter().copied().reduce(f64::min),
        objective_max: objs.iter().copied().reduce(f64::max),
        objective_mean: (feasible > 0).then(|| objs.iter().sum::<f64>() / feasible as f64),
        outcomes,
    })
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EsmReport {
    pub valid: bool,
    /// Uncertain parameters found on right-hand sides.
    pub parameters: Vec<String>,
    pub violations: Vec<String>,
}

/// Verifies that uncertain parameters appear only as linear right-hand
/// sides and that no nonconvex relation is present.
pub fn esm_validity_check(prog: &ConicProgram) -> EsmReport {
    let mut rep = EsmReport::default();
    for b in prog.blocks.values() {
        for (i, r) in b.rows.iter().enumerate() {
            if let Some(p) = &r.rhs_param {
                if !rep.parameters.contains(&p.0) {
                    rep.parameters.push(p.0.clone());
                }
            }
            for (v, p) in &r.coef_params {
                rep.violations.push(format!(
                    "row {}[{i}]: parameter `{}` multiplies variable `{}`",
                    b.label,
                    p.0,
                    prog.variables.get(v.0).map_or("?", |x| x.name.as_str())
                ));
            }
        }
    }
    for bl in &prog.bilinear {
        rep.violations.push(format!("bilinear equality `{}`", bl.label));
    }
    rep.valid = rep.violations.is_empty();
    rep
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::program::{BilinearEquality, LinExpr, Owner, ParamTag, Sense};

    #[test]
    fn vertices_of_two_boxes() {
        let v = enumerate_extremes(&[(0.3, 0.5), (0.2, 0.5)]).unwrap();
        assert_eq!(v, vec![vec![0.5, 0.5], vec![0.5, 0.2], vec![0.3, 0.5], vec![0.3, 0.2]]);
        assert_eq!(enumerate_extremes(&[(0.4, 0.4)]).unwrap(), vec![vec![0.4]]);
        assert_eq!(enumerate_extremes(&[(0.0, 1.0); 3]).unwrap().len(), 8);
        assert!(enumerate_extremes(&[(0.5, 0.3)]).is_err());
    }

    #[test]
    fn sampling_is_seeded_and_uniform() {
        let boxes = [(0.3, 0.5), (0.2, 0.5), (0.1, 0.1)];
        assert!(sample_scenarios(&boxes, 0, 1).is_err());
        let a = sample_scenarios(&boxes, 10_000, 7).unwrap();
        assert_eq!(a, sample_scenarios(&boxes, 10_000, 7).unwrap());
        assert_ne!(a[..5], sample_scenarios(&boxes, 5, 8).unwrap()[..]);
        for (k, &(lo, hi)) in boxes.iter().enumerate() {
            let mean = a.iter().map(|s| s[k]).sum::<f64>() / a.len() as f64;
            // σ of the mean of U(lo, hi)
            let sigma = (hi - lo) / 12f64.sqrt() / (a.len() as f64).sqrt();
            assert!((mean - (lo + hi) / 2.0).abs() <= 3.0 * sigma + 1e-12, "unit {k}: {mean}");
            assert!(a.iter().all(|s| s[k] >= lo && s[k] <= hi));
        }
    }

    #[test]
    fn validity_check_flags_parameter_products_and_bilinear_terms() {
        let mut p = ConicProgram::new("t");
        let x = p.continuous("x", 0.0, 1.0, Owner::Auxiliary).unwrap();
        let y = p.continuous("y", 0.0, 1.0, Owner::Auxiliary).unwrap();
        p.add_row_tagged("cap", x.into(), Sense::Le, 0.5, Some(ParamTag("pbar".into())));
        let rep = esm_validity_check(&p);
        assert!(rep.valid);
        assert_eq!(rep.parameters, vec!["pbar".to_string()]);

        let mut q = p.clone();
        let r = q.add_row("scaled", LinExpr::from(x).with(y, 1.0), Sense::Le, 1.0);
        q.blocks.get_mut("scaled").unwrap().rows[r].coef_params.push((y, ParamTag("pbar".into())));
        assert!(!esm_validity_check(&q).valid);

        let mut b = p.clone();
        b.bilinear.push(BilinearEquality { label: "xy".into(), x, y, z: x });
        assert!(!esm_validity_check(&b).valid);
    }
}
