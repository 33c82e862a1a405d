use mtdc_opf::case::NetworkCase;
use mtdc_opf::formulation::{assemble_centralized, FormulationOptions, Mode, ScenarioSet};
use mtdc_opf::powerflow::solve_base_power_flow;
use mtdc_opf::robust::{
    enumerate_extremes, esm_validity_check, evaluate_robustness, extreme_set, res_boxes, sample_scenarios, FirstStage,
};
use mtdc_opf::solver::{ConicSolver, Status};

fn solve(case: &NetworkCase, mode: Mode, sc: &ScenarioSet) -> (f64, FirstStage) {
    let op = solve_base_power_flow(case).unwrap();
    let prog = assemble_centralized(case, &op, sc, mode, &FormulationOptions::default()).unwrap();
    let sol = ConicSolver::default().solve(&prog).unwrap();
    assert_eq!(sol.status, Status::Optimal, "{mode:?}");
    (sol.objective, FirstStage::from_solution(&prog, &sol, mode).unwrap())
}

#[test]
fn robust_decisions_hold_on_every_vertex() {
    let case = NetworkCase::fig4();
    let op = solve_base_power_flow(&case).unwrap();
    let boxes = res_boxes(&case);
    let ex = extreme_set(&boxes).unwrap();
    let vertices = enumerate_extremes(&boxes).unwrap();
    assert_eq!(vertices.len(), 4);
    let (ropf, ropf_fs) = solve(&case, Mode::Ropf, &ex);
    let (eropf, eropf_fs) = solve(&case, Mode::Eropf, &ex);
    // the joint model has more second-stage freedom, hence a lower cost
    assert!(ropf <= eropf + 1e-7, "{ropf} vs {eropf}");
    let solver = ConicSolver::default();
    for fs in [&ropf_fs, &eropf_fs] {
        let rep = evaluate_robustness(&case, &op, fs, &vertices, &FormulationOptions::default(), &solver).unwrap();
        assert_eq!(rep.feasible, vertices.len());
        assert_eq!(rep.feasible_ratio, 1.0);
    }
}

#[test]
fn forecast_decisions_fail_below_the_forecast() {
    let case = NetworkCase::fig4();
    let op = solve_base_power_flow(&case).unwrap();
    let boxes = res_boxes(&case);
    let (_, fs) = solve(&case, Mode::Dopf, &ScenarioSet::forecast(&case));
    let low = vec![boxes.iter().map(|b| b.0).collect::<Vec<f64>>()];
    let rep = evaluate_robustness(&case, &op, &fs, &low, &FormulationOptions::default(), &ConicSolver::default()).unwrap();
    assert_eq!(rep.feasible, 0);
    assert!(rep.objective_mean.is_none());
}

#[test]
fn degenerate_boxes_collapse_all_models() {
    let mut case = NetworkCase::fig4();
    for r in &mut case.res_units {
        r.p_avail_max = r.p_avail_min;
    }
    let ex = extreme_set(&res_boxes(&case)).unwrap();
    assert!(ex.per_res.iter().all(|v| v.len() == 1));
    let (dopf, _) = solve(&case, Mode::Dopf, &ScenarioSet::forecast(&case));
    for mode in [Mode::Ropf, Mode::Eropf] {
        let (obj, _) = solve(&case, mode, &ex);
        assert!((obj - dopf).abs() < 1e-6 * dopf.abs().max(1.0), "{mode:?}: {obj} vs {dopf}");
    }
}

#[test]
fn samples_cover_the_box() {
    let boxes = res_boxes(&NetworkCase::fig4());
    let s = sample_scenarios(&boxes, 400, 9).unwrap();
    assert_eq!(s, sample_scenarios(&boxes, 400, 9).unwrap());
    assert_ne!(s, sample_scenarios(&boxes, 400, 10).unwrap());
    for (k, &(lo, hi)) in boxes.iter().enumerate() {
        let vals: Vec<f64> = s.iter().map(|v| v[k]).collect();
        assert!(vals.iter().all(|&v| (lo..=hi).contains(&v)));
        // both ends of the box are approached
        let w = hi - lo;
        assert!(vals.iter().any(|&v| v < lo + 0.05 * w) && vals.iter().any(|&v| v > hi - 0.05 * w));
    }
    assert!(sample_scenarios(&boxes, 0, 1).is_err());
}

#[test]
fn assembled_models_pass_the_validity_check() {
    let case = NetworkCase::fig4();
    let op = solve_base_power_flow(&case).unwrap();
    let ex = ScenarioSet::extremes(&case);
    for (mode, sc) in [(Mode::Dopf, ScenarioSet::forecast(&case)), (Mode::Ropf, ex.clone()), (Mode::Eropf, ex)] {
        let prog = assemble_centralized(&case, &op, &sc, mode, &FormulationOptions::default()).unwrap();
        let rep = esm_validity_check(&prog);
        assert!(rep.valid, "{mode:?}: {:?}", rep.violations);
        // availabilities only ever appear as right-hand sides
        assert!(!rep.parameters.is_empty());
    }
}
