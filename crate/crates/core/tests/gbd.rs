mod common;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use mtdc_opf::case::{NetworkCase, Pcc};
use mtdc_opf::error::{Error, ModelError};
use mtdc_opf::formulation::{assemble_centralized, FormulationOptions, Mode, ScenarioSet};
use mtdc_opf::gbd::{
    decompose, evaluate_subproblem, run_gbd, solve_mp, solve_osp, solve_rsp, BendersCut, CutKind, CutMode,
    Decomposition, GbdOptions, MasterProblem, Schedule, Situation,
};
use mtdc_opf::powerflow::solve_base_power_flow;
use mtdc_opf::solver::ConicSolver;

fn solver() -> ConicSolver {
    let mut s = ConicSolver::default();
    s.bnb.rel_gap = 1e-9;
    s
}

fn fig4_eropf() -> Decomposition {
    let case = NetworkCase::fig4();
    let op = solve_base_power_flow(&case).unwrap();
    decompose(&case, &op, &ScenarioSet::extremes(&case), Mode::Eropf, &FormulationOptions::default()).unwrap()
}

fn fig4_dopf(avail: Vec<f64>) -> Decomposition {
    let case = NetworkCase::fig4();
    let op = solve_base_power_flow(&case).unwrap();
    decompose(&case, &op, &ScenarioSet::point(avail), Mode::Dopf, &FormulationOptions::default()).unwrap()
}

#[test]
fn relaxed_subproblem_measures_the_availability_overshoot() {
    let dec = fig4_dopf(vec![0.5, 0.5]);
    let sp = &dec.subproblems[1];
    let s = solver();
    assert!(solve_osp(sp, &[0.6, 0.0, 1.0], 1, 0, &s).unwrap().is_none());
    let out = solve_rsp(sp, &[0.6, 0.0, 1.0], 1, 0, &s).unwrap();
    assert!(!out.feasible);
    assert!((out.value - 0.1).abs() < 1e-6, "{}", out.value);
    let cut = out.cut.unwrap();
    assert_eq!(cut.kind, CutKind::Feasibility);
    assert!((cut.eval(&cut.point.clone()) - out.value).abs() < 1e-12);
    // the measure grows one-for-one with the overshoot
    assert!((cut.gradient[0] - 1.0).abs() < 1e-5, "{:?}", cut.gradient);
    assert!((cut.eval(&[0.7, 0.0, 1.0]) - 0.2).abs() < 1e-5);
    // within the box there is nothing to cut
    let ok = solve_rsp(sp, &[0.4, 0.0, 1.0], 1, 0, &s).unwrap();
    assert!(ok.cut.is_none() && ok.value <= 1e-7);
}

#[test]
fn optimality_gradient_matches_directional_difference() {
    let (_, dec) = grid_only_dec(0.3);
    let sp = &dec.subproblems[0];
    let s = solver();
    // the pinned voltages follow the injections, so perturb along a segment
    // between two feasible boundary points: the master's proposal and the
    // subproblem's own optimum
    let b1 = run_gbd(&dec, &GbdOptions::default(), &s).unwrap().proposal[0].clone();
    let own = s.solve_continuous(&sp.program).unwrap();
    let b2: Vec<f64> = sp.boundary.iter().map(|n| own.x[sp.program.var(n).unwrap().0]).collect();
    let d: Vec<f64> = b2.iter().zip(&b1).map(|(x, y)| x - y).collect();
    assert!(d.iter().any(|v| v.abs() > 1e-3), "{d:?}");
    let at = |t: f64| b1.iter().zip(&d).map(|(x, dx)| x + t * dx).collect::<Vec<f64>>();
    let value = |t: f64| solve_osp(sp, &at(t), 0, 0, &s).unwrap().expect("segment is feasible").value;
    for t in [0.25, 0.5, 0.75] {
        let cut = solve_osp(sp, &at(t), 0, 0, &s).unwrap().unwrap().cut.unwrap();
        let h = 1e-4;
        let fd = (value(t + h) - value(t - h)) / (2.0 * h);
        let g: f64 = cut.gradient.iter().zip(&d).map(|(g, dx)| g * dx).sum();
        assert!((fd - g).abs() < 1e-4 * fd.abs().max(1.0), "t={t}: fd {fd} vs {g}");
    }
}

#[test]
fn empty_and_constant_cut_pools_bound_the_master() {
    let dec = fig4_eropf();
    let n = dec.num_subproblems();
    let s = solver();
    let mp = MasterProblem::new(&dec, false).unwrap();
    let lb = solve_mp(&mp, &[], None, &s).unwrap().lower_bound;
    assert!((lb - n as f64 * dec.z_min).abs() < 1e-6, "{lb}");

    let constant: Vec<BendersCut> = (0..n)
        .map(|k| BendersCut {
            kind: CutKind::Optimality,
            sp: Some(k),
            iteration: 0,
            point: dec.initial[k].clone(),
            gradient: vec![0.0; dec.initial[k].len()],
            value: 5.0,
        })
        .collect();
    // a zero gradient yields a flat cut
    assert_eq!(constant[0].eval(&[9.0, -9.0, 9.0]), 5.0);
    let lb = solve_mp(&mp, &constant, None, &s).unwrap().lower_bound;
    assert!((lb - 5.0 * n as f64).abs() < 1e-6, "{lb}");

    let agg = MasterProblem::new(&dec, true).unwrap();
    let one = BendersCut::aggregate(CutKind::Optimality, 0, &constant);
    let lb = solve_mp(&agg, &[one], None, &s).unwrap().lower_bound;
    assert!((lb - 5.0 * n as f64).abs() < 1e-6, "{lb}");
}

#[test]
fn infeasible_master_names_the_conflicting_cut() {
    let dec = fig4_eropf();
    let s = solver();
    let mp = MasterProblem::new(&dec, false).unwrap();
    let flat = |kind, value, iteration| BendersCut {
        kind,
        sp: Some(1),
        iteration,
        point: dec.initial[1].clone(),
        gradient: vec![0.0; 3],
        value,
    };
    let pool = vec![flat(CutKind::Optimality, 1.0, 0), flat(CutKind::Feasibility, 0.5, 7), flat(CutKind::Optimality, 2.0, 1)];
    match solve_mp(&mp, &pool, None, &s) {
        Err(Error::Infeasible(msg)) => assert!(msg.ends_with("[Feasibility@7#1]"), "{msg}"),
        other => panic!("expected infeasible master, got {other:?}"),
    }
}

#[test]
fn every_generated_cut_underestimates_its_subproblem() {
    let dec = fig4_eropf();
    let s = solver();
    let r = run_gbd(&dec, &GbdOptions { max_iterations: 12, ..Default::default() }, &s).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut checked = 0;
    for (k, sp) in dec.subproblems.iter().enumerate() {
        let cuts: Vec<&BendersCut> = r.cuts.iter().filter(|c| c.sp == Some(k)).collect();
        assert!(!cuts.is_empty());
        for _ in 0..20 {
            let base = &cuts[rng.gen_range(0..cuts.len())].point;
            let b: Vec<f64> = base
                .iter()
                .enumerate()
                .map(|(i, &x)| if i % 3 == 2 { (x + rng.gen_range(-0.05..0.05)).max(0.5) } else { x + rng.gen_range(-0.3..0.3) })
                .collect();
            let out = evaluate_subproblem(sp, &b, k, 0, &s).unwrap();
            for c in &cuts {
                // optimality cuts bound the value where the SP is feasible;
                // feasibility cuts bound the relaxation measure everywhere
                let truth = match (c.kind, out.feasible) {
                    (CutKind::Optimality, true) => out.value,
                    (CutKind::Feasibility, false) => out.value,
                    (CutKind::Feasibility, true) => 0.0,
                    (CutKind::Optimality, false) => continue,
                };
                assert!(c.eval(&b) <= truth + 1e-5 * truth.abs().max(1.0), "sp {k}: cut {} > {truth}", c.eval(&b));
                checked += 1;
            }
        }
    }
    assert!(checked > 60, "{checked}");
}

/// Fig. 4 without the renewable units and their converters, with the load
/// scaled by `load` (the generators alone cannot carry the full load).
fn grid_only(load: f64) -> NetworkCase {
    let mut case = NetworkCase::fig4();
    case.res_units.clear();
    case.vsc_stations.retain(|v| matches!(v.pcc, Pcc::Ac(_)));
    for n in &mut case.ac_nodes {
        n.load_p *= load;
        n.load_q *= load;
    }
    case
}

fn grid_only_dec(load: f64) -> (NetworkCase, Decomposition) {
    let case = grid_only(load);
    let op = solve_base_power_flow(&case).unwrap();
    let dec = decompose(&case, &op, &ScenarioSet::point(vec![]), Mode::Dopf, &FormulationOptions::default()).unwrap();
    (case, dec)
}

#[test]
fn infeasible_case_is_reported_not_looped() {
    let (_, dec) = grid_only_dec(1.0);
    let r = run_gbd(&dec, &GbdOptions::default(), &solver());
    assert!(matches!(r, Err(Error::Infeasible(_))), "{r:?}");
}

#[test]
fn single_subproblem_matches_centralized_optimum() {
    let (case, dec) = grid_only_dec(0.3);
    let op = solve_base_power_flow(&case).unwrap();
    let s = solver();
    let prog = assemble_centralized(&case, &op, &ScenarioSet::point(vec![]), Mode::Dopf, &FormulationOptions::default());
    let central = s.solve(&prog.unwrap()).unwrap();
    assert_eq!(dec.num_subproblems(), 1);
    for cut_mode in [CutMode::Multi, CutMode::Single] {
        let r = run_gbd(&dec, &GbdOptions { cut_mode, ..Default::default() }, &s).unwrap();
        assert!(r.converged);
        assert!((r.objective - central.objective).abs() < 1e-5, "{} vs {}", r.objective, central.objective);
    }
}

#[test]
fn s1_reproduces_the_synchronous_run() {
    let dec = fig4_eropf();
    let s = solver();
    let sync = run_gbd(&dec, &GbdOptions::default(), &s).unwrap();
    let s1 = run_gbd(&dec, &GbdOptions { schedule: Some(Situation::S1.schedule(5)), ..Default::default() }, &s).unwrap();
    assert_eq!(sync.iterations, s1.iterations);
    assert_eq!(sync.objective.to_bits(), s1.objective.to_bits());
    assert_eq!(sync.trace.lower_bounds(), s1.trace.lower_bounds());
}

#[test]
fn asynchronous_trace_is_consistent_and_seeded() {
    let dec = fig4_eropf();
    let s = solver();
    let sched = Schedule { jitter: 0.3, ..Situation::S3.schedule(17) };
    let opts = GbdOptions { schedule: Some(sched), ..Default::default() };
    let a = run_gbd(&dec, &opts, &s).unwrap();
    let b = run_gbd(&dec, &opts, &s).unwrap();
    assert_eq!(a.trace.to_csv(), b.trace.to_csv());
    for rec in &a.trace.records {
        assert!(rec.active.iter().all(|k| !rec.busy.contains(k)), "iteration {}", rec.iteration);
        assert!(rec.active.len() >= 2 || rec.iteration == 0);
        assert!(rec.master_value <= rec.lower_bound);
    }
    let lbs = a.trace.lower_bounds();
    assert!(lbs.windows(2).all(|w| w[1] >= w[0] - 1e-7));
    let csv = a.trace.to_csv();
    let header = csv.lines().next().unwrap();
    assert!(header.starts_with("iteration,time,upper_bound,best_upper_bound,lower_bound,master_value,residual_0"), "{header}");
    assert_eq!(csv.lines().count(), a.trace.records.len() + 1);
}

#[test]
fn schedule_validation() {
    let dec = fig4_eropf();
    let s = solver();
    let bad = [
        Schedule { latencies: vec![1.0, 1.0], ..Situation::S2.schedule(0) },
        Schedule { n_min: 0, ..Situation::S2.schedule(0) },
        Schedule { n_min: 4, ..Situation::S2.schedule(0) },
        Schedule { staleness: 0, ..Situation::S2.schedule(0) },
        Schedule { latencies: vec![1.0, -1.0, 1.0], ..Situation::S2.schedule(0) },
        Schedule { jitter: 1.5, ..Situation::S2.schedule(0) },
    ];
    for sched in bad {
        let opts = GbdOptions { schedule: Some(sched.clone()), ..Default::default() };
        assert!(matches!(run_gbd(&dec, &opts, &s), Err(Error::Model(ModelError::Config(_)))), "{sched:?}");
    }
}

#[test]
fn joint_scenario_model_is_not_decomposed() {
    let case = NetworkCase::fig4();
    let op = solve_base_power_flow(&case).unwrap();
    let r = decompose(&case, &op, &ScenarioSet::extremes(&case), Mode::Ropf, &FormulationOptions::default());
    assert!(matches!(r, Err(Error::Decomposition(_))));
    let r = decompose(&case, &op, &ScenarioSet { per_res: vec![vec![], vec![0.5]] }, Mode::Eropf, &FormulationOptions::default());
    assert!(matches!(r, Err(Error::Model(ModelError::EmptyScenarioSet))));
}
