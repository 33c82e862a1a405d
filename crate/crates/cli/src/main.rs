use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use mtdc_opf::accuracy::run_sla;
use mtdc_opf::case::{load_case, NetworkCase};
use mtdc_opf::formulation::{assemble_centralized, names, FormulationOptions, Mode, ScenarioSet};
use mtdc_opf::gbd::{decompose, run_gbd, CutMode, GbdOptions, GbdResult, Schedule, Situation, PRESET_STALENESS};
use mtdc_opf::powerflow::{solve_base_power_flow, OperatingPoint};
use mtdc_opf::robust::{evaluate_robustness, extreme_set, res_boxes, sample_scenarios, FirstStage};
use mtdc_opf::solver::{check_cone_residuals, BackendKind, ConicSolver, Status};

/// Version stamped into every JSON artifact.
const FORMAT_VERSION: u32 = 1;

#[derive(Parser)]
#[command(name = "mtdc-opf", version, about = "AC/MTDC optimal power flow: centralized, decomposed and robust runs")]
struct Cli {
    /// Conic backend (clarabel or dense).
    #[arg(long, global = true, env = BackendKind::ENV, default_value = "clarabel")]
    backend: String,
    /// Relative optimality gap for branch-and-bound.
    #[arg(long, global = true, default_value_t = 1e-9)]
    mip_gap: f64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a case file and print its summary.
    Validate {
        #[arg(long, default_value = "fig4")]
        case: String,
    },
    /// Solve DOPF, ROPF or E-ROPF.
    Solve(SolveArgs),
    /// Solve by Benders decomposition and write the iteration trace.
    Gbd(GbdRunArgs),
    /// Evaluate saved first-stage decisions on sampled RES realizations.
    Evaluate(EvaluateArgs),
    /// Successive re-linearization and voltage-accuracy report.
    Accuracy(AccuracyArgs),
}

#[derive(Args, Clone)]
struct ModelArgs {
    /// Case file, or `fig4` / `fig4-tight` for the bundled cases.
    #[arg(long, default_value = "fig4")]
    case: String,
    #[arg(long, value_enum, default_value_t = ModeArg::Eropf)]
    mode: ModeArg,
    /// Keep every DC line at its nominal status.
    #[arg(long)]
    no_switching: bool,
    /// Half-edge count of every apparent-power polygon.
    #[arg(long)]
    polygon_n: Option<usize>,
    /// Segments of the converter current envelope.
    #[arg(long)]
    envelope_k: Option<usize>,
    /// Directory for the artifacts.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Dopf,
    Ropf,
    Eropf,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Mode {
        match m {
            ModeArg::Dopf => Mode::Dopf,
            ModeArg::Ropf => Mode::Ropf,
            ModeArg::Eropf => Mode::Eropf,
        }
    }
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum SolvePath {
    Centralized,
    Gbd,
}

#[derive(Clone, Copy, ValueEnum)]
enum CutArg {
    Single,
    Multi,
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, value_enum, default_value_t = SolvePath::Centralized)]
    path: SolvePath,
    /// Cone slack above which a relaxation is reported as inexact.
    #[arg(long, default_value_t = 1e-4)]
    cone_tol: f64,
    #[command(flatten)]
    gbd: GbdArgs,
}

#[derive(Args, Clone)]
struct GbdArgs {
    #[arg(long, value_enum, default_value_t = CutArg::Multi)]
    cut: CutArg,
    /// Asynchronous evaluation (needs `--situation` or `--latencies`).
    #[arg(long = "async")]
    asynchronous: bool,
    /// Preset delay situation: 1 (1:1:1), 2 (1:1:2, n_min 2) or 3 (1:2:4, n_min 2).
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=3))]
    situation: Option<u8>,
    /// Latency per subproblem (grid first).
    #[arg(long, value_delimiter = ',')]
    latencies: Option<Vec<f64>>,
    /// Subproblem results required per master iteration.
    #[arg(long)]
    n_min: Option<usize>,
    /// Maximum master iterations a subproblem may lag.
    #[arg(long)]
    staleness: Option<usize>,
    /// Relative latency jitter in [0, 1).
    #[arg(long, default_value_t = 0.0)]
    jitter: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Coupling-residual threshold.
    #[arg(long, default_value_t = 1e-5)]
    tolerance: f64,
    #[arg(long, default_value_t = 200)]
    max_iterations: usize,
    /// Re-center each proposal on the subproblem boundaries.
    #[arg(long)]
    stabilize: bool,
    /// Also run the synchronous algorithm and report the objective deviation.
    #[arg(long)]
    compare_sync: bool,
}

#[derive(Args)]
struct GbdRunArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    gbd: GbdArgs,
}

#[derive(Args)]
struct EvaluateArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// `decisions.json` written by `solve`.
    #[arg(long)]
    decisions: PathBuf,
    #[arg(long, default_value_t = 100)]
    samples: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
}

#[derive(Args)]
struct AccuracyArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Re-linearization rounds after the initial solve.
    #[arg(long, default_value_t = 3)]
    rounds: usize,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Err(msg) = check_combinations(&cli) {
        Cli::command().error(clap::error::ErrorKind::ArgumentConflict, msg).exit();
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn check_combinations(cli: &Cli) -> Result<(), String> {
    let gbd = match &cli.command {
        Command::Solve(a) => {
            let g = &a.gbd;
            let wants_gbd = g.asynchronous || g.situation.is_some() || g.latencies.is_some() || g.n_min.is_some();
            if a.path == SolvePath::Centralized && wants_gbd {
                return Err("asynchronous and schedule options require `--path gbd`".into());
            }
            Some((g, Mode::from(a.model.mode)))
        }
        Command::Gbd(a) => Some((&a.gbd, Mode::from(a.model.mode))),
        _ => None,
    };
    if let Some((g, mode)) = gbd {
        let is_gbd = !matches!(&cli.command, Command::Solve(a) if a.path == SolvePath::Centralized);
        if is_gbd && mode == Mode::Ropf {
            return Err("the joint-scenario model cannot be decomposed; use `--mode eropf` or `--mode dopf`".into());
        }
        if g.asynchronous && g.situation.is_none() && g.latencies.is_none() {
            return Err("`--async` needs `--situation` or `--latencies`".into());
        }
        if g.situation.is_some() && g.latencies.is_some() {
            return Err("`--situation` and `--latencies` are mutually exclusive".into());
        }
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let mut solver = ConicSolver::new(cli.backend.parse::<BackendKind>()?);
    solver.bnb.rel_gap = cli.mip_gap;
    match cli.command {
        Command::Validate { case } => cmd_validate(&case),
        Command::Solve(a) if a.path == SolvePath::Gbd => cmd_gbd(&a.model, &a.gbd, &solver),
        Command::Solve(a) => cmd_solve(&a, &solver),
        Command::Gbd(a) => cmd_gbd(&a.model, &a.gbd, &solver),
        Command::Evaluate(a) => cmd_evaluate(&a, &solver),
        Command::Accuracy(a) => cmd_accuracy(&a, &solver),
    }
}

fn read_case(spec: &str) -> Result<NetworkCase> {
    Ok(match spec {
        "fig4" => NetworkCase::fig4(),
        "fig4-tight" | "fig4_tight" => NetworkCase::fig4_tight(),
        path => load_case(path).with_context(|| format!("loading case `{path}`"))?,
    })
}

struct Setup {
    case: NetworkCase,
    op: OperatingPoint,
    mode: Mode,
    scenarios: ScenarioSet,
    opts: FormulationOptions,
}

fn setup(m: &ModelArgs) -> Result<Setup> {
    let case = read_case(&m.case)?;
    let op = solve_base_power_flow(&case).context("base power flow")?;
    let mode = Mode::from(m.mode);
    let scenarios = match mode {
        Mode::Dopf => ScenarioSet::forecast(&case),
        Mode::Ropf | Mode::Eropf => extreme_set(&res_boxes(&case))?,
    };
    let opts = FormulationOptions { switching: !m.no_switching, envelope_k: m.envelope_k, polygon_n: m.polygon_n };
    fs::create_dir_all(&m.out).with_context(|| format!("creating {}", m.out.display()))?;
    Ok(Setup { case, op, mode, scenarios, opts })
}

fn write(dir: &Path, name: &str, text: &str) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
    println!("wrote {}", path.display());
    Ok(())
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<()> {
    write(dir, name, &(serde_json::to_string_pretty(value)? + "\n"))
}

#[derive(Serialize)]
struct LineStatus {
    line: usize,
    from: u32,
    to: u32,
    nominal: bool,
    closed: bool,
}

fn topology(case: &NetworkCase, alpha: &[(String, f64)]) -> Vec<LineStatus> {
    case.dc_lines
        .iter()
        .enumerate()
        .map(|(k, l)| {
            let name = names::alpha(k);
            let closed = alpha.iter().find(|(n, _)| *n == name).map_or(l.closed, |(_, a)| *a > 0.5);
            LineStatus { line: k, from: l.from, to: l.to, nominal: l.closed, closed }
        })
        .collect()
}

fn print_topology(lines: &[LineStatus]) {
    println!("{:>5} {:>5} {:>5} {:>8} {:>8}", "line", "from", "to", "nominal", "optimal");
    for l in lines {
        let mark = if l.closed != l.nominal { "  *" } else { "" };
        println!("{:>5} {:>5} {:>5} {:>8} {:>8}{mark}", l.line, l.from, l.to, l.nominal as u8, l.closed as u8);
    }
}

fn cmd_validate(spec: &str) -> Result<()> {
    let case = read_case(spec)?;
    let report = case.validate();
    println!(
        "{}: {} AC nodes, {} generators, {} RES units, {} DC nodes, {} DC lines, {} converters",
        case.name,
        case.ac_nodes.len(),
        case.generators.len(),
        case.res_units.len(),
        case.dc_nodes.len(),
        case.dc_lines.len(),
        case.vsc_stations.len()
    );
    for v in &report.violations {
        println!("violation: {} ({})", v.rule, v.element);
    }
    if !report.is_valid() {
        bail!("{} invariant violations", report.violations.len());
    }
    println!("case is valid");
    Ok(())
}

#[derive(Serialize)]
struct SolutionReport<'a> {
    format_version: u32,
    case: &'a str,
    mode: Mode,
    status: Status,
    objective: f64,
    best_bound: Option<f64>,
    mip_gap: Option<f64>,
    nodes: usize,
    backend: &'a str,
    topology: Vec<LineStatus>,
    variables: Vec<(&'a str, f64)>,
}

fn cmd_solve(a: &SolveArgs, solver: &ConicSolver) -> Result<()> {
    let s = setup(&a.model)?;
    let prog = assemble_centralized(&s.case, &s.op, &s.scenarios, s.mode, &s.opts)?;
    let t = Instant::now();
    let sol = solver.solve(&prog)?;
    println!("{:?} {:?}: status {:?}, {} nodes, {:.2?}", s.mode, s.case.name, sol.status, sol.nodes, t.elapsed());
    if !sol.has_primal() {
        bail!("no feasible solution ({:?})", sol.status);
    }
    println!("objective {:.8}", sol.objective);
    let first = FirstStage::from_solution(&prog, &sol, s.mode)?;
    let alpha: Vec<(String, f64)> = first.values.iter().filter(|(n, _)| n.starts_with("dc.alpha[")).cloned().collect();
    let topo = topology(&s.case, &alpha);
    print_topology(&topo);
    let cones = check_cone_residuals(&sol, &prog, a.cone_tol);
    println!("max relative cone slack {:.3e}", cones.max_relative_slack);
    if !cones.is_tight() {
        log::warn!("relaxation inexact on {} cones: {:?}", cones.flagged.len(), cones.flagged);
    }
    let out = &a.model.out;
    write_json(
        out,
        "solution.json",
        &SolutionReport {
            format_version: FORMAT_VERSION,
            case: &s.case.name,
            mode: s.mode,
            status: sol.status,
            objective: sol.objective,
            best_bound: sol.best_bound,
            mip_gap: sol.mip_gap,
            nodes: sol.nodes,
            backend: &sol.backend,
            topology: topo,
            variables: prog.variables.iter().zip(&sol.x).map(|(v, &x)| (v.name.as_str(), x)).collect(),
        },
    )?;
    write_json(out, "cones.json", &serde_json::json!({ "format_version": FORMAT_VERSION, "report": cones }))?;
    write_json(out, "decisions.json", &serde_json::json!({ "format_version": FORMAT_VERSION, "mode": s.mode, "first_stage": first }))?;
    Ok(())
}

fn schedule(g: &GbdArgs, n: usize) -> Option<Schedule> {
    if let Some(i) = g.situation {
        let mut s = Situation::from_index(i).expect("range checked by clap").schedule(g.seed);
        s.jitter = g.jitter;
        s.staleness = g.staleness.unwrap_or(s.staleness);
        s.n_min = g.n_min.unwrap_or(s.n_min);
        return Some(s);
    }
    let latencies = g.latencies.clone()?;
    Some(Schedule {
        n_min: g.n_min.unwrap_or(n),
        latencies,
        staleness: g.staleness.unwrap_or(PRESET_STALENESS),
        jitter: g.jitter,
        seed: g.seed,
    })
}

#[derive(Serialize)]
struct GbdSummary<'a> {
    format_version: u32,
    case: &'a str,
    mode: Mode,
    cut_mode: CutMode,
    schedule: Option<Schedule>,
    converged: bool,
    iterations: usize,
    objective: f64,
    lower_bound: f64,
    best_upper_bound: f64,
    gap: f64,
    virtual_time: f64,
    topology: Vec<LineStatus>,
    synchronous_objective: Option<f64>,
    deviation: Option<f64>,
    note: Option<String>,
}

fn cmd_gbd(m: &ModelArgs, g: &GbdArgs, solver: &ConicSolver) -> Result<()> {
    let s = setup(m)?;
    let dec = decompose(&s.case, &s.op, &s.scenarios, s.mode, &s.opts)?;
    let cut_mode = match g.cut {
        CutArg::Single => CutMode::Single,
        CutArg::Multi => CutMode::Multi,
    };
    let sched = schedule(g, dec.num_subproblems());
    let asynchronous = sched.as_ref().is_some_and(|s| !s.is_synchronous());
    let opts = GbdOptions {
        cut_mode,
        schedule: sched.clone(),
        tolerance: g.tolerance,
        max_iterations: g.max_iterations,
        stabilize: g.stabilize,
    };
    let t = Instant::now();
    let r = run_gbd(&dec, &opts, solver)?;
    println!(
        "{} after {} iterations ({:.2?}): objective {:.8}, lower bound {:.8}, gap {:.2e}",
        if r.converged { "converged" } else { "stopped" },
        r.iterations,
        t.elapsed(),
        r.objective,
        r.lower_bound,
        r.gap()
    );
    let sync = if g.compare_sync && sched.is_some() {
        let base = GbdOptions { schedule: None, ..opts.clone() };
        Some(run_gbd(&dec, &base, solver)?)
    } else {
        None
    };
    let deviation = sync.as_ref().map(|b: &GbdResult| (r.objective - b.objective) / b.objective.abs());
    if let Some(d) = deviation {
        println!("relative deviation from the synchronous run {d:.3e}");
    }
    let note = asynchronous.then(|| {
        "asynchronous run: stale subproblem results may leave the objective away from the synchronous optimum"
            .to_string()
    });
    let topo = topology(&s.case, &r.alpha);
    print_topology(&topo);
    write(&m.out, "trace.csv", &r.trace.to_csv())?;
    write_json(
        &m.out,
        "gbd.json",
        &GbdSummary {
            format_version: FORMAT_VERSION,
            case: &s.case.name,
            mode: s.mode,
            cut_mode,
            schedule: sched,
            converged: r.converged,
            iterations: r.iterations,
            objective: r.objective,
            lower_bound: r.lower_bound,
            best_upper_bound: r.best_upper_bound,
            gap: r.gap(),
            virtual_time: r.virtual_time,
            topology: topo,
            synchronous_objective: sync.as_ref().map(|b| b.objective),
            deviation,
            note,
        },
    )?;
    if !r.converged {
        bail!("no convergence within {} iterations", g.max_iterations);
    }
    Ok(())
}

#[derive(serde::Deserialize)]
struct DecisionsFile {
    first_stage: FirstStage,
}

fn cmd_evaluate(a: &EvaluateArgs, solver: &ConicSolver) -> Result<()> {
    let s = setup(&a.model)?;
    let text = fs::read_to_string(&a.decisions).with_context(|| format!("reading {}", a.decisions.display()))?;
    let decisions: DecisionsFile = serde_json::from_str(&text).context("parsing decisions")?;
    let samples = sample_scenarios(&res_boxes(&s.case), a.samples, a.seed)?;
    let rep = evaluate_robustness(&s.case, &s.op, &decisions.first_stage, &samples, &s.opts, solver)?;
    println!(
        "feasible in {}/{} samples ({:.0}%); objective min {:?} mean {:?} max {:?}",
        rep.feasible,
        rep.samples,
        100.0 * rep.feasible_ratio,
        rep.objective_min,
        rep.objective_mean,
        rep.objective_max
    );
    let mut csv = String::from("sample");
    for r in &s.case.res_units {
        csv.push_str(&format!(",avail_res{}", r.id));
    }
    csv.push_str(",feasible,objective\n");
    for (i, o) in rep.outcomes.iter().enumerate() {
        csv.push_str(&i.to_string());
        for v in &o.availability {
            csv.push_str(&format!(",{v:.10}"));
        }
        let obj = o.objective.map_or(String::new(), |v| format!("{v:.10}"));
        csv.push_str(&format!(",{},{obj}\n", o.feasible as u8));
    }
    write(&a.model.out, "samples.csv", &csv)?;
    write_json(
        &a.model.out,
        "robustness.json",
        &serde_json::json!({
            "format_version": FORMAT_VERSION,
            "seed": a.seed,
            "samples": rep.samples,
            "feasible": rep.feasible,
            "feasible_ratio": rep.feasible_ratio,
            "objective_min": rep.objective_min,
            "objective_mean": rep.objective_mean,
            "objective_max": rep.objective_max,
        }),
    )?;
    Ok(())
}

fn cmd_accuracy(a: &AccuracyArgs, solver: &ConicSolver) -> Result<()> {
    let s = setup(&a.model)?;
    let rep = run_sla(&s.case, &s.op, &s.scenarios, s.mode, &s.opts, a.rounds, solver)?;
    for r in &rep.rounds {
        println!("round {}: objective {:.8}, max |u_lin - u_nonlin| {:.3e}", r.round, r.objective, r.update.max_u_error);
    }
    if let Some(why) = &rep.stopped {
        log::warn!("stopped early: {why}");
    }
    write(&a.model.out, "accuracy.csv", &rep.to_csv())?;
    write_json(
        &a.model.out,
        "accuracy.json",
        &serde_json::json!({
            "format_version": FORMAT_VERSION,
            "rounds": rep.rounds.len(),
            "errors": rep.errors(),
            "objectives": rep.rounds.iter().map(|r| r.objective).collect::<Vec<_>>(),
            "stopped": rep.stopped,
        }),
    )?;
    Ok(())
}
