use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use geobrach::bounds::estimate_t_star;
use geobrach::liealg::{forbidden_fraction, log_branches, BranchOptions};
use geobrach::pipeline::persist::{to_json_bytes, write_csv};
use geobrach::pipeline::{
    emit_plot_data, load_problem, read_protocol, run_solve, verify_protocol, write_plot_data, PipelineError, Problem, SolveOptions,
};

const LOG_ENV: &str = "GEOBRACH_LOG";

#[derive(Parser)]
#[command(name = "geobrach", version, about = "Time-optimal gate protocols via q-geodesic continuation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Full solve: bound, branches, continuation, final shoot, export.
    Solve(SolveArgs),
    /// Fixed-time fidelity scan for the upper bound T*.
    Bound(BoundArgs),
    /// Lists the traceless matrix-log branches of the target.
    Branches(BranchesArgs),
    /// Replays an exported protocol against its problem.
    Verify(VerifyArgs),
    /// Writes μ(t) and the geodesic α(t) overlay for plotting.
    PlotData(PlotArgs),
}

/// Overrides of problem-file settings.
#[derive(Args, Default)]
struct Overrides {
    #[arg(long = "energy", short = 'E')]
    energy: Option<f64>,
    #[arg(long)]
    t_star: Option<f64>,
    #[arg(long)]
    q_max: Option<f64>,
    #[arg(long)]
    dq_initial: Option<f64>,
    #[arg(long)]
    max_shift: Option<i64>,
    #[arg(long)]
    margin: Option<f64>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    rng_seed: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    integrator_tol: Option<f64>,
}

#[derive(Args)]
struct SolveArgs {
    problem: PathBuf,
    /// Output directory for report.json, protocols and path checkpoints.
    #[arg(long, short, default_value = "solve_out")]
    out: PathBuf,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Args)]
struct BoundArgs {
    problem: PathBuf,
    /// Scan table CSV; printed to stdout when absent.
    #[arg(long, short)]
    out: Option<PathBuf>,
    #[arg(long)]
    t_min: Option<f64>,
    #[arg(long)]
    t_max: Option<f64>,
    #[arg(long)]
    t_step: Option<f64>,
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long)]
    restarts: Option<usize>,
    #[arg(long)]
    segments: Option<usize>,
    #[arg(long)]
    max_iters: Option<u64>,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Args)]
struct BranchesArgs {
    problem: PathBuf,
    /// Number of rows to print.
    #[arg(long, short = 'n', default_value_t = 10)]
    count: usize,
    #[arg(long)]
    max_norm: Option<f64>,
    #[arg(long)]
    max_shift: Option<i64>,
}

#[derive(Args)]
struct VerifyArgs {
    protocol: PathBuf,
    #[arg(long, short)]
    problem: PathBuf,
}

#[derive(Args)]
struct PlotArgs {
    protocol: PathBuf,
    #[arg(long, short)]
    problem: PathBuf,
    #[arg(long, short)]
    out: PathBuf,
    /// Skip the geodesic overlay columns.
    #[arg(long)]
    no_overlay: bool,
}

fn load_with(path: &Path, o: &Overrides) -> Result<Problem, PipelineError> {
    let mut spec = load_problem(path)?.spec;
    if let Some(v) = o.energy {
        spec.energy = v;
    }
    if let Some(v) = o.t_star {
        spec.branches.t_star = Some(v);
    }
    if let Some(v) = o.q_max {
        spec.q_schedule.q_max = v;
    }
    if let Some(v) = o.dq_initial {
        spec.q_schedule.dq_initial = v;
    }
    if let Some(v) = o.max_shift {
        spec.branches.max_shift = v;
    }
    if let Some(v) = o.margin {
        spec.branches.margin = v;
    }
    if let Some(v) = o.samples {
        spec.samples = v;
    }
    if let Some(v) = o.rng_seed {
        spec.rng_seed = v;
    }
    if let Some(v) = o.workers {
        spec.workers = Some(v);
    }
    if let Some(v) = o.integrator_tol {
        spec.tolerances.integrator = v;
    }
    let mut p = Problem::from_spec(spec)?;
    p.source = Some(path.to_path_buf());
    Ok(p)
}

fn solve(a: &SolveArgs) -> Result<ExitCode, PipelineError> {
    let problem = load_with(&a.problem, &a.overrides)?;
    let report = run_solve(&problem, &SolveOptions { out_dir: Some(a.out.clone()) })?;
    println!(
        "T* = {:.4}/E ({:?}), {} branches below norm {:.4}",
        report.t_star, report.t_star_source, report.branches_enumerated, report.branch_norm_limit
    );
    println!("{:>4}  {:<22} {:>8} {:<12} {:>8} {:>10} {:>10}", "path", "origin", "norm", "status", "q", "T·E", "infid");
    for p in &report.paths {
        let origin = match &p.origin {
            geobrach::pipeline::Origin::LogBranch { branch, sector } => format!("branch {branch} (α = {sector})"),
            geobrach::pipeline::Origin::Bootstrap { rank, q_prime } => format!("bootstrap {rank} (q' = {q_prime})"),
        };
        let (status, q) = match &p.status {
            geobrach::continuation::PathStatus::Completed { q_max } => ("completed", *q_max),
            geobrach::continuation::PathStatus::Terminated { q_stop, .. } => ("terminated", *q_stop),
            geobrach::continuation::PathStatus::Extending => ("extending", f64::NAN),
        };
        let t = p.time.map_or("-".to_string(), |t| format!("{t:.6}"));
        let inf = p.infidelity.map_or("-".to_string(), |x| format!("{x:.2e}"));
        println!("{:>4}  {:<22} {:>8.4} {:<12} {:>8.3} {:>10} {:>10}", p.id, origin, p.seed_norm, status, q, t, inf);
    }
    println!("report: {}", a.out.join("report.json").display());
    match &report.best {
        Some(b) => {
            println!("best: path {} T = {:.6}/E, infidelity {:.2e}", b.path_id, b.time, b.infidelity);
            Ok(ExitCode::SUCCESS)
        }
        None => {
            println!("no path converged");
            Ok(ExitCode::from(2))
        }
    }
}

fn bound(a: &BoundArgs) -> Result<ExitCode, PipelineError> {
    let problem = load_with(&a.problem, &a.overrides)?;
    let mut cfg = problem.spec.bound.clone();
    cfg.t_min = a.t_min.unwrap_or(cfg.t_min);
    cfg.t_max = a.t_max.unwrap_or(cfg.t_max);
    cfg.t_step = a.t_step.unwrap_or(cfg.t_step);
    cfg.threshold = a.threshold.unwrap_or(cfg.threshold);
    cfg.restarts = a.restarts.unwrap_or(cfg.restarts);
    cfg.num_segments = a.segments.unwrap_or(cfg.num_segments);
    cfg.max_iters = a.max_iters.unwrap_or(cfg.max_iters);
    let est = estimate_t_star(&problem.split, &problem.target, problem.spec.energy, &cfg)?;
    let rows: Vec<Vec<f64>> = est.scan.iter().map(|p| vec![p.time, p.best_fidelity]).collect();
    let header = ["T".to_string(), "best_fidelity".to_string()];
    match &a.out {
        Some(path) => write_csv(path, &header, &rows)?,
        None => {
            println!("T,best_fidelity");
            for r in &rows {
                println!("{},{}", r[0], r[1]);
            }
        }
    }
    eprintln!("T* = {}/E{}", est.t_star, if est.confident { "" } else { " (threshold never reached)" });
    Ok(if est.confident { ExitCode::SUCCESS } else { ExitCode::from(2) })
}

fn branches(a: &BranchesArgs) -> Result<ExitCode, PipelineError> {
    let problem = load_problem(&a.problem)?;
    let opts =
        BranchOptions { max_norm: a.max_norm.unwrap_or(f64::INFINITY), max_shift: a.max_shift.unwrap_or(problem.spec.branches.max_shift) };
    let list = log_branches(&problem.target, &problem.split, &opts)?;
    println!("global phase φ = {:.17}", problem.phase);
    println!("{:>3}  {:>10}  {:>6}  {:>8}", "m", "norm", "α", "P_B");
    for b in list.iter().take(a.count) {
        println!("{:>3}  {:>10.6}  {:>6}  {:>8.4}", b.index, b.hs_norm, b.sector_label(), forbidden_fraction(&problem.split, &b.operator));
    }
    Ok(ExitCode::SUCCESS)
}

fn verify(a: &VerifyArgs) -> Result<ExitCode, PipelineError> {
    let problem = load_problem(&a.problem)?;
    let r = verify_protocol(&a.protocol, &problem)?;
    print!("{}", String::from_utf8_lossy(&to_json_bytes(&r)?));
    if r.mismatch {
        eprintln!("replay fidelity {} is below the declared 1 − {}", r.fidelity, r.declared_infidelity);
        return Ok(ExitCode::from(2));
    }
    Ok(ExitCode::SUCCESS)
}

fn plot(a: &PlotArgs) -> Result<ExitCode, PipelineError> {
    let problem = load_problem(&a.problem)?;
    let (protocol, sidecar) = read_protocol(&a.protocol)?;
    let overlay = if a.no_overlay { None } else { sidecar.geodesic.as_ref() };
    let data = emit_plot_data(&problem.split, &protocol, overlay, problem.spec.tolerances.final_shoot)?;
    write_plot_data(&a.out, &data)?;
    println!("{} rows, {} distinct μ curves, {} coinciding pairs", data.rows.len(), data.distinct_curves, data.coinciding_pairs.len());
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or(LOG_ENV, "info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match &cli.command {
        Command::Solve(a) => solve(a),
        Command::Bound(a) => bound(a),
        Command::Branches(a) => branches(a),
        Command::Verify(a) => verify(a),
        Command::PlotData(a) => plot(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
