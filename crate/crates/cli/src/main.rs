//! `emp` — MAP inference on pairwise discrete models by entropy-smoothed
//! message passing, plus the experiment / verification harness around it.
//!
//! Exit codes: 0 success (and, for `solve`, converged), 2 for a completed
//! but unconverged solve or a failed verification battery, 1 for errors.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use emp_core::bounds::BoundsReport;
use emp_core::solver::default_iteration_cap;
use emp_core::{emp_cyclic, emp_greedy, ResultFile, SolverConfig, Variant};

use emp_cli::experiment::{run_experiment_to_dir, ExperimentSpec, GroupSummary};
use emp_cli::files::{atomic_write, load_model};
use emp_cli::verify::{run_verify, VerifyOptions};

#[derive(Parser)]
#[command(
    name = "emp",
    version,
    about = "Entropy-smoothed message passing for MAP inference on pairwise discrete models"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one model file and report the rounded assignment.
    Solve(SolveArgs),
    /// Run a randomized experiment batch described by a spec file.
    Experiment(ExperimentArgs),
    /// Run the runtime verification battery on seeded instances.
    Verify(VerifyArgs),
    /// Compute the a-priori bounds report for a model.
    Bounds(BoundsArgs),
}

#[derive(Args)]
struct SolveArgs {
    /// Model JSON file.
    model: PathBuf,
    /// Regularization strength.
    #[arg(long, default_value_t = 1.0)]
    eta: f64,
    /// Convergence threshold on the maximum l1 constraint violation.
    #[arg(long, default_value_t = 1e-3)]
    epsilon: f64,
    /// Update schedule: cyclic (full sweeps) or greedy (most violated first).
    #[arg(long, default_value = "cyclic")]
    variant: Variant,
    /// Outer-iteration cap (sweeps for cyclic, steps for greedy); defaults
    /// to the theory-derived cap.
    #[arg(long)]
    max_iterations: Option<usize>,
    /// Record one CSV row per projection step (written to trace.csv under
    /// --out-dir, otherwise printed).
    #[arg(long)]
    trace: bool,
    /// Check the improvement guarantees at every step and abort on the first
    /// violation.
    #[arg(long)]
    assert_theory: bool,
    /// Also compute the a-priori bounds report.
    #[arg(long)]
    bounds: bool,
    /// Known solution gap for the bounds report; enumerated when omitted and
    /// feasible.
    #[arg(long)]
    delta: Option<f64>,
    /// Directory for result.json (plus trace.csv / bounds.json).
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
struct ExperimentArgs {
    /// Experiment spec JSON file.
    spec: PathBuf,
    /// Directory for experiment.csv and summary.json.
    #[arg(long)]
    out_dir: PathBuf,
    /// Override the spec's base seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long, default_value_t = 10.0)]
    eta: f64,
    #[arg(long, default_value_t = 1e-3)]
    epsilon: f64,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Also inject a corrupted projection and confirm the detectors fire.
    #[arg(long)]
    self_check: bool,
}

#[derive(Args)]
struct BoundsArgs {
    /// Model JSON file.
    model: PathBuf,
    #[arg(long, default_value_t = 1.0)]
    eta: f64,
    #[arg(long, default_value_t = 1e-3)]
    epsilon: f64,
    /// Known solution gap; enumerated when omitted and feasible.
    #[arg(long)]
    delta: Option<f64>,
    /// Write the report here as well as printing it.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Solve(args) => run_solve(args),
        Command::Experiment(args) => run_experiment_cmd(args),
        Command::Verify(args) => run_verify_cmd(args),
        Command::Bounds(args) => run_bounds(args),
    }
}

fn run_solve(args: SolveArgs) -> Result<ExitCode> {
    let (topo, costs) = load_model(&args.model)?;
    let max_iterations = args.max_iterations.unwrap_or_else(|| {
        default_iteration_cap(&costs, &topo, args.eta, args.epsilon, args.variant)
    });
    let mut config = SolverConfig::new(args.eta, args.epsilon, max_iterations, args.variant);
    config.record_trace = args.trace;
    config.assert_theory = args.assert_theory;
    let result = match args.variant {
        Variant::Cyclic => emp_cyclic(&costs, &topo, config),
        Variant::Greedy => emp_greedy(&costs, &topo, config),
    }
    .context("solve failed")?;

    println!(
        "model: {} vertices, {} edges, {} labels",
        topo.num_vertices(),
        topo.num_edges(),
        topo.num_labels()
    );
    println!(
        "solve: variant {} | eta {} | epsilon {} | iteration cap {}",
        args.variant.as_str(),
        args.eta,
        args.epsilon,
        max_iterations
    );
    println!(
        "converged: {} after {} iterations ({} projection steps)",
        result.converged, result.iterations, result.projection_steps
    );
    println!("final max violation: {:.6e}", result.final_max_violation);
    println!("integrality margin: {:.6}", result.integrality_margin);
    println!(
        "objective of rounded assignment: {}",
        costs.theta_objective(&topo, &result.assignment)
    );
    println!("assignment: {:?}", result.assignment.labels());
    if let Some(theory) = &result.theory {
        println!(
            "theory: total gain {:.6e} | worst identity residual {:.3e} | smallest step gain {:.3e}",
            theory.l_core_final - theory.l_core_init,
            theory.consistency_identity_rel_residual,
            theory.step_delta_min
        );
    }

    if let Some(dir) = &args.out_dir {
        let file = ResultFile::from(&result);
        let json = serde_json::to_string_pretty(&file)?;
        atomic_write(&dir.join("result.json"), json.as_bytes())?;
        if let Some(trace) = &result.trace {
            atomic_write(&dir.join("trace.csv"), trace.to_csv_string().as_bytes())?;
        }
        println!("wrote {}", dir.join("result.json").display());
    } else if let Some(trace) = &result.trace {
        print!("{}", trace.to_csv_string());
    }

    if args.bounds {
        let report = BoundsReport::compute(&costs, &topo, args.eta, args.epsilon, args.delta)
            .context("bounds computation failed")?;
        let json = serde_json::to_string_pretty(&report)?;
        match &args.out_dir {
            Some(dir) => {
                atomic_write(&dir.join("bounds.json"), json.as_bytes())?;
                println!("wrote {}", dir.join("bounds.json").display());
            }
            None => println!("{json}"),
        }
    }

    Ok(if result.converged {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(2)
    })
}

fn run_experiment_cmd(args: ExperimentArgs) -> Result<ExitCode> {
    let text = std::fs::read_to_string(&args.spec)
        .with_context(|| format!("cannot read spec file {}", args.spec.display()))?;
    let mut spec: ExperimentSpec = serde_json::from_str(&text)
        .with_context(|| format!("{} is not a valid experiment spec", args.spec.display()))?;
    if let Some(seed) = args.seed {
        spec.base_seed = seed;
    }
    let summary = run_experiment_to_dir(&spec, &args.out_dir)?;
    println!(
        "experiment: {} runs over {} groups -> {}",
        summary.runs.len(),
        summary.groups.len(),
        args.out_dir.display()
    );
    for group in &summary.groups {
        println!("{}", render_group(group));
    }
    Ok(ExitCode::SUCCESS)
}

fn render_group(g: &GroupSummary) -> String {
    let cap = g
        .deg_cap
        .map_or_else(|| "-".to_string(), |c| c.to_string());
    let recovery = match g.recovery_rate {
        Some(rate) => format!("{:.2} over {} unique", rate, g.unique_oracle_trials),
        None => "n/a".to_string(),
    };
    let sweeps = match g.median_sweeps_to_epsilon {
        Some(m) => format!("{m:.1}"),
        None => "n/a".to_string(),
    };
    format!(
        "  {} size={} cap={} eta={} {}: converged {}/{} | recovery {} | median sweeps {}",
        g.family.as_str(),
        g.size,
        cap,
        g.eta,
        g.variant.as_str(),
        g.converged_runs,
        g.trials,
        recovery,
        sweeps
    )
}

fn run_verify_cmd(args: VerifyArgs) -> Result<ExitCode> {
    let opts = VerifyOptions {
        eta: args.eta,
        epsilon: args.epsilon,
        seed: args.seed,
        self_check: args.self_check,
    };
    let report = run_verify(&opts)?;
    print!("{}", report.render());
    Ok(if report.all_passed() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(2)
    })
}

fn run_bounds(args: BoundsArgs) -> Result<ExitCode> {
    let (topo, costs) = load_model(&args.model)?;
    let report = BoundsReport::compute(&costs, &topo, args.eta, args.epsilon, args.delta)
        .context("bounds computation failed")?;
    let json = serde_json::to_string_pretty(&report)?;
    println!("{json}");
    if let Some(path) = &args.out {
        atomic_write(path, json.as_bytes())?;
    }
    Ok(ExitCode::SUCCESS)
}
