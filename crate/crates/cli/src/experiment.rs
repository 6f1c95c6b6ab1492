//! The randomized experiment protocol: batches of Potts instances on grid or
//! Erdős–Rényi topologies, solved at several regularization strengths with
//! both solver variants, compared per sweep against the enumeration oracle.
//!
//! Outputs are a long-format CSV (one row per executed sweep per run) and a
//! summary JSON with per-run records and per-group aggregates. Everything is
//! deterministic: instance seeds are derived from
//! `(base_seed, family, size, degree cap, trial)` with a splitmix64 mix —
//! deliberately *not* from eta or the variant, so recovery comparisons
//! across regularization strengths and variants see identical instances.
//! Work is farmed out with rayon but collected in task order, so repeated
//! runs of the same spec produce byte-identical files.

use std::path::Path;

use anyhow::{anyhow, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use emp_core::generators::{erdos_renyi, grid_graph, potts_costs, PottsConfig};
use emp_core::oracle::{brute_force_map, OracleError, OracleResult};
use emp_core::solver::{EmpSolver, SolverConfig};
use emp_core::{Assignment, GraphTopology, PotentialVector, Variant};

use crate::files::atomic_write;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Grid,
    ErdosRenyi,
}

impl Family {
    pub fn as_str(self) -> &'static str {
        match self {
            Family::Grid => "grid",
            Family::ErdosRenyi => "erdos_renyi",
        }
    }

    fn tag(self) -> u64 {
        match self {
            Family::Grid => 1,
            Family::ErdosRenyi => 2,
        }
    }
}

fn default_budget() -> usize {
    80
}
fn default_d() -> usize {
    3
}
fn default_alpha_range() -> (f64, f64) {
    (-0.5, 0.5)
}
fn default_beta_choices() -> Vec<f64> {
    vec![-0.1, 0.1]
}

/// Experiment description, read from JSON. `sizes` is the grid side for the
/// grid family and the vertex count for Erdős–Rényi. `degree_caps` applies
/// to Erdős–Rényi only; empty means uncapped. The cost-model fields default
/// to the standard protocol (d = 3, unary Unif(-0.5, 0.5), couplings drawn
/// from {-0.1, 0.1}).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub family: Family,
    pub sizes: Vec<usize>,
    pub eta_values: Vec<f64>,
    pub epsilon: f64,
    pub variants: Vec<Variant>,
    pub trials: usize,
    pub base_seed: u64,
    /// Per-run sweep budget (greedy runs get `budget * |E|` steps).
    #[serde(default = "default_budget")]
    pub iteration_budget: usize,
    #[serde(default)]
    pub degree_caps: Vec<usize>,
    #[serde(default = "default_d")]
    pub d: usize,
    #[serde(default = "default_alpha_range")]
    pub alpha_range: (f64, f64),
    #[serde(default = "default_beta_choices")]
    pub beta_choices: Vec<f64>,
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        if self.sizes.is_empty() || self.eta_values.is_empty() || self.variants.is_empty() {
            return Err(anyhow!("sizes, eta_values and variants must be non-empty"));
        }
        if self.trials == 0 {
            return Err(anyhow!("trials must be at least 1"));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(anyhow!("epsilon must be positive"));
        }
        if self.eta_values.iter().any(|&e| !(e > 0.0 && e.is_finite())) {
            return Err(anyhow!("eta values must be positive"));
        }
        if self.d < 2 {
            return Err(anyhow!("d must be at least 2"));
        }
        if self.iteration_budget == 0 {
            return Err(anyhow!("iteration_budget must be at least 1"));
        }
        Ok(())
    }

    /// The degree-cap axis actually iterated: `[None]` for grids or uncapped
    /// Erdős–Rényi, the listed caps otherwise.
    fn cap_axis(&self) -> Vec<Option<usize>> {
        match self.family {
            Family::Grid => vec![None],
            Family::ErdosRenyi => {
                if self.degree_caps.is_empty() {
                    vec![None]
                } else {
                    self.degree_caps.iter().map(|&c| Some(c)).collect()
                }
            }
        }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic per-instance seed; independent of eta and variant by
/// design (see the module docs).
pub fn instance_seed(
    base: u64,
    family: Family,
    size: usize,
    cap: Option<usize>,
    trial: usize,
) -> u64 {
    let mut s = splitmix64(base);
    s = splitmix64(s ^ family.tag());
    s = splitmix64(s ^ size as u64);
    s = splitmix64(s ^ cap.map_or(0, |c| c as u64 + 1));
    splitmix64(s ^ trial as u64)
}

/// One CSV row: the state of one run after `sweep` sweeps (0 = initial).
#[derive(Debug, Clone)]
struct SweepRow {
    sweep: usize,
    hamming: Option<f64>,
    max_violation: f64,
    lyapunov: f64,
}

/// Outcome of a single `(instance, eta, variant)` run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunRecord {
    pub family: Family,
    pub size: usize,
    pub n: usize,
    pub deg_cap: Option<usize>,
    pub eta: f64,
    pub variant: Variant,
    pub trial: usize,
    pub seed: u64,
    pub converged: bool,
    pub iterations: usize,
    pub projection_steps: usize,
    /// Sweeps (or greedy sweep-equivalents of |E| steps) until the max
    /// violation first dropped below epsilon; `None` if the budget ran out.
    pub sweeps_to_epsilon: Option<f64>,
    pub final_max_violation: f64,
    pub integrality_margin: f64,
    /// `None` when the state space exceeded the enumeration guard.
    pub oracle_unique: Option<bool>,
    /// Rounded output equals the oracle optimum; only meaningful (`Some`)
    /// when the oracle ran and its optimum is unique.
    pub recovered: Option<bool>,
    /// Normalized Hamming distance of the final rounded output to the
    /// oracle's optimal assignment, when the oracle ran.
    pub final_hamming: Option<f64>,
}

/// Per `(size, cap, eta, variant)` aggregate.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroupSummary {
    pub family: Family,
    pub size: usize,
    pub deg_cap: Option<usize>,
    pub eta: f64,
    pub variant: Variant,
    pub trials: usize,
    pub converged_runs: usize,
    pub unique_oracle_trials: usize,
    pub ambiguous_oracle_trials: usize,
    pub skipped_oracle_trials: usize,
    /// Fraction of unique-oracle trials whose rounded output matched the
    /// oracle exactly; `None` when no trial had a unique oracle optimum.
    pub recovery_rate: Option<f64>,
    /// Median sweeps-to-epsilon over converged runs.
    pub median_sweeps_to_epsilon: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub spec: ExperimentSpec,
    pub runs: Vec<RunRecord>,
    pub groups: Vec<GroupSummary>,
}

/// Full experiment outcome. `csv` is the long-format per-sweep table.
pub struct ExperimentOutput {
    pub csv: String,
    pub summary: ExperimentSummary,
}

struct InstanceTask {
    size: usize,
    cap: Option<usize>,
    trial: usize,
    seed: u64,
}

struct InstanceOutput {
    rows: Vec<String>,
    runs: Vec<RunRecord>,
}

/// Runs the whole spec in memory.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentOutput> {
    spec.validate()?;
    let mut tasks = Vec::new();
    for &size in &spec.sizes {
        for cap in spec.cap_axis() {
            for trial in 0..spec.trials {
                tasks.push(InstanceTask {
                    size,
                    cap,
                    trial,
                    seed: instance_seed(spec.base_seed, spec.family, size, cap, trial),
                });
            }
        }
    }

    let outputs: Vec<Result<InstanceOutput>> = tasks
        .par_iter()
        .map(|task| run_instance(spec, task))
        .collect();

    let mut csv = String::from("family,n,deg_cap,eta,variant,trial,sweep,hamming,max_violation,lyapunov\n");
    let mut runs = Vec::new();
    for output in outputs {
        let output = output?;
        for row in output.rows {
            csv.push_str(&row);
            csv.push('\n');
        }
        runs.extend(output.runs);
    }
    let groups = summarize(spec, &runs);
    Ok(ExperimentOutput {
        csv,
        summary: ExperimentSummary {
            spec: spec.clone(),
            runs,
            groups,
        },
    })
}

/// Runs the spec and writes `experiment.csv` / `summary.json` into `out_dir`
/// (atomically). Returns the summary.
pub fn run_experiment_to_dir(spec: &ExperimentSpec, out_dir: &Path) -> Result<ExperimentSummary> {
    let output = run_experiment(spec)?;
    atomic_write(&out_dir.join("experiment.csv"), output.csv.as_bytes())?;
    let json = serde_json::to_string_pretty(&output.summary)?;
    atomic_write(&out_dir.join("summary.json"), json.as_bytes())?;
    Ok(output.summary)
}

fn build_instance(
    spec: &ExperimentSpec,
    task: &InstanceTask,
) -> Result<(GraphTopology, PotentialVector)> {
    let topo = match spec.family {
        Family::Grid => grid_graph(task.size, spec.d)?,
        Family::ErdosRenyi => erdos_renyi(task.size, spec.d, task.seed, task.cap)?,
    };
    let config = PottsConfig {
        d: spec.d,
        alpha_range: spec.alpha_range,
        beta_choices: spec.beta_choices.clone(),
        seed: task.seed,
    };
    let costs = potts_costs(&topo, &config);
    Ok((topo, costs))
}

fn run_instance(spec: &ExperimentSpec, task: &InstanceTask) -> Result<InstanceOutput> {
    let (topo, costs) = build_instance(spec, task)?;
    let oracle = match brute_force_map(&costs, &topo) {
        Ok(result) => Some(result),
        Err(OracleError::TooLarge { .. }) => None,
        Err(other) => return Err(other.into()),
    };

    let mut rows = Vec::new();
    let mut runs = Vec::new();
    for &eta in &spec.eta_values {
        for &variant in &spec.variants {
            let (run, run_rows) =
                run_one(spec, task, &topo, &costs, oracle.as_ref(), eta, variant)?;
            for row in run_rows {
                rows.push(format_row(spec, task, &topo, eta, variant, &row));
            }
            runs.push(run);
        }
    }
    Ok(InstanceOutput { rows, runs })
}

fn run_one(
    spec: &ExperimentSpec,
    task: &InstanceTask,
    topo: &GraphTopology,
    costs: &PotentialVector,
    oracle: Option<&OracleResult>,
    eta: f64,
    variant: Variant,
) -> Result<(RunRecord, Vec<SweepRow>)> {
    let edges = topo.num_edges();
    let budget = spec.iteration_budget;
    let max_iterations = match variant {
        Variant::Cyclic => budget,
        Variant::Greedy => budget.saturating_mul(edges).max(1),
    };
    let config = SolverConfig::new(eta, spec.epsilon, max_iterations, variant);
    let mut solver = EmpSolver::new(costs, topo, config)?;

    let hamming_to_oracle = |assignment: &Assignment| -> Option<f64> {
        oracle.map(|o| assignment.normalized_hamming(&o.best))
    };
    let snapshot = |solver: &EmpSolver, sweep: usize| -> SweepRow {
        let rounded = emp_core::round_marginals(solver.gamma(), topo);
        SweepRow {
            sweep,
            hamming: hamming_to_oracle(&rounded),
            max_violation: solver.max_violation().0,
            lyapunov: solver.lyapunov(),
        }
    };

    let mut rows = vec![snapshot(&solver, 0)];
    let converged = match variant {
        Variant::Cyclic => loop {
            if solver.max_violation().0 < spec.epsilon {
                break true;
            }
            if solver.iterations() >= budget {
                break false;
            }
            solver.sweep()?;
            rows.push(snapshot(&solver, solver.iterations()));
        },
        Variant::Greedy => loop {
            if solver.iterations() >= max_iterations {
                break solver.max_violation().0 < spec.epsilon;
            }
            if !solver.greedy_step()? {
                break true;
            }
            if solver.iterations() % edges == 0 {
                rows.push(snapshot(&solver, solver.iterations() / edges));
            }
        },
    };
    // Close the series with a final partial group (greedy) so the last state
    // always appears.
    if let Variant::Greedy = variant {
        if solver.iterations() % edges != 0 {
            rows.push(snapshot(&solver, solver.iterations().div_ceil(edges)));
        }
    }

    let sweeps_to_epsilon = converged.then(|| match variant {
        Variant::Cyclic => solver.iterations() as f64,
        Variant::Greedy => solver.iterations() as f64 / edges as f64,
    });
    let result = solver.finish(converged);
    let oracle_unique = oracle.map(OracleResult::unique);
    let recovered = match oracle {
        Some(o) if o.unique() => Some(result.assignment == o.best),
        _ => None,
    };
    let record = RunRecord {
        family: spec.family,
        size: task.size,
        n: topo.num_vertices(),
        deg_cap: task.cap,
        eta,
        variant,
        trial: task.trial,
        seed: task.seed,
        converged,
        iterations: result.iterations,
        projection_steps: result.projection_steps,
        sweeps_to_epsilon,
        final_max_violation: result.final_max_violation,
        integrality_margin: result.integrality_margin,
        oracle_unique,
        recovered,
        final_hamming: hamming_to_oracle(&result.assignment),
    };
    Ok((record, rows))
}

fn format_row(
    spec: &ExperimentSpec,
    task: &InstanceTask,
    topo: &GraphTopology,
    eta: f64,
    variant: Variant,
    row: &SweepRow,
) -> String {
    let cap = task.cap.map_or(String::new(), |c| c.to_string());
    let hamming = row.hamming.map_or(String::new(), |h| h.to_string());
    format!(
        "{},{},{},{},{},{},{},{},{},{}",
        spec.family.as_str(),
        topo.num_vertices(),
        cap,
        eta,
        variant.as_str(),
        task.trial,
        row.sweep,
        hamming,
        row.max_violation,
        row.lyapunov
    )
}

fn summarize(spec: &ExperimentSpec, runs: &[RunRecord]) -> Vec<GroupSummary> {
    let mut groups = Vec::new();
    for &size in &spec.sizes {
        for cap in spec.cap_axis() {
            for &eta in &spec.eta_values {
                for &variant in &spec.variants {
                    let members: Vec<&RunRecord> = runs
                        .iter()
                        .filter(|r| {
                            r.size == size
                                && r.deg_cap == cap
                                && r.eta == eta
                                && r.variant == variant
                        })
                        .collect();
                    if members.is_empty() {
                        continue;
                    }
                    let unique: Vec<&&RunRecord> = members
                        .iter()
                        .filter(|r| r.oracle_unique == Some(true))
                        .collect();
                    let recovery_rate = if unique.is_empty() {
                        None
                    } else {
                        let hits = unique
                            .iter()
                            .filter(|r| r.recovered == Some(true))
                            .count();
                        Some(hits as f64 / unique.len() as f64)
                    };
                    let sweeps: Vec<f64> = members
                        .iter()
                        .filter_map(|r| r.sweeps_to_epsilon)
                        .collect();
                    groups.push(GroupSummary {
                        family: spec.family,
                        size,
                        deg_cap: cap,
                        eta,
                        variant,
                        trials: members.len(),
                        converged_runs: members.iter().filter(|r| r.converged).count(),
                        unique_oracle_trials: unique.len(),
                        ambiguous_oracle_trials: members
                            .iter()
                            .filter(|r| r.oracle_unique == Some(false))
                            .count(),
                        skipped_oracle_trials: members
                            .iter()
                            .filter(|r| r.oracle_unique.is_none())
                            .count(),
                        recovery_rate,
                        median_sweeps_to_epsilon: emp_core::numeric::median(&sweeps),
                    });
                }
            }
        }
    }
    groups
}
