//! The `verify` subcommand: solves a fixed roster of small seeded instances
//! with both variants and evaluates every runtime guarantee the improvement
//! theory promises — the exact consistency-gain identity, non-negative
//! normalization gains, monotone potential, the greedy progress floor,
//! iteration-bound compliance, the total-gain budget, closed-form vs
//! search-based projection agreement, dual reconstruction, and finiteness.
//! One PASS/FAIL line per check. `--self-check` additionally injects a
//! sign-flipped projection and confirms the detectors reject it.

use std::fmt::Write as _;

use anyhow::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use emp_core::bounds::{iteration_bounds, s_zero};
use emp_core::generators::{erdos_renyi, grid_graph, potts_costs, PottsConfig};
use emp_core::oracle::kl_projection_oracle;
use emp_core::projections::{
    max_decomposition_residual, max_reconstruction_residual, project_consistency,
};
use emp_core::solver::fixed_point_check;
use emp_core::{
    hellinger_sq, DualState, GraphTopology, MarginalVector, PotentialVector, Side, SolveResult,
    SolverConfig, Variant,
};

use crate::experiment::{instance_seed, Family};

/// Residual gates, identical to the ones enforced inside the solver when
/// theory assertions are on.
const IDENTITY_GATE: f64 = 1e-8;
const MONOTONE_GATE: f64 = -1e-12;
const GREEDY_GATE: f64 = -1e-9;
const GAIN_BUDGET_SLOP: f64 = 1e-6;
const ORACLE_GATE: f64 = 1e-6;
const DUAL_GATE: f64 = 1e-10;

/// Practical sweep cap for the roster runs; far above what the roster needs
/// at sensible regularization strengths, far below the worst-case bounds.
const SWEEP_CAP: usize = 2000;

#[derive(Debug, Clone)]
pub struct VerifyOptions {
    pub eta: f64,
    pub epsilon: f64,
    pub seed: u64,
    pub self_check: bool,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            eta: 10.0,
            epsilon: 1e-3,
            seed: 7,
            self_check: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Default)]
pub struct VerifyReport {
    pub checks: Vec<Check>,
}

impl VerifyReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for c in &self.checks {
            let verdict = if c.passed { "PASS" } else { "FAIL" };
            let _ = writeln!(out, "{verdict} {} — {}", c.name, c.detail);
        }
        let passed = self.checks.iter().filter(|c| c.passed).count();
        let _ = writeln!(out, "verify: {passed}/{} checks passed", self.checks.len());
        out
    }

    fn push(&mut self, name: &'static str, passed: bool, detail: String) {
        self.checks.push(Check {
            name,
            passed,
            detail,
        });
    }
}

struct RunOutcome {
    label: &'static str,
    variant: Variant,
    topo: GraphTopology,
    costs: PotentialVector,
    s0: f64,
    iteration_bound: u64,
    result: SolveResult,
}

fn roster(opts: &VerifyOptions) -> Result<Vec<(&'static str, GraphTopology, PotentialVector)>> {
    let mut out = Vec::new();
    for (label, family, size, d, cap) in [
        ("grid2_d2", Family::Grid, 2usize, 2usize, None),
        ("grid3_d3", Family::Grid, 3, 3, None),
        ("er10_d2", Family::ErdosRenyi, 10, 2, None),
        ("er12_d3_cap4", Family::ErdosRenyi, 12, 3, Some(4usize)),
    ] {
        let seed = instance_seed(opts.seed, family, size, cap, 0);
        let topo = match family {
            Family::Grid => grid_graph(size, d)?,
            Family::ErdosRenyi => erdos_renyi(size, d, seed, cap)?,
        };
        let costs = potts_costs(
            &topo,
            &PottsConfig {
                d,
                seed,
                ..PottsConfig::default()
            },
        );
        out.push((label, topo, costs));
    }
    Ok(out)
}

fn run_roster(opts: &VerifyOptions) -> Result<Vec<RunOutcome>> {
    let mut outcomes = Vec::new();
    for (label, topo, costs) in roster(opts)? {
        let s0 = s_zero(&costs, &topo, opts.eta);
        let (cyclic_bound, greedy_bound) = iteration_bounds(s0, opts.epsilon, topo.max_degree());
        for variant in [Variant::Cyclic, Variant::Greedy] {
            let cap = match variant {
                Variant::Cyclic => SWEEP_CAP,
                Variant::Greedy => SWEEP_CAP.saturating_mul(topo.num_edges()),
            };
            let mut config = SolverConfig::new(opts.eta, opts.epsilon, cap, variant);
            // Trace mode instruments every step but never aborts, so a
            // violated invariant surfaces as an honest FAIL line below.
            config.record_trace = true;
            let result = match variant {
                Variant::Cyclic => emp_core::emp_cyclic(&costs, &topo, config)?,
                Variant::Greedy => emp_core::emp_greedy(&costs, &topo, config)?,
            };
            outcomes.push(RunOutcome {
                label,
                variant,
                topo: topo.clone(),
                costs: costs.clone(),
                s0,
                iteration_bound: match variant {
                    Variant::Cyclic => cyclic_bound,
                    Variant::Greedy => greedy_bound,
                },
                result,
            });
        }
    }
    Ok(outcomes)
}

fn tag(outcome: &RunOutcome) -> String {
    format!("{}/{}", outcome.label, outcome.variant.as_str())
}

/// Fold `value(outcome)` over the runs, keeping the worst case according to
/// `worse`; reports `(worst value, tag of the run attaining it)`.
fn worst_over<F, W>(outcomes: &[RunOutcome], mut value: F, worse: W) -> Option<(f64, String)>
where
    F: FnMut(&RunOutcome) -> Option<f64>,
    W: Fn(f64, f64) -> bool,
{
    let mut best: Option<(f64, String)> = None;
    for o in outcomes {
        if let Some(v) = value(o) {
            if best.as_ref().is_none_or(|(b, _)| worse(v, *b)) {
                best = Some((v, tag(o)));
            }
        }
    }
    best
}

pub fn run_verify(opts: &VerifyOptions) -> Result<VerifyReport> {
    let outcomes = run_roster(opts)?;
    let mut report = VerifyReport::default();

    // Exact consistency-gain identity: each consistency step's potential gain
    // equals twice the squared Hellinger distance of its operands.
    let worst = worst_over(
        &outcomes,
        |o| {
            o.result
                .theory
                .as_ref()
                .map(|t| t.consistency_identity_rel_residual)
        },
        |a, b| a > b,
    )
    .expect("instrumented runs always carry a theory report");
    report.push(
        "consistency_gain_identity",
        worst.0 <= IDENTITY_GATE,
        format!(
            "worst relative residual {:.3e} (gate {IDENTITY_GATE:.0e}) at {}",
            worst.0, worst.1
        ),
    );

    let worst = worst_over(
        &outcomes,
        |o| o.result.theory.as_ref().map(|t| t.normalization_delta_min),
        |a, b| a < b,
    )
    .unwrap();
    report.push(
        "normalization_gain_nonneg",
        worst.0 >= MONOTONE_GATE,
        format!(
            "smallest normalization gain {:.3e} (gate {MONOTONE_GATE:.0e}) at {}",
            worst.0, worst.1
        ),
    );

    let worst = worst_over(
        &outcomes,
        |o| o.result.theory.as_ref().map(|t| t.step_delta_min),
        |a, b| a < b,
    )
    .unwrap();
    report.push(
        "monotone_potential",
        worst.0 >= MONOTONE_GATE,
        format!(
            "smallest step gain {:.3e} (gate {MONOTONE_GATE:.0e}) at {}",
            worst.0, worst.1
        ),
    );

    match worst_over(
        &outcomes,
        |o| {
            o.result
                .theory
                .as_ref()
                .and_then(|t| t.greedy_progress_slack_min)
        },
        |a, b| a < b,
    ) {
        Some(worst) => report.push(
            "greedy_progress_floor",
            worst.0 >= GREEDY_GATE,
            format!(
                "smallest slack over violation^2/4: {:.3e} (gate {GREEDY_GATE:.0e}) at {}",
                worst.0, worst.1
            ),
        ),
        None => report.push(
            "greedy_progress_floor",
            true,
            "no greedy steps executed (all starts feasible)".to_string(),
        ),
    }

    {
        let mut passed = true;
        let mut detail = String::new();
        for o in &outcomes {
            if !o.result.converged {
                passed = false;
                let _ = write!(detail, "{} did not converge within the practical cap; ", tag(o));
            } else if o.result.iterations as u64 > o.iteration_bound {
                passed = false;
                let _ = write!(
                    detail,
                    "{} took {} iterations, bound {}; ",
                    tag(o),
                    o.result.iterations,
                    o.iteration_bound
                );
            }
        }
        if passed {
            let worst = worst_over(
                &outcomes,
                |o| Some(o.result.iterations as f64 / o.iteration_bound.max(1) as f64),
                |a, b| a > b,
            )
            .unwrap();
            detail = format!(
                "all runs converged within their bounds; tightest ratio {:.2e} at {}",
                worst.0, worst.1
            );
        }
        report.push("iteration_bound_compliance", passed, detail);
    }

    // Total potential gain can never exceed the a-priori budget S0.
    let worst = worst_over(
        &outcomes,
        |o| {
            o.result
                .theory
                .as_ref()
                .map(|t| (t.l_core_final - t.l_core_init) - o.s0)
        },
        |a, b| a > b,
    )
    .unwrap();
    report.push(
        "total_gain_budget",
        worst.0 <= GAIN_BUDGET_SLOP,
        format!(
            "largest (gain - S0) = {:.3e} (slop {GAIN_BUDGET_SLOP:.0e}) at {}",
            worst.0, worst.1
        ),
    );

    oracle_agreement(&mut report, opts);

    let worst = worst_over(
        &outcomes,
        |o| {
            let recon = max_reconstruction_residual(
                &o.result.gamma,
                &o.result.dual,
                &o.costs,
                &o.topo,
                opts.eta,
            );
            let decomp = max_decomposition_residual(&o.result.dual, &o.topo);
            Some(recon.max(decomp))
        },
        |a, b| a > b,
    )
    .unwrap();
    report.push(
        "dual_reconstruction",
        worst.0 <= DUAL_GATE,
        format!(
            "worst round-trip residual {:.3e} (gate {DUAL_GATE:.0e}) at {}",
            worst.0, worst.1
        ),
    );

    let all_finite = outcomes
        .iter()
        .all(|o| o.result.gamma.all_finite() && o.result.dual.all_finite());
    report.push(
        "finite_state",
        all_finite,
        format!("marginals and duals finite across all {} runs", outcomes.len()),
    );

    {
        let mut worst: Option<(f64, String)> = None;
        for o in outcomes.iter().filter(|o| o.result.converged) {
            let fp = fixed_point_check(&o.result.gamma, &o.result.dual, &o.topo)?;
            if worst.as_ref().is_none_or(|(w, _)| fp.max_change > *w) {
                worst = Some((fp.max_change, tag(o)));
            }
        }
        match worst {
            Some((value, at)) => report.push(
                "near_fixed_point_at_convergence",
                value <= 10.0 * opts.epsilon,
                format!(
                    "largest single-projection move {value:.3e} (gate 10*epsilon = {:.0e}) at {at}",
                    10.0 * opts.epsilon
                ),
            ),
            None => report.push(
                "near_fixed_point_at_convergence",
                false,
                "no run converged; nothing to probe".to_string(),
            ),
        }
    }

    if opts.self_check {
        let (passed, detail) = fault_injection(opts.seed);
        report.push("fault_injection_detector", passed, detail);
    }

    Ok(report)
}

/// 50 random `(joint, vertex)` operand pairs, labels 2..=5: one closed-form
/// consistency projection against the golden-section search reference,
/// compared entrywise in linear space.
fn oracle_agreement(report: &mut VerifyReport, opts: &VerifyOptions) {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0x0AC1_E0AC);
    let mut worst = 0.0f64;
    let mut worst_at = String::from("(no pair)");
    for k in 0..50 {
        let d = rng.random_range(2..=5);
        let topo = GraphTopology::new(2, d, vec![(0, 1)]).expect("valid pair graph");
        let edge: Vec<f64> = (0..d * d)
            .map(|_| rng.random_range(-2.0..2.0f64).exp())
            .collect();
        let v0: Vec<f64> = (0..d).map(|_| rng.random_range(-2.0..2.0f64).exp()).collect();
        let v1: Vec<f64> = (0..d).map(|_| rng.random_range(-2.0..2.0f64).exp()).collect();
        let side = if rng.random::<bool>() { Side::Row } else { Side::Col };
        let vertex = match side {
            Side::Row => 0usize,
            Side::Col => 1usize,
        };

        let mut gamma = MarginalVector::from_linear(d, &[v0.clone(), v1.clone()], &[edge.clone()]);
        let mut dual = DualState::zeros(&topo);
        if project_consistency(&mut gamma, &mut dual, &topo, 0, side).is_err() {
            report.push(
                "projection_oracle_agreement",
                false,
                format!("closed form rejected positive operands (pair {k})"),
            );
            return;
        }
        let reference = match side {
            Side::Row => kl_projection_oracle(&edge, &v0, side),
            Side::Col => kl_projection_oracle(&edge, &v1, side),
        };
        let (ref_edge, ref_vertex) = match reference {
            Ok(pair) => pair,
            Err(err) => {
                report.push(
                    "projection_oracle_agreement",
                    false,
                    format!("search oracle rejected operands (pair {k}): {err}"),
                );
                return;
            }
        };
        let mut diff = 0.0f64;
        for (a, b) in gamma.edge_joint(0).iter().zip(&ref_edge) {
            diff = diff.max((a - b).abs());
        }
        for (a, b) in gamma.vertex_dist(vertex).iter().zip(&ref_vertex) {
            diff = diff.max((a - b).abs());
        }
        if diff > worst {
            worst = diff;
            worst_at = format!("pair {k} (d = {d}, {side:?} side)");
        }
    }
    report.push(
        "projection_oracle_agreement",
        worst <= ORACLE_GATE,
        format!("worst entrywise difference {worst:.3e} (gate {ORACLE_GATE:.0e}) at {worst_at}"),
    );
}

/// Applies one consistency update with the multiplier's sign flipped and
/// confirms both detectors (gain identity, monotonicity) reject it, while the
/// correct update passes. The gains are evaluated from the operand masses —
/// exactly how the potential difference reduces for a consistency step — so
/// the check exercises the same arithmetic the solver gates on.
fn fault_injection(seed: u64) -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5E1F_C4EC);
    let d = 3usize;
    let (rows, vertex, target) = loop {
        let edge: Vec<f64> = (0..d * d)
            .map(|_| rng.random_range(-1.0..1.0f64).exp())
            .collect();
        let vertex: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0f64).exp()).collect();
        let rows: Vec<f64> = (0..d)
            .map(|a| edge[a * d..(a + 1) * d].iter().sum())
            .collect();
        let target = 2.0 * hellinger_sq(&rows, &vertex);
        // Operands must disagree enough for a flipped update to be visible.
        if target > 1e-3 {
            break (rows, vertex, target);
        }
    };
    let alpha: Vec<f64> = (0..d).map(|a| 0.5 * (rows[a] / vertex[a]).ln()).collect();
    let gain_of = |alpha: &[f64]| -> f64 {
        (0..d)
            .map(|a| {
                rows[a] + vertex[a] - rows[a] * (-alpha[a]).exp() - vertex[a] * alpha[a].exp()
            })
            .sum()
    };
    let correct = gain_of(&alpha);
    let flipped: Vec<f64> = alpha.iter().map(|&a| -a).collect();
    let faulty = gain_of(&flipped);
    let correct_residual = (correct - target).abs();
    let faulty_residual = (faulty - target).abs();
    let identity_fires = faulty_residual > IDENTITY_GATE;
    let monotone_fires = faulty < MONOTONE_GATE;
    let calibrated = correct_residual <= 1e-12;
    (
        calibrated && identity_fires && monotone_fires,
        format!(
            "correct step residual {correct_residual:.3e} accepted; sign-flipped step: \
             identity residual {faulty_residual:.3e} and gain {faulty:.3e} both rejected"
        ),
    )
}
