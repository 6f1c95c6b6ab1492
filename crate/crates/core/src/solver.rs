//! Smooth message-passing solvers over the edge-consistency relaxation.
//!
//! Starting from the per-block softmax `Gamma = Normalize(exp(-eta * C))`,
//! both variants repeatedly apply the closed-form projections from
//! [`crate::projections`] until every marginalization constraint holds to
//! within `epsilon` in l1:
//!
//! * **cyclic**: one outer iteration is a full sweep over the edges in
//!   canonical order, applying row consistency, row normalization, column
//!   consistency, column normalization. The stopping criterion is checked
//!   once per sweep (so the final state may overshoot it).
//! * **greedy**: one outer iteration picks the single `(edge, side)` with
//!   the largest violation (max-heap with lazy deletion), then applies that
//!   side's consistency + normalization pair.
//!
//! Progress is certified by a potential function over the dual multipliers:
//!
//! ```text
//! L(lambda, xi) = -sum_e mass_e - sum_v mass_v - sum xi + sum exp(-eta C)
//! ```
//!
//! where `mass` is the total mass of a block written as a function of the
//! duals. Every projection increases L: a consistency step by exactly twice
//! the squared Hellinger distance between the edge's marginal sums and the
//! vertex block, a normalization step by `(M - log M - 1)` per rescaled
//! block. The solver can verify both facts at runtime (`assert_theory`) and
//! record a step-by-step trace (`record_trace`).
//!
//! Numerical note: the trailing `sum exp(-eta C)` is constant along a run
//! and can be astronomically large (around 1e152 for the strongest
//! regularization the experiment protocol uses), while per-step gains can be
//! 1e-12. All differences of L are therefore computed from the constant-free
//! part, where the cancellation is exact; the constant is added back only
//! when the full value of L is reported.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::io::Write;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    edge_violations, max_violation, Assignment, GraphTopology, MarginalVector, PotentialVector,
    Side,
};
use crate::numeric::{log_sum_exp, log_sum_exp_iter};
use crate::projections::{project_consistency, project_normalization, DualState, ProjectionError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Cyclic,
    Greedy,
}

impl Variant {
    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Cyclic => "cyclic",
            Variant::Greedy => "greedy",
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "cyclic" => Ok(Variant::Cyclic),
            "greedy" => Ok(Variant::Greedy),
            other => Err(format!("unknown variant '{other}' (expected cyclic or greedy)")),
        }
    }
}

/// Solver parameters. `max_iterations` counts outer iterations (sweeps for
/// cyclic, single greedy steps for greedy); see [`default_iteration_cap`] for
/// the theory-derived default.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub eta: f64,
    pub epsilon: f64,
    pub max_iterations: usize,
    pub variant: Variant,
    pub record_trace: bool,
    pub assert_theory: bool,
}

impl SolverConfig {
    pub fn new(eta: f64, epsilon: f64, max_iterations: usize, variant: Variant) -> Self {
        Self {
            eta,
            epsilon,
            max_iterations,
            variant,
            record_trace: false,
            assert_theory: false,
        }
    }

    fn validate(&self) -> Result<(), SolveError> {
        if !(self.eta.is_finite() && self.eta > 0.0) {
            return Err(SolveError::InvalidConfig(format!(
                "eta must be positive and finite, got {}",
                self.eta
            )));
        }
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return Err(SolveError::InvalidConfig(format!(
                "epsilon must be positive and finite, got {}",
                self.epsilon
            )));
        }
        if self.max_iterations == 0 {
            return Err(SolveError::InvalidConfig(
                "max_iterations must be at least 1".to_string(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum SolveError {
    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Projection(#[from] ProjectionError),
    /// Raised only under `assert_theory`: a runtime check of the improvement
    /// theory failed, which indicates a numerical breakdown or a bug.
    #[error("theory assertion failed at step {step}: {detail}")]
    TheoryViolation { step: usize, detail: String },
}

/// What a single trace row describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepKind {
    LeftCons,
    LeftNorm,
    RightCons,
    RightNorm,
    /// Marker row emitted after each full cyclic sweep (no edge attached).
    SweepEnd,
}

impl StepKind {
    pub fn as_str(self) -> &'static str {
        match self {
            StepKind::LeftCons => "left_cons",
            StepKind::LeftNorm => "left_norm",
            StepKind::RightCons => "right_cons",
            StepKind::RightNorm => "right_norm",
            StepKind::SweepEnd => "sweep_end",
        }
    }

    fn is_consistency(self) -> bool {
        matches!(self, StepKind::LeftCons | StepKind::RightCons)
    }
}

/// One instrumented projection step (or sweep marker).
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    /// Global projection-step index, 1-based. Sweep markers reuse the index
    /// of the last step.
    pub step: usize,
    /// Outer iteration (sweep or greedy step), 1-based.
    pub iteration: usize,
    /// Edge endpoints, `None` for sweep markers.
    pub edge: Option<(usize, usize)>,
    pub kind: StepKind,
    /// Full potential value (constants included).
    pub lyapunov: f64,
    /// Potential gain of this step (constant-free difference; 0 for markers).
    pub delta_l: f64,
    /// Max l1 constraint violation after the step.
    pub max_violation: f64,
    /// Seconds since the solve started. Diagnostic only; not serialized.
    pub elapsed: f64,
}

/// Ordered step records of one run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SolveTrace {
    pub records: Vec<StepRecord>,
}

impl SolveTrace {
    /// Writes the trace in its CSV form:
    /// `step,iteration,edge_i,edge_j,kind,lyapunov,delta_l,max_violation`.
    /// Sweep markers carry `-1,-1` in the edge columns. Wall-clock times are
    /// deliberately omitted so identical runs serialize identically.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "step,iteration,edge_i,edge_j,kind,lyapunov,delta_l,max_violation")?;
        for r in &self.records {
            let (ei, ej) = match r.edge {
                Some((i, j)) => (i as i64, j as i64),
                None => (-1, -1),
            };
            writeln!(
                w,
                "{},{},{},{},{},{},{},{}",
                r.step,
                r.iteration,
                ei,
                ej,
                r.kind.as_str(),
                r.lyapunov,
                r.delta_l,
                r.max_violation
            )?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("write to Vec cannot fail");
        String::from_utf8(buf).expect("trace CSV is ASCII")
    }
}

/// Worst-case residuals of the runtime theory checks, collected whenever the
/// run is instrumented (trace or assertions on).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TheoryReport {
    /// Max over consistency steps of `|delta_L - 2 h^2| / max(1, |L|)`.
    pub consistency_identity_rel_residual: f64,
    /// Min potential gain over normalization steps (theory: >= 0).
    pub normalization_delta_min: f64,
    /// Min potential gain over any step (theory: >= 0).
    pub step_delta_min: f64,
    /// Greedy only: min over iterations of `delta_L - violation^2 / 4`
    /// (theory: >= 0). `None` for cyclic runs or 0-iteration runs.
    pub greedy_progress_slack_min: Option<f64>,
    /// Constant-free potential at initialization and termination; the
    /// difference is the total certified gain.
    pub l_core_init: f64,
    pub l_core_final: f64,
}

/// Outcome of a solve.
#[derive(Debug, Clone)]
pub struct SolveResult {
    pub gamma: MarginalVector,
    pub dual: DualState,
    pub assignment: Assignment,
    pub converged: bool,
    /// Outer iterations executed (sweeps or greedy steps). The criterion is
    /// checked before each iteration, so a feasible start reports 0.
    pub iterations: usize,
    /// Individual projection steps executed.
    pub projection_steps: usize,
    pub final_max_violation: f64,
    /// `min over vertices of max Gamma_v(x)`: 1.0 means fully integral
    /// vertex marginals, values near `1/d` mean diffuse ones.
    pub integrality_margin: f64,
    pub trace: Option<SolveTrace>,
    pub theory: Option<TheoryReport>,
}

/// The result file schema: exactly these four fields.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ResultFile {
    pub assignment: Vec<usize>,
    pub converged: bool,
    pub iterations: u64,
    pub integrality_margin: f64,
}

impl From<&SolveResult> for ResultFile {
    fn from(r: &SolveResult) -> Self {
        Self {
            assignment: r.assignment.labels().to_vec(),
            converged: r.converged,
            iterations: r.iterations as u64,
            integrality_margin: r.integrality_margin,
        }
    }
}

/// Per-block softmax start: `Gamma = Normalize(exp(-eta * C))`, with the
/// normalization masses recorded in `xi` so the dual invariant holds from the
/// first step.
pub fn initialize(
    costs: &PotentialVector,
    topo: &GraphTopology,
    eta: f64,
) -> (MarginalVector, DualState) {
    let d = topo.num_labels();
    let mut dual = DualState::zeros(topo);
    let mut vertex_log = Vec::with_capacity(topo.num_vertices());
    let mut edge_log = Vec::with_capacity(topo.num_edges());
    for v in 0..topo.num_vertices() {
        let raw: Vec<f64> = costs.vertex_cost(v).iter().map(|&c| -eta * c).collect();
        let lse = log_sum_exp(&raw);
        vertex_log.push(raw.iter().map(|&l| l - lse).collect());
        dual.add_xi_vertex(v, lse);
    }
    for e in 0..topo.num_edges() {
        let raw: Vec<f64> = costs.edge_cost(e).iter().map(|&c| -eta * c).collect();
        let lse = log_sum_exp(&raw);
        edge_log.push(raw.iter().map(|&l| l - lse).collect());
        dual.add_xi_edge(e, lse);
    }
    (MarginalVector::from_logs(d, vertex_log, edge_log), dual)
}

/// Full potential `L(lambda, xi)`, constants included. Evaluated from the
/// dual multipliers alone (the primal does not enter), which is what makes
/// the primal-dual round-trip checks meaningful.
pub fn lyapunov(dual: &DualState, costs: &PotentialVector, topo: &GraphTopology, eta: f64) -> f64 {
    lyapunov_core(dual, costs, topo, eta) + lyapunov_const(costs, topo, eta)
}

/// Constant-free part of the potential: `-sum of block masses - sum xi`.
/// Differences of this quantity equal differences of the full potential
/// exactly, without the catastrophic cancellation the constants would cause.
pub fn lyapunov_core(
    dual: &DualState,
    costs: &PotentialVector,
    topo: &GraphTopology,
    eta: f64,
) -> f64 {
    let d = topo.num_labels();
    let mut total_mass = 0.0;
    for e in 0..topo.num_edges() {
        let cost = costs.edge_cost(e);
        let lr = dual.lambda_row(e);
        let lc = dual.lambda_col(e);
        let xi = dual.xi_edge(e);
        let lse = log_sum_exp_iter(
            (0..d * d).map(|k| -eta * cost[k] - lr[k / d] - lc[k % d] - xi),
        );
        total_mass += lse.exp();
    }
    for v in 0..topo.num_vertices() {
        let cost = costs.vertex_cost(v);
        let xi = dual.xi_vertex(v);
        let mut exponent = vec![0.0; d];
        for (a, ex) in exponent.iter_mut().enumerate() {
            let mut val = -eta * cost[a] - xi;
            for &e in topo.row_edges(v) {
                val += dual.lambda_row(e)[a];
            }
            for &e in topo.col_edges(v) {
                val += dual.lambda_col(e)[a];
            }
            *ex = val;
        }
        total_mass += log_sum_exp(&exponent).exp();
    }
    -total_mass - dual.xi_sum()
}

/// The constant terms `sum exp(-eta * C)` over every entry. Can overflow to
/// `+inf` when `eta * |C|_inf` exceeds ~709; the solver never needs it for
/// differences, so that only affects reported absolute values of L.
pub fn lyapunov_const(costs: &PotentialVector, topo: &GraphTopology, eta: f64) -> f64 {
    let mut total = 0.0;
    for e in 0..topo.num_edges() {
        let lse = log_sum_exp_iter(costs.edge_cost(e).iter().map(|&c| -eta * c));
        total += lse.exp();
    }
    for v in 0..topo.num_vertices() {
        let lse = log_sum_exp_iter(costs.vertex_cost(v).iter().map(|&c| -eta * c));
        total += lse.exp();
    }
    total
}

/// Rounds to the per-vertex argmax, ties to the smallest label.
pub fn round_marginals(gamma: &MarginalVector, topo: &GraphTopology) -> Assignment {
    let labels = (0..topo.num_vertices())
        .map(|v| {
            let logs = gamma.vertex_log(v);
            let mut best = 0;
            for (x, &l) in logs.iter().enumerate() {
                if l > logs[best] {
                    best = x;
                }
            }
            best
        })
        .collect();
    Assignment(labels)
}

/// `min over vertices of max Gamma_v(x)`, assuming normalized vertex blocks.
pub fn integrality_margin(gamma: &MarginalVector, topo: &GraphTopology) -> f64 {
    (0..topo.num_vertices())
        .map(|v| {
            gamma
                .vertex_log(v)
                .iter()
                .fold(f64::NEG_INFINITY, |a, &b| a.max(b))
                .exp()
        })
        .fold(f64::INFINITY, f64::min)
}

/// Max-heap entry for the greedy variant. Ordering: larger violation wins,
/// then smaller edge index, then row before column — the same total order
/// [`max_violation`] uses, so the heap and a linear scan always agree.
#[derive(Debug, Clone, Copy)]
struct HeapEntry {
    value: f64,
    edge: usize,
    side: Side,
    version: u64,
}

impl HeapEntry {
    fn rank(&self) -> u8 {
        match self.side {
            Side::Row => 1,
            Side::Col => 0,
        }
    }
}

impl PartialEq for HeapEntry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for HeapEntry {}
impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        self.value
            .total_cmp(&other.value)
            .then_with(|| other.edge.cmp(&self.edge))
            .then_with(|| self.rank().cmp(&other.rank()))
    }
}

/// Incremental solver state. Most callers want [`emp_cyclic`] /
/// [`emp_greedy`]; the harness drives this type directly to observe the
/// state between sweeps.
pub struct EmpSolver<'a> {
    topo: &'a GraphTopology,
    costs: &'a PotentialVector,
    config: SolverConfig,
    gamma: MarginalVector,
    dual: DualState,
    iterations: usize,
    steps: usize,
    trace: Vec<StepRecord>,
    start: Instant,
    // Potential tracking (valid when instrumented).
    l_core: f64,
    l_const: f64,
    // Theory residual tracking.
    identity_rel_worst: f64,
    norm_delta_min: f64,
    step_delta_min: f64,
    greedy_slack_min: Option<f64>,
    l_core_init: f64,
    // Greedy heap state.
    heap: BinaryHeap<HeapEntry>,
    versions: Vec<[u64; 2]>,
}

impl<'a> EmpSolver<'a> {
    pub fn new(
        costs: &'a PotentialVector,
        topo: &'a GraphTopology,
        config: SolverConfig,
    ) -> Result<Self, SolveError> {
        config.validate()?;
        let (gamma, dual) = initialize(costs, topo, config.eta);
        let instrumented = config.record_trace || config.assert_theory;
        let l_const = if instrumented {
            lyapunov_const(costs, topo, config.eta)
        } else {
            0.0
        };
        let l_core = if instrumented {
            lyapunov_core(&dual, costs, topo, config.eta)
        } else {
            0.0
        };
        Ok(Self {
            topo,
            costs,
            config,
            gamma,
            dual,
            iterations: 0,
            steps: 0,
            trace: Vec::new(),
            start: Instant::now(),
            l_core,
            l_const,
            identity_rel_worst: 0.0,
            norm_delta_min: f64::INFINITY,
            step_delta_min: f64::INFINITY,
            greedy_slack_min: None,
            l_core_init: l_core,
            heap: BinaryHeap::new(),
            versions: vec![[0, 0]; topo.num_edges()],
        })
    }

    pub fn gamma(&self) -> &MarginalVector {
        &self.gamma
    }

    pub fn dual(&self) -> &DualState {
        &self.dual
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    pub fn projection_steps(&self) -> usize {
        self.steps
    }

    pub fn max_violation(&self) -> (f64, usize, Side) {
        max_violation(&self.gamma, self.topo)
    }

    fn instrumented(&self) -> bool {
        self.config.record_trace || self.config.assert_theory
    }

    /// Full potential value in the current state (constants included).
    pub fn lyapunov(&self) -> f64 {
        lyapunov(&self.dual, self.costs, self.topo, self.config.eta)
    }

    /// Applies one projection, updating instrumentation. Returns the
    /// potential gain (NaN when not instrumented).
    fn step(&mut self, e: usize, kind: StepKind) -> Result<f64, SolveError> {
        let instrumented = self.instrumented();
        let side = match kind {
            StepKind::LeftCons | StepKind::LeftNorm => Side::Row,
            StepKind::RightCons | StepKind::RightNorm => Side::Col,
            StepKind::SweepEnd => unreachable!("markers are not steps"),
        };
        // For consistency steps, measure 2 h^2 between the operands *before*
        // the projection; the potential gain must match it exactly.
        let predicted = if instrumented && kind.is_consistency() {
            let (i, j) = self.topo.endpoints(e);
            let (sums, vertex) = match side {
                Side::Row => (self.gamma.edge_row_log_sums(e), i),
                Side::Col => (self.gamma.edge_col_log_sums(e), j),
            };
            let sums: Vec<f64> = sums.iter().map(|&l| l.exp()).collect();
            let dist = self.gamma.vertex_dist(vertex);
            Some(2.0 * crate::projections::hellinger_sq(&sums, &dist))
        } else {
            None
        };

        if kind.is_consistency() {
            project_consistency(&mut self.gamma, &mut self.dual, self.topo, e, side)?;
        } else {
            project_normalization(&mut self.gamma, &mut self.dual, self.topo, e, side)?;
        }
        self.steps += 1;

        if !instrumented {
            return Ok(f64::NAN);
        }
        let new_core = lyapunov_core(&self.dual, self.costs, self.topo, self.config.eta);
        let delta = new_core - self.l_core;
        self.l_core = new_core;
        let full = new_core + self.l_const;
        self.step_delta_min = self.step_delta_min.min(delta);

        if self.config.assert_theory {
            if !delta.is_finite() || !new_core.is_finite() {
                return Err(SolveError::TheoryViolation {
                    step: self.steps,
                    detail: format!("non-finite potential (core {new_core}, delta {delta})"),
                });
            }
            if delta < -1e-12 {
                return Err(SolveError::TheoryViolation {
                    step: self.steps,
                    detail: format!("potential decreased by {delta:e} ({} on edge {e})", kind.as_str()),
                });
            }
        }
        if let Some(gain) = predicted {
            let rel = (delta - gain).abs() / 1.0f64.max(full.abs());
            self.identity_rel_worst = self.identity_rel_worst.max(rel);
            if self.config.assert_theory && rel > 1e-8 {
                return Err(SolveError::TheoryViolation {
                    step: self.steps,
                    detail: format!(
                        "consistency gain {delta:e} differs from 2 h^2 = {gain:e} (relative residual {rel:e})"
                    ),
                });
            }
        } else {
            self.norm_delta_min = self.norm_delta_min.min(delta);
        }

        if self.config.record_trace {
            let mv = self.max_violation().0;
            self.trace.push(StepRecord {
                step: self.steps,
                iteration: self.iterations,
                edge: Some(self.topo.endpoints(e)),
                kind,
                lyapunov: full,
                delta_l: delta,
                max_violation: mv,
                elapsed: self.start.elapsed().as_secs_f64(),
            });
        }
        Ok(delta)
    }

    /// One full cyclic sweep (4 projections per edge, canonical edge order).
    pub fn sweep(&mut self) -> Result<(), SolveError> {
        self.iterations += 1;
        for e in 0..self.topo.num_edges() {
            self.step(e, StepKind::LeftCons)?;
            self.step(e, StepKind::LeftNorm)?;
            self.step(e, StepKind::RightCons)?;
            self.step(e, StepKind::RightNorm)?;
        }
        if self.config.record_trace {
            let mv = self.max_violation().0;
            self.trace.push(StepRecord {
                step: self.steps,
                iteration: self.iterations,
                edge: None,
                kind: StepKind::SweepEnd,
                lyapunov: self.l_core + self.l_const,
                delta_l: 0.0,
                max_violation: mv,
                elapsed: self.start.elapsed().as_secs_f64(),
            });
        }
        Ok(())
    }

    fn push_key(&mut self, e: usize, side: Side) {
        let (row, col) = edge_violations(&self.gamma, self.topo, e);
        let value = match side {
            Side::Row => row,
            Side::Col => col,
        };
        let slot = match side {
            Side::Row => 0,
            Side::Col => 1,
        };
        self.versions[e][slot] += 1;
        self.heap.push(HeapEntry {
            value,
            edge: e,
            side,
            version: self.versions[e][slot],
        });
    }

    fn is_fresh(&self, entry: &HeapEntry) -> bool {
        let slot = match entry.side {
            Side::Row => 0,
            Side::Col => 1,
        };
        self.versions[entry.edge][slot] == entry.version
    }

    /// Pops the current maximum violation key (discarding stale entries).
    fn pop_max(&mut self) -> HeapEntry {
        loop {
            let entry = self
                .heap
                .pop()
                .expect("heap always holds a fresh key per (edge, side)");
            if self.is_fresh(&entry) {
                return entry;
            }
        }
    }

    /// One greedy step: applies the consistency + normalization pair of the
    /// most violated `(edge, side)`. Returns false (without iterating) when
    /// the maximum violation is already below `epsilon`.
    pub fn greedy_step(&mut self) -> Result<bool, SolveError> {
        if self.heap.is_empty() {
            for e in 0..self.topo.num_edges() {
                self.push_key(e, Side::Row);
                self.push_key(e, Side::Col);
            }
        }
        let top = self.pop_max();
        if top.value < self.config.epsilon {
            // Not consumed: restore so the heap invariant (one fresh key per
            // pair) survives a later call.
            self.heap.push(top);
            return Ok(false);
        }
        self.iterations += 1;
        let e = top.edge;
        let (kc, kn) = match top.side {
            Side::Row => (StepKind::LeftCons, StepKind::LeftNorm),
            Side::Col => (StepKind::RightCons, StepKind::RightNorm),
        };
        let d1 = self.step(e, kc)?;
        let d2 = self.step(e, kn)?;

        if self.instrumented() {
            let slack = (d1 + d2) - top.value * top.value / 4.0;
            self.greedy_slack_min = Some(match self.greedy_slack_min {
                Some(prev) => prev.min(slack),
                None => slack,
            });
            if self.config.assert_theory {
                let floor = self.config.epsilon * self.config.epsilon / 4.0 - 1e-9;
                if d1 + d2 < floor {
                    return Err(SolveError::TheoryViolation {
                        step: self.steps,
                        detail: format!(
                            "greedy gain {:e} below guaranteed epsilon^2/4 floor {floor:e}",
                            d1 + d2
                        ),
                    });
                }
            }
        }

        // The step changed edge e's joint and one vertex block; refresh every
        // key whose violation could have moved: both sides of each edge
        // incident on the touched vertex (edge e included).
        let (i, j) = self.topo.endpoints(e);
        let touched = match top.side {
            Side::Row => i,
            Side::Col => j,
        };
        let mut affected: Vec<usize> = self
            .topo
            .row_edges(touched)
            .iter()
            .chain(self.topo.col_edges(touched))
            .copied()
            .collect();
        if !affected.contains(&e) {
            affected.push(e);
        }
        for ae in affected {
            self.push_key(ae, Side::Row);
            self.push_key(ae, Side::Col);
        }
        Ok(true)
    }

    /// Runs the configured variant to completion and packages the result.
    pub fn run(mut self) -> Result<SolveResult, SolveError> {
        let converged = match self.config.variant {
            Variant::Cyclic => loop {
                if self.max_violation().0 < self.config.epsilon {
                    break true;
                }
                if self.iterations >= self.config.max_iterations {
                    break false;
                }
                self.sweep()?;
            },
            Variant::Greedy => loop {
                if self.iterations >= self.config.max_iterations {
                    // A greedy iteration is cheap; still honor the cap before
                    // checking so the iteration count never exceeds it.
                    break self.max_violation().0 < self.config.epsilon;
                }
                if !self.greedy_step()? {
                    break true;
                }
            },
        };
        Ok(self.finish(converged))
    }

    /// Packages the current state without running further (used by harness
    /// drivers that manage their own iteration budget).
    pub fn finish(self, converged: bool) -> SolveResult {
        let assignment = round_marginals(&self.gamma, self.topo);
        let final_max_violation = max_violation(&self.gamma, self.topo).0;
        let margin = integrality_margin(&self.gamma, self.topo);
        let theory = if self.instrumented() {
            Some(TheoryReport {
                consistency_identity_rel_residual: self.identity_rel_worst,
                normalization_delta_min: if self.norm_delta_min.is_finite() {
                    self.norm_delta_min
                } else {
                    0.0
                },
                step_delta_min: if self.step_delta_min.is_finite() {
                    self.step_delta_min
                } else {
                    0.0
                },
                greedy_progress_slack_min: self.greedy_slack_min,
                l_core_init: self.l_core_init,
                l_core_final: self.l_core,
            })
        } else {
            None
        };
        SolveResult {
            gamma: self.gamma,
            dual: self.dual,
            assignment,
            converged,
            iterations: self.iterations,
            projection_steps: self.steps,
            final_max_violation,
            integrality_margin: margin,
            trace: if self.config.record_trace {
                Some(SolveTrace {
                    records: self.trace,
                })
            } else {
                None
            },
            theory,
        }
    }
}

/// Cyclic solve: full sweeps until the max violation drops below
/// `config.epsilon` or `config.max_iterations` sweeps have run.
pub fn emp_cyclic(
    costs: &PotentialVector,
    topo: &GraphTopology,
    mut config: SolverConfig,
) -> Result<SolveResult, SolveError> {
    config.variant = Variant::Cyclic;
    EmpSolver::new(costs, topo, config)?.run()
}

/// Greedy solve: single most-violated-constraint steps until convergence or
/// the iteration cap.
pub fn emp_greedy(
    costs: &PotentialVector,
    topo: &GraphTopology,
    mut config: SolverConfig,
) -> Result<SolveResult, SolveError> {
    config.variant = Variant::Greedy;
    EmpSolver::new(costs, topo, config)?.run()
}

/// Result of probing a state for fixed-point-ness.
#[derive(Debug, Clone, PartialEq)]
pub struct FixedPointReport {
    /// Largest linear-space entry change any single projection causes.
    pub max_change: f64,
    pub worst_edge: usize,
    pub worst_kind: StepKind,
}

/// Applies every projection type to a copy of the state, edge by edge, and
/// reports the largest entrywise change (linear space). Near zero at a true
/// fixed point; clearly nonzero after any perturbation.
pub fn fixed_point_check(
    gamma: &MarginalVector,
    dual: &DualState,
    topo: &GraphTopology,
) -> Result<FixedPointReport, ProjectionError> {
    let kinds = [
        StepKind::LeftCons,
        StepKind::LeftNorm,
        StepKind::RightCons,
        StepKind::RightNorm,
    ];
    let mut report = FixedPointReport {
        max_change: 0.0,
        worst_edge: 0,
        worst_kind: StepKind::LeftCons,
    };
    for e in 0..topo.num_edges() {
        let (i, j) = topo.endpoints(e);
        for kind in kinds {
            let side = match kind {
                StepKind::LeftCons | StepKind::LeftNorm => Side::Row,
                _ => Side::Col,
            };
            let vertex = match side {
                Side::Row => i,
                Side::Col => j,
            };
            let mut g = gamma.clone();
            let mut du = dual.clone();
            if kind.is_consistency() {
                project_consistency(&mut g, &mut du, topo, e, side)?;
            } else {
                project_normalization(&mut g, &mut du, topo, e, side)?;
            }
            let mut change = 0.0f64;
            for (new, old) in g.edge_log(e).iter().zip(gamma.edge_log(e)) {
                change = change.max((new.exp() - old.exp()).abs());
            }
            for (new, old) in g.vertex_log(vertex).iter().zip(gamma.vertex_log(vertex)) {
                change = change.max((new.exp() - old.exp()).abs());
            }
            if change > report.max_change {
                report = FixedPointReport {
                    max_change: change,
                    worst_edge: e,
                    worst_kind: kind,
                };
            }
        }
    }
    Ok(report)
}

/// Theory-derived default iteration cap for [`SolverConfig::max_iterations`]:
/// the guaranteed-convergence bound for the variant, additionally capped at
/// 1e7 projection steps so desk runs stay bounded.
pub fn default_iteration_cap(
    costs: &PotentialVector,
    topo: &GraphTopology,
    eta: f64,
    epsilon: f64,
    variant: Variant,
) -> usize {
    let s0 = crate::bounds::s_zero(costs, topo, eta);
    let (cyclic, greedy) = crate::bounds::iteration_bounds(s0, epsilon, topo.max_degree());
    let steps_per_iter = match variant {
        Variant::Cyclic => 4 * topo.num_edges().max(1),
        Variant::Greedy => 2,
    };
    let step_cap = (1e7 / steps_per_iter as f64).ceil() as u64;
    let bound = match variant {
        Variant::Cyclic => cyclic,
        Variant::Greedy => greedy,
    };
    bound.min(step_cap).max(1) as usize
}
