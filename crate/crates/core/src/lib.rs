//! MAP inference on pairwise discrete graphical models by entropy-smoothed
//! message passing over the edge-consistency relaxation.
//!
//! The pipeline: [`solver::initialize`] forms the per-block softmax of
//! `-eta * C`; [`solver::emp_cyclic`] / [`solver::emp_greedy`] repeatedly
//! apply the closed-form projections of [`projections`] until the
//! marginalization constraints hold to the requested accuracy;
//! [`solver::round_marginals`] extracts an integral assignment. The
//! [`bounds`] module computes the a-priori iteration bounds and
//! regularization thresholds the runs are checked against, and [`oracle`]
//! holds independent reference implementations (exhaustive MAP enumeration,
//! golden-section projections) used to validate everything else. Instance
//! generators for the grid / random-graph Potts experiment families live in
//! [`generators`].

pub mod bounds;
pub mod generators;
pub mod model;
pub mod numeric;
pub mod oracle;
pub mod projections;
pub mod solver;

pub use model::{
    edge_violations, max_violation, validate_model, Assignment, GraphTopology, MarginalVector,
    ModelError, ModelFile, PotentialVector, Side, SlackVector,
};
pub use projections::{hellinger_sq, DualState, ProjectionError};
pub use solver::{
    emp_cyclic, emp_greedy, fixed_point_check, initialize, integrality_margin, lyapunov,
    round_marginals, EmpSolver, ResultFile, SolveError, SolveResult, SolveTrace, SolverConfig,
    StepKind, Variant,
};
