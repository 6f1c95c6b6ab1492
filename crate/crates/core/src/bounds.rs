//! A-priori guarantees: iteration bounds for both solver variants and
//! regularization thresholds for exact rounding.
//!
//! The iteration bounds come from the potential function's range. With
//!
//! ```text
//! S = sum_edges [ log sum exp(-eta C_e) + (eta / d^2) sum C_e ]
//!   + sum_verts [ log sum exp(-eta C_v) + (eta / d)   sum C_v ]
//! ```
//!
//! (every block term is >= log d by Jensen, so S > 0) and
//! `S0 = min(|eta C / d + exp(-eta C)|_1, S)`, the total potential gain of
//! any run is at most S0, while every iteration that still sees a violation
//! of at least epsilon gains at least epsilon^2 / (4 (deg+1)) per cyclic
//! sweep and epsilon^2 / 4 per greedy step. Dividing gives the bounds of
//! [`iteration_bounds`]. The l1 alternative inside S0 is allowed to overflow
//! to infinity for strong regularization; the min then simply selects S.
//!
//! The eta thresholds state how much regularization suffices for the rounded
//! output to be the exact MAP solution when the relaxation is tight, in
//! terms of the instance's solution gap `Delta` (difference between the best
//! and second-best objective over relaxation vertices). [`delta_integral_gap`]
//! computes the gap restricted to integral assignments by enumeration — an
//! upper bound on the true vertex gap, since fractional vertices are ignored
//! — which is exact whenever the relaxation is tight.

use serde::Serialize;
use thiserror::Error;

use crate::model::{GraphTopology, PotentialVector};
use crate::numeric::log_sum_exp_iter;
use crate::oracle::{brute_force_map, OracleError};

#[derive(Debug, Error, PartialEq)]
pub enum BoundsError {
    #[error("delta must be positive, got {0}")]
    NonPositiveDelta(f64),
    #[error("R1 must be positive, got {0}")]
    NonPositiveR1(f64),
    #[error("state space too large to enumerate: {states:e} assignments exceeds the {guard:e} guard")]
    TooLarge { states: f64, guard: f64 },
    #[error("integral optimum is not unique ({count} optima); the integral gap is zero")]
    ZeroGap { count: usize },
}

/// The potential-range constant `S` (see the module docs). Strictly positive
/// for any finite costs.
pub fn compute_s(costs: &PotentialVector, topo: &GraphTopology, eta: f64) -> f64 {
    let d = topo.num_labels() as f64;
    let mut s = 0.0;
    for e in 0..topo.num_edges() {
        let block = costs.edge_cost(e);
        let lse = log_sum_exp_iter(block.iter().map(|&c| -eta * c));
        let sum: f64 = block.iter().sum();
        s += lse + eta / (d * d) * sum;
    }
    for v in 0..topo.num_vertices() {
        let block = costs.vertex_cost(v);
        let lse = log_sum_exp_iter(block.iter().map(|&c| -eta * c));
        let sum: f64 = block.iter().sum();
        s += lse + eta / d * sum;
    }
    s
}

/// `S0 = min(|eta C / d + exp(-eta C)|_1, S)`: the tighter of the two upper
/// bounds on the total potential gain. The l1 norm runs over every cost
/// entry (vertex and edge blocks alike) and may overflow to `+inf` for large
/// `eta`, in which case `S` wins the min.
pub fn s_zero(costs: &PotentialVector, topo: &GraphTopology, eta: f64) -> f64 {
    let d = topo.num_labels() as f64;
    let mut l1 = 0.0;
    for e in 0..topo.num_edges() {
        for &c in costs.edge_cost(e) {
            l1 += (eta * c / d + (-eta * c).exp()).abs();
        }
    }
    for v in 0..topo.num_vertices() {
        for &c in costs.vertex_cost(v) {
            l1 += (eta * c / d + (-eta * c).exp()).abs();
        }
    }
    l1.min(compute_s(costs, topo, eta))
}

/// Guaranteed iteration counts to reach max violation < epsilon:
/// `ceil(4 S0 (deg + 1) / eps^2)` cyclic sweeps and `ceil(4 S0 / eps^2)`
/// greedy steps. Saturates at `u64::MAX` if the value does not fit.
pub fn iteration_bounds(s0: f64, epsilon: f64, max_degree: usize) -> (u64, u64) {
    let to_count = |x: f64| -> u64 {
        if !x.is_finite() || x >= u64::MAX as f64 {
            u64::MAX
        } else {
            x.ceil().max(1.0) as u64
        }
    };
    let greedy = 4.0 * s0 / (epsilon * epsilon);
    let cyclic = greedy * (max_degree as f64 + 1.0);
    (to_count(cyclic), to_count(greedy))
}

/// General sufficient regularization for exact rounding:
/// `eta >= (2 R1 log(64 R1) + 2 R1 + 2 R_H) / Delta`, where `R1` bounds the
/// l1 norm of feasible points and `R_H` the entropy range.
pub fn eta_threshold_general(r1: f64, r_h: f64, delta: f64) -> Result<f64, BoundsError> {
    if !(delta > 0.0) {
        return Err(BoundsError::NonPositiveDelta(delta));
    }
    if !(r1 > 0.0) {
        return Err(BoundsError::NonPositiveR1(r1));
    }
    Ok((2.0 * r1 * (64.0 * r1).ln() + 2.0 * r1 + 2.0 * r_h) / delta)
}

/// The `(R1, R_H)` pair this crate reports for a concrete topology:
/// `R1 = n d + |E| d^2` (the stored-variable count; every variable lies in
/// [0, 1] after per-block normalization) and `R_H = n ln d + |E| ln d^2`
/// (sum of per-block maximum entropies).
pub fn r1_rh_for(topo: &GraphTopology) -> (f64, f64) {
    let n = topo.num_vertices() as f64;
    let m = topo.num_edges() as f64;
    let d = topo.num_labels() as f64;
    (n * d + m * d * d, n * d.ln() + m * (d * d).ln())
}

/// Relaxation-specific thresholds: the sufficient regularization
/// `eta >= (2 log(16 n^2 d^2) + 16 |E| d^2) / min(Delta, 1/128)` and the
/// rounding-safe accuracy
/// `eps_max = 1 / ((25 d deg |E|)^2 * max(eta |C|_inf, 68))`.
pub fn thresholds_l2(
    topo: &GraphTopology,
    delta: f64,
    eta: f64,
    cost_inf_norm: f64,
) -> Result<(f64, f64), BoundsError> {
    if !(delta > 0.0) {
        return Err(BoundsError::NonPositiveDelta(delta));
    }
    let n = topo.num_vertices() as f64;
    let d = topo.num_labels() as f64;
    let m = topo.num_edges() as f64;
    let deg = topo.max_degree() as f64;
    let eta_min = (2.0 * (16.0 * n * n * d * d).ln() + 16.0 * m * d * d) / delta.min(1.0 / 128.0);
    let base = 25.0 * d * deg * m;
    let epsilon_max = 1.0 / (base * base * (eta * cost_inf_norm).max(68.0));
    Ok((eta_min, epsilon_max))
}

/// Objective gap between the best and second-best *distinct* integral
/// assignment values, by brute-force enumeration. Errors if the state space
/// exceeds the enumeration guard or the optimum is tied.
pub fn delta_integral_gap(
    costs: &PotentialVector,
    topo: &GraphTopology,
) -> Result<f64, BoundsError> {
    let oracle = brute_force_map(costs, topo).map_err(|err| match err {
        OracleError::TooLarge { states, guard } => BoundsError::TooLarge { states, guard },
        other => panic!("enumeration cannot fail this way: {other}"),
    })?;
    if oracle.optima_count != 1 {
        return Err(BoundsError::ZeroGap {
            count: oracle.optima_count,
        });
    }
    match oracle.second_value {
        Some(second) => Ok(oracle.best_value - second),
        None => Err(BoundsError::ZeroGap {
            count: oracle.optima_count,
        }),
    }
}

/// How the `delta` in a [`BoundsReport`] was obtained.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case", tag = "source", content = "detail")]
pub enum DeltaProvenance {
    UserSupplied,
    IntegralEnumeration,
    Unavailable(String),
}

/// Everything the theory predicts about one `(model, eta, epsilon)` triple.
/// Threshold fields are `None` when no solution gap is available.
#[derive(Debug, Clone, Serialize)]
pub struct BoundsReport {
    pub eta: f64,
    pub epsilon: f64,
    pub s: f64,
    pub s_zero: f64,
    pub max_degree: usize,
    pub cyclic_iteration_bound: u64,
    pub greedy_iteration_bound: u64,
    pub r1: f64,
    pub r_h: f64,
    pub r_convention: &'static str,
    pub delta: Option<f64>,
    pub delta_provenance: DeltaProvenance,
    pub eta_threshold_general: Option<f64>,
    pub eta_threshold_l2: Option<f64>,
    pub epsilon_max_l2: Option<f64>,
}

impl BoundsReport {
    /// Computes the full report. `delta = None` attempts brute-force
    /// enumeration and degrades gracefully (thresholds omitted) if that is
    /// unavailable; a supplied non-positive delta is an error.
    pub fn compute(
        costs: &PotentialVector,
        topo: &GraphTopology,
        eta: f64,
        epsilon: f64,
        delta: Option<f64>,
    ) -> Result<Self, BoundsError> {
        let s = compute_s(costs, topo, eta);
        let s0 = s_zero(costs, topo, eta);
        let max_degree = topo.max_degree();
        let (cyclic, greedy) = iteration_bounds(s0, epsilon, max_degree);
        let (r1, r_h) = r1_rh_for(topo);
        let (delta, provenance) = match delta {
            Some(value) => {
                if !(value > 0.0) {
                    return Err(BoundsError::NonPositiveDelta(value));
                }
                (Some(value), DeltaProvenance::UserSupplied)
            }
            None => match delta_integral_gap(costs, topo) {
                Ok(gap) => (Some(gap), DeltaProvenance::IntegralEnumeration),
                Err(err) => (None, DeltaProvenance::Unavailable(err.to_string())),
            },
        };
        let (general, l2, eps_max) = match delta {
            Some(gap) => {
                let general = eta_threshold_general(r1, r_h, gap)?;
                let (eta_min, eps_max) = thresholds_l2(topo, gap, eta, costs.inf_norm())?;
                (Some(general), Some(eta_min), Some(eps_max))
            }
            None => (None, None, None),
        };
        Ok(Self {
            eta,
            epsilon,
            s,
            s_zero: s0,
            max_degree,
            cyclic_iteration_bound: cyclic,
            greedy_iteration_bound: greedy,
            r1,
            r_h,
            r_convention: "R1 = n*d + |E|*d^2 (stored-variable count); \
                           R_H = n*ln d + |E|*ln d^2 (per-block max entropies)",
            delta,
            delta_provenance: provenance,
            eta_threshold_general: general,
            eta_threshold_l2: l2,
            epsilon_max_l2: eps_max,
        })
    }
}
