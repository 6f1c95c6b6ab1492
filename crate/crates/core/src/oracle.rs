//! Independent reference implementations used to validate the fast paths.
//!
//! Nothing here shares code with the solver: the MAP oracle enumerates
//! assignments outright, and the projection oracle solves each
//! one-dimensional dual problem by golden-section search instead of the
//! closed form. Agreement between these and the production code is what the
//! equivalence tests certify.

use thiserror::Error;

use crate::model::{Assignment, GraphTopology, PotentialVector, Side};

/// Enumeration guard: refuse state spaces beyond this many assignments.
pub const ENUMERATION_GUARD: f64 = 1e8;

#[derive(Debug, Error, PartialEq)]
pub enum OracleError {
    #[error("state space too large: {states:e} assignments exceeds the {guard:e} guard")]
    TooLarge { states: f64, guard: f64 },
    #[error("projection oracle requires strictly positive finite inputs")]
    NonPositiveInput,
}

/// Outcome of exhaustive MAP enumeration, in objective (`theta = -C`) units.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    /// First optimal assignment in enumeration order (vertex 0 is the most
    /// significant digit).
    pub best: Assignment,
    pub best_value: f64,
    /// Best objective value strictly below the optimum, if any value other
    /// than the optimum exists.
    pub second_value: Option<f64>,
    /// Number of assignments attaining the optimum (exact float equality).
    pub optima_count: usize,
}

impl OracleResult {
    pub fn unique(&self) -> bool {
        self.optima_count == 1
    }
}

/// Maximizes `sum theta_i(x_i) + sum theta_ij(x_i, x_j)` (with `theta = -C`)
/// by enumerating all `d^n` assignments with a mixed-radix odometer.
/// Correctness over speed; the guard keeps runtimes sane.
pub fn brute_force_map(
    costs: &PotentialVector,
    topo: &GraphTopology,
) -> Result<OracleResult, OracleError> {
    let n = topo.num_vertices();
    let d = topo.num_labels();
    let states = (d as f64).powi(n as i32);
    if states > ENUMERATION_GUARD {
        return Err(OracleError::TooLarge {
            states,
            guard: ENUMERATION_GUARD,
        });
    }

    let mut labels = vec![0usize; n];
    let mut best_labels = labels.clone();
    let mut best_value = f64::NEG_INFINITY;
    let mut second_value: Option<f64> = None;
    let mut optima_count = 0usize;
    loop {
        let value = objective(costs, topo, &labels);
        if value > best_value {
            if best_value.is_finite() {
                second_value = Some(match second_value {
                    Some(s) => s.max(best_value),
                    None => best_value,
                });
            }
            best_value = value;
            best_labels.copy_from_slice(&labels);
            optima_count = 1;
        } else if value == best_value {
            optima_count += 1;
        } else {
            second_value = Some(match second_value {
                Some(s) if s >= value => s,
                _ => value,
            });
        }

        // Odometer increment, last vertex fastest.
        let mut pos = n;
        loop {
            if pos == 0 {
                return Ok(OracleResult {
                    best: Assignment(best_labels),
                    best_value,
                    second_value,
                    optima_count,
                });
            }
            pos -= 1;
            labels[pos] += 1;
            if labels[pos] < d {
                break;
            }
            labels[pos] = 0;
        }
    }
}

fn objective(costs: &PotentialVector, topo: &GraphTopology, labels: &[usize]) -> f64 {
    let mut total = 0.0;
    for (v, &x) in labels.iter().enumerate() {
        total -= costs.vertex_cost(v)[x];
    }
    for (e, &(i, j)) in topo.edges().iter().enumerate() {
        total -= costs.edge_cost(e)[topo.entry(labels[i], labels[j])];
    }
    total
}

/// Golden-section minimization of a unimodal function on `[a, b]`, to a
/// bracket width of `tol`. Returns the bracket midpoint.
fn golden_section_min<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let invphi = (5.0f64.sqrt() - 1.0) / 2.0;
    let mut c = b - invphi * (b - a);
    let mut d = a + invphi * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while b - a > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - invphi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + invphi * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

/// Reference KL projection of `(gamma_edge, gamma_vertex)` onto one side's
/// consistency constraint, operating on linear-space blocks.
///
/// For each label `a` the optimal multiplier minimizes
/// `g(alpha) = m(a) e^{-alpha} + v(a) e^{alpha}` (where `m(a)` is the mass
/// of the joint's `a`-line on the given side and `v(a)` the vertex entry);
/// it is found by golden-section search on `[-50, 50]` to 1e-10 rather than
/// via the closed form `alpha = log(m/v) / 2`. The projected pair applies
/// `e^{-alpha}` to the line and `e^{alpha}` to the vertex entry.
pub fn kl_projection_oracle(
    gamma_edge: &[f64],
    gamma_vertex: &[f64],
    side: Side,
) -> Result<(Vec<f64>, Vec<f64>), OracleError> {
    let d = gamma_vertex.len();
    if gamma_edge.len() != d * d {
        return Err(OracleError::NonPositiveInput);
    }
    if gamma_edge
        .iter()
        .chain(gamma_vertex)
        .any(|&p| !(p.is_finite() && p > 0.0))
    {
        return Err(OracleError::NonPositiveInput);
    }
    let mut edge = gamma_edge.to_vec();
    let mut vertex = gamma_vertex.to_vec();
    for a in 0..d {
        let line: Vec<usize> = match side {
            Side::Row => (0..d).map(|b| a * d + b).collect(),
            Side::Col => (0..d).map(|b| b * d + a).collect(),
        };
        let mass: f64 = line.iter().map(|&k| edge[k]).sum();
        let v = vertex[a];
        let alpha = golden_section_min(
            |x| mass * (-x).exp() + v * x.exp(),
            -50.0,
            50.0,
            1e-10,
        );
        let down = (-alpha).exp();
        for &k in &line {
            edge[k] *= down;
        }
        vertex[a] *= alpha.exp();
    }
    Ok((edge, vertex))
}
