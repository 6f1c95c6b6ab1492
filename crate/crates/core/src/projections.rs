//! Closed-form Bregman projections onto single marginalization constraints,
//! with dual-variable bookkeeping.
//!
//! Each edge contributes two consistency constraints (row sums of the joint
//! must equal the row vertex's marginal; likewise for columns) and each block
//! a normalization constraint (mass 1). The KL projection onto any one of
//! these has a closed form:
//!
//! * consistency, row side: with `r(a) = sum_b Gamma_e(a, b)`, scale row `a`
//!   of the joint by `sqrt(Gamma_i(a) / r(a))` and set the vertex entry to
//!   the geometric mean `sqrt(r(a) * Gamma_i(a))`. Afterwards the row sums
//!   equal the vertex marginal exactly.
//! * normalization: divide the edge block and the side's vertex block by
//!   their total masses.
//!
//! In log storage both are additive shifts, applied here via multipliers:
//! `alpha(a) = (log r(a) - log Gamma_i(a)) / 2` is subtracted from row `a` of
//! the joint and added to the vertex entry; `xi += log mass` records each
//! normalization. [`DualState`] accumulates every shift, both in aggregated
//! per-entry form (`zeta`, so the primal is always `exp(-eta C + zeta)`) and
//! decomposed into per-constraint multipliers (`lambda`, `xi`), which the
//! solver's potential function is written in terms of. Keeping primal and
//! dual in lockstep is what the round-trip invariants test.

use thiserror::Error;

use crate::model::{GraphTopology, MarginalVector, PotentialVector, Side};

#[derive(Debug, Error, PartialEq)]
pub enum ProjectionError {
    /// A block involved in the projection has zero (or numerically vanished)
    /// mass, so the multiplier is undefined. The solver never produces this
    /// from finite costs; it guards externally constructed states.
    #[error("zero mass encountered in projection on edge {edge} ({side:?} side)")]
    ZeroMass { edge: usize, side: Side },
}

/// Dual multipliers accumulated over a run.
///
/// `lambda_row[e][a]` / `lambda_col[e][b]` are the consistency multipliers of
/// edge `e`'s two constraints; `xi_edge[e]` / `xi_vertex[v]` the normalization
/// multipliers. `zeta_*` hold the aggregated per-entry sums, maintained
/// incrementally alongside the primal so that
/// `log Gamma = -eta * C + zeta` at all times, and `zeta` itself equals its
/// (lambda, xi) decomposition:
///
/// * edge entry `(a, b)`: `zeta_e(a,b) = -lambda_row[e][a] - lambda_col[e][b] - xi_edge[e]`
/// * vertex entry `a`: `zeta_v(a) = -xi_vertex[v] + sum_{e: v row} lambda_row[e][a] + sum_{e: v col} lambda_col[e][a]`
#[derive(Debug, Clone, PartialEq)]
pub struct DualState {
    lambda_row: Vec<Vec<f64>>,
    lambda_col: Vec<Vec<f64>>,
    xi_edge: Vec<f64>,
    xi_vertex: Vec<f64>,
    zeta_vertex: Vec<Vec<f64>>,
    zeta_edge: Vec<Vec<f64>>,
}

impl DualState {
    /// All-zero multipliers (matches a raw `Gamma = exp(-eta C)` primal).
    pub fn zeros(topo: &GraphTopology) -> Self {
        let d = topo.num_labels();
        Self {
            lambda_row: vec![vec![0.0; d]; topo.num_edges()],
            lambda_col: vec![vec![0.0; d]; topo.num_edges()],
            xi_edge: vec![0.0; topo.num_edges()],
            xi_vertex: vec![0.0; topo.num_vertices()],
            zeta_vertex: vec![vec![0.0; d]; topo.num_vertices()],
            zeta_edge: vec![vec![0.0; d * d]; topo.num_edges()],
        }
    }

    pub fn lambda_row(&self, e: usize) -> &[f64] {
        &self.lambda_row[e]
    }

    pub fn lambda_col(&self, e: usize) -> &[f64] {
        &self.lambda_col[e]
    }

    pub fn xi_edge(&self, e: usize) -> f64 {
        self.xi_edge[e]
    }

    pub fn xi_vertex(&self, v: usize) -> f64 {
        self.xi_vertex[v]
    }

    pub fn zeta_vertex(&self, v: usize) -> &[f64] {
        &self.zeta_vertex[v]
    }

    pub fn zeta_edge(&self, e: usize) -> &[f64] {
        &self.zeta_edge[e]
    }

    /// Sum of all normalization multipliers (a term of the potential).
    pub fn xi_sum(&self) -> f64 {
        self.xi_edge.iter().sum::<f64>() + self.xi_vertex.iter().sum::<f64>()
    }

    /// Records a whole-block normalization of vertex `v` by `log_mass`
    /// (used at initialization): `xi` absorbs the mass, every `zeta` entry
    /// drops by it.
    pub(crate) fn add_xi_vertex(&mut self, v: usize, log_mass: f64) {
        self.xi_vertex[v] += log_mass;
        for z in &mut self.zeta_vertex[v] {
            *z -= log_mass;
        }
    }

    /// Edge-block analogue of [`DualState::add_xi_vertex`].
    pub(crate) fn add_xi_edge(&mut self, e: usize, log_mass: f64) {
        self.xi_edge[e] += log_mass;
        for z in &mut self.zeta_edge[e] {
            *z -= log_mass;
        }
    }

    /// True if every multiplier is finite.
    pub fn all_finite(&self) -> bool {
        self.lambda_row
            .iter()
            .chain(self.lambda_col.iter())
            .chain(self.zeta_vertex.iter())
            .chain(self.zeta_edge.iter())
            .all(|b| b.iter().all(|x| x.is_finite()))
            && self.xi_edge.iter().chain(self.xi_vertex.iter()).all(|x| x.is_finite())
    }
}

/// Squared Hellinger distance `0.5 * sum (sqrt(p) - sqrt(q))^2`, defined for
/// arbitrary nonnegative vectors (not just distributions).
pub fn hellinger_sq(p: &[f64], q: &[f64]) -> f64 {
    debug_assert_eq!(p.len(), q.len());
    0.5 * p
        .iter()
        .zip(q)
        .map(|(&a, &b)| {
            let diff = a.sqrt() - b.sqrt();
            diff * diff
        })
        .sum::<f64>()
}

/// Projects edge `e` onto its row-side consistency constraint and updates the
/// duals. Afterwards the joint's row sums equal the row vertex's marginal (up
/// to roundoff).
pub fn project_left_consistency(
    gamma: &mut MarginalVector,
    dual: &mut DualState,
    topo: &GraphTopology,
    e: usize,
) -> Result<(), ProjectionError> {
    project_consistency(gamma, dual, topo, e, Side::Row)
}

/// Row-side normalization: rescales edge `e`'s joint and its row vertex to
/// unit mass, recording both log-masses in `xi`.
pub fn project_left_normalization(
    gamma: &mut MarginalVector,
    dual: &mut DualState,
    topo: &GraphTopology,
    e: usize,
) -> Result<(), ProjectionError> {
    project_normalization(gamma, dual, topo, e, Side::Row)
}

/// Column-side analogue of [`project_left_consistency`].
pub fn project_right_consistency(
    gamma: &mut MarginalVector,
    dual: &mut DualState,
    topo: &GraphTopology,
    e: usize,
) -> Result<(), ProjectionError> {
    project_consistency(gamma, dual, topo, e, Side::Col)
}

/// Column-side analogue of [`project_left_normalization`].
pub fn project_right_normalization(
    gamma: &mut MarginalVector,
    dual: &mut DualState,
    topo: &GraphTopology,
    e: usize,
) -> Result<(), ProjectionError> {
    project_normalization(gamma, dual, topo, e, Side::Col)
}

/// Dispatches a consistency or normalization projection by `(side, kind)`.
pub fn project_consistency(
    gamma: &mut MarginalVector,
    dual: &mut DualState,
    topo: &GraphTopology,
    e: usize,
    side: Side,
) -> Result<(), ProjectionError> {
    let d = topo.num_labels();
    let (i, j) = topo.endpoints(e);
    let (vertex, sums) = match side {
        Side::Row => (i, gamma.edge_row_log_sums(e)),
        Side::Col => (j, gamma.edge_col_log_sums(e)),
    };
    // alpha(a) = (log r(a) - log Gamma_v(a)) / 2. Subtracting it from the
    // joint's a-th line and adding it to the vertex entry lands both on the
    // geometric mean.
    let mut alpha = vec![0.0; d];
    for a in 0..d {
        let al = 0.5 * (sums[a] - gamma.vertex_log(vertex)[a]);
        if !al.is_finite() {
            return Err(ProjectionError::ZeroMass { edge: e, side });
        }
        alpha[a] = al;
    }
    {
        let block = gamma.edge_log_mut(e);
        let zeta = &mut dual.zeta_edge[e];
        for a in 0..d {
            for b in 0..d {
                let k = match side {
                    Side::Row => a * d + b,
                    Side::Col => b * d + a,
                };
                block[k] -= alpha[a];
                zeta[k] -= alpha[a];
            }
        }
    }
    let vblock = gamma.vertex_log_mut(vertex);
    let vzeta = &mut dual.zeta_vertex[vertex];
    let lambda = match side {
        Side::Row => &mut dual.lambda_row[e],
        Side::Col => &mut dual.lambda_col[e],
    };
    for a in 0..d {
        vblock[a] += alpha[a];
        vzeta[a] += alpha[a];
        lambda[a] += alpha[a];
    }
    Ok(())
}

/// Normalizes edge `e`'s joint and the `side` vertex's marginal to unit mass.
pub fn project_normalization(
    gamma: &mut MarginalVector,
    dual: &mut DualState,
    topo: &GraphTopology,
    e: usize,
    side: Side,
) -> Result<(), ProjectionError> {
    let (i, j) = topo.endpoints(e);
    let vertex = match side {
        Side::Row => i,
        Side::Col => j,
    };
    let edge_log_mass = crate::numeric::log_sum_exp(gamma.edge_log(e));
    let vertex_log_mass = crate::numeric::log_sum_exp(gamma.vertex_log(vertex));
    if !edge_log_mass.is_finite() || !vertex_log_mass.is_finite() {
        return Err(ProjectionError::ZeroMass { edge: e, side });
    }
    for (l, z) in gamma
        .edge_log_mut(e)
        .iter_mut()
        .zip(dual.zeta_edge[e].iter_mut())
    {
        *l -= edge_log_mass;
        *z -= edge_log_mass;
    }
    for (l, z) in gamma
        .vertex_log_mut(vertex)
        .iter_mut()
        .zip(dual.zeta_vertex[vertex].iter_mut())
    {
        *l -= vertex_log_mass;
        *z -= vertex_log_mass;
    }
    dual.xi_edge[e] += edge_log_mass;
    dual.xi_vertex[vertex] += vertex_log_mass;
    Ok(())
}

/// Largest absolute gap between the stored log-marginals and their dual
/// reconstruction `-eta * C + zeta`, over every entry.
pub fn max_reconstruction_residual(
    gamma: &MarginalVector,
    dual: &DualState,
    costs: &PotentialVector,
    topo: &GraphTopology,
    eta: f64,
) -> f64 {
    let mut worst = 0.0f64;
    for v in 0..topo.num_vertices() {
        for (k, &l) in gamma.vertex_log(v).iter().enumerate() {
            let rec = -eta * costs.vertex_cost(v)[k] + dual.zeta_vertex[v][k];
            worst = worst.max((l - rec).abs());
        }
    }
    for e in 0..topo.num_edges() {
        for (k, &l) in gamma.edge_log(e).iter().enumerate() {
            let rec = -eta * costs.edge_cost(e)[k] + dual.zeta_edge[e][k];
            worst = worst.max((l - rec).abs());
        }
    }
    worst
}

/// Largest absolute gap between the aggregated `zeta` and its `(lambda, xi)`
/// decomposition, over every entry.
pub fn max_decomposition_residual(dual: &DualState, topo: &GraphTopology) -> f64 {
    let d = topo.num_labels();
    let mut worst = 0.0f64;
    for e in 0..topo.num_edges() {
        for a in 0..d {
            for b in 0..d {
                let assembled = -dual.lambda_row[e][a] - dual.lambda_col[e][b] - dual.xi_edge[e];
                worst = worst.max((dual.zeta_edge[e][a * d + b] - assembled).abs());
            }
        }
    }
    for v in 0..topo.num_vertices() {
        for a in 0..d {
            let mut assembled = -dual.xi_vertex[v];
            for &e in topo.row_edges(v) {
                assembled += dual.lambda_row[e][a];
            }
            for &e in topo.col_edges(v) {
                assembled += dual.lambda_col[e][a];
            }
            worst = worst.max((dual.zeta_vertex[v][a] - assembled).abs());
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::GraphTopology;

    fn single_edge(d: usize) -> GraphTopology {
        GraphTopology::new(2, d, vec![(0, 1)]).unwrap()
    }

    #[test]
    fn hellinger_known_value() {
        // h^2([1,0], [1/2,1/2]) = 1 - sqrt(2)/2.
        let expected = 1.0 - 2.0f64.sqrt() / 2.0;
        assert!((hellinger_sq(&[1.0, 0.0], &[0.5, 0.5]) - expected).abs() < 1e-15);
        assert_eq!(hellinger_sq(&[0.3, 0.7], &[0.3, 0.7]), 0.0);
    }

    #[test]
    fn left_consistency_matches_closed_form() {
        // Joint [[0.4, 0.2], [0.1, 0.3]], vertex (0.5, 0.5): row sums are
        // (0.6, 0.4), so the projected vertex is (sqrt(0.30), sqrt(0.20)) and
        // row a of the joint is scaled by sqrt(0.5 / r(a)).
        let topo = single_edge(2);
        let mut gamma = MarginalVector::from_linear(
            2,
            &[vec![0.5, 0.5], vec![0.5, 0.5]],
            &[vec![0.4, 0.2, 0.1, 0.3]],
        );
        let mut dual = DualState::zeros(&topo);
        project_left_consistency(&mut gamma, &mut dual, &topo, 0).unwrap();

        let v = gamma.vertex_dist(0);
        assert!((v[0] - 0.30f64.sqrt()).abs() < 1e-12);
        assert!((v[1] - 0.20f64.sqrt()).abs() < 1e-12);

        let joint = gamma.edge_joint(0);
        let s0 = (0.5f64 / 0.6).sqrt();
        let s1 = (0.5f64 / 0.4).sqrt();
        for (k, expected) in [0.4 * s0, 0.2 * s0, 0.1 * s1, 0.3 * s1].iter().enumerate() {
            assert!((joint[k] - expected).abs() < 1e-12, "entry {k}");
        }

        // Geometric-mean postcondition: row sums now equal the vertex block.
        let rows = gamma.edge_row_log_sums(0);
        for a in 0..2 {
            assert!((rows[a].exp() - v[a]).abs() < 1e-12);
        }

        // Dual bookkeeping: lambda_row picked up alpha = (log r - log v)/2.
        let a0 = 0.5 * (0.6f64.ln() - 0.5f64.ln());
        assert!((dual.lambda_row(0)[0] - a0).abs() < 1e-12);
        assert_eq!(dual.lambda_col(0), &[0.0, 0.0]);
    }

    #[test]
    fn right_consistency_mirrors_left() {
        let topo = single_edge(2);
        let mut gamma = MarginalVector::from_linear(
            2,
            &[vec![0.5, 0.5], vec![0.25, 0.75]],
            &[vec![0.4, 0.2, 0.1, 0.3]],
        );
        let mut dual = DualState::zeros(&topo);
        project_right_consistency(&mut gamma, &mut dual, &topo, 0).unwrap();
        // Column sums were (0.5, 0.5); projected vertex 1 entry b is
        // sqrt(c(b) * v(b)).
        let v = gamma.vertex_dist(1);
        assert!((v[0] - (0.5f64 * 0.25).sqrt()).abs() < 1e-12);
        assert!((v[1] - (0.5f64 * 0.75).sqrt()).abs() < 1e-12);
        let cols = gamma.edge_col_log_sums(0);
        for b in 0..2 {
            assert!((cols[b].exp() - v[b]).abs() < 1e-12);
        }
        assert_eq!(dual.lambda_row(0), &[0.0, 0.0]);
    }

    #[test]
    fn normalization_rescales_and_records_xi() {
        let topo = single_edge(2);
        let mut gamma = MarginalVector::from_linear(
            2,
            &[vec![1.0, 3.0], vec![0.5, 0.5]],
            &[vec![2.0, 2.0, 2.0, 2.0]],
        );
        let mut dual = DualState::zeros(&topo);
        project_left_normalization(&mut gamma, &mut dual, &topo, 0).unwrap();
        assert!((gamma.vertex_mass(0) - 1.0).abs() < 1e-12);
        assert!((gamma.edge_mass(0) - 1.0).abs() < 1e-12);
        // Ratios within a block are preserved.
        let v = gamma.vertex_dist(0);
        assert!((v[1] / v[0] - 3.0).abs() < 1e-12);
        assert!((dual.xi_edge(0) - 8.0f64.ln()).abs() < 1e-12);
        assert!((dual.xi_vertex(0) - 4.0f64.ln()).abs() < 1e-12);
        // Vertex 1 untouched by the left-side normalization.
        assert_eq!(dual.xi_vertex(1), 0.0);
    }

    #[test]
    fn duals_reconstruct_primal_after_projection_chain() {
        let topo = GraphTopology::new(3, 3, vec![(0, 1), (0, 2), (1, 2)]).unwrap();
        let mut costs = crate::model::PotentialVector::zeros(&topo);
        // Arbitrary fixed costs.
        for v in 0..3 {
            for x in 0..3 {
                costs.vertex_cost_mut(v)[x] = ((v * 3 + x) as f64 * 0.37).sin() * 0.5;
            }
        }
        for e in 0..3 {
            for k in 0..9 {
                costs.edge_cost_mut(e)[k] = ((e * 9 + k) as f64 * 0.73).cos() * 0.4;
            }
        }
        let eta = 3.0;
        let (mut gamma, mut dual) = crate::solver::initialize(&costs, &topo, eta);
        for e in 0..3 {
            project_left_consistency(&mut gamma, &mut dual, &topo, e).unwrap();
            project_left_normalization(&mut gamma, &mut dual, &topo, e).unwrap();
            project_right_consistency(&mut gamma, &mut dual, &topo, e).unwrap();
            project_right_normalization(&mut gamma, &mut dual, &topo, e).unwrap();
        }
        assert!(max_reconstruction_residual(&gamma, &dual, &costs, &topo, eta) < 1e-12);
        assert!(max_decomposition_residual(&dual, &topo) < 1e-12);
    }

    #[test]
    fn zero_mass_is_an_error_not_a_clamp() {
        let topo = single_edge(2);
        let mut gamma = MarginalVector::from_linear(
            2,
            &[vec![0.0, 1.0], vec![0.5, 0.5]],
            &[vec![0.25, 0.25, 0.25, 0.25]],
        );
        let mut dual = DualState::zeros(&topo);
        let err = project_left_consistency(&mut gamma, &mut dual, &topo, 0).unwrap_err();
        assert_eq!(
            err,
            ProjectionError::ZeroMass {
                edge: 0,
                side: Side::Row
            }
        );
    }
}
