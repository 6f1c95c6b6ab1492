//! Core model types: graph topology, cost potentials, and marginal vectors.
//!
//! A model is a pairwise discrete graphical model: `n` vertices each taking
//! one of `d` labels, and an edge list of unordered pairs. Costs are stored
//! per vertex (length-`d` vectors) and per edge (`d x d` matrices, flattened
//! row-major with the row indexed by the lower-numbered endpoint's label).
//! MAP inference maximizes `sum theta_i(x_i) + sum theta_ij(x_i, x_j)` with
//! `theta = -C`; everything downstream works with the cost vector `C`.
//!
//! The relaxation this crate solves keeps one probability vector per vertex
//! and one joint matrix per edge, tied together by marginalization
//! constraints (each edge matrix's row sums must match the row vertex's
//! distribution, column sums the column vertex's). [`MarginalVector`] stores
//! all of these blocks as logarithms so that sharply peaked iterates
//! (large regularization) never underflow; consumers convert to linear
//! probabilities only for diagnostics such as constraint violations.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numeric::{log_sum_exp, log_sum_exp_iter};

/// Errors raised while assembling or validating a model.
#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("vertex {0} is isolated (every vertex must appear in at least one edge)")]
    IsolatedVertex(usize),
    #[error("non-finite cost at {0}")]
    NonFiniteCost(String),
    #[error("duplicate edge ({0}, {1})")]
    DuplicateEdge(usize, usize),
    #[error("edge ({0}, {1}) is not ordered with i < j")]
    UnorderedEdge(usize, usize),
    #[error("edge ({0}, {1}) references a vertex out of range")]
    VertexOutOfRange(usize, usize),
}

/// Which side of an edge a constraint or projection refers to: `Row` is the
/// lower-numbered endpoint (it indexes the rows of the edge matrix), `Col`
/// the higher-numbered one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Side {
    Row,
    Col,
}

/// Vertex and edge structure of a model.
///
/// Edges are held in canonical order: each pair satisfies `i < j` and the
/// list is sorted lexicographically. Per-vertex incidence lists are derived
/// at construction so that solvers can walk "edges where this vertex is the
/// row endpoint" and "... the column endpoint" without rescanning.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphTopology {
    n: usize,
    d: usize,
    edges: Vec<(usize, usize)>,
    row_edges: Vec<Vec<usize>>,
    col_edges: Vec<Vec<usize>>,
}

impl GraphTopology {
    /// Builds a topology from an edge list. Pairs must satisfy `i < j`; the
    /// list may arrive in any order and is sorted into canonical form.
    /// Requires `n >= 2`, `d >= 2`, no duplicates, and no isolated vertex.
    pub fn new(n: usize, d: usize, mut edges: Vec<(usize, usize)>) -> Result<Self, ModelError> {
        if n < 2 {
            return Err(ModelError::DimensionMismatch(format!(
                "need at least 2 vertices, got {n}"
            )));
        }
        if d < 2 {
            return Err(ModelError::DimensionMismatch(format!(
                "need at least 2 labels, got {d}"
            )));
        }
        for &(i, j) in &edges {
            if i >= n || j >= n {
                return Err(ModelError::VertexOutOfRange(i, j));
            }
            if i >= j {
                return Err(ModelError::UnorderedEdge(i, j));
            }
        }
        edges.sort_unstable();
        for w in edges.windows(2) {
            if w[0] == w[1] {
                return Err(ModelError::DuplicateEdge(w[0].0, w[0].1));
            }
        }
        let mut row_edges = vec![Vec::new(); n];
        let mut col_edges = vec![Vec::new(); n];
        for (e, &(i, j)) in edges.iter().enumerate() {
            row_edges[i].push(e);
            col_edges[j].push(e);
        }
        for v in 0..n {
            if row_edges[v].is_empty() && col_edges[v].is_empty() {
                return Err(ModelError::IsolatedVertex(v));
            }
        }
        Ok(Self {
            n,
            d,
            edges,
            row_edges,
            col_edges,
        })
    }

    pub fn num_vertices(&self) -> usize {
        self.n
    }

    pub fn num_labels(&self) -> usize {
        self.d
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    /// Endpoints of edge `e` as `(row vertex, col vertex)` with row < col.
    pub fn endpoints(&self, e: usize) -> (usize, usize) {
        self.edges[e]
    }

    /// Edges in which `v` is the row (lower-numbered) endpoint.
    pub fn row_edges(&self, v: usize) -> &[usize] {
        &self.row_edges[v]
    }

    /// Edges in which `v` is the column (higher-numbered) endpoint.
    pub fn col_edges(&self, v: usize) -> &[usize] {
        &self.col_edges[v]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.row_edges[v].len() + self.col_edges[v].len()
    }

    pub fn max_degree(&self) -> usize {
        (0..self.n).map(|v| self.degree(v)).max().unwrap_or(0)
    }

    /// Flattened index of entry `(x_row, x_col)` in a `d x d` edge block.
    #[inline]
    pub fn entry(&self, x_row: usize, x_col: usize) -> usize {
        x_row * self.d + x_col
    }
}

/// Cost potentials `C`: one length-`d` vector per vertex and one flattened
/// `d x d` matrix per edge (row = lower endpoint's label).
#[derive(Debug, Clone, PartialEq)]
pub struct PotentialVector {
    vertex: Vec<Vec<f64>>,
    edge: Vec<Vec<f64>>,
}

impl PotentialVector {
    pub fn new(vertex: Vec<Vec<f64>>, edge: Vec<Vec<f64>>) -> Self {
        Self { vertex, edge }
    }

    /// All-zero costs shaped for `topo` (useful as a neutral baseline).
    pub fn zeros(topo: &GraphTopology) -> Self {
        Self {
            vertex: vec![vec![0.0; topo.num_labels()]; topo.num_vertices()],
            edge: vec![vec![0.0; topo.num_labels() * topo.num_labels()]; topo.num_edges()],
        }
    }

    pub fn vertex_cost(&self, v: usize) -> &[f64] {
        &self.vertex[v]
    }

    pub fn edge_cost(&self, e: usize) -> &[f64] {
        &self.edge[e]
    }

    pub fn vertex_cost_mut(&mut self, v: usize) -> &mut [f64] {
        &mut self.vertex[v]
    }

    pub fn edge_cost_mut(&mut self, e: usize) -> &mut [f64] {
        &mut self.edge[e]
    }

    /// Largest absolute cost entry across all blocks.
    pub fn inf_norm(&self) -> f64 {
        self.vertex
            .iter()
            .chain(self.edge.iter())
            .flat_map(|block| block.iter())
            .fold(0.0f64, |acc, &c| acc.max(c.abs()))
    }

    /// Total cost of an assignment, `sum C_i(x_i) + sum C_ij(x_i, x_j)`.
    /// The MAP objective is the negation of this.
    pub fn cost_of(&self, topo: &GraphTopology, assignment: &Assignment) -> f64 {
        let labels = assignment.labels();
        let mut total = 0.0;
        for (v, &x) in labels.iter().enumerate() {
            total += self.vertex[v][x];
        }
        for (e, &(i, j)) in topo.edges().iter().enumerate() {
            total += self.edge[e][topo.entry(labels[i], labels[j])];
        }
        total
    }

    /// MAP objective `sum theta = -cost_of`.
    pub fn theta_objective(&self, topo: &GraphTopology, assignment: &Assignment) -> f64 {
        -self.cost_of(topo, assignment)
    }
}

/// Checks that `costs` is shaped for `topo` and contains only finite values.
/// Topology structure (index bounds, ordering, duplicates, isolation) is
/// enforced by [`GraphTopology::new`]; this re-checks the cost side.
pub fn validate_model(topo: &GraphTopology, costs: &PotentialVector) -> Result<(), ModelError> {
    let (n, d, m) = (topo.num_vertices(), topo.num_labels(), topo.num_edges());
    if costs.vertex.len() != n {
        return Err(ModelError::DimensionMismatch(format!(
            "expected {n} vertex cost vectors, got {}",
            costs.vertex.len()
        )));
    }
    if costs.edge.len() != m {
        return Err(ModelError::DimensionMismatch(format!(
            "expected {m} edge cost matrices, got {}",
            costs.edge.len()
        )));
    }
    for (v, block) in costs.vertex.iter().enumerate() {
        if block.len() != d {
            return Err(ModelError::DimensionMismatch(format!(
                "vertex {v} cost vector has length {}, expected {d}",
                block.len()
            )));
        }
        for (x, &c) in block.iter().enumerate() {
            if !c.is_finite() {
                return Err(ModelError::NonFiniteCost(format!("vertex {v}, label {x}")));
            }
        }
    }
    for (e, block) in costs.edge.iter().enumerate() {
        if block.len() != d * d {
            return Err(ModelError::DimensionMismatch(format!(
                "edge {e} cost matrix has {} entries, expected {}",
                block.len(),
                d * d
            )));
        }
        for (k, &c) in block.iter().enumerate() {
            if !c.is_finite() {
                return Err(ModelError::NonFiniteCost(format!(
                    "edge {e}, entry ({}, {})",
                    k / d,
                    k % d
                )));
            }
        }
    }
    Ok(())
}

/// Pseudo-marginals over the relaxation's feasible set, stored in log space.
///
/// One log-probability vector per vertex and one flattened log-joint per
/// edge. Blocks are kept individually normalized by the solver (mass 1), but
/// the type itself allows arbitrary finite log values so that projection
/// intermediates are representable.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginalVector {
    d: usize,
    vertex_log: Vec<Vec<f64>>,
    edge_log: Vec<Vec<f64>>,
}

impl MarginalVector {
    /// Uniform distributions on every block.
    pub fn uniform(topo: &GraphTopology) -> Self {
        let d = topo.num_labels();
        let v = -(d as f64).ln();
        let e = -((d * d) as f64).ln();
        Self {
            d,
            vertex_log: vec![vec![v; d]; topo.num_vertices()],
            edge_log: vec![vec![e; d * d]; topo.num_edges()],
        }
    }

    /// Builds from linear-space blocks (entries must be nonnegative; zeros
    /// map to `-inf` logs). Shapes are the caller's responsibility.
    pub fn from_linear(d: usize, vertex: &[Vec<f64>], edge: &[Vec<f64>]) -> Self {
        Self {
            d,
            vertex_log: vertex
                .iter()
                .map(|b| b.iter().map(|&p| p.ln()).collect())
                .collect(),
            edge_log: edge
                .iter()
                .map(|b| b.iter().map(|&p| p.ln()).collect())
                .collect(),
        }
    }

    pub fn from_logs(d: usize, vertex_log: Vec<Vec<f64>>, edge_log: Vec<Vec<f64>>) -> Self {
        Self {
            d,
            vertex_log,
            edge_log,
        }
    }

    pub fn num_labels(&self) -> usize {
        self.d
    }

    pub fn vertex_log(&self, v: usize) -> &[f64] {
        &self.vertex_log[v]
    }

    pub fn edge_log(&self, e: usize) -> &[f64] {
        &self.edge_log[e]
    }

    pub(crate) fn vertex_log_mut(&mut self, v: usize) -> &mut [f64] {
        &mut self.vertex_log[v]
    }

    pub(crate) fn edge_log_mut(&mut self, e: usize) -> &mut [f64] {
        &mut self.edge_log[e]
    }

    /// Linear-space distribution of vertex `v`.
    pub fn vertex_dist(&self, v: usize) -> Vec<f64> {
        self.vertex_log[v].iter().map(|&l| l.exp()).collect()
    }

    /// Linear-space joint of edge `e` (flattened row-major).
    pub fn edge_joint(&self, e: usize) -> Vec<f64> {
        self.edge_log[e].iter().map(|&l| l.exp()).collect()
    }

    /// Log of the row sums of edge `e`: `log sum_xj Gamma_e(x_row, x_j)`.
    pub fn edge_row_log_sums(&self, e: usize) -> Vec<f64> {
        let d = self.d;
        let block = &self.edge_log[e];
        (0..d)
            .map(|x| log_sum_exp(&block[x * d..(x + 1) * d]))
            .collect()
    }

    /// Log of the column sums of edge `e`.
    pub fn edge_col_log_sums(&self, e: usize) -> Vec<f64> {
        let d = self.d;
        let block = &self.edge_log[e];
        (0..d)
            .map(|x| log_sum_exp_iter(block.iter().skip(x).step_by(d).copied()))
            .collect()
    }

    /// Total linear mass of a vertex block.
    pub fn vertex_mass(&self, v: usize) -> f64 {
        log_sum_exp(&self.vertex_log[v]).exp()
    }

    /// Total linear mass of an edge block.
    pub fn edge_mass(&self, e: usize) -> f64 {
        log_sum_exp(&self.edge_log[e]).exp()
    }

    /// Largest deviation of any block's mass from 1.
    pub fn max_normalization_error(&self, topo: &GraphTopology) -> f64 {
        let mut worst = 0.0f64;
        for v in 0..topo.num_vertices() {
            worst = worst.max((self.vertex_mass(v) - 1.0).abs());
        }
        for e in 0..topo.num_edges() {
            worst = worst.max((self.edge_mass(e) - 1.0).abs());
        }
        worst
    }

    /// True if every stored log value is finite (no overflow/underflow/NaN).
    pub fn all_finite(&self) -> bool {
        self.vertex_log
            .iter()
            .chain(self.edge_log.iter())
            .all(|b| b.iter().all(|l| l.is_finite()))
    }
}

/// l1 violations of the two marginalization constraints of edge `e`:
/// `(|row sums - Gamma_row|_1, |col sums - Gamma_col|_1)`, computed in
/// linear space.
pub fn edge_violations(gamma: &MarginalVector, topo: &GraphTopology, e: usize) -> (f64, f64) {
    let (i, j) = topo.endpoints(e);
    let row = gamma
        .edge_row_log_sums(e)
        .iter()
        .zip(gamma.vertex_log(i))
        .map(|(&s, &v)| (s.exp() - v.exp()).abs())
        .sum();
    let col = gamma
        .edge_col_log_sums(e)
        .iter()
        .zip(gamma.vertex_log(j))
        .map(|(&s, &v)| (s.exp() - v.exp()).abs())
        .sum();
    (row, col)
}

/// Largest constraint violation over all `(edge, side)` pairs, with the
/// winner reported. Ties resolve to the smallest edge index, then to the row
/// side, which keeps every solver variant deterministic.
pub fn max_violation(gamma: &MarginalVector, topo: &GraphTopology) -> (f64, usize, Side) {
    let mut best = (f64::NEG_INFINITY, 0, Side::Row);
    for e in 0..topo.num_edges() {
        let (row, col) = edge_violations(gamma, topo, e);
        // Strict > keeps the earliest candidate on ties; row is offered first.
        if row > best.0 {
            best = (row, e, Side::Row);
        }
        if col > best.0 {
            best = (col, e, Side::Col);
        }
    }
    best
}

/// Signed marginalization residuals, one length-`d` vector per `(edge, side)`.
/// Diagnostic only: when both blocks of an edge are individually normalized,
/// each residual vector sums to zero (mass 1 minus mass 1).
#[derive(Debug, Clone, PartialEq)]
pub struct SlackVector {
    row: Vec<Vec<f64>>,
    col: Vec<Vec<f64>>,
}

impl SlackVector {
    pub fn from_marginals(gamma: &MarginalVector, topo: &GraphTopology) -> Self {
        let mut row = Vec::with_capacity(topo.num_edges());
        let mut col = Vec::with_capacity(topo.num_edges());
        for e in 0..topo.num_edges() {
            let (i, j) = topo.endpoints(e);
            row.push(
                gamma
                    .edge_row_log_sums(e)
                    .iter()
                    .zip(gamma.vertex_log(i))
                    .map(|(&s, &v)| s.exp() - v.exp())
                    .collect(),
            );
            col.push(
                gamma
                    .edge_col_log_sums(e)
                    .iter()
                    .zip(gamma.vertex_log(j))
                    .map(|(&s, &v)| s.exp() - v.exp())
                    .collect(),
            );
        }
        Self { row, col }
    }

    pub fn row_slack(&self, e: usize) -> &[f64] {
        &self.row[e]
    }

    pub fn col_slack(&self, e: usize) -> &[f64] {
        &self.col[e]
    }

    /// Largest absolute sum of any single slack vector.
    pub fn max_abs_sum(&self) -> f64 {
        self.row
            .iter()
            .chain(self.col.iter())
            .map(|s| s.iter().sum::<f64>().abs())
            .fold(0.0, f64::max)
    }
}

/// A full labeling of the vertices.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Assignment(pub Vec<usize>);

impl Assignment {
    pub fn labels(&self) -> &[usize] {
        &self.0
    }

    /// Fraction of vertices on which the two assignments disagree.
    pub fn normalized_hamming(&self, other: &Assignment) -> f64 {
        assert_eq!(self.0.len(), other.0.len());
        let diff = self
            .0
            .iter()
            .zip(&other.0)
            .filter(|(a, b)| a != b)
            .count();
        diff as f64 / self.0.len() as f64
    }
}

/// On-disk model format.
///
/// ```json
/// {
///   "n": 2, "d": 2,
///   "edges": [[0, 1]],
///   "vertex_costs": [[0.0, 0.0], [0.0, 0.0]],
///   "edge_costs": [[[0.0, 1.0], [1.0, 1.0]]]
/// }
/// ```
///
/// `edge_costs[e][a][b]` is the cost of the lower-numbered endpoint taking
/// label `a` and the higher-numbered endpoint label `b`. Edges may appear in
/// any order (each pair must satisfy `i < j`); loading sorts edges and their
/// cost matrices together into canonical order.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelFile {
    pub n: usize,
    pub d: usize,
    pub edges: Vec<[usize; 2]>,
    pub vertex_costs: Vec<Vec<f64>>,
    pub edge_costs: Vec<Vec<Vec<f64>>>,
}

impl ModelFile {
    /// Validates and converts into solver-ready types.
    pub fn into_model(self) -> Result<(GraphTopology, PotentialVector), ModelError> {
        if self.edge_costs.len() != self.edges.len() {
            return Err(ModelError::DimensionMismatch(format!(
                "{} edges but {} edge cost matrices",
                self.edges.len(),
                self.edge_costs.len()
            )));
        }
        // Keep each cost matrix attached to its edge while sorting into
        // canonical order.
        let mut paired: Vec<([usize; 2], Vec<Vec<f64>>)> =
            self.edges.into_iter().zip(self.edge_costs).collect();
        paired.sort_by_key(|(pair, _)| *pair);
        let edges: Vec<(usize, usize)> = paired.iter().map(|(p, _)| (p[0], p[1])).collect();
        let topo = GraphTopology::new(self.n, self.d, edges)?;
        let edge_costs = paired
            .into_iter()
            .map(|(_, rows)| {
                let d = self.d;
                if rows.len() != d || rows.iter().any(|r| r.len() != d) {
                    return Err(ModelError::DimensionMismatch(
                        "edge cost matrix is not d x d".to_string(),
                    ));
                }
                Ok(rows.into_iter().flatten().collect::<Vec<f64>>())
            })
            .collect::<Result<Vec<_>, _>>()?;
        let costs = PotentialVector::new(self.vertex_costs, edge_costs);
        validate_model(&topo, &costs)?;
        Ok((topo, costs))
    }

    /// Inverse of [`ModelFile::into_model`], for writing generated instances.
    pub fn from_model(topo: &GraphTopology, costs: &PotentialVector) -> Self {
        let d = topo.num_labels();
        Self {
            n: topo.num_vertices(),
            d,
            edges: topo.edges().iter().map(|&(i, j)| [i, j]).collect(),
            vertex_costs: (0..topo.num_vertices())
                .map(|v| costs.vertex_cost(v).to_vec())
                .collect(),
            edge_costs: (0..topo.num_edges())
                .map(|e| {
                    (0..d)
                        .map(|a| costs.edge_cost(e)[a * d..(a + 1) * d].to_vec())
                        .collect()
                })
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single_edge_topo(d: usize) -> GraphTopology {
        GraphTopology::new(2, d, vec![(0, 1)]).unwrap()
    }

    #[test]
    fn topology_rejects_bad_input() {
        assert!(matches!(
            GraphTopology::new(1, 2, vec![]),
            Err(ModelError::DimensionMismatch(_))
        ));
        assert!(matches!(
            GraphTopology::new(2, 1, vec![(0, 1)]),
            Err(ModelError::DimensionMismatch(_))
        ));
        assert_eq!(
            GraphTopology::new(3, 2, vec![(0, 1), (1, 0)]),
            Err(ModelError::UnorderedEdge(1, 0))
        );
        assert_eq!(
            GraphTopology::new(3, 2, vec![(0, 1), (0, 1), (1, 2)]),
            Err(ModelError::DuplicateEdge(0, 1))
        );
        assert_eq!(
            GraphTopology::new(3, 2, vec![(0, 1)]),
            Err(ModelError::IsolatedVertex(2))
        );
        assert_eq!(
            GraphTopology::new(2, 2, vec![(0, 5)]),
            Err(ModelError::VertexOutOfRange(0, 5))
        );
    }

    #[test]
    fn topology_sorts_edges_and_builds_incidence() {
        let topo = GraphTopology::new(3, 2, vec![(1, 2), (0, 2), (0, 1)]).unwrap();
        assert_eq!(topo.edges(), &[(0, 1), (0, 2), (1, 2)]);
        assert_eq!(topo.row_edges(0), &[0, 1]);
        assert_eq!(topo.col_edges(2), &[1, 2]);
        assert_eq!(topo.degree(1), 2);
        assert_eq!(topo.max_degree(), 2);
    }

    #[test]
    fn validate_rejects_nan_and_shape_errors() {
        let topo = single_edge_topo(2);
        let good = PotentialVector::zeros(&topo);
        assert!(validate_model(&topo, &good).is_ok());

        let mut bad = good.clone();
        bad.vertex_cost_mut(0)[1] = f64::NAN;
        assert!(matches!(
            validate_model(&topo, &bad),
            Err(ModelError::NonFiniteCost(_))
        ));

        let bad = PotentialVector::new(vec![vec![0.0; 2]; 2], vec![vec![0.0; 3]]);
        assert!(matches!(
            validate_model(&topo, &bad),
            Err(ModelError::DimensionMismatch(_))
        ));
    }

    #[test]
    fn edge_violation_matches_hand_computation() {
        // Joint [[0.4, 0.2], [0.1, 0.3]] has row sums (0.6, 0.4); against a
        // uniform vertex the l1 gap is |0.6-0.5| + |0.4-0.5| = 0.2.
        let topo = single_edge_topo(2);
        let gamma = MarginalVector::from_linear(
            2,
            &[vec![0.5, 0.5], vec![0.5, 0.5]],
            &[vec![0.4, 0.2, 0.1, 0.3]],
        );
        let (row, col) = edge_violations(&gamma, &topo, 0);
        assert!((row - 0.2).abs() < 1e-12);
        assert!((col - 0.0).abs() < 1e-12);

        let (value, edge, side) = max_violation(&gamma, &topo);
        assert!((value - 0.2).abs() < 1e-12);
        assert_eq!((edge, side), (0, Side::Row));
    }

    #[test]
    fn max_violation_tie_breaks_to_lowest_edge_then_row() {
        // Same joint on both edges, uniform vertices everywhere: the joint's
        // column sums are already uniform, so each edge violates only its row
        // side, by the same amount. The tie must resolve to edge 0 / row.
        let topo = GraphTopology::new(3, 2, vec![(0, 1), (1, 2)]).unwrap();
        let joint = vec![0.4, 0.2, 0.1, 0.3];
        let gamma = MarginalVector::from_linear(
            2,
            &[vec![0.5, 0.5], vec![0.5, 0.5], vec![0.5, 0.5]],
            &[joint.clone(), joint],
        );
        let (v0, c0) = edge_violations(&gamma, &topo, 0);
        let (v1, c1) = edge_violations(&gamma, &topo, 1);
        assert_eq!(v0, v1);
        assert!(c0.abs() < 1e-15 && c1.abs() < 1e-15);
        let (_, edge, side) = max_violation(&gamma, &topo);
        assert_eq!((edge, side), (0, Side::Row));
    }

    #[test]
    fn slack_vectors_sum_to_zero_for_normalized_blocks() {
        let topo = single_edge_topo(2);
        let gamma = MarginalVector::from_linear(
            2,
            &[vec![0.9, 0.1], vec![0.2, 0.8]],
            &[vec![0.25, 0.25, 0.25, 0.25]],
        );
        let slack = SlackVector::from_marginals(&gamma, &topo);
        assert!(slack.max_abs_sum() < 1e-10);
        // Entries themselves are the signed residuals.
        assert!((slack.row_slack(0)[0] - (0.5 - 0.9)).abs() < 1e-12);
    }

    #[test]
    fn assignment_hamming() {
        let a = Assignment(vec![0, 1, 2, 0]);
        let b = Assignment(vec![0, 2, 2, 1]);
        assert!((a.normalized_hamming(&b) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn model_file_round_trips_and_sorts() {
        let raw = r#"{
            "n": 3, "d": 2,
            "edges": [[1, 2], [0, 1]],
            "vertex_costs": [[0.0, 1.0], [0.5, -0.5], [0.0, 0.0]],
            "edge_costs": [
                [[9.0, 9.0], [9.0, 9.0]],
                [[1.0, 2.0], [3.0, 4.0]]
            ]
        }"#;
        let file: ModelFile = serde_json::from_str(raw).unwrap();
        let (topo, costs) = file.into_model().unwrap();
        assert_eq!(topo.edges(), &[(0, 1), (1, 2)]);
        // Costs must have followed their edges through the sort.
        assert_eq!(costs.edge_cost(0), &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(costs.edge_cost(1), &[9.0, 9.0, 9.0, 9.0]);

        let back = ModelFile::from_model(&topo, &costs);
        assert_eq!(back.edges, vec![[0, 1], [1, 2]]);
        assert_eq!(back.edge_costs[0][1][0], 3.0);
    }

    #[test]
    fn model_file_rejects_mismatched_edge_costs() {
        let file = ModelFile {
            n: 2,
            d: 2,
            edges: vec![[0, 1]],
            vertex_costs: vec![vec![0.0; 2]; 2],
            edge_costs: vec![],
        };
        assert!(file.into_model().is_err());
    }

    #[test]
    fn marginal_accessors_and_masses() {
        let topo = single_edge_topo(2);
        let gamma = MarginalVector::uniform(&topo);
        assert!((gamma.vertex_mass(0) - 1.0).abs() < 1e-12);
        assert!((gamma.edge_mass(0) - 1.0).abs() < 1e-12);
        assert!(gamma.max_normalization_error(&topo) < 1e-12);
        assert!(gamma.all_finite());
        let rows = gamma.edge_row_log_sums(0);
        assert!((rows[0].exp() - 0.5).abs() < 1e-12);
        let cols = gamma.edge_col_log_sums(0);
        assert!((cols[1].exp() - 0.5).abs() < 1e-12);
    }
}
