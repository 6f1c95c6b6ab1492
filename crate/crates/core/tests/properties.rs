//! Property tests for the invariants that should hold on *arbitrary* valid
//! states, not just those the solver happens to produce: projection
//! postconditions, the exact potential-gain identities, dual round-trips,
//! and generator guarantees.

use proptest::prelude::*;

use emp_core::model::{GraphTopology, MarginalVector, PotentialVector, Side};
use emp_core::projections::{
    hellinger_sq, max_decomposition_residual, max_reconstruction_residual,
    project_consistency, project_normalization, DualState,
};
use emp_core::solver::lyapunov_core;

/// Random positive vector of length `len`, entries in (0.01, 1).
fn positive_vec(len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.01f64..1.0, len)
}

fn normalized(mut v: Vec<f64>) -> Vec<f64> {
    let mass: f64 = v.iter().sum();
    for p in &mut v {
        *p /= mass;
    }
    v
}

/// A single-edge model state with arbitrary positive (not necessarily
/// normalized) blocks, plus matching costs/duals so the potential is
/// well-defined: set `eta = 1`, `C = -log Gamma`, duals zero.
fn single_edge_state(
    d: usize,
    vertex0: Vec<f64>,
    vertex1: Vec<f64>,
    joint: Vec<f64>,
) -> (GraphTopology, PotentialVector, MarginalVector, DualState) {
    let topo = GraphTopology::new(2, d, vec![(0, 1)]).unwrap();
    let gamma = MarginalVector::from_linear(d, &[vertex0, vertex1], &[joint]);
    let mut costs = PotentialVector::zeros(&topo);
    for v in 0..2 {
        for (x, c) in costs.vertex_cost_mut(v).iter_mut().enumerate() {
            *c = -gamma.vertex_log(v)[x];
        }
    }
    for (k, c) in costs.edge_cost_mut(0).iter_mut().enumerate() {
        *c = -gamma.edge_log(0)[k];
    }
    let dual = DualState::zeros(&topo);
    (topo, costs, gamma, dual)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    /// 2 h^2 dominates a quarter of the squared l1 distance (the inequality
    /// the greedy progress guarantee rests on).
    #[test]
    fn hellinger_dominates_l1(
        p in positive_vec(5),
        q in positive_vec(5),
    ) {
        let p = normalized(p);
        let q = normalized(q);
        let l1: f64 = p.iter().zip(&q).map(|(&a, &b)| (a - b).abs()).sum();
        let h2 = hellinger_sq(&p, &q);
        prop_assert!(0.25 * l1 * l1 <= 2.0 * h2 + 1e-12);
    }

    /// After a consistency projection the edge's marginal sums equal the
    /// vertex block to near machine precision (geometric-mean postcondition).
    #[test]
    fn consistency_postcondition(
        v0 in positive_vec(3),
        v1 in positive_vec(3),
        joint in positive_vec(9),
        row_side in any::<bool>(),
    ) {
        let (topo, _costs, mut gamma, mut dual) = single_edge_state(3, v0, v1, joint);
        let side = if row_side { Side::Row } else { Side::Col };
        project_consistency(&mut gamma, &mut dual, &topo, 0, side).unwrap();
        let (vertex, sums) = match side {
            Side::Row => (0, gamma.edge_row_log_sums(0)),
            Side::Col => (1, gamma.edge_col_log_sums(0)),
        };
        for (a, &s) in sums.iter().enumerate() {
            let gap = (s.exp() - gamma.vertex_log(vertex)[a].exp()).abs();
            prop_assert!(gap <= 1e-12, "label {a}: residual {gap:e}");
        }
    }

    /// A consistency projection's potential gain equals 2 h^2 between its
    /// operands — on arbitrary positive states, normalized or not.
    #[test]
    fn consistency_gain_is_twice_hellinger_sq(
        v0 in positive_vec(2),
        v1 in positive_vec(2),
        joint in positive_vec(4),
        row_side in any::<bool>(),
    ) {
        let (topo, costs, mut gamma, mut dual) = single_edge_state(2, v0, v1, joint);
        let side = if row_side { Side::Row } else { Side::Col };
        let (sums, vertex) = match side {
            Side::Row => (gamma.edge_row_log_sums(0), 0),
            Side::Col => (gamma.edge_col_log_sums(0), 1),
        };
        let sums: Vec<f64> = sums.iter().map(|&l| l.exp()).collect();
        let dist = gamma.vertex_dist(vertex);
        let predicted = 2.0 * hellinger_sq(&sums, &dist);

        let before = lyapunov_core(&dual, &costs, &topo, 1.0);
        project_consistency(&mut gamma, &mut dual, &topo, 0, side).unwrap();
        let after = lyapunov_core(&dual, &costs, &topo, 1.0);
        let delta = after - before;
        prop_assert!(
            (delta - predicted).abs() <= 1e-10 * predicted.abs().max(1.0),
            "delta {delta:e} vs 2h^2 {predicted:e}"
        );
    }

    /// A normalization projection's potential gain is exactly
    /// `(M - log M - 1) + (m - log m - 1)` for block masses M, m — hence
    /// nonnegative, with equality iff both blocks were already normalized.
    #[test]
    fn normalization_gain_identity(
        v0 in positive_vec(2),
        v1 in positive_vec(2),
        joint in positive_vec(4),
        row_side in any::<bool>(),
    ) {
        let (topo, costs, mut gamma, mut dual) = single_edge_state(2, v0, v1, joint);
        let side = if row_side { Side::Row } else { Side::Col };
        let vertex = if row_side { 0 } else { 1 };
        let edge_mass = gamma.edge_mass(0);
        let vertex_mass = gamma.vertex_mass(vertex);
        let predicted =
            (edge_mass - edge_mass.ln() - 1.0) + (vertex_mass - vertex_mass.ln() - 1.0);

        let before = lyapunov_core(&dual, &costs, &topo, 1.0);
        project_normalization(&mut gamma, &mut dual, &topo, 0, side).unwrap();
        let after = lyapunov_core(&dual, &costs, &topo, 1.0);
        let delta = after - before;
        prop_assert!(delta >= -1e-12);
        prop_assert!(
            (delta - predicted).abs() <= 1e-10 * predicted.abs().max(1.0),
            "delta {delta:e} vs identity {predicted:e}"
        );
    }

    /// Closed-form projections agree with the golden-section oracle.
    #[test]
    fn closed_form_matches_search_oracle(
        v0 in positive_vec(4),
        v1 in positive_vec(4),
        joint in positive_vec(16),
        row_side in any::<bool>(),
    ) {
        let side = if row_side { Side::Row } else { Side::Col };
        let vertex_idx = if row_side { 0 } else { 1 };
        let (topo, _costs, mut gamma, mut dual) =
            single_edge_state(4, v0.clone(), v1.clone(), joint.clone());
        let vertex_input = if row_side { v0 } else { v1 };
        let (oracle_edge, oracle_vertex) =
            emp_core::oracle::kl_projection_oracle(&joint, &vertex_input, side).unwrap();
        project_consistency(&mut gamma, &mut dual, &topo, 0, side).unwrap();
        let fast_edge = gamma.edge_joint(0);
        let fast_vertex = gamma.vertex_dist(vertex_idx);
        for (a, (&fast, &slow)) in fast_vertex.iter().zip(&oracle_vertex).enumerate() {
            prop_assert!((fast - slow).abs() <= 1e-6, "vertex {a}: {fast} vs {slow}");
        }
        for (k, (&fast, &slow)) in fast_edge.iter().zip(&oracle_edge).enumerate() {
            prop_assert!((fast - slow).abs() <= 1e-6, "entry {k}: {fast} vs {slow}");
        }
    }

    /// Random projection chains keep primal and dual in lockstep.
    #[test]
    fn dual_round_trip_after_random_ops(
        seed in any::<u64>(),
        ops in prop::collection::vec((0usize..4, 0usize..4), 1..60),
    ) {
        let topo = emp_core::generators::grid_graph(2, 2).unwrap();
        let config = emp_core::generators::PottsConfig {
            d: 2,
            seed,
            ..Default::default()
        };
        let costs = emp_core::generators::potts_costs(&topo, &config);
        let eta = 4.0;
        let (mut gamma, mut dual) = emp_core::initialize(&costs, &topo, eta);
        for (kind, e) in ops {
            match kind {
                0 => project_consistency(&mut gamma, &mut dual, &topo, e, Side::Row).unwrap(),
                1 => project_normalization(&mut gamma, &mut dual, &topo, e, Side::Row).unwrap(),
                2 => project_consistency(&mut gamma, &mut dual, &topo, e, Side::Col).unwrap(),
                _ => project_normalization(&mut gamma, &mut dual, &topo, e, Side::Col).unwrap(),
            }
        }
        prop_assert!(max_reconstruction_residual(&gamma, &dual, &costs, &topo, eta) <= 1e-10);
        prop_assert!(max_decomposition_residual(&dual, &topo) <= 1e-10);
    }

    /// The enumeration oracle's optimum dominates random assignments.
    #[test]
    fn oracle_best_dominates_samples(
        seed in any::<u64>(),
        samples in prop::collection::vec(prop::collection::vec(0usize..3, 9), 5),
    ) {
        let topo = emp_core::generators::grid_graph(3, 3).unwrap();
        let config = emp_core::generators::PottsConfig {
            seed,
            ..Default::default()
        };
        let costs = emp_core::generators::potts_costs(&topo, &config);
        let oracle = emp_core::oracle::brute_force_map(&costs, &topo).unwrap();
        for labels in samples {
            let value = costs.theta_objective(&topo, &emp_core::Assignment(labels));
            prop_assert!(value <= oracle.best_value + 1e-12);
            if let Some(second) = oracle.second_value {
                prop_assert!(second < oracle.best_value);
                if value < oracle.best_value {
                    prop_assert!(value <= second + 1e-12);
                }
            }
        }
    }

    /// Capped random graphs always validate: degrees within cap, no isolated
    /// vertices, canonical edge lists.
    #[test]
    fn er_generator_always_valid(seed in any::<u64>(), cap in 2usize..8) {
        let topo = match emp_core::generators::erdos_renyi(24, 3, seed, Some(cap)) {
            Ok(t) => t,
            // A very tight cap can be unrepairable; that is a legal outcome.
            Err(emp_core::generators::GeneratorError::Unrepairable { .. }) => return Ok(()),
            Err(other) => return Err(TestCaseError::fail(format!("{other}"))),
        };
        for v in 0..topo.num_vertices() {
            prop_assert!(topo.degree(v) >= 1);
            prop_assert!(topo.degree(v) <= cap);
        }
        let mut sorted = topo.edges().to_vec();
        sorted.sort_unstable();
        prop_assert_eq!(&sorted[..], topo.edges());
    }
}
