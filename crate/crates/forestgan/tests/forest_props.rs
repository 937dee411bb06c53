//! Property tests for the forest layer: leaf weights form a distribution,
//! routing symmetry, product-mode additivity, and checkpoint round-trips.

use forestgan::forest::{Combination, HardTree, SoftForest, SoftTree};
use proptest::prelude::*;

fn tree_strategy(depth: usize) -> impl Strategy<Value = (SoftTree, Vec<f64>)> {
    let internal = (1usize << depth) - 1;
    let leaves = 1usize << depth;
    (
        prop::collection::vec(-3.0f64..3.0, internal),
        prop::collection::vec(-2.0f64..2.0, leaves),
        prop::collection::vec(-3.0f64..3.0, internal),
        0.2f64..5.0,
    )
        .prop_map(move |(biases, leaf_vals, acts, alpha)| {
            (
                SoftTree {
                    depth,
                    alpha,
                    biases,
                    leaves: leaf_vals.into_iter().map(|v| vec![v]).collect(),
                },
                acts,
            )
        })
}

/// Swap the root's subtrees: per level, exchange the two halves of the heap
/// slice (order preserved within each half); the root gate flips by
/// negating both its bias and its activation.
fn mirror_at_root(tree: &SoftTree, acts: &[f64]) -> (SoftTree, Vec<f64>) {
    let depth = tree.depth;
    let mut biases = tree.biases.clone();
    let mut macts = acts.to_vec();
    biases[0] = -biases[0];
    macts[0] = -macts[0];
    for level in 1..depth {
        let first = (1usize << level) - 1;
        let half = 1usize << (level - 1);
        for o in 0..half {
            biases.swap(first + o, first + half + o);
            macts.swap(first + o, first + half + o);
        }
    }
    let half = 1usize << (depth - 1);
    let mut leaves = tree.leaves.clone();
    leaves.rotate_left(half);
    (
        SoftTree {
            depth,
            alpha: tree.alpha,
            biases,
            leaves,
        },
        macts,
    )
}

proptest! {
    #[test]
    fn leaf_weights_form_a_distribution((tree, acts) in (1usize..=4).prop_flat_map(tree_strategy)) {
        let mu = tree.leaf_blend(&acts).unwrap();
        let total: f64 = mu.iter().sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
        prop_assert!(mu.iter().all(|w| *w > 0.0 && *w < 1.0));
    }

    #[test]
    fn output_stays_in_leaf_hull((tree, acts) in (1usize..=3).prop_flat_map(tree_strategy)) {
        let out = tree.output(&acts).unwrap()[0];
        let lo = tree.leaves.iter().map(|l| l[0]).fold(f64::INFINITY, f64::min);
        let hi = tree.leaves.iter().map(|l| l[0]).fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(out >= lo - 1e-12 && out <= hi + 1e-12);
    }

    #[test]
    fn swapping_subtrees_with_flipped_gate_is_invisible(
        (tree, acts) in (2usize..=4).prop_flat_map(tree_strategy),
    ) {
        let (mirrored, macts) = mirror_at_root(&tree, &acts);
        let a = tree.output(&acts).unwrap()[0];
        let b = mirrored.output(&macts).unwrap()[0];
        prop_assert!((a - b).abs() < 1e-12 * a.abs().max(1.0), "{a} vs {b}");
    }

    #[test]
    fn product_combination_multiplies_per_tree_factors(
        biases in prop::collection::vec(-2.0f64..2.0, 9),
        leaves in prop::collection::vec(-1.0f64..1.0, 12),
        acts in prop::collection::vec(-2.0f64..2.0, 9),
    ) {
        let mut forest = SoftForest::new(3, 2, 1, 1.0, Combination::Product).unwrap();
        forest.biases_mut().copy_from_slice(&biases);
        forest.leaves_mut().copy_from_slice(&leaves);
        let s = forest.forest_value(&acts).unwrap()[0];
        let mut product = 1.0;
        for t in 0..3 {
            let tree = forest.tree(t);
            let log_factor = tree.output(&acts[t * 3..(t + 1) * 3]).unwrap()[0];
            product *= log_factor.exp();
        }
        prop_assert!((s - product).abs() < 1e-12 * product.abs().max(1.0));
    }

    #[test]
    fn random_forest_checkpoints_round_trip(
        biases in prop::collection::vec(-2.0f64..2.0, 2),
        leaves in prop::collection::vec(-2.0f64..2.0, 8),
    ) {
        let mut forest = SoftForest::new(2, 1, 2, 0.7, Combination::Average).unwrap();
        forest.biases_mut().copy_from_slice(&biases);
        forest.leaves_mut().copy_from_slice(&leaves);
        let json = serde_json::to_string(&forest).unwrap();
        let back: SoftForest = serde_json::from_str(&json).unwrap();
        prop_assert_eq!(back, forest);
    }

    #[test]
    fn every_sample_routes_to_exactly_one_leaf(
        data in prop::collection::vec(-2.0f64..2.0, 40),
        thresholds in prop::collection::vec(-1.0f64..1.0, 3),
    ) {
        let tree = HardTree::new(2, vec![0, 1, 1], thresholds).unwrap();
        let mut counts = [0usize; 4];
        for x in data.chunks(2) {
            counts[tree.leaf_index(x)] += 1;
        }
        prop_assert_eq!(counts.iter().sum::<usize>(), 20);
    }

    #[test]
    fn fitted_leaves_average_the_routed_values(
        data in prop::collection::vec(-2.0f64..2.0, 30),
        values in prop::collection::vec(-5.0f64..5.0, 30),
    ) {
        let mut tree = HardTree::new(1, vec![0], vec![0.0]).unwrap();
        tree.fit_leaf_values(&data, 1, &values).unwrap();
        // recompute the two means independently
        for side in 0..2 {
            let routed: Vec<f64> = data
                .iter()
                .zip(&values)
                .filter(|(x, _)| usize::from(**x >= 0.0) == side)
                .map(|(_, v)| *v)
                .collect();
            if !routed.is_empty() {
                let mean = routed.iter().sum::<f64>() / routed.len() as f64;
                prop_assert!((tree.leaf_values[side] - mean).abs() < 1e-12);
            }
        }
    }
}
