//! Independent oracles for the forest layer: a brute-force root-to-leaf
//! path enumeration (no shared code with the heap-based blend), finite
//! differences for every head parameter, and the hard-routing limit.

mod common;

use common::check_grads;
use forestgan::forest::{
    score_from_ids, soft_decision, Combination, HardTree, SoftForest, SoftTree,
};
use forestgan::tensor::{Graph, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Leaf weights by explicit path products: leaf index bits (most significant
/// first) encode the branch at each level, 0 = left. Shares nothing with the
/// production kernel.
fn enumerate_leaf_weights(depth: usize, gates: &[f64]) -> Vec<f64> {
    let leaves = 1usize << depth;
    (0..leaves)
        .map(|leaf| {
            let mut node = 0usize;
            let mut weight = 1.0;
            for level in 0..depth {
                let go_right = (leaf >> (depth - 1 - level)) & 1 == 1;
                weight *= if go_right { 1.0 - gates[node] } else { gates[node] };
                node = 2 * node + 1 + go_right as usize;
            }
            weight
        })
        .collect()
}

fn random_tree(rng: &mut ChaCha8Rng, depth: usize, classes: usize, alpha: f64) -> SoftTree {
    let internal = (1usize << depth) - 1;
    SoftTree {
        depth,
        alpha,
        biases: (0..internal).map(|_| rng.random_range(-1.0..1.0)).collect(),
        leaves: (0..1usize << depth)
            .map(|_| (0..classes).map(|_| rng.random_range(-2.0..2.0)).collect())
            .collect(),
    }
}

#[test]
fn leaf_blend_matches_path_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for depth in 1..=4 {
        let tree = random_tree(&mut rng, depth, 1, 1.7);
        let acts: Vec<f64> = (0..tree.internal_count())
            .map(|_| rng.random_range(-2.0..2.0))
            .collect();
        let gates: Vec<f64> = acts
            .iter()
            .zip(&tree.biases)
            .map(|(a, b)| soft_decision(*a, *b, tree.alpha))
            .collect();
        let oracle = enumerate_leaf_weights(depth, &gates);
        let mu = tree.leaf_blend(&acts).unwrap();
        for (got, want) in mu.iter().zip(&oracle) {
            assert!((got - want).abs() < 1e-14, "depth {depth}: {got} vs {want}");
        }
    }
}

#[test]
fn tree_output_matches_weighted_leaf_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let tree = random_tree(&mut rng, 3, 2, 0.9);
    let acts: Vec<f64> = (0..7).map(|_| rng.random_range(-2.0..2.0)).collect();
    let gates: Vec<f64> = acts
        .iter()
        .zip(&tree.biases)
        .map(|(a, b)| soft_decision(*a, *b, tree.alpha))
        .collect();
    let weights = enumerate_leaf_weights(3, &gates);
    let mut expected = [0.0; 2];
    for (w, leaf) in weights.iter().zip(&tree.leaves) {
        expected[0] += w * leaf[0];
        expected[1] += w * leaf[1];
    }
    let got = tree.output(&acts).unwrap();
    assert!((got[0] - expected[0]).abs() < 1e-13);
    assert!((got[1] - expected[1]).abs() < 1e-13);
}

#[test]
fn graph_head_agrees_with_pure_evaluation() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for combination in [Combination::Average, Combination::Product] {
        let mut forest = SoftForest::new(3, 2, 1, 1.3, combination).unwrap();
        forest.init_params(&mut rng, 0.5);
        let batch = 5;
        let width = forest.input_width();
        let acts: Vec<f64> = (0..batch * width).map(|_| rng.random_range(-2.0..2.0)).collect();

        let mut g = Graph::with_finite_checks(true);
        let a = g
            .input(Tensor::new(vec![batch, width], acts.clone()).unwrap())
            .unwrap();
        let pass = forest.forward(&mut g, a).unwrap();
        let scores = g.value(pass.score);

        for b in 0..batch {
            let row = &acts[b * width..(b + 1) * width];
            let pure = forest.forest_value(row).unwrap()[0];
            let graph_score = scores.row(b)[0];
            // product mode scores are log-factors; the pure value is S itself
            let want = match combination {
                Combination::Average => pure,
                Combination::Product => pure.ln(),
            };
            assert!(
                (graph_score - want).abs() < 1e-12 * want.abs().max(1.0),
                "{combination:?} row {b}: {graph_score} vs {want}"
            );
        }
    }
}

#[test]
fn batched_membership_rows_each_sum_to_one() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let mut forest = SoftForest::new(4, 3, 1, 2.0, Combination::Average).unwrap();
    forest.init_params(&mut rng, 1.0);
    let batch = 6;
    let width = forest.input_width();
    let acts: Vec<f64> = (0..batch * width).map(|_| rng.random_range(-3.0..3.0)).collect();
    let mut g = Graph::new();
    let a = g.input(Tensor::new(vec![batch, width], acts).unwrap()).unwrap();
    let pass = forest.forward(&mut g, a).unwrap();
    let mu = g.value(pass.memberships);
    for b in 0..batch {
        let row = mu.row(b);
        for t in 0..forest.trees() {
            let total: f64 = row[t * 8..(t + 1) * 8].iter().sum();
            assert!((total - 1.0).abs() < 1e-12, "tree {t} mass {total}");
        }
        assert!(row.iter().all(|w| *w > 0.0 && *w < 1.0));
    }
}

#[test]
fn full_forest_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let (trees, depth, alpha) = (4, 3, 1.1);
    let width = trees * 7;
    let leaf_rows = trees * 8;
    for combination in [Combination::Average, Combination::Product] {
        let acts: Vec<f64> = (0..2 * width).map(|_| rng.random_range(-1.5..1.5)).collect();
        let biases: Vec<f64> = (0..width).map(|_| rng.random_range(-1.0..1.0)).collect();
        let leaves: Vec<f64> = (0..leaf_rows).map(|_| rng.random_range(-1.0..1.0)).collect();
        check_grads(
            &[
                (vec![2, width], acts),
                (vec![width], biases),
                (vec![leaf_rows, 1], leaves),
            ],
            |g, ids| {
                let score =
                    score_from_ids(g, ids[0], ids[1], ids[2], trees, depth, alpha, combination)
                        .unwrap();
                // weight the two batch rows differently before reducing
                let w = g
                    .input(Tensor::new(vec![2, 1], vec![0.7, -1.3]).unwrap())
                    .unwrap();
                let weighted = g.mul(score, w).unwrap();
                g.sum(weighted, None).unwrap()
            },
            1e-5,
        );
    }
}

#[test]
fn constant_leaves_kill_bias_gradients() {
    let mut forest = SoftForest::new(2, 3, 1, 1.0, Combination::Average).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    forest.init_params(&mut rng, 0.3);
    forest.leaves_mut().iter_mut().for_each(|v| *v = 0.75);
    let width = forest.input_width();
    let acts: Vec<f64> = (0..3 * width).map(|_| rng.random_range(-2.0..2.0)).collect();
    let mut g = Graph::new();
    let a = g.input(Tensor::new(vec![3, width], acts).unwrap()).unwrap();
    let pass = forest.forward(&mut g, a).unwrap();
    let loss = g.sum(pass.score, None).unwrap();
    let grads = g.grads_wrt(loss, &[pass.biases]).unwrap();
    for gb in &grads[0] {
        assert!(gb.abs() < 1e-12, "bias grad {gb} for routing-independent output");
    }
}

#[test]
fn depth_one_leaf_gradients_are_the_gate_proportions() {
    let mut forest = SoftForest::new(1, 1, 1, 1.0, Combination::Average).unwrap();
    forest.biases_mut()[0] = 0.2;
    forest.leaves_mut().copy_from_slice(&[1.0, -1.0]);
    let act = 0.9;
    let mut g = Graph::new();
    let a = g.input(Tensor::new(vec![1, 1], vec![act]).unwrap()).unwrap();
    let pass = forest.forward(&mut g, a).unwrap();
    let loss = g.sum(pass.score, None).unwrap();
    let grads = g.grads_wrt(loss, &[pass.leaves]).unwrap();
    let d = soft_decision(act, 0.2, 1.0);
    assert!((grads[0][0] - d).abs() < 1e-15);
    assert!((grads[0][1] - (1.0 - d)).abs() < 1e-15);
}

#[test]
fn steep_soft_twin_reproduces_hard_routing() {
    let mut tree = HardTree::new(2, vec![0, 1, 0], vec![0.3, -0.2, 0.6]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let n = 200;
    let data: Vec<f64> = (0..2 * n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let values: Vec<f64> = (0..n)
        .map(|i| data[2 * i] - 2.0 * data[2 * i + 1] + 0.5)
        .collect();
    tree.fit_leaf_values(&data, 2, &values).unwrap();

    let (twin, features) = tree.soft_twin(1000.0);
    let mut checked = 0;
    for i in 0..n {
        let x = &data[2 * i..2 * i + 2];
        // stay clear of every threshold along the consulted feature
        let margin_ok = (x[0] - 0.3).abs() >= 0.1
            && (x[1] + 0.2).abs() >= 0.1
            && (x[0] - 0.6).abs() >= 0.1;
        if !margin_ok {
            continue;
        }
        checked += 1;
        let acts: Vec<f64> = features.iter().map(|f| x[*f]).collect();
        let soft = twin.output(&acts).unwrap()[0];
        let hard = tree.predict(x);
        assert!(
            (soft - hard).abs() < 1e-6,
            "point {x:?}: soft {soft} vs hard {hard}"
        );
    }
    assert!(checked > 50, "margin filter left too few points ({checked})");
}
