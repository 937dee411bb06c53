//! Property tests for the autodiff graph: determinism, range invariants,
//! and randomized agreement with the finite-difference oracle.

mod common;

use common::check_grads;
use forestgan::tensor::{Graph, Tensor};
use proptest::prelude::*;

fn values(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-3.0f64..3.0, n)
}

proptest! {
    #[test]
    fn forward_composite_is_bitwise_deterministic(
        a in values(6), b in values(6), bias in values(2),
    ) {
        let run = || {
            let mut g = Graph::new();
            let ta = g.input(Tensor::new(vec![2, 3], a.clone()).unwrap()).unwrap();
            let tb = g.input(Tensor::new(vec![3, 2], b.clone()).unwrap()).unwrap();
            let tc = g.input(Tensor::new(vec![2], bias.clone()).unwrap()).unwrap();
            let m = g.matmul(ta, tb).unwrap();
            let s = g.add(m, tc).unwrap();
            let o = g.sigmoid(s).unwrap();
            g.value(o).data().to_vec()
        };
        let (x, y) = (run(), run());
        prop_assert!(x.iter().zip(&y).all(|(p, q)| p.to_bits() == q.to_bits()));
    }

    #[test]
    fn sigmoid_stays_in_closed_unit_interval(xs in values(8)) {
        let mut g = Graph::new();
        let x = g.input(Tensor::new(vec![8], xs).unwrap()).unwrap();
        let s = g.sigmoid(x).unwrap();
        prop_assert!(g.value(s).data().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn log_softmax_rows_are_normalized_log_probs(xs in values(12)) {
        let mut g = Graph::new();
        let x = g.input(Tensor::new(vec![3, 4], xs).unwrap()).unwrap();
        let y = g.log_softmax(x).unwrap();
        let t = g.value(y);
        for r in 0..3 {
            let mass: f64 = t.row(r).iter().map(|v| v.exp()).sum();
            prop_assert!((mass - 1.0).abs() < 1e-9);
            prop_assert!(t.row(r).iter().all(|v| *v <= 0.0));
        }
    }

    #[test]
    fn random_dense_chain_matches_finite_differences(
        a in values(6), b in values(6), bias in values(2),
    ) {
        check_grads(
            &[
                (vec![2, 3], a),
                (vec![3, 2], b),
                (vec![2], bias),
            ],
            |g, ids| {
                let m = g.matmul(ids[0], ids[1]).unwrap();
                let s = g.add(m, ids[2]).unwrap();
                let o = g.sigmoid(s).unwrap();
                g.mean(o).unwrap()
            },
            // FD noise dominates near sigmoid saturation; keep base points
            // bounded and the tolerance a bit looser than the fixed suite.
            1e-4,
        );
    }

    #[test]
    fn disconnected_parameters_get_exact_zeros(xs in values(4), unused in values(5)) {
        let mut g = Graph::new();
        let x = g.input(Tensor::new(vec![4], xs).unwrap()).unwrap();
        let u = g.input(Tensor::new(vec![5], unused).unwrap()).unwrap();
        let s = g.sum(x, None).unwrap();
        let grads = g.grads_wrt(s, &[u]).unwrap();
        prop_assert!(grads[0].iter().all(|v| *v == 0.0));
    }

    #[test]
    fn bias_gradient_sums_over_batch(xs in values(6), bias in values(3)) {
        let mut g = Graph::new();
        let x = g.input(Tensor::new(vec![2, 3], xs).unwrap()).unwrap();
        let b = g.input(Tensor::new(vec![3], bias).unwrap()).unwrap();
        let y = g.add(x, b).unwrap();
        let s = g.sum(y, None).unwrap();
        g.backward(s).unwrap();
        // each bias element feeds both batch rows
        prop_assert!(g.grad_of(b).unwrap().iter().all(|v| *v == 2.0));
    }
}
