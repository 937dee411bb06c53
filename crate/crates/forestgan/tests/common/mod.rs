//! Shared helpers for the integration suites: a central finite-difference
//! oracle for gradients, and tolerance-aware comparison utilities.

#![allow(dead_code)]

use forestgan::tensor::{Graph, NodeId, Tensor};

pub const FD_STEP: f64 = 1e-6;
pub const FD_TOL: f64 = 1e-5;

/// Relative error with an absolute floor, so tiny true values don't blow up
/// the ratio.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / (a.abs().max(b.abs())).max(1e-8)
}

pub fn assert_close(a: f64, b: f64, tol: f64, what: &str) {
    assert!(
        rel_err(a, b) < tol,
        "{what}: {a} vs {b} (rel err {:.3e}, tol {tol:.1e})",
        rel_err(a, b)
    );
}

/// Evaluate `build` as a scalar function of the concatenated input tensors.
fn eval_loss(
    shapes: &[Vec<usize>],
    values: &[Vec<f64>],
    build: &dyn Fn(&mut Graph, &[NodeId]) -> NodeId,
) -> f64 {
    let mut g = Graph::with_finite_checks(true);
    let ids: Vec<NodeId> = shapes
        .iter()
        .zip(values)
        .map(|(s, v)| {
            g.input(Tensor::new(s.clone(), v.clone()).unwrap())
                .unwrap()
        })
        .collect();
    let loss = build(&mut g, &ids);
    let t = g.value(loss);
    assert_eq!(t.len(), 1, "gradcheck losses must be scalar");
    t.data()[0]
}

/// Check reverse-mode gradients of a scalar-valued graph against central
/// finite differences, for every element of every input tensor.
///
/// The builder must construct the same graph for any input values; pick
/// base points away from relu/clamp kinks.
pub fn check_grads(
    inputs: &[(Vec<usize>, Vec<f64>)],
    build: impl Fn(&mut Graph, &[NodeId]) -> NodeId,
    tol: f64,
) {
    let shapes: Vec<Vec<usize>> = inputs.iter().map(|(s, _)| s.clone()).collect();
    let base: Vec<Vec<f64>> = inputs.iter().map(|(_, v)| v.clone()).collect();

    let mut g = Graph::with_finite_checks(true);
    let ids: Vec<NodeId> = shapes
        .iter()
        .zip(&base)
        .map(|(s, v)| {
            g.input(Tensor::new(s.clone(), v.clone()).unwrap())
                .unwrap()
        })
        .collect();
    let loss = build(&mut g, &ids);
    let analytic = g.grads_wrt(loss, &ids).unwrap();

    for (k, grad_k) in analytic.iter().enumerate() {
        for j in 0..grad_k.len() {
            let mut plus = base.clone();
            plus[k][j] += FD_STEP;
            let mut minus = base.clone();
            minus[k][j] -= FD_STEP;
            let numeric = (eval_loss(&shapes, &plus, &build)
                - eval_loss(&shapes, &minus, &build))
                / (2.0 * FD_STEP);
            // Relative agreement, with an absolute floor covering central-
            // difference rounding noise (~1e-10 for O(1) losses at this h).
            let gap = (grad_k[j] - numeric).abs();
            let bound = tol * grad_k[j].abs().max(numeric.abs()) + 1e-8;
            assert!(
                gap < bound,
                "input {k} element {j}: analytic {} vs numeric {numeric} (gap {gap:.3e}, bound {bound:.3e})",
                grad_k[j],
            );
        }
    }
}
