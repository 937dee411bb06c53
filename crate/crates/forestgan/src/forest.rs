//! Soft (differentiable) and hard (threshold) decision forests.
//!
//! A soft tree replaces each hard split with a sigmoid gate: the gate value
//! is the proportion of an instance routed into the **left** subtree, and a
//! leaf's weight is the product of gate proportions along its root path.
//! Leaf weights therefore form a probability distribution over leaves, and
//! the whole structure is differentiable in both gate biases and leaf
//! values, so split points and leaf predictions train simultaneously by
//! gradient descent.
//!
//! Hard forests with the classic `x >= threshold goes right` routing are
//! kept alongside as the limiting reference: a soft tree with mirrored
//! structure and large steepness converges to its hard counterpart.

use std::rc::Rc;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{sigmoid_scalar, Graph, GraphOp, NodeId, Tensor};

/// Gate value in (0,1): the proportion routed to the left subtree.
/// Differentiable in both the activation and the bias.
pub fn soft_decision(x: f64, bias: f64, alpha: f64) -> f64 {
    sigmoid_scalar(alpha * (x - bias))
}

/// How a forest combines its trees into one output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Combination {
    /// Arithmetic mean of tree outputs; leaves hold raw values (logits).
    Average,
    /// Product of positive per-tree factors, computed in log space; leaves
    /// hold log-factors and each tree contributes a residual logit.
    Product,
}

/// One soft tree: a perfect binary tree of gate nodes in breadth-first
/// (heap) order, with value vectors at the leaves.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftTree {
    pub depth: usize,
    pub alpha: f64,
    /// Gate biases, one per internal node, heap order (root first).
    pub biases: Vec<f64>,
    /// `2^depth` leaf vectors, leftmost leaf first.
    pub leaves: Vec<Vec<f64>>,
}

impl SoftTree {
    pub fn internal_count(&self) -> usize {
        (1 << self.depth) - 1
    }

    pub fn leaf_count(&self) -> usize {
        1 << self.depth
    }

    /// Leaf weights for one instance: top-down product of gate proportions.
    /// `activations` holds one value per internal node, heap order.
    pub fn leaf_blend(&self, activations: &[f64]) -> Result<Vec<f64>> {
        let internal = self.internal_count();
        if activations.len() != internal {
            return Err(Error::Contract(format!(
                "tree of depth {} needs {internal} activations, got {}",
                self.depth,
                activations.len()
            )));
        }
        let mut heap = vec![0.0; 2 * internal + 1];
        heap[0] = 1.0;
        for i in 0..internal {
            let d = soft_decision(activations[i], self.biases[i], self.alpha);
            heap[2 * i + 1] = heap[i] * d;
            heap[2 * i + 2] = heap[i] * (1.0 - d);
        }
        Ok(heap[internal..].to_vec())
    }

    /// Blend of leaf vectors under the leaf weights; stays inside the
    /// convex hull of the leaves.
    pub fn output(&self, activations: &[f64]) -> Result<Vec<f64>> {
        let mu = self.leaf_blend(activations)?;
        let width = self.leaves[0].len();
        let mut out = vec![0.0; width];
        for (w, leaf) in mu.iter().zip(&self.leaves) {
            for (o, v) in out.iter_mut().zip(leaf) {
                *o += w * v;
            }
        }
        Ok(out)
    }
}

/// Batched leaf-weight kernel recorded on the autodiff graph.
///
/// Input: gate proportions `[batch, trees * internal]`; output leaf weights
/// `[batch, trees * leaves]`, tree-major. The backward rule is division-free
/// (prefix products down, adjoint aggregates up), so it stays exact even
/// when gates saturate at 0 or 1.
#[derive(Debug, Clone, Copy)]
pub struct TreeBlend {
    pub trees: usize,
    pub depth: usize,
}

impl TreeBlend {
    fn internal(&self) -> usize {
        (1 << self.depth) - 1
    }

    fn leaves(&self) -> usize {
        1 << self.depth
    }
}

impl GraphOp for TreeBlend {
    fn label(&self) -> &'static str {
        "tree_blend"
    }

    fn forward(&self, inputs: &[&Tensor]) -> Result<Tensor> {
        let dec = inputs[0];
        let (internal, leaves) = (self.internal(), self.leaves());
        let width = self.trees * internal;
        if dec.shape().len() != 2 || dec.shape()[1] != width {
            return Err(Error::Contract(format!(
                "tree_blend: expected [batch, {width}] gate matrix, got {:?}",
                dec.shape()
            )));
        }
        let batch = dec.shape()[0];
        let mut out = vec![0.0; batch * self.trees * leaves];
        let mut heap = vec![0.0; 2 * internal + 1];
        for b in 0..batch {
            let row = dec.row(b);
            for t in 0..self.trees {
                let d = &row[t * internal..(t + 1) * internal];
                heap[0] = 1.0;
                for i in 0..internal {
                    heap[2 * i + 1] = heap[i] * d[i];
                    heap[2 * i + 2] = heap[i] * (1.0 - d[i]);
                }
                let dst = b * self.trees * leaves + t * leaves;
                out[dst..dst + leaves].copy_from_slice(&heap[internal..]);
            }
        }
        Tensor::new(vec![batch, self.trees * leaves], out)
    }

    fn backward(&self, inputs: &[&Tensor], _output: &Tensor, out_grad: &[f64]) -> Vec<Vec<f64>> {
        let dec = inputs[0];
        let (internal, leaves) = (self.internal(), self.leaves());
        let batch = dec.shape()[0];
        let mut grad = vec![0.0; dec.len()];
        let mut heap = vec![0.0; 2 * internal + 1];
        let mut adj = vec![0.0; 2 * internal + 1];
        for b in 0..batch {
            let row = dec.row(b);
            for t in 0..self.trees {
                let d = &row[t * internal..(t + 1) * internal];
                heap[0] = 1.0;
                for i in 0..internal {
                    heap[2 * i + 1] = heap[i] * d[i];
                    heap[2 * i + 2] = heap[i] * (1.0 - d[i]);
                }
                let src = b * self.trees * leaves + t * leaves;
                adj[internal..].copy_from_slice(&out_grad[src..src + leaves]);
                for i in (0..internal).rev() {
                    adj[i] = d[i] * adj[2 * i + 1] + (1.0 - d[i]) * adj[2 * i + 2];
                }
                let dst = b * self.trees * internal + t * internal;
                for i in 0..internal {
                    // d(out)/d(gate i) = prefix weight times the difference
                    // of subtree adjoints; no division by gate values.
                    grad[dst + i] = heap[i] * (adj[2 * i + 1] - adj[2 * i + 2]);
                }
            }
        }
        vec![grad]
    }
}

/// Handles returned by recording a forest head on a graph: the score node
/// plus the parameter and intermediate nodes a trainer needs.
#[derive(Debug, Clone, Copy)]
pub struct ForestPass {
    /// `[batch, classes]`; in product mode this is the summed log-factor
    /// (a logit), squash with sigmoid for a probability.
    pub score: NodeId,
    /// Leaf weights `[batch, trees * leaves_per_tree]`.
    pub memberships: NodeId,
    /// Gate bias parameter node `[trees * internal]`.
    pub biases: NodeId,
    /// Leaf value parameter node `[trees * leaves_per_tree, classes]`.
    pub leaves: NodeId,
}

/// Ensemble of soft trees of uniform depth acting as a network head.
///
/// Activation layout: tree `t` owns the contiguous activation slice
/// `[t * internal, (t+1) * internal)`, heap order within the tree; the map
/// from (tree, node) to activation index is a bijection onto the head's
/// input width.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ForestWire", into = "ForestWire")]
pub struct SoftForest {
    depth: usize,
    trees: usize,
    combination: Combination,
    alpha: f64,
    classes: usize,
    biases: Vec<f64>,
    leaves: Vec<f64>,
}

/// Checkpoint form: flat arrays, biases tree-major heap order, leaves
/// tree-major leaf-major class-minor.
#[derive(Serialize, Deserialize)]
struct ForestWire {
    depth: usize,
    trees: usize,
    combination: Combination,
    alpha: f64,
    biases: Vec<f64>,
    leaves: Vec<f64>,
}

impl From<SoftForest> for ForestWire {
    fn from(f: SoftForest) -> Self {
        ForestWire {
            depth: f.depth,
            trees: f.trees,
            combination: f.combination,
            alpha: f.alpha,
            biases: f.biases,
            leaves: f.leaves,
        }
    }
}

impl TryFrom<ForestWire> for SoftForest {
    type Error = Error;

    fn try_from(w: ForestWire) -> Result<Self> {
        let leaf_slots = w.trees * (1usize << w.depth);
        if leaf_slots == 0 || w.leaves.len() % leaf_slots != 0 {
            return Err(Error::Contract(format!(
                "forest checkpoint: {} leaf values do not fill {leaf_slots} slots evenly",
                w.leaves.len()
            )));
        }
        let classes = w.leaves.len() / leaf_slots;
        let mut forest = SoftForest::new(w.trees, w.depth, classes, w.alpha, w.combination)?;
        if w.biases.len() != forest.biases.len() {
            return Err(Error::Contract(format!(
                "forest checkpoint: {} biases, expected {}",
                w.biases.len(),
                forest.biases.len()
            )));
        }
        if w.biases.iter().chain(&w.leaves).any(|v| !v.is_finite()) {
            return Err(Error::Contract("forest checkpoint: non-finite parameter".into()));
        }
        forest.biases = w.biases;
        forest.leaves = w.leaves;
        Ok(forest)
    }
}

impl SoftForest {
    /// Zero-initialised forest; draw parameters with [`init_params`].
    ///
    /// [`init_params`]: SoftForest::init_params
    pub fn new(
        trees: usize,
        depth: usize,
        classes: usize,
        alpha: f64,
        combination: Combination,
    ) -> Result<Self> {
        if trees == 0 || depth == 0 || classes == 0 {
            return Err(Error::Contract(format!(
                "forest needs trees, depth and classes all positive, got {trees}/{depth}/{classes}"
            )));
        }
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::Contract(format!("gate steepness must be positive, got {alpha}")));
        }
        if combination == Combination::Product && classes != 1 {
            return Err(Error::Contract(format!(
                "product combination needs scalar trees, got {classes} classes"
            )));
        }
        let internal = (1usize << depth) - 1;
        let leaves = 1usize << depth;
        Ok(SoftForest {
            depth,
            trees,
            combination,
            alpha,
            classes,
            biases: vec![0.0; trees * internal],
            leaves: vec![0.0; trees * leaves * classes],
        })
    }

    pub fn init_params<R: Rng + ?Sized>(&mut self, rng: &mut R, stddev: f64) {
        let normal = Normal::new(0.0, stddev).expect("finite stddev");
        for b in &mut self.biases {
            *b = normal.sample(rng);
        }
        for l in &mut self.leaves {
            *l = normal.sample(rng);
        }
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn trees(&self) -> usize {
        self.trees
    }

    pub fn combination(&self) -> Combination {
        self.combination
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn internal_per_tree(&self) -> usize {
        (1 << self.depth) - 1
    }

    pub fn leaves_per_tree(&self) -> usize {
        1 << self.depth
    }

    /// Activation width the head consumes: one slot per gate node.
    pub fn input_width(&self) -> usize {
        self.trees * self.internal_per_tree()
    }

    pub fn param_count(&self) -> usize {
        self.biases.len() + self.leaves.len()
    }

    /// Activation slot consumed by gate `node` of tree `tree`.
    pub fn activation_index(&self, tree: usize, node: usize) -> usize {
        debug_assert!(tree < self.trees && node < self.internal_per_tree());
        tree * self.internal_per_tree() + node
    }

    pub fn biases(&self) -> &[f64] {
        &self.biases
    }

    pub fn biases_mut(&mut self) -> &mut [f64] {
        &mut self.biases
    }

    pub fn leaves(&self) -> &[f64] {
        &self.leaves
    }

    pub fn leaves_mut(&mut self) -> &mut [f64] {
        &mut self.leaves
    }

    /// Both parameter groups at once, for optimizers that hold one mutable
    /// slice per group.
    pub fn params_mut(&mut self) -> (&mut [f64], &mut [f64]) {
        (&mut self.biases, &mut self.leaves)
    }

    /// Copy of tree `t` as a standalone [`SoftTree`].
    pub fn tree(&self, t: usize) -> SoftTree {
        let internal = self.internal_per_tree();
        let leaves = self.leaves_per_tree();
        SoftTree {
            depth: self.depth,
            alpha: self.alpha,
            biases: self.biases[t * internal..(t + 1) * internal].to_vec(),
            leaves: (0..leaves)
                .map(|l| {
                    let base = (t * leaves + l) * self.classes;
                    self.leaves[base..base + self.classes].to_vec()
                })
                .collect(),
        }
    }

    /// Record the head on a graph for a `[batch, input_width]` activation
    /// node. Average mode yields the mean of tree outputs; product mode
    /// yields the summed per-tree log-factor.
    pub fn forward(&self, g: &mut Graph, activations: NodeId) -> Result<ForestPass> {
        let shape = g.value(activations).shape().to_vec();
        if shape.len() != 2 || shape[1] != self.input_width() {
            return Err(Error::Contract(format!(
                "forest head consumes [batch, {}], got {shape:?}",
                self.input_width()
            )));
        }
        let biases = g.input(Tensor::new(vec![self.input_width()], self.biases.clone())?)?;
        let leaves = g.input(Tensor::new(
            vec![self.trees * self.leaves_per_tree(), self.classes],
            self.leaves.clone(),
        )?)?;
        let recorded = record_head(
            g,
            activations,
            biases,
            leaves,
            self.trees,
            self.depth,
            self.alpha,
            self.combination,
        )?;
        Ok(ForestPass {
            score: recorded.0,
            memberships: recorded.1,
            biases,
            leaves,
        })
    }

    /// Pure single-instance evaluation. Average mode returns the mean tree
    /// output (length `classes`); product mode returns the single combined
    /// factor `S` (the exponential of the summed log-factors).
    pub fn forest_value(&self, activations: &[f64]) -> Result<Vec<f64>> {
        if activations.len() != self.input_width() {
            return Err(Error::Contract(format!(
                "forest head consumes {} activations, got {}",
                self.input_width(),
                activations.len()
            )));
        }
        let internal = self.internal_per_tree();
        let leaves = self.leaves_per_tree();
        let mut heap = vec![0.0; 2 * internal + 1];
        let mut acc = vec![0.0; self.classes];
        for t in 0..self.trees {
            heap[0] = 1.0;
            for i in 0..internal {
                let idx = t * internal + i;
                let d = soft_decision(activations[idx], self.biases[idx], self.alpha);
                heap[2 * i + 1] = heap[i] * d;
                heap[2 * i + 2] = heap[i] * (1.0 - d);
            }
            for l in 0..leaves {
                let mu = heap[internal + l];
                let base = (t * leaves + l) * self.classes;
                for c in 0..self.classes {
                    acc[c] += mu * self.leaves[base + c];
                }
            }
        }
        match self.combination {
            Combination::Average => {
                let inv = 1.0 / self.trees as f64;
                acc.iter_mut().for_each(|v| *v *= inv);
                Ok(acc)
            }
            Combination::Product => Ok(vec![acc[0].exp()]),
        }
    }

    /// Discriminator probability for a scalar-output forest: sigmoid of the
    /// score, which in product mode equals `S / (1 + S)`.
    pub fn probability(&self, activations: &[f64]) -> Result<f64> {
        if self.classes != 1 {
            return Err(Error::Contract(format!(
                "probability needs a scalar-output forest, got {} classes",
                self.classes
            )));
        }
        let internal = self.internal_per_tree();
        let leaves = self.leaves_per_tree();
        if activations.len() != self.input_width() {
            return Err(Error::Contract(format!(
                "forest head consumes {} activations, got {}",
                self.input_width(),
                activations.len()
            )));
        }
        let mut heap = vec![0.0; 2 * internal + 1];
        let mut score = 0.0;
        for t in 0..self.trees {
            heap[0] = 1.0;
            for i in 0..internal {
                let idx = t * internal + i;
                let d = soft_decision(activations[idx], self.biases[idx], self.alpha);
                heap[2 * i + 1] = heap[i] * d;
                heap[2 * i + 2] = heap[i] * (1.0 - d);
            }
            for l in 0..leaves {
                score += heap[internal + l] * self.leaves[t * leaves + l];
            }
        }
        if self.combination == Combination::Average {
            score /= self.trees as f64;
        }
        Ok(sigmoid_scalar(score))
    }
}

fn record_head(
    g: &mut Graph,
    activations: NodeId,
    biases: NodeId,
    leaves: NodeId,
    trees: usize,
    depth: usize,
    alpha: f64,
    combination: Combination,
) -> Result<(NodeId, NodeId)> {
    let diff = g.sub(activations, biases)?;
    let scaled = g.scale(diff, alpha)?;
    let gates = g.sigmoid(scaled)?;
    let mu = g.apply(Rc::new(TreeBlend { trees, depth }), &[gates])?;
    let total = g.matmul(mu, leaves)?;
    let score = match combination {
        Combination::Average => g.scale(total, 1.0 / trees as f64)?,
        // product mode: the matmul already sums per-tree log-factors
        Combination::Product => total,
    };
    Ok((score, mu))
}

/// Forest score as a pure function of graph nodes: gates, blend, leaf
/// matmul, and the combination rule. Exposed so gradient checks can drive
/// the head with arbitrary parameter values.
#[allow(clippy::too_many_arguments)]
pub fn score_from_ids(
    g: &mut Graph,
    activations: NodeId,
    biases: NodeId,
    leaves: NodeId,
    trees: usize,
    depth: usize,
    alpha: f64,
    combination: Combination,
) -> Result<NodeId> {
    record_head(g, activations, biases, leaves, trees, depth, alpha, combination)
        .map(|(score, _)| score)
}

/// One hard decision tree: every split sends `x[feature] >= threshold` to
/// the right child (ties right), and each leaf predicts the mean of the
/// training values routed into it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HardTree {
    pub depth: usize,
    /// Input feature consulted at each internal node, heap order.
    pub features: Vec<usize>,
    pub thresholds: Vec<f64>,
    /// One value per leaf, leftmost first.
    pub leaf_values: Vec<f64>,
}

impl HardTree {
    pub fn new(depth: usize, features: Vec<usize>, thresholds: Vec<f64>) -> Result<Self> {
        let internal = (1usize << depth) - 1;
        if features.len() != internal || thresholds.len() != internal {
            return Err(Error::Contract(format!(
                "hard tree of depth {depth} needs {internal} splits, got {}/{}",
                features.len(),
                thresholds.len()
            )));
        }
        Ok(HardTree {
            depth,
            features,
            thresholds,
            leaf_values: vec![0.0; 1 << depth],
        })
    }

    /// Choose splits by cycling through features per level and cutting at
    /// the midpoint of the samples reaching each node.
    pub fn from_midpoint_splits(data: &[f64], dim: usize, depth: usize) -> Result<Self> {
        if dim == 0 || data.is_empty() || data.len() % dim != 0 {
            return Err(Error::Contract("midpoint splits need a non-empty [n, dim] dataset".into()));
        }
        let n = data.len() / dim;
        let internal = (1usize << depth) - 1;
        let mut features = vec![0usize; internal];
        let mut thresholds = vec![0.0; internal];
        // node -> indices of samples reaching it, internal nodes only
        let mut reach: Vec<Vec<usize>> = vec![Vec::new(); 2 * internal + 1];
        reach[0] = (0..n).collect();
        for node in 0..internal {
            let level = (node + 1).ilog2() as usize;
            let axis = level % dim;
            features[node] = axis;
            let samples = std::mem::take(&mut reach[node]);
            let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
            for &s in &samples {
                let v = data[s * dim + axis];
                lo = lo.min(v);
                hi = hi.max(v);
            }
            thresholds[node] = if samples.is_empty() { 0.0 } else { (lo + hi) / 2.0 };
            for s in samples {
                let child = if data[s * dim + axis] >= thresholds[node] {
                    2 * node + 2
                } else {
                    2 * node + 1
                };
                reach[child].push(s);
            }
        }
        HardTree::new(depth, features, thresholds)
    }

    pub fn leaf_count(&self) -> usize {
        1 << self.depth
    }

    /// Index of the leaf `x` routes into.
    pub fn leaf_index(&self, x: &[f64]) -> usize {
        let internal = (1usize << self.depth) - 1;
        let mut node = 0;
        while node < internal {
            let right = x[self.features[node]] >= self.thresholds[node];
            node = 2 * node + 1 + right as usize;
        }
        node - internal
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        self.leaf_values[self.leaf_index(x)]
    }

    /// Set each leaf to the mean of the training values routed into it; a
    /// leaf that receives no samples inherits the mean of its nearest
    /// ancestor that did.
    pub fn fit_leaf_values(&mut self, data: &[f64], dim: usize, values: &[f64]) -> Result<()> {
        if values.is_empty() || data.len() != values.len() * dim {
            return Err(Error::Contract(
                "leaf fitting needs a non-empty dataset with matching value count".into(),
            ));
        }
        let internal = (1usize << self.depth) - 1;
        let heap = 2 * internal + 1;
        let mut sums = vec![0.0; heap];
        let mut counts = vec![0usize; heap];
        for (i, v) in values.iter().enumerate() {
            let x = &data[i * dim..(i + 1) * dim];
            let mut node = 0;
            loop {
                sums[node] += v;
                counts[node] += 1;
                if node >= internal {
                    break;
                }
                let right = x[self.features[node]] >= self.thresholds[node];
                node = 2 * node + 1 + right as usize;
            }
        }
        for leaf in 0..self.leaf_count() {
            let mut node = internal + leaf;
            while counts[node] == 0 {
                node = (node - 1) / 2; // the root always has samples
            }
            self.leaf_values[leaf] = sums[node] / counts[node] as f64;
        }
        Ok(())
    }

    /// Soft tree that converges to this hard tree as steepness grows.
    ///
    /// A soft gate routes **left** when its activation exceeds the bias,
    /// while hard routing sends `>=` to the **right**, so the twin mirrors
    /// the tree: node positions are reversed within each level and leaves
    /// are reversed outright. Returns the twin plus the feature each of its
    /// gates must read (heap order), for assembling activations.
    pub fn soft_twin(&self, alpha: f64) -> (SoftTree, Vec<usize>) {
        let internal = (1usize << self.depth) - 1;
        let mut biases = vec![0.0; internal];
        let mut features = vec![0usize; internal];
        for node in 0..internal {
            let level = (node + 1).ilog2() as usize;
            let first = (1usize << level) - 1;
            let mirrored = first + ((1 << level) - 1 - (node - first));
            biases[node] = self.thresholds[mirrored];
            features[node] = self.features[mirrored];
        }
        let leaves = self
            .leaf_values
            .iter()
            .rev()
            .map(|v| vec![*v])
            .collect();
        (
            SoftTree {
                depth: self.depth,
                alpha,
                biases,
                leaves,
            },
            features,
        )
    }
}

/// Ensemble of hard trees; prediction is the plain average across trees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HardForest {
    pub trees: Vec<HardTree>,
}

impl HardForest {
    pub fn fit(&mut self, data: &[f64], dim: usize, values: &[f64]) -> Result<()> {
        for tree in &mut self.trees {
            tree.fit_leaf_values(data, dim, values)?;
        }
        Ok(())
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        let total: f64 = self.trees.iter().map(|t| t.predict(x)).sum();
        total / self.trees.len() as f64
    }
}
