//! Declarative model specs and runnable networks.
//!
//! A [`ModelSpec`] lists layers (affine, activations, and exactly one final
//! head — either a fully connected projection or a soft decision forest) and
//! is validated before any parameters are allocated.  [`Network`] binds a
//! spec to concrete parameters drawn deterministically from a seed, records
//! forward passes on a [`Graph`] for training, evaluates inputs purely, and
//! linearises per-instance losses around the head parameters to produce the
//! Jacobian whose condition number serves as a training-health diagnostic.

use std::fs;
use std::ops::Range;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forest::{Combination, ForestPass, SoftForest};
use crate::linalg;
use crate::tensor::{Graph, NodeId, Tensor};

/// Smoothing constant inside the square root of per-instance losses so the
/// Jacobian stays defined when a loss reaches exactly zero.
pub const ROOT_LOSS_EPS: f64 = 1e-12;

fn default_alpha() -> f64 {
    1.0
}

fn default_classes() -> usize {
    1
}

fn default_init_std() -> f64 {
    0.02
}

/// One layer of a [`ModelSpec`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "layer", rename_all = "snake_case")]
pub enum LayerSpec {
    /// Dense map `x·W + b` with `W: [input, output]`, `b: [output]`.
    Affine { input: usize, output: usize },
    Relu,
    Sigmoid,
    /// Fully connected head: an affine map that must close the network.
    FcHead { output: usize },
    /// Soft decision forest head consuming `trees · (2^depth − 1)` gate
    /// activations and emitting `classes` outputs per instance.
    ForestHead {
        trees: usize,
        depth: usize,
        combination: Combination,
        #[serde(default = "default_alpha")]
        alpha: f64,
        #[serde(default = "default_classes")]
        classes: usize,
    },
}

impl LayerSpec {
    pub fn is_head(&self) -> bool {
        matches!(self, LayerSpec::FcHead { .. } | LayerSpec::ForestHead { .. })
    }

    /// Parameter count once the incoming width is known.
    fn param_count(&self, input: usize) -> usize {
        match self {
            LayerSpec::Affine { input: i, output: o } => i * o + o,
            LayerSpec::FcHead { output } => input * output + output,
            LayerSpec::ForestHead { trees, depth, classes, .. } => {
                let internal = (1usize << depth) - 1;
                let leaves = 1usize << depth;
                trees * internal + trees * leaves * classes
            }
            LayerSpec::Relu | LayerSpec::Sigmoid => 0,
        }
    }
}

/// Input/output widths and total parameter count implied by a spec.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SpecShape {
    pub input: usize,
    pub output: usize,
    pub params: usize,
    pub head_params: usize,
}

/// Declarative network description: an ordered layer list plus the standard
/// deviation of the zero-mean Gaussian used to draw initial parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub layers: Vec<LayerSpec>,
    #[serde(default = "default_init_std")]
    pub init_std: f64,
}

impl ModelSpec {
    pub fn new(layers: Vec<LayerSpec>) -> Self {
        ModelSpec { layers, init_std: default_init_std() }
    }

    /// Checks the structural invariants and returns the implied shape.
    ///
    /// Rules: the first layer is affine (it fixes the input width), widths
    /// chain, exactly one head exists and it is the final layer, and the
    /// forest head consumes exactly `trees · (2^depth − 1)` activations.
    pub fn validate(&self) -> Result<SpecShape> {
        if !(self.init_std > 0.0 && self.init_std.is_finite()) {
            return Err(Error::Spec(format!(
                "init_std must be positive and finite, got {}",
                self.init_std
            )));
        }
        let first = self
            .layers
            .first()
            .ok_or_else(|| Error::Spec("model needs at least one layer".into()))?;
        let (input, mut width) = match first {
            LayerSpec::Affine { input, output } => (*input, *output),
            other => {
                return Err(Error::Spec(format!(
                    "first layer must be affine to fix the input width, got {other:?}"
                )))
            }
        };
        if input == 0 {
            return Err(Error::Spec("input width must be positive".into()));
        }
        let mut params = first.param_count(input);
        let mut head_params = 0usize;
        let mut head_seen = false;
        for (idx, layer) in self.layers.iter().enumerate().skip(1) {
            if head_seen {
                return Err(Error::Spec(format!(
                    "layer {idx} follows the head; the head must be the final layer"
                )));
            }
            let layer_params = layer.param_count(width);
            match layer {
                LayerSpec::Affine { input, output } => {
                    if *input != width {
                        return Err(Error::Spec(format!(
                            "layer {idx} expects {input} inputs but receives {width}"
                        )));
                    }
                    width = *output;
                }
                LayerSpec::Relu | LayerSpec::Sigmoid => {}
                LayerSpec::FcHead { output } => {
                    if *output == 0 {
                        return Err(Error::Spec("head output width must be positive".into()));
                    }
                    width = *output;
                    head_seen = true;
                    head_params = layer_params;
                }
                LayerSpec::ForestHead { trees, depth, classes, alpha, combination } => {
                    if *trees == 0 || *depth == 0 || *classes == 0 {
                        return Err(Error::Spec(format!(
                            "forest head needs positive trees/depth/classes, got {trees}/{depth}/{classes}"
                        )));
                    }
                    if !(*alpha > 0.0 && alpha.is_finite()) {
                        return Err(Error::Spec(format!(
                            "forest head steepness must be positive, got {alpha}"
                        )));
                    }
                    if *combination == Combination::Product && *classes != 1 {
                        return Err(Error::Spec(
                            "product combination requires a scalar-output forest".into(),
                        ));
                    }
                    let need = trees * ((1usize << depth) - 1);
                    if need != width {
                        return Err(Error::Spec(format!(
                            "forest head needs trees·(2^depth − 1) = {need} activations, got {width}"
                        )));
                    }
                    width = *classes;
                    head_seen = true;
                    head_params = layer_params;
                }
            }
            params += layer_params;
        }
        if !head_seen {
            if first.is_head() {
                return Err(Error::Spec(
                    "a head cannot be the first layer; prepend an affine layer".into(),
                ));
            }
            return Err(Error::Spec("model must end in fc_head or forest_head".into()));
        }
        Ok(SpecShape { input, output: width, params, head_params })
    }

    pub fn input_width(&self) -> Result<usize> {
        Ok(self.validate()?.input)
    }

    pub fn output_width(&self) -> Result<usize> {
        Ok(self.validate()?.output)
    }

    /// Total parameter count, computed analytically from the spec alone.
    pub fn param_count(&self) -> Result<usize> {
        Ok(self.validate()?.params)
    }

    /// Parameter count of the head layer alone.
    pub fn head_param_count(&self) -> Result<usize> {
        Ok(self.validate()?.head_params)
    }
}

/// Named model presets used by the experiments.
///
/// The fc/forest pairs share bodies so capacity comparisons isolate the head:
/// `xor_fc`/`xor_tree` are the tiny parity models, `clf_fc`/`clf_forest` the
/// 2-D multi-class classifiers, and `gan_fc`/`gan_forest_shallow`/
/// `gan_forest_deep` the discriminators for the 2-D generative experiments
/// (the deep forest body narrows from 128 to 124 activations so the trees
/// tile it exactly).  `gan_generator` maps latent draws to 2-D samples.
pub fn preset(name: &str) -> Result<ModelSpec> {
    let layers = match name {
        "xor_fc" => vec![
            LayerSpec::Affine { input: 3, output: 3 },
            LayerSpec::Relu,
            LayerSpec::FcHead { output: 1 },
        ],
        // One linear layer feeding a depth-2 tree; no activation in between.
        "xor_tree" => vec![
            LayerSpec::Affine { input: 3, output: 3 },
            LayerSpec::ForestHead {
                trees: 1,
                depth: 2,
                combination: Combination::Average,
                alpha: default_alpha(),
                classes: 1,
            },
        ],
        "clf_fc" => vec![
            LayerSpec::Affine { input: 2, output: 32 },
            LayerSpec::Relu,
            LayerSpec::Affine { input: 32, output: 63 },
            LayerSpec::Relu,
            LayerSpec::FcHead { output: 3 },
        ],
        "clf_forest" => vec![
            LayerSpec::Affine { input: 2, output: 32 },
            LayerSpec::Relu,
            LayerSpec::Affine { input: 32, output: 63 },
            LayerSpec::Relu,
            LayerSpec::ForestHead {
                trees: 9,
                depth: 3,
                combination: Combination::Average,
                alpha: default_alpha(),
                classes: 3,
            },
        ],
        "gan_fc" => vec![
            LayerSpec::Affine { input: 2, output: 32 },
            LayerSpec::Relu,
            LayerSpec::Affine { input: 32, output: 128 },
            LayerSpec::Relu,
            LayerSpec::FcHead { output: 1 },
        ],
        "gan_forest_shallow" => vec![
            LayerSpec::Affine { input: 2, output: 32 },
            LayerSpec::Relu,
            LayerSpec::Affine { input: 32, output: 128 },
            LayerSpec::Relu,
            LayerSpec::ForestHead {
                trees: 128,
                depth: 1,
                combination: Combination::Product,
                alpha: default_alpha(),
                classes: 1,
            },
        ],
        "gan_forest_deep" => vec![
            LayerSpec::Affine { input: 2, output: 32 },
            LayerSpec::Relu,
            LayerSpec::Affine { input: 32, output: 124 },
            LayerSpec::Relu,
            LayerSpec::ForestHead {
                trees: 4,
                depth: 5,
                combination: Combination::Product,
                alpha: default_alpha(),
                classes: 1,
            },
        ],
        "gan_generator" => {
            // Wider body and a larger init scale than the discriminators:
            // at N(0, 0.02²) the generator starts too close to the origin
            // and collapses onto one or two ring modes.
            return Ok(ModelSpec {
                layers: vec![
                    LayerSpec::Affine { input: 8, output: 64 },
                    LayerSpec::Relu,
                    LayerSpec::Affine { input: 64, output: 64 },
                    LayerSpec::Relu,
                    LayerSpec::FcHead { output: 2 },
                ],
                init_std: 0.1,
            });
        }
        other => {
            return Err(Error::Spec(format!(
                "unknown preset {other:?}; available: xor_fc, xor_tree, clf_fc, clf_forest, \
                 gan_fc, gan_forest_shallow, gan_forest_deep, gan_generator"
            )))
        }
    };
    Ok(ModelSpec::new(layers))
}

/// Parity models for an arbitrary input dimension.
///
/// The linear body keeps the published 3-D shapes (`dim` hidden units for
/// the FC pair, one depth `dim − 1` tree for the forest pair) so the two
/// heads stay capacity-matched as the problem grows.
pub fn xor_spec(dim: usize, tree_head: bool) -> Result<ModelSpec> {
    if dim < 2 {
        return Err(Error::Spec(format!("parity needs dim ≥ 2, got {dim}")));
    }
    let layers = if tree_head {
        let depth = dim - 1;
        vec![
            LayerSpec::Affine { input: dim, output: (1usize << depth) - 1 },
            LayerSpec::ForestHead {
                trees: 1,
                depth,
                combination: Combination::Average,
                alpha: default_alpha(),
                classes: 1,
            },
        ]
    } else {
        vec![
            LayerSpec::Affine { input: dim, output: dim },
            LayerSpec::Relu,
            LayerSpec::FcHead { output: 1 },
        ]
    };
    Ok(ModelSpec::new(layers))
}

/// Concrete parameters for one layer.
#[derive(Debug, Clone)]
enum LayerState {
    Affine { w: Tensor, b: Tensor },
    Relu,
    Sigmoid,
    FcHead { w: Tensor, b: Tensor },
    ForestHead(SoftForest),
}

/// Handles from recording a network forward pass on a graph.
#[derive(Debug, Clone)]
pub struct BatchPass {
    /// `[batch, out]` network output (head score).
    pub output: NodeId,
    /// Parameter leaf nodes in stable enumeration order (matches
    /// [`Network::param_slices`]).
    pub params: Vec<NodeId>,
    /// Index range of the head's parameters within `params`.
    pub head: Range<usize>,
    /// Forest bookkeeping when the head is a forest.
    pub forest: Option<ForestPass>,
}

/// Which parameters a loss Jacobian differentiates against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JacobianScope {
    #[default]
    /// Head parameters only — the default diagnostic.
    HeadOnly,
    /// Every parameter in the network; intended for tiny models.
    FullNetwork,
}

/// Row-major Jacobian of per-instance root-losses.
#[derive(Debug, Clone, PartialEq)]
pub struct Jacobian {
    pub data: Vec<f64>,
    pub rows: usize,
    pub cols: usize,
}

impl Jacobian {
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// Rank-truncated condition number of the Jacobian; see
    /// [`linalg::SingularSpectrum::condition_number`].
    pub fn condition_number(&self) -> Result<f64> {
        linalg::condition_number(&self.data, self.rows, self.cols)
    }

    pub fn spectrum(&self) -> Result<linalg::SingularSpectrum> {
        linalg::singular_values(&self.data, self.rows, self.cols)
    }
}

/// Serializable snapshot of a network: the spec, the seed it was built
/// from, and every parameter tensor in stable enumeration order.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub spec: ModelSpec,
    pub seed: u64,
    pub parameters: Vec<Tensor>,
}

/// A spec bound to concrete parameters.
#[derive(Debug, Clone)]
pub struct Network {
    spec: ModelSpec,
    seed: u64,
    shape: SpecShape,
    layers: Vec<LayerState>,
}

impl Network {
    /// Instantiates the spec with parameters drawn from `N(0, init_std²)`
    /// using a stream cipher generator keyed by `seed`.  Draw order is the
    /// enumeration order: per layer, weights then biases (forest gate
    /// biases then leaf values).
    pub fn build(spec: ModelSpec, seed: u64) -> Result<Network> {
        let shape = spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, spec.init_std).expect("validated stddev");
        fn draw(rng: &mut ChaCha8Rng, normal: &Normal<f64>, n: usize) -> Vec<f64> {
            (0..n).map(|_| normal.sample(rng)).collect()
        }
        let mut width = 0usize;
        let mut layers = Vec::with_capacity(spec.layers.len());
        for layer in &spec.layers {
            let state = match layer {
                LayerSpec::Affine { input, output } => {
                    width = *output;
                    LayerState::Affine {
                        w: Tensor::new(vec![*input, *output], draw(&mut rng, &normal, input * output))?,
                        b: Tensor::new(vec![*output], draw(&mut rng, &normal, *output))?,
                    }
                }
                LayerSpec::Relu => LayerState::Relu,
                LayerSpec::Sigmoid => LayerState::Sigmoid,
                LayerSpec::FcHead { output } => LayerState::FcHead {
                    w: Tensor::new(vec![width, *output], draw(&mut rng, &normal, width * output))?,
                    b: Tensor::new(vec![*output], draw(&mut rng, &normal, *output))?,
                },
                LayerSpec::ForestHead { trees, depth, combination, alpha, classes } => {
                    let mut forest =
                        SoftForest::new(*trees, *depth, *classes, *alpha, *combination)?;
                    forest.init_params(&mut rng, spec.init_std);
                    LayerState::ForestHead(forest)
                }
            };
            layers.push(state);
        }
        Ok(Network { spec, seed, shape, layers })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn input_width(&self) -> usize {
        self.shape.input
    }

    pub fn output_width(&self) -> usize {
        self.shape.output
    }

    pub fn param_count(&self) -> usize {
        self.shape.params
    }

    pub fn head_param_count(&self) -> usize {
        self.shape.head_params
    }

    /// The forest head, if the network has one.
    pub fn forest(&self) -> Option<&SoftForest> {
        self.layers.iter().find_map(|l| match l {
            LayerState::ForestHead(f) => Some(f),
            _ => None,
        })
    }

    /// Parameter groups in stable enumeration order.
    pub fn param_slices(&self) -> Vec<&[f64]> {
        let mut out = Vec::new();
        for layer in &self.layers {
            match layer {
                LayerState::Affine { w, b } | LayerState::FcHead { w, b } => {
                    out.push(w.data());
                    out.push(b.data());
                }
                LayerState::ForestHead(f) => {
                    out.push(f.biases());
                    out.push(f.leaves());
                }
                LayerState::Relu | LayerState::Sigmoid => {}
            }
        }
        out
    }

    /// Mutable view of the same groups, for optimizers.
    pub fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::new();
        for layer in &mut self.layers {
            match layer {
                LayerState::Affine { w, b } | LayerState::FcHead { w, b } => {
                    out.push(w.data_mut());
                    out.push(b.data_mut());
                }
                LayerState::ForestHead(f) => {
                    let (biases, leaves) = f.params_mut();
                    out.push(biases);
                    out.push(leaves);
                }
                LayerState::Relu | LayerState::Sigmoid => {}
            }
        }
        out
    }

    /// Human-readable name for each parameter group, aligned with
    /// [`Network::param_slices`].
    pub fn param_names(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (idx, layer) in self.layers.iter().enumerate() {
            match layer {
                LayerState::Affine { .. } => {
                    out.push(format!("layer{idx}.weight"));
                    out.push(format!("layer{idx}.bias"));
                }
                LayerState::FcHead { .. } => {
                    out.push(format!("layer{idx}.head.weight"));
                    out.push(format!("layer{idx}.head.bias"));
                }
                LayerState::ForestHead(_) => {
                    out.push(format!("layer{idx}.forest.biases"));
                    out.push(format!("layer{idx}.forest.leaves"));
                }
                LayerState::Relu | LayerState::Sigmoid => {}
            }
        }
        out
    }

    /// Records the forward pass on `g` starting from `batch` (`[B, in]`),
    /// registering each parameter group as a gradient-tracked leaf.
    pub fn record(&self, g: &mut Graph, batch: NodeId) -> Result<BatchPass> {
        let got = g.value(batch).shape().to_vec();
        if got.len() != 2 || got[1] != self.shape.input {
            return Err(Error::Contract(format!(
                "network expects [batch, {}] inputs, got {got:?}",
                self.shape.input
            )));
        }
        let mut x = batch;
        let mut params = Vec::new();
        let mut forest_pass = None;
        for layer in &self.layers {
            match layer {
                LayerState::Affine { w, b } | LayerState::FcHead { w, b } => {
                    let mut wt = w.clone();
                    wt.clear_grad();
                    let mut bt = b.clone();
                    bt.clear_grad();
                    let wid = g.input(wt)?;
                    let bid = g.input(bt)?;
                    params.push(wid);
                    params.push(bid);
                    let prod = g.matmul(x, wid)?;
                    x = g.add(prod, bid)?;
                }
                LayerState::Relu => x = g.relu(x)?,
                LayerState::Sigmoid => x = g.sigmoid(x)?,
                LayerState::ForestHead(f) => {
                    let pass = f.forward(g, x)?;
                    params.push(pass.biases);
                    params.push(pass.leaves);
                    x = pass.score;
                    forest_pass = Some(pass);
                }
            }
        }
        // Validation guarantees the head is last, so its two parameter
        // groups are the final two entries.
        let head = params.len() - 2..params.len();
        Ok(BatchPass { output: x, params, head, forest: forest_pass })
    }

    /// Pure inference: evaluates the network on `batch` without touching
    /// stored parameters.  Bit-identical across repeated calls.
    pub fn forward(&self, batch: &Tensor) -> Result<Tensor> {
        let mut g = Graph::new();
        let input = g.input(batch.clone())?;
        let pass = self.record(&mut g, input)?;
        Ok(g.value(pass.output).clone())
    }

    /// Jacobian of per-instance root-losses with respect to the selected
    /// parameter scope.
    ///
    /// For each batch row the network is re-recorded on a fresh graph,
    /// `instance_loss` maps the `[1, out]` output node to a scalar
    /// non-negative loss node, and the gradient of `√(loss + ε)` forms one
    /// Jacobian row.  Returns the plain batch output alongside the Jacobian.
    pub fn with_head_jacobian<F>(
        &self,
        batch: &Tensor,
        scope: JacobianScope,
        mut instance_loss: F,
    ) -> Result<(Tensor, Jacobian)>
    where
        F: FnMut(&mut Graph, NodeId, usize) -> Result<NodeId>,
    {
        let output = self.forward(batch)?;
        let rows = batch.shape()[0];
        let width = batch.shape()[1];
        let mut data = Vec::new();
        let mut cols = 0usize;
        for i in 0..rows {
            let mut g = Graph::new();
            let x = g.input(Tensor::new(vec![1, width], batch.row(i).to_vec())?)?;
            let pass = self.record(&mut g, x)?;
            let loss = instance_loss(&mut g, pass.output, i)?;
            let loss_val = g.value(loss);
            if loss_val.data().len() != 1 {
                return Err(Error::Contract(format!(
                    "instance loss must be scalar, got shape {:?}",
                    loss_val.shape()
                )));
            }
            if loss_val.data()[0] < 0.0 {
                return Err(Error::Contract(format!(
                    "instance loss must be non-negative, got {}",
                    loss_val.data()[0]
                )));
            }
            let eps = g.constant(ROOT_LOSS_EPS)?;
            let shifted = g.add(loss, eps)?;
            let root = g.sqrt(shifted)?;
            let wanted: Vec<NodeId> = match scope {
                JacobianScope::HeadOnly => pass.params[pass.head.clone()].to_vec(),
                JacobianScope::FullNetwork => pass.params.clone(),
            };
            let grads = g.grads_wrt(root, &wanted)?;
            let row_len: usize = grads.iter().map(|v| v.len()).sum();
            if i == 0 {
                cols = row_len;
                data.reserve(rows * cols);
            }
            for grad in grads {
                data.extend_from_slice(&grad);
            }
        }
        Ok((output, Jacobian { data, rows, cols }))
    }

    /// Snapshot of the current parameters.
    pub fn to_checkpoint(&self) -> Checkpoint {
        let parameters = self
            .param_slices()
            .into_iter()
            .map(|s| Tensor::new(vec![s.len()], s.to_vec()).expect("params nonempty"))
            .collect();
        Checkpoint { spec: self.spec.clone(), seed: self.seed, parameters }
    }

    /// Rebuilds a network from a snapshot; parameter group lengths must
    /// match the spec exactly.
    pub fn from_checkpoint(ckpt: Checkpoint) -> Result<Network> {
        let mut net = Network::build(ckpt.spec, ckpt.seed)?;
        {
            let slots = net.param_slices_mut();
            if slots.len() != ckpt.parameters.len() {
                return Err(Error::Contract(format!(
                    "checkpoint holds {} parameter groups, network needs {}",
                    ckpt.parameters.len(),
                    slots.len()
                )));
            }
            for (slot, tensor) in slots.into_iter().zip(&ckpt.parameters) {
                if slot.len() != tensor.data().len() {
                    return Err(Error::Contract(format!(
                        "checkpoint group of {} values does not fit slot of {}",
                        tensor.data().len(),
                        slot.len()
                    )));
                }
                slot.copy_from_slice(tensor.data());
            }
        }
        Ok(net)
    }

    /// Writes the checkpoint as JSON.
    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(&self.to_checkpoint())?;
        fs::write(path, json)?;
        Ok(())
    }

    /// Reads a JSON checkpoint written by [`Network::save`].
    pub fn load(path: &Path) -> Result<Network> {
        let text = fs::read_to_string(path)?;
        let ckpt: Checkpoint = serde_json::from_str(&text)?;
        Network::from_checkpoint(ckpt)
    }
}
