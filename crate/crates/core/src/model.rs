//! The three-branch network.
//!
//! ```text
//!            ┌─ sen.feature ──┬──────────────── sen.head ─→ softmax ─→ y_sen
//! x ─ trunk ─┼─ spec.feature ─┼──────────────── spec.head ─→ softmax ─→ y_spec
//!            └─ fusion.feature┴─ [sen, spec, fusion] ─ fusion.head ─→ softmax ─→ y_fusion
//! ```
//!
//! Every hidden layer is dense + tanh. The fusion head reads the
//! concatenation of all three branch features in that fixed order, and its
//! gradient flows back into the Sen and Spec feature layers.
//!
//! [`Topology::SingleHead`] drops the Sen and Spec branches: trunk, one
//! feature layer and a head on that feature layer alone.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::sync::atomic::{AtomicUsize, Ordering};

use rand::Rng;

use crate::error::{Error, Result};
use crate::label::Probs;
use crate::losses::{uncertainty_unchecked, BranchOutputs};
use crate::seed::rng_for;

const STREAM_INIT: u64 = 21;
const N_CLASSES: usize = 2;

static GENERATION: AtomicUsize = AtomicUsize::new(1);

fn next_generation() -> usize {
    GENERATION.fetch_add(1, Ordering::Relaxed)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Topology {
    ThreeBranch,
    SingleHead,
}

impl Topology {
    pub fn name(self) -> &'static str {
        match self {
            Topology::ThreeBranch => "three_branch",
            Topology::SingleHead => "single_head",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "three_branch" => Some(Topology::ThreeBranch),
            "single_head" => Some(Topology::SingleHead),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub input_dim: usize,
    pub trunk_dims: Vec<usize>,
    pub branch_dim: usize,
    pub seed: u64,
    pub topology: Topology,
}

impl ModelConfig {
    pub fn new(input_dim: usize) -> Self {
        Self {
            input_dim,
            trunk_dims: vec![64, 64, 64],
            branch_dim: 32,
            seed: 0,
            topology: Topology::ThreeBranch,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.branch_dim == 0 || self.trunk_dims.contains(&0) {
            return Err(Error::parameter("all layer widths must be >= 1"));
        }
        Ok(())
    }
}

/// Fully connected layer, `weight` row-major `[outputs, inputs]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            inputs,
            outputs,
            weight: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
        }
    }

    /// LeCun-uniform weights, zero bias.
    fn init(inputs: usize, outputs: usize, seed: u64, stream: &[u64]) -> Self {
        let mut rng = rng_for(seed, stream);
        let limit = libm::sqrt(3.0 / inputs as f64);
        let weight = (0..inputs * outputs)
            .map(|_| rng.random_range(-limit..limit))
            .collect();
        Self {
            inputs,
            outputs,
            weight,
            bias: vec![0.0; outputs],
        }
    }

    fn affine(&self, x: &[f64]) -> Vec<f64> {
        self.weight
            .chunks_exact(self.inputs)
            .zip(&self.bias)
            .map(|(row, b)| b + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>())
            .collect()
    }

    fn tanh(&self, x: &[f64]) -> Vec<f64> {
        let mut z = self.affine(x);
        z.iter_mut().for_each(|v| *v = libm::tanh(*v));
        z
    }

    /// Accumulates parameter gradients for upstream `dz` at input `x` into
    /// `grad` and returns the gradient with respect to `x`.
    fn backward(&self, x: &[f64], dz: &[f64], grad: &mut Dense) -> Vec<f64> {
        let mut dx = vec![0.0; self.inputs];
        for (o, &d) in dz.iter().enumerate() {
            if d == 0.0 {
                continue;
            }
            grad.bias[o] += d;
            let row = &self.weight[o * self.inputs..(o + 1) * self.inputs];
            let grow = &mut grad.weight[o * self.inputs..(o + 1) * self.inputs];
            for i in 0..self.inputs {
                grow[i] += d * x[i];
                dx[i] += d * row[i];
            }
        }
        dx
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    pub feature: Dense,
    pub head: Dense,
}

/// Network weights. Also used as the container for parameter gradients and
/// optimizer moments, which share the layout.
///
/// Mutation goes through [`ModelParams::slices_mut`] or
/// [`ModelParams::tensor_mut`], which invalidate earlier forward caches.
/// Equality compares configuration and values only.
#[derive(Debug, Clone)]
pub struct ModelParams {
    config: ModelConfig,
    trunk: Vec<Dense>,
    sen: Option<Branch>,
    spec: Option<Branch>,
    fusion: Branch,
    generation: usize,
}

impl PartialEq for ModelParams {
    fn eq(&self, other: &Self) -> bool {
        self.config == other.config
            && self.trunk == other.trunk
            && self.sen == other.sen
            && self.spec == other.spec
            && self.fusion == other.fusion
    }
}

/// Name, shape and row-major values of one parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorView<'a> {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: &'a [f64],
}

/// Upstream gradients of the total loss with respect to the three output
/// probability vectors.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct OutputGrads {
    pub sen: Probs,
    pub spec: Probs,
    pub fusion: Probs,
}

/// Activations saved by [`ModelParams::forward`] for the backward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardCache {
    generation: usize,
    input: Vec<f64>,
    trunk: Vec<Vec<f64>>,
    sen: Option<Vec<f64>>,
    spec: Option<Vec<f64>>,
    fusion: Vec<f64>,
    outputs: BranchOutputs,
}

impl ForwardCache {
    pub fn outputs(&self) -> &BranchOutputs {
        &self.outputs
    }
}

impl ModelParams {
    pub fn new(config: &ModelConfig) -> Result<Self> {
        config.validate()?;
        let seed = config.seed;
        let mut trunk = Vec::with_capacity(config.trunk_dims.len());
        let mut width = config.input_dim;
        for (i, &w) in config.trunk_dims.iter().enumerate() {
            trunk.push(Dense::init(width, w, seed, &[STREAM_INIT, 0, i as u64]));
            width = w;
        }
        let b = config.branch_dim;
        let branch = |id: u64, head_in: usize| Branch {
            feature: Dense::init(width, b, seed, &[STREAM_INIT, id, 0]),
            head: Dense::init(head_in, N_CLASSES, seed, &[STREAM_INIT, id, 1]),
        };
        let (sen, spec, fusion) = match config.topology {
            Topology::ThreeBranch => (Some(branch(1, b)), Some(branch(2, b)), branch(3, 3 * b)),
            Topology::SingleHead => (None, None, branch(3, b)),
        };
        Ok(Self {
            config: config.clone(),
            trunk,
            sen,
            spec,
            fusion,
            generation: next_generation(),
        })
    }

    /// Same layout, all values zero.
    pub fn zeros_like(&self) -> Self {
        let z = |d: &Dense| Dense::zeros(d.inputs, d.outputs);
        let zb = |b: &Branch| Branch {
            feature: z(&b.feature),
            head: z(&b.head),
        };
        Self {
            config: self.config.clone(),
            trunk: self.trunk.iter().map(z).collect(),
            sen: self.sen.as_ref().map(zb),
            spec: self.spec.as_ref().map(zb),
            fusion: zb(&self.fusion),
            generation: next_generation(),
        }
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn topology(&self) -> Topology {
        self.config.topology
    }

    pub fn num_params(&self) -> usize {
        self.slices().iter().map(|s| s.len()).sum()
    }

    fn layers(&self) -> Vec<(String, &Dense)> {
        let mut out: Vec<(String, &Dense)> = self
            .trunk
            .iter()
            .enumerate()
            .map(|(i, d)| (format!("trunk.{i}"), d))
            .collect();
        for (name, b) in [("sen", &self.sen), ("spec", &self.spec)] {
            if let Some(b) = b {
                out.push((format!("{name}.feature"), &b.feature));
                out.push((format!("{name}.head"), &b.head));
            }
        }
        out.push((String::from("fusion.feature"), &self.fusion.feature));
        out.push((String::from("fusion.head"), &self.fusion.head));
        out
    }

    fn layers_mut(&mut self) -> Vec<&mut Dense> {
        let mut out: Vec<&mut Dense> = self.trunk.iter_mut().collect();
        for b in [&mut self.sen, &mut self.spec].into_iter().flatten() {
            out.push(&mut b.feature);
            out.push(&mut b.head);
        }
        out.push(&mut self.fusion.feature);
        out.push(&mut self.fusion.head);
        out
    }

    /// Every tensor in canonical order: trunk layers, then sen, spec and
    /// fusion (feature before head), weight before bias.
    pub fn tensors(&self) -> Vec<TensorView<'_>> {
        let mut out = Vec::new();
        for (name, d) in self.layers() {
            out.push(TensorView {
                name: format!("{name}.weight"),
                shape: vec![d.outputs, d.inputs],
                values: &d.weight,
            });
            out.push(TensorView {
                name: format!("{name}.bias"),
                shape: vec![d.outputs],
                values: &d.bias,
            });
        }
        out
    }

    /// Flat views in [`Self::tensors`] order.
    pub fn slices(&self) -> Vec<&[f64]> {
        self.tensors().into_iter().map(|t| t.values).collect()
    }

    /// Mutable flat views in [`Self::tensors`] order. Invalidates forward
    /// caches taken before the call.
    pub fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        self.generation = next_generation();
        let mut out: Vec<&mut [f64]> = Vec::new();
        for d in self.layers_mut() {
            out.push(&mut d.weight);
            out.push(&mut d.bias);
        }
        out
    }

    /// Mutable access to one tensor by name, e.g. `"trunk.1.weight"`.
    pub fn tensor_mut(&mut self, name: &str) -> Option<&mut [f64]> {
        let idx = self.tensors().iter().position(|t| t.name == name)?;
        self.slices_mut().into_iter().nth(idx)
    }

    pub fn trunk(&self) -> &[Dense] {
        &self.trunk
    }

    pub fn sen(&self) -> Option<&Branch> {
        self.sen.as_ref()
    }

    pub fn spec(&self) -> Option<&Branch> {
        self.spec.as_ref()
    }

    pub fn fusion(&self) -> &Branch {
        &self.fusion
    }

    /// Rebuilds parameters from named tensors, e.g. a loaded checkpoint.
    pub fn from_tensors<'a>(
        config: &ModelConfig,
        tensors: impl IntoIterator<Item = (&'a str, &'a [usize], &'a [f64])>,
    ) -> Result<Self> {
        let mut params = Self::new(config)?;
        let expected: Vec<(String, Vec<usize>)> = params
            .tensors()
            .into_iter()
            .map(|t| (t.name, t.shape))
            .collect();
        let mut seen = 0;
        {
            let mut slots = params.slices_mut();
            for (name, shape, values) in tensors {
                let idx = expected
                    .iter()
                    .position(|(n, _)| n == name)
                    .ok_or_else(|| Error::Data(format!("unexpected tensor {name}")))?;
                if expected[idx].1 != shape || values.len() != slots[idx].len() {
                    return Err(Error::Data(format!(
                        "tensor {name}: shape {shape:?} does not match {:?}",
                        expected[idx].1
                    )));
                }
                if values.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Data(format!("tensor {name} has non-finite values")));
                }
                slots[idx].copy_from_slice(values);
                seen += 1;
            }
        }
        if seen != expected.len() {
            return Err(Error::Data(format!(
                "expected {} tensors, got {seen}",
                expected.len()
            )));
        }
        Ok(params)
    }

    pub fn all_finite(&self) -> bool {
        self.slices()
            .iter()
            .all(|s| s.iter().all(|v| v.is_finite()))
    }

    /// Runs the network on one feature vector.
    pub fn forward(&self, x: &[f64]) -> Result<(BranchOutputs, ForwardCache)> {
        if x.len() != self.config.input_dim {
            return Err(Error::parameter(format!(
                "expected {} features, got {}",
                self.config.input_dim,
                x.len()
            )));
        }
        let mut trunk: Vec<Vec<f64>> = Vec::with_capacity(self.trunk.len());
        for layer in &self.trunk {
            let h = layer.tanh(trunk.last().map_or(x, |v| v.as_slice()));
            trunk.push(h);
        }
        let h = trunk.last().map_or(x, |v| v.as_slice());

        let fusion = self.fusion.feature.tanh(h);
        let (outputs, sen, spec) = match (&self.sen, &self.spec) {
            (Some(sb), Some(pb)) => {
                let fs = sb.feature.tanh(h);
                let fp = pb.feature.tanh(h);
                let y_sen = softmax(&sb.head.affine(&fs));
                let y_spec = softmax(&pb.head.affine(&fp));
                let concat: Vec<f64> = fs.iter().chain(&fp).chain(&fusion).copied().collect();
                let y_fusion = softmax(&self.fusion.head.affine(&concat));
                let outputs = BranchOutputs {
                    y_sen,
                    y_spec,
                    y_fusion,
                    uncertainty: uncertainty_unchecked(&y_sen, &y_spec),
                };
                (outputs, Some(fs), Some(fp))
            }
            _ => {
                let y = softmax(&self.fusion.head.affine(&fusion));
                let outputs = BranchOutputs {
                    y_sen: y,
                    y_spec: y,
                    y_fusion: y,
                    uncertainty: 0.0,
                };
                (outputs, None, None)
            }
        };
        let cache = ForwardCache {
            generation: self.generation,
            input: x.to_vec(),
            trunk,
            sen,
            spec,
            fusion,
            outputs,
        };
        Ok((outputs, cache))
    }

    /// Outputs only.
    pub fn predict(&self, x: &[f64]) -> Result<BranchOutputs> {
        self.forward(x).map(|(o, _)| o)
    }

    /// Parameter gradients for one sample.
    pub fn backward(&self, cache: &ForwardCache, upstream: &OutputGrads) -> Result<ModelParams> {
        let mut grads = self.zeros_like();
        self.backward_into(cache, upstream, &mut grads)?;
        Ok(grads)
    }

    /// Adds this sample's parameter gradients into `grads`.
    ///
    /// For a single-head model only `upstream.fusion` is used.
    pub fn backward_into(
        &self,
        cache: &ForwardCache,
        upstream: &OutputGrads,
        grads: &mut ModelParams,
    ) -> Result<()> {
        if cache.generation != self.generation {
            return Err(Error::contract(
                "forward cache is stale for these parameters",
            ));
        }
        if grads.topology() != self.topology() || grads.trunk.len() != self.trunk.len() {
            return Err(Error::contract(
                "gradient buffer layout does not match model",
            ));
        }
        let h = cache.trunk.last().unwrap_or(&cache.input);
        let b = self.config.branch_dim;
        let mut dh = vec![0.0; h.len()];

        let dz_fusion = softmax_backward(&cache.outputs.y_fusion, &upstream.fusion);
        let mut d_fusion_feat;
        match (&self.sen, &self.spec, &mut grads.sen, &mut grads.spec) {
            (Some(sb), Some(pb), Some(gs), Some(gp)) => {
                let fs = cache
                    .sen
                    .as_ref()
                    .ok_or_else(|| Error::contract("cache lacks sen features"))?;
                let fp = cache
                    .spec
                    .as_ref()
                    .ok_or_else(|| Error::contract("cache lacks spec features"))?;
                let concat: Vec<f64> = fs.iter().chain(fp).chain(&cache.fusion).copied().collect();
                let dc = self
                    .fusion
                    .head
                    .backward(&concat, &dz_fusion, &mut grads.fusion.head);

                let mut d_sen = sb.head.backward(
                    fs,
                    &softmax_backward(&cache.outputs.y_sen, &upstream.sen),
                    &mut gs.head,
                );
                let mut d_spec = pb.head.backward(
                    fp,
                    &softmax_backward(&cache.outputs.y_spec, &upstream.spec),
                    &mut gp.head,
                );
                add_into(&mut d_sen, &dc[..b]);
                add_into(&mut d_spec, &dc[b..2 * b]);
                d_fusion_feat = dc[2 * b..].to_vec();

                tanh_backward(&mut d_sen, fs);
                add_into(&mut dh, &sb.feature.backward(h, &d_sen, &mut gs.feature));
                tanh_backward(&mut d_spec, fp);
                add_into(&mut dh, &pb.feature.backward(h, &d_spec, &mut gp.feature));
            }
            (None, None, None, None) => {
                d_fusion_feat =
                    self.fusion
                        .head
                        .backward(&cache.fusion, &dz_fusion, &mut grads.fusion.head);
            }
            _ => {
                return Err(Error::contract(
                    "gradient buffer layout does not match model",
                ))
            }
        }
        tanh_backward(&mut d_fusion_feat, &cache.fusion);
        add_into(
            &mut dh,
            &self
                .fusion
                .feature
                .backward(h, &d_fusion_feat, &mut grads.fusion.feature),
        );

        let mut d = dh;
        for (i, layer) in self.trunk.iter().enumerate().rev() {
            tanh_backward(&mut d, &cache.trunk[i]);
            let input = if i == 0 {
                &cache.input
            } else {
                &cache.trunk[i - 1]
            };
            d = layer.backward(input, &d, &mut grads.trunk[i]);
        }
        Ok(())
    }
}

/// Numerically stable softmax over two logits.
fn softmax(z: &[f64]) -> Probs {
    let m = z[0].max(z[1]);
    let e0 = libm::exp(z[0] - m);
    let e1 = libm::exp(z[1] - m);
    let s = e0 + e1;
    [e0 / s, e1 / s]
}

fn softmax_backward(y: &Probs, g: &Probs) -> [f64; 2] {
    let dot = y[0] * g[0] + y[1] * g[1];
    [y[0] * (g[0] - dot), y[1] * (g[1] - dot)]
}

fn tanh_backward(d: &mut [f64], activation: &[f64]) {
    for (g, a) in d.iter_mut().zip(activation) {
        *g *= 1.0 - a * a;
    }
}

fn add_into(acc: &mut [f64], x: &[f64]) {
    for (a, v) in acc.iter_mut().zip(x) {
        *a += v;
    }
}
