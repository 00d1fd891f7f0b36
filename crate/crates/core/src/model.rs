//! Translation-equivariant 1D convolutional pitch encoder.
//!
//! A stack of stride-1 convolutions over the frequency axis with leaky-relu
//! between layers, a center crop and a softmax. With zero padding the map
//! commutes with translations away from the borders; with circular padding
//! and no crop it commutes with cyclic shifts exactly.

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::checkpoint::Checkpoint;
use crate::error::{Error, Result};
use crate::grad::{ConvSpec, Gradients, NodeId, PaddingMode, Tape, Tensor};
use crate::losses::PitchPosterior;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncoderConfig {
    pub n_bins_in: usize,
    pub n_bins_out: usize,
    /// Kernel width of each layer; all odd.
    pub kernels: Vec<usize>,
    /// Output channels of each layer; the last must be 1.
    pub channels: Vec<usize>,
    pub leaky_slope: f64,
    pub padding: PaddingMode,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            n_bins_in: 216,
            n_bins_out: 168,
            kernels: vec![15, 9, 5, 3],
            channels: vec![8, 8, 4, 1],
            leaky_slope: 0.3,
            padding: PaddingMode::Zero,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.kernels.is_empty() || self.kernels.len() != self.channels.len() {
            return bad(format!(
                "{} kernels for {} channel entries",
                self.kernels.len(),
                self.channels.len()
            ));
        }
        if self.kernels.iter().any(|&k| k % 2 == 0) {
            return bad(format!("kernel widths must be odd, got {:?}", self.kernels));
        }
        if self.channels.contains(&0) || self.channels.last() != Some(&1) {
            return bad(format!("channels must be positive and end in 1, got {:?}", self.channels));
        }
        if self.n_bins_out == 0 || self.n_bins_out > self.n_bins_in || !(self.n_bins_in - self.n_bins_out).is_multiple_of(2) {
            return bad(format!(
                "cannot center-crop {} bins to {}",
                self.n_bins_in, self.n_bins_out
            ));
        }
        if self.padding == PaddingMode::Circular && self.n_bins_out != self.n_bins_in {
            return bad("circular padding requires n_bins_out == n_bins_in".into());
        }
        if !(self.leaky_slope.is_finite() && self.leaky_slope >= 0.0) {
            return bad(format!("leaky slope {} must be nonnegative", self.leaky_slope));
        }
        Ok(())
    }

    /// Input bin of output bin 0.
    pub fn crop_offset(&self) -> usize {
        (self.n_bins_in - self.n_bins_out) / 2
    }

    pub fn receptive_field(&self) -> usize {
        1 + self.kernels.iter().map(|k| k - 1).sum::<usize>()
    }

    /// `sum_l k_l * c_in_l * c_out_l + c_out_l`.
    pub fn param_count(&self) -> usize {
        let mut c_in = 1;
        let mut total = 0;
        for (&k, &c_out) in self.kernels.iter().zip(&self.channels) {
            total += k * c_in * c_out + c_out;
            c_in = c_out;
        }
        total
    }

    fn layer_shapes(&self) -> Vec<([usize; 3], usize)> {
        let mut c_in = 1;
        self.kernels
            .iter()
            .zip(&self.channels)
            .map(|(&k, &c_out)| {
                let s = ([c_out, c_in, k], c_out);
                c_in = c_out;
                s
            })
            .collect()
    }

    pub fn param_names(&self) -> Vec<String> {
        (0..self.kernels.len())
            .flat_map(|l| [format!("conv{l}.weight"), format!("conv{l}.bias")])
            .collect()
    }
}

/// Parameters and the graph nodes they were bound to by [`Encoder::forward`].
#[derive(Debug, Clone, Copy)]
pub struct ForwardNodes {
    pub input: NodeId,
    pub logits: NodeId,
    pub probs: NodeId,
    /// First parameter node; the rest follow consecutively.
    first_param: NodeId,
    n_params: usize,
}

impl ForwardNodes {
    /// Parameter node ids in [`Encoder::params`] order.
    pub fn param_nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        (0..self.n_params).map(move |i| NodeId::from_index(self.first_param.index() + i))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Encoder {
    config: EncoderConfig,
    /// `[conv0.weight, conv0.bias, conv1.weight, ...]`.
    params: Vec<Tensor>,
}

impl Encoder {
    /// Kaiming-uniform kernels for leaky-relu, zero biases.
    pub fn init(config: EncoderConfig, rng: &mut impl Rng) -> Result<Self> {
        config.validate()?;
        let gain = 1.0 + config.leaky_slope * config.leaky_slope;
        let mut params = Vec::new();
        for ([c_out, c_in, k], nb) in config.layer_shapes() {
            let bound = (6.0 / (gain * (c_in * k) as f64)).sqrt();
            let w = (0..c_out * c_in * k).map(|_| rng.random_range(-bound..bound)).collect();
            params.push(Tensor::new(vec![c_out, c_in, k], w)?);
            params.push(Tensor::zeros(vec![nb]));
        }
        Ok(Self { config, params })
    }

    pub fn from_params(config: EncoderConfig, params: Vec<Tensor>) -> Result<Self> {
        config.validate()?;
        let shapes = config.layer_shapes();
        if params.len() != 2 * shapes.len() {
            return Err(Error::Shape(format!("expected {} parameter tensors, got {}", 2 * shapes.len(), params.len())));
        }
        for (l, (w, b)) in shapes.iter().enumerate() {
            if params[2 * l].shape() != w.as_slice() || params[2 * l + 1].shape() != [*b] {
                return Err(Error::Shape(format!(
                    "layer {l}: got {:?} and {:?}, expected {w:?} and [{b}]",
                    params[2 * l].shape(),
                    params[2 * l + 1].shape()
                )));
            }
        }
        Ok(Self { config, params })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.config
    }

    pub fn params(&self) -> &[Tensor] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor] {
        &mut self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.iter().map(Tensor::len).sum()
    }

    /// Records the forward pass on `tape`. Parameters become variables when
    /// `track_params` is set and constants otherwise.
    pub fn forward(&self, tape: &mut Tape, x: &[f64], track_params: bool) -> Result<ForwardNodes> {
        let cfg = &self.config;
        if x.len() != cfg.n_bins_in {
            return Err(Error::Shape(format!("encoder input has {} bins, expected {}", x.len(), cfg.n_bins_in)));
        }
        let first_param = NodeId::from_index(tape.len());
        let nodes: Vec<NodeId> = self
            .params
            .iter()
            .map(|p| if track_params { tape.variable(p.clone()) } else { tape.constant(p.clone()) })
            .collect();
        let input = tape.constant(Tensor::new(vec![1, x.len()], x.to_vec())?);
        let mut h = input;
        let last = cfg.kernels.len() - 1;
        for (l, &k) in cfg.kernels.iter().enumerate() {
            h = tape.conv1d(h, nodes[2 * l], Some(nodes[2 * l + 1]), ConvSpec::same(k, cfg.padding))?;
            if l < last {
                h = tape.leaky_relu(h, cfg.leaky_slope);
            }
        }
        let logits = tape.crop(h, cfg.crop_offset(), cfg.n_bins_out)?;
        let probs = tape.softmax(logits);
        Ok(ForwardNodes {
            input,
            logits,
            probs,
            first_param,
            n_params: nodes.len(),
        })
    }

    /// Pre-softmax activations.
    pub fn logits(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let f = self.forward(&mut tape, x, false)?;
        Ok(tape.value(f.logits).data().to_vec())
    }

    pub fn encode(&self, x: &[f64]) -> Result<PitchPosterior> {
        Ok(PitchPosterior::from_logits(&self.logits(x)?))
    }

    /// Parameter gradients in [`params`](Self::params) order.
    pub fn param_grads(&self, nodes: &ForwardNodes, grads: &Gradients) -> Vec<Vec<f64>> {
        nodes
            .param_nodes()
            .zip(&self.params)
            .map(|(id, p)| grads.get_or_zeros(id, p.len()))
            .collect()
    }

    /// Appends parameters as `conv{l}.weight` / `conv{l}.bias` tensors.
    pub fn write_tensors(&self, ckpt: &mut Checkpoint) {
        for (name, p) in self.config.param_names().into_iter().zip(&self.params) {
            ckpt.push(name, p.clone());
        }
    }

    pub fn read_tensors(config: EncoderConfig, ckpt: &Checkpoint) -> Result<Self> {
        let params = config
            .param_names()
            .iter()
            .map(|n| ckpt.require(n).cloned())
            .collect::<Result<Vec<_>>>()?;
        Self::from_params(config, params)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut ckpt = Checkpoint::new(serde_json::json!({ "encoder": self.config }));
        self.write_tensors(&mut ckpt);
        ckpt.write(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_checkpoint(&Checkpoint::read(path)?)
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        let config = serde_json::from_value(ckpt.metadata["encoder"].clone()).map_err(|e| Error::Format {
            offset: 0,
            message: format!("encoder config: {e}"),
        })?;
        Self::read_tensors(config, ckpt)
    }
}
