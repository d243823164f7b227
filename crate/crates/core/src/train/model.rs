//! Toy 1-D residual classifier used by the training harness.
//!
//! ```text
//! stem conv k5 s2 -> gelu -> [residual block] x B -> global avg+max pool
//!   -> neck linear (2W -> D) -> head linear (D -> K, ETF-initialized)
//! ```
//!
//! Block `i` uses stride 2 in its first conv when `i` is odd.

use crate::error::{Error, Result};
use crate::init::{EtfConfig, InitPlan, LayerSpec, ModelSpec};
use crate::params::ParameterSet;
use crate::tensor::Tensor;

use super::layers::{
    gelu_backward, gelu_forward, global_avg_max_backward, global_avg_max_forward, Conv1d, Linear, ResidualBlock,
    ResidualGrads, ResidualParams, ResidualTrace, Signal,
};

pub const STEM_KERNEL: usize = 5;
pub const BLOCK_KERNEL: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToyModelConfig {
    pub input_len: usize,
    pub channels: usize,
    pub stem_width: usize,
    pub residual_blocks: usize,
    pub feature_dim: usize,
    pub num_classes: usize,
    pub fixup_alpha: f64,
}

impl Default for ToyModelConfig {
    fn default() -> Self {
        Self::with_classes(6)
    }
}

impl ToyModelConfig {
    /// Defaults with `K` classes and `D = K + 2`.
    pub fn with_classes(num_classes: usize) -> Self {
        Self {
            input_len: 128,
            channels: 1,
            stem_width: 16,
            residual_blocks: 2,
            feature_dim: num_classes + 2,
            num_classes,
            fixup_alpha: crate::init::DEFAULT_FIXUP_ALPHA,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("input_len", self.input_len),
            ("channels", self.channels),
            ("stem_width", self.stem_width),
            ("residual_blocks", self.residual_blocks),
            ("feature_dim", self.feature_dim),
            ("num_classes", self.num_classes),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Spec(format!("{name} must be at least 1")));
        }
        if self.feature_dim < self.num_classes {
            return Err(Error::Spec(format!(
                "feature_dim {} is smaller than num_classes {}",
                self.feature_dim, self.num_classes
            )));
        }
        if !(self.fixup_alpha.is_finite() && self.fixup_alpha >= 0.0) {
            return Err(Error::Spec(format!("invalid fixup_alpha {}", self.fixup_alpha)));
        }
        Ok(())
    }

    pub fn block_stride(i: usize) -> usize {
        if i % 2 == 1 {
            2
        } else {
            1
        }
    }

    /// Layer list in forward order. Stages: stem 0, block `i` at `1 + i`,
    /// neck and head after the last block.
    pub fn model_spec(&self) -> Result<ModelSpec> {
        self.validate()?;
        let w = self.stem_width;
        let nb = self.residual_blocks;
        let mut layers = vec![LayerSpec::conv1d("stem", self.channels, w, STEM_KERNEL, 0)];
        for i in 0..nb {
            layers.push(LayerSpec::conv1d(&format!("block{i}.conv_a"), w, w, BLOCK_KERNEL, 1 + i));
            layers.push(LayerSpec::conv1d(&format!("block{i}.conv_b"), w, w, BLOCK_KERNEL, 1 + i).branch_last());
        }
        layers.push(LayerSpec::linear("neck", 2 * w, self.feature_dim, nb + 1));
        layers.push(LayerSpec::head("head", self.feature_dim, self.num_classes, nb + 2));
        ModelSpec::new(layers)
    }

    /// Default mixed plan with this model's fixup scale and head geometry.
    pub fn init_plan(&self) -> InitPlan {
        InitPlan::mixed()
            .with_fixup_alpha(self.fixup_alpha)
            .with_head(EtfConfig {
                num_classes: self.num_classes,
                feature_dim: self.feature_dim,
            })
    }
}

/// Per-sample activations kept for the backward pass.
#[derive(Debug, Clone)]
pub struct Trace {
    input: Signal,
    stem_pre: Signal,
    blocks: Vec<ResidualTrace>,
    last: (usize, usize),
    argmax: Vec<usize>,
    pooled: Vec<f32>,
    neck: Vec<f32>,
}

#[derive(Debug, Clone)]
pub struct ToyModel {
    pub config: ToyModelConfig,
    stem: Conv1d,
    blocks: Vec<ResidualBlock>,
    neck: Linear,
    head: Linear,
}

fn block_name(i: usize, conv: &str, field: &str) -> String {
    format!("block{i}.{conv}.{field}")
}

impl ToyModel {
    pub fn new(config: ToyModelConfig) -> Result<Self> {
        config.validate()?;
        let w = config.stem_width;
        let blocks = (0..config.residual_blocks)
            .map(|i| ResidualBlock::new(w, BLOCK_KERNEL, ToyModelConfig::block_stride(i)))
            .collect::<Result<Vec<_>>>()?;
        let model = Self {
            config,
            stem: Conv1d::new(config.channels, w, STEM_KERNEL, 2)?,
            blocks,
            neck: Linear {
                inputs: 2 * w,
                outputs: config.feature_dim,
            },
            head: Linear {
                inputs: config.feature_dim,
                outputs: config.num_classes,
            },
        };
        // Reject inputs too short to survive the downsampling chain.
        let mut len = model.stem.out_len(config.input_len);
        for b in &model.blocks {
            len = b.conv_a.out_len(len);
        }
        if len == 0 {
            return Err(Error::Spec(format!("input_len {} is too short", config.input_len)));
        }
        Ok(model)
    }

    pub fn input_size(&self) -> usize {
        self.config.channels * self.config.input_len
    }

    fn param<'a>(params: &'a ParameterSet, name: &str) -> Result<&'a [f32]> {
        params
            .get(name)
            .map(Tensor::data)
            .ok_or_else(|| Error::Spec(format!("missing parameter '{name}'")))
    }

    fn block_params<'a>(params: &'a ParameterSet, i: usize) -> Result<ResidualParams<'a>> {
        Ok(ResidualParams {
            weight_a: Self::param(params, &block_name(i, "conv_a", "weight"))?,
            bias_a: Self::param(params, &block_name(i, "conv_a", "bias"))?,
            weight_b: Self::param(params, &block_name(i, "conv_b", "weight"))?,
            bias_b: Self::param(params, &block_name(i, "conv_b", "bias"))?,
        })
    }

    /// Checks that `params` holds exactly this model's tensors.
    pub fn check_params(&self, params: &ParameterSet) -> Result<()> {
        let spec = self.config.model_spec()?;
        let mut expected = 0;
        for layer in &spec.layers {
            for (name, shape) in [
                (layer.weight_name(), layer.weight_shape()),
                (layer.bias_name(), vec![layer.c_out]),
            ] {
                let t = params
                    .get(&name)
                    .ok_or_else(|| Error::Spec(format!("missing parameter '{name}'")))?;
                if t.shape() != shape.as_slice() {
                    return Err(Error::Dimension(format!(
                        "parameter '{name}' has shape {:?}, expected {shape:?}",
                        t.shape()
                    )));
                }
                expected += 1;
            }
        }
        if params.len() != expected {
            return Err(Error::Spec(format!(
                "expected {expected} parameters, found {}",
                params.len()
            )));
        }
        Ok(())
    }

    /// Runs the residual stack only, from an activation of `stem_width`
    /// channels. Used to probe the fixup norm bound.
    pub fn residual_stack(&self, params: &ParameterSet, x: &Signal) -> Result<Signal> {
        let mut h = x.clone();
        for (i, b) in self.blocks.iter().enumerate() {
            h = b.forward(Self::block_params(params, i)?, &h)?.0;
        }
        Ok(h)
    }

    pub fn forward(&self, params: &ParameterSet, input: &[f32]) -> Result<(Vec<f32>, Trace)> {
        if input.len() != self.input_size() {
            return Err(Error::Dimension(format!(
                "sample has {} values, model expects {}",
                input.len(),
                self.input_size()
            )));
        }
        let x = Signal::new(self.config.channels, self.config.input_len, input.to_vec())?;
        let stem_pre = self
            .stem
            .forward(Self::param(params, "stem.weight")?, Self::param(params, "stem.bias")?, &x)?;
        let mut h = gelu_forward(&stem_pre);
        let mut traces = Vec::with_capacity(self.blocks.len());
        for (i, b) in self.blocks.iter().enumerate() {
            let (y, t) = b.forward(Self::block_params(params, i)?, &h)?;
            traces.push(t);
            h = y;
        }
        let (pooled, argmax) = global_avg_max_forward(&h);
        let neck = self
            .neck
            .forward(Self::param(params, "neck.weight")?, Self::param(params, "neck.bias")?, &pooled)?;
        let logits = self
            .head
            .forward(Self::param(params, "head.weight")?, Self::param(params, "head.bias")?, &neck)?;
        Ok((
            logits,
            Trace {
                input: x,
                stem_pre,
                blocks: traces,
                last: (h.channels, h.len),
                argmax,
                pooled,
                neck,
            },
        ))
    }

    /// Parameter gradients for one sample given `d loss / d logits`.
    pub fn backward(&self, params: &ParameterSet, trace: &Trace, grad_logits: &[f32]) -> Result<ParameterSet> {
        let take = |name: &str| -> Result<Vec<f32>> { Ok(vec![0.0; Self::param(params, name)?.len()]) };

        let mut hw = take("head.weight")?;
        let mut hb = take("head.bias")?;
        let g_neck = self
            .head
            .backward(Self::param(params, "head.weight")?, &trace.neck, grad_logits, &mut hw, &mut hb);
        let mut nw = take("neck.weight")?;
        let mut nb = take("neck.bias")?;
        let g_pooled = self
            .neck
            .backward(Self::param(params, "neck.weight")?, &trace.pooled, &g_neck, &mut nw, &mut nb);
        let (c, len) = trace.last;
        let mut g = global_avg_max_backward(c, len, &trace.argmax, &g_pooled);

        let mut block_grads = Vec::with_capacity(self.blocks.len());
        for (i, b) in self.blocks.iter().enumerate().rev() {
            let mut wa = take(&block_name(i, "conv_a", "weight"))?;
            let mut ba = take(&block_name(i, "conv_a", "bias"))?;
            let mut wb = take(&block_name(i, "conv_b", "weight"))?;
            let mut bb = take(&block_name(i, "conv_b", "bias"))?;
            g = b.backward(
                Self::block_params(params, i)?,
                &trace.blocks[i],
                &g,
                ResidualGrads {
                    weight_a: &mut wa,
                    bias_a: &mut ba,
                    weight_b: &mut wb,
                    bias_b: &mut bb,
                },
            );
            block_grads.push((i, [wa, ba, wb, bb]));
        }

        let g_stem = gelu_backward(&trace.stem_pre, &g);
        let mut sw = take("stem.weight")?;
        let mut sb = take("stem.bias")?;
        self.stem
            .backward(Self::param(params, "stem.weight")?, &trace.input, &g_stem, &mut sw, &mut sb);

        let mut grads = ParameterSet::new();
        let mut put = |name: String, data: Vec<f32>| -> Result<()> {
            let shape = params.expect(&name).shape().to_vec();
            grads.insert(name, Tensor::new(shape, data)?)
        };
        put("head.weight".into(), hw)?;
        put("head.bias".into(), hb)?;
        put("neck.weight".into(), nw)?;
        put("neck.bias".into(), nb)?;
        put("stem.weight".into(), sw)?;
        put("stem.bias".into(), sb)?;
        for (i, [wa, ba, wb, bb]) in block_grads {
            put(block_name(i, "conv_a", "weight"), wa)?;
            put(block_name(i, "conv_a", "bias"), ba)?;
            put(block_name(i, "conv_b", "weight"), wb)?;
            put(block_name(i, "conv_b", "bias"), bb)?;
        }
        Ok(grads)
    }
}
