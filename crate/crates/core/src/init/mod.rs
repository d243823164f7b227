//! Seed-free structured initialization.
//!
//! Weights are rows of an analytic basis, zero-meaned over the whole tensor
//! and rescaled to `sigma = 1/sqrt(3 * fan_in)`. The last layer of each
//! residual branch is further multiplied by the fixup scale, and
//! classification heads start as an equiangular tight frame. All arithmetic
//! is `f64`; each tensor is converted to `f32` exactly once at the end.

mod spec;

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::bases::{global_cache, BasisKind};
use crate::error::{Error, Result};
use crate::params::ParameterSet;
use crate::parallel;
use crate::rng::Xoshiro256StarStar;
use crate::tensor::{kron, svd_small, Tensor};

pub use spec::{LayerKind, LayerSpec, ModelSpec, ResidualRole};

pub const DEFAULT_FIXUP_ALPHA: f64 = 0.01;
pub const DEFAULT_BUFFER_DIMS: usize = 2;

/// Bases assigned by the default mixed plan, indexed by stage quartile.
pub const MIXED_QUARTILES: [BasisKind; 4] = [
    BasisKind::Dct2,
    BasisKind::Hadamard,
    BasisKind::Hartley,
    BasisKind::Dct2,
];

/// Expected head geometry. `feature_dim - num_classes` are buffer dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EtfConfig {
    pub num_classes: usize,
    pub feature_dim: usize,
}

impl EtfConfig {
    pub fn with_buffer(num_classes: usize, buffer_dims: usize) -> Self {
        Self {
            num_classes,
            feature_dim: num_classes + buffer_dims,
        }
    }

    pub fn buffer_dims(&self) -> usize {
        self.feature_dim.saturating_sub(self.num_classes)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InitPlan {
    pub stage_basis: BTreeMap<usize, BasisKind>,
    pub fixup_alpha: f64,
    pub head: Option<EtfConfig>,
    /// Fill stages missing from `stage_basis` with the quartile assignment.
    pub mixed_default: bool,
}

impl InitPlan {
    /// DCT-II, Hadamard, Hartley, DCT-II by stage quartile.
    pub fn mixed() -> Self {
        Self {
            stage_basis: BTreeMap::new(),
            fixup_alpha: DEFAULT_FIXUP_ALPHA,
            head: None,
            mixed_default: true,
        }
    }

    /// A single basis for every stage.
    pub fn uniform(kind: BasisKind, num_stages: usize) -> Self {
        Self {
            stage_basis: (0..num_stages).map(|s| (s, kind)).collect(),
            mixed_default: false,
            ..Self::mixed()
        }
    }

    /// Parses `mixed` or a basis name, as accepted by the CLI.
    pub fn from_name(name: &str, num_stages: usize) -> Result<Self> {
        if name == "mixed" {
            Ok(Self::mixed())
        } else {
            Ok(Self::uniform(name.parse()?, num_stages))
        }
    }

    pub fn with_fixup_alpha(mut self, alpha: f64) -> Self {
        self.fixup_alpha = alpha;
        self
    }

    pub fn with_head(mut self, head: EtfConfig) -> Self {
        self.head = Some(head);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fixup_alpha >= 0.0 && self.fixup_alpha.is_finite()) {
            return Err(Error::Plan(format!(
                "fixup_alpha must be finite and >= 0, got {}",
                self.fixup_alpha
            )));
        }
        if let Some(h) = self.head {
            if h.feature_dim < h.num_classes {
                return Err(Error::Plan(format!(
                    "ETF head needs feature_dim >= num_classes, got D={} K={}",
                    h.feature_dim, h.num_classes
                )));
            }
        }
        Ok(())
    }

    pub fn basis_for_stage(&self, stage: usize, num_stages: usize) -> Result<BasisKind> {
        if let Some(&kind) = self.stage_basis.get(&stage) {
            return Ok(kind);
        }
        if self.mixed_default {
            let quartile = (4 * stage / num_stages.max(1)).min(3);
            return Ok(MIXED_QUARTILES[quartile]);
        }
        Err(Error::Plan(format!("no basis assigned to stage {stage}")))
    }
}

/// `1 / sqrt(3 * fan_in)`.
pub fn target_std(fan_in: usize) -> f64 {
    1.0 / (3.0 * fan_in as f64).sqrt()
}

/// Subtracts the global mean and rescales to population std `target_std(fan_in)`.
pub fn zero_mean_variance_match(w: &Tensor<f64>, fan_in: usize) -> Result<Tensor<f64>> {
    if fan_in == 0 {
        return Err(Error::Spec("fan_in must be at least 1".into()));
    }
    let n = w.len() as f64;
    let mean = w.sum() / n;
    let centered = w.map(|v| v - mean);
    let var = centered.data().iter().fold(0.0, |acc, v| acc + v * v) / n;
    if var == 0.0 {
        return Err(Error::DegenerateVariance);
    }
    Ok(centered.scale(target_std(fan_in) / var.sqrt()))
}

/// Raw basis filters laid out as `(c_out, c_in, kernel...)`, before scaling.
///
/// Columns enumerate `(c_in, kernel)` channel-major. For conv2d the unique
/// filters are the Kronecker product of a channel basis with a separable
/// spatial basis; filters beyond the unique count cycle.
pub fn basis_filters(layer: &LayerSpec, kind: BasisKind) -> Result<Tensor<f64>> {
    layer.validate()?;
    let cache = global_cache();
    let fan_in = layer.fan_in();
    let flat = match layer.kind {
        LayerKind::Conv1d | LayerKind::Linear => cache.get(kind, layer.c_out, fan_in, false)?.rows.clone(),
        LayerKind::Conv2d => {
            let (kh, kw) = (layer.kernel[0], layer.kernel[1]);
            let channel = cache.get(kind, layer.c_in, layer.c_in, false)?;
            let spatial = kron(
                &cache.get(kind, kh, kh, false)?.rows,
                &cache.get(kind, kw, kw, false)?.rows,
            )?;
            let unique = kron(&channel.rows, &spatial)?;
            Tensor::from_fn(layer.c_out, fan_in, |i, j| unique.get(&[i % fan_in, j]))?
        }
        LayerKind::Head => {
            return Err(Error::Spec(format!(
                "layer '{}' is a head; use etf_head",
                layer.name
            )))
        }
    };
    flat.reshape(layer.weight_shape())
}

/// Structured weights for a conv or linear layer, in `f64`.
pub fn init_conv(layer: &LayerSpec, kind: BasisKind, fixup_alpha: f64) -> Result<Tensor<f64>> {
    let raw = basis_filters(layer, kind)?;
    let matched = zero_mean_variance_match(&raw, layer.fan_in())?;
    Ok(match layer.residual_role {
        ResidualRole::None => matched,
        ResidualRole::BranchLast => matched.scale(fixup_alpha),
    })
}

/// `K x D` simplex equiangular tight frame.
///
/// The frame is the leading `K - 1` left singular vectors of the centered
/// identity `I_K - (1/K) 11^T`, placed in the first `K - 1` coordinates with
/// the rest zero, rows renormalized to unit length. Distinct rows have cosine
/// `-1/(K-1)`.
pub fn etf_head(num_classes: usize, feature_dim: usize) -> Result<Tensor<f64>> {
    let k = num_classes;
    if k < 2 {
        return Err(Error::Spec(format!("ETF needs at least 2 classes, got {k}")));
    }
    if k > feature_dim {
        return Err(Error::Dimension(format!(
            "ETF needs feature_dim >= num_classes, got D={feature_dim} K={k}"
        )));
    }
    let inv_k = 1.0 / k as f64;
    let centered = Tensor::from_fn(k, k, |i, j| if i == j { 1.0 - inv_k } else { -inv_k })?;
    let svd = svd_small(&centered)?;
    let mut m = Tensor::from_fn(k, feature_dim, |i, j| {
        if j < k - 1 {
            svd.u.get(&[i, j])
        } else {
            0.0
        }
    })?;
    let d = feature_dim;
    let data = m.data_mut();
    for i in 0..k {
        let row = &mut data[i * d..(i + 1) * d];
        let norm = row.iter().fold(0.0, |acc, v| acc + v * v).sqrt();
        row.iter_mut().for_each(|v| *v /= norm);
    }
    Ok(m)
}

fn init_layer(layer: &LayerSpec, plan: &InitPlan, num_stages: usize) -> Result<Tensor<f64>> {
    match layer.kind {
        LayerKind::Head => {
            if let Some(h) = plan.head {
                if (h.num_classes, h.feature_dim) != (layer.c_out, layer.c_in) {
                    return Err(Error::Plan(format!(
                        "head '{}' is {}x{} but the plan expects K={} D={}",
                        layer.name, layer.c_out, layer.c_in, h.num_classes, h.feature_dim
                    )));
                }
            }
            etf_head(layer.c_out, layer.c_in)
        }
        _ => init_conv(
            layer,
            plan.basis_for_stage(layer.stage, num_stages)?,
            plan.fixup_alpha,
        ),
    }
}

/// Initializes every layer of `model`: `<name>.weight` from the plan and a
/// zero `<name>.bias` of length `c_out`.
pub fn init_model(model: &ModelSpec, plan: &InitPlan) -> Result<ParameterSet> {
    model.validate()?;
    plan.validate()?;
    let num_stages = model.num_stages();
    let weights: Vec<Result<Tensor<f64>>> = parallel::install(|| {
        model
            .layers
            .par_iter()
            .map(|layer| init_layer(layer, plan, num_stages))
            .collect()
    });
    let mut params = ParameterSet::new();
    for (layer, weight) in model.layers.iter().zip(weights) {
        params.insert(layer.weight_name(), weight?.convert::<f32>())?;
        params.insert(layer.bias_name(), Tensor::zeros(&[layer.c_out])?)?;
    }
    Ok(params)
}

/// Kaiming-uniform reference initializer for comparison runs: weights drawn
/// from `U(-sqrt(6/fan_in), sqrt(6/fan_in))`, layers in declaration order
/// from one xoshiro256** stream; zero biases.
pub fn kaiming_init(model: &ModelSpec, seed: u64) -> Result<ParameterSet> {
    model.validate()?;
    let mut rng = Xoshiro256StarStar::seed_from_u64(seed);
    let mut params = ParameterSet::new();
    for layer in &model.layers {
        let bound = (6.0 / layer.fan_in() as f64).sqrt();
        let n: usize = layer.weight_shape().iter().product();
        let data = (0..n)
            .map(|_| rng.uniform(-bound, bound) as f32)
            .collect();
        params.insert(layer.weight_name(), Tensor::new(layer.weight_shape(), data)?)?;
        params.insert(layer.bias_name(), Tensor::zeros(&[layer.c_out])?)?;
    }
    Ok(params)
}
