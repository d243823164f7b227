//! Central finite-difference checks for every differentiable op.
//!
//! Forward passes run in `f32`; the scalar objective `sum(g * f(x))` is
//! accumulated in `f64` and differenced with the actual perturbation that
//! survives `f32` rounding. Error is measured per gradient tensor as
//! `|a - n| / max(|a|, |n|)` in the Euclidean norm.

use detseed::rng::Xoshiro256StarStar;
use detseed::train::layers::{Conv1d, Linear, ResidualBlock};
use detseed::train::loss::{buffer_l2, weighted_bce};
use detseed::train::{initial_params, layer_forward_backward, InitChoice, Layer, Signal, ToyModel, ToyModelConfig};

pub const INSTANCES: u64 = 20;
pub const TOLERANCE: f64 = 1e-3;
const EPS: f32 = 1e-2;

fn gaussian(rng: &mut Xoshiro256StarStar, n: usize) -> Vec<f32> {
    (0..n).map(|_| rng.normal() as f32).collect()
}

pub fn relative_error(analytic: &[f32], numeric: &[f64]) -> f64 {
    let diff: f64 = analytic.iter().zip(numeric).map(|(&a, &n)| (a as f64 - n).powi(2)).sum::<f64>().sqrt();
    let na: f64 = analytic.iter().map(|&a| (a as f64).powi(2)).sum::<f64>().sqrt();
    let nn: f64 = numeric.iter().map(|n| n * n).sum::<f64>().sqrt();
    let scale = na.max(nn);
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}

/// Central difference of `f` at every coordinate of `x`.
fn numeric_grad(x: &[f32], mut f: impl FnMut(&[f32]) -> f64) -> Vec<f64> {
    let mut buf = x.to_vec();
    (0..x.len())
        .map(|i| {
            let (hi, lo) = (x[i] + EPS, x[i] - EPS);
            buf[i] = hi;
            let fp = f(&buf);
            buf[i] = lo;
            let fm = f(&buf);
            buf[i] = x[i];
            (fp - fm) / (hi as f64 - lo as f64)
        })
        .collect()
}

fn dot(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| x as f64 * y as f64).sum()
}

/// Worst relative error over input and parameter gradients of one instance.
pub fn check_layer(layer: &Layer, params: &[Vec<f32>], input: &Signal, rng: &mut Xoshiro256StarStar) -> f64 {
    let refs: Vec<&[f32]> = params.iter().map(Vec::as_slice).collect();
    let out = layer.forward(&refs, input).expect("forward");
    let upstream = Signal {
        data: gaussian(rng, out.data.len()),
        ..out.clone()
    };
    let pass = layer_forward_backward(layer, &refs, input, &upstream).expect("backward");
    let objective = |refs: &[&[f32]], x: &Signal| dot(&layer.forward(refs, x).expect("forward").data, &upstream.data);

    let num_x = numeric_grad(&input.data, |d| {
        objective(&refs, &Signal {
            data: d.to_vec(),
            ..input.clone()
        })
    });
    let mut worst = relative_error(&pass.input_grad.data, &num_x);
    for (p, analytic) in pass.param_grads.iter().enumerate() {
        let num = numeric_grad(&params[p], |d| {
            let mut r = refs.clone();
            r[p] = d;
            objective(&r, input)
        });
        worst = worst.max(relative_error(analytic, &num));
    }
    worst
}

fn random_params(layer: &Layer, rng: &mut Xoshiro256StarStar) -> Vec<Vec<f32>> {
    layer
        .param_sizes()
        .into_iter()
        .map(|n| gaussian(rng, n).into_iter().map(|v| v * 0.5).collect())
        .collect()
}

fn random_signal(rng: &mut Xoshiro256StarStar, channels: usize, len: usize) -> Signal {
    Signal::new(channels, len, gaussian(rng, channels * len)).expect("signal")
}

/// Signal with well-separated values so max pooling has no near-ties.
fn separated_signal(rng: &mut Xoshiro256StarStar, channels: usize, len: usize) -> Signal {
    let n = channels * len;
    let mut order: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        order.swap(i, rng.below(i as u64 + 1) as usize);
    }
    let data = order.iter().map(|&r| r as f32 * 0.25 - n as f32 * 0.125).collect();
    Signal::new(channels, len, data).expect("signal")
}

/// Layer instances keyed by op name; each op gets `INSTANCES` random draws.
fn layer_case(op: &str, rng: &mut Xoshiro256StarStar) -> (Layer, Signal) {
    let c = 1 + rng.below(3) as usize;
    let len = 4 + rng.below(9) as usize;
    match op {
        "conv1d_1x1x8_k3" => (Layer::Conv1d(Conv1d::new(1, 2, 3, 1).unwrap()), random_signal(rng, 1, 8)),
        "conv1d" => {
            let k = [1, 3, 5][rng.below(3) as usize];
            let c_out = 1 + rng.below(3) as usize;
            (Layer::Conv1d(Conv1d::new(c, c_out, k, 1).unwrap()), random_signal(rng, c, len))
        }
        "conv1d_stride2" => {
            let k = [3, 5][rng.below(2) as usize];
            (Layer::Conv1d(Conv1d::new(c, 2, k, 2).unwrap()), random_signal(rng, c, len))
        }
        "linear" => {
            let (i, o) = (1 + rng.below(6) as usize, 1 + rng.below(6) as usize);
            (Layer::Linear(Linear { inputs: i, outputs: o }), Signal::vector(gaussian(rng, i)))
        }
        "gelu" => (Layer::Gelu, random_signal(rng, c, len)),
        "adaptive_avg_pool" => {
            let out_len = 1 + rng.below(len as u64) as usize;
            (Layer::AdaptiveAvgPool { out_len }, random_signal(rng, c, len))
        }
        "global_avg_max_pool" => (Layer::GlobalAvgMaxPool, separated_signal(rng, c, len)),
        "residual" => (Layer::Residual(ResidualBlock::new(c, 3, 1).unwrap()), random_signal(rng, c, len)),
        "residual_stride2" => (Layer::Residual(ResidualBlock::new(c, 3, 2).unwrap()), random_signal(rng, c, len)),
        other => panic!("unknown op {other}"),
    }
}

pub const LAYER_OPS: &[&str] = &[
    "conv1d_1x1x8_k3",
    "conv1d",
    "conv1d_stride2",
    "linear",
    "gelu",
    "adaptive_avg_pool",
    "global_avg_max_pool",
    "residual",
    "residual_stride2",
];

pub fn check_layer_op(op: &str) -> f64 {
    (0..INSTANCES)
        .map(|seed| {
            let mut rng = Xoshiro256StarStar::for_epoch(0x6772_6164, seed);
            let (layer, input) = layer_case(op, &mut rng);
            let params = random_params(&layer, &mut rng);
            check_layer(&layer, &params, &input, &mut rng)
        })
        .fold(0.0, f64::max)
}

/// Weighted BCE with respect to logits, clamp inactive.
pub fn check_weighted_bce() -> f64 {
    (0..INSTANCES)
        .map(|seed| {
            let mut rng = Xoshiro256StarStar::for_epoch(0x6263_65, seed);
            let (b, k) = (1 + rng.below(4) as usize, 1 + rng.below(5) as usize);
            let logits: Vec<f32> = gaussian(&mut rng, b * k).into_iter().map(|v| v * 3.0).collect();
            let targets: Vec<f32> = (0..b * k).map(|_| if rng.bernoulli(0.4) { 1.0 } else { 0.0 }).collect();
            let weights: Vec<f32> = (0..k).map(|_| rng.uniform(0.5, 3.0) as f32).collect();
            let (_, grad) = weighted_bce(&logits, &targets, &weights, 50.0).unwrap();
            let num = numeric_grad(&logits, |z| weighted_bce(z, &targets, &weights, 50.0).unwrap().0 as f64);
            relative_error(&grad, &num)
        })
        .fold(0.0, f64::max)
}

pub fn check_buffer_l2() -> f64 {
    (0..INSTANCES)
        .map(|seed| {
            let mut rng = Xoshiro256StarStar::for_epoch(0x6c32, seed);
            let k = 2 + rng.below(4) as usize;
            let d = k + 1 + rng.below(3) as usize;
            let head = gaussian(&mut rng, k * d);
            let w = rng.uniform(0.01, 1.0) as f32;
            let (_, grad) = buffer_l2(&head, k, d, w);
            let num = numeric_grad(&head, |h| buffer_l2(h, k, d, w).0 as f64);
            relative_error(&grad, &num)
        })
        .fold(0.0, f64::max)
}

/// Central difference of `f` along one coordinate, or `None` when the
/// estimates at `h` and `h/2` disagree: for a smooth function they match to
/// second order, so disagreement means a max-pool switch lies inside the step.
fn smooth_central(x: f32, mut f: impl FnMut(f32) -> f64) -> Option<f64> {
    let mut central = |h: f32| {
        let (hi, lo) = (x + h, x - h);
        (f(hi) - f(lo)) / (hi as f64 - lo as f64)
    };
    let (full, half) = (central(EPS), central(EPS / 2.0));
    ((full - half).abs() <= 2e-3 * full.abs() + 1e-4).then_some(full)
}

/// End-to-end toy model with a random upstream gradient on the logits. Up to
/// 12 coordinates are drawn from every parameter tensor and the error is taken
/// over the whole sampled gradient vector.
pub fn check_toy_model() -> f64 {
    (0..INSTANCES)
        .map(|seed| {
            let mut rng = Xoshiro256StarStar::for_epoch(0x746f79, seed);
            let cfg = ToyModelConfig {
                input_len: 16,
                channels: 1 + rng.below(2) as usize,
                stem_width: 3,
                residual_blocks: 2,
                feature_dim: 5,
                num_classes: 3,
                fixup_alpha: 0.01,
            };
            let model = ToyModel::new(cfg).unwrap();
            let params = initial_params(&cfg, &InitChoice::Kaiming(seed)).unwrap();
            let input = gaussian(&mut rng, model.input_size());
            let upstream = gaussian(&mut rng, cfg.num_classes);
            let loss = |p: &detseed::ParameterSet| dot(&model.forward(p, &input).unwrap().0, &upstream);
            let (_, trace) = model.forward(&params, &input).unwrap();
            let grads = model.backward(&params, &trace, &upstream).unwrap();

            let mut skipped = 0usize;
            let mut total = 0usize;
            let mut analytic = Vec::new();
            let mut numeric = Vec::new();
            let names: Vec<String> = params.names().map(str::to_string).collect();
            for name in names {
                let n = params.expect(&name).len();
                for _ in 0..n.min(12) {
                    let i = rng.below(n as u64) as usize;
                    total += 1;
                    let num = smooth_central(params.expect(&name).data()[i], |v| {
                        let mut p = params.clone();
                        p.get_mut(&name).unwrap().data_mut()[i] = v;
                        loss(&p)
                    });
                    match num {
                        Some(v) => {
                            analytic.push(grads.expect(&name).data()[i]);
                            numeric.push(v);
                        }
                        None => skipped += 1,
                    }
                }
            }
            assert!(skipped * 20 <= total, "{skipped} of {total} coordinates sit on kinks");
            relative_error(&analytic, &numeric)
        })
        .fold(0.0, f64::max)
}

/// `(op, worst relative error)` for every checked op.
#[allow(dead_code)]
pub fn all_checks() -> Vec<(String, f64)> {
    let mut out: Vec<(String, f64)> = LAYER_OPS.iter().map(|op| (op.to_string(), check_layer_op(op))).collect();
    out.push(("weighted_bce".into(), check_weighted_bce()));
    out.push(("buffer_l2".into(), check_buffer_l2()));
    out.push(("toy_model".into(), check_toy_model()));
    out
}
