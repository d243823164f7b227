//! Weighted multi-label binary cross-entropy and buffer regularization.

use crate::error::{Error, Result};

pub const DEFAULT_LOGIT_CLAMP: f32 = 50.0;
pub const DEFAULT_BUFFER_L2: f32 = 0.01;

/// `ln(1 + e^x)` without overflow.
pub fn softplus(x: f32) -> f32 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

pub fn sigmoid(x: f32) -> f32 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `sqrt(N / N_k)` per class. Classes with no positives get weight 1 and are
/// returned in the second vector so callers can warn.
pub fn sqrt_class_weights(pos_counts: &[usize], n: usize) -> Result<(Vec<f32>, Vec<usize>)> {
    if n == 0 {
        return Err(Error::Spec("class weights need at least one sample".into()));
    }
    let mut missing = Vec::new();
    let weights = pos_counts
        .iter()
        .enumerate()
        .map(|(k, &nk)| {
            if nk == 0 {
                missing.push(k);
                1.0
            } else {
                (n as f64 / nk as f64).sqrt() as f32
            }
        })
        .collect();
    Ok((weights, missing))
}

/// Mean over all `B * K` entries of
/// `w_k y log(1 + e^-z) + (1 - y) log(1 + e^z)` with `z = clamp(logit, ±clamp)`.
///
/// `logits` and `targets` are row-major `B x K`; `weights` has length `K`.
/// The returned gradient is with respect to the raw logits and is zero where
/// the clamp is active.
pub fn weighted_bce(logits: &[f32], targets: &[f32], weights: &[f32], clamp: f32) -> Result<(f32, Vec<f32>)> {
    let k = weights.len();
    if k == 0 || logits.len() != targets.len() || logits.len() % k != 0 || logits.is_empty() {
        return Err(Error::Dimension(format!(
            "bce needs matching B x K logits/targets, got {} logits, {} targets, K={k}",
            logits.len(),
            targets.len()
        )));
    }
    let scale = 1.0 / logits.len() as f32;
    let mut loss = 0.0f32;
    let mut grad = Vec::with_capacity(logits.len());
    for (i, (&raw, &y)) in logits.iter().zip(targets).enumerate() {
        let w = weights[i % k];
        let z = raw.clamp(-clamp, clamp);
        loss += w * y * softplus(-z) + (1.0 - y) * softplus(z);
        let inside = raw.abs() <= clamp;
        let p = sigmoid(z);
        let g = w * y * (p - 1.0) + (1.0 - y) * p;
        grad.push(if inside { g * scale } else { 0.0 });
    }
    Ok((loss * scale, grad))
}

/// `weight * sum(W[:, j]^2)` over head columns `j >= num_classes`, with its
/// gradient laid out like the `K x D` head weight.
pub fn buffer_l2(head: &[f32], num_classes: usize, feature_dim: usize, weight: f32) -> (f32, Vec<f32>) {
    let mut loss = 0.0f32;
    let mut grad = vec![0.0f32; head.len()];
    for row in 0..num_classes {
        for j in num_classes..feature_dim {
            let v = head[row * feature_dim + j];
            loss += v * v;
            grad[row * feature_dim + j] = 2.0 * weight * v;
        }
    }
    (weight * loss, grad)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_logit_positive_is_ln2() {
        let (l, g) = weighted_bce(&[0.0], &[1.0], &[1.0], DEFAULT_LOGIT_CLAMP).unwrap();
        assert!((l - std::f32::consts::LN_2).abs() < 1e-7);
        assert!((g[0] + 0.5).abs() < 1e-7);
    }

    #[test]
    fn clamp_zeroes_gradient() {
        let (l, g) = weighted_bce(&[100.0], &[1.0], &[1.0], DEFAULT_LOGIT_CLAMP).unwrap();
        let expected = (-50.0f64).exp().ln_1p();
        assert!(((l as f64) - expected).abs() / expected < 1e-5);
        assert_eq!(g[0], 0.0);
        let (l, g) = weighted_bce(&[-100.0], &[1.0], &[1.0], DEFAULT_LOGIT_CLAMP).unwrap();
        assert!((l - 50.0).abs() < 1e-5);
        assert_eq!(g[0], 0.0);
    }

    #[test]
    fn class_weight_values() {
        let (w, missing) = sqrt_class_weights(&[100, 4, 0], 100).unwrap();
        assert_eq!(w, vec![1.0, 5.0, 1.0]);
        assert_eq!(missing, vec![2]);
        let (w, _) = sqrt_class_weights(&[16], 17418).unwrap();
        assert!((w[0] as f64 - 1088.625f64.sqrt()).abs() < 1e-4);
        assert!(sqrt_class_weights(&[1], 0).is_err());
    }

    #[test]
    fn shape_mismatch() {
        assert!(weighted_bce(&[0.0, 1.0], &[1.0], &[1.0], 50.0).is_err());
        assert!(weighted_bce(&[0.0; 3], &[1.0; 3], &[1.0, 1.0], 50.0).is_err());
    }

    #[test]
    fn buffer_penalty_touches_only_buffer_columns() {
        // K=2, D=3: column 2 is the buffer.
        let head = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let (l, g) = buffer_l2(&head, 2, 3, 0.01);
        assert!((l - 0.01 * (9.0 + 36.0)).abs() < 1e-6);
        assert_eq!(g, vec![0.0, 0.0, 0.06, 0.0, 0.0, 0.12]);
    }
}
