//! Rank-based ROC AUC and small sample statistics.

use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

/// Mann-Whitney AUC with average ranks for ties. `None` when the labels have
/// no positives or no negatives.
pub fn binary_auc(scores: &[f32], labels: &[bool]) -> Result<Option<f64>> {
    if scores.len() != labels.len() {
        return Err(Error::Dimension(format!(
            "{} scores for {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(Error::Metric(format!("score {i} is not finite")));
    }
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Ok(None);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(a.cmp(&b)));
    let mut pos_rank_sum = 0.0f64;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // Ranks are 1-based; the tie group i..=j shares their mean.
        let avg = (i + j) as f64 / 2.0 + 1.0;
        pos_rank_sum += avg * order[i..=j].iter().filter(|&&k| labels[k]).count() as f64;
        i = j + 1;
    }
    let (p, q) = (n_pos as f64, n_neg as f64);
    Ok(Some((pos_rank_sum - p * (p + 1.0) / 2.0) / (p * q)))
}

/// Per-class AUC over row-major `B x K` scores and targets, and the mean over
/// classes where AUC is defined.
pub fn macro_auc(scores: &[f32], targets: &[f32], num_classes: usize) -> Result<(f64, Vec<Option<f64>>)> {
    if num_classes == 0 || scores.len() != targets.len() || scores.len() % num_classes != 0 {
        return Err(Error::Dimension("macro AUC needs matching B x K inputs".into()));
    }
    let per_class = (0..num_classes)
        .map(|k| {
            let s: Vec<f32> = scores.iter().skip(k).step_by(num_classes).copied().collect();
            let l: Vec<bool> = targets.iter().skip(k).step_by(num_classes).map(|&t| t > 0.5).collect();
            binary_auc(&s, &l)
        })
        .collect::<Result<Vec<_>>>()?;
    let defined: Vec<f64> = per_class.iter().flatten().copied().collect();
    if defined.is_empty() {
        return Err(Error::Metric("no class has both positives and negatives".into()));
    }
    Ok((mean(&defined), per_class))
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Standard deviation with the `n - 1` divisor.
pub fn sample_std(xs: &[f64]) -> Result<f64> {
    if xs.len() < 2 {
        return Err(Error::Spec(format!(
            "sample std needs at least 2 values, got {}",
            xs.len()
        )));
    }
    let m = mean(xs);
    let ss: f64 = xs.iter().map(|x| (x - m) * (x - m)).sum();
    Ok((ss / (xs.len() - 1) as f64).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WelchTest {
    pub t: f64,
    pub dof: f64,
    /// Two-sided.
    pub p: f64,
}

/// Welch's unequal-variance t test with Welch-Satterthwaite degrees of freedom.
pub fn welch_t_test(a: &[f64], b: &[f64]) -> Result<WelchTest> {
    let (va, vb) = (sample_std(a)?.powi(2), sample_std(b)?.powi(2));
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (sa, sb) = (va / na, vb / nb);
    let diff = mean(a) - mean(b);
    let se2 = sa + sb;
    if se2 == 0.0 {
        // Both samples constant: identical means give no evidence of a difference.
        return Ok(if diff == 0.0 {
            WelchTest {
                t: 0.0,
                dof: na + nb - 2.0,
                p: 1.0,
            }
        } else {
            WelchTest {
                t: diff.signum() * f64::INFINITY,
                dof: na + nb - 2.0,
                p: 0.0,
            }
        });
    }
    let t = diff / se2.sqrt();
    let dof = se2 * se2 / (sa * sa / (na - 1.0) + sb * sb / (nb - 1.0));
    let dist = StudentsT::new(0.0, 1.0, dof).map_err(|e| Error::Numeric(e.to_string()))?;
    let p = (2.0 * (1.0 - dist.cdf(t.abs()))).clamp(0.0, 1.0);
    Ok(WelchTest { t, dof, p })
}
