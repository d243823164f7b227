use crate::error::{Error, Result};

use super::{dot, Tensor};

/// Off-diagonal threshold below which a column pair counts as orthogonal.
const ROTATION_TOL: f64 = 1e-14;
const MAX_SWEEPS: usize = 120;
const MAX_EXTENT: usize = 1024;

/// Thin SVD `a = u * diag(s) * v^T`.
#[derive(Debug, Clone)]
pub struct SvdResult {
    /// `m x r` with orthonormal columns, `r = min(m, n)`.
    pub u: Tensor<f64>,
    /// Descending, nonnegative.
    pub s: Vec<f64>,
    /// `n x r` with orthonormal columns.
    pub v: Tensor<f64>,
}

impl SvdResult {
    pub fn reconstruct(&self) -> Result<Tensor<f64>> {
        let us = Tensor::from_fn(self.u.shape()[0], self.s.len(), |i, j| {
            self.u.get(&[i, j]) * self.s[j]
        })?;
        us.matmul(&self.v.transpose()?)
    }
}

/// One-sided (Hestenes) Jacobi SVD for matrices up to 1024 on a side.
///
/// Sweeps visit column pairs cyclically, `(p, q)` with `p < q` ascending, and
/// stop once a full sweep performs no rotation whose normalized off-diagonal
/// exceeds `1e-14`. Columns of `u` belonging to zero singular values are
/// completed by Gram-Schmidt against the standard basis.
pub fn svd_small(a: &Tensor<f64>) -> Result<SvdResult> {
    let (m, n) = a.dims2()?;
    if m > MAX_EXTENT || n > MAX_EXTENT {
        return Err(Error::Dimension(format!(
            "svd_small supports extents up to {MAX_EXTENT}, got {m}x{n}"
        )));
    }
    if !a.all_finite() {
        return Err(Error::Numeric("svd input contains non-finite values".into()));
    }
    if m < n {
        let t = svd_tall(&a.transpose()?)?;
        return Ok(SvdResult {
            u: t.v,
            s: t.s,
            v: t.u,
        });
    }
    svd_tall(a)
}

fn svd_tall(a: &Tensor<f64>) -> Result<SvdResult> {
    let (m, n) = a.dims2()?;
    // Column-major working copies.
    let mut cols: Vec<Vec<f64>> = (0..n)
        .map(|j| (0..m).map(|i| a.data()[i * n + j]).collect())
        .collect();
    let mut vcols: Vec<Vec<f64>> = (0..n)
        .map(|j| (0..n).map(|i| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();

    let mut converged = false;
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in (p + 1)..n {
                let alpha = dot(&cols[p], &cols[p]);
                let beta = dot(&cols[q], &cols[q]);
                let gamma = dot(&cols[p], &cols[q]);
                if alpha == 0.0 || beta == 0.0 {
                    continue;
                }
                if gamma.abs() <= ROTATION_TOL * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate(&mut cols, p, q, c, s);
                rotate(&mut vcols, p, q, c, s);
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::Numeric(format!(
            "Jacobi SVD did not converge in {MAX_SWEEPS} sweeps"
        )));
    }

    let norms: Vec<f64> = cols.iter().map(|c| dot(c, c).sqrt()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    // Stable: equal singular values keep column order.
    order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]));

    let scale = norms.iter().cloned().fold(0.0, f64::max);
    let zero_tol = scale * (m.max(n) as f64) * f64::EPSILON;

    let mut ucols: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut s = Vec::with_capacity(n);
    let mut deficient = Vec::new();
    for (slot, &j) in order.iter().enumerate() {
        let sigma = norms[j];
        if sigma > zero_tol {
            ucols.push(cols[j].iter().map(|v| v / sigma).collect());
            s.push(sigma);
        } else {
            ucols.push(vec![0.0; m]);
            s.push(0.0);
            deficient.push(slot);
        }
    }
    complete_basis(&mut ucols, &deficient, m);

    let u = Tensor::from_fn(m, n, |i, j| ucols[j][i])?;
    let v = Tensor::from_fn(n, n, |i, j| vcols[order[j]][i])?;
    Ok(SvdResult { u, s, v })
}

fn rotate(cols: &mut [Vec<f64>], p: usize, q: usize, c: f64, s: f64) {
    let (lo, hi) = cols.split_at_mut(q);
    let (cp, cq) = (&mut lo[p], &mut hi[0]);
    for (x, y) in cp.iter_mut().zip(cq.iter_mut()) {
        let (xp, xq) = (*x, *y);
        *x = c * xp - s * xq;
        *y = s * xp + c * xq;
    }
}

/// Fills the listed columns with unit vectors orthogonal to every other column.
fn complete_basis(cols: &mut [Vec<f64>], slots: &[usize], m: usize) {
    let mut candidate = 0;
    for &slot in slots {
        while candidate < m {
            let mut v = vec![0.0; m];
            v[candidate] = 1.0;
            candidate += 1;
            // Two passes of modified Gram-Schmidt.
            for _ in 0..2 {
                for (k, c) in cols.iter().enumerate() {
                    if k == slot || c.iter().all(|&x| x == 0.0) {
                        continue;
                    }
                    let proj = dot(&v, c);
                    for (vi, ci) in v.iter_mut().zip(c) {
                        *vi -= proj * ci;
                    }
                }
            }
            let norm = dot(&v, &v).sqrt();
            if norm > 1e-8 {
                cols[slot] = v.iter().map(|x| x / norm).collect();
                break;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn max_abs_dev_from_identity(t: &Tensor<f64>) -> f64 {
        let g = t.transpose().unwrap().matmul(t).unwrap();
        let (n, _) = g.dims2().unwrap();
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((g.get(&[i, j]) - target).abs());
            }
        }
        worst
    }

    #[test]
    fn identity_has_unit_singular_values() {
        let r = svd_small(&Tensor::identity(4).unwrap()).unwrap();
        assert_eq!(r.s, vec![1.0; 4]);
    }

    #[test]
    fn diagonal_sorted_descending() {
        let a = Tensor::from_rows(&[
            vec![1.0, 0.0, 0.0],
            vec![0.0, 3.0, 0.0],
            vec![0.0, 0.0, 2.0],
        ])
        .unwrap();
        let r = svd_small(&a).unwrap();
        assert_eq!(r.s, vec![3.0, 2.0, 1.0]);
    }

    #[test]
    fn wide_matrix_reconstructs() {
        let a = Tensor::from_fn(3, 7, |i, j| ((i * 7 + j) as f64 * 0.37).sin()).unwrap();
        let r = svd_small(&a).unwrap();
        assert_eq!(r.u.shape(), &[3, 3]);
        assert_eq!(r.v.shape(), &[7, 3]);
        let back = r.reconstruct().unwrap();
        let err: f64 = back
            .data()
            .iter()
            .zip(a.data())
            .map(|(x, y)| (x - y).powi(2))
            .sum::<f64>()
            .sqrt();
        assert!(err / a.frobenius_norm() < 1e-10);
        assert!(max_abs_dev_from_identity(&r.u) < 1e-10);
        assert!(max_abs_dev_from_identity(&r.v) < 1e-10);
    }

    #[test]
    fn rank_deficient_completes_u() {
        // Rank one.
        let a = Tensor::from_fn(4, 3, |i, j| (i + 1) as f64 * (j + 1) as f64).unwrap();
        let r = svd_small(&a).unwrap();
        assert!(r.s[1].abs() < 1e-12 && r.s[2].abs() < 1e-12);
        assert!(max_abs_dev_from_identity(&r.u) < 1e-10);
    }

    #[test]
    fn rejects_non_finite() {
        let a = Tensor::new(vec![1, 2], vec![1.0, f64::NAN]).unwrap();
        assert!(matches!(svd_small(&a), Err(Error::Numeric(_))));
    }
}
