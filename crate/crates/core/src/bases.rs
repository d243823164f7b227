//! Analytic orthogonal basis families.
//!
//! Every basis is evaluated in `f64`. A basis over `n_cols` coordinates has
//! `n_cols` unique vectors; when more rows are requested they cycle, so row
//! `i` equals row `i % n_cols`.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;
use std::sync::{Arc, Mutex, OnceLock};

use crate::error::{Error, Result};
use crate::tensor::{dot, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BasisKind {
    Dct2,
    Hadamard,
    Hartley,
    Dst2,
}

impl BasisKind {
    pub const ALL: [BasisKind; 4] = [
        BasisKind::Dct2,
        BasisKind::Hadamard,
        BasisKind::Hartley,
        BasisKind::Dst2,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BasisKind::Dct2 => "dct",
            BasisKind::Hadamard => "hadamard",
            BasisKind::Hartley => "hartley",
            BasisKind::Dst2 => "dst",
        }
    }
}

impl fmt::Display for BasisKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BasisKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "dct" | "dct2" | "dct-ii" => Ok(BasisKind::Dct2),
            "hadamard" => Ok(BasisKind::Hadamard),
            "hartley" => Ok(BasisKind::Hartley),
            "dst" | "dst2" | "dst-ii" | "sinusoidal" => Ok(BasisKind::Dst2),
            other => Err(Error::Spec(format!("unknown basis kind '{other}'"))),
        }
    }
}

/// A matrix whose rows are basis filters.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisMatrix {
    pub kind: BasisKind,
    pub rows: Tensor<f64>,
    /// Orthonormal scaling applied (otherwise the raw unscaled kernel).
    pub normalized: bool,
}

impl BasisMatrix {
    pub fn n_rows(&self) -> usize {
        self.rows.shape()[0]
    }

    pub fn n_cols(&self) -> usize {
        self.rows.shape()[1]
    }
}

/// Generates `n_rows x n_cols` filters of the given family.
///
/// Raw kernels:
/// - DCT-II: `cos(pi i (2j+1) / (2 n_cols))`
/// - DST-II: `sin(pi (i+1) (2j+1) / (2 n_cols))`
/// - Hartley: `cas(2 pi i j / n_cols)`
/// - Hadamard: Sylvester entries `(-1)^popcount(i & j)`
///
/// With `normalized`, DCT rows get the orthonormal `alpha_i` factor, Hartley and
/// Hadamard are divided by `sqrt(n_cols)`, and DST rows are rescaled to unit norm.
pub fn basis_matrix(kind: BasisKind, n_rows: usize, n_cols: usize, normalized: bool) -> Result<BasisMatrix> {
    if n_rows == 0 || n_cols == 0 {
        return Err(Error::Dimension(format!(
            "basis needs nonzero dimensions, got {n_rows}x{n_cols}"
        )));
    }
    let unique = n_cols;
    let n = n_cols as f64;
    let mut base: Vec<Vec<f64>> = (0..unique.min(n_rows))
        .map(|i| {
            (0..n_cols)
                .map(|j| raw_entry(kind, i, j, n))
                .collect::<Vec<f64>>()
        })
        .collect();

    if normalized {
        for (i, row) in base.iter_mut().enumerate() {
            let factor = match kind {
                BasisKind::Dct2 if i == 0 => (1.0 / n).sqrt(),
                BasisKind::Dct2 => (2.0 / n).sqrt(),
                BasisKind::Hartley | BasisKind::Hadamard => 1.0 / n.sqrt(),
                BasisKind::Dst2 => 1.0 / dot(row, row).sqrt(),
            };
            for v in row.iter_mut() {
                *v *= factor;
            }
        }
    }

    let rows = Tensor::from_fn(n_rows, n_cols, |i, j| base[i % unique][j])?;
    Ok(BasisMatrix {
        kind,
        rows,
        normalized,
    })
}

fn raw_entry(kind: BasisKind, i: usize, j: usize, n: f64) -> f64 {
    let (fi, fj) = (i as f64, j as f64);
    match kind {
        BasisKind::Dct2 => (PI * fi * (2.0 * fj + 1.0) / (2.0 * n)).cos(),
        BasisKind::Dst2 => (PI * (fi + 1.0) * (2.0 * fj + 1.0) / (2.0 * n)).sin(),
        BasisKind::Hartley => {
            // Reduce i*j mod n first so the angle stays in [0, 2 pi).
            let theta = 2.0 * PI * (((i * j) % n as usize) as f64) / n;
            theta.cos() + theta.sin()
        }
        BasisKind::Hadamard => {
            if (i & j).count_ones() % 2 == 0 {
                1.0
            } else {
                -1.0
            }
        }
    }
}

type CacheKey = (BasisKind, usize, usize, bool);

/// Memoizes generated bases. Cached and freshly generated matrices are
/// bitwise identical because generation is a pure function of the key.
#[derive(Debug, Default)]
pub struct BasisCache {
    entries: Mutex<HashMap<CacheKey, Arc<BasisMatrix>>>,
}

impl BasisCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, kind: BasisKind, n_rows: usize, n_cols: usize, normalized: bool) -> Result<Arc<BasisMatrix>> {
        let key = (kind, n_rows, n_cols, normalized);
        if let Some(hit) = self.entries.lock().expect("basis cache poisoned").get(&key) {
            return Ok(Arc::clone(hit));
        }
        let fresh = Arc::new(basis_matrix(kind, n_rows, n_cols, normalized)?);
        let mut entries = self.entries.lock().expect("basis cache poisoned");
        Ok(Arc::clone(entries.entry(key).or_insert(fresh)))
    }

    pub fn len(&self) -> usize {
        self.entries.lock().expect("basis cache poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Process-wide cache used by initialization.
pub fn global_cache() -> &'static BasisCache {
    static CACHE: OnceLock<BasisCache> = OnceLock::new();
    CACHE.get_or_init(BasisCache::new)
}

/// Largest `|cos|` between distinct rows, optionally after subtracting the
/// single global mean of all entries.
pub fn max_pairwise_cosine(b: &BasisMatrix, global_mean_subtract: bool) -> Result<f64> {
    max_pairwise_cosine_rows(&b.rows, global_mean_subtract)
}

pub fn max_pairwise_cosine_rows(m: &Tensor<f64>, global_mean_subtract: bool) -> Result<f64> {
    let (r, c) = m.dims2()?;
    if r < 2 {
        return Err(Error::Dimension("need at least two rows".into()));
    }
    let shift = if global_mean_subtract {
        m.sum() / m.len() as f64
    } else {
        0.0
    };
    let rows: Vec<Vec<f64>> = (0..r)
        .map(|i| m.row(i).iter().map(|v| v - shift).collect())
        .collect();
    let norms: Vec<f64> = rows.iter().map(|row| dot(row, row).sqrt()).collect();
    if let Some(row) = norms.iter().position(|&n| n == 0.0) {
        return Err(Error::DegenerateRow { row });
    }
    debug_assert_eq!(rows[0].len(), c);
    let mut worst: f64 = 0.0;
    for i in 0..r {
        for j in (i + 1)..r {
            let cos = dot(&rows[i], &rows[j]) / (norms[i] * norms[j]);
            worst = worst.max(cos.abs());
        }
    }
    Ok(worst)
}
