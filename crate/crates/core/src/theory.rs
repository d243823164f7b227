//! Numerical checks of the analytic properties behind structured
//! initialization: energy preservation, conditioning against random matrices,
//! band-limited capture, decorrelation of first-order Markov covariances and
//! Gaussian-channel mutual information.
//!
//! Mutual information for a projection `W` (`M x N`) of `x ~ N(0, S)` is
//!
//! ```text
//! I = 1/2 log2 det(I_M + snr * (W S W^T) (W W^T)^-1)
//! ```
//!
//! i.e. white noise added before the projection, so the measure depends only
//! on the row space of `W` and not on its row scaling.

use std::fmt;

use rayon::prelude::*;

use crate::bases::{basis_matrix, BasisKind};
use crate::error::{Error, Result};
use crate::parallel;
use crate::rng::Xoshiro256StarStar;
use crate::tensor::{dot, matmul, svd_small, Tensor};

/// How `computed` is judged against `predicted`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    /// `|computed - predicted| <= tolerance`.
    Within,
    /// `computed >= predicted - tolerance`.
    AtLeast,
    /// `computed <= predicted + tolerance`.
    AtMost,
    /// Informational; always passes.
    Recorded,
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Relation::Within => "within",
            Relation::AtLeast => "at-least",
            Relation::AtMost => "at-most",
            Relation::Recorded => "recorded",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TheoryReport {
    pub check_name: String,
    pub computed: Vec<f64>,
    pub predicted: Vec<f64>,
    pub tolerance: f64,
    pub relation: Relation,
    pub pass: bool,
}

impl TheoryReport {
    pub fn new(name: &str, computed: Vec<f64>, predicted: Vec<f64>, tolerance: f64, relation: Relation) -> Self {
        let pass = computed.len() == predicted.len()
            && computed.iter().zip(&predicted).all(|(&c, &p)| match relation {
                Relation::Within => (c - p).abs() <= tolerance,
                Relation::AtLeast => c >= p - tolerance,
                Relation::AtMost => c <= p + tolerance,
                Relation::Recorded => true,
            });
        Self {
            check_name: name.to_string(),
            computed,
            predicted,
            tolerance,
            relation,
            pass,
        }
    }

    pub const CSV_HEADER: &'static str = "check,relation,computed,predicted,tolerance,pass";

    /// Multiple values are joined with `;`.
    pub fn csv_row(&self) -> String {
        let join = |v: &[f64]| v.iter().map(|x| format!("{x:.12e}")).collect::<Vec<_>>().join(";");
        format!(
            "{},{},{},{},{:.6e},{}",
            self.check_name,
            self.relation,
            join(&self.computed),
            join(&self.predicted),
            self.tolerance,
            self.pass
        )
    }
}

impl fmt::Display for TheoryReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let show = |v: &[f64]| v.iter().map(|x| format!("{x:.6}")).collect::<Vec<_>>().join(", ");
        write!(
            f,
            "[{}] {:<24} computed [{}] {} [{}] (tol {:.1e})",
            if self.pass { "PASS" } else { "FAIL" },
            self.check_name,
            show(&self.computed),
            self.relation,
            show(&self.predicted),
            self.tolerance
        )
    }
}

pub fn reports_csv(reports: &[TheoryReport]) -> String {
    let mut s = String::from(TheoryReport::CSV_HEADER);
    s.push('\n');
    for r in reports {
        s.push_str(&r.csv_row());
        s.push('\n');
    }
    s
}

fn orthonormal_dct(n: usize) -> Result<Tensor<f64>> {
    Ok(basis_matrix(BasisKind::Dct2, n, n, true)?.rows)
}

fn sq_norm(x: &[f64]) -> f64 {
    dot(x, x)
}

/// `||W_K x||^2 / ||x||^2` for the first `K` orthonormal DCT-II rows.
pub fn energy_ratio_truncated(x: &[f64], k: usize) -> Result<f64> {
    let n = x.len();
    if k == 0 || k > n {
        return Err(Error::Spec(format!("need 1 <= K <= N, got K={k} N={n}")));
    }
    let total = sq_norm(x);
    if total == 0.0 {
        return Err(Error::DegenerateInput("zero vector".into()));
    }
    let c = orthonormal_dct(n)?;
    let kept: f64 = (0..k).map(|i| dot(c.row(i), x).powi(2)).sum();
    Ok(kept / total)
}

/// Monte-Carlo `(mean, variance)` of `||W x||^2 / ||x||^2` for `K x N`
/// matrices with i.i.d. `N(0, 2/N)` entries and a fixed unit `x`.
/// Trial `t` draws from its own stream, so the result is thread-count free.
pub fn kaiming_energy_ratio_mc(n: usize, k: usize, trials: usize, seed: u64) -> Result<(f64, f64)> {
    if n == 0 || k == 0 || trials < 2 {
        return Err(Error::Spec("need N, K >= 1 and at least 2 trials".into()));
    }
    let inv = 1.0 / (n as f64).sqrt();
    let x = vec![inv; n];
    let std = (2.0 / n as f64).sqrt();
    let ratios: Vec<f64> = parallel::install(|| {
        (0..trials)
            .into_par_iter()
            .map(|t| {
                let mut rng = Xoshiro256StarStar::for_epoch(seed, t as u64);
                (0..k)
                    .map(|_| {
                        let mut acc = 0.0;
                        for &xi in &x {
                            acc += std * rng.normal() * xi;
                        }
                        acc * acc
                    })
                    .sum()
            })
            .collect()
    });
    let mean = ratios.iter().sum::<f64>() / trials as f64;
    let var = ratios.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (trials - 1) as f64;
    Ok((mean, var))
}

/// `sigma_max / sigma_min`; infinity when the smallest singular value is zero.
pub fn condition_number(m: &Tensor<f64>) -> Result<f64> {
    let svd = svd_small(m)?;
    let s = &svd.s;
    let max = s.first().copied().unwrap_or(0.0);
    let min = s.last().copied().unwrap_or(0.0);
    Ok(if min == 0.0 { f64::INFINITY } else { max / min })
}

/// `N(0, 2/cols)` matrix from `rng`, row-major.
pub fn gaussian_matrix(rows: usize, cols: usize, rng: &mut Xoshiro256StarStar) -> Result<Tensor<f64>> {
    let std = (2.0 / cols as f64).sqrt();
    Tensor::from_fn(rows, cols, |_, _| std * rng.normal())
}

/// Fraction of `||x||^2` captured by the first `ceil(B N)` orthonormal DCT rows.
pub fn capture_fraction(x: &[f64], band: f64) -> Result<f64> {
    if !(band > 0.0 && band <= 1.0) {
        return Err(Error::Spec(format!("band fraction {band} is outside (0, 1]")));
    }
    let k = ((band * x.len() as f64).ceil() as usize).clamp(1, x.len());
    energy_ratio_truncated(x, k)
}

/// Sum of eight cosines at frequencies `(m + 1) / 9 * B/2` cycles per sample
/// (below `B` times Nyquist) with amplitudes `1 / (m + 1)`.
pub fn bandlimited_signal(band: f64, n: usize) -> Vec<f64> {
    const COMPONENTS: usize = 8;
    let phi = crate::ordering::PHI;
    (0..n)
        .map(|t| {
            (0..COMPONENTS)
                .map(|m| {
                    let f = (m + 1) as f64 / (COMPONENTS + 1) as f64 * band * 0.5;
                    let phase = 2.0 * std::f64::consts::PI * (m as f64 * phi).fract();
                    (2.0 * std::f64::consts::PI * f * t as f64 + phase).cos() / (m + 1) as f64
                })
                .sum()
        })
        .collect()
}

pub fn bandlimited_capture(band: f64, n: usize) -> Result<f64> {
    capture_fraction(&bandlimited_signal(band, n), band)
}

/// Mean capture of white Gaussian noise over `trials` draws, with its
/// standard error.
pub fn white_noise_capture(band: f64, n: usize, trials: usize, seed: u64) -> Result<(f64, f64)> {
    if trials < 2 {
        return Err(Error::Spec("need at least 2 trials".into()));
    }
    let mut rng = Xoshiro256StarStar::seed_from_u64(seed);
    let vals = (0..trials)
        .map(|_| {
            let x: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
            capture_fraction(&x, band)
        })
        .collect::<Result<Vec<_>>>()?;
    let mean = vals.iter().sum::<f64>() / trials as f64;
    let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (trials - 1) as f64;
    Ok((mean, (var / trials as f64).sqrt()))
}

/// `S_ij = rho^|i-j|`.
pub fn toeplitz_covariance(n: usize, rho: f64) -> Result<Tensor<f64>> {
    if !(rho.abs() < 1.0) {
        return Err(Error::Spec(format!("|rho| must be < 1, got {rho}")));
    }
    Tensor::from_fn(n, n, |i, j| rho.powi(i.abs_diff(j) as i32))
}

/// Off-diagonal share of the squared Frobenius norm of `C S C^T`.
pub fn toeplitz_diag_energy(n: usize, rho: f64) -> Result<f64> {
    let s = toeplitz_covariance(n, rho)?;
    let c = orthonormal_dct(n)?;
    let m = matmul(&matmul(&c, &s)?, &c.transpose()?)?;
    let mut off = 0.0;
    let mut total = 0.0;
    for i in 0..n {
        for j in 0..n {
            let v = m.get(&[i, j]).powi(2);
            total += v;
            if i != j {
                off += v;
            }
        }
    }
    Ok(off / total)
}

/// Lower-triangular `L` with `L L^T = a`, or `None` when `a` is not
/// numerically positive definite.
fn cholesky(a: &Tensor<f64>) -> Option<Tensor<f64>> {
    let n = a.shape()[0];
    let scale = (0..n).map(|i| a.get(&[i, i]).abs()).fold(0.0, f64::max);
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = a.get(&[i, j]);
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if s <= scale * 1e-12 {
                    return None;
                }
                l[i * n + i] = s.sqrt();
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    Tensor::new(vec![n, n], l).ok()
}

/// Solves `L X = B` for lower-triangular `L`, column by column.
fn forward_solve(l: &Tensor<f64>, b: &Tensor<f64>) -> Tensor<f64> {
    let n = l.shape()[0];
    let cols = b.shape()[1];
    let mut x = b.clone();
    let d = x.data_mut();
    for c in 0..cols {
        for i in 0..n {
            let mut s = d[i * cols + c];
            for k in 0..i {
                s -= l.get(&[i, k]) * d[k * cols + c];
            }
            d[i * cols + c] = s / l.get(&[i, i]);
        }
    }
    x
}

pub fn gaussian_mutual_information(w: &Tensor<f64>, sigma_x: &Tensor<f64>, snr_db: f64) -> Result<f64> {
    let (m, n) = w.dims2()?;
    if sigma_x.dims2()? != (n, n) {
        return Err(Error::Dimension(format!(
            "covariance must be {n}x{n}, got {:?}",
            sigma_x.shape()
        )));
    }
    let snr = 10f64.powf(snr_db / 10.0);
    let wt = w.transpose()?;
    let signal = matmul(&matmul(w, sigma_x)?, &wt)?;
    let gram = matmul(w, &wt)?;
    let l = cholesky(&gram).ok_or_else(|| Error::DegenerateInput("W W^T is singular".into()))?;
    // L^-1 A L^-T is symmetric and similar to A (W W^T)^-1.
    let half = forward_solve(&l, &signal);
    let whitened = forward_solve(&l, &half.transpose()?);
    let eye_plus = Tensor::from_fn(m, m, |i, j| {
        let sym = 0.5 * (whitened.get(&[i, j]) + whitened.get(&[j, i]));
        snr * sym + if i == j { 1.0 } else { 0.0 }
    })?;
    let lc = cholesky(&eye_plus).ok_or_else(|| Error::Numeric("I + snr M is not positive definite".into()))?;
    let log2_det: f64 = (0..m).map(|i| 2.0 * lc.get(&[i, i]).log2()).sum();
    Ok(0.5 * log2_det)
}

/// First `m` orthonormal DCT-II rows of length `n`.
pub fn dct_rows(m: usize, n: usize) -> Result<Tensor<f64>> {
    let c = orthonormal_dct(n)?;
    Tensor::from_fn(m, n, |i, j| c.get(&[i, j]))
}

/// `(I_dct, mean I_gaussian)` over `draws` Gaussian projections.
pub fn mi_comparison(m: usize, n: usize, rho: f64, snr_db: f64, draws: usize, seed: u64) -> Result<(f64, f64)> {
    let sigma = toeplitz_covariance(n, rho)?;
    let dct = gaussian_mutual_information(&dct_rows(m, n)?, &sigma, snr_db)?;
    let mut rng = Xoshiro256StarStar::seed_from_u64(seed);
    let mut acc = 0.0;
    for _ in 0..draws {
        acc += gaussian_mutual_information(&gaussian_matrix(m, n, &mut rng)?, &sigma, snr_db)?;
    }
    Ok((dct, acc / draws as f64))
}

pub const CHECKS: &[&str] = &[
    "parseval_full_rank",
    "energy_truncated",
    "kaiming_energy_mean",
    "kaiming_energy_variance",
    "kaiming_energy_full_rank",
    "orthonormal_condition",
    "marchenko_pastur",
    "bandlimited_capture",
    "white_noise_capture",
    "toeplitz_identity",
    "toeplitz_rho_0.9",
    "toeplitz_monotone",
    "mi_isotropic",
    "mi_high_correlation",
    "mi_uncorrelated",
    "mi_crossover",
];

const SEED: u64 = 20_240_601;
const MC_TRIALS: usize = 100_000;

/// The default-size Monte-Carlo run, shared by the mean and variance checks.
fn default_mc() -> Result<(f64, f64)> {
    static CACHE: std::sync::OnceLock<(f64, f64)> = std::sync::OnceLock::new();
    if let Some(&v) = CACHE.get() {
        return Ok(v);
    }
    let v = kaiming_energy_ratio_mc(64, 16, MC_TRIALS, SEED)?;
    Ok(*CACHE.get_or_init(|| v))
}

fn random_vector(n: usize, rng: &mut Xoshiro256StarStar) -> Vec<f64> {
    (0..n).map(|_| rng.normal()).collect()
}

/// Runs one named check.
pub fn run_check(name: &str) -> Result<TheoryReport> {
    use Relation::*;
    let r = match name {
        "parseval_full_rank" => {
            let mut rng = Xoshiro256StarStar::seed_from_u64(SEED);
            let mut computed = Vec::new();
            for n in [16, 64, 256] {
                let mut worst: f64 = 1.0;
                for _ in 0..100 {
                    let ratio = energy_ratio_truncated(&random_vector(n, &mut rng), n)?;
                    if (ratio - 1.0).abs() > (worst - 1.0).abs() {
                        worst = ratio;
                    }
                }
                computed.push(worst);
            }
            TheoryReport::new(name, computed, vec![1.0; 3], 1e-12, Within)
        }
        "energy_truncated" => {
            let mut rng = Xoshiro256StarStar::seed_from_u64(SEED + 1);
            let x = random_vector(64, &mut rng);
            let c = orthonormal_dct(64)?;
            let coeffs: Vec<f64> = (0..64).map(|i| dot(c.row(i), &x)).collect();
            let tail: f64 = coeffs[16..].iter().map(|v| v * v).sum();
            let predicted = 1.0 - tail / sq_norm(&x);
            TheoryReport::new(name, vec![energy_ratio_truncated(&x, 16)?], vec![predicted], 1e-12, Within)
        }
        "kaiming_energy_mean" => {
            let (mean, var) = default_mc()?;
            let tol = 3.0 * (var / MC_TRIALS as f64).sqrt();
            TheoryReport::new(name, vec![mean], vec![0.5], tol, Within)
        }
        "kaiming_energy_variance" => {
            let (_, var) = default_mc()?;
            let predicted = 8.0 * 16.0 / (64.0 * 64.0);
            TheoryReport::new(name, vec![var], vec![predicted], 0.2 * predicted, Within)
        }
        "kaiming_energy_full_rank" => {
            let trials = 10_000;
            let (mean, var) = kaiming_energy_ratio_mc(64, 64, trials, SEED + 2)?;
            TheoryReport::new(name, vec![mean], vec![2.0], 3.0 * (var / trials as f64).sqrt(), Within)
        }
        "orthonormal_condition" => {
            let mut computed = Vec::new();
            for kind in BasisKind::ALL {
                for n in [8, 16, 32, 64, 128] {
                    computed.push(condition_number(&basis_matrix(kind, n, n, true)?.rows)?);
                }
            }
            let len = computed.len();
            TheoryReport::new(name, computed, vec![1.0; len], 1e-8, Within)
        }
        "marchenko_pastur" => {
            let mut rng = Xoshiro256StarStar::seed_from_u64(SEED + 3);
            let mut acc = 0.0;
            for _ in 0..20 {
                acc += condition_number(&gaussian_matrix(512, 128, &mut rng)?)?;
            }
            TheoryReport::new(name, vec![acc / 20.0], vec![3.0], 0.75, Within)
        }
        "bandlimited_capture" => TheoryReport::new(name, vec![bandlimited_capture(0.8, 100)?], vec![0.99], 0.0, AtLeast),
        "white_noise_capture" => {
            let (mean, se) = white_noise_capture(0.5, 64, 2000, SEED + 4)?;
            TheoryReport::new(name, vec![mean], vec![0.5], 3.0 * se, Within)
        }
        "toeplitz_identity" => TheoryReport::new(name, vec![toeplitz_diag_energy(64, 0.0)?], vec![0.0], 1e-15, Within),
        "toeplitz_rho_0.9" => TheoryReport::new(name, vec![toeplitz_diag_energy(64, 0.9)?], vec![0.05], 0.0, AtMost),
        "toeplitz_monotone" => {
            // Successive differences over increasing rho; all must be negative.
            let f = [0.5, 0.7, 0.9, 0.95]
                .iter()
                .map(|&rho| toeplitz_diag_energy(64, rho))
                .collect::<Result<Vec<_>>>()?;
            let diffs: Vec<f64> = f.windows(2).map(|w| w[1] - w[0]).collect();
            TheoryReport::new(name, diffs, vec![0.0; 3], 0.0, AtMost)
        }
        "mi_isotropic" => {
            let w = dct_rows(16, 64)?;
            let mi = gaussian_mutual_information(&w, &Tensor::identity(64)?, 10.0)?;
            TheoryReport::new(name, vec![mi], vec![8.0 * 11f64.log2()], 1e-9, Within)
        }
        "mi_high_correlation" => {
            let (dct, gauss) = mi_comparison(16, 64, 0.9, 10.0, 20, SEED + 5)?;
            TheoryReport::new(name, vec![dct], vec![gauss], 0.0, AtLeast)
        }
        "mi_uncorrelated" => {
            let (dct, gauss) = mi_comparison(16, 64, 0.0, 10.0, 20, SEED + 5)?;
            TheoryReport::new(name, vec![dct], vec![gauss], 0.0, Recorded)
        }
        "mi_crossover" => {
            // Smallest rho on a 0.05 grid where the DCT rows carry strictly more information.
            let mut found = f64::NAN;
            for i in 0..20 {
                let rho = i as f64 * 0.05;
                let (dct, gauss) = mi_comparison(16, 64, rho, 10.0, 20, SEED + 5)?;
                if dct > gauss + 1e-9 {
                    found = rho;
                    break;
                }
            }
            TheoryReport::new(name, vec![found], vec![0.3], 0.0, Recorded)
        }
        other => return Err(Error::Spec(format!("unknown theory check '{other}'"))),
    };
    Ok(r)
}

/// Runs every check, or only `filter` when given. Reports come back in
/// [`CHECKS`] order.
pub fn run_suite(filter: Option<&str>) -> Result<Vec<TheoryReport>> {
    let names: Vec<&str> = match filter {
        None => CHECKS.to_vec(),
        Some(f) if CHECKS.contains(&f) => vec![f],
        Some(f) => return Err(Error::Spec(format!("unknown theory check '{f}'"))),
    };
    names.into_iter().map(run_check).collect()
}
