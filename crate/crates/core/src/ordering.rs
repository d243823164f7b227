//! Deterministic batch orderings.
//!
//! The seed-free strategies (golden ratio, van der Corput, class-guaranteed,
//! content hash) take no seed anywhere in their call graph; each assigns every
//! sample a key in `[0, 1)` and sorts ascending with ties broken by original
//! index. The seeded shuffle is a Fisher-Yates pass over a fully specified
//! xoshiro256** stream.
//!
//! Loss-driven orderings (herding, pair balancing, loss-ranked and
//! stratified variants) need live training losses and are not provided; a new
//! strategy plugs in by producing a [`PermutationSchedule`].

use std::fmt;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::rng::Xoshiro256StarStar;

/// Golden ratio conjugate `(sqrt(5) - 1) / 2`.
pub const PHI: f64 = 0.618_033_988_749_894_9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StrategyKind {
    Golden,
    Seeded,
    Sobol,
    ClassGuaranteed,
    ContentHash,
}

impl StrategyKind {
    pub fn is_seed_free(self) -> bool {
        self != StrategyKind::Seeded
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StrategyKind::Golden => "golden",
            StrategyKind::Seeded => "seeded",
            StrategyKind::Sobol => "sobol",
            StrategyKind::ClassGuaranteed => "class-guaranteed",
            StrategyKind::ContentHash => "content-hash",
        })
    }
}

impl std::str::FromStr for StrategyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "golden" => Ok(StrategyKind::Golden),
            "seeded" => Ok(StrategyKind::Seeded),
            "sobol" => Ok(StrategyKind::Sobol),
            "class-guaranteed" | "class_guaranteed" => Ok(StrategyKind::ClassGuaranteed),
            "content-hash" | "content_hash" => Ok(StrategyKind::ContentHash),
            other => Err(Error::Spec(format!("unknown ordering strategy '{other}'"))),
        }
    }
}

/// Per-sample ordering inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleKeyTable {
    pub l1_norms: Vec<f32>,
    /// Active class indices per sample, when labels are known.
    pub labels: Option<Vec<Vec<usize>>>,
}

impl SampleKeyTable {
    pub fn from_norms(l1_norms: Vec<f32>) -> Self {
        Self {
            l1_norms,
            labels: None,
        }
    }

    /// L1 norms accumulated in `f32`, in index order.
    pub fn from_samples<S: AsRef<[f32]>>(samples: &[S]) -> Self {
        Self::from_norms(samples.iter().map(|s| l1_norm_f32(s.as_ref())).collect())
    }

    pub fn with_labels(mut self, labels: Vec<Vec<usize>>) -> Result<Self> {
        if labels.len() != self.l1_norms.len() {
            return Err(Error::Spec(format!(
                "{} label sets for {} samples",
                labels.len(),
                self.l1_norms.len()
            )));
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.l1_norms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.l1_norms.is_empty()
    }
}

pub fn l1_norm_f32(x: &[f32]) -> f32 {
    let mut acc = 0.0f32;
    for v in x {
        acc += v.abs();
    }
    acc
}

#[derive(Debug, Clone, PartialEq)]
pub struct PermutationSchedule {
    pub strategy: StrategyKind,
    pub epoch: u64,
    pub perm: Vec<usize>,
    /// Sort keys in sample-index order, for key-based strategies.
    pub keys: Option<Vec<f64>>,
}

impl PermutationSchedule {
    pub fn is_permutation(&self) -> bool {
        is_permutation(&self.perm)
    }

    /// Consecutive chunks of `batch_size` (the last may be short).
    pub fn batches(&self, batch_size: usize) -> Vec<Vec<usize>> {
        self.perm.chunks(batch_size.max(1)).map(<[usize]>::to_vec).collect()
    }

    /// One index per line, trailing newline.
    pub fn to_lines(&self) -> String {
        let mut s = String::with_capacity(self.perm.len() * 6);
        for i in &self.perm {
            s.push_str(&i.to_string());
            s.push('\n');
        }
        s
    }
}

pub fn is_permutation(perm: &[usize]) -> bool {
    let mut seen = vec![false; perm.len()];
    for &i in perm {
        if i >= perm.len() || seen[i] {
            return false;
        }
        seen[i] = true;
    }
    true
}

fn fract(x: f64) -> f64 {
    x - x.floor()
}

/// Shifts a key by the epoch's golden rotation.
fn rotate(key: f64, epoch: u64) -> f64 {
    fract(key + epoch as f64 * PHI)
}

/// Indices sorted by key ascending; equal keys keep index order.
fn argsort_stable(keys: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..keys.len()).collect();
    idx.sort_by(|&a, &b| keys[a].total_cmp(&keys[b]));
    idx
}

fn keyed(strategy: StrategyKind, epoch: u64, keys: Vec<f64>) -> PermutationSchedule {
    PermutationSchedule {
        strategy,
        epoch,
        perm: argsort_stable(&keys),
        keys: Some(keys),
    }
}

/// `fract(l1 * phi)` with the `f32` norm promoted to `f64`.
pub fn golden_hash(l1_norm: f32) -> f64 {
    fract(l1_norm as f64 * PHI)
}

pub fn golden_keys(table: &SampleKeyTable, epoch: u64) -> Result<Vec<f64>> {
    if table.is_empty() {
        return Err(Error::Spec("ordering needs at least one sample".into()));
    }
    table
        .l1_norms
        .iter()
        .enumerate()
        .map(|(i, &norm)| {
            if norm.is_finite() {
                Ok(rotate(golden_hash(norm), epoch))
            } else {
                Err(Error::Numeric(format!("sample {i} has non-finite L1 norm")))
            }
        })
        .collect()
}

/// Seed-free golden-ratio ordering: `key = fract(fract(l1 * phi) + epoch * phi)`.
pub fn golden_permutation(table: &SampleKeyTable, epoch: u64) -> Result<PermutationSchedule> {
    Ok(keyed(StrategyKind::Golden, epoch, golden_keys(table, epoch)?))
}

/// Fisher-Yates over `0..n` drawing from
/// `xoshiro256**(splitmix64(seed ^ epoch * 0x9E3779B97F4A7C15))`.
///
/// For `i` from `n - 1` down to `1`, swap `perm[i]` with `perm[j]` where
/// `j = below(i + 1)` is Lemire's unbiased bounded draw.
pub fn seeded_permutation(n: usize, seed: u64, epoch: u64) -> Result<PermutationSchedule> {
    if n == 0 {
        return Err(Error::Spec("ordering needs at least one sample".into()));
    }
    let mut rng = Xoshiro256StarStar::for_epoch(seed, epoch);
    let mut perm: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.below(i as u64 + 1) as usize;
        perm.swap(i, j);
    }
    Ok(PermutationSchedule {
        strategy: StrategyKind::Seeded,
        epoch,
        perm,
        keys: None,
    })
}

/// Base-2 radical inverse.
pub fn van_der_corput(mut i: u64) -> f64 {
    let mut result = 0.0;
    let mut denom = 0.5;
    while i > 0 {
        if i & 1 == 1 {
            result += denom;
        }
        i >>= 1;
        denom *= 0.5;
    }
    result
}

/// Quasi-random ordering keyed by `fract(vdc2(i) + epoch * phi)`.
pub fn sobol_permutation(n: usize, epoch: u64) -> Result<PermutationSchedule> {
    if n == 0 {
        return Err(Error::Spec("ordering needs at least one sample".into()));
    }
    let keys = (0..n as u64).map(|i| rotate(van_der_corput(i), epoch)).collect();
    Ok(keyed(StrategyKind::Sobol, epoch, keys))
}

/// First eight digest bytes as a big-endian fraction of 2^64.
pub fn content_key(raw: &[u8]) -> f64 {
    let digest = Sha256::digest(raw);
    let mut head = [0u8; 8];
    head.copy_from_slice(&digest[..8]);
    u64::from_be_bytes(head) as f64 / 18_446_744_073_709_551_616.0
}

/// Ordering keyed by the SHA-256 of each sample's raw bytes.
pub fn content_hash_permutation<B: AsRef<[u8]>>(raw_samples: &[B], epoch: u64) -> Result<PermutationSchedule> {
    if raw_samples.is_empty() {
        return Err(Error::Spec("ordering needs at least one sample".into()));
    }
    let keys = raw_samples
        .iter()
        .map(|s| rotate(content_key(s.as_ref()), epoch))
        .collect();
    Ok(keyed(StrategyKind::ContentHash, epoch, keys))
}

/// Batches guaranteeing class coverage.
///
/// Each class has a queue of its samples in golden order. A batch first takes
/// up to `min_per_class` rounds, visiting classes in ascending index and taking
/// the next unused sample from each non-empty queue, then fills the remaining
/// slots from the global golden order. Every sample is used exactly once.
pub fn class_guaranteed_batches(
    table: &SampleKeyTable,
    epoch: u64,
    batch_size: usize,
    min_per_class: usize,
) -> Result<Vec<Vec<usize>>> {
    let labels = table
        .labels
        .as_ref()
        .ok_or_else(|| Error::Spec("class-guaranteed ordering needs labels".into()))?;
    if batch_size == 0 {
        return Err(Error::Spec("batch_size must be at least 1".into()));
    }
    let global = golden_permutation(table, epoch)?.perm;
    let num_classes = labels.iter().flatten().map(|&c| c + 1).max().unwrap_or(0);
    let mut queues: Vec<Vec<usize>> = vec![Vec::new(); num_classes];
    for &i in &global {
        for &c in &labels[i] {
            queues[c].push(i);
        }
    }
    let mut heads = vec![0usize; num_classes];
    let mut used = vec![false; table.len()];
    let mut global_head = 0;
    let mut remaining = table.len();
    let mut batches = Vec::new();

    while remaining > 0 {
        let mut batch = Vec::with_capacity(batch_size);
        'rounds: for _ in 0..min_per_class {
            for c in 0..num_classes {
                if batch.len() == batch_size {
                    break 'rounds;
                }
                let queue = &queues[c];
                while heads[c] < queue.len() && used[queue[heads[c]]] {
                    heads[c] += 1;
                }
                if let Some(&i) = queue.get(heads[c]) {
                    used[i] = true;
                    batch.push(i);
                }
            }
        }
        while batch.len() < batch_size && global_head < global.len() {
            let i = global[global_head];
            global_head += 1;
            if !used[i] {
                used[i] = true;
                batch.push(i);
            }
        }
        remaining -= batch.len();
        batches.push(batch);
    }
    Ok(batches)
}

/// Class-guaranteed batches flattened into one permutation.
pub fn class_guaranteed_permutation(
    table: &SampleKeyTable,
    epoch: u64,
    batch_size: usize,
    min_per_class: usize,
) -> Result<PermutationSchedule> {
    let batches = class_guaranteed_batches(table, epoch, batch_size, min_per_class)?;
    Ok(PermutationSchedule {
        strategy: StrategyKind::ClassGuaranteed,
        epoch,
        perm: batches.concat(),
        keys: None,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticsReport {
    /// Sizes of groups of samples sharing an identical `f32` L1 norm (>= 2).
    pub collision_groups: Vec<usize>,
    /// `sum log(g!) / log(n!)`: fraction of ordering freedom lost to ties.
    pub entropy_loss: f64,
    /// Star discrepancy of each schedule's key set (key-based strategies).
    pub star_discrepancy: Vec<Option<f64>>,
    /// Normalized Kendall tau distance between consecutive schedules.
    pub kendall_distance: Vec<f64>,
}

fn ln_factorial(n: usize) -> f64 {
    (2..=n).map(|k| (k as f64).ln()).sum()
}

pub fn collision_groups(l1_norms: &[f32]) -> Vec<usize> {
    let mut bits: Vec<u32> = l1_norms.iter().map(|v| v.to_bits()).collect();
    bits.sort_unstable();
    bits.chunk_by(|a, b| a == b)
        .map(<[u32]>::len)
        .filter(|&g| g >= 2)
        .collect()
}

pub fn entropy_loss(groups: &[usize], n: usize) -> f64 {
    let total = ln_factorial(n);
    if total == 0.0 {
        return 0.0;
    }
    groups.iter().map(|&g| ln_factorial(g)).sum::<f64>() / total
}

/// Exact one-dimensional star discrepancy of a point set in `[0, 1)`.
pub fn star_discrepancy(points: &[f64]) -> f64 {
    let mut xs = points.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let i = i as f64;
            ((i + 1.0) / n - x).max(x - i / n)
        })
        .fold(0.0, f64::max)
}

/// Fraction of index pairs ordered differently by the two permutations.
pub fn kendall_distance(a: &[usize], b: &[usize]) -> f64 {
    let n = a.len();
    if n < 2 {
        return 0.0;
    }
    let mut pos_in_b = vec![0usize; n];
    for (p, &i) in b.iter().enumerate() {
        pos_in_b[i] = p;
    }
    let mut seq: Vec<usize> = a.iter().map(|&i| pos_in_b[i]).collect();
    let inversions = count_inversions(&mut seq);
    inversions as f64 / (n as f64 * (n as f64 - 1.0) / 2.0)
}

fn count_inversions(v: &mut [usize]) -> u64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut count = count_inversions(&mut v[..mid]) + count_inversions(&mut v[mid..]);
    let mut merged = Vec::with_capacity(n);
    let (mut i, mut j) = (0, mid);
    while i < mid && j < n {
        if v[i] <= v[j] {
            merged.push(v[i]);
            i += 1;
        } else {
            merged.push(v[j]);
            count += (mid - i) as u64;
            j += 1;
        }
    }
    merged.extend_from_slice(&v[i..mid]);
    merged.extend_from_slice(&v[j..n]);
    v.copy_from_slice(&merged);
    count
}

pub fn permutation_diagnostics(schedules: &[PermutationSchedule], table: &SampleKeyTable) -> Result<DiagnosticsReport> {
    if schedules.is_empty() {
        return Err(Error::Spec("diagnostics need at least one schedule".into()));
    }
    let groups = collision_groups(&table.l1_norms);
    let entropy_loss = entropy_loss(&groups, table.len());
    Ok(DiagnosticsReport {
        collision_groups: groups,
        entropy_loss,
        star_discrepancy: schedules
            .iter()
            .map(|s| s.keys.as_deref().map(star_discrepancy))
            .collect(),
        kendall_distance: schedules
            .windows(2)
            .map(|w| kendall_distance(&w[0].perm, &w[1].perm))
            .collect(),
    })
}
