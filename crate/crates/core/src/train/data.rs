//! Seeded synthetic multi-label 1-D classification task.
//!
//! Each active class adds a windowed sinusoid whose frequency and phase are
//! fixed by the class index; per sample the window position and amplitude
//! jitter and Gaussian noise come from the data seed. The seed is part of the
//! dataset's identity, so the same seed always yields the same bytes.

use crate::error::{Error, Result};
use crate::ordering::PHI;
use crate::rng::Xoshiro256StarStar;

/// Prevalences of the default imbalanced six-class task.
pub const DEFAULT_PREVALENCES: [f64; 6] = [0.6, 0.2, 0.1, 0.05, 0.03, 0.02];

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub num_classes: usize,
    pub channels: usize,
    pub input_len: usize,
    /// One `channels * input_len` buffer per sample.
    pub inputs: Vec<Vec<f32>>,
    /// One 0/1 vector of length `num_classes` per sample.
    pub targets: Vec<Vec<f32>>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn positive_counts(&self) -> Vec<usize> {
        (0..self.num_classes)
            .map(|k| self.targets.iter().filter(|t| t[k] > 0.5).count())
            .collect()
    }

    /// Active class indices per sample.
    pub fn label_sets(&self) -> Vec<Vec<usize>> {
        self.targets
            .iter()
            .map(|t| (0..self.num_classes).filter(|&k| t[k] > 0.5).collect())
            .collect()
    }

    /// Targets of the given samples, concatenated row-major.
    pub fn gather_targets(&self, idx: &[usize]) -> Vec<f32> {
        idx.iter().flat_map(|&i| self.targets[i].iter().copied()).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticTask {
    pub prevalences: Vec<f64>,
    pub train_size: usize,
    pub val_size: usize,
    pub test_size: usize,
    pub input_len: usize,
    pub channels: usize,
    pub noise_std: f64,
    pub data_seed: u64,
}

impl Default for SyntheticTask {
    fn default() -> Self {
        Self {
            prevalences: DEFAULT_PREVALENCES.to_vec(),
            train_size: 512,
            val_size: 256,
            test_size: 512,
            input_len: 128,
            channels: 1,
            noise_std: 0.5,
            data_seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Splits {
    pub train: Dataset,
    pub val: Dataset,
    pub test: Dataset,
}

/// Class-`k` waveform on channel `c`, centred at `center`.
fn template(k: usize, c: usize, t: usize, len: usize, center: f64) -> f64 {
    let cycles = 3.0 + 2.5 * k as f64;
    let phase = 2.0 * std::f64::consts::PI * ((k + c) as f64 * PHI).fract();
    let width = len as f64 / 8.0;
    let d = t as f64 - center;
    let envelope = (-0.5 * (d / width).powi(2)).exp();
    envelope * (2.0 * std::f64::consts::PI * cycles * t as f64 / len as f64 + phase).cos()
}

impl SyntheticTask {
    pub fn num_classes(&self) -> usize {
        self.prevalences.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.prevalences.is_empty() {
            return Err(Error::Spec("at least one class is required".into()));
        }
        if let Some(p) = self.prevalences.iter().find(|p| !(**p > 0.0 && **p <= 1.0)) {
            return Err(Error::Spec(format!("prevalence {p} is outside (0, 1]")));
        }
        if self.input_len == 0 || self.channels == 0 {
            return Err(Error::Spec("input_len and channels must be at least 1".into()));
        }
        if !(self.noise_std.is_finite() && self.noise_std >= 0.0) {
            return Err(Error::Spec(format!("invalid noise_std {}", self.noise_std)));
        }
        Ok(())
    }

    fn split(&self, n: usize, stream: u64) -> Dataset {
        let k_count = self.num_classes();
        let len = self.input_len;
        let mut rng = Xoshiro256StarStar::for_epoch(self.data_seed, stream);
        let mut inputs = Vec::with_capacity(n);
        let mut targets = Vec::with_capacity(n);
        for _ in 0..n {
            let target: Vec<f32> = self
                .prevalences
                .iter()
                .map(|&p| if rng.bernoulli(p) { 1.0 } else { 0.0 })
                .collect();
            let mut x = vec![0.0f64; self.channels * len];
            for k in 0..k_count {
                // Jitter is drawn for every class so the stream layout does not
                // depend on which labels are active.
                let center = len as f64 * rng.uniform(0.25, 0.75);
                let amp = rng.uniform(0.6, 1.0);
                if target[k] == 0.0 {
                    continue;
                }
                for c in 0..self.channels {
                    for t in 0..len {
                        x[c * len + t] += amp * template(k, c, t, len, center);
                    }
                }
            }
            for v in &mut x {
                *v += self.noise_std * rng.normal();
            }
            inputs.push(x.into_iter().map(|v| v as f32).collect());
            targets.push(target);
        }
        Dataset {
            num_classes: k_count,
            channels: self.channels,
            input_len: len,
            inputs,
            targets,
        }
    }

    pub fn generate(&self) -> Result<Splits> {
        self.validate()?;
        Ok(Splits {
            train: self.split(self.train_size, 0),
            val: self.split(self.val_size, 1),
            test: self.split(self.test_size, 2),
        })
    }
}

/// Convenience wrapper over [`SyntheticTask::generate`].
pub fn synthetic_task(prevalences: &[f64], sizes: (usize, usize, usize), data_seed: u64) -> Result<Splits> {
    SyntheticTask {
        prevalences: prevalences.to_vec(),
        train_size: sizes.0,
        val_size: sizes.1,
        test_size: sizes.2,
        data_seed,
        ..SyntheticTask::default()
    }
    .generate()
}
