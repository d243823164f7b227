//! Multi-seed variance experiments comparing initialization arms.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::ordering::StrategyKind;
use crate::parallel;

use super::data::Splits;
use super::harness::{train_with_threads, InitChoice, RunResult, RunSpec};
use super::metrics::{mean, sample_std, welch_t_test, WelchTest};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Arm {
    /// Structured init; seed `s` drives only the seeded batch shuffle.
    StructuredSeeded,
    /// Kaiming init from seed `s`, batches shuffled with the same seed.
    Kaiming,
    /// Structured init with golden ordering; the seed is unused.
    StructuredGolden,
}

impl Arm {
    pub const ALL: [Arm; 3] = [Arm::StructuredSeeded, Arm::Kaiming, Arm::StructuredGolden];

    /// The run this arm performs for `seed`, starting from `base`.
    pub fn configure(self, base: &RunSpec, seed: u64) -> RunSpec {
        let mut spec = base.clone();
        let plan = match &base.train.init {
            InitChoice::Structured(p) => p.clone(),
            InitChoice::Kaiming(_) => "mixed".to_string(),
        };
        match self {
            Arm::StructuredSeeded => {
                spec.train.init = InitChoice::Structured(plan);
                spec.train.ordering = StrategyKind::Seeded;
                spec.train.ordering_seed = seed;
            }
            Arm::Kaiming => {
                spec.train.init = InitChoice::Kaiming(seed);
                spec.train.ordering = StrategyKind::Seeded;
                spec.train.ordering_seed = seed;
            }
            Arm::StructuredGolden => {
                spec.train.init = InitChoice::Structured(plan);
                spec.train.ordering = StrategyKind::Golden;
            }
        }
        spec
    }
}

impl fmt::Display for Arm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Arm::StructuredSeeded => "structured-seeded",
            Arm::Kaiming => "kaiming",
            Arm::StructuredGolden => "structured-golden",
        })
    }
}

impl FromStr for Arm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Arm::ALL
            .into_iter()
            .find(|a| a.to_string() == s)
            .ok_or_else(|| Error::Spec(format!("unknown arm '{s}'")))
    }
}

#[derive(Debug, Clone)]
pub struct SeedOutcome {
    pub seed: u64,
    /// Test macro AUC and digest, or the failure message.
    pub result: std::result::Result<(f64, f64, String, Vec<Option<f64>>), String>,
}

#[derive(Debug, Clone)]
pub struct ArmSummary {
    pub arm: Arm,
    pub runs: Vec<SeedOutcome>,
    pub values: Vec<f64>,
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
    /// `(min, max)` per class over runs where the class AUC was defined.
    pub per_class_range: Vec<Option<(f64, f64)>>,
}

#[derive(Debug, Clone)]
pub struct Comparison {
    pub a: Arm,
    pub b: Arm,
    pub welch: WelchTest,
}

#[derive(Debug, Clone)]
pub struct VarianceReport {
    pub arms: Vec<ArmSummary>,
    pub comparisons: Vec<Comparison>,
}

impl VarianceReport {
    pub fn arm(&self, arm: Arm) -> Option<&ArmSummary> {
        self.arms.iter().find(|s| s.arm == arm)
    }

    /// One row per run.
    pub fn runs_csv(&self) -> String {
        let mut s = String::from("arm,seed,status,test_macro_auc,best_val_auc,digest\n");
        for a in &self.arms {
            for r in &a.runs {
                match &r.result {
                    Ok((test, val, digest, _)) => {
                        s.push_str(&format!("{},{},ok,{test:.9},{val:.9},{digest}\n", a.arm, r.seed));
                    }
                    Err(msg) => {
                        let msg = msg.replace(',', ";");
                        s.push_str(&format!("{},{},failed,,,{msg}\n", a.arm, r.seed));
                    }
                }
            }
        }
        s
    }

    /// One row per arm, then one per pairwise comparison.
    pub fn summary_csv(&self) -> String {
        let mut s = String::from("arm,n,mean,std,min,max\n");
        for a in &self.arms {
            s.push_str(&format!(
                "{},{},{:.9},{:.9},{:.9},{:.9}\n",
                a.arm,
                a.values.len(),
                a.mean,
                a.std,
                a.min,
                a.max
            ));
        }
        s.push_str("arm_a,arm_b,welch_t,dof,p\n");
        for c in &self.comparisons {
            s.push_str(&format!("{},{},{:.9},{:.9},{:.9}\n", c.a, c.b, c.welch.t, c.welch.dof, c.welch.p));
        }
        s
    }
}

impl fmt::Display for VarianceReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for a in &self.arms {
            writeln!(
                f,
                "{:<18} n={:<3} mean={:.4} std={:.4} min={:.4} max={:.4}",
                a.arm.to_string(),
                a.values.len(),
                a.mean,
                a.std,
                a.min,
                a.max
            )?;
            for r in &a.runs {
                if let Err(msg) = &r.result {
                    writeln!(f, "  seed {} failed: {msg}", r.seed)?;
                }
            }
        }
        for c in &self.comparisons {
            writeln!(f, "welch {} vs {}: t={:.4} dof={:.2} p={:.4}", c.a, c.b, c.welch.t, c.welch.dof, c.welch.p)?;
        }
        Ok(())
    }
}

fn summarize(arm: Arm, runs: Vec<SeedOutcome>, num_classes: usize) -> Result<ArmSummary> {
    let ok: Vec<&(f64, f64, String, Vec<Option<f64>>)> = runs.iter().filter_map(|r| r.result.as_ref().ok()).collect();
    let values: Vec<f64> = ok.iter().map(|r| r.0).collect();
    let std = sample_std(&values).map_err(|_| {
        Error::Spec(format!(
            "arm {arm} has {} successful runs; at least 2 are needed",
            values.len()
        ))
    })?;
    let per_class_range = (0..num_classes)
        .map(|k| {
            ok.iter()
                .filter_map(|r| r.3.get(k).copied().flatten())
                .fold(None, |acc: Option<(f64, f64)>, v| {
                    Some(acc.map_or((v, v), |(lo, hi)| (lo.min(v), hi.max(v))))
                })
        })
        .collect();
    Ok(ArmSummary {
        arm,
        mean: mean(&values),
        std,
        min: values.iter().copied().fold(f64::INFINITY, f64::min),
        max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        values,
        runs,
        per_class_range,
    })
}

/// Trains every `(arm, seed)` pair on the same data. Runs execute
/// concurrently, one thread each; a diverged run is recorded, not dropped
/// silently, and excluded from the statistics.
pub fn multi_seed_experiment(base: &RunSpec, data: &Splits, seeds: &[u64], arms: &[Arm]) -> Result<VarianceReport> {
    if seeds.len() < 2 {
        return Err(Error::Spec("at least 2 seeds are required".into()));
    }
    if arms.is_empty() {
        return Err(Error::Spec("no arms selected".into()));
    }
    base.validate()?;
    let jobs: Vec<(Arm, u64)> = arms.iter().flat_map(|&a| seeds.iter().map(move |&s| (a, s))).collect();
    let outcomes: Vec<Result<SeedOutcome>> = parallel::install(|| {
        jobs.par_iter()
            .map(|&(arm, seed)| {
                let spec = arm.configure(base, seed);
                let result = match train_with_threads(&spec, data, 1) {
                    Ok(r) => Ok(outcome(&r)),
                    Err(e @ Error::Divergence { .. }) => Err(e.to_string()),
                    Err(e) => return Err(e),
                };
                Ok(SeedOutcome { seed, result })
            })
            .collect()
    });
    let mut outcomes = outcomes.into_iter().collect::<Result<Vec<_>>>()?.into_iter();
    let mut summaries = Vec::with_capacity(arms.len());
    for &arm in arms {
        let runs: Vec<SeedOutcome> = outcomes.by_ref().take(seeds.len()).collect();
        summaries.push(summarize(arm, runs, base.model.num_classes)?);
    }
    let mut comparisons = Vec::new();
    for i in 0..summaries.len() {
        for j in i + 1..summaries.len() {
            comparisons.push(Comparison {
                a: summaries[i].arm,
                b: summaries[j].arm,
                welch: welch_t_test(&summaries[i].values, &summaries[j].values)?,
            });
        }
    }
    Ok(VarianceReport {
        arms: summaries,
        comparisons,
    })
}

fn outcome(r: &RunResult) -> (f64, f64, String, Vec<Option<f64>>) {
    (r.test_macro_auc, r.best_val_auc, r.digest.hex.clone(), r.per_class_auc.clone())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn arm_configuration() {
        let base = RunSpec::default();
        let s = Arm::StructuredSeeded.configure(&base, 7);
        assert_eq!(s.train.init, InitChoice::Structured("mixed".into()));
        assert_eq!((s.train.ordering, s.train.ordering_seed), (StrategyKind::Seeded, 7));
        let k = Arm::Kaiming.configure(&base, 7);
        assert_eq!(k.train.init, InitChoice::Kaiming(7));
        let g = Arm::StructuredGolden.configure(&base, 7);
        assert_eq!(g, Arm::StructuredGolden.configure(&base, 8));
        assert_eq!("kaiming".parse::<Arm>().unwrap(), Arm::Kaiming);
    }

    #[test]
    fn golden_arm_has_zero_spread() {
        let mut base = RunSpec::default();
        base.task.train_size = 32;
        base.task.val_size = 32;
        base.task.test_size = 32;
        base.task.prevalences = vec![0.5, 0.4];
        base.model = crate::train::ToyModelConfig::with_classes(2);
        base.model.stem_width = 2;
        base.model.residual_blocks = 1;
        base.train.epochs = 1;
        let data = base.task.generate().unwrap();
        let r = multi_seed_experiment(&base, &data, &[1, 2], &[Arm::StructuredGolden, Arm::StructuredSeeded]).unwrap();
        let g = r.arm(Arm::StructuredGolden).unwrap();
        assert_eq!(g.std, 0.0);
        assert_eq!(r.comparisons.len(), 1);
        assert!(r.summary_csv().starts_with("arm,n,mean,std,min,max\nstructured-golden,2,"));
        assert!(multi_seed_experiment(&base, &data, &[1], &[Arm::Kaiming]).is_err());
    }
}
