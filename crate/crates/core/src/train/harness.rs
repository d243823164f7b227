//! Deterministic training loop.
//!
//! Per batch, samples run forward in parallel; the loss is computed over the
//! whole batch; per-sample backward passes run in parallel and their
//! gradients are summed sequentially in ascending batch position. Results
//! therefore do not depend on the thread count.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::config::{KvConfig, KvWriter};
use crate::error::{Error, Result};
use crate::init::{init_model, kaiming_init, InitPlan};
use crate::ordering::{
    class_guaranteed_permutation, content_hash_permutation, golden_permutation, seeded_permutation, sobol_permutation,
    PermutationSchedule, SampleKeyTable, StrategyKind,
};
use crate::params::ParameterSet;
use crate::parallel;
use crate::verify::{self, CanonicalDigest};

use super::data::{Dataset, Splits, SyntheticTask};
use super::loss::{buffer_l2, sqrt_class_weights, weighted_bce, DEFAULT_BUFFER_L2, DEFAULT_LOGIT_CLAMP};
use super::metrics::macro_auc;
use super::model::{ToyModel, ToyModelConfig};
use super::optim::{cosine_lr, Adam};

/// Loss magnitude treated as divergence even when finite.
pub const DIVERGENCE_LOSS: f32 = 1e6;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum InitChoice {
    /// Structured plan by name: `mixed` or a single basis.
    Structured(String),
    Kaiming(u64),
}

impl fmt::Display for InitChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InitChoice::Structured(plan) => write!(f, "structured:{plan}"),
            InitChoice::Kaiming(seed) => write!(f, "kaiming:{seed}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClassWeighting {
    None,
    Sqrt,
}

impl fmt::Display for ClassWeighting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ClassWeighting::None => "none",
            ClassWeighting::Sqrt => "sqrt",
        })
    }
}

impl FromStr for ClassWeighting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(ClassWeighting::None),
            "sqrt" => Ok(ClassWeighting::Sqrt),
            other => Err(Error::Spec(format!("unknown class weighting '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f32,
    pub ordering: StrategyKind,
    /// Only read by the seeded strategy.
    pub ordering_seed: u64,
    /// Only read by the class-guaranteed strategy.
    pub min_per_class: usize,
    pub init: InitChoice,
    pub class_weighting: ClassWeighting,
    pub eval_every: usize,
    pub buffer_l2: f32,
    pub logit_clamp: f32,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 32,
            lr: 1e-3,
            ordering: StrategyKind::Golden,
            ordering_seed: 0,
            min_per_class: 1,
            init: InitChoice::Structured("mixed".into()),
            class_weighting: ClassWeighting::Sqrt,
            eval_every: 5,
            buffer_l2: DEFAULT_BUFFER_L2,
            logit_clamp: DEFAULT_LOGIT_CLAMP,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Spec("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Spec("batch_size must be at least 1".into()));
        }
        if self.eval_every == 0 {
            return Err(Error::Spec("eval_every must be at least 1".into()));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::Spec(format!("invalid learning rate {}", self.lr)));
        }
        if !(self.logit_clamp.is_finite() && self.logit_clamp > 0.0) {
            return Err(Error::Spec(format!("invalid logit clamp {}", self.logit_clamp)));
        }
        if !(self.buffer_l2.is_finite() && self.buffer_l2 >= 0.0) {
            return Err(Error::Spec(format!("invalid buffer_l2 {}", self.buffer_l2)));
        }
        Ok(())
    }
}

/// Everything needed to reproduce a run: model, optimization and data.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSpec {
    pub model: ToyModelConfig,
    pub train: TrainConfig,
    pub task: SyntheticTask,
}

impl Default for RunSpec {
    fn default() -> Self {
        let task = SyntheticTask::default();
        Self {
            model: ToyModelConfig::with_classes(task.num_classes()),
            train: TrainConfig::default(),
            task,
        }
    }
}

impl RunSpec {
    /// Reads a run description. Keys (all optional):
    ///
    /// ```text
    /// model.stem_width model.residual_blocks model.feature_dim model.fixup_alpha
    /// data.prevalences data.train_size data.val_size data.test_size
    /// data.input_len data.channels data.noise_std data.seed
    /// train.epochs train.batch_size train.lr train.eval_every
    /// train.buffer_l2 train.logit_clamp train.class_weighting
    /// init (mixed|dct|hadamard|hartley|dst|kaiming) init.seed
    /// ordering (golden|seeded|sobol|class-guaranteed|content-hash)
    /// ordering.seed ordering.min_per_class
    /// ```
    pub fn from_kv(mut kv: KvConfig) -> Result<Self> {
        let d = RunSpec::default();
        let mut task = d.task.clone();
        if let Some(p) = kv.take_list("data.prevalences")? {
            task.prevalences = p;
        }
        task.train_size = kv.take("data.train_size")?.unwrap_or(task.train_size);
        task.val_size = kv.take("data.val_size")?.unwrap_or(task.val_size);
        task.test_size = kv.take("data.test_size")?.unwrap_or(task.test_size);
        task.input_len = kv.take("data.input_len")?.unwrap_or(task.input_len);
        task.channels = kv.take("data.channels")?.unwrap_or(task.channels);
        task.noise_std = kv.take("data.noise_std")?.unwrap_or(task.noise_std);
        task.data_seed = kv.take("data.seed")?.unwrap_or(task.data_seed);

        let k = task.num_classes();
        let mut model = ToyModelConfig::with_classes(k);
        model.input_len = task.input_len;
        model.channels = task.channels;
        model.stem_width = kv.take("model.stem_width")?.unwrap_or(model.stem_width);
        model.residual_blocks = kv.take("model.residual_blocks")?.unwrap_or(model.residual_blocks);
        model.feature_dim = kv.take("model.feature_dim")?.unwrap_or(model.feature_dim);
        model.fixup_alpha = kv.take("model.fixup_alpha")?.unwrap_or(model.fixup_alpha);

        let mut train = d.train;
        train.epochs = kv.take("train.epochs")?.unwrap_or(train.epochs);
        train.batch_size = kv.take("train.batch_size")?.unwrap_or(train.batch_size);
        train.lr = kv.take("train.lr")?.unwrap_or(train.lr);
        train.eval_every = kv.take("train.eval_every")?.unwrap_or(train.eval_every);
        train.buffer_l2 = kv.take("train.buffer_l2")?.unwrap_or(train.buffer_l2);
        train.logit_clamp = kv.take("train.logit_clamp")?.unwrap_or(train.logit_clamp);
        train.class_weighting = kv.take("train.class_weighting")?.unwrap_or(train.class_weighting);
        let init: String = kv.take("init")?.unwrap_or_else(|| "mixed".into());
        let init_seed: Option<u64> = kv.take("init.seed")?;
        train.init = match init.as_str() {
            "kaiming" => InitChoice::Kaiming(init_seed.unwrap_or(0)),
            plan => {
                if init_seed.is_some() {
                    return Err(Error::Spec("init.seed only applies to kaiming init".into()));
                }
                InitChoice::Structured(plan.to_string())
            }
        };
        train.ordering = kv.take("ordering")?.unwrap_or(train.ordering);
        train.ordering_seed = kv.take("ordering.seed")?.unwrap_or(train.ordering_seed);
        train.min_per_class = kv.take("ordering.min_per_class")?.unwrap_or(train.min_per_class);
        kv.finish()?;

        let spec = Self { model, train, task };
        spec.validate()?;
        Ok(spec)
    }

    pub fn parse(text: &str) -> Result<Self> {
        Self::from_kv(KvConfig::parse(text)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.train.validate()?;
        self.task.validate()?;
        if self.model.num_classes != self.task.num_classes()
            || self.model.input_len != self.task.input_len
            || self.model.channels != self.task.channels
        {
            return Err(Error::Spec("model and data disagree on classes or input shape".into()));
        }
        if let InitChoice::Structured(plan) = &self.train.init {
            InitPlan::from_name(plan, 1)?;
        }
        Ok(())
    }

    /// Canonical text form, parseable by [`RunSpec::parse`].
    pub fn to_text(&self) -> String {
        let mut w = KvWriter::new();
        w.put_list("data.prevalences", &self.task.prevalences)
            .put("data.train_size", self.task.train_size)
            .put("data.val_size", self.task.val_size)
            .put("data.test_size", self.task.test_size)
            .put("data.input_len", self.task.input_len)
            .put("data.channels", self.task.channels)
            .put("data.noise_std", self.task.noise_std)
            .put("data.seed", self.task.data_seed)
            .put("model.stem_width", self.model.stem_width)
            .put("model.residual_blocks", self.model.residual_blocks)
            .put("model.feature_dim", self.model.feature_dim)
            .put("model.fixup_alpha", self.model.fixup_alpha)
            .put("train.epochs", self.train.epochs)
            .put("train.batch_size", self.train.batch_size)
            .put("train.lr", self.train.lr)
            .put("train.eval_every", self.train.eval_every)
            .put("train.buffer_l2", self.train.buffer_l2)
            .put("train.logit_clamp", self.train.logit_clamp)
            .put("train.class_weighting", self.train.class_weighting);
        match &self.train.init {
            InitChoice::Structured(plan) => w.put("init", plan),
            InitChoice::Kaiming(seed) => w.put("init", "kaiming").put("init.seed", seed),
        };
        w.put("ordering", self.train.ordering)
            .put("ordering.seed", self.train.ordering_seed)
            .put("ordering.min_per_class", self.train.min_per_class);
        w.finish()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalRecord {
    /// 1-based epoch after which the evaluation ran.
    pub epoch: usize,
    pub train_loss: f64,
    pub val_auc: f64,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    /// Parameters of the best-validation checkpoint.
    pub final_params: ParameterSet,
    pub digest: CanonicalDigest,
    pub best_epoch: usize,
    pub best_val_auc: f64,
    pub test_macro_auc: f64,
    pub per_class_auc: Vec<Option<f64>>,
    pub history: Vec<EvalRecord>,
    /// Digest of the parameters after the last epoch.
    pub last_digest: CanonicalDigest,
}

impl RunResult {
    pub fn history_csv(&self) -> String {
        let mut s = String::from("epoch,train_loss,val_auc\n");
        for r in &self.history {
            s.push_str(&format!("{},{:.9},{:.9}\n", r.epoch, r.train_loss, r.val_auc));
        }
        s
    }

    pub fn to_text(&self) -> String {
        let per_class: Vec<String> = self
            .per_class_auc
            .iter()
            .map(|a| a.map_or_else(|| "nan".to_string(), |v| format!("{v:.9}")))
            .collect();
        KvWriter::new()
            .put("digest", &self.digest)
            .put("last_digest", &self.last_digest)
            .put("best_epoch", self.best_epoch)
            .put("best_val_auc", format!("{:.9}", self.best_val_auc))
            .put("test_macro_auc", format!("{:.9}", self.test_macro_auc))
            .put_list("per_class_auc", &per_class)
            .finish()
    }
}

/// Initial parameters for `init`.
pub fn initial_params(model: &ToyModelConfig, init: &InitChoice) -> Result<ParameterSet> {
    let spec = model.model_spec()?;
    match init {
        InitChoice::Structured(name) => {
            let plan = InitPlan::from_name(name, spec.num_stages())?
                .with_fixup_alpha(model.fixup_alpha)
                .with_head(model.init_plan().head.expect("toy plan has a head"));
            init_model(&spec, &plan)
        }
        InitChoice::Kaiming(seed) => kaiming_init(&spec, *seed),
    }
}

/// Sample order for one epoch.
fn epoch_order(cfg: &TrainConfig, table: &SampleKeyTable, data: &Dataset, epoch: u64) -> Result<PermutationSchedule> {
    match cfg.ordering {
        StrategyKind::Golden => golden_permutation(table, epoch),
        StrategyKind::Seeded => seeded_permutation(data.len(), cfg.ordering_seed, epoch),
        StrategyKind::Sobol => sobol_permutation(data.len(), epoch),
        StrategyKind::ClassGuaranteed => class_guaranteed_permutation(table, epoch, cfg.batch_size, cfg.min_per_class),
        StrategyKind::ContentHash => {
            let raw: Vec<Vec<u8>> = data
                .inputs
                .iter()
                .map(|x| x.iter().flat_map(|v| v.to_le_bytes()).collect())
                .collect();
            content_hash_permutation(&raw, epoch)
        }
    }
}

/// Model scores for every sample of `data`, row-major `N x K`.
pub fn predict(model: &ToyModel, params: &ParameterSet, data: &Dataset) -> Result<Vec<f32>> {
    let rows: Vec<Result<Vec<f32>>> = data
        .inputs
        .par_iter()
        .map(|x| model.forward(params, x).map(|(logits, _)| logits))
        .collect();
    let mut out = Vec::with_capacity(data.len() * model.config.num_classes);
    for r in rows {
        out.extend(r?);
    }
    Ok(out)
}

pub fn evaluate(model: &ToyModel, params: &ParameterSet, data: &Dataset) -> Result<(f64, Vec<Option<f64>>)> {
    let scores = predict(model, params, data)?;
    let targets = data.gather_targets(&(0..data.len()).collect::<Vec<_>>());
    macro_auc(&scores, &targets, data.num_classes)
}

fn add_into(acc: &mut ParameterSet, g: &ParameterSet) {
    for (name, t) in acc.iter_mut() {
        for (a, b) in t.data_mut().iter_mut().zip(g.expect(name).data()) {
            *a += b;
        }
    }
}

/// Trains with the thread count from the environment.
pub fn train(spec: &RunSpec, data: &Splits) -> Result<RunResult> {
    train_with_threads(spec, data, parallel::configured_threads())
}

pub fn train_with_threads(spec: &RunSpec, data: &Splits, threads: usize) -> Result<RunResult> {
    spec.validate()?;
    parallel::pool(threads).install(|| run(spec, data))
}

fn run(spec: &RunSpec, data: &Splits) -> Result<RunResult> {
    let cfg = &spec.train;
    let model = ToyModel::new(spec.model)?;
    let k = spec.model.num_classes;
    let d = spec.model.feature_dim;
    let mut params = initial_params(&spec.model, &cfg.init)?;
    model.check_params(&params)?;
    let train_set = &data.train;
    if train_set.is_empty() {
        return Err(Error::Spec("training split is empty".into()));
    }

    let weights = match cfg.class_weighting {
        ClassWeighting::None => vec![1.0; k],
        ClassWeighting::Sqrt => {
            let (w, missing) = sqrt_class_weights(&train_set.positive_counts(), train_set.len())?;
            for c in missing {
                log::warn!("class {c} has no training positives; using weight 1");
            }
            w
        }
    };
    let table = SampleKeyTable::from_samples(&train_set.inputs).with_labels(train_set.label_sets())?;
    let mut adam = Adam::new(&params);
    let mut history = Vec::new();
    let mut best: Option<(f64, usize, ParameterSet)> = None;

    for epoch in 0..cfg.epochs {
        let order = epoch_order(cfg, &table, train_set, epoch as u64)?;
        let lr = cosine_lr(cfg.lr, epoch, cfg.epochs);
        let mut loss_sum = 0.0f64;
        let mut batches = 0usize;
        for (b, batch) in order.perm.chunks(cfg.batch_size).enumerate() {
            let fwd: Vec<Result<_>> = batch
                .par_iter()
                .map(|&i| model.forward(&params, &train_set.inputs[i]))
                .collect();
            let fwd = fwd.into_iter().collect::<Result<Vec<_>>>()?;
            let logits: Vec<f32> = fwd.iter().flat_map(|(l, _)| l.iter().copied()).collect();
            let targets = train_set.gather_targets(batch);
            let (bce, g_logits) = weighted_bce(&logits, &targets, &weights, cfg.logit_clamp)?;
            let (reg, g_head) = buffer_l2(params.expect("head.weight").data(), k, d, cfg.buffer_l2);
            let loss = bce + reg;
            if !loss.is_finite() || loss > DIVERGENCE_LOSS {
                return Err(Error::Divergence {
                    epoch: epoch + 1,
                    loss,
                    context: format!(
                        "batch {b}, init {}, ordering {} (seed {}), data seed {}",
                        cfg.init, cfg.ordering, cfg.ordering_seed, spec.task.data_seed
                    ),
                });
            }
            let per_sample: Vec<Result<ParameterSet>> = fwd
                .par_iter()
                .enumerate()
                .map(|(j, (_, trace))| model.backward(&params, trace, &g_logits[j * k..(j + 1) * k]))
                .collect();
            let mut grads = params.zeros_like();
            for g in per_sample {
                add_into(&mut grads, &g?);
            }
            for (a, r) in grads.get_mut("head.weight").expect("head").data_mut().iter_mut().zip(&g_head) {
                *a += r;
            }
            adam.update(&mut params, &grads, lr)?;
            loss_sum += loss as f64;
            batches += 1;
        }

        let done = epoch + 1;
        if done % cfg.eval_every == 0 || done == cfg.epochs {
            let (val_auc, _) = evaluate(&model, &params, &data.val)?;
            history.push(EvalRecord {
                epoch: done,
                train_loss: loss_sum / batches as f64,
                val_auc,
            });
            if best.as_ref().is_none_or(|(v, _, _)| val_auc > *v) {
                best = Some((val_auc, done, params.clone()));
            }
        }
    }

    let (best_val_auc, best_epoch, best_params) = best.expect("final epoch is always evaluated");
    let (test_macro_auc, per_class_auc) = evaluate(&model, &best_params, &data.test)?;
    Ok(RunResult {
        digest: verify::digest(&best_params)?,
        last_digest: verify::digest(&params)?,
        final_params: best_params,
        best_epoch,
        best_val_auc,
        test_macro_auc,
        per_class_auc,
        history,
    })
}
