//! Mini-batch gradient descent on pseudo-targets from a recorded trace.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{allowed_set, bce_loss, gradient, pseudo_target, GateParams, PseudoTarget, TargetRegistry, TargetSource};
use crate::models::Trace;
use crate::vocab::{LanguageFamily, VocabClassification};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub k: usize,
    pub p: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub d_hidden: usize,
    /// Share of examples held out for model selection.
    pub validation_fraction: f64,
    pub threshold: f64,
    /// Name of the [`TargetSource`]: `adjusted` or `unadjusted`.
    pub target: String,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            k: 20,
            p: 0.95,
            learning_rate: 1e-2,
            batch_size: 64,
            epochs: 20,
            seed: 0,
            d_hidden: 256,
            validation_fraction: 0.1,
            threshold: 0.5,
            target: "adjusted".into(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || !(self.p > 0.0 && self.p <= 1.0) {
            return Err(Error::config("pseudo-target k must be positive and p in (0, 1]"));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config("learning rate must be non-negative"));
        }
        if self.batch_size == 0 || self.d_hidden == 0 {
            return Err(Error::config("batch size and d_hidden must be positive"));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(Error::config("validation fraction must be in [0, 1)"));
        }
        Ok(())
    }
}

/// A hidden state with its pseudo-target.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub h: Vec<f64>,
    pub y: PseudoTarget,
}

/// Pseudo-targets for every step whose sparse list is long enough. Also
/// returns the number of truncated steps that were skipped.
pub fn build_examples(
    trace: &Trace,
    classes: &VocabClassification,
    source: &dyn TargetSource,
    k: usize,
    p: f64,
) -> (Vec<Example>, usize) {
    let mut out = Vec::with_capacity(trace.steps.len());
    let mut truncated = 0;
    for s in &trace.steps {
        match pseudo_target(source.distribution(s), classes, k, p) {
            Ok(y) => out.push(Example { h: s.h_f64(), y }),
            Err(_) => truncated += 1,
        }
    }
    (out, truncated)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PrecisionRecall {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl PrecisionRecall {
    pub fn precision(&self) -> Option<f64> {
        let d = self.tp + self.fp;
        (d > 0).then(|| self.tp as f64 / d as f64)
    }

    pub fn recall(&self) -> Option<f64> {
        let d = self.tp + self.fn_;
        (d > 0).then(|| self.tp as f64 / d as f64)
    }
}

/// Mean loss and per-family confusion counts of `params` on `examples`.
pub fn evaluate(
    params: &GateParams,
    examples: &[Example],
    threshold: f64,
) -> Result<(f64, BTreeMap<LanguageFamily, PrecisionRecall>)> {
    let mut metrics: BTreeMap<LanguageFamily, PrecisionRecall> =
        LanguageFamily::ALL.iter().map(|&f| (f, PrecisionRecall::default())).collect();
    let mut loss = 0.0;
    for ex in examples {
        let z = params.forward(&ex.h)?;
        loss += bce_loss(&z, &ex.y);
        let pred = allowed_set(&z, threshold);
        for f in LanguageFamily::ALL {
            let m = metrics.get_mut(&f).expect("all families present");
            match (pred.contains(f), ex.y.get(f)) {
                (true, true) => m.tp += 1,
                (true, false) => m.fp += 1,
                (false, true) => m.fn_ += 1,
                (false, false) => {}
            }
        }
    }
    let n = examples.len().max(1) as f64;
    Ok((loss / n, metrics))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    /// 0 is the initialization.
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
    /// On the validation split, or the training split when there is none.
    pub metrics: BTreeMap<LanguageFamily, PrecisionRecall>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    /// Best-validation parameters at file precision.
    pub params: GateParams,
    pub history: Vec<EpochStats>,
    pub best_epoch: usize,
    pub examples: usize,
    pub truncated: usize,
}

pub fn train(trace: &Trace, classes: &VocabClassification, config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    let registry = TargetRegistry::default();
    let source = registry.get(&config.target).ok_or_else(|| {
        Error::config(format!(
            "unknown target source `{}`; expected one of {}",
            config.target,
            registry.names().collect::<Vec<_>>().join(", ")
        ))
    })?;
    let (examples, truncated) = build_examples(trace, classes, source, config.k, config.p);
    if examples.is_empty() {
        return Err(Error::NoTrainingData { truncated });
    }
    train_examples(examples, truncated, config)
}

pub fn train_examples(mut examples: Vec<Example>, truncated: usize, config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    let d_in = examples.first().ok_or(Error::NoTrainingData { truncated })?.h.len();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let n = examples.len();
    examples.shuffle(&mut rng);
    let n_val = (n as f64 * config.validation_fraction).floor() as usize;
    let val = examples.split_off(n - n_val);
    let train = examples;
    if train.len() < config.batch_size {
        return Err(Error::config(format!(
            "{} training examples, fewer than the batch size {}",
            train.len(),
            config.batch_size
        )));
    }

    let mut params = GateParams::init(d_in, config.d_hidden, &mut rng);
    let stats = |params: &GateParams, epoch: usize| -> Result<EpochStats> {
        let (train_loss, train_metrics) = evaluate(params, &train, config.threshold)?;
        let (val_loss, metrics) = if val.is_empty() {
            (None, train_metrics)
        } else {
            let (l, m) = evaluate(params, &val, config.threshold)?;
            (Some(l), m)
        };
        Ok(EpochStats {
            epoch,
            train_loss,
            val_loss,
            metrics,
        })
    };
    let selection = |s: &EpochStats| s.val_loss.unwrap_or(s.train_loss);

    let mut history = vec![stats(&params, 0)?];
    let mut best = (selection(&history[0]), 0, params.clone());
    let mut order: Vec<usize> = (0..train.len()).collect();
    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<(&[f64], PseudoTarget)> = chunk.iter().map(|&i| (&train[i].h[..], train[i].y)).collect();
            let g = gradient(&params, &batch)?;
            params.add_scaled(-config.learning_rate, &g);
        }
        let s = stats(&params, epoch)?;
        if selection(&s) < best.0 {
            best = (selection(&s), epoch, params.clone());
        }
        history.push(s);
    }
    Ok(TrainOutcome {
        params: best.2.quantized(),
        history,
        best_epoch: best.1,
        examples: n,
        truncated,
    })
}
