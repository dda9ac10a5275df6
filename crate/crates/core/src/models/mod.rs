//! Step models: anything that maps a token context to a hidden state and
//! full-vocabulary logits.
//!
//! Implementations are registered by name in a [`ModelRegistry`] and chosen
//! at runtime (`synthetic:<config.json>` or `trace:<dir>`).

pub mod synthetic;
pub mod trace;

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::sampling::EmbeddingNorms;
use crate::vocab::{LanguageFamily, TokenEntry, TokenId};
use crate::{Error, Result};

pub use synthetic::{SynthConfig, SyntheticModel};
pub use trace::{read_trace, record_trace, write_trace, RecordOptions, Trace, TraceMeta, TracePlayer, TraceStep};

/// What a model produces for one decoding step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutput {
    /// The vector the output projection is applied to.
    pub h: Vec<f64>,
    pub logits: Vec<f64>,
}

/// Ground truth a synthetic model knows about a step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepTruth {
    /// Family the sequence was built to stay in.
    pub sequence_intent: LanguageFamily,
    /// Family the model means to emit at this step.
    pub family: LanguageFamily,
    /// A planted, legitimate switch away from the sequence intent.
    pub switch: bool,
}

pub trait StepModel: Send + Sync {
    fn name(&self) -> &str;

    fn vocab(&self) -> &[TokenEntry];

    fn norms(&self) -> &EmbeddingNorms;

    fn d_in(&self) -> usize;

    fn step(&self, context: &[TokenId]) -> Result<StepOutput>;

    fn vocab_size(&self) -> usize {
        self.vocab().len()
    }

    fn truth(&self, _context: &[TokenId]) -> Option<StepTruth> {
        None
    }

    fn as_synthetic(&self) -> Option<&SyntheticModel> {
        None
    }

    fn as_trace(&self) -> Option<&TracePlayer> {
        None
    }
}

/// Intent of a seeded synthetic sequence. Errors for other models.
pub fn intent_of(model: &dyn StepModel, sequence: u64) -> Result<LanguageFamily> {
    model
        .as_synthetic()
        .map(|m| m.intent_of(sequence))
        .ok_or_else(|| Error::Model(format!("model `{}` has no sequence intents", model.name())))
}

/// Builds a model from a path.
pub trait ModelFactory: Send + Sync {
    fn load(&self, path: &Path) -> Result<Box<dyn StepModel>>;

    /// Whether `path` looks like this factory's input.
    fn recognizes(&self, path: &Path) -> bool;
}

struct SyntheticFactory;

impl ModelFactory for SyntheticFactory {
    fn load(&self, path: &Path) -> Result<Box<dyn StepModel>> {
        let file = if path.is_dir() {
            path.join("config.json")
        } else {
            path.to_path_buf()
        };
        let config: SynthConfig = crate::io::read_json(&file)?;
        Ok(Box::new(SyntheticModel::new(config)?))
    }

    fn recognizes(&self, path: &Path) -> bool {
        path.join("config.json").is_file()
            || (path.is_file() && path.extension().is_some_and(|e| e == "json"))
    }
}

struct TraceFactory;

impl ModelFactory for TraceFactory {
    fn load(&self, path: &Path) -> Result<Box<dyn StepModel>> {
        Ok(Box::new(TracePlayer::new(read_trace(path)?)))
    }

    fn recognizes(&self, path: &Path) -> bool {
        path.join("meta.json").is_file()
    }
}

pub struct ModelRegistry {
    factories: BTreeMap<String, Box<dyn ModelFactory>>,
}

impl ModelRegistry {
    pub fn empty() -> Self {
        Self {
            factories: BTreeMap::new(),
        }
    }

    pub fn register(&mut self, name: &str, factory: Box<dyn ModelFactory>) {
        self.factories.insert(name.to_string(), factory);
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.factories.keys().map(String::as_str)
    }

    /// Loads `kind:path`, or a bare path whose kind is recognized from its
    /// contents.
    pub fn load(&self, spec: &str) -> Result<Box<dyn StepModel>> {
        if let Some((kind, path)) = spec.split_once(':') {
            if let Some(f) = self.factories.get(kind) {
                return f.load(Path::new(path));
            }
        }
        let path = Path::new(spec);
        let factory = self
            .factories
            .values()
            .find(|f| f.recognizes(path))
            .ok_or_else(|| {
                Error::config(format!(
                    "cannot tell which model `{spec}` is; use one of {}",
                    self.names().map(|n| format!("`{n}:<path>`")).collect::<Vec<_>>().join(", ")
                ))
            })?;
        factory.load(path)
    }
}

impl Default for ModelRegistry {
    fn default() -> Self {
        let mut r = Self::empty();
        r.register("synthetic", Box::new(SyntheticFactory));
        r.register("trace", Box::new(TraceFactory));
        r
    }
}
