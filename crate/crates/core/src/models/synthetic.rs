//! A deterministic multilingual stand-in model with controllable output
//! embedding norm skew.
//!
//! Geometry: the first four coordinates of the model space are one axis per
//! family; the remaining coordinates carry token-specific directions. Every
//! token embedding is `norm_i * (ALPHA * family_axis + BETA * r_i)` where CJ
//! norms are multiplied by `norm_skew`. The hidden state points mostly at the
//! family the model wants next, plus a small random pull (`noise_scale`)
//! toward a competing high-resource family and a token-level jitter.
//!
//! Raw logits `e_i . h` therefore favour high-norm CJ tokens whenever the
//! competing pull is moderate, while the norm-adjusted logits `|h| cos` keep
//! ranking the intended family first.
//!
//! Everything is a counter-based hash of (seed, coordinates), so outputs are
//! pure functions of the config and the context.

use serde::{Deserialize, Serialize};

use super::{StepModel, StepOutput, StepTruth};
use crate::hash;
use crate::sampling::{embedding_norms, EmbeddingNorms};
use crate::vocab::{LanguageFamily, TokenEntry, TokenId};
use crate::{Error, Result};

use LanguageFamily::{Cj, Latin, LowRes, Symbols};

const ALPHA: f64 = 0.8;
/// Weight of the token-specific jitter in the hidden state.
const JITTER: f64 = 1.0;
/// Relative spread of base norms within a family.
const NORM_SPREAD: f64 = 0.1;
/// Weight kept on the sequence intent during symbol and switch steps.
const SECONDARY: f64 = 0.3;
const INV_PHI: f64 = 0.618_033_988_749_894_9;

// hash domains
const D_TOKEN: u64 = 1;
const D_NORM: u64 = 2;
const D_INTENT: u64 = 3;
const D_PROMPT: u64 = 4;
const D_SYMBOL: u64 = 5;
const D_SWITCH: u64 = 6;
const D_CONFUSOR: u64 = 7;
const D_EPS: u64 = 8;
const D_JITTER: u64 = 9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    /// Token counts in family order (CJ, Latin, Symbols, LowRes).
    pub tokens_per_family: [usize; 4],
    pub d_model: usize,
    /// Multiplier on CJ embedding norms.
    pub norm_skew: f64,
    /// Norm-adjusted logit advantage of the intended family.
    pub intent_margin: f64,
    /// Scale of the half-normal pull toward a competing family.
    pub noise_scale: f64,
    pub seed: u64,
    /// Sequence intent weights for CJ, Latin and LowRes.
    pub intent_weights: [f64; 3],
    /// Fraction of steps that want punctuation or digits.
    pub symbol_rate: f64,
    /// Fraction of steps with a planted, legitimate family switch.
    pub switch_rate: f64,
    pub prompt_len: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            tokens_per_family: [96, 96, 48, 96],
            d_model: 64,
            norm_skew: 1.5,
            intent_margin: 8.0,
            noise_scale: 0.2,
            seed: 7,
            intent_weights: [0.25, 0.35, 0.4],
            symbol_rate: 0.1,
            switch_rate: 0.0,
            prompt_len: 4,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let total: usize = self.tokens_per_family.iter().sum();
        if total < 8 || self.tokens_per_family.contains(&0) {
            return Err(Error::config("synthetic vocabulary needs every family and at least 8 tokens"));
        }
        if self.d_model < 4 {
            return Err(Error::config("d_model must be at least 4"));
        }
        if !(self.norm_skew > 0.0 && self.intent_margin > 0.0 && self.noise_scale >= 0.0) {
            return Err(Error::config("norm_skew and intent_margin must be positive, noise_scale non-negative"));
        }
        if self.intent_weights.iter().any(|w| *w < 0.0) || self.intent_weights.iter().sum::<f64>() <= 0.0 {
            return Err(Error::config("intent weights must be non-negative with a positive sum"));
        }
        for (name, r) in [("symbol_rate", self.symbol_rate), ("switch_rate", self.switch_rate)] {
            if !(0.0..=1.0).contains(&r) {
                return Err(Error::config(format!("{name} must be in [0, 1]")));
            }
        }
        if self.prompt_len == 0 {
            return Err(Error::config("prompt_len must be positive"));
        }
        Ok(())
    }
}

/// Deterministic byte forms: single CJK ideographs, short ASCII words,
/// punctuation then numbers, and Cyrillic/Hebrew/Greek/Hangul letters.
fn token_bytes(family: LanguageFamily, i: usize) -> Vec<u8> {
    let ch = |cp: u32| char::from_u32(cp).expect("valid codepoint").to_string().into_bytes();
    match family {
        Cj => ch(0x4E00 + ((i * 37) % 0x5200) as u32),
        Latin => {
            let letter = |n: usize| (b'a' + (n % 26) as u8) as char;
            format!(" {}{}{}", letter(i), letter(i / 26), letter(i / 676)).into_bytes()
        }
        Symbols => {
            const PUNCT: &[u8] = b"!\"#$%&'()*+,-./:;<=>?@[\\]^_`{|}~";
            match PUNCT.get(i) {
                Some(&b) => vec![b],
                None => (i - PUNCT.len()).to_string().into_bytes(),
            }
        }
        LowRes => {
            let pools: [(u32, usize); 3] = [(0x0430, 32), (0x05D0, 27), (0x03B1, 25)];
            let mut k = i;
            for (start, len) in pools {
                if k < len {
                    return ch(start + k as u32);
                }
                k -= len;
            }
            ch(0xAC00 + k as u32)
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticModel {
    config: SynthConfig,
    vocab: Vec<TokenEntry>,
    families: Vec<LanguageFamily>,
    /// Token ids of each family, in family order.
    members: [Vec<TokenId>; 4],
    embeddings: Vec<Vec<f64>>,
    norms: EmbeddingNorms,
    scale: f64,
}

impl SyntheticModel {
    pub fn new(config: SynthConfig) -> Result<Self> {
        config.validate()?;
        let seed = config.seed;
        let d = config.d_model;
        let beta = (1.0 - ALPHA * ALPHA).sqrt();

        let mut vocab = Vec::new();
        let mut families = Vec::new();
        let mut members: [Vec<TokenId>; 4] = Default::default();
        let mut embeddings = Vec::new();
        for family in LanguageFamily::ALL {
            for i in 0..config.tokens_per_family[family.index()] {
                let id = vocab.len() as TokenId;
                vocab.push(TokenEntry::new(id, token_bytes(family, i)));
                families.push(family);
                members[family.index()].push(id);

                let mut dir = vec![0.0; d];
                dir[family.index()] = ALPHA;
                if d > 4 {
                    let r: Vec<f64> = (4..d)
                        .map(|k| hash::normal(seed, &[D_TOKEN, id as u64, k as u64]))
                        .collect();
                    let rn = r.iter().map(|x| x * x).sum::<f64>().sqrt();
                    for (k, x) in r.iter().enumerate() {
                        dir[4 + k] = beta * x / rn;
                    }
                } else {
                    dir[family.index()] = 1.0;
                }
                let mut norm = 1.0 + NORM_SPREAD * (hash::uniform(seed, &[D_NORM, id as u64]) - 0.5);
                if family == Cj {
                    norm *= config.norm_skew;
                }
                embeddings.push(dir.into_iter().map(|x| x * norm).collect::<Vec<f64>>());
            }
        }
        let norms = embedding_norms(&embeddings)?;
        let alpha = if d > 4 { ALPHA } else { 1.0 };
        let scale = config.intent_margin * (1.0 + JITTER * JITTER).sqrt() / alpha;
        Ok(Self {
            config,
            vocab,
            families,
            members,
            embeddings,
            norms,
            scale,
        })
    }

    pub fn config(&self) -> &SynthConfig {
        &self.config
    }

    pub fn families(&self) -> &[LanguageFamily] {
        &self.families
    }

    pub fn embeddings(&self) -> &[Vec<f64>] {
        &self.embeddings
    }

    /// Seeded sequence intent following `intent_weights`. Sequence ids walk
    /// a golden-ratio sequence from a seeded start, so every run of ids hits
    /// the weights closely.
    pub fn intent_of(&self, sequence: u64) -> LanguageFamily {
        let w = self.config.intent_weights;
        let start = hash::uniform(self.config.seed, &[D_INTENT]);
        let u = (start + (sequence % (1 << 40)) as f64 * INV_PHI).fract() * w.iter().sum::<f64>();
        if u < w[0] {
            Cj
        } else if u < w[0] + w[1] {
            Latin
        } else {
            LowRes
        }
    }

    /// Prompt of `prompt_len` tokens from the sequence's intent family.
    pub fn prompt_for(&self, sequence: u64) -> Vec<TokenId> {
        let members = &self.members[self.intent_of(sequence).index()];
        (0..self.config.prompt_len)
            .map(|j| {
                let h = hash::hash(self.config.seed, &[D_PROMPT, sequence, j as u64]);
                members[(h % members.len() as u64) as usize]
            })
            .collect()
    }

    fn plan(&self, context: &[TokenId]) -> Result<Plan> {
        let first = *context
            .first()
            .ok_or_else(|| Error::Model("synthetic model needs a non-empty context".into()))?;
        let intent = self.family_of(first)?;
        let seed = self.config.seed;
        let prompt = &context[..context.len().min(self.config.prompt_len)];
        let key = hash::hash(seed, &prompt.iter().map(|&t| t as u64).collect::<Vec<_>>());
        let pos = context.len() as u64;

        let symbol = hash::uniform(seed, &[D_SYMBOL, key, pos]) < self.config.symbol_rate;
        let switch = !symbol && hash::uniform(seed, &[D_SWITCH, key, pos]) < self.config.switch_rate;
        let family = if symbol {
            Symbols
        } else if switch {
            if intent == Latin {
                Cj
            } else {
                Latin
            }
        } else {
            intent
        };
        let confusor = match intent {
            Cj => Latin,
            Latin | Symbols => Cj,
            LowRes => {
                if hash::uniform(seed, &[D_CONFUSOR, key, pos]) < 0.5 {
                    Cj
                } else {
                    Latin
                }
            }
        };
        let pull = self.config.noise_scale * hash::normal(seed, &[D_EPS, key, pos]).abs();
        Ok(Plan {
            intent,
            family,
            switch,
            confusor,
            pull,
            key,
            pos,
        })
    }

    fn family_of(&self, id: TokenId) -> Result<LanguageFamily> {
        self.families
            .get(id as usize)
            .copied()
            .ok_or_else(|| Error::Model(format!("token id {id} outside the vocabulary")))
    }

    fn hidden(&self, plan: &Plan, last: TokenId) -> Vec<f64> {
        let d = self.config.d_model;
        let mut v = vec![0.0; d];
        v[plan.family.index()] += 1.0;
        if plan.family != plan.intent {
            v[plan.intent.index()] += SECONDARY;
        }
        v[plan.confusor.index()] += plan.pull;
        if d > 4 {
            let w: Vec<f64> = (4..d)
                .map(|k| hash::normal(self.config.seed, &[D_JITTER, plan.key, plan.pos, last as u64, k as u64]))
                .collect();
            let wn = w.iter().map(|x| x * x).sum::<f64>().sqrt();
            for (k, x) in w.iter().enumerate() {
                v[4 + k] += JITTER * x / wn;
            }
        }
        let vn = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        // stored traces hold f32, so keep h exactly representable there
        v.iter().map(|x| (self.scale * x / vn) as f32 as f64).collect()
    }
}

struct Plan {
    intent: LanguageFamily,
    family: LanguageFamily,
    switch: bool,
    confusor: LanguageFamily,
    pull: f64,
    key: u64,
    pos: u64,
}

impl StepModel for SyntheticModel {
    fn name(&self) -> &str {
        "synthetic"
    }

    fn vocab(&self) -> &[TokenEntry] {
        &self.vocab
    }

    fn norms(&self) -> &EmbeddingNorms {
        &self.norms
    }

    fn d_in(&self) -> usize {
        self.config.d_model
    }

    fn step(&self, context: &[TokenId]) -> Result<StepOutput> {
        let plan = self.plan(context)?;
        let last = *context.last().expect("plan checked non-empty");
        self.family_of(last)?;
        let h = self.hidden(&plan, last);
        let logits = self
            .embeddings
            .iter()
            .map(|e| e.iter().zip(&h).map(|(a, b)| a * b).sum())
            .collect();
        Ok(StepOutput { h, logits })
    }

    fn truth(&self, context: &[TokenId]) -> Option<StepTruth> {
        self.plan(context).ok().map(|p| StepTruth {
            sequence_intent: p.intent,
            family: p.family,
            switch: p.switch,
        })
    }

    fn as_synthetic(&self) -> Option<&SyntheticModel> {
        Some(self)
    }
}
