//! The synthetic end-to-end benchmark: record traces from a norm-skewed
//! synthetic model, train gates on adjusted and unadjusted pseudo-targets,
//! and compare corpus confusion with and without the gate.

use std::collections::BTreeMap;
use std::ops::Range;
use std::thread;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::decoder::{Decoder, RuleConfig};
use crate::eval::{allowance_check, contains_family_chars};
use crate::gate::train::{build_examples, evaluate, PrecisionRecall};
use crate::gate::{train, AdjustedTargets, GateParams, RawTargets, TargetSource, TrainConfig, TrainOutcome};
use crate::models::{record_trace, RecordOptions, StepModel, SynthConfig, SyntheticModel, Trace};
use crate::sampling::SamplingParams;
use crate::vocab::{classify_vocabulary, FamilySet, LanguageFamily, TokenId, UnicodeBlockTable, VocabClassification};
use crate::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchConfig {
    pub synth: SynthConfig,
    pub train_sequences: u64,
    pub heldout_sequences: u64,
    pub eval_sequences: u64,
    pub steps: usize,
    pub m: usize,
    pub record_seed: u64,
    pub decode_seed: u64,
    pub train: TrainConfig,
    pub params: SamplingParams,
    pub rules: RuleConfig,
}

/// First sequence id of the evaluation corpus, far from the training ids.
const EVAL_OFFSET: u64 = 1 << 32;

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            synth: SynthConfig::default(),
            train_sequences: 200,
            heldout_sequences: 50,
            eval_sequences: 500,
            steps: 64,
            m: 256,
            record_seed: 1,
            decode_seed: 2,
            train: TrainConfig::default(),
            params: SamplingParams::default(),
            rules: RuleConfig::default(),
        }
    }
}

impl BenchConfig {
    pub fn train_range(&self) -> Range<u64> {
        0..self.train_sequences
    }

    pub fn heldout_range(&self) -> Range<u64> {
        self.train_sequences..self.train_sequences + self.heldout_sequences
    }

    pub fn eval_range(&self) -> Range<u64> {
        EVAL_OFFSET..EVAL_OFFSET + self.eval_sequences
    }

    fn record_options(&self, seed: u64) -> RecordOptions {
        RecordOptions {
            m: self.m,
            steps_per_prompt: self.steps,
            params: self.params,
            seed,
            source: "synthetic".into(),
        }
    }
}

pub fn record_range(model: &SyntheticModel, seqs: Range<u64>, opts: &RecordOptions) -> Result<Trace> {
    let prompts: Vec<Vec<TokenId>> = seqs.map(|s| model.prompt_for(s)).collect();
    record_trace(model, &prompts, opts)
}

/// Corpus-level confusion: a sequence is confused when its generated text
/// holds a CJ or Latin character outside its intent family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub sequences: usize,
    pub confused: usize,
    pub confusion_rate: f64,
    pub steps: usize,
    pub interventions: usize,
    pub intervention_rate: f64,
    pub fallbacks: usize,
    pub confusion_points: usize,
}

struct SeqResult {
    confused: bool,
    steps: usize,
    interventions: usize,
    fallbacks: usize,
    points: usize,
}

pub fn sequence_seed(seed: u64, seq: u64) -> u64 {
    seed ^ seq.wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

fn text_of(model: &dyn StepModel, tokens: &[TokenId]) -> String {
    let bytes: Vec<u8> = tokens.iter().flat_map(|&t| model.vocab()[t as usize].bytes.iter().copied()).collect();
    String::from_utf8_lossy(&bytes).into_owned()
}

/// Decodes every sequence of `seqs` and measures confusion. Each sequence
/// has its own rng, so the result does not depend on thread scheduling.
#[allow(clippy::too_many_arguments)]
pub fn run_corpus(
    model: &SyntheticModel,
    classes: &VocabClassification,
    gate: Option<&GateParams>,
    seqs: Range<u64>,
    steps: usize,
    params: SamplingParams,
    rules: &RuleConfig,
    seed: u64,
) -> Result<CorpusStats> {
    let table = UnicodeBlockTable::standard();
    let decoder = Decoder::new(model, classes)
        .with_gate(gate)
        .with_params(params)
        .with_rules(rules.clone());
    let run_one = |seq: u64| -> Result<SeqResult> {
        let prompt = model.prompt_for(seq);
        let mut rng = ChaCha8Rng::seed_from_u64(sequence_seed(seed, seq));
        let d = decoder.decode(&prompt, &mut rng, steps)?;
        let intent = model.intent_of(seq);
        let text = text_of(model, &d.tokens);
        let mut confused = false;
        for f in FamilySet::MASKABLE.iter().filter(|&f| f != intent) {
            confused |= contains_family_chars(&text, f, &table)?;
        }
        Ok(SeqResult {
            confused,
            steps: d.outcomes.len(),
            interventions: d.outcomes.iter().filter(|o| o.intervened).count(),
            fallbacks: d.outcomes.iter().filter(|o| o.fallback).count(),
            points: d.outcomes.iter().filter(|o| o.confusion_point).count(),
        })
    };

    let ids: Vec<u64> = seqs.collect();
    let workers = thread::available_parallelism().map_or(1, |n| n.get()).min(ids.len().max(1));
    let chunk = ids.len().div_ceil(workers).max(1);
    let results: Vec<Result<SeqResult>> = thread::scope(|s| {
        let handles: Vec<_> = ids
            .chunks(chunk)
            .map(|part| s.spawn(|| part.iter().map(|&q| run_one(q)).collect::<Vec<_>>()))
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("decode worker panicked"))
            .collect()
    });

    let mut st = CorpusStats {
        sequences: 0,
        confused: 0,
        confusion_rate: 0.0,
        steps: 0,
        interventions: 0,
        intervention_rate: 0.0,
        fallbacks: 0,
        confusion_points: 0,
    };
    for r in results {
        let r = r?;
        st.sequences += 1;
        st.confused += r.confused as usize;
        st.steps += r.steps;
        st.interventions += r.interventions;
        st.fallbacks += r.fallbacks;
        st.confusion_points += r.points;
    }
    if st.sequences > 0 {
        st.confusion_rate = st.confused as f64 / st.sequences as f64;
    }
    if st.steps > 0 {
        st.intervention_rate = st.interventions as f64 / st.steps as f64;
    }
    Ok(st)
}

/// How often pseudo-targets single out the step's intended family among
/// CJ and Latin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntentMatch {
    pub steps: usize,
    pub adjusted: usize,
    pub raw: usize,
}

pub fn intent_match(trace: &Trace, classes: &VocabClassification, k: usize, p: f64) -> IntentMatch {
    let mut m = IntentMatch { steps: 0, adjusted: 0, raw: 0 };
    for s in &trace.steps {
        let Some(intent) = s.intent else { continue };
        if intent == LanguageFamily::Symbols {
            continue;
        }
        let want = FamilySet::single(intent).intersection(FamilySet::MASKABLE);
        let hit = |src: &dyn TargetSource| {
            crate::gate::pseudo_target(src.distribution(s), classes, k, p)
                .is_ok_and(|y| y.families().intersection(FamilySet::MASKABLE) == want)
        };
        m.steps += 1;
        m.adjusted += hit(&AdjustedTargets) as usize;
        m.raw += hit(&RawTargets) as usize;
    }
    m
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyScore {
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub counts: PrecisionRecall,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub train_examples: usize,
    pub train_truncated: usize,
    pub initial_train_loss: f64,
    pub final_train_loss: f64,
    pub best_epoch: usize,
    pub ungated: CorpusStats,
    pub gated: CorpusStats,
    pub gated_unadjusted: CorpusStats,
    pub heldout: BTreeMap<LanguageFamily, FamilyScore>,
    pub intent_match: IntentMatch,
}

/// Trained artifacts kept alongside the report.
pub struct BenchRun {
    pub report: BenchReport,
    pub adjusted: TrainOutcome,
    pub unadjusted: TrainOutcome,
}

pub fn run_benchmark(cfg: &BenchConfig) -> Result<BenchRun> {
    let model = SyntheticModel::new(cfg.synth.clone())?;
    let classes = classify_vocabulary(&UnicodeBlockTable::standard(), model.vocab())?;
    let train_trace = record_range(&model, cfg.train_range(), &cfg.record_options(cfg.record_seed))?;
    let heldout = record_range(&model, cfg.heldout_range(), &cfg.record_options(cfg.record_seed + 1))?;

    let adjusted = train(&train_trace, &classes, &TrainConfig { target: "adjusted".into(), ..cfg.train.clone() })?;
    let unadjusted = train(&train_trace, &classes, &TrainConfig { target: "unadjusted".into(), ..cfg.train.clone() })?;

    let rules = cfg.rules.clone().with_threshold(cfg.train.threshold);
    let corpus = |gate: Option<&GateParams>| {
        run_corpus(&model, &classes, gate, cfg.eval_range(), cfg.steps, cfg.params, &rules, cfg.decode_seed)
    };
    let ungated = corpus(None)?;
    let gated = corpus(Some(&adjusted.params))?;
    let gated_unadjusted = corpus(Some(&unadjusted.params))?;

    let (examples, _) = build_examples(&heldout, &classes, &AdjustedTargets, cfg.train.k, cfg.train.p);
    let (_, metrics) = evaluate(&adjusted.params, &examples, cfg.train.threshold)?;
    let heldout_scores = metrics
        .into_iter()
        .map(|(f, c)| {
            (
                f,
                FamilyScore {
                    precision: c.precision(),
                    recall: c.recall(),
                    counts: c,
                },
            )
        })
        .collect();

    let report = BenchReport {
        train_examples: adjusted.examples,
        train_truncated: adjusted.truncated,
        initial_train_loss: adjusted.history[0].train_loss,
        final_train_loss: adjusted.history.last().expect("history has epoch 0").train_loss,
        best_epoch: adjusted.best_epoch,
        ungated,
        gated,
        gated_unadjusted,
        heldout: heldout_scores,
        intent_match: intent_match(&heldout, &classes, cfg.train.k, cfg.train.p),
    };
    Ok(BenchRun {
        report,
        adjusted,
        unadjusted,
    })
}

/// Result of the planted code-switch benchmark.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwitchReport {
    pub positions: usize,
    pub allowed_percent: f64,
}

/// Trains on a corpus with planted legitimate switches and checks how often
/// the gate leaves held-out switches alone.
pub fn run_switch_benchmark(cfg: &BenchConfig) -> Result<SwitchReport> {
    let model = SyntheticModel::new(cfg.synth.clone())?;
    let classes = classify_vocabulary(&UnicodeBlockTable::standard(), model.vocab())?;
    let train_trace = record_range(&model, cfg.train_range(), &cfg.record_options(cfg.record_seed))?;
    let heldout = record_range(&model, cfg.heldout_range(), &cfg.record_options(cfg.record_seed + 1))?;
    let gate = train(&train_trace, &classes, &cfg.train)?;
    // switch steps whose recorded token actually landed in the switch family
    let positions: Vec<usize> = heldout
        .steps
        .iter()
        .enumerate()
        .filter(|(_, s)| s.switch && s.intent == Some(classes.family(s.chosen_id)))
        .map(|(i, _)| i)
        .collect();
    let rules = cfg.rules.clone().with_threshold(cfg.train.threshold);
    let allowed_percent = allowance_check(&gate.params, &rules, &cfg.params, &heldout, &classes, &positions)?;
    Ok(SwitchReport {
        positions: positions.len(),
        allowed_percent,
    })
}
