//! Recorded decoding traces and their playback.
//!
//! A trace directory holds:
//!
//! - `meta.json`: `{"d_in", "M", "vocab_size", "source", "family_counts"}`
//! - `vocab.jsonl`: the vocabulary file with a `norm` on every record
//! - `steps.jsonl`: one step per line with `h`, `raw_top`, `adjusted_top`
//!   (`[id, prob]` pairs, full-vocabulary softmax at temperature 1, top `M`
//!   kept), `chosen_id` and `prev_id`. Synthetic recordings add `seq`,
//!   `intent` and `switch`.
//!
//! Every float is stored as `f32`.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{StepModel, StepOutput};
use crate::decoder::Decoder;
use crate::io::{read_json, to_jsonl, write_atomic, write_json};
use crate::sampling::{norm_adjust, softmax_with_temperature, top_k_indices, EmbeddingNorms, SamplingParams};
use crate::vocab::file::{read_vocab, write_vocab};
use crate::vocab::{classify_vocabulary, LanguageFamily, TokenEntry, TokenId, UnicodeBlockTable, VocabClassification};
use crate::{Error, Result};

/// Slack on the stored mass, which is a sum of rounded probabilities.
const MASS_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceMeta {
    pub d_in: usize,
    #[serde(rename = "M")]
    pub m: usize,
    pub vocab_size: usize,
    pub source: String,
    #[serde(default)]
    pub family_counts: BTreeMap<LanguageFamily, usize>,
}

fn is_false(b: &bool) -> bool {
    !*b
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    pub h: Vec<f32>,
    pub raw_top: Vec<(TokenId, f32)>,
    pub adjusted_top: Vec<(TokenId, f32)>,
    pub chosen_id: TokenId,
    pub prev_id: TokenId,
    /// Sequence index within the recording.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seq: Option<u64>,
    /// Family the model meant to emit, when known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intent: Option<LanguageFamily>,
    /// A planted, legitimate family switch.
    #[serde(default, skip_serializing_if = "is_false")]
    pub switch: bool,
}

impl TraceStep {
    /// Model output for replay: `h` widened to f64, logits `ln p` over the
    /// raw list and `-inf` elsewhere.
    pub fn output(&self, vocab_size: usize) -> StepOutput {
        let mut logits = vec![f64::NEG_INFINITY; vocab_size];
        for &(id, p) in &self.raw_top {
            logits[id as usize] = (p as f64).ln();
        }
        StepOutput {
            h: self.h.iter().map(|&x| x as f64).collect(),
            logits,
        }
    }

    pub fn h_f64(&self) -> Vec<f64> {
        self.h.iter().map(|&x| x as f64).collect()
    }

    pub fn adjusted_mass(&self) -> f64 {
        self.adjusted_top.iter().map(|&(_, p)| p as f64).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub meta: TraceMeta,
    pub vocab: Vec<TokenEntry>,
    pub norms: EmbeddingNorms,
    pub steps: Vec<TraceStep>,
}

impl Trace {
    /// Family of the latest non-symbol token before each step. A step
    /// continues the previous one when it has the same `seq` (if recorded)
    /// and its `prev_id` is the previous step's `chosen_id`.
    pub fn prev_nonsymbol_families(&self, classes: &VocabClassification) -> Vec<Option<LanguageFamily>> {
        let mut out = Vec::with_capacity(self.steps.len());
        let mut current: Option<LanguageFamily> = None;
        let mut last: Option<&TraceStep> = None;
        for s in &self.steps {
            let continues = last.is_some_and(|l| l.chosen_id == s.prev_id && l.seq == s.seq);
            if !continues {
                current = None;
            }
            let f = classes.family(s.prev_id);
            if f != LanguageFamily::Symbols {
                current = Some(f);
            }
            out.push(current);
            last = Some(s);
        }
        out
    }

    pub fn classify(&self, table: &UnicodeBlockTable) -> Result<VocabClassification> {
        classify_vocabulary(table, &self.vocab)
    }
}

fn check_sparse(list: &[(TokenId, f32)], vocab_size: usize, m: usize) -> std::result::Result<(), String> {
    if list.len() > m {
        return Err(format!("holds {} entries, more than M = {m}", list.len()));
    }
    let mut mass = 0.0;
    for (n, &(id, p)) in list.iter().enumerate() {
        if id as usize >= vocab_size {
            return Err(format!("id {id} outside the vocabulary"));
        }
        if !(p > 0.0 && p.is_finite()) {
            return Err(format!("probability {p} for id {id} is not positive"));
        }
        if n > 0 && p > list[n - 1].1 {
            return Err(format!("not in descending order at entry {n}"));
        }
        mass += p as f64;
    }
    if mass > 1.0 + MASS_TOLERANCE {
        return Err(format!("total mass {mass} exceeds 1"));
    }
    Ok(())
}

fn check_step(s: &TraceStep, meta: &TraceMeta) -> std::result::Result<(), String> {
    if s.h.len() != meta.d_in {
        return Err(format!("field `h` has {} values, meta.d_in is {}", s.h.len(), meta.d_in));
    }
    if s.h.iter().any(|x| !x.is_finite()) {
        return Err("field `h` holds a non-finite value".into());
    }
    if s.raw_top.is_empty() {
        return Err("field `raw_top` is empty".into());
    }
    check_sparse(&s.raw_top, meta.vocab_size, meta.m).map_err(|e| format!("field `raw_top` {e}"))?;
    check_sparse(&s.adjusted_top, meta.vocab_size, meta.m).map_err(|e| format!("field `adjusted_top` {e}"))?;
    for (name, id) in [("chosen_id", s.chosen_id), ("prev_id", s.prev_id)] {
        if id as usize >= meta.vocab_size {
            return Err(format!("field `{name}` = {id} outside the vocabulary"));
        }
    }
    Ok(())
}

fn read_steps(path: &Path, meta: &TraceMeta) -> Result<Vec<TraceStep>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut steps = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let step: TraceStep = serde_json::from_str(&line).map_err(|e| Error::parse(path, i + 1, e))?;
        check_step(&step, meta).map_err(|msg| Error::parse(path, i + 1, msg))?;
        steps.push(step);
    }
    if steps.is_empty() {
        return Err(Error::parse(path, 0, "trace has no steps"));
    }
    Ok(steps)
}

pub fn read_trace(dir: &Path) -> Result<Trace> {
    let meta_path = dir.join("meta.json");
    let meta: TraceMeta = read_json(&meta_path)?;
    if meta.d_in == 0 || meta.m == 0 {
        return Err(Error::parse(&meta_path, 0, "d_in and M must be positive"));
    }
    let vocab_path = dir.join("vocab.jsonl");
    let vf = read_vocab(&vocab_path)?;
    if vf.entries.len() != meta.vocab_size {
        return Err(Error::parse(
            &vocab_path,
            0,
            format!("{} tokens, meta.vocab_size is {}", vf.entries.len(), meta.vocab_size),
        ));
    }
    let norms = vf
        .norms
        .ok_or_else(|| Error::parse(&vocab_path, 0, "every record needs a `norm` in a trace vocabulary"))?;
    let norms = EmbeddingNorms::new(norms)?;
    let mut vocab = vf.entries;
    vocab.sort_by_key(|e| e.id);
    let steps = read_steps(&dir.join("steps.jsonl"), &meta)?;
    Ok(Trace {
        meta,
        vocab,
        norms,
        steps,
    })
}

pub fn write_trace(dir: &Path, trace: &Trace) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_vocab(&dir.join("vocab.jsonl"), &trace.vocab, Some(trace.norms.as_slice()))?;
    write_atomic(&dir.join("steps.jsonl"), &to_jsonl(&trace.steps)?)?;
    // meta last: its presence marks a complete trace
    write_json(&dir.join("meta.json"), &trace.meta)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecordOptions {
    /// Entries kept per sparse list.
    pub m: usize,
    /// Decoding steps per prompt.
    pub steps_per_prompt: usize,
    /// Sampling rule of the recorded rollout.
    pub params: SamplingParams,
    pub seed: u64,
    pub source: String,
}

impl Default for RecordOptions {
    fn default() -> Self {
        Self {
            m: 256,
            steps_per_prompt: 64,
            params: SamplingParams::default(),
            seed: 0,
            source: "synthetic".into(),
        }
    }
}

fn sparse_top(probs: &[f64], m: usize) -> Vec<(TokenId, f32)> {
    top_k_indices(probs, m)
        .into_iter()
        .map(|i| (i as TokenId, probs[i] as f32))
        .filter(|&(_, p)| p > 0.0)
        .collect()
}

/// Runs an ungated rollout from every prompt and records each step.
pub fn record_trace(model: &dyn StepModel, prompts: &[Vec<TokenId>], opts: &RecordOptions) -> Result<Trace> {
    if opts.m == 0 {
        return Err(Error::config("M must be at least 1"));
    }
    if prompts.is_empty() || prompts.iter().any(|p| p.is_empty()) {
        return Err(Error::config("recording needs at least one non-empty prompt"));
    }
    let classes = classify_vocabulary(&UnicodeBlockTable::standard(), model.vocab())?;
    let decoder = Decoder::new(model, &classes).with_params(opts.params);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut steps = Vec::with_capacity(prompts.len() * opts.steps_per_prompt);
    let mut failure = None;
    for (seq, prompt) in prompts.iter().enumerate() {
        decoder.decode_with(prompt, &mut rng, opts.steps_per_prompt, |ctx, out, o| {
            let adjusted = match norm_adjust(&out.logits, model.norms()) {
                Ok(a) => a,
                Err(e) => {
                    failure.get_or_insert(e);
                    return;
                }
            };
            let truth = model.truth(ctx);
            steps.push(TraceStep {
                h: out.h.iter().map(|&x| x as f32).collect(),
                raw_top: sparse_top(&softmax_with_temperature(&out.logits, 1.0), opts.m),
                adjusted_top: sparse_top(&softmax_with_temperature(&adjusted, 1.0), opts.m),
                chosen_id: o.token_id,
                prev_id: *ctx.last().expect("prompt is non-empty"),
                seq: Some(seq as u64),
                intent: truth.map(|t| t.family),
                switch: truth.is_some_and(|t| t.switch),
            });
        })?;
        if let Some(e) = failure.take() {
            return Err(e);
        }
    }
    Ok(Trace {
        meta: TraceMeta {
            d_in: model.d_in(),
            m: opts.m,
            vocab_size: model.vocab_size(),
            source: opts.source.clone(),
            family_counts: classes.counts(),
        },
        vocab: model.vocab().to_vec(),
        norms: model.norms().clone(),
        steps,
    })
}

/// Replays a trace step by step, ignoring the context it is given.
pub struct TracePlayer {
    trace: Trace,
    cursor: AtomicUsize,
}

impl TracePlayer {
    pub fn new(trace: Trace) -> Self {
        Self {
            trace,
            cursor: AtomicUsize::new(0),
        }
    }

    pub fn trace(&self) -> &Trace {
        &self.trace
    }

    pub fn reset(&self) {
        self.cursor.store(0, Ordering::SeqCst);
    }

    pub fn position(&self) -> usize {
        self.cursor.load(Ordering::SeqCst)
    }

    /// `(prompt, length)` of each recorded sequence, in order. The prompt is
    /// the first step's `prev_id`.
    pub fn sequences(&self) -> Vec<(Vec<TokenId>, usize)> {
        let mut out: Vec<(Vec<TokenId>, usize)> = Vec::new();
        let mut last: Option<&TraceStep> = None;
        for s in &self.trace.steps {
            let continues = last.is_some_and(|l| l.chosen_id == s.prev_id && l.seq == s.seq);
            match out.last_mut() {
                Some(cur) if continues => cur.1 += 1,
                _ => out.push((vec![s.prev_id], 1)),
            }
            last = Some(s);
        }
        out
    }
}

impl StepModel for TracePlayer {
    fn name(&self) -> &str {
        "trace"
    }

    fn vocab(&self) -> &[TokenEntry] {
        &self.trace.vocab
    }

    fn norms(&self) -> &EmbeddingNorms {
        &self.trace.norms
    }

    fn d_in(&self) -> usize {
        self.trace.meta.d_in
    }

    fn step(&self, _context: &[TokenId]) -> Result<StepOutput> {
        let i = self.cursor.fetch_add(1, Ordering::SeqCst);
        let s = self.trace.steps.get(i).ok_or_else(|| {
            Error::Model(format!("trace has {} steps; step {} requested", self.trace.steps.len(), i + 1))
        })?;
        Ok(s.output(self.trace.meta.vocab_size))
    }

    fn as_trace(&self) -> Option<&TracePlayer> {
        Some(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{SynthConfig, SyntheticModel};

    fn small() -> SyntheticModel {
        SyntheticModel::new(SynthConfig {
            tokens_per_family: [12, 12, 8, 12],
            d_model: 16,
            ..Default::default()
        })
        .unwrap()
    }

    fn record(m: &SyntheticModel, opts: &RecordOptions) -> Trace {
        let prompts: Vec<_> = (0..3).map(|s| m.prompt_for(s)).collect();
        record_trace(m, &prompts, opts).unwrap()
    }

    #[test]
    fn full_m_keeps_all_mass() {
        let m = small();
        let opts = RecordOptions {
            m: m.vocab_size(),
            steps_per_prompt: 5,
            ..Default::default()
        };
        let t = record(&m, &opts);
        assert_eq!(t.steps.len(), 15);
        for s in &t.steps {
            let raw: f64 = s.raw_top.iter().map(|&(_, p)| p as f64).sum();
            assert!((raw - 1.0).abs() < 1e-6);
            assert!((s.adjusted_mass() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn round_trip_is_exact() {
        let m = small();
        let t = record(&m, &RecordOptions { m: 10, steps_per_prompt: 4, ..Default::default() });
        let dir = tempfile::tempdir().unwrap();
        write_trace(dir.path(), &t).unwrap();
        let back = read_trace(dir.path()).unwrap();
        assert_eq!(back.steps, t.steps);
        assert_eq!(back.meta, t.meta);
        assert_eq!(back.vocab, t.vocab);
        // norms go through f32
        for (a, b) in back.norms.as_slice().iter().zip(t.norms.as_slice()) {
            assert_eq!(*a, *b as f32 as f64);
        }
    }

    #[test]
    fn same_seed_same_trace() {
        let m = small();
        let opts = RecordOptions { m: 8, steps_per_prompt: 6, seed: 4, ..Default::default() };
        assert_eq!(record(&m, &opts), record(&m, &opts));
    }

    #[test]
    fn player_replays_in_order_then_errors() {
        let m = small();
        let t = record(&m, &RecordOptions { m: 8, steps_per_prompt: 2, ..Default::default() });
        let n = t.steps.len();
        let p = TracePlayer::new(t.clone());
        for s in &t.steps {
            let out = p.step(&[]).unwrap();
            assert_eq!(out.h, s.h_f64());
            let finite = out.logits.iter().filter(|l| l.is_finite()).count();
            assert_eq!(finite, s.raw_top.len());
        }
        assert!(p.step(&[]).is_err());
        assert_eq!(p.position(), n + 1);
        p.reset();
        assert!(p.step(&[]).is_ok());
        let seqs = p.sequences();
        assert_eq!(seqs.len(), 3);
        assert!(seqs.iter().all(|(prompt, len)| prompt.len() == 1 && *len == 2));
        assert!(crate::models::intent_of(&p, 0).is_err());
    }

    #[test]
    fn empty_steps_rejected() {
        let m = small();
        let t = record(&m, &RecordOptions { m: 8, steps_per_prompt: 1, ..Default::default() });
        let dir = tempfile::tempdir().unwrap();
        write_trace(dir.path(), &t).unwrap();
        fs::write(dir.path().join("steps.jsonl"), "\n").unwrap();
        let err = read_trace(dir.path()).unwrap_err().to_string();
        assert!(err.contains("no steps"), "{err}");
    }

    #[test]
    fn bad_step_names_line_and_field() {
        let m = small();
        let t = record(&m, &RecordOptions { m: 8, steps_per_prompt: 2, ..Default::default() });
        let dir = tempfile::tempdir().unwrap();
        write_trace(dir.path(), &t).unwrap();
        let path = dir.path().join("steps.jsonl");
        let text = fs::read_to_string(&path).unwrap();
        let mut lines: Vec<String> = text.lines().map(String::from).collect();
        let mut bad = t.steps[1].clone();
        bad.h.pop();
        lines[1] = serde_json::to_string(&bad).unwrap();
        fs::write(&path, lines.join("\n")).unwrap();
        let err = read_trace(dir.path()).unwrap_err().to_string();
        assert!(err.contains("steps.jsonl:2:") && err.contains("`h`"), "{err}");

        let mut bad = t.steps[0].clone();
        bad.raw_top.reverse();
        lines[1] = serde_json::to_string(&bad).unwrap();
        fs::write(&path, lines.join("\n")).unwrap();
        let err = read_trace(dir.path()).unwrap_err().to_string();
        assert!(err.contains("descending"), "{err}");
    }

    #[test]
    fn prev_families_follow_sequences() {
        let m = small();
        let t = record(&m, &RecordOptions { m: 8, steps_per_prompt: 3, ..Default::default() });
        let classes = t.classify(&UnicodeBlockTable::standard()).unwrap();
        let prev = t.prev_nonsymbol_families(&classes);
        for (i, s) in t.steps.iter().enumerate() {
            if i % 3 == 0 {
                // prompts are all in the intent family
                assert_eq!(prev[i], Some(classes.family(s.prev_id)));
            }
        }
    }
}
