//! Gated decoding.
//!
//! At every step the candidate set is formed as usual. The gate's predicted
//! families are widened by the intervention rules:
//!
//! 1. symbols and low-resource tokens are never masked;
//! 2. no mask when neither high-confidence safety set holds a token of any
//!    gate-predicted family;
//! 3. the family of the previous non-symbol token is always allowed.
//!
//! Families present in the candidate set but not allowed are masked over the
//! full logits and the candidate set is recomputed before sampling.

mod speculative;

use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::gate::{allowed_set, GateParams};
use crate::models::{StepModel, StepOutput};
use crate::sampling::{
    candidate_set, mask_families, mask_families_unchecked, nucleus_from_probs, sample,
    softmax_with_temperature, CandidateSet, SamplingParams,
};
use crate::vocab::{FamilySet, LanguageFamily, TokenId, VocabClassification};
use crate::{Error, Result};

pub use speculative::{speculative_decode, SpecMode, SpecOutput};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SafetySet {
    pub top_k: usize,
    pub top_p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleConfig {
    pub threshold: f64,
    pub safety_sets: [SafetySet; 2],
    /// Rule 1: symbols and low-resource tokens are never masked.
    pub protect_symbols_lowres: bool,
    /// Rule 2: skip masking when high-confidence output contradicts the gate.
    pub defer_to_confident_model: bool,
    /// Rule 3: always allow the previous non-symbol token's family.
    pub keep_previous_family: bool,
}

impl Default for RuleConfig {
    fn default() -> Self {
        Self {
            threshold: 0.5,
            safety_sets: [
                SafetySet {
                    top_k: 5,
                    top_p: 0.999,
                },
                SafetySet {
                    top_k: 20,
                    top_p: 0.95,
                },
            ],
            protect_symbols_lowres: true,
            defer_to_confident_model: true,
            keep_previous_family: true,
        }
    }
}

impl RuleConfig {
    pub fn with_threshold(mut self, threshold: f64) -> Self {
        self.threshold = threshold;
        self
    }

    /// Sets the rule switches from a spec like `all`, `none` or `1,3`.
    pub fn with_rules(mut self, rules: &str) -> Result<Self> {
        let enabled: Vec<u8> = match rules.trim() {
            "all" => vec![1, 2, 3],
            "none" | "off" => vec![],
            list => list
                .split(',')
                .map(|r| match r.trim() {
                    "1" => Ok(1),
                    "2" => Ok(2),
                    "3" => Ok(3),
                    other => Err(Error::config(format!("unknown rule `{other}` (expected 1, 2 or 3)"))),
                })
                .collect::<Result<_>>()?,
        };
        self.protect_symbols_lowres = enabled.contains(&1);
        self.defer_to_confident_model = enabled.contains(&2);
        self.keep_previous_family = enabled.contains(&3);
        Ok(self)
    }
}

impl FromStr for RuleConfig {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        RuleConfig::default().with_rules(s)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DecodeState {
    pub context: Vec<TokenId>,
    pub prev_nonsymbol_family: Option<LanguageFamily>,
    pub step_index: usize,
}

impl DecodeState {
    /// State after a prompt; the prompt's last non-symbol token seeds the
    /// previous-family rule.
    pub fn from_prompt(prompt: &[TokenId], classes: &VocabClassification) -> Self {
        let prev = prompt
            .iter()
            .rev()
            .map(|&t| classes.family(t))
            .find(|&f| f != LanguageFamily::Symbols);
        Self {
            context: prompt.to_vec(),
            prev_nonsymbol_family: prev,
            step_index: 0,
        }
    }

    pub fn push(&mut self, token: TokenId, family: LanguageFamily) {
        self.context.push(token);
        if family != LanguageFamily::Symbols {
            self.prev_nonsymbol_family = Some(family);
        }
        self.step_index += 1;
    }
}

/// A step whose candidate set holds a token of a family other than the
/// previous one (symbols excluded).
#[derive(Debug, Clone, PartialEq)]
pub struct ConfusionPoint {
    pub confusion_ids: Vec<TokenId>,
    /// Rank (1-based) of the best confusion token.
    pub first_rank: usize,
    pub top1_is_confusion: bool,
    pub consistent_in_top3: bool,
}

pub fn detect_confusion_point(
    candidates: &CandidateSet,
    prev: Option<LanguageFamily>,
    classes: &VocabClassification,
) -> Option<ConfusionPoint> {
    let prev = prev?;
    let is_confusion = |id: TokenId| {
        let f = classes.family(id);
        f != prev && f != LanguageFamily::Symbols
    };
    let confusion_ids: Vec<TokenId> = candidates.ids.iter().copied().filter(|&id| is_confusion(id)).collect();
    let first = candidates.ids.iter().position(|&id| is_confusion(id))?;
    Some(ConfusionPoint {
        confusion_ids,
        first_rank: first + 1,
        top1_is_confusion: first == 0,
        consistent_in_top3: candidates.ids.iter().take(3).any(|&id| classes.family(id) == prev),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepOutcome {
    pub step: usize,
    pub token_id: TokenId,
    pub family: LanguageFamily,
    pub intervened: bool,
    /// Masking removed every token, so the unmasked set was used instead.
    pub fallback: bool,
    pub masked_families: FamilySet,
    /// Raw gate prediction; absent when decoding without a gate.
    pub gate_allowed: Option<FamilySet>,
    pub candidates_before: Vec<TokenId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub candidates_after: Option<Vec<TokenId>>,
    pub confusion_point: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confusion_token_rank: Option<usize>,
    pub top1_confusion: bool,
    pub consistent_in_top3: bool,
}

/// Why a step was or was not masked.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaskDecision {
    /// Every family in the candidate set is allowed.
    NotNeeded,
    /// Rule 2: no gate-predicted family appears in either safety set.
    Contradicted,
    Mask(FamilySet),
}

/// The masking decision for one step, without sampling.
pub fn plan_mask(
    logits: &[f64],
    candidates: &CandidateSet,
    predicted: FamilySet,
    prev: Option<LanguageFamily>,
    rules: &RuleConfig,
    classes: &VocabClassification,
) -> MaskDecision {
    let mut allowed = predicted;
    if rules.protect_symbols_lowres {
        allowed = allowed.union(FamilySet::NEVER_MASKED);
    }
    if rules.keep_previous_family {
        if let Some(prev) = prev {
            allowed.insert(prev);
        }
    }
    let banned = candidates.families(classes).difference(allowed);
    if banned.is_empty() {
        return MaskDecision::NotNeeded;
    }
    if rules.defer_to_confident_model {
        let probs = softmax_with_temperature(logits, 1.0);
        let supported = rules.safety_sets.iter().any(|s| {
            nucleus_from_probs(&probs, s.top_k, s.top_p)
                .ids
                .iter()
                .any(|&id| predicted.contains(classes.family(id)))
        });
        if !supported {
            return MaskDecision::Contradicted;
        }
    }
    MaskDecision::Mask(banned)
}

fn base_outcome(
    step: usize,
    candidates: &CandidateSet,
    prev: Option<LanguageFamily>,
    classes: &VocabClassification,
) -> StepOutcome {
    let cp = detect_confusion_point(candidates, prev, classes);
    StepOutcome {
        step,
        token_id: 0,
        family: LanguageFamily::Symbols,
        intervened: false,
        fallback: false,
        masked_families: FamilySet::EMPTY,
        gate_allowed: None,
        candidates_before: candidates.ids.clone(),
        candidates_after: None,
        confusion_point: cp.is_some(),
        confusion_token_rank: cp.as_ref().map(|c| c.first_rank),
        top1_confusion: cp.as_ref().is_some_and(|c| c.top1_is_confusion),
        consistent_in_top3: cp.as_ref().is_some_and(|c| c.consistent_in_top3),
    }
}

/// Plain sampling with confusion-point bookkeeping.
pub fn ungated_step<R: Rng + ?Sized>(
    out: &StepOutput,
    state: &DecodeState,
    params: &SamplingParams,
    classes: &VocabClassification,
    rng: &mut R,
) -> Result<StepOutcome> {
    check_logits(&out.logits, classes)?;
    let c = candidate_set(&out.logits, params);
    let mut o = base_outcome(state.step_index, &c, state.prev_nonsymbol_family, classes);
    o.token_id = sample(&c, rng);
    o.family = classes.family(o.token_id);
    Ok(o)
}

fn check_logits(logits: &[f64], classes: &VocabClassification) -> Result<()> {
    if logits.len() != classes.len() {
        return Err(Error::LengthMismatch {
            what: "logits",
            expected: classes.len(),
            got: logits.len(),
        });
    }
    if !logits.iter().any(|l| l.is_finite()) {
        return Err(Error::Model("step produced no finite logits".into()));
    }
    Ok(())
}

/// One gated decoding step. Draws exactly one random number.
pub fn gated_step<R: Rng + ?Sized>(
    out: &StepOutput,
    gate: &GateParams,
    state: &DecodeState,
    params: &SamplingParams,
    rules: &RuleConfig,
    classes: &VocabClassification,
    rng: &mut R,
) -> Result<StepOutcome> {
    check_logits(&out.logits, classes)?;
    let c = candidate_set(&out.logits, params);
    let predicted = allowed_set(&gate.forward(&out.h)?, rules.threshold);
    let mut o = base_outcome(state.step_index, &c, state.prev_nonsymbol_family, classes);
    o.gate_allowed = Some(predicted);

    let decision = plan_mask(&out.logits, &c, predicted, state.prev_nonsymbol_family, rules, classes);
    let chosen = match decision {
        MaskDecision::NotNeeded | MaskDecision::Contradicted => sample(&c, rng),
        MaskDecision::Mask(banned) => {
            let masked = if rules.protect_symbols_lowres {
                mask_families(&out.logits, classes, banned)?
            } else {
                mask_families_unchecked(&out.logits, classes, banned)?
            };
            if masked.iter().any(|l| l.is_finite()) {
                let after = candidate_set(&masked, params);
                o.intervened = true;
                o.masked_families = banned;
                let id = sample(&after, rng);
                o.candidates_after = Some(after.ids);
                id
            } else {
                o.fallback = true;
                sample(&c, rng)
            }
        }
    };
    o.token_id = chosen;
    o.family = classes.family(chosen);
    Ok(o)
}

/// Generated tokens (prompt excluded) and one outcome per step.
#[derive(Debug, Clone, PartialEq)]
pub struct Decoded {
    pub tokens: Vec<TokenId>,
    pub outcomes: Vec<StepOutcome>,
}

/// Bundles everything a decoding session needs besides its rng.
pub struct Decoder<'a> {
    pub model: &'a dyn StepModel,
    pub classes: &'a VocabClassification,
    pub gate: Option<&'a GateParams>,
    pub params: SamplingParams,
    pub rules: RuleConfig,
}

impl<'a> Decoder<'a> {
    pub fn new(model: &'a dyn StepModel, classes: &'a VocabClassification) -> Self {
        Self {
            model,
            classes,
            gate: None,
            params: SamplingParams::default(),
            rules: RuleConfig::default(),
        }
    }

    pub fn with_gate(mut self, gate: Option<&'a GateParams>) -> Self {
        self.gate = gate;
        self
    }

    pub fn with_params(mut self, params: SamplingParams) -> Self {
        self.params = params;
        self
    }

    pub fn with_rules(mut self, rules: RuleConfig) -> Self {
        self.rules = rules;
        self
    }

    fn check(&self) -> Result<()> {
        self.params.validate()?;
        if self.model.vocab_size() != self.classes.len() {
            return Err(Error::LengthMismatch {
                what: "vocabulary",
                expected: self.classes.len(),
                got: self.model.vocab_size(),
            });
        }
        if let Some(g) = self.gate {
            g.check_input(self.model.d_in())?;
        }
        Ok(())
    }

    pub fn step<R: Rng + ?Sized>(&self, out: &StepOutput, state: &DecodeState, rng: &mut R) -> Result<StepOutcome> {
        match self.gate {
            Some(g) => gated_step(out, g, state, &self.params, &self.rules, self.classes, rng),
            None => ungated_step(out, state, &self.params, self.classes, rng),
        }
    }

    pub fn decode<R: Rng + ?Sized>(&self, prompt: &[TokenId], rng: &mut R, max_steps: usize) -> Result<Decoded> {
        self.decode_with(prompt, rng, max_steps, |_, _, _| {})
    }

    /// Like [`Decoder::decode`], calling `observe(context, output, outcome)`
    /// after every step.
    pub fn decode_with<R, F>(&self, prompt: &[TokenId], rng: &mut R, max_steps: usize, mut observe: F) -> Result<Decoded>
    where
        R: Rng + ?Sized,
        F: FnMut(&[TokenId], &StepOutput, &StepOutcome),
    {
        if max_steps == 0 {
            return Err(Error::config("max_steps must be at least 1"));
        }
        self.check()?;
        if let Some(&bad) = prompt.iter().find(|&&t| t as usize >= self.classes.len()) {
            return Err(Error::config(format!("prompt token {bad} outside the vocabulary")));
        }
        let mut state = DecodeState::from_prompt(prompt, self.classes);
        let mut outcomes = Vec::with_capacity(max_steps);
        for _ in 0..max_steps {
            let out = self.model.step(&state.context)?;
            let o = self.step(&out, &state, rng)?;
            observe(&state.context, &out, &o);
            state.push(o.token_id, o.family);
            outcomes.push(o);
        }
        Ok(Decoded {
            tokens: state.context[prompt.len()..].to_vec(),
            outcomes,
        })
    }
}

/// Decodes `max_steps` tokens after `prompt`; without a gate this is plain
/// top-k/top-p sampling.
#[allow(clippy::too_many_arguments)]
pub fn decode_sequence<R: Rng + ?Sized>(
    model: &dyn StepModel,
    classes: &VocabClassification,
    gate: Option<&GateParams>,
    prompt: &[TokenId],
    params: SamplingParams,
    rules: RuleConfig,
    rng: &mut R,
    max_steps: usize,
) -> Result<Decoded> {
    Decoder::new(model, classes)
        .with_gate(gate)
        .with_params(params)
        .with_rules(rules)
        .decode(prompt, rng, max_steps)
}

/// Summary record appended to decode output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodeSummary {
    pub steps: usize,
    pub interventions: usize,
    pub intervention_rate: f64,
    pub confusion_points: usize,
    pub fallbacks: usize,
}

impl DecodeSummary {
    pub fn from_outcomes<'a>(outcomes: impl IntoIterator<Item = &'a StepOutcome>) -> Self {
        let mut s = Self {
            steps: 0,
            interventions: 0,
            intervention_rate: 0.0,
            confusion_points: 0,
            fallbacks: 0,
        };
        for o in outcomes {
            s.steps += 1;
            s.interventions += o.intervened as usize;
            s.confusion_points += o.confusion_point as usize;
            s.fallbacks += o.fallback as usize;
        }
        if s.steps > 0 {
            s.intervention_rate = s.interventions as f64 / s.steps as f64;
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use LanguageFamily::*;

    // ids: 0 CJ, 1 Latin, 2 Symbols, 3 LowRes, 4 Latin, 5 CJ
    fn classes() -> VocabClassification {
        VocabClassification::from_families(vec![Cj, Latin, Symbols, LowRes, Latin, Cj])
    }

    /// A one-layer-deep gate whose output is its bias: `z = b2`.
    fn bias_gate(allowed: FamilySet) -> GateParams {
        let mut g = GateParams::zeros(2, 1);
        g.b2 = LanguageFamily::ALL
            .iter()
            .map(|&f| if allowed.contains(f) { 10.0 } else { -10.0 })
            .collect();
        g
    }

    fn out(logits: Vec<f64>) -> StepOutput {
        StepOutput { h: vec![0.0, 0.0], logits }
    }

    fn state(prev: Option<LanguageFamily>) -> DecodeState {
        DecodeState {
            context: vec![1],
            prev_nonsymbol_family: prev,
            step_index: 0,
        }
    }

    #[test]
    fn confusion_point_detection() {
        let c = classes();
        let set = CandidateSet { ids: vec![1, 2, 4], probs: vec![0.5, 0.3, 0.2] };
        assert_eq!(detect_confusion_point(&set, Some(Latin), &c), None);
        assert_eq!(detect_confusion_point(&set, None, &c), None);
        let set = CandidateSet { ids: vec![0, 1, 2], probs: vec![0.5, 0.3, 0.2] };
        let cp = detect_confusion_point(&set, Some(Latin), &c).unwrap();
        assert!(cp.top1_is_confusion && cp.consistent_in_top3);
        assert_eq!(cp.confusion_ids, vec![0]);
        assert_eq!(cp.first_rank, 1);
    }

    #[test]
    fn permissive_gate_matches_ungated() {
        let c = classes();
        let g = bias_gate(FamilySet::ALL);
        let o = out(vec![2.0, 1.9, 0.5, 1.0, 1.5, 1.8]);
        let p = SamplingParams::new(6, 1.0, 1.0).unwrap();
        for seed in 0..20 {
            let a = gated_step(&o, &g, &state(Some(Latin)), &p, &RuleConfig::default(), &c, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            let b = ungated_step(&o, &state(Some(Latin)), &p, &c, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            assert_eq!(a.token_id, b.token_id);
            assert!(!a.intervened);
        }
    }

    #[test]
    fn only_cj_is_masked_never_lowres() {
        let c = classes();
        let g = bias_gate(FamilySet::single(Latin));
        // candidates: CJ(0), Latin(1), LowRes(3)
        let o = out(vec![3.0, 2.9, f64::NEG_INFINITY, 2.8, f64::NEG_INFINITY, f64::NEG_INFINITY]);
        let p = SamplingParams::new(6, 1.0, 1.0).unwrap();
        let r = gated_step(&o, &g, &state(Some(Latin)), &p, &RuleConfig::default(), &c, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert!(r.intervened);
        assert_eq!(r.masked_families, FamilySet::single(Cj));
        assert_eq!(r.candidates_after.as_deref(), Some(&[1, 3][..]));
        assert_ne!(r.family, Cj);
    }

    #[test]
    fn contradicted_gate_is_ignored() {
        let c = classes();
        // the gate wants CJ only, but the model puts all its mass on Latin
        let g = bias_gate(FamilySet::single(Cj));
        let mut logits = vec![f64::NEG_INFINITY; 6];
        logits[1] = 5.0;
        logits[4] = 4.0;
        let r = gated_step(&out(logits), &g, &state(Some(Cj)), &SamplingParams::default(), &RuleConfig::default(), &c, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert!(!r.intervened);
        assert!(r.masked_families.is_empty());
        assert_eq!(r.family, Latin);
    }

    #[test]
    fn previous_family_is_kept() {
        let c = classes();
        let g = bias_gate(FamilySet::single(Latin));
        let o = out(vec![3.0, 2.9, 0.0, 0.0, 2.0, 2.5]);
        let p = SamplingParams::new(6, 1.0, 1.0).unwrap();
        let r = gated_step(&o, &g, &state(Some(Cj)), &p, &RuleConfig::default(), &c, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert!(!r.intervened);
        // with rule 3 off the CJ tokens go
        let rules = RuleConfig::default().with_rules("1,2").unwrap();
        let r = gated_step(&o, &g, &state(Some(Cj)), &p, &rules, &c, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert!(r.intervened);
        assert_eq!(r.masked_families, FamilySet::single(Cj));
    }

    #[test]
    fn rule1_off_can_mask_lowres() {
        let c = classes();
        let g = bias_gate(FamilySet::single(Latin));
        let o = out(vec![f64::NEG_INFINITY, 2.9, f64::NEG_INFINITY, 3.0, f64::NEG_INFINITY, f64::NEG_INFINITY]);
        let p = SamplingParams::new(6, 1.0, 1.0).unwrap();
        let r = gated_step(&o, &g, &state(Some(Latin)), &p, &RuleConfig::default(), &c, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert!(!r.intervened);
        let rules = RuleConfig::default().with_rules("2,3").unwrap();
        let r = gated_step(&o, &g, &state(Some(Latin)), &p, &rules, &c, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(r.masked_families, FamilySet::single(LowRes));
        assert_eq!(r.token_id, 1);
    }

    #[test]
    fn empty_after_mask_falls_back() {
        let c = VocabClassification::from_families(vec![Cj, Cj]);
        let g = bias_gate(FamilySet::single(Latin));
        // predicted Latin has no tokens, so rule 2 must be off to reach the mask
        let rules = RuleConfig::default().with_rules("1,3").unwrap();
        let o = out(vec![1.0, 0.5]);
        let r = gated_step(&o, &g, &state(None), &SamplingParams::default(), &rules, &c, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert!(r.fallback && !r.intervened);
        assert_eq!(r.family, Cj);
    }

    #[test]
    fn empty_gate_prediction_never_masks() {
        let c = classes();
        let mut g = GateParams::zeros(2, 1);
        g.b2 = vec![-5.0; 4];
        let o = out(vec![3.0, 2.9, 0.0, 0.0, 2.0, 2.5]);
        let r = gated_step(&o, &g, &state(Some(Latin)), &SamplingParams::default(), &RuleConfig::default(), &c, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(r.gate_allowed, Some(FamilySet::EMPTY));
        assert!(!r.intervened);
    }

    #[test]
    fn rules_parse() {
        let r: RuleConfig = "none".parse().unwrap();
        assert!(!r.protect_symbols_lowres && !r.defer_to_confident_model && !r.keep_previous_family);
        let r: RuleConfig = "1,3".parse().unwrap();
        assert!(r.protect_symbols_lowres && !r.defer_to_confident_model && r.keep_previous_family);
        assert!("4".parse::<RuleConfig>().is_err());
        let d = RuleConfig::default();
        assert_eq!((d.safety_sets[0].top_k, d.safety_sets[0].top_p), (5, 0.999));
        assert_eq!((d.safety_sets[1].top_k, d.safety_sets[1].top_p), (20, 0.95));
    }

    #[test]
    fn state_tracks_previous_nonsymbol() {
        let c = classes();
        let mut s = DecodeState::from_prompt(&[3, 2], &c);
        assert_eq!(s.prev_nonsymbol_family, Some(LowRes));
        s.push(2, Symbols);
        assert_eq!(s.prev_nonsymbol_family, Some(LowRes));
        s.push(1, Latin);
        assert_eq!(s.prev_nonsymbol_family, Some(Latin));
        assert_eq!(DecodeState::from_prompt(&[2], &c).prev_nonsymbol_family, None);
    }
}
