//! Response-level confusion metrics, reference partitioning, confusion-point
//! statistics and the code-switch allowance check.
//!
//! "Latin" always means Latin letters; digits and punctuation are symbols.

use serde::{Deserialize, Serialize};

use crate::decoder::{plan_mask, MaskDecision, RuleConfig, StepOutcome};
use crate::gate::{allowed_set, GateParams};
use crate::models::Trace;
use crate::sampling::{candidate_set, SamplingParams};
use crate::vocab::{FamilySet, LanguageFamily, UnicodeBlockTable, VocabClassification};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseRecord {
    pub id: serde_json::Value,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_language: Option<String>,
}

/// Rounds to 2 decimals, halves away from zero.
pub fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

fn percent(count: usize, n: usize) -> f64 {
    round2(100.0 * count as f64 / n as f64)
}

/// Whether `text` has a character of `family` (CJ or Latin only).
pub fn contains_family_chars(text: &str, family: LanguageFamily, table: &UnicodeBlockTable) -> Result<bool> {
    if !FamilySet::MASKABLE.contains(family) {
        return Err(Error::config(format!("confusion is measured for cj or latin, not {family}")));
    }
    Ok(text.chars().any(|c| table.family_of_char(c) == family))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rate {
    pub count: usize,
    pub n: usize,
    pub percent: f64,
}

/// Share of responses containing at least one `family` character.
pub fn confusion_rate(responses: &[ResponseRecord], family: LanguageFamily, table: &UnicodeBlockTable) -> Result<Rate> {
    if responses.is_empty() {
        return Err(Error::config("no responses to evaluate"));
    }
    let mut count = 0;
    for r in responses {
        count += contains_family_chars(&r.text, family, table)? as usize;
    }
    Ok(Rate {
        count,
        n: responses.len(),
        percent: percent(count, responses.len()),
    })
}

/// Splits by whether the reference holds a Latin letter: `(no_latin,
/// with_latin)`. Records without a reference count as having none.
pub fn partition_by_reference(
    responses: &[ResponseRecord],
    table: &UnicodeBlockTable,
) -> (Vec<ResponseRecord>, Vec<ResponseRecord>) {
    responses.iter().cloned().partition(|r| {
        !r.reference
            .as_deref()
            .is_some_and(|t| t.chars().any(|c| table.family_of_char(c) == LanguageFamily::Latin))
    })
}

pub fn code_switch_rate(responses: &[ResponseRecord], table: &UnicodeBlockTable) -> Result<Rate> {
    confusion_rate(responses, LanguageFamily::Latin, table)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseFlags {
    pub id: serde_json::Value,
    pub cj: bool,
    pub latin: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n: usize,
    pub cj_count: usize,
    pub cj_percent: f64,
    pub latin_count: usize,
    pub latin_percent: f64,
    pub code_switch_percent: f64,
    pub responses: Vec<ResponseFlags>,
}

pub fn evaluate_responses(responses: &[ResponseRecord], table: &UnicodeBlockTable) -> Result<EvalReport> {
    if responses.is_empty() {
        return Err(Error::config("no responses to evaluate"));
    }
    let flags: Vec<ResponseFlags> = responses
        .iter()
        .map(|r| ResponseFlags {
            id: r.id.clone(),
            cj: r.text.chars().any(|c| table.family_of_char(c) == LanguageFamily::Cj),
            latin: r.text.chars().any(|c| table.family_of_char(c) == LanguageFamily::Latin),
        })
        .collect();
    let n = flags.len();
    let cj = flags.iter().filter(|f| f.cj).count();
    let latin = flags.iter().filter(|f| f.latin).count();
    Ok(EvalReport {
        n,
        cj_count: cj,
        cj_percent: percent(cj, n),
        latin_count: latin,
        latin_percent: percent(latin, n),
        code_switch_percent: percent(latin, n),
        responses: flags,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfusionPointStats {
    pub steps: usize,
    pub points: usize,
    pub top1_confusion_frac: Option<f64>,
    pub top3_consistent_frac: Option<f64>,
}

pub fn confusion_point_stats(outcomes: &[StepOutcome]) -> ConfusionPointStats {
    let points: Vec<&StepOutcome> = outcomes.iter().filter(|o| o.confusion_point).collect();
    let frac = |pred: fn(&StepOutcome) -> bool| {
        (!points.is_empty()).then(|| points.iter().filter(|o| pred(o)).count() as f64 / points.len() as f64)
    };
    ConfusionPointStats {
        steps: outcomes.len(),
        points: points.len(),
        top1_confusion_frac: frac(|o| o.top1_confusion),
        top3_consistent_frac: frac(|o| o.consistent_in_top3),
    }
}

/// Percentage of `positions` (trace step indices) at which the gate would
/// leave the recorded token's family unmasked.
pub fn allowance_check(
    gate: &GateParams,
    rules: &RuleConfig,
    params: &SamplingParams,
    trace: &Trace,
    classes: &VocabClassification,
    positions: &[usize],
) -> Result<f64> {
    if positions.is_empty() {
        return Err(Error::config("allowance check needs at least one position"));
    }
    gate.check_input(trace.meta.d_in)?;
    let prev = trace.prev_nonsymbol_families(classes);
    let mut allowed = 0;
    for &i in positions {
        let step = trace
            .steps
            .get(i)
            .ok_or_else(|| Error::config(format!("position {i} outside the trace ({} steps)", trace.steps.len())))?;
        let out = step.output(trace.meta.vocab_size);
        let c = candidate_set(&out.logits, params);
        let predicted = allowed_set(&gate.forward(&out.h)?, rules.threshold);
        let family = classes.family(step.chosen_id);
        let masked = match plan_mask(&out.logits, &c, predicted, prev[i], rules, classes) {
            MaskDecision::Mask(banned) => banned.contains(family),
            MaskDecision::NotNeeded | MaskDecision::Contradicted => false,
        };
        allowed += !masked as usize;
    }
    Ok(round2(100.0 * allowed as f64 / positions.len() as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;
    use LanguageFamily::*;

    fn r(text: &str) -> ResponseRecord {
        ResponseRecord {
            id: json!(text),
            text: text.into(),
            reference: None,
            target_language: None,
        }
    }

    fn with_ref(reference: &str) -> ResponseRecord {
        ResponseRecord {
            reference: Some(reference.into()),
            ..r("x")
        }
    }

    #[test]
    fn family_chars() {
        let t = UnicodeBlockTable::standard();
        assert!(!contains_family_chars("שלום", Cj, &t).unwrap());
        assert!(contains_family_chars("שלום 中", Cj, &t).unwrap());
        assert!(contains_family_chars("שלום ReLU", Latin, &t).unwrap());
        assert!(!contains_family_chars("שלום 123!", Latin, &t).unwrap());
        assert!(contains_family_chars("x", Symbols, &t).is_err());
    }

    #[test]
    fn rates() {
        let t = UnicodeBlockTable::standard();
        let rs = [r("中"), r("שלום"), r("привет")];
        assert_eq!(confusion_rate(&rs, Cj, &t).unwrap().percent, 33.33);
        assert_eq!(confusion_rate(&rs, Latin, &t).unwrap().percent, 0.0);
        assert!(confusion_rate(&[], Cj, &t).is_err());
        let rs = [r("שלום"), r("iPhone שלום"), r("שלום"), r("שלום")];
        assert_eq!(code_switch_rate(&rs, &t).unwrap().percent, 25.0);
        assert_eq!(round2(2.0 / 3.0 * 100.0), 66.67);
        assert_eq!(round2(0.125), 0.13);
    }

    #[test]
    fn partition() {
        let t = UnicodeBlockTable::standard();
        let rs = [with_ref("שלום"), with_ref("שלום Python"), with_ref("שלום 123"), r("none")];
        let (no, with) = partition_by_reference(&rs, &t);
        assert_eq!(no.len(), 3);
        assert_eq!(with.len(), 1);
        assert_eq!(with[0].reference.as_deref(), Some("שלום Python"));
    }

    #[test]
    fn report() {
        let t = UnicodeBlockTable::standard();
        let rep = evaluate_responses(&[r("中 ab"), r("שלום")], &t).unwrap();
        assert_eq!((rep.n, rep.cj_count, rep.latin_count), (2, 1, 1));
        assert_eq!(rep.cj_percent, 50.0);
        assert_eq!(rep.responses.iter().filter(|f| f.cj).count(), rep.cj_count);
    }

    fn outcome(point: bool, top1: bool) -> StepOutcome {
        StepOutcome {
            step: 0,
            token_id: 0,
            family: Latin,
            intervened: false,
            fallback: false,
            masked_families: FamilySet::EMPTY,
            gate_allowed: None,
            candidates_before: vec![],
            candidates_after: None,
            confusion_point: point,
            confusion_token_rank: point.then_some(if top1 { 1 } else { 2 }),
            top1_confusion: top1,
            consistent_in_top3: point,
        }
    }

    #[test]
    fn point_stats() {
        let s = confusion_point_stats(&[outcome(false, false)]);
        assert_eq!((s.points, s.top1_confusion_frac, s.top3_consistent_frac), (0, None, None));
        let s = confusion_point_stats(&[outcome(true, true), outcome(true, false), outcome(false, false)]);
        assert_eq!(s.points, 2);
        assert_eq!(s.top1_confusion_frac, Some(0.5));
        assert_eq!(s.top3_consistent_frac, Some(1.0));
    }
}
