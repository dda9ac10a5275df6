//! Greedy speculative decoding with the gate applied at verification.
//!
//! The draft proposes `gamma` tokens by plain argmax. The target then checks
//! each position in turn: its hidden state feeds the gate, the gated argmax
//! is computed with the normal rules, and the draft token is accepted while it
//! matches. The first mismatch is replaced by the gated argmax; if every
//! proposal is accepted the target's next gated token is emitted as a bonus.
//! The result is token-for-token the autoregressive gated greedy decode.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{gated_step, DecodeState, RuleConfig};
use crate::gate::GateParams;
use crate::models::StepModel;
use crate::sampling::{candidate_set, SamplingParams};
use crate::vocab::{TokenId, VocabClassification};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpecMode {
    #[default]
    Greedy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpecOutput {
    pub tokens: Vec<TokenId>,
    pub proposed: usize,
    pub accepted: usize,
    /// Verification rounds, each one target pass over up to `gamma + 1`
    /// positions.
    pub rounds: usize,
}

impl SpecOutput {
    pub fn acceptance_rate(&self) -> Option<f64> {
        (self.proposed > 0).then(|| self.accepted as f64 / self.proposed as f64)
    }
}

#[allow(clippy::too_many_arguments)]
pub fn speculative_decode<R: Rng + ?Sized>(
    draft: &dyn StepModel,
    target: &dyn StepModel,
    classes: &VocabClassification,
    gate: &GateParams,
    rules: &RuleConfig,
    gamma: usize,
    mode: SpecMode,
    prompt: &[TokenId],
    rng: &mut R,
    max_steps: usize,
) -> Result<SpecOutput> {
    let SpecMode::Greedy = mode;
    if gamma == 0 || max_steps == 0 {
        return Err(Error::config("gamma and max_steps must be at least 1"));
    }
    if draft.vocab() != target.vocab() {
        return Err(Error::Model(format!(
            "draft `{}` and target `{}` do not share a vocabulary",
            draft.name(),
            target.name()
        )));
    }
    if target.vocab_size() != classes.len() {
        return Err(Error::LengthMismatch {
            what: "vocabulary",
            expected: classes.len(),
            got: target.vocab_size(),
        });
    }
    gate.check_input(target.d_in())?;

    let greedy = SamplingParams::greedy();
    let mut state = DecodeState::from_prompt(prompt, classes);
    let mut out = SpecOutput {
        tokens: Vec::with_capacity(max_steps),
        proposed: 0,
        accepted: 0,
        rounds: 0,
    };

    while out.tokens.len() < max_steps {
        let n = gamma.min(max_steps - out.tokens.len());
        let mut ctx = state.context.clone();
        let mut proposal = Vec::with_capacity(n);
        for _ in 0..n {
            let logits = draft.step(&ctx)?.logits;
            let t = candidate_set(&logits, &greedy)
                .top()
                .ok_or_else(|| Error::Model("draft produced no finite logits".into()))?;
            proposal.push(t);
            ctx.push(t);
        }
        out.proposed += n;
        out.rounds += 1;

        // one target position per proposal plus the bonus position
        let mut all_accepted = true;
        for &t in &proposal {
            let o = gated_step(&target.step(&state.context)?, gate, &state, &greedy, rules, classes, rng)?;
            state.push(o.token_id, o.family);
            out.tokens.push(o.token_id);
            if o.token_id != t {
                all_accepted = false;
                break;
            }
            out.accepted += 1;
        }
        if all_accepted && out.tokens.len() < max_steps {
            let o = gated_step(&target.step(&state.context)?, gate, &state, &greedy, rules, classes, rng)?;
            state.push(o.token_id, o.family);
            out.tokens.push(o.token_id);
        }
    }
    Ok(out)
}
