//! Pseudo-targets for gate training.
//!
//! A step's target marks every family that has at least one token inside the
//! top-k/top-p set of a recorded distribution. Which distribution is used is
//! a [`TargetSource`]: the norm-adjusted one (default) or the raw one, for the
//! unadjusted ablation.

use std::collections::BTreeMap;

use crate::models::TraceStep;
use crate::vocab::{FamilySet, LanguageFamily, TokenId, VocabClassification};

/// Four binary indicators in family order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PseudoTarget(FamilySet);

impl PseudoTarget {
    pub fn from_families(families: FamilySet) -> Self {
        Self(families)
    }

    pub fn families(self) -> FamilySet {
        self.0
    }

    pub fn get(self, f: LanguageFamily) -> bool {
        self.0.contains(f)
    }

    pub fn values(self) -> [f64; 4] {
        std::array::from_fn(|i| {
            if self.0.contains(LanguageFamily::ALL[i]) {
                1.0
            } else {
                0.0
            }
        })
    }
}

/// The sparse list stops before the top-k/top-p set is determined.
#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
#[error("sparse distribution holds {entries} entries with mass {mass:.6}; cannot form the candidate set")]
pub struct Truncated {
    pub entries: usize,
    pub mass: f64,
}

/// Builds the target from a sparse `(id, prob)` list whose probabilities
/// are normalized over the full vocabulary. The candidate set follows the
/// decoding rule at temperature 1: at most `k` ids, stopping at the first
/// prefix whose cumulative probability reaches `p`.
pub fn pseudo_target(
    sparse: &[(TokenId, f32)],
    classes: &VocabClassification,
    k: usize,
    p: f64,
) -> Result<PseudoTarget, Truncated> {
    let mut sorted: Vec<(TokenId, f64)> = sparse.iter().map(|&(id, q)| (id, q as f64)).collect();
    sorted.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));

    let mut families = FamilySet::EMPTY;
    let mut cum = 0.0;
    for (n, &(id, q)) in sorted.iter().enumerate() {
        if n == k {
            return Ok(PseudoTarget(families));
        }
        families.insert(classes.family(id));
        cum += q;
        if cum >= p {
            return Ok(PseudoTarget(families));
        }
    }
    if sorted.len() >= k {
        return Ok(PseudoTarget(families));
    }
    Err(Truncated {
        entries: sorted.len(),
        mass: cum,
    })
}

/// Chooses which recorded distribution pseudo-targets are built from.
pub trait TargetSource: Send + Sync {
    fn name(&self) -> &str;

    fn distribution<'a>(&self, step: &'a TraceStep) -> &'a [(TokenId, f32)];
}

pub struct AdjustedTargets;

impl TargetSource for AdjustedTargets {
    fn name(&self) -> &str {
        "adjusted"
    }

    fn distribution<'a>(&self, step: &'a TraceStep) -> &'a [(TokenId, f32)] {
        &step.adjusted_top
    }
}

pub struct RawTargets;

impl TargetSource for RawTargets {
    fn name(&self) -> &str {
        "unadjusted"
    }

    fn distribution<'a>(&self, step: &'a TraceStep) -> &'a [(TokenId, f32)] {
        &step.raw_top
    }
}

/// Target sources by name.
pub struct TargetRegistry {
    sources: BTreeMap<String, Box<dyn TargetSource>>,
}

impl TargetRegistry {
    pub fn empty() -> Self {
        Self {
            sources: BTreeMap::new(),
        }
    }

    pub fn register(&mut self, source: Box<dyn TargetSource>) {
        self.sources.insert(source.name().to_string(), source);
    }

    pub fn get(&self, name: &str) -> Option<&dyn TargetSource> {
        self.sources.get(name).map(|s| s.as_ref())
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.sources.keys().map(String::as_str)
    }
}

impl Default for TargetRegistry {
    fn default() -> Self {
        let mut r = Self::empty();
        r.register(Box::new(AdjustedTargets));
        r.register(Box::new(RawTargets));
        r
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use LanguageFamily::*;

    fn four() -> VocabClassification {
        VocabClassification::from_families(vec![Cj, Latin, Symbols, LowRes])
    }

    #[test]
    fn prefix_rule_example() {
        let sparse = [(0, 0.7), (1, 0.2), (2, 0.05), (3, 0.05)];
        let y = pseudo_target(&sparse, &four(), 2, 0.99).unwrap();
        assert_eq!(y.values(), [1.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn singleton_latin() {
        let y = pseudo_target(&[(1, 1.0)], &four(), 20, 0.95).unwrap();
        assert_eq!(y.values(), [0.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn everything_present() {
        let sparse = [(3, 0.4), (0, 0.3), (2, 0.2), (1, 0.1)];
        let y = pseudo_target(&sparse, &four(), 4, 1.0).unwrap();
        assert_eq!(y.families(), FamilySet::ALL);
        // same list, fewer families reachable
        let y = pseudo_target(&sparse[..2], &four(), 2, 1.0).unwrap();
        assert_eq!(y.families(), [LowRes, Cj].into_iter().collect());
    }

    #[test]
    fn truncated_lists_are_flagged() {
        let err = pseudo_target(&[(0, 0.5), (1, 0.3)], &four(), 20, 0.95).unwrap_err();
        assert_eq!(err.entries, 2);
        assert!((err.mass - 0.8).abs() < 1e-6);
        // enough entries to cover k is never truncated
        assert!(pseudo_target(&[(0, 0.5), (1, 0.3)], &four(), 2, 0.95).is_ok());
        // or enough mass
        assert!(pseudo_target(&[(0, 0.96)], &four(), 20, 0.95).is_ok());
    }

    #[test]
    fn registry_has_both_sources() {
        let r = TargetRegistry::default();
        let names: Vec<_> = r.names().collect();
        assert_eq!(names, ["adjusted", "unadjusted"]);
        assert!(r.get("nope").is_none());
    }
}
