//! Token family classification.
//!
//! Each token is decoded from its raw bytes. Complete characters are looked
//! up in a [`UnicodeBlockTable`]; a trailing incomplete character is bounded
//! to the codepoint range it could complete to and classified by which blocks
//! that range touches.

mod blocks;
mod family;
pub mod file;
mod utf8;

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

pub use blocks::{Block, UnicodeBlockTable};
pub use family::{FamilySet, LanguageFamily};
pub use utf8::{decode_utf8_units, infer_partial_bounds, Utf8Unit};

use crate::{Error, Result};

pub type TokenId = u32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenEntry {
    pub id: TokenId,
    pub bytes: Vec<u8>,
}

impl TokenEntry {
    pub fn new(id: TokenId, bytes: impl Into<Vec<u8>>) -> Self {
        Self {
            id,
            bytes: bytes.into(),
        }
    }
}

/// Prioritized decision over the set of character classes present:
/// any CJ wins, then Latin letters (optionally mixed with symbols), then
/// pure symbols; anything else is low-resource.
fn decide(classes: FamilySet) -> LanguageFamily {
    use LanguageFamily::*;
    if classes.contains(Cj) {
        Cj
    } else if classes.contains(Latin) && classes.is_subset([Latin, Symbols].into_iter().collect()) {
        Latin
    } else if classes.is_subset(FamilySet::single(Symbols)) {
        Symbols
    } else {
        LowRes
    }
}

pub fn classify_codepoints(table: &UnicodeBlockTable, chars: &[char]) -> LanguageFamily {
    decide(chars.iter().map(|&c| table.family_of_char(c)).collect())
}

/// Classifies one token from its raw bytes.
///
/// A left-partial tail is bounded with [`infer_partial_bounds`]. If the bound
/// range overlaps a CJ block the token is CJ (for prefixes of two or more
/// bytes; a lone lead byte only counts when its whole range is CJ). Otherwise
/// each class the range could complete to is tried together with the
/// complete characters; if every choice gives the same family that family is
/// used, else the token falls back to `Symbols`. Invalid bytes count as
/// symbols.
pub fn classify_token(table: &UnicodeBlockTable, bytes: &[u8]) -> LanguageFamily {
    let mut classes = FamilySet::EMPTY;
    let mut partial: Option<(usize, FamilySet)> = None;
    for unit in decode_utf8_units(bytes) {
        match unit {
            Utf8Unit::Char(c) => classes.insert(table.family_of_char(c)),
            Utf8Unit::Invalid(_) => classes.insert(LanguageFamily::Symbols),
            Utf8Unit::LeftPartial(prefix) => match infer_partial_bounds(&prefix) {
                Some((lo, hi)) => {
                    partial = Some((prefix.len(), table.families_in_range(lo, hi)));
                }
                None => classes.insert(LanguageFamily::Symbols),
            },
        }
    }

    let Some((prefix_len, range)) = partial else {
        return decide(classes);
    };
    if classes.contains(LanguageFamily::Cj) {
        return LanguageFamily::Cj;
    }
    if range.contains(LanguageFamily::Cj) && (prefix_len >= 2 || range.len() == 1) {
        return LanguageFamily::Cj;
    }
    let mut outcomes = range.iter().map(|c| decide(classes.union(FamilySet::single(c))));
    let first = outcomes.next().unwrap_or(LanguageFamily::Symbols);
    if outcomes.all(|f| f == first) {
        first
    } else {
        LanguageFamily::Symbols
    }
}

/// Family of every token id, with per-family counts.
#[derive(Debug, Clone, PartialEq)]
pub struct VocabClassification {
    families: Vec<LanguageFamily>,
    counts: [usize; 4],
}

impl VocabClassification {
    /// Builds from a dense per-id family list.
    pub fn from_families(families: Vec<LanguageFamily>) -> Self {
        let mut counts = [0; 4];
        for f in &families {
            counts[f.index()] += 1;
        }
        Self { families, counts }
    }

    pub fn len(&self) -> usize {
        self.families.len()
    }

    pub fn is_empty(&self) -> bool {
        self.families.is_empty()
    }

    pub fn family(&self, id: TokenId) -> LanguageFamily {
        self.families[id as usize]
    }

    pub fn get(&self, id: TokenId) -> Option<LanguageFamily> {
        self.families.get(id as usize).copied()
    }

    pub fn families(&self) -> &[LanguageFamily] {
        &self.families
    }

    pub fn count(&self, family: LanguageFamily) -> usize {
        self.counts[family.index()]
    }

    pub fn counts(&self) -> BTreeMap<LanguageFamily, usize> {
        LanguageFamily::ALL
            .iter()
            .map(|&f| (f, self.count(f)))
            .collect()
    }

    /// Ids belonging to `family`, ascending.
    pub fn members(&self, family: LanguageFamily) -> impl Iterator<Item = TokenId> + '_ {
        self.families
            .iter()
            .enumerate()
            .filter(move |(_, &f)| f == family)
            .map(|(i, _)| i as TokenId)
    }

    /// Families present among `ids`.
    pub fn families_of(&self, ids: &[TokenId]) -> FamilySet {
        ids.iter().map(|&id| self.family(id)).collect()
    }
}

/// Classifies a whole vocabulary. Ids must be unique and cover `0..n`.
pub fn classify_vocabulary(
    table: &UnicodeBlockTable,
    entries: &[TokenEntry],
) -> Result<VocabClassification> {
    let mut seen = HashSet::with_capacity(entries.len());
    for e in entries {
        if !seen.insert(e.id) {
            return Err(Error::DuplicateId(e.id));
        }
    }
    let n = entries.len();
    let mut families = vec![None; n];
    for e in entries {
        let slot = families
            .get_mut(e.id as usize)
            .ok_or_else(|| Error::MissingId((0..n as u32).find(|i| !seen.contains(i)).unwrap_or(0)))?;
        *slot = Some(classify_token(table, &e.bytes));
    }
    let families = families
        .into_iter()
        .map(|f| f.expect("ids are unique and in range, so every slot is filled"))
        .collect();
    Ok(VocabClassification::from_families(families))
}
