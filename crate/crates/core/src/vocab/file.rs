//! Vocabulary and classification files (JSON Lines).
//!
//! Vocabulary records: `{"id": 17, "bytes_hex": "e4b8ad", "norm": 1.25}`
//! with `norm` optional. Classification output: one `{"id", "family"}`
//! record per token followed by a `{"summary": {"counts": ...}}` record.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{LanguageFamily, TokenEntry, TokenId, VocabClassification};
use crate::io::{read_jsonl, to_jsonl, write_atomic};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VocabRecord {
    pub id: TokenId,
    pub bytes_hex: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub norm: Option<f32>,
}

/// A loaded vocabulary file.
#[derive(Debug, Clone, PartialEq)]
pub struct VocabFile {
    pub entries: Vec<TokenEntry>,
    /// Present only when every record carries a norm.
    pub norms: Option<Vec<f64>>,
}

pub fn read_vocab(path: &Path) -> Result<VocabFile> {
    let records: Vec<VocabRecord> = read_jsonl(path)?;
    if records.is_empty() {
        return Err(Error::parse(path, 0, "vocabulary file is empty"));
    }
    let mut entries = Vec::with_capacity(records.len());
    let mut norms = Vec::with_capacity(records.len());
    for (i, r) in records.iter().enumerate() {
        let bytes = hex::decode(&r.bytes_hex)
            .map_err(|e| Error::parse(path, i + 1, format!("field `bytes_hex`: {e}")))?;
        entries.push(TokenEntry { id: r.id, bytes });
        if let Some(n) = r.norm {
            norms.push(n as f64);
        }
    }
    // norms are indexed by id, so reorder when the file is not sorted
    let norms = (norms.len() == records.len()).then(|| {
        let mut by_id: Vec<(TokenId, f64)> = records.iter().map(|r| r.id).zip(norms).collect();
        by_id.sort_by_key(|&(id, _)| id);
        by_id.into_iter().map(|(_, n)| n).collect()
    });
    Ok(VocabFile { entries, norms })
}

pub fn vocab_records(entries: &[TokenEntry], norms: Option<&[f64]>) -> Vec<VocabRecord> {
    entries
        .iter()
        .map(|e| VocabRecord {
            id: e.id,
            bytes_hex: hex::encode(&e.bytes),
            norm: norms.map(|n| n[e.id as usize] as f32),
        })
        .collect()
}

pub fn write_vocab(path: &Path, entries: &[TokenEntry], norms: Option<&[f64]>) -> Result<()> {
    write_atomic(path, &to_jsonl(&vocab_records(entries, norms))?)
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum ClassRecord {
    Token { id: TokenId, family: LanguageFamily },
    Summary { summary: Summary },
}

#[derive(Serialize, Deserialize)]
struct Summary {
    total: usize,
    counts: BTreeMap<LanguageFamily, usize>,
}

pub fn classification_jsonl(classes: &VocabClassification) -> Result<Vec<u8>> {
    let mut records: Vec<ClassRecord> = classes
        .families()
        .iter()
        .enumerate()
        .map(|(id, &family)| ClassRecord::Token {
            id: id as TokenId,
            family,
        })
        .collect();
    records.push(ClassRecord::Summary {
        summary: Summary {
            total: classes.len(),
            counts: classes.counts(),
        },
    });
    to_jsonl(&records)
}

pub fn write_classification(path: &Path, classes: &VocabClassification) -> Result<()> {
    write_atomic(path, &classification_jsonl(classes)?)
}

/// Reads a classification file; the trailing summary is checked against the
/// token records.
pub fn read_classification(path: &Path) -> Result<VocabClassification> {
    let records: Vec<ClassRecord> = read_jsonl(path)?;
    let mut families: Vec<Option<LanguageFamily>> = Vec::new();
    let mut summary = None;
    for (line, r) in records.into_iter().enumerate() {
        match r {
            ClassRecord::Token { id, family } => {
                let i = id as usize;
                if families.len() <= i {
                    families.resize(i + 1, None);
                }
                if families[i].replace(family).is_some() {
                    return Err(Error::parse(path, line + 1, format!("duplicate id {id}")));
                }
            }
            ClassRecord::Summary { summary: s } => summary = Some(s),
        }
    }
    let families = families
        .into_iter()
        .enumerate()
        .map(|(i, f)| f.ok_or(Error::MissingId(i as TokenId)))
        .collect::<Result<Vec<_>>>()?;
    let classes = VocabClassification::from_families(families);
    if let Some(s) = summary {
        if s.total != classes.len() || s.counts != classes.counts() {
            return Err(Error::parse(path, 0, "summary counts disagree with token records"));
        }
    }
    Ok(classes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vocab::{classify_vocabulary, UnicodeBlockTable};

    #[test]
    fn vocab_and_classification_files() {
        let dir = tempfile::tempdir().unwrap();
        let entries: Vec<_> = ["中", "the", "!", "א"]
            .iter()
            .enumerate()
            .map(|(i, s)| TokenEntry::new(i as u32, s.as_bytes()))
            .collect();
        let vocab = dir.path().join("vocab.jsonl");
        write_vocab(&vocab, &entries, Some(&[1.5, 1.0, 0.5, 0.25])).unwrap();
        let text = std::fs::read_to_string(&vocab).unwrap();
        assert!(text.starts_with(r#"{"id":0,"bytes_hex":"e4b8ad","norm":1.5}"#));
        let back = read_vocab(&vocab).unwrap();
        assert_eq!(back.entries, entries);
        assert_eq!(back.norms.unwrap(), vec![1.5, 1.0, 0.5, 0.25]);

        let classes = classify_vocabulary(&UnicodeBlockTable::standard(), &back.entries).unwrap();
        let out = dir.path().join("classes.jsonl");
        write_classification(&out, &classes).unwrap();
        let text = std::fs::read_to_string(&out).unwrap();
        let last = text.lines().last().unwrap();
        assert_eq!(
            last,
            r#"{"summary":{"total":4,"counts":{"cj":1,"latin":1,"symbols":1,"lowres":1}}}"#
        );
        assert_eq!(read_classification(&out).unwrap(), classes);
    }

    #[test]
    fn malformed_hex_names_line() {
        let dir = tempfile::tempdir().unwrap();
        let vocab = dir.path().join("vocab.jsonl");
        std::fs::write(&vocab, "{\"id\":0,\"bytes_hex\":\"61\"}\n{\"id\":1,\"bytes_hex\":\"zz\"}\n").unwrap();
        let err = read_vocab(&vocab).unwrap_err().to_string();
        assert!(err.contains(":2:"), "{err}");
        assert!(err.contains("bytes_hex"), "{err}");
    }
}
