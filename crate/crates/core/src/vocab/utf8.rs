//! Splitting raw token bytes into UTF-8 units and bounding the codepoints a
//! truncated multi-byte character could complete to.

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Utf8Unit {
    Char(char),
    /// A well-formed start of a multi-byte character that ends before the
    /// character completes. Only ever the final unit.
    LeftPartial(Vec<u8>),
    Invalid(u8),
}

impl Utf8Unit {
    pub fn byte_len(&self) -> usize {
        match self {
            Utf8Unit::Char(c) => c.len_utf8(),
            Utf8Unit::LeftPartial(b) => b.len(),
            Utf8Unit::Invalid(_) => 1,
        }
    }
}

/// Decodes `bytes` into complete characters, a trailing left-partial unit,
/// and invalid bytes. Never fails.
pub fn decode_utf8_units(bytes: &[u8]) -> Vec<Utf8Unit> {
    let mut units = Vec::with_capacity(bytes.len());
    let mut rest = bytes;
    while !rest.is_empty() {
        match std::str::from_utf8(rest) {
            Ok(s) => {
                units.extend(s.chars().map(Utf8Unit::Char));
                break;
            }
            Err(e) => {
                let (valid, after) = rest.split_at(e.valid_up_to());
                let valid = std::str::from_utf8(valid).expect("prefix validated by from_utf8");
                units.extend(valid.chars().map(Utf8Unit::Char));
                match e.error_len() {
                    Some(n) => {
                        units.extend(after[..n].iter().map(|&b| Utf8Unit::Invalid(b)));
                        rest = &after[n..];
                    }
                    None => {
                        units.push(Utf8Unit::LeftPartial(after.to_vec()));
                        break;
                    }
                }
            }
        }
    }
    units
}

/// Total length of the sequence a lead byte starts, for valid multi-byte leads.
fn sequence_len(lead: u8) -> Option<usize> {
    match lead {
        0xC2..=0xDF => Some(2),
        0xE0..=0xEF => Some(3),
        0xF0..=0xF4 => Some(4),
        _ => None,
    }
}

/// Allowed range of the byte right after `lead` (excludes overlongs,
/// surrogates and codepoints past U+10FFFF).
fn second_byte_range(lead: u8) -> (u8, u8) {
    match lead {
        0xE0 => (0xA0, 0xBF),
        0xED => (0x80, 0x9F),
        0xF0 => (0x90, 0xBF),
        0xF4 => (0x80, 0x8F),
        _ => (0x80, 0xBF),
    }
}

fn assemble(seq: &[u8]) -> u32 {
    let lead_bits = match seq.len() {
        2 => 0x1F,
        3 => 0x0F,
        _ => 0x07,
    };
    seq[1..]
        .iter()
        .fold((seq[0] & lead_bits) as u32, |cp, &b| (cp << 6) | (b & 0x3F) as u32)
}

/// Inclusive codepoint range reachable by completing a left-partial prefix,
/// or `None` when no well-formed character starts with `prefix`.
pub fn infer_partial_bounds(prefix: &[u8]) -> Option<(u32, u32)> {
    let lead = *prefix.first()?;
    let total = sequence_len(lead)?;
    if prefix.len() >= total {
        return None;
    }
    let (second_lo, second_hi) = second_byte_range(lead);
    for (i, &b) in prefix.iter().enumerate().skip(1) {
        let ok = if i == 1 {
            (second_lo..=second_hi).contains(&b)
        } else {
            (0x80..=0xBF).contains(&b)
        };
        if !ok {
            return None;
        }
    }

    let mut lo = prefix.to_vec();
    let mut hi = prefix.to_vec();
    for i in prefix.len()..total {
        if i == 1 {
            lo.push(second_lo);
            hi.push(second_hi);
        } else {
            lo.push(0x80);
            hi.push(0xBF);
        }
    }
    Some((assemble(&lo), assemble(&hi)))
}
