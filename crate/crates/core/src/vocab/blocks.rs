//! Codepoint range table mapping Unicode blocks (or sub-ranges of them) to
//! token families.
//!
//! A `Latin` entry means Latin *letters*; digits and punctuation inside the
//! Latin blocks are split out as `Symbols`. Codepoints not covered by any
//! entry belong to some other script and default to `LowRes`.

use super::{FamilySet, LanguageFamily};
use crate::{Error, Result};

use LanguageFamily::{Cj, Latin, LowRes, Symbols};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Block {
    pub name: String,
    pub lo: u32,
    pub hi: u32,
    pub family: LanguageFamily,
}

#[derive(Debug, Clone)]
pub struct UnicodeBlockTable {
    blocks: Vec<Block>,
}

const STANDARD: &[(&str, u32, u32, LanguageFamily)] = &[
    ("C0 Controls, ASCII Punctuation and Digits", 0x0000, 0x0040, Symbols),
    ("Basic Latin Uppercase", 0x0041, 0x005A, Latin),
    ("ASCII Punctuation", 0x005B, 0x0060, Symbols),
    ("Basic Latin Lowercase", 0x0061, 0x007A, Latin),
    ("ASCII Punctuation and DEL", 0x007B, 0x007F, Symbols),
    ("C1 Controls and Latin-1 Punctuation", 0x0080, 0x00BF, Symbols),
    ("Latin-1 Letters", 0x00C0, 0x00D6, Latin),
    ("Multiplication Sign", 0x00D7, 0x00D7, Symbols),
    ("Latin-1 Letters", 0x00D8, 0x00F6, Latin),
    ("Division Sign", 0x00F7, 0x00F7, Symbols),
    ("Latin-1 Letters", 0x00F8, 0x00FF, Latin),
    ("Latin Extended-A", 0x0100, 0x017F, Latin),
    ("Latin Extended-B", 0x0180, 0x024F, Latin),
    ("IPA Extensions", 0x0250, 0x02AF, Latin),
    ("Spacing Modifier Letters", 0x02B0, 0x02FF, Symbols),
    ("Combining Diacritical Marks", 0x0300, 0x036F, Symbols),
    ("Greek and Coptic", 0x0370, 0x03FF, LowRes),
    ("Cyrillic", 0x0400, 0x04FF, LowRes),
    ("Cyrillic Supplement", 0x0500, 0x052F, LowRes),
    ("Armenian", 0x0530, 0x058F, LowRes),
    ("Hebrew", 0x0590, 0x05FF, LowRes),
    ("Arabic", 0x0600, 0x06FF, LowRes),
    ("Hangul Jamo", 0x1100, 0x11FF, LowRes),
    ("Latin Extended Additional", 0x1E00, 0x1EFF, Latin),
    ("Greek Extended", 0x1F00, 0x1FFF, LowRes),
    ("General Punctuation", 0x2000, 0x206F, Symbols),
    ("Superscripts and Subscripts", 0x2070, 0x209F, Symbols),
    ("Currency Symbols", 0x20A0, 0x20CF, Symbols),
    ("Combining Marks for Symbols", 0x20D0, 0x20FF, Symbols),
    ("Letterlike Symbols", 0x2100, 0x214F, Symbols),
    ("Number Forms", 0x2150, 0x218F, Symbols),
    ("Arrows", 0x2190, 0x21FF, Symbols),
    ("Mathematical Operators", 0x2200, 0x22FF, Symbols),
    ("Miscellaneous Technical", 0x2300, 0x23FF, Symbols),
    ("Control Pictures through Dingbats", 0x2400, 0x27BF, Symbols),
    ("Math and Arrows Supplements", 0x27C0, 0x2BFF, Symbols),
    ("Latin Extended-C", 0x2C60, 0x2C7F, Latin),
    ("Supplemental Punctuation", 0x2E00, 0x2E7F, Symbols),
    ("CJK Symbols and Punctuation", 0x3000, 0x303F, Symbols),
    ("Hiragana", 0x3040, 0x309F, Cj),
    ("Katakana", 0x30A0, 0x30FF, Cj),
    ("Hangul Compatibility Jamo", 0x3130, 0x318F, LowRes),
    ("Katakana Phonetic Extensions", 0x31F0, 0x31FF, Cj),
    ("Enclosed CJK Letters and Months", 0x3200, 0x32FF, Symbols),
    ("CJK Compatibility", 0x3300, 0x33FF, Symbols),
    ("CJK Unified Ideographs Extension A", 0x3400, 0x4DBF, Cj),
    ("Yijing Hexagram Symbols", 0x4DC0, 0x4DFF, Symbols),
    ("CJK Unified Ideographs", 0x4E00, 0x9FFF, Cj),
    ("Latin Extended-D", 0xA720, 0xA7FF, Latin),
    ("Hangul Jamo Extended-A", 0xA960, 0xA97F, LowRes),
    ("Latin Extended-E", 0xAB30, 0xAB6F, Latin),
    ("Hangul Syllables", 0xAC00, 0xD7AF, LowRes),
    ("Hangul Jamo Extended-B", 0xD7B0, 0xD7FF, LowRes),
    ("Private Use Area", 0xE000, 0xF8FF, Symbols),
    ("CJK Compatibility Ideographs", 0xF900, 0xFAFF, Cj),
    ("Alphabetic Presentation Forms (Latin)", 0xFB00, 0xFB06, Latin),
    ("Variation Selectors", 0xFE00, 0xFE0F, Symbols),
    ("Vertical Forms", 0xFE10, 0xFE1F, Symbols),
    ("Combining Half Marks", 0xFE20, 0xFE2F, Symbols),
    ("CJK Compatibility Forms", 0xFE30, 0xFE4F, Symbols),
    ("Small Form Variants", 0xFE50, 0xFE6F, Symbols),
    ("Zero Width No-Break Space", 0xFEFF, 0xFEFF, Symbols),
    ("Fullwidth Punctuation and Digits", 0xFF01, 0xFF20, Symbols),
    ("Fullwidth Latin Uppercase", 0xFF21, 0xFF3A, Latin),
    ("Fullwidth Punctuation", 0xFF3B, 0xFF40, Symbols),
    ("Fullwidth Latin Lowercase", 0xFF41, 0xFF5A, Latin),
    ("Fullwidth and Halfwidth Punctuation", 0xFF5B, 0xFF65, Symbols),
    ("Halfwidth Katakana", 0xFF66, 0xFF9F, Cj),
    ("Halfwidth Hangul", 0xFFA0, 0xFFDC, LowRes),
    ("Fullwidth Symbols", 0xFFE0, 0xFFEF, Symbols),
    ("Specials", 0xFFF0, 0xFFFF, Symbols),
    ("Mahjong through Symbols and Pictographs Extended-A", 0x1F000, 0x1FAFF, Symbols),
    ("CJK Unified Ideographs Extension B", 0x20000, 0x2A6DF, Cj),
    ("Tags", 0xE0000, 0xE007F, Symbols),
    ("Variation Selectors Supplement", 0xE0100, 0xE01EF, Symbols),
    ("Supplementary Private Use Areas", 0xF0000, 0x10FFFF, Symbols),
];

impl UnicodeBlockTable {
    /// Builds a table, sorting entries by start and rejecting overlaps.
    pub fn new(mut blocks: Vec<Block>) -> Result<Self> {
        blocks.sort_by_key(|b| b.lo);
        for b in &blocks {
            if b.lo > b.hi {
                return Err(Error::config(format!(
                    "block `{}` has lo U+{:04X} > hi U+{:04X}",
                    b.name, b.lo, b.hi
                )));
            }
        }
        for w in blocks.windows(2) {
            if w[1].lo <= w[0].hi {
                return Err(Error::config(format!(
                    "blocks `{}` and `{}` overlap",
                    w[0].name, w[1].name
                )));
            }
        }
        Ok(Self { blocks })
    }

    pub fn standard() -> Self {
        let blocks = STANDARD
            .iter()
            .map(|&(name, lo, hi, family)| Block {
                name: name.to_string(),
                lo,
                hi,
                family,
            })
            .collect();
        Self::new(blocks).expect("standard block table is well formed")
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    fn find(&self, cp: u32) -> Option<&Block> {
        let i = self.blocks.partition_point(|b| b.hi < cp);
        self.blocks.get(i).filter(|b| b.lo <= cp)
    }

    /// Character class of a codepoint; uncovered codepoints are `LowRes`.
    pub fn family_of(&self, cp: u32) -> LanguageFamily {
        self.find(cp).map_or(LanguageFamily::LowRes, |b| b.family)
    }

    pub fn family_of_char(&self, c: char) -> LanguageFamily {
        self.family_of(c as u32)
    }

    /// Every class touched by the inclusive range `lo..=hi`, gaps included.
    pub fn families_in_range(&self, lo: u32, hi: u32) -> FamilySet {
        let mut set = FamilySet::EMPTY;
        let mut cursor = lo;
        let start = self.blocks.partition_point(|b| b.hi < lo);
        for b in &self.blocks[start..] {
            if b.lo > hi {
                break;
            }
            if b.lo > cursor {
                set.insert(LanguageFamily::LowRes);
            }
            set.insert(b.family);
            cursor = b.hi.saturating_add(1);
            if b.hi >= hi {
                return set;
            }
        }
        if cursor <= hi {
            set.insert(LanguageFamily::LowRes);
        }
        set
    }

    pub fn overlaps_family(&self, lo: u32, hi: u32, family: LanguageFamily) -> bool {
        let start = self.blocks.partition_point(|b| b.hi < lo);
        self.blocks[start..]
            .iter()
            .take_while(|b| b.lo <= hi)
            .any(|b| b.family == family)
    }
}

impl Default for UnicodeBlockTable {
    fn default() -> Self {
        Self::standard()
    }
}
