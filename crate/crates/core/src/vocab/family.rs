use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// One of the four mutually exclusive token families.
///
/// The declaration order is the gate's output order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LanguageFamily {
    Cj,
    Latin,
    Symbols,
    LowRes,
}

impl LanguageFamily {
    pub const ALL: [LanguageFamily; 4] = [
        LanguageFamily::Cj,
        LanguageFamily::Latin,
        LanguageFamily::Symbols,
        LanguageFamily::LowRes,
    ];

    pub const fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub const fn as_str(self) -> &'static str {
        match self {
            LanguageFamily::Cj => "cj",
            LanguageFamily::Latin => "latin",
            LanguageFamily::Symbols => "symbols",
            LanguageFamily::LowRes => "lowres",
        }
    }

    /// Only CJ and Latin tokens are ever candidates for masking.
    pub const fn maskable(self) -> bool {
        matches!(self, LanguageFamily::Cj | LanguageFamily::Latin)
    }
}

impl fmt::Display for LanguageFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LanguageFamily {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "cj" => Ok(LanguageFamily::Cj),
            "latin" => Ok(LanguageFamily::Latin),
            "symbols" | "symbol" => Ok(LanguageFamily::Symbols),
            "lowres" | "low-res" => Ok(LanguageFamily::LowRes),
            other => Err(format!("unknown language family `{other}`")),
        }
    }
}

/// A set of families packed into four bits.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct FamilySet(u8);

impl FamilySet {
    pub const EMPTY: FamilySet = FamilySet(0);
    pub const ALL: FamilySet = FamilySet(0b1111);
    pub const MASKABLE: FamilySet = FamilySet(0b0011);
    pub const NEVER_MASKED: FamilySet = FamilySet(0b1100);

    pub fn single(f: LanguageFamily) -> Self {
        FamilySet(1 << f.index())
    }

    pub fn insert(&mut self, f: LanguageFamily) {
        self.0 |= 1 << f.index();
    }

    pub fn contains(self, f: LanguageFamily) -> bool {
        self.0 & (1 << f.index()) != 0
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn union(self, other: FamilySet) -> FamilySet {
        FamilySet(self.0 | other.0)
    }

    pub fn intersection(self, other: FamilySet) -> FamilySet {
        FamilySet(self.0 & other.0)
    }

    pub fn difference(self, other: FamilySet) -> FamilySet {
        FamilySet(self.0 & !other.0)
    }

    pub fn is_subset(self, other: FamilySet) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn iter(self) -> impl Iterator<Item = LanguageFamily> {
        LanguageFamily::ALL
            .into_iter()
            .filter(move |f| self.contains(*f))
    }
}

impl FromIterator<LanguageFamily> for FamilySet {
    fn from_iter<I: IntoIterator<Item = LanguageFamily>>(iter: I) -> Self {
        let mut set = FamilySet::EMPTY;
        for f in iter {
            set.insert(f);
        }
        set
    }
}

impl fmt::Debug for FamilySet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.iter()).finish()
    }
}

impl Serialize for FamilySet {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(self.iter())
    }
}

impl<'de> Deserialize<'de> for FamilySet {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let v = Vec::<LanguageFamily>::deserialize(d)?;
        Ok(v.into_iter().collect())
    }
}
