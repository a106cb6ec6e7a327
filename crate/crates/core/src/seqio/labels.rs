use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Canonical residues in one-hot index order.
pub const CANONICAL_RESIDUES: &[u8; 20] = b"ACDEFGHIKLMNPQRSTVWY";
/// Accepted ambiguous or non-standard residues; encoded as all-zero rows.
pub const AMBIGUOUS_RESIDUES: &[u8; 5] = b"XBZUO";

/// One-hot column of a canonical residue, `None` for ambiguous letters.
pub fn residue_index(residue: u8) -> Option<usize> {
    CANONICAL_RESIDUES.iter().position(|&r| r == residue)
}

pub fn is_valid_residue(residue: u8) -> bool {
    CANONICAL_RESIDUES.contains(&residue) || AMBIGUOUS_RESIDUES.contains(&residue)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum OrganismGroup {
    Eukarya,
    GramPositive,
    GramNegative,
    Archaea,
    Unknown,
}

impl OrganismGroup {
    pub const ALL: [OrganismGroup; 5] = [
        OrganismGroup::Eukarya,
        OrganismGroup::GramPositive,
        OrganismGroup::GramNegative,
        OrganismGroup::Archaea,
        OrganismGroup::Unknown,
    ];

    pub const KNOWN: [OrganismGroup; 4] = [
        OrganismGroup::Eukarya,
        OrganismGroup::GramPositive,
        OrganismGroup::GramNegative,
        OrganismGroup::Archaea,
    ];

    pub fn name(self) -> &'static str {
        match self {
            OrganismGroup::Eukarya => "EUKARYA",
            OrganismGroup::GramPositive => "GRAM_POSITIVE",
            OrganismGroup::GramNegative => "GRAM_NEGATIVE",
            OrganismGroup::Archaea => "ARCHAEA",
            OrganismGroup::Unknown => "UNKNOWN",
        }
    }

    /// Column in the 4-wide group one-hot; `Unknown` has none.
    pub fn one_hot_index(self) -> Option<usize> {
        match self {
            OrganismGroup::Unknown => None,
            g => Some(g as usize),
        }
    }
}

impl fmt::Display for OrganismGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for OrganismGroup {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|g| g.name() == s)
            .ok_or_else(|| format!("unknown organism group '{s}'"))
    }
}

/// Signal peptide type; index order is the class index used by the model.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SpType {
    NoSp,
    SecSpi,
    SecSpii,
    SecSpiii,
    TatSpi,
    TatSpii,
}

pub const NUM_TYPES: usize = 6;

impl SpType {
    pub const ALL: [SpType; NUM_TYPES] = [
        SpType::NoSp,
        SpType::SecSpi,
        SpType::SecSpii,
        SpType::SecSpiii,
        SpType::TatSpi,
        SpType::TatSpii,
    ];

    /// The five signal peptide classes.
    pub const SIGNAL: [SpType; 5] = [
        SpType::SecSpi,
        SpType::SecSpii,
        SpType::SecSpiii,
        SpType::TatSpi,
        SpType::TatSpii,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            SpType::NoSp => "NO_SP",
            SpType::SecSpi => "SEC_SPI",
            SpType::SecSpii => "SEC_SPII",
            SpType::SecSpiii => "SEC_SPIII",
            SpType::TatSpi => "TAT_SPI",
            SpType::TatSpii => "TAT_SPII",
        }
    }

    pub fn is_signal(self) -> bool {
        self != SpType::NoSp
    }

    /// Residue tag marking this type's signal region.
    pub fn signal_tag(self) -> Option<RegionLabel> {
        match self {
            SpType::NoSp => None,
            SpType::SecSpi => Some(RegionLabel::SigSpi),
            SpType::SecSpii => Some(RegionLabel::SigSpii),
            SpType::SecSpiii => Some(RegionLabel::SigSpiii),
            SpType::TatSpi => Some(RegionLabel::SigTati),
            SpType::TatSpii => Some(RegionLabel::SigTatii),
        }
    }
}

impl fmt::Display for SpType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SpType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| format!("unknown signal peptide type '{s}'"))
    }
}

/// Per-residue region tag. `Pad` marks positions past the sequence end.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RegionLabel {
    SigSpi,
    SigSpii,
    SigSpiii,
    SigTati,
    SigTatii,
    Cleavage,
    Intra,
    Tm,
    Extra,
    Globular,
    Pad,
}

pub const NUM_REGIONS: usize = 11;

impl RegionLabel {
    pub const ALL: [RegionLabel; NUM_REGIONS] = [
        RegionLabel::SigSpi,
        RegionLabel::SigSpii,
        RegionLabel::SigSpiii,
        RegionLabel::SigTati,
        RegionLabel::SigTatii,
        RegionLabel::Cleavage,
        RegionLabel::Intra,
        RegionLabel::Tm,
        RegionLabel::Extra,
        RegionLabel::Globular,
        RegionLabel::Pad,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    /// Annotation-file character; `Pad` never appears in files.
    pub fn to_char(self) -> Option<char> {
        Some(match self {
            RegionLabel::SigSpi => 'S',
            RegionLabel::SigSpii => 'L',
            RegionLabel::SigSpiii => 'P',
            RegionLabel::SigTati => 'T',
            RegionLabel::SigTatii => 'W',
            RegionLabel::Cleavage => 'C',
            RegionLabel::Intra => 'I',
            RegionLabel::Tm => 'M',
            RegionLabel::Extra => 'O',
            RegionLabel::Globular => 'G',
            RegionLabel::Pad => return None,
        })
    }

    pub fn from_char(c: char) -> Option<Self> {
        Self::ALL[..10].iter().copied().find(|l| l.to_char() == Some(c))
    }

    /// One of the five type-specific signal tags.
    pub fn is_signal(self) -> bool {
        self.index() < 5
    }

    /// Part of the N-terminal signal block (signal tags or the cleavage tag).
    pub fn in_signal_block(self) -> bool {
        self.index() <= RegionLabel::Cleavage.index()
    }

    /// Signal peptide type a signal tag belongs to.
    pub fn sp_type(self) -> Option<SpType> {
        match self {
            RegionLabel::SigSpi => Some(SpType::SecSpi),
            RegionLabel::SigSpii => Some(SpType::SecSpii),
            RegionLabel::SigSpiii => Some(SpType::SecSpiii),
            RegionLabel::SigTati => Some(SpType::TatSpi),
            RegionLabel::SigTatii => Some(SpType::TatSpii),
            _ => None,
        }
    }
}
