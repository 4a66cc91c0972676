use std::fmt;
use std::str::FromStr;

use thiserror::Error;

/// A DICOM attribute identifier: a (group, element) pair of 16-bit numbers.
///
/// The canonical text form is `(GGGG,EEEE)` with uppercase, zero-padded hex.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Tag {
    pub group: u16,
    pub element: u16,
}

impl Tag {
    pub const fn new(group: u16, element: u16) -> Self {
        Tag { group, element }
    }

    /// Tags with an odd group number belong to private (vendor) dictionaries.
    pub fn is_private(&self) -> bool {
        self.group % 2 == 1
    }

    /// Group-length elements carry element number 0x0000.
    pub fn is_group_length(&self) -> bool {
        self.element == 0x0000
    }

    /// Item / delimiter tags from the 0xFFFE group are structural markers,
    /// not data elements.
    pub fn is_delimiter(&self) -> bool {
        self.group == 0xFFFE
    }
}

pub const ITEM: Tag = Tag::new(0xFFFE, 0xE000);
pub const ITEM_DELIMITER: Tag = Tag::new(0xFFFE, 0xE00D);
pub const SEQUENCE_DELIMITER: Tag = Tag::new(0xFFFE, 0xE0DD);

impl fmt::Display for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({:04X},{:04X})", self.group, self.element)
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("malformed tag literal {0:?}, expected (GGGG,EEEE)")]
pub struct TagParseError(pub String);

impl FromStr for Tag {
    type Err = TagParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let inner = s
            .strip_prefix('(')
            .and_then(|rest| rest.strip_suffix(')'))
            .ok_or_else(|| TagParseError(s.to_string()))?;
        let (g, e) = inner.split_once(',').ok_or_else(|| TagParseError(s.to_string()))?;
        if g.len() != 4 || e.len() != 4 {
            return Err(TagParseError(s.to_string()));
        }
        let group = u16::from_str_radix(g, 16).map_err(|_| TagParseError(s.to_string()))?;
        let element = u16::from_str_radix(e, 16).map_err(|_| TagParseError(s.to_string()))?;
        Ok(Tag::new(group, element))
    }
}
