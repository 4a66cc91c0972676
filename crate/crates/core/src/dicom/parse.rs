//! DICOM Part-10 reader for the three classic transfer syntaxes.
//!
//! The parser keeps per-element encoding detail (undefined lengths, opaque
//! UN blobs) so that `write_file` can reproduce the input byte for byte.

use thiserror::Error;

use super::dict;
use super::element::{DataElement, DataSet, ElementValue, SequenceItem};
use super::file::{DicomFile, TransferSyntax, PIXEL_DATA_TAG, TRANSFER_SYNTAX_TAG};
use super::tag::{Tag, ITEM, ITEM_DELIMITER, SEQUENCE_DELIMITER};
use super::vr::Vr;

pub const UNDEFINED_LENGTH: u32 = 0xFFFF_FFFF;

#[derive(Debug, Error)]
pub enum ParseError {
    #[error("truncated file: needed {needed} bytes for {what} at offset {offset}")]
    TruncatedFile {
        offset: usize,
        needed: usize,
        what: &'static str,
    },
    #[error("no DICM marker at offset 128 and no bare file meta group")]
    BadMagic,
    #[error("unsupported transfer syntax {0:?}")]
    UnsupportedTransferSyntax(String),
    #[error("file meta group carries no transfer syntax UID (0002,0010)")]
    MissingTransferSyntax,
    #[error("invalid VR bytes {bytes:?} for element {tag} at offset {offset}")]
    InvalidVr {
        tag: Tag,
        bytes: [u8; 2],
        offset: usize,
    },
    #[error("element {tag} out of tag order at offset {offset}")]
    OddTagOrder { tag: Tag, offset: usize },
    #[error("unexpected delimiter {tag} at offset {offset}")]
    UnexpectedDelimiter { tag: Tag, offset: usize },
    #[error("expected item tag inside sequence, found {tag} at offset {offset}")]
    BadItemTag { tag: Tag, offset: usize },
    #[error("element {tag} overruns its container (ends at {end}, container ends at {container_end})")]
    InconsistentLength {
        tag: Tag,
        end: usize,
        container_end: usize,
    },
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ParseOptions {
    /// Strict mode requires the preamble + DICM marker and in-order tags.
    /// Lenient mode (default) accepts a bare meta group and sorts stray
    /// out-of-order elements with a warning.
    pub strict: bool,
}

#[derive(Debug, Clone, Copy)]
struct Encoding {
    explicit_vr: bool,
    big_endian: bool,
}

impl Encoding {
    const META: Encoding = Encoding {
        explicit_vr: true,
        big_endian: false,
    };

    fn of(ts: TransferSyntax) -> Encoding {
        Encoding {
            explicit_vr: ts.explicit_vr(),
            big_endian: ts.big_endian(),
        }
    }
}

struct Parser<'a> {
    buf: &'a [u8],
    pos: usize,
    strict: bool,
    warnings: Vec<String>,
}

pub fn parse_file(bytes: &[u8], options: ParseOptions) -> Result<DicomFile, ParseError> {
    let mut parser = Parser {
        buf: bytes,
        pos: 0,
        strict: options.strict,
        warnings: Vec::new(),
    };

    let mut preamble = [0u8; 128];
    let has_preamble = if bytes.len() >= 132 && &bytes[128..132] == b"DICM" {
        preamble.copy_from_slice(&bytes[..128]);
        parser.pos = 132;
        true
    } else if !options.strict && bytes.len() >= 2 && u16::from_le_bytes([bytes[0], bytes[1]]) == 0x0002
    {
        parser.warn("no preamble/DICM marker; parsing bare file meta group");
        false
    } else {
        return Err(ParseError::BadMagic);
    };

    let file_meta = parser.parse_meta_group()?;
    let ts_uid = file_meta
        .text(TRANSFER_SYNTAX_TAG)
        .ok_or(ParseError::MissingTransferSyntax)?;
    let transfer_syntax = TransferSyntax::from_uid(ts_uid.trim())
        .ok_or_else(|| ParseError::UnsupportedTransferSyntax(ts_uid.clone()))?;

    let elements = parser.parse_element_list(Encoding::of(transfer_syntax), None, false)?;
    let dataset = parser.finish_level(elements, 0)?;

    Ok(DicomFile {
        has_preamble,
        preamble,
        file_meta,
        dataset,
        transfer_syntax,
        parse_warnings: parser.warnings,
    })
}

impl<'a> Parser<'a> {
    fn warn(&mut self, msg: impl Into<String>) {
        self.warnings.push(msg.into());
    }

    fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    fn take(&mut self, n: usize, what: &'static str) -> Result<&'a [u8], ParseError> {
        if self.remaining() < n {
            return Err(ParseError::TruncatedFile {
                offset: self.pos,
                needed: n,
                what,
            });
        }
        let slice = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn read_u16(&mut self, big_endian: bool, what: &'static str) -> Result<u16, ParseError> {
        let b = self.take(2, what)?;
        Ok(if big_endian {
            u16::from_be_bytes([b[0], b[1]])
        } else {
            u16::from_le_bytes([b[0], b[1]])
        })
    }

    fn read_u32(&mut self, big_endian: bool, what: &'static str) -> Result<u32, ParseError> {
        let b = self.take(4, what)?;
        Ok(if big_endian {
            u32::from_be_bytes([b[0], b[1], b[2], b[3]])
        } else {
            u32::from_le_bytes([b[0], b[1], b[2], b[3]])
        })
    }

    fn read_tag(&mut self, big_endian: bool) -> Result<Tag, ParseError> {
        let group = self.read_u16(big_endian, "tag group")?;
        let element = self.read_u16(big_endian, "tag element")?;
        Ok(Tag::new(group, element))
    }

    fn peek_tag(&self, big_endian: bool) -> Option<Tag> {
        if self.remaining() < 4 {
            return None;
        }
        let b = &self.buf[self.pos..self.pos + 4];
        let (group, element) = if big_endian {
            (u16::from_be_bytes([b[0], b[1]]), u16::from_be_bytes([b[2], b[3]]))
        } else {
            (u16::from_le_bytes([b[0], b[1]]), u16::from_le_bytes([b[2], b[3]]))
        };
        Some(Tag::new(group, element))
    }

    /// Group 0002: explicit-VR little-endian elements until the group changes.
    fn parse_meta_group(&mut self) -> Result<DataSet, ParseError> {
        let mut elements = Vec::new();
        while let Some(tag) = self.peek_tag(false) {
            if tag.group != 0x0002 {
                break;
            }
            elements.push(self.parse_element(Encoding::META)?);
        }
        self.finish_level(elements, 0)
    }

    /// Checks tag order for one nesting level: strict mode rejects disorder,
    /// lenient mode sorts with a warning. Duplicates are kept.
    fn finish_level(
        &mut self,
        elements: Vec<DataElement>,
        level_start: usize,
    ) -> Result<DataSet, ParseError> {
        let sorted = elements.windows(2).all(|w| w[0].tag <= w[1].tag);
        if sorted {
            for w in elements.windows(2) {
                if w[0].tag == w[1].tag {
                    self.warn(format!("duplicate tag {} in one dataset level", w[0].tag));
                }
            }
            return Ok(DataSet::from_sorted(elements));
        }
        let offender = elements
            .windows(2)
            .find(|w| w[0].tag > w[1].tag)
            .map(|w| w[1].tag)
            .unwrap_or(Tag::new(0, 0));
        if self.strict {
            return Err(ParseError::OddTagOrder {
                tag: offender,
                offset: level_start,
            });
        }
        self.warn(format!("elements out of tag order near {offender}; sorted"));
        Ok(DataSet::from_elements(elements))
    }

    /// Parses elements until `end` (defined-length container), the item
    /// delimiter (`until_item_delim`), or end of input.
    fn parse_element_list(
        &mut self,
        enc: Encoding,
        end: Option<usize>,
        until_item_delim: bool,
    ) -> Result<Vec<DataElement>, ParseError> {
        let mut elements = Vec::new();
        loop {
            if let Some(end) = end {
                if self.pos >= end {
                    if self.pos > end {
                        let tag = elements.last().map(|e: &DataElement| e.tag).unwrap_or(Tag::new(0, 0));
                        return Err(ParseError::InconsistentLength {
                            tag,
                            end: self.pos,
                            container_end: end,
                        });
                    }
                    break;
                }
            } else if self.remaining() == 0 {
                if until_item_delim {
                    return Err(ParseError::TruncatedFile {
                        offset: self.pos,
                        needed: 8,
                        what: "item delimiter",
                    });
                }
                break;
            }

            let tag = match self.peek_tag(enc.big_endian) {
                Some(tag) => tag,
                None => {
                    return Err(ParseError::TruncatedFile {
                        offset: self.pos,
                        needed: 8,
                        what: "element header",
                    })
                }
            };
            if tag == ITEM_DELIMITER && until_item_delim {
                self.read_tag(enc.big_endian)?;
                let len = self.read_u32(enc.big_endian, "item delimiter length")?;
                if len != 0 {
                    self.warn(format!("item delimiter with nonzero length {len}"));
                }
                break;
            }
            if tag.is_delimiter() {
                return Err(ParseError::UnexpectedDelimiter {
                    tag,
                    offset: self.pos,
                });
            }
            elements.push(self.parse_element(enc)?);
        }
        Ok(elements)
    }

    fn parse_element(&mut self, enc: Encoding) -> Result<DataElement, ParseError> {
        let header_offset = self.pos;
        let tag = self.read_tag(enc.big_endian)?;

        let (vr, length) = if enc.explicit_vr {
            let vr_bytes = self.take(2, "VR code")?;
            let vr_bytes = [vr_bytes[0], vr_bytes[1]];
            let vr = Vr::from_bytes(vr_bytes).ok_or(ParseError::InvalidVr {
                tag,
                bytes: vr_bytes,
                offset: header_offset,
            })?;
            let length = if vr.uses_long_header() {
                self.take(2, "reserved length bytes")?;
                self.read_u32(enc.big_endian, "element length")?
            } else {
                u32::from(self.read_u16(enc.big_endian, "element length")?)
            };
            (vr, length)
        } else {
            let length = self.read_u32(enc.big_endian, "element length")?;
            let vr = if tag == PIXEL_DATA_TAG {
                Vr::OW
            } else {
                dict::vr_for_tag(tag).unwrap_or(Vr::UN)
            };
            (vr, length)
        };

        if vr == Vr::SQ {
            let (items, undefined) = if length == UNDEFINED_LENGTH {
                (self.parse_items(enc, None)?, true)
            } else {
                let end = self.pos + length as usize;
                (self.parse_items(enc, Some(end))?, false)
            };
            return Ok(DataElement {
                tag,
                vr,
                value: ElementValue::Sequence(items),
                undefined_length: undefined,
            });
        }

        if length == UNDEFINED_LENGTH {
            // Undefined-length non-SQ value (UN blob or encapsulated pixel
            // data): capture the raw span verbatim, without descending. The
            // content is item-structured with implicit-VR little-endian
            // headers, which is enough to locate the closing delimiter.
            let start = self.pos;
            let value_end = self.scan_undefined_value()?;
            let bytes = self.buf[start..value_end].to_vec();
            return Ok(DataElement {
                tag,
                vr,
                value: ElementValue::Bytes(bytes),
                undefined_length: true,
            });
        }

        let bytes = self.take(length as usize, "element value")?;
        if length % 2 == 1 {
            self.warn(format!("element {tag} has odd value length {length}"));
        }
        Ok(DataElement {
            tag,
            vr,
            value: ElementValue::Bytes(bytes.to_vec()),
            undefined_length: false,
        })
    }

    fn parse_items(
        &mut self,
        enc: Encoding,
        end: Option<usize>,
    ) -> Result<Vec<SequenceItem>, ParseError> {
        let mut items = Vec::new();
        loop {
            if let Some(end) = end {
                if self.pos >= end {
                    if self.pos > end {
                        return Err(ParseError::InconsistentLength {
                            tag: ITEM,
                            end: self.pos,
                            container_end: end,
                        });
                    }
                    break;
                }
            }
            let item_offset = self.pos;
            let tag = self.read_tag(enc.big_endian)?;
            if tag == SEQUENCE_DELIMITER && end.is_none() {
                let len = self.read_u32(enc.big_endian, "sequence delimiter length")?;
                if len != 0 {
                    self.warn(format!("sequence delimiter with nonzero length {len}"));
                }
                break;
            }
            if tag != ITEM {
                return Err(ParseError::BadItemTag {
                    tag,
                    offset: item_offset,
                });
            }
            let item_len = self.read_u32(enc.big_endian, "item length")?;
            let (elements, undefined) = if item_len == UNDEFINED_LENGTH {
                (self.parse_element_list(enc, None, true)?, true)
            } else {
                let item_end = self.pos + item_len as usize;
                (self.parse_element_list(enc, Some(item_end), false)?, false)
            };
            let level_elements = self.finish_level(elements, item_offset)?;
            items.push(SequenceItem {
                elements: level_elements.elements().to_vec(),
                undefined_length: undefined,
            });
        }
        Ok(items)
    }

    /// Walks the item structure of an undefined-length non-SQ value and
    /// returns the offset of the closing sequence delimiter, leaving the
    /// cursor just past it. Item content headers are implicit-VR LE.
    fn scan_undefined_value(&mut self) -> Result<usize, ParseError> {
        loop {
            let tag_offset = self.pos;
            let tag = self.read_tag(false)?;
            if tag == SEQUENCE_DELIMITER {
                self.read_u32(false, "sequence delimiter length")?;
                return Ok(tag_offset);
            }
            if tag != ITEM {
                return Err(ParseError::BadItemTag {
                    tag,
                    offset: tag_offset,
                });
            }
            let len = self.read_u32(false, "item length")?;
            if len == UNDEFINED_LENGTH {
                self.scan_undefined_item()?;
            } else {
                self.take(len as usize, "item content")?;
            }
        }
    }

    fn scan_undefined_item(&mut self) -> Result<(), ParseError> {
        loop {
            let tag = self.read_tag(false)?;
            if tag == ITEM_DELIMITER {
                self.read_u32(false, "item delimiter length")?;
                return Ok(());
            }
            let len = self.read_u32(false, "element length")?;
            if len == UNDEFINED_LENGTH {
                self.scan_undefined_value()?;
            } else {
                self.take(len as usize, "element value")?;
            }
        }
    }
}
