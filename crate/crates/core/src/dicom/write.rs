//! Part-10 serialization, byte-faithful to the recorded encoding detail.

use thiserror::Error;

use super::element::{DataElement, ElementValue};
use super::file::{DicomFile, TransferSyntax};
use super::parse::UNDEFINED_LENGTH;
use super::tag::{Tag, ITEM, ITEM_DELIMITER, SEQUENCE_DELIMITER};
use super::vr::Vr;

#[derive(Debug, Error)]
pub enum WriteError {
    #[error("value of {tag} is {len} bytes, too long for a short-form {vr} header")]
    ValueTooLong { tag: Tag, vr: Vr, len: usize },
    #[error("element {tag} has an undefined-length flag incompatible with its encoding")]
    BadUndefinedLength { tag: Tag },
}

#[derive(Debug, Clone, Copy, Default)]
pub struct WriteOptions {
    /// Recompute (gggg,0000) group-length values from the elements that
    /// follow them. Off by default so unedited round trips are byte-identical.
    pub recompute_group_lengths: bool,
    /// Re-encode undefined-length sequences and items with defined lengths.
    /// Off by default for the same reason.
    pub normalize_sequences: bool,
    /// Re-pad text values with the canonical pad byte for their VR.
    /// Off by default for the same reason.
    pub normalize_padding: bool,
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

pub fn write_file(file: &DicomFile, options: WriteOptions) -> Result<Vec<u8>, WriteError> {
    let mut out = Vec::new();
    if file.has_preamble {
        out.extend_from_slice(&file.preamble);
        out.extend_from_slice(b"DICM");
    }
    write_element_list(&mut out, file.file_meta.elements(), Encoding::META, options)?;
    write_element_list(
        &mut out,
        file.dataset.elements(),
        Encoding::of(file.transfer_syntax),
        options,
    )?;
    Ok(out)
}

fn write_element_list(
    out: &mut Vec<u8>,
    elements: &[DataElement],
    enc: Encoding,
    options: WriteOptions,
) -> Result<(), WriteError> {
    let mut encoded: Vec<Vec<u8>> = Vec::with_capacity(elements.len());
    for element in elements {
        let mut bytes = Vec::new();
        write_element(&mut bytes, element, enc, options)?;
        encoded.push(bytes);
    }

    if options.recompute_group_lengths {
        for (idx, element) in elements.iter().enumerate() {
            if !element.tag.is_group_length() {
                continue;
            }
            let group = element.tag.group;
            let total: usize = elements
                .iter()
                .enumerate()
                .skip(idx + 1)
                .take_while(|(_, e)| e.tag.group == group)
                .map(|(j, _)| encoded[j].len())
                .sum();
            let mut patched = element.clone();
            let value = total as u32;
            let bytes = if enc.big_endian {
                value.to_be_bytes()
            } else {
                value.to_le_bytes()
            };
            patched.value = ElementValue::Bytes(bytes.to_vec());
            patched.undefined_length = false;
            let mut replacement = Vec::new();
            write_element(&mut replacement, &patched, enc, options)?;
            encoded[idx] = replacement;
        }
    }

    for bytes in encoded {
        out.extend_from_slice(&bytes);
    }
    Ok(())
}

fn push_u16(out: &mut Vec<u8>, value: u16, big_endian: bool) {
    out.extend_from_slice(&if big_endian {
        value.to_be_bytes()
    } else {
        value.to_le_bytes()
    });
}

fn push_u32(out: &mut Vec<u8>, value: u32, big_endian: bool) {
    out.extend_from_slice(&if big_endian {
        value.to_be_bytes()
    } else {
        value.to_le_bytes()
    });
}

fn push_tag(out: &mut Vec<u8>, tag: Tag, big_endian: bool) {
    push_u16(out, tag.group, big_endian);
    push_u16(out, tag.element, big_endian);
}

fn write_element(
    out: &mut Vec<u8>,
    element: &DataElement,
    enc: Encoding,
    options: WriteOptions,
) -> Result<(), WriteError> {
    match &element.value {
        ElementValue::Sequence(items) => {
            let mut content = Vec::new();
            for item in items {
                let mut item_content = Vec::new();
                write_element_list(&mut item_content, &item.elements, enc, options)?;
                push_tag(&mut content, ITEM, enc.big_endian);
                if item.undefined_length && !options.normalize_sequences {
                    push_u32(&mut content, UNDEFINED_LENGTH, enc.big_endian);
                    content.extend_from_slice(&item_content);
                    push_tag(&mut content, ITEM_DELIMITER, enc.big_endian);
                    push_u32(&mut content, 0, enc.big_endian);
                } else {
                    push_u32(&mut content, item_content.len() as u32, enc.big_endian);
                    content.extend_from_slice(&item_content);
                }
            }
            let undefined = element.undefined_length && !options.normalize_sequences;
            push_tag(out, element.tag, enc.big_endian);
            write_value_header(
                out,
                element.tag,
                Vr::SQ,
                if undefined {
                    UNDEFINED_LENGTH
                } else {
                    content.len() as u32
                },
                enc,
            )?;
            out.extend_from_slice(&content);
            if undefined {
                push_tag(out, SEQUENCE_DELIMITER, enc.big_endian);
                push_u32(out, 0, enc.big_endian);
            }
            Ok(())
        }
        ElementValue::Bytes(bytes) => {
            let normalized;
            let bytes = if options.normalize_padding && element.vr.is_text() {
                normalized = canonical_padding(element.vr, bytes);
                &normalized
            } else {
                bytes
            };
            push_tag(out, element.tag, enc.big_endian);
            if element.undefined_length {
                // Opaque item-structured blob captured at parse time; the
                // closing delimiter is re-appended here.
                if enc.explicit_vr && !element.vr.uses_long_header() {
                    return Err(WriteError::BadUndefinedLength { tag: element.tag });
                }
                write_value_header(out, element.tag, element.vr, UNDEFINED_LENGTH, enc)?;
                out.extend_from_slice(bytes);
                push_tag(out, SEQUENCE_DELIMITER, enc.big_endian);
                push_u32(out, 0, enc.big_endian);
                return Ok(());
            }
            let mut len = bytes.len();
            let padded = len % 2 == 1;
            if padded {
                len += 1;
            }
            write_value_header(out, element.tag, element.vr, len as u32, enc)?;
            out.extend_from_slice(bytes);
            if padded {
                out.push(element.vr.pad_byte());
            }
            Ok(())
        }
    }
}

/// Replaces a trailing wrong-for-the-VR pad byte (space on UI, NUL on other
/// text VRs) with the canonical one. Text values never legitimately end in
/// the opposite pad byte, so the swap is content-preserving.
fn canonical_padding(vr: Vr, bytes: &[u8]) -> Vec<u8> {
    let mut out = bytes.to_vec();
    if out.len().is_multiple_of(2) {
        if let Some(last) = out.last_mut() {
            let wrong = if vr.pad_byte() == 0x00 { b' ' } else { 0x00 };
            if *last == wrong {
                *last = vr.pad_byte();
            }
        }
    }
    out
}

fn write_value_header(
    out: &mut Vec<u8>,
    tag: Tag,
    vr: Vr,
    length: u32,
    enc: Encoding,
) -> Result<(), WriteError> {
    if enc.explicit_vr {
        out.extend_from_slice(&vr.as_bytes());
        if vr.uses_long_header() {
            out.extend_from_slice(&[0, 0]);
            push_u32(out, length, enc.big_endian);
        } else {
            if length > u32::from(u16::MAX) {
                return Err(WriteError::ValueTooLong {
                    tag,
                    vr,
                    len: length as usize,
                });
            }
            push_u16(out, length as u16, enc.big_endian);
        }
    } else {
        push_u32(out, length, enc.big_endian);
    }
    Ok(())
}
