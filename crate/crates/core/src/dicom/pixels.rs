//! Access to uncompressed (native) pixel data as a mutable frame buffer.

use thiserror::Error;

use super::element::{DataElement, ElementValue};
use super::file::{DicomFile, PIXEL_DATA_TAG};
use super::tag::Tag;
use super::vr::Vr;

const ROWS: Tag = Tag::new(0x0028, 0x0010);
const COLUMNS: Tag = Tag::new(0x0028, 0x0011);
const SAMPLES_PER_PIXEL: Tag = Tag::new(0x0028, 0x0002);
const BITS_ALLOCATED: Tag = Tag::new(0x0028, 0x0100);
const NUMBER_OF_FRAMES: Tag = Tag::new(0x0028, 0x0008);

#[derive(Debug, Error)]
pub enum PixelError {
    #[error("pixel data is encapsulated/compressed; redaction not applied")]
    CompressedPixelData,
    #[error("pixel buffer length mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("missing or invalid image attribute {0}")]
    MissingImageAttributes(&'static str),
    #[error("bits allocated {0} is not a whole number of bytes")]
    UnsupportedBitsAllocated(u32),
}

/// Decoded image geometry plus the raw frame buffer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PixelMatrix {
    pub rows: u32,
    pub columns: u32,
    pub samples_per_pixel: u32,
    pub bits_allocated: u32,
    pub number_of_frames: u32,
    pub big_endian: bool,
    pub data: Vec<u8>,
}

impl PixelMatrix {
    pub fn bytes_per_sample(&self) -> usize {
        (self.bits_allocated / 8) as usize
    }

    pub fn frame_len(&self) -> usize {
        self.rows as usize * self.columns as usize * self.samples_per_pixel as usize
            * self.bytes_per_sample()
    }

    pub fn expected_len(&self) -> usize {
        self.frame_len() * self.number_of_frames as usize
    }
}

/// Reads the pixel matrix, or `None` when the file has no pixel data element.
pub fn get_pixels(file: &DicomFile) -> Result<Option<PixelMatrix>, PixelError> {
    let element = match file.dataset.get(PIXEL_DATA_TAG) {
        Some(e) => e,
        None => return Ok(None),
    };
    if element.undefined_length {
        return Err(PixelError::CompressedPixelData);
    }
    let bytes = match &element.value {
        ElementValue::Bytes(b) => b,
        ElementValue::Sequence(_) => return Err(PixelError::CompressedPixelData),
    };

    let be = file.transfer_syntax.big_endian();
    let rows = file
        .dataset
        .u16_value(ROWS, be)
        .ok_or(PixelError::MissingImageAttributes("(0028,0010) Rows"))? as u32;
    let columns = file
        .dataset
        .u16_value(COLUMNS, be)
        .ok_or(PixelError::MissingImageAttributes("(0028,0011) Columns"))? as u32;
    let samples_per_pixel = file.dataset.u16_value(SAMPLES_PER_PIXEL, be).unwrap_or(1) as u32;
    let bits_allocated = file
        .dataset
        .u16_value(BITS_ALLOCATED, be)
        .ok_or(PixelError::MissingImageAttributes("(0028,0100) Bits Allocated"))?
        as u32;
    if bits_allocated == 0 || !bits_allocated.is_multiple_of(8) {
        return Err(PixelError::UnsupportedBitsAllocated(bits_allocated));
    }
    let number_of_frames = file
        .dataset
        .text(NUMBER_OF_FRAMES)
        .map(|s| s.trim().parse::<u32>().unwrap_or(1))
        .unwrap_or(1)
        .max(1);

    let mut matrix = PixelMatrix {
        rows,
        columns,
        samples_per_pixel,
        bits_allocated,
        number_of_frames,
        big_endian: be,
        data: Vec::new(),
    };
    let expected = matrix.expected_len();
    // Stored values are even-padded; allow exactly one trailing pad byte.
    if bytes.len() != expected && bytes.len() != expected + 1 {
        return Err(PixelError::DimensionMismatch {
            expected,
            actual: bytes.len(),
        });
    }
    matrix.data = bytes[..expected].to_vec();
    Ok(Some(matrix))
}

/// Writes the matrix buffer back into the pixel data element, inserting the
/// element if absent.
pub fn put_pixels(file: &mut DicomFile, matrix: &PixelMatrix) -> Result<(), PixelError> {
    let expected = matrix.expected_len();
    if matrix.data.len() != expected {
        return Err(PixelError::DimensionMismatch {
            expected,
            actual: matrix.data.len(),
        });
    }
    match file.dataset.get_mut(PIXEL_DATA_TAG) {
        Some(element) => {
            if element.undefined_length || element.items().is_some() {
                return Err(PixelError::CompressedPixelData);
            }
            element.value = ElementValue::Bytes(matrix.data.clone());
        }
        None => {
            let vr = if matrix.bits_allocated > 8 { Vr::OW } else { Vr::OB };
            file.dataset
                .put(DataElement::new(PIXEL_DATA_TAG, vr, matrix.data.clone()));
        }
    }
    Ok(())
}
