//! DICOM Part-10 data model: parse and serialize files into an editable
//! tag-value tree, including nested sequences and native pixel data access.

mod dict;
mod element;
mod file;
mod parse;
mod pixels;
mod tag;
mod vr;
mod write;

pub use dict::vr_for_tag;
pub use element::{
    decode_text, encode_text, DataElement, DataSet, ElementPath, ElementValue, SequenceItem,
    ValueError,
};
pub use file::{
    DicomFile, TransferSyntax, MEDIA_SOP_INSTANCE_UID_TAG, PIXEL_DATA_TAG, SOP_INSTANCE_UID_TAG,
    TRANSFER_SYNTAX_TAG,
};
pub use parse::{parse_file, ParseError, ParseOptions, UNDEFINED_LENGTH};
pub use pixels::{get_pixels, put_pixels, PixelError, PixelMatrix};
pub use tag::{Tag, TagParseError, ITEM, ITEM_DELIMITER, SEQUENCE_DELIMITER};
pub use vr::Vr;
pub use write::{write_file, WriteError, WriteOptions};
