use super::element::DataSet;
use super::tag::Tag;

pub const TRANSFER_SYNTAX_TAG: Tag = Tag::new(0x0002, 0x0010);
pub const MEDIA_SOP_INSTANCE_UID_TAG: Tag = Tag::new(0x0002, 0x0003);
pub const SOP_INSTANCE_UID_TAG: Tag = Tag::new(0x0008, 0x0018);
pub const PIXEL_DATA_TAG: Tag = Tag::new(0x7FE0, 0x0010);

/// The three classic uncompressed transfer syntaxes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransferSyntax {
    ImplicitVrLittleEndian,
    ExplicitVrLittleEndian,
    ExplicitVrBigEndian,
}

impl TransferSyntax {
    pub fn from_uid(uid: &str) -> Option<Self> {
        match uid {
            "1.2.840.10008.1.2" => Some(TransferSyntax::ImplicitVrLittleEndian),
            "1.2.840.10008.1.2.1" => Some(TransferSyntax::ExplicitVrLittleEndian),
            "1.2.840.10008.1.2.2" => Some(TransferSyntax::ExplicitVrBigEndian),
            _ => None,
        }
    }

    pub fn uid(self) -> &'static str {
        match self {
            TransferSyntax::ImplicitVrLittleEndian => "1.2.840.10008.1.2",
            TransferSyntax::ExplicitVrLittleEndian => "1.2.840.10008.1.2.1",
            TransferSyntax::ExplicitVrBigEndian => "1.2.840.10008.1.2.2",
        }
    }

    pub fn explicit_vr(self) -> bool {
        !matches!(self, TransferSyntax::ImplicitVrLittleEndian)
    }

    pub fn big_endian(self) -> bool {
        matches!(self, TransferSyntax::ExplicitVrBigEndian)
    }
}

/// A parsed DICOM Part-10 file: preamble, file meta group, and dataset.
#[derive(Debug, Clone)]
pub struct DicomFile {
    /// False when the input started directly at the meta group (lenient mode);
    /// preserved so round trips stay byte-identical.
    pub has_preamble: bool,
    pub preamble: [u8; 128],
    /// Group 0002, always explicit-VR little-endian.
    pub file_meta: DataSet,
    pub dataset: DataSet,
    pub transfer_syntax: TransferSyntax,
    pub parse_warnings: Vec<String>,
}

impl DicomFile {
    /// Empty file skeleton with the given transfer syntax; the caller fills
    /// in meta and dataset.
    pub fn empty(transfer_syntax: TransferSyntax) -> Self {
        DicomFile {
            has_preamble: true,
            preamble: [0u8; 128],
            file_meta: DataSet::new(),
            dataset: DataSet::new(),
            transfer_syntax,
            parse_warnings: Vec::new(),
        }
    }

    pub fn transfer_syntax_uid(&self) -> Option<String> {
        self.file_meta.text(TRANSFER_SYNTAX_TAG)
    }

    /// Structural equality over content (meta + dataset + syntax), ignoring
    /// parse warnings.
    pub fn same_content(&self, other: &DicomFile) -> bool {
        self.has_preamble == other.has_preamble
            && self.preamble == other.preamble
            && self.file_meta == other.file_meta
            && self.dataset == other.dataset
            && self.transfer_syntax == other.transfer_syntax
    }
}
