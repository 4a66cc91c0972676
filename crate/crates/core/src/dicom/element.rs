use std::fmt;

use thiserror::Error;

use super::dict;
use super::tag::Tag;
use super::vr::Vr;

/// Payload of a data element: either raw bytes (primitive VRs, including
/// opaque undefined-length UN blobs) or a list of sequence items (SQ).
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ElementValue {
    Bytes(Vec<u8>),
    Sequence(Vec<SequenceItem>),
}

/// One attribute of a dataset, with enough encoding detail retained for
/// byte-faithful re-serialization.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DataElement {
    pub tag: Tag,
    pub vr: Vr,
    pub value: ElementValue,
    /// The element was encoded with undefined (0xFFFFFFFF) length. Applies to
    /// SQ and to opaque UN blobs; preserved so writes reproduce input bytes.
    pub undefined_length: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SequenceItem {
    pub elements: Vec<DataElement>,
    pub undefined_length: bool,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ValueError {
    #[error("cannot set text on binary-class VR {vr} at {tag}")]
    VrMismatch { tag: Tag, vr: Vr },
}

impl DataElement {
    pub fn new(tag: Tag, vr: Vr, bytes: Vec<u8>) -> Self {
        DataElement {
            tag,
            vr,
            value: ElementValue::Bytes(bytes),
            undefined_length: false,
        }
    }

    /// Builds a text element, padding to even length with the VR's pad byte.
    pub fn from_text(tag: Tag, vr: Vr, text: &str) -> Self {
        DataElement::new(tag, vr, encode_text(vr, text))
    }

    pub fn sequence(tag: Tag, items: Vec<SequenceItem>) -> Self {
        DataElement {
            tag,
            vr: Vr::SQ,
            value: ElementValue::Sequence(items),
            undefined_length: false,
        }
    }

    pub fn raw_bytes(&self) -> Option<&[u8]> {
        match &self.value {
            ElementValue::Bytes(b) => Some(b),
            ElementValue::Sequence(_) => None,
        }
    }

    pub fn items(&self) -> Option<&[SequenceItem]> {
        match &self.value {
            ElementValue::Sequence(items) => Some(items),
            ElementValue::Bytes(_) => None,
        }
    }

    /// Decoded string view of a text-class value. Strips at most one trailing
    /// pad byte so that re-encoding reproduces the stored bytes exactly.
    pub fn text(&self) -> Option<String> {
        if !self.vr.is_text() && self.vr != Vr::UN {
            return None;
        }
        let bytes = self.raw_bytes()?;
        Some(decode_text(self.vr, bytes))
    }

    /// Replaces the payload with encoded text. Errors on binary-class VRs.
    pub fn set_text(&mut self, text: &str) -> Result<(), ValueError> {
        if self.vr.is_binary() {
            return Err(ValueError::VrMismatch {
                tag: self.tag,
                vr: self.vr,
            });
        }
        self.value = ElementValue::Bytes(encode_text(self.vr, text));
        self.undefined_length = false;
        Ok(())
    }

    /// Replaces the payload with a zero-length value, preserving the VR.
    pub fn set_empty(&mut self) {
        self.value = match self.vr {
            Vr::SQ => ElementValue::Sequence(Vec::new()),
            _ => ElementValue::Bytes(Vec::new()),
        };
        self.undefined_length = false;
    }
}

pub fn encode_text(vr: Vr, text: &str) -> Vec<u8> {
    let mut bytes = text.as_bytes().to_vec();
    if bytes.len() % 2 == 1 {
        bytes.push(vr.pad_byte());
    }
    bytes
}

pub fn decode_text(vr: Vr, bytes: &[u8]) -> String {
    let mut end = bytes.len();
    // Even stored lengths carry at most one pad byte; strip exactly one so
    // that encode(decode(b)) == b.
    if end.is_multiple_of(2) && end > 0 && bytes[end - 1] == vr.pad_byte() {
        end -= 1;
    }
    bytes[..end].iter().map(|&b| b as char).collect()
}

/// An ordered list of data elements, sorted by tag.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DataSet {
    elements: Vec<DataElement>,
}

impl DataSet {
    pub fn new() -> Self {
        DataSet::default()
    }

    pub fn from_elements(mut elements: Vec<DataElement>) -> Self {
        elements.sort_by_key(|e| e.tag);
        DataSet { elements }
    }

    /// Construct without sorting; the caller asserts the order.
    pub(crate) fn from_sorted(elements: Vec<DataElement>) -> Self {
        DataSet { elements }
    }

    pub fn elements(&self) -> &[DataElement] {
        &self.elements
    }

    pub fn elements_mut(&mut self) -> &mut Vec<DataElement> {
        &mut self.elements
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn get(&self, tag: Tag) -> Option<&DataElement> {
        self.elements
            .binary_search_by_key(&tag, |e| e.tag)
            .ok()
            .map(|idx| &self.elements[idx])
    }

    pub fn get_mut(&mut self, tag: Tag) -> Option<&mut DataElement> {
        self.elements
            .binary_search_by_key(&tag, |e| e.tag)
            .ok()
            .map(move |idx| &mut self.elements[idx])
    }

    /// Decoded text value of an element, if present and text-class.
    pub fn text(&self, tag: Tag) -> Option<String> {
        self.get(tag).and_then(|e| e.text())
    }

    /// Sets a text value. A missing tag is inserted with the dictionary VR
    /// (UN when unknown).
    pub fn set_text(&mut self, tag: Tag, text: &str) -> Result<(), ValueError> {
        match self.elements.binary_search_by_key(&tag, |e| e.tag) {
            Ok(idx) => self.elements[idx].set_text(text),
            Err(idx) => {
                let vr = dict::vr_for_tag(tag).unwrap_or(Vr::UN);
                if vr.is_binary() {
                    return Err(ValueError::VrMismatch { tag, vr });
                }
                self.elements.insert(idx, DataElement::from_text(tag, vr, text));
                Ok(())
            }
        }
    }

    /// Inserts or replaces an element, keeping tag order.
    pub fn put(&mut self, element: DataElement) {
        match self.elements.binary_search_by_key(&element.tag, |e| e.tag) {
            Ok(idx) => self.elements[idx] = element,
            Err(idx) => self.elements.insert(idx, element),
        }
    }

    /// Removes the element with the given tag. Returns whether it was present.
    pub fn remove(&mut self, tag: Tag) -> bool {
        match self.elements.binary_search_by_key(&tag, |e| e.tag) {
            Ok(idx) => {
                self.elements.remove(idx);
                true
            }
            Err(_) => false,
        }
    }

    /// Unsigned 16-bit value of a US element.
    pub fn u16_value(&self, tag: Tag, big_endian: bool) -> Option<u16> {
        let bytes = self.get(tag)?.raw_bytes()?;
        if bytes.len() < 2 {
            return None;
        }
        Some(if big_endian {
            u16::from_be_bytes([bytes[0], bytes[1]])
        } else {
            u16::from_le_bytes([bytes[0], bytes[1]])
        })
    }

    /// Visits every element at every nesting depth exactly once, parents
    /// before their sequence children.
    pub fn walk<F>(&self, visitor: &mut F)
    where
        F: FnMut(&ElementPath, &DataElement),
    {
        let mut path = ElementPath::root();
        walk_elements(&self.elements, &mut path, visitor);
    }

    /// Number of elements at all nesting depths.
    pub fn count_all(&self) -> usize {
        let mut n = 0;
        self.walk(&mut |_, _| n += 1);
        n
    }
}

fn walk_elements<F>(elements: &[DataElement], path: &mut ElementPath, visitor: &mut F)
where
    F: FnMut(&ElementPath, &DataElement),
{
    for element in elements {
        visitor(path, element);
        if let ElementValue::Sequence(items) = &element.value {
            for (idx, item) in items.iter().enumerate() {
                path.0.push((element.tag, idx));
                walk_elements(&item.elements, path, visitor);
                path.0.pop();
            }
        }
    }
}

/// Sequence ancestry of an element: (sequence tag, item index) pairs from the
/// dataset root down to the element's containing item.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ElementPath(pub Vec<(Tag, usize)>);

impl ElementPath {
    pub fn root() -> Self {
        ElementPath(Vec::new())
    }

    pub fn is_root(&self) -> bool {
        self.0.is_empty()
    }

    /// Path with the element's own tag appended, e.g. `(0008,1140)[0]/(0008,1155)`.
    pub fn locus(&self, tag: Tag) -> String {
        let mut out = String::new();
        for (seq_tag, idx) in &self.0 {
            out.push_str(&format!("{}[{}]/", seq_tag, idx));
        }
        out.push_str(&tag.to_string());
        out
    }
}

impl fmt::Display for ElementPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, (tag, idx)) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str("/")?;
            }
            write!(f, "{}[{}]", tag, idx)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pn(text: &str) -> DataElement {
        DataElement::from_text(Tag::new(0x0010, 0x0010), Vr::PN, text)
    }

    #[test]
    fn text_round_trips_to_identical_bytes() {
        for value in ["", "AB", "ABC", "AB ", "AB  ", " ", "DOE^JOHN"] {
            let elem = pn(value);
            let bytes = elem.raw_bytes().unwrap().to_vec();
            let decoded = elem.text().unwrap();
            assert_eq!(encode_text(Vr::PN, &decoded), bytes, "value {value:?}");
        }
    }

    #[test]
    fn ui_pads_with_nul() {
        let elem = DataElement::from_text(Tag::new(0x0008, 0x0018), Vr::UI, "1.2.3");
        assert_eq!(elem.raw_bytes().unwrap(), b"1.2.3\0");
        assert_eq!(elem.text().unwrap(), "1.2.3");
    }

    #[test]
    fn even_value_not_padded() {
        let elem = pn("AB");
        assert_eq!(elem.raw_bytes().unwrap(), b"AB");
    }

    #[test]
    fn set_get_remove() {
        let mut ds = DataSet::new();
        let tag = Tag::new(0x0010, 0x0010);
        ds.set_text(tag, "0000001").unwrap();
        assert_eq!(ds.text(tag).unwrap(), "0000001");
        assert!(ds.remove(tag));
        assert!(ds.get(tag).is_none());
        assert!(!ds.remove(tag));
    }

    #[test]
    fn set_text_on_binary_vr_is_rejected() {
        let mut ds = DataSet::new();
        // (0028,0010) Rows is US.
        let err = ds.set_text(Tag::new(0x0028, 0x0010), "512").unwrap_err();
        assert!(matches!(err, ValueError::VrMismatch { .. }));
    }

    #[test]
    fn unknown_tag_inserts_as_un() {
        let mut ds = DataSet::new();
        let tag = Tag::new(0x0999, 0x0001);
        ds.set_text(tag, "odd").unwrap();
        let elem = ds.get(tag).unwrap();
        assert_eq!(elem.vr, Vr::UN);
        assert_eq!(elem.raw_bytes().unwrap(), b"odd\0");
    }

    #[test]
    fn put_keeps_order() {
        let mut ds = DataSet::new();
        ds.put(DataElement::from_text(Tag::new(0x0010, 0x0020), Vr::LO, "B"));
        ds.put(DataElement::from_text(Tag::new(0x0008, 0x0060), Vr::CS, "CT"));
        let tags: Vec<Tag> = ds.elements().iter().map(|e| e.tag).collect();
        assert_eq!(tags, vec![Tag::new(0x0008, 0x0060), Tag::new(0x0010, 0x0020)]);
    }

    #[test]
    fn walk_counts_nested() {
        let inner = DataElement::from_text(Tag::new(0x0008, 0x1155), Vr::UI, "1.2");
        let item = SequenceItem {
            elements: vec![inner.clone(), DataElement::from_text(Tag::new(0x0008, 0x1150), Vr::UI, "1.3")],
            undefined_length: false,
        };
        let mut item_sorted = item.clone();
        item_sorted.elements.sort_by_key(|e| e.tag);
        let seq = DataElement::sequence(Tag::new(0x0008, 0x1140), vec![item_sorted.clone(), item_sorted]);
        let ds = DataSet::from_elements(vec![seq]);
        // 1 SQ element + 2 items x 2 elements.
        assert_eq!(ds.count_all(), 5);

        let mut loci = Vec::new();
        ds.walk(&mut |path, e| loci.push(path.locus(e.tag)));
        assert_eq!(loci[0], "(0008,1140)");
        assert_eq!(loci[1], "(0008,1140)[0]/(0008,1150)");
        assert_eq!(loci[4], "(0008,1140)[1]/(0008,1155)");
    }

    #[test]
    fn walk_empty_dataset() {
        assert_eq!(DataSet::new().count_all(), 0);
    }
}
