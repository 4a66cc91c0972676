//! Minimal standard-attribute dictionary: tag to VR, used for implicit-VR
//! parsing and for inserting values on tags absent from a dataset.

use super::tag::Tag;
use super::vr::Vr;

/// Returns the standard VR for a public tag, or `None` when the tag is not in
/// the bundled dictionary. Callers fall back to UN.
pub fn vr_for_tag(tag: Tag) -> Option<Vr> {
    // Group-length elements are always UL regardless of group.
    if tag.element == 0x0000 {
        return Some(Vr::UL);
    }
    // Curve and overlay repeating groups: normalize to the 0x5000/0x6000 base.
    let group = match tag.group {
        g if (0x5000..=0x50FF).contains(&g) => 0x5000,
        g if (0x6000..=0x60FF).contains(&g) => 0x6000,
        g => g,
    };
    ENTRIES
        .binary_search_by_key(&(group, tag.element), |&(g, e, _)| (g, e))
        .ok()
        .map(|idx| ENTRIES[idx].2)
}

/// Sorted by (group, element) for binary search.
const ENTRIES: &[(u16, u16, Vr)] = &[
    (0x0002, 0x0001, Vr::OB),
    (0x0002, 0x0002, Vr::UI),
    (0x0002, 0x0003, Vr::UI),
    (0x0002, 0x0010, Vr::UI),
    (0x0002, 0x0012, Vr::UI),
    (0x0002, 0x0013, Vr::SH),
    (0x0002, 0x0016, Vr::AE),
    (0x0008, 0x0005, Vr::CS),
    (0x0008, 0x0008, Vr::CS),
    (0x0008, 0x0012, Vr::DA),
    (0x0008, 0x0013, Vr::TM),
    (0x0008, 0x0014, Vr::UI),
    (0x0008, 0x0016, Vr::UI),
    (0x0008, 0x0018, Vr::UI),
    (0x0008, 0x0020, Vr::DA),
    (0x0008, 0x0021, Vr::DA),
    (0x0008, 0x0022, Vr::DA),
    (0x0008, 0x0023, Vr::DA),
    (0x0008, 0x002A, Vr::DT),
    (0x0008, 0x0030, Vr::TM),
    (0x0008, 0x0031, Vr::TM),
    (0x0008, 0x0032, Vr::TM),
    (0x0008, 0x0033, Vr::TM),
    (0x0008, 0x0050, Vr::SH),
    (0x0008, 0x0060, Vr::CS),
    (0x0008, 0x0070, Vr::LO),
    (0x0008, 0x0080, Vr::LO),
    (0x0008, 0x0081, Vr::ST),
    (0x0008, 0x0090, Vr::PN),
    (0x0008, 0x0092, Vr::ST),
    (0x0008, 0x0094, Vr::SH),
    (0x0008, 0x0096, Vr::SQ),
    (0x0008, 0x0100, Vr::SH),
    (0x0008, 0x0102, Vr::SH),
    (0x0008, 0x0104, Vr::LO),
    (0x0008, 0x0201, Vr::SH),
    (0x0008, 0x1010, Vr::SH),
    (0x0008, 0x1030, Vr::LO),
    (0x0008, 0x103E, Vr::LO),
    (0x0008, 0x1040, Vr::LO),
    (0x0008, 0x1048, Vr::PN),
    (0x0008, 0x1049, Vr::SQ),
    (0x0008, 0x1050, Vr::PN),
    (0x0008, 0x1052, Vr::SQ),
    (0x0008, 0x1060, Vr::PN),
    (0x0008, 0x1062, Vr::SQ),
    (0x0008, 0x1070, Vr::PN),
    (0x0008, 0x1072, Vr::SQ),
    (0x0008, 0x1080, Vr::LO),
    (0x0008, 0x1090, Vr::LO),
    (0x0008, 0x1110, Vr::SQ),
    (0x0008, 0x1111, Vr::SQ),
    (0x0008, 0x1115, Vr::SQ),
    (0x0008, 0x1120, Vr::SQ),
    (0x0008, 0x1140, Vr::SQ),
    (0x0008, 0x1150, Vr::UI),
    (0x0008, 0x1155, Vr::UI),
    (0x0008, 0x2111, Vr::ST),
    (0x0008, 0x3010, Vr::UI),
    (0x0010, 0x0010, Vr::PN),
    (0x0010, 0x0020, Vr::LO),
    (0x0010, 0x0021, Vr::LO),
    (0x0010, 0x0030, Vr::DA),
    (0x0010, 0x0032, Vr::TM),
    (0x0010, 0x0040, Vr::CS),
    (0x0010, 0x1000, Vr::LO),
    (0x0010, 0x1001, Vr::PN),
    (0x0010, 0x1010, Vr::AS),
    (0x0010, 0x1020, Vr::DS),
    (0x0010, 0x1030, Vr::DS),
    (0x0010, 0x1040, Vr::LO),
    (0x0010, 0x2154, Vr::SH),
    (0x0010, 0x21B0, Vr::LT),
    (0x0010, 0x4000, Vr::LT),
    (0x0012, 0x0062, Vr::CS),
    (0x0012, 0x0063, Vr::LO),
    (0x0012, 0x0064, Vr::SQ),
    (0x0018, 0x0010, Vr::LO),
    (0x0018, 0x0015, Vr::CS),
    (0x0018, 0x0020, Vr::CS),
    (0x0018, 0x0050, Vr::DS),
    (0x0018, 0x0060, Vr::DS),
    (0x0018, 0x1000, Vr::LO),
    (0x0018, 0x1016, Vr::LO),
    (0x0018, 0x1020, Vr::LO),
    (0x0018, 0x1030, Vr::LO),
    (0x0018, 0x5100, Vr::CS),
    (0x0020, 0x000D, Vr::UI),
    (0x0020, 0x000E, Vr::UI),
    (0x0020, 0x0010, Vr::SH),
    (0x0020, 0x0011, Vr::IS),
    (0x0020, 0x0012, Vr::IS),
    (0x0020, 0x0013, Vr::IS),
    (0x0020, 0x0020, Vr::CS),
    (0x0020, 0x0032, Vr::DS),
    (0x0020, 0x0037, Vr::DS),
    (0x0020, 0x0052, Vr::UI),
    (0x0020, 0x1040, Vr::LO),
    (0x0020, 0x4000, Vr::LT),
    (0x0028, 0x0002, Vr::US),
    (0x0028, 0x0004, Vr::CS),
    (0x0028, 0x0008, Vr::IS),
    (0x0028, 0x0010, Vr::US),
    (0x0028, 0x0011, Vr::US),
    (0x0028, 0x0030, Vr::DS),
    (0x0028, 0x0100, Vr::US),
    (0x0028, 0x0101, Vr::US),
    (0x0028, 0x0102, Vr::US),
    (0x0028, 0x0103, Vr::US),
    (0x0028, 0x1050, Vr::DS),
    (0x0028, 0x1051, Vr::DS),
    (0x0032, 0x1060, Vr::LO),
    (0x0038, 0x0010, Vr::LO),
    (0x0038, 0x0020, Vr::DA),
    (0x0038, 0x0300, Vr::LO),
    (0x0038, 0x0400, Vr::LO),
    (0x0038, 0x0500, Vr::LO),
    (0x0040, 0x0244, Vr::DA),
    (0x0040, 0x0254, Vr::LO),
    (0x0040, 0x0275, Vr::SQ),
    (0x0040, 0xA124, Vr::UI),
    (0x0050, 0x0020, Vr::LO),
    (0x5000, 0x0005, Vr::US),
    (0x6000, 0x0022, Vr::LO),
    (0x6000, 0x3000, Vr::OW),
    (0x6000, 0x4000, Vr::LT),
    (0x7FE0, 0x0010, Vr::OW),
];

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn entries_sorted_for_binary_search() {
        for win in ENTRIES.windows(2) {
            assert!(
                (win[0].0, win[0].1) < (win[1].0, win[1].1),
                "dictionary out of order near ({:04X},{:04X})",
                win[1].0,
                win[1].1
            );
        }
    }

    #[test]
    fn known_lookups() {
        assert_eq!(vr_for_tag(Tag::new(0x0010, 0x0010)), Some(Vr::PN));
        assert_eq!(vr_for_tag(Tag::new(0x7FE0, 0x0010)), Some(Vr::OW));
        assert_eq!(vr_for_tag(Tag::new(0x0008, 0x1140)), Some(Vr::SQ));
        assert_eq!(vr_for_tag(Tag::new(0x0999, 0x0001)), None);
    }

    #[test]
    fn group_length_is_ul() {
        assert_eq!(vr_for_tag(Tag::new(0x0008, 0x0000)), Some(Vr::UL));
        assert_eq!(vr_for_tag(Tag::new(0x0043, 0x0000)), Some(Vr::UL));
    }

    #[test]
    fn repeating_groups_normalize() {
        assert_eq!(vr_for_tag(Tag::new(0x6002, 0x3000)), Some(Vr::OW));
        assert_eq!(vr_for_tag(Tag::new(0x5004, 0x0005)), Some(Vr::US));
    }
}
