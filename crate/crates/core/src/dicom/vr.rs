use std::fmt;

/// DICOM value representation: the two-character type code of an element value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[allow(clippy::upper_case_acronyms)]
pub enum Vr {
    AE,
    AS,
    AT,
    CS,
    DA,
    DS,
    DT,
    FL,
    FD,
    IS,
    LO,
    LT,
    OB,
    OD,
    OF,
    OW,
    PN,
    SH,
    SL,
    SQ,
    SS,
    ST,
    TM,
    UI,
    UL,
    UN,
    US,
    UT,
}

impl Vr {
    pub fn from_bytes(bytes: [u8; 2]) -> Option<Vr> {
        Some(match &bytes {
            b"AE" => Vr::AE,
            b"AS" => Vr::AS,
            b"AT" => Vr::AT,
            b"CS" => Vr::CS,
            b"DA" => Vr::DA,
            b"DS" => Vr::DS,
            b"DT" => Vr::DT,
            b"FL" => Vr::FL,
            b"FD" => Vr::FD,
            b"IS" => Vr::IS,
            b"LO" => Vr::LO,
            b"LT" => Vr::LT,
            b"OB" => Vr::OB,
            b"OD" => Vr::OD,
            b"OF" => Vr::OF,
            b"OW" => Vr::OW,
            b"PN" => Vr::PN,
            b"SH" => Vr::SH,
            b"SL" => Vr::SL,
            b"SQ" => Vr::SQ,
            b"SS" => Vr::SS,
            b"ST" => Vr::ST,
            b"TM" => Vr::TM,
            b"UI" => Vr::UI,
            b"UL" => Vr::UL,
            b"UN" => Vr::UN,
            b"US" => Vr::US,
            b"UT" => Vr::UT,
            _ => return None,
        })
    }

    pub fn as_bytes(self) -> [u8; 2] {
        let s = self.as_str();
        [s.as_bytes()[0], s.as_bytes()[1]]
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Vr::AE => "AE",
            Vr::AS => "AS",
            Vr::AT => "AT",
            Vr::CS => "CS",
            Vr::DA => "DA",
            Vr::DS => "DS",
            Vr::DT => "DT",
            Vr::FL => "FL",
            Vr::FD => "FD",
            Vr::IS => "IS",
            Vr::LO => "LO",
            Vr::LT => "LT",
            Vr::OB => "OB",
            Vr::OD => "OD",
            Vr::OF => "OF",
            Vr::OW => "OW",
            Vr::PN => "PN",
            Vr::SH => "SH",
            Vr::SL => "SL",
            Vr::SQ => "SQ",
            Vr::SS => "SS",
            Vr::ST => "ST",
            Vr::TM => "TM",
            Vr::UI => "UI",
            Vr::UL => "UL",
            Vr::UN => "UN",
            Vr::US => "US",
            Vr::UT => "UT",
        }
    }

    /// In explicit-VR encodings these VRs use the long header form:
    /// 2 reserved bytes followed by a 32-bit length. All others use a
    /// 16-bit length directly after the VR code.
    pub fn uses_long_header(self) -> bool {
        matches!(
            self,
            Vr::OB | Vr::OD | Vr::OF | Vr::OW | Vr::SQ | Vr::UN | Vr::UT
        )
    }

    /// Character-string VRs whose payload decodes to text.
    pub fn is_text(self) -> bool {
        matches!(
            self,
            Vr::AE
                | Vr::AS
                | Vr::CS
                | Vr::DA
                | Vr::DS
                | Vr::DT
                | Vr::IS
                | Vr::LO
                | Vr::LT
                | Vr::PN
                | Vr::SH
                | Vr::ST
                | Vr::TM
                | Vr::UI
                | Vr::UT
        )
    }

    /// VRs whose payload is fixed binary layout; assigning text to these is
    /// a type error. UN is deliberately not in this set: unknown attributes
    /// accept raw text bytes so that dictionary gaps do not block edits.
    pub fn is_binary(self) -> bool {
        matches!(
            self,
            Vr::AT
                | Vr::FL
                | Vr::FD
                | Vr::OB
                | Vr::OD
                | Vr::OF
                | Vr::OW
                | Vr::SL
                | Vr::SQ
                | Vr::SS
                | Vr::UL
                | Vr::US
        )
    }

    /// Byte used to pad odd-length values to even length.
    pub fn pad_byte(self) -> u8 {
        match self {
            Vr::UI | Vr::OB | Vr::UN => 0x00,
            _ => b' ',
        }
    }
}

impl fmt::Display for Vr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}
