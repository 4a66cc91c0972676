//! Deterministic pseudonym generation: sequential patient IDs, hashed UIDs
//! partitioned by patient prefix, and per-patient date shifting.

mod dates;
mod maps;

use std::sync::Mutex;

use num_bigint::BigUint;
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use dates::{
    build_shift_table, shift_date, shift_date_by, DateError, DateShiftTable, MAX_OFFSET_DAYS,
    MIN_OFFSET_DAYS,
};
pub use maps::{MappingError, PatientIdMap, UidMap, PATIENT_ID_WIDTH};

pub(crate) use maps::write_csv;

/// Placeholder that a UID root template must contain exactly once.
pub const PATIENT_PLACEHOLDER: &str = "{patient_id_new}";

/// Default UID root template; deployments substitute their own registered
/// organization root.
pub const DEFAULT_UID_ROOT_TEMPLATE: &str = "1.2.397.4.5.{patient_id_new}.8.117.";

/// Digits kept from the hashed UID value.
pub const UID_HASH_DIGITS: usize = 19;

/// DICOM UI values are limited to 64 characters.
pub const MAX_UID_LENGTH: usize = 64;

#[derive(Debug, Error)]
pub enum PseudonymError {
    #[error("uid root template must contain {PATIENT_PLACEHOLDER} exactly once, got {0:?}")]
    BadTemplate(String),
    #[error(
        "uid root template {0:?} leaves no room for {UID_HASH_DIGITS} hash digits within {MAX_UID_LENGTH} chars"
    )]
    TemplateTooLong(String),
    #[error("old UID {0:?} is not a plausible dotted-digit UID")]
    ImplausibleUid(String),
    #[error(transparent)]
    Mapping(#[from] MappingError),
}

/// UID prefix template with a per-patient slot, e.g.
/// `1.2.397.4.5.{patient_id_new}.8.117.`.
#[derive(Debug, Clone)]
pub struct UidRootTemplate(String);

impl UidRootTemplate {
    pub fn new(template: &str) -> Result<Self, PseudonymError> {
        if template.matches(PATIENT_PLACEHOLDER).count() != 1 {
            return Err(PseudonymError::BadTemplate(template.to_string()));
        }
        let widest = template.replace(PATIENT_PLACEHOLDER, &"9".repeat(PATIENT_ID_WIDTH));
        if widest.len() + UID_HASH_DIGITS > MAX_UID_LENGTH {
            return Err(PseudonymError::TemplateTooLong(template.to_string()));
        }
        Ok(UidRootTemplate(template.to_string()))
    }

    /// The prefix for one patient; always ends with a dot.
    pub fn root_for(&self, patient_new_id: &str) -> String {
        let mut root = self.0.replace(PATIENT_PLACEHOLDER, patient_new_id);
        if !root.ends_with('.') {
            root.push('.');
        }
        root
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl Default for UidRootTemplate {
    fn default() -> Self {
        UidRootTemplate::new(DEFAULT_UID_ROOT_TEMPLATE).expect("default template is valid")
    }
}

/// First 19 decimal digits of the SHA-256 digest of the old UID, read as one
/// big decimal number. In the improbable case of fewer than 19 digits, more
/// digest rounds are appended before truncation.
pub fn hash_suffix(old_uid: &str) -> String {
    let mut digits = String::new();
    let mut input = old_uid.as_bytes().to_vec();
    while digits.len() < UID_HASH_DIGITS {
        let digest = Sha256::digest(&input);
        digits.push_str(&BigUint::from_bytes_be(&digest).to_string());
        input = digest.to_vec();
    }
    digits.truncate(UID_HASH_DIGITS);
    digits
}

/// Shared mutable state for one de-identification run. Get-or-create lookups
/// are atomic; the shift table and template are fixed after construction.
#[derive(Debug)]
pub struct PseudonymContext {
    pub patient_map: Mutex<PatientIdMap>,
    pub uid_map: Mutex<UidMap>,
    pub shift_table: DateShiftTable,
    pub uid_root: UidRootTemplate,
}

impl PseudonymContext {
    pub fn new(uid_root: UidRootTemplate) -> Self {
        PseudonymContext {
            patient_map: Mutex::new(PatientIdMap::new()),
            uid_map: Mutex::new(UidMap::new()),
            shift_table: DateShiftTable::default(),
            uid_root,
        }
    }

    /// Get-or-create patient pseudonym.
    pub fn assign_patient_id(&self, old_id: &str) -> String {
        self.patient_map.lock().expect("patient map lock").assign(old_id)
    }

    /// Get-or-create hashed UID: patient-specific root plus 19 digest digits.
    pub fn hash_uid(&self, patient_new_id: &str, old_uid: &str) -> Result<String, PseudonymError> {
        if old_uid.is_empty()
            || !old_uid.bytes().all(|b| b.is_ascii_digit() || b == b'.')
        {
            return Err(PseudonymError::ImplausibleUid(old_uid.to_string()));
        }
        let mut map = self.uid_map.lock().expect("uid map lock");
        if let Some(existing) = map.get(old_uid) {
            return Ok(existing.to_string());
        }
        let new_uid = format!("{}{}", self.uid_root.root_for(patient_new_id), hash_suffix(old_uid));
        Ok(map.insert(old_uid, &new_uid)?)
    }

    /// Date portion of `value` moved back by the patient's offset.
    pub fn shift_date(
        &self,
        patient_new_id: &str,
        value: &str,
        vr: crate::dicom::Vr,
    ) -> Result<String, DateError> {
        shift_date(&self.shift_table, patient_new_id, value, vr)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use regex::Regex;

    #[test]
    fn hash_uid_shape() {
        let ctx = PseudonymContext::new(UidRootTemplate::default());
        let new_uid = ctx
            .hash_uid("0000001", "2.2.374.1.2.1964017.6.944.2103992807195684018")
            .unwrap();
        let shape = Regex::new(r"^1\.2\.397\.4\.5\.0000001\.8\.117\.\d{19}$").unwrap();
        assert!(shape.is_match(&new_uid), "unexpected shape {new_uid}");
        assert!(new_uid.len() <= MAX_UID_LENGTH);
    }

    #[test]
    fn hash_uid_deterministic_across_contexts() {
        let a = PseudonymContext::new(UidRootTemplate::default());
        let b = PseudonymContext::new(UidRootTemplate::default());
        let uid = "1.2.840.113619.2.55.3";
        assert_eq!(
            a.hash_uid("0000001", uid).unwrap(),
            b.hash_uid("0000001", uid).unwrap()
        );
    }

    #[test]
    fn distinct_uids_get_distinct_suffixes() {
        let ctx = PseudonymContext::new(UidRootTemplate::default());
        let a = ctx.hash_uid("0000001", "1.2.3.4").unwrap();
        let b = ctx.hash_uid("0000001", "1.2.3.5").unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn implausible_uid_rejected() {
        let ctx = PseudonymContext::new(UidRootTemplate::default());
        assert!(ctx.hash_uid("0000001", "not a uid").is_err());
        assert!(ctx.hash_uid("0000001", "").is_err());
    }

    #[test]
    fn template_requires_placeholder_once() {
        assert!(UidRootTemplate::new("1.2.3.").is_err());
        assert!(UidRootTemplate::new("1.{patient_id_new}.2.{patient_id_new}.").is_err());
        assert!(UidRootTemplate::new("1.2.{patient_id_new}.").is_ok());
    }

    #[test]
    fn overlong_template_rejected() {
        let long = format!("1.{}.{{patient_id_new}}.", "2.".repeat(25));
        assert!(matches!(
            UidRootTemplate::new(&long),
            Err(PseudonymError::TemplateTooLong(_))
        ));
    }

    #[test]
    fn different_patients_partition_the_prefix_space() {
        let ctx = PseudonymContext::new(UidRootTemplate::default());
        let a = ctx.hash_uid("0000001", "1.2.3.4").unwrap();
        let b = ctx.hash_uid("0000002", "1.2.3.5").unwrap();
        let prefix = |uid: &str| uid.rsplit_once('.').map(|(p, _)| p.to_string()).unwrap();
        assert_ne!(prefix(&a), prefix(&b));
        assert!(a.contains(".0000001."));
        assert!(b.contains(".0000002."));
    }

    #[test]
    fn hash_suffix_is_19_digits() {
        for uid in ["1", "1.2", "1.2.840.10008.1.2", "999.999.999"] {
            let suffix = hash_suffix(uid);
            assert_eq!(suffix.len(), 19);
            assert!(suffix.bytes().all(|b| b.is_ascii_digit()));
        }
    }
}
