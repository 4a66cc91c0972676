//! Applies a ruleset to one parsed file: every element at every depth gets
//! exactly one action and one log row.

use std::collections::BTreeMap;

use sha2::{Digest, Sha256};
use thiserror::Error;

use super::ruleset::{ActionCode, Ruleset};
use crate::dicom::{
    DataElement, DicomFile, ElementPath, ElementValue, Tag, MEDIA_SOP_INSTANCE_UID_TAG,
};
use crate::pseudonym::{PseudonymContext, PseudonymError};
use crate::scrub::{PatientContext, RecognizerSet};

const PATIENT_NAME: Tag = Tag::new(0x0010, 0x0010);
const PATIENT_ID: Tag = Tag::new(0x0010, 0x0020);

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Pseudonym(#[from] PseudonymError),
}

/// One row per visited element.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActionLogEntry {
    pub file: String,
    /// Sequence ancestry, empty at the dataset root.
    pub path: String,
    pub tag: String,
    pub code: &'static str,
    pub old_digest: String,
    pub new_digest: String,
}

#[derive(Debug, Default)]
pub struct ApplyOutcome {
    pub log: Vec<ActionLogEntry>,
    pub diagnostics: Vec<String>,
    pub counts: BTreeMap<&'static str, u64>,
}

/// Rule interpreter bound to one run's shared state.
pub struct ActionEngine<'a> {
    pub ruleset: &'a Ruleset,
    pub recognizers: &'a RecognizerSet,
    pub ctx: &'a PseudonymContext,
}

struct FileState<'a> {
    file_id: &'a str,
    patient_new: Option<String>,
    scrub_ctx: PatientContext,
    outcome: ApplyOutcome,
}

impl FileState<'_> {
    fn log(&mut self, path: &ElementPath, tag: Tag, code: &'static str, old: String, new: String) {
        *self.outcome.counts.entry(code).or_insert(0) += 1;
        self.outcome.log.push(ActionLogEntry {
            file: self.file_id.to_string(),
            path: path.to_string(),
            tag: tag.to_string(),
            code,
            old_digest: old,
            new_digest: new,
        });
    }

    fn diagnose(&mut self, path: &ElementPath, tag: Tag, detail: impl std::fmt::Display) {
        self.outcome
            .diagnostics
            .push(format!("{}: {} {detail}", self.file_id, path.locus(tag)));
    }
}

/// Digest of an element value: content hash for primitive payloads, a
/// structural fingerprint (item count) for sequences.
pub fn element_digest(element: &DataElement) -> String {
    match &element.value {
        ElementValue::Bytes(bytes) => short_hash(bytes),
        ElementValue::Sequence(items) => short_hash(format!("SQ:{}", items.len()).as_bytes()),
    }
}

fn short_hash(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut out = String::with_capacity(16);
    for byte in &digest[..8] {
        out.push_str(&format!("{byte:02x}"));
    }
    out
}

impl ActionEngine<'_> {
    /// Applies the ruleset to `file` in place. `fallback_patient_id` stands in
    /// for a missing (0010,0020), typically the patient folder name.
    pub fn apply_rules(
        &self,
        file: &mut DicomFile,
        file_id: &str,
        fallback_patient_id: Option<&str>,
    ) -> Result<ApplyOutcome, EngineError> {
        // The paper's flow keeps the identity attributes aside before any
        // rule fires, so LOOKUP and text scrubbing can reference them even
        // after removal.
        let old_pid = file
            .dataset
            .text(PATIENT_ID)
            .filter(|s| !s.trim().is_empty())
            .or_else(|| fallback_patient_id.map(str::to_string));
        let old_name = file.dataset.text(PATIENT_NAME);

        let mut state = FileState {
            file_id,
            patient_new: old_pid.as_deref().map(|id| self.ctx.assign_patient_id(id)),
            scrub_ctx: PatientContext::from_identity(old_pid.as_deref(), old_name.as_deref()),
            outcome: ApplyOutcome::default(),
        };

        let mut path = ElementPath::root();
        let new_elements =
            self.process_level(file.dataset.elements(), &mut path, &mut state)?;
        file.dataset = crate::dicom::DataSet::from_elements(new_elements);

        self.sync_file_meta(file);
        Ok(state.outcome)
    }

    fn process_level(
        &self,
        elements: &[DataElement],
        path: &mut ElementPath,
        state: &mut FileState<'_>,
    ) -> Result<Vec<DataElement>, EngineError> {
        let mut out = Vec::with_capacity(elements.len());
        for element in elements {
            if let Some(kept) = self.process_element(element, path, state)? {
                out.push(kept);
            }
        }
        Ok(out)
    }

    fn process_element(
        &self,
        element: &DataElement,
        path: &mut ElementPath,
        state: &mut FileState<'_>,
    ) -> Result<Option<DataElement>, EngineError> {
        let tag = element.tag;
        let code = self.ruleset.action_for(tag, !path.is_root());
        let old_digest = element_digest(element);

        match code {
            ActionCode::Remove => {
                state.log(path, tag, "X", old_digest, "-".to_string());
                log_subtree_removed(element, path, state);
                Ok(None)
            }
            ActionCode::Zero => {
                let mut zeroed = element.clone();
                zeroed.set_empty();
                state.log(path, tag, "Z", old_digest, element_digest(&zeroed));
                log_subtree_removed(element, path, state);
                Ok(Some(zeroed))
            }
            ActionCode::Keep => self.keep(element, path, state, old_digest, None),
            ActionCode::LookupPatient => {
                let Some(new_id) = state.patient_new.clone() else {
                    return self.keep(element, path, state, old_digest, Some("no patient identity for LOOKUP"));
                };
                self.replace_text(element, path, state, old_digest, "LOOKUP", new_id)
            }
            ActionCode::HashUid => {
                let Some(patient_new) = state.patient_new.clone() else {
                    return self.keep(element, path, state, old_digest, Some("no patient identity for HASHUID"));
                };
                let Some(old_uid) = element.text() else {
                    return self.keep(element, path, state, old_digest, Some("HASHUID on non-text value"));
                };
                match self.ctx.hash_uid(&patient_new, old_uid.trim()) {
                    Ok(new_uid) => {
                        self.replace_text(element, path, state, old_digest, "HASHUID", new_uid)
                    }
                    // collisions abort the run; anything else keeps the value
                    Err(PseudonymError::Mapping(e)) => Err(PseudonymError::Mapping(e).into()),
                    Err(e) => {
                        let detail = e.to_string();
                        self.keep(element, path, state, old_digest, Some(&detail))
                    }
                }
            }
            ActionCode::IncrementDate => {
                let Some(patient_new) = state.patient_new.clone() else {
                    return self.keep(element, path, state, old_digest, Some("no patient identity for INCDATE"));
                };
                let Some(value) = element.text() else {
                    return self.keep(element, path, state, old_digest, Some("INCDATE on non-text value"));
                };
                match self.ctx.shift_date(&patient_new, &value, element.vr) {
                    Ok(shifted) => {
                        self.replace_text(element, path, state, old_digest, "INCDATE", shifted)
                    }
                    Err(e) => {
                        let detail = e.to_string();
                        self.keep(element, path, state, old_digest, Some(&detail))
                    }
                }
            }
            ActionCode::CleanText => {
                if !element.vr.is_text() {
                    return self.keep(element, path, state, old_digest, Some("CLEAN on non-text value"));
                }
                let Some(value) = element.text() else {
                    return self.keep(element, path, state, old_digest, Some("CLEAN on non-text value"));
                };
                let scrubbed = self.recognizers.scrub_value(&value, &state.scrub_ctx);
                self.replace_text(element, path, state, old_digest, "CLEAN", scrubbed.output)
            }
        }
    }

    /// KEEP semantics: bytes untouched, but rules still reach elements nested
    /// inside kept sequences. Also the landing spot for per-element failures,
    /// which are logged as KEEP with a diagnostic so one bad value never
    /// aborts a file.
    fn keep(
        &self,
        element: &DataElement,
        path: &mut ElementPath,
        state: &mut FileState<'_>,
        old_digest: String,
        failure: Option<&str>,
    ) -> Result<Option<DataElement>, EngineError> {
        if let Some(detail) = failure {
            state.diagnose(path, element.tag, format!("kept: {detail}"));
        }
        let kept = match &element.value {
            ElementValue::Sequence(items) => {
                let mut new_items = Vec::with_capacity(items.len());
                for (idx, item) in items.iter().enumerate() {
                    path.0.push((element.tag, idx));
                    let elements = self.process_level(&item.elements, path, state)?;
                    path.0.pop();
                    new_items.push(crate::dicom::SequenceItem {
                        elements,
                        undefined_length: item.undefined_length,
                    });
                }
                let mut kept = element.clone();
                kept.value = ElementValue::Sequence(new_items);
                kept
            }
            ElementValue::Bytes(_) => element.clone(),
        };
        let new_digest = element_digest(&kept);
        state.log(path, element.tag, "K", old_digest, new_digest);
        Ok(Some(kept))
    }

    fn replace_text(
        &self,
        element: &DataElement,
        path: &mut ElementPath,
        state: &mut FileState<'_>,
        old_digest: String,
        code: &'static str,
        value: String,
    ) -> Result<Option<DataElement>, EngineError> {
        let mut replaced = element.clone();
        if let Err(e) = replaced.set_text(&value) {
            let detail = e.to_string();
            return self.keep(element, path, state, old_digest, Some(&detail));
        }
        state.log(path, element.tag, code, old_digest, element_digest(&replaced));
        Ok(Some(replaced))
    }

    /// Keeps (0002,0003) Media Storage SOP Instance UID in step with a
    /// rehashed (0008,0018); the meta group is otherwise left alone.
    fn sync_file_meta(&self, file: &mut DicomFile) {
        let Some(old_media_uid) = file.file_meta.text(MEDIA_SOP_INSTANCE_UID_TAG) else {
            return;
        };
        let mapped = {
            let map = self.ctx.uid_map.lock().expect("uid map lock");
            map.get(old_media_uid.trim()).map(str::to_string)
        };
        if let Some(new_uid) = mapped {
            let _ = file.file_meta.set_text(MEDIA_SOP_INSTANCE_UID_TAG, &new_uid);
        }
    }
}

/// Descendants of a removed or zeroed container each get their own X row, so
/// every walk visit of the input corresponds to exactly one log entry.
fn log_subtree_removed(element: &DataElement, path: &mut ElementPath, state: &mut FileState<'_>) {
    if let ElementValue::Sequence(items) = &element.value {
        for (idx, item) in items.iter().enumerate() {
            path.0.push((element.tag, idx));
            for child in &item.elements {
                state.log(path, child.tag, "X", element_digest(child), "-".to_string());
                log_subtree_removed(child, path, state);
            }
            path.0.pop();
        }
    }
}
