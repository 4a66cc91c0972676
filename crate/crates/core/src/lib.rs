//! DICOM de-identification engine.
//!
//! Parses DICOM Part-10 files, applies a declarative per-tag ruleset
//! (remove, keep, zero, patient-ID lookup, UID hashing, date shifting,
//! free-text scrubbing), redacts burned-in pixel text from OCR word boxes,
//! and grades de-identified output against an answer key.

pub mod actions;
pub mod dicom;
pub mod pseudonym;
pub mod redact;
pub mod scrub;
pub mod synth;
pub mod verify;
