//! Bidirectional old→new identifier tables with CSV persistence.

use std::collections::{HashMap, HashSet};
use std::io::Write;
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum MappingError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("malformed mapping csv {path}: {detail}")]
    MalformedCsv { path: String, detail: String },
    #[error("duplicate id_old {0:?} in mapping file")]
    DuplicateOldId(String),
    #[error("UID collision: {old_a:?} and {old_b:?} both map to {new:?}")]
    UidCollision {
        old_a: String,
        old_b: String,
        new: String,
    },
}

const HEADER: [&str; 2] = ["id_old", "id_new"];

/// Width of generated patient pseudonyms ("0000001").
pub const PATIENT_ID_WIDTH: usize = 7;

/// Get-or-create table assigning sequential zero-padded patient pseudonyms.
#[derive(Debug, Default, Clone)]
pub struct PatientIdMap {
    entries: HashMap<String, String>,
    order: Vec<String>,
    counter: u64,
}

impl PatientIdMap {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns the pseudonym for `old_id`, assigning the next sequence number
    /// on first sight. Stable across calls and across save/load.
    pub fn assign(&mut self, old_id: &str) -> String {
        if let Some(new_id) = self.entries.get(old_id) {
            return new_id.clone();
        }
        self.counter += 1;
        let new_id = format!("{:0width$}", self.counter, width = PATIENT_ID_WIDTH);
        self.entries.insert(old_id.to_string(), new_id.clone());
        self.order.push(old_id.to_string());
        new_id
    }

    pub fn get(&self, old_id: &str) -> Option<&str> {
        self.entries.get(old_id).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    /// Pairs in assignment order.
    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.order
            .iter()
            .map(move |old| (old.as_str(), self.entries[old].as_str()))
    }

    pub fn new_ids(&self) -> Vec<String> {
        self.order.iter().map(|old| self.entries[old].clone()).collect()
    }

    pub fn save(&self, path: &Path) -> Result<(), MappingError> {
        save_pairs(path, self.iter())
    }

    pub fn load(path: &Path) -> Result<Self, MappingError> {
        let pairs = load_pairs(path)?;
        let mut map = PatientIdMap::new();
        for (old, new) in pairs {
            if map.entries.contains_key(&old) {
                return Err(MappingError::DuplicateOldId(old));
            }
            // Counter resumes past the highest numeric pseudonym seen.
            if let Ok(n) = new.parse::<u64>() {
                map.counter = map.counter.max(n);
            }
            map.entries.insert(old.clone(), new);
            map.order.push(old);
        }
        Ok(map)
    }
}

/// Get-or-create table for UID replacements; injective by construction, and
/// verified on insert.
#[derive(Debug, Default, Clone)]
pub struct UidMap {
    entries: HashMap<String, String>,
    order: Vec<String>,
    taken: HashSet<String>,
}

impl UidMap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, old_uid: &str) -> Option<&str> {
        self.entries.get(old_uid).map(String::as_str)
    }

    /// Records `old → new` unless already present. Two distinct old UIDs
    /// mapping to one new UID abort the run.
    pub fn insert(&mut self, old_uid: &str, new_uid: &str) -> Result<String, MappingError> {
        if let Some(existing) = self.entries.get(old_uid) {
            return Ok(existing.clone());
        }
        if self.taken.contains(new_uid) {
            let old_a = self
                .entries
                .iter()
                .find(|(_, v)| v.as_str() == new_uid)
                .map(|(k, _)| k.clone())
                .unwrap_or_default();
            return Err(MappingError::UidCollision {
                old_a,
                old_b: old_uid.to_string(),
                new: new_uid.to_string(),
            });
        }
        self.entries.insert(old_uid.to_string(), new_uid.to_string());
        self.order.push(old_uid.to_string());
        self.taken.insert(new_uid.to_string());
        Ok(new_uid.to_string())
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.order
            .iter()
            .map(move |old| (old.as_str(), self.entries[old].as_str()))
    }

    pub fn save(&self, path: &Path) -> Result<(), MappingError> {
        save_pairs(path, self.iter())
    }

    pub fn load(path: &Path) -> Result<Self, MappingError> {
        let pairs = load_pairs(path)?;
        let mut map = UidMap::new();
        for (old, new) in pairs {
            if map.entries.contains_key(&old) {
                return Err(MappingError::DuplicateOldId(old));
            }
            map.insert(&old, &new)?;
        }
        Ok(map)
    }
}

/// UTF-8 CSV, header exactly `id_old,id_new`, LF line endings.
fn save_pairs<'a>(
    path: &Path,
    pairs: impl Iterator<Item = (&'a str, &'a str)>,
) -> Result<(), MappingError> {
    let io_err = |source| MappingError::Io {
        path: path.display().to_string(),
        source,
    };
    let file = std::fs::File::create(path).map_err(io_err)?;
    let mut writer = csv::WriterBuilder::new().from_writer(file);
    writer
        .write_record(HEADER)
        .map_err(|e| csv_err(path, e.to_string()))?;
    for (old, new) in pairs {
        writer
            .write_record([old, new])
            .map_err(|e| csv_err(path, e.to_string()))?;
    }
    writer.flush().map_err(io_err)?;
    Ok(())
}

fn load_pairs(path: &Path) -> Result<Vec<(String, String)>, MappingError> {
    let file = std::fs::File::open(path).map_err(|source| MappingError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let headers = reader
        .headers()
        .map_err(|e| csv_err(path, e.to_string()))?
        .clone();
    if headers.len() != 2 || &headers[0] != HEADER[0] || &headers[1] != HEADER[1] {
        return Err(csv_err(
            path,
            format!("expected header id_old,id_new, found {headers:?}"),
        ));
    }
    let mut pairs = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_err(path, e.to_string()))?;
        if record.len() != 2 {
            return Err(csv_err(path, format!("expected 2 columns, found {}", record.len())));
        }
        pairs.push((record[0].to_string(), record[1].to_string()));
    }
    Ok(pairs)
}

fn csv_err(path: &Path, detail: String) -> MappingError {
    MappingError::MalformedCsv {
        path: path.display().to_string(),
        detail,
    }
}

/// Writes a CSV with an arbitrary header; used for the date-offset table and
/// other report-like artifacts that share the mapping-file conventions.
pub(crate) fn write_csv(
    path: &Path,
    header: &[&str],
    rows: impl Iterator<Item = Vec<String>>,
) -> Result<(), MappingError> {
    let io_err = |source| MappingError::Io {
        path: path.display().to_string(),
        source,
    };
    let file = std::fs::File::create(path).map_err(io_err)?;
    let mut writer = csv::WriterBuilder::new().from_writer(file);
    writer
        .write_record(header)
        .map_err(|e| csv_err(path, e.to_string()))?;
    for row in rows {
        writer
            .write_record(&row)
            .map_err(|e| csv_err(path, e.to_string()))?;
    }
    writer.flush().map_err(io_err)?;
    let mut file = writer.into_inner().map_err(|e| csv_err(path, e.to_string()))?;
    file.flush().map_err(io_err)?;
    Ok(())
}
