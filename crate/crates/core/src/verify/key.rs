//! Answer-key records: the ground-truth checks a de-identified corpus is
//! graded against.

use std::fmt;
use std::path::Path;

use thiserror::Error;

/// The ten check kinds, in report order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum CheckKind {
    DateShifted,
    PatidConsistent,
    PixelsHidden,
    PixelsRetained,
    TagRetained,
    TextNotnull,
    TextRemoved,
    TextRetained,
    UidChanged,
    UidConsistent,
}

impl CheckKind {
    pub const ALL: [CheckKind; 10] = [
        CheckKind::DateShifted,
        CheckKind::PatidConsistent,
        CheckKind::PixelsHidden,
        CheckKind::PixelsRetained,
        CheckKind::TagRetained,
        CheckKind::TextNotnull,
        CheckKind::TextRemoved,
        CheckKind::TextRetained,
        CheckKind::UidChanged,
        CheckKind::UidConsistent,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CheckKind::DateShifted => "date_shifted",
            CheckKind::PatidConsistent => "patid_consistent",
            CheckKind::PixelsHidden => "pixels_hidden",
            CheckKind::PixelsRetained => "pixels_retained",
            CheckKind::TagRetained => "tag_retained",
            CheckKind::TextNotnull => "text_notnull",
            CheckKind::TextRemoved => "text_removed",
            CheckKind::TextRetained => "text_retained",
            CheckKind::UidChanged => "uid_changed",
            CheckKind::UidConsistent => "uid_consistent",
        }
    }

    pub fn parse(name: &str) -> Option<CheckKind> {
        CheckKind::ALL.into_iter().find(|c| c.name() == name)
    }
}

impl fmt::Display for CheckKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One required check.
///
/// `locus` grammar:
/// - element: a tag path such as `(0008,1030)` or `(0008,1140)[0]/(0008,1155)`
/// - `pixels` — the whole pixel buffer (pixels_retained; `expected` lists the
///   excluded boxes as `frame:x0,y0,x1,y1` joined with `;`, empty for none)
/// - `pixels:<frame>:<x0>,<y0>,<x1>,<y1>` — one box (pixels_hidden;
///   `expected` is the fill value, empty meaning 0)
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnswerKeyEntry {
    pub file: String,
    pub locus: String,
    pub check: CheckKind,
    pub expected: String,
    pub category: String,
    pub subcategory: String,
}

#[derive(Debug, Error)]
pub enum KeyError {
    #[error("cannot access answer key {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("malformed answer key {path}: {detail}")]
    Malformed { path: String, detail: String },
}

const KEY_HEADER: [&str; 6] = ["file", "locus", "check", "expected", "category", "subcategory"];

pub fn save_key(path: &Path, entries: &[AnswerKeyEntry]) -> Result<(), KeyError> {
    let io_err = |source| KeyError::Io {
        path: path.display().to_string(),
        source,
    };
    let file = std::fs::File::create(path).map_err(io_err)?;
    let mut writer = csv::Writer::from_writer(file);
    let csv_err = |detail: String| KeyError::Malformed {
        path: path.display().to_string(),
        detail,
    };
    writer
        .write_record(KEY_HEADER)
        .map_err(|e| csv_err(e.to_string()))?;
    for entry in entries {
        writer
            .write_record([
                entry.file.as_str(),
                entry.locus.as_str(),
                entry.check.name(),
                entry.expected.as_str(),
                entry.category.as_str(),
                entry.subcategory.as_str(),
            ])
            .map_err(|e| csv_err(e.to_string()))?;
    }
    writer.flush().map_err(io_err)?;
    Ok(())
}

pub fn load_key(path: &Path) -> Result<Vec<AnswerKeyEntry>, KeyError> {
    let file = std::fs::File::open(path).map_err(|source| KeyError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let malformed = |detail: String| KeyError::Malformed {
        path: path.display().to_string(),
        detail,
    };
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let headers = reader.headers().map_err(|e| malformed(e.to_string()))?.clone();
    let expected_header: Vec<&str> = KEY_HEADER.to_vec();
    let found: Vec<&str> = headers.iter().collect();
    if found != expected_header {
        return Err(malformed(format!(
            "expected header {expected_header:?}, found {found:?}"
        )));
    }
    let mut entries = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let record = record.map_err(|e| malformed(e.to_string()))?;
        if record.len() != 6 {
            return Err(malformed(format!(
                "row {}: expected 6 columns, found {}",
                idx + 2,
                record.len()
            )));
        }
        let check = CheckKind::parse(&record[2])
            .ok_or_else(|| malformed(format!("row {}: unknown check {:?}", idx + 2, &record[2])))?;
        entries.push(AnswerKeyEntry {
            file: record[0].to_string(),
            locus: record[1].to_string(),
            check,
            expected: record[3].to_string(),
            category: record[4].to_string(),
            subcategory: record[5].to_string(),
        });
    }
    Ok(entries)
}
