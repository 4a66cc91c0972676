//! Per-patient date shifting with interval preservation.

use std::collections::BTreeMap;
use std::path::Path;

use chrono::{Days, NaiveDate};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use super::maps::{write_csv, MappingError};
use crate::dicom::Vr;

pub const MIN_OFFSET_DAYS: u32 = 1;
pub const MAX_OFFSET_DAYS: u32 = 365;

#[derive(Debug, Error)]
pub enum DateError {
    #[error("value {0:?} matches none of the supported date formats")]
    UnparseableDate(String),
    #[error("no day offset recorded for patient {0:?}")]
    NoOffsetForPatient(String),
    #[error("shifting {0:?} underflows the epoch")]
    ShiftUnderflow(String),
}

/// Day offsets keyed by new patient ID. Offsets are subtracted from dates,
/// so every shifted date lands strictly earlier than the original.
#[derive(Debug, Clone, Default)]
pub struct DateShiftTable {
    offsets: BTreeMap<String, u32>,
}

impl DateShiftTable {
    pub fn offset_for(&self, patient_new_id: &str) -> Option<u32> {
        self.offsets.get(patient_new_id).copied()
    }

    pub fn insert(&mut self, patient_new_id: &str, offset_days: u32) {
        self.offsets.insert(patient_new_id.to_string(), offset_days);
    }

    pub fn len(&self) -> usize {
        self.offsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.offsets.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, u32)> {
        self.offsets.iter().map(|(k, v)| (k.as_str(), *v))
    }

    /// `date_offsets.csv` with header `id_new,offset_days`.
    pub fn save(&self, path: &Path) -> Result<(), MappingError> {
        write_csv(
            path,
            &["id_new", "offset_days"],
            self.iter().map(|(id, days)| vec![id.to_string(), days.to_string()]),
        )
    }

    pub fn load(path: &Path) -> Result<Self, MappingError> {
        let file = std::fs::File::open(path).map_err(|source| MappingError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
        let mut table = DateShiftTable::default();
        for record in reader.records() {
            let record = record.map_err(|e| MappingError::MalformedCsv {
                path: path.display().to_string(),
                detail: e.to_string(),
            })?;
            let days = record
                .get(1)
                .and_then(|s| s.parse::<u32>().ok())
                .ok_or_else(|| MappingError::MalformedCsv {
                    path: path.display().to_string(),
                    detail: format!("bad offset in {record:?}"),
                })?;
            table.insert(&record[0], days);
        }
        Ok(table)
    }
}

/// Builds the per-patient offset table: a seeded shuffle of 1..=365 keeps
/// offsets pairwise distinct while the patient count allows it; beyond 365
/// patients sampling falls back to with-replacement and a warning is returned.
pub fn build_shift_table(patient_new_ids: &[String], seed: u64) -> (DateShiftTable, Vec<String>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut table = DateShiftTable::default();
    let mut warnings = Vec::new();

    if patient_new_ids.len() <= MAX_OFFSET_DAYS as usize {
        let mut pool: Vec<u32> = (MIN_OFFSET_DAYS..=MAX_OFFSET_DAYS).collect();
        pool.shuffle(&mut rng);
        for (id, offset) in patient_new_ids.iter().zip(pool) {
            table.insert(id, offset);
        }
    } else {
        warnings.push(format!(
            "{} patients exceed the {} distinct offsets available; sampling with replacement",
            patient_new_ids.len(),
            MAX_OFFSET_DAYS
        ));
        for id in patient_new_ids {
            table.insert(id, rng.gen_range(MIN_OFFSET_DAYS..=MAX_OFFSET_DAYS));
        }
    }
    (table, warnings)
}

/// Moves the date portion of `value` back by the patient's offset.
///
/// Supported shapes: `YYYYMMDD`, `YYYYMMDDHHMMSS`, `YYYYMMDDHHMMSS.F…`, and
/// all-digit Unix timestamps (any other digit count, seconds). Time-of-day
/// and fractional bytes are carried over unchanged.
pub fn shift_date(
    table: &DateShiftTable,
    patient_new_id: &str,
    value: &str,
    vr: Vr,
) -> Result<String, DateError> {
    let offset = table
        .offset_for(patient_new_id)
        .ok_or_else(|| DateError::NoOffsetForPatient(patient_new_id.to_string()))?;
    shift_date_by(value, offset, vr)
}

pub fn shift_date_by(value: &str, offset_days: u32, vr: Vr) -> Result<String, DateError> {
    let unparseable = || DateError::UnparseableDate(value.to_string());
    if vr == Vr::TM {
        // time-only values carry no date portion
        return Err(unparseable());
    }

    let (date_part, rest) = match value.split_once('.') {
        Some((left, frac)) => {
            if left.len() != 14
                || !all_digits(left)
                || frac.is_empty()
                || !all_digits(frac)
            {
                return Err(unparseable());
            }
            (left, Some(frac))
        }
        None => {
            if value.is_empty() || !all_digits(value) {
                return Err(unparseable());
            }
            (value, None)
        }
    };

    match (date_part.len(), rest) {
        (8, None) => Ok(shift_ymd(date_part, offset_days).ok_or_else(unparseable)?),
        (14, None) => {
            let date = shift_ymd(&date_part[..8], offset_days).ok_or_else(unparseable)?;
            validate_time(&date_part[8..14]).ok_or_else(unparseable)?;
            Ok(format!("{date}{}", &date_part[8..]))
        }
        (14, Some(frac)) => {
            let date = shift_ymd(&date_part[..8], offset_days).ok_or_else(unparseable)?;
            validate_time(&date_part[8..14]).ok_or_else(unparseable)?;
            Ok(format!("{date}{}.{frac}", &date_part[8..]))
        }
        // Day-less dates (YYYY, YYYYMM) are outside the supported formats and
        // must not be mistaken for Unix timestamps.
        (4 | 6, None) => Err(unparseable()),
        (_, None) => {
            // Unix timestamp in seconds.
            let seconds: i64 = date_part.parse().map_err(|_| unparseable())?;
            let shifted = seconds - i64::from(offset_days) * 86_400;
            if shifted < 0 {
                return Err(DateError::ShiftUnderflow(value.to_string()));
            }
            Ok(shifted.to_string())
        }
        _ => Err(unparseable()),
    }
}

fn all_digits(s: &str) -> bool {
    !s.is_empty() && s.bytes().all(|b| b.is_ascii_digit())
}

fn shift_ymd(ymd: &str, offset_days: u32) -> Option<String> {
    let year: i32 = ymd[..4].parse().ok()?;
    let month: u32 = ymd[4..6].parse().ok()?;
    let day: u32 = ymd[6..8].parse().ok()?;
    let date = NaiveDate::from_ymd_opt(year, month, day)?;
    let shifted = date.checked_sub_days(Days::new(u64::from(offset_days)))?;
    Some(shifted.format("%Y%m%d").to_string())
}

fn validate_time(hhmmss: &str) -> Option<()> {
    let hh: u32 = hhmmss[..2].parse().ok()?;
    let mm: u32 = hhmmss[2..4].parse().ok()?;
    let ss: u32 = hhmmss[4..6].parse().ok()?;
    (hh <= 23 && mm <= 59 && ss <= 59).then_some(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table_with(id: &str, days: u32) -> DateShiftTable {
        let mut t = DateShiftTable::default();
        t.insert(id, days);
        t
    }

    #[test]
    fn leap_year_borrow() {
        let t = table_with("0000001", 1);
        assert_eq!(shift_date(&t, "0000001", "20200301", Vr::DA).unwrap(), "20200229");
    }

    #[test]
    fn time_preserved() {
        let t = table_with("0000001", 14);
        assert_eq!(
            shift_date(&t, "0000001", "20240115103000", Vr::DT).unwrap(),
            "20240101103000"
        );
    }

    #[test]
    fn fraction_untouched() {
        let t = table_with("0000001", 14);
        assert_eq!(
            shift_date(&t, "0000001", "20240115103000.25", Vr::DT).unwrap(),
            "20240101103000.25"
        );
    }

    #[test]
    fn unix_timestamp_seconds() {
        let t = table_with("0000001", 2);
        assert_eq!(
            shift_date(&t, "0000001", "1704067200", Vr::LO).unwrap(),
            (1_704_067_200i64 - 2 * 86_400).to_string()
        );
    }

    #[test]
    fn rejects_partial_dates_and_garbage() {
        let t = table_with("0000001", 5);
        for bad in ["2024", "202401", "20241332", "S20240101", "", "20240115236161"] {
            assert!(
                matches!(
                    shift_date(&t, "0000001", bad, Vr::DA),
                    Err(DateError::UnparseableDate(_))
                ),
                "value {bad:?} should be unparseable"
            );
        }
        assert!(matches!(
            shift_date(&t, "0000001", "120000", Vr::TM),
            Err(DateError::UnparseableDate(_))
        ));
    }

    #[test]
    fn shift_table_is_deterministic_and_distinct() {
        let ids: Vec<String> = (1..=322).map(|i| format!("{i:07}")).collect();
        let (a, warn_a) = build_shift_table(&ids, 99);
        let (b, _) = build_shift_table(&ids, 99);
        assert!(warn_a.is_empty());
        assert_eq!(
            a.iter().collect::<Vec<_>>(),
            b.iter().collect::<Vec<_>>()
        );
        let offsets: std::collections::HashSet<u32> = a.iter().map(|(_, d)| d).collect();
        assert_eq!(offsets.len(), 322, "offsets pairwise distinct");
        assert!(offsets.iter().all(|d| (1..=365).contains(d)));
    }

    #[test]
    fn over_365_patients_warns() {
        let ids: Vec<String> = (1..=400).map(|i| format!("{i:07}")).collect();
        let (table, warnings) = build_shift_table(&ids, 7);
        assert_eq!(table.len(), 400);
        assert_eq!(warnings.len(), 1);
    }

    #[test]
    fn single_patient_offset_in_range() {
        let (table, _) = build_shift_table(&["0000001".to_string()], 3);
        let offset = table.offset_for("0000001").unwrap();
        assert!((1..=365).contains(&offset));
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("date_offsets.csv");
        let ids: Vec<String> = (1..=5).map(|i| format!("{i:07}")).collect();
        let (table, _) = build_shift_table(&ids, 11);
        table.save(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("id_new,offset_days\n"));
        let loaded = DateShiftTable::load(&path).unwrap();
        assert_eq!(
            loaded.iter().collect::<Vec<_>>(),
            table.iter().collect::<Vec<_>>()
        );
    }
}
