//! Grades a de-identified corpus against an answer key, rolling per-check
//! verdicts up into action, category, and scoring reports.

mod key;
mod reports;

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use regex::Regex;
use thiserror::Error;

pub use key::{load_key, save_key, AnswerKeyEntry, CheckKind, KeyError};
pub use reports::{render_reports, ReportError};

use crate::dicom::{
    get_pixels, parse_file, DataElement, DataSet, DicomFile, ParseOptions, PixelMatrix, Tag,
};
use crate::pseudonym::shift_date_by;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Pass,
    Fail,
}

/// One graded key entry.
#[derive(Debug, Clone)]
pub struct CheckResult {
    pub entry: AnswerKeyEntry,
    pub verdict: Verdict,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActionRow {
    pub action: CheckKind,
    pub fail: u64,
    pub pass: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CategoryRow {
    pub category: String,
    pub subcategory: String,
    pub fail: u64,
    pub pass: u64,
}

/// Roll-up of all verdicts.
#[derive(Debug, Clone, Default)]
pub struct ScoreSummary {
    /// Rows for the checks present in the key, in fixed report order.
    pub actions: Vec<ActionRow>,
    pub categories: Vec<CategoryRow>,
    pub fail: u64,
    pub pass: u64,
}

impl ScoreSummary {
    pub fn total(&self) -> u64 {
        self.fail + self.pass
    }

    pub fn score(&self) -> Option<f64> {
        let total = self.total();
        (total > 0).then(|| self.pass as f64 / total as f64)
    }

    /// Percentage to two decimals, e.g. "99.92%"; `None` for an empty run.
    pub fn score_display(&self) -> Option<String> {
        self.score()
            .map(|ratio| format!("{:.2}%", (ratio * 10_000.0).round() / 100.0))
    }

    pub fn from_results(results: &[CheckResult]) -> ScoreSummary {
        let mut summary = ScoreSummary::default();
        let mut per_action: BTreeMap<CheckKind, (u64, u64)> = BTreeMap::new();
        let mut per_category: BTreeMap<(String, String), (u64, u64)> = BTreeMap::new();
        for result in results {
            let action = per_action.entry(result.entry.check).or_default();
            let category = per_category
                .entry((result.entry.category.clone(), result.entry.subcategory.clone()))
                .or_default();
            match result.verdict {
                Verdict::Pass => {
                    action.1 += 1;
                    category.1 += 1;
                    summary.pass += 1;
                }
                Verdict::Fail => {
                    action.0 += 1;
                    category.0 += 1;
                    summary.fail += 1;
                }
            }
        }
        for kind in CheckKind::ALL {
            if let Some(&(fail, pass)) = per_action.get(&kind) {
                summary.actions.push(ActionRow {
                    action: kind,
                    fail,
                    pass,
                });
            }
        }
        for ((category, subcategory), (fail, pass)) in per_category {
            summary.categories.push(CategoryRow {
                category,
                subcategory,
                fail,
                pass,
            });
        }
        summary
    }
}

impl std::fmt::Display for ScoreSummary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "{:<20} {:>8} {:>10} {:>10}", "action", "Fail", "Pass", "Total")?;
        for row in &self.actions {
            writeln!(
                f,
                "{:<20} {:>8} {:>10} {:>10}",
                row.action.name(),
                row.fail,
                row.pass,
                row.fail + row.pass
            )?;
        }
        write!(
            f,
            "{:<20} {:>8} {:>10} {:>10}",
            "Total",
            self.fail,
            self.pass,
            self.total()
        )?;
        if let Some(score) = self.score_display() {
            write!(f, "  score {score}")?;
        }
        Ok(())
    }
}

/// Mapping files produced by a de-identification run, as the verifier needs
/// them.
#[derive(Debug, Default, Clone)]
pub struct Mappings {
    pub patient: HashMap<String, String>,
    pub uid: HashMap<String, String>,
    /// id_new → offset days.
    pub offsets: HashMap<String, u32>,
}

#[derive(Debug, Error)]
pub enum VerifyError {
    #[error(transparent)]
    Mapping(#[from] crate::pseudonym::MappingError),
    #[error(transparent)]
    Key(#[from] KeyError),
}

impl Mappings {
    /// Loads the three CSVs the pipeline leaves in its output directory.
    pub fn load_dir(dir: &Path) -> Result<Mappings, VerifyError> {
        let patient = crate::pseudonym::PatientIdMap::load(
            &dir.join(crate::actions::PATIENT_MAPPING_FILE),
        )?;
        let uid = crate::pseudonym::UidMap::load(&dir.join(crate::actions::UID_MAPPING_FILE))?;
        let offsets =
            crate::pseudonym::DateShiftTable::load(&dir.join(crate::actions::DATE_OFFSETS_FILE))?;
        Ok(Mappings {
            patient: patient
                .iter()
                .map(|(o, n)| (o.to_string(), n.to_string()))
                .collect(),
            uid: uid.iter().map(|(o, n)| (o.to_string(), n.to_string())).collect(),
            offsets: offsets.iter().map(|(id, d)| (id.to_string(), d)).collect(),
        })
    }

    /// De-identified counterpart of an original relative path: the patient
    /// folder is renamed by pseudonym substitution, everything else is kept.
    pub fn deid_rel_path(&self, rel: &str) -> PathBuf {
        let mut components: Vec<String> = Path::new(rel)
            .components()
            .map(|c| c.as_os_str().to_string_lossy().to_string())
            .collect();
        if components.len() >= 2 {
            let folder = components[0].clone();
            if let Some(new_id) = self.patient.get(&folder) {
                components[0] = new_id.clone();
            } else {
                let mut pairs: Vec<(&String, &String)> = self.patient.iter().collect();
                pairs.sort_by_key(|(o, _)| std::cmp::Reverse(o.len()));
                for (old, new) in pairs {
                    if folder.contains(old.as_str()) {
                        components[0] = folder.replace(old.as_str(), new);
                        break;
                    }
                }
            }
        }
        components.iter().collect()
    }
}

struct FilePair {
    original: Option<DicomFile>,
    deid: Option<DicomFile>,
    detail: String,
}

/// Evaluates every key entry. Read-only: input directories are never
/// modified, and verifying twice yields identical results.
pub fn verify_corpus(
    original_dir: &Path,
    deid_dir: &Path,
    key: &[AnswerKeyEntry],
    mappings: &Mappings,
) -> (Vec<CheckResult>, ScoreSummary) {
    let mut cache: HashMap<String, FilePair> = HashMap::new();
    let mut results = Vec::with_capacity(key.len());

    for entry in key {
        let pair = cache.entry(entry.file.clone()).or_insert_with(|| {
            load_pair(original_dir, deid_dir, &entry.file, mappings)
        });
        let (verdict, detail) = match (&pair.original, &pair.deid) {
            (Some(original), Some(deid)) => evaluate(entry, original, deid, mappings),
            _ => (Verdict::Fail, pair.detail.clone()),
        };
        results.push(CheckResult {
            entry: entry.clone(),
            verdict,
            detail,
        });
    }

    let summary = ScoreSummary::from_results(&results);
    (results, summary)
}

fn load_pair(original_dir: &Path, deid_dir: &Path, rel: &str, mappings: &Mappings) -> FilePair {
    let parse = |path: &Path| -> Result<DicomFile, String> {
        let bytes = std::fs::read(path).map_err(|e| format!("{}: {e}", path.display()))?;
        parse_file(&bytes, ParseOptions::default()).map_err(|e| format!("{}: {e}", path.display()))
    };
    let original_path = original_dir.join(rel);
    let deid_path = deid_dir.join(mappings.deid_rel_path(rel));
    match (parse(&original_path), parse(&deid_path)) {
        (Ok(original), Ok(deid)) => FilePair {
            original: Some(original),
            deid: Some(deid),
            detail: String::new(),
        },
        (original, deid) => {
            let mut details = Vec::new();
            if let Err(e) = &original {
                details.push(format!("original unreadable: {e}"));
            }
            if let Err(e) = &deid {
                details.push(format!("missing or unreadable de-identified file: {e}"));
            }
            FilePair {
                original: original.ok(),
                deid: deid.ok(),
                detail: details.join("; "),
            }
        }
    }
}

fn evaluate(
    entry: &AnswerKeyEntry,
    original: &DicomFile,
    deid: &DicomFile,
    mappings: &Mappings,
) -> (Verdict, String) {
    let outcome = match entry.check {
        CheckKind::DateShifted => check_date_shifted(entry, original, deid, mappings),
        CheckKind::PatidConsistent => check_patid_consistent(entry, deid, mappings),
        CheckKind::PixelsHidden => check_pixels_hidden(entry, deid),
        CheckKind::PixelsRetained => check_pixels_retained(entry, original, deid),
        CheckKind::TagRetained => check_tag_retained(entry, original, deid),
        CheckKind::TextNotnull => check_text_notnull(entry, deid),
        CheckKind::TextRemoved => check_text_removed(entry, deid),
        CheckKind::TextRetained => check_text_retained(entry, deid),
        CheckKind::UidChanged => check_uid_changed(entry, deid),
        CheckKind::UidConsistent => check_uid_consistent(entry, deid, mappings),
    };
    match outcome {
        Ok(()) => (Verdict::Pass, String::new()),
        Err(detail) => (Verdict::Fail, detail),
    }
}

// --- locus handling ---------------------------------------------------------

/// `(GGGG,EEEE)` steps with item indices on all but the last segment,
/// e.g. `(0008,1140)[0]/(0008,1155)`.
fn find_element<'a>(dataset: &'a DataSet, locus: &str) -> Result<&'a DataElement, String> {
    let segments: Vec<&str> = locus.split('/').collect();
    find_in_elements(dataset.elements(), &segments)
}

fn find_in_elements<'a>(
    elements: &'a [DataElement],
    segments: &[&str],
) -> Result<&'a DataElement, String> {
    let segment = *segments.first().ok_or("empty locus")?;
    if segments.len() == 1 {
        let tag: Tag = segment
            .parse()
            .map_err(|_| format!("bad locus segment {segment:?}"))?;
        return elements
            .iter()
            .find(|e| e.tag == tag)
            .ok_or_else(|| format!("element {tag} absent"));
    }
    let (tag_text, item_text) = segment
        .split_once('[')
        .ok_or_else(|| format!("bad locus segment {segment:?}"))?;
    let tag: Tag = tag_text
        .parse()
        .map_err(|_| format!("bad locus segment {segment:?}"))?;
    let item_idx: usize = item_text
        .strip_suffix(']')
        .and_then(|t| t.parse().ok())
        .ok_or_else(|| format!("bad item index in {segment:?}"))?;
    let element = elements
        .iter()
        .find(|e| e.tag == tag)
        .ok_or_else(|| format!("sequence {tag} absent"))?;
    let items = element
        .items()
        .ok_or_else(|| format!("{tag} is not a sequence"))?;
    let item = items
        .get(item_idx)
        .ok_or_else(|| format!("{tag} has no item {item_idx}"))?;
    find_in_elements(&item.elements, &segments[1..])
}

// --- individual checks --------------------------------------------------------

fn patient_new_id(
    entry: &AnswerKeyEntry,
    original: &DicomFile,
    mappings: &Mappings,
) -> Result<String, String> {
    let old = original
        .dataset
        .text(Tag::new(0x0010, 0x0020))
        .filter(|s| !s.trim().is_empty())
        .or_else(|| {
            Path::new(&entry.file)
                .components()
                .next()
                .map(|c| c.as_os_str().to_string_lossy().to_string())
        })
        .ok_or("no patient identity for file")?;
    mappings
        .patient
        .get(old.trim())
        .cloned()
        .ok_or_else(|| format!("patient {old:?} not in mapping"))
}

fn check_date_shifted(
    entry: &AnswerKeyEntry,
    original: &DicomFile,
    deid: &DicomFile,
    mappings: &Mappings,
) -> Result<(), String> {
    let element = find_element(&deid.dataset, &entry.locus)?;
    let value = element.text().ok_or("value is not text")?;
    if value == entry.expected {
        return Err(format!("value {value:?} unchanged"));
    }
    let new_id = patient_new_id(entry, original, mappings)?;
    let offset = *mappings
        .offsets
        .get(&new_id)
        .ok_or_else(|| format!("no offset recorded for {new_id}"))?;
    let expected_shifted = shift_date_by(&entry.expected, offset, element.vr)
        .map_err(|e| format!("original {:?} unshiftable: {e}", entry.expected))?;
    if value == expected_shifted {
        Ok(())
    } else {
        Err(format!(
            "expected {expected_shifted:?} (offset {offset}), found {value:?}"
        ))
    }
}

fn check_patid_consistent(
    entry: &AnswerKeyEntry,
    deid: &DicomFile,
    mappings: &Mappings,
) -> Result<(), String> {
    let mapped = mappings
        .patient
        .get(entry.expected.trim())
        .ok_or_else(|| format!("patient {:?} not in mapping", entry.expected))?;
    let element = find_element(&deid.dataset, &entry.locus)?;
    let value = element.text().ok_or("value is not text")?;
    if value.trim() == mapped {
        Ok(())
    } else {
        Err(format!("expected {mapped:?}, found {value:?}"))
    }
}

/// (frame, (x0, y0, x1, y1))
type FrameBox = (u32, (u32, u32, u32, u32));

fn parse_box(text: &str) -> Result<FrameBox, String> {
    let (frame, rect) = text
        .split_once(':')
        .ok_or_else(|| format!("bad box {text:?}"))?;
    let frame: u32 = frame.trim().parse().map_err(|_| format!("bad frame in {text:?}"))?;
    let coords: Vec<u32> = rect
        .split(',')
        .map(|c| c.trim().parse::<u32>())
        .collect::<Result<_, _>>()
        .map_err(|_| format!("bad coordinates in {text:?}"))?;
    if coords.len() != 4 {
        return Err(format!("expected 4 coordinates in {text:?}"));
    }
    Ok((frame, (coords[0], coords[1], coords[2], coords[3])))
}

fn pixel_matrix(file: &DicomFile) -> Result<PixelMatrix, String> {
    get_pixels(file)
        .map_err(|e| e.to_string())?
        .ok_or_else(|| "file has no pixel data".to_string())
}

fn check_pixels_hidden(entry: &AnswerKeyEntry, deid: &DicomFile) -> Result<(), String> {
    let locus = entry
        .locus
        .strip_prefix("pixels:")
        .ok_or_else(|| format!("bad pixel locus {:?}", entry.locus))?;
    let (frame, (x0, y0, x1, y1)) = parse_box(locus)?;
    let fill: u16 = if entry.expected.trim().is_empty() {
        0
    } else {
        entry
            .expected
            .trim()
            .parse()
            .map_err(|_| format!("bad fill value {:?}", entry.expected))?
    };
    let matrix = pixel_matrix(deid)?;
    let bps = matrix.bytes_per_sample();
    let fill_bytes: Vec<u8> = match bps {
        1 => vec![fill as u8],
        _ if matrix.big_endian => fill.to_be_bytes().to_vec(),
        _ => fill.to_le_bytes().to_vec(),
    };
    let spp = matrix.samples_per_pixel as usize;
    let base = frame as usize * matrix.frame_len();
    for y in y0..y1.min(matrix.rows) {
        for x in x0..x1.min(matrix.columns) {
            let pixel = base + (y as usize * matrix.columns as usize + x as usize) * spp * bps;
            for s in 0..spp {
                let at = pixel + s * bps;
                if matrix.data[at..at + bps] != fill_bytes[..bps.min(fill_bytes.len())] {
                    return Err(format!("sample at ({x},{y}) not filled"));
                }
            }
        }
    }
    Ok(())
}

fn check_pixels_retained(
    entry: &AnswerKeyEntry,
    original: &DicomFile,
    deid: &DicomFile,
) -> Result<(), String> {
    let original_matrix = pixel_matrix(original)?;
    let deid_matrix = pixel_matrix(deid)?;
    if original_matrix.data.len() != deid_matrix.data.len() {
        return Err(format!(
            "pixel buffer length changed: {} -> {}",
            original_matrix.data.len(),
            deid_matrix.data.len()
        ));
    }
    let mut exclusions = Vec::new();
    for part in entry.expected.split(';').filter(|p| !p.trim().is_empty()) {
        exclusions.push(parse_box(part)?);
    }
    let columns = original_matrix.columns as usize;
    let spp = original_matrix.samples_per_pixel as usize;
    let bps = original_matrix.bytes_per_sample();
    let frame_len = original_matrix.frame_len();

    for (idx, (a, b)) in original_matrix
        .data
        .iter()
        .zip(deid_matrix.data.iter())
        .enumerate()
    {
        if a == b {
            continue;
        }
        // byte index -> frame, x, y
        let frame = (idx / frame_len) as u32;
        let within = idx % frame_len;
        let pixel = within / (spp * bps);
        let x = (pixel % columns) as u32;
        let y = (pixel / columns) as u32;
        let excluded = exclusions.iter().any(|&(f, (x0, y0, x1, y1))| {
            f == frame && (x0..x1).contains(&x) && (y0..y1).contains(&y)
        });
        if !excluded {
            return Err(format!("pixel ({x},{y}) frame {frame} altered outside redaction boxes"));
        }
    }
    Ok(())
}

fn check_tag_retained(
    entry: &AnswerKeyEntry,
    original: &DicomFile,
    deid: &DicomFile,
) -> Result<(), String> {
    let before = find_element(&original.dataset, &entry.locus)
        .map_err(|e| format!("original: {e}"))?;
    let after = find_element(&deid.dataset, &entry.locus)?;
    if before.value == after.value && before.vr == after.vr {
        Ok(())
    } else {
        Err("value altered".to_string())
    }
}

fn check_text_notnull(entry: &AnswerKeyEntry, deid: &DicomFile) -> Result<(), String> {
    let element = find_element(&deid.dataset, &entry.locus)?;
    let value = element.text().ok_or("value is not text")?;
    if value.trim().is_empty() {
        Err("value is empty".to_string())
    } else {
        Ok(())
    }
}

fn check_text_removed(entry: &AnswerKeyEntry, deid: &DicomFile) -> Result<(), String> {
    let element = match find_element(&deid.dataset, &entry.locus) {
        Ok(e) => e,
        // absent element: nothing survived
        Err(_) => return Ok(()),
    };
    let value = match element.text() {
        Some(v) => v,
        None => return Ok(()),
    };
    if value
        .to_ascii_uppercase()
        .contains(&entry.expected.to_ascii_uppercase())
    {
        Err(format!("forbidden {:?} present in {value:?}", entry.expected))
    } else {
        Ok(())
    }
}

fn check_text_retained(entry: &AnswerKeyEntry, deid: &DicomFile) -> Result<(), String> {
    let element = find_element(&deid.dataset, &entry.locus)?;
    let value = element.text().ok_or("value is not text")?;
    if value
        .to_ascii_uppercase()
        .contains(&entry.expected.to_ascii_uppercase())
    {
        Ok(())
    } else {
        Err(format!("required {:?} missing from {value:?}", entry.expected))
    }
}

fn new_uid_shape() -> &'static Regex {
    static SHAPE: OnceLock<Regex> = OnceLock::new();
    SHAPE.get_or_init(|| Regex::new(r"^(?:\d+\.)+\d{19}$").expect("shape regex"))
}

fn check_uid_changed(entry: &AnswerKeyEntry, deid: &DicomFile) -> Result<(), String> {
    let element = find_element(&deid.dataset, &entry.locus)?;
    let value = element.text().ok_or("value is not text")?;
    let value = value.trim();
    if value == entry.expected.trim() {
        return Err("UID unchanged".to_string());
    }
    if value.len() > 64 {
        return Err(format!("UID too long ({} chars)", value.len()));
    }
    if !new_uid_shape().is_match(value) {
        return Err(format!("UID {value:?} does not match the hashed shape"));
    }
    Ok(())
}

fn check_uid_consistent(
    entry: &AnswerKeyEntry,
    deid: &DicomFile,
    mappings: &Mappings,
) -> Result<(), String> {
    let mapped = mappings
        .uid
        .get(entry.expected.trim())
        .ok_or_else(|| format!("UID {:?} not in mapping", entry.expected))?;
    let element = find_element(&deid.dataset, &entry.locus)?;
    let value = element.text().ok_or("value is not text")?;
    if value.trim() == mapped {
        Ok(())
    } else {
        Err(format!("expected mapped {mapped:?}, found {:?}", value.trim()))
    }
}
