//! Two-pass corpus pipeline: pixels first across every file, then metadata.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use super::engine::{ActionEngine, ActionLogEntry, EngineError};
use super::ruleset::Ruleset;
use crate::dicom::{
    get_pixels, parse_file, put_pixels, write_file, ParseOptions, PixelError, Tag, WriteOptions,
};
use crate::pseudonym::{
    build_shift_table, PatientIdMap, PseudonymContext, PseudonymError, UidRootTemplate,
};
use crate::redact::{detect_sensitive_boxes, mask_boxes, OcrSource};
use crate::scrub::{PatientContext, RecognizerSet};

pub const PATIENT_MAPPING_FILE: &str = "patient_id_mapping.csv";
pub const UID_MAPPING_FILE: &str = "uid_mapping.csv";
pub const DATE_OFFSETS_FILE: &str = "date_offsets.csv";
pub const ACTION_LOG_FILE: &str = "action_log.csv";
pub const SUMMARY_FILE: &str = "summary.json";

const PATIENT_ID: Tag = Tag::new(0x0010, 0x0020);
const PATIENT_NAME: Tag = Tag::new(0x0010, 0x0010);
const STAGE_DIR: &str = ".deid-stage";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error(transparent)]
    Pseudonym(#[from] PseudonymError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error("cannot serialize {path}: {detail}")]
    Serialize { path: String, detail: String },
    #[error(transparent)]
    Mapping(#[from] crate::pseudonym::MappingError),
}

#[derive(Debug, Clone, Copy, Default)]
pub struct PipelineOptions {
    pub seed: u64,
    /// 0 means the rayon default (logical CPU count).
    pub workers: usize,
    pub fill_value: u16,
    pub strict_parse: bool,
}

#[derive(Debug, Clone, Serialize, PartialEq, Eq)]
pub struct FailedFile {
    pub path: String,
    pub error: String,
}

/// Run-level accounting; serialized as `summary.json` in the output tree.
#[derive(Debug, Default, Serialize)]
pub struct CorpusSummary {
    pub files_processed: usize,
    pub failed: Vec<FailedFile>,
    pub patients: usize,
    pub elements: u64,
    pub code_counts: BTreeMap<String, u64>,
    pub redacted_images: usize,
    pub redaction_boxes: usize,
    pub warnings: Vec<String>,
}

struct StagedFile {
    rel: PathBuf,
    patient_folder: Option<String>,
    redaction_boxes: usize,
    warnings: Vec<String>,
    patient_keys: Vec<String>,
}

struct ProcessedFile {
    log: Vec<ActionLogEntry>,
    diagnostics: Vec<String>,
    counts: BTreeMap<&'static str, u64>,
}

/// Runs the full de-identification pipeline: pass 1 redacts pixels for every
/// file, pass 2 rewrites metadata, then mapping tables and the action log are
/// persisted next to the output tree.
pub fn run_pipeline(
    in_dir: &Path,
    out_dir: &Path,
    ruleset: &Ruleset,
    recognizers: &RecognizerSet,
    ocr: &dyn OcrSource,
    options: &PipelineOptions,
) -> Result<CorpusSummary, PipelineError> {
    let io_err = |path: &Path| {
        let path = path.display().to_string();
        move |source| PipelineError::Io {
            path: path.clone(),
            source,
        }
    };

    std::fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let stage_dir = out_dir.join(STAGE_DIR);
    if stage_dir.exists() {
        std::fs::remove_dir_all(&stage_dir).map_err(io_err(&stage_dir))?;
    }
    std::fs::create_dir_all(&stage_dir).map_err(io_err(&stage_dir))?;

    let files = discover_files(in_dir)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(options.workers)
        .build()
        .expect("worker pool");

    let mut summary = CorpusSummary::default();

    // ---- pass 1: pixel redaction for all files ----------------------------
    let pass1: Vec<Result<StagedFile, FailedFile>> = pool.install(|| {
        files
            .par_iter()
            .map(|rel| pass1_one_file(in_dir, &stage_dir, rel, recognizers, ocr, options))
            .collect()
    });

    let mut staged = Vec::new();
    for result in pass1 {
        match result {
            Ok(record) => staged.push(record),
            Err(failed) => summary.failed.push(failed),
        }
    }

    // ---- barrier: assign patient pseudonyms and date offsets --------------
    let patient_keys: BTreeSet<String> = staged
        .iter()
        .flat_map(|r| r.patient_keys.iter().cloned())
        .collect();
    let mut patient_map = PatientIdMap::new();
    for key in &patient_keys {
        patient_map.assign(key);
    }
    let (shift_table, shift_warnings) = build_shift_table(&patient_map.new_ids(), options.seed);
    summary.warnings.extend(shift_warnings);

    let uid_root = UidRootTemplate::new(&ruleset.uid_root_template)?;
    let mut ctx = PseudonymContext::new(uid_root);
    ctx.patient_map = std::sync::Mutex::new(patient_map);
    ctx.shift_table = shift_table;

    // ---- pass 2: metadata rules --------------------------------------------
    let engine = ActionEngine {
        ruleset,
        recognizers,
        ctx: &ctx,
    };
    let pass2: Vec<Result<Result<ProcessedFile, FailedFile>, EngineError>> = pool.install(|| {
        staged
            .par_iter()
            .map(|record| pass2_one_file(&stage_dir, out_dir, record, &engine, &ctx))
            .collect()
    });

    let mut log_entries: Vec<ActionLogEntry> = Vec::new();
    for (record, result) in staged.iter().zip(pass2) {
        summary.warnings.extend(record.warnings.iter().cloned());
        summary.redaction_boxes += record.redaction_boxes;
        if record.redaction_boxes > 0 {
            summary.redacted_images += 1;
        }
        match result {
            Ok(Ok(done)) => {
                summary.files_processed += 1;
                summary.elements += done.log.len() as u64;
                for (code, n) in done.counts {
                    *summary.code_counts.entry(code.to_string()).or_insert(0) += n;
                }
                summary.warnings.extend(done.diagnostics);
                log_entries.extend(done.log);
            }
            Ok(Err(failed)) => summary.failed.push(failed),
            // UID collisions abort the whole run
            Err(fatal) => return Err(fatal.into()),
        }
    }

    write_action_log(&out_dir.join(ACTION_LOG_FILE), &mut log_entries)?;
    persist_run_artifacts(out_dir, &ctx, &mut summary)?;
    std::fs::remove_dir_all(&stage_dir).map_err(io_err(&stage_dir))?;
    Ok(summary)
}

/// `action_log.csv`: one row per visited element, sorted for determinism
/// under parallel workers.
fn write_action_log(path: &Path, entries: &mut [ActionLogEntry]) -> Result<(), PipelineError> {
    entries.sort_by(|a, b| {
        (&a.file, &a.path, &a.tag).cmp(&(&b.file, &b.path, &b.tag))
    });
    crate::pseudonym::write_csv(
        path,
        &["file", "path", "tag", "code", "old_digest", "new_digest"],
        entries.iter().map(|e| {
            vec![
                e.file.clone(),
                e.path.clone(),
                e.tag.clone(),
                e.code.to_string(),
                e.old_digest.clone(),
                e.new_digest.clone(),
            ]
        }),
    )?;
    Ok(())
}

fn discover_files(in_dir: &Path) -> Result<Vec<PathBuf>, PipelineError> {
    let mut files = Vec::new();
    for entry in walkdir::WalkDir::new(in_dir).sort_by_file_name() {
        let entry = entry.map_err(|e| PipelineError::Io {
            path: in_dir.display().to_string(),
            source: e.into(),
        })?;
        if !entry.file_type().is_file() {
            continue;
        }
        let name = entry.file_name().to_string_lossy();
        // OCR sidecars and generator/run artifacts travel with a corpus but
        // are not DICOM instances.
        let artifact = matches!(
            name.as_ref(),
            "answer_key.csv" | "spec.lock" | PATIENT_MAPPING_FILE | UID_MAPPING_FILE
                | DATE_OFFSETS_FILE | ACTION_LOG_FILE | SUMMARY_FILE
        );
        if name.ends_with(".ocr.json") || artifact {
            continue;
        }
        let rel = entry
            .path()
            .strip_prefix(in_dir)
            .expect("walkdir yields children of in_dir")
            .to_path_buf();
        files.push(rel);
    }
    Ok(files)
}

fn pass1_one_file(
    in_dir: &Path,
    stage_dir: &Path,
    rel: &Path,
    recognizers: &RecognizerSet,
    ocr: &dyn OcrSource,
    options: &PipelineOptions,
) -> Result<StagedFile, FailedFile> {
    let in_path = in_dir.join(rel);
    let fail = |error: String| FailedFile {
        path: rel.display().to_string(),
        error,
    };

    let bytes = std::fs::read(&in_path).map_err(|e| fail(e.to_string()))?;
    let mut file = parse_file(
        &bytes,
        ParseOptions {
            strict: options.strict_parse,
        },
    )
    .map_err(|e| fail(e.to_string()))?;

    let mut warnings: Vec<String> = file
        .parse_warnings
        .iter()
        .map(|w| format!("{}: {w}", rel.display()))
        .collect();

    let folder = rel
        .components()
        .next()
        .filter(|_| rel.components().count() > 1)
        .map(|c| c.as_os_str().to_string_lossy().to_string());
    let pid_value = file.dataset.text(PATIENT_ID).filter(|s| !s.trim().is_empty());
    let mut patient_keys = Vec::new();
    if let Some(f) = &folder {
        patient_keys.push(f.clone());
    }
    if let Some(p) = &pid_value {
        patient_keys.push(p.clone());
    }

    let words = ocr.words_for(&in_path).map_err(|e| fail(e.to_string()))?;
    let mut staged_bytes = bytes;
    let mut boxes_applied = 0;

    if !words.is_empty() {
        let scrub_ctx = PatientContext::from_identity(
            pid_value.as_deref().or(folder.as_deref()),
            file.dataset.text(PATIENT_NAME).as_deref(),
        );
        let boxes = detect_sensitive_boxes(&words, recognizers, &scrub_ctx);
        if !boxes.is_empty() {
            match get_pixels(&file) {
                Ok(Some(mut matrix)) => {
                    let outcome = mask_boxes(&mut matrix, &boxes, options.fill_value);
                    if outcome.clipped > 0 {
                        warnings.push(format!(
                            "{}: {} redaction box(es) clipped to image bounds",
                            rel.display(),
                            outcome.clipped
                        ));
                    }
                    put_pixels(&mut file, &matrix).map_err(|e| fail(e.to_string()))?;
                    boxes_applied = outcome.boxes_applied;
                    staged_bytes =
                        write_file(&file, WriteOptions::default()).map_err(|e| fail(e.to_string()))?;
                }
                Ok(None) => warnings.push(format!(
                    "{}: OCR reported text but the file has no pixel data",
                    rel.display()
                )),
                Err(PixelError::CompressedPixelData) => warnings.push(format!(
                    "{}: compressed pixel data; redaction not applied",
                    rel.display()
                )),
                Err(e) => warnings.push(format!("{}: {e}; redaction not applied", rel.display())),
            }
        }
    }

    let stage_path = stage_dir.join(rel);
    if let Some(parent) = stage_path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| fail(e.to_string()))?;
    }
    std::fs::write(&stage_path, &staged_bytes).map_err(|e| fail(e.to_string()))?;

    Ok(StagedFile {
        rel: rel.to_path_buf(),
        patient_folder: folder,
        redaction_boxes: boxes_applied,
        warnings,
        patient_keys,
    })
}

fn pass2_one_file(
    stage_dir: &Path,
    out_dir: &Path,
    record: &StagedFile,
    engine: &ActionEngine<'_>,
    ctx: &PseudonymContext,
) -> Result<Result<ProcessedFile, FailedFile>, EngineError> {
    let fail = |error: String| FailedFile {
        path: record.rel.display().to_string(),
        error,
    };
    let stage_path = stage_dir.join(&record.rel);
    let bytes = match std::fs::read(&stage_path) {
        Ok(b) => b,
        Err(e) => return Ok(Err(fail(e.to_string()))),
    };
    let mut file = match parse_file(&bytes, ParseOptions::default()) {
        Ok(f) => f,
        Err(e) => return Ok(Err(fail(format!("stage reparse: {e}")))),
    };

    let file_id = record.rel.display().to_string();
    let outcome = engine.apply_rules(&mut file, &file_id, record.patient_folder.as_deref())?;

    let out_bytes = match write_file(
        &file,
        WriteOptions {
            recompute_group_lengths: true,
            ..Default::default()
        },
    ) {
        Ok(b) => b,
        Err(e) => return Ok(Err(fail(e.to_string()))),
    };

    let renamed = rename_patient_component(&record.rel, ctx);
    let out_path = out_dir.join(&renamed);
    if let Some(parent) = out_path.parent() {
        if let Err(e) = std::fs::create_dir_all(parent) {
            return Ok(Err(fail(e.to_string())));
        }
    }
    if let Err(e) = std::fs::write(&out_path, &out_bytes) {
        return Ok(Err(fail(e.to_string())));
    }

    Ok(Ok(ProcessedFile {
        log: outcome.log,
        diagnostics: outcome.diagnostics,
        counts: outcome.counts,
    }))
}

/// Only the patient-level directory is renamed, by substituting the patient
/// pseudonym for the old ID in the folder name. Study and series folders keep
/// their structural names.
pub fn rename_patient_component(rel: &Path, ctx: &PseudonymContext) -> PathBuf {
    let mut components: Vec<String> = rel
        .components()
        .map(|c| c.as_os_str().to_string_lossy().to_string())
        .collect();
    if components.len() < 2 {
        return rel.to_path_buf();
    }
    let folder = components[0].clone();
    let map = ctx.patient_map.lock().expect("patient map lock");
    if let Some(new_id) = map.get(&folder) {
        components[0] = new_id.to_string();
    } else {
        // substring substitution for decorated folder names
        let mut pairs: Vec<(String, String)> = map
            .iter()
            .map(|(o, n)| (o.to_string(), n.to_string()))
            .collect();
        pairs.sort_by_key(|(o, _)| std::cmp::Reverse(o.len()));
        for (old, new) in pairs {
            if folder.contains(&old) {
                components[0] = folder.replace(&old, &new);
                break;
            }
        }
    }
    components.iter().collect()
}

fn persist_run_artifacts(
    out_dir: &Path,
    ctx: &PseudonymContext,
    summary: &mut CorpusSummary,
) -> Result<(), PipelineError> {
    let patient_map = ctx.patient_map.lock().expect("patient map lock");
    patient_map.save(&out_dir.join(PATIENT_MAPPING_FILE))?;
    summary.patients = patient_map.len();
    drop(patient_map);

    let uid_map = ctx.uid_map.lock().expect("uid map lock");
    let mut pairs: Vec<(String, String)> = uid_map
        .iter()
        .map(|(o, n)| (o.to_string(), n.to_string()))
        .collect();
    drop(uid_map);
    pairs.sort();
    crate::pseudonym::write_csv(
        &out_dir.join(UID_MAPPING_FILE),
        &["id_old", "id_new"],
        pairs.into_iter().map(|(o, n)| vec![o, n]),
    )?;

    ctx.shift_table.save(&out_dir.join(DATE_OFFSETS_FILE))?;

    let summary_path = out_dir.join(SUMMARY_FILE);
    let json = serde_json::to_string_pretty(&summary).map_err(|e| PipelineError::Serialize {
        path: summary_path.display().to_string(),
        detail: e.to_string(),
    })?;
    std::fs::write(&summary_path, json).map_err(|source| PipelineError::Io {
        path: summary_path.display().to_string(),
        source,
    })?;
    Ok(())
}
