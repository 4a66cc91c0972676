//! Burned-in text redaction: decide which OCR word boxes contain PHI and
//! paint those rectangles with a uniform fill value.

use std::path::{Path, PathBuf};

use serde::Deserialize;
use thiserror::Error;

use crate::dicom::PixelMatrix;
use crate::scrub::{PatientContext, RecognizerSet};

#[derive(Debug, Error)]
pub enum SidecarError {
    #[error("cannot read sidecar {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("malformed sidecar {path}: {detail}")]
    MalformedSidecar { path: String, detail: String },
}

/// Pixel-space rectangle, half-open: x0 <= x < x1, y0 <= y < y1.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Rect {
    pub x0: u32,
    pub y0: u32,
    pub x1: u32,
    pub y1: u32,
}

impl Rect {
    pub fn union(self, other: Rect) -> Rect {
        Rect {
            x0: self.x0.min(other.x0),
            y0: self.y0.min(other.y0),
            x1: self.x1.max(other.x1),
            y1: self.y1.max(other.y1),
        }
    }

    fn height(&self) -> u32 {
        self.y1 - self.y0
    }

    fn vertical_overlap(&self, other: &Rect) -> u32 {
        let top = self.y0.max(other.y0);
        let bottom = self.y1.min(other.y1);
        bottom.saturating_sub(top)
    }
}

/// Which frame(s) of a multi-frame image a word or box applies to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FrameSelector {
    Index(u32),
    All,
}

/// One OCR-recognized token with its pixel bounding box.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OcrWord {
    pub text: String,
    pub rect: Rect,
    pub frame: FrameSelector,
}

/// A rectangle selected for masking, with the recognizer that triggered it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RedactionBox {
    pub rect: Rect,
    pub reason: String,
    pub frame: FrameSelector,
}

/// Two words sit on one line when their boxes overlap vertically by at least
/// half the shorter box height.
fn same_line(a: &Rect, b: &Rect) -> bool {
    let overlap = a.vertical_overlap(b);
    let min_height = a.height().min(b.height()).max(1);
    overlap * 2 >= min_height
}

/// Selects word boxes whose text (alone or joined with its line) triggers any
/// recognizer, merging consecutive selected words of a line into one box.
pub fn detect_sensitive_boxes(
    words: &[OcrWord],
    recognizers: &RecognizerSet,
    ctx: &PatientContext,
) -> Vec<RedactionBox> {
    let mut boxes = Vec::new();

    // Group into lines per frame selector.
    let mut lines: Vec<(FrameSelector, Vec<&OcrWord>)> = Vec::new();
    for word in words {
        match lines
            .iter_mut()
            .find(|(frame, members)| *frame == word.frame && members.iter().any(|w| same_line(&w.rect, &word.rect)))
        {
            Some((_, members)) => members.push(word),
            None => lines.push((word.frame, vec![word])),
        }
    }

    for (frame, mut line) in lines {
        line.sort_by_key(|w| (w.rect.x0, w.rect.x1));

        // Joined text of the whole line, with each word's char range.
        let mut joined = String::new();
        let mut ranges = Vec::with_capacity(line.len());
        for (i, word) in line.iter().enumerate() {
            if i > 0 {
                joined.push(' ');
            }
            let start = joined.len();
            joined.push_str(&word.text);
            ranges.push(start..joined.len());
        }
        let line_result = recognizers.scrub_value(&joined, ctx);

        let mut selected: Vec<(usize, String)> = Vec::new();
        for (i, word) in line.iter().enumerate() {
            let own = recognizers.scrub_value(&word.text, ctx);
            let reason = if let Some(span) = own.spans.first() {
                Some(span.recognizer.clone())
            } else {
                line_result
                    .spans
                    .iter()
                    .find(|s| s.start < ranges[i].end && s.end > ranges[i].start)
                    .map(|s| s.recognizer.clone())
            };
            if let Some(reason) = reason {
                selected.push((i, reason));
            }
        }

        // Merge runs of consecutive selected words.
        let mut run: Option<(usize, Rect, String)> = None;
        for (i, reason) in selected {
            match run.take() {
                Some((prev, rect, first_reason)) if i == prev + 1 => {
                    run = Some((i, rect.union(line[i].rect), first_reason));
                }
                Some((_, rect, first_reason)) => {
                    boxes.push(RedactionBox {
                        rect,
                        reason: first_reason,
                        frame,
                    });
                    run = Some((i, line[i].rect, reason));
                }
                None => run = Some((i, line[i].rect, reason)),
            }
        }
        if let Some((_, rect, reason)) = run {
            boxes.push(RedactionBox { rect, reason, frame });
        }
    }

    boxes
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MaskOutcome {
    pub boxes_applied: usize,
    /// Boxes that had to be clipped to the image bounds.
    pub clipped: usize,
}

/// Paints every sample inside the boxes with `fill`; bytes outside the boxes
/// are untouched. Out-of-bounds boxes are clipped with a warning count.
pub fn mask_boxes(matrix: &mut PixelMatrix, boxes: &[RedactionBox], fill: u16) -> MaskOutcome {
    let mut outcome = MaskOutcome::default();
    let bps = matrix.bytes_per_sample();
    let spp = matrix.samples_per_pixel as usize;
    let columns = matrix.columns;
    let rows = matrix.rows;
    let frame_len = matrix.frame_len();

    let fill_bytes: Vec<u8> = match bps {
        1 => vec![fill as u8],
        2 => {
            if matrix.big_endian {
                fill.to_be_bytes().to_vec()
            } else {
                fill.to_le_bytes().to_vec()
            }
        }
        // wider samples: value in the low bytes
        n => {
            let mut b = vec![0u8; n];
            if matrix.big_endian {
                b[n - 2..].copy_from_slice(&fill.to_be_bytes());
            } else {
                b[..2].copy_from_slice(&fill.to_le_bytes());
            }
            b
        }
    };

    for bx in boxes {
        let clipped = Rect {
            x0: bx.rect.x0.min(columns),
            y0: bx.rect.y0.min(rows),
            x1: bx.rect.x1.min(columns),
            y1: bx.rect.y1.min(rows),
        };
        if clipped != bx.rect {
            outcome.clipped += 1;
        }
        if clipped.x0 >= clipped.x1 || clipped.y0 >= clipped.y1 {
            continue;
        }
        let frames: Vec<u32> = match bx.frame {
            FrameSelector::Index(i) if i < matrix.number_of_frames => vec![i],
            FrameSelector::Index(_) => {
                outcome.clipped += 1;
                continue;
            }
            FrameSelector::All => (0..matrix.number_of_frames).collect(),
        };
        for frame in frames {
            let base = frame as usize * frame_len;
            for y in clipped.y0..clipped.y1 {
                for x in clipped.x0..clipped.x1 {
                    let pixel = base + (y as usize * columns as usize + x as usize) * spp * bps;
                    for s in 0..spp {
                        let at = pixel + s * bps;
                        matrix.data[at..at + bps].copy_from_slice(&fill_bytes);
                    }
                }
            }
        }
        outcome.boxes_applied += 1;
    }
    outcome
}

#[derive(Debug, Deserialize)]
struct SidecarWord {
    text: String,
    x0: i64,
    y0: i64,
    x1: i64,
    y1: i64,
    #[serde(default)]
    frame: Option<serde_json::Value>,
}

/// Sidecar path for an image: same basename with the `.ocr.json` extension.
pub fn sidecar_path_for(image_path: &Path) -> PathBuf {
    image_path.with_extension("ocr.json")
}

/// Loads OCR words from a `.ocr.json` sidecar. A missing sidecar means the
/// image carries no recognized text.
pub fn ocr_adapter_load(sidecar_path: &Path) -> Result<Vec<OcrWord>, SidecarError> {
    if !sidecar_path.exists() {
        return Ok(Vec::new());
    }
    let malformed = |detail: String| SidecarError::MalformedSidecar {
        path: sidecar_path.display().to_string(),
        detail,
    };
    let text = std::fs::read_to_string(sidecar_path).map_err(|source| SidecarError::Io {
        path: sidecar_path.display().to_string(),
        source,
    })?;
    let raw: Vec<SidecarWord> =
        serde_json::from_str(&text).map_err(|e| malformed(e.to_string()))?;

    let mut words = Vec::with_capacity(raw.len());
    for (i, w) in raw.into_iter().enumerate() {
        if w.x0 < 0 || w.y0 < 0 || w.x0 >= w.x1 || w.y0 >= w.y1 {
            return Err(malformed(format!(
                "word {i} has degenerate box ({},{})-({},{})",
                w.x0, w.y0, w.x1, w.y1
            )));
        }
        let frame = match w.frame {
            None => FrameSelector::Index(0),
            Some(serde_json::Value::String(s)) if s == "*" => FrameSelector::All,
            Some(serde_json::Value::Number(n)) => match n.as_u64() {
                Some(i) => FrameSelector::Index(i as u32),
                None => return Err(malformed(format!("word {i} has negative frame {n}"))),
            },
            Some(other) => {
                return Err(malformed(format!("word {i} has bad frame value {other}")))
            }
        };
        words.push(OcrWord {
            text: w.text,
            rect: Rect {
                x0: w.x0 as u32,
                y0: w.y0 as u32,
                x1: w.x1 as u32,
                y1: w.y1 as u32,
            },
            frame,
        });
    }
    Ok(words)
}

/// The OCR word source for the pipeline's pixel pass.
pub trait OcrSource: Sync {
    fn words_for(&self, image_path: &Path) -> Result<Vec<OcrWord>, SidecarError>;
}

/// Fixture-file adapter: words come from `.ocr.json` sidecars beside each
/// image. A live OCR engine can implement [`OcrSource`] behind the same
/// boundary.
#[derive(Debug, Default, Clone, Copy)]
pub struct SidecarOcr;

impl OcrSource for SidecarOcr {
    fn words_for(&self, image_path: &Path) -> Result<Vec<OcrWord>, SidecarError> {
        ocr_adapter_load(&sidecar_path_for(image_path))
    }
}
