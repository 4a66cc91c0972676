//! Free-text PHI removal: a battery of regex patterns, allow/deny lists, a
//! preposition-anchored name heuristic, and per-patient known identifiers.
//!
//! Scrubbing iterates to a fixed point: deletions and whitespace collapsing
//! can expose new matches, so the pass repeats until nothing fires. The
//! returned spans are mapped back to coordinates over the original input.

use std::collections::HashSet;
use std::path::Path;

use regex::Regex;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ScrubError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("bad pattern on line {line:?}: {detail}")]
    BadPattern { line: String, detail: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RecognizerKind {
    Pattern,
    DenyList,
    Preposition,
}

/// One detection rule. Pattern recognizers carry a compiled regex; deny-list
/// recognizers carry a term matched case-insensitively on word boundaries.
#[derive(Debug, Clone)]
pub struct Recognizer {
    pub name: String,
    pub kind: RecognizerKind,
}

/// A deleted region of the input, tagged with the recognizer that fired.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Span {
    pub start: usize,
    pub end: usize,
    pub recognizer: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScrubResult {
    pub output: String,
    pub spans: Vec<Span>,
}

impl ScrubResult {
    pub fn clean(&self) -> bool {
        self.spans.is_empty()
    }
}

/// Identifiers known to belong to the current patient (old patient ID, name
/// parts); every occurrence is removed regardless of allow lists.
#[derive(Debug, Clone, Default)]
pub struct PatientContext {
    identifiers: Vec<String>,
}

impl PatientContext {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn new(identifiers: impl IntoIterator<Item = String>) -> Self {
        let identifiers = identifiers
            .into_iter()
            .map(|s| s.trim().to_string())
            // single characters would fire on nearly everything
            .filter(|s| s.len() >= 2)
            .collect();
        PatientContext { identifiers }
    }

    /// Context derived from the identity attributes of one file: the raw
    /// patient ID plus the person-name value and its component parts.
    pub fn from_identity(old_patient_id: Option<&str>, old_patient_name: Option<&str>) -> Self {
        let mut ids = Vec::new();
        if let Some(id) = old_patient_id {
            ids.push(id.to_string());
        }
        if let Some(name) = old_patient_name {
            ids.push(name.to_string());
            for part in name.split(['^', ' ', ',']) {
                ids.push(part.to_string());
            }
        }
        PatientContext::new(ids)
    }

    pub fn identifiers(&self) -> &[String] {
        &self.identifiers
    }
}

#[derive(Debug)]
struct NamedPattern {
    name: String,
    regex: Regex,
}

/// The recognizer battery. Immutable after load; safe to share across workers.
#[derive(Debug)]
pub struct RecognizerSet {
    patterns: Vec<NamedPattern>,
    deny_terms: Vec<String>,
    allow_terms: HashSet<String>,
    preposition_window: usize,
}

/// Built-in patterns covering identifier classes that are representable in
/// free text: dates, phone/fax numbers, email, SSN- and MRN-shaped numbers,
/// URLs, IP addresses, ZIP+4, ages over 89, labeled account/license/device
/// numbers, and keyword-anchored facility names.
const BUILTIN_PATTERNS: &[(&str, &str)] = &[
    ("date_iso", r"\b\d{4}-\d{2}-\d{2}\b"),
    ("date_slash", r"\b\d{1,2}/\d{1,2}/\d{2,4}\b"),
    ("date_compact", r"\b(?:19|20)\d{6}\b"),
    (
        "date_month_name",
        r"\b(?i:jan|feb|mar|apr|may|jun|jul|aug|sep|oct|nov|dec)[a-z]*\.?\s+\d{1,2},?\s+\d{4}\b",
    ),
    ("phone_us", r"\(?\b\d{3}\)?[-. ]\d{3}[-. ]\d{4}\b"),
    (
        "phone_intl",
        r"\+\d{1,3}[-. ]?\d{2,4}[-. ]\d{3,4}[-. ]\d{3,4}\b",
    ),
    (
        "email",
        r"\b[A-Za-z0-9._%+-]+@[A-Za-z0-9.-]+\.[A-Za-z]{2,}\b",
    ),
    ("ssn", r"\b\d{3}-\d{2}-\d{4}\b"),
    ("mrn_labeled", r"\b(?i:mrn)\s*[:#]?\s*\d{4,12}\b"),
    ("account_labeled", r"\b(?i:acct|account)\s*[:#]?\s*\d{4,}\b"),
    (
        "license_labeled",
        r"\b(?i:lic|license)\s*[:#]?\s*[A-Za-z0-9-]{4,}\b",
    ),
    ("serial_labeled", r"\b(?i:s/?n)\s*[:#]\s*[A-Za-z0-9-]{4,}\b"),
    ("npi_labeled", r"\b(?i:npi)\s*[:#]?\s*\d{10}\b"),
    ("url", r"\bhttps?://[^\s]+"),
    ("ip_address", r"\b\d{1,3}\.\d{1,3}\.\d{1,3}\.\d{1,3}\b"),
    ("zip_plus4", r"\b\d{5}-\d{4}\b"),
    (
        "age_over_89",
        r"\b(?:9\d|1[0-2]\d)\s*(?i:years?[- ]?old|y/?o)\b",
    ),
    (
        "facility_name",
        r"\b(?:[A-Za-z][A-Za-z'.-]*\s+){0,3}(?i:hospital|clinic|medical\s+center|imaging\s+center|health\s+(?:system|center)|infirmary)\b",
    ),
    ("dea_labeled", r"\b(?i:dea)\s*[:#]?\s*[A-Za-z]{2}\d{7}\b"),
    (
        "vin_labeled",
        r"\b(?i:vin)\s*[:#]?\s*[A-HJ-NPR-Z0-9]{17}\b",
    ),
];

const PREPOSITION_WINDOW: usize = 4;

impl RecognizerSet {
    /// Battery with built-in patterns only, no lists.
    pub fn builtin() -> Self {
        let patterns = BUILTIN_PATTERNS
            .iter()
            .map(|(name, src)| NamedPattern {
                name: format!("pattern:{name}"),
                regex: Regex::new(src).expect("built-in pattern compiles"),
            })
            .collect();
        RecognizerSet {
            patterns,
            deny_terms: Vec::new(),
            allow_terms: HashSet::new(),
            preposition_window: PREPOSITION_WINDOW,
        }
    }

    pub fn add_allow_term(&mut self, term: &str) {
        let norm = normalize_term(term);
        if !norm.is_empty() {
            self.allow_terms.insert(norm);
        }
    }

    pub fn add_deny_term(&mut self, term: &str) {
        let norm = normalize_term(term);
        if !norm.is_empty() {
            self.deny_terms.push(norm);
        }
    }

    pub fn add_pattern(&mut self, name: &str, source: &str) -> Result<(), ScrubError> {
        let regex = Regex::new(source).map_err(|e| ScrubError::BadPattern {
            line: format!("{name}\t{source}"),
            detail: e.to_string(),
        })?;
        self.patterns.push(NamedPattern {
            name: format!("pattern:{name}"),
            regex,
        });
        Ok(())
    }

    /// The active recognizers, for inspection and reporting.
    pub fn recognizers(&self) -> Vec<Recognizer> {
        let mut out: Vec<Recognizer> = self
            .patterns
            .iter()
            .map(|p| Recognizer {
                name: p.name.clone(),
                kind: RecognizerKind::Pattern,
            })
            .collect();
        for term in &self.deny_terms {
            out.push(Recognizer {
                name: format!("deny:{term}"),
                kind: RecognizerKind::DenyList,
            });
        }
        out.push(Recognizer {
            name: "preposition".to_string(),
            kind: RecognizerKind::Preposition,
        });
        out
    }

    /// Removes PHI from a decoded text value. Pure; iterates until no
    /// recognizer fires, so the result is a fixed point of itself.
    pub fn scrub_value(&self, value: &str, ctx: &PatientContext) -> ScrubResult {
        let mut cells: Vec<Cell> = value
            .char_indices()
            .map(|(origin, ch)| Cell {
                ch,
                origin,
                orig_len: ch.len_utf8() as u8,
            })
            .collect();
        let mut input_spans: Vec<Span> = Vec::new();

        loop {
            let current: String = cells.iter().map(|c| c.ch).collect();
            let matches = self.find_matches(&current, ctx);
            if matches.is_empty() {
                break;
            }
            // byte offset of each cell within `current`
            let mut cell_starts = Vec::with_capacity(cells.len());
            let mut offset = 0;
            for cell in &cells {
                cell_starts.push(offset);
                offset += cell.ch.len_utf8();
            }

            let mut delete = vec![false; cells.len()];
            for m in &matches {
                let first = cell_starts.partition_point(|&s| s < m.start);
                let last = cell_starts.partition_point(|&s| s < m.end);
                if first >= last {
                    continue;
                }
                for flag in &mut delete[first..last] {
                    *flag = true;
                }
                let start = cells[first].origin;
                let end_cell = &cells[last - 1];
                let end = end_cell.origin + end_cell.orig_len as usize;
                input_spans.push(Span {
                    start,
                    end,
                    recognizer: m.recognizer.clone(),
                });
            }
            if !delete.iter().any(|&d| d) {
                break;
            }

            let survivors: Vec<Cell> = cells
                .iter()
                .zip(&delete)
                .filter(|(_, &d)| !d)
                .map(|(c, _)| *c)
                .collect();
            cells = collapse_whitespace(survivors);
        }

        let output: String = cells.iter().map(|c| c.ch).collect();
        ScrubResult {
            output,
            spans: merge_spans(input_spans),
        }
    }

    fn find_matches(&self, text: &str, ctx: &PatientContext) -> Vec<RawMatch> {
        let mut out = Vec::new();

        for id in ctx.identifiers() {
            for (start, end) in word_occurrences(text, id) {
                out.push(RawMatch {
                    start,
                    end,
                    recognizer: "patient_context".to_string(),
                });
            }
        }

        for pattern in &self.patterns {
            for m in pattern.regex.find_iter(text) {
                if m.start() == m.end() {
                    continue;
                }
                out.push(RawMatch {
                    start: m.start(),
                    end: m.end(),
                    recognizer: pattern.name.clone(),
                });
            }
        }

        for term in &self.deny_terms {
            for (start, end) in word_occurrences(text, term) {
                if self.allowed(&text[start..end]) {
                    continue;
                }
                out.push(RawMatch {
                    start,
                    end,
                    recognizer: format!("deny:{term}"),
                });
            }
        }

        for run in preposition_runs(text, self.preposition_window) {
            if self.allowed(&text[run.run_start..run.run_end]) {
                continue;
            }
            // span covers the anchoring preposition too, so no dangling
            // "AT"/"BY" is left in the output
            out.push(RawMatch {
                start: run.prep_start,
                end: run.run_end,
                recognizer: "preposition".to_string(),
            });
        }

        out
    }

    fn allowed(&self, span_text: &str) -> bool {
        self.allow_terms.contains(&normalize_term(span_text))
    }
}

/// Loads the battery: built-in patterns plus optional allow list, deny list,
/// and extra pattern files.
pub fn load_lists(
    allow_path: Option<&Path>,
    deny_path: Option<&Path>,
    patterns_path: Option<&Path>,
) -> Result<RecognizerSet, ScrubError> {
    let mut set = RecognizerSet::builtin();
    if let Some(path) = allow_path {
        for line in read_list(path)? {
            set.add_allow_term(&line);
        }
    }
    if let Some(path) = deny_path {
        for line in read_list(path)? {
            set.add_deny_term(&line);
        }
    }
    if let Some(path) = patterns_path {
        for line in read_list(path)? {
            let (name, source) = line.split_once('\t').ok_or_else(|| ScrubError::BadPattern {
                line: line.clone(),
                detail: "expected name<TAB>regex".to_string(),
            })?;
            set.add_pattern(name.trim(), source.trim())?;
        }
    }
    Ok(set)
}

/// Populates a recognizer set from in-memory list text (same syntax as the
/// list files); used for embedded defaults.
pub fn extend_from_text(
    set: &mut RecognizerSet,
    allow_text: &str,
    deny_text: &str,
) {
    for line in list_lines(allow_text) {
        set.add_allow_term(&line);
    }
    for line in list_lines(deny_text) {
        set.add_deny_term(&line);
    }
}

fn read_list(path: &Path) -> Result<Vec<String>, ScrubError> {
    let text = std::fs::read_to_string(path).map_err(|source| ScrubError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Ok(list_lines(&text))
}

fn list_lines(text: &str) -> Vec<String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_string)
        .collect()
}

fn normalize_term(term: &str) -> String {
    term.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_ascii_uppercase()
}

#[derive(Debug, Clone, Copy)]
struct Cell {
    ch: char,
    origin: usize,
    orig_len: u8,
}

struct RawMatch {
    start: usize,
    end: usize,
    recognizer: String,
}

struct PrepRun {
    prep_start: usize,
    run_start: usize,
    run_end: usize,
}

/// Case-insensitive occurrences of `needle` bounded by non-alphanumerics.
fn word_occurrences(text: &str, needle: &str) -> Vec<(usize, usize)> {
    if needle.is_empty() {
        return Vec::new();
    }
    let hay = text.to_ascii_lowercase();
    let needle_lower = needle.to_ascii_lowercase();
    let mut out = Vec::new();
    let mut from = 0;
    while let Some(pos) = hay[from..].find(&needle_lower) {
        let start = from + pos;
        let end = start + needle_lower.len();
        let before_ok = start == 0
            || !text[..start]
                .chars()
                .next_back()
                .is_some_and(|c| c.is_alphanumeric());
        let after_ok = end >= text.len()
            || !text[end..].chars().next().is_some_and(|c| c.is_alphanumeric());
        if before_ok && after_ok {
            out.push((start, end));
        }
        from = start + needle_lower.len().max(1);
    }
    out
}

/// Capitalized token runs (up to `window` tokens) immediately following the
/// prepositions "at" or "by".
fn preposition_runs(text: &str, window: usize) -> Vec<PrepRun> {
    let tokens: Vec<(usize, &str)> = tokenize(text);
    let mut out = Vec::new();
    for (idx, (start, token)) in tokens.iter().enumerate() {
        if !token.eq_ignore_ascii_case("at") && !token.eq_ignore_ascii_case("by") {
            continue;
        }
        let run: Vec<&(usize, &str)> = tokens[idx + 1..]
            .iter()
            .take(window)
            .take_while(|(_, t)| t.chars().next().is_some_and(|c| c.is_ascii_uppercase()))
            .collect();
        if run.is_empty() {
            continue;
        }
        let run_start = run[0].0;
        let (last_start, last_token) = *run[run.len() - 1];
        out.push(PrepRun {
            prep_start: *start,
            run_start,
            run_end: last_start + last_token.len(),
        });
    }
    out
}

fn tokenize(text: &str) -> Vec<(usize, &str)> {
    let mut out = Vec::new();
    let mut start = None;
    for (idx, ch) in text.char_indices() {
        if ch.is_whitespace() {
            if let Some(s) = start.take() {
                out.push((s, &text[s..idx]));
            }
        } else if start.is_none() {
            start = Some(idx);
        }
    }
    if let Some(s) = start {
        out.push((s, &text[s..]));
    }
    out
}

/// Squeezes whitespace runs to a single space and trims both ends, keeping
/// the origin of the first whitespace cell of each run.
fn collapse_whitespace(cells: Vec<Cell>) -> Vec<Cell> {
    let mut out: Vec<Cell> = Vec::with_capacity(cells.len());
    let mut pending: Option<Cell> = None;
    for cell in cells {
        if cell.ch.is_whitespace() {
            if !out.is_empty() && pending.is_none() {
                pending = Some(Cell { ch: ' ', ..cell });
            }
        } else {
            if let Some(space) = pending.take() {
                out.push(space);
            }
            out.push(cell);
        }
    }
    out
}

fn merge_spans(mut spans: Vec<Span>) -> Vec<Span> {
    spans.sort_by_key(|s| (s.start, s.end));
    let mut out: Vec<Span> = Vec::with_capacity(spans.len());
    for span in spans {
        match out.last_mut() {
            Some(last) if span.start <= last.end => {
                last.end = last.end.max(span.end);
            }
            _ => out.push(span),
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn battery() -> RecognizerSet {
        RecognizerSet::builtin()
    }

    #[test]
    fn preposition_and_phone() {
        let result = battery().scrub_value("READ BY DR SMITH 555-867-5309", &PatientContext::empty());
        assert_eq!(result.output, "READ");
        assert!(!result.spans.is_empty());
        // deleting the merged spans from the input reproduces the output
        // modulo whitespace
        let mut rebuilt = String::from("READ BY DR SMITH 555-867-5309");
        for span in result.spans.iter().rev() {
            rebuilt.replace_range(span.start..span.end, "");
        }
        assert_eq!(rebuilt.split_whitespace().collect::<Vec<_>>().join(" "), result.output);
    }

    #[test]
    fn empty_input() {
        let result = battery().scrub_value("", &PatientContext::empty());
        assert_eq!(result.output, "");
        assert!(result.spans.is_empty());
    }

    #[test]
    fn benign_text_unchanged() {
        let result = battery().scrub_value("CHEST PA AND LATERAL", &PatientContext::empty());
        assert_eq!(result.output, "CHEST PA AND LATERAL");
        assert!(result.spans.is_empty());
    }

    #[test]
    fn deny_term_fires_whole_word_case_insensitive() {
        let mut set = battery();
        set.add_deny_term("ST. MARY");
        let result = set.scrub_value("SEEN AT ST. MARY CLINIC", &PatientContext::empty());
        assert!(!result.output.contains("ST. MARY"));
        assert!(result.spans.iter().any(|s| s.recognizer.starts_with("deny:")
            || s.recognizer == "preposition"
            || s.recognizer.starts_with("pattern:")));
    }

    #[test]
    fn allow_term_suppresses_preposition_run() {
        let mut set = battery();
        set.add_allow_term("MR");
        let result = set.scrub_value("READ BY MR", &PatientContext::empty());
        assert_eq!(result.output, "READ BY MR");
        assert!(result.spans.is_empty());

        // allow list does not block the context recognizer or patterns
        let ctx = PatientContext::new(vec!["MR".to_string()]);
        let hit = set.scrub_value("READ BY MR", &ctx);
        assert!(!hit.output.contains("MR"));
    }

    #[test]
    fn allow_listed_modality_stays_intact() {
        let mut set = battery();
        set.add_allow_term("MR");
        let result = set.scrub_value("MR BRAIN W/O CONTRAST", &PatientContext::empty());
        assert_eq!(result.output, "MR BRAIN W/O CONTRAST");
    }

    #[test]
    fn allow_term_suppresses_deny_term() {
        let mut set = battery();
        set.add_deny_term("CONTRAST");
        set.add_allow_term("CONTRAST");
        let result = set.scrub_value("CT WITH CONTRAST", &PatientContext::empty());
        assert_eq!(result.output, "CT WITH CONTRAST");
    }

    #[test]
    fn patient_context_removed_everywhere() {
        let ctx = PatientContext::from_identity(Some("1059030585"), Some("DOE^JANE"));
        let result = battery().scrub_value("PT 1059030585 JANE DOE FOLLOWUP", &ctx);
        assert!(!result.output.contains("1059030585"));
        assert!(!result.output.contains("JANE"));
        assert!(!result.output.contains("DOE"));
        assert!(result.output.contains("FOLLOWUP"));
    }

    #[test]
    fn context_does_not_fire_inside_words() {
        let ctx = PatientContext::new(vec!["ART".to_string()]);
        let result = battery().scrub_value("CARDIAC ARTERY START ART", &ctx);
        assert_eq!(result.output, "CARDIAC ARTERY START");
    }

    #[test]
    fn facility_pattern() {
        let result = battery().scrub_value("ADMITTED TO RIVERSIDE GENERAL HOSPITAL TODAY", &PatientContext::empty());
        assert!(!result.output.contains("HOSPITAL"));
        assert!(!result.output.contains("RIVERSIDE"));
        assert!(result.output.contains("TODAY"));
    }

    #[test]
    fn dates_and_emails() {
        let set = battery();
        for phi in [
            "2024-01-15",
            "1/5/2024",
            "20240115",
            "JAN 5, 2024",
            "someone@example.com",
            "123-45-6789",
            "MRN: 48392057",
        ] {
            let value = format!("BEFORE {phi} AFTER");
            let result = set.scrub_value(&value, &PatientContext::empty());
            assert!(
                !result.output.contains(phi),
                "{phi:?} survived as {:?}",
                result.output
            );
        }
    }

    #[test]
    fn idempotent_on_fixtures() {
        let mut set = battery();
        set.add_deny_term("ST. MARY");
        let ctx = PatientContext::from_identity(Some("1059030585"), Some("DOE^JANE"));
        for value in [
            "READ BY DR SMITH 555-867-5309",
            "PT 1059030585 SEEN AT ST. MARY CLINIC ON 3/15/2021",
            "",
            "CHEST PA AND LATERAL",
            "555-867-5309555-867-5309",
        ] {
            let once = set.scrub_value(value, &ctx);
            let twice = set.scrub_value(&once.output, &ctx);
            assert_eq!(once.output, twice.output, "not idempotent on {value:?}");
            assert!(twice.spans.is_empty());
        }
    }

    #[test]
    fn spans_delete_to_output_modulo_whitespace() {
        let mut set = battery();
        set.add_deny_term("MERCY");
        let ctx = PatientContext::from_identity(Some("12345678"), None);
        let input = "12345678 AT MERCY ON 2024-01-15 CALL 555-867-5309 STAT";
        let result = set.scrub_value(input, &ctx);
        let mut rebuilt = input.to_string();
        for span in result.spans.iter().rev() {
            rebuilt.replace_range(span.start..span.end, "");
        }
        let normalized = rebuilt.split_whitespace().collect::<Vec<_>>().join(" ");
        assert_eq!(normalized, result.output);
        assert_eq!(result.output, "CALL STAT");
    }

    #[test]
    fn load_lists_reports_bad_pattern_line() {
        let dir = tempfile::tempdir().unwrap();
        let patterns = dir.path().join("patterns.txt");
        std::fs::write(&patterns, "broken\t[unclosed\n").unwrap();
        let err = load_lists(None, None, Some(&patterns)).unwrap_err();
        match err {
            ScrubError::BadPattern { line, .. } => assert!(line.contains("broken")),
            other => panic!("expected BadPattern, got {other:?}"),
        }
    }

    #[test]
    fn load_lists_from_files() {
        let dir = tempfile::tempdir().unwrap();
        let allow = dir.path().join("allow.txt");
        let deny = dir.path().join("deny.txt");
        std::fs::write(&allow, "# comment\nMR\n").unwrap();
        std::fs::write(&deny, "ST. MARY\n").unwrap();
        let set = load_lists(Some(&allow), Some(&deny), None).unwrap();
        let result = set.scrub_value("SEEN AT ST. MARY", &PatientContext::empty());
        assert!(!result.output.contains("MARY"));
        let kinds: Vec<RecognizerKind> = set.recognizers().iter().map(|r| r.kind).collect();
        assert!(kinds.contains(&RecognizerKind::DenyList));
        assert!(kinds.contains(&RecognizerKind::Preposition));
    }
}
