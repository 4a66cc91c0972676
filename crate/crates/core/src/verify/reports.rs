//! The three report CSVs: per-action, per-category, and the overall score.

use std::path::Path;

use thiserror::Error;

use super::{CheckResult, ScoreSummary, Verdict};

pub const ACTION_REPORT_FILE: &str = "action_report.csv";
pub const CATEGORY_REPORT_FILE: &str = "category_report.csv";
pub const SCORING_REPORT_FILE: &str = "scoring_report.csv";
pub const RESULTS_FILE: &str = "check_results.csv";

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("cannot write report {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("cannot write report {path}: {detail}")]
    Csv { path: String, detail: String },
}

fn write_rows(
    path: &Path,
    header: &[&str],
    rows: impl Iterator<Item = Vec<String>>,
) -> Result<(), ReportError> {
    let io_err = |source| ReportError::Io {
        path: path.display().to_string(),
        source,
    };
    let file = std::fs::File::create(path).map_err(io_err)?;
    let mut writer = csv::Writer::from_writer(file);
    let csv_err = |detail: String| ReportError::Csv {
        path: path.display().to_string(),
        detail,
    };
    writer.write_record(header).map_err(|e| csv_err(e.to_string()))?;
    for row in rows {
        writer.write_record(&row).map_err(|e| csv_err(e.to_string()))?;
    }
    writer.flush().map_err(io_err)?;
    Ok(())
}

/// Writes `action_report.csv`, `category_report.csv`, `scoring_report.csv`
/// and the per-check `check_results.csv` into `out_dir`.
pub fn render_reports(
    results: &[CheckResult],
    summary: &ScoreSummary,
    out_dir: &Path,
) -> Result<(), ReportError> {
    std::fs::create_dir_all(out_dir).map_err(|source| ReportError::Io {
        path: out_dir.display().to_string(),
        source,
    })?;

    let action_rows = summary
        .actions
        .iter()
        .map(|row| {
            vec![
                row.action.name().to_string(),
                row.fail.to_string(),
                row.pass.to_string(),
                (row.fail + row.pass).to_string(),
            ]
        })
        .chain(std::iter::once(vec![
            "Total".to_string(),
            summary.fail.to_string(),
            summary.pass.to_string(),
            summary.total().to_string(),
        ]));
    write_rows(
        &out_dir.join(ACTION_REPORT_FILE),
        &["action", "Fail", "Pass", "Total"],
        action_rows,
    )?;

    let category_rows = summary
        .categories
        .iter()
        .map(|row| {
            vec![
                row.category.clone(),
                row.subcategory.clone(),
                row.fail.to_string(),
                row.pass.to_string(),
            ]
        })
        .chain(std::iter::once(vec![
            "Total".to_string(),
            String::new(),
            summary.fail.to_string(),
            summary.pass.to_string(),
        ]));
    write_rows(
        &out_dir.join(CATEGORY_REPORT_FILE),
        &["category", "subcategory", "Fail", "Pass"],
        category_rows,
    )?;

    let scoring_row = vec![
        "All".to_string(),
        summary.fail.to_string(),
        summary.pass.to_string(),
        summary.total().to_string(),
        summary.score_display().unwrap_or_default(),
    ];
    write_rows(
        &out_dir.join(SCORING_REPORT_FILE),
        &["Category", "Fail", "Pass", "Total", "Score"],
        std::iter::once(scoring_row),
    )?;

    // per-check rows, for triage
    write_rows(
        &out_dir.join(RESULTS_FILE),
        &["file", "locus", "check", "verdict", "detail"],
        results.iter().map(|r| {
            vec![
                r.entry.file.clone(),
                r.entry.locus.clone(),
                r.entry.check.name().to_string(),
                match r.verdict {
                    Verdict::Pass => "PASS".to_string(),
                    Verdict::Fail => "FAIL".to_string(),
                },
                r.detail.clone(),
            ]
        }),
    )?;
    Ok(())
}
