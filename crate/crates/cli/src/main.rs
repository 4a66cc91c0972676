//! `deid`: de-identify a DICOM corpus, verify a run against an answer key,
//! or generate a synthetic corpus to exercise both.
//!
//! Exit codes are the machine contract: 0 success, 1 for quarantined files
//! (`deid`) or failed checks (`verify`), 2 for configuration errors. Human
//! output goes to stderr; reports and logs go to files.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod config;

use config::RunConfig;

#[derive(Parser)]
#[command(name = "deid", version, about = "DICOM de-identification toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// De-identify a corpus: pixel redaction first, then metadata rules.
    Deid(DeidArgs),
    /// Grade a de-identified corpus against an answer key.
    Verify(VerifyArgs),
    /// Generate a synthetic corpus with planted PHI and its answer key.
    Gen(GenArgs),
}

#[derive(Args)]
struct DeidArgs {
    /// Input corpus root (patient/study/series/instance tree).
    #[arg(long = "in", value_name = "DIR")]
    input: PathBuf,
    /// Output root for the de-identified tree and run artifacts.
    #[arg(long = "out", value_name = "DIR")]
    output: PathBuf,
    /// TOML config file; flags override its values.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Ruleset file (default: bundled policy).
    #[arg(long, value_name = "FILE")]
    ruleset: Option<PathBuf>,
    /// Allow-list file (terms never scrubbed by list/heuristic recognizers).
    #[arg(long, value_name = "FILE")]
    allowlist: Option<PathBuf>,
    /// Deny-list file (terms always scrubbed).
    #[arg(long, value_name = "FILE")]
    denylist: Option<PathBuf>,
    /// Extra recognizer patterns file (name<TAB>regex per line).
    #[arg(long, value_name = "FILE")]
    patterns: Option<PathBuf>,
    /// Seed for the per-patient date offsets.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (0 = logical CPU count).
    #[arg(long)]
    workers: Option<usize>,
    /// Fill value for redacted pixel rectangles.
    #[arg(long)]
    fill: Option<u16>,
    /// Strict parsing: require preamble/DICM and in-order tags.
    #[arg(long)]
    strict: bool,
    /// UID root template containing {patient_id_new}.
    #[arg(long, value_name = "TEMPLATE")]
    uid_root: Option<String>,
}

#[derive(Args)]
struct VerifyArgs {
    /// Original corpus root.
    #[arg(long = "in", value_name = "DIR")]
    input: PathBuf,
    /// De-identified corpus root (a `deid` output directory).
    #[arg(long, value_name = "DIR")]
    deid: PathBuf,
    /// Answer key CSV.
    #[arg(long, value_name = "FILE")]
    key: PathBuf,
    /// Directory holding the run's mapping CSVs (default: the deid dir).
    #[arg(long, value_name = "DIR")]
    mappings: Option<PathBuf>,
    /// Where to write the reports (default: <deid>/reports).
    #[arg(long = "out", value_name = "DIR")]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct GenArgs {
    /// Output directory (must be empty).
    #[arg(long = "out", value_name = "DIR")]
    output: PathBuf,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long, default_value_t = 3)]
    patients: usize,
    /// Studies per patient, as N or LO..HI.
    #[arg(long, default_value = "1..2")]
    studies: String,
    /// Series per study, as N or LO..HI.
    #[arg(long, default_value = "1..2")]
    series: String,
    /// Instances per series, as N or LO..HI.
    #[arg(long, default_value = "1..3")]
    instances: String,
    /// Fraction of text tags carrying planted PHI.
    #[arg(long, default_value_t = 0.8)]
    phi_density: f64,
    /// Fraction of images with burned-in pixel text.
    #[arg(long, default_value_t = 0.5)]
    burn_in: f64,
}

const EXIT_OK: u8 = 0;
const EXIT_FINDINGS: u8 = 1;
const EXIT_CONFIG: u8 = 2;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Deid(args) => cmd_deid(args),
        Command::Verify(args) => cmd_verify(args),
        Command::Gen(args) => cmd_gen(args),
    };
    ExitCode::from(code)
}

fn config_error(message: impl std::fmt::Display) -> u8 {
    eprintln!("error: {message}");
    EXIT_CONFIG
}

fn cmd_deid(args: DeidArgs) -> u8 {
    let mut cfg = match args.config.as_deref().map(RunConfig::load).transpose() {
        Ok(cfg) => cfg.unwrap_or_default(),
        Err(e) => return config_error(e),
    };
    cfg.apply_overrides(config::Overrides {
        ruleset: args.ruleset,
        allowlist: args.allowlist,
        denylist: args.denylist,
        patterns: args.patterns,
        seed: args.seed,
        workers: args.workers,
        fill: args.fill,
        strict: args.strict,
        uid_root: args.uid_root,
    });
    if let Ok(root) = std::env::var("DEID_UID_ROOT") {
        if !root.trim().is_empty() {
            cfg.uid_root = Some(root);
        }
    }
    if let Err(e) = cfg.check_paths() {
        return config_error(e);
    }
    if !args.input.is_dir() {
        return config_error(format!("--in {:?} is not a directory", args.input));
    }

    let mut ruleset = match &cfg.ruleset {
        Some(path) => match deid_core::actions::Ruleset::load(path) {
            Ok(rs) => rs,
            Err(e) => return config_error(e),
        },
        None => deid_core::actions::Ruleset::bundled_default(),
    };
    if let Some(root) = &cfg.uid_root {
        ruleset.uid_root_template = root.clone();
    }
    for warning in &ruleset.load_warnings {
        eprintln!("ruleset: {warning}");
    }

    let recognizers = match cfg.build_recognizers() {
        Ok(r) => r,
        Err(e) => return config_error(e),
    };

    let options = deid_core::actions::PipelineOptions {
        seed: cfg.seed,
        workers: cfg.workers,
        fill_value: cfg.fill_value,
        strict_parse: cfg.strict,
    };
    let summary = match deid_core::actions::run_pipeline(
        &args.input,
        &args.output,
        &ruleset,
        &recognizers,
        &deid_core::redact::SidecarOcr,
        &options,
    ) {
        Ok(summary) => summary,
        Err(e) => return config_error(e),
    };

    eprintln!(
        "processed {} file(s) for {} patient(s); {} element(s); {} image(s) redacted ({} box(es))",
        summary.files_processed,
        summary.patients,
        summary.elements,
        summary.redacted_images,
        summary.redaction_boxes
    );
    for (code, count) in &summary.code_counts {
        eprintln!("  {code:<8} {count}");
    }
    for warning in &summary.warnings {
        eprintln!("warning: {warning}");
    }
    if !summary.failed.is_empty() {
        for failed in &summary.failed {
            eprintln!("failed: {}: {}", failed.path, failed.error);
        }
        return EXIT_FINDINGS;
    }
    EXIT_OK
}

fn cmd_verify(args: VerifyArgs) -> u8 {
    let key = match deid_core::verify::load_key(&args.key) {
        Ok(key) => key,
        Err(e) => return config_error(e),
    };
    let mappings_dir = args.mappings.as_deref().unwrap_or(&args.deid);
    let mappings = match deid_core::verify::Mappings::load_dir(mappings_dir) {
        Ok(m) => m,
        Err(e) => return config_error(e),
    };
    let (results, summary) =
        deid_core::verify::verify_corpus(&args.input, &args.deid, &key, &mappings);

    let reports_dir = args.output.unwrap_or_else(|| args.deid.join("reports"));
    if let Err(e) = deid_core::verify::render_reports(&results, &summary, &reports_dir) {
        return config_error(e);
    }

    eprintln!("{summary}");
    eprintln!("reports written to {}", reports_dir.display());
    if summary.fail > 0 {
        for result in results
            .iter()
            .filter(|r| r.verdict == deid_core::verify::Verdict::Fail)
        {
            eprintln!(
                "FAIL {} {} {}: {}",
                result.entry.file,
                result.entry.locus,
                result.entry.check.name(),
                result.detail
            );
        }
        return EXIT_FINDINGS;
    }
    EXIT_OK
}

fn parse_range(text: &str, what: &str) -> Result<std::ops::RangeInclusive<usize>, String> {
    let text = text.trim();
    if let Some((lo, hi)) = text.split_once("..") {
        let lo: usize = lo
            .trim()
            .parse()
            .map_err(|_| format!("bad {what} range {text:?}"))?;
        let hi: usize = hi
            .trim()
            .trim_start_matches('=')
            .parse()
            .map_err(|_| format!("bad {what} range {text:?}"))?;
        Ok(lo..=hi)
    } else {
        let n: usize = text
            .parse()
            .map_err(|_| format!("bad {what} count {text:?}"))?;
        Ok(n..=n)
    }
}

fn cmd_gen(args: GenArgs) -> u8 {
    let spec = deid_core::synth::SynthSpec {
        seed: args.seed,
        n_patients: args.patients,
        studies_per_patient: match parse_range(&args.studies, "studies") {
            Ok(r) => r,
            Err(e) => return config_error(e),
        },
        series_per_study: match parse_range(&args.series, "series") {
            Ok(r) => r,
            Err(e) => return config_error(e),
        },
        instances_per_series: match parse_range(&args.instances, "instances") {
            Ok(r) => r,
            Err(e) => return config_error(e),
        },
        phi_density: args.phi_density,
        burn_in_fraction: args.burn_in,
    };
    match deid_core::synth::generate(&spec, &args.output) {
        Ok(corpus) => {
            eprintln!(
                "generated {} file(s) for {} patient(s); {} answer-key entr(ies) at {}",
                corpus.files.len(),
                corpus.patients.len(),
                corpus.key.len(),
                corpus.root.display()
            );
            EXIT_OK
        }
        Err(e) => config_error(e),
    }
}
