//! Synthetic DICOM corpus generator: a patient/study/series/instance tree
//! with planted synthetic PHI in metadata and (via OCR sidecars) in pixels,
//! plus the answer key that makes a run gradable end to end.
//!
//! Everything is drawn from bundled fake vocabularies, so the generator
//! cannot emit a real identifier by construction.

use std::collections::BTreeSet;
use std::ops::RangeInclusive;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::dicom::{
    write_file, DataElement, DicomFile, SequenceItem, Tag, TransferSyntax, Vr, WriteOptions,
};
use crate::verify::{save_key, AnswerKeyEntry, CheckKind};

pub const ANSWER_KEY_FILE: &str = "answer_key.csv";
pub const SPEC_LOCK_FILE: &str = "spec.lock";

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("output directory {0} is not empty")]
    NonEmptyOutputDir(PathBuf),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("invalid generator spec: {0}")]
    InvalidSpec(&'static str),
    #[error("cannot serialize generated file {path}: {detail}")]
    Encode { path: String, detail: String },
}

/// Shape of the corpus to generate.
#[derive(Debug, Clone)]
pub struct SynthSpec {
    pub seed: u64,
    pub n_patients: usize,
    pub studies_per_patient: RangeInclusive<usize>,
    pub series_per_study: RangeInclusive<usize>,
    pub instances_per_series: RangeInclusive<usize>,
    /// Fraction of free-text tags carrying planted PHI.
    pub phi_density: f64,
    /// Fraction of images with burned-in pixel text.
    pub burn_in_fraction: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            seed: 7,
            n_patients: 3,
            studies_per_patient: 1..=2,
            series_per_study: 1..=2,
            instances_per_series: 1..=3,
            phi_density: 0.8,
            burn_in_fraction: 0.5,
        }
    }
}

impl SynthSpec {
    fn validate(&self) -> Result<(), SynthError> {
        if self.n_patients == 0 {
            return Err(SynthError::InvalidSpec("n_patients must be positive"));
        }
        for (range, what) in [
            (&self.studies_per_patient, "studies_per_patient"),
            (&self.series_per_study, "series_per_study"),
            (&self.instances_per_series, "instances_per_series"),
        ] {
            if range.is_empty() || *range.start() == 0 {
                let _ = what;
                return Err(SynthError::InvalidSpec("ranges must be nonempty and positive"));
            }
        }
        if !(0.0..=1.0).contains(&self.phi_density) || !(0.0..=1.0).contains(&self.burn_in_fraction)
        {
            return Err(SynthError::InvalidSpec("fractions must lie in [0,1]"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct PatientRecord {
    pub old_id: String,
    pub name: String,
    /// Pseudonym the pipeline will assign when patients are numbered in
    /// sorted old-ID order.
    pub expected_new_id: String,
}

#[derive(Debug)]
pub struct GeneratedCorpus {
    pub root: PathBuf,
    /// Relative paths of the generated DICOM files.
    pub files: Vec<PathBuf>,
    pub key: Vec<AnswerKeyEntry>,
    pub patients: Vec<PatientRecord>,
}

// ---------------------------------------------------------------------------
// vocabularies (all synthetic)
// ---------------------------------------------------------------------------

const FIRST_NAMES: &[&str] = &[
    "JANE", "JOHN", "MARY", "ROBERT", "LINDA", "MICHAEL", "SUSAN", "DAVID", "KAREN", "JAMES",
    "PATRICIA", "WILLIAM", "BARBARA", "RICHARD", "NANCY", "THOMAS",
];
const LAST_NAMES: &[&str] = &[
    "DOE", "SMITH", "JOHNSON", "WILLIAMS", "BROWN", "JONES", "GARCIA", "MILLER", "DAVIS",
    "WILSON", "ANDERSON", "TAYLOR", "MOORE", "MARTIN", "CLARK", "LEWIS",
];
const PHYSICIANS: &[&str] = &["SMITH", "JONES", "NGUYEN", "PATEL", "OBRIEN", "KHAN", "FISCHER"];
// keyworded names are caught by the built-in facility pattern
const CLINICS_KEYWORDED: &[&str] = &[
    "GENERAL HOSPITAL",
    "RIVERSIDE CLINIC",
    "WESTSIDE IMAGING CENTER",
    "PINE VALLEY MEDICAL CENTER",
];
// bare names are covered by the bundled deny list
const CLINICS_BARE: &[&str] = &[
    "ST. MARY",
    "MERCY WEST",
    "LAKEVIEW",
    "RIVERBEND",
    "NORTHGATE",
    "EASTWOOD",
];
const STREETS: &[&str] = &["OAK ST", "ELM AVE", "MAPLE RD", "CEDAR LN", "BIRCH BLVD"];
const CITIES: &[&str] = &["SPRINGFIELD", "FAIRVIEW", "CENTERVILLE", "GREENVILLE", "SALEM"];
const BENIGN_DESCRIPTIONS: &[&str] = &[
    "CHEST PA AND LATERAL",
    "CT ABDOMEN PELVIS",
    "MR BRAIN W/O CONTRAST",
    "US RENAL COMPLETE",
    "XR KNEE 3 VIEWS",
    "CT HEAD WITHOUT CONTRAST",
];
const BENIGN_PIXEL_WORDS: &[&str] = &["SAGITTAL", "AXIAL", "CORONAL", "PORTABLE", "SUPINE"];
const MODALITIES: &[(&str, &str)] = &[
    ("CT", "1.2.840.10008.5.1.4.1.1.2"),
    ("MR", "1.2.840.10008.5.1.4.1.1.4"),
    ("US", "1.2.840.10008.5.1.4.1.1.6.1"),
    ("DX", "1.2.840.10008.5.1.4.1.1.1.1"),
];
const UID_STEMS: &[&str] = &["2.2.374.1.2", "2.2.198.1.2", "2.1.240.0.0", "1.1.766.1.2"];

const IMAGE_ROWS: u16 = 32;
const IMAGE_COLS: u16 = 32;
/// Byte planted inside burned-in regions so redaction visibly changes them.
const BURN_BYTE: u8 = 0xEE;

// ---------------------------------------------------------------------------

struct Generator {
    rng: ChaCha8Rng,
    uid_counter: u64,
    key: Vec<AnswerKeyEntry>,
    files: Vec<PathBuf>,
}

impl Generator {
    fn fresh_uid(&mut self) -> String {
        self.uid_counter += 1;
        let stem = UID_STEMS[self.rng.gen_range(0..UID_STEMS.len())];
        // the trailing counter keeps UIDs globally unique for any rng state
        format!(
            "{stem}.{:07}.{}.{:03}.{:012}{:07}",
            self.rng.gen_range(1_000_000u64..10_000_000),
            self.rng.gen_range(1u32..10),
            self.rng.gen_range(100u32..1000),
            self.rng.gen_range(0u64..1_000_000_000_000),
            self.uid_counter,
        )
    }

    fn date_between(&mut self, year_lo: i32, year_hi: i32) -> String {
        let year = self.rng.gen_range(year_lo..=year_hi);
        let month = self.rng.gen_range(1u32..=12);
        let day_cap = match month {
            2 => 28,
            4 | 6 | 9 | 11 => 30,
            _ => 31,
        };
        let day = self.rng.gen_range(1u32..=day_cap);
        format!("{year:04}{month:02}{day:02}")
    }

    fn time(&mut self) -> String {
        format!(
            "{:02}{:02}{:02}",
            self.rng.gen_range(0u32..24),
            self.rng.gen_range(0u32..60),
            self.rng.gen_range(0u32..60)
        )
    }

    fn phone(&mut self) -> String {
        format!(
            "{}-555-{:04}",
            self.rng.gen_range(200u32..999),
            self.rng.gen_range(100u32..10_000)
        )
    }

    fn coin(&mut self, p: f64) -> bool {
        self.rng.gen_bool(p.clamp(0.0, 1.0))
    }

    fn pick<'a>(&mut self, list: &[&'a str]) -> &'a str {
        list[self.rng.gen_range(0..list.len())]
    }

    fn push_key(
        &mut self,
        file: &Path,
        locus: impl Into<String>,
        check: CheckKind,
        expected: impl Into<String>,
        category: &str,
        subcategory: &str,
    ) {
        self.key.push(AnswerKeyEntry {
            file: file.display().to_string(),
            locus: locus.into(),
            check,
            expected: expected.into(),
            category: category.to_string(),
            subcategory: subcategory.to_string(),
        });
    }
}

/// Generates the corpus under `out_dir` (must be empty), together with
/// `answer_key.csv` and `spec.lock`, and returns the in-memory view.
pub fn generate(spec: &SynthSpec, out_dir: &Path) -> Result<GeneratedCorpus, SynthError> {
    spec.validate()?;
    let io_err = |path: &Path| {
        let path = path.display().to_string();
        move |source| SynthError::Io {
            path: path.clone(),
            source,
        }
    };

    if out_dir.exists() {
        let mut entries = std::fs::read_dir(out_dir).map_err(io_err(out_dir))?;
        if entries.next().is_some() {
            return Err(SynthError::NonEmptyOutputDir(out_dir.to_path_buf()));
        }
    } else {
        std::fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    }

    let mut g = Generator {
        rng: ChaCha8Rng::seed_from_u64(spec.seed),
        uid_counter: 0,
        key: Vec::new(),
        files: Vec::new(),
    };

    // Distinct patient identities.
    let mut old_ids = BTreeSet::new();
    while old_ids.len() < spec.n_patients {
        old_ids.insert(format!("{}", g.rng.gen_range(100_000_000u64..10_000_000_000)));
    }
    let mut patients: Vec<PatientRecord> = old_ids
        .iter()
        .enumerate()
        .map(|(idx, old_id)| PatientRecord {
            old_id: old_id.clone(),
            name: String::new(),
            expected_new_id: format!("{:07}", idx + 1),
        })
        .collect();
    for p in &mut patients {
        p.name = format!("{}^{}", g.pick(LAST_NAMES), g.pick(FIRST_NAMES));
    }

    for patient in patients.clone() {
        generate_patient(&mut g, spec, out_dir, &patient)?;
    }

    save_key(&out_dir.join(ANSWER_KEY_FILE), &g.key).map_err(|e| SynthError::Io {
        path: out_dir.join(ANSWER_KEY_FILE).display().to_string(),
        source: std::io::Error::other(e.to_string()),
    })?;
    write_spec_lock(spec, out_dir).map_err(io_err(&out_dir.join(SPEC_LOCK_FILE)))?;

    Ok(GeneratedCorpus {
        root: out_dir.to_path_buf(),
        files: g.files,
        key: g.key,
        patients,
    })
}

fn write_spec_lock(spec: &SynthSpec, out_dir: &Path) -> std::io::Result<()> {
    let text = format!(
        "seed={}\nn_patients={}\nstudies_per_patient={}..{}\nseries_per_study={}..{}\n\
         instances_per_series={}..{}\nphi_density={}\nburn_in_fraction={}\n",
        spec.seed,
        spec.n_patients,
        spec.studies_per_patient.start(),
        spec.studies_per_patient.end(),
        spec.series_per_study.start(),
        spec.series_per_study.end(),
        spec.instances_per_series.start(),
        spec.instances_per_series.end(),
        spec.phi_density,
        spec.burn_in_fraction,
    );
    std::fs::write(out_dir.join(SPEC_LOCK_FILE), text)
}

struct StudyContext {
    study_uid: String,
    study_date: String,
    study_time: String,
    accession: String,
    study_id: String,
}

fn generate_patient(
    g: &mut Generator,
    spec: &SynthSpec,
    out_dir: &Path,
    patient: &PatientRecord,
) -> Result<(), SynthError> {
    let birth_date = g.date_between(1940, 2004);
    let creator_uid = g.fresh_uid();
    let n_studies = g.rng.gen_range(spec.studies_per_patient.clone());

    for study_idx in 1..=n_studies {
        let study = StudyContext {
            study_uid: g.fresh_uid(),
            study_date: g.date_between(2018, 2024),
            study_time: g.time(),
            accession: format!("ACC{:06}", g.rng.gen_range(0u32..1_000_000)),
            study_id: format!("S{:04}", g.rng.gen_range(0u32..10_000)),
        };
        let n_series = g.rng.gen_range(spec.series_per_study.clone());
        for series_idx in 1..=n_series {
            let series_uid = g.fresh_uid();
            let (modality, sop_class) = MODALITIES[g.rng.gen_range(0..MODALITIES.len())];
            let n_instances = g.rng.gen_range(spec.instances_per_series.clone());
            let mut previous_sop: Option<String> = None;
            for instance_idx in 1..=n_instances {
                let rel: PathBuf = [
                    patient.old_id.as_str(),
                    &format!("study_{study_idx:02}"),
                    &format!("series_{series_idx:02}"),
                    &format!("inst_{instance_idx:03}.dcm"),
                ]
                .iter()
                .collect();
                let sop_uid = generate_instance(
                    g,
                    spec,
                    out_dir,
                    &rel,
                    patient,
                    &birth_date,
                    &creator_uid,
                    &study,
                    &series_uid,
                    modality,
                    sop_class,
                    instance_idx,
                    previous_sop.as_deref(),
                )?;
                previous_sop = Some(sop_uid);
                g.files.push(rel);
            }
        }
    }
    Ok(())
}

/// Description templates: (text, tokens that must vanish, token that must
/// survive).
fn description_with_phi(
    g: &mut Generator,
    patient: &PatientRecord,
) -> (String, Vec<(String, &'static str, &'static str)>, &'static str) {
    let (last, first) = patient
        .name
        .split_once('^')
        .unwrap_or((patient.name.as_str(), ""));
    match g.rng.gen_range(0u32..5) {
        0 => {
            let clinic = g.pick(CLINICS_BARE);
            (
                format!("PT {first} {last} SEEN AT {clinic}"),
                vec![
                    (first.to_string(), "hipaa", "HIPAA-A"),
                    (last.to_string(), "hipaa", "HIPAA-A"),
                    (clinic.to_string(), "hipaa", "HIPAA-B"),
                ],
                "SEEN",
            )
        }
        1 => {
            let doc = g.pick(PHYSICIANS);
            let phone = g.phone();
            (
                format!("READ BY DR {doc} {phone}"),
                vec![
                    (doc.to_string(), "hipaa", "HIPAA-A"),
                    (phone, "hipaa", "HIPAA-D"),
                ],
                "READ",
            )
        }
        2 => {
            let date = format!(
                "{}/{}/{}",
                g.rng.gen_range(1u32..=12),
                g.rng.gen_range(1u32..=28),
                g.rng.gen_range(2018u32..=2024)
            );
            (
                format!("FOLLOWUP ON {date} ROUTINE"),
                vec![(date, "hipaa", "HIPAA-C")],
                "FOLLOWUP",
            )
        }
        3 => {
            let clinic = g.pick(CLINICS_KEYWORDED);
            (
                format!("PT TRANSFERRED TO {clinic} STAT"),
                vec![(clinic.to_string(), "hipaa", "HIPAA-B")],
                "STAT",
            )
        }
        _ => {
            let phone = g.phone();
            (
                format!("CALLBACK {phone} ROUTINE"),
                vec![(phone, "hipaa", "HIPAA-D")],
                "CALLBACK",
            )
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn generate_instance(
    g: &mut Generator,
    spec: &SynthSpec,
    out_dir: &Path,
    rel: &Path,
    patient: &PatientRecord,
    birth_date: &str,
    creator_uid: &str,
    study: &StudyContext,
    series_uid: &str,
    modality: &str,
    sop_class: &str,
    instance_idx: usize,
    previous_sop: Option<&str>,
) -> Result<String, SynthError> {
    let ts = match g.rng.gen_range(0u32..4) {
        0 => TransferSyntax::ImplicitVrLittleEndian,
        1 => TransferSyntax::ExplicitVrBigEndian,
        _ => TransferSyntax::ExplicitVrLittleEndian,
    };
    let sop_uid = g.fresh_uid();
    let mut file = DicomFile::empty(ts);

    // file meta (group 0002, always explicit little-endian)
    let meta = &mut file.file_meta;
    meta.put(DataElement::new(Tag::new(0x0002, 0x0000), Vr::UL, vec![0, 0, 0, 0]));
    meta.put(DataElement::new(Tag::new(0x0002, 0x0001), Vr::OB, vec![0x00, 0x01]));
    meta.put(DataElement::from_text(Tag::new(0x0002, 0x0002), Vr::UI, sop_class));
    meta.put(DataElement::from_text(Tag::new(0x0002, 0x0003), Vr::UI, &sop_uid));
    meta.put(DataElement::from_text(Tag::new(0x0002, 0x0010), Vr::UI, ts.uid()));
    meta.put(DataElement::from_text(
        Tag::new(0x0002, 0x0012),
        Vr::UI,
        "1.3.6.1.4.1.54321.99.1",
    ));
    meta.put(DataElement::from_text(Tag::new(0x0002, 0x0013), Vr::SH, "SYNTHGEN"));

    let be = ts.big_endian();
    let u16_bytes = |v: u16| -> Vec<u8> {
        if be {
            v.to_be_bytes().to_vec()
        } else {
            v.to_le_bytes().to_vec()
        }
    };

    let text = |tag: Tag, vr: Vr, value: &str| DataElement::from_text(tag, vr, value);
    let ds = &mut file.dataset;

    // --- instance identity --------------------------------------------------
    ds.put(text(Tag::new(0x0008, 0x0008), Vr::CS, "ORIGINAL\\PRIMARY"));
    let creation_date = study.study_date.clone();
    ds.put(text(Tag::new(0x0008, 0x0012), Vr::DA, &creation_date));
    ds.put(text(Tag::new(0x0008, 0x0013), Vr::TM, &study.study_time));
    ds.put(text(Tag::new(0x0008, 0x0014), Vr::UI, creator_uid));
    ds.put(text(Tag::new(0x0008, 0x0016), Vr::UI, sop_class));
    ds.put(text(Tag::new(0x0008, 0x0018), Vr::UI, &sop_uid));
    ds.put(text(Tag::new(0x0008, 0x0020), Vr::DA, &study.study_date));
    ds.put(text(Tag::new(0x0008, 0x0021), Vr::DA, &study.study_date));
    // acquisition datetime exercises the long date formats
    let acq_dt = if g.coin(0.5) {
        format!("{}{}", study.study_date, study.study_time)
    } else {
        format!("{}{}.{:02}", study.study_date, study.study_time, g.rng.gen_range(0u32..100))
    };
    ds.put(text(Tag::new(0x0008, 0x002A), Vr::DT, &acq_dt));
    ds.put(text(Tag::new(0x0008, 0x0023), Vr::DA, &study.study_date));
    ds.put(text(Tag::new(0x0008, 0x0030), Vr::TM, &study.study_time));
    ds.put(text(Tag::new(0x0008, 0x0050), Vr::SH, &study.accession));
    ds.put(text(Tag::new(0x0008, 0x0060), Vr::CS, modality));

    let file_for_key = rel.to_path_buf();
    g.push_key(&file_for_key, "(0008,0012)", CheckKind::DateShifted, &creation_date, "hipaa", "HIPAA-C");
    g.push_key(&file_for_key, "(0008,0020)", CheckKind::DateShifted, &study.study_date, "hipaa", "HIPAA-C");
    g.push_key(&file_for_key, "(0008,002A)", CheckKind::DateShifted, &acq_dt, "hipaa", "HIPAA-C");
    g.push_key(&file_for_key, "(0008,0018)", CheckKind::UidChanged, &sop_uid, "dicom", "DICOM-P15-BASIC-U");
    g.push_key(&file_for_key, "(0008,0018)", CheckKind::UidConsistent, &sop_uid, "dicom", "DICOM-P15-BASIC-U");
    g.push_key(&file_for_key, "(0008,0018)", CheckKind::TextNotnull, "", "dicom", "DICOM-IOD-2");
    g.push_key(&file_for_key, "(0008,0014)", CheckKind::UidConsistent, creator_uid, "dicom", "DICOM-P15-BASIC-U");
    g.push_key(&file_for_key, "(0008,0016)", CheckKind::TagRetained, "", "dicom", "DICOM-IOD-1");
    g.push_key(&file_for_key, "(0008,0060)", CheckKind::TagRetained, "", "dicom", "DICOM-IOD-1");
    if g.coin(spec.phi_density) {
        g.push_key(&file_for_key, "(0008,0050)", CheckKind::TextRemoved, &study.accession, "tcia", "TCIA-P15-BASIC-Z");
    }

    // --- institution / staff (always planted PHI, removed wholesale) --------
    if g.coin(spec.phi_density) {
        let clinic = if g.coin(0.5) {
            g.pick(CLINICS_KEYWORDED)
        } else {
            g.pick(CLINICS_BARE)
        };
        ds.put(text(Tag::new(0x0008, 0x0080), Vr::LO, clinic));
        g.push_key(&file_for_key, "(0008,0080)", CheckKind::TextRemoved, clinic, "tcia", "TCIA-PTKB-X");

        let address = format!(
            "{} {} {}",
            g.rng.gen_range(1u32..999),
            g.pick(STREETS),
            g.pick(CITIES)
        );
        ds.put(text(Tag::new(0x0008, 0x0081), Vr::ST, &address));
        g.push_key(&file_for_key, "(0008,0081)", CheckKind::TextRemoved, &address, "hipaa", "HIPAA-B");

        let phone = g.phone();
        ds.put(text(Tag::new(0x0008, 0x0094), Vr::SH, &phone));
        g.push_key(&file_for_key, "(0008,0094)", CheckKind::TextRemoved, &phone, "hipaa", "HIPAA-D");

        let physician = format!("{}^{}", g.pick(PHYSICIANS), g.pick(FIRST_NAMES));
        ds.put(text(Tag::new(0x0008, 0x0090), Vr::PN, &physician));
        g.push_key(&file_for_key, "(0008,0090)", CheckKind::TextRemoved, &physician, "hipaa", "HIPAA-A");
    }

    // --- free-text descriptions ----------------------------------------------
    if g.coin(spec.phi_density) {
        let (desc, removed, retained) = description_with_phi(g, patient);
        ds.put(text(Tag::new(0x0008, 0x1030), Vr::LO, &desc));
        for (token, category, sub) in removed {
            g.push_key(&file_for_key, "(0008,1030)", CheckKind::TextRemoved, &token, category, sub);
        }
        g.push_key(&file_for_key, "(0008,1030)", CheckKind::TextRetained, retained, "tcia", "TCIA-REV");
    } else {
        let desc = g.pick(BENIGN_DESCRIPTIONS);
        ds.put(text(Tag::new(0x0008, 0x1030), Vr::LO, desc));
        let first_word = desc.split(' ').next().unwrap_or(desc);
        g.push_key(&file_for_key, "(0008,1030)", CheckKind::TextRetained, first_word, "tcia", "TCIA-REV");
    }
    let series_desc = g.pick(BENIGN_DESCRIPTIONS);
    ds.put(text(Tag::new(0x0008, 0x103E), Vr::LO, series_desc));
    g.push_key(
        &file_for_key,
        "(0008,103E)",
        CheckKind::TextRetained,
        series_desc.split(' ').next().unwrap_or(series_desc),
        "tcia",
        "TCIA-REV",
    );

    // --- patient identity ----------------------------------------------------
    ds.put(text(Tag::new(0x0010, 0x0010), Vr::PN, &patient.name));
    ds.put(text(Tag::new(0x0010, 0x0020), Vr::LO, &patient.old_id));
    ds.put(text(Tag::new(0x0010, 0x0030), Vr::DA, birth_date));
    let sex = if g.coin(0.5) { "F" } else { "M" };
    ds.put(text(Tag::new(0x0010, 0x0040), Vr::CS, sex));
    g.push_key(&file_for_key, "(0010,0010)", CheckKind::PatidConsistent, &patient.old_id, "dicom", "DICOM-P15-BASIC-C");
    g.push_key(&file_for_key, "(0010,0020)", CheckKind::PatidConsistent, &patient.old_id, "dicom", "DICOM-P15-BASIC-C");
    g.push_key(&file_for_key, "(0010,0010)", CheckKind::TextNotnull, "", "dicom", "DICOM-IOD-2");
    g.push_key(&file_for_key, "(0010,0020)", CheckKind::TextNotnull, "", "dicom", "DICOM-IOD-2");
    g.push_key(&file_for_key, "(0010,0030)", CheckKind::DateShifted, birth_date, "hipaa", "HIPAA-C");
    g.push_key(&file_for_key, "(0010,0040)", CheckKind::TagRetained, "", "tcia", "TCIA-P15-PAT-K");

    if g.coin(spec.phi_density) {
        let age = format!("{:03}Y", g.rng.gen_range(19u32..95));
        ds.put(text(Tag::new(0x0010, 0x1010), Vr::AS, &age));
        g.push_key(&file_for_key, "(0010,1010)", CheckKind::TextRemoved, &age, "hipaa", "HIPAA-C");

        let patient_phone = g.phone();
        ds.put(text(Tag::new(0x0010, 0x2154), Vr::SH, &patient_phone));
        g.push_key(&file_for_key, "(0010,2154)", CheckKind::TextRemoved, &patient_phone, "hipaa", "HIPAA-D");

        // private elements fall to the private default (remove)
        let private_value = format!("SYNTH {} {}", patient.name.replace('^', " "), patient.old_id);
        ds.put(text(Tag::new(0x0009, 0x0010), Vr::LO, &private_value));
        g.push_key(&file_for_key, "(0009,0010)", CheckKind::TextRemoved, &patient.old_id, "tcia", "TCIA-PTKB-X");
    }

    // --- study / series structure --------------------------------------------
    ds.put(text(Tag::new(0x0020, 0x000D), Vr::UI, &study.study_uid));
    ds.put(text(Tag::new(0x0020, 0x000E), Vr::UI, series_uid));
    ds.put(text(Tag::new(0x0020, 0x0010), Vr::SH, &study.study_id));
    ds.put(text(Tag::new(0x0020, 0x0011), Vr::IS, "1"));
    ds.put(text(Tag::new(0x0020, 0x0013), Vr::IS, &instance_idx.to_string()));
    g.push_key(&file_for_key, "(0020,000D)", CheckKind::UidChanged, &study.study_uid, "dicom", "DICOM-P15-BASIC-U");
    g.push_key(&file_for_key, "(0020,000D)", CheckKind::UidConsistent, &study.study_uid, "hipaa", "HIPAA-R");
    g.push_key(&file_for_key, "(0020,000E)", CheckKind::UidChanged, series_uid, "dicom", "DICOM-P15-BASIC-U");
    g.push_key(&file_for_key, "(0020,000E)", CheckKind::UidConsistent, series_uid, "hipaa", "HIPAA-R");
    if g.coin(spec.phi_density) {
        g.push_key(&file_for_key, "(0020,0010)", CheckKind::TextRemoved, &study.study_id, "tcia", "TCIA-P15-BASIC-Z");
    }
    g.push_key(&file_for_key, "(0020,0013)", CheckKind::TagRetained, "", "dicom", "DICOM-IOD-1");

    // cross-file reference to the previous instance in the series
    if let Some(prev) = previous_sop {
        let item = SequenceItem {
            elements: vec![
                DataElement::from_text(Tag::new(0x0008, 0x1150), Vr::UI, sop_class),
                DataElement::from_text(Tag::new(0x0008, 0x1155), Vr::UI, prev),
            ],
            undefined_length: false,
        };
        ds.put(DataElement::sequence(Tag::new(0x0008, 0x1140), vec![item]));
        let locus = "(0008,1140)[0]/(0008,1155)";
        g.push_key(&file_for_key, locus, CheckKind::UidChanged, prev, "dicom", "DICOM-P15-BASIC-U");
        g.push_key(&file_for_key, locus, CheckKind::UidConsistent, prev, "hipaa", "HIPAA-R");
        g.push_key(
            &file_for_key,
            "(0008,1140)[0]/(0008,1150)",
            CheckKind::TagRetained,
            "",
            "dicom",
            "DICOM-IOD-1",
        );
    }

    // --- pixels ----------------------------------------------------------------
    ds.put(DataElement::new(Tag::new(0x0028, 0x0002), Vr::US, u16_bytes(1)));
    ds.put(text(Tag::new(0x0028, 0x0004), Vr::CS, "MONOCHROME2"));
    ds.put(DataElement::new(Tag::new(0x0028, 0x0010), Vr::US, u16_bytes(IMAGE_ROWS)));
    ds.put(DataElement::new(Tag::new(0x0028, 0x0011), Vr::US, u16_bytes(IMAGE_COLS)));
    ds.put(DataElement::new(Tag::new(0x0028, 0x0100), Vr::US, u16_bytes(8)));
    ds.put(DataElement::new(Tag::new(0x0028, 0x0101), Vr::US, u16_bytes(8)));
    ds.put(DataElement::new(Tag::new(0x0028, 0x0102), Vr::US, u16_bytes(7)));
    ds.put(DataElement::new(Tag::new(0x0028, 0x0103), Vr::US, u16_bytes(0)));
    g.push_key(&file_for_key, "(0028,0010)", CheckKind::TagRetained, "", "dicom", "DICOM-IOD-1");

    let mut pixels: Vec<u8> = (0..(IMAGE_ROWS as usize * IMAGE_COLS as usize))
        .map(|_| g.rng.gen_range(0u8..=255))
        .collect();

    let mut exclusions = String::new();
    if g.coin(spec.burn_in_fraction) {
        let burned = plant_burn_in(g, rel, out_dir, patient, &mut pixels)?;
        g.push_key(
            &file_for_key,
            format!("pixels:0:{},{},{},{}", burned.x0, burned.y0, burned.x1, burned.y1),
            CheckKind::PixelsHidden,
            "0",
            "tcia",
            "TCIA-P15-PIX-K",
        );
        exclusions = format!("0:{},{},{},{}", burned.x0, burned.y0, burned.x1, burned.y1);
    }
    g.push_key(&file_for_key, "pixels", CheckKind::PixelsRetained, &exclusions, "tcia", "TCIA-P15-PIX-K");

    ds.put(DataElement::new(Tag::new(0x7FE0, 0x0010), Vr::OB, pixels));

    let bytes = write_file(
        &file,
        WriteOptions {
            recompute_group_lengths: true,
            ..Default::default()
        },
    )
    .map_err(|e| SynthError::Encode {
        path: rel.display().to_string(),
        detail: e.to_string(),
    })?;
    let out_path = out_dir.join(rel);
    if let Some(parent) = out_path.parent() {
        std::fs::create_dir_all(parent).map_err(|source| SynthError::Io {
            path: parent.display().to_string(),
            source,
        })?;
    }
    std::fs::write(&out_path, bytes).map_err(|source| SynthError::Io {
        path: out_path.display().to_string(),
        source,
    })?;

    Ok(sop_uid)
}

#[derive(Clone, Copy)]
struct BurnBox {
    x0: u32,
    y0: u32,
    x1: u32,
    y1: u32,
}

/// Burns a PHI word pair (or phone / patient ID) into the pixel block and
/// writes the OCR sidecar. Returns the union box the redactor will paint.
fn plant_burn_in(
    g: &mut Generator,
    rel: &Path,
    out_dir: &Path,
    patient: &PatientRecord,
    pixels: &mut [u8],
) -> Result<BurnBox, SynthError> {
    let (last, first) = patient
        .name
        .split_once('^')
        .unwrap_or((patient.name.as_str(), ""));

    // PHI words sit adjacent on one line near the top; a benign word sits on
    // a separate line below.
    let phi_words: Vec<String> = match g.rng.gen_range(0u32..3) {
        0 => vec![first.to_string(), last.to_string()],
        1 => vec![g.phone()],
        _ => vec![patient.old_id.clone()],
    };

    let y0 = 2u32;
    let y1 = 6u32;
    let mut x = 2u32;
    let mut sidecar = Vec::new();
    let mut union: Option<BurnBox> = None;
    for word in &phi_words {
        let width = (word.len() as u32 * 2).clamp(4, 12);
        let rect = BurnBox {
            x0: x,
            y0,
            x1: (x + width).min(IMAGE_COLS as u32),
            y1,
        };
        for yy in rect.y0..rect.y1 {
            for xx in rect.x0..rect.x1 {
                pixels[(yy * IMAGE_COLS as u32 + xx) as usize] = BURN_BYTE;
            }
        }
        sidecar.push(serde_json::json!({
            "text": word,
            "x0": rect.x0,
            "y0": rect.y0,
            "x1": rect.x1,
            "y1": rect.y1,
            "frame": 0,
        }));
        union = Some(match union {
            None => rect,
            Some(u) => BurnBox {
                x0: u.x0.min(rect.x0),
                y0: u.y0.min(rect.y0),
                x1: u.x1.max(rect.x1),
                y1: u.y1.max(rect.y1),
            },
        });
        x = rect.x1 + 1;
    }

    // benign word on its own line, left untouched by redaction
    let benign = g.pick(BENIGN_PIXEL_WORDS);
    sidecar.push(serde_json::json!({
        "text": benign,
        "x0": 2,
        "y0": 20,
        "x1": 14,
        "y1": 24,
        "frame": 0,
    }));

    let sidecar_rel = crate::redact::sidecar_path_for(rel);
    let sidecar_path = out_dir.join(&sidecar_rel);
    if let Some(parent) = sidecar_path.parent() {
        std::fs::create_dir_all(parent).map_err(|source| SynthError::Io {
            path: parent.display().to_string(),
            source,
        })?;
    }
    let json = serde_json::to_string_pretty(&serde_json::Value::Array(sidecar)).expect("sidecar json");
    std::fs::write(&sidecar_path, json).map_err(|source| SynthError::Io {
        path: sidecar_path.display().to_string(),
        source,
    })?;

    Ok(union.expect("at least one phi word"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dicom::{parse_file, ParseOptions, Tag};

    fn tree_bytes(root: &Path) -> Vec<(PathBuf, Vec<u8>)> {
        let mut out = Vec::new();
        for entry in walkdir::WalkDir::new(root).sort_by_file_name() {
            let entry = entry.unwrap();
            if entry.file_type().is_file() {
                out.push((
                    entry.path().strip_prefix(root).unwrap().to_path_buf(),
                    std::fs::read(entry.path()).unwrap(),
                ));
            }
        }
        out
    }

    #[test]
    fn combinatorial_bounds_hold() {
        let dir = tempfile::tempdir().unwrap();
        let spec = SynthSpec {
            seed: 7,
            n_patients: 3,
            studies_per_patient: 1..=2,
            series_per_study: 1..=2,
            instances_per_series: 1..=3,
            ..Default::default()
        };
        let corpus = generate(&spec, &dir.path().join("c")).unwrap();
        assert!((3..=36).contains(&corpus.files.len()), "{}", corpus.files.len());
        // tree depth 4: patient/study/series/instance
        for rel in &corpus.files {
            assert_eq!(rel.components().count(), 4, "{rel:?}");
        }
    }

    #[test]
    fn same_seed_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let spec = SynthSpec::default();
        generate(&spec, &dir.path().join("a")).unwrap();
        generate(&spec, &dir.path().join("b")).unwrap();
        assert_eq!(
            tree_bytes(&dir.path().join("a")),
            tree_bytes(&dir.path().join("b"))
        );
    }

    #[test]
    fn zero_density_key_has_no_removal_checks() {
        let dir = tempfile::tempdir().unwrap();
        let spec = SynthSpec {
            phi_density: 0.0,
            burn_in_fraction: 0.0,
            ..Default::default()
        };
        let corpus = generate(&spec, &dir.path().join("c")).unwrap();
        assert!(corpus
            .key
            .iter()
            .all(|e| e.check != CheckKind::TextRemoved && e.check != CheckKind::PixelsHidden));
        assert!(corpus.key.iter().any(|e| e.check == CheckKind::TagRetained));
    }

    #[test]
    fn nonempty_out_dir_rejected() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("x"), b"occupied").unwrap();
        assert!(matches!(
            generate(&SynthSpec::default(), dir.path()),
            Err(SynthError::NonEmptyOutputDir(_))
        ));
    }

    #[test]
    fn generated_files_parse_cleanly_and_loci_exist() {
        let dir = tempfile::tempdir().unwrap();
        let corpus = generate(&SynthSpec::default(), &dir.path().join("c")).unwrap();
        assert!(!corpus.files.is_empty());
        for rel in &corpus.files {
            let bytes = std::fs::read(corpus.root.join(rel)).unwrap();
            let file = parse_file(&bytes, ParseOptions { strict: true }).unwrap();
            assert!(
                file.parse_warnings.is_empty(),
                "{rel:?}: {:?}",
                file.parse_warnings
            );
        }
        // every key entry's locus exists in the generated corpus
        let mut loci_by_file = std::collections::BTreeMap::new();
        for rel in &corpus.files {
            let bytes = std::fs::read(corpus.root.join(rel)).unwrap();
            let file = parse_file(&bytes, ParseOptions::default()).unwrap();
            let mut loci = std::collections::BTreeSet::new();
            let has_pixels = file.dataset.get(Tag::new(0x7FE0, 0x0010)).is_some();
            file.dataset.walk(&mut |path, e| {
                loci.insert(path.locus(e.tag));
            });
            loci_by_file.insert(rel.display().to_string(), (loci, has_pixels));
        }
        for entry in &corpus.key {
            let (loci, has_pixels) = loci_by_file
                .get(&entry.file)
                .unwrap_or_else(|| panic!("locus file missing: {}", entry.file));
            if entry.locus.starts_with("pixels") {
                assert!(has_pixels, "{} has no pixel data", entry.file);
            } else {
                assert!(
                    loci.contains(&entry.locus),
                    "locus {} absent from {}",
                    entry.locus,
                    entry.file
                );
            }
        }
        // answer key and lock file written
        assert!(corpus.root.join(ANSWER_KEY_FILE).exists());
        assert!(corpus.root.join(SPEC_LOCK_FILE).exists());
    }

    #[test]
    fn expected_patient_numbering_is_sorted() {
        let dir = tempfile::tempdir().unwrap();
        let corpus = generate(&SynthSpec::default(), &dir.path().join("c")).unwrap();
        let mut sorted = corpus.patients.clone();
        sorted.sort_by(|a, b| a.old_id.cmp(&b.old_id));
        for (idx, p) in sorted.iter().enumerate() {
            assert_eq!(p.expected_new_id, format!("{:07}", idx + 1));
        }
    }
}
