//! Run configuration: a TOML key=value file, overridden by flags, overridden
//! by `DEID_UID_ROOT`.

use std::path::{Path, PathBuf};

use serde::Deserialize;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub ruleset: Option<PathBuf>,
    pub allowlist: Option<PathBuf>,
    pub denylist: Option<PathBuf>,
    pub patterns: Option<PathBuf>,
    pub uid_root: Option<String>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub workers: usize,
    #[serde(default)]
    pub fill_value: u16,
    #[serde(default)]
    pub strict: bool,
}

pub struct Overrides {
    pub ruleset: Option<PathBuf>,
    pub allowlist: Option<PathBuf>,
    pub denylist: Option<PathBuf>,
    pub patterns: Option<PathBuf>,
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub fill: Option<u16>,
    pub strict: bool,
    pub uid_root: Option<String>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig, String> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
        let mut cfg: RunConfig = toml::from_str(&text)
            .map_err(|e| format!("cannot parse config {}: {e}", path.display()))?;
        // paths in the config file are relative to the file itself
        if let Some(dir) = path.parent() {
            for slot in [
                &mut cfg.ruleset,
                &mut cfg.allowlist,
                &mut cfg.denylist,
                &mut cfg.patterns,
            ] {
                if let Some(p) = slot.take() {
                    *slot = Some(if p.is_absolute() { p } else { dir.join(p) });
                }
            }
        }
        Ok(cfg)
    }

    pub fn apply_overrides(&mut self, o: Overrides) {
        if o.ruleset.is_some() {
            self.ruleset = o.ruleset;
        }
        if o.allowlist.is_some() {
            self.allowlist = o.allowlist;
        }
        if o.denylist.is_some() {
            self.denylist = o.denylist;
        }
        if o.patterns.is_some() {
            self.patterns = o.patterns;
        }
        if let Some(seed) = o.seed {
            self.seed = seed;
        }
        if let Some(workers) = o.workers {
            self.workers = workers;
        }
        if let Some(fill) = o.fill {
            self.fill_value = fill;
        }
        if o.strict {
            self.strict = true;
        }
        if o.uid_root.is_some() {
            self.uid_root = o.uid_root;
        }
    }

    /// Every referenced path must exist at launch.
    pub fn check_paths(&self) -> Result<(), String> {
        for (name, path) in [
            ("ruleset", &self.ruleset),
            ("allowlist", &self.allowlist),
            ("denylist", &self.denylist),
            ("patterns", &self.patterns),
        ] {
            if let Some(path) = path {
                if !path.is_file() {
                    return Err(format!("{name} file {} does not exist", path.display()));
                }
            }
        }
        Ok(())
    }

    /// Recognizer battery: built-ins plus either the configured lists or the
    /// bundled defaults.
    pub fn build_recognizers(&self) -> Result<deid_core::scrub::RecognizerSet, String> {
        let mut set = deid_core::scrub::load_lists(
            self.allowlist.as_deref(),
            self.denylist.as_deref(),
            self.patterns.as_deref(),
        )
        .map_err(|e| e.to_string())?;
        if self.allowlist.is_none() && self.denylist.is_none() {
            deid_core::scrub::extend_from_text(
                &mut set,
                deid_core::actions::DEFAULT_ALLOW_TEXT,
                deid_core::actions::DEFAULT_DENY_TEXT,
            );
        } else if self.allowlist.is_none() {
            deid_core::scrub::extend_from_text(&mut set, deid_core::actions::DEFAULT_ALLOW_TEXT, "");
        } else if self.denylist.is_none() {
            deid_core::scrub::extend_from_text(&mut set, "", deid_core::actions::DEFAULT_DENY_TEXT);
        }
        Ok(set)
    }
}
