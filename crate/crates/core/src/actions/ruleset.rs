//! Declarative per-tag policy: line-oriented rule files with first-match-wins
//! semantics and separate defaults for public and private tags.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use thiserror::Error;

use crate::dicom::Tag;
use crate::pseudonym::DEFAULT_UID_ROOT_TEMPLATE;

/// Concrete per-element action. Composite profile codes (X/Z/D, Z/D) are
/// resolved to their most conservative member while loading and never
/// survive past load.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum ActionCode {
    Remove,
    Keep,
    Zero,
    LookupPatient,
    HashUid,
    IncrementDate,
    CleanText,
}

impl ActionCode {
    /// Short code used in rule files and the action log.
    pub fn short(self) -> &'static str {
        match self {
            ActionCode::Remove => "X",
            ActionCode::Keep => "K",
            ActionCode::Zero => "Z",
            ActionCode::LookupPatient => "LOOKUP",
            ActionCode::HashUid => "HASHUID",
            ActionCode::IncrementDate => "INCDATE",
            ActionCode::CleanText => "CLEAN",
        }
    }

    fn parse(token: &str) -> Option<ActionCode> {
        Some(match token.to_ascii_uppercase().as_str() {
            "X" | "REMOVE" => ActionCode::Remove,
            "K" | "KEEP" => ActionCode::Keep,
            "Z" | "ZERO" => ActionCode::Zero,
            "LOOKUP" => ActionCode::LookupPatient,
            "HASHUID" | "U" => ActionCode::HashUid,
            "INCDATE" | "INCREMENTDATE" => ActionCode::IncrementDate,
            "CLEAN" | "CLEANTEXT" | "C" => ActionCode::CleanText,
            // composite profile codes collapse to the conservative member
            "X/Z/D" | "X/Z" | "X/D" => ActionCode::Remove,
            "Z/D" => ActionCode::Zero,
            _ => return None,
        })
    }
}

impl fmt::Display for ActionCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short())
    }
}

/// Tag pattern in `(GGGG,EEEE)` form where any hex digit may be the wildcard
/// `x`, e.g. `(50xx,xxxx)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TagPattern {
    group_value: u16,
    group_mask: u16,
    element_value: u16,
    element_mask: u16,
}

impl TagPattern {
    pub fn exact(tag: Tag) -> Self {
        TagPattern {
            group_value: tag.group,
            group_mask: 0xFFFF,
            element_value: tag.element,
            element_mask: 0xFFFF,
        }
    }

    pub fn matches(&self, tag: Tag) -> bool {
        tag.group & self.group_mask == self.group_value
            && tag.element & self.element_mask == self.element_value
    }

    pub fn is_exact(&self) -> bool {
        self.group_mask == 0xFFFF && self.element_mask == 0xFFFF
    }

    fn parse_half(text: &str) -> Option<(u16, u16)> {
        if text.len() != 4 {
            return None;
        }
        let mut value = 0u16;
        let mut mask = 0u16;
        for ch in text.chars() {
            value <<= 4;
            mask <<= 4;
            match ch {
                'x' | 'X' => {}
                c => {
                    value |= c.to_digit(16)? as u16;
                    mask |= 0xF;
                }
            }
        }
        Some((value, mask))
    }
}

impl FromStr for TagPattern {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let inner = s
            .strip_prefix('(')
            .and_then(|r| r.strip_suffix(')'))
            .ok_or(())?;
        let (g, e) = inner.split_once(',').ok_or(())?;
        let (group_value, group_mask) = TagPattern::parse_half(g.trim()).ok_or(())?;
        let (element_value, element_mask) = TagPattern::parse_half(e.trim()).ok_or(())?;
        Ok(TagPattern {
            group_value,
            group_mask,
            element_value,
            element_mask,
        })
    }
}

impl fmt::Display for TagPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let half = |value: u16, mask: u16| -> String {
            (0..4)
                .map(|i| {
                    let shift = 12 - 4 * i;
                    if (mask >> shift) & 0xF == 0 {
                        'x'
                    } else {
                        char::from_digit(((value >> shift) & 0xF) as u32, 16)
                            .unwrap()
                            .to_ascii_uppercase()
                    }
                })
                .collect()
        };
        write!(
            f,
            "({},{})",
            half(self.group_value, self.group_mask),
            half(self.element_value, self.element_mask)
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ActionRule {
    pub pattern: TagPattern,
    pub code: ActionCode,
    /// Rules reach elements nested in sequences unless restricted with the
    /// `top-level-only` flag.
    pub applies_in_sequences: bool,
}

#[derive(Debug, Error)]
pub enum RulesetError {
    #[error("cannot read ruleset {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("line {line_no}: malformed tag pattern in {line:?}")]
    MalformedPattern { line_no: usize, line: String },
    #[error("line {line_no}: unknown action code in {line:?}")]
    UnknownCode { line_no: usize, line: String },
    #[error("line {line_no}: bad directive {line:?}")]
    BadDirective { line_no: usize, line: String },
    #[error("ruleset is missing the @{0} directive")]
    MissingDefaults(&'static str),
    #[error("default actions cannot be LOOKUP")]
    DefaultIsLookup,
}

/// An ordered rule list plus defaults; first match wins.
#[derive(Debug, Clone)]
pub struct Ruleset {
    pub rules: Vec<ActionRule>,
    pub default_public: ActionCode,
    pub default_private: ActionCode,
    pub uid_root_template: String,
    pub load_warnings: Vec<String>,
}

impl Ruleset {
    /// First matching rule decides; unmatched tags fall to the public or
    /// private default by group parity.
    pub fn action_for(&self, tag: Tag, in_sequence: bool) -> ActionCode {
        for rule in &self.rules {
            if !rule.applies_in_sequences && in_sequence {
                continue;
            }
            if rule.pattern.matches(tag) {
                return rule.code;
            }
        }
        if tag.is_private() {
            self.default_private
        } else {
            self.default_public
        }
    }

    pub fn parse(text: &str) -> Result<Ruleset, RulesetError> {
        let mut rules = Vec::new();
        let mut default_public = None;
        let mut default_private = None;
        let mut uid_root_template = None;
        let mut load_warnings = Vec::new();
        let mut seen_exact: Vec<TagPattern> = Vec::new();

        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }

            if let Some(directive) = line.strip_prefix('@') {
                let (name, value) = directive
                    .split_once(char::is_whitespace)
                    .map(|(n, v)| (n.trim(), v.trim()))
                    .ok_or_else(|| RulesetError::BadDirective {
                        line_no,
                        line: raw.to_string(),
                    })?;
                match name {
                    "default_public" => {
                        default_public =
                            Some(ActionCode::parse(value).ok_or(RulesetError::UnknownCode {
                                line_no,
                                line: raw.to_string(),
                            })?)
                    }
                    "default_private" => {
                        default_private =
                            Some(ActionCode::parse(value).ok_or(RulesetError::UnknownCode {
                                line_no,
                                line: raw.to_string(),
                            })?)
                    }
                    "uid_root" => uid_root_template = Some(value.to_string()),
                    _ => {
                        return Err(RulesetError::BadDirective {
                            line_no,
                            line: raw.to_string(),
                        })
                    }
                }
                continue;
            }

            let mut parts = line.split_whitespace();
            let pattern_text = parts.next().unwrap_or("");
            let pattern: TagPattern =
                pattern_text
                    .parse()
                    .map_err(|_| RulesetError::MalformedPattern {
                        line_no,
                        line: raw.to_string(),
                    })?;
            let code_text = parts.next().ok_or_else(|| RulesetError::UnknownCode {
                line_no,
                line: raw.to_string(),
            })?;
            let code = ActionCode::parse(code_text).ok_or_else(|| RulesetError::UnknownCode {
                line_no,
                line: raw.to_string(),
            })?;
            let mut applies_in_sequences = true;
            for flag in parts {
                match flag {
                    "top-level-only" => applies_in_sequences = false,
                    other => {
                        return Err(RulesetError::BadDirective {
                            line_no,
                            line: format!("unknown flag {other:?} in {raw:?}"),
                        })
                    }
                }
            }

            if pattern.is_exact() && seen_exact.contains(&pattern) {
                load_warnings.push(format!(
                    "line {line_no}: duplicate rule for {pattern}; first occurrence wins"
                ));
            } else if pattern.is_exact() {
                seen_exact.push(pattern);
            }

            rules.push(ActionRule {
                pattern,
                code,
                applies_in_sequences,
            });
        }

        let default_public = default_public.ok_or(RulesetError::MissingDefaults("default_public"))?;
        let default_private =
            default_private.ok_or(RulesetError::MissingDefaults("default_private"))?;
        if default_public == ActionCode::LookupPatient
            || default_private == ActionCode::LookupPatient
        {
            return Err(RulesetError::DefaultIsLookup);
        }

        Ok(Ruleset {
            rules,
            default_public,
            default_private,
            uid_root_template: uid_root_template
                .unwrap_or_else(|| DEFAULT_UID_ROOT_TEMPLATE.to_string()),
            load_warnings,
        })
    }

    pub fn load(path: &Path) -> Result<Ruleset, RulesetError> {
        let text = std::fs::read_to_string(path).map_err(|source| RulesetError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Ruleset::parse(&text)
    }

    /// The bundled default policy.
    pub fn bundled_default() -> Ruleset {
        Ruleset::parse(DEFAULT_RULESET_TEXT).expect("bundled ruleset parses")
    }
}

/// Shipped default policy text (also usable as a starting point for custom
/// rule files).
pub const DEFAULT_RULESET_TEXT: &str = include_str!("../assets/default.ruleset");
