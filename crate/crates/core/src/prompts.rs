//! Prompt templates keyed by `(phase, role)`.
//!
//! A template is plain text with `{{name}}` placeholders. Every placeholder
//! in a body must be bound at render time; `{{rule}}` is bound by the
//! registry to the configured difficulty-rule clauses. The output-format
//! block for the role is appended after substitution.
//!
//! Built-in templates ship in `templates/` and are compiled in. A run may
//! point at an override directory holding files named
//! `<phase>.<role>.txt` (for example `cmr-peer.analyst.txt`) plus
//! `repair.txt`; files present there replace the built-in bodies.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::backends::RepairContext;
use crate::trace::Phase;

pub const ANALYST: &str = "analyst";
pub const FINAL: &str = "final";
pub const AUDIO_AUX: &str = "audio-aux";
pub const VISUAL_AUX: &str = "visual-aux";
pub const VISUAL_DOM: &str = "visual-dom";
pub const AUDIO_DOM: &str = "audio-dom";
pub const AV_DOM: &str = "av-dom";
pub const CHECK: &str = "check";

const REPAIR_FILE: &str = "repair.txt";

/// Every key the pipeline renders, with the bindings it supplies.
pub const REQUIRED_KEYS: [(Phase, &str, &[&str]); 9] = [
    (Phase::CmrIndependent, ANALYST, &["expression", "rule"]),
    (Phase::CmrPeer, ANALYST, &["expression", "rule", "peers"]),
    (Phase::CmrFinal, FINAL, &["expression", "rule", "discussion"]),
    (Phase::CorAuxiliary, AUDIO_AUX, &["expression"]),
    (Phase::CorAuxiliary, VISUAL_AUX, &["expression"]),
    (Phase::CorDominant, VISUAL_DOM, &["expression", "auxiliary"]),
    (Phase::CorDominant, AUDIO_DOM, &["expression", "auxiliary"]),
    (Phase::CorDominant, AV_DOM, &["expression", "auxiliary"]),
    (Phase::RlsCheck, CHECK, &["expression", "prompt", "overlay"]),
];

const REPAIR_BINDINGS: &[&str] = &["prompt", "output", "error"];

const BUILTIN: [(&str, &str); 10] = [
    (
        "cmr-independent.analyst.txt",
        include_str!("../templates/cmr-independent.analyst.txt"),
    ),
    (
        "cmr-peer.analyst.txt",
        include_str!("../templates/cmr-peer.analyst.txt"),
    ),
    (
        "cmr-final.final.txt",
        include_str!("../templates/cmr-final.final.txt"),
    ),
    (
        "cor-auxiliary.audio-aux.txt",
        include_str!("../templates/cor-auxiliary.audio-aux.txt"),
    ),
    (
        "cor-auxiliary.visual-aux.txt",
        include_str!("../templates/cor-auxiliary.visual-aux.txt"),
    ),
    (
        "cor-dominant.visual-dom.txt",
        include_str!("../templates/cor-dominant.visual-dom.txt"),
    ),
    (
        "cor-dominant.audio-dom.txt",
        include_str!("../templates/cor-dominant.audio-dom.txt"),
    ),
    (
        "cor-dominant.av-dom.txt",
        include_str!("../templates/cor-dominant.av-dom.txt"),
    ),
    (
        "rls-check.check.txt",
        include_str!("../templates/rls-check.check.txt"),
    ),
    (REPAIR_FILE, include_str!("../templates/repair.txt")),
];

const VERDICT_SCHEMA: &str = "Reply with exactly one JSON object in a ```json fenced block:
{\"difficulty\": \"low\" | \"moderate\" | \"high\", \"dominant\": [modalities], \"auxiliary\": [modalities], \"reason\": \"...\"}
Modalities are \"audio\" and \"visual\". The difficulty must follow the rules above.";

const CANDIDATES_SCHEMA: &str = "Reply with exactly one JSON object in a ```json fenced block:
{\"candidates\": [\"object phrase\", ...], \"reason\": \"...\"}";

const OBJECT_SCHEMA: &str = "Reply with exactly one JSON object in a ```json fenced block:
{\"object\": \"object phrase\", \"reason\": \"...\"}";

const CHECK_SCHEMA: &str = "Reply with exactly one JSON object in a ```json fenced block:
{\"match\": true | false, \"revised_object\": \"object phrase, only when match is false\", \"reason\": \"...\"}";

fn schema_for(role: &str) -> Option<&'static str> {
    match role {
        ANALYST | FINAL => Some(VERDICT_SCHEMA),
        AUDIO_AUX | VISUAL_AUX => Some(CANDIDATES_SCHEMA),
        VISUAL_DOM | AUDIO_DOM | AV_DOM => Some(OBJECT_SCHEMA),
        CHECK => Some(CHECK_SCHEMA),
        _ => None,
    }
}

/// The three clauses of the difficulty rule, as given to the analysts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct DifficultyRules {
    pub low: String,
    pub moderate: String,
    pub high: String,
}

impl Default for DifficultyRules {
    fn default() -> Self {
        Self {
            low: "Low: exactly one modality (audio or visual) is dominant and the other is not needed.".into(),
            moderate: "Moderate: one modality is dominant and the other is auxiliary, i.e. it helps but is not decisive.".into(),
            high: "High: audio and visual are both dominant; neither alone identifies the object.".into(),
        }
    }
}

impl DifficultyRules {
    pub fn clauses(&self) -> [&str; 3] {
        [&self.low, &self.moderate, &self.high]
    }

    pub fn block(&self) -> String {
        self.clauses()
            .iter()
            .map(|c| format!("- {c}"))
            .collect::<Vec<_>>()
            .join("\n")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PromptError {
    #[error("template {key} has no binding for `{{{{{name}}}}}`")]
    MissingBinding { key: String, name: String },
    #[error("no template registered for {0}")]
    UnknownKey(String),
    #[error("template {key} uses `{{{{{name}}}}}`, which is never bound for it")]
    UnsupportedPlaceholder { key: String, name: String },
    #[error("cannot read template {path}: {message}")]
    Io { path: String, message: String },
    #[error("template file name {0:?} is not <phase>.<role>.txt")]
    BadFileName(String),
}

fn key_name(phase: Phase, role: &str) -> String {
    format!("({phase}, {role})")
}

fn file_name(phase: Phase, role: &str) -> String {
    format!("{}.{role}.txt", phase.label().to_ascii_lowercase())
}

fn parse_file_name(name: &str) -> Option<(Phase, String)> {
    let stem = name.strip_suffix(".txt")?;
    let (phase, role) = stem.split_once('.')?;
    let phase = Phase::ALL
        .into_iter()
        .find(|p| p.label().eq_ignore_ascii_case(phase))?;
    (!role.is_empty()).then(|| (phase, role.to_string()))
}

/// Named values substituted into a template.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Bindings(BTreeMap<String, String>);

impl Bindings {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(mut self, name: &str, value: impl Into<String>) -> Self {
        self.0.insert(name.to_string(), value.into());
        self
    }

    pub fn get(&self, name: &str) -> Option<&str> {
        self.0.get(name).map(String::as_str)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    pub phase: Option<Phase>,
    pub role: String,
    pub body: String,
}

impl PromptTemplate {
    /// Placeholder names in order of first appearance.
    pub fn placeholders(&self) -> Vec<String> {
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        for piece in scan(&self.body) {
            if let Piece::Slot(name) = piece {
                if seen.insert(name) {
                    out.push(name.to_string());
                }
            }
        }
        out
    }

    fn key(&self) -> String {
        match self.phase {
            Some(p) => key_name(p, &self.role),
            None => "repair".into(),
        }
    }

    fn substitute(&self, lookup: impl Fn(&str) -> Option<String>) -> Result<String, PromptError> {
        let mut out = String::with_capacity(self.body.len());
        for piece in scan(&self.body) {
            match piece {
                Piece::Text(t) => out.push_str(t),
                Piece::Slot(name) => match lookup(name) {
                    Some(v) => out.push_str(&v),
                    None => {
                        return Err(PromptError::MissingBinding {
                            key: self.key(),
                            name: name.to_string(),
                        })
                    }
                },
            }
        }
        Ok(out)
    }
}

enum Piece<'a> {
    Text(&'a str),
    Slot(&'a str),
}

fn is_name(s: &str) -> bool {
    !s.is_empty() && s.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'_')
}

fn scan(body: &str) -> Vec<Piece<'_>> {
    let mut pieces = Vec::new();
    let mut rest = body;
    while let Some(open) = rest.find("{{") {
        let after = &rest[open + 2..];
        match after.find("}}") {
            Some(close) if is_name(after[..close].trim()) => {
                pieces.push(Piece::Text(&rest[..open]));
                pieces.push(Piece::Slot(after[..close].trim()));
                rest = &after[close + 2..];
            }
            _ => {
                pieces.push(Piece::Text(&rest[..open + 2]));
                rest = after;
            }
        }
    }
    pieces.push(Piece::Text(rest));
    pieces
}

/// Immutable template registry.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptRegistry {
    templates: BTreeMap<(Phase, String), PromptTemplate>,
    repair: PromptTemplate,
    rules: DifficultyRules,
}

impl PromptRegistry {
    pub fn builtin(rules: DifficultyRules) -> Self {
        let mut templates = BTreeMap::new();
        let mut repair = None;
        for (name, body) in BUILTIN {
            if name == REPAIR_FILE {
                repair = Some(PromptTemplate {
                    phase: None,
                    role: "repair".into(),
                    body: body.to_string(),
                });
            } else {
                let (phase, role) = parse_file_name(name).expect("built-in names are well formed");
                templates.insert(
                    (phase, role.clone()),
                    PromptTemplate {
                        phase: Some(phase),
                        role,
                        body: body.to_string(),
                    },
                );
            }
        }
        Self {
            templates,
            repair: repair.expect("repair template is built in"),
            rules,
        }
    }

    /// Built-in templates with any files from `dir` layered on top, then
    /// validated.
    pub fn load(dir: Option<&Path>, rules: DifficultyRules) -> Result<Self, PromptError> {
        let mut reg = Self::builtin(rules);
        if let Some(dir) = dir {
            let io = |e: std::io::Error| PromptError::Io {
                path: dir.display().to_string(),
                message: e.to_string(),
            };
            let mut names: Vec<_> = std::fs::read_dir(dir)
                .map_err(io)?
                .filter_map(|e| e.ok())
                .map(|e| e.file_name().to_string_lossy().into_owned())
                .filter(|n| n.ends_with(".txt"))
                .collect();
            names.sort();
            for name in names {
                let body = std::fs::read_to_string(dir.join(&name)).map_err(io)?;
                if name == REPAIR_FILE {
                    reg.repair.body = body;
                    continue;
                }
                let (phase, role) =
                    parse_file_name(&name).ok_or_else(|| PromptError::BadFileName(name.clone()))?;
                reg.templates.insert(
                    (phase, role.clone()),
                    PromptTemplate {
                        phase: Some(phase),
                        role,
                        body,
                    },
                );
            }
        }
        reg.validate()?;
        Ok(reg)
    }

    /// Checks that every required key is registered and that each template
    /// only uses placeholders the pipeline binds for it.
    pub fn validate(&self) -> Result<(), PromptError> {
        for (phase, role, allowed) in REQUIRED_KEYS {
            let t = self.template(phase, role)?;
            check_placeholders(t, allowed)?;
        }
        check_placeholders(&self.repair, REPAIR_BINDINGS)
    }

    pub fn rules(&self) -> &DifficultyRules {
        &self.rules
    }

    pub fn template(&self, phase: Phase, role: &str) -> Result<&PromptTemplate, PromptError> {
        self.templates
            .get(&(phase, role.to_string()))
            .ok_or_else(|| PromptError::UnknownKey(key_name(phase, role)))
    }

    pub fn keys(&self) -> impl Iterator<Item = (Phase, &str)> {
        self.templates.keys().map(|(p, r)| (*p, r.as_str()))
    }

    /// Renders the template for `(phase, role)` and appends the role's
    /// output-format block.
    pub fn render(&self, phase: Phase, role: &str, bindings: &Bindings) -> Result<String, PromptError> {
        let template = self.template(phase, role)?;
        let rule = self.rules.block();
        let mut text = template.substitute(|name| match bindings.get(name) {
            Some(v) => Some(v.to_string()),
            None if name == "rule" => Some(rule.clone()),
            None => None,
        })?;
        if let Some(schema) = schema_for(role) {
            text = format!("{}\n\n{schema}\n", text.trim_end());
        }
        Ok(text)
    }

    /// Follow-up prompt after an unusable response.
    pub fn repair(&self, ctx: &RepairContext<'_>) -> String {
        let bindings = Bindings::new()
            .set("prompt", ctx.original_prompt)
            .set("output", ctx.bad_output)
            .set("error", ctx.error.to_string());
        self.repair
            .substitute(|n| bindings.get(n).map(str::to_string))
            .unwrap_or_else(|_| ctx.original_prompt.to_string())
    }
}

fn check_placeholders(t: &PromptTemplate, allowed: &[&str]) -> Result<(), PromptError> {
    match t
        .placeholders()
        .into_iter()
        .find(|p| !allowed.contains(&p.as_str()))
    {
        Some(name) => Err(PromptError::UnsupportedPlaceholder { key: t.key(), name }),
        None => Ok(()),
    }
}

/// File name a `(phase, role)` template is loaded from.
pub fn template_file(phase: Phase, role: &str) -> String {
    file_name(phase, role)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::ParseError;

    fn reg() -> PromptRegistry {
        PromptRegistry::builtin(DifficultyRules::default())
    }

    #[test]
    fn builtin_registry_is_complete() {
        reg().validate().unwrap();
        assert_eq!(reg().keys().count(), REQUIRED_KEYS.len());
    }

    #[test]
    fn independent_prompt_embeds_expression_and_rule() {
        let r = reg();
        let b = Bindings::new().set("expression", "the dog barking");
        let text = r.render(Phase::CmrIndependent, ANALYST, &b).unwrap();
        assert!(text.contains("the dog barking"));
        for clause in r.rules().clauses() {
            assert!(text.contains(clause));
        }
        assert!(text.contains("\"difficulty\""));
        assert!(!text.contains("{{"));
    }

    #[test]
    fn missing_binding() {
        let b = Bindings::new().set("expression", "x");
        let err = reg().render(Phase::CmrPeer, ANALYST, &b).unwrap_err();
        assert_eq!(
            err,
            PromptError::MissingBinding {
                key: "(CMR-peer, analyst)".into(),
                name: "peers".into()
            }
        );
    }

    #[test]
    fn unknown_key() {
        let err = reg()
            .render(Phase::RlsSegment, "segment", &Bindings::new())
            .unwrap_err();
        assert!(matches!(err, PromptError::UnknownKey(_)));
    }

    #[test]
    fn rendering_is_deterministic() {
        let b = Bindings::new().set("expression", "e").set("auxiliary", "");
        let r = reg();
        assert_eq!(
            r.render(Phase::CorDominant, AV_DOM, &b).unwrap(),
            r.render(Phase::CorDominant, AV_DOM, &b).unwrap()
        );
    }

    #[test]
    fn custom_rule_clauses_appear_verbatim() {
        let rules = DifficultyRules {
            low: "L-clause".into(),
            moderate: "M-clause".into(),
            high: "H-clause".into(),
        };
        let r = PromptRegistry::builtin(rules);
        let b = Bindings::new().set("expression", "e").set("discussion", "d");
        let text = r.render(Phase::CmrFinal, FINAL, &b).unwrap();
        assert!(text.contains("L-clause") && text.contains("M-clause") && text.contains("H-clause"));
    }

    #[test]
    fn override_directory() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(
            dir.path().join(template_file(Phase::CorAuxiliary, AUDIO_AUX)),
            "HEAR {{expression}}",
        )
        .unwrap();
        let r = PromptRegistry::load(Some(dir.path()), DifficultyRules::default()).unwrap();
        let text = r
            .render(
                Phase::CorAuxiliary,
                AUDIO_AUX,
                &Bindings::new().set("expression", "x"),
            )
            .unwrap();
        assert!(text.starts_with("HEAR x"));

        std::fs::write(dir.path().join("cmr-final.final.txt"), "{{bogus}}").unwrap();
        let err = PromptRegistry::load(Some(dir.path()), DifficultyRules::default()).unwrap_err();
        assert!(matches!(err, PromptError::UnsupportedPlaceholder { .. }));
    }

    #[test]
    fn repair_carries_bad_output() {
        let r = reg();
        let e = ParseError::MissingField("reason");
        let text = r.repair(&RepairContext {
            original_prompt: "ORIGINAL",
            bad_output: "BAD",
            error: &e,
        });
        assert!(text.contains("ORIGINAL") && text.contains("BAD") && text.contains("reason"));
    }

    #[test]
    fn literal_braces_survive() {
        let t = PromptTemplate {
            phase: None,
            role: "x".into(),
            body: "json {{ not a slot }} {\"a\": 1} {{name}}".into(),
        };
        assert_eq!(t.placeholders(), ["name"]);
    }
}
