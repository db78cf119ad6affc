//! Structured agent output: extraction of the fenced JSON object from a raw
//! response and strict validation into domain types.
//!
//! Agents answer with free text that must contain one JSON object, usually
//! inside a ```` ```json ```` fence. Reasoning models may prefix a
//! `<think>…</think>` section, which is discarded before extraction.

use serde_json::{json, Map, Value};

use crate::model::{AnalysisVerdict, CandidateList, Difficulty, Modality, ModalityRole, RoleError};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ParseError {
    #[error("no structured object found in response")]
    NoStructuredObject,
    #[error("malformed structured object: {0}")]
    Malformed(String),
    #[error("missing field `{0}`")]
    MissingField(&'static str),
    #[error("unknown {field} token {token:?}")]
    UnknownToken { field: &'static str, token: String },
    #[error("invalid modality roles: {0}")]
    InvalidRoles(#[from] RoleError),
    #[error("declared difficulty {declared} contradicts rule-derived {derived}")]
    RuleInconsistency {
        declared: Difficulty,
        derived: Difficulty,
    },
    #[error("revised object {0:?} repeats the checked prompt")]
    NoProgress(String),
}

/// Locates and parses the JSON object carried by an agent response.
pub fn extract_object(raw: &str) -> Result<Map<String, Value>, ParseError> {
    let text = strip_think(raw);
    let mut last_err = None;
    for candidate in fenced_blocks(&text).into_iter().chain(brace_spans(&text)) {
        match serde_json::from_str::<Value>(candidate) {
            Ok(Value::Object(map)) => return Ok(map),
            Ok(_) => last_err = Some(ParseError::Malformed("not a JSON object".into())),
            Err(e) => last_err = Some(ParseError::Malformed(e.to_string())),
        }
    }
    Err(last_err.unwrap_or(ParseError::NoStructuredObject))
}

fn strip_think(raw: &str) -> String {
    let mut out = String::with_capacity(raw.len());
    let mut rest = raw;
    while let Some(start) = rest.find("<think>") {
        out.push_str(&rest[..start]);
        match rest[start..].find("</think>") {
            Some(end) => rest = &rest[start + end + "</think>".len()..],
            None => {
                rest = "";
                break;
            }
        }
    }
    out.push_str(rest);
    out
}

fn fenced_blocks(text: &str) -> Vec<&str> {
    let mut blocks = Vec::new();
    let mut rest = text;
    while let Some(open) = rest.find("```") {
        let after = &rest[open + 3..];
        // skip the info string (e.g. `json`) up to the end of the line
        let body_start = after.find('\n').map(|i| i + 1).unwrap_or(after.len());
        let body = &after[body_start..];
        match body.find("```") {
            Some(close) => {
                blocks.push(body[..close].trim());
                rest = &body[close + 3..];
            }
            None => break,
        }
    }
    blocks
}

/// Top-level `{…}` spans, string-literal aware.
fn brace_spans(text: &str) -> Vec<&str> {
    let bytes = text.as_bytes();
    let mut spans = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] != b'{' {
            i += 1;
            continue;
        }
        let start = i;
        let mut depth = 0usize;
        let mut in_str = false;
        let mut escaped = false;
        let mut end = None;
        for (j, &b) in bytes.iter().enumerate().skip(start) {
            if in_str {
                match (escaped, b) {
                    (true, _) => escaped = false,
                    (false, b'\\') => escaped = true,
                    (false, b'"') => in_str = false,
                    _ => {}
                }
                continue;
            }
            match b {
                b'"' => in_str = true,
                b'{' => depth += 1,
                b'}' => {
                    depth -= 1;
                    if depth == 0 {
                        end = Some(j);
                        break;
                    }
                }
                _ => {}
            }
        }
        match end {
            Some(e) => {
                spans.push(&text[start..=e]);
                i = e + 1;
            }
            None => break,
        }
    }
    spans
}

pub(crate) fn required<'a>(
    map: &'a Map<String, Value>,
    field: &'static str,
) -> Result<&'a Value, ParseError> {
    match map.get(field) {
        None | Some(Value::Null) => Err(ParseError::MissingField(field)),
        Some(v) => Ok(v),
    }
}

pub(crate) fn required_text(map: &Map<String, Value>, field: &'static str) -> Result<String, ParseError> {
    match required(map, field)? {
        Value::String(s) if !s.trim().is_empty() => Ok(s.trim().to_string()),
        Value::String(_) => Err(ParseError::MissingField(field)),
        other => Err(ParseError::Malformed(format!(
            "`{field}` must be text, got {other}"
        ))),
    }
}

pub(crate) fn optional_text(map: &Map<String, Value>, field: &str) -> String {
    match map.get(field) {
        Some(Value::String(s)) => s.trim().to_string(),
        _ => String::new(),
    }
}

fn modality_set(value: &Value, field: &'static str) -> Result<Vec<Modality>, ParseError> {
    let tokens: Vec<String> = match value {
        Value::Array(items) => items
            .iter()
            .map(|v| match v {
                Value::String(s) => Ok(s.clone()),
                other => Err(ParseError::Malformed(format!(
                    "`{field}` entries must be text, got {other}"
                ))),
            })
            .collect::<Result<_, _>>()?,
        Value::String(s) => s
            .split([',', '+', '/', '&'])
            .flat_map(|part| part.split(" and "))
            .map(str::to_string)
            .collect(),
        other => {
            return Err(ParseError::Malformed(format!(
                "`{field}` must be a list, got {other}"
            )))
        }
    };
    let mut out = Vec::new();
    for token in tokens {
        let t = token.trim();
        if t.is_empty() || t.eq_ignore_ascii_case("none") {
            continue;
        }
        let m = t.parse::<Modality>().map_err(|_| ParseError::UnknownToken {
            field,
            token: t.to_string(),
        })?;
        out.push(m);
    }
    Ok(out)
}

/// Parses an analysis verdict and re-derives its difficulty from the
/// declared roles; a declared difficulty that disagrees is rejected.
pub fn parse_verdict(raw: &str, author: &str) -> Result<AnalysisVerdict, ParseError> {
    let map = extract_object(raw)?;
    let difficulty = match required(&map, "difficulty")? {
        Value::String(s) => s.parse::<Difficulty>()?,
        other => {
            return Err(ParseError::UnknownToken {
                field: "difficulty",
                token: other.to_string(),
            })
        }
    };
    let dominant = modality_set(required(&map, "dominant")?, "dominant")?;
    let auxiliary = modality_set(required(&map, "auxiliary")?, "auxiliary")?;
    let reason = required_text(&map, "reason")?;
    let roles = ModalityRole::new(dominant, auxiliary)?;
    AnalysisVerdict::declared(difficulty, roles, reason, author)
}

/// Canonical structured rendering of a verdict, the inverse of
/// [`parse_verdict`].
pub fn serialize_verdict(verdict: &AnalysisVerdict) -> String {
    fenced(&verdict_value(verdict))
}

pub(crate) fn verdict_value(verdict: &AnalysisVerdict) -> Value {
    let names =
        |set: &std::collections::BTreeSet<Modality>| set.iter().map(|m| m.as_str()).collect::<Vec<_>>();
    json!({
        "difficulty": verdict.difficulty().as_str(),
        "dominant": names(verdict.roles().dominant()),
        "auxiliary": names(verdict.roles().auxiliary()),
        "reason": verdict.reason(),
    })
}

pub(crate) fn fenced(value: &Value) -> String {
    format!("```json\n{value}\n```")
}

/// Parses an auxiliary agent's candidate list. An empty list is legal.
pub fn parse_candidates(raw: &str, source: Modality) -> Result<CandidateList, ParseError> {
    let map = extract_object(raw)?;
    let items = match required(&map, "candidates")? {
        Value::Array(items) => items,
        other => {
            return Err(ParseError::Malformed(format!(
                "`candidates` must be a list, got {other}"
            )))
        }
    };
    let candidates = items
        .iter()
        .map(|v| match v {
            Value::String(s) => Ok(s.clone()),
            other => Err(ParseError::Malformed(format!(
                "candidate must be text, got {other}"
            ))),
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(CandidateList::new(
        candidates,
        optional_text(&map, "reason"),
        source,
    ))
}

pub fn serialize_candidates(list: &CandidateList) -> String {
    fenced(&json!({ "candidates": list.candidates(), "reason": list.reason() }))
}

/// A dominant agent's answer: the referred object and why.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ObjectAnswer {
    pub object: String,
    pub reason: String,
}

pub fn parse_object(raw: &str) -> Result<ObjectAnswer, ParseError> {
    let map = extract_object(raw)?;
    Ok(ObjectAnswer {
        object: required_text(&map, "object")?,
        reason: optional_text(&map, "reason"),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn well_formed_verdict() {
        let raw = "Sure.\n```json\n{\"difficulty\":\"low\",\"dominant\":[\"visual\"],\"auxiliary\":[],\"reason\":\"on screen\"}\n```";
        let v = parse_verdict(raw, "mca-1").unwrap();
        assert_eq!(v.difficulty(), Difficulty::Low);
        assert_eq!(v.roles(), &ModalityRole::single(Modality::Visual));
        assert_eq!(v.author(), "mca-1");
    }

    #[test]
    fn rule_inconsistency_is_rejected() {
        let raw = r#"{"difficulty":"low","dominant":["audio","visual"],"auxiliary":[],"reason":"x"}"#;
        assert_eq!(
            parse_verdict(raw, "a"),
            Err(ParseError::RuleInconsistency {
                declared: Difficulty::Low,
                derived: Difficulty::High
            })
        );
    }

    #[test]
    fn missing_reason() {
        let raw = r#"{"difficulty":"low","dominant":["audio"],"auxiliary":[]}"#;
        assert_eq!(parse_verdict(raw, "a"), Err(ParseError::MissingField("reason")));
        let blank = r#"{"difficulty":"low","dominant":["audio"],"auxiliary":[],"reason":"  "}"#;
        assert_eq!(parse_verdict(blank, "a"), Err(ParseError::MissingField("reason")));
    }

    #[test]
    fn unknown_tokens() {
        let raw = r#"{"difficulty":"extreme","dominant":["audio"],"auxiliary":[],"reason":"x"}"#;
        assert!(matches!(
            parse_verdict(raw, "a"),
            Err(ParseError::UnknownToken {
                field: "difficulty",
                ..
            })
        ));
        let raw = r#"{"difficulty":"low","dominant":["text"],"auxiliary":[],"reason":"x"}"#;
        assert!(matches!(
            parse_verdict(raw, "a"),
            Err(ParseError::UnknownToken {
                field: "dominant",
                ..
            })
        ));
    }

    #[test]
    fn empty_dominant_is_invalid_roles() {
        let raw = r#"{"difficulty":"low","dominant":[],"auxiliary":["audio"],"reason":"x"}"#;
        assert_eq!(
            parse_verdict(raw, "a"),
            Err(ParseError::InvalidRoles(RoleError::NoDominant))
        );
    }

    #[test]
    fn lenient_string_modalities_and_think_prefix() {
        let raw = "<think>{\"difficulty\":\"bogus\"}</think>\n{\"difficulty\":\"High\",\"dominant\":\"audio + visual\",\"auxiliary\":\"none\",\"reason\":\"both\"}";
        let v = parse_verdict(raw, "a").unwrap();
        assert_eq!(v.difficulty(), Difficulty::High);
    }

    #[test]
    fn braces_inside_strings_do_not_confuse_extraction() {
        let raw = r#"answer: {"object":"a {weird} thing","reason":"quote \" and }"} trailing"#;
        let a = parse_object(raw).unwrap();
        assert_eq!(a.object, "a {weird} thing");
    }

    #[test]
    fn candidates() {
        let raw = r#"```json
{"candidates":["guitar","piano"],"reason":"strumming and chords"}
```"#;
        let c = parse_candidates(raw, Modality::Audio).unwrap();
        assert_eq!(c.candidates(), ["guitar", "piano"]);
        assert_eq!(c.source_modality(), Modality::Audio);

        let dup = r#"{"candidates":["Dog","dog"],"reason":""}"#;
        assert_eq!(
            parse_candidates(dup, Modality::Visual).unwrap().candidates(),
            ["Dog"]
        );

        let empty = r#"{"candidates":[],"reason":"silence"}"#;
        assert!(parse_candidates(empty, Modality::Audio)
            .unwrap()
            .candidates()
            .is_empty());

        assert_eq!(
            parse_candidates("I hear a guitar and maybe a piano.", Modality::Audio),
            Err(ParseError::NoStructuredObject)
        );
    }

    /// Lowercase-key first-occurrence scan, written independently of
    /// `CandidateList::new`.
    fn dedup_oracle(items: &[String]) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for item in items {
            let t = item.trim();
            if t.is_empty() {
                continue;
            }
            if !out.iter().any(|o| o.to_lowercase() == t.to_lowercase()) {
                out.push(t.to_string());
            }
        }
        out
    }

    fn any_verdict() -> impl Strategy<Value = AnalysisVerdict> {
        (0usize..5, "[a-zA-Z0-9 ,.\"{}]{1,40}", "[a-z0-9-]{1,8}")
            .prop_filter_map("reason must be non-blank", |(i, reason, author)| {
                AnalysisVerdict::new(ModalityRole::all()[i].clone(), reason, author).ok()
            })
    }

    proptest! {
        #[test]
        fn verdict_round_trip(v in any_verdict()) {
            let text = serialize_verdict(&v);
            prop_assert_eq!(parse_verdict(&text, v.author()).unwrap(), v);
        }

        #[test]
        fn candidate_dedup_matches_oracle(items in proptest::collection::vec("[a-cA-C ]{0,3}", 0..12)) {
            let raw = serde_json::json!({"candidates": items, "reason": "r"}).to_string();
            let parsed = parse_candidates(&raw, Modality::Visual).unwrap();
            prop_assert_eq!(parsed.candidates().to_vec(), dedup_oracle(&items));
        }
    }
}
