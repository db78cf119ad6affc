//! Deterministic scripted backends for tests, fixtures and replay.
//!
//! A [`ScriptedAgent`] answers from an ordered rule list: the first rule
//! whose conditions match the request (substring tests on the prompt, an
//! optional exact input digest, an optional attempt index) supplies the
//! response for that attempt. Identical requests and attempt indices always
//! produce identical responses. Every call is logged for inspection.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{AgentBackend, AgentRequest, BackendError, SegmentBackend, SegmentRequest};
use crate::mask::RleSequence;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FailKind {
    Transport,
    Timeout,
}

/// A canned response: response text, or a simulated failure.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScriptResponse {
    Text(String),
    Fail { fail: FailKind },
}

impl ScriptResponse {
    fn produce(&self) -> Result<String, BackendError> {
        match self {
            ScriptResponse::Text(t) => Ok(t.clone()),
            ScriptResponse::Fail {
                fail: FailKind::Transport,
            } => Err(BackendError::Transport("scripted transport failure".into())),
            ScriptResponse::Fail {
                fail: FailKind::Timeout,
            } => Err(BackendError::Timeout(Duration::ZERO)),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptRule {
    /// Every listed substring must occur in the prompt.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub contains: Vec<String>,
    /// No listed substring may occur in the prompt.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub excludes: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub digest: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attempt: Option<u32>,
    /// Response per attempt index; the last entry repeats.
    pub responses: Vec<ScriptResponse>,
}

impl ScriptRule {
    pub fn when_contains<I, S>(needles: I, responses: Vec<ScriptResponse>) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            contains: needles.into_iter().map(Into::into).collect(),
            responses,
            ..Default::default()
        }
    }

    fn matches(&self, request: &AgentRequest, digest: &str, attempt: u32) -> bool {
        self.contains.iter().all(|n| request.prompt.contains(n.as_str()))
            && !self.excludes.iter().any(|n| request.prompt.contains(n.as_str()))
            && self.digest.as_deref().is_none_or(|d| d == digest)
            && self.attempt.is_none_or(|a| a == attempt)
    }

    fn response(&self, attempt: u32) -> Option<&ScriptResponse> {
        self.responses
            .get(attempt as usize)
            .or_else(|| self.responses.last())
    }
}

/// Serializable behaviour of one scripted agent role.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptedBehavior {
    #[serde(default)]
    pub rules: Vec<ScriptRule>,
    /// Used when no rule matches; without it the call fails.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fallback: Option<ScriptResponse>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoggedCall {
    pub request: AgentRequest,
    pub attempt: u32,
    pub digest: String,
}

pub struct ScriptedAgent {
    role: String,
    behavior: ScriptedBehavior,
    log: Mutex<Vec<LoggedCall>>,
}

impl ScriptedAgent {
    pub fn new(role: impl Into<String>, behavior: ScriptedBehavior) -> Self {
        Self {
            role: role.into(),
            behavior,
            log: Mutex::new(Vec::new()),
        }
    }

    /// Answers every request with `text`.
    pub fn constant(role: impl Into<String>, text: impl Into<String>) -> Self {
        Self::new(
            role,
            ScriptedBehavior {
                rules: Vec::new(),
                fallback: Some(ScriptResponse::Text(text.into())),
            },
        )
    }

    /// Answers attempt `i` with the `i`-th text (the last one repeats).
    pub fn sequence<I, S>(role: impl Into<String>, texts: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self::new(
            role,
            ScriptedBehavior {
                rules: vec![ScriptRule {
                    responses: texts
                        .into_iter()
                        .map(|t| ScriptResponse::Text(t.into()))
                        .collect(),
                    ..Default::default()
                }],
                fallback: None,
            },
        )
    }

    pub fn role(&self) -> &str {
        &self.role
    }

    pub fn calls(&self) -> Vec<LoggedCall> {
        self.log.lock().expect("log lock").clone()
    }

    pub fn call_count(&self) -> usize {
        self.log.lock().expect("log lock").len()
    }
}

impl AgentBackend for ScriptedAgent {
    fn complete(&self, request: &AgentRequest, attempt: u32) -> Result<String, BackendError> {
        let digest = request.digest();
        self.log.lock().expect("log lock").push(LoggedCall {
            request: request.clone(),
            attempt,
            digest: digest.clone(),
        });
        let response = self
            .behavior
            .rules
            .iter()
            .find(|r| r.matches(request, &digest, attempt))
            .and_then(|r| r.response(attempt))
            .or(self.behavior.fallback.as_ref());
        match response {
            Some(r) => r.produce(),
            None => Err(BackendError::Transport(format!(
                "no scripted response for {} (digest {digest})",
                self.role
            ))),
        }
    }
}

type AgentFn = dyn Fn(&AgentRequest, u32) -> Result<String, BackendError> + Send + Sync;

/// An agent backed by a closure, for behaviour that depends on request
/// content in ways a rule list cannot express.
pub struct FnAgent {
    f: Box<AgentFn>,
    log: Mutex<Vec<LoggedCall>>,
}

impl FnAgent {
    pub fn new(
        f: impl Fn(&AgentRequest, u32) -> Result<String, BackendError> + Send + Sync + 'static,
    ) -> Self {
        Self {
            f: Box::new(f),
            log: Mutex::new(Vec::new()),
        }
    }

    pub fn calls(&self) -> Vec<LoggedCall> {
        self.log.lock().expect("log lock").clone()
    }
}

impl AgentBackend for FnAgent {
    fn complete(&self, request: &AgentRequest, attempt: u32) -> Result<String, BackendError> {
        self.log.lock().expect("log lock").push(LoggedCall {
            request: request.clone(),
            attempt,
            digest: request.digest(),
        });
        (self.f)(request, attempt)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentRule {
    /// Object prompt, compared case-insensitively after trimming.
    pub prompt: String,
    /// Restricts the rule to one clip.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clip: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub masks: Option<RleSequence>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fail: Option<FailKind>,
}

/// Serializable behaviour of the scripted segmenter.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentScript {
    #[serde(default)]
    pub rules: Vec<SegmentRule>,
    /// Unmatched prompts produce all-zero masks when set, else fail.
    #[serde(default = "yes")]
    pub empty_when_unmatched: bool,
}

fn yes() -> bool {
    true
}

impl Default for SegmentScript {
    fn default() -> Self {
        Self {
            rules: Vec::new(),
            empty_when_unmatched: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoggedSegment {
    pub request: SegmentRequest,
    pub attempt: u32,
}

pub struct ScriptedSegmenter {
    script: SegmentScript,
    log: Mutex<Vec<LoggedSegment>>,
}

impl Default for ScriptedSegmenter {
    fn default() -> Self {
        Self::new()
    }
}

impl ScriptedSegmenter {
    pub fn new() -> Self {
        Self::from_script(SegmentScript::default())
    }

    pub fn from_script(script: SegmentScript) -> Self {
        Self {
            script,
            log: Mutex::new(Vec::new()),
        }
    }

    pub fn insert(&mut self, prompt: &str, clip: Option<&str>, masks: RleSequence) {
        self.script.rules.push(SegmentRule {
            prompt: prompt.to_string(),
            clip: clip.map(str::to_string),
            masks: Some(masks),
            fail: None,
        });
    }

    pub fn calls(&self) -> Vec<LoggedSegment> {
        self.log.lock().expect("log lock").clone()
    }
}

impl SegmentBackend for ScriptedSegmenter {
    fn segment(&self, request: &SegmentRequest, attempt: u32) -> Result<RleSequence, BackendError> {
        self.log.lock().expect("log lock").push(LoggedSegment {
            request: request.clone(),
            attempt,
        });
        let wanted = request.prompt.trim().to_lowercase();
        let rule = self.script.rules.iter().find(|r| {
            r.prompt.trim().to_lowercase() == wanted && r.clip.as_deref().is_none_or(|c| c == request.clip_id)
        });
        match rule {
            Some(SegmentRule { fail: Some(kind), .. }) => ScriptResponse::Fail { fail: kind.clone() }
                .produce()
                .map(|_| unreachable!("failures never produce text")),
            Some(SegmentRule { masks: Some(m), .. }) => Ok(m.clone()),
            _ if self.script.empty_when_unmatched => {
                let px = (request.height * request.width) as u32;
                Ok(RleSequence {
                    height: request.height,
                    width: request.width,
                    frames: vec![vec![px]; request.frames.len()],
                })
            }
            _ => Err(BackendError::Transport(format!(
                "no scripted masks for {:?} in {}",
                request.prompt, request.clip_id
            ))),
        }
    }
}

type SegmentFn = dyn Fn(&SegmentRequest, u32) -> Result<RleSequence, BackendError> + Send + Sync;

pub struct FnSegmenter {
    f: Box<SegmentFn>,
}

impl FnSegmenter {
    pub fn new(
        f: impl Fn(&SegmentRequest, u32) -> Result<RleSequence, BackendError> + Send + Sync + 'static,
    ) -> Self {
        Self { f: Box::new(f) }
    }
}

impl SegmentBackend for FnSegmenter {
    fn segment(&self, request: &SegmentRequest, attempt: u32) -> Result<RleSequence, BackendError> {
        (self.f)(request, attempt)
    }
}

/// The mock-script file: scripted behaviour for every agent role by name,
/// plus the segmenter.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MockScript {
    #[serde(default)]
    pub agents: BTreeMap<String, ScriptedBehavior>,
    #[serde(default)]
    pub segment: SegmentScript,
}

#[derive(Debug, thiserror::Error)]
pub enum MockScriptError {
    #[error("cannot read mock script {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid mock script {path}: {source}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },
}

impl MockScript {
    pub fn load(path: &Path) -> Result<Self, MockScriptError> {
        let text = std::fs::read_to_string(path).map_err(|source| MockScriptError::Io {
            path: path.display().to_string(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|source| MockScriptError::Json {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(std::io::Error::other)?;
        std::fs::write(path, text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn req(prompt: &str) -> AgentRequest {
        AgentRequest {
            role: "r".into(),
            model: String::new(),
            prompt: prompt.into(),
            media: vec![],
            params: Default::default(),
        }
    }

    #[test]
    fn first_matching_rule_wins_per_attempt() {
        let behavior = ScriptedBehavior {
            rules: vec![
                ScriptRule {
                    contains: vec!["dog".into()],
                    excludes: vec!["cat".into()],
                    responses: vec![
                        ScriptResponse::Fail {
                            fail: FailKind::Transport,
                        },
                        ScriptResponse::Text("second".into()),
                    ],
                    ..Default::default()
                },
                ScriptRule::when_contains(["dog"], vec![ScriptResponse::Text("cat rule".into())]),
            ],
            fallback: Some(ScriptResponse::Text("fallback".into())),
        };
        let agent = ScriptedAgent::new("r", behavior);
        assert!(agent.complete(&req("a dog"), 0).is_err());
        assert_eq!(agent.complete(&req("a dog"), 1).unwrap(), "second");
        assert_eq!(agent.complete(&req("a dog"), 7).unwrap(), "second");
        assert_eq!(agent.complete(&req("dog and cat"), 0).unwrap(), "cat rule");
        assert_eq!(agent.complete(&req("bird"), 0).unwrap(), "fallback");
        assert_eq!(agent.call_count(), 5);
    }

    #[test]
    fn digest_rules_and_missing_script() {
        let r = req("exact");
        let agent = ScriptedAgent::new(
            "r",
            ScriptedBehavior {
                rules: vec![ScriptRule {
                    digest: Some(r.digest()),
                    responses: vec![ScriptResponse::Text("hit".into())],
                    ..Default::default()
                }],
                fallback: None,
            },
        );
        assert_eq!(agent.complete(&r, 0).unwrap(), "hit");
        assert!(matches!(
            agent.complete(&req("other"), 0),
            Err(BackendError::Transport(_))
        ));
    }

    #[test]
    fn mock_script_json_shape() {
        let text = r#"{
            "agents": {"mca-1": {"rules": [{"contains": ["guitar"], "responses": ["x", {"fail": "timeout"}]}]}},
            "segment": {"rules": [{"prompt": "Guitar", "clip": "c1", "masks": {"height": 1, "width": 2, "frames": [[1, 1]]}}]}
        }"#;
        let script: MockScript = serde_json::from_str(text).unwrap();
        assert_eq!(script.agents["mca-1"].rules[0].responses.len(), 2);
        assert!(script.segment.empty_when_unmatched);
        let seg = ScriptedSegmenter::from_script(script.segment);
        let request = SegmentRequest {
            clip_id: "c1".into(),
            model: String::new(),
            prompt: " guitar ".into(),
            frames: vec![],
            height: 1,
            width: 2,
        };
        assert_eq!(seg.segment(&request, 0).unwrap().frames, vec![vec![1, 1]]);
        let other_clip = SegmentRequest {
            clip_id: "c2".into(),
            ..request
        };
        assert_eq!(seg.segment(&other_clip, 0).unwrap().frames.len(), 0);
    }
}
