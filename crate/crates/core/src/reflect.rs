//! Reflective segmentation: segment the reasoned object, let a check agent
//! inspect the masked video, and re-segment with its corrected prompt until
//! it accepts the mask or the revision budget runs out.
//!
//! `max_reflect` counts revisions. The mask produced by the last allowed
//! revision is kept without a further inspection, so a clip costs at most
//! `1 + max_reflect` segment calls and `max_reflect` check calls.

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::backends::{
    omni_invoke, segment, AgentHandle, CallError, CallSite, MediaNeeds, MediaSlice, SegmentHandle,
};
use crate::error::PhaseError;
use crate::mask::MaskSequence;
use crate::model::{MediaBundle, ReasoningResult};
use crate::overlay::Overlays;
use crate::prompts::{Bindings, PromptRegistry, CHECK};
use crate::schema::{extract_object, optional_text, required, ParseError};
use crate::trace::{ExecutionTrace, Phase};

/// The check agent's judgement of one segmentation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckReport {
    #[serde(rename = "match")]
    pub matched: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub revised_object: Option<String>,
    #[serde(default)]
    pub reason: String,
}

impl CheckReport {
    pub fn accept(reason: impl Into<String>) -> Self {
        Self {
            matched: true,
            revised_object: None,
            reason: reason.into(),
        }
    }

    pub fn reject(revised: impl Into<String>, reason: impl Into<String>) -> Self {
        Self {
            matched: false,
            revised_object: Some(revised.into()),
            reason: reason.into(),
        }
    }
}

fn same_prompt(a: &str, b: &str) -> bool {
    a.trim().to_lowercase() == b.trim().to_lowercase()
}

fn as_flag(v: &Value) -> Result<bool, ParseError> {
    match v {
        Value::Bool(b) => Ok(*b),
        Value::String(s) => match s.trim().to_ascii_lowercase().as_str() {
            "true" | "yes" => Ok(true),
            "false" | "no" => Ok(false),
            other => Err(ParseError::UnknownToken {
                field: "match",
                token: other.to_string(),
            }),
        },
        other => Err(ParseError::UnknownToken {
            field: "match",
            token: other.to_string(),
        }),
    }
}

/// Parses a check response against the prompt that was checked. A
/// rejection must carry a revised object that differs from `current`.
pub fn parse_check(raw: &str, current: &str) -> Result<CheckReport, ParseError> {
    let map: Map<String, Value> = extract_object(raw)?;
    let matched = as_flag(required(&map, "match")?)?;
    let reason = optional_text(&map, "reason");
    if matched {
        return Ok(CheckReport::accept(reason));
    }
    let revised = optional_text(&map, "revised_object");
    if revised.is_empty() {
        return Err(ParseError::MissingField("revised_object"));
    }
    if same_prompt(&revised, current) {
        return Err(ParseError::NoProgress(revised));
    }
    Ok(CheckReport::reject(revised, reason))
}

pub fn serialize_check(report: &CheckReport) -> String {
    crate::schema::fenced(&serde_json::to_value(report).expect("reports serialize"))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KeepPolicy {
    /// Keep the last segmentation.
    #[default]
    Final,
    /// Keep the segmentation the check agent accepted, or the initial one
    /// when none was accepted.
    BestByCheck,
}

#[derive(Debug, Clone)]
pub struct RlsConfig {
    /// Required whenever `max_reflect > 0`.
    pub check: Option<AgentHandle>,
    pub segment: SegmentHandle,
    pub max_reflect: u32,
    pub keep_policy: KeepPolicy,
    /// Keep the last good mask instead of failing when a backend call fails
    /// after the initial segmentation.
    pub fail_soft: bool,
    pub overlays: Overlays,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("max_reflect is {0} but no check agent is configured")]
pub struct MissingCheckAgent(pub u32);

impl RlsConfig {
    pub fn new(
        check: Option<AgentHandle>,
        segment: SegmentHandle,
        max_reflect: u32,
    ) -> Result<Self, MissingCheckAgent> {
        if max_reflect > 0 && check.is_none() {
            return Err(MissingCheckAgent(max_reflect));
        }
        Ok(Self {
            check,
            segment,
            max_reflect,
            keep_policy: KeepPolicy::Final,
            fail_soft: false,
            overlays: Overlays::Inline,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum Inspection {
    Checked(CheckReport),
    FinalUninspected,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RlsIteration {
    pub prompt: String,
    pub masks: MaskSequence,
    pub inspection: Inspection,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum StopReason {
    Matched,
    CapReached,
    /// Fail-soft stop after a backend failure.
    Failed {
        class: String,
        message: String,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RlsOutcome {
    pub iterations: Vec<RlsIteration>,
    pub kept: usize,
    pub stop_reason: StopReason,
}

impl RlsOutcome {
    pub fn final_mask(&self) -> &MaskSequence {
        &self.iterations[self.kept].masks
    }

    pub fn final_prompt(&self) -> &str {
        &self.iterations[self.kept].prompt
    }

    pub fn prompts(&self) -> Vec<&str> {
        self.iterations.iter().map(|i| i.prompt.as_str()).collect()
    }

    /// Compact summary for per-clip result files.
    pub fn summary(&self) -> Value {
        json!({
            "iterations": self.iterations.iter().map(|i| json!({
                "prompt": i.prompt,
                "area": i.masks.masks().iter().map(|m| m.area()).sum::<usize>(),
                "inspection": i.inspection,
            })).collect::<Vec<_>>(),
            "kept": self.kept,
            "final_prompt": self.final_prompt(),
            "stop_reason": self.stop_reason,
        })
    }
}

pub fn initial_segment(
    config: &RlsConfig,
    result: &ReasoningResult,
    bundle: &MediaBundle,
    trace: &mut ExecutionTrace,
) -> Result<(MaskSequence, String), PhaseError> {
    let prompt = result.referred_object().to_string();
    let masks = segment(
        &config.segment,
        bundle.clip_id(),
        &prompt,
        bundle.frames(),
        bundle.dims(),
        Some(0),
        trace,
    )?;
    Ok((masks, prompt))
}

/// Asks the check agent about segmentation `step` of `prompt`.
#[allow(clippy::too_many_arguments)]
pub fn check(
    agent: &AgentHandle,
    overlays: &Overlays,
    bundle: &MediaBundle,
    prompt: &str,
    masks: &MaskSequence,
    step: u32,
    prompts: &PromptRegistry,
    trace: &mut ExecutionTrace,
) -> Result<CheckReport, PhaseError> {
    let phase = Phase::RlsCheck;
    let fail = |e| {
        PhaseError::from(CallError {
            role: agent.role().to_string(),
            phase,
            attempts: 0,
            cause: e,
        })
    };
    let extra = overlays.attach(bundle, masks, step).map_err(|e| fail(e.into()))?;
    let b = Bindings::new()
        .set("expression", bundle.expression())
        .set("prompt", prompt)
        .set("overlay", overlays.describe());
    let text = prompts
        .render(phase, CHECK, &b)
        .map_err(|e| PhaseError::prompt(phase, e))?;
    let slice = MediaSlice {
        frames: Some(bundle.frames()),
        audio: Some(bundle.audio()),
        extra,
    };
    let report = omni_invoke(
        agent,
        CallSite::step(phase, step),
        text,
        MediaNeeds::BOTH,
        &slice,
        trace,
        &|c| prompts.repair(c),
        |raw| {
            let r = parse_check(raw, prompt)?;
            let payload = serde_json::to_value(&r).expect("reports serialize");
            Ok((r, payload))
        },
    )?;
    Ok(report)
}

pub fn run_rls(
    config: &RlsConfig,
    result: &ReasoningResult,
    bundle: &MediaBundle,
    prompts: &PromptRegistry,
    trace: &mut ExecutionTrace,
) -> Result<RlsOutcome, PhaseError> {
    let (masks, prompt) = initial_segment(config, result, bundle, trace)?;
    let mut iterations = vec![RlsIteration {
        prompt,
        masks,
        inspection: Inspection::FinalUninspected,
    }];
    let budget = match config.check {
        Some(_) => config.max_reflect,
        None => 0,
    };
    let soft = |e: PhaseError| -> Result<StopReason, PhaseError> {
        if config.fail_soft {
            Ok(StopReason::Failed {
                class: e.class().to_string(),
                message: e.to_string(),
            })
        } else {
            Err(e)
        }
    };
    let mut revisions = 0u32;
    let stop_reason = loop {
        if revisions >= budget {
            break StopReason::CapReached;
        }
        let agent = config
            .check
            .as_ref()
            .expect("budget is zero without a check agent");
        let current = iterations.last().expect("at least the initial iteration");
        let report = match check(
            agent,
            &config.overlays,
            bundle,
            &current.prompt,
            &current.masks,
            revisions,
            prompts,
            trace,
        ) {
            Ok(r) => r,
            Err(e) => break soft(e)?,
        };
        let matched = report.matched;
        let revised = report.revised_object.clone();
        iterations.last_mut().expect("non-empty").inspection = Inspection::Checked(report);
        if matched {
            break StopReason::Matched;
        }
        revisions += 1;
        let prompt = revised.expect("rejections carry a revised object");
        let masks = match segment(
            &config.segment,
            bundle.clip_id(),
            &prompt,
            bundle.frames(),
            bundle.dims(),
            Some(revisions),
            trace,
        ) {
            Ok(m) => m,
            Err(e) => break soft(e.into())?,
        };
        iterations.push(RlsIteration {
            prompt,
            masks,
            inspection: Inspection::FinalUninspected,
        });
    };
    let kept = match config.keep_policy {
        KeepPolicy::Final => iterations.len() - 1,
        KeepPolicy::BestByCheck => iterations
            .iter()
            .position(|i| matches!(&i.inspection, Inspection::Checked(r) if r.matched))
            .unwrap_or(0),
    };
    Ok(RlsOutcome {
        iterations,
        kept,
        stop_reason,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::scripted::{FnAgent, ScriptedAgent, ScriptedSegmenter};
    use crate::backends::{BackendError, OmniAgentEndpoint, SegmentEndpoint};
    use crate::mask::Mask;
    use crate::model::Difficulty;
    use crate::prompts::DifficultyRules;
    use crate::testutil::bundle;
    use std::sync::Arc;

    fn reasoning(object: &str) -> ReasoningResult {
        ReasoningResult::new(object, "r", Difficulty::Low, vec![]).unwrap()
    }

    fn check_agent(backend: Arc<dyn crate::backends::AgentBackend>) -> AgentHandle {
        let mut ep = OmniAgentEndpoint::new("check");
        ep.text.max_retries = 0;
        AgentHandle::omni(ep, backend)
    }

    fn segmenter() -> (SegmentHandle, Arc<ScriptedSegmenter>) {
        let mut s = ScriptedSegmenter::new();
        let dog = MaskSequence::new("c", (4, 4), vec![Mask::rect(4, 4, (0, 0), (2, 2)); 2]).unwrap();
        let dryer = MaskSequence::new("c", (4, 4), vec![Mask::rect(4, 4, (2, 2), (4, 4)); 2]).unwrap();
        s.insert("Dog", None, dog.to_rle());
        s.insert("Hair-dryer", None, dryer.to_rle());
        let s = Arc::new(s);
        (
            SegmentHandle {
                endpoint: SegmentEndpoint {
                    max_retries: 0,
                    backoff_ms: 0,
                    ..Default::default()
                },
                backend: s.clone(),
            },
            s,
        )
    }

    #[test]
    fn check_report_parsing() {
        let ok = parse_check("```json\n{\"match\": true, \"reason\": \"fine\"}\n```", "Dog").unwrap();
        assert!(ok.matched && ok.revised_object.is_none());
        let fix = parse_check(
            "```json\n{\"match\": false, \"revised_object\": \"Hair-dryer\", \"reason\": \"the sound is a dryer\"}\n```",
            "Dog",
        )
        .unwrap();
        assert_eq!(fix.revised_object.as_deref(), Some("Hair-dryer"));
        assert_eq!(
            parse_check("{\"match\": false, \"revised_object\": \"dog\"}", "Dog").unwrap_err(),
            ParseError::NoProgress("dog".into())
        );
        assert_eq!(
            parse_check("{\"match\": false}", "Dog").unwrap_err(),
            ParseError::MissingField("revised_object")
        );
        let r = CheckReport::reject("cat", "why");
        assert_eq!(parse_check(&serialize_check(&r), "dog").unwrap(), r);
    }

    #[test]
    fn correction_replaces_the_mask() {
        let (seg, s) = segmenter();
        let accept = serialize_check(&CheckReport::accept("ok"));
        let backend = Arc::new(FnAgent::new(move |req, _| {
            Ok(if req.prompt.contains("\"Dog\"") {
                serialize_check(&CheckReport::reject("Hair-dryer", "dryer"))
            } else {
                accept.clone()
            })
        }));
        let mut cfg = RlsConfig::new(Some(check_agent(backend)), seg, 2).unwrap();
        cfg.overlays = Overlays::Inline;
        let reg = PromptRegistry::builtin(DifficultyRules::default());
        let b = bundle("c", 2, (4, 4));
        let mut t = ExecutionTrace::new("c");
        let out = run_rls(&cfg, &reasoning("Dog"), &b, &reg, &mut t).unwrap();
        assert_eq!(out.stop_reason, StopReason::Matched);
        assert_eq!(out.prompts(), ["Dog", "Hair-dryer"]);
        assert_eq!(out.final_prompt(), "Hair-dryer");
        assert_eq!(out.final_mask().masks()[0], Mask::rect(4, 4, (2, 2), (4, 4)));
        assert_eq!(s.calls().len(), 2);
        let phases: Vec<_> = t.records.iter().map(|r| (r.phase, r.step)).collect();
        assert_eq!(
            phases,
            [
                (Phase::RlsSegment, Some(0)),
                (Phase::RlsCheck, Some(0)),
                (Phase::RlsSegment, Some(1)),
                (Phase::RlsCheck, Some(1)),
            ]
        );
    }

    #[test]
    fn cap_reached_keeps_last_revision_uninspected() {
        let (seg, _) = segmenter();
        let n = std::sync::atomic::AtomicUsize::new(0);
        let backend = Arc::new(FnAgent::new(move |_, _| {
            let k = n.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
            Ok(serialize_check(&CheckReport::reject(format!("obj{k}"), "no")))
        }));
        let cfg = RlsConfig::new(Some(check_agent(backend)), seg, 2).unwrap();
        let reg = PromptRegistry::builtin(DifficultyRules::default());
        let b = bundle("c", 2, (4, 4));
        let mut t = ExecutionTrace::new("c");
        let out = run_rls(&cfg, &reasoning("Dog"), &b, &reg, &mut t).unwrap();
        assert_eq!(out.stop_reason, StopReason::CapReached);
        assert_eq!(out.prompts(), ["Dog", "obj0", "obj1"]);
        assert_eq!(out.iterations[2].inspection, Inspection::FinalUninspected);
        assert_eq!(t.count_phase(Phase::RlsSegment), 3);
        assert_eq!(t.count_phase(Phase::RlsCheck), 2);
    }

    #[test]
    fn best_by_check_falls_back_to_the_initial_mask() {
        let (seg, _) = segmenter();
        let backend = Arc::new(ScriptedAgent::constant(
            "check",
            serialize_check(&CheckReport::reject("Hair-dryer", "no")),
        ));
        let mut cfg = RlsConfig::new(Some(check_agent(backend)), seg, 1).unwrap();
        cfg.keep_policy = KeepPolicy::BestByCheck;
        let reg = PromptRegistry::builtin(DifficultyRules::default());
        let mut t = ExecutionTrace::new("c");
        let out = run_rls(&cfg, &reasoning("Dog"), &bundle("c", 2, (4, 4)), &reg, &mut t).unwrap();
        assert_eq!(out.final_prompt(), "Dog");
        assert_eq!(out.iterations.len(), 2);
    }

    #[test]
    fn fail_soft_keeps_the_last_good_mask() {
        let (seg, _) = segmenter();
        let backend = Arc::new(FnAgent::new(|_, _| Err(BackendError::Transport("down".into()))));
        let mut cfg = RlsConfig::new(Some(check_agent(backend)), seg, 2).unwrap();
        let reg = PromptRegistry::builtin(DifficultyRules::default());
        let b = bundle("c", 2, (4, 4));
        let mut t = ExecutionTrace::new("c");
        assert!(run_rls(&cfg, &reasoning("Dog"), &b, &reg, &mut t).is_err());
        cfg.fail_soft = true;
        let out = run_rls(&cfg, &reasoning("Dog"), &b, &reg, &mut t).unwrap();
        assert!(matches!(out.stop_reason, StopReason::Failed { ref class, .. } if class == "TransportError"));
        assert_eq!(out.final_prompt(), "Dog");
    }

    #[test]
    fn missing_check_agent_is_a_config_error() {
        let (seg, _) = segmenter();
        assert_eq!(
            RlsConfig::new(None, seg.clone(), 1).unwrap_err(),
            MissingCheckAgent(1)
        );
        assert!(RlsConfig::new(None, seg, 0).is_ok());
    }
}
