//! Collaborative reasoning about the referred object.
//!
//! The consensus verdict fixes the call plan. A single dominant modality
//! with no auxiliary means one call to that modality's agent. A dominant
//! plus an auxiliary modality means the auxiliary agent lists candidates
//! first and the dominant agent decides with those candidates in its
//! prompt. Two dominant modalities means both single-modality agents list
//! candidates and the audio-visual agent decides.

use std::thread;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::backends::{omni_invoke, AgentHandle, CallSite, MediaNeeds, MediaSlice};
use crate::error::PhaseError;
use crate::model::{AnalysisVerdict, CandidateList, Difficulty, MediaBundle, Modality, ReasoningResult};
use crate::prompts::{self, Bindings, PromptRegistry};
use crate::schema::{parse_candidates, parse_object};
use crate::trace::{ExecutionTrace, Phase};

/// The three multimodal reasoning agents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorAgent {
    Visual,
    Audio,
    AudioVisual,
}

#[derive(Debug, Clone)]
pub struct CorConfig {
    pub visual: AgentHandle,
    pub audio: AgentHandle,
    pub audiovisual: AgentHandle,
    /// Run the two high-path auxiliary calls on separate threads.
    pub concurrent: bool,
}

impl CorConfig {
    pub fn new(visual: AgentHandle, audio: AgentHandle, audiovisual: AgentHandle) -> Self {
        Self {
            visual,
            audio,
            audiovisual,
            concurrent: true,
        }
    }

    pub fn agent(&self, which: CorAgent) -> &AgentHandle {
        match which {
            CorAgent::Visual => &self.visual,
            CorAgent::Audio => &self.audio,
            CorAgent::AudioVisual => &self.audiovisual,
        }
    }
}

/// One planned call.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct PlannedCall {
    pub agent: CorAgent,
    /// Template role name.
    pub role: &'static str,
    pub needs: MediaNeeds,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RoutePlan {
    pub path: Difficulty,
    /// Auxiliary calls in emission order; their candidate lists reach the
    /// dominant call in the same order.
    pub auxiliary: Vec<PlannedCall>,
    pub dominant: PlannedCall,
}

impl RoutePlan {
    pub fn call_count(&self) -> usize {
        self.auxiliary.len() + 1
    }
}

fn auxiliary_call(m: Modality) -> PlannedCall {
    match m {
        Modality::Audio => PlannedCall {
            agent: CorAgent::Audio,
            role: prompts::AUDIO_AUX,
            needs: MediaNeeds::AUDIO,
        },
        Modality::Visual => PlannedCall {
            agent: CorAgent::Visual,
            role: prompts::VISUAL_AUX,
            needs: MediaNeeds::FRAMES,
        },
    }
}

fn dominant_call(m: Modality) -> PlannedCall {
    match m {
        Modality::Audio => PlannedCall {
            agent: CorAgent::Audio,
            role: prompts::AUDIO_DOM,
            needs: MediaNeeds::AUDIO,
        },
        Modality::Visual => PlannedCall {
            agent: CorAgent::Visual,
            role: prompts::VISUAL_DOM,
            needs: MediaNeeds::FRAMES,
        },
    }
}

/// The call plan for a verdict. Pure.
pub fn route(verdict: &AnalysisVerdict) -> RoutePlan {
    let roles = verdict.roles();
    let path = verdict.difficulty();
    match roles.sole_dominant() {
        Some(dom) => RoutePlan {
            path,
            auxiliary: roles.auxiliary().iter().map(|&m| auxiliary_call(m)).collect(),
            dominant: dominant_call(dom),
        },
        None => RoutePlan {
            path,
            auxiliary: vec![auxiliary_call(Modality::Audio), auxiliary_call(Modality::Visual)],
            dominant: PlannedCall {
                agent: CorAgent::AudioVisual,
                role: prompts::AV_DOM,
                needs: MediaNeeds::BOTH,
            },
        },
    }
}

fn slice(bundle: &MediaBundle, needs: MediaNeeds) -> MediaSlice<'_> {
    MediaSlice {
        frames: needs.frames.then(|| bundle.frames()),
        audio: needs.audio.then(|| bundle.audio()),
        extra: Vec::new(),
    }
}

fn source_of(call: &PlannedCall) -> Modality {
    if call.needs.audio {
        Modality::Audio
    } else {
        Modality::Visual
    }
}

/// Labelled candidate blocks inserted into the dominant prompt.
pub fn auxiliary_block(auxiliaries: &[CandidateList]) -> String {
    let mut out = String::new();
    for list in auxiliaries {
        let found = if list.candidates().is_empty() {
            "(none)".to_string()
        } else {
            list.candidates().join(", ")
        };
        out.push_str(&format!(
            "\nCandidates from the {} agent: {found}\n",
            list.source_modality()
        ));
        if !list.reason().is_empty() {
            out.push_str(&format!("Its reasoning: {}\n", list.reason()));
        }
    }
    out
}

pub fn run_auxiliary(
    agent: &AgentHandle,
    call: &PlannedCall,
    bundle: &MediaBundle,
    prompts: &PromptRegistry,
    trace: &mut ExecutionTrace,
) -> Result<CandidateList, PhaseError> {
    let phase = Phase::CorAuxiliary;
    let prompt = prompts
        .render(
            phase,
            call.role,
            &Bindings::new().set("expression", bundle.expression()),
        )
        .map_err(|e| PhaseError::prompt(phase, e))?;
    let source = source_of(call);
    let list = omni_invoke(
        agent,
        CallSite::new(phase),
        prompt,
        call.needs,
        &slice(bundle, call.needs),
        trace,
        &|c| prompts.repair(c),
        |raw| {
            let list = parse_candidates(raw, source)?;
            let payload = serde_json::to_value(&list).expect("candidate lists serialize");
            Ok((list, payload))
        },
    )?;
    Ok(list)
}

pub fn run_dominant(
    agent: &AgentHandle,
    call: &PlannedCall,
    path: Difficulty,
    bundle: &MediaBundle,
    auxiliaries: Vec<CandidateList>,
    prompts: &PromptRegistry,
    trace: &mut ExecutionTrace,
) -> Result<ReasoningResult, PhaseError> {
    let phase = Phase::CorDominant;
    let b = Bindings::new()
        .set("expression", bundle.expression())
        .set("auxiliary", auxiliary_block(&auxiliaries));
    let prompt = prompts
        .render(phase, call.role, &b)
        .map_err(|e| PhaseError::prompt(phase, e))?;
    let answer = omni_invoke(
        agent,
        CallSite::new(phase),
        prompt,
        call.needs,
        &slice(bundle, call.needs),
        trace,
        &|c| prompts.repair(c),
        |raw| {
            let a = parse_object(raw)?;
            let payload = json!({ "object": a.object, "reason": a.reason });
            Ok((a, payload))
        },
    )?;
    Ok(
        ReasoningResult::new(answer.object, answer.reason, path, auxiliaries)
            .expect("route plans match the path's auxiliary count"),
    )
}

pub fn run_cor(
    config: &CorConfig,
    verdict: &AnalysisVerdict,
    bundle: &MediaBundle,
    prompts: &PromptRegistry,
    trace: &mut ExecutionTrace,
) -> Result<ReasoningResult, PhaseError> {
    let plan = route(verdict);
    let auxiliaries = if config.concurrent && plan.auxiliary.len() > 1 {
        let clip = trace.clip_id.clone();
        let results: Vec<_> = thread::scope(|s| {
            let handles: Vec<_> = plan
                .auxiliary
                .iter()
                .map(|call| {
                    let clip = clip.clone();
                    s.spawn(move || {
                        let mut local = ExecutionTrace::new(clip);
                        let r = run_auxiliary(config.agent(call.agent), call, bundle, prompts, &mut local);
                        (r, local)
                    })
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("auxiliary worker panicked"))
                .collect()
        });
        let mut lists = Vec::new();
        let mut first_err = None;
        for (r, local) in results {
            trace.append(local);
            match r {
                Ok(l) => lists.push(l),
                Err(e) => {
                    first_err.get_or_insert(e);
                }
            }
        }
        if let Some(e) = first_err {
            return Err(e);
        }
        lists
    } else {
        plan.auxiliary
            .iter()
            .map(|call| run_auxiliary(config.agent(call.agent), call, bundle, prompts, trace))
            .collect::<Result<Vec<_>, _>>()?
    };
    run_dominant(
        config.agent(plan.dominant.agent),
        &plan.dominant,
        plan.path,
        bundle,
        auxiliaries,
        prompts,
        trace,
    )
}
