//! Consensus recognition of the modalities an expression depends on.
//!
//! A panel of three analysts judges the expression independently, then
//! revises over one or more peer rounds in which each analyst sees the two
//! other analysts' latest verdicts under anonymous labels. A final agent
//! consolidates the last round into the consensus verdict.

use std::fmt;
use std::thread;

use serde::{Deserialize, Serialize};

use crate::backends::{invoke, AgentHandle, CallSite};
use crate::error::PhaseError;
use crate::model::AnalysisVerdict;
use crate::prompts::{Bindings, PromptRegistry, ANALYST, FINAL};
use crate::schema::{parse_verdict, serialize_verdict, verdict_value};
use crate::trace::{ExecutionTrace, Phase};

/// Anonymous labels used for panelists inside prompts.
pub const PEER_LABELS: [&str; 3] = ["Analyst A", "Analyst B", "Analyst C"];

/// Author recorded on a fast-path consensus that skipped the final agent.
pub const FAST_PATH_AUTHOR: &str = "consensus";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CmrConfigError {
    #[error("panelists must have distinct role names, {0:?} repeats")]
    DuplicateRole(String),
    #[error("peer_rounds must be at least 1")]
    NoPeerRounds,
}

#[derive(Debug, Clone)]
pub struct CmrConfig {
    panel: [AgentHandle; 3],
    final_agent: AgentHandle,
    peer_rounds: u32,
    /// Skip the final agent when the last round is unanimous.
    pub fast_path: bool,
    /// Run the three panel calls of a phase on separate threads.
    pub concurrent: bool,
}

impl CmrConfig {
    pub fn new(
        panel: [AgentHandle; 3],
        final_agent: AgentHandle,
        peer_rounds: u32,
    ) -> Result<Self, CmrConfigError> {
        if peer_rounds == 0 {
            return Err(CmrConfigError::NoPeerRounds);
        }
        for i in 0..3 {
            for j in i + 1..3 {
                if panel[i].role() == panel[j].role() {
                    return Err(CmrConfigError::DuplicateRole(panel[i].role().to_string()));
                }
            }
        }
        Ok(Self {
            panel,
            final_agent,
            peer_rounds,
            fast_path: false,
            concurrent: true,
        })
    }

    pub fn panel(&self) -> &[AgentHandle; 3] {
        &self.panel
    }

    pub fn final_agent(&self) -> &AgentHandle {
        &self.final_agent
    }

    pub fn peer_rounds(&self) -> u32 {
        self.peer_rounds
    }
}

/// Earliest phase at which all three panelists agreed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Unanimity {
    Independent,
    PeerRound(u32),
    Never,
}

impl fmt::Display for Unanimity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Unanimity::Independent => f.write_str("independent"),
            Unanimity::PeerRound(k) => write!(f, "peer round {k}"),
            Unanimity::Never => f.write_str("never"),
        }
    }
}

impl Serialize for Unanimity {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Unanimity {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        match s.as_str() {
            "independent" => Ok(Unanimity::Independent),
            "never" => Ok(Unanimity::Never),
            other => other
                .strip_prefix("peer round ")
                .and_then(|k| k.parse().ok())
                .map(Unanimity::PeerRound)
                .ok_or_else(|| serde::de::Error::custom(format!("bad unanimity label {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CmrOutcome {
    pub independent: [AnalysisVerdict; 3],
    pub peer: Vec<[AnalysisVerdict; 3]>,
    #[serde(rename = "final")]
    pub final_verdict: AnalysisVerdict,
    pub unanimous_at: Unanimity,
}

pub fn unanimous(verdicts: &[AnalysisVerdict; 3]) -> bool {
    verdicts[0].agrees_with(&verdicts[1]) && verdicts[1].agrees_with(&verdicts[2])
}

fn labelled(verdicts: &[(&str, &AnalysisVerdict)]) -> String {
    verdicts
        .iter()
        .map(|(label, v)| format!("{label}:\n{}", serialize_verdict(v)))
        .collect::<Vec<_>>()
        .join("\n\n")
}

/// Peer block for panelist `me`: the other two verdicts, labelled A and B
/// in panel order.
pub fn peer_block(prior: &[AnalysisVerdict; 3], me: usize) -> String {
    let others: Vec<_> = (0..3)
        .filter(|&i| i != me)
        .zip(PEER_LABELS)
        .map(|(i, label)| (label, &prior[i]))
        .collect();
    labelled(&others)
}

pub fn discussion_block(discussion: &[AnalysisVerdict; 3]) -> String {
    let all: Vec<_> = PEER_LABELS.into_iter().zip(discussion.iter()).collect();
    labelled(&all)
}

fn ask(
    agent: &AgentHandle,
    site: CallSite,
    prompt: String,
    prompts: &PromptRegistry,
    trace: &mut ExecutionTrace,
) -> Result<AnalysisVerdict, PhaseError> {
    let role = agent.role().to_string();
    invoke(
        agent,
        site,
        prompt,
        Vec::new(),
        trace,
        &|c| prompts.repair(c),
        |raw| {
            let v = parse_verdict(raw, &role)?;
            let payload = verdict_value(&v);
            Ok((v, payload))
        },
    )
    .map_err(PhaseError::from)
}

/// Runs one panel phase, one call per panelist, merging the per-panelist
/// records into `trace` in panel order.
fn panel_phase(
    config: &CmrConfig,
    site: CallSite,
    prompts: [String; 3],
    registry: &PromptRegistry,
    trace: &mut ExecutionTrace,
) -> Result<[AnalysisVerdict; 3], PhaseError> {
    let clip = trace.clip_id.clone();
    let run = |i: usize, prompt: String| {
        let mut local = ExecutionTrace::new(clip.clone());
        let r = ask(&config.panel[i], site, prompt, registry, &mut local);
        (r, local)
    };
    let [p0, p1, p2] = prompts;
    let results: Vec<_> = if config.concurrent {
        thread::scope(|s| {
            let handles: Vec<_> = [p0, p1, p2]
                .into_iter()
                .enumerate()
                .map(|(i, p)| s.spawn(move || run(i, p)))
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("panel worker panicked"))
                .collect()
        })
    } else {
        [p0, p1, p2]
            .into_iter()
            .enumerate()
            .map(|(i, p)| run(i, p))
            .collect()
    };
    let mut verdicts = Vec::with_capacity(3);
    let mut first_err = None;
    for (r, local) in results {
        trace.append(local);
        match r {
            Ok(v) => verdicts.push(v),
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    if let Some(e) = first_err {
        return Err(e);
    }
    Ok(verdicts.try_into().expect("three panelists"))
}

pub fn independent_thinking(
    config: &CmrConfig,
    expression: &str,
    prompts: &PromptRegistry,
    trace: &mut ExecutionTrace,
) -> Result<[AnalysisVerdict; 3], PhaseError> {
    let phase = Phase::CmrIndependent;
    let prompt = prompts
        .render(phase, ANALYST, &Bindings::new().set("expression", expression))
        .map_err(|e| PhaseError::prompt(phase, e))?;
    let texts = [prompt.clone(), prompt.clone(), prompt];
    panel_phase(config, CallSite::new(phase), texts, prompts, trace)
}

/// One peer round: each panelist revises after seeing the other two
/// verdicts from `prior`. `round` is 1-based.
pub fn peer_interaction(
    config: &CmrConfig,
    expression: &str,
    prior: &[AnalysisVerdict; 3],
    round: u32,
    prompts: &PromptRegistry,
    trace: &mut ExecutionTrace,
) -> Result<[AnalysisVerdict; 3], PhaseError> {
    let phase = Phase::CmrPeer;
    let render = |me: usize| {
        let b = Bindings::new()
            .set("expression", expression)
            .set("peers", peer_block(prior, me));
        prompts
            .render(phase, ANALYST, &b)
            .map_err(|e| PhaseError::prompt(phase, e))
    };
    let texts = [render(0)?, render(1)?, render(2)?];
    panel_phase(config, CallSite::step(phase, round), texts, prompts, trace)
}

pub fn final_decision(
    config: &CmrConfig,
    expression: &str,
    discussion: &[AnalysisVerdict; 3],
    prompts: &PromptRegistry,
    trace: &mut ExecutionTrace,
) -> Result<AnalysisVerdict, PhaseError> {
    let phase = Phase::CmrFinal;
    let b = Bindings::new()
        .set("expression", expression)
        .set("discussion", discussion_block(discussion));
    let prompt = prompts
        .render(phase, FINAL, &b)
        .map_err(|e| PhaseError::prompt(phase, e))?;
    ask(&config.final_agent, CallSite::new(phase), prompt, prompts, trace)
}

pub fn run_cmr(
    config: &CmrConfig,
    expression: &str,
    prompts: &PromptRegistry,
    trace: &mut ExecutionTrace,
) -> Result<CmrOutcome, PhaseError> {
    let independent = independent_thinking(config, expression, prompts, trace)?;
    let mut unanimous_at = if unanimous(&independent) {
        Unanimity::Independent
    } else {
        Unanimity::Never
    };
    let mut peer = Vec::with_capacity(config.peer_rounds as usize);
    for round in 1..=config.peer_rounds {
        let prior = peer.last().unwrap_or(&independent);
        let next = peer_interaction(config, expression, prior, round, prompts, trace)?;
        if unanimous_at == Unanimity::Never && unanimous(&next) {
            unanimous_at = Unanimity::PeerRound(round);
        }
        peer.push(next);
    }
    let discussion = peer.last().expect("at least one peer round");
    let final_verdict = if config.fast_path && unanimous(discussion) {
        discussion[0].with_author(FAST_PATH_AUTHOR)
    } else {
        final_decision(config, expression, discussion, prompts, trace)?
    };
    Ok(CmrOutcome {
        independent,
        peer,
        final_verdict,
        unanimous_at,
    })
}
