//! Model backends: text reasoning agents, multimodal (frames + audio)
//! agents and promptable segmentation.
//!
//! Each capability is a trait with a wire client ([`http`]) and a
//! deterministic scripted implementation ([`scripted`]). The call helpers in
//! this module own the retry policy and write one trace record per attempt.

pub mod http;
pub mod scripted;

use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::mask::{MaskSequence, RleSequence};
use crate::model::{AudioRef, FrameRef};
use crate::schema::ParseError;
use crate::trace::{digest_json, AgentCallRecord, CallOutcome, ExecutionTrace, Phase};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BackendError {
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("request timed out after {0:?}")]
    Timeout(Duration),
    #[error("missing media: {0}")]
    Media(String),
    #[error("segmentation shape mismatch: {0}")]
    Shape(String),
}

impl BackendError {
    fn retryable(&self) -> bool {
        matches!(self, BackendError::Transport(_) | BackendError::Timeout(_))
    }
}

/// A failed agent call after the retry budget is spent.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{role} ({phase}) failed after {attempts} attempt(s): {cause}")]
pub struct CallError {
    pub role: String,
    pub phase: Phase,
    pub attempts: u32,
    pub cause: CallFailure,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CallFailure {
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("unusable output: {0}")]
    Parse(#[from] ParseError),
}

impl CallError {
    /// Short error class used in run manifests.
    pub fn class(&self) -> &'static str {
        match &self.cause {
            CallFailure::Backend(BackendError::Transport(_)) => "TransportError",
            CallFailure::Backend(BackendError::Timeout(_)) => "TimeoutError",
            CallFailure::Backend(BackendError::Media(_)) => "MediaError",
            CallFailure::Backend(BackendError::Shape(_)) => "ShapeError",
            CallFailure::Parse(_) => "ParseError",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MediaKind {
    Frame,
    Audio,
    Overlay,
    /// Inline run-length mask, used when overlays are not rendered.
    Mask,
}

/// One media attachment. `uri` is a media URI, or inline data for masks.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MediaItem {
    pub kind: MediaKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub index: Option<usize>,
    pub uri: String,
}

/// Wire request for a reasoning agent: `{role, model, prompt, media[], params}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentRequest {
    pub role: String,
    pub model: String,
    pub prompt: String,
    #[serde(default)]
    pub media: Vec<MediaItem>,
    #[serde(default)]
    pub params: Map<String, Value>,
}

impl AgentRequest {
    pub fn digest(&self) -> String {
        digest_json(self)
    }

    pub fn has(&self, kind: MediaKind) -> bool {
        self.media.iter().any(|m| m.kind == kind)
    }
}

/// A text or multimodal reasoning backend.
pub trait AgentBackend: Send + Sync {
    /// Returns the raw response text. `attempt` is 0 for the first call.
    fn complete(&self, request: &AgentRequest, attempt: u32) -> Result<String, BackendError>;
}

/// Wire request for the segmentation backend.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentRequest {
    pub clip_id: String,
    pub model: String,
    pub prompt: String,
    pub frames: Vec<MediaItem>,
    pub height: usize,
    pub width: usize,
}

pub trait SegmentBackend: Send + Sync {
    fn segment(&self, request: &SegmentRequest, attempt: u32) -> Result<RleSequence, BackendError>;
}

fn default_timeout() -> f64 {
    120.0
}

fn default_retries() -> u32 {
    2
}

fn default_backoff() -> u64 {
    500
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EndpointError {
    #[error("endpoint {0}: timeout must be positive")]
    Timeout(String),
    #[error("endpoint {0}: role name is empty")]
    EmptyRole(String),
}

/// A text reasoning agent (a consensus panelist or the final decider).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextAgentEndpoint {
    pub role: String,
    #[serde(default)]
    pub address: String,
    #[serde(default)]
    pub model: String,
    #[serde(default = "default_timeout")]
    pub timeout_secs: f64,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
    /// Base delay of the exponential backoff between transport retries.
    #[serde(default = "default_backoff")]
    pub backoff_ms: u64,
    /// Opaque sampling parameters passed through to the backend.
    #[serde(default)]
    pub params: Map<String, Value>,
}

impl TextAgentEndpoint {
    pub fn new(role: impl Into<String>) -> Self {
        Self {
            role: role.into(),
            address: String::new(),
            model: String::new(),
            timeout_secs: default_timeout(),
            max_retries: default_retries(),
            backoff_ms: default_backoff(),
            params: Map::new(),
        }
    }

    pub fn with_retries(mut self, max_retries: u32, backoff_ms: u64) -> Self {
        self.max_retries = max_retries;
        self.backoff_ms = backoff_ms;
        self
    }

    pub fn validate(&self) -> Result<(), EndpointError> {
        if self.role.trim().is_empty() {
            return Err(EndpointError::EmptyRole(self.address.clone()));
        }
        if self.timeout_secs.is_nan() || self.timeout_secs <= 0.0 {
            return Err(EndpointError::Timeout(self.role.clone()));
        }
        Ok(())
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_secs_f64(self.timeout_secs)
    }
}

/// A multimodal agent: a text endpoint that can also take frames and audio.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OmniAgentEndpoint {
    #[serde(flatten)]
    pub text: TextAgentEndpoint,
    #[serde(default = "yes")]
    pub accepts_frames: bool,
    #[serde(default = "yes")]
    pub accepts_audio: bool,
    /// Upload media as inline base64 instead of file references.
    #[serde(default)]
    pub inline_media: bool,
}

fn yes() -> bool {
    true
}

impl OmniAgentEndpoint {
    pub fn new(role: impl Into<String>) -> Self {
        Self {
            text: TextAgentEndpoint::new(role),
            accepts_frames: true,
            accepts_audio: true,
            inline_media: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentEndpoint {
    #[serde(default)]
    pub address: String,
    #[serde(default)]
    pub model: String,
    #[serde(default = "default_timeout")]
    pub timeout_secs: f64,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
    #[serde(default = "default_backoff")]
    pub backoff_ms: u64,
    #[serde(default)]
    pub inline_media: bool,
}

impl Default for SegmentEndpoint {
    fn default() -> Self {
        Self {
            address: String::new(),
            model: String::new(),
            timeout_secs: default_timeout(),
            max_retries: default_retries(),
            backoff_ms: default_backoff(),
            inline_media: false,
        }
    }
}

impl SegmentEndpoint {
    pub fn validate(&self) -> Result<(), EndpointError> {
        if self.timeout_secs.is_nan() || self.timeout_secs <= 0.0 {
            return Err(EndpointError::Timeout("segment".into()));
        }
        Ok(())
    }
}

/// A configured agent: endpoint settings plus the backend serving it.
#[derive(Clone)]
pub struct AgentHandle {
    pub endpoint: TextAgentEndpoint,
    pub accepts_frames: bool,
    pub accepts_audio: bool,
    pub backend: Arc<dyn AgentBackend>,
}

impl AgentHandle {
    pub fn text(endpoint: TextAgentEndpoint, backend: Arc<dyn AgentBackend>) -> Self {
        Self {
            endpoint,
            accepts_frames: false,
            accepts_audio: false,
            backend,
        }
    }

    pub fn omni(endpoint: OmniAgentEndpoint, backend: Arc<dyn AgentBackend>) -> Self {
        Self {
            accepts_frames: endpoint.accepts_frames,
            accepts_audio: endpoint.accepts_audio,
            endpoint: endpoint.text,
            backend,
        }
    }

    pub fn role(&self) -> &str {
        &self.endpoint.role
    }
}

impl std::fmt::Debug for AgentHandle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("AgentHandle")
            .field("endpoint", &self.endpoint)
            .finish_non_exhaustive()
    }
}

#[derive(Clone)]
pub struct SegmentHandle {
    pub endpoint: SegmentEndpoint,
    pub backend: Arc<dyn SegmentBackend>,
}

impl std::fmt::Debug for SegmentHandle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SegmentHandle")
            .field("endpoint", &self.endpoint)
            .finish_non_exhaustive()
    }
}

/// Where in the pipeline a call happens.
#[derive(Debug, Clone, Copy)]
pub struct CallSite {
    pub phase: Phase,
    pub step: Option<u32>,
}

impl CallSite {
    pub fn new(phase: Phase) -> Self {
        Self { phase, step: None }
    }

    pub fn step(phase: Phase, step: u32) -> Self {
        Self {
            phase,
            step: Some(step),
        }
    }
}

/// What a repair prompt needs to know about the rejected output.
pub struct RepairContext<'a> {
    pub original_prompt: &'a str,
    pub bad_output: &'a str,
    pub error: &'a ParseError,
}

/// Builds the follow-up prompt sent after an unparseable response.
pub type RepairFn<'a> = &'a (dyn Fn(&RepairContext<'_>) -> String + Sync);

fn backoff(base_ms: u64, failures: u32) {
    if base_ms == 0 {
        return;
    }
    let factor = 1u64 << failures.min(10);
    thread::sleep(Duration::from_millis(base_ms.saturating_mul(factor)));
}

/// Calls an agent and parses the response, retrying transport failures with
/// exponential backoff and unparseable output with a repair prompt. Both
/// share one budget of `1 + max_retries` attempts; every attempt is traced.
pub fn invoke<T>(
    agent: &AgentHandle,
    site: CallSite,
    prompt: String,
    media: Vec<MediaItem>,
    trace: &mut ExecutionTrace,
    repair: RepairFn<'_>,
    parse: impl Fn(&str) -> Result<(T, Value), ParseError>,
) -> Result<T, CallError> {
    let ep = &agent.endpoint;
    let original = prompt.clone();
    let mut request = AgentRequest {
        role: ep.role.clone(),
        model: ep.model.clone(),
        prompt,
        media,
        params: ep.params.clone(),
    };
    let mut transport_failures = 0;
    let mut last: Option<CallFailure> = None;
    for attempt in 0..=ep.max_retries {
        let digest = request.digest();
        let started = Instant::now();
        let response = agent.backend.complete(&request, attempt);
        let wall_ms = started.elapsed().as_millis() as u64;
        let mut record = AgentCallRecord {
            index: 0,
            role: ep.role.clone(),
            phase: site.phase,
            step: site.step,
            attempt,
            input_digest: digest,
            raw_output: String::new(),
            outcome: CallOutcome::TransportError(String::new()),
            wall_ms,
        };
        match response {
            Err(e) => {
                record.outcome = CallOutcome::TransportError(e.to_string());
                trace.push(record);
                if !e.retryable() {
                    return Err(CallError {
                        role: ep.role.clone(),
                        phase: site.phase,
                        attempts: attempt + 1,
                        cause: e.into(),
                    });
                }
                last = Some(e.into());
                if attempt < ep.max_retries {
                    backoff(ep.backoff_ms, transport_failures);
                }
                transport_failures += 1;
            }
            Ok(raw) => {
                record.raw_output = raw.clone();
                match parse(&raw) {
                    Ok((value, payload)) => {
                        record.outcome = CallOutcome::Parsed(payload);
                        trace.push(record);
                        return Ok(value);
                    }
                    Err(e) => {
                        record.outcome = CallOutcome::ParseError(e.to_string());
                        trace.push(record);
                        request.prompt = repair(&RepairContext {
                            original_prompt: &original,
                            bad_output: &raw,
                            error: &e,
                        });
                        last = Some(e.into());
                    }
                }
            }
        }
    }
    Err(CallError {
        role: ep.role.clone(),
        phase: site.phase,
        attempts: ep.max_retries + 1,
        cause: last.expect("at least one attempt was made"),
    })
}

/// Plain text chat: returns the raw response with transport retries only.
pub fn chat(
    agent: &AgentHandle,
    site: CallSite,
    prompt: String,
    trace: &mut ExecutionTrace,
) -> Result<String, CallError> {
    invoke(
        agent,
        site,
        prompt,
        Vec::new(),
        trace,
        &|c| c.original_prompt.to_string(),
        |raw| Ok((raw.to_string(), Value::String(raw.to_string()))),
    )
}

/// Which media slices a multimodal role must receive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MediaNeeds {
    pub frames: bool,
    pub audio: bool,
}

impl MediaNeeds {
    pub const FRAMES: MediaNeeds = MediaNeeds {
        frames: true,
        audio: false,
    };
    pub const AUDIO: MediaNeeds = MediaNeeds {
        frames: false,
        audio: true,
    };
    pub const BOTH: MediaNeeds = MediaNeeds {
        frames: true,
        audio: true,
    };
}

/// The media available for a multimodal call.
#[derive(Debug, Clone, Default)]
pub struct MediaSlice<'a> {
    pub frames: Option<&'a [FrameRef]>,
    pub audio: Option<&'a AudioRef>,
    /// Extra attachments (mask overlays) appended after frames and audio.
    pub extra: Vec<MediaItem>,
}

/// Builds the attachment list for `needs`, attaching only the slices the
/// role requires.
pub fn media_items(
    agent: &AgentHandle,
    needs: MediaNeeds,
    slice: &MediaSlice<'_>,
) -> Result<Vec<MediaItem>, BackendError> {
    let role = agent.role();
    let mut items = Vec::new();
    if needs.frames {
        if !agent.accepts_frames {
            return Err(BackendError::Media(format!("{role} does not accept frames")));
        }
        match slice.frames {
            Some(frames) if !frames.is_empty() => items.extend(frames.iter().map(|f| MediaItem {
                kind: MediaKind::Frame,
                index: Some(f.index),
                uri: f.uri.clone(),
            })),
            _ => return Err(BackendError::Media(format!("{role} requires video frames"))),
        }
    }
    if needs.audio {
        if !agent.accepts_audio {
            return Err(BackendError::Media(format!("{role} does not accept audio")));
        }
        match slice.audio {
            Some(a) => items.push(MediaItem {
                kind: MediaKind::Audio,
                index: None,
                uri: a.uri.clone(),
            }),
            None => return Err(BackendError::Media(format!("{role} requires the audio stream"))),
        }
    }
    items.extend(slice.extra.iter().cloned());
    Ok(items)
}

/// Multimodal call: checks the media precondition, then behaves like
/// [`invoke`]. A missing slice fails before any backend call.
#[allow(clippy::too_many_arguments)]
pub fn omni_invoke<T>(
    agent: &AgentHandle,
    site: CallSite,
    prompt: String,
    needs: MediaNeeds,
    slice: &MediaSlice<'_>,
    trace: &mut ExecutionTrace,
    repair: RepairFn<'_>,
    parse: impl Fn(&str) -> Result<(T, Value), ParseError>,
) -> Result<T, CallError> {
    let media = media_items(agent, needs, slice).map_err(|e| CallError {
        role: agent.role().to_string(),
        phase: site.phase,
        attempts: 0,
        cause: e.into(),
    })?;
    invoke(agent, site, prompt, media, trace, repair, parse)
}

/// Raw-text multimodal chat.
pub fn omni_chat(
    agent: &AgentHandle,
    site: CallSite,
    prompt: String,
    needs: MediaNeeds,
    slice: &MediaSlice<'_>,
    trace: &mut ExecutionTrace,
) -> Result<String, CallError> {
    omni_invoke(
        agent,
        site,
        prompt,
        needs,
        slice,
        trace,
        &|c| c.original_prompt.to_string(),
        |raw| Ok((raw.to_string(), Value::String(raw.to_string()))),
    )
}

/// Segments `prompt` over all `frames` in one whole-clip request.
///
/// Transport failures are retried; a response whose mask count or size does
/// not match the frames fails immediately with a shape error.
#[allow(clippy::too_many_arguments)]
pub fn segment(
    seg: &SegmentHandle,
    clip_id: &str,
    prompt: &str,
    frames: &[FrameRef],
    (height, width): (usize, usize),
    step: Option<u32>,
    trace: &mut ExecutionTrace,
) -> Result<MaskSequence, CallError> {
    let fail = |attempts, e: BackendError| CallError {
        role: "segment".into(),
        phase: Phase::RlsSegment,
        attempts,
        cause: e.into(),
    };
    if prompt.trim().is_empty() {
        return Err(fail(0, BackendError::Media("empty object prompt".into())));
    }
    if frames.is_empty() {
        return Err(fail(0, BackendError::Media("no frames to segment".into())));
    }
    let request = SegmentRequest {
        clip_id: clip_id.to_string(),
        model: seg.endpoint.model.clone(),
        prompt: prompt.to_string(),
        frames: frames
            .iter()
            .map(|f| MediaItem {
                kind: MediaKind::Frame,
                index: Some(f.index),
                uri: f.uri.clone(),
            })
            .collect(),
        height,
        width,
    };
    let digest = digest_json(&request);
    let mut last = None;
    let mut transport_failures = 0;
    for attempt in 0..=seg.endpoint.max_retries {
        let started = Instant::now();
        let result = seg.backend.segment(&request, attempt);
        let mut record = AgentCallRecord {
            index: 0,
            role: "segment".into(),
            phase: Phase::RlsSegment,
            step,
            attempt,
            input_digest: digest.clone(),
            raw_output: String::new(),
            outcome: CallOutcome::TransportError(String::new()),
            wall_ms: started.elapsed().as_millis() as u64,
        };
        let masks = result.and_then(|rle| {
            if rle.frames.len() != frames.len() || (rle.height, rle.width) != (height, width) {
                return Err(BackendError::Shape(format!(
                    "got {} masks of {}x{} for {} frames of {height}x{width}",
                    rle.frames.len(),
                    rle.height,
                    rle.width,
                    frames.len()
                )));
            }
            MaskSequence::from_rle(clip_id, &rle).map_err(|e| BackendError::Shape(e.to_string()))
        });
        match masks {
            Ok(seq) => {
                let areas: Vec<usize> = seq.masks().iter().map(|m| m.area()).collect();
                record.raw_output = digest_json(&seq.to_rle());
                record.outcome = CallOutcome::Parsed(serde_json::json!({
                    "prompt": prompt,
                    "frames": seq.len(),
                    "areas": areas,
                }));
                trace.push(record);
                return Ok(seq);
            }
            Err(e) => {
                record.outcome = CallOutcome::TransportError(e.to_string());
                trace.push(record);
                if !e.retryable() {
                    return Err(fail(attempt + 1, e));
                }
                last = Some(e);
                if attempt < seg.endpoint.max_retries {
                    backoff(seg.endpoint.backoff_ms, transport_failures);
                }
                transport_failures += 1;
            }
        }
    }
    Err(fail(
        seg.endpoint.max_retries + 1,
        last.expect("at least one attempt was made"),
    ))
}
