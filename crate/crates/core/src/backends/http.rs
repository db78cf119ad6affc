//! Wire clients for hosted or self-hosted model servers.
//!
//! Reasoning agents speak a chat-completions style protocol: one user
//! message whose content parts are the prompt text followed by the media
//! attachments, either as `file://` references or inline base64 data URLs.
//! The segmenter posts `{clip_id, model, prompt, frames, height, width}` and
//! expects `{"masks": {"height", "width", "frames"}}` back.

use std::time::Duration;

use base64::Engine;
use reqwest::blocking::Client;
use serde_json::{json, Map, Value};

use super::{
    AgentBackend, AgentRequest, BackendError, MediaItem, MediaKind, OmniAgentEndpoint, SegmentBackend,
    SegmentEndpoint, SegmentRequest, TextAgentEndpoint,
};
use crate::mask::RleSequence;
use crate::media::MediaResolver;

fn build_client(timeout: Duration) -> Result<Client, BackendError> {
    Client::builder()
        .timeout(timeout)
        .build()
        .map_err(|e| BackendError::Transport(e.to_string()))
}

fn map_err(e: reqwest::Error, timeout: Duration) -> BackendError {
    if e.is_timeout() {
        BackendError::Timeout(timeout)
    } else {
        BackendError::Transport(e.to_string())
    }
}

fn attachment_url(
    resolver: &MediaResolver,
    item: &MediaItem,
    inline: bool,
    mime: &str,
) -> Result<String, BackendError> {
    let path = resolver.resolve(&item.uri);
    if inline {
        let bytes =
            std::fs::read(&path).map_err(|e| BackendError::Media(format!("{}: {e}", path.display())))?;
        let b64 = base64::engine::general_purpose::STANDARD.encode(bytes);
        Ok(format!("data:{mime};base64,{b64}"))
    } else {
        let abs = std::path::absolute(&path).unwrap_or(path);
        Ok(format!("file://{}", abs.display()))
    }
}

/// Chat-completions client for text and multimodal agents.
pub struct HttpAgent {
    client: Client,
    address: String,
    api_key: Option<String>,
    inline_media: bool,
    resolver: MediaResolver,
    seed: Option<u64>,
    timeout: Duration,
}

impl HttpAgent {
    pub fn text(
        endpoint: &TextAgentEndpoint,
        api_key: Option<String>,
        seed: Option<u64>,
    ) -> Result<Self, BackendError> {
        Ok(Self {
            client: build_client(endpoint.timeout())?,
            address: endpoint.address.clone(),
            api_key,
            inline_media: false,
            resolver: MediaResolver::default(),
            seed,
            timeout: endpoint.timeout(),
        })
    }

    pub fn omni(
        endpoint: &OmniAgentEndpoint,
        resolver: MediaResolver,
        api_key: Option<String>,
        seed: Option<u64>,
    ) -> Result<Self, BackendError> {
        Ok(Self {
            inline_media: endpoint.inline_media,
            resolver,
            ..Self::text(&endpoint.text, api_key, seed)?
        })
    }

    /// The JSON body sent for `request`.
    pub fn body(&self, request: &AgentRequest) -> Result<Value, BackendError> {
        let mut content = vec![json!({"type": "text", "text": request.prompt})];
        for item in &request.media {
            content.push(self.part(item)?);
        }
        let mut body = Map::new();
        body.insert("model".into(), Value::String(request.model.clone()));
        body.insert("messages".into(), json!([{ "role": "user", "content": content }]));
        for (k, v) in &request.params {
            body.insert(k.clone(), v.clone());
        }
        if let Some(seed) = self.seed {
            body.entry("seed").or_insert(json!(seed));
        }
        Ok(Value::Object(body))
    }

    fn part(&self, item: &MediaItem) -> Result<Value, BackendError> {
        Ok(match item.kind {
            MediaKind::Frame | MediaKind::Overlay => json!({
                "type": "image_url",
                "image_url": { "url": attachment_url(&self.resolver, item, self.inline_media, "image/png")? },
            }),
            MediaKind::Audio if self.inline_media => {
                let url = attachment_url(&self.resolver, item, true, "audio/wav")?;
                let data = url.split_once(',').map(|(_, d)| d).unwrap_or_default();
                json!({ "type": "input_audio", "input_audio": { "data": data, "format": "wav" } })
            }
            MediaKind::Audio => json!({
                "type": "audio_url",
                "audio_url": { "url": attachment_url(&self.resolver, item, false, "audio/wav")? },
            }),
            MediaKind::Mask => json!({
                "type": "text",
                "text": format!("mask for frame {}: {}", item.index.unwrap_or(0), item.uri),
            }),
        })
    }
}

/// Extracts the assistant text from a chat-completions response.
pub fn response_text(response: &Value) -> Result<String, BackendError> {
    let content = response
        .pointer("/choices/0/message/content")
        .ok_or_else(|| BackendError::Transport("response has no choices[0].message".into()))?;
    match content {
        Value::String(s) => Ok(s.clone()),
        Value::Array(parts) => Ok(parts
            .iter()
            .filter_map(|p| p.get("text").and_then(Value::as_str))
            .collect::<Vec<_>>()
            .join("")),
        other => Err(BackendError::Transport(format!(
            "unexpected message content {other}"
        ))),
    }
}

impl AgentBackend for HttpAgent {
    fn complete(&self, request: &AgentRequest, _attempt: u32) -> Result<String, BackendError> {
        let body = self.body(request)?;
        let mut req = self
            .client
            .post(&self.address)
            .header("X-Agent-Role", &request.role)
            .json(&body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| map_err(e, self.timeout))?;
        let status = resp.status();
        if !status.is_success() {
            let text = resp.text().unwrap_or_default();
            return Err(BackendError::Transport(format!("HTTP {status}: {text}")));
        }
        let value: Value = resp.json().map_err(|e| map_err(e, self.timeout))?;
        response_text(&value)
    }
}

/// Client for a promptable video segmentation server.
pub struct HttpSegmenter {
    client: Client,
    address: String,
    api_key: Option<String>,
    inline_media: bool,
    resolver: MediaResolver,
    timeout: Duration,
}

impl HttpSegmenter {
    pub fn new(
        endpoint: &SegmentEndpoint,
        resolver: MediaResolver,
        api_key: Option<String>,
    ) -> Result<Self, BackendError> {
        let timeout = Duration::from_secs_f64(endpoint.timeout_secs);
        Ok(Self {
            client: build_client(timeout)?,
            address: endpoint.address.clone(),
            api_key,
            inline_media: endpoint.inline_media,
            resolver,
            timeout,
        })
    }

    pub fn body(&self, request: &SegmentRequest) -> Result<Value, BackendError> {
        let frames = request
            .frames
            .iter()
            .map(|f| attachment_url(&self.resolver, f, self.inline_media, "image/png"))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(json!({
            "clip_id": request.clip_id,
            "model": request.model,
            "prompt": request.prompt,
            "frames": frames,
            "height": request.height,
            "width": request.width,
        }))
    }
}

impl SegmentBackend for HttpSegmenter {
    fn segment(&self, request: &SegmentRequest, _attempt: u32) -> Result<RleSequence, BackendError> {
        let mut req = self.client.post(&self.address).json(&self.body(request)?);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| map_err(e, self.timeout))?;
        let status = resp.status();
        if !status.is_success() {
            let text = resp.text().unwrap_or_default();
            return Err(BackendError::Transport(format!("HTTP {status}: {text}")));
        }
        let value: Value = resp.json().map_err(|e| map_err(e, self.timeout))?;
        let masks = value.get("masks").cloned().unwrap_or(value);
        serde_json::from_value(masks).map_err(|e| BackendError::Shape(e.to_string()))
    }
}
