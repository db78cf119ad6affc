//! Execution traces: one ordered record per backend call, persisted as an
//! append-only JSON-lines file per clip.
//!
//! File layout: a `begin` line, one `call` line per record, and a closing
//! `end` line carrying the clip status. A file without an `end` line belongs
//! to an interrupted run.

use std::fmt;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Phase {
    #[serde(rename = "CMR-independent")]
    CmrIndependent,
    #[serde(rename = "CMR-peer")]
    CmrPeer,
    #[serde(rename = "CMR-final")]
    CmrFinal,
    #[serde(rename = "COR-auxiliary")]
    CorAuxiliary,
    #[serde(rename = "COR-dominant")]
    CorDominant,
    #[serde(rename = "RLS-segment")]
    RlsSegment,
    #[serde(rename = "RLS-check")]
    RlsCheck,
}

impl Phase {
    pub const ALL: [Phase; 7] = [
        Phase::CmrIndependent,
        Phase::CmrPeer,
        Phase::CmrFinal,
        Phase::CorAuxiliary,
        Phase::CorDominant,
        Phase::RlsSegment,
        Phase::RlsCheck,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Phase::CmrIndependent => "CMR-independent",
            Phase::CmrPeer => "CMR-peer",
            Phase::CmrFinal => "CMR-final",
            Phase::CorAuxiliary => "COR-auxiliary",
            Phase::CorDominant => "COR-dominant",
            Phase::RlsSegment => "RLS-segment",
            Phase::RlsCheck => "RLS-check",
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// What came back from one attempt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CallOutcome {
    Parsed(Value),
    ParseError(String),
    TransportError(String),
}

impl CallOutcome {
    pub fn is_parsed(&self) -> bool {
        matches!(self, CallOutcome::Parsed(_))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentCallRecord {
    /// Emission index within the clip trace, assigned on append.
    pub index: usize,
    pub role: String,
    pub phase: Phase,
    /// Peer round (1-based) or reflection iteration (0-based), where relevant.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step: Option<u32>,
    pub attempt: u32,
    pub input_digest: String,
    pub raw_output: String,
    pub outcome: CallOutcome,
    pub wall_ms: u64,
}

/// SHA-256 hex digest of a value's canonical JSON form.
pub fn digest_json<T: Serialize>(value: &T) -> String {
    let bytes = serde_json::to_vec(value).expect("request types serialize");
    hex::encode(Sha256::digest(&bytes))
}

pub fn digest_bytes(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Ordered records for one clip.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ExecutionTrace {
    pub clip_id: String,
    pub records: Vec<AgentCallRecord>,
}

impl ExecutionTrace {
    pub fn new(clip_id: impl Into<String>) -> Self {
        Self {
            clip_id: clip_id.into(),
            records: Vec::new(),
        }
    }

    pub fn push(&mut self, mut record: AgentCallRecord) {
        record.index = self.records.len();
        self.records.push(record);
    }

    /// Appends records produced on a side branch, re-indexing them.
    pub fn append(&mut self, branch: ExecutionTrace) {
        for r in branch.records {
            self.push(r);
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn in_phase(&self, phase: Phase) -> impl Iterator<Item = &AgentCallRecord> {
        self.records.iter().filter(move |r| r.phase == phase)
    }

    pub fn count_phase(&self, phase: Phase) -> usize {
        self.in_phase(phase).count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TraceLine {
    Begin { clip_id: String },
    Call(AgentCallRecord),
    End(ClipEnd),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClipEnd {
    pub status: ClipStatusKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClipStatusKind {
    Done,
    Failed,
}

/// Append-only writer for one clip's trace file.
pub struct TraceWriter {
    file: File,
    written: usize,
}

impl TraceWriter {
    /// Creates (truncating) the file and writes the `begin` line.
    pub fn create(path: &Path, clip_id: &str) -> std::io::Result<Self> {
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        let file = OpenOptions::new()
            .create(true)
            .write(true)
            .truncate(true)
            .open(path)?;
        let mut w = Self { file, written: 0 };
        w.line(&TraceLine::Begin {
            clip_id: clip_id.to_string(),
        })?;
        Ok(w)
    }

    fn line(&mut self, line: &TraceLine) -> std::io::Result<()> {
        let mut bytes = serde_json::to_vec(line).map_err(std::io::Error::other)?;
        bytes.push(b'\n');
        self.file.write_all(&bytes)?;
        self.file.flush()
    }

    /// Writes any records of `trace` not yet persisted.
    pub fn sync(&mut self, trace: &ExecutionTrace) -> std::io::Result<()> {
        for r in &trace.records[self.written..] {
            self.line(&TraceLine::Call(r.clone()))?;
        }
        self.written = trace.records.len();
        Ok(())
    }

    pub fn finish(mut self, trace: &ExecutionTrace, end: ClipEnd) -> std::io::Result<()> {
        self.sync(trace)?;
        self.line(&TraceLine::End(end))?;
        self.file.sync_all()
    }
}

/// A trace read back from disk.
#[derive(Debug, Clone, PartialEq)]
pub struct StoredTrace {
    pub trace: ExecutionTrace,
    pub end: Option<ClipEnd>,
}

impl StoredTrace {
    pub fn is_complete(&self) -> bool {
        matches!(
            self.end,
            Some(ClipEnd {
                status: ClipStatusKind::Done,
                ..
            })
        )
    }
}

pub fn read_trace(path: &Path) -> std::io::Result<StoredTrace> {
    let reader = BufReader::new(File::open(path)?);
    let mut trace = ExecutionTrace::default();
    let mut end = None;
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        // a torn final line from a crash reads as incomplete
        let Ok(parsed) = serde_json::from_str::<TraceLine>(&line) else {
            end = None;
            break;
        };
        match parsed {
            TraceLine::Begin { clip_id } => trace.clip_id = clip_id,
            TraceLine::Call(r) => trace.records.push(r),
            TraceLine::End(e) => end = Some(e),
        }
    }
    Ok(StoredTrace { trace, end })
}

/// The trace file's lines with timing fields removed, for replay comparison.
pub fn timing_free_lines(path: &Path) -> std::io::Result<Vec<String>> {
    let text = fs::read_to_string(path)?;
    Ok(text
        .lines()
        .map(|l| match serde_json::from_str::<Value>(l) {
            Ok(Value::Object(mut m)) => {
                m.remove("wall_ms");
                Value::Object(m).to_string()
            }
            _ => l.to_string(),
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(phase: Phase) -> AgentCallRecord {
        AgentCallRecord {
            index: 99,
            role: "r".into(),
            phase,
            step: None,
            attempt: 0,
            input_digest: digest_bytes(b"x"),
            raw_output: "out".into(),
            outcome: CallOutcome::Parsed(serde_json::json!({"a": 1})),
            wall_ms: 3,
        }
    }

    #[test]
    fn push_assigns_emission_index() {
        let mut t = ExecutionTrace::new("c");
        t.push(record(Phase::CmrIndependent));
        let mut branch = ExecutionTrace::new("c");
        branch.push(record(Phase::CmrPeer));
        branch.push(record(Phase::CmrPeer));
        t.append(branch);
        let idx: Vec<_> = t.records.iter().map(|r| r.index).collect();
        assert_eq!(idx, [0, 1, 2]);
        assert_eq!(t.count_phase(Phase::CmrPeer), 2);
    }

    #[test]
    fn file_round_trip_and_completion() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.jsonl");
        let mut t = ExecutionTrace::new("clip");
        t.push(record(Phase::RlsCheck));
        let mut w = TraceWriter::create(&path, "clip").unwrap();
        w.sync(&t).unwrap();
        assert!(!read_trace(&path).unwrap().is_complete());
        t.push(record(Phase::RlsSegment));
        w.finish(
            &t,
            ClipEnd {
                status: ClipStatusKind::Done,
                error: None,
            },
        )
        .unwrap();
        let back = read_trace(&path).unwrap();
        assert!(back.is_complete());
        assert_eq!(back.trace, t);
        assert!(timing_free_lines(&path)
            .unwrap()
            .iter()
            .all(|l| !l.contains("wall_ms")));
    }

    #[test]
    fn phase_labels_serialize_as_documented() {
        assert_eq!(
            serde_json::to_string(&Phase::CmrIndependent).unwrap(),
            "\"CMR-independent\""
        );
        assert_eq!(Phase::RlsCheck.to_string(), "RLS-check");
    }
}
