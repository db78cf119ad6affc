//! Shared domain types: modalities, difficulty levels, verdicts, candidate
//! lists, reasoning results and media bundles.
//!
//! Every type here is an immutable value object. Constructors validate the
//! invariants so that an invalid state (for example a verdict whose
//! difficulty disagrees with its modality roles) cannot be built.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::schema::ParseError;

/// A cue modality. The reference expression itself is the query, not a cue.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Audio,
    Visual,
}

impl Modality {
    pub const ALL: [Modality; 2] = [Modality::Audio, Modality::Visual];

    pub fn as_str(self) -> &'static str {
        match self {
            Modality::Audio => "audio",
            Modality::Visual => "visual",
        }
    }

    pub fn other(self) -> Modality {
        match self {
            Modality::Audio => Modality::Visual,
            Modality::Visual => Modality::Audio,
        }
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Modality {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "audio" => Ok(Modality::Audio),
            "visual" => Ok(Modality::Visual),
            other => Err(ParseError::UnknownToken {
                field: "modality",
                token: other.to_string(),
            }),
        }
    }
}

/// Expression difficulty, totally ordered `Low < Moderate < High`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Difficulty {
    Low,
    Moderate,
    High,
}

impl Difficulty {
    pub const ALL: [Difficulty; 3] = [Difficulty::Low, Difficulty::Moderate, Difficulty::High];

    pub fn as_str(self) -> &'static str {
        match self {
            Difficulty::Low => "low",
            Difficulty::Moderate => "moderate",
            Difficulty::High => "high",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Difficulty::Low => "Low",
            Difficulty::Moderate => "Moderate",
            Difficulty::High => "High",
        }
    }
}

impl fmt::Display for Difficulty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Difficulty {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "low" => Ok(Difficulty::Low),
            "moderate" | "medium" => Ok(Difficulty::Moderate),
            "high" => Ok(Difficulty::High),
            other => Err(ParseError::UnknownToken {
                field: "difficulty",
                token: other.to_string(),
            }),
        }
    }
}

/// Dominant and auxiliary modality sets.
///
/// Invariants: `dominant` is non-empty, the two sets are disjoint, and when
/// both modalities are dominant the auxiliary set is empty. With only two
/// modalities this leaves exactly five valid values, enumerated by
/// [`ModalityRole::all`].
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct ModalityRole {
    dominant: BTreeSet<Modality>,
    auxiliary: BTreeSet<Modality>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RoleError {
    #[error("dominant modality set is empty")]
    NoDominant,
    #[error("modality {0} is both dominant and auxiliary")]
    Overlap(Modality),
}

impl ModalityRole {
    pub fn new(
        dominant: impl IntoIterator<Item = Modality>,
        auxiliary: impl IntoIterator<Item = Modality>,
    ) -> Result<Self, RoleError> {
        let dominant: BTreeSet<_> = dominant.into_iter().collect();
        let auxiliary: BTreeSet<_> = auxiliary.into_iter().collect();
        if dominant.is_empty() {
            return Err(RoleError::NoDominant);
        }
        if let Some(m) = dominant.intersection(&auxiliary).next() {
            return Err(RoleError::Overlap(*m));
        }
        Ok(Self { dominant, auxiliary })
    }

    pub fn single(m: Modality) -> Self {
        Self::new([m], []).expect("single dominant modality is valid")
    }

    pub fn with_auxiliary(dominant: Modality) -> Self {
        Self::new([dominant], [dominant.other()]).expect("distinct modalities are valid")
    }

    pub fn both() -> Self {
        Self::new(Modality::ALL, []).expect("both dominant is valid")
    }

    /// The five valid configurations in a fixed order.
    pub fn all() -> [ModalityRole; 5] {
        [
            Self::single(Modality::Audio),
            Self::single(Modality::Visual),
            Self::with_auxiliary(Modality::Audio),
            Self::with_auxiliary(Modality::Visual),
            Self::both(),
        ]
    }

    pub fn dominant(&self) -> &BTreeSet<Modality> {
        &self.dominant
    }

    pub fn auxiliary(&self) -> &BTreeSet<Modality> {
        &self.auxiliary
    }

    /// The lone dominant modality, if exactly one is dominant.
    pub fn sole_dominant(&self) -> Option<Modality> {
        if self.dominant.len() == 1 {
            self.dominant.iter().next().copied()
        } else {
            None
        }
    }

    /// Stable label of the role configuration used in proportion reports.
    pub fn category(&self) -> RoleCategory {
        match (self.sole_dominant(), self.auxiliary.is_empty()) {
            (None, _) => RoleCategory::AudioVisual,
            (Some(Modality::Audio), true) => RoleCategory::Audio,
            (Some(Modality::Visual), true) => RoleCategory::Visual,
            (Some(Modality::Audio), false) => RoleCategory::AudioDomVisualAux,
            (Some(Modality::Visual), false) => RoleCategory::VisualDomAudioAux,
        }
    }
}

impl<'de> Deserialize<'de> for ModalityRole {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            dominant: Vec<Modality>,
            #[serde(default)]
            auxiliary: Vec<Modality>,
        }
        let raw = Raw::deserialize(d)?;
        ModalityRole::new(raw.dominant, raw.auxiliary).map_err(serde::de::Error::custom)
    }
}

/// The five modality-role categories, in reporting order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum RoleCategory {
    #[serde(rename = "Audio+Visual")]
    AudioVisual,
    #[serde(rename = "Visual")]
    Visual,
    #[serde(rename = "Audio")]
    Audio,
    #[serde(rename = "Audio dom + Visual aux")]
    AudioDomVisualAux,
    #[serde(rename = "Visual dom + Audio aux")]
    VisualDomAudioAux,
}

impl RoleCategory {
    pub const ALL: [RoleCategory; 5] = [
        RoleCategory::AudioVisual,
        RoleCategory::Visual,
        RoleCategory::Audio,
        RoleCategory::AudioDomVisualAux,
        RoleCategory::VisualDomAudioAux,
    ];

    pub fn label(self) -> &'static str {
        match self {
            RoleCategory::AudioVisual => "Audio+Visual",
            RoleCategory::Visual => "Visual",
            RoleCategory::Audio => "Audio",
            RoleCategory::AudioDomVisualAux => "Audio dom + Visual aux",
            RoleCategory::VisualDomAudioAux => "Visual dom + Audio aux",
        }
    }
}

/// The modality-dominant difficulty rule.
///
/// One dominant modality and nothing auxiliary is `Low`; one dominant plus
/// the other as auxiliary is `Moderate`; both dominant is `High`.
pub fn classify_difficulty(roles: &ModalityRole) -> Difficulty {
    match (roles.dominant.len(), roles.auxiliary.len()) {
        (1, 0) => Difficulty::Low,
        (1, _) => Difficulty::Moderate,
        _ => Difficulty::High,
    }
}

/// One agent's judgment (or the consensus judgment) about an expression.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AnalysisVerdict {
    difficulty: Difficulty,
    roles: ModalityRole,
    reason: String,
    author: String,
}

impl AnalysisVerdict {
    /// Builds a verdict whose difficulty is derived from `roles`.
    pub fn new(
        roles: ModalityRole,
        reason: impl Into<String>,
        author: impl Into<String>,
    ) -> Result<Self, ParseError> {
        let reason = reason.into().trim().to_string();
        if reason.is_empty() {
            return Err(ParseError::MissingField("reason"));
        }
        Ok(Self {
            difficulty: classify_difficulty(&roles),
            roles,
            reason,
            author: author.into(),
        })
    }

    /// Builds a verdict from a declared difficulty, rejecting declarations
    /// that disagree with the difficulty rule.
    pub fn declared(
        difficulty: Difficulty,
        roles: ModalityRole,
        reason: impl Into<String>,
        author: impl Into<String>,
    ) -> Result<Self, ParseError> {
        let derived = classify_difficulty(&roles);
        if derived != difficulty {
            return Err(ParseError::RuleInconsistency {
                declared: difficulty,
                derived,
            });
        }
        Self::new(roles, reason, author)
    }

    pub fn difficulty(&self) -> Difficulty {
        self.difficulty
    }

    pub fn roles(&self) -> &ModalityRole {
        &self.roles
    }

    pub fn reason(&self) -> &str {
        &self.reason
    }

    pub fn author(&self) -> &str {
        &self.author
    }

    /// Same judgment regardless of who made it or why.
    pub fn agrees_with(&self, other: &AnalysisVerdict) -> bool {
        self.roles == other.roles
    }

    pub fn with_author(&self, author: impl Into<String>) -> Self {
        Self {
            author: author.into(),
            ..self.clone()
        }
    }
}

impl<'de> Deserialize<'de> for AnalysisVerdict {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            difficulty: Difficulty,
            roles: ModalityRole,
            reason: String,
            author: String,
        }
        let raw = Raw::deserialize(d)?;
        AnalysisVerdict::declared(raw.difficulty, raw.roles, raw.reason, raw.author)
            .map_err(serde::de::Error::custom)
    }
}

/// Candidate objects proposed by an auxiliary agent.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateList {
    candidates: Vec<String>,
    reason: String,
    source_modality: Modality,
}

impl CandidateList {
    /// Trims phrases, drops empty ones and removes case-insensitive
    /// duplicates, keeping the first occurrence.
    pub fn new(
        candidates: impl IntoIterator<Item = String>,
        reason: impl Into<String>,
        source_modality: Modality,
    ) -> Self {
        let mut seen = BTreeSet::new();
        let candidates = candidates
            .into_iter()
            .map(|c| c.trim().to_string())
            .filter(|c| !c.is_empty())
            .filter(|c| seen.insert(c.to_lowercase()))
            .collect();
        Self {
            candidates,
            reason: reason.into(),
            source_modality,
        }
    }

    pub fn candidates(&self) -> &[String] {
        &self.candidates
    }

    pub fn reason(&self) -> &str {
        &self.reason
    }

    pub fn source_modality(&self) -> Modality {
        self.source_modality
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ReasoningError {
    #[error("referred object is empty")]
    EmptyObject,
    #[error("{path} path expects {expected} auxiliary inputs, got {actual}")]
    AuxiliaryCount {
        path: Difficulty,
        expected: usize,
        actual: usize,
    },
    #[error("high path auxiliary inputs must come from distinct modalities")]
    DuplicateSource,
}

/// The initially referred object produced by collaborative reasoning.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReasoningResult {
    referred_object: String,
    reason: String,
    path: Difficulty,
    auxiliary_inputs: Vec<CandidateList>,
}

impl ReasoningResult {
    pub fn new(
        referred_object: impl Into<String>,
        reason: impl Into<String>,
        path: Difficulty,
        auxiliary_inputs: Vec<CandidateList>,
    ) -> Result<Self, ReasoningError> {
        let referred_object = referred_object.into().trim().to_string();
        if referred_object.is_empty() {
            return Err(ReasoningError::EmptyObject);
        }
        let expected = match path {
            Difficulty::Low => 0,
            Difficulty::Moderate => 1,
            Difficulty::High => 2,
        };
        if auxiliary_inputs.len() != expected {
            return Err(ReasoningError::AuxiliaryCount {
                path,
                expected,
                actual: auxiliary_inputs.len(),
            });
        }
        if path == Difficulty::High
            && auxiliary_inputs[0].source_modality == auxiliary_inputs[1].source_modality
        {
            return Err(ReasoningError::DuplicateSource);
        }
        Ok(Self {
            referred_object,
            reason: reason.into(),
            path,
            auxiliary_inputs,
        })
    }

    pub fn referred_object(&self) -> &str {
        &self.referred_object
    }

    pub fn reason(&self) -> &str {
        &self.reason
    }

    pub fn path(&self) -> Difficulty {
        self.path
    }

    pub fn auxiliary_inputs(&self) -> &[CandidateList] {
        &self.auxiliary_inputs
    }
}

/// Evaluation partition of a clip.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Subset {
    Seen,
    Unseen,
    Null,
    Train,
    Val,
}

impl Subset {
    pub fn as_str(self) -> &'static str {
        match self {
            Subset::Seen => "seen",
            Subset::Unseen => "unseen",
            Subset::Null => "null",
            Subset::Train => "train",
            Subset::Val => "val",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Subset::Seen => "Seen",
            Subset::Unseen => "Unseen",
            Subset::Null => "Null",
            Subset::Train => "Train",
            Subset::Val => "Val",
        }
    }

    pub const ALL: [Subset; 5] = [
        Subset::Seen,
        Subset::Unseen,
        Subset::Null,
        Subset::Train,
        Subset::Val,
    ];

    /// Whether clips of this subset carry scoreable ground truth.
    pub fn is_scored(self) -> bool {
        !matches!(self, Subset::Null)
    }
}

impl fmt::Display for Subset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Subset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "seen" => Ok(Subset::Seen),
            "unseen" => Ok(Subset::Unseen),
            "null" => Ok(Subset::Null),
            "train" => Ok(Subset::Train),
            "val" => Ok(Subset::Val),
            other => Err(format!("unknown subset {other:?}")),
        }
    }
}

/// A sampled video frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameRef {
    pub index: usize,
    /// Presentation time in seconds.
    pub time: f64,
    /// Media URI, see [`crate::media`].
    pub uri: String,
}

/// The clip's audio stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AudioRef {
    pub uri: String,
    pub sample_rate: u32,
    pub samples: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BundleError {
    #[error("clip {0} has no frames")]
    NoFrames(String),
    #[error("clip {0} has zero-sized frames")]
    ZeroSize(String),
}

/// Sampled media and the reference expression for one clip.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MediaBundle {
    clip_id: String,
    expression: String,
    frames: Vec<FrameRef>,
    height: usize,
    width: usize,
    audio: AudioRef,
    subset: Subset,
}

impl MediaBundle {
    /// All frames share `(height, width)`; callers that decode frames are
    /// responsible for checking each one against these dimensions.
    pub fn new(
        clip_id: impl Into<String>,
        expression: impl Into<String>,
        frames: Vec<FrameRef>,
        (height, width): (usize, usize),
        audio: AudioRef,
        subset: Subset,
    ) -> Result<Self, BundleError> {
        let clip_id = clip_id.into();
        if frames.is_empty() {
            return Err(BundleError::NoFrames(clip_id));
        }
        if height == 0 || width == 0 {
            return Err(BundleError::ZeroSize(clip_id));
        }
        Ok(Self {
            clip_id,
            expression: expression.into(),
            frames,
            height,
            width,
            audio,
            subset,
        })
    }

    pub fn clip_id(&self) -> &str {
        &self.clip_id
    }

    pub fn expression(&self) -> &str {
        &self.expression
    }

    pub fn frames(&self) -> &[FrameRef] {
        &self.frames
    }

    pub fn frame_count(&self) -> usize {
        self.frames.len()
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn audio(&self) -> &AudioRef {
        &self.audio
    }

    pub fn subset(&self) -> Subset {
        self.subset
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn difficulty_rule_table() {
        use Modality::*;
        let table = [
            (ModalityRole::single(Visual), Difficulty::Low),
            (ModalityRole::single(Audio), Difficulty::Low),
            (ModalityRole::with_auxiliary(Audio), Difficulty::Moderate),
            (ModalityRole::with_auxiliary(Visual), Difficulty::Moderate),
            (ModalityRole::both(), Difficulty::High),
        ];
        for (roles, want) in table {
            assert_eq!(classify_difficulty(&roles), want, "{roles:?}");
        }
    }

    #[test]
    fn invalid_roles_are_unconstructible() {
        assert_eq!(
            ModalityRole::new([], [Modality::Audio]),
            Err(RoleError::NoDominant)
        );
        assert_eq!(
            ModalityRole::new([Modality::Audio], [Modality::Audio]),
            Err(RoleError::Overlap(Modality::Audio))
        );
        // both dominant leaves nothing to be auxiliary
        assert!(ModalityRole::new(Modality::ALL, [Modality::Visual]).is_err());
    }

    #[test]
    fn all_roles_are_distinct_and_cover_every_valid_subset_pair() {
        let mut valid = Vec::new();
        let subsets: [&[Modality]; 4] = [
            &[],
            &[Modality::Audio],
            &[Modality::Visual],
            &[Modality::Audio, Modality::Visual],
        ];
        for d in subsets {
            for a in subsets {
                if let Ok(r) = ModalityRole::new(d.iter().copied(), a.iter().copied()) {
                    valid.push(r);
                }
            }
        }
        assert_eq!(valid.len(), 5);
        for r in ModalityRole::all() {
            assert!(valid.contains(&r));
        }
    }

    #[test]
    fn difficulty_order() {
        assert!(Difficulty::Low < Difficulty::Moderate);
        assert!(Difficulty::Moderate < Difficulty::High);
    }

    #[test]
    fn declared_difficulty_must_match_rule() {
        let err = AnalysisVerdict::declared(Difficulty::Low, ModalityRole::both(), "x", "a");
        assert!(matches!(err, Err(ParseError::RuleInconsistency { .. })));
    }

    #[test]
    fn verdict_deserialization_rechecks_rule() {
        let bad = r#"{"difficulty":"low","roles":{"dominant":["audio","visual"],"auxiliary":[]},"reason":"r","author":"a"}"#;
        assert!(serde_json::from_str::<AnalysisVerdict>(bad).is_err());
    }

    #[test]
    fn candidate_dedup_is_case_insensitive_first_wins() {
        let c = CandidateList::new(
            [
                "Dog".into(),
                "dog".into(),
                " cat ".into(),
                "".into(),
                "DOG".into(),
            ],
            "r",
            Modality::Visual,
        );
        assert_eq!(c.candidates(), ["Dog", "cat"]);
    }

    #[test]
    fn reasoning_result_enforces_path_shape() {
        let a = CandidateList::new(["x".to_string()], "", Modality::Audio);
        let v = CandidateList::new(["y".to_string()], "", Modality::Visual);
        assert!(ReasoningResult::new("dog", "", Difficulty::Low, vec![]).is_ok());
        assert!(ReasoningResult::new("dog", "", Difficulty::Low, vec![a.clone()]).is_err());
        assert!(ReasoningResult::new("dog", "", Difficulty::Moderate, vec![a.clone()]).is_ok());
        assert_eq!(
            ReasoningResult::new("dog", "", Difficulty::High, vec![a.clone(), a.clone()]),
            Err(ReasoningError::DuplicateSource)
        );
        assert!(ReasoningResult::new("dog", "", Difficulty::High, vec![a, v]).is_ok());
        assert_eq!(
            ReasoningResult::new("  ", "", Difficulty::Low, vec![]),
            Err(ReasoningError::EmptyObject)
        );
    }

    #[test]
    fn bundle_requires_frames() {
        let audio = AudioRef {
            uri: "dataset://a.wav".into(),
            sample_rate: 22050,
            samples: 0,
        };
        let err = MediaBundle::new("c", "e", vec![], (4, 4), audio, Subset::Seen);
        assert_eq!(err, Err(BundleError::NoFrames("c".into())));
    }
}
