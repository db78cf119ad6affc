//! Run configuration, loaded from TOML.
//!
//! ```toml
//! [dataset]
//! root = "data"          # relative paths resolve against the config file
//! split = "test"
//! subsets = ["seen", "unseen"]   # empty: every clip
//! fps = 1.0
//! audio_rate = 22050
//!
//! [pipeline]
//! peer_rounds = 1
//! max_reflect = 2
//! keep_policy = "final"          # or "best_by_check"
//! fail_soft = false
//! fast_path = false
//! parallelism = 1
//! seed = 7                       # forwarded to live backends
//!
//! [metrics]
//! f_mode = "boundary"            # or "region"
//! tolerance = 3                  # pixels; default 1% of the diagonal
//!
//! [output]
//! dir = "runs/test"
//!
//! [prompts]
//! dir = "my-templates"           # optional per-file overrides
//!
//! [overlay]
//! mode = "render"                # or "inline"
//! alpha = 0.5
//! color = [255, 0, 0]
//!
//! [backends]
//! mock_script = "mock.json"      # scripted agents; omit for live endpoints
//! api_key_env = "RAVS_API_KEY"
//! [[backends.panel]]
//! role = "mca-1"
//! address = "http://localhost:8000/v1/chat/completions"
//! model = "some-model"
//! ```
//!
//! The remaining endpoints are `backends.final`, `backends.visual`,
//! `backends.audio`, `backends.audiovisual`, `backends.check` and
//! `backends.segment`; each has a default role name.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::backends::scripted::{MockScript, MockScriptError};
use crate::backends::{EndpointError, OmniAgentEndpoint, SegmentEndpoint, TextAgentEndpoint};
use crate::dataset::{DEFAULT_AUDIO_RATE, DEFAULT_FPS};
use crate::metrics::MetricsConfig;
use crate::model::Subset;
use crate::overlay::OverlayStyle;
use crate::prompts::{DifficultyRules, PromptError, PromptRegistry};
use crate::reflect::KeepPolicy;
use crate::trace::digest_bytes;

pub const SNAPSHOT_FILE: &str = "config.snapshot.toml";

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid config {path}: {source}")]
    Parse {
        path: String,
        #[source]
        source: Box<toml::de::Error>,
    },
    #[error("invalid setting {key}: {reason}")]
    Invalid { key: String, reason: String },
    #[error(transparent)]
    Endpoint(#[from] EndpointError),
    #[error(transparent)]
    MockScript(#[from] MockScriptError),
    #[error("mock script has no behaviour for role {0}")]
    MissingMockRole(String),
    #[error(transparent)]
    Prompt(#[from] PromptError),
}

fn invalid(key: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        key: key.into(),
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSection {
    pub root: PathBuf,
    #[serde(default = "default_split")]
    pub split: String,
    #[serde(default)]
    pub subsets: Vec<Subset>,
    #[serde(default = "default_fps")]
    pub fps: f64,
    #[serde(default = "default_audio_rate")]
    pub audio_rate: u32,
}

fn default_split() -> String {
    "test".into()
}

fn default_fps() -> f64 {
    DEFAULT_FPS
}

fn default_audio_rate() -> u32 {
    DEFAULT_AUDIO_RATE
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineSection {
    pub peer_rounds: u32,
    pub max_reflect: u32,
    pub keep_policy: KeepPolicy,
    pub fail_soft: bool,
    pub fast_path: bool,
    /// Clips processed at once.
    pub parallelism: usize,
    /// Issue the panel and auxiliary calls of one clip concurrently.
    pub concurrent_calls: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl Default for PipelineSection {
    fn default() -> Self {
        Self {
            peer_rounds: 1,
            max_reflect: 2,
            keep_policy: KeepPolicy::Final,
            fail_soft: false,
            fast_path: false,
            parallelism: 1,
            concurrent_calls: true,
            seed: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "default_out")]
    pub dir: PathBuf,
}

fn default_out() -> PathBuf {
    PathBuf::from("runs/latest")
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: default_out() }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PromptsSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
    pub rules: DifficultyRules,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OverlayMode {
    #[default]
    Render,
    Inline,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OverlaySection {
    pub mode: OverlayMode,
    #[serde(flatten)]
    pub style: OverlayStyle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendsSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mock_script: Option<PathBuf>,
    /// Environment variable holding the bearer token for live endpoints.
    pub api_key_env: String,
    pub panel: [TextAgentEndpoint; 3],
    #[serde(rename = "final")]
    pub final_agent: TextAgentEndpoint,
    pub visual: OmniAgentEndpoint,
    pub audio: OmniAgentEndpoint,
    pub audiovisual: OmniAgentEndpoint,
    pub check: OmniAgentEndpoint,
    pub segment: SegmentEndpoint,
}

impl Default for BackendsSection {
    fn default() -> Self {
        let mut visual = OmniAgentEndpoint::new("visual");
        visual.accepts_audio = false;
        let mut audio = OmniAgentEndpoint::new("audio");
        audio.accepts_frames = false;
        Self {
            mock_script: None,
            api_key_env: "RAVS_API_KEY".into(),
            panel: [
                TextAgentEndpoint::new("mca-1"),
                TextAgentEndpoint::new("mca-2"),
                TextAgentEndpoint::new("mca-3"),
            ],
            final_agent: TextAgentEndpoint::new("mca-final"),
            visual,
            audio,
            audiovisual: OmniAgentEndpoint::new("audiovisual"),
            check: OmniAgentEndpoint::new("check"),
            segment: SegmentEndpoint::default(),
        }
    }
}

impl BackendsSection {
    /// Role names of every agent, in configuration order.
    pub fn agent_roles(&self) -> Vec<&str> {
        let mut roles: Vec<&str> = self.panel.iter().map(|e| e.role.as_str()).collect();
        roles.push(&self.final_agent.role);
        roles.extend(
            [&self.visual, &self.audio, &self.audiovisual, &self.check].map(|e| e.text.role.as_str()),
        );
        roles
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: DatasetSection,
    #[serde(default)]
    pub pipeline: PipelineSection,
    #[serde(default)]
    pub metrics: MetricsConfig,
    #[serde(default)]
    pub output: OutputSection,
    #[serde(default)]
    pub prompts: PromptsSection,
    #[serde(default)]
    pub overlay: OverlaySection,
    #[serde(default)]
    pub backends: BackendsSection,
    /// Directory relative paths resolve against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl RunConfig {
    pub fn new(dataset_root: impl Into<PathBuf>, output_dir: impl Into<PathBuf>) -> Self {
        Self {
            dataset: DatasetSection {
                root: dataset_root.into(),
                split: default_split(),
                subsets: Vec::new(),
                fps: DEFAULT_FPS,
                audio_rate: DEFAULT_AUDIO_RATE,
            },
            pipeline: PipelineSection::default(),
            metrics: MetricsConfig::default(),
            output: OutputSection {
                dir: output_dir.into(),
            },
            prompts: PromptsSection::default(),
            overlay: OverlaySection::default(),
            backends: BackendsSection::default(),
            base_dir: PathBuf::from("."),
        }
    }

    pub fn from_toml(text: &str, base_dir: &Path) -> Result<Self, ConfigError> {
        let mut config: RunConfig = toml::from_str(text).map_err(|source| ConfigError::Parse {
            path: base_dir.display().to_string(),
            source: Box::new(source),
        })?;
        config.base_dir = base_dir.to_path_buf();
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let base = if base.as_os_str().is_empty() {
            PathBuf::from(".")
        } else {
            base
        };
        Self::from_toml(&text, &base).map_err(|e| match e {
            ConfigError::Parse { source, .. } => ConfigError::Parse {
                path: path.display().to_string(),
                source,
            },
            e => e,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        fs::write(path, self.to_toml())
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn dataset_root(&self) -> PathBuf {
        self.resolve(&self.dataset.root)
    }

    pub fn output_dir(&self) -> PathBuf {
        self.resolve(&self.output.dir)
    }

    pub fn mock_script_path(&self) -> Option<PathBuf> {
        self.backends.mock_script.as_deref().map(|p| self.resolve(p))
    }

    pub fn prompt_dir(&self) -> Option<PathBuf> {
        self.prompts.dir.as_deref().map(|p| self.resolve(p))
    }

    /// Whether the check agent takes part: with no reflection budget it is
    /// never called and need not be served.
    pub fn uses_check(&self) -> bool {
        self.pipeline.max_reflect > 0
    }

    pub fn prompt_registry(&self) -> Result<PromptRegistry, ConfigError> {
        Ok(PromptRegistry::load(
            self.prompt_dir().as_deref(),
            self.prompts.rules.clone(),
        )?)
    }

    /// Checks everything that can be checked without calling a backend.
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.dataset.fps.is_nan() || self.dataset.fps <= 0.0 {
            return Err(invalid("dataset.fps", "must be positive"));
        }
        if self.dataset.audio_rate == 0 {
            return Err(invalid("dataset.audio_rate", "must be positive"));
        }
        if self.pipeline.peer_rounds == 0 {
            return Err(invalid(
                "pipeline.peer_rounds",
                "at least one peer round is required",
            ));
        }
        if self.pipeline.parallelism == 0 {
            return Err(invalid("pipeline.parallelism", "must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.overlay.style.alpha) {
            return Err(invalid("overlay.alpha", "must lie in [0, 1]"));
        }
        if self.metrics.tolerance == Some(0) {
            return Err(invalid("metrics.tolerance", "must be at least 1 pixel"));
        }
        let b = &self.backends;
        for e in b.panel.iter().chain([&b.final_agent]) {
            e.validate()?;
        }
        for e in [&b.visual, &b.audio, &b.audiovisual, &b.check] {
            e.text.validate()?;
        }
        b.segment.validate()?;
        let roles = b.agent_roles();
        for (i, r) in roles.iter().enumerate() {
            if roles[..i].contains(r) {
                return Err(invalid("backends", format!("role {r} is used twice")));
            }
        }
        match self.mock_script_path() {
            Some(path) => {
                let script = MockScript::load(&path)?;
                let skip_check = !self.uses_check();
                for (i, role) in roles.iter().enumerate() {
                    let is_check = i == roles.len() - 1;
                    if !(is_check && skip_check) && !script.agents.contains_key(*role) {
                        return Err(ConfigError::MissingMockRole(role.to_string()));
                    }
                }
            }
            None => {
                let mut live: Vec<(&str, &str)> = b
                    .panel
                    .iter()
                    .chain([&b.final_agent])
                    .map(|e| (e.role.as_str(), e.address.as_str()))
                    .collect();
                live.extend(
                    [&b.visual, &b.audio, &b.audiovisual]
                        .map(|e| (e.text.role.as_str(), e.text.address.as_str())),
                );
                if self.uses_check() {
                    live.push((&b.check.text.role, &b.check.text.address));
                }
                live.push(("segment", &b.segment.address));
                if let Some((role, _)) = live.iter().find(|(_, a)| a.trim().is_empty()) {
                    return Err(invalid(
                        &format!("backends.{role}"),
                        "no address and no mock script",
                    ));
                }
            }
        }
        self.prompt_registry()?.validate()?;
        Ok(())
    }

    /// Bearer token for live endpoints, when the variable is set.
    pub fn api_key(&self) -> Option<String> {
        std::env::var(&self.backends.api_key_env)
            .ok()
            .filter(|k| !k.is_empty())
    }
}

/// Writes the configuration snapshot into the run directory and returns
/// its hash.
pub fn write_snapshot(config: &RunConfig, run_dir: &Path) -> std::io::Result<String> {
    let text = config.to_toml();
    fs::create_dir_all(run_dir)?;
    fs::write(run_dir.join(SNAPSHOT_FILE), &text)?;
    Ok(digest_bytes(text.as_bytes()))
}

/// Hash of a stored snapshot, for comparison with the run manifest.
pub fn snapshot_hash(run_dir: &Path) -> std::io::Result<String> {
    Ok(digest_bytes(&fs::read(run_dir.join(SNAPSHOT_FILE))?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::scripted::ScriptedBehavior;

    #[test]
    fn minimal_config_takes_defaults() {
        let c = RunConfig::from_toml("[dataset]\nroot = \"data\"\n", Path::new("/cfg")).unwrap();
        assert_eq!(c.dataset.fps, 1.0);
        assert_eq!(c.dataset.audio_rate, 22050);
        assert_eq!(c.pipeline.peer_rounds, 1);
        assert_eq!(c.pipeline.max_reflect, 2);
        assert_eq!(c.pipeline.parallelism, 1);
        assert_eq!(c.dataset_root(), PathBuf::from("/cfg/data"));
        assert_eq!(c.backends.agent_roles().len(), 8);
    }

    #[test]
    fn round_trips_through_toml() {
        let mut c = RunConfig::new("data", "out");
        c.pipeline.seed = Some(3);
        c.metrics.tolerance = Some(2);
        c.backends.mock_script = Some("mock.json".into());
        let back = RunConfig::from_toml(&c.to_toml(), Path::new(".")).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = RunConfig::from_toml("[dataset]\nroot = \"d\"\nfsp = 2\n", Path::new(".")).unwrap_err();
        assert!(matches!(err, ConfigError::Parse { .. }));
    }

    #[test]
    fn live_endpoints_need_addresses() {
        let c = RunConfig::new("data", "out");
        assert!(matches!(c.validate(), Err(ConfigError::Invalid { .. })));
    }

    #[test]
    fn mock_roles_must_be_covered() {
        let dir = tempfile::tempdir().unwrap();
        let mut script = MockScript::default();
        for r in [
            "mca-1",
            "mca-2",
            "mca-3",
            "mca-final",
            "visual",
            "audio",
            "audiovisual",
        ] {
            script.agents.insert(r.into(), ScriptedBehavior::default());
        }
        script.save(&dir.path().join("mock.json")).unwrap();
        let mut c = RunConfig::new("data", "out");
        c.base_dir = dir.path().to_path_buf();
        c.backends.mock_script = Some("mock.json".into());
        assert!(matches!(c.validate(), Err(ConfigError::MissingMockRole(r)) if r == "check"));
        c.pipeline.max_reflect = 0;
        c.validate().unwrap();
    }

    #[test]
    fn snapshot_hash_matches_rehash() {
        let dir = tempfile::tempdir().unwrap();
        let c = RunConfig::new("data", "out");
        let h = write_snapshot(&c, dir.path()).unwrap();
        assert_eq!(h, snapshot_hash(dir.path()).unwrap());
        let stored = RunConfig::from_toml(
            &fs::read_to_string(dir.path().join(SNAPSHOT_FILE)).unwrap(),
            Path::new("."),
        )
        .unwrap();
        assert_eq!(stored, c);
    }
}
