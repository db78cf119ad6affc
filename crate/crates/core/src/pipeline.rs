//! End-to-end runs over a dataset split.
//!
//! A run directory holds:
//!
//! ```text
//! config.snapshot.toml   configuration as run
//! traces/<clip>.jsonl    every backend call of the clip, append-only
//! masks/<clip>.json      predicted masks, run-length encoded
//! masks/<clip>/*.png     the same masks as 0/255 images
//! clips/<clip>.json      verdict, reasoning, reflection summary, score
//! scores.csv             per-clip J, F, J&F
//! report.{txt,csv,json}  subset tables and proportion tables
//! manifest.json          config hash and per-clip status
//! ```

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::backends::http::{HttpAgent, HttpSegmenter};
use crate::backends::scripted::{MockScript, ScriptedAgent, ScriptedSegmenter};
use crate::backends::{AgentBackend, AgentHandle, SegmentBackend, SegmentHandle};
use crate::config::{snapshot_hash, write_snapshot, ConfigError, OverlayMode, RunConfig};
use crate::consensus::{run_cmr, CmrConfig, CmrOutcome};
use crate::dataset::{index_dataset, load_clip, ClipEntry, DatasetError, DatasetIndex, LoadOptions};
use crate::mask::MaskSequence;
use crate::media::MediaResolver;
use crate::metrics::{score_clip, ClipScore, MetricError, MetricsConfig};
use crate::model::{MediaBundle, ReasoningResult, Subset};
use crate::overlay::Overlays;
use crate::prompts::PromptRegistry;
use crate::reasoning::{run_cor, CorConfig};
use crate::reflect::{run_rls, RlsConfig};
use crate::report::{build_report, write_report, write_scores, Report};
use crate::trace::{read_trace, ClipEnd, ClipStatusKind, ExecutionTrace, TraceWriter};

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error("run directory {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Metric(#[from] MetricError),
}

fn io_at(path: &Path) -> impl FnOnce(std::io::Error) -> RunError + '_ {
    move |source| RunError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// The configured agents and templates for one run directory.
/// Builds the agent backend for a role; the flag asks for a multimodal client.
type AgentFactory = Box<dyn Fn(&str, bool) -> Result<Arc<dyn AgentBackend>, ConfigError>>;

pub struct Engine {
    pub cmr: CmrConfig,
    pub cor: CorConfig,
    pub rls: RlsConfig,
    pub prompts: PromptRegistry,
}

impl Engine {
    /// Builds backends for `run_dir`, with `max_reflect` overriding the
    /// configured budget.
    pub fn from_config(config: &RunConfig, run_dir: &Path, max_reflect: u32) -> Result<Self, ConfigError> {
        let b = &config.backends;
        let resolver = MediaResolver::new(config.dataset_root(), run_dir);
        let prompts = config.prompt_registry()?;
        prompts.validate()?;

        let (agent, segmenter): (AgentFactory, Arc<dyn SegmentBackend>) = match config.mock_script_path() {
            Some(path) => {
                let script = Arc::new(MockScript::load(&path)?);
                let seg = Arc::new(ScriptedSegmenter::from_script(script.segment.clone()));
                let agent = move |role: &str, _omni: bool| -> Result<Arc<dyn AgentBackend>, ConfigError> {
                    let behavior = script
                        .agents
                        .get(role)
                        .cloned()
                        .ok_or_else(|| ConfigError::MissingMockRole(role.to_string()))?;
                    Ok(Arc::new(ScriptedAgent::new(role, behavior)))
                };
                (Box::new(agent), seg)
            }
            None => {
                let key = config.api_key();
                let seed = config.pipeline.seed;
                let http = |e: crate::backends::BackendError| ConfigError::Invalid {
                    key: "backends".into(),
                    reason: e.to_string(),
                };
                let seg =
                    Arc::new(HttpSegmenter::new(&b.segment, resolver.clone(), key.clone()).map_err(http)?);
                let endpoints = b.clone();
                let resolver = resolver.clone();
                let agent = move |role: &str, omni: bool| -> Result<Arc<dyn AgentBackend>, ConfigError> {
                    let built = if omni {
                        let e = [
                            &endpoints.visual,
                            &endpoints.audio,
                            &endpoints.audiovisual,
                            &endpoints.check,
                        ]
                        .into_iter()
                        .find(|e| e.text.role == role)
                        .expect("known omni role");
                        HttpAgent::omni(e, resolver.clone(), key.clone(), seed)
                    } else {
                        let e = endpoints
                            .panel
                            .iter()
                            .chain([&endpoints.final_agent])
                            .find(|e| e.role == role)
                            .expect("known text role");
                        HttpAgent::text(e, key.clone(), seed)
                    };
                    Ok(Arc::new(built.map_err(http)?))
                };
                (Box::new(agent), seg)
            }
        };

        let text = |e: &crate::backends::TextAgentEndpoint| -> Result<AgentHandle, ConfigError> {
            Ok(AgentHandle::text(e.clone(), agent(&e.role, false)?))
        };
        let omni = |e: &crate::backends::OmniAgentEndpoint| -> Result<AgentHandle, ConfigError> {
            Ok(AgentHandle::omni(e.clone(), agent(&e.text.role, true)?))
        };

        let panel = [text(&b.panel[0])?, text(&b.panel[1])?, text(&b.panel[2])?];
        let mut cmr =
            CmrConfig::new(panel, text(&b.final_agent)?, config.pipeline.peer_rounds).map_err(|e| {
                ConfigError::Invalid {
                    key: "backends.panel".into(),
                    reason: e.to_string(),
                }
            })?;
        cmr.fast_path = config.pipeline.fast_path;
        cmr.concurrent = config.pipeline.concurrent_calls;

        let mut cor = CorConfig::new(omni(&b.visual)?, omni(&b.audio)?, omni(&b.audiovisual)?);
        cor.concurrent = config.pipeline.concurrent_calls;

        let check = if max_reflect > 0 {
            Some(omni(&b.check)?)
        } else {
            None
        };
        let segment = SegmentHandle {
            endpoint: b.segment.clone(),
            backend: segmenter,
        };
        let mut rls = RlsConfig::new(check, segment, max_reflect).map_err(|e| ConfigError::Invalid {
            key: "pipeline.max_reflect".into(),
            reason: e.to_string(),
        })?;
        rls.keep_policy = config.pipeline.keep_policy;
        rls.fail_soft = config.pipeline.fail_soft;
        rls.overlays = match config.overlay.mode {
            OverlayMode::Inline => Overlays::Inline,
            OverlayMode::Render => Overlays::Render {
                resolver,
                style: config.overlay.style,
            },
        };
        Ok(Self {
            cmr,
            cor,
            rls,
            prompts,
        })
    }
}

/// Everything stored about one clip of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipRecord {
    pub clip_id: String,
    pub subset: Subset,
    pub expression: String,
    pub status: ClipStatusKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error_class: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default)]
    pub frames: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cmr: Option<CmrOutcome>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reasoning: Option<ReasoningResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reflection: Option<serde_json::Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<ClipScore>,
    #[serde(default)]
    pub calls: usize,
}

impl ClipRecord {
    fn new(e: &ClipEntry) -> Self {
        Self {
            clip_id: e.clip_id.clone(),
            subset: e.subset,
            expression: e.expression.clone(),
            status: ClipStatusKind::Failed,
            error_class: None,
            error: None,
            frames: 0,
            cmr: None,
            reasoning: None,
            reflection: None,
            score: None,
            calls: 0,
        }
    }

    fn fail(&mut self, class: &str, message: String) {
        self.status = ClipStatusKind::Failed;
        self.error_class = Some(class.to_string());
        self.error = Some(message);
    }

    pub fn path(run_dir: &Path, clip_id: &str) -> PathBuf {
        run_dir.join("clips").join(format!("{clip_id}.json"))
    }

    pub fn load(run_dir: &Path, clip_id: &str) -> std::io::Result<Self> {
        let text = fs::read_to_string(Self::path(run_dir, clip_id))?;
        serde_json::from_str(&text).map_err(std::io::Error::other)
    }

    pub fn save(&self, run_dir: &Path) -> std::io::Result<()> {
        let path = Self::path(run_dir, &self.clip_id);
        fs::create_dir_all(path.parent().expect("clips dir"))?;
        fs::write(
            path,
            serde_json::to_string_pretty(self).map_err(std::io::Error::other)?,
        )
    }
}

pub fn trace_path(run_dir: &Path, clip_id: &str) -> PathBuf {
    run_dir.join("traces").join(format!("{clip_id}.jsonl"))
}

pub fn mask_path(run_dir: &Path, clip_id: &str) -> PathBuf {
    run_dir.join("masks").join(format!("{clip_id}.json"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipStatus {
    pub clip_id: String,
    pub subset: Subset,
    pub status: ClipStatusKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error_class: Option<String>,
    /// False when a resumed run reused an earlier result.
    pub executed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_hash: String,
    pub split: String,
    pub clips: Vec<ClipStatus>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report: Option<Report>,
}

impl RunManifest {
    pub fn load(run_dir: &Path) -> std::io::Result<Self> {
        let text = fs::read_to_string(run_dir.join("manifest.json"))?;
        serde_json::from_str(&text).map_err(std::io::Error::other)
    }

    pub fn executed(&self) -> Vec<&str> {
        self.clips
            .iter()
            .filter(|c| c.executed)
            .map(|c| c.clip_id.as_str())
            .collect()
    }

    /// Whether the stored snapshot still hashes to the recorded value.
    pub fn seal_holds(&self, run_dir: &Path) -> bool {
        snapshot_hash(run_dir).is_ok_and(|h| h == self.config_hash)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunOptions {
    pub resume: bool,
    /// Process only the first `n` clips of the split.
    pub limit: Option<usize>,
}

/// Per-run settings shared by clip workers.
struct ClipContext<'a> {
    engine: &'a Engine,
    index: &'a DatasetIndex,
    load: LoadOptions,
    metrics: MetricsConfig,
    run_dir: &'a Path,
}

/// Phases after loading, for a clip whose consensus and reasoning may
/// already be known.
enum Upstream {
    Run,
    Cached(Box<(CmrOutcome, ReasoningResult)>),
}

fn process_clip(ctx: &ClipContext, entry: &ClipEntry, upstream: Upstream) -> ClipRecord {
    let id = entry.clip_id.as_str();
    let mut record = ClipRecord::new(entry);
    let mut writer = match TraceWriter::create(&trace_path(ctx.run_dir, id), id) {
        Ok(w) => w,
        Err(e) => {
            record.fail("IoError", e.to_string());
            return record;
        }
    };
    let mut trace = ExecutionTrace::new(id);
    let outcome = run_phases(ctx, entry, upstream, &mut record, &mut trace, &mut writer);
    record.calls = trace.len();
    let end = match outcome {
        Ok(()) => {
            record.status = ClipStatusKind::Done;
            ClipEnd {
                status: ClipStatusKind::Done,
                error: None,
            }
        }
        Err((class, message)) => {
            warn!("clip {id} failed: {class}: {message}");
            record.fail(class, message);
            ClipEnd {
                status: ClipStatusKind::Failed,
                error: Some(class.to_string()),
            }
        }
    };
    // the record lands before the end line, so a complete trace implies a stored record
    if let Err(e) = record.save(ctx.run_dir) {
        record.fail("IoError", e.to_string());
    }
    if let Err(e) = writer.finish(&trace, end) {
        record.fail("IoError", e.to_string());
    }
    record
}

type Failure = (&'static str, String);

fn run_phases(
    ctx: &ClipContext,
    entry: &ClipEntry,
    upstream: Upstream,
    record: &mut ClipRecord,
    trace: &mut ExecutionTrace,
    writer: &mut TraceWriter,
) -> Result<(), Failure> {
    let io = |e: std::io::Error| ("IoError", e.to_string());
    let (bundle, gt): (MediaBundle, Option<MaskSequence>) =
        load_clip(ctx.index, &entry.clip_id, &ctx.load).map_err(|e| (e.class(), e.to_string()))?;
    record.frames = bundle.frame_count();
    let engine = ctx.engine;

    let (cmr, reasoning) = match upstream {
        Upstream::Cached(cached) => *cached,
        Upstream::Run => {
            let cmr = run_cmr(&engine.cmr, bundle.expression(), &engine.prompts, trace);
            writer.sync(trace).map_err(io)?;
            let cmr = cmr.map_err(|e| (e.class(), e.to_string()))?;
            record.cmr = Some(cmr.clone());
            let reasoning = run_cor(&engine.cor, &cmr.final_verdict, &bundle, &engine.prompts, trace);
            writer.sync(trace).map_err(io)?;
            (cmr, reasoning.map_err(|e| (e.class(), e.to_string()))?)
        }
    };
    record.cmr = Some(cmr);
    record.reasoning = Some(reasoning.clone());

    let rls = run_rls(&engine.rls, &reasoning, &bundle, &engine.prompts, trace);
    writer.sync(trace).map_err(io)?;
    let rls = rls.map_err(|e| (e.class(), e.to_string()))?;
    record.reflection = Some(rls.summary());

    let masks = rls.final_mask().clone().with_clip_id(&entry.clip_id);
    masks
        .write_sidecar(&mask_path(ctx.run_dir, &entry.clip_id))
        .map_err(|e| ("IoError", e.to_string()))?;
    masks
        .write_png_dir(&ctx.run_dir.join("masks").join(&entry.clip_id))
        .map_err(|e| ("IoError", e.to_string()))?;

    if let Some(gt) = gt.filter(|_| entry.subset.is_scored()) {
        let score = score_clip(&masks, &gt, &ctx.metrics).map_err(|e| ("MetricError", e.to_string()))?;
        record.score = Some(ClipScore {
            clip_id: entry.clip_id.clone(),
            ..score
        });
    }
    Ok(())
}

/// Index and subset filter applied to the configured split.
pub fn configured_index(config: &RunConfig) -> Result<DatasetIndex, RunError> {
    Ok(index_dataset(&config.dataset_root(), &config.dataset.split)?.filter_subsets(&config.dataset.subsets))
}

fn load_options(config: &RunConfig, run_dir: &Path) -> LoadOptions {
    LoadOptions {
        fps: config.dataset.fps,
        audio_rate: config.dataset.audio_rate,
        cache_dir: Some(run_dir.to_path_buf()),
    }
}

fn pool(config: &RunConfig) -> rayon::ThreadPool {
    rayon::ThreadPoolBuilder::new()
        .num_threads(config.pipeline.parallelism.max(1))
        .build()
        .expect("thread pool")
}

/// Whether a previous run finished this clip.
pub fn is_complete(run_dir: &Path, clip_id: &str) -> bool {
    read_trace(&trace_path(run_dir, clip_id)).is_ok_and(|t| t.is_complete())
        && mask_path(run_dir, clip_id).is_file()
        && ClipRecord::path(run_dir, clip_id).is_file()
}

pub fn run_pipeline(config: &RunConfig, options: RunOptions) -> Result<RunManifest, RunError> {
    config.validate()?;
    let run_dir = config.output_dir();
    fs::create_dir_all(&run_dir).map_err(io_at(&run_dir))?;
    let config_hash = write_snapshot(config, &run_dir).map_err(io_at(&run_dir))?;
    let mut index = configured_index(config)?;
    if let Some(n) = options.limit {
        index.entries.truncate(n);
    }
    let engine = Engine::from_config(config, &run_dir, config.pipeline.max_reflect)?;
    let ctx = ClipContext {
        engine: &engine,
        index: &index,
        load: load_options(config, &run_dir),
        metrics: config.metrics,
        run_dir: &run_dir,
    };

    let results: Vec<(ClipRecord, bool)> = pool(config).install(|| {
        index
            .entries
            .par_iter()
            .map(|e| {
                if options.resume && is_complete(&run_dir, &e.clip_id) {
                    if let Ok(r) = ClipRecord::load(&run_dir, &e.clip_id) {
                        info!("clip {}: reusing completed result", e.clip_id);
                        return (r, false);
                    }
                }
                info!("clip {}: running", e.clip_id);
                (process_clip(&ctx, e, Upstream::Run), true)
            })
            .collect()
    });

    let records: Vec<ClipRecord> = results.iter().map(|(r, _)| r.clone()).collect();
    let report = finish_report(&run_dir, &records)?;
    let manifest = RunManifest {
        config_hash,
        split: config.dataset.split.clone(),
        clips: results
            .iter()
            .map(|(r, executed)| ClipStatus {
                clip_id: r.clip_id.clone(),
                subset: r.subset,
                status: r.status,
                error_class: r.error_class.clone(),
                executed: *executed,
            })
            .collect(),
        report,
    };
    fs::write(
        run_dir.join("manifest.json"),
        serde_json::to_string_pretty(&manifest).expect("manifest serializes"),
    )
    .map_err(io_at(&run_dir))?;
    Ok(manifest)
}

/// Writes scores and, when any clip is scored, the report tables.
fn finish_report(run_dir: &Path, records: &[ClipRecord]) -> Result<Option<Report>, RunError> {
    write_scores(run_dir, records).map_err(io_at(run_dir))?;
    match build_report(records) {
        Ok(report) => {
            write_report(run_dir, &report).map_err(io_at(run_dir))?;
            Ok(Some(report))
        }
        Err(e) => {
            warn!("no report: {e}");
            Ok(None)
        }
    }
}

/// Clip records stored in a run directory, in clip-id order.
pub fn load_records(run_dir: &Path) -> Result<Vec<ClipRecord>, RunError> {
    let dir = run_dir.join("clips");
    let mut paths: Vec<PathBuf> = fs::read_dir(&dir)
        .map_err(io_at(&dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    paths
        .iter()
        .map(|p| {
            let text = fs::read_to_string(p).map_err(io_at(p))?;
            serde_json::from_str(&text).map_err(|e| RunError::Io {
                path: p.display().to_string(),
                source: std::io::Error::other(e),
            })
        })
        .collect()
}

/// Rebuilds the report files from the clip records of a run directory.
pub fn emit_report(run_dir: &Path) -> Result<Report, RunError> {
    let records = load_records(run_dir)?;
    write_scores(run_dir, &records).map_err(io_at(run_dir))?;
    let report = build_report(&records)?;
    write_report(run_dir, &report).map_err(io_at(run_dir))?;
    Ok(report)
}

/// Rescores stored masks against ground truth with the configured metric
/// settings, updating the clip records and report.
pub fn evaluate(config: &RunConfig) -> Result<Report, RunError> {
    let run_dir = config.output_dir();
    let index = configured_index(config)?;
    let mut records = load_records(&run_dir)?;
    for r in records.iter_mut().filter(|r| r.status == ClipStatusKind::Done) {
        let Ok(entry) = index.get(&r.clip_id) else {
            continue;
        };
        if !entry.subset.is_scored() {
            continue;
        }
        let Some(gt) = crate::dataset::load_gt(&index, &r.clip_id)? else {
            continue;
        };
        let path = mask_path(&run_dir, &r.clip_id);
        let pred = MaskSequence::read_sidecar(&r.clip_id, &path).map_err(|e| RunError::Io {
            path: path.display().to_string(),
            source: std::io::Error::other(e),
        })?;
        let score = score_clip(&pred, &gt, &config.metrics)?;
        r.score = Some(ClipScore {
            clip_id: r.clip_id.clone(),
            ..score
        });
        r.save(&run_dir).map_err(io_at(&run_dir))?;
    }
    write_scores(&run_dir, &records).map_err(io_at(&run_dir))?;
    let report = build_report(&records)?;
    write_report(&run_dir, &report).map_err(io_at(&run_dir))?;
    Ok(report)
}

/// Scores for one reflection budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub max_reflect: u32,
    pub reports: Vec<crate::metrics::SubsetReport>,
}

fn cached_upstream(run_dir: &Path, clip_id: &str) -> Option<(CmrOutcome, ReasoningResult)> {
    let r = ClipRecord::load(run_dir, clip_id).ok()?;
    Some((r.cmr?, r.reasoning?))
}

/// Reruns reflective segmentation for each budget in `ns`, reusing the
/// consensus and reasoning of each clip.
///
/// Upstream results come from the main run when it completed the clip,
/// otherwise they are computed once into `ablation/cache`. Each budget
/// writes its traces and masks under `ablation/N<n>/`.
pub fn ablate_reflect(config: &RunConfig, ns: &[u32]) -> Result<Vec<AblationRow>, RunError> {
    let max_n = ns.iter().copied().max().unwrap_or(0);
    let mut probe = config.clone();
    probe.pipeline.max_reflect = max_n;
    probe.validate()?;
    let run_dir = config.output_dir();
    let ablation = run_dir.join("ablation");
    let cache_dir = ablation.join("cache");
    fs::create_dir_all(&cache_dir).map_err(io_at(&cache_dir))?;
    let index = configured_index(config)?;
    let workers = pool(config);

    let cache_engine = Engine::from_config(config, &cache_dir, 0)?;
    let cache_ctx = ClipContext {
        engine: &cache_engine,
        index: &index,
        load: load_options(config, &cache_dir),
        metrics: config.metrics,
        run_dir: &cache_dir,
    };
    let upstream: Vec<Option<(CmrOutcome, ReasoningResult)>> = workers.install(|| {
        index
            .entries
            .par_iter()
            .map(|e| {
                let done = |dir: &Path| {
                    is_complete(dir, &e.clip_id)
                        .then(|| cached_upstream(dir, &e.clip_id))
                        .flatten()
                };
                done(&run_dir).or_else(|| done(&cache_dir)).or_else(|| {
                    let r = process_clip(&cache_ctx, e, Upstream::Run);
                    Some((r.cmr?, r.reasoning?))
                })
            })
            .collect()
    });

    let mut rows = Vec::new();
    for &n in ns {
        let dir = ablation.join(format!("N{n}"));
        fs::create_dir_all(&dir).map_err(io_at(&dir))?;
        let engine = Engine::from_config(config, &dir, n)?;
        let ctx = ClipContext {
            engine: &engine,
            index: &index,
            load: load_options(config, &dir),
            metrics: config.metrics,
            run_dir: &dir,
        };
        let records: Vec<ClipRecord> = workers.install(|| {
            index
                .entries
                .par_iter()
                .zip(upstream.par_iter())
                .map(|(e, up)| match up {
                    Some(cached) => process_clip(&ctx, e, Upstream::Cached(Box::new(cached.clone()))),
                    None => {
                        let mut r = ClipRecord::new(e);
                        r.fail("UpstreamFailed", "consensus or reasoning failed".into());
                        r
                    }
                })
                .collect()
        });
        write_scores(&dir, &records).map_err(io_at(&dir))?;
        let scored: Vec<_> = records
            .iter()
            .filter_map(|r| r.score.clone().map(|s| (s, r.subset)))
            .collect();
        rows.push(AblationRow {
            max_reflect: n,
            reports: crate::metrics::aggregate(&scored)?,
        });
    }
    fs::write(ablation.join("reflect.csv"), ablation_csv(&rows)).map_err(io_at(&ablation))?;
    fs::write(ablation.join("reflect.txt"), ablation_text(&rows)).map_err(io_at(&ablation))?;
    Ok(rows)
}

pub fn ablation_csv(rows: &[AblationRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let _ = w.write_record(["max_reflect", "subset", "j", "f", "jf", "clips"]);
    for row in rows {
        for r in &row.reports {
            let _ = w.write_record([
                row.max_reflect.to_string(),
                r.subset.clone(),
                crate::metrics::format_percent(r.j),
                crate::metrics::format_percent(r.f),
                crate::metrics::format_percent(r.jf),
                r.clips.to_string(),
            ]);
        }
    }
    String::from_utf8(w.into_inner().expect("in-memory csv")).expect("csv is utf-8")
}

/// One line per budget: `N` then `J F J&F` for each subset.
pub fn ablation_text(rows: &[AblationRow]) -> String {
    let mut out = String::new();
    if let Some(first) = rows.first() {
        out.push('N');
        for r in &first.reports {
            out.push_str(&format!("  {:>18}", format!("{} J/F/J&F", r.subset)));
        }
        out.push('\n');
    }
    for row in rows {
        out.push_str(&row.max_reflect.to_string());
        for r in &row.reports {
            out.push_str(&format!("  {:>18}", r.row()));
        }
        out.push('\n');
    }
    out
}
