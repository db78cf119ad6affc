//! Dataset manifests, clip loading and frame/audio sampling.
//!
//! Each split has a manifest at `<root>/manifest/<split>.json`:
//!
//! ```json
//! {"clips": [{
//!     "clip_id": "c001",
//!     "expression": "the instrument making a high-pitched sound",
//!     "subset": "seen",
//!     "frames": "frames/c001",
//!     "frame_fps": 1.0,
//!     "audio": "audio/c001.wav",
//!     "video": "videos/c001.mp4",
//!     "gt_masks": "gt/c001"
//! }]}
//! ```
//!
//! Paths are relative to the root. A clip needs `frames` (a directory of
//! images, read in file-name order) or `video`; `audio` is required unless
//! the audio track can be taken from `video`. `gt_masks` is a directory of
//! 0/255 PNGs or a `.json` run-length sidecar, and is required for Seen and
//! Unseen clips. `frame_fps` is the rate the frame directory was extracted
//! at and defaults to the sampling rate.
//!
//! Sampling takes frames at `t = k / fps` for `k = 0, 1, ...` while
//! `t < duration`, so a clip yields `ceil(duration * fps)` frames.

pub mod audio;
pub mod fixture;
pub mod video;

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::mask::MaskSequence;
use crate::media::{dataset_uri, run_uri};
use crate::model::{AudioRef, FrameRef, MediaBundle, Subset};

pub const DEFAULT_FPS: f64 = 1.0;
pub const DEFAULT_AUDIO_RATE: u32 = 22050;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DatasetError {
    #[error("manifest not found: {0}")]
    MissingManifest(String),
    #[error("corrupt entry {clip_id}: {reason}")]
    CorruptEntry { clip_id: String, reason: String },
    #[error("cannot decode media of {clip_id}: {reason}")]
    Decode { clip_id: String, reason: String },
    #[error("clip {0} is not indexed")]
    UnknownClip(String),
}

impl DatasetError {
    pub fn class(&self) -> &'static str {
        match self {
            DatasetError::MissingManifest(_) => "MissingManifestError",
            DatasetError::CorruptEntry { .. } => "CorruptEntryError",
            DatasetError::Decode { .. } => "DecodeError",
            DatasetError::UnknownClip(_) => "UnknownClipError",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipEntry {
    pub clip_id: String,
    pub expression: String,
    pub subset: Subset,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frames: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frame_fps: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub video: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub audio: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gt_masks: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub clips: Vec<ClipEntry>,
}

impl Manifest {
    pub fn path(root: &Path, split: &str) -> PathBuf {
        root.join("manifest").join(format!("{split}.json"))
    }

    pub fn save(&self, root: &Path, split: &str) -> std::io::Result<()> {
        let path = Self::path(root, split);
        if let Some(p) = path.parent() {
            fs::create_dir_all(p)?;
        }
        fs::write(
            path,
            serde_json::to_string_pretty(self).map_err(std::io::Error::other)?,
        )
    }
}

/// Validated, clip-id ordered view of one split.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetIndex {
    pub root: PathBuf,
    pub split: String,
    pub entries: Vec<ClipEntry>,
}

fn corrupt(clip_id: &str, reason: impl Into<String>) -> DatasetError {
    DatasetError::CorruptEntry {
        clip_id: clip_id.to_string(),
        reason: reason.into(),
    }
}

fn decode(clip_id: &str, reason: impl Into<String>) -> DatasetError {
    DatasetError::Decode {
        clip_id: clip_id.to_string(),
        reason: reason.into(),
    }
}

pub fn index_dataset(root: &Path, split: &str) -> Result<DatasetIndex, DatasetError> {
    let path = Manifest::path(root, split);
    let text =
        fs::read_to_string(&path).map_err(|_| DatasetError::MissingManifest(path.display().to_string()))?;
    let manifest: Manifest =
        serde_json::from_str(&text).map_err(|e| corrupt("<manifest>", format!("{}: {e}", path.display())))?;
    let mut seen = BTreeSet::new();
    for e in &manifest.clips {
        validate_entry(root, e)?;
        if !seen.insert(e.clip_id.clone()) {
            return Err(corrupt(&e.clip_id, "duplicate clip id"));
        }
    }
    let mut entries = manifest.clips;
    entries.sort_by(|a, b| a.clip_id.cmp(&b.clip_id));
    Ok(DatasetIndex {
        root: root.to_path_buf(),
        split: split.to_string(),
        entries,
    })
}

fn validate_entry(root: &Path, e: &ClipEntry) -> Result<(), DatasetError> {
    let id = &e.clip_id;
    if id.trim().is_empty() || id.contains(['/', '\\']) || id.starts_with('.') {
        return Err(corrupt(id, "clip id must be a plain file name"));
    }
    if e.expression.trim().is_empty() {
        return Err(corrupt(id, "empty expression"));
    }
    let exists = |p: &Option<PathBuf>| p.as_ref().is_some_and(|p| root.join(p).exists());
    match (&e.frames, &e.video) {
        (None, None) => return Err(corrupt(id, "no frames or video")),
        (Some(f), _) if !root.join(f).is_dir() => {
            return Err(corrupt(id, format!("frame directory {} missing", f.display())))
        }
        (None, Some(v)) if !root.join(v).is_file() => {
            return Err(corrupt(id, format!("video {} missing", v.display())))
        }
        _ => {}
    }
    match &e.audio {
        Some(a) if !root.join(a).is_file() => {
            return Err(corrupt(id, format!("audio {} missing", a.display())))
        }
        None if e.video.is_none() => return Err(corrupt(id, "no audio")),
        _ => {}
    }
    if matches!(e.subset, Subset::Seen | Subset::Unseen) && !exists(&e.gt_masks) {
        return Err(corrupt(id, "missing ground-truth masks"));
    }
    if let Some(fps) = e.frame_fps {
        if fps.is_nan() || fps <= 0.0 {
            return Err(corrupt(id, "frame_fps must be positive"));
        }
    }
    Ok(())
}

impl DatasetIndex {
    pub fn get(&self, clip_id: &str) -> Result<&ClipEntry, DatasetError> {
        self.entries
            .iter()
            .find(|e| e.clip_id == clip_id)
            .ok_or_else(|| DatasetError::UnknownClip(clip_id.to_string()))
    }

    pub fn filter_subsets(mut self, keep: &[Subset]) -> Self {
        if !keep.is_empty() {
            self.entries.retain(|e| keep.contains(&e.subset));
        }
        self
    }
}

/// Sample times `k / fps` for `k` in `0..ceil(duration * fps)`, at least
/// one.
pub fn sample_times(duration: f64, fps: f64) -> Vec<f64> {
    let count = ((duration * fps) - 1e-9).ceil().max(1.0) as usize;
    (0..count).map(|k| k as f64 / fps).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadOptions {
    pub fps: f64,
    pub audio_rate: u32,
    /// Run directory for decoded frames and resampled audio.
    pub cache_dir: Option<PathBuf>,
}

impl Default for LoadOptions {
    fn default() -> Self {
        Self {
            fps: DEFAULT_FPS,
            audio_rate: DEFAULT_AUDIO_RATE,
            cache_dir: None,
        }
    }
}

fn is_image(p: &Path) -> bool {
    matches!(
        p.extension()
            .and_then(|e| e.to_str())
            .map(str::to_ascii_lowercase)
            .as_deref(),
        Some("png" | "jpg" | "jpeg")
    )
}

fn sorted_files(dir: &Path, keep: impl Fn(&Path) -> bool) -> std::io::Result<Vec<PathBuf>> {
    let mut files: Vec<_> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && keep(p))
        .collect();
    files.sort();
    Ok(files)
}

fn cache_dir<'a>(opts: &'a LoadOptions, id: &str) -> Result<&'a Path, DatasetError> {
    opts.cache_dir
        .as_deref()
        .ok_or_else(|| decode(id, "decoding needs a run directory"))
}

fn frames_from_dir(
    index: &DatasetIndex,
    e: &ClipEntry,
    dir: &Path,
    opts: &LoadOptions,
) -> Result<(Vec<FrameRef>, (usize, usize)), DatasetError> {
    let id = &e.clip_id;
    let abs = index.root.join(dir);
    let files = sorted_files(&abs, is_image).map_err(|err| decode(id, err.to_string()))?;
    if files.is_empty() {
        return Err(decode(id, "frame directory is empty"));
    }
    let src_fps = e.frame_fps.unwrap_or(opts.fps);
    let picked: Vec<(usize, f64, &PathBuf)> = if (src_fps - opts.fps).abs() < 1e-9 {
        files
            .iter()
            .enumerate()
            .map(|(k, f)| (k, k as f64 / opts.fps, f))
            .collect()
    } else {
        let duration = files.len() as f64 / src_fps;
        sample_times(duration, opts.fps)
            .into_iter()
            .enumerate()
            .map(|(k, t)| {
                let src = ((t * src_fps + 1e-9).floor() as usize).min(files.len() - 1);
                (k, t, &files[src])
            })
            .collect()
    };
    let mut dims = None;
    let mut frames = Vec::with_capacity(picked.len());
    for (k, t, file) in picked {
        let (w, h) =
            image::image_dimensions(file).map_err(|err| decode(id, format!("{}: {err}", file.display())))?;
        let d = (h as usize, w as usize);
        match dims {
            None => dims = Some(d),
            Some(prev) if prev != d => {
                return Err(decode(
                    id,
                    format!(
                        "frame {} is {h}x{w}, expected {}x{}",
                        file.display(),
                        prev.0,
                        prev.1
                    ),
                ))
            }
            _ => {}
        }
        let rel = file.strip_prefix(&index.root).unwrap_or(file);
        frames.push(FrameRef {
            index: k,
            time: t,
            uri: dataset_uri(rel),
        });
    }
    Ok((frames, dims.expect("at least one frame")))
}

fn frames_from_video(
    e: &ClipEntry,
    video: &Path,
    opts: &LoadOptions,
) -> Result<(Vec<FrameRef>, (usize, usize)), DatasetError> {
    let id = &e.clip_id;
    let cache = cache_dir(opts, id)?;
    let duration = video::probe_duration(video).map_err(|r| decode(id, r))?;
    let rel_dir = PathBuf::from("frames").join(id);
    fs::create_dir_all(cache.join(&rel_dir)).map_err(|err| decode(id, err.to_string()))?;
    let mut frames = Vec::new();
    let mut dims = None;
    for (k, t) in sample_times(duration, opts.fps).into_iter().enumerate() {
        let rel = rel_dir.join(format!("{k:05}.png"));
        video::extract_frame(video, t, &cache.join(&rel)).map_err(|r| decode(id, r))?;
        let (w, h) = image::image_dimensions(cache.join(&rel)).map_err(|err| decode(id, err.to_string()))?;
        dims.get_or_insert((h as usize, w as usize));
        frames.push(FrameRef {
            index: k,
            time: t,
            uri: run_uri(&rel),
        });
    }
    Ok((frames, dims.ok_or_else(|| decode(id, "no frames decoded"))?))
}

fn load_audio(index: &DatasetIndex, e: &ClipEntry, opts: &LoadOptions) -> Result<AudioRef, DatasetError> {
    let id = &e.clip_id;
    let rel_out = PathBuf::from("audio").join(format!("{id}.wav"));
    let source = match &e.audio {
        Some(a) => index.root.join(a),
        None => {
            let cache = cache_dir(opts, id)?;
            let video = index.root.join(e.video.as_ref().expect("validated"));
            fs::create_dir_all(cache.join("audio")).map_err(|err| decode(id, err.to_string()))?;
            video::extract_audio(&video, opts.audio_rate, &cache.join(&rel_out))
                .map_err(|r| decode(id, r))?;
            cache.join(&rel_out)
        }
    };
    let pcm = audio::read_wav(&source).map_err(|r| decode(id, r))?;
    let wav_spec = hound::WavReader::open(&source)
        .map(|r| r.spec())
        .map_err(|err| decode(id, err.to_string()))?;
    if pcm.rate == opts.audio_rate && wav_spec.channels == 1 {
        let uri = match source.strip_prefix(&index.root) {
            Ok(rel) => dataset_uri(rel),
            Err(_) => run_uri(&rel_out),
        };
        return Ok(AudioRef {
            uri,
            sample_rate: pcm.rate,
            samples: pcm.samples.len() as u64,
        });
    }
    let cache = cache_dir(opts, id)?;
    let out = audio::resample_linear(&pcm, opts.audio_rate);
    fs::create_dir_all(cache.join("audio")).map_err(|err| decode(id, err.to_string()))?;
    audio::write_wav(&cache.join(&rel_out), &out).map_err(|r| decode(id, r))?;
    Ok(AudioRef {
        uri: run_uri(&rel_out),
        sample_rate: out.rate,
        samples: out.samples.len() as u64,
    })
}

/// Samples frames and prepares audio for one clip.
pub fn load_bundle(
    index: &DatasetIndex,
    clip_id: &str,
    opts: &LoadOptions,
) -> Result<MediaBundle, DatasetError> {
    let e = index.get(clip_id)?;
    let (frames, dims) = match (&e.frames, &e.video) {
        (Some(dir), _) => frames_from_dir(index, e, dir, opts)?,
        (None, Some(v)) => frames_from_video(e, &index.root.join(v), opts)?,
        (None, None) => return Err(corrupt(clip_id, "no frames or video")),
    };
    let audio = load_audio(index, e, opts)?;
    MediaBundle::new(&e.clip_id, &e.expression, frames, dims, audio, e.subset)
        .map_err(|err| decode(clip_id, err.to_string()))
}

/// Ground-truth masks, when the entry has them.
pub fn load_gt(index: &DatasetIndex, clip_id: &str) -> Result<Option<MaskSequence>, DatasetError> {
    let e = index.get(clip_id)?;
    let Some(rel) = &e.gt_masks else {
        return Ok(None);
    };
    let path = index.root.join(rel);
    let seq = if path.is_dir() {
        MaskSequence::read_png_dir(clip_id, &path)
    } else {
        MaskSequence::read_sidecar(clip_id, &path)
    }
    .map_err(|err| decode(clip_id, err.to_string()))?;
    Ok(Some(seq))
}

/// Bundle plus ground truth, checking that the mask count matches the
/// sampled frame count.
pub fn load_clip(
    index: &DatasetIndex,
    clip_id: &str,
    opts: &LoadOptions,
) -> Result<(MediaBundle, Option<MaskSequence>), DatasetError> {
    let bundle = load_bundle(index, clip_id, opts)?;
    let gt = load_gt(index, clip_id)?;
    if let Some(g) = &gt {
        if g.len() != bundle.frame_count() || g.dims() != bundle.dims() {
            return Err(corrupt(
                clip_id,
                format!(
                    "{} ground-truth masks of {}x{} for {} frames of {}x{}",
                    g.len(),
                    g.dims().0,
                    g.dims().1,
                    bundle.frame_count(),
                    bundle.dims().0,
                    bundle.dims().1
                ),
            ));
        }
    }
    Ok((bundle, gt))
}
