//! Miniature synthetic dataset with a matching mock script and run
//! configuration, for tests, benchmarks and demos.
//!
//! Layout under the output directory:
//!
//! ```text
//! dataset/manifest/test.json
//! dataset/frames/<clip>/00000.png ...
//! dataset/audio/<clip>.wav
//! dataset/gt/<clip>/00000.png ...
//! mock.json
//! run.toml
//! ```
//!
//! The five base clips cover every routing path and one reflective
//! correction: in `f01-hairdryer` the reasoning agents name "Dog", the check
//! agent rejects that mask and revises to "Hair-dryer", whose mask equals
//! the ground truth.

use std::fs;
use std::path::{Path, PathBuf};

use image::{Rgb, RgbImage};
use serde_json::json;

use super::audio::{write_wav, Pcm};
use super::{ClipEntry, Manifest};
use crate::backends::scripted::{MockScript, ScriptResponse, ScriptRule, ScriptedBehavior, SegmentRule};
use crate::config::RunConfig;
use crate::mask::{Mask, MaskSequence};
use crate::model::Subset;

pub const SPLIT: &str = "test";
pub const HAIRDRYER: &str = "f01-hairdryer";

#[derive(Debug, Clone, PartialEq)]
pub struct FixtureOptions {
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    /// Additional low-difficulty visual clips, for load testing.
    pub extra_clips: usize,
}

impl Default for FixtureOptions {
    fn default() -> Self {
        Self {
            frames: 3,
            height: 24,
            width: 32,
            extra_clips: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Fixture {
    pub dir: PathBuf,
    pub config: PathBuf,
    pub mock_script: PathBuf,
    pub clip_ids: Vec<String>,
}

impl Fixture {
    pub fn dataset_root(&self) -> PathBuf {
        self.dir.join("dataset")
    }

    pub fn load_config(&self) -> RunConfig {
        RunConfig::load(&self.config).expect("fixture config parses")
    }
}

type Rect = ((usize, usize), (usize, usize));

/// What the mock agents answer for one clip.
struct ClipPlan {
    id: String,
    expression: String,
    subset: Subset,
    /// (dominant, auxiliary) agreed by the panel.
    verdict: (&'static [&'static str], &'static [&'static str]),
    /// Independent-phase verdict of the third analyst, when it dissents.
    dissent: Option<(&'static [&'static str], &'static [&'static str])>,
    object: &'static str,
    /// Rejected object and its correction.
    correction: Option<(&'static str, &'static str)>,
    target: Rect,
    distractor: Rect,
    /// Offset of the predicted mask from the target, in columns.
    prediction_shift: usize,
    color: [u8; 3],
}

const V: &[&str] = &["visual"];
const A: &[&str] = &["audio"];
const AV: &[&str] = &["audio", "visual"];
const NONE: &[&str] = &[];

fn base_plans() -> Vec<ClipPlan> {
    vec![
        ClipPlan {
            id: HAIRDRYER.into(),
            expression: "the object making a loud whirring noise".into(),
            subset: Subset::Seen,
            verdict: (V, A),
            dissent: None,
            object: "Dog",
            correction: Some(("Dog", "Hair-dryer")),
            target: ((4, 3), (12, 11)),
            distractor: ((14, 18), (22, 28)),
            prediction_shift: 0,
            color: [220, 200, 40],
        },
        ClipPlan {
            id: "f02-guitar".into(),
            expression: "the guitar held by the person on the left".into(),
            subset: Subset::Seen,
            verdict: (V, NONE),
            dissent: None,
            object: "Guitar",
            correction: None,
            target: ((6, 2), (18, 10)),
            distractor: ((4, 20), (10, 28)),
            prediction_shift: 0,
            color: [160, 90, 30],
        },
        ClipPlan {
            id: "f03-piano".into(),
            expression: "the instrument playing the slow melody".into(),
            subset: Subset::Unseen,
            verdict: (A, NONE),
            dissent: None,
            object: "Piano",
            correction: None,
            target: ((8, 6), (20, 18)),
            distractor: ((2, 24), (6, 30)),
            prediction_shift: 3,
            color: [30, 30, 30],
        },
        ClipPlan {
            id: "f04-bird".into(),
            expression: "the creature chirping in the tree".into(),
            subset: Subset::Unseen,
            verdict: (AV, NONE),
            dissent: Some((V, A)),
            object: "Bird",
            correction: None,
            target: ((3, 20), (9, 27)),
            distractor: ((14, 2), (22, 12)),
            prediction_shift: 0,
            color: [40, 120, 220],
        },
        ClipPlan {
            id: "f05-trumpet".into(),
            expression: "the trumpet playing a fanfare".into(),
            subset: Subset::Null,
            verdict: (A, V),
            dissent: None,
            object: "Trumpet",
            correction: None,
            target: ((0, 0), (0, 0)),
            distractor: ((8, 8), (16, 24)),
            prediction_shift: 0,
            color: [0, 0, 0],
        },
    ]
}

fn extra_plan(i: usize) -> ClipPlan {
    ClipPlan {
        id: format!("x{i:04}-block"),
        expression: format!("the block labelled x{i:04}"),
        subset: if i.is_multiple_of(2) {
            Subset::Seen
        } else {
            Subset::Unseen
        },
        verdict: (V, NONE),
        dissent: None,
        object: "Block",
        correction: None,
        target: ((2 + i % 5, 2 + i % 7), (12 + i % 5, 14 + i % 7)),
        distractor: ((16, 20), (22, 30)),
        prediction_shift: i % 3,
        color: [200, 40, 40],
    }
}

fn fenced(v: serde_json::Value) -> ScriptResponse {
    ScriptResponse::Text(format!("```json\n{v}\n```"))
}

fn difficulty(dom: &[&str], aux: &[&str]) -> &'static str {
    match (dom.len(), aux.len()) {
        (2, _) => "high",
        (_, 0) => "low",
        _ => "moderate",
    }
}

fn verdict_text((dom, aux): (&[&str], &[&str]), reason: &str) -> ScriptResponse {
    fenced(json!({
        "difficulty": difficulty(dom, aux),
        "dominant": dom,
        "auxiliary": aux,
        "reason": reason,
    }))
}

fn rule(needles: &[&str], response: ScriptResponse) -> ScriptRule {
    ScriptRule::when_contains(needles.iter().copied(), vec![response])
}

const CANDIDATES: &str = "\"candidates\"";
const OBJECT: &str = "\"object\"";

fn add(script: &mut MockScript, role: &str, r: ScriptRule) {
    script.agents.entry(role.to_string()).or_default().rules.push(r);
}

fn script_for(plans: &[ClipPlan], dims: (usize, usize), frames: usize) -> MockScript {
    let mut s = MockScript::default();
    for role in [
        "mca-1",
        "mca-2",
        "mca-3",
        "mca-final",
        "visual",
        "audio",
        "audiovisual",
        "check",
    ] {
        s.agents.insert(role.into(), ScriptedBehavior::default());
    }
    for p in plans {
        let expr = p.expression.as_str();
        let agreed = verdict_text(p.verdict, "the panel's reading of the cues");
        if let Some(d) = p.dissent {
            // the dissenter reads the other analysts' verdicts in the peer round and concurs
            add(&mut s, "mca-3", rule(&[expr, "Analyst A"], agreed.clone()));
            add(
                &mut s,
                "mca-3",
                rule(&[expr], verdict_text(d, "the sound alone seems secondary")),
            );
        }
        for role in ["mca-1", "mca-2", "mca-3", "mca-final"] {
            add(&mut s, role, rule(&[expr], agreed.clone()));
        }

        let (dom, aux) = p.verdict;
        let cands = |who: &str| {
            fenced(json!({"candidates": [p.object], "reason": format!("{who} cues point at it")}))
        };
        let object = fenced(json!({"object": p.object, "reason": "best match for the expression"}));
        for m in aux.iter().chain(if dom.len() == 2 { dom } else { NONE }) {
            add(&mut s, m, rule(&[expr, CANDIDATES], cands(m)));
        }
        let dominant_role = if dom.len() == 2 { "audiovisual" } else { dom[0] };
        add(&mut s, dominant_role, rule(&[expr, OBJECT], object));

        if let Some((wrong, right)) = p.correction {
            let quoted = format!("used for the mask: \"{wrong}\"");
            add(
                &mut s,
                "check",
                rule(
                    &[expr, &quoted],
                    fenced(
                        json!({"match": false, "revised_object": right, "reason": "the mask covers the wrong object"}),
                    ),
                ),
            );
        }
        add(
            &mut s,
            "check",
            rule(
                &[expr],
                fenced(json!({"match": true, "reason": "the mask covers the referred object"})),
            ),
        );

        let (h, w) = dims;
        let seq = |m: Mask| {
            MaskSequence::new(&p.id, dims, vec![m; frames])
                .expect("aligned")
                .to_rle()
        };
        let shifted = |((r0, c0), (r1, c1)): Rect, by: usize| {
            Mask::rect(h, w, (r0, (c0 + by).min(w)), (r1, (c1 + by).min(w)))
        };
        let mut segment = |prompt: &str, masks| {
            s.segment.rules.push(SegmentRule {
                prompt: prompt.into(),
                clip: Some(p.id.clone()),
                masks: Some(masks),
                fail: None,
            })
        };
        if p.subset == Subset::Null {
            segment(p.object, seq(Mask::empty(h, w)));
            continue;
        }
        match p.correction {
            Some((wrong, right)) => {
                segment(wrong, seq(shifted(p.distractor, 0)));
                segment(right, seq(shifted(p.target, 0)));
            }
            None => segment(p.object, seq(shifted(p.target, p.prediction_shift))),
        }
    }
    s
}

fn draw(plan: &ClipPlan, opts: &FixtureOptions, k: usize) -> RgbImage {
    let (h, w) = (opts.height as u32, opts.width as u32);
    let inside = |((r0, c0), (r1, c1)): Rect, x: u32, y: u32| {
        (r0..r1).contains(&(y as usize)) && (c0..c1).contains(&(x as usize))
    };
    RgbImage::from_fn(w, h, |x, y| {
        if plan.subset != Subset::Null && inside(plan.target, x, y) {
            Rgb(plan.color)
        } else if inside(plan.distractor, x, y) {
            Rgb([120, 80, 50])
        } else {
            let g = (60 + (x + y + k as u32 * 5) % 40) as u8;
            Rgb([g, g, g + 10])
        }
    })
}

fn tone(plan_index: usize, seconds: usize) -> Pcm {
    let rate = 16_000;
    let freq = 220.0 * (1 + plan_index % 4) as f32;
    let samples = (0..rate * seconds)
        .map(|n| 0.3 * (2.0 * std::f32::consts::PI * freq * n as f32 / rate as f32).sin())
        .collect();
    Pcm {
        rate: rate as u32,
        samples,
    }
}

/// Writes the fixture under `out`, replacing any earlier one.
pub fn make_fixture(out: &Path, opts: &FixtureOptions) -> std::io::Result<Fixture> {
    let mut plans = base_plans();
    plans.extend((0..opts.extra_clips).map(extra_plan));
    let root = out.join("dataset");
    if root.exists() {
        fs::remove_dir_all(&root)?;
    }
    let dims = (opts.height, opts.width);
    let mut entries = Vec::new();
    for (i, p) in plans.iter().enumerate() {
        let frames_rel = PathBuf::from("frames").join(&p.id);
        fs::create_dir_all(root.join(&frames_rel))?;
        for k in 0..opts.frames {
            draw(p, opts, k)
                .save(root.join(&frames_rel).join(format!("{k:05}.png")))
                .map_err(std::io::Error::other)?;
        }
        let audio_rel = PathBuf::from("audio").join(format!("{}.wav", p.id));
        fs::create_dir_all(root.join("audio"))?;
        write_wav(&root.join(&audio_rel), &tone(i, opts.frames)).map_err(std::io::Error::other)?;
        let gt_rel = (p.subset != Subset::Null).then(|| {
            let rel = PathBuf::from("gt").join(&p.id);
            let ((r0, c0), (r1, c1)) = p.target;
            let m = Mask::rect(opts.height, opts.width, (r0, c0), (r1, c1));
            (
                rel,
                MaskSequence::new(&p.id, dims, vec![m; opts.frames]).expect("aligned"),
            )
        });
        if let Some((rel, seq)) = &gt_rel {
            seq.write_png_dir(&root.join(rel))
                .map_err(std::io::Error::other)?;
        }
        entries.push(ClipEntry {
            clip_id: p.id.clone(),
            expression: p.expression.clone(),
            subset: p.subset,
            frames: Some(frames_rel),
            frame_fps: None,
            video: None,
            audio: Some(audio_rel),
            gt_masks: gt_rel.map(|(rel, _)| rel),
        });
    }
    Manifest { clips: entries }.save(&root, SPLIT)?;

    let mock_script = out.join("mock.json");
    script_for(&plans, dims, opts.frames).save(&mock_script)?;

    let mut config = RunConfig::new("dataset", "runs/latest");
    config.backends.mock_script = Some("mock.json".into());
    let config_path = out.join("run.toml");
    config.save(&config_path)?;

    Ok(Fixture {
        dir: out.to_path_buf(),
        config: config_path,
        mock_script,
        clip_ids: plans.into_iter().map(|p| p.id).collect(),
    })
}
