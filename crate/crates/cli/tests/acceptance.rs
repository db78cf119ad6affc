//! Acceptance suite. Each criterion runs with scripted backends and
//! synthetic data, checks its time budget, and prints one PASS/FAIL line.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write as _;
use std::path::Path;
use std::process::Command;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ravs_core::backends::scripted::{FnAgent, FnSegmenter, ScriptedAgent};
use ravs_core::backends::{
    AgentHandle, MediaKind, OmniAgentEndpoint, SegmentEndpoint, SegmentHandle, TextAgentEndpoint,
};
use ravs_core::consensus::{run_cmr, CmrConfig};
use ravs_core::dataset::fixture::{make_fixture, FixtureOptions, HAIRDRYER};
use ravs_core::mask::{Mask, RleSequence};
use ravs_core::metrics::{
    aggregate, boundary_f, format_percent, frame_boundary_f, frame_jaccard, jf, ClipScore, MIX,
};
use ravs_core::model::{AudioRef, FrameRef};
use ravs_core::pipeline::{run_pipeline, ClipRecord, RunManifest, RunOptions};
use ravs_core::prompts::{DifficultyRules, PromptRegistry};
use ravs_core::reasoning::{run_cor, CorConfig};
use ravs_core::reflect::{run_rls, RlsConfig, StopReason};
use ravs_core::schema::serialize_verdict;
use ravs_core::trace::{timing_free_lines, ExecutionTrace};
use ravs_core::{
    classify_difficulty, AnalysisVerdict, Difficulty, MaskSequence, MediaBundle, Modality, ModalityRole,
    ReasoningResult, Subset,
};

type Outcome = Result<String, String>;
type Criterion = (&'static str, Duration, fn() -> Outcome);

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        let held: bool = $cond;
        if !held {
            return Err(format!($($msg)+));
        }
    };
}

fn registry() -> PromptRegistry {
    PromptRegistry::builtin(DifficultyRules::default())
}

fn bundle(frames: usize, dims: (usize, usize)) -> MediaBundle {
    let frames = (0..frames)
        .map(|i| FrameRef {
            index: i,
            time: i as f64,
            uri: format!("dataset://frames/c/{i:05}.png"),
        })
        .collect();
    let audio = AudioRef {
        uri: "dataset://audio/c.wav".into(),
        sample_rate: 22050,
        samples: 22050 * 4,
    };
    MediaBundle::new(
        "c",
        "the dog barking at the door",
        frames,
        dims,
        audio,
        Subset::Seen,
    )
    .unwrap()
}

fn fenced(v: serde_json::Value) -> String {
    format!("```json\n{v}\n```")
}

// 1 -------------------------------------------------------------------------

fn difficulty_rule() -> Outcome {
    use Modality::*;
    // independent table: both dominant is high, one dominant plus an auxiliary
    // is moderate, one dominant alone is low
    let expected = |dom: usize, aux: usize| match (dom, aux) {
        (2, 0) => Difficulty::High,
        (1, 1) => Difficulty::Moderate,
        (1, 0) => Difficulty::Low,
        _ => unreachable!(),
    };
    let shapes: [(&[Modality], &[Modality]); 5] = [
        (&[Audio], &[]),
        (&[Visual], &[]),
        (&[Audio], &[Visual]),
        (&[Visual], &[Audio]),
        (&[Audio, Visual], &[]),
    ];
    for (dom, aux) in shapes {
        let role = ModalityRole::new(dom.iter().copied(), aux.iter().copied()).map_err(|e| e.to_string())?;
        let got = classify_difficulty(&role);
        ensure!(
            got == expected(dom.len(), aux.len()),
            "{dom:?}+{aux:?} classified {got:?}"
        );
    }
    ensure!(ModalityRole::all().len() == 5, "expected five valid shapes");
    ensure!(
        ModalityRole::new([], [Audio]).is_err(),
        "empty dominant set accepted"
    );
    ensure!(
        ModalityRole::new([Audio], [Audio]).is_err(),
        "overlapping sets accepted"
    );
    Ok("5/5 shapes".into())
}

// 2 -------------------------------------------------------------------------

fn cmr_call_count() -> Outcome {
    let mut notes = Vec::new();
    for peer_rounds in [1u32, 2] {
        let roles = ["mca-1", "mca-2", "mca-3"];
        let panel_backends: Vec<Arc<ScriptedAgent>> = roles
            .iter()
            .map(|r| {
                let v = AnalysisVerdict::new(
                    ModalityRole::single(Modality::Visual),
                    format!("cue reading by {r}"),
                    *r,
                )
                .unwrap();
                Arc::new(ScriptedAgent::constant(*r, serialize_verdict(&v)))
            })
            .collect();
        let final_v =
            AnalysisVerdict::new(ModalityRole::single(Modality::Visual), "consolidated", "f").unwrap();
        let final_backend = Arc::new(ScriptedAgent::constant("mca-final", serialize_verdict(&final_v)));
        let handle = |r: &str, b: Arc<ScriptedAgent>| AgentHandle::text(TextAgentEndpoint::new(r), b);
        let panel = [0, 1, 2].map(|i| handle(roles[i], panel_backends[i].clone()));
        let config = CmrConfig::new(panel, handle("mca-final", final_backend.clone()), peer_rounds)
            .map_err(|e| e.to_string())?;
        let mut trace = ExecutionTrace::new("c");
        run_cmr(&config, "the dog barking at the door", &registry(), &mut trace)
            .map_err(|e| e.to_string())?;

        let expected = 3 + 3 * peer_rounds as usize + 1;
        ensure!(
            trace.len() == expected,
            "peer_rounds={peer_rounds}: {} calls, expected {expected}",
            trace.len()
        );
        ensure!(
            trace.records.iter().all(|r| r.attempt == 0),
            "unexpected repair attempt"
        );
        let phases: Vec<_> = trace.records.iter().map(|r| r.phase.label()).collect();
        let mut want = vec!["CMR-independent"; 3];
        want.extend(vec!["CMR-peer"; 3 * peer_rounds as usize]);
        want.push("CMR-final");
        ensure!(phases == want, "phase order {phases:?}");

        // every trace digest belongs to a logged request; peer prompts carry
        // exactly the other two panelists' verdicts
        let mut logged = BTreeMap::new();
        for (i, b) in panel_backends.iter().enumerate() {
            for call in b.calls() {
                logged.insert(call.digest.clone(), (i, call.request.prompt.clone()));
            }
        }
        for call in final_backend.calls() {
            logged.insert(call.digest.clone(), (3, call.request.prompt.clone()));
        }
        for r in &trace.records {
            let (who, prompt) = logged
                .get(&r.input_digest)
                .ok_or("trace digest matches no request")?;
            if r.phase.label() == "CMR-peer" {
                for (j, role) in roles.iter().enumerate() {
                    let present = prompt.contains(&format!("cue reading by {role}"));
                    ensure!(
                        present == (j != *who),
                        "peer prompt of {} mishandles verdict of {role}",
                        roles[*who]
                    );
                }
                ensure!(
                    prompt.contains("Analyst A") && prompt.contains("Analyst B"),
                    "peer labels missing"
                );
            }
        }
        notes.push(format!("p={peer_rounds}: {expected} calls"));
    }
    Ok(notes.join(", "))
}

// 3 -------------------------------------------------------------------------

fn cor_routing() -> Outcome {
    let b = bundle(4, (8, 8));
    let mut notes = Vec::new();
    for role in ModalityRole::all() {
        let verdict = AnalysisVerdict::new(role.clone(), "reason", "mca-final").unwrap();
        let make = |name: &'static str| {
            Arc::new(FnAgent::new(move |req, _| {
                Ok(if req.prompt.contains("\"candidates\"") {
                    fenced(serde_json::json!({"candidates": [format!("{name} thing")], "reason": "cue"}))
                } else {
                    fenced(serde_json::json!({"object": "dog", "reason": "fits"}))
                })
            }))
        };
        let (v, a, av) = (make("visual"), make("audio"), make("audiovisual"));
        let omni = |r: &str, backend: Arc<FnAgent>| AgentHandle::omni(OmniAgentEndpoint::new(r), backend);
        let config = CorConfig::new(
            omni("visual", v.clone()),
            omni("audio", a.clone()),
            omni("audiovisual", av.clone()),
        );
        let mut trace = ExecutionTrace::new("c");
        let result = run_cor(&config, &verdict, &b, &registry(), &mut trace).map_err(|e| e.to_string())?;

        let expected = match classify_difficulty(&role) {
            Difficulty::Low => 1,
            Difficulty::Moderate => 2,
            Difficulty::High => 3,
        };
        ensure!(
            trace.len() == expected,
            "{role:?}: {} calls, expected {expected}",
            trace.len()
        );
        ensure!(result.path() == verdict.difficulty(), "path mismatch");
        let phases: Vec<_> = trace.records.iter().map(|r| r.phase.label()).collect();
        let dominant_at = phases
            .iter()
            .position(|p| *p == "COR-dominant")
            .ok_or("no dominant call")?;
        ensure!(
            dominant_at == expected - 1,
            "{role:?}: auxiliary after dominant: {phases:?}"
        );

        for call in a.calls() {
            ensure!(!call.request.has(MediaKind::Frame), "audio agent received frames");
            ensure!(call.request.has(MediaKind::Audio), "audio agent got no audio");
        }
        for call in v.calls() {
            ensure!(!call.request.has(MediaKind::Audio), "visual agent received audio");
            ensure!(call.request.has(MediaKind::Frame), "visual agent got no frames");
        }
        for call in av.calls() {
            ensure!(
                call.request.has(MediaKind::Frame) && call.request.has(MediaKind::Audio),
                "audiovisual agent lacks media"
            );
        }
        notes.push(format!("{}:{expected}", classify_difficulty(&role).label()));
    }
    Ok(notes.join(" "))
}

// 4 -------------------------------------------------------------------------

#[derive(Clone, Copy, Debug)]
enum CheckScript {
    AlwaysMatch,
    AlwaysReject,
    RejectThenMatch,
}

impl CheckScript {
    /// 1-based index of the first inspection that matches.
    fn first_match(self) -> Option<u32> {
        match self {
            CheckScript::AlwaysMatch => Some(1),
            CheckScript::AlwaysReject => None,
            CheckScript::RejectThenMatch => Some(2),
        }
    }
}

fn current_prompt(prompt: &str) -> String {
    let marker = "used for the mask: \"";
    let start = prompt.find(marker).expect("check prompt names the object") + marker.len();
    prompt[start..].split('"').next().unwrap().to_string()
}

fn rls_budget() -> Outcome {
    let b = bundle(3, (6, 6));
    let result = ReasoningResult::new("dog", "fits", Difficulty::Low, vec![]).unwrap();
    let mut checked = 0;
    for script in [
        CheckScript::AlwaysMatch,
        CheckScript::AlwaysReject,
        CheckScript::RejectThenMatch,
    ] {
        for n in 0..=3u32 {
            let check = Arc::new(FnAgent::new(move |req, _| {
                let current = current_prompt(&req.prompt);
                let matched = match script {
                    CheckScript::AlwaysMatch => true,
                    CheckScript::AlwaysReject => false,
                    CheckScript::RejectThenMatch => current != "dog",
                };
                Ok(if matched {
                    fenced(serde_json::json!({"match": true, "reason": "ok"}))
                } else {
                    fenced(
                        serde_json::json!({"match": false, "revised_object": format!("{current} again"), "reason": "wrong"}),
                    )
                })
            }));
            let segmenter = Arc::new(FnSegmenter::new(|req, _| {
                Ok(RleSequence {
                    height: req.height,
                    width: req.width,
                    frames: vec![vec![(req.height * req.width) as u32]; req.frames.len()],
                })
            }));
            let segment = SegmentHandle {
                endpoint: SegmentEndpoint::default(),
                backend: segmenter,
            };
            let handle = AgentHandle::omni(OmniAgentEndpoint::new("check"), check);
            let config = RlsConfig::new(Some(handle), segment, n).map_err(|e| e.to_string())?;
            let mut trace = ExecutionTrace::new("c");
            let out = run_rls(&config, &result, &b, &registry(), &mut trace).map_err(|e| e.to_string())?;

            // closed form: inspections stop at the first match or at the cap
            let (segments, checks, stop) = match script.first_match() {
                Some(k) if k <= n => (k, k, StopReason::Matched),
                _ => (1 + n, n, StopReason::CapReached),
            };
            let seg = trace
                .records
                .iter()
                .filter(|r| r.phase.label() == "RLS-segment")
                .count() as u32;
            let chk = trace
                .records
                .iter()
                .filter(|r| r.phase.label() == "RLS-check")
                .count() as u32;
            ensure!(
                (seg, chk) == (segments, checks),
                "{script:?} N={n}: {seg} segment / {chk} check calls, expected {segments} / {checks}"
            );
            ensure!(
                out.stop_reason == stop,
                "{script:?} N={n}: stop {:?}",
                out.stop_reason
            );
            ensure!(seg <= 1 + n && chk <= n, "budget exceeded");
            ensure!(out.iterations.len() as u32 == segments, "iteration count");
            checked += 1;
        }
    }
    Ok(format!("{checked} scenarios"))
}

// 5 -------------------------------------------------------------------------

fn naive_jaccard(a: &Mask, b: &Mask) -> f64 {
    let (mut inter, mut union) = (0usize, 0usize);
    for r in 0..a.height() {
        for c in 0..a.width() {
            let (x, y) = (a.get(r, c), b.get(r, c));
            inter += (x && y) as usize;
            union += (x || y) as usize;
        }
    }
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

fn brute_boundary(m: &Mask) -> Vec<(usize, usize)> {
    let (h, w) = m.dims();
    let mut out = Vec::new();
    for r in 0..h {
        for c in 0..w {
            if !m.get(r, c) {
                continue;
            }
            let edge = r == 0 || c == 0 || r + 1 == h || c + 1 == w;
            let bg = (r > 0 && !m.get(r - 1, c))
                || (r + 1 < h && !m.get(r + 1, c))
                || (c > 0 && !m.get(r, c - 1))
                || (c + 1 < w && !m.get(r, c + 1));
            if edge || bg {
                out.push((r, c));
            }
        }
    }
    out
}

fn brute_boundary_f(pred: &Mask, gt: &Mask, tol: usize) -> f64 {
    let (p, g) = (brute_boundary(pred), brute_boundary(gt));
    if p.is_empty() && g.is_empty() {
        return 1.0;
    }
    if p.is_empty() || g.is_empty() {
        return 0.0;
    }
    let near = |a: (usize, usize), set: &[(usize, usize)]| {
        set.iter()
            .any(|b| a.0.abs_diff(b.0).max(a.1.abs_diff(b.1)) <= tol)
    };
    let precision = p.iter().filter(|&&x| near(x, &g)).count() as f64 / p.len() as f64;
    let recall = g.iter().filter(|&&x| near(x, &p)).count() as f64 / g.len() as f64;
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

fn random_mask(rng: &mut ChaCha8Rng, h: usize, w: usize) -> Mask {
    let density: f64 = rng.random_range(0.05..0.95);
    let bits = (0..h * w).map(|_| rng.random_bool(density)).collect();
    Mask::from_bits(h, w, bits).expect("dims match")
}

fn metric_oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(20240611);
    let mut pool: Vec<Mask> = (0..200).map(|_| random_mask(&mut rng, 4, 4)).collect();
    pool.push(Mask::empty(4, 4));
    pool.push(Mask::from_fn(4, 4, |_, _| true));
    pool.push(Mask::from_fn(4, 4, |r, c| (r + c) % 2 == 0));
    pool.push(Mask::from_fn(4, 4, |r, c| r == 2 && c == 1));
    pool.push(Mask::rect(4, 4, (1, 1), (3, 3)));
    let mut pairs = 0;
    for a in &pool {
        for b in &pool {
            let (got, want) = (frame_jaccard(a, b), naive_jaccard(a, b));
            ensure!(got == want, "jaccard {got} != {want}");
            pairs += 1;
        }
    }

    let mut fpairs = 0;
    for _ in 0..3000 {
        let h = rng.random_range(1..=8);
        let w = rng.random_range(1..=8);
        let (a, b) = (random_mask(&mut rng, h, w), random_mask(&mut rng, h, w));
        for tol in 1..=3 {
            let (got, want) = (frame_boundary_f(&a, &b, tol), brute_boundary_f(&a, &b, tol));
            ensure!(
                (got - want).abs() <= 1e-12,
                "boundary F {got} vs {want} at tol {tol}"
            );
        }
        fpairs += 1;
    }

    for _ in 0..500 {
        let (h, w) = (rng.random_range(4..=16), rng.random_range(4..=16));
        let frames = rng.random_range(1..=3);
        let mk = |rng: &mut ChaCha8Rng| {
            MaskSequence::new("c", (h, w), (0..frames).map(|_| random_mask(rng, h, w)).collect()).unwrap()
        };
        let (a, b) = (mk(&mut rng), mk(&mut rng));
        let mut prev = 0.0;
        for tol in 1..=5 {
            let f = boundary_f(&a, &b, tol).map_err(|e| e.to_string())?;
            ensure!(f + 1e-12 >= prev, "F fell from {prev} to {f} at tolerance {tol}");
            prev = f;
        }
    }
    Ok(format!("{pairs} J pairs, {fpairs} F pairs, 500 monotone"))
}

// 6 -------------------------------------------------------------------------

fn aggregation() -> Outcome {
    let row = format!(
        "{} {} {}",
        format_percent(0.641),
        format_percent(0.742),
        format_percent(jf(0.641, 0.742))
    );
    ensure!(row == "64.1 74.2 69.2", "row {row}");

    let scores = vec![
        (ClipScore::new("s1", 1.0, 1.0), Subset::Seen),
        (ClipScore::new("s2", 1.0, 1.0), Subset::Seen),
        (ClipScore::new("u1", 0.0, 0.0), Subset::Unseen),
    ];
    let reports = aggregate(&scores).map_err(|e| e.to_string())?;
    let mix = reports.iter().find(|r| r.subset == MIX).ok_or("no Mix row")?;
    ensure!(
        (mix.jf - 2.0 / 3.0).abs() < 1e-12,
        "Mix J&F {} is not the clip mean 2/3",
        mix.jf
    );
    ensure!(mix.jf != 0.5, "Mix equals the subset mean");

    let mut with_null = scores.clone();
    with_null.push((ClipScore::new("n1", 0.0, 0.0), Subset::Null));
    let again = aggregate(&with_null).map_err(|e| e.to_string())?;
    ensure!(again == reports, "Null clip changed the report");
    ensure!(!again.iter().any(|r| r.subset == "Null"), "Null row reported");
    ensure!(
        aggregate(&[(ClipScore::new("n", 0.0, 0.0), Subset::Null)]).is_err(),
        "Null-only aggregate accepted"
    );
    Ok("69.2, Mix 66.7, Null excluded".into())
}

// 7 -------------------------------------------------------------------------

fn ravs(args: &[&str]) -> Result<String, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_ravs"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!(
            "ravs {args:?} failed: {}",
            String::from_utf8_lossy(&out.stderr)
        ));
    }
    Ok(String::from_utf8_lossy(&out.stdout).into_owned())
}

/// Masks, scores and timing-free traces of a run, keyed by relative path.
fn outputs(run: &Path) -> Result<BTreeMap<String, Vec<u8>>, String> {
    let mut files = BTreeMap::new();
    let mut stack = vec![run.join("masks"), run.join("traces")];
    while let Some(dir) = stack.pop() {
        for e in fs::read_dir(&dir).map_err(|e| format!("{}: {e}", dir.display()))? {
            let p = e.map_err(|e| e.to_string())?.path();
            if p.is_dir() {
                stack.push(p);
                continue;
            }
            let key = p.strip_prefix(run).unwrap().display().to_string();
            let bytes = if p.extension().is_some_and(|x| x == "jsonl") {
                timing_free_lines(&p)
                    .map_err(|e| e.to_string())?
                    .join("\n")
                    .into_bytes()
            } else {
                fs::read(&p).map_err(|e| e.to_string())?
            };
            files.insert(key, bytes);
        }
    }
    files.insert(
        "scores.csv".into(),
        fs::read(run.join("scores.csv")).map_err(|e| e.to_string())?,
    );
    Ok(files)
}

fn same_outputs(a: &Path, b: &Path) -> Result<usize, String> {
    let (x, y) = (outputs(a)?, outputs(b)?);
    ensure!(x.keys().eq(y.keys()), "file sets differ");
    for (k, v) in &x {
        ensure!(
            y[k] == *v,
            "{k} differs between {} and {}",
            a.display(),
            b.display()
        );
    }
    Ok(x.len())
}

fn end_to_end() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let fx = dir.path().join("fx");
    ravs(&["make-fixture", "--out", fx.to_str().unwrap()])?;
    let config = fx.join("run.toml");
    let cfg = config.to_str().unwrap();
    let run = |name: &str, extra: &[&str]| {
        let out = dir.path().join(name);
        let mut args = vec!["run", "--config", cfg, "--out", out.to_str().unwrap()];
        args.extend_from_slice(extra);
        ravs(&args).map(|_| out)
    };
    let a = run("a", &[])?;
    let b = run("b", &[])?;
    let files = same_outputs(&a, &b)?;
    let manifest = RunManifest::load(&a).map_err(|e| e.to_string())?;
    ensure!(manifest.clips.len() == 5, "{} clips", manifest.clips.len());
    ensure!(manifest.seal_holds(&a), "config snapshot hash mismatch");

    // interrupted after two clips, then resumed
    let c = run("c", &["--limit", "2"])?;
    run("c", &["--resume"])?;
    let resumed = RunManifest::load(&c).map_err(|e| e.to_string())?;
    ensure!(
        resumed.executed() == ["f03-piano", "f04-bird", "f05-trumpet"],
        "resume executed {:?}",
        resumed.executed()
    );
    same_outputs(&a, &c)?;

    // a torn trace marks its clip unfinished
    let torn = c.join("traces/f02-guitar.jsonl");
    let text = fs::read_to_string(&torn).map_err(|e| e.to_string())?;
    let kept: Vec<_> = text.lines().filter(|l| !l.contains("\"kind\":\"end\"")).collect();
    fs::write(&torn, kept.join("\n") + "\n").map_err(|e| e.to_string())?;
    run("c", &["--resume"])?;
    let again = RunManifest::load(&c).map_err(|e| e.to_string())?;
    ensure!(
        again.executed() == ["f02-guitar"],
        "second resume executed {:?}",
        again.executed()
    );
    same_outputs(&a, &c)?;
    Ok(format!("{files} files identical, resume reran 3 then 1 clip"))
}

// 8 -------------------------------------------------------------------------

fn reflective_correction() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let fx = make_fixture(dir.path(), &FixtureOptions::default()).map_err(|e| e.to_string())?;
    let mut scores = Vec::new();
    for n in [0u32, 1, 2] {
        let mut config = fx.load_config();
        config.pipeline.max_reflect = n;
        config.output.dir = dir.path().join(format!("n{n}"));
        config.dataset.subsets = vec![Subset::Seen];
        run_pipeline(&config, RunOptions::default()).map_err(|e| e.to_string())?;
        let record = ClipRecord::load(&config.output_dir(), HAIRDRYER).map_err(|e| e.to_string())?;
        let score = record.score.ok_or("hair-dryer clip not scored")?;
        scores.push(score.jf);
    }
    ensure!(scores[0] < 0.2, "J&F at N=0 is {}", scores[0]);
    ensure!(
        scores[1] == 1.0 && scores[2] == 1.0,
        "J&F at N=1,2 is {:?}",
        &scores[1..]
    );
    Ok(format!("J&F N=0 {:.3}, N>=1 {:.3}", scores[0], scores[1]))
}

fn main() {
    let criteria: [Criterion; 8] = [
        (
            "1 difficulty rule exhaustiveness",
            Duration::from_secs(1),
            difficulty_rule,
        ),
        (
            "2 consensus call-count law",
            Duration::from_secs(5),
            cmr_call_count,
        ),
        ("3 reasoning routing law", Duration::from_secs(5), cor_routing),
        ("4 reflection budget law", Duration::from_secs(5), rls_budget),
        (
            "5 metric oracle equivalence",
            Duration::from_secs(60),
            metric_oracles,
        ),
        ("6 aggregation fidelity", Duration::from_secs(1), aggregation),
        (
            "7 end-to-end mock determinism",
            Duration::from_secs(30),
            end_to_end,
        ),
        (
            "8 reflective correction efficacy",
            Duration::from_secs(10),
            reflective_correction,
        ),
    ];
    let mut failed = 0;
    let mut out = std::io::stdout().lock();
    for (name, budget, run) in criteria {
        let start = Instant::now();
        let result = std::panic::catch_unwind(run).unwrap_or_else(|_| Err("panicked".into()));
        let elapsed = start.elapsed();
        let result = match result {
            Ok(_) if elapsed > budget => Err(format!("took {elapsed:?}, budget {budget:?}")),
            r => r,
        };
        let line = match &result {
            Ok(detail) => format!("PASS  {name}  ({detail}; {} ms)", elapsed.as_millis()),
            Err(why) => {
                failed += 1;
                format!("FAIL  {name}  ({why})")
            }
        };
        let _ = writeln!(out, "{line}");
    }
    let _ = writeln!(out, "acceptance: {} passed, {failed} failed", 8 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
