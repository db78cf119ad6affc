use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use log::error;

use ravs_core::config::RunConfig;
use ravs_core::dataset::fixture::{make_fixture, FixtureOptions};
use ravs_core::metrics::FMode;
use ravs_core::model::Subset;
use ravs_core::pipeline::{ablate_reflect, ablation_text, emit_report, evaluate, run_pipeline, RunOptions};
use ravs_core::reflect::KeepPolicy;
use ravs_core::report::render_text;
use ravs_core::trace::ClipStatusKind;

#[derive(Parser)]
#[command(
    name = "ravs",
    version,
    about = "Multi-agent referring audio-visual segmentation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every clip of the configured split and write the report.
    Run {
        #[command(flatten)]
        config: ConfigArgs,
        /// Skip clips whose trace and masks are already complete.
        #[arg(long)]
        resume: bool,
        /// Process only the first N clips.
        #[arg(long)]
        limit: Option<usize>,
    },
    /// Rescore stored masks against ground truth.
    Eval {
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Rerun reflective segmentation for several iteration caps.
    AblateReflect {
        #[command(flatten)]
        config: ConfigArgs,
        /// Iteration caps to compare.
        #[arg(long, value_delimiter = ',', default_value = "0,1,2,3")]
        n: Vec<u32>,
    },
    /// Rebuild report files from a run directory.
    Report {
        /// Run directory holding `clips/`.
        run_dir: PathBuf,
    },
    /// Check the configuration, mock script, templates and dataset index.
    ValidateConfig {
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Write a synthetic dataset with a mock script and run configuration.
    MakeFixture {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        extra_clips: usize,
        #[arg(long, default_value_t = 3)]
        frames: usize,
    },
}

#[derive(Args)]
struct ConfigArgs {
    /// TOML run configuration.
    #[arg(long, short)]
    config: PathBuf,
    /// Output run directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    dataset_root: Option<PathBuf>,
    #[arg(long)]
    split: Option<String>,
    /// Comma-separated subsets to keep, e.g. `seen,unseen`.
    #[arg(long, value_delimiter = ',')]
    subsets: Option<Vec<Subset>>,
    #[arg(long)]
    mock_script: Option<PathBuf>,
    #[arg(long)]
    fps: Option<f64>,
    #[arg(long)]
    audio_rate: Option<u32>,
    #[arg(long)]
    peer_rounds: Option<u32>,
    #[arg(long)]
    max_reflect: Option<u32>,
    #[arg(long, value_parser = parse_keep_policy)]
    keep_policy: Option<KeepPolicy>,
    #[arg(long)]
    fail_soft: Option<bool>,
    #[arg(long)]
    fast_path: Option<bool>,
    #[arg(long)]
    parallelism: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Boundary tolerance in pixels.
    #[arg(long)]
    tolerance: Option<usize>,
    #[arg(long, value_parser = parse_f_mode)]
    f_mode: Option<FMode>,
}

fn parse_keep_policy(s: &str) -> Result<KeepPolicy, String> {
    match s {
        "final" => Ok(KeepPolicy::Final),
        "best_by_check" | "best-by-check" => Ok(KeepPolicy::BestByCheck),
        _ => Err(format!("expected final or best_by_check, got {s}")),
    }
}

fn parse_f_mode(s: &str) -> Result<FMode, String> {
    match s {
        "boundary" => Ok(FMode::Boundary),
        "region" => Ok(FMode::Region),
        _ => Err(format!("expected boundary or region, got {s}")),
    }
}

fn cwd_path(p: &Path) -> Result<PathBuf> {
    std::path::absolute(p).with_context(|| format!("resolving {}", p.display()))
}

impl ConfigArgs {
    fn load(&self) -> Result<RunConfig> {
        let mut c = RunConfig::load(&self.config)?;
        if let Some(p) = &self.out {
            c.output.dir = cwd_path(p)?;
        }
        if let Some(p) = &self.dataset_root {
            c.dataset.root = cwd_path(p)?;
        }
        if let Some(p) = &self.mock_script {
            c.backends.mock_script = Some(cwd_path(p)?);
        }
        if let Some(s) = &self.split {
            c.dataset.split = s.clone();
        }
        if let Some(s) = &self.subsets {
            c.dataset.subsets = s.clone();
        }
        let p = &mut c.pipeline;
        macro_rules! set {
            ($($field:ident => $target:expr),* $(,)?) => {
                $(if let Some(v) = self.$field.clone() { $target = v; })*
            };
        }
        set! {
            fps => c.dataset.fps,
            audio_rate => c.dataset.audio_rate,
            peer_rounds => p.peer_rounds,
            max_reflect => p.max_reflect,
            keep_policy => p.keep_policy,
            fail_soft => p.fail_soft,
            fast_path => p.fast_path,
            parallelism => p.parallelism,
            f_mode => c.metrics.f_mode,
        }
        if self.seed.is_some() {
            p.seed = self.seed;
        }
        if self.tolerance.is_some() {
            c.metrics.tolerance = self.tolerance;
        }
        Ok(c)
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run {
            config,
            resume,
            limit,
        } => {
            let config = config.load()?;
            let manifest = run_pipeline(&config, RunOptions { resume, limit })?;
            for c in &manifest.clips {
                let state = match (c.status, c.executed) {
                    (ClipStatusKind::Done, true) => "done".to_string(),
                    (ClipStatusKind::Done, false) => "done (resumed)".to_string(),
                    (ClipStatusKind::Failed, _) => {
                        format!("failed: {}", c.error_class.as_deref().unwrap_or("unknown"))
                    }
                };
                println!("{:<24} {}", c.clip_id, state);
            }
            if let Some(report) = &manifest.report {
                println!("\n{}", render_text(report));
            }
            println!("run directory: {}", config.output_dir().display());
            Ok(())
        }
        Command::Eval { config } => {
            let report = evaluate(&config.load()?)?;
            print!("{}", render_text(&report));
            Ok(())
        }
        Command::AblateReflect { config, n } => {
            let rows = ablate_reflect(&config.load()?, &n)?;
            print!("{}", ablation_text(&rows));
            Ok(())
        }
        Command::Report { run_dir } => {
            let report = emit_report(&run_dir)?;
            print!("{}", render_text(&report));
            Ok(())
        }
        Command::ValidateConfig { config } => {
            let config = config.load()?;
            config.validate()?;
            let index = ravs_core::pipeline::configured_index(&config)?;
            println!(
                "configuration valid: {} clips in split {}",
                index.entries.len(),
                config.dataset.split
            );
            Ok(())
        }
        Command::MakeFixture {
            out,
            extra_clips,
            frames,
        } => {
            let f = make_fixture(
                &out,
                &FixtureOptions {
                    extra_clips,
                    frames,
                    ..Default::default()
                },
            )?;
            println!("fixture with {} clips written; run it with", f.clip_ids.len());
            println!("  ravs run --config {}", f.config.display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            error!("{e:#}");
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
