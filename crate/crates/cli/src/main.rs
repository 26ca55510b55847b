use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use spinlab_core::causality::{
    verify_causality, BaselineProcessor, CausalityReport, CommandProcessor, Processor, Transform, TransformProcessor,
};
use spinlab_core::dataset::Split;
use spinlab_core::enhance::MAX_LOOKAHEAD_MS;
use spinlab_core::exec::configure_threads;
use spinlab_core::harness::pipeline::{self, EnhancerKind};
use spinlab_core::harness::{ingest_entry, EntryKind, PipelineConfig, Workspace};
use spinlab_core::listener::Audiogram;
use spinlab_core::scene::{ChannelLabel, Ear};
use spinlab_core::{wav, Error, Execution, Result};

#[derive(Parser)]
#[command(name = "spinlab", version, about = "Simulated hearing-aid speech-in-noise challenge")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Pipeline config (JSON). Defaults to <out>/config.json when present.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override the master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Workspace directory.
    #[arg(long, global = true, default_value = "spinlab-out")]
    out: PathBuf,
    /// Worker threads; 1 runs everything sequentially, 0 uses all cores.
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Sample scene specifications.
    GenScenes(Common),
    /// Render the sampled scenes to audio.
    Render(Common),
    /// Generate the listener population.
    GenListeners(Common),
    /// Refit the intelligibility map on the training split.
    FitLogistic(Common),
    /// Produce an enhancement entry with a built-in processor.
    Enhance {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "baseline")]
        processor: ProcessorArg,
        #[arg(long, default_value = "baseline")]
        entry_id: String,
        #[arg(long, default_value = "baseline")]
        team_id: String,
        #[arg(long, value_enum, default_value = "test")]
        split: SplitArg,
    },
    /// Apply the hearing-loss model to an enhancement entry.
    Degrade {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        entry: PathBuf,
    },
    /// Run the simulated listening panel on an enhancement entry.
    Panel {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        entry: PathBuf,
    },
    /// Baseline intelligibility predictions for an enhancement entry.
    Predict {
        #[command(flatten)]
        common: Common,
        /// Enhancement entry whose signals are scored.
        #[arg(long)]
        enhanced: PathBuf,
        #[arg(long, default_value = "baseline-pred")]
        entry_id: String,
        #[arg(long, default_value = "baseline")]
        team_id: String,
    },
    /// Causality gate plus panel score for an enhancement entry.
    ScoreEnh {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        entry: PathBuf,
    },
    /// Mean squared error of a prediction entry against a panel table.
    ScorePred {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        entry: PathBuf,
        #[arg(long)]
        panel: PathBuf,
    },
    /// Rank every scored entry of one challenge.
    Rank {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        challenge: ChallengeArg,
    },
    /// Probe a processor for lookahead.
    VerifyCausality {
        #[command(flatten)]
        common: Common,
        /// Built-in transform, e.g. `passthrough`, `delay:2`, `advance:6`.
        #[arg(long, conflicts_with_all = ["baseline", "command"])]
        transform: Option<String>,
        /// The baseline aid for the given audiogram file (flat 40 dB HL if absent).
        #[arg(long)]
        baseline: bool,
        #[arg(long, requires = "baseline")]
        audiogram: Option<PathBuf>,
        /// External program, called as `<cmd..> <in.wav> <out.wav>`.
        #[arg(long, num_args = 1.., allow_hyphen_values = true)]
        command: Option<Vec<String>>,
        #[arg(long, default_value_t = 2)]
        channels: usize,
        #[arg(long, default_value_t = 44_100)]
        sample_rate: u32,
        #[arg(long, default_value_t = MAX_LOOKAHEAD_MS)]
        max_lookahead_ms: f64,
    },
    /// Every stage end to end.
    RunAll(Common),
    /// Apply a built-in transform to a WAV file (used as an external processor).
    #[command(hide = true)]
    Process {
        #[arg(long)]
        transform: String,
        input: PathBuf,
        output: PathBuf,
    },
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum ProcessorArg {
    Baseline,
    Passthrough,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum SplitArg {
    Train,
    Dev,
    Test,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum ChallengeArg {
    Enhancement,
    Prediction,
}

impl Common {
    fn workspace(&self) -> Workspace {
        Workspace::new(&self.out)
    }

    fn exec(&self) -> Execution {
        configure_threads(self.jobs);
        Execution::from_jobs(self.jobs)
    }

    fn pipeline_config(&self) -> Result<PipelineConfig> {
        let saved = self.workspace().config();
        let mut cfg = match &self.config {
            Some(path) => PipelineConfig::load(path)?,
            None if saved.is_file() => PipelineConfig::load(&saved)?,
            None => PipelineConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Config(e.to_string()))?;
    println!("{text}");
    Ok(())
}

fn causality_processor(
    transform: Option<String>,
    baseline: bool,
    audiogram: Option<&Path>,
    command: Option<Vec<String>>,
    channels: usize,
    cfg: &PipelineConfig,
) -> Result<Box<dyn Processor>> {
    if let Some(t) = transform {
        return Ok(Box::new(TransformProcessor {
            transform: t.parse::<Transform>()?,
            channels,
        }));
    }
    if baseline {
        let audiogram = match audiogram {
            Some(p) => Audiogram::load(p)?,
            None => Audiogram::flat("probe", 40.0),
        };
        if channels < 2 || channels % 2 != 0 {
            return Err(Error::InvalidArgument(format!(
                "the baseline aid needs an even number of channels, got {channels}"
            )));
        }
        // Left mics first, then right, as on the rendered signal sets.
        let per_ear = channels / 2;
        let labels = Ear::BOTH
            .iter()
            .flat_map(|&ear| (0..per_ear).map(move |i| ChannelLabel::new(ear, i)))
            .collect();
        return Ok(Box::new(BaselineProcessor {
            config: cfg.processor.clone(),
            audiogram,
            channels: labels,
        }));
    }
    if let Some(argv) = command {
        let (program, args) = argv
            .split_first()
            .ok_or_else(|| Error::InvalidArgument("--command needs a program".into()))?;
        return Ok(Box::new(CommandProcessor {
            program: program.into(),
            args: args.to_vec(),
            channels,
        }));
    }
    Err(Error::InvalidArgument(
        "give one of --transform, --baseline or --command".into(),
    ))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenScenes(c) => {
            let cfg = c.pipeline_config()?;
            let ws = c.workspace();
            cfg.save(&ws.config())?;
            let plan = pipeline::gen_scenes(&cfg, &ws)?;
            println!("{} scenes -> {}", plan.scenes.len(), ws.scenes().display());
        }
        Command::Render(c) => {
            let cfg = c.pipeline_config()?;
            let data = pipeline::render(&cfg, &c.workspace(), c.exec())?;
            println!("rendered {} scenes at {} Hz", data.scenes.len(), data.sample_rate);
        }
        Command::GenListeners(c) => {
            let cfg = c.pipeline_config()?;
            let ws = c.workspace();
            let listeners = pipeline::gen_listeners(&cfg, &ws)?;
            println!("{} listeners -> {}", listeners.len(), ws.listeners().display());
        }
        Command::FitLogistic(c) => {
            let cfg = c.pipeline_config()?;
            print_json(&pipeline::fit_map(&cfg, &c.workspace(), c.exec())?)?;
        }
        Command::Enhance {
            common,
            processor,
            entry_id,
            team_id,
            split,
        } => {
            let cfg = common.pipeline_config()?;
            let kind = match processor {
                ProcessorArg::Baseline => EnhancerKind::Baseline,
                ProcessorArg::Passthrough => EnhancerKind::Passthrough,
            };
            let split = match split {
                SplitArg::Train => Split::Train,
                SplitArg::Dev => Split::Dev,
                SplitArg::Test => Split::Test,
            };
            let path = pipeline::enhance_entry(&cfg, &common.workspace(), kind, &entry_id, &team_id, split, common.exec())?;
            println!("{}", path.display());
        }
        Command::Degrade { common, entry } => {
            let cfg = common.pipeline_config()?;
            let ws = common.workspace();
            let data = pipeline::load_dataset(&ws)?;
            let listeners = pipeline::load_listeners(&ws)?;
            let cov = pipeline::coverage(&data, &listeners, Split::Test);
            let ingested = ingest_entry(&entry, EntryKind::Enhancement, &cov)?;
            let dir = pipeline::degrade(&cfg, &ws, &ingested, common.exec())?;
            println!("{}", dir.display());
        }
        Command::Panel { common, entry } => {
            let cfg = common.pipeline_config()?;
            let ws = common.workspace();
            let data = pipeline::load_dataset(&ws)?;
            let listeners = pipeline::load_listeners(&ws)?;
            let cov = pipeline::coverage(&data, &listeners, Split::Test);
            let ingested = ingest_entry(&entry, EntryKind::Enhancement, &cov)?;
            let table = pipeline::panel_for_entry(&cfg, &ws, &ingested, common.exec())?;
            println!(
                "mean SI {:.4} over {} responses -> {}",
                table.mean_si(),
                table.responses.len(),
                ws.panel_table(&ingested.entry.entry_id).display()
            );
        }
        Command::Predict {
            common,
            enhanced,
            entry_id,
            team_id,
        } => {
            let cfg = common.pipeline_config()?;
            let ws = common.workspace();
            let data = pipeline::load_dataset(&ws)?;
            let listeners = pipeline::load_listeners(&ws)?;
            let cov = pipeline::coverage(&data, &listeners, Split::Test);
            let ingested = ingest_entry(&enhanced, EntryKind::Enhancement, &cov)?;
            let path = pipeline::predict_entry(&cfg, &ws, &ingested, &entry_id, &team_id, common.exec())?;
            println!("{}", path.display());
        }
        Command::ScoreEnh { common, entry } => {
            let cfg = common.pipeline_config()?;
            print_json(&pipeline::score_enhancement(&cfg, &common.workspace(), &entry, common.exec())?)?;
        }
        Command::ScorePred { common, entry, panel } => {
            print_json(&pipeline::score_prediction(&common.workspace(), &entry, &panel)?)?;
        }
        Command::Rank { common, challenge } => {
            let kind = match challenge {
                ChallengeArg::Enhancement => EntryKind::Enhancement,
                ChallengeArg::Prediction => EntryKind::Prediction,
            };
            print_json(&pipeline::rank(&common.workspace(), kind)?)?;
        }
        Command::VerifyCausality {
            common,
            transform,
            baseline,
            audiogram,
            command,
            channels,
            sample_rate,
            max_lookahead_ms,
        } => {
            let cfg = if baseline {
                common.pipeline_config()?
            } else {
                PipelineConfig::default()
            };
            let mut processor = causality_processor(transform, baseline, audiogram.as_deref(), command, channels, &cfg)?;
            let report: CausalityReport = verify_causality(processor.as_mut(), sample_rate, max_lookahead_ms)?;
            print_json(&report)?;
            if !report.passed {
                return Err(Error::Disqualified {
                    entry_id: "probe".into(),
                    lookahead_ms: report.measured_lookahead_ms,
                    limit_ms: max_lookahead_ms,
                });
            }
        }
        Command::RunAll(c) => {
            let cfg = c.pipeline_config()?;
            print_json(&pipeline::run_all(&cfg, &c.workspace(), c.exec())?)?;
        }
        Command::Process {
            transform,
            input,
            output,
        } => {
            let t: Transform = transform.parse()?;
            let audio = wav::read_wav(&input)?;
            let processed: Vec<Vec<f64>> = audio.channels.iter().map(|x| t.apply(x)).collect();
            let refs: Vec<&[f64]> = processed.iter().map(Vec::as_slice).collect();
            wav::write_wav(&output, audio.sample_rate, &refs)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::from(e.class().exit_code() as u8)
        }
    }
}
