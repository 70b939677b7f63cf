mod commands;
mod config;
mod form;
mod table;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use gef_core::gef::persist::{is_model, peek_path};
use gef_core::gef::EfMode;
use gef_core::models::EncoderKind;
use gef_core::text::schema::Schema;
use gef_core::text::split::SplitName;
use gef_core::{GefError, Result};

use commands::{EvalArgs, ExplainArgs, PretrainArgs, TrainArgs, Ui};
use config::{FileConfig, Overrides, RunConfig};
use form::{Numeric, Text};

#[derive(Parser)]
#[command(name = "gef", version, about = "Explainable text classification with an explanation factor")]
struct Cli {
    /// Seed for synthesis, initialisation and batch order.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// TOML file with [data], [model], [train] and [classifier] sections.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Only warnings and errors on stderr.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum SchemaArg {
    Pcmag,
    Skytrax,
}

impl From<SchemaArg> for Schema {
    fn from(s: SchemaArg) -> Self {
        match s {
            SchemaArg::Pcmag => Schema::PcMag,
            SchemaArg::Skytrax => Schema::Skytrax,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum EncoderArg {
    Bow,
    Gru,
    Lstm,
    Cnn,
}

impl From<EncoderArg> for EncoderKind {
    fn from(e: EncoderArg) -> Self {
        match e {
            EncoderArg::Bow => EncoderKind::Bow,
            EncoderArg::Gru => EncoderKind::Gru,
            EncoderArg::Lstm => EncoderKind::Lstm,
            EncoderArg::Cnn => EncoderKind::Cnn,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum EfArg {
    SoftThroughC,
    StopGradient,
}

impl From<EfArg> for EfMode {
    fn from(e: EfArg) -> Self {
        match e {
            EfArg::SoftThroughC => EfMode::SoftThroughC,
            EfArg::StopGradient => EfMode::StopGradient,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    Baseline,
    Gef,
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    Train,
    Dev,
    Test,
}

impl From<SplitArg> for SplitName {
    fn from(s: SplitArg) -> Self {
        match s {
            SplitArg::Train => SplitName::Train,
            SplitArg::Dev => SplitName::Dev,
            SplitArg::Test => SplitName::Test,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Table,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic JSONL corpus.
    Synth {
        #[arg(long, value_enum)]
        schema: SchemaArg,
        #[arg(long)]
        n: usize,
        /// Defaults to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Pre-train and freeze the classifier C on golden explanations.
    PretrainC {
        #[arg(long, value_enum)]
        schema: SchemaArg,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Per-epoch JSONL log.
        #[arg(long)]
        log: Option<PathBuf>,
        #[arg(long)]
        max_epochs: Option<usize>,
    },
    /// Train a baseline or GEF model.
    Train {
        #[arg(long, value_enum)]
        schema: SchemaArg,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, value_enum, default_value = "gef")]
        mode: Mode,
        /// Frozen classifier checkpoint from `pretrain-c`; required in gef mode.
        #[arg(long)]
        classifier: Option<PathBuf>,
        /// Checkpoint written after every epoch.
        #[arg(long)]
        out: PathBuf,
        /// Continue from a checkpoint written by an earlier run.
        #[arg(long)]
        resume: Option<PathBuf>,
        /// Per-epoch JSONL log, rewritten after every epoch.
        #[arg(long)]
        log: Option<PathBuf>,
        /// Per-step JSONL log (enables step recording).
        #[arg(long)]
        steps_log: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
        /// Stop once this many epochs are complete.
        #[arg(long)]
        halt_after: Option<usize>,
        #[arg(long, value_enum)]
        encoder: Option<EncoderArg>,
        #[arg(long)]
        hidden_dim: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        batch_size: Option<usize>,
        #[arg(long, value_enum)]
        ef_mode: Option<EfArg>,
    },
    /// Score a trained model on one split of a corpus.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, value_enum, default_value = "test")]
        split: SplitArg,
        /// Also score generated explanations with C.
        #[arg(long)]
        classifier: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "table")]
        format: Format,
        /// JSON report file.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Predicted labels and generated explanations next to the golden ones.
    Explain {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        input: PathBuf,
        /// Defaults to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        limit: Option<usize>,
    },
}

fn run(cli: Cli) -> Result<()> {
    let ui = Ui { quiet: cli.quiet };
    let file = FileConfig::load(cli.config.as_deref())?;
    let resolve = |schema: Schema, flags: &Overrides| RunConfig::resolve(schema, cli.seed, &file, flags);
    match cli.command {
        Command::Synth { schema, n, out } => match schema.into() {
            Schema::Skytrax => commands::synth::<Numeric>(n, cli.seed, out.as_deref()),
            Schema::PcMag => commands::synth::<Text>(n, cli.seed, out.as_deref()),
        },
        Command::PretrainC {
            schema,
            corpus,
            out,
            log,
            max_epochs,
        } => {
            let schema = schema.into();
            let cfg = resolve(
                schema,
                &Overrides {
                    max_epochs,
                    ..Overrides::default()
                },
            )?;
            let args = PretrainArgs {
                corpus: &corpus,
                out: &out,
                log: log.as_deref(),
            };
            match schema {
                Schema::Skytrax => commands::pretrain::<Numeric>(&cfg, args, ui),
                Schema::PcMag => commands::pretrain::<Text>(&cfg, args, ui),
            }
        }
        Command::Train {
            schema,
            corpus,
            mode,
            classifier,
            out,
            resume,
            log,
            steps_log,
            epochs,
            halt_after,
            encoder,
            hidden_dim,
            lr,
            batch_size,
            ef_mode,
        } => {
            let schema = schema.into();
            if mode == Mode::Gef && classifier.is_none() {
                return Err(GefError::validation("gef mode needs --classifier from pretrain-c"));
            }
            if let Some(p) = &resume {
                expect_model(p, schema)?;
            }
            let flags = Overrides {
                encoder: encoder.map(Into::into),
                hidden_dim,
                epochs,
                lr,
                batch_size,
                ef_mode: ef_mode.map(Into::into),
                max_epochs: None,
            };
            let mut cfg = resolve(schema, &flags)?;
            if mode == Mode::Baseline {
                cfg.baseline();
            }
            cfg.train.record_steps |= steps_log.is_some();
            let args = TrainArgs {
                corpus: &corpus,
                out: &out,
                classifier: classifier.as_deref(),
                resume: resume.as_deref(),
                log: log.as_deref(),
                steps_log: steps_log.as_deref(),
                halt_after,
                epochs_override: epochs,
            };
            match schema {
                Schema::Skytrax => commands::train::<Numeric>(&cfg, args, ui),
                Schema::PcMag => commands::train::<Text>(&cfg, args, ui),
            }
        }
        Command::Eval {
            checkpoint,
            corpus,
            split,
            classifier,
            format,
            report,
        } => {
            let schema = model_schema(&checkpoint)?;
            let cfg = resolve(schema, &Overrides::default())?;
            let args = EvalArgs {
                checkpoint: &checkpoint,
                corpus: &corpus,
                split: split.into(),
                classifier: classifier.as_deref(),
                report: report.as_deref(),
                json: format == Format::Json,
            };
            match schema {
                Schema::Skytrax => commands::eval::<Numeric>(&cfg, args, ui),
                Schema::PcMag => commands::eval::<Text>(&cfg, args, ui),
            }
        }
        Command::Explain {
            checkpoint,
            input,
            out,
            limit,
        } => {
            let args = ExplainArgs {
                checkpoint: &checkpoint,
                input: &input,
                out: out.as_deref(),
                limit,
            };
            match model_schema(&checkpoint)? {
                Schema::Skytrax => commands::explain::<Numeric>(args, ui),
                Schema::PcMag => commands::explain::<Text>(args, ui),
            }
        }
    }
}

fn model_schema(path: &Path) -> Result<Schema> {
    let (kind, schema) = peek_path(path)?;
    if !is_model(&kind) {
        return Err(GefError::validation(format!(
            "{} is a {kind} checkpoint, not a model",
            path.display()
        )));
    }
    Ok(schema)
}

fn expect_model(path: &Path, schema: Schema) -> Result<()> {
    let found = model_schema(path)?;
    if found != schema {
        return Err(GefError::validation(format!(
            "{} holds a {found} model, not {schema}",
            path.display()
        )));
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                GefError::Divergence { .. } => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}

