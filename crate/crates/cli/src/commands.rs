use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use gef_core::gef::network::oracle_report;
use gef_core::gef::{build_vocab, encode_all, pretrain_classifier, Classifier, Model, Network, Trainer};
use gef_core::text::schema::{load_jsonl, write_jsonl, Record};
use gef_core::text::split::{filter_and_split, CorpusSplit, SplitName};
use gef_core::{GefError, Result};
use gef_tensor::Checkpoint;
use serde::Serialize;

use crate::config::RunConfig;
use crate::form::{ClsOf, Form, ItemOf};
use crate::table;

/// Progress messages on stderr, silenced by `--quiet`.
#[derive(Debug, Clone, Copy)]
pub struct Ui {
    pub quiet: bool,
}

impl Ui {
    pub fn note(&self, msg: impl std::fmt::Display) {
        if !self.quiet {
            eprintln!("{msg}");
        }
    }

    /// Warnings are shown even when quiet.
    pub fn warn(&self, msg: impl std::fmt::Display) {
        eprintln!("warning: {msg}");
    }
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(std::io::stdout().lock())),
    })
}

/// Write to a sibling temp file, then rename, so a crash never leaves a
/// truncated checkpoint behind.
fn save_atomic(ckpt: &Checkpoint, path: &Path) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    ckpt.save(&tmp)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

fn write_json_lines<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for r in rows {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_corpus<R: Record>(path: &Path, ui: Ui) -> Result<Vec<R>> {
    let report = load_jsonl::<R>(path)?;
    for d in &report.diagnostics {
        ui.warn(format!("{}: {d}", path.display()));
    }
    if report.examples.is_empty() {
        return Err(GefError::EmptyCorpus);
    }
    Ok(report.examples)
}

fn split_corpus<F: Form>(path: &Path, cfg: &RunConfig, ui: Ui) -> Result<CorpusSplit<F::Record>> {
    let split = filter_and_split(load_corpus::<F::Record>(path, ui)?, cfg.split_seed)?;
    ui.note(format!(
        "corpus: {} train / {} dev / {} test",
        split.train.len(),
        split.dev.len(),
        split.test.len()
    ));
    if split.dev.is_empty() {
        return Err(GefError::validation("corpus too small for a dev split"));
    }
    Ok(split)
}

pub fn synth<F: Form>(n: usize, seed: u64, out: Option<&Path>) -> Result<()> {
    let mut w = output(out)?;
    write_jsonl(&F::synth(n, seed), &mut w)?;
    w.flush()?;
    Ok(())
}

pub struct PretrainArgs<'a> {
    pub corpus: &'a Path,
    pub out: &'a Path,
    pub log: Option<&'a Path>,
}

pub fn pretrain<F: Form>(cfg: &RunConfig, args: PretrainArgs<'_>, ui: Ui) -> Result<()> {
    let split = split_corpus::<F>(args.corpus, cfg, ui)?;
    let vocab = build_vocab(&split.train, cfg.min_freq);
    let train = encode_all(&split.train, &vocab)?;
    let dev = encode_all(&split.dev, &vocab)?;
    let test = encode_all(&split.test, &vocab)?;
    let mut cls = Classifier::<ClsOf<F>>::new(F::classifier_config(cfg, &vocab), vocab.clone(), cfg.train.seed)?;
    let logs = pretrain_classifier(&mut cls, &train, &dev, &cfg.classifier.pretrain)?;
    for l in &logs {
        ui.note(format!("epoch {}: loss {:.4}, dev acc {:.2}", l.epoch, l.loss, l.dev_acc));
    }
    if let Some(p) = args.log {
        write_json_lines(p, &logs)?;
    }
    save_atomic(&cls.to_checkpoint()?, args.out)?;
    let mut w = output(None)?;
    writeln!(w, "{:<16}{:>9}{:>9}", "Oracle", "Acc%", "Top-3%")?;
    for (name, items) in [("dev", &dev), ("test", &test)] {
        if items.is_empty() {
            continue;
        }
        let r = oracle_report(&cls.net, &cls.store, items)?;
        writeln!(w, "{name:<16}{:>9.2}{:>9.2}", r.top1, r.top3)?;
    }
    w.flush()?;
    Ok(())
}

pub struct TrainArgs<'a> {
    pub corpus: &'a Path,
    pub out: &'a Path,
    pub classifier: Option<&'a Path>,
    pub resume: Option<&'a Path>,
    pub log: Option<&'a Path>,
    pub steps_log: Option<&'a Path>,
    /// Stop after this many completed epochs (checkpoint kept for resume).
    pub halt_after: Option<usize>,
    pub epochs_override: Option<usize>,
}

pub fn train<F: Form>(cfg: &RunConfig, args: TrainArgs<'_>, ui: Ui) -> Result<()> {
    let split = split_corpus::<F>(args.corpus, cfg, ui)?;
    let classifier = args
        .classifier
        .map(|p| Classifier::<ClsOf<F>>::from_checkpoint(&Checkpoint::load(p)?))
        .transpose()?;
    let resume = args.resume.map(Checkpoint::load).transpose()?;
    let vocab = match &resume {
        Some(ck) => Model::<F::Net>::from_checkpoint(ck)?.vocab,
        None => build_vocab(&split.train, cfg.min_freq),
    };
    let train: Vec<ItemOf<F>> = encode_all(&split.train, &vocab)?;
    let dev: Vec<ItemOf<F>> = encode_all(&split.dev, &vocab)?;
    let mut trainer = match &resume {
        Some(ck) => Trainer::<F::Net>::resume(ck, classifier.as_ref(), &train, &dev, args.epochs_override)?,
        None => {
            let model = Model::<F::Net>::new(F::net_config(cfg, &vocab), vocab.clone(), cfg.train.seed)?;
            Trainer::new(model, classifier.as_ref(), &train, &dev, cfg.train.clone())?
        }
    };
    ui.note(format!(
        "training {} from epoch {} to {} ({} params)",
        F::Net::SCHEMA,
        trainer.state.epoch,
        trainer.config.epochs,
        trainer.model.store.num_scalars()
    ));
    let mut stdout = output(None)?;
    while !trainer.is_done() {
        let log = trainer.run_epoch()?;
        serde_json::to_writer(&mut stdout, &log)?;
        stdout.write_all(b"\n")?;
        stdout.flush()?;
        save_atomic(&trainer.checkpoint()?, args.out)?;
        if let Some(p) = args.log {
            write_json_lines(p, trainer.logs())?;
        }
        if trainer.state.predictor_frozen {
            ui.note(format!("epoch {}: predictor frozen", log.epoch));
        }
        if args.halt_after.is_some_and(|h| trainer.state.epoch >= h) {
            ui.note(format!("halting after epoch {}", log.epoch));
            break;
        }
    }
    if let Some(p) = args.steps_log {
        write_json_lines(p, &trainer.steps)?;
    }
    Ok(())
}

pub struct EvalArgs<'a> {
    pub checkpoint: &'a Path,
    pub corpus: &'a Path,
    pub split: SplitName,
    pub classifier: Option<&'a Path>,
    pub report: Option<&'a Path>,
    pub json: bool,
}

pub fn eval<F: Form>(cfg: &RunConfig, args: EvalArgs<'_>, ui: Ui) -> Result<()> {
    let model = Model::<F::Net>::load(args.checkpoint)?;
    let split = split_corpus::<F>(args.corpus, cfg, ui)?;
    let items = encode_all(split.get(args.split), &model.vocab)?;
    if items.is_empty() {
        return Err(GefError::validation(format!("{:?} split is empty", args.split)));
    }
    let classifier = args
        .classifier
        .map(|p| Classifier::<ClsOf<F>>::from_checkpoint(&Checkpoint::load(p)?))
        .transpose()?;
    if let Some(c) = &classifier {
        if c.vocab != model.vocab {
            return Err(GefError::validation("classifier vocabulary differs from the model's"));
        }
    }
    let report = model
        .net
        .evaluate(&model.store, &model.vocab, &items, classifier.as_ref().map(|c| (&c.net, &c.store)))?;
    if let Some(p) = args.report {
        let mut w = BufWriter::new(File::create(p)?);
        serde_json::to_writer_pretty(&mut w, &report)?;
        w.write_all(b"\n")?;
        w.flush()?;
    }
    let mut w = output(None)?;
    if args.json {
        serde_json::to_writer(&mut w, &report)?;
        w.write_all(b"\n")?;
    } else {
        let name = match args.split {
            SplitName::Train => "train",
            SplitName::Dev => "dev",
            SplitName::Test => "test",
        };
        w.write_all(table::render(name, &report).as_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub struct ExplainArgs<'a> {
    pub checkpoint: &'a Path,
    pub input: &'a Path,
    pub out: Option<&'a Path>,
    pub limit: Option<usize>,
}

pub fn explain<F: Form>(args: ExplainArgs<'_>, ui: Ui) -> Result<()> {
    let model = Model::<F::Net>::load(args.checkpoint)?;
    let mut examples = load_corpus::<F::Record>(args.input, ui)?;
    if let Some(n) = args.limit {
        examples.truncate(n);
    }
    let items = encode_all(&examples, &model.vocab)?;
    let inf = model.net.infer(&model.store, &items)?;
    let mut w = output(args.out)?;
    for (ex, i) in examples.iter().zip(&inf) {
        serde_json::to_writer(&mut w, &F::explain(ex, i, &model.vocab)?)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}
