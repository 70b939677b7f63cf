//! Acceptance report: one PASS/FAIL line per criterion.
//!
//! Run a subset with `cargo test -p gef-cli --test acceptance -- 4 5`.
//! The process fails on any FAIL except those listed in `KNOWN_UNATTAINED`,
//! whose analysis is in the README.

use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use gef_core::gef::network::oracle_report;
use gef_core::gef::train::{loss_terms, EfInputs};
use gef_core::gef::{
    build_vocab, encode_all, explanation_factor, final_loss, mrt_loss, pretrain_classifier, Classifier, EfMode,
    EvalReport, LossWeights, Model, Network, NumericItem, NumericNet, NumericNetConfig, PretrainConfig, ProbTriple,
    TextItem, TextNet, TextNetConfig, TrainConfig, Trainer,
};
use gef_core::metrics::{bleu, BleuStats};
use gef_core::models::{
    cvae::gaussian_kl, Cvae, CvaeConfig, EncoderConfig, EncoderKind, NumericClassifier, NumericClassifierConfig,
    TextClassifier, TextClassifierConfig,
};
use gef_core::text::schema::Schema;
use gef_core::text::split::filter_and_split;
use gef_core::text::{synth_numeric, synth_text, Vocab};
use gef_tensor::gradcheck::{check_gradients, op_cases};
use gef_tensor::{AdamConfig, AdamState, ParamStore, Tape, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const KNOWN_UNATTAINED: &[usize] = &[5];

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

// ---- 1: gradients ------------------------------------------------------

fn gradients() -> Verdict {
    let mut worst = (0.0, "");
    let mut checked = 0;
    let mut ops = 0;
    for seed in 0..3u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for case in op_cases(&mut rng) {
            let r = check_gradients(&case.inputs, 1e-3, &case.f).expect("gradient check runs");
            if r.max_rel_err > worst.0 {
                worst = (r.max_rel_err, case.name);
            }
            checked += r.checked;
            ops += 1;
        }
    }
    verdict(
        worst.0 < 1e-4,
        format!(
            "{} op cases x 3 points, {checked} partials, max rel err {:.2e} ({})",
            ops / 3,
            worst.0,
            worst.1
        ),
    )
}

// ---- 2: loss arithmetic ------------------------------------------------

fn ef_ref(p_pred: f64, p_cls: f64, p_gold: f64) -> f64 {
    let a = if p_cls >= p_gold { p_cls - p_gold } else { p_gold - p_cls };
    let b = if p_cls >= p_pred { p_cls - p_pred } else { p_pred - p_cls };
    a + b
}

fn mrt_ref(l: &[f64], ef: &[f64]) -> f64 {
    let mut acc = 0.0;
    for i in 0..l.len() {
        acc += l[i] * ef[i];
    }
    acc / l.len() as f64
}

fn mean_ref(x: &[f64]) -> f64 {
    let mut acc = 0.0;
    for v in x {
        acc += v;
    }
    acc / x.len() as f64
}

fn loss_arithmetic() -> Verdict {
    const CASES: usize = 10_000;
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut scalar_mismatch = 0usize;
    let mut tape_err: f64 = 0.0;
    for _ in 0..CASES {
        let b = rng.gen_range(1..=32);
        let p: Vec<[f64; 3]> = (0..b).map(|_| [rng.gen(), rng.gen(), rng.gen()]).collect();
        let lp: Vec<f64> = (0..b).map(|_| rng.gen_range(0.0..20.0)).collect();
        let le: Vec<f64> = (0..b).map(|_| rng.gen_range(0.0..60.0)).collect();
        let w = LossWeights {
            joint: rng.gen_range(0.0..2.0),
            mrt: rng.gen_range(0.0..2.0),
        };

        let ef: Vec<f64> = p
            .iter()
            .map(|t| explanation_factor(&ProbTriple::new(t[0], t[1], t[2]).unwrap()))
            .collect();
        let ef_want: Vec<f64> = p.iter().map(|t| ef_ref(t[0], t[1], t[2])).collect();
        let l_rows: Vec<f64> = lp.iter().zip(&le).map(|(a, b)| a + b).collect();
        let mrt = mrt_loss(&l_rows, &ef).unwrap();
        let mrt_want = mrt_ref(&l_rows, &ef_want);
        let l_want = mean_ref(&lp) + mean_ref(&le);
        let fin = final_loss(l_want, mrt_want, w);
        let fin_want = w.joint * l_want + w.mrt * mrt_want;
        let same = |a: f64, b: f64| a.to_bits() == b.to_bits();
        if ef.iter().zip(&ef_want).any(|(a, b)| !same(*a, *b)) || !same(mrt, mrt_want) || !same(fin, fin_want) {
            scalar_mismatch += 1;
        }

        let mut tape = Tape::new();
        let col = |tape: &mut Tape, v: Vec<f64>| tape.constant(&[b, 1], v).unwrap();
        let lp_v = col(&mut tape, lp.clone());
        let le_v = col(&mut tape, le.clone());
        let pred = col(&mut tape, p.iter().map(|t| t[0]).collect());
        let cls = col(&mut tape, p.iter().map(|t| t[1]).collect());
        let gold: Vec<f64> = p.iter().map(|t| t[2]).collect();
        let inputs = EfInputs {
            p_pred: pred,
            p_classified: cls,
            p_gold: &gold,
        };
        let vars = loss_terms(&mut tape, lp_v, le_v, Some(inputs), w).unwrap();
        let got = [tape.scalar(vars.l), tape.scalar(vars.l_mrt), tape.scalar(vars.l_final)];
        for (g, want) in got.iter().zip([l_want, mrt_want, fin_want]) {
            tape_err = tape_err.max((g - want).abs() / want.abs().max(1.0));
        }
        for (g, want) in tape.value(vars.ef.unwrap()).iter().zip(&ef_want) {
            tape_err = tape_err.max((g - want).abs());
        }
    }
    verdict(
        scalar_mismatch == 0 && tape_err <= 1e-15,
        format!("{CASES} cases: scalar path bitwise mismatches {scalar_mismatch}, tape path max rel err {tape_err:.1e}"),
    )
}

// ---- shared corpora ----------------------------------------------------

struct Numeric {
    vocab: Vocab,
    train: Vec<NumericItem>,
    dev: Vec<NumericItem>,
    test: Vec<NumericItem>,
    classifier: Classifier<NumericClassifier>,
}

fn numeric_corpus(n: usize) -> Numeric {
    let split = filter_and_split(synth_numeric(n, 1), 1).unwrap();
    let vocab = build_vocab(&split.train, 1);
    let train = encode_all(&split.train, &vocab).unwrap();
    let dev = encode_all(&split.dev, &vocab).unwrap();
    let test = encode_all(&split.test, &vocab).unwrap();
    let cfg = NumericClassifierConfig {
        embedding_dim: 16,
        hidden_dim: 64,
        n_classes: 10,
    };
    let mut classifier = Classifier::new(cfg, vocab.clone(), 0).unwrap();
    let pre = PretrainConfig {
        max_epochs: 30,
        ..PretrainConfig::default()
    };
    pretrain_classifier(&mut classifier, &train, &dev, &pre).unwrap();
    Numeric {
        vocab,
        train,
        dev,
        test,
        classifier,
    }
}

fn numeric_config(vocab: &Vocab) -> NumericNetConfig {
    let mut encoder = EncoderConfig::new(EncoderKind::Bow, vocab.len(), 64);
    encoder.embedding_dim = 32;
    NumericNetConfig {
        encoder,
        n_classes: 10,
    }
}

/// Test-split report of a model trained for `epochs` with or without GEF.
fn train_numeric(data: &Numeric, seed: u64, gef: bool, epochs: usize) -> EvalReport {
    let model = Model::<NumericNet>::new(numeric_config(&data.vocab), data.vocab.clone(), seed).unwrap();
    let mut cfg = TrainConfig {
        epochs,
        seed,
        ..TrainConfig::for_schema(Schema::Skytrax)
    };
    if !gef {
        cfg.weights = LossWeights::BASELINE;
    }
    let cls = gef.then_some(&data.classifier);
    let mut trainer = Trainer::new(model, cls, &data.train, &data.dev, cfg).unwrap();
    trainer.run().unwrap();
    let m = trainer.into_model();
    let c = &data.classifier;
    m.net
        .evaluate(&m.store, &m.vocab, &data.test, Some((&c.net, &c.store)))
        .unwrap()
}

const NUMERIC_EPOCHS: usize = 40;

// ---- 3: ablation identity ----------------------------------------------

fn max_step_gap<N: Network>(
    build: impl Fn() -> Model<N>,
    cls: &Classifier<N::Classifier>,
    train: &[N::Item],
    dev: &[N::Item],
    cfg: TrainConfig,
    steps: usize,
) -> (f64, usize) {
    let run = |with_c: bool| {
        let mut c = cfg.clone();
        c.weights = LossWeights::BASELINE;
        c.record_steps = true;
        let mut t = Trainer::new(build(), with_c.then_some(cls), train, dev, c).unwrap();
        while t.steps.len() < steps {
            t.run_epoch().unwrap();
        }
        t.steps
    };
    let gef = run(true);
    let base = run(false);
    let gap = gef
        .iter()
        .zip(&base)
        .take(steps)
        .flat_map(|(a, b)| {
            let (a, b) = (a.losses, b.losses);
            [a.l_p - b.l_p, a.l_e - b.l_e, a.l - b.l, a.l_final - b.l_final]
        })
        .fold(0.0f64, |m, d| m.max(d.abs()));
    (gap, gef.len().min(base.len()).min(steps))
}

fn ablation_identity() -> Verdict {
    const STEPS: usize = 200;
    let data = numeric_corpus(2000);
    let mut parts = Vec::new();
    let mut worst: f64 = 0.0;
    for mode in [EfMode::SoftThroughC, EfMode::StopGradient] {
        let cfg = TrainConfig {
            batch_size: 32,
            seed: 3,
            epochs: 100,
            ef_mode: mode,
            ..TrainConfig::for_schema(Schema::Skytrax)
        };
        let build = || Model::<NumericNet>::new(numeric_config(&data.vocab), data.vocab.clone(), 3).unwrap();
        let (gap, n) = max_step_gap(build, &data.classifier, &data.train, &data.dev, cfg, STEPS);
        worst = worst.max(gap);
        parts.push(format!("numeric {mode:?} {n} steps gap {gap:.1e}"));
        if n < STEPS {
            return verdict(false, format!("only {n} steps recorded"));
        }
    }
    let text = text_corpus(300, 8, 4);
    let cfg = TrainConfig {
        seed: 3,
        epochs: 100,
        ..TrainConfig::for_schema(Schema::PcMag)
    };
    let build = || Model::<TextNet>::new(tiny_text_config(&text.vocab), text.vocab.clone(), 3).unwrap();
    let (gap, n) = max_step_gap(build, &text.classifier, &text.train, &text.dev, cfg, STEPS);
    worst = worst.max(gap);
    parts.push(format!("text StopGradient {n} steps gap {gap:.1e}"));
    verdict(worst <= 1e-12 && n == STEPS, parts.join("; "))
}

// ---- 4 and 5: numeric claims -------------------------------------------

fn oracle_claim() -> Verdict {
    let data = numeric_corpus(20_000);
    let oracle = oracle_report(&data.classifier.net, &data.classifier.store, &data.test).unwrap();
    let base = train_numeric(&data, 0, false, NUMERIC_EPOCHS);
    let gap = oracle.top1 - base.accuracy.top1;
    verdict(
        oracle.top1 >= 95.0 && gap >= 10.0,
        format!(
            "C on golden subscores {:.2}, raw-text baseline {:.2}, gap {gap:.2} points",
            oracle.top1, base.accuracy.top1
        ),
    )
}

fn numeric_improvement() -> Verdict {
    let data = numeric_corpus(20_000);
    let seeds = 0..5u64;
    let mut top1 = [0.0; 2];
    let mut fields = [0.0; 2];
    let mut per_seed = Vec::new();
    for seed in seeds.clone() {
        let base = train_numeric(&data, seed, false, NUMERIC_EPOCHS);
        let gef = train_numeric(&data, seed, true, NUMERIC_EPOCHS);
        for (k, r) in [&base, &gef].into_iter().enumerate() {
            top1[k] += r.accuracy.top1;
            fields[k] += r.accuracy.fields.as_ref().unwrap().mean();
        }
        per_seed.push(format!(
            "{seed}: {:.2}/{:.2}",
            gef.accuracy.fields.as_ref().unwrap().mean() - base.accuracy.fields.as_ref().unwrap().mean(),
            gef.accuracy.top1 - base.accuracy.top1
        ));
    }
    let n = seeds.count() as f64;
    let (t, f) = (top1.map(|x| x / n), fields.map(|x| x / n));
    verdict(
        t[1] >= t[0] - 0.3 && f[1] - f[0] >= 1.0,
        format!(
            "top-1 {:.2} -> {:.2}, mean sub-field {:.2} -> {:.2} ({:+.2}); field/top-1 deltas by seed {}",
            t[0],
            t[1],
            f[0],
            f[1],
            f[1] - f[0],
            per_seed.join(", ")
        ),
    )
}

// ---- 6: text claim -----------------------------------------------------

struct Text {
    vocab: Vocab,
    train: Vec<TextItem>,
    dev: Vec<TextItem>,
    test: Vec<TextItem>,
    classifier: Classifier<TextClassifier>,
}

fn text_corpus(n: usize, cls_dim: usize, cls_epochs: usize) -> Text {
    let split = filter_and_split(synth_text(n, 1), 1).unwrap();
    let vocab = build_vocab(&split.train, 1);
    let train = encode_all(&split.train, &vocab).unwrap();
    let dev = encode_all(&split.dev, &vocab).unwrap();
    let test = encode_all(&split.test, &vocab).unwrap();
    let cfg = TextClassifierConfig {
        vocab_size: vocab.len(),
        embedding_dim: cls_dim,
        hidden_dim: 2 * cls_dim,
        n_classes: 9,
    };
    let mut classifier = Classifier::new(cfg, vocab.clone(), 0).unwrap();
    let pre = PretrainConfig {
        batch_size: 32,
        max_epochs: cls_epochs,
        ..PretrainConfig::default()
    };
    pretrain_classifier(&mut classifier, &train, &dev, &pre).unwrap();
    Text {
        vocab,
        train,
        dev,
        test,
        classifier,
    }
}

fn text_config(vocab: &Vocab) -> TextNetConfig {
    let mut encoder = EncoderConfig::new(EncoderKind::Bow, vocab.len(), 64);
    encoder.embedding_dim = 32;
    let mut cvae = CvaeConfig::new(vocab.len(), 64);
    cvae.embedding_dim = 32;
    cvae.hidden_dim = 64;
    cvae.latent_dim = 16;
    cvae.control_dim = 8;
    cvae.mlp_dim = 64;
    TextNetConfig {
        encoder,
        n_classes: 9,
        cvae,
    }
}

fn tiny_text_config(vocab: &Vocab) -> TextNetConfig {
    let mut encoder = EncoderConfig::new(EncoderKind::Bow, vocab.len(), 16);
    encoder.embedding_dim = 8;
    let mut cvae = CvaeConfig::new(vocab.len(), 16);
    cvae.embedding_dim = 8;
    cvae.hidden_dim = 16;
    cvae.latent_dim = 4;
    cvae.control_dim = 4;
    cvae.mlp_dim = 16;
    TextNetConfig {
        encoder,
        n_classes: 9,
        cvae,
    }
}

fn text_improvement() -> Verdict {
    const EPOCHS: usize = 30;
    let data = text_corpus(2000, 16, 20);
    let mut top1 = [0.0; 2];
    let mut bleu1 = [0.0; 2];
    let mut per_seed = Vec::new();
    for seed in 0..3u64 {
        let mut row = [(0.0, 0.0); 2];
        for (k, gef) in [false, true].into_iter().enumerate() {
            let model = Model::<TextNet>::new(text_config(&data.vocab), data.vocab.clone(), seed).unwrap();
            let mut cfg = TrainConfig {
                epochs: EPOCHS,
                seed,
                ..TrainConfig::for_schema(Schema::PcMag)
            };
            if !gef {
                cfg.weights = LossWeights::BASELINE;
            }
            let mut t = Trainer::new(model, gef.then_some(&data.classifier), &data.train, &data.dev, cfg).unwrap();
            t.run().unwrap();
            let m = t.into_model();
            let r = m.net.evaluate(&m.store, &m.vocab, &data.test, None).unwrap();
            row[k] = (r.accuracy.top1, r.bleu.unwrap().all.bleu_1);
            top1[k] += row[k].0;
            bleu1[k] += row[k].1;
        }
        per_seed.push(format!(
            "{seed}: {:+.2}/{:+.2}",
            row[1].1 - row[0].1,
            row[1].0 - row[0].0
        ));
    }
    let (t, b) = (top1.map(|x| x / 3.0), bleu1.map(|x| x / 3.0));
    verdict(
        b[1] >= b[0] && t[1] >= t[0] - 0.5,
        format!(
            "BLEU-1 {:.2} -> {:.2}, top-1 {:.2} -> {:.2}; BLEU-1/top-1 deltas by seed {}",
            b[0],
            b[1],
            t[0],
            t[1],
            per_seed.join(", ")
        ),
    )
}

// ---- 7: BLEU fixtures --------------------------------------------------

fn toks(s: &str) -> Vec<String> {
    s.split_whitespace().map(String::from).collect()
}

fn bleu_fixtures() -> Verdict {
    let same = [toks("the cat sat on the mat"), toks("a quick brown fox jumps")];
    let id = bleu(&same, &same).unwrap().as_array();
    let disjoint = bleu(&[toks("a b c d e")], &[toks("v w x y z")]).unwrap().as_array();
    let p1 = BleuStats::collect(&[toks("the the the")], &[toks("the cat sat")])
        .unwrap()
        .precision(1);
    let ok = id == [100.0; 4] && disjoint == [0.0; 4] && (p1 - 1.0 / 3.0).abs() <= 1e-9;
    verdict(
        ok,
        format!("identity {id:?}, disjoint {disjoint:?}, clipped unigram precision {p1:.12}"),
    )
}

// ---- 8: CVAE sanity ----------------------------------------------------

fn cvae_sanity() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut tape = Tape::new();
    let mut draw = |tape: &mut Tape| tape.leaf(&Tensor::uniform(&[1000, 6], 3.0, &mut rng)).unwrap();
    let (mq, lq, mp, lp) = (draw(&mut tape), draw(&mut tape), draw(&mut tape), draw(&mut tape));
    let kl = gaussian_kl(&mut tape, mq, lq, mp, lp).unwrap();
    let min_kl = tape.value(kl).iter().copied().fold(f64::INFINITY, f64::min);
    let zero = gaussian_kl(&mut tape, mq, lq, mq, lq).unwrap();
    let zero_exact = tape.value(zero).iter().all(|&v| v == 0.0);

    let split = filter_and_split(synth_text(60, 5), 5).unwrap();
    let mut toy: Vec<_> = split.train.into_iter().chain(split.dev).chain(split.test).collect();
    toy.truncate(50);
    let vocab = build_vocab(&toy, 1);
    let items: Vec<TextItem> = encode_all(&toy, &vocab).unwrap();
    let comments: [Vec<Vec<usize>>; 3] =
        std::array::from_fn(|p| items.iter().map(|i| i.comments[p].clone()).collect());
    let mut store = ParamStore::new();
    let mut cfg = CvaeConfig::new(vocab.len(), 8);
    cfg.embedding_dim = 16;
    cfg.hidden_dim = 32;
    cfg.latent_dim = 8;
    cfg.control_dim = 4;
    cfg.mlp_dim = 32;
    let cvae = Cvae::new(&mut store, "cvae", cfg, &mut rng).unwrap();
    let cond = Tensor::uniform(&[items.len(), 8], 1.0, &mut rng);
    let mut adam = AdamState::new(&store, AdamConfig::with_lr(1e-2));
    let mut losses = Vec::new();
    for _ in 0..300 {
        let mut tape = Tape::new();
        let v = tape.constant(&[items.len(), 8], cond.data().to_vec()).unwrap();
        let refs = [&comments[0][..], &comments[1][..], &comments[2][..]];
        let out = cvae.elbo(&mut tape, &store, v, &refs, 1.0, &mut rng).unwrap();
        losses.push(tape.scalar(out.loss));
        tape.backward_into(out.loss, &mut store).unwrap();
        adam.step(&mut store).unwrap();
    }
    let drop = 1.0 - losses[299] / losses[0];
    verdict(
        min_kl >= 0.0 && drop >= 0.3 && zero_exact,
        format!(
            "min KL over 1000 states {min_kl:.3e}, zero-KL case exact: {zero_exact}, ELBO loss {:.2} -> {:.2} over 300 steps ({:.1}% drop)",
            losses[0],
            losses[299],
            100.0 * drop
        ),
    )
}

// ---- 9: determinism ----------------------------------------------------

const NUMERIC_TOML: &str = "[model]\nencoder = \"bow\"\nembedding_dim = 16\nhidden_dim = 32\n[train]\nepochs = 3\n[classifier]\nmax_epochs = 5\n";
const TEXT_TOML: &str = "[model]\nencoder = \"bow\"\nembedding_dim = 8\nhidden_dim = 16\ndecoder_embedding_dim = 8\ndecoder_hidden_dim = 16\nlatent_dim = 4\ncontrol_dim = 4\nmlp_dim = 16\n[train]\nepochs = 2\n[classifier]\nembedding_dim = 8\nhidden_dim = 8\nmax_epochs = 3\n";

/// Every command of one pipeline, writing into `dir`; stdout of each
/// command is kept as a file too.
fn pipeline(dir: &Path, schema: &str, n: usize) {
    let toml = if schema == "skytrax" { NUMERIC_TOML } else { TEXT_TOML };
    fs::write(dir.join("run.toml"), toml).unwrap();
    let n = n.to_string();
    let steps: [(&str, Vec<&str>); 6] = [
        ("synth", vec!["synth", "--schema", schema, "--n", &n, "--out", "corpus.jsonl"]),
        (
            "pretrain",
            vec!["pretrain-c", "--schema", schema, "--corpus", "corpus.jsonl", "--out", "c.ckpt", "--log", "c.log"],
        ),
        (
            "gef",
            vec![
                "train", "--schema", schema, "--corpus", "corpus.jsonl", "--classifier", "c.ckpt", "--out", "g.ckpt",
                "--log", "g.log", "--steps-log", "g.steps",
            ],
        ),
        (
            "baseline",
            vec![
                "train", "--schema", schema, "--corpus", "corpus.jsonl", "--mode", "baseline", "--out", "b.ckpt",
                "--log", "b.log",
            ],
        ),
        (
            "eval",
            vec![
                "eval", "--checkpoint", "g.ckpt", "--corpus", "corpus.jsonl", "--classifier", "c.ckpt", "--report",
                "report.json",
            ],
        ),
        (
            "explain",
            vec!["explain", "--checkpoint", "g.ckpt", "--input", "corpus.jsonl", "--limit", "20"],
        ),
    ];
    for (name, args) in steps {
        let out = Command::new(env!("CARGO_BIN_EXE_gef"))
            .current_dir(dir)
            .args(["--quiet", "--seed", "7", "--config", "run.toml"])
            .args(&args)
            .output()
            .unwrap();
        assert!(out.status.success(), "{name}: {}", String::from_utf8_lossy(&out.stderr));
        fs::write(dir.join(format!("{name}.stdout")), out.stdout).unwrap();
    }
}

fn determinism() -> Verdict {
    let mut compared = 0;
    let mut differing = Vec::new();
    for (schema, n) in [("skytrax", 800), ("pcmag", 200)] {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        pipeline(a.path(), schema, n);
        pipeline(b.path(), schema, n);
        let mut names: Vec<_> = fs::read_dir(a.path())
            .unwrap()
            .map(|e| e.unwrap().file_name())
            .collect();
        names.sort();
        for name in names {
            compared += 1;
            if fs::read(a.path().join(&name)).ok() != fs::read(b.path().join(&name)).ok() {
                differing.push(format!("{schema}/{}", name.to_string_lossy()));
            }
        }
    }
    verdict(
        differing.is_empty(),
        format!(
            "{compared} files across two full pipeline reruns, differing: {}",
            if differing.is_empty() { "none".to_string() } else { differing.join(", ") }
        ),
    )
}

// ---- driver ------------------------------------------------------------

type Criterion = (usize, &'static str, Option<u64>, fn() -> Verdict);

const CRITERIA: &[Criterion] = &[
    (1, "gradient correctness", Some(30), gradients),
    (2, "EF/loss arithmetic", Some(5), loss_arithmetic),
    (3, "ablation identity", None, ablation_identity),
    (4, "oracle claim", Some(15 * 60), oracle_claim),
    (5, "GEF improvement, numeric", Some(45 * 60), numeric_improvement),
    (6, "GEF improvement, text", Some(60 * 60), text_improvement),
    (7, "BLEU fixtures", None, bleu_fixtures),
    (8, "CVAE sanity", None, cvae_sanity),
    (9, "determinism", None, determinism),
];

fn main() {
    let wanted: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut unexpected = Vec::new();
    for &(id, name, budget, run) in CRITERIA {
        if !wanted.is_empty() && !wanted.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let mut v = run();
        let took = start.elapsed();
        let timing = match budget {
            Some(s) => {
                let over = took > Duration::from_secs(s);
                if over {
                    v.pass = false;
                }
                format!("{:.1} s of {s} s{}", took.as_secs_f64(), if over { ", over budget" } else { "" })
            }
            None => format!("{:.1} s", took.as_secs_f64()),
        };
        let status = if v.pass { "PASS" } else { "FAIL" };
        println!("criterion {id} {status}: {name}: {} [{timing}]", v.detail);
        if !v.pass && !KNOWN_UNATTAINED.contains(&id) {
            unexpected.push(id);
        }
    }
    if !unexpected.is_empty() {
        eprintln!("unexpected failures: {unexpected:?}");
        std::process::exit(1);
    }
}
