use gef_core::gef::train::{loss_terms, EfInputs};
use gef_core::gef::*;
use gef_core::models::*;
use gef_core::text::schema::Schema;
use gef_core::text::{synth_numeric, synth_text, Vocab};
use gef_core::GefError;
use gef_tensor::{Checkpoint, Tape};

fn numeric_data(n: usize) -> (Vocab, Vec<NumericItem>, Vec<NumericItem>) {
    let ex = synth_numeric(n, 3);
    let vocab = build_vocab(&ex, 1);
    let items = encode_all(&ex, &vocab).unwrap();
    let dev = items[..n / 5].to_vec();
    (vocab, items[n / 5..].to_vec(), dev)
}

fn numeric_model(vocab: &Vocab, seed: u64) -> Model<NumericNet> {
    let mut enc = EncoderConfig::new(EncoderKind::Bow, vocab.len(), 16);
    enc.embedding_dim = 8;
    Model::new(NumericNetConfig { encoder: enc, n_classes: 10 }, vocab.clone(), seed).unwrap()
}

fn numeric_classifier(vocab: &Vocab, train: &[NumericItem], dev: &[NumericItem]) -> Classifier<NumericClassifier> {
    let cfg = NumericClassifierConfig {
        embedding_dim: 8,
        hidden_dim: 32,
        n_classes: 10,
    };
    let mut c = Classifier::new(cfg, vocab.clone(), 5).unwrap();
    let pc = PretrainConfig {
        max_epochs: 3,
        ..PretrainConfig::default()
    };
    pretrain_classifier(&mut c, train, dev, &pc).unwrap();
    c
}

fn small_config(epochs: usize) -> TrainConfig {
    let mut tc = TrainConfig::for_schema(Schema::Skytrax);
    tc.epochs = epochs;
    tc.batch_size = 16;
    tc.lr = 5e-3;
    tc.seed = 11;
    tc.record_steps = true;
    tc
}

#[test]
fn uniform_heads_give_log_class_counts() {
    let (vocab, train, dev) = numeric_data(40);
    let mut m = numeric_model(&vocab, 0);
    m.net.predictor.out.zero(&mut m.store);
    m.net.generator.out.zero(&mut m.store);
    let mut tc = small_config(1);
    tc.lr = 1e-12;
    let mut t = Trainer::new(m, None, &train, &dev, tc).unwrap();
    t.run_epoch().unwrap();
    let first = &t.steps[0].losses;
    assert!((first.l_p - 10f64.ln()).abs() < 1e-12, "{}", first.l_p);
    assert!((first.l_e - 5.0 * 6f64.ln()).abs() < 1e-12, "{}", first.l_e);
}

#[test]
fn pretraining_freezes_and_records_oracle() {
    let (vocab, train, dev) = numeric_data(200);
    let c = numeric_classifier(&vocab, &train, &dev);
    assert!(c.is_frozen());
    assert!(c.oracle_dev_top1.is_some());
}

#[test]
fn zero_mrt_weight_matches_baseline_steps() {
    let (vocab, train, dev) = numeric_data(200);
    let c = numeric_classifier(&vocab, &train, &dev);
    let mut base = Trainer::new(numeric_model(&vocab, 1), None, &train, &dev, small_config(2)).unwrap();
    base.run().unwrap();
    let mut cfg = small_config(2);
    cfg.weights = LossWeights::BASELINE;
    let mut gef = Trainer::new(numeric_model(&vocab, 1), Some(&c), &train, &dev, cfg).unwrap();
    gef.run().unwrap();
    assert_eq!(base.steps.len(), gef.steps.len());
    for (a, b) in base.steps.iter().zip(&gef.steps) {
        assert!((a.losses.l_final - b.losses.l_final).abs() <= 1e-12);
        assert!((a.losses.l_p - b.losses.l_p).abs() <= 1e-12);
    }
    assert!(gef.steps.iter().any(|s| s.losses.ef > 0.0));
}

#[test]
fn stop_gradient_ef_is_a_constant_weight() {
    // With only the MRT term, stop-gradient EF must give the gradient of
    // mean(EF_i · L_i) where EF_i are plain numbers.
    let (vocab, train, dev) = numeric_data(200);
    let c = numeric_classifier(&vocab, &train, &dev);
    let m = numeric_model(&vocab, 2);
    let items: Vec<&NumericItem> = train[..8].iter().collect();
    let y: Vec<usize> = items.iter().map(|i| i.label).collect();
    let gold: Vec<f64> = gef_core::gef::network::classifier_probs(&c.net, &c.store, &train[..8])
        .unwrap()
        .iter()
        .zip(&y)
        .map(|(p, &k)| p[k])
        .collect();
    let w = LossWeights { joint: 0.0, mrt: 1.0 };
    let grads = |manual: bool| {
        let mut store = m.store.clone();
        let mut tape = Tape::new();
        let mut rng = train::epoch_rng(0, 0);
        let mut ctx = ForwardCtx {
            kl_weight: 1.0,
            ef_mode: EfMode::StopGradient,
            use_explanation_loss: true,
            rng: &mut rng,
        };
        let f = m.net.forward(&mut tape, &store, &items, Some((&c.net, &c.store)), &mut ctx).unwrap();
        let pp = tape.softmax(f.pred_logits).unwrap();
        let pp = tape.pick(pp, &y).unwrap();
        let pp = tape.constant(&[8, 1], tape.value(pp).to_vec()).unwrap();
        let pc = tape.softmax(f.cls_logits.unwrap()).unwrap();
        let pc = tape.pick(pc, &y).unwrap();
        let loss = if manual {
            let ef: Vec<f64> = (0..8)
                .map(|i| {
                    explanation_factor(&ProbTriple::new(tape.value(pp)[i], tape.value(pc)[i], gold[i]).unwrap())
                })
                .collect();
            let ef = tape.constant(&[8, 1], ef).unwrap();
            let l = tape.add(f.lp_rows, f.le_rows).unwrap();
            let prod = tape.mul(l, ef).unwrap();
            tape.mean(prod).unwrap()
        } else {
            let ef = EfInputs {
                p_pred: pp,
                p_classified: pc,
                p_gold: &gold,
            };
            loss_terms(&mut tape, f.lp_rows, f.le_rows, Some(ef), w).unwrap().l_final
        };
        tape.backward_into(loss, &mut store).unwrap();
        store
            .iter()
            .map(|(_, p)| p.tensor.grad().map(<[f64]>::to_vec).unwrap_or_default())
            .collect::<Vec<_>>()
    };
    let (a, b) = (grads(false), grads(true));
    for (ga, gb) in a.iter().zip(&b) {
        for (x, y) in ga.iter().zip(gb) {
            assert!((x - y).abs() <= 1e-12 * (1.0 + y.abs()), "{x} vs {y}");
        }
    }
}

#[test]
fn frozen_predictor_stays_bitwise_fixed() {
    let (vocab, train, dev) = numeric_data(200);
    let mut cfg = small_config(2);
    cfg.predictor_freeze = FreezePolicy::Fixed(1e9);
    let mut t = Trainer::new(numeric_model(&vocab, 3), None, &train, &dev, cfg).unwrap();
    t.run_epoch().unwrap();
    assert!(t.state.predictor_frozen);
    let snapshot = |t: &Trainer<NumericNet>| {
        t.model
            .store
            .iter()
            .map(|(_, p)| (p.name.clone(), p.tensor.data().to_vec()))
            .collect::<Vec<_>>()
    };
    let before = snapshot(&t);
    t.run_epoch().unwrap();
    let after = snapshot(&t);
    for ((name, a), (_, b)) in before.iter().zip(&after) {
        if name.starts_with("predictor.") {
            assert_eq!(a, b, "{name} moved while frozen");
        } else if name.starts_with("encoder.") {
            assert_ne!(a, b, "{name} should still train");
        }
    }
}

#[test]
fn resume_is_bitwise() {
    let (vocab, train, dev) = numeric_data(200);
    let c = numeric_classifier(&vocab, &train, &dev);
    let mut full = Trainer::new(numeric_model(&vocab, 4), Some(&c), &train, &dev, small_config(3)).unwrap();
    full.run().unwrap();

    let mut part = Trainer::new(numeric_model(&vocab, 4), Some(&c), &train, &dev, small_config(3)).unwrap();
    part.run_epoch().unwrap();
    let bytes = part.checkpoint().unwrap().to_bytes().unwrap();
    let ckpt = Checkpoint::from_bytes(&bytes).unwrap();
    let mut resumed = Trainer::<NumericNet>::resume(&ckpt, Some(&c), &train, &dev, None).unwrap();
    resumed.run().unwrap();

    assert_eq!(
        serde_json::to_string(full.logs()).unwrap(),
        serde_json::to_string(resumed.logs()).unwrap()
    );
    assert_eq!(
        full.checkpoint().unwrap().to_bytes().unwrap(),
        resumed.checkpoint().unwrap().to_bytes().unwrap()
    );
}

#[test]
fn model_checkpoint_round_trip() {
    let (vocab, train, _) = numeric_data(60);
    let m = numeric_model(&vocab, 5);
    let back = Model::<NumericNet>::from_checkpoint(&m.to_checkpoint().unwrap()).unwrap();
    assert_eq!(
        m.net.predict_probs(&m.store, &train).unwrap(),
        back.net.predict_probs(&back.store, &train).unwrap()
    );
    let wrong = Model::<TextNet>::from_checkpoint(&m.to_checkpoint().unwrap());
    assert!(matches!(wrong, Err(GefError::Validation(_))));
}

#[test]
fn nan_parameters_report_divergence() {
    let (vocab, train, dev) = numeric_data(60);
    let mut m = numeric_model(&vocab, 6);
    let id = m.store.id("predictor.out.b").unwrap();
    m.store.get_mut(id).data_mut()[0] = f64::NAN;
    let mut t = Trainer::new(m, None, &train, &dev, small_config(1)).unwrap();
    match t.run_epoch() {
        Err(GefError::Divergence { epoch: 0, batch: 0, .. }) => {}
        other => panic!("expected divergence, got {other:?}"),
    }
}

#[test]
fn evaluation_reports_fields() {
    let (vocab, train, dev) = numeric_data(200);
    let c = numeric_classifier(&vocab, &train, &dev);
    let m = numeric_model(&vocab, 7);
    let r = m.net.evaluate(&m.store, &vocab, &dev, Some((&c.net, &c.store))).unwrap();
    assert_eq!(r.n, dev.len());
    assert!(r.accuracy.fields.is_some() && r.classified.is_some() && r.bleu.is_none());
}

fn text_setup() -> (Vocab, Vec<TextItem>, Vec<TextItem>, TextNetConfig) {
    let ex = synth_text(40, 2);
    let vocab = build_vocab(&ex, 1);
    let items = encode_all(&ex, &vocab).unwrap();
    let mut enc = EncoderConfig::new(EncoderKind::Bow, vocab.len(), 12);
    enc.embedding_dim = 8;
    let cvae = CvaeConfig {
        vocab_size: vocab.len(),
        embedding_dim: 8,
        hidden_dim: 12,
        latent_dim: 4,
        control_dim: 3,
        cond_dim: 12,
        mlp_dim: 8,
        max_len: 12,
    };
    let cfg = TextNetConfig {
        encoder: enc,
        n_classes: 9,
        cvae,
    };
    (vocab, items[8..].to_vec(), items[..8].to_vec(), cfg)
}

fn text_classifier(vocab: &Vocab) -> Classifier<TextClassifier> {
    let cfg = TextClassifierConfig {
        vocab_size: vocab.len(),
        embedding_dim: 6,
        hidden_dim: 6,
        n_classes: 9,
    };
    let mut c = Classifier::new(cfg, vocab.clone(), 1).unwrap();
    c.store.freeze_all();
    c
}

#[test]
fn text_training_both_ef_modes() {
    let (vocab, train, dev, cfg) = text_setup();
    let c = text_classifier(&vocab);
    for mode in [EfMode::StopGradient, EfMode::SoftThroughC] {
        let mut tc = TrainConfig::for_schema(Schema::PcMag);
        tc.epochs = 1;
        tc.batch_size = 8;
        tc.ef_mode = mode;
        tc.record_steps = true;
        let m = Model::<TextNet>::new(cfg.clone(), vocab.clone(), 0).unwrap();
        let mut t = Trainer::new(m, Some(&c), &train, &dev, tc).unwrap();
        t.run().unwrap();
        assert_eq!(t.steps[0].kl_weight, 0.0);
        assert!(t.steps.iter().all(|s| s.losses.ef > 0.0 && s.losses.is_finite()));
        let m = t.into_model();
        let r = m.net.evaluate(&m.store, &m.vocab, &dev, Some((&c.net, &c.store))).unwrap();
        assert!(r.bleu.is_some());
    }
}

#[test]
fn text_classifier_vocab_must_match() {
    let (vocab, train, dev, cfg) = text_setup();
    let other = build_vocab(&synth_text(10, 99), 1);
    let c = text_classifier(&other);
    let m = Model::<TextNet>::new(cfg, vocab, 0).unwrap();
    let r = Trainer::new(m, Some(&c), &train, &dev, TrainConfig::for_schema(Schema::PcMag));
    assert!(matches!(r, Err(GefError::Validation(_))));
}

#[test]
fn unfrozen_classifier_is_rejected() {
    let (vocab, train, dev) = numeric_data(60);
    let c = Classifier::<NumericClassifier>::new(
        NumericClassifierConfig {
            embedding_dim: 4,
            hidden_dim: 4,
            n_classes: 10,
        },
        vocab.clone(),
        0,
    )
    .unwrap();
    let r = Trainer::new(numeric_model(&vocab, 0), Some(&c), &train, &dev, small_config(1));
    assert!(matches!(r, Err(GefError::Validation(_))));
}
