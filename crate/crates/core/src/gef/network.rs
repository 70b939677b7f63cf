//! The two model families behind one trainer interface.
//!
//! A [`Network`] owns the encoder, predictor and generator of one
//! explanation form; a [`ClassifierNet`] is the matching classifier C. Both
//! keep their parameters in a caller-owned [`ParamStore`], wrapped together
//! with the vocabulary in [`Model`] and [`Classifier`].

use gef_tensor::{ParamStore, Tape, Var};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{GefError, Result};
use crate::gef::config::EfMode;
use crate::gef::data::{Item, NumericItem, TextItem};
use crate::metrics::{self, AccuracyReport, BleuReport, FieldAccuracy, Smoothing};
use crate::models::cvae::with_eos;
use crate::models::heads::N_FIELDS;
use crate::models::{
    Cvae, CvaeConfig, Encoder, EncoderConfig, NumericClassifier, NumericClassifierConfig, NumericGenerator,
    Predictor, SeqBatch, SeqInput, TextClassifier, TextClassifierConfig,
};
use crate::text::schema::Schema;
use crate::text::vocab::Vocab;

/// Rows per forward pass during inference.
pub const INFERENCE_CHUNK: usize = 256;

/// Per-call switches of a training forward pass.
pub struct ForwardCtx<'r> {
    pub kl_weight: f64,
    pub ef_mode: EfMode,
    pub use_explanation_loss: bool,
    pub rng: &'r mut ChaCha8Rng,
}

/// Tape handles produced by one training forward pass.
#[derive(Debug, Clone, Copy)]
pub struct Forward {
    /// Per-example classification loss, `[batch, 1]`.
    pub lp_rows: Var,
    /// Per-example explanation loss, `[batch, 1]`.
    pub le_rows: Var,
    pub pred_logits: Var,
    /// C's logits on the generated explanation, when a classifier is given.
    pub cls_logits: Option<Var>,
}

/// Prediction and generated explanation for one example.
#[derive(Debug, Clone, PartialEq)]
pub struct Inference<G> {
    pub probs: Vec<f64>,
    pub label: usize,
    pub explanation: G,
}

pub trait ClassifierNet: Sized {
    type Item: Item;
    type Config: Serialize + DeserializeOwned + Clone + PartialEq + std::fmt::Debug;

    const SCHEMA: Schema;

    fn build(config: Self::Config, store: &mut ParamStore, rng: &mut ChaCha8Rng) -> Result<Self>;
    fn config(&self) -> &Self::Config;
    fn n_classes(&self) -> usize;
    /// Logits on the golden explanations of `items`.
    fn gold_logits(&self, tape: &mut Tape, store: &ParamStore, items: &[&Self::Item]) -> Result<Var>;
}

pub trait Network: Sized {
    type Item: Item + Clone;
    type Config: Serialize + DeserializeOwned + Clone + PartialEq + std::fmt::Debug;
    type Classifier: ClassifierNet<Item = Self::Item>;
    type Explanation: Clone + PartialEq + std::fmt::Debug;

    const SCHEMA: Schema;
    /// Name prefix of the predictor's parameters.
    const PREDICTOR_PREFIX: &'static str = "predictor.";

    fn build(config: Self::Config, store: &mut ParamStore, rng: &mut ChaCha8Rng) -> Result<Self>;
    fn config(&self) -> &Self::Config;
    fn encoder(&self) -> &Encoder;
    fn predictor(&self) -> &Predictor;

    fn forward(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        items: &[&Self::Item],
        classifier: Option<(&Self::Classifier, &ParamStore)>,
        ctx: &mut ForwardCtx<'_>,
    ) -> Result<Forward>;

    /// Predicted distributions and generated explanations for one chunk.
    fn infer_chunk(&self, store: &ParamStore, items: &[&Self::Item]) -> Result<Vec<Inference<Self::Explanation>>>;

    /// Evaluation report over `items`.
    fn evaluate(
        &self,
        store: &ParamStore,
        vocab: &Vocab,
        items: &[Self::Item],
        classifier: Option<(&Self::Classifier, &ParamStore)>,
    ) -> Result<EvalReport>;

    fn review_batch(items: &[&Self::Item]) -> Result<SeqBatch> {
        let seqs: Vec<&[usize]> = items.iter().map(|i| i.review()).collect();
        SeqBatch::new(&seqs)
    }

    fn infer(&self, store: &ParamStore, items: &[Self::Item]) -> Result<Vec<Inference<Self::Explanation>>> {
        let mut out = Vec::with_capacity(items.len());
        for chunk in items.chunks(INFERENCE_CHUNK) {
            let refs: Vec<&Self::Item> = chunk.iter().collect();
            out.extend(self.infer_chunk(store, &refs)?);
        }
        Ok(out)
    }

    /// `P_pred` rows only, skipping the generator.
    fn predict_probs(&self, store: &ParamStore, items: &[Self::Item]) -> Result<Vec<Vec<f64>>> {
        let mut out = Vec::with_capacity(items.len());
        for chunk in items.chunks(INFERENCE_CHUNK) {
            let refs: Vec<&Self::Item> = chunk.iter().collect();
            let mut tape = Tape::new();
            let seq = Self::review_batch(&refs)?;
            let v_e = self.encoder().encode(&mut tape, store, &seq)?;
            let p = self.predictor().predict(&mut tape, store, v_e)?;
            out.extend(rows_of(&tape, p));
        }
        Ok(out)
    }
}

pub fn rows_of(tape: &Tape, v: Var) -> Vec<Vec<f64>> {
    let cols = tape.cols(v);
    tape.value(v).chunks(cols).map(<[f64]>::to_vec).collect()
}

fn labels<I: Item>(items: &[&I]) -> Vec<usize> {
    items.iter().map(|i| i.label()).collect()
}

/// Top-1/top-3 of C on golden explanations.
pub fn oracle_report<C: ClassifierNet>(cls: &C, store: &ParamStore, items: &[C::Item]) -> Result<AccuracyReport> {
    let probs = classifier_probs(cls, store, items)?;
    let y: Vec<usize> = items.iter().map(Item::label).collect();
    AccuracyReport::from_probs(&probs, &y)
}

pub fn classifier_probs<C: ClassifierNet>(cls: &C, store: &ParamStore, items: &[C::Item]) -> Result<Vec<Vec<f64>>> {
    let mut out = Vec::with_capacity(items.len());
    for chunk in items.chunks(INFERENCE_CHUNK) {
        let refs: Vec<&C::Item> = chunk.iter().collect();
        let mut tape = Tape::new();
        let l = cls.gold_logits(&mut tape, store, &refs)?;
        let p = tape.softmax(l)?;
        out.extend(rows_of(&tape, p));
    }
    Ok(out)
}

/// A network together with its parameters and vocabulary.
#[derive(Debug, Clone)]
pub struct Model<N> {
    pub net: N,
    pub store: ParamStore,
    pub vocab: Vocab,
}

impl<N: Network> Model<N> {
    pub fn new(config: N::Config, vocab: Vocab, seed: u64) -> Result<Self> {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = N::build(config, &mut store, &mut rng)?;
        Ok(Self { net, store, vocab })
    }
}

/// Classifier C with its parameters, vocabulary and Oracle accuracy.
#[derive(Debug, Clone)]
pub struct Classifier<C> {
    pub net: C,
    pub store: ParamStore,
    pub vocab: Vocab,
    /// Dev top-1 of C on golden explanations, recorded at pre-training.
    pub oracle_dev_top1: Option<f64>,
}

impl<C: ClassifierNet> Classifier<C> {
    pub fn new(config: C::Config, vocab: Vocab, seed: u64) -> Result<Self> {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = C::build(config, &mut store, &mut rng)?;
        Ok(Self {
            net,
            store,
            vocab,
            oracle_dev_top1: None,
        })
    }

    pub fn is_frozen(&self) -> bool {
        self.store.iter().all(|(_, p)| p.frozen)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema: Schema,
    pub n: usize,
    pub accuracy: AccuracyReport,
    /// C on the generated explanations.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub classified: Option<AccuracyReport>,
    /// C on the golden explanations.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle: Option<AccuracyReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bleu: Option<BleuReport>,
}

// ---- numeric form ------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NumericNetConfig {
    pub encoder: EncoderConfig,
    pub n_classes: usize,
}

#[derive(Debug, Clone)]
pub struct NumericNet {
    config: NumericNetConfig,
    pub encoder: Encoder,
    pub predictor: Predictor,
    pub generator: NumericGenerator,
}

impl ClassifierNet for NumericClassifier {
    type Item = NumericItem;
    type Config = NumericClassifierConfig;

    const SCHEMA: Schema = Schema::Skytrax;

    fn build(config: Self::Config, store: &mut ParamStore, rng: &mut ChaCha8Rng) -> Result<Self> {
        NumericClassifier::new(store, "classifier", config, rng)
    }

    fn config(&self) -> &Self::Config {
        &self.config
    }

    fn n_classes(&self) -> usize {
        self.config.n_classes
    }

    fn gold_logits(&self, tape: &mut Tape, store: &ParamStore, items: &[&NumericItem]) -> Result<Var> {
        let scores: Vec<[u8; N_FIELDS]> = items.iter().map(|i| i.subscores).collect();
        self.logits_hard(tape, store, &scores)
    }
}

impl Network for NumericNet {
    type Item = NumericItem;
    type Config = NumericNetConfig;
    type Classifier = NumericClassifier;
    /// Five predicted scores.
    type Explanation = [u8; N_FIELDS];

    const SCHEMA: Schema = Schema::Skytrax;

    fn build(config: Self::Config, store: &mut ParamStore, rng: &mut ChaCha8Rng) -> Result<Self> {
        let encoder = Encoder::new(store, "encoder", config.encoder.clone(), rng)?;
        let h = encoder.hidden_dim();
        let predictor = Predictor::new(store, "predictor", h, config.n_classes, rng)?;
        let generator = NumericGenerator::new(store, "generator", h, rng)?;
        Ok(Self {
            config,
            encoder,
            predictor,
            generator,
        })
    }

    fn config(&self) -> &Self::Config {
        &self.config
    }

    fn encoder(&self) -> &Encoder {
        &self.encoder
    }

    fn predictor(&self) -> &Predictor {
        &self.predictor
    }

    fn forward(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        items: &[&NumericItem],
        classifier: Option<(&NumericClassifier, &ParamStore)>,
        ctx: &mut ForwardCtx<'_>,
    ) -> Result<Forward> {
        let seq = Self::review_batch(items)?;
        let v_e = self.encoder.encode(tape, store, &seq)?;
        let pred_logits = self.predictor.logits(tape, store, v_e)?;
        let lp_rows = tape.cross_entropy_rows(pred_logits, &labels(items))?;
        let heads = self.generator.head_logits(tape, store, v_e)?;
        let le_rows = if ctx.use_explanation_loss {
            let mut acc = None;
            for (f, &h) in heads.iter().enumerate() {
                let t: Vec<usize> = items.iter().map(|i| i.subscores[f] as usize).collect();
                let ce = tape.cross_entropy_rows(h, &t)?;
                acc = Some(match acc {
                    None => ce,
                    Some(a) => tape.add(a, ce)?,
                });
            }
            acc.expect("five heads")
        } else {
            tape.constant(&[items.len(), 1], vec![0.0; items.len()])?
        };
        let cls_logits = match classifier {
            None => None,
            Some((c, cstore)) => {
                let mut dists = Vec::with_capacity(N_FIELDS);
                for &h in &heads {
                    let p = tape.softmax(h)?;
                    dists.push(match ctx.ef_mode {
                        EfMode::SoftThroughC => p,
                        EfMode::StopGradient => {
                            let v = tape.value(p).to_vec();
                            tape.constant(&[items.len(), tape.cols(p)], v)?
                        }
                    });
                }
                Some(c.logits_soft(tape, cstore, &dists)?)
            }
        };
        Ok(Forward {
            lp_rows,
            le_rows,
            pred_logits,
            cls_logits,
        })
    }

    fn infer_chunk(&self, store: &ParamStore, items: &[&NumericItem]) -> Result<Vec<Inference<[u8; N_FIELDS]>>> {
        let mut tape = Tape::new();
        let seq = Self::review_batch(items)?;
        let v_e = self.encoder.encode(&mut tape, store, &seq)?;
        let p = self.predictor.predict(&mut tape, store, v_e)?;
        let heads = self.generator.head_logits(&mut tape, store, v_e)?;
        let head_rows: Vec<Vec<Vec<f64>>> = heads.iter().map(|&h| rows_of(&tape, h)).collect();
        Ok(rows_of(&tape, p)
            .into_iter()
            .enumerate()
            .map(|(b, probs)| Inference {
                label: metrics::argmax(&probs),
                probs,
                explanation: std::array::from_fn(|f| metrics::argmax(&head_rows[f][b]) as u8),
            })
            .collect())
    }

    fn evaluate(
        &self,
        store: &ParamStore,
        _vocab: &Vocab,
        items: &[NumericItem],
        classifier: Option<(&NumericClassifier, &ParamStore)>,
    ) -> Result<EvalReport> {
        let inf = self.infer(store, items)?;
        let y: Vec<usize> = items.iter().map(|i| i.label).collect();
        let probs: Vec<&[f64]> = inf.iter().map(|i| i.probs.as_slice()).collect();
        let mut accuracy = AccuracyReport::from_probs(&probs, &y)?;
        let mut fields = [0.0; N_FIELDS];
        for (f, slot) in fields.iter_mut().enumerate() {
            let pred: Vec<usize> = inf.iter().map(|i| i.explanation[f] as usize).collect();
            let gold: Vec<usize> = items.iter().map(|i| i.subscores[f] as usize).collect();
            *slot = metrics::accuracy(&pred, &gold)?;
        }
        accuracy.fields = Some(FieldAccuracy::from_array(fields));
        let (classified, oracle) = match classifier {
            None => (None, None),
            Some((c, cstore)) => {
                let generated: Vec<NumericItem> = items
                    .iter()
                    .zip(&inf)
                    .map(|(it, i)| NumericItem {
                        subscores: i.explanation,
                        ..it.clone()
                    })
                    .collect();
                (
                    Some(oracle_report(c, cstore, &generated)?),
                    Some(oracle_report(c, cstore, items)?),
                )
            }
        };
        Ok(EvalReport {
            schema: Self::SCHEMA,
            n: items.len(),
            accuracy,
            classified,
            oracle,
            bleu: None,
        })
    }
}

// ---- text form ---------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextNetConfig {
    pub encoder: EncoderConfig,
    pub n_classes: usize,
    pub cvae: CvaeConfig,
}

#[derive(Debug, Clone)]
pub struct TextNet {
    config: TextNetConfig,
    pub encoder: Encoder,
    pub predictor: Predictor,
    pub cvae: Cvae,
}

fn comment_inputs<'a>(batches: &'a [SeqBatch; 3]) -> [SeqInput<'a>; 3] {
    [0, 1, 2].map(|p| SeqInput::Hard(&batches[p]))
}

fn comment_batches<S: AsRef<[usize]>>(per_polarity: [Vec<S>; 3]) -> Result<[SeqBatch; 3]> {
    let [a, b, c] = per_polarity;
    Ok([with_eos(&a)?, with_eos(&b)?, with_eos(&c)?])
}

impl ClassifierNet for TextClassifier {
    type Item = TextItem;
    type Config = TextClassifierConfig;

    const SCHEMA: Schema = Schema::PcMag;

    fn build(config: Self::Config, store: &mut ParamStore, rng: &mut ChaCha8Rng) -> Result<Self> {
        TextClassifier::new(store, "classifier", config, rng)
    }

    fn config(&self) -> &Self::Config {
        &self.config
    }

    fn n_classes(&self) -> usize {
        self.config.n_classes
    }

    fn gold_logits(&self, tape: &mut Tape, store: &ParamStore, items: &[&TextItem]) -> Result<Var> {
        let batches = comment_batches([0, 1, 2].map(|p| items.iter().map(|i| i.comments[p].as_slice()).collect()))?;
        self.logits(tape, store, &comment_inputs(&batches))
    }
}

impl TextNet {
    /// Greedy comments for a batch whose `v_e` values are given.
    fn decode_values(&self, store: &ParamStore, v_e: &[f64], batch: usize) -> Result<Vec<[Vec<usize>; 3]>> {
        let mut tape = Tape::new();
        let v = tape.constant(&[batch, v_e.len() / batch], v_e.to_vec())?;
        self.cvae.decode(&mut tape, store, v)
    }
}

impl Network for TextNet {
    type Item = TextItem;
    type Config = TextNetConfig;
    type Classifier = TextClassifier;
    /// Generated pos/neg/neu comment ids.
    type Explanation = [Vec<usize>; 3];

    const SCHEMA: Schema = Schema::PcMag;

    fn build(config: Self::Config, store: &mut ParamStore, rng: &mut ChaCha8Rng) -> Result<Self> {
        let encoder = Encoder::new(store, "encoder", config.encoder.clone(), rng)?;
        let h = encoder.hidden_dim();
        if config.cvae.cond_dim != h {
            return Err(GefError::validation(format!(
                "cvae cond_dim {} differs from encoder hidden_dim {h}",
                config.cvae.cond_dim
            )));
        }
        let predictor = Predictor::new(store, "predictor", h, config.n_classes, rng)?;
        let cvae = Cvae::new(store, "cvae", config.cvae.clone(), rng)?;
        Ok(Self {
            config,
            encoder,
            predictor,
            cvae,
        })
    }

    fn config(&self) -> &Self::Config {
        &self.config
    }

    fn encoder(&self) -> &Encoder {
        &self.encoder
    }

    fn predictor(&self) -> &Predictor {
        &self.predictor
    }

    fn forward(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        items: &[&TextItem],
        classifier: Option<(&TextClassifier, &ParamStore)>,
        ctx: &mut ForwardCtx<'_>,
    ) -> Result<Forward> {
        let batch = items.len();
        let seq = Self::review_batch(items)?;
        let v_e = self.encoder.encode(tape, store, &seq)?;
        let pred_logits = self.predictor.logits(tape, store, v_e)?;
        let lp_rows = tape.cross_entropy_rows(pred_logits, &labels(items))?;
        let comments: [Vec<Vec<usize>>; 3] = [0, 1, 2].map(|p| items.iter().map(|i| i.comments[p].clone()).collect());
        let need_elbo = ctx.use_explanation_loss || (classifier.is_some() && ctx.ef_mode == EfMode::SoftThroughC);
        let elbo = if need_elbo {
            Some(self.cvae.elbo(
                tape,
                store,
                v_e,
                &[&comments[0], &comments[1], &comments[2]],
                ctx.kl_weight,
                ctx.rng,
            )?)
        } else {
            None
        };
        let le_rows = match (&elbo, ctx.use_explanation_loss) {
            (Some(e), true) => e.loss_rows,
            _ => tape.constant(&[batch, 1], vec![0.0; batch])?,
        };
        let cls_logits = match classifier {
            None => None,
            Some((c, cstore)) => match ctx.ef_mode {
                EfMode::SoftThroughC => {
                    let e = elbo.expect("computed for soft mode");
                    let golden = comment_batches(comments.clone())?;
                    let mut inputs = Vec::with_capacity(3);
                    for (p, g) in golden.iter().enumerate() {
                        let dists = self.cvae.polarity_probs(tape, &e, p, batch, g)?;
                        inputs.push(SeqInput::Soft { dists, seq: g });
                    }
                    Some(c.logits(tape, cstore, &inputs)?)
                }
                EfMode::StopGradient => {
                    let ve = tape.value(v_e).to_vec();
                    let decoded = self.decode_values(store, &ve, batch)?;
                    let batches = comment_batches([0, 1, 2].map(|p| decoded.iter().map(|d| d[p].clone()).collect()))?;
                    let mut side = Tape::new();
                    let l = c.logits(&mut side, cstore, &comment_inputs(&batches))?;
                    Some(tape.constant(&[batch, side.cols(l)], side.value(l).to_vec())?)
                }
            },
        };
        Ok(Forward {
            lp_rows,
            le_rows,
            pred_logits,
            cls_logits,
        })
    }

    fn infer_chunk(&self, store: &ParamStore, items: &[&TextItem]) -> Result<Vec<Inference<[Vec<usize>; 3]>>> {
        let mut tape = Tape::new();
        let seq = Self::review_batch(items)?;
        let v_e = self.encoder.encode(&mut tape, store, &seq)?;
        let p = self.predictor.predict(&mut tape, store, v_e)?;
        let decoded = self.cvae.decode(&mut tape, store, v_e)?;
        Ok(rows_of(&tape, p)
            .into_iter()
            .zip(decoded)
            .map(|(probs, explanation)| Inference {
                label: metrics::argmax(&probs),
                probs,
                explanation,
            })
            .collect())
    }

    fn evaluate(
        &self,
        store: &ParamStore,
        vocab: &Vocab,
        items: &[TextItem],
        classifier: Option<(&TextClassifier, &ParamStore)>,
    ) -> Result<EvalReport> {
        let inf = self.infer(store, items)?;
        let y: Vec<usize> = items.iter().map(|i| i.label).collect();
        let probs: Vec<&[f64]> = inf.iter().map(|i| i.probs.as_slice()).collect();
        let accuracy = AccuracyReport::from_probs(&probs, &y)?;
        let candidates: Vec<[Vec<String>; 3]> = inf
            .iter()
            .map(|i| [0, 1, 2].map(|p| vocab.decode(&i.explanation[p])))
            .collect();
        let references: Vec<[Vec<String>; 3]> = items.iter().map(|i| i.golden.clone()).collect();
        let bleu = metrics::bleu_report(&candidates, &references, Smoothing::None)?;
        let (classified, oracle) = match classifier {
            None => (None, None),
            Some((c, cstore)) => {
                let generated: Vec<TextItem> = items
                    .iter()
                    .zip(&inf)
                    .map(|(it, i)| TextItem {
                        comments: i.explanation.clone(),
                        ..it.clone()
                    })
                    .collect();
                (
                    Some(oracle_report(c, cstore, &generated)?),
                    Some(oracle_report(c, cstore, items)?),
                )
            }
        };
        Ok(EvalReport {
            schema: Self::SCHEMA,
            n: items.len(),
            accuracy,
            classified,
            oracle,
            bleu: Some(bleu),
        })
    }
}
