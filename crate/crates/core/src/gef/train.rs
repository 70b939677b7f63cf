//! The joint trainer: `L = L_p + L_e`, weighted by the explanation factor.

use gef_tensor::{AdamConfig, AdamState, Tape, TensorError, Var};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{GefError, Result};
use crate::gef::config::{EfMode, FreezePolicy, TrainConfig};
use crate::gef::data::Item;
use crate::gef::loss::{LossBreakdown, LossWeights};
use crate::gef::network::{classifier_probs, rows_of, Classifier, ClassifierNet, ForwardCtx, Model, Network};
use crate::metrics::{self, topk_accuracy};

/// Decay of the running train `L_p` compared against the freeze threshold.
pub const LP_EMA_DECAY: f64 = 0.9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    #[serde(flatten)]
    pub losses: LossBreakdown,
    pub dev_acc: f64,
    pub dev_top3: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepLog {
    pub step: usize,
    pub epoch: usize,
    pub batch: usize,
    pub kl_weight: f64,
    pub predictor_frozen: bool,
    #[serde(flatten)]
    pub losses: LossBreakdown,
}

/// Everything besides parameters and optimiser moments needed to resume.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainState {
    /// Completed epochs.
    pub epoch: usize,
    pub global_step: usize,
    pub predictor_frozen: bool,
    pub freeze_threshold: Option<f64>,
    /// Dev `L_p` after each completed epoch.
    pub dev_lp: Vec<f64>,
    pub lp_ema: Option<f64>,
    pub epochs: Vec<EpochLog>,
}

impl TrainState {
    fn observe_train_lp(&mut self, lp: f64) {
        self.lp_ema = Some(match self.lp_ema {
            None => lp,
            Some(e) => LP_EMA_DECAY * e + (1.0 - LP_EMA_DECAY) * lp,
        });
    }

    /// Whether the predictor should freeze now.
    fn should_freeze(&self) -> bool {
        match (self.predictor_frozen, self.freeze_threshold, self.lp_ema) {
            (false, Some(t), Some(e)) => e < t,
            _ => false,
        }
    }

    /// Record an epoch's dev loss; sets the threshold at the first increase.
    fn observe_dev_lp(&mut self, lp: f64, policy: FreezePolicy) {
        self.dev_lp.push(lp);
        if let (FreezePolicy::DevMinimum(factor), None) = (policy, self.freeze_threshold) {
            if let [.., prev, last] = self.dev_lp[..] {
                if last > prev {
                    self.freeze_threshold = Some(factor * prev);
                }
            }
        }
    }
}

/// Tape handles of one batch's loss terms.
#[derive(Debug, Clone, Copy)]
pub struct LossVars {
    pub l_p: Var,
    pub l_e: Var,
    pub l: Var,
    pub ef: Option<Var>,
    pub l_mrt: Var,
    pub l_final: Var,
}

impl LossVars {
    pub fn values(&self, tape: &Tape, w: LossWeights) -> LossBreakdown {
        let ef = self.ef.map_or(0.0, |e| {
            let v = tape.value(e);
            v.iter().sum::<f64>() / v.len() as f64
        });
        let b = LossBreakdown {
            l_p: tape.scalar(self.l_p),
            l_e: tape.scalar(self.l_e),
            l: tape.scalar(self.l),
            ef,
            l_mrt: tape.scalar(self.l_mrt),
            l_final: tape.scalar(self.l_final),
        };
        debug_assert_eq!(b.l_final.to_bits(), (w.joint * b.l + w.mrt * b.l_mrt).to_bits());
        b
    }
}

/// Ground-truth probabilities entering EF, as `[batch, 1]` tape values.
pub struct EfInputs<'a> {
    pub p_pred: Var,
    pub p_classified: Var,
    pub p_gold: &'a [f64],
}

/// Build the loss terms on the tape. Without `ef`, `L_MRT` is the constant 0.
pub fn loss_terms(
    tape: &mut Tape,
    lp_rows: Var,
    le_rows: Var,
    ef: Option<EfInputs<'_>>,
    w: LossWeights,
) -> Result<LossVars> {
    let l_p = tape.mean(lp_rows)?;
    let l_e = tape.mean(le_rows)?;
    let l = tape.add(l_p, l_e)?;
    let (ef, l_mrt) = match ef {
        None => (None, tape.constant_scalar(0.0)?),
        Some(EfInputs {
            p_pred,
            p_classified,
            p_gold,
        }) => {
            let gold = tape.constant(&[p_gold.len(), 1], p_gold.to_vec())?;
            let dg = tape.sub(p_classified, gold)?;
            let dg = tape.abs(dg)?;
            let dp = tape.sub(p_classified, p_pred)?;
            let dp = tape.abs(dp)?;
            let ef = tape.add(dg, dp)?;
            let l_rows = tape.add(lp_rows, le_rows)?;
            let prod = tape.mul(l_rows, ef)?;
            (Some(ef), tape.mean(prod)?)
        }
    };
    let a = tape.scale(l, w.joint)?;
    let b = tape.scale(l_mrt, w.mrt)?;
    let l_final = tape.add(a, b)?;
    Ok(LossVars {
        l_p,
        l_e,
        l,
        ef,
        l_mrt,
        l_final,
    })
}

/// `min(1, step / (frac · total))`; 1 when annealing is off.
pub fn kl_weight(step: usize, total_steps: usize, frac: f64) -> f64 {
    let ramp = frac * total_steps as f64;
    if ramp <= 0.0 {
        1.0
    } else {
        (step as f64 / ramp).min(1.0)
    }
}

/// Per-epoch generator: same seed, one stream per epoch.
pub fn epoch_rng(seed: u64, epoch: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch as u64);
    rng
}

/// Dev `L_p`, top-1 and top-3 of the predictor.
pub fn dev_metrics<N: Network>(model: &Model<N>, dev: &[N::Item]) -> Result<(f64, f64, f64)> {
    if dev.is_empty() {
        return Err(GefError::validation("dev split is empty"));
    }
    let mut lp_sum = 0.0;
    let mut probs = Vec::with_capacity(dev.len());
    for chunk in dev.chunks(crate::gef::network::INFERENCE_CHUNK) {
        let refs: Vec<&N::Item> = chunk.iter().collect();
        let mut tape = Tape::new();
        let seq = N::review_batch(&refs)?;
        let v_e = model.net.encoder().encode(&mut tape, &model.store, &seq)?;
        let logits = model.net.predictor().logits(&mut tape, &model.store, v_e)?;
        let y: Vec<usize> = refs.iter().map(|i| i.label()).collect();
        let ce = tape.cross_entropy_rows(logits, &y)?;
        lp_sum += tape.value(ce).iter().sum::<f64>();
        let p = tape.softmax(logits)?;
        probs.extend(rows_of(&tape, p));
    }
    let y: Vec<usize> = dev.iter().map(Item::label).collect();
    let k3 = 3.min(probs[0].len());
    Ok((
        lp_sum / dev.len() as f64,
        topk_accuracy(&probs, &y, 1)?,
        topk_accuracy(&probs, &y, k3)?,
    ))
}

fn divergence(epoch: usize, batch: usize, e: GefError) -> GefError {
    match e {
        GefError::Tensor(TensorError::NonFinite { op }) => GefError::Divergence {
            epoch,
            batch,
            detail: format!("non-finite value in {op}"),
        },
        other => other,
    }
}

pub struct Trainer<'a, N: Network> {
    pub model: Model<N>,
    classifier: Option<&'a Classifier<N::Classifier>>,
    pub config: TrainConfig,
    pub adam: AdamState,
    pub state: TrainState,
    train: &'a [N::Item],
    dev: &'a [N::Item],
    /// `p_gold` per training example, fixed because C is frozen.
    gold: Option<Vec<f64>>,
    pub steps: Vec<StepLog>,
}

impl<'a, N: Network> Trainer<'a, N> {
    pub fn new(
        model: Model<N>,
        classifier: Option<&'a Classifier<N::Classifier>>,
        train: &'a [N::Item],
        dev: &'a [N::Item],
        config: TrainConfig,
    ) -> Result<Self> {
        let adam = AdamState::new(&model.store, AdamConfig::with_lr(config.lr));
        let mut state = TrainState::default();
        if let FreezePolicy::Fixed(t) = config.predictor_freeze {
            state.freeze_threshold = Some(t);
        }
        Self::with_state(model, classifier, train, dev, config, adam, state)
    }

    /// Continue from saved optimiser and trainer state.
    pub fn with_state(
        mut model: Model<N>,
        classifier: Option<&'a Classifier<N::Classifier>>,
        train: &'a [N::Item],
        dev: &'a [N::Item],
        config: TrainConfig,
        adam: AdamState,
        state: TrainState,
    ) -> Result<Self> {
        config.validate()?;
        if train.is_empty() {
            return Err(GefError::EmptyCorpus);
        }
        let gold = match classifier {
            None => None,
            Some(c) => {
                if !c.is_frozen() {
                    return Err(GefError::validation("classifier must be frozen before training"));
                }
                if c.vocab != model.vocab {
                    return Err(GefError::validation(format!(
                        "classifier vocabulary ({} tokens) differs from the model's ({} tokens)",
                        c.vocab.len(),
                        model.vocab.len()
                    )));
                }
                if c.net.n_classes() != model.net.predictor().n_classes {
                    return Err(GefError::validation("classifier and predictor disagree on the class count"));
                }
                let probs = classifier_probs(&c.net, &c.store, train)?;
                Some(
                    probs
                        .iter()
                        .zip(train)
                        .map(|(p, it)| p[it.label()])
                        .collect(),
                )
            }
        };
        model.store.set_frozen(N::PREDICTOR_PREFIX, state.predictor_frozen);
        Ok(Self {
            model,
            classifier,
            config,
            adam,
            state,
            train,
            dev,
            gold,
            steps: Vec::new(),
        })
    }

    pub fn batches_per_epoch(&self) -> usize {
        self.train.len().div_ceil(self.config.batch_size)
    }

    pub fn total_steps(&self) -> usize {
        self.batches_per_epoch() * self.config.epochs
    }

    pub fn is_done(&self) -> bool {
        self.state.epoch >= self.config.epochs
    }

    pub fn logs(&self) -> &[EpochLog] {
        &self.state.epochs
    }

    pub fn into_model(self) -> Model<N> {
        self.model
    }

    pub fn run(&mut self) -> Result<()> {
        while !self.is_done() {
            self.run_epoch()?;
        }
        Ok(())
    }

    /// One pass over the shuffled training set plus dev evaluation.
    pub fn run_epoch(&mut self) -> Result<EpochLog> {
        let epoch = self.state.epoch;
        let mut rng = epoch_rng(self.config.seed, epoch);
        let mut order: Vec<usize> = (0..self.train.len()).collect();
        order.shuffle(&mut rng);
        let total = self.total_steps();
        let mut parts = Vec::with_capacity(self.batches_per_epoch());
        for (b, idx) in order.chunks(self.config.batch_size).enumerate() {
            let kw = kl_weight(self.state.global_step, total, self.config.kl_anneal_frac);
            let losses = self.step(idx, kw, &mut rng).map_err(|e| divergence(epoch, b, e))?;
            if !losses.is_finite() {
                return Err(GefError::Divergence {
                    epoch,
                    batch: b,
                    detail: format!("loss {losses:?}"),
                });
            }
            self.state.observe_train_lp(losses.l_p);
            if self.state.should_freeze() {
                self.state.predictor_frozen = true;
                self.model.store.set_frozen(N::PREDICTOR_PREFIX, true);
            }
            if self.config.record_steps {
                self.steps.push(StepLog {
                    step: self.state.global_step,
                    epoch,
                    batch: b,
                    kl_weight: kw,
                    predictor_frozen: self.state.predictor_frozen,
                    losses,
                });
            }
            self.state.global_step += 1;
            parts.push(losses);
        }
        let (dev_lp, dev_acc, dev_top3) = dev_metrics(&self.model, self.dev)?;
        self.state.observe_dev_lp(dev_lp, self.config.predictor_freeze);
        let log = EpochLog {
            epoch,
            losses: LossBreakdown::mean(&parts, self.config.weights),
            dev_acc,
            dev_top3,
        };
        self.state.epochs.push(log.clone());
        self.state.epoch += 1;
        Ok(log)
    }

    fn step(&mut self, idx: &[usize], kl_weight: f64, rng: &mut ChaCha8Rng) -> Result<LossBreakdown> {
        let items: Vec<&N::Item> = idx.iter().map(|&i| &self.train[i]).collect();
        let labels: Vec<usize> = items.iter().map(|i| i.label()).collect();
        let mut tape = Tape::new();
        let mut ctx = ForwardCtx {
            kl_weight,
            ef_mode: self.config.ef_mode,
            use_explanation_loss: self.config.use_explanation_loss,
            rng,
        };
        let cls = self.classifier.map(|c| (&c.net, &c.store));
        let fwd = self.model.net.forward(&mut tape, &self.model.store, &items, cls, &mut ctx)?;
        let gold: Option<Vec<f64>> = self
            .gold
            .as_ref()
            .map(|g| idx.iter().map(|&i| g[i]).collect());
        let ef = match (fwd.cls_logits, &gold) {
            (Some(cl), Some(g)) => {
                let pp = tape.softmax(fwd.pred_logits)?;
                let mut p_pred = tape.pick(pp, &labels)?;
                if self.config.ef_mode == EfMode::StopGradient {
                    p_pred = tape.constant(&[labels.len(), 1], tape.value(p_pred).to_vec())?;
                }
                let pc = tape.softmax(cl)?;
                let p_classified = tape.pick(pc, &labels)?;
                Some(EfInputs {
                    p_pred,
                    p_classified,
                    p_gold: g,
                })
            }
            _ => None,
        };
        let vars = loss_terms(&mut tape, fwd.lp_rows, fwd.le_rows, ef, self.config.weights)?;
        let losses = vars.values(&tape, self.config.weights);
        if !losses.is_finite() {
            return Ok(losses);
        }
        tape.backward_into(vars.l_final, &mut self.model.store)?;
        self.adam.step(&mut self.model.store)?;
        Ok(losses)
    }
}

/// Argmax predictions, for callers that only need labels.
pub fn predict_labels<N: Network>(model: &Model<N>, items: &[N::Item]) -> Result<Vec<usize>> {
    Ok(model
        .net
        .predict_probs(&model.store, items)?
        .iter()
        .map(|p| metrics::argmax(p))
        .collect())
}
