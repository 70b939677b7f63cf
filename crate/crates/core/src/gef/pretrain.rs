//! Pre-training of the classifier C on golden explanations.

use gef_tensor::{AdamConfig, AdamState, ParamStore, Tape};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{GefError, Result};
use crate::gef::data::Item;
use crate::gef::network::{oracle_report, Classifier, ClassifierNet};
use crate::gef::train::epoch_rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PretrainConfig {
    pub batch_size: usize,
    pub lr: f64,
    pub max_epochs: usize,
    /// Stop after this many epochs without a dev-accuracy improvement.
    pub patience: usize,
    pub seed: u64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 64,
            lr: 1e-3,
            max_epochs: 50,
            patience: 5,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PretrainLog {
    pub epoch: usize,
    pub loss: f64,
    pub dev_acc: f64,
}

/// Train C with early stopping, restore its best dev parameters and freeze
/// it. The best dev top-1 is recorded as the Oracle accuracy.
pub fn pretrain_classifier<C: ClassifierNet>(
    cls: &mut Classifier<C>,
    train: &[C::Item],
    dev: &[C::Item],
    cfg: &PretrainConfig,
) -> Result<Vec<PretrainLog>> {
    if train.is_empty() || dev.is_empty() {
        return Err(GefError::EmptyCorpus);
    }
    if cfg.batch_size == 0 || cfg.max_epochs == 0 || !(cfg.lr > 0.0) {
        return Err(GefError::validation("pretrain batch_size, max_epochs and lr must be positive"));
    }
    let mut adam = AdamState::new(&cls.store, AdamConfig::with_lr(cfg.lr));
    let mut best: Option<(f64, ParamStore)> = None;
    let mut since_best = 0;
    let mut logs = Vec::new();
    for epoch in 0..cfg.max_epochs {
        let mut rng = epoch_rng(cfg.seed, epoch);
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut batches = 0;
        for idx in order.chunks(cfg.batch_size) {
            let items: Vec<&C::Item> = idx.iter().map(|&i| &train[i]).collect();
            let y: Vec<usize> = items.iter().map(|i| i.label()).collect();
            let mut tape = Tape::new();
            let logits = cls.net.gold_logits(&mut tape, &cls.store, &items)?;
            let loss = tape.cross_entropy(logits, &y)?;
            let v = tape.scalar(loss);
            if !v.is_finite() {
                return Err(GefError::Divergence {
                    epoch,
                    batch: batches,
                    detail: format!("classifier loss {v}"),
                });
            }
            tape.backward_into(loss, &mut cls.store)?;
            adam.step(&mut cls.store)?;
            total += v;
            batches += 1;
        }
        let dev_acc = oracle_report(&cls.net, &cls.store, dev)?.top1;
        logs.push(PretrainLog {
            epoch,
            loss: total / batches as f64,
            dev_acc,
        });
        if best.as_ref().map_or(true, |(b, _)| dev_acc > *b) {
            best = Some((dev_acc, cls.store.clone()));
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                break;
            }
        }
    }
    let (acc, params) = best.expect("at least one epoch");
    cls.store.load_values(&params)?;
    cls.store.freeze_all();
    cls.oracle_dev_top1 = Some(acc);
    Ok(logs)
}
