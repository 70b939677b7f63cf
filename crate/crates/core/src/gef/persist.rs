//! Model, trainer and classifier checkpoints.
//!
//! A model checkpoint stores parameters as `model.<name>` and, when written
//! by the trainer, Adam moments as `adam.m.<name>` / `adam.v.<name>`. The
//! manifest carries the schema, network config, vocabulary and trainer
//! state. Classifier parameters are all named `classifier.<name>` and are
//! stored under their own names.

use std::path::Path;

use gef_tensor::{AdamConfig, AdamState, Checkpoint, Tensor};
use serde::{Deserialize, Serialize};

use crate::error::{GefError, Result};
use crate::gef::config::TrainConfig;
use crate::gef::network::{Classifier, ClassifierNet, Model, Network};
use crate::gef::train::{TrainState, Trainer};
use crate::text::schema::Schema;
use crate::text::vocab::Vocab;

const MODEL_KIND: &str = "gef-model";
const CLASSIFIER_KIND: &str = "gef-classifier";

#[derive(Debug, Clone, Serialize, Deserialize)]
struct AdamMeta {
    config: AdamConfig,
    step: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ModelManifest<C> {
    kind: String,
    schema: Schema,
    net: C,
    vocab: Vocab,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    train: Option<TrainConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    state: Option<TrainState>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    adam: Option<AdamMeta>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ClassifierManifest<C> {
    kind: String,
    schema: Schema,
    net: C,
    vocab: Vocab,
    oracle_dev_top1: Option<f64>,
}

/// Kind and schema of a checkpoint, for dispatching on load.
pub fn peek(ckpt: &Checkpoint) -> Result<(String, Schema)> {
    #[derive(Deserialize)]
    struct Head {
        kind: String,
        schema: Schema,
    }
    let h: Head = serde_json::from_value(ckpt.manifest.clone())?;
    Ok((h.kind, h.schema))
}

fn expect_kind(ckpt: &Checkpoint, kind: &str, schema: Schema) -> Result<()> {
    let (k, s) = peek(ckpt)?;
    if k != kind || s != schema {
        return Err(GefError::validation(format!(
            "checkpoint holds a {s} {k}, expected a {schema} {kind}"
        )));
    }
    Ok(())
}

fn model_checkpoint<N: Network>(model: &Model<N>, extra: Option<(&TrainConfig, &TrainState, &AdamState)>) -> Result<Checkpoint> {
    let manifest = ModelManifest {
        kind: MODEL_KIND.into(),
        schema: N::SCHEMA,
        net: model.net.config().clone(),
        vocab: model.vocab.clone(),
        train: extra.map(|e| e.0.clone()),
        state: extra.map(|e| e.1.clone()),
        adam: extra.map(|e| AdamMeta {
            config: e.2.config,
            step: e.2.step,
        }),
    };
    let mut ckpt = Checkpoint::new(serde_json::to_value(manifest)?);
    ckpt.push_store("model.", &model.store)?;
    if let Some((_, _, adam)) = extra {
        for (i, (_, p)) in model.store.iter().enumerate() {
            let n = adam.m[i].len();
            ckpt.push(format!("adam.m.{}", p.name), Tensor::new(&[n], adam.m[i].clone())?)?;
            ckpt.push(format!("adam.v.{}", p.name), Tensor::new(&[n], adam.v[i].clone())?)?;
        }
    }
    Ok(ckpt)
}

fn model_from_checkpoint<N: Network>(ckpt: &Checkpoint) -> Result<(Model<N>, ModelManifest<N::Config>)> {
    expect_kind(ckpt, MODEL_KIND, N::SCHEMA)?;
    let manifest: ModelManifest<N::Config> = serde_json::from_value(ckpt.manifest.clone())?;
    let mut model = Model::<N>::new(manifest.net.clone(), manifest.vocab.clone(), 0)?;
    ckpt.restore_store("model.", &mut model.store)?;
    Ok((model, manifest))
}

impl<N: Network> Model<N> {
    pub fn to_checkpoint(&self) -> Result<Checkpoint> {
        model_checkpoint(self, None)
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        Ok(model_from_checkpoint(ckpt)?.0)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        Ok(self.to_checkpoint()?.save(path)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_checkpoint(&Checkpoint::load(path)?)
    }
}

impl<'a, N: Network> Trainer<'a, N> {
    /// Parameters, Adam moments and trainer state.
    pub fn checkpoint(&self) -> Result<Checkpoint> {
        model_checkpoint(&self.model, Some((&self.config, &self.state, &self.adam)))
    }

    /// Rebuild a trainer from [`Trainer::checkpoint`] output. `epochs`
    /// overrides the stored epoch budget.
    pub fn resume(
        ckpt: &Checkpoint,
        classifier: Option<&'a Classifier<N::Classifier>>,
        train: &'a [N::Item],
        dev: &'a [N::Item],
        epochs: Option<usize>,
    ) -> Result<Self> {
        let (model, manifest) = model_from_checkpoint::<N>(ckpt)?;
        let (Some(mut config), Some(state), Some(meta)) = (manifest.train, manifest.state, manifest.adam) else {
            return Err(GefError::validation("checkpoint has no trainer state"));
        };
        if let Some(e) = epochs {
            config.epochs = e;
        }
        let mut adam = AdamState::new(&model.store, meta.config);
        adam.step = meta.step;
        for (i, (_, p)) in model.store.iter().enumerate() {
            for (buf, kind) in [(&mut adam.m[i], "m"), (&mut adam.v[i], "v")] {
                let key = format!("adam.{kind}.{}", p.name);
                let t = ckpt
                    .get(&key)
                    .ok_or_else(|| GefError::validation(format!("checkpoint lacks {key}")))?;
                if t.numel() != buf.len() {
                    return Err(GefError::validation(format!("{key} has {} values, expected {}", t.numel(), buf.len())));
                }
                buf.copy_from_slice(t.data());
            }
        }
        Trainer::with_state(model, classifier, train, dev, config, adam, state)
    }
}

impl<C: ClassifierNet> Classifier<C> {
    pub fn to_checkpoint(&self) -> Result<Checkpoint> {
        let manifest = ClassifierManifest {
            kind: CLASSIFIER_KIND.into(),
            schema: C::SCHEMA,
            net: self.net.config().clone(),
            vocab: self.vocab.clone(),
            oracle_dev_top1: self.oracle_dev_top1,
        };
        let mut ckpt = Checkpoint::new(serde_json::to_value(manifest)?);
        ckpt.push_store("", &self.store)?;
        Ok(ckpt)
    }

    /// Load and freeze.
    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        expect_kind(ckpt, CLASSIFIER_KIND, C::SCHEMA)?;
        let m: ClassifierManifest<C::Config> = serde_json::from_value(ckpt.manifest.clone())?;
        let mut c = Classifier::<C>::new(m.net, m.vocab, 0)?;
        ckpt.restore_store("", &mut c.store)?;
        c.store.freeze_all();
        c.oracle_dev_top1 = m.oracle_dev_top1;
        Ok(c)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        Ok(self.to_checkpoint()?.save(path)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_checkpoint(&Checkpoint::load(path)?)
    }
}

/// [`peek`] on a checkpoint file.
pub fn peek_path(path: impl AsRef<Path>) -> Result<(String, Schema)> {
    peek(&Checkpoint::load(path)?)
}

pub fn is_model(kind: &str) -> bool {
    kind == MODEL_KIND
}

pub fn is_classifier(kind: &str) -> bool {
    kind == CLASSIFIER_KIND
}
