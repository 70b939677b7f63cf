//! Schema-specific glue: which record, network and classifier go together.

use gef_core::gef::network::Inference;
use gef_core::gef::{ClassifierNet, Encodable, Network, NumericNet, NumericNetConfig, TextNet, TextNetConfig};
use gef_core::models::{NumericClassifierConfig, TextClassifierConfig};
use gef_core::text::schema::{PcMagExample, Record, SkytraxExample, POLARITIES, SUBFIELDS};
use gef_core::text::{synth_numeric, synth_text, Vocab};
use gef_core::Result;
use serde_json::{json, Value};

use crate::config::RunConfig;

pub type ClsOf<F> = <<F as Form>::Net as Network>::Classifier;
pub type ItemOf<F> = <<F as Form>::Net as Network>::Item;

pub trait Form {
    type Record: Encodable<Item = ItemOf<Self>> + Record;
    type Net: Network;

    fn synth(n: usize, seed: u64) -> Vec<Self::Record>;
    fn net_config(cfg: &RunConfig, vocab: &Vocab) -> <Self::Net as Network>::Config;
    fn classifier_config(cfg: &RunConfig, vocab: &Vocab) -> <ClsOf<Self> as ClassifierNet>::Config;
    /// The example's JSONL object with the prediction attached.
    fn explain(
        ex: &Self::Record,
        inf: &Inference<<Self::Net as Network>::Explanation>,
        vocab: &Vocab,
    ) -> Result<Value>;
}

pub struct Numeric;
pub struct Text;

impl Form for Numeric {
    type Record = SkytraxExample;
    type Net = NumericNet;

    fn synth(n: usize, seed: u64) -> Vec<SkytraxExample> {
        synth_numeric(n, seed)
    }

    fn net_config(cfg: &RunConfig, vocab: &Vocab) -> NumericNetConfig {
        NumericNetConfig {
            encoder: cfg.encoder_config(vocab.len()),
            n_classes: SkytraxExample::N_CLASSES,
        }
    }

    fn classifier_config(cfg: &RunConfig, _vocab: &Vocab) -> NumericClassifierConfig {
        NumericClassifierConfig {
            embedding_dim: cfg.classifier.embedding_dim,
            hidden_dim: cfg.classifier.hidden_dim,
            n_classes: SkytraxExample::N_CLASSES,
        }
    }

    fn explain(ex: &SkytraxExample, inf: &Inference<[u8; 5]>, _vocab: &Vocab) -> Result<Value> {
        let mut v = serde_json::to_value(ex.to_json())?;
        let mut pred = serde_json::Map::new();
        pred.insert("overall".into(), json!(inf.label + 1));
        for (name, s) in SUBFIELDS.iter().zip(inf.explanation) {
            pred.insert((*name).into(), json!(s));
        }
        v["predicted"] = Value::Object(pred);
        Ok(v)
    }
}

impl Form for Text {
    type Record = PcMagExample;
    type Net = TextNet;

    fn synth(n: usize, seed: u64) -> Vec<PcMagExample> {
        synth_text(n, seed)
    }

    fn net_config(cfg: &RunConfig, vocab: &Vocab) -> TextNetConfig {
        TextNetConfig {
            encoder: cfg.encoder_config(vocab.len()),
            n_classes: PcMagExample::N_CLASSES,
            cvae: cfg.cvae_config(vocab.len()),
        }
    }

    fn classifier_config(cfg: &RunConfig, vocab: &Vocab) -> TextClassifierConfig {
        TextClassifierConfig {
            vocab_size: vocab.len(),
            embedding_dim: cfg.classifier.embedding_dim,
            hidden_dim: cfg.classifier.hidden_dim,
            n_classes: PcMagExample::N_CLASSES,
        }
    }

    fn explain(ex: &PcMagExample, inf: &Inference<[Vec<usize>; 3]>, vocab: &Vocab) -> Result<Value> {
        let mut v = serde_json::to_value(ex.to_json())?;
        let mut pred = serde_json::Map::new();
        pred.insert("overall".into(), json!(PcMagExample::overall_of(inf.label)));
        for (name, ids) in POLARITIES.iter().zip(&inf.explanation) {
            pred.insert((*name).into(), json!(vocab.decode(ids).join(" ")));
        }
        v["predicted"] = Value::Object(pred);
        Ok(v)
    }
}
