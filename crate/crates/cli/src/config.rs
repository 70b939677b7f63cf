//! Run configuration: schema defaults, then the TOML file, then flags.
//!
//! ```toml
//! [data]
//! split_seed = 0
//! min_freq = 2
//!
//! [model]
//! encoder = "lstm"
//! hidden_dim = 256
//!
//! [train]
//! epochs = 10
//! ef_mode = "soft-through-c"
//! freeze = "dev-minimum"
//! freeze_value = 1.05
//!
//! [classifier]
//! hidden_dim = 64
//! ```

use std::path::Path;

use gef_core::gef::{EfMode, FreezePolicy, LossWeights, PretrainConfig, TrainConfig};
use gef_core::models::{CvaeConfig, EncoderConfig, EncoderKind};
use gef_core::text::schema::Schema;
use gef_core::text::Vocab;
use gef_core::{GefError, Result};
use serde::Deserialize;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FileConfig {
    pub data: DataSection,
    pub model: ModelSection,
    pub train: TrainSection,
    pub classifier: ClassifierSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataSection {
    pub split_seed: Option<u64>,
    pub min_freq: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub encoder: Option<EncoderKind>,
    pub embedding_dim: Option<usize>,
    pub hidden_dim: Option<usize>,
    pub cnn_filters: Option<usize>,
    pub cnn_filter_sizes: Option<Vec<usize>>,
    pub latent_dim: Option<usize>,
    pub control_dim: Option<usize>,
    pub decoder_embedding_dim: Option<usize>,
    pub decoder_hidden_dim: Option<usize>,
    pub mlp_dim: Option<usize>,
    pub max_len: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub batch_size: Option<usize>,
    pub lr: Option<f64>,
    pub epochs: Option<usize>,
    pub ef_mode: Option<EfMode>,
    /// `never`, `dev-minimum` or `fixed`.
    pub freeze: Option<String>,
    pub freeze_value: Option<f64>,
    pub kl_anneal_frac: Option<f64>,
    pub weight_joint: Option<f64>,
    pub weight_mrt: Option<f64>,
    pub use_explanation_loss: Option<bool>,
    pub record_steps: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClassifierSection {
    pub embedding_dim: Option<usize>,
    pub hidden_dim: Option<usize>,
    pub batch_size: Option<usize>,
    pub lr: Option<f64>,
    pub max_epochs: Option<usize>,
    pub patience: Option<usize>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)?;
        toml::from_str(&text).map_err(|e| GefError::validation(format!("{}: {e}", path.display())))
    }
}

/// Flags of `train` and `pretrain-c` that override file values.
#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub encoder: Option<EncoderKind>,
    pub hidden_dim: Option<usize>,
    pub epochs: Option<usize>,
    pub lr: Option<f64>,
    pub batch_size: Option<usize>,
    pub ef_mode: Option<EfMode>,
    pub max_epochs: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierSettings {
    pub embedding_dim: usize,
    pub hidden_dim: usize,
    pub pretrain: PretrainConfig,
}

/// Fully resolved settings for one schema.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub schema: Schema,
    pub split_seed: u64,
    pub min_freq: usize,
    pub encoder: EncoderKind,
    pub embedding_dim: usize,
    pub hidden_dim: usize,
    pub cnn_filters: usize,
    pub cnn_filter_sizes: Vec<usize>,
    pub latent_dim: usize,
    pub control_dim: usize,
    pub decoder_embedding_dim: usize,
    pub decoder_hidden_dim: usize,
    pub mlp_dim: usize,
    pub max_len: usize,
    pub train: TrainConfig,
    pub classifier: ClassifierSettings,
}

impl RunConfig {
    /// Full-size defaults for `schema`.
    pub fn defaults(schema: Schema, seed: u64) -> Self {
        let train = TrainConfig {
            seed,
            ..TrainConfig::for_schema(schema)
        };
        let pretrain = PretrainConfig {
            batch_size: train.batch_size,
            seed,
            ..PretrainConfig::default()
        };
        let (encoder, hidden_dim, classifier) = match schema {
            Schema::Skytrax => (
                EncoderKind::Lstm,
                EncoderConfig::SKYTRAX_HIDDEN_DIM,
                ClassifierSettings {
                    embedding_dim: 16,
                    hidden_dim: 64,
                    pretrain,
                },
            ),
            Schema::PcMag => (
                EncoderKind::Gru,
                EncoderConfig::PCMAG_HIDDEN_DIM,
                ClassifierSettings {
                    embedding_dim: EncoderConfig::DEFAULT_EMBEDDING_DIM,
                    hidden_dim: EncoderConfig::PCMAG_HIDDEN_DIM,
                    pretrain,
                },
            ),
        };
        let cvae = CvaeConfig::new(1, hidden_dim);
        Self {
            schema,
            split_seed: 0,
            min_freq: Vocab::DEFAULT_MIN_FREQ,
            encoder,
            embedding_dim: EncoderConfig::DEFAULT_EMBEDDING_DIM,
            hidden_dim,
            cnn_filters: EncoderConfig::DEFAULT_CNN_FILTERS,
            cnn_filter_sizes: EncoderConfig::DEFAULT_CNN_FILTER_SIZES.to_vec(),
            latent_dim: cvae.latent_dim,
            control_dim: cvae.control_dim,
            decoder_embedding_dim: cvae.embedding_dim,
            decoder_hidden_dim: cvae.hidden_dim,
            mlp_dim: cvae.mlp_dim,
            max_len: cvae.max_len,
            train,
            classifier,
        }
    }

    pub fn resolve(schema: Schema, seed: u64, file: &FileConfig, flags: &Overrides) -> Result<Self> {
        let mut c = Self::defaults(schema, seed);
        let d = &file.data;
        set(&mut c.split_seed, d.split_seed);
        set(&mut c.min_freq, d.min_freq);

        let m = &file.model;
        set(&mut c.encoder, m.encoder);
        set(&mut c.embedding_dim, m.embedding_dim);
        set(&mut c.hidden_dim, m.hidden_dim);
        set(&mut c.cnn_filters, m.cnn_filters);
        set(&mut c.cnn_filter_sizes, m.cnn_filter_sizes.clone());
        set(&mut c.latent_dim, m.latent_dim);
        set(&mut c.control_dim, m.control_dim);
        set(&mut c.decoder_embedding_dim, m.decoder_embedding_dim);
        set(&mut c.decoder_hidden_dim, m.decoder_hidden_dim);
        set(&mut c.mlp_dim, m.mlp_dim);
        set(&mut c.max_len, m.max_len);

        let t = &file.train;
        let tc = &mut c.train;
        set(&mut tc.batch_size, t.batch_size);
        set(&mut tc.lr, t.lr);
        set(&mut tc.epochs, t.epochs);
        set(&mut tc.ef_mode, t.ef_mode);
        set(&mut tc.kl_anneal_frac, t.kl_anneal_frac);
        set(&mut tc.weights.joint, t.weight_joint);
        set(&mut tc.weights.mrt, t.weight_mrt);
        set(&mut tc.use_explanation_loss, t.use_explanation_loss);
        set(&mut tc.record_steps, t.record_steps);
        if let Some(p) = &t.freeze {
            tc.predictor_freeze = freeze_policy(p, t.freeze_value)?;
        } else if let Some(v) = t.freeze_value {
            tc.predictor_freeze = match tc.predictor_freeze {
                FreezePolicy::Never => return Err(GefError::validation("freeze_value given without freeze")),
                FreezePolicy::DevMinimum(_) => FreezePolicy::DevMinimum(v),
                FreezePolicy::Fixed(_) => FreezePolicy::Fixed(v),
            };
        }

        let k = &file.classifier;
        let cs = &mut c.classifier;
        set(&mut cs.embedding_dim, k.embedding_dim);
        set(&mut cs.hidden_dim, k.hidden_dim);
        set(&mut cs.pretrain.batch_size, k.batch_size);
        set(&mut cs.pretrain.lr, k.lr);
        set(&mut cs.pretrain.max_epochs, k.max_epochs);
        set(&mut cs.pretrain.patience, k.patience);

        set(&mut c.encoder, flags.encoder);
        set(&mut c.hidden_dim, flags.hidden_dim);
        set(&mut c.train.epochs, flags.epochs);
        set(&mut c.train.lr, flags.lr);
        set(&mut c.train.batch_size, flags.batch_size);
        set(&mut c.train.ef_mode, flags.ef_mode);
        set(&mut c.classifier.pretrain.max_epochs, flags.max_epochs);
        c.train.validate()?;
        Ok(c)
    }

    pub fn encoder_config(&self, vocab_size: usize) -> EncoderConfig {
        let cnn = self.encoder == EncoderKind::Cnn;
        EncoderConfig {
            kind: self.encoder,
            embedding_dim: self.embedding_dim,
            hidden_dim: self.hidden_dim,
            cnn_filters: cnn.then_some(self.cnn_filters),
            cnn_filter_sizes: cnn.then(|| self.cnn_filter_sizes.clone()),
            vocab_size,
        }
    }

    pub fn cvae_config(&self, vocab_size: usize) -> CvaeConfig {
        CvaeConfig {
            vocab_size,
            embedding_dim: self.decoder_embedding_dim,
            hidden_dim: self.decoder_hidden_dim,
            latent_dim: self.latent_dim,
            control_dim: self.control_dim,
            cond_dim: self.hidden_dim,
            mlp_dim: self.mlp_dim,
            max_len: self.max_len,
        }
    }

    pub fn baseline(&mut self) {
        self.train.weights = LossWeights::BASELINE;
    }
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

fn freeze_policy(name: &str, value: Option<f64>) -> Result<FreezePolicy> {
    match (name, value) {
        ("never", None) => Ok(FreezePolicy::Never),
        ("dev-minimum", v) => Ok(FreezePolicy::DevMinimum(v.unwrap_or(FreezePolicy::DEFAULT_FACTOR))),
        ("fixed", Some(v)) => Ok(FreezePolicy::Fixed(v)),
        ("fixed", None) => Err(GefError::validation("freeze = \"fixed\" needs freeze_value")),
        ("never", Some(_)) => Err(GefError::validation("freeze = \"never\" takes no freeze_value")),
        (other, _) => Err(GefError::validation(format!("unknown freeze policy {other:?}"))),
    }
}
