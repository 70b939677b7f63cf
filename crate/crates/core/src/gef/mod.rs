//! Joint prediction and explanation training with the explanation factor.

pub mod config;
pub mod data;
pub mod loss;
pub mod network;
pub mod persist;
pub mod pretrain;
pub mod train;

pub use config::{EfMode, FreezePolicy, TrainConfig};
pub use data::{build_vocab, encode_all, Encodable, Item, NumericItem, TextItem};
pub use loss::{explanation_factor, extract_gold_prob, final_loss, mrt_loss, LossBreakdown, LossWeights, ProbTriple};
pub use network::{
    Classifier, ClassifierNet, EvalReport, Forward, ForwardCtx, Inference, Model, Network, NumericNet, NumericNetConfig,
    TextNet, TextNetConfig,
};
pub use pretrain::{pretrain_classifier, PretrainConfig, PretrainLog};
pub use train::{EpochLog, StepLog, TrainState, Trainer};
