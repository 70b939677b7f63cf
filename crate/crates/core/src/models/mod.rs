//! Neural components: review encoders, the predictor, the numeric and
//! CVAE generators, and the explanation classifiers.

pub mod classifier;
pub mod cvae;
pub mod encoder;
pub mod heads;
pub mod layers;

pub use classifier::{NumericClassifier, NumericClassifierConfig, TextClassifier, TextClassifierConfig};
pub use cvae::{Cvae, CvaeConfig, ElboOutput};
pub use encoder::{Encoder, EncoderConfig, EncoderKind};
pub use heads::{NumericGenerator, Predictor, N_FIELDS, N_SCORES};
pub use layers::{Linear, SeqBatch, SeqInput};
