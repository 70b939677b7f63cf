//! Evaluation metrics: corpus BLEU for generated comments, accuracy and
//! top-k accuracy for labels. All values are percentages.

pub mod accuracy;
pub mod bleu;

pub use accuracy::{accuracy, argmax, topk_accuracy, AccuracyReport, FieldAccuracy};
pub use bleu::{bleu, bleu_report, bleu_with, BleuReport, BleuScores, BleuStats, Smoothing};
