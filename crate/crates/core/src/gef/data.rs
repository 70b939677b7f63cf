//! Examples encoded against a vocabulary.

use crate::error::{GefError, Result};
use crate::models::heads::N_FIELDS;
use crate::text::schema::{PcMagExample, Record, SkytraxExample};
use crate::text::vocab::Vocab;

pub trait Item {
    fn review(&self) -> &[usize];
    fn label(&self) -> usize;
}

#[derive(Debug, Clone, PartialEq)]
pub struct NumericItem {
    pub review: Vec<usize>,
    pub subscores: [u8; N_FIELDS],
    pub label: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TextItem {
    pub review: Vec<usize>,
    /// Comment ids in polarity order, without EOS.
    pub comments: [Vec<usize>; 3],
    /// The golden comments as tokens, the BLEU references.
    pub golden: [Vec<String>; 3],
    pub label: usize,
}

impl Item for NumericItem {
    fn review(&self) -> &[usize] {
        &self.review
    }

    fn label(&self) -> usize {
        self.label
    }
}

impl Item for TextItem {
    fn review(&self) -> &[usize] {
        &self.review
    }

    fn label(&self) -> usize {
        self.label
    }
}

/// A corpus record that can be encoded for training.
pub trait Encodable: Record {
    type Item: Item + Clone + Send + Sync;

    /// Token sequences that contribute to the vocabulary.
    fn token_sequences(&self) -> Vec<&[String]>;
    fn encode(&self, vocab: &Vocab) -> Result<Self::Item>;
}

fn encode_review(review: &[String], vocab: &Vocab) -> Result<Vec<usize>> {
    if review.is_empty() {
        return Err(GefError::validation("empty review"));
    }
    Ok(vocab.encode(review))
}

impl Encodable for SkytraxExample {
    type Item = NumericItem;

    fn token_sequences(&self) -> Vec<&[String]> {
        vec![&self.review]
    }

    fn encode(&self, vocab: &Vocab) -> Result<NumericItem> {
        Ok(NumericItem {
            review: encode_review(&self.review, vocab)?,
            subscores: self.subscores,
            label: self.class_index(),
        })
    }
}

impl Encodable for PcMagExample {
    type Item = TextItem;

    fn token_sequences(&self) -> Vec<&[String]> {
        let mut v: Vec<&[String]> = vec![&self.review];
        v.extend(self.comments.iter().map(Vec::as_slice));
        v
    }

    fn encode(&self, vocab: &Vocab) -> Result<TextItem> {
        Ok(TextItem {
            review: encode_review(&self.review, vocab)?,
            comments: [0, 1, 2].map(|p| vocab.encode(&self.comments[p])),
            golden: self.comments.clone(),
            label: self.class_index(),
        })
    }
}

pub fn build_vocab<T: Encodable>(examples: &[T], min_freq: usize) -> Vocab {
    let seqs: Vec<&[String]> = examples.iter().flat_map(|e| e.token_sequences()).collect();
    Vocab::build(seqs, min_freq)
}

/// Encode every example; the first failure is reported with its index.
pub fn encode_all<T: Encodable>(examples: &[T], vocab: &Vocab) -> Result<Vec<T::Item>> {
    examples
        .iter()
        .enumerate()
        .map(|(i, e)| {
            e.encode(vocab)
                .map_err(|err| GefError::validation(format!("example {i}: {err}")))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::text::synth::{synth_numeric, synth_text};

    #[test]
    fn vocab_covers_comments_for_text() {
        let ex = synth_text(50, 1);
        let v = build_vocab(&ex, 1);
        let items = encode_all(&ex, &v).unwrap();
        for (e, it) in ex.iter().zip(&items) {
            assert_eq!(v.decode(&it.comments[0]), e.comments[0]);
            assert_eq!(it.label, e.class_index());
        }
    }

    #[test]
    fn empty_review_is_rejected() {
        let mut ex = synth_numeric(3, 1);
        ex[1].review.clear();
        let v = build_vocab(&ex, 1);
        let err = encode_all(&ex, &v).unwrap_err().to_string();
        assert!(err.contains("example 1"), "{err}");
    }
}
