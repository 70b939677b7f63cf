//! Corpus-level BLEU with a single reference per candidate.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{GefError, Result};

pub const MAX_N: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Smoothing {
    /// A zero n-gram precision zeroes every BLEU-n that includes it.
    #[default]
    None,
    /// Add one to numerator and denominator for n > 1.
    AddOne,
}

/// BLEU-1..4 as percentages.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BleuScores {
    pub bleu_1: f64,
    pub bleu_2: f64,
    pub bleu_3: f64,
    pub bleu_4: f64,
}

impl BleuScores {
    pub fn as_array(&self) -> [f64; MAX_N] {
        [self.bleu_1, self.bleu_2, self.bleu_3, self.bleu_4]
    }

    fn from_array(a: [f64; MAX_N]) -> Self {
        Self {
            bleu_1: a[0],
            bleu_2: a[1],
            bleu_3: a[2],
            bleu_4: a[3],
        }
    }
}

/// Per-polarity scores plus the corpus pooled over all three polarities.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BleuReport {
    pub pos: BleuScores,
    pub neg: BleuScores,
    pub neu: BleuScores,
    pub all: BleuScores,
}

/// Raw corpus statistics; summing them over sub-corpora gives the pooled
/// corpus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct BleuStats {
    pub matches: [usize; MAX_N],
    pub totals: [usize; MAX_N],
    pub cand_len: usize,
    pub ref_len: usize,
}

impl BleuStats {
    pub fn collect<S: AsRef<str>>(candidates: &[Vec<S>], references: &[Vec<S>]) -> Result<Self> {
        if candidates.is_empty() {
            return Err(GefError::validation("BLEU over an empty corpus"));
        }
        if candidates.len() != references.len() {
            return Err(GefError::validation(format!(
                "{} candidates but {} references",
                candidates.len(),
                references.len()
            )));
        }
        let mut st = Self::default();
        for (c, r) in candidates.iter().zip(references) {
            let c: Vec<&str> = c.iter().map(AsRef::as_ref).collect();
            let r: Vec<&str> = r.iter().map(AsRef::as_ref).collect();
            st.cand_len += c.len();
            st.ref_len += r.len();
            for n in 1..=MAX_N {
                let rc = ngram_counts(&r, n);
                for (g, k) in ngram_counts(&c, n) {
                    st.matches[n - 1] += k.min(rc.get(&g).copied().unwrap_or(0));
                }
                st.totals[n - 1] += c.len().saturating_sub(n - 1);
            }
        }
        Ok(st)
    }

    pub fn merge(&self, other: &Self) -> Self {
        let mut out = *self;
        for n in 0..MAX_N {
            out.matches[n] += other.matches[n];
            out.totals[n] += other.totals[n];
        }
        out.cand_len += other.cand_len;
        out.ref_len += other.ref_len;
        out
    }

    /// Modified precision of order `n` (1-based), before smoothing.
    pub fn precision(&self, n: usize) -> f64 {
        let t = self.totals[n - 1];
        if t == 0 {
            0.0
        } else {
            self.matches[n - 1] as f64 / t as f64
        }
    }

    pub fn brevity_penalty(&self) -> f64 {
        if self.cand_len == 0 {
            0.0
        } else if self.cand_len < self.ref_len {
            (1.0 - self.ref_len as f64 / self.cand_len as f64).exp()
        } else {
            1.0
        }
    }

    pub fn scores(&self, smoothing: Smoothing) -> BleuScores {
        let bp = self.brevity_penalty();
        let mut out = [0.0; MAX_N];
        let mut log_sum = 0.0;
        let mut dead = false;
        for n in 1..=MAX_N {
            let (m, t) = (self.matches[n - 1] as f64, self.totals[n - 1] as f64);
            let p = match smoothing {
                Smoothing::AddOne if n > 1 => (m + 1.0) / (t + 1.0),
                _ if t == 0.0 => 0.0,
                _ => m / t,
            };
            if p == 0.0 {
                dead = true;
            } else {
                log_sum += p.ln();
            }
            out[n - 1] = if dead || bp == 0.0 {
                0.0
            } else {
                (100.0 * bp * (log_sum / n as f64).exp()).min(100.0)
            };
        }
        BleuScores::from_array(out)
    }
}

fn ngram_counts<'a>(tokens: &[&'a str], n: usize) -> HashMap<Vec<&'a str>, usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *counts.entry(w.to_vec()).or_insert(0) += 1;
        }
    }
    counts
}

/// Corpus BLEU-1..4, no smoothing.
pub fn bleu<S: AsRef<str>>(candidates: &[Vec<S>], references: &[Vec<S>]) -> Result<BleuScores> {
    bleu_with(candidates, references, Smoothing::None)
}

pub fn bleu_with<S: AsRef<str>>(
    candidates: &[Vec<S>],
    references: &[Vec<S>],
    smoothing: Smoothing,
) -> Result<BleuScores> {
    Ok(BleuStats::collect(candidates, references)?.scores(smoothing))
}

/// Score comment triples: `candidates[i][p]` against `references[i][p]` for
/// each polarity `p`, plus the pooled corpus.
pub fn bleu_report<S: AsRef<str>>(
    candidates: &[[Vec<S>; 3]],
    references: &[[Vec<S>; 3]],
    smoothing: Smoothing,
) -> Result<BleuReport> {
    if candidates.len() != references.len() {
        return Err(GefError::validation(format!(
            "{} candidate triples but {} reference triples",
            candidates.len(),
            references.len()
        )));
    }
    let mut per = Vec::with_capacity(3);
    for p in 0..3 {
        let c: Vec<Vec<&str>> = candidates.iter().map(|t| t[p].iter().map(AsRef::as_ref).collect()).collect();
        let r: Vec<Vec<&str>> = references.iter().map(|t| t[p].iter().map(AsRef::as_ref).collect()).collect();
        per.push(BleuStats::collect(&c, &r)?);
    }
    let all = per[0].merge(&per[1]).merge(&per[2]);
    Ok(BleuReport {
        pos: per[0].scores(smoothing),
        neg: per[1].scores(smoothing),
        neu: per[2].scores(smoothing),
        all: all.scores(smoothing),
    })
}
