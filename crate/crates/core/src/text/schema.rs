//! The two corpus schemas and their JSONL form.
//!
//! ```text
//! pcmag:   {"review": str, "pos": str, "neg": str, "neu": str, "overall": number}
//! skytrax: {"review": str, "seat": int, "cabin": int, "food": int,
//!           "inflight": int, "value": int, "overall": int}
//! ```
//!
//! Unknown fields are ignored, so annotated dumps (e.g. `gef explain`
//! output) load back as plain corpora.

use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{GefError, Result};
use crate::text::tokenize::{sentence_count, tokenize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Schema {
    PcMag,
    Skytrax,
}

impl Schema {
    pub fn n_classes(self) -> usize {
        match self {
            Schema::PcMag => PcMagExample::N_CLASSES,
            Schema::Skytrax => SkytraxExample::N_CLASSES,
        }
    }
}

impl fmt::Display for Schema {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Schema::PcMag => "pcmag",
            Schema::Skytrax => "skytrax",
        })
    }
}

impl FromStr for Schema {
    type Err = GefError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "pcmag" => Ok(Schema::PcMag),
            "skytrax" => Ok(Schema::Skytrax),
            other => Err(GefError::validation(format!("unknown schema {other:?}"))),
        }
    }
}

/// Shared behaviour of the two example types.
pub trait Record: Sized + Clone {
    const SCHEMA: Schema;
    type Json: Serialize + for<'de> Deserialize<'de>;

    fn review(&self) -> &[String];
    fn class_index(&self) -> usize;
    /// Post-ingestion length filter.
    fn passes_filter(&self) -> bool;
    fn from_json(json: Self::Json) -> Result<Self>;
    fn to_json(&self) -> Self::Json;
}

/// Comment polarity order used everywhere a triple is indexed.
pub const POLARITIES: [&str; 3] = ["pos", "neg", "neu"];

#[derive(Debug, Clone, PartialEq)]
pub struct PcMagExample {
    pub review: Vec<String>,
    /// Golden explanation, in [`POLARITIES`] order.
    pub comments: [Vec<String>; 3],
    pub overall: f64,
}

impl PcMagExample {
    pub const N_CLASSES: usize = 9;
    pub const MAX_SENTENCES: usize = 70;
    pub const MAX_COMMENT_TOKENS: usize = 75;

    /// `overall` must lie on the grid {1.0, 1.5, …, 5.0}; the class index is
    /// `round(2·overall) − 2`.
    pub fn class_of(overall: f64) -> Result<usize> {
        let twice = 2.0 * overall;
        let r = twice.round();
        if !overall.is_finite() || (twice - r).abs() > 1e-9 || !(2.0..=10.0).contains(&r) {
            return Err(GefError::validation(format!(
                "overall {overall} is not on the 1.0..5.0 half-point grid"
            )));
        }
        Ok(r as usize - 2)
    }

    pub fn overall_of(class: usize) -> f64 {
        (class as f64 + 2.0) / 2.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcMagJson {
    pub review: String,
    pub pos: String,
    pub neg: String,
    pub neu: String,
    pub overall: f64,
}

impl Record for PcMagExample {
    const SCHEMA: Schema = Schema::PcMag;
    type Json = PcMagJson;

    fn review(&self) -> &[String] {
        &self.review
    }

    fn class_index(&self) -> usize {
        Self::class_of(self.overall).expect("validated on construction")
    }

    fn passes_filter(&self) -> bool {
        sentence_count(&self.review) <= Self::MAX_SENTENCES
            && self
                .comments
                .iter()
                .all(|c| c.len() <= Self::MAX_COMMENT_TOKENS)
    }

    fn from_json(j: PcMagJson) -> Result<Self> {
        Self::class_of(j.overall)?;
        Ok(Self {
            review: tokenize(&j.review),
            comments: [tokenize(&j.pos), tokenize(&j.neg), tokenize(&j.neu)],
            overall: j.overall,
        })
    }

    fn to_json(&self) -> PcMagJson {
        PcMagJson {
            review: self.review.join(" "),
            pos: self.comments[0].join(" "),
            neg: self.comments[1].join(" "),
            neu: self.comments[2].join(" "),
            overall: self.overall,
        }
    }
}

/// Sub-field names in subscore order: seat comfort, cabin staff, food,
/// in-flight environment, ticket value.
pub const SUBFIELDS: [&str; 5] = ["seat", "cabin", "food", "inflight", "value"];
/// One-letter report keys, same order.
pub const SUBFIELD_KEYS: [&str; 5] = ["s", "c", "f", "i", "t"];

#[derive(Debug, Clone, PartialEq)]
pub struct SkytraxExample {
    pub review: Vec<String>,
    /// Golden explanation: five scores in `0..=5`, in [`SUBFIELDS`] order.
    pub subscores: [u8; 5],
    /// Overall score in `1..=10`.
    pub overall: u8,
}

impl SkytraxExample {
    pub const N_CLASSES: usize = 10;
    pub const N_SCORES: usize = 6;
    pub const MAX_REVIEW_TOKENS: usize = 300;

    pub fn validate(subscores: &[i64; 5], overall: i64) -> Result<()> {
        for (name, &s) in SUBFIELDS.iter().zip(subscores) {
            if !(0..=5).contains(&s) {
                return Err(GefError::validation(format!("{name} score {s} outside 0..=5")));
            }
        }
        if !(1..=10).contains(&overall) {
            return Err(GefError::validation(format!("overall {overall} outside 1..=10")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkytraxJson {
    pub review: String,
    pub seat: i64,
    pub cabin: i64,
    pub food: i64,
    pub inflight: i64,
    pub value: i64,
    pub overall: i64,
}

impl Record for SkytraxExample {
    const SCHEMA: Schema = Schema::Skytrax;
    type Json = SkytraxJson;

    fn review(&self) -> &[String] {
        &self.review
    }

    fn class_index(&self) -> usize {
        self.overall as usize - 1
    }

    fn passes_filter(&self) -> bool {
        self.review.len() <= Self::MAX_REVIEW_TOKENS
    }

    fn from_json(j: SkytraxJson) -> Result<Self> {
        let subs = [j.seat, j.cabin, j.food, j.inflight, j.value];
        Self::validate(&subs, j.overall)?;
        Ok(Self {
            review: tokenize(&j.review),
            subscores: subs.map(|s| s as u8),
            overall: j.overall as u8,
        })
    }

    fn to_json(&self) -> SkytraxJson {
        let s = self.subscores.map(i64::from);
        SkytraxJson {
            review: self.review.join(" "),
            seat: s[0],
            cabin: s[1],
            food: s[2],
            inflight: s[3],
            value: s[4],
            overall: i64::from(self.overall),
        }
    }
}

/// A rejected input line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    /// 1-based line number.
    pub line: usize,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

#[derive(Debug, Clone)]
pub struct LoadReport<T> {
    pub examples: Vec<T>,
    pub diagnostics: Vec<Diagnostic>,
}

pub fn parse_jsonl<T: Record, R: BufRead>(reader: R) -> Result<LoadReport<T>> {
    let mut examples = Vec::new();
    let mut diagnostics = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed = serde_json::from_str::<T::Json>(&line)
            .map_err(GefError::from)
            .and_then(T::from_json);
        match parsed {
            Ok(ex) => examples.push(ex),
            Err(e) => diagnostics.push(Diagnostic {
                line: i + 1,
                message: e.to_string(),
            }),
        }
    }
    Ok(LoadReport {
        examples,
        diagnostics,
    })
}

/// Read one example per line. Lines that fail to parse or violate the
/// schema invariants are skipped and reported in `diagnostics`.
pub fn load_jsonl<T: Record>(path: impl AsRef<Path>) -> Result<LoadReport<T>> {
    let f = std::fs::File::open(path)?;
    parse_jsonl(BufReader::new(f))
}

pub fn write_jsonl<T: Record, W: Write>(examples: &[T], mut out: W) -> Result<()> {
    for ex in examples {
        serde_json::to_writer(&mut out, &ex.to_json())?;
        out.write_all(b"\n")?;
    }
    Ok(())
}
