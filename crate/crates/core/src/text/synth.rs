//! Synthetic corpora with known ground truth.
//!
//! Numeric corpus: five subscores are drawn uniformly from `0..=5` and the
//! overall label follows `clamp(round(2·mean), 1, 10)`. Each mentioned
//! subscore is rendered through a phrase bank indexed by (field, score).
//! Adjacent scores of one field share a "bridge" word, so a review carries
//! graded but not perfect evidence about each subscore. A field may go
//! unmentioned, and an optional closing verdict hints at the overall tier.
//!
//! Text corpus: a latent grade `g ∈ 0..=8` selects disjoint positive,
//! negative and neutral phrase banks, so every comment identifies `g`. The
//! review mentions markers of `g` or of a neighbouring grade.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::text::schema::{PcMagExample, SkytraxExample};
use crate::text::tokenize::tokenize;

/// Per field: two words unique to each score, then the five bridge words
/// shared by scores `(s, s+1)`.
struct FieldBank {
    subjects: [&'static str; 3],
    levels: [[&'static str; 2]; 6],
    bridges: [&'static str; 5],
}

const FIELDS: [FieldBank; 5] = [
    FieldBank {
        subjects: ["the seat was", "my seat felt", "legroom was"],
        levels: [
            ["unbearable", "broken"],
            ["cramped", "narrow"],
            ["hard", "worn"],
            ["adequate", "standard"],
            ["comfortable", "roomy"],
            ["luxurious", "spacious"],
        ],
        bridges: ["painful", "tight", "basic", "fine", "plush"],
    },
    FieldBank {
        subjects: ["the crew were", "cabin staff seemed", "flight attendants were"],
        levels: [
            ["rude", "hostile"],
            ["unhelpful", "dismissive"],
            ["indifferent", "slow"],
            ["polite", "professional"],
            ["friendly", "attentive"],
            ["wonderful", "outstanding"],
        ],
        bridges: ["abrupt", "careless", "busy", "pleasant", "charming"],
    },
    FieldBank {
        subjects: ["the meal was", "food tasted", "catering was"],
        levels: [
            ["inedible", "disgusting"],
            ["stale", "cold"],
            ["bland", "tasteless"],
            ["decent", "acceptable"],
            ["tasty", "fresh"],
            ["delicious", "excellent"],
        ],
        bridges: ["awful", "soggy", "plain", "good", "superb"],
    },
    FieldBank {
        subjects: ["the cabin was", "the aircraft felt", "the interior looked"],
        levels: [
            ["filthy", "chaotic"],
            ["dirty", "noisy"],
            ["dated", "dim"],
            ["clean", "quiet"],
            ["modern", "bright"],
            ["immaculate", "serene"],
        ],
        bridges: ["smelly", "stuffy", "okay", "calm", "stylish"],
    },
    FieldBank {
        subjects: ["the ticket was", "the fare seemed", "the price was"],
        levels: [
            ["extortionate", "ripoff"],
            ["overpriced", "expensive"],
            ["pricey", "steep"],
            ["fair", "reasonable"],
            ["affordable", "cheap"],
            ["unbeatable", "bargain"],
        ],
        bridges: ["outrageous", "costly", "moderate", "sensible", "great"],
    },
];

/// Closing verdicts by overall tier `(overall − 1) / 2`.
const VERDICTS: [[&str; 2]; 5] = [
    ["never again", "avoid this airline"],
    ["quite disappointing", "below expectations"],
    ["an average trip", "nothing special"],
    ["would fly again", "a satisfying journey"],
    ["highly recommended", "a fantastic journey"],
];

const FLIGHT_FILLER: [&str; 5] = [
    "we flew from london to dubai .",
    "boarding started on time .",
    "the flight was full .",
    "i travelled for business .",
    "we had a short layover .",
];

/// Knobs of the numeric generator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NumericSynthConfig {
    /// Probability that a field is not mentioned at all.
    pub p_omit: f64,
    /// Probability that the closing verdict sentence is present.
    pub p_verdict: f64,
}

impl Default for NumericSynthConfig {
    fn default() -> Self {
        Self {
            p_omit: 0.0,
            p_verdict: 0.5,
        }
    }
}

/// `clamp(round(2·mean(subscores)), 1, 10)`, in integer arithmetic:
/// `2·sum/5` never lands on a half, so `⌊(4·sum + 5) / 10⌋` rounds it.
pub fn overall_from_subscores(subscores: &[u8; 5]) -> u8 {
    let sum: u32 = subscores.iter().map(|&s| u32::from(s)).sum();
    ((4 * sum + 5) / 10).clamp(1, 10) as u8
}

/// Candidate words for `score` of field `field`.
pub fn field_bank(field: usize, score: u8) -> Vec<&'static str> {
    let f = &FIELDS[field];
    let s = score as usize;
    let mut bank = f.levels[s].to_vec();
    if s > 0 {
        bank.push(f.bridges[s - 1]);
    }
    if s < 5 {
        bank.push(f.bridges[s]);
    }
    bank
}

/// Scores of `field` whose bank contains `word`.
pub fn scores_for_word(field: usize, word: &str) -> Vec<u8> {
    (0..6u8)
        .filter(|&s| field_bank(field, s).contains(&word))
        .collect()
}

pub fn synth_numeric(n: usize, seed: u64) -> Vec<SkytraxExample> {
    synth_numeric_with(n, seed, NumericSynthConfig::default())
}

pub fn synth_numeric_with(n: usize, seed: u64, cfg: NumericSynthConfig) -> Vec<SkytraxExample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let subscores: [u8; 5] = std::array::from_fn(|_| rng.gen_range(0..=5));
            let overall = overall_from_subscores(&subscores);
            let mut sentences: Vec<String> = Vec::new();
            for (field, &score) in subscores.iter().enumerate() {
                if rng.gen_bool(cfg.p_omit) {
                    continue;
                }
                let subject = FIELDS[field].subjects.choose(&mut rng).expect("non-empty");
                let word = field_bank(field, score).choose(&mut rng).copied().expect("non-empty");
                sentences.push(format!("{subject} {word} ."));
            }
            sentences.push(FLIGHT_FILLER.choose(&mut rng).expect("non-empty").to_string());
            sentences.shuffle(&mut rng);
            if rng.gen_bool(cfg.p_verdict) {
                let tier = (overall as usize - 1) / 2;
                let v = VERDICTS[tier].choose(&mut rng).expect("non-empty");
                sentences.push(format!("overall , {v} ."));
            }
            let ex = SkytraxExample {
                review: tokenize(&sentences.join(" ")),
                subscores,
                overall,
            };
            debug_assert!(SkytraxExample::validate(&ex.subscores.map(i64::from), i64::from(ex.overall)).is_ok());
            ex
        })
        .collect()
}

const POS_MARKERS: [&str; 9] = [
    "tolerable", "passable", "decent", "solid", "good", "strong", "great", "excellent", "outstanding",
];
const NEG_MARKERS: [&str; 9] = [
    "dreadful", "awful", "poor", "weak", "mediocre", "uneven", "minor", "slight", "negligible",
];
const NEU_MARKERS: [&str; 9] = [
    "unacceptable", "regrettable", "questionable", "middling", "reasonable", "sensible", "smart", "superb", "ideal",
];
const ASPECTS: [&str; 8] = [
    "battery life", "display", "performance", "design", "keyboard", "speakers", "camera", "build quality",
];
const AUDIENCES: [&str; 4] = ["students", "gamers", "travelers", "professionals"];
const PRODUCTS: [&str; 4] = ["laptop", "phone", "tablet", "monitor"];
const REVIEW_FILLER: [&str; 4] = [
    "i tested it for a week .",
    "the box includes a charger .",
    "setup took a few minutes .",
    "it ships in two colors .",
];

/// Grade-specific marker words, in polarity order (pos, neg, neu).
pub fn comment_markers(grade: usize) -> [&'static str; 3] {
    [POS_MARKERS[grade], NEG_MARKERS[grade], NEU_MARKERS[grade]]
}

/// Recover the grade from a comment via its marker word.
pub fn grade_of_comment(polarity: usize, tokens: &[String]) -> Option<usize> {
    let markers = [&POS_MARKERS, &NEG_MARKERS, &NEU_MARKERS][polarity];
    tokens
        .iter()
        .find_map(|t| markers.iter().position(|m| m == t))
}

/// Every comment the bank of (`grade`, `polarity`) can emit.
pub fn comment_bank(grade: usize, polarity: usize) -> Vec<String> {
    let m = comment_markers(grade)[polarity];
    let mut out = Vec::new();
    match polarity {
        0 => {
            for a in ASPECTS {
                out.push(format!("{m} {a} ."));
                out.push(format!("offers {m} {a} ."));
                for b in ASPECTS.iter().filter(|&&b| b != a) {
                    out.push(format!("{m} {a} and {b} ."));
                }
            }
        }
        1 => {
            for a in ASPECTS {
                out.push(format!("{m} {a} ."));
                out.push(format!("{m} issues with the {a} ."));
            }
        }
        _ => {
            for aud in AUDIENCES {
                out.push(format!("a {m} choice for {aud} ."));
            }
            for p in PRODUCTS {
                out.push(format!("a {m} {p} ."));
            }
        }
    }
    out
}

fn render_comment(rng: &mut ChaCha8Rng, grade: usize, polarity: usize) -> String {
    let m = comment_markers(grade)[polarity];
    let a = *ASPECTS.choose(rng).expect("non-empty");
    match polarity {
        0 => match rng.gen_range(0..3) {
            0 => format!("{m} {a} ."),
            1 => format!("offers {m} {a} ."),
            _ => {
                let b = *ASPECTS.iter().filter(|&&b| b != a).collect::<Vec<_>>().choose(rng).expect("non-empty");
                format!("{m} {a} and {b} .")
            }
        },
        1 => {
            if rng.gen_bool(0.5) {
                format!("{m} {a} .")
            } else {
                format!("{m} issues with the {a} .")
            }
        }
        _ => {
            if rng.gen_bool(0.5) {
                format!("a {m} choice for {} .", AUDIENCES.choose(rng).expect("non-empty"))
            } else {
                format!("a {m} {} .", PRODUCTS.choose(rng).expect("non-empty"))
            }
        }
    }
}

pub fn synth_text(n: usize, seed: u64) -> Vec<PcMagExample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let grade = rng.gen_range(0..9usize);
            let comments: [Vec<String>; 3] =
                std::array::from_fn(|pol| tokenize(&render_comment(&mut rng, grade, pol)));
            let product = PRODUCTS.choose(&mut rng).expect("non-empty");
            let mut sentences = vec![format!("we reviewed this {product} .")];
            for _ in 0..rng.gen_range(4..=6) {
                let shift = match rng.gen_range(0..4) {
                    0 => -1,
                    1 => 1,
                    _ => 0,
                };
                let g = (grade as i64 + shift).clamp(0, 8) as usize;
                let a = ASPECTS.choose(&mut rng).expect("non-empty");
                let m = if rng.gen_bool(0.5) { POS_MARKERS[g] } else { NEG_MARKERS[g] };
                sentences.push(format!("the {a} is {m} ."));
            }
            sentences.push(REVIEW_FILLER.choose(&mut rng).expect("non-empty").to_string());
            sentences[1..].shuffle(&mut rng);
            PcMagExample {
                review: tokenize(&sentences.join(" ")),
                comments,
                overall: PcMagExample::overall_of(grade),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::text::schema::Record;
    use std::collections::{HashMap, HashSet};

    #[test]
    fn label_rule_edges() {
        assert_eq!(overall_from_subscores(&[5; 5]), 10);
        assert_eq!(overall_from_subscores(&[0; 5]), 1);
        assert_eq!(overall_from_subscores(&[3, 3, 2, 2, 2]), 5);
    }

    #[test]
    fn integer_rule_matches_float_rule() {
        for sum in 0..=25u32 {
            let float = ((2.0 * sum as f64 / 5.0).round() as i64).clamp(1, 10) as u8;
            let tuple = [sum.min(5), sum.saturating_sub(5).min(5), sum.saturating_sub(10).min(5), sum.saturating_sub(15).min(5), sum.saturating_sub(20).min(5)].map(|x| x as u8);
            assert_eq!(overall_from_subscores(&tuple), float, "sum {sum}");
        }
    }

    #[test]
    fn label_distribution_matches_enumeration() {
        let mut exact = [0usize; 10];
        for code in 0..6usize.pow(5) {
            let mut c = code;
            let subs: [u8; 5] = std::array::from_fn(|_| {
                let s = (c % 6) as u8;
                c /= 6;
                s
            });
            let sum: f64 = subs.iter().map(|&s| f64::from(s)).sum();
            let label = ((2.0 * sum / 5.0).round() as usize).clamp(1, 10);
            exact[label - 1] += 1;
        }
        let corpus = synth_numeric(10_000, 42);
        let mut seen = [0usize; 10];
        for ex in &corpus {
            seen[ex.class_index()] += 1;
        }
        for k in 0..10 {
            let p = exact[k] as f64 / 7776.0;
            let q = seen[k] as f64 / 10_000.0;
            assert!((p - q).abs() <= 0.02, "class {k}: {p:.4} vs {q:.4}");
        }
    }

    #[test]
    fn numeric_examples_respect_schema() {
        for ex in synth_numeric(2_000, 1) {
            assert!(ex.subscores.iter().all(|&s| s <= 5));
            assert_eq!(ex.overall, overall_from_subscores(&ex.subscores));
            assert!(ex.passes_filter());
        }
    }

    #[test]
    fn field_words_identify_field_and_neighbourhood() {
        let mut owner: HashMap<&str, usize> = HashMap::new();
        for f in 0..5 {
            for s in 0..6u8 {
                for w in field_bank(f, s) {
                    if let Some(prev) = owner.insert(w, f) {
                        assert_eq!(prev, f, "{w} used by two fields");
                    }
                    let scores = scores_for_word(f, w);
                    assert!(scores.contains(&s));
                    assert!(scores.len() <= 2);
                    assert!(scores.windows(2).all(|p| p[1] == p[0] + 1));
                }
            }
        }
        for v in VERDICTS.iter().flatten().flat_map(|v| v.split(' ')) {
            assert!(!owner.contains_key(v), "verdict word {v} collides with a field word");
        }
    }

    #[test]
    fn every_subscore_is_mentioned() {
        let corpus = synth_numeric(500, 5);
        let mut hits = 0;
        let mut total = 0;
        for ex in &corpus {
            for (f, &s) in ex.subscores.iter().enumerate() {
                total += 1;
                if ex.review.iter().any(|w| scores_for_word(f, w).contains(&s)) {
                    hits += 1;
                }
            }
        }
        assert_eq!(hits, total);
        let sparse = synth_numeric_with(500, 5, NumericSynthConfig { p_omit: 0.5, p_verdict: 0.0 });
        let words: usize = sparse.iter().map(|e| e.review.len()).sum();
        let full: usize = corpus.iter().map(|e| e.review.len()).sum();
        assert!(words < full);
    }

    #[test]
    fn top_grade_positive_comment_is_top_bank() {
        let corpus = synth_text(3_000, 9);
        for ex in corpus.iter().filter(|e| e.class_index() == 8) {
            let text = ex.comments[0].join(" ");
            assert!(comment_bank(8, 0).contains(&text), "{text}");
        }
    }

    #[test]
    fn comments_invert_to_grade() {
        for ex in synth_text(2_000, 4) {
            let g = ex.class_index();
            for pol in 0..3 {
                assert_eq!(grade_of_comment(pol, &ex.comments[pol]), Some(g));
                assert!(ex.comments[pol].len() <= 12);
                assert!(comment_bank(g, pol).contains(&ex.comments[pol].join(" ")));
            }
            assert!(ex.passes_filter());
        }
    }

    #[test]
    fn text_vocabulary_is_small() {
        let types: HashSet<String> = synth_text(5_000, 2)
            .into_iter()
            .flat_map(|e| {
                let [a, b, c] = e.comments;
                e.review.into_iter().chain(a).chain(b).chain(c)
            })
            .collect();
        assert!(types.len() <= 300, "{} types", types.len());
    }

    /// Count-based oracle: a unigram naive Bayes over the comment triple.
    #[test]
    fn unigram_counts_recover_grade() {
        let train = synth_text(5_000, 10);
        let test = synth_text(1_000, 11);
        let mut counts: Vec<HashMap<&str, f64>> = vec![HashMap::new(); 9];
        let mut totals = [0.0f64; 9];
        for ex in &train {
            let g = ex.class_index();
            for w in ex.comments.iter().flatten() {
                *counts[g].entry(w.as_str()).or_default() += 1.0;
                totals[g] += 1.0;
            }
        }
        let vocab: HashSet<&str> = counts.iter().flat_map(|c| c.keys().copied()).collect();
        let v = vocab.len() as f64;
        let correct = test
            .iter()
            .filter(|ex| {
                let best = (0..9)
                    .map(|g| {
                        let ll: f64 = ex
                            .comments
                            .iter()
                            .flatten()
                            .map(|w| ((counts[g].get(w.as_str()).copied().unwrap_or(0.0) + 1.0) / (totals[g] + v)).ln())
                            .sum();
                        (g, ll)
                    })
                    .max_by(|a, b| a.1.total_cmp(&b.1))
                    .unwrap()
                    .0;
                best == ex.class_index()
            })
            .count();
        let acc = correct as f64 / test.len() as f64;
        assert!(acc >= 0.95, "count oracle accuracy {acc}");
    }

    #[test]
    fn generation_is_seeded() {
        assert_eq!(synth_numeric(50, 3), synth_numeric(50, 3));
        assert_ne!(synth_numeric(50, 3), synth_numeric(50, 4));
        assert_eq!(synth_text(50, 3), synth_text(50, 3));
    }
}
