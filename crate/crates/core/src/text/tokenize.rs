//! Deterministic rule tokenizer.
//!
//! Rules, applied left to right over the lowercased input:
//! - whitespace separates tokens and is dropped;
//! - alphanumeric runs form words; a `-` between two alphanumerics stays
//!   inside the word (`in-flight`), and `.` or `,` between two digits stays
//!   inside a number (`4.5`, `1,000`);
//! - an apostrophe followed by letters starts a clitic token (`it's` ->
//!   `it`, `'s`);
//! - a run of dots is one token (`...`);
//! - every other character is a token by itself.
//!
//! Re-tokenizing the space-joined output yields the same tokens.

pub fn tokenize(text: &str) -> Vec<String> {
    let chars: Vec<char> = text.chars().flat_map(char::to_lowercase).collect();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if c.is_alphanumeric() {
            let start = i;
            i += 1;
            while i < chars.len() {
                let ch = chars[i];
                if ch.is_alphanumeric() {
                    i += 1;
                    continue;
                }
                let next = chars.get(i + 1).copied();
                let prev = chars[i - 1];
                let joins = match ch {
                    '-' => next.is_some_and(char::is_alphanumeric),
                    '.' | ',' => prev.is_ascii_digit() && next.is_some_and(|n| n.is_ascii_digit()),
                    _ => false,
                };
                if joins {
                    i += 2;
                } else {
                    break;
                }
            }
            tokens.push(chars[start..i].iter().collect());
        } else if c == '\'' && chars.get(i + 1).is_some_and(|n| n.is_alphabetic()) {
            let start = i;
            i += 1;
            while i < chars.len() && chars[i].is_alphabetic() {
                i += 1;
            }
            tokens.push(chars[start..i].iter().collect());
        } else if c == '.' {
            let start = i;
            while i < chars.len() && chars[i] == '.' {
                i += 1;
            }
            tokens.push(chars[start..i].iter().collect());
        } else {
            tokens.push(c.to_string());
            i += 1;
        }
    }
    tokens
}

/// Sentence count used by the PCMag length filter: tokens equal to `.`,
/// `!` or `?`, with a minimum of one.
pub fn sentence_count(tokens: &[String]) -> usize {
    tokens
        .iter()
        .filter(|t| matches!(t.as_str(), "." | "!" | "?"))
        .count()
        .max(1)
}
