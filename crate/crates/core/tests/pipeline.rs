use std::path::PathBuf;

use gef_core::text::{
    filter_and_split, load_jsonl, synth_numeric, synth_text, tokenize, write_jsonl, PcMagExample,
    Record, SkytraxExample,
};

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

/// Each golden line holds the tokens of the matching input sentence, joined
/// by single spaces. Set `GEF_BLESS=1` to regenerate after a deliberate
/// tokenizer change.
#[test]
fn tokenizer_matches_golden_file() {
    let input = std::fs::read_to_string(fixture("tokenizer_sentences.txt")).unwrap();
    let produced: Vec<String> = input.lines().map(|l| tokenize(l).join(" ")).collect();
    let golden_path = fixture("tokenizer_golden.txt");
    if std::env::var_os("GEF_BLESS").is_some() {
        std::fs::write(&golden_path, produced.join("\n") + "\n").unwrap();
    }
    let golden = std::fs::read_to_string(golden_path).unwrap();
    let golden: Vec<&str> = golden.lines().collect();
    assert_eq!(produced.len(), 20);
    assert_eq!(produced, golden);
}

#[test]
fn mixed_fixture_reports_bad_lines() {
    let report = load_jsonl::<SkytraxExample>(fixture("skytrax_mixed.jsonl")).unwrap();
    assert_eq!(report.examples.len(), 10);
    let lines: Vec<usize> = report.diagnostics.iter().map(|d| d.line).collect();
    assert_eq!(lines, [4, 8]);
}

#[test]
fn synthetic_corpora_round_trip_through_jsonl() {
    let dir = tempfile::tempdir().unwrap();
    let numeric = synth_numeric(200, 3);
    let path = dir.path().join("n.jsonl");
    write_jsonl(&numeric, std::fs::File::create(&path).unwrap()).unwrap();
    let back = load_jsonl::<SkytraxExample>(&path).unwrap();
    assert!(back.diagnostics.is_empty());
    assert_eq!(back.examples, numeric);

    let text = synth_text(200, 3);
    let path = dir.path().join("t.jsonl");
    write_jsonl(&text, std::fs::File::create(&path).unwrap()).unwrap();
    let back = load_jsonl::<PcMagExample>(&path).unwrap();
    assert!(back.diagnostics.is_empty());
    assert_eq!(back.examples, text);
}

#[test]
fn length_filters() {
    let long = SkytraxExample {
        review: vec!["w".into(); 301],
        subscores: [1; 5],
        overall: 2,
    };
    assert!(!long.passes_filter());
    let mut ex = synth_text(1, 0).remove(0);
    ex.comments[2] = vec!["w".into(); 76];
    assert!(!ex.passes_filter());
}

#[test]
fn split_of_synthetic_corpus() {
    let s = filter_and_split(synth_numeric(100, 1), 7).unwrap();
    assert_eq!((s.train.len(), s.dev.len(), s.test.len()), (80, 10, 10));
}
