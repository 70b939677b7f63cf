//! Aligned text rendering of evaluation reports.

use std::fmt::Write;

use gef_core::gef::EvalReport;
use gef_core::metrics::BleuScores;
use gef_core::text::schema::SUBFIELD_KEYS;

fn row(out: &mut String, label: &str, cells: &[f64]) {
    let _ = write!(out, "{label:<16}");
    for c in cells {
        let _ = write!(out, "{c:>9.2}");
    }
    out.push('\n');
}

fn header(out: &mut String, label: &str, cols: &[&str]) {
    let _ = write!(out, "{label:<16}");
    for c in cols {
        let _ = write!(out, "{c:>9}");
    }
    out.push('\n');
}

pub fn render(split: &str, r: &EvalReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{} {split} (n = {})", r.schema, r.n);
    header(&mut out, "", &["Acc%", "Top-3%"]);
    row(&mut out, "model", &[r.accuracy.top1, r.accuracy.top3]);
    if let Some(c) = &r.classified {
        row(&mut out, "C(generated)", &[c.top1, c.top3]);
    }
    if let Some(o) = &r.oracle {
        row(&mut out, "Oracle", &[o.top1, o.top3]);
    }
    if let Some(f) = &r.accuracy.fields {
        out.push('\n');
        let mut cols = SUBFIELD_KEYS.to_vec();
        cols.push("mean");
        header(&mut out, "sub-field", &cols);
        let mut cells = f.as_array().to_vec();
        cells.push(f.mean());
        row(&mut out, "Acc%", &cells);
    }
    if let Some(b) = &r.bleu {
        out.push('\n');
        header(&mut out, "BLEU", &["1", "2", "3", "4"]);
        let mut bleu_row = |name: &str, s: &BleuScores| row(&mut out, name, &s.as_array());
        bleu_row("pos", &b.pos);
        bleu_row("neg", &b.neg);
        bleu_row("neu", &b.neu);
        bleu_row("all", &b.all);
    }
    out
}
