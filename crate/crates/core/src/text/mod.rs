pub mod schema;
pub mod split;
pub mod synth;
pub mod tokenize;
pub mod vocab;

pub use schema::{
    load_jsonl, parse_jsonl, write_jsonl, Diagnostic, LoadReport, PcMagExample, Record, Schema,
    SkytraxExample, POLARITIES, SUBFIELDS, SUBFIELD_KEYS,
};
pub use split::{filter_and_split, CorpusSplit, SplitName};
pub use synth::{synth_numeric, synth_text};
pub use tokenize::tokenize;
pub use vocab::Vocab;
