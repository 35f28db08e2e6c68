//! Execution accuracy, masking recall, re-identification and benchmark
//! runs.

mod compare;
mod metrics;
mod run;

pub use compare::{cells_match, results_match, rows_match, FLOAT_TOLERANCE};
pub use metrics::{
    masking_recall, normalize_token, parse_attack, reident_attack, reident_score, AttackResult,
};
pub use run::{
    aggregate, database_path, load_corpus, render_text, run_benchmark, Aggregates,
    AnnotatedExample, BenchmarkOptions, EvalError, ExampleRecord, MaskingKind, Report,
};
