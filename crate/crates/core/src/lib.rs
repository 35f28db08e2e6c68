//! Privacy-preserving text-to-SQL.
//!
//! Sensitive table names, column names and literal values are replaced by
//! abstract symbols (`T1`, `C3`, `V2`) before any prompt leaves the trusted
//! environment. The SQL returned by the untrusted model is mapped back to
//! concrete identifiers through the same symbol table, repaired by a trusted
//! model using execution feedback, and executed against the target SQLite
//! database.
//!
//! The crate is organised by pipeline stage:
//!
//! * [`model`]: schema, question, policy, symbol table, linking map, configuration
//! * [`schema`]: ingestion, YAML serialization, relevance ranking and filtering
//! * [`linking`]: value detection, value linking, reference linking, classification
//! * [`masking`]: abstraction, unmasking, leak scanning
//! * [`gateway`]: model backends, prompt templates, usage accounting
//! * [`sql`]: generation, correction, execution, the end-to-end pipeline
//! * [`eval`]: execution accuracy, masking recall, re-identification, benchmark runs

pub mod eval;
pub mod gateway;
pub mod linking;
pub mod masking;
pub mod model;
pub mod par;
pub mod schema;
pub mod sql;

pub use model::{
    DatabaseSchema, LinkingMap, NlQuestion, PipelineConfig, PrivacyPolicy, Span, SymbolTable,
};
#[cfg(test)]
mod testutil;
