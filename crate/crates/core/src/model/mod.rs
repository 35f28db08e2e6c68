//! Shared domain types. No I/O happens here.

mod config;
mod links;
mod policy;
mod question;
mod schema;
mod symbols;

pub use config::{ConfigError, PipelineConfig, STAGES};
pub use links::{LinkingMap, ReferenceLink, Target, UnresolvedKind, UnresolvedSpan, ValueLink};
pub use policy::{
    policy_selects, Decision, Element, Label, Labels, PolicyError, PolicyKind, PrivacyPolicy,
    DEFAULT_CATEGORIES,
};
pub use question::{segment, split_identifier, NlQuestion, Span};
pub use schema::{Column, DatabaseSchema, ForeignKey, SchemaError, Table};
pub use symbols::{Concrete, Symbol, SymbolKind, SymbolTable, ValueEntry};
