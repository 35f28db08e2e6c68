//! Schema ingestion, prompt serialization and relevance filtering.

mod ingest;
mod rank;
mod serialize;
mod sidecar;

pub use ingest::{ingest_schema, parse_schema_yaml, schema_from_connection, IngestError};
pub use rank::{
    lexical_score, rank_schema, similarity, RankedSchema, Ranker, ScoredColumn, ScoredTable,
};
pub use serialize::serialize_schema;
pub use sidecar::{SidecarClient, SidecarError};
