//! SQL generation, correction, reconstruction and execution.

mod exec;
mod extract;
mod pipeline;

pub use exec::{execute_on, execute_sql, format_rows, open_read_only, Outcome, Row, Value};
pub use extract::{extract_sql, one_line};
pub use pipeline::{Abstraction, Audit, MaskingMode, Pipeline, PipelineError, Stage, Translation};
