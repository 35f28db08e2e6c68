//! Abstraction of questions and schemas into symbols, the reverse
//! substitution on SQL, and the leak guard for untrusted prompts.

mod guard;
mod mask;
mod unmask;

pub use guard::{leak_scan, LeakGuard};
pub use mask::{
    abstract_schema, mask, restore_question, MaskedBundle, MaskedSpan, ResidualReason, ResidualSpan,
};
pub use unmask::{symbolize_sql, unmask_sql, UnmaskResult};
