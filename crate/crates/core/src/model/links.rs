use serde::{Deserialize, Serialize};

use super::question::Span;
use super::schema::DatabaseSchema;

/// Schema element a question span refers to.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Target {
    Table { table: String },
    Column { table: String, column: String },
}

impl Target {
    pub fn table(table: impl Into<String>) -> Self {
        Target::Table {
            table: table.into(),
        }
    }

    pub fn column(table: impl Into<String>, column: impl Into<String>) -> Self {
        Target::Column {
            table: table.into(),
            column: column.into(),
        }
    }

    pub fn exists_in(&self, schema: &DatabaseSchema) -> bool {
        match self {
            Target::Table { table } => schema.table(table).is_some(),
            Target::Column { table, column } => schema.column(table, column).is_some(),
        }
    }
}

/// A literal value in the question and the column it belongs to, if known.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValueLink {
    pub span: Span,
    pub literal: String,
    pub column: Option<(String, String)>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReferenceLink {
    pub span: Span,
    pub target: Target,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnresolvedKind {
    /// Detected as a literal but never linked (value linking skipped).
    Value,
    /// Claimed as a schema reference, but the claimed target does not exist.
    Reference,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnresolvedSpan {
    pub span: Span,
    pub kind: UnresolvedKind,
}

/// Question spans tied to schema elements or (value, column) pairs.
///
/// Spans across value and reference links never overlap: construction keeps
/// the longest span, then the leftmost, then value links over references.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkingMap {
    pub value_links: Vec<ValueLink>,
    pub reference_links: Vec<ReferenceLink>,
    #[serde(default)]
    pub unresolved: Vec<UnresolvedSpan>,
}

impl LinkingMap {
    pub fn new(
        value_links: Vec<ValueLink>,
        reference_links: Vec<ReferenceLink>,
        unresolved: Vec<UnresolvedSpan>,
    ) -> Self {
        enum Cand {
            V(ValueLink),
            R(ReferenceLink),
        }
        let mut cands: Vec<(Span, u8, Cand)> = value_links
            .into_iter()
            .map(|v| (v.span, 0, Cand::V(v)))
            .chain(reference_links.into_iter().map(|r| (r.span, 1, Cand::R(r))))
            .collect();
        cands.sort_by(|a, b| {
            b.0.len()
                .cmp(&a.0.len())
                .then(a.0.start.cmp(&b.0.start))
                .then(a.1.cmp(&b.1))
        });
        let mut taken: Vec<Span> = Vec::new();
        let mut map = LinkingMap::default();
        for (span, _, cand) in cands {
            if span.is_empty() || taken.iter().any(|t| t.overlaps(&span)) {
                continue;
            }
            taken.push(span);
            match cand {
                Cand::V(v) => map.value_links.push(v),
                Cand::R(r) => map.reference_links.push(r),
            }
        }
        let mut seen: Vec<Span> = Vec::new();
        for u in unresolved {
            if taken.iter().chain(seen.iter()).any(|t| t.overlaps(&u.span)) {
                continue;
            }
            seen.push(u.span);
            map.unresolved.push(u);
        }
        map.value_links.sort_by_key(|v| v.span.start);
        map.reference_links.sort_by_key(|r| r.span.start);
        map.unresolved.sort_by_key(|u| u.span.start);
        map
    }

    /// Spans claimed by value or reference links, sorted.
    pub fn claimed(&self) -> Vec<Span> {
        let mut spans: Vec<Span> = self
            .value_links
            .iter()
            .map(|v| v.span)
            .chain(self.reference_links.iter().map(|r| r.span))
            .collect();
        spans.sort();
        spans
    }

    /// Every resolved target names an element of `schema`.
    pub fn targets_exist_in(&self, schema: &DatabaseSchema) -> bool {
        self.reference_links
            .iter()
            .all(|r| r.target.exists_in(schema))
            && self
                .value_links
                .iter()
                .filter_map(|v| v.column.as_ref())
                .all(|(t, c)| schema.column(t, c).is_some())
    }

    pub fn is_empty(&self) -> bool {
        self.value_links.is_empty() && self.reference_links.is_empty()
    }
}
