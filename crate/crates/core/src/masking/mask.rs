use serde::{Deserialize, Serialize};

use crate::model::{
    split_identifier, Column, DatabaseSchema, Element, ForeignKey, Labels, LinkingMap, NlQuestion,
    PrivacyPolicy, Span, Symbol, SymbolKind, SymbolTable, Table, Target, UnresolvedKind,
};
use crate::schema::serialize_schema;

/// One question span replaced by a symbol.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskedSpan {
    /// Span in the original question.
    pub span: Span,
    pub text: String,
    pub symbol: Symbol,
    /// Span of the symbol in the masked question.
    pub masked_span: Span,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResidualReason {
    /// Linking detected the span but could not resolve it.
    Unresolved,
    /// Unlinked words naming a policy-selected table or column.
    Identifier,
    /// Unlinked words equal to a literal that is masked elsewhere.
    Literal,
}

/// Sensitive question text left concrete in the masked question.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResidualSpan {
    pub span: Span,
    pub text: String,
    pub reason: ResidualReason,
}

/// Output of the abstraction stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskedBundle {
    pub question: String,
    /// Q′: the question with symbols substituted, followed by one
    /// "; V<i> is a value of the column ..." clause per linked value.
    pub masked_question: String,
    /// Byte length of the substituted question before the clauses.
    pub body_len: usize,
    /// S′.
    pub masked_schema: DatabaseSchema,
    /// S′ in the unbracketed YAML layout.
    pub masked_schema_yaml: String,
    pub symbol_table: SymbolTable,
    pub masked_spans: Vec<MaskedSpan>,
    pub residual_sensitive: Vec<ResidualSpan>,
}

impl MaskedBundle {
    /// Q′ without the appended clauses.
    pub fn body(&self) -> &str {
        &self.masked_question[..self.body_len]
    }

    /// Q′ as sent in prompts: table and column symbols wrapped in brackets
    /// to match the bracketed schema.
    pub fn prompt_question(&self) -> String {
        let q = &self.masked_question;
        let mut out = String::with_capacity(q.len() + 16);
        let mut last = 0;
        for span in crate::model::segment(q) {
            let word = &q[span.start..span.end];
            let is_identifier_symbol = Symbol::parse(word).is_some_and(|s| {
                s.kind != SymbolKind::Value && self.symbol_table.resolve(s).is_some()
            });
            if is_identifier_symbol {
                out.push_str(&q[last..span.start]);
                out.push('[');
                out.push_str(word);
                out.push(']');
                last = span.end;
            }
        }
        out.push_str(&q[last..]);
        out
    }

    /// S′ in the bracketed prompt layout.
    pub fn prompt_schema(&self) -> String {
        serialize_schema(&self.masked_schema, true)
    }

    /// Symbols occurring in the question body, each once, in order.
    pub fn body_symbols(&self) -> Vec<Symbol> {
        let mut out: Vec<Symbol> = Vec::new();
        for m in &self.masked_spans {
            if !out.contains(&m.symbol) {
                out.push(m.symbol);
            }
        }
        out
    }
}

/// S′: `schema` with every symbolized table and column renamed, foreign
/// keys following their targets.
pub fn abstract_schema(schema: &DatabaseSchema, symbols: &SymbolTable) -> DatabaseSchema {
    let table_name = |t: &str| {
        symbols
            .table_symbol(t)
            .map_or_else(|| t.to_string(), |s| s.to_string())
    };
    let column_name = |t: &str, c: &str| {
        symbols
            .column_symbol(t, c)
            .map_or_else(|| c.to_string(), |s| s.to_string())
    };
    let tables = schema
        .tables()
        .iter()
        .map(|t| {
            Table::new(
                table_name(&t.name),
                t.columns
                    .iter()
                    .map(|c| Column {
                        name: column_name(&t.name, &c.name),
                        sql_type: c.sql_type.clone(),
                        is_primary_key: c.is_primary_key,
                        foreign_key: c.foreign_key.as_ref().map(|fk| {
                            ForeignKey::new(
                                table_name(&fk.table),
                                column_name(&fk.table, &fk.column),
                            )
                        }),
                    })
                    .collect(),
            )
        })
        .collect();
    DatabaseSchema::new(tables).expect("symbols are unique and disjoint from identifiers")
}

fn target_symbol(symbols: &SymbolTable, target: &Target) -> Option<Symbol> {
    match target {
        Target::Table { table } => symbols.table_symbol(table),
        Target::Column { table, column } => symbols.column_symbol(table, column),
    }
}

enum Replacement {
    Reference(Symbol),
    Value(String, Option<(String, String)>),
}

/// Apply `policy` to the question and schema.
///
/// Reference spans whose element is selected become that element's symbol;
/// selected literals become `V<i>` in question order, identical literals
/// sharing one symbol. A clause naming the column follows for every masked
/// literal with a resolved column: the column's symbol when it has one,
/// otherwise `table.column` with the table symbolized if selected.
pub fn mask(
    question: &NlQuestion,
    schema: &DatabaseSchema,
    links: &LinkingMap,
    policy: &PrivacyPolicy,
    labels: &Labels,
) -> MaskedBundle {
    let token_words = question.tokens().iter().map(|&s| question.slice(s));
    let mut symbols = SymbolTable::fresh_reserving(schema, policy, labels, token_words);

    let mut edits: Vec<(Span, Replacement)> = Vec::new();
    for r in &links.reference_links {
        if let Some(symbol) = target_symbol(&symbols, &r.target) {
            edits.push((r.span, Replacement::Reference(symbol)));
        }
    }
    for v in &links.value_links {
        if policy.is_sensitive(Element::Literal(&v.literal), labels) {
            edits.push((
                v.span,
                Replacement::Value(v.literal.clone(), v.column.clone()),
            ));
        }
    }
    edits.sort_by_key(|(span, _)| span.start);

    let text = question.text();
    let mut masked = String::with_capacity(text.len());
    let mut masked_spans = Vec::with_capacity(edits.len());
    let mut clause_symbols: Vec<Symbol> = Vec::new();
    let mut last = 0;
    for (span, replacement) in edits {
        let symbol = match replacement {
            Replacement::Reference(s) => s,
            Replacement::Value(literal, column) => {
                let resolved = column.is_some();
                let s = symbols.add_value(&literal, column);
                if resolved && !clause_symbols.contains(&s) {
                    clause_symbols.push(s);
                }
                s
            }
        };
        masked.push_str(&text[last..span.start]);
        let start = masked.len();
        masked.push_str(&symbol.to_string());
        masked_spans.push(MaskedSpan {
            span,
            text: text[span.start..span.end].to_string(),
            symbol,
            masked_span: Span::new(start, masked.len()),
        });
        last = span.end;
    }
    masked.push_str(&text[last..]);
    let body_len = masked.len();

    for symbol in clause_symbols {
        let Some((table, column)) = symbols
            .values()
            .find(|(_, e)| e.symbol == symbol)
            .and_then(|(_, e)| e.column.clone())
        else {
            continue;
        };
        let column_ref = match symbols.column_symbol(&table, &column) {
            Some(c) => c.to_string(),
            None => {
                let t = symbols
                    .table_symbol(&table)
                    .map_or(table.clone(), |s| s.to_string());
                format!("{t}.{column}")
            }
        };
        masked.push_str(&format!("; {symbol} is a value of the column {column_ref}"));
    }

    let residual_sensitive = residuals(
        question,
        schema,
        links,
        policy,
        labels,
        &symbols,
        &masked_spans,
    );
    let masked_schema = abstract_schema(schema, &symbols);
    MaskedBundle {
        question: text.to_string(),
        masked_question: masked,
        body_len,
        masked_schema_yaml: serialize_schema(&masked_schema, false),
        masked_schema,
        symbol_table: symbols,
        masked_spans,
        residual_sensitive,
    }
}

fn residuals(
    question: &NlQuestion,
    schema: &DatabaseSchema,
    links: &LinkingMap,
    policy: &PrivacyPolicy,
    labels: &Labels,
    symbols: &SymbolTable,
    masked_spans: &[MaskedSpan],
) -> Vec<ResidualSpan> {
    let mut out: Vec<ResidualSpan> = Vec::new();
    for u in &links.unresolved {
        let text = question.slice(u.span);
        let sensitive = match u.kind {
            UnresolvedKind::Value | UnresolvedKind::Reference => {
                policy.is_sensitive(Element::Literal(text), labels)
            }
        };
        if sensitive {
            out.push(ResidualSpan {
                span: u.span,
                text: text.to_string(),
                reason: ResidualReason::Unresolved,
            });
        }
    }

    let mut identifiers: Vec<String> = Vec::new();
    for table in schema.tables() {
        if policy.is_sensitive(Element::Table(&table.name), labels) {
            identifiers.push(split_identifier(&table.name));
        }
        for column in &table.columns {
            let element = Element::Column {
                table: &table.name,
                column: &column.name,
            };
            if policy.is_sensitive(element, labels) {
                identifiers.push(split_identifier(&column.name));
                identifiers.push(column.name.to_lowercase());
            }
        }
    }
    let literals: Vec<String> = symbols
        .values()
        .map(|(l, _)| {
            crate::model::segment(l)
                .iter()
                .map(|s| l[s.start..s.end].to_lowercase())
                .collect::<Vec<_>>()
                .join(" ")
        })
        .collect();

    let masked: Vec<Span> = masked_spans.iter().map(|m| m.span).collect();
    let mut taken: Vec<Span> = out
        .iter()
        .map(|r| r.span)
        .chain(masked.iter().copied())
        .collect();
    let mut candidates: Vec<(usize, usize)> = question.ngrams(4).collect();
    candidates.sort_by(|a, b| (b.1 - b.0).cmp(&(a.1 - a.0)).then(a.0.cmp(&b.0)));
    for (first, last) in candidates {
        let span = question.token_range(first, last);
        if taken.iter().any(|t| t.overlaps(&span)) {
            continue;
        }
        let words = question.normalized_range(first, last);
        let reason = if literals.contains(&words) {
            ResidualReason::Literal
        } else if identifiers.contains(&words) {
            ResidualReason::Identifier
        } else {
            continue;
        };
        taken.push(span);
        out.push(ResidualSpan {
            span,
            text: question.slice(span).to_string(),
            reason,
        });
    }
    out.sort_by_key(|r| r.span.start);
    out
}

/// Invert the substitution on the question body, positionally.
pub fn restore_question(bundle: &MaskedBundle) -> String {
    let body = bundle.body();
    let mut out = String::with_capacity(bundle.question.len());
    let mut last = 0;
    for m in &bundle.masked_spans {
        out.push_str(&body[last..m.masked_span.start]);
        out.push_str(&m.text);
        last = m.masked_span.end;
    }
    out.push_str(&body[last..]);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Label, ReferenceLink, UnresolvedSpan, ValueLink};

    fn schema() -> DatabaseSchema {
        DatabaseSchema::new(vec![
            Table::new(
                "Patients",
                vec![
                    Column::new("pid", "integer").primary_key(),
                    Column::new("name", "text"),
                    Column::new("hiv_status", "integer"),
                ],
            ),
            Table::new(
                "Hospital",
                vec![
                    Column::new("hid", "integer").primary_key(),
                    Column::new("name", "text"),
                ],
            ),
        ])
        .unwrap()
    }

    fn span_of(q: &NlQuestion, text: &str) -> Span {
        q.find(text)[0]
    }

    #[test]
    fn repeated_literal_shares_symbol() {
        let q = NlQuestion::new("Is 'positive' the same as 'positive'?");
        let spans = q.find("positive");
        let links = LinkingMap::new(
            spans
                .iter()
                .map(|&s| ValueLink {
                    span: s,
                    literal: "positive".into(),
                    column: Some(("Patients".into(), "hiv_status".into())),
                })
                .collect(),
            vec![],
            vec![],
        );
        let b = mask(
            &q,
            &schema(),
            &links,
            &PrivacyPolicy::full(),
            &Labels::new(),
        );
        assert_eq!(
            b.masked_question,
            "Is 'V1' the same as 'V1'?; V1 is a value of the column C3"
        );
        assert_eq!(restore_question(&b), q.text());
    }

    #[test]
    fn unselected_column_is_named_concretely_in_clause() {
        let q = NlQuestion::new("Patients at Mercy General");
        let links = LinkingMap::new(
            vec![ValueLink {
                span: span_of(&q, "Mercy General"),
                literal: "Mercy General".into(),
                column: Some(("Hospital".into(), "name".into())),
            }],
            vec![ReferenceLink {
                span: span_of(&q, "Patients"),
                target: Target::table("Patients"),
            }],
            vec![],
        );
        let mut labels = Labels::new();
        labels.insert("Mercy General", Label::Category("location".into()));
        let b = mask(
            &q,
            &schema(),
            &links,
            &PrivacyPolicy::default_categories(),
            &labels,
        );
        assert_eq!(
            b.masked_question,
            "Patients at V1; V1 is a value of the column Hospital.name"
        );
        assert_eq!(b.masked_schema, schema());
        assert!(b.residual_sensitive.is_empty());
    }

    #[test]
    fn residuals_cover_unresolved_and_unlinked_identifiers() {
        let q = NlQuestion::new("patients with hiv status at Mercy");
        let links = LinkingMap::new(
            vec![],
            vec![],
            vec![UnresolvedSpan {
                span: span_of(&q, "Mercy"),
                kind: UnresolvedKind::Value,
            }],
        );
        let b = mask(
            &q,
            &schema(),
            &links,
            &PrivacyPolicy::full(),
            &Labels::new(),
        );
        let texts: Vec<(&str, ResidualReason)> = b
            .residual_sensitive
            .iter()
            .map(|r| (r.text.as_str(), r.reason))
            .collect();
        assert_eq!(
            texts,
            [
                ("patients", ResidualReason::Identifier),
                ("hiv status", ResidualReason::Identifier),
                ("Mercy", ResidualReason::Unresolved)
            ]
        );
        assert_eq!(b.masked_question, q.text());
    }

    #[test]
    fn prompt_question_brackets_identifier_symbols_only() {
        let q = NlQuestion::new("patients named Ann");
        let links = LinkingMap::new(
            vec![ValueLink {
                span: span_of(&q, "Ann"),
                literal: "Ann".into(),
                column: Some(("Patients".into(), "name".into())),
            }],
            vec![ReferenceLink {
                span: span_of(&q, "patients"),
                target: Target::table("Patients"),
            }],
            vec![],
        );
        let b = mask(
            &q,
            &schema(),
            &links,
            &PrivacyPolicy::full(),
            &Labels::new(),
        );
        assert_eq!(
            b.masked_question,
            "T1 named V1; V1 is a value of the column C2"
        );
        assert_eq!(
            b.prompt_question(),
            "[T1] named V1; V1 is a value of the column [C2]"
        );
        assert_eq!(b.body(), "T1 named V1");
        assert_eq!(b.body_symbols().len(), 2);
    }
}
