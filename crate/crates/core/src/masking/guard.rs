use std::collections::HashMap;

use crate::gateway::RenderedPrompt;
use crate::model::{
    segment, split_identifier, DatabaseSchema, Element, Labels, PrivacyPolicy, SymbolTable,
};

/// Lowercased words of `text` under the question segmentation.
fn words(text: &str) -> Vec<String> {
    segment(text)
        .into_iter()
        .map(|s| text[s.start..s.end].to_lowercase())
        .collect()
}

/// Scanner for sensitive tokens about to cross the trust boundary.
///
/// A term matches when its words appear as consecutive whole words of the
/// scanned text, case-insensitively. Identifiers also match in split form,
/// so `hiv_status` is caught as "HIV status".
#[derive(Debug, Clone, Default)]
pub struct LeakGuard {
    terms: Vec<String>,
    /// First word → (term index, full word sequence).
    patterns: HashMap<String, Vec<(usize, Vec<String>)>>,
    strict: bool,
}

impl LeakGuard {
    /// Guard over an explicit term list.
    pub fn from_terms<I, S>(terms: I, strict: bool) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut guard = LeakGuard {
            strict,
            ..Default::default()
        };
        for t in terms {
            guard.add(t.as_ref(), false);
        }
        guard
    }

    /// Every policy-selected identifier of `schema`, every identifier the
    /// symbol table masks, and every masked literal.
    pub fn new(
        schema: &DatabaseSchema,
        policy: &PrivacyPolicy,
        labels: &Labels,
        symbols: &SymbolTable,
        strict: bool,
    ) -> Self {
        let mut guard = LeakGuard {
            strict,
            ..Default::default()
        };
        for table in schema.tables() {
            if policy.is_sensitive(Element::Table(&table.name), labels) {
                guard.add(&table.name, true);
            }
            for column in &table.columns {
                let element = Element::Column {
                    table: &table.name,
                    column: &column.name,
                };
                if policy.is_sensitive(element, labels) {
                    guard.add(&column.name, true);
                }
            }
        }
        for (name, _) in symbols.tables() {
            guard.add(name, true);
        }
        for (_, column, _) in symbols.columns() {
            guard.add(column, true);
        }
        for (literal, _) in symbols.values() {
            guard.add(literal, false);
        }
        guard
    }

    fn add(&mut self, term: &str, identifier: bool) {
        if self.terms.iter().any(|t| t == term) {
            return;
        }
        let mut forms = vec![words(term)];
        if identifier {
            let split: Vec<String> = split_identifier(term)
                .split(' ')
                .map(str::to_string)
                .collect();
            if !forms.contains(&split) {
                forms.push(split);
            }
        }
        let index = self.terms.len();
        let mut added = false;
        for form in forms {
            if form.is_empty() || form.iter().any(String::is_empty) {
                continue;
            }
            self.patterns
                .entry(form[0].clone())
                .or_default()
                .push((index, form));
            added = true;
        }
        if added {
            self.terms.push(term.to_string());
        }
    }

    pub fn is_strict(&self) -> bool {
        self.strict
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    /// Terms occurring in `text`, in registration order.
    pub fn scan(&self, text: &str) -> Vec<String> {
        let mut hit = vec![false; self.terms.len()];
        self.mark(text, &mut hit);
        self.collect(hit)
    }

    /// Terms occurring in the parts of `prompt` that carry bound content
    /// (and, for non-stock templates, the template text too).
    ///
    /// Schema bindings are scanned without their column type annotations,
    /// so a column named `date` does not match its own `type: date`.
    pub fn scan_prompt(&self, prompt: &RenderedPrompt) -> Vec<String> {
        let mut hit = vec![false; self.terms.len()];
        for segment in prompt.segments.iter() {
            match segment.placeholder.as_deref() {
                Some(p) if SCHEMA_PLACEHOLDERS.contains(&p) => {
                    self.mark(&without_type_annotations(&segment.text), &mut hit)
                }
                Some(_) => self.mark(&segment.text, &mut hit),
                None if !prompt.stock => self.mark(&segment.text, &mut hit),
                None => {}
            }
        }
        self.collect(hit)
    }

    fn mark(&self, text: &str, hit: &mut [bool]) {
        let ws = words(text);
        for i in 0..ws.len() {
            if let Some(candidates) = self.patterns.get(&ws[i]) {
                for (index, form) in candidates {
                    if ws.len() - i >= form.len() && ws[i..i + form.len()] == form[..] {
                        hit[*index] = true;
                    }
                }
            }
        }
    }

    fn collect(&self, hit: Vec<bool>) -> Vec<String> {
        self.terms
            .iter()
            .zip(hit)
            .filter(|(_, h)| *h)
            .map(|(t, _)| t.clone())
            .collect()
    }
}

/// Placeholders bound to a serialized schema.
const SCHEMA_PLACEHOLDERS: [&str; 2] = ["schema", "DB_SCHEMA"];

/// Words that may make up a declared column type.
const TYPE_WORDS: &[&str] = &[
    "bigint",
    "binary",
    "blob",
    "bool",
    "boolean",
    "char",
    "character",
    "clob",
    "date",
    "datetime",
    "dec",
    "decimal",
    "double",
    "float",
    "int",
    "integer",
    "long",
    "mediumint",
    "native",
    "nchar",
    "number",
    "numeric",
    "nvarchar",
    "precision",
    "real",
    "smallint",
    "string",
    "text",
    "time",
    "timestamp",
    "tinyint",
    "unsigned",
    "varchar",
    "varying",
];

fn is_type_annotation(value: &str) -> bool {
    let value = value.trim().trim_matches('\'');
    !value.is_empty()
        && value
            .split(|c: char| !c.is_ascii_alphanumeric())
            .filter(|w| !w.is_empty())
            .all(|w| {
                w.chars().all(|c| c.is_ascii_digit())
                    || TYPE_WORDS.contains(&w.to_ascii_lowercase().as_str())
            })
}

/// `text` with the type of every YAML column line removed when the type
/// consists of type keywords and sizes only.
fn without_type_annotations(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for line in text.lines() {
        let trimmed = line.trim_start();
        let kept = if let Some(value) = trimmed.strip_prefix("type:") {
            if is_type_annotation(value) {
                &line[..line.len() - value.len()]
            } else {
                line
            }
        } else if trimmed.starts_with('\'') {
            match line.rfind("': ") {
                Some(i) if is_type_annotation(&line[i + 3..]) => &line[..i + 2],
                _ => line,
            }
        } else {
            line
        };
        out.push_str(kept);
        out.push('\n');
    }
    out
}

/// Sensitive tokens of `text` under `policy`: policy-selected identifiers
/// of `schema` plus everything `symbols` masks.
pub fn leak_scan(
    text: &str,
    symbols: &SymbolTable,
    policy: &PrivacyPolicy,
    schema: &DatabaseSchema,
) -> Vec<String> {
    LeakGuard::new(schema, policy, &Labels::new(), symbols, true).scan(text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Column, Table};

    fn example_schema() -> DatabaseSchema {
        DatabaseSchema::new(vec![
            Table::new(
                "Patients",
                vec![
                    Column::new("pid", "integer").primary_key(),
                    Column::new("name", "text"),
                    Column::new("hiv_status", "integer"),
                    Column::new("diagnosis", "text"),
                    Column::new("treatment", "text"),
                ],
            ),
            Table::new(
                "Hospital",
                vec![
                    Column::new("hid", "integer").primary_key(),
                    Column::new("name", "text"),
                    Column::new("address", "text"),
                ],
            ),
            Table::new(
                "Admissions",
                vec![
                    Column::new("aid", "integer").primary_key(),
                    Column::new("pid", "integer").references("Patients", "pid"),
                    Column::new("hid", "integer").references("Hospital", "hid"),
                    Column::new("date", "date"),
                ],
            ),
        ])
        .unwrap()
    }

    #[test]
    fn spec_scan_examples() {
        let schema = example_schema();
        let mut st = SymbolTable::fresh(&schema, &PrivacyPolicy::full(), &Labels::new());
        st.add_value("New York Hospital", None);
        st.add_value("positive", None);
        let q = "How many T1 did the V1 T3 with C3 as V2?; V1 is a value of the column C7; V2 is a value of the column C3";
        assert!(leak_scan(q, &st, &PrivacyPolicy::full(), &schema).is_empty());
        assert_eq!(
            leak_scan("count Patients", &st, &PrivacyPolicy::full(), &schema),
            ["Patients"]
        );
        assert_eq!(
            leak_scan("all patients", &st, &PrivacyPolicy::full(), &schema),
            ["Patients"]
        );
        assert_eq!(
            leak_scan(
                "HIV status is Positive at new york hospital",
                &st,
                &PrivacyPolicy::full(),
                &schema
            ),
            ["hiv_status", "Hospital", "New York Hospital", "positive"]
        );
    }

    #[test]
    fn whole_words_only() {
        let g = LeakGuard::from_terms(["id", "name"], true);
        assert!(g.scan("did the qualified names match?").is_empty());
        assert_eq!(g.scan("the name, then ID"), ["id", "name"]);
    }

    #[test]
    fn unselected_identifiers_are_not_terms() {
        let schema = example_schema();
        let policy = PrivacyPolicy::custom(["Hospital".to_string()], [], false);
        let st = SymbolTable::fresh(&schema, &policy, &Labels::new());
        let g = LeakGuard::new(&schema, &policy, &Labels::new(), &st, true);
        assert_eq!(g.terms(), ["Hospital"]);
    }

    #[test]
    fn schema_types_are_not_leaks() {
        use crate::gateway::render_prompt;
        use crate::gateway::TemplateId;
        let g = LeakGuard::from_terms(["date", "secret"], true);
        let schema = "'[T3]':\n    '[C12]': date\n    '[C9]':\n        primary_key: true\n        type: date\n";
        let p = render_prompt(
            TemplateId::Reidentify,
            &[("schema", schema), ("question", "when")],
        )
        .unwrap();
        assert!(g.scan_prompt(&p).is_empty());
        let leaky = "'[date]': text\n    '[C1]': varchar(secret)\n";
        let p = render_prompt(
            TemplateId::Reidentify,
            &[("schema", leaky), ("question", "date?")],
        )
        .unwrap();
        assert_eq!(g.scan_prompt(&p), ["date", "secret"]);
    }
}
