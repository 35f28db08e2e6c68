//! Value detection, value linking, reference linking and token
//! classification.
//!
//! Each step asks the trusted model first and falls back to the
//! deterministic matcher in [`fuzzy`] when no trusted backend is configured
//! or the call fails. Model answers are re-anchored on the question and
//! checked against the schema; targets the schema does not contain never
//! become links.

pub mod fuzzy;
pub mod parse;

use crate::gateway::{Backend, TemplateId, TemplateSet, Trace};
use crate::model::{
    split_identifier, DatabaseSchema, Element, Label, Labels, LinkingMap, NlQuestion,
    PipelineConfig, PolicyKind, PrivacyPolicy, ReferenceLink, Span, Target, UnresolvedKind,
    UnresolvedSpan, ValueLink,
};
use crate::schema::serialize_schema;

/// Linking context shared by the steps of one question.
#[derive(Debug, Clone, Copy)]
pub struct Linker<'a> {
    pub backend: Option<&'a Backend>,
    pub templates: &'a TemplateSet,
    pub config: &'a PipelineConfig,
    pub trace: &'a Trace,
}

/// Canonical `(table, column)` for a model-named target, matched exactly
/// first and then case-insensitively. A bare name resolves to a table, or
/// to a column when exactly one table has it.
pub fn resolve_target(schema: &DatabaseSchema, target: &str) -> Option<Target> {
    let (table, column) = parse::split_target(target);
    let find_table = |name: &str| {
        schema.table(name).or_else(|| {
            schema
                .tables()
                .iter()
                .find(|t| t.name.eq_ignore_ascii_case(name))
        })
    };
    match column {
        Some(column) => {
            let t = find_table(&table)?;
            let c = t.column(&column).or_else(|| {
                t.columns
                    .iter()
                    .find(|c| c.name.eq_ignore_ascii_case(&column))
            })?;
            Some(Target::column(&t.name, &c.name))
        }
        None => {
            if let Some(t) = find_table(&table) {
                return Some(Target::table(&t.name));
            }
            let mut hits = schema
                .columns()
                .filter(|(_, c)| c.name.eq_ignore_ascii_case(&table));
            let (t, c) = hits.next()?;
            hits.next()
                .is_none()
                .then(|| Target::column(&t.name, &c.name))
        }
    }
}

fn as_column(target: Option<Target>) -> Option<(String, String)> {
    match target? {
        Target::Column { table, column } => Some((table, column)),
        Target::Table { .. } => None,
    }
}

fn quoted_list(question: &NlQuestion, spans: &[Span]) -> String {
    spans
        .iter()
        .map(|&s| format!("'{}'", question.slice(s)))
        .collect::<Vec<_>>()
        .join(", ")
}

/// Keep the longest of overlapping spans, then the leftmost.
fn disjoint(mut spans: Vec<Span>) -> Vec<Span> {
    spans.sort_by(|a, b| b.len().cmp(&a.len()).then(a.start.cmp(&b.start)));
    let mut out: Vec<Span> = Vec::new();
    for s in spans {
        if !out.iter().any(|o| o.overlaps(&s)) {
            out.push(s);
        }
    }
    out.sort();
    out
}

impl<'a> Linker<'a> {
    /// Linker without a trusted backend: every step is deterministic.
    pub fn fuzzy(templates: &'a TemplateSet, config: &'a PipelineConfig, trace: &'a Trace) -> Self {
        Linker {
            backend: None,
            templates,
            config,
            trace,
        }
    }

    fn ask(&self, id: TemplateId, bindings: &[(&str, &str)]) -> Option<Result<String, String>> {
        let backend = self.backend?;
        let prompt = match self.templates.render(id, bindings) {
            Ok(p) => p,
            Err(e) => return Some(Err(e.to_string())),
        };
        Some(
            backend
                .complete(&prompt, None, self.trace)
                .map_err(|e| e.to_string()),
        )
    }

    /// Question spans holding literal values. A failed model call yields no
    /// spans and a degradation event.
    pub fn detect_values(&self, question: &NlQuestion, schema: &DatabaseSchema) -> Vec<Span> {
        let yaml = serialize_schema(schema, false);
        match self.ask(
            TemplateId::DetectValues,
            &[("schema", &yaml), ("question", question.text())],
        ) {
            None => {
                let candidates =
                    fuzzy::reference_candidates(question, schema, self.config.fuzzy_threshold);
                fuzzy::detect_values(question, &candidates)
            }
            Some(Err(e)) => {
                self.trace.degrade("value-detection", e);
                Vec::new()
            }
            Some(Ok(reply)) => disjoint(
                parse::parse_list(&reply)
                    .iter()
                    .flat_map(|v| question.find(v))
                    .collect(),
            ),
        }
    }

    /// A column for each value span. With no spans the model is asked to
    /// find the values itself. Values the model maps to a column the schema
    /// lacks, or to nothing, are kept without a column.
    pub fn link_values(
        &self,
        question: &NlQuestion,
        schema: &DatabaseSchema,
        values: &[Span],
    ) -> Vec<ValueLink> {
        let yaml = serialize_schema(schema, false);
        let listed = if values.is_empty() {
            "(none given; find them in the question)".to_string()
        } else {
            quoted_list(question, values)
        };
        let reply = match self.ask(
            TemplateId::LinkValues,
            &[
                ("schema", &yaml),
                ("question", question.text()),
                ("values", &listed),
            ],
        ) {
            None => {
                return fuzzy::link_values(question, schema, values, self.config.fuzzy_threshold)
            }
            Some(Err(e)) => {
                self.trace.degrade("value-linking", e);
                return fuzzy::link_values(question, schema, values, self.config.fuzzy_threshold);
            }
            Some(Ok(reply)) => reply,
        };

        let mut links: Vec<ValueLink> = Vec::new();
        for (value, target) in parse::parse_arrows(&reply) {
            let column = as_column(target.and_then(|t| resolve_target(schema, &t)));
            for span in question.find(&value) {
                let allowed = values.is_empty() || values.contains(&span);
                if allowed && !links.iter().any(|l| l.span.overlaps(&span)) {
                    links.push(ValueLink {
                        span,
                        literal: question.slice(span).to_string(),
                        column: column.clone(),
                    });
                }
            }
        }
        for &span in values {
            if !links.iter().any(|l| l.span == span) {
                links.push(ValueLink {
                    span,
                    literal: question.slice(span).to_string(),
                    column: None,
                });
            }
        }
        links.sort_by_key(|l| l.span.start);
        links
    }

    /// Schema references outside `values`. Phrases the model ties to an
    /// element the schema lacks come back as unresolved spans.
    pub fn link_references(
        &self,
        question: &NlQuestion,
        schema: &DatabaseSchema,
        values: &[Span],
    ) -> (Vec<ReferenceLink>, Vec<UnresolvedSpan>) {
        let yaml = serialize_schema(schema, false);
        let listed = if values.is_empty() {
            "none".to_string()
        } else {
            quoted_list(question, values)
        };
        let reply = match self.ask(
            TemplateId::LinkReferences,
            &[
                ("values", &listed),
                ("schema", &yaml),
                ("question", question.text()),
            ],
        ) {
            None => {
                let refs =
                    fuzzy::link_references(question, schema, values, self.config.fuzzy_threshold);
                return (refs, Vec::new());
            }
            Some(Err(e)) => {
                self.trace.degrade("reference-linking", e);
                let refs =
                    fuzzy::link_references(question, schema, values, self.config.fuzzy_threshold);
                return (refs, Vec::new());
            }
            Some(Ok(reply)) => reply,
        };

        let mut refs = Vec::new();
        let mut unresolved = Vec::new();
        for (phrase, target) in parse::parse_arrows(&reply) {
            let Some(target) = target else { continue };
            let resolved = resolve_target(schema, &target);
            for span in question.find(&phrase) {
                if values.iter().any(|v| v.overlaps(&span)) {
                    continue;
                }
                match &resolved {
                    Some(t) => refs.push(ReferenceLink {
                        span,
                        target: t.clone(),
                    }),
                    None => unresolved.push(UnresolvedSpan {
                        span,
                        kind: UnresolvedKind::Reference,
                    }),
                }
            }
        }
        (refs, unresolved)
    }

    /// All linking steps under the configured toggles. With value linking
    /// switched off, detected values stay unlinked and unmasked.
    pub fn link(&self, question: &NlQuestion, schema: &DatabaseSchema) -> LinkingMap {
        let detected = if self.config.enable_value_detection {
            self.detect_values(question, schema)
        } else {
            Vec::new()
        };
        let (value_links, mut unresolved) = if self.config.enable_value_linking {
            (self.link_values(question, schema, &detected), Vec::new())
        } else {
            let spans = detected
                .iter()
                .map(|&span| UnresolvedSpan {
                    span,
                    kind: UnresolvedKind::Value,
                })
                .collect();
            (Vec::new(), spans)
        };
        let claimed: Vec<Span> = value_links
            .iter()
            .map(|v| v.span)
            .chain(detected.iter().copied())
            .collect();
        let (refs, dangling) = self.link_references(question, schema, &claimed);
        unresolved.extend(dangling);
        LinkingMap::new(value_links, refs, unresolved)
    }

    /// Category of `text`, or ε. A failed call gives ε, or the first policy
    /// category under strict classification so the token is masked.
    pub fn classify(&self, text: &str, categories: &[String]) -> Label {
        let listed = categories.join(", ");
        match self.ask(
            TemplateId::ClassifyToken,
            &[("categories", &listed), ("token", text)],
        ) {
            None => Label::Epsilon,
            Some(Err(e)) => {
                self.trace.degrade("classification", e);
                match categories.first() {
                    Some(c) if self.config.strict_classification => Label::Category(c.clone()),
                    _ => Label::Epsilon,
                }
            }
            Some(Ok(reply)) => {
                let answer = parse::parse_list(&reply)
                    .into_iter()
                    .next()
                    .unwrap_or_default();
                let answer = answer.trim_end_matches(['.', '!']).trim();
                categories
                    .iter()
                    .find(|c| c.eq_ignore_ascii_case(answer))
                    .map_or(Label::Epsilon, |c| Label::Category(c.clone()))
            }
        }
    }

    /// Labels for every schema identifier and literal a category-based
    /// policy must decide. Other policies need none. Without a trusted
    /// backend nothing is labeled and the policy's unlabeled default applies.
    pub fn labels(
        &self,
        policy: &PrivacyPolicy,
        schema: &DatabaseSchema,
        literals: &[&str],
    ) -> Labels {
        let mut labels = Labels::new();
        if policy.kind != PolicyKind::CategoryBased || self.backend.is_none() {
            return labels;
        }
        let categories: Vec<String> = policy.categories.iter().cloned().collect();
        let texts = schema
            .tables()
            .iter()
            .map(|t| Element::Table(&t.name))
            .chain(schema.columns().map(|(t, c)| Element::Column {
                table: &t.name,
                column: &c.name,
            }))
            .chain(literals.iter().map(|l| Element::Literal(l)));
        for element in texts {
            let text = element.text();
            if !labels.contains(text) {
                let label = self.classify(text, &categories);
                labels.insert(text, label);
            }
        }
        labels
    }
}

/// Linking map built from annotated sensitive tokens: tokens naming a table
/// or column become references, everything else a value without a column.
pub fn ground_truth_links(
    question: &NlQuestion,
    schema: &DatabaseSchema,
    tokens: &[String],
) -> LinkingMap {
    let mut values = Vec::new();
    let mut refs = Vec::new();
    for token in tokens {
        let norm = token.trim().to_lowercase();
        let split = split_identifier(token);
        let same = |name: &str| name.to_lowercase() == norm || split_identifier(name) == split;
        let target = schema
            .tables()
            .iter()
            .find(|t| same(&t.name))
            .map(|t| Target::table(&t.name))
            .or_else(|| {
                schema
                    .columns()
                    .find(|(_, c)| same(&c.name))
                    .map(|(t, c)| Target::column(&t.name, &c.name))
            });
        for span in question.find(token) {
            match &target {
                Some(t) => refs.push(ReferenceLink {
                    span,
                    target: t.clone(),
                }),
                None => values.push(ValueLink {
                    span,
                    literal: question.slice(span).to_string(),
                    column: None,
                }),
            }
        }
    }
    LinkingMap::new(values, refs, Vec::new())
}
