//! Deterministic linking used when no trusted model is configured or a
//! model call fails.

use crate::model::{
    split_identifier, DatabaseSchema, NlQuestion, ReferenceLink, Span, Target, ValueLink,
};
use crate::schema::similarity;

const MAX_NGRAM: usize = 4;

/// Words joining a column mention to the value compared against it.
const CONNECTORS: [&str; 5] = ["as", "is", "was", "equals", "being"];

/// Capitalized or trailing words that never start a value on their own.
const STOPWORDS: [&str; 24] = [
    "a", "an", "the", "i", "not", "no", "null", "and", "or", "of", "in", "on", "at", "to", "for",
    "with", "by", "from", "what", "which", "who", "how", "list", "show",
];

/// A question n-gram that resembles a schema element.
#[derive(Debug, Clone, PartialEq)]
pub struct RefCandidate {
    pub span: Span,
    pub target: Target,
    pub score: f64,
}

struct Form {
    words: String,
    target: Target,
}

fn forms(schema: &DatabaseSchema) -> Vec<Form> {
    let mut out = Vec::new();
    for table in schema.tables() {
        out.push(Form {
            words: split_identifier(&table.name),
            target: Target::table(&table.name),
        });
    }
    for table in schema.tables() {
        for column in &table.columns {
            out.push(Form {
                words: split_identifier(&column.name),
                target: Target::column(&table.name, &column.name),
            });
        }
    }
    for table in schema.tables() {
        for column in &table.columns {
            out.push(Form {
                words: format!(
                    "{} {}",
                    split_identifier(&table.name),
                    split_identifier(&column.name)
                ),
                target: Target::column(&table.name, &column.name),
            });
        }
    }
    out.retain(|f| !f.words.is_empty());
    out
}

fn target_table(target: &Target) -> &str {
    match target {
        Target::Table { table } | Target::Column { table, .. } => table,
    }
}

fn is_number(text: &str) -> bool {
    let t = text.replace(',', "");
    !t.is_empty() && t.parse::<f64>().is_ok()
}

/// Every n-gram of up to four tokens whose best similarity to a table,
/// column or `table column` form reaches `threshold`. Ties between targets
/// prefer columns of tables the question mentions, then declaration order.
pub fn reference_candidates(
    question: &NlQuestion,
    schema: &DatabaseSchema,
    threshold: f64,
) -> Vec<RefCandidate> {
    let forms = forms(schema);
    let mut scored: Vec<(usize, usize, usize, f64)> = Vec::new();
    for (first, last) in question.ngrams(MAX_NGRAM) {
        if (first..=last).all(|i| is_number(question.token_text(i))) {
            continue;
        }
        let words: Vec<String> = (first..=last)
            .flat_map(|i| {
                split_identifier(question.token_text(i))
                    .split(' ')
                    .map(str::to_string)
                    .collect::<Vec<_>>()
            })
            .filter(|w| !w.is_empty())
            .collect();
        let text = words.join(" ");
        for (k, form) in forms.iter().enumerate() {
            let s = similarity(&text, &form.words);
            let every_word_fits = words.len() < 2
                || words
                    .iter()
                    .all(|w| form.words.split(' ').any(|f| similarity(w, f) >= threshold));
            if s >= threshold && every_word_fits {
                scored.push((first, last, k, s));
            }
        }
    }
    let mentioned: Vec<&str> = scored
        .iter()
        .filter_map(|&(_, _, k, _)| match &forms[k].target {
            Target::Table { table } => Some(table.as_str()),
            Target::Column { .. } => None,
        })
        .collect();

    let mut out: Vec<RefCandidate> = Vec::new();
    let mut best: Option<(usize, usize, usize, f64, bool)> = None;
    let flush = |best: &mut Option<(usize, usize, usize, f64, bool)>,
                 out: &mut Vec<RefCandidate>| {
        if let Some((first, last, k, score, _)) = best.take() {
            out.push(RefCandidate {
                span: question.token_range(first, last),
                target: forms[k].target.clone(),
                score,
            });
        }
    };
    for (first, last, k, s) in scored {
        let in_question = mentioned.contains(&target_table(&forms[k].target));
        match best {
            Some((bf, bl, _, bs, bm)) if bf == first && bl == last => {
                if s > bs || (s == bs && in_question && !bm) {
                    best = Some((first, last, k, s, in_question));
                }
            }
            _ => {
                flush(&mut best, &mut out);
                best = Some((first, last, k, s, in_question));
            }
        }
    }
    flush(&mut best, &mut out);
    out
}

/// Non-overlapping references: longest span first, then leftmost. Spans
/// overlapping `excluded` are skipped.
pub fn select_references(candidates: &[RefCandidate], excluded: &[Span]) -> Vec<ReferenceLink> {
    let mut order: Vec<&RefCandidate> = candidates.iter().collect();
    order.sort_by(|a, b| {
        b.span
            .len()
            .cmp(&a.span.len())
            .then(a.span.start.cmp(&b.span.start))
    });
    let mut taken: Vec<Span> = excluded.to_vec();
    let mut out = Vec::new();
    for c in order {
        if taken.iter().any(|t| t.overlaps(&c.span)) {
            continue;
        }
        taken.push(c.span);
        out.push(ReferenceLink {
            span: c.span,
            target: c.target.clone(),
        });
    }
    out.sort_by_key(|r| r.span.start);
    out
}

fn quoted_spans(question: &NlQuestion) -> Vec<Span> {
    let text = question.text();
    let mut out = Vec::new();
    let bytes: Vec<(usize, char)> = text.char_indices().collect();
    let mut i = 0;
    while i < bytes.len() {
        let (at, c) = bytes[i];
        let opens = matches!(c, '\'' | '"') && (i == 0 || !bytes[i - 1].1.is_alphanumeric());
        if !opens {
            i += 1;
            continue;
        }
        let close = (i + 1..bytes.len()).find(|&j| {
            bytes[j].1 == c && bytes.get(j + 1).is_none_or(|(_, n)| !n.is_alphanumeric())
        });
        let Some(j) = close else {
            i += 1;
            continue;
        };
        let inner = Span::new(at + 1, bytes[j].0);
        let inside: Vec<usize> = (0..question.tokens().len())
            .filter(|&t| inner.contains(&question.tokens()[t]))
            .collect();
        if let (Some(&first), Some(&last)) = (inside.first(), inside.last()) {
            out.push(question.token_range(first, last));
        }
        i = j + 1;
    }
    out
}

fn starts_upper(text: &str) -> bool {
    text.chars().next().is_some_and(char::is_uppercase)
}

/// Literal values by surface cues: quoted strings, numbers, runs of
/// capitalized words not fully explained by schema references, and the word
/// following `column as|is|=`.
pub fn detect_values(question: &NlQuestion, candidates: &[RefCandidate]) -> Vec<Span> {
    let tokens = question.tokens();
    let text = question.text();
    let covered = |i: usize| candidates.iter().any(|c| c.span.contains(&tokens[i]));
    let stop = |i: usize| STOPWORDS.contains(&question.token_text(i).to_lowercase().as_str());
    let mut found: Vec<Span> = quoted_spans(question);

    for (i, &token) in tokens.iter().enumerate() {
        if is_number(question.token_text(i)) {
            found.push(token);
        }
    }

    let mut i = 0;
    while i < tokens.len() {
        if !starts_upper(question.token_text(i)) {
            i += 1;
            continue;
        }
        let mut j = i;
        while j + 1 < tokens.len()
            && starts_upper(question.token_text(j + 1))
            && text[tokens[j].end..tokens[j + 1].start].trim().is_empty()
        {
            j += 1;
        }
        let mut first = i;
        while first <= j && (first == 0 || stop(first)) {
            first += 1;
        }
        if first <= j && !(first..=j).all(covered) {
            found.push(question.token_range(first, j));
        }
        i = j + 1;
    }

    for c in candidates {
        if !matches!(c.target, Target::Column { .. }) {
            continue;
        }
        let Some((_, last)) = question.tokens_of(c.span) else {
            continue;
        };
        let mut next = last + 1;
        if next >= tokens.len() {
            continue;
        }
        let gap = &text[tokens[last].end..tokens[next].start];
        if !gap.contains('=') {
            if !CONNECTORS.contains(&question.token_text(next).to_lowercase().as_str()) {
                continue;
            }
            next += 1;
            if next >= tokens.len() {
                continue;
            }
        }
        let word = question.token_text(next);
        if word.chars().all(char::is_alphabetic) && !stop(next) && !covered(next) {
            found.push(tokens[next]);
        }
    }

    found.sort_by(|a, b| b.len().cmp(&a.len()).then(a.start.cmp(&b.start)));
    let mut out: Vec<Span> = Vec::new();
    for s in found {
        if !out.iter().any(|o| o.overlaps(&s)) {
            out.push(s);
        }
    }
    out.sort();
    out
}

/// The column of `table` most likely to hold a display name.
fn name_column(schema: &DatabaseSchema, table: &str) -> Option<String> {
    let t = schema.table(table)?;
    let texty = |ty: &str| {
        let ty = ty.to_lowercase();
        ty.contains("char") || ty.contains("text") || ty.contains("clob") || ty.is_empty()
    };
    t.columns
        .iter()
        .find(|c| {
            let w = split_identifier(&c.name);
            w.split(' ').any(|x| x == "name" || x == "title")
        })
        .or_else(|| t.columns.iter().find(|c| !c.is_key() && texty(&c.sql_type)))
        .map(|c| c.name.clone())
}

/// Column for each value: a table named inside the value contributes its
/// name-like column, otherwise the closest column mention at most three
/// tokens before the value. Anything else stays without a column.
pub fn link_values(
    question: &NlQuestion,
    schema: &DatabaseSchema,
    values: &[Span],
    threshold: f64,
) -> Vec<ValueLink> {
    let candidates = reference_candidates(question, schema, threshold);
    let references = select_references(&candidates, values);
    values
        .iter()
        .map(|&span| {
            let inner = candidates.iter().find_map(|c| match &c.target {
                Target::Table { table } if span.contains(&c.span) => {
                    name_column(schema, table).map(|col| (table.clone(), col))
                }
                _ => None,
            });
            let column = inner.or_else(|| {
                let (first, _) = question.tokens_of(span)?;
                references
                    .iter()
                    .filter(|r| r.span.end <= span.start)
                    .filter_map(|r| match &r.target {
                        Target::Column { table, column } => {
                            let (_, last) = question.tokens_of(r.span)?;
                            (first - last <= 3).then(|| (table.clone(), column.clone()))
                        }
                        Target::Table { .. } => None,
                    })
                    .next_back()
            });
            ValueLink {
                span,
                literal: question.slice(span).to_string(),
                column,
            }
        })
        .collect()
}

/// References outside `values`, chosen longest span first.
pub fn link_references(
    question: &NlQuestion,
    schema: &DatabaseSchema,
    values: &[Span],
    threshold: f64,
) -> Vec<ReferenceLink> {
    select_references(&reference_candidates(question, schema, threshold), values)
}
