use serde::{Deserialize, Serialize};

use super::sidecar::SidecarClient;
use crate::gateway::Trace;
use crate::model::{split_identifier, Column, DatabaseSchema, NlQuestion, PipelineConfig, Table};

/// Longest common subsequence length over chars.
fn lcs(a: &[char], b: &[char]) -> usize {
    let mut row = vec![0usize; b.len() + 1];
    for &ca in a {
        let mut diag = 0;
        for (j, &cb) in b.iter().enumerate() {
            let up = row[j + 1];
            row[j + 1] = if ca == cb { diag + 1 } else { up.max(row[j]) };
            diag = up;
        }
    }
    row[b.len()]
}

/// Normalized insertion/deletion similarity: `2·LCS / (|a| + |b|)`.
pub fn similarity(a: &str, b: &str) -> f64 {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    if a.is_empty() && b.is_empty() {
        return 1.0;
    }
    2.0 * lcs(&a, &b) as f64 / (a.len() + b.len()) as f64
}

/// Relevance of `name` to the question: the best similarity between the
/// split, lowercased identifier and any run of up to four question tokens.
pub fn lexical_score(question: &NlQuestion, name: &str) -> f64 {
    let target = split_identifier(name);
    if target.is_empty() {
        return 0.0;
    }
    let mut best = 0.0f64;
    for (first, last) in question.ngrams(4) {
        best = best.max(similarity(&question.normalized_range(first, last), &target));
        if best >= 1.0 {
            break;
        }
    }
    best
}

/// Relevance backend for schema filtering.
#[derive(Debug, Clone)]
pub enum Ranker {
    Lexical,
    /// Every element scores 1.0, so declaration order decides.
    Identity,
    Sidecar(SidecarClient),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredColumn {
    pub name: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredTable {
    pub name: String,
    pub score: f64,
    /// Sorted by descending score, ties in declaration order.
    pub columns: Vec<ScoredColumn>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedSchema {
    /// Sorted by descending score, ties in declaration order.
    pub tables: Vec<ScoredTable>,
    pub retained: DatabaseSchema,
}

/// Weight of a table's own name score; the rest comes from its best column.
const NAME_WEIGHT: f64 = 0.7;

fn candidate_text(table: &Table, column: Option<&Column>) -> String {
    match column {
        None => table.name.clone(),
        Some(c) => format!("{}.{}: {}", table.name, c.name, c.sql_type),
    }
}

/// Raw scores, tables first then columns in declaration order.
fn raw_scores(
    question: &NlQuestion,
    schema: &DatabaseSchema,
    ranker: &Ranker,
    trace: &Trace,
) -> Vec<f64> {
    let lexical = || {
        schema
            .tables()
            .iter()
            .map(|t| lexical_score(question, &t.name))
            .chain(
                schema
                    .columns()
                    .map(|(_, c)| lexical_score(question, &c.name)),
            )
            .collect()
    };
    match ranker {
        Ranker::Identity => vec![1.0; schema.tables().len() + schema.column_count()],
        Ranker::Lexical => lexical(),
        Ranker::Sidecar(client) => {
            let candidates: Vec<String> = schema
                .tables()
                .iter()
                .map(|t| candidate_text(t, None))
                .chain(schema.columns().map(|(t, c)| candidate_text(t, Some(c))))
                .collect();
            match client.rank(question.text(), &candidates) {
                Ok(scores) => scores,
                Err(e) => {
                    trace.degrade(
                        "schema-filtering",
                        format!("ranker sidecar failed, using lexical ranker: {e}"),
                    );
                    lexical()
                }
            }
        }
    }
}

fn sort_desc<T>(items: &mut [(usize, f64, T)]) {
    items.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
}

/// Score every table and column, then keep the top-k tables and, in each,
/// the top-j non-key columns plus every key column and every column a
/// retained table's foreign key points at. Retained tables and columns stay
/// in declaration order; foreign keys into dropped tables are removed.
pub fn rank_schema(
    question: &NlQuestion,
    schema: &DatabaseSchema,
    config: &PipelineConfig,
    ranker: &Ranker,
    trace: &Trace,
) -> RankedSchema {
    let raw = raw_scores(question, schema, ranker, trace);
    let n_tables = schema.tables().len();
    let mut offset = n_tables;
    let mut scored: Vec<(usize, f64, ScoredTable)> = Vec::with_capacity(n_tables);
    for (ti, table) in schema.tables().iter().enumerate() {
        let col_scores = &raw[offset..offset + table.columns.len()];
        offset += table.columns.len();
        let best_col = col_scores.iter().copied().fold(0.0f64, f64::max);
        let score = match ranker {
            Ranker::Identity => 1.0,
            _ => NAME_WEIGHT * raw[ti] + (1.0 - NAME_WEIGHT) * best_col,
        };
        let mut cols: Vec<(usize, f64, ScoredColumn)> = table
            .columns
            .iter()
            .zip(col_scores)
            .enumerate()
            .map(|(ci, (c, &s))| {
                (
                    ci,
                    s,
                    ScoredColumn {
                        name: c.name.clone(),
                        score: s,
                    },
                )
            })
            .collect();
        sort_desc(&mut cols);
        scored.push((
            ti,
            score,
            ScoredTable {
                name: table.name.clone(),
                score,
                columns: cols.into_iter().map(|c| c.2).collect(),
            },
        ));
    }
    sort_desc(&mut scored);

    let mut keep_table = vec![false; n_tables];
    for (ti, _, _) in scored.iter().take(config.top_k_tables) {
        keep_table[*ti] = true;
    }
    let kept_name = |name: &str| {
        schema
            .tables()
            .iter()
            .zip(&keep_table)
            .any(|(t, &k)| k && t.name.eq_ignore_ascii_case(name))
    };
    // Columns referenced by foreign keys of retained tables.
    let fk_targets: Vec<(String, String)> = schema
        .tables()
        .iter()
        .zip(&keep_table)
        .filter(|(_, &k)| k)
        .flat_map(|(t, _)| t.columns.iter().filter_map(|c| c.foreign_key.as_ref()))
        .map(|fk| (fk.table.to_lowercase(), fk.column.to_lowercase()))
        .collect();

    let mut retained = Vec::new();
    for (ti, table) in schema.tables().iter().enumerate() {
        if !keep_table[ti] {
            continue;
        }
        let ranked = &scored
            .iter()
            .find(|s| s.0 == ti)
            .expect("every table scored")
            .2;
        let top: Vec<&str> = ranked
            .columns
            .iter()
            .filter(|sc| table.column(&sc.name).is_some_and(|c| !c.is_key()))
            .take(config.top_j_columns)
            .map(|sc| sc.name.as_str())
            .collect();
        let columns = table
            .columns
            .iter()
            .filter(|c| {
                c.is_key()
                    || top.contains(&c.name.as_str())
                    || fk_targets.contains(&(table.name.to_lowercase(), c.name.to_lowercase()))
            })
            .map(|c| {
                let mut c = c.clone();
                if c.foreign_key
                    .as_ref()
                    .is_some_and(|fk| !kept_name(&fk.table))
                {
                    c.foreign_key = None;
                }
                c
            })
            .collect();
        retained.push(Table::new(&table.name, columns));
    }
    RankedSchema {
        tables: scored.into_iter().map(|s| s.2).collect(),
        retained: DatabaseSchema::new(retained).expect("subset of a valid schema is valid"),
    }
}
