use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::model::{Concrete, Symbol, SymbolKind, SymbolTable};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    /// `'...'` with `''` escapes; text excludes the quotes, unescaped.
    Str,
    /// `[...]`, `"..."` or `` `...` ``; text excludes the delimiters.
    Quoted(char),
    Word,
    Other,
}

#[derive(Debug, Clone)]
struct Tok<'a> {
    kind: Kind,
    raw: &'a str,
    text: String,
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

/// Split SQL into string literals, quoted identifiers, words (including
/// decimal numbers) and single other characters. Concatenating `raw`
/// reproduces the input.
fn lex(sql: &str) -> Vec<Tok<'_>> {
    let chars: Vec<(usize, char)> = sql.char_indices().collect();
    let at = |i: usize| chars.get(i).map_or(sql.len(), |(b, _)| *b);
    let mut toks = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let (start, c) = chars[i];
        let (kind, end_i, text) = match c {
            '\'' => {
                let mut j = i + 1;
                let mut text = String::new();
                loop {
                    match chars.get(j) {
                        None => break,
                        Some((_, '\'')) if matches!(chars.get(j + 1), Some((_, '\''))) => {
                            text.push('\'');
                            j += 2;
                        }
                        Some((_, '\'')) => {
                            j += 1;
                            break;
                        }
                        Some((_, ch)) => {
                            text.push(*ch);
                            j += 1;
                        }
                    }
                }
                (Kind::Str, j, text)
            }
            '[' | '"' | '`' => {
                let close = if c == '[' { ']' } else { c };
                let mut j = i + 1;
                let mut text = String::new();
                let mut closed = false;
                while let Some((_, ch)) = chars.get(j) {
                    if *ch == close {
                        if close != ']' && matches!(chars.get(j + 1), Some((_, x)) if *x == close) {
                            text.push(close);
                            j += 2;
                            continue;
                        }
                        j += 1;
                        closed = true;
                        break;
                    }
                    text.push(*ch);
                    j += 1;
                }
                if closed {
                    (Kind::Quoted(c), j, text)
                } else {
                    (Kind::Other, i + 1, c.to_string())
                }
            }
            c if is_word_char(c) => {
                let numeric = c.is_ascii_digit();
                let mut j = i + 1;
                while let Some((_, ch)) = chars.get(j) {
                    let decimal_point = numeric
                        && *ch == '.'
                        && chars.get(j + 1).is_some_and(|(_, n)| n.is_ascii_digit());
                    if is_word_char(*ch) || decimal_point {
                        j += 1;
                    } else {
                        break;
                    }
                }
                (Kind::Word, j, sql[start..at(j)].to_string())
            }
            _ => (Kind::Other, i + 1, c.to_string()),
        };
        toks.push(Tok {
            kind,
            raw: &sql[start..at(end_i)],
            text,
        });
        i = end_i;
    }
    toks
}

const KEYWORDS: &[&str] = &[
    "all",
    "and",
    "as",
    "asc",
    "between",
    "by",
    "case",
    "cast",
    "create",
    "cross",
    "delete",
    "desc",
    "distinct",
    "drop",
    "else",
    "end",
    "except",
    "exists",
    "from",
    "full",
    "group",
    "having",
    "in",
    "index",
    "inner",
    "insert",
    "intersect",
    "into",
    "is",
    "join",
    "key",
    "left",
    "like",
    "limit",
    "natural",
    "not",
    "null",
    "offset",
    "on",
    "or",
    "order",
    "outer",
    "primary",
    "references",
    "right",
    "select",
    "set",
    "table",
    "then",
    "union",
    "update",
    "using",
    "values",
    "when",
    "where",
    "with",
];

/// Whether `name` can appear unquoted as an SQLite identifier.
fn is_plain_identifier(name: &str) -> bool {
    let mut chars = name.chars();
    chars
        .next()
        .is_some_and(|c| c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
        && !KEYWORDS.contains(&name.to_ascii_lowercase().as_str())
}

fn quote_string(literal: &str) -> String {
    format!("'{}'", literal.replace('\'', "''"))
}

fn is_numeric(literal: &str) -> bool {
    let body = literal.strip_prefix('-').unwrap_or(literal);
    !body.is_empty()
        && body.chars().all(|c| c.is_ascii_digit() || c == '.')
        && body.chars().filter(|&c| c == '.').count() <= 1
        && body.chars().next().is_some_and(|c| c.is_ascii_digit())
        && !body.ends_with('.')
}

fn wrap_identifier(name: &str, delim: char) -> String {
    match delim {
        '[' => format!("[{name}]"),
        d => {
            let d = d.to_string();
            format!("{d}{}{d}", name.replace(&d, &d.repeat(2)))
        }
    }
}

fn identifier_name(concrete: &Concrete) -> Option<&str> {
    match concrete {
        Concrete::Table { name } => Some(name),
        Concrete::Column { column, .. } => Some(column),
        Concrete::Value { .. } => None,
    }
}

/// Result of reconstructing concrete SQL.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnmaskResult {
    pub sql: String,
    /// Symbol-shaped tokens with no entry in the symbol table, each once.
    pub unknown: Vec<String>,
}

impl UnmaskResult {
    pub fn is_clean(&self) -> bool {
        self.unknown.is_empty()
    }
}

/// Replace every symbol in `sql` by its concrete counterpart.
///
/// Bare and bracketed identifier symbols become the identifier (bracketed
/// ones stay bracketed; bare ones are bracketed only if not plain). Value
/// symbols become string literals, or bare numbers for numeric literals;
/// inside a string literal they are substituted in place. Unknown symbols
/// are kept verbatim and reported.
pub fn unmask_sql(sql: &str, symbols: &SymbolTable) -> UnmaskResult {
    let mut out = String::with_capacity(sql.len() + 32);
    let mut unknown: Vec<String> = Vec::new();
    let report = |word: &str, unknown: &mut Vec<String>| {
        if !symbols.is_reserved(word) && !unknown.iter().any(|u| u == word) {
            unknown.push(word.to_string());
        }
    };
    for tok in lex(sql) {
        match tok.kind {
            Kind::Word => match Symbol::parse(&tok.text) {
                Some(sym) => match symbols.resolve(sym) {
                    Some(Concrete::Value { literal }) if is_numeric(literal) => {
                        out.push_str(literal)
                    }
                    Some(Concrete::Value { literal }) => out.push_str(&quote_string(literal)),
                    Some(c) => {
                        let name = identifier_name(c).expect("identifier symbol");
                        if is_plain_identifier(name) {
                            out.push_str(name);
                        } else {
                            out.push_str(&wrap_identifier(name, '['));
                        }
                    }
                    None => {
                        report(&tok.text, &mut unknown);
                        out.push_str(tok.raw);
                    }
                },
                None => out.push_str(tok.raw),
            },
            Kind::Quoted(delim) => match Symbol::parse(&tok.text) {
                Some(sym) => match symbols.resolve(sym) {
                    Some(Concrete::Value { literal }) if delim == '[' || delim == '`' => out
                        .push_str(&if is_numeric(literal) {
                            literal.clone()
                        } else {
                            quote_string(literal)
                        }),
                    Some(c) => {
                        let name = match c {
                            Concrete::Value { literal } => literal.as_str(),
                            other => identifier_name(other).expect("identifier symbol"),
                        };
                        out.push_str(&wrap_identifier(name, delim));
                    }
                    None => {
                        report(&tok.text, &mut unknown);
                        out.push_str(tok.raw);
                    }
                },
                None => out.push_str(tok.raw),
            },
            Kind::Str => {
                let content = &tok.text;
                let mut replaced = String::with_capacity(content.len());
                let mut changed = false;
                let mut last = 0;
                for span in crate::model::segment(content) {
                    let word = &content[span.start..span.end];
                    let Some(sym) = Symbol::parse(word).filter(|s| s.kind == SymbolKind::Value)
                    else {
                        continue;
                    };
                    match symbols.resolve(sym) {
                        Some(Concrete::Value { literal }) => {
                            replaced.push_str(&content[last..span.start]);
                            replaced.push_str(literal);
                            last = span.end;
                            changed = true;
                        }
                        _ => report(word, &mut unknown),
                    }
                }
                if changed {
                    replaced.push_str(&content[last..]);
                    out.push_str(&quote_string(&replaced));
                } else {
                    out.push_str(tok.raw);
                }
            }
            Kind::Other => out.push_str(tok.raw),
        }
    }
    UnmaskResult { sql: out, unknown }
}

/// The inverse of [`unmask_sql`]: replace concrete identifiers and
/// literals known to `symbols` by their symbols.
///
/// Qualified `table.column` (or `alias.column`) references resolve through
/// the table; a bare column resolves when exactly one table mentioned in
/// the query, or failing that exactly one table overall, has it. String
/// literals and numbers equal to a masked literal become `V<i>`.
pub fn symbolize_sql(sql: &str, symbols: &SymbolTable) -> String {
    let toks = lex(sql);
    fn name<'t>(t: &'t Tok<'_>) -> Option<&'t str> {
        match t.kind {
            Kind::Word | Kind::Quoted(_) => Some(t.text.as_str()),
            _ => None,
        }
    }
    let table_of = |n: &str| {
        symbols
            .tables()
            .find(|(t, _)| t.eq_ignore_ascii_case(n))
            .map(|(t, _)| t.to_string())
    };

    // Significant (non-whitespace) token indices, for looking at neighbours.
    let sig: Vec<usize> = (0..toks.len())
        .filter(|&i| !toks[i].raw.trim().is_empty())
        .collect();
    let mut aliases: HashMap<String, String> = HashMap::new();
    let mut mentioned: Vec<String> = Vec::new();
    for (k, &i) in sig.iter().enumerate() {
        let Some(table) = name(&toks[i]).and_then(table_of) else {
            continue;
        };
        if !mentioned.contains(&table) {
            mentioned.push(table.clone());
        }
        let mut next = k + 1;
        if sig
            .get(next)
            .is_some_and(|&j| toks[j].kind == Kind::Word && toks[j].text.eq_ignore_ascii_case("as"))
        {
            next += 1;
        }
        if let Some(&j) = sig.get(next) {
            if let Some(alias) = name(&toks[j]) {
                let reserved_word = KEYWORDS.contains(&alias.to_ascii_lowercase().as_str());
                if !reserved_word && table_of(alias).is_none() && toks[j].kind != Kind::Other {
                    aliases.insert(alias.to_lowercase(), table.clone());
                }
            }
        }
    }
    let column_in = |table: &str, col: &str| {
        symbols
            .columns()
            .find(|(t, c, _)| t.eq_ignore_ascii_case(table) && c.eq_ignore_ascii_case(col))
            .map(|(_, _, s)| s)
    };
    let bare_column = |col: &str| -> Option<Symbol> {
        let unique = |hits: Vec<Symbol>| (hits.len() == 1).then(|| hits[0]);
        unique(mentioned.iter().filter_map(|t| column_in(t, col)).collect()).or_else(|| {
            unique(
                symbols
                    .columns()
                    .filter(|(_, c, _)| c.eq_ignore_ascii_case(col))
                    .map(|(_, _, s)| s)
                    .collect(),
            )
        })
    };
    let literal_symbol = |text: &str| symbols.value(text).map(|e| e.symbol);

    let emit = |tok: &Tok, sym: Symbol| match tok.kind {
        Kind::Quoted(d) => wrap_identifier(&sym.to_string(), d),
        _ => sym.to_string(),
    };

    let mut out = String::with_capacity(sql.len());
    for (k, &i) in sig.iter().enumerate() {
        let start_raw = if k == 0 { 0 } else { sig[k - 1] + 1 };
        for t in &toks[start_raw..i] {
            out.push_str(t.raw);
        }
        let tok = &toks[i];
        let prev_is_dot = k > 0 && toks[sig[k - 1]].raw == "." && sig[k - 1] + 1 == i;
        let next_is_dot = toks.get(i + 1).is_some_and(|t| t.raw == ".");
        let replaced = match tok.kind {
            Kind::Str => literal_symbol(&tok.text).map(|s| format!("'{s}'")),
            Kind::Word if tok.text.starts_with(|c: char| c.is_ascii_digit()) => {
                literal_symbol(&tok.text).map(|s| s.to_string())
            }
            Kind::Word | Kind::Quoted(_) => {
                let n = tok.text.as_str();
                if prev_is_dot && k >= 2 {
                    let qualifier = name(&toks[sig[k - 2]]).unwrap_or("");
                    let table = table_of(qualifier)
                        .or_else(|| aliases.get(&qualifier.to_lowercase()).cloned());
                    table.and_then(|t| column_in(&t, n)).map(|s| emit(tok, s))
                } else if let Some(t) = table_of(n) {
                    symbols.table_symbol(&t).map(|s| emit(tok, s))
                } else if next_is_dot || aliases.contains_key(&n.to_lowercase()) {
                    None
                } else {
                    bare_column(n).map(|s| emit(tok, s))
                }
            }
            Kind::Other => None,
        };
        match replaced {
            Some(r) => out.push_str(&r),
            None => out.push_str(tok.raw),
        }
    }
    let tail = sig.last().map_or(0, |&i| i + 1);
    for t in &toks[tail..] {
        out.push_str(t.raw);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Column, DatabaseSchema, Labels, PrivacyPolicy, Table};

    fn example() -> SymbolTable {
        let schema = DatabaseSchema::new(vec![
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
        .unwrap();
        let mut st = SymbolTable::fresh(&schema, &PrivacyPolicy::full(), &Labels::new());
        st.add_value(
            "New York Hospital",
            Some(("Hospital".into(), "name".into())),
        );
        st.add_value("positive", Some(("Patients".into(), "hiv_status".into())));
        st
    }

    #[test]
    fn lexer_reassembles() {
        let sql = "SELECT [a b], \"x\"\"y\", 'it''s', `q` FROM t WHERE v = 3.5 AND [unclosed";
        let toks = lex(sql);
        assert_eq!(toks.iter().map(|t| t.raw).collect::<String>(), sql);
        assert!(toks.iter().any(|t| t.kind == Kind::Str && t.text == "it's"));
        assert!(toks.iter().any(|t| t.kind == Kind::Word && t.text == "3.5"));
        assert!(toks
            .iter()
            .any(|t| t.kind == Kind::Quoted('"') && t.text == "x\"y"));
    }

    #[test]
    fn bracketed_and_bare_forms() {
        let st = example();
        let r = unmask_sql(
            "SELECT [T1].[C2] FROM [T1] WHERE [C3] = [V2] OR C3 = V2 OR C2 LIKE '%V1%'",
            &st,
        );
        assert_eq!(
            r.sql,
            "SELECT [Patients].[name] FROM [Patients] WHERE [hiv_status] = 'positive' OR hiv_status = 'positive' OR name LIKE '%New York Hospital%'"
        );
        assert!(r.is_clean());
    }

    #[test]
    fn unknown_symbols_are_reported_once() {
        let r = unmask_sql("SELECT C99, C99, 'V7' FROM T1", &example());
        assert_eq!(r.sql, "SELECT C99, C99, 'V7' FROM Patients");
        assert_eq!(r.unknown, ["C99", "V7"]);
        let plain = "SELECT count(*) FROM x WHERE CT10 = 1";
        assert_eq!(unmask_sql(plain, &example()).sql, plain);
    }

    #[test]
    fn literal_quotes_are_escaped_and_numbers_stay_bare() {
        let mut st = SymbolTable::default();
        st.add_value("O'Brien", None);
        st.add_value("42", None);
        let r = unmask_sql("SELECT * FROM t WHERE a = 'V1' AND b = V1 AND c = V2", &st);
        assert_eq!(
            r.sql,
            "SELECT * FROM t WHERE a = 'O''Brien' AND b = 'O''Brien' AND c = 42"
        );
        assert_eq!(
            symbolize_sql(&r.sql, &st),
            "SELECT * FROM t WHERE a = 'V1' AND b = 'V1' AND c = V2"
        );
    }

    #[test]
    fn symbolize_running_example() {
        let st = example();
        let concrete = "SELECT count(Patients.pid) FROM Patients JOIN Admissions ON Patients.pid = Admissions.pid JOIN Hospital ON Admissions.hid = Hospital.hid WHERE Hospital.name = 'New York Hospital' AND Patients.hiv_status = 'positive'";
        let abstract_sql = "SELECT count(T1.C1) FROM T1 JOIN T3 ON T1.C1 = T3.C10 JOIN T2 ON T3.C11 = T2.C6 WHERE T2.C7 = 'V1' AND T1.C3 = 'V2'";
        assert_eq!(symbolize_sql(concrete, &st), abstract_sql);
        assert_eq!(unmask_sql(abstract_sql, &st).sql, concrete);
    }

    #[test]
    fn symbolize_resolves_aliases_and_bare_columns() {
        let st = example();
        let sql = "SELECT a.name, diagnosis FROM Patients AS a JOIN Admissions b ON a.pid = b.pid WHERE date > '2020'";
        assert_eq!(
            symbolize_sql(sql, &st),
            "SELECT a.C2, C4 FROM T1 AS a JOIN T3 b ON a.C1 = b.C10 WHERE C12 > '2020'"
        );
        // `name` is ambiguous between Patients and Hospital with no table mentioned.
        assert_eq!(symbolize_sql("SELECT name", &st), "SELECT name");
    }
}
