//! Read-only execution against SQLite.

use std::fmt;
use std::path::Path;
use std::time::{Duration, Instant};

use rusqlite::types::ValueRef;
use rusqlite::{Connection, OpenFlags};
use serde::{Deserialize, Serialize};

/// A normalized result cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Null,
    Integer(i64),
    Real(f64),
    Text(String),
}

impl fmt::Display for Value {
    /// Python literal form, as the correction prompt shows results.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Null => f.write_str("None"),
            Value::Integer(i) => write!(f, "{i}"),
            Value::Real(r) => write!(f, "{r:?}"),
            Value::Text(s) => {
                let quote = if s.contains('\'') && !s.contains('"') {
                    '"'
                } else {
                    '\''
                };
                let escaped = s.replace('\\', "\\\\");
                let escaped = if quote == '\'' {
                    escaped.replace('\'', "\\'")
                } else {
                    escaped
                };
                write!(f, "{quote}{escaped}{quote}")
            }
        }
    }
}

pub type Row = Vec<Value>;

/// Result of running one statement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Outcome {
    Rows { rows: Vec<Row> },
    Error { message: String },
    Timeout,
}

impl Outcome {
    pub fn rows(&self) -> Option<&[Row]> {
        match self {
            Outcome::Rows { rows } => Some(rows),
            _ => None,
        }
    }

    pub fn is_ok(&self) -> bool {
        matches!(self, Outcome::Rows { .. })
    }

    /// `{exec_res}` text for the concrete correction prompt.
    pub fn feedback(&self) -> String {
        match self {
            Outcome::Rows { rows } => format_rows(rows),
            Outcome::Error { message } => message.clone(),
            Outcome::Timeout => "timeout: the query ran too long".to_string(),
        }
    }
}

/// Rows as a Python list of tuples: `[(2,)]`, `[('a', 1.5)]`.
pub fn format_rows(rows: &[Row]) -> String {
    let tuples: Vec<String> = rows
        .iter()
        .map(|row| {
            let cells: Vec<String> = row.iter().map(ToString::to_string).collect();
            if cells.len() == 1 {
                format!("({},)", cells[0])
            } else {
                format!("({})", cells.join(", "))
            }
        })
        .collect();
    format!("[{}]", tuples.join(", "))
}

fn first_keyword(sql: &str) -> String {
    sql.trim_start()
        .trim_start_matches('(')
        .chars()
        .take_while(|c| c.is_ascii_alphabetic())
        .collect::<String>()
        .to_ascii_lowercase()
}

/// Text after the first unquoted `;` holds another statement.
fn has_second_statement(sql: &str) -> bool {
    let mut quote: Option<char> = None;
    for (i, c) in sql.char_indices() {
        match quote {
            Some(q) if c == q || (q == '[' && c == ']') => quote = None,
            Some(_) => {}
            None if matches!(c, '\'' | '"' | '`' | '[') => quote = Some(c),
            None if c == ';' => {
                return sql[i + 1..].chars().any(|c| !c.is_whitespace() && c != ';')
            }
            None => {}
        }
    }
    false
}

fn cell(value: ValueRef<'_>) -> Value {
    match value {
        ValueRef::Null => Value::Null,
        ValueRef::Integer(i) => Value::Integer(i),
        ValueRef::Real(r) => Value::Real(r),
        ValueRef::Text(t) => Value::Text(String::from_utf8_lossy(t).into_owned()),
        ValueRef::Blob(b) => Value::Text(hex::encode(b)),
    }
}

/// Run `sql` on an open connection. Only a single read-only SELECT (or
/// WITH ... SELECT) statement is accepted; execution is interrupted after
/// `timeout`.
pub fn execute_on(conn: &Connection, sql: &str, timeout: Duration) -> Outcome {
    let err = |message: String| Outcome::Error { message };
    if !matches!(first_keyword(sql).as_str(), "select" | "with") {
        return err("only SELECT statements are executed".to_string());
    }
    if has_second_statement(sql) {
        return err("only a single statement is executed".to_string());
    }
    let started = Instant::now();
    conn.progress_handler(1_000, Some(move || started.elapsed() > timeout));
    let outcome = (|| {
        let mut stmt = match conn.prepare(sql) {
            Ok(s) => s,
            Err(e) => return err(e.to_string()),
        };
        if !stmt.readonly() {
            return err("only read-only statements are executed".to_string());
        }
        let width = stmt.column_count();
        let mut rows = match stmt.query([]) {
            Ok(r) => r,
            Err(e) => return err(e.to_string()),
        };
        let mut out = Vec::new();
        loop {
            match rows.next() {
                Ok(Some(row)) => {
                    let values = (0..width)
                        .map(|i| row.get_ref(i).map(cell).unwrap_or(Value::Null))
                        .collect();
                    out.push(values);
                }
                Ok(None) => return Outcome::Rows { rows: out },
                Err(rusqlite::Error::SqliteFailure(e, _))
                    if e.code == rusqlite::ErrorCode::OperationInterrupted =>
                {
                    return Outcome::Timeout
                }
                Err(e) => return err(e.to_string()),
            }
        }
    })();
    conn.progress_handler(0, None::<fn() -> bool>);
    outcome
}

/// Open `db` read-only.
pub fn open_read_only(db: &Path) -> rusqlite::Result<Connection> {
    Connection::open_with_flags(
        db,
        OpenFlags::SQLITE_OPEN_READ_ONLY | OpenFlags::SQLITE_OPEN_NO_MUTEX,
    )
}

/// [`execute_on`] over a fresh read-only connection to `db`.
pub fn execute_sql(sql: &str, db: &Path, timeout: Duration) -> Outcome {
    match open_read_only(db) {
        Ok(conn) => execute_on(&conn, sql, timeout),
        Err(e) => Outcome::Error {
            message: format!("cannot open {}: {e}", db.display()),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn db() -> tempfile::NamedTempFile {
        let file = tempfile::NamedTempFile::new().unwrap();
        let conn = Connection::open(file.path()).unwrap();
        conn.execute_batch(
            "CREATE TABLE t (a INTEGER, b TEXT, c REAL);
             INSERT INTO t VALUES (1, 'x', 1.5), (2, NULL, 2.0), (3, 'it''s', NULL);",
        )
        .unwrap();
        file
    }

    const T: Duration = Duration::from_secs(30);

    #[test]
    fn select_one() {
        let f = db();
        let out = execute_sql("SELECT 1", f.path(), T);
        assert_eq!(
            out,
            Outcome::Rows {
                rows: vec![vec![Value::Integer(1)]]
            }
        );
        assert_eq!(out.feedback(), "[(1,)]");
    }

    #[test]
    fn python_style_rows() {
        let f = db();
        let out = execute_sql("SELECT a, b, c FROM t ORDER BY a", f.path(), T);
        assert_eq!(
            out.feedback(),
            "[(1, 'x', 1.5), (2, None, 2.0), (3, \"it's\", None)]"
        );
        assert_eq!(
            execute_sql("SELECT a FROM t WHERE a > 9", f.path(), T).feedback(),
            "[]"
        );
    }

    #[test]
    fn errors_name_the_column() {
        let f = db();
        let out = execute_sql("SELECT nope FROM t", f.path(), T);
        assert!(
            matches!(&out, Outcome::Error { message } if message.contains("nope")),
            "{out:?}"
        );
    }

    #[test]
    fn writes_and_scripts_are_rejected() {
        let f = db();
        for sql in [
            "DELETE FROM t",
            "SELECT 1; SELECT 2",
            "WITH x AS (SELECT 1) DELETE FROM t",
        ] {
            assert!(!execute_sql(sql, f.path(), T).is_ok(), "{sql}");
        }
        let rows = execute_sql("SELECT COUNT(*) FROM t", f.path(), T);
        assert_eq!(rows.rows().unwrap(), [vec![Value::Integer(3)]]);
    }

    #[test]
    fn timeout_interrupts() {
        let f = db();
        let sql = "WITH RECURSIVE n(i) AS (SELECT 1 UNION ALL SELECT i + 1 FROM n) SELECT COUNT(*) FROM n";
        assert_eq!(
            execute_sql(sql, f.path(), Duration::from_millis(50)),
            Outcome::Timeout
        );
    }
}
