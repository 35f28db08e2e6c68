use std::path::Path;

use rusqlite::{Connection, OpenFlags};
use serde_yaml::Value;
use thiserror::Error;

use crate::model::{Column, DatabaseSchema, ForeignKey, SchemaError, Table};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("malformed schema document: {0}")]
    Yaml(#[from] serde_yaml::Error),
    #[error("malformed schema document: {0}")]
    Layout(String),
    #[error("cannot read database: {0}")]
    Sqlite(#[from] rusqlite::Error),
    #[error(transparent)]
    Schema(#[from] SchemaError),
}

/// Read a schema from a SQLite file or, for `.yaml`/`.yml` paths, a schema
/// document.
pub fn ingest_schema(path: &Path) -> Result<DatabaseSchema, IngestError> {
    let is_yaml = path
        .extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("yaml") || e.eq_ignore_ascii_case("yml"));
    if is_yaml {
        let text = std::fs::read_to_string(path).map_err(|source| IngestError::Io {
            path: path.display().to_string(),
            source,
        })?;
        parse_schema_yaml(&text)
    } else {
        if !path.is_file() {
            return Err(IngestError::Io {
                path: path.display().to_string(),
                source: std::io::Error::new(std::io::ErrorKind::NotFound, "no such database file"),
            });
        }
        let conn = Connection::open_with_flags(path, OpenFlags::SQLITE_OPEN_READ_ONLY)?;
        schema_from_connection(&conn)
    }
}

fn scalar(v: &Value) -> Option<String> {
    match v {
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        Value::Bool(b) => Some(b.to_string()),
        _ => None,
    }
}

/// `[x]` → `x`, so bracketed prompt-form documents read back too.
fn unbracket(s: &str) -> &str {
    s.strip_prefix('[')
        .and_then(|r| r.strip_suffix(']'))
        .unwrap_or(s)
}

fn parse_foreign_key(text: &str) -> Option<ForeignKey> {
    let (t, c) = if let Some(rest) = text.strip_prefix('[') {
        let (t, c) = rest.split_once("].")?;
        (t, unbracket(c))
    } else {
        text.split_once('.')?
    };
    Some(ForeignKey::new(t, c))
}

/// Parse the YAML layout: table → column → type, or a nested map with
/// `type`, `primary_key` and `foreign_key: 'table.column'`.
pub fn parse_schema_yaml(text: &str) -> Result<DatabaseSchema, IngestError> {
    let doc: Value = serde_yaml::from_str(text)?;
    let top = match doc {
        Value::Null => return Ok(DatabaseSchema::empty()),
        Value::Mapping(m) => m,
        _ => {
            return Err(IngestError::Layout(
                "top level must map table names to columns".into(),
            ))
        }
    };
    let mut tables = Vec::with_capacity(top.len());
    for (tkey, tval) in top {
        let tname = scalar(&tkey)
            .ok_or_else(|| IngestError::Layout("table name must be a scalar".into()))?;
        let tname = unbracket(&tname).to_string();
        let mut columns = Vec::new();
        match tval {
            Value::Null => {}
            Value::Mapping(cols) => {
                for (ckey, cval) in cols {
                    let cname = scalar(&ckey).ok_or_else(|| {
                        IngestError::Layout(format!("column name in `{tname}` must be a scalar"))
                    })?;
                    columns.push(parse_column(&tname, unbracket(&cname), &cval)?);
                }
            }
            _ => {
                return Err(IngestError::Layout(format!(
                    "table `{tname}` must map column names to types"
                )))
            }
        }
        tables.push(Table::new(tname, columns));
    }
    Ok(DatabaseSchema::new(tables)?)
}

fn parse_column(table: &str, name: &str, value: &Value) -> Result<Column, IngestError> {
    match value {
        Value::Mapping(m) => {
            let mut col = Column::new(name, "");
            for (k, v) in m {
                match k.as_str() {
                    Some("type") => col.sql_type = scalar(v).unwrap_or_default(),
                    Some("primary_key") => col.is_primary_key = v.as_bool().unwrap_or(false),
                    Some("foreign_key") => {
                        let target = v.as_str().and_then(parse_foreign_key).ok_or_else(|| {
                            IngestError::Layout(format!(
                                "`{table}.{name}`: foreign_key must be 'table.column'"
                            ))
                        })?;
                        col.foreign_key = Some(target);
                    }
                    _ => {
                        return Err(IngestError::Layout(format!(
                            "`{table}.{name}`: unknown column attribute {k:?}"
                        )))
                    }
                }
            }
            Ok(col)
        }
        other => Ok(Column::new(name, scalar(other).unwrap_or_default())),
    }
}

/// Catalog-order schema of an open SQLite database. Foreign keys whose
/// target table or column does not exist are dropped.
pub fn schema_from_connection(conn: &Connection) -> Result<DatabaseSchema, IngestError> {
    let names: Vec<String> = conn
        .prepare("SELECT name FROM sqlite_master WHERE type = 'table' AND name NOT LIKE 'sqlite_%' ORDER BY rowid")?
        .query_map([], |r| r.get(0))?
        .collect::<Result<_, _>>()?;

    struct RawColumn {
        name: String,
        sql_type: String,
        pk: bool,
    }
    /// `(from column, referenced table, referenced column)`.
    type RawForeignKey = (String, String, Option<String>);
    let mut raw: Vec<(String, Vec<RawColumn>, Vec<RawForeignKey>)> = Vec::new();
    for name in &names {
        let cols = conn
            .prepare("SELECT name, type, pk FROM pragma_table_info(?1) ORDER BY cid")?
            .query_map([name], |r| {
                Ok(RawColumn {
                    name: r.get(0)?,
                    sql_type: r.get(1)?,
                    pk: r.get::<_, i64>(2)? > 0,
                })
            })?
            .collect::<Result<Vec<_>, _>>()?;
        let fks = conn
            .prepare("SELECT \"from\", \"table\", \"to\" FROM pragma_foreign_key_list(?1) ORDER BY id, seq")?
            .query_map([name], |r| Ok((r.get(0)?, r.get(1)?, r.get(2)?)))?
            .collect::<Result<Vec<_>, _>>()?;
        raw.push((name.clone(), cols, fks));
    }

    let find_table = |t: &str| raw.iter().find(|(n, _, _)| n.eq_ignore_ascii_case(t));
    let mut tables = Vec::with_capacity(raw.len());
    for (name, cols, fks) in &raw {
        let columns = cols
            .iter()
            .map(|c| {
                let mut col = Column::new(&c.name, &c.sql_type);
                col.is_primary_key = c.pk;
                col.foreign_key = fks
                    .iter()
                    .find(|(from, _, _)| from.eq_ignore_ascii_case(&c.name))
                    .and_then(|(_, target, to)| {
                        let (tname, tcols, _) = find_table(target)?;
                        let tcol = match to {
                            Some(to) => tcols.iter().find(|x| x.name.eq_ignore_ascii_case(to))?,
                            None => tcols.iter().find(|x| x.pk)?,
                        };
                        Some(ForeignKey::new(tname, &tcol.name))
                    });
                col
            })
            .collect();
        tables.push(Table::new(name, columns));
    }
    Ok(DatabaseSchema::new(tables)?)
}
