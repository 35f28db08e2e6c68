use std::fmt::Write;

use crate::model::{Column, DatabaseSchema};

fn ident(name: &str, bracketed: bool) -> String {
    let inner = if bracketed {
        format!("[{name}]")
    } else {
        name.to_string()
    };
    format!("'{}'", inner.replace('\'', "''"))
}

fn is_plain_scalar(s: &str) -> bool {
    let first = s.chars().next();
    first.is_some_and(|c| c.is_ascii_alphabetic())
        && s.chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | ' ' | '(' | ')' | ','))
        && !s.ends_with(' ')
        && !matches!(
            s.to_ascii_lowercase().as_str(),
            "true" | "false" | "yes" | "no" | "on" | "off" | "null"
        )
}

fn sql_type(t: &str) -> String {
    if is_plain_scalar(t) {
        t.to_string()
    } else {
        format!("'{}'", t.replace('\'', "''"))
    }
}

fn write_column(out: &mut String, column: &Column, bracketed: bool) {
    let name = ident(&column.name, bracketed);
    if !column.is_primary_key && column.foreign_key.is_none() {
        let _ = writeln!(out, "    {name}: {}", sql_type(&column.sql_type));
        return;
    }
    let _ = writeln!(out, "    {name}:");
    if column.is_primary_key {
        out.push_str("        primary_key: true\n");
    }
    if let Some(fk) = &column.foreign_key {
        let target = if bracketed {
            format!("[{}].[{}]", fk.table, fk.column)
        } else {
            format!("{}.{}", fk.table, fk.column)
        };
        let _ = writeln!(out, "        foreign_key: '{}'", target.replace('\'', "''"));
    }
    let _ = writeln!(out, "        type: {}", sql_type(&column.sql_type));
}

/// Render `schema` in the prompt YAML layout: quoted table keys, 4-space
/// indented quoted column keys, and nested maps for key columns. With
/// `bracketed`, every identifier is wrapped as `[name]`.
pub fn serialize_schema(schema: &DatabaseSchema, bracketed: bool) -> String {
    let mut out = String::new();
    for table in schema.tables() {
        let _ = writeln!(out, "{}:", ident(&table.name, bracketed));
        for column in &table.columns {
            write_column(&mut out, column, bracketed);
        }
    }
    out
}
