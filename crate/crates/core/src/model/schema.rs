use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SchemaError {
    #[error("duplicate table name `{0}`")]
    DuplicateTable(String),
    #[error("duplicate column `{column}` in table `{table}`")]
    DuplicateColumn { table: String, column: String },
    #[error("foreign key {table}.{column} references missing column {target}")]
    DanglingForeignKey {
        table: String,
        column: String,
        target: ForeignKey,
    },
}

/// Target of a foreign key constraint.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ForeignKey {
    pub table: String,
    pub column: String,
}

impl ForeignKey {
    pub fn new(table: impl Into<String>, column: impl Into<String>) -> Self {
        Self {
            table: table.into(),
            column: column.into(),
        }
    }
}

impl fmt::Display for ForeignKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.table, self.column)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    pub sql_type: String,
    #[serde(default)]
    pub is_primary_key: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub foreign_key: Option<ForeignKey>,
}

impl Column {
    pub fn new(name: impl Into<String>, sql_type: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            sql_type: sql_type.into(),
            is_primary_key: false,
            foreign_key: None,
        }
    }

    pub fn primary_key(mut self) -> Self {
        self.is_primary_key = true;
        self
    }

    pub fn references(mut self, table: impl Into<String>, column: impl Into<String>) -> Self {
        self.foreign_key = Some(ForeignKey::new(table, column));
        self
    }

    /// Primary-key or foreign-key column.
    pub fn is_key(&self) -> bool {
        self.is_primary_key || self.foreign_key.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Table {
    pub name: String,
    pub columns: Vec<Column>,
}

impl Table {
    pub fn new(name: impl Into<String>, columns: Vec<Column>) -> Self {
        Self {
            name: name.into(),
            columns,
        }
    }

    pub fn column(&self, name: &str) -> Option<&Column> {
        self.columns.iter().find(|c| c.name == name).or_else(|| {
            self.columns
                .iter()
                .find(|c| c.name.eq_ignore_ascii_case(name))
        })
    }
}

/// Tables, columns and key constraints of a database, in declaration order.
///
/// Construction validates that table names are unique, column names are
/// unique within each table (both case-insensitively, as SQLite resolves
/// identifiers) and that every foreign key names an existing column.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(try_from = "Vec<Table>", into = "Vec<Table>")]
pub struct DatabaseSchema {
    tables: Vec<Table>,
}

impl TryFrom<Vec<Table>> for DatabaseSchema {
    type Error = SchemaError;

    fn try_from(tables: Vec<Table>) -> Result<Self, Self::Error> {
        Self::new(tables)
    }
}

impl From<DatabaseSchema> for Vec<Table> {
    fn from(schema: DatabaseSchema) -> Self {
        schema.tables
    }
}

impl DatabaseSchema {
    pub fn new(tables: Vec<Table>) -> Result<Self, SchemaError> {
        let mut seen = HashSet::new();
        for table in &tables {
            if !seen.insert(table.name.to_lowercase()) {
                return Err(SchemaError::DuplicateTable(table.name.clone()));
            }
            let mut cols = HashSet::new();
            for column in &table.columns {
                if !cols.insert(column.name.to_lowercase()) {
                    return Err(SchemaError::DuplicateColumn {
                        table: table.name.clone(),
                        column: column.name.clone(),
                    });
                }
            }
        }
        let schema = Self { tables };
        for table in &schema.tables {
            for column in &table.columns {
                if let Some(fk) = &column.foreign_key {
                    let exists = schema
                        .table(&fk.table)
                        .and_then(|t| t.column(&fk.column))
                        .is_some();
                    if !exists {
                        return Err(SchemaError::DanglingForeignKey {
                            table: table.name.clone(),
                            column: column.name.clone(),
                            target: fk.clone(),
                        });
                    }
                }
            }
        }
        Ok(schema)
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn tables(&self) -> &[Table] {
        &self.tables
    }

    pub fn is_empty(&self) -> bool {
        self.tables.is_empty()
    }

    /// Exact match first, then ASCII case-insensitive.
    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name).or_else(|| {
            self.tables
                .iter()
                .find(|t| t.name.eq_ignore_ascii_case(name))
        })
    }

    pub fn column(&self, table: &str, column: &str) -> Option<&Column> {
        self.table(table).and_then(|t| t.column(column))
    }

    /// Every `(table, column)` pair in declaration order.
    pub fn columns(&self) -> impl Iterator<Item = (&Table, &Column)> {
        self.tables
            .iter()
            .flat_map(|t| t.columns.iter().map(move |c| (t, c)))
    }

    pub fn column_count(&self) -> usize {
        self.tables.iter().map(|t| t.columns.len()).sum()
    }

    pub fn foreign_key_count(&self) -> usize {
        self.columns()
            .filter(|(_, c)| c.foreign_key.is_some())
            .count()
    }

    /// All table and column names, lowercased.
    pub fn identifiers(&self) -> HashSet<String> {
        let mut out = HashSet::new();
        for table in &self.tables {
            out.insert(table.name.to_lowercase());
            for column in &table.columns {
                out.insert(column.name.to_lowercase());
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_duplicate_table_case_insensitively() {
        let err = DatabaseSchema::new(vec![
            Table::new("Patients", vec![]),
            Table::new("patients", vec![]),
        ])
        .unwrap_err();
        assert_eq!(err, SchemaError::DuplicateTable("patients".into()));
    }

    #[test]
    fn rejects_duplicate_column() {
        let err = DatabaseSchema::new(vec![Table::new(
            "t",
            vec![Column::new("a", "text"), Column::new("A", "text")],
        )])
        .unwrap_err();
        assert!(matches!(err, SchemaError::DuplicateColumn { .. }));
    }

    #[test]
    fn rejects_dangling_foreign_key() {
        let err = DatabaseSchema::new(vec![Table::new(
            "a",
            vec![Column::new("b_id", "integer").references("b", "id")],
        )])
        .unwrap_err();
        assert!(matches!(err, SchemaError::DanglingForeignKey { .. }));
    }

    #[test]
    fn json_round_trip_revalidates() {
        let schema = DatabaseSchema::new(vec![
            Table::new("b", vec![Column::new("id", "integer").primary_key()]),
            Table::new(
                "a",
                vec![Column::new("b_id", "integer").references("b", "id")],
            ),
        ])
        .unwrap();
        let json = serde_json::to_string(&schema).unwrap();
        let back: DatabaseSchema = serde_json::from_str(&json).unwrap();
        assert_eq!(back, schema);
        assert!(serde_json::from_str::<DatabaseSchema>(
            r#"[{"name":"a","columns":[]},{"name":"a","columns":[]}]"#
        )
        .is_err());
    }
}
