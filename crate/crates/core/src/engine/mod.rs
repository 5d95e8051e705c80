//! Member-side execution: the backend contract and the bundled in-memory
//! engine.
//!
//! [`open`] turns a mapping's `(kind, connection string)` into a
//! [`BackendHandle`]. The embedded kind reads a fixture script (see
//! `docs/FIXTURES.md`) into a [`Database`]; the external kind is a stub that
//! refuses every query.

mod exec;
mod fixture;

use std::fmt;
use std::path::Path;
use std::sync::Arc;

use thiserror::Error;

use crate::schema::{BackendKind, DataType};
use crate::sql::{self, Query};
use crate::value::{ResultColumn, ResultSet, Value};

pub use fixture::load_fixture;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BackendError {
    #[error("fixture not found: {0}")]
    FixtureNotFound(String),
    #[error("fixture syntax error at offset {position}: {message}")]
    FixtureSyntaxError { position: usize, message: String },
    #[error("value {value} does not fit column {table}.{column}")]
    TypeMismatch {
        table: String,
        column: String,
        value: String,
    },
    #[error("duplicate name `{0}`")]
    DuplicateName(String),
    #[error("unknown table `{0}`")]
    UnknownTable(String),
    #[error("unknown column `{0}`")]
    UnknownColumn(String),
    #[error("column `{0}` is ambiguous")]
    AmbiguousColumn(String),
    #[error("type error: {0}")]
    TypeError(String),
    #[error("{0}")]
    Unsupported(String),
    #[error("execution error: {0}")]
    Execution(String),
    #[error("external adapter not bundled")]
    ExternalNotBundled,
}

/// Column layout of one local table, as reported by a backend.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TableInfo {
    pub name: String,
    pub columns: Vec<ResultColumn>,
}

/// What a member needs from its DBMS.
pub trait Backend: Send + Sync {
    fn execute_select(&self, query: &Query) -> Result<ResultSet, BackendError>;

    /// Local tables and columns, for the setup wizard.
    fn tables(&self) -> Result<Vec<TableInfo>, BackendError>;
}

/// Shared, cheaply clonable handle to an open backend.
#[derive(Clone)]
pub struct BackendHandle(Arc<dyn Backend>);

impl BackendHandle {
    pub fn new(backend: impl Backend + 'static) -> Self {
        Self(Arc::new(backend))
    }

    pub fn execute_select(&self, query: &Query) -> Result<ResultSet, BackendError> {
        self.0.execute_select(query)
    }

    pub fn tables(&self) -> Result<Vec<TableInfo>, BackendError> {
        self.0.tables()
    }

    pub fn close(self) {}
}

impl fmt::Debug for BackendHandle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("BackendHandle")
    }
}

/// Error from the text entry point: the SQL did not parse, or the backend
/// refused it.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExecError {
    #[error(transparent)]
    Parse(#[from] sql::ParseError),
    #[error(transparent)]
    Backend(#[from] BackendError),
}

pub fn execute_sql(handle: &BackendHandle, text: &str) -> Result<ResultSet, ExecError> {
    Ok(handle.execute_select(&sql::parse(text)?)?)
}

pub const MEMORY: &str = ":memory:";

pub fn open(kind: BackendKind, connection_string: &str) -> Result<BackendHandle, BackendError> {
    match kind {
        BackendKind::Embedded => {
            let db = if connection_string == MEMORY {
                Database::new()
            } else {
                let path = Path::new(connection_string);
                let script = std::fs::read_to_string(path)
                    .map_err(|_| BackendError::FixtureNotFound(connection_string.to_string()))?;
                load_fixture(Database::new(), &script)?
            };
            Ok(BackendHandle::new(db))
        }
        BackendKind::External => Ok(BackendHandle::new(External {
            connection_string: connection_string.to_string(),
        })),
    }
}

struct External {
    #[allow(dead_code)]
    connection_string: String,
}

impl Backend for External {
    fn execute_select(&self, _query: &Query) -> Result<ResultSet, BackendError> {
        Err(BackendError::ExternalNotBundled)
    }

    fn tables(&self) -> Result<Vec<TableInfo>, BackendError> {
        Err(BackendError::ExternalNotBundled)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub columns: Vec<ResultColumn>,
    pub rows: Vec<Vec<Value>>,
}

impl Table {
    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns
            .iter()
            .position(|c| c.name.eq_ignore_ascii_case(name))
    }
}

/// The embedded store. Read-only once loaded.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Database {
    tables: Vec<Table>,
}

impl Database {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn tables(&self) -> &[Table] {
        &self.tables
    }

    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name.eq_ignore_ascii_case(name))
    }

    fn table_mut(&mut self, name: &str) -> Option<&mut Table> {
        self.tables
            .iter_mut()
            .find(|t| t.name.eq_ignore_ascii_case(name))
    }

    pub fn create_table(
        &mut self,
        name: &str,
        columns: Vec<ResultColumn>,
    ) -> Result<(), BackendError> {
        if self.table(name).is_some() {
            return Err(BackendError::DuplicateName(name.to_string()));
        }
        for (i, c) in columns.iter().enumerate() {
            if columns[..i].iter().any(|o| o.name.eq_ignore_ascii_case(&c.name)) {
                return Err(BackendError::DuplicateName(format!("{name}.{}", c.name)));
            }
        }
        self.tables.push(Table {
            name: name.to_string(),
            columns,
            rows: Vec::new(),
        });
        Ok(())
    }

    /// Appends a row after checking arity and types. Integers stored in a
    /// float column become floats.
    pub fn insert(&mut self, table: &str, row: Vec<Value>) -> Result<(), BackendError> {
        let t = self
            .table_mut(table)
            .ok_or_else(|| BackendError::UnknownTable(table.to_string()))?;
        if row.len() != t.columns.len() {
            return Err(BackendError::Execution(format!(
                "{} values for {} columns of {}",
                row.len(),
                t.columns.len(),
                t.name
            )));
        }
        let mut stored = Vec::with_capacity(row.len());
        for (v, c) in row.into_iter().zip(&t.columns) {
            if !v.conforms_to(c.datatype) {
                return Err(BackendError::TypeMismatch {
                    table: t.name.clone(),
                    column: c.name.clone(),
                    value: v.to_string(),
                });
            }
            stored.push(match (v, c.datatype) {
                (Value::Int(i), DataType::Float) => Value::Float(i as f64),
                (v, _) => v,
            });
        }
        t.rows.push(stored);
        Ok(())
    }
}

impl Backend for Database {
    fn execute_select(&self, query: &Query) -> Result<ResultSet, BackendError> {
        exec::execute(self, query)
    }

    fn tables(&self) -> Result<Vec<TableInfo>, BackendError> {
        Ok(self
            .tables
            .iter()
            .map(|t| TableInfo {
                name: t.name.clone(),
                columns: t.columns.clone(),
            })
            .collect())
    }
}
