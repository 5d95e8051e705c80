//! Center-to-member query translation.
//!
//! [`resolve`] binds every table and column reference of a center-schema
//! query to the [`VirtualSchema`]; [`rewrite`] then substitutes the
//! member's local names from a [`MemberMapping`]. The rewritten query keeps
//! the center vocabulary in its output: bare column items are aliased to
//! their center name, `*` is expanded into aliased center columns, and an
//! unaliased computed item whose text changed is aliased to its original
//! text. Every member therefore returns identically labelled columns.

use thiserror::Error;

use crate::schema::{MemberMapping, VirtualSchema};
use crate::sql::{
    self, walk_query, Clause, ColumnRef, Expr, Ident, Nesting, ParseError, Query, QueryVisitor,
    SelectItem, TableSource,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ResolveError {
    #[error("unknown table `{0}`")]
    UnknownTable(String),
    #[error("unknown column `{}`", qualified(.table, .column))]
    UnknownColumn {
        table: Option<String>,
        column: String,
    },
    #[error("column `{column}` is ambiguous (found in {})", .candidates.join(", "))]
    AmbiguousColumn {
        column: String,
        candidates: Vec<String>,
    },
    #[error("unknown table or alias `{0}`")]
    UnknownQualifier(String),
    #[error("table name `{0}` used more than once in the same FROM clause")]
    DuplicateSource(String),
}

fn qualified(table: &Option<String>, column: &str) -> String {
    match table {
        Some(t) => format!("{t}.{column}"),
        None => column.to_string(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RewriteError {
    #[error("mapping has no entry for center table `{0}`")]
    MappingIncompleteTable(String),
    #[error("mapping has no entry for center column `{table}.{column}`")]
    MappingIncompleteColumn { table: String, column: String },
}

/// Any failure along parse → resolve → rewrite.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RemapError {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Resolve(#[from] ResolveError),
    #[error(transparent)]
    Rewrite(#[from] RewriteError),
}

/// What a column occurrence refers to.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ColumnBinding {
    /// A center column. Names use the schema's spelling.
    Center {
        table: String,
        column: String,
        /// The reference is qualified by the bare table name (no alias), so
        /// the qualifier must follow the table rename.
        qualifier_is_table: bool,
    },
    /// An output column of a derived table.
    Derived { source: String, column: String },
    /// An ORDER BY reference to a select-list alias.
    OutputAlias(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SourceKind {
    /// Center table and its columns in schema order.
    Center { table: String, columns: Vec<String> },
    Derived { columns: Vec<String> },
}

/// One FROM/JOIN source of a query level.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScopeSource {
    pub binding_name: String,
    pub aliased: bool,
    pub kind: SourceKind,
}

impl ScopeSource {
    fn columns(&self) -> &[String] {
        match &self.kind {
            SourceKind::Center { columns, .. } | SourceKind::Derived { columns } => columns,
        }
    }

    fn find_column(&self, name: &str) -> Option<&str> {
        self.columns()
            .iter()
            .find(|c| c.eq_ignore_ascii_case(name))
            .map(String::as_str)
    }

    fn bind(&self, name: &str, qualifier_is_table: bool) -> Option<ColumnBinding> {
        let column = self.find_column(name)?.to_string();
        Some(match &self.kind {
            SourceKind::Center { table, .. } => ColumnBinding::Center {
                table: table.clone(),
                column,
                qualifier_is_table,
            },
            SourceKind::Derived { .. } => ColumnBinding::Derived {
                source: self.binding_name.clone(),
                column,
            },
        })
    }
}

/// A query whose references are all bound to the center schema.
///
/// `bindings` and `table_bindings` follow the canonical traversal order of
/// [`sql::walk_query`]; `scopes` holds one entry per query level in the
/// order the levels are entered.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedQuery {
    pub ast: Query,
    pub bindings: Vec<ColumnBinding>,
    pub table_bindings: Vec<String>,
    pub scopes: Vec<Vec<ScopeSource>>,
}

struct Level {
    sources: Vec<ScopeSource>,
    parent: Option<usize>,
    aliases: Vec<String>,
}

struct Resolver<'s> {
    schema: &'s VirtualSchema,
    levels: Vec<Level>,
    bindings: Vec<ColumnBinding>,
    table_bindings: Vec<String>,
    scopes: Vec<Vec<ScopeSource>>,
}

fn source_scope(
    schema: &VirtualSchema,
    src: &TableSource,
) -> Result<ScopeSource, ResolveError> {
    match src {
        TableSource::Named { name, alias } => {
            let table = schema
                .table(&name.value)
                .ok_or_else(|| ResolveError::UnknownTable(name.value.clone()))?;
            Ok(ScopeSource {
                binding_name: alias.as_ref().unwrap_or(name).value.clone(),
                aliased: alias.is_some(),
                kind: SourceKind::Center {
                    table: table.name.clone(),
                    columns: table.columns.iter().map(|c| c.name.clone()).collect(),
                },
            })
        }
        TableSource::Derived { subquery, alias } => Ok(ScopeSource {
            binding_name: alias.value.clone(),
            aliased: true,
            kind: SourceKind::Derived {
                columns: output_columns(schema, subquery)?,
            },
        }),
    }
}

fn level_sources(schema: &VirtualSchema, q: &Query) -> Result<Vec<ScopeSource>, ResolveError> {
    let mut sources: Vec<ScopeSource> = Vec::new();
    for src in std::iter::once(&q.from).chain(q.joins.iter().map(|j| &j.source)) {
        let s = source_scope(schema, src)?;
        if sources
            .iter()
            .any(|o| o.binding_name.eq_ignore_ascii_case(&s.binding_name))
        {
            return Err(ResolveError::DuplicateSource(s.binding_name));
        }
        sources.push(s);
    }
    Ok(sources)
}

/// Output column name of an unaliased select expression.
pub fn expression_name(expr: &Expr) -> String {
    match expr {
        Expr::Column(c) => c.name.value.clone(),
        other => other.to_string(),
    }
}

/// Names of the columns a center query produces.
pub fn output_columns(schema: &VirtualSchema, q: &Query) -> Result<Vec<String>, ResolveError> {
    let sources = level_sources(schema, q)?;
    let mut names = Vec::new();
    for item in &q.select {
        match item {
            SelectItem::Star => {
                for s in &sources {
                    names.extend(s.columns().iter().cloned());
                }
            }
            SelectItem::QualifiedStar(qual) => {
                let s = sources
                    .iter()
                    .find(|s| qual.matches(&s.binding_name))
                    .ok_or_else(|| ResolveError::UnknownQualifier(qual.value.clone()))?;
                names.extend(s.columns().iter().cloned());
            }
            SelectItem::Expr { alias: Some(a), .. } => names.push(a.value.clone()),
            SelectItem::Expr { expr, alias: None } => names.push(expression_name(expr)),
        }
    }
    Ok(names)
}

impl Resolver<'_> {
    fn chain(&self) -> impl Iterator<Item = &Level> {
        let mut next = self.levels.len().checked_sub(1);
        std::iter::from_fn(move || {
            let idx = next?;
            next = self.levels[idx].parent;
            Some(&self.levels[idx])
        })
    }
}

impl QueryVisitor for Resolver<'_> {
    type Error = ResolveError;

    fn enter_query(&mut self, q: &mut Query, nesting: Nesting) -> Result<(), ResolveError> {
        let sources = level_sources(self.schema, q)?;
        let current = self.levels.len().checked_sub(1);
        let parent = match nesting {
            Nesting::Top => None,
            Nesting::Derived => current.and_then(|c| self.levels[c].parent),
            Nesting::Expression => current,
        };
        for item in &q.select {
            if let SelectItem::QualifiedStar(qual) = item {
                if !sources.iter().any(|s| qual.matches(&s.binding_name)) {
                    return Err(ResolveError::UnknownQualifier(qual.value.clone()));
                }
            }
        }
        let aliases = q
            .select
            .iter()
            .filter_map(|item| match item {
                SelectItem::Expr { alias: Some(a), .. } => Some(a.value.clone()),
                _ => None,
            })
            .collect();
        self.scopes.push(sources.clone());
        self.levels.push(Level {
            sources,
            parent,
            aliases,
        });
        Ok(())
    }

    fn leave_query(&mut self, _q: &mut Query) -> Result<(), ResolveError> {
        self.levels.pop();
        Ok(())
    }

    fn visit_table(
        &mut self,
        name: &mut Ident,
        _alias: Option<&Ident>,
        _clause: Clause,
        _depth: usize,
    ) -> Result<(), ResolveError> {
        let table = self
            .schema
            .table(&name.value)
            .ok_or_else(|| ResolveError::UnknownTable(name.value.clone()))?;
        self.table_bindings.push(table.name.clone());
        Ok(())
    }

    fn visit_column(
        &mut self,
        col: &mut ColumnRef,
        clause: Clause,
        _depth: usize,
    ) -> Result<(), ResolveError> {
        let name = &col.name.value;
        let binding = if let Some(qual) = &col.qualifier {
            let source = self
                .chain()
                .find_map(|lvl| lvl.sources.iter().find(|s| qual.matches(&s.binding_name)))
                .ok_or_else(|| ResolveError::UnknownQualifier(qual.value.clone()))?;
            let is_table = !source.aliased && matches!(source.kind, SourceKind::Center { .. });
            source
                .bind(name, is_table)
                .ok_or_else(|| ResolveError::UnknownColumn {
                    table: Some(source.binding_name.clone()),
                    column: name.clone(),
                })?
        } else {
            let top = self.levels.last().expect("column outside a query level");
            if clause == Clause::OrderBy && top.aliases.iter().any(|a| a.eq_ignore_ascii_case(name))
            {
                ColumnBinding::OutputAlias(name.clone())
            } else {
                let mut found = None;
                for lvl in self.chain() {
                    let candidates: Vec<&ScopeSource> = lvl
                        .sources
                        .iter()
                        .filter(|s| s.find_column(name).is_some())
                        .collect();
                    match candidates.as_slice() {
                        [] => continue,
                        [one] => {
                            found = one.bind(name, false);
                            break;
                        }
                        many => {
                            return Err(ResolveError::AmbiguousColumn {
                                column: name.clone(),
                                candidates: many.iter().map(|s| s.binding_name.clone()).collect(),
                            })
                        }
                    }
                }
                found.ok_or_else(|| ResolveError::UnknownColumn {
                    table: None,
                    column: name.clone(),
                })?
            }
        };
        self.bindings.push(binding);
        Ok(())
    }
}

pub fn resolve(ast: &Query, schema: &VirtualSchema) -> Result<ResolvedQuery, ResolveError> {
    let mut resolver = Resolver {
        schema,
        levels: Vec::new(),
        bindings: Vec::new(),
        table_bindings: Vec::new(),
        scopes: Vec::new(),
    };
    let mut ast = ast.clone();
    walk_query(&mut ast, &mut resolver, Nesting::Top, 0)?;
    Ok(ResolvedQuery {
        ast,
        bindings: resolver.bindings,
        table_bindings: resolver.table_bindings,
        scopes: resolver.scopes,
    })
}

struct Rewriter<'a> {
    mapping: &'a MemberMapping,
    resolved: &'a ResolvedQuery,
    next_column: usize,
    next_table: usize,
    next_scope: usize,
    stack: Vec<(usize, Vec<SelectItem>)>,
}

impl Rewriter<'_> {
    fn grid_table(&self, center_table: &str) -> Result<&str, RewriteError> {
        self.mapping
            .table(center_table)
            .map(|t| t.grid_table.as_str())
            .ok_or_else(|| RewriteError::MappingIncompleteTable(center_table.to_string()))
    }

    fn grid_column(&self, table: &str, column: &str) -> Result<&str, RewriteError> {
        let tm = self
            .mapping
            .table(table)
            .ok_or_else(|| RewriteError::MappingIncompleteTable(table.to_string()))?;
        tm.column(column)
            .map(|c| c.grid_column.as_str())
            .ok_or_else(|| RewriteError::MappingIncompleteColumn {
                table: table.to_string(),
                column: column.to_string(),
            })
    }

    fn source_qualifier(&self, src: &ScopeSource) -> Result<Ident, RewriteError> {
        match &src.kind {
            SourceKind::Center { table, .. } if !src.aliased => {
                Ok(Ident::new(self.grid_table(table)?))
            }
            _ => Ok(Ident::new(src.binding_name.as_str())),
        }
    }

    fn expand(
        &self,
        src: &ScopeSource,
        qualify: bool,
        out: &mut Vec<SelectItem>,
    ) -> Result<(), RewriteError> {
        let qualifier = if qualify {
            Some(self.source_qualifier(src)?)
        } else {
            None
        };
        match &src.kind {
            SourceKind::Center { table, columns } => {
                for c in columns {
                    out.push(SelectItem::Expr {
                        expr: Expr::Column(ColumnRef {
                            qualifier: qualifier.clone(),
                            name: Ident::new(self.grid_column(table, c)?),
                        }),
                        alias: Some(Ident::new(c.as_str())),
                    });
                }
            }
            SourceKind::Derived { columns } => {
                for c in columns {
                    out.push(SelectItem::Expr {
                        expr: Expr::Column(ColumnRef {
                            qualifier: qualifier.clone(),
                            name: Ident::new(c.as_str()),
                        }),
                        alias: Some(Ident::new(c.as_str())),
                    });
                }
            }
        }
        Ok(())
    }
}

impl QueryVisitor for Rewriter<'_> {
    type Error = RewriteError;

    fn enter_query(&mut self, q: &mut Query, _nesting: Nesting) -> Result<(), RewriteError> {
        self.stack.push((self.next_scope, q.select.clone()));
        self.next_scope += 1;
        Ok(())
    }

    fn leave_query(&mut self, q: &mut Query) -> Result<(), RewriteError> {
        let (scope_idx, original) = self.stack.pop().expect("unbalanced query levels");
        let scope = &self.resolved.scopes[scope_idx];
        let mut select = Vec::with_capacity(q.select.len());
        for (item, orig) in std::mem::take(&mut q.select).into_iter().zip(original) {
            match (item, orig) {
                (SelectItem::Star, _) => {
                    let qualify = scope.len() > 1;
                    for src in scope {
                        self.expand(src, qualify, &mut select)?;
                    }
                }
                (SelectItem::QualifiedStar(qual), _) => {
                    let src = scope
                        .iter()
                        .find(|s| qual.matches(&s.binding_name))
                        .expect("qualifier checked during resolution");
                    self.expand(src, true, &mut select)?;
                }
                (
                    SelectItem::Expr { expr, alias: None },
                    SelectItem::Expr {
                        expr: orig_expr, ..
                    },
                ) => {
                    let alias = match &orig_expr {
                        Expr::Column(c) => Some(c.name.clone()),
                        other if other.to_string() != expr.to_string() => {
                            Some(Ident::new(other.to_string()))
                        }
                        _ => None,
                    };
                    select.push(SelectItem::Expr { expr, alias });
                }
                (item, _) => select.push(item),
            }
        }
        q.select = select;
        Ok(())
    }

    fn visit_table(
        &mut self,
        name: &mut Ident,
        _alias: Option<&Ident>,
        _clause: Clause,
        _depth: usize,
    ) -> Result<(), RewriteError> {
        let center = &self.resolved.table_bindings[self.next_table];
        self.next_table += 1;
        *name = Ident::new(self.grid_table(center)?);
        Ok(())
    }

    fn visit_column(
        &mut self,
        col: &mut ColumnRef,
        _clause: Clause,
        _depth: usize,
    ) -> Result<(), RewriteError> {
        let binding = &self.resolved.bindings[self.next_column];
        self.next_column += 1;
        if let ColumnBinding::Center {
            table,
            column,
            qualifier_is_table,
        } = binding
        {
            col.name = Ident::new(self.grid_column(table, column)?);
            if *qualifier_is_table {
                col.qualifier = Some(Ident::new(self.grid_table(table)?));
            }
        }
        Ok(())
    }
}

pub fn rewrite(resolved: &ResolvedQuery, mapping: &MemberMapping) -> Result<Query, RewriteError> {
    let mut rewriter = Rewriter {
        mapping,
        resolved,
        next_column: 0,
        next_table: 0,
        next_scope: 0,
        stack: Vec::new(),
    };
    let mut ast = resolved.ast.clone();
    walk_query(&mut ast, &mut rewriter, Nesting::Top, 0)?;
    Ok(ast)
}

/// Resolves and rewrites an already parsed center query.
pub fn rewrite_query(
    ast: &Query,
    schema: &VirtualSchema,
    mapping: &MemberMapping,
) -> Result<Query, RemapError> {
    let resolved = resolve(ast, schema)?;
    Ok(rewrite(&resolved, mapping)?)
}

/// Parses `sql`, rewrites it for the member described by `mapping` and
/// prints the result.
pub fn rewrite_sql(
    sql: &str,
    schema: &VirtualSchema,
    mapping: &MemberMapping,
) -> Result<String, RemapError> {
    let ast = sql::parse(sql)?;
    Ok(sql::print(&rewrite_query(&ast, schema, mapping)?))
}
