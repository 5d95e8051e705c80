//! Canonical traversal order over a query and the identifier report built
//! on top of it.
//!
//! Every pass that pairs up column occurrences (the identifier report, the
//! resolver and the rewriter) goes through [`walk_query`], so the n-th
//! column visited is the same node for all of them. Order per query level:
//! select list, FROM source, each join (source, then ON), WHERE, GROUP BY,
//! HAVING, ORDER BY. Subqueries are visited in place.

use super::ast::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Clause {
    Select,
    From,
    Join,
    Where,
    GroupBy,
    Having,
    OrderBy,
}

/// How a query level was reached.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Nesting {
    Top,
    /// A subquery in FROM/JOIN position; it cannot see sibling sources.
    Derived,
    /// A subquery inside an expression; it may reference the enclosing level.
    Expression,
}

pub trait QueryVisitor {
    type Error;

    fn enter_query(&mut self, _q: &mut Query, _nesting: Nesting) -> Result<(), Self::Error> {
        Ok(())
    }

    fn leave_query(&mut self, _q: &mut Query) -> Result<(), Self::Error> {
        Ok(())
    }

    fn visit_table(
        &mut self,
        _name: &mut Ident,
        _alias: Option<&Ident>,
        _clause: Clause,
        _depth: usize,
    ) -> Result<(), Self::Error> {
        Ok(())
    }

    fn visit_column(
        &mut self,
        _col: &mut ColumnRef,
        _clause: Clause,
        _depth: usize,
    ) -> Result<(), Self::Error> {
        Ok(())
    }
}

pub fn walk_query<V: QueryVisitor>(
    q: &mut Query,
    v: &mut V,
    nesting: Nesting,
    depth: usize,
) -> Result<(), V::Error> {
    v.enter_query(q, nesting)?;
    for item in &mut q.select {
        if let SelectItem::Expr { expr, .. } = item {
            walk_expr(expr, v, Clause::Select, depth)?;
        }
    }
    walk_source(&mut q.from, v, Clause::From, depth)?;
    for join in &mut q.joins {
        walk_source(&mut join.source, v, Clause::Join, depth)?;
        if let Some(on) = &mut join.on {
            walk_expr(on, v, Clause::Join, depth)?;
        }
    }
    if let Some(w) = &mut q.where_clause {
        walk_expr(w, v, Clause::Where, depth)?;
    }
    for g in &mut q.group_by {
        walk_expr(g, v, Clause::GroupBy, depth)?;
    }
    if let Some(h) = &mut q.having {
        walk_expr(h, v, Clause::Having, depth)?;
    }
    for o in &mut q.order_by {
        if let OrderKey::Expr(e) = &mut o.key {
            walk_expr(e, v, Clause::OrderBy, depth)?;
        }
    }
    v.leave_query(q)
}

fn walk_source<V: QueryVisitor>(
    src: &mut TableSource,
    v: &mut V,
    clause: Clause,
    depth: usize,
) -> Result<(), V::Error> {
    match src {
        TableSource::Named { name, alias } => v.visit_table(name, alias.as_ref(), clause, depth),
        TableSource::Derived { subquery, .. } => {
            walk_query(subquery, v, Nesting::Derived, depth + 1)
        }
    }
}

pub fn walk_expr<V: QueryVisitor>(
    expr: &mut Expr,
    v: &mut V,
    clause: Clause,
    depth: usize,
) -> Result<(), V::Error> {
    match expr {
        Expr::Column(c) => v.visit_column(c, clause, depth),
        Expr::Binary { left, right, .. } => {
            walk_expr(left, v, clause, depth)?;
            walk_expr(right, v, clause, depth)
        }
        Expr::Unary { operand, .. } => walk_expr(operand, v, clause, depth),
        Expr::IsNull { expr, .. } | Expr::Paren(expr) => walk_expr(expr, v, clause, depth),
        Expr::Function(call) => {
            for a in &mut call.args {
                walk_expr(a, v, clause, depth)?;
            }
            Ok(())
        }
        Expr::List(items) => {
            for i in items {
                walk_expr(i, v, clause, depth)?;
            }
            Ok(())
        }
        Expr::Subquery(q) => walk_query(q, v, Nesting::Expression, depth + 1),
        Expr::String(_) | Expr::Number(_) | Expr::Bool(_) | Expr::Null => Ok(()),
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TableOccurrence {
    pub name: Ident,
    pub alias: Option<Ident>,
    pub clause: Clause,
    /// 0 for the outermost query, +1 per enclosing subquery.
    pub depth: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColumnOccurrence {
    pub qualifier: Option<Ident>,
    pub name: Ident,
    pub clause: Clause,
    pub depth: usize,
}

/// Every named table and column reference in a query, in traversal order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IdentifierReport {
    pub table_refs: Vec<TableOccurrence>,
    pub column_refs: Vec<ColumnOccurrence>,
}

impl QueryVisitor for IdentifierReport {
    type Error = std::convert::Infallible;

    fn visit_table(
        &mut self,
        name: &mut Ident,
        alias: Option<&Ident>,
        clause: Clause,
        depth: usize,
    ) -> Result<(), Self::Error> {
        self.table_refs.push(TableOccurrence {
            name: name.clone(),
            alias: alias.cloned(),
            clause,
            depth,
        });
        Ok(())
    }

    fn visit_column(
        &mut self,
        col: &mut ColumnRef,
        clause: Clause,
        depth: usize,
    ) -> Result<(), Self::Error> {
        self.column_refs.push(ColumnOccurrence {
            qualifier: col.qualifier.clone(),
            name: col.name.clone(),
            clause,
            depth,
        });
        Ok(())
    }
}

pub fn collect_identifiers(q: &Query) -> IdentifierReport {
    let mut report = IdentifierReport::default();
    let mut q = q.clone();
    match walk_query(&mut q, &mut report, Nesting::Top, 0) {
        Ok(()) => report,
        Err(never) => match never {},
    }
}
