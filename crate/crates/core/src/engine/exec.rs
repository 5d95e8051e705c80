//! Compiles a query AST against a [`Database`] into a plan with resolved
//! column slots and static types, then evaluates it with nested loops.
//!
//! Rows of a query level are the concatenation of its sources' columns.
//! A column slot is `(up, idx)`: `up` counts enclosing levels, `idx` is the
//! position in that level's row.

use std::borrow::Cow;
use std::cell::{OnceCell, RefCell};
use std::cmp::Ordering;
use std::collections::HashMap;

use crate::rewrite::expression_name;
use crate::schema::DataType;
use crate::sql::{
    BinaryOp, Direction, Expr, FunctionCall, JoinKind, OrderKey, Query, SelectItem, TableSource,
    UnaryOp,
};
use crate::value::{KeyValue, ResultColumn, ResultSet, Value};

use super::{fixture, BackendError, Database};

type Row = Vec<Value>;
/// `None` is the type of a bare NULL literal.
type Ty = Option<DataType>;

pub(super) fn execute(db: &Database, query: &Query) -> Result<ResultSet, BackendError> {
    let mut compiler = Compiler {
        db,
        levels: Vec::new(),
    };
    let plan = compiler.compile_query(query)?;
    let exec = Executor {
        db,
        warnings: RefCell::new(Vec::new()),
    };
    let rows = exec.run(&plan, &[])?.into_owned();
    Ok(ResultSet {
        columns: plan.columns.clone(),
        rows,
        warnings: exec.warnings.into_inner(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Family {
    Num,
    Text,
    Bool,
}

fn family(t: DataType) -> Family {
    match t {
        DataType::Int | DataType::Float => Family::Num,
        DataType::String | DataType::Date => Family::Text,
        DataType::Bool => Family::Bool,
    }
}

fn type_name(t: Ty) -> &'static str {
    t.map(DataType::as_str).unwrap_or("null")
}

/// Common type of two operands of the same family.
fn unify_types(a: Ty, b: Ty) -> Result<Ty, ()> {
    match (a, b) {
        (None, t) | (t, None) => Ok(t),
        (Some(x), Some(y)) if x == y => Ok(Some(x)),
        (Some(x), Some(y)) => match (family(x), family(y)) {
            (Family::Num, Family::Num) => Ok(Some(DataType::Float)),
            (Family::Text, Family::Text) => Ok(Some(DataType::String)),
            _ => Err(()),
        },
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum AggFunc {
    Count,
    Sum,
    Avg,
    Min,
    Max,
}

#[derive(Debug)]
struct AggPlan {
    func: AggFunc,
    /// `None` for `COUNT(*)`.
    arg: Option<CExpr>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ScalarFn {
    Upper,
    Lower,
    Length,
    Abs,
    Coalesce,
}

#[derive(Debug)]
enum CExpr {
    Const(Value),
    Col { up: usize, idx: usize },
    GroupKey(usize),
    Agg(usize),
    Arith { op: BinaryOp, l: Box<CExpr>, r: Box<CExpr> },
    Cmp { op: BinaryOp, l: Box<CExpr>, r: Box<CExpr> },
    And(Box<CExpr>, Box<CExpr>),
    Or(Box<CExpr>, Box<CExpr>),
    Not(Box<CExpr>),
    Neg(Box<CExpr>),
    Like { e: Box<CExpr>, pat: Box<CExpr> },
    IsNull { e: Box<CExpr>, negated: bool },
    InList { e: Box<CExpr>, items: Vec<CExpr> },
    InSubquery { e: Box<CExpr>, plan: Box<Plan> },
    Scalar(Box<Plan>),
    Func { f: ScalarFn, args: Vec<CExpr> },
}

#[derive(Debug)]
enum SourcePlan {
    Table(usize),
    Derived(Box<Plan>),
}

#[derive(Debug)]
enum OrderSrc {
    Output(usize),
    Expr(CExpr),
}

#[derive(Debug)]
struct Plan {
    sources: Vec<SourcePlan>,
    widths: Vec<usize>,
    /// Join kind and ON condition for sources 1..
    joins: Vec<(JoinKind, Option<CExpr>)>,
    filter: Option<CExpr>,
    grouped: bool,
    group_keys: Vec<CExpr>,
    aggs: Vec<AggPlan>,
    having: Option<CExpr>,
    outputs: Vec<CExpr>,
    columns: Vec<ResultColumn>,
    distinct: bool,
    order: Vec<(OrderSrc, Direction)>,
    limit: Option<u64>,
    /// References an enclosing level, so results cannot be cached.
    correlated: bool,
    cache: OnceCell<Vec<Row>>,
}

struct SourceInfo {
    name: String,
    columns: Vec<ResultColumn>,
    offset: usize,
}

struct Level {
    sources: Vec<SourceInfo>,
    /// Sources visible to column lookup; grows while compiling ON clauses.
    visible: usize,
    correlated: bool,
}

#[derive(Clone, Copy)]
enum Mode<'a> {
    Row,
    Grouped {
        group_by: &'a [Expr],
        keys: &'a [(Option<usize>, Ty)],
    },
}

struct Compiler<'d> {
    db: &'d Database,
    levels: Vec<Level>,
}

struct GroupCtx<'a> {
    keys: &'a [Value],
    aggs: &'a [Value],
}

fn type_error(msg: String) -> BackendError {
    BackendError::TypeError(msg)
}

impl Compiler<'_> {
    fn compile_query(&mut self, q: &Query) -> Result<Plan, BackendError> {
        let mut sources = Vec::new();
        let mut infos: Vec<SourceInfo> = Vec::new();
        let mut offset = 0;
        for src in std::iter::once(&q.from).chain(q.joins.iter().map(|j| &j.source)) {
            let (plan, name, columns) = match src {
                TableSource::Named { name, alias } => {
                    let idx = self
                        .db
                        .tables()
                        .iter()
                        .position(|t| t.name.eq_ignore_ascii_case(&name.value))
                        .ok_or_else(|| BackendError::UnknownTable(name.value.clone()))?;
                    let cols = self.db.tables()[idx].columns.clone();
                    let binding = alias.as_ref().unwrap_or(name).value.clone();
                    (SourcePlan::Table(idx), binding, cols)
                }
                TableSource::Derived { subquery, alias } => {
                    let plan = self.compile_query(subquery)?;
                    let cols = plan.columns.clone();
                    (SourcePlan::Derived(Box::new(plan)), alias.value.clone(), cols)
                }
            };
            if infos.iter().any(|i| i.name.eq_ignore_ascii_case(&name)) {
                return Err(BackendError::DuplicateName(name));
            }
            let width = columns.len();
            infos.push(SourceInfo {
                name,
                columns,
                offset,
            });
            offset += width;
            sources.push(plan);
        }
        let widths = infos.iter().map(|i| i.columns.len()).collect();

        self.levels.push(Level {
            sources: infos,
            visible: 1,
            correlated: false,
        });
        let result = self.compile_level(q, sources, widths);
        let level = self.levels.pop().expect("level pushed above");
        let mut plan = result?;
        plan.correlated = level.correlated;
        Ok(plan)
    }

    fn level(&self) -> &Level {
        self.levels.last().expect("inside a query level")
    }

    fn compile_level(
        &mut self,
        q: &Query,
        sources: Vec<SourcePlan>,
        widths: Vec<usize>,
    ) -> Result<Plan, BackendError> {
        let mut joins = Vec::new();
        for (i, j) in q.joins.iter().enumerate() {
            self.levels.last_mut().unwrap().visible = i + 2;
            let on = match &j.on {
                Some(e) => Some(self.compile_predicate(e, Mode::Row, "ON")?),
                None => None,
            };
            joins.push((j.kind, on));
        }
        let total = self.level().sources.len();
        self.levels.last_mut().unwrap().visible = total;

        let filter = match &q.where_clause {
            Some(e) => Some(self.compile_predicate(e, Mode::Row, "WHERE")?),
            None => None,
        };

        let grouped = q.is_grouped();
        let mut group_keys = Vec::new();
        let mut key_info = Vec::new();
        for g in &q.group_by {
            if g.contains_aggregate() {
                return Err(type_error("aggregate in GROUP BY".into()));
            }
            let (c, t) = self.compile_expr(g, Mode::Row, &mut Vec::new())?;
            let slot = match c {
                CExpr::Col { up: 0, idx } => Some(idx),
                _ => None,
            };
            key_info.push((slot, t));
            group_keys.push(c);
        }
        let mode = if grouped {
            Mode::Grouped {
                group_by: &q.group_by,
                keys: &key_info,
            }
        } else {
            Mode::Row
        };

        let mut aggs = Vec::new();
        let mut outputs = Vec::new();
        let mut columns = Vec::new();
        let mut output_exprs: Vec<Option<String>> = Vec::new();
        for item in &q.select {
            match item {
                SelectItem::Star | SelectItem::QualifiedStar(_) => {
                    if grouped {
                        return Err(type_error("`*` in a grouped query".into()));
                    }
                    let level = self.level();
                    let chosen: Vec<&SourceInfo> = match item {
                        SelectItem::QualifiedStar(qual) => vec![level
                            .sources
                            .iter()
                            .find(|s| qual.matches(&s.name))
                            .ok_or_else(|| BackendError::UnknownTable(qual.value.clone()))?],
                        _ => level.sources.iter().collect(),
                    };
                    for s in chosen {
                        for (i, c) in s.columns.iter().enumerate() {
                            outputs.push(CExpr::Col {
                                up: 0,
                                idx: s.offset + i,
                            });
                            columns.push(c.clone());
                            output_exprs.push(None);
                        }
                    }
                }
                SelectItem::Expr { expr, alias } => {
                    let (c, t) = self.compile_expr(expr, mode, &mut aggs)?;
                    let name = alias
                        .as_ref()
                        .map(|a| a.value.clone())
                        .unwrap_or_else(|| expression_name(expr));
                    outputs.push(c);
                    columns.push(ResultColumn::new(name, t.unwrap_or(DataType::String)));
                    output_exprs.push(Some(expr.to_string()));
                }
            }
        }

        let having = match &q.having {
            Some(e) => Some(self.compile_predicate_with(e, mode, &mut aggs, "HAVING")?),
            None => None,
        };

        let mut order = Vec::new();
        for item in &q.order_by {
            let src = match &item.key {
                OrderKey::Position(n) => {
                    let n = *n as usize;
                    if n == 0 || n > columns.len() {
                        return Err(BackendError::Execution(format!(
                            "ORDER BY position {n} is out of range"
                        )));
                    }
                    OrderSrc::Output(n - 1)
                }
                OrderKey::Expr(e) => {
                    let by_name = match e {
                        Expr::Column(c) if c.qualifier.is_none() => columns
                            .iter()
                            .position(|col| c.name.matches(&col.name)),
                        _ => None,
                    };
                    let text = e.to_string();
                    let by_text = || {
                        output_exprs
                            .iter()
                            .position(|o| o.as_deref() == Some(text.as_str()))
                    };
                    match by_name.or_else(by_text) {
                        Some(i) => OrderSrc::Output(i),
                        None if q.distinct => {
                            return Err(BackendError::Execution(format!(
                                "ORDER BY `{text}` must appear in the select list of a DISTINCT query"
                            )))
                        }
                        None => OrderSrc::Expr(self.compile_expr(e, mode, &mut aggs)?.0),
                    }
                }
            };
            order.push((src, item.direction));
        }

        Ok(Plan {
            sources,
            widths,
            joins,
            filter,
            grouped,
            group_keys,
            aggs,
            having,
            outputs,
            columns,
            distinct: q.distinct,
            order,
            limit: q.limit,
            correlated: false,
            cache: OnceCell::new(),
        })
    }

    fn compile_predicate(&mut self, e: &Expr, mode: Mode, clause: &str) -> Result<CExpr, BackendError> {
        self.compile_predicate_with(e, mode, &mut Vec::new(), clause)
    }

    fn compile_predicate_with(
        &mut self,
        e: &Expr,
        mode: Mode,
        aggs: &mut Vec<AggPlan>,
        clause: &str,
    ) -> Result<CExpr, BackendError> {
        if matches!(mode, Mode::Row) && e.contains_aggregate() {
            return Err(type_error(format!("aggregate not allowed in {clause}")));
        }
        let (c, t) = self.compile_expr(e, mode, aggs)?;
        match t {
            None | Some(DataType::Bool) => Ok(c),
            Some(other) => Err(type_error(format!(
                "{clause} condition has type {other}, expected bool"
            ))),
        }
    }

    fn lookup_column(
        &mut self,
        qualifier: Option<&str>,
        name: &str,
    ) -> Result<(usize, usize, DataType), BackendError> {
        let depth = self.levels.len();
        for (up, level) in self.levels.iter().rev().enumerate() {
            let visible = &level.sources[..level.visible];
            let mut hits = Vec::new();
            for s in visible {
                if let Some(q) = qualifier {
                    if !s.name.eq_ignore_ascii_case(q) {
                        continue;
                    }
                }
                if let Some(i) = s.columns.iter().position(|c| c.name.eq_ignore_ascii_case(name)) {
                    hits.push((s.offset + i, s.columns[i].datatype));
                }
            }
            let qualifier_here =
                qualifier.is_some_and(|q| visible.iter().any(|s| s.name.eq_ignore_ascii_case(q)));
            match hits.as_slice() {
                [] if qualifier_here => {
                    return Err(BackendError::UnknownColumn(format!(
                        "{}.{name}",
                        qualifier.unwrap_or_default()
                    )))
                }
                [] => continue,
                [(idx, ty)] => {
                    let (idx, ty) = (*idx, *ty);
                    for l in &mut self.levels[depth - up..] {
                        l.correlated = true;
                    }
                    return Ok((up, idx, ty));
                }
                _ => return Err(BackendError::AmbiguousColumn(name.to_string())),
            }
        }
        match qualifier {
            Some(q) if !self.levels.iter().any(|l| l.sources.iter().any(|s| s.name.eq_ignore_ascii_case(q))) => {
                Err(BackendError::UnknownTable(q.to_string()))
            }
            Some(q) => Err(BackendError::UnknownColumn(format!("{q}.{name}"))),
            None => Err(BackendError::UnknownColumn(name.to_string())),
        }
    }

    fn compile_expr(
        &mut self,
        e: &Expr,
        mode: Mode,
        aggs: &mut Vec<AggPlan>,
    ) -> Result<(CExpr, Ty), BackendError> {
        if let Mode::Grouped { group_by, keys } = mode {
            if !matches!(e, Expr::Column(_) | Expr::Paren(_)) && !group_by.is_empty() {
                let text = e.to_string();
                if let Some(i) = group_by.iter().position(|g| g.to_string() == text) {
                    return Ok((CExpr::GroupKey(i), keys[i].1));
                }
            }
            if let Expr::Column(c) = e {
                let (up, idx, ty) =
                    self.lookup_column(c.qualifier.as_ref().map(|q| q.value.as_str()), &c.name.value)?;
                if up > 0 {
                    return Ok((CExpr::Col { up, idx }, Some(ty)));
                }
                return match keys.iter().position(|(slot, _)| *slot == Some(idx)) {
                    Some(i) => Ok((CExpr::GroupKey(i), keys[i].1)),
                    None => Err(type_error(format!(
                        "column `{c}` must appear in GROUP BY or inside an aggregate"
                    ))),
                };
            }
            if let Expr::Function(call) = e {
                if crate::sql::is_aggregate_name(&call.name.value) {
                    return self.compile_aggregate(call, aggs);
                }
            }
        }

        let b = Box::new;
        Ok(match e {
            Expr::Column(c) => {
                let (up, idx, ty) =
                    self.lookup_column(c.qualifier.as_ref().map(|q| q.value.as_str()), &c.name.value)?;
                (CExpr::Col { up, idx }, Some(ty))
            }
            Expr::String(s) => (CExpr::Const(Value::Text(s.clone())), Some(DataType::String)),
            Expr::Number(n) => match fixture::number(n, false) {
                v @ Value::Int(_) => (CExpr::Const(v), Some(DataType::Int)),
                v => (CExpr::Const(v), Some(DataType::Float)),
            },
            Expr::Bool(v) => (CExpr::Const(Value::Bool(*v)), Some(DataType::Bool)),
            Expr::Null => (CExpr::Const(Value::Null), None),
            Expr::Paren(inner) => self.compile_expr(inner, mode, aggs)?,
            Expr::Binary { op, left, right } => {
                let (l, lt) = self.compile_expr(left, mode, aggs)?;
                if *op == BinaryOp::In {
                    return self.compile_in(l, lt, right, mode, aggs);
                }
                let (r, rt) = self.compile_expr(right, mode, aggs)?;
                let mismatch = || {
                    type_error(format!(
                        "operator {} between {} and {}",
                        op.as_str(),
                        type_name(lt),
                        type_name(rt)
                    ))
                };
                match op {
                    BinaryOp::And | BinaryOp::Or => {
                        for t in [lt, rt] {
                            if !matches!(t, None | Some(DataType::Bool)) {
                                return Err(mismatch());
                            }
                        }
                        let c = if *op == BinaryOp::And {
                            CExpr::And(b(l), b(r))
                        } else {
                            CExpr::Or(b(l), b(r))
                        };
                        (c, Some(DataType::Bool))
                    }
                    BinaryOp::Plus | BinaryOp::Minus | BinaryOp::Multiply | BinaryOp::Divide => {
                        for t in [lt, rt] {
                            if !t.is_none_or(|t| family(t) == Family::Num) {
                                return Err(mismatch());
                            }
                        }
                        let t = if *op == BinaryOp::Divide
                            || lt == Some(DataType::Float)
                            || rt == Some(DataType::Float)
                        {
                            DataType::Float
                        } else {
                            DataType::Int
                        };
                        (CExpr::Arith { op: *op, l: b(l), r: b(r) }, Some(t))
                    }
                    BinaryOp::Like => {
                        for t in [lt, rt] {
                            if !t.is_none_or(|t| family(t) == Family::Text) {
                                return Err(mismatch());
                            }
                        }
                        (CExpr::Like { e: b(l), pat: b(r) }, Some(DataType::Bool))
                    }
                    _ => {
                        unify_types(lt, rt).map_err(|_| mismatch())?;
                        (CExpr::Cmp { op: *op, l: b(l), r: b(r) }, Some(DataType::Bool))
                    }
                }
            }
            Expr::Unary { op, operand } => {
                let (c, t) = self.compile_expr(operand, mode, aggs)?;
                match op {
                    UnaryOp::Not if matches!(t, None | Some(DataType::Bool)) => {
                        (CExpr::Not(b(c)), Some(DataType::Bool))
                    }
                    UnaryOp::Neg if t.is_none_or(|t| family(t) == Family::Num) => {
                        (CExpr::Neg(b(c)), t)
                    }
                    _ => {
                        return Err(type_error(format!(
                            "unary operator on {}",
                            type_name(t)
                        )))
                    }
                }
            }
            Expr::IsNull { expr, negated } => {
                let (c, _) = self.compile_expr(expr, mode, aggs)?;
                (
                    CExpr::IsNull {
                        e: b(c),
                        negated: *negated,
                    },
                    Some(DataType::Bool),
                )
            }
            Expr::Function(call) => {
                if crate::sql::is_aggregate_name(&call.name.value) {
                    return Err(type_error(format!(
                        "aggregate {} not allowed here",
                        call.name.value
                    )));
                }
                self.compile_function(call, mode, aggs)?
            }
            Expr::Subquery(q) => {
                let plan = self.compile_query(q)?;
                if plan.columns.len() != 1 {
                    return Err(type_error("scalar subquery must return one column".into()));
                }
                let t = plan.columns[0].datatype;
                (CExpr::Scalar(Box::new(plan)), Some(t))
            }
            Expr::List(_) => return Err(type_error("value list outside IN".into())),
        })
    }

    fn compile_in(
        &mut self,
        l: CExpr,
        lt: Ty,
        right: &Expr,
        mode: Mode,
        aggs: &mut Vec<AggPlan>,
    ) -> Result<(CExpr, Ty), BackendError> {
        let check = |t: Ty| {
            unify_types(lt, t).map_err(|_| {
                type_error(format!("IN between {} and {}", type_name(lt), type_name(t)))
            })
        };
        let c = match right {
            Expr::List(items) => {
                let mut compiled = Vec::new();
                for item in items {
                    let (c, t) = self.compile_expr(item, mode, aggs)?;
                    check(t)?;
                    compiled.push(c);
                }
                CExpr::InList {
                    e: Box::new(l),
                    items: compiled,
                }
            }
            Expr::Subquery(q) => {
                let plan = self.compile_query(q)?;
                if plan.columns.len() != 1 {
                    return Err(type_error("IN subquery must return one column".into()));
                }
                check(Some(plan.columns[0].datatype))?;
                CExpr::InSubquery {
                    e: Box::new(l),
                    plan: Box::new(plan),
                }
            }
            other => return Err(type_error(format!("IN expects a list, found {other}"))),
        };
        Ok((c, Some(DataType::Bool)))
    }

    fn compile_aggregate(
        &mut self,
        call: &FunctionCall,
        aggs: &mut Vec<AggPlan>,
    ) -> Result<(CExpr, Ty), BackendError> {
        let func = match call.name.value.to_ascii_uppercase().as_str() {
            "COUNT" => AggFunc::Count,
            "SUM" => AggFunc::Sum,
            "AVG" => AggFunc::Avg,
            "MIN" => AggFunc::Min,
            _ => AggFunc::Max,
        };
        let (arg, ty) = if call.star {
            if func != AggFunc::Count {
                return Err(type_error(format!("{}(*) is not allowed", call.name.value)));
            }
            (None, Some(DataType::Int))
        } else {
            let [arg] = call.args.as_slice() else {
                return Err(type_error(format!(
                    "{} takes one argument",
                    call.name.value
                )));
            };
            if arg.contains_aggregate() {
                return Err(type_error("nested aggregate".into()));
            }
            let (c, t) = self.compile_expr(arg, Mode::Row, &mut Vec::new())?;
            let numeric = t.is_none_or(|t| family(t) == Family::Num);
            let ty = match func {
                AggFunc::Count => Some(DataType::Int),
                AggFunc::Avg if numeric => Some(DataType::Float),
                AggFunc::Sum if numeric => t,
                AggFunc::Min | AggFunc::Max => t,
                _ => {
                    return Err(type_error(format!(
                        "{} of {}",
                        call.name.value,
                        type_name(t)
                    )))
                }
            };
            (Some(c), ty)
        };
        aggs.push(AggPlan { func, arg });
        Ok((CExpr::Agg(aggs.len() - 1), ty))
    }

    fn compile_function(
        &mut self,
        call: &FunctionCall,
        mode: Mode,
        aggs: &mut Vec<AggPlan>,
    ) -> Result<(CExpr, Ty), BackendError> {
        let name = call.name.value.to_ascii_uppercase();
        let f = match name.as_str() {
            "UPPER" => ScalarFn::Upper,
            "LOWER" => ScalarFn::Lower,
            "LENGTH" => ScalarFn::Length,
            "ABS" => ScalarFn::Abs,
            "COALESCE" => ScalarFn::Coalesce,
            _ => {
                return Err(BackendError::Unsupported(format!(
                    "unknown function {}",
                    call.name.value
                )))
            }
        };
        if call.star {
            return Err(type_error(format!("{name}(*) is not allowed")));
        }
        let mut args = Vec::new();
        let mut types = Vec::new();
        for a in &call.args {
            let (c, t) = self.compile_expr(a, mode, aggs)?;
            args.push(c);
            types.push(t);
        }
        let bad = || type_error(format!("bad arguments to {name}"));
        let ty = match f {
            ScalarFn::Coalesce => {
                let mut t = None;
                for a in &types {
                    t = unify_types(t, *a).map_err(|_| bad())?;
                }
                if types.is_empty() {
                    return Err(bad());
                }
                t
            }
            _ => {
                let [t] = types.as_slice() else {
                    return Err(bad());
                };
                let want = if f == ScalarFn::Abs {
                    Family::Num
                } else {
                    Family::Text
                };
                if !t.is_none_or(|t| family(t) == want) {
                    return Err(bad());
                }
                match f {
                    ScalarFn::Length => Some(DataType::Int),
                    ScalarFn::Abs => *t,
                    _ => Some(DataType::String),
                }
            }
        };
        Ok((CExpr::Func { f, args }, ty))
    }
}

struct Executor<'d> {
    db: &'d Database,
    warnings: RefCell<Vec<String>>,
}

fn truth(v: &Value) -> Option<bool> {
    match v {
        Value::Bool(b) => Some(*b),
        _ => None,
    }
}

fn from_truth(t: Option<bool>) -> Value {
    t.map(Value::Bool).unwrap_or(Value::Null)
}

/// SQL comparison: `None` when either side is NULL.
fn compare(a: &Value, b: &Value) -> Option<Ordering> {
    if a.is_null() || b.is_null() {
        return None;
    }
    Some(a.total_cmp(b))
}

fn like(text: &str, pattern: &str) -> bool {
    let t: Vec<char> = text.chars().collect();
    let p: Vec<char> = pattern.chars().collect();
    // Classic two-pointer wildcard match with backtracking to the last `%`.
    let (mut ti, mut pi) = (0, 0);
    let mut star: Option<(usize, usize)> = None;
    while ti < t.len() {
        if pi < p.len() && (p[pi] == '_' || (p[pi] != '%' && p[pi] == t[ti])) {
            ti += 1;
            pi += 1;
        } else if pi < p.len() && p[pi] == '%' {
            star = Some((pi, ti));
            pi += 1;
        } else if let Some((sp, st)) = star {
            pi = sp + 1;
            ti = st + 1;
            star = Some((sp, st + 1));
        } else {
            return false;
        }
    }
    p[pi..].iter().all(|&c| c == '%')
}

fn overflow() -> BackendError {
    BackendError::Execution("integer overflow".into())
}

impl<'d> Executor<'d> {
    fn warn(&self, msg: &str) {
        let mut w = self.warnings.borrow_mut();
        if !w.iter().any(|m| m == msg) {
            w.push(msg.to_string());
        }
    }

    fn run<'p>(&self, plan: &'p Plan, outer: &[&[Value]]) -> Result<Cow<'p, [Row]>, BackendError> {
        if !plan.correlated {
            if let Some(rows) = plan.cache.get() {
                return Ok(Cow::Borrowed(rows));
            }
            let rows = self.run_uncached(plan, outer)?;
            let _ = plan.cache.set(rows);
            return Ok(Cow::Borrowed(plan.cache.get().expect("just set")));
        }
        Ok(Cow::Owned(self.run_uncached(plan, outer)?))
    }

    fn source_rows<'a>(
        &'a self,
        src: &'a SourcePlan,
        outer: &[&[Value]],
    ) -> Result<Cow<'a, [Row]>, BackendError> {
        match src {
            SourcePlan::Table(i) => Ok(Cow::Borrowed(&self.db.tables()[*i].rows)),
            SourcePlan::Derived(p) => self.run(p, outer),
        }
    }

    fn run_uncached(&self, plan: &Plan, outer: &[&[Value]]) -> Result<Vec<Row>, BackendError> {
        // FROM and joins.
        let mut rows: Vec<Row> = self.source_rows(&plan.sources[0], outer)?.into_owned();
        let mut width = plan.widths[0];
        for (i, (kind, on)) in plan.joins.iter().enumerate() {
            let right = self.source_rows(&plan.sources[i + 1], outer)?;
            let rw = plan.widths[i + 1];
            let mut joined = Vec::new();
            let mut right_matched = vec![false; right.len()];
            for l in &rows {
                let mut matched = false;
                for (ri, r) in right.iter().enumerate() {
                    let mut row = Vec::with_capacity(width + rw);
                    row.extend_from_slice(l);
                    row.extend_from_slice(r);
                    let keep = match on {
                        Some(c) => truth(&self.eval(c, &row, outer, None)?) == Some(true),
                        None => true,
                    };
                    if keep {
                        matched = true;
                        right_matched[ri] = true;
                        joined.push(row);
                    }
                }
                if !matched && *kind == JoinKind::Left {
                    let mut row = l.clone();
                    row.resize(width + rw, Value::Null);
                    joined.push(row);
                }
            }
            if *kind == JoinKind::Right {
                for (r, _) in right.iter().zip(&right_matched).filter(|(_, m)| !**m) {
                    let mut row = vec![Value::Null; width];
                    row.extend_from_slice(r);
                    joined.push(row);
                }
            }
            rows = joined;
            width += rw;
        }

        if let Some(f) = &plan.filter {
            let mut kept = Vec::with_capacity(rows.len());
            for row in rows {
                if truth(&self.eval(f, &row, outer, None)?) == Some(true) {
                    kept.push(row);
                }
            }
            rows = kept;
        }

        // Each produced row carries its output values and its sort keys.
        let mut produced: Vec<(Row, Row)> = Vec::new();
        if plan.grouped {
            let mut groups: Vec<(Row, Vec<Row>)> = Vec::new();
            let mut index: HashMap<Vec<KeyValue>, usize> = HashMap::new();
            for row in rows {
                let mut key = Vec::with_capacity(plan.group_keys.len());
                for k in &plan.group_keys {
                    key.push(self.eval(k, &row, outer, None)?);
                }
                let hk: Vec<KeyValue> = key.iter().cloned().map(KeyValue).collect();
                match index.get(&hk) {
                    Some(&g) => groups[g].1.push(row),
                    None => {
                        index.insert(hk, groups.len());
                        groups.push((key, vec![row]));
                    }
                }
            }
            if groups.is_empty() && plan.group_keys.is_empty() {
                groups.push((Vec::new(), Vec::new()));
            }
            for (keys, members) in groups {
                let aggs = self.aggregate(plan, &members, outer)?;
                let ctx = GroupCtx {
                    keys: &keys,
                    aggs: &aggs,
                };
                let rep = members
                    .first()
                    .cloned()
                    .unwrap_or_else(|| vec![Value::Null; width]);
                if let Some(h) = &plan.having {
                    if truth(&self.eval(h, &rep, outer, Some(&ctx))?) != Some(true) {
                        continue;
                    }
                }
                produced.push(self.project(plan, &rep, outer, Some(&ctx))?);
            }
        } else {
            for row in &rows {
                produced.push(self.project(plan, row, outer, None)?);
            }
        }

        if plan.distinct {
            let mut seen = std::collections::HashSet::new();
            produced.retain(|(out, _)| seen.insert(out.iter().cloned().map(KeyValue).collect::<Vec<_>>()));
        }

        if !plan.order.is_empty() {
            produced.sort_by(|(oa, ka), (ob, kb)| {
                for (i, (src, dir)) in plan.order.iter().enumerate() {
                    let (a, b) = match src {
                        OrderSrc::Output(j) => (&oa[*j], &ob[*j]),
                        OrderSrc::Expr(_) => (&ka[i], &kb[i]),
                    };
                    let ord = match (a.is_null(), b.is_null()) {
                        (true, true) => Ordering::Equal,
                        (true, false) => Ordering::Greater,
                        (false, true) => Ordering::Less,
                        _ if *dir == Direction::Desc => b.total_cmp(a),
                        _ => a.total_cmp(b),
                    };
                    if ord != Ordering::Equal {
                        return ord;
                    }
                }
                Ordering::Equal
            });
        }

        let mut out: Vec<Row> = produced.into_iter().map(|(o, _)| o).collect();
        if let Some(n) = plan.limit {
            out.truncate(usize::try_from(n).unwrap_or(usize::MAX));
        }
        Ok(out)
    }

    fn project(
        &self,
        plan: &Plan,
        row: &[Value],
        outer: &[&[Value]],
        group: Option<&GroupCtx>,
    ) -> Result<(Row, Row), BackendError> {
        let mut out = Vec::with_capacity(plan.outputs.len());
        for (c, col) in plan.outputs.iter().zip(&plan.columns) {
            let v = self.eval(c, row, outer, group)?;
            out.push(match (v, col.datatype) {
                (Value::Int(i), DataType::Float) => Value::Float(i as f64),
                (v, _) => v,
            });
        }
        let mut keys = Vec::with_capacity(plan.order.len());
        for (src, _) in &plan.order {
            keys.push(match src {
                OrderSrc::Output(_) => Value::Null,
                OrderSrc::Expr(c) => self.eval(c, row, outer, group)?,
            });
        }
        Ok((out, keys))
    }

    fn aggregate(
        &self,
        plan: &Plan,
        rows: &[Row],
        outer: &[&[Value]],
    ) -> Result<Vec<Value>, BackendError> {
        let mut results = Vec::with_capacity(plan.aggs.len());
        for agg in &plan.aggs {
            let Some(arg) = &agg.arg else {
                results.push(Value::Int(rows.len() as i64));
                continue;
            };
            let mut values = Vec::with_capacity(rows.len());
            for row in rows {
                let v = self.eval(arg, row, outer, None)?;
                if !v.is_null() {
                    values.push(v);
                }
            }
            results.push(match agg.func {
                AggFunc::Count => Value::Int(values.len() as i64),
                _ if values.is_empty() => Value::Null,
                AggFunc::Sum => sum(&values)?,
                AggFunc::Avg => {
                    let total: f64 = values.iter().filter_map(Value::as_f64).sum();
                    Value::Float(total / values.len() as f64)
                }
                AggFunc::Min => values
                    .into_iter()
                    .min_by(|a, b| a.total_cmp(b))
                    .unwrap_or(Value::Null),
                AggFunc::Max => values
                    .into_iter()
                    .rev()
                    .max_by(|a, b| a.total_cmp(b))
                    .unwrap_or(Value::Null),
            });
        }
        Ok(results)
    }

    fn eval(
        &self,
        e: &CExpr,
        row: &[Value],
        outer: &[&[Value]],
        group: Option<&GroupCtx>,
    ) -> Result<Value, BackendError> {
        let ev = |c: &CExpr| self.eval(c, row, outer, group);
        Ok(match e {
            CExpr::Const(v) => v.clone(),
            CExpr::Col { up: 0, idx } => row[*idx].clone(),
            CExpr::Col { up, idx } => outer[outer.len() - up][*idx].clone(),
            CExpr::GroupKey(i) => group.expect("grouped context").keys[*i].clone(),
            CExpr::Agg(i) => group.expect("grouped context").aggs[*i].clone(),
            CExpr::Arith { op, l, r } => self.arith(*op, ev(l)?, ev(r)?)?,
            CExpr::Cmp { op, l, r } => {
                let ord = compare(&ev(l)?, &ev(r)?);
                from_truth(ord.map(|o| match op {
                    BinaryOp::Eq => o == Ordering::Equal,
                    BinaryOp::NotEq => o != Ordering::Equal,
                    BinaryOp::Lt => o == Ordering::Less,
                    BinaryOp::LtEq => o != Ordering::Greater,
                    BinaryOp::Gt => o == Ordering::Greater,
                    _ => o != Ordering::Less,
                }))
            }
            CExpr::And(l, r) => {
                let a = truth(&ev(l)?);
                if a == Some(false) {
                    return Ok(Value::Bool(false));
                }
                match (a, truth(&ev(r)?)) {
                    (_, Some(false)) => Value::Bool(false),
                    (Some(true), Some(true)) => Value::Bool(true),
                    _ => Value::Null,
                }
            }
            CExpr::Or(l, r) => {
                let a = truth(&ev(l)?);
                if a == Some(true) {
                    return Ok(Value::Bool(true));
                }
                match (a, truth(&ev(r)?)) {
                    (_, Some(true)) => Value::Bool(true),
                    (Some(false), Some(false)) => Value::Bool(false),
                    _ => Value::Null,
                }
            }
            CExpr::Not(c) => from_truth(truth(&ev(c)?).map(|b| !b)),
            CExpr::Neg(c) => match ev(c)? {
                Value::Int(i) => Value::Int(i.checked_neg().ok_or_else(overflow)?),
                Value::Float(f) => Value::Float(-f),
                _ => Value::Null,
            },
            CExpr::Like { e, pat } => match (ev(e)?, ev(pat)?) {
                (Value::Text(t), Value::Text(p)) => Value::Bool(like(&t, &p)),
                _ => Value::Null,
            },
            CExpr::IsNull { e, negated } => Value::Bool(ev(e)?.is_null() != *negated),
            CExpr::InList { e, items } => {
                let v = ev(e)?;
                let mut candidates = Vec::with_capacity(items.len());
                for i in items {
                    candidates.push(ev(i)?);
                }
                in_set(&v, candidates.iter())
            }
            CExpr::InSubquery { e, plan } => {
                let v = ev(e)?;
                let stack = push(outer, row);
                let rows = self.run(plan, &stack)?;
                in_set(&v, rows.iter().map(|r| &r[0]))
            }
            CExpr::Scalar(plan) => {
                let stack = push(outer, row);
                let rows = self.run(plan, &stack)?;
                match rows.len() {
                    0 => Value::Null,
                    1 => rows[0][0].clone(),
                    _ => {
                        return Err(BackendError::Execution(
                            "scalar subquery returned more than one row".into(),
                        ))
                    }
                }
            }
            CExpr::Func { f, args } => {
                let mut vals = Vec::with_capacity(args.len());
                for a in args {
                    vals.push(ev(a)?);
                }
                scalar(*f, vals)
            }
        })
    }

    fn arith(&self, op: BinaryOp, a: Value, b: Value) -> Result<Value, BackendError> {
        if a.is_null() || b.is_null() {
            return Ok(Value::Null);
        }
        if op == BinaryOp::Divide {
            let (x, y) = (a.as_f64().unwrap_or(0.0), b.as_f64().unwrap_or(0.0));
            if y == 0.0 {
                self.warn("division by zero");
                return Ok(Value::Null);
            }
            return Ok(Value::Float(x / y));
        }
        if let (Value::Int(x), Value::Int(y)) = (&a, &b) {
            let r = match op {
                BinaryOp::Plus => x.checked_add(*y),
                BinaryOp::Minus => x.checked_sub(*y),
                _ => x.checked_mul(*y),
            };
            return r.map(Value::Int).ok_or_else(overflow);
        }
        let (x, y) = (a.as_f64().unwrap_or(0.0), b.as_f64().unwrap_or(0.0));
        Ok(Value::Float(match op {
            BinaryOp::Plus => x + y,
            BinaryOp::Minus => x - y,
            _ => x * y,
        }))
    }
}

fn push<'a>(outer: &[&'a [Value]], row: &'a [Value]) -> Vec<&'a [Value]> {
    let mut stack = outer.to_vec();
    stack.push(row);
    stack
}

fn in_set<'a>(v: &Value, candidates: impl Iterator<Item = &'a Value>) -> Value {
    if v.is_null() {
        return Value::Null;
    }
    let mut saw_null = false;
    for c in candidates {
        match compare(v, c) {
            Some(Ordering::Equal) => return Value::Bool(true),
            None => saw_null = true,
            _ => {}
        }
    }
    if saw_null {
        Value::Null
    } else {
        Value::Bool(false)
    }
}

fn sum(values: &[Value]) -> Result<Value, BackendError> {
    if values.iter().all(|v| matches!(v, Value::Int(_))) {
        let mut total: i64 = 0;
        for v in values {
            if let Value::Int(i) = v {
                total = total.checked_add(*i).ok_or_else(overflow)?;
            }
        }
        return Ok(Value::Int(total));
    }
    Ok(Value::Float(values.iter().filter_map(Value::as_f64).sum()))
}

fn scalar(f: ScalarFn, mut args: Vec<Value>) -> Value {
    if f == ScalarFn::Coalesce {
        return args.into_iter().find(|v| !v.is_null()).unwrap_or(Value::Null);
    }
    match (f, args.swap_remove(0)) {
        (ScalarFn::Upper, Value::Text(s)) => Value::Text(s.to_uppercase()),
        (ScalarFn::Lower, Value::Text(s)) => Value::Text(s.to_lowercase()),
        (ScalarFn::Length, Value::Text(s)) => Value::Int(s.chars().count() as i64),
        (ScalarFn::Abs, Value::Int(i)) => i.checked_abs().map(Value::Int).unwrap_or(Value::Null),
        (ScalarFn::Abs, Value::Float(x)) => Value::Float(x.abs()),
        _ => Value::Null,
    }
}
