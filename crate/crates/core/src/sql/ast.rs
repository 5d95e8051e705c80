//! Syntax tree for the supported SELECT dialect.

/// An identifier as written. `quoted` records whether it was double-quoted
/// in the source; lookups ignore case either way.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Ident {
    pub value: String,
    pub quoted: bool,
}

impl Ident {
    pub fn new(value: impl Into<String>) -> Self {
        Self {
            value: value.into(),
            quoted: false,
        }
    }

    pub fn quoted(value: impl Into<String>) -> Self {
        Self {
            value: value.into(),
            quoted: true,
        }
    }

    pub fn matches(&self, name: &str) -> bool {
        self.value.eq_ignore_ascii_case(name)
    }
}

impl From<&str> for Ident {
    fn from(s: &str) -> Self {
        Ident::new(s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Query {
    pub distinct: bool,
    pub select: Vec<SelectItem>,
    pub from: TableSource,
    pub joins: Vec<Join>,
    pub where_clause: Option<Expr>,
    pub group_by: Vec<Expr>,
    pub having: Option<Expr>,
    pub order_by: Vec<OrderItem>,
    pub limit: Option<u64>,
}

impl Query {
    /// A bare `SELECT <items> FROM <table>` skeleton.
    pub fn simple(select: Vec<SelectItem>, table: &str) -> Self {
        Query {
            distinct: false,
            select,
            from: TableSource::Named {
                name: Ident::new(table),
                alias: None,
            },
            joins: Vec::new(),
            where_clause: None,
            group_by: Vec::new(),
            having: None,
            order_by: Vec::new(),
            limit: None,
        }
    }

    /// True when any select item contains an aggregate call outside a
    /// subquery.
    pub fn has_aggregate_in_select(&self) -> bool {
        self.select.iter().any(|item| match item {
            SelectItem::Expr { expr, .. } => expr.contains_aggregate(),
            _ => false,
        })
    }

    pub fn is_grouped(&self) -> bool {
        !self.group_by.is_empty()
            || self.has_aggregate_in_select()
            || self.having.is_some()
            || self.order_by.iter().any(|o| match &o.key {
                OrderKey::Expr(e) => e.contains_aggregate(),
                OrderKey::Position(_) => false,
            })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SelectItem {
    Star,
    QualifiedStar(Ident),
    Expr { expr: Expr, alias: Option<Ident> },
}

impl SelectItem {
    pub fn expr(expr: Expr) -> Self {
        SelectItem::Expr { expr, alias: None }
    }

    pub fn aliased(expr: Expr, alias: &str) -> Self {
        SelectItem::Expr {
            expr,
            alias: Some(Ident::new(alias)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TableSource {
    Named { name: Ident, alias: Option<Ident> },
    Derived { subquery: Box<Query>, alias: Ident },
}

impl TableSource {
    /// The name the rest of the query uses to refer to this source.
    pub fn binding_name(&self) -> &Ident {
        match self {
            TableSource::Named { name, alias } => alias.as_ref().unwrap_or(name),
            TableSource::Derived { alias, .. } => alias,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JoinKind {
    Inner,
    Left,
    Right,
    Cross,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Join {
    pub kind: JoinKind,
    pub source: TableSource,
    pub on: Option<Expr>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Direction {
    #[default]
    Asc,
    Desc,
}

#[derive(Debug, Clone, PartialEq)]
pub enum OrderKey {
    Expr(Expr),
    /// 1-based select-list position.
    Position(u64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrderItem {
    pub key: OrderKey,
    pub direction: Direction,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinaryOp {
    Eq,
    NotEq,
    Lt,
    LtEq,
    Gt,
    GtEq,
    Plus,
    Minus,
    Multiply,
    Divide,
    And,
    Or,
    Like,
    In,
}

impl BinaryOp {
    pub fn as_str(self) -> &'static str {
        match self {
            BinaryOp::Eq => "=",
            BinaryOp::NotEq => "<>",
            BinaryOp::Lt => "<",
            BinaryOp::LtEq => "<=",
            BinaryOp::Gt => ">",
            BinaryOp::GtEq => ">=",
            BinaryOp::Plus => "+",
            BinaryOp::Minus => "-",
            BinaryOp::Multiply => "*",
            BinaryOp::Divide => "/",
            BinaryOp::And => "AND",
            BinaryOp::Or => "OR",
            BinaryOp::Like => "LIKE",
            BinaryOp::In => "IN",
        }
    }

    pub fn precedence(self) -> u8 {
        match self {
            BinaryOp::Or => 1,
            BinaryOp::And => 2,
            BinaryOp::Eq
            | BinaryOp::NotEq
            | BinaryOp::Lt
            | BinaryOp::LtEq
            | BinaryOp::Gt
            | BinaryOp::GtEq
            | BinaryOp::Like
            | BinaryOp::In => 4,
            BinaryOp::Plus | BinaryOp::Minus => 5,
            BinaryOp::Multiply | BinaryOp::Divide => 6,
        }
    }

    pub fn is_comparison(self) -> bool {
        self.precedence() == 4
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UnaryOp {
    Not,
    Neg,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColumnRef {
    pub qualifier: Option<Ident>,
    pub name: Ident,
}

impl ColumnRef {
    pub fn new(name: &str) -> Self {
        Self {
            qualifier: None,
            name: Ident::new(name),
        }
    }

    pub fn qualified(qualifier: &str, name: &str) -> Self {
        Self {
            qualifier: Some(Ident::new(qualifier)),
            name: Ident::new(name),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FunctionCall {
    pub name: Ident,
    pub args: Vec<Expr>,
    /// `COUNT(*)`-style star argument.
    pub star: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Column(ColumnRef),
    String(String),
    /// Numeric literal text, kept verbatim.
    Number(String),
    Bool(bool),
    Null,
    Binary {
        op: BinaryOp,
        left: Box<Expr>,
        right: Box<Expr>,
    },
    Unary {
        op: UnaryOp,
        operand: Box<Expr>,
    },
    IsNull {
        expr: Box<Expr>,
        negated: bool,
    },
    Function(FunctionCall),
    Subquery(Box<Query>),
    List(Vec<Expr>),
    Paren(Box<Expr>),
}

pub const AGGREGATES: [&str; 5] = ["COUNT", "SUM", "AVG", "MIN", "MAX"];

pub fn is_aggregate_name(name: &str) -> bool {
    AGGREGATES.iter().any(|a| a.eq_ignore_ascii_case(name))
}

impl Expr {
    pub fn column(name: &str) -> Expr {
        Expr::Column(ColumnRef::new(name))
    }

    pub fn qualified(qualifier: &str, name: &str) -> Expr {
        Expr::Column(ColumnRef::qualified(qualifier, name))
    }

    pub fn binary(op: BinaryOp, left: Expr, right: Expr) -> Expr {
        Expr::Binary {
            op,
            left: Box::new(left),
            right: Box::new(right),
        }
    }

    pub fn number(text: &str) -> Expr {
        Expr::Number(text.to_string())
    }

    /// Aggregate calls at any depth, not descending into subqueries.
    pub fn contains_aggregate(&self) -> bool {
        match self {
            Expr::Function(f) => {
                is_aggregate_name(&f.name.value) || f.args.iter().any(Expr::contains_aggregate)
            }
            Expr::Binary { left, right, .. } => {
                left.contains_aggregate() || right.contains_aggregate()
            }
            Expr::Unary { operand, .. } => operand.contains_aggregate(),
            Expr::IsNull { expr, .. } | Expr::Paren(expr) => expr.contains_aggregate(),
            Expr::List(items) => items.iter().any(Expr::contains_aggregate),
            Expr::Column(_)
            | Expr::String(_)
            | Expr::Number(_)
            | Expr::Bool(_)
            | Expr::Null
            | Expr::Subquery(_) => false,
        }
    }
}
