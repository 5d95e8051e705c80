//! Canonical SQL text for syntax trees: uppercase keywords, single spaces,
//! and parentheses only where the tree has a `Paren` node or operator
//! precedence demands them.

use std::fmt::{self, Display, Formatter, Write as _};

use super::ast::*;
use super::lexer::{is_ident_char, is_ident_start, Keyword};

pub fn needs_quoting(name: &str) -> bool {
    let mut chars = name.chars();
    let Some(first) = chars.next() else {
        return true;
    };
    !is_ident_start(first) || !chars.all(is_ident_char) || Keyword::lookup(name).is_some()
}

impl Display for Ident {
    fn fmt(&self, f: &mut Formatter<'_>) -> fmt::Result {
        if self.quoted || needs_quoting(&self.value) {
            f.write_char('"')?;
            f.write_str(&self.value.replace('"', "\"\""))?;
            f.write_char('"')
        } else {
            f.write_str(&self.value)
        }
    }
}

impl Display for ColumnRef {
    fn fmt(&self, f: &mut Formatter<'_>) -> fmt::Result {
        if let Some(q) = &self.qualifier {
            write!(f, "{q}.")?;
        }
        write!(f, "{}", self.name)
    }
}

fn precedence(expr: &Expr) -> u8 {
    match expr {
        Expr::Binary { op, .. } => op.precedence(),
        Expr::Unary {
            op: UnaryOp::Not, ..
        } => 3,
        Expr::IsNull { .. } => 4,
        Expr::Unary {
            op: UnaryOp::Neg, ..
        } => 7,
        _ => 8,
    }
}

struct Operand<'a> {
    expr: &'a Expr,
    parens: bool,
}

impl Display for Operand<'_> {
    fn fmt(&self, f: &mut Formatter<'_>) -> fmt::Result {
        if self.parens {
            write!(f, "({})", self.expr)
        } else {
            write!(f, "{}", self.expr)
        }
    }
}

fn write_list<T: Display>(f: &mut Formatter<'_>, items: &[T]) -> fmt::Result {
    for (i, item) in items.iter().enumerate() {
        if i > 0 {
            f.write_str(", ")?;
        }
        write!(f, "{item}")?;
    }
    Ok(())
}

fn write_string_literal(f: &mut Formatter<'_>, s: &str) -> fmt::Result {
    f.write_char('\'')?;
    f.write_str(&s.replace('\'', "''"))?;
    f.write_char('\'')
}

impl Display for Expr {
    fn fmt(&self, f: &mut Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Column(c) => write!(f, "{c}"),
            Expr::String(s) => write_string_literal(f, s),
            Expr::Number(n) => f.write_str(n),
            Expr::Bool(true) => f.write_str("TRUE"),
            Expr::Bool(false) => f.write_str("FALSE"),
            Expr::Null => f.write_str("NULL"),
            Expr::Binary { op, left, right } => {
                let p = op.precedence();
                let lp = precedence(left);
                let left = Operand {
                    expr: left,
                    parens: lp < p || (lp == p && op.is_comparison()),
                };
                let right = Operand {
                    expr: right,
                    parens: precedence(right) <= p,
                };
                write!(f, "{left} {} {right}", op.as_str())
            }
            Expr::Unary {
                op: UnaryOp::Not,
                operand,
            } => {
                let operand = Operand {
                    expr: operand,
                    parens: precedence(operand) < 3,
                };
                write!(f, "NOT {operand}")
            }
            Expr::Unary {
                op: UnaryOp::Neg,
                operand,
            } => {
                let text = Operand {
                    expr: operand,
                    parens: precedence(operand) < 7,
                }
                .to_string();
                if text.starts_with('-') {
                    write!(f, "- {text}")
                } else {
                    write!(f, "-{text}")
                }
            }
            Expr::IsNull { expr, negated } => {
                let operand = Operand {
                    expr,
                    parens: precedence(expr) <= 4,
                };
                let not = if *negated { "NOT " } else { "" };
                write!(f, "{operand} IS {not}NULL")
            }
            Expr::Function(call) => {
                write!(f, "{}(", call.name)?;
                if call.star {
                    f.write_char('*')?;
                } else {
                    write_list(f, &call.args)?;
                }
                f.write_char(')')
            }
            Expr::Subquery(q) => write!(f, "({q})"),
            Expr::List(items) => {
                f.write_char('(')?;
                write_list(f, items)?;
                f.write_char(')')
            }
            Expr::Paren(inner) => write!(f, "({inner})"),
        }
    }
}

impl Display for SelectItem {
    fn fmt(&self, f: &mut Formatter<'_>) -> fmt::Result {
        match self {
            SelectItem::Star => f.write_char('*'),
            SelectItem::QualifiedStar(q) => write!(f, "{q}.*"),
            SelectItem::Expr { expr, alias } => {
                write!(f, "{expr}")?;
                if let Some(a) = alias {
                    write!(f, " AS {a}")?;
                }
                Ok(())
            }
        }
    }
}

impl Display for TableSource {
    fn fmt(&self, f: &mut Formatter<'_>) -> fmt::Result {
        match self {
            TableSource::Named { name, alias } => {
                write!(f, "{name}")?;
                if let Some(a) = alias {
                    write!(f, " {a}")?;
                }
                Ok(())
            }
            TableSource::Derived { subquery, alias } => write!(f, "({subquery}) {alias}"),
        }
    }
}

impl Display for Join {
    fn fmt(&self, f: &mut Formatter<'_>) -> fmt::Result {
        let kw = match self.kind {
            JoinKind::Inner => "JOIN",
            JoinKind::Left => "LEFT JOIN",
            JoinKind::Right => "RIGHT JOIN",
            JoinKind::Cross => "CROSS JOIN",
        };
        write!(f, "{kw} {}", self.source)?;
        if let Some(on) = &self.on {
            write!(f, " ON {on}")?;
        }
        Ok(())
    }
}

impl Display for OrderItem {
    fn fmt(&self, f: &mut Formatter<'_>) -> fmt::Result {
        match &self.key {
            OrderKey::Expr(e) => write!(f, "{e}")?,
            OrderKey::Position(n) => write!(f, "{n}")?,
        }
        if self.direction == Direction::Desc {
            f.write_str(" DESC")?;
        }
        Ok(())
    }
}

impl Display for Query {
    fn fmt(&self, f: &mut Formatter<'_>) -> fmt::Result {
        f.write_str("SELECT ")?;
        if self.distinct {
            f.write_str("DISTINCT ")?;
        }
        write_list(f, &self.select)?;
        write!(f, " FROM {}", self.from)?;
        for join in &self.joins {
            write!(f, " {join}")?;
        }
        if let Some(w) = &self.where_clause {
            write!(f, " WHERE {w}")?;
        }
        if !self.group_by.is_empty() {
            f.write_str(" GROUP BY ")?;
            write_list(f, &self.group_by)?;
        }
        if let Some(h) = &self.having {
            write!(f, " HAVING {h}")?;
        }
        if !self.order_by.is_empty() {
            f.write_str(" ORDER BY ")?;
            write_list(f, &self.order_by)?;
        }
        if let Some(n) = self.limit {
            write!(f, " LIMIT {n}")?;
        }
        Ok(())
    }
}
