//! The SELECT dialect: tokenizer, recursive-descent parser, canonical
//! printer and the identifier walk the rewriter builds on.
//!
//! The grammar is documented in `docs/grammar.ebnf`.

mod ast;
pub(crate) mod lexer;
mod parser;
mod printer;
mod visit;

use std::fmt;

pub use ast::*;
pub use parser::Parser;
pub use printer::needs_quoting;
pub use visit::{
    collect_identifiers, walk_expr, walk_query, Clause, ColumnOccurrence, IdentifierReport,
    Nesting, QueryVisitor, TableOccurrence,
};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub struct ParseError {
    /// Byte offset of the offending token.
    pub position: usize,
    pub message: String,
}

impl ParseError {
    pub fn new(position: usize, message: impl Into<String>) -> Self {
        Self {
            position,
            message: message.into(),
        }
    }
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "parse error at offset {}: {}", self.position, self.message)
    }
}

pub fn parse(sql: &str) -> Result<Query, ParseError> {
    Parser::new(sql)?.parse_statement()
}

pub fn print(q: &Query) -> String {
    q.to_string()
}
