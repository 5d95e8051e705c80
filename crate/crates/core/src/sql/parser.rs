use super::ast::*;
use super::lexer::{tokenize, Keyword, Token, TokenKind};
use super::ParseError;

/// Recursive-descent parser over a token vector.
pub struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

impl Parser {
    pub fn new(src: &str) -> Result<Self, ParseError> {
        Ok(Self {
            tokens: tokenize(src)?,
            pos: 0,
        })
    }

    pub fn from_tokens(tokens: Vec<Token>) -> Self {
        Self { tokens, pos: 0 }
    }

    /// Parses one SELECT statement with an optional trailing `;`.
    pub fn parse_statement(&mut self) -> Result<Query, ParseError> {
        if !matches!(self.peek(), TokenKind::Keyword(Keyword::Select)) {
            return Err(self.unexpected("SELECT"));
        }
        let query = self.parse_query()?;
        self.eat(&TokenKind::Semicolon);
        if !matches!(self.peek(), TokenKind::Eof) {
            return Err(self.unexpected("end of statement"));
        }
        Ok(query)
    }

    // -- token helpers ------------------------------------------------------

    pub fn peek(&self) -> &TokenKind {
        &self.tokens[self.pos].kind
    }

    fn peek_at(&self, n: usize) -> &TokenKind {
        let idx = (self.pos + n).min(self.tokens.len() - 1);
        &self.tokens[idx].kind
    }

    pub fn position(&self) -> usize {
        self.tokens[self.pos].pos
    }

    pub fn advance(&mut self) -> &Token {
        let tok = &self.tokens[self.pos];
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        tok
    }

    pub fn eat(&mut self, kind: &TokenKind) -> bool {
        if self.peek() == kind {
            self.advance();
            true
        } else {
            false
        }
    }

    pub fn eat_keyword(&mut self, kw: Keyword) -> bool {
        self.eat(&TokenKind::Keyword(kw))
    }

    pub fn expect(&mut self, kind: &TokenKind) -> Result<(), ParseError> {
        if self.eat(kind) {
            Ok(())
        } else {
            Err(self.unexpected(&kind.describe()))
        }
    }

    pub fn expect_keyword(&mut self, kw: Keyword) -> Result<(), ParseError> {
        self.expect(&TokenKind::Keyword(kw))
    }

    pub fn unexpected(&self, expected: &str) -> ParseError {
        ParseError::new(
            self.position(),
            format!("expected {expected}, found {}", self.peek().describe()),
        )
    }

    pub fn parse_ident(&mut self) -> Result<Ident, ParseError> {
        match self.peek().clone() {
            TokenKind::Ident { value, quoted } => {
                self.advance();
                Ok(Ident { value, quoted })
            }
            _ => Err(self.unexpected("identifier")),
        }
    }

    fn parse_optional_alias(&mut self) -> Result<Option<Ident>, ParseError> {
        if self.eat_keyword(Keyword::As) {
            return self.parse_ident().map(Some);
        }
        if matches!(self.peek(), TokenKind::Ident { .. }) {
            return self.parse_ident().map(Some);
        }
        Ok(None)
    }

    // -- statements ---------------------------------------------------------

    fn parse_query(&mut self) -> Result<Query, ParseError> {
        self.expect_keyword(Keyword::Select)?;
        let distinct = self.eat_keyword(Keyword::Distinct);

        let mut select = vec![self.parse_select_item()?];
        while self.eat(&TokenKind::Comma) {
            select.push(self.parse_select_item()?);
        }

        self.expect_keyword(Keyword::From)?;
        let from = self.parse_table_source()?;
        let joins = self.parse_joins()?;

        let where_clause = if self.eat_keyword(Keyword::Where) {
            Some(self.parse_expr()?)
        } else {
            None
        };

        let mut group_by = Vec::new();
        if self.eat_keyword(Keyword::Group) {
            self.expect_keyword(Keyword::By)?;
            group_by.push(self.parse_expr()?);
            while self.eat(&TokenKind::Comma) {
                group_by.push(self.parse_expr()?);
            }
        }

        let having_pos = self.position();
        let having = if self.eat_keyword(Keyword::Having) {
            Some(self.parse_expr()?)
        } else {
            None
        };

        let mut order_by = Vec::new();
        if self.eat_keyword(Keyword::Order) {
            self.expect_keyword(Keyword::By)?;
            order_by.push(self.parse_order_item()?);
            while self.eat(&TokenKind::Comma) {
                order_by.push(self.parse_order_item()?);
            }
        }

        let limit = if self.eat_keyword(Keyword::Limit) {
            let pos = self.position();
            match self.peek().clone() {
                TokenKind::Number(n) => {
                    self.advance();
                    Some(n.parse::<u64>().map_err(|_| {
                        ParseError::new(pos, "LIMIT expects a non-negative integer")
                    })?)
                }
                _ => return Err(self.unexpected("LIMIT count")),
            }
        } else {
            None
        };

        let query = Query {
            distinct,
            select,
            from,
            joins,
            where_clause,
            group_by,
            having,
            order_by,
            limit,
        };
        if query.having.is_some() && query.group_by.is_empty() && !query.has_aggregate_in_select() {
            return Err(ParseError::new(
                having_pos,
                "HAVING requires GROUP BY or an aggregate in the select list",
            ));
        }
        Ok(query)
    }

    fn parse_select_item(&mut self) -> Result<SelectItem, ParseError> {
        if self.eat(&TokenKind::Star) {
            return Ok(SelectItem::Star);
        }
        if matches!(self.peek(), TokenKind::Ident { .. })
            && self.peek_at(1) == &TokenKind::Dot
            && self.peek_at(2) == &TokenKind::Star
        {
            let qualifier = self.parse_ident()?;
            self.advance();
            self.advance();
            return Ok(SelectItem::QualifiedStar(qualifier));
        }
        let expr = self.parse_expr()?;
        let alias = self.parse_optional_alias()?;
        Ok(SelectItem::Expr { expr, alias })
    }

    fn parse_table_source(&mut self) -> Result<TableSource, ParseError> {
        if self.peek() == &TokenKind::LParen {
            let pos = self.position();
            self.advance();
            if !matches!(self.peek(), TokenKind::Keyword(Keyword::Select)) {
                return Err(self.unexpected("SELECT"));
            }
            let subquery = self.parse_query()?;
            self.expect(&TokenKind::RParen)?;
            let alias = self
                .parse_optional_alias()?
                .ok_or_else(|| ParseError::new(pos, "derived table requires an alias"))?;
            return Ok(TableSource::Derived {
                subquery: Box::new(subquery),
                alias,
            });
        }
        let name = self.parse_ident()?;
        let alias = self.parse_optional_alias()?;
        Ok(TableSource::Named { name, alias })
    }

    fn parse_joins(&mut self) -> Result<Vec<Join>, ParseError> {
        let mut joins = Vec::new();
        loop {
            let kind = match self.peek() {
                TokenKind::Comma => {
                    self.advance();
                    JoinKind::Cross
                }
                TokenKind::Keyword(Keyword::Cross) => {
                    self.advance();
                    self.expect_keyword(Keyword::Join)?;
                    JoinKind::Cross
                }
                TokenKind::Keyword(Keyword::Join) => {
                    self.advance();
                    JoinKind::Inner
                }
                TokenKind::Keyword(Keyword::Inner) => {
                    self.advance();
                    self.expect_keyword(Keyword::Join)?;
                    JoinKind::Inner
                }
                TokenKind::Keyword(kw @ (Keyword::Left | Keyword::Right)) => {
                    let kind = if *kw == Keyword::Left {
                        JoinKind::Left
                    } else {
                        JoinKind::Right
                    };
                    self.advance();
                    self.eat_keyword(Keyword::Outer);
                    self.expect_keyword(Keyword::Join)?;
                    kind
                }
                _ => break,
            };
            let source = self.parse_table_source()?;
            let on = if kind == JoinKind::Cross {
                None
            } else {
                self.expect_keyword(Keyword::On)?;
                Some(self.parse_expr()?)
            };
            joins.push(Join { kind, source, on });
        }
        Ok(joins)
    }

    fn parse_order_item(&mut self) -> Result<OrderItem, ParseError> {
        let pos = self.position();
        let expr = self.parse_expr()?;
        let key = match expr {
            Expr::Number(ref text) if text.bytes().all(|b| b.is_ascii_digit()) => {
                let n: u64 = text
                    .parse()
                    .map_err(|_| ParseError::new(pos, "ORDER BY position out of range"))?;
                if n == 0 {
                    return Err(ParseError::new(pos, "ORDER BY position must be >= 1"));
                }
                OrderKey::Position(n)
            }
            other => OrderKey::Expr(other),
        };
        let direction = if self.eat_keyword(Keyword::Desc) {
            Direction::Desc
        } else {
            self.eat_keyword(Keyword::Asc);
            Direction::Asc
        };
        Ok(OrderItem { key, direction })
    }

    // -- expressions --------------------------------------------------------

    pub fn parse_expr(&mut self) -> Result<Expr, ParseError> {
        self.parse_or()
    }

    fn parse_or(&mut self) -> Result<Expr, ParseError> {
        let mut left = self.parse_and()?;
        while self.eat_keyword(Keyword::Or) {
            let right = self.parse_and()?;
            left = Expr::binary(BinaryOp::Or, left, right);
        }
        Ok(left)
    }

    fn parse_and(&mut self) -> Result<Expr, ParseError> {
        let mut left = self.parse_not()?;
        while self.eat_keyword(Keyword::And) {
            let right = self.parse_not()?;
            left = Expr::binary(BinaryOp::And, left, right);
        }
        Ok(left)
    }

    fn parse_not(&mut self) -> Result<Expr, ParseError> {
        if self.eat_keyword(Keyword::Not) {
            let operand = self.parse_not()?;
            return Ok(Expr::Unary {
                op: UnaryOp::Not,
                operand: Box::new(operand),
            });
        }
        self.parse_comparison()
    }

    /// At most one comparison per level: `a = b = c` is rejected.
    fn parse_comparison(&mut self) -> Result<Expr, ParseError> {
        let left = self.parse_additive()?;
        let op = match self.peek() {
            TokenKind::Eq => Some(BinaryOp::Eq),
            TokenKind::NotEq => Some(BinaryOp::NotEq),
            TokenKind::Lt => Some(BinaryOp::Lt),
            TokenKind::LtEq => Some(BinaryOp::LtEq),
            TokenKind::Gt => Some(BinaryOp::Gt),
            TokenKind::GtEq => Some(BinaryOp::GtEq),
            _ => None,
        };
        if let Some(op) = op {
            self.advance();
            let right = self.parse_additive()?;
            return Ok(Expr::binary(op, left, right));
        }

        let negated = if self.peek() == &TokenKind::Keyword(Keyword::Not)
            && matches!(
                self.peek_at(1),
                TokenKind::Keyword(Keyword::Like | Keyword::In)
            ) {
            self.advance();
            true
        } else {
            false
        };
        let expr = if self.eat_keyword(Keyword::Like) {
            let right = self.parse_additive()?;
            Expr::binary(BinaryOp::Like, left, right)
        } else if self.eat_keyword(Keyword::In) {
            let right = self.parse_in_rhs()?;
            Expr::binary(BinaryOp::In, left, right)
        } else if self.eat_keyword(Keyword::Is) {
            let negated = self.eat_keyword(Keyword::Not);
            self.expect_keyword(Keyword::Null)?;
            return Ok(Expr::IsNull {
                expr: Box::new(left),
                negated,
            });
        } else {
            return Ok(left);
        };
        Ok(if negated {
            Expr::Unary {
                op: UnaryOp::Not,
                operand: Box::new(expr),
            }
        } else {
            expr
        })
    }

    fn parse_in_rhs(&mut self) -> Result<Expr, ParseError> {
        self.expect(&TokenKind::LParen)?;
        if matches!(self.peek(), TokenKind::Keyword(Keyword::Select)) {
            let q = self.parse_query()?;
            self.expect(&TokenKind::RParen)?;
            return Ok(Expr::Subquery(Box::new(q)));
        }
        let mut items = vec![self.parse_expr()?];
        while self.eat(&TokenKind::Comma) {
            items.push(self.parse_expr()?);
        }
        self.expect(&TokenKind::RParen)?;
        Ok(Expr::List(items))
    }

    fn parse_additive(&mut self) -> Result<Expr, ParseError> {
        let mut left = self.parse_multiplicative()?;
        loop {
            let op = match self.peek() {
                TokenKind::Plus => BinaryOp::Plus,
                TokenKind::Minus => BinaryOp::Minus,
                _ => break,
            };
            self.advance();
            let right = self.parse_multiplicative()?;
            left = Expr::binary(op, left, right);
        }
        Ok(left)
    }

    fn parse_multiplicative(&mut self) -> Result<Expr, ParseError> {
        let mut left = self.parse_unary()?;
        loop {
            let op = match self.peek() {
                TokenKind::Star => BinaryOp::Multiply,
                TokenKind::Slash => BinaryOp::Divide,
                _ => break,
            };
            self.advance();
            let right = self.parse_unary()?;
            left = Expr::binary(op, left, right);
        }
        Ok(left)
    }

    fn parse_unary(&mut self) -> Result<Expr, ParseError> {
        if self.eat(&TokenKind::Minus) {
            let operand = self.parse_unary()?;
            return Ok(Expr::Unary {
                op: UnaryOp::Neg,
                operand: Box::new(operand),
            });
        }
        self.parse_primary()
    }

    fn parse_primary(&mut self) -> Result<Expr, ParseError> {
        match self.peek().clone() {
            TokenKind::Number(text) => {
                self.advance();
                Ok(Expr::Number(text))
            }
            TokenKind::String(text) => {
                self.advance();
                Ok(Expr::String(text))
            }
            TokenKind::Keyword(Keyword::True) => {
                self.advance();
                Ok(Expr::Bool(true))
            }
            TokenKind::Keyword(Keyword::False) => {
                self.advance();
                Ok(Expr::Bool(false))
            }
            TokenKind::Keyword(Keyword::Null) => {
                self.advance();
                Ok(Expr::Null)
            }
            TokenKind::LParen => {
                self.advance();
                if matches!(self.peek(), TokenKind::Keyword(Keyword::Select)) {
                    let q = self.parse_query()?;
                    self.expect(&TokenKind::RParen)?;
                    return Ok(Expr::Subquery(Box::new(q)));
                }
                let inner = self.parse_expr()?;
                self.expect(&TokenKind::RParen)?;
                Ok(Expr::Paren(Box::new(inner)))
            }
            TokenKind::Ident { .. } => {
                let first = self.parse_ident()?;
                if self.peek() == &TokenKind::LParen {
                    return self.parse_function_args(first);
                }
                if self.eat(&TokenKind::Dot) {
                    let name = self.parse_ident()?;
                    return Ok(Expr::Column(ColumnRef {
                        qualifier: Some(first),
                        name,
                    }));
                }
                Ok(Expr::Column(ColumnRef {
                    qualifier: None,
                    name: first,
                }))
            }
            _ => Err(self.unexpected("expression")),
        }
    }

    fn parse_function_args(&mut self, name: Ident) -> Result<Expr, ParseError> {
        self.expect(&TokenKind::LParen)?;
        if self.eat(&TokenKind::Star) {
            self.expect(&TokenKind::RParen)?;
            return Ok(Expr::Function(FunctionCall {
                name,
                args: Vec::new(),
                star: true,
            }));
        }
        let mut args = Vec::new();
        if self.peek() != &TokenKind::RParen {
            args.push(self.parse_expr()?);
            while self.eat(&TokenKind::Comma) {
                args.push(self.parse_expr()?);
            }
        }
        self.expect(&TokenKind::RParen)?;
        Ok(Expr::Function(FunctionCall {
            name,
            args,
            star: false,
        }))
    }
}
