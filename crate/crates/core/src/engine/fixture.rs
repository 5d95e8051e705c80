//! Fixture scripts: `CREATE TABLE name (col type, ...);` and
//! `INSERT INTO name VALUES (v, ...)[, (v, ...)];`, with `--` comments.

use crate::sql::lexer::{Keyword, TokenKind};
use crate::sql::{ParseError, Parser};
use crate::value::{ResultColumn, Value};

use super::{BackendError, Database};

fn syntax(e: ParseError) -> BackendError {
    BackendError::FixtureSyntaxError {
        position: e.position,
        message: e.message,
    }
}

pub fn load_fixture(mut db: Database, script: &str) -> Result<Database, BackendError> {
    let mut p = Parser::new(script).map_err(syntax)?;
    loop {
        while p.eat(&TokenKind::Semicolon) {}
        match p.peek() {
            TokenKind::Eof => return Ok(db),
            TokenKind::Keyword(Keyword::Create) => create_table(&mut p, &mut db)?,
            TokenKind::Keyword(Keyword::Insert) => insert(&mut p, &mut db)?,
            _ => return Err(syntax(p.unexpected("CREATE TABLE or INSERT INTO"))),
        }
        if !matches!(p.peek(), TokenKind::Eof) {
            p.expect(&TokenKind::Semicolon).map_err(syntax)?;
        }
    }
}

fn create_table(p: &mut Parser, db: &mut Database) -> Result<(), BackendError> {
    p.expect_keyword(Keyword::Create).map_err(syntax)?;
    p.expect_keyword(Keyword::Table).map_err(syntax)?;
    let pos = p.position();
    let name = p.parse_ident().map_err(syntax)?;
    p.expect(&TokenKind::LParen).map_err(syntax)?;
    let mut columns = Vec::new();
    loop {
        let col = p.parse_ident().map_err(syntax)?;
        let ty_pos = p.position();
        let ty = p.parse_ident().map_err(syntax)?;
        let datatype = ty.value.parse().map_err(|m: String| BackendError::FixtureSyntaxError {
            position: ty_pos,
            message: m,
        })?;
        columns.push(ResultColumn::new(col.value, datatype));
        if !p.eat(&TokenKind::Comma) {
            break;
        }
    }
    p.expect(&TokenKind::RParen).map_err(syntax)?;
    db.create_table(&name.value, columns).map_err(|e| match e {
        BackendError::DuplicateName(n) => BackendError::FixtureSyntaxError {
            position: pos,
            message: format!("duplicate name `{n}`"),
        },
        other => other,
    })
}

fn insert(p: &mut Parser, db: &mut Database) -> Result<(), BackendError> {
    p.expect_keyword(Keyword::Insert).map_err(syntax)?;
    p.expect_keyword(Keyword::Into).map_err(syntax)?;
    let name_pos = p.position();
    let name = p.parse_ident().map_err(syntax)?;
    let arity = db
        .table(&name.value)
        .map(|t| t.columns.len())
        .ok_or_else(|| BackendError::FixtureSyntaxError {
            position: name_pos,
            message: format!("unknown table `{}`", name.value),
        })?;
    p.expect_keyword(Keyword::Values).map_err(syntax)?;
    loop {
        let pos = p.position();
        p.expect(&TokenKind::LParen).map_err(syntax)?;
        let mut row = vec![literal(p)?];
        while p.eat(&TokenKind::Comma) {
            row.push(literal(p)?);
        }
        p.expect(&TokenKind::RParen).map_err(syntax)?;
        if row.len() != arity {
            return Err(BackendError::FixtureSyntaxError {
                position: pos,
                message: format!("{} values for {arity} columns of {}", row.len(), name.value),
            });
        }
        db.insert(&name.value, row)?;
        if !p.eat(&TokenKind::Comma) {
            return Ok(());
        }
    }
}

fn literal(p: &mut Parser) -> Result<Value, BackendError> {
    let negative = p.eat(&TokenKind::Minus);
    let value = match p.peek().clone() {
        TokenKind::Number(n) => number(&n, negative),
        _ if negative => return Err(syntax(p.unexpected("number"))),
        TokenKind::String(s) => Value::Text(s),
        TokenKind::Keyword(Keyword::Null) => Value::Null,
        TokenKind::Keyword(Keyword::True) => Value::Bool(true),
        TokenKind::Keyword(Keyword::False) => Value::Bool(false),
        _ => return Err(syntax(p.unexpected("literal"))),
    };
    p.advance();
    Ok(value)
}

/// Literal text to a value: integers that fit `i64` stay integers.
pub(crate) fn number(text: &str, negative: bool) -> Value {
    let signed = if negative {
        format!("-{text}")
    } else {
        text.to_string()
    };
    match signed.parse::<i64>() {
        Ok(i) => Value::Int(i),
        Err(_) => Value::Float(signed.parse().unwrap_or(f64::NAN)),
    }
}
