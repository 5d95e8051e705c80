use super::ParseError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Keyword {
    Select,
    Distinct,
    From,
    Where,
    Group,
    By,
    Having,
    Order,
    Asc,
    Desc,
    Limit,
    Join,
    Inner,
    Left,
    Right,
    Outer,
    Cross,
    On,
    As,
    And,
    Or,
    Not,
    Like,
    In,
    Is,
    Null,
    True,
    False,
    // Statement heads the dialect rejects, plus the fixture DDL words.
    Insert,
    Into,
    Values,
    Update,
    Delete,
    Create,
    Table,
    Drop,
    Alter,
    Truncate,
    Union,
}

const KEYWORDS: &[(&str, Keyword)] = &[
    ("SELECT", Keyword::Select),
    ("DISTINCT", Keyword::Distinct),
    ("FROM", Keyword::From),
    ("WHERE", Keyword::Where),
    ("GROUP", Keyword::Group),
    ("BY", Keyword::By),
    ("HAVING", Keyword::Having),
    ("ORDER", Keyword::Order),
    ("ASC", Keyword::Asc),
    ("DESC", Keyword::Desc),
    ("LIMIT", Keyword::Limit),
    ("JOIN", Keyword::Join),
    ("INNER", Keyword::Inner),
    ("LEFT", Keyword::Left),
    ("RIGHT", Keyword::Right),
    ("OUTER", Keyword::Outer),
    ("CROSS", Keyword::Cross),
    ("ON", Keyword::On),
    ("AS", Keyword::As),
    ("AND", Keyword::And),
    ("OR", Keyword::Or),
    ("NOT", Keyword::Not),
    ("LIKE", Keyword::Like),
    ("IN", Keyword::In),
    ("IS", Keyword::Is),
    ("NULL", Keyword::Null),
    ("TRUE", Keyword::True),
    ("FALSE", Keyword::False),
    ("INSERT", Keyword::Insert),
    ("INTO", Keyword::Into),
    ("VALUES", Keyword::Values),
    ("UPDATE", Keyword::Update),
    ("DELETE", Keyword::Delete),
    ("CREATE", Keyword::Create),
    ("TABLE", Keyword::Table),
    ("DROP", Keyword::Drop),
    ("ALTER", Keyword::Alter),
    ("TRUNCATE", Keyword::Truncate),
    ("UNION", Keyword::Union),
];

impl Keyword {
    pub fn lookup(word: &str) -> Option<Keyword> {
        KEYWORDS
            .iter()
            .find(|(k, _)| k.eq_ignore_ascii_case(word))
            .map(|&(_, kw)| kw)
    }

    pub fn as_str(self) -> &'static str {
        KEYWORDS
            .iter()
            .find(|&&(_, kw)| kw == self)
            .map(|&(s, _)| s)
            .unwrap_or("?")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TokenKind {
    Keyword(Keyword),
    Ident { value: String, quoted: bool },
    String(String),
    Number(String),
    Comma,
    Dot,
    LParen,
    RParen,
    Star,
    Plus,
    Minus,
    Slash,
    Eq,
    NotEq,
    Lt,
    LtEq,
    Gt,
    GtEq,
    Semicolon,
    Eof,
}

impl TokenKind {
    pub fn describe(&self) -> String {
        match self {
            TokenKind::Keyword(k) => k.as_str().to_string(),
            TokenKind::Ident { value, .. } => format!("identifier `{value}`"),
            TokenKind::String(s) => format!("string '{s}'"),
            TokenKind::Number(n) => format!("number {n}"),
            TokenKind::Comma => "`,`".into(),
            TokenKind::Dot => "`.`".into(),
            TokenKind::LParen => "`(`".into(),
            TokenKind::RParen => "`)`".into(),
            TokenKind::Star => "`*`".into(),
            TokenKind::Plus => "`+`".into(),
            TokenKind::Minus => "`-`".into(),
            TokenKind::Slash => "`/`".into(),
            TokenKind::Eq => "`=`".into(),
            TokenKind::NotEq => "`<>`".into(),
            TokenKind::Lt => "`<`".into(),
            TokenKind::LtEq => "`<=`".into(),
            TokenKind::Gt => "`>`".into(),
            TokenKind::GtEq => "`>=`".into(),
            TokenKind::Semicolon => "`;`".into(),
            TokenKind::Eof => "end of input".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Token {
    pub kind: TokenKind,
    /// Byte offset into the source text.
    pub pos: usize,
}

pub fn is_ident_start(c: char) -> bool {
    c.is_ascii_alphabetic() || c == '_'
}

pub fn is_ident_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_'
}

/// Splits `src` into tokens, ending with a single `Eof` token.
pub fn tokenize(src: &str) -> Result<Vec<Token>, ParseError> {
    let bytes = src.as_bytes();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        let start = i;
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        if c == '-' && bytes.get(i + 1) == Some(&b'-') {
            while i < bytes.len() && bytes[i] != b'\n' {
                i += 1;
            }
            continue;
        }
        let simple = match c {
            ',' => Some(TokenKind::Comma),
            '.' if !bytes.get(i + 1).is_some_and(u8::is_ascii_digit) => Some(TokenKind::Dot),
            '(' => Some(TokenKind::LParen),
            ')' => Some(TokenKind::RParen),
            '*' => Some(TokenKind::Star),
            '+' => Some(TokenKind::Plus),
            '-' => Some(TokenKind::Minus),
            '/' => Some(TokenKind::Slash),
            '=' => Some(TokenKind::Eq),
            ';' => Some(TokenKind::Semicolon),
            _ => None,
        };
        if let Some(kind) = simple {
            tokens.push(Token { kind, pos: start });
            i += 1;
            continue;
        }
        match c {
            '<' => {
                let (kind, len) = match bytes.get(i + 1) {
                    Some(b'=') => (TokenKind::LtEq, 2),
                    Some(b'>') => (TokenKind::NotEq, 2),
                    _ => (TokenKind::Lt, 1),
                };
                tokens.push(Token { kind, pos: start });
                i += len;
            }
            '>' => {
                let (kind, len) = match bytes.get(i + 1) {
                    Some(b'=') => (TokenKind::GtEq, 2),
                    _ => (TokenKind::Gt, 1),
                };
                tokens.push(Token { kind, pos: start });
                i += len;
            }
            '!' if bytes.get(i + 1) == Some(&b'=') => {
                tokens.push(Token {
                    kind: TokenKind::NotEq,
                    pos: start,
                });
                i += 2;
            }
            '\'' => {
                let (text, end) = read_quoted(src, i, '\'')
                    .ok_or_else(|| ParseError::new(start, "unterminated string literal"))?;
                tokens.push(Token {
                    kind: TokenKind::String(text),
                    pos: start,
                });
                i = end;
            }
            '"' => {
                let (text, end) = read_quoted(src, i, '"')
                    .ok_or_else(|| ParseError::new(start, "unterminated quoted identifier"))?;
                if text.is_empty() {
                    return Err(ParseError::new(start, "empty quoted identifier"));
                }
                tokens.push(Token {
                    kind: TokenKind::Ident {
                        value: text,
                        quoted: true,
                    },
                    pos: start,
                });
                i = end;
            }
            c if c.is_ascii_digit() || c == '.' => {
                i = scan_number(bytes, i);
                if bytes.get(i).is_some_and(|b| is_ident_char(*b as char)) {
                    return Err(ParseError::new(start, "malformed number"));
                }
                tokens.push(Token {
                    kind: TokenKind::Number(src[start..i].to_string()),
                    pos: start,
                });
            }
            c if is_ident_start(c) => {
                while i < bytes.len() && is_ident_char(bytes[i] as char) {
                    i += 1;
                }
                let word = &src[start..i];
                let kind = match Keyword::lookup(word) {
                    Some(kw) => TokenKind::Keyword(kw),
                    None => TokenKind::Ident {
                        value: word.to_string(),
                        quoted: false,
                    },
                };
                tokens.push(Token { kind, pos: start });
            }
            other => {
                let ch = src[start..].chars().next().unwrap_or(other);
                return Err(ParseError::new(start, format!("unexpected character `{ch}`")));
            }
        }
    }
    tokens.push(Token {
        kind: TokenKind::Eof,
        pos: src.len(),
    });
    Ok(tokens)
}

/// Reads a `quote`-delimited run starting at `start`, with doubled quotes as
/// escapes. Returns the unescaped text and the offset just past the closing
/// quote.
fn read_quoted(src: &str, start: usize, quote: char) -> Option<(String, usize)> {
    let mut out = String::new();
    let mut chars = src[start + 1..].char_indices().peekable();
    while let Some((off, ch)) = chars.next() {
        if ch == quote {
            if chars.peek().map(|&(_, c)| c) == Some(quote) {
                chars.next();
                out.push(quote);
            } else {
                return Some((out, start + 1 + off + 1));
            }
        } else {
            out.push(ch);
        }
    }
    None
}

fn scan_number(bytes: &[u8], mut i: usize) -> usize {
    while i < bytes.len() && bytes[i].is_ascii_digit() {
        i += 1;
    }
    if i < bytes.len() && bytes[i] == b'.' && bytes.get(i + 1).is_some_and(u8::is_ascii_digit) {
        i += 1;
        while i < bytes.len() && bytes[i].is_ascii_digit() {
            i += 1;
        }
    }
    if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
        let mut j = i + 1;
        if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
            j += 1;
        }
        if j < bytes.len() && bytes[j].is_ascii_digit() {
            while j < bytes.len() && bytes[j].is_ascii_digit() {
                j += 1;
            }
            i = j;
        }
    }
    i
}
