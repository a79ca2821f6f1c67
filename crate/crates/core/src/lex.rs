//! Lexer shared by all five surface syntaxes and the monitor format.

use thiserror::Error;

#[derive(Clone, PartialEq, Eq, Debug)]
pub enum Tok {
    Ident(String),
    Nat(u64),
    // punctuation
    LBrace,
    RBrace,
    LParen,
    RParen,
    LBracket,
    RBracket,
    Lt,
    Gt,
    Comma,
    Semi,
    Colon,
    Assign, // :=
    Eq,     // =
    EqEq,   // ==
    Arrow,  // ->
    Plus,
    Minus,
    Star,
    Bang,
    Dot,
    AndAnd, // &&
}

impl Tok {
    pub fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("identifier `{s}`"),
            Tok::Nat(n) => format!("number `{n}`"),
            t => format!("`{}`", t.text()),
        }
    }

    fn text(&self) -> &'static str {
        match self {
            Tok::Ident(_) | Tok::Nat(_) => "",
            Tok::LBrace => "{",
            Tok::RBrace => "}",
            Tok::LParen => "(",
            Tok::RParen => ")",
            Tok::LBracket => "[",
            Tok::RBracket => "]",
            Tok::Lt => "<",
            Tok::Gt => ">",
            Tok::Comma => ",",
            Tok::Semi => ";",
            Tok::Colon => ":",
            Tok::Assign => ":=",
            Tok::Eq => "=",
            Tok::EqEq => "==",
            Tok::Arrow => "->",
            Tok::Plus => "+",
            Tok::Minus => "-",
            Tok::Star => "*",
            Tok::Bang => "!",
            Tok::Dot => ".",
            Tok::AndAnd => "&&",
        }
    }
}

/// A token plus the 1-based line it started on.
#[derive(Clone, Debug)]
pub struct Spanned {
    pub tok: Tok,
    pub line: u32,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LexError {
    #[error("line {line}: unexpected character `{ch}`")]
    UnexpectedChar { ch: char, line: u32 },
    #[error("line {line}: number literal out of range")]
    NumberOverflow { line: u32 },
}

/// Tokenize `src`. Comments run from `//` to end of line.
pub fn lex(src: &str) -> Result<Vec<Spanned>, LexError> {
    let mut out = Vec::new();
    let mut chars = src.chars().peekable();
    let mut line: u32 = 1;
    while let Some(&c) = chars.peek() {
        match c {
            '\n' => {
                line += 1;
                chars.next();
            }
            c if c.is_whitespace() => {
                chars.next();
            }
            '/' => {
                chars.next();
                if chars.peek() == Some(&'/') {
                    for c in chars.by_ref() {
                        if c == '\n' {
                            line += 1;
                            break;
                        }
                    }
                } else {
                    return Err(LexError::UnexpectedChar { ch: '/', line });
                }
            }
            c if c.is_ascii_digit() => {
                let mut n: u64 = 0;
                while let Some(&d) = chars.peek() {
                    if let Some(v) = d.to_digit(10) {
                        n = n
                            .checked_mul(10)
                            .and_then(|n| n.checked_add(v as u64))
                            .ok_or(LexError::NumberOverflow { line })?;
                        chars.next();
                    } else {
                        break;
                    }
                }
                out.push(Spanned { tok: Tok::Nat(n), line });
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let mut s = String::new();
                while let Some(&d) = chars.peek() {
                    if d.is_ascii_alphanumeric() || d == '_' || d == '\'' {
                        s.push(d);
                        chars.next();
                    } else {
                        break;
                    }
                }
                out.push(Spanned { tok: Tok::Ident(s), line });
            }
            _ => {
                chars.next();
                let tok = match c {
                    '{' => Tok::LBrace,
                    '}' => Tok::RBrace,
                    '(' => Tok::LParen,
                    ')' => Tok::RParen,
                    '[' => Tok::LBracket,
                    ']' => Tok::RBracket,
                    '<' => Tok::Lt,
                    '>' => Tok::Gt,
                    ',' => Tok::Comma,
                    ';' => Tok::Semi,
                    '+' => Tok::Plus,
                    '*' => Tok::Star,
                    '!' => Tok::Bang,
                    '.' => Tok::Dot,
                    ':' => {
                        if chars.peek() == Some(&'=') {
                            chars.next();
                            Tok::Assign
                        } else {
                            Tok::Colon
                        }
                    }
                    '=' => {
                        if chars.peek() == Some(&'=') {
                            chars.next();
                            Tok::EqEq
                        } else {
                            Tok::Eq
                        }
                    }
                    '-' => {
                        if chars.peek() == Some(&'>') {
                            chars.next();
                            Tok::Arrow
                        } else {
                            Tok::Minus
                        }
                    }
                    '&' => {
                        if chars.peek() == Some(&'&') {
                            chars.next();
                            Tok::AndAnd
                        } else {
                            return Err(LexError::UnexpectedChar { ch: '&', line });
                        }
                    }
                    other => return Err(LexError::UnexpectedChar { ch: other, line }),
                };
                out.push(Spanned { tok, line });
            }
        }
    }
    Ok(out)
}

/// Words with grammatical meaning in at least one surface syntax; rejected as
/// variable, function, and cell names everywhere so the languages stay
/// mutually embeddable.
pub const RESERVED: &[&str] = &[
    "skip", "let", "in", "new", "hide", "iso", "letatom", "destruct", "as", "nat", "pair",
    "bool", "loc", "else", "if", "ifz", "then", "call", "fork", "endorse", "true", "false",
    "unit", "ret", "with", "fun", "component", "context", "heap", "heap0", "root", "import",
    "delta", "enclave", "monitor", "states", "init", "trans", "when", "is", "Ref", "UN",
    "Nat", "Bool",
];

pub fn is_reserved(word: &str) -> bool {
    RESERVED.contains(&word)
}

/// Cursor over a token stream with one-token lookahead helpers.
pub struct Cursor {
    toks: Vec<Spanned>,
    pos: usize,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ParseError {
    #[error("line {line}: expected {expected}, found {found}")]
    Unexpected { expected: String, found: String, line: u32 },
    #[error("unexpected end of input: expected {expected}")]
    Eof { expected: String },
    #[error("line {line}: {msg}")]
    Invalid { msg: String, line: u32 },
    #[error("lex error: {0}")]
    Lex(#[from] LexError),
}

impl Cursor {
    pub fn new(toks: Vec<Spanned>) -> Self {
        Cursor { toks, pos: 0 }
    }

    pub fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|s| &s.tok)
    }

    pub fn peek2(&self) -> Option<&Tok> {
        self.toks.get(self.pos + 1).map(|s| &s.tok)
    }

    pub fn line(&self) -> u32 {
        self.toks
            .get(self.pos.min(self.toks.len().saturating_sub(1)))
            .map(|s| s.line)
            .unwrap_or(0)
    }

    pub fn next(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).map(|s| s.tok.clone());
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    pub fn at_end(&self) -> bool {
        self.pos >= self.toks.len()
    }

    pub fn error(&self, msg: impl Into<String>) -> ParseError {
        ParseError::Invalid { msg: msg.into(), line: self.line() }
    }

    /// Consume `tok` or fail.
    pub fn expect(&mut self, tok: Tok) -> Result<(), ParseError> {
        match self.peek() {
            Some(t) if *t == tok => {
                self.pos += 1;
                Ok(())
            }
            Some(t) => Err(ParseError::Unexpected {
                expected: tok.describe(),
                found: t.describe(),
                line: self.line(),
            }),
            None => Err(ParseError::Eof { expected: tok.describe() }),
        }
    }

    /// Consume `tok` if it is next; report whether it was.
    pub fn eat(&mut self, tok: Tok) -> bool {
        if self.peek() == Some(&tok) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    /// Consume the keyword `kw` (an identifier token) or fail.
    pub fn expect_kw(&mut self, kw: &str) -> Result<(), ParseError> {
        match self.peek() {
            Some(Tok::Ident(s)) if s == kw => {
                self.pos += 1;
                Ok(())
            }
            Some(t) => Err(ParseError::Unexpected {
                expected: format!("`{kw}`"),
                found: t.describe(),
                line: self.line(),
            }),
            None => Err(ParseError::Eof { expected: format!("`{kw}`") }),
        }
    }

    /// Consume the keyword `kw` if it is next.
    pub fn eat_kw(&mut self, kw: &str) -> bool {
        match self.peek() {
            Some(Tok::Ident(s)) if s == kw => {
                self.pos += 1;
                true
            }
            _ => false,
        }
    }

    pub fn peek_kw(&self, kw: &str) -> bool {
        matches!(self.peek(), Some(Tok::Ident(s)) if s == kw)
    }

    /// Consume any identifier.
    pub fn ident(&mut self) -> Result<String, ParseError> {
        match self.peek() {
            Some(Tok::Ident(s)) => {
                let s = s.clone();
                self.pos += 1;
                Ok(s)
            }
            Some(t) => Err(ParseError::Unexpected {
                expected: "identifier".into(),
                found: t.describe(),
                line: self.line(),
            }),
            None => Err(ParseError::Eof { expected: "identifier".into() }),
        }
    }

    /// Consume a number literal.
    pub fn nat(&mut self) -> Result<u64, ParseError> {
        match self.peek() {
            Some(Tok::Nat(n)) => {
                let n = *n;
                self.pos += 1;
                Ok(n)
            }
            Some(t) => Err(ParseError::Unexpected {
                expected: "number".into(),
                found: t.describe(),
                line: self.line(),
            }),
            None => Err(ParseError::Eof { expected: "number".into() }),
        }
    }

    pub fn expect_end(&self) -> Result<(), ParseError> {
        if self.at_end() {
            Ok(())
        } else {
            Err(ParseError::Invalid {
                msg: format!(
                    "trailing input starting with {}",
                    self.peek().unwrap().describe()
                ),
                line: self.line(),
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lexes_punctuation_and_words() {
        let toks = lex("fun f(x) { x := !l with 3; } // trailing\n==").unwrap();
        let kinds: Vec<Tok> = toks.into_iter().map(|s| s.tok).collect();
        assert!(kinds.contains(&Tok::Assign));
        assert!(kinds.contains(&Tok::Bang));
        assert_eq!(kinds.last(), Some(&Tok::EqEq));
    }

    #[test]
    fn comments_do_not_leak() {
        let toks = lex("a // b c d\n e").unwrap();
        assert_eq!(toks.len(), 2);
        assert_eq!(toks[1].line, 2);
    }

    #[test]
    fn equal_variants() {
        let toks = lex("a = b == c").unwrap();
        let kinds: Vec<Tok> = toks.into_iter().map(|s| s.tok).collect();
        assert_eq!(kinds[1], Tok::Eq);
        assert_eq!(kinds[3], Tok::EqEq);
    }
}
