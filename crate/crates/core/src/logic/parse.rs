use thiserror::Error;

use super::{Atom, Connective, Formula, Literal};

/* grammar

   disj : conj ('|' conj)*
   conj : unit ('&' unit)*
   unit : '!' atom | atom | '(' disj ')'
   atom : [a-z][a-z0-9_]*

*/

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{kind} at position {position}")]
pub struct ParseError {
    /// Byte offset into the input.
    pub position: usize,
    pub kind: ParseErrorKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseErrorKind {
    #[error("negation of compound formula")]
    NegatedCompound,
    #[error("unexpected character {0:?}")]
    UnexpectedChar(char),
    #[error("expected {expected}, found {found}")]
    Unexpected { expected: &'static str, found: String },
    #[error("unexpected end of input, expected {0}")]
    UnexpectedEnd(&'static str),
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Ident(String),
    Not,
    And,
    Or,
    LParen,
    RParen,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("atom `{s}`"),
            Tok::Not => "'!'".into(),
            Tok::And => "'&'".into(),
            Tok::Or => "'|'".into(),
            Tok::LParen => "'('".into(),
            Tok::RParen => "')'".into(),
        }
    }
}

fn tokenize(text: &str) -> Result<Vec<(usize, Tok)>, ParseError> {
    let mut toks = Vec::new();
    let bytes = text.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        let tok = match c {
            c if c.is_ascii_whitespace() => {
                i += 1;
                continue;
            }
            '!' => Tok::Not,
            '&' => Tok::And,
            '|' => Tok::Or,
            '(' => Tok::LParen,
            ')' => Tok::RParen,
            c if c.is_ascii_lowercase() => {
                let start = i;
                while i < bytes.len()
                    && (bytes[i].is_ascii_lowercase() || bytes[i].is_ascii_digit() || bytes[i] == b'_')
                {
                    i += 1;
                }
                toks.push((start, Tok::Ident(text[start..i].to_string())));
                continue;
            }
            _ => {
                let ch = text[i..].chars().next().unwrap();
                return Err(ParseError { position: i, kind: ParseErrorKind::UnexpectedChar(ch) });
            }
        };
        toks.push((i, tok));
        i += 1;
    }
    Ok(toks)
}

struct Parser {
    toks: Vec<(usize, Tok)>,
    pos: usize,
    end: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(_, t)| t)
    }

    fn offset(&self) -> usize {
        self.toks.get(self.pos).map_or(self.end, |(o, _)| *o)
    }

    fn error(&self, expected: &'static str) -> ParseError {
        let kind = match self.peek() {
            Some(t) => ParseErrorKind::Unexpected { expected, found: t.describe() },
            None => ParseErrorKind::UnexpectedEnd(expected),
        };
        ParseError { position: self.offset(), kind }
    }

    fn disj(&mut self) -> Result<Formula, ParseError> {
        let mut parts = vec![self.conj()?];
        while self.peek() == Some(&Tok::Or) {
            self.pos += 1;
            parts.push(self.conj()?);
        }
        Ok(Formula::join(Connective::Or, parts))
    }

    fn conj(&mut self) -> Result<Formula, ParseError> {
        let mut parts = vec![self.unit()?];
        while self.peek() == Some(&Tok::And) {
            self.pos += 1;
            parts.push(self.unit()?);
        }
        Ok(Formula::join(Connective::And, parts))
    }

    fn unit(&mut self) -> Result<Formula, ParseError> {
        match self.peek().cloned() {
            Some(Tok::Not) => {
                self.pos += 1;
                match self.peek().cloned() {
                    Some(Tok::Ident(name)) => {
                        self.pos += 1;
                        Ok(Formula::Lit(Literal::neg(Atom(name))))
                    }
                    Some(Tok::LParen) => {
                        Err(ParseError { position: self.offset(), kind: ParseErrorKind::NegatedCompound })
                    }
                    _ => Err(self.error("atom after '!'")),
                }
            }
            Some(Tok::Ident(name)) => {
                self.pos += 1;
                Ok(Formula::Lit(Literal::pos(Atom(name))))
            }
            Some(Tok::LParen) => {
                self.pos += 1;
                let inner = self.disj()?;
                if self.peek() != Some(&Tok::RParen) {
                    return Err(self.error("')'"));
                }
                self.pos += 1;
                Ok(inner)
            }
            _ => Err(self.error("atom, '!' or '('")),
        }
    }
}

/// Parses a formula such as `a & !b | (c | d) & e`.
///
/// `&` binds tighter than `|`, `!` may only precede an atom, and whitespace is
/// ignored. The result is flattened, so `a & (b & c)` yields a single
/// three-way conjunction.
pub fn parse_formula(text: &str) -> Result<Formula, ParseError> {
    let toks = tokenize(text)?;
    let mut parser = Parser { toks, pos: 0, end: text.len() };
    let f = parser.disj()?;
    if parser.pos != parser.toks.len() {
        return Err(parser.error("'&', '|' or end of input"));
    }
    Ok(f)
}
