//! Boolean term grammar shared by assignments and constraints.
//!
//! ```text
//! term := "TRUE" | "FALSE" | ref | "!" term | term "&" term | term "|" term | "(" term ")"
//! ref  := IDENT "." (IDENT | "*") "." (IDENT | "*")
//! ```
//!
//! `&` binds tighter than `|`; both associate to the left.

use std::fmt;

use thiserror::Error;

/// Syntax error with a 1-based column into the parsed text.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("at column {column}: {message}")]
pub struct SyntaxError {
    pub column: usize,
    pub message: String,
}

impl SyntaxError {
    fn new(column: usize, message: impl Into<String>) -> Self {
        Self {
            column,
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Term<R> {
    True,
    False,
    Ref(R),
    Not(Box<Term<R>>),
    And(Box<Term<R>>, Box<Term<R>>),
    Or(Box<Term<R>>, Box<Term<R>>),
}

impl<R> Term<R> {
    /// Rewrites every reference, keeping the term structure.
    pub fn try_map<S, E>(self, f: &mut impl FnMut(R) -> Result<S, E>) -> Result<Term<S>, E> {
        Ok(match self {
            Term::True => Term::True,
            Term::False => Term::False,
            Term::Ref(r) => Term::Ref(f(r)?),
            Term::Not(t) => Term::Not(Box::new(t.try_map(f)?)),
            Term::And(a, b) => Term::And(Box::new(a.try_map(f)?), Box::new(b.try_map(f)?)),
            Term::Or(a, b) => Term::Or(Box::new(a.try_map(f)?), Box::new(b.try_map(f)?)),
        })
    }

    /// Evaluates with `lookup` deciding the truth of each reference.
    pub fn eval(&self, lookup: &mut impl FnMut(&R) -> bool) -> bool {
        match self {
            Term::True => true,
            Term::False => false,
            Term::Ref(r) => lookup(r),
            Term::Not(t) => !t.eval(lookup),
            Term::And(a, b) => a.eval(lookup) && b.eval(lookup),
            Term::Or(a, b) => a.eval(lookup) || b.eval(lookup),
        }
    }

    /// Visits every reference in left-to-right order.
    pub fn for_each_ref<'a>(&'a self, f: &mut impl FnMut(&'a R)) {
        match self {
            Term::True | Term::False => {}
            Term::Ref(r) => f(r),
            Term::Not(t) => t.for_each_ref(f),
            Term::And(a, b) | Term::Or(a, b) => {
                a.for_each_ref(f);
                b.for_each_ref(f);
            }
        }
    }

    pub fn refs(&self) -> Vec<&R> {
        let mut out = Vec::new();
        self.for_each_ref(&mut |r| out.push(r));
        out
    }

    fn precedence(&self) -> u8 {
        match self {
            Term::Or(..) => 1,
            Term::And(..) => 2,
            Term::Not(_) => 3,
            _ => 4,
        }
    }
}

impl<R: fmt::Display> fmt::Display for Term<R> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn child<R: fmt::Display>(
            f: &mut fmt::Formatter<'_>,
            t: &Term<R>,
            parens: bool,
        ) -> fmt::Result {
            if parens {
                write!(f, "({t})")
            } else {
                write!(f, "{t}")
            }
        }
        let p = self.precedence();
        match self {
            Term::True => f.write_str("TRUE"),
            Term::False => f.write_str("FALSE"),
            Term::Ref(r) => write!(f, "{r}"),
            Term::Not(t) => {
                f.write_str("!")?;
                child(f, t, t.precedence() < p)
            }
            Term::And(a, b) | Term::Or(a, b) => {
                child(f, a, a.precedence() < p)?;
                f.write_str(if p == 1 { " | " } else { " & " })?;
                child(f, b, b.precedence() <= p)
            }
        }
    }
}

/// A syntactic reference `base.Type.Value`; `None` stands for `*`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawRef {
    pub base: String,
    pub label_type: Option<String>,
    pub value: Option<String>,
    pub column: usize,
}

impl fmt::Display for RawRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}.{}.{}",
            self.base,
            self.label_type.as_deref().unwrap_or("*"),
            self.value.as_deref().unwrap_or("*")
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Ident(String),
    Dot,
    Star,
    Bang,
    Amp,
    Pipe,
    LParen,
    RParen,
    Assign,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Ident(s) => write!(f, "'{s}'"),
            Tok::Dot => f.write_str("'.'"),
            Tok::Star => f.write_str("'*'"),
            Tok::Bang => f.write_str("'!'"),
            Tok::Amp => f.write_str("'&'"),
            Tok::Pipe => f.write_str("'|'"),
            Tok::LParen => f.write_str("'('"),
            Tok::RParen => f.write_str("')'"),
            Tok::Assign => f.write_str("':='"),
        }
    }
}

fn tokenize(text: &str) -> Result<Vec<(Tok, usize)>, SyntaxError> {
    let chars: Vec<char> = text.chars().collect();
    let mut toks = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let col = i + 1;
        let tok = match c {
            c if c.is_whitespace() => {
                i += 1;
                continue;
            }
            '.' => Tok::Dot,
            '*' => Tok::Star,
            '!' => Tok::Bang,
            '&' => Tok::Amp,
            '|' => Tok::Pipe,
            '(' => Tok::LParen,
            ')' => Tok::RParen,
            ':' if chars.get(i + 1) == Some(&'=') => {
                i += 1;
                Tok::Assign
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let start = i;
                while i + 1 < chars.len()
                    && (chars[i + 1].is_ascii_alphanumeric() || chars[i + 1] == '_')
                {
                    i += 1;
                }
                Tok::Ident(chars[start..=i].iter().collect())
            }
            other => {
                return Err(SyntaxError::new(
                    col,
                    format!("unexpected character '{other}'"),
                ))
            }
        };
        toks.push((tok, col));
        i += 1;
    }
    Ok(toks)
}

/// Recursive-descent parser over a token stream.
pub(crate) struct Parser {
    toks: Vec<(Tok, usize)>,
    pos: usize,
    end_column: usize,
}

impl Parser {
    pub(crate) fn new(text: &str) -> Result<Self, SyntaxError> {
        Ok(Self {
            toks: tokenize(text)?,
            pos: 0,
            end_column: text.chars().count() + 1,
        })
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(t, _)| t)
    }

    fn peek_at(&self, offset: usize) -> Option<&Tok> {
        self.toks.get(self.pos + offset).map(|(t, _)| t)
    }

    fn column(&self) -> usize {
        self.toks.get(self.pos).map_or(self.end_column, |(_, c)| *c)
    }

    fn unexpected(&self, expected: &str) -> SyntaxError {
        match self.peek() {
            Some(t) => SyntaxError::new(self.column(), format!("expected {expected}, found {t}")),
            None => SyntaxError::new(
                self.end_column,
                format!("expected {expected}, found end of input"),
            ),
        }
    }

    fn bump(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).map(|(t, _)| t.clone());
        self.pos += 1;
        t
    }

    fn expect(&mut self, tok: Tok, expected: &str) -> Result<(), SyntaxError> {
        if self.peek() == Some(&tok) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.unexpected(expected))
        }
    }

    pub(crate) fn at_end(&self) -> bool {
        self.pos >= self.toks.len()
    }

    pub(crate) fn finish(&self) -> Result<(), SyntaxError> {
        if self.at_end() {
            Ok(())
        } else {
            Err(self.unexpected("end of input"))
        }
    }

    pub(crate) fn ident(&mut self, expected: &str) -> Result<(String, usize), SyntaxError> {
        let col = self.column();
        match self.peek() {
            Some(Tok::Ident(_)) => match self.bump() {
                Some(Tok::Ident(s)) => Ok((s, col)),
                _ => unreachable!(),
            },
            _ => Err(self.unexpected(expected)),
        }
    }

    /// Consumes the keyword `kw` if it is next.
    pub(crate) fn keyword(&mut self, kw: &str) -> Result<(), SyntaxError> {
        match self.peek() {
            Some(Tok::Ident(s)) if s == kw => {
                self.pos += 1;
                Ok(())
            }
            _ => Err(self.unexpected(&format!("'{kw}'"))),
        }
    }

    fn label_part(&mut self) -> Result<Option<String>, SyntaxError> {
        match self.peek() {
            Some(Tok::Star) => {
                self.pos += 1;
                Ok(None)
            }
            Some(Tok::Ident(_)) => Ok(Some(self.ident("identifier")?.0)),
            _ => Err(self.unexpected("identifier or '*'")),
        }
    }

    pub(crate) fn reference(&mut self) -> Result<RawRef, SyntaxError> {
        let (base, column) = self.ident("reference")?;
        self.expect(Tok::Dot, "'.'")?;
        let type_column = self.column();
        let label_type = self.label_part()?;
        self.expect(Tok::Dot, "'.'")?;
        let value_column = self.column();
        let value = self.label_part()?;
        if label_type.is_none() && value.is_some() {
            return Err(SyntaxError::new(
                value_column.max(type_column),
                "a type wildcard requires a value wildcard ('.*.*')",
            ));
        }
        Ok(RawRef {
            base,
            label_type,
            value,
            column,
        })
    }

    pub(crate) fn assign(&mut self) -> Result<(), SyntaxError> {
        self.expect(Tok::Assign, "':='")
    }

    pub(crate) fn term(&mut self) -> Result<Term<RawRef>, SyntaxError> {
        let mut lhs = self.conjunction()?;
        while self.peek() == Some(&Tok::Pipe) {
            self.pos += 1;
            let rhs = self.conjunction()?;
            lhs = Term::Or(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn conjunction(&mut self) -> Result<Term<RawRef>, SyntaxError> {
        let mut lhs = self.unary()?;
        while self.peek() == Some(&Tok::Amp) {
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = Term::And(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Term<RawRef>, SyntaxError> {
        match self.peek() {
            Some(Tok::Bang) => {
                self.pos += 1;
                Ok(Term::Not(Box::new(self.unary()?)))
            }
            Some(Tok::LParen) => {
                self.pos += 1;
                let inner = self.term()?;
                self.expect(Tok::RParen, "')'")?;
                Ok(inner)
            }
            Some(Tok::Ident(s)) if self.peek_at(1) != Some(&Tok::Dot) => match s.as_str() {
                "TRUE" => {
                    self.pos += 1;
                    Ok(Term::True)
                }
                "FALSE" => {
                    self.pos += 1;
                    Ok(Term::False)
                }
                _ => Err(self.unexpected("TRUE, FALSE or a reference")),
            },
            Some(Tok::Ident(_)) => Ok(Term::Ref(self.reference()?)),
            _ => Err(self.unexpected("term")),
        }
    }
}

/// Parses a standalone term.
pub fn parse_term(text: &str) -> Result<Term<RawRef>, SyntaxError> {
    let mut p = Parser::new(text)?;
    let t = p.term()?;
    p.finish()?;
    Ok(t)
}

/// Parses `target := term`.
pub fn parse_assignment(text: &str) -> Result<(RawRef, Term<RawRef>), SyntaxError> {
    let mut p = Parser::new(text)?;
    let target = p.reference()?;
    p.assign()?;
    let rhs = p.term()?;
    p.finish()?;
    Ok((target, rhs))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn show(text: &str) -> String {
        parse_term(text).unwrap().to_string()
    }

    #[test]
    fn and_binds_tighter_than_or() {
        let t = parse_term("a.T.x | b.T.x & c.T.x").unwrap();
        assert!(matches!(t, Term::Or(_, ref rhs) if matches!(**rhs, Term::And(..))));
        assert_eq!(t.to_string(), "a.T.x | b.T.x & c.T.x");
    }

    #[test]
    fn display_keeps_needed_parentheses() {
        assert_eq!(show("(a.T.x | b.T.x) & c.T.x"), "(a.T.x | b.T.x) & c.T.x");
        assert_eq!(show("a.T.x | (b.T.x | c.T.x)"), "a.T.x | (b.T.x | c.T.x)");
        assert_eq!(show("!(a.T.x & TRUE)"), "!(a.T.x & TRUE)");
        assert_eq!(show("!!FALSE"), "!!FALSE");
        assert_eq!(show("((a.*.*))"), "a.*.*");
    }

    #[test]
    fn display_round_trips() {
        for text in [
            "TRUE",
            "a.T.x & !(b.T.* | c.*.*)",
            "a.T.x | b.T.x | c.T.x",
            "a.T.x & (b.T.x & c.T.x)",
            "!a.T.x & !b.T.y | FALSE",
        ] {
            let t = parse_term(text).unwrap();
            let printed = t.to_string();
            let reparsed = parse_term(&printed).unwrap();
            assert_eq!(strip(reparsed), strip(t), "{text}");
        }
    }

    fn strip(t: Term<RawRef>) -> Term<String> {
        t.try_map(&mut |r: RawRef| Ok::<_, ()>(r.to_string()))
            .unwrap()
    }

    #[test]
    fn assignment_parses() {
        let (target, rhs) = parse_assignment("out.*.* := in.*.*").unwrap();
        assert_eq!(target.base, "out");
        assert_eq!(target.label_type, None);
        assert_eq!(rhs.to_string(), "in.*.*");
        let (target, _) = parse_assignment("d.Encryption.Encrypted := TRUE").unwrap();
        assert_eq!(target.value.as_deref(), Some("Encrypted"));
    }

    #[test]
    fn syntax_errors_carry_columns() {
        let err = parse_term("a.T.x &").unwrap_err();
        assert_eq!(err.column, 8);
        let err = parse_term("a.T.x $ b").unwrap_err();
        assert_eq!(err.column, 7);
        let err = parse_term("(a.T.x").unwrap_err();
        assert!(err.message.contains("')'"));
        let err = parse_assignment("a.*.x := TRUE").unwrap_err();
        assert!(err.message.contains("wildcard"));
        assert!(parse_term("maybe").is_err());
        assert!(parse_term("a.T.x b.T.x").is_err());
    }

    #[test]
    fn eval_follows_boolean_semantics() {
        let t = parse_term("a.T.x & !c.T.y").unwrap();
        for (a, c) in [(false, false), (false, true), (true, false), (true, true)] {
            let got = t.eval(&mut |r: &RawRef| if r.base == "a" { a } else { c });
            assert_eq!(got, a && !c);
        }
    }
}
