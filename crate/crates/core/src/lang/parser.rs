use std::collections::HashSet;
use std::str::FromStr;

use rust_decimal::Decimal;
use thiserror::Error;

use super::ast::{Clip, Expr, MatrixTy, RExpr, RowCount, RowMetric, ScalarTy, Ty};
use super::lexer::{tokenize, Spanned, Tok};

/// A syntax error with its position and the tokens that would have been accepted.
#[derive(Clone, Debug, PartialEq, Eq, Error)]
#[error("{line}:{column}: expected {}, found {found}{}", .expected.join(" or "), .note.as_deref().map(|n| format!(" ({n})")).unwrap_or_default())]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub expected: Vec<String>,
    pub found: String,
    pub note: Option<String>,
}

/// Parses a complete MiniDuet program.
pub fn parse(source: &str) -> Result<Expr, ParseError> {
    let mut p = Parser::new(source)?;
    let e = p.expr()?;
    p.expect_eof()?;
    Ok(e)
}

/// Parses a type, as used for the database schema in server configuration.
pub fn parse_type(source: &str) -> Result<Ty, ParseError> {
    let mut p = Parser::new(source)?;
    let t = p.ty()?;
    p.expect_eof()?;
    Ok(t)
}

const EXPR_START: &[&str] = &[
    "`plam`",
    "`let`",
    "`gauss`",
    "`laplace`",
    "`rows`",
    "`real`",
    "identifier",
    "`R+`",
    "`(`",
];
const ATOM_START: &[&str] = &["identifier", "`R+`", "`(`"];

struct Parser {
    toks: Vec<Spanned>,
    pos: usize,
}

impl Parser {
    fn new(source: &str) -> Result<Self, ParseError> {
        let toks = tokenize(source).map_err(|e| ParseError {
            line: e.line,
            column: e.column,
            expected: vec!["a token".into()],
            found: format!("`{}`", e.found),
            note: None,
        })?;
        Ok(Parser { toks, pos: 0 })
    }

    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].tok.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn error(&self, expected: &[&str]) -> ParseError {
        let here = &self.toks[self.pos];
        ParseError {
            line: here.line,
            column: here.column,
            expected: expected.iter().map(|s| s.to_string()).collect(),
            found: here.tok.to_string(),
            note: None,
        }
    }

    fn error_note(&self, expected: &[&str], note: impl Into<String>) -> ParseError {
        ParseError {
            note: Some(note.into()),
            ..self.error(expected)
        }
    }

    fn expect(&mut self, tok: Tok) -> Result<(), ParseError> {
        if *self.peek() == tok {
            self.bump();
            Ok(())
        } else {
            Err(self.error(&[&tok.to_string()]))
        }
    }

    fn expect_keyword(&mut self, kw: &'static str) -> Result<(), ParseError> {
        self.expect(Tok::Keyword(kw))
    }

    fn expect_eof(&mut self) -> Result<(), ParseError> {
        match self.peek() {
            Tok::Eof => Ok(()),
            _ => Err(self.error(&["end of input"])),
        }
    }

    fn ident(&mut self) -> Result<String, ParseError> {
        match self.peek() {
            Tok::Ident(_) => match self.bump() {
                Tok::Ident(s) => Ok(s),
                _ => unreachable!(),
            },
            _ => Err(self.error(&["identifier"])),
        }
    }

    fn decimal(&mut self) -> Result<Decimal, ParseError> {
        match self.peek() {
            Tok::Number(text) => {
                let value = Decimal::from_str(text).map_err(|_| {
                    self.error_note(&["decimal literal"], "literal out of representable range")
                })?;
                self.bump();
                Ok(value)
            }
            _ => Err(self.error(&["decimal literal"])),
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        match self.peek() {
            Tok::Keyword("plam") => {
                self.bump();
                self.expect(Tok::Dot)?;
                let param = self.ident()?;
                self.expect(Tok::Colon)?;
                let param_ty = self.ty()?;
                self.expect(Tok::FatArrow)?;
                let body = self.expr()?;
                Ok(Expr::plam(param, param_ty, body))
            }
            Tok::Keyword("let") => {
                self.bump();
                let name = self.ident()?;
                self.expect(Tok::Eq)?;
                let bound = self.expr()?;
                self.expect_keyword("in")?;
                let body = self.expr()?;
                Ok(Expr::let_in(name, bound, body))
            }
            Tok::Keyword("gauss") => {
                self.bump();
                self.expect(Tok::LBracket)?;
                let sens = self.rexp()?;
                self.expect(Tok::Comma)?;
                let eps = self.rexp()?;
                self.expect(Tok::Comma)?;
                let delta = self.rexp()?;
                self.expect(Tok::RBracket)?;
                let vars = self.var_list()?;
                let body = self.braced()?;
                Ok(Expr::Gauss {
                    sens,
                    eps,
                    delta,
                    vars,
                    body: Box::new(body),
                })
            }
            Tok::Keyword("laplace") => {
                self.bump();
                self.expect(Tok::LBracket)?;
                let sens = self.rexp()?;
                self.expect(Tok::Comma)?;
                let eps = self.rexp()?;
                self.expect(Tok::RBracket)?;
                let vars = self.var_list()?;
                let body = self.braced()?;
                Ok(Expr::Laplace {
                    sens,
                    eps,
                    vars,
                    body: Box::new(body),
                })
            }
            Tok::Keyword("rows") => {
                self.bump();
                Ok(Expr::rows(self.atom()?))
            }
            Tok::Keyword("real") => {
                self.bump();
                Ok(Expr::real(self.atom()?))
            }
            Tok::Ident(_) | Tok::RPlus | Tok::LParen => self.atom(),
            _ => Err(self.error(EXPR_START)),
        }
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        match self.peek() {
            Tok::Ident(_) => Ok(Expr::Var(self.ident()?)),
            Tok::RPlus => Ok(Expr::RLit(self.rplus_literal()?)),
            Tok::LParen => {
                self.bump();
                let e = self.expr()?;
                self.expect(Tok::RParen)?;
                Ok(e)
            }
            _ => Err(self.error(ATOM_START)),
        }
    }

    fn rplus_literal(&mut self) -> Result<Decimal, ParseError> {
        self.expect(Tok::RPlus)?;
        self.expect(Tok::LBracket)?;
        let value = self.decimal()?;
        self.expect(Tok::RBracket)?;
        Ok(value)
    }

    fn rexp(&mut self) -> Result<RExpr, ParseError> {
        match self.peek() {
            Tok::RPlus => Ok(RExpr::Lit(self.rplus_literal()?)),
            Tok::Ident(_) => Ok(RExpr::Var(self.ident()?)),
            _ => Err(self.error(&["`R+`", "identifier"])),
        }
    }

    fn var_list(&mut self) -> Result<Vec<String>, ParseError> {
        self.expect(Tok::LAngle)?;
        let mut seen = HashSet::new();
        let mut vars = Vec::new();
        loop {
            let here = self.pos;
            let name = self.ident()?;
            if !seen.insert(name.clone()) {
                self.pos = here;
                return Err(self.error_note(&["identifier"], format!("duplicate variable `{name}`")));
            }
            vars.push(name);
            match self.peek() {
                Tok::Comma => {
                    self.bump();
                }
                Tok::RAngle => {
                    self.bump();
                    return Ok(vars);
                }
                _ => return Err(self.error(&["`,`", "`>`"])),
            }
        }
    }

    fn braced(&mut self) -> Result<Expr, ParseError> {
        self.expect(Tok::LBrace)?;
        let e = self.expr()?;
        self.expect(Tok::RBrace)?;
        Ok(e)
    }

    fn ty(&mut self) -> Result<Ty, ParseError> {
        match self.peek() {
            Tok::Keyword("R") => {
                self.bump();
                Ok(Ty::Real)
            }
            Tok::Keyword("dR") => {
                self.bump();
                Ok(Ty::DReal)
            }
            Tok::RPlus => Ok(Ty::RPlus(self.rplus_literal()?)),
            Tok::Keyword("M") => {
                self.bump();
                self.expect(Tok::LBracket)?;
                let metric = match self.peek() {
                    Tok::Keyword("L1") => {
                        self.bump();
                        RowMetric::L1
                    }
                    Tok::Ident(s) if s.starts_with('L') => {
                        return Err(self.error_note(&["`L1`"], "only the L1 row metric is supported"))
                    }
                    _ => return Err(self.error(&["`L1`"])),
                };
                self.expect(Tok::Comma)?;
                self.expect_keyword("U")?;
                self.expect(Tok::Pipe)?;
                let rows = match self.peek() {
                    Tok::Keyword("star") => {
                        self.bump();
                        RowCount::Star
                    }
                    Tok::Number(text) if text.bytes().all(|b| b.is_ascii_digit()) => {
                        let n = text
                            .parse::<u64>()
                            .map_err(|_| self.error_note(&["row count"], "row count too large"))?;
                        self.bump();
                        RowCount::Exact(n)
                    }
                    _ => return Err(self.error(&["`star`", "natural number"])),
                };
                self.expect(Tok::Comma)?;
                let schema = self.schema()?;
                self.expect(Tok::RBracket)?;
                Ok(Ty::Matrix(MatrixTy {
                    metric,
                    clip: Clip::Unbounded,
                    rows,
                    schema,
                }))
            }
            _ => Err(self.error(&["`R`", "`dR`", "`R+`", "`M`"])),
        }
    }

    fn schema(&mut self) -> Result<Vec<ScalarTy>, ParseError> {
        let mut cols = Vec::new();
        loop {
            let col = match self.peek() {
                Tok::Keyword("R") => ScalarTy::Real,
                Tok::Keyword("dR") => ScalarTy::DReal,
                Tok::LBracket if cols.is_empty() => {
                    return Err(self.error_note(&["`R`", "`dR`"], "matrix schema must have at least one column"))
                }
                _ => return Err(self.error(&["`R`", "`dR`"])),
            };
            self.bump();
            cols.push(col);
            self.expect(Tok::DoubleColon)?;
            if *self.peek() == Tok::LBracket {
                self.bump();
                self.expect(Tok::RBracket)?;
                return Ok(cols);
            }
        }
    }
}
