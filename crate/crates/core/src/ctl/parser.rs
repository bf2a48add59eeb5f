//! Text syntax for CTL formulas.
//!
//! ```text
//! formula  := or ('->' formula)?                  right-associative
//! or       := and ('|' and)*
//! and      := unary ('&' unary)*
//! unary    := '!' unary
//!           | ('AG'|'AF'|'EF'|'EG'|'AX'|'EX') unary
//!           | 'A' '[' formula 'U' formula ']'
//!           | 'E' '[' formula 'U' formula ']'
//!           | primary
//! primary  := '(' formula ')' | 'true' | 'false' | atom
//! atom     := 'step_' digits | ident '==' ('true'|'false')
//! ```

use thiserror::Error;

use super::{Atom, CtlFormula};
use crate::grafcet::StepId;

#[derive(Debug, Error, PartialEq, Eq)]
#[error("parse error at byte {position}: {message}")]
pub struct ParseError {
    pub position: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Ident(String),
    Not,
    And,
    Or,
    Implies,
    Eq,
    LParen,
    RParen,
    LBracket,
    RBracket,
}

struct Lexer {
    tokens: Vec<(usize, Token)>,
    end: usize,
}

fn lex(text: &str) -> Result<Lexer, ParseError> {
    let bytes = text.as_bytes();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let b = bytes[i];
        match b {
            b' ' | b'\t' | b'\n' | b'\r' => i += 1,
            b'!' => {
                tokens.push((i, Token::Not));
                i += 1;
            }
            b'&' => {
                tokens.push((i, Token::And));
                i += 1;
            }
            b'|' => {
                tokens.push((i, Token::Or));
                i += 1;
            }
            b'(' => {
                tokens.push((i, Token::LParen));
                i += 1;
            }
            b')' => {
                tokens.push((i, Token::RParen));
                i += 1;
            }
            b'[' => {
                tokens.push((i, Token::LBracket));
                i += 1;
            }
            b']' => {
                tokens.push((i, Token::RBracket));
                i += 1;
            }
            b'-' => {
                if bytes.get(i + 1) == Some(&b'>') {
                    tokens.push((i, Token::Implies));
                    i += 2;
                } else {
                    return Err(ParseError {
                        position: i,
                        message: "expected '->'".into(),
                    });
                }
            }
            b'=' => {
                if bytes.get(i + 1) == Some(&b'=') {
                    tokens.push((i, Token::Eq));
                    i += 2;
                } else {
                    return Err(ParseError {
                        position: i,
                        message: "expected '=='".into(),
                    });
                }
            }
            b if b.is_ascii_alphanumeric() || b == b'_' => {
                let start = i;
                while i < bytes.len()
                    && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_')
                {
                    i += 1;
                }
                tokens.push((start, Token::Ident(text[start..i].to_string())));
            }
            _ => {
                return Err(ParseError {
                    position: i,
                    message: format!("unexpected character {:?}", b as char),
                })
            }
        }
    }
    Ok(Lexer {
        tokens,
        end: text.len(),
    })
}

struct Parser {
    tokens: Vec<(usize, Token)>,
    pos: usize,
    end: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos).map(|(_, t)| t)
    }

    fn position(&self) -> usize {
        self.tokens
            .get(self.pos)
            .map(|(p, _)| *p)
            .unwrap_or(self.end)
    }

    fn bump(&mut self) -> Option<Token> {
        let t = self.tokens.get(self.pos).map(|(_, t)| t.clone());
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn expect(&mut self, token: Token, what: &str) -> Result<(), ParseError> {
        if self.peek() == Some(&token) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.error(format!("expected {what}")))
        }
    }

    fn error(&self, message: String) -> ParseError {
        ParseError {
            position: self.position(),
            message,
        }
    }

    fn formula(&mut self) -> Result<CtlFormula, ParseError> {
        let left = self.or_expr()?;
        if self.peek() == Some(&Token::Implies) {
            self.pos += 1;
            let right = self.formula()?;
            Ok(left.implies(right))
        } else {
            Ok(left)
        }
    }

    fn or_expr(&mut self) -> Result<CtlFormula, ParseError> {
        let mut left = self.and_expr()?;
        while self.peek() == Some(&Token::Or) {
            self.pos += 1;
            left = left.or(self.and_expr()?);
        }
        Ok(left)
    }

    fn and_expr(&mut self) -> Result<CtlFormula, ParseError> {
        let mut left = self.unary()?;
        while self.peek() == Some(&Token::And) {
            self.pos += 1;
            left = left.and(self.unary()?);
        }
        Ok(left)
    }

    fn unary(&mut self) -> Result<CtlFormula, ParseError> {
        match self.peek() {
            Some(Token::Not) => {
                self.pos += 1;
                Ok(self.unary()?.not())
            }
            Some(Token::Ident(name)) => match name.as_str() {
                "AG" => self.prefixed(CtlFormula::ag),
                "AF" => self.prefixed(CtlFormula::af),
                "AX" => self.prefixed(CtlFormula::ax),
                "EG" => self.prefixed(CtlFormula::eg),
                "EF" => self.prefixed(CtlFormula::ef),
                "EX" => self.prefixed(CtlFormula::ex),
                "A" => self.until(CtlFormula::au),
                "E" => self.until(CtlFormula::eu),
                _ => self.primary(),
            },
            _ => self.primary(),
        }
    }

    fn prefixed(
        &mut self,
        wrap: impl FnOnce(CtlFormula) -> CtlFormula,
    ) -> Result<CtlFormula, ParseError> {
        self.pos += 1;
        Ok(wrap(self.unary()?))
    }

    fn until(
        &mut self,
        wrap: impl FnOnce(CtlFormula, CtlFormula) -> CtlFormula,
    ) -> Result<CtlFormula, ParseError> {
        self.pos += 1;
        self.expect(Token::LBracket, "'[' after path quantifier")?;
        let left = self.formula()?;
        match self.bump() {
            Some(Token::Ident(u)) if u == "U" => {}
            _ => {
                self.pos = self.pos.saturating_sub(1);
                return Err(self.error("expected 'U'".into()));
            }
        }
        let right = self.formula()?;
        self.expect(Token::RBracket, "']'")?;
        Ok(wrap(left, right))
    }

    fn primary(&mut self) -> Result<CtlFormula, ParseError> {
        match self.bump() {
            Some(Token::LParen) => {
                let inner = self.formula()?;
                self.expect(Token::RParen, "')'")?;
                Ok(inner)
            }
            Some(Token::Ident(name)) => match name.as_str() {
                "true" => Ok(CtlFormula::True),
                "false" => Ok(CtlFormula::True.not()),
                _ => self.atom(name),
            },
            _ => {
                self.pos = self.pos.saturating_sub(1);
                Err(self.error("expected a formula".into()))
            }
        }
    }

    fn atom(&mut self, name: String) -> Result<CtlFormula, ParseError> {
        if let Some(digits) = name.strip_prefix("step_") {
            if !digits.is_empty() && digits.bytes().all(|b| b.is_ascii_digit()) {
                let id: u32 = digits.parse().map_err(|_| {
                    self.error(format!("step id {digits:?} out of range"))
                })?;
                return Ok(CtlFormula::Atom(Atom::Step(StepId(id))));
            }
        }
        self.expect(Token::Eq, "'==' after identifier")?;
        match self.bump() {
            Some(Token::Ident(v)) if v == "true" => {
                Ok(CtlFormula::Atom(Atom::Var(name, true)))
            }
            Some(Token::Ident(v)) if v == "false" => {
                Ok(CtlFormula::Atom(Atom::Var(name, false)))
            }
            _ => {
                self.pos = self.pos.saturating_sub(1);
                Err(self.error("expected 'true' or 'false' after '=='".into()))
            }
        }
    }
}

pub fn parse_ctl(text: &str) -> Result<CtlFormula, ParseError> {
    let lexer = lex(text)?;
    let mut parser = Parser {
        tokens: lexer.tokens,
        pos: 0,
        end: lexer.end,
    };
    let formula = parser.formula()?;
    if parser.peek().is_some() {
        return Err(parser.error("trailing input".into()));
    }
    Ok(formula)
}
