//! Recursive-descent parser for the polynomial expression grammar:
//!
//! ```text
//! expr     := term (('+' | '-') term)*
//! term     := factor (('*' factor) | ('/' posint))*
//! factor   := base ('^' nat)?
//! base     := rational | var | '(' expr ')' | '-' factor
//! rational := int ('/' posint)?
//! ```
//!
//! Whitespace is insignificant. `'/' posint` after a factor divides by an
//! integer constant, so `x/2` is accepted alongside `1/2*x`.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};
use thiserror::Error;

use super::{MultivariatePolynomial, PolyError};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("syntax error at offset {position}: {message}")]
    Syntax { position: usize, message: String },
    #[error("unknown variable `{name}` at offset {position}")]
    UnknownVariable { name: String, position: usize },
    #[error("negative exponent at offset {position}")]
    NegativeExponent { position: usize },
    #[error("exponent at offset {position} does not fit in u32")]
    ExponentOverflow { position: usize },
}

pub fn parse_polynomial(text: &str, variables: &[String]) -> Result<MultivariatePolynomial, ParseError> {
    let mut parser = Parser {
        chars: text.char_indices().collect(),
        pos: 0,
        len: text.len(),
        variables,
    };
    let p = parser.expr()?;
    parser.skip_ws();
    if let Some((offset, c)) = parser.peek_raw() {
        return Err(ParseError::Syntax {
            position: offset,
            message: format!("unexpected `{c}`"),
        });
    }
    Ok(p)
}

struct Parser<'a> {
    chars: Vec<(usize, char)>,
    pos: usize,
    len: usize,
    variables: &'a [String],
}

impl Parser<'_> {
    fn arity(&self) -> usize {
        self.variables.len()
    }

    fn skip_ws(&mut self) {
        while self.pos < self.chars.len() && self.chars[self.pos].1.is_whitespace() {
            self.pos += 1;
        }
    }

    fn peek_raw(&self) -> Option<(usize, char)> {
        self.chars.get(self.pos).copied()
    }

    fn peek(&mut self) -> Option<char> {
        self.skip_ws();
        self.peek_raw().map(|(_, c)| c)
    }

    fn offset(&self) -> usize {
        self.chars.get(self.pos).map(|(o, _)| *o).unwrap_or(self.len)
    }

    fn syntax<T>(&self, message: impl Into<String>) -> Result<T, ParseError> {
        Err(ParseError::Syntax {
            position: self.offset(),
            message: message.into(),
        })
    }

    fn overflow(&self, e: PolyError, position: usize) -> ParseError {
        match e {
            PolyError::ExponentOverflow => ParseError::ExponentOverflow { position },
            PolyError::ArityMismatch { .. } => unreachable!("parser builds uniform arity"),
        }
    }

    fn expr(&mut self) -> Result<MultivariatePolynomial, ParseError> {
        let mut acc = self.term()?;
        loop {
            match self.peek() {
                Some('+') => {
                    self.pos += 1;
                    acc = &acc + &self.term()?;
                }
                Some('-') => {
                    self.pos += 1;
                    acc = &acc - &self.term()?;
                }
                _ => return Ok(acc),
            }
        }
    }

    fn term(&mut self) -> Result<MultivariatePolynomial, ParseError> {
        let mut acc = self.factor()?;
        loop {
            match self.peek() {
                Some('*') => {
                    self.pos += 1;
                    let at = self.offset();
                    let rhs = self.factor()?;
                    acc = acc.checked_mul(&rhs).map_err(|e| self.overflow(e, at))?;
                }
                Some('/') => {
                    self.pos += 1;
                    self.skip_ws();
                    let d = self.positive_integer()?;
                    acc = acc.scale(&BigRational::new(BigInt::one(), d));
                }
                _ => return Ok(acc),
            }
        }
    }

    fn factor(&mut self) -> Result<MultivariatePolynomial, ParseError> {
        let base = self.base()?;
        if self.peek() == Some('^') {
            self.pos += 1;
            self.skip_ws();
            let at = self.offset();
            if self.peek_raw().map(|(_, c)| c) == Some('-') {
                return Err(ParseError::NegativeExponent { position: at });
            }
            let digits = self.digits();
            if digits.is_empty() {
                return self.syntax("expected exponent");
            }
            let e: u32 = digits
                .parse()
                .map_err(|_| ParseError::ExponentOverflow { position: at })?;
            return base.checked_pow(e).map_err(|err| self.overflow(err, at));
        }
        Ok(base)
    }

    fn base(&mut self) -> Result<MultivariatePolynomial, ParseError> {
        match self.peek() {
            Some('-') => {
                self.pos += 1;
                Ok(-&self.factor()?)
            }
            Some('(') => {
                self.pos += 1;
                let inner = self.expr()?;
                if self.peek() != Some(')') {
                    return self.syntax("expected `)`");
                }
                self.pos += 1;
                Ok(inner)
            }
            Some(c) if c.is_ascii_digit() => {
                let n: BigInt = self.digits().parse().expect("digits");
                let mut value = BigRational::from_integer(n);
                if self.peek_raw().map(|(_, c)| c) == Some('/') {
                    // rational literal `a/b` (no whitespace before the slash)
                    self.pos += 1;
                    self.skip_ws();
                    let d = self.positive_integer()?;
                    value /= BigRational::from_integer(d);
                }
                Ok(MultivariatePolynomial::constant(self.arity(), value))
            }
            Some(c) if c.is_alphabetic() || c == '_' => {
                let at = self.offset();
                let mut name = String::new();
                while let Some((_, c)) = self.peek_raw() {
                    if c.is_alphanumeric() || c == '_' {
                        name.push(c);
                        self.pos += 1;
                    } else {
                        break;
                    }
                }
                match self.variables.iter().position(|v| *v == name) {
                    Some(i) => Ok(MultivariatePolynomial::variable(self.arity(), i)),
                    None => Err(ParseError::UnknownVariable { name, position: at }),
                }
            }
            Some(c) => self.syntax(format!("unexpected `{c}`")),
            None => self.syntax("unexpected end of input"),
        }
    }

    fn digits(&mut self) -> String {
        let mut s = String::new();
        while let Some((_, c)) = self.peek_raw() {
            if c.is_ascii_digit() {
                s.push(c);
                self.pos += 1;
            } else {
                break;
            }
        }
        s
    }

    fn positive_integer(&mut self) -> Result<BigInt, ParseError> {
        let digits = self.digits();
        if digits.is_empty() {
            return self.syntax("expected a positive integer");
        }
        let d: BigInt = digits.parse().expect("digits");
        if d.is_zero() {
            return self.syntax("division by zero");
        }
        Ok(d)
    }
}
