//! Surface syntax for polynomials.
//!
//! ```text
//! expr   := ['+'|'-'] term (('+'|'-') term)*
//! term   := power (['*'] power)*
//! power  := atom ['^' digits]
//! atom   := number ['i'] | 'i' | ('U'|'Z') digits [tag] ['*'] | '(' expr ')' | 'exp[' expr ';' expr ']'
//! tag    := '{' [digits (',' digits)*] '}'
//! ```
//!
//! A `*` written directly after a letter is the adjoint unless another atom
//! follows it immediately: `U1*Z1` is `U1·Z1`, `U1* Z1` is `U1*·Z1`.
//! Juxtaposition multiplies, so the output of `NCPoly`'s `Display` parses back.

use num_complex::Complex64;
use thiserror::Error;

use crate::indexsets::IndexSet;
use crate::ncalg::{Kind, Letter, NCPoly};

#[derive(Debug, Error, Clone, PartialEq)]
#[error("{msg} at column {pos}")]
pub struct ParseError {
    /// 0-based character offset.
    pub pos: usize,
    pub msg: String,
}

struct Parser {
    s: Vec<char>,
    i: usize,
}

fn atom_start(c: char) -> bool {
    c.is_ascii_digit() || matches!(c, 'U' | 'Z' | 'i' | '(' | '.' | 'e')
}

impl Parser {
    fn err<T>(&self, pos: usize, msg: impl Into<String>) -> Result<T, ParseError> {
        Err(ParseError { pos, msg: msg.into() })
    }

    fn skip_ws(&mut self) {
        while self.i < self.s.len() && self.s[self.i].is_whitespace() {
            self.i += 1;
        }
    }

    fn peek(&mut self) -> Option<char> {
        self.skip_ws();
        self.s.get(self.i).copied()
    }

    fn raw(&self) -> Option<char> {
        self.s.get(self.i).copied()
    }

    fn expect(&mut self, c: char) -> Result<(), ParseError> {
        match self.peek() {
            Some(x) if x == c => {
                self.i += 1;
                Ok(())
            }
            Some(x) => self.err(self.i, format!("expected '{c}', found '{x}'")),
            None => self.err(self.i, format!("expected '{c}', found end of input")),
        }
    }

    fn expr(&mut self) -> Result<NCPoly, ParseError> {
        let mut acc = NCPoly::zero();
        let mut sign = 1.0;
        match self.peek() {
            Some('+') => self.i += 1,
            Some('-') => {
                self.i += 1;
                sign = -1.0;
            }
            _ => {}
        }
        loop {
            let t = self.term()?;
            acc = acc.add(&t.scale(Complex64::new(sign, 0.0)));
            match self.peek() {
                Some('+') => {
                    self.i += 1;
                    sign = 1.0;
                }
                Some('-') => {
                    self.i += 1;
                    sign = -1.0;
                }
                _ => return Ok(acc),
            }
        }
    }

    fn term(&mut self) -> Result<NCPoly, ParseError> {
        let mut acc = self.power()?;
        loop {
            match self.peek() {
                Some('*') => {
                    self.i += 1;
                    acc = acc.mul(&self.power()?);
                }
                Some(c) if atom_start(c) => acc = acc.mul(&self.power()?),
                _ => return Ok(acc),
            }
        }
    }

    fn power(&mut self) -> Result<NCPoly, ParseError> {
        let a = self.atom()?;
        if self.peek() == Some('^') {
            self.i += 1;
            self.skip_ws();
            let at = self.i;
            let k = self.digits()?;
            if k > 64 {
                return self.err(at, "exponent larger than 64");
            }
            return Ok(a.pow(k as usize));
        }
        Ok(a)
    }

    fn digits(&mut self) -> Result<u64, ParseError> {
        let start = self.i;
        while self.raw().is_some_and(|c| c.is_ascii_digit()) {
            self.i += 1;
        }
        if start == self.i {
            return self.err(start, "expected digits");
        }
        let t: String = self.s[start..self.i].iter().collect();
        t.parse().or_else(|_| self.err(start, "integer too large"))
    }

    fn number(&mut self) -> Result<f64, ParseError> {
        let start = self.i;
        while self.raw().is_some_and(|c| c.is_ascii_digit() || c == '.') {
            self.i += 1;
        }
        // Exponent part, only when followed by a digit or sign+digit.
        if matches!(self.raw(), Some('e' | 'E')) {
            let save = self.i;
            self.i += 1;
            if matches!(self.raw(), Some('+' | '-')) {
                self.i += 1;
            }
            if self.raw().is_some_and(|c| c.is_ascii_digit()) {
                while self.raw().is_some_and(|c| c.is_ascii_digit()) {
                    self.i += 1;
                }
            } else {
                self.i = save;
            }
        }
        let t: String = self.s[start..self.i].iter().collect();
        t.parse().or_else(|_| self.err(start, format!("bad number '{t}'")))
    }

    /// A `*` glued to the previous atom and not followed by another atom.
    fn adjoint_star(&mut self) -> bool {
        if self.raw() != Some('*') {
            return false;
        }
        match self.s.get(self.i + 1) {
            Some(&c) if atom_start(c) => false,
            _ => {
                self.i += 1;
                true
            }
        }
    }

    fn tag(&mut self) -> Result<IndexSet, ParseError> {
        if self.raw() != Some('{') {
            return Ok(IndexSet::EMPTY);
        }
        let start = self.i;
        self.i += 1;
        let mut v = Vec::new();
        if self.peek() != Some('}') {
            loop {
                self.skip_ws();
                v.push(self.digits()? as u32);
                match self.peek() {
                    Some(',') => self.i += 1,
                    _ => break,
                }
            }
        }
        self.expect('}')?;
        IndexSet::new(&v).or_else(|e| self.err(start, e.to_string()))
    }

    fn atom(&mut self) -> Result<NCPoly, ParseError> {
        let pos = self.i;
        let c = match self.peek() {
            Some(c) => c,
            None => return self.err(self.i, "unexpected end of input"),
        };
        let pos = pos.max(self.i);
        match c {
            'U' | 'Z' => {
                self.i += 1;
                let at = self.i;
                let k = self.digits()?;
                if k == 0 {
                    return self.err(at, "index 0 (letters are numbered from 1)");
                }
                if k > u16::MAX as u64 {
                    return self.err(at, "index too large");
                }
                let tag = self.tag()?;
                let adj = self.adjoint_star();
                let kind = match (c, adj) {
                    ('U', false) => Kind::U,
                    ('U', true) => Kind::V,
                    (_, false) => Kind::Z,
                    (_, true) => Kind::Y,
                };
                Ok(NCPoly::letter(Letter::tagged(kind, k as usize, tag)))
            }
            'i' => {
                self.i += 1;
                Ok(NCPoly::constant(Complex64::new(0.0, 1.0)))
            }
            'e' if self.s[self.i..].starts_with(&['e', 'x', 'p', '[']) => {
                self.i += 4;
                let lam = self.expr()?;
                self.expect(';')?;
                let body = self.expr()?;
                self.expect(']')?;
                let scalar = constant_of(&lam).ok_or(ParseError { pos, msg: "exp scalar must be a constant".into() })?;
                Ok(NCPoly::exp(scalar, body))
            }
            '(' => {
                self.i += 1;
                let e = self.expr()?;
                self.expect(')')?;
                if self.adjoint_star() {
                    return Ok(e.adjoint());
                }
                Ok(e)
            }
            c if c.is_ascii_digit() || c == '.' => {
                let x = self.number()?;
                if self.raw() == Some('i') {
                    self.i += 1;
                    return Ok(NCPoly::constant(Complex64::new(0.0, x)));
                }
                Ok(NCPoly::constant(Complex64::new(x, 0.0)))
            }
            c => self.err(pos, format!("unexpected '{c}'")),
        }
    }
}

/// The value of a constant polynomial.
pub fn constant_of(p: &NCPoly) -> Option<Complex64> {
    let mut out = Complex64::new(0.0, 0.0);
    for (w, c) in p.terms() {
        if !w.is_unit() {
            return None;
        }
        out += c;
    }
    Some(out)
}

pub fn parse_poly(text: &str) -> Result<NCPoly, ParseError> {
    let mut p = Parser { s: text.chars().collect(), i: 0 };
    if p.peek().is_none() {
        return p.err(0, "empty expression");
    }
    let e = p.expr()?;
    match p.peek() {
        None => Ok(e),
        Some(c) => p.err(p.i, format!("unexpected '{c}'")),
    }
}

/// A complex literal such as `2`, `-0.5i` or `(1+2i)`.
pub fn parse_complex(text: &str) -> Result<Complex64, ParseError> {
    let p = parse_poly(text)?;
    constant_of(&p).ok_or(ParseError { pos: 0, msg: "expected a constant".into() })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn examples() {
        assert_eq!(parse_poly("U1 + U1*").unwrap(), NCPoly::u(1).add(&NCPoly::v(1)));
        let p = parse_poly("(0+2i)*U1*Z1^2").unwrap();
        let q = NCPoly::u(1).mul(&NCPoly::z(1)).mul(&NCPoly::z(1)).scale(c(0.0, 2.0));
        assert_eq!(p, q);
        assert_eq!(parse_poly("U1 * Z1").unwrap(), NCPoly::u(1).mul(&NCPoly::z(1)));
        assert_eq!(parse_poly("U1*Z1").unwrap(), NCPoly::u(1).mul(&NCPoly::z(1)));
        assert_eq!(parse_poly("U1* Z1").unwrap(), NCPoly::v(1).mul(&NCPoly::z(1)));
        assert_eq!(parse_poly("Z2*").unwrap(), NCPoly::y(2));
        assert_eq!(parse_poly("(U1 + U1*)^2").unwrap(), NCPoly::u(1).add(&NCPoly::v(1)).pow(2));
        assert_eq!(parse_poly("- 3 U1").unwrap(), NCPoly::u(1).scale(c(-3.0, 0.0)));
    }

    #[test]
    fn errors_have_positions() {
        let e = parse_poly("U0").unwrap_err();
        assert_eq!(e.pos, 1);
        let e = parse_poly("U1 + ").unwrap_err();
        assert_eq!(e.pos, 5);
        let e = parse_poly("U1 ) ").unwrap_err();
        assert_eq!(e.pos, 3);
        assert!(parse_poly("").is_err());
        assert!(parse_poly("(U1").is_err());
        assert!(parse_poly("U1^").is_err());
        assert!(parse_poly("Q1").is_err());
    }

    #[test]
    fn display_round_trip() {
        let p = parse_poly("(0.5-1.25i) U1 Z1 U1* Z2* + 3 + U2^2 - exp[(0+1i); U1 + U1*]").unwrap();
        assert_eq!(parse_poly(&p.to_string()).unwrap(), p);
        let t = NCPoly::letter(Letter::tagged(Kind::V, 1, IndexSet::new(&[1, 2]).unwrap()));
        assert_eq!(parse_poly(&t.to_string()).unwrap(), t);
    }
}
