//! Multivariate polynomials of total degree at most 3 with exact derivatives.

use std::fmt;
use thiserror::Error;

pub const MAX_DEGREE: u32 = 3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolyError {
    #[error("cannot parse polynomial {input:?} at byte {pos}: {msg}")]
    Parse { input: String, pos: usize, msg: String },
    #[error("degree {0} exceeds {MAX_DEGREE}")]
    DegreeTooHigh(u32),
    #[error("variable x{index} out of range for dimension {dim}")]
    VariableOutOfRange { index: usize, dim: usize },
}

/// `sum_t c_t prod_i x_i^{e_{t,i}}` in `dim` variables.
#[derive(Debug, Clone, PartialEq)]
pub struct Poly {
    dim: usize,
    terms: Vec<(f64, Vec<u32>)>,
}

impl Poly {
    pub fn new(dim: usize, terms: Vec<(f64, Vec<u32>)>) -> Result<Self, PolyError> {
        for (_, e) in &terms {
            if e.len() != dim {
                return Err(PolyError::VariableOutOfRange { index: e.len(), dim });
            }
            let degree: u32 = e.iter().sum();
            if degree > MAX_DEGREE {
                return Err(PolyError::DegreeTooHigh(degree));
            }
        }
        Ok(Self { dim, terms }.simplified())
    }

    pub fn constant(dim: usize, c: f64) -> Self {
        Self { dim, terms: vec![(c, vec![0; dim])] }.simplified()
    }

    pub fn zero(dim: usize) -> Self {
        Self { dim, terms: Vec::new() }
    }

    /// `c x_i`.
    pub fn linear(dim: usize, i: usize, c: f64) -> Self {
        let mut e = vec![0; dim];
        e[i] = 1;
        Self { dim, terms: vec![(c, e)] }.simplified()
    }

    fn simplified(mut self) -> Self {
        self.terms.sort_by(|a, b| a.1.cmp(&b.1));
        let mut out: Vec<(f64, Vec<u32>)> = Vec::with_capacity(self.terms.len());
        for (c, e) in self.terms {
            match out.last_mut() {
                Some(last) if last.1 == e => last.0 += c,
                _ => out.push((c, e)),
            }
        }
        out.retain(|(c, _)| *c != 0.0);
        Self { dim: self.dim, terms: out }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn terms(&self) -> &[(f64, Vec<u32>)] {
        &self.terms
    }

    pub fn degree(&self) -> u32 {
        self.terms.iter().map(|(_, e)| e.iter().sum()).max().unwrap_or(0)
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.dim);
        self.terms
            .iter()
            .map(|(c, e)| e.iter().zip(x).fold(*c, |acc, (&p, &xi)| acc * xi.powi(p as i32)))
            .sum()
    }

    /// Exact `d/dx_i`.
    pub fn derivative(&self, i: usize) -> Self {
        let terms = self
            .terms
            .iter()
            .filter(|(_, e)| e[i] > 0)
            .map(|(c, e)| {
                let mut e = e.clone();
                let c = c * e[i] as f64;
                e[i] -= 1;
                (c, e)
            })
            .collect();
        Self { dim: self.dim, terms }.simplified()
    }

    /// Parses expressions such as `1 + x0`, `-0.5*x0^2*x1 + 3e-2*x1`.
    pub fn parse(dim: usize, input: &str) -> Result<Self, PolyError> {
        Parser { input, bytes: input.as_bytes(), pos: 0, dim }.parse()
    }
}

impl fmt::Display for Poly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        for (t, (c, e)) in self.terms.iter().enumerate() {
            match t {
                0 => write!(f, "{c:?}")?,
                _ if *c < 0.0 => write!(f, " - {:?}", -c)?,
                _ => write!(f, " + {c:?}")?,
            }
            for (i, &p) in e.iter().enumerate() {
                match p {
                    0 => {}
                    1 => write!(f, "*x{i}")?,
                    _ => write!(f, "*x{i}^{p}")?,
                }
            }
        }
        Ok(())
    }
}

struct Parser<'a> {
    input: &'a str,
    bytes: &'a [u8],
    pos: usize,
    dim: usize,
}

impl Parser<'_> {
    fn err(&self, msg: &str) -> PolyError {
        PolyError::Parse { input: self.input.to_string(), pos: self.pos, msg: msg.to_string() }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.bytes.get(self.pos).copied()
    }

    fn number(&mut self) -> Result<f64, PolyError> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.bytes.len() {
            let c = self.bytes[self.pos];
            let exp_sign = (c == b'-' || c == b'+')
                && self.pos > start
                && matches!(self.bytes[self.pos - 1], b'e' | b'E');
            if c.is_ascii_digit() || c == b'.' || c == b'e' || c == b'E' || exp_sign {
                self.pos += 1;
            } else {
                break;
            }
        }
        self.input[start..self.pos].parse().map_err(|_| {
            self.pos = start;
            self.err("expected a number")
        })
    }

    fn integer(&mut self) -> Result<usize, PolyError> {
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        self.input[start..self.pos].parse().map_err(|_| self.err("expected an integer"))
    }

    fn factor(&mut self, coef: &mut f64, exps: &mut [u32]) -> Result<(), PolyError> {
        match self.peek() {
            Some(b'x') => {
                self.pos += 1;
                let index = self.integer()?;
                if index >= self.dim {
                    return Err(PolyError::VariableOutOfRange { index, dim: self.dim });
                }
                let mut power = 1;
                if self.peek() == Some(b'^') {
                    self.pos += 1;
                    self.skip_ws();
                    power = self.integer()? as u32;
                }
                exps[index] += power;
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => *coef *= self.number()?,
            _ => return Err(self.err("expected a number or a variable")),
        }
        Ok(())
    }

    fn parse(mut self) -> Result<Poly, PolyError> {
        let mut terms = Vec::new();
        let mut sign = 1.0;
        if let Some(c @ (b'-' | b'+')) = self.peek() {
            sign = if c == b'-' { -1.0 } else { 1.0 };
            self.pos += 1;
        }
        loop {
            let mut coef = sign;
            let mut exps = vec![0; self.dim];
            self.factor(&mut coef, &mut exps)?;
            while self.peek() == Some(b'*') {
                self.pos += 1;
                self.factor(&mut coef, &mut exps)?;
            }
            terms.push((coef, exps));
            match self.peek() {
                None => break,
                Some(b'+') => sign = 1.0,
                Some(b'-') => sign = -1.0,
                Some(_) => return Err(self.err("expected '+', '-' or '*'")),
            }
            self.pos += 1;
        }
        Poly::new(self.dim, terms)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parse_and_eval() {
        let p = Poly::parse(2, "1 + x0 - 0.5*x0^2*x1 + 2e-1*x1").unwrap();
        let x = [2.0, 3.0];
        assert!((p.eval(&x) - (1.0 + 2.0 - 0.5 * 4.0 * 3.0 + 0.2 * 3.0)).abs() < 1e-14);
        assert_eq!(p.degree(), 3);
        assert_eq!(Poly::parse(1, "-x0").unwrap(), Poly::linear(1, 0, -1.0));
        assert_eq!(Poly::parse(1, "x0 - x0").unwrap(), Poly::zero(1));
    }

    #[test]
    fn parse_errors() {
        assert!(matches!(Poly::parse(1, "x0^4"), Err(PolyError::DegreeTooHigh(4))));
        assert!(matches!(Poly::parse(1, "x1"), Err(PolyError::VariableOutOfRange { .. })));
        assert!(matches!(Poly::parse(1, "1 + "), Err(PolyError::Parse { .. })));
        assert!(matches!(Poly::parse(1, "2 x0"), Err(PolyError::Parse { .. })));
    }

    #[test]
    fn derivative_examples() {
        let p = Poly::parse(2, "3*x0^2*x1 + x1 + 4").unwrap();
        assert_eq!(p.derivative(0), Poly::parse(2, "6*x0*x1").unwrap());
        assert_eq!(p.derivative(1), Poly::parse(2, "3*x0^2 + 1").unwrap());
        assert_eq!(Poly::constant(2, 5.0).derivative(0), Poly::zero(2));
    }

    fn poly_strategy() -> impl Strategy<Value = Poly> {
        prop::collection::vec((-2.0f64..2.0, 0u32..=3, 0u32..=3), 1..6).prop_map(|raw| {
            let terms = raw
                .into_iter()
                .map(|(c, a, b)| {
                    let b = b.min(3 - a);
                    (c, vec![a, b])
                })
                .collect();
            Poly::new(2, terms).unwrap()
        })
    }

    proptest! {
        #[test]
        fn display_round_trips(p in poly_strategy()) {
            let back = Poly::parse(2, &p.to_string()).unwrap();
            prop_assert_eq!(back, p);
        }

        #[test]
        fn derivative_matches_central_difference(p in poly_strategy(), x in -1.0f64..1.0, y in -1.0f64..1.0) {
            let h = 1e-5;
            for i in 0..2 {
                let mut plus = [x, y];
                let mut minus = [x, y];
                plus[i] += h;
                minus[i] -= h;
                let fd = (p.eval(&plus) - p.eval(&minus)) / (2.0 * h);
                prop_assert!((fd - p.derivative(i).eval(&[x, y])).abs() < 1e-7);
            }
        }
    }
}
