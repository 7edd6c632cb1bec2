//! Textual scalars: rationals, decimals and Q-linear combinations of square roots.
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := unary (('*' unary) | ('/' unary))*
//! unary  := ('+' | '-') unary | atom
//! atom   := number | 'sqrt' integer | 'sqrt' '(' integer ')' | '(' expr ')'
//! number := digits ('.' digits)?
//! ```
//! Division is only by nonzero rationals. Radicands need not be squarefree: `sqrt12`
//! becomes `2*sqrt3`.

use std::collections::BTreeMap;

use num_bigint::BigInt;
use num_traits::{One, Zero};

use super::field::{field_from_sqrts, squarefree_split, FieldElement, FieldRef};
use super::poly::Rat;
use super::AlgebraError;

/// sum over squarefree radicands k of c_k * sqrt(k); radicand 1 is the rational part.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct SurdExpr(pub BTreeMap<u64, Rat>);

impl SurdExpr {
    pub fn rational(r: Rat) -> Self {
        let mut m = BTreeMap::new();
        if !r.is_zero() {
            m.insert(1, r);
        }
        SurdExpr(m)
    }
    pub fn sqrt(n: u64) -> Self {
        if n == 0 {
            return SurdExpr::default();
        }
        let (g, s) = squarefree_split(n);
        let mut m = BTreeMap::new();
        m.insert(s, Rat::from_integer(BigInt::from(g)));
        SurdExpr(m)
    }
    pub fn as_rational(&self) -> Option<Rat> {
        match self.0.len() {
            0 => Some(Rat::zero()),
            1 => self.0.get(&1).cloned(),
            _ => None,
        }
    }
    fn add(&self, o: &Self, sign: i32) -> Self {
        let mut m = self.0.clone();
        for (k, c) in &o.0 {
            let e = m.entry(*k).or_insert_with(Rat::zero);
            if sign > 0 {
                *e += c;
            } else {
                *e -= c;
            }
        }
        m.retain(|_, c| !c.is_zero());
        SurdExpr(m)
    }
    fn mul(&self, o: &Self) -> Self {
        let mut out = SurdExpr::default();
        for (a, x) in &self.0 {
            for (b, y) in &o.0 {
                let (g, s) = squarefree_split(a * b);
                let c = x * y * Rat::from_integer(BigInt::from(g));
                out = out.add(&SurdExpr(BTreeMap::from([(s, c)])), 1);
            }
        }
        out
    }
    pub fn radicands(&self) -> impl Iterator<Item = u64> + '_ {
        self.0.keys().copied().filter(|&k| k != 1)
    }
    pub fn to_f64(&self) -> f64 {
        self.0.iter().map(|(k, c)| super::field::rat_to_f64(c) * (*k as f64).sqrt()).sum()
    }
    /// Embed into a field that contains every radicand.
    pub fn embed(&self, field: &FieldRef) -> Result<FieldElement, AlgebraError> {
        let mut acc = FieldElement::zero(field);
        for (k, c) in &self.0 {
            let s = FieldElement::sqrt(field, *k).ok_or(AlgebraError::MissingRadicand(*k))?;
            acc = &acc + &s.scale(c);
        }
        Ok(acc)
    }
}

impl std::fmt::Display for SurdExpr {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.0.is_empty() {
            return write!(f, "0");
        }
        let mut first = true;
        for (k, c) in &self.0 {
            let neg = c < &Rat::zero();
            let mag = if neg { -c.clone() } else { c.clone() };
            if first {
                if neg {
                    write!(f, "-")?;
                }
            } else {
                write!(f, " {} ", if neg { "-" } else { "+" })?;
            }
            first = false;
            if *k == 1 {
                write!(f, "{}", mag)?;
            } else if mag.is_one() {
                write!(f, "sqrt{}", k)?;
            } else {
                write!(f, "{}*sqrt{}", mag, k)?;
            }
        }
        Ok(())
    }
}

struct Parser<'a> {
    s: &'a [u8],
    pos: usize,
}

impl<'a> Parser<'a> {
    fn err(&self, msg: &str) -> AlgebraError {
        AlgebraError::Parse { column: self.pos + 1, message: msg.to_string() }
    }
    fn skip_ws(&mut self) {
        while self.pos < self.s.len() && self.s[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }
    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.s.get(self.pos).copied()
    }
    fn digits(&mut self) -> Option<&'a str> {
        let start = self.pos;
        while self.pos < self.s.len() && self.s[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if self.pos > start {
            Some(std::str::from_utf8(&self.s[start..self.pos]).unwrap())
        } else {
            None
        }
    }
    fn integer(&mut self) -> Result<u64, AlgebraError> {
        self.skip_ws();
        let d = self.digits().ok_or_else(|| self.err("expected integer"))?;
        d.parse::<u64>().map_err(|_| self.err("integer too large"))
    }
    fn expr(&mut self) -> Result<SurdExpr, AlgebraError> {
        let mut acc = self.term()?;
        loop {
            match self.peek() {
                Some(b'+') => {
                    self.pos += 1;
                    acc = acc.add(&self.term()?, 1);
                }
                Some(b'-') => {
                    self.pos += 1;
                    acc = acc.add(&self.term()?, -1);
                }
                _ => return Ok(acc),
            }
        }
    }
    fn term(&mut self) -> Result<SurdExpr, AlgebraError> {
        let mut acc = self.unary()?;
        loop {
            match self.peek() {
                Some(b'*') => {
                    self.pos += 1;
                    acc = acc.mul(&self.unary()?);
                }
                Some(b'/') => {
                    self.pos += 1;
                    let at = self.pos;
                    let d = self.unary()?;
                    let r = d.as_rational().ok_or(AlgebraError::Parse {
                        column: at + 1,
                        message: "division is only by rationals".into(),
                    })?;
                    if r.is_zero() {
                        return Err(AlgebraError::Parse { column: at + 1, message: "division by zero".into() });
                    }
                    acc = acc.mul(&SurdExpr::rational(Rat::one() / r));
                }
                _ => return Ok(acc),
            }
        }
    }
    fn unary(&mut self) -> Result<SurdExpr, AlgebraError> {
        match self.peek() {
            Some(b'-') => {
                self.pos += 1;
                Ok(SurdExpr::default().add(&self.unary()?, -1))
            }
            Some(b'+') => {
                self.pos += 1;
                self.unary()
            }
            _ => self.atom(),
        }
    }
    fn atom(&mut self) -> Result<SurdExpr, AlgebraError> {
        match self.peek() {
            Some(b'(') => {
                self.pos += 1;
                let e = self.expr()?;
                if self.peek() != Some(b')') {
                    return Err(self.err("expected ')'"));
                }
                self.pos += 1;
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => {
                let int = self.digits().unwrap_or("0");
                let mut num: BigInt = int.parse().unwrap();
                let mut den = BigInt::one();
                if self.s.get(self.pos) == Some(&b'.') {
                    self.pos += 1;
                    let frac = self.digits().ok_or_else(|| self.err("expected digits after '.'"))?;
                    for ch in frac.bytes() {
                        num = num * 10 + BigInt::from(ch - b'0');
                        den *= 10;
                    }
                }
                Ok(SurdExpr::rational(Rat::new(num, den)))
            }
            Some(b's') => {
                if !self.s[self.pos..].starts_with(b"sqrt") {
                    return Err(self.err("unknown identifier"));
                }
                self.pos += 4;
                if self.peek() == Some(b'(') {
                    self.pos += 1;
                    let n = self.integer()?;
                    if self.peek() != Some(b')') {
                        return Err(self.err("expected ')'"));
                    }
                    self.pos += 1;
                    Ok(SurdExpr::sqrt(n))
                } else {
                    let n = self.integer()?;
                    Ok(SurdExpr::sqrt(n))
                }
            }
            Some(_) => Err(self.err("unexpected character")),
            None => Err(self.err("unexpected end of input")),
        }
    }
}

pub fn parse_scalar(text: &str) -> Result<SurdExpr, AlgebraError> {
    let mut p = Parser { s: text.as_bytes(), pos: 0 };
    let e = p.expr()?;
    if p.peek().is_some() {
        return Err(p.err("trailing input"));
    }
    Ok(e)
}

/// Build the smallest multiquadratic field containing every entry and embed the matrix.
pub fn embed_matrix(rows: &[Vec<SurdExpr>]) -> Result<(FieldRef, Vec<Vec<FieldElement>>), AlgebraError> {
    let mut rads: Vec<u64> = rows.iter().flatten().flat_map(|e| e.radicands().collect::<Vec<_>>()).collect();
    rads.sort_unstable();
    rads.dedup();
    let field = field_from_sqrts(&rads)?;
    let m = rows
        .iter()
        .map(|r| r.iter().map(|e| e.embed(&field)).collect::<Result<Vec<_>, _>>())
        .collect::<Result<Vec<_>, _>>()?;
    Ok((field, m))
}

pub fn parse_matrix(rows: &[Vec<String>]) -> Result<(FieldRef, Vec<Vec<FieldElement>>), AlgebraError> {
    let exprs = rows
        .iter()
        .map(|r| r.iter().map(|s| parse_scalar(s)).collect::<Result<Vec<_>, _>>())
        .collect::<Result<Vec<_>, _>>()?;
    embed_matrix(&exprs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grammar() {
        let e = parse_scalar("1/2 + 3*sqrt2 - sqrt7").unwrap();
        assert!((e.to_f64() - (0.5 + 3.0 * 2f64.sqrt() - 7f64.sqrt())).abs() < 1e-12);
        assert_eq!(parse_scalar("3/7").unwrap().as_rational(), Some(Rat::new(3.into(), 7.into())));
        assert_eq!(parse_scalar("sqrt12").unwrap(), parse_scalar("2*sqrt(3)").unwrap());
        assert_eq!(parse_scalar("sqrt2*sqrt3").unwrap(), parse_scalar("sqrt6").unwrap());
        assert_eq!(parse_scalar("-0.25").unwrap().as_rational(), Some(Rat::new((-1).into(), 4.into())));
        assert_eq!(parse_scalar("(1+sqrt2)*(1-sqrt2)").unwrap().as_rational(), Some(Rat::from_integer((-1).into())));
    }

    #[test]
    fn errors_carry_column() {
        match parse_scalar("1 + sqrtx") {
            Err(AlgebraError::Parse { column, .. }) => assert_eq!(column, 9),
            other => panic!("{other:?}"),
        }
        assert!(parse_scalar("1/sqrt2").is_err());
        assert!(parse_scalar("2 3").is_err());
    }

    #[test]
    fn display_roundtrip() {
        for s in ["1/2 + 3*sqrt2 - sqrt7", "-sqrt3", "0", "5/3*sqrt10"] {
            let e = parse_scalar(s).unwrap();
            assert_eq!(parse_scalar(&e.to_string()).unwrap(), e);
        }
    }
}
