//! Ordinals below ε₀ in Cantor normal form.
//!
//! An ordinal is a sum `ω^e₁·c₁ + … + ω^eₙ·cₙ` with strictly decreasing
//! exponents (themselves ordinals) and coefficients ≥ 1. The empty sum is 0.
//! Term-list equality is ordinal equality; all operations keep the form
//! canonical by construction.

use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

/// Maximum nesting depth of exponent towers accepted by [`Ordinal::pow`].
pub const MAX_DEPTH: usize = 64;
/// Maximum number of CNF terms an exponentiation result may have.
pub const MAX_POW_TERMS: usize = 1 << 16;

#[derive(Debug, Error, PartialEq, Eq, Clone)]
pub enum OrdinalError {
    #[error("parse error at byte {position}: {message}")]
    Parse { position: usize, message: String },
    #[error("integer literal at byte {position} overflows u64")]
    CoefficientOverflow { position: usize },
    #[error("exponent tower deeper than {max}")]
    DepthExceeded { max: usize },
    #[error("result exceeds {max} CNF terms")]
    SizeExceeded { max: usize },
    #[error("coefficient arithmetic overflows u64")]
    Overflow,
    #[error("operation undefined for 0")]
    ZeroArgument,
    #[error("operation defined only for successor ordinals; got a limit ordinal")]
    LimitArgument,
}

/// A Cantor-normal-form ordinal below ε₀.
///
/// The derived `Ord` is the ordinal order: lexicographic comparison of term
/// lists compares leading exponents, then leading coefficients, then the
/// remainders, and a proper extension of an equal prefix is larger — exactly
/// the CNF comparison rule.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Ordinal {
    terms: Vec<(Ordinal, u64)>,
}

impl Ordinal {
    pub fn zero() -> Self {
        Ordinal { terms: Vec::new() }
    }

    pub fn one() -> Self {
        Self::nat(1)
    }

    pub fn nat(n: u64) -> Self {
        Self::single(Self::zero(), n)
    }

    pub fn omega() -> Self {
        Self::omega_pow(Self::one())
    }

    /// `ω^e` (a single CNF term; `ω^0 = 1`).
    pub fn omega_pow(e: Ordinal) -> Self {
        Self::single(e, 1)
    }

    /// `ω^e·c`; zero when `c = 0`.
    pub fn single(e: Ordinal, c: u64) -> Self {
        if c == 0 {
            Self::zero()
        } else {
            Ordinal { terms: vec![(e, c)] }
        }
    }

    /// The CNF term list, leading term first.
    pub fn terms(&self) -> &[(Ordinal, u64)] {
        &self.terms
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn as_nat(&self) -> Option<u64> {
        match self.terms.as_slice() {
            [] => Some(0),
            [(e, c)] if e.is_zero() => Some(*c),
            _ => None,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.as_nat().is_some()
    }

    /// Nonzero with no final finite term.
    pub fn is_limit(&self) -> bool {
        self.terms.last().is_some_and(|(e, _)| !e.is_zero())
    }

    pub fn is_successor(&self) -> bool {
        self.terms.last().is_some_and(|(e, _)| e.is_zero())
    }

    /// Leading exponent (limit capacity) and coefficient; `None` for 0.
    pub fn leading(&self) -> Option<(&Ordinal, u64)> {
        self.terms.first().map(|(e, c)| (e, *c))
    }

    /// Coefficient of `ω^e` in the CNF, 0 if absent.
    pub fn coefficient_of(&self, e: &Ordinal) -> u64 {
        self.terms
            .iter()
            .find(|(f, _)| f == e)
            .map_or(0, |(_, c)| *c)
    }

    /// The part of the CNF strictly below `ω^e` (terms with exponent < e).
    pub fn below_exponent(&self, e: &Ordinal) -> Ordinal {
        let idx = self.terms.partition_point(|(f, _)| f >= e);
        Ordinal {
            terms: self.terms[idx..].to_vec(),
        }
    }

    pub fn successor(&self) -> Ordinal {
        self.add(&Self::one())
    }

    /// Predecessor of a successor ordinal; `None` for 0 and limits.
    pub fn pred(&self) -> Option<Ordinal> {
        let (e, c) = self.terms.last()?;
        if !e.is_zero() {
            return None;
        }
        let mut terms = self.terms.clone();
        if *c == 1 {
            terms.pop();
        } else {
            terms.last_mut().unwrap().1 -= 1;
        }
        Some(Ordinal { terms })
    }

    /// Nesting depth of the exponent tower: 0 for 0, 1 for finite ordinals.
    pub fn depth(&self) -> usize {
        self.terms
            .iter()
            .map(|(e, _)| 1 + e.depth())
            .max()
            .unwrap_or(0)
    }

    /// Ordinal sum. `None` when merging coefficients overflows u64.
    pub fn checked_add(&self, rhs: &Ordinal) -> Option<Ordinal> {
        let Some((lead, _)) = rhs.leading() else {
            return Some(self.clone());
        };
        let keep = self.terms.partition_point(|(e, _)| e > lead);
        let mut terms: Vec<(Ordinal, u64)> = self.terms[..keep].to_vec();
        let mut rest = rhs.terms.clone();
        if self.terms.get(keep).is_some_and(|(e, _)| e == lead) {
            rest[0].1 = self.terms[keep].1.checked_add(rest[0].1)?;
        }
        terms.extend(rest);
        Some(Ordinal { terms })
    }

    /// Ordinal sum; absorbs the lower terms of `self`.
    ///
    /// Panics on u64 coefficient overflow — unreachable at desk scale, and
    /// checked variants exist for the code paths where overflow is reachable.
    pub fn add(&self, rhs: &Ordinal) -> Ordinal {
        self.checked_add(rhs)
            .expect("ordinal coefficient sum overflows u64")
    }

    /// Ordinal product by left distribution over the right factor's CNF.
    pub fn checked_mul(&self, rhs: &Ordinal) -> Option<Ordinal> {
        if self.is_zero() || rhs.is_zero() {
            return Some(Self::zero());
        }
        let (e1, c1) = self.leading().unwrap();
        let mut acc = Self::zero();
        for (f, d) in &rhs.terms {
            let piece = if f.is_zero() {
                // self·d: scale the leading coefficient, keep the tail.
                let mut terms = self.terms.clone();
                terms[0].1 = c1.checked_mul(*d)?;
                Ordinal { terms }
            } else {
                Self::single(e1.checked_add(f)?, *d)
            };
            acc = acc.checked_add(&piece)?;
        }
        Some(acc)
    }

    /// Ordinal product. Panics on u64 coefficient overflow (see [`Self::add`]).
    pub fn mul(&self, rhs: &Ordinal) -> Ordinal {
        self.checked_mul(rhs)
            .expect("ordinal coefficient product overflows u64")
    }

    /// Ordinal exponentiation via the CNF recursion:
    /// `x^(t₁+…+tₙ) = x^t₁···x^tₙ`, `x^(ω^b·c) = ω^(E·c)` where `x^(ω^b) = ω^E`
    /// (`E = ω^(b⊖1)` for finite `x ≥ 2`, `E = e₁·ω^b` for infinite `x` with
    /// leading exponent `e₁`), and finite powers by square-and-multiply.
    pub fn pow(&self, rhs: &Ordinal) -> Result<Ordinal, OrdinalError> {
        if rhs.is_zero() {
            return Ok(Self::one());
        }
        if self.is_zero() {
            return Ok(Self::zero());
        }
        if self.as_nat() == Some(1) {
            return Ok(Self::one());
        }
        let mut acc = Self::one();
        for (b, c) in &rhs.terms {
            let piece = if b.is_zero() {
                self.pow_nat(*c)?
            } else {
                let e = self.omega_power_exponent(b)?;
                let ec = e
                    .checked_mul(&Self::nat(*c))
                    .ok_or(OrdinalError::Overflow)?;
                Self::omega_pow(ec)
            };
            acc = acc.checked_mul(&piece).ok_or(OrdinalError::Overflow)?;
            if acc.depth() > MAX_DEPTH {
                return Err(OrdinalError::DepthExceeded { max: MAX_DEPTH });
            }
        }
        Ok(acc)
    }

    /// `E` with `self^(ω^b) = ω^E`, for `self ≥ 2`, `b ≥ 1`.
    fn omega_power_exponent(&self, b: &Ordinal) -> Result<Ordinal, OrdinalError> {
        if self.is_finite() {
            // n^(ω^b) = ω^(ω^(b⊖1)) where 1 + (b⊖1) = b.
            let b1 = match b.as_nat() {
                Some(m) => Self::nat(m - 1),
                None => b.clone(),
            };
            Ok(Self::omega_pow(b1))
        } else {
            let (e1, _) = self.leading().unwrap();
            e1.checked_mul(&Self::omega_pow(b.clone()))
                .ok_or(OrdinalError::Overflow)
        }
    }

    fn pow_nat(&self, n: u64) -> Result<Ordinal, OrdinalError> {
        if n == 0 {
            return Ok(Self::one());
        }
        if let Some(m) = self.as_nat() {
            if m <= 1 {
                return Ok(Self::nat(m));
            }
            let exp = u32::try_from(n).map_err(|_| OrdinalError::Overflow)?;
            return m
                .checked_pow(exp)
                .map(Self::nat)
                .ok_or(OrdinalError::Overflow);
        }
        let guard = |x: &Ordinal| {
            if x.terms.len() > MAX_POW_TERMS {
                Err(OrdinalError::SizeExceeded { max: MAX_POW_TERMS })
            } else {
                Ok(())
            }
        };
        // Powers of a fixed base commute, so square-and-multiply is sound
        // despite noncommutative multiplication.
        let mut base = self.clone();
        let mut acc = Self::one();
        let mut n = n;
        loop {
            if n & 1 == 1 {
                acc = acc.checked_mul(&base).ok_or(OrdinalError::Overflow)?;
                guard(&acc)?;
            }
            n >>= 1;
            if n == 0 {
                break;
            }
            base = base.checked_mul(&base).ok_or(OrdinalError::Overflow)?;
            guard(&base)?;
        }
        Ok(acc)
    }

    /// The unique `c` with `prefix + c = self`; `None` when `prefix > self`.
    pub fn left_diff(&self, prefix: &Ordinal) -> Option<Ordinal> {
        let a = &prefix.terms;
        let b = &self.terms;
        let mut i = 0;
        loop {
            if i == a.len() {
                return Some(Ordinal {
                    terms: b[i..].to_vec(),
                });
            }
            let Some((eb, cb)) = b.get(i) else {
                return None;
            };
            let (ea, ca) = &a[i];
            match ea.cmp(eb).then(ca.cmp(cb)) {
                // prefix drops below self here; its remaining terms are
                // absorbed by the difference's leading term.
                Ordering::Less if ea < eb => {
                    return Some(Ordinal {
                        terms: b[i..].to_vec(),
                    })
                }
                Ordering::Less => {
                    let mut terms = vec![(eb.clone(), cb - ca)];
                    terms.extend_from_slice(&b[i + 1..]);
                    return Some(Ordinal { terms });
                }
                Ordering::Greater => return None,
                _ => i += 1,
            }
        }
    }

    /// Limit capacity, coefficient, and Cantor–Bendixson data.
    pub fn classify(&self) -> Result<ClassificationData, OrdinalError> {
        let Some((lc, coeff)) = self.leading() else {
            return Err(OrdinalError::ZeroArgument);
        };
        let is_limit = self.is_limit();
        let (cb_rank, cb_degree) = if is_limit {
            (None, None)
        } else {
            (Some(lc.successor()), Some(coeff))
        };
        Ok(ClassificationData {
            limit_capacity: lc.clone(),
            coefficient: coeff,
            cb_rank,
            cb_degree,
            is_limit,
        })
    }

    /// Successor ordinals are homeomorphic iff their limit capacities and
    /// coefficients agree. Errors on 0 and on limit ordinals.
    pub fn is_homeomorphic(&self, other: &Ordinal) -> Result<bool, OrdinalError> {
        let a = self.classify()?;
        let b = other.classify()?;
        if a.is_limit || b.is_limit {
            return Err(OrdinalError::LimitArgument);
        }
        Ok(a.limit_capacity == b.limit_capacity && a.coefficient == b.coefficient)
    }

    /// Rank of `self` as a point of any ambient successor-ordinal space:
    /// least CNF exponent + 1, with rank 1 for isolated points (finite
    /// ordinals and 0).
    pub fn point_rank(&self) -> Ordinal {
        match self.terms.last() {
            None => Self::one(),
            Some((e, _)) => e.successor(),
        }
    }
}

/// Limit capacity / coefficient of the leading CNF term, plus the closed-form
/// Cantor–Bendixson rank and degree (defined for successor ordinals only).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassificationData {
    pub limit_capacity: Ordinal,
    pub coefficient: u64,
    /// `limit_capacity + 1` for successors; `None` for limit ordinals.
    pub cb_rank: Option<Ordinal>,
    /// Leading coefficient for successors; `None` for limit ordinals.
    pub cb_degree: Option<u64>,
    pub is_limit: bool,
}

impl fmt::Debug for Ordinal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Ordinal({self})")
    }
}

impl fmt::Display for Ordinal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        for (i, (e, c)) in self.terms.iter().enumerate() {
            if i > 0 {
                write!(f, " + ")?;
            }
            if e.is_zero() {
                write!(f, "{c}")?;
            } else {
                write!(f, "w")?;
                if e.as_nat() != Some(1) {
                    if e.prints_as_factor() {
                        write!(f, "^{e}")?;
                    } else {
                        write!(f, "^({e})")?;
                    }
                }
                if *c > 1 {
                    write!(f, "*{c}")?;
                }
            }
        }
        Ok(())
    }
}

impl Ordinal {
    /// Whether the canonical rendering of `self` is a grammar `factor`
    /// (a bare integer or a coefficient-1 power of ω), so it may follow
    /// `^` without parentheses.
    fn prints_as_factor(&self) -> bool {
        self.is_finite() || (self.terms.len() == 1 && self.terms[0].1 == 1)
    }
}

impl From<Ordinal> for String {
    fn from(x: Ordinal) -> String {
        x.to_string()
    }
}

impl TryFrom<String> for Ordinal {
    type Error = OrdinalError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl FromStr for Ordinal {
    type Err = OrdinalError;

    /// Grammar: `expr := term ('+' term)*; term := factor ('*' posint)?;`
    /// `factor := 'w' ('^' factor)? | posint | '(' expr ')'` — whitespace
    /// insignificant; values computed with ordinal arithmetic, so any
    /// well-formed expression normalizes.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut p = Parser {
            src: s.as_bytes(),
            pos: 0,
        };
        let x = p.expr()?;
        p.skip_ws();
        if p.pos != p.src.len() {
            return Err(p.err("unexpected trailing input"));
        }
        Ok(x)
    }
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl Parser<'_> {
    fn err(&self, message: &str) -> OrdinalError {
        OrdinalError::Parse {
            position: self.pos,
            message: message.to_string(),
        }
    }

    fn skip_ws(&mut self) {
        while self.src.get(self.pos).is_some_and(u8::is_ascii_whitespace) {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn eat(&mut self, byte: u8) -> bool {
        if self.peek() == Some(byte) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expr(&mut self) -> Result<Ordinal, OrdinalError> {
        let mut acc = self.term()?;
        while self.eat(b'+') {
            acc = acc.add(&self.term()?);
        }
        Ok(acc)
    }

    fn term(&mut self) -> Result<Ordinal, OrdinalError> {
        let factor = self.factor()?;
        if self.eat(b'*') {
            let coeff = self.uint()?;
            Ok(factor.mul(&Ordinal::nat(coeff)))
        } else {
            Ok(factor)
        }
    }

    fn factor(&mut self) -> Result<Ordinal, OrdinalError> {
        match self.peek() {
            Some(b'w') => {
                self.pos += 1;
                if self.eat(b'^') {
                    let e = self.factor()?;
                    Ok(Ordinal::omega_pow(e))
                } else {
                    Ok(Ordinal::omega())
                }
            }
            Some(b'(') => {
                self.pos += 1;
                let x = self.expr()?;
                if !self.eat(b')') {
                    return Err(self.err("expected ')'"));
                }
                Ok(x)
            }
            Some(c) if c.is_ascii_digit() => Ok(Ordinal::nat(self.uint()?)),
            _ => Err(self.err("expected 'w', an integer, or '('")),
        }
    }

    fn uint(&mut self) -> Result<u64, OrdinalError> {
        self.skip_ws();
        let start = self.pos;
        while self.src.get(self.pos).is_some_and(u8::is_ascii_digit) {
            self.pos += 1;
        }
        if self.pos == start {
            return Err(self.err("expected an integer"));
        }
        std::str::from_utf8(&self.src[start..self.pos])
            .unwrap()
            .parse()
            .map_err(|_| OrdinalError::CoefficientOverflow { position: start })
    }
}
