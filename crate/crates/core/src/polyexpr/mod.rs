//! Sparse multivariate polynomials over ℚ, polynomial self-maps of affine
//! space, and the expression grammar used to define them.

mod parser;
mod univariate;

pub use parser::{parse_polynomial, ParseError};
pub use univariate::UniPoly;

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use thiserror::Error;

use crate::heights::{height_polynomial, HeightError, HeightValue};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PolyError {
    #[error("arity mismatch: expected {expected}, found {found}")]
    ArityMismatch { expected: usize, found: usize },
    #[error("exponent overflows u32")]
    ExponentOverflow,
}

/// Exponent vector, ordered graded-lexicographically.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Monomial(Vec<u32>);

impl Monomial {
    pub fn new(exponents: Vec<u32>) -> Self {
        Monomial(exponents)
    }

    pub fn one(arity: usize) -> Self {
        Monomial(vec![0; arity])
    }

    pub fn exponents(&self) -> &[u32] {
        &self.0
    }

    pub fn degree(&self) -> u64 {
        self.0.iter().map(|&e| e as u64).sum()
    }

    pub fn is_constant(&self) -> bool {
        self.0.iter().all(|&e| e == 0)
    }

    fn checked_mul(&self, other: &Monomial) -> Result<Monomial, PolyError> {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| a.checked_add(*b).ok_or(PolyError::ExponentOverflow))
            .collect::<Result<Vec<_>, _>>()
            .map(Monomial)
    }
}

impl Ord for Monomial {
    fn cmp(&self, other: &Self) -> Ordering {
        self.degree()
            .cmp(&other.degree())
            .then_with(|| self.0.cmp(&other.0))
    }
}

impl PartialOrd for Monomial {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// A polynomial in `arity` variables. No zero coefficient is ever stored, so
/// two polynomials are equal iff their term maps are equal.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MultivariatePolynomial {
    arity: usize,
    terms: BTreeMap<Monomial, BigRational>,
}

impl MultivariatePolynomial {
    pub fn zero(arity: usize) -> Self {
        MultivariatePolynomial {
            arity,
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(arity: usize, c: BigRational) -> Self {
        let mut p = Self::zero(arity);
        if !c.is_zero() {
            p.terms.insert(Monomial::one(arity), c);
        }
        p
    }

    /// The coordinate function `x_index` (0-based).
    pub fn variable(arity: usize, index: usize) -> Self {
        assert!(index < arity, "variable index out of range");
        let mut e = vec![0; arity];
        e[index] = 1;
        let mut p = Self::zero(arity);
        p.terms.insert(Monomial(e), BigRational::one());
        p
    }

    pub fn from_terms<I>(arity: usize, terms: I) -> Result<Self, PolyError>
    where
        I: IntoIterator<Item = (Vec<u32>, BigRational)>,
    {
        let mut p = Self::zero(arity);
        for (e, c) in terms {
            if e.len() != arity {
                return Err(PolyError::ArityMismatch {
                    expected: arity,
                    found: e.len(),
                });
            }
            p.add_term(Monomial(e), c);
        }
        Ok(p)
    }

    fn add_term(&mut self, m: Monomial, c: BigRational) {
        if c.is_zero() {
            return;
        }
        match self.terms.get_mut(&m) {
            Some(existing) => {
                *existing += c;
                if existing.is_zero() {
                    self.terms.remove(&m);
                }
            }
            None => {
                self.terms.insert(m, c);
            }
        }
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    /// Terms in descending graded-lex order.
    pub fn terms(&self) -> impl Iterator<Item = (&Monomial, &BigRational)> {
        self.terms.iter().rev()
    }

    /// Coefficients in descending graded-lex order.
    pub fn coefficients(&self) -> impl Iterator<Item = &BigRational> {
        self.terms.values().rev()
    }

    pub fn total_degree(&self) -> Option<u64> {
        self.terms.keys().map(Monomial::degree).max()
    }

    pub fn is_integral(&self) -> bool {
        self.terms.values().all(|c| c.is_integer())
    }

    pub fn height(&self) -> Result<HeightValue, HeightError> {
        height_polynomial(self.coefficients())
    }

    pub fn scale(&self, c: &BigRational) -> Self {
        if c.is_zero() {
            return Self::zero(self.arity);
        }
        MultivariatePolynomial {
            arity: self.arity,
            terms: self
                .terms
                .iter()
                .map(|(m, a)| (m.clone(), a * c))
                .collect(),
        }
    }

    pub fn checked_mul(&self, other: &Self) -> Result<Self, PolyError> {
        self.check_arity(other.arity)?;
        let mut out = Self::zero(self.arity);
        for (ma, ca) in &self.terms {
            for (mb, cb) in &other.terms {
                out.add_term(ma.checked_mul(mb)?, ca * cb);
            }
        }
        Ok(out)
    }

    pub fn checked_pow(&self, mut exp: u32) -> Result<Self, PolyError> {
        let mut base = self.clone();
        let mut acc = Self::constant(self.arity, BigRational::one());
        while exp > 0 {
            if exp & 1 == 1 {
                acc = acc.checked_mul(&base)?;
            }
            exp >>= 1;
            if exp > 0 {
                base = base.checked_mul(&base)?;
            }
        }
        Ok(acc)
    }

    fn check_arity(&self, found: usize) -> Result<(), PolyError> {
        if found == self.arity {
            Ok(())
        } else {
            Err(PolyError::ArityMismatch {
                expected: self.arity,
                found,
            })
        }
    }

    /// Exact value at `point`. Integer points take a path that clears the
    /// coefficient denominators once instead of normalizing every partial sum.
    pub fn evaluate(&self, point: &[BigRational]) -> Result<BigRational, PolyError> {
        self.check_arity(point.len())?;
        if self.terms.is_empty() {
            return Ok(BigRational::zero());
        }
        let max_exp: Vec<u32> = (0..self.arity)
            .map(|i| self.terms.keys().map(|m| m.0[i]).max().unwrap_or(0))
            .collect();
        if point.iter().all(|x| x.is_integer()) {
            let ints: Vec<BigInt> = point.iter().map(|x| x.numer().clone()).collect();
            let powers = power_table(&ints, &max_exp, BigInt::one());
            let lcm = self
                .terms
                .values()
                .fold(BigInt::one(), |acc, c| crate::arith::lcm_bigint(&acc, c.denom()));
            let mut sum = BigInt::zero();
            for (m, c) in &self.terms {
                let mut term = c.numer() * (&lcm / c.denom());
                for (i, &e) in m.0.iter().enumerate() {
                    if e > 0 {
                        term *= &powers[i][e as usize];
                    }
                }
                sum += term;
            }
            return Ok(crate::arith::ratio(sum, lcm));
        }
        let powers = power_table(point, &max_exp, BigRational::one());
        let mut sum = BigRational::zero();
        for (m, c) in &self.terms {
            let mut term = c.clone();
            for (i, &e) in m.0.iter().enumerate() {
                if e > 0 {
                    term *= &powers[i][e as usize];
                }
            }
            sum += term;
        }
        Ok(sum)
    }

    /// Renders with the given variable names; the output parses back to the
    /// same polynomial.
    pub fn format_with(&self, vars: &[String]) -> String {
        assert_eq!(vars.len(), self.arity, "one name per variable");
        if self.terms.is_empty() {
            return "0".to_string();
        }
        let mut out = String::new();
        for (k, (m, c)) in self.terms().enumerate() {
            let negative = c.is_negative();
            match (k, negative) {
                (0, true) => out.push('-'),
                (0, false) => {}
                (_, true) => out.push_str(" - "),
                (_, false) => out.push_str(" + "),
            }
            let abs = c.abs();
            let mut factors: Vec<String> = Vec::new();
            if !abs.is_one() || m.is_constant() {
                factors.push(abs.to_string());
            }
            for (i, &e) in m.0.iter().enumerate() {
                match e {
                    0 => {}
                    1 => factors.push(vars[i].clone()),
                    _ => factors.push(format!("{}^{}", vars[i], e)),
                }
            }
            out.push_str(&factors.join("*"));
        }
        out
    }

    /// Denominators of the coefficients.
    pub fn denominators(&self) -> impl Iterator<Item = &BigInt> {
        self.terms.values().map(|c| c.denom())
    }
}

fn power_table<T>(base: &[T], max_exp: &[u32], one: T) -> Vec<Vec<T>>
where
    T: Clone,
    for<'a> &'a T: Mul<&'a T, Output = T>,
{
    base.iter()
        .zip(max_exp)
        .map(|(x, &e)| {
            let mut row = Vec::with_capacity(e as usize + 1);
            row.push(one.clone());
            for k in 1..=e as usize {
                let next = &row[k - 1] * x;
                row.push(next);
            }
            row
        })
        .collect()
}

/// Default variable names: `x`, `x,y`, `x,y,z`, then `x1..xr`.
pub fn default_variables(arity: usize) -> Vec<String> {
    match arity {
        1 => vec!["x".into()],
        2 => vec!["x".into(), "y".into()],
        3 => vec!["x".into(), "y".into(), "z".into()],
        _ => (1..=arity).map(|i| format!("x{i}")).collect(),
    }
}

impl fmt::Display for MultivariatePolynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.format_with(&default_variables(self.arity)))
    }
}

impl Add for &MultivariatePolynomial {
    type Output = MultivariatePolynomial;

    fn add(self, rhs: &MultivariatePolynomial) -> MultivariatePolynomial {
        assert_eq!(self.arity, rhs.arity, "arity mismatch in addition");
        let mut out = self.clone();
        for (m, c) in &rhs.terms {
            out.add_term(m.clone(), c.clone());
        }
        out
    }
}

impl Sub for &MultivariatePolynomial {
    type Output = MultivariatePolynomial;

    fn sub(self, rhs: &MultivariatePolynomial) -> MultivariatePolynomial {
        self + &(-rhs)
    }
}

impl Neg for &MultivariatePolynomial {
    type Output = MultivariatePolynomial;

    fn neg(self) -> MultivariatePolynomial {
        MultivariatePolynomial {
            arity: self.arity,
            terms: self.terms.iter().map(|(m, c)| (m.clone(), -c)).collect(),
        }
    }
}

impl Mul for &MultivariatePolynomial {
    type Output = MultivariatePolynomial;

    fn mul(self, rhs: &MultivariatePolynomial) -> MultivariatePolynomial {
        self.checked_mul(rhs).expect("polynomial multiplication")
    }
}

/// A regular self-map `f = (f_1, ..., f_r)` of affine r-space.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PolySelfMap {
    coordinates: Vec<MultivariatePolynomial>,
}

impl PolySelfMap {
    pub fn new(coordinates: Vec<MultivariatePolynomial>) -> Result<Self, PolyError> {
        let r = coordinates.len();
        for c in &coordinates {
            if c.arity() != r {
                return Err(PolyError::ArityMismatch {
                    expected: r,
                    found: c.arity(),
                });
            }
        }
        Ok(PolySelfMap { coordinates })
    }

    pub fn identity(arity: usize) -> Self {
        PolySelfMap {
            coordinates: (0..arity)
                .map(|i| MultivariatePolynomial::variable(arity, i))
                .collect(),
        }
    }

    pub fn arity(&self) -> usize {
        self.coordinates.len()
    }

    pub fn coordinates(&self) -> &[MultivariatePolynomial] {
        &self.coordinates
    }

    pub fn apply(&self, point: &[BigRational]) -> Result<Vec<BigRational>, PolyError> {
        if point.len() != self.arity() {
            return Err(PolyError::ArityMismatch {
                expected: self.arity(),
                found: point.len(),
            });
        }
        self.coordinates.iter().map(|f| f.evaluate(point)).collect()
    }
}

/// Coordinatewise evaluation of `f` at `point`.
pub fn apply_map(f: &PolySelfMap, point: &[BigRational]) -> Result<Vec<BigRational>, PolyError> {
    f.apply(point)
}

/// A regular function `λ : A^r -> A^1`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Observable {
    polynomial: MultivariatePolynomial,
}

impl Observable {
    pub fn new(polynomial: MultivariatePolynomial) -> Self {
        Observable { polynomial }
    }

    pub fn projection(arity: usize, index: usize) -> Self {
        Observable {
            polynomial: MultivariatePolynomial::variable(arity, index),
        }
    }

    pub fn polynomial(&self) -> &MultivariatePolynomial {
        &self.polynomial
    }

    pub fn arity(&self) -> usize {
        self.polynomial.arity()
    }

    pub fn evaluate(&self, point: &[BigRational]) -> Result<BigRational, PolyError> {
        self.polynomial.evaluate(point)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn q(n: i64, d: i64) -> BigRational {
        BigRational::new(BigInt::from(n), BigInt::from(d))
    }

    fn vars(names: &[&str]) -> Vec<String> {
        names.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn evaluate_examples() {
        let f = parse_polynomial("x^2 + 1", &vars(&["x"])).unwrap();
        assert_eq!(f.evaluate(&[q(0, 1)]).unwrap(), q(1, 1));
        assert_eq!(f.evaluate(&[q(26, 1)]).unwrap(), q(677, 1));
        let g = parse_polynomial("3/2*x*y^2 - x", &vars(&["x", "y"])).unwrap();
        assert_eq!(g.evaluate(&[q(2, 1), q(1, 2)]).unwrap(), q(-5, 4));
        // integer fast path with a rational coefficient
        assert_eq!(g.evaluate(&[q(1, 1), q(1, 1)]).unwrap(), q(1, 2));
        assert_eq!(
            g.evaluate(&[q(1, 1)]),
            Err(PolyError::ArityMismatch {
                expected: 2,
                found: 1
            })
        );
    }

    #[test]
    fn apply_map_examples() {
        let v = vars(&["x", "y"]);
        let f = PolySelfMap::new(vec![
            parse_polynomial("y", &v).unwrap(),
            parse_polynomial("x + y", &v).unwrap(),
        ])
        .unwrap();
        assert_eq!(apply_map(&f, &[q(0, 1), q(1, 1)]).unwrap(), vec![q(1, 1), q(1, 1)]);
        assert_eq!(apply_map(&f, &[q(1, 1), q(1, 1)]).unwrap(), vec![q(1, 1), q(2, 1)]);
        let id = PolySelfMap::identity(3);
        let p = vec![q(1, 3), q(-2, 1), q(0, 1)];
        assert_eq!(apply_map(&id, &p).unwrap(), p);
        assert!(apply_map(&id, &p[..2]).is_err());
        assert!(PolySelfMap::new(vec![MultivariatePolynomial::zero(1), MultivariatePolynomial::zero(2)]).is_err());
    }

    #[test]
    fn format_is_graded_lex_descending() {
        let v = vars(&["x", "y"]);
        let f = parse_polynomial("1 - x + 3/2*x*y^2 + y^3", &v).unwrap();
        assert_eq!(f.format_with(&v), "3/2*x*y^2 + y^3 - x + 1");
        assert_eq!(MultivariatePolynomial::zero(2).format_with(&v), "0");
        let g = parse_polynomial("-x^2 - 1/3", &v).unwrap();
        assert_eq!(g.format_with(&v), "-x^2 - 1/3");
    }

    #[test]
    fn pow_overflow_is_an_error() {
        let v = vars(&["x"]);
        let f = parse_polynomial("x^4000000000", &v).unwrap();
        assert_eq!(f.checked_mul(&f), Err(PolyError::ExponentOverflow));
    }

    fn arb_poly() -> impl Strategy<Value = MultivariatePolynomial> {
        (1usize..=3).prop_flat_map(|arity| {
            prop::collection::vec(
                (prop::collection::vec(0u32..=2, arity), any::<i64>(), 1i64..=i64::MAX),
                0..8,
            )
            .prop_map(move |terms| {
                MultivariatePolynomial::from_terms(
                    arity,
                    terms.into_iter().map(|(e, n, d)| (e, q(n, d))),
                )
                .unwrap()
            })
        })
    }

    fn arb_point(arity: usize) -> impl Strategy<Value = Vec<BigRational>> {
        prop::collection::vec((-50i64..50, 1i64..20), arity)
            .prop_map(|v| v.into_iter().map(|(n, d)| q(n, d)).collect())
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(500))]

        #[test]
        fn format_parse_round_trip(p in arb_poly()) {
            let names = default_variables(p.arity());
            let text = p.format_with(&names);
            prop_assert_eq!(parse_polynomial(&text, &names).unwrap(), p);
        }
    }

    proptest! {
        #[test]
        fn ring_laws_under_evaluation(
            (f, g, pt) in arb_poly().prop_flat_map(|f| {
                let a = f.arity();
                (Just(f), arb_poly_of(a), arb_point(a))
            })
        ) {
            let fv = f.evaluate(&pt).unwrap();
            let gv = g.evaluate(&pt).unwrap();
            prop_assert_eq!((&f + &g).evaluate(&pt).unwrap(), &fv + &gv);
            prop_assert_eq!((&f - &g).evaluate(&pt).unwrap(), &fv - &gv);
            prop_assert_eq!((&f * &g).evaluate(&pt).unwrap(), &fv * &gv);
        }
    }

    fn arb_poly_of(arity: usize) -> impl Strategy<Value = MultivariatePolynomial> {
        prop::collection::vec(
            (prop::collection::vec(0u32..=3, arity), -1000i64..1000, 1i64..30),
            0..6,
        )
        .prop_map(move |terms| {
            MultivariatePolynomial::from_terms(arity, terms.into_iter().map(|(e, n, d)| (e, q(n, d))))
                .unwrap()
        })
    }
}
