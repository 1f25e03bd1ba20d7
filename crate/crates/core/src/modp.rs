//! Reduction of the orbit generating series modulo good primes.
//!
//! Over `F_p` the orbit of `P` lives in a set of `p^r` points, so it is
//! eventually periodic with preperiod `m` and period `c`, and
//! `Φ mod p = U(t) + t^m V(t) / (1 - t^c)`. Reducing that fraction by a gcd
//! gives the rational degree `h_p`. Berlekamp-Massey on the raw residues is
//! kept as an independent route to the same number.

use std::collections::BTreeSet;

use num_bigint::BigUint;
use num_rational::BigRational;
use num_traits::One;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::arith::{add_mod, factorize, inv_mod, mul_mod, pow_mod, primes_up_to, rational_mod, sub_mod};
use crate::dynamics::OrbitSource;
use crate::polyexpr::MultivariatePolynomial;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModpError {
    #[error("{0} divides a denominator of the model")]
    BadPrime(u64),
    #[error("{0} is not a prime below 2^61")]
    UnsupportedModulus(u64),
    #[error("need at least {needed} terms, have {have}")]
    InsufficientTerms { needed: usize, have: usize },
}

/// Primes dividing a coefficient denominator of `f` or `λ`, or a coordinate
/// denominator of `P`.
pub fn bad_primes(source: &OrbitSource) -> BTreeSet<BigUint> {
    let mut out = BTreeSet::new();
    let dens = source
        .map
        .coordinates()
        .iter()
        .flat_map(|f| f.denominators())
        .chain(source.observable.polynomial().denominators())
        .chain(source.point.iter().map(|x| x.denom()));
    for d in dens {
        if !d.is_one() {
            out.extend(factorize(d.magnitude()).into_keys());
        }
    }
    out
}

/// Dense polynomial over `F_p`, low degree first, no trailing zeros.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FpPoly {
    p: u64,
    coeffs: Vec<u64>,
}

impl FpPoly {
    pub fn new(p: u64, mut coeffs: Vec<u64>) -> Self {
        for c in coeffs.iter_mut() {
            *c %= p;
        }
        while coeffs.last() == Some(&0) {
            coeffs.pop();
        }
        FpPoly { p, coeffs }
    }

    pub fn zero(p: u64) -> Self {
        FpPoly { p, coeffs: Vec::new() }
    }

    pub fn modulus(&self) -> u64 {
        self.p
    }

    pub fn coeffs(&self) -> &[u64] {
        &self.coeffs
    }

    pub fn coeff(&self, i: usize) -> u64 {
        self.coeffs.get(i).copied().unwrap_or(0)
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn degree(&self) -> Option<usize> {
        self.coeffs.len().checked_sub(1)
    }

    pub fn scale(&self, c: u64) -> Self {
        FpPoly::new(self.p, self.coeffs.iter().map(|&a| mul_mod(a, c, self.p)).collect())
    }

    pub fn sub(&self, other: &Self) -> Self {
        let n = self.coeffs.len().max(other.coeffs.len());
        FpPoly::new(
            self.p,
            (0..n).map(|i| sub_mod(self.coeff(i), other.coeff(i), self.p)).collect(),
        )
    }

    pub fn mul(&self, other: &Self) -> Self {
        if self.is_zero() || other.is_zero() {
            return FpPoly::zero(self.p);
        }
        let mut out = vec![0u64; self.coeffs.len() + other.coeffs.len() - 1];
        for (i, &a) in self.coeffs.iter().enumerate() {
            if a == 0 {
                continue;
            }
            for (j, &b) in other.coeffs.iter().enumerate() {
                out[i + j] = add_mod(out[i + j], mul_mod(a, b, self.p), self.p);
            }
        }
        FpPoly::new(self.p, out)
    }

    pub fn div_rem(&self, divisor: &Self) -> (Self, Self) {
        let p = self.p;
        let dd = divisor.degree().expect("division by zero polynomial");
        let Some(sd) = self.degree().filter(|&sd| sd >= dd) else {
            return (FpPoly::zero(p), self.clone());
        };
        let lc_inv = inv_mod(divisor.coeffs[dd], p).unwrap();
        let mut rem = self.coeffs.clone();
        let mut quot = vec![0u64; sd - dd + 1];
        for k in (0..=sd - dd).rev() {
            let c = mul_mod(rem[k + dd], lc_inv, p);
            if c == 0 {
                continue;
            }
            for (j, &d) in divisor.coeffs.iter().enumerate() {
                rem[k + j] = sub_mod(rem[k + j], mul_mod(c, d, p), p);
            }
            quot[k] = c;
        }
        rem.truncate(dd);
        (FpPoly::new(p, quot), FpPoly::new(p, rem))
    }

    /// Monic gcd.
    pub fn gcd(&self, other: &Self) -> Self {
        let mut a = self.clone();
        let mut b = other.clone();
        while !b.is_zero() {
            let (_, r) = a.div_rem(&b);
            a = b;
            b = r;
        }
        match a.coeffs.last() {
            Some(&lc) => a.scale(inv_mod(lc, a.p).unwrap()),
            None => a,
        }
    }

    /// First `len` power-series coefficients of `self / den`; `den(0) != 0`.
    pub fn expand_over(&self, den: &Self, len: usize) -> Vec<u64> {
        let p = self.p;
        let inv0 = inv_mod(den.coeff(0), p).expect("denominator has nonzero constant term");
        let mut out = Vec::with_capacity(len);
        for n in 0..len {
            let mut acc = self.coeff(n);
            for k in 1..=n.min(den.coeffs.len().saturating_sub(1)) {
                acc = sub_mod(acc, mul_mod(den.coeffs[k], out[n - k], p), p);
            }
            out.push(mul_mod(acc, inv0, p));
        }
        out
    }
}

/// `A/B` over `F_p` with `gcd(A, B) = 1` and `B(0) = 1`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReducedFraction {
    pub numerator: FpPoly,
    pub denominator: FpPoly,
}

impl ReducedFraction {
    /// Reduces `num/den`; `den(0)` must be nonzero.
    pub fn reduce(num: &FpPoly, den: &FpPoly) -> Self {
        let p = den.modulus();
        if num.is_zero() {
            return ReducedFraction {
                numerator: FpPoly::zero(p),
                denominator: FpPoly::new(p, vec![1]),
            };
        }
        let g = num.gcd(den);
        let (a, _) = num.div_rem(&g);
        let (b, _) = den.div_rem(&g);
        let inv = inv_mod(b.coeff(0), p).expect("B(0) invertible");
        ReducedFraction {
            numerator: a.scale(inv),
            denominator: b.scale(inv),
        }
    }

    pub fn numerator_degree(&self) -> usize {
        self.numerator.degree().unwrap_or(0)
    }

    pub fn denominator_degree(&self) -> usize {
        self.denominator.degree().unwrap_or(0)
    }

    /// `max(deg A, deg B)`; zero for the zero fraction.
    pub fn degree(&self) -> usize {
        self.numerator_degree().max(self.denominator_degree())
    }

    pub fn expand(&self, len: usize) -> Vec<u64> {
        self.numerator.expand_over(&self.denominator, len)
    }
}

/// `(f, λ)` with coefficients reduced into `F_p`.
#[derive(Debug, Clone)]
pub struct ReducedModel {
    p: u64,
    coordinates: Vec<Vec<(Vec<u32>, u64)>>,
    observable: Vec<(Vec<u32>, u64)>,
    start: Vec<u64>,
}

fn reduce_poly(f: &MultivariatePolynomial, p: u64) -> Result<Vec<(Vec<u32>, u64)>, ModpError> {
    let mut out = Vec::with_capacity(f.num_terms());
    for (m, c) in f.terms() {
        let r = rational_mod(c, p).ok_or(ModpError::BadPrime(p))?;
        if r != 0 {
            out.push((m.exponents().to_vec(), r));
        }
    }
    Ok(out)
}

fn eval_reduced(terms: &[(Vec<u32>, u64)], x: &[u64], p: u64) -> u64 {
    terms.iter().fold(0, |acc, (e, c)| {
        let mut t = *c;
        for (xi, &ei) in x.iter().zip(e) {
            if ei > 0 {
                t = mul_mod(t, pow_mod(*xi, ei as u64, p), p);
            }
        }
        add_mod(acc, t, p)
    })
}

impl ReducedModel {
    pub fn new(source: &OrbitSource, p: u64) -> Result<Self, ModpError> {
        if p < 2 || p >= 1 << 61 || !crate::arith::is_prime_u64(p) {
            return Err(ModpError::UnsupportedModulus(p));
        }
        let coordinates = source
            .map
            .coordinates()
            .iter()
            .map(|f| reduce_poly(f, p))
            .collect::<Result<Vec<_>, _>>()?;
        let observable = reduce_poly(source.observable.polynomial(), p)?;
        let start = source
            .point
            .iter()
            .map(|x| rational_mod(x, p).ok_or(ModpError::BadPrime(p)))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(ReducedModel {
            p,
            coordinates,
            observable,
            start,
        })
    }

    pub fn prime(&self) -> u64 {
        self.p
    }

    pub fn start(&self) -> &[u64] {
        &self.start
    }

    pub fn step(&self, x: &[u64]) -> Vec<u64> {
        self.coordinates.iter().map(|f| eval_reduced(f, x, self.p)).collect()
    }

    pub fn observe(&self, x: &[u64]) -> u64 {
        eval_reduced(&self.observable, x, self.p)
    }

    /// `λ(fⁿP) mod p` for `n < len`.
    pub fn observable_sequence(&self, len: usize) -> Vec<u64> {
        let mut x = self.start.clone();
        let mut out = Vec::with_capacity(len);
        for _ in 0..len {
            out.push(self.observe(&x));
            x = self.step(&x);
        }
        out
    }
}

/// Minimal preperiod `m` and period `c` of the orbit of the start point, by
/// Brent's algorithm.
pub fn cycle_structure(model: &ReducedModel) -> (usize, usize) {
    let x0 = model.start().to_vec();
    let mut power = 1usize;
    let mut lam = 1usize;
    let mut tortoise = x0.clone();
    let mut hare = model.step(&x0);
    while tortoise != hare {
        if power == lam {
            tortoise = hare.clone();
            power *= 2;
            lam = 0;
        }
        hare = model.step(&hare);
        lam += 1;
    }
    let mut tortoise = x0.clone();
    let mut hare = x0;
    for _ in 0..lam {
        hare = model.step(&hare);
    }
    let mut mu = 0usize;
    while tortoise != hare {
        tortoise = model.step(&tortoise);
        hare = model.step(&hare);
        mu += 1;
    }
    (mu, lam)
}

/// Degree data of `Φ mod p` for one good prime.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModPProfile {
    pub p: u64,
    pub preperiod: usize,
    pub period: usize,
    pub numerator_degree: usize,
    pub denominator_degree: usize,
    pub h_p: usize,
    #[serde(serialize_with = "crate::serialize_display")]
    pub bound_2pr: BigUint,
    #[serde(skip)]
    pub fraction: ReducedFraction,
}

impl ModPProfile {
    pub fn csv_header() -> &'static str {
        "p,m,c,deg_num,deg_den,h_p,bound_2pr"
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.p,
            self.preperiod,
            self.period,
            self.numerator_degree,
            self.denominator_degree,
            self.h_p,
            self.bound_2pr
        )
    }
}

/// `U(t)(1 - t^c) + t^m V(t)` over `1 - t^c`, reduced.
pub fn fraction_from_cycle(prefix: &[u64], m: usize, c: usize, p: u64) -> ReducedFraction {
    assert!(prefix.len() >= m + c, "prefix must cover preperiod and one period");
    let mut num = prefix[..m + c].to_vec();
    for n in 0..m {
        num[n + c] = sub_mod(num[n + c], prefix[n], p);
    }
    let mut den = vec![0u64; c + 1];
    den[0] = 1;
    den[c] = sub_mod(den[c], 1, p);
    ReducedFraction::reduce(&FpPoly::new(p, num), &FpPoly::new(p, den))
}

pub fn rational_degree_mod_p(source: &OrbitSource, p: u64) -> Result<ModPProfile, ModpError> {
    let model = ReducedModel::new(source, p)?;
    let (m, c) = cycle_structure(&model);
    let prefix = model.observable_sequence(m + c);
    let fraction = fraction_from_cycle(&prefix, m, c, p);
    let r = u32::try_from(source.arity()).expect("dimension fits in u32");
    Ok(ModPProfile {
        p,
        preperiod: m,
        period: c,
        numerator_degree: fraction.numerator_degree(),
        denominator_degree: fraction.denominator_degree(),
        h_p: fraction.degree(),
        bound_2pr: BigUint::from(p).pow(r) * 2u32,
        fraction,
    })
}

/// Connection polynomial `C(t) = 1 + c_1 t + ... ` and linear complexity of
/// the shortest LFSR generating `seq` over `F_p`.
pub fn berlekamp_massey(seq: &[u64], p: u64) -> (FpPoly, usize) {
    let mut c = vec![1u64];
    let mut b = vec![1u64];
    let mut l = 0usize;
    let mut shift = 1usize;
    let mut last_d = 1u64;
    for i in 0..seq.len() {
        let mut d = seq[i] % p;
        for j in 1..=l.min(c.len() - 1) {
            d = add_mod(d, mul_mod(c[j], seq[i - j], p), p);
        }
        if d == 0 {
            shift += 1;
            continue;
        }
        let coef = mul_mod(d, inv_mod(last_d, p).unwrap(), p);
        let prev = c.clone();
        if c.len() < b.len() + shift {
            c.resize(b.len() + shift, 0);
        }
        for (j, &bj) in b.iter().enumerate() {
            c[j + shift] = sub_mod(c[j + shift], mul_mod(coef, bj, p), p);
        }
        if 2 * l <= i {
            l = i + 1 - l;
            b = prev;
            last_d = d;
            shift = 1;
        } else {
            shift += 1;
        }
    }
    c.truncate(l + 1);
    (FpPoly::new(p, c), l)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BmDegree {
    pub order: usize,
    pub degree: usize,
    pub fraction: ReducedFraction,
}

/// Rational degree of `Σ s_n tⁿ` from the minimal recurrence. Needs at least
/// `2L` terms for the recurrence of order `L` to be determined.
pub fn berlekamp_massey_degree(seq: &[u64], p: u64) -> Result<BmDegree, ModpError> {
    if seq.is_empty() {
        return Err(ModpError::InsufficientTerms { needed: 1, have: 0 });
    }
    let (conn, order) = berlekamp_massey(seq, p);
    if seq.len() < 2 * order {
        return Err(ModpError::InsufficientTerms {
            needed: 2 * order,
            have: seq.len(),
        });
    }
    let s = FpPoly::new(p, seq[..order].to_vec());
    let prod = s.mul(&conn);
    let num = FpPoly::new(p, prod.coeffs().iter().take(order).copied().collect());
    let fraction = ReducedFraction::reduce(&num, &conn);
    Ok(BmDegree {
        order,
        degree: fraction.degree(),
        fraction,
    })
}

/// Reduces a rational coefficient prefix mod `p` and runs Berlekamp-Massey.
/// Meant for series that are not backed by an orbit.
pub fn series_fraction_mod_p(coefficients: &[BigRational], p: u64) -> Result<BmDegree, ModpError> {
    let seq = coefficients
        .iter()
        .map(|c| rational_mod(c, p).ok_or(ModpError::BadPrime(p)))
        .collect::<Result<Vec<_>, _>>()?;
    berlekamp_massey_degree(&seq, p)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    pub profiles: Vec<ModPProfile>,
    pub skipped: Vec<u64>,
}

impl SweepResult {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(ModPProfile::csv_header());
        out.push('\n');
        for prof in &self.profiles {
            out.push_str(&prof.csv_row());
            out.push('\n');
        }
        out
    }
}

fn sweep_primes(source: &OrbitSource, p_max: u64) -> (Vec<u64>, Vec<u64>) {
    let bad = bad_primes(source);
    primes_up_to(p_max)
        .into_iter()
        .partition(|p| !bad.contains(&BigUint::from(*p)))
}

/// One profile per good prime `p <= p_max`, ascending, computed in parallel.
pub fn degree_profile_sweep(source: &OrbitSource, p_max: u64) -> SweepResult {
    let (good, skipped) = sweep_primes(source, p_max);
    let profiles = good
        .par_iter()
        .map(|&p| rational_degree_mod_p(source, p).expect("good prime"))
        .collect();
    SweepResult { profiles, skipped }
}

pub fn degree_profile_sweep_sequential(source: &OrbitSource, p_max: u64) -> SweepResult {
    let (good, skipped) = sweep_primes(source, p_max);
    let profiles = good
        .iter()
        .map(|&p| rational_degree_mod_p(source, p).expect("good prime"))
        .collect();
    SweepResult { profiles, skipped }
}
