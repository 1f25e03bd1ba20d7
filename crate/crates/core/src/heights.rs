//! Absolute logarithmic Weil heights over the rationals.
//!
//! Every height is carried twice: as the exact integer `H = max_j |x_j|` of the
//! primitive integer representative of a projective point, and as `ln H`. All
//! comparisons that decide something are made on the integer side.

use std::collections::BTreeMap;
use std::fmt;

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use serde::Serialize;
use thiserror::Error;

use crate::arith::{factorize, gcd_bigint, lcm_bigint, ln_biguint};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum HeightError {
    #[error("every projective coordinate is zero")]
    AllZero,
    #[error("polynomial is identically zero")]
    ZeroPolynomial,
    #[error("place decomposition of zero is undefined")]
    ZeroInput,
}

/// `H` and `ln H` for a projective point over the rationals.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HeightValue {
    #[serde(serialize_with = "crate::serialize_display")]
    pub multiplicative: BigUint,
    pub logarithmic: f64,
}

impl HeightValue {
    pub fn from_multiplicative(multiplicative: BigUint) -> Self {
        debug_assert!(!multiplicative.is_zero());
        let logarithmic = ln_biguint(&multiplicative);
        HeightValue {
            multiplicative,
            logarithmic,
        }
    }

    /// Height of the point `[1]`, i.e. zero.
    pub fn zero() -> Self {
        HeightValue {
            multiplicative: BigUint::one(),
            logarithmic: 0.0,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.multiplicative.is_one()
    }
}

impl fmt::Display for HeightValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ln({}) = {}", self.multiplicative, self.logarithmic)
    }
}

/// Primitive integer representative of `[x_0 : ... : x_n]`: gcd 1, first
/// nonzero entry positive.
pub fn normalize_projective(coords: &[BigRational]) -> Result<Vec<BigInt>, HeightError> {
    let first = coords
        .iter()
        .find(|c| !c.is_zero())
        .ok_or(HeightError::AllZero)?;
    let lcm = coords
        .iter()
        .fold(BigInt::one(), |acc, c| lcm_bigint(&acc, c.denom()));
    let mut ints: Vec<BigInt> = coords
        .iter()
        .map(|c| if c.denom().is_one() { c.numer() * &lcm } else { c.numer() * (&lcm / c.denom()) })
        .collect();
    let mut g = BigInt::zero();
    for x in &ints {
        g = gcd_bigint(&g, x);
        if g.is_one() {
            break;
        }
    }
    let flip = first.is_negative();
    for x in ints.iter_mut() {
        if !g.is_one() {
            *x = &*x / &g;
        }
        if flip {
            *x = -&*x;
        }
    }
    Ok(ints)
}

pub fn height_projective(coords: &[BigRational]) -> Result<HeightValue, HeightError> {
    let ints = normalize_projective(coords)?;
    let max = ints
        .iter()
        .map(|x| x.magnitude())
        .max()
        .cloned()
        .expect("nonempty after normalization");
    Ok(HeightValue::from_multiplicative(max))
}

/// `h([1 : x_1 : ... : x_r])`. For lowest-terms coordinates this is
/// `max(L, max_i |num_i| * L / den_i)` with `L` the lcm of the denominators,
/// which avoids a gcd pass over huge orbit values.
pub fn height_affine(point: &[BigRational]) -> HeightValue {
    let lcm = point
        .iter()
        .fold(BigInt::one(), |acc, c| lcm_bigint(&acc, c.denom()));
    let mut max = lcm.magnitude().clone();
    for c in point {
        let scaled = c.numer().magnitude() * (lcm.magnitude() / c.denom().magnitude());
        if scaled > max {
            max = scaled;
        }
    }
    HeightValue::from_multiplicative(max)
}

/// Height of a single rational, `ln max(|num|, den)`.
pub fn height_rational(x: &BigRational) -> HeightValue {
    height_affine(std::slice::from_ref(x))
}

/// Height of a polynomial's coefficient vector viewed as a projective point.
/// The value does not depend on the order in which coefficients are supplied.
pub fn height_polynomial<'a, I>(coefficients: I) -> Result<HeightValue, HeightError>
where
    I: IntoIterator<Item = &'a BigRational>,
{
    let coeffs: Vec<BigRational> = coefficients.into_iter().cloned().collect();
    height_projective(&coeffs).map_err(|_| HeightError::ZeroPolynomial)
}

/// Per-place data of a nonzero rational `c`: `ln|c|` and the nonzero
/// valuations `v_p(c)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlaceDecomposition {
    pub archimedean_log: f64,
    #[serde(serialize_with = "crate::serialize_display_map")]
    pub finite_parts: BTreeMap<BigUint, i64>,
}

impl PlaceDecomposition {
    /// `Σ_v log|c|_v` evaluated in floating point; zero up to rounding.
    pub fn log_sum(&self) -> f64 {
        self.archimedean_log
            - self
                .finite_parts
                .iter()
                .map(|(p, v)| *v as f64 * ln_biguint(p))
                .sum::<f64>()
    }

    /// Integer form of the product formula: the valuations rebuild `|c|`
    /// exactly.
    pub fn product_formula_holds(&self, c: &BigRational) -> bool {
        let mut num = BigUint::one();
        let mut den = BigUint::one();
        for (p, &v) in &self.finite_parts {
            if v > 0 {
                num *= p.pow(v as u32);
            } else {
                den *= p.pow((-v) as u32);
            }
        }
        &num == c.numer().magnitude() && &den == c.denom().magnitude()
    }
}

pub fn place_decomposition(c: &BigRational) -> Result<PlaceDecomposition, HeightError> {
    if c.is_zero() {
        return Err(HeightError::ZeroInput);
    }
    let mut finite_parts = BTreeMap::new();
    for (p, e) in factorize(c.numer().magnitude()) {
        finite_parts.insert(p, e as i64);
    }
    for (p, e) in factorize(c.denom().magnitude()) {
        finite_parts.insert(p, -(e as i64));
    }
    let archimedean_log = ln_biguint(c.numer().magnitude()) - ln_biguint(c.denom().magnitude());
    Ok(PlaceDecomposition {
        archimedean_log,
        finite_parts,
    })
}

/// Multiplicative form of `log r + Σ_v max_j log⁺|α_j|_v`:
/// `r * max(1, max_j |α_j|) * lcm_j(den α_j)`. The finite places contribute
/// `max_j v_p(den α_j) ln p`, whose sum over `p` is the log of the lcm.
pub fn sum_height_bound_multiplicative(terms: &[BigRational]) -> BigRational {
    assert!(!terms.is_empty(), "sum bound needs at least one term");
    let one = BigRational::one();
    let arch = terms
        .iter()
        .map(|t| t.abs())
        .fold(one, |acc, t| if t > acc { t } else { acc });
    let lcm = terms
        .iter()
        .fold(BigInt::one(), |acc, t| lcm_bigint(&acc, t.denom()));
    arch * BigRational::from_integer(lcm) * BigRational::from_integer(BigInt::from(terms.len()))
}

/// `ln r + Σ_v max_j log⁺|α_j|_v`.
pub fn sum_height_bound(terms: &[BigRational]) -> f64 {
    let m = sum_height_bound_multiplicative(terms);
    ln_biguint(m.numer().magnitude()) - ln_biguint(m.denom().magnitude())
}
