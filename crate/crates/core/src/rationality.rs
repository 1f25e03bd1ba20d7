//! Rationality of the orbit generating series.
//!
//! A Padé approximant `Q F - P ≡ 0 mod t^{(2+η)L}` with `deg P, deg Q <
//! (1+η)L` is built by the extended Euclidean algorithm on `(t^{N+1}, F_{/N})`
//! and then checked far beyond the order it was built at, and modulo sampled
//! good primes. The prime-sum inequality
//!
//! ```text
//! Σ_{p : h_p < n/(2+η)} ln p  >  (3/2) ln n + (1 + 1/η) h(F_{/n})
//! ```
//!
//! is evaluated with the sum truncated at a prime budget, so it can certify
//! that the inequality holds but never that it fails.

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::arith::{lcm_bigint, ln_biguint, rational_mod};
use crate::dynamics::{CoefficientSeries, DynamicsError};
use crate::heights::{height_polynomial, height_rational, HeightValue};
use crate::modp::{degree_profile_sweep, rational_degree_mod_p, series_fraction_mod_p, FpPoly, ModPProfile, ReducedFraction};
use crate::polyexpr::UniPoly;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RationalityError {
    #[error("degree split ({deg_num}, {deg_den}) is infeasible with {terms} terms")]
    DegreeSplitInfeasible {
        deg_num: usize,
        deg_den: usize,
        terms: usize,
    },
    #[error("eta * L = {0} is not an integer")]
    NonIntegralEtaL(String),
    #[error("eta must be positive")]
    NonPositiveEta,
    #[error("need {needed} coefficients, have {have}")]
    InsufficientCoefficients { needed: usize, have: usize },
    #[error("need at least one nonzero coefficient in the window")]
    InsufficientData,
    #[error(transparent)]
    Series(#[from] DynamicsError),
}

/// `P/Q` with `gcd(P, Q) = 1`, `Q(0) = 1` and `Q F - P ≡ 0 mod t^{contact_order + 1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct PadeApproximant {
    pub numerator: UniPoly,
    pub denominator: UniPoly,
    pub contact_order: usize,
}

/// Index of the first nonzero coefficient of `Q F - P` below `len`, if any.
/// Runs over ℤ after clearing denominators so huge coefficients stay cheap.
fn first_defect(numerator: &UniPoly, denominator: &UniPoly, coeffs: &[BigRational], len: usize) -> Option<usize> {
    let len = len.min(coeffs.len());
    let den_f = common_denominator(&coeffs[..len]);
    let den_pq = common_denominator(numerator.coeffs().iter().chain(denominator.coeffs()));
    let scaled = |c: &BigRational, d: &BigInt| c.numer() * (d / c.denom());
    let f: Vec<BigInt> = coeffs[..len].iter().map(|c| scaled(c, &den_f)).collect();
    let q: Vec<BigInt> = denominator.coeffs().iter().map(|c| scaled(c, &den_pq)).collect();
    let both = &den_f * &den_pq;
    (0..len).find(|&n| {
        let mut acc: BigInt = q
            .iter()
            .enumerate()
            .take(n + 1)
            .filter(|(_, a)| !a.is_zero())
            .map(|(i, a)| a * &f[n - i])
            .sum();
        acc -= scaled(&numerator.coeff(n), &both);
        !acc.is_zero()
    })
}

fn common_denominator<'a>(coeffs: impl IntoIterator<Item = &'a BigRational>) -> BigInt {
    coeffs
        .into_iter()
        .fold(BigInt::one(), |acc, c| lcm_bigint(&acc, c.denom()))
}

/// Largest `K < coeffs.len()` with `Q F - P ≡ 0 mod t^{K+1}`; `None` if even
/// the constant term disagrees.
pub fn contact_order(numerator: &UniPoly, denominator: &UniPoly, coeffs: &[BigRational]) -> Option<usize> {
    match first_defect(numerator, denominator, coeffs, coeffs.len()) {
        None => coeffs.len().checked_sub(1),
        Some(i) => i.checked_sub(1),
    }
}

/// Large primes for the modular pre-screen.
const SCREEN_PRIMES: [u64; 2] = [2_305_843_009_213_693_951, 4_294_967_291];

/// Runs the Padé construction over `F_p` and returns the contact order of the
/// resulting fraction with `coeffs` mod `p`, or `None` if `p` is unusable or
/// the construction degenerates.
fn modular_contact(coeffs: &[BigRational], order: usize, deg_num: usize, deg_den: usize, p: u64) -> Option<usize> {
    let f: Vec<u64> = coeffs.iter().map(|c| rational_mod(c, p)).collect::<Option<_>>()?;
    let mut unit = vec![0u64; order + 1];
    unit[order] = 1;
    let mut r_prev = FpPoly::new(p, unit);
    let mut r_cur = FpPoly::new(p, f[..order].to_vec());
    let mut s_prev = FpPoly::zero(p);
    let mut s_cur = FpPoly::new(p, vec![1]);
    while r_cur.degree().is_some_and(|d| d > deg_num) {
        let (q, r) = r_prev.div_rem(&r_cur);
        let s_next = s_prev.sub(&q.mul(&s_cur));
        r_prev = std::mem::replace(&mut r_cur, r);
        s_prev = std::mem::replace(&mut s_cur, s_next);
    }
    if s_cur.degree().unwrap_or(0) > deg_den || s_cur.coeff(0) == 0 {
        return None;
    }
    let expanded = ReducedFraction::reduce(&r_cur, &s_cur).expand(f.len());
    match expanded.iter().zip(&f).position(|(a, b)| a != b) {
        None => Some(f.len() - 1),
        Some(i) => i.checked_sub(1),
    }
}

/// Padé approximant of type `(deg_num_max, deg_den_max)` for the truncation
/// `coeffs = [c_0, ..., c_N]`, reduced and normalized to `Q(0) = 1`.
pub fn pade_via_euclid(
    coeffs: &[BigRational],
    deg_num_max: usize,
    deg_den_max: usize,
) -> Result<PadeApproximant, RationalityError> {
    let terms = coeffs.len();
    let infeasible = || RationalityError::DegreeSplitInfeasible {
        deg_num: deg_num_max,
        deg_den: deg_den_max,
        terms,
    };
    if terms < deg_num_max + deg_den_max + 1 {
        return Err(infeasible());
    }
    // r_i ≡ s_i F mod t^{N+1} throughout
    let mut r_prev = UniPoly::monomial(terms);
    let mut r_cur = UniPoly::new(coeffs.to_vec());
    let mut s_prev = UniPoly::zero();
    let mut s_cur = UniPoly::one();
    while r_cur.degree().is_some_and(|d| d > deg_num_max) {
        let (q, r) = r_prev.div_rem(&r_cur);
        let s_next = &s_prev - &(&q * &s_cur);
        r_prev = std::mem::replace(&mut r_cur, r);
        s_prev = std::mem::replace(&mut s_cur, s_next);
    }
    let (mut num, mut den) = (r_cur, s_cur);
    if den.degree().unwrap_or(0) > deg_den_max {
        return Err(infeasible());
    }
    while den.coeff(0).is_zero() {
        if !num.coeff(0).is_zero() {
            return Err(infeasible());
        }
        num = UniPoly::new(num.coeffs().iter().skip(1).cloned().collect());
        den = UniPoly::new(den.coeffs().iter().skip(1).cloned().collect());
    }
    let g = num.gcd(&den);
    if g.degree().unwrap_or(0) > 0 {
        num = num.div_rem(&g).0;
        den = den.div_rem(&g).0;
    }
    let (den, inv) = den.normalize_constant_term().expect("Q(0) != 0");
    let num = num.scale(&inv);
    match contact_order(&num, &den, coeffs) {
        Some(k) if k + 1 >= terms => Ok(PadeApproximant {
            numerator: num,
            denominator: den,
            contact_order: k,
        }),
        _ => Err(infeasible()),
    }
}

fn check_eta_l(l: usize, eta: &BigRational) -> Result<BigInt, RationalityError> {
    if !eta.is_positive() {
        return Err(RationalityError::NonPositiveEta);
    }
    let eta_l = eta * BigRational::from_integer(BigInt::from(l));
    if !eta_l.is_integer() {
        return Err(RationalityError::NonIntegralEtaL(crate::rational_string(&eta_l)));
    }
    Ok(eta_l.to_integer())
}

fn ratio_to_f64(x: &BigRational) -> f64 {
    x.to_f64().expect("finite ratio")
}

/// `½ ln N + (1/η) h_trunc` with `N = (1+η)L`; the discriminant term
/// vanishes over ℚ.
pub fn siegel_height_bound(l: usize, eta: &BigRational, h_trunc: f64) -> Result<f64, RationalityError> {
    let eta_l = check_eta_l(l, eta)?;
    let n = BigInt::from(l) + eta_l;
    Ok(0.5 * ratio_to_f64(&BigRational::from_integer(n)).ln() + h_trunc / ratio_to_f64(eta))
}

#[derive(Debug, Clone, PartialEq)]
pub enum RationalityVerdict {
    Rational {
        numerator: UniPoly,
        denominator: UniPoly,
        verified_order: usize,
        confirmed_primes: Vec<u64>,
        denominator_height: f64,
        siegel_bound: f64,
    },
    /// `max_contact` is exact when the approximant was built over ℚ. When
    /// the modular screen rejected first it is the largest contact order seen
    /// modulo the screening primes, an upper bound for the exact one.
    Undecided {
        max_contact: Option<usize>,
        reason: String,
    },
}

impl RationalityVerdict {
    pub fn is_rational(&self) -> bool {
        matches!(self, RationalityVerdict::Rational { .. })
    }
}

fn reduce_uni_mod_p(poly: &UniPoly, p: u64) -> Option<FpPoly> {
    let coeffs = poly
        .coeffs()
        .iter()
        .map(|c| rational_mod(c, p))
        .collect::<Option<Vec<_>>>()?;
    Some(FpPoly::new(p, coeffs))
}

/// Semi-decision for rationality. Builds the approximant from the first
/// `(2+η)L` coefficients with `deg Q = ⌈N/2⌉`, `deg P = N - deg Q`, then
/// demands exact agreement through `t^{n_verify}` and agreement of the reduced
/// fractions modulo every sampled good prime. Never claims irrationality.
pub fn check_rationality(
    series: &mut CoefficientSeries,
    l: usize,
    eta: &BigRational,
    n_verify: usize,
    sample_primes: &[u64],
) -> Result<RationalityVerdict, RationalityError> {
    let eta_l = check_eta_l(l, eta)?;
    let order = (BigInt::from(2 * l) + eta_l)
        .to_usize()
        .expect("order fits in usize");
    let needed = order.max(n_verify + 1);
    if series.len() < needed {
        match series.extend_to(needed) {
            Ok(()) => {}
            Err(DynamicsError::InsufficientData) => {
                return Err(RationalityError::InsufficientCoefficients {
                    needed,
                    have: series.len(),
                })
            }
            Err(e) => return Err(e.into()),
        }
    }
    let coeffs = series.coefficients();
    let n = order - 1;
    let deg_den = n.div_ceil(2);
    let deg_num = n - deg_den;
    let verify = &coeffs[..n_verify + 1];
    // A rejection here can only turn a verdict into Undecided, so the screen
    // never compromises soundness; it spares the exact Euclid over ℚ when the
    // approximant is bound to break.
    let screened: Vec<Option<usize>> = SCREEN_PRIMES
        .iter()
        .map(|&p| modular_contact(verify, order, deg_num, deg_den, p))
        .collect();
    if screened.iter().all(|c| c.is_some_and(|c| c < n_verify)) {
        return Ok(RationalityVerdict::Undecided {
            max_contact: screened.iter().flatten().copied().max(),
            reason: format!("approximant breaks before order {n_verify} modulo large primes"),
        });
    }
    let pade = match pade_via_euclid(&coeffs[..order], deg_num, deg_den) {
        Ok(p) => p,
        Err(RationalityError::DegreeSplitInfeasible { .. }) => {
            return Ok(RationalityVerdict::Undecided {
                max_contact: None,
                reason: "no normalized approximant at the construction order".into(),
            })
        }
        Err(e) => return Err(e),
    };
    let contact = contact_order(&pade.numerator, &pade.denominator, verify);
    if contact != Some(n_verify) {
        return Ok(RationalityVerdict::Undecided {
            max_contact: contact,
            reason: format!("approximant breaks before order {n_verify}"),
        });
    }
    let good: Vec<u64> = sample_primes
        .iter()
        .copied()
        .filter(|&p| !series.is_bad_prime(p))
        .collect();
    let checks: Vec<Result<bool, String>> = good
        .par_iter()
        .map(|&p| {
            let observed: ReducedFraction = match series.source() {
                Some(src) => rational_degree_mod_p(src, p).map_err(|e| e.to_string())?.fraction,
                None => series_fraction_mod_p(verify, p).map_err(|e| e.to_string())?.fraction,
            };
            let (Some(a), Some(b)) = (
                reduce_uni_mod_p(&pade.numerator, p),
                reduce_uni_mod_p(&pade.denominator, p),
            ) else {
                return Ok(false);
            };
            Ok(ReducedFraction::reduce(&a, &b) == observed)
        })
        .collect();
    for (p, check) in good.iter().zip(&checks) {
        match check {
            Ok(true) => {}
            Ok(false) => {
                return Ok(RationalityVerdict::Undecided {
                    max_contact: contact,
                    reason: format!("reduction mod {p} disagrees"),
                })
            }
            Err(e) => {
                return Ok(RationalityVerdict::Undecided {
                    max_contact: contact,
                    reason: format!("mod {p} check unavailable: {e}"),
                })
            }
        }
    }
    let h_trunc = height_polynomial(&coeffs[..order])
        .map(|h| h.logarithmic)
        .unwrap_or(0.0);
    let denominator_height = pade.denominator.height().map(|h| h.logarithmic).unwrap_or(0.0);
    Ok(RationalityVerdict::Rational {
        numerator: pade.numerator,
        denominator: pade.denominator,
        verified_order: n_verify,
        confirmed_primes: good,
        denominator_height,
        siegel_bound: siegel_height_bound(l, eta, h_trunc)?,
    })
}

/// `h(F_{/n})`; the all-zero truncation has height zero.
pub fn truncation_height(series: &mut CoefficientSeries, n: usize) -> Result<HeightValue, RationalityError> {
    if series.len() < n + 1 {
        series.extend_to(n + 1).map_err(|e| match e {
            DynamicsError::InsufficientData => RationalityError::InsufficientCoefficients {
                needed: n + 1,
                have: series.len(),
            },
            e => e.into(),
        })?;
    }
    Ok(height_polynomial(&series.coefficients()[..=n]).unwrap_or_else(|_| HeightValue::zero()))
}

/// Checks `h(F_{/n}) <= (|S'| + 1) max_{j<=n} h(c_j)` exactly, as
/// `H(F_{/n}) <= (max_j H(c_j))^{|S'|+1}`.
pub fn truncation_upper_bound_holds(series: &CoefficientSeries, n: usize) -> bool {
    let coeffs = &series.coefficients()[..=n];
    let trunc = height_polynomial(coeffs).unwrap_or_else(|_| HeightValue::zero());
    let max_h = coeffs
        .iter()
        .map(|c| height_rational(c).multiplicative)
        .max()
        .unwrap_or_else(BigUint::one);
    let places = u32::try_from(series.bad_primes().len() + 1).expect("few bad primes");
    trunc.multiplicative <= max_h.pow(places)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CriterionVerdict {
    ProvedHolds,
    FailsWithinBudget,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CriterionRow {
    pub n: usize,
    pub lhs: f64,
    pub rhs: f64,
    pub lower_bound: bool,
    pub verdict: CriterionVerdict,
}

/// The lower bound `h(Φ_{/n}) >= (1/3)(n/6)^{1/r}` that a non-rational orbit
/// series must satisfy for arbitrarily large `n`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GrowthLowerBoundRow {
    pub n: usize,
    pub h_trunc: f64,
    pub threshold: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CriterionReport {
    #[serde(serialize_with = "crate::serialize_rational")]
    pub eta: BigRational,
    pub prime_budget: u64,
    pub rows: Vec<CriterionRow>,
    pub eq9_rows: Vec<GrowthLowerBoundRow>,
    /// Requested `n` that could not be reached within the bit budget.
    pub unreachable: Vec<usize>,
}

/// `ln M >= (1/3)(n/6)^{1/r}`. For `r = 1` this is `M^18 >= e^n`, decided
/// with rational bounds on `e`; otherwise a relative margin of `1e-12` covers
/// floating-point error and anything inside the margin counts as failing.
fn growth_lower_bound_holds(h: &HeightValue, n: usize, r: usize) -> bool {
    if r == 1 {
        let m18 = BigRational::from_integer(BigInt::from(h.multiplicative.pow(18)));
        let e_upper = BigRational::new(BigInt::from(27183), BigInt::from(10000));
        let e_lower = BigRational::new(BigInt::from(27182), BigInt::from(10000));
        let n32 = i32::try_from(n).expect("n fits in i32");
        if m18 >= e_upper.pow(n32) {
            return true;
        }
        if m18 < e_lower.pow(n32) {
            return false;
        }
    }
    let threshold = (n as f64 / 6.0).powf(1.0 / r as f64) / 3.0;
    h.logarithmic * (1.0 - 1e-12) >= threshold * (1.0 + 1e-12)
}

pub fn growth_lower_bound_rows(
    series: &mut CoefficientSeries,
    r: usize,
    ns: &[usize],
) -> Result<Vec<GrowthLowerBoundRow>, RationalityError> {
    ns.iter()
        .map(|&n| {
            let h = truncation_height(series, n)?;
            Ok(GrowthLowerBoundRow {
                n,
                h_trunc: h.logarithmic,
                threshold: (n as f64 / 6.0).powf(1.0 / r as f64) / 3.0,
                holds: growth_lower_bound_holds(&h, n, r),
            })
        })
        .collect()
}

/// Certified `h_p` for good primes up to `p_max`. Only orbit-backed series
/// have them; raw series yield none.
fn certified_profiles(series: &CoefficientSeries, p_max: u64) -> Vec<ModPProfile> {
    match series.source() {
        Some(src) => degree_profile_sweep(src, p_max).profiles,
        None => Vec::new(),
    }
}

pub fn criterion_check(
    series: &mut CoefficientSeries,
    eta: &BigRational,
    n_values: &[usize],
    p_max: u64,
) -> Result<CriterionReport, RationalityError> {
    if !eta.is_positive() {
        return Err(RationalityError::NonPositiveEta);
    }
    let profiles = certified_profiles(series, p_max);
    criterion_from_profiles(series, eta, n_values, p_max, &profiles)
}

/// As [`criterion_check`] with the degree profiles supplied by the caller.
pub fn criterion_from_profiles(
    series: &mut CoefficientSeries,
    eta: &BigRational,
    n_values: &[usize],
    p_max: u64,
    profiles: &[ModPProfile],
) -> Result<CriterionReport, RationalityError> {
    let two_plus_eta = BigRational::from_integer(BigInt::from(2)) + eta;
    let height_weight = 1.0 + ratio_to_f64(&eta.recip());
    let mut rows = Vec::new();
    let mut eq9_rows = Vec::new();
    let mut unreachable = Vec::new();
    let r = series.source().map(|s| s.arity());
    for &n in n_values {
        let h = match truncation_height(series, n) {
            Ok(h) => h,
            Err(RationalityError::Series(DynamicsError::OrbitOverflow(_)))
            | Err(RationalityError::InsufficientCoefficients { .. }) => {
                unreachable.push(n);
                continue;
            }
            Err(e) => return Err(e),
        };
        let cutoff = BigRational::from_integer(BigInt::from(n));
        let lhs: f64 = profiles
            .iter()
            .filter(|prof| p_max >= prof.p)
            .filter(|prof| BigRational::from_integer(BigInt::from(prof.h_p)) * &two_plus_eta < cutoff)
            .map(|prof| (prof.p as f64).ln())
            .sum();
        let rhs = 1.5 * (n.max(1) as f64).ln() + height_weight * h.logarithmic;
        rows.push(CriterionRow {
            n,
            lhs,
            rhs,
            lower_bound: true,
            verdict: if lhs > rhs {
                CriterionVerdict::ProvedHolds
            } else {
                CriterionVerdict::FailsWithinBudget
            },
        });
        if let Some(r) = r {
            eq9_rows.push(GrowthLowerBoundRow {
                n,
                h_trunc: h.logarithmic,
                threshold: (n as f64 / 6.0).powf(1.0 / r as f64) / 3.0,
                holds: growth_lower_bound_holds(&h, n, r),
            });
        }
    }
    Ok(CriterionReport {
        eta: eta.clone(),
        prime_budget: p_max,
        rows,
        eq9_rows,
        unreachable,
    })
}

/// Windowed estimate of `Σ_v log R_v + liminf (1/n) Σ_{h_p < n} ln p`.
/// Nothing here is a certificate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RuzsaEstimate {
    pub archimedean_log_radius: f64,
    pub finite_radius_lower_bound: f64,
    pub liminf_window_estimate: f64,
    pub total: f64,
    pub window: (usize, usize),
    pub caveats: Vec<String>,
}

fn ln_abs(x: &BigRational) -> f64 {
    ln_biguint(x.numer().magnitude()) - ln_biguint(x.denom().magnitude())
}

pub fn ruzsa_functional(
    series: &mut CoefficientSeries,
    window: (usize, usize),
    p_max: u64,
) -> Result<RuzsaEstimate, RationalityError> {
    let (lo, hi) = window;
    let mut caveats = vec![
        "archimedean radius estimated from max ln|c_n|/n over the upper half of the window".to_string(),
        "finite places contribute only the certified lower bound 0".to_string(),
        "liminf replaced by a minimum over the window with primes <= prime budget".to_string(),
    ];
    if series.len() < hi + 1 {
        if let Err(e) = series.extend_to(hi + 1) {
            caveats.push(format!("series stops at n = {}: {e}", series.len().saturating_sub(1)));
        }
    }
    let hi = hi.min(series.len().saturating_sub(1));
    let lo = lo.max(1);
    if lo > hi {
        return Err(RationalityError::InsufficientData);
    }
    let mid = lo + (hi - lo) / 2;
    let coeffs = series.coefficients();
    let best = (mid..=hi)
        .filter(|&n| !coeffs[n].is_zero())
        .map(|n| ln_abs(&coeffs[n]) / n as f64)
        .fold(None, |acc: Option<f64>, x| Some(acc.map_or(x, |a| a.max(x))));
    let Some(best) = best else {
        return Err(RationalityError::InsufficientData);
    };
    let archimedean_log_radius = -best;
    let profiles = certified_profiles(series, p_max);
    if series.source().is_none() {
        caveats.push("no orbit source: h_p unavailable, prime term is 0".to_string());
    }
    let liminf_window_estimate = (lo..=hi)
        .map(|n| {
            profiles
                .iter()
                .filter(|prof| prof.h_p < n)
                .map(|prof| (prof.p as f64).ln())
                .sum::<f64>()
                / n as f64
        })
        .fold(f64::INFINITY, f64::min);
    Ok(RuzsaEstimate {
        archimedean_log_radius,
        finite_radius_lower_bound: 0.0,
        liminf_window_estimate,
        total: archimedean_log_radius + liminf_window_estimate,
        window: (lo, hi),
        caveats,
    })
}
