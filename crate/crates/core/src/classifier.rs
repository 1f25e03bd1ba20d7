//! Eventually-polynomial versus height-growth classification of orbits.
//!
//! A series is eventually polynomial on progressions mod `d` when, past some
//! threshold `n0`, each subsequence `c_{nd+i}` is a polynomial in `n`. That is
//! detected exactly by step-`d` finite differences; otherwise the classifier
//! falls back to the window growth exponent of `h(c_n)`.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::dynamics::{growth_estimate, observable_series, CoefficientSeries, DynamicsError, GrowthEstimate, OrbitSource};
use crate::polyexpr::{MultivariatePolynomial, Observable, PolyError, PolySelfMap, UniPoly};
use crate::rational_string;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("need {needed} coefficients to search progressions, have {have}")]
pub struct InsufficientData {
    pub needed: usize,
    pub have: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RecurrenceError {
    #[error("recurrence of order {expected} needs {expected} seeds, got {found}")]
    ArityMismatch { expected: usize, found: usize },
    #[error("recurrence polynomial must have integer coefficients")]
    NonIntegral,
    #[error("recurrence needs at least one variable")]
    ZeroOrder,
    #[error(transparent)]
    Poly(#[from] PolyError),
}

/// `c_N = p_i((N - i) / d)` for every computed `N >= n0` with `N ≡ i mod d`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProgressionDecomposition {
    pub d: usize,
    pub n0: usize,
    pub polynomials: Vec<UniPoly>,
    pub verified_range: usize,
}

impl ProgressionDecomposition {
    pub fn evaluate(&self, index: usize) -> BigRational {
        let i = index % self.d;
        let n = BigRational::from_integer(BigInt::from(index / self.d));
        self.polynomials[i].evaluate(&n)
    }

    pub fn max_degree(&self) -> usize {
        self.polynomials.iter().map(|p| p.degree().unwrap_or(0)).max().unwrap_or(0)
    }
}

/// Coefficients needed before a search with these budgets is meaningful.
pub fn required_coefficients(d_max: usize, g_max: usize, n0_max: usize) -> usize {
    n0_max + d_max * (g_max + 2)
}

/// Smallest `j <= g_max + 1` with the `j`-th difference of `values` identically
/// zero, keeping at least one point to check. `j = 0` means all zero.
fn vanishing_order(values: &[BigRational], g_max: usize) -> Option<usize> {
    // integer data skips the gcd normalization of every rational difference
    if values.iter().all(|v| v.is_integer()) {
        let ints: Vec<BigInt> = values.iter().map(|v| v.numer().clone()).collect();
        vanishing_order_in(ints, g_max)
    } else {
        vanishing_order_in(values.to_vec(), g_max)
    }
}

fn vanishing_order_in<T>(mut diff: Vec<T>, g_max: usize) -> Option<usize>
where
    T: Zero,
    for<'a> &'a T: std::ops::Sub<&'a T, Output = T>,
{
    for j in 0..=g_max + 1 {
        if diff.is_empty() {
            return None;
        }
        if diff.iter().all(|v| v.is_zero()) {
            return Some(j);
        }
        diff = diff.windows(2).map(|w| &w[1] - &w[0]).collect();
    }
    None
}

/// Newton forward interpolation through `values[0..=deg]` sampled at
/// `n = start, start + 1, ...`, expanded in powers of `n`.
fn newton_forward(values: &[BigRational], start: usize, deg: usize) -> UniPoly {
    let mut heads = Vec::with_capacity(deg + 1);
    let mut diff = values[..=deg.min(values.len() - 1)].to_vec();
    while !diff.is_empty() {
        heads.push(diff[0].clone());
        diff = diff.windows(2).map(|w| &w[1] - &w[0]).collect();
    }
    let mut out = UniPoly::zero();
    let mut basis = UniPoly::one();
    let mut factorial = BigInt::one();
    for (j, head) in heads.iter().enumerate() {
        if j > 0 {
            factorial *= BigInt::from(j);
            let shift = BigRational::from_integer(BigInt::from(start + j - 1));
            basis = &basis * &UniPoly::new(vec![-shift, BigRational::one()]);
        }
        let c = head / BigRational::from_integer(factorial.clone());
        out = &out + &basis.scale(&c);
    }
    out
}

fn residue_tail(coeffs: &[BigRational], d: usize, i: usize, n0: usize) -> (usize, Vec<BigRational>) {
    let start = if n0 > i { (n0 - i).div_ceil(d) } else { 0 };
    let values = coeffs.iter().skip(start * d + i).step_by(d).cloned().collect();
    (start, values)
}

/// Best decomposition for a fixed modulus `d`: minimal max-degree, then
/// minimal `n0`.
pub fn fit_modulus(coeffs: &[BigRational], d: usize, g_max: usize, n0_max: usize) -> Option<ProgressionDecomposition> {
    let mut best: Option<(usize, usize, Vec<(usize, Vec<BigRational>, usize)>)> = None;
    for n0 in 0..=n0_max {
        let mut fits = Vec::with_capacity(d);
        for i in 0..d {
            let (start, values) = residue_tail(coeffs, d, i, n0);
            let Some(order) = vanishing_order(&values, g_max) else { break };
            let deg = order.saturating_sub(1);
            if values.len() < deg + 2 {
                break;
            }
            fits.push((start, values, deg));
        }
        if fits.len() < d {
            continue;
        }
        let max_deg = fits.iter().map(|f| f.2).max().unwrap_or(0);
        if best.as_ref().is_none_or(|(bd, _, _)| max_deg < *bd) {
            best = Some((max_deg, n0, fits));
        }
    }
    let (_, n0, fits) = best?;
    let polynomials: Vec<UniPoly> = fits
        .iter()
        .map(|(start, values, deg)| newton_forward(values, *start, *deg))
        .collect();
    let decomposition = ProgressionDecomposition {
        d,
        n0,
        polynomials,
        verified_range: coeffs.len() - 1,
    };
    let exact = (n0..coeffs.len()).all(|n| decomposition.evaluate(n) == coeffs[n]);
    assert!(exact, "interpolated decomposition must reproduce the data");
    Some(decomposition)
}

/// Minimal `d <= d_max` admitting a decomposition with degrees `<= g_max` and
/// threshold `<= n0_max`. `Ok(None)` means none exists within the budgets.
pub fn detect_progressions(
    coeffs: &[BigRational],
    d_max: usize,
    g_max: usize,
    n0_max: usize,
) -> Result<Option<ProgressionDecomposition>, InsufficientData> {
    let needed = required_coefficients(d_max, g_max, n0_max);
    if coeffs.len() < needed {
        return Err(InsufficientData {
            needed,
            have: coeffs.len(),
        });
    }
    let fits: Vec<Option<ProgressionDecomposition>> = (1..=d_max)
        .into_par_iter()
        .map(|d| fit_modulus(coeffs, d, g_max, n0_max))
        .collect();
    Ok(fits.into_iter().flatten().next())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Budgets {
    pub steps: usize,
    pub bit_budget: u64,
    pub d_max: usize,
    pub g_max: usize,
    pub n0_max: usize,
    pub n_min: usize,
}

impl Default for Budgets {
    fn default() -> Self {
        Budgets {
            steps: 64,
            bit_budget: crate::dynamics::DEFAULT_BIT_BUDGET,
            d_max: 8,
            g_max: 8,
            n0_max: 16,
            n_min: 5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Verdict {
    EventuallyPolynomial,
    GrowthEvidence,
    Inconclusive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ProgressionSearch {
    Found,
    NoneFound,
    InsufficientData { needed: usize, have: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Classification {
    pub verdict: Verdict,
    pub decomposition: Option<ProgressionDecomposition>,
    pub growth: Option<GrowthEstimate>,
    pub progression_search: ProgressionSearch,
    /// `(n, bits)` where the orbit outgrew the bit budget.
    pub overflow: Option<(usize, u64)>,
    pub coefficients_computed: usize,
    /// Budgets actually used; `steps` may exceed the request so the
    /// progression search has enough data.
    pub budgets: Budgets,
}

#[derive(Serialize)]
struct OverflowJson {
    n: usize,
    bits: u64,
}

#[derive(Serialize)]
struct ClassificationJson<'a> {
    verdict: Verdict,
    d: Option<usize>,
    n0: Option<usize>,
    polynomials: Option<Vec<Vec<String>>>,
    verified_range: Option<usize>,
    progression_search: ProgressionSearch,
    window: Option<&'a GrowthEstimate>,
    overflow: Option<OverflowJson>,
    coefficients_computed: usize,
    budgets: Budgets,
}

impl Classification {
    pub fn to_json(&self) -> serde_json::Value {
        let dec = self.decomposition.as_ref();
        let report = ClassificationJson {
            verdict: self.verdict,
            d: dec.map(|x| x.d),
            n0: dec.map(|x| x.n0),
            polynomials: dec.map(|x| {
                x.polynomials
                    .iter()
                    .map(|p| p.coeffs().iter().map(rational_string).collect())
                    .collect()
            }),
            verified_range: dec.map(|x| x.verified_range),
            progression_search: self.progression_search,
            window: self.growth.as_ref(),
            overflow: self.overflow.map(|(n, bits)| OverflowJson { n, bits }),
            coefficients_computed: self.coefficients_computed,
            budgets: self.budgets,
        };
        serde_json::to_value(report).expect("classification serializes")
    }
}

pub fn classify(source: &OrbitSource, budgets: &Budgets) -> Result<Classification, DynamicsError> {
    let needed = required_coefficients(budgets.d_max, budgets.g_max, budgets.n0_max);
    let mut used = *budgets;
    used.steps = used.steps.max(needed.saturating_sub(1));
    let series = observable_series(source, used.steps, used.bit_budget)?;
    Ok(classify_series(&series, source.arity(), &used))
}

/// Classification of an already computed series of an `r`-dimensional orbit.
pub fn classify_series(series: &CoefficientSeries, r: usize, budgets: &Budgets) -> Classification {
    let coeffs = series.coefficients();
    let (decomposition, progression_search) =
        match detect_progressions(coeffs, budgets.d_max, budgets.g_max, budgets.n0_max) {
            Ok(Some(dec)) => (Some(dec), ProgressionSearch::Found),
            Ok(None) => (None, ProgressionSearch::NoneFound),
            Err(InsufficientData { needed, have }) => (None, ProgressionSearch::InsufficientData { needed, have }),
        };
    let growth = growth_estimate(&series.heights(), budgets.n_min, r).ok();
    let overflow = series.overflow();
    let verdict = if decomposition.is_some() {
        Verdict::EventuallyPolynomial
    } else if overflow.is_some() || growth.as_ref().is_some_and(|g| g.meets_threshold()) {
        Verdict::GrowthEvidence
    } else {
        Verdict::Inconclusive
    };
    Classification {
        verdict,
        decomposition,
        growth,
        progression_search,
        overflow,
        coefficients_computed: coeffs.len(),
        budgets: *budgets,
    }
}

/// Orbit source for `A(n + r) = p(A(n), ..., A(n + r - 1))`: variable `i` of
/// `p` stands for `A(n + i)`. The map is the shift
/// `(x_1, ..., x_r) ↦ (x_2, ..., x_r, p(x_1, ..., x_r))`, observed on the first
/// coordinate so that `c_n = A(n)`.
pub fn recurrence_to_spec(p: &MultivariatePolynomial, seeds: &[BigInt]) -> Result<OrbitSource, RecurrenceError> {
    let r = p.arity();
    if r == 0 {
        return Err(RecurrenceError::ZeroOrder);
    }
    if seeds.len() != r {
        return Err(RecurrenceError::ArityMismatch {
            expected: r,
            found: seeds.len(),
        });
    }
    if !p.is_integral() {
        return Err(RecurrenceError::NonIntegral);
    }
    let mut coords: Vec<MultivariatePolynomial> = (1..r).map(|i| MultivariatePolynomial::variable(r, i)).collect();
    coords.push(p.clone());
    let map = PolySelfMap::new(coords)?;
    let point = seeds.iter().cloned().map(BigRational::from_integer).collect();
    Ok(OrbitSource::new(map, Observable::projection(r, 0), point)?)
}
