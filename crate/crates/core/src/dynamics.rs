//! Orbit iteration, the orbit generating series `Φ = Σ λ(fⁿP) tⁿ`, height
//! growth diagnostics and the counting bound `(2H_n + 1)^r > n`.

use std::collections::{BTreeSet, HashSet};
use std::io::{BufRead, Write};

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{One, Zero};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::heights::{height_affine, height_rational, HeightValue};
use crate::polyexpr::{Observable, PolyError, PolySelfMap};
use crate::rational_string;

pub const DEFAULT_BIT_BUDGET: u64 = 1_000_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DynamicsError {
    #[error(transparent)]
    Poly(#[from] PolyError),
    #[error("orbit overflow at n = {}: {} bits exceeds the budget", .0.n, .0.bits)]
    OrbitOverflow(Box<OrbitOverflow>),
    #[error("need at least 3 indices with nonzero height in the window")]
    InsufficientData,
    #[error("orbit point {n} has a non-integer coordinate")]
    NonIntegerOrbit { n: usize },
    #[error("orbit repeats: point {i} equals point {j}")]
    RepeatedPoint { i: usize, j: usize },
    #[error("orbit cache line {line}: {message}")]
    CacheFormat { line: usize, message: String },
    #[error("io: {0}")]
    Io(String),
}

/// The next point `n` would have a numerator or denominator of `bits` bits.
/// `partial` holds every record computed before the budget tripped.
#[derive(Debug, Clone, PartialEq)]
pub struct OrbitOverflow {
    pub n: usize,
    pub bits: u64,
    pub partial: Vec<OrbitRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrbitRecord {
    pub index: usize,
    pub point: Vec<BigRational>,
    pub point_height: HeightValue,
    pub observable_value: BigRational,
    pub observable_height: HeightValue,
}

/// The triple `(f, λ, P)`.
#[derive(Debug, Clone, PartialEq)]
pub struct OrbitSource {
    pub map: PolySelfMap,
    pub observable: Observable,
    pub point: Vec<BigRational>,
}

impl OrbitSource {
    pub fn new(map: PolySelfMap, observable: Observable, point: Vec<BigRational>) -> Result<Self, PolyError> {
        let r = map.arity();
        for found in [observable.arity(), point.len()] {
            if found != r {
                return Err(PolyError::ArityMismatch { expected: r, found });
            }
        }
        Ok(OrbitSource {
            map,
            observable,
            point,
        })
    }

    pub fn arity(&self) -> usize {
        self.map.arity()
    }
}

fn max_bits(point: &[BigRational]) -> u64 {
    point
        .iter()
        .map(|x| x.numer().bits().max(x.denom().bits()))
        .max()
        .unwrap_or(0)
}

/// Iterates `f` from `P` for `steps` steps. Records come back with heights
/// filled in; if a coordinate of the next point would exceed `bit_budget` bits
/// the computed prefix is returned inside [`DynamicsError::OrbitOverflow`].
pub fn iterate(
    map: &PolySelfMap,
    observable: &Observable,
    point: &[BigRational],
    steps: usize,
    bit_budget: u64,
) -> Result<Vec<OrbitRecord>, DynamicsError> {
    let r = map.arity();
    if point.len() != r {
        return Err(PolyError::ArityMismatch { expected: r, found: point.len() }.into());
    }
    if observable.arity() != r {
        return Err(PolyError::ArityMismatch { expected: r, found: observable.arity() }.into());
    }
    let mut points: Vec<Vec<BigRational>> = Vec::with_capacity(steps + 1);
    let mut overflow = None;
    let bits = max_bits(point);
    if bits > bit_budget {
        overflow = Some((0, bits));
    } else {
        points.push(point.to_vec());
        for n in 1..=steps {
            let next = map.apply(points.last().unwrap())?;
            let bits = max_bits(&next);
            if bits > bit_budget {
                overflow = Some((n, bits));
                break;
            }
            points.push(next);
        }
    }
    let records = points
        .into_par_iter()
        .enumerate()
        .map(|(index, point)| {
            let observable_value = observable.evaluate(&point)?;
            Ok(OrbitRecord {
                index,
                point_height: height_affine(&point),
                observable_height: height_rational(&observable_value),
                point,
                observable_value,
            })
        })
        .collect::<Result<Vec<_>, PolyError>>()?;
    match overflow {
        None => Ok(records),
        Some((n, bits)) => Err(DynamicsError::OrbitOverflow(Box::new(OrbitOverflow {
            n,
            bits,
            partial: records,
        }))),
    }
}

#[derive(Debug, Clone, PartialEq)]
struct SeriesState {
    source: OrbitSource,
    current: Vec<BigRational>,
    bit_budget: u64,
}

/// Cached coefficients `c_n` of a power series, optionally backed by an orbit
/// source that can extend them on demand.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientSeries {
    coefficients: Vec<BigRational>,
    bad_primes: BTreeSet<BigUint>,
    state: Option<SeriesState>,
    overflow: Option<(usize, u64)>,
}

impl CoefficientSeries {
    /// A series given only by its coefficients; the bad primes are those
    /// dividing a coefficient denominator.
    pub fn from_coefficients(coefficients: Vec<BigRational>) -> Self {
        let mut bad = BTreeSet::new();
        for c in &coefficients {
            if !c.denom().is_one() {
                bad.extend(crate::arith::factorize(c.denom().magnitude()).into_keys());
            }
        }
        CoefficientSeries {
            coefficients,
            bad_primes: bad,
            state: None,
            overflow: None,
        }
    }

    pub fn coefficients(&self) -> &[BigRational] {
        &self.coefficients
    }

    pub fn len(&self) -> usize {
        self.coefficients.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coefficients.is_empty()
    }

    pub fn bad_primes(&self) -> &BTreeSet<BigUint> {
        &self.bad_primes
    }

    pub fn is_bad_prime(&self, p: u64) -> bool {
        self.bad_primes.contains(&BigUint::from(p))
    }

    pub fn source(&self) -> Option<&OrbitSource> {
        self.state.as_ref().map(|s| &s.source)
    }

    /// `(n, bits)` of the point that tripped the bit budget, if any.
    pub fn overflow(&self) -> Option<(usize, u64)> {
        self.overflow
    }

    /// Heights `h(c_n)` of the cached coefficients.
    pub fn heights(&self) -> Vec<HeightValue> {
        self.coefficients.par_iter().map(height_rational).collect()
    }

    /// Makes at least `len` coefficients available, iterating the source if
    /// there is one. Raw series cannot grow.
    pub fn extend_to(&mut self, len: usize) -> Result<(), DynamicsError> {
        if self.coefficients.len() >= len {
            return Ok(());
        }
        if let Some((n, bits)) = self.overflow {
            return Err(self.overflow_error(n, bits));
        }
        let Some(state) = self.state.as_mut() else {
            return Err(DynamicsError::InsufficientData);
        };
        while self.coefficients.len() < len {
            let n = self.coefficients.len();
            let next = state.source.map.apply(&state.current)?;
            let bits = max_bits(&next);
            if bits > state.bit_budget {
                self.overflow = Some((n, bits));
                return Err(self.overflow_error(n, bits));
            }
            self.coefficients.push(state.source.observable.evaluate(&next)?);
            state.current = next;
        }
        Ok(())
    }

    fn overflow_error(&self, n: usize, bits: u64) -> DynamicsError {
        DynamicsError::OrbitOverflow(Box::new(OrbitOverflow {
            n,
            bits,
            partial: Vec::new(),
        }))
    }
}

/// Builds `c_0..c_N` for `Φ = Σ λ(fⁿP) tⁿ`. On overflow the computed prefix is
/// kept and [`CoefficientSeries::overflow`] reports where the budget tripped.
pub fn observable_series(source: &OrbitSource, n_max: usize, bit_budget: u64) -> Result<CoefficientSeries, DynamicsError> {
    let bad_primes = crate::modp::bad_primes(source);
    let mut series = CoefficientSeries {
        coefficients: Vec::new(),
        bad_primes,
        state: None,
        overflow: None,
    };
    let bits = max_bits(&source.point);
    if bits > bit_budget {
        series.overflow = Some((0, bits));
        return Ok(series);
    }
    series.coefficients.push(source.observable.evaluate(&source.point)?);
    series.state = Some(SeriesState {
        source: source.clone(),
        current: source.point.clone(),
        bit_budget,
    });
    match series.extend_to(n_max + 1) {
        Ok(()) | Err(DynamicsError::OrbitOverflow(_)) => Ok(series),
        Err(e) => Err(e),
    }
}

/// Window diagnostics for `limsup log h(c_n) / log n`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GrowthEstimate {
    pub window: (usize, usize),
    pub sup_ratio: f64,
    pub sup_index: usize,
    pub exp_slope: f64,
    pub verdict_threshold: f64,
    pub samples: usize,
}

impl GrowthEstimate {
    pub fn meets_threshold(&self) -> bool {
        self.sup_ratio >= self.verdict_threshold
    }
}

/// `heights[n]` is `h(c_n)` (or `h_aff(fⁿP)`). Indices below `max(n_min, 2)`
/// and indices of height zero are skipped.
pub fn growth_estimate(heights: &[HeightValue], n_min: usize, r: usize) -> Result<GrowthEstimate, DynamicsError> {
    let usable: Vec<(usize, f64)> = heights
        .iter()
        .enumerate()
        .skip(n_min.max(2))
        .filter(|(_, h)| !h.is_zero())
        .map(|(n, h)| (n, h.logarithmic.ln()))
        .collect();
    if usable.len() < 3 {
        return Err(DynamicsError::InsufficientData);
    }
    let (sup_index, sup_ratio) = usable
        .iter()
        .map(|&(n, lh)| (n, lh / (n as f64).ln()))
        .fold((0, f64::NEG_INFINITY), |best, cur| if cur.1 > best.1 { cur } else { best });
    let k = usable.len() as f64;
    let mean_n = usable.iter().map(|&(n, _)| n as f64).sum::<f64>() / k;
    let mean_y = usable.iter().map(|&(_, y)| y).sum::<f64>() / k;
    let (sxy, sxx) = usable.iter().fold((0.0, 0.0), |(sxy, sxx), &(n, y)| {
        let dx = n as f64 - mean_n;
        (sxy + dx * (y - mean_y), sxx + dx * dx)
    });
    Ok(GrowthEstimate {
        window: (n_min, heights.len().saturating_sub(1)),
        sup_ratio,
        sup_index,
        exp_slope: sxy / sxx,
        verdict_threshold: 1.0 / r as f64,
        samples: usable.len(),
    })
}

/// Checks `(2H_n + 1)^r > n` with `H_n = max_{i<=n} exp h(fⁱP)` exactly, for an
/// integer orbit whose points are pairwise distinct.
pub fn trivial_bound_check(orbit: &[OrbitRecord], r: usize) -> Result<Vec<(usize, bool)>, DynamicsError> {
    let mut seen: HashSet<&[BigRational]> = HashSet::with_capacity(orbit.len());
    for rec in orbit {
        if !rec.point.iter().all(|x| x.is_integer()) {
            return Err(DynamicsError::NonIntegerOrbit { n: rec.index });
        }
        if !seen.insert(&rec.point) {
            let i = orbit.iter().position(|o| o.point == rec.point).unwrap();
            return Err(DynamicsError::RepeatedPoint { i, j: rec.index });
        }
    }
    let mut running = BigUint::one();
    let exponent = u32::try_from(r).expect("dimension fits in u32");
    Ok(orbit
        .iter()
        .map(|rec| {
            if rec.point_height.multiplicative > running {
                running = rec.point_height.multiplicative.clone();
            }
            let lhs = (&running * 2u32 + 1u32).pow(exponent);
            (rec.index, lhs > BigUint::from(rec.index))
        })
        .collect())
}

/// Writes one line per record: `n<TAB>x_1 ... x_r<TAB>c_n`, rationals as
/// `num/den`.
pub fn write_orbit_cache<W: Write>(records: &[OrbitRecord], mut out: W) -> std::io::Result<()> {
    for rec in records {
        let coords: Vec<String> = rec.point.iter().map(rational_string).collect();
        writeln!(
            out,
            "{}\t{}\t{}",
            rec.index,
            coords.join(" "),
            rational_string(&rec.observable_value)
        )?;
    }
    Ok(())
}

fn parse_rational(s: &str, line: usize) -> Result<BigRational, DynamicsError> {
    let bad = |m: &str| DynamicsError::CacheFormat {
        line,
        message: format!("{m}: `{s}`"),
    };
    let (n, d) = s.split_once('/').ok_or_else(|| bad("expected num/den"))?;
    let n: BigInt = n.parse().map_err(|_| bad("bad numerator"))?;
    let d: BigInt = d.parse().map_err(|_| bad("bad denominator"))?;
    if d.is_zero() {
        return Err(bad("zero denominator"));
    }
    Ok(crate::arith::ratio(n, d))
}

/// Reads an orbit cache back into records, recomputing heights.
pub fn read_orbit_cache<R: BufRead>(input: R) -> Result<Vec<OrbitRecord>, DynamicsError> {
    let mut records = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line.map_err(|e| DynamicsError::Io(e.to_string()))?;
        let lineno = i + 1;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(DynamicsError::CacheFormat {
                line: lineno,
                message: format!("expected 3 tab-separated fields, found {}", fields.len()),
            });
        }
        let index: usize = fields[0].parse().map_err(|_| DynamicsError::CacheFormat {
            line: lineno,
            message: "bad index".into(),
        })?;
        if index != records.len() {
            return Err(DynamicsError::CacheFormat {
                line: lineno,
                message: format!("expected index {}, found {index}", records.len()),
            });
        }
        let point = fields[1]
            .split(' ')
            .filter(|s| !s.is_empty())
            .map(|s| parse_rational(s, lineno))
            .collect::<Result<Vec<_>, _>>()?;
        let observable_value = parse_rational(fields[2], lineno)?;
        records.push(OrbitRecord {
            index,
            point_height: height_affine(&point),
            observable_height: height_rational(&observable_value),
            point,
            observable_value,
        });
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polyexpr::parse_polynomial;
    use proptest::prelude::*;

    fn q(n: i64) -> BigRational {
        BigRational::from_integer(BigInt::from(n))
    }

    fn map1(expr: &str) -> PolySelfMap {
        let v = vec!["x".to_string()];
        PolySelfMap::new(vec![parse_polynomial(expr, &v).unwrap()]).unwrap()
    }

    fn fib_source() -> OrbitSource {
        let v = vec!["x".to_string(), "y".to_string()];
        let f = PolySelfMap::new(vec![
            parse_polynomial("y", &v).unwrap(),
            parse_polynomial("x + y", &v).unwrap(),
        ])
        .unwrap();
        OrbitSource::new(f, Observable::projection(2, 0), vec![q(0), q(1)]).unwrap()
    }

    fn quad_source() -> OrbitSource {
        OrbitSource::new(map1("x^2 + 1"), Observable::projection(1, 0), vec![q(0)]).unwrap()
    }

    #[test]
    fn translation_orbit() {
        let recs = iterate(&map1("x + 1"), &Observable::projection(1, 0), &[q(0)], 5, 64).unwrap();
        let values: Vec<BigRational> = recs.iter().map(|r| r.observable_value.clone()).collect();
        assert_eq!(values, (0..=5).map(q).collect::<Vec<_>>());
        let hs: Vec<u32> = recs
            .iter()
            .map(|r| r.point_height.multiplicative.clone().try_into().unwrap())
            .collect();
        assert_eq!(hs, vec![1, 1, 2, 3, 4, 5]);
        assert_eq!(recs[0].point_height.logarithmic, 0.0);
        assert!((recs[3].point_height.logarithmic - 3f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn quadratic_orbit_values() {
        let recs = iterate(&map1("x^2 + 1"), &Observable::projection(1, 0), &[q(0)], 6, 64).unwrap();
        let values: Vec<BigRational> = recs.iter().map(|r| r.observable_value.clone()).collect();
        // independent recursion on machine integers
        let mut expect = vec![0i64];
        for _ in 0..6 {
            let x = *expect.last().unwrap();
            expect.push(x * x + 1);
        }
        assert_eq!(expect, vec![0, 1, 2, 5, 26, 677, 458330]);
        assert_eq!(values, expect.into_iter().map(q).collect::<Vec<_>>());
    }

    #[test]
    fn identity_orbit_is_constant() {
        let recs = iterate(&PolySelfMap::identity(1), &Observable::projection(1, 0), &[q(7)], 3, 64).unwrap();
        assert_eq!(recs.len(), 4);
        assert!(recs.iter().all(|r| r.point == vec![q(7)]));
    }

    #[test]
    fn overflow_keeps_prefix() {
        let err = iterate(&map1("x^2 + 1"), &Observable::projection(1, 0), &[q(0)], 30, 64).unwrap_err();
        let DynamicsError::OrbitOverflow(o) = err else { panic!("expected overflow") };
        // c_7 = 458330^2 + 1 has 38 bits, c_8 has 75
        assert_eq!(o.n, 8);
        assert_eq!(o.bits, 76);
        assert_eq!(o.partial.len(), 8);
    }

    #[test]
    fn prefix_property() {
        let src = quad_source();
        let a = iterate(&src.map, &src.observable, &src.point, 7, 10_000).unwrap();
        let b = iterate(&src.map, &src.observable, &src.point, 8, 10_000).unwrap();
        assert_eq!(&b[..a.len()], &a[..]);
    }

    #[test]
    fn series_examples() {
        let fib = observable_series(&fib_source(), 10, DEFAULT_BIT_BUDGET).unwrap();
        let expect = [0, 1, 1, 2, 3, 5, 8, 13, 21, 34, 55];
        assert_eq!(fib.coefficients(), &expect.map(q)[..]);
        assert!(fib.bad_primes().is_empty());

        let quad = observable_series(&quad_source(), 4, DEFAULT_BIT_BUDGET).unwrap();
        assert_eq!(quad.coefficients(), &[0, 1, 2, 5, 26].map(q)[..]);

        let v = vec!["x".to_string(), "y".to_string()];
        let one = Observable::new(parse_polynomial("1", &v).unwrap());
        let src = OrbitSource::new(fib_source().map, one, vec![q(3), q(-4)]).unwrap();
        let s = observable_series(&src, 6, DEFAULT_BIT_BUDGET).unwrap();
        assert!(s.coefficients().iter().all(|c| c.is_one()));
        assert!(s.bad_primes().is_empty());
    }

    #[test]
    fn series_extends_and_records_overflow() {
        let mut s = observable_series(&fib_source(), 5, DEFAULT_BIT_BUDGET).unwrap();
        s.extend_to(31).unwrap();
        assert_eq!(s.coefficients()[30], q(832040));
        let mut quad = observable_series(&quad_source(), 3, 64).unwrap();
        assert!(matches!(quad.extend_to(20), Err(DynamicsError::OrbitOverflow(_))));
        assert_eq!(quad.len(), 8);
        assert_eq!(quad.overflow(), Some((8, 76)));
    }

    #[test]
    fn s_integrality() {
        let v = vec!["x".to_string()];
        let f = PolySelfMap::new(vec![parse_polynomial("3*x/10 + 1/3", &v).unwrap()]).unwrap();
        let p = vec![BigRational::new(BigInt::from(1), BigInt::from(7))];
        let s = observable_series(&OrbitSource::new(f, Observable::projection(1, 0), p).unwrap(), 12, DEFAULT_BIT_BUDGET)
            .unwrap();
        let bad: Vec<u32> = s.bad_primes().iter().map(|p| p.try_into().unwrap()).collect();
        assert_eq!(bad, vec![2, 3, 5, 7]);
        for c in s.coefficients() {
            for p in crate::arith::factorize(c.denom().magnitude()).keys() {
                assert!(s.bad_primes().contains(p));
            }
        }
    }

    #[test]
    fn growth_examples() {
        // c_n = n on [3, 50]
        let heights: Vec<HeightValue> = (0..=50u32).map(|n| HeightValue::from_multiplicative(BigUint::from(n.max(1)))).collect();
        let g = growth_estimate(&heights, 3, 1).unwrap();
        let oracle = (3..=50).map(|n| (n as f64).ln().ln() / (n as f64).ln()).fold(f64::MIN, f64::max);
        assert!((g.sup_ratio - oracle).abs() < 1e-12);
        assert!(g.sup_ratio < 0.6);
        assert_eq!(g.window, (3, 50));

        let quad = observable_series(&quad_source(), 20, DEFAULT_BIT_BUDGET).unwrap();
        let g = growth_estimate(&quad.heights(), 10, 1).unwrap();
        assert!(g.sup_ratio >= 3.0, "sup_ratio = {}", g.sup_ratio);
        assert!((g.exp_slope - std::f64::consts::LN_2).abs() < 0.01);

        let flat = vec![HeightValue::zero(); 30];
        assert_eq!(growth_estimate(&flat, 2, 1), Err(DynamicsError::InsufficientData));
    }

    #[test]
    fn trivial_bound_examples() {
        let recs = iterate(&map1("x + 1"), &Observable::projection(1, 0), &[q(0)], 40, 64).unwrap();
        assert!(trivial_bound_check(&recs, 1).unwrap().iter().all(|&(_, ok)| ok));
        let recs = iterate(&map1("x^2 + 1"), &Observable::projection(1, 0), &[q(0)], 10, DEFAULT_BIT_BUDGET).unwrap();
        let rows = trivial_bound_check(&recs, 1).unwrap();
        assert_eq!(rows.len(), 11);
        assert!(rows.iter().all(|&(_, ok)| ok));
        let recs = iterate(&PolySelfMap::identity(1), &Observable::projection(1, 0), &[q(7)], 3, 64).unwrap();
        assert_eq!(trivial_bound_check(&recs, 1), Err(DynamicsError::RepeatedPoint { i: 0, j: 1 }));
        let recs = iterate(&map1("x/2"), &Observable::projection(1, 0), &[q(1)], 3, 64).unwrap();
        assert_eq!(trivial_bound_check(&recs, 1), Err(DynamicsError::NonIntegerOrbit { n: 1 }));
    }

    #[test]
    fn cache_rejects_garbage() {
        let bad = "0\t1/1\n";
        assert!(matches!(read_orbit_cache(bad.as_bytes()), Err(DynamicsError::CacheFormat { line: 1, .. })));
        let bad = "0\t1/0\t1/1\n";
        assert!(matches!(read_orbit_cache(bad.as_bytes()), Err(DynamicsError::CacheFormat { .. })));
        let bad = "1\t1/1\t1/1\n";
        assert!(matches!(read_orbit_cache(bad.as_bytes()), Err(DynamicsError::CacheFormat { .. })));
    }

    proptest! {
        #[test]
        fn cache_round_trip(a in -20i64..20, b in 1i64..9, c in -5i64..5, steps in 0usize..6) {
            let v = vec!["x".to_string(), "y".to_string()];
            let f = PolySelfMap::new(vec![
                parse_polynomial("y", &v).unwrap(),
                parse_polynomial(&format!("x*y + {c}"), &v).unwrap(),
            ]).unwrap();
            let lam = Observable::new(parse_polynomial("x - 1/3*y", &v).unwrap());
            let p = vec![BigRational::new(BigInt::from(a), BigInt::from(b)), q(c)];
            let recs = iterate(&f, &lam, &p, steps, DEFAULT_BIT_BUDGET).unwrap();
            let mut buf = Vec::new();
            write_orbit_cache(&recs, &mut buf).unwrap();
            prop_assert_eq!(read_orbit_cache(&buf[..]).unwrap(), recs);
        }
    }
}
