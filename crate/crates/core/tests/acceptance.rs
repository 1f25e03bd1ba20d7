//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use num_traits::{One, Zero};
use orbitgrowth::classifier::{classify, recurrence_to_spec, Budgets, Verdict};
use orbitgrowth::cli::run_from_args;
use orbitgrowth::dynamics::{growth_estimate, iterate, observable_series, trivial_bound_check, OrbitSource, DEFAULT_BIT_BUDGET};
use orbitgrowth::heights::{
    height_projective, height_rational, place_decomposition, sum_height_bound_multiplicative,
};
use orbitgrowth::modp::{
    berlekamp_massey_degree, cycle_structure, degree_profile_sweep, degree_profile_sweep_sequential, ReducedModel,
};
use orbitgrowth::polyexpr::{default_variables, parse_polynomial, MultivariatePolynomial, Observable, PolySelfMap, UniPoly};
use orbitgrowth::rationality::{
    check_rationality, criterion_check, growth_lower_bound_rows, truncation_upper_bound_holds, CriterionVerdict,
    RationalityVerdict,
};
use orbitgrowth::{BigInt, BigRational, BigUint};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn q(n: i64) -> BigRational {
    BigRational::from_integer(BigInt::from(n))
}

fn check(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn source(exprs: &[&str], point: &[i64]) -> OrbitSource {
    let vars = default_variables(exprs.len());
    let f = PolySelfMap::new(exprs.iter().map(|e| parse_polynomial(e, &vars).unwrap()).collect()).unwrap();
    OrbitSource::new(f, Observable::projection(exprs.len(), 0), point.iter().map(|&x| q(x)).collect()).unwrap()
}

fn random_quadratic(rng: &mut ChaCha8Rng) -> OrbitSource {
    let r = rng.gen_range(1..=2usize);
    let mut exponents: Vec<Vec<u32>> = Vec::new();
    for a in 0..=2u32 {
        for b in 0..=2u32 {
            if a + b <= 2 && (r == 2 || b == 0) {
                exponents.push(if r == 2 { vec![a, b] } else { vec![a] });
            }
        }
    }
    let coords: Vec<MultivariatePolynomial> = (0..r)
        .map(|_| {
            let terms = exponents.iter().map(|e| (e.clone(), q(rng.gen_range(-3..=3))));
            MultivariatePolynomial::from_terms(r, terms).unwrap()
        })
        .collect();
    let point = (0..r).map(|_| q(rng.gen_range(-3..=3))).collect();
    OrbitSource::new(PolySelfMap::new(coords).unwrap(), Observable::projection(r, 0), point).unwrap()
}

/// Fibonacci, x^2 + 1, (y, xy + 1) from (1, 1), and 20 seeded random
/// quadratic maps with r <= 2 and coefficients in [-3, 3].
fn corpus() -> Vec<(String, OrbitSource)> {
    let mut out = vec![
        ("fibonacci".to_string(), source(&["y", "x + y"], &[0, 1])),
        ("x^2+1".to_string(), source(&["x^2 + 1"], &[0])),
        ("(y, xy+1)".to_string(), source(&["y", "x*y + 1"], &[1, 1])),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(20240611);
    for i in 0..20 {
        out.push((format!("random #{i}"), random_quadratic(&mut rng)));
    }
    out
}

fn trivial_bound() -> Outcome {
    let start = Instant::now();
    let f = PolySelfMap::new(vec![parse_polynomial("x^2 + 1", &default_variables(1)).unwrap()]).unwrap();
    let orbit = iterate(&f, &Observable::projection(1, 0), &[q(0)], 25, u64::MAX).map_err(|e| e.to_string())?;
    let rows = trivial_bound_check(&orbit, 1).map_err(|e| e.to_string())?;
    check(rows.len() == 26, || format!("{} rows", rows.len()))?;
    if let Some((n, _)) = rows.iter().find(|(_, ok)| !ok) {
        return Err(format!("(2H_n + 1) > n fails at n = {n}"));
    }
    let elapsed = start.elapsed();
    check(elapsed < Duration::from_secs(5), || format!("took {elapsed:?}"))?;
    Ok(format!("(2H_n+1) > n for all n <= 25 in {elapsed:.2?}"))
}

fn degree_bound() -> Outcome {
    let start = Instant::now();
    let mut checked = 0usize;
    for (name, src) in corpus() {
        let r = src.arity() as u32;
        for prof in degree_profile_sweep(&src, 100).profiles {
            let p = prof.p;
            check(BigUint::from(prof.h_p) <= BigUint::from(p).pow(r) * 2u32, || {
                format!("{name}: h_{p} = {} exceeds 2p^r", prof.h_p)
            })?;
            check(prof.bound_2pr == BigUint::from(p).pow(r) * 2u32, || format!("{name}: bound column at p = {p}"))?;
            let model = ReducedModel::new(&src, p).map_err(|e| e.to_string())?;
            let (m, c) = cycle_structure(&model);
            let seq = model.observable_sequence(2 * (m + c) + 2);
            let bm = berlekamp_massey_degree(&seq, p).map_err(|e| format!("{name} p = {p}: {e}"))?;
            check(bm.degree == prof.h_p && bm.fraction == prof.fraction, || {
                format!("{name} p = {p}: cycle degree {} vs BM degree {}", prof.h_p, bm.degree)
            })?;
            checked += 1;
        }
    }
    let elapsed = start.elapsed();
    check(elapsed < Duration::from_secs(60), || format!("took {elapsed:?}"))?;
    Ok(format!("{checked} (source, prime) pairs, h_p <= 2p^r and cycle = BM, in {elapsed:.2?}"))
}

fn random_poly(rng: &mut ChaCha8Rng, constant_one: bool) -> UniPoly {
    let deg = rng.gen_range(0..=5usize);
    let mut c: Vec<i64> = (0..=deg).map(|_| rng.gen_range(-9..=9)).collect();
    if constant_one {
        c[0] = 1;
    }
    UniPoly::from_integers(&c)
}

fn pade_recovery() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let primes: Vec<u64> = orbitgrowth::arith::primes_up_to(200).into_iter().filter(|&p| p > 10).collect();
    let one = BigRational::one();
    for trial in 0..200 {
        let p = random_poly(&mut rng, false);
        let qq = random_poly(&mut rng, true);
        let len = 41;
        // power series of P/Q by the recurrence Q * F = P
        let mut f: Vec<BigRational> = Vec::with_capacity(len);
        for n in 0..len {
            let mut acc = p.coeff(n);
            for k in 1..=n {
                acc -= qq.coeff(k) * &f[n - k];
            }
            f.push(acc);
        }
        let sample: Vec<u64> = (0..3).map(|_| primes[rng.gen_range(0..primes.len())]).collect();
        let mut series = orbitgrowth::dynamics::CoefficientSeries::from_coefficients(f);
        let verdict = check_rationality(&mut series, 4, &one, len - 1, &sample).map_err(|e| e.to_string())?;
        let RationalityVerdict::Rational {
            numerator,
            denominator,
            confirmed_primes,
            ..
        } = verdict
        else {
            return Err(format!("trial {trial}: {p} / ({qq}) not recovered: {verdict:?}"));
        };
        // the reduced normalized form is unique: same fraction, coprime, Q(0) = 1
        check(&numerator * &qq == &p * &denominator, || format!("trial {trial}: wrong fraction"))?;
        check(denominator.coeff(0).is_one(), || format!("trial {trial}: Q(0) != 1"))?;
        let g = numerator.gcd(&denominator);
        check(g.degree() == Some(0), || format!("trial {trial}: not reduced"))?;
        check(confirmed_primes.len() == 3, || format!("trial {trial}: confirmed {confirmed_primes:?}"))?;
    }
    Ok("200/200 random P/Q recovered exactly with 3 mod-p confirmations".into())
}

fn criterion_consistency() -> Outcome {
    let one = BigRational::one();
    let mut fib = observable_series(&source(&["y", "x + y"], &[0, 1]), 40, DEFAULT_BIT_BUDGET).map_err(|e| e.to_string())?;
    let rep = criterion_check(&mut fib, &one, &[30], 100).map_err(|e| e.to_string())?;
    let row = &rep.rows[0];
    check(row.verdict == CriterionVerdict::ProvedHolds, || format!("fibonacci row {row:?}"))?;
    let (lhs, rhs) = (row.lhs, row.rhs);
    let v = check_rationality(&mut fib, 6, &one, 40, &[3, 7, 11]).map_err(|e| e.to_string())?;
    check(v.is_rational(), || format!("fibonacci rationality {v:?}"))?;

    let mut quad = observable_series(&source(&["x^2 + 1"], &[0]), 20, DEFAULT_BIT_BUDGET).map_err(|e| e.to_string())?;
    let rep = criterion_check(&mut quad, &one, &[20], 200).map_err(|e| e.to_string())?;
    let row = &rep.rows[0];
    check(row.verdict == CriterionVerdict::FailsWithinBudget, || format!("x^2+1 row {row:?}"))?;
    let ns: Vec<usize> = (2..=20).collect();
    let rows = growth_lower_bound_rows(&mut quad, 1, &ns).map_err(|e| e.to_string())?;
    if let Some(bad) = rows.iter().find(|r| !r.holds) {
        return Err(format!("h(F_/n) >= n/18 fails at n = {}", bad.n));
    }
    Ok(format!(
        "fibonacci n=30 ProvedHolds (lhs {lhs:.2} > rhs {rhs:.2}) and Rational; x^2+1 n=20 FailsWithinBudget; h(F_/n) >= n/18 for 2 <= n <= 20"
    ))
}

fn dichotomy() -> Outcome {
    let budgets = Budgets::default();
    let t_vars: Vec<String> = (1..=3).map(|i| format!("T{i}")).collect();
    let period3 = recurrence_to_spec(
        &parse_polynomial("T1", &t_vars).unwrap(),
        &[BigInt::from(1), BigInt::from(2), BigInt::from(3)],
    )
    .map_err(|e| e.to_string())?;
    let cases: Vec<(&str, OrbitSource, usize, Vec<UniPoly>)> = vec![
        ("x+1 from 3", source(&["x + 1"], &[3]), 1, vec![UniPoly::from_integers(&[3, 1])]),
        (
            "swap",
            source(&["y", "x"], &[2, 3]),
            2,
            vec![UniPoly::from_integers(&[2]), UniPoly::from_integers(&[3])],
        ),
        (
            "period 3",
            period3,
            3,
            vec![UniPoly::from_integers(&[1]), UniPoly::from_integers(&[2]), UniPoly::from_integers(&[3])],
        ),
    ];
    for (name, src, d, polys) in cases {
        let c = classify(&src, &budgets).map_err(|e| e.to_string())?;
        let dec = c.decomposition.clone().ok_or_else(|| format!("{name}: {:?}", c.verdict))?;
        check(c.verdict == Verdict::EventuallyPolynomial && dec.d == d && dec.polynomials == polys, || {
            format!("{name}: got d = {} {:?}", dec.d, dec.polynomials)
        })?;
        let series = observable_series(&src, c.budgets.steps, budgets.bit_budget).map_err(|e| e.to_string())?;
        for n in dec.n0..series.len() {
            check(dec.evaluate(n) == series.coefficients()[n], || format!("{name}: mismatch at {n}"))?;
        }
    }

    let quad = source(&["x^2 + 1"], &[0]);
    let c = classify(&quad, &budgets).map_err(|e| e.to_string())?;
    check(c.verdict == Verdict::GrowthEvidence, || format!("x^2+1: {:?}", c.verdict))?;
    let series = observable_series(&quad, 20, DEFAULT_BIT_BUDGET).map_err(|e| e.to_string())?;
    let g = growth_estimate(&series.heights(), 5, 1).map_err(|e| e.to_string())?;
    check(g.window == (5, 20) && g.sup_ratio >= 1.0, || format!("x^2+1 window {g:?}"))?;

    let t2: Vec<String> = vec!["T1".into(), "T2".into()];
    let prod = recurrence_to_spec(&parse_polynomial("T1*T2 + 1", &t2).unwrap(), &[BigInt::from(1), BigInt::from(1)])
        .map_err(|e| e.to_string())?;
    let c = classify(&prod, &budgets).map_err(|e| e.to_string())?;
    let pg = c.growth.clone().ok_or("product recurrence: no growth window")?;
    check(c.verdict == Verdict::GrowthEvidence && pg.sup_ratio >= 0.5, || {
        format!("product recurrence: {:?} {pg:?}", c.verdict)
    })?;
    Ok(format!(
        "x+1, swap, period 3 decomposed exactly; x^2+1 ratio {:.3} >= 1 on [5,20]; A(n+2)=A(n+1)A(n)+1 ratio {:.3} >= 1/2",
        g.sup_ratio, pg.sup_ratio
    ))
}

fn random_rational(rng: &mut ChaCha8Rng) -> BigRational {
    let num = BigInt::from(rng.gen_range(-1_000_000_000_000i64..=1_000_000_000_000));
    let den = BigInt::from(rng.gen_range(1..=1_000_000_000_000i64));
    BigRational::new(num, den)
}

fn height_axioms() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..1000 {
        let mut c = random_rational(&mut rng);
        if c.is_zero() {
            c = q(1);
        }
        let places = place_decomposition(&c).map_err(|e| e.to_string())?;
        check(places.product_formula_holds(&c), || format!("product formula fails for {c}"))?;
    }
    for _ in 0..500 {
        let len = rng.gen_range(1..=5);
        let mut v: Vec<BigRational> = (0..len).map(|_| random_rational(&mut rng)).collect();
        if v.iter().all(|x| x.is_zero()) {
            v[0] = q(1);
        }
        let mut scale = random_rational(&mut rng);
        if scale.is_zero() {
            scale = q(-3);
        }
        let scaled: Vec<BigRational> = v.iter().map(|x| x * &scale).collect();
        let a = height_projective(&v).map_err(|e| e.to_string())?;
        let b = height_projective(&scaled).map_err(|e| e.to_string())?;
        check(a.multiplicative == b.multiplicative, || format!("scale invariance fails for {v:?}"))?;
    }
    for _ in 0..500 {
        let len = rng.gen_range(1..=6);
        let terms: Vec<BigRational> = (0..len).map(|_| random_rational(&mut rng)).collect();
        let sum = terms.iter().fold(BigRational::zero(), |acc, t| acc + t);
        let lhs = BigRational::from_integer(BigInt::from(height_rational(&sum).multiplicative));
        check(lhs <= sum_height_bound_multiplicative(&terms), || format!("sum bound fails for {terms:?}"))?;
    }
    Ok("product formula x1000, projective scale invariance x500, sum bound x500 exact".into())
}

fn truncation_bound() -> Outcome {
    let mut checked = 0;
    for (name, src) in corpus() {
        let series = observable_series(&src, 40, DEFAULT_BIT_BUDGET).map_err(|e| e.to_string())?;
        for n in 0..series.len() {
            check(truncation_upper_bound_holds(&series, n), || format!("{name}: fails at n = {n}"))?;
            checked += 1;
        }
    }
    Ok(format!("{checked} (source, n) pairs"))
}

fn run_cli(args: &[&str]) -> i32 {
    let mut full = vec!["orbitgrowth"];
    full.extend_from_slice(args);
    run_from_args(full)
}

fn dir_contents(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

fn determinism() -> Outcome {
    let specs = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../specs");
    let fib = specs.join("fib.spec");
    let quad = specs.join("quad.spec");
    let (fib, quad) = (fib.to_str().unwrap(), quad.to_str().unwrap());
    let commands: Vec<Vec<&str>> = vec![
        vec!["orbit", fib],
        vec!["orbit", quad],
        vec!["heights", fib],
        vec!["heights", quad],
        vec!["exponent", fib],
        vec!["modp", fib, "--pmax", "100"],
        vec!["modp", quad],
        vec!["rationality", fib],
        vec!["rationality", quad, "--verify", "20"],
        vec!["criterion", fib, "--pmax", "100", "--n", "30"],
        vec!["criterion", quad, "--n", "10,15,20"],
        vec!["classify", fib],
        vec!["classify", quad],
        vec!["recurrence", "--poly", "T1", "--seeds", "1,2,3", "--name", "period3"],
    ];
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut codes = [Vec::new(), Vec::new()];
    for (k, codes) in codes.iter_mut().enumerate() {
        let out = tmp.path().join(format!("run{k}"));
        let out = out.to_str().unwrap();
        for cmd in &commands {
            let mut args = cmd.clone();
            args.extend(["--out", out, "--deterministic"]);
            codes.push(run_cli(&args));
        }
    }
    check(codes[0] == codes[1], || format!("exit codes differ: {codes:?}"))?;
    check(codes[0].iter().all(|&c| c == 0 || c == 3), || format!("unexpected exit codes {:?}", codes[0]))?;
    let a = dir_contents(&tmp.path().join("run0"));
    let b = dir_contents(&tmp.path().join("run1"));
    check(a.len() >= 12, || format!("only {} output files", a.len()))?;
    for ((na, ca), (nb, cb)) in a.iter().zip(&b) {
        check(na == nb && ca == cb, || format!("{na} differs between runs"))?;
    }
    check(a.len() == b.len(), || "different file sets".into())?;

    // warm cache gives the same reports as the cold run
    let run0 = tmp.path().join("run0");
    let warm = run0.to_str().unwrap();
    run_cli(&["heights", fib, "--out", warm, "--deterministic"]);
    check(dir_contents(&run0) == a, || "warm-cache run changed outputs".into())?;

    let seq = tmp.path().join("seq");
    run_cli(&["modp", fib, "--pmax", "100", "--sequential", "--out", seq.to_str().unwrap()]);
    check(
        fs::read(seq.join("fib.modp.csv")).ok() == fs::read(run0.join("fib.modp.csv")).ok(),
        || "CLI sequential sweep differs".into(),
    )?;
    for (name, src) in corpus() {
        check(degree_profile_sweep(&src, 100) == degree_profile_sweep_sequential(&src, 100), || {
            format!("{name}: parallel sweep differs from sequential")
        })?;
    }
    Ok(format!("{} commands x2 byte-identical; warm cache identical; parallel sweep = sequential", commands.len()))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("1 trivial height bound", trivial_bound),
        ("2 mod-p degree bound", degree_bound),
        ("3 Pade recovery", pade_recovery),
        ("4 criterion consistency", criterion_consistency),
        ("5 dichotomy", dichotomy),
        ("6 height axioms", height_axioms),
        ("7 truncation bound", truncation_bound),
        ("8 determinism", determinism),
    ];
    let mut failures = 0;
    for (name, f) in criteria {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(f).unwrap_or_else(|_| Err("panicked".into()));
        match outcome {
            Ok(detail) => println!("PASS criterion {name}: {detail} [{:.2?}]", start.elapsed()),
            Err(detail) => {
                failures += 1;
                println!("FAIL criterion {name}: {detail} [{:.2?}]", start.elapsed());
            }
        }
    }
    println!("acceptance: {} passed, {failures} failed", 8 - failures);
    if failures > 0 {
        std::process::exit(1);
    }
}
