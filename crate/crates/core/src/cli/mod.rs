//! Command-line front end. Every command reads a problem spec (except
//! `recurrence`, which writes one) and leaves its report in `--out`.
//!
//! Exit status: 0 on success, 2 for spec or usage errors, 3 when the bit
//! budget stopped the computation (partial reports are still written), 1 for
//! anything else.

pub mod spec;

use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand};
use num_bigint::BigInt;
use num_rational::BigRational;
use serde_json::{json, Value};
use thiserror::Error;

use crate::classifier::{classify, recurrence_to_spec};
use crate::dynamics::{
    growth_estimate, iterate, observable_series, read_orbit_cache, trivial_bound_check, write_orbit_cache, DynamicsError,
    OrbitRecord,
};
use crate::modp::{degree_profile_sweep, degree_profile_sweep_sequential};
use crate::polyexpr::{default_variables, parse_polynomial};
use crate::rational_string;
use crate::rationality::{check_rationality, criterion_check, RationalityError, RationalityVerdict};
pub use spec::{parse_spec, ProblemSpec, SpecError};

#[derive(Debug, Parser)]
#[command(name = "orbitgrowth", version, about = "Heights, mod-p degree profiles and rationality checks for polynomial orbits over Q")]
pub struct Cli {
    /// Directory for reports and the orbit cache
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,
    /// Leave the timestamp out of JSON reports
    #[arg(long, global = true)]
    pub deterministic: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Iterate the map and write the orbit cache (<name>.orbit.tsv)
    Orbit {
        spec: PathBuf,
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Height profile of the orbit and its observable (<name>.heights.csv)
    Heights {
        spec: PathBuf,
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Window growth exponent of h(c_n) (<name>.exponent.json)
    Exponent {
        spec: PathBuf,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        n_min: Option<usize>,
    },
    /// Rational degree of the series mod every good prime up to pmax (<name>.modp.csv)
    Modp {
        spec: PathBuf,
        #[arg(long)]
        pmax: Option<u64>,
        /// Sweep primes one at a time instead of in parallel
        #[arg(long)]
        sequential: bool,
    },
    /// Padé construction at order (2+eta)L, verified to --verify and mod the sample primes (<name>.rationality.json)
    Rationality {
        spec: PathBuf,
        #[arg(long = "l", default_value_t = 6)]
        l: usize,
        #[arg(long)]
        eta: Option<String>,
        #[arg(long, default_value_t = 40)]
        verify: usize,
        #[arg(long, value_delimiter = ',', default_values_t = [3u64, 7, 11])]
        primes: Vec<u64>,
    },
    /// Prime-sum rationality criterion at each n (<name>.criterion.json)
    Criterion {
        spec: PathBuf,
        #[arg(long)]
        eta: Option<String>,
        #[arg(long)]
        pmax: Option<u64>,
        #[arg(long, value_delimiter = ',', default_values_t = [10usize, 20, 30])]
        n: Vec<usize>,
    },
    /// Eventually polynomial on progressions, or growth evidence (<name>.classify.json)
    Classify {
        spec: PathBuf,
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Build the shift map of A(n+r) = p(T1, ..., Tr), where Ti stands for
    /// A(n+i-1), write it as <name>.spec and classify it. The observable is
    /// the first coordinate, so c_n = A(n) rather than A(n+r-1).
    Recurrence {
        /// Polynomial in T1..Tr with integer coefficients
        #[arg(long)]
        poly: String,
        /// Seeds A(0), ..., A(r-1); their count fixes r
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
        seeds: Vec<String>,
        #[arg(long, default_value = "recurrence")]
        name: String,
    },
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Spec(String),
    #[error("{0}")]
    Overflow(String),
    #[error("{0}")]
    Other(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Spec(_) => 2,
            CliError::Overflow(_) => 3,
            CliError::Other(_) => 1,
        }
    }
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Other(format!("{}: {e}", path.display()))
}

/// Runs a parsed command line and returns the process exit status.
pub fn run(cli: &Cli) -> i32 {
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Parses `args` (program name first) and runs them.
pub fn run_from_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => run(&cli),
        Err(e) => {
            let _ = e.print();
            if e.use_stderr() {
                2
            } else {
                0
            }
        }
    }
}

pub fn load_spec(path: &Path) -> Result<ProblemSpec, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Spec(format!("{}: {e}", path.display())))?;
    let spec = parse_spec(&text).map_err(|e| CliError::Spec(format!("{}: {e}", path.display())))?;
    for w in &spec.warnings {
        log::warn!("{}: {w}", path.display());
    }
    Ok(spec)
}

fn parse_eta(text: Option<&String>, default: &BigRational) -> Result<BigRational, CliError> {
    match text {
        None => Ok(default.clone()),
        Some(t) => spec::parse_rational(t)
            .filter(|e| *e > BigRational::from_integer(BigInt::from(0)))
            .ok_or_else(|| CliError::Spec(format!("--eta: expected a positive rational, found `{t}`"))),
    }
}

struct Writer<'a> {
    out: &'a Path,
    deterministic: bool,
}

impl Writer<'_> {
    fn path(&self, name: &str, suffix: &str) -> PathBuf {
        self.out.join(format!("{name}.{suffix}"))
    }

    fn text(&self, name: &str, suffix: &str, body: &str) -> Result<PathBuf, CliError> {
        fs::create_dir_all(self.out).map_err(|e| io_err(self.out, e))?;
        let path = self.path(name, suffix);
        fs::write(&path, body).map_err(|e| io_err(&path, e))?;
        Ok(path)
    }

    fn json(&self, name: &str, suffix: &str, mut value: Value) -> Result<PathBuf, CliError> {
        if let Value::Object(map) = &mut value {
            map.insert("name".into(), Value::String(name.into()));
            if !self.deterministic {
                let secs = SystemTime::now()
                    .duration_since(UNIX_EPOCH)
                    .map(|d| d.as_secs())
                    .unwrap_or(0);
                map.insert("generated_at".into(), json!(secs));
            }
        }
        let mut body = serde_json::to_string_pretty(&value).expect("reports serialize");
        body.push('\n');
        self.text(name, suffix, &body)
    }
}

fn overflow_json(e: &DynamicsError) -> Value {
    match e {
        DynamicsError::OrbitOverflow(o) => json!({ "n": o.n, "bits": o.bits }),
        _ => Value::Null,
    }
}

/// Orbit records for `steps` steps, from the cache in `out` when it was
/// written for the same orbit and is long enough. The cache is refreshed
/// after a cold run; an overflow still returns the computed prefix.
pub fn cached_orbit(spec: &ProblemSpec, steps: usize, out: &Path) -> Result<(Vec<OrbitRecord>, Option<DynamicsError>), CliError> {
    let tsv = out.join(format!("{}.orbit.tsv", spec.name));
    let key_path = out.join(format!("{}.orbit.key", spec.name));
    let key = spec.orbit_key();
    if fs::read_to_string(&key_path).is_ok_and(|k| k == key) {
        if let Ok(file) = fs::File::open(&tsv) {
            if let Ok(records) = read_orbit_cache(BufReader::new(file)) {
                if records.len() > steps {
                    log::info!("using cached orbit {}", tsv.display());
                    return Ok((records[..=steps].to_vec(), None));
                }
            }
        }
    }
    let src = &spec.source;
    let (records, err) = match iterate(&src.map, &src.observable, &src.point, steps, spec.options.bit_budget) {
        Ok(r) => (r, None),
        Err(DynamicsError::OrbitOverflow(o)) => {
            let partial = o.partial.clone();
            (partial, Some(DynamicsError::OrbitOverflow(o)))
        }
        Err(e) => return Err(CliError::Other(e.to_string())),
    };
    fs::create_dir_all(out).map_err(|e| io_err(out, e))?;
    let mut body = Vec::new();
    write_orbit_cache(&records, &mut body).map_err(|e| io_err(&tsv, e))?;
    fs::write(&tsv, body).map_err(|e| io_err(&tsv, e))?;
    fs::write(&key_path, key).map_err(|e| io_err(&key_path, e))?;
    Ok((records, err))
}

fn overflow_result(err: Option<DynamicsError>, written: &Path) -> Result<(), CliError> {
    match err {
        Some(e) => Err(CliError::Overflow(format!("{e}; partial report in {}", written.display()))),
        None => Ok(()),
    }
}

fn dispatch(cli: &Cli) -> Result<(), CliError> {
    let w = Writer {
        out: &cli.out,
        deterministic: cli.deterministic,
    };
    match &cli.command {
        Command::Orbit { spec, steps } => {
            let spec = load_spec(spec)?;
            let steps = steps.unwrap_or(spec.options.steps);
            let (_, err) = cached_orbit(&spec, steps, &cli.out)?;
            overflow_result(err, &w.path(&spec.name, "orbit.tsv"))
        }
        Command::Heights { spec, steps } => {
            let spec = load_spec(spec)?;
            let steps = steps.unwrap_or(spec.options.steps);
            let (records, err) = cached_orbit(&spec, steps, &cli.out)?;
            let mut body = String::from("n,h_point,h_obs,bits_point\n");
            for rec in &records {
                let bits = rec
                    .point
                    .iter()
                    .map(|x| x.numer().bits().max(x.denom().bits()))
                    .max()
                    .unwrap_or(0);
                body.push_str(&format!(
                    "{},{},{},{}\n",
                    rec.index, rec.point_height.logarithmic, rec.observable_height.logarithmic, bits
                ));
            }
            let path = w.text(&spec.name, "heights.csv", &body)?;
            overflow_result(err, &path)
        }
        Command::Exponent { spec, steps, n_min } => {
            let spec = load_spec(spec)?;
            let steps = steps.unwrap_or(spec.options.steps);
            let n_min = n_min.unwrap_or(spec.options.n_min);
            let (records, err) = cached_orbit(&spec, steps, &cli.out)?;
            let heights: Vec<_> = records.iter().map(|r| r.observable_height.clone()).collect();
            let growth = growth_estimate(&heights, n_min, spec.r).ok();
            let trivial = trivial_bound_check(&records, spec.r)
                .ok()
                .map(|rows| rows.iter().all(|&(_, ok)| ok));
            let value = json!({
                "r": spec.r,
                "steps_computed": records.len().saturating_sub(1),
                "growth": growth,
                "meets_threshold": growth.as_ref().map(|g| g.meets_threshold()),
                "trivial_bound_holds": trivial,
                "overflow": err.as_ref().map(overflow_json),
            });
            let path = w.json(&spec.name, "exponent.json", value)?;
            overflow_result(err, &path)
        }
        Command::Modp { spec, pmax, sequential } => {
            let spec = load_spec(spec)?;
            let pmax = pmax.unwrap_or(spec.options.pmax);
            let sweep = if *sequential {
                degree_profile_sweep_sequential(&spec.source, pmax)
            } else {
                degree_profile_sweep(&spec.source, pmax)
            };
            w.text(&spec.name, "modp.csv", &sweep.to_csv())?;
            Ok(())
        }
        Command::Rationality {
            spec,
            l,
            eta,
            verify,
            primes,
        } => {
            let spec = load_spec(spec)?;
            let eta = parse_eta(eta.as_ref(), &spec.options.eta)?;
            let base = json!({
                "L": l,
                "eta": rational_string(&eta),
                "verify": verify,
                "sample_primes": primes,
            });
            let mut series = observable_series(&spec.source, 0, spec.options.bit_budget)
                .map_err(|e| CliError::Other(e.to_string()))?;
            let result = check_rationality(&mut series, *l, &eta, *verify, primes);
            let mut value = base;
            let map = value.as_object_mut().expect("object");
            match result {
                Ok(RationalityVerdict::Rational {
                    numerator,
                    denominator,
                    verified_order,
                    confirmed_primes,
                    denominator_height,
                    siegel_bound,
                }) => {
                    map.insert("verdict".into(), json!("Rational"));
                    map.insert(
                        "numerator".into(),
                        json!(numerator.coeffs().iter().map(rational_string).collect::<Vec<_>>()),
                    );
                    map.insert(
                        "denominator".into(),
                        json!(denominator.coeffs().iter().map(rational_string).collect::<Vec<_>>()),
                    );
                    map.insert("verified_order".into(), json!(verified_order));
                    map.insert("confirmed_primes".into(), json!(confirmed_primes));
                    map.insert("denominator_height".into(), json!(denominator_height));
                    map.insert("siegel_bound".into(), json!(siegel_bound));
                }
                Ok(RationalityVerdict::Undecided { max_contact, reason }) => {
                    map.insert("verdict".into(), json!("Undecided"));
                    map.insert("max_contact".into(), json!(max_contact));
                    map.insert("reason".into(), json!(reason));
                }
                Err(RationalityError::Series(e @ DynamicsError::OrbitOverflow(_))) => {
                    map.insert("verdict".into(), json!("Overflow"));
                    map.insert("overflow".into(), overflow_json(&e));
                    let path = w.json(&spec.name, "rationality.json", value)?;
                    return overflow_result(Some(e), &path);
                }
                Err(e @ RationalityError::NonIntegralEtaL(_)) | Err(e @ RationalityError::NonPositiveEta) => {
                    return Err(CliError::Spec(e.to_string()))
                }
                Err(e) => return Err(CliError::Other(e.to_string())),
            }
            w.json(&spec.name, "rationality.json", value)?;
            Ok(())
        }
        Command::Criterion { spec, eta, pmax, n } => {
            let spec = load_spec(spec)?;
            let eta = parse_eta(eta.as_ref(), &spec.options.eta)?;
            let pmax = pmax.unwrap_or(spec.options.pmax);
            let mut series = observable_series(&spec.source, 0, spec.options.bit_budget)
                .map_err(|e| CliError::Other(e.to_string()))?;
            let report = criterion_check(&mut series, &eta, n, pmax).map_err(|e| CliError::Other(e.to_string()))?;
            let value = serde_json::to_value(&report).expect("report serializes");
            let path = w.json(&spec.name, "criterion.json", value)?;
            if report.unreachable.is_empty() {
                Ok(())
            } else {
                Err(CliError::Overflow(format!(
                    "n = {:?} beyond the bit budget; partial report in {}",
                    report.unreachable,
                    path.display()
                )))
            }
        }
        Command::Classify { spec, steps } => {
            let spec = load_spec(spec)?;
            let mut budgets = spec.options.budgets();
            if let Some(s) = steps {
                budgets.steps = *s;
            }
            let c = classify(&spec.source, &budgets).map_err(|e| CliError::Other(e.to_string()))?;
            w.json(&spec.name, "classify.json", c.to_json())?;
            Ok(())
        }
        Command::Recurrence { poly, seeds, name } => {
            let spec = recurrence_spec(poly, seeds, name)?;
            w.text(&spec.name, "spec", &spec.to_text())?;
            let c = classify(&spec.source, &spec.options.budgets()).map_err(|e| CliError::Other(e.to_string()))?;
            w.json(&spec.name, "classify.json", c.to_json())?;
            Ok(())
        }
    }
}

/// Problem spec for `A(n+r) = p(T1, ..., Tr)` with `Ti = A(n+i-1)`.
pub fn recurrence_spec(poly: &str, seeds: &[String], name: &str) -> Result<ProblemSpec, CliError> {
    let r = seeds.len();
    let seeds: Vec<BigInt> = seeds
        .iter()
        .map(|s| {
            s.trim()
                .parse::<BigInt>()
                .map_err(|_| CliError::Spec(format!("--seeds: `{s}` is not an integer")))
        })
        .collect::<Result<_, _>>()?;
    let t_vars: Vec<String> = (1..=r).map(|i| format!("T{i}")).collect();
    let p = parse_polynomial(poly, &t_vars).map_err(|e| CliError::Spec(format!("--poly: {e}")))?;
    let source = recurrence_to_spec(&p, &seeds).map_err(|e| CliError::Spec(e.to_string()))?;
    let vars = default_variables(r);
    let mut text = format!("name = {name}\nr = {r}\nvars = {}\n", vars.join(", "));
    for (i, c) in source.map.coordinates().iter().enumerate() {
        text.push_str(&format!("map.{} = {}\n", i + 1, c.format_with(&vars)));
    }
    text.push_str(&format!("lambda = {}\n", vars[0]));
    let point: Vec<String> = seeds.iter().map(|s| s.to_string()).collect();
    text.push_str(&format!("point = {}\n", point.join(", ")));
    parse_spec(&text).map_err(|e| CliError::Spec(e.to_string()))
}
