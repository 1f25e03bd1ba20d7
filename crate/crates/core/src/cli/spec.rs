//! Problem spec files: flat `key = value` lines, `#` starts a comment.
//!
//! ```text
//! name = quad
//! r = 1
//! vars = x
//! map.1 = x^2 + 1
//! lambda = x
//! point = 0
//! steps = 64
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, Zero};
use thiserror::Error;

use crate::classifier::Budgets;
use crate::dynamics::{OrbitSource, DEFAULT_BIT_BUDGET};
use crate::polyexpr::{default_variables, parse_polynomial, Observable, ParseError, PolySelfMap};
use crate::rational_string;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SpecError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: duplicate key `{key}`")]
    DuplicateKey { line: usize, key: String },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("missing key `{0}`")]
    MissingKey(String),
    #[error("line {line}: `{key}`: {message}")]
    InvalidValue { line: usize, key: String, message: String },
    #[error("line {line}: `{key}`: {source}")]
    Expression {
        line: usize,
        key: String,
        source: ParseError,
    },
    #[error("line {line}: {message}")]
    DimensionMismatch { line: usize, message: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Options {
    pub steps: usize,
    pub bit_budget: u64,
    pub eta: BigRational,
    pub pmax: u64,
    pub d_max: usize,
    pub g_max: usize,
    pub n0_max: usize,
    pub n_min: usize,
}

impl Default for Options {
    fn default() -> Self {
        let b = Budgets::default();
        Options {
            steps: b.steps,
            bit_budget: DEFAULT_BIT_BUDGET,
            eta: BigRational::from_integer(BigInt::from(1)),
            pmax: 200,
            d_max: b.d_max,
            g_max: b.g_max,
            n0_max: b.n0_max,
            n_min: b.n_min,
        }
    }
}

impl Options {
    pub fn budgets(&self) -> Budgets {
        Budgets {
            steps: self.steps,
            bit_budget: self.bit_budget,
            d_max: self.d_max,
            g_max: self.g_max,
            n0_max: self.n0_max,
            n_min: self.n_min,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProblemSpec {
    pub name: String,
    pub r: usize,
    pub vars: Vec<String>,
    pub map: Vec<String>,
    pub lambda: String,
    pub point: Vec<BigRational>,
    pub options: Options,
    pub source: OrbitSource,
    pub warnings: Vec<String>,
}

const KEYS: &[&str] = &[
    "name", "r", "vars", "lambda", "point", "steps", "bit_budget", "eta", "pmax", "d_max", "g_max", "n0_max", "n_min",
];

fn known_key(key: &str) -> bool {
    KEYS.contains(&key)
        || key
            .strip_prefix("map.")
            .is_some_and(|i| i.parse::<usize>().is_ok_and(|i| i >= 1))
}

pub fn parse_rational(s: &str) -> Option<BigRational> {
    let s = s.trim();
    let (n, d) = match s.split_once('/') {
        Some((n, d)) => (n.trim(), d.trim()),
        None => (s, "1"),
    };
    let n: BigInt = n.parse().ok()?;
    let d: BigInt = d.parse().ok()?;
    (!d.is_zero()).then(|| BigRational::new(n, d))
}

pub fn parse_spec(text: &str) -> Result<ProblemSpec, SpecError> {
    let mut entries: BTreeMap<String, (usize, String)> = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let Some((key, value)) = content.split_once('=') else {
            return Err(SpecError::Syntax {
                line,
                message: "expected `key = value`".into(),
            });
        };
        let key = key.trim().to_string();
        if !known_key(&key) {
            return Err(SpecError::UnknownKey { line, key });
        }
        if entries.contains_key(&key) {
            return Err(SpecError::DuplicateKey { line, key });
        }
        entries.insert(key, (line, value.trim().to_string()));
    }

    let get = |key: &str| entries.get(key).map(|(l, v)| (*l, v.as_str()));
    let require = |key: &str| get(key).ok_or_else(|| SpecError::MissingKey(key.to_string()));
    fn number<T: std::str::FromStr>(key: &str, line: usize, v: &str) -> Result<T, SpecError> {
        v.replace('_', "").parse().map_err(|_| SpecError::InvalidValue {
            line,
            key: key.into(),
            message: format!("expected a nonnegative integer, found `{v}`"),
        })
    }

    let name = get("name").map(|(_, v)| v.to_string()).unwrap_or_else(|| "orbit".into());
    if name.is_empty() || name.contains(['/', '\\']) {
        let line = get("name").map(|(l, _)| l).unwrap_or(0);
        return Err(SpecError::InvalidValue {
            line,
            key: "name".into(),
            message: "must be nonempty and free of path separators".into(),
        });
    }
    let (r_line, r_text) = require("r")?;
    let r: usize = number("r", r_line, r_text)?;
    if r == 0 {
        return Err(SpecError::InvalidValue {
            line: r_line,
            key: "r".into(),
            message: "dimension must be positive".into(),
        });
    }
    let vars = match get("vars") {
        Some((line, v)) => {
            let names: Vec<String> = v
                .split(|c: char| c == ',' || c.is_whitespace())
                .filter(|s| !s.is_empty())
                .map(str::to_string)
                .collect();
            if names.len() != r {
                return Err(SpecError::DimensionMismatch {
                    line,
                    message: format!("{} variables declared for r = {r}", names.len()),
                });
            }
            for (k, n) in names.iter().enumerate() {
                let ok = n.chars().next().is_some_and(|c| c.is_alphabetic() || c == '_')
                    && n.chars().all(|c| c.is_alphanumeric() || c == '_');
                if !ok || names[..k].contains(n) {
                    return Err(SpecError::InvalidValue {
                        line,
                        key: "vars".into(),
                        message: format!("bad or repeated variable name `{n}`"),
                    });
                }
            }
            names
        }
        None => default_variables(r),
    };

    for key in entries.keys() {
        if let Some(i) = key.strip_prefix("map.").and_then(|i| i.parse::<usize>().ok()) {
            if i > r {
                return Err(SpecError::DimensionMismatch {
                    line: entries[key].0,
                    message: format!("`{key}` exceeds r = {r}"),
                });
            }
        }
    }
    let expr = |key: &str, line: usize, text: &str| {
        parse_polynomial(text, &vars).map_err(|source| SpecError::Expression {
            line,
            key: key.to_string(),
            source,
        })
    };
    let mut map_text = Vec::with_capacity(r);
    let mut coords = Vec::with_capacity(r);
    for i in 1..=r {
        let key = format!("map.{i}");
        let (line, text) = require(&key)?;
        coords.push(expr(&key, line, text)?);
        map_text.push(text.to_string());
    }

    let mut warnings = Vec::new();
    let (lambda, observable) = match get("lambda") {
        Some((line, text)) => (text.to_string(), Observable::new(expr("lambda", line, text)?)),
        None => {
            warnings.push(format!("no lambda given; observing the first coordinate `{}`", vars[0]));
            (vars[0].clone(), Observable::projection(r, 0))
        }
    };

    let (p_line, p_text) = require("point")?;
    let point = p_text
        .split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(|s| {
            parse_rational(s).ok_or_else(|| SpecError::InvalidValue {
                line: p_line,
                key: "point".into(),
                message: format!("`{s}` is not a rational"),
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    if point.len() != r {
        return Err(SpecError::DimensionMismatch {
            line: p_line,
            message: format!("point has {} coordinates, expected r = {r}", point.len()),
        });
    }

    let mut options = Options::default();
    if let Some((l, v)) = get("steps") {
        options.steps = number("steps", l, v)?;
    }
    if let Some((l, v)) = get("bit_budget") {
        options.bit_budget = number("bit_budget", l, v)?;
    }
    if let Some((l, v)) = get("pmax") {
        options.pmax = number("pmax", l, v)?;
    }
    if let Some((l, v)) = get("d_max") {
        options.d_max = number("d_max", l, v)?;
    }
    if let Some((l, v)) = get("g_max") {
        options.g_max = number("g_max", l, v)?;
    }
    if let Some((l, v)) = get("n0_max") {
        options.n0_max = number("n0_max", l, v)?;
    }
    if let Some((l, v)) = get("n_min") {
        options.n_min = number("n_min", l, v)?;
    }
    if let Some((line, v)) = get("eta") {
        options.eta = parse_rational(v)
            .filter(|e| e.is_positive())
            .ok_or_else(|| SpecError::InvalidValue {
                line,
                key: "eta".into(),
                message: format!("expected a positive rational, found `{v}`"),
            })?;
    }
    if options.d_max == 0 {
        let line = get("d_max").map(|(l, _)| l).unwrap_or(0);
        return Err(SpecError::InvalidValue {
            line,
            key: "d_max".into(),
            message: "must be positive".into(),
        });
    }

    let map = PolySelfMap::new(coords).expect("coordinates share the declared arity");
    let source = OrbitSource::new(map, observable, point.clone()).expect("point length checked");
    Ok(ProblemSpec {
        name,
        r,
        vars,
        map: map_text,
        lambda,
        point,
        options,
        source,
        warnings,
    })
}

impl ProblemSpec {
    /// Canonical text of the spec; parsing it again gives the same spec.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let o = &self.options;
        let _ = writeln!(out, "name = {}", self.name);
        let _ = writeln!(out, "r = {}", self.r);
        let _ = writeln!(out, "vars = {}", self.vars.join(", "));
        for (i, m) in self.map.iter().enumerate() {
            let _ = writeln!(out, "map.{} = {m}", i + 1);
        }
        let _ = writeln!(out, "lambda = {}", self.lambda);
        let point: Vec<String> = self.point.iter().map(rational_string).collect();
        let _ = writeln!(out, "point = {}", point.join(", "));
        let _ = writeln!(out, "steps = {}", o.steps);
        let _ = writeln!(out, "bit_budget = {}", o.bit_budget);
        let _ = writeln!(out, "eta = {}", rational_string(&o.eta));
        let _ = writeln!(out, "pmax = {}", o.pmax);
        let _ = writeln!(out, "d_max = {}", o.d_max);
        let _ = writeln!(out, "g_max = {}", o.g_max);
        let _ = writeln!(out, "n0_max = {}", o.n0_max);
        let _ = writeln!(out, "n_min = {}", o.n_min);
        out
    }

    /// Identifies the orbit computation for the cache: map, observable,
    /// point and bit budget in normalized form.
    pub fn orbit_key(&self) -> String {
        let coords: Vec<String> = self
            .source
            .map
            .coordinates()
            .iter()
            .map(|c| c.format_with(&self.vars))
            .collect();
        let point: Vec<String> = self.point.iter().map(rational_string).collect();
        format!(
            "vars={}\nmap={}\nlambda={}\npoint={}\nbit_budget={}\n",
            self.vars.join(","),
            coords.join(";"),
            self.source.observable.polynomial().format_with(&self.vars),
            point.join(","),
            self.options.bit_budget
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_spec() {
        let s = parse_spec("r = 1\nmap.1 = x^2+1\nlambda = x\npoint = 0\n").unwrap();
        assert_eq!(s.r, 1);
        assert_eq!(s.vars, vec!["x".to_string()]);
        assert!(s.warnings.is_empty());
        assert_eq!(s.options, Options::default());
        assert_eq!(s.options.steps, 64);
        assert_eq!(s.options.pmax, 200);
    }

    #[test]
    fn missing_lambda_defaults_with_warning() {
        let s = parse_spec("r = 2\nvars = a b\nmap.1 = b\nmap.2 = a + b\npoint = 0, 1\n").unwrap();
        assert_eq!(s.warnings.len(), 1);
        assert_eq!(s.source.observable, Observable::projection(2, 0));
    }

    #[test]
    fn errors_carry_lines() {
        assert_eq!(
            parse_spec("r = 2\nmap.1 = y\nmap.2 = x\npoint = 1\n"),
            Err(SpecError::DimensionMismatch {
                line: 4,
                message: "point has 1 coordinates, expected r = 2".into()
            })
        );
        assert!(matches!(
            parse_spec("r = 1\nmap.1 = x +\npoint = 0"),
            Err(SpecError::Expression { line: 2, .. })
        ));
        assert!(matches!(
            parse_spec("r = 1\nmap.1 = x\nbogus = 3\npoint = 0"),
            Err(SpecError::UnknownKey { line: 3, .. })
        ));
        assert!(matches!(parse_spec("r = 1\npoint = 0"), Err(SpecError::MissingKey(k)) if k == "map.1"));
        assert!(matches!(
            parse_spec("r = 1\nmap.1 = x\nmap.2 = x\npoint = 0"),
            Err(SpecError::DimensionMismatch { line: 3, .. })
        ));
        assert!(matches!(
            parse_spec("r = 1\nmap.1 = x\npoint = 0\neta = 0"),
            Err(SpecError::InvalidValue { line: 4, .. })
        ));
        assert!(matches!(parse_spec("r 1"), Err(SpecError::Syntax { line: 1, .. })));
    }

    #[test]
    fn text_round_trip() {
        let text = "# swap\nname = swap\nr = 2\nmap.1 = y\nmap.2 = x\nlambda = x + 2*y\npoint = 2, 3/4\neta = 1/2\nsteps = 1_000\n";
        let s = parse_spec(text).unwrap();
        assert_eq!(s.options.steps, 1000);
        let again = parse_spec(&s.to_text()).unwrap();
        assert_eq!(again, s);
        assert_eq!(again.orbit_key(), s.orbit_key());
    }
}
