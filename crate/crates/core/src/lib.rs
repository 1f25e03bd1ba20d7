//! Exact arithmetic for orbits of polynomial self-maps of affine space over
//! the rationals: Weil heights, mod-p rational degree profiles of the orbit
//! generating series, Padé reconstruction, the prime-sum rationality
//! criterion and the eventually-polynomial / height-growth classifier.

pub mod arith;
pub mod classifier;
pub mod cli;
pub mod dynamics;
pub mod heights;
pub mod modp;
pub mod polyexpr;
pub mod rationality;

pub use num_bigint::{BigInt, BigUint};
pub use num_rational::BigRational;

use std::collections::BTreeMap;
use std::fmt::Display;

use serde::ser::SerializeMap;
use serde::Serializer;

/// Renders a rational as `num/den`, always with an explicit denominator.
pub fn rational_string(x: &BigRational) -> String {
    format!("{}/{}", x.numer(), x.denom())
}

pub(crate) fn serialize_display<T: Display, S: Serializer>(v: &T, s: S) -> Result<S::Ok, S::Error> {
    s.collect_str(v)
}

pub(crate) fn serialize_display_map<K: Display, V: serde::Serialize, S: Serializer>(
    map: &BTreeMap<K, V>,
    s: S,
) -> Result<S::Ok, S::Error> {
    let mut m = s.serialize_map(Some(map.len()))?;
    for (k, v) in map {
        m.serialize_entry(&k.to_string(), v)?;
    }
    m.end()
}

pub(crate) fn serialize_rational<S: Serializer>(v: &BigRational, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&rational_string(v))
}
