//! Serde helpers for floats that may be infinite.

use serde::Serializer;

/// Finite values as numbers, infinities as `"inf"` / `"-inf"`, NaN as `"nan"`.
pub fn extended_f64<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
    if x.is_finite() {
        s.serialize_f64(*x)
    } else if x.is_nan() {
        s.serialize_str("nan")
    } else if *x > 0.0 {
        s.serialize_str("inf")
    } else {
        s.serialize_str("-inf")
    }
}

pub fn extended_f64_opt<S: Serializer>(x: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
    match x {
        Some(v) => extended_f64(v, s),
        None => s.serialize_none(),
    }
}
