//! Serialization guard: non-finite floats are an error, never `null`.

use serde::ser::Error;
use serde::Serializer;

pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
    if v.is_finite() {
        s.serialize_f64(*v)
    } else {
        Err(S::Error::custom(format!("non-finite float {v} in report")))
    }
}
