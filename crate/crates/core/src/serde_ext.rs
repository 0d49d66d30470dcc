//! Serde helpers for extended reals: `±inf` and `NaN` travel as strings so
//! JSON output stays lossless.

use serde::{Deserialize, Deserializer, Serializer};

#[derive(serde::Serialize, Deserialize)]
#[serde(untagged)]
enum Repr {
    Num(f64),
    Text(String),
}

pub fn to_repr(x: f64) -> Result<f64, String> {
    if x.is_finite() {
        Ok(x)
    } else if x.is_nan() {
        Err("nan".into())
    } else if x > 0.0 {
        Err("inf".into())
    } else {
        Err("-inf".into())
    }
}

pub fn parse_text(s: &str) -> Option<f64> {
    match s.trim() {
        "inf" | "Inf" | "infinity" | "+inf" => Some(f64::INFINITY),
        "-inf" | "-Inf" | "-infinity" => Some(f64::NEG_INFINITY),
        "nan" | "NaN" => Some(f64::NAN),
        t => t.parse().ok(),
    }
}

pub mod extended {
    use super::*;

    pub fn serialize<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
        match to_repr(*x) {
            Ok(v) => s.serialize_f64(v),
            Err(t) => s.serialize_str(&t),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) => {
                parse_text(&t).ok_or_else(|| serde::de::Error::custom(format!("bad number {t}")))
            }
        }
    }
}

pub mod extended_vec {
    use super::*;
    use serde::ser::SerializeSeq;

    pub fn serialize<S: Serializer>(xs: &[f64], s: S) -> Result<S::Ok, S::Error> {
        let mut seq = s.serialize_seq(Some(xs.len()))?;
        for x in xs {
            match to_repr(*x) {
                Ok(v) => seq.serialize_element(&v)?,
                Err(t) => seq.serialize_element(&t)?,
            }
        }
        seq.end()
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        let raw = Vec::<Repr>::deserialize(d)?;
        raw.into_iter()
            .map(|r| match r {
                Repr::Num(v) => Ok(v),
                Repr::Text(t) => parse_text(&t)
                    .ok_or_else(|| serde::de::Error::custom(format!("bad number {t}"))),
            })
            .collect()
    }
}
