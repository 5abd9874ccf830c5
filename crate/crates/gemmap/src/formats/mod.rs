//! YAML documents read and written by the driver.
//!
//! Every document rejects unknown keys. Parse failures and semantic
//! problems are both reported as [`Diagnostic`]s carrying the field path.
//! Rationals are written as integers or `"a/b"` strings; decimal numbers
//! such as `0.125` are read exactly as written.

pub mod arch;
pub mod cost;
pub mod mapping;
pub mod report;
pub mod workload;

use std::fmt;

use gemmap_core::{Diagnostic, Dim, Operand, Rational};
use serde::de::{self, DeserializeOwned, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Parses a YAML document; failures carry the path of the offending field.
pub fn from_yaml<T: DeserializeOwned>(text: &str) -> Result<T, Diagnostic> {
    let de = serde_yaml::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let path = if path == "." { "<document>".to_string() } else { path };
        Diagnostic::error(path, e.into_inner().to_string())
    })
}

pub fn to_yaml<T: Serialize>(value: &T) -> String {
    serde_yaml::to_string(value).expect("documents serialize to YAML")
}

/// An exact rational field.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct Ratio(pub Rational);

pub fn parse_rational(s: &str) -> Option<Rational> {
    let s = s.trim();
    if let Some((a, b)) = s.split_once('/') {
        let (a, b): (i64, i64) = (a.trim().parse().ok()?, b.trim().parse().ok()?);
        return (b != 0).then(|| Rational::new(a, b));
    }
    let (neg, body) = match s.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, s.strip_prefix('+').unwrap_or(s)),
    };
    let (int, frac) = body.split_once('.').unwrap_or((body, ""));
    if int.is_empty() && frac.is_empty() || !int.chars().chain(frac.chars()).all(|c| c.is_ascii_digit()) || frac.len() > 18 {
        return None;
    }
    let den = 10i64.checked_pow(frac.len() as u32)?;
    let num = format!("{int}{frac}").parse::<i64>().ok().or_else(|| int.is_empty().then_some(0))?;
    let r = Rational::new(num, den);
    Some(if neg { -r } else { r })
}

pub fn format_rational(r: Rational) -> String {
    if *r.denom() == 1 {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

impl Serialize for Ratio {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        if *self.0.denom() == 1 {
            s.serialize_i64(*self.0.numer())
        } else {
            s.serialize_str(&format_rational(self.0))
        }
    }
}

impl<'de> Deserialize<'de> for Ratio {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct V;
        impl Visitor<'_> for V {
            type Value = Ratio;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a rational: an integer, a decimal, or a string \"a/b\"")
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> Result<Ratio, E> {
                Ok(Ratio(Rational::from_integer(v)))
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> Result<Ratio, E> {
                i64::try_from(v).map(|v| Ratio(Rational::from_integer(v))).map_err(|_| E::custom("integer out of range"))
            }
            fn visit_f64<E: de::Error>(self, v: f64) -> Result<Ratio, E> {
                // shortest round-trip text is what the document said
                parse_rational(&format!("{v}")).map(Ratio).ok_or_else(|| E::custom(format!("cannot represent {v} exactly")))
            }
            fn visit_str<E: de::Error>(self, v: &str) -> Result<Ratio, E> {
                parse_rational(v).map(Ratio).ok_or_else(|| E::custom(format!("`{v}` is not a rational")))
            }
        }
        d.deserialize_any(V)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DimName {
    N,
    C,
    K,
}

impl From<DimName> for Dim {
    fn from(d: DimName) -> Dim {
        match d {
            DimName::N => Dim::N,
            DimName::C => Dim::C,
            DimName::K => Dim::K,
        }
    }
}

impl From<Dim> for DimName {
    fn from(d: Dim) -> DimName {
        match d {
            Dim::N => DimName::N,
            Dim::C => DimName::C,
            Dim::K => DimName::K,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OperandName {
    Input,
    Weight,
    Output,
}

impl From<OperandName> for Operand {
    fn from(o: OperandName) -> Operand {
        match o {
            OperandName::Input => Operand::Input,
            OperandName::Weight => Operand::Weight,
            OperandName::Output => Operand::Output,
        }
    }
}

impl From<Operand> for OperandName {
    fn from(o: Operand) -> OperandName {
        match o {
            Operand::Input => OperandName::Input,
            Operand::Weight => OperandName::Weight,
            Operand::Output => OperandName::Output,
        }
    }
}

/// One value per GEMM dimension.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Dims {
    #[serde(rename = "N")]
    pub n: u64,
    #[serde(rename = "C")]
    pub c: u64,
    #[serde(rename = "K")]
    pub k: u64,
}

impl From<[u64; 3]> for Dims {
    fn from(v: [u64; 3]) -> Self {
        Dims { n: v[0], c: v[1], k: v[2] }
    }
}

impl From<Dims> for [u64; 3] {
    fn from(d: Dims) -> Self {
        [d.n, d.c, d.k]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rationals() {
        assert_eq!(parse_rational("1/4"), Some(Rational::new(1, 4)));
        assert_eq!(parse_rational("0.1"), Some(Rational::new(1, 10)));
        assert_eq!(parse_rational("-2.50"), Some(Rational::new(-5, 2)));
        assert_eq!(parse_rational(".5"), Some(Rational::new(1, 2)));
        assert_eq!(parse_rational("7"), Some(Rational::from_integer(7)));
        assert_eq!(parse_rational("1/0"), None);
        assert_eq!(parse_rational("x"), None);
        assert_eq!(parse_rational("."), None);
        let r: Ratio = from_yaml("0.125").unwrap();
        assert_eq!(r.0, Rational::new(1, 8));
        let r: Ratio = from_yaml("\"3/6\"").unwrap();
        assert_eq!(to_yaml(&r).trim(), "1/2");
    }

    #[test]
    fn errors_carry_paths() {
        #[derive(Debug, Deserialize)]
        #[serde(deny_unknown_fields)]
        #[allow(dead_code)]
        struct Doc {
            tile: Dims,
        }
        let e = from_yaml::<Doc>("tile: {N: 1, C: 2, Q: 3}").unwrap_err();
        assert_eq!(e.path, "tile.Q");
        let e = from_yaml::<Doc>("tile: {N: 1, C: x, K: 3}").unwrap_err();
        assert_eq!(e.path, "tile.C");
    }
}
