//! Reals extended by explicit infinite sentinels.
//!
//! JSON has no infinities, so the sentinels serialize as the strings
//! `"-inf"` and `"+inf"`; finite values serialize as plain numbers.

use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use std::cmp::Ordering;
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Extended {
    NegInf,
    Finite(f64),
    PosInf,
}

impl Extended {
    pub fn is_finite(self) -> bool {
        matches!(self, Extended::Finite(_))
    }

    pub fn finite(self) -> Option<f64> {
        match self {
            Extended::Finite(v) => Some(v),
            _ => None,
        }
    }

    /// Lossy conversion to `f64`, mapping sentinels to IEEE infinities.
    pub fn to_f64(self) -> f64 {
        match self {
            Extended::NegInf => f64::NEG_INFINITY,
            Extended::Finite(v) => v,
            Extended::PosInf => f64::INFINITY,
        }
    }
}

impl std::ops::Neg for Extended {
    type Output = Extended;

    fn neg(self) -> Extended {
        match self {
            Extended::NegInf => Extended::PosInf,
            Extended::Finite(v) => Extended::Finite(-v),
            Extended::PosInf => Extended::NegInf,
        }
    }
}

impl From<f64> for Extended {
    fn from(v: f64) -> Self {
        if v == f64::INFINITY {
            Extended::PosInf
        } else if v == f64::NEG_INFINITY {
            Extended::NegInf
        } else {
            Extended::Finite(v)
        }
    }
}

impl PartialOrd for Extended {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        self.to_f64().partial_cmp(&other.to_f64())
    }
}

impl fmt::Display for Extended {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Extended::NegInf => f.write_str("-inf"),
            Extended::PosInf => f.write_str("+inf"),
            Extended::Finite(v) => f.write_str(&format_sig9(*v)),
        }
    }
}

impl Serialize for Extended {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Extended::NegInf => s.serialize_str("-inf"),
            Extended::PosInf => s.serialize_str("+inf"),
            Extended::Finite(v) => s.serialize_f64(*v),
        }
    }
}

impl<'de> Deserialize<'de> for Extended {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct ExtVisitor;
        impl Visitor<'_> for ExtVisitor {
            type Value = Extended;
            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a finite number or one of \"-inf\", \"+inf\"")
            }
            fn visit_f64<E: de::Error>(self, v: f64) -> Result<Extended, E> {
                Ok(Extended::Finite(v))
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> Result<Extended, E> {
                Ok(Extended::Finite(v as f64))
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> Result<Extended, E> {
                Ok(Extended::Finite(v as f64))
            }
            fn visit_str<E: de::Error>(self, v: &str) -> Result<Extended, E> {
                match v {
                    "-inf" => Ok(Extended::NegInf),
                    "+inf" | "inf" => Ok(Extended::PosInf),
                    other => Err(E::invalid_value(de::Unexpected::Str(other), &self)),
                }
            }
        }
        d.deserialize_any(ExtVisitor)
    }
}

/// Formats a float with 9 significant digits, `%g` style, locale free.
pub fn format_sig9(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "+inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    // Round first so that the exponent reflects the printed mantissa.
    let sci = format!("{:.8e}", x);
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("exponent");
    if (-5..9).contains(&exp) {
        let decimals = (8 - exp).max(0) as usize;
        trim_zeros(&format!("{:.*}", decimals, x))
    } else {
        format!("{}e{}", trim_zeros(mantissa), exp)
    }
}

fn trim_zeros(s: &str) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sig9_formatting() {
        assert_eq!(format_sig9(1.0), "1");
        assert_eq!(format_sig9(-1.0), "-1");
        assert_eq!(format_sig9(0.125), "0.125");
        assert_eq!(format_sig9(1.0 / 3.0), "0.333333333");
        assert_eq!(format_sig9(123456789.4), "123456789");
        assert_eq!(format_sig9(1.5e-7), "1.5e-7");
        assert_eq!(format_sig9(2.0e12), "2e12");
        assert_eq!(format_sig9(0.999999999999), "1");
    }

    #[test]
    fn sentinels_roundtrip_as_strings() {
        let v = vec![Extended::NegInf, Extended::Finite(0.5), Extended::PosInf];
        let s = serde_json::to_string(&v).unwrap();
        assert_eq!(s, r#"["-inf",0.5,"+inf"]"#);
        let back: Vec<Extended> = serde_json::from_str(&s).unwrap();
        assert_eq!(back, v);
    }
}
