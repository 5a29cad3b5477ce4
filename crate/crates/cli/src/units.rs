//! Physical quantities written as `"<number> <unit>"` strings.
//!
//! Bare numbers are rejected for every quantity that has a unit, and each
//! quantity accepts only its own unit family.

use std::fmt;

use serde::de::{self, Deserializer, Visitor};
use serde::{Deserialize, Serialize, Serializer};

/// Splits `"5.5 GHz"` into `(5.5, "GHz")`.
fn split(text: &str) -> Option<(f64, &str)> {
    let t = text.trim();
    let cut = t
        .char_indices()
        .find(|&(i, c)| c.is_ascii_alphabetic() && !is_exponent(t, i))
        .map(|(i, _)| i)?;
    let (num, unit) = t.split_at(cut);
    let v: f64 = num.trim().parse().ok()?;
    v.is_finite().then_some((v, unit.trim()))
}

// `1e-3 m`: the `e` belongs to the number when a digit or sign follows it.
fn is_exponent(t: &str, i: usize) -> bool {
    let b = t.as_bytes();
    if !(b[i] == b'e' || b[i] == b'E') || i == 0 || !b[i - 1].is_ascii_digit() && b[i - 1] != b'.' {
        return false;
    }
    matches!(b.get(i + 1), Some(c) if c.is_ascii_digit() || *c == b'-' || *c == b'+')
}

macro_rules! quantity {
    ($name:ident, $what:literal, $si:literal, [$(($unit:literal, $scale:expr)),+ $(,)?]) => {
        #[derive(Clone, Copy, Debug, PartialEq, PartialOrd)]
        pub struct $name(pub f64);

        impl $name {
            pub const UNITS: &'static [&'static str] = &[$($unit),+];

            pub fn parse(text: &str) -> Result<Self, String> {
                let expected = || format!("expected {} such as \"1.5 {}\" (units: {})", $what, $si, Self::UNITS.join(", "));
                let (v, unit) = split(text).ok_or_else(|| format!("cannot read '{text}': {}", expected()))?;
                $(if unit == $unit {
                    return Ok(Self(v * $scale));
                })+
                Err(format!("unit '{unit}' in '{text}' is not allowed here: {}", expected()))
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{} {}", self.0, $si)
            }
        }

        impl Serialize for $name {
            fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                s.collect_str(self)
            }
        }

        impl<'de> Deserialize<'de> for $name {
            fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
                struct V;
                impl Visitor<'_> for V {
                    type Value = $name;
                    fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                        write!(f, "{} as a string with unit, e.g. \"1.5 {}\"", $what, $si)
                    }
                    fn visit_str<E: de::Error>(self, v: &str) -> Result<$name, E> {
                        $name::parse(v).map_err(E::custom)
                    }
                    fn visit_f64<E: de::Error>(self, v: f64) -> Result<$name, E> {
                        Err(E::custom(format!("bare number {v} needs a unit ({})", $name::UNITS.join(", "))))
                    }
                    fn visit_i64<E: de::Error>(self, v: i64) -> Result<$name, E> {
                        self.visit_f64(v as f64)
                    }
                    fn visit_u64<E: de::Error>(self, v: u64) -> Result<$name, E> {
                        self.visit_f64(v as f64)
                    }
                }
                d.deserialize_any(V)
            }
        }
    };
}

quantity!(Length, "a length", "m", [("m", 1.0), ("cm", 1e-2), ("mm", 1e-3)]);
quantity!(Frequency, "a frequency", "Hz", [("Hz", 1.0), ("kHz", 1e3), ("MHz", 1e6), ("GHz", 1e9)]);
quantity!(Level, "a level", "dB", [("dB", 1.0)]);
quantity!(Angle, "an angle", "rad", [("rad", 1.0), ("deg", std::f64::consts::PI / 180.0)]);

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn accepted_forms() {
        assert_eq!(Length::parse("0.3 m").unwrap(), Length(0.3));
        assert_eq!(Length::parse("30cm").unwrap().0, 0.3);
        assert_eq!(Length::parse(" 1e-3 m ").unwrap(), Length(1e-3));
        assert_eq!(Frequency::parse("5.5 GHz").unwrap(), Frequency(5.5e9));
        assert_eq!(Frequency::parse("100 Hz").unwrap(), Frequency(100.0));
        assert_eq!(Level::parse("-30 dB").unwrap(), Level(-30.0));
        assert_eq!(Level::parse("+3.5dB").unwrap(), Level(3.5));
        assert!((Angle::parse("90 deg").unwrap().0 - std::f64::consts::FRAC_PI_2).abs() < 1e-15);
    }

    #[test]
    fn rejected_forms() {
        for bad in ["0.3", "0.3 M", "0.3 meters", "m", "", "0.3 Hz", "nan m", "inf m"] {
            assert!(Length::parse(bad).is_err(), "{bad}");
        }
        assert!(Frequency::parse("5.5 ghz").is_err());
        assert!(Level::parse("3 dBm").is_err());
        assert!(Angle::parse("1").is_err());
    }

    #[test]
    fn bare_numbers_fail_in_toml() {
        #[derive(Deserialize, Debug)]
        struct T {
            #[allow(dead_code)]
            d: Length,
        }
        assert!(toml::from_str::<T>("d = 0.3").is_err());
        assert!(toml::from_str::<T>("d = 3").is_err());
        assert_eq!(toml::from_str::<T>("d = \"0.3 m\"").unwrap().d, Length(0.3));
    }
}
