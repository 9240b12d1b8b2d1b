//! Exact rational arithmetic helpers.
//!
//! Every currency amount, fraction and stake share in the crate is a
//! [`Rational`]. Values are parsed from and written as short decimal strings
//! whenever the expansion terminates, and as `p/q` otherwise.

use std::fmt;

use num_integer::Integer;
use num_rational::Ratio;
use num_traits::{Signed, ToPrimitive, Zero};
use thiserror::Error;

pub type Rational = Ratio<i128>;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("cannot parse `{input}` as an exact rational: {reason}")]
pub struct ParseRationalError {
    pub input: String,
    pub reason: &'static str,
}

/// Builds `num / den`, reduced.
pub fn ratio(num: i128, den: i128) -> Rational {
    Rational::new(num, den)
}

pub fn int(n: i128) -> Rational {
    Rational::from_integer(n)
}

/// Parses `"3"`, `"-1.25"`, `"1/3"` or `"2.5e-1"`.
pub fn parse_rational(input: &str) -> Result<Rational, ParseRationalError> {
    let s = input.trim();
    let err = |reason| ParseRationalError {
        input: input.to_string(),
        reason,
    };
    if s.is_empty() {
        return Err(err("empty string"));
    }
    if let Some((n, d)) = s.split_once('/') {
        let n: i128 = n.trim().parse().map_err(|_| err("bad numerator"))?;
        let d: i128 = d.trim().parse().map_err(|_| err("bad denominator"))?;
        if d == 0 {
            return Err(err("zero denominator"));
        }
        return Ok(Rational::new(n, d));
    }

    let (mantissa, exponent) = match s.find(['e', 'E']) {
        Some(pos) => {
            let e: i32 = s[pos + 1..].parse().map_err(|_| err("bad exponent"))?;
            (&s[..pos], e)
        }
        None => (s, 0),
    };
    let (negative, digits) = match mantissa.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, mantissa.strip_prefix('+').unwrap_or(mantissa)),
    };
    let (whole, frac) = digits.split_once('.').unwrap_or((digits, ""));
    if whole.is_empty() && frac.is_empty() {
        return Err(err("no digits"));
    }
    if !whole.chars().chain(frac.chars()).all(|c| c.is_ascii_digit()) {
        return Err(err("unexpected character"));
    }
    let joined = format!("{whole}{frac}");
    let mut numer: i128 = joined.parse().map_err(|_| err("magnitude out of range"))?;
    let scale = exponent - frac.len() as i32;
    if scale.abs() > 30 {
        return Err(err("exponent out of range"));
    }
    let pow = 10i128.pow(scale.unsigned_abs());
    if negative {
        numer = -numer;
    }
    let value = if scale >= 0 {
        Rational::from_integer(numer.checked_mul(pow).ok_or_else(|| err("magnitude out of range"))?)
    } else {
        Rational::new(numer, pow)
    };
    Ok(value)
}

/// Formats as a terminating decimal when possible, `p/q` otherwise.
pub fn format_rational(q: &Rational) -> String {
    if q.is_integer() {
        return q.to_integer().to_string();
    }
    let mut den = *q.denom();
    let (mut twos, mut fives) = (0u32, 0u32);
    while den % 2 == 0 {
        den /= 2;
        twos += 1;
    }
    while den % 5 == 0 {
        den /= 5;
        fives += 1;
    }
    if den != 1 {
        return format!("{}/{}", q.numer(), q.denom());
    }
    let places = twos.max(fives);
    let scaled = q * Rational::from_integer(10i128.pow(places));
    let n = scaled.to_integer();
    let sign = if n < 0 { "-" } else { "" };
    let n = n.abs();
    let base = 10i128.pow(places);
    format!("{sign}{}.{:0width$}", n / base, n % base, width = places as usize)
}

pub fn to_f64(q: &Rational) -> f64 {
    q.to_f64().unwrap_or(f64::NAN)
}

/// `floor(q)` as an integer.
pub fn floor_int(q: &Rational) -> i128 {
    q.floor().to_integer()
}

/// True when `amount` is a non-negative integer multiple of `tick`.
pub fn is_tick_multiple(amount: &Rational, tick: &Rational) -> bool {
    !amount.is_negative() && (amount / tick).is_integer()
}

/// Least common multiple of the denominators.
pub fn common_denominator<'a>(values: impl IntoIterator<Item = &'a Rational>) -> i128 {
    values.into_iter().fold(1i128, |acc, q| acc.lcm(q.denom()))
}

/// Wrapper that prints via [`format_rational`].
pub struct Display<'a>(pub &'a Rational);

impl fmt::Display for Display<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&format_rational(self.0))
    }
}

/// Serde adapter: serializes as a string, accepts strings or JSON numbers.
pub mod serde_rational {
    use super::{format_rational, parse_rational, Rational};
    use serde::de::{self, Visitor};
    use serde::{Deserializer, Serializer};
    use std::fmt;

    pub fn serialize<S: Serializer>(q: &Rational, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format_rational(q))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Rational, D::Error> {
        d.deserialize_any(RationalVisitor)
    }

    struct RationalVisitor;

    impl Visitor<'_> for RationalVisitor {
        type Value = Rational;

        fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
            f.write_str("a number or a string such as \"0.1\" or \"1/3\"")
        }

        fn visit_i64<E: de::Error>(self, v: i64) -> Result<Rational, E> {
            Ok(Rational::from_integer(v as i128))
        }

        fn visit_u64<E: de::Error>(self, v: u64) -> Result<Rational, E> {
            Ok(Rational::from_integer(v as i128))
        }

        fn visit_f64<E: de::Error>(self, v: f64) -> Result<Rational, E> {
            // Shortest round-trip representation, so 0.1 becomes exactly 1/10.
            parse_rational(&format!("{v}")).map_err(E::custom)
        }

        fn visit_str<E: de::Error>(self, v: &str) -> Result<Rational, E> {
            parse_rational(v).map_err(E::custom)
        }
    }

    pub mod vec {
        use super::super::{format_rational, Rational};
        use serde::ser::SerializeSeq;
        use serde::{Deserialize, Deserializer, Serializer};

        pub fn serialize<S: Serializer>(v: &[Rational], s: S) -> Result<S::Ok, S::Error> {
            let mut seq = s.serialize_seq(Some(v.len()))?;
            for q in v {
                seq.serialize_element(&format_rational(q))?;
            }
            seq.end()
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Rational>, D::Error> {
            #[derive(Deserialize)]
            struct Wrapped(#[serde(with = "super")] Rational);
            let raw: Vec<Wrapped> = Vec::deserialize(d)?;
            Ok(raw.into_iter().map(|w| w.0).collect())
        }
    }

    pub mod option {
        use super::super::Rational;
        use serde::{Deserialize, Deserializer, Serializer};

        pub fn serialize<S: Serializer>(v: &Option<Rational>, s: S) -> Result<S::Ok, S::Error> {
            match v {
                Some(q) => super::serialize(q, s),
                None => s.serialize_none(),
            }
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Rational>, D::Error> {
            #[derive(Deserialize)]
            struct Wrapped(#[serde(with = "super")] Rational);
            Ok(Option::<Wrapped>::deserialize(d)?.map(|w| w.0))
        }
    }
}

pub(crate) fn positive_part(q: Rational) -> Rational {
    if q > Rational::zero() {
        q
    } else {
        Rational::zero()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_decimal_fraction_and_exponent_forms() {
        assert_eq!(parse_rational("1.1").unwrap(), ratio(11, 10));
        assert_eq!(parse_rational("-0.25").unwrap(), ratio(-1, 4));
        assert_eq!(parse_rational("1/3").unwrap(), ratio(1, 3));
        assert_eq!(parse_rational("2.5e-1").unwrap(), ratio(1, 4));
        assert_eq!(parse_rational("3e2").unwrap(), int(300));
        assert_eq!(parse_rational(".5").unwrap(), ratio(1, 2));
        assert!(parse_rational("").is_err());
        assert!(parse_rational("1/0").is_err());
        assert!(parse_rational("abc").is_err());
    }

    #[test]
    fn formats_terminating_and_repeating() {
        assert_eq!(format_rational(&ratio(11, 10)), "1.1");
        assert_eq!(format_rational(&ratio(-3, 8)), "-0.375");
        assert_eq!(format_rational(&ratio(1, 3)), "1/3");
        assert_eq!(format_rational(&int(7)), "7");
        assert_eq!(format_rational(&ratio(1, 20)), "0.05");
    }

    #[test]
    fn json_numbers_become_exact() {
        #[derive(serde::Deserialize)]
        struct W(#[serde(with = "serde_rational")] Rational);
        let w: W = serde_json::from_str("0.1").unwrap();
        assert_eq!(w.0, ratio(1, 10));
        let w: W = serde_json::from_str("\"2/7\"").unwrap();
        assert_eq!(w.0, ratio(2, 7));
    }

    #[test]
    fn tick_multiples() {
        assert!(is_tick_multiple(&ratio(11, 10), &ratio(1, 10)));
        assert!(!is_tick_multiple(&ratio(11, 10), &ratio(1, 2)));
        assert!(!is_tick_multiple(&int(-1), &int(1)));
        assert_eq!(common_denominator(&[ratio(1, 4), ratio(1, 6)]), 12);
    }
}
