//! Exact leasing prices in thousandths of a USD per hour.

use std::fmt;
use std::iter::Sum;
use std::ops::Add;
use std::str::FromStr;

use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::Error;

/// A price with exactly three fractional digits, stored as an integer number
/// of milli-USD so that values like `8.403` survive every round trip.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Price(u64);

impl Price {
    pub const ZERO: Price = Price(0);

    pub const fn from_millis(millis: u64) -> Self {
        Price(millis)
    }

    pub const fn millis(self) -> u64 {
        self.0
    }

    /// Nearest representable price; `None` for negative or non-finite input.
    pub fn from_f64(value: f64) -> Option<Self> {
        if !value.is_finite() || value < 0.0 {
            return None;
        }
        Some(Price((value * 1000.0).round() as u64))
    }

    pub fn as_f64(self) -> f64 {
        self.0 as f64 / 1000.0
    }
}

impl fmt::Display for Price {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{:03}", self.0 / 1000, self.0 % 1000)
    }
}

impl FromStr for Price {
    type Err = Error;

    /// Parses a non-negative decimal with at most three fractional digits.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || Error::Parse(format!("invalid price literal `{s}`"));
        let s = s.trim();
        let (int_part, frac_part) = match s.split_once('.') {
            Some((i, f)) => (i, f),
            None => (s, ""),
        };
        if int_part.is_empty() && frac_part.is_empty() {
            return Err(bad());
        }
        if !int_part.chars().all(|c| c.is_ascii_digit()) || !frac_part.chars().all(|c| c.is_ascii_digit()) {
            return Err(bad());
        }
        let whole: u64 = if int_part.is_empty() {
            0
        } else {
            int_part.parse().map_err(|_| bad())?
        };
        let trimmed = frac_part.trim_end_matches('0');
        if trimmed.len() > 3 {
            return Err(bad());
        }
        let mut frac: u64 = 0;
        for (pos, c) in trimmed.chars().enumerate() {
            frac += (c as u64 - '0' as u64) * 10u64.pow(2 - pos as u32);
        }
        whole
            .checked_mul(1000)
            .and_then(|w| w.checked_add(frac))
            .map(Price)
            .ok_or_else(bad)
    }
}

impl Add for Price {
    type Output = Price;

    fn add(self, rhs: Price) -> Price {
        Price(self.0 + rhs.0)
    }
}

impl Sum for Price {
    fn sum<I: Iterator<Item = Price>>(iter: I) -> Price {
        iter.fold(Price::ZERO, Add::add)
    }
}

impl Serialize for Price {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_f64(self.as_f64())
    }
}

struct PriceVisitor;

impl Visitor<'_> for PriceVisitor {
    type Value = Price;

    fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
        f.write_str("a non-negative price as a number or decimal string")
    }

    fn visit_f64<E: de::Error>(self, v: f64) -> Result<Price, E> {
        Price::from_f64(v).ok_or_else(|| E::custom(format!("invalid price {v}")))
    }

    fn visit_u64<E: de::Error>(self, v: u64) -> Result<Price, E> {
        v.checked_mul(1000)
            .map(Price)
            .ok_or_else(|| E::custom("price overflow"))
    }

    fn visit_i64<E: de::Error>(self, v: i64) -> Result<Price, E> {
        u64::try_from(v)
            .map_err(|_| E::custom("negative price"))
            .and_then(|v| self.visit_u64(v))
    }

    fn visit_str<E: de::Error>(self, v: &str) -> Result<Price, E> {
        v.parse().map_err(E::custom)
    }
}

impl<'de> Deserialize<'de> for Price {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Price, D::Error> {
        deserializer.deserialize_any(PriceVisitor)
    }
}

/// Serde adapter writing a price as a `"x.xxx"` string, for formats where
/// the decimal text itself is the label.
pub mod text {
    use super::Price;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(p: &Price, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(p)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(deserializer: D) -> Result<Price, D::Error> {
        Price::deserialize(deserializer)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn formats_three_digits() {
        assert_eq!(Price::from_millis(8403).to_string(), "8.403");
        assert_eq!(Price::from_millis(93).to_string(), "0.093");
        assert_eq!(Price::from_millis(10_000).to_string(), "10.000");
    }

    #[test]
    fn parses_literals() {
        assert_eq!("8.403".parse::<Price>().unwrap(), Price::from_millis(8403));
        assert_eq!("0.093".parse::<Price>().unwrap(), Price::from_millis(93));
        assert_eq!("5".parse::<Price>().unwrap(), Price::from_millis(5000));
        assert_eq!("8403.0".parse::<Price>().unwrap(), Price::from_millis(8_403_000));
        assert_eq!("1.5000".parse::<Price>().unwrap(), Price::from_millis(1500));
        assert!("1.2345".parse::<Price>().is_err());
        assert!("-1".parse::<Price>().is_err());
        assert!(".".parse::<Price>().is_err());
    }

    #[test]
    fn json_number_and_string() {
        let p: Price = serde_json::from_str("8.403").unwrap();
        assert_eq!(p.millis(), 8403);
        let p: Price = serde_json::from_str("\"0.093\"").unwrap();
        assert_eq!(p.millis(), 93);
        assert_eq!(serde_json::to_string(&Price::from_millis(93)).unwrap(), "0.093");
    }

    proptest! {
        #[test]
        fn display_parse_roundtrip(millis in 0u64..10_000_000_000) {
            let p = Price::from_millis(millis);
            prop_assert_eq!(p.to_string().parse::<Price>().unwrap(), p);
            let json = serde_json::to_string(&p).unwrap();
            prop_assert_eq!(serde_json::from_str::<Price>(&json).unwrap(), p);
        }
    }
}
