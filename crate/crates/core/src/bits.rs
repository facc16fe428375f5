use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// A classical bit string. Bit 0 is written first; as an integer the first
/// bit is the most significant, so `"10"` has value 2.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Bitstring(Vec<bool>);

impl Bitstring {
    pub fn new(bits: Vec<bool>) -> Self {
        Self(bits)
    }

    pub fn empty() -> Self {
        Self(Vec::new())
    }

    pub fn zeros(len: usize) -> Self {
        Self(vec![false; len])
    }

    /// `len`-bit string with integer value `value` (first bit most significant).
    pub fn from_value(value: u64, len: usize) -> Self {
        assert!(len <= 64);
        Self((0..len).map(|i| (value >> (len - 1 - i)) & 1 == 1).collect())
    }

    pub fn value(&self) -> u64 {
        assert!(self.0.len() <= 64);
        self.0.iter().fold(0, |acc, &b| (acc << 1) | u64::from(b))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn bits(&self) -> &[bool] {
        &self.0
    }

    pub fn get(&self, i: usize) -> bool {
        self.0[i]
    }

    pub fn push(&mut self, bit: bool) {
        self.0.push(bit);
    }

    pub fn prefix(&self, len: usize) -> Bitstring {
        Self(self.0[..len].to_vec())
    }

    pub fn concat(&self, other: &Bitstring) -> Bitstring {
        let mut bits = self.0.clone();
        bits.extend_from_slice(&other.0);
        Self(bits)
    }

    pub fn parity(&self) -> bool {
        self.0.iter().fold(false, |acc, &b| acc ^ b)
    }
}

impl fmt::Display for Bitstring {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return write!(f, "ε");
        }
        for &b in &self.0 {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl fmt::Debug for Bitstring {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Bitstring({self})")
    }
}

impl FromStr for Bitstring {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "ε" {
            return Ok(Self::empty());
        }
        s.chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(Error::InvalidInput(format!("'{other}' is not a bit"))),
            })
            .collect::<Result<Vec<_>>>()
            .map(Self)
    }
}

impl From<&[bool]> for Bitstring {
    fn from(bits: &[bool]) -> Self {
        Self(bits.to_vec())
    }
}

impl Serialize for Bitstring {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Bitstring {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn first_bit_is_most_significant() {
        let b: Bitstring = "10".parse().unwrap();
        assert_eq!(b.value(), 2);
        assert_eq!(Bitstring::from_value(2, 2), b);
        assert_eq!(b.to_string(), "10");
        assert!("12".parse::<Bitstring>().is_err());
    }

    proptest! {
        #[test]
        fn value_roundtrip(len in 1usize..20, raw in any::<u64>()) {
            let v = raw & ((1u64 << len) - 1);
            let b = Bitstring::from_value(v, len);
            prop_assert_eq!(b.value(), v);
            prop_assert_eq!(b.to_string().parse::<Bitstring>().unwrap(), b);
        }
    }
}
