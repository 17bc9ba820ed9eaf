//! Real coefficients that remember an exact rational form when they were
//! written as one, plus detection of a common multiplicative lattice.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use num_bigint::BigUint;
use num_integer::Integer;
use serde::de::{self, Deserializer, Visitor};
use serde::{Deserialize, Serialize, Serializer};

use crate::error::{Error, Result};

/// A reduced positive fraction `numer / denom`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Fraction {
    numer: u64,
    denom: u64,
}

impl Fraction {
    pub fn new(numer: u64, denom: u64) -> Option<Self> {
        if denom == 0 {
            return None;
        }
        let g = numer.gcd(&denom).max(1);
        Some(Self {
            numer: numer / g,
            denom: denom / g,
        })
    }

    pub fn numer(&self) -> u64 {
        self.numer
    }

    pub fn denom(&self) -> u64 {
        self.denom
    }

    pub fn to_f64(&self) -> f64 {
        self.numer as f64 / self.denom as f64
    }

    /// `self^k <= other`, decided on big integers.
    pub fn pow_le(&self, k: u64, other: &Fraction) -> bool {
        let k = u32::try_from(k).expect("exponent fits in u32");
        let lhs = BigUint::from(self.numer).pow(k) * BigUint::from(other.denom);
        let rhs = BigUint::from(other.numer) * BigUint::from(self.denom).pow(k);
        lhs <= rhs
    }
}

impl fmt::Display for Fraction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.numer, self.denom)
    }
}

/// A real number, optionally carrying the exact fraction it was written as.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scalar {
    value: f64,
    exact: Option<Fraction>,
}

impl Scalar {
    pub fn float(value: f64) -> Self {
        Self { value, exact: None }
    }

    pub fn fraction(numer: u64, denom: u64) -> Self {
        let frac = Fraction::new(numer, denom).expect("nonzero denominator");
        Self {
            value: frac.to_f64(),
            exact: Some(frac),
        }
    }

    pub fn value(&self) -> f64 {
        self.value
    }

    pub fn exact(&self) -> Option<Fraction> {
        self.exact
    }

    pub fn ln(&self) -> f64 {
        match self.exact {
            // ln(p) - ln(q) keeps 1/3 and (1/3)^2 on the same footing
            Some(f) => (f.numer as f64).ln() - (f.denom as f64).ln(),
            None => self.value.ln(),
        }
    }

    /// Parses `p/q`, a decimal literal, or anything `f64` accepts. Fractions
    /// and plain decimals with at most 18 digits are kept exact.
    pub fn parse(text: &str) -> Result<Self> {
        let text = text.trim();
        let bad = || Error::Number(text.to_string());
        if let Some((p, q)) = text.split_once('/') {
            let p: u64 = p.trim().parse().map_err(|_| bad())?;
            let q: u64 = q.trim().parse().map_err(|_| bad())?;
            let frac = Fraction::new(p, q).ok_or_else(bad)?;
            return Ok(Self {
                value: frac.to_f64(),
                exact: Some(frac),
            });
        }
        if let Some(frac) = parse_decimal(text) {
            return Ok(Self {
                value: frac.to_f64(),
                exact: Some(frac),
            });
        }
        let value: f64 = text.parse().map_err(|_| bad())?;
        if !value.is_finite() {
            return Err(bad());
        }
        Ok(Self::float(value))
    }
}

fn parse_decimal(text: &str) -> Option<Fraction> {
    let (int, frac) = match text.split_once('.') {
        Some((i, f)) => (i, f),
        None => (text, ""),
    };
    if int.is_empty() && frac.is_empty() {
        return None;
    }
    if !int.bytes().all(|b| b.is_ascii_digit()) || !frac.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    if int.len() + frac.len() > 18 {
        return None;
    }
    let digits = format!("{int}{frac}");
    let numer: u64 = if digits.is_empty() {
        0
    } else {
        digits.parse().ok()?
    };
    let denom = 10u64.checked_pow(frac.len() as u32)?;
    Fraction::new(numer, denom)
}

impl FromStr for Scalar {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::parse(s)
    }
}

impl From<f64> for Scalar {
    fn from(value: f64) -> Self {
        Self::float(value)
    }
}

impl fmt::Display for Scalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.exact {
            Some(frac) => write!(f, "{frac}"),
            None => write!(f, "{}", self.value),
        }
    }
}

impl Serialize for Scalar {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        match self.exact {
            Some(frac) => serializer.serialize_str(&frac.to_string()),
            None => serializer.serialize_f64(self.value),
        }
    }
}

impl<'de> Deserialize<'de> for Scalar {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        struct ScalarVisitor;

        impl Visitor<'_> for ScalarVisitor {
            type Value = Scalar;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a number or a fraction string \"p/q\"")
            }

            fn visit_f64<E: de::Error>(self, v: f64) -> std::result::Result<Scalar, E> {
                Ok(Scalar::float(v))
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> std::result::Result<Scalar, E> {
                Ok(Scalar::float(v as f64))
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> std::result::Result<Scalar, E> {
                Ok(Scalar::float(v as f64))
            }

            fn visit_str<E: de::Error>(self, v: &str) -> std::result::Result<Scalar, E> {
                // strings are only meant for fractions; decimals belong in JSON numbers
                if !v.contains('/') {
                    return Err(E::custom(format!("expected a fraction \"p/q\", got {v:?}")));
                }
                Scalar::parse(v).map_err(E::custom)
            }
        }

        deserializer.deserialize_any(ScalarVisitor)
    }
}

/// A common base `b < 1` such that every ratio of a coordinate is `b^k` for a
/// positive integer `k`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Lattice {
    pub base: Fraction,
    pub exponents: Vec<u64>,
}

// Trial division cap; larger factors make us fall back to floats.
const FACTOR_LIMIT: u64 = 1 << 20;

fn factorize(mut n: u64, sign: i64, into: &mut BTreeMap<u64, i64>) -> Option<()> {
    let mut p = 2u64;
    while p * p <= n {
        if p > FACTOR_LIMIT {
            return None;
        }
        while n.is_multiple_of(p) {
            *into.entry(p).or_default() += sign;
            n /= p;
        }
        p += if p == 2 { 1 } else { 2 };
    }
    if n > 1 {
        *into.entry(n).or_default() += sign;
    }
    Some(())
}

fn prime_exponents(f: &Fraction) -> Option<BTreeMap<u64, i64>> {
    let mut map = BTreeMap::new();
    factorize(f.numer, 1, &mut map)?;
    factorize(f.denom, -1, &mut map)?;
    map.retain(|_, e| *e != 0);
    Some(map)
}

impl Lattice {
    /// Finds the primitive base shared by all ratios, or `None` when some
    /// ratio is not exact or no such base exists.
    pub fn detect(ratios: &[Scalar]) -> Option<Lattice> {
        let fracs: Option<Vec<Fraction>> = ratios.iter().map(|r| r.exact()).collect();
        let fracs = fracs?;
        let first = fracs.first()?;
        if fracs.iter().any(|f| f.numer == 0 || f.numer >= f.denom) {
            return None;
        }
        let e0 = prime_exponents(first)?;
        let g = e0.values().fold(0i64, |acc, &e| acc.gcd(&e));
        if g == 0 {
            return None;
        }
        let primitive: BTreeMap<u64, i64> = e0.iter().map(|(&p, &e)| (p, e / g)).collect();
        let mut exponents = Vec::with_capacity(fracs.len());
        for f in &fracs {
            let e = prime_exponents(f)?;
            if e.len() != primitive.len() {
                return None;
            }
            let (&p, &ep) = primitive.iter().next()?;
            let first_e = *e.get(&p)?;
            if first_e % ep != 0 {
                return None;
            }
            let k = first_e / ep;
            if k <= 0 {
                return None;
            }
            for (q, &vq) in &primitive {
                if e.get(q).copied() != Some(k * vq) {
                    return None;
                }
            }
            exponents.push(k as u64);
        }
        let mut numer = 1u64;
        let mut denom = 1u64;
        for (&p, &e) in &primitive {
            let pe = p.checked_pow(e.unsigned_abs() as u32)?;
            if e > 0 {
                numer = numer.checked_mul(pe)?;
            } else {
                denom = denom.checked_mul(pe)?;
            }
        }
        let base = Fraction::new(numer, denom)?;
        if base.numer >= base.denom {
            return None;
        }
        Some(Lattice { base, exponents })
    }

    /// Smallest `K` with `base^K <= delta`. Exact when `delta` is a fraction.
    pub fn threshold(&self, delta: &Scalar) -> u64 {
        let ln_b = Scalar::fraction(self.base.numer, self.base.denom).ln();
        let estimate = (delta.ln() / ln_b).floor().max(0.0) as u64;
        match delta.exact() {
            Some(d) => {
                let mut k = estimate.saturating_sub(2);
                while !self.base.pow_le(k, &d) {
                    k += 1;
                }
                k
            }
            None => {
                let mut k = estimate.saturating_sub(2);
                while (k as f64) * ln_b > delta.ln() + crate::LOG_TOLERANCE {
                    k += 1;
                }
                k
            }
        }
    }
}
