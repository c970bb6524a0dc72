//! Resource quantities in the `500m` / `1Gi` suffix grammar and the
//! resource vectors built from them.
//!
//! Canonical units: `cpu` in millicores, every other resource in base units
//! (bytes for `memory`, whole devices for device counts).

use std::collections::BTreeMap;
use std::fmt;

pub const CPU: &str = "cpu";
pub const MEMORY: &str = "memory";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid quantity {text:?}: {reason}")]
pub struct QuantityError {
    pub text: String,
    pub reason: &'static str,
}

fn suffix_factor(suffix: &str) -> Option<(i128, i128)> {
    // (numerator, denominator)
    Some(match suffix {
        "" => (1, 1),
        "m" => (1, 1000),
        "k" => (1_000, 1),
        "M" => (1_000_000, 1),
        "G" => (1_000_000_000, 1),
        "T" => (1_000_000_000_000, 1),
        "P" => (1_000_000_000_000_000, 1),
        "E" => (1_000_000_000_000_000_000, 1),
        "Ki" => (1 << 10, 1),
        "Mi" => (1 << 20, 1),
        "Gi" => (1 << 30, 1),
        "Ti" => (1 << 40, 1),
        "Pi" => (1 << 50, 1),
        "Ei" => (1 << 60, 1),
        _ => return None,
    })
}

/// Parses `text` and scales it by `unit` (1000 for cpu millicores, 1
/// otherwise). The scaled value must be a whole number.
pub fn parse_scaled(text: &str, unit: i64) -> Result<i64, QuantityError> {
    let err = |reason| QuantityError {
        text: text.to_string(),
        reason,
    };
    let t = text.trim();
    let split = t.find(|c: char| !(c.is_ascii_digit() || c == '.')).unwrap_or(t.len());
    let (number, suffix) = t.split_at(split);
    if number.is_empty() || number == "." {
        return Err(err("missing number"));
    }
    let (num, den) = suffix_factor(suffix).ok_or_else(|| err("unknown suffix"))?;
    let (int_part, frac_part) = number.split_once('.').unwrap_or((number, ""));
    if frac_part.contains('.') || frac_part.len() > 18 {
        return Err(err("malformed number"));
    }
    let digits = format!("{int_part}{frac_part}");
    let mantissa: i128 = digits.parse().map_err(|_| err("malformed number"))?;
    let scale = 10i128.pow(frac_part.len() as u32);
    let numer = mantissa
        .checked_mul(num)
        .and_then(|v| v.checked_mul(i128::from(unit)))
        .ok_or_else(|| err("out of range"))?;
    let denom = den * scale;
    if numer % denom != 0 {
        return Err(err("not a whole number of base units"));
    }
    i64::try_from(numer / denom).map_err(|_| err("out of range"))
}

/// Parses a quantity for `resource` into canonical units.
pub fn parse_quantity(resource: &str, text: &str) -> Result<i64, QuantityError> {
    parse_scaled(text, if resource == CPU { 1000 } else { 1 })
}

/// Inverse of [`parse_quantity`]; picks the shortest exact spelling.
pub fn format_quantity(resource: &str, value: i64) -> String {
    if resource == CPU {
        return if value % 1000 == 0 {
            (value / 1000).to_string()
        } else {
            format!("{value}m")
        };
    }
    if value != 0 {
        for (suffix, factor) in [
            ("Ei", 1i64 << 60),
            ("Pi", 1 << 50),
            ("Ti", 1 << 40),
            ("Gi", 1 << 30),
            ("Mi", 1 << 20),
            ("Ki", 1 << 10),
        ] {
            if value % factor == 0 {
                return format!("{}{suffix}", value / factor);
            }
        }
    }
    value.to_string()
}

/// Amount per resource name; absent entries are zero.
#[derive(Debug, Clone, PartialEq, Eq, Default, Hash, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
#[serde(transparent)]
pub struct ResourceVector(pub BTreeMap<String, i64>);

impl ResourceVector {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_pairs<K: Into<String>>(pairs: impl IntoIterator<Item = (K, i64)>) -> Self {
        let mut v = Self::new();
        for (k, amount) in pairs {
            v.add_one(&k.into(), amount);
        }
        v
    }

    pub fn get(&self, resource: &str) -> i64 {
        self.0.get(resource).copied().unwrap_or(0)
    }

    pub fn set(&mut self, resource: &str, amount: i64) {
        if amount == 0 {
            self.0.remove(resource);
        } else {
            self.0.insert(resource.to_string(), amount);
        }
    }

    pub fn add_one(&mut self, resource: &str, amount: i64) {
        let v = self.get(resource) + amount;
        self.set(resource, v);
    }

    pub fn add(&mut self, other: &ResourceVector) {
        for (k, v) in &other.0 {
            self.add_one(k, *v);
        }
    }

    pub fn sub(&mut self, other: &ResourceVector) {
        for (k, v) in &other.0 {
            self.add_one(k, -*v);
        }
    }

    /// True when every component of `other` is at most ours.
    pub fn covers(&self, other: &ResourceVector) -> bool {
        other.0.iter().all(|(k, v)| self.get(k) >= *v)
    }

    /// First resource where `other` exceeds us.
    pub fn shortfall<'a>(&self, other: &'a ResourceVector) -> Option<(&'a str, i64, i64)> {
        other
            .0
            .iter()
            .find(|(k, v)| self.get(k) < **v)
            .map(|(k, v)| (k.as_str(), *v, self.get(k)))
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, i64)> {
        self.0.iter().map(|(k, v)| (k.as_str(), *v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.0.keys().map(String::as_str)
    }
}

impl fmt::Display for ResourceVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (i, (k, v)) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{k}: {}", format_quantity(k, *v))?;
        }
        f.write_str("}")
    }
}
