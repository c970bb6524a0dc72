//! Attribute predicates used by device classes and claims, e.g.
//! `shot_budget >= 10000` or `vendor == "iqm"`.

use std::collections::BTreeMap;
use std::fmt;

/// A device attribute value.
#[derive(Debug, Clone, PartialEq)]
pub enum Scalar {
    Number(f64),
    Bool(bool),
    Text(String),
}

impl Scalar {
    /// Numbers and booleans are recognised; everything else is text.
    pub fn infer(text: &str) -> Scalar {
        match text {
            "true" => Scalar::Bool(true),
            "false" => Scalar::Bool(false),
            _ => match text.parse::<f64>() {
                Ok(v) if v.is_finite() => Scalar::Number(v),
                _ => Scalar::Text(text.to_string()),
            },
        }
    }
}

impl fmt::Display for Scalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scalar::Number(v) => write!(f, "{v}"),
            Scalar::Bool(b) => write!(f, "{b}"),
            Scalar::Text(s) => f.write_str(s),
        }
    }
}

pub type Attributes = BTreeMap<String, Scalar>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Op {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl Op {
    fn symbol(self) -> &'static str {
        match self {
            Op::Eq => "==",
            Op::Ne => "!=",
            Op::Lt => "<",
            Op::Le => "<=",
            Op::Gt => ">",
            Op::Ge => ">=",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Predicate {
    pub attribute: String,
    pub op: Op,
    pub value: Scalar,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid predicate {text:?}: {reason}")]
pub struct PredicateError {
    pub text: String,
    pub reason: &'static str,
}

impl Predicate {
    pub fn parse(text: &str) -> Result<Predicate, PredicateError> {
        let err = |reason| PredicateError {
            text: text.to_string(),
            reason,
        };
        // Two-character operators first so `>=` is not read as `>`.
        let ops = [
            (">=", Op::Ge),
            ("<=", Op::Le),
            ("==", Op::Eq),
            ("!=", Op::Ne),
            (">", Op::Gt),
            ("<", Op::Lt),
        ];
        let (at, sym, op) = ops
            .iter()
            .filter_map(|(s, op)| text.find(s).map(|i| (i, *s, *op)))
            .min_by_key(|(i, s, _)| (*i, std::cmp::Reverse(s.len())))
            .ok_or_else(|| err("missing comparison operator"))?;
        let attribute = text[..at].trim();
        let raw = text[at + sym.len()..].trim();
        let valid_name = !attribute.is_empty()
            && attribute
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.' | '/'));
        if !valid_name {
            return Err(err("invalid attribute name"));
        }
        if raw.is_empty() {
            return Err(err("missing value"));
        }
        let value = match raw.strip_prefix('"').and_then(|r| r.strip_suffix('"')) {
            Some(quoted) => Scalar::Text(quoted.to_string()),
            None => Scalar::infer(raw),
        };
        if matches!(op, Op::Lt | Op::Le | Op::Gt | Op::Ge) && !matches!(value, Scalar::Number(_)) {
            return Err(err("ordering comparisons need a number"));
        }
        Ok(Predicate {
            attribute: attribute.to_string(),
            op,
            value,
        })
    }

    /// Missing attributes and mismatched types never match.
    pub fn eval(&self, attrs: &Attributes) -> bool {
        let Some(actual) = attrs.get(&self.attribute) else {
            return false;
        };
        match (actual, &self.value) {
            (Scalar::Number(a), Scalar::Number(b)) => match self.op {
                Op::Eq => a == b,
                Op::Ne => a != b,
                Op::Lt => a < b,
                Op::Le => a <= b,
                Op::Gt => a > b,
                Op::Ge => a >= b,
            },
            (a, b) if std::mem::discriminant(a) == std::mem::discriminant(b) => match self.op {
                Op::Eq => a == b,
                Op::Ne => a != b,
                _ => false,
            },
            _ => false,
        }
    }
}

impl fmt::Display for Predicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.value {
            Scalar::Text(s) => write!(f, "{} {} \"{s}\"", self.attribute, self.op.symbol()),
            v => write!(f, "{} {} {v}", self.attribute, self.op.symbol()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn attrs(pairs: &[(&str, &str)]) -> Attributes {
        pairs.iter().map(|(k, v)| (k.to_string(), Scalar::infer(v))).collect()
    }

    #[test]
    fn numeric_comparisons() {
        let a = attrs(&[("shot_budget", "4096")]);
        assert!(!Predicate::parse("shot_budget >= 10000").unwrap().eval(&a));
        assert!(Predicate::parse("shot_budget>=4096").unwrap().eval(&a));
        assert!(Predicate::parse("shot_budget < 5000").unwrap().eval(&a));
        assert!(Predicate::parse("shot_budget != 1").unwrap().eval(&a));
    }

    #[test]
    fn text_and_missing_attributes() {
        let a = attrs(&[("vendor", "iqm"), ("calibrated", "true")]);
        assert!(Predicate::parse("vendor == \"iqm\"").unwrap().eval(&a));
        assert!(Predicate::parse("vendor == iqm").unwrap().eval(&a));
        assert!(Predicate::parse("calibrated == true").unwrap().eval(&a));
        assert!(!Predicate::parse("qubits >= 1").unwrap().eval(&a));
        assert!(!Predicate::parse("vendor != 3").unwrap().eval(&a));
    }

    #[test]
    fn malformed_predicates() {
        for bad in ["shot_budget", ">= 3", "a >=", "a > iqm", "a b == 1"] {
            assert!(Predicate::parse(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn display_parses_back() {
        for text in ["shot_budget >= 10000", "vendor == \"iqm\"", "window_s < 2.5"] {
            let p = Predicate::parse(text).unwrap();
            assert_eq!(Predicate::parse(&p.to_string()).unwrap(), p);
        }
    }
}
