//! `{{...}}` placeholder handling.

use std::collections::BTreeMap;

use super::ExpansionError;

const INPUT_PREFIX: &str = "inputs.parameters.";

/// A placeholder found in a token.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Placeholder {
    Input(String),
    Item,
    /// Anything else between braces, including an unterminated `{{`.
    Unknown(String),
}

/// Splits `token` into literal text and placeholders.
pub(crate) fn scan(token: &str) -> Vec<Result<&str, Placeholder>> {
    let mut out = Vec::new();
    let mut rest = token;
    while let Some(start) = rest.find("{{") {
        if start > 0 {
            out.push(Ok(&rest[..start]));
        }
        let after = &rest[start + 2..];
        match after.find("}}") {
            Some(end) => {
                let inner = after[..end].trim();
                out.push(Err(if inner == "item" {
                    Placeholder::Item
                } else if let Some(name) = inner.strip_prefix(INPUT_PREFIX) {
                    Placeholder::Input(name.to_string())
                } else {
                    Placeholder::Unknown(inner.to_string())
                }));
                rest = &after[end + 2..];
            }
            None => {
                out.push(Err(Placeholder::Unknown(rest[start..].to_string())));
                rest = "";
            }
        }
    }
    if !rest.is_empty() {
        out.push(Ok(rest));
    }
    out
}

/// Every placeholder in `token`.
pub fn placeholders(token: &str) -> Vec<Placeholder> {
    scan(token).into_iter().filter_map(Result::err).collect()
}

fn substitute_one(
    token: &str,
    bindings: &BTreeMap<String, String>,
    item: Option<&str>,
) -> Result<String, ExpansionError> {
    if !token.contains("{{") {
        return Ok(token.to_string());
    }
    let mut out = String::with_capacity(token.len());
    for part in scan(token) {
        match part {
            Ok(text) => out.push_str(text),
            Err(Placeholder::Input(name)) => match bindings.get(&name) {
                Some(v) => out.push_str(v),
                None => {
                    return Err(ExpansionError::Unbound {
                        placeholder: format!("{{{{inputs.parameters.{name}}}}}"),
                    })
                }
            },
            Err(Placeholder::Item) => match item {
                Some(v) => out.push_str(v),
                None => {
                    return Err(ExpansionError::Unbound {
                        placeholder: "{{item}}".into(),
                    })
                }
            },
            Err(Placeholder::Unknown(expr)) => {
                return Err(ExpansionError::Unbound {
                    placeholder: format!("{{{{{expr}}}}}"),
                })
            }
        }
    }
    Ok(out)
}

/// Replaces `{{inputs.parameters.X}}` with `bindings[X]`; tokens without
/// placeholders are returned unchanged.
pub fn substitute_params(
    tokens: &[String],
    bindings: &BTreeMap<String, String>,
) -> Result<Vec<String>, ExpansionError> {
    tokens.iter().map(|t| substitute_one(t, bindings, None)).collect()
}

/// Binds a step argument value: `{{item}}` and the enclosing template's
/// inputs.
pub(crate) fn substitute_argument(
    value: &str,
    bindings: &BTreeMap<String, String>,
    item: Option<u64>,
) -> Result<String, ExpansionError> {
    let item = item.map(|i| i.to_string());
    substitute_one(value, bindings, item.as_deref())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn b(pairs: &[(&str, &str)]) -> BTreeMap<String, String> {
        pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    fn toks(t: &[&str]) -> Vec<String> {
        t.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn index_and_path() {
        let out = substitute_params(
            &toks(&["{{inputs.parameters.index}}", "/mnt/shared"]),
            &b(&[("index", "42")]),
        )
        .unwrap();
        assert_eq!(out, toks(&["42", "/mnt/shared"]));
    }

    #[test]
    fn identity_without_placeholders() {
        let t = toks(&["python", "/app/x.py", "{ not a placeholder }", "a}}b"]);
        assert_eq!(substitute_params(&t, &BTreeMap::new()).unwrap(), t);
    }

    #[test]
    fn unknown_placeholder_is_an_error() {
        assert!(substitute_params(&toks(&["{{inputs.parameters.missing}}"]), &BTreeMap::new()).is_err());
        assert!(substitute_params(&toks(&["{{workflow.name}}"]), &BTreeMap::new()).is_err());
        assert!(substitute_params(&toks(&["x{{inputs.parameters.a"]), &b(&[("a", "1")])).is_err());
    }

    #[test]
    fn embedded_and_repeated() {
        let out = substitute_params(
            &toks(&["v{{ inputs.parameters.i }}-{{inputs.parameters.i}}"]),
            &b(&[("i", "7")]),
        )
        .unwrap();
        assert_eq!(out, toks(&["v7-7"]));
        assert_eq!(substitute_argument("{{item}}", &BTreeMap::new(), Some(3)).unwrap(), "3");
    }
}
