//! Position-tracking YAML tree, strict field decoding helpers and a small
//! block-style emitter.

use std::collections::BTreeMap;

use yaml_rust2::parser::{Event, MarkedEventReceiver, Parser};
use yaml_rust2::scanner::{Marker, TScalarStyle};

use crate::diag::{code, Diagnostics, Pos};

#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    /// Scalar text; `plain` is false for quoted and block scalars.
    Scalar {
        text: String,
        plain: bool,
    },
    Seq(Vec<Node>),
    Map(Vec<(Node, Node)>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub value: Value,
    pub pos: Pos,
}

fn pos_of(m: &Marker) -> Pos {
    Pos {
        line: m.line(),
        col: m.col() + 1,
    }
}

/// Map children are collected as a flat key, value, key, ... list and
/// paired when the mapping closes.
#[derive(Default)]
struct Receiver {
    docs: Vec<Node>,
    stack: Vec<(Node, Vec<Node>)>,
    error: Option<(Pos, String)>,
}

impl Receiver {
    fn push_node(&mut self, node: Node) {
        match self.stack.last_mut() {
            Some((parent, flat)) => match &mut parent.value {
                Value::Seq(items) => items.push(node),
                Value::Map(_) => flat.push(node),
                Value::Scalar { .. } => unreachable!("scalars have no children"),
            },
            None => self.docs.push(node),
        }
    }
}

impl MarkedEventReceiver for Receiver {
    fn on_event(&mut self, ev: Event, mark: Marker) {
        if self.error.is_some() {
            return;
        }
        let pos = pos_of(&mark);
        let is_seq = matches!(ev, Event::SequenceStart(..));
        match ev {
            Event::Alias(_) => {
                self.error = Some((pos, "anchors and aliases are not supported".into()));
            }
            Event::Scalar(text, style, anchor, tag) => {
                if anchor != 0 || tag.is_some() {
                    self.error = Some((pos, "anchors and tags are not supported".into()));
                    return;
                }
                self.push_node(Node {
                    value: Value::Scalar {
                        text,
                        plain: style == TScalarStyle::Plain,
                    },
                    pos,
                });
            }
            Event::SequenceStart(anchor, tag) | Event::MappingStart(anchor, tag) => {
                if anchor != 0 || tag.is_some() {
                    self.error = Some((pos, "anchors and tags are not supported".into()));
                    return;
                }
                let value = if is_seq {
                    Value::Seq(Vec::new())
                } else {
                    Value::Map(Vec::new())
                };
                self.stack.push((Node { value, pos }, Vec::new()));
            }
            Event::SequenceEnd | Event::MappingEnd => {
                let (mut node, flat) = self.stack.pop().expect("balanced events");
                if let Value::Map(pairs) = &mut node.value {
                    let mut it = flat.into_iter();
                    while let (Some(k), Some(v)) = (it.next(), it.next()) {
                        pairs.push((k, v));
                    }
                }
                self.push_node(node);
            }
            _ => {}
        }
    }
}

/// Parses every document in `text`.
pub fn parse_documents(text: &str) -> Result<Vec<Node>, Diagnostics> {
    let mut recv = Receiver::default();
    let mut diags = Diagnostics::default();
    let mut parser = Parser::new_from_str(text);
    if let Err(e) = parser.load(&mut recv, true) {
        diags.push(pos_of(e.marker()), code::SYNTAX, e.info().to_string());
        return Err(diags);
    }
    if let Some((pos, msg)) = recv.error {
        diags.push(pos, code::SYNTAX, msg);
        return Err(diags);
    }
    Ok(recv.docs)
}

/// Parses exactly one document.
pub fn parse_document(text: &str) -> Result<Node, Diagnostics> {
    let mut docs = parse_documents(text)?;
    match docs.len() {
        1 => Ok(docs.remove(0)),
        n => {
            let mut d = Diagnostics::default();
            d.push(
                Pos { line: 1, col: 1 },
                code::SYNTAX,
                format!("expected one YAML document, found {n}"),
            );
            Err(d)
        }
    }
}

impl Node {
    pub fn kind_name(&self) -> &'static str {
        match self.value {
            Value::Scalar { .. } => "scalar",
            Value::Seq(_) => "sequence",
            Value::Map(_) => "mapping",
        }
    }

    /// True for `~`, `null` and empty plain scalars.
    pub fn is_null(&self) -> bool {
        matches!(&self.value, Value::Scalar { text, plain: true } if text.is_empty() || text == "~" || text == "null")
    }

    fn wrong_type(&self, d: &mut Diagnostics, what: &str, expected: &str) {
        d.push(
            self.pos,
            code::WRONG_TYPE,
            format!("{what}: expected {expected}, found {}", self.kind_name()),
        );
    }

    pub fn as_str(&self, d: &mut Diagnostics, what: &str) -> Option<&str> {
        match &self.value {
            Value::Scalar { text, .. } => Some(text),
            _ => {
                self.wrong_type(d, what, "scalar");
                None
            }
        }
    }

    pub fn as_seq(&self, d: &mut Diagnostics, what: &str) -> Option<&[Node]> {
        match &self.value {
            Value::Seq(items) => Some(items),
            _ if self.is_null() => Some(&[]),
            _ => {
                self.wrong_type(d, what, "sequence");
                None
            }
        }
    }

    pub fn as_u64(&self, d: &mut Diagnostics, what: &str) -> Option<u64> {
        let text = self.as_str(d, what)?;
        match text.trim().parse::<u64>() {
            Ok(v) => Some(v),
            Err(_) => {
                d.push(
                    self.pos,
                    code::INVALID_VALUE,
                    format!("{what}: expected a non-negative integer, found {text:?}"),
                );
                None
            }
        }
    }

    pub fn as_f64(&self, d: &mut Diagnostics, what: &str) -> Option<f64> {
        let text = self.as_str(d, what)?;
        match text.trim().parse::<f64>() {
            Ok(v) if v.is_finite() => Some(v),
            _ => {
                d.push(
                    self.pos,
                    code::INVALID_VALUE,
                    format!("{what}: expected a finite number, found {text:?}"),
                );
                None
            }
        }
    }

    pub fn as_bool(&self, d: &mut Diagnostics, what: &str) -> Option<bool> {
        match self.as_str(d, what)? {
            "true" => Some(true),
            "false" => Some(false),
            other => {
                d.push(
                    self.pos,
                    code::INVALID_VALUE,
                    format!("{what}: expected true or false, found {other:?}"),
                );
                None
            }
        }
    }

    /// Opens a mapping, reporting duplicate keys and keys outside `allowed`.
    pub fn fields<'a>(&'a self, d: &mut Diagnostics, what: &str, allowed: &[&str]) -> Option<Fields<'a>> {
        let pairs: &[(Node, Node)] = match &self.value {
            Value::Map(pairs) => pairs,
            _ if self.is_null() => &[],
            _ => {
                self.wrong_type(d, what, "mapping");
                return None;
            }
        };
        let mut entries = BTreeMap::new();
        for (k, v) in pairs {
            let Some(key) = k.as_str(d, &format!("key in {what}")) else {
                continue;
            };
            if entries.contains_key(key) {
                d.push(k.pos, code::DUPLICATE_KEY, format!("duplicate key `{key}` in {what}"));
                continue;
            }
            if !allowed.is_empty() && !allowed.contains(&key) {
                d.push(k.pos, code::UNKNOWN_FIELD, format!("unknown field `{key}` in {what}"));
                continue;
            }
            entries.insert(key, (k, v));
        }
        Some(Fields {
            pos: self.pos,
            what: what.to_string(),
            entries,
        })
    }

    /// A mapping of scalar keys to scalar values.
    pub fn string_map(&self, d: &mut Diagnostics, what: &str) -> Option<BTreeMap<String, String>> {
        let f = self.fields(d, what, &[])?;
        let mut out = BTreeMap::new();
        for (key, (_, v)) in &f.entries {
            if let Some(s) = v.as_str(d, &format!("{what}.{key}")) {
                out.insert(key.to_string(), s.to_string());
            }
        }
        Some(out)
    }
}

/// Fields of one mapping, in key order.
pub struct Fields<'a> {
    pub pos: Pos,
    what: String,
    pub entries: BTreeMap<&'a str, (&'a Node, &'a Node)>,
}

impl<'a> Fields<'a> {
    pub fn get(&self, key: &str) -> Option<&'a Node> {
        self.entries.get(key).map(|(_, v)| *v).filter(|v| !v.is_null())
    }

    pub fn key_pos(&self, key: &str) -> Pos {
        self.entries.get(key).map(|(k, _)| k.pos).unwrap_or(self.pos)
    }

    pub fn require(&self, key: &str, d: &mut Diagnostics) -> Option<&'a Node> {
        let v = self.get(key);
        if v.is_none() {
            d.push(
                self.pos,
                code::MISSING_FIELD,
                format!("missing field `{key}` in {}", self.what),
            );
        }
        v
    }

    pub fn req_str(&self, key: &str, d: &mut Diagnostics) -> Option<String> {
        let what = format!("{}.{key}", self.what);
        self.require(key, d)?.as_str(d, &what).map(str::to_string)
    }

    pub fn opt_str(&self, key: &str, d: &mut Diagnostics) -> Option<String> {
        let what = format!("{}.{key}", self.what);
        self.get(key)?.as_str(d, &what).map(str::to_string)
    }

    /// Checks `key` against a fixed value such as `kind: Workflow`.
    pub fn expect_str(&self, key: &str, expected: &[&str], d: &mut Diagnostics) -> Option<String> {
        let node = self.require(key, d)?;
        let s = node.as_str(d, key)?;
        if !expected.contains(&s) {
            d.push(
                node.pos,
                code::INVALID_VALUE,
                format!("`{key}` must be one of {expected:?}, found {s:?}"),
            );
            return None;
        }
        Some(s.to_string())
    }
}

/// Tree for the emitter.
#[derive(Debug, Clone, PartialEq)]
pub enum Emit {
    Str(String),
    /// Emitted unquoted (numbers and booleans).
    Raw(String),
    Seq(Vec<Emit>),
    Map(Vec<(String, Emit)>),
}

impl Emit {
    pub fn str(s: impl Into<String>) -> Self {
        Emit::Str(s.into())
    }

    pub fn map<K: Into<String>>(entries: impl IntoIterator<Item = (K, Emit)>) -> Self {
        Emit::Map(entries.into_iter().map(|(k, v)| (k.into(), v)).collect())
    }

    fn is_block(&self) -> bool {
        match self {
            Emit::Seq(v) => !v.is_empty(),
            Emit::Map(v) => !v.is_empty(),
            _ => false,
        }
    }

    fn inline(&self) -> String {
        match self {
            Emit::Str(s) => quote(s),
            Emit::Raw(s) => s.clone(),
            Emit::Seq(_) => "[]".into(),
            Emit::Map(_) => "{}".into(),
        }
    }

    /// Block-style YAML with two-space indentation.
    pub fn render(&self) -> String {
        let mut out = String::new();
        if self.is_block() {
            self.block(0, &mut out);
        } else {
            out.push_str(&self.inline());
            out.push('\n');
        }
        out
    }

    fn block(&self, indent: usize, out: &mut String) {
        let pad = " ".repeat(indent);
        match self {
            Emit::Map(entries) => {
                for (k, v) in entries {
                    out.push_str(&pad);
                    out.push_str(&key(k));
                    out.push(':');
                    if v.is_block() {
                        out.push('\n');
                        v.block(indent + 2, out);
                    } else {
                        out.push(' ');
                        out.push_str(&v.inline());
                        out.push('\n');
                    }
                }
            }
            Emit::Seq(items) => {
                for item in items {
                    out.push_str(&pad);
                    out.push('-');
                    if item.is_block() {
                        let mut inner = String::new();
                        item.block(indent + 2, &mut inner);
                        out.push(' ');
                        out.push_str(&inner[indent + 2..]);
                    } else {
                        out.push(' ');
                        out.push_str(&item.inline());
                        out.push('\n');
                    }
                }
            }
            _ => unreachable!("scalars are inline"),
        }
    }
}

fn key(k: &str) -> String {
    let plain = !k.is_empty()
        && k.chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.' | '/'))
        && !k.starts_with(['-', '.']);
    if plain {
        k.to_string()
    } else {
        quote(k)
    }
}

/// Double-quoted YAML scalar.
fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            '\r' => out.push_str("\\r"),
            c if (c as u32) < 0x20 || c as u32 == 0x7f => {
                out.push_str(&format!("\\x{:02x}", c as u32));
            }
            c => out.push(c),
        }
    }
    out.push('"');
    out
}
