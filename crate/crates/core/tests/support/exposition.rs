//! Standalone parser for the text exposition format (0.0.4), used as an
//! oracle for exported metrics. Shares no code with the exporter.

#![allow(dead_code)]

use std::collections::BTreeMap;

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub name: String,
    pub labels: BTreeMap<String, String>,
    pub value: f64,
    pub timestamp: Option<i64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Family {
    pub name: String,
    pub help: Option<String>,
    pub kind: String,
    pub samples: Vec<Sample>,
}

#[derive(Debug, Default)]
pub struct Exposition {
    pub families: Vec<Family>,
}

impl Exposition {
    pub fn family(&self, name: &str) -> Option<&Family> {
        self.families.iter().find(|f| f.name == name)
    }

    /// Value of the single sample matching `name` and every given label.
    pub fn value(&self, name: &str, labels: &[(&str, &str)]) -> Option<f64> {
        let mut hits = self.families.iter().flat_map(|f| &f.samples).filter(|s| {
            s.name == name
                && labels
                    .iter()
                    .all(|(k, v)| s.labels.get(*k).map(String::as_str) == Some(v))
        });
        let first = hits.next()?;
        hits.next().is_none().then_some(first.value)
    }
}

fn name_ok(s: &str, colon: bool) -> bool {
    let b = s.as_bytes();
    !b.is_empty()
        && (b[0].is_ascii_alphabetic() || b[0] == b'_' || (colon && b[0] == b':'))
        && b[1..]
            .iter()
            .all(|c| c.is_ascii_alphanumeric() || *c == b'_' || (colon && *c == b':'))
}

fn parse_float(s: &str) -> Result<f64, String> {
    match s {
        "NaN" => Ok(f64::NAN),
        "+Inf" | "Inf" => Ok(f64::INFINITY),
        "-Inf" => Ok(f64::NEG_INFINITY),
        _ => {
            let ok = s.bytes().all(|c| c.is_ascii_digit() || b"+-.eE".contains(&c));
            if !ok || s.is_empty() {
                return Err(format!("bad float {s:?}"));
            }
            s.parse::<f64>().map_err(|e| format!("bad float {s:?}: {e}"))
        }
    }
}

fn unescape_help(s: &str) -> Result<String, String> {
    let mut out = String::new();
    let mut it = s.chars();
    while let Some(c) = it.next() {
        if c == '\\' {
            match it.next() {
                Some('\\') => out.push('\\'),
                Some('n') => out.push('\n'),
                Some(o) => {
                    out.push('\\');
                    out.push(o)
                }
                None => out.push('\\'),
            }
        } else {
            out.push(c);
        }
    }
    Ok(out)
}

/// Parses `name{labels} value [timestamp]`.
fn parse_sample(line: &str) -> Result<Sample, String> {
    let chars: Vec<char> = line.chars().collect();
    let mut i = 0;
    while i < chars.len() && !matches!(chars[i], '{' | ' ' | '\t') {
        i += 1;
    }
    let name: String = chars[..i].iter().collect();
    if !name_ok(&name, true) {
        return Err(format!("bad metric name {name:?}"));
    }
    let mut labels = BTreeMap::new();
    if i < chars.len() && chars[i] == '{' {
        i += 1;
        loop {
            if i < chars.len() && chars[i] == '}' {
                i += 1;
                break;
            }
            let start = i;
            while i < chars.len() && chars[i] != '=' {
                i += 1;
            }
            let lname: String = chars[start..i].iter().collect();
            if !name_ok(&lname, false) {
                return Err(format!("bad label name {lname:?}"));
            }
            if i + 1 >= chars.len() || chars[i + 1] != '"' {
                return Err("label value must be quoted".into());
            }
            i += 2;
            let mut value = String::new();
            loop {
                let c = *chars.get(i).ok_or("unterminated label value")?;
                i += 1;
                match c {
                    '"' => break,
                    '\\' => {
                        let e = *chars.get(i).ok_or("dangling escape")?;
                        i += 1;
                        match e {
                            '\\' => value.push('\\'),
                            '"' => value.push('"'),
                            'n' => value.push('\n'),
                            o => return Err(format!("bad escape \\{o}")),
                        }
                    }
                    '\n' => return Err("raw newline in label value".into()),
                    c => value.push(c),
                }
            }
            if labels.insert(lname.clone(), value).is_some() {
                return Err(format!("duplicate label {lname}"));
            }
            match chars.get(i) {
                Some(',') => i += 1,
                Some('}') => {}
                _ => return Err("expected , or } after label".into()),
            }
        }
    }
    let rest: String = chars[i..].iter().collect();
    if !rest.starts_with([' ', '\t']) {
        return Err("missing space before value".into());
    }
    let parts: Vec<&str> = rest.split_whitespace().collect();
    let (value, timestamp) = match parts.as_slice() {
        [v] => (parse_float(v)?, None),
        [v, t] => (
            parse_float(v)?,
            Some(t.parse::<i64>().map_err(|_| format!("bad timestamp {t:?}"))?),
        ),
        _ => return Err(format!("expected value [timestamp], got {rest:?}")),
    };
    Ok(Sample {
        name,
        labels,
        value,
        timestamp,
    })
}

fn base_name<'a>(sample: &'a str, fam: &Family) -> &'a str {
    if fam.kind == "histogram" {
        for suffix in ["_bucket", "_sum", "_count"] {
            if let Some(b) = sample.strip_suffix(suffix) {
                if b == fam.name {
                    return b;
                }
            }
        }
    }
    sample
}

fn check_histogram(fam: &Family) -> Result<(), String> {
    let mut groups: BTreeMap<Vec<(String, String)>, Vec<&Sample>> = BTreeMap::new();
    for s in &fam.samples {
        let key = s
            .labels
            .iter()
            .filter(|(k, _)| *k != "le")
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect();
        groups.entry(key).or_default().push(s);
    }
    for (key, samples) in groups {
        let mut buckets: Vec<(f64, f64)> = Vec::new();
        let mut count = None;
        let mut sum = None;
        for s in samples {
            if s.name.ends_with("_bucket") {
                let le = s.labels.get("le").ok_or("bucket without le")?;
                buckets.push((parse_float(le)?, s.value));
            } else if s.name.ends_with("_count") {
                count = Some(s.value);
            } else if s.name.ends_with("_sum") {
                sum = Some(s.value);
            }
        }
        let (Some(count), Some(_)) = (count, sum) else {
            return Err(format!("{} {key:?}: missing _sum or _count", fam.name));
        };
        if buckets
            .windows(2)
            .any(|w| w[0].0.partial_cmp(&w[1].0) != Some(std::cmp::Ordering::Less))
        {
            return Err(format!("{}: bucket bounds not ascending", fam.name));
        }
        if buckets.windows(2).any(|w| w[0].1 > w[1].1) {
            return Err(format!("{}: bucket counts not cumulative", fam.name));
        }
        match buckets.last() {
            Some((le, c)) if le.is_infinite() && *c == count => {}
            _ => return Err(format!("{}: +Inf bucket must equal _count", fam.name)),
        }
    }
    Ok(())
}

pub fn parse(text: &str) -> Result<Exposition, String> {
    let mut out = Exposition::default();
    let mut seen = std::collections::BTreeSet::new();
    let mut help: BTreeMap<String, String> = BTreeMap::new();
    for (n, line) in text.split('\n').enumerate() {
        let err = |e: String| format!("line {}: {e}: {line:?}", n + 1);
        if line.trim().is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            let rest = rest.trim_start();
            let mut words = rest.splitn(3, ' ');
            match (words.next(), words.next(), words.next()) {
                (Some("HELP"), Some(name), text) => {
                    if !name_ok(name, true) {
                        return Err(err("bad name in HELP".into()));
                    }
                    if help
                        .insert(name.to_string(), unescape_help(text.unwrap_or(""))?)
                        .is_some()
                    {
                        return Err(err("second HELP".into()));
                    }
                }
                (Some("TYPE"), Some(name), Some(kind)) => {
                    if !["counter", "gauge", "histogram", "summary", "untyped"].contains(&kind) {
                        return Err(err(format!("unknown type {kind}")));
                    }
                    if !seen.insert(name.to_string()) {
                        return Err(err("TYPE repeated or after samples".into()));
                    }
                    out.families.push(Family {
                        name: name.to_string(),
                        help: help.get(name).cloned(),
                        kind: kind.to_string(),
                        samples: Vec::new(),
                    });
                }
                _ => {}
            }
            continue;
        }
        let s = parse_sample(line).map_err(err)?;
        let belongs = out.families.last().is_some_and(|f| base_name(&s.name, f) == f.name);
        if !belongs {
            // An untyped family begins; it must not have appeared before.
            if !seen.insert(s.name.clone()) {
                return Err(err("samples of a family are not contiguous".into()));
            }
            out.families.push(Family {
                name: s.name.clone(),
                help: None,
                kind: "untyped".into(),
                samples: Vec::new(),
            });
        }
        let fam = out.families.last_mut().expect("just ensured");
        if fam.kind == "counter" && (s.value < 0.0 || s.value.is_nan()) {
            return Err(err("negative counter".into()));
        }
        fam.samples.push(s);
    }
    if !text.is_empty() && !text.ends_with('\n') {
        return Err("exposition must end with a newline".into());
    }
    for f in &out.families {
        if f.kind == "histogram" {
            check_histogram(f)?;
        }
        let mut keys = std::collections::BTreeSet::new();
        for s in &f.samples {
            if !keys.insert((s.name.clone(), s.labels.clone())) {
                return Err(format!("{}: duplicate sample {:?}", f.name, s.labels));
            }
        }
    }
    Ok(out)
}
