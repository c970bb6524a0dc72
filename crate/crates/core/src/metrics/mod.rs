//! Metrics registry and text exposition (format 0.0.4).

mod recorder;

pub use recorder::MetricsRecorder;

use std::collections::BTreeMap;
use std::fmt::Write as _;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MetricKind {
    Counter,
    Gauge,
    Histogram,
}

impl MetricKind {
    pub fn as_str(self) -> &'static str {
        match self {
            MetricKind::Counter => "counter",
            MetricKind::Gauge => "gauge",
            MetricKind::Histogram => "histogram",
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricsError {
    #[error("invalid metric name {0:?}")]
    InvalidName(String),
    #[error("invalid label name {0:?}")]
    InvalidLabel(String),
    #[error("metric {0} is not registered")]
    Unknown(String),
    #[error("metric {name} is a {actual}, not a {expected}")]
    WrongKind {
        name: String,
        expected: &'static str,
        actual: &'static str,
    },
    #[error("counter {0} cannot decrease")]
    CounterDecrease(String),
}

pub type Labels = Vec<(String, String)>;

/// Builds a label set from string pairs.
pub fn labels(pairs: &[(&str, &str)]) -> Labels {
    pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
}

pub fn valid_metric_name(name: &str) -> bool {
    let mut chars = name.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_' || c == ':')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_' || c == ':')
}

pub fn valid_label_name(name: &str) -> bool {
    let mut chars = name.chars();
    !name.starts_with("__")
        && matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

#[derive(Debug, Clone, PartialEq)]
struct Histogram {
    counts: Vec<u64>,
    sum: f64,
    count: u64,
}

#[derive(Debug, Clone, PartialEq)]
enum Value {
    Scalar(f64),
    Histogram(Histogram),
}

#[derive(Debug, Clone, PartialEq)]
struct Family {
    help: String,
    kind: MetricKind,
    /// Upper bounds, ascending, without +Inf.
    buckets: Vec<f64>,
    samples: BTreeMap<Labels, Value>,
}

/// Counters, gauges and histograms keyed by (name, sorted label set).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Registry {
    families: BTreeMap<String, Family>,
    /// Bumped on every update; identifies a snapshot.
    seq: u64,
}

fn normalize(labels: &[(String, String)]) -> Result<Labels, MetricsError> {
    let mut out: Labels = labels.to_vec();
    out.sort();
    for (k, _) in &out {
        if !valid_label_name(k) || k == "le" {
            return Err(MetricsError::InvalidLabel(k.clone()));
        }
    }
    Ok(out)
}

/// Sample values: integers without a fraction, specials per the format.
pub fn format_value(v: f64) -> String {
    if v.is_nan() {
        "NaN".into()
    } else if v == f64::INFINITY {
        "+Inf".into()
    } else if v == f64::NEG_INFINITY {
        "-Inf".into()
    } else {
        format!("{v}")
    }
}

fn escape_label(v: &str) -> String {
    let mut s = String::with_capacity(v.len());
    for c in v.chars() {
        match c {
            '\\' => s.push_str("\\\\"),
            '"' => s.push_str("\\\""),
            '\n' => s.push_str("\\n"),
            c => s.push(c),
        }
    }
    s
}

fn escape_help(v: &str) -> String {
    v.replace('\\', "\\\\").replace('\n', "\\n")
}

fn write_labels(out: &mut String, labels: &[(String, String)], extra: Option<(&str, &str)>) {
    if labels.is_empty() && extra.is_none() {
        return;
    }
    out.push('{');
    let mut first = true;
    for (k, v) in labels.iter().map(|(k, v)| (k.as_str(), v.as_str())).chain(extra) {
        if !first {
            out.push(',');
        }
        first = false;
        let _ = write!(out, "{k}=\"{}\"", escape_label(v));
    }
    out.push('}');
}

impl Registry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn seq(&self) -> u64 {
        self.seq
    }

    /// Declares a family. Redeclaring with the same kind keeps its samples.
    pub fn describe(&mut self, name: &str, help: &str, kind: MetricKind) -> Result<(), MetricsError> {
        self.describe_with_buckets(name, help, kind, &[])
    }

    pub fn describe_histogram(&mut self, name: &str, help: &str, buckets: &[f64]) -> Result<(), MetricsError> {
        self.describe_with_buckets(name, help, MetricKind::Histogram, buckets)
    }

    fn describe_with_buckets(
        &mut self,
        name: &str,
        help: &str,
        kind: MetricKind,
        buckets: &[f64],
    ) -> Result<(), MetricsError> {
        if !valid_metric_name(name) {
            return Err(MetricsError::InvalidName(name.to_string()));
        }
        let mut b: Vec<f64> = buckets.iter().copied().filter(|x| x.is_finite()).collect();
        b.sort_by(f64::total_cmp);
        b.dedup();
        let fam = self.families.entry(name.to_string()).or_insert_with(|| Family {
            help: help.to_string(),
            kind,
            buckets: b,
            samples: BTreeMap::new(),
        });
        if fam.kind != kind {
            return Err(MetricsError::WrongKind {
                name: name.to_string(),
                expected: kind.as_str(),
                actual: fam.kind.as_str(),
            });
        }
        Ok(())
    }

    fn family(&mut self, name: &str, kind: MetricKind) -> Result<&mut Family, MetricsError> {
        let fam = self
            .families
            .get_mut(name)
            .ok_or_else(|| MetricsError::Unknown(name.to_string()))?;
        if fam.kind != kind {
            return Err(MetricsError::WrongKind {
                name: name.to_string(),
                expected: kind.as_str(),
                actual: fam.kind.as_str(),
            });
        }
        Ok(fam)
    }

    pub fn counter_add(&mut self, name: &str, labels: &[(String, String)], delta: f64) -> Result<(), MetricsError> {
        if delta.is_nan() || delta < 0.0 {
            return Err(MetricsError::CounterDecrease(name.to_string()));
        }
        let key = normalize(labels)?;
        let fam = self.family(name, MetricKind::Counter)?;
        match fam.samples.entry(key).or_insert(Value::Scalar(0.0)) {
            Value::Scalar(v) => *v += delta,
            Value::Histogram(_) => unreachable!("counter families hold scalars"),
        }
        self.seq += 1;
        Ok(())
    }

    pub fn gauge_set(&mut self, name: &str, labels: &[(String, String)], value: f64) -> Result<(), MetricsError> {
        let key = normalize(labels)?;
        let fam = self.family(name, MetricKind::Gauge)?;
        fam.samples.insert(key, Value::Scalar(value));
        self.seq += 1;
        Ok(())
    }

    pub fn gauge_add(&mut self, name: &str, labels: &[(String, String)], delta: f64) -> Result<(), MetricsError> {
        let key = normalize(labels)?;
        let fam = self.family(name, MetricKind::Gauge)?;
        match fam.samples.entry(key).or_insert(Value::Scalar(0.0)) {
            Value::Scalar(v) => *v += delta,
            Value::Histogram(_) => unreachable!("gauge families hold scalars"),
        }
        self.seq += 1;
        Ok(())
    }

    pub fn observe(&mut self, name: &str, labels: &[(String, String)], value: f64) -> Result<(), MetricsError> {
        let key = normalize(labels)?;
        let fam = self.family(name, MetricKind::Histogram)?;
        let n = fam.buckets.len();
        let Value::Histogram(h) = fam.samples.entry(key).or_insert_with(|| {
            Value::Histogram(Histogram {
                counts: vec![0; n],
                sum: 0.0,
                count: 0,
            })
        }) else {
            unreachable!("histogram families hold histograms")
        };
        // Counts are cumulative: every bucket whose bound admits the value.
        for (c, &le) in h.counts.iter_mut().zip(&fam.buckets) {
            if value <= le {
                *c += 1;
            }
        }
        h.sum += value;
        h.count += 1;
        self.seq += 1;
        Ok(())
    }

    /// Current value of a counter or gauge sample.
    pub fn value(&self, name: &str, labels: &[(String, String)]) -> Option<f64> {
        let key = normalize(labels).ok()?;
        match self.families.get(name)?.samples.get(&key)? {
            Value::Scalar(v) => Some(*v),
            Value::Histogram(_) => None,
        }
    }

    /// (cumulative bucket counts including +Inf, sum, count) of a histogram.
    pub fn histogram(&self, name: &str, labels: &[(String, String)]) -> Option<(Vec<u64>, f64, u64)> {
        let key = normalize(labels).ok()?;
        match self.families.get(name)?.samples.get(&key)? {
            Value::Histogram(h) => {
                let mut counts = h.counts.clone();
                counts.push(h.count);
                Some((counts, h.sum, h.count))
            }
            Value::Scalar(_) => None,
        }
    }

    /// Text exposition of every family, sorted by name then labels. Each
    /// sample carries `timestamp_ms` when given.
    pub fn export_text(&self, timestamp_ms: Option<i64>) -> String {
        let mut out = String::new();
        let ts = timestamp_ms.map(|t| format!(" {t}")).unwrap_or_default();
        for (name, fam) in &self.families {
            let _ = writeln!(out, "# HELP {name} {}", escape_help(&fam.help));
            let _ = writeln!(out, "# TYPE {name} {}", fam.kind.as_str());
            for (labels, value) in &fam.samples {
                match value {
                    Value::Scalar(v) => {
                        out.push_str(name);
                        write_labels(&mut out, labels, None);
                        let _ = writeln!(out, " {}{ts}", format_value(*v));
                    }
                    Value::Histogram(h) => {
                        let bounds = fam.buckets.iter().map(|b| format_value(*b));
                        let counts = h.counts.iter().copied();
                        for (le, c) in bounds.chain(["+Inf".to_string()]).zip(counts.chain([h.count])) {
                            let _ = write!(out, "{name}_bucket");
                            write_labels(&mut out, labels, Some(("le", &le)));
                            let _ = writeln!(out, " {c}{ts}");
                        }
                        let _ = write!(out, "{name}_sum");
                        write_labels(&mut out, labels, None);
                        let _ = writeln!(out, " {}{ts}", format_value(h.sum));
                        let _ = write!(out, "{name}_count");
                        write_labels(&mut out, labels, None);
                        let _ = writeln!(out, " {}{ts}", h.count);
                    }
                }
            }
        }
        out
    }
}
