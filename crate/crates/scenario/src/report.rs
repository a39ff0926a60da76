//! Run reports: one tab-separated `field=value` record per line.

use std::collections::BTreeMap;
use std::fmt::Write as _;

/// One logged step of a run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LogEntry {
    pub index: usize,
    pub op: String,
    pub fields: Vec<(String, String)>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExpectationResult {
    pub key: String,
    pub expected: String,
    pub actual: Option<String>,
}

impl ExpectationResult {
    pub fn met(&self) -> bool {
        self.actual.as_deref() == Some(self.expected.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct RunReport {
    pub name: String,
    pub seed: u64,
    pub log: Vec<LogEntry>,
    pub metrics: BTreeMap<String, String>,
    pub expectations: Vec<ExpectationResult>,
    pub error: Option<String>,
}

impl RunReport {
    pub fn passed(&self) -> bool {
        self.error.is_none() && self.expectations.iter().all(ExpectationResult::met)
    }

    pub fn failed_expectations(&self) -> Vec<&ExpectationResult> {
        self.expectations.iter().filter(|e| !e.met()).collect()
    }

    pub fn metric(&self, key: &str) -> Option<&str> {
        self.metrics.get(key).map(String::as_str)
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        record(
            &mut out,
            "scenario",
            &[("name", self.name.as_str()), ("seed", &self.seed.to_string())],
        );
        for e in &self.log {
            let mut fields = vec![("index".to_string(), e.index.to_string()), ("op".to_string(), e.op.clone())];
            fields.extend(e.fields.iter().cloned());
            let borrowed: Vec<(&str, &str)> = fields.iter().map(|(k, v)| (k.as_str(), v.as_str())).collect();
            record(&mut out, "event", &borrowed);
        }
        for (k, v) in &self.metrics {
            record(&mut out, "metric", &[("key", k), ("value", v)]);
        }
        for x in &self.expectations {
            record(
                &mut out,
                "expect",
                &[
                    ("key", &x.key),
                    ("expected", &x.expected),
                    ("actual", x.actual.as_deref().unwrap_or("<missing>")),
                    ("status", if x.met() { "pass" } else { "fail" }),
                ],
            );
        }
        if let Some(err) = &self.error {
            record(&mut out, "error", &[("message", err)]);
        }
        let failed = self.failed_expectations().len();
        record(
            &mut out,
            "verdict",
            &[
                ("status", if self.passed() { "pass" } else { "fail" }),
                ("expectations", &self.expectations.len().to_string()),
                ("failed", &failed.to_string()),
            ],
        );
        out
    }
}

/// Tabs and newlines would break the line format.
pub fn clean(v: &str) -> String {
    v.replace(['\t', '\n', '\r'], " ")
}

fn record(out: &mut String, kind: &str, fields: &[(&str, &str)]) {
    out.push_str(kind);
    for (k, v) in fields {
        let _ = write!(out, "\t{}={}", clean(k), clean(v));
    }
    out.push('\n');
}
