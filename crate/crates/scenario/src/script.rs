//! Scenario files.
//!
//! A scenario is plain text. `key = value` lines configure the market,
//! `expect key = value` lines state outcomes, and every other non-blank,
//! non-comment line is an event: an operation name followed by
//! `key=value` arguments.
//!
//! ```text
//! name = lazy-tower
//! seed = 7
//! tower name=t1 bits=11 quote=100000:5 behavior=lazy
//! channel fund=4000 alice=2000 bob=2000
//! expect breaches_proven = 1
//! ```

use std::collections::BTreeMap;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ScriptError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("event {index} ({op}): {message}")]
    Event {
        index: usize,
        op: String,
        message: String,
    },
}

/// One scripted step.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Event {
    pub op: String,
    pub args: BTreeMap<String, String>,
    pub line: usize,
}

impl Event {
    fn err(&self, index: usize, message: impl Into<String>) -> ScriptError {
        ScriptError::Event {
            index,
            op: self.op.clone(),
            message: message.into(),
        }
    }

    pub fn get<T: FromStr>(&self, index: usize, key: &str) -> Result<Option<T>, ScriptError> {
        match self.args.get(key) {
            None => Ok(None),
            Some(raw) => raw
                .parse()
                .map(Some)
                .map_err(|_| self.err(index, format!("cannot parse {key}={raw}"))),
        }
    }

    pub fn require<T: FromStr>(&self, index: usize, key: &str) -> Result<T, ScriptError> {
        self.get(index, key)?
            .ok_or_else(|| self.err(index, format!("missing argument {key}")))
    }

    pub fn or<T: FromStr>(&self, index: usize, key: &str, default: T) -> Result<T, ScriptError> {
        Ok(self.get(index, key)?.unwrap_or(default))
    }

    pub fn fail(&self, index: usize, message: impl Into<String>) -> ScriptError {
        self.err(index, message)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Scenario {
    pub name: String,
    pub seed: u64,
    pub config: BTreeMap<String, String>,
    pub events: Vec<Event>,
    pub expectations: BTreeMap<String, String>,
}

impl Scenario {
    pub fn parse(text: &str) -> Result<Self, ScriptError> {
        let mut config = BTreeMap::new();
        let mut events = Vec::new();
        let mut expectations = BTreeMap::new();

        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let perr = |message: String| ScriptError::Parse {
                line: line_no,
                message,
            };
            if let Some(rest) = line.strip_prefix("expect ") {
                let (k, v) = split_assignment(rest).ok_or_else(|| perr(format!("bad expectation `{rest}`")))?;
                expectations.insert(k, v);
                continue;
            }
            let first = line.split_whitespace().next().unwrap_or("");
            if !first.contains('=') && line.contains(" = ") {
                let (k, v) = split_assignment(line).ok_or_else(|| perr(format!("bad setting `{line}`")))?;
                config.insert(k, v);
                continue;
            }
            let mut parts = line.split_whitespace();
            let op = parts.next().expect("nonempty line has a token").to_string();
            let mut args = BTreeMap::new();
            for tok in parts {
                let (k, v) = tok
                    .split_once('=')
                    .ok_or_else(|| perr(format!("argument `{tok}` is not key=value")))?;
                args.insert(k.to_string(), v.to_string());
            }
            events.push(Event {
                op,
                args,
                line: line_no,
            });
        }

        let name = config
            .get("name")
            .cloned()
            .unwrap_or_else(|| "unnamed".to_string());
        let seed = match config.get("seed") {
            None => 0,
            Some(s) => s.parse().map_err(|_| ScriptError::Parse {
                line: 0,
                message: format!("seed `{s}` is not an integer"),
            })?,
        };
        Ok(Scenario {
            name,
            seed,
            config,
            events,
            expectations,
        })
    }

    pub fn setting<T: FromStr>(&self, key: &str, default: T) -> Result<T, ScriptError> {
        match self.config.get(key) {
            None => Ok(default),
            Some(raw) => raw.parse().map_err(|_| ScriptError::Parse {
                line: 0,
                message: format!("setting {key} = {raw} has the wrong type"),
            }),
        }
    }
}

fn split_assignment(s: &str) -> Option<(String, String)> {
    let (k, v) = s.split_once('=')?;
    let k = k.trim();
    let v = v.trim();
    (!k.is_empty()).then(|| (k.to_string(), v.to_string()))
}

/// Builtin scenarios, shipped as data files.
pub const BUILTINS: &[(&str, &str)] = &[
    ("honest-lifecycle", include_str!("../scenarios/honest-lifecycle.scn")),
    ("honest-tower", include_str!("../scenarios/honest-tower.scn")),
    ("lazy-tower", include_str!("../scenarios/lazy-tower.scn")),
    ("settled", include_str!("../scenarios/settled.scn")),
    ("flood-store", include_str!("../scenarios/flood-store.scn")),
    ("multi-tower", include_str!("../scenarios/multi-tower.scn")),
    ("bribery", include_str!("../scenarios/bribery.scn")),
    ("spam-tickets", include_str!("../scenarios/spam-tickets.scn")),
];

pub fn builtin(name: &str) -> Option<&'static str> {
    BUILTINS.iter().find(|(n, _)| *n == name).map(|(_, t)| *t)
}
