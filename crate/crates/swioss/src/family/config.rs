//! Config file format for system families.
//!
//! The format is line-oriented:
//!
//! ```text
//! # comment
//! edges    = [[1, 2], [2, 1]]       # global keys may appear at the top
//! delta    = 3.5
//! Delta    = 4.0
//! lambda_s = 3.5
//! lambda_u = 0.73
//! mu       = 2.0
//! gamma1   = "2*r*r"
//! gamma2   = "2*r*r"
//! alpha_lower = "0.5*r*r"
//! alpha_upper = "r*r"
//! # optional: delta_check / Delta_hat (declared dwell pair), inputs (input
//! # dimension when no f references any v), a [global] header
//!
//! [system 1]
//! f = ["-2*x1 + sin(x1 - x2)", "-2*x2 + sin(x2 - x1) + 0.5*v1"]
//! h = ["x1 - x2"]
//! class = stable
//! V = "0.5*(x1*x1 + x2*x2)"
//! ```
//!
//! Values are decimal numbers, double-quoted expression strings, the bare
//! words `stable` / `unstable`, or (nested) `[...]` lists of those.

use std::collections::BTreeMap;

use thiserror::Error;

use super::{FamilyError, KFunction, StabilityClass, Subsystem, SwitchGraph, SystemFamily, VFunction};
use crate::expr::Expr;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: {msg}")]
    Line { line: usize, msg: String },
    #[error("missing required key `{key}`{scope}")]
    MissingKey { key: &'static str, scope: String },
    #[error("line {line}: key `{key}` has the wrong type ({expected} expected)")]
    WrongType {
        line: usize,
        key: String,
        expected: &'static str,
    },
    #[error("duplicate section [system {index}]")]
    DuplicateSystem { index: usize },
    #[error("line {line}: duplicate key `{key}`")]
    DuplicateKey { line: usize, key: String },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
}

#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Num(f64),
    Str(String),
    Word(String),
    List(Vec<Value>),
}

#[derive(Debug, Default)]
pub struct RawConfig {
    pub global: BTreeMap<String, (Value, usize)>,
    pub systems: Vec<(usize, BTreeMap<String, (Value, usize)>)>,
}

/// Parses the textual format into raw key/value sections.
pub fn parse_config(text: &str) -> Result<RawConfig, ConfigError> {
    let mut raw = RawConfig::default();
    // None = global scope; Some(k) = index into raw.systems.
    let mut scope: Option<usize> = None;

    for (lineno, line) in text.lines().enumerate() {
        let line_no = lineno + 1;
        let line = strip_comment(line).trim();
        if line.is_empty() {
            continue;
        }
        if let Some(header) = line.strip_prefix('[') {
            let header = header.strip_suffix(']').ok_or(ConfigError::Line {
                line: line_no,
                msg: "unterminated section header".into(),
            })?;
            let header = header.trim();
            if header == "global" {
                scope = None;
                continue;
            }
            let idx_text = header.strip_prefix("system").ok_or(ConfigError::Line {
                line: line_no,
                msg: format!("unknown section `[{header}]` (expected [global] or [system N])"),
            })?;
            let index: usize = idx_text.trim().parse().map_err(|_| ConfigError::Line {
                line: line_no,
                msg: format!("bad subsystem index `{}`", idx_text.trim()),
            })?;
            if raw.systems.iter().any(|(i, _)| *i == index) {
                return Err(ConfigError::DuplicateSystem { index });
            }
            raw.systems.push((index, BTreeMap::new()));
            scope = Some(raw.systems.len() - 1);
            continue;
        }

        let eq = line.find('=').ok_or(ConfigError::Line {
            line: line_no,
            msg: "expected `key = value`".into(),
        })?;
        let key = line[..eq].trim().to_string();
        let value_text = line[eq + 1..].trim();
        if key.is_empty() {
            return Err(ConfigError::Line {
                line: line_no,
                msg: "empty key".into(),
            });
        }
        let value = parse_value(value_text, line_no)?;
        let map = match scope {
            None => &mut raw.global,
            Some(k) => &mut raw.systems[k].1,
        };
        if map.insert(key.clone(), (value, line_no)).is_some() {
            return Err(ConfigError::DuplicateKey { line: line_no, key });
        }
    }
    Ok(raw)
}

fn strip_comment(line: &str) -> &str {
    // `#` starts a comment unless inside a quoted string.
    let mut in_str = false;
    for (i, c) in line.char_indices() {
        match c {
            '"' => in_str = !in_str,
            '#' if !in_str => return &line[..i],
            _ => {}
        }
    }
    line
}

fn parse_value(text: &str, line: usize) -> Result<Value, ConfigError> {
    let mut cur = Cursor { text, pos: 0, line };
    let v = cur.parse_value()?;
    cur.skip_ws();
    if cur.pos != text.len() {
        return Err(ConfigError::Line {
            line,
            msg: format!("trailing characters after value: `{}`", &text[cur.pos..]),
        });
    }
    Ok(v)
}

struct Cursor<'a> {
    text: &'a str,
    pos: usize,
    line: usize,
}

impl<'a> Cursor<'a> {
    fn skip_ws(&mut self) {
        while self.pos < self.text.len() && self.text.as_bytes()[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn err(&self, msg: impl Into<String>) -> ConfigError {
        ConfigError::Line {
            line: self.line,
            msg: msg.into(),
        }
    }

    fn parse_value(&mut self) -> Result<Value, ConfigError> {
        self.skip_ws();
        let bytes = self.text.as_bytes();
        match bytes.get(self.pos) {
            None => Err(self.err("missing value")),
            Some(b'"') => {
                self.pos += 1;
                let start = self.pos;
                while self.pos < bytes.len() && bytes[self.pos] != b'"' {
                    self.pos += 1;
                }
                if self.pos >= bytes.len() {
                    return Err(self.err("unterminated string"));
                }
                let s = self.text[start..self.pos].to_string();
                self.pos += 1;
                Ok(Value::Str(s))
            }
            Some(b'[') => {
                self.pos += 1;
                let mut items = Vec::new();
                loop {
                    self.skip_ws();
                    if bytes.get(self.pos) == Some(&b']') {
                        self.pos += 1;
                        return Ok(Value::List(items));
                    }
                    items.push(self.parse_value()?);
                    self.skip_ws();
                    match bytes.get(self.pos) {
                        Some(b',') => {
                            self.pos += 1;
                        }
                        Some(b']') => {}
                        _ => return Err(self.err("expected `,` or `]` in list")),
                    }
                }
            }
            Some(c) if c.is_ascii_digit() || *c == b'-' || *c == b'+' || *c == b'.' => {
                let start = self.pos;
                while self.pos < bytes.len()
                    && matches!(bytes[self.pos], b'0'..=b'9' | b'.' | b'-' | b'+' | b'e' | b'E')
                {
                    self.pos += 1;
                }
                let text = &self.text[start..self.pos];
                text.parse::<f64>()
                    .map(Value::Num)
                    .map_err(|_| self.err(format!("bad number `{text}`")))
            }
            Some(c) if c.is_ascii_alphabetic() || *c == b'_' => {
                let start = self.pos;
                while self.pos < bytes.len()
                    && (bytes[self.pos].is_ascii_alphanumeric() || bytes[self.pos] == b'_' || bytes[self.pos] == b'-')
                {
                    self.pos += 1;
                }
                Ok(Value::Word(self.text[start..self.pos].to_string()))
            }
            Some(c) => Err(self.err(format!("unexpected `{}`", *c as char))),
        }
    }
}

const GLOBAL_KEYS: &[&str] = &[
    "edges",
    "delta",
    "Delta",
    "delta_check",
    "Delta_hat",
    "lambda_s",
    "lambda_u",
    "mu",
    "gamma1",
    "gamma2",
    "alpha_lower",
    "alpha_upper",
    "inputs",
    "name",
];
const SYSTEM_KEYS: &[&str] = &["f", "h", "class", "V"];

/// Builds a validated family out of a raw config.
pub fn family_from_raw(raw: RawConfig) -> Result<SystemFamily, FamilyError> {
    for (key, (_, line)) in &raw.global {
        if !GLOBAL_KEYS.contains(&key.as_str()) {
            return Err(ConfigError::UnknownKey {
                line: *line,
                key: key.clone(),
            }
            .into());
        }
    }

    let num = |key: &'static str| -> Result<f64, FamilyError> {
        match raw.global.get(key) {
            Some((Value::Num(n), _)) => Ok(*n),
            Some((_, line)) => Err(ConfigError::WrongType {
                line: *line,
                key: key.into(),
                expected: "number",
            }
            .into()),
            None => Err(ConfigError::MissingKey {
                key,
                scope: String::new(),
            }
            .into()),
        }
    };
    let opt_num = |key: &str| -> Result<Option<f64>, FamilyError> {
        match raw.global.get(key) {
            Some((Value::Num(n), _)) => Ok(Some(*n)),
            Some((_, line)) => Err(ConfigError::WrongType {
                line: *line,
                key: key.into(),
                expected: "number",
            }
            .into()),
            None => Ok(None),
        }
    };
    let gain = |key: &'static str| -> Result<KFunction, FamilyError> {
        match raw.global.get(key) {
            Some((Value::Str(s), _)) => KFunction::parse(s).map_err(|source| FamilyError::Expr {
                context: key.into(),
                source,
            }),
            Some((_, line)) => Err(ConfigError::WrongType {
                line: *line,
                key: key.into(),
                expected: "quoted expression",
            }
            .into()),
            None => Err(ConfigError::MissingKey {
                key,
                scope: String::new(),
            }
            .into()),
        }
    };

    let dwell_min = num("delta")?;
    let dwell_max = num("Delta")?;
    let lambda_s = num("lambda_s")?;
    let lambda_u = num("lambda_u")?;
    let mu = num("mu")?;
    let gamma1 = gain("gamma1")?;
    let gamma2 = gain("gamma2")?;
    let alpha_lower = gain("alpha_lower")?;
    let alpha_upper_raw = gain("alpha_upper")?;
    let declared_pair = match (opt_num("delta_check")?, opt_num("Delta_hat")?) {
        (Some(dc), Some(dh)) => Some((dc, dh)),
        (None, None) => None,
        _ => {
            return Err(FamilyError::BadDwellWindow {
                detail: "delta_check and Delta_hat must be given together".into(),
            })
        }
    };
    let explicit_m = opt_num("inputs")?.map(|n| n as usize);
    let name = match raw.global.get("name") {
        Some((Value::Str(s), _)) | Some((Value::Word(s), _)) => Some(s.clone()),
        _ => None,
    };

    let edges = match raw.global.get("edges") {
        Some((Value::List(items), line)) => {
            let mut edges = Vec::new();
            for item in items {
                match item {
                    Value::List(pair) if pair.len() == 2 => {
                        let get = |v: &Value| -> Option<usize> {
                            match v {
                                Value::Num(n) if *n >= 1.0 && n.fract() == 0.0 => Some(*n as usize),
                                _ => None,
                            }
                        };
                        match (get(&pair[0]), get(&pair[1])) {
                            (Some(p), Some(q)) => edges.push((p, q)),
                            _ => {
                                return Err(ConfigError::WrongType {
                                    line: *line,
                                    key: "edges".into(),
                                    expected: "list of [p, q] integer pairs",
                                }
                                .into())
                            }
                        }
                    }
                    _ => {
                        return Err(ConfigError::WrongType {
                            line: *line,
                            key: "edges".into(),
                            expected: "list of [p, q] integer pairs",
                        }
                        .into())
                    }
                }
            }
            edges
        }
        Some((_, line)) => {
            return Err(ConfigError::WrongType {
                line: *line,
                key: "edges".into(),
                expected: "list",
            }
            .into())
        }
        None => Vec::new(),
    };

    let mut subsystems = Vec::new();
    let mut v_funcs: Vec<(usize, VFunction)> = Vec::new();
    for (index, keys) in &raw.systems {
        for (key, (_, line)) in keys {
            if !SYSTEM_KEYS.contains(&key.as_str()) {
                return Err(ConfigError::UnknownKey {
                    line: *line,
                    key: key.clone(),
                }
                .into());
            }
        }
        let expr_list = |key: &'static str| -> Result<Vec<Expr>, FamilyError> {
            match keys.get(key) {
                Some((Value::List(items), line)) => {
                    let mut out = Vec::new();
                    for (k, item) in items.iter().enumerate() {
                        match item {
                            Value::Str(s) => out.push(Expr::parse(s).map_err(|source| FamilyError::Expr {
                                context: format!("{key}{index}[{}]", k + 1),
                                source,
                            })?),
                            _ => {
                                return Err(ConfigError::WrongType {
                                    line: *line,
                                    key: key.into(),
                                    expected: "list of quoted expressions",
                                }
                                .into())
                            }
                        }
                    }
                    Ok(out)
                }
                Some((_, line)) => Err(ConfigError::WrongType {
                    line: *line,
                    key: key.into(),
                    expected: "list of quoted expressions",
                }
                .into()),
                None => Err(ConfigError::MissingKey {
                    key,
                    scope: format!(" in [system {index}]"),
                }
                .into()),
            }
        };
        let dynamics = expr_list("f")?;
        let output = expr_list("h")?;
        let class = match keys.get("class") {
            Some((Value::Word(w), line)) => match w.as_str() {
                "stable" => StabilityClass::Stable,
                "unstable" => StabilityClass::Unstable,
                _ => {
                    return Err(ConfigError::WrongType {
                        line: *line,
                        key: "class".into(),
                        expected: "`stable` or `unstable`",
                    }
                    .into())
                }
            },
            Some((_, line)) => {
                return Err(ConfigError::WrongType {
                    line: *line,
                    key: "class".into(),
                    expected: "`stable` or `unstable`",
                }
                .into())
            }
            None => {
                return Err(ConfigError::MissingKey {
                    key: "class",
                    scope: format!(" in [system {index}]"),
                }
                .into())
            }
        };
        let v = match keys.get("V") {
            Some((Value::Str(s), _)) => {
                let e = Expr::parse(s).map_err(|source| FamilyError::Expr {
                    context: format!("V{index}"),
                    source,
                })?;
                VFunction::Expr(e)
            }
            Some((_, line)) => {
                return Err(ConfigError::WrongType {
                    line: *line,
                    key: "V".into(),
                    expected: "quoted expression",
                }
                .into())
            }
            None => {
                return Err(ConfigError::MissingKey {
                    key: "V",
                    scope: format!(" in [system {index}]"),
                }
                .into())
            }
        };
        subsystems.push(Subsystem {
            index: *index,
            dynamics,
            output,
            class,
        });
        v_funcs.push((*index, v));
    }

    v_funcs.sort_by_key(|(i, _)| *i);
    let lyapunov = super::LyapunovData {
        v: v_funcs.into_iter().map(|(_, v)| v).collect(),
        lambda_s,
        lambda_u,
        mu,
        gamma1,
        gamma2,
        alpha_lower,
        alpha_upper_raw,
    };

    SystemFamily::build(
        name,
        subsystems,
        SwitchGraph::new(edges),
        lyapunov,
        dwell_min,
        dwell_max,
        declared_pair,
        explicit_m,
    )
}
