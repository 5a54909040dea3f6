//! Expectation files: ordering and band assertions over result cells.
//!
//! One assertion per line, `#` starts a comment. A cell key is
//! `function/condition/kind`, where the condition may itself contain
//! slashes (`box/forward/limited/sparse`). Supported forms:
//!
//! ```text
//! box/forward/limited/sparse >= box/forward/limited/faithful + 0.10
//! piece/forward/unlimited/faithful >= 0.90
//! piece/forward/limited/robust in [0.40, 0.65]
//! box/stability/robust == 0
//! ```
//!
//! Comparisons use cell means.

use std::fmt;

use crate::error::{Error, Result};
use crate::experiments::ResultTable;

#[derive(Debug, Clone, PartialEq)]
enum Operand {
    Number(f64),
    Cell { key: String, offset: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Op {
    Ge,
    Le,
    Gt,
    Lt,
    Eq,
}

#[derive(Debug, Clone, PartialEq)]
enum Assertion {
    Compare { lhs: Operand, op: Op, rhs: Operand },
    Within { key: String, lo: f64, hi: f64 },
}

/// A parsed assertion with its source line.
#[derive(Debug, Clone, PartialEq)]
pub struct Expectation {
    pub line: usize,
    pub text: String,
    assertion: Assertion,
}

/// Outcome of one assertion.
#[derive(Debug, Clone, PartialEq)]
pub struct Verdict {
    pub line: usize,
    pub text: String,
    pub passed: bool,
    pub detail: String,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{tag} line {}: {} ({})", self.line, self.text, self.detail)
    }
}

/// All verdicts for one expectation file.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CheckReport {
    pub verdicts: Vec<Verdict>,
}

impl CheckReport {
    /// True when every assertion passed; an empty file passes vacuously.
    pub fn passed(&self) -> bool {
        self.verdicts.iter().all(|v| v.passed)
    }
}

fn parse_number(tok: &str, line: usize, source: &str) -> Result<f64> {
    tok.trim().parse::<f64>().map_err(|_| Error::Parse {
        source_name: source.into(),
        line,
        message: format!("`{tok}` is not a number"),
    })
}

fn parse_operand(tokens: &[&str], line: usize, source: &str) -> Result<Operand> {
    let err = |m: String| Error::Parse {
        source_name: source.into(),
        line,
        message: m,
    };
    match tokens {
        [] => Err(err("missing operand".into())),
        [single] => match single.parse::<f64>() {
            Ok(v) => Ok(Operand::Number(v)),
            Err(_) => Ok(Operand::Cell {
                key: check_key(single, line, source)?,
                offset: 0.0,
            }),
        },
        [key, sign, amount] if *sign == "+" || *sign == "-" => {
            let mut offset = parse_number(amount, line, source)?;
            if *sign == "-" {
                offset = -offset;
            }
            Ok(Operand::Cell {
                key: check_key(key, line, source)?,
                offset,
            })
        }
        other => Err(err(format!("cannot read operand `{}`", other.join(" ")))),
    }
}

fn check_key(key: &str, line: usize, source: &str) -> Result<String> {
    if key.split('/').filter(|s| !s.is_empty()).count() < 3 {
        return Err(Error::Parse {
            source_name: source.into(),
            line,
            message: format!("`{key}` is not a function/condition/kind key"),
        });
    }
    Ok(key.to_string())
}

/// Parses an expectation file. `source` names the file in errors.
pub fn parse_expectations(text: &str, source: &str) -> Result<Vec<Expectation>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let err = |m: String| Error::Parse {
            source_name: source.into(),
            line,
            message: m,
        };
        let tokens: Vec<&str> = body.split_whitespace().collect();
        let assertion = if tokens.get(1) == Some(&"in") {
            let rest = body.split_once(" in ").map(|(_, r)| r.trim()).unwrap_or_default();
            let inner = rest
                .strip_prefix('[')
                .and_then(|r| r.strip_suffix(']'))
                .ok_or_else(|| err("band must look like `[lo, hi]`".into()))?;
            let (lo, hi) = inner
                .split_once(',')
                .ok_or_else(|| err("band needs two comma-separated bounds".into()))?;
            let (lo, hi) = (parse_number(lo, line, source)?, parse_number(hi, line, source)?);
            if lo > hi {
                return Err(err("band lower bound exceeds upper bound".into()));
            }
            Assertion::Within {
                key: check_key(tokens[0], line, source)?,
                lo,
                hi,
            }
        } else {
            let pos = tokens
                .iter()
                .position(|t| matches!(*t, ">=" | "<=" | ">" | "<" | "=="))
                .ok_or_else(|| err("expected a comparison operator".into()))?;
            let op = match tokens[pos] {
                ">=" => Op::Ge,
                "<=" => Op::Le,
                ">" => Op::Gt,
                "<" => Op::Lt,
                _ => Op::Eq,
            };
            Assertion::Compare {
                lhs: parse_operand(&tokens[..pos], line, source)?,
                op,
                rhs: parse_operand(&tokens[pos + 1..], line, source)?,
            }
        };
        out.push(Expectation {
            line,
            text: body.to_string(),
            assertion,
        });
    }
    Ok(out)
}

fn resolve(table: &ResultTable, operand: &Operand) -> std::result::Result<f64, String> {
    match operand {
        Operand::Number(v) => Ok(*v),
        Operand::Cell { key, offset } => table
            .lookup(key)
            .map(|s| s.mean + offset)
            .ok_or_else(|| format!("missing key {key}")),
    }
}

/// Evaluates every assertion against the table.
pub fn check_expectations(table: &ResultTable, expectations: &[Expectation]) -> CheckReport {
    let verdicts = expectations
        .iter()
        .map(|e| {
            let outcome = match &e.assertion {
                Assertion::Compare { lhs, op, rhs } => resolve(table, lhs).and_then(|l| {
                    resolve(table, rhs).map(|r| {
                        let ok = match op {
                            Op::Ge => l >= r,
                            Op::Le => l <= r,
                            Op::Gt => l > r,
                            Op::Lt => l < r,
                            Op::Eq => l == r,
                        };
                        (ok, format!("{l:.4} vs {r:.4}"))
                    })
                }),
                Assertion::Within { key, lo, hi } => resolve(
                    table,
                    &Operand::Cell {
                        key: key.clone(),
                        offset: 0.0,
                    },
                )
                .map(|v| (v >= *lo && v <= *hi, format!("{v:.4} in [{lo}, {hi}]"))),
            };
            let (passed, detail) = outcome.unwrap_or_else(|m| (false, m));
            Verdict {
                line: e.line,
                text: e.text.clone(),
                passed,
                detail,
            }
        })
        .collect();
    CheckReport { verdicts }
}
