//! Runs an external SMT optimizer on an emitted script and reads the model
//! back into a [`Solution`].

use std::collections::HashMap;
use std::io::{Read, Write};
use std::process::{Command, Stdio};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Solution;
use crate::price::Price;
use crate::sexpr::{parse_all, SExpr};
use crate::smt::encoder::SmtScript;

/// Environment variable naming the solver executable.
pub const SOLVER_ENV: &str = "NEURODEPLOY_SOLVER";
pub const DEFAULT_SOLVER: &str = "z3";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub program: String,
    #[serde(default)]
    pub args: Vec<String>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            program: DEFAULT_SOLVER.to_string(),
            args: Vec::new(),
        }
    }
}

impl SolverConfig {
    /// `$NEURODEPLOY_SOLVER` if set, otherwise `z3` from `PATH`.
    pub fn from_env() -> Self {
        match std::env::var(SOLVER_ENV) {
            Ok(p) if !p.trim().is_empty() => SolverConfig {
                program: p,
                args: Vec::new(),
            },
            _ => SolverConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolveStatus {
    Sat,
    Unsat,
    Timeout,
    Error,
}

impl std::fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SolveStatus::Sat => "sat",
            SolveStatus::Unsat => "unsat",
            SolveStatus::Timeout => "timeout",
            SolveStatus::Error => "error",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverOutcome {
    pub status: SolveStatus,
    pub solution: Option<Solution>,
    pub objective_price: Option<Price>,
    /// Seconds spent in the child process.
    pub wall_time: f64,
    /// Solver output when the status is `error`.
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub diagnostics: String,
}

/// A value from a solver model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelValue {
    Bool(bool),
    Int(i128),
    /// Exact rational `num / den` with `den > 0`.
    Real(i128, i128),
}

impl ModelValue {
    pub fn as_int(self) -> Option<i128> {
        match self {
            ModelValue::Int(v) => Some(v),
            ModelValue::Real(n, d) if n % d == 0 => Some(n / d),
            ModelValue::Bool(b) => Some(b as i128),
            ModelValue::Real(..) => None,
        }
    }

    /// Value as a price, rounding to the nearest thousandth.
    pub fn as_price(self) -> Option<Price> {
        let (n, d) = match self {
            ModelValue::Int(v) => (v, 1),
            ModelValue::Real(n, d) => (n, d),
            ModelValue::Bool(_) => return None,
        };
        if n < 0 {
            return None;
        }
        let millis = (n * 1000 * 2 + d) / (2 * d);
        u64::try_from(millis).ok().map(Price::from_millis)
    }
}

fn gcd(a: i128, b: i128) -> i128 {
    if b == 0 {
        a.abs()
    } else {
        gcd(b, a % b)
    }
}

fn rational(n: i128, d: i128) -> Option<ModelValue> {
    if d == 0 {
        return None;
    }
    let g = gcd(n, d).max(1);
    let (n, d) = (n / g, d / g);
    Some(if d < 0 {
        ModelValue::Real(-n, -d)
    } else {
        ModelValue::Real(n, d)
    })
}

fn decimal_literal(s: &str) -> Option<ModelValue> {
    if let Some((int, frac)) = s.split_once('.') {
        if int.is_empty() || !int.bytes().all(|b| b.is_ascii_digit()) {
            return None;
        }
        if !frac.bytes().all(|b| b.is_ascii_digit()) {
            return None;
        }
        let den = 10i128.checked_pow(frac.len() as u32)?;
        let digits = format!("{int}{frac}");
        rational(digits.parse().ok()?, den)
    } else if !s.is_empty() && s.bytes().all(|b| b.is_ascii_digit()) {
        s.parse().ok().map(ModelValue::Int)
    } else {
        None
    }
}

/// Evaluates the literal forms solvers print for Int, Real and Bool values:
/// `3`, `2.5`, `(- 3)`, `(/ 8403.0 1000.0)`, `(- (/ 1 2))`, `true`.
pub fn parse_value(e: &SExpr) -> Option<ModelValue> {
    match e {
        SExpr::Atom(a) => match a.as_str() {
            "true" => Some(ModelValue::Bool(true)),
            "false" => Some(ModelValue::Bool(false)),
            other => decimal_literal(other),
        },
        SExpr::List(items) => match items.as_slice() {
            [SExpr::Atom(op), x] if op == "-" => match parse_value(x)? {
                ModelValue::Int(v) => Some(ModelValue::Int(-v)),
                ModelValue::Real(n, d) => Some(ModelValue::Real(-n, d)),
                ModelValue::Bool(_) => None,
            },
            [SExpr::Atom(op), x, y] if op == "/" => {
                let (xn, xd) = to_ratio(parse_value(x)?)?;
                let (yn, yd) = to_ratio(parse_value(y)?)?;
                rational(xn * yd, xd * yn)
            }
            [SExpr::Atom(op), x] if op == "to_real" => {
                let (n, d) = to_ratio(parse_value(x)?)?;
                rational(n, d)
            }
            _ => None,
        },
    }
}

fn to_ratio(v: ModelValue) -> Option<(i128, i128)> {
    match v {
        ModelValue::Int(i) => Some((i, 1)),
        ModelValue::Real(n, d) => Some((n, d)),
        ModelValue::Bool(_) => None,
    }
}

/// Parsed solver response.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SolverResponse {
    pub status: Option<String>,
    pub model: HashMap<String, ModelValue>,
    /// Objective values in the order the solver printed them.
    pub objectives: Vec<Option<ModelValue>>,
    pub errors: Vec<String>,
}

fn parse_define_fun(e: &SExpr) -> Option<(String, Option<ModelValue>)> {
    let items = e.list()?;
    if items.first()?.atom()? != "define-fun" || items.len() != 5 {
        return None;
    }
    let name = items[1].atom()?.to_string();
    // Only nullary definitions are model constants.
    if !items[2].list()?.is_empty() {
        return None;
    }
    Some((name, parse_value(&items[4])))
}

/// Parses a full solver transcript (stdout).
pub fn parse_response(raw: &str) -> Result<SolverResponse> {
    let exprs = parse_all(raw).map_err(|e| Error::SolverOutput {
        reason: e.to_string(),
        raw: raw.to_string(),
    })?;
    let mut resp = SolverResponse::default();
    for e in &exprs {
        match e {
            SExpr::Atom(a) if matches!(a.as_str(), "sat" | "unsat" | "unknown") => {
                if resp.status.is_none() {
                    resp.status = Some(a.clone());
                }
            }
            SExpr::List(items) => match e.head() {
                Some("error") => resp.errors.push(e.to_string()),
                Some("objectives") => {
                    for entry in &items[1..] {
                        let value = entry.list().and_then(|l| l.last()).and_then(parse_value);
                        resp.objectives.push(value);
                    }
                }
                Some("model") | None | Some("define-fun") => {
                    let defs: &[SExpr] = if e.head() == Some("model") {
                        &items[1..]
                    } else if e.head() == Some("define-fun") {
                        std::slice::from_ref(e)
                    } else {
                        items
                    };
                    for d in defs {
                        if let Some((name, value)) = parse_define_fun(d) {
                            let value = value.ok_or_else(|| Error::SolverOutput {
                                reason: format!("cannot read value of `{name}`"),
                                raw: raw.to_string(),
                            })?;
                            resp.model.insert(name, value);
                        }
                    }
                }
                _ => {}
            },
            _ => {}
        }
    }
    Ok(resp)
}

/// Builds a [`Solution`] from a model using the script's variable index.
pub fn read_solution(script: &SmtScript, model: &HashMap<String, ModelValue>) -> Result<Solution> {
    let vars = &script.var_index;
    let int = |name: &str| -> Result<i128> {
        match model.get(name) {
            Some(v) => v.as_int().ok_or_else(|| Error::SolverOutput {
                reason: format!("`{name}` is not integral"),
                raw: String::new(),
            }),
            None => Err(Error::SolverOutput {
                reason: format!("model lacks `{name}`"),
                raw: String::new(),
            }),
        }
    };
    let bit = |name: &str| -> Result<u8> {
        let v = int(name)?;
        u8::try_from(v).map_err(|_| Error::SolverOutput {
            reason: format!("`{name}` = {v} is not binary"),
            raw: String::new(),
        })
    };
    let a = vars
        .assign
        .iter()
        .map(|row| row.iter().map(|n| bit(n)).collect::<Result<Vec<u8>>>())
        .collect::<Result<Vec<_>>>()?;
    let t = vars
        .type_var
        .iter()
        .map(|n| {
            let v = int(n)?;
            u32::try_from(v).map_err(|_| Error::SolverOutput {
                reason: format!("`{n}` = {v} is not an offer id"),
                raw: String::new(),
            })
        })
        .collect::<Result<Vec<u32>>>()?;
    let v = vars.occupancy.iter().map(|n| bit(n)).collect::<Result<Vec<u8>>>()?;
    let price_total = t
        .iter()
        .filter(|&&o| o != 0)
        .map(|&o| {
            script
                .offers
                .iter()
                .find(|off| off.id == o)
                .map(|off| off.price)
                .ok_or_else(|| Error::SolverOutput {
                    reason: format!("model selects unknown offer {o}"),
                    raw: String::new(),
                })
        })
        .sum::<Result<Price>>()?;
    Ok(Solution { a, t, v, price_total })
}

/// Runs the solver on `script`, killing it once `deadline` elapses.
pub fn solve(script: &SmtScript, deadline: Duration, config: &SolverConfig) -> Result<SolverOutcome> {
    if deadline.is_zero() {
        return Err(Error::InvalidArgument("deadline must be positive".into()));
    }
    let mut file = tempfile::Builder::new()
        .prefix("neurodeploy-")
        .suffix(".smt2")
        .tempfile()
        .map_err(|e| Error::io(std::env::temp_dir(), e))?;
    file.write_all(script.text.as_bytes())
        .and_then(|_| file.flush())
        .map_err(|e| Error::io(file.path(), e))?;

    let started = Instant::now();
    let mut child = Command::new(&config.program)
        .args(&config.args)
        .arg(file.path())
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::SolverMissing(config.program.clone()),
            _ => Error::io(&config.program, e),
        })?;
    let mut stdout = child.stdout.take().expect("piped stdout");
    let mut stderr = child.stderr.take().expect("piped stderr");
    let out_reader = thread::spawn(move || {
        let mut s = String::new();
        let _ = stdout.read_to_string(&mut s);
        s
    });
    let err_reader = thread::spawn(move || {
        let mut s = String::new();
        let _ = stderr.read_to_string(&mut s);
        s
    });

    let exit = loop {
        if let Some(status) = child.try_wait().map_err(|e| Error::io(&config.program, e))? {
            break Some(status);
        }
        let elapsed = started.elapsed();
        if elapsed >= deadline {
            let _ = child.kill();
            let _ = child.wait();
            break None;
        }
        thread::sleep((deadline - elapsed).min(Duration::from_millis(2)));
    };
    let wall_time = started.elapsed().as_secs_f64();
    let raw = out_reader.join().unwrap_or_default();
    let raw_err = err_reader.join().unwrap_or_default();

    if exit.is_none() {
        return Ok(SolverOutcome {
            status: SolveStatus::Timeout,
            solution: None,
            objective_price: None,
            wall_time,
            diagnostics: String::new(),
        });
    }

    let resp = parse_response(&raw)?;
    let outcome = |status, solution, objective_price, diagnostics| SolverOutcome {
        status,
        solution,
        objective_price,
        wall_time,
        diagnostics,
    };
    match resp.status.as_deref() {
        Some("sat") => {
            let solution = read_solution(script, &resp.model).map_err(|e| match e {
                Error::SolverOutput { reason, .. } => Error::SolverOutput {
                    reason,
                    raw: raw.clone(),
                },
                other => other,
            })?;
            let objective_price = match resp.objectives.last() {
                Some(Some(v)) => Some(v.as_price().ok_or_else(|| Error::SolverOutput {
                    reason: "price objective is not a non-negative number".into(),
                    raw: raw.clone(),
                })?),
                Some(None) => {
                    return Err(Error::SolverOutput {
                        reason: "unreadable objective value".into(),
                        raw,
                    })
                }
                None => None,
            };
            if let Some(p) = objective_price {
                if p != solution.price_total {
                    return Err(Error::SolverOutput {
                        reason: format!("objective {p} disagrees with leased price {}", solution.price_total),
                        raw,
                    });
                }
            }
            Ok(outcome(
                SolveStatus::Sat,
                Some(solution),
                objective_price,
                String::new(),
            ))
        }
        Some("unsat") => Ok(outcome(SolveStatus::Unsat, None, None, String::new())),
        Some(_) => Ok(outcome(SolveStatus::Error, None, None, format!("{raw}{raw_err}"))),
        None if !resp.errors.is_empty() || !raw_err.is_empty() => {
            Ok(outcome(SolveStatus::Error, None, None, format!("{raw}{raw_err}")))
        }
        None => Err(Error::SolverOutput {
            reason: "no sat/unsat line".into(),
            raw,
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(s: &str) -> Option<ModelValue> {
        parse_value(&parse_all(s).unwrap()[0])
    }

    #[test]
    fn value_forms() {
        assert_eq!(v("3"), Some(ModelValue::Int(3)));
        assert_eq!(v("(- 3)"), Some(ModelValue::Int(-3)));
        assert_eq!(v("2.5"), Some(ModelValue::Real(5, 2)));
        assert_eq!(v("(/ 8403.0 1000.0)"), Some(ModelValue::Real(8403, 1000)));
        assert_eq!(v("(- (/ 1 2))"), Some(ModelValue::Real(-1, 2)));
        assert_eq!(v("(/ (- 3) 6)"), Some(ModelValue::Real(-1, 2)));
        assert_eq!(v("true"), Some(ModelValue::Bool(true)));
        assert_eq!(v("foo"), None);
        assert_eq!(
            v("(/ 8403.0 1000.0)").unwrap().as_price(),
            Some(Price::from_millis(8403))
        );
        assert_eq!(v("0.093").unwrap().as_price(), Some(Price::from_millis(93)));
        assert_eq!(v("4.0").unwrap().as_int(), Some(4));
    }

    #[test]
    fn response_z3_style() {
        let raw = "sat\n(\n  (define-fun a11 () Int\n    1)\n  (define-fun p () Real\n    (/ 8403.0 1000.0))\n  (define-fun d () Bool true)\n)\n(objectives\n ( 0)\n ((+ 0 p) (/ 8403.0 1000.0))\n)\n";
        let r = parse_response(raw).unwrap();
        assert_eq!(r.status.as_deref(), Some("sat"));
        assert_eq!(r.model["a11"], ModelValue::Int(1));
        assert_eq!(r.model["p"], ModelValue::Real(8403, 1000));
        assert_eq!(r.model["d"], ModelValue::Bool(true));
        assert_eq!(r.objectives.len(), 2);
        assert_eq!(r.objectives[1].unwrap().as_price(), Some(Price::from_millis(8403)));
    }

    #[test]
    fn response_model_keyword_and_unsat() {
        let r = parse_response("sat\n(model (define-fun x () Int (- 2)))").unwrap();
        assert_eq!(r.model["x"], ModelValue::Int(-2));
        let r = parse_response("unsat\n(error \"line 9 column 10: model is not available\")\n").unwrap();
        assert_eq!(r.status.as_deref(), Some("unsat"));
        assert_eq!(r.errors.len(), 1);
        assert!(parse_response("sat (").is_err());
    }

    #[test]
    fn missing_executable() {
        let script = SmtScript {
            text: "(check-sat)\n".into(),
            var_index: crate::smt::encoder::VarIndex::new(0, 0),
            offers: vec![],
            n_soft: 0,
        };
        let cfg = SolverConfig {
            program: "/nonexistent/solver-binary".into(),
            args: vec![],
        };
        assert!(matches!(
            solve(&script, Duration::from_secs(1), &cfg),
            Err(Error::SolverMissing(_))
        ));
        assert!(matches!(
            solve(&script, Duration::ZERO, &cfg),
            Err(Error::InvalidArgument(_))
        ));
    }
}
