//! Reference semantics over unbounded integers: a fueled big-step
//! evaluator and a small-step transition function.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use num_bigint::BigInt;
use thiserror::Error;

use crate::ast::{AExpr, ArithOp, Assertion, BExpr, Com};

/// Total map from variable names to integers; absent names read as 0.
#[derive(Clone, Default)]
pub struct Store {
    bindings: BTreeMap<String, BigInt>,
}

impl Store {
    pub fn new() -> Self {
        Store::default()
    }

    pub fn get(&self, x: &str) -> BigInt {
        self.bindings.get(x).cloned().unwrap_or_default()
    }

    pub fn set(&mut self, x: impl Into<String>, v: impl Into<BigInt>) {
        self.bindings.insert(x.into(), v.into());
    }

    pub fn with(mut self, x: impl Into<String>, v: impl Into<BigInt>) -> Self {
        self.set(x, v);
        self
    }

    /// Explicit bindings in name order.
    pub fn iter(&self) -> impl Iterator<Item = (&str, &BigInt)> {
        self.bindings.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn bound_names(&self) -> impl Iterator<Item = &str> {
        self.bindings.keys().map(String::as_str)
    }
}

impl PartialEq for Store {
    fn eq(&self, other: &Self) -> bool {
        self.bindings.keys().chain(other.bindings.keys()).all(|k| self.get(k) == other.get(k))
    }
}

impl Eq for Store {}

impl fmt::Debug for Store {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_map().entries(self.bindings.iter()).finish()
    }
}

impl<S: Into<String>, V: Into<BigInt>> FromIterator<(S, V)> for Store {
    fn from_iter<T: IntoIterator<Item = (S, V)>>(iter: T) -> Self {
        Store { bindings: iter.into_iter().map(|(k, v)| (k.into(), v.into())).collect() }
    }
}

/// One `name=value` line per binding, names sorted.
impl fmt::Display for Store {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, v) in &self.bindings {
            writeln!(f, "{k}={v}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: {reason}")]
pub struct StoreParseError {
    pub line: usize,
    pub reason: String,
}

impl FromStr for Store {
    type Err = StoreParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut store = Store::new();
        for (i, raw) in s.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |reason: &str| StoreParseError { line: i + 1, reason: reason.to_string() };
            let (name, value) = line.split_once('=').ok_or_else(|| err("expected name=value"))?;
            let name = name.trim();
            let valid = name.chars().next().is_some_and(|c| c.is_ascii_alphabetic() || c == '_')
                && name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_');
            if !valid {
                return Err(err("invalid variable name"));
            }
            let value: BigInt = value.trim().parse().map_err(|_| err("invalid integer"))?;
            store.set(name, value);
        }
        Ok(store)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("fixed-width construct `{0}` is not supported by the unbounded evaluator")]
    UnsupportedNode(&'static str),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Outcome<S = Store> {
    Done(S),
    OutOfFuel,
}

impl<S> Outcome<S> {
    pub fn is_done(&self) -> bool {
        matches!(self, Outcome::Done(_))
    }

    pub fn done(self) -> Option<S> {
        match self {
            Outcome::Done(s) => Some(s),
            Outcome::OutOfFuel => None,
        }
    }
}

pub fn aeval(s: &Store, e: &AExpr) -> Result<BigInt, EvalError> {
    Ok(match e {
        AExpr::IntLit(n) => n.clone(),
        AExpr::Var(x, _) => s.get(x),
        AExpr::Neg(e, _) => -aeval(s, e)?,
        AExpr::BinOp(op, l, r, _) => {
            let (l, r) = (aeval(s, l)?, aeval(s, r)?);
            match op {
                ArithOp::Add => l + r,
                ArithOp::Sub => l - r,
                ArithOp::Mul => l * r,
            }
        }
        AExpr::BitOp(..) => return Err(EvalError::UnsupportedNode("bit operation")),
        AExpr::BitNot(..) => return Err(EvalError::UnsupportedNode("bitwise not")),
        AExpr::Cast(..) => return Err(EvalError::UnsupportedNode("cast")),
    })
}

pub fn beval(s: &Store, b: &BExpr) -> Result<bool, EvalError> {
    Ok(match b {
        BExpr::BoolLit(v) => *v,
        BExpr::Cmp(op, l, r, _) => op.holds(&aeval(s, l)?, &aeval(s, r)?),
        BExpr::Not(b) => !beval(s, b)?,
        BExpr::And(l, r) => beval(s, l)? && beval(s, r)?,
        BExpr::Or(l, r) => beval(s, l)? || beval(s, r)?,
    })
}

/// Truth value of an assertion in a store.
pub fn assert_eval(s: &Store, a: &Assertion) -> Result<bool, EvalError> {
    Ok(match a {
        Assertion::True => true,
        Assertion::False => false,
        Assertion::Cmp(op, l, r) => op.holds(&aeval(s, l)?, &aeval(s, r)?),
        Assertion::Not(a) => !assert_eval(s, a)?,
        Assertion::And(l, r) => assert_eval(s, l)? && assert_eval(s, r)?,
        Assertion::Or(l, r) => assert_eval(s, l)? || assert_eval(s, r)?,
        Assertion::Implies(l, r) => !assert_eval(s, l)? || assert_eval(s, r)?,
    })
}

/// Big-step evaluation. `fuel` bounds the total number of loop iterations.
pub fn ceval_fuel(fuel: u64, c: &Com, s: &Store) -> Result<Outcome, EvalError> {
    let mut remaining = fuel;
    let mut store = s.clone();
    Ok(if exec(&mut remaining, c, &mut store)? { Outcome::Done(store) } else { Outcome::OutOfFuel })
}

// Returns Ok(false) when fuel ran out.
fn exec(fuel: &mut u64, c: &Com, s: &mut Store) -> Result<bool, EvalError> {
    match c {
        Com::Skip => Ok(true),
        Com::Assign(x, e, _) => {
            let v = aeval(s, e)?;
            s.set(x.clone(), v);
            Ok(true)
        }
        Com::Seq(a, b) => Ok(exec(fuel, a, s)? && exec(fuel, b, s)?),
        Com::If(b, t, e) => {
            if beval(s, b)? {
                exec(fuel, t, s)
            } else {
                exec(fuel, e, s)
            }
        }
        Com::While { cond, body, .. } => loop {
            if *fuel == 0 {
                return Ok(false);
            }
            if !beval(s, cond)? {
                return Ok(true);
            }
            *fuel -= 1;
            if !exec(fuel, body, s)? {
                return Ok(false);
            }
        },
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Step {
    Next(Com, Store),
    Terminal,
}

/// One small-step transition. Expressions are evaluated atomically.
pub fn step(c: &Com, s: &Store) -> Result<Step, EvalError> {
    Ok(match c {
        Com::Skip => Step::Terminal,
        Com::Assign(x, e, _) => {
            let mut s2 = s.clone();
            s2.set(x.clone(), aeval(s, e)?);
            Step::Next(Com::Skip, s2)
        }
        Com::Seq(a, b) => match a.as_ref() {
            Com::Skip => Step::Next(b.as_ref().clone(), s.clone()),
            _ => match step(a, s)? {
                Step::Next(a2, s2) => Step::Next(Com::Seq(Box::new(a2), b.clone()), s2),
                Step::Terminal => unreachable!("only skip is terminal"),
            },
        },
        Com::If(b, t, e) => {
            let branch = if beval(s, b)? { t } else { e };
            Step::Next(branch.as_ref().clone(), s.clone())
        }
        Com::While { cond, body, .. } => Step::Next(
            Com::If(cond.clone(), Box::new(Com::Seq(body.clone(), Box::new(c.clone()))), Box::new(Com::Skip)),
            s.clone(),
        ),
    })
}

/// Iterates `step` at most `max_steps` times.
pub fn run_small(max_steps: u64, c: &Com, s: &Store) -> Result<Outcome, EvalError> {
    let mut cur = c.clone();
    let mut store = s.clone();
    let mut taken = 0u64;
    loop {
        if matches!(cur, Com::Skip) {
            return Ok(Outcome::Done(store));
        }
        if taken == max_steps {
            return Ok(Outcome::OutOfFuel);
        }
        match step(&cur, &store)? {
            Step::Next(c2, s2) => {
                cur = c2;
                store = s2;
                taken += 1;
            }
            Step::Terminal => return Ok(Outcome::Done(store)),
        }
    }
}
