//! Hoare triples, weakest liberal preconditions and verification
//! conditions, with SMT-LIB2 export and a bounded validity check.

use std::fmt;
use std::fmt::Write as _;

use num_bigint::BigInt;
use thiserror::Error;

use crate::ast::{AExpr, ArithOp, Assertion, CmpOp, Com, Pos};
use crate::semantics::{assert_eval, EvalError, Store};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HoareTriple {
    pub pre: Assertion,
    pub com: Com,
    pub post: Assertion,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum VcOrigin {
    /// `pre -> wlp(com, post)`
    Top,
    /// Invariant and loop condition re-establish the invariant.
    Preservation,
    /// Invariant and negated loop condition imply what follows the loop.
    Exit,
}

impl fmt::Display for VcOrigin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            VcOrigin::Top => "top",
            VcOrigin::Preservation => "preservation",
            VcOrigin::Exit => "exit",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VerificationCondition {
    pub origin: VcOrigin,
    pub formula: Assertion,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BoundedResult {
    Valid,
    Counterexample(Store),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum VcError {
    #[error("{0}: loop has no invariant annotation")]
    MissingInvariant(Pos),
    #[error("enumeration needs {needed} stores, above the cap of {cap}")]
    BudgetExceeded { needed: u128, cap: u64 },
    #[error(transparent)]
    Eval(#[from] EvalError),
}

pub fn subst_aexp(e: &AExpr, x: &str, by: &AExpr) -> AExpr {
    match e {
        AExpr::IntLit(_) => e.clone(),
        AExpr::Var(y, _) => {
            if y == x {
                by.clone()
            } else {
                e.clone()
            }
        }
        AExpr::Neg(a, p) => AExpr::Neg(Box::new(subst_aexp(a, x, by)), *p),
        AExpr::BitNot(a, p) => AExpr::BitNot(Box::new(subst_aexp(a, x, by)), *p),
        AExpr::Cast(t, a, p) => AExpr::Cast(*t, Box::new(subst_aexp(a, x, by)), *p),
        AExpr::BinOp(op, l, r, p) => {
            AExpr::BinOp(*op, Box::new(subst_aexp(l, x, by)), Box::new(subst_aexp(r, x, by)), *p)
        }
        AExpr::BitOp(op, l, r, p) => {
            AExpr::BitOp(*op, Box::new(subst_aexp(l, x, by)), Box::new(subst_aexp(r, x, by)), *p)
        }
    }
}

/// Replaces every occurrence of `x` in `a` by `by`. Assertions have no
/// binders, so no capture can occur.
pub fn subst(a: &Assertion, x: &str, by: &AExpr) -> Assertion {
    match a {
        Assertion::True | Assertion::False => a.clone(),
        Assertion::Cmp(op, l, r) => Assertion::Cmp(*op, subst_aexp(l, x, by), subst_aexp(r, x, by)),
        Assertion::Not(a) => Assertion::not(subst(a, x, by)),
        Assertion::And(l, r) => Assertion::and(subst(l, x, by), subst(r, x, by)),
        Assertion::Or(l, r) => Assertion::or(subst(l, x, by), subst(r, x, by)),
        Assertion::Implies(l, r) => Assertion::implies(subst(l, x, by), subst(r, x, by)),
    }
}

/// Weakest liberal precondition of `c` for `q`, plus the side conditions
/// generated at annotated loops.
pub fn wlp(
    c: &Com,
    q: &Assertion,
) -> Result<(Assertion, Vec<VerificationCondition>), VcError> {
    Ok(match c {
        Com::Skip => (q.clone(), vec![]),
        Com::Assign(x, e, _) => (subst(q, x, e), vec![]),
        Com::Seq(c1, c2) => {
            let (mid, mut sides2) = wlp(c2, q)?;
            let (pre, mut sides) = wlp(c1, &mid)?;
            sides.append(&mut sides2);
            (pre, sides)
        }
        Com::If(b, c1, c2) => {
            let cond = Assertion::from(b);
            let (w1, mut sides) = wlp(c1, q)?;
            let (w2, mut sides2) = wlp(c2, q)?;
            sides.append(&mut sides2);
            let w = Assertion::and(
                Assertion::implies(cond.clone(), w1),
                Assertion::implies(Assertion::not(cond), w2),
            );
            (w, sides)
        }
        Com::While { cond, invariant, body, pos } => {
            let inv = invariant.clone().ok_or(VcError::MissingInvariant(*pos))?;
            let cond = Assertion::from(cond);
            let (w_body, body_sides) = wlp(body, &inv)?;
            let mut sides = vec![
                VerificationCondition {
                    origin: VcOrigin::Preservation,
                    formula: Assertion::implies(Assertion::and(inv.clone(), cond.clone()), w_body),
                },
                VerificationCondition {
                    origin: VcOrigin::Exit,
                    formula: Assertion::implies(
                        Assertion::and(inv.clone(), Assertion::not(cond)),
                        q.clone(),
                    ),
                },
            ];
            sides.extend(body_sides);
            (inv, sides)
        }
    })
}

pub fn vcgen(t: &HoareTriple) -> Result<Vec<VerificationCondition>, VcError> {
    let (w, sides) = wlp(&t.com, &t.post)?;
    let mut vcs = vec![VerificationCondition {
        origin: VcOrigin::Top,
        formula: Assertion::implies(t.pre.clone(), w),
    }];
    vcs.extend(sides);
    Ok(vcs)
}

const SMT_RESERVED: &[&str] = &[
    "and", "or", "not", "xor", "ite", "let", "forall", "exists", "match", "par", "assert", "true",
    "false", "distinct", "div", "mod", "abs", "Int", "Bool", "as", "_", "NUMERAL", "DECIMAL",
    "STRING", "BINARY", "HEXADECIMAL",
];

fn smt_symbol(x: &str) -> String {
    if SMT_RESERVED.contains(&x) {
        format!("|{x}|")
    } else {
        x.to_string()
    }
}

fn has_var(e: &AExpr) -> bool {
    !e.vars().is_empty()
}

fn nonlinear_aexp(e: &AExpr) -> bool {
    match e {
        AExpr::IntLit(_) | AExpr::Var(..) => false,
        AExpr::Neg(a, _) | AExpr::BitNot(a, _) | AExpr::Cast(_, a, _) => nonlinear_aexp(a),
        AExpr::BinOp(op, l, r, _) => {
            (*op == ArithOp::Mul && has_var(l) && has_var(r)) || nonlinear_aexp(l) || nonlinear_aexp(r)
        }
        AExpr::BitOp(_, l, r, _) => nonlinear_aexp(l) || nonlinear_aexp(r),
    }
}

fn nonlinear(a: &Assertion) -> bool {
    match a {
        Assertion::True | Assertion::False => false,
        Assertion::Cmp(_, l, r) => nonlinear_aexp(l) || nonlinear_aexp(r),
        Assertion::Not(a) => nonlinear(a),
        Assertion::And(l, r) | Assertion::Or(l, r) | Assertion::Implies(l, r) => {
            nonlinear(l) || nonlinear(r)
        }
    }
}

fn smt_int(n: &BigInt) -> String {
    if n.sign() == num_bigint::Sign::Minus {
        format!("(- {})", -n)
    } else {
        n.to_string()
    }
}

fn smt_aexp(e: &AExpr) -> Result<String, VcError> {
    Ok(match e {
        AExpr::IntLit(n) => smt_int(n),
        AExpr::Var(x, _) => smt_symbol(x),
        AExpr::Neg(a, _) => format!("(- {})", smt_aexp(a)?),
        AExpr::BinOp(op, l, r, _) => format!("({} {} {})", op.symbol(), smt_aexp(l)?, smt_aexp(r)?),
        AExpr::BitOp(..) => return Err(EvalError::UnsupportedNode("bit operation").into()),
        AExpr::BitNot(..) => return Err(EvalError::UnsupportedNode("bitwise not").into()),
        AExpr::Cast(..) => return Err(EvalError::UnsupportedNode("cast").into()),
    })
}

fn smt_assertion(a: &Assertion) -> Result<String, VcError> {
    Ok(match a {
        Assertion::True => "true".into(),
        Assertion::False => "false".into(),
        Assertion::Cmp(op, l, r) => {
            let op = match op {
                CmpOp::Eq => "=",
                CmpOp::Le => "<=",
                CmpOp::Lt => "<",
            };
            format!("({op} {} {})", smt_aexp(l)?, smt_aexp(r)?)
        }
        Assertion::Not(a) => format!("(not {})", smt_assertion(a)?),
        Assertion::And(l, r) => format!("(and {} {})", smt_assertion(l)?, smt_assertion(r)?),
        Assertion::Or(l, r) => format!("(or {} {})", smt_assertion(l)?, smt_assertion(r)?),
        Assertion::Implies(l, r) => format!("(=> {} {})", smt_assertion(l)?, smt_assertion(r)?),
    })
}

/// SMT-LIB2 script that is `unsat` exactly when the condition is valid over
/// the integers.
pub fn emit_smtlib(vc: &VerificationCondition) -> Result<String, VcError> {
    let body = smt_assertion(&vc.formula)?;
    let mut out = String::new();
    let logic = if nonlinear(&vc.formula) { "QF_NIA" } else { "QF_LIA" };
    writeln!(out, "(set-logic {logic})").unwrap();
    for v in vc.formula.vars() {
        writeln!(out, "(declare-const {} Int)", smt_symbol(&v)).unwrap();
    }
    writeln!(out, "(assert (not {body}))").unwrap();
    writeln!(out, "(check-sat)").unwrap();
    Ok(out)
}

pub const DEFAULT_ENUMERATION_CAP: u64 = 10_000_000;

/// Checks the condition on every store assigning each free variable a value
/// in `[-bound, bound]`. Only sound for that box.
pub fn bounded_check(vc: &VerificationCondition, bound: u32) -> Result<BoundedResult, VcError> {
    bounded_check_with_cap(vc, bound, DEFAULT_ENUMERATION_CAP)
}

/// Stores are visited in lexicographic order: variables sorted by name, the
/// first one most significant, values ascending.
pub fn bounded_check_with_cap(
    vc: &VerificationCondition,
    bound: u32,
    cap: u64,
) -> Result<BoundedResult, VcError> {
    assert!(bound >= 1, "bound must be positive");
    let vars: Vec<String> = vc.formula.vars().into_iter().collect();
    let width = 2 * bound as u128 + 1;
    let needed = vars.iter().try_fold(1u128, |acc, _| acc.checked_mul(width)).unwrap_or(u128::MAX);
    if needed > cap as u128 {
        return Err(VcError::BudgetExceeded { needed, cap });
    }

    let lo = -(bound as i64);
    let mut values = vec![lo; vars.len()];
    loop {
        let store: Store = vars.iter().cloned().zip(values.iter().copied()).collect();
        if !assert_eval(&store, &vc.formula)? {
            return Ok(BoundedResult::Counterexample(store));
        }
        // odometer, last variable fastest
        let mut i = vars.len();
        loop {
            if i == 0 {
                return Ok(BoundedResult::Valid);
            }
            i -= 1;
            if values[i] < bound as i64 {
                values[i] += 1;
                break;
            }
            values[i] = lo;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ast::dsl::*;
    use crate::parser::{parse_assertion, parse_program};

    fn a(src: &str) -> Assertion {
        parse_assertion(src).unwrap()
    }

    fn counting_loop(inv: &str) -> HoareTriple {
        let p = parse_program(&format!(
            "while x <= 9 invariant {{ {inv} }} do x := x + 1 done"
        ))
        .unwrap();
        HoareTriple { pre: a("x = 0"), com: p.body, post: a("x = 10") }
    }

    #[test]
    fn substitution_examples() {
        let gt = Assertion::not(a_le(var("x"), int(0)));
        assert_eq!(subst(&gt, "x", &add(var("x"), int(1))), Assertion::not(a_le(add(var("x"), int(1)), int(0))));
        assert_eq!(subst(&a("y = 2"), "x", &int(7)), a("y = 2"));
    }

    #[test]
    fn wlp_schemata() {
        let p = Assertion::not(a_le(var("x"), int(0)));
        let (w, sides) = wlp(&assign("x", add(var("x"), int(1))), &p).unwrap();
        assert_eq!(w, Assertion::not(a_le(add(var("x"), int(1)), int(0))));
        assert!(sides.is_empty());
        assert_eq!(wlp(&Com::Skip, &p).unwrap(), (p.clone(), vec![]));
    }

    #[test]
    fn wlp_while() {
        let t = counting_loop("0 <= x && x <= 10");
        let (w, sides) = wlp(&t.com, &t.post).unwrap();
        assert_eq!(w, a("0 <= x && x <= 10"));
        assert_eq!(
            sides,
            vec![
                VerificationCondition {
                    origin: VcOrigin::Preservation,
                    formula: a("(0 <= x && x <= 10) && x <= 9 -> 0 <= x + 1 && x + 1 <= 10"),
                },
                VerificationCondition {
                    origin: VcOrigin::Exit,
                    formula: a("(0 <= x && x <= 10) && !(x <= 9) -> x = 10"),
                },
            ]
        );
        for vc in &sides {
            assert_eq!(bounded_check(vc, 16).unwrap(), BoundedResult::Valid);
        }
    }

    #[test]
    fn missing_invariant() {
        let p = parse_program("x := 0;\nwhile x < 3 do x := x + 1 done").unwrap();
        let err = wlp(&p.body, &Assertion::True).unwrap_err();
        assert!(matches!(err, VcError::MissingInvariant(pos) if pos.line == 2 && pos.col == 1));
    }

    #[test]
    fn vcgen_examples() {
        let t = HoareTriple { pre: Assertion::True, com: Com::Skip, post: Assertion::True };
        assert_eq!(
            vcgen(&t).unwrap(),
            vec![VerificationCondition { origin: VcOrigin::Top, formula: a("true -> true") }]
        );
        let t = HoareTriple { pre: a("x = 0"), com: assign("x", add(var("x"), int(1))), post: a("x = 1") };
        assert_eq!(vcgen(&t).unwrap()[0].formula, a("x = 0 -> x + 1 = 1"));
    }

    #[test]
    fn counting_loop_is_verified() {
        let vcs = vcgen(&counting_loop("0 <= x && x <= 10")).unwrap();
        assert_eq!(vcs.len(), 3);
        for vc in &vcs {
            assert_eq!(bounded_check(vc, 16).unwrap(), BoundedResult::Valid, "{vc:?}");
        }
    }

    #[test]
    fn weak_invariant_fails_on_exit() {
        let vcs = vcgen(&counting_loop("0 <= x")).unwrap();
        let exit = vcs.iter().find(|v| v.origin == VcOrigin::Exit).unwrap();
        assert_eq!(
            bounded_check(exit, 16).unwrap(),
            BoundedResult::Counterexample(Store::new().with("x", 11))
        );
    }

    #[test]
    fn if_wlp_and_nested_loops() {
        let p = parse_program(
            "if x < 0 then y := 0 - x else y := x end; \
             while 0 < y invariant { 0 <= y } do \
               z := y; while 0 < z invariant { 0 <= z && 0 < y } do z := z - 1 done; \
               y := y - 1 \
             done",
        )
        .unwrap();
        let t = HoareTriple { pre: Assertion::True, com: p.body, post: a("y = 0") };
        let vcs = vcgen(&t).unwrap();
        assert_eq!(vcs.len(), 5);
        for vc in &vcs {
            assert_eq!(bounded_check(vc, 6).unwrap(), BoundedResult::Valid, "{vc:?}");
        }
    }

    #[test]
    fn smt_scripts() {
        let vc = VerificationCondition { origin: VcOrigin::Top, formula: a("true -> true") };
        assert_eq!(
            emit_smtlib(&vc).unwrap(),
            "(set-logic QF_LIA)\n(assert (not (=> true true)))\n(check-sat)\n"
        );
        let vc = VerificationCondition { origin: VcOrigin::Top, formula: a("x = 0 -> x + 1 = 1") };
        assert_eq!(
            emit_smtlib(&vc).unwrap(),
            "(set-logic QF_LIA)\n(declare-const x Int)\n(assert (not (=> (= x 0) (= (+ x 1) 1))))\n(check-sat)\n"
        );
    }

    #[test]
    fn smt_logic_selection_and_negation() {
        let vc = VerificationCondition { origin: VcOrigin::Top, formula: a("2 * x < y * 3 || -x = 0") };
        let s = emit_smtlib(&vc).unwrap();
        assert!(s.starts_with("(set-logic QF_LIA)"));
        assert!(s.contains("(= (- x) 0)"));
        let vc = VerificationCondition { origin: VcOrigin::Top, formula: a("x * y <= 0 -> and = not") };
        let s = emit_smtlib(&vc).unwrap();
        assert!(s.starts_with("(set-logic QF_NIA)"));
        assert!(s.contains("(declare-const |and| Int)\n(declare-const |not| Int)\n"));
        let vc = VerificationCondition { origin: VcOrigin::Top, formula: a("u32(x) = 0") };
        assert!(emit_smtlib(&vc).is_err());
    }

    #[test]
    fn bounded_examples() {
        let vc = |s: &str| VerificationCondition { origin: VcOrigin::Top, formula: a(s) };
        assert_eq!(bounded_check(&vc("true -> true"), 4).unwrap(), BoundedResult::Valid);
        assert_eq!(
            bounded_check(&vc("x <= 0"), 4).unwrap(),
            BoundedResult::Counterexample(Store::new().with("x", 1))
        );
        // first variable most significant
        assert_eq!(
            bounded_check(&vc("!(a = 0 && b = 1) && !(b = -2)"), 3).unwrap(),
            BoundedResult::Counterexample(Store::new().with("a", -3).with("b", -2))
        );
        assert!(matches!(
            bounded_check_with_cap(&vc("a = b"), 10, 100),
            Err(VcError::BudgetExceeded { needed: 441, cap: 100 })
        ));
    }
}
