//! Source printer emitting the minimal parentheses the grammar requires.

use std::fmt::Write;

use crate::ast::{AExpr, Assertion, BExpr, Com, Program};

// Binding strength of arithmetic forms.
const ADD: u8 = 1;
const MUL: u8 = 2;
const BIT: u8 = 3;
const UNARY: u8 = 4;
const ATOM: u8 = 5;

fn aexp_level(e: &AExpr) -> u8 {
    match e {
        AExpr::IntLit(n) if n.sign() == num_bigint::Sign::Minus => UNARY,
        AExpr::IntLit(_) | AExpr::Var(..) | AExpr::Cast(..) => ATOM,
        AExpr::Neg(..) | AExpr::BitNot(..) => UNARY,
        AExpr::BinOp(op, ..) => match op {
            crate::ast::ArithOp::Mul => MUL,
            _ => ADD,
        },
        AExpr::BitOp(..) => BIT,
    }
}

fn write_aexp(out: &mut String, e: &AExpr, min: u8) {
    let level = aexp_level(e);
    let paren = level < min;
    if paren {
        out.push('(');
    }
    match e {
        AExpr::IntLit(n) => write!(out, "{n}").unwrap(),
        AExpr::Var(x, _) => out.push_str(x),
        AExpr::Neg(inner, _) => {
            out.push('-');
            write_aexp(out, inner, UNARY);
        }
        AExpr::BitNot(inner, _) => {
            out.push('~');
            write_aexp(out, inner, UNARY);
        }
        AExpr::Cast(ty, inner, _) => {
            write!(out, "{ty}(").unwrap();
            write_aexp(out, inner, 0);
            out.push(')');
        }
        AExpr::BinOp(op, l, r, _) => {
            write_aexp(out, l, level);
            write!(out, " {} ", op.symbol()).unwrap();
            write_aexp(out, r, level + 1);
        }
        AExpr::BitOp(op, l, r, _) => {
            write_aexp(out, l, level);
            write!(out, " {} ", op.symbol()).unwrap();
            write_aexp(out, r, level + 1);
        }
    }
    if paren {
        out.push(')');
    }
}

pub fn aexp_to_string(e: &AExpr) -> String {
    let mut s = String::new();
    write_aexp(&mut s, e, 0);
    s
}

// Boolean levels; implication sits below disjunction.
const IMPLIES: u8 = 0;
const OR: u8 = 1;
const AND: u8 = 2;
const NOT: u8 = 3;
const BATOM: u8 = 4;

fn write_assertion(out: &mut String, a: &Assertion, min: u8) {
    let level = match a {
        Assertion::Implies(..) => IMPLIES,
        Assertion::Or(..) => OR,
        Assertion::And(..) => AND,
        Assertion::Not(..) => NOT,
        Assertion::True | Assertion::False | Assertion::Cmp(..) => BATOM,
    };
    let paren = level < min;
    if paren {
        out.push('(');
    }
    match a {
        Assertion::True => out.push_str("true"),
        Assertion::False => out.push_str("false"),
        Assertion::Cmp(op, l, r) => {
            write_aexp(out, l, 0);
            write!(out, " {} ", op.symbol()).unwrap();
            write_aexp(out, r, 0);
        }
        Assertion::Not(inner) => {
            out.push('!');
            write_assertion(out, inner, NOT);
        }
        Assertion::And(l, r) => {
            write_assertion(out, l, AND);
            out.push_str(" && ");
            write_assertion(out, r, AND + 1);
        }
        Assertion::Or(l, r) => {
            write_assertion(out, l, OR);
            out.push_str(" || ");
            write_assertion(out, r, OR + 1);
        }
        Assertion::Implies(l, r) => {
            write_assertion(out, l, IMPLIES + 1);
            out.push_str(" -> ");
            write_assertion(out, r, IMPLIES);
        }
    }
    if paren {
        out.push(')');
    }
}

pub fn assertion_to_string(a: &Assertion) -> String {
    let mut s = String::new();
    write_assertion(&mut s, a, 0);
    s
}

pub fn bexp_to_string(b: &BExpr) -> String {
    assertion_to_string(&Assertion::from(b))
}

fn indent(out: &mut String, n: usize) {
    for _ in 0..n {
        out.push_str("  ");
    }
}

fn write_com(out: &mut String, c: &Com, depth: usize) {
    match c {
        Com::Skip => {
            indent(out, depth);
            out.push_str("skip");
        }
        Com::Assign(x, e, _) => {
            indent(out, depth);
            write!(out, "{x} := {}", aexp_to_string(e)).unwrap();
        }
        Com::Seq(a, b) => {
            write_com(out, a, depth);
            out.push_str(";\n");
            write_com(out, b, depth);
        }
        Com::If(b, t, e) => {
            indent(out, depth);
            writeln!(out, "if {} then", bexp_to_string(b)).unwrap();
            write_com(out, t, depth + 1);
            out.push('\n');
            indent(out, depth);
            out.push_str("else\n");
            write_com(out, e, depth + 1);
            out.push('\n');
            indent(out, depth);
            out.push_str("end");
        }
        Com::While { cond, invariant, body, .. } => {
            indent(out, depth);
            write!(out, "while {}", bexp_to_string(cond)).unwrap();
            if let Some(inv) = invariant {
                write!(out, " invariant {{ {} }}", assertion_to_string(inv)).unwrap();
            }
            out.push_str(" do\n");
            write_com(out, body, depth + 1);
            out.push('\n');
            indent(out, depth);
            out.push_str("done");
        }
    }
}

pub fn com_to_string(c: &Com) -> String {
    let mut s = String::new();
    write_com(&mut s, c, 0);
    s
}

/// Renders a program as parseable source.
pub fn pretty(p: &Program) -> String {
    let mut s = String::new();
    for d in &p.decls {
        match d.ty {
            Some(ty) => writeln!(s, "var {}: {ty};", d.name).unwrap(),
            None => writeln!(s, "var {};", d.name).unwrap(),
        }
    }
    write_com(&mut s, &p.body, 0);
    s.push('\n');
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ast::dsl::*;
    use crate::ast::{BitOp, Ty};
    use crate::parser::{parse_aexp, parse_program};

    #[test]
    fn no_parens_when_precedence_suffices() {
        assert_eq!(com_to_string(&assign("x", add(var("a"), mul(int(1), int(2))))), "x := a + 1 * 2");
    }

    #[test]
    fn parens_forced_by_precedence() {
        assert_eq!(com_to_string(&assign("x", mul(add(var("a"), int(1)), int(2)))), "x := (a + 1) * 2");
    }

    #[test]
    fn skip() {
        assert_eq!(com_to_string(&Com::Skip), "skip");
    }

    #[test]
    fn right_operand_of_left_assoc_op() {
        assert_eq!(aexp_to_string(&sub(var("a"), sub(var("b"), var("c")))), "a - (b - c)");
        assert_eq!(aexp_to_string(&sub(sub(var("a"), var("b")), var("c"))), "a - b - c");
        assert_eq!(aexp_to_string(&neg(add(var("a"), int(1)))), "-(a + 1)");
        assert_eq!(aexp_to_string(&neg(neg(var("a")))), "--a");
    }

    #[test]
    fn bit_level_between_mul_and_unary() {
        let e = mul(AExpr::bit(BitOp::Shl, var("a"), int(2)), var("b"));
        assert_eq!(aexp_to_string(&e), "a << 2 * b");
        assert_eq!(parse_aexp("a << 2 * b").unwrap(), e);
        let e = AExpr::bit(BitOp::And, add(var("a"), int(1)), AExpr::cast(Ty::U32, var("c")));
        assert_eq!(aexp_to_string(&e), "(a + 1) & u32(c)");
    }

    #[test]
    fn boolean_parens() {
        let b = BExpr::and(BExpr::or(tt(), ff()), BExpr::not(BExpr::and(tt(), ff())));
        assert_eq!(bexp_to_string(&b), "(true || false) && !(true && false)");
        let a = Assertion::implies(Assertion::implies(Assertion::True, Assertion::False), Assertion::True);
        assert_eq!(assertion_to_string(&a), "(true -> false) -> true");
    }

    #[test]
    fn program_round_trip() {
        let src = "var x: u32;\nvar n;\nn := 0;\nwhile n < 3 invariant { n <= 3 -> true } do\n  if !n = 1 then\n    x := x + u32(n)\n  else\n    skip\n  end;\n  n := n + 1\ndone\n";
        let p = parse_program(src).unwrap();
        assert_eq!(pretty(&p), src);
        assert_eq!(parse_program(&pretty(&p)).unwrap(), p);
    }
}
