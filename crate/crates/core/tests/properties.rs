mod common;

use cimp_core::ast::{AExpr, Com, Program};
use cimp_core::optimizer::{const_fold, optimize, simplify_bool, simplify_structural, OptLevel};
use cimp_core::regalloc::{alloc_codegen, ershov, reg_exec, registers_used, spill_count};
use cimp_core::semantics::{aeval, beval, ceval_fuel, Outcome};
use cimp_core::stack::{compile_program, vm_exec, VmOutcome};
use common::{arb_bexp, arb_com, arb_core_aexp, arb_store};
use proptest::prelude::*;

fn subtrees(e: &AExpr) -> Vec<&AExpr> {
    match e {
        AExpr::BinOp(_, l, r, _) | AExpr::BitOp(_, l, r, _) => vec![l, r],
        AExpr::Neg(i, _) | AExpr::BitNot(i, _) | AExpr::Cast(_, i, _) => vec![i],
        _ => vec![],
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn expression_rewrites_preserve_values(e in arb_core_aexp(5), s in arb_store()) {
        let v = aeval(&s, &e).unwrap();
        for rewritten in [const_fold(&e), simplify_structural(&e)] {
            prop_assert_eq!(aeval(&s, &rewritten).unwrap(), v.clone());
            prop_assert!(rewritten.size() <= e.size());
        }
    }

    #[test]
    fn boolean_rewrites_preserve_values(b in arb_bexp(3), s in arb_store()) {
        let simple = simplify_bool(&b);
        prop_assert_eq!(beval(&s, &simple).unwrap(), beval(&s, &b).unwrap());
        prop_assert!(simple.size() <= b.size());
    }

    #[test]
    fn optimize_is_idempotent_and_preserving(c in arb_com(3), s in arb_store()) {
        let p = Program::untyped(c);
        for level in [OptLevel::O1, OptLevel::O2] {
            let q = optimize(&p, level);
            prop_assert!(q.body.size() <= p.body.size());
            prop_assert_eq!(optimize(&q, level), q.clone());
            if let Outcome::Done(out) = ceval_fuel(8, &p.body, &s).unwrap() {
                prop_assert_eq!(ceval_fuel(8, &q.body, &s).unwrap(), Outcome::Done(out));
            }
        }
    }

    #[test]
    fn register_code_computes_the_expression(e in arb_core_aexp(6), s in arb_store(), k in 2usize..=4) {
        let code = alloc_codegen(&e, k);
        prop_assert_eq!(reg_exec(&code, k, &s).unwrap(), aeval(&s, &e).unwrap());
        let label = ershov(&e);
        prop_assert_eq!(registers_used(&code), label.min(k));
        prop_assert_eq!(spill_count(&code) == 0, label <= k);
        for sub in subtrees(&e) {
            prop_assert!(ershov(sub) <= label);
        }
    }

    #[test]
    fn sequencing_is_associative(a in arb_com(2), b in arb_com(2), c in arb_com(2), s in arb_store()) {
        let left = Com::seq(Com::seq(a.clone(), b.clone()), c.clone());
        let right = Com::seq(a, Com::seq(b, c));
        let big = ceval_fuel(8, &left, &s).unwrap();
        prop_assert_eq!(ceval_fuel(8, &right, &s).unwrap(), big.clone());
        // Diverging programs can square a value on every iteration, so the
        // machine only runs what terminates within the fuel.
        if big.is_done() {
            let run = |c: Com| vm_exec(1_000_000, &compile_program(&Program::untyped(c)).unwrap(), &s);
            prop_assert_eq!(run(left), run(right));
        }
    }

    #[test]
    fn stack_machine_agrees_with_bigstep(c in arb_com(3), s in arb_store()) {
        let p = Program::untyped(c);
        if let Outcome::Done(out) = ceval_fuel(8, &p.body, &s).unwrap() {
            prop_assert_eq!(vm_exec(1_000_000, &compile_program(&p).unwrap(), &s), VmOutcome::Done(out));
        }
    }
}

// A complete tree one label above k goes through the spill path.
#[test]
fn spill_path_matches_aeval() {
    use cimp_core::ast::ArithOp;
    use cimp_core::semantics::Store;
    fn complete(depth: u32, n: &mut i64) -> AExpr {
        if depth == 0 {
            *n += 1;
            return if *n % 2 == 0 { AExpr::var("a") } else { AExpr::int(*n) };
        }
        let op = [ArithOp::Add, ArithOp::Sub, ArithOp::Mul][depth as usize % 3];
        AExpr::bin(op, complete(depth - 1, n), complete(depth - 1, n))
    }
    let s = Store::new().with("a", 3);
    for k in 2..=4 {
        let e = complete(k as u32, &mut 0);
        assert_eq!(ershov(&e), k + 1);
        let code = alloc_codegen(&e, k);
        assert!(spill_count(&code) > 0);
        assert_eq!(reg_exec(&code, k, &s).unwrap(), aeval(&s, &e).unwrap());
    }
}
