#![allow(dead_code)]

use std::path::PathBuf;

use cimp_core::ast::{AExpr, ArithOp, BExpr, CmpOp, Com};
use cimp_core::semantics::Store;
use proptest::prelude::*;

pub fn corpus() -> Vec<(String, String)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("corpus");
    let mut out: Vec<(String, String)> = std::fs::read_dir(&dir)
        .expect("corpus directory")
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "imp"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read_to_string(&p).unwrap()))
        .collect();
    out.sort();
    out
}

/// Fewest registers any evaluation order needs, by trying every order.
/// Leaves load into a fresh register; an operator frees one of its two.
pub fn brute_force_registers(e: &AExpr) -> usize {
    fn internal(e: &AExpr) -> usize {
        match e {
            AExpr::BinOp(_, l, r, _) => 1 + internal(l) + internal(r),
            AExpr::Neg(inner, _) => 1 + internal(inner),
            _ => 0,
        }
    }
    // Peak live count, given which subtree goes first at each operator.
    fn peak(e: &AExpr, choices: &mut impl Iterator<Item = bool>, live: usize) -> usize {
        match e {
            AExpr::BinOp(_, l, r, _) => {
                let right_first = choices.next().unwrap();
                let (a, b) = if right_first { (r, l) } else { (l, r) };
                let pa = peak(a, choices, live);
                let pb = peak(b, choices, live + 1);
                pa.max(pb)
            }
            AExpr::Neg(inner, _) => {
                // 0 - e
                let zero = AExpr::int(0);
                let right_first = choices.next().unwrap();
                let (a, b): (&AExpr, &AExpr) = if right_first { (inner, &zero) } else { (&zero, inner) };
                peak(a, choices, live).max(peak(b, choices, live + 1))
            }
            _ => live + 1,
        }
    }
    let n = internal(e);
    (0..1u64 << n)
        .map(|mask| {
            let mut bits = (0..n).map(|i| mask >> i & 1 == 1);
            peak(e, &mut bits, 0)
        })
        .min()
        .unwrap()
}

pub fn arb_core_aexp(depth: u32) -> impl Strategy<Value = AExpr> {
    let leaf = prop_oneof![
        (-20i64..=20).prop_map(|n| if n < 0 { AExpr::neg(AExpr::int(-n)) } else { AExpr::int(n) }),
        prop::sample::select(vec!["a", "b", "c", "d"]).prop_map(AExpr::var),
    ];
    leaf.prop_recursive(depth, 64, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(l, r)| AExpr::bin(ArithOp::Add, l, r)),
            (inner.clone(), inner.clone()).prop_map(|(l, r)| AExpr::bin(ArithOp::Sub, l, r)),
            (inner.clone(), inner.clone()).prop_map(|(l, r)| AExpr::bin(ArithOp::Mul, l, r)),
            inner.prop_map(AExpr::neg),
        ]
    })
}

pub fn arb_bexp(depth: u32) -> impl Strategy<Value = BExpr> {
    let cmp = prop::sample::select(vec![CmpOp::Eq, CmpOp::Le, CmpOp::Lt]);
    let leaf = prop_oneof![
        any::<bool>().prop_map(BExpr::BoolLit),
        (cmp, arb_core_aexp(2), arb_core_aexp(2)).prop_map(|(op, l, r)| BExpr::cmp(op, l, r)),
    ];
    leaf.prop_recursive(depth, 32, 2, |inner| {
        prop_oneof![
            inner.clone().prop_map(BExpr::not),
            (inner.clone(), inner.clone()).prop_map(|(l, r)| BExpr::and(l, r)),
            (inner.clone(), inner).prop_map(|(l, r)| BExpr::or(l, r)),
        ]
    })
}

/// Commands that may diverge; callers bound them with fuel.
pub fn arb_com(depth: u32) -> impl Strategy<Value = Com> {
    let var = prop::sample::select(vec!["a", "b", "c", "d"]);
    let leaf = prop_oneof![
        Just(Com::Skip),
        (var, arb_core_aexp(2)).prop_map(|(x, e)| Com::assign(x, e)),
    ];
    leaf.prop_recursive(depth, 24, 3, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Com::seq(a, b)),
            (arb_bexp(1), inner.clone(), inner.clone()).prop_map(|(b, t, e)| Com::ite(b, t, e)),
            (arb_bexp(1), inner).prop_map(|(b, c)| Com::while_(b, c)),
        ]
    })
}

pub fn arb_store() -> impl Strategy<Value = Store> {
    prop::collection::vec(-30i64..=30, 4).prop_map(|vs| {
        ["a", "b", "c", "d"].iter().zip(vs).map(|(x, v)| (x.to_string(), v)).collect()
    })
}
