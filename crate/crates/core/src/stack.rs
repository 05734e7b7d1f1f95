//! Stack machine target: instruction set, fueled VM and the compiler from
//! imp syntax trees.
//!
//! Branch offsets are relative to the following instruction: a branch at
//! `pc` with offset `d` continues at `pc + 1 + d`. Conditional branches pop
//! two operands `a` (pushed first) and `b` and compare `a` against `b`.

use std::fmt;
use std::str::FromStr;

use num_bigint::BigInt;
use thiserror::Error;

use crate::ast::{AExpr, ArithOp, BExpr, CmpOp, Com, Program};
use crate::semantics::{EvalError, Store};

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Instr {
    Iconst(BigInt),
    Ivar(String),
    Isetvar(String),
    Iadd,
    Isub,
    Imul,
    Ibranch(i64),
    Ibeq(i64),
    Ibne(i64),
    Ible(i64),
    Ibgt(i64),
    Ihalt,
}

impl Instr {
    fn branch_offset(&self) -> Option<i64> {
        match self {
            Instr::Ibranch(d) | Instr::Ibeq(d) | Instr::Ibne(d) | Instr::Ible(d) | Instr::Ibgt(d) => {
                Some(*d)
            }
            _ => None,
        }
    }
}

impl fmt::Display for Instr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Instr::Iconst(n) => write!(f, "ICONST {n}"),
            Instr::Ivar(x) => write!(f, "IVAR {x}"),
            Instr::Isetvar(x) => write!(f, "ISETVAR {x}"),
            Instr::Iadd => f.write_str("IADD"),
            Instr::Isub => f.write_str("ISUB"),
            Instr::Imul => f.write_str("IMUL"),
            Instr::Ibranch(d) => write!(f, "IBRANCH {d}"),
            Instr::Ibeq(d) => write!(f, "IBEQ {d}"),
            Instr::Ibne(d) => write!(f, "IBNE {d}"),
            Instr::Ible(d) => write!(f, "IBLE {d}"),
            Instr::Ibgt(d) => write!(f, "IBGT {d}"),
            Instr::Ihalt => f.write_str("IHALT"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: {reason}")]
pub struct ListingError {
    pub line: usize,
    pub reason: String,
}

impl FromStr for Instr {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut parts = s.split_whitespace();
        let mnemonic = parts.next().ok_or("empty line")?;
        let operand = parts.next();
        if parts.next().is_some() {
            return Err("too many operands".into());
        }
        let offset = || -> Result<i64, String> {
            operand.ok_or("missing offset")?.parse().map_err(|_| "bad offset".to_string())
        };
        let name = || -> Result<String, String> { Ok(operand.ok_or("missing variable")?.to_string()) };
        let nullary = |i: Instr| if operand.is_some() { Err("unexpected operand".to_string()) } else { Ok(i) };
        match mnemonic {
            "ICONST" => Ok(Instr::Iconst(
                operand.ok_or("missing constant")?.parse().map_err(|_| "bad constant")?,
            )),
            "IVAR" => Ok(Instr::Ivar(name()?)),
            "ISETVAR" => Ok(Instr::Isetvar(name()?)),
            "IADD" => nullary(Instr::Iadd),
            "ISUB" => nullary(Instr::Isub),
            "IMUL" => nullary(Instr::Imul),
            "IBRANCH" => Ok(Instr::Ibranch(offset()?)),
            "IBEQ" => Ok(Instr::Ibeq(offset()?)),
            "IBNE" => Ok(Instr::Ibne(offset()?)),
            "IBLE" => Ok(Instr::Ible(offset()?)),
            "IBGT" => Ok(Instr::Ibgt(offset()?)),
            "IHALT" => nullary(Instr::Ihalt),
            other => Err(format!("unknown mnemonic `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct StackProgram {
    pub code: Vec<Instr>,
}

impl StackProgram {
    pub fn len(&self) -> usize {
        self.code.len()
    }

    pub fn is_empty(&self) -> bool {
        self.code.is_empty()
    }

    /// Every branch target lies in `[0, len]`.
    pub fn branches_in_bounds(&self) -> bool {
        let len = self.code.len() as i64;
        self.code.iter().enumerate().all(|(pc, i)| match i.branch_offset() {
            Some(d) => (0..=len).contains(&(pc as i64 + 1 + d)),
            None => true,
        })
    }

    /// One instruction per line; line `i` holds instruction `i`.
    pub fn listing(&self) -> String {
        self.code.iter().map(|i| format!("{i}\n")).collect()
    }

    pub fn parse_listing(src: &str) -> Result<Self, ListingError> {
        let code = src
            .lines()
            .enumerate()
            .map(|(i, l)| l.parse().map_err(|reason| ListingError { line: i + 1, reason }))
            .collect::<Result<_, _>>()?;
        Ok(StackProgram { code })
    }
}

pub fn compile_aexp(e: &AExpr) -> Result<Vec<Instr>, EvalError> {
    let mut out = Vec::new();
    emit_aexp(e, &mut out)?;
    Ok(out)
}

fn emit_aexp(e: &AExpr, out: &mut Vec<Instr>) -> Result<(), EvalError> {
    match e {
        AExpr::IntLit(n) => out.push(Instr::Iconst(n.clone())),
        AExpr::Var(x, _) => out.push(Instr::Ivar(x.clone())),
        AExpr::Neg(inner, _) => {
            out.push(Instr::Iconst(BigInt::from(0)));
            emit_aexp(inner, out)?;
            out.push(Instr::Isub);
        }
        AExpr::BinOp(op, l, r, _) => {
            emit_aexp(l, out)?;
            emit_aexp(r, out)?;
            out.push(match op {
                ArithOp::Add => Instr::Iadd,
                ArithOp::Sub => Instr::Isub,
                ArithOp::Mul => Instr::Imul,
            });
        }
        AExpr::BitOp(..) => return Err(EvalError::UnsupportedNode("bit operation")),
        AExpr::BitNot(..) => return Err(EvalError::UnsupportedNode("bitwise not")),
        AExpr::Cast(..) => return Err(EvalError::UnsupportedNode("cast")),
    }
    Ok(())
}

/// Code that jumps `ofs` instructions past its own end when `b` evaluates
/// to `cond`, and falls through otherwise.
pub fn compile_bexp(b: &BExpr, cond: bool, ofs: i64) -> Result<Vec<Instr>, EvalError> {
    Ok(match b {
        BExpr::BoolLit(v) => {
            if *v == cond {
                vec![Instr::Ibranch(ofs)]
            } else {
                vec![]
            }
        }
        BExpr::Cmp(op, l, r, _) => {
            // `l < r` is tested as `r > l`, swapping operand order.
            let (first, second) = match op {
                CmpOp::Lt => (r, l),
                _ => (l, r),
            };
            let mut code = compile_aexp(first)?;
            code.extend(compile_aexp(second)?);
            code.push(match (op, cond) {
                (CmpOp::Eq, true) => Instr::Ibeq(ofs),
                (CmpOp::Eq, false) => Instr::Ibne(ofs),
                (CmpOp::Le, true) => Instr::Ible(ofs),
                (CmpOp::Le, false) => Instr::Ibgt(ofs),
                (CmpOp::Lt, true) => Instr::Ibgt(ofs),
                (CmpOp::Lt, false) => Instr::Ible(ofs),
            });
            code
        }
        BExpr::Not(inner) => compile_bexp(inner, !cond, ofs)?,
        BExpr::And(l, r) => {
            let c2 = compile_bexp(r, cond, ofs)?;
            let skip = if cond { c2.len() as i64 } else { c2.len() as i64 + ofs };
            let mut c1 = compile_bexp(l, false, skip)?;
            c1.extend(c2);
            c1
        }
        BExpr::Or(l, r) => {
            let c2 = compile_bexp(r, cond, ofs)?;
            let skip = if cond { c2.len() as i64 + ofs } else { c2.len() as i64 };
            let mut c1 = compile_bexp(l, true, skip)?;
            c1.extend(c2);
            c1
        }
    })
}

pub fn compile_com(c: &Com) -> Result<Vec<Instr>, EvalError> {
    Ok(match c {
        Com::Skip => vec![],
        Com::Assign(x, e, _) => {
            let mut code = compile_aexp(e)?;
            code.push(Instr::Isetvar(x.clone()));
            code
        }
        Com::Seq(a, b) => {
            let mut code = compile_com(a)?;
            code.extend(compile_com(b)?);
            code
        }
        Com::If(b, t, e) => {
            let c1 = compile_com(t)?;
            let c2 = compile_com(e)?;
            let mut code = compile_bexp(b, false, c1.len() as i64 + 1)?;
            code.extend(c1);
            code.push(Instr::Ibranch(c2.len() as i64));
            code.extend(c2);
            code
        }
        Com::While { cond, body, .. } => {
            let body = compile_com(body)?;
            let cb = compile_bexp(cond, false, body.len() as i64 + 1)?;
            let back = -((cb.len() + body.len() + 1) as i64);
            let mut code = cb;
            code.extend(body);
            code.push(Instr::Ibranch(back));
            code
        }
    })
}

pub fn compile_program(p: &Program) -> Result<StackProgram, EvalError> {
    let mut code = compile_com(&p.body)?;
    code.push(Instr::Ihalt);
    Ok(StackProgram { code })
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MachineError {
    #[error("program counter {0} outside the code")]
    PcOutOfBounds(i64),
    #[error("stack underflow at pc {0}")]
    StackUnderflow(usize),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum VmOutcome {
    Done(Store),
    OutOfFuel,
    MachineError(MachineError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VmState {
    pub pc: usize,
    pub stack: Vec<BigInt>,
    pub store: Store,
}

impl VmState {
    pub fn new(store: Store) -> Self {
        VmState { pc: 0, stack: Vec::new(), store }
    }
}

/// Result of running until halt or until fuel ran out, keeping the final
/// machine state for inspection.
pub fn vm_run(fuel: u64, prog: &StackProgram, state: &mut VmState) -> Result<bool, MachineError> {
    let mut fuel = fuel;
    loop {
        let pc = state.pc;
        let instr = prog.code.get(pc).ok_or(MachineError::PcOutOfBounds(pc as i64))?;
        if fuel == 0 {
            return Ok(false);
        }
        fuel -= 1;
        let mut next = pc as i64 + 1;
        let pop = |stack: &mut Vec<BigInt>| stack.pop().ok_or(MachineError::StackUnderflow(pc));
        match instr {
            Instr::Iconst(n) => state.stack.push(n.clone()),
            Instr::Ivar(x) => state.stack.push(state.store.get(x)),
            Instr::Isetvar(x) => {
                let v = pop(&mut state.stack)?;
                state.store.set(x.clone(), v);
            }
            Instr::Iadd | Instr::Isub | Instr::Imul => {
                let b = pop(&mut state.stack)?;
                let a = pop(&mut state.stack)?;
                state.stack.push(match instr {
                    Instr::Iadd => a + b,
                    Instr::Isub => a - b,
                    _ => a * b,
                });
            }
            Instr::Ibranch(d) => next += d,
            Instr::Ibeq(d) | Instr::Ibne(d) | Instr::Ible(d) | Instr::Ibgt(d) => {
                let b = pop(&mut state.stack)?;
                let a = pop(&mut state.stack)?;
                let taken = match instr {
                    Instr::Ibeq(_) => a == b,
                    Instr::Ibne(_) => a != b,
                    Instr::Ible(_) => a <= b,
                    _ => a > b,
                };
                if taken {
                    next += d;
                }
            }
            Instr::Ihalt => return Ok(true),
        }
        if next < 0 || next as usize > prog.code.len() {
            return Err(MachineError::PcOutOfBounds(next));
        }
        state.pc = next as usize;
    }
}

/// Runs from pc 0 with an empty stack. Every executed instruction, `IHALT`
/// included, costs one unit of fuel.
pub fn vm_exec(fuel: u64, prog: &StackProgram, s0: &Store) -> VmOutcome {
    let mut state = VmState::new(s0.clone());
    match vm_run(fuel, prog, &mut state) {
        Ok(true) => VmOutcome::Done(state.store),
        Ok(false) => VmOutcome::OutOfFuel,
        Err(e) => VmOutcome::MachineError(e),
    }
}

/// Runs with fuel doubling from `start` until the program halts or `cap` is
/// exceeded.
pub fn vm_exec_search(prog: &StackProgram, s0: &Store, start: u64, cap: u64) -> VmOutcome {
    let mut fuel = start.max(1);
    loop {
        match vm_exec(fuel, prog, s0) {
            VmOutcome::OutOfFuel if fuel < cap => fuel = fuel.saturating_mul(2).min(cap),
            other => return other,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ast::dsl::*;
    use crate::parser::parse_program;
    use crate::semantics::{aeval, beval};

    fn c(n: i64) -> Instr {
        Instr::Iconst(n.into())
    }

    #[test]
    fn aexp_postorder() {
        assert_eq!(compile_aexp(&add(int(1), int(2))).unwrap(), vec![c(1), c(2), Instr::Iadd]);
        assert_eq!(compile_aexp(&var("a")).unwrap(), vec![Instr::Ivar("a".into())]);
        assert_eq!(compile_aexp(&neg(var("a"))).unwrap(), vec![c(0), Instr::Ivar("a".into()), Instr::Isub]);
    }

    #[test]
    fn bool_literals() {
        assert_eq!(compile_bexp(&tt(), true, 3).unwrap(), vec![Instr::Ibranch(3)]);
        assert_eq!(compile_bexp(&tt(), false, 3).unwrap(), vec![]);
    }

    #[test]
    fn commands() {
        assert_eq!(compile_com(&Com::Skip).unwrap(), vec![]);
        assert_eq!(
            compile_com(&assign("x", int(1))).unwrap(),
            vec![c(1), Instr::Isetvar("x".into())]
        );
    }

    #[test]
    fn program_wrapper() {
        assert_eq!(compile_program(&Program::untyped(Com::Skip)).unwrap().code, vec![Instr::Ihalt]);
        assert_eq!(
            compile_program(&Program::untyped(assign("x", int(1)))).unwrap().code,
            vec![c(1), Instr::Isetvar("x".into()), Instr::Ihalt]
        );
    }

    #[test]
    fn counting_loop() {
        let p = parse_program("x := 0; while x <= 1 do x := x + 1 done").unwrap();
        let prog = compile_program(&p).unwrap();
        assert!(prog.branches_in_bounds());
        assert_eq!(vm_exec(100, &prog, &Store::new()), VmOutcome::Done(Store::new().with("x", 2)));
    }

    #[test]
    fn vm_examples() {
        let halt = StackProgram { code: vec![Instr::Ihalt] };
        let s = Store::new().with("a", 1);
        assert_eq!(vm_exec(10, &halt, &s), VmOutcome::Done(s.clone()));

        let add = StackProgram { code: vec![c(1), c(2), Instr::Iadd, Instr::Ihalt] };
        assert_eq!(vm_exec(2, &add, &Store::new()), VmOutcome::OutOfFuel);
        assert_eq!(vm_exec(3, &add, &Store::new()), VmOutcome::OutOfFuel);
        assert!(matches!(vm_exec(4, &add, &Store::new()), VmOutcome::Done(_)));

        let bad = StackProgram { code: vec![Instr::Iadd, Instr::Ihalt] };
        assert_eq!(
            vm_exec(1, &bad, &Store::new()),
            VmOutcome::MachineError(MachineError::StackUnderflow(0))
        );
    }

    #[test]
    fn falling_off_or_jumping_out_is_an_error() {
        let fall = StackProgram { code: vec![c(1), Instr::Isetvar("x".into())] };
        assert!(matches!(vm_exec(10, &fall, &Store::new()), VmOutcome::MachineError(MachineError::PcOutOfBounds(2))));
        let jump = StackProgram { code: vec![Instr::Ibranch(-5), Instr::Ihalt] };
        assert!(matches!(vm_exec(10, &jump, &Store::new()), VmOutcome::MachineError(MachineError::PcOutOfBounds(-4))));
    }

    #[test]
    fn diverging_loop_code() {
        let p = parse_program("while true do skip done").unwrap();
        let prog = compile_program(&p).unwrap();
        assert_eq!(prog.code, vec![Instr::Ibranch(-1), Instr::Ihalt]);
        assert_eq!(vm_exec(1000, &prog, &Store::new()), VmOutcome::OutOfFuel);
    }

    #[test]
    fn comparison_branches() {
        let s = Store::new().with("a", 3).with("b", 5);
        for src in ["a < b", "b < a", "a <= a", "a = b", "a = a", "!(a < b) || b <= a", "a < b && b <= 5"] {
            let b = crate::parser::parse_bexp(src).unwrap();
            let expect = beval(&s, &b).unwrap();
            for cond in [true, false] {
                let mut code = compile_bexp(&b, cond, 1).unwrap();
                let end = code.len();
                code.push(Instr::Ihalt);
                code.push(Instr::Ihalt);
                let prog = StackProgram { code };
                let mut st = VmState::new(s.clone());
                assert!(vm_run(1000, &prog, &mut st).unwrap());
                let landed = if expect == cond { end + 1 } else { end };
                assert_eq!(st.pc, landed, "{src} cond={cond}");
                assert!(st.stack.is_empty());
            }
        }
    }

    #[test]
    fn aexp_pushes_value() {
        let e = crate::parser::parse_aexp("a * (b - 3) + -a").unwrap();
        let s = Store::new().with("a", 4).with("b", 10);
        let mut code = compile_aexp(&e).unwrap();
        code.push(Instr::Ihalt);
        let mut st = VmState::new(s.clone());
        assert!(vm_run(100, &StackProgram { code }, &mut st).unwrap());
        assert_eq!(st.stack, vec![aeval(&s, &e).unwrap()]);
        assert_eq!(st.store, s);
    }

    #[test]
    fn listing_round_trip() {
        let p = parse_program("x := 0 - 5; while x < 3 do x := x + 1 done").unwrap();
        let prog = compile_program(&p).unwrap();
        let text = prog.listing();
        assert!(text.contains("IBRANCH -"));
        assert!(text.starts_with("ICONST 0\nICONST 5\nISUB\nISETVAR x\n"));
        assert_eq!(StackProgram::parse_listing(&text).unwrap(), prog);
        assert!(StackProgram::parse_listing("IFOO 1").is_err());
    }
}
