//! Optimal register allocation for expression trees by Ershov numbering.
//!
//! Labels: a leaf needs one register; a binary node needs the larger of
//! its children's labels, or one more than that when they are equal. Unary
//! negation is lowered as `0 - e`; bitwise not works in place and needs
//! what its operand needs. Constants are leaves like variables. Labels are
//! recomputed rather than stored, which keeps the allocator free of
//! auxiliary trees.

use std::fmt;

use num_bigint::BigInt;
use thiserror::Error;

use crate::ast::{AExpr, ArithOp, BitOp};
use crate::semantics::Store;

pub type Reg = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RegOp {
    Add,
    Sub,
    Mul,
    And,
    Or,
    Xor,
    Shl,
    Shr,
}

impl RegOp {
    fn name(self) -> &'static str {
        match self {
            RegOp::Add => "ADD",
            RegOp::Sub => "SUB",
            RegOp::Mul => "MUL",
            RegOp::And => "AND",
            RegOp::Or => "OR",
            RegOp::Xor => "XOR",
            RegOp::Shl => "SHL",
            RegOp::Shr => "SHR",
        }
    }
}

impl From<ArithOp> for RegOp {
    fn from(op: ArithOp) -> Self {
        match op {
            ArithOp::Add => RegOp::Add,
            ArithOp::Sub => RegOp::Sub,
            ArithOp::Mul => RegOp::Mul,
        }
    }
}

impl From<BitOp> for RegOp {
    fn from(op: BitOp) -> Self {
        match op {
            BitOp::And => RegOp::And,
            BitOp::Or => RegOp::Or,
            BitOp::Xor => RegOp::Xor,
            BitOp::Shl => RegOp::Shl,
            BitOp::Shr => RegOp::Shr,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum RegInstr {
    LoadConst(Reg, BigInt),
    LoadVar(Reg, String),
    /// `dst := lhs op rhs`
    Op(RegOp, Reg, Reg, Reg),
    /// Bitwise complement in place.
    Not(Reg),
    /// Pushes the register onto the spill stack.
    Spill(Reg),
    /// Pops the spill stack into the register.
    Reload(Reg),
}

impl fmt::Display for RegInstr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RegInstr::LoadConst(r, n) => write!(f, "LOADCONST r{r} {n}"),
            RegInstr::LoadVar(r, x) => write!(f, "LOADVAR r{r} {x}"),
            RegInstr::Op(op, d, l, r) => write!(f, "OP {} r{d} r{l} r{r}", op.name()),
            RegInstr::Not(r) => write!(f, "NOT r{r}"),
            RegInstr::Spill(r) => write!(f, "SPILL r{r}"),
            RegInstr::Reload(r) => write!(f, "RELOAD r{r}"),
        }
    }
}

fn combine(l: usize, r: usize) -> usize {
    if l == r {
        l + 1
    } else {
        l.max(r)
    }
}

/// Minimum number of registers needed to evaluate `e` without spilling.
/// Casts are transparent to the allocator.
pub fn ershov(e: &AExpr) -> usize {
    match e {
        AExpr::IntLit(_) | AExpr::Var(..) => 1,
        AExpr::Neg(inner, _) => combine(1, ershov(inner)),
        AExpr::BinOp(_, l, r, _) | AExpr::BitOp(_, l, r, _) => combine(ershov(l), ershov(r)),
        AExpr::BitNot(inner, _) | AExpr::Cast(_, inner, _) => ershov(inner),
    }
}

struct Gen {
    k: usize,
    code: Vec<RegInstr>,
}

impl Gen {
    // Evaluates `e` into register `base`, using only registers >= base.
    fn gen(&mut self, e: &AExpr, base: Reg) {
        match e {
            AExpr::IntLit(n) => self.code.push(RegInstr::LoadConst(base, n.clone())),
            AExpr::Var(x, _) => self.code.push(RegInstr::LoadVar(base, x.clone())),
            AExpr::Cast(_, inner, _) => self.gen(inner, base),
            AExpr::BitNot(inner, _) => {
                self.gen(inner, base);
                self.code.push(RegInstr::Not(base));
            }
            AExpr::Neg(inner, _) => {
                let (lhs, rhs) = self.operands(&AExpr::int(0), inner, base);
                self.code.push(RegInstr::Op(RegOp::Sub, base, lhs, rhs));
            }
            AExpr::BinOp(op, l, r, _) => {
                let (lhs, rhs) = self.operands(l, r, base);
                self.code.push(RegInstr::Op((*op).into(), base, lhs, rhs));
            }
            AExpr::BitOp(op, l, r, _) => {
                let (lhs, rhs) = self.operands(l, r, base);
                self.code.push(RegInstr::Op((*op).into(), base, lhs, rhs));
            }
        }
    }

    // Leaves both operands in registers; one of them is `base`, the other
    // `base + 1`.
    fn operands(&mut self, l: &AExpr, r: &AExpr, base: Reg) -> (Reg, Reg) {
        let avail = self.k - base;
        let (nl, nr) = (ershov(l), ershov(r));
        if nl >= avail && nr >= avail {
            self.gen(r, base);
            self.code.push(RegInstr::Spill(base));
            self.gen(l, base);
            self.code.push(RegInstr::Reload(base + 1));
            (base, base + 1)
        } else if nl >= nr {
            self.gen(l, base);
            self.gen(r, base + 1);
            (base, base + 1)
        } else {
            self.gen(r, base);
            self.gen(l, base + 1);
            (base + 1, base)
        }
    }
}

/// Register code over `r0..r(k-1)`; the result lands in `r0`.
pub fn alloc_codegen(e: &AExpr, k: usize) -> Vec<RegInstr> {
    assert!(k >= 2, "need at least two registers");
    let mut g = Gen { k, code: Vec::with_capacity(2 * e.size()) };
    g.gen(e, 0);
    g.code
}

/// Evaluates two expressions side by side, as for a comparison. Returns the
/// code and the registers holding the left and right values.
pub fn alloc_pair(l: &AExpr, r: &AExpr, k: usize) -> (Vec<RegInstr>, Reg, Reg) {
    assert!(k >= 2, "need at least two registers");
    let mut g = Gen { k, code: Vec::new() };
    let (lr, rr) = g.operands(l, r, 0);
    (g.code, lr, rr)
}

pub fn spill_count(code: &[RegInstr]) -> usize {
    code.iter().filter(|i| matches!(i, RegInstr::Spill(_))).count()
}

/// Number of distinct registers the code touches, counting from r0.
pub fn registers_used(code: &[RegInstr]) -> usize {
    code.iter()
        .map(|i| match i {
            RegInstr::LoadConst(r, _)
            | RegInstr::LoadVar(r, _)
            | RegInstr::Not(r)
            | RegInstr::Spill(r)
            | RegInstr::Reload(r) => *r,
            RegInstr::Op(_, d, l, r) => *d.max(l).max(r),
        })
        .max()
        .map_or(0, |m| m + 1)
}

pub fn listing(code: &[RegInstr]) -> String {
    code.iter().map(|i| format!("{i}\n")).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RegExecError {
    #[error("malformed register code at {index}: {reason}")]
    MalformedCode { index: usize, reason: String },
}

/// Runs register code over unbounded integers and returns `r0`.
pub fn reg_exec(code: &[RegInstr], k: usize, s: &Store) -> Result<BigInt, RegExecError> {
    let mut regs: Vec<Option<BigInt>> = vec![None; k];
    let mut spill: Vec<BigInt> = Vec::new();
    for (index, instr) in code.iter().enumerate() {
        let bad = |reason: String| RegExecError::MalformedCode { index, reason };
        let check = |r: Reg| if r < k { Ok(r) } else { Err(bad(format!("register r{r} out of range"))) };
        let read = |regs: &Vec<Option<BigInt>>, r: Reg| {
            regs[check(r)?].clone().ok_or_else(|| bad(format!("read of unset register r{r}")))
        };
        match instr {
            RegInstr::LoadConst(r, n) => regs[check(*r)?] = Some(n.clone()),
            RegInstr::LoadVar(r, x) => regs[check(*r)?] = Some(s.get(x)),
            RegInstr::Op(op, d, l, r) => {
                let (a, b) = (read(&regs, *l)?, read(&regs, *r)?);
                let v = match op {
                    RegOp::Add => a + b,
                    RegOp::Sub => a - b,
                    RegOp::Mul => a * b,
                    other => return Err(bad(format!("{} needs fixed-width operands", other.name()))),
                };
                regs[check(*d)?] = Some(v);
            }
            RegInstr::Not(_) => return Err(bad("NOT needs fixed-width operands".into())),
            RegInstr::Spill(r) => spill.push(read(&regs, *r)?),
            RegInstr::Reload(r) => {
                let v = spill.pop().ok_or_else(|| bad("reload from empty spill stack".into()))?;
                regs[check(*r)?] = Some(v);
            }
        }
    }
    regs.first()
        .cloned()
        .flatten()
        .ok_or(RegExecError::MalformedCode { index: code.len(), reason: "r0 never set".into() })
}
