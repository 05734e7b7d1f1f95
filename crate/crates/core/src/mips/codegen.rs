use num_traits::ToPrimitive;
use thiserror::Error;

use crate::ast::{AExpr, CmpOp, Pos, Program, Ty};
use crate::fixed::{typecheck_or_default, TBExpr, TCom, TExpr, TNode, TypeError, TypedProgram};
use crate::regalloc::{alloc_codegen, alloc_pair, RegInstr, RegOp};

use super::{data_label, Addr, MipsInstr, MipsProgram, ROp, Reg, ShiftOp};

/// How expressions are lowered.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    /// Every intermediate goes through the `$sp` stack.
    Naive,
    /// Ershov-ordered evaluation in `$t0..$t(k-1)`, spilling to the stack.
    SethiUllman { k: usize },
}

impl Strategy {
    pub const SU: Strategy = Strategy::SethiUllman { k: 8 };
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CodegenError {
    #[error("multiplication is not supported by the MIPS backend without emulation{}", list_positions(.0))]
    MulNotSupported(Vec<Pos>),
    #[error(transparent)]
    Type(#[from] TypeError),
    #[error("register allocation needs 2..=8 registers, got {0}")]
    RegisterCount(usize),
}

fn list_positions(ps: &[Pos]) -> String {
    if ps.is_empty() {
        return String::new();
    }
    let items: Vec<String> = ps.iter().map(|p| p.to_string()).collect();
    format!(" (at {})", items.join(", "))
}

/// Lowers a source program. Untyped programs are treated as all-`i32`.
pub fn codegen(p: &Program, strategy: Strategy, emulate_mul: bool) -> Result<MipsProgram, CodegenError> {
    if !emulate_mul {
        let mut positions = Vec::new();
        p.body.mul_positions(&mut positions);
        if !positions.is_empty() {
            return Err(CodegenError::MulNotSupported(positions));
        }
    }
    let tp = typecheck_or_default(p)?;
    codegen_typed(&tp, strategy, emulate_mul)
}

pub fn codegen_typed(p: &TypedProgram, strategy: Strategy, emulate_mul: bool) -> Result<MipsProgram, CodegenError> {
    if let Strategy::SethiUllman { k } = strategy {
        if !(2..=8).contains(&k) {
            return Err(CodegenError::RegisterCount(k));
        }
    }
    let mut g = Gen { strategy, emulate_mul, text: vec![MipsInstr::Label("main".into())], labels: 0, muls: 0 };
    g.com(&p.body)?;
    g.text.push(MipsInstr::Break);
    let data = p.vars.iter().map(|(x, _)| (data_label(x), 0)).collect();
    Ok(MipsProgram { data, text: g.text })
}

/// `dst := lhs * rhs` modulo 2^32 by shift-and-add. Clobbers `dst`, `$t8`,
/// `$t9` and `$at`; `prefix` keeps the loop labels unique.
pub fn emit_mul_emulation(dst: Reg, lhs: Reg, rhs: Reg, prefix: &str) -> Vec<MipsInstr> {
    let (top, skip, done) = (format!("{prefix}_loop"), format!("{prefix}_skip"), format!("{prefix}_done"));
    vec![
        MipsInstr::R(ROp::Addu, Reg::T8, lhs, Reg::ZERO),
        MipsInstr::R(ROp::Addu, Reg::T9, rhs, Reg::ZERO),
        MipsInstr::R(ROp::Addu, dst, Reg::ZERO, Reg::ZERO),
        MipsInstr::Label(top.clone()),
        MipsInstr::Beq(Reg::T9, Reg::ZERO, done.clone()),
        MipsInstr::Ori(Reg::AT, Reg::ZERO, 1),
        MipsInstr::R(ROp::And, Reg::AT, Reg::T9, Reg::AT),
        MipsInstr::Beq(Reg::AT, Reg::ZERO, skip.clone()),
        MipsInstr::R(ROp::Addu, dst, dst, Reg::T8),
        MipsInstr::Label(skip),
        MipsInstr::Shift(ShiftOp::Sll, Reg::T8, Reg::T8, 1),
        MipsInstr::Shift(ShiftOp::Srl, Reg::T9, Reg::T9, 1),
        MipsInstr::J(top),
        MipsInstr::Label(done),
    ]
}

/// Loads a word with the fewest instructions.
fn load_const(r: Reg, w: u32) -> Vec<MipsInstr> {
    if let Ok(small) = i16::try_from(w as i32) {
        vec![MipsInstr::Li(r, small)]
    } else if w <= 0xffff {
        vec![MipsInstr::Ori(r, Reg::ZERO, w as u16)]
    } else if w & 0xffff == 0 {
        vec![MipsInstr::Lui(r, (w >> 16) as u16)]
    } else {
        vec![MipsInstr::Lui(r, (w >> 16) as u16), MipsInstr::Ori(r, r, w as u16)]
    }
}

// Untyped view for the register allocator; literals become their words.
fn untyped(e: &TExpr) -> AExpr {
    match &e.node {
        TNode::Lit(w) => AExpr::int(w.0),
        TNode::Var(x) => AExpr::var(x.clone()),
        TNode::Neg(inner) => AExpr::neg(untyped(inner)),
        TNode::Arith(op, l, r) => AExpr::bin(*op, untyped(l), untyped(r)),
        TNode::Bit(op, l, r) => AExpr::bit(*op, untyped(l), untyped(r)),
        TNode::BitNot(inner) => AExpr::bit_not(untyped(inner)),
        TNode::Cast(inner) => untyped(inner),
    }
}

fn push(r: Reg) -> [MipsInstr; 2] {
    [MipsInstr::Addiu(Reg::SP, Reg::SP, -4), MipsInstr::Sw(r, Addr::Offset(0, Reg::SP))]
}

fn pop(r: Reg) -> [MipsInstr; 2] {
    [MipsInstr::Lw(r, Addr::Offset(0, Reg::SP)), MipsInstr::Addiu(Reg::SP, Reg::SP, 4)]
}

struct Gen {
    strategy: Strategy,
    emulate_mul: bool,
    text: Vec<MipsInstr>,
    labels: usize,
    muls: usize,
}

impl Gen {
    fn fresh(&mut self) -> String {
        self.labels += 1;
        format!("L{}", self.labels)
    }

    fn binop(&mut self, op: RegOp, dst: Reg, l: Reg, r: Reg) -> Result<(), CodegenError> {
        let rop = match op {
            RegOp::Add => ROp::Addu,
            RegOp::Sub => ROp::Subu,
            RegOp::And => ROp::And,
            RegOp::Or => ROp::Or,
            RegOp::Xor => ROp::Xor,
            RegOp::Shl => ROp::Sllv,
            RegOp::Shr => ROp::Srlv,
            RegOp::Mul => {
                if !self.emulate_mul {
                    return Err(CodegenError::MulNotSupported(Vec::new()));
                }
                self.muls += 1;
                let prefix = format!("mul{}", self.muls);
                self.text.extend(emit_mul_emulation(Reg::V0, l, r, &prefix));
                self.text.push(MipsInstr::R(ROp::Addu, dst, Reg::V0, Reg::ZERO));
                return Ok(());
            }
        };
        self.text.push(MipsInstr::R(rop, dst, l, r));
        Ok(())
    }

    // Naive lowering: leaves the value on top of the stack.
    fn naive(&mut self, e: &TExpr) -> Result<(), CodegenError> {
        let (t0, t1) = (Reg::t(0), Reg::t(1));
        match &e.node {
            TNode::Lit(w) => self.text.extend(load_const(t0, w.0)),
            TNode::Var(x) => self.text.push(MipsInstr::Lw(t0, Addr::Label(data_label(x)))),
            TNode::Cast(inner) => return self.naive(inner),
            TNode::BitNot(inner) => {
                self.naive(inner)?;
                self.text.extend(pop(t0));
                self.text.push(MipsInstr::R(ROp::Nor, t0, t0, Reg::ZERO));
            }
            TNode::Neg(inner) => {
                self.text.extend(push(Reg::ZERO));
                self.naive(inner)?;
                self.text.extend(pop(t1));
                self.text.extend(pop(t0));
                self.binop(RegOp::Sub, t0, t0, t1)?;
            }
            TNode::Arith(_, l, r) | TNode::Bit(_, l, r) => {
                let op = match &e.node {
                    TNode::Arith(op, ..) => RegOp::from(*op),
                    TNode::Bit(op, ..) => RegOp::from(*op),
                    _ => unreachable!(),
                };
                self.naive(l)?;
                self.naive(r)?;
                self.text.extend(pop(t1));
                self.text.extend(pop(t0));
                self.binop(op, t0, t0, t1)?;
            }
        }
        self.text.extend(push(t0));
        Ok(())
    }

    fn lower_regs(&mut self, code: &[RegInstr]) -> Result<(), CodegenError> {
        for instr in code {
            match instr {
                RegInstr::LoadConst(r, n) => {
                    let w = n.to_u32().expect("typed literals are words");
                    self.text.extend(load_const(Reg::t(*r), w));
                }
                RegInstr::LoadVar(r, x) => self.text.push(MipsInstr::Lw(Reg::t(*r), Addr::Label(data_label(x)))),
                RegInstr::Op(op, d, l, r) => self.binop(*op, Reg::t(*d), Reg::t(*l), Reg::t(*r))?,
                RegInstr::Not(r) => self.text.push(MipsInstr::R(ROp::Nor, Reg::t(*r), Reg::t(*r), Reg::ZERO)),
                RegInstr::Spill(r) => self.text.extend(push(Reg::t(*r))),
                RegInstr::Reload(r) => self.text.extend(pop(Reg::t(*r))),
            }
        }
        Ok(())
    }

    /// Evaluates `e` into `$t0`.
    fn expr(&mut self, e: &TExpr) -> Result<(), CodegenError> {
        match self.strategy {
            Strategy::Naive => {
                self.naive(e)?;
                self.text.extend(pop(Reg::t(0)));
                Ok(())
            }
            Strategy::SethiUllman { k } => self.lower_regs(&alloc_codegen(&untyped(e), k)),
        }
    }

    /// Evaluates both comparison operands and returns their registers.
    fn pair(&mut self, l: &TExpr, r: &TExpr) -> Result<(Reg, Reg), CodegenError> {
        match self.strategy {
            Strategy::Naive => {
                self.naive(l)?;
                self.naive(r)?;
                self.text.extend(pop(Reg::t(1)));
                self.text.extend(pop(Reg::t(0)));
                Ok((Reg::t(0), Reg::t(1)))
            }
            Strategy::SethiUllman { k } => {
                let (code, lr, rr) = alloc_pair(&untyped(l), &untyped(r), k);
                self.lower_regs(&code)?;
                Ok((Reg::t(lr), Reg::t(rr)))
            }
        }
    }

    /// Jumps to `target` when `b` evaluates to `cond`, else falls through.
    fn branch(&mut self, b: &TBExpr, cond: bool, target: &str) -> Result<(), CodegenError> {
        match b {
            TBExpr::BoolLit(v) => {
                if *v == cond {
                    self.text.push(MipsInstr::J(target.into()));
                }
            }
            TBExpr::Cmp(op, ty, l, r) => {
                let (x, y) = self.pair(l, r)?;
                let slt = if *ty == Ty::U32 { ROp::Sltu } else { ROp::Slt };
                // $at is zero exactly when the comparison holds.
                let zero_when_true = match op {
                    CmpOp::Eq => {
                        self.text.push(MipsInstr::R(ROp::Subu, Reg::AT, x, y));
                        true
                    }
                    CmpOp::Le => {
                        self.text.push(MipsInstr::R(slt, Reg::AT, y, x));
                        true
                    }
                    CmpOp::Lt => {
                        self.text.push(MipsInstr::R(slt, Reg::AT, x, y));
                        false
                    }
                };
                let t = target.to_string();
                self.text.push(if zero_when_true == cond {
                    MipsInstr::Beq(Reg::AT, Reg::ZERO, t)
                } else {
                    MipsInstr::Bne(Reg::AT, Reg::ZERO, t)
                });
            }
            TBExpr::Not(inner) => self.branch(inner, !cond, target)?,
            TBExpr::And(l, r) | TBExpr::Or(l, r) => {
                // `and` short-circuits on false, `or` on true.
                let short = matches!(b, TBExpr::Or(..));
                if cond == short {
                    self.branch(l, cond, target)?;
                    self.branch(r, cond, target)?;
                } else {
                    let skip = self.fresh();
                    self.branch(l, short, &skip)?;
                    self.branch(r, cond, target)?;
                    self.text.push(MipsInstr::Label(skip));
                }
            }
        }
        Ok(())
    }

    fn com(&mut self, c: &TCom) -> Result<(), CodegenError> {
        match c {
            TCom::Skip => {}
            TCom::Assign(x, e) => {
                self.expr(e)?;
                self.text.push(MipsInstr::Sw(Reg::t(0), Addr::Label(data_label(x))));
            }
            TCom::Seq(a, b) => {
                self.com(a)?;
                self.com(b)?;
            }
            TCom::If(b, t, e) => {
                let (else_l, end_l) = (self.fresh(), self.fresh());
                self.branch(b, false, &else_l)?;
                self.com(t)?;
                self.text.push(MipsInstr::J(end_l.clone()));
                self.text.push(MipsInstr::Label(else_l));
                self.com(e)?;
                self.text.push(MipsInstr::Label(end_l));
            }
            TCom::While(b, body) => {
                let (top, end) = (self.fresh(), self.fresh());
                self.text.push(MipsInstr::Label(top.clone()));
                self.branch(b, false, &end)?;
                self.com(body)?;
                self.text.push(MipsInstr::J(top));
                self.text.push(MipsInstr::Label(end));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixed::{ceval_fixed, WordStore};
    use crate::mips::{emit_asm, parse_asm, simulate, SimOutcome};
    use crate::parser::parse_program;
    use crate::semantics::Outcome;

    fn run(src: &str, strategy: Strategy) -> WordStore {
        let p = parse_program(src).unwrap();
        let m = codegen(&p, strategy, true).unwrap();
        assert_eq!(parse_asm(&emit_asm(&m)).unwrap(), m);
        match simulate(&m, &WordStore::new(), 1_000_000) {
            SimOutcome::Halted(w) => w,
            other => panic!("{other:?}"),
        }
    }

    fn all_strategies(src: &str) -> WordStore {
        let expected = {
            let tp = typecheck_or_default(&parse_program(src).unwrap()).unwrap();
            match ceval_fixed(10_000, &tp.body, &WordStore::new()) {
                Outcome::Done(w) => w,
                Outcome::OutOfFuel => panic!("diverges"),
            }
        };
        for strategy in [Strategy::Naive, Strategy::SU, Strategy::SethiUllman { k: 2 }] {
            let got = run(src, strategy);
            for (x, w) in expected.iter() {
                assert_eq!(got.get(x), w, "{x} under {strategy:?}");
            }
        }
        expected
    }

    #[test]
    fn single_assignment() {
        let m = codegen(&parse_program("x := 1").unwrap(), Strategy::Naive, false).unwrap();
        let asm = emit_asm(&m);
        assert!(asm.contains("li $t0, 1"));
        assert!(asm.contains("sw $t0, var_x"));
        assert!(asm.contains("var_x: .word 0"));
        assert_eq!(m.text.last(), Some(&MipsInstr::Break));
    }

    #[test]
    fn mul_rejected_with_positions() {
        let p = parse_program("x := a * b;\ny := 2 * x").unwrap();
        match codegen(&p, Strategy::Naive, false) {
            Err(CodegenError::MulNotSupported(ps)) => {
                assert_eq!(ps.len(), 2);
                assert_eq!((ps[0].line, ps[1].line), (1, 2));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn straight_line() {
        assert_eq!(all_strategies("x := 1 + 2").get("x").0, 3);
        assert_eq!(all_strategies("a := 7; b := -3; x := a * b - (a - b) * (b * a)").get("x").0 as i32, 189);
    }

    #[test]
    fn u32_wraparound() {
        let w = all_strategies("var x: u32;\nx := u32(4294967295) + u32(1)");
        assert_eq!(w.get("x").0, 0);
    }

    #[test]
    fn signedness_of_comparisons() {
        let src = "var u: u32; var r: i32; var s: i32;\nu := 4294967295;\nif u <= 0 then r := 1 else r := 2 end;\nif i32(u) <= 0 then s := 1 else s := 2 end";
        let w = all_strategies(src);
        assert_eq!((w.get("r").0, w.get("s").0), (2, 1));
    }

    #[test]
    fn loops_and_booleans() {
        let src = "n := 10; a := 0; b := 1; i := 0;\nwhile i < n && !(i = 100) do t := a + b; a := b; b := t; i := i + 1 done;\nif a = 55 || false then ok := 1 else ok := 0 end";
        let w = all_strategies(src);
        assert_eq!((w.get("a").0, w.get("ok").0), (55, 1));
    }

    #[test]
    fn bit_operations() {
        let src = "var x: u32; var y: u32; var z: u32;\nx := 12; y := 10;\nz := (x & y | x ^ y << 3) >> 1;\nx := ~x";
        all_strategies(src);
    }

    #[test]
    fn wide_constants() {
        for n in [0u32, 1, 0x7fff, 0x8000, 0xffff, 0x10000, 0x12340000, 0x12345678, u32::MAX] {
            let m = MipsProgram {
                data: vec![("var_x".into(), 0)],
                text: [vec![MipsInstr::Label("main".into())], load_const(Reg::t(0), n), vec![
                    MipsInstr::Sw(Reg::t(0), Addr::Label("var_x".into())),
                    MipsInstr::Break,
                ]]
                .concat(),
            };
            assert_eq!(simulate(&m, &WordStore::new(), 10), SimOutcome::Halted(WordStore::new().with("x", n)));
        }
    }

    #[test]
    fn mul_emulation_examples() {
        for (a, b) in [(3u32, 4u32), (0, 12345), (12345, 0), (u32::MAX, u32::MAX), (65536, 65536)] {
            let mut text = vec![MipsInstr::Label("main".into())];
            text.extend(load_const(Reg::t(0), a));
            text.extend(load_const(Reg::t(1), b));
            text.extend(emit_mul_emulation(Reg::t(2), Reg::t(0), Reg::t(1), "m"));
            text.push(MipsInstr::Sw(Reg::t(2), Addr::Label("var_p".into())));
            text.push(MipsInstr::Break);
            let m = MipsProgram { data: vec![("var_p".into(), 0)], text };
            let got = simulate(&m, &WordStore::new(), 1000);
            assert_eq!(got, SimOutcome::Halted(WordStore::new().with("p", a.wrapping_mul(b))));
        }
    }

    #[test]
    fn bad_register_count() {
        let p = parse_program("x := 1").unwrap();
        assert_eq!(codegen(&p, Strategy::SethiUllman { k: 9 }, false), Err(CodegenError::RegisterCount(9)));
    }
}
