//! MIPS-3k assembly subset: code generation, textual assembly, and an
//! instruction-level simulator.

mod asm;
mod codegen;
mod sim;

use std::fmt;

pub use asm::{emit_asm, parse_asm, AsmError};
pub use codegen::{codegen, codegen_typed, emit_mul_emulation, CodegenError, Strategy};
pub use sim::{simulate, MipsState, SimOutcome, DATA_BASE, STACK_TOP};

/// A register from the subset the backend uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Reg(u8);

const NAMES: [(u8, &str); 23] = [
    (0, "zero"),
    (1, "at"),
    (2, "v0"),
    (8, "t0"),
    (9, "t1"),
    (10, "t2"),
    (11, "t3"),
    (12, "t4"),
    (13, "t5"),
    (14, "t6"),
    (15, "t7"),
    (16, "s0"),
    (17, "s1"),
    (18, "s2"),
    (19, "s3"),
    (20, "s4"),
    (21, "s5"),
    (22, "s6"),
    (23, "s7"),
    (24, "t8"),
    (25, "t9"),
    (29, "sp"),
    (31, "ra"),
];

impl Reg {
    pub const ZERO: Reg = Reg(0);
    pub const AT: Reg = Reg(1);
    pub const V0: Reg = Reg(2);
    pub const T8: Reg = Reg(24);
    pub const T9: Reg = Reg(25);
    pub const SP: Reg = Reg(29);
    pub const RA: Reg = Reg(31);

    /// `$t0` through `$t9`.
    pub fn t(i: usize) -> Reg {
        match i {
            0..=7 => Reg(8 + i as u8),
            8 | 9 => Reg(16 + i as u8),
            _ => panic!("no register $t{i}"),
        }
    }

    pub fn number(self) -> usize {
        self.0 as usize
    }

    pub fn from_number(n: u8) -> Option<Reg> {
        NAMES.iter().any(|&(k, _)| k == n).then_some(Reg(n))
    }

    pub fn from_name(name: &str) -> Option<Reg> {
        let name = name.strip_prefix('$')?;
        if let Ok(n) = name.parse::<u8>() {
            return Reg::from_number(n);
        }
        NAMES.iter().find(|&&(_, s)| s == name).map(|&(n, _)| Reg(n))
    }

    pub fn name(self) -> &'static str {
        NAMES.iter().find(|&&(k, _)| k == self.0).map(|&(_, s)| s).expect("registers are built from NAMES")
    }
}

impl fmt::Display for Reg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "${}", self.name())
    }
}

/// Three-register operations, `rd = rs op rt`. For the variable shifts the
/// second operand is the shift amount.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ROp {
    Addu,
    Subu,
    And,
    Or,
    Xor,
    Nor,
    Sllv,
    Srlv,
    Slt,
    Sltu,
}

impl ROp {
    pub const ALL: [ROp; 10] =
        [ROp::Addu, ROp::Subu, ROp::And, ROp::Or, ROp::Xor, ROp::Nor, ROp::Sllv, ROp::Srlv, ROp::Slt, ROp::Sltu];

    pub fn mnemonic(self) -> &'static str {
        match self {
            ROp::Addu => "addu",
            ROp::Subu => "subu",
            ROp::And => "and",
            ROp::Or => "or",
            ROp::Xor => "xor",
            ROp::Nor => "nor",
            ROp::Sllv => "sllv",
            ROp::Srlv => "srlv",
            ROp::Slt => "slt",
            ROp::Sltu => "sltu",
        }
    }

    pub fn apply(self, a: u32, b: u32) -> u32 {
        match self {
            ROp::Addu => a.wrapping_add(b),
            ROp::Subu => a.wrapping_sub(b),
            ROp::And => a & b,
            ROp::Or => a | b,
            ROp::Xor => a ^ b,
            ROp::Nor => !(a | b),
            ROp::Sllv => a << (b & 31),
            ROp::Srlv => a >> (b & 31),
            ROp::Slt => ((a as i32) < (b as i32)) as u32,
            ROp::Sltu => (a < b) as u32,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ShiftOp {
    Sll,
    Srl,
}

/// Memory operand of `lw`/`sw`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Addr {
    /// A data label.
    Label(String),
    Offset(i16, Reg),
}

impl fmt::Display for Addr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Addr::Label(l) => f.write_str(l),
            Addr::Offset(o, r) => write!(f, "{o}({r})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum MipsInstr {
    Label(String),
    /// Sign-extended 16-bit load immediate.
    Li(Reg, i16),
    Lui(Reg, u16),
    Ori(Reg, Reg, u16),
    Addiu(Reg, Reg, i16),
    Lw(Reg, Addr),
    Sw(Reg, Addr),
    R(ROp, Reg, Reg, Reg),
    Shift(ShiftOp, Reg, Reg, u8),
    Beq(Reg, Reg, String),
    Bne(Reg, Reg, String),
    J(String),
    Break,
}

impl MipsInstr {
    pub fn is_label(&self) -> bool {
        matches!(self, MipsInstr::Label(_))
    }

    /// Label this instruction refers to, if any.
    pub fn target(&self) -> Option<&str> {
        match self {
            MipsInstr::Beq(_, _, l) | MipsInstr::Bne(_, _, l) | MipsInstr::J(l) => Some(l),
            MipsInstr::Lw(_, Addr::Label(l)) | MipsInstr::Sw(_, Addr::Label(l)) => Some(l),
            _ => None,
        }
    }
}

impl fmt::Display for MipsInstr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MipsInstr::Label(l) => write!(f, "{l}:"),
            MipsInstr::Li(r, n) => write!(f, "li {r}, {n}"),
            MipsInstr::Lui(r, n) => write!(f, "lui {r}, {n}"),
            MipsInstr::Ori(d, s, n) => write!(f, "ori {d}, {s}, {n}"),
            MipsInstr::Addiu(d, s, n) => write!(f, "addiu {d}, {s}, {n}"),
            MipsInstr::Lw(r, a) => write!(f, "lw {r}, {a}"),
            MipsInstr::Sw(r, a) => write!(f, "sw {r}, {a}"),
            MipsInstr::R(op, d, s, t) => write!(f, "{} {d}, {s}, {t}", op.mnemonic()),
            MipsInstr::Shift(ShiftOp::Sll, d, s, n) => write!(f, "sll {d}, {s}, {n}"),
            MipsInstr::Shift(ShiftOp::Srl, d, s, n) => write!(f, "srl {d}, {s}, {n}"),
            MipsInstr::Beq(a, b, l) => write!(f, "beq {a}, {b}, {l}"),
            MipsInstr::Bne(a, b, l) => write!(f, "bne {a}, {b}, {l}"),
            MipsInstr::J(l) => write!(f, "j {l}"),
            MipsInstr::Break => f.write_str("break"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct MipsProgram {
    /// `(label, initial word)`, one per variable.
    pub data: Vec<(String, u32)>,
    pub text: Vec<MipsInstr>,
}

impl MipsProgram {
    /// Instructions excluding label definitions.
    pub fn instruction_count(&self) -> usize {
        self.text.iter().filter(|i| !i.is_label()).count()
    }
}

pub fn data_label(var: &str) -> String {
    format!("var_{var}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn register_names() {
        assert_eq!(Reg::from_name("$t0"), Some(Reg::t(0)));
        assert_eq!(Reg::from_name("$8"), Some(Reg::t(0)));
        assert_eq!(Reg::from_name("$t9").map(Reg::number), Some(25));
        assert_eq!(Reg::from_name("$k0"), None);
        assert_eq!(Reg::from_name("t0"), None);
        assert_eq!(Reg::SP.to_string(), "$sp");
        for &(n, name) in NAMES.iter() {
            assert_eq!(Reg::from_name(&format!("${name}")), Some(Reg(n)));
        }
    }

    #[test]
    fn rop_semantics() {
        assert_eq!(ROp::Addu.apply(u32::MAX, 1), 0);
        assert_eq!(ROp::Slt.apply(u32::MAX, 0), 1);
        assert_eq!(ROp::Sltu.apply(u32::MAX, 0), 0);
        assert_eq!(ROp::Nor.apply(0, 0), u32::MAX);
        assert_eq!(ROp::Sllv.apply(1, 33), 2);
    }
}
