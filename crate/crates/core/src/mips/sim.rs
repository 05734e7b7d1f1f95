use std::collections::HashMap;

use crate::fixed::{Word32, WordStore};

use super::{Addr, MipsInstr, MipsProgram, Reg, ShiftOp};

pub const DATA_BASE: u32 = 0x1001_0000;
/// Initial `$sp`; the stack grows down from here.
pub const STACK_TOP: u32 = 0x7fff_effc;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SimOutcome {
    /// Final words of every data-section variable, keyed without the
    /// `var_` prefix.
    Halted(WordStore),
    BudgetExhausted,
    Trap(String),
}

#[derive(Debug, Clone)]
pub struct MipsState {
    pub regs: [u32; 32],
    /// Word memory keyed by byte address.
    pub mem: HashMap<u32, u32>,
    pub pc: usize,
    pub halted: bool,
}

impl MipsState {
    pub fn new() -> Self {
        let mut regs = [0; 32];
        regs[Reg::SP.number()] = STACK_TOP;
        MipsState { regs, mem: HashMap::new(), pc: 0, halted: false }
    }

    pub fn reg(&self, r: Reg) -> u32 {
        self.regs[r.number()]
    }

    pub fn set_reg(&mut self, r: Reg, v: u32) {
        if r != Reg::ZERO {
            self.regs[r.number()] = v;
        }
    }

    fn load(&self, addr: u32) -> Result<u32, String> {
        if !addr.is_multiple_of(4) {
            return Err(format!("unaligned load from {addr:#010x}"));
        }
        Ok(self.mem.get(&addr).copied().unwrap_or(0))
    }

    fn store(&mut self, addr: u32, v: u32) -> Result<(), String> {
        if !addr.is_multiple_of(4) {
            return Err(format!("unaligned store to {addr:#010x}"));
        }
        self.mem.insert(addr, v);
        Ok(())
    }
}

impl Default for MipsState {
    fn default() -> Self {
        MipsState::new()
    }
}

// Instruction with label references resolved.
enum Op<'a> {
    Plain(&'a MipsInstr),
    Mem { load: bool, rt: Reg, addr: u32 },
    Branch { eq: bool, a: Reg, b: Reg, to: usize },
    Jump(usize),
}

/// Runs `prog` from `main` for at most `budget` instructions. Variables in
/// `init` that have a data word start with the given value.
pub fn simulate(prog: &MipsProgram, init: &WordStore, budget: u64) -> SimOutcome {
    let mut state = MipsState::new();
    let mut data_addr = HashMap::new();
    for (i, (label, word)) in prog.data.iter().enumerate() {
        let addr = DATA_BASE + 4 * i as u32;
        data_addr.insert(label.as_str(), addr);
        let v = label.strip_prefix("var_").and_then(|x| init.iter().find(|(n, _)| *n == x)).map(|(_, w)| w.0);
        state.mem.insert(addr, v.unwrap_or(*word));
    }

    let mut code_addr = HashMap::new();
    let mut body = Vec::new();
    for instr in &prog.text {
        match instr {
            MipsInstr::Label(l) => {
                code_addr.insert(l.as_str(), body.len());
            }
            other => body.push(other),
        }
    }
    let Some(&entry) = code_addr.get("main") else {
        return SimOutcome::Trap("no `main` label".into());
    };
    let mut code = Vec::with_capacity(body.len());
    for instr in body {
        let resolved = match instr {
            MipsInstr::Lw(rt, Addr::Label(l)) | MipsInstr::Sw(rt, Addr::Label(l)) => match data_addr.get(l.as_str()) {
                Some(&addr) => Op::Mem { load: matches!(instr, MipsInstr::Lw(..)), rt: *rt, addr },
                None => return SimOutcome::Trap(format!("undefined data label `{l}`")),
            },
            MipsInstr::Beq(a, b, l) | MipsInstr::Bne(a, b, l) => match code_addr.get(l.as_str()) {
                Some(&to) => Op::Branch { eq: matches!(instr, MipsInstr::Beq(..)), a: *a, b: *b, to },
                None => return SimOutcome::Trap(format!("undefined code label `{l}`")),
            },
            MipsInstr::J(l) => match code_addr.get(l.as_str()) {
                Some(&to) => Op::Jump(to),
                None => return SimOutcome::Trap(format!("undefined code label `{l}`")),
            },
            other => Op::Plain(other),
        };
        code.push(resolved);
    }

    state.pc = entry;
    let mut executed = 0u64;
    while !state.halted {
        if executed == budget {
            return SimOutcome::BudgetExhausted;
        }
        executed += 1;
        let Some(op) = code.get(state.pc) else {
            return SimOutcome::Trap(format!("pc {} outside the text segment", state.pc));
        };
        let mut next = state.pc + 1;
        let step = match op {
            Op::Mem { load: true, rt, addr } => state.load(*addr).map(|v| state.set_reg(*rt, v)),
            Op::Mem { load: false, rt, addr } => state.store(*addr, state.reg(*rt)),
            Op::Branch { eq, a, b, to } => {
                if (state.reg(*a) == state.reg(*b)) == *eq {
                    next = *to;
                }
                Ok(())
            }
            Op::Jump(to) => {
                next = *to;
                Ok(())
            }
            Op::Plain(instr) => exec_plain(&mut state, instr),
        };
        if let Err(reason) = step {
            return SimOutcome::Trap(reason);
        }
        state.pc = next;
    }

    let mut out = WordStore::new();
    for (label, _) in &prog.data {
        if let Some(x) = label.strip_prefix("var_") {
            out.set(x, Word32(state.mem[&data_addr[label.as_str()]]));
        }
    }
    SimOutcome::Halted(out)
}

fn exec_plain(state: &mut MipsState, instr: &MipsInstr) -> Result<(), String> {
    match instr {
        MipsInstr::Li(r, n) => state.set_reg(*r, *n as i32 as u32),
        MipsInstr::Lui(r, n) => state.set_reg(*r, (*n as u32) << 16),
        MipsInstr::Ori(d, s, n) => state.set_reg(*d, state.reg(*s) | *n as u32),
        MipsInstr::Addiu(d, s, n) => state.set_reg(*d, state.reg(*s).wrapping_add(*n as i32 as u32)),
        MipsInstr::Lw(rt, Addr::Offset(off, base)) => {
            let v = state.load(state.reg(*base).wrapping_add(*off as i32 as u32))?;
            state.set_reg(*rt, v);
        }
        MipsInstr::Sw(rt, Addr::Offset(off, base)) => {
            state.store(state.reg(*base).wrapping_add(*off as i32 as u32), state.reg(*rt))?;
        }
        MipsInstr::R(op, d, s, t) => state.set_reg(*d, op.apply(state.reg(*s), state.reg(*t))),
        MipsInstr::Shift(ShiftOp::Sll, d, s, n) => state.set_reg(*d, state.reg(*s) << (*n & 31)),
        MipsInstr::Shift(ShiftOp::Srl, d, s, n) => state.set_reg(*d, state.reg(*s) >> (*n & 31)),
        MipsInstr::Break => state.halted = true,
        // Resolved before execution.
        MipsInstr::Label(_)
        | MipsInstr::Lw(_, Addr::Label(_))
        | MipsInstr::Sw(_, Addr::Label(_))
        | MipsInstr::Beq(..)
        | MipsInstr::Bne(..)
        | MipsInstr::J(_) => unreachable!(),
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mips::parse_asm;

    fn run(src: &str, budget: u64) -> SimOutcome {
        simulate(&parse_asm(src).unwrap(), &WordStore::new(), budget)
    }

    #[test]
    fn halts_with_words() {
        let out = run(".data\nvar_x: .word 5\n.text\nmain:\n\tlw $t0, var_x\n\taddiu $t0, $t0, -6\n\tsw $t0, var_x\n\tbreak\n", 100);
        assert_eq!(out, SimOutcome::Halted(WordStore::new().with("x", u32::MAX)));
    }

    #[test]
    fn budget() {
        let src = ".text\nmain:\n\tj main\n";
        assert_eq!(run(src, 10_000), SimOutcome::BudgetExhausted);
        assert_eq!(run(".text\nmain:\n\tbreak\n", 1), SimOutcome::Halted(WordStore::new()));
        assert_eq!(run(".text\nmain:\n\tbreak\n", 0), SimOutcome::BudgetExhausted);
    }

    #[test]
    fn traps() {
        assert!(matches!(run(".text\nmain:\n\tlw $t0, 2($sp)\n\tbreak\n", 10), SimOutcome::Trap(_)));
        assert!(matches!(run(".text\nmain:\n\taddu $t0, $t0, $t0\n", 10), SimOutcome::Trap(_)));
    }

    #[test]
    fn zero_is_hardwired() {
        let src = ".data\nvar_x: .word 0\n.text\nmain:\n\tli $zero, 7\n\tsw $zero, var_x\n\tbreak\n";
        assert_eq!(run(src, 10), SimOutcome::Halted(WordStore::new().with("x", 0)));
    }

    #[test]
    fn init_overrides_data() {
        let p = parse_asm(".data\nvar_x: .word 1\n.text\nmain:\n\tbreak\n").unwrap();
        let out = simulate(&p, &WordStore::new().with("x", 9).with("y", 3), 5);
        assert_eq!(out, SimOutcome::Halted(WordStore::new().with("x", 9)));
    }
}
