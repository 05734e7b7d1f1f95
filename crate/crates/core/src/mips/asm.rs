use std::collections::HashMap;
use std::fmt::Write;

use thiserror::Error;

use super::{Addr, MipsInstr, MipsProgram, ROp, Reg, ShiftOp};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: {reason}")]
pub struct AsmError {
    pub line: usize,
    pub reason: String,
}

pub fn emit_asm(prog: &MipsProgram) -> String {
    let mut out = String::from(".data\n");
    for (label, word) in &prog.data {
        writeln!(out, "{label}: .word {word}").unwrap();
    }
    out.push_str(".text\n.globl main\n");
    for instr in &prog.text {
        match instr {
            MipsInstr::Label(_) => writeln!(out, "{instr}").unwrap(),
            _ => writeln!(out, "\t{instr}").unwrap(),
        }
    }
    out
}

#[derive(PartialEq)]
enum Section {
    None,
    Data,
    Text,
}

fn err(line: usize, reason: impl Into<String>) -> AsmError {
    AsmError { line, reason: reason.into() }
}

fn parse_int(s: &str) -> Option<i64> {
    let (neg, body) = match s.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, s),
    };
    let v = match body.strip_prefix("0x").or_else(|| body.strip_prefix("0X")) {
        Some(hex) => i64::from_str_radix(hex, 16).ok()?,
        None => body.parse::<i64>().ok()?,
    };
    Some(if neg { -v } else { v })
}

fn is_label_name(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '.')
}

struct Operands<'a> {
    line: usize,
    mnemonic: &'a str,
    items: Vec<&'a str>,
}

impl<'a> Operands<'a> {
    fn expect(&self, n: usize) -> Result<(), AsmError> {
        if self.items.len() == n {
            Ok(())
        } else {
            Err(err(self.line, format!("`{}` takes {n} operands, found {}", self.mnemonic, self.items.len())))
        }
    }

    fn reg(&self, i: usize) -> Result<Reg, AsmError> {
        Reg::from_name(self.items[i]).ok_or_else(|| err(self.line, format!("bad register `{}`", self.items[i])))
    }

    fn imm(&self, i: usize, lo: i64, hi: i64) -> Result<i64, AsmError> {
        let s = self.items[i];
        let v = parse_int(s).ok_or_else(|| err(self.line, format!("bad immediate `{s}`")))?;
        if v < lo || v > hi {
            return Err(err(self.line, format!("immediate {v} out of range {lo}..={hi}")));
        }
        Ok(v)
    }

    fn label(&self, i: usize) -> Result<String, AsmError> {
        let s = self.items[i];
        if is_label_name(s) {
            Ok(s.to_string())
        } else {
            Err(err(self.line, format!("bad label `{s}`")))
        }
    }

    fn addr(&self, i: usize) -> Result<Addr, AsmError> {
        let s = self.items[i];
        if let Some((off, rest)) = s.split_once('(') {
            let base = rest
                .strip_suffix(')')
                .and_then(|r| Reg::from_name(r.trim()))
                .ok_or_else(|| err(self.line, format!("bad address `{s}`")))?;
            let off = if off.trim().is_empty() { 0 } else { parse_int(off.trim()).unwrap_or(i64::MAX) };
            let off = i16::try_from(off).map_err(|_| err(self.line, format!("bad offset in `{s}`")))?;
            Ok(Addr::Offset(off, base))
        } else {
            self.label(i).map(Addr::Label)
        }
    }
}

fn parse_instr(line: usize, text: &str, out: &mut Vec<MipsInstr>) -> Result<(), AsmError> {
    let (mnemonic, rest) = match text.split_once(char::is_whitespace) {
        Some((m, r)) => (m, r.trim()),
        None => (text, ""),
    };
    let items: Vec<&str> =
        if rest.is_empty() { Vec::new() } else { rest.split(',').map(str::trim).collect() };
    let ops = Operands { line, mnemonic, items };
    if let Some(op) = ROp::ALL.iter().find(|op| op.mnemonic() == mnemonic) {
        ops.expect(3)?;
        out.push(MipsInstr::R(*op, ops.reg(0)?, ops.reg(1)?, ops.reg(2)?));
        return Ok(());
    }
    let instr = match mnemonic {
        "li" => {
            ops.expect(2)?;
            let r = ops.reg(0)?;
            let v = ops.imm(1, i32::MIN as i64, u32::MAX as i64)? as u32;
            if let Ok(small) = i16::try_from(v as i32) {
                MipsInstr::Li(r, small)
            } else {
                // Wide constants expand the way an assembler would.
                out.push(MipsInstr::Lui(r, (v >> 16) as u16));
                MipsInstr::Ori(r, r, v as u16)
            }
        }
        "lui" => {
            ops.expect(2)?;
            MipsInstr::Lui(ops.reg(0)?, ops.imm(1, 0, 0xffff)? as u16)
        }
        "ori" => {
            ops.expect(3)?;
            MipsInstr::Ori(ops.reg(0)?, ops.reg(1)?, ops.imm(2, 0, 0xffff)? as u16)
        }
        "addiu" => {
            ops.expect(3)?;
            MipsInstr::Addiu(ops.reg(0)?, ops.reg(1)?, ops.imm(2, -0x8000, 0x7fff)? as i16)
        }
        "lw" | "sw" => {
            ops.expect(2)?;
            let (r, a) = (ops.reg(0)?, ops.addr(1)?);
            if mnemonic == "lw" {
                MipsInstr::Lw(r, a)
            } else {
                MipsInstr::Sw(r, a)
            }
        }
        "sll" | "srl" => {
            ops.expect(3)?;
            let op = if mnemonic == "sll" { ShiftOp::Sll } else { ShiftOp::Srl };
            MipsInstr::Shift(op, ops.reg(0)?, ops.reg(1)?, ops.imm(2, 0, 31)? as u8)
        }
        "beq" | "bne" => {
            ops.expect(3)?;
            let (a, b, l) = (ops.reg(0)?, ops.reg(1)?, ops.label(2)?);
            if mnemonic == "beq" {
                MipsInstr::Beq(a, b, l)
            } else {
                MipsInstr::Bne(a, b, l)
            }
        }
        "j" => {
            ops.expect(1)?;
            MipsInstr::J(ops.label(0)?)
        }
        "break" => {
            ops.expect(0)?;
            MipsInstr::Break
        }
        other => return Err(err(line, format!("unknown mnemonic `{other}`"))),
    };
    out.push(instr);
    Ok(())
}

/// Parses assembly in the format [`emit_asm`] produces. Also accepts `#`
/// comments, numeric register names, and labels sharing a line with an
/// instruction.
pub fn parse_asm(src: &str) -> Result<MipsProgram, AsmError> {
    let mut prog = MipsProgram::default();
    let mut section = Section::None;
    let mut defined: HashMap<String, usize> = HashMap::new();
    let mut references: Vec<(usize, String)> = Vec::new();

    let mut define = |line: usize, label: &str| -> Result<(), AsmError> {
        if !is_label_name(label) {
            return Err(err(line, format!("bad label `{label}`")));
        }
        if defined.insert(label.to_string(), line).is_some() {
            return Err(err(line, format!("label `{label}` defined twice")));
        }
        Ok(())
    };

    for (idx, raw) in src.lines().enumerate() {
        let line = idx + 1;
        let mut text = raw.split('#').next().unwrap_or("").trim();
        if text.is_empty() {
            continue;
        }
        match text {
            ".data" => {
                section = Section::Data;
                continue;
            }
            ".text" => {
                section = Section::Text;
                continue;
            }
            _ if text.starts_with(".globl") => continue,
            _ => {}
        }
        match section {
            Section::None => return Err(err(line, "content before `.data` or `.text`")),
            Section::Data => {
                let (label, rest) =
                    text.split_once(':').ok_or_else(|| err(line, "expected `label: .word N`"))?;
                let value = rest
                    .trim()
                    .strip_prefix(".word")
                    .map(str::trim)
                    .and_then(parse_int)
                    .filter(|v| (i32::MIN as i64..=u32::MAX as i64).contains(v))
                    .ok_or_else(|| err(line, "expected `.word` with a 32-bit value"))?;
                let label = label.trim();
                define(line, label)?;
                prog.data.push((label.to_string(), value as u32));
            }
            Section::Text => {
                if let Some((label, rest)) = text.split_once(':') {
                    if !label.contains(char::is_whitespace) {
                        let label = label.trim();
                        define(line, label)?;
                        prog.text.push(MipsInstr::Label(label.to_string()));
                        text = rest.trim();
                        if text.is_empty() {
                            continue;
                        }
                    }
                }
                let start = prog.text.len();
                parse_instr(line, text, &mut prog.text)?;
                for instr in &prog.text[start..] {
                    if let Some(l) = instr.target() {
                        references.push((line, l.to_string()));
                    }
                }
            }
        }
    }
    if !defined.contains_key("main") {
        return Err(err(src.lines().count().max(1), "missing `main` label"));
    }
    for (line, label) in references {
        if !defined.contains_key(&label) {
            return Err(err(line, format!("undefined label `{label}`")));
        }
    }
    Ok(prog)
}
