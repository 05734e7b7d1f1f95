//! Abstract syntax shared by every stage of the pipeline.

use std::collections::BTreeSet;
use std::fmt;
use std::hash::{Hash, Hasher};

use num_bigint::BigInt;

/// A 1-based source location.
///
/// Positions are metadata only: two positions always compare equal, so
/// structural equality of trees ignores where the nodes came from.
#[derive(Clone, Copy, Default)]
pub struct Pos {
    pub line: u32,
    pub col: u32,
}

impl Pos {
    pub fn new(line: u32, col: u32) -> Self {
        Pos { line, col }
    }

    pub fn is_known(&self) -> bool {
        self.line > 0
    }
}

impl PartialEq for Pos {
    fn eq(&self, _: &Self) -> bool {
        true
    }
}

impl Eq for Pos {}

impl Hash for Pos {
    fn hash<H: Hasher>(&self, _: &mut H) {}
}

impl fmt::Debug for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

/// Fixed-width integer types of the typed layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Ty {
    I32,
    U32,
}

impl fmt::Display for Ty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Ty::I32 => "i32",
            Ty::U32 => "u32",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ArithOp {
    Add,
    Sub,
    Mul,
}

impl ArithOp {
    pub fn symbol(self) -> &'static str {
        match self {
            ArithOp::Add => "+",
            ArithOp::Sub => "-",
            ArithOp::Mul => "*",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BitOp {
    And,
    Or,
    Xor,
    Shl,
    Shr,
}

impl BitOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BitOp::And => "&",
            BitOp::Or => "|",
            BitOp::Xor => "^",
            BitOp::Shl => "<<",
            BitOp::Shr => ">>",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CmpOp {
    Eq,
    Le,
    Lt,
}

impl CmpOp {
    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Eq => "=",
            CmpOp::Le => "<=",
            CmpOp::Lt => "<",
        }
    }

    pub fn holds<T: Ord>(self, l: &T, r: &T) -> bool {
        match self {
            CmpOp::Eq => l == r,
            CmpOp::Le => l <= r,
            CmpOp::Lt => l < r,
        }
    }
}

/// Arithmetic expressions. The bit-level and cast forms only exist in
/// typed programs.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum AExpr {
    IntLit(BigInt),
    Var(String, Pos),
    Neg(Box<AExpr>, Pos),
    BinOp(ArithOp, Box<AExpr>, Box<AExpr>, Pos),
    BitOp(BitOp, Box<AExpr>, Box<AExpr>, Pos),
    BitNot(Box<AExpr>, Pos),
    Cast(Ty, Box<AExpr>, Pos),
}

impl AExpr {
    pub fn int(n: impl Into<BigInt>) -> Self {
        AExpr::IntLit(n.into())
    }

    pub fn var(name: impl Into<String>) -> Self {
        AExpr::Var(name.into(), Pos::default())
    }

    pub fn neg(e: AExpr) -> Self {
        AExpr::Neg(Box::new(e), Pos::default())
    }

    pub fn bin(op: ArithOp, l: AExpr, r: AExpr) -> Self {
        AExpr::BinOp(op, Box::new(l), Box::new(r), Pos::default())
    }

    pub fn bit(op: BitOp, l: AExpr, r: AExpr) -> Self {
        AExpr::BitOp(op, Box::new(l), Box::new(r), Pos::default())
    }

    pub fn bit_not(e: AExpr) -> Self {
        AExpr::BitNot(Box::new(e), Pos::default())
    }

    pub fn cast(ty: Ty, e: AExpr) -> Self {
        AExpr::Cast(ty, Box::new(e), Pos::default())
    }

    /// Source position of the node, when it carries one.
    pub fn pos(&self) -> Pos {
        match self {
            AExpr::IntLit(_) => Pos::default(),
            AExpr::Var(_, p)
            | AExpr::Neg(_, p)
            | AExpr::BinOp(_, _, _, p)
            | AExpr::BitOp(_, _, _, p)
            | AExpr::BitNot(_, p)
            | AExpr::Cast(_, _, p) => *p,
        }
    }

    pub fn size(&self) -> usize {
        match self {
            AExpr::IntLit(_) | AExpr::Var(..) => 1,
            AExpr::Neg(e, _) | AExpr::BitNot(e, _) | AExpr::Cast(_, e, _) => 1 + e.size(),
            AExpr::BinOp(_, l, r, _) | AExpr::BitOp(_, l, r, _) => 1 + l.size() + r.size(),
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            AExpr::IntLit(_) | AExpr::Var(..) => 1,
            AExpr::Neg(e, _) | AExpr::BitNot(e, _) | AExpr::Cast(_, e, _) => 1 + e.depth(),
            AExpr::BinOp(_, l, r, _) | AExpr::BitOp(_, l, r, _) => 1 + l.depth().max(r.depth()),
        }
    }

    /// True when the expression only uses the unbounded core operators.
    pub fn is_core(&self) -> bool {
        match self {
            AExpr::IntLit(_) | AExpr::Var(..) => true,
            AExpr::Neg(e, _) => e.is_core(),
            AExpr::BinOp(_, l, r, _) => l.is_core() && r.is_core(),
            AExpr::BitOp(..) | AExpr::BitNot(..) | AExpr::Cast(..) => false,
        }
    }

    pub fn collect_vars(&self, out: &mut BTreeSet<String>) {
        match self {
            AExpr::IntLit(_) => {}
            AExpr::Var(x, _) => {
                out.insert(x.clone());
            }
            AExpr::Neg(e, _) | AExpr::BitNot(e, _) | AExpr::Cast(_, e, _) => e.collect_vars(out),
            AExpr::BinOp(_, l, r, _) | AExpr::BitOp(_, l, r, _) => {
                l.collect_vars(out);
                r.collect_vars(out);
            }
        }
    }

    pub fn vars(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_vars(&mut out);
        out
    }

    /// Positions of every multiplication node, in source order.
    pub fn mul_positions(&self, out: &mut Vec<Pos>) {
        match self {
            AExpr::IntLit(_) | AExpr::Var(..) => {}
            AExpr::Neg(e, _) | AExpr::BitNot(e, _) | AExpr::Cast(_, e, _) => e.mul_positions(out),
            AExpr::BinOp(op, l, r, p) => {
                l.mul_positions(out);
                if *op == ArithOp::Mul {
                    out.push(*p);
                }
                r.mul_positions(out);
            }
            AExpr::BitOp(_, l, r, _) => {
                l.mul_positions(out);
                r.mul_positions(out);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum BExpr {
    BoolLit(bool),
    Cmp(CmpOp, AExpr, AExpr, Pos),
    Not(Box<BExpr>),
    And(Box<BExpr>, Box<BExpr>),
    Or(Box<BExpr>, Box<BExpr>),
}

impl BExpr {
    pub fn cmp(op: CmpOp, l: AExpr, r: AExpr) -> Self {
        BExpr::Cmp(op, l, r, Pos::default())
    }

    pub fn not(b: BExpr) -> Self {
        BExpr::Not(Box::new(b))
    }

    pub fn and(l: BExpr, r: BExpr) -> Self {
        BExpr::And(Box::new(l), Box::new(r))
    }

    pub fn or(l: BExpr, r: BExpr) -> Self {
        BExpr::Or(Box::new(l), Box::new(r))
    }

    pub fn size(&self) -> usize {
        match self {
            BExpr::BoolLit(_) => 1,
            BExpr::Cmp(_, l, r, _) => 1 + l.size() + r.size(),
            BExpr::Not(b) => 1 + b.size(),
            BExpr::And(l, r) | BExpr::Or(l, r) => 1 + l.size() + r.size(),
        }
    }

    pub fn is_core(&self) -> bool {
        match self {
            BExpr::BoolLit(_) => true,
            BExpr::Cmp(_, l, r, _) => l.is_core() && r.is_core(),
            BExpr::Not(b) => b.is_core(),
            BExpr::And(l, r) | BExpr::Or(l, r) => l.is_core() && r.is_core(),
        }
    }

    pub fn collect_vars(&self, out: &mut BTreeSet<String>) {
        match self {
            BExpr::BoolLit(_) => {}
            BExpr::Cmp(_, l, r, _) => {
                l.collect_vars(out);
                r.collect_vars(out);
            }
            BExpr::Not(b) => b.collect_vars(out),
            BExpr::And(l, r) | BExpr::Or(l, r) => {
                l.collect_vars(out);
                r.collect_vars(out);
            }
        }
    }

    pub fn mul_positions(&self, out: &mut Vec<Pos>) {
        match self {
            BExpr::BoolLit(_) => {}
            BExpr::Cmp(_, l, r, _) => {
                l.mul_positions(out);
                r.mul_positions(out);
            }
            BExpr::Not(b) => b.mul_positions(out),
            BExpr::And(l, r) | BExpr::Or(l, r) => {
                l.mul_positions(out);
                r.mul_positions(out);
            }
        }
    }
}

/// Quantifier-free assertions over program variables.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Assertion {
    True,
    False,
    Cmp(CmpOp, AExpr, AExpr),
    Not(Box<Assertion>),
    And(Box<Assertion>, Box<Assertion>),
    Or(Box<Assertion>, Box<Assertion>),
    Implies(Box<Assertion>, Box<Assertion>),
}

impl Assertion {
    pub fn cmp(op: CmpOp, l: AExpr, r: AExpr) -> Self {
        Assertion::Cmp(op, l, r)
    }

    pub fn not(a: Assertion) -> Self {
        Assertion::Not(Box::new(a))
    }

    pub fn and(l: Assertion, r: Assertion) -> Self {
        Assertion::And(Box::new(l), Box::new(r))
    }

    pub fn or(l: Assertion, r: Assertion) -> Self {
        Assertion::Or(Box::new(l), Box::new(r))
    }

    pub fn implies(l: Assertion, r: Assertion) -> Self {
        Assertion::Implies(Box::new(l), Box::new(r))
    }

    pub fn collect_vars(&self, out: &mut BTreeSet<String>) {
        match self {
            Assertion::True | Assertion::False => {}
            Assertion::Cmp(_, l, r) => {
                l.collect_vars(out);
                r.collect_vars(out);
            }
            Assertion::Not(a) => a.collect_vars(out),
            Assertion::And(l, r) | Assertion::Or(l, r) | Assertion::Implies(l, r) => {
                l.collect_vars(out);
                r.collect_vars(out);
            }
        }
    }

    pub fn vars(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_vars(&mut out);
        out
    }

    /// Converts back to a boolean expression; fails on implications.
    pub fn to_bexpr(&self) -> Option<BExpr> {
        Some(match self {
            Assertion::True => BExpr::BoolLit(true),
            Assertion::False => BExpr::BoolLit(false),
            Assertion::Cmp(op, l, r) => BExpr::cmp(*op, l.clone(), r.clone()),
            Assertion::Not(a) => BExpr::not(a.to_bexpr()?),
            Assertion::And(l, r) => BExpr::and(l.to_bexpr()?, r.to_bexpr()?),
            Assertion::Or(l, r) => BExpr::or(l.to_bexpr()?, r.to_bexpr()?),
            Assertion::Implies(..) => return None,
        })
    }
}

impl From<&BExpr> for Assertion {
    fn from(b: &BExpr) -> Self {
        match b {
            BExpr::BoolLit(true) => Assertion::True,
            BExpr::BoolLit(false) => Assertion::False,
            BExpr::Cmp(op, l, r, _) => Assertion::Cmp(*op, l.clone(), r.clone()),
            BExpr::Not(b) => Assertion::not(b.as_ref().into()),
            BExpr::And(l, r) => Assertion::and(l.as_ref().into(), r.as_ref().into()),
            BExpr::Or(l, r) => Assertion::or(l.as_ref().into(), r.as_ref().into()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Com {
    Skip,
    Assign(String, AExpr, Pos),
    Seq(Box<Com>, Box<Com>),
    If(BExpr, Box<Com>, Box<Com>),
    While {
        cond: BExpr,
        invariant: Option<Assertion>,
        body: Box<Com>,
        pos: Pos,
    },
}

impl Com {
    pub fn assign(x: impl Into<String>, e: AExpr) -> Self {
        Com::Assign(x.into(), e, Pos::default())
    }

    pub fn seq(a: Com, b: Com) -> Self {
        Com::Seq(Box::new(a), Box::new(b))
    }

    /// Right-nested sequence of the given commands; `Skip` when empty.
    pub fn seq_all(cmds: impl IntoIterator<Item = Com>) -> Self {
        let mut cmds: Vec<Com> = cmds.into_iter().collect();
        let Some(mut acc) = cmds.pop() else {
            return Com::Skip;
        };
        while let Some(c) = cmds.pop() {
            acc = Com::seq(c, acc);
        }
        acc
    }

    pub fn ite(b: BExpr, t: Com, e: Com) -> Self {
        Com::If(b, Box::new(t), Box::new(e))
    }

    pub fn while_(cond: BExpr, body: Com) -> Self {
        Com::While { cond, invariant: None, body: Box::new(body), pos: Pos::default() }
    }

    pub fn while_inv(cond: BExpr, invariant: Assertion, body: Com) -> Self {
        Com::While { cond, invariant: Some(invariant), body: Box::new(body), pos: Pos::default() }
    }

    pub fn size(&self) -> usize {
        match self {
            Com::Skip => 1,
            Com::Assign(_, e, _) => 1 + e.size(),
            Com::Seq(a, b) => 1 + a.size() + b.size(),
            Com::If(b, t, e) => 1 + b.size() + t.size() + e.size(),
            Com::While { cond, body, .. } => 1 + cond.size() + body.size(),
        }
    }

    pub fn count_loops(&self) -> usize {
        match self {
            Com::Skip | Com::Assign(..) => 0,
            Com::Seq(a, b) | Com::If(_, a, b) => a.count_loops() + b.count_loops(),
            Com::While { body, .. } => 1 + body.count_loops(),
        }
    }

    pub fn collect_vars(&self, out: &mut BTreeSet<String>) {
        match self {
            Com::Skip => {}
            Com::Assign(x, e, _) => {
                out.insert(x.clone());
                e.collect_vars(out);
            }
            Com::Seq(a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
            Com::If(b, t, e) => {
                b.collect_vars(out);
                t.collect_vars(out);
                e.collect_vars(out);
            }
            Com::While { cond, body, .. } => {
                cond.collect_vars(out);
                body.collect_vars(out);
            }
        }
    }

    pub fn vars(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_vars(&mut out);
        out
    }

    pub fn is_core(&self) -> bool {
        match self {
            Com::Skip => true,
            Com::Assign(_, e, _) => e.is_core(),
            Com::Seq(a, b) => a.is_core() && b.is_core(),
            Com::If(b, t, e) => b.is_core() && t.is_core() && e.is_core(),
            Com::While { cond, body, .. } => cond.is_core() && body.is_core(),
        }
    }

    pub fn mul_positions(&self, out: &mut Vec<Pos>) {
        match self {
            Com::Skip => {}
            Com::Assign(_, e, _) => e.mul_positions(out),
            Com::Seq(a, b) => {
                a.mul_positions(out);
                b.mul_positions(out);
            }
            Com::If(b, t, e) => {
                b.mul_positions(out);
                t.mul_positions(out);
                e.mul_positions(out);
            }
            Com::While { cond, body, .. } => {
                cond.mul_positions(out);
                body.mul_positions(out);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Decl {
    pub name: String,
    /// `None` for a declaration without a type annotation.
    pub ty: Option<Ty>,
    pub pos: Pos,
}

impl Decl {
    pub fn new(name: impl Into<String>, ty: Option<Ty>) -> Self {
        Decl { name: name.into(), ty, pos: Pos::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Program {
    pub decls: Vec<Decl>,
    pub body: Com,
}

impl Program {
    pub fn untyped(body: Com) -> Self {
        Program { decls: Vec::new(), body }
    }

    /// Programs with a declaration section run under fixed-width semantics.
    pub fn is_typed(&self) -> bool {
        !self.decls.is_empty()
    }

    /// Declared names in order, followed by any other variable the body
    /// mentions, sorted.
    pub fn variables(&self) -> Vec<String> {
        let mut out: Vec<String> = self.decls.iter().map(|d| d.name.clone()).collect();
        for v in self.body.vars() {
            if !out.contains(&v) {
                out.push(v);
            }
        }
        out
    }

    pub fn size(&self) -> usize {
        self.decls.len() + self.body.size()
    }
}

/// Short constructors, mostly for tests and generated code.
pub mod dsl {
    use super::*;

    pub fn int(n: i64) -> AExpr {
        AExpr::int(n)
    }

    pub fn var(x: &str) -> AExpr {
        AExpr::var(x)
    }

    pub fn add(l: AExpr, r: AExpr) -> AExpr {
        AExpr::bin(ArithOp::Add, l, r)
    }

    pub fn sub(l: AExpr, r: AExpr) -> AExpr {
        AExpr::bin(ArithOp::Sub, l, r)
    }

    pub fn mul(l: AExpr, r: AExpr) -> AExpr {
        AExpr::bin(ArithOp::Mul, l, r)
    }

    pub fn neg(e: AExpr) -> AExpr {
        AExpr::neg(e)
    }

    pub fn le(l: AExpr, r: AExpr) -> BExpr {
        BExpr::cmp(CmpOp::Le, l, r)
    }

    pub fn lt(l: AExpr, r: AExpr) -> BExpr {
        BExpr::cmp(CmpOp::Lt, l, r)
    }

    pub fn eq(l: AExpr, r: AExpr) -> BExpr {
        BExpr::cmp(CmpOp::Eq, l, r)
    }

    pub fn tt() -> BExpr {
        BExpr::BoolLit(true)
    }

    pub fn ff() -> BExpr {
        BExpr::BoolLit(false)
    }

    pub fn assign(x: &str, e: AExpr) -> Com {
        Com::assign(x, e)
    }

    pub fn seq(a: Com, b: Com) -> Com {
        Com::seq(a, b)
    }

    pub fn ite(b: BExpr, t: Com, e: Com) -> Com {
        Com::ite(b, t, e)
    }

    pub fn while_(b: BExpr, body: Com) -> Com {
        Com::while_(b, body)
    }

    pub fn a_le(l: AExpr, r: AExpr) -> Assertion {
        Assertion::cmp(CmpOp::Le, l, r)
    }

    pub fn a_lt(l: AExpr, r: AExpr) -> Assertion {
        Assertion::cmp(CmpOp::Lt, l, r)
    }

    pub fn a_eq(l: AExpr, r: AExpr) -> Assertion {
        Assertion::cmp(CmpOp::Eq, l, r)
    }
}
