//! Typed layer: signed and unsigned 32-bit integers, casts, bit operations,
//! the type checker, and the wrapping reference evaluator.

use std::collections::BTreeMap;
use std::fmt;

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::ToPrimitive;
use thiserror::Error;

use crate::ast::{AExpr, ArithOp, BExpr, BitOp, CmpOp, Com, Pos, Program, Ty};
use crate::semantics::{Outcome, Store};

/// A 32-bit value; signedness is supplied by the accompanying type.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, PartialOrd, Ord)]
pub struct Word32(pub u32);

impl Word32 {
    pub fn signed(self) -> i32 {
        self.0 as i32
    }

    pub fn to_bigint(self, ty: Ty) -> BigInt {
        match ty {
            Ty::I32 => BigInt::from(self.signed()),
            Ty::U32 => BigInt::from(self.0),
        }
    }

    /// Reduces an unbounded integer modulo 2^32.
    pub fn wrap(n: &BigInt) -> Word32 {
        let m = n.mod_floor(&BigInt::from(1u64 << 32));
        Word32(m.to_u32().expect("reduced below 2^32"))
    }

    pub fn render(self, ty: Ty) -> String {
        match ty {
            Ty::I32 => self.signed().to_string(),
            Ty::U32 => self.0.to_string(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TypeEnv {
    types: BTreeMap<String, Ty>,
}

impl TypeEnv {
    pub fn new() -> Self {
        TypeEnv::default()
    }

    pub fn insert(&mut self, x: impl Into<String>, ty: Ty) {
        self.types.insert(x.into(), ty);
    }

    pub fn get(&self, x: &str) -> Option<Ty> {
        self.types.get(x).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, Ty)> {
        self.types.iter().map(|(k, v)| (k.as_str(), *v))
    }
}

impl FromIterator<(String, Ty)> for TypeEnv {
    fn from_iter<T: IntoIterator<Item = (String, Ty)>>(iter: T) -> Self {
        TypeEnv { types: iter.into_iter().collect() }
    }
}

/// Word-valued store; absent names read as 0.
#[derive(Clone, Default)]
pub struct WordStore {
    words: BTreeMap<String, Word32>,
}

impl WordStore {
    pub fn new() -> Self {
        WordStore::default()
    }

    pub fn get(&self, x: &str) -> Word32 {
        self.words.get(x).copied().unwrap_or_default()
    }

    pub fn set(&mut self, x: impl Into<String>, w: Word32) {
        self.words.insert(x.into(), w);
    }

    pub fn with(mut self, x: impl Into<String>, w: u32) -> Self {
        self.set(x, Word32(w));
        self
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, Word32)> {
        self.words.iter().map(|(k, v)| (k.as_str(), *v))
    }

    /// Width injection of an unbounded store.
    pub fn from_store(s: &Store) -> Self {
        WordStore { words: s.iter().map(|(k, v)| (k.to_string(), Word32::wrap(v))).collect() }
    }

    /// Reads every word back per its declared signedness (i32 when unknown).
    pub fn to_store(&self, env: &TypeEnv) -> Store {
        self.words
            .iter()
            .map(|(k, w)| (k.clone(), w.to_bigint(env.get(k).unwrap_or(Ty::I32))))
            .collect()
    }
}

impl PartialEq for WordStore {
    fn eq(&self, other: &Self) -> bool {
        self.words.keys().chain(other.words.keys()).all(|k| self.get(k) == other.get(k))
    }
}

impl Eq for WordStore {}

impl fmt::Debug for WordStore {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_map().entries(self.words.iter().map(|(k, v)| (k, format!("{:#x}", v.0)))).finish()
    }
}

impl<S: Into<String>> FromIterator<(S, u32)> for WordStore {
    fn from_iter<T: IntoIterator<Item = (S, u32)>>(iter: T) -> Self {
        WordStore { words: iter.into_iter().map(|(k, v)| (k.into(), Word32(v))).collect() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum TNode {
    Lit(Word32),
    Var(String),
    Neg(Box<TExpr>),
    Arith(ArithOp, Box<TExpr>, Box<TExpr>),
    Bit(BitOp, Box<TExpr>, Box<TExpr>),
    BitNot(Box<TExpr>),
    Cast(Box<TExpr>),
}

/// Arithmetic expression annotated with its type at every node.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TExpr {
    pub ty: Ty,
    pub node: TNode,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum TBExpr {
    BoolLit(bool),
    /// The type is that of both operands and selects the ordering.
    Cmp(CmpOp, Ty, TExpr, TExpr),
    Not(Box<TBExpr>),
    And(Box<TBExpr>, Box<TBExpr>),
    Or(Box<TBExpr>, Box<TBExpr>),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum TCom {
    Skip,
    Assign(String, TExpr),
    Seq(Box<TCom>, Box<TCom>),
    If(TBExpr, Box<TCom>, Box<TCom>),
    While(TBExpr, Box<TCom>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TypedProgram {
    /// Variables in declaration order.
    pub vars: Vec<(String, Ty)>,
    pub env: TypeEnv,
    pub body: TCom,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TypeError {
    #[error("{pos}: type mismatch: expected {expected}, found {found}")]
    Mismatch { pos: Pos, expected: Ty, found: Ty },
    #[error("{pos}: undeclared variable `{name}`")]
    UndeclaredVariable { pos: Pos, name: String },
    #[error("{pos}: integer literal {value} does not fit in 32 bits")]
    LiteralOutOfRange { pos: Pos, value: BigInt },
    #[error("program has no declarations; typed mode needs a `var` section")]
    Untyped,
}

impl TypeError {
    pub fn position(&self) -> Pos {
        match self {
            TypeError::Mismatch { pos, .. }
            | TypeError::UndeclaredVariable { pos, .. }
            | TypeError::LiteralOutOfRange { pos, .. } => *pos,
            TypeError::Untyped => Pos::default(),
        }
    }

    pub fn message(&self) -> String {
        let full = self.to_string();
        match self {
            TypeError::Untyped => full,
            _ => full.split_once(": ").map(|(_, m)| m.to_string()).unwrap_or(full),
        }
    }
}

fn pick(node: Pos, outer: Pos) -> Pos {
    if node.is_known() {
        node
    } else {
        outer
    }
}

struct Checker<'a> {
    env: &'a TypeEnv,
}

impl Checker<'_> {
    /// Type of `e`, or `None` when it is built only from literals and adopts
    /// its context.
    fn synth(&self, e: &AExpr, outer: Pos) -> Result<Option<Ty>, TypeError> {
        let here = pick(e.pos(), outer);
        match e {
            AExpr::IntLit(n) => {
                if n.bits() > 32 && n.sign() != num_bigint::Sign::Minus {
                    return Err(TypeError::LiteralOutOfRange { pos: outer, value: n.clone() });
                }
                Ok(None)
            }
            AExpr::Var(x, p) => match self.env.get(x) {
                Some(t) => Ok(Some(t)),
                None => Err(TypeError::UndeclaredVariable { pos: *p, name: x.clone() }),
            },
            AExpr::Neg(inner, _) => self.synth(inner, here),
            AExpr::BinOp(_, l, r, p) => {
                let tl = self.synth(l, here)?;
                let tr = self.synth(r, here)?;
                match (tl, tr) {
                    (Some(a), Some(b)) if a != b => {
                        Err(TypeError::Mismatch { pos: *p, expected: a, found: b })
                    }
                    _ => Ok(tl.or(tr)),
                }
            }
            AExpr::BitOp(_, l, r, _) => {
                self.require_u32(l, here)?;
                self.require_u32(r, here)?;
                Ok(Some(Ty::U32))
            }
            AExpr::BitNot(inner, _) => {
                self.require_u32(inner, here)?;
                Ok(Some(Ty::U32))
            }
            AExpr::Cast(ty, inner, _) => {
                self.synth(inner, here)?;
                Ok(Some(*ty))
            }
        }
    }

    fn require_u32(&self, e: &AExpr, outer: Pos) -> Result<(), TypeError> {
        match self.synth(e, outer)? {
            Some(Ty::I32) => Err(TypeError::Mismatch {
                pos: pick(e.pos(), outer),
                expected: Ty::U32,
                found: Ty::I32,
            }),
            _ => Ok(()),
        }
    }

    // Only called on expressions `synth` accepted.
    fn elab(&self, e: &AExpr, ctx: Ty) -> TExpr {
        let ty_of = |e: &AExpr| self.synth(e, Pos::default()).expect("checked").unwrap_or(ctx);
        match e {
            AExpr::IntLit(n) => TExpr { ty: ctx, node: TNode::Lit(Word32::wrap(n)) },
            AExpr::Var(x, _) => {
                TExpr { ty: self.env.get(x).expect("checked"), node: TNode::Var(x.clone()) }
            }
            AExpr::Neg(inner, _) => {
                let t = ty_of(inner);
                TExpr { ty: t, node: TNode::Neg(Box::new(self.elab(inner, t))) }
            }
            AExpr::BinOp(op, l, r, _) => {
                let t = ty_of(e);
                TExpr {
                    ty: t,
                    node: TNode::Arith(*op, Box::new(self.elab(l, t)), Box::new(self.elab(r, t))),
                }
            }
            AExpr::BitOp(op, l, r, _) => TExpr {
                ty: Ty::U32,
                node: TNode::Bit(*op, Box::new(self.elab(l, Ty::U32)), Box::new(self.elab(r, Ty::U32))),
            },
            AExpr::BitNot(inner, _) => {
                TExpr { ty: Ty::U32, node: TNode::BitNot(Box::new(self.elab(inner, Ty::U32))) }
            }
            AExpr::Cast(ty, inner, _) => {
                let src = self.synth(inner, Pos::default()).expect("checked").unwrap_or(Ty::I32);
                TExpr { ty: *ty, node: TNode::Cast(Box::new(self.elab(inner, src))) }
            }
        }
    }

    fn aexp(&self, e: &AExpr, ctx: Ty) -> Result<TExpr, TypeError> {
        self.synth(e, Pos::default())?;
        Ok(self.elab(e, ctx))
    }

    fn bexp(&self, b: &BExpr) -> Result<TBExpr, TypeError> {
        Ok(match b {
            BExpr::BoolLit(v) => TBExpr::BoolLit(*v),
            BExpr::Cmp(op, l, r, p) => {
                let tl = self.synth(l, *p)?;
                let tr = self.synth(r, *p)?;
                if let (Some(a), Some(b)) = (tl, tr) {
                    if a != b {
                        return Err(TypeError::Mismatch { pos: *p, expected: a, found: b });
                    }
                }
                let t = tl.or(tr).unwrap_or(Ty::I32);
                TBExpr::Cmp(*op, t, self.elab(l, t), self.elab(r, t))
            }
            BExpr::Not(b) => TBExpr::Not(Box::new(self.bexp(b)?)),
            BExpr::And(l, r) => TBExpr::And(Box::new(self.bexp(l)?), Box::new(self.bexp(r)?)),
            BExpr::Or(l, r) => TBExpr::Or(Box::new(self.bexp(l)?), Box::new(self.bexp(r)?)),
        })
    }

    fn com(&self, c: &Com) -> Result<TCom, TypeError> {
        Ok(match c {
            Com::Skip => TCom::Skip,
            Com::Assign(x, rhs, p) => {
                let declared = self
                    .env
                    .get(x)
                    .ok_or_else(|| TypeError::UndeclaredVariable { pos: *p, name: x.clone() })?;
                if let Some(found) = self.synth(rhs, *p)? {
                    if found != declared {
                        return Err(TypeError::Mismatch {
                            pos: pick(rhs.pos(), *p),
                            expected: declared,
                            found,
                        });
                    }
                }
                TCom::Assign(x.clone(), self.elab(rhs, declared))
            }
            Com::Seq(a, b) => TCom::Seq(Box::new(self.com(a)?), Box::new(self.com(b)?)),
            Com::If(b, t, e) => {
                TCom::If(self.bexp(b)?, Box::new(self.com(t)?), Box::new(self.com(e)?))
            }
            Com::While { cond, body, .. } => {
                TCom::While(self.bexp(cond)?, Box::new(self.com(body)?))
            }
        })
    }
}

/// Checks a program with a declaration section. Untyped declarations
/// (`var x;`) are treated as `i32`.
pub fn typecheck(p: &Program) -> Result<TypedProgram, TypeError> {
    if !p.is_typed() {
        return Err(TypeError::Untyped);
    }
    let vars: Vec<(String, Ty)> =
        p.decls.iter().map(|d| (d.name.clone(), d.ty.unwrap_or(Ty::I32))).collect();
    check_with(p, vars)
}

/// Like [`typecheck`], but an undeclared program gets every variable as
/// `i32`.
pub fn typecheck_or_default(p: &Program) -> Result<TypedProgram, TypeError> {
    if p.is_typed() {
        typecheck(p)
    } else {
        let vars = p.body.vars().into_iter().map(|v| (v, Ty::I32)).collect();
        check_with(p, vars)
    }
}

fn check_with(p: &Program, vars: Vec<(String, Ty)>) -> Result<TypedProgram, TypeError> {
    let env: TypeEnv = vars.iter().cloned().collect();
    let body = Checker { env: &env }.com(&p.body)?;
    Ok(TypedProgram { vars, env, body })
}

/// Types a standalone expression; literal-only expressions default to i32.
pub fn typecheck_aexp(env: &TypeEnv, e: &AExpr) -> Result<TExpr, TypeError> {
    let checker = Checker { env };
    let ty = checker.synth(e, Pos::default())?.unwrap_or(Ty::I32);
    checker.aexp(e, ty)
}

pub fn typecheck_bexp(env: &TypeEnv, b: &BExpr) -> Result<TBExpr, TypeError> {
    Checker { env }.bexp(b)
}

/// Static type of an expression when it has one; `None` for literal-only or
/// ill-typed expressions.
pub fn static_type(env: &TypeEnv, e: &AExpr) -> Option<Ty> {
    Checker { env }.synth(e, Pos::default()).ok().flatten()
}

pub fn eval_fixed(s: &WordStore, e: &TExpr) -> Word32 {
    Word32(match &e.node {
        TNode::Lit(w) => w.0,
        TNode::Var(x) => s.get(x).0,
        TNode::Neg(inner) => eval_fixed(s, inner).0.wrapping_neg(),
        TNode::Arith(op, l, r) => {
            let (l, r) = (eval_fixed(s, l).0, eval_fixed(s, r).0);
            match op {
                ArithOp::Add => l.wrapping_add(r),
                ArithOp::Sub => l.wrapping_sub(r),
                ArithOp::Mul => l.wrapping_mul(r),
            }
        }
        TNode::Bit(op, l, r) => {
            let (l, r) = (eval_fixed(s, l).0, eval_fixed(s, r).0);
            match op {
                BitOp::And => l & r,
                BitOp::Or => l | r,
                BitOp::Xor => l ^ r,
                BitOp::Shl => l << (r % 32),
                BitOp::Shr => l >> (r % 32),
            }
        }
        TNode::BitNot(inner) => !eval_fixed(s, inner).0,
        TNode::Cast(inner) => eval_fixed(s, inner).0,
    })
}

pub fn beval_fixed(s: &WordStore, b: &TBExpr) -> bool {
    match b {
        TBExpr::BoolLit(v) => *v,
        TBExpr::Cmp(op, ty, l, r) => {
            let (l, r) = (eval_fixed(s, l), eval_fixed(s, r));
            match ty {
                Ty::I32 => op.holds(&l.signed(), &r.signed()),
                Ty::U32 => op.holds(&l.0, &r.0),
            }
        }
        TBExpr::Not(b) => !beval_fixed(s, b),
        TBExpr::And(l, r) => beval_fixed(s, l) && beval_fixed(s, r),
        TBExpr::Or(l, r) => beval_fixed(s, l) || beval_fixed(s, r),
    }
}

/// Fueled big-step evaluation over words; fuel counts loop iterations as in
/// [`crate::semantics::ceval_fuel`].
pub fn ceval_fixed(fuel: u64, c: &TCom, s: &WordStore) -> Outcome<WordStore> {
    let mut remaining = fuel;
    let mut store = s.clone();
    if exec(&mut remaining, c, &mut store) {
        Outcome::Done(store)
    } else {
        Outcome::OutOfFuel
    }
}

fn exec(fuel: &mut u64, c: &TCom, s: &mut WordStore) -> bool {
    match c {
        TCom::Skip => true,
        TCom::Assign(x, e) => {
            let w = eval_fixed(s, e);
            s.set(x.clone(), w);
            true
        }
        TCom::Seq(a, b) => exec(fuel, a, s) && exec(fuel, b, s),
        TCom::If(b, t, e) => {
            if beval_fixed(s, b) {
                exec(fuel, t, s)
            } else {
                exec(fuel, e, s)
            }
        }
        TCom::While(cond, body) => loop {
            if *fuel == 0 {
                return false;
            }
            if !beval_fixed(s, cond) {
                return true;
            }
            *fuel -= 1;
            if !exec(fuel, body, s) {
                return false;
            }
        },
    }
}
