//! AST rewrites selected by `-O n`.
//!
//! Level 1 folds constants, removes structural identities and simplifies
//! boolean connectives; level 2 also drops branches and loops whose
//! conditions are literal. Programs with declarations (or with bit-level
//! operators) are rewritten under 32-bit wrapping semantics: literal
//! arithmetic is done modulo 2^32, and a typed subexpression that collapses
//! to a literal is wrapped in a cast so the surrounding types stay put.

use std::fmt;

use num_bigint::BigInt;
use num_traits::{One, Signed, Zero};

use crate::ast::{AExpr, ArithOp, BExpr, BitOp, CmpOp, Com, Program, Ty};
use crate::fixed::{static_type, typecheck_or_default, TypeEnv, Word32};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub enum OptLevel {
    #[default]
    O0,
    O1,
    O2,
}

impl TryFrom<u8> for OptLevel {
    type Error = u8;

    fn try_from(n: u8) -> Result<Self, u8> {
        match n {
            0 => Ok(OptLevel::O0),
            1 => Ok(OptLevel::O1),
            2 => Ok(OptLevel::O2),
            other => Err(other),
        }
    }
}

impl fmt::Display for OptLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let n = match self {
            OptLevel::O0 => 0,
            OptLevel::O1 => 1,
            OptLevel::O2 => 2,
        };
        write!(f, "-O{n}")
    }
}

const MAX_PASSES: usize = 64;

#[derive(Clone, Copy)]
struct Rw<'a> {
    /// Present in wrapping mode.
    env: Option<&'a TypeEnv>,
}

fn modulus() -> BigInt {
    BigInt::one() << 32
}

impl Rw<'_> {
    fn ty(&self, e: &AExpr) -> Option<Ty> {
        self.env.and_then(|env| static_type(env, e))
    }

    // Keeps the static type of a replaced expression.
    fn retype(&self, was: Option<Ty>, e: AExpr) -> AExpr {
        match was {
            Some(t) if self.env.is_some() && self.ty(&e) != Some(t) => AExpr::cast(t, e),
            _ => e,
        }
    }

    fn lit_value(&self, e: &AExpr) -> Option<BigInt> {
        match e {
            AExpr::IntLit(n) => Some(n.clone()),
            AExpr::Neg(inner, _) => match inner.as_ref() {
                AExpr::IntLit(n) => Some(-n),
                _ => None,
            },
            AExpr::Cast(_, inner, _) if self.env.is_some() => self.lit_value(inner),
            _ => None,
        }
    }

    fn normalize(&self, v: BigInt) -> BigInt {
        if self.env.is_none() {
            return v;
        }
        let m = modulus();
        let mut w = ((v % &m) + &m) % &m;
        if w >= (&m >> 1) {
            w -= m;
        }
        w
    }

    /// Literal for `v`, negative values as `-n`.
    fn lit(&self, v: BigInt) -> AExpr {
        let v = self.normalize(v);
        if v.is_negative() {
            AExpr::neg(AExpr::IntLit(-v))
        } else {
            AExpr::IntLit(v)
        }
    }

    fn word(&self, v: &BigInt) -> u32 {
        Word32::wrap(v).0
    }

    fn is_lit(&self, e: &AExpr, v: i64) -> bool {
        match self.lit_value(e) {
            Some(n) => self.normalize(n) == BigInt::from(v),
            None => false,
        }
    }

    // Additive spines: `a + b`, `a - b` and `-a` flatten to signed terms.
    fn flatten(&self, e: &AExpr, positive: bool, out: &mut Vec<(bool, AExpr)>) {
        match e {
            AExpr::BinOp(ArithOp::Add, l, r, _) => {
                self.flatten(l, positive, out);
                self.flatten(r, positive, out);
            }
            AExpr::BinOp(ArithOp::Sub, l, r, _) => {
                self.flatten(l, positive, out);
                self.flatten(r, !positive, out);
            }
            AExpr::Neg(inner, _) if self.lit_value(e).is_none() => self.flatten(inner, !positive, out),
            other => out.push((positive, other.clone())),
        }
    }

    fn fold_spine(&self, e: &AExpr) -> AExpr {
        let mut terms = Vec::new();
        self.flatten(e, true, &mut terms);
        let mut constant = BigInt::zero();
        let mut rest = Vec::new();
        for (positive, t) in terms {
            match self.lit_value(&t) {
                Some(v) => constant += if positive { v } else { -v },
                None => rest.push((positive, t)),
            }
        }
        let constant = self.normalize(constant);
        if rest.is_empty() {
            return self.lit(constant);
        }
        // A positive term leads when there is one; otherwise a positive
        // constant does, and failing both the first term is negated.
        let mut ordered = Vec::with_capacity(rest.len() + 1);
        let mut constant_placed = false;
        if let Some(i) = rest.iter().position(|(p, _)| *p) {
            ordered.push(rest.remove(i));
        } else if constant.is_positive() {
            ordered.push((true, AExpr::IntLit(constant.clone())));
            constant_placed = true;
        }
        ordered.extend(rest);
        if !constant.is_zero() && !constant_placed {
            ordered.push((!constant.is_negative(), AExpr::IntLit(constant.abs())));
        }
        let mut iter = ordered.into_iter();
        let (p, first) = iter.next().expect("at least one term");
        let mut acc = if p { first } else { AExpr::neg(first) };
        for (p, t) in iter {
            acc = AExpr::bin(if p { ArithOp::Add } else { ArithOp::Sub }, acc, t);
        }
        acc
    }

    fn fold(&self, e: &AExpr) -> AExpr {
        let was = self.ty(e);
        let out = match e {
            AExpr::IntLit(_) | AExpr::Var(..) => return e.clone(),
            AExpr::Neg(inner, p) => self.fold_spine(&AExpr::Neg(Box::new(self.fold(inner)), *p)),
            AExpr::BinOp(op @ (ArithOp::Add | ArithOp::Sub), l, r, p) => {
                self.fold_spine(&AExpr::BinOp(*op, Box::new(self.fold(l)), Box::new(self.fold(r)), *p))
            }
            AExpr::BinOp(ArithOp::Mul, l, r, p) => {
                let (l, r) = (self.fold(l), self.fold(r));
                match (self.lit_value(&l), self.lit_value(&r)) {
                    (Some(a), Some(b)) => self.lit(a * b),
                    _ => AExpr::BinOp(ArithOp::Mul, Box::new(l), Box::new(r), *p),
                }
            }
            AExpr::BitOp(op, l, r, p) => {
                let (l, r) = (self.fold(l), self.fold(r));
                match (self.env, self.lit_value(&l), self.lit_value(&r)) {
                    (Some(_), Some(a), Some(b)) => {
                        let (a, b) = (self.word(&a), self.word(&b));
                        AExpr::int(match op {
                            BitOp::And => a & b,
                            BitOp::Or => a | b,
                            BitOp::Xor => a ^ b,
                            BitOp::Shl => a << (b % 32),
                            BitOp::Shr => a >> (b % 32),
                        })
                    }
                    _ => AExpr::BitOp(*op, Box::new(l), Box::new(r), *p),
                }
            }
            AExpr::BitNot(inner, p) => {
                let inner = self.fold(inner);
                match (self.env, self.lit_value(&inner)) {
                    (Some(_), Some(a)) => AExpr::int(!self.word(&a)),
                    _ => AExpr::BitNot(Box::new(inner), *p),
                }
            }
            AExpr::Cast(ty, inner, p) => {
                let inner = self.fold(inner);
                if self.env.is_none() {
                    AExpr::Cast(*ty, Box::new(inner), *p)
                } else if self.ty(&inner) == Some(*ty) {
                    inner
                } else {
                    match inner {
                        AExpr::Cast(_, nested, _) => AExpr::Cast(*ty, nested, *p),
                        other => AExpr::Cast(*ty, Box::new(other), *p),
                    }
                }
            }
        };
        self.retype(was, out)
    }

    fn structural(&self, e: &AExpr) -> AExpr {
        let was = self.ty(e);
        let out = match e {
            AExpr::IntLit(_) | AExpr::Var(..) => return e.clone(),
            AExpr::Neg(inner, p) => AExpr::Neg(Box::new(self.structural(inner)), *p),
            AExpr::BitNot(inner, p) => AExpr::BitNot(Box::new(self.structural(inner)), *p),
            AExpr::Cast(ty, inner, p) => AExpr::Cast(*ty, Box::new(self.structural(inner)), *p),
            AExpr::BitOp(op, l, r, p) => {
                AExpr::BitOp(*op, Box::new(self.structural(l)), Box::new(self.structural(r)), *p)
            }
            AExpr::BinOp(op, l, r, p) => {
                let (l, r) = (self.structural(l), self.structural(r));
                match op {
                    ArithOp::Sub if l == r => AExpr::int(0),
                    ArithOp::Sub if self.is_lit(&r, 0) => l,
                    ArithOp::Add if self.is_lit(&r, 0) => l,
                    ArithOp::Add if self.is_lit(&l, 0) => r,
                    ArithOp::Mul if self.is_lit(&l, 0) || self.is_lit(&r, 0) => AExpr::int(0),
                    ArithOp::Mul if self.is_lit(&r, 1) => l,
                    ArithOp::Mul if self.is_lit(&l, 1) => r,
                    _ => AExpr::BinOp(*op, Box::new(l), Box::new(r), *p),
                }
            }
        };
        self.retype(was, out)
    }

    fn cmp_literals(&self, op: CmpOp, l: &AExpr, r: &AExpr) -> Option<bool> {
        let (a, b) = (self.lit_value(l)?, self.lit_value(r)?);
        if self.env.is_none() {
            return Some(op.holds(&a, &b));
        }
        let (a, b) = (Word32(self.word(&a)), Word32(self.word(&b)));
        Some(match self.ty(l).or(self.ty(r)).unwrap_or(Ty::I32) {
            Ty::I32 => op.holds(&a.signed(), &b.signed()),
            Ty::U32 => op.holds(&a.0, &b.0),
        })
    }

    fn boolean(&self, b: &BExpr) -> BExpr {
        match b {
            BExpr::BoolLit(_) => b.clone(),
            BExpr::Cmp(op, l, r, p) => match self.cmp_literals(*op, l, r) {
                Some(v) => BExpr::BoolLit(v),
                None => BExpr::Cmp(*op, l.clone(), r.clone(), *p),
            },
            BExpr::Not(inner) => match self.boolean(inner) {
                BExpr::BoolLit(v) => BExpr::BoolLit(!v),
                BExpr::Not(twice) => *twice,
                other => BExpr::not(other),
            },
            BExpr::And(l, r) => match (self.boolean(l), self.boolean(r)) {
                (BExpr::BoolLit(false), _) | (_, BExpr::BoolLit(false)) => BExpr::BoolLit(false),
                (BExpr::BoolLit(true), other) | (other, BExpr::BoolLit(true)) => other,
                (l, r) => BExpr::and(l, r),
            },
            BExpr::Or(l, r) => match (self.boolean(l), self.boolean(r)) {
                (BExpr::BoolLit(true), _) | (_, BExpr::BoolLit(true)) => BExpr::BoolLit(true),
                (BExpr::BoolLit(false), other) | (other, BExpr::BoolLit(false)) => other,
                (l, r) => BExpr::or(l, r),
            },
        }
    }

    fn aexp_fix(&self, e: &AExpr) -> AExpr {
        let mut cur = e.clone();
        for _ in 0..MAX_PASSES {
            let next = self.fold(&self.structural(&cur));
            if next == cur {
                break;
            }
            cur = next;
        }
        cur
    }

    fn bexp_fix(&self, b: &BExpr) -> BExpr {
        let arith = map_bexp_leaves(b, &|e| self.aexp_fix(e));
        self.boolean(&arith)
    }

    fn expressions(&self, c: &Com) -> Com {
        match c {
            Com::Skip => Com::Skip,
            Com::Assign(x, e, p) => Com::Assign(x.clone(), self.aexp_fix(e), *p),
            Com::Seq(a, b) => Com::seq(self.expressions(a), self.expressions(b)),
            Com::If(b, t, e) => Com::ite(self.bexp_fix(b), self.expressions(t), self.expressions(e)),
            Com::While { cond, invariant, body, pos } => Com::While {
                cond: self.bexp_fix(cond),
                invariant: invariant.clone(),
                body: Box::new(self.expressions(body)),
                pos: *pos,
            },
        }
    }
}

fn map_bexp_leaves(b: &BExpr, f: &dyn Fn(&AExpr) -> AExpr) -> BExpr {
    match b {
        BExpr::BoolLit(v) => BExpr::BoolLit(*v),
        BExpr::Cmp(op, l, r, p) => BExpr::Cmp(*op, f(l), f(r), *p),
        BExpr::Not(inner) => BExpr::not(map_bexp_leaves(inner, f)),
        BExpr::And(l, r) => BExpr::and(map_bexp_leaves(l, f), map_bexp_leaves(r, f)),
        BExpr::Or(l, r) => BExpr::or(map_bexp_leaves(l, f), map_bexp_leaves(r, f)),
    }
}

const UNBOUNDED: Rw<'static> = Rw { env: None };

/// Folds literal subexpressions and gathers the literals of additive chains.
pub fn const_fold(e: &AExpr) -> AExpr {
    UNBOUNDED.fold(e)
}

/// `e - e`, and the identities of 0 and 1.
pub fn simplify_structural(e: &AExpr) -> AExpr {
    UNBOUNDED.structural(e)
}

/// Dominance and identity laws for the connectives; literal comparisons.
pub fn simplify_bool(b: &BExpr) -> BExpr {
    UNBOUNDED.boolean(b)
}

// Keeps sequences right-nested when an eliminated branch leaves a sequence
// in first position.
fn append(a: Com, b: Com) -> Com {
    match a {
        Com::Seq(a1, a2) => Com::seq(*a1, append(*a2, b)),
        a => Com::seq(a, b),
    }
}

/// Removes branches and loops decided by a literal condition, and `skip`s
/// in sequences.
pub fn dead_code(c: &Com) -> Com {
    match c {
        Com::Skip | Com::Assign(..) => c.clone(),
        Com::Seq(a, b) => match (dead_code(a), dead_code(b)) {
            (Com::Skip, other) | (other, Com::Skip) => other,
            (a, b) => append(a, b),
        },
        Com::If(BExpr::BoolLit(true), t, _) => dead_code(t),
        Com::If(BExpr::BoolLit(false), _, e) => dead_code(e),
        Com::If(b, t, e) => Com::ite(b.clone(), dead_code(t), dead_code(e)),
        Com::While { cond: BExpr::BoolLit(false), .. } => Com::Skip,
        Com::While { cond, invariant, body, pos } => Com::While {
            cond: cond.clone(),
            invariant: invariant.clone(),
            body: Box::new(dead_code(body)),
            pos: *pos,
        },
    }
}

/// Applies the rewrites of `level` to a fixed point. Ill-typed programs are
/// returned unchanged.
pub fn optimize(p: &Program, level: OptLevel) -> Program {
    if level == OptLevel::O0 {
        return p.clone();
    }
    let env;
    let rw = if p.is_typed() || !p.body.is_core() {
        match typecheck_or_default(p) {
            Ok(tp) => {
                env = tp.env;
                Rw { env: Some(&env) }
            }
            Err(_) => return p.clone(),
        }
    } else {
        UNBOUNDED
    };
    let mut body = p.body.clone();
    for _ in 0..MAX_PASSES {
        let mut next = rw.expressions(&body);
        if level >= OptLevel::O2 {
            next = dead_code(&next);
        }
        if next == body {
            break;
        }
        body = next;
    }
    Program { decls: p.decls.clone(), body }
}
