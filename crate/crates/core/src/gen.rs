//! Seeded random programs for differential testing.
//!
//! Every loop has the shape `i := 0; while i <= K do body; i := i + 1 done`
//! with a counter the body never writes, so generated programs terminate
//! and [`GenSpec::fuel_bound`] gives enough fuel for any of them.

use num_bigint::BigInt;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::ast::{AExpr, ArithOp, BExpr, BitOp, CmpOp, Com, Decl, Program, Ty};
use crate::fixed::{typecheck_or_default, Word32};
use crate::semantics::Store;

/// Loops nest at most this deep.
pub const MAX_NESTING: u32 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct GenSpec {
    pub seed: u64,
    /// Command nesting depth; 1 gives straight-line code.
    pub max_depth: u32,
    pub max_loop_bound: u32,
    pub var_pool: u32,
    pub typed: bool,
}

impl Default for GenSpec {
    fn default() -> Self {
        GenSpec { seed: 0, max_depth: 4, max_loop_bound: 6, var_pool: 4, typed: false }
    }
}

impl GenSpec {
    pub fn with_seed(self, seed: u64) -> Self {
        GenSpec { seed, ..self }
    }

    /// Seed of the `i`-th case derived from this spec.
    pub fn case(self, i: u64) -> Self {
        self.with_seed(mix(self.seed, i))
    }

    /// Loop iterations any generated program can perform, doubled.
    pub fn fuel_bound(&self) -> u64 {
        let per_loop = (self.max_loop_bound as u64 + 1).pow(MAX_NESTING);
        // A command of depth d has fewer than 2^d loops.
        2 * per_loop * (1u64 << self.max_depth.min(20))
    }
}

fn mix(seed: u64, i: u64) -> u64 {
    // splitmix64 finaliser
    let mut z = seed.wrapping_add(i.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

// Sequences come out right-nested, the way the parser builds them.
fn seq(a: Com, b: Com) -> Com {
    fn flatten(c: Com, out: &mut Vec<Com>) {
        match c {
            Com::Seq(a, b) => {
                flatten(*a, out);
                flatten(*b, out);
            }
            other => out.push(other),
        }
    }
    let mut items = Vec::new();
    flatten(a, &mut items);
    flatten(b, &mut items);
    Com::seq_all(items)
}

struct Gen<'a> {
    spec: &'a GenSpec,
    rng: ChaCha8Rng,
    pool: Vec<(String, Ty)>,
}

impl Gen<'_> {
    fn pick_var(&mut self, ty: Option<Ty>) -> String {
        let vars: Vec<&str> =
            self.pool.iter().filter(|(_, t)| ty.is_none_or(|ty| *t == ty)).map(|(x, _)| x.as_str()).collect();
        vars.choose(&mut self.rng).expect("pool covers both types").to_string()
    }

    fn literal(&mut self) -> AExpr {
        if self.spec.typed && self.rng.gen_ratio(1, 8) {
            let special = [0x7fff_ffffu32, 0x8000_0000, 0xffff_ffff, 0xffff, 0x1_0000];
            return AExpr::int(*special.choose(&mut self.rng).unwrap());
        }
        AExpr::int(self.rng.gen_range(0..=9))
    }

    // `ty` is `None` in untyped programs.
    fn aexp(&mut self, depth: u32, ty: Option<Ty>, in_loop: bool) -> AExpr {
        if depth <= 1 || self.rng.gen_ratio(1, 3) {
            return if self.rng.gen_bool(0.6) { AExpr::var(self.pick_var(ty)) } else { self.literal() };
        }
        let typed = ty.is_some();
        let choice = self.rng.gen_range(0..if typed { 8 } else { 5 });
        match choice {
            0 | 1 => AExpr::bin(ArithOp::Add, self.aexp(depth - 1, ty, in_loop), self.aexp(depth - 1, ty, in_loop)),
            2 => AExpr::bin(ArithOp::Sub, self.aexp(depth - 1, ty, in_loop), self.aexp(depth - 1, ty, in_loop)),
            3 => AExpr::neg(self.aexp(depth - 1, ty, in_loop)),
            4 => {
                // Unbounded values grow fast under repeated squaring, so loop
                // bodies only scale by small constants.
                let l = self.aexp(depth - 1, ty, in_loop);
                let r = if in_loop && !typed {
                    AExpr::int(self.rng.gen_range(0..=3))
                } else {
                    self.aexp(depth - 1, ty, in_loop)
                };
                AExpr::bin(ArithOp::Mul, l, r)
            }
            5 => {
                let other = if ty == Some(Ty::I32) { Ty::U32 } else { Ty::I32 };
                AExpr::cast(ty.unwrap(), self.aexp(depth - 1, Some(other), in_loop))
            }
            _ if ty == Some(Ty::U32) => {
                if self.rng.gen_ratio(1, 5) {
                    AExpr::bit_not(self.aexp(depth - 1, ty, in_loop))
                } else {
                    let op = *[BitOp::And, BitOp::Or, BitOp::Xor, BitOp::Shl, BitOp::Shr].choose(&mut self.rng).unwrap();
                    AExpr::bit(op, self.aexp(depth - 1, ty, in_loop), self.aexp(depth - 1, ty, in_loop))
                }
            }
            // i32 has no bit operators; cast a u32 expression instead.
            _ => AExpr::cast(Ty::I32, self.aexp(depth - 1, Some(Ty::U32), in_loop)),
        }
    }

    fn some_type(&mut self) -> Option<Ty> {
        self.spec.typed.then(|| if self.rng.gen_bool(0.5) { Ty::I32 } else { Ty::U32 })
    }

    fn bexp(&mut self, depth: u32, in_loop: bool) -> BExpr {
        if depth <= 1 || self.rng.gen_ratio(1, 2) {
            if self.rng.gen_ratio(1, 12) {
                return BExpr::BoolLit(self.rng.gen_bool(0.5));
            }
            let ty = self.some_type();
            let op = *[CmpOp::Eq, CmpOp::Le, CmpOp::Lt].choose(&mut self.rng).unwrap();
            let d = depth.clamp(1, 3);
            return BExpr::cmp(op, self.aexp(d, ty, in_loop), self.aexp(d, ty, in_loop));
        }
        match self.rng.gen_range(0..3) {
            0 => BExpr::not(self.bexp(depth - 1, in_loop)),
            1 => BExpr::and(self.bexp(depth - 1, in_loop), self.bexp(depth - 1, in_loop)),
            _ => BExpr::or(self.bexp(depth - 1, in_loop), self.bexp(depth - 1, in_loop)),
        }
    }

    fn assign(&mut self, nesting: u32) -> Com {
        let x = self.pick_var(None);
        let ty = self.spec.typed.then(|| self.pool.iter().find(|(v, _)| *v == x).unwrap().1);
        let d = self.rng.gen_range(1..=3);
        Com::assign(x, self.aexp(d, ty, nesting > 0))
    }

    fn com(&mut self, depth: u32, nesting: u32) -> Com {
        if depth <= 1 {
            let n = self.rng.gen_range(1..=3);
            return Com::seq_all((0..n).map(|_| self.assign(nesting)));
        }
        match self.rng.gen_range(0..4) {
            0 => self.assign(nesting),
            1 => seq(self.com(depth - 1, nesting), self.com(depth - 1, nesting)),
            2 => {
                let b = self.bexp(2, nesting > 0);
                Com::ite(b, self.com(depth - 1, nesting), self.com(depth - 1, nesting))
            }
            _ if nesting < MAX_NESTING => {
                let i = format!("i{nesting}");
                let k = self.rng.gen_range(0..=self.spec.max_loop_bound);
                let body = self.com(depth - 1, nesting + 1);
                let step = Com::assign(i.clone(), AExpr::bin(ArithOp::Add, AExpr::var(&i), AExpr::int(1)));
                seq(
                    Com::assign(i.clone(), AExpr::int(0)),
                    Com::while_(BExpr::cmp(CmpOp::Le, AExpr::var(&i), AExpr::int(k)), seq(body, step)),
                )
            }
            _ => seq(self.assign(nesting), self.com(depth - 1, nesting)),
        }
    }
}

pub fn gen_program(spec: &GenSpec) -> Program {
    assert!(spec.max_depth >= 1, "depth must be at least 1");
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = spec.var_pool.max(if spec.typed { 2 } else { 1 });
    let pool = (0..n)
        .map(|i| {
            // The first two variables cover both types so every expression
            // type has a variable to draw on.
            let ty = match i {
                0 => Ty::I32,
                1 => Ty::U32,
                _ if rng.gen_bool(0.5) => Ty::I32,
                _ => Ty::U32,
            };
            (format!("v{i}"), if spec.typed { ty } else { Ty::I32 })
        })
        .collect();
    let mut g = Gen { spec, rng, pool };
    let depth = spec.max_depth;
    let body = g.com(depth, 0);
    if !spec.typed {
        return Program::untyped(body);
    }
    let mut decls: Vec<Decl> = g.pool.iter().map(|(x, t)| Decl::new(x.clone(), Some(*t))).collect();
    for level in 0..MAX_NESTING {
        let i = format!("i{level}");
        if body.vars().contains(&i) {
            decls.push(Decl::new(i, Some(Ty::I32)));
        }
    }
    Program { decls, body }
}

/// A random initial store over the program's variables. Values of typed
/// programs are words read at their declared type.
pub fn gen_store(seed: u64, p: &Program) -> Store {
    let mut rng = ChaCha8Rng::seed_from_u64(mix(seed, 0x5eed));
    let env = typecheck_or_default(p).map(|tp| tp.env).unwrap_or_default();
    let mut s = Store::new();
    for x in p.variables() {
        if p.is_typed() {
            let w = if rng.gen_bool(0.5) { rng.gen_range(0..16) } else { rng.gen::<u32>() };
            s.set(x.clone(), Word32(w).to_bigint(env.get(&x).unwrap_or(Ty::I32)));
        } else {
            s.set(x, BigInt::from(rng.gen_range(-20..=20)));
        }
    }
    s
}
