//! Differential testing: run generated programs on several engines and
//! compare final stores.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::ast::{AExpr, BExpr, Com, Program};
use crate::fixed::{ceval_fixed, typecheck, WordStore};
use crate::gen::{gen_program, gen_store, GenSpec};
use crate::mips::{codegen_typed, simulate, SimOutcome, Strategy};
use crate::pretty::pretty;
use crate::semantics::{ceval_fuel, run_small, Outcome, Store};
use crate::stack::{compile_program, vm_exec, StackProgram, VmOutcome};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Engine {
    Bigstep,
    Smallstep,
    StackVm,
    /// MIPS with naive stack codegen.
    Mips,
    /// MIPS with Sethi-Ullman register allocation.
    MipsSu,
}

impl Engine {
    pub const ALL: [Engine; 5] = [Engine::Bigstep, Engine::Smallstep, Engine::StackVm, Engine::Mips, Engine::MipsSu];

    pub fn name(self) -> &'static str {
        match self {
            Engine::Bigstep => "bigstep",
            Engine::Smallstep => "smallstep",
            Engine::StackVm => "stackvm",
            Engine::Mips => "mips",
            Engine::MipsSu => "mips-su",
        }
    }

    /// Whether the engine runs programs of the given mode. Only the
    /// reference interpreter and the MIPS simulator model 32-bit words; MIPS
    /// has no unbounded integers.
    pub fn supports(self, typed: bool) -> bool {
        match self {
            Engine::Bigstep => true,
            Engine::Smallstep | Engine::StackVm => !typed,
            Engine::Mips | Engine::MipsSu => typed,
        }
    }
}

impl fmt::Display for Engine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Engine {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Engine::ALL.into_iter().find(|e| e.name() == s).ok_or_else(|| format!("unknown engine `{s}`"))
    }
}

/// Parses a comma-separated engine list.
pub fn parse_engines(s: &str) -> Result<Vec<Engine>, String> {
    s.split(',').map(|e| e.trim().parse()).collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EngineOutput {
    Store(Store),
    Words(WordStore),
    OutOfFuel,
    /// The engine failed outright; always a divergence.
    Error(String),
    Unsupported,
}

impl EngineOutput {
    fn kind(&self) -> &'static str {
        match self {
            EngineOutput::Store(_) | EngineOutput::Words(_) => "done",
            EngineOutput::OutOfFuel => "out-of-fuel",
            EngineOutput::Error(_) => "error",
            EngineOutput::Unsupported => "unsupported",
        }
    }
}

impl fmt::Display for EngineOutput {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EngineOutput::Store(s) => write!(f, "{}", s.to_string().trim_end().replace('\n', " ")),
            EngineOutput::Words(w) => {
                let items: Vec<String> = w.iter().map(|(x, v)| format!("{x}={:#x}", v.0)).collect();
                f.write_str(&items.join(" "))
            }
            EngineOutput::Error(e) => write!(f, "error: {e}"),
            other => f.write_str(other.kind()),
        }
    }
}

/// Fault injection for checking the harness itself.
pub type StackMutator = fn(&mut StackProgram);

#[derive(Debug, Clone)]
pub struct DiffOptions {
    pub fail_fast: bool,
    /// Shrink the first divergence to a smaller witness.
    pub shrink: bool,
    /// Loop-iteration fuel for the interpreters; `None` derives it from the
    /// generator spec. Step and instruction budgets scale from it.
    pub fuel: Option<u64>,
    pub mutate_stack: Option<StackMutator>,
}

impl Default for DiffOptions {
    fn default() -> Self {
        DiffOptions { fail_fast: false, shrink: true, fuel: None, mutate_stack: None }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Divergence {
    pub case: u64,
    pub program: String,
    pub store: Store,
    pub outputs: Vec<(Engine, EngineOutput)>,
    /// Smaller program and store that still diverge.
    pub witness: Option<(String, Store)>,
}

impl fmt::Display for Divergence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "case {} diverges", self.case)?;
        writeln!(f, "program:\n{}", self.program)?;
        writeln!(f, "store: {}", self.store.to_string().trim_end().replace('\n', " "))?;
        for (e, out) in &self.outputs {
            writeln!(f, "  {e}: {out}")?;
        }
        if let Some((p, s)) = &self.witness {
            writeln!(f, "minimal witness:\n{p}")?;
            writeln!(f, "store: {}", s.to_string().trim_end().replace('\n', " "))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DiffReport {
    pub cases: u64,
    pub agreements: u64,
    pub divergences: u64,
    /// Cases where some engine ran out of fuel, so stores are not compared.
    pub skipped: u64,
    /// Per engine, how many runs ended in each outcome kind.
    pub tallies: BTreeMap<Engine, BTreeMap<&'static str, u64>>,
    pub first_divergence: Option<Divergence>,
}

impl fmt::Display for DiffReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "cases: {}  agree: {}  diverge: {}  skipped: {}",
            self.cases, self.agreements, self.divergences, self.skipped
        )?;
        for (engine, tally) in &self.tallies {
            let parts: Vec<String> = tally.iter().map(|(k, n)| format!("{k}={n}")).collect();
            writeln!(f, "  {engine}: {}", parts.join(" "))?;
        }
        if let Some(d) = &self.first_divergence {
            write!(f, "{d}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Verdict {
    Agree,
    Diverge,
    Skip,
}

struct Budgets {
    fuel: u64,
    steps: u64,
    instrs: u64,
}

impl Budgets {
    fn new(fuel: u64) -> Self {
        // Generous multiples; generated programs never get near them.
        Budgets { fuel, steps: fuel.saturating_mul(2_000), instrs: fuel.saturating_mul(20_000) }
    }
}

/// Runs one engine on one program.
pub fn run_engine(
    engine: Engine,
    p: &Program,
    s: &Store,
    fuel: u64,
    mutate: Option<StackMutator>,
) -> EngineOutput {
    let b = Budgets::new(fuel);
    let typed = p.is_typed();
    if !engine.supports(typed) {
        return EngineOutput::Unsupported;
    }
    let untyped = |r: Result<Outcome, _>| match r {
        Ok(Outcome::Done(s)) => EngineOutput::Store(s),
        Ok(Outcome::OutOfFuel) => EngineOutput::OutOfFuel,
        Err(e) => EngineOutput::Error(format!("{e}")),
    };
    if !typed {
        return match engine {
            Engine::Bigstep => untyped(ceval_fuel(b.fuel, &p.body, s)),
            Engine::Smallstep => untyped(run_small(b.steps, &p.body, s)),
            Engine::StackVm => match compile_program(p) {
                Ok(mut code) => {
                    if let Some(m) = mutate {
                        m(&mut code);
                    }
                    match vm_exec(b.instrs, &code, s) {
                        VmOutcome::Done(s) => EngineOutput::Store(s),
                        VmOutcome::OutOfFuel => EngineOutput::OutOfFuel,
                        VmOutcome::MachineError(e) => EngineOutput::Error(e.to_string()),
                    }
                }
                Err(e) => EngineOutput::Error(e.to_string()),
            },
            _ => unreachable!("checked by supports"),
        };
    }
    let tp = match typecheck(p) {
        Ok(tp) => tp,
        Err(e) => return EngineOutput::Error(e.to_string()),
    };
    let words = WordStore::from_store(s);
    match engine {
        Engine::Bigstep => match ceval_fixed(b.fuel, &tp.body, &words) {
            Outcome::Done(w) => EngineOutput::Words(w),
            Outcome::OutOfFuel => EngineOutput::OutOfFuel,
        },
        Engine::Mips | Engine::MipsSu => {
            let strategy = if engine == Engine::Mips { Strategy::Naive } else { Strategy::SU };
            match codegen_typed(&tp, strategy, true) {
                Ok(m) => match simulate(&m, &words, b.instrs) {
                    SimOutcome::Halted(w) => EngineOutput::Words(w),
                    SimOutcome::BudgetExhausted => EngineOutput::OutOfFuel,
                    SimOutcome::Trap(t) => EngineOutput::Error(format!("trap: {t}")),
                },
                Err(e) => EngineOutput::Error(e.to_string()),
            }
        }
        _ => unreachable!("checked by supports"),
    }
}

// Word stores only cover variables the engine knows about; compare on the
// program's variables so an engine that keeps extra bindings still agrees.
fn same(p: &Program, a: &EngineOutput, b: &EngineOutput) -> bool {
    match (a, b) {
        (EngineOutput::Store(x), EngineOutput::Store(y)) => x == y,
        (EngineOutput::Words(x), EngineOutput::Words(y)) => p.variables().iter().all(|v| x.get(v) == y.get(v)),
        _ => false,
    }
}

fn judge(p: &Program, outputs: &[(Engine, EngineOutput)]) -> Verdict {
    let live: Vec<&EngineOutput> =
        outputs.iter().map(|(_, o)| o).filter(|o| !matches!(o, EngineOutput::Unsupported)).collect();
    if live.iter().any(|o| matches!(o, EngineOutput::Error(_))) {
        return Verdict::Diverge;
    }
    if live.iter().any(|o| matches!(o, EngineOutput::OutOfFuel)) {
        return Verdict::Skip;
    }
    match live.split_first() {
        Some((first, rest)) if rest.iter().any(|o| !same(p, first, o)) => Verdict::Diverge,
        _ => Verdict::Agree,
    }
}

fn run_all(engines: &[Engine], p: &Program, s: &Store, opts: &DiffOptions, fuel: u64) -> Vec<(Engine, EngineOutput)> {
    engines.iter().map(|&e| (e, run_engine(e, p, s, fuel, opts.mutate_stack))).collect()
}

struct CaseResult {
    program: Program,
    store: Store,
    outputs: Vec<(Engine, EngineOutput)>,
    verdict: Verdict,
}

const CHUNK: u64 = 256;

/// Generates `count` cases from `spec` and compares `engines` on each.
pub fn run_diff(spec: &GenSpec, count: u64, engines: &[Engine]) -> DiffReport {
    run_diff_with(spec, count, engines, &DiffOptions::default())
}

pub fn run_diff_with(spec: &GenSpec, count: u64, engines: &[Engine], opts: &DiffOptions) -> DiffReport {
    let fuel = opts.fuel.unwrap_or_else(|| spec.fuel_bound());
    let mut report = DiffReport::default();
    let mut start = 0;
    // Chunks run in parallel; results are folded in case order so the
    // report matches a sequential run.
    'outer: while start < count {
        let end = (start + CHUNK).min(count);
        let results: Vec<CaseResult> = (start..end)
            .into_par_iter()
            .map(|i| {
                let case = spec.case(i);
                let program = gen_program(&case);
                let store = gen_store(case.seed, &program);
                let outputs = run_all(engines, &program, &store, opts, fuel);
                let verdict = judge(&program, &outputs);
                CaseResult { program, store, outputs, verdict }
            })
            .collect();
        for (offset, r) in results.into_iter().enumerate() {
            let case = start + offset as u64;
            report.cases += 1;
            for (e, out) in &r.outputs {
                *report.tallies.entry(*e).or_default().entry(out.kind()).or_default() += 1;
            }
            match r.verdict {
                Verdict::Agree => report.agreements += 1,
                Verdict::Skip => report.skipped += 1,
                Verdict::Diverge => {
                    report.divergences += 1;
                    if report.first_divergence.is_none() {
                        let witness = opts.shrink.then(|| {
                            let (p, s) = shrink(engines, &r.program, &r.store, opts, fuel);
                            (pretty(&p), s)
                        });
                        report.first_divergence = Some(Divergence {
                            case,
                            program: pretty(&r.program),
                            store: r.store.clone(),
                            outputs: r.outputs.clone(),
                            witness,
                        });
                    }
                    if opts.fail_fast {
                        break 'outer;
                    }
                }
            }
        }
        start = end;
    }
    report
}

fn aexp_reductions(e: &AExpr) -> Vec<AExpr> {
    let mut out = Vec::new();
    if !matches!(e, AExpr::IntLit(_)) {
        out.push(AExpr::int(0));
        out.push(AExpr::int(1));
    }
    match e {
        AExpr::IntLit(_) | AExpr::Var(..) => {}
        AExpr::Neg(inner, p) | AExpr::BitNot(inner, p) | AExpr::Cast(_, inner, p) => {
            out.push((**inner).clone());
            for r in aexp_reductions(inner) {
                out.push(match e {
                    AExpr::Neg(..) => AExpr::Neg(Box::new(r), *p),
                    AExpr::BitNot(..) => AExpr::BitNot(Box::new(r), *p),
                    AExpr::Cast(ty, ..) => AExpr::Cast(*ty, Box::new(r), *p),
                    _ => unreachable!(),
                });
            }
        }
        AExpr::BinOp(_, l, r, _) | AExpr::BitOp(_, l, r, _) => {
            out.push((**l).clone());
            out.push((**r).clone());
            let rebuild = |l: AExpr, r: AExpr| match e {
                AExpr::BinOp(op, _, _, p) => AExpr::BinOp(*op, Box::new(l), Box::new(r), *p),
                AExpr::BitOp(op, _, _, p) => AExpr::BitOp(*op, Box::new(l), Box::new(r), *p),
                _ => unreachable!(),
            };
            for x in aexp_reductions(l) {
                out.push(rebuild(x, (**r).clone()));
            }
            for x in aexp_reductions(r) {
                out.push(rebuild((**l).clone(), x));
            }
        }
    }
    out
}

fn bexp_reductions(b: &BExpr) -> Vec<BExpr> {
    let mut out = Vec::new();
    if !matches!(b, BExpr::BoolLit(_)) {
        out.push(BExpr::BoolLit(true));
        out.push(BExpr::BoolLit(false));
    }
    match b {
        BExpr::BoolLit(_) => {}
        BExpr::Cmp(op, l, r, p) => {
            out.extend(aexp_reductions(l).into_iter().map(|x| BExpr::Cmp(*op, x, r.clone(), *p)));
            out.extend(aexp_reductions(r).into_iter().map(|x| BExpr::Cmp(*op, l.clone(), x, *p)));
        }
        BExpr::Not(inner) => {
            out.push((**inner).clone());
            out.extend(bexp_reductions(inner).into_iter().map(BExpr::not));
        }
        BExpr::And(l, r) | BExpr::Or(l, r) => {
            out.push((**l).clone());
            out.push((**r).clone());
            let and = matches!(b, BExpr::And(..));
            let rebuild = |l, r| if and { BExpr::and(l, r) } else { BExpr::or(l, r) };
            out.extend(bexp_reductions(l).into_iter().map(|x| rebuild(x, (**r).clone())));
            out.extend(bexp_reductions(r).into_iter().map(|x| rebuild((**l).clone(), x)));
        }
    }
    out
}

fn com_reductions(c: &Com) -> Vec<Com> {
    let mut out = Vec::new();
    match c {
        Com::Skip => {}
        Com::Assign(x, e, p) => {
            out.push(Com::Skip);
            out.extend(aexp_reductions(e).into_iter().map(|e| Com::Assign(x.clone(), e, *p)));
        }
        Com::Seq(a, b) => {
            out.push((**a).clone());
            out.push((**b).clone());
            out.extend(com_reductions(a).into_iter().map(|a| Com::seq(a, (**b).clone())));
            out.extend(com_reductions(b).into_iter().map(|b| Com::seq((**a).clone(), b)));
        }
        Com::If(b, t, e) => {
            out.push((**t).clone());
            out.push((**e).clone());
            out.extend(bexp_reductions(b).into_iter().map(|b| Com::ite(b, (**t).clone(), (**e).clone())));
            out.extend(com_reductions(t).into_iter().map(|t| Com::ite(b.clone(), t, (**e).clone())));
            out.extend(com_reductions(e).into_iter().map(|e| Com::ite(b.clone(), (**t).clone(), e)));
        }
        Com::While { cond, invariant, body, pos } => {
            out.push(Com::Skip);
            out.extend(com_reductions(body).into_iter().map(|body| Com::While {
                cond: cond.clone(),
                invariant: invariant.clone(),
                body: Box::new(body),
                pos: *pos,
            }));
        }
    }
    out
}

fn measure(p: &Program, s: &Store) -> (usize, usize) {
    (p.size(), s.iter().filter(|(_, v)| **v != 0.into()).count())
}

/// Greedy one-step reductions of program and store while the divergence
/// persists.
pub fn shrink(engines: &[Engine], p: &Program, s: &Store, opts: &DiffOptions, fuel: u64) -> (Program, Store) {
    let diverges = |p: &Program, s: &Store| {
        (!p.is_typed() || typecheck(p).is_ok()) && judge(p, &run_all(engines, p, s, opts, fuel)) == Verdict::Diverge
    };
    let (mut p, mut s) = (p.clone(), s.clone());
    'improve: loop {
        let here = measure(&p, &s);
        for body in com_reductions(&p.body) {
            let cand = Program { decls: p.decls.clone(), body };
            if measure(&cand, &s) < here && diverges(&cand, &s) {
                p = cand;
                continue 'improve;
            }
        }
        let names: Vec<String> = s.iter().filter(|(_, v)| **v != 0.into()).map(|(x, _)| x.to_string()).collect();
        for x in names {
            let cand = s.clone().with(x, 0);
            if diverges(&p, &cand) {
                s = cand;
                continue 'improve;
            }
        }
        return (p, s);
    }
}
