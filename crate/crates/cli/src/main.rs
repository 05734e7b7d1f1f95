//! `cimp`: compile, run, verify and fuzz imp programs.

mod diag;

use std::fs;
use std::io::Write as _;
use std::panic::{self, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};

use clap::{Args, Parser, Subcommand, ValueEnum};

use cimp_core::ast::{Assertion, BExpr, Com};
use cimp_core::diff::{parse_engines, run_diff_with, DiffOptions, Engine};
use cimp_core::fixed::{ceval_fixed, typecheck, typecheck_or_default, TypeError, TypedProgram, WordStore};
use cimp_core::gen::GenSpec;
use cimp_core::hoare::{bounded_check, emit_smtlib, vcgen, BoundedResult, HoareTriple, VcError};
use cimp_core::mips::{codegen, emit_asm, simulate, CodegenError, SimOutcome, Strategy};
use cimp_core::optimizer::{optimize, OptLevel};
use cimp_core::parser::parse_assertion;
use cimp_core::regalloc::{alloc_codegen, alloc_pair, listing};
use cimp_core::semantics::{ceval_fuel, run_small, EvalError, Outcome};
use cimp_core::stack::{compile_program, vm_exec, VmOutcome};
use cimp_core::{parse_program, pretty, FrontendError, Program, Store};

use diag::CliError;

#[derive(Parser)]
#[command(name = "cimp", version, about = "Compiler and interpreters for the imp language")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Translate a program to stack code or MIPS assembly.
    Compile(CompileArgs),
    /// Execute a program and print the final store.
    Run(RunArgs),
    /// Generate verification conditions for a program.
    Vc(VcArgs),
    /// Check declarations and print each variable's type.
    Typecheck { file: PathBuf },
    /// Compare engines on generated programs.
    Fuzz(FuzzArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Backend {
    Stack,
    Mips,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Regalloc {
    Naive,
    Su,
}

impl Regalloc {
    fn strategy(self) -> Strategy {
        match self {
            Regalloc::Naive => Strategy::Naive,
            Regalloc::Su => Strategy::SU,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Emit {
    Stack,
    Regtree,
    Asm,
    Imp,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum RunEngine {
    Bigstep,
    Smallstep,
    Stackvm,
    Mips,
}

fn opt_level(s: &str) -> Result<OptLevel, String> {
    let n: u8 = s.parse().map_err(|_| format!("`{s}` is not a level"))?;
    OptLevel::try_from(n).map_err(|n| format!("no optimization level {n}; use 0, 1 or 2"))
}

#[derive(Args)]
struct CompileArgs {
    file: PathBuf,
    #[arg(long, value_enum, default_value = "stack")]
    backend: Backend,
    #[arg(long, value_enum, default_value = "naive")]
    regalloc: Regalloc,
    /// Expand `*` into a shift-and-add loop on MIPS.
    #[arg(long)]
    emulate_mul: bool,
    #[arg(short = 'O', value_parser = opt_level, default_value = "0")]
    opt: OptLevel,
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// Defaults to the backend's own output.
    #[arg(long, value_enum)]
    emit: Option<Emit>,
}

#[derive(Args)]
struct RunArgs {
    file: PathBuf,
    #[arg(long, value_enum, default_value = "bigstep")]
    engine: RunEngine,
    /// Loop iterations (bigstep), steps (smallstep) or instructions (stackvm).
    #[arg(long, default_value_t = 1_000_000)]
    fuel: u64,
    /// Instruction budget of the MIPS simulator.
    #[arg(long, default_value_t = 100_000_000)]
    budget: u64,
    /// Initial store, one `name=value` per line.
    #[arg(long)]
    store_in: Option<PathBuf>,
    #[arg(short = 'O', value_parser = opt_level, default_value = "0")]
    opt: OptLevel,
    #[arg(long, value_enum, default_value = "naive")]
    regalloc: Regalloc,
    #[arg(long)]
    emulate_mul: bool,
}

#[derive(Args)]
#[command(group(clap::ArgGroup::new("mode").required(true).args(["smt2", "bounded_check"])))]
struct VcArgs {
    file: PathBuf,
    #[arg(long)]
    post: String,
    #[arg(long, default_value = "true")]
    pre: String,
    /// Write one SMT-LIB2 script per condition into this directory.
    #[arg(long)]
    smt2: Option<PathBuf>,
    /// Check every condition on all stores with values in [-B, B].
    #[arg(long, value_name = "B")]
    bounded_check: Option<u32>,
}

#[derive(Args)]
struct FuzzArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1000)]
    count: u64,
    /// Comma-separated; defaults to every engine of the chosen mode.
    #[arg(long)]
    engines: Option<String>,
    #[arg(long)]
    typed: bool,
    #[arg(long)]
    fail_fast: bool,
    #[arg(long, default_value_t = 4)]
    max_depth: u32,
}

fn display(path: &Path) -> String {
    path.display().to_string()
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::user(&display(path), e.to_string()))
}

fn frontend(file: &str, e: FrontendError) -> CliError {
    CliError::at(file, e.position(), e.message())
}

fn type_error(file: &str, e: TypeError) -> CliError {
    CliError::at(file, e.position(), e.message())
}

fn load(path: &Path) -> Result<Program, CliError> {
    let src = read(path)?;
    parse_program(&src).map_err(|e| frontend(&display(path), e))
}

fn codegen_error(file: &str, e: CodegenError) -> CliError {
    match e {
        CodegenError::Type(t) => type_error(file, t),
        CodegenError::MulNotSupported(ref ps) => {
            let pos = ps.first().copied().unwrap_or_default();
            CliError::at(file, pos, format!("{e}; pass --emulate-mul"))
        }
        other => CliError::user(file, other.to_string()),
    }
}

fn unsupported(file: &str, e: EvalError) -> CliError {
    CliError::user(file, format!("{e}; the program needs the typed pipeline"))
}

fn write_out(out: Option<&Path>, text: &str) -> Result<(), CliError> {
    match out {
        Some(p) => fs::write(p, text).map_err(|e| CliError::user(&display(p), e.to_string())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

/// Register code for every expression the backends evaluate.
fn regtree(c: &Com, k: usize, out: &mut String) {
    let cond = |b: &BExpr, out: &mut String| {
        let mut stack = vec![b];
        while let Some(b) = stack.pop() {
            match b {
                BExpr::BoolLit(_) => {}
                BExpr::Cmp(_, l, r, _) => {
                    let (code, lr, rr) = alloc_pair(l, r, k);
                    out.push_str(&format!("# {} (r{lr} vs r{rr})\n", pretty::bexp_to_string(b)));
                    out.push_str(&listing(&code));
                }
                BExpr::Not(inner) => stack.push(inner),
                BExpr::And(l, r) | BExpr::Or(l, r) => {
                    stack.push(r);
                    stack.push(l);
                }
            }
        }
    };
    match c {
        Com::Skip => {}
        Com::Assign(x, e, _) => {
            out.push_str(&format!("# {x} := {}\n", pretty::aexp_to_string(e)));
            out.push_str(&listing(&alloc_codegen(e, k)));
        }
        Com::Seq(a, b) => {
            regtree(a, k, out);
            regtree(b, k, out);
        }
        Com::If(b, t, e) => {
            cond(b, out);
            regtree(t, k, out);
            regtree(e, k, out);
        }
        Com::While { cond: b, body, .. } => {
            cond(b, out);
            regtree(body, k, out);
        }
    }
}

fn compile(args: &CompileArgs) -> Result<(), CliError> {
    let file = display(&args.file);
    let p = optimize(&load(&args.file)?, args.opt);
    let emit = args.emit.unwrap_or(match args.backend {
        Backend::Stack => Emit::Stack,
        Backend::Mips => Emit::Asm,
    });
    let text = match (emit, args.backend) {
        (Emit::Imp, _) => pretty(&p),
        (Emit::Regtree, _) => {
            let k = match args.regalloc.strategy() {
                Strategy::SethiUllman { k } => k,
                Strategy::Naive => 2,
            };
            let mut out = String::new();
            regtree(&p.body, k, &mut out);
            out
        }
        (Emit::Stack, Backend::Stack) => {
            if p.is_typed() {
                return Err(CliError::user(&file, "the stack backend runs only untyped programs; use --backend mips"));
            }
            compile_program(&p).map_err(|e| unsupported(&file, e))?.listing()
        }
        (Emit::Asm, Backend::Mips) => {
            let m = codegen(&p, args.regalloc.strategy(), args.emulate_mul).map_err(|e| codegen_error(&file, e))?;
            emit_asm(&m)
        }
        (Emit::Stack, Backend::Mips) | (Emit::Asm, Backend::Stack) => {
            return Err(CliError::user(&file, "--emit does not match --backend"));
        }
    };
    write_out(args.output.as_deref(), &text)
}

fn typed(file: &str, p: &Program) -> Result<TypedProgram, CliError> {
    typecheck_or_default(p).map_err(|e| type_error(file, e))
}

fn run(args: &RunArgs) -> Result<(), CliError> {
    let file = display(&args.file);
    let p = optimize(&load(&args.file)?, args.opt);
    let store = match &args.store_in {
        Some(path) => {
            let src = read(path)?;
            src.parse::<Store>().map_err(|e| {
                CliError::at(&display(path), cimp_core::Pos::new(e.line as u32, 1), e.reason)
            })?
        }
        None => Store::new(),
    };
    let out_of_fuel = |what: &str, n: u64| CliError::Failed(format!("{file}: out of fuel after {n} {what}"));
    let fixed_width = p.is_typed() || !p.body.is_core();
    let result = match args.engine {
        RunEngine::Bigstep if fixed_width => {
            let tp = typed(&file, &p)?;
            match ceval_fixed(args.fuel, &tp.body, &WordStore::from_store(&store)) {
                Outcome::Done(w) => w.to_store(&tp.env),
                Outcome::OutOfFuel => return Err(out_of_fuel("loop iterations", args.fuel)),
            }
        }
        RunEngine::Smallstep | RunEngine::Stackvm if fixed_width => {
            return Err(CliError::user(&file, "this engine runs only untyped programs; use bigstep or mips"));
        }
        RunEngine::Bigstep => match ceval_fuel(args.fuel, &p.body, &store).map_err(|e| unsupported(&file, e))? {
            Outcome::Done(s) => s,
            Outcome::OutOfFuel => return Err(out_of_fuel("loop iterations", args.fuel)),
        },
        RunEngine::Smallstep => match run_small(args.fuel, &p.body, &store).map_err(|e| unsupported(&file, e))? {
            Outcome::Done(s) => s,
            Outcome::OutOfFuel => return Err(out_of_fuel("steps", args.fuel)),
        },
        RunEngine::Stackvm => {
            let code = compile_program(&p).map_err(|e| unsupported(&file, e))?;
            match vm_exec(args.fuel, &code, &store) {
                VmOutcome::Done(s) => s,
                VmOutcome::OutOfFuel => return Err(out_of_fuel("instructions", args.fuel)),
                VmOutcome::MachineError(e) => return Err(CliError::Internal(e.to_string())),
            }
        }
        RunEngine::Mips => {
            let tp = typed(&file, &p)?;
            let m = codegen(&p, args.regalloc.strategy(), args.emulate_mul).map_err(|e| codegen_error(&file, e))?;
            match simulate(&m, &WordStore::from_store(&store), args.budget) {
                SimOutcome::Halted(w) => w.to_store(&tp.env),
                SimOutcome::BudgetExhausted => return Err(out_of_fuel("instructions", args.budget)),
                SimOutcome::Trap(t) => return Err(CliError::Internal(format!("MIPS trap: {t}"))),
            }
        }
    };
    print!("{result}");
    Ok(())
}

fn assertion(flag: &str, src: &str) -> Result<Assertion, CliError> {
    parse_assertion(src).map_err(|e| frontend(flag, e))
}

fn vc_error(file: &str, e: VcError) -> CliError {
    match e {
        VcError::MissingInvariant(pos) => CliError::at(file, pos, "loop has no invariant annotation"),
        other => CliError::user(file, other.to_string()),
    }
}

fn vc(args: &VcArgs) -> Result<(), CliError> {
    let file = display(&args.file);
    let p = load(&args.file)?;
    let triple = HoareTriple { pre: assertion("--pre", &args.pre)?, com: p.body, post: assertion("--post", &args.post)? };
    let vcs = vcgen(&triple).map_err(|e| vc_error(&file, e))?;
    let mut failures = Vec::new();
    if let Some(bound) = args.bounded_check {
        for (i, vc) in vcs.iter().enumerate() {
            match bounded_check(vc, bound).map_err(|e| vc_error(&file, e))? {
                BoundedResult::Valid => println!("vc {i} ({}): valid", vc.origin),
                BoundedResult::Counterexample(s) => {
                    let s = s.to_string().trim_end().replace('\n', " ");
                    println!("vc {i} ({}): counterexample {s}", vc.origin);
                    failures.push(format!("vc {i}"));
                }
            }
        }
    }
    if let Some(dir) = &args.smt2 {
        let dir_name = display(dir);
        fs::create_dir_all(dir).map_err(|e| CliError::user(&dir_name, e.to_string()))?;
        let solver = std::env::var("CIMP_SMT_SOLVER").ok().filter(|s| !s.trim().is_empty());
        for (i, vc) in vcs.iter().enumerate() {
            let script = emit_smtlib(vc).map_err(|e| vc_error(&file, e))?;
            let path = dir.join(format!("vc_{i}_{}.smt2", vc.origin));
            fs::write(&path, script).map_err(|e| CliError::user(&display(&path), e.to_string()))?;
            let Some(solver) = &solver else {
                println!("{}", path.display());
                continue;
            };
            let mut argv = solver.split_whitespace();
            let prog = argv.next().unwrap_or_default();
            let out = Command::new(prog)
                .args(argv)
                .arg(&path)
                .output()
                .map_err(|e| CliError::user("CIMP_SMT_SOLVER", format!("cannot run `{solver}`: {e}")))?;
            let answer = String::from_utf8_lossy(&out.stdout).lines().next().unwrap_or("").trim().to_string();
            println!("{}: {answer}", path.display());
            if answer != "unsat" {
                failures.push(format!("vc {i}"));
            }
        }
    }
    if failures.is_empty() {
        Ok(())
    } else {
        Err(CliError::Failed(format!("{file}: not proved: {}", failures.join(", "))))
    }
}

fn typecheck_cmd(path: &Path) -> Result<(), CliError> {
    let file = display(path);
    let tp = typecheck(&load(path)?).map_err(|e| type_error(&file, e))?;
    for (x, ty) in &tp.vars {
        println!("{x}: {ty}");
    }
    Ok(())
}

fn fuzz(args: &FuzzArgs) -> Result<(), CliError> {
    let engines = match &args.engines {
        Some(list) => parse_engines(list).map_err(|e| CliError::user("--engines", e))?,
        None => Engine::ALL.into_iter().filter(|e| e.supports(args.typed)).collect(),
    };
    if let Some(bad) = engines.iter().find(|e| !e.supports(args.typed)) {
        let mode = if args.typed { "typed" } else { "untyped" };
        return Err(CliError::user("--engines", format!("engine `{bad}` does not run {mode} programs")));
    }
    if args.max_depth == 0 {
        return Err(CliError::user("--max-depth", "depth must be at least 1"));
    }
    let spec = GenSpec { seed: args.seed, typed: args.typed, max_depth: args.max_depth, ..GenSpec::default() };
    let opts = DiffOptions { fail_fast: args.fail_fast, ..DiffOptions::default() };
    let report = run_diff_with(&spec, args.count, &engines, &opts);
    print!("{report}");
    if report.divergences > 0 {
        return Err(CliError::Failed(format!("{} of {} cases diverged", report.divergences, report.cases)));
    }
    Ok(())
}

fn dispatch(cli: &Cli) -> Result<(), CliError> {
    match &cli.cmd {
        Cmd::Compile(a) => compile(a),
        Cmd::Run(a) => run(a),
        Cmd::Vc(a) => vc(a),
        Cmd::Typecheck { file } => typecheck_cmd(file),
        Cmd::Fuzz(a) => fuzz(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        // Help and version requests are not errors; bad flags are user errors.
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    panic::set_hook(Box::new(|_| {}));
    let result = panic::catch_unwind(AssertUnwindSafe(|| dispatch(&cli))).unwrap_or_else(|payload| {
        let msg = payload
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| payload.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panic".into());
        Err(CliError::Internal(msg))
    });
    let _ = std::io::stdout().flush();
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code())
        }
    }
}
