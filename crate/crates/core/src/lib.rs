//! Compiler toolchain for the imp teaching language.
//!
//! The pipeline runs source text through [`lexer`] and [`parser`] into the
//! [`ast`], optionally through [`optimizer`] and the typed layer in
//! [`fixed`], and then either to the [`stack`] machine or to the MIPS
//! subset in [`mips`]. [`semantics`] is the reference every backend is
//! checked against; [`diff`] automates that check over programs produced
//! by [`gen`].

pub mod ast;
pub mod diff;
pub mod fixed;
pub mod gen;
pub mod hoare;
pub mod lexer;
pub mod mips;
pub mod optimizer;
pub mod parser;
pub mod pretty;
pub mod regalloc;
pub mod semantics;
pub mod stack;

pub use ast::{AExpr, ArithOp, Assertion, BExpr, BitOp, CmpOp, Com, Decl, Pos, Program, Ty};
pub use parser::{parse_program, FrontendError};
pub use pretty::pretty;
pub use semantics::{Outcome, Store};
