//! Recursive-descent parser for `.imp` programs and assertions.
//!
//! Precedence, lowest to highest:
//!
//! ```text
//! arith:  + -  <  *  <  & | ^ << >>  <  unary - ~  <  i32(..) u32(..)  <  atoms
//! bool:   ->   <  ||  <  &&  <  !  <  comparisons, literals, ( .. )
//! ```
//!
//! All binary operators associate left except `->` and `;`, which nest to
//! the right. `->` is only accepted in assertion position.

use std::fmt;

use num_bigint::BigInt;
use thiserror::Error;

use crate::ast::{AExpr, ArithOp, Assertion, BExpr, BitOp, CmpOp, Com, Decl, Pos, Program, Ty};
use crate::lexer::{lex, LexError, Token, TokenKind};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseError {
    pub line: u32,
    pub column: u32,
    pub found: String,
    pub expected: Vec<String>,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}: expected ", self.line, self.column)?;
        match self.expected.as_slice() {
            [one] => write!(f, "{one}")?,
            many => write!(f, "one of {}", many.join(", "))?,
        }
        write!(f, ", found {}", self.found)
    }
}

impl std::error::Error for ParseError {}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FrontendError {
    #[error("{0}")]
    Lex(#[from] LexError),
    #[error("{0}")]
    Parse(#[from] ParseError),
    #[error("{line}:{column}: variable `{name}` declared twice")]
    DuplicateDecl { line: u32, column: u32, name: String },
}

impl FrontendError {
    pub fn position(&self) -> Pos {
        match self {
            FrontendError::Lex(e) => Pos::new(e.line, e.column),
            FrontendError::Parse(e) => Pos::new(e.line, e.column),
            FrontendError::DuplicateDecl { line, column, .. } => Pos::new(*line, *column),
        }
    }

    /// The message without its leading `line:col: ` prefix.
    pub fn message(&self) -> String {
        let full = self.to_string();
        match full.split_once(": ") {
            Some((_, rest)) => rest.to_string(),
            None => full,
        }
    }
}

type PResult<T> = Result<T, ParseError>;

// Boolean syntax shared by conditions and assertions; comparisons keep
// their operator position for later diagnostics.
enum BoolTree {
    Lit(bool),
    Cmp(CmpOp, AExpr, AExpr, Pos),
    Not(Box<BoolTree>),
    And(Box<BoolTree>, Box<BoolTree>),
    Or(Box<BoolTree>, Box<BoolTree>),
    Implies(Box<BoolTree>, Box<BoolTree>),
}

impl BoolTree {
    fn into_bexpr(self) -> Option<BExpr> {
        Some(match self {
            BoolTree::Lit(v) => BExpr::BoolLit(v),
            BoolTree::Cmp(op, l, r, p) => BExpr::Cmp(op, l, r, p),
            BoolTree::Not(b) => BExpr::not(b.into_bexpr()?),
            BoolTree::And(l, r) => BExpr::and(l.into_bexpr()?, r.into_bexpr()?),
            BoolTree::Or(l, r) => BExpr::or(l.into_bexpr()?, r.into_bexpr()?),
            BoolTree::Implies(..) => return None,
        })
    }

    fn into_assertion(self) -> Assertion {
        match self {
            BoolTree::Lit(true) => Assertion::True,
            BoolTree::Lit(false) => Assertion::False,
            BoolTree::Cmp(op, l, r, _) => Assertion::Cmp(op, l, r),
            BoolTree::Not(b) => Assertion::not(b.into_assertion()),
            BoolTree::And(l, r) => Assertion::and(l.into_assertion(), r.into_assertion()),
            BoolTree::Or(l, r) => Assertion::or(l.into_assertion(), r.into_assertion()),
            BoolTree::Implies(l, r) => Assertion::implies(l.into_assertion(), r.into_assertion()),
        }
    }
}

struct Parser<'t> {
    toks: &'t [Token],
    pos: usize,
}

impl<'t> Parser<'t> {
    fn peek(&self) -> &Token {
        &self.toks[self.pos.min(self.toks.len() - 1)]
    }

    fn bump(&mut self) -> Token {
        let t = self.peek().clone();
        if self.pos < self.toks.len() - 1 {
            self.pos += 1;
        }
        t
    }

    fn error(&self, expected: &[&str]) -> ParseError {
        let t = self.peek();
        ParseError {
            line: t.line,
            column: t.column,
            found: t.to_string(),
            expected: expected.iter().map(|s| s.to_string()).collect(),
        }
    }

    fn eat(&mut self, text: &str) -> bool {
        if self.peek().is(text) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, text: &str) -> PResult<Token> {
        if self.peek().is(text) {
            Ok(self.bump())
        } else {
            Err(self.error(&[&format!("`{text}`")]))
        }
    }

    fn ident(&mut self) -> PResult<Token> {
        if self.peek().kind == TokenKind::Ident {
            Ok(self.bump())
        } else {
            Err(self.error(&["identifier"]))
        }
    }

    fn expect_eof(&self) -> PResult<()> {
        if self.peek().kind == TokenKind::Eof {
            Ok(())
        } else {
            Err(self.error(&["end of input"]))
        }
    }

    // program := decl* com EOF
    fn program(&mut self) -> Result<Program, FrontendError> {
        let mut decls: Vec<Decl> = Vec::new();
        while self.peek().is("var") {
            self.bump();
            let name = self.ident()?;
            let ty = if self.eat(":") {
                if self.eat("i32") {
                    Some(Ty::I32)
                } else if self.eat("u32") {
                    Some(Ty::U32)
                } else {
                    return Err(self.error(&["`i32`", "`u32`"]).into());
                }
            } else {
                None
            };
            self.expect(";")?;
            if decls.iter().any(|d| d.name == name.lexeme) {
                return Err(FrontendError::DuplicateDecl {
                    line: name.line,
                    column: name.column,
                    name: name.lexeme,
                });
            }
            decls.push(Decl { name: name.lexeme.clone(), ty, pos: name.pos() });
        }
        let body = self.com()?;
        self.expect_eof()?;
        Ok(Program { decls, body })
    }

    fn com(&mut self) -> PResult<Com> {
        let first = self.simple_com()?;
        if self.eat(";") {
            Ok(Com::seq(first, self.com()?))
        } else {
            Ok(first)
        }
    }

    fn simple_com(&mut self) -> PResult<Com> {
        let t = self.peek().clone();
        if t.is("skip") {
            self.bump();
            Ok(Com::Skip)
        } else if t.is("if") {
            self.bump();
            let cond = self.bexp()?;
            self.expect("then")?;
            let then_c = self.com()?;
            self.expect("else")?;
            let else_c = self.com()?;
            self.expect("end")?;
            Ok(Com::ite(cond, then_c, else_c))
        } else if t.is("while") {
            self.bump();
            let cond = self.bexp()?;
            let invariant = if self.eat("invariant") {
                self.expect("{")?;
                let a = self.assertion()?;
                self.expect("}")?;
                Some(a)
            } else {
                None
            };
            self.expect("do")?;
            let body = self.com()?;
            self.expect("done")?;
            Ok(Com::While { cond, invariant, body: Box::new(body), pos: t.pos() })
        } else if t.kind == TokenKind::Ident {
            self.bump();
            self.expect(":=")?;
            let rhs = self.aexp()?;
            let pos = t.pos();
            Ok(Com::Assign(t.lexeme, rhs, pos))
        } else {
            Err(self.error(&["`skip`", "`if`", "`while`", "identifier"]))
        }
    }

    fn bexp(&mut self) -> PResult<BExpr> {
        let tree = self.bool_or(false)?;
        Ok(tree.into_bexpr().expect("implication outside assertion position"))
    }

    fn assertion(&mut self) -> PResult<Assertion> {
        Ok(self.implication()?.into_assertion())
    }

    fn implication(&mut self) -> PResult<BoolTree> {
        let lhs = self.bool_or(true)?;
        if self.eat("->") {
            Ok(BoolTree::Implies(Box::new(lhs), Box::new(self.implication()?)))
        } else {
            Ok(lhs)
        }
    }

    fn bool_or(&mut self, implies: bool) -> PResult<BoolTree> {
        let mut lhs = self.bool_and(implies)?;
        while self.eat("||") {
            lhs = BoolTree::Or(Box::new(lhs), Box::new(self.bool_and(implies)?));
        }
        Ok(lhs)
    }

    fn bool_and(&mut self, implies: bool) -> PResult<BoolTree> {
        let mut lhs = self.bool_not(implies)?;
        while self.eat("&&") {
            lhs = BoolTree::And(Box::new(lhs), Box::new(self.bool_not(implies)?));
        }
        Ok(lhs)
    }

    fn bool_not(&mut self, implies: bool) -> PResult<BoolTree> {
        if self.eat("!") {
            Ok(BoolTree::Not(Box::new(self.bool_not(implies)?)))
        } else {
            self.bool_atom(implies)
        }
    }

    fn bool_atom(&mut self, implies: bool) -> PResult<BoolTree> {
        if self.eat("true") {
            return Ok(BoolTree::Lit(true));
        }
        if self.eat("false") {
            return Ok(BoolTree::Lit(false));
        }
        if self.peek().is("(") {
            // Either a parenthesised arithmetic operand of a comparison or a
            // parenthesised boolean; try the comparison reading first.
            let start = self.pos;
            let arith_err = match self.comparison() {
                Ok(a) => return Ok(a),
                Err(e) => e,
            };
            self.pos = start;
            self.bump();
            let inner = if implies { self.implication() } else { self.bool_or(false) };
            let bool_res = inner.and_then(|a| self.expect(")").map(|_| a));
            return bool_res.map_err(|e| further(arith_err, e));
        }
        self.comparison()
    }

    fn comparison(&mut self) -> PResult<BoolTree> {
        let lhs = self.aexp()?;
        let t = self.peek().clone();
        let op = if self.eat("=") {
            CmpOp::Eq
        } else if self.eat("<=") {
            CmpOp::Le
        } else if self.eat("<") {
            CmpOp::Lt
        } else {
            return Err(self.error(&["`=`", "`<=`", "`<`"]));
        };
        let rhs = self.aexp()?;
        Ok(BoolTree::Cmp(op, lhs, rhs, t.pos()))
    }

    fn aexp(&mut self) -> PResult<AExpr> {
        let mut lhs = self.mul_level()?;
        loop {
            let t = self.peek().clone();
            let op = if t.is("+") {
                ArithOp::Add
            } else if t.is("-") {
                ArithOp::Sub
            } else {
                return Ok(lhs);
            };
            self.bump();
            let rhs = self.mul_level()?;
            lhs = AExpr::BinOp(op, Box::new(lhs), Box::new(rhs), t.pos());
        }
    }

    fn mul_level(&mut self) -> PResult<AExpr> {
        let mut lhs = self.bit_level()?;
        while self.peek().is("*") {
            let t = self.bump();
            let rhs = self.bit_level()?;
            lhs = AExpr::BinOp(ArithOp::Mul, Box::new(lhs), Box::new(rhs), t.pos());
        }
        Ok(lhs)
    }

    fn bit_level(&mut self) -> PResult<AExpr> {
        let mut lhs = self.unary()?;
        loop {
            let t = self.peek().clone();
            let op = match t.lexeme.as_str() {
                "&" => BitOp::And,
                "|" => BitOp::Or,
                "^" => BitOp::Xor,
                "<<" => BitOp::Shl,
                ">>" => BitOp::Shr,
                _ => return Ok(lhs),
            };
            if t.kind != TokenKind::Operator {
                return Ok(lhs);
            }
            self.bump();
            let rhs = self.unary()?;
            lhs = AExpr::BitOp(op, Box::new(lhs), Box::new(rhs), t.pos());
        }
    }

    fn unary(&mut self) -> PResult<AExpr> {
        let t = self.peek().clone();
        if t.is("-") {
            self.bump();
            Ok(AExpr::Neg(Box::new(self.unary()?), t.pos()))
        } else if t.is("~") {
            self.bump();
            Ok(AExpr::BitNot(Box::new(self.unary()?), t.pos()))
        } else {
            self.cast()
        }
    }

    fn cast(&mut self) -> PResult<AExpr> {
        let t = self.peek().clone();
        let ty = if t.is("i32") {
            Ty::I32
        } else if t.is("u32") {
            Ty::U32
        } else {
            return self.atom();
        };
        self.bump();
        self.expect("(")?;
        let e = self.aexp()?;
        self.expect(")")?;
        Ok(AExpr::Cast(ty, Box::new(e), t.pos()))
    }

    fn atom(&mut self) -> PResult<AExpr> {
        let t = self.peek().clone();
        match t.kind {
            TokenKind::Int => {
                self.bump();
                let n: BigInt = t.lexeme.parse().expect("lexer yields digit runs");
                Ok(AExpr::IntLit(n))
            }
            TokenKind::Ident => {
                self.bump();
                let pos = t.pos();
                Ok(AExpr::Var(t.lexeme, pos))
            }
            _ if t.is("(") => {
                self.bump();
                let e = self.aexp()?;
                self.expect(")")?;
                Ok(e)
            }
            _ => Err(self.error(&[
                "integer",
                "identifier",
                "`(`",
                "`-`",
                "`~`",
                "`i32`",
                "`u32`",
            ])),
        }
    }
}

fn further(a: ParseError, b: ParseError) -> ParseError {
    if (b.line, b.column) >= (a.line, a.column) {
        b
    } else {
        a
    }
}

pub fn parse(tokens: &[Token]) -> Result<Program, FrontendError> {
    assert!(
        tokens.last().is_some_and(|t| t.kind == TokenKind::Eof),
        "token stream must end with end-of-input"
    );
    Parser { toks: tokens, pos: 0 }.program()
}

pub fn parse_program(source: &str) -> Result<Program, FrontendError> {
    parse(&lex(source)?)
}

fn parse_fragment<T>(
    source: &str,
    f: impl FnOnce(&mut Parser<'_>) -> PResult<T>,
) -> Result<T, FrontendError> {
    let toks = lex(source)?;
    let mut p = Parser { toks: &toks, pos: 0 };
    let v = f(&mut p)?;
    p.expect_eof()?;
    Ok(v)
}

pub fn parse_aexp(source: &str) -> Result<AExpr, FrontendError> {
    parse_fragment(source, |p| p.aexp())
}

pub fn parse_bexp(source: &str) -> Result<BExpr, FrontendError> {
    parse_fragment(source, |p| p.bexp())
}

pub fn parse_assertion(source: &str) -> Result<Assertion, FrontendError> {
    parse_fragment(source, |p| p.assertion())
}
