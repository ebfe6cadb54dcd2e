//! MSL: masked straight-line programs with original and masked blocks,
//! affine transformation definitions and declarations.

mod callgraph;
pub mod interp;
mod lexer;
mod parser;
mod preprocess;

use std::fmt;

use thiserror::Error;

use crate::field::{FieldCtx, FieldError};

pub use callgraph::CallGraph;
pub use interp::{Interpreter, InterpError};
pub use parser::{parse, parse_units};
pub use preprocess::{is_straight_line, preprocess};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Pos {
    pub line: u32,
    pub col: u32,
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LangError {
    #[error("{pos}: syntax error: {msg}")]
    Syntax { pos: Pos, msg: String },
    #[error("{pos}: `{name}` is defined more than once")]
    Duplicate { pos: Pos, name: String },
    #[error("{pos}: unresolved name `{name}`")]
    Unresolved { pos: Pos, name: String },
    #[error("{pos}: `{name}` is read before it is assigned")]
    UseBeforeDef { pos: Pos, name: String },
    #[error("recursion through `{0}`")]
    Recursion(String),
    #[error("{pos}: expected a compile-time constant: {msg}")]
    NotConstant { pos: Pos, msg: String },
    #[error("{pos}: {msg}")]
    Invalid { pos: Pos, msg: String },
    #[error("{pos}: call to `{callee}` passes {got} shares, expected {expected}")]
    ShareMismatch {
        pos: Pos,
        callee: String,
        got: u32,
        expected: u32,
    },
    #[error("{pos}: random `{name}` is defined more than once")]
    RandomRedefined { pos: Pos, name: String },
    #[error("output `{name}` of `{proc_name}` is never assigned")]
    MissingOutput { proc_name: String, name: String },
    #[error("{pos}: {source}")]
    Field {
        pos: Pos,
        #[source]
        source: FieldError,
    },
}

impl LangError {
    pub(crate) fn invalid(pos: Pos, msg: impl Into<String>) -> Self {
        LangError::Invalid { pos, msg: msg.into() }
    }
}

/// A parsed compilation unit. `field` is set by a `field N POLY;`
/// directive; otherwise the caller supplies the context.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Program {
    pub field: Option<FieldCtx>,
    pub affine_defs: Vec<AffineDef>,
    pub affine_decls: Vec<AffineDecl>,
    pub procs: Vec<Proc>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AffineDef {
    pub name: String,
    pub input: String,
    pub output: String,
    pub body: Vec<Stmt>,
    pub pos: Pos,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AffineDecl {
    pub name: String,
    pub pos: Pos,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Proc {
    pub name: String,
    pub inputs: Vec<String>,
    pub output: String,
    /// Number of shares per encoding, d + 1.
    pub shares: u32,
    pub orig: Vec<Stmt>,
    pub masked: Vec<Stmt>,
    pub pos: Pos,
}

impl Proc {
    /// Masking order d.
    pub fn order(&self) -> u32 {
        self.shares - 1
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Stmt {
    pub kind: StmtKind,
    pub pos: Pos,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum StmtKind {
    Assign { target: VarRef, value: Expr },
    Rand { target: VarRef },
    For {
        var: String,
        lo: Expr,
        hi: Expr,
        body: Vec<Stmt>,
    },
    If {
        cond: Expr,
        then_body: Vec<Stmt>,
        else_body: Vec<Stmt>,
    },
    Assume(Expr),
    Assert(Expr),
}

/// A variable reference, possibly indexed: `x`, `x[i]`, `r[i][j]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VarRef {
    pub name: String,
    pub indices: Vec<Expr>,
}

impl VarRef {
    pub fn plain(name: impl Into<String>) -> Self {
        VarRef { name: name.into(), indices: Vec::new() }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Expr {
    pub kind: ExprKind,
    pub pos: Pos,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BinOp {
    Xor,
    Mul,
    Add,
    Sub,
    Div,
    Rem,
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
    Ne,
    And,
    Or,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Xor => "^",
            BinOp::Mul => "*",
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Div => "/",
            BinOp::Rem => "%",
            BinOp::Lt => "<",
            BinOp::Le => "<=",
            BinOp::Gt => ">",
            BinOp::Ge => ">=",
            BinOp::Eq => "==",
            BinOp::Ne => "!=",
            BinOp::And => "&&",
            BinOp::Or => "||",
        }
    }

    /// Operators meaningful on field elements.
    pub fn is_field_op(self) -> bool {
        matches!(self, BinOp::Xor | BinOp::Mul)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ExprKind {
    Lit(u64),
    Var(VarRef),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Not(Box<Expr>),
    Neg(Box<Expr>),
    /// Affine application, procedure call or builtin, told apart by name.
    Call(String, Vec<Expr>),
}

impl Expr {
    pub fn new(kind: ExprKind, pos: Pos) -> Self {
        Expr { kind, pos }
    }

    pub fn lit(v: u64, pos: Pos) -> Self {
        Expr::new(ExprKind::Lit(v), pos)
    }

    pub fn var(name: impl Into<String>, pos: Pos) -> Self {
        Expr::new(ExprKind::Var(VarRef::plain(name)), pos)
    }

    pub fn bin(op: BinOp, a: Expr, b: Expr) -> Self {
        let pos = a.pos;
        Expr::new(ExprKind::Bin(op, Box::new(a), Box::new(b)), pos)
    }

    pub fn call(name: impl Into<String>, args: Vec<Expr>, pos: Pos) -> Self {
        Expr::new(ExprKind::Call(name.into(), args), pos)
    }
}

impl fmt::Display for VarRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.name)?;
        for i in &self.indices {
            write!(f, "[{i}]")?;
        }
        Ok(())
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            ExprKind::Lit(v) => write!(f, "{v}"),
            ExprKind::Var(v) => write!(f, "{v}"),
            ExprKind::Bin(op, a, b) => write!(f, "({a} {} {b})", op.symbol()),
            ExprKind::Not(a) => write!(f, "!{a}"),
            ExprKind::Neg(a) => write!(f, "-{a}"),
            ExprKind::Call(name, args) => {
                write!(f, "{name}(")?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{a}")?;
                }
                write!(f, ")")
            }
        }
    }
}

/// Bit-level operations available inside affine bodies.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Builtin {
    Rotl,
    Rotr,
    Shl,
    Shr,
    And,
    Or,
    Not,
}

impl Builtin {
    pub fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "rotl" => Builtin::Rotl,
            "rotr" => Builtin::Rotr,
            "shl" => Builtin::Shl,
            "shr" => Builtin::Shr,
            "and" => Builtin::And,
            "or" => Builtin::Or,
            "not" => Builtin::Not,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Builtin::Rotl => "rotl",
            Builtin::Rotr => "rotr",
            Builtin::Shl => "shl",
            Builtin::Shr => "shr",
            Builtin::And => "and",
            Builtin::Or => "or",
            Builtin::Not => "not",
        }
    }

    pub fn arity(self) -> usize {
        match self {
            Builtin::Not => 1,
            _ => 2,
        }
    }

    /// Whether the second argument is an integer amount rather than a
    /// field value.
    pub fn takes_amount(self) -> bool {
        matches!(self, Builtin::Rotl | Builtin::Rotr | Builtin::Shl | Builtin::Shr)
    }

    /// Concrete semantics on `n`-bit values.
    pub fn apply(self, n: u32, a: u16, b: u64) -> u16 {
        let mask = ((1u32 << n) - 1) as u16;
        let a32 = u32::from(a);
        let r = match self {
            Builtin::Rotl => {
                let k = (b % u64::from(n)) as u32;
                (a32 << k) | (a32 >> ((n - k) % n))
            }
            Builtin::Rotr => {
                let k = (b % u64::from(n)) as u32;
                (a32 >> k) | (a32 << ((n - k) % n))
            }
            Builtin::Shl => {
                if b >= u64::from(n) {
                    0
                } else {
                    a32 << b
                }
            }
            Builtin::Shr => {
                if b >= u64::from(n) {
                    0
                } else {
                    a32 >> b
                }
            }
            Builtin::And => a32 & b as u32,
            Builtin::Or => a32 | b as u32,
            Builtin::Not => !a32,
        };
        r as u16 & mask
    }
}

impl Program {
    pub fn is_empty(&self) -> bool {
        self.affine_defs.is_empty() && self.affine_decls.is_empty() && self.procs.is_empty()
    }

    pub fn proc(&self, name: &str) -> Option<&Proc> {
        self.procs.iter().find(|p| p.name == name)
    }

    pub fn affine_def(&self, name: &str) -> Option<&AffineDef> {
        self.affine_defs.iter().find(|a| a.name == name)
    }

    pub fn is_affine(&self, name: &str) -> bool {
        self.affine_def(name).is_some() || self.affine_decls.iter().any(|d| d.name == name)
    }

    /// Names of all affine symbols, definitions first, in source order.
    pub fn affine_names(&self) -> Vec<&str> {
        self.affine_defs
            .iter()
            .map(|a| a.name.as_str())
            .chain(self.affine_decls.iter().map(|d| d.name.as_str()))
            .collect()
    }

    pub fn call_graph(&self) -> Result<CallGraph, LangError> {
        CallGraph::build(self)
    }
}

/// Joins a base name with resolved indices: `x[1]` is `x1`, `r[0][1]` is
/// `r0_1`.
pub fn indexed_name(base: &str, indices: &[i64]) -> String {
    let mut s = base.to_string();
    for (i, v) in indices.iter().enumerate() {
        if i > 0 {
            s.push('_');
        }
        s.push_str(&v.to_string());
    }
    s
}

/// Name of share `j` of encoding `x`.
pub fn share_name(base: &str, j: u32) -> String {
    format!("{base}{j}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_semantics() {
        assert_eq!(Builtin::Rotl.apply(8, 0x80, 1), 0x01);
        assert_eq!(Builtin::Rotl.apply(8, 0x81, 4), 0x18);
        assert_eq!(Builtin::Rotr.apply(8, 0x01, 1), 0x80);
        assert_eq!(Builtin::Rotl.apply(8, 0x5a, 0), 0x5a);
        assert_eq!(Builtin::Shl.apply(8, 0x81, 1), 0x02);
        assert_eq!(Builtin::Shr.apply(4, 0x9, 3), 0x1);
        assert_eq!(Builtin::Shr.apply(4, 0x9, 9), 0);
        assert_eq!(Builtin::Not.apply(4, 0x9, 0), 0x6);
        assert_eq!(Builtin::And.apply(8, 0xf3, 0x3c), 0x30);
        assert_eq!(Builtin::Or.apply(8, 0x03, 0x30), 0x33);
    }

    #[test]
    fn naming() {
        assert_eq!(indexed_name("x", &[1]), "x1");
        assert_eq!(indexed_name("r", &[0, 1]), "r0_1");
        assert_eq!(share_name("a", 3), "a3");
    }
}
