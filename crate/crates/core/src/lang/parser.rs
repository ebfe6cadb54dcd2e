use std::collections::HashMap;

use super::lexer::{tokenize, Tok};
use super::{
    AffineDecl, AffineDef, BinOp, Builtin, Expr, ExprKind, LangError, Pos, Proc, Program, Stmt,
    StmtKind, VarRef,
};
use crate::field::FieldCtx;

/// Parses a single unit. A file with more than one `field` directive must
/// go through [`parse_units`].
pub fn parse(src: &str) -> Result<Program, LangError> {
    let mut units = parse_units(src)?;
    match units.len() {
        0 => Ok(Program::default()),
        1 => Ok(units.remove(0)),
        _ => Err(LangError::Syntax {
            pos: Pos { line: 1, col: 1 },
            msg: "multiple `field` sections; parse them as separate units".into(),
        }),
    }
}

/// Splits a file into units at `field N POLY;` directives. A directive
/// that precedes every definition sets the field of the first unit.
pub fn parse_units(src: &str) -> Result<Vec<Program>, LangError> {
    let toks = tokenize(src)?;
    let mut p = Parser { toks, at: 0 };
    let mut units: Vec<Program> = Vec::new();
    let mut cur = Program::default();
    let mut started = false;
    loop {
        let pos = p.pos();
        match p.peek().clone() {
            Tok::Eof => break,
            Tok::Ident(kw) if kw == "field" => {
                p.bump();
                let n = p.int()?;
                let poly = p.int()?;
                p.expect(Tok::Semi)?;
                let n = u32::try_from(n).map_err(|_| LangError::Syntax {
                    pos,
                    msg: format!("field width {n} too large"),
                })?;
                let poly = u32::try_from(poly).map_err(|_| LangError::Syntax {
                    pos,
                    msg: format!("field polynomial {poly:#x} too large"),
                })?;
                let ctx =
                    FieldCtx::new(n, poly).map_err(|source| LangError::Field { pos, source })?;
                if started {
                    units.push(std::mem::take(&mut cur));
                }
                cur.field = Some(ctx);
                started = true;
            }
            Tok::Ident(kw) if kw == "affine" => {
                started = true;
                p.affine(&mut cur)?;
            }
            Tok::Ident(kw) if kw == "proc" => {
                started = true;
                let proc_ = p.proc_()?;
                cur.procs.push(proc_);
            }
            other => {
                return Err(LangError::Syntax {
                    pos,
                    msg: format!("expected `proc`, `affine` or `field`, found {}", other.describe()),
                })
            }
        }
    }
    if started {
        units.push(cur);
    }
    for u in &units {
        check_names(u)?;
    }
    Ok(units)
}

fn check_names(prog: &Program) -> Result<(), LangError> {
    let mut seen: HashMap<&str, Pos> = HashMap::new();
    let items = prog
        .affine_defs
        .iter()
        .map(|a| (a.name.as_str(), a.pos))
        .chain(prog.affine_decls.iter().map(|a| (a.name.as_str(), a.pos)))
        .chain(prog.procs.iter().map(|p| (p.name.as_str(), p.pos)));
    for (name, pos) in items {
        if Builtin::from_name(name).is_some() {
            return Err(LangError::invalid(pos, format!("`{name}` is a builtin name")));
        }
        if seen.insert(name, pos).is_some() {
            return Err(LangError::Duplicate { pos, name: name.to_string() });
        }
    }
    let check_body = |body: &[Stmt]| -> Result<(), LangError> {
        let mut err = Ok(());
        visit_calls(body, &mut |name, pos| {
            if err.is_ok() && !seen.contains_key(name) && Builtin::from_name(name).is_none() {
                err = Err(LangError::Unresolved { pos, name: name.to_string() });
            }
        });
        err
    };
    for a in &prog.affine_defs {
        check_body(&a.body)?;
    }
    for p in &prog.procs {
        check_body(&p.orig)?;
        check_body(&p.masked)?;
    }
    Ok(())
}

/// Calls `f` on every called name in `body`, in source order.
pub(crate) fn visit_calls(body: &[Stmt], f: &mut dyn FnMut(&str, Pos)) {
    fn expr(e: &Expr, f: &mut dyn FnMut(&str, Pos)) {
        match &e.kind {
            ExprKind::Lit(_) => {}
            ExprKind::Var(v) => v.indices.iter().for_each(|i| expr(i, f)),
            ExprKind::Bin(_, a, b) => {
                expr(a, f);
                expr(b, f);
            }
            ExprKind::Not(a) | ExprKind::Neg(a) => expr(a, f),
            ExprKind::Call(name, args) => {
                f(name, e.pos);
                args.iter().for_each(|a| expr(a, f));
            }
        }
    }
    for s in body {
        match &s.kind {
            StmtKind::Assign { target, value } => {
                target.indices.iter().for_each(|i| expr(i, f));
                expr(value, f);
            }
            StmtKind::Rand { target } => target.indices.iter().for_each(|i| expr(i, f)),
            StmtKind::For { lo, hi, body, .. } => {
                expr(lo, f);
                expr(hi, f);
                visit_calls(body, f);
            }
            StmtKind::If { cond, then_body, else_body } => {
                expr(cond, f);
                visit_calls(then_body, f);
                visit_calls(else_body, f);
            }
            StmtKind::Assume(e) | StmtKind::Assert(e) => expr(e, f),
        }
    }
}

const KEYWORDS: &[&str] = &[
    "affine", "proc", "shares", "rand", "for", "in", "if", "else", "assume", "assert", "field",
];

struct Parser {
    toks: Vec<(Tok, Pos)>,
    at: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.at].0
    }

    fn peek2(&self) -> &Tok {
        &self.toks[(self.at + 1).min(self.toks.len() - 1)].0
    }

    fn pos(&self) -> Pos {
        self.toks[self.at].1
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.at].0.clone();
        if self.at + 1 < self.toks.len() {
            self.at += 1;
        }
        t
    }

    fn error<T>(&self, expected: &str) -> Result<T, LangError> {
        Err(LangError::Syntax {
            pos: self.pos(),
            msg: format!("expected {expected}, found {}", self.peek().describe()),
        })
    }

    fn eat(&mut self, t: &Tok) -> bool {
        if self.peek() == t {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, t: Tok) -> Result<(), LangError> {
        if self.eat(&t) {
            Ok(())
        } else {
            let d = t.describe();
            self.error(&d)
        }
    }

    fn is_kw(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s == kw)
    }

    fn expect_kw(&mut self, kw: &str) -> Result<(), LangError> {
        if self.is_kw(kw) {
            self.bump();
            Ok(())
        } else {
            self.error(&format!("`{kw}`"))
        }
    }

    fn ident(&mut self) -> Result<String, LangError> {
        match self.peek().clone() {
            Tok::Ident(s) if !KEYWORDS.contains(&s.as_str()) => {
                self.bump();
                Ok(s)
            }
            _ => self.error("an identifier"),
        }
    }

    fn int(&mut self) -> Result<u64, LangError> {
        match *self.peek() {
            Tok::Int(v) => {
                self.bump();
                Ok(v)
            }
            _ => self.error("an integer"),
        }
    }

    fn affine(&mut self, prog: &mut Program) -> Result<(), LangError> {
        let pos = self.pos();
        self.expect_kw("affine")?;
        let name = self.ident()?;
        if self.eat(&Tok::Semi) {
            prog.affine_decls.push(AffineDecl { name, pos });
            return Ok(());
        }
        self.expect(Tok::LParen)?;
        let input = self.ident()?;
        self.expect(Tok::RParen)?;
        self.expect(Tok::Arrow)?;
        let output = self.ident()?;
        self.expect(Tok::LBrace)?;
        let body = self.stmts()?;
        self.expect(Tok::RBrace)?;
        prog.affine_defs.push(AffineDef { name, input, output, body, pos });
        Ok(())
    }

    fn proc_(&mut self) -> Result<Proc, LangError> {
        let pos = self.pos();
        self.expect_kw("proc")?;
        let name = self.ident()?;
        self.expect(Tok::LParen)?;
        let mut inputs = Vec::new();
        if !self.eat(&Tok::RParen) {
            loop {
                inputs.push(self.ident()?);
                if self.eat(&Tok::RParen) {
                    break;
                }
                self.expect(Tok::Comma)?;
            }
        }
        self.expect(Tok::Arrow)?;
        let output = self.ident()?;
        self.expect(Tok::LBrace)?;
        let orig = self.stmts()?;
        let spos = self.pos();
        self.expect_kw("shares")?;
        let shares = self.int()?;
        self.expect(Tok::Semi)?;
        if shares == 0 || shares > 1024 {
            return Err(LangError::invalid(spos, format!("share count {shares} out of range 1..=1024")));
        }
        let masked = self.stmts()?;
        self.expect(Tok::RBrace)?;
        Ok(Proc {
            name,
            inputs,
            output,
            shares: shares as u32,
            orig,
            masked,
            pos,
        })
    }

    fn stmts(&mut self) -> Result<Vec<Stmt>, LangError> {
        let mut out = Vec::new();
        while !matches!(self.peek(), Tok::RBrace | Tok::Eof) && !self.is_kw("shares") {
            out.push(self.stmt()?);
        }
        Ok(out)
    }

    fn block(&mut self) -> Result<Vec<Stmt>, LangError> {
        self.expect(Tok::LBrace)?;
        let body = self.stmts()?;
        if self.is_kw("shares") {
            return self.error("`}`");
        }
        self.expect(Tok::RBrace)?;
        Ok(body)
    }

    fn stmt(&mut self) -> Result<Stmt, LangError> {
        let pos = self.pos();
        let kind = if self.is_kw("for") {
            self.bump();
            let var = self.ident()?;
            self.expect_kw("in")?;
            let lo = self.expr()?;
            self.expect(Tok::DotDot)?;
            let hi = self.expr()?;
            let body = self.block()?;
            StmtKind::For { var, lo, hi, body }
        } else if self.is_kw("if") {
            return self.if_stmt();
        } else if self.is_kw("assume") || self.is_kw("assert") {
            let is_assume = self.is_kw("assume");
            self.bump();
            let e = self.expr()?;
            self.expect(Tok::Semi)?;
            if is_assume {
                StmtKind::Assume(e)
            } else {
                StmtKind::Assert(e)
            }
        } else {
            let name = self.ident()?;
            let indices = self.indices()?;
            let target = VarRef { name, indices };
            self.expect(Tok::Assign)?;
            if self.is_kw("rand") && *self.peek2() == Tok::Semi {
                self.bump();
                self.bump();
                StmtKind::Rand { target }
            } else {
                let value = self.expr()?;
                self.expect(Tok::Semi)?;
                StmtKind::Assign { target, value }
            }
        };
        Ok(Stmt { kind, pos })
    }

    fn if_stmt(&mut self) -> Result<Stmt, LangError> {
        let pos = self.pos();
        self.expect_kw("if")?;
        let cond = self.expr()?;
        let then_body = self.block()?;
        let else_body = if self.is_kw("else") {
            self.bump();
            if self.is_kw("if") {
                vec![self.if_stmt()?]
            } else {
                self.block()?
            }
        } else {
            Vec::new()
        };
        Ok(Stmt { kind: StmtKind::If { cond, then_body, else_body }, pos })
    }

    fn indices(&mut self) -> Result<Vec<Expr>, LangError> {
        let mut out = Vec::new();
        while self.eat(&Tok::LBracket) {
            out.push(self.expr()?);
            self.expect(Tok::RBracket)?;
        }
        Ok(out)
    }

    fn expr(&mut self) -> Result<Expr, LangError> {
        self.binary(0)
    }

    fn binop(&self, level: usize) -> Option<BinOp> {
        let op = match self.peek() {
            Tok::OrOr => BinOp::Or,
            Tok::AndAnd => BinOp::And,
            Tok::Lt => BinOp::Lt,
            Tok::Le => BinOp::Le,
            Tok::Gt => BinOp::Gt,
            Tok::Ge => BinOp::Ge,
            Tok::EqEq => BinOp::Eq,
            Tok::Ne => BinOp::Ne,
            Tok::Caret => BinOp::Xor,
            Tok::Plus => BinOp::Add,
            Tok::Minus => BinOp::Sub,
            Tok::Star => BinOp::Mul,
            Tok::Slash => BinOp::Div,
            Tok::Percent => BinOp::Rem,
            _ => return None,
        };
        (precedence(op) == level).then_some(op)
    }

    fn binary(&mut self, level: usize) -> Result<Expr, LangError> {
        if level > MAX_LEVEL {
            return self.unary();
        }
        let mut lhs = self.binary(level + 1)?;
        while let Some(op) = self.binop(level) {
            self.bump();
            let rhs = self.binary(level + 1)?;
            lhs = Expr::bin(op, lhs, rhs);
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, LangError> {
        let pos = self.pos();
        if self.eat(&Tok::Bang) {
            let e = self.unary()?;
            return Ok(Expr::new(ExprKind::Not(Box::new(e)), pos));
        }
        if self.eat(&Tok::Minus) {
            let e = self.unary()?;
            return Ok(Expr::new(ExprKind::Neg(Box::new(e)), pos));
        }
        self.primary()
    }

    fn primary(&mut self) -> Result<Expr, LangError> {
        let pos = self.pos();
        match self.peek().clone() {
            Tok::Int(v) => {
                self.bump();
                Ok(Expr::lit(v, pos))
            }
            Tok::LParen => {
                self.bump();
                let e = self.expr()?;
                self.expect(Tok::RParen)?;
                Ok(e)
            }
            Tok::Ident(_) => {
                let name = self.ident()?;
                if self.eat(&Tok::LParen) {
                    let mut args = Vec::new();
                    if !self.eat(&Tok::RParen) {
                        loop {
                            args.push(self.expr()?);
                            if self.eat(&Tok::RParen) {
                                break;
                            }
                            self.expect(Tok::Comma)?;
                        }
                    }
                    Ok(Expr::call(name, args, pos))
                } else {
                    let indices = self.indices()?;
                    Ok(Expr::new(ExprKind::Var(VarRef { name, indices }), pos))
                }
            }
            _ => self.error("an expression"),
        }
    }
}

const MAX_LEVEL: usize = 5;

fn precedence(op: BinOp) -> usize {
    match op {
        BinOp::Or => 0,
        BinOp::And => 1,
        BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge | BinOp::Eq | BinOp::Ne => 2,
        BinOp::Xor => 3,
        BinOp::Add | BinOp::Sub => 4,
        BinOp::Mul | BinOp::Div | BinOp::Rem => 5,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_program() {
        assert_eq!(parse("").unwrap(), Program::default());
        assert!(parse("  // nothing\n").unwrap().is_empty());
    }

    #[test]
    fn identity_proc() {
        let p = parse("proc f(x) -> y { y <- x; shares 2; y0 <- x0; y1 <- x1; }").unwrap();
        assert_eq!(p.procs.len(), 1);
        let f = &p.procs[0];
        assert_eq!(f.name, "f");
        assert_eq!(f.inputs, vec!["x"]);
        assert_eq!(f.output, "y");
        assert_eq!(f.order(), 1);
        assert_eq!(f.orig.len(), 1);
        assert_eq!(f.masked.len(), 2);
    }

    #[test]
    fn precedence_mul_binds_tighter_than_xor() {
        let p = parse("affine f(x) -> y { y <- x ^ x * 3 ^ 1; }").unwrap();
        let StmtKind::Assign { value, .. } = &p.affine_defs[0].body[0].kind else {
            panic!()
        };
        let ExprKind::Bin(BinOp::Xor, lhs, rhs) = &value.kind else { panic!() };
        assert_eq!(rhs.kind, ExprKind::Lit(1));
        let ExprKind::Bin(BinOp::Xor, _, mul) = &lhs.kind else { panic!() };
        assert!(matches!(mul.kind, ExprKind::Bin(BinOp::Mul, _, _)));
    }

    #[test]
    fn loops_conditionals_and_rand() {
        let src = "proc g(a) -> c { c <- a; shares 3;
            for i in 0..2 { r[i] <- rand; }
            if 1 < 2 && !(0 == 1) { c0 <- a0 ^ r[0]; } else if 0 { c0 <- a0; } else { c0 <- a0; }
            c1 <- a1 ^ r[0] ^ r[1]; c2 <- a2 ^ r[1];
            assume a == a0 ^ a1 ^ a2; assert c == c0 ^ c1 ^ c2; }";
        let p = parse(src).unwrap();
        let g = &p.procs[0];
        assert!(matches!(g.masked[0].kind, StmtKind::For { .. }));
        let StmtKind::If { else_body, .. } = &g.masked[1].kind else { panic!() };
        assert!(matches!(else_body[0].kind, StmtKind::If { .. }));
        assert!(matches!(g.masked.last().unwrap().kind, StmtKind::Assert(_)));
    }

    #[test]
    fn declarations_and_units() {
        let units = parse_units(
            "field 8 0x11B; affine g; affine f(x) -> y { y <- g(x); }
             field 4 0x13; affine h(x) -> y { y <- x * x; }",
        )
        .unwrap();
        assert_eq!(units.len(), 2);
        assert_eq!(units[0].field.as_ref().unwrap().width(), 8);
        assert_eq!(units[0].affine_decls[0].name, "g");
        assert_eq!(units[1].field.as_ref().unwrap().width(), 4);
        assert!(parse("field 4 0x13; field 8 0x11B;").is_err());
        assert!(matches!(
            parse_units("field 4 0x15;"),
            Err(LangError::Field { .. })
        ));
    }

    #[test]
    fn syntax_errors_carry_positions() {
        let e = parse("proc f(x) -> y {\n  y <- x\n  shares 1; }").unwrap_err();
        assert!(matches!(e, LangError::Syntax { pos: Pos { line: 3, .. }, .. }), "{e}");
        assert!(matches!(parse("proc f(x) -> y { y <- x; }"), Err(LangError::Syntax { .. })));
        assert!(matches!(
            parse("proc f(x) -> y { y <- x; shares 0; }"),
            Err(LangError::Invalid { .. })
        ));
    }

    #[test]
    fn name_resolution() {
        assert!(matches!(
            parse("affine f; affine f;"),
            Err(LangError::Duplicate { .. })
        ));
        assert!(matches!(
            parse("affine f(x) -> y { y <- g(x); }"),
            Err(LangError::Unresolved { .. })
        ));
        assert!(parse("affine f(x) -> y { y <- rotl(x, 1); }").is_ok());
        assert!(matches!(parse("affine rotl;"), Err(LangError::Invalid { .. })));
    }
}
