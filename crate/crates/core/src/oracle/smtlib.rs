//! Deterministic SMT-LIB2 emission over fixed-width bit-vectors.

use std::collections::BTreeSet;
use std::fmt::Write;

use crate::field::FieldCtx;
use crate::lang::{AffineDef, BinOp, Builtin, Expr, ExprKind, Program, StmtKind};
use crate::term::{TermId, TermNode, TermStore};

/// What the emitted script asks the solver.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SmtMode {
    /// `sat` iff the term is nonzero somewhere.
    Equivalence,
    /// `sat` iff the term is constant; the model gives the constant `c`.
    Constant,
}

/// Field and affine definitions available to the emitter. Symbols
/// without a definition are declared and constrained to be linear.
pub struct SmtContext<'a> {
    pub field: &'a FieldCtx,
    /// Preprocessed program supplying affine bodies.
    pub prog: Option<&'a Program>,
}

const MUL: &str = "gf.mul";
const TAU: &str = "tau";

fn sort(n: u32) -> String {
    format!("(_ BitVec {n})")
}

fn bv(v: u64, n: u32) -> String {
    format!("(_ bv{v} {n})")
}

fn is_simple(name: &str) -> bool {
    const RESERVED: &[&str] = &["let", "forall", "exists", "ite", "assert", "true", "false", "par", "_", "!", "as"];
    let mut chars = name.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '.')
        && !RESERVED.contains(&name)
}

fn quote(name: &str) -> String {
    if is_simple(name) {
        name.to_string()
    } else {
        format!("|{}|", name.replace(['|', '\\'], "_"))
    }
}

/// `gf.mul` as shift-and-add multiplication unrolled over `n` rounds.
pub fn gf_mul_smtlib(field: &FieldCtx) -> String {
    let n = field.width();
    let s = sort(n);
    let one = bv(1, n);
    let reduce = bv(u64::from(field.poly()) & u64::from(field.mask()), n);
    let mut out = format!("(define-fun {MUL} ((a {s}) (b {s})) {s}\n  (let ((r0 {}) (a0 a) (b0 b))\n", bv(0, n));
    for i in 0..n {
        let j = i + 1;
        let top = n - 1;
        writeln!(
            out,
            "  (let ((r{j} (ite (= ((_ extract 0 0) b{i}) #b1) (bvxor r{i} a{i}) r{i})) \
             (a{j} (ite (= ((_ extract {top} {top}) a{i}) #b1) (bvxor (bvshl a{i} {one}) {reduce}) (bvshl a{i} {one}))) \
             (b{j} (bvlshr b{i} {one})))"
        )
        .unwrap();
    }
    write!(out, "    r{n}").unwrap();
    out.push_str(&")".repeat(n as usize + 2));
    out.push('\n');
    out
}

fn calls(e: &Expr, out: &mut Vec<String>) {
    match &e.kind {
        ExprKind::Call(name, args) => {
            if Builtin::from_name(name).is_none() {
                out.push(name.clone());
            }
            for a in args {
                calls(a, out);
            }
        }
        ExprKind::Bin(_, a, b) => {
            calls(a, out);
            calls(b, out);
        }
        ExprKind::Not(a) | ExprKind::Neg(a) => calls(a, out),
        ExprKind::Lit(_) | ExprKind::Var(_) => {}
    }
}

fn def_callees(def: &AffineDef) -> Vec<String> {
    let mut out = Vec::new();
    for s in &def.body {
        if let StmtKind::Assign { value, .. } = &s.kind {
            calls(value, &mut out);
        }
    }
    out
}

fn expr_smt(e: &Expr, n: u32) -> String {
    match &e.kind {
        ExprKind::Lit(v) => bv(*v, n),
        ExprKind::Var(v) => quote(&v.name),
        ExprKind::Bin(BinOp::Xor, a, b) => format!("(bvxor {} {})", expr_smt(a, n), expr_smt(b, n)),
        ExprKind::Bin(BinOp::Mul, a, b) => format!("({MUL} {} {})", expr_smt(a, n), expr_smt(b, n)),
        ExprKind::Call(name, args) => match Builtin::from_name(name) {
            Some(b) => {
                let a = expr_smt(&args[0], n);
                let amount = || match &args.get(1).map(|e| &e.kind) {
                    Some(ExprKind::Lit(k)) => *k,
                    _ => 0,
                };
                match b {
                    Builtin::Rotl => format!("((_ rotate_left {}) {a})", amount() % u64::from(n)),
                    Builtin::Rotr => format!("((_ rotate_right {}) {a})", amount() % u64::from(n)),
                    Builtin::Shl => format!("(bvshl {a} {})", bv(amount().min(u64::from(n)), n)),
                    Builtin::Shr => format!("(bvlshr {a} {})", bv(amount().min(u64::from(n)), n)),
                    Builtin::And => format!("(bvand {a} {})", expr_smt(&args[1], n)),
                    Builtin::Or => format!("(bvor {a} {})", expr_smt(&args[1], n)),
                    Builtin::Not => format!("(bvnot {a})"),
                }
            }
            None => {
                let args: Vec<String> = args.iter().map(|a| expr_smt(a, n)).collect();
                format!("({} {})", quote(name), args.join(" "))
            }
        },
        // Preprocessed affine bodies hold field expressions only.
        ExprKind::Bin(..) | ExprKind::Not(_) | ExprKind::Neg(_) => format!("(_ bv0 {n}) ; unsupported: {e}"),
    }
}

fn def_smt(def: &AffineDef, n: u32) -> String {
    let s = sort(n);
    let mut body = String::new();
    let mut depth = 0;
    for st in &def.body {
        if let StmtKind::Assign { target, value } = &st.kind {
            write!(body, "\n  (let (({} {}))", quote(&target.name), expr_smt(value, n)).unwrap();
            depth += 1;
        }
    }
    format!(
        "(define-fun {} (({} {s})) {s}{body}\n    {}{})\n",
        quote(&def.name),
        quote(&def.input),
        quote(&def.output),
        ")".repeat(depth)
    )
}

fn linearity_axiom(name: &str, n: u32) -> String {
    let s = sort(n);
    let f = quote(name);
    format!(
        "(declare-fun {f} ({s}) {s})\n(assert (forall ((a {s}) (b {s})) (= ({f} (bvxor a b)) (bvxor ({f} a) ({f} b)))))\n"
    )
}

fn node_name(i: usize) -> String {
    format!("t.{i}")
}

/// Script asking whether `root` is nonzero somewhere (equivalence mode)
/// or constant everywhere.
pub fn emit_smtlib(store: &TermStore, root: TermId, mode: &SmtMode, ctx: &SmtContext<'_>) -> String {
    let n = ctx.field.width();
    let s = sort(n);
    let vars: Vec<String> = store.vars(root).iter().map(|v| v.to_string()).collect();

    // Affine symbols reachable from the term, callees first.
    let mut defined: Vec<&AffineDef> = Vec::new();
    let mut declared: BTreeSet<String> = BTreeSet::new();
    let mut seen: BTreeSet<String> = BTreeSet::new();
    fn visit<'p>(
        name: &str,
        prog: Option<&'p Program>,
        seen: &mut BTreeSet<String>,
        defined: &mut Vec<&'p AffineDef>,
        declared: &mut BTreeSet<String>,
    ) {
        if !seen.insert(name.to_string()) {
            return;
        }
        match prog.and_then(|p| p.affine_def(name)) {
            Some(def) => {
                for c in def_callees(def) {
                    visit(&c, prog, seen, defined, declared);
                }
                defined.push(def);
            }
            None => {
                declared.insert(name.to_string());
            }
        }
    }
    for f in store.symbols_in(root) {
        visit(&f, ctx.prog, &mut seen, &mut defined, &mut declared);
    }

    let mut out = String::new();
    let logic = match (mode, declared.is_empty()) {
        (SmtMode::Equivalence, true) => "QF_BV",
        (SmtMode::Constant, true) => "BV",
        (_, false) => "UFBV",
    };
    writeln!(out, "(set-logic {logic})").unwrap();
    out.push_str(&gf_mul_smtlib(ctx.field));
    for f in &declared {
        out.push_str(&linearity_axiom(f, n));
    }
    for def in &defined {
        out.push_str(&def_smt(def, n));
    }

    // The term as a function of its variables, one let per DAG node.
    let params: Vec<String> = vars.iter().map(|v| format!("({} {s})", quote(v))).collect();
    write!(out, "(define-fun {TAU} ({}) {s}", params.join(" ")).unwrap();
    let order = store.post_order(root);
    let index: std::collections::HashMap<TermId, usize> = order.iter().enumerate().map(|(i, &t)| (t, i)).collect();
    for (i, &id) in order.iter().enumerate() {
        let rhs = match store.node(id) {
            TermNode::Const(c) => bv(u64::from(c.0), n),
            TermNode::Var(v) => quote(v),
            TermNode::Add(a, b) => format!("(bvxor {} {})", node_name(index[a]), node_name(index[b])),
            TermNode::Mul(a, b) => format!("({MUL} {} {})", node_name(index[a]), node_name(index[b])),
            TermNode::App(f, a) => format!("({} {})", quote(f), node_name(index[a])),
        };
        write!(out, "\n  (let (({} {rhs}))", node_name(i)).unwrap();
    }
    write!(out, "\n    {}{})\n", node_name(order.len() - 1), ")".repeat(order.len())).unwrap();

    let at_vars = if vars.is_empty() {
        TAU.to_string()
    } else {
        format!("({TAU} {})", vars.iter().map(|v| quote(v)).collect::<Vec<_>>().join(" "))
    };
    match mode {
        SmtMode::Equivalence => {
            for v in &vars {
                writeln!(out, "(declare-const {} {s})", quote(v)).unwrap();
            }
            writeln!(out, "(assert (not (= {at_vars} {})))", bv(0, n)).unwrap();
            out.push_str("(check-sat)\n(get-model)\n");
        }
        SmtMode::Constant => {
            writeln!(out, "(declare-const c {s})").unwrap();
            if vars.is_empty() {
                writeln!(out, "(assert (= {at_vars} c))").unwrap();
            } else {
                writeln!(out, "(assert (forall ({}) (= {at_vars} c)))", params.join(" ")).unwrap();
            }
            out.push_str("(check-sat)\n(get-value (c))\n");
        }
    }
    out
}
