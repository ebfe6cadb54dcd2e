//! Minimal reader and evaluator for the bit-vector fragment of SMT-LIB2
//! that the emitter produces: `define-fun`, `let`, `ite`, `=`,
//! `(_ extract i j)`, `(_ rotate_left k)`, `(_ rotate_right k)`, `bvxor`,
//! `bvand`, `bvor`, `bvnot`, `bvshl`, `bvlshr`, `(_ bvV w)` and `#b` literals.

use std::collections::HashMap;

#[derive(Clone, Debug, PartialEq)]
pub enum Sx {
    Atom(String),
    List(Vec<Sx>),
}

pub fn read_all(text: &str) -> Vec<Sx> {
    let mut toks = Vec::new();
    let mut chars = text.chars().peekable();
    while let Some(&c) = chars.peek() {
        match c {
            '(' | ')' => {
                toks.push(c.to_string());
                chars.next();
            }
            ';' => {
                for c in chars.by_ref() {
                    if c == '\n' {
                        break;
                    }
                }
            }
            '|' => {
                chars.next();
                let mut s = String::new();
                for c in chars.by_ref() {
                    if c == '|' {
                        break;
                    }
                    s.push(c);
                }
                toks.push(s);
            }
            c if c.is_whitespace() => {
                chars.next();
            }
            _ => {
                let mut s = String::new();
                while let Some(&c) = chars.peek() {
                    if c == '(' || c == ')' || c.is_whitespace() {
                        break;
                    }
                    s.push(c);
                    chars.next();
                }
                toks.push(s);
            }
        }
    }
    let mut pos = 0;
    let mut out = Vec::new();
    while pos < toks.len() {
        out.push(parse(&toks, &mut pos));
    }
    out
}

fn parse(toks: &[String], pos: &mut usize) -> Sx {
    let t = &toks[*pos];
    *pos += 1;
    if t == "(" {
        let mut items = Vec::new();
        while toks[*pos] != ")" {
            items.push(parse(toks, pos));
        }
        *pos += 1;
        Sx::List(items)
    } else {
        Sx::Atom(t.clone())
    }
}

/// A bit vector value with its width.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Bv {
    pub v: u64,
    pub w: u32,
}

impl Bv {
    fn new(v: u64, w: u32) -> Self {
        Bv { v: v & mask(w), w }
    }
}

fn mask(w: u32) -> u64 {
    if w >= 64 {
        u64::MAX
    } else {
        (1 << w) - 1
    }
}

#[derive(Clone, Debug)]
enum Val {
    Bv(Bv),
    Bool(bool),
}

struct Fun {
    params: Vec<(String, u32)>,
    ret: u32,
    body: Sx,
}

#[derive(Default)]
pub struct Script {
    funs: HashMap<String, Fun>,
}

fn atom(s: &Sx) -> &str {
    match s {
        Sx::Atom(a) => a,
        Sx::List(_) => panic!("expected atom, got {s:?}"),
    }
}

fn list(s: &Sx) -> &[Sx] {
    match s {
        Sx::List(l) => l,
        Sx::Atom(_) => panic!("expected list, got {s:?}"),
    }
}

fn sort_width(s: &Sx) -> u32 {
    // (_ BitVec n)
    let l = list(s);
    assert_eq!(atom(&l[1]), "BitVec");
    atom(&l[2]).parse().unwrap()
}

impl Script {
    /// Loads every `define-fun`; other commands are ignored.
    pub fn load(text: &str) -> Self {
        let mut script = Script::default();
        for cmd in read_all(text) {
            let l = list(&cmd);
            if atom(&l[0]) == "define-fun" {
                let name = atom(&l[1]).to_string();
                let params = list(&l[2])
                    .iter()
                    .map(|p| {
                        let p = list(p);
                        (atom(&p[0]).to_string(), sort_width(&p[1]))
                    })
                    .collect();
                script.funs.insert(name, Fun { params, ret: sort_width(&l[3]), body: l[4].clone() });
            }
        }
        script
    }

    pub fn call(&self, name: &str, args: &[u64]) -> u64 {
        let f = &self.funs[name];
        assert_eq!(f.params.len(), args.len(), "{name}");
        let env: HashMap<String, Val> = f
            .params
            .iter()
            .zip(args)
            .map(|((p, w), &a)| (p.clone(), Val::Bv(Bv::new(a, *w))))
            .collect();
        match self.eval(&f.body, &env) {
            Val::Bv(b) => b.v,
            Val::Bool(_) => panic!("{name} returns a boolean"),
        }
    }

    fn bv(&self, e: &Sx, env: &HashMap<String, Val>) -> Bv {
        match self.eval(e, env) {
            Val::Bv(b) => b,
            Val::Bool(_) => panic!("expected bit vector: {e:?}"),
        }
    }

    fn eval(&self, e: &Sx, env: &HashMap<String, Val>) -> Val {
        match e {
            Sx::Atom(a) => {
                if let Some(bits) = a.strip_prefix("#b") {
                    return Val::Bv(Bv::new(u64::from_str_radix(bits, 2).unwrap(), bits.len() as u32));
                }
                if let Some(v) = env.get(a.as_str()) {
                    return v.clone();
                }
                let f = self.funs.get(a.as_str()).unwrap_or_else(|| panic!("unbound `{a}`"));
                Val::Bv(Bv::new(self.call(a, &[]), f.ret))
            }
            Sx::List(l) => self.eval_list(l, env),
        }
    }

    fn eval_list(&self, l: &[Sx], env: &HashMap<String, Val>) -> Val {
        // Indexed forms: (_ bvV w) and ((_ op k ...) arg).
        if let Sx::Atom(h) = &l[0] {
            if h == "_" {
                let lit = atom(&l[1]);
                let v = lit.strip_prefix("bv").unwrap().parse().unwrap();
                return Val::Bv(Bv::new(v, atom(&l[2]).parse().unwrap()));
            }
        }
        if let Sx::List(ix) = &l[0] {
            let op = atom(&ix[1]);
            let x = self.bv(&l[1], env);
            let k: u32 = atom(&ix[2]).parse().unwrap();
            return Val::Bv(match op {
                "extract" => {
                    let j: u32 = atom(&ix[3]).parse().unwrap();
                    Bv::new(x.v >> j, k - j + 1)
                }
                "rotate_left" => {
                    let k = k % x.w;
                    Bv::new((x.v << k) | (x.v >> ((x.w - k) % x.w)), x.w)
                }
                "rotate_right" => {
                    let k = k % x.w;
                    Bv::new((x.v >> k) | (x.v << ((x.w - k) % x.w)), x.w)
                }
                _ => panic!("unsupported indexed operator {op}"),
            });
        }
        let head = atom(&l[0]);
        match head {
            "let" => {
                let mut inner = env.clone();
                for b in list(&l[1]) {
                    let b = list(b);
                    // Parallel let: bindings see the outer environment.
                    inner.insert(atom(&b[0]).to_string(), self.eval(&b[1], env));
                }
                self.eval(&l[2], &inner)
            }
            "ite" => match self.eval(&l[1], env) {
                Val::Bool(true) => self.eval(&l[2], env),
                Val::Bool(false) => self.eval(&l[3], env),
                Val::Bv(_) => panic!("ite on a bit vector"),
            },
            "=" => Val::Bool(self.bv(&l[1], env) == self.bv(&l[2], env)),
            "bvxor" | "bvand" | "bvor" | "bvshl" | "bvlshr" => {
                let a = self.bv(&l[1], env);
                let b = self.bv(&l[2], env);
                assert_eq!(a.w, b.w, "{head}");
                let v = match head {
                    "bvxor" => a.v ^ b.v,
                    "bvand" => a.v & b.v,
                    "bvor" => a.v | b.v,
                    "bvshl" => {
                        if b.v >= u64::from(a.w) {
                            0
                        } else {
                            a.v << b.v
                        }
                    }
                    _ => {
                        if b.v >= u64::from(a.w) {
                            0
                        } else {
                            a.v >> b.v
                        }
                    }
                };
                Val::Bv(Bv::new(v, a.w))
            }
            "bvnot" => {
                let a = self.bv(&l[1], env);
                Val::Bv(Bv::new(!a.v, a.w))
            }
            f => {
                let args: Vec<u64> = l[1..].iter().map(|a| self.bv(a, env).v).collect();
                let ret = self.funs.get(f).unwrap_or_else(|| panic!("unknown function `{f}`")).ret;
                Val::Bv(Bv::new(self.call(f, &args), ret))
            }
        }
    }
}
