//! Direct evaluation of generated gadgets and brute-force enumeration of
//! functional equivalence over GF(16).

use std::collections::HashMap;

use maskverify::fuzz::{GExpr, GStmt, RandomGadget, GADGET_OUTPUT};

/// Carry-less multiplication reduced by 0x13, bit by bit.
pub fn gf16_mul(a: u16, b: u16) -> u16 {
    let mut acc: u32 = 0;
    for i in 0..4 {
        if (b >> i) & 1 == 1 {
            acc ^= u32::from(a) << i;
        }
    }
    for bit in (4..8).rev() {
        if (acc >> bit) & 1 == 1 {
            acc ^= 0x13 << (bit - 4);
        }
    }
    acc as u16
}

enum Op {
    Slot(usize),
    Const(u16),
    Add(Box<Op>, Box<Op>),
    Mul(Box<Op>, Box<Op>),
    Table(usize, Box<Op>),
}

enum Step {
    Assign(usize, Op),
    Rand(usize, usize),
}

/// A gadget lowered to numbered slots.
pub struct GadgetEval {
    mul: [[u16; 16]; 16],
    tables: Vec<[u16; 16]>,
    orig: Vec<Step>,
    masked: Vec<Step>,
    orig_slots: usize,
    masked_slots: usize,
    /// Free variables: input shares, then randoms in program order.
    pub free: Vec<String>,
    /// Per input: the original slot and its share slots.
    inputs: Vec<(usize, Vec<usize>)>,
    orig_out: usize,
    masked_out: Vec<usize>,
}

struct Slots(HashMap<String, usize>);

impl Slots {
    fn get(&mut self, name: &str) -> usize {
        let n = self.0.len();
        *self.0.entry(name.to_string()).or_insert(n)
    }
}

fn lower(e: &GExpr, slots: &mut Slots, tables: &HashMap<String, usize>) -> Op {
    match e {
        GExpr::Var(v) => Op::Slot(slots.get(v)),
        GExpr::Const(c) => Op::Const(*c),
        GExpr::Add(a, b) => Op::Add(Box::new(lower(a, slots, tables)), Box::new(lower(b, slots, tables))),
        GExpr::Mul(a, b) => Op::Mul(Box::new(lower(a, slots, tables)), Box::new(lower(b, slots, tables))),
        GExpr::Call(f, a) => Op::Table(tables[f], Box::new(lower(a, slots, tables))),
    }
}

fn lower_block(stmts: &[GStmt], slots: &mut Slots, tables: &HashMap<String, usize>, free: &mut Vec<String>) -> Vec<Step> {
    stmts
        .iter()
        .map(|st| match st {
            GStmt::Assign(v, e) => {
                let op = lower(e, slots, tables);
                Step::Assign(slots.get(v), op)
            }
            GStmt::Rand(v) => {
                free.push(v.clone());
                Step::Rand(slots.get(v), free.len() - 1)
            }
        })
        .collect()
}

impl GadgetEval {
    pub fn new(g: &RandomGadget) -> Self {
        let mut mul = [[0u16; 16]; 16];
        for a in 0..16u16 {
            for b in 0..16u16 {
                mul[a as usize][b as usize] = gf16_mul(a, b);
            }
        }
        let mut tables = Vec::new();
        let mut table_ix = HashMap::new();
        for (name, body) in &g.affine {
            let mut slots = Slots(HashMap::new());
            let x = slots.get("x");
            let op = lower(body, &mut slots, &table_ix);
            let mut t = [0u16; 16];
            let mut env = vec![0u16; slots.0.len()];
            for v in 0..16u16 {
                env[x] = v;
                t[v as usize] = eval(&op, &env, &mul, &tables);
            }
            table_ix.insert(name.clone(), tables.len());
            tables.push(t);
        }
        let mut os = Slots(HashMap::new());
        let mut ms = Slots(HashMap::new());
        let mut free = Vec::new();
        let mut inputs = Vec::new();
        for i in &g.inputs {
            let shares = (0..g.shares)
                .map(|j| {
                    let name = format!("{i}{j}");
                    free.push(name.clone());
                    ms.get(&name)
                })
                .collect();
            inputs.push((os.get(i), shares));
        }
        let mut none = Vec::new();
        let orig = lower_block(&g.orig, &mut os, &table_ix, &mut none);
        assert!(none.is_empty(), "rand in original block");
        let masked = lower_block(&g.masked, &mut ms, &table_ix, &mut free);
        let orig_out = os.get(GADGET_OUTPUT);
        let masked_out = (0..g.shares).map(|j| ms.get(&format!("{GADGET_OUTPUT}{j}"))).collect();
        GadgetEval {
            mul,
            tables,
            orig,
            masked,
            orig_slots: os.0.len(),
            masked_slots: ms.0.len(),
            free,
            inputs,
            orig_out,
            masked_out,
        }
    }

    fn run(&self, steps: &[Step], env: &mut [u16], values: &[u16]) {
        for st in steps {
            match st {
                Step::Assign(s, op) => env[*s] = eval(op, env, &self.mul, &self.tables),
                Step::Rand(s, k) => env[*s] = values[*k],
            }
        }
    }

    /// Original output on the decoded inputs XOR the decoded masked
    /// output; `values` follows [`GadgetEval::free`].
    pub fn difference(&self, values: &[u16]) -> u16 {
        let mut oe = vec![0u16; self.orig_slots];
        let mut me = vec![0u16; self.masked_slots];
        let mut k = 0;
        for (o, shares) in &self.inputs {
            for &s in shares {
                me[s] = values[k];
                oe[*o] ^= values[k];
                k += 1;
            }
        }
        self.run(&self.orig, &mut oe, values);
        self.run(&self.masked, &mut me, values);
        self.masked_out.iter().fold(oe[self.orig_out], |a, &s| a ^ me[s])
    }

    pub fn difference_named(&self, assignment: &HashMap<String, u16>) -> u16 {
        let values: Vec<u16> = self.free.iter().map(|n| assignment.get(n).copied().unwrap_or(0)).collect();
        self.difference(&values)
    }

    /// Enumerates every input share and random value; returns the first
    /// assignment with a nonzero difference.
    pub fn counterexample(&self) -> Option<Vec<u16>> {
        let total = 16u64.pow(self.free.len() as u32);
        let mut values = vec![0u16; self.free.len()];
        for k in 0..total {
            let mut rest = k;
            for v in values.iter_mut() {
                *v = (rest % 16) as u16;
                rest /= 16;
            }
            if self.difference(&values) != 0 {
                return Some(values);
            }
        }
        None
    }
}

fn eval(op: &Op, env: &[u16], mul: &[[u16; 16]; 16], tables: &[[u16; 16]]) -> u16 {
    match op {
        Op::Slot(s) => env[*s],
        Op::Const(c) => *c,
        Op::Add(a, b) => eval(a, env, mul, tables) ^ eval(b, env, mul, tables),
        Op::Mul(a, b) => mul[eval(a, env, mul, tables) as usize][eval(b, env, mul, tables) as usize],
        Op::Table(t, a) => tables[*t][eval(a, env, mul, tables) as usize],
    }
}
