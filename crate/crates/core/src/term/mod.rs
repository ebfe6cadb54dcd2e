//! Hash-consed term DAG over constants, variables, XOR, field
//! multiplication and unary affine-symbol applications.

mod poly;

pub use poly::{cmp_body, cmp_factor, cmp_monomial, Factor, Monomial, Polynomial, ShapeError};

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::field::{FieldCtx, FieldElem};

/// Interned name of a variable or affine symbol.
pub type Sym = Arc<str>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TermId(u32);

impl TermId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum TermNode {
    Const(FieldElem),
    Var(Sym),
    Add(TermId, TermId),
    Mul(TermId, TermId),
    App(Sym, TermId),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TermError {
    #[error("unknown affine symbol `{0}`")]
    UnknownSymbol(String),
    #[error("no value bound for variable `{0}`")]
    UnboundVar(String),
    #[error("no function table for affine symbol `{0}`")]
    MissingTable(String),
}

/// Append-only deduplicating node store. Structurally equal nodes always
/// receive the same [`TermId`].
#[derive(Default, Clone)]
pub struct TermStore {
    nodes: Vec<TermNode>,
    index: HashMap<TermNode, TermId>,
    names: HashSet<Sym>,
    symbols: HashSet<Sym>,
}

impl TermStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// A store that accepts applications of the given affine symbols.
    pub fn with_symbols<I, S>(symbols: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut store = Self::new();
        for s in symbols {
            store.declare_symbol(s.as_ref());
        }
        store
    }

    pub fn declare_symbol(&mut self, name: &str) -> Sym {
        let sym = self.intern(name);
        self.symbols.insert(sym.clone());
        sym
    }

    pub fn is_symbol(&self, name: &str) -> bool {
        self.symbols.contains(name)
    }

    pub fn intern(&mut self, name: &str) -> Sym {
        if let Some(s) = self.names.get(name) {
            return s.clone();
        }
        let s: Sym = Arc::from(name);
        self.names.insert(s.clone());
        s
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, id: TermId) -> &TermNode {
        &self.nodes[id.index()]
    }

    fn insert(&mut self, node: TermNode) -> TermId {
        if let Some(&id) = self.index.get(&node) {
            return id;
        }
        let id = TermId(u32::try_from(self.nodes.len()).expect("term store overflow"));
        self.nodes.push(node.clone());
        self.index.insert(node, id);
        id
    }

    pub fn mk_const(&mut self, c: FieldElem) -> TermId {
        self.insert(TermNode::Const(c))
    }

    pub fn zero(&mut self) -> TermId {
        self.mk_const(FieldElem::ZERO)
    }

    pub fn mk_var(&mut self, name: &str) -> TermId {
        let s = self.intern(name);
        self.insert(TermNode::Var(s))
    }

    pub fn mk_add(&mut self, a: TermId, b: TermId) -> TermId {
        self.insert(TermNode::Add(a, b))
    }

    pub fn mk_mul(&mut self, a: TermId, b: TermId) -> TermId {
        self.insert(TermNode::Mul(a, b))
    }

    pub fn mk_app(&mut self, symbol: &str, arg: TermId) -> Result<TermId, TermError> {
        let Some(sym) = self.symbols.get(symbol).cloned() else {
            return Err(TermError::UnknownSymbol(symbol.to_string()));
        };
        Ok(self.insert(TermNode::App(sym, arg)))
    }

    /// Right-associated XOR of `terms`; constant 0 when empty.
    pub fn mk_sum(&mut self, terms: &[TermId]) -> TermId {
        match terms.split_last() {
            None => self.zero(),
            Some((&last, rest)) => rest.iter().rev().fold(last, |acc, &t| self.mk_add(t, acc)),
        }
    }

    /// Right-associated product of `terms`; constant 1 when empty.
    pub fn mk_product(&mut self, terms: &[TermId]) -> TermId {
        match terms.split_last() {
            None => self.mk_const(FieldElem::ONE),
            Some((&last, rest)) => rest.iter().rev().fold(last, |acc, &t| self.mk_mul(t, acc)),
        }
    }

    pub fn children(&self, id: TermId) -> impl Iterator<Item = TermId> {
        let (a, b) = match *self.node(id) {
            TermNode::Const(_) | TermNode::Var(_) => (None, None),
            TermNode::Add(a, b) | TermNode::Mul(a, b) => (Some(a), Some(b)),
            TermNode::App(_, a) => (Some(a), None),
        };
        a.into_iter().chain(b)
    }

    /// Every node reachable from `root`, children before parents, each once.
    pub fn post_order(&self, root: TermId) -> Vec<TermId> {
        let mut seen = HashSet::new();
        let mut out = Vec::new();
        let mut stack = vec![(root, false)];
        while let Some((id, expanded)) = stack.pop() {
            if expanded {
                out.push(id);
                continue;
            }
            if !seen.insert(id) {
                continue;
            }
            stack.push((id, true));
            for c in self.children(id) {
                if !seen.contains(&c) {
                    stack.push((c, false));
                }
            }
        }
        out
    }

    /// Number of distinct DAG nodes under `root`.
    pub fn dag_size(&self, root: TermId) -> usize {
        self.post_order(root).len()
    }

    /// Size of the term read as a tree (shared nodes counted per occurrence).
    pub fn tree_size(&self, root: TermId) -> u64 {
        let mut size: HashMap<TermId, u64> = HashMap::new();
        for id in self.post_order(root) {
            let s = 1 + self.children(id).map(|c| size[&c]).sum::<u64>();
            size.insert(id, s);
        }
        size[&root]
    }

    pub fn vars(&self, root: TermId) -> BTreeSet<Sym> {
        self.post_order(root)
            .into_iter()
            .filter_map(|id| match self.node(id) {
                TermNode::Var(v) => Some(v.clone()),
                _ => None,
            })
            .collect()
    }

    pub fn symbols_in(&self, root: TermId) -> BTreeSet<Sym> {
        self.post_order(root)
            .into_iter()
            .filter_map(|id| match self.node(id) {
                TermNode::App(f, _) => Some(f.clone()),
                _ => None,
            })
            .collect()
    }

    /// Rebuilds `id` with new children, keeping its operator.
    pub fn rebuild(&mut self, id: TermId, children: &[TermId]) -> TermId {
        match self.node(id).clone() {
            TermNode::Const(_) | TermNode::Var(_) => id,
            TermNode::Add(..) => self.mk_add(children[0], children[1]),
            TermNode::Mul(..) => self.mk_mul(children[0], children[1]),
            TermNode::App(f, _) => self.insert(TermNode::App(f, children[0])),
        }
    }

    /// Bottom-up rewrite of every node, memoized over the DAG. `leaf` may
    /// replace a node outright; otherwise the node is rebuilt from its
    /// mapped children.
    pub fn map_bottom_up<F>(&mut self, root: TermId, mut leaf: F) -> TermId
    where
        F: FnMut(&mut TermStore, TermId, &[TermId]) -> Option<TermId>,
    {
        let order = self.post_order(root);
        let mut done: HashMap<TermId, TermId> = HashMap::with_capacity(order.len());
        for id in order {
            let kids: Vec<TermId> = self.children(id).map(|c| done[&c]).collect();
            let new = match leaf(self, id, &kids) {
                Some(t) => t,
                None => self.rebuild(id, &kids),
            };
            done.insert(id, new);
        }
        done[&root]
    }

    /// Simultaneous substitution of variables.
    pub fn substitute(&mut self, root: TermId, map: &HashMap<Sym, TermId>) -> TermId {
        if map.is_empty() {
            return root;
        }
        self.map_bottom_up(root, |store, id, _| match store.node(id) {
            TermNode::Var(v) => map.get(v).copied(),
            _ => None,
        })
    }

    /// Substitution keyed by plain names.
    pub fn substitute_names(&mut self, root: TermId, map: &[(&str, TermId)]) -> TermId {
        let map: HashMap<Sym, TermId> = map.iter().map(|(k, v)| (self.intern(k), *v)).collect();
        self.substitute(root, &map)
    }

    /// Concrete value of `root` under variable assignment `env` and the
    /// affine-symbol tables in `interp`.
    pub fn eval(
        &self,
        root: TermId,
        field: &FieldCtx,
        env: &HashMap<Sym, FieldElem>,
        interp: &Interpretation,
    ) -> Result<FieldElem, TermError> {
        let mut val: HashMap<TermId, FieldElem> = HashMap::new();
        for id in self.post_order(root) {
            let v = match self.node(id) {
                TermNode::Const(c) => *c,
                TermNode::Var(v) => *env
                    .get(v)
                    .ok_or_else(|| TermError::UnboundVar(v.to_string()))?,
                TermNode::Add(a, b) => field.add(val[a], val[b]),
                TermNode::Mul(a, b) => field.mul(val[a], val[b]),
                TermNode::App(f, a) => interp.apply(f, val[a])?,
            };
            val.insert(id, v);
        }
        Ok(val[&root])
    }

    pub fn display(&self, root: TermId) -> TermDisplay<'_> {
        TermDisplay { store: self, root }
    }
}

/// Infix rendering: `^` for XOR, `*` for multiplication, `f(..)` for
/// applications.
pub struct TermDisplay<'a> {
    store: &'a TermStore,
    root: TermId,
}

impl TermDisplay<'_> {
    fn write(&self, f: &mut fmt::Formatter<'_>, id: TermId, in_product: bool) -> fmt::Result {
        match self.store.node(id) {
            TermNode::Const(c) => write!(f, "{c}"),
            TermNode::Var(v) => write!(f, "{v}"),
            TermNode::App(s, a) => {
                write!(f, "{s}(")?;
                self.write(f, *a, false)?;
                write!(f, ")")
            }
            TermNode::Add(a, b) => {
                if in_product {
                    write!(f, "(")?;
                }
                self.write(f, *a, false)?;
                write!(f, " ^ ")?;
                self.write(f, *b, false)?;
                if in_product {
                    write!(f, ")")?;
                }
                Ok(())
            }
            TermNode::Mul(a, b) => {
                self.write(f, *a, true)?;
                write!(f, "*")?;
                self.write(f, *b, true)
            }
        }
    }
}

impl fmt::Display for TermDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.write(f, self.root, false)
    }
}

/// Function tables for affine symbols (2^n entries each).
#[derive(Clone, Debug, Default)]
pub struct Interpretation {
    tables: HashMap<Sym, Arc<[FieldElem]>>,
}

impl Interpretation {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: &str, table: Vec<FieldElem>) {
        self.tables.insert(Arc::from(name), table.into());
    }

    pub fn table(&self, name: &str) -> Option<&[FieldElem]> {
        self.tables.get(name).map(|t| &t[..])
    }

    pub fn contains(&self, name: &str) -> bool {
        self.tables.contains_key(name)
    }

    pub fn apply(&self, name: &str, x: FieldElem) -> Result<FieldElem, TermError> {
        let t = self
            .tables
            .get(name)
            .ok_or_else(|| TermError::MissingTable(name.to_string()))?;
        Ok(t[x.0 as usize])
    }

    /// Table of x -> M x ^ offset for a uniformly random GF(2)-linear map M.
    pub fn random_affine_table<R: rand::Rng>(
        field: &FieldCtx,
        rng: &mut R,
        offset: FieldElem,
    ) -> Vec<FieldElem> {
        let mask = field.mask();
        let columns: Vec<u16> = (0..field.width()).map(|_| rng.gen::<u16>() & mask).collect();
        field
            .elements()
            .map(|x| {
                let mut acc = offset.0;
                for (i, col) in columns.iter().enumerate() {
                    if (x.0 >> i) & 1 == 1 {
                        acc ^= col;
                    }
                }
                FieldElem(acc)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_consing_shares_nodes() {
        let mut s = TermStore::with_symbols(["exp2"]);
        let x = s.mk_var("x");
        let y = s.mk_var("y");
        let a = s.mk_add(x, y);
        let b = s.mk_add(x, y);
        assert_eq!(a, b);
        assert_ne!(a, s.mk_add(y, x));
        let z1 = s.zero();
        let z2 = s.mk_const(FieldElem(0));
        assert_eq!(z1, z2);
        let app = s.mk_app("exp2", x).unwrap();
        assert!(matches!(s.node(app), TermNode::App(f, _) if &**f == "exp2"));
        assert_eq!(
            s.mk_app("exp3", x),
            Err(TermError::UnknownSymbol("exp3".into()))
        );
    }

    #[test]
    fn substitution_examples() {
        let mut s = TermStore::new();
        let x = s.mk_var("x");
        let y = s.mk_var("y");
        let xx = s.mk_mul(x, x);
        let xy = s.mk_add(x, y);
        let out = s.substitute_names(xx, &[("x", xy)]);
        let expect = s.mk_mul(xy, xy);
        assert_eq!(out, expect);
        assert_eq!(s.display(out).to_string(), "(x ^ y)*(x ^ y)");

        assert_eq!(s.substitute(xx, &HashMap::new()), xx);

        let a = s.mk_var("a");
        let b = s.mk_var("b");
        let ab = s.mk_mul(a, b);
        let a0 = s.mk_var("a0");
        let a1 = s.mk_var("a1");
        let b0 = s.mk_var("b0");
        let b1 = s.mk_var("b1");
        let sa = s.mk_add(a0, a1);
        let sb = s.mk_add(b0, b1);
        let out = s.substitute_names(ab, &[("a", sa), ("b", sb)]);
        assert_eq!(out, s.mk_mul(sa, sb));
    }

    #[test]
    fn substitution_is_simultaneous() {
        let mut s = TermStore::new();
        let x = s.mk_var("x");
        let y = s.mk_var("y");
        let t = s.mk_add(x, y);
        let out = s.substitute_names(t, &[("x", y), ("y", x)]);
        assert_eq!(out, s.mk_add(y, x));
    }

    #[test]
    fn evaluation() {
        let f = FieldCtx::aes();
        let mut s = TermStore::with_symbols(["exp2"]);
        let x = s.mk_var("x");
        let xx = s.mk_add(x, x);
        let env: HashMap<Sym, FieldElem> = [(Arc::from("x"), FieldElem(0x57))].into();
        let interp = Interpretation::new();
        assert_eq!(s.eval(xx, &f, &env, &interp), Ok(FieldElem(0)));

        let mut sq = Interpretation::new();
        sq.insert("exp2", f.elements().map(|v| f.mul(v, v)).collect());
        let app = s.mk_app("exp2", x).unwrap();
        let env: HashMap<Sym, FieldElem> = [(Arc::from("x"), FieldElem(2))].into();
        assert_eq!(s.eval(app, &f, &env, &sq), Ok(FieldElem(4)));
        assert_eq!(
            s.eval(app, &f, &env, &interp),
            Err(TermError::MissingTable("exp2".into()))
        );
        let y = s.mk_var("y");
        assert_eq!(
            s.eval(y, &f, &env, &interp),
            Err(TermError::UnboundVar("y".into()))
        );
    }

    #[test]
    fn zero_law_exhaustive_gf16() {
        // (x^y)*(x^y) ^ x*x ^ y*y vanishes everywhere
        let f = FieldCtx::gf16();
        let mut s = TermStore::new();
        let x = s.mk_var("x");
        let y = s.mk_var("y");
        let xy = s.mk_add(x, y);
        let sq = s.mk_mul(xy, xy);
        let xx = s.mk_mul(x, x);
        let yy = s.mk_mul(y, y);
        let t = s.mk_sum(&[sq, xx, yy]);
        let interp = Interpretation::new();
        for a in f.elements() {
            for b in f.elements() {
                let env: HashMap<Sym, FieldElem> =
                    [(Arc::from("x"), a), (Arc::from("y"), b)].into();
                assert_eq!(s.eval(t, &f, &env, &interp).unwrap(), FieldElem(0));
            }
        }
    }

    #[test]
    fn random_linear_tables_are_linear() {
        use rand::SeedableRng;
        let f = FieldCtx::gf16();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let t = Interpretation::random_affine_table(&f, &mut rng, FieldElem(5));
        for x in f.elements() {
            for y in f.elements() {
                let lhs = t[(x.0 ^ y.0) as usize];
                let rhs = FieldElem(t[x.0 as usize].0 ^ t[y.0 as usize].0 ^ 5);
                assert_eq!(lhs, rhs);
            }
        }
    }
}
