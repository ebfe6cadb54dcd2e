use std::collections::{BTreeSet, HashMap};

use super::parser::visit_calls;
use super::{Builtin, LangError, Program};

/// Direct-invocation graph over procedures and affine symbols.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CallGraph {
    nodes: Vec<String>,
    edges: Vec<BTreeSet<usize>>,
    index: HashMap<String, usize>,
}

impl CallGraph {
    pub fn build(prog: &Program) -> Result<Self, LangError> {
        let mut g = CallGraph {
            nodes: Vec::new(),
            edges: Vec::new(),
            index: HashMap::new(),
        };
        for name in prog
            .affine_defs
            .iter()
            .map(|a| &a.name)
            .chain(prog.affine_decls.iter().map(|d| &d.name))
            .chain(prog.procs.iter().map(|p| &p.name))
        {
            g.index.insert(name.clone(), g.nodes.len());
            g.nodes.push(name.clone());
            g.edges.push(BTreeSet::new());
        }
        let add = |g: &mut CallGraph, from: &str, body: &[super::Stmt]| {
            let src = g.index[from];
            let mut callees = Vec::new();
            visit_calls(body, &mut |name, _| {
                if Builtin::from_name(name).is_none() {
                    callees.push(name.to_string());
                }
            });
            for c in callees {
                if let Some(&dst) = g.index.get(&c) {
                    g.edges[src].insert(dst);
                }
            }
        };
        for a in &prog.affine_defs {
            add(&mut g, &a.name, &a.body);
        }
        for p in &prog.procs {
            add(&mut g, &p.name, &p.orig);
            add(&mut g, &p.name, &p.masked);
        }
        g.topological_order()?;
        Ok(g)
    }

    pub fn nodes(&self) -> &[String] {
        &self.nodes
    }

    /// All edges as (caller, callee) pairs, sorted by node index.
    pub fn edges(&self) -> Vec<(&str, &str)> {
        self.edges
            .iter()
            .enumerate()
            .flat_map(|(i, out)| {
                out.iter()
                    .map(move |&j| (self.nodes[i].as_str(), self.nodes[j].as_str()))
            })
            .collect()
    }

    pub fn callees(&self, name: &str) -> Vec<&str> {
        self.index
            .get(name)
            .map(|&i| self.edges[i].iter().map(|&j| self.nodes[j].as_str()).collect())
            .unwrap_or_default()
    }

    /// Callees before callers; ties broken by declaration order.
    pub fn topological_order(&self) -> Result<Vec<&str>, LangError> {
        #[derive(Clone, Copy, PartialEq)]
        enum Mark {
            New,
            Active,
            Done,
        }
        let mut mark = vec![Mark::New; self.nodes.len()];
        let mut out = Vec::with_capacity(self.nodes.len());
        for root in 0..self.nodes.len() {
            if mark[root] != Mark::New {
                continue;
            }
            let mut stack: Vec<(usize, Vec<usize>)> =
                vec![(root, self.edges[root].iter().rev().copied().collect())];
            mark[root] = Mark::Active;
            while let Some((node, pending)) = stack.last_mut() {
                match pending.pop() {
                    Some(next) => match mark[next] {
                        Mark::Done => {}
                        Mark::Active => return Err(LangError::Recursion(self.nodes[next].clone())),
                        Mark::New => {
                            mark[next] = Mark::Active;
                            let succ = self.edges[next].iter().rev().copied().collect();
                            stack.push((next, succ));
                        }
                    },
                    None => {
                        let node = *node;
                        mark[node] = Mark::Done;
                        out.push(self.nodes[node].as_str());
                        stack.pop();
                    }
                }
            }
        }
        Ok(out)
    }

    /// Callers before callees.
    pub fn reverse_topological_order(&self) -> Result<Vec<&str>, LangError> {
        let mut v = self.topological_order()?;
        v.reverse();
        Ok(v)
    }
}

#[cfg(test)]
mod tests {
    use super::super::parse;
    use super::*;

    #[test]
    fn leaf_has_no_edges() {
        let p = parse("proc f(x) -> y { y <- x; shares 1; y0 <- x0; }").unwrap();
        let g = p.call_graph().unwrap();
        assert!(g.edges().is_empty());
        assert_eq!(g.topological_order().unwrap(), vec!["f"]);
    }

    #[test]
    fn chain_order() {
        let p = parse(
            "affine exp16(x) -> y { y <- exp4(exp4(x)); }
             affine exp4(x) -> y { y <- exp2(exp2(x)); }
             affine exp2(x) -> y { y <- x * x; }",
        )
        .unwrap();
        let g = p.call_graph().unwrap();
        assert_eq!(g.topological_order().unwrap(), vec!["exp2", "exp4", "exp16"]);
        assert_eq!(g.reverse_topological_order().unwrap(), vec!["exp16", "exp4", "exp2"]);
        assert_eq!(g.callees("exp16"), vec!["exp4"]);
    }

    #[test]
    fn recursion_rejected() {
        let p = parse(
            "affine f(x) -> y { y <- g(x); }
             affine g(x) -> y { y <- f(x); }",
        )
        .unwrap();
        assert!(matches!(p.call_graph(), Err(LangError::Recursion(_))));
        let p = parse("affine f(x) -> y { y <- f(x); }").unwrap();
        assert!(matches!(p.call_graph(), Err(LangError::Recursion(_))));
    }
}
