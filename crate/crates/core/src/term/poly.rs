//! Factors, monomials and polynomials in normal-form shape, with the
//! factor order and the monomial order.

use std::cmp::Ordering;
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use super::Sym;
use crate::field::{FieldCtx, FieldElem};

/// A factor: constant, variable, or an affine symbol applied to an
/// XOR-free argument. Constants never appear in [`Monomial::powers`]; they
/// live in the coefficient.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Factor {
    Const(FieldElem),
    Var(Sym),
    App(Sym, Arc<Monomial>),
}

impl Factor {
    fn class(&self) -> u8 {
        match self {
            Factor::Const(_) => 0,
            Factor::Var(_) => 1,
            Factor::App(..) => 2,
        }
    }
}

/// Product of factor powers times a nonzero coefficient. `powers` is
/// strictly descending under the factor order; exponents lie in
/// `1..=2^n - 1` once reduced.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Monomial {
    pub powers: Vec<(Factor, u32)>,
    pub coeff: FieldElem,
}

/// XOR-sum of monomials, strictly descending under the monomial order.
/// The empty polynomial is 0.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct Polynomial {
    pub terms: Vec<Monomial>,
}

/// Factor order: constants by value, then variables by name, then
/// applications by symbol name and argument.
pub fn cmp_factor(a: &Factor, b: &Factor) -> Ordering {
    match (a, b) {
        (Factor::Const(x), Factor::Const(y)) => x.cmp(y),
        (Factor::Var(x), Factor::Var(y)) => x.as_ref().cmp(y.as_ref()),
        (Factor::App(f, s), Factor::App(g, t)) => f
            .as_ref()
            .cmp(g.as_ref())
            .then_with(|| cmp_monomial(s, t)),
        _ => a.class().cmp(&b.class()),
    }
}

/// Monomial order: lexicographic on the descending expanded factor
/// sequence, where a power `(α, k)` stands for `k` copies of `α` and a
/// coefficient other than 1 is a trailing constant factor. A proper
/// prefix compares smaller.
pub fn cmp_monomial(a: &Monomial, b: &Monomial) -> Ordering {
    cmp_body(a, b).then_with(|| {
        let ca = (a.coeff != FieldElem::ONE).then_some(a.coeff);
        let cb = (b.coeff != FieldElem::ONE).then_some(b.coeff);
        ca.cmp(&cb)
    })
}

/// The monomial order with coefficients ignored. Monomials with equal
/// bodies are adjacent under [`cmp_monomial`].
pub fn cmp_body(a: &Monomial, b: &Monomial) -> Ordering {
    let mut i = 0;
    loop {
        match (a.powers.get(i), b.powers.get(i)) {
            (Some((fa, ka)), Some((fb, kb))) => {
                let o = cmp_factor(fa, fb);
                if o != Ordering::Equal {
                    return o;
                }
                if ka != kb {
                    return ka.cmp(kb);
                }
            }
            (Some(_), None) => return Ordering::Greater,
            (None, Some(_)) => return Ordering::Less,
            (None, None) => return Ordering::Equal,
        }
        i += 1;
    }
}

impl Ord for Factor {
    fn cmp(&self, other: &Self) -> Ordering {
        cmp_factor(self, other)
    }
}

impl PartialOrd for Factor {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Monomial {
    fn cmp(&self, other: &Self) -> Ordering {
        cmp_monomial(self, other)
    }
}

impl PartialOrd for Monomial {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ShapeError {
    #[error("monomials not strictly descending at position {0}")]
    MonomialOrder(usize),
    #[error("factors not strictly descending in monomial {0}")]
    FactorOrder(usize),
    #[error("zero coefficient in monomial {0}")]
    ZeroCoeff(usize),
    #[error("exponent {exp} out of range in monomial {index}")]
    Exponent { index: usize, exp: u32 },
    #[error("constant stored as a power in monomial {0}")]
    ConstPower(usize),
    #[error("affine argument is zero or malformed in monomial {0}")]
    Argument(usize),
}

impl Monomial {
    pub fn constant(c: FieldElem) -> Self {
        Monomial { powers: Vec::new(), coeff: c }
    }

    pub fn var(name: Sym) -> Self {
        Monomial { powers: vec![(Factor::Var(name), 1)], coeff: FieldElem::ONE }
    }

    pub fn is_constant(&self) -> bool {
        self.powers.is_empty()
    }

    /// Same factor powers, coefficients ignored.
    pub fn same_body(&self, other: &Self) -> bool {
        self.powers == other.powers
    }

    /// Product of two monomials with exponents reduced in `field`.
    pub fn mul(&self, other: &Self, field: &FieldCtx) -> Monomial {
        let coeff = field.mul(self.coeff, other.coeff);
        let mut powers = Vec::with_capacity(self.powers.len() + other.powers.len());
        let (mut i, mut j) = (0, 0);
        while i < self.powers.len() && j < other.powers.len() {
            let (fa, ka) = &self.powers[i];
            let (fb, kb) = &other.powers[j];
            match cmp_factor(fa, fb) {
                Ordering::Greater => {
                    powers.push((fa.clone(), *ka));
                    i += 1;
                }
                Ordering::Less => {
                    powers.push((fb.clone(), *kb));
                    j += 1;
                }
                Ordering::Equal => {
                    let k = field
                        .reduce_exponent(u64::from(*ka) + u64::from(*kb))
                        .expect("exponent sum is positive");
                    powers.push((fa.clone(), k as u32));
                    i += 1;
                    j += 1;
                }
            }
        }
        powers.extend_from_slice(&self.powers[i..]);
        powers.extend_from_slice(&other.powers[j..]);
        Monomial { powers, coeff }
    }

    /// Affine symbols applied anywhere inside, nested arguments included.
    pub fn symbols(&self, out: &mut std::collections::BTreeSet<Sym>) {
        for (f, _) in &self.powers {
            if let Factor::App(g, arg) = f {
                out.insert(g.clone());
                arg.symbols(out);
            }
        }
    }

    pub fn degree(&self) -> u64 {
        self.powers.iter().map(|(_, k)| u64::from(*k)).sum()
    }

    /// Number of factor and coefficient nodes, counting nested arguments.
    pub fn size(&self) -> usize {
        1 + self
            .powers
            .iter()
            .map(|(f, _)| match f {
                Factor::App(_, arg) => 1 + arg.size(),
                _ => 1,
            })
            .sum::<usize>()
    }

    fn check_shape(&self, index: usize, field: &FieldCtx) -> Result<(), ShapeError> {
        if self.coeff.is_zero() {
            return Err(ShapeError::ZeroCoeff(index));
        }
        for w in self.powers.windows(2) {
            if cmp_factor(&w[0].0, &w[1].0) != Ordering::Greater {
                return Err(ShapeError::FactorOrder(index));
            }
        }
        for (f, k) in &self.powers {
            if *k == 0 || u64::from(*k) > field.group_order() {
                return Err(ShapeError::Exponent { index, exp: *k });
            }
            match f {
                Factor::Const(_) => return Err(ShapeError::ConstPower(index)),
                Factor::Var(_) => {}
                Factor::App(_, arg) => {
                    if arg.coeff.0.count_ones() != 1 {
                        return Err(ShapeError::Argument(index));
                    }
                    arg.check_shape(index, field)
                        .map_err(|_| ShapeError::Argument(index))?;
                }
            }
        }
        Ok(())
    }
}

impl Polynomial {
    pub fn zero() -> Self {
        Polynomial::default()
    }

    pub fn constant(c: FieldElem) -> Self {
        if c.is_zero() {
            Polynomial::zero()
        } else {
            Polynomial { terms: vec![Monomial::constant(c)] }
        }
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// The constant value when the polynomial has no variables or
    /// applications.
    pub fn as_constant(&self) -> Option<FieldElem> {
        match self.terms.as_slice() {
            [] => Some(FieldElem::ZERO),
            [m] if m.is_constant() => Some(m.coeff),
            _ => None,
        }
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn size(&self) -> usize {
        self.terms.iter().map(Monomial::size).sum()
    }

    pub fn symbols(&self) -> std::collections::BTreeSet<Sym> {
        let mut out = std::collections::BTreeSet::new();
        for m in &self.terms {
            m.symbols(&mut out);
        }
        out
    }

    /// Normal-form shape: strictly descending monomials, strictly
    /// descending factors, nonzero coefficients, reduced exponents, and
    /// XOR-free affine arguments whose coefficient is a single bit.
    pub fn check_shape(&self, field: &FieldCtx) -> Result<(), ShapeError> {
        for (i, m) in self.terms.iter().enumerate() {
            m.check_shape(i, field)?;
        }
        for (i, w) in self.terms.windows(2).enumerate() {
            if cmp_monomial(&w[0], &w[1]) != Ordering::Greater {
                return Err(ShapeError::MonomialOrder(i + 1));
            }
        }
        Ok(())
    }
}

impl fmt::Display for Factor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Factor::Const(c) => write!(f, "{c}"),
            Factor::Var(v) => write!(f, "{v}"),
            Factor::App(s, arg) => write!(f, "{s}({arg})"),
        }
    }
}

impl fmt::Display for Monomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (fac, k) in &self.powers {
            if !first {
                write!(f, "*")?;
            }
            first = false;
            write!(f, "{fac}")?;
            if *k != 1 {
                write!(f, "^{k}")?;
            }
        }
        if self.coeff != FieldElem::ONE || first {
            if !first {
                write!(f, "*")?;
            }
            write!(f, "{}", self.coeff)?;
        }
        Ok(())
    }
}

impl fmt::Display for Polynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        for (i, m) in self.terms.iter().enumerate() {
            if i > 0 {
                write!(f, " + ")?;
            }
            write!(f, "{m}")?;
        }
        Ok(())
    }
}
