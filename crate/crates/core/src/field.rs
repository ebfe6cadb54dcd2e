//! Arithmetic in GF(2^n) = GF(2)[X]/(P).
//!
//! Elements are bit vectors of polynomial coefficients. Addition is XOR,
//! multiplication is shift-and-reduce ("Russian peasant") against the
//! modulus. Contexts are immutable once built and cheap to clone.

use std::fmt;

use serde::{Serialize, Serializer};
use thiserror::Error;

/// Largest supported field width.
pub const MAX_WIDTH: u32 = 16;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FieldError {
    #[error("field width {0} is outside 1..={MAX_WIDTH}")]
    Width(u32),
    #[error("modulus {poly:#x} does not have degree {n}")]
    Degree { n: u32, poly: u32 },
    #[error("modulus {0:#x} is reducible over GF(2)")]
    Reducible(u32),
    #[error("exponent 0 cannot be reduced")]
    ZeroExponent,
    #[error("value {value:#x} is not an element of GF(2^{n})")]
    OutOfRange { value: u64, n: u32 },
}

/// An element of GF(2^n), stored as the coefficient bit vector.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FieldElem(pub u16);

impl FieldElem {
    pub const ZERO: FieldElem = FieldElem(0);
    pub const ONE: FieldElem = FieldElem(1);

    pub fn value(self) -> u16 {
        self.0
    }

    pub fn is_zero(self) -> bool {
        self.0 == 0
    }
}

impl fmt::Display for FieldElem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::LowerHex for FieldElem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::LowerHex::fmt(&self.0, f)
    }
}

impl Serialize for FieldElem {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u16(self.0)
    }
}

/// Log/antilog tables over a primitive element, kept for n <= 8.
#[derive(Clone, Debug)]
struct LogTables {
    log: Vec<u16>,
    exp: Vec<u16>,
}

#[derive(Clone, Debug)]
pub struct FieldCtx {
    n: u32,
    poly: u32,
    tables: Option<LogTables>,
}

impl PartialEq for FieldCtx {
    fn eq(&self, other: &Self) -> bool {
        self.n == other.n && self.poly == other.poly
    }
}

impl Eq for FieldCtx {}

impl Default for FieldCtx {
    fn default() -> Self {
        FieldCtx::aes()
    }
}

impl fmt::Display for FieldCtx {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "GF(2^{})/{:#x}", self.n, self.poly)
    }
}

impl FieldCtx {
    /// Builds GF(2^n) modulo `poly`, rejecting reducible moduli.
    pub fn new(n: u32, poly: u32) -> Result<Self, FieldError> {
        if n == 0 || n > MAX_WIDTH {
            return Err(FieldError::Width(n));
        }
        if degree(poly) != Some(n) {
            return Err(FieldError::Degree { n, poly });
        }
        if !check_irreducible(poly) {
            return Err(FieldError::Reducible(poly));
        }
        let mut ctx = FieldCtx {
            n,
            poly,
            tables: None,
        };
        if n <= 8 {
            ctx.tables = ctx.build_tables();
        }
        Ok(ctx)
    }

    /// GF(256) with the AES modulus X^8+X^4+X^3+X+1.
    pub fn aes() -> Self {
        FieldCtx::new(8, 0x11B).expect("AES modulus is irreducible")
    }

    /// GF(16) with modulus X^4+X+1.
    pub fn gf16() -> Self {
        FieldCtx::new(4, 0x13).expect("X^4+X+1 is irreducible")
    }

    pub fn width(&self) -> u32 {
        self.n
    }

    pub fn poly(&self) -> u32 {
        self.poly
    }

    /// Number of field elements, 2^n.
    pub fn order(&self) -> u32 {
        1 << self.n
    }

    /// Order of the multiplicative group, 2^n - 1.
    pub fn group_order(&self) -> u64 {
        (1u64 << self.n) - 1
    }

    pub fn mask(&self) -> u16 {
        ((1u32 << self.n) - 1) as u16
    }

    pub fn contains(&self, a: FieldElem) -> bool {
        (a.0 as u32) < self.order()
    }

    /// Converts an integer literal into an element, rejecting values >= 2^n.
    pub fn elem(&self, value: u64) -> Result<FieldElem, FieldError> {
        if value < self.order() as u64 {
            Ok(FieldElem(value as u16))
        } else {
            Err(FieldError::OutOfRange { value, n: self.n })
        }
    }

    pub fn elements(&self) -> impl Iterator<Item = FieldElem> {
        (0..self.order()).map(|v| FieldElem(v as u16))
    }

    pub fn add(&self, a: FieldElem, b: FieldElem) -> FieldElem {
        FieldElem(a.0 ^ b.0)
    }

    /// Shift-and-reduce multiplication: one conditional XOR and one
    /// reduction per bit of `b`.
    pub fn mul(&self, a: FieldElem, b: FieldElem) -> FieldElem {
        let top = 1u32 << self.n;
        let mut a = a.0 as u32;
        let mut b = b.0 as u32;
        let mut acc = 0u32;
        for _ in 0..self.n {
            if b & 1 == 1 {
                acc ^= a;
            }
            b >>= 1;
            a <<= 1;
            if a & top != 0 {
                a ^= self.poly;
            }
        }
        FieldElem(acc as u16)
    }

    /// Square-and-multiply. `a^0 = 1` for every `a`, including zero.
    pub fn pow(&self, a: FieldElem, mut k: u64) -> FieldElem {
        let mut base = a;
        let mut acc = FieldElem::ONE;
        while k > 0 {
            if k & 1 == 1 {
                acc = self.mul(acc, base);
            }
            base = self.mul(base, base);
            k >>= 1;
        }
        acc
    }

    /// Maps `k >= 1` into `[1, 2^n - 1]` so that `x^k = x^reduced` holds for
    /// every `x`, zero included. The result is never 0.
    pub fn reduce_exponent(&self, k: u64) -> Result<u64, FieldError> {
        if k == 0 {
            return Err(FieldError::ZeroExponent);
        }
        let m = self.group_order();
        Ok((k - 1) % m + 1)
    }

    /// Product computed through log/antilog tables; `None` when n > 8.
    pub fn mul_by_tables(&self, a: FieldElem, b: FieldElem) -> Option<FieldElem> {
        let t = self.tables.as_ref()?;
        if a.0 == 0 || b.0 == 0 {
            return Some(FieldElem::ZERO);
        }
        let m = self.group_order() as usize;
        let s = (t.log[a.0 as usize] as usize + t.log[b.0 as usize] as usize) % m;
        Some(FieldElem(t.exp[s]))
    }

    pub fn has_tables(&self) -> bool {
        self.tables.is_some()
    }

    fn build_tables(&self) -> Option<LogTables> {
        let m = self.group_order() as usize;
        for g in 1..self.order() {
            let g = FieldElem(g as u16);
            let mut exp = Vec::with_capacity(m);
            let mut cur = FieldElem::ONE;
            let mut primitive = true;
            for i in 0..m {
                if i > 0 && cur == FieldElem::ONE {
                    primitive = false;
                    break;
                }
                exp.push(cur.0);
                cur = self.mul(cur, g);
            }
            if !primitive {
                continue;
            }
            let mut log = vec![0u16; self.order() as usize];
            for (i, &e) in exp.iter().enumerate() {
                log[e as usize] = i as u16;
            }
            return Some(LogTables { log, exp });
        }
        None
    }
}

/// Degree of a GF(2) polynomial encoded as a bit vector.
pub fn degree(poly: u32) -> Option<u32> {
    if poly == 0 {
        None
    } else {
        Some(31 - poly.leading_zeros())
    }
}

fn poly_rem(mut a: u32, b: u32) -> u32 {
    let db = degree(b).expect("non-zero divisor");
    while let Some(da) = degree(a) {
        if da < db {
            break;
        }
        a ^= b << (da - db);
    }
    a
}

/// Trial division by every polynomial of degree 1..=deg/2.
pub fn check_irreducible(poly: u32) -> bool {
    let Some(deg) = degree(poly) else {
        return false;
    };
    if deg == 0 {
        return false;
    }
    for d in 1..=deg / 2 {
        for q in (1u32 << d)..(1u32 << (d + 1)) {
            if poly_rem(poly, q) == 0 {
                return false;
            }
        }
    }
    true
}

/// Parses `0x11B`, `0b1011` or decimal polynomial literals.
pub fn parse_poly(text: &str) -> Option<u32> {
    let t = text.trim();
    if let Some(h) = t.strip_prefix("0x").or_else(|| t.strip_prefix("0X")) {
        u32::from_str_radix(h, 16).ok()
    } else if let Some(b) = t.strip_prefix("0b") {
        u32::from_str_radix(b, 2).ok()
    } else {
        t.parse().ok()
    }
}
