//! MSL generators for masked benchmark gadgets at any order d.

use std::fmt::Write;

use thiserror::Error;

use crate::field::FieldCtx;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GadgetError {
    #[error("unknown gadget `{0}` (known: {1})")]
    UnknownKind(String, String),
    #[error("`{kind}` supports orders up to {max}, got {d}")]
    OrderOutOfRange { kind: String, d: u32, max: u32 },
}

/// A family of masked gadgets indexed by the masking order.
pub trait Gadget: Send + Sync {
    fn kind(&self) -> &'static str;
    fn max_order(&self) -> u32;
    /// Procedure and affine definitions, without a field directive.
    fn body(&self, d: u32) -> String;
}

fn header(field: &FieldCtx) -> String {
    format!("field {} 0x{:X};\n", field.width(), field.poly())
}

/// Pairwise-random multiplication: r{i}_{j} is fresh for i < j, r{j}_{i}
/// folds in the cross products, and c{i} sums its row.
pub struct IswMult;

impl IswMult {
    fn proc(d: u32) -> String {
        let mut s = String::from("proc sec_mult(a, b) -> c {\n    c <- a * b;\n");
        writeln!(s, "    shares {};", d + 1).unwrap();
        for i in 0..=d {
            for j in i + 1..=d {
                writeln!(s, "    r{i}_{j} <- rand;").unwrap();
                writeln!(s, "    r{j}_{i} <- (r{i}_{j} ^ (a{i} * b{j})) ^ (a{j} * b{i});").unwrap();
            }
        }
        for i in 0..=d {
            write!(s, "    c{i} <- a{i} * b{i}").unwrap();
            for j in (0..=d).filter(|&j| j != i) {
                write!(s, " ^ r{i}_{j}").unwrap();
            }
            s.push_str(";\n");
        }
        s.push_str("}\n");
        s
    }
}

impl Gadget for IswMult {
    fn kind(&self) -> &'static str {
        "isw-mult"
    }

    fn max_order(&self) -> u32 {
        200
    }

    fn body(&self, d: u32) -> String {
        IswMult::proc(d)
    }
}

/// Every share but the first gets a fresh random; the first absorbs all
/// of them.
pub struct RefreshMasks;

impl RefreshMasks {
    fn proc(name: &str, d: u32) -> String {
        let mut s = format!("proc {name}(x) -> y {{\n    y <- x;\n    shares {};\n", d + 1);
        for i in 1..=d {
            writeln!(s, "    r{i} <- rand;").unwrap();
        }
        s.push_str("    y0 <- x0");
        for i in 1..=d {
            write!(s, " ^ r{i}").unwrap();
        }
        s.push_str(";\n");
        for i in 1..=d {
            writeln!(s, "    y{i} <- x{i} ^ r{i};").unwrap();
        }
        s.push_str("}\n");
        s
    }
}

impl Gadget for RefreshMasks {
    fn kind(&self) -> &'static str {
        "refresh-masks"
    }

    fn max_order(&self) -> u32 {
        200
    }

    fn body(&self, d: u32) -> String {
        RefreshMasks::proc("refresh_masks", d)
    }
}

/// Pairwise refresh: one fresh random per share pair i < j, added to
/// both shares.
pub struct RefreshM;

impl RefreshM {
    fn proc(name: &str, d: u32) -> String {
        let mut s = format!("proc {name}(x) -> y {{\n    y <- x;\n    shares {};\n", d + 1);
        for i in 0..=d {
            for j in i + 1..=d {
                writeln!(s, "    r{i}_{j} <- rand;").unwrap();
            }
        }
        for i in 0..=d {
            write!(s, "    y{i} <- x{i}").unwrap();
            for j in (0..=d).filter(|&j| j != i) {
                let (lo, hi) = (i.min(j), i.max(j));
                write!(s, " ^ r{lo}_{hi}").unwrap();
            }
            s.push_str(";\n");
        }
        s.push_str("}\n");
        s
    }
}

impl Gadget for RefreshM {
    fn kind(&self) -> &'static str {
        "refreshm"
    }

    fn max_order(&self) -> u32 {
        200
    }

    fn body(&self, d: u32) -> String {
        RefreshM::proc("refreshm", d)
    }
}

/// x^254 through the exponentiation chain with masked multiplications
/// and pairwise refreshes.
pub struct AesSboxInverse;

const EXP_CHAIN: &str = "affine exp2(x) -> y {
    y <- x * x;
}

affine exp4(x) -> y {
    y <- exp2(exp2(x));
}

affine exp16(x) -> y {
    y <- exp4(exp4(x));
}
";

impl Gadget for AesSboxInverse {
    fn kind(&self) -> &'static str {
        "aes-sbox-inverse"
    }

    fn max_order(&self) -> u32 {
        16
    }

    fn body(&self, d: u32) -> String {
        let mut s = String::from(EXP_CHAIN);
        s.push('\n');
        s.push_str(&IswMult::proc(d));
        s.push('\n');
        s.push_str(&RefreshM::proc("refresh_masks", d));
        s.push('\n');
        write!(
            s,
            "proc sec_exp254(x) -> y {{
    z <- exp2(x);
    y <- z * x;
    w <- exp4(y);
    y <- y * w;
    y <- exp16(y);
    y <- y * w;
    y <- y * z;
    shares {};
    z <- exp2(x);
    zr <- refresh_masks(z);
    y <- sec_mult(zr, x);
    w <- exp4(y);
    wr <- refresh_masks(w);
    y <- sec_mult(y, wr);
    y <- exp16(y);
    y <- sec_mult(y, w);
    y <- sec_mult(y, z);
}}
",
            d + 1
        )
        .unwrap();
        s
    }
}

/// Generators by kind name.
pub struct GadgetRegistry {
    gadgets: Vec<Box<dyn Gadget>>,
}

impl Default for GadgetRegistry {
    fn default() -> Self {
        let mut r = GadgetRegistry { gadgets: Vec::new() };
        r.register(Box::new(IswMult));
        r.register(Box::new(RefreshMasks));
        r.register(Box::new(RefreshM));
        r.register(Box::new(AesSboxInverse));
        r
    }
}

impl GadgetRegistry {
    pub fn register(&mut self, g: Box<dyn Gadget>) {
        self.gadgets.push(g);
    }

    pub fn kinds(&self) -> Vec<&'static str> {
        self.gadgets.iter().map(|g| g.kind()).collect()
    }

    pub fn get(&self, kind: &str) -> Option<&dyn Gadget> {
        self.gadgets.iter().find(|g| g.kind() == kind).map(|g| &**g)
    }

    /// Complete MSL source with a field directive.
    pub fn generate(&self, kind: &str, d: u32, field: &FieldCtx) -> Result<String, GadgetError> {
        let g = self
            .get(kind)
            .ok_or_else(|| GadgetError::UnknownKind(kind.to_string(), self.kinds().join(", ")))?;
        if d > g.max_order() {
            return Err(GadgetError::OrderOutOfRange { kind: kind.to_string(), d, max: g.max_order() });
        }
        Ok(format!("// {kind}, order {d}\n{}\n{}", header(field), g.body(d)))
    }
}
