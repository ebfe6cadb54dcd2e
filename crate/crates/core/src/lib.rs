//! Equivalence checking of masked programs over GF(2^n) by term rewriting.

pub mod field;
pub mod term;
pub mod lang;
pub mod rewrite;
pub mod fuzz;
pub mod symexec;
pub mod oracle;
pub mod affine;
pub mod verify;
pub mod gadgets;
pub mod driver;
