pub mod gadget_eval;
pub mod sexpr;
