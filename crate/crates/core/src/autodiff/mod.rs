//! Reverse-mode automatic differentiation over dense `f64` matrices.

mod optim;
mod tape;

pub use optim::{Adam, AdamConfig, Param};
pub use tape::{BinaryOp, Matrix, Tape, UnaryOp, Var};
