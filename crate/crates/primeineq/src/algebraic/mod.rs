//! Exact real algebraic scalars and integer lattice algebra.

pub mod field;
pub mod intmat;
pub mod linalg;
pub mod parse;
pub mod poly;

pub use field::{field_from_sqrts, field_from_sqrts_capped, FieldElement, FieldRef, Irreducibility, NumberField};
pub use intmat::{hnf, snf, IMat};
pub use linalg::{exact_rank, Mat};
pub use parse::{parse_matrix, parse_scalar, SurdExpr};
pub use poly::Rat;

#[derive(Debug, thiserror::Error)]
pub enum AlgebraError {
    #[error("{0} is not squarefree")]
    NotSquarefree(u64),
    #[error("radicand {0} given twice")]
    Duplicate(u64),
    #[error("field degree {degree} exceeds the cap {cap}")]
    DegreeOverflow { degree: usize, cap: usize },
    #[error("operands belong to different fields")]
    FieldMismatch,
    #[error("division by zero")]
    DivisionByZero,
    #[error("element is not invertible modulo the defining polynomial")]
    NotInvertible,
    #[error("no sign change of the defining polynomial on the root interval")]
    NoSignChange,
    #[error("root interval contains {0} roots, expected exactly one")]
    RootCount(usize),
    #[error("isolating interval must satisfy lo < hi")]
    BadInterval,
    #[error("bad polynomial: {0}")]
    BadPolynomial(String),
    #[error("field has no embedding of sqrt{0}")]
    MissingRadicand(u64),
    #[error("parse error at column {column}: {message}")]
    Parse { column: usize, message: String },
}

/// Operation selector for [`fe_arith`].
#[derive(Clone, Copy, Debug)]
pub enum Op {
    Add,
    Sub,
    Mul,
    Div,
}

pub fn fe_arith(a: &FieldElement, b: &FieldElement, op: Op) -> Result<FieldElement, AlgebraError> {
    match op {
        Op::Add => a.try_add(b),
        Op::Sub => a.try_sub(b),
        Op::Mul => a.try_mul(b),
        Op::Div => a.try_div(b),
    }
}

pub fn fe_sign(a: &FieldElement) -> i32 {
    a.sign()
}
