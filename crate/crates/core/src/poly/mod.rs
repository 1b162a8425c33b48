//! Exact polynomial arithmetic over the integers.

mod laurent;
mod matrix;
mod mpoly;

pub use laurent::{Laurent, LaurentDisplay};
pub use matrix::{char_poly, minor_det, resolvent, OpDisplay, OpPoly, PolyMatrix};
pub use mpoly::{MPoly, Monomial, PolyDisplay};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PolyError {
    #[error("VariableCountMismatch: operands have {left} and {right} variables")]
    VariableCountMismatch { left: usize, right: usize },
    #[error("NonSquareMatrix: {rows}x{cols}")]
    NonSquareMatrix { rows: usize, cols: usize },
    #[error("IndexOutOfRange: row {row} / column {col} outside a {size}x{size} matrix")]
    IndexOutOfRange { row: usize, col: usize, size: usize },
}
