//! MiniDuet concrete syntax: an ASCII rendering of the Duet fragment with
//! matrix types, discrete reals, `rows`, `real`, and the `gauss`/`laplace`
//! mechanisms.
//!
//! | typeset | ASCII    |
//! |---------|----------|
//! | pλ      | `plam`   |
//! | ℝ⁺[c]   | `R+[c]`  |
//! | ★       | `star`   |
//! | d ℝ     | `dR`     |
//! | ⇒       | `=>`     |

mod ast;
mod lexer;
mod parser;
mod render;

pub use ast::{Clip, Expr, MatrixTy, RExpr, RowCount, RowMetric, ScalarTy, Ty};
pub use lexer::RESERVED;
pub use parser::{parse, parse_type, ParseError};
pub use render::render;
