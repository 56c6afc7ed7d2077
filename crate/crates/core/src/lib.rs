//! Core of the Duet query platform: the MiniDuet language, its privacy
//! typechecker, the noise mechanisms, and the interpreter that runs
//! certified queries.

pub mod checker;
pub mod cost;
pub mod interp;
pub mod lang;
pub mod mech;
#[cfg(feature = "testkit")]
pub mod testkit;

pub use cost::{ExtReal, PrivCost};
pub use rust_decimal::Decimal;
