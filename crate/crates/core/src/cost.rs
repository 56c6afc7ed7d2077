//! Exact privacy-cost arithmetic.
//!
//! Costs and sensitivities are non-negative decimals extended with an
//! explicit infinity. All arithmetic is exact; an overflowing result
//! saturates to infinity, which is always a sound upper bound.

use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, Mul};

use rust_decimal::Decimal;

/// A non-negative exact decimal, or infinity.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ExtReal {
    Finite(Decimal),
    Infinity,
}

impl ExtReal {
    pub const ZERO: ExtReal = ExtReal::Finite(Decimal::ZERO);
    pub const ONE: ExtReal = ExtReal::Finite(Decimal::ONE);

    /// Builds a finite value, rejecting negatives.
    pub fn finite(value: Decimal) -> Option<ExtReal> {
        (!value.is_sign_negative() || value.is_zero()).then_some(ExtReal::Finite(value))
    }

    pub fn is_finite(&self) -> bool {
        matches!(self, ExtReal::Finite(_))
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, ExtReal::Finite(v) if v.is_zero())
    }

    pub fn as_decimal(&self) -> Option<Decimal> {
        match self {
            ExtReal::Finite(v) => Some(*v),
            ExtReal::Infinity => None,
        }
    }

    pub fn max(self, rhs: ExtReal) -> ExtReal {
        if self >= rhs {
            self
        } else {
            rhs
        }
    }
}

impl Add for ExtReal {
    type Output = ExtReal;

    fn add(self, rhs: ExtReal) -> ExtReal {
        match (self, rhs) {
            (ExtReal::Finite(a), ExtReal::Finite(b)) => {
                a.checked_add(b).map_or(ExtReal::Infinity, ExtReal::Finite)
            }
            _ => ExtReal::Infinity,
        }
    }
}

/// Multiplication with the convention `0 * inf = 0`: a zero
/// sensitivity cancels any downstream dependence.
impl Mul for ExtReal {
    type Output = ExtReal;

    fn mul(self, rhs: ExtReal) -> ExtReal {
        if self.is_zero() || rhs.is_zero() {
            return ExtReal::ZERO;
        }
        match (self, rhs) {
            (ExtReal::Finite(a), ExtReal::Finite(b)) => {
                a.checked_mul(b).map_or(ExtReal::Infinity, ExtReal::Finite)
            }
            _ => ExtReal::Infinity,
        }
    }
}

impl PartialOrd for ExtReal {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for ExtReal {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (ExtReal::Finite(a), ExtReal::Finite(b)) => a.cmp(b),
            (ExtReal::Finite(_), ExtReal::Infinity) => Ordering::Less,
            (ExtReal::Infinity, ExtReal::Finite(_)) => Ordering::Greater,
            (ExtReal::Infinity, ExtReal::Infinity) => Ordering::Equal,
        }
    }
}

impl From<Decimal> for ExtReal {
    fn from(value: Decimal) -> Self {
        ExtReal::Finite(value)
    }
}

impl fmt::Display for ExtReal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExtReal::Finite(v) => write!(f, "{v}"),
            ExtReal::Infinity => f.write_str("inf"),
        }
    }
}

/// An (epsilon, delta) privacy cost.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct PrivCost {
    pub eps: ExtReal,
    pub delta: ExtReal,
}

impl PrivCost {
    pub const ZERO: PrivCost = PrivCost {
        eps: ExtReal::ZERO,
        delta: ExtReal::ZERO,
    };

    pub const INFINITE: PrivCost = PrivCost {
        eps: ExtReal::Infinity,
        delta: ExtReal::Infinity,
    };

    pub fn new(eps: ExtReal, delta: ExtReal) -> Self {
        PrivCost { eps, delta }
    }

    /// A finite cost from two decimals. Returns `None` if either is negative.
    pub fn finite(eps: Decimal, delta: Decimal) -> Option<Self> {
        Some(PrivCost {
            eps: ExtReal::finite(eps)?,
            delta: ExtReal::finite(delta)?,
        })
    }

    pub fn is_finite(&self) -> bool {
        self.eps.is_finite() && self.delta.is_finite()
    }

    pub fn is_zero(&self) -> bool {
        self.eps.is_zero() && self.delta.is_zero()
    }

    /// Componentwise `self <= other`.
    pub fn fits_within(&self, other: &PrivCost) -> bool {
        self.eps <= other.eps && self.delta <= other.delta
    }

    /// Exact componentwise subtraction. `None` if the result would be
    /// negative or either side is infinite.
    pub fn checked_sub(&self, other: &PrivCost) -> Option<PrivCost> {
        let eps = self.eps.as_decimal()?.checked_sub(other.eps.as_decimal()?)?;
        let delta = self
            .delta
            .as_decimal()?
            .checked_sub(other.delta.as_decimal()?)?;
        PrivCost::finite(eps, delta)
    }
}

impl Add for PrivCost {
    type Output = PrivCost;

    fn add(self, rhs: PrivCost) -> PrivCost {
        PrivCost {
            eps: self.eps + rhs.eps,
            delta: self.delta + rhs.delta,
        }
    }
}

impl Default for PrivCost {
    fn default() -> Self {
        PrivCost::ZERO
    }
}

impl fmt::Display for PrivCost {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "<{}, {}>", self.eps, self.delta)
    }
}
