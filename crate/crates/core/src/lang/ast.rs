use rust_decimal::Decimal;

use crate::cost::PrivCost;

/// MiniDuet expressions.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Expr {
    Var(String),
    /// Statically-known non-negative real, written `R+[c]`.
    RLit(Decimal),
    Let {
        name: String,
        bound: Box<Expr>,
        body: Box<Expr>,
    },
    /// Privacy function `plam . x : T => body`.
    PLam {
        param: String,
        param_ty: Ty,
        body: Box<Expr>,
    },
    Gauss {
        sens: RExpr,
        eps: RExpr,
        delta: RExpr,
        vars: Vec<String>,
        body: Box<Expr>,
    },
    Laplace {
        sens: RExpr,
        eps: RExpr,
        vars: Vec<String>,
        body: Box<Expr>,
    },
    Rows(Box<Expr>),
    RealOf(Box<Expr>),
}

/// A mechanism parameter: a literal or a variable bound to one.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum RExpr {
    Lit(Decimal),
    Var(String),
}

impl Expr {
    pub fn var(name: impl Into<String>) -> Expr {
        Expr::Var(name.into())
    }

    pub fn let_in(name: impl Into<String>, bound: Expr, body: Expr) -> Expr {
        Expr::Let {
            name: name.into(),
            bound: Box::new(bound),
            body: Box::new(body),
        }
    }

    pub fn plam(param: impl Into<String>, param_ty: Ty, body: Expr) -> Expr {
        Expr::PLam {
            param: param.into(),
            param_ty,
            body: Box::new(body),
        }
    }

    pub fn rows(e: Expr) -> Expr {
        Expr::Rows(Box::new(e))
    }

    pub fn real(e: Expr) -> Expr {
        Expr::RealOf(Box::new(e))
    }

    pub fn is_atom(&self) -> bool {
        matches!(self, Expr::Var(_) | Expr::RLit(_))
    }

    /// Number of `gauss`/`laplace` nodes in the tree.
    pub fn mechanism_count(&self) -> usize {
        match self {
            Expr::Var(_) | Expr::RLit(_) => 0,
            Expr::Let { bound, body, .. } => bound.mechanism_count() + body.mechanism_count(),
            Expr::PLam { body, .. } => body.mechanism_count(),
            Expr::Gauss { body, .. } | Expr::Laplace { body, .. } => 1 + body.mechanism_count(),
            Expr::Rows(e) | Expr::RealOf(e) => e.mechanism_count(),
        }
    }

    /// True if the expression contains `gauss`, `laplace`, or `plam`.
    pub fn has_privacy_construct(&self) -> bool {
        match self {
            Expr::Var(_) | Expr::RLit(_) => false,
            Expr::PLam { .. } | Expr::Gauss { .. } | Expr::Laplace { .. } => true,
            Expr::Let { bound, body, .. } => {
                bound.has_privacy_construct() || body.has_privacy_construct()
            }
            Expr::Rows(e) | Expr::RealOf(e) => e.has_privacy_construct(),
        }
    }
}

/// MiniDuet types.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Ty {
    Real,
    /// Real number under the discrete 0/1 metric.
    DReal,
    /// Statically-known non-negative real; the value is public.
    RPlus(Decimal),
    Matrix(MatrixTy),
    PrivFn {
        arg: Box<Ty>,
        cost: PrivCost,
        ret: Box<Ty>,
    },
}

impl Ty {
    pub fn is_numeric_scalar(&self) -> bool {
        matches!(self, Ty::Real | Ty::DReal | Ty::RPlus(_))
    }
}

/// Matrix type `M [L1, U | rows, schema]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MatrixTy {
    pub metric: RowMetric,
    pub clip: Clip,
    pub rows: RowCount,
    pub schema: Vec<ScalarTy>,
}

impl MatrixTy {
    /// An L1, unclipped matrix with a statically unknown number of rows.
    pub fn unbounded(schema: Vec<ScalarTy>) -> Self {
        MatrixTy {
            metric: RowMetric::L1,
            clip: Clip::Unbounded,
            rows: RowCount::Star,
            schema,
        }
    }
}

/// Neighbor metric on matrices: `L1` counts differing rows.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RowMetric {
    L1,
}

/// Value bound annotation: `U` means no known upper bound.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Clip {
    Unbounded,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RowCount {
    Star,
    Exact(u64),
}

/// Column types allowed in a matrix schema.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScalarTy {
    Real,
    DReal,
}

impl From<ScalarTy> for Ty {
    fn from(s: ScalarTy) -> Ty {
        match s {
            ScalarTy::Real => Ty::Real,
            ScalarTy::DReal => Ty::DReal,
        }
    }
}
