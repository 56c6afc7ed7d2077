//! Printing of expressions and types in the concrete syntax accepted by the parser.

use std::fmt;

use super::ast::{Expr, MatrixTy, RExpr, RowCount, ScalarTy, Ty};

pub fn render(e: &Expr) -> String {
    e.to_string()
}

impl fmt::Display for RExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RExpr::Lit(v) => write!(f, "R+[{v}]"),
            RExpr::Var(x) => f.write_str(x),
        }
    }
}

struct AtomOf<'a>(&'a Expr);

impl fmt::Display for AtomOf<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_atom() {
            write!(f, "{}", self.0)
        } else {
            write!(f, "({})", self.0)
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Var(x) => f.write_str(x),
            Expr::RLit(v) => write!(f, "R+[{v}]"),
            Expr::Let { name, bound, body } => {
                if matches!(**bound, Expr::Let { .. } | Expr::PLam { .. }) {
                    write!(f, "let {name} = ({bound}) in {body}")
                } else {
                    write!(f, "let {name} = {bound} in {body}")
                }
            }
            Expr::PLam {
                param,
                param_ty,
                body,
            } => write!(f, "plam . {param} : {param_ty} => {body}"),
            Expr::Gauss {
                sens,
                eps,
                delta,
                vars,
                body,
            } => write!(
                f,
                "gauss[{sens}, {eps}, {delta}] <{}> {{ {body} }}",
                vars.join(", ")
            ),
            Expr::Laplace {
                sens,
                eps,
                vars,
                body,
            } => write!(f, "laplace[{sens}, {eps}] <{}> {{ {body} }}", vars.join(", ")),
            Expr::Rows(e) => write!(f, "rows {}", AtomOf(e)),
            Expr::RealOf(e) => write!(f, "real {}", AtomOf(e)),
        }
    }
}

impl fmt::Display for ScalarTy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScalarTy::Real => "R",
            ScalarTy::DReal => "dR",
        })
    }
}

impl fmt::Display for MatrixTy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("M [L1,U | ")?;
        match self.rows {
            RowCount::Star => f.write_str("star")?,
            RowCount::Exact(n) => write!(f, "{n}")?,
        }
        f.write_str(", ")?;
        for col in &self.schema {
            write!(f, "{col}::")?;
        }
        f.write_str("[]]")
    }
}

impl fmt::Display for Ty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Ty::Real => f.write_str("R"),
            Ty::DReal => f.write_str("dR"),
            Ty::RPlus(v) => write!(f, "R+[{v}]"),
            Ty::Matrix(m) => write!(f, "{m}"),
            Ty::PrivFn { arg, cost, ret } => {
                if matches!(**arg, Ty::PrivFn { .. }) {
                    write!(f, "({arg})@{cost} => {ret}")
                } else {
                    write!(f, "{arg}@{cost} => {ret}")
                }
            }
        }
    }
}
