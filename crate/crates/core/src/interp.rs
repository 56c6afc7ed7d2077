//! Call-by-value evaluation of certified MiniDuet programs.

use std::collections::BTreeMap;
use std::sync::Arc;

use rust_decimal::prelude::ToPrimitive;
use rust_decimal::Decimal;
use thiserror::Error;

use crate::lang::{Expr, MatrixTy, RExpr, RowCount, Ty};
use crate::mech::{self, NoiseSource};

/// Evaluation failures. Typechecking precedes evaluation, so any of these
/// indicates an interpreter bug or a violated precondition.
#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("unbound variable `{0}` at runtime")]
    Unbound(String),
    #[error("expected {expected}, got {found}")]
    WrongValue {
        expected: &'static str,
        found: &'static str,
    },
    #[error("database schema `{found}` does not match query argument type `{expected}`")]
    SchemaMismatch { expected: Ty, found: Ty },
    #[error("mechanism parameters out of range: {0}")]
    Domain(#[from] mech::DomainError),
    #[error("non-finite result")]
    NonFinite,
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum SchemaError {
    #[error("row has {found} fields, schema has {expected} columns")]
    Arity { expected: usize, found: usize },
    #[error("field {index} is not a finite number: `{text}`")]
    NotFinite { index: usize, text: String },
    #[error("database is declared with exactly {0} rows")]
    Full(u64),
}

/// An in-memory matrix whose rows conform to a matrix schema.
#[derive(Clone, Debug, PartialEq)]
pub struct Database {
    schema: MatrixTy,
    rows: Vec<Vec<f64>>,
}

impl Database {
    pub fn new(schema: MatrixTy) -> Self {
        Database {
            schema,
            rows: Vec::new(),
        }
    }

    pub fn schema(&self) -> &MatrixTy {
        &self.schema
    }

    pub fn schema_ty(&self) -> Ty {
        Ty::Matrix(self.schema.clone())
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn push_row(&mut self, row: Vec<f64>) -> Result<usize, SchemaError> {
        if row.len() != self.schema.schema.len() {
            return Err(SchemaError::Arity {
                expected: self.schema.schema.len(),
                found: row.len(),
            });
        }
        if let Some(index) = row.iter().position(|v| !v.is_finite()) {
            return Err(SchemaError::NotFinite {
                index,
                text: row[index].to_string(),
            });
        }
        if let RowCount::Exact(n) = self.schema.rows {
            if self.rows.len() as u64 >= n {
                return Err(SchemaError::Full(n));
            }
        }
        self.rows.push(row);
        Ok(self.rows.len())
    }

    /// Parses a row in the wire format: comma-separated decimal numbers.
    pub fn parse_row(&self, text: &str) -> Result<Vec<f64>, SchemaError> {
        let fields: Vec<&str> = text.split(',').map(str::trim).collect();
        if fields.len() != self.schema.schema.len() {
            return Err(SchemaError::Arity {
                expected: self.schema.schema.len(),
                found: fields.len(),
            });
        }
        fields
            .iter()
            .enumerate()
            .map(|(index, f)| match f.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(SchemaError::NotFinite {
                    index,
                    text: f.to_string(),
                }),
            })
            .collect()
    }
}

/// Formats a row in the wire format accepted by [`Database::parse_row`].
pub fn format_row(row: &[f64]) -> String {
    row.iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

pub type ValEnv = BTreeMap<String, Value>;

#[derive(Clone, Debug)]
pub struct Closure {
    pub param: String,
    pub param_ty: Ty,
    pub body: Expr,
    pub env: ValEnv,
}

#[derive(Clone, Debug)]
pub enum Value {
    /// A statically-known real.
    Const(Decimal),
    Num(f64),
    Mat(Arc<Database>),
    Closure(Box<Closure>),
}

impl Value {
    fn describe(&self) -> &'static str {
        match self {
            Value::Const(_) => "a constant",
            Value::Num(_) => "a number",
            Value::Mat(_) => "a matrix",
            Value::Closure(_) => "a privacy function",
        }
    }

    pub fn as_f64(&self) -> Result<f64, EvalError> {
        match self {
            Value::Const(c) => Ok(c.to_f64().expect("decimal converts to f64")),
            Value::Num(x) => Ok(*x),
            other => Err(EvalError::WrongValue {
                expected: "a number",
                found: other.describe(),
            }),
        }
    }
}

fn param(r: &RExpr, env: &ValEnv) -> Result<Decimal, EvalError> {
    match r {
        RExpr::Lit(v) => Ok(*v),
        RExpr::Var(x) => match env.get(x) {
            Some(Value::Const(v)) => Ok(*v),
            Some(other) => Err(EvalError::WrongValue {
                expected: "a constant",
                found: other.describe(),
            }),
            None => Err(EvalError::Unbound(x.clone())),
        },
    }
}

fn finite(x: f64) -> Result<Value, EvalError> {
    if x.is_finite() {
        Ok(Value::Num(x))
    } else {
        Err(EvalError::NonFinite)
    }
}

pub fn evaluate(e: &Expr, env: &ValEnv, noise: &mut dyn NoiseSource) -> Result<Value, EvalError> {
    match e {
        Expr::Var(x) => env.get(x).cloned().ok_or_else(|| EvalError::Unbound(x.clone())),
        Expr::RLit(v) => Ok(Value::Const(*v)),
        Expr::Let { name, bound, body } => {
            let v = evaluate(bound, env, noise)?;
            let mut inner = env.clone();
            inner.insert(name.clone(), v);
            evaluate(body, &inner, noise)
        }
        Expr::PLam {
            param,
            param_ty,
            body,
        } => Ok(Value::Closure(Box::new(Closure {
            param: param.clone(),
            param_ty: param_ty.clone(),
            body: (**body).clone(),
            env: env.clone(),
        }))),
        Expr::Rows(m) => match evaluate(m, env, noise)? {
            Value::Mat(db) => Ok(Value::Num(db.len() as f64)),
            other => Err(EvalError::WrongValue {
                expected: "a matrix",
                found: other.describe(),
            }),
        },
        Expr::RealOf(x) => finite(evaluate(x, env, noise)?.as_f64()?),
        Expr::Gauss {
            sens,
            eps,
            delta,
            body,
            ..
        } => {
            let sigma = mech::gauss_sigma(param(sens, env)?, param(eps, env)?, param(delta, env)?)?;
            let x = evaluate(body, env, noise)?.as_f64()?;
            finite(x + noise.gauss(sigma))
        }
        Expr::Laplace {
            sens, eps, body, ..
        } => {
            let b = mech::laplace_scale(param(sens, env)?, param(eps, env)?)?;
            let x = evaluate(body, env, noise)?.as_f64()?;
            finite(x + noise.laplace(b))
        }
    }
}

/// Applies a query closure to the database and returns the noised scalar.
pub fn apply_query(
    query: &Value,
    db: Arc<Database>,
    noise: &mut dyn NoiseSource,
) -> Result<f64, EvalError> {
    let Value::Closure(c) = query else {
        return Err(EvalError::WrongValue {
            expected: "a privacy function",
            found: query.describe(),
        });
    };
    let db_ty = db.schema_ty();
    if db_ty != c.param_ty {
        return Err(EvalError::SchemaMismatch {
            expected: c.param_ty.clone(),
            found: db_ty,
        });
    }
    let mut env = c.env.clone();
    env.insert(c.param.clone(), Value::Mat(db));
    let out = evaluate(&c.body, &env, noise)?.as_f64()?;
    if out.is_finite() {
        Ok(out)
    } else {
        Err(EvalError::NonFinite)
    }
}

/// Decimal rendering with 12 significant digits, trailing zeros removed.
pub fn format_output(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return if x.is_finite() { "0".into() } else { x.to_string() };
    }
    let sci = format!("{:.11e}", x.abs());
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("integer exponent");
    let digits: String = mantissa.chars().filter(|c| *c != '.').collect();
    let point = exp + 1;
    let mut out = if point <= 0 {
        format!("0.{}{}", "0".repeat((-point) as usize), digits)
    } else if point as usize >= digits.len() {
        format!("{}{}", digits, "0".repeat(point as usize - digits.len()))
    } else {
        let (int, frac) = digits.split_at(point as usize);
        format!("{int}.{frac}")
    };
    if out.contains('.') {
        while out.ends_with('0') {
            out.pop();
        }
        if out.ends_with('.') {
            out.pop();
        }
    }
    if x < 0.0 {
        out.insert(0, '-');
    }
    out
}
