//! Static sensitivity analysis and privacy typechecking.
//!
//! Every expression is checked to a type plus one of two effects:
//!
//! - a *sensitivity* map (the expression contains no mechanism), bounding
//!   how far the result moves when each free variable moves by one;
//! - a *privacy* map (the expression releases mechanism output), giving
//!   the `(eps, delta)` cost charged against each free variable.
//!
//! A sensitivity result that is released directly costs infinity in every
//! variable it depends on. Mechanism outputs are post-processed for free,
//! and sequencing two private computations adds their costs per variable.

use std::collections::BTreeMap;
use std::fmt;

use rust_decimal::Decimal;
use thiserror::Error;

use crate::cost::{ExtReal, PrivCost};
use crate::lang::{Expr, RExpr, Ty};

/// Typing environment: variable name to type.
pub type TyEnv = BTreeMap<String, Ty>;

/// Per-variable sensitivity. Absent variables have sensitivity 0.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SensMap(BTreeMap<String, ExtReal>);

impl SensMap {
    pub fn new() -> Self {
        SensMap::default()
    }

    pub fn singleton(name: &str, s: ExtReal) -> Self {
        let mut m = SensMap::new();
        m.add(name, s);
        m
    }

    pub fn get(&self, name: &str) -> ExtReal {
        self.0.get(name).copied().unwrap_or(ExtReal::ZERO)
    }

    /// Adds `s` to the entry for `name`; zero entries are not stored.
    pub fn add(&mut self, name: &str, s: ExtReal) {
        if s.is_zero() {
            return;
        }
        let entry = self.0.entry(name.to_string()).or_insert(ExtReal::ZERO);
        *entry = *entry + s;
    }

    fn remove(&mut self, name: &str) -> ExtReal {
        self.0.remove(name).unwrap_or(ExtReal::ZERO)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, ExtReal)> {
        self.0.iter().map(|(k, v)| (k.as_str(), *v))
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Releasing a value directly is infinitely costly in each variable it depends on.
    pub fn into_release_cost(self) -> PrivMap {
        let mut pm = PrivMap::new();
        for (name, _) in self.0 {
            pm.add(&name, PrivCost::INFINITE);
        }
        pm
    }
}

/// Per-variable privacy cost. Absent variables cost `(0, 0)`.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PrivMap(BTreeMap<String, PrivCost>);

impl PrivMap {
    pub fn new() -> Self {
        PrivMap::default()
    }

    pub fn get(&self, name: &str) -> PrivCost {
        self.0.get(name).copied().unwrap_or(PrivCost::ZERO)
    }

    /// Sequential composition: adds `c` to the entry for `name`.
    pub fn add(&mut self, name: &str, c: PrivCost) {
        if c.is_zero() {
            return;
        }
        let entry = self.0.entry(name.to_string()).or_default();
        *entry = *entry + c;
    }

    fn remove(&mut self, name: &str) -> PrivCost {
        self.0.remove(name).unwrap_or(PrivCost::ZERO)
    }

    pub fn merge(mut self, other: PrivMap) -> PrivMap {
        for (name, c) in other.0 {
            self.add(&name, c);
        }
        self
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, PrivCost)> {
        self.0.iter().map(|(k, v)| (k.as_str(), *v))
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl fmt::Display for PrivMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (i, (name, c)) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{name}: {c}")?;
        }
        f.write_str("}")
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum TypeError {
    #[error("unbound variable `{0}`")]
    UnboundVariable(String),
    #[error("{context}: expected {expected}, found `{found}`")]
    Mismatch {
        context: &'static str,
        expected: &'static str,
        found: Ty,
    },
    #[error("mechanism {param} `{name}` is not statically known (has type `{found}`)")]
    NonStaticParam {
        param: &'static str,
        name: String,
        found: Ty,
    },
    #[error("invalid mechanism {param} {value}: {requirement}")]
    InvalidParam {
        param: &'static str,
        value: Decimal,
        requirement: &'static str,
    },
    #[error("sensitivity of mechanism body in `{var}` is {actual}, exceeding the declared bound {bound}")]
    SensitivityExceeded {
        var: String,
        actual: ExtReal,
        bound: Decimal,
    },
    #[error("mechanism body must not itself contain a mechanism or privacy function")]
    NestedMechanism,
    #[error("`{var}` is used with sensitivity {sens}; only uses of sensitivity at most 1 may feed a mechanism or consume its output")]
    ScalingUnsupported { var: String, sens: ExtReal },
    #[error("privacy function argument `{param}` has infinite privacy cost")]
    InfiniteCost { param: String },
    #[error("privacy function body has nonzero privacy cost {cost} in free variable `{var}`")]
    OpenPrivacyFunction { var: String, cost: PrivCost },
    #[error("sensitivity analysis does not apply to privacy constructs")]
    PrivacyConstruct,
}

/// Why a program is not an acceptable query.
#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum Reject {
    #[error("query must be a privacy function, found type `{0}`")]
    NotPrivFn(Ty),
    #[error("query argument type `{found}` does not match the database schema `{expected}`")]
    SchemaMismatch { expected: Ty, found: Ty },
    #[error(transparent)]
    InfiniteCost(TypeError),
    #[error(transparent)]
    NonConstantCost(TypeError),
    #[error(transparent)]
    TypeError(TypeError),
}

impl Reject {
    /// Stable machine-readable reason code.
    pub fn kind(&self) -> &'static str {
        match self {
            Reject::NotPrivFn(_) => "NotPrivFn",
            Reject::SchemaMismatch { .. } => "SchemaMismatch",
            Reject::InfiniteCost(_) => "InfiniteCost",
            Reject::NonConstantCost(_) => "NonConstantCost",
            Reject::TypeError(_) => "TypeError",
        }
    }
}

/// A validated query: a closed privacy function over the database with finite cost.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QueryCert {
    pub arg_ty: Ty,
    pub ret_ty: Ty,
    pub cost: PrivCost,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MechanismKind {
    Gauss,
    Laplace,
}

/// Statically resolved parameters of one mechanism occurrence.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MechanismSite {
    pub kind: MechanismKind,
    pub sens: Decimal,
    pub eps: Decimal,
    pub delta: Decimal,
}

#[derive(Clone, Debug)]
enum Effect {
    Sens(SensMap),
    Priv(PrivMap),
}

impl Effect {
    fn into_priv(self) -> PrivMap {
        match self {
            Effect::Sens(s) => s.into_release_cost(),
            Effect::Priv(p) => p,
        }
    }
}

#[derive(Default)]
struct Checker {
    sites: Vec<MechanismSite>,
}

/// Sensitivity of a mechanism-free expression in each of its free variables.
pub fn sensitivity_of(e: &Expr, env: &TyEnv) -> Result<SensMap, TypeError> {
    if e.has_privacy_construct() {
        return Err(TypeError::PrivacyConstruct);
    }
    match Checker::default().check(e, env)?.1 {
        Effect::Sens(s) => Ok(s),
        Effect::Priv(_) => Err(TypeError::PrivacyConstruct),
    }
}

/// Type and per-variable privacy cost of `e`.
pub fn typecheck(e: &Expr, env: &TyEnv) -> Result<(Ty, PrivMap), TypeError> {
    let (ty, eff) = Checker::default().check(e, env)?;
    Ok((ty, eff.into_priv()))
}

/// Accepts `e` iff it is a closed privacy function over `schema` returning `R`
/// with finite, statically known cost.
pub fn validate_query(e: &Expr, schema: &Ty) -> Result<QueryCert, Reject> {
    let mut checker = Checker::default();
    let (ty, _) = checker.check(e, &TyEnv::new()).map_err(|err| match err {
        TypeError::InfiniteCost { .. } => Reject::InfiniteCost(err),
        TypeError::NonStaticParam { .. } | TypeError::OpenPrivacyFunction { .. } => {
            Reject::NonConstantCost(err)
        }
        other => Reject::TypeError(other),
    })?;
    let Ty::PrivFn { arg, cost, ret } = ty else {
        return Err(Reject::NotPrivFn(ty));
    };
    if *arg != *schema {
        return Err(Reject::SchemaMismatch {
            expected: schema.clone(),
            found: *arg,
        });
    }
    if *ret != Ty::Real {
        return Err(Reject::TypeError(TypeError::Mismatch {
            context: "query result",
            expected: "R",
            found: *ret,
        }));
    }
    if !cost.is_finite() {
        return Err(Reject::InfiniteCost(TypeError::InfiniteCost {
            param: String::new(),
        }));
    }
    // The Gaussian calibration used at runtime only holds for eps <= 1.
    if let Some(site) = checker
        .sites
        .iter()
        .find(|s| s.kind == MechanismKind::Gauss && s.eps > Decimal::ONE)
    {
        return Err(Reject::TypeError(TypeError::InvalidParam {
            param: "epsilon",
            value: site.eps,
            requirement: "gauss requires epsilon <= 1 to run",
        }));
    }
    Ok(QueryCert {
        arg_ty: *arg,
        ret_ty: *ret,
        cost,
    })
}

/// Mechanism occurrences of `e` with their resolved parameters, in source order.
pub fn mechanism_sites(e: &Expr, env: &TyEnv) -> Result<Vec<MechanismSite>, TypeError> {
    let mut checker = Checker::default();
    checker.check(e, env)?;
    Ok(checker.sites)
}

fn lookup<'a>(env: &'a TyEnv, name: &str) -> Result<&'a Ty, TypeError> {
    env.get(name)
        .ok_or_else(|| TypeError::UnboundVariable(name.to_string()))
}

fn static_param(r: &RExpr, env: &TyEnv, param: &'static str) -> Result<Decimal, TypeError> {
    match r {
        RExpr::Lit(v) => Ok(*v),
        RExpr::Var(name) => match lookup(env, name)? {
            Ty::RPlus(v) => Ok(*v),
            other => Err(TypeError::NonStaticParam {
                param,
                name: name.clone(),
                found: other.clone(),
            }),
        },
    }
}

impl Checker {
    fn check(&mut self, e: &Expr, env: &TyEnv) -> Result<(Ty, Effect), TypeError> {
        match e {
            Expr::Var(x) => {
                let ty = lookup(env, x)?.clone();
                Ok((ty, Effect::Sens(SensMap::singleton(x, ExtReal::ONE))))
            }
            Expr::RLit(v) => Ok((Ty::RPlus(*v), Effect::Sens(SensMap::new()))),
            Expr::Rows(m) => {
                let (ty, eff) = self.check(m, env)?;
                if !matches!(ty, Ty::Matrix(_)) {
                    return Err(TypeError::Mismatch {
                        context: "argument of `rows`",
                        expected: "a matrix",
                        found: ty,
                    });
                }
                // Row count is 1-Lipschitz under the L1 row metric.
                Ok((Ty::DReal, eff))
            }
            Expr::RealOf(x) => {
                let (ty, eff) = self.check(x, env)?;
                if !ty.is_numeric_scalar() {
                    return Err(TypeError::Mismatch {
                        context: "argument of `real`",
                        expected: "a numeric scalar",
                        found: ty,
                    });
                }
                Ok((Ty::Real, eff))
            }
            Expr::Let { name, bound, body } => self.check_let(name, bound, body, env),
            Expr::PLam {
                param,
                param_ty,
                body,
            } => {
                let mut inner = env.clone();
                inner.insert(param.clone(), param_ty.clone());
                let (ret, eff) = self.check(body, &inner)?;
                let mut pm = eff.into_priv();
                let cost = pm.remove(param);
                if let Some((var, cost)) = pm.iter().find(|(_, c)| !c.is_zero()) {
                    return Err(TypeError::OpenPrivacyFunction {
                        var: var.to_string(),
                        cost,
                    });
                }
                if !cost.is_finite() {
                    return Err(TypeError::InfiniteCost {
                        param: param.clone(),
                    });
                }
                let ty = Ty::PrivFn {
                    arg: Box::new(param_ty.clone()),
                    cost,
                    ret: Box::new(ret),
                };
                Ok((ty, Effect::Sens(SensMap::new())))
            }
            Expr::Gauss {
                sens,
                eps,
                delta,
                vars,
                body,
            } => {
                let site = MechanismSite {
                    kind: MechanismKind::Gauss,
                    sens: static_param(sens, env, "sensitivity")?,
                    eps: static_param(eps, env, "epsilon")?,
                    delta: static_param(delta, env, "delta")?,
                };
                self.check_mechanism(site, vars, body, env)
            }
            Expr::Laplace {
                sens,
                eps,
                vars,
                body,
            } => {
                let site = MechanismSite {
                    kind: MechanismKind::Laplace,
                    sens: static_param(sens, env, "sensitivity")?,
                    eps: static_param(eps, env, "epsilon")?,
                    delta: Decimal::ZERO,
                };
                self.check_mechanism(site, vars, body, env)
            }
        }
    }

    fn check_mechanism(
        &mut self,
        site: MechanismSite,
        vars: &[String],
        body: &Expr,
        env: &TyEnv,
    ) -> Result<(Ty, Effect), TypeError> {
        if site.eps <= Decimal::ZERO {
            return Err(TypeError::InvalidParam {
                param: "epsilon",
                value: site.eps,
                requirement: "must be positive",
            });
        }
        if site.kind == MechanismKind::Gauss
            && (site.delta <= Decimal::ZERO || site.delta >= Decimal::ONE)
        {
            return Err(TypeError::InvalidParam {
                param: "delta",
                value: site.delta,
                requirement: "must lie strictly between 0 and 1",
            });
        }
        for v in vars {
            lookup(env, v)?;
        }
        let (ty, eff) = self.check(body, env)?;
        let Effect::Sens(smap) = eff else {
            return Err(TypeError::NestedMechanism);
        };
        if !ty.is_numeric_scalar() {
            return Err(TypeError::Mismatch {
                context: "mechanism body",
                expected: "a numeric scalar",
                found: ty,
            });
        }
        let bound = ExtReal::Finite(site.sens);
        for v in vars {
            let actual = smap.get(v);
            if actual > bound {
                return Err(TypeError::SensitivityExceeded {
                    var: v.clone(),
                    actual,
                    bound: site.sens,
                });
            }
        }
        let cost = PrivCost::finite(site.eps, site.delta).expect("checked non-negative");
        let mut pm = PrivMap::new();
        for v in vars {
            pm.add(v, cost);
        }
        for (z, _) in smap.iter().filter(|(z, _)| !vars.iter().any(|v| v == z)) {
            pm.add(z, PrivCost::INFINITE);
        }
        self.sites.push(site);
        Ok((Ty::Real, Effect::Priv(pm)))
    }

    fn check_let(
        &mut self,
        name: &str,
        bound: &Expr,
        body: &Expr,
        env: &TyEnv,
    ) -> Result<(Ty, Effect), TypeError> {
        let (bound_ty, bound_eff) = self.check(bound, env)?;
        let mut inner = env.clone();
        inner.insert(name.to_string(), bound_ty);
        let (ty, body_eff) = self.check(body, &inner)?;

        let eff = match (bound_eff, body_eff) {
            (Effect::Sens(s1), Effect::Sens(mut s2)) => {
                // Substitution: sensitivities compose multiplicatively through `name`.
                let through = s2.remove(name);
                for (z, s) in s1.iter() {
                    s2.add(z, through * s);
                }
                Effect::Sens(s2)
            }
            (Effect::Sens(s1), Effect::Priv(mut p2)) => {
                let through = p2.remove(name);
                if !through.is_zero() {
                    for (z, s) in s1.iter() {
                        let inherited = if !through.is_finite() || !s.is_finite() {
                            PrivCost::INFINITE
                        } else if s <= ExtReal::ONE {
                            through
                        } else {
                            return Err(TypeError::ScalingUnsupported {
                                var: z.to_string(),
                                sens: s,
                            });
                        };
                        p2.add(z, inherited);
                    }
                }
                Effect::Priv(p2)
            }
            (Effect::Priv(p1), Effect::Sens(mut s2)) => {
                // Post-processing of the mechanism output is free, but only linearly.
                let through = s2.remove(name);
                if through > ExtReal::ONE {
                    return Err(TypeError::ScalingUnsupported {
                        var: name.to_string(),
                        sens: through,
                    });
                }
                Effect::Priv(p1.merge(s2.into_release_cost()))
            }
            (Effect::Priv(p1), Effect::Priv(mut p2)) => {
                p2.remove(name);
                Effect::Priv(p1.merge(p2))
            }
        };
        Ok((ty, eff))
    }
}
