//! Test support: deterministic noise sources, a random program generator,
//! and a dataflow oracle that is independent of the typechecker.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rust_decimal::Decimal;

use crate::lang::{Expr, RExpr};
use crate::mech::NoiseSource;

/// Adds no noise.
#[derive(Default)]
pub struct ZeroNoise;

impl NoiseSource for ZeroNoise {
    fn laplace(&mut self, _: f64) -> f64 {
        0.0
    }
    fn gauss(&mut self, _: f64) -> f64 {
        0.0
    }
}

/// Adds no noise and counts how often it was asked for some.
#[derive(Default)]
pub struct CountingNoise {
    pub draws: usize,
}

impl NoiseSource for CountingNoise {
    fn laplace(&mut self, _: f64) -> f64 {
        self.draws += 1;
        0.0
    }
    fn gauss(&mut self, _: f64) -> f64 {
        self.draws += 1;
        0.0
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Kind {
    Matrix,
    Scalar,
    Const,
}

struct Gen {
    rng: ChaCha8Rng,
    fresh: usize,
}

const SENS: &[&str] = &["0.5", "1.0", "2.0"];
const EPS: &[&str] = &["0.1", "0.25", "0.5", "1.0"];
const DELTA: &[&str] = &["0.001", "0.000001", "0.01"];

fn dec(s: &str) -> Decimal {
    s.parse().expect("valid decimal")
}

impl Gen {
    fn pick(&mut self, options: &[&str]) -> Decimal {
        dec(options.choose(&mut self.rng).expect("non-empty"))
    }

    fn name(&mut self) -> String {
        self.fresh += 1;
        format!("v{}", self.fresh)
    }

    fn of_kind(&mut self, scope: &[(String, Kind)], kind: Kind) -> Option<String> {
        let names: Vec<&String> = scope.iter().filter(|(_, k)| *k == kind).map(|(n, _)| n).collect();
        names.choose(&mut self.rng).map(|n| (*n).clone())
    }

    /// A mechanism-free scalar expression.
    fn sens_term(&mut self, scope: &[(String, Kind)], depth: u32) -> Expr {
        match self.rng.gen_range(0..6) {
            0 | 1 => match self.of_kind(scope, Kind::Matrix) {
                Some(m) => Expr::real(Expr::rows(Expr::Var(m))),
                None => Expr::RLit(self.pick(SENS)),
            },
            2 => match self.of_kind(scope, Kind::Scalar) {
                Some(x) => Expr::Var(x),
                None => Expr::RLit(self.pick(EPS)),
            },
            3 => Expr::RLit(self.pick(EPS)),
            4 if depth > 0 => {
                let x = self.name();
                let bound = match self.of_kind(scope, Kind::Matrix) {
                    Some(m) if self.rng.gen_bool(0.7) => Expr::rows(Expr::Var(m)),
                    _ => self.sens_term(scope, depth - 1),
                };
                let mut inner = scope.to_vec();
                inner.push((x.clone(), Kind::Scalar));
                let body = self.sens_term(&inner, depth - 1);
                Expr::let_in(x, bound, body)
            }
            _ => match self.of_kind(scope, Kind::Scalar) {
                Some(x) => Expr::real(Expr::Var(x)),
                None => Expr::RLit(self.pick(SENS)),
            },
        }
    }

    fn param(&mut self, scope: &[(String, Kind)], options: &[&str]) -> RExpr {
        match self.of_kind(scope, Kind::Const) {
            Some(c) if self.rng.gen_bool(0.2) => RExpr::Var(c),
            _ => RExpr::Lit(self.pick(options)),
        }
    }

    fn mechanism(&mut self, scope: &[(String, Kind)], depth: u32) -> Expr {
        let mut names: Vec<String> = scope
            .iter()
            .filter(|(_, k)| *k != Kind::Const)
            .map(|(n, _)| n.clone())
            .collect();
        names.shuffle(&mut self.rng);
        let take = self.rng.gen_range(1..=names.len().max(1));
        let mut vars: Vec<String> = names.into_iter().take(take).collect();
        if vars.is_empty() {
            vars.push(scope[0].0.clone());
        }
        let body = Box::new(self.sens_term(scope, depth));
        let sens = self.param(scope, SENS);
        let eps = self.param(scope, EPS);
        if self.rng.gen_bool(0.5) {
            Expr::Gauss {
                sens,
                eps,
                delta: RExpr::Lit(self.pick(DELTA)),
                vars,
                body,
            }
        } else {
            Expr::Laplace {
                sens,
                eps,
                vars,
                body,
            }
        }
    }

    /// A scalar expression that may release mechanism output.
    fn priv_term(&mut self, scope: &[(String, Kind)], depth: u32) -> Expr {
        match self.rng.gen_range(0..7) {
            0..=2 => self.mechanism(scope, depth.saturating_sub(1)),
            3 if depth > 0 => {
                let x = self.name();
                let (bound, kind) = match self.rng.gen_range(0..3) {
                    0 => (Expr::RLit(self.pick(EPS)), Kind::Const),
                    1 => (self.sens_term(scope, depth - 1), Kind::Scalar),
                    _ => (self.priv_term(scope, depth - 1), Kind::Scalar),
                };
                let mut inner = scope.to_vec();
                inner.push((x.clone(), kind));
                let body = self.priv_term(&inner, depth - 1);
                Expr::let_in(x, bound, body)
            }
            4 if depth > 0 => Expr::real(self.priv_term(scope, depth - 1)),
            _ => self.sens_term(scope, depth),
        }
    }
}

/// A random query over database variable `df` of type `schema_src`.
/// Roughly a third of the generated programs typecheck.
pub fn random_query(seed: u64, schema_src: &str) -> String {
    let mut g = Gen {
        rng: ChaCha8Rng::seed_from_u64(seed),
        fresh: 0,
    };
    let scope = vec![("df".to_string(), Kind::Matrix)];
    let body = g.priv_term(&scope, 4);
    format!("plam . df : {schema_src} => {body}")
}

/// Names of the privacy-function parameters whose data can reach the
/// result without passing through a mechanism that lists the variable
/// carrying it. Purely syntactic dataflow; shares no code with the checker.
pub fn unprotected_flows(e: &Expr) -> BTreeSet<String> {
    fn flow(e: &Expr, env: &BTreeMap<String, BTreeSet<String>>) -> BTreeSet<String> {
        match e {
            Expr::Var(x) => env.get(x).cloned().unwrap_or_default(),
            Expr::RLit(_) => BTreeSet::new(),
            Expr::Rows(x) | Expr::RealOf(x) => flow(x, env),
            Expr::Let { name, bound, body } => {
                let mut inner = env.clone();
                inner.insert(name.clone(), flow(bound, env));
                flow(body, &inner)
            }
            Expr::PLam { param, body, .. } => {
                let mut inner = env.clone();
                inner.insert(param.clone(), BTreeSet::from([param.clone()]));
                flow(body, &inner)
            }
            Expr::Gauss { vars, body, .. } | Expr::Laplace { vars, body, .. } => {
                // Which in-scope variables does the body read?
                let identity = env
                    .keys()
                    .map(|k| (k.clone(), BTreeSet::from([k.clone()])))
                    .collect();
                flow(body, &identity)
                    .into_iter()
                    .filter(|z| !vars.contains(z))
                    .flat_map(|z| env.get(&z).cloned().unwrap_or_default())
                    .collect()
            }
        }
    }
    flow(e, &BTreeMap::new())
}
