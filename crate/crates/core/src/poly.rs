//! Constraint-only convex polyhedra with Farkas-certificate checking.
//!
//! A polyhedron is just a list of linear inequalities over exact
//! rationals. Entailment of a constraint from a polyhedron is *checked*,
//! not decided: the caller supplies nonnegative multipliers (a Farkas
//! certificate) and [`check_entailment`] verifies, in exact arithmetic
//! with no tolerance, that the combination reproduces the consequence's
//! coefficients with a bound at most the consequence's.
//!
//! [`fm_project`] is the matching oracle: Fourier-Motzkin elimination
//! instrumented to emit one certificate per output constraint. The oracle
//! is untrusted by design — callers re-check every certificate — and its
//! output may include redundant constraints; inclusion of the true
//! projection is what the certificates establish, and that is the
//! direction soundness needs.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use serde_json::{json, Map, Value};
use std::collections::BTreeMap;
use std::fmt;

/// A variable, printed `x<k>` with `k >= 1`.
#[derive(Copy, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct Var(u32);

impl Var {
    pub fn new(k: u32) -> Var {
        assert!(k >= 1, "variables are positive");
        Var(k)
    }

    pub fn key(self) -> u32 {
        self.0
    }
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "x{}", self.0)
    }
}

/// A linear inequality `sum coeffs[v] * v <= bound`. Zero coefficients are
/// never stored.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Constraint {
    coeffs: BTreeMap<Var, BigRational>,
    bound: BigRational,
}

impl Constraint {
    pub fn new(coeffs: BTreeMap<Var, BigRational>, bound: BigRational) -> Constraint {
        let coeffs = coeffs.into_iter().filter(|(_, c)| !c.is_zero()).collect();
        Constraint { coeffs, bound }
    }

    pub fn coeff(&self, v: Var) -> BigRational {
        self.coeffs.get(&v).cloned().unwrap_or_else(BigRational::zero)
    }

    pub fn coeffs(&self) -> &BTreeMap<Var, BigRational> {
        &self.coeffs
    }

    pub fn bound(&self) -> &BigRational {
        &self.bound
    }

    pub fn vars(&self) -> impl Iterator<Item = Var> + '_ {
        self.coeffs.keys().copied()
    }

    /// `self` scaled by a positive factor (same half-space).
    fn scaled(&self, k: &BigRational) -> Constraint {
        assert!(k.is_positive());
        Constraint {
            coeffs: self.coeffs.iter().map(|(&v, c)| (v, c * k)).collect(),
            bound: &self.bound * k,
        }
    }

    /// Evaluates the left-hand side at an integer point.
    fn lhs_at(&self, point: &BTreeMap<Var, BigInt>) -> BigRational {
        let mut acc = BigRational::zero();
        for (v, c) in &self.coeffs {
            if let Some(x) = point.get(v) {
                acc += c * BigRational::from_integer(x.clone());
            }
        }
        acc
    }

    pub fn satisfied_at(&self, point: &BTreeMap<Var, BigInt>) -> bool {
        self.lhs_at(point) <= self.bound
    }
}

impl fmt::Display for Constraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.coeffs.is_empty() {
            write!(f, "0 <= {}", rat_to_string(&self.bound))
        } else {
            let terms: Vec<String> = self
                .coeffs
                .iter()
                .map(|(v, c)| format!("{}*{}", rat_to_string(c), v))
                .collect();
            write!(f, "{} <= {}", terms.join(" + "), rat_to_string(&self.bound))
        }
    }
}

/// A finite set of constraints; redundancy is allowed.
#[derive(Clone, PartialEq, Eq, Debug, Default)]
pub struct Polyhedron {
    pub constraints: Vec<Constraint>,
}

impl Polyhedron {
    pub fn new(constraints: Vec<Constraint>) -> Polyhedron {
        Polyhedron { constraints }
    }

    pub fn len(&self) -> usize {
        self.constraints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.constraints.is_empty()
    }

    pub fn vars(&self) -> Vec<Var> {
        let set: std::collections::BTreeSet<Var> =
            self.constraints.iter().flat_map(|c| c.vars()).collect();
        set.into_iter().collect()
    }

    pub fn satisfied_at(&self, point: &BTreeMap<Var, BigInt>) -> bool {
        self.constraints.iter().all(|c| c.satisfied_at(point))
    }
}

/// Nonnegative multipliers, one per antecedent constraint index.
#[derive(Clone, PartialEq, Eq, Debug, Default)]
pub struct FarkasCert {
    lambdas: BTreeMap<usize, BigRational>,
}

impl FarkasCert {
    /// Builds a certificate, dropping zero multipliers. Negative
    /// multipliers are a usage error.
    pub fn new(lambdas: BTreeMap<usize, BigRational>) -> FarkasCert {
        for (i, l) in &lambdas {
            assert!(!l.is_negative(), "Farkas multiplier {} for constraint {} is negative", l, i);
        }
        let lambdas = lambdas.into_iter().filter(|(_, l)| !l.is_zero()).collect();
        FarkasCert { lambdas }
    }

    pub fn unit(i: usize) -> FarkasCert {
        FarkasCert { lambdas: BTreeMap::from([(i, BigRational::one())]) }
    }

    pub fn lambdas(&self) -> &BTreeMap<usize, BigRational> {
        &self.lambdas
    }

    fn scaled(&self, k: &BigRational) -> FarkasCert {
        assert!(k.is_positive());
        FarkasCert { lambdas: self.lambdas.iter().map(|(&i, l)| (i, l * k)).collect() }
    }
}

/// Errors from certificate checking: malformed certificates, not failed
/// checks (those are `false`).
#[derive(Clone, PartialEq, Eq, Debug)]
pub enum PolyError {
    BadIndex { index: usize, len: usize },
}

impl fmt::Display for PolyError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PolyError::BadIndex { index, len } => {
                write!(f, "certificate names constraint {} but the polyhedron has {}", index, len)
            }
        }
    }
}

impl std::error::Error for PolyError {}

/// Verifies that `cert` exhibits `c` as a nonnegative combination of `p`'s
/// constraints: the combined coefficients must equal `c`'s exactly and the
/// combined bound must not exceed `c`'s. `true` implies every point of `p`
/// satisfies `c`.
pub fn check_entailment(p: &Polyhedron, c: &Constraint, cert: &FarkasCert) -> Result<bool, PolyError> {
    let mut combined: BTreeMap<Var, BigRational> = BTreeMap::new();
    let mut bound = BigRational::zero();
    for (&i, lambda) in &cert.lambdas {
        let row = p
            .constraints
            .get(i)
            .ok_or(PolyError::BadIndex { index: i, len: p.len() })?;
        for (&v, coef) in &row.coeffs {
            let entry = combined.entry(v).or_insert_with(BigRational::zero);
            *entry += coef * lambda;
        }
        bound += row.bound() * lambda;
    }
    combined.retain(|_, c| !c.is_zero());
    Ok(combined == c.coeffs && bound <= c.bound)
}

/// Verifies `p` is included in `q` from one certificate per constraint of
/// `q`. An arity mismatch simply fails the check.
pub fn check_inclusion(p: &Polyhedron, q: &Polyhedron, certs: &[FarkasCert]) -> Result<bool, PolyError> {
    if certs.len() != q.len() {
        return Ok(false);
    }
    for (c, cert) in q.constraints.iter().zip(certs) {
        if !check_entailment(p, c, cert)? {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Fourier-Motzkin elimination of `v`, emitting a Farkas certificate for
/// every output constraint. Constraints without `v` pass through with unit
/// certificates; each (positive, negative) coefficient pair combines with
/// the canonical multipliers that cancel `v`, scaled so the leading
/// coefficient of the result is +-1. No redundancy elimination is
/// attempted. Callers must re-check the certificates — this function is an
/// untrusted oracle.
pub fn fm_project(p: &Polyhedron, v: Var) -> (Polyhedron, Vec<FarkasCert>) {
    let mut out = Vec::new();
    let mut certs = Vec::new();
    let mut positive = Vec::new();
    let mut negative = Vec::new();
    for (i, c) in p.constraints.iter().enumerate() {
        let a = c.coeff(v);
        if a.is_zero() {
            out.push(c.clone());
            certs.push(FarkasCert::unit(i));
        } else if a.is_positive() {
            positive.push((i, a));
        } else {
            negative.push((i, a));
        }
    }
    for &(i, ref a) in &positive {
        for &(j, ref b) in &negative {
            // lambda_i = 1/a, lambda_j = 1/(-b) cancels v exactly
            let li = a.recip();
            let lj = -b.recip();
            let ci = p.constraints[i].scaled(&li);
            let cj = p.constraints[j].scaled(&lj);
            let mut coeffs = ci.coeffs.clone();
            for (&w, c) in &cj.coeffs {
                let entry = coeffs.entry(w).or_insert_with(BigRational::zero);
                *entry += c;
            }
            coeffs.retain(|_, c| !c.is_zero());
            debug_assert!(!coeffs.contains_key(&v));
            let combined = Constraint { coeffs, bound: ci.bound + cj.bound };
            let cert = FarkasCert::new(BTreeMap::from([(i, li), (j, lj)]));
            // normalize the leading coefficient to +-1
            match combined.coeffs.values().next() {
                Some(lead) => {
                    let s = lead.abs().recip();
                    out.push(combined.scaled(&s));
                    certs.push(cert.scaled(&s));
                }
                None => {
                    // degenerate 0 <= bound row; keep it unscaled
                    out.push(combined);
                    certs.push(cert);
                }
            }
        }
    }
    (Polyhedron::new(out), certs)
}

/// Brute-force inclusion oracle: every integer point of the box
/// `[lo, hi]^n` (over the union of both variable sets) satisfying `p` also
/// satisfies `q`. Exact; intended for small boxes in tests.
pub fn grid_check(p: &Polyhedron, q: &Polyhedron, lo: i64, hi: i64) -> bool {
    let vars: Vec<Var> = {
        let mut vs = p.vars();
        vs.extend(q.vars());
        vs.sort();
        vs.dedup();
        vs
    };
    // clear denominators once per constraint so points evaluate in integers
    let rows = |poly: &Polyhedron| -> Vec<(Vec<(usize, BigInt)>, BigInt)> {
        poly.constraints
            .iter()
            .map(|c| {
                let mut lcm = BigInt::one();
                for coef in c.coeffs.values() {
                    lcm = num_integer::lcm(lcm, coef.denom().clone());
                }
                lcm = num_integer::lcm(lcm, c.bound.denom().clone());
                let scale = BigRational::from_integer(lcm);
                let terms = c
                    .coeffs
                    .iter()
                    .map(|(v, coef)| {
                        let slot = vars.binary_search(v).expect("var collected");
                        (slot, (coef * &scale).to_integer())
                    })
                    .collect();
                let bound = (&c.bound * &scale).to_integer();
                (terms, bound)
            })
            .collect()
    };
    let p_rows = rows(p);
    let q_rows = rows(q);
    let holds = |rows: &[(Vec<(usize, BigInt)>, BigInt)], point: &[i64]| {
        rows.iter().all(|(terms, bound)| {
            let mut acc = BigInt::zero();
            for (slot, coef) in terms {
                acc += coef * BigInt::from(point[*slot]);
            }
            acc <= *bound
        })
    };
    let mut point = vec![lo; vars.len()];
    loop {
        if holds(&p_rows, &point) && !holds(&q_rows, &point) {
            return false;
        }
        // advance the odometer
        let mut i = 0;
        loop {
            if i == vars.len() {
                return true;
            }
            if point[i] < hi {
                point[i] += 1;
                break;
            }
            point[i] = lo;
            i += 1;
        }
    }
}

fn rat_to_string(r: &BigRational) -> String {
    if r.denom().is_one() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

fn rat_from_str(s: &str) -> Result<BigRational, String> {
    let (num, den) = match s.split_once('/') {
        Some((n, d)) => (n, d),
        None => (s, "1"),
    };
    let n: BigInt = num.trim().parse().map_err(|_| format!("bad rational {:?}", s))?;
    let d: BigInt = den.trim().parse().map_err(|_| format!("bad rational {:?}", s))?;
    if d.is_zero() {
        return Err(format!("zero denominator in {:?}", s));
    }
    Ok(BigRational::new(n, d))
}

fn var_from_key(key: &str) -> Result<Var, String> {
    key.strip_prefix('x')
        .and_then(|d| d.parse::<u32>().ok())
        .filter(|&k| k >= 1)
        .map(Var::new)
        .ok_or_else(|| format!("bad variable {:?}", key))
}

/// `{"coeffs": {"x1": "1/2"}, "bound": "3/2"}`
pub fn constraint_to_json(c: &Constraint) -> Value {
    let mut coeffs = Map::new();
    for (v, coef) in &c.coeffs {
        coeffs.insert(v.to_string(), Value::String(rat_to_string(coef)));
    }
    json!({ "coeffs": coeffs, "bound": rat_to_string(&c.bound) })
}

pub fn constraint_from_json(v: &Value) -> Result<Constraint, String> {
    let coeffs_obj = v
        .get("coeffs")
        .and_then(Value::as_object)
        .ok_or_else(|| format!("constraint missing \"coeffs\": {}", v))?;
    let mut coeffs = BTreeMap::new();
    for (key, val) in coeffs_obj {
        let var = var_from_key(key)?;
        let s = val.as_str().ok_or_else(|| format!("rationals are \"p/q\" strings: {}", val))?;
        coeffs.insert(var, rat_from_str(s)?);
    }
    let bound = v
        .get("bound")
        .and_then(Value::as_str)
        .ok_or_else(|| format!("constraint missing \"bound\": {}", v))?;
    Ok(Constraint::new(coeffs, rat_from_str(bound)?))
}

/// A polyhedron is a JSON array of constraints.
pub fn polyhedron_to_json(p: &Polyhedron) -> Value {
    Value::Array(p.constraints.iter().map(constraint_to_json).collect())
}

pub fn polyhedron_from_json(v: &Value) -> Result<Polyhedron, String> {
    let items = v.as_array().ok_or_else(|| "a polyhedron is a JSON array".to_string())?;
    Ok(Polyhedron::new(
        items.iter().map(constraint_from_json).collect::<Result<_, _>>()?,
    ))
}

/// `{"lambdas": {"0": "1/2", "1": "1/2"}}`
pub fn cert_to_json(c: &FarkasCert) -> Value {
    let mut lambdas = Map::new();
    for (i, l) in &c.lambdas {
        lambdas.insert(i.to_string(), Value::String(rat_to_string(l)));
    }
    json!({ "lambdas": lambdas })
}

pub fn cert_from_json(v: &Value) -> Result<FarkasCert, String> {
    let obj = v
        .get("lambdas")
        .and_then(Value::as_object)
        .ok_or_else(|| format!("certificate missing \"lambdas\": {}", v))?;
    let mut lambdas = BTreeMap::new();
    for (key, val) in obj {
        let i: usize = key.parse().map_err(|_| format!("bad constraint index {:?}", key))?;
        let s = val.as_str().ok_or_else(|| format!("rationals are \"p/q\" strings: {}", val))?;
        let l = rat_from_str(s)?;
        if l.is_negative() {
            return Err(format!("negative Farkas multiplier {} for constraint {}", s, i));
        }
        lambdas.insert(i, l);
    }
    Ok(FarkasCert::new(lambdas))
}

pub fn certs_to_json(certs: &[FarkasCert]) -> Value {
    Value::Array(certs.iter().map(cert_to_json).collect())
}

pub fn certs_from_json(v: &Value) -> Result<Vec<FarkasCert>, String> {
    let items = v.as_array().ok_or_else(|| "certificates are a JSON array".to_string())?;
    items.iter().map(cert_from_json).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rat(n: i64, d: i64) -> BigRational {
        BigRational::new(BigInt::from(n), BigInt::from(d))
    }

    fn constraint(rows: &[(u32, (i64, i64))], bound: (i64, i64)) -> Constraint {
        Constraint::new(
            rows.iter().map(|&(v, (n, d))| (Var::new(v), rat(n, d))).collect(),
            rat(bound.0, bound.1),
        )
    }

    /// The running projection example: x + y <= 1 and x - y <= 2.
    fn example() -> Polyhedron {
        Polyhedron::new(vec![
            constraint(&[(1, (1, 1)), (2, (1, 1))], (1, 1)),
            constraint(&[(1, (1, 1)), (2, (-1, 1))], (2, 1)),
        ])
    }

    #[test]
    fn halves_certificate_proves_x_le_three_halves() {
        let p = example();
        let c = constraint(&[(1, (1, 1))], (3, 2));
        let cert = FarkasCert::new(BTreeMap::from([(0, rat(1, 2)), (1, rat(1, 2))]));
        assert!(check_entailment(&p, &c, &cert).unwrap());
    }

    #[test]
    fn perturbed_certificate_is_rejected() {
        let p = example();
        let c = constraint(&[(1, (1, 1))], (3, 2));
        let cert = FarkasCert::new(BTreeMap::from([(0, rat(1, 2)), (1, rat(1, 3))]));
        assert!(!check_entailment(&p, &c, &cert).unwrap());
        // and any other perturbation of the multipliers
        for (a, b) in [(1, 3), (2, 3), (1, 4)] {
            let cert = FarkasCert::new(BTreeMap::from([(0, rat(1, 2)), (1, rat(a, b))]));
            assert!(!check_entailment(&p, &c, &cert).unwrap());
        }
    }

    #[test]
    fn trivial_consequence_from_zero_multipliers() {
        let p = example();
        let c = constraint(&[], (0, 1));
        let cert = FarkasCert::new(BTreeMap::new());
        assert!(check_entailment(&p, &c, &cert).unwrap());
    }

    #[test]
    fn bad_index_is_a_usage_error() {
        let p = example();
        let c = constraint(&[], (0, 1));
        let cert = FarkasCert::new(BTreeMap::from([(7, rat(1, 1))]));
        assert_eq!(
            check_entailment(&p, &c, &cert).unwrap_err(),
            PolyError::BadIndex { index: 7, len: 2 }
        );
    }

    #[test]
    fn inclusion_with_identity_certificates() {
        let p = example();
        let certs: Vec<FarkasCert> = (0..p.len()).map(FarkasCert::unit).collect();
        assert!(check_inclusion(&p, &p, &certs).unwrap());
        // dropped certificate entry: arity contract fails the check
        assert!(!check_inclusion(&p, &p, &certs[..1]).unwrap());
    }

    #[test]
    fn projection_of_the_example_contains_x_le_three_halves() {
        let p = example();
        let (q, certs) = fm_project(&p, Var::new(2));
        assert_eq!(q.len(), 1);
        assert_eq!(q.constraints[0], constraint(&[(1, (1, 1))], (3, 2)));
        assert_eq!(
            certs[0],
            FarkasCert::new(BTreeMap::from([(0, rat(1, 2)), (1, rat(1, 2))]))
        );
        assert!(check_inclusion(&p, &q, &certs).unwrap());
        assert!(grid_check(&p, &q, -5, 5));
    }

    #[test]
    fn untouched_constraints_pass_through_verbatim() {
        let p = Polyhedron::new(vec![
            constraint(&[(1, (2, 1))], (4, 1)),
            constraint(&[(2, (1, 1))], (5, 1)),
        ]);
        let (q, certs) = fm_project(&p, Var::new(3));
        assert_eq!(q, p);
        assert_eq!(certs, vec![FarkasCert::unit(0), FarkasCert::unit(1)]);
    }

    #[test]
    fn one_sided_bounds_vanish() {
        let p = Polyhedron::new(vec![constraint(&[(2, (1, 1))], (5, 1))]);
        let (q, certs) = fm_project(&p, Var::new(2));
        assert!(q.is_empty());
        assert!(certs.is_empty());
    }

    #[test]
    fn grid_check_detects_a_tightened_bound() {
        let p = example();
        let tight = Polyhedron::new(vec![constraint(&[(1, (1, 1))], (0, 1))]);
        assert!(!grid_check(&p, &tight, -5, 5));
        assert!(grid_check(&p, &p, -5, 5));
    }

    #[test]
    fn json_round_trips() {
        let p = example();
        let v = polyhedron_to_json(&p);
        assert_eq!(polyhedron_from_json(&v).unwrap(), p);
        let cert = FarkasCert::new(BTreeMap::from([(0, rat(1, 2)), (1, rat(3, 1))]));
        let v = cert_to_json(&cert);
        assert_eq!(cert_from_json(&v).unwrap(), cert);
        // integers print bare, halves as p/q
        assert_eq!(v["lambdas"]["0"], "1/2");
        assert_eq!(v["lambdas"]["1"], "3");
        // negative multipliers are rejected at the boundary
        let bad = json!({"lambdas": {"0": "-1/2"}});
        assert!(cert_from_json(&bad).unwrap_err().contains("negative"));
    }
}
