//! Finitely supported probability measures on a [`GroupSpec`].

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::sync::Arc;

use num_integer::Integer;
use num_traits::{One, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::group::{dinf, free_abelian, product_spec, tri, Element, GroupSpec};
use crate::scalar::{format_q, parse_q, q, q_to_f64, Q};

/// A probability, either exact or floating point.
#[derive(Debug, Clone, PartialEq)]
pub enum Prob {
    Exact(Q),
    Float(f64),
}

impl Prob {
    pub fn to_f64(&self) -> f64 {
        match self {
            Prob::Exact(x) => q_to_f64(x),
            Prob::Float(x) => *x,
        }
    }

    fn check_unit(&self) -> Result<()> {
        let ok = match self {
            Prob::Exact(x) => *x >= Q::zero() && *x <= Q::one(),
            Prob::Float(x) => (0.0..=1.0).contains(x),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::OutOfRange(format!("rho = {} must lie in [0, 1]", self.to_f64())))
        }
    }
}

impl From<f64> for Prob {
    fn from(x: f64) -> Self {
        Prob::Float(x)
    }
}

impl From<Q> for Prob {
    fn from(x: Q) -> Self {
        Prob::Exact(x)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Weights {
    Exact(Vec<Q>),
    Float(Vec<f64>),
}

/// Finitely supported probability measure; atoms are kept in canonical
/// `(x, v)` order and all weights are strictly positive.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteMeasure {
    spec: Arc<GroupSpec>,
    atoms: Vec<Element>,
    weights: Weights,
}

impl FiniteMeasure {
    pub fn exact(spec: Arc<GroupSpec>, atoms: Vec<(Element, Q)>) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (g, p) in atoms {
            spec.check(&g)?;
            if p < Q::zero() {
                return Err(Error::InvalidMeasure(format!("negative weight at {g}")));
            }
            if map.insert(g.clone(), p).is_some() {
                return Err(Error::InvalidMeasure(format!("duplicate atom {g}")));
            }
        }
        map.retain(|_, p| !p.is_zero());
        let total: Q = map.values().sum();
        if !total.is_one() {
            return Err(Error::InvalidMeasure(format!(
                "weights sum to {}, not 1",
                format_q(&total)
            )));
        }
        let (atoms, w) = map.into_iter().unzip();
        Ok(Self { spec, atoms, weights: Weights::Exact(w) })
    }

    pub fn float(spec: Arc<GroupSpec>, atoms: Vec<(Element, f64)>) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (g, p) in atoms {
            spec.check(&g)?;
            if p.is_nan() || p < 0.0 || !p.is_finite() {
                return Err(Error::InvalidMeasure(format!("invalid weight {p} at {g}")));
            }
            if map.insert(g.clone(), p).is_some() {
                return Err(Error::InvalidMeasure(format!("duplicate atom {g}")));
            }
        }
        map.retain(|_, p| *p > 0.0);
        let total: f64 = map.values().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidMeasure(format!("weights sum to {total}, not 1")));
        }
        let (atoms, w) = map.into_iter().unzip();
        Ok(Self { spec, atoms, weights: Weights::Float(w) })
    }

    /// Uniform measure on the given (distinct) elements.
    pub fn uniform(spec: Arc<GroupSpec>, atoms: Vec<Element>) -> Result<Self> {
        let n = atoms.len() as i64;
        if n == 0 {
            return Err(Error::InvalidMeasure("empty support".into()));
        }
        Self::exact(spec, atoms.into_iter().map(|g| (g, q(1, n))).collect())
    }

    pub fn delta(spec: Arc<GroupSpec>, g: Element) -> Result<Self> {
        Self::exact(spec, vec![(g, Q::one())])
    }

    pub fn spec(&self) -> &Arc<GroupSpec> {
        &self.spec
    }

    pub fn atoms(&self) -> &[Element] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn is_exact(&self) -> bool {
        matches!(self.weights, Weights::Exact(_))
    }

    pub fn weights(&self) -> &Weights {
        &self.weights
    }

    pub fn exact_weights(&self) -> Option<&[Q]> {
        match &self.weights {
            Weights::Exact(w) => Some(w),
            Weights::Float(_) => None,
        }
    }

    pub fn weight_f64(&self, i: usize) -> f64 {
        match &self.weights {
            Weights::Exact(w) => q_to_f64(&w[i]),
            Weights::Float(w) => w[i],
        }
    }

    pub fn weight_prob(&self, i: usize) -> Prob {
        match &self.weights {
            Weights::Exact(w) => Prob::Exact(w[i].clone()),
            Weights::Float(w) => Prob::Float(w[i]),
        }
    }

    pub fn iter_f64(&self) -> impl Iterator<Item = (&Element, f64)> + '_ {
        self.atoms.iter().enumerate().map(|(i, g)| (g, self.weight_f64(i)))
    }

    /// Mass of a single element.
    pub fn prob_of(&self, g: &Element) -> Option<Prob> {
        self.atoms.binary_search(g).ok().map(|i| self.weight_prob(i))
    }

    pub fn to_float(&self) -> Self {
        Self {
            spec: self.spec.clone(),
            atoms: self.atoms.clone(),
            weights: Weights::Float((0..self.len()).map(|i| self.weight_f64(i)).collect()),
        }
    }

    pub fn total_f64(&self) -> f64 {
        (0..self.len()).map(|i| self.weight_f64(i)).sum()
    }

    pub fn is_symmetric(&self) -> bool {
        self.atoms.iter().enumerate().all(|(i, g)| {
            let inv = self.spec.invert(g).expect("atoms are valid");
            self.prob_of(&inv) == Some(self.weight_prob(i))
        })
    }

    /// Build a measure on `spec` from `(element, prob)` pairs; the result is
    /// exact only when every weight is.
    fn from_probs(spec: Arc<GroupSpec>, atoms: Vec<(Element, Prob)>) -> Result<Self> {
        if atoms.iter().all(|(_, p)| matches!(p, Prob::Exact(_))) {
            Self::exact(
                spec,
                atoms
                    .into_iter()
                    .map(|(g, p)| match p {
                        Prob::Exact(x) => (g, x),
                        Prob::Float(_) => unreachable!(),
                    })
                    .collect(),
            )
        } else {
            let mut v: Vec<(Element, f64)> =
                atoms.into_iter().map(|(g, p)| (g, p.to_f64())).collect();
            // Renormalize away accumulated rounding.
            let total: f64 = v.iter().map(|(_, p)| p).sum();
            for (_, p) in &mut v {
                *p /= total;
            }
            Self::float(spec, v)
        }
    }

    pub fn to_json(&self) -> MeasureJson {
        MeasureJson {
            group: serde_json::to_value(self.spec.to_json()).expect("serializable"),
            atoms: self
                .atoms
                .iter()
                .enumerate()
                .map(|(i, g)| AtomJson {
                    v: g.v.clone(),
                    x: g.x,
                    p: match &self.weights {
                        Weights::Exact(w) => Value::String(format_q(&w[i])),
                        Weights::Float(w) => serde_json::json!(w[i]),
                    },
                })
                .collect(),
        }
    }

    pub fn from_json(j: MeasureJson) -> Result<Self> {
        let spec = match j.group {
            Value::String(name) => GroupSpec::builtin(&name)?,
            other => {
                let gj = serde_json::from_value(other)
                    .map_err(|e| Error::Schema(format!("field \"group\": {e}")))?;
                GroupSpec::from_json(gj)?
            }
        };
        let spec = Arc::new(spec);
        if j.atoms.is_empty() {
            return Err(Error::Schema("field \"atoms\": must be nonempty".into()));
        }
        let mut probs = Vec::with_capacity(j.atoms.len());
        for (i, a) in j.atoms.into_iter().enumerate() {
            if a.v.len() != spec.rank() {
                return Err(Error::Schema(format!(
                    "field \"atoms\"[{i}].v: expected length {}, found {}",
                    spec.rank(),
                    a.v.len()
                )));
            }
            if a.x >= spec.order() {
                return Err(Error::Schema(format!("field \"atoms\"[{i}].x: out of range")));
            }
            let p = match &a.p {
                Value::String(s) => Prob::Exact(parse_q(s).ok_or_else(|| {
                    Error::Schema(format!("field \"atoms\"[{i}].p: cannot parse \"{s}\""))
                })?),
                Value::Number(n) => Prob::Float(n.as_f64().ok_or_else(|| {
                    Error::Schema(format!("field \"atoms\"[{i}].p: not a number"))
                })?),
                _ => {
                    return Err(Error::Schema(format!(
                        "field \"atoms\"[{i}].p: expected \"num/den\" or a float"
                    )))
                }
            };
            probs.push((Element::new(a.v, a.x), p));
        }
        if probs.iter().all(|(_, p)| matches!(p, Prob::Exact(_))) {
            Self::from_probs(spec, probs)
        } else {
            Self::float(spec, probs.into_iter().map(|(g, p)| (g, p.to_f64())).collect())
        }
    }

    /// Built-in fixtures: `Dinf:lsrw`, `Dinf:srw`, `Dinf:ape`, `Tri:uniform6`,
    /// `Z:lazy`, `Z:drift`, `Dinf*Z:coupled`.
    pub fn builtin(name: &str) -> Result<Self> {
        let el = |v: &[i64], x: usize| Element::new(v.to_vec(), x);
        match name.trim() {
            "Dinf:lsrw" => {
                Self::uniform(Arc::new(dinf()), vec![el(&[0], 1), el(&[1], 1), el(&[0], 0)])
            }
            "Dinf:srw" => Self::uniform(Arc::new(dinf()), vec![el(&[0], 1), el(&[1], 1)]),
            "Dinf:ape" => {
                let g = Arc::new(dinf());
                let (s1, s2) = (el(&[0], 1), el(&[1], 1));
                let s12 = g.multiply(&s1, &s2)?;
                let s21 = g.multiply(&s2, &s1)?;
                Self::uniform(g, vec![s1, s2, s12, s21])
            }
            "Tri:uniform6" => {
                let g = Arc::new(tri());
                let gens = [el(&[0, 0], 1), el(&[1, 0], 1), el(&[1, 1], 1)];
                let mut atoms = gens.to_vec();
                for s in &gens {
                    atoms.push(g.invert(s)?);
                }
                Self::uniform(g, atoms)
            }
            "Z:lazy" => {
                Self::uniform(Arc::new(free_abelian(1)), vec![el(&[-1], 0), el(&[0], 0), el(&[1], 0)])
            }
            "Z:drift" => Self::exact(
                Arc::new(free_abelian(1)),
                vec![(el(&[1], 0), q(2, 3)), (el(&[-1], 0), q(1, 3))],
            ),
            "Dinf*Z:coupled" => {
                let spec = Arc::new(product_spec(&Arc::new(dinf()), &Arc::new(free_abelian(1))));
                let pairs = [
                    (el(&[0], 1), el(&[0], 0)),
                    (el(&[1], 1), el(&[1], 0)),
                    (el(&[0], 0), el(&[-1], 0)),
                    (el(&[0], 0), el(&[0], 0)),
                ];
                let atoms =
                    pairs.iter().map(|(a, b)| spec.embed(a, b)).collect::<Result<Vec<_>>>()?;
                Self::uniform(spec, atoms)
            }
            other => Err(Error::Schema(format!("unknown built-in measure \"{other}\""))),
        }
    }
}

/// Names accepted by [`FiniteMeasure::builtin`].
pub const BUILTIN_MEASURES: &[&str] =
    &["Dinf:lsrw", "Dinf:srw", "Dinf:ape", "Tri:uniform6", "Z:lazy", "Z:drift", "Dinf*Z:coupled"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AtomJson {
    pub v: Vec<i64>,
    pub x: usize,
    pub p: Value,
}

/// On-disk schema for a [`FiniteMeasure`]; `group` is a built-in name or an
/// inline group spec.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasureJson {
    pub group: Value,
    pub atoms: Vec<AtomJson>,
}

/// The product measure on `product_spec(a, b)`.
pub fn product_measure(mu1: &FiniteMeasure, mu2: &FiniteMeasure) -> Result<FiniteMeasure> {
    let spec = Arc::new(product_spec(mu1.spec(), mu2.spec()));
    let mut atoms = Vec::with_capacity(mu1.len() * mu2.len());
    for i in 0..mu1.len() {
        for j in 0..mu2.len() {
            let g = spec.embed(&mu1.atoms[i], &mu2.atoms[j])?;
            let p = match (mu1.weight_prob(i), mu2.weight_prob(j)) {
                (Prob::Exact(a), Prob::Exact(b)) => Prob::Exact(a * b),
                (a, b) => Prob::Float(a.to_f64() * b.to_f64()),
            };
            atoms.push((g, p));
        }
    }
    FiniteMeasure::from_probs(spec, atoms)
}

/// The coupling `rho (mu x mu) + (1 - rho) mu_diag` on `G x G`.
pub fn make_pi_rho(mu: &FiniteMeasure, rho: impl Into<Prob>) -> Result<FiniteMeasure> {
    let rho = rho.into();
    rho.check_unit()?;
    let spec = Arc::new(product_spec(mu.spec(), mu.spec()));
    let n = mu.len();
    let mut atoms = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            let g = spec.embed(&mu.atoms[i], &mu.atoms[j])?;
            let p = match (&rho, mu.weight_prob(i), mu.weight_prob(j)) {
                (Prob::Exact(r), Prob::Exact(a), Prob::Exact(b)) => {
                    let mut p = r * &a * &b;
                    if i == j {
                        p += (Q::one() - r) * &a;
                    }
                    Prob::Exact(p)
                }
                (r, a, b) => {
                    let (r, a, b) = (r.to_f64(), a.to_f64(), b.to_f64());
                    let mut p = r * a * b;
                    if i == j {
                        p += (1.0 - r) * a;
                    }
                    Prob::Float(p)
                }
            };
            atoms.push((g, p));
        }
    }
    FiniteMeasure::from_probs(spec, atoms)
}

/// Push a measure on a product spec forward to one factor (0 or 1).
pub fn marginal(mu: &FiniteMeasure, factor: usize) -> Result<FiniteMeasure> {
    let (a, b) = mu.spec().factors().ok_or(Error::NotProduct)?;
    let target = if factor == 0 { a.clone() } else { b.clone() };
    let mut acc: BTreeMap<Element, Prob> = BTreeMap::new();
    for i in 0..mu.len() {
        let (ga, gb) = mu.spec().project(&mu.atoms[i])?;
        let g = if factor == 0 { ga } else { gb };
        let p = mu.weight_prob(i);
        let entry = acc.remove(&g);
        let sum = match (entry, p) {
            (None, p) => p,
            (Some(Prob::Exact(a)), Prob::Exact(b)) => Prob::Exact(a + b),
            (Some(a), b) => Prob::Float(a.to_f64() + b.to_f64()),
        };
        acc.insert(g, sum);
    }
    FiniteMeasure::from_probs(target, acc.into_iter().collect())
}

/// Return-time structure of a walk.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PeriodReport {
    /// `None` when no return to the identity happens within the bound.
    pub period: Option<u64>,
    pub witnesses: Vec<u64>,
    pub bound: u64,
}

pub const DEFAULT_PERIOD_BOUND: u64 = 64;

/// gcd of all `n <= n_max` with `id` in the support of `mu_n`.
pub fn detect_period(mu: &FiniteMeasure, n_max: u64) -> PeriodReport {
    let n_max = n_max.max(1);
    let spec = mu.spec();
    let witnesses = if mu.prob_of(&spec.identity()).is_some() {
        vec![1]
    } else {
        return_times(spec, mu.atoms(), n_max)
    };
    let period = witnesses.iter().copied().reduce(|a, b| a.gcd(&b));
    PeriodReport { period, witnesses, bound: n_max }
}

fn return_times(spec: &Arc<GroupSpec>, support: &[Element], n_max: u64) -> Vec<u64> {
    // Product supports return exactly when both coordinates do.
    if let Some((a, b)) = spec.factors() {
        let mut left = BTreeSet::new();
        let mut right = BTreeSet::new();
        for g in support {
            let (ga, gb) = spec.project(g).expect("valid atom");
            left.insert(ga);
            right.insert(gb);
        }
        if left.len() * right.len() == support.len() {
            let left: Vec<_> = left.into_iter().collect();
            let right: Vec<_> = right.into_iter().collect();
            let ta: BTreeSet<u64> = return_times(a, &left, n_max).into_iter().collect();
            return return_times(b, &right, n_max).into_iter().filter(|n| ta.contains(n)).collect();
        }
    }
    // Largest single-step lattice displacement, to discard states that cannot
    // come back within the bound.
    let reach = (0..spec.order())
        .flat_map(|x| support.iter().map(move |s| (x, s)))
        .map(|(x, s)| spec.alpha_unchecked(x, s).iter().map(|c| c.abs()).max().unwrap_or(0))
        .max()
        .unwrap_or(0);
    let id = spec.identity();
    let mut current: HashSet<Element> = HashSet::from([id.clone()]);
    let mut out = Vec::new();
    for k in 1..=n_max {
        let budget = (n_max - k) as i64 * reach;
        let mut next = HashSet::with_capacity(current.len() * 2);
        for g in &current {
            for s in support {
                let h = spec.mul_unchecked(g, s);
                if h.v.iter().all(|c| c.abs() <= budget) {
                    next.insert(h);
                }
            }
        }
        if next.contains(&id) {
            out.push(k);
        }
        current = next;
        if current.is_empty() {
            break;
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum DiagnosticStatus {
    Pass,
    Warning,
}

/// Evidence (not proof) that the support generates the group as a semigroup.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GenerationReport {
    pub depth: usize,
    pub cosets_reached: usize,
    pub order: usize,
    pub all_cosets: bool,
    /// Lattice vectors `v != 0` at the identity coset with `-v` also reached.
    pub symmetric_lattice_vectors: usize,
    pub lattice_spans: bool,
    pub status: DiagnosticStatus,
}

pub const DEFAULT_GENERATION_DEPTH: usize = 6;

/// Breadth-first enumeration of words of length `1..=depth` in the support.
pub fn generation_diagnostics(mu: &FiniteMeasure, depth: usize) -> GenerationReport {
    let spec = mu.spec();
    let depth = depth.max(1);
    let mut reached: HashSet<Element> = HashSet::new();
    let mut frontier: HashSet<Element> = mu.atoms().iter().cloned().collect();
    reached.extend(frontier.iter().cloned());
    for _ in 1..depth {
        let mut next = HashSet::new();
        for g in &frontier {
            for s in mu.atoms() {
                let h = spec.mul_unchecked(g, s);
                if !reached.contains(&h) {
                    next.insert(h);
                }
            }
        }
        reached.extend(next.iter().cloned());
        frontier = next;
    }
    let cosets: BTreeSet<usize> = reached.iter().map(|g| g.x).collect();
    let e = spec.table().identity();
    let lattice: HashSet<&Vec<i64>> = reached.iter().filter(|g| g.x == e).map(|g| &g.v).collect();
    let symmetric: Vec<Vec<i64>> = lattice
        .iter()
        .filter(|v| v.iter().any(|&c| c != 0))
        .filter(|v| {
            let neg: Vec<i64> = v.iter().map(|c| -c).collect();
            lattice.contains(&neg)
        })
        .map(|v| (*v).clone())
        .collect();
    let lattice_spans = spans_integer_lattice(&symmetric, spec.rank());
    let all_cosets = cosets.len() == spec.order();
    GenerationReport {
        depth,
        cosets_reached: cosets.len(),
        order: spec.order(),
        all_cosets,
        symmetric_lattice_vectors: symmetric.len(),
        lattice_spans,
        status: if all_cosets && lattice_spans {
            DiagnosticStatus::Pass
        } else {
            DiagnosticStatus::Warning
        },
    }
}

/// Whether the integer span of `vectors` is all of `Z^m`, via integer row
/// reduction to echelon form.
pub fn spans_integer_lattice(vectors: &[Vec<i64>], m: usize) -> bool {
    use num_bigint::BigInt;
    let mut rows: Vec<Vec<BigInt>> =
        vectors.iter().map(|v| v.iter().map(|&c| BigInt::from(c)).collect()).collect();
    let mut pivots = Vec::new();
    let mut r = 0;
    for c in 0..m {
        // Euclid on column c among rows r.. until one nonzero remains.
        loop {
            let nz: Vec<usize> = (r..rows.len()).filter(|&i| !rows[i][c].is_zero()).collect();
            if nz.len() <= 1 {
                break;
            }
            let p = *nz.iter().min_by_key(|&&i| rows[i][c].magnitude().clone()).unwrap();
            for &i in &nz {
                if i == p {
                    continue;
                }
                let f = rows[i][c].div_floor(&rows[p][c]);
                for j in c..m {
                    let d = &f * &rows[p][j];
                    rows[i][j] -= d;
                }
            }
        }
        if let Some(p) = (r..rows.len()).find(|&i| !rows[i][c].is_zero()) {
            rows.swap(r, p);
            pivots.push(rows[r][c].clone());
            r += 1;
        }
    }
    pivots.len() == m && pivots.iter().all(|p| p.magnitude().to_u64() == Some(1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::qi;

    fn el(v: &[i64], x: usize) -> Element {
        Element::new(v.to_vec(), x)
    }

    #[test]
    fn pi_rho_endpoints_and_value() {
        let mu = FiniteMeasure::builtin("Dinf:lsrw").unwrap();
        let prod = product_measure(&mu, &mu).unwrap();
        assert_eq!(make_pi_rho(&mu, qi(1)).unwrap(), prod);
        let diag = make_pi_rho(&mu, qi(0)).unwrap();
        assert_eq!(diag.len(), 3);
        let pi = make_pi_rho(&mu, q(1, 2)).unwrap();
        let s1 = el(&[0], 1);
        let g = pi.spec().embed(&s1, &s1).unwrap();
        assert_eq!(pi.prob_of(&g), Some(Prob::Exact(q(2, 9))));
    }

    #[test]
    fn pi_rho_marginals_are_exact() {
        for name in ["Dinf:lsrw", "Tri:uniform6", "Z:drift"] {
            let mu = FiniteMeasure::builtin(name).unwrap();
            for k in 0..=4 {
                let pi = make_pi_rho(&mu, q(k, 4)).unwrap();
                assert_eq!(marginal(&pi, 0).unwrap(), mu);
                assert_eq!(marginal(&pi, 1).unwrap(), mu);
                let expected = if k == 0 { mu.len() } else { mu.len() * mu.len() };
                assert_eq!(pi.len(), expected);
            }
        }
    }

    #[test]
    fn rho_out_of_range() {
        let mu = FiniteMeasure::builtin("Z:lazy").unwrap();
        assert!(matches!(make_pi_rho(&mu, 1.5), Err(Error::OutOfRange(_))));
        assert!(matches!(make_pi_rho(&mu, q(-1, 3)), Err(Error::OutOfRange(_))));
    }

    #[test]
    fn product_measures() {
        let z = Arc::new(free_abelian(1));
        let d = FiniteMeasure::delta(z.clone(), el(&[0], 0)).unwrap();
        let dd = product_measure(&d, &d).unwrap();
        assert_eq!(dd.len(), 1);
        assert_eq!(dd.atoms()[0], dd.spec().identity());

        let u2 = FiniteMeasure::uniform(z.clone(), vec![el(&[0], 0), el(&[1], 0)]).unwrap();
        let u3 = FiniteMeasure::uniform(z, vec![el(&[0], 0), el(&[1], 0), el(&[2], 0)]).unwrap();
        let p = product_measure(&u2, &u3).unwrap();
        assert_eq!(p.len(), 6);
        assert!(p.exact_weights().unwrap().iter().all(|w| *w == q(1, 6)));
        assert_eq!(marginal(&p, 1).unwrap(), u3);
    }

    #[test]
    fn periods_of_fixtures() {
        let ape = detect_period(&FiniteMeasure::builtin("Dinf:ape").unwrap(), 64);
        assert_eq!(ape.period, Some(1));
        assert!(ape.witnesses.contains(&2) && ape.witnesses.contains(&3));
        let srw = detect_period(&FiniteMeasure::builtin("Dinf:srw").unwrap(), 64);
        assert_eq!(srw.period, Some(2));
        assert_eq!(detect_period(&FiniteMeasure::builtin("Dinf:lsrw").unwrap(), 64).period, Some(1));
        let tri = detect_period(&FiniteMeasure::builtin("Tri:uniform6").unwrap(), 16);
        assert_eq!(tri.period, Some(1));
        assert!(tri.witnesses.contains(&2) && tri.witnesses.contains(&3));
        for r in [ape, srw, tri] {
            let p = r.period.unwrap();
            assert!(r.witnesses.iter().all(|w| w % p == 0));
        }
    }

    #[test]
    fn period_unknown_without_return() {
        let z = Arc::new(free_abelian(1));
        let mu = FiniteMeasure::delta(z, el(&[1], 0)).unwrap();
        let r = detect_period(&mu, 10);
        assert_eq!(r.period, None);
        assert!(r.witnesses.is_empty());
    }

    #[test]
    fn product_period_uses_factors() {
        let srw = FiniteMeasure::builtin("Dinf:srw").unwrap();
        let pi = make_pi_rho(&srw, q(1, 3)).unwrap();
        assert_eq!(detect_period(&pi, 32).period, Some(2));
        let lsrw = FiniteMeasure::builtin("Dinf:lsrw").unwrap();
        let pi = make_pi_rho(&lsrw, q(1, 3)).unwrap();
        assert_eq!(detect_period(&pi, 32).period, Some(1));
    }

    #[test]
    fn generation_checks() {
        let r = generation_diagnostics(&FiniteMeasure::builtin("Dinf:lsrw").unwrap(), 4);
        assert!(r.all_cosets && r.lattice_spans);
        assert_eq!(r.status, DiagnosticStatus::Pass);

        let z = Arc::new(free_abelian(1));
        let up = FiniteMeasure::delta(z, el(&[1], 0)).unwrap();
        let r = generation_diagnostics(&up, 10);
        assert!(!r.lattice_spans);
        assert_eq!(r.status, DiagnosticStatus::Warning);

        let d = Arc::new(dinf());
        let r = generation_diagnostics(&FiniteMeasure::delta(d.clone(), d.identity()).unwrap(), 5);
        assert!(!r.all_cosets);

        for name in BUILTIN_MEASURES {
            let r = generation_diagnostics(&FiniteMeasure::builtin(name).unwrap(), 4);
            assert_eq!(r.status, DiagnosticStatus::Pass, "{name}");
        }
    }

    #[test]
    fn lattice_span() {
        assert!(spans_integer_lattice(&[vec![2], vec![3]], 1));
        assert!(!spans_integer_lattice(&[vec![2], vec![4]], 1));
        assert!(!spans_integer_lattice(&[vec![1, 1], vec![1, -1]], 2));
        assert!(spans_integer_lattice(&[vec![1, 1], vec![1, 0], vec![5, 7]], 2));
        assert!(!spans_integer_lattice(&[], 1));
    }

    #[test]
    fn json_round_trip() {
        for name in BUILTIN_MEASURES {
            let mu = FiniteMeasure::builtin(name).unwrap();
            let text = serde_json::to_string(&mu.to_json()).unwrap();
            let back = FiniteMeasure::from_json(serde_json::from_str(&text).unwrap()).unwrap();
            assert_eq!(back.atoms(), mu.atoms());
            assert_eq!(back.weights(), mu.weights());
        }
        let float = r#"{"group":"Z","atoms":[{"v":[1],"x":0,"p":0.25},{"v":[-1],"x":0,"p":0.75}]}"#;
        let mu = FiniteMeasure::from_json(serde_json::from_str(float).unwrap()).unwrap();
        assert!(!mu.is_exact());
        let bad = r#"{"group":"Z","atoms":[{"v":[1,2],"x":0,"p":"1"}]}"#;
        let err = FiniteMeasure::from_json(serde_json::from_str(bad).unwrap()).unwrap_err();
        assert!(err.to_string().contains("atoms"));
    }

    #[test]
    fn rejects_bad_measures() {
        let z = Arc::new(free_abelian(1));
        assert!(FiniteMeasure::exact(z.clone(), vec![(el(&[0], 0), q(1, 2))]).is_err());
        assert!(FiniteMeasure::exact(
            z.clone(),
            vec![(el(&[0], 0), q(1, 2)), (el(&[0], 0), q(1, 2))]
        )
        .is_err());
        assert!(FiniteMeasure::float(z, vec![(el(&[0], 0), -0.5), (el(&[1], 0), 1.5)]).is_err());
    }

    #[test]
    fn symmetric_fixtures() {
        assert!(FiniteMeasure::builtin("Dinf:lsrw").unwrap().is_symmetric());
        assert!(FiniteMeasure::builtin("Tri:uniform6").unwrap().is_symmetric());
        assert!(!FiniteMeasure::builtin("Z:drift").unwrap().is_symmetric());
    }
}
