//! Virtually abelian groups presented as extensions `1 -> Z^m -> G -> F -> 1`.
//!
//! An element is a pair `(v, x)` with `v` in `Z^m` and `x` an index into the
//! finite quotient `F`. Multiplication is
//!
//! ```text
//! (v, x)(w, y) = (v + Ad(x) w + tau(x, y), xy)
//! ```
//!
//! where `Ad` is an integral representation of `F` and `tau` a normalized
//! 2-cocycle. Coset representatives are always `(0, x)`, so the lattice
//! coordinate of an element is its displacement.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::{qi, Q};

/// Multiplication table of a finite group on indices `0..order`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FiniteGroupTable {
    mul: Vec<Vec<usize>>,
    identity: usize,
    inverse: Vec<usize>,
}

impl FiniteGroupTable {
    pub fn new(mul: Vec<Vec<usize>>) -> Result<Self> {
        let n = mul.len();
        if n == 0 {
            return Err(Error::InvalidGroup("finite quotient must be nonempty".into()));
        }
        for (i, row) in mul.iter().enumerate() {
            if row.len() != n {
                return Err(Error::InvalidGroup(format!("mul row {i} has length {}", row.len())));
            }
            if let Some(&bad) = row.iter().find(|&&k| k >= n) {
                return Err(Error::InvalidGroup(format!("mul entry {bad} out of range")));
            }
        }
        let identity = (0..n)
            .find(|&e| (0..n).all(|a| mul[e][a] == a && mul[a][e] == a))
            .ok_or_else(|| Error::InvalidGroup("mul has no identity".into()))?;
        for a in 0..n {
            for b in 0..n {
                for c in 0..n {
                    if mul[mul[a][b]][c] != mul[a][mul[b][c]] {
                        return Err(Error::InvalidGroup(format!(
                            "mul is not associative at ({a}, {b}, {c})"
                        )));
                    }
                }
            }
        }
        let mut inverse = Vec::with_capacity(n);
        for a in 0..n {
            let inv = (0..n)
                .find(|&b| mul[a][b] == identity && mul[b][a] == identity)
                .ok_or_else(|| Error::InvalidGroup(format!("element {a} has no inverse")))?;
            inverse.push(inv);
        }
        Ok(Self { mul, identity, inverse })
    }

    pub fn trivial() -> Self {
        Self::cyclic(1)
    }

    pub fn cyclic(n: usize) -> Self {
        Self::new((0..n).map(|a| (0..n).map(|b| (a + b) % n).collect()).collect())
            .expect("cyclic table is a group")
    }

    pub fn product(a: &Self, b: &Self) -> Self {
        let nb = b.order();
        let n = a.order() * nb;
        let mul = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| a.mul(i / nb, j / nb) * nb + b.mul(i % nb, j % nb))
                    .collect()
            })
            .collect();
        Self::new(mul).expect("product of groups is a group")
    }

    pub fn order(&self) -> usize {
        self.mul.len()
    }

    pub fn identity(&self) -> usize {
        self.identity
    }

    pub fn mul(&self, a: usize, b: usize) -> usize {
        self.mul[a][b]
    }

    pub fn inv(&self, a: usize) -> usize {
        self.inverse[a]
    }

    pub fn table(&self) -> &[Vec<usize>] {
        &self.mul
    }
}

pub type IntMatrix = Matrix<i64>;

/// One invertible integer matrix `Ad(x)` per element of `F`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LatticeAction {
    m: usize,
    mats: Vec<IntMatrix>,
}

impl LatticeAction {
    pub fn new(m: usize, mats: Vec<IntMatrix>, table: &FiniteGroupTable) -> Result<Self> {
        if mats.len() != table.order() {
            return Err(Error::InvalidGroup(format!(
                "ad has {} matrices for a quotient of order {}",
                mats.len(),
                table.order()
            )));
        }
        for (x, a) in mats.iter().enumerate() {
            if a.rows() != m || a.cols() != m {
                return Err(Error::InvalidGroup(format!("ad[{x}] is not {m}x{m}")));
            }
            let det = a.map(|&v| qi(v)).determinant()?;
            if det != qi(1) && det != qi(-1) {
                return Err(Error::InvalidGroup(format!("ad[{x}] has determinant {det}, not +-1")));
            }
        }
        if mats[table.identity()] != IntMatrix::identity(m) {
            return Err(Error::InvalidGroup("ad of the identity is not I".into()));
        }
        for x in 0..table.order() {
            for y in 0..table.order() {
                if mats[x].matmul(&mats[y])? != mats[table.mul(x, y)] {
                    return Err(Error::InvalidGroup(format!(
                        "ad is not a homomorphism at ({x}, {y})"
                    )));
                }
            }
        }
        Ok(Self { m, mats })
    }

    pub fn rank(&self) -> usize {
        self.m
    }

    pub fn matrix(&self, x: usize) -> &IntMatrix {
        &self.mats[x]
    }

    pub fn apply(&self, x: usize, v: &[i64]) -> Vec<i64> {
        let a = &self.mats[x];
        (0..self.m).map(|i| a.row(i).iter().zip(v).map(|(p, q)| p * q).sum()).collect()
    }
}

/// Normalized 2-cocycle `tau: F x F -> Z^m`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FactorSet {
    tau: Vec<Vec<Vec<i64>>>,
}

impl FactorSet {
    pub fn zero(order: usize, m: usize) -> Self {
        Self { tau: vec![vec![vec![0; m]; order]; order] }
    }

    pub fn new(
        tau: Vec<Vec<Vec<i64>>>,
        table: &FiniteGroupTable,
        action: &LatticeAction,
    ) -> Result<Self> {
        let n = table.order();
        let m = action.rank();
        if tau.len() != n || tau.iter().any(|row| row.len() != n) {
            return Err(Error::InvalidGroup(format!("tau must be {n}x{n}")));
        }
        if tau.iter().flatten().any(|v| v.len() != m) {
            return Err(Error::InvalidGroup(format!("tau entries must have length {m}")));
        }
        let e = table.identity();
        for x in 0..n {
            if tau[e][x].iter().chain(&tau[x][e]).any(|&c| c != 0) {
                return Err(Error::InvalidGroup(format!("tau is not normalized at {x}")));
            }
        }
        for x in 0..n {
            for y in 0..n {
                for z in 0..n {
                    let lhs: Vec<i64> = tau[x][y]
                        .iter()
                        .zip(&tau[table.mul(x, y)][z])
                        .map(|(a, b)| a + b)
                        .collect();
                    let rhs: Vec<i64> = action
                        .apply(x, &tau[y][z])
                        .iter()
                        .zip(&tau[x][table.mul(y, z)])
                        .map(|(a, b)| a + b)
                        .collect();
                    if lhs != rhs {
                        return Err(Error::InvalidGroup(format!(
                            "tau violates the cocycle identity at ({x}, {y}, {z})"
                        )));
                    }
                }
            }
        }
        Ok(Self { tau })
    }

    pub fn get(&self, x: usize, y: usize) -> &[i64] {
        &self.tau[x][y]
    }

    pub fn is_zero(&self) -> bool {
        self.tau.iter().flatten().flatten().all(|&c| c == 0)
    }
}

/// A group element `(v, x)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Element {
    pub v: Vec<i64>,
    pub x: usize,
}

impl Element {
    pub fn new(v: Vec<i64>, x: usize) -> Self {
        Self { v, x }
    }

    /// Canonical ordering key: finite part first, then lattice part.
    pub fn key(&self) -> (usize, &[i64]) {
        (self.x, &self.v)
    }
}

impl Ord for Element {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.key().cmp(&other.key())
    }
}

impl PartialOrd for Element {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Element {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, c) in self.v.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, ";{})", self.x)
    }
}

/// Full description of the extension.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupSpec {
    name: Option<String>,
    table: FiniteGroupTable,
    action: LatticeAction,
    factor_set: FactorSet,
    factors: Option<Box<(Arc<GroupSpec>, Arc<GroupSpec>)>>,
}

impl GroupSpec {
    pub fn new(table: FiniteGroupTable, action: LatticeAction, factor_set: FactorSet) -> Self {
        Self { name: None, table, action, factor_set, factors: None }
    }

    pub fn from_parts(
        m: usize,
        mul: Vec<Vec<usize>>,
        ad: Vec<Vec<Vec<i64>>>,
        tau: Option<Vec<Vec<Vec<i64>>>>,
    ) -> Result<Self> {
        let table = FiniteGroupTable::new(mul)?;
        let mats = ad
            .into_iter()
            .map(|rows| {
                if rows.is_empty() && m == 0 {
                    Ok(IntMatrix::zeros(0, 0))
                } else {
                    IntMatrix::from_rows(rows)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let action = LatticeAction::new(m, mats, &table)?;
        let factor_set = match tau {
            Some(t) => FactorSet::new(t, &table, &action)?,
            None => FactorSet::zero(table.order(), m),
        };
        Ok(Self::new(table, action, factor_set))
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = Some(name.into());
        self
    }

    pub fn name(&self) -> Option<&str> {
        self.name.as_deref()
    }

    pub fn rank(&self) -> usize {
        self.action.rank()
    }

    pub fn order(&self) -> usize {
        self.table.order()
    }

    pub fn table(&self) -> &FiniteGroupTable {
        &self.table
    }

    pub fn action(&self) -> &LatticeAction {
        &self.action
    }

    pub fn factor_set(&self) -> &FactorSet {
        &self.factor_set
    }

    pub fn is_split(&self) -> bool {
        self.factor_set.is_zero()
    }

    pub fn factors(&self) -> Option<(&Arc<GroupSpec>, &Arc<GroupSpec>)> {
        self.factors.as_deref().map(|(a, b)| (a, b))
    }

    pub fn identity(&self) -> Element {
        Element::new(vec![0; self.rank()], self.table.identity())
    }

    pub fn lattice(&self, v: Vec<i64>) -> Element {
        Element::new(v, self.table.identity())
    }

    pub fn check(&self, g: &Element) -> Result<()> {
        if g.v.len() != self.rank() {
            return Err(Error::DimensionMismatch { expected: self.rank(), found: g.v.len() });
        }
        if g.x >= self.order() {
            return Err(Error::InvalidGroup(format!("finite index {} out of range", g.x)));
        }
        Ok(())
    }

    pub fn multiply(&self, g: &Element, h: &Element) -> Result<Element> {
        self.check(g)?;
        self.check(h)?;
        Ok(self.mul_unchecked(g, h))
    }

    pub(crate) fn mul_unchecked(&self, g: &Element, h: &Element) -> Element {
        let shift = self.alpha_unchecked(g.x, h);
        Element::new(
            g.v.iter().zip(&shift).map(|(a, b)| a + b).collect(),
            self.table.mul(g.x, h.x),
        )
    }

    pub fn invert(&self, g: &Element) -> Result<Element> {
        self.check(g)?;
        let xi = self.table.inv(g.x);
        let t = self.factor_set.get(g.x, xi);
        let sum: Vec<i64> = g.v.iter().zip(t).map(|(a, b)| a + b).collect();
        let w = self.action.apply(xi, &sum).into_iter().map(|c| -c).collect();
        Ok(Element::new(w, xi))
    }

    /// The cocycle `alpha(x, g)` with `x g = alpha(x, g) x^g`; returns
    /// `(alpha, x^g)`.
    pub fn cocycle_alpha(&self, x: usize, g: &Element) -> Result<(Vec<i64>, usize)> {
        self.check(g)?;
        if x >= self.order() {
            return Err(Error::InvalidGroup(format!("finite index {x} out of range")));
        }
        Ok((self.alpha_unchecked(x, g), self.table.mul(x, g.x)))
    }

    pub(crate) fn alpha_unchecked(&self, x: usize, g: &Element) -> Vec<i64> {
        let mut a = self.action.apply(x, &g.v);
        for (c, t) in a.iter_mut().zip(self.factor_set.get(x, g.x)) {
            *c += t;
        }
        a
    }

    /// Transfer homomorphism to `Z^m`: the sum of `alpha(x, g)` over all cosets.
    pub fn transfer(&self, g: &Element) -> Result<Vec<i64>> {
        self.check(g)?;
        let mut total = vec![0; self.rank()];
        for x in 0..self.order() {
            for (t, a) in total.iter_mut().zip(self.alpha_unchecked(x, g)) {
                *t += a;
            }
        }
        Ok(total)
    }

    /// Averaging operator `(1/#F) sum_f Ad(f)`: the projection onto the span
    /// of the transfer image.
    pub fn normalized_transfer(&self) -> Matrix<Q> {
        let m = self.rank();
        let n = self.order() as i64;
        Matrix::from_fn(m, m, |i, j| {
            let s: i64 = (0..self.order()).map(|x| *self.action.matrix(x).get(i, j)).sum();
            Q::new(s.into(), n.into())
        })
    }

    /// The `F`-invariant form `B = sum_f Ad(f)^T Ad(f)`.
    pub fn invariant_form(&self) -> Matrix<Q> {
        let m = self.rank();
        let mut b = IntMatrix::zeros(m, m);
        for x in 0..self.order() {
            let a = self.action.matrix(x);
            b = b.add(&a.transpose().matmul(a).expect("square")).expect("same shape");
        }
        b.map(|&v| qi(v))
    }

    /// Reported as "admits a nonzero homomorphism onto Z": the transfer
    /// projector has nonzero image.
    pub fn has_hom_onto_z(&self) -> bool {
        !self.normalized_transfer().is_zero()
    }

    pub fn to_json(&self) -> GroupSpecJson {
        let n = self.order();
        GroupSpecJson {
            m: self.rank(),
            f_order: n,
            mul: self.table.table().to_vec(),
            ad: (0..n).map(|x| self.action.matrix(x).to_rows()).collect(),
            tau: if self.is_split() {
                None
            } else {
                Some(
                    (0..n)
                        .map(|x| (0..n).map(|y| self.factor_set.get(x, y).to_vec()).collect())
                        .collect(),
                )
            },
        }
    }

    pub fn from_json(j: GroupSpecJson) -> Result<Self> {
        if j.mul.len() != j.f_order {
            return Err(Error::Schema(format!(
                "field \"mul\": expected {} rows (f_order), found {}",
                j.f_order,
                j.mul.len()
            )));
        }
        if j.ad.len() != j.f_order {
            return Err(Error::Schema(format!(
                "field \"ad\": expected {} matrices (f_order), found {}",
                j.f_order,
                j.ad.len()
            )));
        }
        for (x, a) in j.ad.iter().enumerate() {
            if a.len() != j.m || a.iter().any(|r| r.len() != j.m) {
                return Err(Error::Schema(format!("field \"ad\"[{x}]: expected {0}x{0}", j.m)));
            }
        }
        Self::from_parts(j.m, j.mul, j.ad, j.tau)
    }

    /// Parse a built-in name: `Z`, `Z^<m>`, `Dinf`, `Tri`, or a product `A*B`.
    pub fn builtin(name: &str) -> Result<Self> {
        let name = name.trim();
        if let Some((a, b)) = name.split_once('*') {
            let a = Arc::new(Self::builtin(a)?);
            let b = Arc::new(Self::builtin(b)?);
            return Ok(product_spec(&a, &b));
        }
        match name {
            "Z" => Ok(free_abelian(1)),
            "Dinf" => Ok(dinf()),
            "Tri" => Ok(tri()),
            _ => {
                if let Some(m) = name.strip_prefix("Z^").and_then(|s| s.parse::<usize>().ok()) {
                    Ok(free_abelian(m))
                } else {
                    Err(Error::Schema(format!("unknown built-in group \"{name}\"")))
                }
            }
        }
    }
}

/// On-disk schema for a [`GroupSpec`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupSpecJson {
    pub m: usize,
    pub f_order: usize,
    pub mul: Vec<Vec<usize>>,
    pub ad: Vec<Vec<Vec<i64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<Vec<Vec<Vec<i64>>>>,
}

/// `Z^m` with trivial quotient.
pub fn free_abelian(m: usize) -> GroupSpec {
    let table = FiniteGroupTable::trivial();
    let action = LatticeAction::new(m, vec![IntMatrix::identity(m)], &table).expect("valid");
    let name = if m == 1 { "Z".to_string() } else { format!("Z^{m}") };
    GroupSpec::new(table, action, FactorSet::zero(1, m)).with_name(name)
}

/// The infinite dihedral group `Z x| Z/2`, with `Ad(r) = -1`.
pub fn dinf() -> GroupSpec {
    let table = FiniteGroupTable::cyclic(2);
    let mats = vec![IntMatrix::identity(1), IntMatrix::from_rows(vec![vec![-1]]).unwrap()];
    let action = LatticeAction::new(1, mats, &table).expect("valid");
    GroupSpec::new(table, action, FactorSet::zero(2, 1)).with_name("Dinf")
}

/// The triangle group `Z^2 x| Z/3`, rotation `R = [[0,-1],[1,-1]]`.
pub fn tri() -> GroupSpec {
    let table = FiniteGroupTable::cyclic(3);
    let r = IntMatrix::from_rows(vec![vec![0, -1], vec![1, -1]]).unwrap();
    let r2 = r.matmul(&r).unwrap();
    let action = LatticeAction::new(2, vec![IntMatrix::identity(2), r, r2], &table).expect("valid");
    GroupSpec::new(table, action, FactorSet::zero(3, 2)).with_name("Tri")
}

/// Direct product; finite index `xa * #F_b + xb`, lattice `(va, vb)`.
pub fn product_spec(a: &Arc<GroupSpec>, b: &Arc<GroupSpec>) -> GroupSpec {
    let table = FiniteGroupTable::product(&a.table, &b.table);
    let (ma, mb) = (a.rank(), b.rank());
    let nb = b.order();
    let mats = (0..table.order())
        .map(|x| IntMatrix::block_diag(a.action.matrix(x / nb), b.action.matrix(x % nb)))
        .collect();
    let action = LatticeAction::new(ma + mb, mats, &table).expect("block action is valid");
    let n = table.order();
    let tau = (0..n)
        .map(|x| {
            (0..n)
                .map(|y| {
                    let mut t = a.factor_set.get(x / nb, y / nb).to_vec();
                    t.extend_from_slice(b.factor_set.get(x % nb, y % nb));
                    t
                })
                .collect()
        })
        .collect();
    let factor_set = FactorSet { tau };
    let name = match (a.name(), b.name()) {
        (Some(x), Some(y)) => Some(format!("{x}*{y}")),
        _ => None,
    };
    GroupSpec {
        name,
        table,
        action,
        factor_set,
        factors: Some(Box::new((a.clone(), b.clone()))),
    }
}

impl GroupSpec {
    /// Embed a pair of factor elements into a product spec.
    pub fn embed(&self, ga: &Element, gb: &Element) -> Result<Element> {
        let (a, b) = self.factors().ok_or(Error::NotProduct)?;
        a.check(ga)?;
        b.check(gb)?;
        let mut v = ga.v.clone();
        v.extend_from_slice(&gb.v);
        Ok(Element::new(v, ga.x * b.order() + gb.x))
    }

    /// Split an element of a product spec into its two components.
    pub fn project(&self, g: &Element) -> Result<(Element, Element)> {
        let (a, b) = self.factors().ok_or(Error::NotProduct)?;
        self.check(g)?;
        let ma = a.rank();
        Ok((
            Element::new(g.v[..ma].to_vec(), g.x / b.order()),
            Element::new(g.v[ma..].to_vec(), g.x % b.order()),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::q;

    fn el(v: &[i64], x: usize) -> Element {
        Element::new(v.to_vec(), x)
    }

    /// Elements with small coordinates covering every coset.
    fn sample(spec: &GroupSpec) -> Vec<Element> {
        let m = spec.rank();
        let mut vs: Vec<Vec<i64>> = vec![vec![]];
        for _ in 0..m {
            vs = vs
                .into_iter()
                .flat_map(|v| {
                    (-1..=1).map(move |c| {
                        let mut w = v.clone();
                        w.push(c);
                        w
                    })
                })
                .collect();
        }
        (0..spec.order()).flat_map(|x| vs.iter().map(move |v| el(v, x))).collect()
    }

    fn all_builtins() -> Vec<GroupSpec> {
        let z = Arc::new(free_abelian(1));
        let d = Arc::new(dinf());
        vec![
            free_abelian(1),
            free_abelian(2),
            dinf(),
            tri(),
            product_spec(&d, &z),
            product_spec(&d, &d),
        ]
    }

    #[test]
    fn dinf_products() {
        let g = dinf();
        let s1 = el(&[0], 1);
        let s2 = el(&[1], 1);
        assert_eq!(g.multiply(&s1, &s2).unwrap(), el(&[-1], 0));
        assert_eq!(g.invert(&s1).unwrap(), s1);
        assert_eq!(g.multiply(&s2, &s2).unwrap(), g.identity());
    }

    #[test]
    fn tri_products_and_inverse() {
        let g = tri();
        let s1 = el(&[0, 0], 1);
        let s2 = el(&[1, 0], 1);
        let s12 = g.multiply(&s1, &s2).unwrap();
        assert_eq!(s12, el(&[0, 1], 2));
        assert_eq!(g.invert(&s12).unwrap(), el(&[1, 1], 1));
        // s3 = (s1 s2)^-1 has order three.
        let s3 = el(&[1, 1], 1);
        let cube = g.multiply(&g.multiply(&s3, &s3).unwrap(), &s3).unwrap();
        assert_eq!(cube, g.identity());
    }

    #[test]
    fn identity_is_neutral() {
        for g in all_builtins() {
            for a in sample(&g) {
                assert_eq!(g.multiply(&a, &g.identity()).unwrap(), a);
                assert_eq!(g.multiply(&g.identity(), &a).unwrap(), a);
            }
        }
    }

    #[test]
    fn group_axioms_on_samples() {
        for g in all_builtins() {
            let s = sample(&g);
            for a in &s {
                let ai = g.invert(a).unwrap();
                assert_eq!(g.multiply(a, &ai).unwrap(), g.identity());
                assert_eq!(g.multiply(&ai, a).unwrap(), g.identity());
                for b in s.iter().step_by(3) {
                    let ab = g.multiply(a, b).unwrap();
                    for c in s.iter().step_by(5) {
                        assert_eq!(
                            g.multiply(&ab, c).unwrap(),
                            g.multiply(a, &g.multiply(b, c).unwrap()).unwrap()
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn cocycle_identity_and_transfer_homomorphism() {
        for g in all_builtins() {
            let s = sample(&g);
            for a in &s {
                for b in s.iter().step_by(2) {
                    let ab = g.multiply(a, b).unwrap();
                    for x in 0..g.order() {
                        let (lhs, _) = g.cocycle_alpha(x, &ab).unwrap();
                        let (a1, xa) = g.cocycle_alpha(x, a).unwrap();
                        let (a2, _) = g.cocycle_alpha(xa, b).unwrap();
                        let rhs: Vec<i64> = a1.iter().zip(&a2).map(|(p, q)| p + q).collect();
                        assert_eq!(lhs, rhs);
                    }
                    let t: Vec<i64> = g
                        .transfer(a)
                        .unwrap()
                        .iter()
                        .zip(g.transfer(b).unwrap())
                        .map(|(p, q)| p + q)
                        .collect();
                    assert_eq!(g.transfer(&ab).unwrap(), t);
                }
            }
        }
    }

    #[test]
    fn alpha_examples_on_dinf() {
        let g = dinf();
        let s1 = el(&[0], 1);
        let s2 = el(&[1], 1);
        assert_eq!(g.cocycle_alpha(0, &s2).unwrap(), (vec![1], 1));
        assert_eq!(g.cocycle_alpha(1, &s2).unwrap(), (vec![-1], 0));
        for x in 0..2 {
            assert_eq!(g.cocycle_alpha(x, &g.identity()).unwrap().0, vec![0]);
        }
        let s12 = g.multiply(&s1, &s2).unwrap();
        assert_eq!(g.cocycle_alpha(0, &s12).unwrap().0, vec![-1]);
    }

    #[test]
    fn transfers_of_builtins() {
        let d = dinf();
        assert_eq!(d.transfer(&el(&[1], 1)).unwrap(), vec![0]);
        assert_eq!(d.transfer(&el(&[5], 0)).unwrap(), vec![0]);
        let z = free_abelian(1);
        assert_eq!(z.transfer(&el(&[7], 0)).unwrap(), vec![7]);
        let t = tri();
        for s in [el(&[0, 0], 1), el(&[1, 0], 1), el(&[1, 1], 1)] {
            assert_eq!(t.transfer(&s).unwrap(), vec![0, 0]);
        }
    }

    #[test]
    fn normalized_transfer_examples() {
        assert_eq!(free_abelian(3).normalized_transfer(), Matrix::identity(3));
        assert!(dinf().normalized_transfer().is_zero());
        assert!(tri().normalized_transfer().is_zero());
        let dz = product_spec(&Arc::new(dinf()), &Arc::new(free_abelian(1)));
        let p = dz.normalized_transfer();
        assert_eq!(*p.get(0, 0), q(0, 1));
        assert_eq!(*p.get(1, 1), q(1, 1));
        assert!(dz.has_hom_onto_z());
        assert!(!tri().has_hom_onto_z());
    }

    #[test]
    fn projector_is_idempotent_and_self_adjoint() {
        for g in all_builtins() {
            let p = g.normalized_transfer();
            assert_eq!(p.matmul(&p).unwrap(), p);
            let b = g.invariant_form();
            // B P = P^T B
            assert_eq!(b.matmul(&p).unwrap(), p.transpose().matmul(&b).unwrap());
            // #F * projector(v) = transfer((v, id))
            for v in sample(&g).into_iter().filter(|e| e.x == g.table().identity()) {
                let t = g.transfer(&v).unwrap();
                let pv = p.apply(&v.v.iter().map(|&c| qi(c)).collect::<Vec<_>>()).unwrap();
                let scaled: Vec<Q> = pv.iter().map(|c| c * qi(g.order() as i64)).collect();
                assert_eq!(scaled, t.iter().map(|&c| qi(c)).collect::<Vec<_>>());
            }
        }
    }

    #[test]
    fn products_of_builtins() {
        let z = Arc::new(free_abelian(1));
        let zz = product_spec(&z, &z);
        assert_eq!(zz.rank(), 2);
        assert_eq!(zz.order(), 1);
        assert_eq!(zz.action().matrix(0), free_abelian(2).action().matrix(0));

        let d = Arc::new(dinf());
        let dd = product_spec(&d, &d);
        assert_eq!((dd.rank(), dd.order()), (2, 4));
        for x in 0..4 {
            let a = dd.action().matrix(x);
            assert_eq!(*a.get(0, 1), 0);
            assert_eq!(*a.get(1, 0), 0);
            assert_eq!(a.get(0, 0).abs(), 1);
            assert_eq!(a.get(1, 1).abs(), 1);
        }
        let pair = (el(&[3], 1), el(&[-2], 0));
        let g = dd.embed(&pair.0, &pair.1).unwrap();
        assert_eq!(dd.project(&g).unwrap(), pair);
    }

    #[test]
    fn rejects_malformed_specs() {
        // Non-associative table.
        let bad = vec![vec![0, 1, 2], vec![1, 0, 0], vec![2, 2, 1]];
        assert!(FiniteGroupTable::new(bad).is_err());
        // Ad not a homomorphism.
        let r = GroupSpec::from_parts(1, vec![vec![0, 1], vec![1, 0]], vec![vec![vec![1]], vec![vec![2]]], None);
        assert!(r.is_err());
        // Non-normalized tau.
        let r = GroupSpec::from_parts(
            1,
            vec![vec![0, 1], vec![1, 0]],
            vec![vec![vec![1]], vec![vec![1]]],
            Some(vec![vec![vec![1], vec![0]], vec![vec![0], vec![0]]]),
        );
        assert!(r.is_err());
        let g = dinf();
        assert_eq!(
            g.multiply(&el(&[0, 0], 0), &g.identity()),
            Err(Error::DimensionMismatch { expected: 1, found: 2 })
        );
    }

    #[test]
    fn non_split_extension_is_a_group() {
        // Z with index-2 subgroup 2Z: Z as an extension of Z/2 by Z (generator t = (0,1), t^2 = (1,0)).
        let spec = GroupSpec::from_parts(
            1,
            vec![vec![0, 1], vec![1, 0]],
            vec![vec![vec![1]], vec![vec![1]]],
            Some(vec![vec![vec![0], vec![0]], vec![vec![0], vec![1]]]),
        )
        .unwrap();
        assert!(!spec.is_split());
        let t = el(&[0], 1);
        assert_eq!(spec.multiply(&t, &t).unwrap(), el(&[1], 0));
        assert_eq!(spec.transfer(&t).unwrap(), vec![1]);
        for a in sample(&spec) {
            let ai = spec.invert(&a).unwrap();
            assert_eq!(spec.multiply(&a, &ai).unwrap(), spec.identity());
        }
    }

    #[test]
    fn json_round_trip_and_builtin_names() {
        for name in ["Z", "Z^3", "Dinf", "Tri", "Dinf*Z"] {
            let g = GroupSpec::builtin(name).unwrap();
            let back = GroupSpec::from_json(g.to_json()).unwrap();
            assert_eq!(back.to_json(), g.to_json());
        }
        assert!(GroupSpec::builtin("Foo").is_err());
    }
}
