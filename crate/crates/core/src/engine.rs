//! Evolution of walk distributions on `Z^m x F` and total-variation distances.
//!
//! Exact mode keeps a sparse map of rational masses. Float mode keeps, per
//! coset, a dense box of lattice masses; a step is a sum of shifted copies of
//! the source boxes, since right multiplication by an atom `s` moves `(v, x)`
//! to `(v + alpha(x, s), x^s)`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;
use std::sync::Arc;

use num_traits::{One, Signed, Zero};
use rayon::prelude::*;

use crate::diagram::WeightedDiagram;
use crate::error::{Error, Result};
use crate::group::{Element, GroupSpec};
use crate::measure::FiniteMeasure;
use crate::scalar::{format_q, q_to_f64, Q};
use crate::spectral::{covariance, GaussianOnGroup};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Exact,
    Float,
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(Self::Exact),
            "float" => Ok(Self::Float),
            other => Err(Error::Schema(format!("mode: expected exact or float, got {other:?}"))),
        }
    }
}

pub const DEFAULT_PRUNE: f64 = 1e-16;
pub const DEFAULT_BUDGET_MIB: u64 = 2048;
pub const EXACT_MAX_STEPS: u64 = 64;

const MIB: u64 = 1 << 20;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EngineConfig {
    /// Float-mode entries below this are dropped into `lost_mass`.
    pub prune: f64,
    pub budget_bytes: u64,
    pub exact_max_steps: u64,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self { prune: DEFAULT_PRUNE, budget_bytes: DEFAULT_BUDGET_MIB * MIB, exact_max_steps: EXACT_MAX_STEPS }
    }
}

impl EngineConfig {
    pub fn with_prune(mut self, prune: f64) -> Self {
        self.prune = prune;
        self
    }

    pub fn with_budget_mib(mut self, mib: u64) -> Self {
        self.budget_bytes = mib * MIB;
        self
    }
}

/// A total-variation distance with an error bar; the true value lies in
/// `[value - error, value + error]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tv {
    pub value: f64,
    pub error: f64,
    /// Present when both sides were exact.
    pub exact: Option<Q>,
}

/// Masses on the integer box `lo .. lo + shape`, row-major.
#[derive(Debug, Clone, PartialEq)]
struct CosetBox {
    lo: Vec<i64>,
    shape: Vec<usize>,
    data: Vec<f64>,
}

/// Calls `f(offset_a, offset_b, len)` for every last-axis row of a region of
/// shape `rshape` laid out in two arrays with the given strides and bases.
fn region_rows(
    rshape: &[usize],
    sa: &[usize],
    base_a: usize,
    sb: &[usize],
    base_b: usize,
    mut f: impl FnMut(usize, usize, usize),
) {
    let m = rshape.len();
    if m == 0 {
        f(base_a, base_b, 1);
        return;
    }
    if rshape.contains(&0) {
        return;
    }
    let row = rshape[m - 1];
    let mut idx = vec![0usize; m - 1];
    let (mut oa, mut ob) = (base_a, base_b);
    loop {
        f(oa, ob, row);
        let mut k = m - 1;
        loop {
            if k == 0 {
                return;
            }
            k -= 1;
            idx[k] += 1;
            oa += sa[k];
            ob += sb[k];
            if idx[k] < rshape[k] {
                break;
            }
            oa -= sa[k] * rshape[k];
            ob -= sb[k] * rshape[k];
            idx[k] = 0;
        }
    }
}

fn strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1usize; shape.len()];
    for k in (0..shape.len().saturating_sub(1)).rev() {
        s[k] = s[k + 1] * shape[k + 1];
    }
    s
}

impl CosetBox {
    fn empty(m: usize) -> Self {
        Self { lo: vec![0; m], shape: vec![0; m], data: Vec::new() }
    }

    /// Zero box covering `lo..=hi`.
    fn zeros(lo: Vec<i64>, hi: &[i64]) -> Self {
        let shape: Vec<usize> = lo.iter().zip(hi).map(|(a, b)| (b - a + 1) as usize).collect();
        let len = shape.iter().product();
        Self { lo, shape, data: vec![0.0; len] }
    }

    fn point(v: &[i64], mass: f64) -> Self {
        let mut b = Self::zeros(v.to_vec(), v);
        b.data[0] = mass;
        b
    }

    fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    fn hi(&self) -> Vec<i64> {
        self.lo.iter().zip(&self.shape).map(|(l, s)| l + *s as i64 - 1).collect()
    }

    fn index(&self, v: &[i64]) -> Option<usize> {
        if self.is_empty() {
            return None;
        }
        let mut k = 0usize;
        for i in 0..self.lo.len() {
            let d = v[i] - self.lo[i];
            if d < 0 || d as usize >= self.shape[i] {
                return None;
            }
            k = k * self.shape[i] + d as usize;
        }
        Some(k)
    }

    fn get(&self, v: &[i64]) -> f64 {
        self.index(v).map_or(0.0, |k| self.data[k])
    }

    /// `self[v + shift] += w * src[v]`; `self` must cover the shifted box.
    fn add_shifted(&mut self, src: &CosetBox, shift: &[i64], w: f64) {
        if src.is_empty() {
            return;
        }
        let st = strides(&self.shape);
        let ss = strides(&src.shape);
        let base: usize = (0..shift.len())
            .map(|i| (src.lo[i] + shift[i] - self.lo[i]) as usize * st[i])
            .sum();
        let data = &mut self.data;
        region_rows(&src.shape, &ss, 0, &st, base, |a, b, len| {
            for (t, s) in data[b..b + len].iter_mut().zip(&src.data[a..a + len]) {
                *t += w * s;
            }
        });
    }

    /// Zero out entries below `threshold`, crop to the remaining support and
    /// return the dropped mass.
    fn prune(&mut self, threshold: f64) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        let m = self.lo.len();
        let mut lost = 0.0;
        let mut lo_idx = vec![usize::MAX; m];
        let mut hi_idx = vec![0usize; m];
        let mut idx = vec![0usize; m];
        let mut any = false;
        for k in 0..self.data.len() {
            let p = self.data[k];
            if p < threshold {
                lost += p;
                self.data[k] = 0.0;
            } else {
                any = true;
                for i in 0..m {
                    lo_idx[i] = lo_idx[i].min(idx[i]);
                    hi_idx[i] = hi_idx[i].max(idx[i]);
                }
            }
            let mut j = m;
            while j > 0 {
                j -= 1;
                idx[j] += 1;
                if idx[j] < self.shape[j] {
                    break;
                }
                idx[j] = 0;
            }
        }
        if !any {
            *self = Self::empty(m);
            return lost;
        }
        let full = (0..m).all(|i| lo_idx[i] == 0 && hi_idx[i] + 1 == self.shape[i]);
        if !full {
            let new_lo: Vec<i64> = (0..m).map(|i| self.lo[i] + lo_idx[i] as i64).collect();
            let new_hi: Vec<i64> = (0..m).map(|i| self.lo[i] + hi_idx[i] as i64).collect();
            let mut out = Self::zeros(new_lo, &new_hi);
            let so = strides(&self.shape);
            let sn = strides(&out.shape);
            let base: usize = (0..m).map(|i| lo_idx[i] * so[i]).sum();
            let src = &self.data;
            let dst = &mut out.data;
            region_rows(&out.shape.clone(), &so, base, &sn, 0, |a, b, len| {
                dst[b..b + len].copy_from_slice(&src[a..a + len]);
            });
            *self = out;
        }
        lost
    }

    fn visit(&self, mut f: impl FnMut(&[i64], f64)) {
        if self.is_empty() {
            return;
        }
        let m = self.lo.len();
        let mut v = self.lo.clone();
        for &p in &self.data {
            f(&v, p);
            let mut k = m;
            while k > 0 {
                k -= 1;
                v[k] += 1;
                if v[k] < self.lo[k] + self.shape[k] as i64 {
                    break;
                }
                v[k] = self.lo[k];
            }
        }
    }

    fn bytes(&self) -> u64 {
        (self.data.len() * std::mem::size_of::<f64>()) as u64
    }
}

/// Smallest box containing all given (lo, hi) pairs.
fn union_bounds(parts: impl Iterator<Item = (Vec<i64>, Vec<i64>)>) -> Option<(Vec<i64>, Vec<i64>)> {
    parts.fold(None, |acc, (lo, hi)| match acc {
        None => Some((lo, hi)),
        Some((a, b)) => Some((
            a.iter().zip(&lo).map(|(x, y)| *x.min(y)).collect(),
            b.iter().zip(&hi).map(|(x, y)| *x.max(y)).collect(),
        )),
    })
}

fn boxes_from_entries(m: usize, order: usize, entries: &[(Element, f64)]) -> Vec<CosetBox> {
    (0..order)
        .map(|x| {
            let pts: Vec<&(Element, f64)> = entries.iter().filter(|(g, _)| g.x == x).collect();
            match union_bounds(pts.iter().map(|(g, _)| (g.v.clone(), g.v.clone()))) {
                None => CosetBox::empty(m),
                Some((lo, hi)) => {
                    let mut b = CosetBox::zeros(lo, &hi);
                    for (g, p) in pts {
                        let k = b.index(&g.v).expect("inside bounds");
                        b.data[k] += p;
                    }
                    b
                }
            }
        })
        .collect()
}

#[derive(Debug, Clone)]
enum Storage {
    Exact(BTreeMap<Element, Q>),
    Float(Vec<CosetBox>),
}

/// The law of `w_n`: masses on `Z^m x F` plus the mass dropped by pruning.
#[derive(Debug, Clone)]
pub struct LatticeDistribution {
    spec: Arc<GroupSpec>,
    storage: Storage,
    lost_mass: f64,
    n: u64,
    config: EngineConfig,
}

/// Groups compare by structure, ignoring display names.
pub fn same_group(a: &GroupSpec, b: &GroupSpec) -> bool {
    std::ptr::eq(a, b)
        || (a.table() == b.table() && a.action() == b.action() && a.factor_set() == b.factor_set())
}

fn check_same(a: &GroupSpec, b: &GroupSpec) -> Result<()> {
    if same_group(a, b) {
        Ok(())
    } else {
        Err(Error::SpecMismatch)
    }
}

/// For each target coset, the contributions `(source coset, shift, weight)`.
type StepPlan = Vec<Vec<(usize, Vec<i64>, f64)>>;

fn step_plan(spec: &GroupSpec, mu: &FiniteMeasure) -> StepPlan {
    let mut plan = vec![Vec::new(); spec.order()];
    for x in 0..spec.order() {
        for (s, w) in mu.iter_f64() {
            let y = spec.table().mul(x, s.x);
            plan[y].push((x, spec.alpha_unchecked(x, s), w));
        }
    }
    plan
}

impl LatticeDistribution {
    /// Point mass at the identity (`n = 0`).
    pub fn delta(spec: Arc<GroupSpec>, mode: Mode, config: EngineConfig) -> Self {
        let id = spec.identity();
        let storage = match mode {
            Mode::Exact => Storage::Exact(BTreeMap::from([(id, Q::one())])),
            Mode::Float => {
                let mut boxes = vec![CosetBox::empty(spec.rank()); spec.order()];
                boxes[id.x] = CosetBox::point(&id.v, 1.0);
                Storage::Float(boxes)
            }
        };
        Self { spec, storage, lost_mass: 0.0, n: 0, config }
    }

    /// Build from explicit entries; the mode follows the representation.
    pub fn from_exact(spec: Arc<GroupSpec>, n: u64, entries: BTreeMap<Element, Q>) -> Result<Self> {
        for (g, p) in &entries {
            spec.check(g)?;
            if p.is_negative() {
                return Err(Error::Invariant(format!("negative mass at {g}")));
            }
        }
        Ok(Self { spec, storage: Storage::Exact(entries), lost_mass: 0.0, n, config: EngineConfig::default() })
    }

    pub fn from_float(spec: Arc<GroupSpec>, n: u64, entries: &[(Element, f64)]) -> Result<Self> {
        for (g, p) in entries {
            spec.check(g)?;
            if *p < 0.0 || !p.is_finite() {
                return Err(Error::Invariant(format!("invalid mass at {g}")));
            }
        }
        let boxes = boxes_from_entries(spec.rank(), spec.order(), entries);
        Ok(Self { spec, storage: Storage::Float(boxes), lost_mass: 0.0, n, config: EngineConfig::default() })
    }

    pub fn spec(&self) -> &Arc<GroupSpec> {
        &self.spec
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn lost_mass(&self) -> f64 {
        self.lost_mass
    }

    pub fn config(&self) -> EngineConfig {
        self.config
    }

    pub fn mode(&self) -> Mode {
        match self.storage {
            Storage::Exact(_) => Mode::Exact,
            Storage::Float(_) => Mode::Float,
        }
    }

    pub fn is_exact(&self) -> bool {
        self.mode() == Mode::Exact
    }

    /// The sparse map, in exact mode.
    pub fn exact_entries(&self) -> Option<&BTreeMap<Element, Q>> {
        match &self.storage {
            Storage::Exact(m) => Some(m),
            Storage::Float(_) => None,
        }
    }

    pub fn mass_at(&self, v: &[i64], x: usize) -> f64 {
        match &self.storage {
            Storage::Exact(map) => map.get(&Element::new(v.to_vec(), x)).map_or(0.0, q_to_f64),
            Storage::Float(boxes) => boxes.get(x).map_or(0.0, |b| b.get(v)),
        }
    }

    pub fn mass(&self, g: &Element) -> f64 {
        self.mass_at(&g.v, g.x)
    }

    pub fn exact_mass(&self, g: &Element) -> Option<Q> {
        self.exact_entries().map(|m| m.get(g).cloned().unwrap_or_else(Q::zero))
    }

    /// Calls `f(v, x, mass)` for every stored entry, in `(x, v)` order.
    /// Float mode also visits zeros inside the boxes.
    pub fn visit(&self, mut f: impl FnMut(&[i64], usize, f64)) {
        match &self.storage {
            Storage::Exact(map) => map.iter().for_each(|(g, p)| f(&g.v, g.x, q_to_f64(p))),
            Storage::Float(boxes) => {
                for (x, b) in boxes.iter().enumerate() {
                    b.visit(|v, p| f(v, x, p));
                }
            }
        }
    }

    /// Number of entries with positive mass.
    pub fn support_len(&self) -> usize {
        let mut k = 0;
        self.visit(|_, _, p| k += usize::from(p > 0.0));
        k
    }

    pub fn total_mass(&self) -> f64 {
        match &self.storage {
            Storage::Exact(map) => q_to_f64(&map.values().sum::<Q>()),
            Storage::Float(boxes) => boxes.iter().flat_map(|b| b.data.iter()).sum(),
        }
    }

    pub fn total_exact(&self) -> Option<Q> {
        self.exact_entries().map(|m| m.values().sum())
    }

    /// Bytes held by the mass storage.
    pub fn bytes(&self) -> u64 {
        match &self.storage {
            Storage::Exact(map) => map
                .iter()
                .map(|(g, p)| (g.v.len() * 8 + 48 + (p.numer().bits() + p.denom().bits()) as usize / 8) as u64)
                .sum(),
            Storage::Float(boxes) => boxes.iter().map(CosetBox::bytes).sum(),
        }
    }

    pub fn to_float(&self) -> Self {
        match &self.storage {
            Storage::Float(_) => self.clone(),
            Storage::Exact(map) => {
                let entries: Vec<(Element, f64)> = map.iter().map(|(g, p)| (g.clone(), q_to_f64(p))).collect();
                Self {
                    spec: self.spec.clone(),
                    storage: Storage::Float(boxes_from_entries(self.spec.rank(), self.spec.order(), &entries)),
                    lost_mass: 0.0,
                    n: self.n,
                    config: self.config,
                }
            }
        }
    }

    /// One step of the walk: the convolution `self * mu`.
    pub fn convolve_step(&self, mu: &FiniteMeasure) -> Result<Self> {
        let plan = step_plan(&self.spec, mu);
        self.step_with(mu, &plan)
    }

    fn step_with(&self, mu: &FiniteMeasure, plan: &StepPlan) -> Result<Self> {
        check_same(&self.spec, mu.spec())?;
        match &self.storage {
            Storage::Exact(map) => {
                let weights = mu.exact_weights().ok_or_else(|| {
                    Error::ModeMismatch("exact distribution convolved with a float measure".into())
                })?;
                if self.n + 1 > self.config.exact_max_steps {
                    return Err(Error::OutOfRange(format!(
                        "exact mode is capped at n <= {}",
                        self.config.exact_max_steps
                    )));
                }
                let mut out: BTreeMap<Element, Q> = BTreeMap::new();
                for (g, p) in map {
                    for (s, w) in mu.atoms().iter().zip(weights) {
                        let h = self.spec.mul_unchecked(g, s);
                        *out.entry(h).or_insert_with(Q::zero) += p * w;
                    }
                }
                Ok(Self { spec: self.spec.clone(), storage: Storage::Exact(out), lost_mass: 0.0, n: self.n + 1, config: self.config })
            }
            Storage::Float(boxes) => {
                let bounds: Vec<Option<(Vec<i64>, Vec<i64>)>> = plan
                    .iter()
                    .map(|contribs| {
                        union_bounds(contribs.iter().filter(|(x, _, _)| !boxes[*x].is_empty()).map(|(x, shift, _)| {
                            let b = &boxes[*x];
                            let lo = b.lo.iter().zip(shift).map(|(a, s)| a + s).collect();
                            let hi = b.hi().iter().zip(shift).map(|(a, s)| a + s).collect();
                            (lo, hi)
                        }))
                    })
                    .collect();
                let new_bytes: u64 = bounds
                    .iter()
                    .flatten()
                    .map(|(lo, hi)| 8 * lo.iter().zip(hi).map(|(a, b)| (b - a + 1) as u64).product::<u64>())
                    .sum();
                let needed = self.bytes() + new_bytes;
                if needed > self.config.budget_bytes {
                    return Err(Error::BudgetExceeded {
                        needed_mib: needed.div_ceil(MIB),
                        budget_mib: self.config.budget_bytes / MIB,
                        feasible_n: self.n,
                    });
                }
                let prune = self.config.prune;
                let results: Vec<(CosetBox, f64)> = plan
                    .par_iter()
                    .zip(bounds)
                    .map(|(contribs, bound)| {
                        let Some((lo, hi)) = bound else {
                            return (CosetBox::empty(self.spec.rank()), 0.0);
                        };
                        let mut t = CosetBox::zeros(lo, &hi);
                        for (x, shift, w) in contribs {
                            t.add_shifted(&boxes[*x], shift, *w);
                        }
                        let lost = t.prune(prune);
                        (t, lost)
                    })
                    .collect();
                let lost: f64 = results.iter().map(|(_, l)| l).sum();
                Ok(Self {
                    spec: self.spec.clone(),
                    storage: Storage::Float(results.into_iter().map(|(b, _)| b).collect()),
                    lost_mass: self.lost_mass + lost,
                    n: self.n + 1,
                    config: self.config,
                })
            }
        }
    }

    /// Distribution dump with columns `v1..vm,x,mass`.
    pub fn to_csv(&self) -> String {
        let m = self.spec.rank();
        let mut out: Vec<String> = (1..=m).map(|i| format!("v{i}")).collect();
        out.push("x".into());
        out.push("mass".into());
        let mut s = out.join(",");
        s.push('\n');
        let row = |s: &mut String, v: &[i64], x: usize, mass: String| {
            for c in v {
                let _ = write!(s, "{c},");
            }
            let _ = writeln!(s, "{x},{mass}");
        };
        match &self.storage {
            Storage::Exact(map) => map.iter().for_each(|(g, p)| row(&mut s, &g.v, g.x, format_q(p))),
            Storage::Float(_) => self.visit(|v, x, p| {
                if p > 0.0 {
                    row(&mut s, v, x, format!("{p:.16e}"));
                }
            }),
        }
        s
    }

    /// Push forward to factor 0 or 1 of a product spec.
    pub fn marginal(&self, factor: usize) -> Result<Self> {
        let (a, b) = self.spec.factors().ok_or(Error::NotProduct)?;
        if factor > 1 {
            return Err(Error::OutOfRange(format!("factor index {factor}")));
        }
        let target = if factor == 0 { a.clone() } else { b.clone() };
        let (ma, nb) = (a.rank(), b.order());
        let range = if factor == 0 { 0..ma } else { ma..ma + b.rank() };
        let coset = |x: usize| if factor == 0 { x / nb } else { x % nb };
        let storage = match &self.storage {
            Storage::Exact(map) => {
                let mut out: BTreeMap<Element, Q> = BTreeMap::new();
                for (g, p) in map {
                    *out.entry(Element::new(g.v[range.clone()].to_vec(), coset(g.x))).or_insert_with(Q::zero) += p;
                }
                Storage::Exact(out)
            }
            Storage::Float(boxes) => {
                let mut out: Vec<CosetBox> = (0..target.order())
                    .map(|y| {
                        let parts = boxes
                            .iter()
                            .enumerate()
                            .filter(|(x, bx)| coset(*x) == y && !bx.is_empty())
                            .map(|(_, bx)| (bx.lo[range.clone()].to_vec(), bx.hi()[range.clone()].to_vec()));
                        match union_bounds(parts) {
                            Some((lo, hi)) => CosetBox::zeros(lo, &hi),
                            None => CosetBox::empty(target.rank()),
                        }
                    })
                    .collect();
                for (x, bx) in boxes.iter().enumerate() {
                    let t = &mut out[coset(x)];
                    bx.visit(|v, p| {
                        if p != 0.0 {
                            let k = t.index(&v[range.clone()]).expect("inside union");
                            t.data[k] += p;
                        }
                    });
                }
                Storage::Float(out)
            }
        };
        Ok(Self { spec: target, storage, lost_mass: self.lost_mass, n: self.n, config: self.config })
    }

    /// The product law on `spec_a x spec_b`, materialized.
    pub fn product(a: &Self, b: &Self, product_spec: Arc<GroupSpec>) -> Result<Self> {
        let (fa, fb) = product_spec.factors().ok_or(Error::NotProduct)?;
        check_same(fa, &a.spec)?;
        check_same(fb, &b.spec)?;
        let nb = fb.order();
        let storage = match (&a.storage, &b.storage) {
            (Storage::Exact(ma), Storage::Exact(mb)) => {
                let mut out = BTreeMap::new();
                for (ga, pa) in ma {
                    for (gb, pb) in mb {
                        let mut v = ga.v.clone();
                        v.extend_from_slice(&gb.v);
                        out.insert(Element::new(v, ga.x * nb + gb.x), pa * pb);
                    }
                }
                Storage::Exact(out)
            }
            _ => {
                let (a, b) = (a.to_float(), b.to_float());
                let (Storage::Float(ba), Storage::Float(bb)) = (&a.storage, &b.storage) else { unreachable!() };
                let mut out = Vec::with_capacity(ba.len() * bb.len());
                for xa in ba {
                    for xb in bb {
                        if xa.is_empty() || xb.is_empty() {
                            out.push(CosetBox::empty(product_spec.rank()));
                            continue;
                        }
                        let mut lo = xa.lo.clone();
                        lo.extend_from_slice(&xb.lo);
                        let mut hi = xa.hi();
                        hi.extend(xb.hi());
                        let mut t = CosetBox::zeros(lo, &hi);
                        let mut k = 0;
                        for p in &xa.data {
                            for q in &xb.data {
                                t.data[k] = p * q;
                                k += 1;
                            }
                        }
                        out.push(t);
                    }
                }
                Storage::Float(out)
            }
        };
        Ok(Self {
            spec: product_spec,
            storage,
            lost_mass: a.lost_mass + b.lost_mass,
            n: a.n.max(b.n),
            config: a.config,
        })
    }

    /// Equal-weight mixture.
    pub fn mixture(parts: &[Self]) -> Result<Self> {
        let first = parts.first().ok_or_else(|| Error::OutOfRange("empty mixture".into()))?;
        for p in parts {
            check_same(&first.spec, &p.spec)?;
        }
        let k = parts.len();
        let all_exact = parts.iter().all(Self::is_exact);
        let storage = if all_exact {
            let w = Q::new(1.into(), (k as i64).into());
            let mut out: BTreeMap<Element, Q> = BTreeMap::new();
            for p in parts {
                for (g, m) in p.exact_entries().expect("exact") {
                    *out.entry(g.clone()).or_insert_with(Q::zero) += m * &w;
                }
            }
            Storage::Exact(out)
        } else {
            let floats: Vec<Self> = parts.iter().map(Self::to_float).collect();
            let boxes: Vec<&Vec<CosetBox>> = floats
                .iter()
                .map(|d| match &d.storage {
                    Storage::Float(b) => b,
                    Storage::Exact(_) => unreachable!(),
                })
                .collect();
            let m = first.spec.rank();
            let out = (0..first.spec.order())
                .map(|x| {
                    let parts = boxes.iter().map(|b| &b[x]).filter(|b| !b.is_empty()).map(|b| (b.lo.clone(), b.hi()));
                    match union_bounds(parts) {
                        None => CosetBox::empty(m),
                        Some((lo, hi)) => {
                            let mut t = CosetBox::zeros(lo, &hi);
                            for b in &boxes {
                                t.add_shifted(&b[x], &vec![0; m], 1.0 / k as f64);
                            }
                            t
                        }
                    }
                })
                .collect();
            Storage::Float(out)
        };
        Ok(Self {
            spec: first.spec.clone(),
            storage,
            lost_mass: parts.iter().map(|p| p.lost_mass).sum::<f64>() / k as f64,
            n: first.n,
            config: first.config,
        })
    }
}

/// Evolve `mu` from the identity, calling `f` with the distribution at each
/// time in `times` (in increasing order).
pub fn evolve_visit(
    mu: &FiniteMeasure,
    times: &[u64],
    mode: Mode,
    config: EngineConfig,
    mut f: impl FnMut(&LatticeDistribution) -> Result<()>,
) -> Result<()> {
    let mut times: Vec<u64> = times.to_vec();
    times.sort_unstable();
    times.dedup();
    let plan = step_plan(mu.spec(), mu);
    let mut d = LatticeDistribution::delta(mu.spec().clone(), mode, config);
    for t in times {
        while d.n < t {
            d = d.step_with(mu, &plan)?;
        }
        f(&d)?;
    }
    Ok(())
}

/// `mu_n`.
pub fn evolve(mu: &FiniteMeasure, n: u64, mode: Mode, config: EngineConfig) -> Result<LatticeDistribution> {
    let mut out = None;
    evolve_visit(mu, &[n], mode, config, |d| {
        out = Some(d.clone());
        Ok(())
    })?;
    Ok(out.expect("visited"))
}

/// `mu_t` for each `t`, returned in the order of `times`.
pub fn evolve_snapshots(
    mu: &FiniteMeasure,
    times: &[u64],
    mode: Mode,
    config: EngineConfig,
) -> Result<Vec<LatticeDistribution>> {
    let mut snaps: BTreeMap<u64, LatticeDistribution> = BTreeMap::new();
    evolve_visit(mu, times, mode, config, |d| {
        snaps.insert(d.n, d.clone());
        Ok(())
    })?;
    Ok(times.iter().map(|t| snaps[t].clone()).collect())
}

/// `q^-1 sum_{i < q} mu_{qn + i}`.
pub fn averaged_distribution(
    mu: &FiniteMeasure,
    q: u64,
    n: u64,
    mode: Mode,
    config: EngineConfig,
) -> Result<LatticeDistribution> {
    if q == 0 {
        return Err(Error::OutOfRange("period must be positive".into()));
    }
    let times: Vec<u64> = (0..q).map(|i| q * n + i).collect();
    let parts = evolve_snapshots(mu, &times, mode, config)?;
    let mut mix = LatticeDistribution::mixture(&parts)?;
    mix.n = q * n;
    Ok(mix)
}

/// `(1/2) sum |a - b|` over the union of supports.
pub fn tv_distance(a: &LatticeDistribution, b: &LatticeDistribution) -> Result<Tv> {
    check_same(&a.spec, &b.spec)?;
    if let (Storage::Exact(ma), Storage::Exact(mb)) = (&a.storage, &b.storage) {
        let mut sum = Q::zero();
        for (g, p) in ma {
            sum += match mb.get(g) {
                Some(q) => (p - q).abs(),
                None => p.clone(),
            };
        }
        for (g, q) in mb {
            if !ma.contains_key(g) {
                sum += q;
            }
        }
        let tv = sum / Q::from_integer(2.into());
        return Ok(Tv { value: q_to_f64(&tv), error: 0.0, exact: Some(tv) });
    }
    let (mut diff, mut b_in) = (0.0, 0.0);
    a.visit(|v, x, p| {
        let q = b.mass_at(v, x);
        diff += (p - q).abs();
        b_in += q;
    });
    let rest = (b.total_mass() - b_in).max(0.0);
    Ok(Tv { value: (0.5 * (diff + rest)).min(1.0), error: a.lost_mass + b.lost_mass, exact: None })
}

/// Distance to the Gaussian comparison measure. The Gaussian's mass off the
/// support of `dist` is taken as one minus its mass on it.
pub fn tv_to_gaussian(dist: &LatticeDistribution, g: &GaussianOnGroup) -> Result<Tv> {
    check_same(&dist.spec, g.spec())?;
    let (mut diff, mut g_in) = (0.0, 0.0);
    dist.visit(|v, x, p| {
        let q = g.mass_at(v, x);
        diff += (p - q).abs();
        g_in += q;
    });
    let rest = (1.0 - g_in).max(0.0);
    Ok(Tv { value: (0.5 * (diff + rest)).min(1.0), error: dist.lost_mass + g.tail(), exact: None })
}

/// Distance between a law on a product group and the product of two laws on
/// the factors, without materializing the product.
pub fn tv_against_product(joint: &LatticeDistribution, a: &LatticeDistribution, b: &LatticeDistribution) -> Result<Tv> {
    let (fa, fb) = joint.spec.factors().ok_or(Error::NotProduct)?;
    check_same(fa, &a.spec)?;
    check_same(fb, &b.spec)?;
    let (ma, nb) = (fa.rank(), fb.order());
    let error = joint.lost_mass + a.lost_mass + b.lost_mass;
    if let (Some(mj), Some(ea), Some(eb)) = (joint.exact_entries(), a.exact_entries(), b.exact_entries()) {
        let mut diff = Q::zero();
        let mut prod_in = Q::zero();
        for (g, p) in mj {
            let pa = ea.get(&Element::new(g.v[..ma].to_vec(), g.x / nb));
            let pb = eb.get(&Element::new(g.v[ma..].to_vec(), g.x % nb));
            let pp = match (pa, pb) {
                (Some(x), Some(y)) => x * y,
                _ => Q::zero(),
            };
            diff += (p - &pp).abs();
            prod_in += pp;
        }
        let total: Q = ea.values().sum::<Q>() * eb.values().sum::<Q>();
        let tv = (diff + total - prod_in) / Q::from_integer(2.into());
        return Ok(Tv { value: q_to_f64(&tv), error, exact: Some(tv) });
    }
    let (mut diff, mut prod_in) = (0.0, 0.0);
    joint.visit(|v, x, p| {
        let pp = a.mass_at(&v[..ma], x / nb) * b.mass_at(&v[ma..], x % nb);
        diff += (p - pp).abs();
        prod_in += pp;
    });
    let rest = (a.total_mass() * b.total_mass() - prod_in).max(0.0);
    Ok(Tv { value: (0.5 * (diff + rest)).min(1.0), error, exact: None })
}

/// Largest `|alpha(x, s)_i|` per lattice axis.
fn max_steps(mu: &FiniteMeasure) -> Vec<i64> {
    let spec = mu.spec();
    let mut out = vec![0; spec.rank()];
    for x in 0..spec.order() {
        for s in mu.atoms() {
            for (o, a) in out.iter_mut().zip(spec.alpha_unchecked(x, s)) {
                *o = (*o).max(a.abs());
            }
        }
    }
    out
}

/// Pre-run memory estimate for evolving `mu` to time `n` in float mode: a
/// box of `6 sigma sqrt(n)` around the mean per axis (capped by the reachable
/// range) in every coset, double-buffered.
pub fn estimate_bytes(mu: &FiniteMeasure, n: u64) -> u64 {
    let spec = mu.spec();
    let steps = max_steps(mu);
    let float = mu.to_float();
    let sds: Vec<f64> = WeightedDiagram::<f64>::build(&float)
        .and_then(|d| covariance(&d))
        .map(|r| (0..spec.rank()).map(|i| r.sigma.get(i, i).max(0.0).sqrt()).collect())
        .unwrap_or_else(|_| steps.iter().map(|&s| s as f64).collect());
    let cells: f64 = steps
        .iter()
        .zip(&sds)
        .map(|(&s, sd)| {
            let reach = 2.0 * n as f64 * s as f64 + 1.0;
            let diffusive = 2.0 * (6.0 * sd * (n as f64).sqrt()).ceil() + 1.0;
            reach.min(diffusive)
        })
        .product();
    let bytes = 2.0 * 8.0 * spec.order() as f64 * cells;
    if bytes >= u64::MAX as f64 {
        u64::MAX
    } else {
        bytes as u64
    }
}

/// Largest `n` (up to `cap`) whose estimate fits in `budget_bytes`.
pub fn feasible_n(mu: &FiniteMeasure, budget_bytes: u64, cap: u64) -> u64 {
    let (mut lo, mut hi) = (0u64, cap);
    while lo < hi {
        let mid = lo + (hi - lo).div_ceil(2);
        if estimate_bytes(mu, mid) <= budget_bytes {
            lo = mid;
        } else {
            hi = mid - 1;
        }
    }
    lo
}

/// Refuse runs whose estimate exceeds the budget.
pub fn check_budget(mu: &FiniteMeasure, n: u64, config: &EngineConfig) -> Result<()> {
    let need = estimate_bytes(mu, n);
    if need > config.budget_bytes {
        return Err(Error::BudgetExceeded {
            needed_mib: need.div_ceil(MIB),
            budget_mib: config.budget_bytes / MIB,
            feasible_n: feasible_n(mu, config.budget_bytes, n),
        });
    }
    Ok(())
}
