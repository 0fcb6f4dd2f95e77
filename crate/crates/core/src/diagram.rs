//! The weighted quotient diagram of a walk: vertices are the cosets `F`,
//! edges are `(x, s)` for `s` in `supp mu` and its inverses.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::group::{Element, GroupSpec};
use crate::matrix::Matrix;
use crate::measure::{FiniteMeasure, Weights};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub origin: usize,
    pub label: usize,
    pub terminus: usize,
    pub phi: Vec<i64>,
}

#[derive(Debug, Clone)]
pub struct WeightedDiagram<S> {
    spec: Arc<GroupSpec>,
    measure: FiniteMeasure,
    labels: Vec<Element>,
    label_inverse: Vec<usize>,
    label_weight: Vec<S>,
    edges: Vec<Edge>,
    stationary: Vec<S>,
}

/// An edge function with `omega(reverse e) = -omega(e)`, indexed like
/// [`WeightedDiagram::edges`].
#[derive(Debug, Clone, PartialEq)]
pub struct OneForm<S> {
    pub values: Vec<S>,
}

impl<S: Scalar> WeightedDiagram<S> {
    /// Build the diagram. Exact diagrams need an exact measure.
    pub fn build(mu: &FiniteMeasure) -> Result<Self> {
        let spec = mu.spec().clone();
        let weight_of = |i: usize| -> Result<S> {
            match mu.weights() {
                Weights::Exact(w) => Ok(S::from_q(&w[i])),
                Weights::Float(w) => S::from_f64(w[i]).ok_or_else(|| {
                    Error::ModeMismatch("exact diagram requested for a float measure".into())
                }),
            }
        };
        let mut label_set: BTreeSet<Element> = mu.atoms().iter().cloned().collect();
        for s in mu.atoms() {
            label_set.insert(spec.invert(s)?);
        }
        let labels: Vec<Element> = label_set.into_iter().collect();
        let label_weight = labels
            .iter()
            .map(|s| match mu.atoms().binary_search(s) {
                Ok(i) => weight_of(i),
                Err(_) => Ok(S::zero()),
            })
            .collect::<Result<Vec<S>>>()?;
        let label_inverse = labels
            .iter()
            .map(|s| {
                let inv = spec.invert(s).expect("valid label");
                labels.binary_search(&inv).expect("labels are closed under inversion")
            })
            .collect();
        let n = spec.order();
        let mut edges = Vec::with_capacity(n * labels.len());
        for x in 0..n {
            for (l, s) in labels.iter().enumerate() {
                let (phi, terminus) = spec.cocycle_alpha(x, s)?;
                edges.push(Edge { origin: x, label: l, terminus, phi });
            }
        }
        let mut d = Self {
            spec,
            measure: mu.clone(),
            labels,
            label_inverse,
            label_weight,
            edges,
            stationary: Vec::new(),
        };
        d.check_irreducible()?;
        d.stationary = d.solve_stationary()?;
        let uniform = S::one() / S::from_i64(n as i64);
        if d.stationary.iter().any(|p| !p.approx_eq(&uniform)) {
            return Err(Error::NonUniformStationary);
        }
        Ok(d)
    }

    fn check_irreducible(&self) -> Result<()> {
        let n = self.order();
        for forward in [true, false] {
            let mut seen = vec![false; n];
            seen[0] = true;
            let mut stack = vec![0];
            while let Some(x) = stack.pop() {
                for e in &self.edges {
                    if self.label_weight[e.label].is_zero() {
                        continue;
                    }
                    let (from, to) = if forward { (e.origin, e.terminus) } else { (e.terminus, e.origin) };
                    if from == x && !seen[to] {
                        seen[to] = true;
                        stack.push(to);
                    }
                }
            }
            let reached = seen.iter().filter(|&&b| b).count();
            if reached < n {
                return Err(Error::Reducible { reached, order: n });
            }
        }
        Ok(())
    }

    /// Solve `pi P = pi`, `sum pi = 1`.
    fn solve_stationary(&self) -> Result<Vec<S>> {
        let n = self.order();
        let p = self.transition_matrix();
        // Rows of (P^T - I), last row replaced by the normalization.
        let a = Matrix::from_fn(n, n, |i, j| {
            if i == n - 1 {
                S::one()
            } else {
                let v = p.get(j, i).clone();
                if i == j {
                    v - S::one()
                } else {
                    v
                }
            }
        });
        let mut b = vec![S::zero(); n];
        b[n - 1] = S::one();
        a.solve(&b)
    }

    pub fn transition_matrix(&self) -> Matrix<S> {
        let n = self.order();
        let mut p: Matrix<S> = Matrix::zeros(n, n);
        for e in &self.edges {
            let v = p.get(e.origin, e.terminus).clone() + self.label_weight[e.label].clone();
            p.set(e.origin, e.terminus, v);
        }
        p
    }

    pub fn spec(&self) -> &Arc<GroupSpec> {
        &self.spec
    }

    pub fn measure(&self) -> &FiniteMeasure {
        &self.measure
    }

    pub fn order(&self) -> usize {
        self.spec.order()
    }

    pub fn rank(&self) -> usize {
        self.spec.rank()
    }

    pub fn labels(&self) -> &[Element] {
        &self.labels
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge_index(&self, x: usize, label: usize) -> usize {
        x * self.labels.len() + label
    }

    /// Index of the reversed edge `(x^s, s^-1)`.
    pub fn reverse(&self, e: usize) -> usize {
        let edge = &self.edges[e];
        self.edge_index(edge.terminus, self.label_inverse[edge.label])
    }

    pub fn weight(&self, e: usize) -> &S {
        &self.label_weight[self.edges[e].label]
    }

    pub fn label_weight(&self, label: usize) -> &S {
        &self.label_weight[label]
    }

    pub fn stationary(&self) -> &[S] {
        &self.stationary
    }

    /// `c(e) = pi(o e) p(e)`.
    pub fn conductance(&self, e: usize) -> S {
        self.stationary[self.edges[e].origin].clone() * self.weight(e).clone()
    }

    pub fn zero_form(&self) -> OneForm<S> {
        OneForm { values: vec![S::zero(); self.edges.len()] }
    }

    /// Wrap edge values as a 1-form, checking antisymmetry.
    pub fn one_form(&self, values: Vec<S>) -> Result<OneForm<S>> {
        if values.len() != self.edges.len() {
            return Err(Error::DimensionMismatch { expected: self.edges.len(), found: values.len() });
        }
        for e in 0..values.len() {
            let r = self.reverse(e);
            if !values[e].approx_eq(&-values[r].clone()) {
                return Err(Error::Invariant(format!("1-form is not antisymmetric on edge {e}")));
            }
        }
        Ok(OneForm { values })
    }

    /// `(a(e) - a(reverse e)) / 2`, a 1-form from arbitrary edge values.
    pub fn antisymmetrize(&self, raw: &[S]) -> OneForm<S> {
        let two = S::from_i64(2);
        OneForm {
            values: (0..self.edges.len())
                .map(|e| (raw[e].clone() - raw[self.reverse(e)].clone()) / two.clone())
                .collect(),
        }
    }

    /// `v_hat(e) = <v, Phi_e>`.
    pub fn hat_form(&self, v: &[S]) -> Result<OneForm<S>> {
        if v.len() != self.rank() {
            return Err(Error::DimensionMismatch { expected: self.rank(), found: v.len() });
        }
        Ok(OneForm {
            values: self
                .edges
                .iter()
                .map(|e| {
                    v.iter()
                        .zip(&e.phi)
                        .fold(S::zero(), |acc, (a, &p)| acc + a.clone() * S::from_i64(p))
                })
                .collect(),
        })
    }

    /// `chi_c(omega) = sum_e omega(e) c(e)`.
    pub fn chi_c(&self, omega: &OneForm<S>) -> S {
        omega
            .values
            .iter()
            .enumerate()
            .filter(|(e, _)| !self.weight(*e).is_zero())
            .fold(S::zero(), |acc, (e, w)| acc + w.clone() * self.conductance(e))
    }

    /// `zeta_c = sum_e c(e) Phi_e`.
    pub fn drift_vector(&self) -> Vec<S> {
        let mut z = vec![S::zero(); self.rank()];
        for (e, edge) in self.edges.iter().enumerate() {
            if self.weight(e).is_zero() {
                continue;
            }
            let c = self.conductance(e);
            for (zi, &p) in z.iter_mut().zip(&edge.phi) {
                *zi = zi.clone() + c.clone() * S::from_i64(p);
            }
        }
        z
    }

    /// Out-weights per vertex; each equals one.
    pub fn row_sums(&self) -> Vec<S> {
        let mut sums = vec![S::zero(); self.order()];
        for (e, edge) in self.edges.iter().enumerate() {
            sums[edge.origin] = sums[edge.origin].clone() + self.weight(e).clone();
        }
        sums
    }

    /// For each label, the permutation `x -> x^s` of the vertices.
    pub fn label_permutation(&self, label: usize) -> Vec<usize> {
        (0..self.order()).map(|x| self.edges[self.edge_index(x, label)].terminus).collect()
    }

    /// CSV with columns `vertex,label,terminus,weight,phi_components`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("vertex,label,terminus,weight,phi_components\n");
        for (e, edge) in self.edges.iter().enumerate() {
            let phi: Vec<String> = edge.phi.iter().map(i64::to_string).collect();
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                edge.origin,
                self.labels[edge.label],
                edge.terminus,
                self.weight(e).to_f64(),
                phi.join(" ")
            );
        }
        out
    }
}

impl<S: Scalar> OneForm<S> {
    pub fn add(&self, other: &Self) -> Self {
        OneForm {
            values: self.values.iter().zip(&other.values).map(|(a, b)| a.clone() + b.clone()).collect(),
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        OneForm {
            values: self.values.iter().zip(&other.values).map(|(a, b)| a.clone() - b.clone()).collect(),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|v| v.approx_eq(&S::zero()))
    }
}
