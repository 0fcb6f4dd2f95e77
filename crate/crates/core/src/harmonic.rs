//! Harmonic decomposition of 1-forms on a weighted diagram.
//!
//! Every 1-form splits uniquely as `omega = u + df` where `u` satisfies
//! `d*u + chi_c(u) = 0`. The potential solves `(I - P) f = d*omega + chi_c(omega)`
//! on functions with zero stationary mean.

use std::fmt::Write as _;

use crate::diagram::{OneForm, WeightedDiagram};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct VertexFunction<S>(pub Vec<S>);

impl<S: Scalar> VertexFunction<S> {
    pub fn constant(n: usize, c: S) -> Self {
        Self(vec![c; n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct HarmonicDecomposition<S> {
    pub u: OneForm<S>,
    pub f: VertexFunction<S>,
    /// `max_x |d*u(x) + chi_c(u)|`.
    pub residual: f64,
}

/// `df(e) = f(t e) - f(o e)`.
pub fn differential<S: Scalar>(d: &WeightedDiagram<S>, f: &VertexFunction<S>) -> Result<OneForm<S>> {
    check_len(d, f)?;
    Ok(OneForm {
        values: d.edges().iter().map(|e| f.0[e.terminus].clone() - f.0[e.origin].clone()).collect(),
    })
}

/// `d*omega(x) = -(1/pi(x)) sum_{o e = x} c(e) omega(e)`, i.e. minus the
/// `p`-weighted outflow.
pub fn codifferential<S: Scalar>(d: &WeightedDiagram<S>, omega: &OneForm<S>) -> VertexFunction<S> {
    let mut out = vec![S::zero(); d.order()];
    for (e, edge) in d.edges().iter().enumerate() {
        let w = d.weight(e);
        if w.is_zero() {
            continue;
        }
        out[edge.origin] = out[edge.origin].clone() - w.clone() * omega.values[e].clone();
    }
    VertexFunction(out)
}

/// `(P f)(x) = sum_s p(x, s) f(x^s)`.
pub fn transition<S: Scalar>(d: &WeightedDiagram<S>, f: &VertexFunction<S>) -> Result<VertexFunction<S>> {
    check_len(d, f)?;
    let mut out = vec![S::zero(); d.order()];
    for (e, edge) in d.edges().iter().enumerate() {
        let w = d.weight(e);
        if w.is_zero() {
            continue;
        }
        out[edge.origin] = out[edge.origin].clone() + w.clone() * f.0[edge.terminus].clone();
    }
    Ok(VertexFunction(out))
}

fn check_len<S: Scalar>(d: &WeightedDiagram<S>, f: &VertexFunction<S>) -> Result<()> {
    if f.len() != d.order() {
        return Err(Error::DimensionMismatch { expected: d.order(), found: f.len() });
    }
    Ok(())
}

fn pi_mean<S: Scalar>(d: &WeightedDiagram<S>, f: &VertexFunction<S>) -> S {
    d.stationary().iter().zip(&f.0).fold(S::zero(), |acc, (p, v)| acc + p.clone() * v.clone())
}

fn source_term<S: Scalar>(d: &WeightedDiagram<S>, omega: &OneForm<S>) -> VertexFunction<S> {
    let chi = d.chi_c(omega);
    VertexFunction(codifferential(d, omega).0.into_iter().map(|v| v + chi.clone()).collect())
}

fn harmonic_residual<S: Scalar>(d: &WeightedDiagram<S>, u: &OneForm<S>) -> f64 {
    source_term(d, u).0.iter().map(|v| v.to_f64().abs()).fold(0.0, f64::max)
}

pub fn harmonic_decompose<S: Scalar>(
    d: &WeightedDiagram<S>,
    omega: &OneForm<S>,
) -> Result<HarmonicDecomposition<S>> {
    if omega.values.len() != d.edges().len() {
        return Err(Error::DimensionMismatch { expected: d.edges().len(), found: omega.values.len() });
    }
    let n = d.order();
    let b = source_term(d, omega);
    let mean = pi_mean(d, &b);
    if !mean.approx_eq(&S::zero()) {
        return Err(Error::Invariant(format!(
            "source term has nonzero stationary mean {:.3e}",
            mean.to_f64()
        )));
    }
    // (I - P) with its last equation swapped for <f, 1>_pi = 0.
    let p = d.transition_matrix();
    let a = Matrix::from_fn(n, n, |i, j| {
        if i == n - 1 {
            d.stationary()[j].clone()
        } else {
            let id = if i == j { S::one() } else { S::zero() };
            id - p.get(i, j).clone()
        }
    });
    let mut rhs = b.0;
    rhs[n - 1] = S::zero();
    let f = VertexFunction(a.solve(&rhs)?);
    let u = omega.sub(&differential(d, &f)?);
    let residual = harmonic_residual(d, &u);
    Ok(HarmonicDecomposition { u, f, residual })
}

/// Per-label sums `sum_x u(x, s)`.
pub fn check_column_sums<S: Scalar>(d: &WeightedDiagram<S>, u: &OneForm<S>) -> Vec<S> {
    let mut sums = vec![S::zero(); d.labels().len()];
    for (e, edge) in d.edges().iter().enumerate() {
        sums[edge.label] = sums[edge.label].clone() + u.values[e].clone();
    }
    sums
}

/// Potential from the series `f = (1/2) sum_k Q^k b`, `Q = (I + P)/2`, which
/// converges on mean-zero functions for any irreducible chain. Returns the
/// potential and an estimate of the truncated tail.
pub fn neumann_potential(
    d: &WeightedDiagram<f64>,
    omega: &OneForm<f64>,
    max_terms: usize,
) -> Result<(VertexFunction<f64>, f64)> {
    let b = source_term(d, omega);
    let mut term: Vec<f64> = b.0.iter().map(|v| 0.5 * v).collect();
    let mut f = term.clone();
    let norm = |v: &[f64]| v.iter().map(|x| x.abs()).fold(0.0, f64::max);
    let mut prev = norm(&term);
    let mut tail = f64::INFINITY;
    for _ in 0..max_terms {
        let pt = transition(d, &VertexFunction(term.clone()))?;
        term = term.iter().zip(&pt.0).map(|(a, b)| 0.5 * (a + b)).collect();
        for (fi, t) in f.iter_mut().zip(&term) {
            *fi += t;
        }
        let cur = norm(&term);
        let ratio = if prev > 0.0 { cur / prev } else { 0.0 };
        if ratio < 1.0 {
            tail = cur * ratio / (1.0 - ratio);
        }
        prev = cur;
        if cur == 0.0 || tail < 1e-15 {
            break;
        }
    }
    Ok((VertexFunction(f), tail))
}

/// CSV with one row per edge (`vertex,label,u`) followed by `vertex,f` rows.
pub fn decomposition_csv<S: Scalar>(d: &WeightedDiagram<S>, h: &HarmonicDecomposition<S>) -> String {
    let mut out = String::from("vertex,label,u\n");
    for (e, edge) in d.edges().iter().enumerate() {
        let _ = writeln!(out, "{},{},{}", edge.origin, d.labels()[edge.label], h.u.values[e].to_f64());
    }
    out.push_str("vertex,f\n");
    for (x, v) in h.f.0.iter().enumerate() {
        let _ = writeln!(out, "{x},{}", v.to_f64());
    }
    out
}
