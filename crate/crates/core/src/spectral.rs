//! Drift, covariance, the discrete Gaussian comparison measure, covariance
//! predictions for couplings, and the transfer-operator eigenvalue oracle.

use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::diagram::WeightedDiagram;
use crate::error::{Error, Result};
use crate::group::{Element, GroupSpec};
use crate::harmonic::{harmonic_decompose, HarmonicDecomposition};
use crate::matrix::Matrix;
use crate::measure::{detect_period, make_pi_rho, FiniteMeasure, PeriodReport, DEFAULT_PERIOD_BOUND};
use crate::scalar::{format_q, Scalar, Q};

#[derive(Debug, Clone)]
pub struct CltReport<S> {
    pub zeta: Vec<S>,
    pub sigma: Matrix<S>,
    pub transfer_projector: Matrix<Q>,
    pub hom_onto_z: bool,
    pub period: PeriodReport,
    /// Harmonic decompositions of the coordinate forms `e_i hat`.
    pub coordinates: Vec<HarmonicDecomposition<S>>,
}

/// Drift and covariance from the harmonic parts `u_i` of the coordinate
/// forms: `Sigma_ij = sum_e u_i u_j c - chi_c(u_i) chi_c(u_j)`.
pub fn covariance<S: Scalar>(d: &WeightedDiagram<S>) -> Result<CltReport<S>> {
    let m = d.rank();
    let coordinates = (0..m)
        .into_par_iter()
        .map(|i| {
            let e: Vec<S> = (0..m).map(|j| if i == j { S::one() } else { S::zero() }).collect();
            harmonic_decompose(d, &d.hat_form(&e)?)
        })
        .collect::<Result<Vec<_>>>()?;
    let chis: Vec<S> = coordinates.iter().map(|h| d.chi_c(&h.u)).collect();
    let conductances: Vec<S> = (0..d.edges().len()).map(|e| d.conductance(e)).collect();
    let mut sigma = Matrix::zeros(m, m);
    for i in 0..m {
        for j in i..m {
            let (ui, uj) = (&coordinates[i].u.values, &coordinates[j].u.values);
            let mut acc = S::zero();
            for (e, c) in conductances.iter().enumerate() {
                if !c.is_zero() {
                    acc = acc + ui[e].clone() * uj[e].clone() * c.clone();
                }
            }
            acc = acc - chis[i].clone() * chis[j].clone();
            sigma.set(i, j, acc.clone());
            sigma.set(j, i, acc);
        }
    }
    let spec = d.spec();
    Ok(CltReport {
        zeta: chis,
        sigma,
        transfer_projector: spec.normalized_transfer(),
        hom_onto_z: spec.has_hom_onto_z(),
        period: detect_period(d.measure(), DEFAULT_PERIOD_BOUND),
        coordinates,
    })
}

impl<S: Scalar> CltReport<S> {
    /// Machine-readable summary `{zeta, sigma, projector, hom_onto_Z, period}`.
    pub fn to_json(&self) -> Value {
        let rows = |m: &Matrix<S>| -> Vec<Vec<Value>> {
            m.to_rows().iter().map(|r| r.iter().map(Scalar::to_json).collect()).collect()
        };
        let projector: Vec<Vec<String>> = self
            .transfer_projector
            .to_rows()
            .iter()
            .map(|r| r.iter().map(format_q).collect())
            .collect();
        json!({
            "zeta": self.zeta.iter().map(Scalar::to_json).collect::<Vec<_>>(),
            "sigma": rows(&self.sigma),
            "projector": projector,
            "hom_onto_Z": self.hom_onto_z,
            "period": self.period.period,
        })
    }

    /// Sylvester's criterion on the leading principal minors.
    pub fn sigma_positive_definite(&self) -> bool {
        positive_definite(&self.sigma)
    }

    pub fn sigma_f64(&self) -> Matrix<f64> {
        self.sigma.map(Scalar::to_f64)
    }

    pub fn zeta_f64(&self) -> Vec<f64> {
        self.zeta.iter().map(Scalar::to_f64).collect()
    }
}

pub fn positive_definite<S: Scalar>(a: &Matrix<S>) -> bool {
    if !a.is_square() {
        return false;
    }
    (1..=a.rows()).all(|k| {
        let minor = Matrix::from_fn(k, k, |i, j| a.get(i, j).clone());
        minor.determinant().map(|d| d.to_f64() > 0.0).unwrap_or(false)
    })
}

/// `P(chi^2_m >= t) <= (t/m)^(m/2) exp(-(t - m)/2)` for `t > m`.
fn chi2_tail_bound(m: usize, t: f64) -> f64 {
    let m = m as f64;
    if t <= m {
        return 1.0;
    }
    ((m / 2.0) * (t / m).ln() - (t - m) / 2.0).exp()
}

pub const GAUSSIAN_TAIL: f64 = 1e-10;

/// The comparison measure `N(v, x) = pi(x) xi_{n Sigma}(v - n zeta) / Z_n` on
/// `Z^m x F`, with `Z_n` the lattice sum over the certified window.
#[derive(Debug, Clone)]
pub struct GaussianOnGroup {
    spec: Arc<GroupSpec>,
    n: u64,
    sigma: Matrix<f64>,
    zeta: Vec<f64>,
    center: Vec<f64>,
    /// Row-major inverse of `n Sigma`.
    precision: Vec<f64>,
    log_density_const: f64,
    radius: f64,
    half_widths: Vec<f64>,
    normalizer: f64,
    tail: f64,
}

impl GaussianOnGroup {
    pub fn new(spec: Arc<GroupSpec>, n: u64, sigma: &Matrix<f64>, zeta: &[f64]) -> Result<Self> {
        let m = spec.rank();
        if sigma.rows() != m || !sigma.is_square() {
            return Err(Error::DimensionMismatch { expected: m, found: sigma.rows() });
        }
        if zeta.len() != m {
            return Err(Error::DimensionMismatch { expected: m, found: zeta.len() });
        }
        if n == 0 {
            return Err(Error::OutOfRange("gaussian time must be at least 1".into()));
        }
        let cov = DMatrix::from_fn(m, m, |i, j| n as f64 * sigma.get(i, j));
        let chol = cov.clone().cholesky().ok_or(Error::NotPositiveDefinite)?;
        let inv = chol.inverse();
        let precision = (0..m * m).map(|k| inv[(k / m, k % m)]).collect();
        let log_det: f64 = chol.l().diagonal().iter().map(|d| 2.0 * d.ln()).sum();
        let log_density_const = -0.5 * (m as f64 * (2.0 * std::f64::consts::PI).ln() + log_det);
        let lambda_min = if m == 0 { 1.0 } else { cov.clone().symmetric_eigenvalues().min() };
        if lambda_min <= 0.0 {
            return Err(Error::NotPositiveDefinite);
        }
        let (radius, tail) = if m == 0 {
            (0.0, 0.0)
        } else {
            let mut t = m as f64 + 1.0;
            while chi2_tail_bound(m, t) > GAUSSIAN_TAIL {
                t += 0.25;
            }
            // Widen by half a lattice cell (in Mahalanobis units) so the lattice
            // points near the boundary are covered.
            let cell = (m as f64).sqrt() / 2.0 / lambda_min.sqrt();
            (t.sqrt() + cell, chi2_tail_bound(m, t))
        };
        let half_widths = (0..m).map(|i| radius * cov[(i, i)].sqrt()).collect();
        let center = zeta.iter().map(|z| n as f64 * z).collect();
        let mut g = Self {
            spec,
            n,
            sigma: sigma.clone(),
            zeta: zeta.to_vec(),
            center,
            precision,
            log_density_const,
            radius,
            half_widths,
            normalizer: 1.0,
            tail,
        };
        let z: f64 = g.window().map(|(_, d)| d).sum();
        if z <= 0.0 || !z.is_finite() {
            return Err(Error::Invariant("gaussian window has no mass".into()));
        }
        g.normalizer = z;
        Ok(g)
    }

    pub fn spec(&self) -> &Arc<GroupSpec> {
        &self.spec
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn sigma(&self) -> &Matrix<f64> {
        &self.sigma
    }

    pub fn zeta(&self) -> &[f64] {
        &self.zeta
    }

    pub fn normalizer(&self) -> f64 {
        self.normalizer
    }

    /// Certified bound on the mass outside the window.
    pub fn tail(&self) -> f64 {
        self.tail
    }

    fn mahalanobis2(&self, v: &[i64]) -> f64 {
        let m = v.len();
        let mut acc = 0.0;
        for i in 0..m {
            let di = v[i] as f64 - self.center[i];
            let row = &self.precision[i * m..(i + 1) * m];
            let mut t = 0.0;
            for j in 0..m {
                t += row[j] * (v[j] as f64 - self.center[j]);
            }
            acc += di * t;
        }
        acc
    }

    /// `xi_{n Sigma}(v - n zeta)`.
    pub fn density(&self, v: &[i64]) -> f64 {
        (self.log_density_const - 0.5 * self.mahalanobis2(v)).exp()
    }

    /// Lattice points of the window with their unnormalized density.
    pub fn window(&self) -> impl Iterator<Item = (Vec<i64>, f64)> + '_ {
        let lo: Vec<i64> =
            self.center.iter().zip(&self.half_widths).map(|(c, h)| (c - h).floor() as i64).collect();
        let hi: Vec<i64> =
            self.center.iter().zip(&self.half_widths).map(|(c, h)| (c + h).ceil() as i64).collect();
        let r2 = self.radius * self.radius;
        BoxIter::new(lo, hi).filter_map(move |v| {
            let q = self.mahalanobis2(&v);
            (q <= r2).then(|| {
                let d = (self.log_density_const - 0.5 * q).exp();
                (v, d)
            })
        })
    }

    /// Mass of the lattice point `v` in coset `x`.
    pub fn mass_at(&self, v: &[i64], x: usize) -> f64 {
        if x >= self.spec.order() {
            return 0.0;
        }
        self.density(v) / self.normalizer / self.spec.order() as f64
    }

    pub fn mass(&self, g: &Element) -> f64 {
        self.mass_at(&g.v, g.x)
    }

    /// Total mass on the window, one up to rounding.
    pub fn window_mass(&self) -> f64 {
        self.window().map(|(_, d)| d).sum::<f64>() / self.normalizer
    }
}

/// Odometer over the integer box `lo..=hi`.
struct BoxIter {
    lo: Vec<i64>,
    hi: Vec<i64>,
    cur: Option<Vec<i64>>,
}

impl BoxIter {
    fn new(lo: Vec<i64>, hi: Vec<i64>) -> Self {
        let cur = lo.iter().zip(&hi).all(|(a, b)| a <= b).then(|| lo.clone());
        Self { lo, hi, cur }
    }
}

impl Iterator for BoxIter {
    type Item = Vec<i64>;

    fn next(&mut self) -> Option<Vec<i64>> {
        let out = self.cur.clone()?;
        let cur = self.cur.as_mut().expect("checked");
        let mut k = cur.len();
        loop {
            if k == 0 {
                self.cur = None;
                break;
            }
            k -= 1;
            if cur[k] < self.hi[k] {
                cur[k] += 1;
                break;
            }
            cur[k] = self.lo[k];
        }
        Some(out)
    }
}

/// Lattice-coordinate covariance of a coupling on `Gamma x Gamma`.
#[derive(Debug, Clone)]
pub enum StructurePrediction<S> {
    /// Split groups: `[[S, (1-rho) P^T S P], [(1-rho) P^T S P, S]]`.
    ClosedForm(Matrix<S>),
    /// Non-split groups: only the vanishing blocks are predicted.
    ZeroPattern(ZeroPattern),
}

impl<S> StructurePrediction<S> {
    pub fn closed_form(self) -> Result<Matrix<S>> {
        match self {
            Self::ClosedForm(m) => Ok(m),
            Self::ZeroPattern(_) => Err(Error::NonSplit),
        }
    }
}

/// Predicted covariance of `pi^rho`, the coupling that reuses the step of
/// the first walk with probability `1 - rho`.
pub fn structure_prediction<S: Scalar>(mu: &FiniteMeasure, rho: &S) -> Result<StructurePrediction<S>> {
    let spec = mu.spec();
    if !spec.is_split() {
        let product = Arc::new(crate::group::product_spec(spec, spec));
        return Ok(StructurePrediction::ZeroPattern(zero_pattern(&product)?));
    }
    let d = WeightedDiagram::<S>::build(mu)?;
    let sigma = covariance(&d)?.sigma;
    let p = spec.normalized_transfer().map(S::from_q);
    let cross = p.transpose().matmul(&sigma)?.matmul(&p)?.scale(&(S::one() - rho.clone()));
    Ok(StructurePrediction::ClosedForm(Matrix::blocks(&sigma, &cross, &cross, &sigma)?))
}

/// Covariance of `pi^rho` measured through the product diagram.
pub fn measured_coupling_covariance<S: Scalar>(mu: &FiniteMeasure, rho: crate::measure::Prob) -> Result<Matrix<S>> {
    let nu = make_pi_rho(mu, rho)?;
    Ok(covariance(&WeightedDiagram::<S>::build(&nu)?)?.sigma)
}

/// A `B`-orthogonal basis of `Q^m` listing `im P` first, then `ker P`, where
/// `P` is the normalized transfer and `B` the invariant form. Columns of the
/// returned matrix are the basis vectors; the count is `dim im P`.
pub fn adapted_basis(spec: &GroupSpec) -> (Matrix<Q>, usize) {
    let m = spec.rank();
    let p = spec.normalized_transfer();
    let b = spec.invariant_form();
    let complement = Matrix::<Q>::identity(m).add(&p.scale(&Q::from_integer((-1).into()))).expect("square");
    let image: Vec<Vec<Q>> = p.independent_columns().into_iter().map(|j| p.column(j)).collect();
    let kernel: Vec<Vec<Q>> =
        complement.independent_columns().into_iter().map(|j| complement.column(j)).collect();
    let k = image.len();
    let mut basis = gram_schmidt(&b, image);
    basis.extend(gram_schmidt(&b, kernel));
    (Matrix::from_fn(m, basis.len(), |i, j| basis[j][i].clone()), k)
}

fn b_dot(b: &Matrix<Q>, x: &[Q], y: &[Q]) -> Q {
    let by = b.apply(y).expect("dimensions");
    x.iter().zip(&by).map(|(a, c)| a * c).sum()
}

fn gram_schmidt(b: &Matrix<Q>, vectors: Vec<Vec<Q>>) -> Vec<Vec<Q>> {
    let mut out: Vec<Vec<Q>> = Vec::new();
    for mut v in vectors {
        for w in &out {
            let c = b_dot(b, &v, w) / b_dot(b, w, w);
            for (vi, wi) in v.iter_mut().zip(w) {
                *vi -= &c * wi;
            }
        }
        out.push(v);
    }
    out
}

/// Blocks of a product-group covariance that must vanish: in the adapted
/// basis of each factor, every cross-factor entry involving a `ker P_i`
/// direction.
#[derive(Debug, Clone, PartialEq)]
pub struct ZeroPattern {
    /// Columns: adapted basis of factor one followed by factor two.
    pub basis: Matrix<Q>,
    pub zero_entries: Vec<(usize, usize)>,
}

pub fn zero_pattern(product: &GroupSpec) -> Result<ZeroPattern> {
    let (a, b) = product.factors().ok_or(Error::NotProduct)?;
    let (ba, ka) = adapted_basis(a);
    let (bb, kb) = adapted_basis(b);
    let (ma, mb) = (a.rank(), b.rank());
    let basis = Matrix::block_diag(&ba, &bb);
    let mut zero_entries = Vec::new();
    for i in 0..ma {
        for j in 0..mb {
            if i >= ka || j >= kb {
                zero_entries.push((i, ma + j));
                zero_entries.push((ma + j, i));
            }
        }
    }
    Ok(ZeroPattern { basis, zero_entries })
}

impl ZeroPattern {
    /// `A^T Sigma A` in the adapted basis.
    pub fn transform<S: Scalar>(&self, sigma: &Matrix<S>) -> Result<Matrix<S>> {
        let a = self.basis.map(S::from_q);
        a.transpose().matmul(sigma)?.matmul(&a)
    }

    /// Entries of the pattern that are nonzero in `sigma`.
    pub fn violations<S: Scalar>(&self, sigma: &Matrix<S>) -> Result<Vec<(usize, usize)>> {
        let t = self.transform(sigma)?;
        Ok(self.zero_entries.iter().copied().filter(|&(i, j)| !t.get(i, j).approx_eq(&S::zero())).collect())
    }
}

/// Smallest accepted gap between the two largest eigenvalue moduli.
pub const MIN_SPECTRAL_GAP: f64 = 1e-6;

/// Twisted transition matrix `L[x][y] = sum_{x^s = y} mu(s) e^{2 pi i <v, alpha(x, s)>}`.
pub fn twisted_operator<S: Scalar>(d: &WeightedDiagram<S>, v: &[f64]) -> Result<DMatrix<Complex64>> {
    if v.len() != d.rank() {
        return Err(Error::DimensionMismatch { expected: d.rank(), found: v.len() });
    }
    let n = d.order();
    let mut l = DMatrix::from_element(n, n, Complex64::new(0.0, 0.0));
    for (e, edge) in d.edges().iter().enumerate() {
        let p = d.weight(e).to_f64();
        if p == 0.0 {
            continue;
        }
        let phase: f64 = v.iter().zip(&edge.phi).map(|(a, &b)| a * b as f64).sum();
        l[(edge.origin, edge.terminus)] += Complex64::from_polar(p, 2.0 * std::f64::consts::PI * phase);
    }
    Ok(l)
}

fn eigenvalues(l: DMatrix<Complex64>) -> Vec<Complex64> {
    if l.nrows() == 1 {
        return vec![l[(0, 0)]];
    }
    let (_, t) = nalgebra::linalg::Schur::new(l).unpack();
    t.diagonal().iter().copied().collect()
}

/// `beta(v)`: principal logarithm of the dominant eigenvalue of the twisted
/// operator. Fails when the two largest moduli are within [`MIN_SPECTRAL_GAP`].
pub fn leading_exponent<S: Scalar>(d: &WeightedDiagram<S>, v: &[f64]) -> Result<Complex64> {
    let mut ev = eigenvalues(twisted_operator(d, v)?);
    ev.sort_by(|a, b| b.norm().total_cmp(&a.norm()));
    if ev.len() > 1 {
        let gap = ev[0].norm() - ev[1].norm();
        if gap < MIN_SPECTRAL_GAP {
            return Err(Error::NearDegenerate { gap });
        }
    }
    if v.iter().all(|&x| x == 0.0) {
        return Ok(Complex64::new(0.0, 0.0));
    }
    Ok(ev[0].ln())
}

pub const DIFF_STEP: f64 = 1e-4;

/// Second directional derivative of `beta` at 0 along `u`, by the five-point
/// stencil.
fn second_directional<S: Scalar>(d: &WeightedDiagram<S>, u: &[f64], h: f64) -> Result<Complex64> {
    let at = |t: f64| -> Result<Complex64> {
        let v: Vec<f64> = u.iter().map(|x| x * t).collect();
        leading_exponent(d, &v)
    };
    let (p1, m1, p2, m2) = (at(h)?, at(-h)?, at(2.0 * h)?, at(-2.0 * h)?);
    Ok((-p2 + 16.0 * p1 - 30.0 * at(0.0)? + 16.0 * m1 - m2) / (12.0 * h * h))
}

/// Finite-difference gradient of `beta` at 0; approximates `2 pi i zeta`.
pub fn exponent_gradient<S: Scalar>(d: &WeightedDiagram<S>, h: f64) -> Result<Vec<Complex64>> {
    let m = d.rank();
    (0..m)
        .map(|k| {
            let mut v = vec![0.0; m];
            let at = |t: f64, v: &mut Vec<f64>| -> Result<Complex64> {
                v[k] = t;
                leading_exponent(d, v)
            };
            let (p1, m1, p2, m2) = (at(h, &mut v)?, at(-h, &mut v)?, at(2.0 * h, &mut v)?, at(-2.0 * h, &mut v)?);
            Ok((-p2 + 8.0 * p1 - 8.0 * m1 + m2) / (12.0 * h))
        })
        .collect()
}

/// Finite-difference Hessian of `beta` at 0 (real part); approximates
/// `-4 pi^2 Sigma`. Mixed entries come from polarization.
pub fn exponent_hessian<S: Scalar>(d: &WeightedDiagram<S>, h: f64) -> Result<Matrix<f64>> {
    let m = d.rank();
    let unit = |k: usize| -> Vec<f64> { (0..m).map(|i| if i == k { 1.0 } else { 0.0 }).collect() };
    let mut hess = Matrix::zeros(m, m);
    for k in 0..m {
        hess.set(k, k, second_directional(d, &unit(k), h)?.re);
        for l in 0..k {
            let plus: Vec<f64> = unit(k).iter().zip(unit(l)).map(|(a, b)| a + b).collect();
            let minus: Vec<f64> = unit(k).iter().zip(unit(l)).map(|(a, b)| a - b).collect();
            let v = (second_directional(d, &plus, h)?.re - second_directional(d, &minus, h)?.re) / 4.0;
            hess.set(k, l, v);
            hess.set(l, k, v);
        }
    }
    Ok(hess)
}
