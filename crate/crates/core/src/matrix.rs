//! Small dense matrices and Gaussian elimination over a [`Scalar`] field.

use std::ops::{Add, Mul, Sub};

use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Clone> Matrix<T> {
    pub fn from_rows(rows: Vec<Vec<T>>) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            if row.len() != c {
                return Err(Error::DimensionMismatch { expected: c, found: row.len() });
            }
            data.extend(row);
        }
        Ok(Self { rows: r, cols: c, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> &T {
        &self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, value: T) {
        self.data[i * self.cols + j] = value;
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn to_rows(&self) -> Vec<Vec<T>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn column(&self, j: usize) -> Vec<T> {
        (0..self.rows).map(|i| self.get(i, j).clone()).collect()
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self.get(j, i).clone())
    }

    pub fn map<U: Clone>(&self, f: impl Fn(&T) -> U) -> Matrix<U> {
        Matrix { rows: self.rows, cols: self.cols, data: self.data.iter().map(f).collect() }
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }
}

impl<T> Matrix<T>
where
    T: Clone + Zero + One + Add<Output = T> + Mul<Output = T> + Sub<Output = T>,
{
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::from_fn(rows, cols, |_, _| T::zero())
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, n, |i, j| if i == j { T::one() } else { T::zero() })
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.cols != other.rows {
            return Err(Error::DimensionMismatch { expected: self.cols, found: other.rows });
        }
        Ok(Self::from_fn(self.rows, other.cols, |i, j| {
            (0..self.cols).fold(T::zero(), |acc, k| {
                acc + self.get(i, k).clone() * other.get(k, j).clone()
            })
        }))
    }

    pub fn apply(&self, v: &[T]) -> Result<Vec<T>> {
        if v.len() != self.cols {
            return Err(Error::DimensionMismatch { expected: self.cols, found: v.len() });
        }
        Ok((0..self.rows)
            .map(|i| {
                self.row(i)
                    .iter()
                    .zip(v)
                    .fold(T::zero(), |acc, (a, b)| acc + a.clone() * b.clone())
            })
            .collect())
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::DimensionMismatch {
                expected: self.rows * self.cols,
                found: other.rows * other.cols,
            });
        }
        Ok(Self::from_fn(self.rows, self.cols, |i, j| {
            self.get(i, j).clone() + other.get(i, j).clone()
        }))
    }

    pub fn scale(&self, c: &T) -> Self {
        self.map(|x| c.clone() * x.clone())
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(Zero::is_zero)
    }

    /// Block-diagonal matrix `diag(a, b)`.
    pub fn block_diag(a: &Self, b: &Self) -> Self {
        Self::from_fn(a.rows + b.rows, a.cols + b.cols, |i, j| {
            if i < a.rows && j < a.cols {
                a.get(i, j).clone()
            } else if i >= a.rows && j >= a.cols {
                b.get(i - a.rows, j - a.cols).clone()
            } else {
                T::zero()
            }
        })
    }

    /// Assemble `[[a, b], [c, d]]` from four blocks.
    pub fn blocks(a: &Self, b: &Self, c: &Self, d: &Self) -> Result<Self> {
        if a.rows != b.rows || c.rows != d.rows || a.cols != c.cols || b.cols != d.cols {
            return Err(Error::DimensionMismatch { expected: a.rows, found: b.rows });
        }
        Ok(Self::from_fn(a.rows + c.rows, a.cols + b.cols, |i, j| {
            match (i < a.rows, j < a.cols) {
                (true, true) => a.get(i, j).clone(),
                (true, false) => b.get(i, j - a.cols).clone(),
                (false, true) => c.get(i - a.rows, j).clone(),
                (false, false) => d.get(i - a.rows, j - a.cols).clone(),
            }
        }))
    }
}

impl<S: Scalar> Matrix<S> {
    /// Row-echelon reduction in place; returns pivot columns and the sign of the
    /// row permutation.
    fn eliminate(&mut self) -> (Vec<usize>, bool) {
        let mut pivots = Vec::new();
        let mut flipped = false;
        let mut r = 0;
        for c in 0..self.cols {
            if r == self.rows {
                break;
            }
            let best = (r..self.rows)
                .map(|i| (i, self.get(i, c).pivot_score()))
                .filter(|(_, s)| *s > 0.0)
                .fold(None::<(usize, f64)>, |acc, cand| match acc {
                    Some(a) if a.1 >= cand.1 => Some(a),
                    _ => Some(cand),
                });
            let Some((p, _)) = best else { continue };
            if p != r {
                for j in 0..self.cols {
                    self.data.swap(r * self.cols + j, p * self.cols + j);
                }
                flipped = !flipped;
            }
            let pivot = self.get(r, c).clone();
            for i in r + 1..self.rows {
                let factor = self.get(i, c).clone() / pivot.clone();
                if factor.is_zero() {
                    continue;
                }
                for j in c..self.cols {
                    let v = self.get(i, j).clone() - factor.clone() * self.get(r, j).clone();
                    self.set(i, j, v);
                }
                if !S::EXACT {
                    self.set(i, c, S::zero());
                }
            }
            pivots.push(c);
            r += 1;
        }
        (pivots, flipped)
    }

    pub fn rank(&self) -> usize {
        let mut m = self.clone();
        m.eliminate().0.len()
    }

    pub fn determinant(&self) -> Result<S> {
        if !self.is_square() {
            return Err(Error::DimensionMismatch { expected: self.rows, found: self.cols });
        }
        let mut m = self.clone();
        let (pivots, flipped) = m.eliminate();
        if pivots.len() < self.rows {
            return Ok(S::zero());
        }
        let mut det = S::one();
        for i in 0..self.rows {
            det = det * m.get(i, i).clone();
        }
        Ok(if flipped { -det } else { det })
    }

    /// Solve `self * x = b` for square nonsingular `self`.
    pub fn solve(&self, b: &[S]) -> Result<Vec<S>> {
        let n = self.rows;
        if !self.is_square() {
            return Err(Error::DimensionMismatch { expected: n, found: self.cols });
        }
        if b.len() != n {
            return Err(Error::DimensionMismatch { expected: n, found: b.len() });
        }
        let mut aug = Matrix::from_fn(n, n + 1, |i, j| {
            if j < n {
                self.get(i, j).clone()
            } else {
                b[i].clone()
            }
        });
        let (pivots, _) = aug.eliminate();
        if pivots.len() < n || pivots.iter().enumerate().any(|(i, &c)| c != i) {
            return Err(Error::Singular);
        }
        let mut x = vec![S::zero(); n];
        for i in (0..n).rev() {
            let mut acc = aug.get(i, n).clone();
            for j in i + 1..n {
                acc = acc - aug.get(i, j).clone() * x[j].clone();
            }
            x[i] = acc / aug.get(i, i).clone();
        }
        Ok(x)
    }

    pub fn inverse(&self) -> Result<Self> {
        let n = self.rows;
        let mut cols = Vec::with_capacity(n);
        for j in 0..n {
            let e: Vec<S> = (0..n).map(|i| if i == j { S::one() } else { S::zero() }).collect();
            cols.push(self.solve(&e)?);
        }
        Ok(Self::from_fn(n, n, |i, j| cols[j][i].clone()))
    }

    /// Indices of a maximal linearly independent set of columns.
    pub fn independent_columns(&self) -> Vec<usize> {
        let mut m = self.clone();
        m.eliminate().0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::{q, qi, Q};

    fn qm(rows: &[&[i64]]) -> Matrix<Q> {
        Matrix::from_rows(rows.iter().map(|r| r.iter().map(|&x| qi(x)).collect()).collect())
            .unwrap()
    }

    #[test]
    fn exact_solve_and_inverse() {
        let a = qm(&[&[2, 1], &[1, 3]]);
        let x = a.solve(&[qi(3), qi(5)]).unwrap();
        assert_eq!(x, vec![q(4, 5), q(7, 5)]);
        let inv = a.inverse().unwrap();
        assert_eq!(a.matmul(&inv).unwrap(), Matrix::identity(2));
    }

    #[test]
    fn singular_is_reported() {
        let a = qm(&[&[1, 2], &[2, 4]]);
        assert_eq!(a.solve(&[qi(1), qi(1)]), Err(Error::Singular));
        assert_eq!(a.rank(), 1);
        assert_eq!(a.determinant().unwrap(), qi(0));
    }

    #[test]
    fn determinant_tracks_row_swaps() {
        let a = qm(&[&[0, 1], &[1, 0]]);
        assert_eq!(a.determinant().unwrap(), qi(-1));
        let r = qm(&[&[0, -1], &[1, -1]]);
        assert_eq!(r.determinant().unwrap(), qi(1));
    }

    #[test]
    fn float_partial_pivoting() {
        let a = Matrix::from_rows(vec![vec![1e-18, 1.0], vec![1.0, 1.0]]).unwrap();
        let x = a.solve(&[1.0, 2.0]).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-12 && (x[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn blocks_assemble() {
        let a = qm(&[&[1]]);
        let z = qm(&[&[0]]);
        let m = Matrix::blocks(&a, &z, &z, &a).unwrap();
        assert_eq!(m, Matrix::identity(2));
        assert_eq!(Matrix::block_diag(&a, &a), Matrix::identity(2));
    }
}
