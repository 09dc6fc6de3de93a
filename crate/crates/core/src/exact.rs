//! Exact linear algebra: fraction-free (Bareiss) elimination over the integers
//! and Gauss-Jordan elimination over arbitrary-precision rationals.
//!
//! Nothing here touches floating point except the explicit conversions at the
//! edges ([`RatMatrix::from_f64`], [`RatMatrix::to_f64`]).

use std::fmt;

use nalgebra::DMatrix;
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExactError {
    #[error("matrix is singular")]
    Singular,
    #[error("integer overflow during fraction-free elimination")]
    Overflow,
    #[error("quotient is not integral")]
    NotIntegral,
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("value {0} is not finite")]
    NotFinite(f64),
}

/// Dense row-major integer matrix.
#[derive(Clone, PartialEq, Eq)]
pub struct IntMatrix {
    rows: usize,
    cols: usize,
    data: Vec<i64>,
}

impl fmt::Debug for IntMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.to_rows()).finish()
    }
}

impl IntMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        IntMatrix {
            rows,
            cols,
            data: vec![0; rows * cols],
        }
    }

    pub fn from_rows<R: AsRef<[i64]>>(rows: &[R]) -> Self {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut m = IntMatrix::zeros(rows.len(), cols);
        for (i, r) in rows.iter().enumerate() {
            assert_eq!(r.as_ref().len(), cols, "ragged rows");
            m.data[i * cols..(i + 1) * cols].copy_from_slice(r.as_ref());
        }
        m
    }

    pub fn nrows(&self) -> usize {
        self.rows
    }

    pub fn ncols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> i64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: i64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[i64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn to_rows(&self) -> Vec<Vec<i64>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn transpose(&self) -> IntMatrix {
        let mut t = IntMatrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.set(j, i, self.get(i, j));
            }
        }
        t
    }

    /// Submatrix picking the given rows and columns, in the given order.
    pub fn select(&self, rows: &[usize], cols: &[usize]) -> IntMatrix {
        let mut s = IntMatrix::zeros(rows.len(), cols.len());
        for (a, &i) in rows.iter().enumerate() {
            for (b, &j) in cols.iter().enumerate() {
                s.set(a, b, self.get(i, j));
            }
        }
        s
    }

    pub fn neg(&self) -> IntMatrix {
        IntMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| -v).collect(),
        }
    }

    pub fn to_f64(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.rows, self.cols, |i, j| self.get(i, j) as f64)
    }

    /// Exact rank by fraction-free elimination.
    pub fn rank(&self) -> Result<usize, ExactError> {
        let mut work: Vec<Vec<i128>> = (0..self.rows)
            .map(|i| self.row(i).iter().map(|&v| v as i128).collect())
            .collect();
        let (rank, _) = bareiss_forward(&mut work, self.cols)?;
        Ok(rank)
    }

    /// Exact determinant of a square matrix.
    pub fn det(&self) -> Result<i64, ExactError> {
        if self.rows != self.cols {
            return Err(ExactError::Dimension("determinant of non-square matrix".into()));
        }
        if self.rows == 0 {
            return Ok(1);
        }
        let mut work: Vec<Vec<i128>> = (0..self.rows)
            .map(|i| self.row(i).iter().map(|&v| v as i128).collect())
            .collect();
        let (rank, sign) = bareiss_forward(&mut work, self.cols)?;
        if rank < self.rows {
            return Ok(0);
        }
        let d = work[self.rows - 1][self.cols - 1] * sign as i128;
        i64::try_from(d).map_err(|_| ExactError::Overflow)
    }

    /// Exact `self * divisor^{-1}` for a square nonsingular `divisor`, returning an
    /// error if the divisor is singular or the result is not integral.
    pub fn right_divide(&self, divisor: &IntMatrix) -> Result<IntMatrix, ExactError> {
        let k = divisor.rows;
        if divisor.cols != k || self.cols != k {
            return Err(ExactError::Dimension(format!(
                "{}x{} / {}x{}",
                self.rows, self.cols, divisor.rows, divisor.cols
            )));
        }
        // X * D = B  <=>  D^T X^T = B^T; eliminate [D^T | B^T].
        let r = self.rows;
        let mut aug: Vec<Vec<i128>> = (0..k)
            .map(|i| {
                let mut row: Vec<i128> = (0..k).map(|j| divisor.get(j, i) as i128).collect();
                row.extend((0..r).map(|j| self.get(j, i) as i128));
                row
            })
            .collect();
        let scale = bareiss_gauss_jordan(&mut aug, k)?;
        let mut x = IntMatrix::zeros(r, k);
        for i in 0..k {
            for j in 0..r {
                let num = aug[i][k + j];
                if num % scale != 0 {
                    return Err(ExactError::NotIntegral);
                }
                let q = i64::try_from(num / scale).map_err(|_| ExactError::Overflow)?;
                x.set(j, i, q);
            }
        }
        Ok(x)
    }
}

/// Fraction-free forward elimination with row pivoting. Returns the rank and the
/// sign of the row permutation; on full rank the last pivot is the determinant
/// (times that sign).
fn bareiss_forward(m: &mut [Vec<i128>], cols: usize) -> Result<(usize, i64), ExactError> {
    let rows = m.len();
    let mut prev: i128 = 1;
    let mut rank = 0;
    let mut sign = 1;
    for col in 0..cols {
        if rank == rows {
            break;
        }
        let Some(p) = (rank..rows).find(|&i| m[i][col] != 0) else {
            continue;
        };
        if p != rank {
            m.swap(p, rank);
            sign = -sign;
        }
        let pivot = m[rank][col];
        for i in rank + 1..rows {
            let lead = m[i][col];
            for j in col..cols {
                let v = pivot
                    .checked_mul(m[i][j])
                    .and_then(|a| lead.checked_mul(m[rank][j]).and_then(|b| a.checked_sub(b)))
                    .ok_or(ExactError::Overflow)?;
                m[i][j] = v / prev;
            }
        }
        prev = pivot;
        rank += 1;
    }
    Ok((rank, sign))
}

/// Fraction-free Gauss-Jordan on a `k x (k + r)` augmented matrix. On return the
/// left block is `s * I` and the right block is `s` times the solution, where `s`
/// (the returned scale) is the last pivot.
fn bareiss_gauss_jordan(m: &mut [Vec<i128>], k: usize) -> Result<i128, ExactError> {
    let width = m.first().map_or(0, Vec::len);
    let mut prev: i128 = 1;
    for col in 0..k {
        let p = (col..k).find(|&i| m[i][col] != 0).ok_or(ExactError::Singular)?;
        m.swap(p, col);
        let pivot = m[col][col];
        for i in 0..k {
            if i == col {
                continue;
            }
            let lead = m[i][col];
            for j in 0..width {
                if j == col {
                    continue;
                }
                let v = pivot
                    .checked_mul(m[i][j])
                    .and_then(|a| lead.checked_mul(m[col][j]).and_then(|b| a.checked_sub(b)))
                    .ok_or(ExactError::Overflow)?;
                m[i][j] = v / prev;
            }
            m[i][col] = 0;
        }
        prev = pivot;
    }
    Ok(if k == 0 { 1 } else { prev })
}

/// Dense row-major matrix of arbitrary-precision rationals.
#[derive(Clone, PartialEq)]
pub struct RatMatrix {
    rows: usize,
    cols: usize,
    data: Vec<BigRational>,
}

impl fmt::Debug for RatMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let rows: Vec<Vec<String>> = (0..self.rows)
            .map(|i| (0..self.cols).map(|j| self.get(i, j).to_string()).collect())
            .collect();
        f.debug_list().entries(rows).finish()
    }
}

/// Exact rational value of a finite double.
pub fn rational(x: f64) -> Result<BigRational, ExactError> {
    BigRational::from_float(x).ok_or(ExactError::NotFinite(x))
}

pub fn rat_int(v: i64) -> BigRational {
    BigRational::from_integer(BigInt::from(v))
}

impl RatMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        RatMatrix {
            rows,
            cols,
            data: vec![BigRational::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = RatMatrix::zeros(n, n);
        for i in 0..n {
            m.set(i, i, BigRational::one());
        }
        m
    }

    pub fn from_int(m: &IntMatrix) -> Self {
        let mut r = RatMatrix::zeros(m.nrows(), m.ncols());
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                r.set(i, j, rat_int(m.get(i, j)));
            }
        }
        r
    }

    pub fn from_f64(m: &DMatrix<f64>) -> Result<Self, ExactError> {
        let mut r = RatMatrix::zeros(m.nrows(), m.ncols());
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                r.set(i, j, rational(m[(i, j)])?);
            }
        }
        Ok(r)
    }

    pub fn to_f64(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.rows, self.cols, |i, j| {
            self.get(i, j).to_f64().unwrap_or(f64::NAN)
        })
    }

    pub fn nrows(&self) -> usize {
        self.rows
    }

    pub fn ncols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> &BigRational {
        &self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: BigRational) {
        self.data[i * self.cols + j] = v;
    }

    pub fn select(&self, rows: &[usize], cols: &[usize]) -> RatMatrix {
        let mut s = RatMatrix::zeros(rows.len(), cols.len());
        for (a, &i) in rows.iter().enumerate() {
            for (b, &j) in cols.iter().enumerate() {
                s.set(a, b, self.get(i, j).clone());
            }
        }
        s
    }

    pub fn transpose(&self) -> RatMatrix {
        let mut t = RatMatrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.set(j, i, self.get(i, j).clone());
            }
        }
        t
    }

    pub fn mul(&self, other: &RatMatrix) -> Result<RatMatrix, ExactError> {
        if self.cols != other.rows {
            return Err(ExactError::Dimension(format!(
                "{}x{} * {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = RatMatrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a.is_zero() {
                    continue;
                }
                for j in 0..other.cols {
                    let b = other.get(k, j);
                    if !b.is_zero() {
                        let idx = i * out.cols + j;
                        out.data[idx] += a * b;
                    }
                }
            }
        }
        Ok(out)
    }

    pub fn scale(&self, s: &BigRational) -> RatMatrix {
        RatMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    pub fn add(&self, other: &RatMatrix) -> RatMatrix {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        RatMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect(),
        }
    }

    /// Stacks `self` above `other`.
    pub fn vstack(&self, other: &RatMatrix) -> RatMatrix {
        assert_eq!(self.cols, other.cols);
        let mut data = self.data.clone();
        data.extend(other.data.iter().cloned());
        RatMatrix {
            rows: self.rows + other.rows,
            cols: self.cols,
            data,
        }
    }

    /// Places `other` to the right of `self`.
    pub fn hstack(&self, other: &RatMatrix) -> RatMatrix {
        assert_eq!(self.rows, other.rows);
        let mut out = RatMatrix::zeros(self.rows, self.cols + other.cols);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.set(i, j, self.get(i, j).clone());
            }
            for j in 0..other.cols {
                out.set(i, self.cols + j, other.get(i, j).clone());
            }
        }
        out
    }

    fn swap_rows(&mut self, a: usize, b: usize) {
        if a == b {
            return;
        }
        for j in 0..self.cols {
            self.data.swap(a * self.cols + j, b * self.cols + j);
        }
    }

    /// Reduces the leading `pivot_cols` columns to reduced row echelon form,
    /// applying the same row operations to every column. Returns the pivot columns.
    pub fn rref(&mut self, pivot_cols: usize) -> Vec<usize> {
        let mut pivots = Vec::new();
        let mut r = 0;
        for c in 0..pivot_cols.min(self.cols) {
            if r == self.rows {
                break;
            }
            let Some(p) = (r..self.rows).find(|&i| !self.get(i, c).is_zero()) else {
                continue;
            };
            self.swap_rows(p, r);
            let inv = self.get(r, c).recip();
            for j in 0..self.cols {
                let v = self.get(r, j) * &inv;
                self.set(r, j, v);
            }
            for i in 0..self.rows {
                if i == r {
                    continue;
                }
                let f = self.get(i, c).clone();
                if f.is_zero() {
                    continue;
                }
                for j in 0..self.cols {
                    let pv = self.get(r, j);
                    if pv.is_zero() {
                        continue;
                    }
                    let v = self.get(i, j) - &f * pv;
                    self.set(i, j, v);
                }
            }
            pivots.push(c);
            r += 1;
        }
        pivots
    }

    pub fn rank(&self) -> usize {
        let mut w = self.clone();
        w.rref(self.cols).len()
    }

    pub fn inverse(&self) -> Result<RatMatrix, ExactError> {
        if self.rows != self.cols {
            return Err(ExactError::Dimension("inverse of non-square matrix".into()));
        }
        let n = self.rows;
        let mut aug = self.hstack(&RatMatrix::identity(n));
        if aug.rref(n).len() < n {
            return Err(ExactError::Singular);
        }
        Ok(aug.select(&(0..n).collect::<Vec<_>>(), &(n..2 * n).collect::<Vec<_>>()))
    }

    pub fn is_zero_row(&self, i: usize, cols: std::ops::Range<usize>) -> bool {
        cols.into_iter().all(|j| self.get(i, j).is_zero())
    }

    pub fn max_abs(&self) -> BigRational {
        self.data
            .iter()
            .map(|v| v.abs())
            .max()
            .unwrap_or_else(BigRational::zero)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integer_rank_and_det() {
        let a = IntMatrix::from_rows(&[[1, -1, 0], [0, 1, -1], [1, 0, -1]]);
        assert_eq!(a.rank().unwrap(), 2);
        assert_eq!(a.det().unwrap(), 0);
        let b = IntMatrix::from_rows(&[[2, 1, 0], [1, 3, 1], [0, 1, 4]]);
        assert_eq!(b.det().unwrap(), 18);
        assert_eq!(b.rank().unwrap(), 3);
        let p = IntMatrix::from_rows(&[[0, 1], [1, 0]]);
        assert_eq!(p.det().unwrap(), -1);
        assert_eq!(IntMatrix::zeros(0, 0).det().unwrap(), 1);
    }

    #[test]
    fn right_divide_solves_exactly() {
        let d = IntMatrix::from_rows(&[[2, 1], [1, 1]]);
        let x = IntMatrix::from_rows(&[[3, -2], [0, 5], [1, 1]]);
        let mut b = IntMatrix::zeros(3, 2);
        for i in 0..3 {
            for j in 0..2 {
                b.set(i, j, (0..2).map(|k| x.get(i, k) * d.get(k, j)).sum());
            }
        }
        assert_eq!(b.right_divide(&d).unwrap(), x);
        let singular = IntMatrix::from_rows(&[[1, 1], [1, 1]]);
        assert_eq!(b.right_divide(&singular), Err(ExactError::Singular));
        let two = IntMatrix::from_rows(&[[2]]);
        assert_eq!(
            IntMatrix::from_rows(&[[1]]).right_divide(&two),
            Err(ExactError::NotIntegral)
        );
    }

    #[test]
    fn rational_inverse_round_trips() {
        let m = RatMatrix::from_f64(&DMatrix::from_row_slice(
            3,
            3,
            &[0.5, 0.25, 0.0, 1.0, 3.0, -2.0, 0.1, 0.0, 7.0],
        ))
        .unwrap();
        let inv = m.inverse().unwrap();
        assert_eq!(m.mul(&inv).unwrap(), RatMatrix::identity(3));
        assert_eq!(m.rank(), 3);
        let singular = RatMatrix::from_int(&IntMatrix::from_rows(&[[1, 2], [2, 4]]));
        assert!(singular.inverse().is_err());
        assert_eq!(singular.rank(), 1);
    }

    #[test]
    fn from_f64_is_exact() {
        let r = rational(0.1).unwrap();
        assert_ne!(r, BigRational::new(1.into(), 10.into()));
        assert_eq!(r.to_f64().unwrap(), 0.1);
        assert!(rational(f64::NAN).is_err());
    }
}
