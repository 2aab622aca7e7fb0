//! Dense linear algebra for the small (d <= a handful) systems that appear in
//! Newton steps and sandwich matrices.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub type Matrix<T> = Vec<Vec<T>>;

/// Solves `a x = b` by Gaussian elimination with partial pivoting.
pub fn solve<T: Scalar>(a: &[Vec<T>], b: &[T]) -> Result<Vec<T>> {
    let n = b.len();
    if a.len() != n || a.iter().any(|r| r.len() != n) {
        return Err(Error::LengthMismatch { what: "linear system", expected: n, got: a.len() });
    }
    let scale = a.iter().flatten().fold(T::zero(), |m, v| m.max(v.abs()));
    if scale == T::zero() || !scale.is_finite() {
        return Err(Error::SingularMatrix);
    }
    let tiny = scale * T::epsilon() * T::from_usize_lossy(n.max(1)) * T::lit(16.0);
    let mut m: Vec<Vec<T>> = a.iter().zip(b).map(|(r, &bi)| {
        let mut row = r.clone();
        row.push(bi);
        row
    }).collect();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| m[i][col].abs().partial_cmp(&m[j][col].abs()).unwrap_or(std::cmp::Ordering::Equal))
            .unwrap_or(col);
        if m[pivot][col].abs() <= tiny {
            return Err(Error::SingularMatrix);
        }
        m.swap(col, pivot);
        for row in (col + 1)..n {
            let f = m[row][col] / m[col][col];
            if f == T::zero() {
                continue;
            }
            for k in col..=n {
                let v = m[col][k];
                m[row][k] = m[row][k] - f * v;
            }
        }
    }
    let mut x = vec![T::zero(); n];
    for i in (0..n).rev() {
        let mut s = m[i][n];
        for k in (i + 1)..n {
            s = s - m[i][k] * x[k];
        }
        x[i] = s / m[i][i];
    }
    Ok(x)
}

pub fn inverse<T: Scalar>(a: &[Vec<T>]) -> Result<Matrix<T>> {
    let n = a.len();
    let mut cols = Vec::with_capacity(n);
    for j in 0..n {
        let mut e = vec![T::zero(); n];
        e[j] = T::one();
        cols.push(solve(a, &e)?);
    }
    Ok((0..n).map(|i| (0..n).map(|j| cols[j][i]).collect()).collect())
}

pub fn matmul<T: Scalar>(a: &[Vec<T>], b: &[Vec<T>]) -> Matrix<T> {
    let inner = b.len();
    let cols = b.first().map_or(0, |r| r.len());
    a.iter()
        .map(|row| (0..cols).map(|j| (0..inner).map(|k| row[k] * b[k][j]).sum()).collect())
        .collect()
}

pub fn trace<T: Scalar>(a: &[Vec<T>]) -> T {
    a.iter().enumerate().map(|(i, r)| r[i]).sum()
}

pub fn norm2<T: Scalar>(v: &[T]) -> T {
    v.iter().map(|&x| x * x).sum::<T>().sqrt()
}

pub fn is_symmetric<T: Scalar>(a: &[Vec<T>], tol: T) -> bool {
    (0..a.len()).all(|i| (0..i).all(|j| (a[i][j] - a[j][i]).abs() <= tol * (T::one() + a[i][j].abs())))
}
