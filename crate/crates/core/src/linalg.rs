//! Small dense matrices.
//!
//! Everything here is sized for the per-eigenmode 2×2 blocks used by the
//! exact Gaussian propagation and for the dense fallback (n ≤ 64) used by
//! the verifiers. Storage is row-major and stays inline up to 2×2.

use std::ops::{Index, IndexMut};

use smallvec::SmallVec;

use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Clone, Debug, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: SmallVec<[T; 4]>,
}

impl<T: Real> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: SmallVec::from_elem(T::zero(), rows * cols) }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_diag(&vec![T::one(); n])
    }

    pub fn from_diag(diag: &[T]) -> Self {
        let n = diag.len();
        let mut m = Self::zeros(n, n);
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = d;
        }
        m
    }

    /// Builds a matrix from row slices. Panics on ragged input.
    pub fn from_rows(rows: &[&[T]]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        let mut data = SmallVec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c, "ragged rows");
            data.extend_from_slice(row);
        }
        Self { rows: r, cols: c, data }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = SmallVec::with_capacity(rows * cols);
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

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.cols != other.rows {
            return Err(Error::DimensionMismatch { expected: self.cols, found: other.rows });
        }
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == T::zero() {
                    continue;
                }
                for j in 0..other.cols {
                    out[(i, j)] = out[(i, j)] + a * other[(k, j)];
                }
            }
        }
        Ok(out)
    }

    pub fn mul_vec(&self, v: &[T]) -> Result<Vec<T>> {
        if self.cols != v.len() {
            return Err(Error::DimensionMismatch { expected: self.cols, found: v.len() });
        }
        Ok((0..self.rows)
            .map(|i| (0..self.cols).map(|j| self[(i, j)] * v[j]).sum())
            .collect())
    }

    fn zip_with(&self, other: &Self, f: impl Fn(T, T) -> T) -> Result<Self> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::DimensionMismatch {
                expected: self.rows * self.cols,
                found: other.rows * other.cols,
            });
        }
        let data = self.data.iter().zip(other.data.iter()).map(|(&a, &b)| f(a, b)).collect();
        Ok(Self { rows: self.rows, cols: self.cols, data })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn scale(&self, s: T) -> Self {
        Self { rows: self.rows, cols: self.cols, data: self.data.iter().map(|&a| a * s).collect() }
    }

    pub fn trace(&self) -> T {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    pub fn frobenius_norm(&self) -> T {
        self.data.iter().map(|&a| a * a).sum::<T>().sqrt()
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, &a| m.max(a.abs()))
    }

    pub fn is_symmetric(&self, tol: T) -> bool {
        self.is_square()
            && (0..self.rows).all(|i| (0..i).all(|j| (self[(i, j)] - self[(j, i)]).abs() <= tol))
    }

    pub fn is_skew_symmetric(&self, tol: T) -> bool {
        self.is_square()
            && (0..self.rows).all(|i| (0..=i).all(|j| (self[(i, j)] + self[(j, i)]).abs() <= tol))
    }

    /// `(A + Aᵀ) / 2`
    pub fn symmetrized(&self) -> Self {
        let half = T::lit(0.5);
        Self::from_fn(self.rows, self.cols, |i, j| half * (self[(i, j)] + self[(j, i)]))
    }

    /// Principal submatrix on the given index set.
    pub fn submatrix(&self, idx: &[usize]) -> Self {
        Self::from_fn(idx.len(), idx.len(), |i, j| self[(idx[i], idx[j])])
    }

    /// Symmetric eigendecomposition by cyclic Jacobi rotations.
    /// Returns eigenvalues in ascending order and the eigenvectors as columns.
    pub fn sym_eigen(&self) -> Result<(Vec<T>, Matrix<T>)> {
        if !self.is_square() {
            return Err(Error::invalid("eigendecomposition of a non-square matrix"));
        }
        let n = self.rows;
        let mut a = self.symmetrized();
        let mut v = Self::identity(n);
        let scale = a.frobenius_norm();
        if scale > T::zero() {
            for _sweep in 0..100 {
                let off: T = (0..n)
                    .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
                    .map(|(i, j)| a[(i, j)] * a[(i, j)])
                    .sum();
                if off.sqrt() <= T::epsilon() * T::lit(1e-2) * scale {
                    break;
                }
                for p in 0..n {
                    for q in (p + 1)..n {
                        let apq = a[(p, q)];
                        if apq == T::zero() {
                            continue;
                        }
                        let theta = (a[(q, q)] - a[(p, p)]) / (T::lit(2.0) * apq);
                        let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
                        let c = T::one() / (t * t + T::one()).sqrt();
                        let s = t * c;
                        for k in 0..n {
                            let akp = a[(k, p)];
                            let akq = a[(k, q)];
                            a[(k, p)] = c * akp - s * akq;
                            a[(k, q)] = s * akp + c * akq;
                        }
                        for k in 0..n {
                            let apk = a[(p, k)];
                            let aqk = a[(q, k)];
                            a[(p, k)] = c * apk - s * aqk;
                            a[(q, k)] = s * apk + c * aqk;
                        }
                        for k in 0..n {
                            let vkp = v[(k, p)];
                            let vkq = v[(k, q)];
                            v[(k, p)] = c * vkp - s * vkq;
                            v[(k, q)] = s * vkp + c * vkq;
                        }
                    }
                }
            }
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&i, &j| a[(i, i)].partial_cmp(&a[(j, j)]).unwrap_or(std::cmp::Ordering::Equal));
        let values = order.iter().map(|&i| a[(i, i)]).collect();
        let vectors = Self::from_fn(n, n, |r, c| v[(r, order[c])]);
        Ok((values, vectors))
    }

    pub fn min_eigenvalue(&self) -> Result<T> {
        let (vals, _) = self.sym_eigen()?;
        Ok(vals.first().copied().unwrap_or_else(T::zero))
    }

    /// Lower Cholesky factor of a symmetric positive definite matrix.
    pub fn cholesky(&self) -> Result<Self> {
        if !self.is_square() {
            return Err(Error::invalid("cholesky of a non-square matrix"));
        }
        let n = self.rows;
        let mut l = Self::zeros(n, n);
        for j in 0..n {
            let mut d = self[(j, j)];
            for k in 0..j {
                d = d - l[(j, k)] * l[(j, k)];
            }
            if !(d > T::zero()) {
                return Err(Error::Singular(format!("non-positive pivot {d} at {j}")));
            }
            let djj = d.sqrt();
            l[(j, j)] = djj;
            for i in (j + 1)..n {
                let mut s = self[(i, j)];
                for k in 0..j {
                    s = s - l[(i, k)] * l[(j, k)];
                }
                l[(i, j)] = s / djj;
            }
        }
        Ok(l)
    }

    /// `ln det` of a symmetric positive definite matrix.
    pub fn log_det_spd(&self) -> Result<T> {
        let l = self.cholesky()?;
        Ok((0..self.rows).map(|i| l[(i, i)].ln()).sum::<T>() * T::lit(2.0))
    }

    /// Solves `A X = B` by LU with partial pivoting.
    pub fn solve(&self, b: &Self) -> Result<Self> {
        if !self.is_square() || self.rows != b.rows {
            return Err(Error::DimensionMismatch { expected: self.rows, found: b.rows });
        }
        let n = self.rows;
        let mut a = self.clone();
        let mut x = b.clone();
        let scale = a.max_abs();
        for col in 0..n {
            let pivot = (col..n)
                .max_by(|&i, &j| a[(i, col)].abs().partial_cmp(&a[(j, col)].abs()).unwrap_or(std::cmp::Ordering::Equal))
                .unwrap_or(col);
            if a[(pivot, col)].abs() <= T::epsilon() * scale * T::lit(1e-3) || a[(pivot, col)] == T::zero() {
                return Err(Error::Singular(format!("zero pivot in column {col}")));
            }
            if pivot != col {
                for j in 0..n {
                    let tmp = a[(col, j)];
                    a[(col, j)] = a[(pivot, j)];
                    a[(pivot, j)] = tmp;
                }
                for j in 0..x.cols {
                    let tmp = x[(col, j)];
                    x[(col, j)] = x[(pivot, j)];
                    x[(pivot, j)] = tmp;
                }
            }
            for i in (col + 1)..n {
                let f = a[(i, col)] / a[(col, col)];
                if f == T::zero() {
                    continue;
                }
                for j in col..n {
                    a[(i, j)] = a[(i, j)] - f * a[(col, j)];
                }
                for j in 0..x.cols {
                    x[(i, j)] = x[(i, j)] - f * x[(col, j)];
                }
            }
        }
        for j in 0..x.cols {
            for i in (0..n).rev() {
                let mut s = x[(i, j)];
                for k in (i + 1)..n {
                    s = s - a[(i, k)] * x[(k, j)];
                }
                x[(i, j)] = s / a[(i, i)];
            }
        }
        Ok(x)
    }

    pub fn inverse(&self) -> Result<Self> {
        self.solve(&Self::identity(self.rows))
    }

    /// Symmetric PSD square root; negative eigenvalues from rounding are
    /// clamped at zero.
    pub fn sqrt_psd(&self) -> Result<Self> {
        let (vals, vecs) = self.sym_eigen()?;
        let n = self.rows;
        Ok(Self::from_fn(n, n, |i, j| {
            (0..n).map(|k| vecs[(i, k)] * vals[k].max(T::zero()).sqrt() * vecs[(j, k)]).sum()
        }))
    }

    /// Largest singular value.
    pub fn spectral_norm(&self) -> Result<T> {
        let gram = self.transpose().matmul(self)?;
        let (vals, _) = gram.sym_eigen()?;
        Ok(vals.last().copied().unwrap_or_else(T::zero).max(T::zero()).sqrt())
    }

    pub fn kron(&self, other: &Self) -> Self {
        Self::from_fn(self.rows * other.rows, self.cols * other.cols, |i, j| {
            self[(i / other.rows, j / other.cols)] * other[(i % other.rows, j % other.cols)]
        })
    }
}

impl<T> Index<(usize, usize)> for Matrix<T> {
    type Output = T;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &T {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl<T> IndexMut<(usize, usize)> for Matrix<T> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

/// Solves the discrete Lyapunov equation `V = T V Tᵀ + Q` through the
/// Kronecker form `(I - T ⊗ T) vec(V) = vec(Q)`.
pub fn solve_discrete_lyapunov<T: Real>(transition: &Matrix<T>, noise: &Matrix<T>) -> Result<Matrix<T>> {
    let n = transition.rows();
    let system = Matrix::identity(n * n).sub(&transition.kron(transition))?;
    let rhs = Matrix::from_fn(n * n, 1, |i, _| noise[(i / n, i % n)]);
    let sol = system.solve(&rhs)?;
    Ok(Matrix::from_fn(n, n, |i, j| sol[(i * n + j, 0)]).symmetrized())
}

/// Spectral radius of a 1×1 or 2×2 real matrix from its characteristic
/// polynomial; larger matrices fall back to power iteration on `AᵀA` bounds
/// and are not needed by the crate.
pub fn spectral_radius_small<T: Real>(m: &Matrix<T>) -> T {
    match m.rows() {
        1 => m[(0, 0)].abs(),
        2 => {
            let tr = m[(0, 0)] + m[(1, 1)];
            let det = m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)];
            let disc = tr * tr - T::lit(4.0) * det;
            if disc >= T::zero() {
                let s = disc.sqrt();
                ((tr + s) * T::lit(0.5)).abs().max(((tr - s) * T::lit(0.5)).abs())
            } else {
                det.abs().sqrt()
            }
        }
        _ => unimplemented!("spectral radius is only needed for per-mode blocks"),
    }
}

pub fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

pub fn norm<T: Real>(a: &[T]) -> T {
    dot(a, a).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_spd(n: usize, seed: u64) -> Matrix<f64> {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let a = Matrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        a.transpose().matmul(&a).unwrap().add(&Matrix::identity(n).scale(0.1)).unwrap()
    }

    #[test]
    fn eigen_reconstructs() {
        let a = random_spd(6, 1);
        let (vals, vecs) = a.sym_eigen().unwrap();
        let recon = Matrix::from_fn(6, 6, |i, j| (0..6).map(|k| vecs[(i, k)] * vals[k] * vecs[(j, k)]).sum());
        assert!(recon.sub(&a).unwrap().max_abs() < 1e-12);
        assert!(vals.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn cholesky_and_inverse() {
        let a = random_spd(5, 2);
        let l = a.cholesky().unwrap();
        assert!(l.matmul(&l.transpose()).unwrap().sub(&a).unwrap().max_abs() < 1e-12);
        let inv = a.inverse().unwrap();
        assert!(a.matmul(&inv).unwrap().sub(&Matrix::identity(5)).unwrap().max_abs() < 1e-10);
        let (vals, _) = a.sym_eigen().unwrap();
        let ld: f64 = vals.iter().map(|v| v.ln()).sum();
        assert!((a.log_det_spd().unwrap() - ld).abs() < 1e-10);
    }

    #[test]
    fn sqrt_squares_back() {
        let a = random_spd(4, 3);
        let r = a.sqrt_psd().unwrap();
        assert!(r.matmul(&r).unwrap().sub(&a).unwrap().max_abs() < 1e-12);
    }

    #[test]
    fn singular_is_reported() {
        let a = Matrix::from_rows(&[&[1.0, 2.0], &[2.0, 4.0]]);
        assert!(matches!(a.inverse(), Err(Error::Singular(_))));
        assert!(a.cholesky().is_err());
    }

    #[test]
    fn lyapunov_fixed_point() {
        let t = Matrix::from_rows(&[&[0.9, 0.1], &[-0.2, 0.5]]);
        let q = Matrix::from_rows(&[&[0.3, 0.1], &[0.1, 0.2]]);
        let v = solve_discrete_lyapunov(&t, &q).unwrap();
        let rhs = t.matmul(&v).unwrap().matmul(&t.transpose()).unwrap().add(&q).unwrap();
        assert!(rhs.sub(&v).unwrap().max_abs() < 1e-13);
    }

    #[test]
    fn small_matrices_stay_inline() {
        let m = Matrix::<f64>::identity(2);
        assert!(!m.data.spilled());
    }
}
