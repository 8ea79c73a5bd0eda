//! Dense linear algebra kernels for the QP solver.
//!
//! Everything here is plain row-major storage with unblocked loops; the
//! systems we factor are a few hundred rows at most, so simplicity and
//! determinism beat BLAS-grade tuning.

use crate::real::Real;

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat<T> {
    pub rows: usize,
    pub cols: usize,
    data: Vec<T>,
}

impl<T: Real> Mat<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Self {
        let r = rows.len();
        let c = if r == 0 { 0 } else { rows[0].len() };
        let mut m = Self::zeros(r, c);
        for (i, row) in rows.iter().enumerate() {
            assert_eq!(row.len(), c, "ragged row in Mat::from_rows");
            m.row_mut(i).copy_from_slice(row);
        }
        m
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// y = A x
    pub fn mul_vec(&self, x: &[T]) -> Vec<T> {
        assert_eq!(x.len(), self.cols);
        (0..self.rows).map(|i| dot(self.row(i), x)).collect()
    }

    /// y = A' x
    pub fn mul_vec_transpose(&self, x: &[T]) -> Vec<T> {
        assert_eq!(x.len(), self.rows);
        let mut y = vec![T::zero(); self.cols];
        for i in 0..self.rows {
            let xi = x[i];
            if xi != T::zero() {
                for (yj, aij) in y.iter_mut().zip(self.row(i)) {
                    *yj += *aij * xi;
                }
            }
        }
        y
    }

    /// Appends the rows of `other` below `self`.
    pub fn vstack(&self, other: &Mat<T>) -> Mat<T> {
        assert_eq!(self.cols, other.cols);
        let mut m = Mat::zeros(self.rows + other.rows, self.cols);
        m.data[..self.data.len()].copy_from_slice(&self.data);
        m.data[self.data.len()..].copy_from_slice(&other.data);
        m
    }
}

impl<T> std::ops::Index<(usize, usize)> for Mat<T> {
    type Output = T;
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.cols + j]
    }
}

impl<T> std::ops::IndexMut<(usize, usize)> for Mat<T> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.cols + j]
    }
}

pub fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    let mut s = T::zero();
    for (x, y) in a.iter().zip(b) {
        s += *x * *y;
    }
    s
}

pub fn axpy<T: Real>(alpha: T, x: &[T], y: &mut [T]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * *xi;
    }
}

pub fn norm_inf<T: Real>(x: &[T]) -> T {
    x.iter().fold(T::zero(), |m, v| m.max(v.abs()))
}

/// LDL' factorization without pivoting.
///
/// Sound for quasi-definite matrices (positive-definite upper-left block,
/// negative-definite lower-right block), which is the only shape the ADMM
/// KKT systems take. Fails with `None` if a diagonal entry collapses.
#[derive(Debug, Clone)]
pub struct Ldlt<T> {
    n: usize,
    /// Unit lower triangle packed row-major (strict part), diagonal in `d`.
    l: Vec<T>,
    d: Vec<T>,
}

impl<T: Real> Ldlt<T> {
    pub fn factor(a: &Mat<T>) -> Option<Self> {
        assert_eq!(a.rows, a.cols);
        let n = a.rows;
        let mut l = vec![T::zero(); n * n];
        let mut d = vec![T::zero(); n];
        for j in 0..n {
            let mut dj = a[(j, j)];
            for k in 0..j {
                dj -= l[j * n + k] * l[j * n + k] * d[k];
            }
            if dj == T::zero() || !dj.is_finite() {
                return None;
            }
            d[j] = dj;
            for i in (j + 1)..n {
                let mut v = a[(i, j)];
                for k in 0..j {
                    v -= l[i * n + k] * l[j * n + k] * d[k];
                }
                l[i * n + j] = v / dj;
            }
        }
        Some(Self { n, l, d })
    }

    /// Solves A x = b in place.
    pub fn solve_in_place(&self, b: &mut [T]) {
        let n = self.n;
        assert_eq!(b.len(), n);
        // forward: L y = b
        for i in 0..n {
            let mut v = b[i];
            for k in 0..i {
                v -= self.l[i * n + k] * b[k];
            }
            b[i] = v;
        }
        // diagonal
        for i in 0..n {
            b[i] /= self.d[i];
        }
        // backward: L' x = y
        for i in (0..n).rev() {
            let mut v = b[i];
            for k in (i + 1)..n {
                v -= self.l[k * n + i] * b[k];
            }
            b[i] = v;
        }
    }

    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }
}

/// LU factorization with partial pivoting, for general square systems
/// (used by the polish step and by test oracles on KKT systems).
#[derive(Debug, Clone)]
pub struct Lu<T> {
    n: usize,
    lu: Vec<T>,
    perm: Vec<usize>,
}

impl<T: Real> Lu<T> {
    pub fn factor(a: &Mat<T>) -> Option<Self> {
        assert_eq!(a.rows, a.cols);
        let n = a.rows;
        let mut lu: Vec<T> = (0..n).flat_map(|i| a.row(i).to_vec()).collect();
        let mut perm: Vec<usize> = (0..n).collect();
        for col in 0..n {
            let mut piv = col;
            let mut best = lu[col * n + col].abs();
            for r in (col + 1)..n {
                let v = lu[r * n + col].abs();
                if v > best {
                    best = v;
                    piv = r;
                }
            }
            if best == T::zero() || !best.is_finite() {
                return None;
            }
            if piv != col {
                for j in 0..n {
                    lu.swap(col * n + j, piv * n + j);
                }
                perm.swap(col, piv);
            }
            let pivot = lu[col * n + col];
            for r in (col + 1)..n {
                let f = lu[r * n + col] / pivot;
                lu[r * n + col] = f;
                for j in (col + 1)..n {
                    let sub = f * lu[col * n + j];
                    lu[r * n + j] -= sub;
                }
            }
        }
        Some(Self { n, lu, perm })
    }

    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let n = self.n;
        assert_eq!(b.len(), n);
        let mut x: Vec<T> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            for k in 0..i {
                let sub = self.lu[i * n + k] * x[k];
                x[i] -= sub;
            }
        }
        for i in (0..n).rev() {
            for k in (i + 1)..n {
                let sub = self.lu[i * n + k] * x[k];
                x[i] -= sub;
            }
            x[i] /= self.lu[i * n + i];
        }
        x
    }
}
