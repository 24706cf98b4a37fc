//! Dense column-major matrices and Householder QR with column pivoting.

use crate::scalar::Scalar;

/// Dense column-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<T> {
    nrows: usize,
    ncols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Matrix<T> {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self {
            nrows,
            ncols,
            data: vec![T::zero(); nrows * ncols],
        }
    }

    /// Builds a matrix from a list of columns of equal length.
    pub fn from_columns(nrows: usize, columns: &[&[T]]) -> Self {
        let mut data = Vec::with_capacity(nrows * columns.len());
        for col in columns {
            assert_eq!(col.len(), nrows, "column length mismatch");
            data.extend_from_slice(col);
        }
        Self {
            nrows,
            ncols: columns.len(),
            data,
        }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn col(&self, j: usize) -> &[T] {
        &self.data[j * self.nrows..(j + 1) * self.nrows]
    }

    pub fn col_mut(&mut self, j: usize) -> &mut [T] {
        &mut self.data[j * self.nrows..(j + 1) * self.nrows]
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[j * self.nrows + i]
    }

    pub fn set(&mut self, i: usize, j: usize, v: T) {
        self.data[j * self.nrows + i] = v;
    }

    pub fn mul_vec(&self, x: &[T]) -> Vec<T> {
        assert_eq!(x.len(), self.ncols);
        let mut out = vec![T::zero(); self.nrows];
        for (j, &xj) in x.iter().enumerate() {
            if xj == T::zero() {
                continue;
            }
            for (o, &a) in out.iter_mut().zip(self.col(j)) {
                *o += a * xj;
            }
        }
        out
    }

    /// Quadratic form `cᵀ M c` for a square matrix.
    pub fn quad_form(&self, c: &[T]) -> T {
        assert_eq!(self.nrows, self.ncols);
        let mc = self.mul_vec(c);
        c.iter().zip(&mc).map(|(&a, &b)| a * b).sum()
    }
}

/// Householder QR factorization `A P = Q R` with limited column pivoting.
///
/// Columns are taken in their original order. A column whose norm, after
/// projecting out the columns already accepted, falls to
/// `16 · eps · max(n, p)` times its original norm is moved to the end and
/// counted as aliased, so the columns kept are always the earliest
/// independent ones.
#[derive(Debug, Clone)]
pub struct PivotedQr<T> {
    qr: Matrix<T>,
    tau: Vec<T>,
    perm: Vec<usize>,
    rank: usize,
}

impl<T: Scalar> PivotedQr<T> {
    pub fn new(mut a: Matrix<T>) -> Self {
        let (n, p) = (a.nrows, a.ncols);
        let steps = n.min(p);
        let mut perm: Vec<usize> = (0..p).collect();
        let mut tau = vec![T::zero(); steps];
        let tol = T::epsilon() * T::lit(16.0) * T::from_usize_lossy(n.max(p));
        let original: Vec<T> = (0..p).map(|j| a.col(j).iter().map(|&v| v * v).sum::<T>().sqrt()).collect();

        let mut active = p;
        let mut k = 0;
        while k < steps.min(active) {
            let norm = a.col(k)[k..].iter().map(|&v| v * v).sum::<T>().sqrt();
            if norm == T::zero() || norm <= tol * original[perm[k]] {
                a.data[k * n..active * n].rotate_left(n);
                perm[k..active].rotate_left(1);
                active -= 1;
                continue;
            }

            // Householder vector stored below the diagonal, v₀ = 1 implicit
            let col = a.col_mut(k);
            let alpha = if col[k] > T::zero() { -norm } else { norm };
            let v0 = col[k] - alpha;
            for v in col[k + 1..].iter_mut() {
                *v /= v0;
            }
            tau[k] = (alpha - col[k]) / alpha;
            col[k] = alpha;

            for j in k + 1..p {
                let (left, right) = a.data.split_at_mut(j * n);
                let hv = &left[k * n..(k + 1) * n];
                let cj = &mut right[..n];
                let mut s = cj[k];
                for i in k + 1..n {
                    s += hv[i] * cj[i];
                }
                s *= tau[k];
                cj[k] -= s;
                for i in k + 1..n {
                    cj[i] -= s * hv[i];
                }
            }
            k += 1;
        }
        let rank = k;

        Self {
            qr: a,
            tau,
            perm,
            rank,
        }
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn nrows(&self) -> usize {
        self.qr.nrows
    }

    pub fn ncols(&self) -> usize {
        self.qr.ncols
    }

    /// Original column indices in pivot order.
    pub fn permutation(&self) -> &[usize] {
        &self.perm
    }

    /// Original indices of the columns found linearly dependent on the others.
    pub fn aliased_columns(&self) -> Vec<usize> {
        let mut out = self.perm[self.rank..].to_vec();
        out.sort_unstable();
        out
    }

    /// Overwrites `y` with `Qᵀ y`, restricted to the first `rank` reflectors.
    fn apply_qt(&self, y: &mut [T]) {
        let n = self.qr.nrows;
        for k in 0..self.rank {
            let hv = self.qr.col(k);
            let mut s = y[k];
            for i in k + 1..n {
                s += hv[i] * y[i];
            }
            s *= self.tau[k];
            y[k] -= s;
            for i in k + 1..n {
                y[i] -= s * hv[i];
            }
        }
    }

    /// Overwrites `y` with `Q y`.
    fn apply_q(&self, y: &mut [T]) {
        let n = self.qr.nrows;
        for k in (0..self.rank).rev() {
            let hv = self.qr.col(k);
            let mut s = y[k];
            for i in k + 1..n {
                s += hv[i] * y[i];
            }
            s *= self.tau[k];
            y[k] -= s;
            for i in k + 1..n {
                y[i] -= s * hv[i];
            }
        }
    }

    /// Least-squares coefficients in original column order; aliased columns get `None`.
    pub fn solve(&self, y: &[T]) -> Vec<Option<T>> {
        assert_eq!(y.len(), self.qr.nrows);
        let mut qty = y.to_vec();
        self.apply_qt(&mut qty);
        let r = self.rank;
        let mut z = vec![T::zero(); r];
        for i in (0..r).rev() {
            let mut s = qty[i];
            for j in i + 1..r {
                s -= self.qr.get(i, j) * z[j];
            }
            z[i] = s / self.qr.get(i, i);
        }
        let mut out = vec![None; self.qr.ncols];
        for (pos, &orig) in self.perm[..r].iter().enumerate() {
            out[orig] = Some(z[pos]);
        }
        out
    }

    /// Residual `y − Q₁Q₁ᵀy` of projecting `y` onto the column space.
    pub fn residuals(&self, y: &[T]) -> Vec<T> {
        assert_eq!(y.len(), self.qr.nrows);
        let mut v = y.to_vec();
        self.apply_qt(&mut v);
        for x in v[..self.rank].iter_mut() {
            *x = T::zero();
        }
        self.apply_q(&mut v);
        v
    }

    /// `(R₁₁ᵀR₁₁)⁻¹` scattered back to original column order (p × p); rows and
    /// columns of aliased columns are NaN.
    pub fn unscaled_covariance(&self) -> Matrix<T> {
        let r = self.rank;
        // invert the leading upper-triangular block
        let mut rinv = Matrix::zeros(r, r);
        for j in 0..r {
            rinv.set(j, j, T::one() / self.qr.get(j, j));
            for i in (0..j).rev() {
                let mut s = T::zero();
                for l in i + 1..=j {
                    s += self.qr.get(i, l) * rinv.get(l, j);
                }
                rinv.set(i, j, -s / self.qr.get(i, i));
            }
        }
        let p = self.qr.ncols;
        let mut out = Matrix::zeros(p, p);
        for v in out.data.iter_mut() {
            *v = T::nan();
        }
        for a in 0..r {
            for b in a..r {
                let mut s = T::zero();
                for l in b..r {
                    s += rinv.get(a, l) * rinv.get(b, l);
                }
                let (ia, ib) = (self.perm[a], self.perm[b]);
                out.set(ia, ib, s);
                out.set(ib, ia, s);
            }
        }
        out
    }
}
