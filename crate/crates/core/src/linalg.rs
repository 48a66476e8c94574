//! Symmetric tridiagonal systems with an optional periodic corner.
//!
//! The second variation of a periodic action is tridiagonal plus the two
//! corner entries `(0, n-1)`, `(n-1, 0)`. Its Cholesky factor is lower
//! bidiagonal except for a dense last row, so factor and solve are `O(n)`.

use nalgebra::{DMatrix, SymmetricEigen};

/// Symmetric matrix with diagonal `diag`, super-diagonal `off` and corner entry `corner`.
#[derive(Debug, Clone, PartialEq)]
pub struct CyclicTridiagonal {
    pub diag: Vec<f64>,
    pub off: Vec<f64>,
    pub corner: f64,
}

impl CyclicTridiagonal {
    /// Hessian of a periodic chain: `diag[i]` on the diagonal, `bonds[i]` couples `i` and `i+1 mod n`.
    ///
    /// For `n = 1` both neighbours are the site itself and the bond enters twice.
    pub fn periodic(diag: Vec<f64>, bonds: &[f64]) -> Self {
        let n = diag.len();
        assert_eq!(bonds.len(), n);
        match n {
            0 => Self { diag, off: Vec::new(), corner: 0.0 },
            1 => Self { diag: vec![diag[0] + 2.0 * bonds[0]], off: Vec::new(), corner: 0.0 },
            _ => Self { diag, off: bonds[..n - 1].to_vec(), corner: bonds[n - 1] },
        }
    }

    /// Plain tridiagonal matrix (no corner).
    pub fn open(diag: Vec<f64>, off: Vec<f64>) -> Self {
        assert_eq!(off.len() + 1, diag.len().max(1));
        Self { diag, off, corner: 0.0 }
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    /// `y = A x`.
    pub fn mul(&self, x: &[f64]) -> Vec<f64> {
        let n = self.len();
        let mut y: Vec<f64> = self.diag.iter().zip(x).map(|(d, v)| d * v).collect();
        for i in 0..n.saturating_sub(1) {
            y[i] += self.off[i] * x[i + 1];
            y[i + 1] += self.off[i] * x[i];
        }
        if n >= 2 {
            y[0] += self.corner * x[n - 1];
            y[n - 1] += self.corner * x[0];
        }
        y
    }

    /// Cholesky factor of `A + shift I`, or `None` if it is not positive definite.
    pub fn cholesky(&self, shift: f64) -> Option<CyclicCholesky> {
        let n = self.len();
        if n == 0 {
            return Some(CyclicCholesky { diag: vec![], sub: vec![], last: vec![] });
        }
        let mut diag = vec![0.0; n];
        let mut sub = vec![0.0; n.saturating_sub(1)];
        let mut last = vec![0.0; n.saturating_sub(1)];
        // rows 0..n-2 are bidiagonal
        for i in 0..n - 1 {
            let mut piv = self.diag[i] + shift;
            if i > 0 {
                sub[i - 1] = self.off[i - 1] / diag[i - 1];
                piv -= sub[i - 1] * sub[i - 1];
            }
            if !(piv > 0.0) {
                return None;
            }
            diag[i] = piv.sqrt();
        }
        // dense last row
        let m = n - 1;
        let mut acc = 0.0;
        for j in 0..m {
            let mut a = 0.0;
            if j == 0 {
                a += self.corner;
            }
            if j == m - 1 {
                a += self.off[m - 1];
            }
            if j > 0 {
                a -= last[j - 1] * sub[j - 1];
            }
            last[j] = a / diag[j];
            acc += last[j] * last[j];
        }
        let piv = self.diag[m] + shift - acc;
        if !(piv > 0.0) {
            return None;
        }
        diag[m] = piv.sqrt();
        Some(CyclicCholesky { diag, sub, last })
    }

    /// Dense copy, for eigenvalue work and tests.
    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.len();
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = self.diag[i];
        }
        for i in 0..n.saturating_sub(1) {
            m[(i, i + 1)] += self.off[i];
            m[(i + 1, i)] += self.off[i];
        }
        if n >= 2 {
            m[(0, n - 1)] += self.corner;
            m[(n - 1, 0)] += self.corner;
        }
        m
    }

    /// All eigenvalues, ascending.
    pub fn eigenvalues(&self) -> Vec<f64> {
        if self.is_empty() {
            return Vec::new();
        }
        let mut ev: Vec<f64> = SymmetricEigen::new(self.to_dense()).eigenvalues.iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        ev
    }

    /// Smallest eigenvalue by bisection on the Cholesky test.
    ///
    /// Used for long chains where a dense decomposition is too costly.
    pub fn min_eigenvalue_bisect(&self, tol: f64) -> f64 {
        let n = self.len();
        if n == 0 {
            return f64::NAN;
        }
        // Gershgorin bounds
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        let dense_row = |i: usize| -> (f64, f64) {
            let mut r = 0.0;
            if i > 0 {
                r += self.off[i - 1].abs();
            }
            if i + 1 < n {
                r += self.off[i].abs();
            }
            if n >= 2 && (i == 0 || i == n - 1) {
                r += self.corner.abs();
            }
            (self.diag[i], r)
        };
        for i in 0..n {
            let (d, r) = dense_row(i);
            lo = lo.min(d - r);
            hi = hi.max(d + r);
        }
        // A - x I is PD iff x < lambda_min
        while hi - lo > tol * (1.0 + lo.abs().max(hi.abs())) {
            let mid = 0.5 * (lo + hi);
            if self.cholesky(-mid).is_some() {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }
}

/// Factor `L` of a [`CyclicTridiagonal`]: bidiagonal rows plus a dense last row.
#[derive(Debug, Clone)]
pub struct CyclicCholesky {
    diag: Vec<f64>,
    sub: Vec<f64>,
    last: Vec<f64>,
}

impl CyclicCholesky {
    /// Solves `(A + shift I) x = b`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.diag.len();
        if n == 0 {
            return Vec::new();
        }
        let m = n - 1;
        // forward: L y = b
        let mut y = vec![0.0; n];
        for i in 0..m {
            let mut v = b[i];
            if i > 0 {
                v -= self.sub[i - 1] * y[i - 1];
            }
            y[i] = v / self.diag[i];
        }
        let mut v = b[m];
        for j in 0..m {
            v -= self.last[j] * y[j];
        }
        y[m] = v / self.diag[m];
        // backward: L^T x = y
        let mut x = vec![0.0; n];
        x[m] = y[m] / self.diag[m];
        for i in (0..m).rev() {
            let mut v = y[i] - self.last[i] * x[m];
            if i + 1 < m {
                v -= self.sub[i] * x[i + 1];
            }
            x[i] = v / self.diag[i];
        }
        x
    }

    /// `log det(A + shift I)`.
    pub fn log_det(&self) -> f64 {
        2.0 * self.diag.iter().map(|d| d.ln()).sum::<f64>()
    }
}
