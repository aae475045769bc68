//! Small dense symmetric positive-definite kernels.
//!
//! The Gibbs sampler factorizes a d×d system per unit and per item on every
//! iteration, with d rarely above 8. These routines work on row-major slices
//! and avoid allocation in the hot path.

use ndarray::Array2;

use crate::error::{IrtmError, Result};

/// Lower-triangular Cholesky factor `A = L Lᵀ`, stored row-major.
#[derive(Debug, Clone)]
pub struct Cholesky {
    n: usize,
    l: Vec<f64>,
}

impl Cholesky {
    pub fn new(a: &[f64], n: usize) -> Result<Self> {
        let mut chol = Cholesky {
            n,
            l: vec![0.0; n * n],
        };
        chol.refactor(a)?;
        Ok(chol)
    }

    pub fn from_array(a: &Array2<f64>) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(IrtmError::Contract(format!(
                "expected a square matrix, got {}x{}",
                n,
                a.ncols()
            )));
        }
        let flat: Vec<f64> = a.iter().copied().collect();
        Self::new(&flat, n)
    }

    /// Factor a new matrix of the same size in place, reusing storage.
    pub fn refactor(&mut self, a: &[f64]) -> Result<()> {
        let n = self.n;
        debug_assert_eq!(a.len(), n * n);
        let l = &mut self.l;
        l.iter_mut().for_each(|x| *x = 0.0);
        let mut max_pivot = 0.0_f64;
        for j in 0..n {
            let mut s = a[j * n + j];
            for k in 0..j {
                s -= l[j * n + k] * l[j * n + k];
            }
            if !(s > 0.0) || !s.is_finite() {
                let min_pivot = s.max(0.0);
                return Err(IrtmError::NotPositiveDefinite {
                    pivot: j,
                    value: s,
                    condition: if min_pivot > 0.0 {
                        max_pivot / min_pivot
                    } else {
                        f64::INFINITY
                    },
                });
            }
            max_pivot = max_pivot.max(s);
            let d = s.sqrt();
            l[j * n + j] = d;
            for i in (j + 1)..n {
                let mut s = a[i * n + j];
                for k in 0..j {
                    s -= l[i * n + k] * l[j * n + k];
                }
                l[i * n + j] = s / d;
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn factor(&self) -> &[f64] {
        &self.l
    }

    /// Squared ratio of the largest to smallest diagonal of L.
    pub fn condition_estimate(&self) -> f64 {
        let diag = (0..self.n).map(|i| self.l[i * self.n + i]);
        let (lo, hi) = diag.fold((f64::INFINITY, 0.0_f64), |(lo, hi), x| (lo.min(x), hi.max(x)));
        (hi / lo).powi(2)
    }

    /// In place: b ← L⁻¹ b.
    pub fn solve_lower(&self, b: &mut [f64]) {
        let n = self.n;
        for i in 0..n {
            let mut s = b[i];
            for k in 0..i {
                s -= self.l[i * n + k] * b[k];
            }
            b[i] = s / self.l[i * n + i];
        }
    }

    /// In place: b ← L⁻ᵀ b.
    pub fn solve_upper(&self, b: &mut [f64]) {
        let n = self.n;
        for i in (0..n).rev() {
            let mut s = b[i];
            for k in (i + 1)..n {
                s -= self.l[k * n + i] * b[k];
            }
            b[i] = s / self.l[i * n + i];
        }
    }

    /// In place: b ← A⁻¹ b.
    pub fn solve(&self, b: &mut [f64]) {
        self.solve_lower(b);
        self.solve_upper(b);
    }

    /// out ← L z.
    pub fn mul_lower(&self, z: &[f64], out: &mut [f64]) {
        let n = self.n;
        for i in 0..n {
            let mut s = 0.0;
            for k in 0..=i {
                s += self.l[i * n + k] * z[k];
            }
            out[i] = s;
        }
    }

    pub fn inverse(&self) -> Vec<f64> {
        let n = self.n;
        let mut inv = vec![0.0; n * n];
        let mut col = vec![0.0; n];
        for j in 0..n {
            col.iter_mut().for_each(|x| *x = 0.0);
            col[j] = 1.0;
            self.solve(&mut col);
            for i in 0..n {
                inv[i * n + j] = col[i];
            }
        }
        // exact symmetry
        for i in 0..n {
            for j in (i + 1)..n {
                let m = 0.5 * (inv[i * n + j] + inv[j * n + i]);
                inv[i * n + j] = m;
                inv[j * n + i] = m;
            }
        }
        inv
    }
}

pub fn to_flat(a: &Array2<f64>) -> Vec<f64> {
    a.iter().copied().collect()
}

pub fn from_flat(flat: Vec<f64>, n: usize) -> Array2<f64> {
    Array2::from_shape_vec((n, n), flat).expect("square buffer")
}

pub fn is_symmetric(a: &Array2<f64>, tol: f64) -> bool {
    let n = a.nrows();
    a.ncols() == n
        && (0..n).all(|i| (0..i).all(|j| (a[[i, j]] - a[[j, i]]).abs() <= tol * (1.0 + a[[i, j]].abs())))
}
