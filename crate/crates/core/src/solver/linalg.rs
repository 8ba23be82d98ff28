//! Dense symmetric linear algebra for the Newton systems. Subproblems stay
//! small (tens of variables), so full storage and a plain Cholesky are the
//! right tools.

use alloc::vec::Vec;

use crate::math::sqrt;

/// Dense symmetric matrix, full row-major storage.
#[derive(Debug, Clone)]
pub struct SymMat {
    pub n: usize,
    pub a: Vec<f64>,
}

impl SymMat {
    pub fn zeros(n: usize) -> Self {
        SymMat { n, a: alloc::vec![0.0; n * n] }
    }

    pub fn reset(&mut self) {
        self.a.iter_mut().for_each(|v| *v = 0.0);
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.a[i * self.n + j]
    }

    /// Add `v` at `(i, j)` and, off the diagonal, at `(j, i)`.
    #[inline]
    pub fn add_sym(&mut self, i: usize, j: usize, v: f64) {
        self.a[i * self.n + j] += v;
        if i != j {
            self.a[j * self.n + i] += v;
        }
    }

    pub fn max_diag(&self) -> f64 {
        (0..self.n).map(|i| self.get(i, i)).fold(0.0, f64::max)
    }

    /// `y = A x`.
    pub fn mul_vec(&self, x: &[f64], y: &mut [f64]) {
        for i in 0..self.n {
            let row = &self.a[i * self.n..(i + 1) * self.n];
            y[i] = row.iter().zip(x).map(|(a, b)| a * b).sum();
        }
    }
}

/// Cholesky factor `A = L L^T`, lower triangle.
#[derive(Debug, Clone)]
pub struct Cholesky {
    n: usize,
    l: Vec<f64>,
}

impl Cholesky {
    /// Factor `A + ridge*I`; `None` if a pivot loses positivity.
    pub fn factor(m: &SymMat, ridge: f64) -> Option<Cholesky> {
        let n = m.n;
        let mut l = m.a.clone();
        for i in 0..n {
            l[i * n + i] += ridge;
        }
        for j in 0..n {
            let mut d = l[j * n + j];
            for k in 0..j {
                let v = l[j * n + k];
                d -= v * v;
            }
            if !(d > 0.0) || !d.is_finite() {
                return None;
            }
            let d = sqrt(d);
            l[j * n + j] = d;
            for i in (j + 1)..n {
                let mut s = l[i * n + j];
                for k in 0..j {
                    s -= l[i * n + k] * l[j * n + k];
                }
                l[i * n + j] = s / d;
            }
        }
        // Zero the strict upper triangle so the factor is clean.
        for i in 0..n {
            for j in (i + 1)..n {
                l[i * n + j] = 0.0;
            }
        }
        Some(Cholesky { n, l })
    }

    /// Factor with escalating ridge until the pivots hold.
    pub fn factor_robust(m: &SymMat) -> Option<Cholesky> {
        if let Some(f) = Cholesky::factor(m, 0.0) {
            return Some(f);
        }
        let base = m.max_diag().max(1.0);
        let mut ridge = 1e-14 * base;
        for _ in 0..12 {
            if let Some(f) = Cholesky::factor(m, ridge) {
                return Some(f);
            }
            ridge *= 100.0;
        }
        None
    }

    /// Solve `A x = b` in place.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        let n = self.n;
        // Forward: L y = b.
        for i in 0..n {
            let mut s = b[i];
            for k in 0..i {
                s -= self.l[i * n + k] * b[k];
            }
            b[i] = s / self.l[i * n + i];
        }
        // Backward: L^T x = y.
        for i in (0..n).rev() {
            let mut s = b[i];
            for k in (i + 1)..n {
                s -= self.l[k * n + i] * b[k];
            }
            b[i] = s / self.l[i * n + i];
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }
}
