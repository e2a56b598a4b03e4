//! Dense complex Householder QR, kept to what the section spaces need: the
//! triangular factor of a tall matrix streamed in row blocks, and triangular
//! solves with it.

use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;
#[allow(unused_imports)] // unused when a dependency enables std float methods
use num_traits::Float;

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// Upper-triangular `n × n` factor, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct UpperTriangular {
    n: usize,
    data: Vec<Complex64>,
}

impl UpperTriangular {
    pub fn zeros(n: usize) -> Self {
        Self { n, data: vec![ZERO; n * n] }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.data[i * self.n + j]
    }

    pub fn diag_abs(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i).norm()).collect()
    }

    /// Folds a block of rows (row-major, `n` columns) into the factor, so that
    /// afterwards `RᴴR = AᴴA` for all rows seen so far.
    pub fn absorb_rows(&mut self, block: &[Complex64]) {
        let n = self.n;
        debug_assert_eq!(block.len() % n, 0);
        let m = n + block.len() / n;
        // column-major stack [R; block]
        let mut a = vec![ZERO; m * n];
        for j in 0..n {
            for i in 0..=j {
                a[j * m + i] = self.data[i * n + j];
            }
            for (r, row) in block.chunks(n).enumerate() {
                a[j * m + n + r] = row[j];
            }
        }
        householder_in_place(&mut a, m, n);
        for i in 0..n {
            for j in 0..n {
                self.data[i * n + j] = if j >= i { a[j * m + i] } else { ZERO };
            }
        }
    }

    /// Solves `Rᵀ y = b` (forward substitution; plain transpose, not adjoint).
    pub fn solve_transpose(&self, b: &[Complex64]) -> Vec<Complex64> {
        let n = self.n;
        let mut y = b.to_vec();
        for i in 0..n {
            let mut s = y[i];
            for k in 0..i {
                s -= self.data[k * n + i] * y[k];
            }
            y[i] = s / self.data[i * n + i];
        }
        y
    }

    /// Solves `R x = b` (back substitution).
    pub fn solve(&self, b: &[Complex64]) -> Vec<Complex64> {
        let n = self.n;
        let mut x = b.to_vec();
        for i in (0..n).rev() {
            let mut s = x[i];
            for k in i + 1..n {
                s -= self.data[i * n + k] * x[k];
            }
            x[i] = s / self.data[i * n + i];
        }
        x
    }
}

/// Householder QR of a column-major `m × n` matrix (`m >= n`). On return the
/// upper triangle holds `R`; the rest is scratch.
fn householder_in_place(a: &mut [Complex64], m: usize, n: usize) {
    let mut v = vec![ZERO; m];
    for k in 0..n {
        let col = &a[k * m..(k + 1) * m];
        let norm = col[k..].iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if norm == 0.0 {
            continue;
        }
        let x0 = col[k];
        let phase = if x0.norm() > 0.0 { x0 / x0.norm() } else { Complex64::new(1.0, 0.0) };
        let alpha = -phase * norm;
        v[k..m].copy_from_slice(&col[k..m]);
        v[k] -= alpha;
        let vnorm2: f64 = v[k..m].iter().map(|z| z.norm_sqr()).sum();
        if vnorm2 == 0.0 {
            continue;
        }
        for j in k..n {
            let cj = &mut a[j * m..(j + 1) * m];
            let mut dot = ZERO;
            for i in k..m {
                dot += v[i].conj() * cj[i];
            }
            let s = dot * (2.0 / vnorm2);
            for i in k..m {
                cj[i] -= v[i] * s;
            }
        }
        a[k * m + k] = alpha;
        for i in k + 1..m {
            a[k * m + i] = ZERO;
        }
    }
}
