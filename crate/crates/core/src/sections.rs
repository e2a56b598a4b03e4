//! Pole-constrained section spaces `H⁰₀(ℂP¹, O(kp))` and their partial
//! Bergman kernels.
//!
//! Every section factors as `B(z)·q(z)` with `B = Π (z − a_j)^{t_j}` over the
//! finite poles and `deg q ≤ m = kp − Σ t_j` (a pole at `∞` only lowers the
//! degree bound). The free factor is expanded in the scaled monomials
//! `√C(m,i) zⁱ`, whose Fubini–Study norms `C(m,i)(1−u)ⁱ u^{m−i}` are Bernstein
//! polynomials in `u = 1/(1+|z|²)` and never exceed one, in either chart.
//!
//! Pointwise, with the constant `Π (1+|a_j|²)^{t_j}` absorbed into `B`,
//!
//! ```text
//! |B q|²_{h^p}(x) = G(x) · |Σ dᵢ êᵢ(x)|²,   G = Π σ_j^{2 t_j} · e^{−2pφ}.
//! ```
//!
//! Orthonormalization runs on the weighted evaluation matrix
//! `√(w_n G(x_n)) êᵢ(x_n)` after column equilibration. When all poles sit at
//! `0`/`∞` and the weight is radial the Gram matrix is diagonal and the
//! triangular factor reduces to the column norms.

use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;
#[allow(unused_imports)] // unused when a dependency enables std float methods
use num_traits::Float;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::Error;
use crate::geometry::{log_chordal_sigma, PoleSet, ProjectivePoint};
use crate::linalg::UpperTriangular;
use crate::quadrature::{GridField, SphereGrid};
use crate::weight::WeightSpec;

/// Smallest admissible integer vanishing order `t ≥ τp`.
pub fn threshold(tau: f64, p: u32) -> Result<u32, Error> {
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(Error::InvalidTau(tau));
    }
    let tp = tau * f64::from(p);
    let r = tp.round();
    // τ is entered as a decimal, so τp lands on an integer only up to rounding
    if (tp - r).abs() <= 1e-9 * tp.max(1.0) {
        Ok(r as u32)
    } else {
        Ok(tp.floor() as u32 + 1)
    }
}

pub fn dimension(k: u32, p: u32, poles: &PoleSet) -> usize {
    let total: i64 = poles.thresholds(p).iter().map(|&t| i64::from(t)).sum();
    (i64::from(k) * i64::from(p) + 1 - total).max(0) as usize
}

/// Bigness of `(O(k), Σ, τ)`: the class `k − Σ τ_j` of `θ` is positive.
pub fn is_big(k: u32, poles: &PoleSet) -> bool {
    theta_is_positive(f64::from(k) - poles.total_tau(), k)
}

/// `k − Σ τ > 0` beyond the rounding of decimal taus, matching [`threshold`].
pub(crate) fn theta_is_positive(theta: f64, k: u32) -> bool {
    theta > 1e-9 * f64::from(k)
}

/// `ln m!` for `m = 0..=n`.
pub(crate) fn log_factorials(n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n + 1);
    let mut acc = 0.0;
    out.push(0.0);
    for j in 1..=n {
        acc += (j as f64).ln();
        out.push(acc);
    }
    out
}

#[derive(Clone, Debug)]
enum Basis {
    /// Orthogonal scaled monomials; `ln` of their norms.
    Diagonal { log_norms: Vec<f64> },
    /// `A = A' diag(e^{log_scale})`, `A' = Q R`.
    Dense { log_scale: Vec<f64>, r: UpperTriangular },
}

/// The constrained space together with its orthonormal basis data.
#[derive(Clone, Debug)]
pub struct SectionSpace {
    k: u32,
    p: u32,
    poles: PoleSet,
    thresholds: Vec<u32>,
    infinity_order: u32,
    m: usize,
    dim: usize,
    weight: WeightSpec,
    grid: (usize, usize),
    log_binom: Vec<f64>,
    basis: Basis,
}

/// Rank tolerance on the diagonal of the equilibrated triangular factor.
const RANK_TOL: f64 = 1e-13;

impl SectionSpace {
    pub fn build(k: u32, p: u32, poles: &PoleSet, weight: &WeightSpec, grid: &SphereGrid) -> Result<Self, Error> {
        if k == 0 || p == 0 {
            return Err(Error::InvalidArgument("k and p must be positive"));
        }
        let dim = dimension(k, p, poles);
        if dim == 0 {
            return Err(Error::DimensionZero);
        }
        let need = SphereGrid::floor_for(k, p);
        if grid.n_radial() < need.0 || grid.n_angular() < need.1 {
            return Err(Error::GridBelowFloor { need, have: (grid.n_radial(), grid.n_angular()) });
        }
        let thresholds = poles.thresholds(p);
        let infinity_order = poles
            .poles()
            .iter()
            .zip(&thresholds)
            .filter(|(pole, _)| pole.point.is_infinity())
            .map(|(_, &t)| t)
            .sum();
        let m = dim - 1;
        let lf = log_factorials(m);
        let log_binom = (0..=m).map(|i| lf[m] - lf[i] - lf[m - i]).collect();
        let mut space = Self {
            k,
            p,
            poles: poles.clone(),
            thresholds,
            infinity_order,
            m,
            dim,
            weight: weight.clone(),
            grid: (grid.n_radial(), grid.n_angular()),
            log_binom,
            basis: Basis::Diagonal { log_norms: Vec::new() },
        };
        space.basis = if space.is_rotation_invariant() {
            space.diagonal_basis(grid)?
        } else {
            space.dense_basis(grid)?
        };
        Ok(space)
    }

    pub fn k(&self) -> u32 {
        self.k
    }
    pub fn p(&self) -> u32 {
        self.p
    }
    pub fn poles(&self) -> &PoleSet {
        &self.poles
    }
    pub fn thresholds(&self) -> &[u32] {
        &self.thresholds
    }
    /// Degree bound of the free factor.
    pub fn m(&self) -> usize {
        self.m
    }
    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn weight(&self) -> &WeightSpec {
        &self.weight
    }
    pub fn grid_dims(&self) -> (usize, usize) {
        self.grid
    }
    /// Forced vanishing order at `∞` (zero without a pole there).
    pub fn infinity_order(&self) -> u32 {
        self.infinity_order
    }

    pub fn is_rotation_invariant(&self) -> bool {
        self.poles.on_axis() && self.weight.is_radial()
    }

    /// `ln G(x)` for a given weight value at `x`.
    fn log_prefactor(&self, x: &ProjectivePoint, phi: f64) -> f64 {
        let mut acc = -2.0 * f64::from(self.p) * phi;
        for (pole, &t) in self.poles.poles().iter().zip(&self.thresholds) {
            if t > 0 {
                acc += 2.0 * f64::from(t) * log_chordal_sigma(x, &pole.point);
            }
        }
        acc
    }

    /// `ln |êᵢ(x)|` for all `i`.
    fn log_scaled_monomials(&self, u: f64, one_minus_u: f64, out: &mut Vec<f64>) {
        out.clear();
        let (lu, lv) = (u.ln(), one_minus_u.ln());
        for i in 0..=self.m {
            let a = if i == 0 { 0.0 } else { i as f64 * lv };
            let b = if i == self.m { 0.0 } else { (self.m - i) as f64 * lu };
            out.push(0.5 * (self.log_binom[i] + a + b));
        }
    }

    fn diagonal_basis(&self, grid: &SphereGrid) -> Result<Basis, Error> {
        let na = grid.n_angular();
        let mut terms: Vec<Vec<f64>> = vec![Vec::with_capacity(grid.n_radial()); self.m + 1];
        let mut le = Vec::new();
        for ring in 0..grid.n_radial() {
            let x = &grid.nodes()[ring * na];
            let phi = self.weight.radial_profile(x.u(), x.one_minus_u()).unwrap_or(0.0);
            let lg = grid.ring_weights()[ring].ln() + self.log_prefactor(x, phi);
            self.log_scaled_monomials(grid.ring_u()[ring], grid.ring_one_minus_u()[ring], &mut le);
            for (i, l) in le.iter().enumerate() {
                terms[i].push(lg + 2.0 * l);
            }
        }
        let log_norms: Vec<f64> = terms.iter().map(|t| 0.5 * log_sum_exp(t)).collect();
        let rank = log_norms.iter().filter(|l| l.is_finite()).count();
        if rank < self.dim {
            return Err(Error::IllConditioned { rank, dim: self.dim });
        }
        Ok(Basis::Diagonal { log_norms })
    }

    fn dense_basis(&self, grid: &SphereGrid) -> Result<Basis, Error> {
        let n = self.m + 1;
        let phi = self.weight.sample(grid);
        let mut le = Vec::new();
        // row log-prefactors and column scales
        let row_log: Vec<f64> = grid
            .nodes()
            .iter()
            .zip(grid.weights())
            .zip(&phi.values)
            .map(|((x, w), &f)| 0.5 * (w.ln() + self.log_prefactor(x, f)))
            .collect();
        let mut col_terms: Vec<Vec<f64>> = vec![Vec::with_capacity(grid.len()); n];
        for (x, rl) in grid.nodes().iter().zip(&row_log) {
            self.log_scaled_monomials(x.u(), x.one_minus_u(), &mut le);
            for (i, l) in le.iter().enumerate() {
                col_terms[i].push(2.0 * (rl + l));
            }
        }
        let log_scale: Vec<f64> = col_terms.iter().map(|t| 0.5 * log_sum_exp(t)).collect();
        drop(col_terms);
        if log_scale.iter().any(|l| !l.is_finite()) {
            let rank = log_scale.iter().filter(|l| l.is_finite()).count();
            return Err(Error::IllConditioned { rank, dim: self.dim });
        }
        let mut r = UpperTriangular::zeros(n);
        let rows_per_block = (4 * n).max(512);
        let mut block: Vec<Complex64> = Vec::with_capacity(rows_per_block * n);
        for (idx, (x, rl)) in grid.nodes().iter().zip(&row_log).enumerate() {
            if !rl.is_finite() {
                continue;
            }
            self.log_scaled_monomials(x.u(), x.one_minus_u(), &mut le);
            let theta = x.theta();
            for i in 0..n {
                let mag = (rl + le[i] - log_scale[i]).exp();
                block.push(Complex64::from_polar(mag, i as f64 * theta));
            }
            if block.len() >= rows_per_block * n || idx + 1 == grid.len() {
                r.absorb_rows(&block);
                block.clear();
            }
        }
        if !block.is_empty() {
            r.absorb_rows(&block);
        }
        let diag = r.diag_abs();
        let top = diag.iter().copied().fold(0.0, f64::max);
        let rank = diag.iter().filter(|&&d| d > RANK_TOL * top).count();
        if rank < n {
            return Err(Error::IllConditioned { rank, dim: self.dim });
        }
        Ok(Basis::Dense { log_scale, r })
    }

    /// Values of the orthonormal basis sections at `x`, as `(shift, v)` with
    /// `S_j(x) = e^{shift} v_j` in the `h^p` frame norm (the phase is that of
    /// the chart-normalized free factor).
    pub fn basis_values(&self, x: &ProjectivePoint) -> (f64, Vec<Complex64>) {
        self.basis_values_with_phi(x, self.weight.eval(x))
    }

    pub fn basis_values_with_phi(&self, x: &ProjectivePoint, phi: f64) -> (f64, Vec<Complex64>) {
        let lg = self.log_prefactor(x, phi);
        let mut le = Vec::new();
        self.log_scaled_monomials(x.u(), x.one_minus_u(), &mut le);
        let theta = x.theta();
        let scales: &[f64] = match &self.basis {
            Basis::Diagonal { log_norms } => log_norms,
            Basis::Dense { log_scale, .. } => log_scale,
        };
        let rel: Vec<f64> = le.iter().zip(scales).map(|(l, s)| l - s).collect();
        let s = rel.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !lg.is_finite() || !s.is_finite() {
            return (f64::NEG_INFINITY, vec![Complex64::new(0.0, 0.0); self.dim]);
        }
        let b: Vec<Complex64> = rel
            .iter()
            .enumerate()
            .map(|(i, r)| Complex64::from_polar((r - s).exp(), i as f64 * theta))
            .collect();
        let v = match &self.basis {
            Basis::Diagonal { .. } => b,
            Basis::Dense { r, .. } => r.solve_transpose(&b),
        };
        (0.5 * lg + s, v)
    }

    /// `ln P_p(x)`.
    pub fn log_kernel(&self, x: &ProjectivePoint) -> f64 {
        self.log_kernel_with_phi(x, self.weight.eval(x))
    }

    pub fn log_kernel_with_phi(&self, x: &ProjectivePoint, phi: f64) -> f64 {
        let (shift, v) = self.basis_values_with_phi(x, phi);
        if !shift.is_finite() {
            return f64::NEG_INFINITY;
        }
        let n2: f64 = v.iter().map(|z| z.norm_sqr()).sum();
        2.0 * shift + n2.ln()
    }

    /// `P_p(x) = Σ_j |S_j(x)|²_{h^p}`.
    pub fn kernel(&self, x: &ProjectivePoint) -> f64 {
        self.log_kernel(x).exp()
    }

    /// Coefficients `dᵢ` of a section in the scaled-monomial basis of the free
    /// factor, given its coordinates in the orthonormal basis. Returned as
    /// `(log_scale, d)` with the true coefficients `e^{log_scale} d`.
    pub fn scaled_coefficients(&self, onb_coords: &[Complex64]) -> (f64, Vec<Complex64>) {
        debug_assert_eq!(onb_coords.len(), self.dim);
        let (x, scales) = match &self.basis {
            Basis::Diagonal { log_norms } => (onb_coords.to_vec(), log_norms),
            Basis::Dense { log_scale, r } => (r.solve(onb_coords), log_scale),
        };
        rescale(&x, |i| -scales[i])
    }

    /// Plain monomial coefficients of the free factor `q`, normalized so the
    /// largest has modulus one. The section itself is `B·q` up to scale.
    pub fn free_factor_coefficients(&self, onb_coords: &[Complex64]) -> Vec<Complex64> {
        let (_, d) = self.scaled_coefficients(onb_coords);
        let (_, q) = rescale(&d, |i| 0.5 * self.log_binom[i]);
        q
    }

    /// The orthonormal basis as rows of scaled-monomial coefficients.
    pub fn onb_coefficients(&self) -> Vec<Vec<Complex64>> {
        (0..self.dim)
            .map(|j| {
                let mut e = vec![Complex64::new(0.0, 0.0); self.dim];
                e[j] = Complex64::new(1.0, 0.0);
                let (s, d) = self.scaled_coefficients(&e);
                d.into_iter().map(|c| c * s.exp()).collect()
            })
            .collect()
    }
}

/// Multiplies `x_i` by `e^{extra(i)}` and renormalizes to max modulus one.
fn rescale<F: Fn(usize) -> f64>(x: &[Complex64], extra: F) -> (f64, Vec<Complex64>) {
    let logs: Vec<f64> = x.iter().enumerate().map(|(i, z)| z.norm().ln() + extra(i)).collect();
    let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let out = x
        .iter()
        .zip(&logs)
        .map(|(z, l)| {
            if z.norm() == 0.0 {
                Complex64::new(0.0, 0.0)
            } else {
                (*z / z.norm()) * (l - top).exp()
            }
        })
        .collect();
    (top, out)
}

pub(crate) fn log_sum_exp(values: &[f64]) -> f64 {
    let top = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !top.is_finite() {
        return top;
    }
    top + values.iter().map(|v| (v - top).exp()).sum::<f64>().ln()
}

/// `P_p`, `log P_p` and the global Fubini–Study potential `φ_p = φ + (1/2p) log P_p`
/// at the nodes of a grid.
#[derive(Clone, Debug)]
pub struct BergmanField {
    pub k: u32,
    pub p: u32,
    pub dim: usize,
    pub kernel: GridField,
    pub log_kernel: GridField,
    pub phi_p: GridField,
}

impl BergmanField {
    pub fn compute(space: &SectionSpace, grid: &SphereGrid) -> Self {
        let phi = space.weight().sample(grid);
        let log_kernel = if space.is_rotation_invariant() {
            let na = grid.n_angular();
            let rings: Vec<f64> = (0..grid.n_radial())
                .map(|i| space.log_kernel_with_phi(&grid.nodes()[i * na], phi.values[i * na]))
                .collect();
            GridField::from_rings(grid, &rings)
        } else {
            let values = grid
                .nodes()
                .iter()
                .zip(&phi.values)
                .map(|(x, &f)| space.log_kernel_with_phi(x, f))
                .collect();
            GridField { n_radial: grid.n_radial(), n_angular: grid.n_angular(), values }
        };
        let p = f64::from(space.p());
        let kernel = log_kernel.map(f64::exp);
        let phi_p = phi.zip_with(&log_kernel, |f, l| f + l / (2.0 * p));
        Self { k: space.k(), p: space.p(), dim: space.dim(), kernel, log_kernel, phi_p }
    }

    /// `∫ P_p dω_FS`, which equals the dimension.
    pub fn trace(&self, grid: &SphereGrid) -> f64 {
        self.kernel.integrate(grid)
    }
}

pub fn bergman_field(space: &SectionSpace, grid: &SphereGrid) -> Result<BergmanField, Error> {
    if space.grid_dims() != (grid.n_radial(), grid.n_angular()) {
        let need = SphereGrid::floor_for(space.k(), space.p());
        if grid.n_radial() < need.0 || grid.n_angular() < need.1 {
            return Err(Error::GridBelowFloor { need, have: (grid.n_radial(), grid.n_angular()) });
        }
    }
    Ok(BergmanField::compute(space, grid))
}

/// Outcome of sampling the extremal property `P_p(x) = max |S(x)|²` over unit sections.
#[derive(Clone, Debug)]
pub struct VariationalReport {
    pub kernel: f64,
    pub max_sample: f64,
    /// `(trial, value)` for samples above `P_p(x)(1 + 1e-6)`.
    pub violations: Vec<(usize, f64)>,
    pub extremal_value: f64,
    pub extremal_rel_error: f64,
}

impl VariationalReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty() && (self.kernel == 0.0 && self.extremal_value == 0.0 || self.extremal_rel_error <= 1e-8)
    }
}

/// Draws a standard complex Gaussian vector normalized to the unit sphere.
pub fn random_unit_vector(rng: &mut ChaCha8Rng, n: usize) -> Vec<Complex64> {
    let mut v: Vec<Complex64> = (0..n)
        .map(|_| {
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            Complex64::new(re, im)
        })
        .collect();
    let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    for z in &mut v {
        *z /= norm;
    }
    v
}

pub fn variational_check(space: &SectionSpace, x: &ProjectivePoint, trials: usize, seed: u64) -> VariationalReport {
    let (shift, v) = space.basis_values(x);
    let scale = (2.0 * shift).exp();
    let norm2: f64 = v.iter().map(|z| z.norm_sqr()).sum();
    let kernel = if shift.is_finite() { scale * norm2 } else { 0.0 };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut violations = Vec::new();
    let mut max_sample: f64 = 0.0;
    for trial in 0..trials {
        let xi = random_unit_vector(&mut rng, space.dim());
        let s: Complex64 = xi.iter().zip(&v).map(|(a, b)| a * b).sum();
        let value = if shift.is_finite() { scale * s.norm_sqr() } else { 0.0 };
        max_sample = max_sample.max(value);
        if value > kernel * (1.0 + 1e-6) {
            violations.push((trial, value));
        }
    }
    // normalized reproducing kernel at x: coordinates conj(v)/|v|
    let extremal_value = if norm2 > 0.0 && shift.is_finite() {
        let nv = norm2.sqrt();
        let s: Complex64 = v.iter().map(|b| b.conj() / nv * b).sum();
        scale * s.norm_sqr()
    } else {
        0.0
    };
    let extremal_rel_error = if kernel > 0.0 { (extremal_value - kernel).abs() / kernel } else { 0.0 };
    VariationalReport { kernel, max_sample, violations, extremal_value, extremal_rel_error }
}
