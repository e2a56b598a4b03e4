//! Tensor quadrature on the sphere: Gauss–Legendre in `u = 1/(1+|z|²)` times
//! the trapezoid rule in `arg z`.

use alloc::vec::Vec;
use core::f64::consts::PI;

#[allow(unused_imports)] // unused when a dependency enables std float methods
use num_traits::Float;

use crate::error::Error;
use crate::geometry::ProjectivePoint;

/// Gauss–Legendre rule on `[0, 1]`.
///
/// Nodes are returned in increasing order together with `1 - node` computed
/// from the half-angle form, so both ends of the interval keep full relative
/// precision.
#[derive(Clone, Debug)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub complements: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(n: usize) -> Self {
        let mut nodes = alloc::vec![0.0; n];
        let mut complements = alloc::vec![0.0; n];
        let mut weights = alloc::vec![0.0; n];
        let nf = n as f64;
        // Newton iteration on P_n(cos φ) in the angle φ, one root per half.
        for k in 0..n.div_ceil(2) {
            let mut phi = PI * (4.0 * k as f64 + 3.0) / (4.0 * nf + 2.0);
            for _ in 0..100 {
                let x = phi.cos();
                let (pn, pm) = legendre_pair(n, x);
                // dP_n/dφ = -sin φ · P_n'(x),  (1-x²) P_n'(x) = n (P_{n-1} - x P_n)
                let dp = -nf * (pm - x * pn) / phi.sin();
                let step = pn / dp;
                phi -= step;
                if step.abs() < 1e-16 {
                    break;
                }
            }
            let (_, pn_1) = legendre_pair(n, phi.cos());
            let s = phi.sin();
            // weight on [-1,1] is 2 sin²φ / (n P_{n-1})²; halve for [0,1]
            let w = s * s / (nf * pn_1).powi(2);
            let half_sin = (0.5 * phi).sin();
            let half_cos = (0.5 * phi).cos();
            // x = cos φ > 0 ⇒ u = (1+x)/2 = cos²(φ/2) near 1
            let hi = n - 1 - k;
            nodes[hi] = half_cos * half_cos;
            complements[hi] = half_sin * half_sin;
            weights[hi] = w;
            nodes[k] = half_sin * half_sin;
            complements[k] = half_cos * half_cos;
            weights[k] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.5;
            complements[n / 2] = 0.5;
        }
        Self { nodes, complements, weights }
    }
}

// (P_n(x), P_{n-1}(x)) by the three-term recurrence.
fn legendre_pair(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for j in 2..=n {
        let jf = j as f64;
        let p2 = ((2.0 * jf - 1.0) * x * p1 - (jf - 1.0) * p0) / jf;
        p0 = p1;
        p1 = p2;
    }
    (p1, p0)
}

/// Compensated sum.
pub fn kahan_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0;
    let mut c = 0.0;
    for v in values {
        let y = v - c;
        let t = sum + y;
        c = (t - sum) - y;
        sum = t;
    }
    sum
}

/// Quadrature grid for integrals against `ω_FS`.
///
/// Nodes are stored ring by ring: node `i * n_angular + j` sits at the `i`-th
/// Gauss–Legendre node in `u` (increasing, so ring 0 is closest to `∞`) and
/// angle `2π j / n_angular`.
#[derive(Clone, Debug)]
pub struct SphereGrid {
    n_radial: usize,
    n_angular: usize,
    u: Vec<f64>,
    one_minus_u: Vec<f64>,
    u_weights: Vec<f64>,
    nodes: Vec<ProjectivePoint>,
    weights: Vec<f64>,
}

pub const MIN_RADIAL: usize = 2;
pub const MIN_ANGULAR: usize = 4;

impl SphereGrid {
    pub fn new(n_radial: usize, n_angular: usize) -> Result<Self, Error> {
        if n_radial < MIN_RADIAL || n_angular < MIN_ANGULAR {
            return Err(Error::GridTooSmall { n_radial, n_angular });
        }
        let gl = GaussLegendre::new(n_radial);
        let mut nodes = Vec::with_capacity(n_radial * n_angular);
        let mut weights = Vec::with_capacity(n_radial * n_angular);
        for i in 0..n_radial {
            for j in 0..n_angular {
                let theta = 2.0 * PI * j as f64 / n_angular as f64;
                nodes.push(ProjectivePoint::from_u_theta(gl.nodes[i], gl.complements[i], theta));
                weights.push(gl.weights[i] / n_angular as f64);
            }
        }
        Ok(Self {
            n_radial,
            n_angular,
            u: gl.nodes,
            one_minus_u: gl.complements,
            u_weights: gl.weights,
            nodes,
            weights,
        })
    }

    /// Smallest grid resolving the weighted products of degree-`kp` sections.
    pub fn floor_for(k: u32, p: u32) -> (usize, usize) {
        (2 * p as usize + 16, 2 * (k as usize * p as usize) + 16)
    }

    pub fn n_radial(&self) -> usize {
        self.n_radial
    }

    pub fn n_angular(&self) -> usize {
        self.n_angular
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[ProjectivePoint] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Ring coordinates `u_i`, increasing.
    pub fn ring_u(&self) -> &[f64] {
        &self.u
    }

    pub fn ring_one_minus_u(&self) -> &[f64] {
        &self.one_minus_u
    }

    /// Per-ring weights in `u` (summing to one).
    pub fn ring_weights(&self) -> &[f64] {
        &self.u_weights
    }

    pub fn theta(&self, j: usize) -> f64 {
        2.0 * PI * j as f64 / self.n_angular as f64
    }

    pub fn index(&self, ring: usize, angle: usize) -> usize {
        ring * self.n_angular + angle
    }

    /// `∫ f dω_FS`.
    pub fn integrate<F: Fn(&ProjectivePoint) -> f64>(&self, f: F) -> f64 {
        kahan_sum(self.nodes.iter().zip(&self.weights).map(|(x, w)| w * f(x)))
    }

    /// Short identifier used in exported headers.
    pub fn id(&self) -> alloc::string::String {
        alloc::format!("gl{}x{}", self.n_radial, self.n_angular)
    }
}

/// A scalar field sampled at the nodes of a [`SphereGrid`].
#[derive(Clone, Debug, PartialEq)]
pub struct GridField {
    pub n_radial: usize,
    pub n_angular: usize,
    pub values: Vec<f64>,
}

impl GridField {
    pub fn from_fn<F: Fn(&ProjectivePoint) -> f64>(grid: &SphereGrid, f: F) -> Self {
        Self {
            n_radial: grid.n_radial,
            n_angular: grid.n_angular,
            values: grid.nodes.iter().map(f).collect(),
        }
    }

    pub fn constant(grid: &SphereGrid, c: f64) -> Self {
        Self::from_fn(grid, |_| c)
    }

    /// Field constant on each ring.
    pub fn from_rings(grid: &SphereGrid, ring_values: &[f64]) -> Self {
        let mut values = Vec::with_capacity(grid.len());
        for &v in ring_values {
            values.extend(core::iter::repeat_n(v, grid.n_angular));
        }
        Self { n_radial: grid.n_radial, n_angular: grid.n_angular, values }
    }

    pub fn matches(&self, grid: &SphereGrid) -> bool {
        self.n_radial == grid.n_radial && self.n_angular == grid.n_angular
    }

    pub fn get(&self, ring: usize, angle: usize) -> f64 {
        self.values[ring * self.n_angular + angle]
    }

    pub fn integrate(&self, grid: &SphereGrid) -> f64 {
        debug_assert!(self.matches(grid));
        kahan_sum(self.values.iter().zip(grid.weights()).map(|(v, w)| v * w))
    }

    pub fn map<F: Fn(f64) -> f64>(&self, f: F) -> Self {
        Self {
            n_radial: self.n_radial,
            n_angular: self.n_angular,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_with<F: Fn(f64, f64) -> f64>(&self, other: &Self, f: F) -> Self {
        debug_assert_eq!(self.values.len(), other.values.len());
        Self {
            n_radial: self.n_radial,
            n_angular: self.n_angular,
            values: self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect(),
        }
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn sup_distance(&self, other: &Self) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Mean over the nodes of each ring.
    pub fn ring_means(&self) -> Vec<f64> {
        self.values
            .chunks(self.n_angular)
            .map(|c| c.iter().sum::<f64>() / self.n_angular as f64)
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    // Brute-force midpoint rule, independent of the Gauss–Legendre nodes.
    fn midpoint<F: Fn(f64) -> f64>(f: F, n: usize) -> f64 {
        let h = 1.0 / n as f64;
        (0..n).map(|i| f((i as f64 + 0.5) * h) * h).sum()
    }

    #[test]
    fn weights_sum_to_one() {
        for &(nr, na) in &[(2, 4), (7, 9), (64, 128), (300, 8), (816, 4)] {
            let g = SphereGrid::new(nr, na).unwrap();
            assert_eq!(g.len(), nr * na);
            assert!((kahan_sum(g.weights().iter().copied()) - 1.0).abs() < 1e-12, "{nr}");
            assert!(g.weights().iter().all(|&w| w >= 0.0));
        }
    }

    #[test]
    fn rejects_small_grids() {
        assert!(SphereGrid::new(1, 8).is_err());
        assert!(SphereGrid::new(8, 3).is_err());
    }

    #[test]
    fn polynomial_exactness_in_u() {
        let n = 12;
        let g = GaussLegendre::new(n);
        for deg in 0..2 * n {
            let q: f64 = g.nodes.iter().zip(&g.weights).map(|(x, w)| w * x.powi(deg as i32)).sum();
            assert!((q - 1.0 / (deg as f64 + 1.0)).abs() < 1e-14, "deg {deg}");
        }
        for (x, c) in g.nodes.iter().zip(&g.complements) {
            assert!((x + c - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn integral_examples() {
        let g = SphereGrid::new(64, 128).unwrap();
        let iu = g.integrate(|x| x.u());
        let oracle = midpoint(|u| u, 200_000);
        assert!((iu - 0.5).abs() < 1e-12 && (oracle - 0.5).abs() < 1e-9);
        let zero = ProjectivePoint::origin();
        let is = g.integrate(|x| crate::geometry::chordal_sigma(x, &zero).powi(2));
        assert!((is - 0.5).abs() < 1e-12);
    }

    #[test]
    fn angular_harmonics_vanish() {
        let g = SphereGrid::new(6, 16).unwrap();
        for m in 1..16i32 {
            let re = g.integrate(|x| (m as f64 * x.theta()).cos());
            let im = g.integrate(|x| (m as f64 * x.theta()).sin());
            assert!(re.abs() < 1e-12 && im.abs() < 1e-12, "m = {m}");
        }
    }

    #[test]
    fn refinement_consistency() {
        let a = ProjectivePoint::affine(num_complex::Complex64::new(0.4, -0.3));
        let battery: [&dyn Fn(&ProjectivePoint) -> f64; 3] = [
            &|x| x.to_sphere()[0].powi(2) * x.to_sphere()[2],
            &|x| (x.u() * 3.0).sin(),
            &|x| 1.0 / (1.5 + x.to_sphere()[1]) + crate::geometry::chordal_sigma(x, &a).powi(2),
        ];
        let g1 = SphereGrid::new(24, 48).unwrap();
        let g2 = SphereGrid::new(48, 96).unwrap();
        for f in battery {
            assert!((g1.integrate(f) - g2.integrate(f)).abs() < 1e-8);
        }
    }
}
