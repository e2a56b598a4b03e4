//! Points of the Riemann sphere, chordal distance and the Fubini–Study weight.
//!
//! The Fubini–Study form is normalized to total mass one. In the coordinate
//! `u = 1/(1+|z|²)` it is `du dθ / 2π`, so `u` is uniformly distributed under it.

use alloc::vec::Vec;
use core::f64::consts::PI;

use num_complex::Complex64;
#[allow(unused_imports)] // unused when a dependency enables std float methods
use num_traits::Float;

use crate::error::Error;

/// Which affine chart a [`ProjectivePoint`] is stored in.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Chart {
    /// `z` with `|z| <= 1`.
    Affine,
    /// `w = 1/z` with `|w| < 1` (and `w = 0` for the point at infinity).
    Infinity,
}

/// A point of ℂP¹ in two-chart form.
///
/// The representation is canonical: the affine chart is used exactly when
/// `|z| <= 1`, so the modulus of the stored coordinate never exceeds one.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProjectivePoint {
    chart: Chart,
    coord: Complex64,
}

impl ProjectivePoint {
    pub fn affine(z: Complex64) -> Self {
        if z.norm_sqr() <= 1.0 {
            Self { chart: Chart::Affine, coord: z }
        } else {
            Self { chart: Chart::Infinity, coord: z.inv() }
        }
    }

    /// The point with coordinate `w` in the chart at infinity, i.e. `z = 1/w`.
    pub fn from_infinity_chart(w: Complex64) -> Self {
        if w.norm_sqr() < 1.0 {
            Self { chart: Chart::Infinity, coord: w }
        } else {
            Self { chart: Chart::Affine, coord: w.inv() }
        }
    }

    pub fn origin() -> Self {
        Self { chart: Chart::Affine, coord: Complex64::new(0.0, 0.0) }
    }

    pub fn infinity() -> Self {
        Self { chart: Chart::Infinity, coord: Complex64::new(0.0, 0.0) }
    }

    pub fn from_real(x: f64) -> Self {
        Self::affine(Complex64::new(x, 0.0))
    }

    /// Builds the point with `u = 1/(1+|z|²)` and `arg z = theta`. Both `u`
    /// and `1 - u` are passed so that neither has to be formed by cancellation.
    pub fn from_u_theta(u: f64, one_minus_u: f64, theta: f64) -> Self {
        let phase = Complex64::from_polar(1.0, theta);
        if u >= one_minus_u {
            let r = (one_minus_u / u).sqrt();
            Self { chart: Chart::Affine, coord: phase * r }
        } else {
            let r = (u / one_minus_u).sqrt();
            Self { chart: Chart::Infinity, coord: phase.conj() * r }
        }
    }

    pub fn chart(&self) -> Chart {
        self.chart
    }

    pub fn coord(&self) -> Complex64 {
        self.coord
    }

    pub fn is_infinity(&self) -> bool {
        self.chart == Chart::Infinity && self.coord == Complex64::new(0.0, 0.0)
    }

    /// Affine coordinate `z`, or `None` at infinity.
    pub fn z(&self) -> Option<Complex64> {
        match self.chart {
            Chart::Affine => Some(self.coord),
            Chart::Infinity if self.is_infinity() => None,
            Chart::Infinity => Some(self.coord.inv()),
        }
    }

    /// `u = 1/(1+|z|²)`.
    pub fn u(&self) -> f64 {
        let s = self.coord.norm_sqr();
        match self.chart {
            Chart::Affine => 1.0 / (1.0 + s),
            Chart::Infinity => s / (1.0 + s),
        }
    }

    /// `1 - u = |z|²/(1+|z|²)`, computed without cancellation.
    pub fn one_minus_u(&self) -> f64 {
        let s = self.coord.norm_sqr();
        match self.chart {
            Chart::Affine => s / (1.0 + s),
            Chart::Infinity => 1.0 / (1.0 + s),
        }
    }

    /// `arg z` in `(-π, π]` (zero at the two poles).
    pub fn theta(&self) -> f64 {
        match self.chart {
            Chart::Affine => self.coord.arg(),
            Chart::Infinity => (-self.coord.im).atan2(self.coord.re),
        }
    }

    /// `log |z|`; `±∞` at the poles.
    pub fn log_modulus(&self) -> f64 {
        let l = 0.5 * self.coord.norm_sqr().ln();
        match self.chart {
            Chart::Affine => l,
            Chart::Infinity => -l,
        }
    }

    /// Image on the unit sphere under inverse stereographic projection;
    /// `z = 0` goes to the north pole `(0, 0, 1)`.
    pub fn to_sphere(&self) -> [f64; 3] {
        let s = self.coord.norm_sqr();
        let d = 1.0 + s;
        match self.chart {
            Chart::Affine => {
                let v = self.coord * (2.0 / d);
                [v.re, v.im, (1.0 - s) / d]
            }
            Chart::Infinity => {
                let v = self.coord.conj() * (2.0 / d);
                [v.re, v.im, (s - 1.0) / d]
            }
        }
    }

    pub fn from_sphere(x: [f64; 3]) -> Self {
        // z = (x1 + i x2) / (1 - x3), w = (x1 - i x2) / (1 + x3)
        if x[2] >= 0.0 {
            Self::affine(Complex64::new(x[0], x[1]) / (1.0 + x[2]))
        } else {
            Self::from_infinity_chart(Complex64::new(x[0], -x[1]) / (1.0 - x[2]))
        }
    }
}

/// Chordal distance `|z-a| / sqrt((1+|z|²)(1+|a|²))`.
///
/// This is also the pointwise Fubini–Study norm of the canonical section of
/// `O(1)` vanishing at `a`, so `dd^c log σ_a = δ_a − ω_FS`.
pub fn chordal_sigma(x: &ProjectivePoint, a: &ProjectivePoint) -> f64 {
    let (p, q) = (x.coord, a.coord);
    let num = match (x.chart, a.chart) {
        (Chart::Affine, Chart::Affine) | (Chart::Infinity, Chart::Infinity) => (p - q).norm(),
        _ => (p * q - 1.0).norm(),
    };
    let den = ((1.0 + p.norm_sqr()) * (1.0 + q.norm_sqr())).sqrt();
    (num / den).min(1.0)
}

/// `log` of [`chordal_sigma`]; `-∞` at coincident points.
pub fn log_chordal_sigma(x: &ProjectivePoint, a: &ProjectivePoint) -> f64 {
    chordal_sigma(x, a).ln()
}

/// The smooth weight `(k/2) log(1+|z|²) = -(k/2) log u` of the Fubini–Study
/// metric on `O(k)` relative to the affine frame. The same function written in
/// the chart at infinity is `(k/2) log(1+|w|²) + k log|1/w|`.
pub fn fs_weight(x: &ProjectivePoint, k: u32) -> f64 {
    -0.5 * f64::from(k) * x.u().ln()
}

/// A pole: a point with a positive vanishing rate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pole {
    pub point: ProjectivePoint,
    pub tau: f64,
}

/// The pairs `(a_j, τ_j)`: pairwise distinct points with positive rates.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PoleSet {
    poles: Vec<Pole>,
}

impl PoleSet {
    pub fn empty() -> Self {
        Self { poles: Vec::new() }
    }

    pub fn new(poles: Vec<Pole>) -> Result<Self, Error> {
        for (i, p) in poles.iter().enumerate() {
            if !(p.tau > 0.0) || !p.tau.is_finite() {
                return Err(Error::InvalidTau(p.tau));
            }
            for q in &poles[..i] {
                if chordal_sigma(&p.point, &q.point) <= 0.0 {
                    return Err(Error::CoincidentPoles);
                }
            }
        }
        Ok(Self { poles })
    }

    pub fn from_pairs(pairs: &[(ProjectivePoint, f64)]) -> Result<Self, Error> {
        Self::new(pairs.iter().map(|&(point, tau)| Pole { point, tau }).collect())
    }

    pub fn poles(&self) -> &[Pole] {
        &self.poles
    }

    pub fn len(&self) -> usize {
        self.poles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poles.is_empty()
    }

    pub fn total_tau(&self) -> f64 {
        self.poles.iter().map(|p| p.tau).sum()
    }

    /// Vanishing-order thresholds `t_j(p)`, one per pole.
    pub fn thresholds(&self, p: u32) -> Vec<u32> {
        self.poles
            .iter()
            .map(|pole| crate::sections::threshold(pole.tau, p).expect("validated tau"))
            .collect()
    }

    /// True when every pole sits at `0` or `∞`, the rotation-invariant case.
    pub fn on_axis(&self) -> bool {
        self.poles
            .iter()
            .all(|p| p.point.coord == Complex64::new(0.0, 0.0))
    }

    /// Rates at `0` and at `∞` (zero when absent).
    pub fn axis_rates(&self) -> (f64, f64) {
        let mut at_zero = 0.0;
        let mut at_inf = 0.0;
        for p in &self.poles {
            if p.point.coord == Complex64::new(0.0, 0.0) {
                match p.point.chart {
                    Chart::Affine => at_zero += p.tau,
                    Chart::Infinity => at_inf += p.tau,
                }
            }
        }
        (at_zero, at_inf)
    }

    /// `Σ_j τ_j log σ_j(x)`.
    pub fn weighted_log_sigma(&self, x: &ProjectivePoint) -> f64 {
        self.poles
            .iter()
            .map(|p| p.tau * log_chordal_sigma(x, &p.point))
            .sum()
    }

    /// Smallest chordal distance from `x` to a pole (1 when there are none).
    pub fn min_distance(&self, x: &ProjectivePoint) -> f64 {
        self.poles
            .iter()
            .map(|p| chordal_sigma(x, &p.point))
            .fold(1.0, f64::min)
    }
}

/// Uniform point on the sphere from two uniforms in `[0,1)`.
pub(crate) fn uniform_point(a: f64, b: f64) -> ProjectivePoint {
    let u = a.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON);
    ProjectivePoint::from_u_theta(u, 1.0 - u, 2.0 * PI * b)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn chordal_examples() {
        let zero = ProjectivePoint::origin();
        assert_eq!(chordal_sigma(&zero, &zero), 0.0);
        assert!((chordal_sigma(&zero, &ProjectivePoint::infinity()) - 1.0).abs() < 1e-15);
        let one = ProjectivePoint::from_real(1.0);
        let s = chordal_sigma(&one, &zero);
        assert!((s - 0.5f64.sqrt()).abs() < 1e-15);
        // homogeneous coordinates [1:1] and [1:0]: |det| / (|v||w|)
        let det: f64 = 1.0;
        assert!((s - det / (2.0f64.sqrt() * 1.0)).abs() < 1e-15);
    }

    #[test]
    fn canonical_chart_choice() {
        let p = ProjectivePoint::affine(c(1.0, 0.0));
        assert_eq!(p.chart(), Chart::Affine);
        let q = ProjectivePoint::affine(c(0.0, 1.5));
        assert_eq!(q.chart(), Chart::Infinity);
        let r = ProjectivePoint::from_infinity_chart(c(0.0, 1.0));
        assert_eq!(r.chart(), Chart::Affine);
        assert!(chordal_sigma(&r, &ProjectivePoint::affine(c(0.0, -1.0))) < 1e-15);
    }

    #[test]
    fn both_representations_agree() {
        for &z in &[c(0.3, -0.2), c(3.0, 4.0), c(-1e6, 2.0), c(1e-9, 0.0)] {
            let a = ProjectivePoint::affine(z);
            let b = ProjectivePoint::from_infinity_chart(z.inv());
            // w = 1/z is rounded, so the two stored points agree to rounding only
            assert!(chordal_sigma(&a, &b) < 1e-15);
            assert!((a.u() - b.u()).abs() < 1e-15);
            assert!((a.theta() - b.theta()).abs() < 1e-12);
        }
    }

    #[test]
    fn sphere_round_trip() {
        for &z in &[c(0.3, -0.2), c(3.0, 4.0), c(0.0, 0.0), c(-2.0, 0.5)] {
            let p = ProjectivePoint::affine(z);
            let x = p.to_sphere();
            let n = x[0] * x[0] + x[1] * x[1] + x[2] * x[2];
            assert!((n - 1.0).abs() < 1e-14);
            let q = ProjectivePoint::from_sphere(x);
            assert!(chordal_sigma(&p, &q) < 1e-14);
            // chordal distance is half the euclidean distance in R^3
            let a = ProjectivePoint::affine(c(0.7, 0.1));
            let y = a.to_sphere();
            let e = ((x[0] - y[0]).powi(2) + (x[1] - y[1]).powi(2) + (x[2] - y[2]).powi(2)).sqrt();
            assert!((chordal_sigma(&p, &a) - e / 2.0).abs() < 1e-14);
        }
    }

    #[test]
    fn fs_weight_examples() {
        assert_eq!(fs_weight(&ProjectivePoint::origin(), 1), 0.0);
        let p = ProjectivePoint::affine(Complex64::from_polar(1.0, 0.7));
        assert!((fs_weight(&p, 2) - 2.0f64.ln()).abs() < 1e-15);
        // chart formula at infinity
        let w = c(0.2, 0.1);
        let q = ProjectivePoint::from_infinity_chart(w);
        let direct = 1.5 * (1.0 + w.norm_sqr()).ln() + 3.0 * (1.0 / w.norm()).ln();
        assert!((fs_weight(&q, 3) - direct).abs() < 1e-13);
    }

    #[test]
    fn pole_set_validation() {
        let z = ProjectivePoint::origin();
        assert!(matches!(PoleSet::from_pairs(&[(z, 0.0)]), Err(Error::InvalidTau(_))));
        assert!(matches!(
            PoleSet::from_pairs(&[(z, 0.2), (ProjectivePoint::affine(c(0.0, 0.0)), 0.3)]),
            Err(Error::CoincidentPoles)
        ));
        let ps = PoleSet::from_pairs(&[(z, 0.2), (ProjectivePoint::infinity(), 0.3)]).unwrap();
        assert!(ps.on_axis());
        assert_eq!(ps.axis_rates(), (0.2, 0.3));
    }
}
