//! Exact envelopes for rotation-invariant data.
//!
//! Write `t = log|z|` and `ψ₀(t) = ½ log(1 + e^{2t})`. A radial function `v(t)`
//! is `k ω_FS`-subharmonic exactly when `g = v + k ψ₀` is convex, and its
//! Lelong numbers are `g'(−∞)` at `0` and `k − g'(+∞)` at `∞`. The equilibrium
//! envelope is therefore `h − k ψ₀`, where `h` is the largest convex minorant of
//! `f + k ψ₀` whose slopes stay in `[τ₀, k − τ_∞]`.
//!
//! `h` is built from a dense sample of `g` on `[−T, T]`: lower hull by monotone
//! chain, cut at the two tangency vertices, extended by rays of the extreme
//! slopes. Off the rays `h` is piecewise linear between hull vertices.

use alloc::vec::Vec;

#[allow(unused_imports)] // unused when a dependency enables std float methods
use num_traits::Float;

use crate::error::Error;
use crate::geometry::{PoleSet, ProjectivePoint};
use crate::quadrature::{GridField, SphereGrid};
use crate::weight::WeightSpec;

/// Half-width of the sampled `t` interval.
pub const T_MAX: f64 = 30.0;
/// Number of samples of `g`.
pub const SAMPLES: usize = 120_001;

#[derive(Clone, Debug)]
pub struct RadialEnvelope {
    k: f64,
    tau0: f64,
    tau_inf: f64,
    /// Hull vertices `(t, h)` from the left tangency to the right tangency.
    hull: Vec<(f64, f64)>,
    /// Hull edges `(t_a, t_b)` along which `h` lies strictly below `g`.
    free_edges: Vec<(f64, f64)>,
}

/// Gap between `g` and its hull above which an edge counts as free.
const CONTACT_GAP: f64 = 1e-9;

/// `(u, 1 − u)` at `t = log|z|`, both without cancellation.
fn u_pair(t: f64) -> (f64, f64) {
    let e = (2.0 * t).exp();
    if t <= 0.0 {
        (1.0 / (1.0 + e), e / (1.0 + e))
    } else {
        let f = (-2.0 * t).exp();
        (f / (1.0 + f), 1.0 / (1.0 + f))
    }
}

fn psi0(t: f64) -> f64 {
    // ½ log(1 + e^{2t}) = max(t, 0) + ½ log(1 + e^{−2|t|})
    t.max(0.0) + 0.5 * (-2.0 * t.abs()).exp().ln_1p()
}

pub fn radial_oracle(k: u32, poles: &PoleSet, weight: &WeightSpec) -> Result<RadialEnvelope, Error> {
    if !poles.on_axis() {
        return Err(Error::OffAxisPole);
    }
    if !weight.is_radial() {
        return Err(Error::NonRadialWeight);
    }
    let kf = f64::from(k);
    let (tau0, tau_inf) = poles.axis_rates();
    if !crate::sections::theta_is_positive(kf - tau0 - tau_inf, k) {
        return Err(Error::NotBig { theta_mass: kf - tau0 - tau_inf });
    }
    let spacing = 2.0 * T_MAX / (SAMPLES - 1) as f64;
    let samples: Vec<(f64, f64)> = (0..SAMPLES)
        .map(|i| {
            let t = -T_MAX + spacing * i as f64;
            let (u, v) = u_pair(t);
            let f = weight.radial_profile(u, v).unwrap_or(0.0);
            (t, f + kf * psi0(t))
        })
        .collect();
    let idx = lower_hull(&samples);
    let hull: Vec<(f64, f64)> = idx.iter().map(|&i| samples[i]).collect();
    let (s0, s1) = (tau0, kf - tau_inf);
    let a = argmin_support(&hull, s0);
    let b = argmin_support(&hull, s1);
    let mut free_edges = Vec::new();
    for w in idx[a..=b].windows(2) {
        let (p, q) = (samples[w[0]], samples[w[1]]);
        let slope = (q.1 - p.1) / (q.0 - p.0);
        let gap = samples[w[0]..w[1]]
            .iter()
            .map(|s| s.1 - (p.1 + slope * (s.0 - p.0)))
            .fold(0.0, f64::max);
        if gap > CONTACT_GAP {
            free_edges.push((p.0, q.0));
        }
    }
    Ok(RadialEnvelope { k: kf, tau0, tau_inf, hull: hull[a..=b].to_vec(), free_edges })
}

/// Indices of the lower convex hull of points sorted by abscissa.
pub fn lower_hull(points: &[(f64, f64)]) -> Vec<usize> {
    let mut hull: Vec<usize> = Vec::with_capacity(points.len());
    for (i, &p) in points.iter().enumerate() {
        while hull.len() >= 2 {
            let (o, a) = (points[hull[hull.len() - 2]], points[hull[hull.len() - 1]]);
            let cross = (a.0 - o.0) * (p.1 - o.1) - (a.1 - o.1) * (p.0 - o.0);
            if cross <= 0.0 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(i);
    }
    hull
}

/// Hull vertex touched by the supporting line of slope `s`.
fn argmin_support(hull: &[(f64, f64)], s: f64) -> usize {
    let mut best = 0;
    for (i, &(t, g)) in hull.iter().enumerate() {
        if g - s * t < hull[best].1 - s * hull[best].0 {
            best = i;
        }
    }
    best
}

enum Piece {
    Left,
    Inner(f64, f64),
    Right,
}

impl RadialEnvelope {
    pub fn theta_mass(&self) -> f64 {
        self.k - self.tau0 - self.tau_inf
    }

    fn left(&self) -> (f64, f64) {
        self.hull[0]
    }

    fn right(&self) -> (f64, f64) {
        self.hull[self.hull.len() - 1]
    }

    fn piece(&self, t: f64) -> Piece {
        if t <= self.left().0 {
            return Piece::Left;
        }
        if t >= self.right().0 {
            return Piece::Right;
        }
        let i = self.hull.partition_point(|v| v.0 <= t);
        let (a, b) = (self.hull[i - 1], self.hull[i]);
        let slope = (b.1 - a.1) / (b.0 - a.0);
        Piece::Inner(a.1 + slope * (t - a.0), slope)
    }

    /// `h'(t)`, the `T_eq`-mass of `{|z| < e^t}` minus the atom at `0`, plus `τ₀`.
    pub fn slope(&self, t: f64) -> f64 {
        match self.piece(t) {
            Piece::Left => self.tau0,
            Piece::Inner(_, s) => s,
            Piece::Right => self.k - self.tau_inf,
        }
    }

    /// `φ_req` as a function of `(u, 1 − u)`; finite at both poles.
    pub fn phi_req_u(&self, u: f64, one_minus_u: f64) -> f64 {
        let m = self.theta_mass();
        let psi = -0.5 * u.ln();
        let l0 = 0.5 * one_minus_u.ln();
        let t = l0 + psi;
        match self.piece(t) {
            Piece::Left => {
                let (ta, ga) = self.left();
                ga - self.tau0 * ta - m * psi
            }
            Piece::Right => {
                let (tb, gb) = self.right();
                gb - (self.k - self.tau_inf) * tb + m * l0
            }
            Piece::Inner(h, _) => h - self.k * psi - self.tau0 * l0 + self.tau_inf * psi,
        }
    }

    /// `φ_eq = φ_req + τ₀ log σ₀ + τ_∞ log σ_∞`.
    pub fn phi_eq_u(&self, u: f64, one_minus_u: f64) -> f64 {
        let mut v = self.phi_req_u(u, one_minus_u);
        if self.tau0 > 0.0 {
            v += self.tau0 * 0.5 * one_minus_u.ln();
        }
        if self.tau_inf > 0.0 {
            v += self.tau_inf * 0.5 * u.ln();
        }
        v
    }

    pub fn phi_req(&self, x: &ProjectivePoint) -> f64 {
        self.phi_req_u(x.u(), x.one_minus_u())
    }

    pub fn phi_eq(&self, x: &ProjectivePoint) -> f64 {
        self.phi_eq_u(x.u(), x.one_minus_u())
    }

    pub fn phi_req_field(&self, grid: &SphereGrid) -> GridField {
        let rings: Vec<f64> = grid
            .ring_u()
            .iter()
            .zip(grid.ring_one_minus_u())
            .map(|(&u, &v)| self.phi_req_u(u, v))
            .collect();
        GridField::from_rings(grid, &rings)
    }

    pub fn phi_eq_field(&self, grid: &SphereGrid) -> GridField {
        let rings: Vec<f64> = grid
            .ring_u()
            .iter()
            .zip(grid.ring_one_minus_u())
            .map(|(&u, &v)| self.phi_eq_u(u, v))
            .collect();
        GridField::from_rings(grid, &rings)
    }

    /// Radii `|z|` bounding the non-contact annuli, increasing. A ray counts
    /// as non-contact only when its slope constraint is active (`τ > 0`).
    pub fn free_boundary_radii(&self) -> Vec<f64> {
        let mut out = Vec::new();
        if self.tau0 > 0.0 {
            out.push(self.left().0.exp());
        }
        for &(a, b) in &self.free_edges {
            out.push(a.exp());
            out.push(b.exp());
        }
        if self.tau_inf > 0.0 {
            out.push(self.right().0.exp());
        }
        out.sort_by(|a, b| a.total_cmp(b));
        out.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * b.abs());
        out
    }

    /// Distribution function of `u = 1/(1+|z|²)` under the normalized
    /// non-atomic part of `T_eq`.
    pub fn u_cdf(&self, u: f64) -> f64 {
        if u <= 0.0 {
            return 0.0;
        }
        if u >= 1.0 {
            return 1.0;
        }
        let t = 0.5 * ((1.0 - u).ln() - u.ln());
        let s1 = self.k - self.tau_inf;
        ((s1 - self.slope(t)) / (s1 - self.tau0)).clamp(0.0, 1.0)
    }
}
