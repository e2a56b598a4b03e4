//! Bounded weights `φ` of the metric `h = h₀ e^{-2φ}` and their moduli of
//! continuity.

use alloc::string::String;
use alloc::vec::Vec;
use core::f64::consts::PI;

#[allow(unused_imports)] // unused when a dependency enables std float methods
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::geometry::{chordal_sigma, uniform_point, ProjectivePoint};
use crate::quadrature::{GridField, SphereGrid};

/// `|φ(x) − φ(y)| ≤ constant · dist(x, y)^nu` in chordal distance.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HolderBound {
    pub nu: f64,
    pub constant: f64,
}

/// Closed-form weights.
#[derive(Clone, Debug, PartialEq)]
pub enum Preset {
    Constant(f64),
    /// `c · σ(x, center)`, Lipschitz with constant `c`.
    ChordalLipschitz { center: ProjectivePoint, c: f64 },
    /// `c · |x₃ − level|^ν` on the unit sphere: Hölder of order ν across the
    /// circle `x₃ = level`, rotation invariant.
    ZonalHolder { c: f64, nu: f64, level: f64 },
    /// `c · x₁`, smooth and not rotation invariant.
    Tilted { c: f64 },
    /// `c / (1 + |log|x₃ − level||)`: continuous but not Hölder at `x₃ = level`.
    ZonalLogModulus { c: f64, level: f64 },
}

/// A weight sampled as a function of `u` only, linearly interpolated.
#[derive(Clone, Debug, PartialEq)]
pub struct RadialTable {
    u: Vec<f64>,
    values: Vec<f64>,
}

impl RadialTable {
    pub fn new(mut pairs: Vec<(f64, f64)>) -> Option<Self> {
        if pairs.is_empty() || pairs.iter().any(|(u, v)| !u.is_finite() || !v.is_finite()) {
            return None;
        }
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        Some(Self {
            u: pairs.iter().map(|p| p.0).collect(),
            values: pairs.iter().map(|p| p.1).collect(),
        })
    }

    pub fn eval(&self, u: f64) -> f64 {
        interp(&self.u, &self.values, u)
    }
}

/// Node values on a sphere grid; off-node evaluation interpolates bilinearly in
/// `(u, θ)`.
#[derive(Clone, Debug, PartialEq)]
pub struct GridTable {
    ring_u: Vec<f64>,
    field: GridField,
}

impl GridTable {
    pub fn new(grid: &SphereGrid, field: GridField) -> Option<Self> {
        if !field.matches(grid) || field.values.iter().any(|v| !v.is_finite()) {
            return None;
        }
        Some(Self { ring_u: grid.ring_u().to_vec(), field })
    }

    pub fn field(&self) -> &GridField {
        &self.field
    }

    pub fn eval(&self, x: &ProjectivePoint) -> f64 {
        let na = self.field.n_angular;
        let th = x.theta();
        let th = if th < 0.0 { th + 2.0 * PI } else { th };
        let s = th / (2.0 * PI) * na as f64;
        let j0 = (s.floor() as usize) % na;
        let j1 = (j0 + 1) % na;
        let a = s - s.floor();
        let col = |j: usize| -> f64 {
            let ring: Vec<f64> = (0..self.field.n_radial).map(|i| self.field.get(i, j)).collect();
            interp(&self.ring_u, &ring, x.u())
        };
        (1.0 - a) * col(j0) + a * col(j1)
    }
}

fn interp(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let n = xs.len();
    if n == 1 || x <= xs[0] {
        return ys[0];
    }
    if x >= xs[n - 1] {
        return ys[n - 1];
    }
    let i = xs.partition_point(|&v| v <= x);
    let (x0, x1) = (xs[i - 1], xs[i]);
    let a = (x - x0) / (x1 - x0);
    (1.0 - a) * ys[i - 1] + a * ys[i]
}

#[derive(Clone, Debug, PartialEq)]
pub enum WeightSpec {
    Zero,
    RadialTabulated { table: RadialTable, holder: Option<HolderBound> },
    GridTabulated { table: GridTable, holder: Option<HolderBound> },
    Preset(Preset),
}

impl WeightSpec {
    pub fn constant(c: f64) -> Self {
        WeightSpec::Preset(Preset::Constant(c))
    }

    pub fn eval(&self, x: &ProjectivePoint) -> f64 {
        match self {
            WeightSpec::Zero => 0.0,
            WeightSpec::RadialTabulated { table, .. } => table.eval(x.u()),
            WeightSpec::GridTabulated { table, .. } => table.eval(x),
            WeightSpec::Preset(p) => match *p {
                Preset::Constant(c) => c,
                Preset::ChordalLipschitz { center, c } => c * chordal_sigma(x, &center),
                Preset::ZonalHolder { c, nu, level } => c * (x3(x) - level).abs().powf(nu),
                Preset::Tilted { c } => c * x.to_sphere()[0],
                Preset::ZonalLogModulus { c, level } => log_modulus_profile(c, x3(x) - level),
            },
        }
    }

    /// Values at the grid nodes (stored values when the table lives on this grid).
    pub fn sample(&self, grid: &SphereGrid) -> GridField {
        match self {
            WeightSpec::GridTabulated { table, .. } if table.field.matches(grid) => table.field.clone(),
            _ => GridField::from_fn(grid, |x| self.eval(x)),
        }
    }

    /// The weight as a function of `(u, 1 − u)` when it is rotation invariant.
    pub fn radial_profile(&self, u: f64, one_minus_u: f64) -> Option<f64> {
        let x3 = u - one_minus_u;
        match self {
            WeightSpec::Zero => Some(0.0),
            WeightSpec::RadialTabulated { table, .. } => Some(table.eval(u)),
            WeightSpec::GridTabulated { .. } => None,
            WeightSpec::Preset(p) => match *p {
                Preset::Constant(c) => Some(c),
                Preset::ZonalHolder { c, nu, level } => Some(c * (x3 - level).abs().powf(nu)),
                Preset::ZonalLogModulus { c, level } => Some(log_modulus_profile(c, x3 - level)),
                Preset::ChordalLipschitz { center, c } if center.coord() == num_complex::Complex64::new(0.0, 0.0) => {
                    // σ(x, 0)² = 1 − u and σ(x, ∞)² = u
                    let s2 = match center.chart() {
                        crate::geometry::Chart::Affine => one_minus_u,
                        crate::geometry::Chart::Infinity => u,
                    };
                    Some(c * s2.sqrt())
                }
                _ => None,
            },
        }
    }

    pub fn is_radial(&self) -> bool {
        self.radial_profile(0.5, 0.5).is_some()
    }

    pub fn holder(&self) -> Option<HolderBound> {
        match self {
            WeightSpec::Zero => Some(HolderBound { nu: 1.0, constant: 0.0 }),
            WeightSpec::RadialTabulated { holder, .. } | WeightSpec::GridTabulated { holder, .. } => *holder,
            WeightSpec::Preset(p) => match *p {
                Preset::Constant(_) => Some(HolderBound { nu: 1.0, constant: 0.0 }),
                Preset::ChordalLipschitz { c, .. } => Some(HolderBound { nu: 1.0, constant: c.abs() }),
                // |x₃ − y₃| ≤ |X − Y| = 2σ
                Preset::ZonalHolder { c, nu, .. } => Some(HolderBound { nu, constant: c.abs() * 2.0.powf(nu) }),
                Preset::Tilted { c } => Some(HolderBound { nu: 1.0, constant: 2.0 * c.abs() }),
                Preset::ZonalLogModulus { .. } => None,
            },
        }
    }

    pub fn describe(&self) -> String {
        match self {
            WeightSpec::Zero => "zero".into(),
            WeightSpec::RadialTabulated { .. } => "radial-table".into(),
            WeightSpec::GridTabulated { .. } => "grid-table".into(),
            WeightSpec::Preset(p) => alloc::format!("{p:?}"),
        }
    }

    /// Sup norm over a grid.
    pub fn sup_on(&self, grid: &SphereGrid) -> f64 {
        self.sample(grid).values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

fn x3(x: &ProjectivePoint) -> f64 {
    x.u() - x.one_minus_u()
}

fn log_modulus_profile(c: f64, d: f64) -> f64 {
    let a = d.abs();
    if a == 0.0 {
        0.0
    } else {
        c / (1.0 + a.ln().abs())
    }
}

/// A random pair of points at chordal distance exactly `d`.
fn pair_at_distance(rng: &mut ChaCha8Rng, d: f64) -> (ProjectivePoint, ProjectivePoint) {
    let x = uniform_point(rng.random(), rng.random());
    let xv = x.to_sphere();
    // orthonormal tangent frame at x
    let helper = if xv[2].abs() < 0.9 { [0.0, 0.0, 1.0] } else { [1.0, 0.0, 0.0] };
    let t1 = normalize(cross(xv, helper));
    let t2 = cross(xv, t1);
    let phi = 2.0 * PI * rng.random::<f64>();
    let alpha = 2.0 * d.min(1.0).asin();
    let (ca, sa) = (alpha.cos(), alpha.sin());
    let mut y = [0.0; 3];
    for i in 0..3 {
        y[i] = ca * xv[i] + sa * (phi.cos() * t1[i] + phi.sin() * t2[i]);
    }
    (x, ProjectivePoint::from_sphere(normalize(y)))
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

fn normalize(a: [f64; 3]) -> [f64; 3] {
    let n = (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt();
    [a[0] / n, a[1] / n, a[2] / n]
}

/// Monte Carlo estimate of `Ω_φ(δ)` for each `δ` in `deltas`.
///
/// One pool of `samples` random pairs is drawn with chordal distances
/// log-uniform below `max(deltas)`; each `δ` takes the sup over the pairs
/// closer than `δ`, so the estimates are nondecreasing in `δ`.
pub fn modulus_sweep(weight: &WeightSpec, deltas: &[f64], samples: usize, seed: u64) -> Vec<f64> {
    let dmax = deltas.iter().copied().fold(0.0, f64::max);
    if dmax <= 0.0 {
        return alloc::vec![0.0; deltas.len()];
    }
    let dmin = dmax * 1e-6;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pairs: Vec<(f64, f64)> = Vec::with_capacity(samples);
    for _ in 0..samples {
        let d = dmin * (dmax / dmin).powf(rng.random::<f64>());
        let (x, y) = pair_at_distance(&mut rng, d);
        let dist = chordal_sigma(&x, &y);
        pairs.push((dist, (weight.eval(&x) - weight.eval(&y)).abs()));
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut running = Vec::with_capacity(pairs.len());
    let mut best: f64 = 0.0;
    for &(_, v) in &pairs {
        best = best.max(v);
        running.push(best);
    }
    deltas
        .iter()
        .map(|&delta| {
            let n = pairs.partition_point(|p| p.0 < delta);
            if n == 0 {
                0.0
            } else {
                running[n - 1]
            }
        })
        .collect()
}

pub fn modulus_of_continuity(weight: &WeightSpec, delta: f64, samples: usize, seed: u64) -> f64 {
    modulus_sweep(weight, &[delta], samples, seed)[0]
}

/// Checks the declared Hölder bound on random pairs, allowing `slack`
/// relative excess. Returns the worst observed ratio to the bound.
pub fn check_holder(weight: &WeightSpec, samples: usize, seed: u64) -> Option<f64> {
    let bound = weight.holder()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..samples {
        let d = 10f64.powf(-4.0 * rng.random::<f64>());
        let (x, y) = pair_at_distance(&mut rng, d);
        let diff = (weight.eval(&x) - weight.eval(&y)).abs();
        let allowed = bound.constant * chordal_sigma(&x, &y).powf(bound.nu);
        if diff > 0.0 {
            worst = worst.max(if allowed > 0.0 { diff / allowed } else { f64::INFINITY });
        }
    }
    Some(worst)
}
