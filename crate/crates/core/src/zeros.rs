//! Random sections, their zero divisors and pairings with test functions.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;
#[allow(unused_imports)] // unused when a dependency enables std float methods
use num_traits::Float;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::Error;
use crate::geometry::{log_chordal_sigma, PoleSet, ProjectivePoint};
use crate::quadrature::{kahan_sum, GridField, SphereGrid};
use crate::roots::aberth;
use crate::sections::{random_unit_vector, BergmanField, SectionSpace};

/// Backward-error tolerance for reported roots.
pub const ROOT_TOL: f64 = 1e-8;

/// A point of the unit sphere of `H⁰₀` in orthonormal coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct RandomSection {
    pub coeffs: Vec<Complex64>,
    pub seed: u64,
}

/// Mixes a base seed with a degree and a sample index (SplitMix64 finalizer).
pub fn derive_seed(base: u64, p: u32, index: u64) -> u64 {
    let mut z = base ^ (u64::from(p) << 40) ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn sample_section(space: &SectionSpace, seed: u64) -> Result<RandomSection, Error> {
    if space.dim() == 0 {
        return Err(Error::DimensionZero);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(RandomSection { coeffs: random_unit_vector(&mut rng, space.dim()), seed })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DivisorPoint {
    pub point: ProjectivePoint,
    pub multiplicity: u32,
    /// True for the zeros imposed at the poles.
    pub forced: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EmpiricalDivisor {
    pub points: Vec<DivisorPoint>,
    pub total: u32,
}

impl EmpiricalDivisor {
    /// Total multiplicity at points within chordal distance `eps` of `x`.
    pub fn multiplicity_near(&self, x: &ProjectivePoint, eps: f64) -> u32 {
        self.points
            .iter()
            .filter(|d| crate::geometry::chordal_sigma(&d.point, x) <= eps)
            .map(|d| d.multiplicity)
            .sum()
    }

    /// `u`-coordinates of the non-forced zeros, repeated by multiplicity.
    pub fn free_u_values(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for d in self.points.iter().filter(|d| !d.forced) {
            for _ in 0..d.multiplicity {
                out.push(d.point.u());
            }
        }
        out
    }
}

/// Zeros of a section: roots of the free factor, the forced zeros at the
/// poles, and the remaining degree at `∞`.
pub fn zero_divisor(space: &SectionSpace, section: &RandomSection) -> Result<EmpiricalDivisor, Error> {
    let q = space.free_factor_coefficients(&section.coeffs);
    let low = q.iter().position(|c| c.norm() > 0.0).ok_or(Error::InvalidArgument("zero section"))?;
    let high = q.iter().rposition(|c| c.norm() > 0.0).unwrap_or(low);
    let mut points = Vec::with_capacity(high - low + 4);
    for r in aberth(&q[low..=high], ROOT_TOL)? {
        points.push(DivisorPoint { point: ProjectivePoint::affine(r), multiplicity: 1, forced: false });
    }
    if low > 0 {
        points.push(DivisorPoint { point: ProjectivePoint::origin(), multiplicity: low as u32, forced: false });
    }
    for (pole, &t) in space.poles().poles().iter().zip(space.thresholds()) {
        if t > 0 {
            points.push(DivisorPoint { point: pole.point, multiplicity: t, forced: true });
        }
    }
    let deficiency = (space.m() - high) as u32;
    if deficiency > 0 {
        points.push(DivisorPoint { point: ProjectivePoint::infinity(), multiplicity: deficiency, forced: false });
    }
    let total = points.iter().map(|d| d.multiplicity).sum();
    debug_assert_eq!(total, space.k() * space.p());
    Ok(EmpiricalDivisor { points, total })
}

/// Real spherical harmonics in `(x₁, x₂, x₃)`, with `x₁ + i x₂ = 2z/(1+|z|²)`
/// and `x₃ = 2u − 1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Harmonic {
    X3,
    X1,
    X2,
    ZonalP2,
    X1X3,
    X1SqMinusX2Sq,
    X1X2,
    ZonalP3,
}

impl Harmonic {
    fn degree(self) -> f64 {
        match self {
            Harmonic::X3 | Harmonic::X1 | Harmonic::X2 => 1.0,
            Harmonic::ZonalP3 => 3.0,
            _ => 2.0,
        }
    }

    fn sup(self) -> f64 {
        match self {
            Harmonic::X1X3 | Harmonic::X1X2 => 0.5,
            _ => 1.0,
        }
    }

    fn eval(self, x: [f64; 3]) -> f64 {
        let [a, b, c] = x;
        match self {
            Harmonic::X3 => c,
            Harmonic::X1 => a,
            Harmonic::X2 => b,
            Harmonic::ZonalP2 => 0.5 * (3.0 * c * c - 1.0),
            Harmonic::X1X3 => a * c,
            Harmonic::X1SqMinusX2Sq => a * a - b * b,
            Harmonic::X1X2 => a * b,
            Harmonic::ZonalP3 => 0.5 * (5.0 * c * c * c - 3.0 * c),
        }
    }
}

/// Test functions with a known `dd^c`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TestFunction {
    Constant,
    Harmonic(Harmonic),
    /// `½(1 + tanh((u − u₀)/width))` with `u₀ = 1/(1 + radius²)`: a smoothed
    /// indicator of the disc `|z| ≤ radius`.
    RadialStep { radius: f64, width: f64 },
}

impl TestFunction {
    pub fn id(&self) -> String {
        match self {
            TestFunction::Constant => "one".into(),
            TestFunction::Harmonic(h) => alloc::format!("{h:?}"),
            TestFunction::RadialStep { radius, width } => alloc::format!("step(r={radius},w={width})"),
        }
    }

    pub fn value(&self, x: &ProjectivePoint) -> f64 {
        match *self {
            TestFunction::Constant => 1.0,
            TestFunction::Harmonic(h) => h.eval(x.to_sphere()),
            TestFunction::RadialStep { radius, width } => step_profile(x.u(), radius, width).0,
        }
    }

    /// Density of `dd^c χ` against `ω_FS`.
    pub fn ddc_density(&self, x: &ProjectivePoint) -> f64 {
        match *self {
            TestFunction::Constant => 0.0,
            TestFunction::Harmonic(h) => {
                let l = h.degree();
                -2.0 * l * (l + 1.0) * h.eval(x.to_sphere())
            }
            TestFunction::RadialStep { radius, width } => {
                // 2 (u(1−u) g')' = 2[(1 − 2u) g' + u(1−u) g'']
                let (u, v) = (x.u(), x.one_minus_u());
                let (_, g1, g2) = step_profile(u, radius, width);
                2.0 * ((v - u) * g1 + u * v * g2)
            }
        }
    }

    /// Upper bound for `sup|χ| + sup|∇χ| + sup|∇²χ|` on the unit round sphere.
    pub fn c2_norm(&self) -> f64 {
        match *self {
            TestFunction::Constant => 1.0,
            // |∇Y| ≤ l sup|Y| and |∇²Y| ≤ l² sup|Y| for degree-l harmonics
            TestFunction::Harmonic(h) => {
                let l = h.degree();
                (1.0 + l + l * l) * h.sup()
            }
            TestFunction::RadialStep { radius, width } => {
                let n = 20_000;
                let (mut s0, mut s1, mut s2) = (0.0f64, 0.0f64, 0.0f64);
                for i in 0..=n {
                    let u = i as f64 / n as f64;
                    let (g, g1, g2) = step_profile(u, radius, width);
                    let uv = u * (1.0 - u);
                    s0 = s0.max(g.abs());
                    s1 = s1.max(g1.abs() * uv.sqrt());
                    s2 = s2.max(g2.abs() * uv + 0.5 * g1.abs() * (2.0 * u - 1.0).abs());
                }
                // margin for the sampling of the sups
                1.01 * (s0 + s1 + s2)
            }
        }
    }
}

fn step_profile(u: f64, radius: f64, width: f64) -> (f64, f64, f64) {
    let u0 = 1.0 / (1.0 + radius * radius);
    let th = ((u - u0) / width).tanh();
    let sech2 = 1.0 - th * th;
    (0.5 * (1.0 + th), 0.5 * sech2 / width, -sech2 * th / (width * width))
}

/// Harmonics of degree ≤ 3, one smoothed disc indicator and the constant.
pub fn default_battery() -> Vec<TestFunction> {
    let mut out = vec![TestFunction::Constant];
    for h in [
        Harmonic::X3,
        Harmonic::X1,
        Harmonic::X2,
        Harmonic::ZonalP2,
        Harmonic::X1X3,
        Harmonic::X1SqMinusX2Sq,
        Harmonic::X1X2,
        Harmonic::ZonalP3,
    ] {
        out.push(TestFunction::Harmonic(h));
    }
    out.push(TestFunction::RadialStep { radius: 0.5, width: 0.05 });
    out
}

/// `(1/p) Σ mult · χ(zero)`.
pub fn empirical_pairings(divisor: &EmpiricalDivisor, p: u32, battery: &[TestFunction]) -> Vec<f64> {
    battery
        .iter()
        .map(|f| kahan_sum(divisor.points.iter().map(|d| f64::from(d.multiplicity) * f.value(&d.point))) / f64::from(p))
        .collect()
}

/// `⟨θ' + dd^c v + Σ c_j δ_{a_j}, χ⟩` for a bounded potential `v` on the grid,
/// where `θ'` has mass `k − Σ c_j`. Uses `∫ v dd^cχ` for the smooth part.
fn pair_with_potential(
    k: f64,
    atoms: &[(ProjectivePoint, f64)],
    potential: &GridField,
    grid: &SphereGrid,
    battery: &[TestFunction],
) -> Vec<f64> {
    let atom_mass: f64 = atoms.iter().map(|a| a.1).sum();
    battery
        .iter()
        .map(|f| {
            let smooth = grid.integrate(|x| f.value(x));
            let ddc = kahan_sum(
                grid.nodes()
                    .iter()
                    .zip(grid.weights())
                    .zip(&potential.values)
                    .map(|((x, w), v)| w * v * f.ddc_density(x)),
            );
            let point: f64 = atoms.iter().map(|(a, c)| c * f.value(a)).sum();
            (k - atom_mass) * smooth + point + ddc
        })
        .collect()
}

/// `⟨T_eq, χ⟩` from the reduced envelope.
pub fn equilibrium_pairings(k: u32, poles: &PoleSet, phi_req: &GridField, grid: &SphereGrid, battery: &[TestFunction]) -> Vec<f64> {
    let atoms: Vec<(ProjectivePoint, f64)> = poles.poles().iter().map(|p| (p.point, p.tau)).collect();
    pair_with_potential(f64::from(k), &atoms, phi_req, grid, battery)
}

/// `⟨(1/p) γ_p, χ⟩`, with the forced zeros split off as atoms of mass `t_j/p`.
pub fn fubini_study_pairings(space: &SectionSpace, field: &BergmanField, grid: &SphereGrid, battery: &[TestFunction]) -> Vec<f64> {
    let p = f64::from(space.p());
    let atoms: Vec<(ProjectivePoint, f64)> = space
        .poles()
        .poles()
        .iter()
        .zip(space.thresholds())
        .map(|(pole, &t)| (pole.point, f64::from(t) / p))
        .collect();
    let reduced = GridField {
        n_radial: grid.n_radial(),
        n_angular: grid.n_angular(),
        values: grid
            .nodes()
            .iter()
            .zip(&field.phi_p.values)
            .map(|(x, v)| v - atoms.iter().map(|(a, c)| c * log_chordal_sigma(x, a)).sum::<f64>())
            .collect(),
    };
    pair_with_potential(f64::from(space.k()), &atoms, &reduced, grid, battery)
}

#[derive(Clone, Debug, PartialEq)]
pub struct PairingReport {
    pub test_function: String,
    pub value_empirical: f64,
    pub value_equilibrium: f64,
    pub value_fs: Option<f64>,
    pub c2_norm: f64,
}

pub fn pair_with_current(
    divisor: &EmpiricalDivisor,
    p: u32,
    battery: &[TestFunction],
    equilibrium: &[f64],
    fubini_study: Option<&[f64]>,
) -> Vec<PairingReport> {
    let emp = empirical_pairings(divisor, p, battery);
    battery
        .iter()
        .enumerate()
        .map(|(i, f)| PairingReport {
            test_function: f.id(),
            value_empirical: emp[i],
            value_equilibrium: equilibrium[i],
            value_fs: fubini_study.map(|v| v[i]),
            c2_norm: f.c2_norm(),
        })
        .collect()
}

/// `max_χ |⟨(1/p)[s = 0] − T_eq, χ⟩| / ‖χ‖_{C²}`.
pub fn discrepancy(empirical: &[f64], equilibrium: &[f64], battery: &[TestFunction]) -> f64 {
    battery
        .iter()
        .zip(empirical.iter().zip(equilibrium))
        .map(|(f, (e, q))| (e - q).abs() / f.c2_norm())
        .fold(0.0, f64::max)
}

/// Kolmogorov–Smirnov distance between a sample and a continuous law.
pub fn ks_statistic<F: Fn(f64) -> f64>(sample: &[f64], cdf: F) -> f64 {
    if sample.is_empty() {
        return 0.0;
    }
    let mut s = sample.to_vec();
    s.sort_by(|a, b| a.total_cmp(b));
    let n = s.len() as f64;
    s.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max((f - (i + 1) as f64 / n).abs())
        })
        .fold(0.0, f64::max)
}

/// Statistics of one sampled section.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleOutcome {
    pub seed: u64,
    pub discrepancy: f64,
    pub pairings: Vec<f64>,
    pub free_u: Vec<f64>,
}

pub fn sample_outcome(space: &SectionSpace, battery: &[TestFunction], equilibrium: &[f64], seed: u64) -> Result<SampleOutcome, Error> {
    let section = sample_section(space, seed)?;
    let divisor = zero_divisor(space, &section)?;
    let pairings = empirical_pairings(&divisor, space.p(), battery);
    Ok(SampleOutcome {
        seed,
        discrepancy: discrepancy(&pairings, equilibrium, battery),
        free_u: divisor.free_u_values(),
        pairings,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpeedRow {
    pub p: u32,
    pub seed: u64,
    pub d: f64,
    pub exceed: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpeedSummary {
    pub p: u32,
    pub samples: usize,
    pub failures: usize,
    pub median_d: f64,
    pub exceed_fraction: f64,
    pub mean_ks: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpeedReport {
    pub lambda_factor: f64,
    pub fit_p: u32,
    pub c_hat: f64,
    pub rows: Vec<SpeedRow>,
    pub summaries: Vec<SpeedSummary>,
    /// Median `D` does not increase over the upper half of the degree list.
    pub median_nonincreasing: bool,
    /// Exceedance fraction at the largest degree is at most 5%.
    pub final_exceedance_ok: bool,
}

impl SpeedReport {
    pub fn passed(&self) -> bool {
        self.median_nonincreasing && self.final_exceedance_ok
    }
}

/// Assembles the report from per-degree sample outcomes (in seed order).
///
/// `ĉ` is the largest `D p / λ_p` observed at `fit_p`, with `λ_p = factor·log p`.
pub fn assemble_speed_report(
    per_p: &[(u32, Vec<SampleOutcome>, usize)],
    lambda_factor: f64,
    fit_p: u32,
    u_cdf: Option<&dyn Fn(f64) -> f64>,
) -> SpeedReport {
    let lambda = |p: u32| lambda_factor * f64::from(p).ln();
    let c_hat = per_p
        .iter()
        .filter(|(p, _, _)| *p == fit_p)
        .flat_map(|(p, s, _)| s.iter().map(move |o| o.discrepancy * f64::from(*p) / lambda(*p)))
        .fold(0.0, f64::max);
    let mut rows = Vec::new();
    let mut summaries = Vec::new();
    for (p, outcomes, failures) in per_p {
        let threshold = c_hat * lambda(*p) / f64::from(*p);
        let mut ds: Vec<f64> = outcomes.iter().map(|o| o.discrepancy).collect();
        let exceed = outcomes.iter().filter(|o| o.discrepancy > threshold).count();
        for o in outcomes {
            rows.push(SpeedRow { p: *p, seed: o.seed, d: o.discrepancy, exceed: o.discrepancy > threshold });
        }
        ds.sort_by(|a, b| a.total_cmp(b));
        let mean_ks = u_cdf.map(|cdf| {
            outcomes.iter().map(|o| ks_statistic(&o.free_u, cdf)).sum::<f64>() / outcomes.len().max(1) as f64
        });
        summaries.push(SpeedSummary {
            p: *p,
            samples: outcomes.len(),
            failures: *failures,
            median_d: median_sorted(&ds),
            exceed_fraction: exceed as f64 / outcomes.len().max(1) as f64,
            mean_ks,
        });
    }
    let mid = summaries.len() / 2;
    let median_nonincreasing = summaries[mid.min(summaries.len().saturating_sub(1))..]
        .windows(2)
        .all(|w| w[1].median_d <= w[0].median_d);
    let final_exceedance_ok = summaries.last().is_none_or(|s| s.exceed_fraction <= 0.05);
    SpeedReport { lambda_factor, fit_p, c_hat, rows, summaries, median_nonincreasing, final_exceedance_ok }
}

pub fn median_sorted(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// Sequential speed experiment: builds one space per degree on its floor grid
/// (or `grid` if finer) and samples `n_samples` sections with derived seeds.
#[allow(clippy::too_many_arguments)]
pub fn speed_experiment(
    k: u32,
    p_list: &[u32],
    poles: &PoleSet,
    weight: &crate::weight::WeightSpec,
    n_samples: usize,
    lambda_factor: f64,
    seed: u64,
    equilibrium: &[f64],
    battery: &[TestFunction],
    u_cdf: Option<&dyn Fn(f64) -> f64>,
) -> Result<SpeedReport, Error> {
    if !crate::sections::is_big(k, poles) {
        return Err(Error::NotBig { theta_mass: f64::from(k) - poles.total_tau() });
    }
    let mut per_p = Vec::new();
    for &p in p_list {
        let (nr, na) = SphereGrid::floor_for(k, p);
        let grid = SphereGrid::new(nr, na)?;
        let space = SectionSpace::build(k, p, poles, weight, &grid)?;
        let mut outcomes = Vec::with_capacity(n_samples);
        let mut failures = Vec::new();
        for i in 0..n_samples {
            match sample_outcome(&space, battery, equilibrium, derive_seed(seed, p, i as u64)) {
                Ok(o) => outcomes.push(o),
                Err(e) => failures.push(e),
            }
        }
        if failures.len() * 100 > n_samples {
            return Err(failures.swap_remove(0));
        }
        per_p.push((p, outcomes, failures.len()));
    }
    let fit_p = p_list.iter().copied().find(|&p| p == 50).unwrap_or(p_list[0]);
    Ok(assemble_speed_report(&per_p, lambda_factor, fit_p, u_cdf))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::weight::WeightSpec;

    fn symmetric(p: u32) -> (SphereGrid, SectionSpace) {
        let (nr, na) = SphereGrid::floor_for(1, p);
        let g = SphereGrid::new(nr, na).unwrap();
        let s = SectionSpace::build(1, p, &PoleSet::empty(), &WeightSpec::Zero, &g).unwrap();
        (g, s)
    }

    #[test]
    fn first_basis_element_has_all_zeros_at_infinity() {
        let (_, s) = symmetric(6);
        let mut coeffs = vec![Complex64::new(0.0, 0.0); s.dim()];
        coeffs[0] = Complex64::new(1.0, 0.0);
        let d = zero_divisor(&s, &RandomSection { coeffs, seed: 0 }).unwrap();
        assert_eq!(d.total, 6);
        assert_eq!(d.points.len(), 1);
        assert!(d.points[0].point.is_infinity() && d.points[0].multiplicity == 6);
    }

    #[test]
    fn seeded_sampling_is_reproducible() {
        let (_, s) = symmetric(8);
        assert_eq!(sample_section(&s, 5).unwrap(), sample_section(&s, 5).unwrap());
        assert_ne!(sample_section(&s, 5).unwrap(), sample_section(&s, 6).unwrap());
        let n: f64 = sample_section(&s, 5).unwrap().coeffs.iter().map(|z| z.norm_sqr()).sum();
        assert!((n - 1.0).abs() < 1e-12);
    }

    #[test]
    fn harmonic_ddc_matches_radial_formula() {
        // x₃ = 2u − 1 is also g(u) with g' = 2, g'' = 0
        let x = ProjectivePoint::affine(Complex64::new(0.3, 0.8));
        let (u, v) = (x.u(), x.one_minus_u());
        let radial = 2.0 * (v - u) * 2.0;
        let h = TestFunction::Harmonic(Harmonic::X3).ddc_density(&x);
        assert!((radial - h).abs() < 1e-14);
    }

    #[test]
    fn ddc_integrates_to_zero() {
        let g = SphereGrid::new(200, 64).unwrap();
        for f in default_battery() {
            let m = g.integrate(|x| f.ddc_density(x));
            assert!(m.abs() < 1e-10, "{}: {m}", f.id());
        }
    }

    #[test]
    fn ks_of_exact_quantiles_is_small() {
        let n = 1000;
        let s: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect();
        assert!(ks_statistic(&s, |u| u) <= 0.5 / n as f64 + 1e-15);
    }

    #[test]
    fn mass_pairing_is_degree() {
        let (g, s) = symmetric(10);
        let field = BergmanField::compute(&s, &g);
        let sec = sample_section(&s, 3).unwrap();
        let d = zero_divisor(&s, &sec).unwrap();
        let battery = [TestFunction::Constant];
        let eq = equilibrium_pairings(1, &PoleSet::empty(), &GridField::constant(&g, 0.0), &g, &battery);
        let fs = fubini_study_pairings(&s, &field, &g, &battery);
        let r = pair_with_current(&d, 10, &battery, &eq, Some(&fs));
        assert!((r[0].value_empirical - 1.0).abs() < 1e-12);
        assert!((r[0].value_equilibrium - 1.0).abs() < 1e-12);
        assert!((r[0].value_fs.unwrap() - 1.0).abs() < 1e-12);
    }
}
