//! Studies over a list of degrees: dimension growth, convergence of the
//! Fubini–Study potentials, bound-template fits and the random-zero speed
//! study. Work is spread over a rayon pool; results come back in degree and
//! seed order, so every table is a pure function of the scenario.

use rayon::prelude::*;
use rayon::ThreadPool;
use sphere_bergman_core::envelope::EnvelopeResult;
use sphere_bergman_core::weight::modulus_sweep;
use sphere_bergman_core::zeros::{
    assemble_speed_report, default_battery, derive_seed, equilibrium_pairings, fubini_study_pairings, median_sorted,
    sample_outcome, SpeedReport,
};
use sphere_bergman_core::{
    bergman_field, dimension, equilibrium_current, is_big, radial_oracle, solve_envelope, EnvelopeProblem,
    EquilibriumCurrent, GridField, PoleSet, RadialEnvelope, SectionSpace, SolverOptions, SphereGrid, TestFunction,
    WeightSpec,
};

use crate::error::{LabError, Result};
use crate::io::EnvelopeSummary;
use crate::scenario::Scenario;

/// Environment variable holding the worker count.
pub const THREADS_ENV: &str = "SPHERE_BERGMAN_THREADS";

/// A pool with `threads` workers, or rayon's default when `None`.
pub fn thread_pool(threads: Option<usize>) -> Result<ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        if n == 0 {
            return Err(LabError::Config(format!("{THREADS_ENV} must be positive")));
        }
        b = b.num_threads(n);
    }
    b.build().map_err(|e| LabError::Config(e.to_string()))
}

pub fn solver_options(scn: &Scenario) -> SolverOptions {
    let t = &scn.tolerances;
    SolverOptions { tol: t.envelope, max_sweeps: t.max_sweeps, omega: t.omega, ..SolverOptions::default() }
}

/// `φ_eq` and `φ_req` at the nodes of a grid.
#[derive(Clone, Debug)]
pub struct Equilibrium {
    pub phi_req: GridField,
    pub phi_eq: GridField,
    /// Present when the configuration is rotation invariant.
    pub oracle: Option<RadialEnvelope>,
    /// Present when the envelope came from the grid solver.
    pub solved: Option<EnvelopeResult>,
}

/// Uses the one-dimensional hull when poles sit at `0`/`∞` and the weight is
/// radial, and the grid solver otherwise.
pub fn equilibrium(k: u32, poles: &PoleSet, weight: &WeightSpec, grid: &SphereGrid, opts: &SolverOptions) -> Result<Equilibrium> {
    if !is_big(k, poles) {
        return Err(LabError::NotBig { k, total_tau: poles.total_tau() });
    }
    if poles.on_axis() && weight.is_radial() {
        let oracle = radial_oracle(k, poles, weight)?;
        return Ok(Equilibrium {
            phi_req: oracle.phi_req_field(grid),
            phi_eq: oracle.phi_eq_field(grid),
            oracle: Some(oracle),
            solved: None,
        });
    }
    let mut problem = EnvelopeProblem::new(k, poles, weight)?;
    problem.avoid_nodes(grid);
    let res = solve_envelope(&problem, grid, opts)?;
    Ok(Equilibrium { phi_req: res.phi_req.clone(), phi_eq: res.phi_eq.clone(), oracle: None, solved: Some(res) })
}

// ---------------------------------------------------------------------------
// dimension growth

#[derive(Clone, Debug, PartialEq)]
pub struct BignessRow {
    pub p: u32,
    pub dim: usize,
    pub slope: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BignessTable {
    pub k: u32,
    pub total_tau: f64,
    pub big: bool,
    pub rows: Vec<BignessRow>,
    /// Growth matches the predicate: slope near `k − Σ τ` when big, bounded
    /// dimension otherwise.
    pub passed: bool,
}

/// Relative slack on the limiting slope `k − Σ τ`.
pub const SLOPE_EPS: f64 = 0.05;

pub fn run_bigness_study(k: u32, poles: &PoleSet, p_list: &[u32]) -> BignessTable {
    let rows: Vec<BignessRow> = p_list
        .iter()
        .map(|&p| {
            let dim = dimension(k, p, poles);
            BignessRow { p, dim, slope: dim as f64 / f64::from(p) }
        })
        .collect();
    let big = is_big(k, poles);
    let theta = f64::from(k) - poles.total_tau();
    let passed = match rows.last() {
        None => true,
        // each threshold rounds τp up by less than one
        Some(last) if big => last.slope >= theta * (1.0 - SLOPE_EPS) - poles.len() as f64 / f64::from(last.p),
        Some(last) => last.dim <= 1,
    };
    BignessTable { k, total_tau: poles.total_tau(), big, rows, passed }
}

// ---------------------------------------------------------------------------
// convergence of φ_p

#[derive(Clone, Debug, PartialEq)]
pub struct RateRow {
    pub p: u32,
    /// `∫ |φ_p − φ_eq| ω_FS`.
    pub l1_error: f64,
    /// `sup |φ_p − φ_eq|` over nodes at chordal distance at least the exclusion radius from the poles.
    pub sup_error_away: f64,
    /// `l1_error · p / log p`.
    pub c_hat: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RateMode {
    /// Hölder weight: the scaled error must stay bounded.
    Rate,
    /// Merely continuous weight: only a decreasing error is required.
    ConvergenceOnly,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RateTable {
    pub grid: String,
    pub mode: RateMode,
    pub rows: Vec<RateRow>,
    pub passed: bool,
}

/// Maximum over the upper half of `values` over the median of the lower half
/// (the middle entry of an odd list counts as lower).
pub fn upper_over_lower_median(values: &[f64]) -> f64 {
    let n = values.len();
    let split = n.div_ceil(2);
    let mut lower = values[..split].to_vec();
    lower.sort_by(f64::total_cmp);
    let upper = values[split..].iter().copied().fold(f64::NEG_INFINITY, f64::max);
    upper / median_sorted(&lower)
}

pub fn run_rate_study(scn: &Scenario, pool: &ThreadPool) -> Result<RateTable> {
    scn.require_big()?;
    let poles = scn.pole_set()?;
    let weight = scn.weight_spec()?;
    let grid = scn.common_grid()?;
    let eq = equilibrium(scn.k, &poles, &weight, &grid, &solver_options(scn))?;
    let delta0 = scn.tolerances.pole_exclusion;
    let away: Vec<bool> = grid.nodes().iter().map(|x| poles.is_empty() || poles.min_distance(x) >= delta0).collect();
    let rows: Vec<Result<RateRow>> = pool.install(|| {
        scn.p_list
            .par_iter()
            .map(|&p| {
                let space = SectionSpace::build(scn.k, p, &poles, &weight, &grid)?;
                let field = bergman_field(&space, &grid)?;
                let diff = field.phi_p.zip_with(&eq.phi_eq, |a, b| (a - b).abs());
                let l1_error = diff.integrate(&grid);
                let sup_error_away =
                    diff.values.iter().zip(&away).filter(|(_, a)| **a).map(|(d, _)| *d).fold(0.0, f64::max);
                let pf = f64::from(p);
                let c_hat = if p > 1 { l1_error * pf / pf.ln() } else { f64::NAN };
                Ok(RateRow { p, l1_error, sup_error_away, c_hat })
            })
            .collect()
    });
    let rows = rows.into_iter().collect::<Result<Vec<_>>>()?;
    let mode = if weight.holder().is_some() { RateMode::Rate } else { RateMode::ConvergenceOnly };
    let passed = match mode {
        RateMode::Rate => {
            let c: Vec<f64> = rows.iter().map(|r| r.c_hat).collect();
            c.len() < 2 || upper_over_lower_median(&c) <= 1.5
        }
        RateMode::ConvergenceOnly => rows.windows(2).all(|w| w[1].l1_error <= w[0].l1_error),
    };
    Ok(RateTable { grid: grid.id(), mode, rows, passed })
}

// ---------------------------------------------------------------------------
// bound templates

/// Sweep `δ = 2⁻¹, …, 2⁻¹⁰`.
pub fn delta_sweep() -> Vec<f64> {
    (1..=10).map(|j| 0.5f64.powi(j)).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct BoundRow {
    pub p: u32,
    /// `(1/2p) max log P_p` over the grid.
    pub scaled_log_kernel: f64,
    /// Smallest `C` with `(1/2p) log P_p ≤ C(1 − log δ)/p + δ + Ω(δ)` for every swept `δ`.
    pub c_upper: f64,
    /// Minimizer of the fitted upper template over the sweep.
    pub delta_star: f64,
    /// Smallest `C ≥ 0` with `φ_p ≥ φ_eq − C/p + (1/p) Σ log σ_j` at every node.
    pub c_lower: f64,
    /// Minimum over nodes of `φ_p − (φ_eq − C/p + (1/p) Σ log σ_j)` at the fitted `C`.
    pub lower_residual_min: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BoundReport {
    pub deltas: Vec<f64>,
    pub modulus: Vec<f64>,
    pub rows: Vec<BoundRow>,
    pub upper_ratio: f64,
    pub lower_ratio: f64,
    pub delta_interior: bool,
    pub passed: bool,
}

/// `last / first`, with `0/0` read as bounded.
fn growth(first: f64, last: f64) -> f64 {
    if first == 0.0 && last == 0.0 {
        1.0
    } else {
        last / first
    }
}

/// Monte Carlo pairs per `δ` for the modulus of continuity.
pub const MODULUS_SAMPLES: usize = 20_000;

pub fn run_bound_diagnostics(scn: &Scenario, pool: &ThreadPool) -> Result<BoundReport> {
    scn.require_big()?;
    let poles = scn.pole_set()?;
    let weight = scn.weight_spec()?;
    let grid = scn.common_grid()?;
    let eq = equilibrium(scn.k, &poles, &weight, &grid, &solver_options(scn))?;
    let deltas = delta_sweep();
    let modulus = modulus_sweep(&weight, &deltas, MODULUS_SAMPLES, scn.seed);
    let log_sigma: Vec<f64> = grid
        .nodes()
        .iter()
        .map(|x| poles.poles().iter().map(|q| sphere_bergman_core::geometry::log_chordal_sigma(x, &q.point)).sum())
        .collect();
    let rows: Vec<Result<BoundRow>> = pool.install(|| {
        scn.p_list
            .par_iter()
            .map(|&p| {
                let pf = f64::from(p);
                let space = SectionSpace::build(scn.k, p, &poles, &weight, &grid)?;
                let field = bergman_field(&space, &grid)?;
                let s = field.log_kernel.max() / (2.0 * pf);
                let c_upper = deltas
                    .iter()
                    .zip(&modulus)
                    .map(|(d, o)| (pf * (s - d - o)).max(0.0) / (1.0 - d.ln()))
                    .fold(0.0, f64::max);
                let template = |(d, o): (&f64, &f64)| c_upper * (1.0 - d.ln()) / pf + d + o;
                let delta_star = deltas
                    .iter()
                    .zip(&modulus)
                    .min_by(|a, b| template(*a).total_cmp(&template(*b)))
                    .map(|(d, _)| *d)
                    .unwrap_or(f64::NAN);
                let gap: Vec<f64> = field
                    .phi_p
                    .values
                    .iter()
                    .zip(&eq.phi_eq.values)
                    .zip(&log_sigma)
                    .map(|((fp, fe), ls)| pf * (fe - fp) + ls)
                    .collect();
                let c_lower = gap.iter().copied().filter(|g| g.is_finite()).fold(0.0, f64::max);
                let lower_residual_min =
                    gap.iter().filter(|g| g.is_finite()).map(|g| (c_lower - g) / pf).fold(f64::INFINITY, f64::min);
                Ok(BoundRow { p, scaled_log_kernel: s, c_upper, delta_star, c_lower, lower_residual_min })
            })
            .collect()
    });
    let rows = rows.into_iter().collect::<Result<Vec<_>>>()?;
    let (first, last) = (rows.first().expect("p_list is nonempty"), rows.last().expect("p_list is nonempty"));
    let upper_ratio = growth(first.c_upper, last.c_upper);
    let lower_ratio = growth(first.c_lower, last.c_lower);
    let (d_max, d_min) = (deltas[0], deltas[deltas.len() - 1]);
    let delta_interior = rows.iter().filter(|r| r.c_upper > 0.0).all(|r| r.delta_star < d_max && r.delta_star > d_min);
    let passed = upper_ratio <= 1.5 && lower_ratio <= 1.5;
    Ok(BoundReport { deltas, modulus, rows, upper_ratio, lower_ratio, delta_interior, passed })
}

// ---------------------------------------------------------------------------
// envelope

#[derive(Clone, Debug)]
pub struct EnvelopeRun {
    pub grid: SphereGrid,
    pub problem: EnvelopeProblem,
    pub result: EnvelopeResult,
    pub current: EquilibriumCurrent,
    pub oracle: Option<RadialEnvelope>,
    pub summary: EnvelopeSummary,
}

pub fn run_envelope(scn: &Scenario, grid: SphereGrid) -> Result<EnvelopeRun> {
    scn.require_big()?;
    let poles = scn.pole_set()?;
    let weight = scn.weight_spec()?;
    let mut problem = EnvelopeProblem::new(scn.k, &poles, &weight)?;
    problem.avoid_nodes(&grid);
    let result = solve_envelope(&problem, &grid, &solver_options(scn))?;
    let current = equilibrium_current(&result, &problem, &grid);
    let oracle = if poles.on_axis() && weight.is_radial() { Some(radial_oracle(scn.k, &poles, &weight)?) } else { None };
    let summary = EnvelopeSummary {
        grid: grid.id(),
        k: scn.k,
        theta_mass: result.theta_mass,
        sweeps: result.iterations,
        residual: result.complementarity_residual,
        contact_fraction: result.contact_fraction(),
        total_mass: current.total_mass(&grid),
        min_density: current.density.min(),
        free_boundary_radii: current.free_boundary.ring_transitions.clone(),
        oracle_gap: oracle.as_ref().map(|o| o.phi_req_field(&grid).sup_distance(&result.phi_req)),
        oracle_free_boundary_radii: oracle.as_ref().map(|o| o.free_boundary_radii()).unwrap_or_default(),
    };
    Ok(EnvelopeRun { grid, problem, result, current, oracle, summary })
}

// ---------------------------------------------------------------------------
// random zeros

#[derive(Clone, Debug)]
pub struct SpeedStudy {
    pub report: SpeedReport,
    /// Non-forced root `u`-values of every sample, pooled per degree.
    pub pooled_free_u: Vec<(u32, Vec<f64>)>,
    pub oracle: Option<RadialEnvelope>,
}

/// Degree whose samples fix `ĉ`: 50 when listed, else the smallest.
pub fn fit_degree(p_list: &[u32]) -> u32 {
    p_list.iter().copied().find(|&p| p == 50).unwrap_or(p_list[0])
}

/// Equilibrium pairings for the battery on the common grid.
fn equilibrium_for_pairing(scn: &Scenario, battery: &[TestFunction]) -> Result<(Vec<f64>, Option<RadialEnvelope>)> {
    let poles = scn.pole_set()?;
    let weight = scn.weight_spec()?;
    let grid = scn.common_grid()?;
    let eq = equilibrium(scn.k, &poles, &weight, &grid, &solver_options(scn))?;
    Ok((equilibrium_pairings(scn.k, &poles, &eq.phi_req, &grid, battery), eq.oracle))
}

pub fn run_speed_study(scn: &Scenario, pool: &ThreadPool) -> Result<SpeedStudy> {
    scn.require_big()?;
    let poles = scn.pole_set()?;
    let weight = scn.weight_spec()?;
    let battery = default_battery();
    let (eq_pairs, oracle) = equilibrium_for_pairing(scn, &battery)?;
    let spaces: Vec<Result<SectionSpace>> = pool.install(|| {
        scn.p_list
            .par_iter()
            .map(|&p| {
                let (nr, na) = SphereGrid::floor_for(scn.k, p);
                let grid = SphereGrid::new(nr, na)?;
                Ok(SectionSpace::build(scn.k, p, &poles, &weight, &grid)?)
            })
            .collect()
    });
    let spaces = spaces.into_iter().collect::<Result<Vec<_>>>()?;
    let jobs: Vec<(usize, u64)> =
        (0..spaces.len()).flat_map(|i| (0..scn.n_samples as u64).map(move |s| (i, s))).collect();
    let outcomes: Vec<_> = pool.install(|| {
        jobs.par_iter()
            .map(|&(i, s)| {
                let space = &spaces[i];
                sample_outcome(space, &battery, &eq_pairs, derive_seed(scn.seed, space.p(), s))
            })
            .collect()
    });
    let mut per_p = Vec::with_capacity(spaces.len());
    let mut it = outcomes.into_iter();
    for space in &spaces {
        let mut ok = Vec::with_capacity(scn.n_samples);
        let mut failed = Vec::new();
        for o in it.by_ref().take(scn.n_samples) {
            match o {
                Ok(o) => ok.push(o),
                Err(e) => failed.push(e),
            }
        }
        if failed.len() * 100 > scn.n_samples {
            return Err(LabError::TooManyFailures {
                p: space.p(),
                failures: failed.len(),
                samples: scn.n_samples,
                first: failed.swap_remove(0),
            });
        }
        per_p.push((space.p(), ok, failed.len()));
    }
    let cdf = oracle.as_ref().map(|o| move |u: f64| o.u_cdf(u));
    let report = assemble_speed_report(
        &per_p,
        scn.lambda_factor,
        fit_degree(&scn.p_list),
        cdf.as_ref().map(|f| f as &dyn Fn(f64) -> f64),
    );
    let pooled_free_u = per_p.iter().map(|(p, o, _)| (*p, o.iter().flat_map(|s| s.free_u.iter().copied()).collect())).collect();
    Ok(SpeedStudy { report, pooled_free_u, oracle })
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExpectationRow {
    pub test_function: String,
    pub sample_mean: f64,
    pub standard_error: f64,
    pub fubini_study: f64,
}

impl ExpectationRow {
    /// Within three standard errors (with a rounding floor for exact pairings).
    pub fn agrees(&self) -> bool {
        (self.sample_mean - self.fubini_study).abs() <= 3.0 * self.standard_error + 1e-9
    }
}

/// Sample mean of `⟨(1/p)[s = 0], χ⟩` over `n` sections at degree `p` against
/// `⟨(1/p) γ_p, χ⟩`.
pub fn run_expectation_check(
    k: u32,
    p: u32,
    poles: &PoleSet,
    weight: &WeightSpec,
    n: usize,
    seed: u64,
    pool: &ThreadPool,
) -> Result<Vec<ExpectationRow>> {
    if !is_big(k, poles) {
        return Err(LabError::NotBig { k, total_tau: poles.total_tau() });
    }
    let battery = default_battery();
    let (nr, na) = SphereGrid::floor_for(k, p);
    let grid = SphereGrid::new(nr, na)?;
    let space = SectionSpace::build(k, p, poles, weight, &grid)?;
    let field = bergman_field(&space, &grid)?;
    let fs = fubini_study_pairings(&space, &field, &grid, &battery);
    let zeros = vec![0.0; battery.len()];
    let outcomes: Vec<_> = pool.install(|| {
        (0..n as u64).into_par_iter().map(|s| sample_outcome(&space, &battery, &zeros, derive_seed(seed, p, s))).collect()
    });
    let outcomes = outcomes.into_iter().collect::<std::result::Result<Vec<_>, _>>()?;
    let nf = outcomes.len() as f64;
    Ok(battery
        .iter()
        .enumerate()
        .map(|(i, f)| {
            let mean = outcomes.iter().map(|o| o.pairings[i]).sum::<f64>() / nf;
            let var = outcomes.iter().map(|o| (o.pairings[i] - mean).powi(2)).sum::<f64>() / (nf - 1.0);
            ExpectationRow {
                test_function: f.id(),
                sample_mean: mean,
                standard_error: (var / nf).sqrt(),
                fubini_study: fs[i],
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use sphere_bergman_core::ProjectivePoint;

    #[test]
    fn half_split_ratio() {
        assert_eq!(upper_over_lower_median(&[1.0, 2.0, 3.0, 3.0, 4.5]), 2.25);
        assert_eq!(upper_over_lower_median(&[1.0, 1.0, 1.2, 1.4]), 1.4);
    }

    #[test]
    fn bigness_examples() {
        let half = PoleSet::from_pairs(&[(ProjectivePoint::origin(), 0.5)]).unwrap();
        let t = run_bigness_study(1, &half, &[50, 100, 200, 400]);
        assert!(t.big && t.passed);
        assert!((t.rows[3].slope - 0.5).abs() < 0.01);

        let edge = PoleSet::from_pairs(&[(ProjectivePoint::origin(), 0.5), (ProjectivePoint::from_real(1.0), 0.5)]).unwrap();
        let t = run_bigness_study(1, &edge, &(1..=400).collect::<Vec<_>>());
        assert!(!t.big && t.passed);
        assert!(t.rows.iter().all(|r| r.dim <= 1));

        let over = PoleSet::from_pairs(&[(ProjectivePoint::origin(), 0.6), (ProjectivePoint::from_real(1.0), 0.6)]).unwrap();
        let t = run_bigness_study(1, &over, &(5..=100).collect::<Vec<_>>());
        assert!(t.rows.iter().all(|r| r.dim == 0));
    }

    #[test]
    fn zero_threads_rejected() {
        assert!(thread_pool(Some(0)).is_err());
        assert_eq!(thread_pool(Some(2)).unwrap().current_num_threads(), 2);
    }
}
