//! Equilibrium envelopes as a discrete obstacle problem.
//!
//! In one complex dimension a function is `α`-psh exactly when it is
//! `α`-subharmonic, so the reduced envelope `φ_req` is the largest `u` below
//! the obstacle `ψ = φ − Σ τ_j log σ_j` with `θ + dd^c u ≥ 0`, where
//! `θ = (k − Σ τ_j) ω_FS`. On the quadrature grid this becomes the linear
//! complementarity problem
//!
//! ```text
//! u ≤ ψ,   (Lu)_i = m W_i + Σ_nb c_{i,nb} (u_nb − u_i) ≥ 0,   (ψ − u)_i (Lu)_i = 0,
//! ```
//!
//! with a finite-volume Laplacian in the log-cylinder coordinates
//! `(t, θ) = (log|z|, arg z)`, where `dd^c = (1/2π)(∂_t² + ∂_θ²) dt∧dθ`.
//! Each node owns the cell bounded by the cumulative Gauss–Legendre weights in
//! `u` (the nodes interlace them) and by the angular midpoints, so the cell
//! masses are exactly the quadrature weights and the total discrete mass of
//! `θ + dd^c u` telescopes to `m`.
//!
//! The solver is projected SOR. Cells near the two poles are long in `t` and
//! thin in `θ`, which makes the ring-constant error mode nearly invisible to
//! pointwise relaxation; each sweep is therefore followed by a projected exact
//! line search along the free part of every ring. Both steps decrease the
//! convex energy `½ uᵀ(−A)u − m Wᵀu` on `{u ≤ ψ}`, so convergence is kept.

use alloc::boxed::Box;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

#[allow(unused_imports)] // unused when a dependency enables std float methods
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Error;
use crate::geometry::{chordal_sigma, Pole, PoleSet, ProjectivePoint};
use crate::quadrature::{GridField, SphereGrid};
use crate::weight::{GridTable, WeightSpec};

#[derive(Clone, Debug)]
pub struct EnvelopeProblem {
    k: u32,
    poles: PoleSet,
    weight: WeightSpec,
    theta_mass: f64,
    /// Pole indices moved off a grid node.
    perturbed: Vec<usize>,
}

impl EnvelopeProblem {
    pub fn new(k: u32, poles: &PoleSet, weight: &WeightSpec) -> Result<Self, Error> {
        let theta_mass = f64::from(k) - poles.total_tau();
        if !crate::sections::theta_is_positive(theta_mass, k) {
            return Err(Error::NotBig { theta_mass });
        }
        Ok(Self { k, poles: poles.clone(), weight: weight.clone(), theta_mass, perturbed: Vec::new() })
    }

    /// Problem whose weight is given by its values at the nodes of `grid`.
    pub fn from_node_values(k: u32, poles: &PoleSet, grid: &SphereGrid, phi: GridField) -> Result<Self, Error> {
        let table = GridTable::new(grid, phi).ok_or(Error::GridMismatch)?;
        Self::new(k, poles, &WeightSpec::GridTabulated { table, holder: None })
    }

    /// Moves any pole sitting on a node of `grid` by half an angular cell, so
    /// the obstacle stays finite at every node. Returns the moved pole indices.
    pub fn avoid_nodes(&mut self, grid: &SphereGrid) -> &[usize] {
        let step = PI / grid.n_angular() as f64;
        let mut poles: Vec<Pole> = self.poles.poles().to_vec();
        for (idx, pole) in poles.iter_mut().enumerate() {
            let hit = grid.nodes().iter().any(|x| chordal_sigma(x, &pole.point) < 1e-12);
            if hit {
                let x = pole.point;
                let theta = x.theta() + step;
                pole.point = ProjectivePoint::from_u_theta(x.u(), x.one_minus_u(), theta);
                self.perturbed.push(idx);
            }
        }
        self.poles = PoleSet::new(poles).expect("rotation keeps poles distinct");
        &self.perturbed
    }

    pub fn k(&self) -> u32 {
        self.k
    }
    pub fn poles(&self) -> &PoleSet {
        &self.poles
    }
    pub fn weight(&self) -> &WeightSpec {
        &self.weight
    }
    pub fn theta_mass(&self) -> f64 {
        self.theta_mass
    }
    pub fn perturbed_poles(&self) -> &[usize] {
        &self.perturbed
    }

    /// `Σ τ_j log σ_j` at the nodes.
    pub fn pole_term(&self, grid: &SphereGrid) -> GridField {
        GridField::from_fn(grid, |x| self.poles.weighted_log_sigma(x))
    }

    /// `φ − Σ τ_j log σ_j` at the nodes.
    pub fn obstacle(&self, grid: &SphereGrid) -> GridField {
        self.weight.sample(grid).zip_with(&self.pole_term(grid), |f, s| f - s)
    }
}

/// Finite-volume `dd^c` on a sphere grid, stored per ring.
#[derive(Clone, Debug)]
pub struct Discretization {
    n_radial: usize,
    n_angular: usize,
    /// Coupling between ring `i` and ring `i + 1`.
    radial: Vec<f64>,
    /// Coupling between angular neighbours on ring `i`.
    angular: Vec<f64>,
    /// Cell mass against `ω_FS`.
    cell: Vec<f64>,
    diag: Vec<f64>,
    /// `log|z|` of each ring.
    t: Vec<f64>,
}

fn log_cyl(u: f64, one_minus_u: f64) -> f64 {
    0.5 * (one_minus_u.ln() - u.ln())
}

impl Discretization {
    pub fn new(grid: &SphereGrid) -> Self {
        let nr = grid.n_radial();
        let na = grid.n_angular();
        let w = grid.ring_weights();
        let t: Vec<f64> = grid
            .ring_u()
            .iter()
            .zip(grid.ring_one_minus_u())
            .map(|(&u, &v)| log_cyl(u, v))
            .collect();
        // cell boundaries b_0 = 0 < b_1 < … < b_nr = 1 in u, with 1 − b summed from the other end
        let mut lo = vec![0.0; nr + 1];
        let mut hi = vec![0.0; nr + 1];
        for i in 0..nr {
            lo[i + 1] = lo[i] + w[i];
        }
        for i in (0..nr).rev() {
            hi[i] = hi[i + 1] + w[i];
        }
        let tb: Vec<f64> = (0..=nr).map(|j| log_cyl(lo[j], hi[j])).collect();
        let radial: Vec<f64> = (0..nr - 1).map(|i| 1.0 / (na as f64 * (t[i] - t[i + 1]))).collect();
        let angular: Vec<f64> = (0..nr)
            .map(|i| {
                let width = if i == 0 {
                    2.0 * (t[0] - tb[1])
                } else if i == nr - 1 {
                    2.0 * (tb[nr - 1] - t[nr - 1])
                } else {
                    tb[i] - tb[i + 1]
                };
                width * na as f64 / (4.0 * PI * PI)
            })
            .collect();
        let cell: Vec<f64> = w.iter().map(|wi| wi / na as f64).collect();
        let diag = (0..nr)
            .map(|i| {
                let mut d = 2.0 * angular[i];
                if i > 0 {
                    d += radial[i - 1];
                }
                if i + 1 < nr {
                    d += radial[i];
                }
                d
            })
            .collect();
        Self { n_radial: nr, n_angular: na, radial, angular, cell, diag, t }
    }

    /// `Σ_nb c (u_nb − u_i)`, the discrete `dd^c u` mass of cell `i`.
    fn laplacian_at(&self, u: &[f64], ring: usize, j: usize) -> f64 {
        let na = self.n_angular;
        let idx = ring * na + j;
        let jl = if j == 0 { na - 1 } else { j - 1 };
        let jr = if j + 1 == na { 0 } else { j + 1 };
        let mut s = self.angular[ring] * (u[ring * na + jl] + u[ring * na + jr]) - self.diag[ring] * u[idx];
        if ring > 0 {
            s += self.radial[ring - 1] * u[idx - na];
        }
        if ring + 1 < self.n_radial {
            s += self.radial[ring] * u[idx + na];
        }
        s
    }

    /// Discrete `dd^c u` masses per cell.
    pub fn ddc_masses(&self, u: &GridField) -> GridField {
        let mut values = Vec::with_capacity(u.values.len());
        for i in 0..self.n_radial {
            for j in 0..self.n_angular {
                values.push(self.laplacian_at(&u.values, i, j));
            }
        }
        GridField { n_radial: self.n_radial, n_angular: self.n_angular, values }
    }

    pub fn cell_masses(&self) -> &[f64] {
        &self.cell
    }

    pub fn ring_log_modulus(&self) -> &[f64] {
        &self.t
    }
}

/// Discrete `dd^c` mass of the Fubini–Study weight `ψ₀ = −(k/2) log u` on all
/// cells except the polar cap at `∞`, where `ψ₀` is singular. Returned with the
/// exact value `k · (1 − ω_FS(cap))`, so the two agree up to discretization error.
pub fn ddc_calibration(grid: &SphereGrid, k: u32) -> (f64, f64) {
    let disc = Discretization::new(grid);
    let psi0 = GridField::from_fn(grid, |x| crate::geometry::fs_weight(x, k));
    let masses = disc.ddc_masses(&psi0);
    let na = grid.n_angular();
    // the cap cell's inner boundary flux is what the other cells receive
    let discrete: f64 = masses.values[na..].iter().sum();
    let exact = f64::from(k) * (1.0 - grid.ring_weights()[0]);
    (discrete, exact)
}

#[derive(Clone, Copy, Debug)]
pub struct SolverOptions {
    pub tol: f64,
    pub max_sweeps: usize,
    pub omega: f64,
    /// Sweeps between residual evaluations.
    pub check_every: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { tol: 1e-8, max_sweeps: 200_000, omega: 1.8, check_every: 10 }
    }
}

#[derive(Clone, Debug)]
pub struct EnvelopeResult {
    pub phi_req: GridField,
    pub phi_eq: GridField,
    pub obstacle: GridField,
    pub iterations: usize,
    pub complementarity_residual: f64,
    /// Nodes where `φ_req` equals the obstacle.
    pub contact: Vec<bool>,
    pub theta_mass: f64,
}

impl EnvelopeResult {
    pub fn contact_fraction(&self) -> f64 {
        self.contact.iter().filter(|&&c| c).count() as f64 / self.contact.len() as f64
    }
}

struct Solver<'a> {
    disc: &'a Discretization,
    psi: &'a [f64],
    mass: Vec<f64>,
    zeros: Vec<f64>,
}

impl Solver<'_> {
    /// Neighbour rings of ring `i`, with a zero ring standing in past the poles.
    fn split<'u>(&'u self, u: &'u mut [f64], i: usize) -> (&'u [f64], &'u mut [f64], &'u [f64]) {
        let na = self.disc.n_angular;
        let nr = self.disc.n_radial;
        let (before, rest) = u.split_at_mut(i * na);
        let (cur, after) = rest.split_at_mut(na);
        let upr: &[f64] = if i > 0 { &before[(i - 1) * na..] } else { &self.zeros };
        let dnr: &[f64] = if i + 1 < nr { &after[..na] } else { &self.zeros };
        (upr, cur, dnr)
    }

    fn sweep(&self, u: &mut [f64], omega: f64) {
        let d = self.disc;
        let na = d.n_angular;
        let nr = d.n_radial;
        for i in 0..nr {
            let up = if i > 0 { d.radial[i - 1] } else { 0.0 };
            let dn = if i + 1 < nr { d.radial[i] } else { 0.0 };
            let (ca, m) = (d.angular[i], self.mass[i]);
            let k = omega / d.diag[i];
            let kc = k * ca;
            let psi = &self.psi[i * na..(i + 1) * na];
            let (upr, cur, dnr) = self.split(u, i);
            // u ← (1 − ω)u + (ω/D)(m + Σ c u_nb), with the left neighbour added last
            // so the loop-carried dependency is a single multiply–add
            let l = na - 1;
            let rest0 = (1.0 - omega) * cur[0] + k * (m + up * upr[0] + dn * dnr[0] + ca * cur[1]);
            cur[0] = (rest0 + kc * cur[l]).min(psi[0]);
            for j in 1..l {
                let rest = (1.0 - omega) * cur[j] + k * (m + up * upr[j] + dn * dnr[j] + ca * cur[j + 1]);
                cur[j] = (rest + kc * cur[j - 1]).min(psi[j]);
            }
            let restl = (1.0 - omega) * cur[l] + k * (m + up * upr[l] + dn * dnr[l] + ca * cur[0]);
            cur[l] = (restl + kc * cur[l - 1]).min(psi[l]);
        }
    }

    /// Projected exact line search along the indicator of each ring's free nodes.
    fn ring_correction(&self, u: &mut [f64], free: &mut Vec<usize>) {
        let d = self.disc;
        let na = d.n_angular;
        let nr = d.n_radial;
        let l = na - 1;
        for i in 0..nr {
            let up = if i > 0 { d.radial[i - 1] } else { 0.0 };
            let dn = if i + 1 < nr { d.radial[i] } else { 0.0 };
            let (ca, m, dg) = (d.angular[i], self.mass[i], d.diag[i]);
            let psi = &self.psi[i * na..(i + 1) * na];
            let (upr, cur, dnr) = self.split(u, i);
            free.clear();
            // gradient Σ_F Lu and curvature dᵀ(−A)d for d = 1_F
            let mut grad = 0.0;
            let mut curv = 0.0;
            let mut room = f64::INFINITY;
            for j in 0..na {
                let gap = psi[j] - cur[j];
                if gap > 0.0 {
                    let jl = if j == 0 { l } else { j - 1 };
                    let jr = if j == l { 0 } else { j + 1 };
                    grad += m + up * upr[j] + dn * dnr[j] + ca * (cur[jl] + cur[jr]) - dg * cur[j];
                    curv += dg - 2.0 * ca;
                    if psi[jr] <= cur[jr] {
                        curv += ca;
                    }
                    if psi[jl] <= cur[jl] {
                        curv += ca;
                    }
                    room = room.min(gap);
                    free.push(j);
                }
            }
            if free.is_empty() || curv <= 0.0 {
                continue;
            }
            let step = (grad / curv).min(room);
            for &j in free.iter() {
                cur[j] = (cur[j] + step).min(psi[j]);
            }
        }
    }

    fn residual(&self, u: &[f64]) -> f64 {
        let d = self.disc;
        let mut worst: f64 = 0.0;
        for i in 0..d.n_radial {
            for j in 0..d.n_angular {
                let idx = i * d.n_angular + j;
                let lu = (self.mass[i] + d.laplacian_at(u, i, j)) / d.diag[i];
                worst = worst.max((self.psi[idx] - u[idx]).min(lu).abs());
            }
        }
        worst
    }

    /// Largest negative part of `(θ + dd^c u)` per unit of ω_FS mass.
    fn density_deficit(&self, u: &[f64]) -> f64 {
        let d = self.disc;
        let mut worst: f64 = 0.0;
        for i in 0..d.n_radial {
            for j in 0..d.n_angular {
                let lu = self.mass[i] + d.laplacian_at(u, i, j);
                worst = worst.max(-lu / d.cell[i]);
            }
        }
        worst
    }

    /// `−A x` for the Laplacian `A`, restricted to `free` with `x = 0` elsewhere.
    fn apply_neg_laplacian(&self, x: &[f64], free: &[bool], out: &mut [f64]) {
        let d = self.disc;
        let na = d.n_angular;
        for i in 0..d.n_radial {
            for j in 0..na {
                let idx = i * na + j;
                out[idx] = if free[idx] { -d.laplacian_at(x, i, j) } else { 0.0 };
            }
        }
    }

    /// Solves `θ + dd^c u = 0` on the free nodes with `u = ψ` held on the
    /// rest, by Jacobi-preconditioned conjugate gradients from the current `u`.
    fn solve_free(&self, u: &mut [f64], free: &[bool]) {
        let d = self.disc;
        let na = d.n_angular;
        let n = u.len();
        let mut r = vec![0.0; n];
        for i in 0..d.n_radial {
            for j in 0..na {
                let idx = i * na + j;
                if free[idx] {
                    r[idx] = self.mass[i] + d.laplacian_at(u, i, j);
                }
            }
        }
        let diag = |idx: usize| d.diag[idx / na];
        let mut z: Vec<f64> = (0..n).map(|i| r[i] / diag(i)).collect();
        let mut dir = z.clone();
        let mut q = vec![0.0; n];
        let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        let done = |r: &[f64]| {
            r.iter().enumerate().all(|(idx, v)| {
                let i = idx / na;
                v.abs() <= 1e-10 * d.cell[i] || v.abs() <= 1e-15 * d.diag[i]
            })
        };
        for _ in 0..4 * n.max(100) {
            if done(&r) || rz == 0.0 {
                break;
            }
            self.apply_neg_laplacian(&dir, free, &mut q);
            let dq: f64 = dir.iter().zip(&q).map(|(a, b)| a * b).sum();
            if !(dq > 0.0) {
                break;
            }
            let alpha = rz / dq;
            for idx in 0..n {
                u[idx] += alpha * dir[idx];
                r[idx] -= alpha * q[idx];
            }
            for idx in 0..n {
                z[idx] = r[idx] / diag(idx);
            }
            let rz_new: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
            let beta = rz_new / rz;
            rz = rz_new;
            for idx in 0..n {
                dir[idx] = z[idx] + beta * dir[idx];
            }
        }
    }

    /// Primal–dual active-set refinement of an approximate solution.
    ///
    /// Returns `true` when the contact set settled; `u` is then the discrete
    /// complementarity solution up to the linear-solve accuracy.
    fn polish(&self, u: &mut [f64], max_rounds: usize) -> bool {
        let d = self.disc;
        let na = d.n_angular;
        let mut free: Vec<bool> = u.iter().zip(self.psi).map(|(a, b)| a < b).collect();
        for _ in 0..max_rounds {
            for (idx, f) in free.iter().enumerate() {
                if !f {
                    u[idx] = self.psi[idx];
                }
            }
            self.solve_free(u, &free);
            let mut changed = false;
            for i in 0..d.n_radial {
                for j in 0..na {
                    let idx = i * na + j;
                    if free[idx] {
                        if u[idx] > self.psi[idx] {
                            free[idx] = false;
                            changed = true;
                        }
                    } else {
                        let lu = self.mass[i] + d.laplacian_at(u, i, j);
                        if lu < -1e-15 * d.diag[i] * (1.0 + u[idx].abs()) {
                            free[idx] = true;
                            changed = true;
                        }
                    }
                }
            }
            if !changed {
                return true;
            }
        }
        for (v, p) in u.iter_mut().zip(self.psi) {
            *v = v.min(*p);
        }
        false
    }
}

/// Solves for the reduced envelope on `grid`, starting from the obstacle.
pub fn solve_envelope(problem: &EnvelopeProblem, grid: &SphereGrid, opts: &SolverOptions) -> Result<EnvelopeResult, Error> {
    solve_envelope_from(problem, grid, opts, None)
}

/// As [`solve_envelope`], starting from `min(initial, ψ)` when a guess is given.
pub fn solve_envelope_from(
    problem: &EnvelopeProblem,
    grid: &SphereGrid,
    opts: &SolverOptions,
    initial: Option<&GridField>,
) -> Result<EnvelopeResult, Error> {
    if !(problem.theta_mass > 0.0) {
        return Err(Error::NotBig { theta_mass: problem.theta_mass });
    }
    if !(opts.omega > 0.0 && opts.omega < 2.0) || !(opts.tol > 0.0) {
        return Err(Error::InvalidArgument("relaxation must lie in (0, 2) and tol must be positive"));
    }
    let disc = Discretization::new(grid);
    let obstacle = problem.obstacle(grid);
    if obstacle.values.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("obstacle is not finite at every node"));
    }
    let mut u = match initial {
        Some(g) if g.matches(grid) => g.zip_with(&obstacle, f64::min).values,
        Some(_) => return Err(Error::GridMismatch),
        None => obstacle.values.clone(),
    };
    let solver = Solver {
        disc: &disc,
        psi: &obstacle.values,
        mass: disc.cell.iter().map(|w| problem.theta_mass * w).collect(),
        zeros: vec![0.0; grid.n_angular()],
    };
    let mut free = Vec::with_capacity(grid.n_angular());
    let mut residual = solver.residual(&u);
    let mut sweeps = 0;
    let check = opts.check_every.max(1);
    while residual > opts.tol && sweeps < opts.max_sweeps {
        for _ in 0..check.min(opts.max_sweeps - sweeps) {
            solver.sweep(&mut u, opts.omega);
            solver.ring_correction(&mut u, &mut free);
            sweeps += 1;
        }
        residual = solver.residual(&u);
    }
    if residual <= opts.tol {
        // PSOR leaves a smooth error mode of size `tol · D`, which shows up as a
        // negative density in the free region; the active-set pass removes it
        let mut refined = u.clone();
        if solver.polish(&mut refined, 50) {
            let r = solver.residual(&refined);
            if r <= residual && solver.density_deficit(&refined) <= solver.density_deficit(&u) {
                u = refined;
                residual = r;
            }
        }
    }
    let result = finish(problem, grid, obstacle, u, sweeps, residual);
    if residual > opts.tol {
        return Err(Error::MaxIterations { iterations: sweeps, residual, best: Box::new(result) });
    }
    Ok(result)
}

fn finish(problem: &EnvelopeProblem, grid: &SphereGrid, obstacle: GridField, u: Vec<f64>, iterations: usize, residual: f64) -> EnvelopeResult {
    let phi_req = GridField { n_radial: grid.n_radial(), n_angular: grid.n_angular(), values: u };
    let contact = phi_req
        .values
        .iter()
        .zip(&obstacle.values)
        .map(|(u, p)| p - u <= 1e-9 * p.abs().max(1.0))
        .collect();
    let phi_eq = phi_req.zip_with(&problem.pole_term(grid), |a, b| a + b);
    EnvelopeResult {
        phi_req,
        phi_eq,
        obstacle,
        iterations,
        complementarity_residual: residual,
        contact,
        theta_mass: problem.theta_mass,
    }
}

/// `T_eq = θ + dd^c φ_req + Σ τ_j δ_{a_j}`.
#[derive(Clone, Debug)]
pub struct EquilibriumCurrent {
    pub k: u32,
    pub atoms: Vec<(ProjectivePoint, f64)>,
    /// Density of the absolutely continuous part against `ω_FS`.
    pub density: GridField,
    /// Bounded potential used for weak pairings.
    pub phi_req: GridField,
    pub theta_mass: f64,
    pub free_boundary: FreeBoundary,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FreeBoundary {
    pub contact_fraction: f64,
    /// Radii `|z|` where the ring-wise contact set switches, increasing.
    pub ring_transitions: Vec<f64>,
}

impl EquilibriumCurrent {
    pub fn total_mass(&self, grid: &SphereGrid) -> f64 {
        self.atoms.iter().map(|a| a.1).sum::<f64>() + self.density.integrate(grid)
    }
}

pub fn equilibrium_current(result: &EnvelopeResult, problem: &EnvelopeProblem, grid: &SphereGrid) -> EquilibriumCurrent {
    let disc = Discretization::new(grid);
    let ddc = disc.ddc_masses(&result.phi_req);
    let na = grid.n_angular();
    let density = GridField {
        n_radial: grid.n_radial(),
        n_angular: na,
        values: ddc
            .values
            .iter()
            .enumerate()
            .map(|(idx, m)| result.theta_mass + m / disc.cell[idx / na])
            .collect(),
    };
    let atoms = problem.poles().poles().iter().map(|p| (p.point, p.tau)).collect();
    EquilibriumCurrent {
        k: problem.k(),
        atoms,
        density,
        phi_req: result.phi_req.clone(),
        theta_mass: result.theta_mass,
        free_boundary: free_boundary(result, &disc),
    }
}

fn free_boundary(result: &EnvelopeResult, disc: &Discretization) -> FreeBoundary {
    let na = disc.n_angular;
    let in_contact: Vec<bool> = result
        .contact
        .chunks(na)
        .map(|ring| 2 * ring.iter().filter(|&&c| c).count() > na)
        .collect();
    // rings run from ∞ towards 0, so walk them backwards for increasing |z|
    let mut ring_transitions = Vec::new();
    for i in (0..in_contact.len() - 1).rev() {
        if in_contact[i] != in_contact[i + 1] {
            ring_transitions.push((0.5 * (disc.t[i] + disc.t[i + 1])).exp());
        }
    }
    FreeBoundary { contact_fraction: result.contact_fraction(), ring_transitions }
}

#[derive(Clone, Debug)]
pub struct StabilityReport {
    pub weight_gap: f64,
    pub envelope_gap: f64,
    /// Nodes with `|Δφ_req| > weight_gap + slack`.
    pub stability_violations: Vec<usize>,
    /// Nodes breaking `φ₁ ≤ φ₂ ⇒ φ_{1,req} ≤ φ_{2,req} + slack`; empty when
    /// the weights are not ordered.
    pub monotonicity_violations: Vec<usize>,
    pub ordered: bool,
}

impl StabilityReport {
    pub fn passed(&self) -> bool {
        self.stability_violations.is_empty() && self.monotonicity_violations.is_empty()
    }
}

/// Compares the envelopes of two problems that differ only in the weight.
pub fn envelope_stability_check(
    first: (&EnvelopeProblem, &EnvelopeResult),
    second: (&EnvelopeProblem, &EnvelopeResult),
    grid: &SphereGrid,
    slack: f64,
) -> Result<StabilityReport, Error> {
    if first.0.k() != second.0.k() || first.0.poles() != second.0.poles() {
        return Err(Error::InvalidArgument("stability check needs the same degree and poles"));
    }
    let w1 = first.0.weight().sample(grid);
    let w2 = second.0.weight().sample(grid);
    let weight_gap = w1.sup_distance(&w2);
    let (r1, r2) = (&first.1.phi_req, &second.1.phi_req);
    let envelope_gap = r1.sup_distance(r2);
    let stability_violations = r1
        .values
        .iter()
        .zip(&r2.values)
        .enumerate()
        .filter(|(_, (a, b))| (*a - *b).abs() > weight_gap + slack)
        .map(|(i, _)| i)
        .collect();
    let ordered = w1.values.iter().zip(&w2.values).all(|(a, b)| a <= b);
    let monotonicity_violations = if ordered {
        r1.values
            .iter()
            .zip(&r2.values)
            .enumerate()
            .filter(|(_, (a, b))| **a > **b + slack)
            .map(|(i, _)| i)
            .collect()
    } else {
        Vec::new()
    };
    Ok(StabilityReport { weight_gap, envelope_gap, stability_violations, monotonicity_violations, ordered })
}

/// Empirical constant of `|f(z) − f(w)| ≤ c σ(z,w)^ν / min(σ(z,A), σ(w,A))^ϱ`
/// over all neighbouring node pairs and `random_pairs` random node pairs.
pub fn holder_constant(
    field: &GridField,
    grid: &SphereGrid,
    singular: &[ProjectivePoint],
    nu: f64,
    rho: f64,
    random_pairs: usize,
    seed: u64,
) -> f64 {
    let nodes = grid.nodes();
    let dist_a = |x: &ProjectivePoint| singular.iter().map(|a| chordal_sigma(x, a)).fold(1.0, f64::min);
    let ratio = |i: usize, j: usize| -> f64 {
        let d = chordal_sigma(&nodes[i], &nodes[j]);
        if d <= 0.0 {
            return 0.0;
        }
        let diff = (field.values[i] - field.values[j]).abs();
        let damp = if rho > 0.0 { dist_a(&nodes[i]).min(dist_a(&nodes[j])).powf(rho) } else { 1.0 };
        diff * damp / d.powf(nu)
    };
    let (nr, na) = (grid.n_radial(), grid.n_angular());
    let mut worst: f64 = 0.0;
    for i in 0..nr {
        for j in 0..na {
            let idx = i * na + j;
            worst = worst.max(ratio(idx, i * na + (j + 1) % na));
            if i + 1 < nr {
                worst = worst.max(ratio(idx, idx + na));
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..random_pairs {
        let a = rng.random_range(0..nodes.len());
        let b = rng.random_range(0..nodes.len());
        worst = worst.max(ratio(a, b));
    }
    worst
}

/// Which envelope the Hölder diagnostic looks at.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EnvelopeKind {
    Reduced,
    Equilibrium,
}

/// Hölder diagnostic of `φ_req` (no singular set) or `φ_eq` (singular along
/// the poles, damped by `ϱ`).
pub fn holder_diagnostic(
    result: &EnvelopeResult,
    problem: &EnvelopeProblem,
    grid: &SphereGrid,
    kind: EnvelopeKind,
    nu: f64,
    rho: f64,
) -> f64 {
    match kind {
        EnvelopeKind::Reduced => holder_constant(&result.phi_req, grid, &[], nu, 0.0, 20_000, 7),
        EnvelopeKind::Equilibrium => {
            let poles: Vec<ProjectivePoint> = problem.poles().poles().iter().map(|p| p.point).collect();
            holder_constant(&result.phi_eq, grid, &poles, nu, rho, 20_000, 7)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn solve(k: u32, poles: &PoleSet, weight: &WeightSpec, grid: &SphereGrid) -> (EnvelopeProblem, EnvelopeResult) {
        let prob = EnvelopeProblem::new(k, poles, weight).unwrap();
        let res = solve_envelope(&prob, grid, &SolverOptions::default()).unwrap();
        (prob, res)
    }

    #[test]
    fn cell_masses_and_calibration() {
        let g = SphereGrid::new(48, 96).unwrap();
        let d = Discretization::new(&g);
        let total: f64 = d.cell_masses().iter().sum::<f64>() * 96.0;
        assert!((total - 1.0).abs() < 1e-12);
        let (disc, exact) = ddc_calibration(&g, 2);
        assert!((disc - exact).abs() < 1e-3 * exact, "{disc} {exact}");
    }

    #[test]
    fn no_poles_zero_weight() {
        let g = SphereGrid::new(16, 32).unwrap();
        let (prob, res) = solve(1, &PoleSet::empty(), &WeightSpec::Zero, &g);
        assert!(res.phi_eq.values.iter().all(|v| v.abs() < 1e-12));
        let cur = equilibrium_current(&res, &prob, &g);
        assert!(cur.atoms.is_empty());
        assert!(cur.density.values.iter().all(|d| (d - 1.0).abs() < 1e-9));
        assert!((cur.total_mass(&g) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_weight_translates() {
        let g = SphereGrid::new(16, 32).unwrap();
        let (_, res) = solve(1, &PoleSet::empty(), &WeightSpec::constant(0.7), &g);
        assert!(res.phi_eq.values.iter().all(|v| (v - 0.7).abs() < 1e-12));
    }

    #[test]
    fn rejects_not_big() {
        let poles = PoleSet::from_pairs(&[(ProjectivePoint::origin(), 0.6), (ProjectivePoint::from_real(1.0), 0.6)]).unwrap();
        assert!(matches!(EnvelopeProblem::new(1, &poles, &WeightSpec::Zero), Err(Error::NotBig { .. })));
    }

    #[test]
    fn pole_mass_and_positivity() {
        let g = SphereGrid::new(32, 64).unwrap();
        let poles = PoleSet::from_pairs(&[(ProjectivePoint::origin(), 0.5)]).unwrap();
        let (prob, res) = solve(1, &poles, &WeightSpec::Zero, &g);
        assert!(res.complementarity_residual <= 1e-8);
        assert!(res.phi_req.values.iter().zip(&res.obstacle.values).all(|(u, p)| *u <= p + 1e-12));
        let cur = equilibrium_current(&res, &prob, &g);
        assert!((cur.total_mass(&g) - 1.0).abs() < 1e-10);
        assert!((cur.density.integrate(&g) - 0.5).abs() < 1e-10);
        assert_eq!(cur.free_boundary.ring_transitions.len(), 1);
    }

    #[test]
    fn node_pole_is_moved() {
        let g = SphereGrid::new(8, 8).unwrap();
        let x = g.nodes()[10];
        let poles = PoleSet::from_pairs(&[(x, 0.3)]).unwrap();
        let mut prob = EnvelopeProblem::new(1, &poles, &WeightSpec::Zero).unwrap();
        assert_eq!(prob.avoid_nodes(&g), &[0]);
        assert!(prob.obstacle(&g).values.iter().all(|v| v.is_finite()));
    }
}
