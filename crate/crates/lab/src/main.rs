use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use sphere_bergman::error::{LabError, Result};
use sphere_bergman::experiments::{self, THREADS_ENV};
use sphere_bergman::io;
use sphere_bergman::report::{self, Files, ReportInputs};
use sphere_bergman::scenario::{parse_grid, Scenario};
use sphere_bergman_core::zeros::derive_seed;
use sphere_bergman_core::{bergman_field, dimension, sample_section, zero_divisor, SectionSpace, SphereGrid};

/// Grid for envelope runs when neither the scenario nor `--grid` sets one.
const DEFAULT_ENVELOPE_GRID: (usize, usize) = (64, 128);

#[derive(Parser)]
#[command(name = "sphere-bergman", version, about = "Partial Bergman kernels and random zeros on the Riemann sphere")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// Scenario file (TOML).
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,
    /// Override the scenario seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override the grid, as NRxNA (e.g. 128x256).
    #[arg(long, global = true, value_parser = parse_grid)]
    grid: Option<[usize; 2]>,
    /// Directory for output files.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Replace existing output files.
    #[arg(long, global = true)]
    force: bool,
    /// Worker threads.
    #[arg(long, global = true, env = THREADS_ENV)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Dimension of the constrained space for each degree.
    Dim,
    /// Bigness predicate and dimension growth.
    Big,
    /// Orthonormal bases and Fubini–Study potentials.
    Bergman,
    /// Equilibrium envelope and current.
    Envelope,
    /// Convergence of the Fubini–Study potentials and bound-template fits.
    Rate,
    /// Zero divisor of one random section per degree.
    Zeros,
    /// Speed of convergence of random zero divisors.
    Speed,
    /// Every study, written as a run directory.
    Report,
}

fn load(common: &Common) -> Result<Scenario> {
    let path = common.config.as_deref().ok_or_else(|| LabError::Config("--config <FILE> is required".into()))?;
    let text = std::fs::read_to_string(path).map_err(|e| LabError::io(path, e))?;
    let mut scn = Scenario::parse(&text)?;
    if let Some(seed) = common.seed {
        scn.seed = seed;
    }
    if common.grid.is_some() {
        scn.grid = common.grid;
    }
    scn.validate()?;
    Ok(scn)
}

fn write(common: &Common, files: Files) -> Result<()> {
    if let Some(dir) = &common.out {
        for path in report::write_files(dir, common.force, &files)? {
            println!("wrote {}", path.display());
        }
    }
    Ok(())
}

fn grid_for(scn: &Scenario, p: u32) -> Result<SphereGrid> {
    let (nr, na) = match scn.grid {
        Some([nr, na]) => (nr, na),
        None => SphereGrid::floor_for(scn.k, p),
    };
    Ok(SphereGrid::new(nr, na)?)
}

fn envelope_grid(scn: &Scenario) -> Result<SphereGrid> {
    let (nr, na) = scn.grid.map(|[a, b]| (a, b)).unwrap_or(DEFAULT_ENVELOPE_GRID);
    Ok(SphereGrid::new(nr, na)?)
}

fn run(cli: &Cli) -> Result<()> {
    let common = &cli.common;
    let scn = load(common)?;
    let pool = experiments::thread_pool(common.threads)?;
    let poles = scn.pole_set()?;
    match cli.command {
        Command::Dim => {
            println!("p dim");
            for &p in &scn.p_list {
                println!("{p} {}", dimension(scn.k, p, &poles));
            }
        }
        Command::Big => {
            let table = experiments::run_bigness_study(scn.k, &poles, &scn.p_list);
            println!("k = {}, sum of taus = {}, big = {} (big iff sum_j tau_j < k)", scn.k, table.total_tau, table.big);
            println!("p dim dim/p");
            for r in &table.rows {
                println!("{} {} {:.6}", r.p, r.dim, r.slope);
            }
            println!("growth check: {}", if table.passed { "ok" } else { "FAIL" });
            let inputs = ReportInputs { scenario: &scn, bigness: Some(&table), rate: None, bounds: None, speed: None, envelope: None };
            write(common, report::render(&inputs)?)?;
        }
        Command::Bergman => {
            scn.require_big()?;
            let weight = scn.weight_spec()?;
            let built: Vec<Result<_>> = pool.install(|| {
                scn.p_list
                    .par_iter()
                    .map(|&p| {
                        let grid = grid_for(&scn, p)?;
                        let space = SectionSpace::build(scn.k, p, &poles, &weight, &grid)?;
                        let field = bergman_field(&space, &grid)?;
                        Ok((grid, space, field))
                    })
                    .collect()
            });
            let mut files = Files::new();
            println!("p dim trace min_P max_P grid");
            for item in built {
                let (grid, space, field) = item?;
                let p = space.p();
                println!(
                    "{p} {} {:.12} {:.6e} {:.6e} {}",
                    space.dim(),
                    field.trace(&grid),
                    field.kernel.min(),
                    field.kernel.max(),
                    grid.id()
                );
                let mut buf = Vec::new();
                io::write_onb(&mut buf, &space, &grid.id()).map_err(|e| LabError::io(format!("onb_p{p}.txt"), e))?;
                files.insert(format!("onb_p{p}.txt"), buf);
                let mut buf = Vec::new();
                io::write_grid_field(&mut buf, &grid, &field.phi_p).map_err(|e| LabError::io(format!("phi_p{p}.txt"), e))?;
                files.insert(format!("phi_p{p}.txt"), buf);
            }
            write(common, files)?;
        }
        Command::Envelope => {
            let run = experiments::run_envelope(&scn, envelope_grid(&scn)?)?;
            print!("{}", run.summary.to_toml());
            let inputs = ReportInputs { scenario: &scn, bigness: None, rate: None, bounds: None, speed: None, envelope: Some(&run) };
            write(common, report::render(&inputs)?)?;
        }
        Command::Rate => {
            let rate = experiments::run_rate_study(&scn, &pool)?;
            println!("grid {} mode {:?}", rate.grid, rate.mode);
            println!("p l1_error sup_error_away c_hat");
            for r in &rate.rows {
                println!("{} {:.6e} {:.6e} {:.6}", r.p, r.l1_error, r.sup_error_away, r.c_hat);
            }
            println!("trend check: {}", if rate.passed { "ok" } else { "FAIL" });
            let bounds = experiments::run_bound_diagnostics(&scn, &pool)?;
            println!("p c_upper delta_star c_lower lower_residual_min");
            for r in &bounds.rows {
                println!("{} {:.6} {:.6e} {:.6} {:.3e}", r.p, r.c_upper, r.delta_star, r.c_lower, r.lower_residual_min);
            }
            println!(
                "bound constants: upper ratio {:.3}, lower ratio {:.3}, interior delta {}: {}",
                bounds.upper_ratio,
                bounds.lower_ratio,
                bounds.delta_interior,
                if bounds.passed { "ok" } else { "FAIL" }
            );
            let inputs =
                ReportInputs { scenario: &scn, bigness: None, rate: Some(&rate), bounds: Some(&bounds), speed: None, envelope: None };
            write(common, report::render(&inputs)?)?;
        }
        Command::Zeros => {
            scn.require_big()?;
            let weight = scn.weight_spec()?;
            let mut files = Files::new();
            println!("p seed distinct_points at_infinity total");
            for &p in &scn.p_list {
                let (nr, na) = SphereGrid::floor_for(scn.k, p);
                let space = SectionSpace::build(scn.k, p, &poles, &weight, &SphereGrid::new(nr, na)?)?;
                let seed = derive_seed(scn.seed, p, 0);
                let divisor = zero_divisor(&space, &sample_section(&space, seed)?)?;
                let inf: u32 = divisor.points.iter().filter(|d| d.point.z().is_none()).map(|d| d.multiplicity).sum();
                println!("{p} {seed} {} {inf} {}", divisor.points.len(), divisor.total);
                let mut buf = Vec::new();
                io::write_divisor(&mut buf, &divisor).map_err(|e| LabError::io(format!("divisor_p{p}.txt"), e))?;
                files.insert(format!("divisor_p{p}.txt"), buf);
            }
            write(common, files)?;
        }
        Command::Speed => {
            let study = experiments::run_speed_study(&scn, &pool)?;
            print_speed(&study);
            let inputs = ReportInputs { scenario: &scn, bigness: None, rate: None, bounds: None, speed: Some(&study), envelope: None };
            write(common, report::render(&inputs)?)?;
        }
        Command::Report => {
            let dir = common.out.as_deref().ok_or_else(|| LabError::Config("report needs --out <DIR>".into()))?;
            refuse_existing(dir, common.force)?;
            scn.require_big()?;
            let bigness = experiments::run_bigness_study(scn.k, &poles, &scn.p_list);
            let rate = experiments::run_rate_study(&scn, &pool)?;
            let bounds = experiments::run_bound_diagnostics(&scn, &pool)?;
            let speed = experiments::run_speed_study(&scn, &pool)?;
            let envelope = experiments::run_envelope(&scn, envelope_grid(&scn)?)?;
            print_speed(&speed);
            let inputs = ReportInputs {
                scenario: &scn,
                bigness: Some(&bigness),
                rate: Some(&rate),
                bounds: Some(&bounds),
                speed: Some(&speed),
                envelope: Some(&envelope),
            };
            for path in report::emit_report(dir, common.force, &inputs)? {
                println!("wrote {}", path.display());
            }
        }
    }
    Ok(())
}

/// Fails before any work when a previous run directory would be replaced.
fn refuse_existing(dir: &Path, force: bool) -> Result<()> {
    let manifest = dir.join("manifest.toml");
    if !force && manifest.exists() {
        return Err(LabError::Exists(manifest));
    }
    Ok(())
}

fn print_speed(study: &experiments::SpeedStudy) {
    let r = &study.report;
    println!("lambda_p = {} log p, c_hat = {:.6} (fitted at p = {})", r.lambda_factor, r.c_hat, r.fit_p);
    println!("p samples failures median_D exceed_fraction mean_ks");
    for s in &r.summaries {
        let ks = s.mean_ks.map(|k| format!("{k:.4}")).unwrap_or_else(|| "-".into());
        println!("{} {} {} {:.6e} {:.4} {ks}", s.p, s.samples, s.failures, s.median_d, s.exceed_fraction);
    }
    println!("speed check: {}", if r.passed() { "ok" } else { "FAIL" });
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if let LabError::NotBig { .. } = e {
                eprintln!("hint: lower the vanishing orders so that their sum is strictly below k");
            }
            // exit codes are small and positive
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
