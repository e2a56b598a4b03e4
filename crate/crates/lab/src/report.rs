//! Run directories: a manifest, CSV tables and plot-data series.
//!
//! Files are rendered in memory first and written by one writer, so a refused
//! overwrite leaves the directory untouched and identical inputs give
//! identical bytes.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sphere_bergman_core::zeros::median_sorted;

use crate::error::{LabError, Result};
use crate::experiments::{BignessTable, BoundReport, EnvelopeRun, RateTable, SpeedStudy};
use crate::io;
use crate::scenario::Scenario;

/// File name to contents.
pub type Files = BTreeMap<String, Vec<u8>>;

/// Largest number of points in the root CDF series.
pub const CDF_POINTS: usize = 2000;

fn num(x: f64) -> String {
    format!("{x:.16e}")
}

/// Writes `files` under `dir`, refusing to replace anything unless `force`.
pub fn write_files(dir: &Path, force: bool, files: &Files) -> Result<Vec<PathBuf>> {
    let targets: Vec<PathBuf> = files.keys().map(|name| dir.join(name)).collect();
    if !force {
        if let Some(existing) = targets.iter().find(|t| t.exists()) {
            return Err(LabError::Exists(existing.clone()));
        }
    }
    fs::create_dir_all(dir).map_err(|e| LabError::io(dir, e))?;
    for (path, bytes) in targets.iter().zip(files.values()) {
        fs::write(path, bytes).map_err(|e| LabError::io(path, e))?;
    }
    Ok(targets)
}

/// Everything a report can draw on; absent studies are skipped.
#[derive(Clone, Copy, Debug)]
pub struct ReportInputs<'a> {
    pub scenario: &'a Scenario,
    pub bigness: Option<&'a BignessTable>,
    pub rate: Option<&'a RateTable>,
    pub bounds: Option<&'a BoundReport>,
    pub speed: Option<&'a SpeedStudy>,
    pub envelope: Option<&'a EnvelopeRun>,
}

#[derive(Serialize)]
struct Versions {
    core: &'static str,
    lab: &'static str,
}

#[derive(Serialize)]
struct Seeds {
    master: u64,
    samples_per_degree: usize,
    /// How per-sample seeds follow from the master seed.
    derivation: &'static str,
}

#[derive(Serialize)]
struct ThresholdRow {
    point: String,
    tau: f64,
    p: u32,
    threshold: u32,
}

#[derive(Serialize)]
struct Outcomes {
    #[serde(skip_serializing_if = "Option::is_none")]
    bigness: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    rate: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    bounds: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    speed: Option<bool>,
}

#[derive(Serialize)]
struct Manifest<'a> {
    versions: Versions,
    seeds: Seeds,
    files: Vec<String>,
    outcomes: Outcomes,
    scenario: &'a Scenario,
    thresholds: Vec<ThresholdRow>,
}

fn threshold_rows(scn: &Scenario) -> Result<Vec<ThresholdRow>> {
    let mut rows = Vec::new();
    for pole in &scn.poles {
        for &p in &scn.p_list {
            rows.push(ThresholdRow {
                point: pole.point.to_string(),
                tau: pole.tau,
                p,
                threshold: sphere_bergman_core::threshold(pole.tau, p)?,
            });
        }
    }
    Ok(rows)
}

fn csv(header: &str, rows: impl IntoIterator<Item = String>) -> Vec<u8> {
    let mut s = String::from(header);
    s.push('\n');
    for r in rows {
        s.push_str(&r);
        s.push('\n');
    }
    s.into_bytes()
}

fn rate_files(t: &RateTable, files: &mut Files) {
    files.insert(
        "rate.csv".into(),
        csv(
            "p,l1_error,sup_error_away,c_hat",
            t.rows.iter().map(|r| format!("{},{},{},{}", r.p, num(r.l1_error), num(r.sup_error_away), num(r.c_hat))),
        ),
    );
    // reference curve C log p / p through the median fitted constant
    let mut c: Vec<f64> = t.rows.iter().map(|r| r.c_hat).filter(|c| c.is_finite()).collect();
    c.sort_by(f64::total_cmp);
    let c_ref = if c.is_empty() { 0.0 } else { median_sorted(&c) };
    files.insert(
        "plot_l1_vs_p.dat".into(),
        csv(
            "p l1_error reference",
            t.rows.iter().map(|r| {
                let p = f64::from(r.p);
                format!("{} {} {}", r.p, num(r.l1_error), num(c_ref * p.ln() / p))
            }),
        ),
    );
}

fn speed_files(s: &SpeedStudy, files: &mut Files) {
    let mut buf = Vec::new();
    io::write_speed_csv(&mut buf, &s.report).expect("writing to memory");
    files.insert("speed.csv".into(), buf);
    files.insert(
        "speed_summary.csv".into(),
        csv(
            "p,samples,failures,median_d,exceed_fraction,mean_ks",
            s.report.summaries.iter().map(|r| {
                format!(
                    "{},{},{},{},{},{}",
                    r.p,
                    r.samples,
                    r.failures,
                    num(r.median_d),
                    num(r.exceed_fraction),
                    r.mean_ks.map(num).unwrap_or_default()
                )
            }),
        ),
    );
    let (Some(oracle), Some((p, roots))) = (&s.oracle, s.pooled_free_u.last()) else {
        return;
    };
    let mut u = roots.clone();
    u.sort_by(f64::total_cmp);
    let n = u.len();
    let step = n.div_ceil(CDF_POINTS).max(1);
    let mut text = format!("# p {p}\nu empirical equilibrium\n");
    for i in (0..n).step_by(step).chain(n.checked_sub(1).filter(|l| l % step != 0)) {
        let _ = writeln!(text, "{} {} {}", num(u[i]), num((i + 1) as f64 / n as f64), num(oracle.u_cdf(u[i])));
    }
    files.insert("plot_root_cdf.dat".into(), text.into_bytes());
}

fn envelope_files(run: &EnvelopeRun, files: &mut Files) {
    let grid = &run.grid;
    let mut buf = Vec::new();
    io::write_grid_field(&mut buf, grid, &run.result.phi_req).expect("writing to memory");
    files.insert("phi_req.txt".into(), buf);
    let mut buf = Vec::new();
    io::write_grid_field(&mut buf, grid, &run.current.density).expect("writing to memory");
    files.insert("eq_density.txt".into(), buf);
    files.insert("envelope.toml".into(), run.summary.to_toml().into_bytes());

    let means = run.result.phi_req.ring_means();
    let mut text = String::from(if run.oracle.is_some() { "r u solver oracle\n" } else { "r u solver\n" });
    // rings run from ∞ towards 0; list them by increasing radius
    for i in (0..grid.n_radial()).rev() {
        let (u, v) = (grid.ring_u()[i], grid.ring_one_minus_u()[i]);
        let _ = write!(text, "{} {} {}", num((v / u).sqrt()), num(u), num(means[i]));
        if let Some(o) = &run.oracle {
            let _ = write!(text, " {}", num(o.phi_req_u(u, v)));
        }
        text.push('\n');
    }
    files.insert("plot_envelope_profile.dat".into(), text.into_bytes());

    let mut text = String::from("source r\n");
    for r in &run.summary.oracle_free_boundary_radii {
        let _ = writeln!(text, "oracle {}", num(*r));
    }
    for r in &run.summary.free_boundary_radii {
        let _ = writeln!(text, "solver {}", num(*r));
    }
    files.insert("plot_free_boundary.dat".into(), text.into_bytes());
}

/// Renders the run directory contents.
pub fn render(inputs: &ReportInputs<'_>) -> Result<Files> {
    let scn = inputs.scenario;
    let mut files = Files::new();
    if let Some(t) = inputs.bigness {
        files.insert(
            "bigness.csv".into(),
            csv("p,dim,slope", t.rows.iter().map(|r| format!("{},{},{}", r.p, r.dim, num(r.slope)))),
        );
    }
    if let Some(t) = inputs.rate {
        rate_files(t, &mut files);
    }
    if let Some(b) = inputs.bounds {
        files.insert(
            "bounds.csv".into(),
            csv(
                "p,scaled_log_kernel,c_upper,delta_star,c_lower,lower_residual_min",
                b.rows.iter().map(|r| {
                    format!(
                        "{},{},{},{},{},{}",
                        r.p,
                        num(r.scaled_log_kernel),
                        num(r.c_upper),
                        num(r.delta_star),
                        num(r.c_lower),
                        num(r.lower_residual_min)
                    )
                }),
            ),
        );
        files.insert(
            "modulus.csv".into(),
            csv("delta,omega", b.deltas.iter().zip(&b.modulus).map(|(d, o)| format!("{},{}", num(*d), num(*o)))),
        );
    }
    if let Some(s) = inputs.speed {
        speed_files(s, &mut files);
    }
    if let Some(run) = inputs.envelope {
        envelope_files(run, &mut files);
    }
    let mut names: Vec<String> = files.keys().cloned().collect();
    names.push("manifest.toml".into());
    names.sort();
    let manifest = Manifest {
        versions: Versions { core: sphere_bergman_core::VERSION, lab: env!("CARGO_PKG_VERSION") },
        seeds: Seeds {
            master: scn.seed,
            samples_per_degree: scn.n_samples,
            derivation: "splitmix64 of master ^ (p << 40) ^ (sample * golden-ratio constant)",
        },
        files: names,
        outcomes: Outcomes {
            bigness: inputs.bigness.map(|t| t.passed),
            rate: inputs.rate.map(|t| t.passed),
            bounds: inputs.bounds.map(|b| b.passed),
            speed: inputs.speed.map(|s| s.report.passed()),
        },
        scenario: scn,
        thresholds: threshold_rows(scn)?,
    };
    let text = toml::to_string(&manifest).map_err(|e| LabError::Config(e.to_string()))?;
    files.insert("manifest.toml".into(), text.into_bytes());
    Ok(files)
}

/// Renders and writes a run directory.
pub fn emit_report(dir: &Path, force: bool, inputs: &ReportInputs<'_>) -> Result<Vec<PathBuf>> {
    write_files(dir, force, &render(inputs)?)
}
