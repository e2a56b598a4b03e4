//! Plain-text exchange formats.
//!
//! Grid fields are whitespace-separated columns `u theta weight value`, one
//! row per node in ring-major order. Divisors are `re im multiplicity` rows
//! followed by a single `INF multiplicity` row. Real numbers are written with
//! 17 significant digits, so every file reads back bit-exactly.

use std::io::{self, BufRead, Write};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sphere_bergman_core::zeros::SpeedReport;
use sphere_bergman_core::{EmpiricalDivisor, GridField, SectionSpace, SphereGrid};

pub const GRID_FIELD_HEADER: &str = "u theta weight value";
pub const SPEED_HEADER: &str = "p,seed,D,exceed";

fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn invalid(msg: impl Into<String>) -> io::Error {
    io::Error::new(io::ErrorKind::InvalidData, msg.into())
}

fn parse_f64(tok: Option<&str>, line: usize) -> io::Result<f64> {
    tok.ok_or_else(|| invalid(format!("line {line}: missing column")))?
        .parse()
        .map_err(|e| invalid(format!("line {line}: {e}")))
}

pub fn write_grid_field<W: Write>(mut w: W, grid: &SphereGrid, field: &GridField) -> io::Result<()> {
    if !field.matches(grid) {
        return Err(invalid("field does not live on this grid"));
    }
    writeln!(w, "{GRID_FIELD_HEADER}")?;
    for (i, (x, weight)) in grid.nodes().iter().zip(grid.weights()).enumerate() {
        let j = i % grid.n_angular();
        writeln!(w, "{} {} {} {}", num(x.u()), num(grid.theta(j)), num(*weight), num(field.values[i]))?;
    }
    Ok(())
}

/// A grid field as read back from disk.
#[derive(Clone, Debug, PartialEq)]
pub struct GridFieldTable {
    pub n_radial: usize,
    pub n_angular: usize,
    pub u: Vec<f64>,
    pub theta: Vec<f64>,
    pub weight: Vec<f64>,
    pub values: Vec<f64>,
}

impl GridFieldTable {
    pub fn field(&self) -> GridField {
        GridField { n_radial: self.n_radial, n_angular: self.n_angular, values: self.values.clone() }
    }
}

pub fn read_grid_field<R: BufRead>(r: R) -> io::Result<GridFieldTable> {
    let mut lines = r.lines();
    let header = lines.next().transpose()?.unwrap_or_default();
    if header.trim() != GRID_FIELD_HEADER {
        return Err(invalid(format!("expected header `{GRID_FIELD_HEADER}`, found `{header}`")));
    }
    let mut t = GridFieldTable { n_radial: 0, n_angular: 0, u: vec![], theta: vec![], weight: vec![], values: vec![] };
    for (n, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut it = line.split_whitespace();
        t.u.push(parse_f64(it.next(), n + 2)?);
        t.theta.push(parse_f64(it.next(), n + 2)?);
        t.weight.push(parse_f64(it.next(), n + 2)?);
        t.values.push(parse_f64(it.next(), n + 2)?);
    }
    // a ring ends where u changes
    let na = t.u.iter().take_while(|&&u| u == t.u[0]).count();
    if na == 0 || !t.u.len().is_multiple_of(na) {
        return Err(invalid("rows do not form complete rings"));
    }
    t.n_angular = na;
    t.n_radial = t.u.len() / na;
    Ok(t)
}

/// The orthonormal basis as rows of coefficients against the scaled
/// monomials `√C(m,i) zⁱ` of the free factor.
pub fn write_onb<W: Write>(mut w: W, space: &SectionSpace, grid_id: &str) -> io::Result<()> {
    let poles: Vec<String> = space
        .poles()
        .poles()
        .iter()
        .map(|p| match p.point.z() {
            None => format!("inf:{}", p.tau),
            Some(z) => format!("{},{}:{}", z.re, z.im, p.tau),
        })
        .collect();
    let thresholds: Vec<String> = space.thresholds().iter().map(u32::to_string).collect();
    writeln!(w, "# k {}", space.k())?;
    writeln!(w, "# p {}", space.p())?;
    writeln!(w, "# poles {}", if poles.is_empty() { "-".to_string() } else { poles.join(" ") })?;
    writeln!(w, "# thresholds {}", if thresholds.is_empty() { "-".to_string() } else { thresholds.join(" ") })?;
    writeln!(w, "# grid {grid_id}")?;
    writeln!(w, "# dim {}", space.dim())?;
    for row in space.onb_coefficients() {
        let cells: Vec<String> = row.iter().map(|c| format!("{} {}", num(c.re), num(c.im))).collect();
        writeln!(w, "{}", cells.join(" "))?;
    }
    Ok(())
}

/// Reads the coefficient rows of an ONB file, skipping the header.
pub fn read_onb_rows<R: BufRead>(r: R) -> io::Result<Vec<Vec<Complex64>>> {
    let mut rows = Vec::new();
    for (n, line) in r.lines().enumerate() {
        let line = line?;
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        let vals: Vec<f64> = line.split_whitespace().map(|t| parse_f64(Some(t), n + 1)).collect::<io::Result<_>>()?;
        if !vals.len().is_multiple_of(2) {
            return Err(invalid(format!("line {}: odd number of columns", n + 1)));
        }
        rows.push(vals.chunks(2).map(|c| Complex64::new(c[0], c[1])).collect());
    }
    Ok(rows)
}

pub fn write_divisor<W: Write>(mut w: W, divisor: &EmpiricalDivisor) -> io::Result<()> {
    let mut at_infinity = 0;
    for d in &divisor.points {
        match d.point.z() {
            Some(z) => writeln!(w, "{} {} {}", num(z.re), num(z.im), d.multiplicity)?,
            None => at_infinity += d.multiplicity,
        }
    }
    writeln!(w, "INF {at_infinity}")
}

/// `(finite zeros with multiplicity, multiplicity at ∞)`.
pub type DivisorRows = (Vec<(Complex64, u32)>, u32);

pub fn read_divisor<R: BufRead>(r: R) -> io::Result<DivisorRows> {
    let mut finite = Vec::new();
    let mut inf = None;
    for (n, line) in r.lines().enumerate() {
        let line = line?;
        let toks: Vec<&str> = line.split_whitespace().collect();
        match toks.as_slice() {
            [] => {}
            ["INF", m] => inf = Some(m.parse().map_err(|e| invalid(format!("line {}: {e}", n + 1)))?),
            [re, im, m] => {
                let z = Complex64::new(parse_f64(Some(re), n + 1)?, parse_f64(Some(im), n + 1)?);
                finite.push((z, m.parse().map_err(|e| invalid(format!("line {}: {e}", n + 1)))?));
            }
            _ => return Err(invalid(format!("line {}: expected `re im multiplicity` or `INF multiplicity`", n + 1))),
        }
    }
    Ok((finite, inf.ok_or_else(|| invalid("missing INF row"))?))
}

pub fn write_speed_csv<W: Write>(mut w: W, report: &SpeedReport) -> io::Result<()> {
    writeln!(w, "{SPEED_HEADER}")?;
    for r in &report.rows {
        writeln!(w, "{},{},{},{}", r.p, r.seed, num(r.d), u8::from(r.exceed))?;
    }
    Ok(())
}

/// One solved envelope, as written next to its grid field.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeSummary {
    pub grid: String,
    pub k: u32,
    pub theta_mass: f64,
    pub sweeps: usize,
    pub residual: f64,
    pub contact_fraction: f64,
    pub total_mass: f64,
    pub min_density: f64,
    pub free_boundary_radii: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle_gap: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub oracle_free_boundary_radii: Vec<f64>,
}

impl EnvelopeSummary {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("summary is plain data")
    }
}
