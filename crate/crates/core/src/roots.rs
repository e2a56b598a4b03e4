//! Ehrlich–Aberth simultaneous iteration for the zeros of a polynomial.
//!
//! Starting points come from the Newton polygon of `log|c_i|`, one circle per
//! edge. Points outside the unit disc are corrected through the reversed
//! polynomial in `w = 1/z`, which keeps Horner's rule well scaled for large
//! roots.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use num_complex::Complex64;
#[allow(unused_imports)] // unused when a dependency enables std float methods
use num_traits::Float;

use crate::error::Error;

const MAX_ITER: usize = 600;

/// `(p(x), p'(x), Σ|c_i||x|^i)` by Horner's rule.
fn horner(c: &[Complex64], x: Complex64) -> (Complex64, Complex64, f64) {
    let mut p = Complex64::new(0.0, 0.0);
    let mut dp = Complex64::new(0.0, 0.0);
    let mut scale = 0.0;
    let ax = x.norm();
    for ci in c.iter().rev() {
        dp = dp * x + p;
        p = p * x + ci;
        scale = scale * ax + ci.norm();
    }
    (p, dp, scale)
}

/// Newton correction `p(z)/p'(z)` and the relative backward error at `z`.
fn newton(c: &[Complex64], rev: &[Complex64], z: Complex64) -> (Complex64, f64) {
    let d = (c.len() - 1) as f64;
    if z.norm() <= 1.0 {
        let (p, dp, s) = horner(c, z);
        (p / dp, p.norm() / s)
    } else {
        let w = z.inv();
        let (r, dr, s) = horner(rev, w);
        // p(z) = z^d r(w)  ⇒  p/p' = z / (d − w r'(w)/r(w))
        (z / (d - w * dr / r), r.norm() / s)
    }
}

/// Initial approximations on Newton-polygon circles.
fn initial_guesses(c: &[Complex64]) -> Vec<Complex64> {
    let d = c.len() - 1;
    let pts: Vec<(f64, f64)> = c
        .iter()
        .enumerate()
        .filter(|(_, z)| z.norm() > 0.0)
        .map(|(i, z)| (i as f64, z.norm().ln()))
        .collect();
    // upper hull
    let mut hull: Vec<(f64, f64)> = Vec::new();
    for &p in &pts {
        while hull.len() >= 2 {
            let (o, a) = (hull[hull.len() - 2], hull[hull.len() - 1]);
            if (a.0 - o.0) * (p.1 - o.1) - (a.1 - o.1) * (p.0 - o.0) >= 0.0 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(p);
    }
    let mut out = Vec::with_capacity(d);
    for e in hull.windows(2) {
        let n = (e[1].0 - e[0].0) as usize;
        let r = ((e[0].1 - e[1].1) / n as f64).exp();
        let offset = 2.0 * PI * out.len() as f64 / d as f64 + 0.4;
        for l in 0..n {
            out.push(Complex64::from_polar(r, offset + 2.0 * PI * l as f64 / n as f64));
        }
    }
    out
}

/// All roots of `Σ c_i z^i` with `c_0 ≠ 0` and `c_d ≠ 0`.
///
/// Every returned root has relative backward error `|p(r)| / Σ|c_i||r|^i`
/// at most `tol`; otherwise the residuals of all roots are returned.
pub fn aberth(c: &[Complex64], tol: f64) -> Result<Vec<Complex64>, Error> {
    let d = c.len().saturating_sub(1);
    if d == 0 {
        return Ok(Vec::new());
    }
    if c[0].norm() == 0.0 || c[d].norm() == 0.0 {
        return Err(Error::InvalidArgument("polynomial must have nonzero constant and leading coefficients"));
    }
    if d == 1 {
        return Ok(vec![-c[0] / c[1]]);
    }
    let rev: Vec<Complex64> = c.iter().rev().copied().collect();
    let mut z = initial_guesses(c);
    let mut done = vec![false; d];
    let mut residuals = vec![f64::INFINITY; d];
    for _ in 0..MAX_ITER {
        let mut active = false;
        for k in 0..d {
            if done[k] {
                continue;
            }
            let (n, res) = newton(c, &rev, z[k]);
            residuals[k] = res;
            let mut s = Complex64::new(0.0, 0.0);
            for (j, zj) in z.iter().enumerate() {
                if j != k {
                    s += (z[k] - zj).inv();
                }
            }
            let step = n / (Complex64::new(1.0, 0.0) - n * s);
            if step.is_finite() {
                z[k] -= step;
            }
            if step.norm() <= 4.0 * f64::EPSILON * z[k].norm() || res <= 4.0 * f64::EPSILON {
                done[k] = true;
            } else {
                active = true;
            }
        }
        if !active {
            break;
        }
    }
    for k in 0..d {
        residuals[k] = newton(c, &rev, z[k]).1;
    }
    if residuals.iter().any(|&r| !(r <= tol)) {
        return Err(Error::RootFindingFailed { residuals });
    }
    Ok(z)
}
