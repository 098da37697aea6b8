//! Spectral data of the free unitary Brownian motion `u_t` for `t > 4`.
//!
//! The law `ν_t` of `u_t` has density `κ(t, ω)` with respect to `ds / 2π`,
//! where `κ(t, ω) = Re z` and `z` is the solution with `Re z > 0` of
//! `((z - 1)/(z + 1)) e^{tz/2} = ω`.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum FubmError {
    #[error("t = {0} is outside the supported range (t > {1})")]
    TimeRange(f64, f64),
    #[error("|ω| = {0} is not 1")]
    NotUnitModulus(f64),
    #[error("Newton did not converge at angle {angle}: residual {residual:e}")]
    NoConvergence { angle: f64, residual: f64 },
    #[error("solution at angle {angle} has Re z = {re} <= 0")]
    NonPositive { angle: f64, re: f64 },
    #[error("G is not increasing near angle {0}")]
    NotMonotone(f64),
    #[error("grid size must be at least 16, got {0}")]
    Grid(usize),
}

/// Residual target for the implicit equation.
pub const RESIDUAL_TOL: f64 = 1e-10;
/// Angular step of the continuation path.
const CONT_STEP: f64 = 2.0 * PI / 512.0;

fn residual(t: f64, z: Complex64, omega: Complex64) -> Complex64 {
    (z - 1.0) / (z + 1.0) * (z * (t / 2.0)).exp() - omega
}

fn derivative(t: f64, z: Complex64) -> Complex64 {
    let e = (z * (t / 2.0)).exp();
    e * (2.0 / ((z + 1.0) * (z + 1.0)) + (z - 1.0) / (z + 1.0) * (t / 2.0))
}

/// Damped Newton from `z0` for target `ω`.
fn newton(t: f64, omega: Complex64, z0: Complex64, angle: f64) -> Result<Complex64, FubmError> {
    let mut z = z0;
    let mut r = residual(t, z, omega);
    for _ in 0..200 {
        if r.norm() <= RESIDUAL_TOL * 1e-2 {
            break;
        }
        let step = r / derivative(t, z);
        let mut lambda = 1.0;
        loop {
            let zn = z - step * lambda;
            let rn = residual(t, zn, omega);
            if rn.norm() < r.norm() || lambda < 1e-8 {
                z = zn;
                r = rn;
                break;
            }
            lambda *= 0.5;
        }
    }
    if r.norm() > RESIDUAL_TOL {
        return Err(FubmError::NoConvergence { angle, residual: r.norm() });
    }
    if z.re <= 0.0 {
        return Err(FubmError::NonPositive { angle, re: z.re });
    }
    Ok(z)
}

/// The real root `z > 1` at `ω = 1`.
fn real_root(t: f64) -> Result<f64, FubmError> {
    // f(x) = ln((x-1)/(x+1)) + tx/2 is increasing on (1, ∞).
    let f = |x: f64| ((x - 1.0) / (x + 1.0)).ln() + t * x / 2.0;
    let (mut lo, mut hi) = (1.0 + 1e-300_f64.max(f64::EPSILON), 2.0);
    while f(hi) < 0.0 {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

fn check_t(t: f64) -> Result<(), FubmError> {
    if t.is_finite() && t > 4.0 {
        Ok(())
    } else {
        Err(FubmError::TimeRange(t, 4.0))
    }
}

/// Solution `z` of the implicit equation at `ω = e^{is}`, following the branch
/// from `ω = 1` along the shorter arc.
pub fn solve(t: f64, s: f64) -> Result<Complex64, FubmError> {
    check_t(t)?;
    let s = s.rem_euclid(2.0 * PI);
    let target = if s > PI { s - 2.0 * PI } else { s };
    let steps = ((target.abs() / CONT_STEP).ceil() as usize).max(1);
    let mut z = newton(t, Complex64::new(1.0, 0.0), Complex64::new(real_root(t)?, 0.0), 0.0)?;
    for k in 1..=steps {
        let a = target * k as f64 / steps as f64;
        z = newton(t, Complex64::from_polar(1.0, a), z, a)?;
    }
    Ok(z)
}

/// `κ(t, ω)`.
pub fn density(t: f64, omega: Complex64) -> Result<f64, FubmError> {
    if (omega.norm() - 1.0).abs() > 1e-12 {
        return Err(FubmError::NotUnitModulus(omega.norm()));
    }
    Ok(solve(t, omega.arg())?.re)
}

/// `κ(t, ·)` on a uniform grid with the cumulative integral `G`.
#[derive(Clone, Debug, Serialize)]
pub struct DensityTable {
    pub t: f64,
    pub angles: Vec<f64>,
    pub values: Vec<f64>,
    /// Fourier coefficients `c_n = (1/2π)∫ κ e^{-ins} ds`, `n = 0..`, truncated
    /// once they fall below `1e-17`. `c_{-n} = conj(c_n)`.
    pub coeffs: Vec<Complex64>,
    /// `G(s_k)`.
    pub cumulative: Vec<f64>,
}

impl DensityTable {
    pub fn new(t: f64, m: usize) -> Result<Self, FubmError> {
        check_t(t)?;
        if m < 16 {
            return Err(FubmError::Grid(m));
        }
        let h = 2.0 * PI / m as f64;
        let angles: Vec<f64> = (0..m).map(|k| k as f64 * h).collect();
        // Serial continuation sweep once around the circle.
        let sub = ((h / CONT_STEP).ceil() as usize).max(1);
        let mut z = newton(t, Complex64::new(1.0, 0.0), Complex64::new(real_root(t)?, 0.0), 0.0)?;
        let mut values = Vec::with_capacity(m);
        values.push(z.re);
        for k in 1..m {
            for j in 1..=sub {
                let a = angles[k - 1] + h * j as f64 / sub as f64;
                z = newton(t, Complex64::from_polar(1.0, a), z, a)?;
            }
            values.push(z.re);
        }
        let mut coeffs = Vec::new();
        for n in 0..=m / 2 {
            let c: Complex64 = values
                .iter()
                .zip(&angles)
                .map(|(&v, &s)| Complex64::from_polar(v, -(n as f64) * s))
                .sum::<Complex64>()
                / m as f64;
            if n > 0 && c.norm() < 1e-17 {
                break;
            }
            coeffs.push(c);
        }
        let mut table = DensityTable { t, angles, values, coeffs, cumulative: Vec::new() };
        table.cumulative = table.angles.iter().map(|&s| table.g(s)).collect();
        Ok(table)
    }

    /// `G(s) = ∫_0^s κ(t, e^{iu}) du` from the Fourier series.
    pub fn g(&self, s: f64) -> f64 {
        let mut acc = self.coeffs[0].re * s;
        for (n, c) in self.coeffs.iter().enumerate().skip(1) {
            let n = n as f64;
            // c_n e^{ins} + c_{-n} e^{-ins} integrates to 2 Re(c_n (e^{ins} - 1)/(in)).
            let e = Complex64::from_polar(1.0, n * s) - 1.0;
            acc += 2.0 * (c * e / Complex64::new(0.0, n)).re;
        }
        acc
    }

    /// `G(2π)`.
    pub fn total(&self) -> f64 {
        2.0 * PI * self.coeffs[0].re
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Trapezoid rule for `(1/2π)∫ φ(s) κ(e^{is}) ds`.
    pub fn integrate(&self, phi: impl Fn(f64) -> Complex64) -> Complex64 {
        let m = self.values.len() as f64;
        self.angles
            .iter()
            .zip(&self.values)
            .map(|(&s, &v)| phi(s) * v)
            .sum::<Complex64>()
            / m
    }
}

/// `f_t(e^{is}) = e^{iG(s)}`.
#[derive(Clone, Debug)]
pub struct HaarizeMap {
    pub table: DensityTable,
}

impl HaarizeMap {
    pub fn apply_angle(&self, s: f64) -> f64 {
        let turns = (s / (2.0 * PI)).floor();
        let r = s - turns * 2.0 * PI;
        self.table.g(r) + turns * self.table.total()
    }

    pub fn apply(&self, x: Complex64) -> Complex64 {
        Complex64::from_polar(1.0, self.apply_angle(x.arg()))
    }

    /// `sup_s |e^{is} - e^{iG(s)}|` over the grid.
    pub fn sup_distance(&self) -> f64 {
        self.table
            .angles
            .iter()
            .zip(&self.table.cumulative)
            .map(|(&s, &g)| (Complex64::from_polar(1.0, s) - Complex64::from_polar(1.0, g)).norm())
            .fold(0.0, f64::max)
    }

    /// `(1/2π)∫ e^{ikG(s)} κ ds`.
    pub fn pushforward_moment(&self, k: i32) -> Complex64 {
        let t = &self.table;
        let m = t.values.len() as f64;
        t.cumulative
            .iter()
            .zip(&t.values)
            .map(|(&g, &v)| Complex64::from_polar(v, k as f64 * g))
            .sum::<Complex64>()
            / m
    }
}

/// `4e²π e^{-t/2}`.
pub fn haarize_bound(t: f64) -> f64 {
    4.0 * (2.0f64).exp() * PI * (-t / 2.0).exp()
}

pub fn haarize_map(t: f64, table: DensityTable) -> Result<HaarizeMap, FubmError> {
    if !(t >= 5.0) {
        return Err(FubmError::TimeRange(t, 5.0));
    }
    if table.t != t {
        return Err(FubmError::TimeRange(table.t, t));
    }
    for k in 1..table.cumulative.len() {
        if table.cumulative[k] <= table.cumulative[k - 1] {
            return Err(FubmError::NotMonotone(table.angles[k]));
        }
    }
    if table.total() <= *table.cumulative.last().unwrap() {
        return Err(FubmError::NotMonotone(2.0 * PI));
    }
    Ok(HaarizeMap { table })
}

/// `τ(u_t^n) = (1/2π)∫ e^{ins} κ(t, e^{is}) ds`.
pub fn moment_by_quadrature(n: i32, t: f64, table: &DensityTable) -> Result<f64, FubmError> {
    check_t(t)?;
    if table.t != t {
        return Err(FubmError::TimeRange(table.t, t));
    }
    Ok(table.integrate(|s| Complex64::from_polar(1.0, n as f64 * s)).re)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::freetrace::fubm_moment;

    #[test]
    fn real_root_is_density_at_one() {
        for t in [6.0, 9.0, 12.0] {
            let x = real_root(t).unwrap();
            let r = ((x - 1.0) / (x + 1.0)) * (t * x / 2.0).exp();
            assert!((r - 1.0).abs() < 1e-12);
            assert!((density(t, Complex64::new(1.0, 0.0)).unwrap() - x).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(density(3.0, Complex64::new(1.0, 0.0)), Err(FubmError::TimeRange(..))));
        assert!(matches!(density(6.0, Complex64::new(2.0, 0.0)), Err(FubmError::NotUnitModulus(_))));
        assert!(DensityTable::new(6.0, 4).is_err());
    }

    #[test]
    fn residual_small() {
        for s in [0.3, 1.5, 3.0, 4.0, 6.0] {
            let z = solve(7.0, s).unwrap();
            assert!(residual(7.0, z, Complex64::from_polar(1.0, s)).norm() <= RESIDUAL_TOL);
            assert!(z.re > 0.0);
        }
    }

    #[test]
    fn table_moments() {
        let tab = DensityTable::new(8.0, 1024).unwrap();
        assert!((tab.total() - 2.0 * PI).abs() < 1e-8);
        for n in 0..4 {
            let q = moment_by_quadrature(n, 8.0, &tab).unwrap();
            assert!((q - fubm_moment(n as i64, 8.0)).abs() < 1e-6, "{n} {q}");
        }
    }
}
