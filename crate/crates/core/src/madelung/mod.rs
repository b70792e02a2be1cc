//! One-dimensional Schrödinger evolution and its Madelung (polar) form.
//!
//! Writing `psi = R exp(iS/hbar)` splits the Schrödinger equation into a
//! Hamilton–Jacobi equation with the extra potential
//! `Q = -(hbar^2 / 2m) R''/R` and a continuity equation for `R^2`. This module
//! evolves `psi` with a split-step Fourier scheme on a periodic grid and
//! measures how well sampled `(R, S)` snapshots satisfy both equations.
//!
//! Discretization orders:
//! * evolution: Strang splitting, second order in `dt`, exact for `V = 0`;
//! * spatial derivatives in residuals and `Q`: fourth-order central
//!   differences (periodic);
//! * time derivatives in residuals: centered on the midpoint of two
//!   consecutive snapshots, second order in `dt`;
//! * trajectories: Heun's method with four-point Lagrange interpolation of
//!   the velocity field.

mod config;
mod evolve;
mod io;
mod polar;
mod potential;
mod residual;
mod trajectory;

use serde::{Deserialize, Serialize};

pub use config::{simulate, InitialState, MadelungConfig, Preset, ResidualRecord};
pub use evolve::{evolve_step, Propagator};
pub use io::{read_polar_csv, read_wave_csv, write_polar_csv, write_trajectories_csv, write_wave_csv};
pub use polar::{decompose_polar, PolarField, NODE_THRESHOLD};
pub use potential::Potential;
pub use residual::{classicality_check, continuity_residual, hj_residual, quantum_potential, Classicality, MaskedField, Residual};
pub use trajectory::{advect_trajectories, ks_distance, Advection, TrajectoryEnsemble};

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Periodic grid `x_j = x_min + j dx`, `dx = (x_max - x_min) / points`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    pub x_min: f64,
    pub x_max: f64,
    pub points: usize,
    pub dt: f64,
    #[serde(default = "one")]
    pub mass: f64,
    #[serde(default = "one")]
    pub hbar: f64,
}

fn one() -> f64 {
    1.0
}

impl Grid {
    pub fn new(x_min: f64, x_max: f64, points: usize, dt: f64) -> Result<Self> {
        let g = Self {
            x_min,
            x_max,
            points,
            dt,
            mass: 1.0,
            hbar: 1.0,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn with_units(mut self, mass: f64, hbar: f64) -> Result<Self> {
        self.mass = mass;
        self.hbar = hbar;
        self.validate()?;
        Ok(self)
    }

    pub fn with_dt(mut self, dt: f64) -> Result<Self> {
        self.dt = dt;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.points < 16 || !self.points.is_power_of_two() {
            return Err(Error::param("grid.points", "must be a power of two and at least 16"));
        }
        if !(self.x_min.is_finite() && self.x_max.is_finite() && self.x_max > self.x_min) {
            return Err(Error::param("grid.x_max", "must be finite and exceed grid.x_min"));
        }
        for (key, v) in [("grid.dt", self.dt), ("grid.mass", self.mass), ("grid.hbar", self.hbar)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::param(key, "must be positive and finite"));
            }
        }
        Ok(())
    }

    pub fn length(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn dx(&self) -> f64 {
        self.length() / self.points as f64
    }

    pub fn x(&self, j: usize) -> f64 {
        self.x_min + j as f64 * self.dx()
    }

    pub fn positions(&self) -> Vec<f64> {
        (0..self.points).map(|j| self.x(j)).collect()
    }

    /// Angular wavenumbers in FFT order.
    pub fn wavenumbers(&self) -> Vec<f64> {
        let n = self.points as i64;
        let base = 2.0 * std::f64::consts::PI / self.length();
        (0..n).map(|j| base * if j < n / 2 { j } else { j - n } as f64).collect()
    }

    /// Nyquist wavenumber `pi / dx`.
    pub fn k_max(&self) -> f64 {
        std::f64::consts::PI / self.dx()
    }

    /// Maps `x` into `[x_min, x_max)`.
    pub fn wrap(&self, x: f64) -> f64 {
        let l = self.length();
        let y = (x - self.x_min).rem_euclid(l);
        // rem_euclid can return l itself for tiny negative inputs
        if y >= l {
            self.x_min
        } else {
            self.x_min + y
        }
    }
}

/// `psi` sampled on a grid at a given time.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveField {
    pub grid: Grid,
    pub psi: Vec<Complex64>,
    pub time: f64,
}

impl WaveField {
    pub fn new(grid: Grid, psi: Vec<Complex64>, time: f64) -> Result<Self> {
        grid.validate()?;
        if psi.len() != grid.points {
            return Err(Error::param("psi", format!("expected {} values, got {}", grid.points, psi.len())));
        }
        if psi.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
            return Err(Error::param("psi", "values must be finite"));
        }
        let w = Self { grid, psi, time };
        if !(w.norm() > 0.0) {
            return Err(Error::param("psi", "norm must be positive"));
        }
        Ok(w)
    }

    pub fn from_fn(grid: Grid, f: impl Fn(f64) -> Complex64) -> Result<Self> {
        let psi = grid.positions().into_iter().map(f).collect();
        Self::new(grid, psi, 0.0)
    }

    /// `∫ |psi|^2 dx` (rectangle rule, exact for band-limited periodic data).
    pub fn norm(&self) -> f64 {
        self.psi.iter().map(Complex64::norm_sqr).sum::<f64>() * self.grid.dx()
    }

    /// `A exp(i k x)` with `k = 2 pi mode / L`, periodic on the grid.
    pub fn plane_wave(grid: Grid, mode: i64, amplitude: f64) -> Result<Self> {
        let k = 2.0 * std::f64::consts::PI * mode as f64 / grid.length();
        Self::from_fn(grid, |x| Complex64::from_polar(amplitude, k * x))
    }

    /// `exp(-(x - c)^2 / (4 s^2) + i k0 x)`; `|psi|^2` has standard deviation `s`.
    pub fn gaussian(grid: Grid, center: f64, width: f64, k0: f64) -> Result<Self> {
        if !(width > 0.0) {
            return Err(Error::param("width", "must be positive"));
        }
        Self::from_fn(grid, |x| {
            let z = x - center;
            Complex64::from_polar((-z * z / (4.0 * width * width)).exp(), k0 * x)
        })
    }

    /// Harmonic-oscillator ground state `exp(-m omega (x - c)^2 / (2 hbar))`.
    pub fn harmonic_ground(grid: Grid, omega: f64, center: f64) -> Result<Self> {
        let a = grid.mass * omega / (2.0 * grid.hbar);
        Self::from_fn(grid, |x| Complex64::new((-a * (x - center).powi(2)).exp(), 0.0))
    }
}

/// Wraps an angle into `(-pi, pi]`.
pub(crate) fn wrap_phase(theta: f64) -> f64 {
    use std::f64::consts::{PI, TAU};
    let w = theta - TAU * (theta / TAU).round();
    if w <= -PI {
        w + TAU
    } else {
        w
    }
}

pub(crate) fn idx(j: usize, offset: isize, n: usize) -> usize {
    (j as isize + offset).rem_euclid(n as isize) as usize
}

/// Fourth-order periodic second derivative.
pub(crate) fn laplacian4(f: &[f64], dx: f64) -> Vec<f64> {
    let n = f.len();
    let c = 1.0 / (12.0 * dx * dx);
    (0..n)
        .map(|j| {
            let near = f[idx(j, -1, n)] + f[idx(j, 1, n)];
            let far = f[idx(j, -2, n)] + f[idx(j, 2, n)];
            (16.0 * near - far - 30.0 * f[j]) * c
        })
        .collect()
}

/// Fourth-order periodic first derivative.
pub(crate) fn derivative4(f: &[f64], dx: f64) -> Vec<f64> {
    let n = f.len();
    let c = 1.0 / (12.0 * dx);
    (0..n)
        .map(|j| (8.0 * (f[idx(j, 1, n)] - f[idx(j, -1, n)]) - (f[idx(j, 2, n)] - f[idx(j, -2, n)])) * c)
        .collect()
}

/// Marks every point within `radius` of a masked point.
pub(crate) fn widen_mask(mask: &[bool], radius: usize) -> Vec<bool> {
    let n = mask.len();
    let r = radius as isize;
    (0..n).map(|j| (-r..=r).any(|o| mask[idx(j, o, n)])).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_validation() {
        assert!(Grid::new(-1.0, 1.0, 15, 0.1).is_err());
        assert!(Grid::new(-1.0, 1.0, 24, 0.1).is_err());
        assert!(Grid::new(1.0, -1.0, 16, 0.1).is_err());
        assert!(Grid::new(-1.0, 1.0, 16, 0.0).is_err());
        let g = Grid::new(-1.0, 1.0, 16, 0.1).unwrap();
        assert_eq!(g.dx(), 0.125);
        assert_eq!(g.wavenumbers()[8], -8.0 * std::f64::consts::PI);
        assert_eq!(g.wrap(1.0), -1.0);
        assert_eq!(g.wrap(-1.25), 0.75);
    }

    #[test]
    fn wrap_phase_range() {
        use std::f64::consts::PI;
        assert_eq!(wrap_phase(PI), PI);
        assert!((wrap_phase(-PI) - PI).abs() < 1e-15);
        assert!((wrap_phase(3.0 * PI + 0.1) - (-PI + 0.1)).abs() < 1e-12);
        assert!((wrap_phase(0.3) - 0.3).abs() < 1e-15);
    }

    #[test]
    fn constant_field_has_zero_laplacian() {
        let f = vec![0.7315; 32];
        assert!(laplacian4(&f, 0.1).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn stencils_are_fourth_order() {
        let err = |n: usize| {
            let l = 2.0 * std::f64::consts::PI;
            let dx = l / n as f64;
            let f: Vec<f64> = (0..n).map(|j| (j as f64 * dx).sin()).collect();
            let d1 = derivative4(&f, dx);
            let d2 = laplacian4(&f, dx);
            let e1 = (0..n).map(|j| (d1[j] - (j as f64 * dx).cos()).abs()).fold(0.0, f64::max);
            let e2 = (0..n).map(|j| (d2[j] + (j as f64 * dx).sin()).abs()).fold(0.0, f64::max);
            (e1, e2)
        };
        let (a1, a2) = err(32);
        let (b1, b2) = err(64);
        assert!(((a1 / b1).log2() - 4.0).abs() < 0.2);
        assert!(((a2 / b2).log2() - 4.0).abs() < 0.2);
    }
}
