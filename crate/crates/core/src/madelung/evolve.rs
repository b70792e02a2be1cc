use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::{Grid, Potential, WaveField};
use crate::error::{Error, Result};

/// Strang-split Fourier propagator: half potential kick, exact kinetic step
/// in k-space, half potential kick.
///
/// The kinetic factor is exact and the step is unitary for any `dt`. The
/// potential kick is limited to at most `pi` radians per step,
/// `dt <= pi hbar / max|V|`; past that the splitting error is no longer
/// controlled and phase differences between snapshots alias. A potential
/// that vanishes on the grid imposes no limit.
pub struct Propagator {
    grid: Grid,
    kinetic: Vec<Complex64>,
    half_kick: Vec<Complex64>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    scratch: Vec<Complex64>,
}

impl fmt::Debug for Propagator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Propagator").field("grid", &self.grid).finish()
    }
}

impl Propagator {
    pub fn new(grid: Grid, potential: &Potential) -> Result<Self> {
        grid.validate()?;
        let v = potential.values(&grid)?;
        let limit = Self::dt_limit(&grid, &v);
        if grid.dt > limit {
            return Err(Error::TimeStepTooLarge { dt: grid.dt, limit });
        }
        let n = grid.points;
        let (hbar, mass, dt) = (grid.hbar, grid.mass, grid.dt);
        let norm = 1.0 / n as f64;
        let kinetic = grid
            .wavenumbers()
            .into_iter()
            .map(|k| Complex64::from_polar(norm, -hbar * k * k * dt / (2.0 * mass)))
            .collect();
        let half_kick = v
            .iter()
            .map(|&vx| Complex64::from_polar(1.0, -vx * dt / (2.0 * hbar)))
            .collect();
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(n);
        let inverse = planner.plan_fft_inverse(n);
        let scratch = vec![Complex64::new(0.0, 0.0); forward.get_inplace_scratch_len().max(inverse.get_inplace_scratch_len())];
        Ok(Self {
            grid,
            kinetic,
            half_kick,
            forward,
            inverse,
            scratch,
        })
    }

    /// Largest admissible `dt` for `grid` and potential samples `v`.
    pub fn dt_limit(grid: &Grid, v: &[f64]) -> f64 {
        let v_max = v.iter().fold(0.0f64, |m, a| m.max(a.abs()));
        if v_max == 0.0 {
            return f64::INFINITY;
        }
        std::f64::consts::PI * grid.hbar / v_max
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// Advances `w` by one time step in place.
    pub fn step(&mut self, w: &mut WaveField) -> Result<()> {
        if w.grid != self.grid {
            return Err(Error::param("grid", "wave field and propagator grids differ"));
        }
        let before = w.norm();
        for (z, k) in w.psi.iter_mut().zip(&self.half_kick) {
            *z *= k;
        }
        self.forward.process_with_scratch(&mut w.psi, &mut self.scratch);
        for (z, k) in w.psi.iter_mut().zip(&self.kinetic) {
            *z *= k;
        }
        self.inverse.process_with_scratch(&mut w.psi, &mut self.scratch);
        for (z, k) in w.psi.iter_mut().zip(&self.half_kick) {
            *z *= k;
        }
        w.time += self.grid.dt;
        let drift = (w.norm() - before).abs() / before;
        if !(drift <= 1e-9) {
            return Err(Error::UnstableStep { drift });
        }
        Ok(())
    }
}

/// One split-step update of `w` under `v`. Plans FFTs on every call; build a
/// [`Propagator`] for repeated stepping.
pub fn evolve_step(w: &WaveField, v: &Potential) -> Result<WaveField> {
    let mut next = w.clone();
    Propagator::new(w.grid, v)?.step(&mut next)?;
    Ok(next)
}
