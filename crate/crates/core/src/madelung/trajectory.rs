use super::residual::{velocity, MaskedField};
use super::{idx, PolarField};
use crate::density::{CdfTable, TabulatedDensity};
use crate::error::{Error, Result};
use crate::quadrature::{Interval, QuadratureConfig};
use crate::sampler::{sample_from_table, RngSeed};

/// Equal-weight particle positions guided by `dS/dx / m`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryEnsemble {
    pub positions: Vec<f64>,
    /// Trajectories that ran into a node; they no longer move.
    pub frozen: Vec<bool>,
    pub time: f64,
}

impl TrajectoryEnsemble {
    pub fn new(positions: Vec<f64>, time: f64) -> Result<Self> {
        if positions.is_empty() {
            return Err(Error::param("positions", "need at least one trajectory"));
        }
        if positions.iter().any(|x| !x.is_finite()) {
            return Err(Error::param("positions", "must be finite"));
        }
        let frozen = vec![false; positions.len()];
        Ok(Self { positions, frozen, time })
    }

    /// `m` positions drawn from `R^2` of `p`, read as piecewise linear
    /// between grid points on `[x_min, x_max - dx]`.
    pub fn sample(p: &PolarField, m: usize, seed: RngSeed) -> Result<Self> {
        let d = grid_density(p)?;
        let table = CdfTable::new(&d, support(p)?, &QuadratureConfig::default())?;
        let positions = sample_from_table(&table, m, seed)?.into_iter().map(|e| e.position).collect();
        Self::new(positions, p.time)
    }

    pub fn frozen_count(&self) -> usize {
        self.frozen.iter().filter(|f| **f).count()
    }
}

fn grid_density(p: &PolarField) -> Result<TabulatedDensity> {
    TabulatedDensity::new((0..p.grid.points).map(|j| (p.grid.x(j), p.r[j] * p.r[j])).collect())
}

fn support(p: &PolarField) -> Result<Interval> {
    Interval::new(p.grid.x_min, p.grid.x(p.grid.points - 1))
}

/// Kolmogorov–Smirnov distance between the ensemble's empirical CDF and the
/// normalized `R^2` of `p` (same interpolation as [`TrajectoryEnsemble::sample`]).
pub fn ks_distance(e: &TrajectoryEnsemble, p: &PolarField) -> Result<f64> {
    let d = grid_density(p)?;
    let table = CdfTable::new(&d, support(p)?, &QuadratureConfig::default())?;
    let mut xs = e.positions.clone();
    xs.sort_by(f64::total_cmp);
    let m = xs.len() as f64;
    let mut worst = 0.0f64;
    for (i, &x) in xs.iter().enumerate() {
        let f = table.cdf(x)?;
        worst = worst.max((i as f64 + 1.0) / m - f).max(f - i as f64 / m);
    }
    Ok(worst)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Advection {
    pub ensemble: TrajectoryEnsemble,
    /// Indices frozen during this step.
    pub collisions: Vec<usize>,
}

/// Four-point Lagrange interpolation; `None` if any stencil point is masked.
fn interpolate(field: &MaskedField, p: &PolarField, x: f64) -> Option<f64> {
    let n = p.grid.points;
    let s = (p.grid.wrap(x) - p.grid.x_min) / p.grid.dx();
    let base = s.floor();
    let t = s - base;
    let j = base as usize % n;
    let w = [
        -t * (t - 1.0) * (t - 2.0) / 6.0,
        (t + 1.0) * (t - 1.0) * (t - 2.0) / 2.0,
        -(t + 1.0) * t * (t - 2.0) / 2.0,
        (t + 1.0) * t * (t - 1.0) / 6.0,
    ];
    let mut acc = 0.0;
    for (o, wk) in (-1..=2).zip(w) {
        let k = idx(j, o, n);
        if field.mask[k] {
            return None;
        }
        acc += wk * field.values[k];
    }
    Some(acc)
}

/// Advances every live trajectory from `now.time` to `next.time` with Heun's
/// method: Euler predictor on the velocity of `now`, trapezoidal corrector
/// with the velocity of `next`. A trajectory whose interpolation stencil
/// touches a node is frozen in place and reported in `collisions`.
pub fn advect_trajectories(e: &TrajectoryEnsemble, now: &PolarField, next: &PolarField) -> Result<Advection> {
    let dt = next.time - now.time;
    if now.grid != next.grid || !(dt > 0.0) {
        return Err(Error::InsufficientHistory);
    }
    let grid = now.grid;
    let (v0, v1) = (velocity(now), velocity(next));
    let mut out = e.clone();
    let mut collisions = Vec::new();
    for (i, x) in out.positions.iter_mut().enumerate() {
        if out.frozen[i] {
            continue;
        }
        let step = interpolate(&v0, now, *x).and_then(|a| {
            let predicted = grid.wrap(*x + dt * a);
            interpolate(&v1, next, predicted).map(|b| 0.5 * dt * (a + b))
        });
        match step {
            Some(dx) => *x = grid.wrap(*x + dx),
            None => {
                out.frozen[i] = true;
                collisions.push(i);
            }
        }
    }
    out.time = next.time;
    Ok(Advection {
        ensemble: out,
        collisions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::madelung::{decompose_polar, evolve_step, Grid, Potential, WaveField};
    use num_complex::Complex64;

    #[test]
    fn plane_wave_moves_at_group_velocity() {
        let g = Grid::new(-10.0, 10.0, 128, 0.05).unwrap().with_units(2.0, 0.5).unwrap();
        let w0 = WaveField::plane_wave(g, 5, 1.0).unwrap();
        let w1 = evolve_step(&w0, &Potential::Free).unwrap();
        let e = TrajectoryEnsemble::new(vec![-3.3, 0.0, 1.234, 9.99], 0.0).unwrap();
        let a = advect_trajectories(&e, &decompose_polar(&w0), &decompose_polar(&w1)).unwrap();
        let k = 2.0 * std::f64::consts::PI * 5.0 / g.length();
        let shift = g.hbar * k / g.mass * g.dt;
        for (x0, x1) in e.positions.iter().zip(&a.ensemble.positions) {
            assert!((g.wrap(x0 + shift) - x1).abs() < 1e-12, "{x0} -> {x1}");
        }
        assert!(a.collisions.is_empty());
        assert_eq!(a.ensemble.time, g.dt);
    }

    #[test]
    fn stationary_state_does_not_move() {
        let g = Grid::new(-10.0, 10.0, 256, 1e-3).unwrap();
        let v = Potential::Harmonic { omega: 1.0, center: 0.0 };
        let w0 = WaveField::harmonic_ground(g, 1.0, 0.0).unwrap();
        let w1 = evolve_step(&w0, &v).unwrap();
        let e = TrajectoryEnsemble::new(vec![-1.0, 0.0, 0.5, 2.0], 0.0).unwrap();
        let a = advect_trajectories(&e, &decompose_polar(&w0), &decompose_polar(&w1)).unwrap();
        for (x0, x1) in e.positions.iter().zip(&a.ensemble.positions) {
            assert!((x0 - x1).abs() < 1e-9, "{x0} -> {x1}");
        }
    }

    #[test]
    fn node_collisions_freeze_trajectories() {
        let g = Grid::new(-5.0, 5.0, 128, 0.01).unwrap();
        let w0 = WaveField::from_fn(g, |x| Complex64::new(x * (-x * x).exp(), 0.0)).unwrap();
        let w1 = evolve_step(&w0, &Potential::Free).unwrap();
        let e = TrajectoryEnsemble::new(vec![0.0, 1.0], 0.0).unwrap();
        let a = advect_trajectories(&e, &decompose_polar(&w0), &decompose_polar(&w1)).unwrap();
        assert_eq!(a.collisions, vec![0]);
        assert_eq!(a.ensemble.positions[0], 0.0);
        assert_eq!(a.ensemble.frozen_count(), 1);
    }

    #[test]
    fn sampled_ensemble_matches_its_density() {
        let g = Grid::new(-10.0, 10.0, 256, 0.01).unwrap();
        let p = decompose_polar(&WaveField::gaussian(g, 1.0, 1.0, 0.0).unwrap());
        let e = TrajectoryEnsemble::sample(&p, 4000, RngSeed(3)).unwrap();
        let mean = e.positions.iter().sum::<f64>() / 4000.0;
        assert!((mean - 1.0).abs() < 0.1);
        assert!(ks_distance(&e, &p).unwrap() < 2.0 / 4000f64.sqrt());
        let shifted = TrajectoryEnsemble::new(e.positions.iter().map(|x| x + 1.0).collect(), 0.0).unwrap();
        assert!(ks_distance(&shifted, &p).unwrap() > 0.3);
    }
}
