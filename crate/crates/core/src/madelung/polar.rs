use num_complex::Complex64;

use super::{wrap_phase, Grid, WaveField};
use crate::error::{Error, Result};

/// Points with `R < NODE_THRESHOLD * max R` are nodes: their phase is not used.
pub const NODE_THRESHOLD: f64 = 1e-6;

/// `psi = R exp(iS/hbar)` on a grid.
///
/// `S` is unwrapped independently on each run of non-node points, starting
/// from the principal phase at the run's left end; it is set to zero on nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct PolarField {
    pub grid: Grid,
    pub r: Vec<f64>,
    pub s: Vec<f64>,
    pub node_mask: Vec<bool>,
    pub time: f64,
}

impl PolarField {
    /// Builds a field from amplitude and action samples; nodes are derived from `r`.
    pub fn new(grid: Grid, r: Vec<f64>, s: Vec<f64>, time: f64) -> Result<Self> {
        grid.validate()?;
        if r.len() != grid.points || s.len() != grid.points {
            return Err(Error::param("r", format!("expected {} samples", grid.points)));
        }
        if r.iter().any(|&a| !(a >= 0.0 && a.is_finite())) || s.iter().any(|a| !a.is_finite()) {
            return Err(Error::param("r", "R must be finite and non-negative and S finite"));
        }
        let node_mask = node_mask(&r);
        Ok(Self {
            grid,
            r,
            s,
            node_mask,
            time,
        })
    }

    /// `R exp(iS/hbar)`.
    pub fn recompose(&self) -> Vec<Complex64> {
        self.r
            .iter()
            .zip(&self.s)
            .map(|(&r, &s)| Complex64::from_polar(r, s / self.grid.hbar))
            .collect()
    }

    /// Copy with `R` scaled by `sqrt(a)`, i.e. density `R^2 -> a R^2`.
    pub fn with_density_scaled(&self, a: f64) -> Self {
        let f = a.sqrt();
        Self {
            r: self.r.iter().map(|r| r * f).collect(),
            ..self.clone()
        }
    }
}

fn node_mask(r: &[f64]) -> Vec<bool> {
    let cut = NODE_THRESHOLD * r.iter().copied().fold(0.0, f64::max);
    r.iter().map(|&a| a < cut).collect()
}

pub fn decompose_polar(w: &WaveField) -> PolarField {
    let hbar = w.grid.hbar;
    let r: Vec<f64> = w.psi.iter().map(|z| z.norm()).collect();
    let node_mask = node_mask(&r);
    let mut s = vec![0.0; r.len()];
    let mut previous: Option<f64> = None;
    for (j, z) in w.psi.iter().enumerate() {
        if node_mask[j] {
            previous = None;
            continue;
        }
        let theta = z.arg();
        let unwrapped = match previous {
            None => theta,
            Some(p) => p + wrap_phase(theta - p),
        };
        s[j] = hbar * unwrapped;
        previous = Some(unwrapped);
    }
    PolarField {
        grid: w.grid,
        r,
        s,
        node_mask,
        time: w.time,
    }
}
