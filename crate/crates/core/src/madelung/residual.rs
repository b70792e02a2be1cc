use super::{derivative4, idx, laplacian4, widen_mask, wrap_phase, PolarField, Potential};
use crate::error::{Error, Result};

/// Values on a grid with an invalidity mask (`true` = not evaluated).
#[derive(Debug, Clone, PartialEq)]
pub struct MaskedField {
    pub values: Vec<f64>,
    pub mask: Vec<bool>,
    pub dx: f64,
}

impl MaskedField {
    fn new(values: Vec<f64>, mask: Vec<bool>, dx: f64) -> Self {
        let values = values.into_iter().zip(&mask).map(|(v, &m)| if m { 0.0 } else { v }).collect();
        Self { values, mask, dx }
    }

    fn valid(&self) -> impl Iterator<Item = f64> + '_ {
        self.values.iter().zip(&self.mask).filter(|(_, &m)| !m).map(|(&v, _)| v)
    }

    pub fn valid_count(&self) -> usize {
        self.mask.iter().filter(|m| !**m).count()
    }

    pub fn max_abs(&self) -> f64 {
        self.valid().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `sqrt(sum v^2 dx)` over unmasked points.
    pub fn l2(&self) -> f64 {
        (self.valid().map(|v| v * v).sum::<f64>() * self.dx).sqrt()
    }
}

/// A residual field plus the L2 size of the largest term that entered it.
#[derive(Debug, Clone, PartialEq)]
pub struct Residual {
    pub field: MaskedField,
    pub scale: f64,
}

impl Residual {
    pub fn max(&self) -> f64 {
        self.field.max_abs()
    }

    pub fn l2(&self) -> f64 {
        self.field.l2()
    }

    /// `l2 / scale`; zero when both vanish.
    pub fn normalized_l2(&self) -> f64 {
        let l2 = self.l2();
        if l2 == 0.0 {
            0.0
        } else {
            l2 / self.scale
        }
    }
}

/// `dS/dx` from wrapped phase differences, fourth order.
fn action_gradient(p: &PolarField) -> MaskedField {
    let n = p.grid.points;
    let hbar = p.grid.hbar;
    let c = hbar / (12.0 * p.grid.dx());
    let diff = |j: usize, o: isize| wrap_phase((p.s[idx(j, o, n)] - p.s[idx(j, -o, n)]) / hbar);
    let values = (0..n).map(|j| (8.0 * diff(j, 1) - diff(j, 2)) * c).collect();
    MaskedField::new(values, widen_mask(&p.node_mask, 2), p.grid.dx())
}

/// Velocity field `dS/dx / m`.
pub(crate) fn velocity(p: &PolarField) -> MaskedField {
    let mut g = action_gradient(p);
    for v in &mut g.values {
        *v /= p.grid.mass;
    }
    g
}

/// `Q = -(hbar^2 / 2m) R'' / R`, fourth-order Laplacian; masked within two
/// points of a node.
pub fn quantum_potential(p: &PolarField) -> MaskedField {
    let lap = laplacian4(&p.r, p.grid.dx());
    let c = -p.grid.hbar * p.grid.hbar / (2.0 * p.grid.mass);
    let mask = widen_mask(&p.node_mask, 2);
    let values = lap.iter().zip(&p.r).map(|(l, r)| c * l / r).collect();
    MaskedField::new(values, mask, p.grid.dx())
}

fn last_pair(history: &[PolarField]) -> Result<(&PolarField, &PolarField, f64)> {
    let [.., prev, next] = history else {
        return Err(Error::InsufficientHistory);
    };
    let dt = next.time - prev.time;
    if prev.grid != next.grid || !(dt > 0.0) {
        return Err(Error::InsufficientHistory);
    }
    Ok((prev, next, dt))
}

fn l2_off(values: &[f64], mask: &[bool], dx: f64) -> f64 {
    MaskedField::new(values.to_vec(), mask.to_vec(), dx).l2()
}

/// Residual of `dS/dt + (dS/dx)^2 / 2m + V + Q = 0` between the last two
/// snapshots of `history`, centered at their midpoint.
pub fn hj_residual(history: &[PolarField], v: &Potential) -> Result<Residual> {
    let (prev, next, dt) = last_pair(history)?;
    let grid = &prev.grid;
    let vv = v.values(grid)?;
    let hamiltonian = |p: &PolarField| {
        let g = action_gradient(p);
        let q = quantum_potential(p);
        let h: Vec<f64> = (0..grid.points)
            .map(|j| g.values[j] * g.values[j] / (2.0 * grid.mass) + vv[j] + q.values[j])
            .collect();
        let mask: Vec<bool> = g.mask.iter().zip(&q.mask).map(|(a, b)| *a || *b).collect();
        (h, mask)
    };
    let (h0, m0) = hamiltonian(prev);
    let (h1, m1) = hamiltonian(next);
    let mask: Vec<bool> = (0..grid.points).map(|j| m0[j] || m1[j]).collect();
    let hbar = grid.hbar;
    let ds_dt: Vec<f64> = (0..grid.points)
        .map(|j| hbar * wrap_phase((next.s[j] - prev.s[j]) / hbar) / dt)
        .collect();
    let h_mid: Vec<f64> = (0..grid.points).map(|j| 0.5 * (h0[j] + h1[j])).collect();
    let values = (0..grid.points).map(|j| ds_dt[j] + h_mid[j]).collect();
    let dx = grid.dx();
    let scale = l2_off(&ds_dt, &mask, dx).max(l2_off(&h_mid, &mask, dx));
    Ok(Residual {
        field: MaskedField::new(values, mask, dx),
        scale,
    })
}

/// Residual of `d(R^2)/dt + d/dx (R^2 dS/dx / m) = 0` between the last two
/// snapshots of `history`. Linear in `R^2`.
pub fn continuity_residual(history: &[PolarField]) -> Result<Residual> {
    let (prev, next, dt) = last_pair(history)?;
    let grid = &prev.grid;
    let dx = grid.dx();
    let divergence = |p: &PolarField| {
        let vel = velocity(p);
        let flux: Vec<f64> = p.r.iter().zip(&vel.values).map(|(r, v)| r * r * v).collect();
        (derivative4(&flux, dx), widen_mask(&vel.mask, 2))
    };
    let (d0, m0) = divergence(prev);
    let (d1, m1) = divergence(next);
    let mask: Vec<bool> = (0..grid.points).map(|j| m0[j] || m1[j]).collect();
    let rate: Vec<f64> = (0..grid.points)
        .map(|j| (next.r[j] * next.r[j] - prev.r[j] * prev.r[j]) / dt)
        .collect();
    let div: Vec<f64> = (0..grid.points).map(|j| 0.5 * (d0[j] + d1[j])).collect();
    let values = (0..grid.points).map(|j| rate[j] + div[j]).collect();
    let scale = l2_off(&rate, &mask, dx).max(l2_off(&div, &mask, dx));
    Ok(Residual {
        field: MaskedField::new(values, mask, dx),
        scale,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Classicality {
    pub classical: bool,
    /// `max |R''| L^2 / max R` over non-node points, `L` the domain length.
    pub metric: f64,
    /// `R'' L^2 / max R` pointwise, zero at nodes.
    pub field: Vec<f64>,
}

/// Tests whether `R` is flat enough for `Q` to vanish: `R'' = 0` has only
/// constant bounded solutions.
pub fn classicality_check(p: &PolarField, tol: f64) -> Classicality {
    let r_max = p.r.iter().copied().fold(0.0, f64::max);
    let l2 = p.grid.length().powi(2);
    let lap = laplacian4(&p.r, p.grid.dx());
    let mask = widen_mask(&p.node_mask, 2);
    let field: Vec<f64> = lap
        .iter()
        .zip(&mask)
        .map(|(l, &m)| if m || r_max == 0.0 { 0.0 } else { l * l2 / r_max })
        .collect();
    let metric = field.iter().fold(0.0, |m: f64, v| m.max(v.abs()));
    Classicality {
        classical: metric < tol,
        metric,
        field,
    }
}
