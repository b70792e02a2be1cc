use serde::{Deserialize, Serialize};

use super::Grid;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Potential {
    Free,
    /// `m omega^2 (x - center)^2 / 2`
    Harmonic { omega: f64, center: f64 },
    /// Two square barriers of height `height` and width `width`, centered at
    /// `center ± separation / 2`.
    #[serde(rename = "barrier_double_slit_1d")]
    BarrierDoubleSlit1d {
        height: f64,
        width: f64,
        separation: f64,
        center: f64,
    },
    /// Linear interpolation through `(x, v)`, constant beyond the ends.
    Tabulated { x: Vec<f64>, v: Vec<f64> },
}

impl Potential {
    pub fn validate(&self) -> Result<()> {
        match self {
            Potential::Free => Ok(()),
            Potential::Harmonic { omega, center } => {
                if !(omega.is_finite() && center.is_finite()) {
                    return Err(Error::param("potential.omega", "must be finite"));
                }
                Ok(())
            }
            Potential::BarrierDoubleSlit1d {
                height,
                width,
                separation,
                center,
            } => {
                if !(height.is_finite() && center.is_finite()) {
                    return Err(Error::param("potential.height", "must be finite"));
                }
                if !(*width > 0.0 && width.is_finite()) {
                    return Err(Error::param("potential.width", "must be positive"));
                }
                if !(separation.is_finite() && *separation >= *width) {
                    return Err(Error::param("potential.separation", "must be at least the barrier width"));
                }
                Ok(())
            }
            Potential::Tabulated { x, v } => {
                if x.len() != v.len() || x.is_empty() {
                    return Err(Error::param("potential.v", "x and v must be non-empty and equally long"));
                }
                if x.windows(2).any(|w| !(w[1] > w[0])) {
                    return Err(Error::param("potential.x", "must be strictly increasing"));
                }
                if x.iter().chain(v).any(|a| !a.is_finite()) {
                    return Err(Error::param("potential.v", "values must be finite"));
                }
                Ok(())
            }
        }
    }

    pub fn at(&self, x: f64, mass: f64) -> f64 {
        match self {
            Potential::Free => 0.0,
            Potential::Harmonic { omega, center } => 0.5 * mass * omega * omega * (x - center).powi(2),
            Potential::BarrierDoubleSlit1d {
                height,
                width,
                separation,
                center,
            } => {
                let off = (x - center).abs();
                if (off - 0.5 * separation).abs() <= 0.5 * width {
                    *height
                } else {
                    0.0
                }
            }
            Potential::Tabulated { x: xs, v } => {
                let i = xs.partition_point(|&a| a <= x);
                if i == 0 {
                    v[0]
                } else if i == xs.len() {
                    v[v.len() - 1]
                } else {
                    let s = (x - xs[i - 1]) / (xs[i] - xs[i - 1]);
                    v[i - 1] + s * (v[i] - v[i - 1])
                }
            }
        }
    }

    pub fn values(&self, grid: &Grid) -> Result<Vec<f64>> {
        self.validate()?;
        let v: Vec<f64> = grid.positions().into_iter().map(|x| self.at(x, grid.mass)).collect();
        if v.iter().any(|a| !a.is_finite()) {
            return Err(Error::param("potential", "must be finite on the grid"));
        }
        Ok(v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn potential_shapes() {
        let h = Potential::Harmonic { omega: 2.0, center: 1.0 };
        assert_eq!(h.at(3.0, 0.5), 0.5 * 0.5 * 4.0 * 4.0);
        let b = Potential::BarrierDoubleSlit1d {
            height: 5.0,
            width: 0.2,
            separation: 1.0,
            center: 0.0,
        };
        assert_eq!(b.at(0.5, 1.0), 5.0);
        assert_eq!(b.at(-0.45, 1.0), 5.0);
        assert_eq!(b.at(0.0, 1.0), 0.0);
        let t = Potential::Tabulated {
            x: vec![0.0, 1.0],
            v: vec![2.0, 4.0],
        };
        assert_eq!(t.at(0.25, 1.0), 2.5);
        assert_eq!(t.at(-3.0, 1.0), 2.0);
        assert_eq!(t.at(9.0, 1.0), 4.0);
        let bad = Potential::Tabulated {
            x: vec![0.0, 0.0],
            v: vec![1.0, 1.0],
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn serde_tags() {
        let p: Potential = serde_json::from_str(r#"{"kind":"harmonic","omega":1.0,"center":0.0}"#).unwrap();
        assert_eq!(p, Potential::Harmonic { omega: 1.0, center: 0.0 });
        let f: Potential = serde_json::from_str(r#"{"kind":"free"}"#).unwrap();
        assert_eq!(f, Potential::Free);
        let s = serde_json::to_string(&Potential::BarrierDoubleSlit1d {
            height: 1.0,
            width: 1.0,
            separation: 2.0,
            center: 0.0,
        })
        .unwrap();
        assert!(s.contains("barrier_double_slit_1d"));
    }
}
