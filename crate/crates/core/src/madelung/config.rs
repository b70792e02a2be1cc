use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{continuity_residual, decompose_polar, hj_residual, Grid, PolarField, Potential, Propagator, WaveField};
use crate::density::{DensityModel, DoubleSlit, SlitGeometry};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialState {
    PlaneWave {
        mode: i64,
        #[serde(default = "unit")]
        amplitude: f64,
    },
    Gaussian {
        center: f64,
        width: f64,
        #[serde(default)]
        k0: f64,
    },
    HarmonicGround {
        omega: f64,
        #[serde(default)]
        center: f64,
    },
    /// `sqrt` of the two-slit screen density with zero phase; `x` in mm.
    DoubleSlitScreen {
        #[serde(default)]
        geometry: SlitGeometry,
    },
}

fn unit() -> f64 {
    1.0
}

impl InitialState {
    pub fn build(&self, grid: Grid) -> Result<WaveField> {
        match self {
            InitialState::PlaneWave { mode, amplitude } => WaveField::plane_wave(grid, *mode, *amplitude),
            InitialState::Gaussian { center, width, k0 } => WaveField::gaussian(grid, *center, *width, *k0),
            InitialState::HarmonicGround { omega, center } => {
                if !(*omega > 0.0) {
                    return Err(Error::param("initial_state.omega", "must be positive"));
                }
                WaveField::harmonic_ground(grid, *omega, *center)
            }
            InitialState::DoubleSlitScreen { geometry } => {
                let d = DoubleSlit::with_support(*geometry, geometry.default_support()?)?;
                let support = d.support();
                WaveField::from_fn(grid, |x| {
                    let v = if support.contains(x) { d.evaluate(x).max(0.0).sqrt() } else { 0.0 };
                    Complex64::new(v, 0.0)
                })
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    PlaneWave,
    FreeGaussian,
    HarmonicGround,
    DoubleSlitScreen,
}

impl Preset {
    pub const ALL: [Preset; 4] = [Preset::PlaneWave, Preset::FreeGaussian, Preset::HarmonicGround, Preset::DoubleSlitScreen];

    pub fn as_str(self) -> &'static str {
        match self {
            Preset::PlaneWave => "plane_wave",
            Preset::FreeGaussian => "free_gaussian",
            Preset::HarmonicGround => "harmonic_ground",
            Preset::DoubleSlitScreen => "double_slit_screen",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.as_str() == s)
    }

    pub fn config(self) -> MadelungConfig {
        let grid = |x_min, x_max, points, dt| Grid {
            x_min,
            x_max,
            points,
            dt,
            mass: 1.0,
            hbar: 1.0,
        };
        match self {
            Preset::PlaneWave => MadelungConfig {
                grid: grid(-20.0, 20.0, 256, 0.01),
                potential: Potential::Free,
                initial_state: InitialState::PlaneWave { mode: 3, amplitude: 1.0 },
            },
            Preset::FreeGaussian => MadelungConfig {
                grid: grid(-40.0, 40.0, 1024, 0.01),
                potential: Potential::Free,
                initial_state: InitialState::Gaussian {
                    center: 0.0,
                    width: 1.0,
                    k0: 1.0,
                },
            },
            Preset::HarmonicGround => MadelungConfig {
                grid: grid(-10.0, 10.0, 2048, 1e-4),
                potential: Potential::Harmonic { omega: 1.0, center: 0.0 },
                initial_state: InitialState::HarmonicGround { omega: 1.0, center: 0.0 },
            },
            Preset::DoubleSlitScreen => MadelungConfig {
                grid: grid(-2.0, 2.0, 4096, 1e-7),
                potential: Potential::Free,
                initial_state: InitialState::DoubleSlitScreen {
                    geometry: SlitGeometry::default(),
                },
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MadelungConfig {
    pub grid: Grid,
    pub potential: Potential,
    pub initial_state: InitialState,
}

impl MadelungConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        self.potential.validate()
    }
}

/// Residual norms for the step `step -> step + 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualRecord {
    pub step: usize,
    pub time_mid: f64,
    pub norm: f64,
    pub hj_max: f64,
    pub hj_l2: f64,
    pub hj_normalized_l2: f64,
    pub continuity_max: f64,
    pub continuity_l2: f64,
    pub continuity_normalized_l2: f64,
}

/// Runs `steps` split-step updates. `on_snapshot` sees the state at step 0,
/// every `snapshot_every` steps, and at the end; residuals are recorded for
/// each step that starts on a snapshot.
pub fn simulate<F>(cfg: &MadelungConfig, steps: usize, snapshot_every: usize, mut on_snapshot: F) -> Result<Vec<ResidualRecord>>
where
    F: FnMut(usize, &WaveField, &PolarField) -> Result<()>,
{
    cfg.validate()?;
    if snapshot_every == 0 {
        return Err(Error::param("snapshot_every", "must be at least 1"));
    }
    let mut prop = Propagator::new(cfg.grid, &cfg.potential)?;
    let mut w = cfg.initial_state.build(cfg.grid)?;
    let mut polar = decompose_polar(&w);
    on_snapshot(0, &w, &polar)?;
    let mut records = Vec::new();
    for step in 0..steps {
        prop.step(&mut w)?;
        let next = decompose_polar(&w);
        if step % snapshot_every == 0 {
            let pair = [polar, next];
            let hj = hj_residual(&pair, &cfg.potential)?;
            let ct = continuity_residual(&pair)?;
            records.push(ResidualRecord {
                step,
                time_mid: 0.5 * (pair[0].time + pair[1].time),
                norm: w.norm(),
                hj_max: hj.max(),
                hj_l2: hj.l2(),
                hj_normalized_l2: hj.normalized_l2(),
                continuity_max: ct.max(),
                continuity_l2: ct.l2(),
                continuity_normalized_l2: ct.normalized_l2(),
            });
            let [_, next] = pair;
            polar = next;
        } else {
            polar = next;
        }
        let done = step + 1;
        if done % snapshot_every == 0 || done == steps {
            on_snapshot(done, &w, &polar)?;
        }
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate_and_build() {
        for p in Preset::ALL {
            let cfg = p.config();
            cfg.validate().unwrap();
            Propagator::new(cfg.grid, &cfg.potential).unwrap();
            let w = cfg.initial_state.build(cfg.grid).unwrap();
            assert!(w.norm() > 0.0);
            assert_eq!(Preset::parse(p.as_str()), Some(p));
        }
    }

    #[test]
    fn config_json_round_trip() {
        let cfg = Preset::FreeGaussian.config();
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(MadelungConfig::from_json(&text).unwrap(), cfg);
        assert!(MadelungConfig::from_json(r#"{"grid":{}}"#).is_err());
    }

    #[test]
    fn snapshot_schedule() {
        let mut seen = Vec::new();
        let recs = simulate(&Preset::PlaneWave.config(), 5, 2, |s, _, _| {
            seen.push(s);
            Ok(())
        })
        .unwrap();
        assert_eq!(seen, vec![0, 2, 4, 5]);
        assert_eq!(recs.iter().map(|r| r.step).collect::<Vec<_>>(), vec![0, 2, 4]);
        assert!(recs.iter().all(|r| r.hj_max < 1e-8 && r.continuity_max < 1e-8));
        let mut seen = 0;
        assert!(simulate(&Preset::PlaneWave.config(), 0, 1, |_, _, _| {
            seen += 1;
            Ok(())
        })
        .unwrap()
        .is_empty());
        assert_eq!(seen, 1);
    }
}
