//! Deterministic adaptive quadrature on finite intervals.
//!
//! The integrator is a globally adaptive 7/15-point Gauss–Kronrod scheme: the
//! panel with the largest error estimate is bisected until the summed estimate
//! meets `max(abs_tol, rel_tol * |I|)`. Callers may pass breakpoints (for
//! example the analytic zeros of an oscillatory density) that are used as the
//! initial partition.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::density::DensityModel;
use crate::error::{Error, Result};

/// A finite, non-empty interval `[lo, hi]` on the detector axis (mm).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite()) || lo >= hi {
            return Err(Error::InvalidInterval { lo, hi });
        }
        Ok(Self { lo, hi })
    }

    /// Symmetric interval `[center - half_width, center + half_width]`.
    pub fn centered(center: f64, half_width: f64) -> Result<Self> {
        Self::new(center - half_width, center + half_width)
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.lo && x <= self.hi
    }

    /// The same interval expressed in coordinates whose origin sits at `origin`.
    pub fn relative_to(&self, origin: f64) -> Self {
        Self {
            lo: self.lo - origin,
            hi: self.hi - origin,
        }
    }

    pub fn validate(&self) -> Result<()> {
        Self::new(self.lo, self.hi).map(|_| ())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QuadratureConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_refinement_depth: usize,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        Self {
            rel_tol: 1e-9,
            abs_tol: 1e-12,
            max_refinement_depth: 60,
        }
    }
}

impl QuadratureConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0 && self.rel_tol.is_finite()) {
            return Err(Error::param("quadrature.rel_tol", "must be positive and finite"));
        }
        if !(self.abs_tol >= 0.0 && self.abs_tol.is_finite()) {
            return Err(Error::param("quadrature.abs_tol", "must be non-negative and finite"));
        }
        if self.max_refinement_depth < 1 {
            return Err(Error::param("quadrature.max_refinement_depth", "must be at least 1"));
        }
        Ok(())
    }

    pub fn with_rel_tol(mut self, rel_tol: f64) -> Self {
        self.rel_tol = rel_tol;
        self
    }
}

// Kronrod abscissae and weights (QUADPACK qk15); odd indices are the Gauss nodes.
const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

#[derive(Debug, Clone, Copy)]
struct Panel {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
    abs_value: f64,
    depth: usize,
}

impl Panel {
    // Below this the estimate is dominated by floating-point roundoff.
    fn roundoff_floor(&self) -> f64 {
        50.0 * f64::EPSILON * self.abs_value
    }

    fn refinable(&self) -> bool {
        let mid = 0.5 * (self.a + self.b);
        self.error > self.roundoff_floor() && mid > self.a && mid < self.b
    }
}

fn gauss_kronrod<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, depth: usize) -> Result<Panel> {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    if !fc.is_finite() {
        return Err(Error::NonFiniteIntegrand { at: center });
    }
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    let mut abs_value = fc.abs() * WGK[7];
    for j in 0..7 {
        let dx = half * XGK[j];
        let (x1, x2) = (center - dx, center + dx);
        let (f1, f2) = (f(x1), f(x2));
        if !f1.is_finite() {
            return Err(Error::NonFiniteIntegrand { at: x1 });
        }
        if !f2.is_finite() {
            return Err(Error::NonFiniteIntegrand { at: x2 });
        }
        kronrod += WGK[j] * (f1 + f2);
        abs_value += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            gauss += WG[j / 2] * (f1 + f2);
        }
    }
    Ok(Panel {
        a,
        b,
        value: kronrod * half,
        error: ((kronrod - gauss) * half).abs(),
        abs_value: abs_value * half.abs(),
        depth,
    })
}

struct ByError(Panel);

impl PartialEq for ByError {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for ByError {}
impl PartialOrd for ByError {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for ByError {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0
            .error
            .total_cmp(&other.0.error)
            .then_with(|| other.0.a.total_cmp(&self.0.a))
    }
}

/// Integrates `f` over `iv`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, iv: Interval, cfg: &QuadratureConfig) -> Result<f64> {
    integrate_with_breaks(f, iv, &[], cfg)
}

/// Integrates `f` over `iv`, starting from the partition induced by `breaks`.
///
/// Breakpoints outside the open interval are ignored; they need not be sorted.
pub fn integrate_with_breaks<F: Fn(f64) -> f64>(
    f: F,
    iv: Interval,
    breaks: &[f64],
    cfg: &QuadratureConfig,
) -> Result<f64> {
    iv.validate()?;
    cfg.validate()?;

    let mut nodes = Vec::with_capacity(breaks.len() + 2);
    nodes.push(iv.lo);
    nodes.extend(breaks.iter().copied().filter(|&x| x > iv.lo && x < iv.hi));
    nodes.push(iv.hi);
    nodes.sort_by(f64::total_cmp);
    nodes.dedup();

    let mut active = BinaryHeap::with_capacity(nodes.len());
    let mut settled_value = 0.0;
    let mut settled_error = 0.0;
    let mut settled_abs = 0.0;
    for w in nodes.windows(2) {
        let panel = gauss_kronrod(&f, w[0], w[1], 0)?;
        if panel.refinable() {
            active.push(ByError(panel));
        } else {
            settled_value += panel.value;
            settled_error += panel.error;
            settled_abs += panel.abs_value;
        }
    }

    loop {
        let (mut value, mut error, mut abs_value) = (settled_value, settled_error, settled_abs);
        for p in active.iter() {
            value += p.0.value;
            error += p.0.error;
            abs_value += p.0.abs_value;
        }
        let tolerance = cfg
            .abs_tol
            .max(cfg.rel_tol * value.abs())
            .max(50.0 * f64::EPSILON * abs_value);
        if error <= tolerance {
            return Ok(value);
        }
        let Some(ByError(worst)) = active.pop() else {
            // Everything is at the roundoff floor.
            return Ok(value);
        };
        if worst.depth >= cfg.max_refinement_depth {
            return Err(Error::NonConvergence {
                estimate: error,
                tolerance,
                depth: worst.depth,
            });
        }
        let mid = 0.5 * (worst.a + worst.b);
        for (a, b) in [(worst.a, mid), (mid, worst.b)] {
            let child = gauss_kronrod(&f, a, b, worst.depth + 1)?;
            if child.refinable() {
                active.push(ByError(child));
            } else {
                settled_value += child.value;
                settled_error += child.error;
                settled_abs += child.abs_value;
            }
        }
    }
}

/// Peak of `d` over a uniform scan of `iv` (plus its breakpoints), used to
/// bring density integrals to unit scale before applying tolerances.
pub(crate) fn density_scale(d: &dyn DensityModel, iv: Interval) -> f64 {
    const SCAN: usize = 1024;
    let grid = (0..=SCAN).map(|i| iv.lo + iv.width() * i as f64 / SCAN as f64);
    grid.chain(d.breakpoints().into_iter().filter(|&x| iv.contains(x)))
        .map(|t| d.evaluate(t))
        .fold(0.0, f64::max)
}

/// `∫ w(t) d(t) dt` over `iv`, computed on the unit-scaled density so that the
/// result is covariant under `d -> a d`.
pub(crate) fn integrate_density<W: Fn(f64) -> f64>(
    d: &dyn DensityModel,
    weight: W,
    iv: Interval,
    cfg: &QuadratureConfig,
) -> Result<f64> {
    let scale = density_scale(d, iv);
    if scale == 0.0 || !scale.is_finite() {
        return if scale == 0.0 {
            Ok(0.0)
        } else {
            Err(Error::NonFiniteIntegrand { at: iv.midpoint() })
        };
    }
    let inv = 1.0 / scale;
    let breaks = d.breakpoints();
    integrate_with_breaks(|t| weight(t) * (d.evaluate(t) * inv), iv, &breaks, cfg).map(|v| v * scale)
}

/// Raw (unnormalized) moment `∫ t^k d(t) dt`, or `∫ |t|^k d(t) dt` when
/// `absolute` is set. Coordinates are taken as already centered.
pub fn central_moment(
    d: &dyn DensityModel,
    k: u32,
    absolute: bool,
    iv: Interval,
    cfg: &QuadratureConfig,
) -> Result<f64> {
    if !(2..=3).contains(&k) {
        return Err(Error::param("k", format!("central moments of order {k} are not supported (2 or 3)")));
    }
    let k = k as i32;
    if absolute {
        integrate_density(d, |t: f64| t.abs().powi(k), iv, cfg)
    } else {
        integrate_density(d, |t: f64| t.powi(k), iv, cfg)
    }
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;

    use super::*;
    use crate::density::Uniform;

    fn cfg() -> QuadratureConfig {
        QuadratureConfig::default()
    }

    #[test]
    fn closed_form_examples() {
        let unit = Interval::new(0.0, 1.0).unwrap();
        assert!((integrate(|t| t, unit, &cfg()).unwrap() - 0.5).abs() < 1e-15);
        let sym = Interval::new(-1.0, 1.0).unwrap();
        assert!(integrate(|t| t, sym, &cfg()).unwrap().abs() < 1e-15);
        let half_turn = Interval::new(0.0, PI).unwrap();
        // -cos(pi) + cos(0)
        assert!((integrate(f64::sin, half_turn, &cfg()).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_intervals() {
        assert!(matches!(Interval::new(1.0, 1.0), Err(Error::InvalidInterval { .. })));
        assert!(matches!(Interval::new(2.0, 1.0), Err(Error::InvalidInterval { .. })));
        assert!(Interval::new(0.0, f64::INFINITY).is_err());
        let bad = Interval { lo: 1.0, hi: 0.0 };
        assert!(integrate(|t| t, bad, &cfg()).is_err());
    }

    #[test]
    fn depth_budget_exhaustion_is_reported() {
        let tight = QuadratureConfig {
            rel_tol: 1e-14,
            abs_tol: 0.0,
            max_refinement_depth: 1,
        };
        let iv = Interval::new(0.0, 1.0).unwrap();
        let err = integrate(|t: f64| t.sqrt(), iv, &tight).unwrap_err();
        assert!(matches!(err, Error::NonConvergence { .. }));
    }

    #[test]
    fn non_finite_integrand_is_an_error() {
        let iv = Interval::new(-1.0, 1.0).unwrap();
        let err = integrate(|t| if t > 0.5 { f64::NAN } else { 1.0 }, iv, &cfg()).unwrap_err();
        assert!(matches!(err, Error::NonFiniteIntegrand { .. }));
    }

    #[test]
    fn breakpoints_tame_oscillation() {
        // sin^2(40 t) on [0, pi] = pi / 2
        let iv = Interval::new(0.0, PI).unwrap();
        let zeros: Vec<f64> = (1..40).map(|k| k as f64 * PI / 40.0).collect();
        let v = integrate_with_breaks(|t: f64| (40.0 * t).sin().powi(2), iv, &zeros, &cfg()).unwrap();
        assert!((v - PI / 2.0).abs() < 1e-12);
    }

    #[test]
    fn uniform_moments() {
        let d = Uniform::new(Interval::new(-1.0, 1.0).unwrap(), 1.0).unwrap();
        let iv = d.support();
        let m2 = central_moment(&d, 2, false, iv, &cfg()).unwrap();
        let m3a = central_moment(&d, 3, true, iv, &cfg()).unwrap();
        let m3 = central_moment(&d, 3, false, iv, &cfg()).unwrap();
        assert!((m2 - 2.0 / 3.0).abs() < 1e-14);
        assert!((m3a - 0.5).abs() < 1e-14);
        assert!(m3.abs() < 1e-15);
        assert!(central_moment(&d, 4, false, iv, &cfg()).is_err());
    }

    #[test]
    fn config_validation() {
        let mut c = cfg();
        c.rel_tol = 0.0;
        assert!(c.validate().is_err());
        let mut c = cfg();
        c.abs_tol = -1.0;
        assert!(c.validate().is_err());
        let mut c = cfg();
        c.max_refinement_depth = 0;
        assert!(c.validate().is_err());
    }
}
