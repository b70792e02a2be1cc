//! Detector-plane intensity models.
//!
//! All coordinates are millimetres on the detector axis. Slit geometry is
//! stored in the units it is usually quoted in (nm, mm, pm) and converted on
//! use.

use std::f64::consts::PI;
use std::fmt;
use std::io::Read;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::{density_scale, integrate, integrate_density, Interval, QuadratureConfig};

const NM_TO_MM: f64 = 1e-6;
const PM_TO_MM: f64 = 1e-9;

/// A non-negative, possibly unnormalized intensity on the detector axis.
pub trait DensityModel: Send + Sync {
    /// Intensity at `t`; finite and non-negative.
    fn evaluate(&self, t: f64) -> f64;

    /// The interval the model is meant to be used on.
    fn support(&self) -> Interval;

    /// Points where the intensity vanishes exactly, in increasing order.
    fn analytic_zeros(&self) -> Vec<f64> {
        Vec::new()
    }

    /// Points where quadrature should start a new panel: analytic zeros and
    /// any kinks of the model.
    fn breakpoints(&self) -> Vec<f64> {
        self.analytic_zeros()
    }
}

impl<T: DensityModel + ?Sized> DensityModel for &T {
    fn evaluate(&self, t: f64) -> f64 {
        (**self).evaluate(t)
    }
    fn support(&self) -> Interval {
        (**self).support()
    }
    fn analytic_zeros(&self) -> Vec<f64> {
        (**self).analytic_zeros()
    }
    fn breakpoints(&self) -> Vec<f64> {
        (**self).breakpoints()
    }
}

impl<T: DensityModel + ?Sized> DensityModel for Box<T> {
    fn evaluate(&self, t: f64) -> f64 {
        (**self).evaluate(t)
    }
    fn support(&self) -> Interval {
        (**self).support()
    }
    fn analytic_zeros(&self) -> Vec<f64> {
        (**self).analytic_zeros()
    }
    fn breakpoints(&self) -> Vec<f64> {
        (**self).breakpoints()
    }
}

impl<T: DensityModel + ?Sized> DensityModel for Arc<T> {
    fn evaluate(&self, t: f64) -> f64 {
        (**self).evaluate(t)
    }
    fn support(&self) -> Interval {
        (**self).support()
    }
    fn analytic_zeros(&self) -> Vec<f64> {
        (**self).analytic_zeros()
    }
    fn breakpoints(&self) -> Vec<f64> {
        (**self).breakpoints()
    }
}

/// Two-slit apparatus.
///
/// Defaults are the electron double-slit parameters commonly quoted for the
/// controlled single-electron build-up experiment: 62 nm slits on a 272 nm
/// pitch and 600 eV electrons (50 pm). The 240 mm screen distance is a nominal
/// value. Treat all of them as configuration, not ground truth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SlitGeometry {
    #[serde(rename = "w_nm")]
    pub slit_width_nm: f64,
    #[serde(rename = "d_nm")]
    pub slit_separation_nm: f64,
    #[serde(rename = "L_mm")]
    pub screen_distance_mm: f64,
    #[serde(rename = "lambda_pm")]
    pub wavelength_pm: f64,
    #[serde(rename = "mu_mm")]
    pub center_mm: f64,
    #[serde(rename = "I0")]
    pub peak_height: f64,
}

impl Default for SlitGeometry {
    fn default() -> Self {
        Self {
            slit_width_nm: 62.0,
            slit_separation_nm: 272.0,
            screen_distance_mm: 240.0,
            wavelength_pm: 50.0,
            center_mm: 0.0,
            peak_height: 1.0,
        }
    }
}

impl SlitGeometry {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("geometry.w_nm", self.slit_width_nm),
            ("geometry.d_nm", self.slit_separation_nm),
            ("geometry.L_mm", self.screen_distance_mm),
            ("geometry.lambda_pm", self.wavelength_pm),
            ("geometry.I0", self.peak_height),
        ];
        for (key, value) in positive {
            if !(value > 0.0 && value.is_finite()) {
                return Err(Error::param(key, format!("must be positive and finite (got {value})")));
            }
        }
        if !self.center_mm.is_finite() {
            return Err(Error::param("geometry.mu_mm", "must be finite"));
        }
        if self.slit_separation_nm <= self.slit_width_nm {
            return Err(Error::param(
                "geometry.d_nm",
                format!(
                    "slit separation {} nm must exceed slit width {} nm",
                    self.slit_separation_nm, self.slit_width_nm
                ),
            ));
        }
        Ok(())
    }

    fn width_mm(&self) -> f64 {
        self.slit_width_nm * NM_TO_MM
    }

    fn separation_mm(&self) -> f64 {
        self.slit_separation_nm * NM_TO_MM
    }

    fn wavelength_mm(&self) -> f64 {
        self.wavelength_pm * PM_TO_MM
    }

    /// Offset `u = t - mu` of the `order`-th point where `aperture * u / (lambda * r) = order`,
    /// with `r = sqrt(L^2 + u^2)`; `None` past grazing incidence.
    fn null_offset(&self, aperture_mm: f64, order: f64) -> Option<f64> {
        let s = order * self.wavelength_mm();
        (s < aperture_mm).then(|| s * self.screen_distance_mm / (aperture_mm * aperture_mm - s * s).sqrt())
    }

    /// Offset of the `k`-th single-slit envelope null from the pattern center.
    pub fn envelope_null_offset(&self, k: u32) -> Option<f64> {
        self.null_offset(self.width_mm(), k as f64)
    }

    /// Symmetric support reaching out to the fifth envelope null on each side.
    pub fn default_support(&self) -> Result<Interval> {
        self.validate()?;
        let half = self
            .envelope_null_offset(5)
            .ok_or_else(|| Error::param("geometry.w_nm", "slit narrower than five wavelengths"))?;
        Interval::centered(self.center_mm, half)
    }
}

/// Single-slit envelope wavenumber `m(t) = pi w / (lambda sqrt(L^2 + (mu - t)^2))`, in 1/mm.
pub fn envelope_m(g: &SlitGeometry, t: f64) -> f64 {
    let r = g.screen_distance_mm.hypot(g.center_mm - t);
    PI * g.width_mm() / (r * g.wavelength_mm())
}

/// Two-slit fringe wavenumber, the separation analogue of [`envelope_m`], in 1/mm.
pub fn fringe_n(g: &SlitGeometry, t: f64) -> f64 {
    let r = g.screen_distance_mm.hypot(g.center_mm - t);
    PI * g.separation_mm() / (r * g.wavelength_mm())
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-4 {
        let x2 = x * x;
        1.0 - x2 / 6.0 + x2 * x2 / 120.0
    } else {
        x.sin() / x
    }
}

/// Fraunhofer two-slit intensity
/// `I0 cos^2(n(t) (t - mu)) [sin(m(t) (t - mu)) / (m(t) (t - mu))]^2`.
#[derive(Debug, Clone)]
pub struct DoubleSlit {
    geometry: SlitGeometry,
    support: Interval,
    zeros: Vec<f64>,
    // pi / lambda, in 1/mm
    phase_scale: f64,
}

/// Builds the double-slit density on the geometry's default support.
pub fn double_slit_density(g: SlitGeometry) -> Result<DoubleSlit> {
    let support = g.default_support()?;
    DoubleSlit::with_support(g, support)
}

impl DoubleSlit {
    pub fn with_support(geometry: SlitGeometry, support: Interval) -> Result<Self> {
        geometry.validate()?;
        support.validate()?;
        let mu = geometry.center_mm;
        let reach = (support.lo - mu).abs().max((support.hi - mu).abs());
        let mut offsets = Vec::new();
        let mut collect = |aperture: f64, shift: f64| {
            for k in 0.. {
                let order = k as f64 + shift;
                if order == 0.0 {
                    continue;
                }
                match geometry.null_offset(aperture, order) {
                    Some(u) if u <= reach => {
                        offsets.push(u);
                        offsets.push(-u);
                    }
                    _ => break,
                }
            }
        };
        collect(geometry.width_mm(), 0.0);
        collect(geometry.separation_mm(), 0.5);
        let mut zeros: Vec<f64> = offsets
            .into_iter()
            .map(|u| mu + u)
            .filter(|&t| support.contains(t))
            .collect();
        zeros.sort_by(f64::total_cmp);
        zeros.dedup();
        Ok(Self {
            geometry,
            support,
            zeros,
            phase_scale: PI / geometry.wavelength_mm(),
        })
    }

    pub fn geometry(&self) -> &SlitGeometry {
        &self.geometry
    }

    pub fn center(&self) -> f64 {
        self.geometry.center_mm
    }
}

impl DensityModel for DoubleSlit {
    fn evaluate(&self, t: f64) -> f64 {
        let g = &self.geometry;
        let u = t - g.center_mm;
        let a = self.phase_scale * u / g.screen_distance_mm.hypot(u);
        let fringe = (a * g.separation_mm()).cos();
        let envelope = sinc(a * g.width_mm());
        g.peak_height * fringe * fringe * envelope * envelope
    }

    fn support(&self) -> Interval {
        self.support
    }

    fn analytic_zeros(&self) -> Vec<f64> {
        self.zeros.clone()
    }
}

/// Constant intensity on its support, zero elsewhere.
#[derive(Debug, Clone, Copy)]
pub struct Uniform {
    support: Interval,
    height: f64,
}

impl Uniform {
    pub fn new(support: Interval, height: f64) -> Result<Self> {
        support.validate()?;
        if !(height >= 0.0 && height.is_finite()) {
            return Err(Error::param("height", "must be non-negative and finite"));
        }
        Ok(Self { support, height })
    }
}

impl DensityModel for Uniform {
    fn evaluate(&self, t: f64) -> f64 {
        if self.support.contains(t) {
            self.height
        } else {
            0.0
        }
    }
    fn support(&self) -> Interval {
        self.support
    }
}

/// Gaussian bump `height * exp(-(t - center)^2 / (2 sigma^2))` truncated to `support`.
#[derive(Debug, Clone, Copy)]
pub struct Gaussian {
    center: f64,
    sigma: f64,
    height: f64,
    support: Interval,
}

impl Gaussian {
    pub fn new(center: f64, sigma: f64, height: f64, support: Interval) -> Result<Self> {
        support.validate()?;
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::param("sigma", "must be positive and finite"));
        }
        if !(height >= 0.0 && height.is_finite()) || !center.is_finite() {
            return Err(Error::param("height", "must be non-negative and finite"));
        }
        Ok(Self {
            center,
            sigma,
            height,
            support,
        })
    }
}

impl DensityModel for Gaussian {
    fn evaluate(&self, t: f64) -> f64 {
        if !self.support.contains(t) {
            return 0.0;
        }
        let z = (t - self.center) / self.sigma;
        self.height * (-0.5 * z * z).exp()
    }
    fn support(&self) -> Interval {
        self.support
    }
}

/// Piecewise-linear density through `(t, value)` knots; zero outside the knot range.
#[derive(Debug, Clone, PartialEq)]
pub struct TabulatedDensity {
    t: Vec<f64>,
    values: Vec<f64>,
}

impl TabulatedDensity {
    pub fn new(knots: Vec<(f64, f64)>) -> Result<Self> {
        if knots.len() < 2 {
            return Err(Error::param("knots", "at least two knots are required"));
        }
        for (i, w) in knots.windows(2).enumerate() {
            if !(w[1].0 > w[0].0) {
                return Err(Error::param(
                    "t_mm",
                    format!("knots must be strictly increasing (row {})", i + 2),
                ));
            }
        }
        for (i, &(t, v)) in knots.iter().enumerate() {
            if !t.is_finite() || !(v >= 0.0 && v.is_finite()) {
                return Err(Error::param(
                    "intensity",
                    format!("row {} must be finite and non-negative (t = {t}, value = {v})", i + 1),
                ));
            }
        }
        let (t, values) = knots.into_iter().unzip();
        Ok(Self { t, values })
    }

    /// Tabulates `d` at `points` evenly spaced positions of `iv` (endpoints included).
    pub fn sample(d: &dyn DensityModel, iv: Interval, points: usize) -> Result<Self> {
        if points < 2 {
            return Err(Error::param("points", "at least two points are required"));
        }
        Self::new(linspace(iv, points).map(|t| (t, d.evaluate(t))).collect())
    }

    pub fn knots(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.t.iter().copied().zip(self.values.iter().copied())
    }

    /// Reads a CSV table with header `t_mm,intensity`.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers().map_err(|e| csv_error(&e))?.clone();
        if headers.iter().collect::<Vec<_>>() != ["t_mm", "intensity"] {
            return Err(Error::Parse {
                line: 1,
                message: format!("expected header `t_mm,intensity`, found `{}`", headers.iter().collect::<Vec<_>>().join(",")),
            });
        }
        let mut knots = Vec::new();
        for record in rdr.records() {
            let record = record.map_err(|e| csv_error(&e))?;
            let line = record.position().map_or(0, |p| p.line());
            let field = |i: usize, name: &str| -> Result<f64> {
                record
                    .get(i)
                    .ok_or_else(|| Error::Parse {
                        line,
                        message: format!("missing `{name}`"),
                    })?
                    .parse::<f64>()
                    .map_err(|e| Error::Parse {
                        line,
                        message: format!("bad `{name}`: {e}"),
                    })
            };
            knots.push((field(0, "t_mm")?, field(1, "intensity")?));
        }
        Self::new(knots)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_csv(std::fs::File::open(path)?)
    }
}

pub(crate) fn csv_error(e: &csv::Error) -> Error {
    Error::Parse {
        line: e.position().map_or(0, |p| p.line()),
        message: e.to_string(),
    }
}

impl DensityModel for TabulatedDensity {
    fn evaluate(&self, t: f64) -> f64 {
        let n = self.t.len();
        if t < self.t[0] || t > self.t[n - 1] {
            return 0.0;
        }
        let i = self.t.partition_point(|&x| x <= t);
        if i == 0 {
            return self.values[0];
        }
        if i >= n {
            return self.values[n - 1];
        }
        let (t0, t1) = (self.t[i - 1], self.t[i]);
        let s = (t - t0) / (t1 - t0);
        self.values[i - 1] + s * (self.values[i] - self.values[i - 1])
    }

    fn support(&self) -> Interval {
        Interval {
            lo: self.t[0],
            hi: self.t[self.t.len() - 1],
        }
    }

    fn analytic_zeros(&self) -> Vec<f64> {
        self.knots().filter(|&(_, v)| v == 0.0).map(|(t, _)| t).collect()
    }

    fn breakpoints(&self) -> Vec<f64> {
        self.t.clone()
    }
}

/// `factor * inner`.
#[derive(Debug, Clone)]
pub struct Scaled<D> {
    pub inner: D,
    pub factor: f64,
}

impl<D: DensityModel> DensityModel for Scaled<D> {
    fn evaluate(&self, t: f64) -> f64 {
        self.factor * self.inner.evaluate(t)
    }
    fn support(&self) -> Interval {
        self.inner.support()
    }
    fn analytic_zeros(&self) -> Vec<f64> {
        self.inner.analytic_zeros()
    }
    fn breakpoints(&self) -> Vec<f64> {
        self.inner.breakpoints()
    }
}

/// `inner` viewed in coordinates whose origin is `center`.
#[derive(Debug, Clone)]
pub struct Recentered<D> {
    pub inner: D,
    pub center: f64,
}

impl<D: DensityModel> DensityModel for Recentered<D> {
    fn evaluate(&self, t: f64) -> f64 {
        self.inner.evaluate(t + self.center)
    }
    fn support(&self) -> Interval {
        self.inner.support().relative_to(self.center)
    }
    fn analytic_zeros(&self) -> Vec<f64> {
        self.inner.analytic_zeros().into_iter().map(|z| z - self.center).collect()
    }
    fn breakpoints(&self) -> Vec<f64> {
        self.inner.breakpoints().into_iter().map(|z| z - self.center).collect()
    }
}

pub(crate) fn linspace(iv: Interval, points: usize) -> impl Iterator<Item = f64> {
    let last = (points - 1) as f64;
    (0..points).map(move |i| {
        if i + 1 == points {
            iv.hi
        } else {
            iv.lo + iv.width() * (i as f64 / last)
        }
    })
}

/// `∫ d` over `iv`.
pub fn total_mass(d: &dyn DensityModel, iv: Interval, cfg: &QuadratureConfig) -> Result<f64> {
    iv.validate()?;
    let scale = density_scale(d, iv);
    if scale == 0.0 {
        return Err(Error::ZeroMass { mass: 0.0 });
    }
    let mass = integrate_density(d, |_| 1.0, iv, cfg)?;
    if !(mass / scale > cfg.abs_tol) {
        return Err(Error::ZeroMass { mass });
    }
    Ok(mass)
}

/// Normalized CDF of `d` on `iv` at `x`. Builds a [`CdfTable`]; reuse one
/// when evaluating many points.
pub fn cdf(d: &dyn DensityModel, iv: Interval, x: f64, cfg: &QuadratureConfig) -> Result<f64> {
    CdfTable::new(d, iv, cfg)?.cdf(x)
}

/// Cumulative masses of a density over a fixed partition of an interval.
///
/// The partition is a uniform grid of [`CdfTable::DEFAULT_KNOTS`] cells merged
/// with the density's breakpoints, so every cell is free of zeros and kinks.
/// CDF values inside a cell add a single short integral to the tabulated
/// prefix, which keeps the result monotone in `x`.
pub struct CdfTable<'a> {
    density: &'a dyn DensityModel,
    interval: Interval,
    cfg: QuadratureConfig,
    knots: Vec<f64>,
    // cumulative unit-scaled mass at each knot
    cumulative: Vec<f64>,
    scale: f64,
}

impl fmt::Debug for CdfTable<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CdfTable")
            .field("interval", &self.interval)
            .field("cells", &(self.knots.len() - 1))
            .field("total_mass", &self.total_mass())
            .finish()
    }
}

impl<'a> CdfTable<'a> {
    pub const DEFAULT_KNOTS: usize = 4096;

    pub fn new(d: &'a dyn DensityModel, iv: Interval, cfg: &QuadratureConfig) -> Result<Self> {
        Self::with_cells(d, iv, Self::DEFAULT_KNOTS, cfg)
    }

    pub fn with_cells(d: &'a dyn DensityModel, iv: Interval, cells: usize, cfg: &QuadratureConfig) -> Result<Self> {
        iv.validate()?;
        cfg.validate()?;
        if cells == 0 {
            return Err(Error::param("cells", "must be at least 1"));
        }
        let scale = density_scale(d, iv);
        if scale == 0.0 {
            return Err(Error::ZeroMass { mass: 0.0 });
        }
        if !scale.is_finite() {
            return Err(Error::NonFiniteIntegrand { at: iv.midpoint() });
        }
        let min_gap = 1e-12 * iv.width();
        let mut knots: Vec<f64> = linspace(iv, cells + 1)
            .chain(d.breakpoints().into_iter().filter(|&x| x > iv.lo && x < iv.hi))
            .collect();
        knots.sort_by(f64::total_cmp);
        knots.dedup_by(|b, a| *b - *a <= min_gap);
        *knots.last_mut().expect("non-empty") = iv.hi;

        let inv = 1.0 / scale;
        let mut cumulative = Vec::with_capacity(knots.len());
        let mut acc = 0.0;
        cumulative.push(acc);
        for w in knots.windows(2) {
            let cell = Interval { lo: w[0], hi: w[1] };
            acc += integrate(|t| d.evaluate(t) * inv, cell, cfg)?.max(0.0);
            cumulative.push(acc);
        }
        if !(acc > cfg.abs_tol) {
            return Err(Error::ZeroMass { mass: acc * scale });
        }
        Ok(Self {
            density: d,
            interval: iv,
            cfg: *cfg,
            knots,
            cumulative,
            scale,
        })
    }

    pub fn interval(&self) -> Interval {
        self.interval
    }

    pub fn total_mass(&self) -> f64 {
        self.unit_total() * self.scale
    }

    fn unit_total(&self) -> f64 {
        *self.cumulative.last().expect("non-empty")
    }

    fn partial(&self, from: f64, to: f64) -> Result<f64> {
        if to <= from {
            return Ok(0.0);
        }
        let inv = 1.0 / self.scale;
        integrate(|t| self.density.evaluate(t) * inv, Interval { lo: from, hi: to }, &self.cfg)
    }

    fn cell_of(&self, x: f64) -> usize {
        self.knots
            .partition_point(|&k| k <= x)
            .saturating_sub(1)
            .min(self.knots.len() - 2)
    }

    /// Normalized CDF at `x`.
    pub fn cdf(&self, x: f64) -> Result<f64> {
        let iv = self.interval;
        if !iv.contains(x) {
            return Err(Error::OutOfSupport { x, lo: iv.lo, hi: iv.hi });
        }
        if x == iv.lo {
            return Ok(0.0);
        }
        if x == iv.hi {
            return Ok(1.0);
        }
        let k = self.cell_of(x);
        let cell_mass = self.cumulative[k + 1] - self.cumulative[k];
        let inside = self.partial(self.knots[k], x)?.clamp(0.0, cell_mass);
        Ok(((self.cumulative[k] + inside) / self.unit_total()).clamp(0.0, 1.0))
    }

    /// Smallest `x` with `cdf(x) = u`, to `1e-12` in CDF value.
    ///
    /// The root is bracketed by the tabulated cell, then refined by Newton
    /// steps on the quadrature CDF, falling back to bisection whenever a step
    /// leaves the bracket.
    pub fn inverse(&self, u: f64) -> Result<f64> {
        if !(0.0..1.0).contains(&u) {
            return Err(Error::param("u", format!("must lie in [0, 1), got {u}")));
        }
        if u == 0.0 {
            return Ok(self.interval.lo);
        }
        let total = self.unit_total();
        let target = u * total;
        let k = self
            .cumulative
            .partition_point(|&c| c <= target)
            .saturating_sub(1)
            .min(self.knots.len() - 2);
        let (start, end) = (self.knots[k], self.knots[k + 1]);
        let need = target - self.cumulative[k];
        let cell_mass = self.cumulative[k + 1] - self.cumulative[k];
        if !(cell_mass > 0.0) {
            return Err(Error::RootBracketFailure { u });
        }
        let tolerance = 1e-12 * total;
        let inv = 1.0 / self.scale;
        let (mut lo, mut hi) = (start, end);
        let mut x = start + (end - start) * (need / cell_mass).clamp(0.0, 1.0);
        for _ in 0..200 {
            let g = self.partial(start, x)? - need;
            if g.abs() <= tolerance {
                return Ok(x);
            }
            if g > 0.0 {
                hi = x;
            } else {
                lo = x;
            }
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                // bracket exhausted at machine resolution: plateau or exact root
                return Ok(mid);
            }
            let slope = self.density.evaluate(x) * inv;
            let newton = x - g / slope;
            x = if slope > 0.0 && newton > lo && newton < hi { newton } else { mid };
        }
        Ok(0.5 * (lo + hi))
    }
}
