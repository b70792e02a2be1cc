//! Replication protocol and convergence sweeps over the double-slit density.

mod report;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use report::{emit_report, parse_report, render_report, ConvergenceReport, ReportFormat, ReportRow, Summary, CSV_HEADER};

use crate::bound::{verify_inequality, BinningScheme, BoundConstants, Origin, UPPER_CONSTANT_FACTOR};
use crate::density::{CdfTable, DensityModel, DoubleSlit, SlitGeometry};
use crate::error::{Error, Result};
use crate::quadrature::{Interval, QuadratureConfig};
use crate::sampler::{bin_positions, read_events_csv, sample_from_table, EventRecord, RngSeed};

/// Detector counts at which the replication compares the bound with data.
pub const REPLICATION_N_VALUES: [u64; 9] = [13, 54, 101, 200, 227, 302, 448, 613, 803];

/// Electron counts of the four pattern build-up snapshots of the reference experiment.
pub const FIGURE_BUILDUP_COUNTS: [u64; 4] = [7, 209, 1004, 6235];

/// `[a_mm, b_mm]` on the detector axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorInterval {
    pub a_mm: f64,
    pub b_mm: f64,
}

impl DetectorInterval {
    pub fn to_interval(self, key: &str) -> Result<Interval> {
        Interval::new(self.a_mm, self.b_mm).map_err(|_| {
            Error::param(
                key,
                format!("a_mm = {} and b_mm = {} must be finite with a_mm < b_mm", self.a_mm, self.b_mm),
            )
        })
    }
}

impl From<Interval> for DetectorInterval {
    fn from(iv: Interval) -> Self {
        Self { a_mm: iv.lo, b_mm: iv.hi }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BinningConfig {
    pub bin_counts: Vec<usize>,
    pub orientations: Vec<Origin>,
}

impl Default for BinningConfig {
    fn default() -> Self {
        Self {
            bin_counts: vec![10],
            orientations: vec![Origin::FromA, Origin::FromB],
        }
    }
}

/// Overrides for the two bound constants. `plus_16_percent` defaults to
/// 1.16 times whatever the lower constant is.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VariantConfig {
    pub lower_bound_constant: Option<f64>,
    pub plus_16_percent: Option<f64>,
}

impl VariantConfig {
    pub fn constants(&self) -> (f64, f64) {
        let lower = self
            .lower_bound_constant
            .unwrap_or_else(crate::bound::zolotarev_constant);
        let upper = self.plus_16_percent.unwrap_or(UPPER_CONSTANT_FACTOR * lower);
        (lower, upper)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub geometry: SlitGeometry,
    pub interval: DetectorInterval,
    pub binning: BinningConfig,
    pub n_values: Vec<u64>,
    pub seeds: Vec<u64>,
    pub quadrature: QuadratureConfig,
    /// Moment integration range in detector coordinates; moments are taken
    /// about the pattern center. Defaults to `interval` shifted to be
    /// symmetric about the center.
    pub moment_interval: Option<DetectorInterval>,
    pub variants: VariantConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            geometry: SlitGeometry::default(),
            interval: DetectorInterval { a_mm: -1.0, b_mm: 1.0 },
            binning: BinningConfig::default(),
            n_values: REPLICATION_N_VALUES.to_vec(),
            seeds: vec![0],
            quadrature: QuadratureConfig::default(),
            moment_interval: None,
            variants: VariantConfig::default(),
        }
    }
}

impl ExperimentConfig {
    /// The four build-up snapshot counts instead of the nine replication counts.
    pub fn figure_buildup() -> Self {
        Self {
            n_values: FIGURE_BUILDUP_COUNTS.to_vec(),
            ..Self::default()
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.geometry.validate()?;
        self.event_interval()?;
        self.moment_interval()?;
        self.quadrature.validate()?;
        if self.n_values.is_empty() || self.n_values.contains(&0) {
            return Err(Error::param("n_values", "must be a non-empty list of counts >= 1"));
        }
        if self.binning.bin_counts.is_empty() || self.binning.bin_counts.contains(&0) {
            return Err(Error::param("binning.bin_counts", "must be a non-empty list of counts >= 1"));
        }
        if self.binning.orientations.is_empty() {
            return Err(Error::param("binning.orientations", "must name at least one origin"));
        }
        if self.seeds.is_empty() {
            return Err(Error::param("seeds", "must contain at least one seed"));
        }
        let (lower, upper) = self.variants.constants();
        for (key, value) in [("variants.lower_bound_constant", lower), ("variants.plus_16_percent", upper)] {
            if !(value > 0.0 && value.is_finite()) {
                return Err(Error::param(key, "must be positive and finite"));
            }
        }
        Ok(())
    }

    pub fn event_interval(&self) -> Result<Interval> {
        self.interval.to_interval("interval")
    }

    pub fn moment_interval(&self) -> Result<Interval> {
        match self.moment_interval {
            Some(m) => m.to_interval("moment_interval"),
            None => {
                let iv = self.event_interval()?;
                Interval::centered(self.geometry.center_mm, 0.5 * iv.width())
            }
        }
    }

    pub fn density(&self) -> Result<DoubleSlit> {
        DoubleSlit::with_support(self.geometry, self.event_interval()?)
    }
}

/// A density prepared for repeated verification: CDF table over the event
/// interval plus the count-independent half of the bound.
pub struct Experiment<'a> {
    pub table: CdfTable<'a>,
    pub constants: BoundConstants,
}

impl<'a> Experiment<'a> {
    pub fn prepare(d: &'a dyn DensityModel, center: f64, cfg: &ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        let table = CdfTable::new(d, cfg.event_interval()?, &cfg.quadrature)?;
        let (lower, upper) = cfg.variants.constants();
        let constants = BoundConstants::for_density(d, center, cfg.moment_interval()?, &cfg.quadrature)?
            .with_constants(lower, upper);
        Ok(Self { table, constants })
    }

    /// Sample → bin → verify for every (N, bins, origin, seed) tuple.
    pub fn run(&self, n_values: &[u64], bin_counts: &[usize], origins: &[Origin], seeds: &[u64]) -> Result<ConvergenceReport> {
        let n_max = n_values.iter().copied().max().unwrap_or(0) as usize;
        let interval = self.table.interval();
        let per_seed: Vec<Vec<ReportRow>> = seeds
            .par_iter()
            .map(|&seed| {
                let events = sample_from_table(&self.table, n_max, RngSeed(seed))?;
                let positions: Vec<f64> = events.iter().map(|e| e.position).collect();
                let mut rows = Vec::with_capacity(n_values.len() * bin_counts.len() * origins.len());
                for &n in n_values {
                    for &bins in bin_counts {
                        for &origin in origins {
                            let scheme = BinningScheme::new(bins, origin, interval)?;
                            let h = bin_positions(&positions[..n as usize], scheme)?;
                            let report = verify_inequality(&h, &self.table, &self.constants)?;
                            rows.push(ReportRow { seed, report });
                        }
                    }
                }
                Ok(rows)
            })
            .collect::<Result<_>>()?;
        Ok(ConvergenceReport::from_rows(per_seed.into_iter().flatten().collect()))
    }

    /// Verifies externally supplied detections.
    pub fn verify_events(&self, events: &[EventRecord], bins: usize, origin: Origin) -> Result<crate::bound::BoundReport> {
        let scheme = BinningScheme::new(bins, origin, self.table.interval())?;
        let h = crate::sampler::bin_events(events, scheme)?;
        verify_inequality(&h, &self.table, &self.constants)
    }
}

/// Runs the replication grid on the configured double-slit density.
pub fn run_replication(cfg: &ExperimentConfig) -> Result<ConvergenceReport> {
    cfg.validate()?;
    let density = cfg.density()?;
    replicate_with(&density, cfg.geometry.center_mm, cfg)
}

/// Runs the replication grid on an arbitrary density centered at `center`.
pub fn replicate_with(d: &dyn DensityModel, center: f64, cfg: &ExperimentConfig) -> Result<ConvergenceReport> {
    let experiment = Experiment::prepare(d, center, cfg)?;
    experiment.run(&cfg.n_values, &cfg.binning.bin_counts, &cfg.binning.orientations, &cfg.seeds)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    #[serde(rename = "N")]
    pub n: u64,
    pub median_sup_deviation: f64,
}

/// Least-squares fit of `ln(median sup-deviation)` against `ln N` for one binning.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepFit {
    pub bin_count: usize,
    pub origin: Origin,
    pub points: Vec<SweepPoint>,
    pub slope: f64,
    pub intercept: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub report: ConvergenceReport,
    pub fits: Vec<SweepFit>,
}

impl SweepReport {
    /// Slope of the first configured binning.
    pub fn slope(&self) -> f64 {
        self.fits[0].slope
    }
}

/// Roughly log-spaced integers from `lo` to `hi` inclusive, deduplicated.
pub fn geometric_grid(lo: u64, hi: u64, points: usize) -> Vec<u64> {
    if points <= 1 || lo >= hi {
        return vec![lo];
    }
    let ratio = (hi as f64 / lo as f64).ln() / (points - 1) as f64;
    let mut grid: Vec<u64> = (0..points)
        .map(|i| ((lo as f64).ln() + ratio * i as f64).exp().round() as u64)
        .collect();
    grid[0] = lo;
    grid[points - 1] = hi;
    grid.dedup();
    grid
}

pub(crate) fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Slope and intercept of the least-squares line through `(x, y)`.
pub fn least_squares(x: &[f64], y: &[f64]) -> Result<(f64, f64)> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    if x.len() < 2 || !(sxx > 0.0) {
        return Err(Error::SlopeUndefined { points: x.len() });
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    Ok((slope, my - slope * mx))
}

/// Median sup-deviation per N over `seeds`, and its power-law exponent.
pub fn run_convergence_sweep(cfg: &ExperimentConfig, n_grid: &[u64], seeds: &[u64]) -> Result<SweepReport> {
    cfg.validate()?;
    let density = cfg.density()?;
    sweep_with(&density, cfg.geometry.center_mm, cfg, n_grid, seeds)
}

pub fn sweep_with(
    d: &dyn DensityModel,
    center: f64,
    cfg: &ExperimentConfig,
    n_grid: &[u64],
    seeds: &[u64],
) -> Result<SweepReport> {
    let mut grid = n_grid.to_vec();
    grid.sort_unstable();
    grid.dedup();
    if grid.len() < 2 {
        return Err(Error::SlopeUndefined { points: grid.len() });
    }
    if grid.contains(&0) {
        return Err(Error::param("n_grid", "counts must be >= 1"));
    }
    if (grid[grid.len() - 1] as f64) < 100.0 * grid[0] as f64 {
        return Err(Error::param("n_grid", "must span at least two decades"));
    }
    if seeds.is_empty() {
        return Err(Error::param("seeds", "must contain at least one seed"));
    }
    let experiment = Experiment::prepare(d, center, cfg)?;
    let report = experiment.run(&grid, &cfg.binning.bin_counts, &cfg.binning.orientations, seeds)?;

    let mut fits = Vec::new();
    for &bins in &cfg.binning.bin_counts {
        for &origin in &cfg.binning.orientations {
            let points: Vec<SweepPoint> = grid
                .iter()
                .map(|&n| {
                    let mut sups: Vec<f64> = report
                        .rows
                        .iter()
                        .filter(|r| r.report.n == n && r.report.scheme.bin_count == bins && r.report.scheme.origin == origin)
                        .map(|r| r.report.sup_deviation)
                        .collect();
                    SweepPoint {
                        n,
                        median_sup_deviation: median(&mut sups),
                    }
                })
                .collect();
            if points.iter().any(|p| !(p.median_sup_deviation > 0.0)) {
                return Err(Error::SlopeUndefined { points: 0 });
            }
            let x: Vec<f64> = points.iter().map(|p| (p.n as f64).ln()).collect();
            let y: Vec<f64> = points.iter().map(|p| p.median_sup_deviation.ln()).collect();
            let (slope, intercept) = least_squares(&x, &y)?;
            fits.push(SweepFit {
                bin_count: bins,
                origin,
                points,
                slope,
                intercept,
            });
        }
    }
    Ok(SweepReport { report, fits })
}

/// Loads detections from an `index,t_mm` CSV and checks them against `interval`.
pub fn ingest_events(path: impl AsRef<Path>, interval: Interval) -> Result<Vec<EventRecord>> {
    let path = path.as_ref();
    let text = std::fs::read(path)?;
    if text.iter().all(u8::is_ascii_whitespace) {
        return Err(Error::EmptyFile { path: path.to_path_buf() });
    }
    let events = read_events_csv(text.as_slice())?;
    if events.is_empty() {
        return Err(Error::EmptyFile { path: path.to_path_buf() });
    }
    let outside: Vec<usize> = events
        .iter()
        .enumerate()
        .filter(|(_, e)| !interval.contains(e.position))
        .map(|(i, _)| i)
        .collect();
    if !outside.is_empty() {
        return Err(Error::OutOfInterval { indices: outside });
    }
    Ok(events)
}

/// Writes through a temporary file in the destination directory, then renames.
pub fn write_atomically<F>(path: &Path, write: F) -> Result<()>
where
    F: FnOnce(&mut BufWriter<&mut File>) -> Result<()>,
{
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    {
        let mut w = BufWriter::new(tmp.as_file_mut());
        write(&mut w)?;
        w.flush()?;
    }
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}
