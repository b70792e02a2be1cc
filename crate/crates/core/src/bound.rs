//! Both sides of the one-dimensional Berry–Esseen comparison between binned
//! detection counts and a Born density.
//!
//! The left side is the largest gap, over bin edges, between the cumulative
//! fraction of detections and the normalized CDF of the density. The right
//! side is `C * rho / sigma^3` built from raw central moments of the density
//! over a moment interval, with `C` the Zolotarev constant or 16% above it.
//! The comparison is reported twice: literally (no `1/sqrt(N)` factor) and in
//! the classical form that divides by `sqrt(N)`.

use serde::{Deserialize, Serialize};

use crate::density::{CdfTable, DensityModel, Recentered};
use crate::error::{Error, Result};
use crate::quadrature::{central_moment, integrate_density, Interval, QuadratureConfig};

/// `(3 + sqrt 10) / (6 sqrt(2 pi))`, the greatest lower bound of the Berry–Esseen constant.
pub fn zolotarev_constant() -> f64 {
    (3.0 + 10f64.sqrt()) / (6.0 * (2.0 * std::f64::consts::PI).sqrt())
}

/// Slack allowed on top of [`zolotarev_constant`] by the known upper estimate.
pub const UPPER_CONSTANT_FACTOR: f64 = 1.16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstantVariant {
    LowerBoundConstant,
    Plus16Percent,
}

impl ConstantVariant {
    pub fn value(self) -> f64 {
        match self {
            ConstantVariant::LowerBoundConstant => zolotarev_constant(),
            ConstantVariant::Plus16Percent => UPPER_CONSTANT_FACTOR * zolotarev_constant(),
        }
    }
}

/// Which end of the interval bin numbering starts from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    FromA,
    FromB,
}

impl Origin {
    pub fn as_str(self) -> &'static str {
        match self {
            Origin::FromA => "from_a",
            Origin::FromB => "from_b",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "from_a" => Some(Origin::FromA),
            "from_b" => Some(Origin::FromB),
            _ => None,
        }
    }
}

/// Equal-width bins over an interval, numbered from one end.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinningScheme {
    pub bin_count: usize,
    pub origin: Origin,
    pub interval: Interval,
}

impl BinningScheme {
    pub fn new(bin_count: usize, origin: Origin, interval: Interval) -> Result<Self> {
        if bin_count < 1 {
            return Err(Error::param("bin_count", "must be at least 1"));
        }
        interval.validate()?;
        Ok(Self {
            bin_count,
            origin,
            interval,
        })
    }

    /// Position of the `k`-th edge counted from the origin (`k = 0` is the origin itself).
    pub fn edge(&self, k: usize) -> f64 {
        let iv = self.interval;
        let frac = k as f64 / self.bin_count as f64;
        match (self.origin, k) {
            (Origin::FromA, 0) => iv.lo,
            (Origin::FromB, 0) => iv.hi,
            (Origin::FromA, k) if k == self.bin_count => iv.hi,
            (Origin::FromB, k) if k == self.bin_count => iv.lo,
            (Origin::FromA, _) => iv.lo + iv.width() * frac,
            (Origin::FromB, _) => iv.hi - iv.width() * frac,
        }
    }

    /// Number of whole bins between the origin and `x`.
    pub fn whole_bins_before(&self, x: f64) -> usize {
        let iv = self.interval;
        let dist = match self.origin {
            Origin::FromA => x - iv.lo,
            Origin::FromB => iv.hi - x,
        };
        let q = dist / iv.width() * self.bin_count as f64;
        let nearest = q.round();
        let j = if (q - nearest).abs() <= 1e-9 * self.bin_count as f64 {
            nearest
        } else {
            q.floor()
        };
        j.clamp(0.0, self.bin_count as f64) as usize
    }
}

/// Detection counts per bin, listed in the scheme's numbering order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalHistogram {
    pub scheme: BinningScheme,
    pub counts: Vec<u64>,
    pub total_n: u64,
}

impl EmpiricalHistogram {
    pub fn new(scheme: BinningScheme, counts: Vec<u64>) -> Result<Self> {
        if counts.len() != scheme.bin_count {
            return Err(Error::param(
                "counts",
                format!("expected {} bins, got {}", scheme.bin_count, counts.len()),
            ));
        }
        let total_n = counts.iter().sum();
        Ok(Self {
            scheme,
            counts,
            total_n,
        })
    }

    fn prefix_fraction(&self, bins: usize) -> f64 {
        let below: u64 = self.counts[..bins].iter().sum();
        below as f64 / self.total_n as f64
    }
}

/// Fraction of detections in the whole bins between the scheme origin and `x`.
pub fn empirical_cdf(h: &EmpiricalHistogram, x: f64) -> Result<f64> {
    if h.total_n == 0 {
        return Err(Error::EmptyHistogram);
    }
    let iv = h.scheme.interval;
    if !iv.contains(x) {
        return Err(Error::OutOfSupport { x, lo: iv.lo, hi: iv.hi });
    }
    Ok(h.prefix_fraction(h.scheme.whole_bins_before(x)))
}

/// Largest gap over bin edges between the empirical and theoretical CDFs,
/// both accumulated from the scheme's origin.
pub fn sup_deviation(h: &EmpiricalHistogram, table: &CdfTable<'_>) -> Result<f64> {
    if h.total_n == 0 {
        return Err(Error::EmptyHistogram);
    }
    let scheme = &h.scheme;
    if scheme.interval != table.interval() {
        return Err(Error::param(
            "interval",
            "histogram and density table must share the same interval",
        ));
    }
    let mut sup: f64 = 0.0;
    for k in 0..=scheme.bin_count {
        let edge = scheme.edge(k);
        let below = table.cdf(edge)?;
        let theoretical = match scheme.origin {
            Origin::FromA => below,
            Origin::FromB => 1.0 - below,
        };
        sup = sup.max((h.prefix_fraction(k) - theoretical).abs());
    }
    Ok(sup.min(1.0))
}

/// `rho / sigma^3` of the density about coordinate zero over `moment_iv`,
/// from the raw integrals: `∫|t|^3 d * (∫ d)^(1/2) / (∫ t^2 d)^(3/2)`.
pub fn moment_ratio(d: &dyn DensityModel, moment_iv: Interval, cfg: &QuadratureConfig) -> Result<f64> {
    let mass = integrate_density(d, |_| 1.0, moment_iv, cfg)?;
    if !(mass > 0.0) {
        return Err(Error::ZeroMass { mass });
    }
    let second = central_moment(d, 2, false, moment_iv, cfg)?;
    if !(second > 0.0) {
        return Err(Error::ZeroVariance);
    }
    let third_abs = central_moment(d, 3, true, moment_iv, cfg)?;
    Ok(third_abs * mass.sqrt() / (second * second.sqrt()))
}

/// Literal right-hand side `C * rho / sigma^3` for a density centered at zero.
pub fn bound_rhs(
    d: &dyn DensityModel,
    moment_iv: Interval,
    variant: ConstantVariant,
    cfg: &QuadratureConfig,
) -> Result<f64> {
    Ok(variant.value() * moment_ratio(d, moment_iv, cfg)?)
}

/// The pieces of the right-hand side that do not depend on the counts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundConstants {
    pub moment_ratio: f64,
    pub lower_constant: f64,
    pub upper_constant: f64,
}

impl BoundConstants {
    pub fn new(moment_ratio: f64) -> Self {
        Self {
            moment_ratio,
            lower_constant: ConstantVariant::LowerBoundConstant.value(),
            upper_constant: ConstantVariant::Plus16Percent.value(),
        }
    }

    /// Moments of `d` about `center` over `moment_iv` (detector coordinates).
    pub fn for_density(
        d: &dyn DensityModel,
        center: f64,
        moment_iv: Interval,
        cfg: &QuadratureConfig,
    ) -> Result<Self> {
        let centered = Recentered { inner: d, center };
        Ok(Self::new(moment_ratio(&centered, moment_iv.relative_to(center), cfg)?))
    }

    pub fn with_constants(mut self, lower: f64, upper: f64) -> Self {
        self.lower_constant = lower;
        self.upper_constant = upper;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdicts {
    pub lower_const: bool,
    pub upper_const: bool,
    #[serde(rename = "with_sqrtN_lower")]
    pub with_sqrt_n_lower: bool,
    #[serde(rename = "with_sqrtN_upper")]
    pub with_sqrt_n_upper: bool,
}

impl Verdicts {
    /// Both verdicts of the literal (no `1/sqrt(N)`) form.
    pub fn literal_pass(&self) -> bool {
        self.lower_const && self.upper_const
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    #[serde(rename = "N")]
    pub n: u64,
    pub sup_deviation: f64,
    pub rhs_lower_const: f64,
    pub rhs_upper_const: f64,
    #[serde(rename = "rhs_with_sqrtN_lower")]
    pub rhs_with_sqrt_n_lower: f64,
    #[serde(rename = "rhs_with_sqrtN_upper")]
    pub rhs_with_sqrt_n_upper: f64,
    pub verdicts: Verdicts,
    pub scheme: BinningScheme,
}

/// Evaluates all four forms of the inequality for one histogram.
pub fn verify_inequality(
    h: &EmpiricalHistogram,
    table: &CdfTable<'_>,
    constants: &BoundConstants,
) -> Result<BoundReport> {
    let sup = sup_deviation(h, table)?;
    let lower = constants.lower_constant * constants.moment_ratio;
    let upper = constants.upper_constant * constants.moment_ratio;
    let root_n = (h.total_n as f64).sqrt();
    let (lower_n, upper_n) = (lower / root_n, upper / root_n);
    Ok(BoundReport {
        n: h.total_n,
        sup_deviation: sup,
        rhs_lower_const: lower,
        rhs_upper_const: upper,
        rhs_with_sqrt_n_lower: lower_n,
        rhs_with_sqrt_n_upper: upper_n,
        verdicts: Verdicts {
            lower_const: sup <= lower,
            upper_const: sup <= upper,
            with_sqrt_n_lower: sup <= lower_n,
            with_sqrt_n_upper: sup <= upper_n,
        },
        scheme: h.scheme,
    })
}
