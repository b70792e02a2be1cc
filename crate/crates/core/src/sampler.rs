//! Seeded detection-event generation.
//!
//! Every stream is ChaCha8 (`rand_chacha` 0.9) seeded through
//! `SeedableRng::seed_from_u64`, with uniforms drawn by `rand` 0.9's standard
//! `f64` conversion (53 random mantissa bits, range `[0, 1)`). Changing either
//! is a breaking change for report replication.

use std::io::{Read, Write};
use std::path::Path;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bound::{BinningScheme, EmpiricalHistogram, Origin};
use crate::density::{csv_error, CdfTable, DensityModel};
use crate::error::{Error, Result};
use crate::quadrature::{Interval, QuadratureConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RngSeed(pub u64);

impl RngSeed {
    pub fn rng(self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.0)
    }
}

/// One detection: where it landed and its place in the detection order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub index: u64,
    #[serde(rename = "t_mm")]
    pub position: f64,
}

/// Inverts the normalized CDF of `d` on `iv` at `u`.
///
/// Builds a fresh [`CdfTable`]; use [`CdfTable::inverse`] directly for repeated draws.
pub fn inverse_cdf_sample(d: &dyn DensityModel, iv: Interval, u: f64, cfg: &QuadratureConfig) -> Result<f64> {
    CdfTable::new(d, iv, cfg)?.inverse(u)
}

/// `n` i.i.d. detections from the table's density. Streams for the same seed
/// are prefixes of one another, so larger `n` extends a smaller run.
pub fn sample_from_table(table: &CdfTable<'_>, n: usize, seed: RngSeed) -> Result<Vec<EventRecord>> {
    let mut rng = seed.rng();
    (0..n)
        .map(|i| {
            let u: f64 = rng.random();
            Ok(EventRecord {
                index: i as u64,
                position: table.inverse(u)?,
            })
        })
        .collect()
}

pub fn sample_events(
    d: &dyn DensityModel,
    iv: Interval,
    n: usize,
    seed: RngSeed,
    cfg: &QuadratureConfig,
) -> Result<Vec<EventRecord>> {
    if n == 0 {
        iv.validate()?;
        return Ok(Vec::new());
    }
    let table = CdfTable::new(d, iv, cfg)?;
    sample_from_table(&table, n, seed)
}

/// Counts events per bin. Bins are half-open toward `b` with the last one
/// closed, so an event on an interior edge belongs to the bin on its `b` side
/// whichever end the numbering starts from.
pub fn bin_events(events: &[EventRecord], scheme: BinningScheme) -> Result<EmpiricalHistogram> {
    let positions: Vec<f64> = events.iter().map(|e| e.position).collect();
    bin_positions(&positions, scheme)
}

pub(crate) fn bin_positions(positions: &[f64], scheme: BinningScheme) -> Result<EmpiricalHistogram> {
    let iv = scheme.interval;
    let outside: Vec<usize> = positions
        .iter()
        .enumerate()
        .filter(|(_, &x)| !iv.contains(x))
        .map(|(i, _)| i)
        .collect();
    if !outside.is_empty() {
        return Err(Error::OutOfInterval { indices: outside });
    }
    let bins = scheme.bin_count;
    let mut counts = vec![0u64; bins];
    for &x in positions {
        let q = ((x - iv.lo) / iv.width() * bins as f64).floor();
        let i = (q.max(0.0) as usize).min(bins - 1);
        counts[i] += 1;
    }
    if scheme.origin == Origin::FromB {
        counts.reverse();
    }
    EmpiricalHistogram::new(scheme, counts)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutcomeFrequency {
    pub count: u64,
    pub frequency: f64,
}

/// Born probabilities `|a_i|^2 / sum |a_j|^2`.
pub fn born_probabilities(amplitudes: &[Complex64]) -> Result<Vec<f64>> {
    let weights: Vec<f64> = amplitudes.iter().map(|a| a.norm_sqr()).collect();
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) || !total.is_finite() {
        return Err(Error::DegenerateState);
    }
    Ok(weights.into_iter().map(|w| w / total).collect())
}

/// Observer frequencies after `n` measurements of a state with the given
/// amplitudes, each outcome drawn with its Born probability.
pub fn discrete_frequencies(amplitudes: &[Complex64], n: u64, seed: RngSeed) -> Result<Vec<OutcomeFrequency>> {
    if n == 0 {
        return Err(Error::param("N", "at least one measurement is required"));
    }
    let probabilities = born_probabilities(amplitudes)?;
    let mut cumulative: Vec<f64> = probabilities
        .iter()
        .scan(0.0, |acc, p| {
            *acc += p;
            Some(*acc)
        })
        .collect();
    // last outcome with positive weight absorbs rounding in the running sum
    let last = probabilities.iter().rposition(|&p| p > 0.0).expect("total > 0");
    for c in cumulative[last..].iter_mut() {
        *c = f64::INFINITY;
    }
    let mut counts = vec![0u64; amplitudes.len()];
    let mut rng = seed.rng();
    for _ in 0..n {
        let u: f64 = rng.random();
        let i = cumulative.partition_point(|&c| c <= u);
        counts[i] += 1;
    }
    Ok(counts
        .into_iter()
        .map(|count| OutcomeFrequency {
            count,
            frequency: count as f64 / n as f64,
        })
        .collect())
}

/// Writes events as CSV with header `index,t_mm`.
pub fn write_events_csv<W: Write>(events: &[EventRecord], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for e in events {
        w.serialize(e).map_err(|e| csv_error(&e))?;
    }
    if events.is_empty() {
        w.write_record(["index", "t_mm"]).map_err(|e| csv_error(&e))?;
    }
    w.flush()?;
    Ok(())
}

/// Reads an `index,t_mm` CSV, preserving row order.
pub fn read_events_csv<R: Read>(reader: R) -> Result<Vec<EventRecord>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(|e| csv_error(&e))?.clone();
    if headers.iter().collect::<Vec<_>>() != ["index", "t_mm"] {
        return Err(Error::Parse {
            line: 1,
            message: format!(
                "expected header `index,t_mm`, found `{}`",
                headers.iter().collect::<Vec<_>>().join(",")
            ),
        });
    }
    let mut events = Vec::new();
    for row in rdr.deserialize::<EventRecord>() {
        let e = row.map_err(|e| csv_error(&e))?;
        if !e.position.is_finite() {
            return Err(Error::Parse {
                line: events.len() as u64 + 2,
                message: format!("non-finite t_mm {}", e.position),
            });
        }
        events.push(e);
    }
    Ok(events)
}

pub fn save_events(events: &[EventRecord], path: impl AsRef<Path>) -> Result<()> {
    crate::harness::write_atomically(path.as_ref(), |w| write_events_csv(events, w))
}
