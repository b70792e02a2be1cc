use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bound::{BinningScheme, BoundReport, Origin, Verdicts};
use crate::density::csv_error;
use crate::error::{Error, Result};
use crate::quadrature::Interval;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub seed: u64,
    pub report: BoundReport,
}

impl ReportRow {
    /// Canonical sort key `(N, bins, origin, seed)`.
    pub fn key(&self) -> (u64, usize, Origin, u64) {
        let s = &self.report.scheme;
        (self.report.n, s.bin_count, s.origin, self.seed)
    }
}

/// Verdict pass counts per right-hand-side variant.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Summary {
    pub total: usize,
    pub lower_const: usize,
    pub upper_const: usize,
    #[serde(rename = "with_sqrtN_lower")]
    pub with_sqrt_n_lower: usize,
    #[serde(rename = "with_sqrtN_upper")]
    pub with_sqrt_n_upper: usize,
}

impl Summary {
    pub fn from_rows(rows: &[ReportRow]) -> Self {
        let count = |pick: fn(&Verdicts) -> bool| rows.iter().filter(|r| pick(&r.report.verdicts)).count();
        Self {
            total: rows.len(),
            lower_const: count(|v| v.lower_const),
            upper_const: count(|v| v.upper_const),
            with_sqrt_n_lower: count(|v| v.with_sqrt_n_lower),
            with_sqrt_n_upper: count(|v| v.with_sqrt_n_upper),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub rows: Vec<ReportRow>,
    pub summary: Summary,
}

impl ConvergenceReport {
    /// Sorts rows canonically and derives the summary.
    pub fn from_rows(mut rows: Vec<ReportRow>) -> Self {
        rows.sort_by_key(ReportRow::key);
        let summary = Summary::from_rows(&rows);
        Self { rows, summary }
    }

    /// Whether every row passes both literal-form verdicts.
    pub fn all_literal_pass(&self) -> bool {
        self.summary.lower_const == self.summary.total && self.summary.upper_const == self.summary.total
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
}

pub const CSV_HEADER: [&str; 15] = [
    "seed",
    "N",
    "sup_deviation",
    "rhs_lower_const",
    "rhs_upper_const",
    "rhs_with_sqrtN_lower",
    "rhs_with_sqrtN_upper",
    "verdict_lower_const",
    "verdict_upper_const",
    "verdict_with_sqrtN_lower",
    "verdict_with_sqrtN_upper",
    "bin_count",
    "origin",
    "interval_lo",
    "interval_hi",
];

fn to_csv(r: &ConvergenceReport) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_HEADER).map_err(|e| csv_error(&e))?;
    for row in &r.rows {
        let b = &row.report;
        let v = &b.verdicts;
        // `{:?}` prints the shortest representation that parses back exactly
        let record = [
            row.seed.to_string(),
            b.n.to_string(),
            format!("{:?}", b.sup_deviation),
            format!("{:?}", b.rhs_lower_const),
            format!("{:?}", b.rhs_upper_const),
            format!("{:?}", b.rhs_with_sqrt_n_lower),
            format!("{:?}", b.rhs_with_sqrt_n_upper),
            v.lower_const.to_string(),
            v.upper_const.to_string(),
            v.with_sqrt_n_lower.to_string(),
            v.with_sqrt_n_upper.to_string(),
            b.scheme.bin_count.to_string(),
            b.scheme.origin.as_str().to_string(),
            format!("{:?}", b.scheme.interval.lo),
            format!("{:?}", b.scheme.interval.hi),
        ];
        w.write_record(&record).map_err(|e| csv_error(&e))?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

fn from_csv(text: &str) -> Result<ConvergenceReport> {
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let header = rdr.headers().map_err(|e| csv_error(&e))?.clone();
    if header.iter().ne(CSV_HEADER.iter().copied()) {
        return Err(Error::Parse {
            line: 1,
            message: "unexpected report CSV header".into(),
        });
    }
    let mut rows = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| csv_error(&e))?;
        let line = record.position().map_or(0, |p| p.line());
        let get = |i: usize| -> Result<&str> {
            record.get(i).ok_or_else(|| Error::Parse {
                line,
                message: format!("missing column `{}`", CSV_HEADER[i]),
            })
        };
        fn parse<T: std::str::FromStr>(s: &str, line: u64, col: &str) -> Result<T> {
            s.parse().map_err(|_| Error::Parse {
                line,
                message: format!("bad value `{s}` in column `{col}`"),
            })
        }
        let p = |i: usize| -> Result<f64> { parse(get(i)?, line, CSV_HEADER[i]) };
        let flag = |i: usize| -> Result<bool> { parse(get(i)?, line, CSV_HEADER[i]) };
        let origin = Origin::parse(get(12)?).ok_or_else(|| Error::Parse {
            line,
            message: format!("bad origin `{}`", record.get(12).unwrap_or_default()),
        })?;
        rows.push(ReportRow {
            seed: parse(get(0)?, line, "seed")?,
            report: BoundReport {
                n: parse(get(1)?, line, "N")?,
                sup_deviation: p(2)?,
                rhs_lower_const: p(3)?,
                rhs_upper_const: p(4)?,
                rhs_with_sqrt_n_lower: p(5)?,
                rhs_with_sqrt_n_upper: p(6)?,
                verdicts: Verdicts {
                    lower_const: flag(7)?,
                    upper_const: flag(8)?,
                    with_sqrt_n_lower: flag(9)?,
                    with_sqrt_n_upper: flag(10)?,
                },
                scheme: BinningScheme {
                    bin_count: parse(get(11)?, line, "bin_count")?,
                    origin,
                    interval: Interval { lo: p(13)?, hi: p(14)? },
                },
            },
        });
    }
    Ok(ConvergenceReport::from_rows(rows))
}

/// Serializes a report. JSON keys follow struct order; CSV has one row per
/// report plus a header.
pub fn render_report(r: &ConvergenceReport, format: ReportFormat) -> Result<Vec<u8>> {
    match format {
        ReportFormat::Json => {
            let mut bytes = serde_json::to_vec(r)?;
            bytes.push(b'\n');
            Ok(bytes)
        }
        ReportFormat::Csv => to_csv(r),
    }
}

pub fn parse_report(text: &str, format: ReportFormat) -> Result<ConvergenceReport> {
    match format {
        ReportFormat::Json => Ok(serde_json::from_str(text)?),
        ReportFormat::Csv => from_csv(text),
    }
}

pub fn emit_report(r: &ConvergenceReport, format: ReportFormat, path: impl AsRef<Path>) -> Result<()> {
    let bytes = render_report(r, format)?;
    super::write_atomically(path.as_ref(), |w| {
        std::io::Write::write_all(w, &bytes)?;
        Ok(())
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::{run_replication, ExperimentConfig};

    fn sample_report() -> ConvergenceReport {
        let cfg = ExperimentConfig {
            n_values: vec![13, 54],
            seeds: vec![2, 7],
            ..ExperimentConfig::default()
        };
        run_replication(&cfg).unwrap()
    }

    #[test]
    fn json_and_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let r = sample_report();
        for (format, name) in [(ReportFormat::Json, "r.json"), (ReportFormat::Csv, "r.csv")] {
            let path = dir.path().join(name);
            emit_report(&r, format, &path).unwrap();
            let text = std::fs::read_to_string(&path).unwrap();
            assert_eq!(parse_report(&text, format).unwrap(), r);
            if format == ReportFormat::Csv {
                assert_eq!(text.lines().count(), r.rows.len() + 1);
            }
        }
    }

    #[test]
    fn empty_report_shapes() {
        let empty = ConvergenceReport::from_rows(Vec::new());
        let csv = String::from_utf8(render_report(&empty, ReportFormat::Csv).unwrap()).unwrap();
        assert_eq!(csv.lines().count(), 1);
        assert!(csv.starts_with("seed,N,sup_deviation"));
        let json = String::from_utf8(render_report(&empty, ReportFormat::Json).unwrap()).unwrap();
        assert!(json.contains(r#""rows":[]"#), "{json}");
        assert_eq!(parse_report(&csv, ReportFormat::Csv).unwrap(), empty);
    }

    #[test]
    fn summary_matches_recount() {
        let r = sample_report();
        let recount = Summary::from_rows(&r.rows);
        assert_eq!(r.summary, recount);
        assert_eq!(r.summary.total, 2 * 2 * 2);
    }
}
