use std::io::{Read, Write};

use num_complex::Complex64;

use super::{PolarField, TrajectoryEnsemble, WaveField};
use crate::density::csv_error;
use crate::error::{Error, Result};

fn write_rows<W: Write>(writer: W, header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(header).map_err(|e| csv_error(&e))?;
    for r in rows {
        w.write_record(&r).map_err(|e| csv_error(&e))?;
    }
    w.flush()?;
    Ok(())
}

/// `x,re_psi,im_psi`, one row per grid point.
pub fn write_wave_csv<W: Write>(w: &WaveField, writer: W) -> Result<()> {
    let rows = w
        .psi
        .iter()
        .enumerate()
        .map(|(j, z)| vec![format!("{:?}", w.grid.x(j)), format!("{:?}", z.re), format!("{:?}", z.im)]);
    write_rows(writer, &["x", "re_psi", "im_psi"], rows)
}

/// `x,R,S,node_mask`; `node_mask` is `true` or `false`.
pub fn write_polar_csv<W: Write>(p: &PolarField, writer: W) -> Result<()> {
    let rows = (0..p.grid.points).map(|j| {
        vec![
            format!("{:?}", p.grid.x(j)),
            format!("{:?}", p.r[j]),
            format!("{:?}", p.s[j]),
            p.node_mask[j].to_string(),
        ]
    });
    write_rows(writer, &["x", "R", "S", "node_mask"], rows)
}

/// `index,x`, one row per trajectory.
pub fn write_trajectories_csv<W: Write>(e: &TrajectoryEnsemble, writer: W) -> Result<()> {
    let rows = e
        .positions
        .iter()
        .enumerate()
        .map(|(i, x)| vec![i.to_string(), format!("{x:?}")]);
    write_rows(writer, &["index", "x"], rows)
}

fn read_rows<R: Read, T: serde::de::DeserializeOwned>(reader: R, header: &[&str]) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_reader(reader);
    let found = r.headers().map_err(|e| csv_error(&e))?.clone();
    if found.iter().ne(header.iter().copied()) {
        return Err(Error::Parse {
            line: 1,
            message: format!("expected header {}", header.join(",")),
        });
    }
    r.deserialize().map(|row| row.map_err(|e| csv_error(&e))).collect()
}

/// Parses `x,re_psi,im_psi` rows into `(x, psi)` pairs.
pub fn read_wave_csv<R: Read>(reader: R) -> Result<Vec<(f64, Complex64)>> {
    let rows: Vec<(f64, f64, f64)> = read_rows(reader, &["x", "re_psi", "im_psi"])?;
    Ok(rows.into_iter().map(|(x, re, im)| (x, Complex64::new(re, im))).collect())
}

/// Parses `x,R,S,node_mask` rows.
pub fn read_polar_csv<R: Read>(reader: R) -> Result<Vec<(f64, f64, f64, bool)>> {
    read_rows(reader, &["x", "R", "S", "node_mask"])
}
