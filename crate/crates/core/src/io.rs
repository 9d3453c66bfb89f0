//! File containers: raw little-endian f64 field files with a JSON
//! sidecar, and the track CSV format.
//!
//! A field named `ssh` is stored as `ssh.f64` (time-major, then latitude,
//! then longitude) next to `ssh.json` holding the grid spec, units tag
//! and optional missing-value sentinel.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array3;
use serde::{Deserialize, Serialize};

use crate::error::{OsseError, Result};
use crate::grid::{Field, GridSpec, PointSample, TrackSet, Units};

#[derive(Debug, Serialize, Deserialize)]
pub struct FieldSidecar {
    pub grid: GridSpec,
    pub units: Units,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub missing_value: Option<f64>,
}

pub fn write_field(dir: &Path, name: &str, field: &Field) -> Result<()> {
    field.validate()?;
    std::fs::create_dir_all(dir)?;
    let sidecar = FieldSidecar {
        grid: field.spec,
        units: field.units,
        missing_value: None,
    };
    let json = serde_json::to_string_pretty(&sidecar)?;
    std::fs::write(dir.join(format!("{name}.json")), json)?;

    let mut w = BufWriter::new(File::create(dir.join(format!("{name}.f64")))?);
    for v in field.values.iter() {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_field(dir: &Path, name: &str) -> Result<Field> {
    let sidecar_path = dir.join(format!("{name}.json"));
    if !sidecar_path.exists() {
        return Err(OsseError::Data(format!(
            "missing sidecar {}",
            sidecar_path.display()
        )));
    }
    let sidecar: FieldSidecar = serde_json::from_str(&std::fs::read_to_string(sidecar_path)?)?;
    sidecar.grid.validate()?;
    let n = sidecar.grid.nt * sidecar.grid.nlat * sidecar.grid.nlon;

    let mut r = BufReader::new(File::open(dir.join(format!("{name}.f64")))?);
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() != n * 8 {
        return Err(OsseError::Data(format!(
            "field {name}: {} bytes, expected {}",
            bytes.len(),
            n * 8
        )));
    }
    let mut values = Vec::with_capacity(n);
    for chunk in bytes.chunks_exact(8) {
        values.push(f64::from_le_bytes(chunk.try_into().unwrap()));
    }
    let values = Array3::from_shape_vec(
        (sidecar.grid.nt, sidecar.grid.nlat, sidecar.grid.nlon),
        values,
    )
    .map_err(|e| OsseError::Data(e.to_string()))?;
    Ok(Field {
        spec: sidecar.grid,
        values,
        units: sidecar.units,
    })
}

/// Writes a track set as CSV with header `sat_id,t_days,seconds_of_day,lat,lon,value`.
pub fn write_tracks(path: &Path, tracks: &TrackSet) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["sat_id", "t_days", "seconds_of_day", "lat", "lon", "value"])?;
    for s in tracks.samples() {
        w.write_record(&[
            s.sat_id.to_string(),
            format!("{:.17e}", s.t),
            format!("{:.17e}", s.seconds_of_day),
            format!("{:.17e}", s.lat),
            format!("{:.17e}", s.lon),
            format!("{:.17e}", s.value),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_tracks(path: &Path) -> Result<TrackSet> {
    let mut r = csv::Reader::from_path(path)?;
    let mut samples = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        if rec.len() != 6 {
            return Err(OsseError::Data(format!(
                "track CSV row has {} columns, expected 6",
                rec.len()
            )));
        }
        let f = |i: usize| -> Result<f64> {
            rec[i]
                .parse::<f64>()
                .map_err(|e| OsseError::Data(format!("bad number in track CSV: {e}")))
        };
        samples.push(PointSample {
            sat_id: rec[0]
                .parse()
                .map_err(|e| OsseError::Data(format!("bad sat_id: {e}")))?,
            t: f(1)?,
            seconds_of_day: f(2)?,
            lat: f(3)?,
            lon: f(4)?,
            value: f(5)?,
        });
    }
    Ok(TrackSet::new(samples))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Units;

    fn spec() -> GridSpec {
        GridSpec {
            lat0: 33.0,
            lon0: -65.0,
            dlat: 0.1,
            dlon: 0.1,
            nlat: 4,
            nlon: 5,
            t0: 0.0,
            dt: 1.0,
            nt: 3,
        }
    }

    #[test]
    fn field_round_trip_is_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let f = Field::from_fn(spec(), Units::Meters, |t, lat, lon| t + lat * lon);
        write_field(dir.path(), "ssh", &f).unwrap();
        let g = read_field(dir.path(), "ssh").unwrap();
        assert_eq!(f, g);
    }

    #[test]
    fn missing_sidecar_is_error() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("ssh.f64"), [0u8; 8]).unwrap();
        assert!(read_field(dir.path(), "ssh").is_err());
    }

    #[test]
    fn truncated_payload_is_error() {
        let dir = tempfile::tempdir().unwrap();
        let f = Field::zeros(spec(), Units::Meters);
        write_field(dir.path(), "ssh", &f).unwrap();
        std::fs::write(dir.path().join("ssh.f64"), [0u8; 16]).unwrap();
        assert!(read_field(dir.path(), "ssh").is_err());
    }

    #[test]
    fn tracks_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("tracks.csv");
        let ts = TrackSet::new(vec![
            PointSample {
                sat_id: 1,
                t: 3.25,
                seconds_of_day: 21600.0,
                lat: 35.5,
                lon: -60.25,
                value: 0.123456789,
            },
            PointSample {
                sat_id: 0,
                t: 1.5,
                seconds_of_day: 43200.0,
                lat: 34.0,
                lon: -61.0,
                value: -0.5,
            },
        ]);
        write_tracks(&path, &ts).unwrap();
        let back = read_tracks(&path).unwrap();
        assert_eq!(ts, back);
    }
}
