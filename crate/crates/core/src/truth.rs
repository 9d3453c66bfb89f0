//! Synthetic ground truth: drifting Gaussian SSH eddies over a background
//! meridional slope, geostrophic currents derived from that SSH, and an
//! SST tracer advected by those currents. Also reads externally supplied
//! gridded truths in the container format.

use std::path::Path;

use ndarray::Array2;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::{geostrophic_currents, PhysConsts, VelocityField};
use crate::error::{OsseError, Result};
use crate::grid::{Field, GridSpec, Units, METERS_PER_DEGREE};
use crate::io;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct TruthConfig {
    pub spec: GridSpec,
    pub n_eddies: usize,
    /// (min, max) eddy e-folding radius in km.
    pub radius_range_km: (f64, f64),
    /// (min, max) SSH anomaly amplitude magnitude in m; the sign (eddy
    /// polarity) is drawn per eddy.
    pub amplitude_range_m: (f64, f64),
    /// (min, max) drift speed in km/day.
    pub drift_speed_range_km_day: (f64, f64),
    /// Background SSH slope, m per degree of latitude.
    pub background_gradient_m_deg: f64,
    /// Meridional SST contrast across the domain, degrees C.
    pub sst_contrast_degc: f64,
    pub seed: u64,
}

impl Default for TruthConfig {
    fn default() -> Self {
        // Gulf Stream box at 128x128, 0.078 degrees per pixel
        TruthConfig {
            spec: GridSpec {
                lat0: 33.0,
                lon0: -65.0,
                dlat: 10.0 / 128.0,
                dlon: 10.0 / 128.0,
                nlat: 128,
                nlon: 128,
                t0: 0.0,
                dt: 1.0,
                nt: 63,
            },
            n_eddies: 8,
            radius_range_km: (40.0, 90.0),
            amplitude_range_m: (0.08, 0.25),
            drift_speed_range_km_day: (0.0, 3.0),
            background_gradient_m_deg: -0.04,
            sst_contrast_degc: 8.0,
            seed: 0,
        }
    }
}

impl TruthConfig {
    pub fn validate(&self) -> Result<()> {
        self.spec.validate()?;
        let ordered = |r: (f64, f64)| r.0 > 0.0 && r.1 >= r.0;
        if self.n_eddies > 0 {
            if !ordered(self.radius_range_km) || !ordered(self.amplitude_range_m) {
                return Err(OsseError::InvalidArgument(
                    "radius and amplitude ranges must have positive ordered endpoints".into(),
                ));
            }
            if self.drift_speed_range_km_day.0 < 0.0
                || self.drift_speed_range_km_day.1 < self.drift_speed_range_km_day.0
            {
                return Err(OsseError::InvalidArgument(
                    "drift speed range must be ordered and non-negative".into(),
                ));
            }
            // an eddy must span at least 4 pixels across (diameter 2R)
            let px = self.spec.px_km().min(self.spec.dy_m() / 1000.0);
            if 2.0 * self.radius_range_km.0 / px < 4.0 {
                return Err(OsseError::InvalidArgument(format!(
                    "grid too small for the smallest eddy radius: 2R = {} km < 4 pixels",
                    2.0 * self.radius_range_km.0
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
struct EddySpec {
    lat: f64,
    lon: f64,
    radius_km: f64,
    amplitude_m: f64,
    drift_east_km_day: f64,
    drift_north_km_day: f64,
}

fn draw_eddies(cfg: &TruthConfig, rng: &mut ChaCha8Rng) -> Vec<EddySpec> {
    let spec = &cfg.spec;
    let lat_margin = 0.15 * (spec.lat_max() - spec.lat0);
    let lon_margin = 0.15 * (spec.lon_max() - spec.lon0);
    (0..cfg.n_eddies)
        .map(|_| {
            let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            let speed = rng.random_range(cfg.drift_speed_range_km_day.0..=cfg.drift_speed_range_km_day.1);
            let dir = rng.random_range(0.0..std::f64::consts::TAU);
            EddySpec {
                lat: rng.random_range(spec.lat0 + lat_margin..spec.lat_max() - lat_margin),
                lon: rng.random_range(spec.lon0 + lon_margin..spec.lon_max() - lon_margin),
                radius_km: rng.random_range(cfg.radius_range_km.0..=cfg.radius_range_km.1),
                amplitude_m: sign * rng.random_range(cfg.amplitude_range_m.0..=cfg.amplitude_range_m.1),
                drift_east_km_day: speed * dir.cos(),
                drift_north_km_day: speed * dir.sin(),
            }
        })
        .collect()
}

fn ssh_at(cfg: &TruthConfig, eddies: &[EddySpec], t: f64, lat: f64, lon: f64) -> f64 {
    let spec = &cfg.spec;
    let mut h = cfg.background_gradient_m_deg * (lat - spec.center_lat());
    let mlat = METERS_PER_DEGREE / 1000.0; // km per degree
    for e in eddies {
        let days = t - spec.t0;
        let e_lat = e.lat + e.drift_north_km_day * days / mlat;
        let e_lon = e.lon + e.drift_east_km_day * days / (mlat * e_lat.to_radians().cos());
        let dy = (lat - e_lat) * mlat;
        let dx = (lon - e_lon) * mlat * e_lat.to_radians().cos();
        let r2 = dx * dx + dy * dy;
        h += e.amplitude_m * (-r2 / (2.0 * e.radius_km * e.radius_km)).exp();
    }
    h
}

/// Semi-Lagrangian advection of one tracer slice over `dt_days` with the
/// given velocity slice: backtrace each pixel and sample bilinearly,
/// substepping so the per-step displacement stays below one pixel.
pub fn advect_tracer(
    tracer: &Array2<f64>,
    u: &Array2<f64>,
    v: &Array2<f64>,
    spec: &GridSpec,
    dt_days: f64,
) -> Result<Array2<f64>> {
    if dt_days <= 0.0 {
        return Err(OsseError::InvalidArgument("advection dt must be positive".into()));
    }
    let (nlat, nlon) = tracer.dim();
    if u.dim() != (nlat, nlon) || v.dim() != (nlat, nlon) {
        return Err(OsseError::ShapeMismatch("tracer and velocity slices differ".into()));
    }
    let dy = spec.dy_m();
    let dx_min = spec.dx_m(spec.lat0.abs().max(spec.lat_max().abs()));
    let mut max_disp_px: f64 = 0.0;
    for (a, b) in u.iter().zip(v.iter()) {
        max_disp_px = max_disp_px
            .max(a.abs() * dt_days * 86400.0 / dx_min)
            .max(b.abs() * dt_days * 86400.0 / dy);
    }
    let nsub = (max_disp_px.ceil() as usize).max(1);
    let dt_s = dt_days * 86400.0 / nsub as f64;

    let mut cur = tracer.clone();
    let mut next = Array2::zeros((nlat, nlon));
    for _ in 0..nsub {
        for i in 0..nlat {
            let dx = spec.dx_m(spec.lat(i));
            for j in 0..nlon {
                let x = j as f64 - u[[i, j]] * dt_s / dx;
                let y = i as f64 - v[[i, j]] * dt_s / dy;
                next[[i, j]] = bilinear_px(&cur, y, x);
            }
        }
        std::mem::swap(&mut cur, &mut next);
    }
    Ok(cur)
}

fn bilinear_px(a: &Array2<f64>, y: f64, x: f64) -> f64 {
    let (n, m) = a.dim();
    let y = y.clamp(0.0, (n - 1) as f64);
    let x = x.clamp(0.0, (m - 1) as f64);
    let i = (y.floor() as usize).min(n.saturating_sub(2));
    let j = (x.floor() as usize).min(m.saturating_sub(2));
    let wy = y - i as f64;
    let wx = x - j as f64;
    let i1 = (i + 1).min(n - 1);
    let j1 = (j + 1).min(m - 1);
    let top = a[[i, j]] + wx * (a[[i, j1]] - a[[i, j]]);
    let bot = a[[i1, j]] + wx * (a[[i1, j1]] - a[[i1, j]]);
    top + wy * (bot - top)
}

/// Generates an advection-consistent synthetic truth. The currents are
/// the geostrophic currents of the SSH; SST starts from a meridional
/// profile with eddy-locked anomalies and is stepped by `advect_tracer`.
pub fn generate_truth(cfg: &TruthConfig) -> Result<(Field, Field, VelocityField)> {
    cfg.validate()?;
    let spec = cfg.spec;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let eddies = draw_eddies(cfg, &mut rng);

    let ssh = Field::from_fn(spec, Units::Meters, |t, lat, lon| {
        ssh_at(cfg, &eddies, t, lat, lon)
    });
    let currents = geostrophic_currents(&ssh, &PhysConsts::default())?;

    let mut sst = Field::zeros(spec, Units::DegC);
    let lat_span = spec.lat_max() - spec.lat0;
    let mlat = METERS_PER_DEGREE / 1000.0;
    // initial slice: warm south, cool north, plus anomalies on the eddies
    for i in 0..spec.nlat {
        for j in 0..spec.nlon {
            let (lat, lon) = (spec.lat(i), spec.lon(j));
            let mut t_c = 18.0 - cfg.sst_contrast_degc * (lat - spec.lat0) / lat_span;
            for e in &eddies {
                let dy = (lat - e.lat) * mlat;
                let dx = (lon - e.lon) * mlat * e.lat.to_radians().cos();
                let r2 = dx * dx + dy * dy;
                t_c += 0.4 * cfg.sst_contrast_degc * e.amplitude_m.signum()
                    * (-r2 / (2.0 * e.radius_km * e.radius_km)).exp();
            }
            sst.values[[0, i, j]] = t_c;
        }
    }
    for k in 1..spec.nt {
        let prev = sst.values.index_axis(ndarray::Axis(0), k - 1).to_owned();
        let u = currents.u.values.index_axis(ndarray::Axis(0), k - 1).to_owned();
        let v = currents.v.values.index_axis(ndarray::Axis(0), k - 1).to_owned();
        let stepped = advect_tracer(&prev, &u, &v, &spec, spec.dt)?;
        sst.values.index_axis_mut(ndarray::Axis(0), k).assign(&stepped);
    }
    Ok((ssh, sst, currents))
}

/// Writes the truth triple as `ssh`, `sst`, `u`, `v` containers.
pub fn write_truth(dir: &Path, ssh: &Field, sst: &Field, currents: &VelocityField) -> Result<()> {
    io::write_field(dir, "ssh", ssh)?;
    io::write_field(dir, "sst", sst)?;
    io::write_field(dir, "u", &currents.u)?;
    io::write_field(dir, "v", &currents.v)?;
    Ok(())
}

/// Reads a truth directory written by `write_truth` (or produced
/// externally in the same container format), validating alignment.
pub fn read_truth(dir: &Path) -> Result<(Field, Field, VelocityField)> {
    let ssh = io::read_field(dir, "ssh")?;
    let sst = io::read_field(dir, "sst")?;
    let u = io::read_field(dir, "u")?;
    let v = io::read_field(dir, "v")?;
    for (name, f) in [("sst", &sst), ("u", &u), ("v", &v)] {
        if f.spec != ssh.spec {
            return Err(OsseError::Data(format!(
                "grid spec of {name} does not match ssh"
            )));
        }
    }
    if ssh.units != Units::Meters
        || sst.units != Units::DegC
        || u.units != Units::MetersPerSecond
        || v.units != Units::MetersPerSecond
    {
        return Err(OsseError::Data("unexpected units in truth containers".into()));
    }
    let currents = VelocityField { u, v };
    currents.validate()?;
    Ok((ssh, sst, currents))
}
