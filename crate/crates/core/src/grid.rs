//! Grid geometry, gridded field storage, track samples, and the
//! trilinear sampling operator with its adjoint.
//!
//! Array layout is time-major, then latitude (index increases northward),
//! then longitude. All grids are equirectangular with uniform degree
//! spacing; metric distances use the local scale factors.

use ndarray::Array3;
use serde::{Deserialize, Serialize};

use crate::error::{OsseError, Result};

pub const EARTH_RADIUS_M: f64 = 6_371_000.0;
/// Meters per degree of great-circle arc on the 6371 km sphere.
pub const METERS_PER_DEGREE: f64 = EARTH_RADIUS_M * std::f64::consts::PI / 180.0;

/// Regular space-time grid: uniform degree spacing, uniform time step (days).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    /// Latitude of the first row (degrees north).
    pub lat0: f64,
    /// Longitude of the first column (degrees east).
    pub lon0: f64,
    pub dlat: f64,
    pub dlon: f64,
    pub nlat: usize,
    pub nlon: usize,
    /// Days since epoch of the first time slice.
    pub t0: f64,
    /// Days per time step.
    pub dt: f64,
    pub nt: usize,
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.dlat > 0.0 && self.dlon > 0.0 && self.dt > 0.0) {
            return Err(OsseError::InvalidSpec(
                "dlat, dlon and dt must be positive".into(),
            ));
        }
        if self.nlat < 1 || self.nlon < 1 || self.nt < 1 {
            return Err(OsseError::InvalidSpec(
                "nlat, nlon and nt must be at least 1".into(),
            ));
        }
        let lat_max = self.lat0 + (self.nlat as f64 - 1.0) * self.dlat;
        if self.lat0 <= -90.0 || lat_max >= 90.0 {
            return Err(OsseError::InvalidSpec(format!(
                "latitude range [{}, {}] must stay within (-90, 90)",
                self.lat0, lat_max
            )));
        }
        Ok(())
    }

    pub fn lat(&self, i: usize) -> f64 {
        self.lat0 + i as f64 * self.dlat
    }
    pub fn lon(&self, j: usize) -> f64 {
        self.lon0 + j as f64 * self.dlon
    }
    pub fn time(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.dt
    }
    pub fn lat_max(&self) -> f64 {
        self.lat(self.nlat - 1)
    }
    pub fn lon_max(&self) -> f64 {
        self.lon(self.nlon - 1)
    }
    pub fn t_max(&self) -> f64 {
        self.time(self.nt - 1)
    }
    /// Length of the time axis in days (nt steps of dt).
    pub fn time_range_days(&self) -> f64 {
        self.nt as f64 * self.dt
    }
    pub fn center_lat(&self) -> f64 {
        0.5 * (self.lat0 + self.lat_max())
    }

    /// Meridional grid step in meters.
    pub fn dy_m(&self) -> f64 {
        self.dlat * METERS_PER_DEGREE
    }
    /// Zonal grid step in meters at latitude `lat`.
    pub fn dx_m(&self, lat: f64) -> f64 {
        self.dlon * METERS_PER_DEGREE * lat.to_radians().cos()
    }
    /// Zonal pixel size in km at the domain center latitude.
    pub fn px_km(&self) -> f64 {
        self.dx_m(self.center_lat()) / 1000.0
    }

    pub fn same_space(&self, other: &GridSpec) -> bool {
        self.lat0 == other.lat0
            && self.lon0 == other.lon0
            && self.dlat == other.dlat
            && self.dlon == other.dlon
            && self.nlat == other.nlat
            && self.nlon == other.nlon
    }

    pub fn same_time(&self, other: &GridSpec) -> bool {
        self.t0 == other.t0 && self.dt == other.dt && self.nt == other.nt
    }
}

/// Physical units tag carried by a `Field`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Units {
    #[serde(rename = "m")]
    Meters,
    #[serde(rename = "degC")]
    DegC,
    #[serde(rename = "dimensionless")]
    Dimensionless,
    #[serde(rename = "m/s")]
    MetersPerSecond,
}

/// A gridded scalar: nt x nlat x nlon values over a `GridSpec`.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    pub spec: GridSpec,
    pub values: Array3<f64>,
    pub units: Units,
}

impl Field {
    pub fn zeros(spec: GridSpec, units: Units) -> Field {
        Field {
            spec,
            values: Array3::zeros((spec.nt, spec.nlat, spec.nlon)),
            units,
        }
    }

    pub fn from_fn(spec: GridSpec, units: Units, f: impl Fn(f64, f64, f64) -> f64) -> Field {
        let mut out = Field::zeros(spec, units);
        for k in 0..spec.nt {
            for i in 0..spec.nlat {
                for j in 0..spec.nlon {
                    out.values[[k, i, j]] = f(spec.time(k), spec.lat(i), spec.lon(j));
                }
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        self.spec.validate()?;
        let dim = self.values.dim();
        if dim != (self.spec.nt, self.spec.nlat, self.spec.nlon) {
            return Err(OsseError::ShapeMismatch(format!(
                "field values {:?} do not match spec ({}, {}, {})",
                dim, self.spec.nt, self.spec.nlat, self.spec.nlon
            )));
        }
        Ok(())
    }
}

/// One along-track satellite sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointSample {
    pub sat_id: u32,
    /// Days since epoch.
    pub t: f64,
    /// Seconds within the UTC day, used by the along-track pairing rule.
    pub seconds_of_day: f64,
    pub lat: f64,
    pub lon: f64,
    pub value: f64,
}

/// Ordered satellite samples: the observation support and its values.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrackSet {
    samples: Vec<PointSample>,
}

impl TrackSet {
    /// Builds a track set, sorting samples by (sat_id, t, seconds_of_day).
    pub fn new(mut samples: Vec<PointSample>) -> TrackSet {
        samples.sort_by(|a, b| {
            (a.sat_id, a.t, a.seconds_of_day)
                .partial_cmp(&(b.sat_id, b.t, b.seconds_of_day))
                .expect("non-finite sort key in track samples")
        });
        TrackSet { samples }
    }

    pub fn samples(&self) -> &[PointSample] {
        &self.samples
    }
    pub fn len(&self) -> usize {
        self.samples.len()
    }
    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn sat_ids(&self) -> Vec<u32> {
        let mut ids: Vec<u32> = self.samples.iter().map(|s| s.sat_id).collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }

    /// Maps each sample value through `f`, keeping the support geometry.
    pub fn with_values(&self, values: &[f64]) -> Result<TrackSet> {
        if values.len() != self.samples.len() {
            return Err(OsseError::ShapeMismatch(format!(
                "{} values for {} samples",
                values.len(),
                self.samples.len()
            )));
        }
        let samples = self
            .samples
            .iter()
            .zip(values)
            .map(|(s, &v)| PointSample { value: v, ..*s })
            .collect();
        Ok(TrackSet { samples })
    }

    pub fn values(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.value).collect()
    }
}

/// One corner of a trilinear stencil: flat indices plus its weight.
#[derive(Debug, Clone, Copy)]
pub struct StencilEntry {
    pub k: usize,
    pub i: usize,
    pub j: usize,
    pub w: f64,
}

fn axis_frac(x: f64, n: usize) -> (usize, f64) {
    if n == 1 {
        return (0, 0.0);
    }
    let mut x = x.clamp(0.0, (n - 1) as f64);
    // snap to the node when the fractional offset is pure rounding noise
    if (x - x.round()).abs() < 1e-9 {
        x = x.round();
    }
    let mut i = x.floor() as usize;
    if i > n - 2 {
        i = n - 2;
    }
    (i, x - i as f64)
}

/// The 8-corner trilinear stencil of a point. Spatial coordinates are
/// clamped to the grid box; times more than one step outside the time
/// range are rejected.
pub fn trilinear_stencil(spec: &GridSpec, p: &PointSample) -> Result<[StencilEntry; 8]> {
    let ft = (p.t - spec.t0) / spec.dt;
    if ft < -1.0 || ft > (spec.nt - 1) as f64 + 1.0 {
        return Err(OsseError::TimeOutOfRange(p.t));
    }
    let flat = (p.lat - spec.lat0) / spec.dlat;
    let flon = (p.lon - spec.lon0) / spec.dlon;
    let (k0, wt) = axis_frac(ft, spec.nt);
    let (i0, wa) = axis_frac(flat, spec.nlat);
    let (j0, wo) = axis_frac(flon, spec.nlon);

    let mut out = [StencilEntry { k: 0, i: 0, j: 0, w: 0.0 }; 8];
    let mut n = 0;
    for (dk, tw) in [(0usize, 1.0 - wt), (1, wt)] {
        for (di, aw) in [(0usize, 1.0 - wa), (1, wa)] {
            for (dj, ow) in [(0usize, 1.0 - wo), (1, wo)] {
                out[n] = StencilEntry {
                    k: (k0 + dk).min(spec.nt - 1),
                    i: (i0 + di).min(spec.nlat - 1),
                    j: (j0 + dj).min(spec.nlon - 1),
                    w: tw * aw * ow,
                };
                n += 1;
            }
        }
    }
    Ok(out)
}

/// Trilinear interpolation of `field` at every point of `points`.
pub fn sample_trilinear(field: &Field, points: &TrackSet) -> Result<Vec<f64>> {
    field.validate()?;
    let mut out = Vec::with_capacity(points.len());
    for p in points.samples() {
        let stencil = trilinear_stencil(&field.spec, p)?;
        let mut acc = 0.0;
        for e in stencil {
            let v = field.values[[e.k, e.i, e.j]];
            if e.w != 0.0 && !v.is_finite() {
                return Err(OsseError::MaskedCell {
                    t: p.t,
                    lat: p.lat,
                    lon: p.lon,
                });
            }
            acc += e.w * v;
        }
        out.push(acc);
    }
    Ok(out)
}

/// Transpose of `sample_trilinear`: distributes each residual onto the 8
/// grid cells of its stencil with the sampling weights.
pub fn scatter_adjoint(points: &TrackSet, residuals: &[f64], spec: &GridSpec) -> Result<Field> {
    spec.validate()?;
    if residuals.len() != points.len() {
        return Err(OsseError::ShapeMismatch(format!(
            "{} residuals for {} points",
            residuals.len(),
            points.len()
        )));
    }
    let mut out = Field::zeros(*spec, Units::Dimensionless);
    for (p, &r) in points.samples().iter().zip(residuals) {
        let stencil = trilinear_stencil(spec, p)?;
        for e in stencil {
            out.values[[e.k, e.i, e.j]] += e.w * r;
        }
    }
    Ok(out)
}

fn lerp(a: f64, b: f64, w: f64) -> f64 {
    a + w * (b - a)
}

/// Spatial-only bilinear resampling of every time slice onto `target`.
/// The target time axis must equal the source one.
pub fn regrid_bilinear(field: &Field, target: &GridSpec) -> Result<Field> {
    field.validate()?;
    target.validate()?;
    let src = &field.spec;
    if !src.same_time(target) {
        return Err(OsseError::ShapeMismatch(
            "regrid_bilinear requires identical time axes".into(),
        ));
    }
    if *src == *target {
        return Ok(field.clone());
    }
    let eps = 1e-9;
    if target.lat0 < src.lat0 - eps
        || target.lat_max() > src.lat_max() + eps
        || target.lon0 < src.lon0 - eps
        || target.lon_max() > src.lon_max() + eps
    {
        return Err(OsseError::Extrapolation(
            "target spatial box exceeds source box".into(),
        ));
    }
    let mut out = Field::zeros(*target, field.units);
    for i in 0..target.nlat {
        let (si, wa) = axis_frac((target.lat(i) - src.lat0) / src.dlat, src.nlat);
        for j in 0..target.nlon {
            let (sj, wo) = axis_frac((target.lon(j) - src.lon0) / src.dlon, src.nlon);
            let si1 = (si + 1).min(src.nlat - 1);
            let sj1 = (sj + 1).min(src.nlon - 1);
            for k in 0..target.nt {
                let v00 = field.values[[k, si, sj]];
                let v01 = field.values[[k, si, sj1]];
                let v10 = field.values[[k, si1, sj]];
                let v11 = field.values[[k, si1, sj1]];
                out.values[[k, i, j]] = lerp(lerp(v00, v01, wo), lerp(v10, v11, wo), wa);
            }
        }
    }
    Ok(out)
}

/// Great-circle ground distance in meters (haversine, 6371 km sphere).
pub fn haversine_m(lat1: f64, lon1: f64, lat2: f64, lon2: f64) -> f64 {
    let (p1, p2) = (lat1.to_radians(), lat2.to_radians());
    let dp = p2 - p1;
    let dl = (lon2 - lon1).to_radians();
    let a = (dp / 2.0).sin().powi(2) + p1.cos() * p2.cos() * (dl / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_M * a.sqrt().asin()
}
