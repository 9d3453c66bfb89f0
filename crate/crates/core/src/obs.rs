//! Observation operators: along-track SSH sampling with instrumental
//! noise, cloud-dependent SST degradation with correlated noise, track
//! rasterization, support desynchronization, and SST deseasonalization.

use ndarray::{Array2, Array3, Axis};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{OsseError, Result};
use crate::grid::{sample_trilinear, Field, GridSpec, TrackSet, Units};

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct SshObsParams {
    /// Instrumental noise standard deviation in meters.
    pub sigma_noise: f64,
    pub seed: u64,
}

impl Default for SshObsParams {
    fn default() -> Self {
        SshObsParams {
            sigma_noise: 0.019,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct SstObsParams {
    /// Temporal smoothing scale, days.
    pub sigma_t: f64,
    /// Spatial smoothing scale, km.
    pub sigma_x: f64,
    /// Side length of the coarse white-noise image.
    pub noise_coarse_n: usize,
    /// Noise standard deviation, degrees C. Calibrating this against a
    /// real radiometer requires reanalysis statistics; the default is a
    /// free parameter.
    pub noise_sigma: f64,
    /// Cloud-cover box filter size, km.
    pub cloud_smooth_km: f64,
    pub seed: u64,
}

impl Default for SstObsParams {
    fn default() -> Self {
        SstObsParams {
            sigma_t: 1.23,
            sigma_x: 16.0,
            noise_coarse_n: 32,
            noise_sigma: 0.35,
            cloud_smooth_km: 43.0,
            seed: 0,
        }
    }
}

impl SstObsParams {
    pub fn validate(&self) -> Result<()> {
        if self.sigma_t <= 0.0
            || self.sigma_x <= 0.0
            || self.noise_coarse_n == 0
            || self.noise_sigma < 0.0
            || self.cloud_smooth_km <= 0.0
        {
            return Err(OsseError::InvalidArgument(
                "SST observation parameters must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Cloud-cover fraction field, constrained to [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct CloudCover(Field);

impl CloudCover {
    pub fn new(field: Field) -> Result<CloudCover> {
        field.validate()?;
        if field.values.iter().any(|&c| !(0.0..=1.0).contains(&c)) {
            return Err(OsseError::InvalidArgument(
                "cloud cover values must lie in [0, 1]".into(),
            ));
        }
        Ok(CloudCover(field))
    }

    pub fn field(&self) -> &Field {
        &self.0
    }
}

/// Along-track SSH observation: trilinear sampling of the truth plus
/// i.i.d. Gaussian instrumental noise, deterministic per seed.
pub fn simulate_ssh_obs(truth_ssh: &Field, support: &TrackSet, p: &SshObsParams) -> Result<TrackSet> {
    if p.sigma_noise < 0.0 {
        return Err(OsseError::InvalidArgument("sigma_noise must be >= 0".into()));
    }
    let mut values = sample_trilinear(truth_ssh, support)?;
    if p.sigma_noise > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
        let normal = Normal::new(0.0, p.sigma_noise).unwrap();
        for v in &mut values {
            *v += normal.sample(&mut rng);
        }
    }
    support.with_values(&values)
}

/// Shifts every sample time by `delay_days`, wrapped into the truth time
/// range modulo the range length.
pub fn shift_support(support: &TrackSet, delay_days: f64, spec: &GridSpec) -> TrackSet {
    let range = spec.time_range_days();
    let samples = support
        .samples()
        .iter()
        .map(|s| {
            let mut t = s.t;
            if delay_days != 0.0 {
                t = spec.t0 + (s.t - spec.t0 + delay_days).rem_euclid(range);
            }
            crate::grid::PointSample { t, ..*s }
        })
        .collect();
    TrackSet::new(samples)
}

/// Averages the samples inside each daily grid cell; unobserved pixels
/// stay zero. Returns the observation image and the per-pixel counts.
pub fn rasterize_tracks(obs: &TrackSet, spec: &GridSpec) -> Result<(Field, Field)> {
    spec.validate()?;
    if (spec.dt - 1.0).abs() > 1e-12 {
        return Err(OsseError::InvalidArgument(
            "rasterization expects a daily grid (dt = 1)".into(),
        ));
    }
    let mut sum = Field::zeros(*spec, Units::Meters);
    let mut count = Field::zeros(*spec, Units::Dimensionless);
    for s in obs.samples() {
        let i = ((s.lat - spec.lat0) / spec.dlat).round();
        let j = ((s.lon - spec.lon0) / spec.dlon).round();
        let k = ((s.t - spec.t0) / spec.dt).floor();
        if i < 0.0
            || j < 0.0
            || k < 0.0
            || i >= spec.nlat as f64
            || j >= spec.nlon as f64
            || k >= spec.nt as f64
        {
            continue;
        }
        let (k, i, j) = (k as usize, i as usize, j as usize);
        sum.values[[k, i, j]] += s.value;
        count.values[[k, i, j]] += 1.0;
    }
    for (s, c) in sum.values.iter_mut().zip(count.values.iter()) {
        if *c > 0.0 {
            *s /= *c;
        }
    }
    Ok((sum, count))
}

fn mirror_index(i: isize, n: usize) -> usize {
    let n = n as isize;
    let mut i = i;
    loop {
        if i < 0 {
            i = -i;
        } else if i >= n {
            i = 2 * (n - 1) - i;
        } else {
            return i as usize;
        }
    }
}

#[derive(Clone, Copy)]
enum Boundary {
    Mirror,
    Clamp,
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (4.0 * sigma).ceil() as usize;
    let mut k: Vec<f64> = (0..=2 * radius)
        .map(|i| {
            let x = i as f64 - radius as f64;
            (-x * x / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let s: f64 = k.iter().sum();
    for v in &mut k {
        *v /= s;
    }
    k
}

fn blur_axis(values: &mut Array3<f64>, axis: usize, sigma: f64, boundary: Boundary) {
    if sigma <= 0.0 {
        return;
    }
    let kernel = gaussian_kernel(sigma);
    let radius = kernel.len() as isize / 2;
    let n = values.shape()[axis];
    if n == 1 {
        return;
    }
    let mut line = vec![0.0; n];
    for mut lane in values.lanes_mut(Axis(axis)) {
        for (c, out) in line.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (o, w) in kernel.iter().enumerate() {
                let idx = c as isize + o as isize - radius;
                let idx = match boundary {
                    Boundary::Mirror => mirror_index(idx, n),
                    Boundary::Clamp => idx.clamp(0, n as isize - 1) as usize,
                };
                acc += w * lane[idx];
            }
            *out = acc;
        }
        for (c, v) in line.iter().enumerate() {
            lane[c] = *v;
        }
    }
}

/// Space-time Gaussian smoothing: sigma_t in days, sigma_x in km,
/// converted to pixel units (zonal scale at the domain center latitude).
/// Mirrored boundaries in space, clamped in time; kernels truncated at
/// 4 sigma.
pub fn gaussian_blur(field: &Field, sigma_t_days: f64, sigma_x_km: f64) -> Field {
    let spec = field.spec;
    let mut out = field.clone();
    let sigma_t_px = sigma_t_days / spec.dt;
    let sigma_lat_px = sigma_x_km * 1000.0 / spec.dy_m();
    let sigma_lon_px = sigma_x_km / spec.px_km();
    blur_axis(&mut out.values, 0, sigma_t_px, Boundary::Clamp);
    blur_axis(&mut out.values, 1, sigma_lat_px, Boundary::Mirror);
    blur_axis(&mut out.values, 2, sigma_lon_px, Boundary::Mirror);
    out
}

/// Prepares a cloud-cover field for a target grid: spatial bilinear
/// regrid, periodic temporal tiling to the target record length, then a
/// spatial box mean of width `smooth_km` (rounded to an odd pixel count).
pub fn prepare_cloud_cover(raw: &CloudCover, spec: &GridSpec, smooth_km: f64) -> Result<CloudCover> {
    spec.validate()?;
    let raw_field = raw.field();
    let raw_spec = raw_field.spec;

    // spatial regrid on the raw time axis
    let target_raw_time = GridSpec {
        t0: raw_spec.t0,
        dt: raw_spec.dt,
        nt: raw_spec.nt,
        ..*spec
    };
    let regridded = crate::grid::regrid_bilinear(raw_field, &target_raw_time)?;

    // periodic temporal tiling to the target length
    let mut tiled = Field::zeros(*spec, Units::Dimensionless);
    for k in 0..spec.nt {
        let src = k % raw_spec.nt;
        let slice = regridded.values.index_axis(Axis(0), src);
        tiled.values.index_axis_mut(Axis(0), k).assign(&slice);
    }

    // odd box width in pixels
    let mut width = (smooth_km / spec.px_km()).round() as usize;
    if width % 2 == 0 {
        width += 1;
    }
    let half = (width / 2) as isize;
    let mut out = tiled.clone();
    if half > 0 {
        let (nt, nlat, nlon) = tiled.values.dim();
        for k in 0..nt {
            let slice = tiled.values.index_axis(Axis(0), k);
            let mut dst = out.values.index_axis_mut(Axis(0), k);
            for i in 0..nlat {
                for j in 0..nlon {
                    let mut acc = 0.0;
                    let mut n = 0.0;
                    for di in -half..=half {
                        for dj in -half..=half {
                            let ii = i as isize + di;
                            let jj = j as isize + dj;
                            if ii >= 0 && jj >= 0 && (ii as usize) < nlat && (jj as usize) < nlon {
                                acc += slice[[ii as usize, jj as usize]];
                                n += 1.0;
                            }
                        }
                    }
                    dst[[i, j]] = acc / n;
                }
            }
        }
    }
    CloudCover::new(out)
}

/// The cloud-dependent SST degradation: correlated noise added to the
/// truth, and a cloud-weighted blend between the noisy field and its
/// space-time Gaussian blur. The same noise realization feeds both
/// branches.
pub fn simulate_sst_obs(truth_sst: &Field, cloud: &CloudCover, p: &SstObsParams) -> Result<Field> {
    p.validate()?;
    truth_sst.validate()?;
    let spec = truth_sst.spec;
    if cloud.field().spec != spec {
        return Err(OsseError::ShapeMismatch(
            "cloud cover grid does not match the SST grid".into(),
        ));
    }

    // white noise on a coarse grid, bilinearly upsampled per time slice
    let mut noisy = truth_sst.clone();
    noisy.units = Units::DegC;
    if p.noise_sigma > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
        let normal = Normal::new(0.0, p.noise_sigma).unwrap();
        let nc = p.noise_coarse_n;
        for k in 0..spec.nt {
            let coarse = Array2::from_shape_fn((nc, nc), |_| normal.sample(&mut rng));
            for i in 0..spec.nlat {
                let y = if spec.nlat > 1 {
                    i as f64 * (nc as f64 - 1.0) / (spec.nlat as f64 - 1.0)
                } else {
                    0.0
                };
                for j in 0..spec.nlon {
                    let x = if spec.nlon > 1 {
                        j as f64 * (nc as f64 - 1.0) / (spec.nlon as f64 - 1.0)
                    } else {
                        0.0
                    };
                    noisy.values[[k, i, j]] += bilinear_at(&coarse, y, x);
                }
            }
        }
    }

    let blurred = gaussian_blur(&noisy, p.sigma_t, p.sigma_x);
    let mut out = Field::zeros(spec, Units::DegC);
    for ((idx, o), c) in out
        .values
        .indexed_iter_mut()
        .zip(cloud.field().values.iter())
    {
        let (k, i, j) = idx;
        *o = (1.0 - c) * noisy.values[[k, i, j]] + c * blurred.values[[k, i, j]];
    }
    Ok(out)
}

fn bilinear_at(a: &Array2<f64>, y: f64, x: f64) -> f64 {
    let (n, m) = a.dim();
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

/// Mean image per day-of-period across the record.
pub fn build_climatology(sst: &Field, period_days: f64) -> Result<Field> {
    sst.validate()?;
    let spec = sst.spec;
    let steps = (period_days / spec.dt).round() as usize;
    if steps == 0 || period_days <= 0.0 {
        return Err(OsseError::InvalidArgument("period must be positive".into()));
    }
    if spec.nt < steps {
        return Err(OsseError::InvalidArgument(
            "record shorter than one climatology period".into(),
        ));
    }
    let clim_spec = GridSpec { nt: steps, ..spec };
    let mut clim = Field::zeros(clim_spec, sst.units);
    let mut counts = vec![0.0; steps];
    for k in 0..spec.nt {
        let d = k % steps;
        counts[d] += 1.0;
        let slice = sst.values.index_axis(Axis(0), k);
        let mut acc = clim.values.index_axis_mut(Axis(0), d);
        acc += &slice;
    }
    for d in 0..steps {
        let mut acc = clim.values.index_axis_mut(Axis(0), d);
        acc.mapv_inplace(|v| v / counts[d]);
    }
    Ok(clim)
}

/// Subtracts the day-of-period climatology image from every slice.
pub fn deseasonalize(sst: &Field, clim: &Field) -> Result<Field> {
    sst.validate()?;
    clim.validate()?;
    if !sst.spec.same_space(&clim.spec) {
        return Err(OsseError::ShapeMismatch(
            "climatology spatial grid does not match".into(),
        ));
    }
    let steps = clim.spec.nt;
    let mut out = sst.clone();
    for k in 0..sst.spec.nt {
        let d = k % steps;
        let c = clim.values.index_axis(Axis(0), d);
        let mut slice = out.values.index_axis_mut(Axis(0), k);
        slice -= &c;
    }
    Ok(out)
}
