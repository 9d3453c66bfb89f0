//! Reconstruction scoring: μ and σt RMSE statistics, effective-resolution
//! wavelengths λx/λt from error-to-signal PSD ratios, geostrophic current
//! RMSE, along-track RMSE for ground-truth-free evaluation, and the
//! window-position error profile.

use ndarray::Axis;
use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::dynamics::{geostrophic_currents, PhysConsts, VelocityField};
use crate::error::{OsseError, Result};
use crate::grid::{sample_trilinear, Field, TrackSet, METERS_PER_DEGREE};

/// Optional spatial sub-region for the RMSE suite (e.g. a latitude
/// band such as 34–42°N). `None` bounds select everything.
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct Region {
    pub lat_range: Option<(f64, f64)>,
    pub lon_range: Option<(f64, f64)>,
}

impl Region {
    fn contains(&self, lat: f64, lon: f64) -> bool {
        self.lat_range.map(|(a, b)| (a..=b).contains(&lat)).unwrap_or(true)
            && self.lon_range.map(|(a, b)| (a..=b).contains(&lon)).unwrap_or(true)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RmseSuite {
    /// Overall RMSE over every selected cell, m.
    pub mu: f64,
    /// Standard deviation of the daily RMSE series, m.
    pub sigma_t: f64,
    /// Spatial RMSE per day, m.
    pub per_day: Vec<f64>,
}

pub fn rmse_suite(truth: &Field, est: &Field, region: &Region) -> Result<RmseSuite> {
    if truth.spec != est.spec {
        return Err(OsseError::ShapeMismatch("truth and estimate grids differ".into()));
    }
    let spec = truth.spec;
    let mut selected: Vec<(usize, usize)> = Vec::new();
    for i in 0..spec.nlat {
        for j in 0..spec.nlon {
            if region.contains(spec.lat(i), spec.lon(j)) {
                selected.push((i, j));
            }
        }
    }
    if selected.is_empty() {
        return Err(OsseError::InvalidArgument("region selects no grid cells".into()));
    }
    let mut per_day = Vec::with_capacity(spec.nt);
    let mut total = 0.0;
    for k in 0..spec.nt {
        let mut acc = 0.0;
        for &(i, j) in &selected {
            acc += (truth.values[[k, i, j]] - est.values[[k, i, j]]).powi(2);
        }
        total += acc;
        per_day.push((acc / selected.len() as f64).sqrt());
    }
    let mu = (total / (selected.len() * spec.nt) as f64).sqrt();
    let mean_daily = per_day.iter().sum::<f64>() / per_day.len() as f64;
    let sigma_t = (per_day.iter().map(|r| (r - mean_daily).powi(2)).sum::<f64>()
        / per_day.len() as f64)
        .sqrt();
    Ok(RmseSuite { mu, sigma_t, per_day })
}

/// Periodogram of one detrended, Hann-windowed row; bins 1..=n/2.
fn periodogram(row: &[f64], planner: &mut FftPlanner<f64>) -> Vec<f64> {
    let n = row.len();
    // linear detrend by least squares
    let nf = n as f64;
    let xm = (nf - 1.0) / 2.0;
    let ym = row.iter().sum::<f64>() / nf;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    for (x, y) in row.iter().enumerate() {
        let dx = x as f64 - xm;
        sxy += dx * (y - ym);
        sxx += dx * dx;
    }
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let mut buf: Vec<Complex<f64>> = row
        .iter()
        .enumerate()
        .map(|(x, y)| {
            let detr = y - ym - slope * (x as f64 - xm);
            let w = 0.5 * (1.0 - (2.0 * std::f64::consts::PI * x as f64 / (nf - 1.0)).cos());
            Complex::new(detr * w, 0.0)
        })
        .collect();
    planner.plan_fft_forward(n).process(&mut buf);
    (1..=n / 2).map(|k| buf[k].norm_sqr() / nf).collect()
}

/// Effective-resolution estimate from the error/signal PSD ratio.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LambdaEstimate {
    /// Wavelength in axis units (degrees for λx, days for λt).
    pub wavelength: f64,
    /// True when the ratio never reached the threshold, so the value is
    /// the 2Δ resolvability bound.
    pub error_free: bool,
    pub threshold: f64,
}

/// Shared crossing logic: rows of length n with spacing `delta`, PSDs
/// averaged, smallest wavelength where err/signal first reaches the
/// threshold scanning from long to short wavelengths.
fn lambda_from_rows(
    signal_rows: &[Vec<f64>],
    error_rows: &[Vec<f64>],
    n: usize,
    delta: f64,
    threshold: f64,
) -> Result<LambdaEstimate> {
    if n < 16 {
        return Err(OsseError::InvalidArgument(format!(
            "need at least 16 samples along the transform axis, got {n}"
        )));
    }
    let mut planner = FftPlanner::new();
    let nbins = n / 2;
    let mut sig = vec![0.0; nbins];
    let mut err = vec![0.0; nbins];
    for row in signal_rows {
        for (a, p) in sig.iter_mut().zip(periodogram(row, &mut planner)) {
            *a += p;
        }
    }
    for row in error_rows {
        for (a, p) in err.iter_mut().zip(periodogram(row, &mut planner)) {
            *a += p;
        }
    }
    if sig.iter().sum::<f64>() <= 0.0 {
        return Err(OsseError::ZeroVariance);
    }
    let wavelength_of = |kf: f64| n as f64 * delta / kf;
    let ratio: Vec<f64> = sig
        .iter()
        .zip(&err)
        .map(|(s, e)| if *s > 0.0 { e / s } else { f64::INFINITY })
        .collect();
    for k in 0..nbins {
        if ratio[k] >= threshold {
            let kf = if k == 0 || !ratio[k - 1].is_finite() {
                (k + 1) as f64
            } else {
                // linear interpolation in ratio between bins k and k+1
                k as f64 + (threshold - ratio[k - 1]) / (ratio[k] - ratio[k - 1])
            };
            return Ok(LambdaEstimate {
                wavelength: wavelength_of(kf),
                error_free: false,
                threshold,
            });
        }
    }
    Ok(LambdaEstimate {
        wavelength: 2.0 * delta,
        error_free: true,
        threshold,
    })
}

/// λx in degrees of longitude: PSDs along longitude averaged over every
/// (day, latitude) row.
pub fn lambda_x(truth: &Field, est: &Field, threshold: f64) -> Result<LambdaEstimate> {
    if truth.spec != est.spec {
        return Err(OsseError::ShapeMismatch("truth and estimate grids differ".into()));
    }
    let spec = truth.spec;
    let mut signal_rows = Vec::with_capacity(spec.nt * spec.nlat);
    let mut error_rows = Vec::with_capacity(spec.nt * spec.nlat);
    for k in 0..spec.nt {
        for i in 0..spec.nlat {
            let mut s = Vec::with_capacity(spec.nlon);
            let mut e = Vec::with_capacity(spec.nlon);
            for j in 0..spec.nlon {
                let t = truth.values[[k, i, j]];
                s.push(t);
                e.push(est.values[[k, i, j]] - t);
            }
            signal_rows.push(s);
            error_rows.push(e);
        }
    }
    lambda_from_rows(&signal_rows, &error_rows, spec.nlon, spec.dlon, threshold)
}

/// λx converted to km using the zonal scale at the domain-center latitude.
pub fn lambda_x_km(truth: &Field, est: &Field, threshold: f64) -> Result<LambdaEstimate> {
    let est_deg = lambda_x(truth, est, threshold)?;
    let scale = METERS_PER_DEGREE * truth.spec.center_lat().to_radians().cos() / 1000.0;
    Ok(LambdaEstimate {
        wavelength: est_deg.wavelength * scale,
        ..est_deg
    })
}

/// λt in days: PSDs along time averaged over every spatial column.
pub fn lambda_t(truth: &Field, est: &Field, threshold: f64) -> Result<LambdaEstimate> {
    if truth.spec != est.spec {
        return Err(OsseError::ShapeMismatch("truth and estimate grids differ".into()));
    }
    let spec = truth.spec;
    let mut signal_rows = Vec::with_capacity(spec.nlat * spec.nlon);
    let mut error_rows = Vec::with_capacity(spec.nlat * spec.nlon);
    for i in 0..spec.nlat {
        for j in 0..spec.nlon {
            let mut s = Vec::with_capacity(spec.nt);
            let mut e = Vec::with_capacity(spec.nt);
            for k in 0..spec.nt {
                let t = truth.values[[k, i, j]];
                s.push(t);
                e.push(est.values[[k, i, j]] - t);
            }
            signal_rows.push(s);
            error_rows.push(e);
        }
    }
    lambda_from_rows(&signal_rows, &error_rows, spec.nt, spec.dt, threshold)
}

/// Component-wise RMSE between the truth currents and the geostrophic
/// currents derived from the estimated SSH.
pub fn current_rmse(
    truth_vel: &VelocityField,
    est_ssh: &Field,
    consts: &PhysConsts,
) -> Result<(f64, f64)> {
    if *truth_vel.spec() != est_ssh.spec {
        return Err(OsseError::ShapeMismatch("velocity and SSH grids differ".into()));
    }
    let est_vel = geostrophic_currents(est_ssh, consts)?;
    let n = est_ssh.values.len() as f64;
    let mu = |a: &Field, b: &Field| {
        (a.values
            .iter()
            .zip(b.values.iter())
            .map(|(x, y)| (x - y).powi(2))
            .sum::<f64>()
            / n)
            .sqrt()
    };
    Ok((mu(&truth_vel.u, &est_vel.u), mu(&truth_vel.v, &est_vel.v)))
}

/// RMSE of the resampled estimate against withheld track values.
pub fn along_track_rmse(held_out: &TrackSet, est: &Field) -> Result<f64> {
    if held_out.is_empty() {
        return Err(OsseError::NoConstraintPoints);
    }
    let sampled = sample_trilinear(est, held_out)?;
    let n = sampled.len() as f64;
    Ok((held_out
        .values()
        .iter()
        .zip(&sampled)
        .map(|(y, h)| (y - h).powi(2))
        .sum::<f64>()
        / n)
        .sqrt())
}

/// RMSE of the frame a given in-window offset produces, over every
/// window (Fig. 7-style curve point). `windows` pairs each window's
/// start frame with its full reconstructed field.
pub fn offset_rmse(truth: &Field, windows: &[(usize, Field)], offset: usize) -> Result<f64> {
    if windows.is_empty() {
        return Err(OsseError::InvalidArgument("no windows supplied".into()));
    }
    let spec = truth.spec;
    let mut acc = 0.0;
    let mut count = 0usize;
    for (start, field) in windows {
        if offset >= field.spec.nt {
            return Err(OsseError::InvalidArgument(format!(
                "offset {offset} outside a {}-frame window",
                field.spec.nt
            )));
        }
        let k = start + offset;
        if k >= spec.nt {
            continue;
        }
        let est = field.values.index_axis(Axis(0), offset);
        let tru = truth.values.index_axis(Axis(0), k);
        acc += est
            .iter()
            .zip(tru.iter())
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>();
        count += est.len();
    }
    if count == 0 {
        return Err(OsseError::InvalidArgument(
            "offset produces no frames inside the record".into(),
        ));
    }
    Ok((acc / count as f64).sqrt())
}

/// Per-offset RMSE curve over the requested offsets.
pub fn window_profile(
    truth: &Field,
    windows: &[(usize, Field)],
    offsets: &[usize],
) -> Result<Vec<(usize, f64)>> {
    offsets
        .iter()
        .map(|&o| Ok((o, offset_rmse(truth, windows, o)?)))
        .collect()
}

/// Summary report combining the metric suite; optional entries cover
/// the ground-truth-free mode.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub mu: Option<f64>,
    pub sigma_t: Option<f64>,
    pub per_day: Vec<f64>,
    pub lambda_x_deg: Option<LambdaEstimate>,
    pub lambda_t_days: Option<LambdaEstimate>,
    pub mu_u: Option<f64>,
    pub mu_v: Option<f64>,
    pub along_track_rmse: Option<f64>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{GridSpec, PointSample, Units};
    use approx::assert_relative_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn spec(nt: usize, n: usize) -> GridSpec {
        GridSpec {
            lat0: 33.0,
            lon0: -65.0,
            dlat: 10.0 / (n - 1) as f64,
            dlon: 10.0 / (n - 1) as f64,
            nlat: n,
            nlon: n,
            t0: 0.0,
            dt: 1.0,
            nt,
        }
    }

    #[test]
    fn rmse_suite_basics() {
        let s = spec(4, 16);
        let truth = Field::from_fn(s, Units::Meters, |t, lat, lon| t * 0.01 + lat - lon);
        let r = rmse_suite(&truth, &truth, &Region::default()).unwrap();
        assert_eq!((r.mu, r.sigma_t), (0.0, 0.0));

        let mut est = truth.clone();
        est.values.mapv_inplace(|v| v + 0.02);
        let r = rmse_suite(&truth, &est, &Region::default()).unwrap();
        assert_relative_eq!(r.mu, 0.02, max_relative = 1e-12);
        assert!(r.sigma_t < 1e-15);
    }

    #[test]
    fn rmse_two_day_arithmetic() {
        let s = spec(2, 8);
        let truth = Field::zeros(s, Units::Meters);
        let mut est = Field::zeros(s, Units::Meters);
        est.values.index_axis_mut(Axis(0), 0).fill(0.01);
        est.values.index_axis_mut(Axis(0), 1).fill(0.03);
        let r = rmse_suite(&truth, &est, &Region::default()).unwrap();
        assert_relative_eq!(r.per_day[0], 0.01, max_relative = 1e-12);
        assert_relative_eq!(r.per_day[1], 0.03, max_relative = 1e-12);
        assert_relative_eq!(r.mu, ((1e-4 + 9e-4) / 2.0f64).sqrt(), max_relative = 1e-12);
        assert_relative_eq!(r.sigma_t, 0.01, max_relative = 1e-12);
    }

    #[test]
    fn mu_squared_equals_mean_of_daily_squares() {
        let s = spec(5, 12);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let truth = Field::zeros(s, Units::Meters);
        let mut est = Field::zeros(s, Units::Meters);
        est.values.mapv_inplace(|_| rng.random_range(-0.1..0.1));
        let r = rmse_suite(&truth, &est, &Region::default()).unwrap();
        let mean_sq = r.per_day.iter().map(|d| d * d).sum::<f64>() / r.per_day.len() as f64;
        assert_relative_eq!(r.mu * r.mu, mean_sq, max_relative = 1e-12);
    }

    #[test]
    fn region_mask_restricts_and_can_be_empty() {
        let s = spec(2, 16);
        let truth = Field::zeros(s, Units::Meters);
        // error only north of 40°N
        let est = Field::from_fn(s, Units::Meters, |_, lat, _| if lat > 40.0 { 0.1 } else { 0.0 });
        let south = Region {
            lat_range: Some((34.0, 40.0)),
            lon_range: None,
        };
        let r = rmse_suite(&truth, &est, &south).unwrap();
        assert_eq!(r.mu, 0.0);
        let all = rmse_suite(&truth, &est, &Region::default()).unwrap();
        assert!(all.mu > 0.0);
        let empty = Region {
            lat_range: Some((80.0, 81.0)),
            lon_range: None,
        };
        assert!(rmse_suite(&truth, &est, &empty).is_err());
    }

    /// Power-law truth built in the spectral domain, identical rows.
    fn power_law_truth(s: &GridSpec, exponent: f64, rng: &mut ChaCha8Rng) -> Field {
        let n = s.nlon;
        let mut planner = FftPlanner::new();
        let mut buf = vec![Complex::new(0.0, 0.0); n];
        for k in 1..n / 2 {
            let amp = (k as f64).powf(exponent);
            let ph = rng.random_range(0.0..std::f64::consts::TAU);
            buf[k] = Complex::from_polar(amp, ph);
            buf[n - k] = buf[k].conj();
        }
        planner.plan_fft_inverse(n).process(&mut buf);
        // rustfft leaves the inverse unnormalized
        let row: Vec<f64> = buf.iter().map(|c| c.re / n as f64).collect();
        Field::from_fn(*s, Units::Meters, |_, _, lon| {
            let j = ((lon - s.lon0) / s.dlon).round() as usize;
            row[j.min(n - 1)]
        })
    }

    fn red_truth(s: &GridSpec, rng: &mut ChaCha8Rng) -> Field {
        power_law_truth(s, -1.5, rng)
    }

    /// Brute-force oracle: naive DFT periodograms with the same
    /// detrend/Hann pipeline, crossing located without interpolation.
    fn oracle_lambda_bin(truth: &Field, est: &Field, threshold: f64) -> usize {
        let s = truth.spec;
        let n = s.nlon;
        let hann: Vec<f64> = (0..n)
            .map(|x| 0.5 * (1.0 - (std::f64::consts::TAU * x as f64 / (n as f64 - 1.0)).cos()))
            .collect();
        let psd_of = |field: &Field, other: Option<&Field>| -> Vec<f64> {
            let mut acc = vec![0.0; n / 2];
            for k in 0..s.nt {
                for i in 0..s.nlat {
                    let row: Vec<f64> = (0..n)
                        .map(|j| {
                            field.values[[k, i, j]]
                                - other.map(|o| o.values[[k, i, j]]).unwrap_or(0.0)
                        })
                        .collect();
                    // detrend
                    let nf = n as f64;
                    let xm = (nf - 1.0) / 2.0;
                    let ym = row.iter().sum::<f64>() / nf;
                    let sxx: f64 = (0..n).map(|x| (x as f64 - xm).powi(2)).sum();
                    let sxy: f64 = row
                        .iter()
                        .enumerate()
                        .map(|(x, y)| (x as f64 - xm) * (y - ym))
                        .sum();
                    let slope = sxy / sxx;
                    let w: Vec<f64> = row
                        .iter()
                        .enumerate()
                        .map(|(x, y)| (y - ym - slope * (x as f64 - xm)) * hann[x])
                        .collect();
                    for (kk, a) in acc.iter_mut().enumerate() {
                        let freq = (kk + 1) as f64;
                        let (mut re, mut im) = (0.0, 0.0);
                        for (x, &wx) in w.iter().enumerate() {
                            let ang = std::f64::consts::TAU * freq * x as f64 / n as f64;
                            re += wx * ang.cos();
                            im -= wx * ang.sin();
                        }
                        *a += (re * re + im * im) / n as f64;
                    }
                }
            }
            acc
        };
        let sig = psd_of(truth, None);
        let err = psd_of(est, Some(truth));
        for k in 0..n / 2 {
            if err[k] / sig[k] >= threshold {
                return k + 1;
            }
        }
        0
    }

    #[test]
    fn lambda_x_matches_the_brute_force_oracle() {
        let s = spec(2, 64);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let truth = red_truth(&s, &mut rng);
        let mut est = truth.clone();
        est.values.mapv_inplace(|v| v + 0.002 * rng.random_range(-1.0..1.0));
        let lam = lambda_x(&truth, &est, 1.0).unwrap();
        assert!(!lam.error_free);
        let bin = oracle_lambda_bin(&truth, &est, 1.0);
        assert!(bin > 1);
        // our interpolated crossing must land within one bin of the
        // oracle's first-crossing bin
        let lam_lo = s.nlon as f64 * s.dlon / (bin + 1) as f64;
        let lam_hi = s.nlon as f64 * s.dlon / (bin - 1) as f64;
        assert!(
            (lam_lo..=lam_hi).contains(&lam.wavelength),
            "λ {} not within bins [{lam_lo}, {lam_hi}]",
            lam.wavelength
        );
    }

    #[test]
    fn identical_fields_hit_the_resolvability_bound() {
        let s = spec(2, 32);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let truth = red_truth(&s, &mut rng);
        let lam = lambda_x(&truth, &truth, 1.0).unwrap();
        assert!(lam.error_free);
        assert_relative_eq!(lam.wavelength, 2.0 * s.dlon, max_relative = 1e-12);
    }

    #[test]
    fn lowpass_filtered_estimate_crosses_near_the_cutoff() {
        let s = spec(2, 64);
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let truth = power_law_truth(&s, 0.0, &mut rng);
        // brick-wall low-pass: zero all wavenumbers above the cutoff
        let cutoff_bin = 16usize;
        let n = s.nlon;
        let mut planner = FftPlanner::new();
        let mut est = truth.clone();
        for k in 0..s.nt {
            for i in 0..s.nlat {
                let mut buf: Vec<Complex<f64>> = (0..n)
                    .map(|j| Complex::new(truth.values[[k, i, j]], 0.0))
                    .collect();
                planner.plan_fft_forward(n).process(&mut buf);
                for kk in 0..n {
                    let f = kk.min(n - kk);
                    if f > cutoff_bin {
                        buf[kk] = Complex::new(0.0, 0.0);
                    }
                }
                planner.plan_fft_inverse(n).process(&mut buf);
                for j in 0..n {
                    est.values[[k, i, j]] = buf[j].re / n as f64;
                }
            }
        }
        let cut_wavelength = n as f64 * s.dlon / cutoff_bin as f64;
        let lam = lambda_x(&truth, &est, 1.0).unwrap();
        assert!(
            (lam.wavelength - cut_wavelength).abs() / cut_wavelength < 0.25,
            "λ {} vs cutoff {}",
            lam.wavelength,
            cut_wavelength
        );
    }

    #[test]
    fn lambda_is_scale_invariant() {
        let s = spec(2, 64);
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let truth = red_truth(&s, &mut rng);
        let mut est = truth.clone();
        est.values.mapv_inplace(|v| v + 0.05 * rng.random_range(-1.0..1.0));
        let a = lambda_x(&truth, &est, 1.0).unwrap();
        let mut t2 = truth.clone();
        let mut e2 = est.clone();
        t2.values.mapv_inplace(|v| 7.5 * v);
        e2.values.mapv_inplace(|v| 7.5 * v);
        let b = lambda_x(&t2, &e2, 1.0).unwrap();
        assert_relative_eq!(a.wavelength, b.wavelength, max_relative = 1e-9);
    }

    #[test]
    fn lambda_t_detects_temporal_noise() {
        let s = spec(64, 16);
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        // slow temporal signal, identical at all points
        let truth = Field::from_fn(s, Units::Meters, |t, _, _| {
            (t * 0.15).sin() + 0.5 * (t * 0.05).cos()
        });
        let mut est = truth.clone();
        est.values.mapv_inplace(|v| v + 0.05 * rng.random_range(-1.0..1.0));
        let lam = lambda_t(&truth, &est, 1.0).unwrap();
        assert!(!lam.error_free);
        assert!(lam.wavelength > 2.0 * s.dt);
        assert!(lam.wavelength < s.nt as f64 * s.dt);
    }

    #[test]
    fn zero_variance_signal_is_an_error() {
        let s = spec(2, 32);
        let truth = Field::zeros(s, Units::Meters);
        let mut est = truth.clone();
        est.values.mapv_inplace(|_| 0.1);
        assert!(matches!(
            lambda_x(&truth, &est, 1.0),
            Err(OsseError::ZeroVariance)
        ));
    }

    #[test]
    fn too_few_samples_is_an_error() {
        let s = spec(2, 8);
        let truth = Field::from_fn(s, Units::Meters, |_, lat, lon| lat + lon);
        assert!(lambda_x(&truth, &truth, 1.0).is_err());
    }

    #[test]
    fn current_rmse_identities() {
        let s = spec(3, 48);
        let consts = PhysConsts::default();
        let truth_ssh = Field::from_fn(s, Units::Meters, |_, lat, lon| {
            0.1 * ((lat - 38.0) * 0.8).sin() * ((lon + 60.0) * 0.6).cos()
        });
        let vel = geostrophic_currents(&truth_ssh, &consts).unwrap();
        let (mu_u, mu_v) = current_rmse(&vel, &truth_ssh, &consts).unwrap();
        assert!(mu_u < 1e-10 && mu_v < 1e-10);

        let mut shifted = truth_ssh.clone();
        shifted.values.mapv_inplace(|v| v + 0.37);
        let (mu_u, mu_v) = current_rmse(&vel, &shifted, &consts).unwrap();
        assert!(mu_u < 1e-10 && mu_v < 1e-10);

        let mut doubled = truth_ssh.clone();
        doubled.values.mapv_inplace(|v| 2.0 * v);
        let (mu_u, _) = current_rmse(&vel, &doubled, &consts).unwrap();
        let rms_u = (vel.u.values.iter().map(|x| x * x).sum::<f64>()
            / vel.u.values.len() as f64)
            .sqrt();
        assert_relative_eq!(mu_u, rms_u, max_relative = 1e-10);
    }

    #[test]
    fn along_track_rmse_examples() {
        let s = spec(4, 16);
        let truth = Field::from_fn(s, Units::Meters, |t, lat, lon| 0.01 * t + 0.02 * lat - 0.01 * lon);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let pts: Vec<PointSample> = (0..1000)
            .map(|i| PointSample {
                sat_id: 0,
                t: rng.random_range(s.t0..s.t_max()),
                seconds_of_day: i as f64,
                lat: rng.random_range(s.lat0..s.lat_max()),
                lon: rng.random_range(s.lon0..s.lon_max()),
                value: 0.0,
            })
            .collect();
        let support = TrackSet::new(pts);
        let clean = sample_trilinear(&truth, &support).unwrap();
        let obs = support.with_values(&clean).unwrap();
        assert!(along_track_rmse(&obs, &truth).unwrap() < 1e-14);

        let mut off = truth.clone();
        off.values.mapv_inplace(|v| v - 0.05);
        assert_relative_eq!(along_track_rmse(&obs, &off).unwrap(), 0.05, max_relative = 1e-10);

        assert!(along_track_rmse(&TrackSet::default(), &truth).is_err());
    }

    #[test]
    fn window_profile_shapes() {
        let s = spec(10, 8);
        let truth = Field::from_fn(s, Units::Meters, |t, lat, lon| t * 0.01 + lat * 0.1 - lon * 0.1);
        // three "windows" of length 4 that simply copy the truth frames
        let mk = |start: usize| {
            let ws = GridSpec {
                t0: s.time(start),
                nt: 4,
                ..s
            };
            let f = Field::from_fn(ws, Units::Meters, |t, lat, lon| t * 0.01 + lat * 0.1 - lon * 0.1);
            (start, f)
        };
        let windows = vec![mk(0), mk(3), mk(6)];
        let prof = window_profile(&truth, &windows, &[0, 1, 2, 3]).unwrap();
        assert_eq!(prof.len(), 4);
        for (_, r) in &prof {
            assert!(*r < 1e-12); // identical reconstructions → flat curve
        }
        let single = window_profile(&truth, &windows, &[2]).unwrap();
        assert_eq!(single.len(), 1);
        assert!(window_profile(&truth, &windows, &[9]).is_err());
    }
}
