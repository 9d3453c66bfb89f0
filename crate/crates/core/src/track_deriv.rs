//! First and second SSH derivatives along satellite tracks, approximated
//! by rates of change between consecutive same-satellite samples taken
//! less than two seconds apart. Derivative samples are re-centered on the
//! dual coordinates (midpoints) of their parents.

use std::path::Path;

use crate::error::{OsseError, Result};
use crate::grid::{haversine_m, PointSample, TrackSet};

/// A differentiated track: derivative values on midpoint coordinates,
/// plus the linkage back to the parent series so the same difference
/// geometry can be applied to other value vectors (and transposed).
#[derive(Debug, Clone)]
pub struct DerivedTrackSet {
    /// 1 for first derivatives, 2 for second.
    pub order: u8,
    /// Midpoint samples carrying the derivative values.
    samples: Vec<PointSample>,
    /// Ground distance (m) between the two parent samples of each entry.
    ds_m: Vec<f64>,
    /// Index of the left parent of each entry, into the parent series.
    left_parent: Vec<usize>,
    /// Number of samples in the parent series.
    n_parent: usize,
    /// Pairs skipped because their ground distance was zero.
    pub skipped_zero_ds: usize,
}

impl DerivedTrackSet {
    pub fn samples(&self) -> &[PointSample] {
        &self.samples
    }
    pub fn len(&self) -> usize {
        self.samples.len()
    }
    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
    pub fn values(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.value).collect()
    }
    pub fn ds_m(&self) -> &[f64] {
        &self.ds_m
    }

    /// Applies the same difference stencil to another value vector
    /// aligned with the parent series.
    pub fn apply(&self, parent_values: &[f64]) -> Result<Vec<f64>> {
        if parent_values.len() != self.n_parent {
            return Err(OsseError::ShapeMismatch(format!(
                "{} parent values, expected {}",
                parent_values.len(),
                self.n_parent
            )));
        }
        Ok(self
            .left_parent
            .iter()
            .zip(&self.ds_m)
            .map(|(&i, &ds)| (parent_values[i + 1] - parent_values[i]) / ds)
            .collect())
    }

    /// Transpose of `apply`: accumulates derivative-space coefficients
    /// back onto the parent series.
    pub fn apply_transpose(&self, coeffs: &[f64]) -> Result<Vec<f64>> {
        if coeffs.len() != self.len() {
            return Err(OsseError::ShapeMismatch(format!(
                "{} coefficients for {} derivative samples",
                coeffs.len(),
                self.len()
            )));
        }
        let mut out = vec![0.0; self.n_parent];
        for ((&i, &ds), &c) in self.left_parent.iter().zip(&self.ds_m).zip(coeffs) {
            out[i + 1] += c / ds;
            out[i] -= c / ds;
        }
        Ok(out)
    }
}

fn midpoint(a: &PointSample, b: &PointSample, value: f64) -> PointSample {
    PointSample {
        sat_id: a.sat_id,
        t: 0.5 * (a.t + b.t),
        seconds_of_day: 0.5 * (a.seconds_of_day + b.seconds_of_day),
        lat: 0.5 * (a.lat + b.lat),
        lon: 0.5 * (a.lon + b.lon),
        value,
    }
}

fn differentiate(parents: &[PointSample], order: u8, max_gap_s: f64) -> DerivedTrackSet {
    let mut out = DerivedTrackSet {
        order,
        samples: Vec::new(),
        ds_m: Vec::new(),
        left_parent: Vec::new(),
        n_parent: parents.len(),
        skipped_zero_ds: 0,
    };
    for i in 0..parents.len().saturating_sub(1) {
        let (a, b) = (&parents[i], &parents[i + 1]);
        if a.sat_id != b.sat_id {
            continue;
        }
        // the clock rule is evaluated on seconds within the same UTC day
        if a.t.floor() != b.t.floor() {
            continue;
        }
        if (b.seconds_of_day - a.seconds_of_day).abs() >= max_gap_s {
            continue;
        }
        let ds = haversine_m(a.lat, a.lon, b.lat, b.lon);
        if ds == 0.0 {
            out.skipped_zero_ds += 1;
            continue;
        }
        let value = (b.value - a.value) / ds;
        out.samples.push(midpoint(a, b, value));
        out.ds_m.push(ds);
        out.left_parent.push(i);
    }
    out
}

/// First along-track derivative of an observation set.
pub fn along_track_derivative(obs: &TrackSet, max_gap_s: f64) -> DerivedTrackSet {
    differentiate(obs.samples(), 1, max_gap_s)
}

/// Second derivative: the same differencing applied to a first-derivative
/// set, between midpoints of adjacent parent pairs.
pub fn second_derivative(d1: &DerivedTrackSet, max_gap_s: f64) -> Result<DerivedTrackSet> {
    if d1.order != 1 {
        return Err(OsseError::InvalidArgument(
            "second_derivative expects a first-order derived set".into(),
        ));
    }
    let mut out = differentiate(&d1.samples, 2, max_gap_s);
    // keep only differences between derivatives of adjacent parent pairs
    let mut keep = Vec::new();
    for (n, &lp) in out.left_parent.iter().enumerate() {
        if d1.left_parent[lp] + 1 == d1.left_parent[lp + 1] {
            keep.push(n);
        }
    }
    if keep.len() != out.len() {
        out.samples = keep.iter().map(|&n| out.samples[n]).collect();
        out.ds_m = keep.iter().map(|&n| out.ds_m[n]).collect();
        out.left_parent = keep.iter().map(|&n| out.left_parent[n]).collect();
    }
    Ok(out)
}

/// Writes derivative samples in the track CSV format with an extra
/// `order` column.
pub fn write_derived_tracks(path: &Path, d: &DerivedTrackSet) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "sat_id",
        "t_days",
        "seconds_of_day",
        "lat",
        "lon",
        "value",
        "order",
    ])?;
    for s in d.samples() {
        w.write_record(&[
            s.sat_id.to_string(),
            format!("{:.17e}", s.t),
            format!("{:.17e}", s.seconds_of_day),
            format!("{:.17e}", s.lat),
            format!("{:.17e}", s.lon),
            format!("{:.17e}", s.value),
            d.order.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    /// Track marching north along a meridian with uniform 7 km steps.
    fn meridian_track(sat: u32, n: usize, value_of_s: impl Fn(f64) -> f64) -> TrackSet {
        let step_m = 7000.0;
        let dlat = step_m / crate::grid::METERS_PER_DEGREE;
        TrackSet::new(
            (0..n)
                .map(|i| PointSample {
                    sat_id: sat,
                    t: 5.0 + i as f64 * 1e-5,
                    seconds_of_day: i as f64, // 1 s cadence
                    lat: 35.0 + i as f64 * dlat,
                    lon: -60.0,
                    value: value_of_s(i as f64 * step_m),
                })
                .collect(),
        )
    }

    #[test]
    fn constant_track_has_zero_derivatives() {
        let obs = meridian_track(0, 10, |_| 0.42);
        let d1 = along_track_derivative(&obs, 2.0);
        assert_eq!(d1.len(), 9);
        for v in d1.values() {
            assert_eq!(v, 0.0);
        }
        let d2 = second_derivative(&d1, 2.0).unwrap();
        assert_eq!(d2.len(), 8);
        for v in d2.values() {
            assert_eq!(v, 0.0);
        }
    }

    #[test]
    fn linear_ramp_gives_expected_slope() {
        // 0.01 m per 7 km step
        let obs = meridian_track(0, 8, |s| 0.01 * s / 7000.0);
        let d1 = along_track_derivative(&obs, 2.0);
        for v in d1.values() {
            assert_relative_eq!(v, 0.01 / 7000.0, max_relative = 1e-6);
        }
        let d2 = second_derivative(&d1, 2.0).unwrap();
        for v in d2.values() {
            assert!(v.abs() < 1e-12);
        }
    }

    #[test]
    fn quadratic_track_has_constant_second_derivative() {
        let b = 3.7e-11; // m per m^2
        let obs = meridian_track(0, 12, |s| b * s * s);
        let d1 = along_track_derivative(&obs, 2.0);
        let d2 = second_derivative(&d1, 2.0).unwrap();
        assert!(!d2.is_empty());
        for v in d2.values() {
            assert_relative_eq!(v, 2.0 * b, max_relative = 1e-10);
        }
    }

    #[test]
    fn two_second_rule_blocks_slow_pairs() {
        let mut samples: Vec<PointSample> = meridian_track(0, 4, |s| s * 1e-6)
            .samples()
            .to_vec();
        // stretch the time gaps to 5 s
        for (i, s) in samples.iter_mut().enumerate() {
            s.seconds_of_day = i as f64 * 5.0;
        }
        let obs = TrackSet::new(samples);
        let d1 = along_track_derivative(&obs, 2.0);
        assert!(d1.is_empty());
    }

    #[test]
    fn cross_day_pairs_are_skipped() {
        let samples = vec![
            PointSample {
                sat_id: 0,
                t: 4.99999,
                seconds_of_day: 86399.5,
                lat: 35.0,
                lon: -60.0,
                value: 0.0,
            },
            PointSample {
                sat_id: 0,
                t: 5.00001,
                seconds_of_day: 0.5,
                lat: 35.06,
                lon: -60.0,
                value: 0.01,
            },
        ];
        let d1 = along_track_derivative(&TrackSet::new(samples), 2.0);
        assert!(d1.is_empty());
    }

    #[test]
    fn same_satellite_rule_and_interleaving_invariance() {
        let a = meridian_track(0, 6, |s| 1e-6 * s);
        let mut mixed: Vec<PointSample> = a.samples().to_vec();
        mixed.extend(meridian_track(1, 5, |s| -2e-6 * s).samples().iter().copied());
        let mixed = TrackSet::new(mixed);
        let d_mixed = along_track_derivative(&mixed, 2.0);
        let d_a = along_track_derivative(&a, 2.0);
        // sat 0 derivatives are unchanged by the presence of sat 1
        let sat0: Vec<f64> = d_mixed
            .samples()
            .iter()
            .filter(|s| s.sat_id == 0)
            .map(|s| s.value)
            .collect();
        assert_eq!(sat0, d_a.values());
        assert_eq!(d_mixed.len(), 5 + 4);
    }

    #[test]
    fn counts_shrink_with_order() {
        let obs = meridian_track(0, 20, |s| (s * 1e-5).sin());
        let d1 = along_track_derivative(&obs, 2.0);
        let d2 = second_derivative(&d1, 2.0).unwrap();
        assert!(d2.len() <= d1.len() && d1.len() <= obs.len());
        assert!(d1.len() <= obs.len() - 1);
        assert!(d2.len() <= obs.len() - 2);
    }

    #[test]
    fn duplicate_positions_are_tallied() {
        let mut samples: Vec<PointSample> = meridian_track(0, 3, |s| s * 1e-6)
            .samples()
            .to_vec();
        samples[1].lat = samples[0].lat;
        samples[1].lon = samples[0].lon;
        let obs = TrackSet::new(samples);
        let d1 = along_track_derivative(&obs, 2.0);
        assert_eq!(d1.skipped_zero_ds, 1);
        assert_eq!(d1.len(), 1);
    }

    #[test]
    fn too_few_samples_give_empty_second_derivative() {
        let obs = meridian_track(0, 2, |s| s);
        let d1 = along_track_derivative(&obs, 2.0);
        assert_eq!(d1.len(), 1);
        let d2 = second_derivative(&d1, 2.0).unwrap();
        assert!(d2.is_empty());
    }

    #[test]
    fn apply_and_transpose_are_adjoint() {
        let obs = meridian_track(0, 15, |s| (s * 2e-5).cos());
        let d1 = along_track_derivative(&obs, 2.0);
        let n = obs.len();
        let m = d1.len();
        let x: Vec<f64> = (0..n).map(|i| (i as f64 * 0.71).sin()).collect();
        let y: Vec<f64> = (0..m).map(|i| (i as f64 * 1.13).cos()).collect();
        let ax = d1.apply(&x).unwrap();
        let aty = d1.apply_transpose(&y).unwrap();
        let lhs: f64 = ax.iter().zip(&y).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.iter().zip(&aty).map(|(a, b)| a * b).sum();
        assert_relative_eq!(lhs, rhs, max_relative = 1e-12);
    }
}
