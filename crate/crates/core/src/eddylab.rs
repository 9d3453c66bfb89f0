//! Vortex detection and scoring: Local Normalized Angular Momentum,
//! eddy-center extraction, characteristic contours via SSH level sets,
//! greedy tracking, truth/estimate matching, and detection/property
//! statistics.

use std::collections::HashMap;
use std::io::{BufRead, Write as _};
use std::path::Path;

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::dynamics::VelocityField;
use crate::error::{OsseError, Result};
use crate::grid::{Field, GridSpec, Units, METERS_PER_DEGREE};

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct LnamParams {
    pub neighborhood_half_width: usize,
    pub center_threshold: f64,
}

impl Default for LnamParams {
    fn default() -> Self {
        LnamParams {
            neighborhood_half_width: 2,
            center_threshold: 0.7,
        }
    }
}

impl LnamParams {
    pub fn validate(&self) -> Result<()> {
        if self.neighborhood_half_width < 1 {
            return Err(OsseError::InvalidArgument("half_width must be ≥ 1".into()));
        }
        if !(0.0 < self.center_threshold && self.center_threshold <= 1.0) {
            return Err(OsseError::InvalidArgument(
                "center_threshold must lie in (0, 1]".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Polarity {
    Cyclone,
    Anticyclone,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Eddy {
    pub polarity: Polarity,
    /// LNAM-extremum grid point, (lat, lon) degrees.
    pub center: (f64, f64),
    /// Area centroid of the characteristic contour, (lat, lon) degrees.
    pub barycenter: (f64, f64),
    /// Closed characteristic contour, (lat, lon) vertices; first vertex
    /// is repeated at the end.
    pub contour: Vec<(f64, f64)>,
    /// Equivalent-area radius √(A/π), km.
    pub mean_radius: f64,
    /// Max center-to-contour distance, km.
    pub max_radius: f64,
    /// Max geostrophic speed along the contour, m/s.
    pub max_velocity: f64,
    pub t: f64,
    pub track_id: Option<u64>,
    pub lifetime: u32,
}

/// Local Normalized Angular Momentum, with the
/// denominator taken as |S| + BL so the field is bounded by 1 in
/// magnitude. Neighborhoods are clipped at grid edges; an all-zero
/// denominator yields 0.
pub fn lnam(vel: &VelocityField, p: &LnamParams) -> Result<Field> {
    p.validate()?;
    vel.validate()?;
    let spec = *vel.spec();
    let side = 2 * p.neighborhood_half_width + 1;
    if spec.nlat < side || spec.nlon < side {
        return Err(OsseError::InvalidArgument(format!(
            "grid smaller than the {side}×{side} LNAM neighborhood"
        )));
    }
    let hw = p.neighborhood_half_width as isize;
    let mut out = Field::zeros(spec, Units::Dimensionless);
    for k in 0..spec.nt {
        let u = vel.u.values.index_axis(ndarray::Axis(0), k);
        let v = vel.v.values.index_axis(ndarray::Axis(0), k);
        for i in 0..spec.nlat as isize {
            let lat_i = spec.lat(i as usize);
            let mx = METERS_PER_DEGREE * lat_i.to_radians().cos();
            for j in 0..spec.nlon as isize {
                let (mut l, mut s, mut bl) = (0.0, 0.0, 0.0);
                for di in -hw..=hw {
                    let ii = i + di;
                    if ii < 0 || ii >= spec.nlat as isize {
                        continue;
                    }
                    for dj in -hw..=hw {
                        if di == 0 && dj == 0 {
                            continue;
                        }
                        let jj = j + dj;
                        if jj < 0 || jj >= spec.nlon as isize {
                            continue;
                        }
                        let dx = dj as f64 * spec.dlon * mx;
                        let dy = di as f64 * spec.dlat * METERS_PER_DEGREE;
                        let (uj, vj) = (u[[ii as usize, jj as usize]], v[[ii as usize, jj as usize]]);
                        l += dx * vj - dy * uj;
                        s += dx * uj + dy * vj;
                        bl += (dx * dx + dy * dy).sqrt() * (uj * uj + vj * vj).sqrt();
                    }
                }
                let den = s.abs() + bl;
                out.values[[k, i as usize, j as usize]] = if den > 0.0 { l / den } else { 0.0 };
            }
        }
    }
    Ok(out)
}

/// Strict local extrema of |LNAM| above the threshold on one slice.
fn centers_on_slice(lnam_slice: &ArrayView2<f64>, threshold: f64) -> Vec<(usize, usize)> {
    let (nlat, nlon) = lnam_slice.dim();
    let mut out = Vec::new();
    for i in 0..nlat {
        for j in 0..nlon {
            let a = lnam_slice[[i, j]].abs();
            if a <= threshold {
                continue;
            }
            let mut strict = true;
            'nb: for di in -1isize..=1 {
                for dj in -1isize..=1 {
                    if di == 0 && dj == 0 {
                        continue;
                    }
                    let (ii, jj) = (i as isize + di, j as isize + dj);
                    if ii < 0 || jj < 0 || ii >= nlat as isize || jj >= nlon as isize {
                        continue;
                    }
                    if lnam_slice[[ii as usize, jj as usize]].abs() >= a {
                        strict = false;
                        break 'nb;
                    }
                }
            }
            if strict {
                out.push((i, j));
            }
        }
    }
    out
}

/// Marching-squares contour extraction at one level. Returns closed
/// polylines in fractional pixel coordinates (y = lat index, x = lon
/// index); each polyline repeats its first point at the end.
pub fn marching_squares(z: &ArrayView2<f64>, level: f64) -> Vec<Vec<(f64, f64)>> {
    let (nlat, nlon) = z.dim();
    type Pt = (f64, f64); // (y, x)
    let mut segments: Vec<(Pt, Pt)> = Vec::new();
    let interp = |va: f64, vb: f64| (level - va) / (vb - va);
    for i in 0..nlat - 1 {
        for j in 0..nlon - 1 {
            let v = [
                z[[i, j]],         // bottom-left
                z[[i, j + 1]],     // bottom-right
                z[[i + 1, j + 1]], // top-right
                z[[i + 1, j]],     // top-left
            ];
            let above = [v[0] > level, v[1] > level, v[2] > level, v[3] > level];
            if above.iter().all(|&a| a) || above.iter().all(|&a| !a) {
                continue;
            }
            // crossings on [bottom, right, top, left]
            let mut cross: Vec<Pt> = Vec::with_capacity(4);
            if above[0] != above[1] {
                cross.push((i as f64, j as f64 + interp(v[0], v[1])));
            }
            if above[1] != above[2] {
                cross.push((i as f64 + interp(v[1], v[2]), j as f64 + 1.0));
            }
            if above[3] != above[2] {
                cross.push((i as f64 + 1.0, j as f64 + interp(v[3], v[2])));
            }
            if above[0] != above[3] {
                cross.push((i as f64 + interp(v[0], v[3]), j as f64));
            }
            match cross.len() {
                2 => segments.push((cross[0], cross[1])),
                4 => {
                    // saddle cell: resolve with the center average
                    let center_above = v.iter().sum::<f64>() / 4.0 > level;
                    // crossings are ordered bottom, right, top, left
                    if center_above == above[0] {
                        segments.push((cross[0], cross[3]));
                        segments.push((cross[1], cross[2]));
                    } else {
                        segments.push((cross[0], cross[1]));
                        segments.push((cross[2], cross[3]));
                    }
                }
                _ => {} // corner exactly on the level; skip the degenerate cell
            }
        }
    }

    // chain segments into loops; shared edge points are bitwise equal
    let key = |p: Pt| (p.0.to_bits(), p.1.to_bits());
    let mut by_end: HashMap<(u64, u64), Vec<usize>> = HashMap::new();
    for (idx, (a, b)) in segments.iter().enumerate() {
        by_end.entry(key(*a)).or_default().push(idx);
        by_end.entry(key(*b)).or_default().push(idx);
    }
    let mut used = vec![false; segments.len()];
    let mut loops = Vec::new();
    for start in 0..segments.len() {
        if used[start] {
            continue;
        }
        used[start] = true;
        let (a, b) = segments[start];
        let mut path = vec![a, b];
        loop {
            let tail = *path.last().unwrap();
            if tail == path[0] {
                break;
            }
            let Some(cands) = by_end.get(&key(tail)) else { break };
            let Some(&next) = cands.iter().find(|&&c| !used[c]) else { break };
            used[next] = true;
            let (na, nb) = segments[next];
            path.push(if na == tail { nb } else { na });
        }
        if path.len() > 3 && path[0] == *path.last().unwrap() {
            loops.push(path);
        }
    }
    loops
}

/// Ray-casting point-in-polygon in pixel coordinates; `poly` is closed.
fn encloses(poly: &[(f64, f64)], y: f64, x: f64) -> bool {
    let mut inside = false;
    for w in poly.windows(2) {
        let ((y1, x1), (y2, x2)) = (w[0], w[1]);
        if (y1 > y) != (y2 > y) {
            let xc = x1 + (y - y1) / (y2 - y1) * (x2 - x1);
            if xc > x {
                inside = !inside;
            }
        }
    }
    inside
}

fn bilin(z: &ArrayView2<f64>, y: f64, x: f64) -> f64 {
    let (nlat, nlon) = z.dim();
    let yc = y.clamp(0.0, (nlat - 1) as f64);
    let xc = x.clamp(0.0, (nlon - 1) as f64);
    let i = (yc.floor() as usize).min(nlat - 2);
    let j = (xc.floor() as usize).min(nlon - 2);
    let (fy, fx) = (yc - i as f64, xc - j as f64);
    let a = z[[i, j]] + fx * (z[[i, j + 1]] - z[[i, j]]);
    let b = z[[i + 1, j]] + fx * (z[[i + 1, j + 1]] - z[[i + 1, j]]);
    a + fy * (b - a)
}

/// Shoelace area (km²) and centroid (pixel coords) of a closed polygon
/// expressed in pixel coordinates, using local degree→km scales.
fn polygon_area_centroid(
    poly: &[(f64, f64)],
    spec: &GridSpec,
    lat_ref: f64,
) -> (f64, (f64, f64)) {
    let ky = spec.dlat * METERS_PER_DEGREE / 1000.0; // km per lat px
    let kx = spec.dlon * METERS_PER_DEGREE * lat_ref.to_radians().cos() / 1000.0;
    let mut a2 = 0.0;
    let (mut cy, mut cx) = (0.0, 0.0);
    for w in poly.windows(2) {
        let (y1, x1) = (w[0].0 * ky, w[0].1 * kx);
        let (y2, x2) = (w[1].0 * ky, w[1].1 * kx);
        let cr = x1 * y2 - x2 * y1;
        a2 += cr;
        cx += (x1 + x2) * cr;
        cy += (y1 + y2) * cr;
    }
    let area = a2.abs() / 2.0;
    if a2.abs() < 1e-12 {
        let n = (poly.len() - 1) as f64;
        let my = poly[..poly.len() - 1].iter().map(|p| p.0).sum::<f64>() / n;
        let mx = poly[..poly.len() - 1].iter().map(|p| p.1).sum::<f64>() / n;
        return (area, (my, mx));
    }
    (area, (cy / (3.0 * a2) / ky, cx / (3.0 * a2) / kx))
}

const N_LEVELS: usize = 30;

/// Detects eddies on time slice `k`: LNAM extrema above the threshold
/// become centers; for each center the characteristic contour is the
/// closed SSH level set (geostrophic streamline) enclosing this center
/// and no other, maximizing the mean geostrophic speed along it.
/// Centers with no admissible contour are dropped.
pub fn detect(ssh: &Field, vel: &VelocityField, k: usize, p: &LnamParams) -> Result<Vec<Eddy>> {
    p.validate()?;
    if ssh.spec != *vel.spec() {
        return Err(OsseError::ShapeMismatch("SSH and velocity grids differ".into()));
    }
    if k >= ssh.spec.nt {
        return Err(OsseError::InvalidArgument(format!(
            "time slice {k} out of range for a {}-frame record",
            ssh.spec.nt
        )));
    }
    let spec = ssh.spec;
    let lnam_field = lnam(vel, p)?;
    let lnam_slice = lnam_field.values.index_axis(ndarray::Axis(0), k);
    let h = ssh.values.index_axis(ndarray::Axis(0), k);
    let u = vel.u.values.index_axis(ndarray::Axis(0), k);
    let v = vel.v.values.index_axis(ndarray::Axis(0), k);
    let centers = centers_on_slice(&lnam_slice, p.center_threshold);
    let h_min = h.iter().copied().fold(f64::INFINITY, f64::min);
    let h_max = h.iter().copied().fold(f64::NEG_INFINITY, f64::max);

    let mut eddies = Vec::new();
    for &(ic, jc) in &centers {
        let sign = lnam_slice[[ic, jc]].signum();
        let hc = h[[ic, jc]];
        // an SSH high is enclosed by level sets below the center value,
        // a low by level sets above it; scan toward the far slice extreme
        let toward = if (hc - h_min).abs() > (h_max - hc).abs() { h_min } else { h_max };
        let mut best: Option<(f64, Vec<(f64, f64)>)> = None;
        for m in 1..=N_LEVELS {
            let level = hc + (toward - hc) * m as f64 / (N_LEVELS + 1) as f64;
            for poly in marching_squares(&h, level) {
                if !encloses(&poly, ic as f64, jc as f64) {
                    continue;
                }
                if centers
                    .iter()
                    .any(|&(oi, oj)| (oi, oj) != (ic, jc) && encloses(&poly, oi as f64, oj as f64))
                {
                    continue;
                }
                let n = (poly.len() - 1) as f64;
                let mean_speed = poly[..poly.len() - 1]
                    .iter()
                    .map(|&(y, x)| bilin(&u, y, x).hypot(bilin(&v, y, x)))
                    .sum::<f64>()
                    / n;
                if best.as_ref().map(|(s, _)| mean_speed > *s).unwrap_or(true) {
                    best = Some((mean_speed, poly));
                }
            }
        }
        let Some((_, poly)) = best else { continue };
        let lat_c = spec.lat(ic);
        let lon_c = spec.lon(jc);
        let (area, (by, bx)) = polygon_area_centroid(&poly, &spec, lat_c);
        let ky = spec.dlat * METERS_PER_DEGREE / 1000.0;
        let kx = spec.dlon * METERS_PER_DEGREE * lat_c.to_radians().cos() / 1000.0;
        let max_radius = poly[..poly.len() - 1]
            .iter()
            .map(|&(y, x)| {
                let dy = (y - ic as f64) * ky;
                let dx = (x - jc as f64) * kx;
                dy.hypot(dx)
            })
            .fold(0.0, f64::max);
        let max_velocity = poly[..poly.len() - 1]
            .iter()
            .map(|&(y, x)| bilin(&u, y, x).hypot(bilin(&v, y, x)))
            .fold(0.0, f64::max);
        eddies.push(Eddy {
            polarity: if sign > 0.0 {
                Polarity::Cyclone
            } else {
                Polarity::Anticyclone
            },
            center: (lat_c, lon_c),
            barycenter: (spec.lat0 + by * spec.dlat, spec.lon0 + bx * spec.dlon),
            contour: poly
                .iter()
                .map(|&(y, x)| (spec.lat0 + y * spec.dlat, spec.lon0 + x * spec.dlon))
                .collect(),
            mean_radius: (area / std::f64::consts::PI).sqrt(),
            max_radius,
            max_velocity,
            t: spec.time(k),
            track_id: None,
            lifetime: 1,
        });
    }
    Ok(eddies)
}

fn bary_dist_km(a: &Eddy, b: &Eddy) -> f64 {
    crate::grid::haversine_m(a.barycenter.0, a.barycenter.1, b.barycenter.0, b.barycenter.1)
        / 1000.0
}

/// Greedy nearest-barycenter association across consecutive days. Eddies
/// get `track_id` and `lifetime` (span in days) filled in.
pub fn track(per_day: &mut [Vec<Eddy>], max_jump_km: f64, max_gap_days: usize) {
    struct Track {
        last_seen: usize,
        last: (f64, f64),
        first_day: usize,
        members: Vec<(usize, usize)>, // (day, index)
    }
    let mut tracks: Vec<Track> = Vec::new();
    for day in 0..per_day.len() {
        // candidate (distance, track, eddy) triples against live tracks
        let mut cands: Vec<(f64, usize, usize)> = Vec::new();
        for (ti, tr) in tracks.iter().enumerate() {
            if day - tr.last_seen > max_gap_days + 1 {
                continue;
            }
            for (ei, e) in per_day[day].iter().enumerate() {
                let d = crate::grid::haversine_m(tr.last.0, tr.last.1, e.barycenter.0, e.barycenter.1)
                    / 1000.0;
                if d < max_jump_km {
                    cands.push((d, ti, ei));
                }
            }
        }
        cands.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        let mut track_taken = vec![false; tracks.len()];
        let mut eddy_taken = vec![false; per_day[day].len()];
        for (_, ti, ei) in cands {
            if track_taken[ti] || eddy_taken[ei] {
                continue;
            }
            track_taken[ti] = true;
            eddy_taken[ei] = true;
            tracks[ti].last_seen = day;
            tracks[ti].last = per_day[day][ei].barycenter;
            tracks[ti].members.push((day, ei));
        }
        for ei in 0..per_day[day].len() {
            if !eddy_taken[ei] {
                tracks.push(Track {
                    last_seen: day,
                    last: per_day[day][ei].barycenter,
                    first_day: day,
                    members: vec![(day, ei)],
                });
            }
        }
    }
    for (tid, tr) in tracks.iter().enumerate() {
        let lifetime = (tr.last_seen - tr.first_day + 1) as u32;
        for &(day, ei) in &tr.members {
            per_day[day][ei].track_id = Some(tid as u64);
            per_day[day][ei].lifetime = lifetime;
        }
    }
}

#[derive(Debug, Clone)]
pub struct MatchReport {
    pub pairs: Vec<(Eddy, Eddy)>,
    pub unmatched_truth: Vec<Eddy>,
    pub unmatched_est: Vec<Eddy>,
    pub excluded_multi: usize,
}

/// Pairs truth and estimated eddies whose barycenters are closer than
/// the average of the two mean radii. Truth eddies with more than one
/// candidate are excluded outright.
pub fn match_eddies(truth: &[Eddy], est: &[Eddy]) -> MatchReport {
    let mut est_taken = vec![false; est.len()];
    let mut pairs = Vec::new();
    let mut unmatched_truth = Vec::new();
    let mut excluded_multi = 0;
    for te in truth {
        let cands: Vec<usize> = est
            .iter()
            .enumerate()
            .filter(|(_, ee)| bary_dist_km(te, ee) < (te.mean_radius + ee.mean_radius) / 2.0)
            .map(|(i, _)| i)
            .collect();
        match cands.len() {
            0 => unmatched_truth.push(te.clone()),
            1 => {
                let i = cands[0];
                if est_taken[i] {
                    unmatched_truth.push(te.clone());
                } else {
                    est_taken[i] = true;
                    pairs.push((te.clone(), est[i].clone()));
                }
            }
            _ => excluded_multi += 1,
        }
    }
    let unmatched_est = est
        .iter()
        .zip(&est_taken)
        .filter(|(_, &taken)| !taken)
        .map(|(e, _)| e.clone())
        .collect();
    MatchReport {
        pairs,
        unmatched_truth,
        unmatched_est,
        excluded_multi,
    }
}

/// Detection scores; `None` marks an undefined score (zero denominator).
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Scores {
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
}

pub fn scores(report: &MatchReport) -> Scores {
    let matched = report.pairs.len() as f64;
    let est_total = report.pairs.len() + report.unmatched_est.len();
    let truth_effective =
        report.pairs.len() + report.unmatched_truth.len(); // excluded already removed
    let precision = (est_total > 0).then(|| matched / est_total as f64);
    let recall = (truth_effective > 0).then(|| matched / truth_effective as f64);
    let f1 = match (precision, recall) {
        (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
        (Some(_), Some(_)) => Some(0.0),
        _ => None,
    };
    Scores { precision, recall, f1 }
}

/// Bias (estimate minus truth) and RMSE of a matched-pair property.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ErrorStats {
    pub bias: f64,
    pub rmse: f64,
    pub n: usize,
}

fn stats_of(diffs: &[f64]) -> Option<ErrorStats> {
    if diffs.is_empty() {
        return None;
    }
    let n = diffs.len() as f64;
    Some(ErrorStats {
        bias: diffs.iter().sum::<f64>() / n,
        rmse: (diffs.iter().map(|d| d * d).sum::<f64>() / n).sqrt(),
        n: diffs.len(),
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PropertyErrors {
    pub radius: Option<ErrorStats>,
    pub velocity: Option<ErrorStats>,
    /// Per-bin radius stats over truth mean_radius bins [edge_i, edge_{i+1}).
    pub radius_binned: Vec<Option<ErrorStats>>,
}

pub fn property_errors(report: &MatchReport, radius_bin_edges_km: &[f64]) -> PropertyErrors {
    let rdiff: Vec<f64> = report
        .pairs
        .iter()
        .map(|(t, e)| e.mean_radius - t.mean_radius)
        .collect();
    let vdiff: Vec<f64> = report
        .pairs
        .iter()
        .map(|(t, e)| e.max_velocity - t.max_velocity)
        .collect();
    let mut radius_binned = Vec::new();
    for w in radius_bin_edges_km.windows(2) {
        let diffs: Vec<f64> = report
            .pairs
            .iter()
            .filter(|(t, _)| (w[0]..w[1]).contains(&t.mean_radius))
            .map(|(t, e)| e.mean_radius - t.mean_radius)
            .collect();
        radius_binned.push(stats_of(&diffs));
    }
    PropertyErrors {
        radius: stats_of(&rdiff),
        velocity: stats_of(&vdiff),
        radius_binned,
    }
}

/// One eddy per line as JSON.
pub fn write_eddies(path: &Path, eddies: &[Eddy]) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    for e in eddies {
        serde_json::to_writer(&mut f, e)?;
        f.write_all(b"\n")?;
    }
    f.flush()?;
    Ok(())
}

pub fn read_eddies(path: &Path) -> Result<Vec<Eddy>> {
    let f = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut out = Vec::new();
    for line in f.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line)?);
    }
    Ok(out)
}
