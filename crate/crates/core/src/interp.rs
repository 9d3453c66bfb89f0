//! Reconstruction engines: a local-kriging optimal-interpolation
//! baseline with separable Gaussian covariance, and a variational
//! gradient-descent interpolator minimizing an observation loss plus a
//! smoothness prior, driven over sliding 21-day windows with ensemble
//! averaging.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{OsseError, Result};
use crate::grid::{Field, GridSpec, TrackSet, Units, METERS_PER_DEGREE};
use crate::objective::{derivative_norms, grad_loss, LossParams, LossSpec, OrderNorms};

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct OiParams {
    pub length_scale_km: f64,
    pub time_scale_days: f64,
    pub obs_noise_var: f64,
    pub max_neighbors: usize,
}

impl Default for OiParams {
    fn default() -> Self {
        OiParams {
            length_scale_km: 110.0,
            time_scale_days: 5.0,
            obs_noise_var: 0.019 * 0.019,
            max_neighbors: 30,
        }
    }
}

impl OiParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.length_scale_km > 0.0) || !(self.time_scale_days > 0.0) {
            return Err(OsseError::InvalidArgument(
                "OI length and time scales must be positive".into(),
            ));
        }
        if self.obs_noise_var < 0.0 {
            return Err(OsseError::InvalidArgument(
                "observation noise variance must be non-negative".into(),
            ));
        }
        if self.max_neighbors == 0 {
            return Err(OsseError::InvalidArgument("max_neighbors must be ≥ 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    Unsup,
    UnsupReg,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct VarParams {
    pub loss_kind: LossKind,
    pub lambda1: f64,
    pub lambda2: f64,
    pub smooth_weight: f64,
    pub max_iters: usize,
    pub step_init: f64,
    pub step_decay: f64,
    pub tol_rel: f64,
    pub seed: u64,
}

impl Default for VarParams {
    fn default() -> Self {
        VarParams {
            loss_kind: LossKind::UnsupReg,
            lambda1: 0.05,
            lambda2: 0.05,
            smooth_weight: 2e-3,
            max_iters: 2000,
            step_init: 0.5,
            step_decay: 0.5,
            tol_rel: 1e-6,
            seed: 0,
        }
    }
}

impl VarParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.step_init > 0.0) || !(self.tol_rel > 0.0) {
            return Err(OsseError::InvalidArgument(
                "step_init and tol_rel must be positive".into(),
            ));
        }
        if !(0.0 < self.step_decay && self.step_decay < 1.0) {
            return Err(OsseError::InvalidArgument("step_decay must lie in (0,1)".into()));
        }
        if self.max_iters == 0 {
            return Err(OsseError::InvalidArgument("max_iters must be ≥ 1".into()));
        }
        if self.lambda1 < 0.0 || self.lambda2 < 0.0 || self.smooth_weight < 0.0 {
            return Err(OsseError::InvalidArgument(
                "penalty weights must be non-negative".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct WindowPlan {
    pub window_len: usize,
    pub stride: usize,
    pub center_index: usize,
}

impl Default for WindowPlan {
    fn default() -> Self {
        WindowPlan {
            window_len: 21,
            stride: 1,
            center_index: 10,
        }
    }
}

impl WindowPlan {
    pub fn validate(&self) -> Result<()> {
        if self.window_len == 0 || self.stride == 0 {
            return Err(OsseError::InvalidArgument(
                "window length and stride must be positive".into(),
            ));
        }
        if self.center_index >= self.window_len {
            return Err(OsseError::InvalidArgument(
                "center_index must lie inside the window".into(),
            ));
        }
        Ok(())
    }
}

/// One accepted (or terminal) gradient-descent iteration.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TraceEntry {
    pub iter: usize,
    pub loss: f64,
    pub step: f64,
}

/// Squared normalized space-time distance between an observation and a
/// grid node; the covariance is exp(−d²/2).
#[inline]
fn norm_dist2(
    dlat_m: f64,
    dlon_m: f64,
    dt_days: f64,
    length_m: f64,
    tau_days: f64,
) -> f64 {
    (dlat_m * dlat_m + dlon_m * dlon_m) / (length_m * length_m) + (dt_days / tau_days).powi(2)
}

/// Local-kriging optimal interpolation onto every cell of `spec` with a
/// zero prior mean and covariance exp(−d²/2L²)·exp(−Δt²/2τ²) plus the
/// nugget on the diagonal.
pub fn oi_reconstruct(obs: &TrackSet, spec: &GridSpec, p: &OiParams) -> Result<Field> {
    p.validate()?;
    spec.validate()?;
    if obs.is_empty() {
        return Err(OsseError::NoConstraintPoints);
    }
    let length_m = p.length_scale_km * 1000.0;
    let tau = p.time_scale_days;
    let cos_phi = spec.center_lat().to_radians().cos();

    // Per-day spatial tiles so each cell only scans nearby observations.
    const TILE: usize = 8;
    let ntx = spec.nlon.div_ceil(TILE);
    let nty = spec.nlat.div_ceil(TILE);
    let day_of = |t: f64| -> usize {
        (((t - spec.t0) / spec.dt).round() as isize).clamp(0, spec.nt as isize - 1) as usize
    };
    let mut buckets: Vec<Vec<usize>> = vec![Vec::new(); spec.nt * nty * ntx];
    for (idx, s) in obs.samples().iter().enumerate() {
        let d = day_of(s.t);
        let iy = ((s.lat - spec.lat0) / spec.dlat).clamp(0.0, (spec.nlat - 1) as f64) as usize;
        let ix = ((s.lon - spec.lon0) / spec.dlon).clamp(0.0, (spec.nlon - 1) as f64) as usize;
        buckets[(d * nty + iy / TILE) * ntx + ix / TILE].push(idx);
    }

    // candidate cut-offs: covariance below e^{-9/2} ≈ 1% is ignored
    let day_radius = ((3.0 * tau / spec.dt).ceil() as usize).max(1);
    let tile_m = TILE as f64 * spec.dlat.max(spec.dlon) * METERS_PER_DEGREE;
    let tile_radius = ((3.0 * length_m / tile_m).ceil() as usize).max(1);

    let samples = obs.samples();
    let values = obs.values();
    let mut out = Field::zeros(*spec, Units::Meters);
    let mut cand: Vec<(f64, usize)> = Vec::new();
    for k in 0..spec.nt {
        let t = spec.time(k);
        let d_lo = k.saturating_sub(day_radius);
        let d_hi = (k + day_radius).min(spec.nt - 1);
        for i in 0..spec.nlat {
            let lat = spec.lat(i);
            let ty = i / TILE;
            let ty_lo = ty.saturating_sub(tile_radius);
            let ty_hi = (ty + tile_radius).min(nty - 1);
            for j in 0..spec.nlon {
                let lon = spec.lon(j);
                let tx = j / TILE;
                let tx_lo = tx.saturating_sub(tile_radius);
                let tx_hi = (tx + tile_radius).min(ntx - 1);
                cand.clear();
                for d in d_lo..=d_hi {
                    for ty2 in ty_lo..=ty_hi {
                        for tx2 in tx_lo..=tx_hi {
                            for &idx in &buckets[(d * nty + ty2) * ntx + tx2] {
                                let s = &samples[idx];
                                let d2 = norm_dist2(
                                    (s.lat - lat) * METERS_PER_DEGREE,
                                    (s.lon - lon) * METERS_PER_DEGREE * cos_phi,
                                    s.t - t,
                                    length_m,
                                    tau,
                                );
                                if d2 < 9.0 {
                                    cand.push((d2, idx));
                                }
                            }
                        }
                    }
                }
                if cand.is_empty() {
                    continue; // prior mean
                }
                if cand.len() > p.max_neighbors {
                    cand.select_nth_unstable_by(p.max_neighbors - 1, |a, b| {
                        a.0.total_cmp(&b.0)
                    });
                    cand.truncate(p.max_neighbors);
                }
                out.values[[k, i, j]] =
                    solve_local(&cand, samples, &values, length_m, tau, cos_phi, p)?;
            }
        }
    }
    Ok(out)
}

fn solve_local(
    cand: &[(f64, usize)],
    samples: &[crate::grid::PointSample],
    values: &[f64],
    length_m: f64,
    tau: f64,
    cos_phi: f64,
    p: &OiParams,
) -> Result<f64> {
    let n = cand.len();
    let mut kmat = DMatrix::zeros(n, n);
    for a in 0..n {
        let sa = &samples[cand[a].1];
        kmat[(a, a)] = 1.0 + p.obs_noise_var;
        for b in (a + 1)..n {
            let sb = &samples[cand[b].1];
            let d2 = norm_dist2(
                (sa.lat - sb.lat) * METERS_PER_DEGREE,
                (sa.lon - sb.lon) * METERS_PER_DEGREE * cos_phi,
                sa.t - sb.t,
                length_m,
                tau,
            );
            let c = (-0.5 * d2).exp();
            kmat[(a, b)] = c;
            kmat[(b, a)] = c;
        }
    }
    let kvec = DVector::from_fn(n, |a, _| (-0.5 * cand[a].0).exp());
    let y = DVector::from_fn(n, |a, _| values[cand[a].1]);
    let chol = match Cholesky::new(kmat.clone()) {
        Some(c) => c,
        None => {
            for a in 0..n {
                kmat[(a, a)] += 1e-10;
            }
            Cholesky::new(kmat).ok_or_else(|| {
                OsseError::Numerical("local OI system is singular even with jitter".into())
            })?
        }
    };
    let w = chol.solve(&kvec);
    Ok(w.dot(&y))
}

/// Mean squared forward difference over all three axes: the smoothness
/// prior ‖∇x‖², with its gradient accumulated into `grad` when given.
fn smoothness(x: &Field, weight: f64, mut grad: Option<&mut Field>) -> f64 {
    if weight == 0.0 {
        return 0.0;
    }
    let v = &x.values;
    let (nt, nlat, nlon) = v.dim();
    let n = v.len() as f64;
    let mut acc = 0.0;
    let mut add = |p: [usize; 3], q: [usize; 3], g: &mut Option<&mut Field>| {
        let d = v[q] - v[p];
        acc += d * d;
        if let Some(gf) = g {
            let c = 2.0 * weight * d / n;
            gf.values[q] += c;
            gf.values[p] -= c;
        }
    };
    for k in 0..nt {
        for i in 0..nlat {
            for j in 0..nlon {
                if j + 1 < nlon {
                    add([k, i, j], [k, i, j + 1], &mut grad);
                }
                if i + 1 < nlat {
                    add([k, i, j], [k, i + 1, j], &mut grad);
                }
                if k + 1 < nt {
                    add([k, i, j], [k + 1, i, j], &mut grad);
                }
            }
        }
    }
    weight * acc / n
}

fn var_loss_spec(p: &VarParams, norms: OrderNorms) -> LossSpec<'static> {
    match p.loss_kind {
        LossKind::Unsup => LossSpec::Unsup,
        LossKind::UnsupReg => LossSpec::UnsupReg {
            params: LossParams {
                lambda1: p.lambda1,
                lambda2: p.lambda2,
            },
            norms,
        },
    }
}

/// Gradient descent with backtracking on
/// `loss(obs, x) + smooth_weight·‖∇x‖²`. A step is accepted only if the
/// total loss strictly decreases, so the accepted-loss trace is monotone
/// non-increasing. Stops on relative change below `tol_rel`, step
/// underflow, or `max_iters`.
pub fn variational_reconstruct(
    obs: &TrackSet,
    spec: &GridSpec,
    p: &VarParams,
    init: &Field,
) -> Result<(Field, Vec<TraceEntry>)> {
    p.validate()?;
    if obs.is_empty() {
        return Err(OsseError::NoConstraintPoints);
    }
    if init.spec != *spec {
        return Err(OsseError::ShapeMismatch(
            "initial field grid differs from the requested grid".into(),
        ));
    }
    let norms = match p.loss_kind {
        LossKind::UnsupReg => derivative_norms(obs).unwrap_or_default(),
        LossKind::Unsup => OrderNorms::default(),
    };
    let which = var_loss_spec(p, norms);

    let eval = |x: &Field| -> Result<(f64, Field)> {
        let (data, mut grad) = grad_loss(obs, x, &which)?;
        let pen = smoothness(x, p.smooth_weight, Some(&mut grad));
        let total = data + pen;
        if !total.is_finite() {
            return Err(OsseError::Numerical(format!(
                "non-finite loss (data {data}, penalty {pen})"
            )));
        }
        Ok((total, grad))
    };

    let mut x = init.clone();
    let (mut loss, mut grad) = eval(&x)?;
    let mut step = p.step_init;
    let mut trace = vec![TraceEntry { iter: 0, loss, step }];
    for iter in 1..=p.max_iters {
        // backtrack until the step decreases the loss
        let mut accepted = None;
        while step > 1e-16 {
            let mut cand = x.clone();
            for (c, g) in cand.values.iter_mut().zip(grad.values.iter()) {
                *c -= step * g;
            }
            let data = match &which {
                LossSpec::Unsup => crate::objective::loss_unsup(obs, &cand)?,
                LossSpec::UnsupReg { params, norms } => {
                    crate::objective::loss_unsup_reg(obs, &cand, params, norms)?
                }
                LossSpec::Sup { .. } => unreachable!(),
            };
            let cand_loss = data + smoothness(&cand, p.smooth_weight, None);
            if !cand_loss.is_finite() {
                return Err(OsseError::Numerical("non-finite trial loss".into()));
            }
            if cand_loss < loss {
                accepted = Some((cand, cand_loss));
                break;
            }
            step *= p.step_decay;
        }
        let Some((cand, cand_loss)) = accepted else {
            break; // no descent direction at representable step sizes
        };
        let rel = (loss - cand_loss) / loss.abs().max(f64::MIN_POSITIVE);
        x = cand;
        loss = cand_loss;
        trace.push(TraceEntry { iter, loss, step });
        if rel < p.tol_rel {
            break;
        }
        let (_, g) = eval(&x)?;
        grad = g;
        // cautious step growth after an accepted move
        step = (step / p.step_decay).min(p.step_init * 16.0);
    }
    Ok((x, trace))
}

/// Which reconstruction engine a window run uses.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Engine {
    Oi(OiParams),
    /// Variational descent warm-started from the OI baseline.
    Var { var: VarParams, oi: OiParams },
}

/// Grid of one temporal window starting at frame `start`.
fn window_spec(spec: &GridSpec, start: usize, len: usize) -> GridSpec {
    GridSpec {
        t0: spec.time(start),
        nt: len,
        ..*spec
    }
}

fn window_obs(obs: &TrackSet, wspec: &GridSpec) -> TrackSet {
    let t_lo = wspec.t0;
    let t_hi = wspec.t_max();
    TrackSet::new(
        obs.samples()
            .iter()
            .filter(|s| (t_lo..=t_hi).contains(&s.t))
            .copied()
            .collect(),
    )
}

/// One reconstructed window with its solver trace (empty for OI).
#[derive(Debug, Clone)]
pub struct WindowRun {
    pub start: usize,
    pub field: Field,
    pub trace: Vec<TraceEntry>,
}

/// Reconstructs every window of the plan. Returns (start_frame, field)
/// pairs; each field spans the full window so any offset can be
/// extracted later.
pub fn reconstruct_windows(
    obs: &TrackSet,
    spec: &GridSpec,
    plan: &WindowPlan,
    engine: &Engine,
    seed: u64,
) -> Result<Vec<(usize, Field)>> {
    Ok(reconstruct_windows_traced(obs, spec, plan, engine, seed)?
        .into_iter()
        .map(|w| (w.start, w.field))
        .collect())
}

/// As `reconstruct_windows`, keeping per-window iteration traces.
pub fn reconstruct_windows_traced(
    obs: &TrackSet,
    spec: &GridSpec,
    plan: &WindowPlan,
    engine: &Engine,
    seed: u64,
) -> Result<Vec<WindowRun>> {
    plan.validate()?;
    if spec.nt < plan.window_len {
        return Err(OsseError::InvalidArgument(format!(
            "record of {} frames is shorter than one {}-frame window",
            spec.nt, plan.window_len
        )));
    }
    let mut starts: Vec<usize> = (0..=(spec.nt - plan.window_len))
        .step_by(plan.stride)
        .collect();
    // always include the last window so trailing frames stay covered
    if *starts.last().unwrap() != spec.nt - plan.window_len {
        starts.push(spec.nt - plan.window_len);
    }
    let mut out = Vec::with_capacity(starts.len());
    for start in starts {
        let wspec = window_spec(spec, start, plan.window_len);
        let wobs = window_obs(obs, &wspec);
        if wobs.is_empty() {
            return Err(OsseError::NoConstraintPoints);
        }
        let (field, trace) = match engine {
            Engine::Oi(p) => (oi_reconstruct(&wobs, &wspec, p)?, Vec::new()),
            Engine::Var { var, oi } => {
                let mut init = oi_reconstruct(&wobs, &wspec, oi)?;
                if seed != var.seed || seed != 0 {
                    // member-specific jitter so ensemble runs differ
                    let mut rng = ChaCha8Rng::seed_from_u64(seed);
                    init.values
                        .mapv_inplace(|v| v + 1e-3 * rng.sample::<f64, _>(rand_distr::StandardNormal));
                }
                variational_reconstruct(&wobs, &wspec, var, &init)?
            }
        };
        out.push(WindowRun { start, field, trace });
    }
    Ok(out)
}

/// Stitches window outputs into a full-record field. Frame `k` comes
/// from the window whose center is closest to `k` (earliest wins ties),
/// so interior frames use the centered estimate and edge frames fall
/// back to off-center offsets of the first/last window.
pub fn assemble_windows(
    windows: &[(usize, Field)],
    plan: &WindowPlan,
    spec: &GridSpec,
) -> Result<Field> {
    if windows.is_empty() {
        return Err(OsseError::InvalidArgument("no windows to assemble".into()));
    }
    let mut out = Field::zeros(*spec, Units::Meters);
    for k in 0..spec.nt {
        let (start, field) = windows
            .iter()
            .filter(|(s, _)| (*s..*s + plan.window_len).contains(&k))
            .min_by_key(|(s, _)| (k as isize - (*s + plan.center_index) as isize).abs())
            .ok_or_else(|| {
                OsseError::InvalidArgument(format!("frame {k} not covered by any window"))
            })?;
        let off = k - start;
        out.values
            .index_axis_mut(ndarray::Axis(0), k)
            .assign(&field.values.index_axis(ndarray::Axis(0), off));
    }
    Ok(out)
}

/// Full window protocol: reconstruct per window, assemble, and average
/// `seeds.len()` ensemble members. Identical members are returned
/// verbatim so a one-member "ensemble" is bitwise the single run.
pub fn run_windows(
    obs: &TrackSet,
    spec: &GridSpec,
    plan: &WindowPlan,
    engine: &Engine,
    seeds: &[u64],
) -> Result<Field> {
    if seeds.is_empty() {
        return Err(OsseError::InvalidArgument("need at least one ensemble seed".into()));
    }
    let mut members = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let windows = reconstruct_windows(obs, spec, plan, engine, seed)?;
        members.push(assemble_windows(&windows, plan, spec)?);
    }
    if members.iter().all(|m| m == &members[0]) {
        return Ok(members.swap_remove(0));
    }
    let mut mean = members[0].clone();
    mean.values.fill(0.0);
    for m in &members {
        mean.values += &m.values;
    }
    mean.values /= members.len() as f64;
    Ok(mean)
}
