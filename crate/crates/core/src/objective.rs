//! Reconstruction objectives: supervised MSE, observation-space MSE, the
//! derivative-regularized observation loss, their gradients with respect
//! to the estimated field, the leave-one-satellite-out split, and
//! normalization statistics.

use serde::{Deserialize, Serialize};

use crate::error::{OsseError, Result};
use crate::grid::{sample_trilinear, scatter_adjoint, Field, TrackSet};
use crate::track_deriv::{along_track_derivative, second_derivative, DerivedTrackSet};

pub const TWO_SECOND_RULE_S: f64 = 2.0;

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LossParams {
    pub lambda1: f64,
    pub lambda2: f64,
}

impl Default for LossParams {
    fn default() -> Self {
        LossParams {
            lambda1: 0.05,
            lambda2: 0.05,
        }
    }
}

/// Mean and standard deviation used to normalize one variable.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: f64,
    pub std: f64,
}

impl NormStats {
    pub fn apply(&self, x: f64) -> f64 {
        (x - self.mean) / self.std
    }
    pub fn unapply(&self, x: f64) -> f64 {
        x * self.std + self.mean
    }
}

/// Normalization statistics for each observation order. Every order is
/// normalized independently; the zeroth-order statistics additionally set
/// the physical scale of the derivative penalties so that all loss terms
/// are commensurate with the (unnormalized) observation MSE.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct OrderNorms {
    pub d0: NormStats,
    pub d1: NormStats,
    pub d2: NormStats,
}

impl Default for OrderNorms {
    fn default() -> Self {
        let unit = NormStats { mean: 0.0, std: 1.0 };
        OrderNorms { d0: unit, d1: unit, d2: unit }
    }
}

/// Population statistics of a sample vector. Statistics are meant to be
/// computed from observed inputs only, never from ground truth.
pub fn compute_norm_stats(values: &[f64]) -> Result<NormStats> {
    if values.is_empty() {
        return Err(OsseError::InvalidArgument("no samples for statistics".into()));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    if var <= 0.0 {
        return Err(OsseError::ZeroVariance);
    }
    Ok(NormStats {
        mean,
        std: var.sqrt(),
    })
}

/// Derivative normalization statistics from an observation set.
pub fn derivative_norms(obs: &TrackSet) -> Result<OrderNorms> {
    let d1 = along_track_derivative(obs, TWO_SECOND_RULE_S);
    let d2 = second_derivative(&d1, TWO_SECOND_RULE_S)?;
    Ok(OrderNorms {
        d0: compute_norm_stats(&obs.values())?,
        d1: compute_norm_stats(&d1.values())?,
        d2: compute_norm_stats(&d2.values())?,
    })
}

/// Mean squared difference over every grid cell.
pub fn loss_sup(truth: &Field, est: &Field) -> Result<f64> {
    if truth.spec != est.spec {
        return Err(OsseError::ShapeMismatch("truth and estimate grids differ".into()));
    }
    let n = truth.values.len() as f64;
    Ok(truth
        .values
        .iter()
        .zip(est.values.iter())
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        / n)
}

/// Mean squared residual between the observations and the estimate
/// resampled on the observation support.
pub fn loss_unsup(obs: &TrackSet, est: &Field) -> Result<f64> {
    if obs.is_empty() {
        return Err(OsseError::NoConstraintPoints);
    }
    let est_vals = sample_trilinear(est, obs)?;
    let n = obs.len() as f64;
    Ok(obs
        .values()
        .iter()
        .zip(&est_vals)
        .map(|(y, h)| (y - h).powi(2))
        .sum::<f64>()
        / n)
}

fn derivative_term(
    obs_d: &DerivedTrackSet,
    est_d: &[f64],
    lambda: f64,
    norm: &NormStats,
    scale: &NormStats,
) -> f64 {
    if obs_d.is_empty() || lambda == 0.0 {
        return 0.0;
    }
    // Normalized-residual MSE, rescaled by the zeroth-order variance so
    // the term is commensurate with the unnormalized observation MSE.
    let n = obs_d.len() as f64;
    lambda * (scale.std * scale.std)
        * obs_d
            .values()
            .iter()
            .zip(est_d)
            .map(|(o, e)| ((o - e) / norm.std).powi(2))
            .sum::<f64>()
        / n
}

/// Observation loss plus normalized first- and second-derivative MSE
/// terms. Degrades gracefully to `loss_unsup` when no valid derivative
/// pairs exist.
pub fn loss_unsup_reg(
    obs: &TrackSet,
    est: &Field,
    p: &LossParams,
    norms: &OrderNorms,
) -> Result<f64> {
    let base = loss_unsup(obs, est)?;
    let d1o = along_track_derivative(obs, TWO_SECOND_RULE_S);
    if d1o.is_empty() {
        log::warn!("no valid derivative pairs; falling back to the plain observation loss");
        return Ok(base);
    }
    let est_vals = sample_trilinear(est, obs)?;
    let d1e = d1o.apply(&est_vals)?;
    let d2o = second_derivative(&d1o, TWO_SECOND_RULE_S)?;
    let d2e = d2o.apply(&d1e)?;
    Ok(base
        + derivative_term(&d1o, &d1e, p.lambda1, &norms.d1, &norms.d0)
        + derivative_term(&d2o, &d2e, p.lambda2, &norms.d2, &norms.d0))
}

/// Which objective a loss/gradient evaluation uses.
#[derive(Debug, Clone)]
pub enum LossSpec<'a> {
    Sup { truth: &'a Field },
    Unsup,
    UnsupReg { params: LossParams, norms: OrderNorms },
}

/// Loss value and its gradient with respect to every cell of `est`,
/// assembled through the sampling and differencing transposes.
pub fn grad_loss(obs: &TrackSet, est: &Field, which: &LossSpec) -> Result<(f64, Field)> {
    match which {
        LossSpec::Sup { truth } => {
            let value = loss_sup(truth, est)?;
            let n = est.values.len() as f64;
            let mut grad = Field::zeros(est.spec, crate::grid::Units::Dimensionless);
            for ((g, e), t) in grad
                .values
                .iter_mut()
                .zip(est.values.iter())
                .zip(truth.values.iter())
            {
                *g = 2.0 * (e - t) / n;
            }
            Ok((value, grad))
        }
        LossSpec::Unsup => {
            if obs.is_empty() {
                return Err(OsseError::NoConstraintPoints);
            }
            let est_vals = sample_trilinear(est, obs)?;
            let n = obs.len() as f64;
            let y = obs.values();
            let value = y
                .iter()
                .zip(&est_vals)
                .map(|(y, h)| (y - h).powi(2))
                .sum::<f64>()
                / n;
            let coeffs: Vec<f64> = y
                .iter()
                .zip(&est_vals)
                .map(|(y, h)| 2.0 * (h - y) / n)
                .collect();
            let grad = scatter_adjoint(obs, &coeffs, &est.spec)?;
            Ok((value, grad))
        }
        LossSpec::UnsupReg { params, norms } => {
            if obs.is_empty() {
                return Err(OsseError::NoConstraintPoints);
            }
            let est_vals = sample_trilinear(est, obs)?;
            let n = obs.len() as f64;
            let y = obs.values();
            let mut value = y
                .iter()
                .zip(&est_vals)
                .map(|(y, h)| (y - h).powi(2))
                .sum::<f64>()
                / n;
            let mut sample_grad: Vec<f64> = y
                .iter()
                .zip(&est_vals)
                .map(|(y, h)| 2.0 * (h - y) / n)
                .collect();

            let d1o = along_track_derivative(obs, TWO_SECOND_RULE_S);
            if d1o.is_empty() {
                log::warn!("no valid derivative pairs; gradient reduces to the observation term");
            } else {
                let scale2 = norms.d0.std * norms.d0.std;
                let d1e = d1o.apply(&est_vals)?;
                value += derivative_term(&d1o, &d1e, params.lambda1, &norms.d1, &norms.d0);
                let mut d1_coeffs = vec![0.0; d1o.len()];
                if params.lambda1 > 0.0 {
                    let n1 = d1o.len() as f64;
                    let s2 = norms.d1.std * norms.d1.std;
                    for ((c, o), e) in d1_coeffs.iter_mut().zip(d1o.values()).zip(&d1e) {
                        *c = 2.0 * params.lambda1 * scale2 * (e - o) / (n1 * s2);
                    }
                }
                let d2o = second_derivative(&d1o, TWO_SECOND_RULE_S)?;
                if !d2o.is_empty() && params.lambda2 > 0.0 {
                    let d2e = d2o.apply(&d1e)?;
                    value += derivative_term(&d2o, &d2e, params.lambda2, &norms.d2, &norms.d0);
                    let n2 = d2o.len() as f64;
                    let s2 = norms.d2.std * norms.d2.std;
                    let d2_coeffs: Vec<f64> = d2o
                        .values()
                        .iter()
                        .zip(&d2e)
                        .map(|(o, e)| 2.0 * params.lambda2 * scale2 * (e - o) / (n2 * s2))
                        .collect();
                    let back = d2o.apply_transpose(&d2_coeffs)?;
                    for (c, b) in d1_coeffs.iter_mut().zip(&back) {
                        *c += b;
                    }
                }
                let back = d1o.apply_transpose(&d1_coeffs)?;
                for (g, b) in sample_grad.iter_mut().zip(&back) {
                    *g += b;
                }
            }
            let grad = scatter_adjoint(obs, &sample_grad, &est.spec)?;
            Ok((value, grad))
        }
    }
}

/// Removes one satellite from the inputs while keeping the full set as
/// the constraint, mirroring the withheld-satellite protocol.
pub fn leave_one_satellite(obs: &TrackSet, held_out: u32) -> Result<(TrackSet, TrackSet)> {
    if !obs.sat_ids().contains(&held_out) {
        return Err(OsseError::InvalidArgument(format!(
            "satellite {held_out} not present in the observation set"
        )));
    }
    let input: Vec<_> = obs
        .samples()
        .iter()
        .filter(|s| s.sat_id != held_out)
        .copied()
        .collect();
    Ok((TrackSet::new(input), obs.clone()))
}
