//! Geostrophic diagnostics: Coriolis factor, surface currents from SSH,
//! relative vorticity.

use serde::{Deserialize, Serialize};

use crate::error::{OsseError, Result};
use crate::grid::{Field, GridSpec, Units};

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PhysConsts {
    /// Gravitational acceleration, m/s^2.
    pub g: f64,
    /// Earth rotation rate, rad/s.
    pub omega_r: f64,
}

impl Default for PhysConsts {
    fn default() -> Self {
        PhysConsts {
            g: 9.81,
            omega_r: 7.2921159e-5,
        }
    }
}

/// Paired eastward/northward current components on one grid.
#[derive(Debug, Clone, PartialEq)]
pub struct VelocityField {
    pub u: Field,
    pub v: Field,
}

impl VelocityField {
    pub fn spec(&self) -> &GridSpec {
        &self.u.spec
    }

    pub fn validate(&self) -> Result<()> {
        self.u.validate()?;
        self.v.validate()?;
        if self.u.spec != self.v.spec {
            return Err(OsseError::ShapeMismatch(
                "u and v components must share one grid spec".into(),
            ));
        }
        Ok(())
    }
}

/// Coriolis factor f = 2 Omega_r sin(lat). Warns below 5 degrees of
/// latitude where the geostrophic approximation breaks down.
pub fn coriolis(lat_deg: f64, c: &PhysConsts) -> f64 {
    if lat_deg.abs() < 5.0 {
        log::warn!("geostrophy unreliable: |lat| = {} < 5 degrees", lat_deg.abs());
    }
    2.0 * c.omega_r * lat_deg.to_radians().sin()
}

/// Second-order derivative of a 1-D slice with uniform spacing `h`:
/// centered in the interior, one-sided at the two ends.
fn deriv_line(get: impl Fn(usize) -> f64, n: usize, h: f64, out: &mut [f64]) {
    debug_assert!(n >= 3 && out.len() == n);
    out[0] = (-3.0 * get(0) + 4.0 * get(1) - get(2)) / (2.0 * h);
    for i in 1..n - 1 {
        out[i] = (get(i + 1) - get(i - 1)) / (2.0 * h);
    }
    out[n - 1] = (3.0 * get(n - 1) - 4.0 * get(n - 2) + get(n - 3)) / (2.0 * h);
}

fn check_spatial_size(spec: &GridSpec) -> Result<()> {
    if spec.nlat < 3 || spec.nlon < 3 {
        return Err(OsseError::InvalidArgument(
            "spatial derivatives need at least 3 points per axis".into(),
        ));
    }
    Ok(())
}

/// Surface geostrophic currents from SSH:
/// u = -(g/f) dh/dy, v = (g/f) dh/dx, with f evaluated per grid row.
pub fn geostrophic_currents(ssh: &Field, c: &PhysConsts) -> Result<VelocityField> {
    ssh.validate()?;
    check_spatial_size(&ssh.spec)?;
    let spec = ssh.spec;
    for i in 0..spec.nlat {
        if coriolis_quiet(spec.lat(i), c) == 0.0 {
            return Err(OsseError::Numerical(format!(
                "Coriolis factor vanishes at latitude {}",
                spec.lat(i)
            )));
        }
    }
    let mut u = Field::zeros(spec, Units::MetersPerSecond);
    let mut v = Field::zeros(spec, Units::MetersPerSecond);
    let dy = spec.dy_m();
    let mut line = vec![0.0; spec.nlat.max(spec.nlon)];
    for k in 0..spec.nt {
        // v = (g/f) dh/dx along each row
        for i in 0..spec.nlat {
            let f_cor = coriolis_quiet(spec.lat(i), c);
            let dx = spec.dx_m(spec.lat(i));
            deriv_line(
                |j| ssh.values[[k, i, j]],
                spec.nlon,
                dx,
                &mut line[..spec.nlon],
            );
            for j in 0..spec.nlon {
                v.values[[k, i, j]] = c.g / f_cor * line[j];
            }
        }
        // u = -(g/f) dh/dy along each column
        for j in 0..spec.nlon {
            deriv_line(
                |i| ssh.values[[k, i, j]],
                spec.nlat,
                dy,
                &mut line[..spec.nlat],
            );
            for i in 0..spec.nlat {
                let f_cor = coriolis_quiet(spec.lat(i), c);
                u.values[[k, i, j]] = -c.g / f_cor * line[i];
            }
        }
    }
    Ok(VelocityField { u, v })
}

fn coriolis_quiet(lat_deg: f64, c: &PhysConsts) -> f64 {
    2.0 * c.omega_r * lat_deg.to_radians().sin()
}

/// Relative vorticity xi = dv/dx - du/dy, optionally normalized by the
/// latitude-dependent Coriolis factor.
pub fn relative_vorticity(vel: &VelocityField, normalize_by_f: bool, c: &PhysConsts) -> Result<Field> {
    vel.validate()?;
    check_spatial_size(vel.spec())?;
    let spec = *vel.spec();
    let mut xi = Field::zeros(spec, Units::Dimensionless);
    let dy = spec.dy_m();
    let mut line = vec![0.0; spec.nlat.max(spec.nlon)];
    for k in 0..spec.nt {
        for i in 0..spec.nlat {
            let dx = spec.dx_m(spec.lat(i));
            deriv_line(
                |j| vel.v.values[[k, i, j]],
                spec.nlon,
                dx,
                &mut line[..spec.nlon],
            );
            for j in 0..spec.nlon {
                xi.values[[k, i, j]] = line[j];
            }
        }
        for j in 0..spec.nlon {
            deriv_line(
                |i| vel.u.values[[k, i, j]],
                spec.nlat,
                dy,
                &mut line[..spec.nlat],
            );
            for i in 0..spec.nlat {
                xi.values[[k, i, j]] -= line[i];
            }
        }
        if normalize_by_f {
            for i in 0..spec.nlat {
                let f_cor = coriolis_quiet(spec.lat(i), c);
                for j in 0..spec.nlon {
                    xi.values[[k, i, j]] /= f_cor;
                }
            }
        }
    }
    Ok(xi)
}
