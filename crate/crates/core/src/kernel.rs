//! Separable spatio-temporal covariance: a squared-exponential kernel in
//! space multiplied by an exponential (Matérn-1/2) kernel in time.
//!
//! ```text
//! k(p, p', t, t') = σ² · exp( −‖p − p'‖² / (2 ℓ_s²) − |t − t'| / ℓ_t )
//! ```

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};

/// Diagonal jitter added before every Cholesky factorization.
pub const JITTER: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Hyperparams {
    /// Signal variance σ².
    pub sigma2: f64,
    /// Spatial length scale in meters.
    pub ell_s: f64,
    /// Temporal length scale in seconds.
    pub ell_t: f64,
    /// Measurement noise variance σ_n².
    pub noise_var: f64,
}

impl Hyperparams {
    pub fn new(sigma2: f64, ell_s: f64, ell_t: f64, noise_var: f64) -> Result<Self> {
        let h = Self {
            sigma2,
            ell_s,
            ell_t,
            noise_var,
        };
        h.validate()?;
        Ok(h)
    }

    pub fn validate(&self) -> Result<()> {
        ensure_finite(
            "hyperparameters",
            &[self.sigma2, self.ell_s, self.ell_t, self.noise_var],
        )?;
        if self.sigma2 <= 0.0 || self.ell_s <= 0.0 || self.ell_t <= 0.0 {
            return Err(Error::Domain(format!(
                "sigma2, ell_s and ell_t must be positive (got {}, {}, {})",
                self.sigma2, self.ell_s, self.ell_t
            )));
        }
        if self.noise_var < 0.0 {
            return Err(Error::Domain(format!(
                "noise_var must be non-negative (got {})",
                self.noise_var
            )));
        }
        Ok(())
    }
}

/// A location in the workspace paired with a time stamp.
#[derive(Debug, Clone, PartialEq)]
pub struct SpaceTime {
    pub pos: Vec<f64>,
    pub t: f64,
}

impl SpaceTime {
    pub fn new(pos: impl Into<Vec<f64>>, t: f64) -> Self {
        Self { pos: pos.into(), t }
    }
}

#[inline]
fn sq_dist(p: &[f64], q: &[f64]) -> f64 {
    p.iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// Kernel value without input validation; callers guarantee finite inputs
/// of equal dimension and valid hyperparameters.
#[inline]
pub(crate) fn k_raw(p: &[f64], q: &[f64], t: f64, s: f64, h: &Hyperparams) -> f64 {
    h.sigma2 * (-sq_dist(p, q) / (2.0 * h.ell_s * h.ell_s) - (t - s).abs() / h.ell_t).exp()
}

fn check_pair(p: &[f64], p_prime: &[f64], t: f64, t_prime: f64) -> Result<()> {
    if p.len() != p_prime.len() {
        return Err(Error::Domain(format!(
            "point dimensions differ ({} vs {})",
            p.len(),
            p_prime.len()
        )));
    }
    ensure_finite("p", p)?;
    ensure_finite("p_prime", p_prime)?;
    ensure_finite("time", &[t, t_prime])
}

pub fn eval_kernel(
    p: &[f64],
    p_prime: &[f64],
    t: f64,
    t_prime: f64,
    h: &Hyperparams,
) -> Result<f64> {
    h.validate()?;
    check_pair(p, p_prime, t, t_prime)?;
    Ok(k_raw(p, p_prime, t, t_prime, h))
}

/// ∂k/∂p, the gradient of the kernel with respect to its first location.
pub fn kernel_grad_position(
    p: &[f64],
    p_prime: &[f64],
    t: f64,
    t_prime: f64,
    h: &Hyperparams,
) -> Result<Vec<f64>> {
    h.validate()?;
    check_pair(p, p_prime, t, t_prime)?;
    let mut out = vec![0.0; p.len()];
    grad_raw(p, p_prime, t, t_prime, h, &mut out);
    Ok(out)
}

#[inline]
pub(crate) fn grad_raw(p: &[f64], q: &[f64], t: f64, s: f64, h: &Hyperparams, out: &mut [f64]) {
    let k = k_raw(p, q, t, s, h);
    let inv = 1.0 / (h.ell_s * h.ell_s);
    for ((o, a), b) in out.iter_mut().zip(p).zip(q) {
        *o = -(a - b) * inv * k;
    }
}

fn check_points(points: &[SpaceTime]) -> Result<()> {
    let Some(first) = points.first() else {
        return Ok(());
    };
    let dim = first.pos.len();
    for (idx, pt) in points.iter().enumerate() {
        if pt.pos.len() != dim {
            return Err(Error::Domain(format!(
                "point {idx} has dimension {} (expected {dim})",
                pt.pos.len()
            )));
        }
        ensure_finite("point", &pt.pos)?;
        ensure_finite("time", &[pt.t])?;
    }
    Ok(())
}

/// Gram matrix over `points`; `add_noise` places `noise_var` on the diagonal.
pub fn gram(points: &[SpaceTime], h: &Hyperparams, add_noise: bool) -> Result<DMatrix<f64>> {
    if points.is_empty() {
        return Err(Error::Precondition("gram needs at least one point".into()));
    }
    h.validate()?;
    check_points(points)?;
    let n = points.len();
    let mut k = DMatrix::zeros(n, n);
    for a in 0..n {
        k[(a, a)] = h.sigma2 + if add_noise { h.noise_var } else { 0.0 };
        for b in 0..a {
            let v = k_raw(&points[a].pos, &points[b].pos, points[a].t, points[b].t, h);
            k[(a, b)] = v;
            k[(b, a)] = v;
        }
    }
    Ok(k)
}

/// Cross-covariance with rows indexed by `rows` and columns by `cols`.
pub fn cross_gram(rows: &[SpaceTime], cols: &[SpaceTime], h: &Hyperparams) -> Result<DMatrix<f64>> {
    h.validate()?;
    check_points(rows)?;
    check_points(cols)?;
    if let (Some(r), Some(c)) = (rows.first(), cols.first()) {
        if r.pos.len() != c.pos.len() {
            return Err(Error::Domain("row and column points differ in dimension".into()));
        }
    }
    Ok(DMatrix::from_fn(rows.len(), cols.len(), |a, b| {
        k_raw(&rows[a].pos, &cols[b].pos, rows[a].t, cols[b].t, h)
    }))
}
