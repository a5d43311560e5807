//! Exhaustive reference for the informative-path problem on a small grid.
//!
//! Two selections are computed over every `H`-step path of grid locations:
//! the path minimizing the entropy left in the grid's latent variables
//! once the path is observed, and the path maximizing the entropy of its own
//! measurements. By the entropy chain rule they sum to a path-independent
//! constant, so both must pick the same path.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::gp::{entropy_logdet, Dataset, GpModel};
use crate::kernel::{Hyperparams, SpaceTime};
use crate::swarm::Vec2;

/// Largest number of candidate paths the oracle will enumerate.
pub const MAX_ORACLE_PATHS: u128 = 100_000;

#[derive(Debug, Clone, PartialEq)]
pub struct CandidateGrid {
    pub locations: Vec<Vec2>,
    /// Sorted; the latent field is considered at every location and time.
    pub times: Vec<f64>,
    /// The time of each path step, one per horizon step; each must appear in
    /// `times`.
    pub horizon_times: Vec<f64>,
}

impl CandidateGrid {
    pub fn validate(&self) -> Result<()> {
        if self.locations.is_empty() || self.horizon_times.is_empty() {
            return Err(Error::Precondition("candidate grid needs locations and horizon times".into()));
        }
        if self.times.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::Precondition("grid times must be strictly ascending".into()));
        }
        if self.times.last() != self.horizon_times.last() {
            return Err(Error::Precondition("last grid time must equal the last horizon time".into()));
        }
        if self.horizon_times.iter().any(|t| !self.times.contains(t)) {
            return Err(Error::Precondition("every horizon time must be a grid time".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleOutcome {
    /// Location indices of the path minimizing the remaining conditional entropy.
    pub argmin_conditional: Vec<usize>,
    /// Location indices of the path maximizing the measurement entropy.
    pub argmax_measurement: Vec<usize>,
    pub min_conditional_entropy: f64,
    pub max_measurement_entropy: f64,
    pub paths_evaluated: usize,
}

impl OracleOutcome {
    pub fn agree(&self) -> bool {
        self.argmin_conditional == self.argmax_measurement
    }

    pub fn path(&self, grid: &CandidateGrid) -> Vec<Vec2> {
        self.argmax_measurement.iter().map(|&k| grid.locations[k]).collect()
    }
}

fn better(candidate: f64, incumbent: f64, lower: bool) -> bool {
    if !incumbent.is_finite() {
        return true;
    }
    let tol = 1e-9 * (1.0 + incumbent.abs());
    if lower {
        candidate < incumbent - tol
    } else {
        candidate > incumbent + tol
    }
}

/// Enumerates all `|P|^H` paths, breaking ties by enumeration order
/// (values within a relative 1e-9 count as equal).
pub fn oracle_best_path(grid: &CandidateGrid, train: &Dataset, h: &Hyperparams, horizon: usize, prior_mean: f64) -> Result<OracleOutcome> {
    grid.validate()?;
    if horizon != grid.horizon_times.len() {
        return Err(Error::Precondition(format!(
            "horizon {horizon} but {} horizon times",
            grid.horizon_times.len()
        )));
    }
    let np = grid.locations.len();
    let paths = (np as u128).checked_pow(horizon as u32).unwrap_or(u128::MAX);
    if paths > MAX_ORACLE_PATHS {
        return Err(Error::Budget {
            paths,
            limit: MAX_ORACLE_PATHS,
        });
    }
    let model = GpModel::fit(train, h, prior_mean)?;

    // Latent variables U ordered time-major: index = t·|P| + p.
    let nt = grid.times.len();
    let query: Vec<SpaceTime> = grid
        .times
        .iter()
        .flat_map(|&t| grid.locations.iter().map(move |p| SpaceTime::new(vec![p.x, p.y], t)))
        .collect();
    let cov_u = model.predict(&query)?.cov;
    let nu = np * nt;
    let tidx: Vec<usize> = grid
        .horizon_times
        .iter()
        .map(|t| grid.times.iter().position(|s| s == t).expect("validated"))
        .collect();

    let mut best_cond = (f64::INFINITY, Vec::new());
    let mut best_meas = (f64::NEG_INFINITY, Vec::new());
    let mut digits = vec![0usize; horizon];
    for _ in 0..paths {
        let idx: Vec<usize> = digits.iter().zip(&tidx).map(|(&p, &t)| t * np + p).collect();
        let path = digits.clone();

        // Measurement entropy: noisy observations of the path variables.
        let mut s = DMatrix::from_fn(horizon, horizon, |a, b| cov_u[(idx[a], idx[b])]);
        for a in 0..horizon {
            s[(a, a)] += h.noise_var;
        }
        let meas = entropy_logdet(&s)?;

        // Entropy of every latent variable once those observations are known.
        let c_up = DMatrix::from_fn(nu, horizon, |a, b| cov_u[(a, idx[b])]);
        let chol = crate::gp::factor(s.clone(), "path observation covariance")?;
        let schur = &cov_u - &c_up * chol.solve(&c_up.transpose());
        let cond = entropy_logdet(&((&schur + schur.transpose()) * 0.5))?;
        if better(cond, best_cond.0, true) {
            best_cond = (cond, path.clone());
        }
        if better(meas, best_meas.0, false) {
            best_meas = (meas, path);
        }

        for d in digits.iter_mut().rev() {
            *d += 1;
            if *d < np {
                break;
            }
            *d = 0;
        }
    }

    Ok(OracleOutcome {
        argmin_conditional: best_cond.1,
        argmax_measurement: best_meas.1,
        min_conditional_entropy: best_cond.0,
        max_measurement_entropy: best_meas.0,
        paths_evaluated: paths as usize,
    })
}
