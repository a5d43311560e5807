//! Exact Gaussian-process regression over the spatio-temporal kernel.
//!
//! Every solve goes through a jittered Cholesky factor; no explicit inverse
//! of the data covariance is ever formed.

use std::f64::consts::{E, PI};

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{ensure_finite, Error, Result};
use crate::kernel::{self, Hyperparams, SpaceTime, JITTER};

/// Identifies where a measurement came from: `(robot or sensor id, step or row)`.
pub type Provenance = (u32, u32);

/// A set of measurements keyed by provenance, stored as parallel columns
/// ordered by key.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    pub positions: Vec<Vec<f64>>,
    pub timestamps: Vec<f64>,
    pub values: Vec<f64>,
    pub provenance: Vec<Provenance>,
}

/// One measurement triple together with its key.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub position: Vec<f64>,
    pub timestamp: f64,
    pub value: f64,
    pub key: Provenance,
}

impl Dataset {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a dataset from parallel columns, validating the invariants.
    pub fn from_parts(
        positions: Vec<Vec<f64>>,
        timestamps: Vec<f64>,
        values: Vec<f64>,
        provenance: Vec<Provenance>,
    ) -> Result<Self> {
        let n = positions.len();
        if timestamps.len() != n || values.len() != n || provenance.len() != n {
            return Err(Error::Integrity(format!(
                "column lengths differ: {} positions, {} timestamps, {} values, {} keys",
                n,
                timestamps.len(),
                values.len(),
                provenance.len()
            )));
        }
        let mut ds = Dataset::new();
        for (((position, timestamp), value), key) in
            positions.into_iter().zip(timestamps).zip(values).zip(provenance)
        {
            ds.insert(Sample {
                position,
                timestamp,
                value,
                key,
            })?;
        }
        Ok(ds)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn dim(&self) -> Option<usize> {
        self.positions.first().map(Vec::len)
    }

    pub fn contains(&self, key: Provenance) -> bool {
        self.provenance.binary_search(&key).is_ok()
    }

    pub fn get(&self, idx: usize) -> Sample {
        Sample {
            position: self.positions[idx].clone(),
            timestamp: self.timestamps[idx],
            value: self.values[idx],
            key: self.provenance[idx],
        }
    }

    pub fn samples(&self) -> impl Iterator<Item = Sample> + '_ {
        (0..self.len()).map(|i| self.get(i))
    }

    /// Inserts a sample under set semantics. Re-inserting an identical sample
    /// is a no-op; a different sample under an existing key is an integrity
    /// error. Returns whether the dataset grew.
    pub fn insert(&mut self, s: Sample) -> Result<bool> {
        ensure_finite("position", &s.position)?;
        ensure_finite("value", &[s.value, s.timestamp])?;
        if s.timestamp < 0.0 {
            return Err(Error::Integrity(format!(
                "negative timestamp {} for key {:?}",
                s.timestamp, s.key
            )));
        }
        if let Some(d) = self.dim() {
            if d != s.position.len() {
                return Err(Error::Integrity(format!(
                    "position dimension {} does not match dataset dimension {d}",
                    s.position.len()
                )));
            }
        }
        match self.provenance.binary_search(&s.key) {
            Ok(idx) => {
                let same = self.positions[idx] == s.position
                    && self.timestamps[idx].to_bits() == s.timestamp.to_bits()
                    && self.values[idx].to_bits() == s.value.to_bits();
                if same {
                    Ok(false)
                } else {
                    Err(Error::Integrity(format!(
                        "conflicting values under provenance key {:?}",
                        s.key
                    )))
                }
            }
            Err(idx) => {
                self.positions.insert(idx, s.position);
                self.timestamps.insert(idx, s.timestamp);
                self.values.insert(idx, s.value);
                self.provenance.insert(idx, s.key);
                Ok(true)
            }
        }
    }

    /// Keeps at most `max_points` samples, dropping the oldest timestamps
    /// first (ties by key).
    pub fn truncate_oldest(&mut self, max_points: usize) {
        if self.len() <= max_points {
            return;
        }
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.sort_by(|&a, &b| {
            self.timestamps[a]
                .total_cmp(&self.timestamps[b])
                .then(self.provenance[a].cmp(&self.provenance[b]))
        });
        let mut keep = vec![true; self.len()];
        for &idx in &order[..self.len() - max_points] {
            keep[idx] = false;
        }
        let mut out = Dataset::new();
        for (idx, k) in keep.into_iter().enumerate() {
            if k {
                // Already sorted by key and unique, so a plain push is valid.
                out.positions.push(self.positions[idx].clone());
                out.timestamps.push(self.timestamps[idx]);
                out.values.push(self.values[idx]);
                out.provenance.push(self.provenance[idx]);
            }
        }
        *self = out;
    }

    pub fn points(&self) -> Vec<SpaceTime> {
        self.positions
            .iter()
            .zip(&self.timestamps)
            .map(|(p, &t)| SpaceTime::new(p.clone(), t))
            .collect()
    }

    pub fn mean_value(&self) -> Option<f64> {
        (!self.is_empty()).then(|| self.values.iter().sum::<f64>() / self.len() as f64)
    }
}

/// Gaussian posterior over a set of query locations.
#[derive(Debug, Clone, PartialEq)]
pub struct Posterior {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl Posterior {
    pub fn std(&self) -> Vec<f64> {
        self.cov.diagonal().iter().map(|v| v.max(0.0).sqrt()).collect()
    }
}

/// Adds [`JITTER`] to the diagonal and factors.
pub(crate) fn factor(mut k: DMatrix<f64>, what: &str) -> Result<Cholesky<f64, Dyn>> {
    let n = k.nrows();
    for i in 0..n {
        k[(i, i)] += JITTER;
    }
    let min_diag = k.diagonal().min();
    let max_diag = k.diagonal().max();
    k.cholesky().ok_or_else(|| {
        Error::Numeric(format!(
            "Cholesky factorization of {what} ({n}x{n}, diagonal range [{min_diag:.3e}, {max_diag:.3e}]) failed: matrix not positive definite"
        ))
    })
}

fn logdet_from_chol(chol: &Cholesky<f64, Dyn>) -> f64 {
    2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>()
}

/// A GP conditioned on a training set, with the data covariance factored once.
#[derive(Debug, Clone)]
pub struct GpModel {
    train: Vec<SpaceTime>,
    h: Hyperparams,
    prior_mean: f64,
    chol: Cholesky<f64, Dyn>,
    alpha: DVector<f64>,
    residual: DVector<f64>,
}

impl GpModel {
    pub fn fit(train: &Dataset, h: &Hyperparams, prior_mean: f64) -> Result<Self> {
        if train.is_empty() {
            return Err(Error::Precondition("training dataset is empty".into()));
        }
        ensure_finite("prior_mean", &[prior_mean])?;
        let pts = train.points();
        let chol = factor(kernel::gram(&pts, h, true)?, "data covariance")?;
        let residual = DVector::from_iterator(train.len(), train.values.iter().map(|y| y - prior_mean));
        let alpha = chol.solve(&residual);
        Ok(Self {
            train: pts,
            h: *h,
            prior_mean,
            chol,
            alpha,
            residual,
        })
    }

    pub fn hyperparams(&self) -> &Hyperparams {
        &self.h
    }

    pub fn prior_mean(&self) -> f64 {
        self.prior_mean
    }

    pub fn len(&self) -> usize {
        self.train.len()
    }

    pub fn is_empty(&self) -> bool {
        self.train.is_empty()
    }

    fn cross(&self, query: &[SpaceTime]) -> Result<DMatrix<f64>> {
        if let Some(q) = query.first() {
            if q.pos.len() != self.train[0].pos.len() {
                return Err(Error::Domain(format!(
                    "query dimension {} does not match training dimension {}",
                    q.pos.len(),
                    self.train[0].pos.len()
                )));
            }
        }
        kernel::cross_gram(&self.train, query, &self.h)
    }

    pub fn predict(&self, query: &[SpaceTime]) -> Result<Posterior> {
        if query.is_empty() {
            return Err(Error::Precondition("query set is empty".into()));
        }
        let k_dh = self.cross(query)?;
        let mean = k_dh.tr_mul(&self.alpha).add_scalar(self.prior_mean);
        let mut v = k_dh;
        self.chol.l_dirty().solve_lower_triangular_mut(&mut v);
        let cov = kernel::gram(query, &self.h, false)? - v.tr_mul(&v);
        // Restore exact symmetry lost to rounding.
        let cov = (&cov + cov.transpose()) * 0.5;
        Ok(Posterior { mean, cov })
    }

    /// Posterior mean and standard deviation at each query, without the
    /// full covariance.
    pub fn predict_marginals(&self, query: &[SpaceTime]) -> Result<(Vec<f64>, Vec<f64>)> {
        if query.is_empty() {
            return Ok((Vec::new(), Vec::new()));
        }
        let k_dh = self.cross(query)?;
        let mean: Vec<f64> = k_dh
            .tr_mul(&self.alpha)
            .iter()
            .map(|m| m + self.prior_mean)
            .collect();
        let mut v = k_dh;
        self.chol.l_dirty().solve_lower_triangular_mut(&mut v);
        let std = v
            .column_iter()
            .map(|c| (self.h.sigma2 - c.norm_squared()).max(0.0).sqrt())
            .collect();
        Ok((mean, std))
    }

    pub fn predict_mean(&self, query: &SpaceTime) -> Result<f64> {
        let k = self.cross(std::slice::from_ref(query))?;
        Ok(self.prior_mean + k.column(0).dot(&self.alpha))
    }

    pub fn log_marginal_likelihood(&self) -> f64 {
        let n = self.train.len() as f64;
        -0.5 * self.residual.dot(&self.alpha)
            - 0.5 * logdet_from_chol(&self.chol)
            - 0.5 * n * (2.0 * PI).ln()
    }

    /// `−logdet Σ̂` of the posterior covariance at `candidate` and its
    /// gradient with respect to every candidate position (point-major).
    pub fn neg_logdet_and_grad(&self, candidate: &[SpaceTime]) -> Result<(f64, Vec<f64>)> {
        if candidate.is_empty() {
            return Err(Error::Precondition("candidate path is empty".into()));
        }
        kernel_dims_match(candidate)?;
        let k_dh = self.cross(candidate)?;
        // A = Σ_D⁻¹ Σ_DH
        let a = self.chol.solve(&k_dh);
        let cov = kernel::gram(candidate, &self.h, false)? - k_dh.tr_mul(&a);
        let cov = (&cov + cov.transpose()) * 0.5;
        let chol = factor(cov, "posterior covariance")?;
        let f = -logdet_from_chol(&chol);
        let m = candidate.len();
        // W = Σ̂⁻¹ is needed in full for the trace identity.
        let w = chol.inverse();
        let aw = &a * &w;
        let dim = candidate[0].pos.len();
        let mut grad = vec![0.0; m * dim];
        let mut g = vec![0.0; dim];
        for i in 0..m {
            let (xi, ti) = (&candidate[i].pos, candidate[i].t);
            let out = &mut grad[i * dim..(i + 1) * dim];
            for j in 0..m {
                if j == i {
                    continue;
                }
                kernel::grad_raw(xi, &candidate[j].pos, ti, candidate[j].t, &self.h, &mut g);
                for (o, gv) in out.iter_mut().zip(&g) {
                    *o -= 2.0 * w[(i, j)] * gv;
                }
            }
            for (r, d) in self.train.iter().enumerate() {
                kernel::grad_raw(xi, &d.pos, ti, d.t, &self.h, &mut g);
                for (o, gv) in out.iter_mut().zip(&g) {
                    *o += 2.0 * aw[(r, i)] * gv;
                }
            }
        }
        Ok((f, grad))
    }
}

fn kernel_dims_match(points: &[SpaceTime]) -> Result<()> {
    let d = points[0].pos.len();
    if points.iter().any(|p| p.pos.len() != d) {
        return Err(Error::Domain("candidate points differ in dimension".into()));
    }
    Ok(())
}

pub fn posterior(
    train: &Dataset,
    query: &[SpaceTime],
    h: &Hyperparams,
    prior_mean: f64,
) -> Result<Posterior> {
    GpModel::fit(train, h, prior_mean)?.predict(query)
}

pub fn log_marginal_likelihood(train: &Dataset, h: &Hyperparams, prior_mean: f64) -> Result<f64> {
    Ok(GpModel::fit(train, h, prior_mean)?.log_marginal_likelihood())
}

/// Grid search over hyperparameters by log marginal likelihood; the first
/// maximizer wins ties. Grid elements whose covariance cannot be factored
/// are skipped.
pub fn fit_hyperparams(train: &Dataset, grid: &[Hyperparams], prior_mean: f64) -> Result<Hyperparams> {
    if grid.is_empty() {
        return Err(Error::Precondition("hyperparameter grid is empty".into()));
    }
    if train.is_empty() {
        return Err(Error::Precondition("training dataset is empty".into()));
    }
    let mut best: Option<(f64, Hyperparams)> = None;
    for h in grid {
        let score = match log_marginal_likelihood(train, h, prior_mean) {
            Ok(v) if v.is_finite() => v,
            _ => continue,
        };
        if best.is_none_or(|(b, _)| score > b) {
            best = Some((score, *h));
        }
    }
    best.map(|(_, h)| h)
        .ok_or_else(|| Error::Numeric("no grid element admits a factorizable covariance".into()))
}

/// Differential entropy of a Gaussian with covariance `cov`:
/// `½ logdet(cov) + (n/2) log(2πe)`.
pub fn entropy_logdet(cov: &DMatrix<f64>) -> Result<f64> {
    if !cov.is_square() || cov.nrows() == 0 {
        return Err(Error::Domain(format!(
            "covariance must be a non-empty square matrix (got {}x{})",
            cov.nrows(),
            cov.ncols()
        )));
    }
    ensure_finite("covariance", cov.as_slice())?;
    let n = cov.nrows() as f64;
    let chol = factor(cov.clone(), "entropy covariance")?;
    Ok(0.5 * logdet_from_chol(&chol) + 0.5 * n * (2.0 * PI * E).ln())
}

pub fn neg_logdet_and_grad(
    train: &Dataset,
    candidate: &[SpaceTime],
    h: &Hyperparams,
) -> Result<(f64, Vec<f64>)> {
    // The posterior covariance does not depend on the mean.
    GpModel::fit(train, h, 0.0)?.neg_logdet_and_grad(candidate)
}

/// Draws one joint sample of the prior at `points`, with measurement noise
/// when `noisy`.
pub fn sample_prior<R: Rng + ?Sized>(
    points: &[SpaceTime],
    h: &Hyperparams,
    prior_mean: f64,
    noisy: bool,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let chol = factor(kernel::gram(points, h, noisy)?, "prior covariance")?;
    let z = DVector::from_iterator(points.len(), (0..points.len()).map(|_| rng.sample::<f64, _>(StandardNormal)));
    let draw = chol.l() * z;
    Ok(draw.iter().map(|v| v + prior_mean).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn st(x: f64, y: f64, t: f64) -> SpaceTime {
        SpaceTime::new(vec![x, y], t)
    }

    fn dataset(points: &[SpaceTime], values: &[f64]) -> Dataset {
        Dataset::from_parts(
            points.iter().map(|p| p.pos.clone()).collect(),
            points.iter().map(|p| p.t).collect(),
            values.to_vec(),
            (0..points.len() as u32).map(|i| (0, i)).collect(),
        )
        .unwrap()
    }

    fn random_points(rng: &mut ChaCha8Rng, n: usize) -> Vec<SpaceTime> {
        (0..n)
            .map(|_| st(rng.random_range(0.0..10.0), rng.random_range(0.0..10.0), rng.random_range(0.0..5.0)))
            .collect()
    }

    /// Joint-Gaussian conditioning through an explicit inverse of the
    /// partitioned joint covariance; independent of the Cholesky path.
    fn brute_force(train: &[SpaceTime], y: &[f64], query: &[SpaceTime], h: &Hyperparams, m: f64) -> (DVector<f64>, DMatrix<f64>) {
        let n = train.len();
        let q = query.len();
        let all: Vec<&SpaceTime> = train.iter().chain(query).collect();
        let mut joint = DMatrix::zeros(n + q, n + q);
        for a in 0..n + q {
            for b in 0..n + q {
                let mut v = h.sigma2
                    * (-((all[a].pos[0] - all[b].pos[0]).powi(2) + (all[a].pos[1] - all[b].pos[1]).powi(2))
                        / (2.0 * h.ell_s.powi(2))
                        - (all[a].t - all[b].t).abs() / h.ell_t)
                        .exp();
                if a == b && a < n {
                    v += h.noise_var;
                }
                joint[(a, b)] = v;
            }
        }
        let s_dd = joint.view((0, 0), (n, n)).into_owned();
        let s_dh = joint.view((0, n), (n, q)).into_owned();
        let s_hh = joint.view((n, n), (q, q)).into_owned();
        let inv = s_dd.try_inverse().unwrap();
        let r = DVector::from_iterator(n, y.iter().map(|v| v - m));
        let mean = s_dh.transpose() * &inv * r;
        (mean.add_scalar(m), s_hh - s_dh.transpose() * inv * s_dh)
    }

    #[test]
    fn single_point_closed_form() {
        let h = Hyperparams::new(1.0, 1.0, 1.0, 1.0).unwrap();
        let p = st(0.0, 0.0, 0.0);
        let post = posterior(&dataset(&[p.clone()], &[2.0]), &[p], &h, 0.0).unwrap();
        assert_relative_eq!(post.mean[0], 1.0, epsilon = 1e-9);
        assert_relative_eq!(post.cov[(0, 0)], 0.5, epsilon = 1e-9);
    }

    #[test]
    fn far_query_recovers_prior() {
        let h = Hyperparams::new(1.7, 1.0, 1.0, 0.1).unwrap();
        let train = dataset(&[st(0.0, 0.0, 0.0), st(1.0, 0.5, 0.3)], &[3.0, -1.0]);
        let post = posterior(&train, &[st(25.0, 25.0, 30.0)], &h, 0.4).unwrap();
        assert_relative_eq!(post.mean[0], 0.4, epsilon = 1e-6);
        assert_relative_eq!(post.cov[(0, 0)], 1.7, epsilon = 1e-6);
    }

    #[test]
    fn matches_partitioned_conditioning() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let h = Hyperparams::new(1.3, 3.0, 2.0, 0.2).unwrap();
        let train = random_points(&mut rng, 5);
        let y: Vec<f64> = (0..5).map(|_| rng.random_range(-2.0..2.0)).collect();
        let query = random_points(&mut rng, 3);
        let post = posterior(&dataset(&train, &y), &query, &h, 0.3).unwrap();
        let (m, c) = brute_force(&train, &y, &query, &h, 0.3);
        for i in 0..3 {
            assert_relative_eq!(post.mean[i], m[i], max_relative = 1e-8);
            for j in 0..3 {
                assert_relative_eq!(post.cov[(i, j)], c[(i, j)], max_relative = 1e-8, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn marginals_agree_with_full_posterior() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let h = Hyperparams::new(0.8, 2.0, 4.0, 0.05).unwrap();
        let train = random_points(&mut rng, 12);
        let y: Vec<f64> = (0..12).map(|_| rng.random_range(-1.0..1.0)).collect();
        let model = GpModel::fit(&dataset(&train, &y), &h, 0.1).unwrap();
        let query = random_points(&mut rng, 6);
        let full = model.predict(&query).unwrap();
        let (mean, std) = model.predict_marginals(&query).unwrap();
        for i in 0..6 {
            assert_relative_eq!(mean[i], full.mean[i], epsilon = 1e-12);
            assert_relative_eq!(std[i], full.std()[i], epsilon = 1e-9);
            assert_relative_eq!(model.predict_mean(&query[i]).unwrap(), mean[i], epsilon = 1e-12);
        }
    }

    #[test]
    fn lml_single_point() {
        let h = Hyperparams::new(0.75, 1.0, 1.0, 0.25).unwrap();
        let train = dataset(&[st(1.0, 1.0, 0.0)], &[4.0]);
        let v = log_marginal_likelihood(&train, &h, 4.0).unwrap();
        assert_relative_eq!(v, -0.5 * (2.0 * PI).ln(), epsilon = 1e-9);
    }

    #[test]
    fn lml_matches_dense_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let h = Hyperparams::new(1.1, 2.5, 3.0, 0.3).unwrap();
        let pts = random_points(&mut rng, 9);
        let y: Vec<f64> = (0..9).map(|_| rng.random_range(-3.0..3.0)).collect();
        let m = 0.7;
        let k = kernel::gram(&pts, &h, true).unwrap();
        let r = DVector::from_iterator(9, y.iter().map(|v| v - m));
        let dense = -0.5 * (r.transpose() * k.clone().try_inverse().unwrap() * &r)[0]
            - 0.5 * k.determinant().ln()
            - 4.5 * (2.0 * PI).ln();
        let v = log_marginal_likelihood(&dataset(&pts, &y), &h, m).unwrap();
        assert_relative_eq!(v, dense, epsilon = 1e-8);
    }

    #[test]
    fn lml_prefers_generating_hyperparams() {
        let h = Hyperparams::new(1.0, 2.0, 3.0, 0.05).unwrap();
        let wrong = Hyperparams { ell_s: 200.0, ..h };
        let mut wins = 0;
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
            let pts = random_points(&mut rng, 40);
            let y = sample_prior(&pts, &h, 0.0, true, &mut rng).unwrap();
            let ds = dataset(&pts, &y);
            if log_marginal_likelihood(&ds, &h, 0.0).unwrap() >= log_marginal_likelihood(&ds, &wrong, 0.0).unwrap() {
                wins += 1;
            }
        }
        assert!(wins >= 18, "generating hyperparameters won only {wins}/20");
    }

    #[test]
    fn fit_hyperparams_edge_cases() {
        let h = Hyperparams::new(1.0, 2.0, 3.0, 0.05).unwrap();
        let train = dataset(&[st(0.0, 0.0, 0.0)], &[1.0]);
        assert_eq!(fit_hyperparams(&train, &[h], 0.0).unwrap(), h);
        assert!(matches!(fit_hyperparams(&Dataset::new(), &[h], 0.0), Err(Error::Precondition(_))));
        assert!(matches!(fit_hyperparams(&train, &[], 0.0), Err(Error::Precondition(_))));
    }

    #[test]
    fn fit_hyperparams_recovers_length_scale() {
        let truth = Hyperparams::new(1.0, 2.0, 3.0, 0.05).unwrap();
        // Generating element in the middle of a geometric ladder of 9.
        let grid: Vec<Hyperparams> = (-4..=4)
            .map(|e| Hyperparams { ell_s: 2.0 * 2f64.powi(e), ..truth })
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let pts = random_points(&mut rng, 200);
        let y = sample_prior(&pts, &truth, 0.0, true, &mut rng).unwrap();
        let best = fit_hyperparams(&dataset(&pts, &y), &grid, 0.0).unwrap();
        let idx = grid.iter().position(|g| *g == best).unwrap();
        assert!((3..=5).contains(&idx), "selected grid index {idx}");
    }

    #[test]
    fn entropy_values() {
        let one = DMatrix::from_element(1, 1, 1.0);
        assert_relative_eq!(entropy_logdet(&one).unwrap(), 1.418_938_533_204_672_7, epsilon = 1e-6);
        assert_relative_eq!(entropy_logdet(&DMatrix::identity(3, 3)).unwrap(), 4.256_815_599_614_018, epsilon = 1e-6);
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]);
        let b = DMatrix::from_row_slice(2, 2, &[0.5, -0.1, -0.1, 0.7]);
        let mut block = DMatrix::zeros(4, 4);
        block.view_mut((0, 0), (2, 2)).copy_from(&a);
        block.view_mut((2, 2), (2, 2)).copy_from(&b);
        let sum = entropy_logdet(&a).unwrap() + entropy_logdet(&b).unwrap();
        assert_relative_eq!(entropy_logdet(&block).unwrap(), sum, epsilon = 1e-10);
    }

    #[test]
    fn entropy_rejects_indefinite() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(entropy_logdet(&m), Err(Error::Numeric(_))));
    }

    fn central_diff(train: &Dataset, cand: &[SpaceTime], h: &Hyperparams) -> Vec<f64> {
        let step = 1e-5;
        let mut out = Vec::new();
        for i in 0..cand.len() {
            for d in 0..2 {
                let mut plus = cand.to_vec();
                let mut minus = cand.to_vec();
                plus[i].pos[d] += step;
                minus[i].pos[d] -= step;
                let fp = neg_logdet_and_grad(train, &plus, h).unwrap().0;
                let fm = neg_logdet_and_grad(train, &minus, h).unwrap().0;
                out.push((fp - fm) / (2.0 * step));
            }
        }
        out
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let h = Hyperparams::new(1.0, 3.0, 4.0, 0.1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..5 {
            let tr = random_points(&mut rng, 5);
            let train = dataset(&tr, &[0.0; 5]);
            let cand: Vec<SpaceTime> = (1..=3)
                .map(|k| st(rng.random_range(0.0..10.0), rng.random_range(0.0..10.0), 5.0 + k as f64))
                .collect();
            let (_, g) = neg_logdet_and_grad(&train, &cand, &h).unwrap();
            let fd = central_diff(&train, &cand, &h);
            let scale = fd.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            for (a, b) in g.iter().zip(&fd) {
                assert!((a - b).abs() <= 1e-4 * scale.max(1e-8), "{a} vs {b}");
            }
        }
    }

    #[test]
    fn moving_away_from_data_decreases_cost() {
        let h = Hyperparams::new(1.0, 2.0, 5.0, 0.1).unwrap();
        let train = dataset(&[st(0.0, 0.0, 0.0), st(1.0, 0.0, 0.0)], &[0.0, 0.0]);
        let near = neg_logdet_and_grad(&train, &[st(0.0, 0.0, 0.0)], &h).unwrap().0;
        let far = neg_logdet_and_grad(&train, &[st(30.0, 0.0, 0.0)], &h).unwrap().0;
        assert!(far < near, "{far} !< {near}");
    }

    #[test]
    fn duplicate_candidates_have_equal_gradients() {
        let h = Hyperparams::new(1.0, 2.0, 5.0, 0.1).unwrap();
        let train = dataset(&[st(0.0, 0.0, 0.0), st(3.0, 1.0, 0.5)], &[0.0, 0.0]);
        let c = st(1.0, 2.0, 1.0);
        let (f, g) = neg_logdet_and_grad(&train, &[c.clone(), c], &h).unwrap();
        assert!(f.is_finite());
        assert_relative_eq!(g[0], g[2], max_relative = 1e-6);
        assert_relative_eq!(g[1], g[3], max_relative = 1e-6);
    }

    #[test]
    fn dataset_set_semantics() {
        let mut ds = Dataset::new();
        let s = Sample { position: vec![1.0, 2.0], timestamp: 3.0, value: 4.0, key: (1, 1) };
        assert!(ds.insert(s.clone()).unwrap());
        assert!(!ds.insert(s.clone()).unwrap());
        let conflict = Sample { value: 5.0, ..s };
        assert!(matches!(ds.insert(conflict), Err(Error::Integrity(_))));
        let neg = Sample { position: vec![0.0, 0.0], timestamp: -1.0, value: 0.0, key: (2, 0) };
        assert!(ds.insert(neg).is_err());
        assert!(Dataset::from_parts(vec![vec![0.0]], vec![], vec![1.0], vec![(0, 0)]).is_err());
    }

    #[test]
    fn truncate_drops_oldest() {
        let pts = [st(0.0, 0.0, 5.0), st(1.0, 0.0, 1.0), st(2.0, 0.0, 3.0)];
        let mut ds = dataset(&pts, &[1.0, 2.0, 3.0]);
        ds.truncate_oldest(2);
        assert_eq!(ds.len(), 2);
        assert!(ds.timestamps.iter().all(|&t| t >= 3.0));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;
        use rand::Rng;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(40))]

            #[test]
            fn variance_bounded_and_monotone(seed in any::<u64>(), n in 1usize..15) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let h = Hyperparams::new(1.4, 2.0, 3.0, 0.1).unwrap();
                let pts = random_points(&mut rng, n + 1);
                let y: Vec<f64> = (0..=n).map(|_| rng.random_range(-1.0..1.0)).collect();
                let q = random_points(&mut rng, 3);
                let small = posterior(&dataset(&pts[..n], &y[..n]), &q, &h, 0.0).unwrap();
                let big = posterior(&dataset(&pts, &y), &q, &h, 0.0).unwrap();
                for i in 0..3 {
                    prop_assert!(small.cov[(i, i)] <= h.sigma2 + 1e-8);
                    prop_assert!(big.cov[(i, i)] <= small.cov[(i, i)] + 1e-8);
                    prop_assert!(big.cov[(i, i)] >= -1e-8);
                }
                prop_assert!(entropy_logdet(&big.cov).unwrap() <= entropy_logdet(&small.cov).unwrap() + 1e-8);
            }

            #[test]
            fn posterior_matches_oracle(seed in any::<u64>(), n in 1usize..20, q in 1usize..5) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let h = Hyperparams::new(1.0, 3.0, 2.5, 0.3).unwrap();
                let pts = random_points(&mut rng, n);
                let y: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
                let query = random_points(&mut rng, q);
                let post = posterior(&dataset(&pts, &y), &query, &h, 0.2).unwrap();
                let (m, c) = brute_force(&pts, &y, &query, &h, 0.2);
                for i in 0..q {
                    prop_assert!((post.mean[i] - m[i]).abs() <= 1e-8 * m[i].abs().max(1.0));
                    for j in 0..q {
                        prop_assert!((post.cov[(i, j)] - c[(i, j)]).abs() <= 1e-8 * c[(i, j)].abs().max(1.0));
                    }
                }
            }
        }
    }
}
