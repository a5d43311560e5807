//! Distributed informative path planning.
//!
//! Each robot `i` owns a stacked plan `ζ_i`: its own `H`-step path followed
//! by virtual copies of every neighbor's path, neighbors in ascending id
//! order. Coordinates are flattened waypoint by waypoint, so block `b`,
//! waypoint `h`, axis `a` lives at `2·(b·H + h) + a`.

mod consensus;
mod oracle;
mod qp;

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::{DVector, Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::swarm::{Vec2, Workspace};

pub use consensus::{consensus_residual, dual_update, local_constraints, plan_round, PlanContext, RoundOutcome};
pub use oracle::{oracle_best_path, CandidateGrid, OracleOutcome, MAX_ORACLE_PATHS};
pub use qp::{convex_model, solve_local_qp, ConvexModel, LocalQp, QpSettings, QpSolution};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlannerConfig {
    /// Prediction horizon `H`.
    pub horizon: usize,
    /// Proximal weight `q_i` of the convexified cost.
    pub q: f64,
    /// Dual step size numerator; step `n` uses `alpha0 / √n`.
    pub alpha0: f64,
    /// Consensus tolerance in meters.
    pub epsilon: f64,
    /// Outer (dual) iteration cap.
    pub n_max: usize,
    pub qp_max_iters: usize,
    pub qp_tol: f64,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            horizon: 3,
            q: 1.0,
            alpha0: 1.0,
            epsilon: 1e-3,
            n_max: 300,
            qp_max_iters: 5000,
            qp_tol: 1e-8,
        }
    }
}

impl PlannerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::Config("planner.horizon must be at least 1".into()));
        }
        for (name, v) in [("q", self.q), ("alpha0", self.alpha0), ("epsilon", self.epsilon), ("qp_tol", self.qp_tol)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("planner.{name} must be positive (got {v})")));
            }
        }
        if self.n_max == 0 || self.qp_max_iters == 0 {
            return Err(Error::Config("planner.n_max and planner.qp_max_iters must be positive".into()));
        }
        Ok(())
    }
}

/// A robot's stacked primal variables for one planning round.
#[derive(Debug, Clone, PartialEq)]
pub struct PathPlan {
    pub owner: usize,
    pub horizon: usize,
    /// `ζ_ij` for every `j ∈ N⁺_i`; `zeta[&owner]` is the robot's own path.
    pub zeta: BTreeMap<usize, Vec<Vec2>>,
    pub prediction_times: Vec<f64>,
    /// Controls `(Δv, Δθ)` realizing the own path under the linear model.
    pub controls: Vec<Vector2<f64>>,
    /// Set when the local QP stopped at its iteration cap.
    pub inexact: bool,
}

impl PathPlan {
    /// Every robot's path held at its current position.
    pub fn stay_put(owner: usize, positions: &BTreeMap<usize, Vec2>, times: &[f64]) -> Self {
        let zeta = positions.iter().map(|(&id, &p)| (id, vec![p; times.len()])).collect();
        Self {
            owner,
            horizon: times.len(),
            zeta,
            prediction_times: times.to_vec(),
            controls: Vec::new(),
            inexact: false,
        }
    }

    pub fn own(&self) -> &[Vec2] {
        &self.zeta[&self.owner]
    }

    /// Block order: owner first, then the others ascending.
    pub fn block_ids(&self) -> Vec<usize> {
        std::iter::once(self.owner)
            .chain(self.zeta.keys().copied().filter(|&k| k != self.owner))
            .collect()
    }

    pub fn stacked(&self) -> DVector<f64> {
        let ids = self.block_ids();
        DVector::from_iterator(
            2 * self.horizon * ids.len(),
            ids.iter().flat_map(|id| self.zeta[id].iter().flat_map(|w| [w.x, w.y])),
        )
    }

    pub(crate) fn from_stacked(owner: usize, ids: &[usize], v: &DVector<f64>, times: &[f64]) -> Self {
        let h = times.len();
        let zeta = ids
            .iter()
            .enumerate()
            .map(|(b, &id)| {
                let path = (0..h).map(|k| Vec2::new(v[2 * (b * h + k)], v[2 * (b * h + k) + 1])).collect();
                (id, path)
            })
            .collect();
        Self {
            owner,
            horizon: h,
            zeta,
            prediction_times: times.to_vec(),
            controls: Vec::new(),
            inexact: false,
        }
    }

    pub fn validate(&self, workspace: &Workspace, tol: f64) -> Result<()> {
        if !self.zeta.contains_key(&self.owner) {
            return Err(Error::Integrity(format!("plan of robot {} lacks its own path", self.owner)));
        }
        for (id, path) in &self.zeta {
            if path.len() != self.horizon {
                return Err(Error::Integrity(format!("path {id} has {} waypoints, expected {}", path.len(), self.horizon)));
            }
            if let Some(w) = path.iter().find(|w| !workspace.contains_tol(w, tol)) {
                return Err(Error::Integrity(format!("waypoint ({}, {}) of path {id} leaves the workspace", w.x, w.y)));
            }
        }
        Ok(())
    }
}

/// Multipliers `λ_ij` held by robot `i`, one `2H` vector per neighbor.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DualState {
    pub lambda: BTreeMap<usize, DVector<f64>>,
}

impl DualState {
    pub fn zeros(neighbors: &[usize], horizon: usize) -> Self {
        Self {
            lambda: neighbors.iter().map(|&j| (j, DVector::zeros(2 * horizon))).collect(),
        }
    }
}

/// The local feasible set `B_i`: own-path dynamics and control box, the
/// workspace for every waypoint, and distance bounds to preserved neighbors.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalConstraints {
    pub owner: usize,
    pub horizon: usize,
    pub workspace: Workspace,
    /// Tighter box for the own path only; `None` means `workspace`.
    pub own_workspace: Option<Workspace>,
    pub a: Matrix2<f64>,
    pub b: Matrix2<f64>,
    /// Constant per-step displacement added to `A ζ + B u`.
    pub drift: Vec2,
    pub current_position: Vec2,
    /// Lower and upper bounds of `u = (Δv, Δθ)`.
    pub control_lower: Vector2<f64>,
    pub control_upper: Vector2<f64>,
    /// Communication radius `R`.
    pub radius: f64,
    /// Neighbors whose virtual copies are part of the plan, ascending.
    pub neighbors: Vec<usize>,
    /// Preserved neighbors and the distance bound applied to each
    /// (normally `radius`).
    pub preserved: BTreeMap<usize, f64>,
    /// Fixed points the own path must stay within the given distance of.
    pub anchors: Vec<(Vec2, f64)>,
}

impl LocalConstraints {
    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::Precondition("horizon must be at least 1".into()));
        }
        let ids: BTreeSet<usize> = self.neighbors.iter().copied().collect();
        if ids.len() != self.neighbors.len() || ids.contains(&self.owner) {
            return Err(Error::Precondition("neighbor list must be unique and exclude the owner".into()));
        }
        if let Some(j) = self.preserved.keys().find(|j| !ids.contains(j)) {
            return Err(Error::Precondition(format!("preserved robot {j} is not a neighbor of {}", self.owner)));
        }
        if self.control_lower.iter().zip(self.control_upper.iter()).any(|(l, u)| l > u) {
            return Err(Error::Precondition("empty control box".into()));
        }
        if self.preserved.values().chain(self.anchors.iter().map(|(_, r)| r)).any(|r| !(*r >= 0.0)) {
            return Err(Error::Precondition("distance bounds must be non-negative".into()));
        }
        Ok(())
    }

    pub fn block_ids(&self) -> Vec<usize> {
        std::iter::once(self.owner).chain(self.neighbors.iter().copied()).collect()
    }

    pub fn own_box(&self) -> Workspace {
        self.own_workspace.unwrap_or(self.workspace)
    }

    pub fn dim(&self) -> usize {
        2 * self.horizon * (1 + self.neighbors.len())
    }

    /// Own waypoints produced by `controls` under the linear model.
    pub fn rollout(&self, controls: &[Vector2<f64>]) -> Vec<Vec2> {
        let mut p = self.current_position;
        controls
            .iter()
            .map(|u| {
                p = self.a * p + self.drift + self.b * u;
                p
            })
            .collect()
    }

    /// Largest violation of any constraint by `plan`, in meters (or control
    /// units for the control box); zero when feasible.
    pub fn max_violation(&self, plan: &PathPlan) -> f64 {
        let mut worst = 0.0f64;
        for (id, path) in &plan.zeta {
            let ws = if *id == self.owner { self.own_box() } else { self.workspace };
            for w in path {
                worst = worst
                    .max(ws.min.x - w.x)
                    .max(w.x - ws.max.x)
                    .max(ws.min.y - w.y)
                    .max(w.y - ws.max.y);
            }
        }
        for u in &plan.controls {
            for k in 0..2 {
                worst = worst.max(self.control_lower[k] - u[k]).max(u[k] - self.control_upper[k]);
            }
        }
        if plan.controls.len() == self.horizon {
            for (w, r) in plan.own().iter().zip(self.rollout(&plan.controls)) {
                worst = worst.max((w - r).norm());
            }
        }
        let own = plan.own();
        for (j, r) in &self.preserved {
            if let Some(copy) = plan.zeta.get(j) {
                for (a, b) in own.iter().zip(copy) {
                    worst = worst.max((a - b).norm() - r);
                }
            }
        }
        for (c, r) in &self.anchors {
            for w in own {
                worst = worst.max((w - c).norm() - r);
            }
        }
        worst
    }
}
