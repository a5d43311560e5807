//! Dual-decomposition consensus over the communication graph.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::{DVector, Vector2};
use rayon::prelude::*;

use super::qp::{LocalQp, QpSettings};
use super::{DualState, LocalConstraints, PathPlan, PlannerConfig};
use crate::error::{Error, Result};
use crate::gp::{Dataset, GpModel};
use crate::kernel::{Hyperparams, SpaceTime};
use crate::swarm::{drift, linearize, CommGraph, RobotState, Vec2, Workspace};

/// `λ − α (ζ_ii − ζ_ji)`.
pub fn dual_update(lambda: &DVector<f64>, zeta_ii: &DVector<f64>, zeta_ji: &DVector<f64>, alpha: f64) -> Result<DVector<f64>> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::Precondition(format!("dual step must be positive (got {alpha})")));
    }
    if lambda.len() != zeta_ii.len() || lambda.len() != zeta_ji.len() {
        return Err(Error::Precondition("dual update operands differ in length".into()));
    }
    Ok(lambda - alpha * (zeta_ii - zeta_ji))
}

/// Scenario quantities the planner needs besides its own configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanContext {
    pub tau: f64,
    pub radius: f64,
    pub workspace: Workspace,
    /// `t_{k+1} … t_{k+H}`.
    pub prediction_times: Vec<f64>,
    pub hyperparams: Hyperparams,
    pub prior_mean: f64,
    /// Speed limit `|v| ≤ v_max`; keeping it at most `δv` makes stopping
    /// always admissible.
    pub v_max: f64,
    /// Preserved links are planned to `R − link_margin` when they currently
    /// are that short, absorbing linearization error at execution.
    pub link_margin: f64,
    /// The own path keeps this distance from the workspace boundary unless
    /// the robot is already closer.
    pub wall_margin: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundOutcome {
    /// Plans by robot index (`id − 1`).
    pub plans: Vec<PathPlan>,
    pub duals: Vec<DualState>,
    pub iterations: usize,
    /// `max ‖ζ_ii − ζ_ji‖₂` of the returned iterate.
    pub residual: f64,
    pub residual_history: Vec<f64>,
    pub converged: bool,
    /// Local solves that stopped at the iteration cap.
    pub inexact_solves: usize,
}

impl RoundOutcome {
    pub fn consensus_failed(&self) -> bool {
        !self.converged
    }
}

/// Builds `B_i` for one robot at the current step.
pub fn local_constraints(
    robot: &RobotState,
    robots: &[RobotState],
    graph: &CommGraph,
    preserved: &BTreeSet<usize>,
    horizon: usize,
    ctx: &PlanContext,
) -> Result<LocalConstraints> {
    let i = robot.id;
    let (a, b) = linearize(robot, ctx.tau);
    let v = robot.speed;
    let lo_v = (-robot.delta_v_max).max(-ctx.v_max - v);
    let hi_v = robot.delta_v_max.min(ctx.v_max - v);
    if lo_v > hi_v {
        return Err(Error::Precondition(format!(
            "robot {i}: speed {v} cannot be brought within the limit {}",
            ctx.v_max
        )));
    }
    let p = robot.position;
    let ws = ctx.workspace;
    let m = ctx.wall_margin.min(0.5 * (ws.max.x - ws.min.x)).min(0.5 * (ws.max.y - ws.min.y));
    let own = Workspace::new(
        Vec2::new((ws.min.x + m).min(p.x), (ws.min.y + m).min(p.y)),
        Vec2::new((ws.max.x - m).max(p.x), (ws.max.y - m).max(p.y)),
    )?;
    let tight = ctx.radius - ctx.link_margin;
    let preserved = preserved
        .iter()
        .map(|&j| {
            let d = (p - robots[j - 1].position).norm();
            (j, if d <= tight { tight } else { d })
        })
        .collect();
    Ok(LocalConstraints {
        owner: i,
        horizon,
        workspace: ws,
        own_workspace: Some(own),
        a,
        b,
        drift: drift(robot, ctx.tau),
        current_position: p,
        control_lower: Vector2::new(lo_v, -robot.delta_theta_max),
        control_upper: Vector2::new(hi_v, robot.delta_theta_max),
        radius: ctx.radius,
        neighbors: graph.neighbors(i).to_vec(),
        preserved,
        anchors: Vec::new(),
    })
}

fn query_points(plan: &PathPlan) -> Vec<SpaceTime> {
    plan.block_ids()
        .iter()
        .flat_map(|id| {
            plan.zeta[id]
                .iter()
                .zip(&plan.prediction_times)
                .map(|(w, &t)| SpaceTime::new(vec![w.x, w.y], t))
        })
        .collect()
}

/// `∇f_i` at `anchor` using the robot's own dataset; zero without data.
fn local_gradient(data: &Dataset, anchor: &PathPlan, ctx: &PlanContext) -> Result<DVector<f64>> {
    let n = 2 * anchor.horizon * anchor.zeta.len();
    if data.is_empty() {
        return Ok(DVector::zeros(n));
    }
    let model = GpModel::fit(data, &ctx.hyperparams, ctx.prior_mean)?;
    let (_, g) = model.neg_logdet_and_grad(&query_points(anchor))?;
    Ok(DVector::from_vec(g))
}

fn own_vec(plan: &PathPlan) -> DVector<f64> {
    DVector::from_iterator(2 * plan.horizon, plan.own().iter().flat_map(|w| [w.x, w.y]))
}

fn copy_vec(plan: &PathPlan, j: usize) -> DVector<f64> {
    DVector::from_iterator(2 * plan.horizon, plan.zeta[&j].iter().flat_map(|w| [w.x, w.y]))
}

/// `max ‖ζ_ii − ζ_ji‖₂` over all robots `i` and neighbors `j`.
pub fn consensus_residual(plans: &[PathPlan], graph: &CommGraph) -> f64 {
    let mut worst = 0.0f64;
    for (i, j) in graph.edges() {
        for (a, b) in [(*i, *j), (*j, *i)] {
            let d = own_vec(&plans[a - 1]) - copy_vec(&plans[b - 1], a);
            worst = worst.max(d.norm());
        }
    }
    worst
}

/// One planning round: every robot repeatedly solves its local QP against
/// the current multipliers, neighbors compare paths, and the multipliers
/// move until all copies agree with their owners.
///
/// `robots`, `datasets` and `preserved` are indexed by `id − 1`.
pub fn plan_round(
    robots: &[RobotState],
    datasets: &[Dataset],
    graph: &CommGraph,
    preserved: &[BTreeSet<usize>],
    cfg: &PlannerConfig,
    ctx: &PlanContext,
) -> Result<RoundOutcome> {
    cfg.validate()?;
    let m = robots.len();
    if datasets.len() != m || preserved.len() != m || graph.num_vertices() != m {
        return Err(Error::Precondition("robots, datasets, preserved sets and graph differ in size".into()));
    }
    if ctx.prediction_times.len() != cfg.horizon {
        return Err(Error::Precondition(format!(
            "{} prediction times for horizon {}",
            ctx.prediction_times.len(),
            cfg.horizon
        )));
    }
    if robots.iter().enumerate().any(|(k, r)| r.id != k + 1) {
        return Err(Error::Precondition("robot ids must be 1..M in order".into()));
    }
    if !graph.is_connected() {
        return Err(Error::Precondition("communication graph is disconnected".into()));
    }
    let h = cfg.horizon;
    let times = &ctx.prediction_times;
    let settings = QpSettings {
        max_iters: cfg.qp_max_iters,
        tol: cfg.qp_tol,
        ..QpSettings::default()
    };

    let positions: Vec<Vec2> = robots.iter().map(|r| r.position).collect();
    let anchors: Vec<PathPlan> = robots
        .iter()
        .map(|r| {
            let ids = std::iter::once(r.id).chain(graph.neighbors(r.id).iter().copied());
            let local: BTreeMap<usize, Vec2> = ids.map(|j| (j, positions[j - 1])).collect();
            PathPlan::stay_put(r.id, &local, times)
        })
        .collect();

    let setup: Vec<(DVector<f64>, LocalQp)> = robots
        .par_iter()
        .map(|r| {
            let k = r.id - 1;
            let cons = local_constraints(r, robots, graph, &preserved[k], h, ctx)?;
            let grad = local_gradient(&datasets[k], &anchors[k], ctx)?;
            let linear = grad - cfg.q * anchors[k].stacked();
            let mut qp = LocalQp::new(&cons, cfg.q, settings)?;
            qp.reset_warm_start(Some(&anchors[k].zeta));
            Ok((linear, qp))
        })
        .collect::<Result<_>>()?;
    let (linears, mut qps): (Vec<_>, Vec<_>) = setup.into_iter().unzip();

    let mut duals: Vec<DualState> = robots.iter().map(|r| DualState::zeros(graph.neighbors(r.id), h)).collect();
    let mut best: Option<(f64, Vec<PathPlan>, Vec<DualState>)> = None;
    let mut history = Vec::new();
    let mut inexact = 0;
    let mut iterations = 0;
    let mut converged = false;

    for n in 1..=cfg.n_max {
        iterations = n;
        // Λ_i = [−Σ_j λ_ij ; (λ_ji)_j]
        let offsets: Vec<DVector<f64>> = robots
            .iter()
            .map(|r| {
                let i = r.id;
                let nb = graph.neighbors(i);
                let mut off = DVector::zeros(2 * h * (1 + nb.len()));
                for lam in duals[i - 1].lambda.values() {
                    off.rows_mut(0, 2 * h).axpy(-1.0, lam, 1.0);
                }
                for (b, &j) in nb.iter().enumerate() {
                    off.rows_mut(2 * h * (b + 1), 2 * h).copy_from(&duals[j - 1].lambda[&i]);
                }
                off
            })
            .collect();
        let sols = qps
            .par_iter_mut()
            .zip(linears.par_iter().zip(offsets.par_iter()))
            .map(|(qp, (c, off))| qp.solve(&(c + off)))
            .collect::<Result<Vec<_>>>()?;
        let plans: Vec<PathPlan> = sols
            .into_iter()
            .zip(robots)
            .map(|(s, r)| {
                if s.inexact {
                    inexact += 1;
                }
                let ids: Vec<usize> = std::iter::once(r.id).chain(graph.neighbors(r.id).iter().copied()).collect();
                let mut p = PathPlan::from_stacked(r.id, &ids, &s.zeta, times);
                p.controls = s.controls;
                p.inexact = s.inexact;
                p
            })
            .collect();

        let residual = consensus_residual(&plans, graph);
        history.push(residual);
        if best.as_ref().is_none_or(|(b, _, _)| residual < *b) {
            best = Some((residual, plans.clone(), duals.clone()));
        }
        if residual < cfg.epsilon {
            converged = true;
            break;
        }
        if n == cfg.n_max {
            break;
        }
        let alpha = cfg.alpha0 / (n as f64).sqrt();
        for r in robots {
            let i = r.id;
            let own = own_vec(&plans[i - 1]);
            for &j in graph.neighbors(i) {
                let copy = copy_vec(&plans[j - 1], i);
                let lam = duals[i - 1].lambda.get_mut(&j).expect("dual keyed by neighbor");
                *lam = dual_update(lam, &own, &copy, alpha)?;
            }
        }
    }

    let (residual, plans, duals) = best.expect("at least one iteration");
    Ok(RoundOutcome {
        plans,
        duals,
        iterations,
        residual,
        residual_history: history,
        converged,
        inexact_solves: inexact,
    })
}
