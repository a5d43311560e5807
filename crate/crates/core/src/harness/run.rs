use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::gp::{fit_hyperparams, Dataset, GpModel, Sample};
use crate::kernel::{Hyperparams, SpaceTime};
use crate::netsim::{exchange_round, fuse_datasets, GroundTruth, Message, Payload};
use crate::planner::{oracle_best_path, plan_round, CandidateGrid, OracleOutcome, PathPlan, PlanContext};
use crate::swarm::{build_graph, preserve_set, step_dynamics, CommGraph, RobotState, Vec2, Workspace};

use super::config::{GridSpec, ScenarioConfig};
use super::data::{ingest_csv, synth_field};

/// Five-number summary with outliers beyond 1.5·IQR. Quartiles use linear
/// interpolation between order statistics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoxStats {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    pub outliers: usize,
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn box_stats(values: &[f64]) -> Result<BoxStats> {
    if values.is_empty() {
        return Err(Error::Precondition("box statistics of an empty set".into()));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let (q1, q3) = (quantile(&v, 0.25), quantile(&v, 0.75));
    let iqr = q3 - q1;
    let outliers = v.iter().filter(|&&x| x < q1 - 1.5 * iqr || x > q3 + 1.5 * iqr).count();
    Ok(BoxStats {
        min: v[0],
        q1,
        median: quantile(&v, 0.5),
        q3,
        max: v[v.len() - 1],
        outliers,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridRow {
    pub x: f64,
    pub y: f64,
    pub mean: f64,
    pub std: f64,
}

/// Posterior mean and standard deviation of `model` over the grid at time `t`.
pub fn export_grid(model: &GpModel, spec: &GridSpec, ws: &Workspace, t: f64) -> Result<Vec<GridRow>> {
    let nodes = spec.nodes(ws);
    let query: Vec<SpaceTime> = nodes.iter().map(|p| SpaceTime::new(vec![p.x, p.y], t)).collect();
    let (mean, std) = model.predict_marginals(&query)?;
    Ok(nodes
        .iter()
        .zip(mean.into_iter().zip(std))
        .map(|(p, (mean, std))| GridRow { x: p.x, y: p.y, mean, std })
        .collect())
}

pub fn write_grid_csv(rows: &[GridRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["x_m", "y_m", "mean", "std"])?;
    for r in rows {
        w.write_record([r.x.to_string(), r.y.to_string(), r.mean.to_string(), r.std.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRow {
    pub step: usize,
    pub robot: usize,
    pub x: f64,
    pub y: f64,
    pub speed: f64,
    pub heading: f64,
    pub measurement: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConnectivityRow {
    pub step: usize,
    pub connected: bool,
    pub edges: Vec<(usize, usize)>,
    pub preserved: Vec<(usize, usize)>,
    /// Robots stopped in place because their planned move would have broken
    /// a preserved link or left the workspace.
    pub held: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConsensusRow {
    pub step: usize,
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
    pub inexact_solves: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UncertaintyRow {
    pub step: usize,
    pub stats: BoxStats,
    pub std: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridSnapshot {
    pub step: usize,
    pub time_s: f64,
    pub ground_truth: Vec<GridRow>,
    pub prediction: Vec<GridRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunMeta {
    pub package: &'static str,
    pub version: &'static str,
    pub seed: u64,
    pub dataset_rows: usize,
    pub dataset_source: String,
    pub time_span_s: f64,
    pub step_interval_s: f64,
    pub prior_mean: f64,
    pub hyperparams: Hyperparams,
    pub rounds_converged: usize,
    pub rounds_total: usize,
    pub all_connected: bool,
    pub held_moves: usize,
    pub config: ScenarioConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunArtifacts {
    pub trajectories: Vec<TrajectoryRow>,
    pub connectivity: Vec<ConnectivityRow>,
    pub consensus: Vec<ConsensusRow>,
    pub uncertainty: Vec<UncertaintyRow>,
    pub grids: Vec<GridSnapshot>,
    pub meta: RunMeta,
}

fn pairs(v: &[(usize, usize)]) -> String {
    v.iter().map(|(a, b)| format!("{a}-{b}")).collect::<Vec<_>>().join(";")
}

fn ids(v: &[usize]) -> String {
    v.iter().map(usize::to_string).collect::<Vec<_>>().join(";")
}

impl RunArtifacts {
    /// Writes every artifact into `dir` (created if missing) and returns the
    /// paths in write order.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir)?;
        let mut out = Vec::new();

        let p = dir.join("trajectories.csv");
        let mut w = csv::Writer::from_path(&p)?;
        w.write_record(["step", "robot", "x_m", "y_m", "speed", "heading", "measurement"])?;
        for r in &self.trajectories {
            w.write_record([
                r.step.to_string(),
                r.robot.to_string(),
                r.x.to_string(),
                r.y.to_string(),
                r.speed.to_string(),
                r.heading.to_string(),
                r.measurement.to_string(),
            ])?;
        }
        w.flush()?;
        out.push(p);

        let p = dir.join("connectivity.csv");
        let mut w = csv::Writer::from_path(&p)?;
        w.write_record(["step", "connected", "num_edges", "edges", "preserved", "held"])?;
        for r in &self.connectivity {
            w.write_record([
                r.step.to_string(),
                r.connected.to_string(),
                r.edges.len().to_string(),
                pairs(&r.edges),
                pairs(&r.preserved),
                ids(&r.held),
            ])?;
        }
        w.flush()?;
        out.push(p);

        let p = dir.join("consensus.csv");
        let mut w = csv::Writer::from_path(&p)?;
        w.write_record(["step", "iterations", "residual", "converged", "inexact_solves"])?;
        for r in &self.consensus {
            w.write_record([
                r.step.to_string(),
                r.iterations.to_string(),
                r.residual.to_string(),
                r.converged.to_string(),
                r.inexact_solves.to_string(),
            ])?;
        }
        w.flush()?;
        out.push(p);

        let p = dir.join("uncertainty_stats.csv");
        let mut w = csv::Writer::from_path(&p)?;
        let ntp = self.uncertainty.first().map_or(0, |r| r.std.len());
        let mut header: Vec<String> = ["step", "min", "q1", "median", "q3", "max", "outliers"].map(String::from).to_vec();
        header.extend((1..=ntp).map(|k| format!("tp_{k}")));
        w.write_record(&header)?;
        for r in &self.uncertainty {
            let s = &r.stats;
            let mut rec = vec![
                r.step.to_string(),
                s.min.to_string(),
                s.q1.to_string(),
                s.median.to_string(),
                s.q3.to_string(),
                s.max.to_string(),
                s.outliers.to_string(),
            ];
            rec.extend(r.std.iter().map(f64::to_string));
            w.write_record(&rec)?;
        }
        w.flush()?;
        out.push(p);

        for g in &self.grids {
            let p = dir.join(format!("grid_gt_step{}.csv", g.step));
            write_grid_csv(&g.ground_truth, &p)?;
            out.push(p);
            let p = dir.join(format!("grid_pred_step{}.csv", g.step));
            write_grid_csv(&g.prediction, &p)?;
            out.push(p);
        }

        let p = dir.join("run_meta.json");
        let mut text = serde_json::to_string_pretty(&self.meta)?;
        text.push('\n');
        std::fs::write(&p, text)?;
        out.push(p);
        Ok(out)
    }

    /// Median test-point std per step, in step order.
    pub fn median_std(&self) -> Vec<f64> {
        self.uncertainty.iter().map(|r| r.stats.median).collect()
    }
}

/// The reference dataset: the configured CSV, or a synthetic field.
pub fn load_dataset(cfg: &ScenarioConfig) -> Result<(Dataset, String)> {
    match &cfg.dataset.path {
        Some(p) => Ok((ingest_csv(p)?, p.display().to_string())),
        None => Ok((synth_field(&cfg.dataset.synth, &cfg.synth_hyperparams())?, "synthetic".into())),
    }
}

fn state_dump(step: usize, robots: &[RobotState], g: &CommGraph) -> String {
    let mut s = String::new();
    for r in robots {
        let _ = write!(
            s,
            "robot {} at ({}, {}) speed {} heading {}; ",
            r.id, r.position.x, r.position.y, r.speed, r.heading
        );
    }
    let edges: Vec<(usize, usize)> = g.edges().iter().copied().collect();
    let _ = write!(s, "step {step} edges [{}]", pairs(&edges));
    s
}

/// Applies each robot's first planned control. A robot whose move would
/// leave the workspace, or stretch a preserved link past `R` given where the
/// others end up, is stopped in place instead (`Δv = −v`, `Δθ = 0`); this
/// repeats until no preserved link is broken. Returns the new states and
/// the ids that were stopped.
pub fn execute_first_step(
    robots: &[RobotState],
    plans: &[PathPlan],
    preserved: &[BTreeSet<usize>],
    ws: &Workspace,
    radius: f64,
    tau: f64,
) -> Result<(Vec<RobotState>, Vec<usize>)> {
    let moved: Vec<RobotState> = robots
        .iter()
        .zip(plans)
        .map(|(r, p)| {
            let u = p.controls.first().copied().unwrap_or_default();
            let dv = u.x.clamp(-r.delta_v_max, r.delta_v_max);
            let dth = u.y.clamp(-r.delta_theta_max, r.delta_theta_max);
            step_dynamics(r, dv, dth, tau)
        })
        .collect::<Result<_>>()?;
    let mut held: Vec<bool> = moved.iter().map(|r| !ws.contains(&r.position)).collect();
    loop {
        let pos: Vec<Vec2> = (0..robots.len())
            .map(|k| if held[k] { robots[k].position } else { moved[k].position })
            .collect();
        let mut changed = false;
        for (k, s) in preserved.iter().enumerate() {
            for &j in s {
                if (pos[k] - pos[j - 1]).norm() > radius && !(held[k] && held[j - 1]) {
                    held[k] = true;
                    held[j - 1] = true;
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
    let mut out = Vec::with_capacity(robots.len());
    let mut stopped = Vec::new();
    for (k, r) in robots.iter().enumerate() {
        if held[k] {
            stopped.push(r.id);
            out.push(step_dynamics(r, -r.speed, 0.0, tau)?);
        } else {
            out.push(moved[k]);
        }
    }
    Ok((out, stopped))
}

/// Runs the full receding-horizon experiment.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<RunArtifacts> {
    cfg.validate()?;
    let (data, source) = load_dataset(cfg)?;
    run_with_dataset(cfg, &data, source)
}

pub fn run_with_dataset(cfg: &ScenarioConfig, data: &Dataset, source: String) -> Result<RunArtifacts> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::Precondition("reference dataset is empty".into()));
    }
    let ws = cfg.workspace.to_workspace()?;
    let prior_mean = match cfg.prior_mean {
        Some(m) => m,
        None => data.mean_value().expect("non-empty"),
    };
    let h = match &cfg.fit {
        Some(grid) => fit_hyperparams(data, &grid.candidates()?, prior_mean)?,
        None => cfg.hyperparams,
    };
    let t0 = data.timestamps.iter().copied().fold(f64::INFINITY, f64::min);
    let span = data.timestamps.iter().copied().fold(f64::NEG_INFINITY, f64::max) - t0;
    let dt = span / cfg.steps as f64;
    let time_at = |k: usize| t0 + dt * k as f64;

    let mut gt = GroundTruth::new(data, &h, prior_mean, ws, cfg.noise_std, cfg.seed)?;
    let r = &cfg.robots;
    let mut robots: Vec<RobotState> = r
        .poses()
        .iter()
        .enumerate()
        .map(|(k, (p, th))| RobotState::new(k + 1, *p, r.speed, *th, r.delta_v_max, r.delta_theta_max))
        .collect::<Result<_>>()?;
    let m = robots.len();
    let tps = cfg.test_points.list();
    let designated = cfg.designated_robot;
    let mut datasets = vec![Dataset::new(); m];

    let mut traj = Vec::new();
    let mut conn = Vec::new();
    let mut cons_rows = Vec::new();
    let mut unc = Vec::new();
    let mut grids = Vec::new();
    let mut held_moves = 0;

    for k in 1..=cfg.steps {
        let t = time_at(k);
        let positions: Vec<Vec2> = robots.iter().map(|r| r.position).collect();
        let graph = build_graph(&positions, cfg.radius)?;
        if !graph.is_connected() {
            return Err(Error::ConnectivityLost {
                step: k,
                detail: state_dump(k, &robots, &graph),
            });
        }

        // Sense in ascending id order so the noise stream is reproducible.
        let mut readings = Vec::with_capacity(m);
        for rb in &robots {
            let y = gt.measure(&rb.position, t)?;
            readings.push(Sample {
                position: vec![rb.position.x, rb.position.y],
                timestamp: t,
                value: y,
                key: (rb.id as u32, k as u32),
            });
            traj.push(TrajectoryRow {
                step: k,
                robot: rb.id,
                x: rb.position.x,
                y: rb.position.y,
                speed: rb.speed,
                heading: rb.heading,
                measurement: y,
            });
        }

        // Neighbors share their previous-step sets.
        let outbox: Vec<Message> = robots
            .iter()
            .map(|rb| Message {
                sender: rb.id,
                step: k,
                payload: Payload::Samples(datasets[rb.id - 1].samples().collect()),
            })
            .collect();
        let inbox = exchange_round(&graph, &outbox)?;
        let mut fused = Vec::with_capacity(m);
        for (idx, msgs) in inbox.iter().enumerate() {
            let received: Vec<Dataset> = msgs
                .iter()
                .map(|msg| match &msg.payload {
                    Payload::Samples(s) => {
                        let mut d = Dataset::new();
                        for x in s {
                            d.insert(x.clone())?;
                        }
                        Ok(d)
                    }
                    Payload::Plan(_) => Ok(Dataset::new()),
                })
                .collect::<Result<_>>()?;
            let refs: Vec<&Dataset> = received.iter().collect();
            let mut d = fuse_datasets(&datasets[idx], &refs, Some(&readings[idx]))?;
            if let Some(cap) = cfg.max_points {
                d.truncate_oldest(cap);
            }
            fused.push(d);
        }
        datasets = fused;

        let model = GpModel::fit(&datasets[designated - 1], &h, prior_mean)?;
        let query: Vec<SpaceTime> = tps.iter().map(|p| SpaceTime::new(vec![p.x, p.y], t)).collect();
        let (_, std) = model.predict_marginals(&query)?;
        unc.push(UncertaintyRow {
            step: k,
            stats: box_stats(&std)?,
            std,
        });
        if cfg.snapshot_steps.contains(&k) {
            grids.push(GridSnapshot {
                step: k,
                time_s: t,
                ground_truth: export_grid(gt.model(), &cfg.grid, &ws, t)?,
                prediction: export_grid(&model, &cfg.grid, &ws, t)?,
            });
        }

        let preserved: Vec<BTreeSet<usize>> = (1..=m).map(|i| preserve_set(i, &graph, &positions)).collect::<Result<_>>()?;
        let ctx = PlanContext {
            tau: cfg.tau,
            radius: cfg.radius,
            workspace: ws,
            prediction_times: (1..=cfg.planner.horizon).map(|s| time_at(k + s)).collect(),
            hyperparams: h,
            prior_mean,
            v_max: r.v_max,
            link_margin: r.link_margin,
            wall_margin: r.wall_margin,
        };
        let round = plan_round(&robots, &datasets, &graph, &preserved, &cfg.planner, &ctx)?;
        cons_rows.push(ConsensusRow {
            step: k,
            iterations: round.iterations,
            residual: round.residual,
            converged: round.converged,
            inexact_solves: round.inexact_solves,
        });

        let (next, held) = execute_first_step(&robots, &round.plans, &preserved, &ws, cfg.radius, cfg.tau)?;
        held_moves += held.len();
        let mut kept: Vec<(usize, usize)> = Vec::new();
        for (idx, s) in preserved.iter().enumerate() {
            kept.extend(s.iter().filter(|&&j| j > idx + 1).map(|&j| (idx + 1, j)));
        }
        conn.push(ConnectivityRow {
            step: k,
            connected: true,
            edges: graph.edges().iter().copied().collect(),
            preserved: kept,
            held,
        });
        robots = next;
    }

    let positions: Vec<Vec2> = robots.iter().map(|r| r.position).collect();
    let last = build_graph(&positions, cfg.radius)?;
    if !last.is_connected() {
        return Err(Error::ConnectivityLost {
            step: cfg.steps + 1,
            detail: state_dump(cfg.steps + 1, &robots, &last),
        });
    }

    let meta = RunMeta {
        package: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        seed: cfg.seed,
        dataset_rows: data.len(),
        dataset_source: source,
        time_span_s: span,
        step_interval_s: dt,
        prior_mean,
        hyperparams: h,
        rounds_converged: cons_rows.iter().filter(|c| c.converged).count(),
        rounds_total: cons_rows.len(),
        all_connected: conn.iter().all(|c| c.connected),
        held_moves,
        config: cfg.clone(),
    };
    Ok(RunArtifacts {
        trajectories: traj,
        connectivity: conn,
        consensus: cons_rows,
        uncertainty: unc,
        grids,
        meta,
    })
}

/// Random small instances of the exhaustive path-selection check, seeded
/// from the scenario seed.
pub fn oracle_check(cfg: &ScenarioConfig) -> Result<Vec<OracleOutcome>> {
    let ws = cfg.workspace.to_workspace()?;
    let o = &cfg.oracle;
    let h = cfg.hyperparams;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut out = Vec::with_capacity(o.instances);
    let point = |rng: &mut ChaCha8Rng| Vec2::new(rng.random_range(ws.min.x..=ws.max.x), rng.random_range(ws.min.y..=ws.max.y));
    let dt = 0.25 * h.ell_t;
    for _ in 0..o.instances {
        let mut train = Dataset::new();
        for k in 0..o.training_points {
            let p = point(&mut rng);
            train.insert(Sample {
                position: vec![p.x, p.y],
                timestamp: rng.random_range(0.0..=dt),
                value: rng.random_range(-1.0..=1.0),
                key: (0, k as u32),
            })?;
        }
        let times: Vec<f64> = (1..=o.horizon).map(|s| dt * (1.0 + s as f64)).collect();
        let grid = CandidateGrid {
            locations: (0..o.locations).map(|_| point(&mut rng)).collect(),
            times: times.clone(),
            horizon_times: times,
        };
        out.push(oracle_best_path(&grid, &train, &h, o.horizon, 0.0)?);
    }
    Ok(out)
}
