use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::Hyperparams;
use crate::planner::PlannerConfig;
use crate::swarm::{build_graph, Vec2, Workspace};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub steps: usize,
    /// Physical sampling interval of the robot dynamics, seconds.
    pub tau: f64,
    /// Communication radius, meters.
    pub radius: f64,
    /// Standard deviation of simulated measurement noise.
    pub noise_std: f64,
    /// Per-robot dataset cap; oldest readings are dropped beyond it.
    pub max_points: Option<usize>,
    /// Robot whose model supplies the uncertainty table and prediction maps.
    pub designated_robot: usize,
    pub snapshot_steps: Vec<usize>,
    /// Constant GP mean; defaults to the mean of the reference dataset.
    pub prior_mean: Option<f64>,
    pub workspace: WorkspaceConfig,
    pub hyperparams: Hyperparams,
    /// When present, hyperparameters are chosen by maximum evidence over
    /// this grid on the reference dataset.
    pub fit: Option<FitGrid>,
    pub planner: PlannerConfig,
    pub robots: RobotsConfig,
    pub test_points: TestPoints,
    pub grid: GridSpec,
    pub dataset: DatasetConfig,
    pub oracle: OracleConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkspaceConfig {
    pub min: [f64; 2],
    pub max: [f64; 2],
}

impl WorkspaceConfig {
    pub fn to_workspace(&self) -> Result<Workspace> {
        Workspace::new(Vec2::from(self.min), Vec2::from(self.max))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitGrid {
    pub sigma2: Vec<f64>,
    pub ell_s: Vec<f64>,
    pub ell_t: Vec<f64>,
    pub noise_var: Vec<f64>,
}

impl FitGrid {
    /// Cartesian product in `sigma2, ell_s, ell_t, noise_var` nesting order.
    pub fn candidates(&self) -> Result<Vec<Hyperparams>> {
        let mut out = Vec::new();
        for &s in &self.sigma2 {
            for &l in &self.ell_s {
                for &t in &self.ell_t {
                    for &n in &self.noise_var {
                        out.push(Hyperparams::new(s, l, t, n)?);
                    }
                }
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RobotsConfig {
    /// Size of the line formation (default 6); must match `initial` when
    /// both are given.
    pub count: Option<usize>,
    /// Explicit initial poses `[x, y, heading]`; overrides the line formation.
    pub initial: Option<Vec<[f64; 3]>>,
    pub line_start: [f64; 2],
    pub line_spacing: f64,
    pub heading: f64,
    pub speed: f64,
    pub delta_v_max: f64,
    pub delta_theta_max: f64,
    pub v_max: f64,
    pub link_margin: f64,
    pub wall_margin: f64,
}

impl Default for RobotsConfig {
    fn default() -> Self {
        Self {
            count: None,
            initial: None,
            line_start: [5.0, -10.0],
            line_spacing: 10.0,
            heading: 0.0,
            speed: 0.0,
            delta_v_max: 1.0,
            delta_theta_max: 1.0,
            v_max: 1.0,
            link_margin: 2.0,
            wall_margin: 2.0,
        }
    }
}

impl RobotsConfig {
    /// Initial `(position, heading)` per robot, id order.
    pub fn poses(&self) -> Vec<(Vec2, f64)> {
        match &self.initial {
            Some(v) => v.iter().map(|p| (Vec2::new(p[0], p[1]), p[2])).collect(),
            None => (0..self.count.unwrap_or(6))
                .map(|k| {
                    let p = Vec2::new(self.line_start[0] + self.line_spacing * k as f64, self.line_start[1]);
                    (p, self.heading)
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TestPoints {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    /// Explicit points; overrides the `x × y` grid.
    pub points: Option<Vec<[f64; 2]>>,
}

impl Default for TestPoints {
    fn default() -> Self {
        Self {
            x: (2..=8).map(|k| 10.0 * k as f64).collect(),
            y: vec![0.0, -5.0, -10.0],
            points: None,
        }
    }
}

impl TestPoints {
    /// Points in x-major order.
    pub fn list(&self) -> Vec<Vec2> {
        match &self.points {
            Some(p) => p.iter().map(|q| Vec2::from(*q)).collect(),
            None => self.x.iter().flat_map(|&x| self.y.iter().map(move |&y| Vec2::new(x, y))).collect(),
        }
    }
}

/// Uniform export grid over the workspace, `nx × ny` nodes including the
/// boundary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSpec {
    pub nx: usize,
    pub ny: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self { nx: 51, ny: 11 }
    }
}

impl GridSpec {
    pub fn nodes(&self, ws: &Workspace) -> Vec<Vec2> {
        let axis = |lo: f64, hi: f64, n: usize| -> Vec<f64> {
            if n == 1 {
                vec![0.5 * (lo + hi)]
            } else {
                (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect()
            }
        };
        let xs = axis(ws.min.x, ws.max.x, self.nx);
        let ys = axis(ws.min.y, ws.max.y, self.ny);
        ys.iter().flat_map(|&y| xs.iter().map(move |&x| Vec2::new(x, y))).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    /// CSV with header `sensor_id,x_m,y_m,timestamp_s,value`. Relative paths
    /// resolve against the config file's directory. Absent: synthesize.
    pub path: Option<PathBuf>,
    pub synth: SynthConfig,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            path: None,
            synth: SynthConfig::default(),
        }
    }
}

/// GP-prior field sampled at fixed sensors over a time window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub seed: u64,
    pub sensors_x: Vec<f64>,
    pub sensors_y: Vec<f64>,
    pub n_times: usize,
    pub duration_s: f64,
    pub mean: f64,
    /// Kernel of the sampled field; defaults to the scenario's.
    pub hyperparams: Option<Hyperparams>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            sensors_x: vec![10.0, 26.0, 42.0, 58.0, 74.0, 90.0],
            sensors_y: vec![-5.0, -15.0],
            n_times: 63,
            duration_s: 86_400.0,
            mean: 20.0,
            hyperparams: None,
        }
    }
}

/// Random instances for the exhaustive path-selection check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleConfig {
    pub instances: usize,
    pub locations: usize,
    pub horizon: usize,
    pub training_points: usize,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            instances: 50,
            locations: 6,
            horizon: 2,
            training_points: 5,
        }
    }
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            steps: 80,
            tau: 1.0,
            radius: 20.0,
            noise_std: 0.1,
            max_points: None,
            designated_robot: 1,
            snapshot_steps: vec![1, 20, 40, 60, 80],
            prior_mean: None,
            workspace: WorkspaceConfig {
                min: [0.0, -20.0],
                max: [100.0, 0.0],
            },
            hyperparams: Hyperparams {
                sigma2: 1.0,
                ell_s: 25.0,
                ell_t: 43_200.0,
                noise_var: 0.01,
            },
            fit: None,
            planner: PlannerConfig::default(),
            robots: RobotsConfig::default(),
            test_points: TestPoints::default(),
            grid: GridSpec::default(),
            dataset: DatasetConfig::default(),
            oracle: OracleConfig::default(),
        }
    }
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads and validates a config file; a relative dataset path is
    /// resolved against the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg: Self = toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        if let Some(p) = &cfg.dataset.path {
            if p.is_relative() {
                let base = path.parent().unwrap_or(Path::new("."));
                cfg.dataset.path = Some(base.join(p));
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn synth_hyperparams(&self) -> Hyperparams {
        self.dataset.synth.hyperparams.unwrap_or(self.hyperparams)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        let ws = self.workspace.to_workspace().map_err(|e| Error::Config(e.to_string()))?;
        self.hyperparams.validate().map_err(|e| Error::Config(format!("hyperparams: {e}")))?;
        if let Some(h) = &self.dataset.synth.hyperparams {
            h.validate().map_err(|e| Error::Config(format!("dataset.synth.hyperparams: {e}")))?;
        }
        self.planner.validate()?;
        if self.steps == 0 {
            return bad("steps must be at least 1".into());
        }
        for (name, v) in [("tau", self.tau), ("radius", self.radius)] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive (got {v})"));
            }
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return bad(format!("noise_std must be non-negative (got {})", self.noise_std));
        }
        if self.max_points == Some(0) {
            return bad("max_points must be positive when set".into());
        }
        let r = &self.robots;
        let poses = r.poses();
        let m = poses.len();
        if m == 0 {
            return bad("at least one robot is required".into());
        }
        if let (Some(_), Some(c)) = (&r.initial, r.count) {
            if c != m {
                return bad(format!("robots.count = {c} but {m} initial poses"));
            }
        }
        if !(1..=m).contains(&self.designated_robot) {
            return bad(format!("designated_robot {} is not in 1..={m}", self.designated_robot));
        }
        for (name, v) in [("delta_v_max", r.delta_v_max), ("delta_theta_max", r.delta_theta_max), ("v_max", r.v_max)] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("robots.{name} must be positive (got {v})"));
            }
        }
        if r.v_max > r.delta_v_max {
            return bad(format!(
                "robots.v_max ({}) may not exceed robots.delta_v_max ({}); stopping must stay admissible",
                r.v_max, r.delta_v_max
            ));
        }
        if r.speed.abs() > r.v_max {
            return bad(format!("robots.speed {} exceeds v_max {}", r.speed, r.v_max));
        }
        if !(r.link_margin >= 0.0 && r.link_margin < self.radius) {
            return bad(format!("robots.link_margin must lie in [0, radius) (got {})", r.link_margin));
        }
        if !(r.wall_margin >= 0.0 && r.wall_margin.is_finite()) {
            return bad(format!("robots.wall_margin must be non-negative (got {})", r.wall_margin));
        }
        for (k, (p, _)) in poses.iter().enumerate() {
            if !ws.contains(p) {
                return bad(format!("robot {} starts outside the workspace at ({}, {})", k + 1, p.x, p.y));
            }
        }
        let positions: Vec<Vec2> = poses.iter().map(|(p, _)| *p).collect();
        if !build_graph(&positions, self.radius)?.is_connected() {
            return bad("initial communication graph is not connected".into());
        }
        let tps = self.test_points.list();
        if tps.is_empty() {
            return bad("no test points".into());
        }
        if let Some(p) = tps.iter().find(|p| !ws.contains(p)) {
            return bad(format!("test point ({}, {}) lies outside the workspace", p.x, p.y));
        }
        if let Some(s) = self.snapshot_steps.iter().find(|s| !(1..=self.steps).contains(*s)) {
            return bad(format!("snapshot step {s} is not in 1..={}", self.steps));
        }
        if self.grid.nx == 0 || self.grid.ny == 0 {
            return bad("grid.nx and grid.ny must be positive".into());
        }
        let s = &self.dataset.synth;
        if s.sensors_x.is_empty() || s.sensors_y.is_empty() || s.n_times == 0 || !(s.duration_s >= 0.0) {
            return bad("dataset.synth needs sensors, at least one time and a non-negative duration".into());
        }
        if let Some(f) = &self.fit {
            if f.candidates()?.is_empty() {
                return bad("fit grid is empty".into());
            }
        }
        let o = &self.oracle;
        if o.locations == 0 || o.horizon == 0 || o.training_points == 0 {
            return bad("oracle.locations, oracle.horizon and oracle.training_points must be positive".into());
        }
        Ok(())
    }
}
