//! Robot kinematics and the communication graph.
//!
//! Robot ids are 1-based; position slices are indexed by `id - 1`.

use std::collections::{BTreeSet, VecDeque};
use std::f64::consts::PI;

use nalgebra::{Matrix2, Vector2};
use crate::error::{ensure_finite, Error, Result};

pub type Vec2 = Vector2<f64>;

/// Wraps an angle into (−π, π].
pub fn wrap_angle(theta: f64) -> f64 {
    let mut a = theta.rem_euclid(2.0 * PI);
    if a > PI {
        a -= 2.0 * PI;
    }
    a
}

/// Axis-aligned rectangular workspace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Workspace {
    pub min: Vec2,
    pub max: Vec2,
}

impl Workspace {
    pub fn new(min: Vec2, max: Vec2) -> Result<Self> {
        ensure_finite("workspace", &[min.x, min.y, max.x, max.y])?;
        if min.x > max.x || min.y > max.y {
            return Err(Error::Domain(format!(
                "empty workspace [{}, {}] x [{}, {}]",
                min.x, max.x, min.y, max.y
            )));
        }
        Ok(Self { min, max })
    }

    pub fn contains(&self, p: &Vec2) -> bool {
        self.contains_tol(p, 0.0)
    }

    pub fn contains_tol(&self, p: &Vec2, tol: f64) -> bool {
        p.x >= self.min.x - tol && p.x <= self.max.x + tol && p.y >= self.min.y - tol && p.y <= self.max.y + tol
    }

    pub fn clamp(&self, p: &Vec2) -> Vec2 {
        Vec2::new(p.x.clamp(self.min.x, self.max.x), p.y.clamp(self.min.y, self.max.y))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RobotState {
    pub id: usize,
    pub position: Vec2,
    pub speed: f64,
    pub heading: f64,
    pub delta_v_max: f64,
    pub delta_theta_max: f64,
}

impl RobotState {
    pub fn new(id: usize, position: Vec2, speed: f64, heading: f64, delta_v_max: f64, delta_theta_max: f64) -> Result<Self> {
        let s = Self {
            id,
            position,
            speed,
            heading: wrap_angle(heading),
            delta_v_max,
            delta_theta_max,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        ensure_finite(
            "robot state",
            &[self.position.x, self.position.y, self.speed, self.heading, self.delta_v_max, self.delta_theta_max],
        )?;
        if self.delta_v_max <= 0.0 || self.delta_theta_max <= 0.0 {
            return Err(Error::Domain(format!("robot {}: control bounds must be positive", self.id)));
        }
        Ok(())
    }
}

/// Euler step of the unicycle. Speed and heading are updated first, then
/// the position is integrated with the new values.
pub fn step_dynamics(s: &RobotState, dv: f64, dtheta: f64, tau: f64) -> Result<RobotState> {
    ensure_finite("control", &[dv, dtheta, tau])?;
    if dv.abs() > s.delta_v_max || dtheta.abs() > s.delta_theta_max {
        return Err(Error::Domain(format!(
            "robot {}: control ({dv}, {dtheta}) exceeds bounds ({}, {})",
            s.id, s.delta_v_max, s.delta_theta_max
        )));
    }
    let speed = s.speed + dv;
    let heading = wrap_angle(s.heading + dtheta);
    let position = s.position + tau * speed * Vec2::new(heading.cos(), heading.sin());
    Ok(RobotState {
        position,
        speed,
        heading,
        ..*s
    })
}

/// First-order model `p' = A p + B u` around the current speed and heading,
/// with `u = (Δv, Δθ)`.
pub fn linearize(s: &RobotState, tau: f64) -> (Matrix2<f64>, Matrix2<f64>) {
    let (sin, cos) = s.heading.sin_cos();
    let b = tau * Matrix2::new(cos, -s.speed * sin, sin, s.speed * cos);
    (Matrix2::identity(), b)
}

/// Displacement the robot makes in one step if it keeps its current speed
/// and heading. Added to the linear model so that a zero control means
/// "carry on" and stopping requires `Δv = −v`.
pub fn drift(s: &RobotState, tau: f64) -> Vec2 {
    tau * s.speed * Vec2::new(s.heading.cos(), s.heading.sin())
}

#[derive(Debug, Clone, PartialEq)]
pub struct CommGraph {
    num_vertices: usize,
    radius: f64,
    edges: BTreeSet<(usize, usize)>,
    adjacency: Vec<Vec<usize>>,
}

pub fn build_graph(positions: &[Vec2], radius: f64) -> Result<CommGraph> {
    if positions.is_empty() {
        return Err(Error::Precondition("graph needs at least one robot".into()));
    }
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::Precondition(format!("radius must be positive (got {radius})")));
    }
    let m = positions.len();
    let mut edges = BTreeSet::new();
    let mut adjacency = vec![Vec::new(); m];
    for a in 0..m {
        for b in a + 1..m {
            if (positions[a] - positions[b]).norm() <= radius {
                edges.insert((a + 1, b + 1));
                adjacency[a].push(b + 1);
                adjacency[b].push(a + 1);
            }
        }
    }
    Ok(CommGraph {
        num_vertices: m,
        radius,
        edges,
        adjacency,
    })
}

impl CommGraph {
    pub fn num_vertices(&self) -> usize {
        self.num_vertices
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    /// Edges as `(i, j)` with `i < j`.
    pub fn edges(&self) -> &BTreeSet<(usize, usize)> {
        &self.edges
    }

    pub fn contains(&self, id: usize) -> bool {
        (1..=self.num_vertices).contains(&id)
    }

    /// Neighbors of `id` in ascending order. Panics on an unknown id.
    pub fn neighbors(&self, id: usize) -> &[usize] {
        &self.adjacency[id - 1]
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.edges.contains(&(a.min(b), a.max(b)))
    }

    fn bfs(&self, src: usize) -> Vec<Option<usize>> {
        let mut dist = vec![None; self.num_vertices];
        dist[src - 1] = Some(0);
        let mut queue = VecDeque::from([src]);
        while let Some(u) = queue.pop_front() {
            let du = dist[u - 1].unwrap();
            for &v in self.neighbors(u) {
                if dist[v - 1].is_none() {
                    dist[v - 1] = Some(du + 1);
                    queue.push_back(v);
                }
            }
        }
        dist
    }

    pub fn is_connected(&self) -> bool {
        self.bfs(1).iter().all(Option::is_some)
    }

    /// Longest shortest-path length, or `None` for a disconnected graph.
    pub fn diameter(&self) -> Option<usize> {
        let mut best = 0;
        for s in 1..=self.num_vertices {
            for d in self.bfs(s) {
                best = best.max(d?);
            }
        }
        Some(best)
    }
}

pub fn is_connected(g: &CommGraph) -> bool {
    g.is_connected()
}

/// Distances within a relative 1e-9 of each other count as equal, so
/// rounding noise never prunes a link between equidistant robots.
fn shorter(a: f64, b: f64) -> bool {
    a < b * (1.0 - 1e-9)
}

/// Neighbors of `i` whose links must be kept so that the graph stays
/// connected at the next step.
///
/// A link `(i, j)` may be dropped when some relay `l`, adjacent to both `i`
/// and `j`, is strictly closer to each of them than they are to each other.
/// The test depends only on the unordered pair, so `j ∈ S_i ⇔ i ∈ S_j`.
pub fn preserve_set(i: usize, g: &CommGraph, positions: &[Vec2]) -> Result<BTreeSet<usize>> {
    if !g.contains(i) {
        return Err(Error::Domain(format!("robot {i} is not in the graph")));
    }
    if positions.len() != g.num_vertices() {
        return Err(Error::Precondition(format!(
            "{} positions for a graph of {} robots",
            positions.len(),
            g.num_vertices()
        )));
    }
    let p = |id: usize| positions[id - 1];
    let mut keep = BTreeSet::new();
    for &j in g.neighbors(i) {
        let dij = (p(i) - p(j)).norm();
        let relayed = g.neighbors(i).iter().any(|&l| {
            l != j && g.has_edge(l, j) && shorter((p(i) - p(l)).norm(), dij) && shorter((p(j) - p(l)).norm(), dij)
        });
        if !relayed {
            keep.insert(j);
        }
    }
    Ok(keep)
}
