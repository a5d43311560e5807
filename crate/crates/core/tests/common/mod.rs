//! Independent oracles and random instance generators shared by the
//! integration tests. Nothing here calls into the library's numerics.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use stipp::gp::Dataset;
use stipp::kernel::{Hyperparams, SpaceTime};
use stipp::planner::LocalConstraints;
use stipp::swarm::{build_graph, preserve_set, Vec2, Workspace};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn st(x: f64, y: f64, t: f64) -> SpaceTime {
    SpaceTime::new(vec![x, y], t)
}

pub fn dataset(points: &[SpaceTime], values: &[f64]) -> Dataset {
    Dataset::from_parts(
        points.iter().map(|p| p.pos.clone()).collect(),
        points.iter().map(|p| p.t).collect(),
        values.to_vec(),
        (0..points.len() as u32).map(|i| (0, i)).collect(),
    )
    .unwrap()
}

pub fn random_points(rng: &mut ChaCha8Rng, n: usize, side: f64, t_max: f64) -> Vec<SpaceTime> {
    (0..n)
        .map(|_| st(rng.random_range(0.0..side), rng.random_range(0.0..side), rng.random_range(0.0..t_max)))
        .collect()
}

/// Kernel written out by hand.
pub fn k(a: &SpaceTime, b: &SpaceTime, h: &Hyperparams) -> f64 {
    let d2: f64 = a.pos.iter().zip(&b.pos).map(|(x, y)| (x - y).powi(2)).sum();
    h.sigma2 * (-d2 / (2.0 * h.ell_s * h.ell_s) - (a.t - b.t).abs() / h.ell_t).exp()
}

/// Conditions the joint Gaussian of `[train; query]` through an explicit
/// inverse of the training block. The training diagonal carries noise plus
/// the library's fixed jitter, which is part of the model being checked.
pub fn brute_posterior(train: &[SpaceTime], y: &[f64], query: &[SpaceTime], h: &Hyperparams, m: f64) -> (DVector<f64>, DMatrix<f64>) {
    brute_posterior_with(train, y, query, h, m, stipp::kernel::JITTER)
}

/// As [`brute_posterior`] with an explicit diagonal jitter on the training block.
pub fn brute_posterior_with(train: &[SpaceTime], y: &[f64], query: &[SpaceTime], h: &Hyperparams, m: f64, jitter: f64) -> (DVector<f64>, DMatrix<f64>) {
    let n = train.len();
    let q = query.len();
    let all: Vec<&SpaceTime> = train.iter().chain(query).collect();
    let joint = DMatrix::from_fn(n + q, n + q, |a, b| k(all[a], all[b], h) + if a == b && a < n { h.noise_var + jitter } else { 0.0 });
    let s_dd = joint.view((0, 0), (n, n)).into_owned();
    let s_dh = joint.view((0, n), (n, q)).into_owned();
    let s_hh = joint.view((n, n), (q, q)).into_owned();
    let inv = s_dd.try_inverse().expect("training covariance is invertible");
    let r = DVector::from_iterator(n, y.iter().map(|v| v - m));
    let mean = s_dh.transpose() * &inv * r;
    (mean.add_scalar(m), s_hh - s_dh.transpose() * inv * s_dh)
}

/// `|a − b| / |b|`, with `floor` guarding entries that are zero in exact
/// arithmetic.
pub fn rel_err(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / b.abs().max(floor)
}

/// `−logdet` of the posterior covariance at `cand`, from the dense oracle.
pub fn brute_neg_logdet(train: &[SpaceTime], cand: &[SpaceTime], h: &Hyperparams) -> f64 {
    let (_, cov) = brute_posterior(train, &vec![0.0; train.len()], cand, h, 0.0);
    let cov = cov + DMatrix::identity(cand.len(), cand.len()) * stipp::kernel::JITTER;
    -cov.determinant().ln()
}

/// Exact Euclidean projection onto a box intersected with a disc, by
/// checking every possible active set: none, the rim, box faces, and the
/// rim together with one edge. Assumes the intersection is non-empty.
pub fn project_box_ball(p: Vector2<f64>, lo: Vector2<f64>, hi: Vector2<f64>, c: Vector2<f64>, r: f64) -> Vector2<f64> {
    let in_box = |v: &Vector2<f64>| v.x >= lo.x - 1e-12 && v.x <= hi.x + 1e-12 && v.y >= lo.y - 1e-12 && v.y <= hi.y + 1e-12;
    let in_disc = |v: &Vector2<f64>| (v - c).norm() <= r * (1.0 + 1e-12) + 1e-12;
    let mut cands = vec![p, Vector2::new(p.x.clamp(lo.x, hi.x), p.y.clamp(lo.y, hi.y))];
    let d = p - c;
    if d.norm() > 0.0 {
        cands.push(c + d * (r / d.norm()));
    }
    // Edge x = const (axis 0) or y = const (axis 1), clipped to the disc.
    for axis in 0..2 {
        let other = 1 - axis;
        for fixed in [lo[axis], hi[axis]] {
            let off = fixed - c[axis];
            if off.abs() > r {
                continue;
            }
            let half = (r * r - off * off).sqrt();
            let a = lo[other].max(c[other] - half);
            let b = hi[other].min(c[other] + half);
            if a > b {
                continue;
            }
            let mut v = Vector2::zeros();
            v[axis] = fixed;
            v[other] = p[other].clamp(a, b);
            cands.push(v);
        }
    }
    cands
        .into_iter()
        .filter(|v| in_box(v) && in_disc(v))
        .min_by(|a, b| (a - p).norm().total_cmp(&(b - p).norm()))
        .expect("box and disc intersect")
}

/// One H=1 instance: a robot with `A = B = I` in `Q = [0,10]²`, a control
/// box, and a ball around a fixed neighbor that contains the start.
#[derive(Debug, Clone)]
pub struct GridInstance {
    pub cons: LocalConstraints,
    pub linear: DVector<f64>,
    pub q: f64,
}

fn single_robot(start: Vec2, bound: f64, anchor: (Vec2, f64)) -> LocalConstraints {
    LocalConstraints {
        owner: 1,
        horizon: 1,
        workspace: Workspace::new(Vec2::new(0.0, 0.0), Vec2::new(10.0, 10.0)).unwrap(),
        own_workspace: None,
        a: Matrix2::identity(),
        b: Matrix2::identity(),
        drift: Vec2::zeros(),
        current_position: start,
        control_lower: Vector2::repeat(-bound),
        control_upper: Vector2::repeat(bound),
        radius: anchor.1,
        neighbors: vec![],
        preserved: BTreeMap::new(),
        anchors: vec![anchor],
    }
}

/// Scenario scales: link radius 20 m, unit control bounds, `q = 1`. With
/// `stretched` the neighbor sits 19 to 20 m away so the link can bind;
/// otherwise it is anywhere within range.
pub fn grid_instance(rng: &mut ChaCha8Rng, stretched: bool) -> GridInstance {
    let start = Vec2::new(rng.random_range(0.0..10.0), rng.random_range(0.0..10.0));
    let ang = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
    let dist = if stretched { rng.random_range(19.0..20.0) } else { rng.random_range(0.0..20.0) };
    let neighbor = start + dist * Vec2::new(ang.cos(), ang.sin());
    let target = Vec2::new(rng.random_range(-5.0..15.0), rng.random_range(-5.0..15.0));
    GridInstance {
        cons: single_robot(start, 1.0, (neighbor, 20.0)),
        linear: DVector::from_vec(vec![-target.x, -target.y]),
        q: 1.0,
    }
}

/// Small discs that bind often, wide control boxes and random `q`.
pub fn tight_instance(rng: &mut ChaCha8Rng) -> GridInstance {
    let start = Vec2::new(rng.random_range(1.0..9.0), rng.random_range(1.0..9.0));
    let center = Vec2::new(rng.random_range(0.0..10.0), rng.random_range(0.0..10.0));
    let radius = (start - center).norm() + rng.random_range(0.5..4.0);
    let bound = rng.random_range(1.0..6.0);
    let q = rng.random_range(0.5..2.0);
    let target = Vec2::new(rng.random_range(-5.0..15.0), rng.random_range(-5.0..15.0));
    GridInstance {
        cons: single_robot(start, bound, (center, radius)),
        linear: DVector::from_vec(vec![-q * target.x, -q * target.y]),
        q,
    }
}

impl GridInstance {
    /// Feasible box after intersecting `Q` with the control box.
    pub fn feasible_box(&self) -> (Vector2<f64>, Vector2<f64>) {
        let c = &self.cons;
        let lo = Vector2::new(
            c.workspace.min.x.max(c.current_position.x + c.control_lower.x),
            c.workspace.min.y.max(c.current_position.y + c.control_lower.y),
        );
        let hi = Vector2::new(
            c.workspace.max.x.min(c.current_position.x + c.control_upper.x),
            c.workspace.max.y.min(c.current_position.y + c.control_upper.y),
        );
        (lo, hi)
    }

    pub fn objective(&self, z: Vector2<f64>) -> f64 {
        self.linear[0] * z.x + self.linear[1] * z.y + 0.5 * self.q * z.norm_squared()
    }

    /// Exhaustive search over the 0.01 m lattice of `Q`.
    pub fn grid_argmin(&self) -> (Vector2<f64>, f64) {
        let (lo, hi) = self.feasible_box();
        let (c, r) = self.cons.anchors[0];
        let mut best = (f64::INFINITY, Vector2::zeros());
        for ix in 0..=1000 {
            let x = ix as f64 * 0.01;
            if x < lo.x - 1e-12 || x > hi.x + 1e-12 {
                continue;
            }
            for iy in 0..=1000 {
                let y = iy as f64 * 0.01;
                if y < lo.y - 1e-12 || y > hi.y + 1e-12 {
                    continue;
                }
                let z = Vector2::new(x, y);
                if (z - c).norm() > r {
                    continue;
                }
                let f = self.objective(z);
                if f < best.0 {
                    best = (f, z);
                }
            }
        }
        assert!(best.0.is_finite(), "no lattice point is feasible");
        (best.1, best.0)
    }

    pub fn ball_active(&self, z: Vector2<f64>) -> bool {
        let (c, r) = self.cons.anchors[0];
        (z - c).norm() > r - 1e-6
    }

    /// `‖z − Π(z − ∇f(z))‖` over the feasible set.
    pub fn projected_gradient_residual(&self, z: Vector2<f64>) -> f64 {
        let (lo, hi) = self.feasible_box();
        let (c, r) = self.cons.anchors[0];
        let g = Vector2::new(self.linear[0], self.linear[1]) + self.q * z;
        (z - project_box_ball(z - g, lo, hi, c, r)).norm()
    }
}

/// Random connected layout: each robot is dropped within `radius` of a
/// random earlier one, inside `[0, side]²`.
pub fn random_connected(rng: &mut ChaCha8Rng, m: usize, side: f64, radius: f64) -> Vec<Vec2> {
    let mut pts = vec![Vec2::new(rng.random_range(0.0..side), rng.random_range(0.0..side))];
    while pts.len() < m {
        let base = pts[rng.random_range(0..pts.len())];
        let ang = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
        let d = radius * rng.random_range(0.2f64..1.0).sqrt();
        let p = base + d * Vec2::new(ang.cos(), ang.sin());
        if (0.0..=side).contains(&p.x) && (0.0..=side).contains(&p.y) {
            pts.push(p);
        }
    }
    pts
}

/// Reachability by repeated relaxation, O(M³).
pub fn connected_by_closure(pts: &[Vec2], radius: f64) -> bool {
    let m = pts.len();
    let mut reach = vec![vec![false; m]; m];
    for a in 0..m {
        for b in 0..m {
            reach[a][b] = a == b || (pts[a] - pts[b]).norm() <= radius;
        }
    }
    for k in 0..m {
        for a in 0..m {
            for b in 0..m {
                reach[a][b] = reach[a][b] || (reach[a][k] && reach[k][b]);
            }
        }
    }
    reach.iter().all(|row| row.iter().all(|&x| x))
}

pub fn all_pairs(sets: &[BTreeSet<usize>]) -> Vec<(usize, usize)> {
    sets.iter()
        .enumerate()
        .flat_map(|(k, s)| s.iter().map(move |&j| (k + 1, j)))
        .collect()
}

pub const R: f64 = 20.0;

/// Random per-robot displacements, scaled down by halving until every
/// preserved pair ends within `R`. Scale zero (nobody moves) always works.
pub fn admissible_motion(rng: &mut ChaCha8Rng, pts: &[Vec2], pairs: &[(usize, usize)], max_step: f64) -> (Vec<Vec2>, f64) {
    let steps: Vec<Vec2> = pts
        .iter()
        .map(|_| {
            let a = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
            rng.random_range(0.0..max_step) * Vec2::new(a.cos(), a.sin())
        })
        .collect();
    let mut scale = 1.0;
    loop {
        let next: Vec<Vec2> = pts.iter().zip(&steps).map(|(p, d)| p + scale * d).collect();
        if pairs.iter().all(|&(i, j)| (next[i - 1] - next[j - 1]).norm() <= R) {
            return (next, scale);
        }
        scale = if scale < 1e-6 { 0.0 } else { scale * 0.5 };
    }
}

/// Samples `cases` configurations and returns how many stayed connected,
/// plus how many of them had at least one edge pruned and a real motion.
pub fn theorem_trials(seed: u64, cases: usize) -> (usize, usize) {
    let mut rng = rng(seed);
    let mut connected = 0;
    let mut informative = 0;
    for _ in 0..cases {
        let m = rng.random_range(3..=9);
        let pts = random_connected(&mut rng, m, 50.0, R);
        let g = build_graph(&pts, R).unwrap();
        assert!(g.is_connected());
        let sets: Vec<BTreeSet<usize>> = (1..=m).map(|i| preserve_set(i, &g, &pts).unwrap()).collect();
        let pairs = all_pairs(&sets);
        let (next, scale) = admissible_motion(&mut rng, &pts, &pairs, 15.0);
        if connected_by_closure(&next, R) {
            connected += 1;
        }
        if pairs.len() / 2 < g.edges().len() && scale > 0.0 {
            informative += 1;
        }
    }
    (connected, informative)
}
