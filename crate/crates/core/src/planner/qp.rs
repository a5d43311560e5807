//! Convexified local cost and the local QP solver.
//!
//! The local problem is
//!
//! ```text
//! minimize   lᵀζ + (q/2)‖ζ‖²   over ζ ∈ B_i
//! ```
//!
//! The own path is eliminated in favor of the controls `u` through the
//! linear model, so the decision vector is `x = (u, copies)` and every
//! constraint becomes a box or a two-dimensional ball on a linear image of
//! `x`. Those are handled by an operator-splitting (ADMM) iteration that
//! alternates a fixed linear solve with projections onto each set.

use std::collections::BTreeMap;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, Matrix2, Vector2};

use super::{LocalConstraints, PathPlan};
use crate::error::{ensure_finite, Error, Result};
use crate::swarm::Vec2;

/// First-order model of `f_i` plus a proximal term, anchored at `ζ^{k−1}`:
/// `f̃(ζ) = f + ∇fᵀ(ζ − ζ^{k−1}) + (q/2)‖ζ − ζ^{k−1}‖²`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvexModel {
    pub value: f64,
    pub grad: DVector<f64>,
    pub anchor: DVector<f64>,
    pub q: f64,
}

pub fn convex_model(value: f64, grad: &DVector<f64>, anchor: &DVector<f64>, q: f64) -> Result<ConvexModel> {
    if !(q > 0.0 && q.is_finite()) {
        return Err(Error::Precondition(format!("proximal weight must be positive (got {q})")));
    }
    if grad.len() != anchor.len() {
        return Err(Error::Precondition(format!(
            "gradient length {} does not match anchor length {}",
            grad.len(),
            anchor.len()
        )));
    }
    ensure_finite("gradient", grad.as_slice())?;
    ensure_finite("anchor", anchor.as_slice())?;
    Ok(ConvexModel {
        value,
        grad: grad.clone(),
        anchor: anchor.clone(),
        q,
    })
}

impl ConvexModel {
    /// Linear coefficient of the collected form `cᵀζ + (q/2)‖ζ‖²`.
    pub fn linear(&self) -> DVector<f64> {
        &self.grad - self.q * &self.anchor
    }

    pub fn eval(&self, zeta: &DVector<f64>) -> f64 {
        let d = zeta - &self.anchor;
        self.value + self.grad.dot(&d) + 0.5 * self.q * d.norm_squared()
    }

    pub fn gradient(&self, zeta: &DVector<f64>) -> DVector<f64> {
        &self.grad + self.q * (zeta - &self.anchor)
    }

    pub fn eval_collected(&self, zeta: &DVector<f64>) -> f64 {
        self.linear().dot(zeta) + 0.5 * self.q * zeta.norm_squared()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QpSettings {
    pub max_iters: usize,
    pub tol: f64,
    pub rho: f64,
    pub sigma: f64,
    /// Over-relaxation factor.
    pub relax: f64,
    pub check_every: usize,
}

impl Default for QpSettings {
    fn default() -> Self {
        Self {
            max_iters: 5000,
            tol: 1e-8,
            rho: 0.1,
            sigma: 1e-6,
            relax: 1.6,
            check_every: 25,
        }
    }
}

#[derive(Debug, Clone)]
enum Set {
    Box { lo: Vec<f64>, hi: Vec<f64> },
    Ball { center: [f64; 2], radius: f64 },
}

#[derive(Debug, Clone)]
struct Block {
    start: usize,
    len: usize,
    set: Set,
    label: String,
}

impl Block {
    fn project(&self, z: &mut DVector<f64>) {
        let s = &mut z.as_mut_slice()[self.start..self.start + self.len];
        match &self.set {
            Set::Box { lo, hi } => {
                for ((v, l), h) in s.iter_mut().zip(lo).zip(hi) {
                    *v = v.clamp(*l, *h);
                }
            }
            Set::Ball { center, radius } => {
                let dx = s[0] - center[0];
                let dy = s[1] - center[1];
                let n = dx.hypot(dy);
                if n > *radius {
                    let k = radius / n;
                    s[0] = center[0] + dx * k;
                    s[1] = center[1] + dy * k;
                }
            }
        }
    }

    fn support(&self, dy: &DVector<f64>) -> f64 {
        let s = &dy.as_slice()[self.start..self.start + self.len];
        match &self.set {
            Set::Box { lo, hi } => s
                .iter()
                .zip(lo)
                .zip(hi)
                .map(|((d, l), h)| {
                    let up = if *d > 0.0 { h * d } else { 0.0 };
                    let down = if *d < 0.0 { l * d } else { 0.0 };
                    up + down
                })
                .sum(),
            Set::Ball { center, radius } => center[0] * s[0] + center[1] * s[1] + radius * s[0].hypot(s[1]),
        }
    }
}

/// Result of one local QP solve.
#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub zeta: DVector<f64>,
    pub controls: Vec<Vector2<f64>>,
    pub iterations: usize,
    pub inexact: bool,
    pub primal_residual: f64,
    pub dual_residual: f64,
}

/// A local QP with its constraint structure and factorization prepared
/// once; repeated solves with different linear terms warm-start from the
/// previous iterate.
#[derive(Debug, Clone)]
pub struct LocalQp {
    cons: LocalConstraints,
    q: f64,
    settings: QpSettings,
    n: usize,
    /// ζ = E x + e0.
    e: DMatrix<f64>,
    e0: DVector<f64>,
    m: DMatrix<f64>,
    blocks: Vec<Block>,
    p: DMatrix<f64>,
    rho: f64,
    kkt: Cholesky<f64, Dyn>,
    x: DVector<f64>,
    z: DVector<f64>,
    y: DVector<f64>,
}

fn mat_pow(a: &Matrix2<f64>, k: usize) -> Matrix2<f64> {
    (0..k).fold(Matrix2::identity(), |acc, _| acc * a)
}

impl LocalQp {
    pub fn new(cons: &LocalConstraints, q: f64, settings: QpSettings) -> Result<Self> {
        cons.validate()?;
        if !(q > 0.0 && q.is_finite()) {
            return Err(Error::Precondition(format!("proximal weight must be positive (got {q})")));
        }
        let h = cons.horizon;
        let nb = cons.neighbors.len();
        let nu = 2 * h;
        let n = nu + 2 * h * nb;
        let dim = cons.dim();

        // Own waypoint k (0-based) = A^{k+1} p + Σ_{j≤k} A^{k−j} (d + B u_j).
        let mut e = DMatrix::zeros(dim, n);
        let mut e0 = DVector::zeros(dim);
        for k in 0..h {
            let mut off = mat_pow(&cons.a, k + 1) * cons.current_position;
            for j in 0..=k {
                let ak = mat_pow(&cons.a, k - j);
                off += ak * cons.drift;
                e.view_mut((2 * k, 2 * j), (2, 2)).copy_from(&(ak * cons.b));
            }
            e0.fixed_rows_mut::<2>(2 * k).copy_from(&off);
        }
        for c in 0..2 * h * nb {
            e[(nu + c, nu + c)] = 1.0;
        }

        let mut rows: Vec<DVector<f64>> = Vec::new();
        let mut blocks = Vec::new();
        let mut push = |rows: &mut Vec<DVector<f64>>, coeffs: Vec<DVector<f64>>, set: Set, label: String| {
            blocks.push(Block {
                start: rows.len(),
                len: coeffs.len(),
                set,
                label,
            });
            rows.extend(coeffs);
        };
        let unit = |idx: usize| {
            let mut r = DVector::zeros(n);
            r[idx] = 1.0;
            r
        };
        let own_row = |k: usize, axis: usize| e.row(2 * k + axis).transpose();

        // Controls.
        for k in 0..h {
            push(
                &mut rows,
                vec![unit(2 * k), unit(2 * k + 1)],
                Set::Box {
                    lo: cons.control_lower.as_slice().to_vec(),
                    hi: cons.control_upper.as_slice().to_vec(),
                },
                format!("control bounds at step {}", k + 1),
            );
        }
        let ws = cons.own_box();
        // Own waypoints inside the workspace.
        for k in 0..h {
            let off = e0.fixed_rows::<2>(2 * k);
            push(
                &mut rows,
                vec![own_row(k, 0), own_row(k, 1)],
                Set::Box {
                    lo: vec![ws.min.x - off[0], ws.min.y - off[1]],
                    hi: vec![ws.max.x - off[0], ws.max.y - off[1]],
                },
                format!("workspace at own waypoint {}", k + 1),
            );
        }
        let ws = cons.workspace;
        // Virtual copies inside the workspace.
        for (bi, &j) in cons.neighbors.iter().enumerate() {
            for k in 0..h {
                let base = nu + 2 * (bi * h + k);
                push(
                    &mut rows,
                    vec![unit(base), unit(base + 1)],
                    Set::Box {
                        lo: vec![ws.min.x, ws.min.y],
                        hi: vec![ws.max.x, ws.max.y],
                    },
                    format!("workspace at copy of robot {j}, waypoint {}", k + 1),
                );
            }
        }
        // Preserved links: own waypoint minus copy within the bound.
        for (bi, &j) in cons.neighbors.iter().enumerate() {
            let Some(&r) = cons.preserved.get(&j) else { continue };
            for k in 0..h {
                let base = nu + 2 * (bi * h + k);
                let off = e0.fixed_rows::<2>(2 * k);
                let rx = own_row(k, 0) - unit(base);
                let ry = own_row(k, 1) - unit(base + 1);
                push(
                    &mut rows,
                    vec![rx, ry],
                    Set::Ball {
                        center: [-off[0], -off[1]],
                        radius: r,
                    },
                    format!("link to robot {j} at waypoint {}", k + 1),
                );
            }
        }
        for (ai, (c, r)) in cons.anchors.iter().enumerate() {
            for k in 0..h {
                let off = e0.fixed_rows::<2>(2 * k);
                push(
                    &mut rows,
                    vec![own_row(k, 0), own_row(k, 1)],
                    Set::Ball {
                        center: [c.x - off[0], c.y - off[1]],
                        radius: *r,
                    },
                    format!("anchor {ai} at waypoint {}", k + 1),
                );
            }
        }

        let m = DMatrix::from_fn(rows.len(), n, |r, c| rows[r][c]);
        let p = q * e.tr_mul(&e);
        let rho = settings.rho;
        let kkt = Self::factor(&p, &m, settings.sigma, rho)?;

        // Cold start: zero controls, copies at the neighbors' current positions.
        let x = DVector::zeros(n);
        let mut qp = Self {
            cons: cons.clone(),
            q,
            settings,
            n,
            e,
            e0,
            z: DVector::zeros(m.nrows()),
            y: DVector::zeros(m.nrows()),
            m,
            blocks,
            p,
            rho,
            kkt,
            x,
        };
        qp.reset_warm_start(None);
        Ok(qp)
    }

    fn factor(p: &DMatrix<f64>, m: &DMatrix<f64>, sigma: f64, rho: f64) -> Result<Cholesky<f64, Dyn>> {
        let n = p.nrows();
        let k = p + DMatrix::identity(n, n) * sigma + rho * m.tr_mul(m);
        k.cholesky()
            .ok_or_else(|| Error::Numeric(format!("QP system matrix ({n}x{n}) is not positive definite")))
    }

    pub fn constraints(&self) -> &LocalConstraints {
        &self.cons
    }

    /// Resets the iterate: zero controls, and copies at `refs` (or at the
    /// workspace center when absent).
    pub fn reset_warm_start(&mut self, refs: Option<&BTreeMap<usize, Vec<Vec2>>>) {
        let h = self.cons.horizon;
        let nu = 2 * h;
        self.x.fill(0.0);
        let center = (self.cons.workspace.min + self.cons.workspace.max) * 0.5;
        for (bi, j) in self.cons.neighbors.iter().enumerate() {
            for k in 0..h {
                let w = refs.and_then(|r| r.get(j)).and_then(|p| p.get(k)).copied().unwrap_or(center);
                self.x[nu + 2 * (bi * h + k)] = w.x;
                self.x[nu + 2 * (bi * h + k) + 1] = w.y;
            }
        }
        self.z = &self.m * &self.x;
        for b in &self.blocks {
            b.project(&mut self.z);
        }
        self.y.fill(0.0);
    }

    fn inf_norm(v: &DVector<f64>) -> f64 {
        v.amax()
    }

    /// Minimizes `lᵀζ + (q/2)‖ζ‖²` over the local set, where `linear = l`.
    pub fn solve(&mut self, linear: &DVector<f64>) -> Result<QpSolution> {
        if linear.len() != self.cons.dim() {
            return Err(Error::Precondition(format!(
                "linear term has length {}, expected {}",
                linear.len(),
                self.cons.dim()
            )));
        }
        ensure_finite("linear term", linear.as_slice())?;
        let s = self.settings;
        let lin = self.e.tr_mul(&(linear + self.q * &self.e0));
        let mut x = self.x.clone();
        let mut z = self.z.clone();
        let mut y = self.y.clone();
        let mut prim = f64::INFINITY;
        let mut dual = f64::INFINITY;
        let mut converged = false;
        let mut iters = 0;

        for it in 1..=s.max_iters {
            iters = it;
            let rhs = s.sigma * &x - &lin + self.m.tr_mul(&(self.rho * &z - &y));
            let xt = self.kkt.solve(&rhs);
            let zt = &self.m * &xt;
            let x_new = s.relax * &xt + (1.0 - s.relax) * &x;
            let z_relaxed = s.relax * &zt + (1.0 - s.relax) * &z;
            let mut z_new = &z_relaxed + &y / self.rho;
            for b in &self.blocks {
                b.project(&mut z_new);
            }
            let y_prev = y.clone();
            y += self.rho * (&z_relaxed - &z_new);
            x = x_new;
            z = z_new;

            if it % s.check_every != 0 && it != s.max_iters {
                continue;
            }
            let mx = &self.m * &x;
            let px = &self.p * &x;
            let mty = self.m.tr_mul(&y);
            prim = Self::inf_norm(&(&mx - &z));
            dual = Self::inf_norm(&(&px + &lin + &mty));
            let eps_prim = s.tol * 10.0;
            let eps_dual = s.tol * (1.0 + Self::inf_norm(&px).max(Self::inf_norm(&mty)).max(Self::inf_norm(&lin)));
            if prim <= eps_prim && dual <= eps_dual {
                converged = true;
                break;
            }

            let dy = &y - &y_prev;
            let dy_norm = Self::inf_norm(&dy);
            if dy_norm > 0.0 {
                let certificate = Self::inf_norm(&self.m.tr_mul(&dy)) <= 1e-9 * dy_norm
                    && self.blocks.iter().map(|b| b.support(&dy)).sum::<f64>() < -1e-9 * dy_norm;
                if certificate {
                    let worst = self
                        .blocks
                        .iter()
                        .max_by(|a, b| {
                            let na = dy.rows(a.start, a.len).amax();
                            let nb = dy.rows(b.start, b.len).amax();
                            na.total_cmp(&nb)
                        })
                        .map(|b| b.label.clone())
                        .unwrap_or_default();
                    // Leave the warm start usable for the next attempt.
                    self.reset_warm_start(None);
                    return Err(Error::Infeasible(format!("robot {}: {worst}", self.cons.owner)));
                }
            }

            // Rebalance ρ between primal and dual progress.
            let sp = Self::inf_norm(&mx).max(Self::inf_norm(&z)).max(1e-12);
            let sd = Self::inf_norm(&px).max(Self::inf_norm(&mty)).max(Self::inf_norm(&lin)).max(1e-12);
            let ratio = ((prim / sp) / (dual / sd).max(1e-300)).sqrt();
            if ratio.is_finite() && !(0.2..=5.0).contains(&ratio) {
                let rho_new = (self.rho * ratio).clamp(1e-6, 1e6);
                if rho_new != self.rho {
                    self.kkt = Self::factor(&self.p, &self.m, s.sigma, rho_new)?;
                    y *= 1.0; // multipliers are scale-free in this form
                    self.rho = rho_new;
                }
            }
        }

        self.x = x.clone();
        self.z = z;
        self.y = y;

        // Controls and copies have exact box projections; apply them so the
        // dynamics and control bounds hold exactly.
        let h = self.cons.horizon;
        let nu = 2 * h;
        for k in 0..h {
            for a in 0..2 {
                x[2 * k + a] = x[2 * k + a].clamp(self.cons.control_lower[a], self.cons.control_upper[a]);
            }
        }
        let ws = self.cons.workspace;
        for c in (nu..self.n).step_by(2) {
            x[c] = x[c].clamp(ws.min.x, ws.max.x);
            x[c + 1] = x[c + 1].clamp(ws.min.y, ws.max.y);
        }
        let zeta = &self.e * &x + &self.e0;
        let controls = (0..h).map(|k| Vector2::new(x[2 * k], x[2 * k + 1])).collect();
        Ok(QpSolution {
            zeta,
            controls,
            iterations: iters,
            inexact: !converged,
            primal_residual: prim,
            dual_residual: dual,
        })
    }
}

/// Solves one local subproblem from a cold start:
/// `argmin (c + Λ)ᵀζ + (q/2)‖ζ‖²` over `ζ ∈ B_i`.
///
/// `neighbor_refs` seeds the virtual copies (usually the neighbors' current
/// stay-put paths).
pub fn solve_local_qp(
    linear: &DVector<f64>,
    q: f64,
    dual_offset: &DVector<f64>,
    cons: &LocalConstraints,
    neighbor_refs: &BTreeMap<usize, Vec<Vec2>>,
    prediction_times: &[f64],
    settings: QpSettings,
) -> Result<PathPlan> {
    if dual_offset.len() != linear.len() {
        return Err(Error::Precondition("dual offset and linear term differ in length".into()));
    }
    if prediction_times.len() != cons.horizon {
        return Err(Error::Precondition(format!(
            "{} prediction times for horizon {}",
            prediction_times.len(),
            cons.horizon
        )));
    }
    let mut qp = LocalQp::new(cons, q, settings)?;
    qp.reset_warm_start(Some(neighbor_refs));
    let sol = qp.solve(&(linear + dual_offset))?;
    let mut plan = PathPlan::from_stacked(cons.owner, &cons.block_ids(), &sol.zeta, prediction_times);
    plan.controls = sol.controls;
    plan.inexact = sol.inexact;
    Ok(plan)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::swarm::Workspace;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::collections::BTreeMap;

    fn cons_single(h: usize, ws: Workspace, p: Vec2, bound: f64) -> LocalConstraints {
        LocalConstraints {
            owner: 1,
            horizon: h,
            workspace: ws,
            own_workspace: None,
            a: Matrix2::identity(),
            b: Matrix2::identity(),
            drift: Vec2::zeros(),
            current_position: p,
            control_lower: Vector2::repeat(-bound),
            control_upper: Vector2::repeat(bound),
            radius: 20.0,
            neighbors: vec![],
            preserved: BTreeMap::new(),
            anchors: vec![],
        }
    }

    fn huge() -> Workspace {
        Workspace::new(Vec2::repeat(-1e4), Vec2::repeat(1e4)).unwrap()
    }

    #[test]
    fn zero_gradient_model_is_minimized_at_anchor() {
        let anchor = DVector::from_vec(vec![1.0, 2.0, 3.0, 4.0]);
        let m = convex_model(0.7, &DVector::zeros(4), &anchor, 2.0).unwrap();
        // Unconstrained minimizer of cᵀζ + (q/2)‖ζ‖² is −c/q.
        assert_relative_eq!(-m.linear() / m.q, anchor, epsilon = 1e-15);
        assert!(convex_model(0.0, &DVector::zeros(4), &anchor, 0.0).is_err());
    }

    #[test]
    fn model_is_first_order_consistent() {
        let anchor = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let grad = DVector::from_vec(vec![0.3, 0.1, -0.7]);
        let m = convex_model(4.2, &grad, &anchor, 1.5).unwrap();
        assert_eq!(m.eval(&anchor), 4.2);
        assert_eq!(m.gradient(&anchor), grad);
    }

    #[test]
    fn collected_form_differs_by_constant() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 6;
        let rand_vec = |rng: &mut ChaCha8Rng| DVector::from_fn(n, |_, _| rng.random_range(-5.0..5.0));
        let m = convex_model(1.3, &rand_vec(&mut rng), &rand_vec(&mut rng), 0.8).unwrap();
        let diffs: Vec<f64> = (0..10)
            .map(|_| {
                let z = rand_vec(&mut rng);
                m.eval(&z) - m.eval_collected(&z)
            })
            .collect();
        for d in &diffs {
            assert_relative_eq!(*d, diffs[0], epsilon = 1e-10);
        }
    }

    #[test]
    fn stay_put_optimum_is_returned() {
        // ∇f + Λ = 0, so the collected linear term is −q·anchor and the
        // anchor (the stay-put plan) is the minimizer.
        let ws = Workspace::new(Vec2::new(0.0, 0.0), Vec2::new(50.0, 50.0)).unwrap();
        let p = Vec2::new(10.0, 12.0);
        let q = 1.0;
        let mut cons = cons_single(2, ws, p, 1.0);
        cons.neighbors = vec![2];
        cons.preserved.insert(2, 20.0);
        let refs = BTreeMap::from([(2, vec![Vec2::new(20.0, 12.0); 2])]);
        let anchor = DVector::from_vec(vec![10.0, 12.0, 10.0, 12.0, 20.0, 12.0, 20.0, 12.0]);
        let plan = solve_local_qp(&(-q * &anchor), q, &DVector::zeros(8), &cons, &refs, &[1.0, 2.0], QpSettings::default()).unwrap();
        assert!(!plan.inexact);
        assert_relative_eq!(plan.stacked(), anchor, epsilon = 1e-6);
        assert!(cons.max_violation(&plan) <= 1e-6);
    }

    #[test]
    fn unconstrained_interior_solution() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut cons = cons_single(3, huge(), Vec2::new(1.0, 1.0), 1e4);
        cons.neighbors = vec![4, 7];
        cons.preserved = BTreeMap::from([(4, 1e5), (7, 1e5)]);
        let dim = cons.dim();
        let c = DVector::from_fn(dim, |_, _| rng.random_range(-10.0..10.0));
        let lam = DVector::from_fn(dim, |_, _| rng.random_range(-1.0..1.0));
        let q = 2.5;
        let plan = solve_local_qp(&c, q, &lam, &cons, &BTreeMap::new(), &[1.0, 2.0, 3.0], QpSettings::default()).unwrap();
        let expect = -(&c + &lam) / q;
        assert_relative_eq!(plan.stacked(), expect, epsilon = 1e-6);
    }

    #[test]
    fn infeasible_anchor_is_reported() {
        let ws = Workspace::new(Vec2::new(0.0, 0.0), Vec2::new(10.0, 10.0)).unwrap();
        let mut cons = cons_single(1, ws, Vec2::new(5.0, 5.0), 1.0);
        // One step moves at most 1 m per axis but the anchor ball is 20 m away.
        cons.anchors.push((Vec2::new(30.0, 5.0), 1.0));
        let r = solve_local_qp(&DVector::zeros(2), 1.0, &DVector::zeros(2), &cons, &BTreeMap::new(), &[1.0], QpSettings::default());
        match r {
            Err(Error::Infeasible(msg)) => assert!(msg.contains("robot 1"), "{msg}"),
            Ok(p) => panic!("expected infeasibility, got inexact={} {:?}", p.inexact, p.own()),
            Err(e) => panic!("unexpected error {e}"),
        }
    }

    #[test]
    fn controls_respect_box_and_reproduce_path() {
        let ws = Workspace::new(Vec2::new(0.0, 0.0), Vec2::new(100.0, 100.0)).unwrap();
        let mut cons = cons_single(3, ws, Vec2::new(50.0, 50.0), 1.0);
        let theta: f64 = 0.4;
        cons.b = Matrix2::new(theta.cos(), -0.5 * theta.sin(), theta.sin(), 0.5 * theta.cos());
        cons.drift = 0.5 * Vec2::new(theta.cos(), theta.sin());
        // Pull hard toward a far target so the controls saturate.
        let target = DVector::from_vec(vec![90.0, 10.0, 90.0, 10.0, 90.0, 10.0]);
        let plan = solve_local_qp(&(-&target), 1.0, &DVector::zeros(6), &cons, &BTreeMap::new(), &[1.0, 2.0, 3.0], QpSettings::default()).unwrap();
        for u in &plan.controls {
            assert!(u.x.abs() <= 1.0 + 1e-12 && u.y.abs() <= 1.0 + 1e-12);
        }
        for (w, r) in plan.own().iter().zip(cons.rollout(&plan.controls)) {
            assert_relative_eq!(*w, r, epsilon = 1e-9);
        }
    }
}
