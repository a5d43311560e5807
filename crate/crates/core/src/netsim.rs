//! Simulated sensing and lossless neighbor-to-neighbor exchange.

use std::collections::BTreeSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{ensure_finite, Error, Result};
use crate::gp::{Dataset, GpModel, Sample};
use crate::kernel::{Hyperparams, SpaceTime};
use crate::planner::PathPlan;
use crate::swarm::{CommGraph, Vec2, Workspace};

/// Measurement oracle: the posterior mean of a GP fitted to the full
/// reference dataset, plus seeded Gaussian noise.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    model: GpModel,
    workspace: Workspace,
    noise_std: f64,
    rng: ChaCha8Rng,
}

impl GroundTruth {
    pub fn new(data: &Dataset, h: &Hyperparams, prior_mean: f64, workspace: Workspace, noise_std: f64, seed: u64) -> Result<Self> {
        if !(noise_std >= 0.0 && noise_std.is_finite()) {
            return Err(Error::Domain(format!("noise_std must be non-negative (got {noise_std})")));
        }
        Ok(Self {
            model: GpModel::fit(data, h, prior_mean)?,
            workspace,
            noise_std,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn model(&self) -> &GpModel {
        &self.model
    }

    pub fn noise_std(&self) -> f64 {
        self.noise_std
    }

    /// Noise-free field value.
    pub fn field(&self, p: &Vec2, t: f64) -> Result<f64> {
        self.model.predict_mean(&SpaceTime::new(vec![p.x, p.y], t))
    }

    /// One noisy reading. Each call with positive `noise_std` consumes one
    /// normal draw, so the output depends on the call sequence.
    pub fn measure(&mut self, p: &Vec2, t: f64) -> Result<f64> {
        ensure_finite("measurement location", &[p.x, p.y, t])?;
        if !self.workspace.contains(p) {
            return Err(Error::Domain(format!("measurement at ({}, {}) lies outside the workspace", p.x, p.y)));
        }
        if t < 0.0 {
            return Err(Error::Domain(format!("measurement time {t} is negative")));
        }
        let mean = self.field(p, t)?;
        if self.noise_std == 0.0 {
            return Ok(mean);
        }
        let normal = Normal::new(0.0, self.noise_std).expect("validated std");
        Ok(mean + normal.sample(&mut self.rng))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    Samples(Vec<Sample>),
    Plan(PathPlan),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Message {
    pub sender: usize,
    pub step: usize,
    pub payload: Payload,
}

impl Message {
    pub fn validate(&self) -> Result<()> {
        if let Payload::Samples(s) = &self.payload {
            let mut seen = BTreeSet::new();
            if let Some(dup) = s.iter().find(|x| !seen.insert(x.key)) {
                return Err(Error::Integrity(format!("message from robot {} repeats key {:?}", self.sender, dup.key)));
            }
        }
        Ok(())
    }
}

/// Set union of `own` and every neighbor dataset, plus the robot's newest
/// reading. Fusion is idempotent and independent of argument order;
/// conflicting samples under one key are an error.
pub fn fuse_datasets(own: &Dataset, neighbors: &[&Dataset], new: Option<&Sample>) -> Result<Dataset> {
    let mut out = own.clone();
    for d in neighbors {
        for s in d.samples() {
            out.insert(s)?;
        }
    }
    if let Some(s) = new {
        if out.contains(s.key) {
            return Err(Error::Precondition(format!("provenance key {:?} is already in use", s.key)));
        }
        out.insert(s.clone())?;
    }
    Ok(out)
}

/// Delivers each message to every current neighbor of its sender. Inbox
/// `id − 1` lists messages by ascending sender, preserving outbox order.
pub fn exchange_round(graph: &CommGraph, outbox: &[Message]) -> Result<Vec<Vec<Message>>> {
    let mut inbox = vec![Vec::new(); graph.num_vertices()];
    let mut order: Vec<&Message> = outbox.iter().collect();
    order.sort_by_key(|m| m.sender);
    for m in order {
        if !graph.contains(m.sender) {
            return Err(Error::Precondition(format!("sender {} is not in the graph", m.sender)));
        }
        m.validate()?;
        for &j in graph.neighbors(m.sender) {
            inbox[j - 1].push(m.clone());
        }
    }
    Ok(inbox)
}
