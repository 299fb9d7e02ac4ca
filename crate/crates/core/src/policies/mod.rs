//! Next-viewpoint policies.

mod baseline;
mod bfs;
mod heuristic;
mod infogain;

use serde::{Deserialize, Serialize};

pub use baseline::{brick_direction, random_direction, BrickPolicy, RandomPolicy};
pub use bfs::{bfs_search, BfsPolicy, BfsResult};
pub use heuristic::{
    dilate, h2d_scores, h3d_scores, project_mask, useful_points, H2dPolicy, H3dPolicy, Occluders,
};
pub use infogain::{infogain_viewpoints, InfoGainPolicy};

use crate::cloud::SceneModel;
use crate::config::RunConfig;
use crate::error::Result;
use crate::geom::Point;
use crate::sim::Simulator;
use crate::viewsphere::{Direction, SphericalPose};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Action {
    /// Walk `steps` unit moves in one direction.
    Move { direction: Direction, steps: u32 },
    /// Fly straight to an arbitrary viewpoint.
    Jump { pose: SphericalPose },
    /// Give up: the policy has established that no grasp is reachable.
    Stop,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyDecision {
    pub action: Action,
    /// Score per evaluated option, labelled by direction name or viewpoint index.
    pub scores: Vec<(String, f64)>,
}

impl PolicyDecision {
    pub fn step(direction: Direction) -> Self {
        Self {
            action: Action::Move { direction, steps: 1 },
            scores: Vec::new(),
        }
    }
}

/// Everything a policy may look at when choosing the next view.
pub struct PolicyContext<'a> {
    pub model: &'a SceneModel,
    pub pose: SphericalPose,
    pub step: usize,
    /// Viewpoints observed so far, start first.
    pub history: &'a [SphericalPose],
    pub center: Point,
    pub cfg: &'a RunConfig,
    pub sim: &'a mut Simulator,
}

pub trait Policy {
    fn name(&self) -> String;

    /// Called before each episode with that episode's seed.
    fn begin_episode(&mut self, _seed: u64) {}

    fn decide(&mut self, ctx: &mut PolicyContext<'_>) -> Result<PolicyDecision>;

    /// Objects this policy was trained on; it must not be evaluated on them.
    fn training_manifest(&self) -> &[String] {
        &[]
    }
}

/// Lowest-index maximum, so ties go to the first option.
pub(crate) fn argmax_first(scores: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, s) in scores.iter().enumerate() {
        if best.is_none_or(|b| *s > scores[b]) {
            best = Some(i);
        }
    }
    best
}
