use std::collections::{HashSet, VecDeque};

use super::{Action, Policy, PolicyContext, PolicyDecision};
use crate::error::Result;
use crate::sim::Simulator;
use crate::viewsphere::{enumerate_neighbors, Direction, PoseKey, SphericalPose, ViewsphereConfig};

#[derive(Clone, Debug, PartialEq)]
pub enum BfsResult {
    Found(Vec<Direction>),
    /// No grasp is reachable within the depth limit.
    Exhausted,
}

/// Breadth-first search over walk states. A state is the current cell plus
/// the set of cells seen so far, which is all the grasp verdict depends on.
/// Children are expanded in canonical direction order, so the first
/// solution found is the shortest and, among those, the lexicographically
/// first path.
pub fn bfs_search(
    sim: &mut Simulator,
    history: &[SphericalPose],
    pose: SphericalPose,
    max_depth: usize,
    cfg: &ViewsphereConfig,
) -> BfsResult {
    let mut seen_set: Vec<SphericalPose> = history.to_vec();
    seen_set.push(pose);
    if sim.grasp(&seen_set).is_some() {
        return BfsResult::Found(Vec::new());
    }
    struct Node {
        pose: SphericalPose,
        views: Vec<SphericalPose>,
        path: Vec<Direction>,
    }
    let state_key = |p: &SphericalPose, views: &[SphericalPose]| -> (PoseKey, Vec<PoseKey>) {
        (p.key(), Simulator::set_key(views))
    };
    let mut visited = HashSet::new();
    visited.insert(state_key(&pose, &seen_set));
    let mut frontier = VecDeque::from([Node {
        pose,
        views: seen_set,
        path: Vec::new(),
    }]);
    for _depth in 1..=max_depth {
        let mut next = VecDeque::new();
        while let Some(node) = frontier.pop_front() {
            for (dir, n) in enumerate_neighbors(&node.pose, cfg) {
                let mut views = node.views.clone();
                if !views.iter().any(|v| v.key() == n.key()) {
                    views.push(n);
                }
                if !visited.insert(state_key(&n, &views)) {
                    continue;
                }
                let mut path = node.path.clone();
                path.push(dir);
                if sim.grasp(&views).is_some() {
                    return BfsResult::Found(path);
                }
                next.push_back(Node { pose: n, views, path });
            }
        }
        frontier = next;
    }
    BfsResult::Exhausted
}

/// Plans the optimal path once per episode, then replays it.
#[derive(Default)]
pub struct BfsPolicy {
    plan: Option<VecDeque<Direction>>,
    pub last_result: Option<BfsResult>,
}

impl BfsPolicy {
    pub fn new() -> Self {
        Self::default()
    }
}

impl Policy for BfsPolicy {
    fn name(&self) -> String {
        "bfs".into()
    }

    fn begin_episode(&mut self, _seed: u64) {
        self.plan = None;
        self.last_result = None;
    }

    fn decide(&mut self, ctx: &mut PolicyContext<'_>) -> Result<PolicyDecision> {
        if self.plan.is_none() {
            let remaining = ctx.cfg.scene.max_steps.saturating_sub(ctx.step);
            let history = &ctx.history[..ctx.history.len().saturating_sub(1)];
            let result = bfs_search(ctx.sim, history, ctx.pose, remaining, &ctx.cfg.viewsphere);
            self.plan = Some(match &result {
                BfsResult::Found(p) => p.iter().copied().collect(),
                BfsResult::Exhausted => VecDeque::new(),
            });
            self.last_result = Some(result);
        }
        let plan = self.plan.as_mut().expect("planned above");
        Ok(match plan.pop_front() {
            Some(d) => PolicyDecision::step(d),
            None => PolicyDecision {
                action: Action::Stop,
                scores: Vec::new(),
            },
        })
    }
}
