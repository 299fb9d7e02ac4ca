use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::haf::build_state;
use crate::config::RunConfig;
use crate::mesh::Mesh;
use crate::policies::random_direction;
use crate::sim::Simulator;
use crate::viewsphere::{neighbor, Direction, SphericalPose, ViewsphereConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub object: String,
    pub rotation_deg: f64,
    pub start: SphericalPose,
    pub state: Vec<f64>,
    pub label: Direction,
    /// Length of the shortest successful rollout.
    pub path_len: usize,
}

/// Shortest successful random rollout from `start`, as (first direction,
/// length). For each direction in canonical order, `rollouts` walks begin
/// with that direction and continue at random. Walks longer than the best
/// found so far are cut short since they cannot replace it.
pub fn label_start(
    sim: &mut Simulator,
    start: SphericalPose,
    rollouts: usize,
    max_len: usize,
    vs: &ViewsphereConfig,
    rng: &mut impl Rng,
) -> Option<(Direction, usize)> {
    let mut best: Option<(Direction, usize)> = None;
    for dir in Direction::ALL {
        let Some(first) = neighbor(&start, dir, 1, vs) else {
            continue;
        };
        for _ in 0..rollouts {
            let limit = best.map_or(max_len, |(_, l)| l - 1);
            if limit == 0 {
                return best;
            }
            let mut history = vec![start, first];
            let mut pose = first;
            for len in 1..=limit {
                if sim.grasp(&history).is_some() {
                    if best.is_none_or(|(_, l)| len < l) {
                        best = Some((dir, len));
                    }
                    break;
                }
                if len == limit {
                    break;
                }
                let d = random_direction(&pose, vs, rng).expect("lattice poses have neighbors");
                pose = neighbor(&pose, d, 1, vs).expect("direction was valid");
                history.push(pose);
            }
        }
    }
    best
}

/// Random lattice start: a polar ring reachable from the polar bound and an
/// azimuth on the step grid.
pub fn random_start(vs: &ViewsphereConfig, rng: &mut impl Rng) -> SphericalPose {
    let rings = ((vs.polar_max_deg - vs.polar_min_deg) / vs.step_deg).floor() as usize + 1;
    let cols = (360.0 / vs.step_deg).round().max(1.0) as usize;
    let polar = vs.polar_min_deg + rng.random_range(0..rings) as f64 * vs.step_deg;
    let azimuth = rng.random_range(0..cols) as f64 * vs.step_deg;
    SphericalPose::new(vs.radius_m, polar, azimuth)
}

fn pose_seed(seed: u64, object: usize, pose: usize) -> u64 {
    seed ^ (object as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ (pose as u64).wrapping_mul(0xd1b5_4a32_d192_ed03)
}

/// Labelled (state, direction) pairs. Each object gets `poses_per_object`
/// random rotations and start cells; starts that are already graspable or
/// never succeed are skipped. Output order is deterministic.
pub fn generate_selfsup_dataset(
    objects: &[(String, Mesh)],
    poses_per_object: usize,
    cfg: &RunConfig,
    seed: u64,
) -> Vec<Sample> {
    let jobs: Vec<(usize, usize)> = (0..objects.len())
        .flat_map(|o| (0..poses_per_object).map(move |p| (o, p)))
        .collect();
    jobs.par_iter()
        .map(|&(o, p)| {
            let mut rng = ChaCha8Rng::seed_from_u64(pose_seed(seed, o, p));
            let rotation = rng.random_range(0..360u32) as f64;
            let start = random_start(&cfg.viewsphere, &mut rng);
            let (name, mesh) = &objects[o];
            let mut sim = Simulator::new(name, mesh, rotation, start, cfg);
            let (model, grasp) = sim.model_and_grasp(&[start]);
            if grasp.is_some() {
                return None;
            }
            let (label, path_len) = label_start(
                &mut sim,
                start,
                cfg.ml.selfsup_rollouts,
                cfg.ml.selfsup_rollout_steps,
                &cfg.viewsphere,
                &mut rng,
            )?;
            Some(Sample {
                object: name.clone(),
                rotation_deg: rotation,
                start,
                state: build_state(&model, &start, cfg.ml.haf_grid, &sim.center(), cfg.ml.haf_region_m),
                label,
                path_len,
            })
        })
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect()
}

/// Deterministic split: every `k`-th sample is held out, where `k` follows
/// from the held-out fraction.
pub fn split_heldout(samples: &[Sample], fraction: f64) -> (Vec<&Sample>, Vec<&Sample>) {
    let k = if fraction > 0.0 { (1.0 / fraction).round().max(2.0) as usize } else { usize::MAX };
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (i, s) in samples.iter().enumerate() {
        if k != usize::MAX && i % k == k - 1 {
            test.push(s);
        } else {
            train.push(s);
        }
    }
    (train, test)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::resolve_object;

    #[test]
    fn starts_lie_on_the_lattice() {
        let vs = ViewsphereConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let s = random_start(&vs, &mut rng);
            assert!([10.0, 30.0, 50.0, 70.0].contains(&s.polar_deg));
            assert_eq!(s.azimuth_deg % 20.0, 0.0);
        }
    }

    #[test]
    fn unique_one_step_solution_becomes_the_label() {
        let cfg = RunConfig::default();
        let (name, mesh) = resolve_object("prism10x8x4").unwrap();
        let start = cfg.start_pose();
        let vs = &cfg.viewsphere;
        // Oracle: try every single step and find a rotation where exactly one
        // direction yields a grasp.
        for rot in (0..360).step_by(15) {
            let mut sim = Simulator::new(&name, &mesh, rot as f64, start, &cfg);
            if sim.grasp(&[start]).is_some() {
                continue;
            }
            let winners: Vec<Direction> = Direction::ALL
                .into_iter()
                .filter(|d| {
                    neighbor(&start, *d, 1, vs).is_some_and(|n| sim.grasp(&[start, n]).is_some())
                })
                .collect();
            if winners.len() != 1 {
                continue;
            }
            let mut rng = ChaCha8Rng::seed_from_u64(rot as u64);
            let got = label_start(&mut sim, start, 3, 5, vs, &mut rng);
            assert_eq!(got, Some((winners[0], 1)), "rotation {rot}");
            return;
        }
        panic!("no rotation with a unique one-step solution");
    }

    #[test]
    fn fixed_seed_gives_identical_dataset() {
        let mut cfg = RunConfig::default();
        cfg.ml.selfsup_rollouts = 1;
        cfg.ml.selfsup_rollout_steps = 3;
        let objects = vec![resolve_object("prism6x6x6").unwrap()];
        let a = generate_selfsup_dataset(&objects, 3, &cfg, 11);
        let b = generate_selfsup_dataset(&objects, 3, &cfg, 11);
        assert_eq!(a, b);
        for s in &a {
            assert_eq!(s.state.len(), 52);
            assert!(s.path_len >= 1 && s.path_len <= 3);
        }
    }
}
