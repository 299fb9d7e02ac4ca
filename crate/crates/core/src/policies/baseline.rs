use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Policy, PolicyContext, PolicyDecision};
use crate::error::{Error, Result};
use crate::viewsphere::{enumerate_neighbors, Direction, SphericalPose, ViewsphereConfig};

/// Uniform over the valid neighbors. Revisits are allowed.
pub fn random_direction(pose: &SphericalPose, cfg: &ViewsphereConfig, rng: &mut impl Rng) -> Option<Direction> {
    let valid = enumerate_neighbors(pose, cfg);
    if valid.is_empty() {
        return None;
    }
    Some(valid[rng.random_range(0..valid.len())].0)
}

/// Northeast, or the first valid direction clockwise from it.
pub fn brick_direction(pose: &SphericalPose, cfg: &ViewsphereConfig) -> Option<Direction> {
    let valid = enumerate_neighbors(pose, cfg);
    (0..8)
        .map(|k| Direction::ALL[(Direction::NE.index() + k) % 8])
        .find(|d| valid.iter().any(|(v, _)| v == d))
}

pub struct RandomPolicy {
    rng: ChaCha8Rng,
}

impl RandomPolicy {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

impl Policy for RandomPolicy {
    fn name(&self) -> String {
        "random".into()
    }

    fn begin_episode(&mut self, seed: u64) {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
    }

    fn decide(&mut self, ctx: &mut PolicyContext<'_>) -> Result<PolicyDecision> {
        random_direction(&ctx.pose, &ctx.cfg.viewsphere, &mut self.rng)
            .map(PolicyDecision::step)
            .ok_or_else(|| Error::Harness("no valid neighbor".into()))
    }
}

pub struct BrickPolicy;

impl Policy for BrickPolicy {
    fn name(&self) -> String {
        "brick".into()
    }

    fn decide(&mut self, ctx: &mut PolicyContext<'_>) -> Result<PolicyDecision> {
        brick_direction(&ctx.pose, &ctx.cfg.viewsphere)
            .map(PolicyDecision::step)
            .ok_or_else(|| Error::Harness("no valid neighbor".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::viewsphere::neighbor;

    #[test]
    fn random_is_reproducible_and_uniform() {
        let cfg = ViewsphereConfig::default();
        let pose = SphericalPose::new(0.4, 50.0, 0.0);
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..20).map(|_| random_direction(&pose, &cfg, &mut rng).unwrap()).collect::<Vec<_>>()
        };
        assert_eq!(draw(5), draw(5));

        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut counts = [0usize; 8];
        let n = 100_000;
        for _ in 0..n {
            counts[random_direction(&pose, &cfg, &mut rng).unwrap().index()] += 1;
        }
        for c in counts {
            assert!((c as f64 / n as f64 - 0.125).abs() < 0.01);
        }

        let top = SphericalPose::new(0.4, 10.0, 0.0);
        let valid: Vec<Direction> = enumerate_neighbors(&top, &cfg).into_iter().map(|(d, _)| d).collect();
        assert_eq!(valid.len(), 5);
        for _ in 0..1000 {
            assert!(valid.contains(&random_direction(&top, &cfg, &mut rng).unwrap()));
        }
    }

    #[test]
    fn brick_goes_northeast_then_slides_east() {
        let cfg = ViewsphereConfig::default();
        assert_eq!(brick_direction(&SphericalPose::new(0.4, 50.0, 0.0), &cfg), Some(Direction::NE));
        assert_eq!(brick_direction(&SphericalPose::new(0.4, 10.0, 0.0), &cfg), Some(Direction::E));

        let mut pose = SphericalPose::new(0.4, 70.0, 0.0);
        let mut unwrapped = 0.0;
        for _ in 0..12 {
            let d = brick_direction(&pose, &cfg).unwrap();
            let next = neighbor(&pose, d, 1, &cfg).unwrap();
            unwrapped += 20.0;
            assert!(next.polar_deg <= pose.polar_deg);
            pose = next;
        }
        assert!((pose.polar_deg - 10.0).abs() < 1e-9);
        assert!((unwrapped - 240.0f64).abs() < 1e-9);
        assert!((pose.azimuth_deg - 240.0).abs() < 1e-6);
    }
}
