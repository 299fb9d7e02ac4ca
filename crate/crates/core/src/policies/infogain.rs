use super::heuristic::{visible_count, Occluders};
use super::{argmax_first, Action, Policy, PolicyContext, PolicyDecision};
use crate::config::{PolicyConfig, RunConfig};
use crate::error::{Error, Result};
use crate::geom::Point;
use crate::grasp::estimate_surface;
use crate::viewsphere::{arc_distance, SphericalPose, ViewsphereConfig};

/// Fixed candidate viewpoints: an optional top view at the polar bound plus
/// rings of equally spaced azimuths. Viewpoints outside the polar bounds
/// are dropped.
pub fn infogain_viewpoints(policy: &PolicyConfig, vs: &ViewsphereConfig) -> Vec<SphericalPose> {
    let mut out = Vec::new();
    if policy.infogain_top_view {
        out.push(SphericalPose::new(vs.radius_m, vs.polar_min_deg, 0.0));
    }
    for ring in &policy.infogain_rings {
        for i in 0..ring.count {
            out.push(SphericalPose::new(vs.radius_m, ring.polar_deg, i as f64 * 360.0 / ring.count as f64));
        }
    }
    out.retain(|p| vs.polar_in_bounds(p.polar_deg));
    out
}

/// Jumps to whichever fixed viewpoint sees the most unexplored points.
pub struct InfoGainPolicy {
    viewpoints: Vec<SphericalPose>,
}

impl InfoGainPolicy {
    pub fn new(cfg: &RunConfig) -> Self {
        Self {
            viewpoints: infogain_viewpoints(&cfg.policy, &cfg.viewsphere),
        }
    }

    pub fn viewpoints(&self) -> &[SphericalPose] {
        &self.viewpoints
    }

    /// Score per viewpoint; visited ones score `None`.
    pub fn scores(
        &self,
        unexplored: &[Point],
        occluders: &Occluders,
        history: &[SphericalPose],
        center: &Point,
        cfg: &RunConfig,
    ) -> Vec<Option<usize>> {
        self.viewpoints
            .iter()
            .map(|v| {
                let visited = history.iter().any(|h| h.key() == v.key());
                (!visited).then(|| visible_count(unexplored, v, center, &cfg.camera, occluders))
            })
            .collect()
    }

    /// Argmax by score; with nothing left to see, the nearest unvisited
    /// viewpoint. Ties go to the lower index.
    pub fn choose(&self, scores: &[Option<usize>], pose: &SphericalPose) -> Option<usize> {
        let values: Vec<f64> = scores.iter().map(|s| s.map_or(-1.0, |s| s as f64)).collect();
        let best = argmax_first(&values)?;
        match scores[best] {
            None => None,
            Some(s) if s > 0 => Some(best),
            Some(_) => {
                let dist: Vec<f64> = scores
                    .iter()
                    .zip(&self.viewpoints)
                    .map(|(s, v)| match s {
                        Some(_) => -arc_distance(pose, v).unwrap_or(f64::INFINITY),
                        None => f64::NEG_INFINITY,
                    })
                    .collect();
                argmax_first(&dist)
            }
        }
    }
}

impl Policy for InfoGainPolicy {
    fn name(&self) -> String {
        "infogain".into()
    }

    fn decide(&mut self, ctx: &mut PolicyContext<'_>) -> Result<PolicyDecision> {
        let cfg = ctx.cfg;
        let surface = estimate_surface(
            &ctx.model.object_cloud.points,
            &ctx.model.object_view_dirs,
            cfg.grasp.normal_neighbors,
        );
        let occluders = Occluders::new(&surface, cfg.policy.occluder_radius_voxels * ctx.model.voxel_size_m);
        let unexplored: Vec<Point> = ctx.model.unexplored.unexplored_points().copied().collect();
        let scores = self.scores(&unexplored, &occluders, ctx.history, &ctx.center, cfg);
        let best = self
            .choose(&scores, &ctx.pose)
            .ok_or_else(|| Error::Harness("every viewpoint already visited".into()))?;
        Ok(PolicyDecision {
            action: Action::Jump {
                pose: self.viewpoints[best],
            },
            scores: scores
                .iter()
                .enumerate()
                .filter_map(|(i, s)| s.map(|s| (i.to_string(), s as f64)))
                .collect(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Vector;
    use crate::grasp::SurfacePoint;

    #[test]
    fn thirty_four_viewpoints_on_the_sphere() {
        let cfg = RunConfig::default();
        let vps = infogain_viewpoints(&cfg.policy, &cfg.viewsphere);
        assert_eq!(vps.len(), 34);
        let center = Point::new(0.01, -0.02, 0.03);
        for v in &vps {
            assert!(((v.position(&center) - center).norm() - 0.4).abs() < 1e-12);
            assert!(cfg.viewsphere.polar_in_bounds(v.polar_deg));
        }
        let keys: std::collections::BTreeSet<_> = vps.iter().map(|v| v.key()).collect();
        assert_eq!(keys.len(), 34);
        assert_eq!(vps, infogain_viewpoints(&cfg.policy, &cfg.viewsphere));
    }

    #[test]
    fn ties_and_empty_scenes_resolve_by_index() {
        let cfg = RunConfig::default();
        let pol = InfoGainPolicy::new(&cfg);
        let n = pol.viewpoints().len();

        let mut tied = vec![Some(5); n];
        tied[0] = None;
        assert_eq!(pol.choose(&tied, &SphericalPose::new(0.4, 50.0, 0.0)), Some(1));

        // Nothing unexplored: every score is zero, so take the nearest.
        let occ = Occluders::new(&[], 0.005);
        let start = SphericalPose::new(0.4, 50.0, 0.0);
        let scores = pol.scores(&[], &occ, &[start], &Point::origin(), &cfg);
        assert!(scores.iter().all(|s| *s == Some(0) || s.is_none()));
        // The start coincides with ring-50 index 0, which is visited; the two
        // ring neighbors at +-30 deg are equally near and the lower index wins.
        let pick = pol.choose(&scores, &start).unwrap();
        let v = pol.viewpoints()[pick];
        assert_eq!((v.polar_deg, v.azimuth_deg), (50.0, 30.0));
    }

    #[test]
    fn counts_only_unoccluded_points() {
        let cfg = RunConfig::default();
        let pol = InfoGainPolicy::new(&cfg);
        // A horizontal plate above one unexplored point: only side views see it.
        let plate: Vec<SurfacePoint> = (-8..=8)
            .flat_map(|i| (-8..=8).map(move |j| (i, j)))
            .map(|(i, j)| SurfacePoint {
                position: Point::new(i as f64 * 0.005, j as f64 * 0.005, 0.06),
                normal: Vector::z(),
                curvature: 0.0,
                patch_area_m2: 0.0,
            })
            .collect();
        let occ = Occluders::new(&plate, 0.005);
        let hidden = [Point::new(0.0, 0.0, 0.02)];
        let scores = pol.scores(&hidden, &occ, &[], &Point::new(0.0, 0.0, 0.02), &cfg);
        assert_eq!(scores[0], Some(0), "the plate hides the point from above");
        let ring75 = 1 + 8 + 12;
        assert!(scores[ring75..].iter().all(|s| *s == Some(1)));
    }
}
