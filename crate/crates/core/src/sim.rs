//! Per-(object, rotation) simulator: renders viewpoints on demand and
//! answers "is there a grasp after seeing this set of views?".
//!
//! Fusion is order-independent, so the model after any sequence of views
//! depends only on the *set* of viewpoints. Both the per-view products and
//! the grasp verdict per set are cached, which makes exhaustive search and
//! replaying several policies on one start affordable.

use std::collections::HashMap;
use std::sync::Arc;

use crate::camera::{depth_to_cloud, DepthImage};
use crate::cloud::{init_unexplored, visibility_mask, voxelize_view, SceneModel, SegmentParams, UnexploredGrid, VoxelMap};
use crate::config::RunConfig;
use crate::geom::Point;
use crate::grasp::{synthesize, GraspCandidate};
use crate::mesh::Mesh;
use crate::render::{add_depth_noise, place_object, render_depth, Scene, SceneObject};
use crate::viewsphere::{PoseKey, SphericalPose};

/// What one rendered viewpoint contributes to any model that includes it.
#[derive(Clone, Debug)]
pub struct ViewData {
    pub pose: SphericalPose,
    pub camera: Point,
    pub voxels: VoxelMap,
    /// Unexplored-grid points this view clears.
    pub explored: Vec<bool>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SimStats {
    pub renders: usize,
    pub grasp_evaluations: usize,
    pub grasp_cache_hits: usize,
}

pub struct Simulator {
    pub object_name: String,
    pub object: SceneObject,
    scene: Scene,
    cfg: RunConfig,
    start: SphericalPose,
    grid: UnexploredGrid,
    views: HashMap<PoseKey, Arc<ViewData>>,
    grasps: HashMap<Vec<PoseKey>, Option<GraspCandidate>>,
    pub stats: SimStats,
}

impl Simulator {
    /// Places the mesh, renders the start view and seeds the unexplored grid
    /// from what that view segments as object.
    pub fn new(object_name: &str, mesh: &Mesh, rotation_deg: f64, start: SphericalPose, cfg: &RunConfig) -> Self {
        let object = place_object(mesh, rotation_deg);
        let scene = Scene::new(Some(&object), cfg.scene.table_side_m);
        let mut sim = Simulator {
            object_name: object_name.to_string(),
            object,
            scene,
            cfg: cfg.clone(),
            start,
            grid: UnexploredGrid::default(),
            views: HashMap::new(),
            grasps: HashMap::new(),
            stats: SimStats::default(),
        };
        let img = sim.render(&start);
        let first = voxelize_view(&depth_to_cloud(&img), &sim.center(), &cfg.cloud);
        let seeded = SceneModel::from_voxels(first, UnexploredGrid::default(), &sim.seg_params());
        sim.grid = init_unexplored(
            &seeded.object_cloud.points,
            cfg.cloud.unexplored_spacing_m,
            cfg.cloud.unexplored_margin_m,
            &seeded.table_plane,
        );
        sim
    }

    pub fn config(&self) -> &RunConfig {
        &self.cfg
    }

    pub fn scene(&self) -> &Scene {
        &self.scene
    }

    pub fn center(&self) -> Point {
        self.scene.object_center()
    }

    pub fn start(&self) -> SphericalPose {
        self.start
    }

    /// The unexplored grid with nothing explored yet.
    pub fn initial_grid(&self) -> &UnexploredGrid {
        &self.grid
    }

    fn seg_params(&self) -> SegmentParams {
        SegmentParams::from(&self.cfg.cloud)
    }

    pub fn canonical(&self, pose: &SphericalPose) -> SphericalPose {
        pose.key().pose(self.cfg.viewsphere.radius_m)
    }

    /// Renders a viewpoint, with the configured depth noise.
    pub fn render(&mut self, pose: &SphericalPose) -> DepthImage {
        self.stats.renders += 1;
        let pose = self.canonical(pose);
        let mut img = render_depth(&self.scene, &pose, &self.cfg.camera);
        let k = pose.key();
        let seed = self.cfg.seed ^ (k.polar_mdeg as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ (k.azimuth_mdeg as u64);
        add_depth_noise(&mut img, self.cfg.scene.depth_noise_sigma_m, seed);
        img
    }

    pub fn view(&mut self, pose: &SphericalPose) -> Arc<ViewData> {
        let key = pose.key();
        if let Some(v) = self.views.get(&key) {
            return v.clone();
        }
        let img = self.render(pose);
        let cloud = depth_to_cloud(&img);
        let data = Arc::new(ViewData {
            pose: self.canonical(pose),
            camera: cloud.camera,
            voxels: voxelize_view(&cloud, &self.center(), &self.cfg.cloud),
            explored: visibility_mask(&self.grid.points, &img, self.cfg.cloud.depth_tolerance_m()),
        });
        self.views.insert(key, data.clone());
        data
    }

    /// Sorted, deduplicated viewpoint identities.
    pub fn set_key(poses: &[SphericalPose]) -> Vec<PoseKey> {
        let mut keys: Vec<PoseKey> = poses.iter().map(|p| p.key()).collect();
        keys.sort_unstable();
        keys.dedup();
        keys
    }

    /// The belief after observing every pose in `poses`, in any order.
    /// Revisiting a viewpoint adds nothing: its image is identical.
    pub fn model(&mut self, poses: &[SphericalPose]) -> SceneModel {
        let mut voxels = VoxelMap::new(self.cfg.cloud.voxel_size_m);
        let mut grid = self.grid.clone();
        let radius = self.cfg.viewsphere.radius_m;
        for k in Self::set_key(poses) {
            let v = self.view(&k.pose(radius));
            voxels.merge(&v.voxels);
            for (e, seen) in grid.explored.iter_mut().zip(&v.explored) {
                *e |= *seen;
            }
        }
        SceneModel::from_voxels(voxels, grid, &self.seg_params())
    }

    pub fn grasp(&mut self, poses: &[SphericalPose]) -> Option<GraspCandidate> {
        let key = Self::set_key(poses);
        if let Some(g) = self.grasps.get(&key) {
            self.stats.grasp_cache_hits += 1;
            return g.clone();
        }
        let model = self.model(poses);
        self.evaluate(key, &model)
    }

    /// Model and grasp together, building the model only once.
    pub fn model_and_grasp(&mut self, poses: &[SphericalPose]) -> (SceneModel, Option<GraspCandidate>) {
        let model = self.model(poses);
        let key = Self::set_key(poses);
        let g = match self.grasps.get(&key) {
            Some(g) => {
                self.stats.grasp_cache_hits += 1;
                g.clone()
            }
            None => self.evaluate(key, &model),
        };
        (model, g)
    }

    fn evaluate(&mut self, key: Vec<PoseKey>, model: &SceneModel) -> Option<GraspCandidate> {
        self.stats.grasp_evaluations += 1;
        let g = synthesize(model, &self.cfg.grasp, self.cfg.cloud.depth_tolerance_m());
        self.grasps.insert(key, g.clone());
        g
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::resolve_object;
    use crate::cloud::update_unexplored;
    use crate::viewsphere::{neighbor, Direction};

    #[test]
    fn set_model_matches_incremental_integration() {
        let cfg = RunConfig::default();
        let (name, mesh) = resolve_object("prism6x6x6").unwrap();
        let start = cfg.start_pose();
        let mut sim = Simulator::new(&name, &mesh, 30.0, start, &cfg);
        let e = neighbor(&start, Direction::E, 1, &cfg.viewsphere).unwrap();
        let ne = neighbor(&e, Direction::NE, 1, &cfg.viewsphere).unwrap();

        let mut inc = SceneModel::empty(cfg.cloud.voxel_size_m);
        inc.unexplored = sim.initial_grid().clone();
        let seg = SegmentParams::from(&cfg.cloud);
        let center = sim.center();
        for p in [start, e, ne] {
            let img = sim.render(&p);
            inc.fuse(&voxelize_view(&depth_to_cloud(&img), &center, &cfg.cloud), &seg);
            update_unexplored(&mut inc.unexplored, &img, cfg.cloud.depth_tolerance_m());
        }
        let a = sim.model(&[ne, start, e]);
        let b = sim.model(&[start, e, ne, e]);
        assert_eq!(a.object_cloud, inc.object_cloud);
        assert_eq!(a.unexplored.explored, inc.unexplored.explored);
        assert_eq!(a.object_cloud, b.object_cloud);
        assert_eq!(a.unexplored.explored, b.unexplored.explored);

        let g1 = sim.grasp(&[start, e]);
        let evals = sim.stats.grasp_evaluations;
        assert_eq!(sim.grasp(&[e, start, e]), g1);
        assert_eq!(sim.stats.grasp_evaluations, evals);
    }

    #[test]
    fn grid_surrounds_the_object() {
        let cfg = RunConfig::default();
        let (name, mesh) = resolve_object("prism6x6x6").unwrap();
        let sim = Simulator::new(&name, &mesh, 0.0, cfg.start_pose(), &cfg);
        let g = sim.initial_grid();
        assert!(!g.points.is_empty());
        let region = g.region.unwrap();
        let obj = sim.object.bounds();
        assert!(region.min.x < obj.min.x && region.max.x > obj.max.x);
        assert!(g.points.iter().all(|p| region.contains(p) && p.z >= 0.0));
    }
}
