use std::sync::OnceLock;

use avgrasp::catalog::resolve_object;
use avgrasp::config::RunConfig;
use avgrasp::geom::{Point, Vector};
use avgrasp::grasp::{analyze_surface, collision_check, find_candidates, grasp_quality_deg, synthesize, CollisionWorld};
use avgrasp::mesh::Mesh;
use avgrasp::ml::Pca;
use avgrasp::policies::useful_points;
use avgrasp::sim::Simulator;
use avgrasp::viewsphere::SphericalPose;
use proptest::prelude::*;

const OBJECTS: [&str; 4] = ["mug", "hex_prism", "bracket", "prism10x8x4"];

fn meshes() -> &'static Vec<(String, Mesh)> {
    static M: OnceLock<Vec<(String, Mesh)>> = OnceLock::new();
    M.get_or_init(|| OBJECTS.iter().map(|o| resolve_object(o).unwrap()).collect())
}

fn lattice_pose() -> impl Strategy<Value = SphericalPose> {
    (0usize..4, 0usize..18).prop_map(|(p, a)| SphericalPose::new(0.4, 10.0 + 20.0 * p as f64, 20.0 * a as f64))
}

fn unit_vector() -> impl Strategy<Value = Vector> {
    (-1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0)
        .prop_filter("non-zero", |(x, y, z)| x * x + y * y + z * z > 1e-3)
        .prop_map(|(x, y, z)| Vector::new(x, y, z).normalize())
}

proptest! {
    #[test]
    fn quality_is_symmetric_and_bounded(a in unit_vector(), b in unit_vector()) {
        let q = grasp_quality_deg(&a, &b);
        prop_assert!((q - grasp_quality_deg(&b, &a)).abs() < 1e-9);
        prop_assert!((0.0..=180.0).contains(&q));
        prop_assert!((grasp_quality_deg(&a, &-a) - 180.0).abs() < 1e-6);
    }

    #[test]
    fn pca_round_trips_on_its_span(
        rows in proptest::collection::vec(proptest::collection::vec(-1.0f64..1.0, 6), 10..30),
        z in proptest::collection::vec(-1.0f64..1.0, 3),
    ) {
        let pca = Pca::fit(&rows, 3).unwrap();
        let x = pca.inverse_transform(&z);
        let back = pca.transform(&x);
        for (u, v) in z.iter().zip(&back) {
            prop_assert!((u - v).abs() < 1e-6);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 8, ..ProptestConfig::default() })]

    /// Adding a view never loses explored space, voxels or grasps.
    #[test]
    fn more_views_only_add_information(
        object in 0usize..OBJECTS.len(),
        rotation in 0u32..360,
        first in lattice_pose(),
        second in lattice_pose(),
    ) {
        let cfg = RunConfig::default();
        let tol = cfg.cloud.depth_tolerance_m();
        let (name, mesh) = &meshes()[object];
        let mut sim = Simulator::new(name, mesh, rotation as f64, first, &cfg);
        let one = sim.model(&[first]);
        let two = sim.model(&[first, second]);

        prop_assert!(two.unexplored.unexplored_count() <= one.unexplored.unexplored_count());
        for (a, b) in one.unexplored.explored.iter().zip(&two.unexplored.explored) {
            prop_assert!(!a || *b, "an explored point came back");
        }
        for k in one.voxels.cells.keys() {
            prop_assert!(two.voxels.cells.contains_key(k));
        }

        // Candidates cleared in the first model stay clear of unexplored space.
        let cands = find_candidates(&analyze_surface(&one, &cfg.grasp), &cfg.grasp);
        let w1 = CollisionWorld::new(&one, tol);
        let mut unexplored_only = one.clone();
        unexplored_only.unexplored = two.unexplored.clone();
        let w2 = CollisionWorld::new(&unexplored_only, tol);
        for c in cands.iter().filter(|c| collision_check(c, &w1, &cfg.grasp.gripper)) {
            prop_assert!(collision_check(c, &w2, &cfg.grasp.gripper));
        }

        prop_assert_eq!(synthesize(&two, &cfg.grasp, tol), synthesize(&two, &cfg.grasp, tol));
    }

    /// Every returned grasp meets the width, quality, patch and curvature limits
    /// and keeps its fingers out of unexplored space.
    #[test]
    fn returned_grasps_satisfy_every_constraint(
        object in 0usize..OBJECTS.len(),
        rotation in 0u32..360,
        first in lattice_pose(),
        second in lattice_pose(),
    ) {
        let cfg = RunConfig::default();
        let tol = cfg.cloud.depth_tolerance_m();
        let (name, mesh) = &meshes()[object];
        let mut sim = Simulator::new(name, mesh, rotation as f64, first, &cfg);
        let opposite = SphericalPose::new(0.4, first.polar_deg, first.azimuth_deg + 180.0);
        let model = sim.model(&[first, second, opposite]);
        if let Some(g) = synthesize(&model, &cfg.grasp, tol) {
            let gr = &cfg.grasp.gripper;
            prop_assert!(g.width_m <= gr.max_opening_m + 1e-12);
            prop_assert!((g.width_m - (g.a.position - g.b.position).norm()).abs() < 1e-12);
            prop_assert!(g.quality_deg >= cfg.grasp.quality_min_deg);
            for p in [&g.a, &g.b] {
                prop_assert!(p.patch_area_m2 >= gr.min_patch_area_m2);
                prop_assert!(p.curvature <= gr.max_curvature);
                prop_assert!((p.normal.norm() - 1.0).abs() < 1e-9);
            }
            prop_assert!(collision_check(&g, &CollisionWorld::new(&model, tol), gr));
        }
    }

    /// The 3D heuristic only ever scores points that are still unexplored.
    #[test]
    fn useful_points_are_unexplored(
        object in 0usize..OBJECTS.len(),
        rotation in 0u32..360,
        pose in lattice_pose(),
        cone in 5.0f64..90.0,
    ) {
        let cfg = RunConfig::default();
        let (name, mesh) = &meshes()[object];
        let mut sim = Simulator::new(name, mesh, rotation as f64, pose, &cfg);
        let model = sim.model(&[pose]);
        let unexplored: Vec<Point> = model.unexplored.unexplored_points().copied().collect();
        let surface = analyze_surface(&model, &cfg.grasp);
        let useful = useful_points(&unexplored, &surface, cfg.grasp.gripper.max_opening_m, cone);
        prop_assert!(useful.len() <= unexplored.len());
        for p in &useful {
            prop_assert!(unexplored.contains(p));
        }
    }
}
