//! Antipodal grasp synthesis on the fused object cloud.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::cloud::SceneModel;
use crate::error::{Error, Result};
use crate::geom::{angle_deg, tangent_basis, Point, Vector};
use crate::spatial::SpatialGrid;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GripperModel {
    pub max_opening_m: f64,
    pub finger_patch_radius_m: f64,
    pub min_patch_area_m2: f64,
    pub max_curvature: f64,
    pub approach_clearance_m: f64,
}

impl Default for GripperModel {
    fn default() -> Self {
        Self {
            max_opening_m: 0.08,
            finger_patch_radius_m: 0.012,
            min_patch_area_m2: 2e-4,
            max_curvature: 0.03,
            approach_clearance_m: 0.02,
        }
    }
}

impl GripperModel {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.max_opening_m,
            self.finger_patch_radius_m,
            self.min_patch_area_m2,
            self.max_curvature,
            self.approach_clearance_m,
        ];
        if all.iter().all(|v| *v > 0.0) {
            Ok(())
        } else {
            Err(Error::Config("gripper: all parameters must be positive".into()))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GraspConfig {
    pub gripper: GripperModel,
    pub quality_min_deg: f64,
    /// Penalty per degree of grasp-axis tilt out of the horizontal plane.
    pub gravity_weight: f64,
    /// Neighborhood size for normal and curvature estimation.
    pub normal_neighbors: usize,
    /// Maximum angle between each contact normal and the grasp axis.
    pub friction_cone_deg: f64,
}

impl Default for GraspConfig {
    fn default() -> Self {
        Self {
            gripper: GripperModel::default(),
            quality_min_deg: 150.0,
            gravity_weight: 0.5,
            normal_neighbors: 12,
            friction_cone_deg: 15.0,
        }
    }
}

impl GraspConfig {
    pub fn validate(&self) -> Result<()> {
        self.gripper.validate()?;
        if !(0.0..=180.0).contains(&self.quality_min_deg) {
            return Err(Error::Config("grasp: quality_min_deg outside [0, 180]".into()));
        }
        if self.normal_neighbors < 3 {
            return Err(Error::Config("grasp: normal_neighbors must be at least 3".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurfacePoint {
    pub position: Point,
    /// Unit, oriented toward the cameras that observed the point.
    pub normal: Vector,
    /// Surface variation `l0 / (l0 + l1 + l2)`.
    pub curvature: f64,
    /// Filled in by [`with_patch_areas`]; zero until then.
    pub patch_area_m2: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraspCandidate {
    pub a: SurfacePoint,
    pub b: SurfacePoint,
    pub quality_deg: f64,
    pub width_m: f64,
    pub gravity_alignment_deg: f64,
    pub collision_free: bool,
}

impl GraspCandidate {
    pub fn axis(&self) -> Vector {
        (self.b.position - self.a.position) / self.width_m
    }

    pub fn score(&self, gravity_weight: f64) -> f64 {
        self.quality_deg - gravity_weight * self.gravity_alignment_deg
    }
}

/// Angle between the outward normals; 180 for a perfectly antipodal pair.
pub fn grasp_quality_deg(na: &Vector, nb: &Vector) -> f64 {
    angle_deg(na, nb)
}

/// Per-point normals and curvature from the covariance of the `k` nearest
/// neighbors. Each normal is flipped to agree with `view_dirs[i]`, the
/// direction from the point toward its observer. Returns nothing for clouds
/// with fewer than `k` points.
pub fn estimate_surface(points: &[Point], view_dirs: &[Vector], k: usize) -> Vec<SurfacePoint> {
    assert_eq!(points.len(), view_dirs.len());
    if points.len() < k || k < 3 {
        return Vec::new();
    }
    let grid = SpatialGrid::new(points, 0.01);
    points
        .iter()
        .zip(view_dirs)
        .map(|(p, view)| {
            let nn = grid.knn(p, k);
            let mean = nn.iter().fold(Vector::zeros(), |a, &i| a + points[i].coords) / k as f64;
            let mut cov = nalgebra::Matrix3::zeros();
            for &i in &nn {
                let d = points[i].coords - mean;
                cov += d * d.transpose();
            }
            let eig = cov.symmetric_eigen();
            let mut order = [0usize, 1, 2];
            order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
            let l: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i].max(0.0)).collect();
            let total = l[0] + l[1] + l[2];
            let curvature = if total > 0.0 { l[0] / total } else { 0.0 };
            let mut normal: Vector = eig.eigenvectors.column(order[0]).normalize();
            if normal.dot(view) < 0.0 {
                normal = -normal;
            }
            SurfacePoint {
                position: *p,
                normal,
                curvature,
                patch_area_m2: 0.0,
            }
        })
        .collect()
}

/// Same as [`estimate_surface`] with every normal oriented toward one camera.
pub fn estimate_surface_toward(points: &[Point], camera: &Point, k: usize) -> Vec<SurfacePoint> {
    let dirs: Vec<Vector> = points.iter().map(|p| (camera - p).normalize()).collect();
    estimate_surface(points, &dirs, k)
}

/// Neighbors within the finger patch radius projected onto the tangent plane
/// and rasterized into cells centered on the contact. Each occupied cell
/// counts with its area inside the patch disk.
pub fn contact_patch_area(point: &SurfacePoint, cloud: &SpatialGrid, gripper: &GripperModel, cell_m: f64) -> f64 {
    let weights = PatchWeights::new(gripper.finger_patch_radius_m, cell_m);
    patch_area_with(point, cloud, gripper, &weights)
}

fn patch_area_with(point: &SurfacePoint, cloud: &SpatialGrid, gripper: &GripperModel, w: &PatchWeights) -> f64 {
    let (u, v) = tangent_basis(&point.normal);
    let mut cells: Vec<(i64, i64)> = vec![(0, 0)];
    let pts = cloud.points();
    cloud.for_each_within(&point.position, gripper.finger_patch_radius_m, |i, _| {
        let d = pts[i] - point.position;
        let x = (d.dot(&u) / w.cell + 0.5).floor() as i64;
        let y = (d.dot(&v) / w.cell + 0.5).floor() as i64;
        cells.push((x, y));
    });
    // Sorted so the float sum does not depend on visit order.
    cells.sort_unstable();
    cells.dedup();
    cells.iter().map(|&(x, y)| w.get(x, y)).sum()
}

/// Area of each grid cell that lies inside the patch disk.
struct PatchWeights {
    cell: f64,
    half: i64,
    area: Vec<f64>,
}

impl PatchWeights {
    fn new(radius: f64, cell: f64) -> Self {
        const SUB: usize = 16;
        let half = (radius / cell).ceil() as i64 + 1;
        let side = (2 * half + 1) as usize;
        let mut area = vec![0.0; side * side];
        for x in -half..=half {
            for y in -half..=half {
                let mut inside = 0usize;
                for a in 0..SUB {
                    for b in 0..SUB {
                        let px = (x as f64 - 0.5 + (a as f64 + 0.5) / SUB as f64) * cell;
                        let py = (y as f64 - 0.5 + (b as f64 + 0.5) / SUB as f64) * cell;
                        if px * px + py * py <= radius * radius {
                            inside += 1;
                        }
                    }
                }
                area[(x + half) as usize * side + (y + half) as usize] =
                    inside as f64 / (SUB * SUB) as f64 * cell * cell;
            }
        }
        Self { cell, half, area }
    }

    fn get(&self, x: i64, y: i64) -> f64 {
        if x.abs() > self.half || y.abs() > self.half {
            return 0.0;
        }
        let side = 2 * self.half + 1;
        self.area[((x + self.half) * side + y + self.half) as usize]
    }
}

pub fn with_patch_areas(surface: &mut [SurfacePoint], gripper: &GripperModel, cell_m: f64) {
    let pts: Vec<Point> = surface.iter().map(|s| s.position).collect();
    let grid = SpatialGrid::new(&pts, gripper.finger_patch_radius_m.max(cell_m));
    let weights = PatchWeights::new(gripper.finger_patch_radius_m, cell_m);
    for s in surface.iter_mut() {
        s.patch_area_m2 = patch_area_with(s, &grid, gripper, &weights);
    }
}

fn lex(a: &Point, b: &Point) -> Ordering {
    a.x.total_cmp(&b.x)
        .then(a.y.total_cmp(&b.y))
        .then(a.z.total_cmp(&b.z))
}

fn make_candidate(p: &SurfacePoint, q: &SurfacePoint, cfg: &GraspConfig) -> Option<GraspCandidate> {
    let (a, b) = if lex(&p.position, &q.position) == Ordering::Greater {
        (q, p)
    } else {
        (p, q)
    };
    // Cheap dot-product rejections ahead of the exact angle tests.
    if a.normal.dot(&b.normal) > cfg.quality_min_deg.to_radians().cos() + 1e-9 {
        return None;
    }
    let d = b.position - a.position;
    let width = d.norm();
    if width <= 0.0 || width > cfg.gripper.max_opening_m {
        return None;
    }
    let cone = cfg.friction_cone_deg.to_radians().cos() - 1e-9;
    if -a.normal.dot(&d) < cone * width || b.normal.dot(&d) < cone * width {
        return None;
    }
    let quality = grasp_quality_deg(&a.normal, &b.normal);
    if quality < cfg.quality_min_deg {
        return None;
    }
    let axis = d / width;
    // Each finger pushes inward along the axis, against the outward normal.
    if angle_deg(&a.normal, &-axis) > cfg.friction_cone_deg || angle_deg(&b.normal, &axis) > cfg.friction_cone_deg {
        return None;
    }
    Some(GraspCandidate {
        a: *a,
        b: *b,
        quality_deg: quality,
        width_m: width,
        gravity_alignment_deg: axis.z.abs().min(1.0).asin().to_degrees(),
        collision_free: false,
    })
}

fn eligible(s: &SurfacePoint, g: &GripperModel) -> bool {
    s.curvature <= g.max_curvature && s.patch_area_m2 >= g.min_patch_area_m2
}

/// Every pair meeting the width, quality, patch and curvature constraints.
/// Pairs are found through a radius query per point.
pub fn find_candidates(surface: &[SurfacePoint], cfg: &GraspConfig) -> Vec<GraspCandidate> {
    let g = &cfg.gripper;
    let ok: Vec<usize> = (0..surface.len()).filter(|&i| eligible(&surface[i], g)).collect();
    let pts: Vec<Point> = ok.iter().map(|&i| surface[i].position).collect();
    let grid = SpatialGrid::new(&pts, g.max_opening_m / 2.0);
    let mut out = Vec::new();
    for (li, &i) in ok.iter().enumerate() {
        grid.for_each_within(&pts[li], g.max_opening_m, |lj, _| {
            if lj > li {
                if let Some(c) = make_candidate(&surface[i], &surface[ok[lj]], cfg) {
                    out.push(c);
                }
            }
        });
    }
    out.sort_by(|x, y| rank(x, y, cfg.gravity_weight));
    out
}

/// Reference implementation over all pairs.
pub fn find_candidates_exhaustive(surface: &[SurfacePoint], cfg: &GraspConfig) -> Vec<GraspCandidate> {
    let mut out = Vec::new();
    for i in 0..surface.len() {
        for j in i + 1..surface.len() {
            if eligible(&surface[i], &cfg.gripper) && eligible(&surface[j], &cfg.gripper) {
                if let Some(c) = make_candidate(&surface[i], &surface[j], cfg) {
                    out.push(c);
                }
            }
        }
    }
    out.sort_by(|x, y| rank(x, y, cfg.gravity_weight));
    out
}

/// Best first: score, then quality, then lexicographic contact order.
fn rank(x: &GraspCandidate, y: &GraspCandidate, w: f64) -> Ordering {
    y.score(w)
        .total_cmp(&x.score(w))
        .then(y.quality_deg.total_cmp(&x.quality_deg))
        .then(lex(&x.a.position, &y.a.position))
        .then(lex(&x.b.position, &y.b.position))
}

/// Indexed obstacles for collision checks.
pub struct CollisionWorld {
    unexplored: SpatialGrid,
    object: SpatialGrid,
    table_z: f64,
    /// Sweeps start this far outside each contact for object points.
    object_offset_m: f64,
    /// Unexplored points within this distance of a seen surface can never be
    /// cleared by the depth test, so sweeps skip that band.
    unexplored_offset_m: f64,
}

impl CollisionWorld {
    pub fn new(model: &SceneModel, depth_tolerance_m: f64) -> Self {
        let unexplored: Vec<Point> = model.unexplored.unexplored_points().copied().collect();
        let cell = model.unexplored.spacing_m.max(0.01);
        Self {
            unexplored: SpatialGrid::new(&unexplored, cell),
            object: SpatialGrid::new(&model.object_cloud.points, cell),
            // Plane height under the object; the plane is near horizontal.
            table_z: -model.table_plane.0[3] / model.table_plane.0[2].max(1e-6),
            object_offset_m: 2.0 * model.voxel_size_m,
            unexplored_offset_m: depth_tolerance_m + 0.5 * model.voxel_size_m,
        }
    }
}

/// A finger's swept volume: an oriented box outward from one contact.
#[derive(Clone, Copy, Debug)]
pub struct FingerSweep {
    pub contact: Point,
    /// Unit direction from the contact away from the other finger.
    pub outward: Vector,
    pub start_m: f64,
    pub end_m: f64,
    pub half_width_m: f64,
}

impl FingerSweep {
    pub fn contains(&self, p: &Point) -> bool {
        let d = p - self.contact;
        let s = d.dot(&self.outward);
        if s < self.start_m || s > self.end_m {
            return false;
        }
        let (u, v) = tangent_basis(&self.outward);
        d.dot(&u).abs() <= self.half_width_m && d.dot(&v).abs() <= self.half_width_m
    }

    fn bounding_radius(&self) -> (Point, f64) {
        let mid = self.contact + self.outward * (0.5 * (self.start_m + self.end_m));
        let half_len = 0.5 * (self.end_m - self.start_m);
        let r = (half_len * half_len + 2.0 * self.half_width_m * self.half_width_m).sqrt();
        (mid, r)
    }

    fn lowest_z(&self) -> f64 {
        let (u, v) = tangent_basis(&self.outward);
        let mut lo = f64::INFINITY;
        for s in [self.start_m, self.end_m] {
            for a in [-1.0, 1.0] {
                for b in [-1.0, 1.0] {
                    let p = self.contact + self.outward * s + (u * a + v * b) * self.half_width_m;
                    lo = lo.min(p.z);
                }
            }
        }
        lo
    }
}

/// The two finger sweeps: from each contact outward to the open gripper
/// position plus the approach clearance.
pub fn finger_sweeps(cand: &GraspCandidate, gripper: &GripperModel, start_m: f64) -> [FingerSweep; 2] {
    let axis = cand.axis();
    let end = ((gripper.max_opening_m - cand.width_m) / 2.0).max(0.0) + gripper.approach_clearance_m;
    let make = |contact: Point, outward: Vector| FingerSweep {
        contact,
        outward,
        start_m: start_m.min(end),
        end_m: end,
        half_width_m: gripper.finger_patch_radius_m,
    };
    [make(cand.a.position, -axis), make(cand.b.position, axis)]
}

fn any_inside(grid: &SpatialGrid, sweep: &FingerSweep) -> bool {
    let (mid, r) = sweep.bounding_radius();
    let pts = grid.points();
    let mut hit = false;
    grid.for_each_within(&mid, r, |i, _| {
        hit = hit || sweep.contains(&pts[i]);
    });
    hit
}

/// True when the swept fingers are clear of unexplored space, of object
/// points outside the contact patches, and of the table.
pub fn collision_check(cand: &GraspCandidate, world: &CollisionWorld, gripper: &GripperModel) -> bool {
    let obj = finger_sweeps(cand, gripper, world.object_offset_m);
    let unx = finger_sweeps(cand, gripper, world.unexplored_offset_m);
    for k in 0..2 {
        if obj[k].lowest_z() < world.table_z {
            return false;
        }
        if any_inside(&world.object, &obj[k]) || any_inside(&world.unexplored, &unx[k]) {
            return false;
        }
    }
    true
}

/// Best collision-free candidate, by score then quality then point order.
pub fn select_best(cands: &[GraspCandidate], gravity_weight: f64) -> Option<GraspCandidate> {
    cands
        .iter()
        .filter(|c| c.collision_free)
        .min_by(|x, y| rank(x, y, gravity_weight))
        .cloned()
}

/// Surface points of the model's object cloud with patch areas filled in.
pub fn analyze_surface(model: &SceneModel, cfg: &GraspConfig) -> Vec<SurfacePoint> {
    let mut s = estimate_surface(&model.object_cloud.points, &model.object_view_dirs, cfg.normal_neighbors);
    with_patch_areas(&mut s, &cfg.gripper, model.voxel_size_m);
    s
}

/// Full pipeline. Candidates are collision checked lazily in rank order, so
/// the first clear one is exactly what [`select_best`] would pick.
pub fn synthesize(model: &SceneModel, cfg: &GraspConfig, depth_tolerance_m: f64) -> Option<GraspCandidate> {
    if model.object_cloud.is_empty() {
        return None;
    }
    let surface = analyze_surface(model, cfg);
    let cands = find_candidates(&surface, cfg);
    if cands.is_empty() {
        return None;
    }
    let world = CollisionWorld::new(model, depth_tolerance_m);
    cands.into_iter().find_map(|mut c| {
        c.collision_free = collision_check(&c, &world, &cfg.gripper);
        c.collision_free.then_some(c)
    })
}
