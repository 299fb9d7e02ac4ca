//! World belief: voxel fusion of views, table segmentation and the
//! unexplored-region grid.
//!
//! Fusion keeps per-voxel integer sums of quantized coordinates, so the fused
//! cloud is a pure function of the *set* of integrated points: the order in
//! which views arrive never changes a single bit of the result.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::camera::{depth_to_cloud, project_point, DepthImage, OrganizedCloud};
use crate::error::{Error, Result};
use crate::geom::{Aabb, Point, Vector};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CloudConfig {
    pub voxel_size_m: f64,
    pub unexplored_spacing_m: f64,
    /// Inflation of the object bounding box for the unexplored grid.
    pub unexplored_margin_m: f64,
    /// Depth tolerance of the occlusion test, in voxel sizes.
    pub depth_tolerance_voxels: f64,
    pub ransac_distance_m: f64,
    pub ransac_iterations: usize,
    pub ransac_min_inlier_fraction: f64,
    pub ransac_seed: u64,
    pub object_clearance_m: f64,
    /// Views are cropped to a box of this half side around the object center.
    pub workspace_half_extent_m: f64,
    pub workspace_max_z_m: f64,
}

impl Default for CloudConfig {
    fn default() -> Self {
        Self {
            voxel_size_m: 0.005,
            unexplored_spacing_m: 0.01,
            unexplored_margin_m: 0.08,
            depth_tolerance_voxels: 1.5,
            ransac_distance_m: 0.005,
            ransac_iterations: 500,
            ransac_min_inlier_fraction: 0.3,
            ransac_seed: 0x5eed,
            object_clearance_m: 0.008,
            workspace_half_extent_m: 0.15,
            workspace_max_z_m: 0.4,
        }
    }
}

impl CloudConfig {
    pub fn depth_tolerance_m(&self) -> f64 {
        self.depth_tolerance_voxels * self.voxel_size_m
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("voxel_size_m", self.voxel_size_m),
            ("unexplored_spacing_m", self.unexplored_spacing_m),
            ("ransac_distance_m", self.ransac_distance_m),
            ("workspace_half_extent_m", self.workspace_half_extent_m),
        ];
        for (name, v) in positive {
            if !(v > 0.0) {
                return Err(Error::Config(format!("cloud: {name} must be positive")));
            }
        }
        if !(0.0..=1.0).contains(&self.ransac_min_inlier_fraction) {
            return Err(Error::Config("cloud: ransac_min_inlier_fraction outside [0, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct PointCloud {
    pub points: Vec<Point>,
    pub normals: Option<Vec<Vector>>,
}

impl PointCloud {
    pub fn from_points(points: Vec<Point>) -> Self {
        Self { points, normals: None }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn bounds(&self) -> Aabb {
        Aabb::from_points(self.points.iter())
    }
}

pub type VoxelKey = (i32, i32, i32);

pub fn voxel_key(p: &Point, voxel: f64) -> VoxelKey {
    (
        (p.x / voxel).floor() as i32,
        (p.y / voxel).floor() as i32,
        (p.z / voxel).floor() as i32,
    )
}

const QUANT: f64 = 1e9;

fn quantize(v: &Vector) -> [i64; 3] {
    [
        (v.x * QUANT).round() as i64,
        (v.y * QUANT).round() as i64,
        (v.z * QUANT).round() as i64,
    ]
}

fn dequantize(s: &[i64; 3], count: u32) -> Vector {
    let c = count as f64 * QUANT;
    Vector::new(s[0] as f64 / c, s[1] as f64 / c, s[2] as f64 / c)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct VoxelAcc {
    pub sum: [i64; 3],
    /// Sum of unit vectors from each point toward the camera that saw it.
    pub view_sum: [i64; 3],
    pub count: u32,
}

impl VoxelAcc {
    fn add(&mut self, other: &VoxelAcc) {
        for i in 0..3 {
            self.sum[i] += other.sum[i];
            self.view_sum[i] += other.view_sum[i];
        }
        self.count += other.count;
    }
}

/// Order-independent accumulator behind fusion and downsampling.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct VoxelMap {
    pub voxel: f64,
    pub cells: BTreeMap<VoxelKey, VoxelAcc>,
}

impl VoxelMap {
    pub fn new(voxel: f64) -> Self {
        Self {
            voxel,
            cells: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, p: &Point, view_dir: Option<&Vector>) {
        let acc = VoxelAcc {
            sum: quantize(&p.coords),
            view_sum: view_dir.map(quantize).unwrap_or_default(),
            count: 1,
        };
        self.cells.entry(voxel_key(p, self.voxel)).or_default().add(&acc);
    }

    pub fn merge(&mut self, other: &VoxelMap) {
        for (k, acc) in &other.cells {
            self.cells.entry(*k).or_default().add(acc);
        }
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    /// One centroid per occupied voxel, in voxel-key order.
    pub fn centroids(&self) -> Vec<Point> {
        self.cells
            .values()
            .map(|a| Point::from(dequantize(&a.sum, a.count)))
            .collect()
    }

    /// Mean viewing direction per voxel (unit, or zero if never set).
    pub fn view_dirs(&self) -> Vec<Vector> {
        self.cells
            .values()
            .map(|a| {
                let v = dequantize(&a.view_sum, a.count);
                let n = v.norm();
                if n > 1e-12 {
                    v / n
                } else {
                    Vector::zeros()
                }
            })
            .collect()
    }
}

/// One centroid per occupied voxel. Normals, if present, are averaged.
pub fn voxel_downsample(cloud: &PointCloud, voxel_size_m: f64) -> PointCloud {
    let mut map = VoxelMap::new(voxel_size_m);
    match &cloud.normals {
        Some(n) => {
            for (p, v) in cloud.points.iter().zip(n) {
                map.insert(p, Some(v));
            }
        }
        None => {
            for p in &cloud.points {
                map.insert(p, None);
            }
        }
    }
    PointCloud {
        points: map.centroids(),
        normals: cloud.normals.as_ref().map(|_| map.view_dirs()),
    }
}

/// Plane `a x + b y + c z + d = 0` with unit normal `(a, b, c)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Plane(pub [f64; 4]);

impl Plane {
    pub const TABLE: Plane = Plane([0.0, 0.0, 1.0, 0.0]);

    pub fn normal(&self) -> Vector {
        Vector::new(self.0[0], self.0[1], self.0[2])
    }

    pub fn signed_distance(&self, p: &Point) -> f64 {
        self.0[0] * p.x + self.0[1] * p.y + self.0[2] * p.z + self.0[3]
    }

    fn through(p: &Point, n: Vector) -> Plane {
        Plane([n.x, n.y, n.z, -n.dot(&p.coords)])
    }

    /// Upward-facing (c >= 0) version of the same plane.
    fn oriented_up(self) -> Plane {
        if self.0[2] < 0.0 {
            Plane(self.0.map(|x| -x))
        } else {
            self
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Segmentation {
    pub plane: Plane,
    /// Indices into the input cloud.
    pub table: Vec<usize>,
    pub above: Vec<usize>,
}

#[derive(Clone, Copy, Debug)]
pub struct SegmentParams {
    pub distance_m: f64,
    pub iterations: usize,
    pub min_inlier_fraction: f64,
    pub clearance_m: f64,
    pub seed: u64,
}

impl From<&CloudConfig> for SegmentParams {
    fn from(c: &CloudConfig) -> Self {
        Self {
            distance_m: c.ransac_distance_m,
            iterations: c.ransac_iterations,
            min_inlier_fraction: c.ransac_min_inlier_fraction,
            clearance_m: c.object_clearance_m,
            seed: c.ransac_seed,
        }
    }
}

/// RANSAC plane fit with least-squares refinement. Points farther than the
/// clearance above the plane are object candidates.
pub fn segment_table(points: &[Point], params: &SegmentParams) -> Result<Segmentation> {
    let n = points.len();
    if n < 3 {
        return Err(Error::Segmentation(format!("need at least 3 points, got {n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    // Hypotheses are scored on a fixed subsample; the final split uses all points.
    let stride = (n / 2000).max(1);
    let sample: Vec<&Point> = points.iter().step_by(stride).collect();
    let count_inliers = |pl: &Plane| {
        sample
            .iter()
            .filter(|p| pl.signed_distance(p).abs() <= params.distance_m)
            .count()
    };
    let mut best: Option<(usize, Plane)> = None;
    let mut needed = params.iterations;
    let mut it = 0;
    while it < needed.min(params.iterations) {
        it += 1;
        let i = rng.random_range(0..n);
        let j = rng.random_range(0..n);
        let k = rng.random_range(0..n);
        if i == j || j == k || i == k {
            continue;
        }
        let nrm = (points[j] - points[i]).cross(&(points[k] - points[i]));
        let len = nrm.norm();
        if len < 1e-12 {
            continue;
        }
        let plane = Plane::through(&points[i], nrm / len);
        let score = count_inliers(&plane);
        if best.as_ref().is_none_or(|(s, _)| score > *s) {
            best = Some((score, plane));
            let w = score as f64 / sample.len() as f64;
            let p_all = w.powi(3);
            if p_all >= 1.0 - 1e-12 {
                needed = it;
            } else if p_all > 0.0 {
                let k = (1e-3f64).ln() / (1.0 - p_all).ln();
                needed = (k.ceil() as usize).max(10);
            }
        }
    }
    let (_, plane) = best.ok_or_else(|| Error::Segmentation("all samples degenerate".into()))?;
    let inliers: Vec<usize> = (0..n)
        .filter(|&i| plane.signed_distance(&points[i]).abs() <= params.distance_m)
        .collect();
    let plane = refit(points, &inliers).unwrap_or(plane).oriented_up();
    let mut table = Vec::new();
    let mut above = Vec::new();
    for (i, p) in points.iter().enumerate() {
        let d = plane.signed_distance(p);
        if d.abs() <= params.distance_m {
            table.push(i);
        } else if d > params.clearance_m {
            above.push(i);
        }
    }
    let frac = table.len() as f64 / n as f64;
    if frac < params.min_inlier_fraction {
        return Err(Error::Segmentation(format!(
            "best plane holds {:.1}% of points, need {:.1}%",
            100.0 * frac,
            100.0 * params.min_inlier_fraction
        )));
    }
    Ok(Segmentation { plane, table, above })
}

fn refit(points: &[Point], idx: &[usize]) -> Option<Plane> {
    if idx.len() < 3 {
        return None;
    }
    let mean = idx.iter().fold(Vector::zeros(), |a, &i| a + points[i].coords) / idx.len() as f64;
    let mut cov = nalgebra::Matrix3::zeros();
    for &i in idx {
        let d = points[i].coords - mean;
        cov += d * d.transpose();
    }
    let eig = cov.symmetric_eigen();
    let (min_i, _) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))?;
    let normal = eig.eigenvectors.column(min_i).normalize();
    Some(Plane::through(&Point::from(mean), normal))
}

/// Evenly spaced probe points around the object, each flagged once seen.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct UnexploredGrid {
    pub points: Vec<Point>,
    pub explored: Vec<bool>,
    pub spacing_m: f64,
    pub region: Option<Aabb>,
}

impl UnexploredGrid {
    pub fn unexplored_count(&self) -> usize {
        self.explored.iter().filter(|e| !**e).count()
    }

    pub fn unexplored_points(&self) -> impl Iterator<Item = &Point> + '_ {
        self.points
            .iter()
            .zip(&self.explored)
            .filter(|(_, e)| !**e)
            .map(|(p, _)| p)
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

fn axis_samples(lo: f64, hi: f64, spacing: f64) -> Vec<f64> {
    let extent = (hi - lo).max(0.0);
    let n = ((extent / spacing).round() as usize).max(1);
    let mid = 0.5 * (lo + hi);
    (0..n)
        .map(|i| mid + (i as f64 - (n as f64 - 1.0) / 2.0) * spacing)
        .collect()
}

/// Fill the object's bounding box, inflated by `margin_m`, with points at
/// `spacing_m`. Layers start one spacing above the table, so none sit inside
/// the band where a view cannot tell a point from the table surface.
/// Points below the table plane are dropped.
pub fn init_unexplored(object: &[Point], spacing_m: f64, margin_m: f64, table: &Plane) -> UnexploredGrid {
    if object.is_empty() {
        return UnexploredGrid {
            spacing_m,
            ..Default::default()
        };
    }
    let region = Aabb::from_points(object.iter()).inflate(margin_m);
    let xs = axis_samples(region.min.x, region.max.x, spacing_m);
    let ys = axis_samples(region.min.y, region.max.y, spacing_m);
    let [a, b, c, d] = table.0;
    let zs = if c.abs() > 0.5 {
        let centre = region.center();
        let floor = -(a * centre.x + b * centre.y + d) / c;
        let layers = ((region.max.z - floor) / spacing_m + 1e-9).floor().max(0.0) as usize;
        (1..=layers).map(|k| floor + k as f64 * spacing_m).collect()
    } else {
        axis_samples(region.min.z, region.max.z, spacing_m)
    };
    let mut points = Vec::with_capacity(xs.len() * ys.len() * zs.len());
    for &z in &zs {
        for &y in &ys {
            for &x in &xs {
                let p = Point::new(x, y, z);
                if table.signed_distance(&p) >= 0.0 {
                    points.push(p);
                }
            }
        }
    }
    if points.is_empty() {
        // Degenerate floor: keep the point nearest the region center.
        let c = region.center();
        points.push(Point::new(c.x, c.y, c.z.max(-table.0[3])));
    }
    let explored = vec![false; points.len()];
    UnexploredGrid {
        points,
        explored,
        spacing_m,
        region: Some(region),
    }
}

/// Occlusion test of each point against one organized view: a point is
/// seen when it projects into the image and lies in front of the measured
/// surface by more than `tolerance_m`. Pixels without a return count as
/// free space.
pub fn visibility_mask(points: &[Point], view: &DepthImage, tolerance_m: f64) -> Vec<bool> {
    let k = &view.intrinsics;
    points
        .iter()
        .map(|p| {
            let cam = view.world_to_camera(p);
            let Ok(proj) = project_point(k, &cam) else {
                return false;
            };
            let Some((u, v)) = proj.pixel(k) else {
                return false;
            };
            match view.get(u, v) {
                None => true,
                Some(d) => proj.z < d - tolerance_m,
            }
        })
        .collect()
}

pub fn update_unexplored(grid: &mut UnexploredGrid, view: &DepthImage, tolerance_m: f64) {
    let mask = visibility_mask(&grid.points, view, tolerance_m);
    for (e, seen) in grid.explored.iter_mut().zip(mask) {
        *e |= seen;
    }
}

/// Crop a view to the workspace box and accumulate it into voxels.
pub fn voxelize_view(cloud: &OrganizedCloud, center: &Point, cfg: &CloudConfig) -> VoxelMap {
    let h = cfg.workspace_half_extent_m;
    let bounds = Aabb {
        min: Point::new(center.x - h, center.y - h, -0.05),
        max: Point::new(center.x + h, center.y + h, cfg.workspace_max_z_m),
    };
    let mut map = VoxelMap::new(cfg.voxel_size_m);
    for p in cloud.points.iter().filter(|p| bounds.contains(p)) {
        let dir = (cloud.camera - p).normalize();
        map.insert(p, Some(&dir));
    }
    map
}

/// The evolving belief about the scene.
#[derive(Clone, Debug)]
pub struct SceneModel {
    pub voxels: VoxelMap,
    pub object_cloud: PointCloud,
    /// Unit vectors toward the observing cameras, parallel to `object_cloud`.
    pub object_view_dirs: Vec<Vector>,
    pub table_cloud: PointCloud,
    pub unexplored: UnexploredGrid,
    pub voxel_size_m: f64,
    pub table_plane: Plane,
    /// False when the last segmentation failed and the previous plane was kept.
    pub segmentation_ok: bool,
}

impl SceneModel {
    pub fn empty(voxel_size_m: f64) -> Self {
        Self {
            voxels: VoxelMap::new(voxel_size_m),
            object_cloud: PointCloud::default(),
            object_view_dirs: Vec::new(),
            table_cloud: PointCloud::default(),
            unexplored: UnexploredGrid::default(),
            voxel_size_m,
            table_plane: Plane::TABLE,
            segmentation_ok: true,
        }
    }

    /// Rebuild the derived clouds from accumulated voxels.
    pub fn from_voxels(voxels: VoxelMap, unexplored: UnexploredGrid, seg: &SegmentParams) -> Self {
        let mut m = Self::empty(voxels.voxel);
        m.voxels = voxels;
        m.unexplored = unexplored;
        m.resegment(seg);
        m
    }

    pub fn fused_cloud(&self) -> PointCloud {
        PointCloud {
            points: self.voxels.centroids(),
            normals: Some(self.voxels.view_dirs()),
        }
    }

    fn resegment(&mut self, seg: &SegmentParams) {
        let fused = self.fused_cloud();
        let dirs = fused.normals.unwrap_or_default();
        let split = match segment_table(&fused.points, seg) {
            Ok(s) => {
                self.segmentation_ok = true;
                s
            }
            Err(_) => {
                self.segmentation_ok = false;
                split_by_plane(&fused.points, &self.table_plane, seg)
            }
        };
        self.table_plane = split.plane;
        self.table_cloud = PointCloud::from_points(split.table.iter().map(|&i| fused.points[i]).collect());
        self.object_cloud = PointCloud::from_points(split.above.iter().map(|&i| fused.points[i]).collect());
        self.object_view_dirs = split.above.iter().map(|&i| dirs[i]).collect();
    }

    /// Concatenate `cloud` into the model, re-downsample and re-segment.
    pub fn fuse(&mut self, cloud: &VoxelMap, seg: &SegmentParams) {
        self.voxels.merge(cloud);
        self.resegment(seg);
    }

    /// Full per-view update: fuse, segment, seed the unexplored grid on the
    /// first view, then mark what this view sees.
    pub fn integrate_view(&mut self, view: &DepthImage, center: &Point, cfg: &CloudConfig) {
        let seg = SegmentParams::from(cfg);
        let cloud = depth_to_cloud(view);
        self.fuse(&voxelize_view(&cloud, center, cfg), &seg);
        if self.unexplored.is_empty() && !self.object_cloud.is_empty() {
            self.unexplored = init_unexplored(
                &self.object_cloud.points,
                cfg.unexplored_spacing_m,
                cfg.unexplored_margin_m,
                &self.table_plane,
            );
        }
        update_unexplored(&mut self.unexplored, view, cfg.depth_tolerance_m());
    }
}

fn split_by_plane(points: &[Point], plane: &Plane, seg: &SegmentParams) -> Segmentation {
    let mut table = Vec::new();
    let mut above = Vec::new();
    for (i, p) in points.iter().enumerate() {
        let d = plane.signed_distance(p);
        if d.abs() <= seg.distance_m {
            table.push(i);
        } else if d > seg.clearance_m {
            above.push(i);
        }
    }
    Segmentation {
        plane: *plane,
        table,
        above,
    }
}

/// ASCII `x y z` dump, one point per line.
pub fn write_xyz<'a>(path: &Path, points: impl IntoIterator<Item = &'a Point>) -> Result<()> {
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(f);
    for p in points {
        writeln!(w, "{} {} {}", p.x, p.y, p.z).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
