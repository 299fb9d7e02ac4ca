use super::{argmax_first, Action, Policy, PolicyContext, PolicyDecision};
use crate::camera::{project_point, CameraIntrinsics};
use crate::cloud::SceneModel;
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::geom::{Bvh, Disk, Point, Ray};
use crate::grasp::{estimate_surface, SurfacePoint};
use crate::viewsphere::{camera_extrinsics, enumerate_neighbors_at, Direction, SphericalPose};

/// Object points splatted as small disks in their tangent planes.
pub struct Occluders {
    bvh: Bvh<Disk>,
}

impl Occluders {
    pub fn new(surface: &[SurfacePoint], radius_m: f64) -> Self {
        let disks = surface
            .iter()
            .map(|s| Disk {
                center: s.position,
                normal: s.normal,
                radius: radius_m,
            })
            .collect();
        Self { bvh: Bvh::build(disks) }
    }

    /// True when some disk lies strictly between `from` and `to`.
    pub fn blocks(&self, from: &Point, to: &Point) -> bool {
        let d = to - from;
        let len = d.norm();
        if len == 0.0 {
            return false;
        }
        // Stop just short of the target so its own splat does not hide it.
        self.bvh.any_hit(&Ray::new(*from, d / len), 1e-9, len - 1e-6)
    }
}

/// Unexplored points an antipodal finger could need: within the gripper
/// opening of some object point and inside the cone around its normal line.
///
/// The unexplored points are bucketed on a grid and each surface point only
/// visits the cells covering its two cones.
pub fn useful_points(unexplored: &[Point], surface: &[SurfacePoint], max_opening_m: f64, cone_deg: f64) -> Vec<Point> {
    if surface.is_empty() || unexplored.is_empty() {
        return Vec::new();
    }
    let cell = max_opening_m / 8.0;
    let mut lo = unexplored[0];
    let mut hi = unexplored[0];
    for u in unexplored {
        lo = lo.inf(u);
        hi = hi.sup(u);
    }
    let dims: Vec<usize> = (0..3).map(|k| ((hi[k] - lo[k]) / cell).floor() as usize + 1).collect();
    let mut buckets: Vec<Vec<u32>> = vec![Vec::new(); dims[0] * dims[1] * dims[2]];
    let index = |c: [usize; 3]| (c[2] * dims[1] + c[1]) * dims[0] + c[0];
    for (i, u) in unexplored.iter().enumerate() {
        let c = [0, 1, 2].map(|k| (((u[k] - lo[k]) / cell).floor() as usize).min(dims[k] - 1));
        buckets[index(c)].push(i as u32);
    }
    let cos_eps = cone_deg.to_radians().cos();
    let narrow = cos_eps > 1e-9;
    let spread = max_opening_m * cone_deg.to_radians().tan();
    let r2 = max_opening_m * max_opening_m;
    let mut keep = vec![false; unexplored.len()];
    for s in surface {
        for sign in [1.0, -1.0] {
            let axis = s.normal * sign;
            let tip = s.position + axis * max_opening_m;
            let (mut blo, mut bhi) = ([0usize; 3], [0usize; 3]);
            let mut empty = false;
            for k in 0..3 {
                // Box around the cone, or around the whole ball when the
                // cone is wider than a half-space.
                let (a, b) = if narrow {
                    let r = spread * (1.0 - axis[k] * axis[k]).max(0.0).sqrt();
                    (s.position[k].min(tip[k] - r), s.position[k].max(tip[k] + r))
                } else {
                    (s.position[k] - max_opening_m, s.position[k] + max_opening_m)
                };
                let ia = ((a - lo[k]) / cell).floor() - 1.0;
                let ib = ((b - lo[k]) / cell).floor() + 1.0;
                if ib < 0.0 || ia > (dims[k] - 1) as f64 {
                    empty = true;
                    break;
                }
                blo[k] = ia.max(0.0) as usize;
                bhi[k] = (ib as usize).min(dims[k] - 1);
            }
            if empty {
                continue;
            }
            for z in blo[2]..=bhi[2] {
                for y in blo[1]..=bhi[1] {
                    for x in blo[0]..=bhi[0] {
                        for &i in &buckets[index([x, y, z])] {
                            let i = i as usize;
                            if keep[i] {
                                continue;
                            }
                            let d = unexplored[i] - s.position;
                            let d2 = d.norm_squared();
                            if d2 == 0.0 || d2 > r2 {
                                continue;
                            }
                            keep[i] = d.dot(&s.normal).abs() >= cos_eps * d2.sqrt();
                        }
                    }
                }
            }
        }
    }
    unexplored
        .iter()
        .zip(&keep)
        .filter(|(_, k)| **k)
        .map(|(u, _)| *u)
        .collect()
}

/// Reference form of [`useful_points`]: every unexplored point against every
/// surface point.
#[cfg(test)]
fn useful_points_brute(unexplored: &[Point], surface: &[SurfacePoint], max_opening_m: f64, cone_deg: f64) -> Vec<Point> {
    let cos_eps = cone_deg.to_radians().cos();
    unexplored
        .iter()
        .filter(|u| {
            surface.iter().any(|s| {
                let d = *u - s.position;
                let n = d.norm();
                n > 0.0 && n <= max_opening_m && d.dot(&s.normal).abs() >= cos_eps * n
            })
        })
        .copied()
        .collect()
}

/// Points inside the view frustum of `pose` and not hidden behind an occluder.
pub fn visible_count(
    points: &[Point],
    pose: &SphericalPose,
    center: &Point,
    intr: &CameraIntrinsics,
    occluders: &Occluders,
) -> usize {
    let ext = camera_extrinsics(pose, center);
    let eye = Point::from(ext.translation.vector);
    points
        .iter()
        .filter(|p| {
            let in_frame = project_point(intr, &ext.inverse_transform_point(p))
                .ok()
                .and_then(|proj| proj.pixel(intr))
                .is_some();
            in_frame && !occluders.blocks(&eye, p)
        })
        .count()
}

fn surface_of(model: &SceneModel, cfg: &RunConfig) -> Vec<SurfacePoint> {
    estimate_surface(&model.object_cloud.points, &model.object_view_dirs, cfg.grasp.normal_neighbors)
}

/// Visible useful points for every neighbor `steps` away, in canonical order.
pub fn h3d_scores(
    useful: &[Point],
    occluders: &Occluders,
    pose: &SphericalPose,
    steps: u32,
    center: &Point,
    cfg: &RunConfig,
) -> Vec<(Direction, usize)> {
    enumerate_neighbors_at(pose, steps, &cfg.viewsphere)
        .into_iter()
        .map(|(d, n)| (d, visible_count(useful, &n, center, &cfg.camera, occluders)))
        .collect()
}

/// Binary image of where `points` land when seen from `pose`.
pub fn project_mask(points: &[Point], pose: &SphericalPose, center: &Point, intr: &CameraIntrinsics) -> Vec<bool> {
    let ext = camera_extrinsics(pose, center);
    let mut mask = vec![false; intr.pixel_count()];
    for p in points {
        if let Some((u, v)) = project_point(intr, &ext.inverse_transform_point(p))
            .ok()
            .and_then(|proj| proj.pixel(intr))
        {
            mask[v as usize * intr.width as usize + u as usize] = true;
        }
    }
    mask
}

/// Square-kernel binary dilation.
pub fn dilate(mask: &[bool], width: usize, height: usize, radius: usize) -> Vec<bool> {
    if radius == 0 {
        return mask.to_vec();
    }
    let r = radius as isize;
    let mut out = vec![false; mask.len()];
    for v in 0..height as isize {
        for u in 0..width as isize {
            if !mask[v as usize * width + u as usize] {
                continue;
            }
            for dv in -r..=r {
                for du in -r..=r {
                    let (x, y) = (u + du, v + dv);
                    if x >= 0 && y >= 0 && (x as usize) < width && (y as usize) < height {
                        out[y as usize * width + x as usize] = true;
                    }
                }
            }
        }
    }
    out
}

fn scaled(intr: &CameraIntrinsics, s: f64) -> CameraIntrinsics {
    CameraIntrinsics {
        fx: intr.fx * s,
        fy: intr.fy * s,
        ppx: intr.ppx * s,
        ppy: intr.ppy * s,
        width: ((intr.width as f64 * s).round() as u32).max(1),
        height: ((intr.height as f64 * s).round() as u32).max(1),
    }
}

/// Pixels showing unexplored space but no object, per one-step neighbor.
pub fn h2d_scores(model: &SceneModel, pose: &SphericalPose, center: &Point, cfg: &RunConfig) -> Vec<(Direction, usize)> {
    let intr = scaled(&cfg.camera, cfg.policy.h2d_image_scale);
    let (w, h) = (intr.width as usize, intr.height as usize);
    let r = cfg.policy.h2d_dilation_px;
    let unexplored: Vec<Point> = model.unexplored.unexplored_points().copied().collect();
    enumerate_neighbors_at(pose, 1, &cfg.viewsphere)
        .into_iter()
        .map(|(d, n)| {
            let obj = dilate(&project_mask(&model.object_cloud.points, &n, center, &intr), w, h, r);
            let unx = dilate(&project_mask(&unexplored, &n, center, &intr), w, h, r);
            let count = unx.iter().zip(&obj).filter(|(u, o)| **u && !**o).count();
            (d, count)
        })
        .collect()
}

fn pick(scores: &[(Direction, usize)], steps: u32, suffix: &str) -> Option<PolicyDecision> {
    let values: Vec<f64> = scores.iter().map(|(_, s)| *s as f64).collect();
    let best = argmax_first(&values)?;
    Some(PolicyDecision {
        action: Action::Move {
            direction: scores[best].0,
            steps,
        },
        scores: scores
            .iter()
            .map(|(d, s)| (format!("{d}{suffix}"), *s as f64))
            .collect(),
    })
}

pub struct H2dPolicy;

impl Policy for H2dPolicy {
    fn name(&self) -> String {
        "h2d".into()
    }

    fn decide(&mut self, ctx: &mut PolicyContext<'_>) -> Result<PolicyDecision> {
        let scores = h2d_scores(ctx.model, &ctx.pose, &ctx.center, ctx.cfg);
        pick(&scores, 1, "").ok_or_else(|| Error::Harness("no valid neighbor".into()))
    }
}

pub struct H3dPolicy;

impl Policy for H3dPolicy {
    fn name(&self) -> String {
        "h3d".into()
    }

    fn decide(&mut self, ctx: &mut PolicyContext<'_>) -> Result<PolicyDecision> {
        let cfg = ctx.cfg;
        let surface = surface_of(ctx.model, cfg);
        let unexplored: Vec<Point> = ctx.model.unexplored.unexplored_points().copied().collect();
        let useful = useful_points(
            &unexplored,
            &surface,
            cfg.grasp.gripper.max_opening_m,
            cfg.policy.h3d_cone_deg,
        );
        let occluders = Occluders::new(&surface, cfg.policy.occluder_radius_voxels * ctx.model.voxel_size_m);
        let one = h3d_scores(&useful, &occluders, &ctx.pose, 1, &ctx.center, cfg);
        let best = one.iter().map(|(_, s)| *s).max().unwrap_or(0);
        if best <= cfg.policy.h3d_points_threshold {
            let two = h3d_scores(&useful, &occluders, &ctx.pose, 2, &ctx.center, cfg);
            if let Some(mut d) = pick(&two, 2, "x2") {
                let mut all: Vec<(String, f64)> = one.iter().map(|(d, s)| (d.to_string(), *s as f64)).collect();
                all.append(&mut d.scores);
                d.scores = all;
                return Ok(d);
            }
        }
        pick(&one, 1, "").ok_or_else(|| Error::Harness("no valid neighbor".into()))
    }
}
