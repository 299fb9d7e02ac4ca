//! Synthetic depth camera: ray casting a placed mesh over a bounded table.

use nalgebra::{Isometry3, Translation3, UnitQuaternion, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::camera::{CameraIntrinsics, DepthImage};
use crate::geom::{nearest_exhaustive, Aabb, Bvh, Point, Ray, Triangle};
use crate::mesh::Mesh;
use crate::viewsphere::{camera_extrinsics, SphericalPose};

const T_MIN: f64 = 1e-9;

/// A mesh placed on the table.
#[derive(Clone, Debug)]
pub struct SceneObject {
    /// Mesh in its resting orientation, before placement.
    pub mesh: Mesh,
    /// Placement applied to `mesh`.
    pub pose: Isometry3<f64>,
    pub z_rotation_deg: f64,
}

impl SceneObject {
    pub fn world_mesh(&self) -> Mesh {
        self.mesh.transformed(&self.pose)
    }

    pub fn bounds(&self) -> Aabb {
        self.world_mesh().bounds()
    }
}

/// Rotate about the vertical axis through the footprint center, then lift so
/// the lowest vertex touches z = 0.
pub fn place_object(mesh: &Mesh, z_rotation_deg: f64) -> SceneObject {
    let b = mesh.bounds();
    let pivot = Vector3::new(b.center().x, b.center().y, 0.0);
    let rot = UnitQuaternion::from_axis_angle(&Vector3::z_axis(), z_rotation_deg.to_radians());
    // x -> R (x - pivot) + pivot
    let about_pivot = Translation3::from(pivot) * rot * Translation3::from(-pivot);
    let rotated = mesh.transformed(&about_pivot);
    let min_z = rotated.vertices.iter().map(|v| v.z).fold(f64::INFINITY, f64::min);
    let pose = Translation3::new(0.0, 0.0, -min_z) * about_pivot;
    SceneObject {
        mesh: mesh.clone(),
        pose,
        z_rotation_deg,
    }
}

/// Object plus a square table at z = 0.
#[derive(Clone, Debug)]
pub struct Scene {
    bvh: Bvh<Triangle>,
    triangles: Vec<Triangle>,
    pub table_center: Point,
    pub table_half_side: f64,
    pub object_bounds: Aabb,
}

impl Scene {
    pub fn new(object: Option<&SceneObject>, table_side_m: f64) -> Self {
        let (triangles, object_bounds) = match object {
            Some(o) => {
                let m = o.world_mesh();
                (m.triangles(), m.bounds())
            }
            None => (Vec::new(), Aabb::empty()),
        };
        let table_center = if object_bounds.is_empty() {
            Point::origin()
        } else {
            let c = object_bounds.center();
            Point::new(c.x, c.y, 0.0)
        };
        Self {
            bvh: Bvh::build(triangles.clone()),
            triangles,
            table_center,
            table_half_side: table_side_m / 2.0,
            object_bounds,
        }
    }

    pub fn from_mesh_world(mesh: &Mesh, table_side_m: f64) -> Self {
        let triangles = mesh.triangles();
        let object_bounds = mesh.bounds();
        let c = object_bounds.center();
        Self {
            bvh: Bvh::build(triangles.clone()),
            triangles,
            table_center: Point::new(c.x, c.y, 0.0),
            table_half_side: table_side_m / 2.0,
            object_bounds,
        }
    }

    /// Point at the middle of the object's bounding box: the viewsphere center.
    pub fn object_center(&self) -> Point {
        if self.object_bounds.is_empty() {
            Point::origin()
        } else {
            self.object_bounds.center()
        }
    }

    pub fn triangles(&self) -> &[Triangle] {
        &self.triangles
    }

    fn table_hit(&self, ray: &Ray, t_max: f64) -> Option<f64> {
        if self.table_half_side <= 0.0 || ray.dir.z.abs() < 1e-15 {
            return None;
        }
        let t = -ray.origin.z / ray.dir.z;
        if t <= T_MIN || t >= t_max {
            return None;
        }
        let p = ray.at(t);
        let h = self.table_half_side;
        ((p.x - self.table_center.x).abs() <= h && (p.y - self.table_center.y).abs() <= h).then_some(t)
    }

    /// Nearest hit parameter along a ray, object or table.
    pub fn cast(&self, ray: &Ray, t_max: f64) -> Option<f64> {
        let obj = self.bvh.nearest(ray, T_MIN, t_max).map(|(t, _)| t);
        let limit = obj.unwrap_or(t_max);
        self.table_hit(ray, limit).or(obj)
    }

    /// Same as [`Scene::cast`] but testing every triangle.
    pub fn cast_exhaustive(&self, ray: &Ray, t_max: f64) -> Option<f64> {
        let obj = nearest_exhaustive(&self.triangles, ray, T_MIN, t_max);
        let limit = obj.unwrap_or(t_max);
        self.table_hit(ray, limit).or(obj)
    }
}

pub fn render_depth(scene: &Scene, pose: &SphericalPose, intr: &CameraIntrinsics) -> DepthImage {
    render_with(scene, pose, intr, |s, r| s.cast(r, f64::INFINITY))
}

/// Reference renderer without the BVH.
pub fn render_depth_exhaustive(
    scene: &Scene,
    pose: &SphericalPose,
    intr: &CameraIntrinsics,
) -> DepthImage {
    render_with(scene, pose, intr, |s, r| s.cast_exhaustive(r, f64::INFINITY))
}

fn render_with(
    scene: &Scene,
    pose: &SphericalPose,
    intr: &CameraIntrinsics,
    cast: impl Fn(&Scene, &Ray) -> Option<f64>,
) -> DepthImage {
    let center = scene.object_center();
    let mut img = DepthImage::new_invalid(*intr, camera_extrinsics(pose, &center));
    for v in 0..intr.height {
        for u in 0..intr.width {
            let ray = img.pixel_ray(u, v);
            if let Some(t) = cast(scene, &ray) {
                let i = img.index(u, v);
                img.depth[i] = t;
            }
        }
    }
    img
}

/// Additive Gaussian depth noise on valid pixels.
pub fn add_depth_noise(img: &mut DepthImage, sigma_m: f64, seed: u64) {
    if sigma_m <= 0.0 {
        return;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, sigma_m).expect("sigma is positive");
    for d in img.depth.iter_mut().filter(|d| d.is_finite()) {
        *d = (*d + normal.sample(&mut rng)).max(1e-6);
    }
}
