//! Ray casting primitives and a bounding volume hierarchy.
//!
//! The same [`Bvh`] accelerates depth rendering over mesh triangles and the
//! disk-splat occlusion test used by the 3D heuristic.

use nalgebra::{Point3, Vector3};

pub type Point = Point3<f64>;
pub type Vector = Vector3<f64>;

/// Half-line `origin + t * dir`, `t >= 0`. `dir` need not be unit length.
#[derive(Clone, Copy, Debug)]
pub struct Ray {
    pub origin: Point,
    pub dir: Vector,
    inv_dir: Vector,
}

impl Ray {
    pub fn new(origin: Point, dir: Vector) -> Self {
        let inv_dir = Vector::new(1.0 / dir.x, 1.0 / dir.y, 1.0 / dir.z);
        Self { origin, dir, inv_dir }
    }

    pub fn at(&self, t: f64) -> Point {
        self.origin + self.dir * t
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Aabb {
    pub min: Point,
    pub max: Point,
}

impl Aabb {
    pub fn empty() -> Self {
        Self {
            min: Point::new(f64::INFINITY, f64::INFINITY, f64::INFINITY),
            max: Point::new(f64::NEG_INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY),
        }
    }

    pub fn from_points<'a>(points: impl IntoIterator<Item = &'a Point>) -> Self {
        let mut b = Self::empty();
        for p in points {
            b.grow(p);
        }
        b
    }

    pub fn is_empty(&self) -> bool {
        self.min.x > self.max.x
    }

    pub fn grow(&mut self, p: &Point) {
        self.min = self.min.inf(p);
        self.max = self.max.sup(p);
    }

    pub fn union(&self, other: &Aabb) -> Aabb {
        Aabb {
            min: self.min.inf(&other.min),
            max: self.max.sup(&other.max),
        }
    }

    pub fn center(&self) -> Point {
        nalgebra::center(&self.min, &self.max)
    }

    pub fn extent(&self) -> Vector {
        self.max - self.min
    }

    pub fn inflate(&self, margin: f64) -> Aabb {
        let m = Vector::repeat(margin);
        Aabb {
            min: self.min - m,
            max: self.max + m,
        }
    }

    pub fn contains(&self, p: &Point) -> bool {
        (0..3).all(|i| p[i] >= self.min[i] && p[i] <= self.max[i])
    }

    /// Slab test. Returns the entry parameter when the ray overlaps the box
    /// within `[t_min, t_max]`.
    pub fn hit(&self, ray: &Ray, t_min: f64, t_max: f64) -> Option<f64> {
        let mut lo = t_min;
        let mut hi = t_max;
        for i in 0..3 {
            let inv = ray.inv_dir[i];
            let mut t0 = (self.min[i] - ray.origin[i]) * inv;
            let mut t1 = (self.max[i] - ray.origin[i]) * inv;
            if inv < 0.0 {
                std::mem::swap(&mut t0, &mut t1);
            }
            // NaN from 0 * inf leaves the bound untouched.
            if t0 > lo {
                lo = t0;
            }
            if t1 < hi {
                hi = t1;
            }
            if hi < lo {
                return None;
            }
        }
        Some(lo)
    }
}

/// Something a ray can hit.
pub trait Primitive {
    fn bounds(&self) -> Aabb;
    /// Smallest hit parameter in `(t_min, t_max)`.
    fn intersect(&self, ray: &Ray, t_min: f64, t_max: f64) -> Option<f64>;
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Triangle {
    pub v: [Point; 3],
}

impl Triangle {
    pub fn new(a: Point, b: Point, c: Point) -> Self {
        Self { v: [a, b, c] }
    }

    pub fn normal(&self) -> Vector {
        (self.v[1] - self.v[0]).cross(&(self.v[2] - self.v[0]))
    }
}

impl Primitive for Triangle {
    fn bounds(&self) -> Aabb {
        Aabb::from_points(self.v.iter())
    }

    // Möller–Trumbore, two-sided.
    fn intersect(&self, ray: &Ray, t_min: f64, t_max: f64) -> Option<f64> {
        let e1 = self.v[1] - self.v[0];
        let e2 = self.v[2] - self.v[0];
        let p = ray.dir.cross(&e2);
        let det = e1.dot(&p);
        if det.abs() < 1e-18 {
            return None;
        }
        let inv_det = 1.0 / det;
        let s = ray.origin - self.v[0];
        let u = s.dot(&p) * inv_det;
        if !(0.0..=1.0).contains(&u) {
            return None;
        }
        let q = s.cross(&e1);
        let v = ray.dir.dot(&q) * inv_det;
        if v < 0.0 || u + v > 1.0 {
            return None;
        }
        let t = e2.dot(&q) * inv_det;
        (t > t_min && t < t_max).then_some(t)
    }
}

/// Flat disk used as a local surface patch around a sampled point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Disk {
    pub center: Point,
    pub normal: Vector,
    pub radius: f64,
}

impl Primitive for Disk {
    fn bounds(&self) -> Aabb {
        // Per-axis extent of a disk: r * sqrt(1 - n_i^2).
        let n = self.normal;
        let e = Vector::new(
            (1.0 - n.x * n.x).max(0.0).sqrt(),
            (1.0 - n.y * n.y).max(0.0).sqrt(),
            (1.0 - n.z * n.z).max(0.0).sqrt(),
        ) * self.radius;
        Aabb {
            min: self.center - e,
            max: self.center + e,
        }
    }

    fn intersect(&self, ray: &Ray, t_min: f64, t_max: f64) -> Option<f64> {
        let denom = self.normal.dot(&ray.dir);
        if denom.abs() < 1e-15 {
            return None;
        }
        let t = (self.center - ray.origin).dot(&self.normal) / denom;
        if t <= t_min || t >= t_max {
            return None;
        }
        let d = ray.at(t) - self.center;
        (d.norm_squared() <= self.radius * self.radius).then_some(t)
    }
}

#[derive(Clone, Debug)]
enum Node {
    Leaf { bounds: Aabb, start: usize, count: usize },
    Inner { bounds: Aabb, left: usize, right: usize },
}

impl Node {
    fn bounds(&self) -> &Aabb {
        match self {
            Node::Leaf { bounds, .. } | Node::Inner { bounds, .. } => bounds,
        }
    }
}

const LEAF_SIZE: usize = 4;

/// Median-split BVH over an owned primitive list.
#[derive(Clone, Debug)]
pub struct Bvh<P> {
    prims: Vec<P>,
    nodes: Vec<Node>,
}

impl<P: Primitive> Bvh<P> {
    pub fn build(prims: Vec<P>) -> Self {
        let bounds: Vec<Aabb> = prims.iter().map(Primitive::bounds).collect();
        let centers: Vec<Point> = bounds.iter().map(Aabb::center).collect();
        let mut order: Vec<usize> = (0..prims.len()).collect();
        let mut nodes = Vec::with_capacity(2 * prims.len() / LEAF_SIZE + 1);
        if !prims.is_empty() {
            Self::build_node(&bounds, &centers, &mut order, 0, prims.len(), &mut nodes);
        }
        // Reorder primitives so leaves reference contiguous ranges.
        let mut slots: Vec<Option<P>> = prims.into_iter().map(Some).collect();
        let prims = order
            .iter()
            .map(|&i| slots[i].take().expect("each index appears once"))
            .collect();
        Self { prims, nodes }
    }

    fn build_node(
        bounds: &[Aabb],
        centers: &[Point],
        order: &mut [usize],
        start: usize,
        end: usize,
        nodes: &mut Vec<Node>,
    ) -> usize {
        let slice = &mut order[start..end];
        let node_bounds = slice
            .iter()
            .fold(Aabb::empty(), |acc, &i| acc.union(&bounds[i]));
        let idx = nodes.len();
        if slice.len() <= LEAF_SIZE {
            nodes.push(Node::Leaf {
                bounds: node_bounds,
                start,
                count: slice.len(),
            });
            return idx;
        }
        let centroid_bounds = Aabb::from_points(slice.iter().map(|&i| &centers[i]));
        let ext = centroid_bounds.extent();
        let axis = if ext.x >= ext.y && ext.x >= ext.z {
            0
        } else if ext.y >= ext.z {
            1
        } else {
            2
        };
        let mid = slice.len() / 2;
        slice.select_nth_unstable_by(mid, |&a, &b| {
            centers[a][axis]
                .total_cmp(&centers[b][axis])
                .then(a.cmp(&b))
        });
        nodes.push(Node::Leaf {
            bounds: node_bounds,
            start: 0,
            count: 0,
        });
        let left = Self::build_node(bounds, centers, order, start, start + mid, nodes);
        let right = Self::build_node(bounds, centers, order, start + mid, end, nodes);
        nodes[idx] = Node::Inner {
            bounds: node_bounds,
            left,
            right,
        };
        idx
    }

    pub fn primitives(&self) -> &[P] {
        &self.prims
    }

    pub fn len(&self) -> usize {
        self.prims.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prims.is_empty()
    }

    /// Nearest hit in `(t_min, t_max)`: `(t, primitive index)`.
    pub fn nearest(&self, ray: &Ray, t_min: f64, t_max: f64) -> Option<(f64, usize)> {
        if self.nodes.is_empty() {
            return None;
        }
        let mut best: Option<(f64, usize)> = None;
        let mut limit = t_max;
        let mut stack = Vec::with_capacity(64);
        stack.push(0usize);
        while let Some(n) = stack.pop() {
            let node = &self.nodes[n];
            if node.bounds().hit(ray, t_min, limit).is_none() {
                continue;
            }
            match *node {
                Node::Leaf { start, count, .. } => {
                    for i in start..start + count {
                        if let Some(t) = self.prims[i].intersect(ray, t_min, limit) {
                            limit = t;
                            best = Some((t, i));
                        }
                    }
                }
                Node::Inner { left, right, .. } => {
                    stack.push(right);
                    stack.push(left);
                }
            }
        }
        best
    }

    /// True when any primitive is hit in `(t_min, t_max)`.
    pub fn any_hit(&self, ray: &Ray, t_min: f64, t_max: f64) -> bool {
        if self.nodes.is_empty() {
            return false;
        }
        let mut stack = Vec::with_capacity(64);
        stack.push(0usize);
        while let Some(n) = stack.pop() {
            let node = &self.nodes[n];
            if node.bounds().hit(ray, t_min, t_max).is_none() {
                continue;
            }
            match *node {
                Node::Leaf { start, count, .. } => {
                    if self.prims[start..start + count]
                        .iter()
                        .any(|p| p.intersect(ray, t_min, t_max).is_some())
                    {
                        return true;
                    }
                }
                Node::Inner { left, right, .. } => {
                    stack.push(right);
                    stack.push(left);
                }
            }
        }
        false
    }
}

/// Exhaustive nearest hit; the reference the BVH is tested against.
pub fn nearest_exhaustive<P: Primitive>(
    prims: &[P],
    ray: &Ray,
    t_min: f64,
    t_max: f64,
) -> Option<f64> {
    prims
        .iter()
        .filter_map(|p| p.intersect(ray, t_min, t_max))
        .min_by(f64::total_cmp)
}

/// Angle between two vectors in degrees, robust near 0 and 180.
pub fn angle_deg(a: &Vector, b: &Vector) -> f64 {
    let cross = a.cross(b).norm();
    let dot = a.dot(b);
    cross.atan2(dot).to_degrees()
}

/// Two unit vectors completing `n` to a right-handed orthonormal frame.
pub fn tangent_basis(n: &Vector) -> (Vector, Vector) {
    // Pick the world axis least aligned with n so the basis is stable.
    let a = n.abs();
    let helper = if a.x <= a.y && a.x <= a.z {
        Vector::x()
    } else if a.y <= a.z {
        Vector::y()
    } else {
        Vector::z()
    };
    let u = helper.cross(n).normalize();
    let v = n.cross(&u);
    (u, v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_triangles(rng: &mut ChaCha8Rng, n: usize) -> Vec<Triangle> {
        (0..n)
            .map(|_| {
                let c = Point::new(
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                );
                let mut p = || {
                    c + Vector::new(
                        rng.random_range(-0.2..0.2),
                        rng.random_range(-0.2..0.2),
                        rng.random_range(-0.2..0.2),
                    )
                };
                Triangle::new(p(), p(), p())
            })
            .collect()
    }

    #[test]
    fn bvh_matches_exhaustive_search() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let tris = random_triangles(&mut rng, 300);
        let bvh = Bvh::build(tris.clone());
        for _ in 0..2000 {
            let o = Point::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0), 3.0);
            let target = Point::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), 0.0);
            let ray = Ray::new(o, target - o);
            let fast = bvh.nearest(&ray, 1e-9, f64::INFINITY).map(|(t, _)| t);
            let slow = nearest_exhaustive(&tris, &ray, 1e-9, f64::INFINITY);
            assert_eq!(fast, slow);
            assert_eq!(bvh.any_hit(&ray, 1e-9, f64::INFINITY), slow.is_some());
        }
    }

    #[test]
    fn triangle_hit_and_miss() {
        let tri = Triangle::new(
            Point::new(0.0, 0.0, 0.0),
            Point::new(1.0, 0.0, 0.0),
            Point::new(0.0, 1.0, 0.0),
        );
        let down = Ray::new(Point::new(0.2, 0.2, 1.0), -Vector::z());
        assert!((tri.intersect(&down, 0.0, 10.0).unwrap() - 1.0).abs() < 1e-15);
        let outside = Ray::new(Point::new(0.8, 0.8, 1.0), -Vector::z());
        assert!(tri.intersect(&outside, 0.0, 10.0).is_none());
    }

    #[test]
    fn disk_bounds_contain_rim() {
        let d = Disk {
            center: Point::new(0.1, -0.2, 0.3),
            normal: Vector::new(1.0, 2.0, -0.5).normalize(),
            radius: 0.05,
        };
        let b = d.bounds().inflate(1e-12);
        let (u, v) = tangent_basis(&d.normal);
        for k in 0..64 {
            let a = k as f64 / 64.0 * std::f64::consts::TAU;
            let p = d.center + (u * a.cos() + v * a.sin()) * d.radius;
            assert!(b.contains(&p));
        }
    }

    #[test]
    fn angle_deg_extremes() {
        let a = Vector::new(1.0, 0.0, 0.0);
        assert!((angle_deg(&a, &(-a)) - 180.0).abs() < 1e-12);
        assert!(angle_deg(&a, &a).abs() < 1e-12);
        assert!((angle_deg(&a, &Vector::y()) - 90.0).abs() < 1e-12);
    }
}
