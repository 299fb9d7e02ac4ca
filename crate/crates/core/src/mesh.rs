//! Triangle meshes: a minimal Wavefront OBJ reader/writer and a few
//! primitive builders used for the bundled objects and in tests.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::Isometry3;

use crate::error::{Error, Result};
use crate::geom::{Aabb, Point, Triangle, Vector};

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Mesh {
    pub vertices: Vec<Point>,
    pub faces: Vec<[usize; 3]>,
}

pub fn load_mesh(path: impl AsRef<Path>) -> Result<Mesh> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_obj(&text)
}

/// Parses `v` and `f` records; everything else is ignored. Polygons are
/// fan-triangulated, `a/b/c` index forms and negative indices are accepted.
pub fn parse_obj(text: &str) -> Result<Mesh> {
    let mut mesh = Mesh::default();
    for (lineno, line) in text.lines().enumerate() {
        let line_no = lineno + 1;
        let err = |msg: String| Error::MeshParse { line: line_no, msg };
        let mut tokens = line.split_whitespace();
        match tokens.next() {
            Some("v") => {
                let coords: Vec<f64> = tokens
                    .take(3)
                    .map(|t| t.parse::<f64>().map_err(|e| err(format!("bad coordinate {t:?}: {e}"))))
                    .collect::<Result<_>>()?;
                if coords.len() != 3 {
                    return Err(err("vertex needs three coordinates".into()));
                }
                if coords.iter().any(|c| !c.is_finite()) {
                    return Err(err("non-finite vertex".into()));
                }
                mesh.vertices.push(Point::new(coords[0], coords[1], coords[2]));
            }
            Some("f") => {
                let n = mesh.vertices.len() as i64;
                let idx: Vec<usize> = tokens
                    .map(|t| {
                        let head = t.split('/').next().unwrap_or("");
                        let i: i64 = head
                            .parse()
                            .map_err(|e| err(format!("bad face index {t:?}: {e}")))?;
                        let resolved = if i < 0 { n + i } else { i - 1 };
                        if resolved < 0 || resolved >= n {
                            return Err(err(format!("face index {i} out of range")));
                        }
                        Ok(resolved as usize)
                    })
                    .collect::<Result<_>>()?;
                if idx.len() < 3 {
                    return Err(err("face needs at least three vertices".into()));
                }
                for k in 1..idx.len() - 1 {
                    mesh.faces.push([idx[0], idx[k], idx[k + 1]]);
                }
            }
            _ => {}
        }
    }
    if mesh.faces.is_empty() {
        return Err(Error::EmptyMesh);
    }
    Ok(mesh)
}

impl Mesh {
    pub fn to_obj(&self) -> String {
        let mut s = String::new();
        for v in &self.vertices {
            let _ = writeln!(s, "v {} {} {}", v.x, v.y, v.z);
        }
        for f in &self.faces {
            let _ = writeln!(s, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1);
        }
        s
    }

    pub fn triangles(&self) -> Vec<Triangle> {
        self.faces
            .iter()
            .map(|f| Triangle::new(self.vertices[f[0]], self.vertices[f[1]], self.vertices[f[2]]))
            .collect()
    }

    pub fn bounds(&self) -> Aabb {
        Aabb::from_points(self.vertices.iter())
    }

    pub fn transformed(&self, iso: &Isometry3<f64>) -> Mesh {
        Mesh {
            vertices: self.vertices.iter().map(|v| iso * v).collect(),
            faces: self.faces.clone(),
        }
    }

    pub fn translated(&self, t: Vector) -> Mesh {
        Mesh {
            vertices: self.vertices.iter().map(|v| v + t).collect(),
            faces: self.faces.clone(),
        }
    }

    pub fn merge(parts: &[Mesh]) -> Mesh {
        let mut out = Mesh::default();
        for p in parts {
            let base = out.vertices.len();
            out.vertices.extend_from_slice(&p.vertices);
            out.faces
                .extend(p.faces.iter().map(|f| [f[0] + base, f[1] + base, f[2] + base]));
        }
        out
    }

    /// Axis-aligned box, outward counter-clockwise winding.
    pub fn cuboid(min: Point, max: Point) -> Mesh {
        let c = |i: usize| {
            Point::new(
                if i & 1 == 0 { min.x } else { max.x },
                if i & 2 == 0 { min.y } else { max.y },
                if i & 4 == 0 { min.z } else { max.z },
            )
        };
        let vertices = (0..8).map(c).collect();
        let faces = vec![
            [0, 2, 1], [1, 2, 3], // -z
            [4, 5, 6], [5, 7, 6], // +z
            [0, 1, 4], [1, 5, 4], // -y
            [2, 6, 3], [3, 6, 7], // +y
            [0, 4, 2], [2, 4, 6], // -x
            [1, 3, 5], [3, 7, 5], // +x
        ];
        Mesh { vertices, faces }
    }

    /// Box of the given size with its footprint centered at the origin and
    /// its base on z = 0.
    pub fn block(sx: f64, sy: f64, sz: f64) -> Mesh {
        Mesh::cuboid(
            Point::new(-sx / 2.0, -sy / 2.0, 0.0),
            Point::new(sx / 2.0, sy / 2.0, sz),
        )
    }

    /// Closed cylinder along +z from z = 0 to `height`.
    pub fn cylinder(radius: f64, height: f64, segments: usize) -> Mesh {
        let segments = segments.max(3);
        let mut vertices = vec![Point::new(0.0, 0.0, 0.0), Point::new(0.0, 0.0, height)];
        for i in 0..segments {
            let a = i as f64 / segments as f64 * std::f64::consts::TAU;
            let (s, c) = a.sin_cos();
            vertices.push(Point::new(radius * c, radius * s, 0.0));
            vertices.push(Point::new(radius * c, radius * s, height));
        }
        let mut faces = Vec::with_capacity(4 * segments);
        for i in 0..segments {
            let j = (i + 1) % segments;
            let (b0, t0, b1, t1) = (2 + 2 * i, 3 + 2 * i, 2 + 2 * j, 3 + 2 * j);
            faces.push([0, b1, b0]);
            faces.push([1, t0, t1]);
            faces.push([b0, b1, t1]);
            faces.push([b0, t1, t0]);
        }
        Mesh { vertices, faces }
    }

    /// UV sphere centered at the origin.
    pub fn sphere(radius: f64, rings: usize, segments: usize) -> Mesh {
        let rings = rings.max(2);
        let segments = segments.max(3);
        let mut vertices = vec![Point::new(0.0, 0.0, radius)];
        for r in 1..rings {
            let theta = r as f64 / rings as f64 * std::f64::consts::PI;
            let (st, ct) = theta.sin_cos();
            for s in 0..segments {
                let phi = s as f64 / segments as f64 * std::f64::consts::TAU;
                let (sp, cp) = phi.sin_cos();
                vertices.push(Point::new(radius * st * cp, radius * st * sp, radius * ct));
            }
        }
        let south = vertices.len();
        vertices.push(Point::new(0.0, 0.0, -radius));
        let ring = |r: usize, s: usize| 1 + (r - 1) * segments + s % segments;
        let mut faces = Vec::new();
        for s in 0..segments {
            faces.push([0, ring(1, s), ring(1, s + 1)]);
        }
        for r in 1..rings - 1 {
            for s in 0..segments {
                let (a, b, c, d) = (ring(r, s), ring(r, s + 1), ring(r + 1, s), ring(r + 1, s + 1));
                faces.push([a, c, b]);
                faces.push([b, c, d]);
            }
        }
        for s in 0..segments {
            faces.push([south, ring(rings - 1, s + 1), ring(rings - 1, s)]);
        }
        Mesh { vertices, faces }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cuboid_has_twelve_outward_triangles() {
        let m = Mesh::cuboid(Point::new(0.0, 0.0, 0.0), Point::new(1.0, 1.0, 1.0));
        assert_eq!(m.faces.len(), 12);
        let c = m.bounds().center();
        for t in m.triangles() {
            let centroid = Point::from((t.v[0].coords + t.v[1].coords + t.v[2].coords) / 3.0);
            assert!(t.normal().dot(&(centroid - c)) > 0.0);
        }
    }

    #[test]
    fn obj_round_trip() {
        let m = Mesh::cylinder(0.03, 0.1, 16);
        let back = parse_obj(&m.to_obj()).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn parses_polygons_slashes_and_negative_indices() {
        let text = "# quad\nv 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nvn 0 0 1\nf 1//1 2//1 3//1 4//1\nf -4 -3 -2\n";
        let m = parse_obj(text).unwrap();
        assert_eq!(m.faces, vec![[0, 1, 2], [0, 2, 3], [0, 1, 2]]);
    }

    #[test]
    fn parse_errors() {
        assert!(matches!(parse_obj("v 0 0 0\n"), Err(Error::EmptyMesh)));
        assert!(matches!(
            parse_obj("v 0 0\nf 1 1 1\n"),
            Err(Error::MeshParse { line: 1, .. })
        ));
        assert!(matches!(
            parse_obj("v 0 0 0\nf 1 2 3\n"),
            Err(Error::MeshParse { line: 2, .. })
        ));
        assert!(matches!(load_mesh("/nonexistent/mesh.obj"), Err(Error::Io { .. })));
    }

    #[test]
    fn sphere_vertices_on_radius() {
        let m = Mesh::sphere(0.05, 12, 24);
        for v in &m.vertices {
            assert!((v.coords.norm() - 0.05).abs() < 1e-12);
        }
        let c = Point::origin();
        for t in m.triangles() {
            let centroid = Point::from((t.v[0].coords + t.v[1].coords + t.v[2].coords) / 3.0);
            assert!(t.normal().dot(&(centroid - c)) > 0.0);
        }
    }
}
