//! Bundled objects. Each mesh ships as an OBJ asset in its resting
//! orientation; the builders that produced them are kept so tests can check
//! the assets have not drifted.

use std::path::Path;

use crate::error::{Error, Result};
use crate::geom::{Point, Vector};
use crate::mesh::{load_mesh, parse_obj, Mesh};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ObjectSet {
    Training,
    Test,
    Fixture,
}

#[derive(Clone, Copy, Debug)]
pub struct BundledObject {
    pub name: &'static str,
    pub set: ObjectSet,
    pub obj: &'static str,
}

macro_rules! bundled {
    ($name:literal, $set:expr) => {
        BundledObject {
            name: $name,
            set: $set,
            obj: include_str!(concat!("../assets/", $name, ".obj")),
        }
    };
}

pub const BUNDLED: &[BundledObject] = &[
    bundled!("prism6x6x6", ObjectSet::Training),
    bundled!("prism10x8x4", ObjectSet::Training),
    bundled!("prism20x6x5", ObjectSet::Training),
    bundled!("handle", ObjectSet::Training),
    bundled!("gasket", ObjectSet::Training),
    bundled!("cinder_block", ObjectSet::Training),
    bundled!("can", ObjectSet::Test),
    bundled!("ball", ObjectSet::Test),
    bundled!("tall_box", ObjectSet::Test),
    bundled!("hex_prism", ObjectSet::Test),
    bundled!("mug", ObjectSet::Test),
    bundled!("bracket", ObjectSet::Test),
    bundled!("unit_cube", ObjectSet::Fixture),
];

pub fn bundled(name: &str) -> Option<&'static BundledObject> {
    BUNDLED.iter().find(|b| b.name == name)
}

pub fn names(set: ObjectSet) -> Vec<&'static str> {
    BUNDLED.iter().filter(|b| b.set == set).map(|b| b.name).collect()
}

pub fn training_objects() -> Vec<&'static str> {
    names(ObjectSet::Training)
}

pub fn test_objects() -> Vec<&'static str> {
    names(ObjectSet::Test)
}

/// The two prisms used for the self-supervised dataset.
pub const SELFSUP_OBJECTS: [&str; 2] = ["prism10x8x4", "prism20x6x5"];

/// A bundled name, or else a path to an OBJ file (named by its file stem).
pub fn resolve_object(name_or_path: &str) -> Result<(String, Mesh)> {
    if let Some(b) = bundled(name_or_path) {
        return Ok((b.name.to_string(), parse_obj(b.obj)?));
    }
    let path = Path::new(name_or_path);
    if path.extension().is_some() || path.exists() {
        let mesh = load_mesh(path)?;
        let stem = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| name_or_path.to_string());
        return Ok((stem, mesh));
    }
    Err(Error::UnknownObject(name_or_path.to_string()))
}

fn bx(min: [f64; 3], max: [f64; 3]) -> Mesh {
    Mesh::cuboid(Point::new(min[0], min[1], min[2]), Point::new(max[0], max[1], max[2]))
}

/// Regenerates a bundled mesh from primitives.
pub fn build(name: &str) -> Option<Mesh> {
    let m = match name {
        "prism6x6x6" => Mesh::block(0.06, 0.06, 0.06),
        // Stood on its long narrow side so the 4 cm dimension is horizontal.
        "prism10x8x4" => Mesh::block(0.10, 0.04, 0.08),
        "prism20x6x5" => Mesh::block(0.20, 0.06, 0.05),
        "handle" => Mesh::merge(&[
            bx([-0.06, -0.01, 0.0], [-0.04, 0.01, 0.05]),
            bx([0.04, -0.01, 0.0], [0.06, 0.01, 0.05]),
            bx([-0.06, -0.01, 0.05], [0.06, 0.01, 0.07]),
        ]),
        "gasket" => Mesh::merge(&[
            bx([-0.05, -0.05, 0.0], [0.05, -0.03, 0.03]),
            bx([-0.05, 0.03, 0.0], [0.05, 0.05, 0.03]),
            bx([-0.05, -0.03, 0.0], [-0.03, 0.03, 0.03]),
            bx([0.03, -0.03, 0.0], [0.05, 0.03, 0.03]),
        ]),
        "cinder_block" => Mesh::merge(&[
            bx([-0.07, -0.035, 0.0], [0.07, -0.02, 0.06]),
            bx([-0.07, 0.02, 0.0], [0.07, 0.035, 0.06]),
            bx([-0.07, -0.02, 0.0], [-0.055, 0.02, 0.06]),
            bx([-0.0075, -0.02, 0.0], [0.0075, 0.02, 0.06]),
            bx([0.055, -0.02, 0.0], [0.07, 0.02, 0.06]),
        ]),
        "can" => Mesh::cylinder(0.033, 0.10, 48),
        "ball" => Mesh::sphere(0.03, 24, 48).translated(Vector::new(0.0, 0.0, 0.03)),
        "tall_box" => Mesh::block(0.05, 0.07, 0.14),
        "hex_prism" => Mesh::cylinder(0.035, 0.07, 6),
        "mug" => Mesh::merge(&[
            Mesh::cylinder(0.035, 0.09, 48),
            bx([0.033, -0.006, 0.02], [0.06, 0.006, 0.03]),
            bx([0.033, -0.006, 0.06], [0.06, 0.006, 0.07]),
            bx([0.05, -0.006, 0.02], [0.06, 0.006, 0.07]),
        ]),
        "bracket" => Mesh::merge(&[
            bx([-0.06, -0.015, 0.0], [0.06, 0.015, 0.05]),
            bx([0.03, 0.015, 0.0], [0.06, 0.09, 0.05]),
        ]),
        "unit_cube" => bx([0.0; 3], [1.0; 3]),
        _ => return None,
    };
    Some(m)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn assets_match_builders() {
        for b in BUNDLED {
            let built = build(b.name).expect(b.name);
            assert_eq!(parse_obj(b.obj).unwrap(), built, "{} drifted", b.name);
        }
    }

    #[test]
    fn unit_cube_and_prism_assets() {
        let cube = parse_obj(bundled("unit_cube").unwrap().obj).unwrap();
        assert_eq!(cube.faces.len(), 12);
        let (_, prism) = resolve_object("prism10x8x4").unwrap();
        let e = prism.bounds().extent();
        let mut dims = [e.x, e.y, e.z];
        dims.sort_by(f64::total_cmp);
        assert!((dims[0] - 0.04).abs() < 1e-12 && (dims[1] - 0.08).abs() < 1e-12 && (dims[2] - 0.10).abs() < 1e-12);
        assert!(matches!(resolve_object("no_such_object"), Err(Error::UnknownObject(_))));
        assert!(matches!(resolve_object("/nonexistent/x.obj"), Err(Error::Io { .. })));
    }

    #[test]
    fn sets_are_disjoint_and_rest_on_table() {
        assert_eq!(training_objects().len(), 6);
        assert_eq!(test_objects().len(), 6);
        for n in test_objects() {
            assert!(!training_objects().contains(&n));
        }
        for b in BUNDLED.iter().filter(|b| b.set != ObjectSet::Fixture) {
            let m = parse_obj(b.obj).unwrap();
            assert!(m.bounds().min.z.abs() < 1e-12, "{}", b.name);
        }
    }

    /// Rewrites the OBJ assets from the builders.
    #[test]
    #[ignore]
    fn regenerate_assets() {
        let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("assets");
        std::fs::create_dir_all(&dir).unwrap();
        for b in BUNDLED {
            std::fs::write(dir.join(format!("{}.obj", b.name)), build(b.name).unwrap().to_obj()).unwrap();
        }
    }
}
