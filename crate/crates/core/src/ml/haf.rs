use crate::cloud::SceneModel;
use crate::geom::Point;
use crate::viewsphere::SphericalPose;

/// `n x n` map of the highest point per column over a square of side
/// `region_m` centered on `center`, row-major with rows along +y. Empty
/// columns and points below the table read 0.
pub fn haf_extract<'a>(points: impl IntoIterator<Item = &'a Point>, n: usize, center: &Point, region_m: f64) -> Vec<f64> {
    let mut map = vec![0.0f64; n * n];
    let cell = region_m / n as f64;
    let x0 = center.x - region_m / 2.0;
    let y0 = center.y - region_m / 2.0;
    for p in points {
        let i = ((p.x - x0) / cell).floor();
        let j = ((p.y - y0) / cell).floor();
        if i < 0.0 || j < 0.0 || i >= n as f64 || j >= n as f64 {
            continue;
        }
        let slot = &mut map[j as usize * n + i as usize];
        *slot = slot.max(p.z);
    }
    map
}

/// `[HAF(object), HAF(unexplored), polar_deg, azimuth_deg]`, length `2n^2 + 2`.
pub fn build_state(model: &SceneModel, pose: &SphericalPose, n: usize, center: &Point, region_m: f64) -> Vec<f64> {
    let mut v = haf_extract(&model.object_cloud.points, n, center, region_m);
    v.extend(haf_extract(model.unexplored.unexplored_points(), n, center, region_m));
    v.push(pose.polar_deg);
    v.push(pose.azimuth_deg);
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cloud::UnexploredGrid;
    use proptest::prelude::*;

    #[test]
    fn empty_and_single_point_maps() {
        let c = Point::origin();
        assert_eq!(haf_extract(&[], 5, &c, 0.3), vec![0.0; 25]);
        let m = haf_extract(&[Point::new(0.1, -0.1, 0.07)], 5, &c, 0.3);
        let nonzero: Vec<usize> = (0..25).filter(|&i| m[i] != 0.0).collect();
        // x = 0.1 is column 4, y = -0.1 is row 0.
        assert_eq!(nonzero, vec![4]);
        assert_eq!(m[4], 0.07);
    }

    #[test]
    fn state_layout() {
        let mut model = SceneModel::empty(0.005);
        model.object_cloud.points = vec![Point::new(0.0, 0.0, 0.05)];
        model.unexplored = UnexploredGrid {
            points: vec![Point::new(0.0, 0.0, 0.02)],
            explored: vec![true],
            spacing_m: 0.01,
            region: None,
        };
        let c = Point::origin();
        let a = build_state(&model, &SphericalPose::new(0.4, 50.0, 0.0), 5, &c, 0.3);
        let b = build_state(&model, &SphericalPose::new(0.4, 30.0, 40.0), 5, &c, 0.3);
        assert_eq!(a.len(), 52);
        assert!(a[25..50].iter().all(|v| *v == 0.0), "explored points do not count");
        assert_eq!(a[..50], b[..50]);
        assert_eq!((a[50], a[51]), (50.0, 0.0));
        assert_eq!((b[50], b[51]), (30.0, 40.0));
    }

    proptest! {
        #[test]
        fn length_and_sign(n in 1usize..9, pts in proptest::collection::vec((-0.2f64..0.2, -0.2f64..0.2, -0.05f64..0.2), 0..40)) {
            let mut model = SceneModel::empty(0.005);
            model.object_cloud.points = pts.iter().map(|&(x, y, z)| Point::new(x, y, z)).collect();
            let s = build_state(&model, &SphericalPose::new(0.4, 50.0, 0.0), n, &Point::origin(), 0.3);
            prop_assert_eq!(s.len(), 2 * n * n + 2);
            prop_assert!(s[..2 * n * n].iter().all(|v| *v >= 0.0));
        }
    }
}
