//! The discretized camera action space.
//!
//! The camera lives on a sphere of fixed radius around the object and always
//! looks at its center. Moves are compass directions on a (polar, azimuth)
//! grid: `N`/`S` decrease/increase the polar angle, `E`/`W` increase/decrease
//! the azimuth, and diagonals apply both components at full step size.

use std::fmt;
use std::str::FromStr;

use nalgebra::{Isometry3, Matrix3, Rotation3, Translation3, UnitQuaternion};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{Point, Vector};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ViewsphereConfig {
    pub radius_m: f64,
    pub step_deg: f64,
    pub num_directions: usize,
    pub polar_min_deg: f64,
    pub polar_max_deg: f64,
}

impl Default for ViewsphereConfig {
    fn default() -> Self {
        Self {
            radius_m: 0.4,
            step_deg: 20.0,
            num_directions: 8,
            polar_min_deg: 10.0,
            polar_max_deg: 85.0,
        }
    }
}

const ANGLE_EPS: f64 = 1e-9;

impl ViewsphereConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("viewsphere: {m}")));
        if !(self.radius_m > 0.0) {
            return bad("radius_m must be positive");
        }
        if !(self.step_deg > 0.0) {
            return bad("step_deg must be positive");
        }
        if self.num_directions != 8 {
            return bad("num_directions must be 8");
        }
        if !(0.0 < self.polar_min_deg
            && self.polar_min_deg < self.polar_max_deg
            && self.polar_max_deg <= 90.0)
        {
            return bad("need 0 < polar_min_deg < polar_max_deg <= 90");
        }
        Ok(())
    }

    pub fn polar_in_bounds(&self, polar_deg: f64) -> bool {
        polar_deg >= self.polar_min_deg - ANGLE_EPS && polar_deg <= self.polar_max_deg + ANGLE_EPS
    }

    /// Arc length of one pure-azimuth or pure-polar step on a great circle.
    pub fn step_arc_m(&self) -> f64 {
        self.radius_m * self.step_deg.to_radians()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SphericalPose {
    pub radius_m: f64,
    pub polar_deg: f64,
    pub azimuth_deg: f64,
}

impl SphericalPose {
    pub fn new(radius_m: f64, polar_deg: f64, azimuth_deg: f64) -> Self {
        Self {
            radius_m,
            polar_deg,
            azimuth_deg: wrap_deg(azimuth_deg),
        }
    }

    /// Unit vector from the sphere center toward the camera.
    pub fn unit_dir(&self) -> Vector {
        let (st, ct) = self.polar_deg.to_radians().sin_cos();
        let (sp, cp) = self.azimuth_deg.to_radians().sin_cos();
        Vector::new(st * cp, st * sp, ct)
    }

    /// Camera position for a sphere centered at `center`.
    pub fn position(&self, center: &Point) -> Point {
        center + self.unit_dir() * self.radius_m
    }

    pub fn key(&self) -> PoseKey {
        PoseKey {
            polar_mdeg: (self.polar_deg * 1000.0).round() as i64,
            azimuth_mdeg: (wrap_deg(self.azimuth_deg) * 1000.0).round() as i64 % 360_000,
        }
    }
}

fn wrap_deg(a: f64) -> f64 {
    let w = a.rem_euclid(360.0);
    // rem_euclid can return exactly 360.0 for tiny negative inputs.
    if w >= 360.0 {
        0.0
    } else {
        w
    }
}

/// Hashable identity of a viewpoint, quantized to millidegrees.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PoseKey {
    pub polar_mdeg: i64,
    pub azimuth_mdeg: i64,
}

impl PoseKey {
    /// The pose this key stands for, free of accumulated rounding.
    pub fn pose(&self, radius_m: f64) -> SphericalPose {
        SphericalPose::new(radius_m, self.polar_mdeg as f64 / 1000.0, self.azimuth_mdeg as f64 / 1000.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Direction {
    N,
    NE,
    E,
    SE,
    S,
    SW,
    W,
    NW,
}

impl Direction {
    /// Canonical order, also the tie-break order everywhere.
    pub const ALL: [Direction; 8] = [
        Direction::N,
        Direction::NE,
        Direction::E,
        Direction::SE,
        Direction::S,
        Direction::SW,
        Direction::W,
        Direction::NW,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Direction> {
        Self::ALL.get(i).copied()
    }

    /// Unit grid offsets `(polar, azimuth)`.
    pub fn grid_delta(self) -> (i32, i32) {
        match self {
            Direction::N => (-1, 0),
            Direction::NE => (-1, 1),
            Direction::E => (0, 1),
            Direction::SE => (1, 1),
            Direction::S => (1, 0),
            Direction::SW => (1, -1),
            Direction::W => (0, -1),
            Direction::NW => (-1, -1),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Direction::N => "N",
            Direction::NE => "NE",
            Direction::E => "E",
            Direction::SE => "SE",
            Direction::S => "S",
            Direction::SW => "SW",
            Direction::W => "W",
            Direction::NW => "NW",
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Direction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|d| d.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown direction {s:?}")))
    }
}

/// Move `steps` grid steps in `dir`. `None` when the polar bound is left.
pub fn neighbor(
    pose: &SphericalPose,
    dir: Direction,
    steps: u32,
    cfg: &ViewsphereConfig,
) -> Option<SphericalPose> {
    debug_assert!(steps >= 1);
    let (dp, da) = dir.grid_delta();
    let k = steps as f64 * cfg.step_deg;
    let polar = pose.polar_deg + dp as f64 * k;
    if !cfg.polar_in_bounds(polar) {
        return None;
    }
    Some(SphericalPose::new(
        pose.radius_m,
        polar,
        pose.azimuth_deg + da as f64 * k,
    ))
}

/// Valid one-step neighbors in canonical direction order.
pub fn enumerate_neighbors(
    pose: &SphericalPose,
    cfg: &ViewsphereConfig,
) -> Vec<(Direction, SphericalPose)> {
    enumerate_neighbors_at(pose, 1, cfg)
}

pub fn enumerate_neighbors_at(
    pose: &SphericalPose,
    steps: u32,
    cfg: &ViewsphereConfig,
) -> Vec<(Direction, SphericalPose)> {
    Direction::ALL
        .iter()
        .filter_map(|&d| neighbor(pose, d, steps, cfg).map(|p| (d, p)))
        .collect()
}

/// Great-circle distance between two poses on the same sphere.
pub fn arc_distance(a: &SphericalPose, b: &SphericalPose) -> Result<f64> {
    if (a.radius_m - b.radius_m).abs() > 1e-12 {
        return Err(Error::RadiusMismatch(a.radius_m, b.radius_m));
    }
    let ua = a.unit_dir();
    let ub = b.unit_dir();
    let angle = ua.cross(&ub).norm().atan2(ua.dot(&ub));
    Ok(a.radius_m * angle)
}

/// World-from-camera transform. Camera axes: +z optical axis toward the
/// center, +x image right, +y image down.
pub fn camera_extrinsics(pose: &SphericalPose, center: &Point) -> Isometry3<f64> {
    let eye = pose.position(center);
    let forward = (center - eye).normalize();
    let world_up = Vector::z();
    let mut up = world_up - forward * world_up.dot(&forward);
    if up.norm() < 1e-6 {
        // Looking straight down: use the direction of increasing polar angle
        // projected to the image plane, reversed, as "up".
        let (sp, cp) = pose.azimuth_deg.to_radians().sin_cos();
        up = -Vector::new(cp, sp, 0.0);
        up -= forward * up.dot(&forward);
    }
    let up = up.normalize();
    let y = -up;
    let x = y.cross(&forward);
    let rot = Rotation3::from_matrix_unchecked(Matrix3::from_columns(&[x, y, forward]));
    Isometry3::from_parts(
        Translation3::from(eye.coords),
        UnitQuaternion::from_rotation_matrix(&rot),
    )
}
