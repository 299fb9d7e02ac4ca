//! Pinhole camera model, depth images and back-projection.

use nalgebra::Isometry3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{Point, Ray, Vector};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub ppx: f64,
    pub ppy: f64,
    pub width: u32,
    pub height: u32,
}

impl Default for CameraIntrinsics {
    fn default() -> Self {
        Self {
            fx: 300.0,
            fy: 300.0,
            ppx: 160.0,
            ppy: 120.0,
            width: 320,
            height: 240,
        }
    }
}

impl CameraIntrinsics {
    pub fn validate(&self) -> Result<()> {
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(Error::Config("intrinsics: focal lengths must be positive".into()));
        }
        if !(0.0..self.width as f64).contains(&self.ppx) || !(0.0..self.height as f64).contains(&self.ppy) {
            return Err(Error::Config("intrinsics: principal point outside image".into()));
        }
        Ok(())
    }

    /// Camera-frame direction (z = 1) of the ray through pixel center `(u, v)`.
    pub fn pixel_dir(&self, u: f64, v: f64) -> Vector {
        Vector::new((u - self.ppx) / self.fx, (v - self.ppy) / self.fy, 1.0)
    }

    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }
}

/// Image-plane projection of a camera-frame point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Projection {
    pub u: f64,
    pub v: f64,
    pub z: f64,
}

impl Projection {
    /// Nearest pixel, if it lies inside the image.
    pub fn pixel(&self, k: &CameraIntrinsics) -> Option<(u32, u32)> {
        let u = self.u.round();
        let v = self.v.round();
        (u >= 0.0 && v >= 0.0 && u < k.width as f64 && v < k.height as f64).then(|| (u as u32, v as u32))
    }
}

/// `X_p = K X / z`.
pub fn project_point(k: &CameraIntrinsics, x: &Point) -> Result<Projection> {
    if !(x.z > 0.0) {
        return Err(Error::BehindCamera(x.z));
    }
    Ok(Projection {
        u: k.fx * x.x / x.z + k.ppx,
        v: k.fy * x.y / x.z + k.ppy,
        z: x.z,
    })
}

/// Organized depth image: one ray per pixel, depth along the optical axis.
/// Invalid pixels hold NaN.
#[derive(Clone, Debug)]
pub struct DepthImage {
    pub intrinsics: CameraIntrinsics,
    /// World-from-camera transform.
    pub extrinsics: Isometry3<f64>,
    pub depth: Vec<f64>,
}

impl DepthImage {
    pub fn new_invalid(intrinsics: CameraIntrinsics, extrinsics: Isometry3<f64>) -> Self {
        Self {
            depth: vec![f64::NAN; intrinsics.pixel_count()],
            intrinsics,
            extrinsics,
        }
    }

    pub fn width(&self) -> u32 {
        self.intrinsics.width
    }

    pub fn height(&self) -> u32 {
        self.intrinsics.height
    }

    pub fn index(&self, u: u32, v: u32) -> usize {
        v as usize * self.intrinsics.width as usize + u as usize
    }

    pub fn get(&self, u: u32, v: u32) -> Option<f64> {
        let d = self.depth[self.index(u, v)];
        d.is_finite().then_some(d)
    }

    pub fn camera_position(&self) -> Point {
        Point::from(self.extrinsics.translation.vector)
    }

    /// World-frame ray through a pixel center; `t` equals camera depth.
    pub fn pixel_ray(&self, u: u32, v: u32) -> Ray {
        let d = self.intrinsics.pixel_dir(u as f64, v as f64);
        Ray::new(self.camera_position(), self.extrinsics.rotation * d)
    }

    pub fn valid_count(&self) -> usize {
        self.depth.iter().filter(|d| d.is_finite()).count()
    }

    pub fn world_to_camera(&self, p: &Point) -> Point {
        self.extrinsics.inverse_transform_point(p)
    }
}

/// Back-projected valid pixels in world frame, keeping their pixel indices.
#[derive(Clone, Debug, Default)]
pub struct OrganizedCloud {
    pub width: u32,
    pub height: u32,
    pub points: Vec<Point>,
    pub pixels: Vec<(u32, u32)>,
    pub camera: Point,
}

pub fn depth_to_cloud(img: &DepthImage) -> OrganizedCloud {
    let k = &img.intrinsics;
    let mut points = Vec::with_capacity(img.valid_count());
    let mut pixels = Vec::with_capacity(points.capacity());
    for v in 0..k.height {
        for u in 0..k.width {
            if let Some(z) = img.get(u, v) {
                let cam = Point::from(k.pixel_dir(u as f64, v as f64) * z);
                points.push(img.extrinsics * cam);
                pixels.push((u, v));
            }
        }
    }
    OrganizedCloud {
        width: k.width,
        height: k.height,
        points,
        pixels,
        camera: img.camera_position(),
    }
}
