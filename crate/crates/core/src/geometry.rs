//! World-frame kinematics and the pinhole camera.
//!
//! Conventions: right-handed world frame with z up, yaw measured
//! counter-clockwise from +x. A body frame has x forward, y left and z up.
//! The camera looks along body +x; image u grows to the right and v grows
//! downward, with the principal point at the image center.

use std::f64::consts::{PI, TAU};
use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3 { x: 0.0, y: 0.0, z: 0.0 };

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Vec3 { x, y, z }
    }

    pub fn dot(self, other: Vec3) -> f64 {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn cross(self, other: Vec3) -> Vec3 {
        Vec3::new(
            self.y * other.z - self.z * other.y,
            self.z * other.x - self.x * other.z,
            self.x * other.y - self.y * other.x,
        )
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    /// Length of the projection onto the horizontal plane.
    pub fn horizontal_norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn normalized(self) -> Vec3 {
        self * (1.0 / self.norm())
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    /// Rotates about the z axis by `angle` radians.
    pub fn rotate_z(self, angle: f64) -> Vec3 {
        let (s, c) = angle.sin_cos();
        Vec3::new(c * self.x - s * self.y, s * self.x + c * self.y, self.z)
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

/// Wraps a finite angle into `(-π, π]`.
pub fn normalize_angle(theta: f64) -> Result<f64> {
    if !theta.is_finite() {
        return Err(Error::invalid(format!("angle must be finite, got {theta}")));
    }
    Ok(wrap_angle(theta))
}

/// Infallible variant of [`normalize_angle`] for values already known to be finite.
pub(crate) fn wrap_angle(theta: f64) -> f64 {
    let r = theta.rem_euclid(TAU);
    if r > PI {
        r - TAU
    } else {
        r
    }
}

/// Position and heading of a rigid body in the world frame.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose {
    pub position: Vec3,
    /// Radians in `(-π, π]`.
    pub yaw: f64,
}

impl Pose {
    pub fn new(position: Vec3, yaw: f64) -> Result<Self> {
        if !position.is_finite() {
            return Err(Error::invalid("pose position must be finite"));
        }
        Ok(Pose {
            position,
            yaw: normalize_angle(yaw)?,
        })
    }

    /// Unit vector along body +x in the world frame.
    pub fn forward(&self) -> Vec3 {
        Vec3::new(self.yaw.cos(), self.yaw.sin(), 0.0)
    }

    /// Unit vector along body +y (left) in the world frame.
    pub fn left(&self) -> Vec3 {
        Vec3::new(-self.yaw.sin(), self.yaw.cos(), 0.0)
    }

    /// Composes a body-relative offset onto this pose.
    pub fn compose(&self, offset: &Pose) -> Pose {
        Pose {
            position: self.position + offset.position.rotate_z(self.yaw),
            yaw: wrap_angle(self.yaw + offset.yaw),
        }
    }

    /// Expresses a world-frame vector in this pose's body frame.
    pub fn to_body(&self, world: Vec3) -> Vec3 {
        world.rotate_z(-self.yaw)
    }

    /// Pose at `range` and `bearing` from the face normal of `head`, level with
    /// the head and yawed to look straight at it.
    pub fn station(head: &HeadPose, range: f64, bearing: f64) -> Pose {
        let around = head.facing - bearing;
        let position = head.position + Vec3::new(around.cos(), around.sin(), 0.0) * range;
        Pose {
            position,
            yaw: wrap_angle(around + PI),
        }
    }
}

/// The observed person: head center, facing direction and body dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeadPose {
    /// Head center in the world frame.
    pub position: Vec3,
    /// World yaw of the face normal.
    pub facing: f64,
    pub head_height: f64,
    pub person_height: f64,
}

impl HeadPose {
    pub fn new(position: Vec3, facing: f64, head_height: f64, person_height: f64) -> Result<Self> {
        let pose = HeadPose {
            position,
            facing,
            head_height,
            person_height,
        };
        pose.validate()?;
        Ok(HeadPose {
            facing: wrap_angle(facing),
            ..pose
        })
    }

    /// A person standing on the ground plane with feet at `(x, y, 0)`.
    pub fn standing(x: f64, y: f64, facing: f64, person_height: f64, head_height: f64) -> Result<Self> {
        HeadPose::new(
            Vec3::new(x, y, person_height - 0.5 * head_height),
            facing,
            head_height,
            person_height,
        )
    }

    pub fn validate(&self) -> Result<()> {
        if !self.position.is_finite() || !self.facing.is_finite() {
            return Err(Error::invalid("head pose must be finite"));
        }
        if !(self.head_height > 0.15 && self.head_height < 0.35) {
            return Err(Error::invalid(format!(
                "head_height {} outside (0.15, 0.35) m",
                self.head_height
            )));
        }
        if !(self.person_height > 1.2 && self.person_height < 2.2) {
            return Err(Error::invalid(format!(
                "person_height {} outside (1.2, 2.2) m",
                self.person_height
            )));
        }
        Ok(())
    }

    /// Unit face normal in the world frame.
    pub fn normal(&self) -> Vec3 {
        Vec3::new(self.facing.cos(), self.facing.sin(), 0.0)
    }

    pub fn top(&self) -> Vec3 {
        self.position + Vec3::new(0.0, 0.0, 0.5 * self.head_height)
    }

    pub fn feet(&self) -> Vec3 {
        self.top() - Vec3::new(0.0, 0.0, self.person_height)
    }

    /// Maps a head-local point (x along the face normal, y to the subject's
    /// left, z up) into the world frame.
    pub fn to_world(&self, local: Vec3) -> Vec3 {
        self.position + local.rotate_z(self.facing)
    }

    pub fn to_local(&self, world: Vec3) -> Vec3 {
        (world - self.position).rotate_z(-self.facing)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PinholeCamera {
    pub focal_px: f64,
    pub width_px: f64,
    pub height_px: f64,
    /// Camera pose relative to the vehicle body.
    pub mount: Pose,
}

impl Default for PinholeCamera {
    fn default() -> Self {
        PinholeCamera {
            focal_px: 140.0,
            width_px: 640.0,
            height_px: 368.0,
            mount: Pose::default(),
        }
    }
}

/// A projected point: pixel coordinates and forward depth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    pub u: f64,
    pub v: f64,
    pub depth: f64,
}

impl PinholeCamera {
    pub fn new(focal_px: f64, width_px: f64, height_px: f64) -> Result<Self> {
        let camera = PinholeCamera {
            focal_px,
            width_px,
            height_px,
            mount: Pose::default(),
        };
        camera.validate()?;
        Ok(camera)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.focal_px > 0.0 && self.focal_px.is_finite()) {
            return Err(Error::invalid("focal_px must be positive"));
        }
        if !(self.width_px > 0.0 && self.height_px > 0.0) {
            return Err(Error::invalid("image dimensions must be positive"));
        }
        Ok(())
    }

    pub fn cx(&self) -> f64 {
        0.5 * self.width_px
    }

    pub fn cy(&self) -> f64 {
        0.5 * self.height_px
    }

    /// World pose of the optical center for a vehicle at `body`.
    pub fn world_pose(&self, body: &Pose) -> Pose {
        body.compose(&self.mount)
    }

    /// Projects without frustum culling. `None` only when the point is not in
    /// front of the image plane.
    pub fn project_unclipped(&self, camera_pose: &Pose, p: Vec3) -> Option<Projection> {
        let d = p - camera_pose.position;
        let depth = d.dot(camera_pose.forward());
        if depth <= 0.0 {
            return None;
        }
        let right = -d.dot(camera_pose.left());
        let down = -d.z;
        Some(Projection {
            u: self.cx() + self.focal_px * right / depth,
            v: self.cy() + self.focal_px * down / depth,
            depth,
        })
    }

    pub fn contains(&self, u: f64, v: f64) -> bool {
        (0.0..=self.width_px).contains(&u) && (0.0..=self.height_px).contains(&v)
    }

    /// Unnormalized world direction of the ray through pixel `(u, v)`; its
    /// forward component is exactly one.
    pub fn pixel_ray(&self, camera_pose: &Pose, u: f64, v: f64) -> Vec3 {
        let right = (u - self.cx()) / self.focal_px;
        let down = (v - self.cy()) / self.focal_px;
        camera_pose.forward() - camera_pose.left() * right - Vec3::new(0.0, 0.0, down)
    }

    /// Inverse of [`project_point`]: the world point at `depth` along pixel `(u, v)`.
    pub fn unproject(&self, camera_pose: &Pose, u: f64, v: f64, depth: f64) -> Vec3 {
        camera_pose.position + self.pixel_ray(camera_pose, u, v) * depth
    }
}

/// Projects `p`, returning `None` when it lies behind the camera or outside the image.
pub fn project_point(camera: &PinholeCamera, camera_pose: &Pose, p: Vec3) -> Option<Projection> {
    camera
        .project_unclipped(camera_pose, p)
        .filter(|proj| camera.contains(proj.u, proj.v))
}

/// Axis-aligned image box in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BoundingBox {
    pub center_u: f64,
    pub center_v: f64,
    pub width: f64,
    pub height: f64,
}

impl BoundingBox {
    pub fn from_corners(u0: f64, v0: f64, u1: f64, v1: f64) -> Self {
        let (u0, u1) = (u0.min(u1), u0.max(u1));
        let (v0, v1) = (v0.min(v1), v0.max(v1));
        BoundingBox {
            center_u: 0.5 * (u0 + u1),
            center_v: 0.5 * (v0 + v1),
            width: u1 - u0,
            height: v1 - v0,
        }
    }

    pub fn min_u(&self) -> f64 {
        self.center_u - 0.5 * self.width
    }

    pub fn max_u(&self) -> f64 {
        self.center_u + 0.5 * self.width
    }

    pub fn min_v(&self) -> f64 {
        self.center_v - 0.5 * self.height
    }

    pub fn max_v(&self) -> f64 {
        self.center_v + 0.5 * self.height
    }

    /// Intersection with the image rectangle; `None` if nothing remains.
    pub fn clamp_to(&self, camera: &PinholeCamera) -> Option<BoundingBox> {
        let u0 = self.min_u().max(0.0);
        let u1 = self.max_u().min(camera.width_px);
        let v0 = self.min_v().max(0.0);
        let v1 = self.max_v().min(camera.height_px);
        (u1 > u0 && v1 > v0).then(|| BoundingBox::from_corners(u0, v0, u1, v1))
    }
}

/// Body width as a fraction of standing height.
pub const BODY_WIDTH_RATIO: f64 = 0.25;

/// Ground-truth person box: the vertical segment from feet to the top of
/// the head, with a fixed body-width proportion, clamped to the image.
pub fn person_bbox(camera: &PinholeCamera, camera_pose: &Pose, head: &HeadPose) -> Option<BoundingBox> {
    let top = camera.project_unclipped(camera_pose, head.top())?;
    let feet = camera.project_unclipped(camera_pose, head.feet())?;
    let width = camera.focal_px * BODY_WIDTH_RATIO * head.person_height / top.depth;
    let raw = BoundingBox::from_corners(
        top.u - 0.5 * width,
        top.v,
        top.u + 0.5 * width,
        feet.v,
    );
    raw.clamp_to(camera)
}

/// Horizontal range from the head to the vehicle, and the signed angle from
/// the face normal to the head→vehicle direction. Positive bearings are on
/// the subject's right; zero is a fully frontal view.
pub fn relative_bearing(uav: &Pose, head: &HeadPose) -> Result<(f64, f64)> {
    let d = uav.position - head.position;
    let range = d.horizontal_norm();
    if !(range > 1e-9) {
        return Err(Error::DegenerateGeometry(
            "vehicle and head are horizontally coincident".into(),
        ));
    }
    let around = d.y.atan2(d.x);
    Ok((range, wrap_angle(head.facing - around)))
}
