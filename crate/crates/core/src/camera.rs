//! Viewing geometry shared by the illumination stage and the anamorphic baker.
//!
//! Scene space: `x = u`, `y = v` on the unit-square picture plane, `z` is height
//! toward a frontal viewer. The frontal orthographic camera looks down `-z` and
//! maps screen `(u, v)` to `(x, y)` directly. A vantage camera is a pinhole with
//! screen `u` along its right vector and screen `v` along its down vector.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::field::Vec3;

/// Height of the ray origins of the orthographic camera.
pub const ORTHO_EYE_Z: f64 = 1.0e3;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ray {
    pub origin: Vec3,
    pub dir: Vec3,
}

impl Ray {
    pub fn at(&self, t: f64) -> Vec3 {
        self.origin + self.dir * t
    }
}

fn default_down() -> Vec3 {
    Vec3::new(0.0, 1.0, 0.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(from = "CameraRepr", into = "CameraRepr")]
pub enum Camera {
    #[default]
    OrthoFrontal,
    Vantage {
        eye: Vec3,
        look_at: Vec3,
        /// Vertical field of view, radians.
        fov_y: f64,
        /// Hint for the screen-down direction.
        down: Vec3,
    },
}

/// Wire form; struct variants so unknown keys are rejected for every kind.
#[derive(Clone, Copy, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum CameraRepr {
    OrthoFrontal {},
    Vantage {
        eye: Vec3,
        look_at: Vec3,
        fov_y: f64,
        #[serde(default = "default_down")]
        down: Vec3,
    },
}

impl From<CameraRepr> for Camera {
    fn from(r: CameraRepr) -> Self {
        match r {
            CameraRepr::OrthoFrontal {} => Camera::OrthoFrontal,
            CameraRepr::Vantage { eye, look_at, fov_y, down } => Camera::Vantage { eye, look_at, fov_y, down },
        }
    }
}

impl From<Camera> for CameraRepr {
    fn from(c: Camera) -> Self {
        match c {
            Camera::OrthoFrontal => CameraRepr::OrthoFrontal {},
            Camera::Vantage { eye, look_at, fov_y, down } => CameraRepr::Vantage { eye, look_at, fov_y, down },
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum CameraError {
    #[error("fov_y must lie in (0, pi), got {0}")]
    BadFov(f64),
    #[error("eye and look_at coincide")]
    DegenerateView,
    #[error("down hint is parallel to the viewing direction")]
    DegenerateUp,
}

/// Orthonormal frame of a pinhole camera.
#[derive(Clone, Copy, Debug)]
struct Frame {
    eye: Vec3,
    forward: Vec3,
    right: Vec3,
    down: Vec3,
    tan_half: f64,
}

impl Camera {
    pub fn vantage(eye: Vec3, look_at: Vec3, fov_y: f64) -> Self {
        Camera::Vantage {
            eye,
            look_at,
            fov_y,
            down: default_down(),
        }
    }

    pub fn validate(&self) -> Result<(), CameraError> {
        match *self {
            Camera::OrthoFrontal => Ok(()),
            Camera::Vantage { .. } => self.frame().map(|_| ()),
        }
    }

    fn frame(&self) -> Result<Frame, CameraError> {
        let Camera::Vantage { eye, look_at, fov_y, down } = *self else {
            unreachable!("frame of an orthographic camera");
        };
        if !(fov_y > 0.0 && fov_y < std::f64::consts::PI) {
            return Err(CameraError::BadFov(fov_y));
        }
        let f = look_at - eye;
        if f.norm() < 1e-12 {
            return Err(CameraError::DegenerateView);
        }
        let forward = f.normalize();
        let r = forward.cross(&down);
        // Fall back to a fixed hint when the requested one is parallel.
        let r = if r.norm() < 1e-9 {
            forward.cross(&Vec3::new(0.0, 0.0, -1.0))
        } else {
            r
        };
        if r.norm() < 1e-9 {
            return Err(CameraError::DegenerateUp);
        }
        let right = r.normalize();
        let down = right.cross(&forward);
        Ok(Frame {
            eye,
            forward,
            right,
            down,
            tan_half: (fov_y * 0.5).tan(),
        })
    }

    /// Primary ray through screen point `(u, v)` for a screen of the given aspect (width/height).
    pub fn ray(&self, u: f64, v: f64, aspect: f64) -> Ray {
        match self {
            Camera::OrthoFrontal => Ray {
                origin: Vec3::new(u, v, ORTHO_EYE_Z),
                dir: Vec3::new(0.0, 0.0, -1.0),
            },
            Camera::Vantage { .. } => {
                let fr = self.frame().expect("camera validated before use");
                let x = (2.0 * u - 1.0) * fr.tan_half * aspect;
                let y = (2.0 * v - 1.0) * fr.tan_half;
                Ray {
                    origin: fr.eye,
                    dir: (fr.forward + fr.right * x + fr.down * y).normalize(),
                }
            }
        }
    }

    /// Screen position and ray distance of a scene point; `None` behind the camera.
    pub fn project(&self, p: Vec3, aspect: f64) -> Option<(f64, f64, f64)> {
        match self {
            Camera::OrthoFrontal => Some((p.x, p.y, ORTHO_EYE_Z - p.z)),
            Camera::Vantage { .. } => {
                let fr = self.frame().expect("camera validated before use");
                let q = p - fr.eye;
                let z = q.dot(&fr.forward);
                if z <= 1e-12 {
                    return None;
                }
                let x = q.dot(&fr.right) / z;
                let y = q.dot(&fr.down) / z;
                let u = (x / (fr.tan_half * aspect) + 1.0) * 0.5;
                let v = (y / fr.tan_half + 1.0) * 0.5;
                Some((u, v, q.norm()))
            }
        }
    }

    /// Unit vector from a scene point toward the viewer.
    pub fn to_viewer(&self, p: Vec3) -> Vec3 {
        match self {
            Camera::OrthoFrontal => Vec3::new(0.0, 0.0, 1.0),
            Camera::Vantage { eye, .. } => {
                let d = eye - p;
                let n = d.norm();
                if n > 0.0 {
                    d / n
                } else {
                    Vec3::new(0.0, 0.0, 1.0)
                }
            }
        }
    }

    /// The eye position of a vantage camera rotated by `angle` radians about the
    /// vertical axis through its look-at point.
    pub fn orbit_z(&self, angle: f64) -> Camera {
        match *self {
            Camera::OrthoFrontal => Camera::OrthoFrontal,
            Camera::Vantage { eye, look_at, fov_y, down } => {
                let d = eye - look_at;
                let (s, c) = angle.sin_cos();
                let rotated = Vec3::new(c * d.x - s * d.y, s * d.x + c * d.y, d.z);
                Camera::Vantage {
                    eye: look_at + rotated,
                    look_at,
                    fov_y,
                    down,
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vantage_ray_and_projection_are_inverse() {
        let cam = Camera::vantage(Vec3::new(0.5, -0.8, 1.6), Vec3::new(0.5, 0.5, 0.0), 0.7);
        cam.validate().unwrap();
        for &(u, v) in &[(0.1, 0.2), (0.5, 0.5), (0.93, 0.71)] {
            let r = cam.ray(u, v, 1.0);
            let p = r.at(1.7);
            let (pu, pv, d) = cam.project(p, 1.0).unwrap();
            assert!((pu - u).abs() < 1e-12 && (pv - v).abs() < 1e-12);
            assert!((d - 1.7).abs() < 1e-12);
        }
    }

    #[test]
    fn looking_straight_down_matches_ortho_orientation() {
        let cam = Camera::vantage(Vec3::new(0.5, 0.5, 2.0), Vec3::new(0.5, 0.5, 0.0), 0.5);
        let (u0, v0, _) = cam.project(Vec3::new(0.4, 0.4, 0.0), 1.0).unwrap();
        let (u1, v1, _) = cam.project(Vec3::new(0.6, 0.6, 0.0), 1.0).unwrap();
        assert!(u1 > u0 && v1 > v0);
    }

    #[test]
    fn rejects_degenerate_cameras() {
        let p = Vec3::new(1.0, 1.0, 1.0);
        assert_eq!(Camera::vantage(p, p, 0.5).validate(), Err(CameraError::DegenerateView));
        assert_eq!(
            Camera::vantage(p, Vec3::zeros(), 3.5).validate(),
            Err(CameraError::BadFov(3.5))
        );
    }

    #[test]
    fn serde_shape() {
        let cam: Camera = serde_json::from_str(r#"{"kind":"ortho_frontal"}"#).unwrap();
        assert_eq!(cam, Camera::OrthoFrontal);
        let v: Camera =
            serde_json::from_str(r#"{"kind":"vantage","eye":[0,0,1],"look_at":[0,0,0],"fov_y":0.5}"#).unwrap();
        assert!(matches!(v, Camera::Vantage { .. }));
        assert!(serde_json::from_str::<Camera>(r#"{"kind":"ortho_frontal","zoom":2}"#).is_err());
    }
}
