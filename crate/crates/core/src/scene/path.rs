//! Keyframed light animation, linearly interpolated in time.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Light, LightKind};
use crate::color::Rgba;
use crate::field::Vec3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LightKey {
    pub t: f64,
    pub light: usize,
    /// Position of point/area lights; ignored for directional lights.
    #[serde(default)]
    pub position: Option<Vec3>,
    /// Propagation direction of directional lights.
    #[serde(default)]
    pub direction: Option<Vec3>,
    #[serde(default)]
    pub intensity: Option<Rgba>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LightPath {
    pub keys: Vec<LightKey>,
}

#[derive(Debug, Error, PartialEq)]
pub enum LightPathError {
    #[error("light path keys must be sorted by t")]
    Unsorted,
    #[error("key at t={t} refers to light {light}, but the scene has {count} lights")]
    UnknownLight { t: f64, light: usize, count: usize },
    #[error("key at t={0} has a zero direction")]
    ZeroDirection(f64),
}

impl LightPath {
    pub fn validate(&self, light_count: usize) -> Result<(), LightPathError> {
        if self.keys.windows(2).any(|k| !(k[0].t <= k[1].t)) {
            return Err(LightPathError::Unsorted);
        }
        for k in &self.keys {
            if k.light >= light_count {
                return Err(LightPathError::UnknownLight {
                    t: k.t,
                    light: k.light,
                    count: light_count,
                });
            }
            if k.direction.is_some_and(|d| d.norm() < 1e-12) {
                return Err(LightPathError::ZeroDirection(k.t));
            }
        }
        Ok(())
    }

    /// Lights at time `t`; keys before the first or after the last key hold their value.
    pub fn apply(&self, lights: &[Light], t: f64) -> Vec<Light> {
        lights
            .iter()
            .enumerate()
            .map(|(idx, light)| {
                let keys: Vec<&LightKey> = self.keys.iter().filter(|k| k.light == idx).collect();
                if keys.is_empty() {
                    return *light;
                }
                let after = keys.partition_point(|k| k.t <= t);
                let (a, b, s) = if after == 0 {
                    (keys[0], keys[0], 0.0)
                } else if after == keys.len() {
                    (keys[after - 1], keys[after - 1], 0.0)
                } else {
                    let (a, b) = (keys[after - 1], keys[after]);
                    let span = b.t - a.t;
                    (a, b, if span > 0.0 { (t - a.t) / span } else { 0.0 })
                };
                let lerp3 = |x: Vec3, y: Vec3| x * (1.0 - s) + y * s;
                let mut out = *light;
                match &mut out.kind {
                    LightKind::Directional { direction } => {
                        if let (Some(x), Some(y)) = (a.direction, b.direction) {
                            let d = lerp3(x, y);
                            if d.norm() > 1e-12 {
                                *direction = d.normalize();
                            }
                        }
                    }
                    LightKind::Point { position } | LightKind::AreaRect { position, .. } => {
                        if let (Some(x), Some(y)) = (a.position, b.position) {
                            *position = lerp3(x, y);
                        }
                    }
                }
                if let (Some(x), Some(y)) = (a.intensity, b.intensity) {
                    out.intensity = x * (1.0 - s) + y * s;
                }
                out
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interpolates_and_clamps() {
        let lights = vec![Light::point(Vec3::new(0.0, 0.0, 1.0), Rgba::WHITE)];
        let path = LightPath {
            keys: vec![
                LightKey {
                    t: 0.0,
                    light: 0,
                    position: Some(Vec3::new(0.0, 0.0, 1.0)),
                    direction: None,
                    intensity: None,
                },
                LightKey {
                    t: 2.0,
                    light: 0,
                    position: Some(Vec3::new(1.0, 0.0, 1.0)),
                    direction: None,
                    intensity: None,
                },
            ],
        };
        path.validate(1).unwrap();
        let pos = |t| match path.apply(&lights, t)[0].kind {
            LightKind::Point { position } => position.x,
            _ => unreachable!(),
        };
        assert_eq!(pos(-1.0), 0.0);
        assert!((pos(0.5) - 0.25).abs() < 1e-12);
        assert_eq!(pos(5.0), 1.0);
        assert_eq!(path.validate(0), Err(LightPathError::UnknownLight { t: 0.0, light: 0, count: 0 }));
    }
}
