//! A two-dimensional reference world: a ground curve, box occluders and one
//! light, rendered by exact ray casting against line segments. Serves as the
//! ground truth for the height-field shadow march.

use serde::{Deserialize, Serialize};

type P2 = (f64, f64);

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlatOccluder {
    /// Left edge.
    pub a: f64,
    /// Right edge.
    pub b: f64,
    pub height: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FlatLight {
    /// Light arriving from the left (`-x`) at `elevation` above the horizon;
    /// elevations past π/2 arrive from the right.
    Directional { elevation: f64 },
    Point { x: f64, z: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlatScene {
    pub length: f64,
    /// Ground polyline `(x, z)`, sorted by `x`; held constant beyond its ends.
    pub ground: Vec<P2>,
    pub occluders: Vec<FlatOccluder>,
    pub light: FlatLight,
}

impl FlatScene {
    /// Flat ground of the given length.
    pub fn flat(length: f64, occluders: Vec<FlatOccluder>, light: FlatLight) -> Self {
        FlatScene {
            length,
            ground: vec![(0.0, 0.0), (length, 0.0)],
            occluders,
            light,
        }
    }

    fn ground_at(&self, x: f64) -> (f64, f64) {
        let g = &self.ground;
        if g.is_empty() {
            return (0.0, 0.0);
        }
        if x <= g[0].0 {
            return (g[0].1, 0.0);
        }
        let k = g.partition_point(|p| p.0 <= x);
        if k >= g.len() {
            return (g[g.len() - 1].1, 0.0);
        }
        let (p, q) = (g[k - 1], g[k]);
        let slope = (q.1 - p.1) / (q.0 - p.0);
        (p.1 + slope * (x - p.0), slope)
    }

    fn segments(&self) -> Vec<(P2, P2)> {
        let mut s: Vec<(P2, P2)> = self.ground.windows(2).map(|w| (w[0], w[1])).collect();
        for o in &self.occluders {
            s.push(((o.a, 0.0), (o.a, o.height)));
            s.push(((o.a, o.height), (o.b, o.height)));
            s.push(((o.b, o.height), (o.b, 0.0)));
        }
        s
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FlatRender {
    /// Radiance seen by a flatlander looking straight down at each sample.
    pub image: Vec<f64>,
    /// Samples whose surface point cannot see the light.
    pub shadow_mask: Vec<bool>,
    /// Height of the visible surface at each sample.
    pub surface: Vec<f64>,
}

fn cross(a: P2, b: P2) -> f64 {
    a.0 * b.1 - a.1 * b.0
}

/// Ray parameter of the hit of `o + t·d` with segment `[p, q]`, if any.
fn hit(o: P2, d: P2, p: P2, q: P2) -> Option<f64> {
    let e = (q.0 - p.0, q.1 - p.1);
    let denom = cross(d, e);
    if denom.abs() < 1e-15 {
        return None;
    }
    let ap = (p.0 - o.0, p.1 - o.1);
    let t = cross(ap, e) / denom;
    let s = cross(ap, d) / denom;
    (0.0..=1.0).contains(&s).then_some(t)
}

const RAY_EPS: f64 = 1e-9;

/// Renders `samples` evenly spaced ground samples at `x_k = (k + 1/2) / samples · length`.
pub fn flatland_render(scene: &FlatScene, samples: usize) -> FlatRender {
    let segments = scene.segments();
    let mut image = Vec::with_capacity(samples);
    let mut shadow_mask = Vec::with_capacity(samples);
    let mut surface = Vec::with_capacity(samples);
    for k in 0..samples {
        let x = (k as f64 + 0.5) / samples as f64 * scene.length;
        let (gz, slope) = scene.ground_at(x);
        let top = scene
            .occluders
            .iter()
            .filter(|o| o.a <= x && x <= o.b)
            .map(|o| o.height)
            .fold(f64::NEG_INFINITY, f64::max);
        let (z, normal) = if top > gz {
            (top, (0.0, 1.0))
        } else {
            let len = (1.0 + slope * slope).sqrt();
            (gz, (-slope / len, 1.0 / len))
        };
        let (dir, dist, falloff) = match scene.light {
            FlatLight::Directional { elevation } => ((-elevation.cos(), elevation.sin()), f64::INFINITY, 1.0),
            FlatLight::Point { x: lx, z: lz } => {
                let d = (lx - x, lz - z);
                let n = (d.0 * d.0 + d.1 * d.1).sqrt();
                ((d.0 / n, d.1 / n), n, 1.0 / (n * n))
            }
        };
        let o = (x, z);
        let blocked = segments
            .iter()
            .any(|&(p, q)| hit(o, dir, p, q).is_some_and(|t| t > RAY_EPS && t < dist - RAY_EPS));
        let ndl = (normal.0 * dir.0 + normal.1 * dir.1).max(0.0);
        image.push(if blocked { 0.0 } else { ndl * falloff });
        shadow_mask.push(blocked);
        surface.push(z);
    }
    FlatRender {
        image,
        shadow_mask,
        surface,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_4;

    #[test]
    fn empty_scene_has_no_shadow() {
        let r = flatland_render(&FlatScene::flat(1.0, vec![], FlatLight::Directional { elevation: 0.3 }), 256);
        assert!(r.shadow_mask.iter().all(|m| !m));
    }

    #[test]
    fn unit_box_band() {
        let scene = FlatScene::flat(
            1.0,
            vec![FlatOccluder {
                a: 0.4,
                b: 0.5,
                height: 1.0,
            }],
            FlatLight::Directional { elevation: FRAC_PI_4 },
        );
        let r = flatland_render(&scene, 1024);
        for (k, m) in r.shadow_mask.iter().enumerate() {
            let x = (k as f64 + 0.5) / 1024.0;
            assert_eq!(*m, x > 0.5, "sample {k}");
        }
    }

    #[test]
    fn point_light_shadow_widens_away_from_light() {
        let scene = FlatScene::flat(
            1.0,
            vec![FlatOccluder {
                a: 0.3,
                b: 0.35,
                height: 0.1,
            }],
            FlatLight::Point { x: 0.2, z: 0.4 },
        );
        let r = flatland_render(&scene, 1000);
        let shadowed: Vec<usize> = (0..1000).filter(|&k| r.shadow_mask[k]).collect();
        // Shadow runs from the box to 0.35 + 0.1·(0.15/0.3)= 0.4.
        let end = (*shadowed.last().unwrap() as f64 + 0.5) / 1000.0;
        assert!((end - 0.4).abs() < 2e-3, "{end}");
    }
}
