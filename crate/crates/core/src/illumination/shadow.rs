//! Height-field visibility by ray marching.
//!
//! Rays advance in steps of at most one pixel and test the bilinearly
//! interpolated height. Two levels of block maxima let a ray whose height is
//! nondecreasing skip blocks it cannot hit; skipped samples are exactly the
//! ones a plain march would have tested and found clear, so the result does
//! not depend on the acceleration.

use crate::field::{Field2D, Vec3};
use crate::rng;
use crate::scene::{Light, LightKind};

/// Heights must exceed the ray by this much to block it.
const OCCLUSION_EPS: f64 = 1e-9;
const FINE_BLOCK: usize = 8;
const COARSE_BLOCK: usize = 64;

/// Block maxima over pixel indices `[b·B - 1, (b + 1)·B + 1]`, the footprint of
/// every bilinear lookup whose lower-left pixel lies in block `b`.
struct BlockMax {
    size: usize,
    bw: usize,
    values: Vec<f64>,
}

impl BlockMax {
    fn new(h: &[f64], w: usize, hgt: usize, size: usize) -> Self {
        let bw = w.div_ceil(size);
        let bh = hgt.div_ceil(size);
        let mut values = vec![f64::NEG_INFINITY; bw * bh];
        for by in 0..bh {
            let y0 = (by * size).saturating_sub(1);
            let y1 = ((by + 1) * size + 1).min(hgt - 1);
            for bx in 0..bw {
                let x0 = (bx * size).saturating_sub(1);
                let x1 = ((bx + 1) * size + 1).min(w - 1);
                let mut m = f64::NEG_INFINITY;
                for y in y0..=y1 {
                    for &v in &h[y * w + x0..=y * w + x1] {
                        m = m.max(v);
                    }
                }
                values[by * bw + bx] = m;
            }
        }
        BlockMax { size, bw, values }
    }

    #[inline]
    fn get(&self, bx: usize, by: usize) -> f64 {
        self.values[by * self.bw + bx]
    }
}

/// Occluder heights prepared for repeated visibility queries.
pub struct HeightMap {
    w: usize,
    h: usize,
    data: Vec<f64>,
    max: f64,
    fine: BlockMax,
    coarse: BlockMax,
}

impl HeightMap {
    pub fn new(height: &Field2D<f64>) -> Self {
        let (w, h) = height.dims();
        let data = height.values().to_vec();
        let max = data.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        HeightMap {
            fine: BlockMax::new(&data, w, h, FINE_BLOCK),
            coarse: BlockMax::new(&data, w, h, COARSE_BLOCK),
            w,
            h,
            data,
            max,
        }
    }

    pub fn max_height(&self) -> f64 {
        self.max
    }

    /// Bilinear height at continuous pixel coordinates (pixel centers at integers).
    #[inline]
    fn height_at(&self, x: f64, y: f64) -> f64 {
        let x = x.clamp(0.0, (self.w - 1) as f64);
        let y = y.clamp(0.0, (self.h - 1) as f64);
        let x0 = (x.floor() as usize).min(self.w - 1);
        let y0 = (y.floor() as usize).min(self.h - 1);
        let x1 = (x0 + 1).min(self.w - 1);
        let y1 = (y0 + 1).min(self.h - 1);
        let fx = x - x0 as f64;
        let fy = y - y0 as f64;
        let r0 = y0 * self.w;
        let r1 = y1 * self.w;
        let top = self.data[r0 + x0] + (self.data[r0 + x1] - self.data[r0 + x0]) * fx;
        let bot = self.data[r1 + x0] + (self.data[r1 + x1] - self.data[r1 + x0]) * fx;
        top + (bot - top) * fy
    }

    /// Ray parameter at which a ray leaves the block of `size` containing the
    /// pixel-space point `(x, y)`, moving with pixel-space velocity `(dx, dy)`.
    #[inline]
    fn block_exit(size: usize, x: f64, y: f64, dx: f64, dy: f64, bx: usize, by: usize) -> f64 {
        let s = size as f64;
        let tx = if dx > 0.0 {
            (((bx + 1) as f64) * s - x) / dx
        } else if dx < 0.0 {
            ((bx as f64) * s - x) / dx
        } else {
            f64::INFINITY
        };
        let ty = if dy > 0.0 {
            (((by + 1) as f64) * s - y) / dy
        } else if dy < 0.0 {
            ((by as f64) * s - y) / dy
        } else {
            f64::INFINITY
        };
        tx.min(ty).max(0.0)
    }

    /// Whether the segment from `origin` along unit `dir`, up to parameter
    /// `max_t`, passes below the height field. Coordinates are scene units.
    pub fn occluded(&self, origin: Vec3, dir: Vec3, max_t: f64) -> bool {
        let (wf, hf) = (self.w as f64, self.h as f64);
        let dxp = dir.x * wf;
        let dyp = dir.y * hf;
        let speed = (dxp * dxp + dyp * dyp).sqrt();
        if speed < 1e-12 {
            // Vertical rays cannot pass below a single-valued height field.
            return false;
        }
        let dt = 1.0 / speed;
        let rising = dir.z >= 0.0;
        let x0 = origin.x * wf - 0.5;
        let y0 = origin.y * hf - 0.5;
        let mut k: u64 = 1;
        loop {
            let t = k as f64 * dt;
            if t >= max_t {
                return false;
            }
            let (u, v) = (origin.x + dir.x * t, origin.y + dir.y * t);
            if !(0.0..=1.0).contains(&u) || !(0.0..=1.0).contains(&v) {
                return false;
            }
            let z = origin.z + dir.z * t;
            if rising && z > self.max {
                return false;
            }
            let x = x0 + dxp * t;
            let y = y0 + dyp * t;
            if rising {
                let (bxf, byf) = (x.max(0.0), y.max(0.0));
                let cbx = ((bxf as usize) / COARSE_BLOCK).min(self.coarse.bw - 1);
                let cby = (byf as usize) / COARSE_BLOCK;
                let cby = cby.min(self.coarse.values.len() / self.coarse.bw - 1);
                if z > self.coarse.get(cbx, cby) {
                    let te = Self::block_exit(self.coarse.size, x, y, dxp, dyp, cbx, cby);
                    k = (k + 1).max(((t + te) / dt).floor() as u64);
                    continue;
                }
                let fbx = ((bxf as usize) / FINE_BLOCK).min(self.fine.bw - 1);
                let fby = ((byf as usize) / FINE_BLOCK).min(self.fine.values.len() / self.fine.bw - 1);
                if z > self.fine.get(fbx, fby) {
                    let te = Self::block_exit(self.fine.size, x, y, dxp, dyp, fbx, fby);
                    k = (k + 1).max(((t + te) / dt).floor() as u64);
                    continue;
                }
            }
            if self.height_at(x, y) > z + OCCLUSION_EPS {
                return true;
            }
            k += 1;
        }
    }

    /// Plain march without block skipping; reference for the accelerated path.
    #[cfg(test)]
    fn occluded_plain(&self, origin: Vec3, dir: Vec3, max_t: f64) -> bool {
        let (wf, hf) = (self.w as f64, self.h as f64);
        let speed = ((dir.x * wf).powi(2) + (dir.y * hf).powi(2)).sqrt();
        if speed < 1e-12 {
            return false;
        }
        let dt = 1.0 / speed;
        let mut k: u64 = 1;
        loop {
            let t = k as f64 * dt;
            if t >= max_t {
                return false;
            }
            let (u, v) = (origin.x + dir.x * t, origin.y + dir.y * t);
            if !(0.0..=1.0).contains(&u) || !(0.0..=1.0).contains(&v) {
                return false;
            }
            let z = origin.z + dir.z * t;
            if dir.z >= 0.0 && z > self.max {
                return false;
            }
            if self.height_at(origin.x * wf - 0.5 + dir.x * wf * t, origin.y * hf - 0.5 + dir.y * hf * t) > z + OCCLUSION_EPS {
                return true;
            }
            k += 1;
        }
    }
}

/// One point on a light, as seen from a receiver.
#[derive(Clone, Copy, Debug)]
pub(crate) struct LightSample {
    /// Unit vector toward the light.
    pub to_light: Vec3,
    /// Distance to the light (infinite for directional lights).
    pub distance: f64,
    /// Falloff times sample weight.
    pub weight: f64,
}

/// Grid dimensions used for `n` stratified samples.
fn strata(n: usize) -> (usize, usize) {
    let nx = (n as f64).sqrt().ceil().max(1.0) as usize;
    (nx, n.div_ceil(nx))
}

/// Calls `f` for each sample of `light` seen from `p`. `key` seeds the jitter of area lights.
#[inline]
pub(crate) fn for_each_sample(light: &Light, samples_override: Option<usize>, p: Vec3, key: (u64, u64), mut f: impl FnMut(LightSample)) {
    match light.kind {
        LightKind::Directional { direction } => f(LightSample {
            to_light: -direction,
            distance: f64::INFINITY,
            weight: 1.0,
        }),
        LightKind::Point { position } => {
            let d = position - p;
            let dist = d.norm();
            if dist > 1e-12 {
                f(LightSample {
                    to_light: d / dist,
                    distance: dist,
                    weight: 1.0 / (dist * dist),
                })
            }
        }
        LightKind::AreaRect {
            position,
            extent,
            samples,
        } => {
            let n = samples_override.unwrap_or(samples).max(1);
            let (nx, ny) = strata(n);
            let share = 1.0 / n as f64;
            for s in 0..n {
                let (jx, jy) = rng::uniform2(key.0, key.1, s as u64);
                let sx = ((s % nx) as f64 + jx) / nx as f64 - 0.5;
                let sy = ((s / nx) as f64 + jy) / ny as f64 - 0.5;
                let q = position + Vec3::new(sx * extent.0, sy * extent.1, 0.0);
                let d = q - p;
                let dist = d.norm();
                if dist > 1e-12 {
                    f(LightSample {
                        to_light: d / dist,
                        distance: dist,
                        weight: share / (dist * dist),
                    })
                }
            }
        }
    }
}

/// Fraction of `light` visible from a receiver point.
pub(crate) fn visibility(map: &HeightMap, light: &Light, samples: Option<usize>, p: Vec3, key: (u64, u64)) -> f64 {
    let mut seen = 0.0;
    let mut total = 0.0;
    for_each_sample(light, samples, p, key, |s| {
        total += 1.0;
        if !map.occluded(p, s.to_light, s.distance) {
            seen += 1.0;
        }
    });
    if total > 0.0 {
        seen / total
    } else {
        1.0
    }
}

/// Per-pixel visibility of `light` from the surface described by `height`:
/// 0 or 1 for point and directional lights, the visible fraction of
/// `samples` stratified points for area lights.
pub fn cast_shadow(height: &Field2D<f64>, light: &Light, samples: usize) -> Field2D<f64> {
    let map = HeightMap::new(height);
    let (w, _) = height.dims();
    let light_key = 0u64;
    Field2D::from_fn(height.width(), height.height(), |i, j| {
        let (u, v) = height.pixel_center(i, j);
        let p = Vec3::new(u, v, height.get(i, j));
        visibility(&map, light, Some(samples), p, ((j * w + i) as u64, light_key))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::color::Rgba;
    use proptest::prelude::*;
    use std::f64::consts::FRAC_PI_4;

    fn box_field(n: usize, a: f64, b: f64, h: f64) -> Field2D<f64> {
        Field2D::from_uv_fn(n, n, |u, _| if (a..=b).contains(&u) { h } else { 0.0 })
    }

    #[test]
    fn zenith_light_never_shadows() {
        let f = box_field(64, 0.4, 0.5, 1.0);
        let light = Light::from_elevation(0.0, std::f64::consts::FRAC_PI_2, Rgba::WHITE);
        let vis = cast_shadow(&f, &light, 1);
        assert!(vis.values().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn unit_box_shadow_band() {
        let n = 512;
        let f = box_field(n, 0.4, 0.5, 1.0);
        let light = Light::from_elevation(0.0, FRAC_PI_4, Rgba::WHITE);
        let vis = cast_shadow(&f, &light, 1);
        for i in 0..n {
            let u = (i as f64 + 0.5) / n as f64;
            let shadowed = vis.get(i, n / 2) == 0.0;
            assert_eq!(shadowed, u > 0.5, "pixel {i} at u={u}");
        }
    }

    #[test]
    fn area_light_is_fractional_at_penumbra() {
        let n = 128;
        let f = box_field(n, 0.4, 0.5, 0.3);
        let light = Light {
            kind: LightKind::AreaRect {
                position: Vec3::new(-0.2, 0.5, 0.8),
                extent: (0.6, 0.6),
                samples: 16,
            },
            intensity: Rgba::WHITE,
            group: 0,
        };
        let vis = cast_shadow(&f, &light, 16);
        assert!(vis.values().iter().any(|&v| v > 0.0 && v < 1.0));
        assert!(vis.values().iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn acceleration_matches_plain_march(
            seed in 0u64..1000,
            az in 0.0f64..std::f64::consts::TAU,
            el in 0.15f64..1.4,
        ) {
            let n = 96;
            let f = Field2D::from_fn(n, n, |i, j| {
                let (x, _) = rng::uniform2(seed, i as u64 / 7, j as u64 / 5);
                if x > 0.8 { 0.3 * x } else { 0.02 * x }
            });
            let map = HeightMap::new(&f);
            let (se, ce) = el.sin_cos();
            let dir = Vec3::new(-ce * az.cos(), -ce * az.sin(), se);
            for j in (0..n).step_by(5) {
                for i in (0..n).step_by(3) {
                    let (u, v) = f.pixel_center(i, j);
                    let p = Vec3::new(u, v, f.get(i, j));
                    prop_assert_eq!(map.occluded(p, dir, f64::INFINITY), map.occluded_plain(p, dir, f64::INFINITY));
                }
            }
        }
    }
}
