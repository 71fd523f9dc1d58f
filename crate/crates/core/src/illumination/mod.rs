//! Stage one: the material-free illumination image `W(u, v, t)`.
//!
//! Every pixel sees the scene's layers through their mattes, front to back by
//! depth `c + z_deform` (ties keep list order, later layers in front). Each
//! layer point `(u, v, height)` is lit with its proxy normal; albedo is never
//! applied to the visible point. Occlusion uses one height field: the highest
//! surface among opaque layers with matte of at least one half.

mod flatland;
mod mirror;
mod shadow;

pub use flatland::{flatland_render, FlatLight, FlatOccluder, FlatRender, FlatScene};
pub use mirror::{mirror_reflect, radiance_image, refract_offset, Refraction};
pub(crate) use mirror::{blend_refraction, reflect_groups, reflect_planes, refraction_geometry, sum_groups, transmissive_layer};
pub use shadow::{cast_shadow, HeightMap};

use rayon::prelude::*;
use thiserror::Error;

use crate::color::Rgba;
use crate::field::{Field2D, Vec3};
use crate::scene::{Light, MockScene};

#[derive(Debug, Error, PartialEq)]
pub enum IlluminationError {
    #[error("layer '{0}' is not a planar mirror")]
    NotAMirror(String),
    #[error("layer '{0}' is not transmissive")]
    NotTransmissive(String),
    #[error("eta must be positive, got {0}")]
    BadEta(f64),
    #[error("no layer with id '{0}'")]
    UnknownLayer(String),
}

/// Switches for the individual illumination effects.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Effects {
    pub shadows: bool,
    pub specular: bool,
    pub mirrors: bool,
    pub bleed: bool,
    pub caustics: bool,
}

impl Default for Effects {
    fn default() -> Self {
        Effects {
            shadows: true,
            specular: true,
            mirrors: true,
            bleed: true,
            caustics: true,
        }
    }
}

/// Illumination separated into diffuse and specular planes per light group.
#[derive(Clone, Debug, PartialEq)]
pub struct IlluminationImage {
    pub t: f64,
    pub exposure: f64,
    pub diffuse: Vec<Field2D<Rgba>>,
    pub specular: Vec<Field2D<Rgba>>,
    /// `clamp(exposure · luminance(Σ diffuse + specular), 0, 1)`.
    pub combined_w: Field2D<f64>,
}

fn sum_planes(planes: &[Field2D<Rgba>]) -> Field2D<Rgba> {
    let (w, h) = planes[0].dims();
    Field2D::from_fn(w, h, |i, j| planes.iter().fold(Rgba::ZERO, |acc, p| acc + p.get(i, j)))
}

impl IlluminationImage {
    pub fn groups(&self) -> usize {
        self.diffuse.len()
    }

    pub fn dims(&self) -> (usize, usize) {
        self.combined_w.dims()
    }

    pub fn total_diffuse(&self) -> Field2D<Rgba> {
        sum_planes(&self.diffuse)
    }

    pub fn total_specular(&self) -> Field2D<Rgba> {
        sum_planes(&self.specular)
    }

    /// Σ over groups of diffuse + specular.
    pub fn total(&self) -> Field2D<Rgba> {
        let d = self.total_diffuse();
        let s = self.total_specular();
        d.zip_map(&s, |a, b| a + b).expect("planes share a resolution")
    }
}

/// Shared per-evaluation state: lights at `t`, occluder heights, switches.
pub(crate) struct Ctx<'a> {
    pub scene: &'a MockScene,
    pub lights: Vec<Light>,
    pub map: HeightMap,
    pub groups: usize,
    pub effects: Effects,
    /// Per layer and group, the bleed ambient received from the other layers.
    bleed: Vec<Vec<Rgba>>,
}

/// Highest surface among opaque layers with matte ≥ 0.5; uncovered pixels
/// take the lowest surface height in the scene. Transmissive layers never
/// occlude.
pub fn occluder_heights(scene: &MockScene) -> Field2D<f64> {
    let floor = scene
        .layers
        .iter()
        .flat_map(|l| (0..scene.height).flat_map(move |j| (0..scene.width).map(move |i| l.surface_height(i, j))))
        .fold(f64::INFINITY, f64::min);
    let floor = if floor.is_finite() { floor } else { 0.0 };
    Field2D::from_fn(scene.width, scene.height, |i, j| {
        scene
            .layers
            .iter()
            .filter(|l| !l.material.transmissive && l.matte_at(i, j) >= 0.5)
            .map(|l| l.surface_height(i, j))
            .fold(floor, f64::max)
    })
}

impl<'a> Ctx<'a> {
    pub fn new(scene: &'a MockScene, t: f64, effects: Effects) -> Self {
        let mut ctx = Ctx {
            scene,
            lights: scene.lights_at(t),
            map: HeightMap::new(&occluder_heights(scene)),
            groups: scene.group_count(),
            effects,
            bleed: Vec::new(),
        };
        if effects.bleed && scene.bleed > 0.0 && scene.layers.len() > 1 {
            ctx.bleed = ctx.bleed_terms();
        }
        ctx
    }

    fn bleed_terms(&self) -> Vec<Vec<Rgba>> {
        let g = self.groups;
        let means: Vec<Vec<Rgba>> = (0..self.scene.layers.len())
            .map(|k| {
                let layer = &self.scene.layers[k];
                let mut d = vec![Rgba::ZERO; g];
                let mut s = vec![Rgba::ZERO; g];
                let mut acc = vec![Rgba::ZERO; g];
                let mut mass = 0.0;
                for j in 0..self.scene.height {
                    for i in 0..self.scene.width {
                        let m = layer.matte_at(i, j);
                        if m <= 0.0 {
                            continue;
                        }
                        d.fill(Rgba::ZERO);
                        s.fill(Rgba::ZERO);
                        self.light_layer(k, i, j, &mut d, &mut s);
                        let albedo = layer.material.diffuse_albedo.get(i, j);
                        for q in 0..g {
                            acc[q] += albedo.modulate(d[q]) * m;
                        }
                        mass += m;
                    }
                }
                if mass > 0.0 {
                    acc.iter().map(|c| *c * (1.0 / mass)).collect()
                } else {
                    acc
                }
            })
            .collect();
        (0..means.len())
            .map(|k| {
                (0..g)
                    .map(|q| {
                        means
                            .iter()
                            .enumerate()
                            .filter(|(o, _)| *o != k)
                            .fold(Rgba::ZERO, |a, (_, m)| a + m[q])
                            * self.scene.bleed
                    })
                    .collect()
            })
            .collect()
    }

    #[inline]
    pub fn order(&self, i: usize, j: usize, buf: &mut Vec<usize>) {
        self.scene.layer_order(i, j, buf);
    }

    /// Adds the illumination of layer `k` at pixel `(i, j)` to the per-group accumulators.
    pub fn light_layer(&self, k: usize, i: usize, j: usize, diffuse: &mut [Rgba], specular: &mut [Rgba]) {
        let scene = self.scene;
        let layer = &scene.layers[k];
        let u = (i as f64 + 0.5) / scene.width as f64;
        let v = (j as f64 + 0.5) / scene.height as f64;
        let p = Vec3::new(u, v, layer.surface_height(i, j));
        let n = layer.shape.normals().get(i, j);
        let view = scene.camera.to_viewer(p);
        let mat = &layer.material;
        let spec_on = self.effects.specular && mat.specular_strength > 0.0;
        let pixel = (j * scene.width + i) as u64;
        for (li, light) in self.lights.iter().enumerate() {
            let g = light.group;
            shadow::for_each_sample(light, None, p, (pixel, li as u64), |s| {
                let ndl = n.dot(&s.to_light);
                if ndl <= 0.0 {
                    return;
                }
                if self.effects.shadows && self.map.occluded(p, s.to_light, s.distance) {
                    return;
                }
                diffuse[g] += light.intensity * (ndl * s.weight);
                if spec_on {
                    let h = s.to_light + view;
                    let hn = h.norm();
                    if hn > 1e-12 {
                        let ndh = (n.dot(&h) / hn).max(0.0);
                        specular[g] += light.intensity * (ndh.powf(mat.shininess) * mat.specular_strength * s.weight);
                    }
                }
            });
        }
        if let Some(b) = self.bleed.get(k) {
            for (q, c) in b.iter().enumerate() {
                diffuse[q] += *c;
            }
        }
    }

    /// Per-pixel, per-group composite over the layers, skipping those in `exclude`.
    /// `albedo` multiplies each layer's contribution by its diffuse albedo,
    /// giving radiance instead of illumination. Returns the leftover transmittance.
    pub fn composite_pixel(
        &self,
        i: usize,
        j: usize,
        exclude: &[usize],
        albedo: bool,
        order: &mut Vec<usize>,
        diffuse: &mut [Rgba],
        specular: &mut [Rgba],
        extra_specular: &[Vec<Field2D<Rgba>>],
    ) -> f64 {
        let g = self.groups;
        let mut d = vec![Rgba::ZERO; g];
        let mut s = vec![Rgba::ZERO; g];
        self.order(i, j, order);
        let mut transmit = 1.0;
        for &k in order.iter() {
            if exclude.contains(&k) {
                continue;
            }
            let layer = &self.scene.layers[k];
            let m = layer.matte_at(i, j);
            let a = m * transmit;
            d.fill(Rgba::ZERO);
            s.fill(Rgba::ZERO);
            self.light_layer(k, i, j, &mut d, &mut s);
            let tint = if albedo {
                layer.material.diffuse_albedo.get(i, j)
            } else {
                Rgba::splat(1.0)
            };
            for q in 0..g {
                diffuse[q] += tint.modulate(d[q]) * a;
                specular[q] += tint.modulate(s[q]) * a;
            }
            if let Some(planes) = extra_specular.get(k) {
                // Mirror radiance is already weighted by the layer matte.
                for (q, plane) in planes.iter().enumerate() {
                    specular[q] += plane.get(i, j) * transmit;
                }
            }
            transmit *= 1.0 - m;
            if transmit <= 0.0 {
                break;
            }
        }
        transmit
    }

    /// Runs `composite_pixel` over the whole frame in parallel rows; returns per-group
    /// planes and the leftover transmittance.
    pub fn composite_frame(
        &self,
        exclude: &[usize],
        albedo: bool,
        extra_specular: &[Vec<Field2D<Rgba>>],
    ) -> (Vec<Field2D<Rgba>>, Vec<Field2D<Rgba>>, Field2D<f64>) {
        let (w, h, g) = (self.scene.width, self.scene.height, self.groups);
        let mut dbuf = vec![Rgba::ZERO; w * h * g];
        let mut sbuf = vec![Rgba::ZERO; w * h * g];
        let mut tbuf = vec![0.0; w * h];
        dbuf.par_chunks_mut(w * g)
            .zip(sbuf.par_chunks_mut(w * g))
            .zip(tbuf.par_chunks_mut(w))
            .enumerate()
            .for_each(|(j, ((drow, srow), trow))| {
                let mut order = Vec::new();
                for i in 0..w {
                    trow[i] = self.composite_pixel(
                        i,
                        j,
                        exclude,
                        albedo,
                        &mut order,
                        &mut drow[i * g..(i + 1) * g],
                        &mut srow[i * g..(i + 1) * g],
                        extra_specular,
                    );
                }
            });
        let split = |buf: &[Rgba]| -> Vec<Field2D<Rgba>> {
            (0..g)
                .map(|q| Field2D::from_vec(w, h, (0..w * h).map(|p| buf[p * g + q]).collect()).expect("sized"))
                .collect()
        };
        (
            split(&dbuf),
            split(&sbuf),
            Field2D::from_vec(w, h, tbuf).expect("sized"),
        )
    }
}

/// Exposure used for `combined_w`: the scene's explicit value, or the reciprocal
/// of the summed light luminance at time `t`.
pub fn exposure_at(scene: &MockScene, t: f64) -> f64 {
    scene.exposure.unwrap_or_else(|| {
        let total: f64 = scene.lights_at(t).iter().map(|l| l.intensity.luminance()).sum();
        if total > 0.0 {
            1.0 / total
        } else {
            1.0
        }
    })
}

pub fn compute_w(scene: &MockScene, t: f64) -> IlluminationImage {
    compute_w_with(scene, t, Effects::default())
}

pub fn compute_w_with(scene: &MockScene, t: f64, effects: Effects) -> IlluminationImage {
    let ctx = Ctx::new(scene, t, effects);
    let mirrors: Vec<Vec<Field2D<Rgba>>> = if effects.mirrors {
        scene
            .layers
            .iter()
            .enumerate()
            .map(|(k, l)| match l.material.mirror {
                Some(_) => mirror::reflect_groups(&ctx, k),
                None => Vec::new(),
            })
            .collect()
    } else {
        Vec::new()
    };
    let (mut diffuse, specular, _) = ctx.composite_frame(&[], false, &mirrors);
    if effects.caustics {
        for c in &scene.caustics {
            let plane = &mut diffuse[c.group];
            for (d, tex) in plane.values_mut().iter_mut().zip(c.texture.values()) {
                *d += *tex * c.strength;
            }
        }
    }
    let exposure = exposure_at(scene, t);
    let total = sum_planes(&diffuse)
        .zip_map(&sum_planes(&specular), |a, b| a + b)
        .expect("planes share a resolution");
    let combined_w = total.map(|c| (exposure * c.luminance()).clamp(0.0, 1.0));
    IlluminationImage {
        t,
        exposure,
        diffuse,
        specular,
        combined_w,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{Layer, Material, ShapeChannel};
    use std::f64::consts::FRAC_PI_4;

    fn flat_scene(n: usize, lights: Vec<Light>) -> MockScene {
        let mut s = MockScene::new(n, n, lights);
        s.layers.push(Layer {
            id: "ground".into(),
            c: 0.0,
            z_deform: None,
            shape: ShapeChannel::height_field(Field2D::new(n, n, 0.0), Field2D::new(n, n, 1.0)),
            control_textures: vec![Field2D::new(n, n, Rgba::BLACK), Field2D::new(n, n, Rgba::WHITE)],
            material: Material::simple(n, n),
        });
        s
    }

    #[test]
    fn flat_layer_under_zenith_light() {
        let scene = flat_scene(16, vec![Light::directional(Vec3::new(0.0, 0.0, -1.0), Rgba::WHITE)]);
        let w = compute_w(&scene, 0.0);
        assert!(w.diffuse[0].values().iter().all(|c| *c == Rgba::WHITE));
        assert!(w.specular[0].values().iter().all(|c| *c == Rgba::ZERO));
        assert!(w.combined_w.values().iter().all(|&x| (x - 1.0).abs() < 1e-12));
    }

    #[test]
    fn lights_are_additive() {
        let a = Light::from_elevation(0.3, 0.9, Rgba::new(0.7, 0.5, 0.2, 1.0));
        let b = Light::point(Vec3::new(0.2, 0.7, 0.6), Rgba::gray(0.4));
        let mut scene = flat_scene(32, vec![a]);
        scene.layers[0].shape = ShapeChannel::height_field(
            Field2D::from_uv_fn(32, 32, |u, v| 0.1 * (6.0 * u).sin() * (5.0 * v).cos()),
            Field2D::new(32, 32, 1.0),
        );
        scene.layers[0].material.specular_strength = 0.5;
        let wa = compute_w(&scene, 0.0);
        scene.lights = vec![b];
        let wb = compute_w(&scene, 0.0);
        scene.lights = vec![a, b];
        let wab = compute_w(&scene, 0.0);
        for k in 0..32 * 32 {
            let d = wab.diffuse[0].values()[k] - (wa.diffuse[0].values()[k] + wb.diffuse[0].values()[k]);
            let s = wab.specular[0].values()[k] - (wa.specular[0].values()[k] + wb.specular[0].values()[k]);
            assert!(d.max_abs() < 1e-6 && s.max_abs() < 1e-6);
        }
    }

    #[test]
    fn box_shadow_on_ground() {
        let n = 128;
        let mut scene = flat_scene(n, vec![Light::from_elevation(0.0, FRAC_PI_4, Rgba::WHITE)]);
        let matte = Field2D::from_uv_fn(n, n, |u, _| if (0.4..=0.5).contains(&u) { 1.0 } else { 0.0 });
        scene.layers.push(Layer {
            id: "box".into(),
            c: 0.2,
            z_deform: None,
            shape: ShapeChannel::height_field(Field2D::new(n, n, 0.0), matte),
            control_textures: scene.layers[0].control_textures.clone(),
            material: Material::simple(n, n),
        });
        let w = compute_w(&scene, 0.0);
        let row: Vec<f64> = (0..n).map(|i| w.diffuse[0].get(i, n / 2).r()).collect();
        for (i, d) in row.iter().enumerate() {
            let u = (i as f64 + 0.5) / n as f64;
            let lit = FRAC_PI_4.sin();
            if u > 0.5 && u < 0.69 {
                assert_eq!(*d, 0.0, "pixel {i}");
            } else if u < 0.4 || u > 0.71 {
                assert!((d - lit).abs() < 1e-12, "pixel {i}: {d}");
            }
        }
    }
}
