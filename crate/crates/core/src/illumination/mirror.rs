//! Planar mirrors and refraction through transmissive layers, in screen space.
//!
//! Layers are pictures, so a horizontal mirror plane at height `p` shows up as
//! the waterline row `v = 1 - p` (screen `v` grows downward while height grows
//! upward). A point at height `p + h` sits at row `1 - p - h`; its reflection
//! appears at `1 - p + h`, i.e. mirrored about the waterline.

use crate::color::Rgba;
use crate::field::{Field2D, Vec2, Vec3};
use crate::scene::MockScene;

use super::{Ctx, Effects, IlluminationError};

/// Per-group radiance (albedo × illumination) of the scene without layer
/// `exclude`; the background, if any, fills the leftover coverage of group 0.
pub(crate) fn radiance_groups(ctx: &Ctx<'_>, exclude: &[usize]) -> Vec<Field2D<Rgba>> {
    let (d, s, transmit) = ctx.composite_frame(exclude, true, &[]);
    let mut out: Vec<Field2D<Rgba>> = d
        .iter()
        .zip(&s)
        .map(|(a, b)| a.zip_map(b, |x, y| x + y).expect("same resolution"))
        .collect();
    if let Some(bg) = &ctx.scene.background {
        for ((o, b), t) in out[0].values_mut().iter_mut().zip(bg.values()).zip(transmit.values()) {
            *o += *b * *t;
        }
    }
    out
}

pub(crate) fn sum_groups(planes: Vec<Field2D<Rgba>>) -> Field2D<Rgba> {
    let mut it = planes.into_iter();
    let first = it.next().expect("at least one group");
    it.fold(first, |acc, p| acc.zip_map(&p, |a, b| a + b).expect("same resolution"))
}

/// Total radiance of the scene at time `t`: layer albedo times illumination,
/// composited over the background. Mirrors contribute no reflections here.
pub fn radiance_image(scene: &MockScene, t: f64) -> Field2D<Rgba> {
    let ctx = Ctx::new(scene, t, Effects::default());
    sum_groups(radiance_groups(&ctx, &[]))
}

/// Reflects per-group radiance planes about the waterline of layer `k`,
/// masked by the layer's matte.
pub(crate) fn reflect_planes(ctx: &Ctx<'_>, k: usize, radiance: &[Field2D<Rgba>]) -> Vec<Field2D<Rgba>> {
    let scene = ctx.scene;
    let layer = &scene.layers[k];
    let plane_height = layer.material.mirror.expect("caller checked for a mirror");
    let waterline = 1.0 - plane_height;
    radiance
        .iter()
        .map(|plane| {
            Field2D::from_fn(scene.width, scene.height, |i, j| {
                let m = layer.matte_at(i, j);
                if m <= 0.0 {
                    return Rgba::ZERO;
                }
                let (u, v) = plane.pixel_center(i, j);
                let vr = 2.0 * waterline - v;
                if !(0.0..=1.0).contains(&vr) {
                    return Rgba::ZERO;
                }
                plane.sample_bilinear(u, vr) * m
            })
        })
        .collect()
}

pub(crate) fn reflect_groups(ctx: &Ctx<'_>, k: usize) -> Vec<Field2D<Rgba>> {
    let radiance = radiance_groups(ctx, &[k]);
    reflect_planes(ctx, k, &radiance)
}

pub(crate) fn find_layer(scene: &MockScene, id: &str) -> Result<usize, IlluminationError> {
    scene
        .layers
        .iter()
        .position(|l| l.id == id)
        .ok_or_else(|| IlluminationError::UnknownLayer(id.to_string()))
}

/// Radiance reflected by the planar mirror layer `id` at time `t`: the rest
/// of the scene mirrored about the waterline, masked to the layer's matte.
pub fn mirror_reflect(scene: &MockScene, id: &str, t: f64) -> Result<Field2D<Rgba>, IlluminationError> {
    let k = find_layer(scene, id)?;
    if scene.layers[k].material.mirror.is_none() {
        return Err(IlluminationError::NotAMirror(id.to_string()));
    }
    let ctx = Ctx::new(scene, t, Effects::default());
    Ok(sum_groups(reflect_groups(&ctx, k)))
}

#[derive(Clone, Debug, PartialEq)]
pub struct Refraction {
    /// Fresnel blend of reflection and refracted background, masked by the matte.
    pub image: Field2D<Rgba>,
    /// Screen-space offset of the refracted lookup.
    pub offsets: Field2D<Vec2>,
    /// Schlick reflectance per pixel (1 where total internal reflection occurs).
    pub fresnel: Field2D<f64>,
    pub tir_count: usize,
}

/// Refracted unit direction of `d` through a surface with unit normal `n`
/// facing the incoming ray, for index ratio `eta` (outside / inside = 1 / eta).
/// `None` on total internal reflection.
pub(crate) fn snell(d: Vec3, n: Vec3, eta: f64) -> Option<Vec3> {
    let r = 1.0 / eta;
    let cos_i = -n.dot(&d);
    let k = 1.0 - r * r * (1.0 - cos_i * cos_i);
    if k < 0.0 {
        return None;
    }
    Some(d * r + n * (r * cos_i - k.sqrt()))
}

/// Schlick's approximation; exactly zero for index-matched media.
pub(crate) fn schlick(cos_i: f64, eta: f64) -> f64 {
    if (eta - 1.0).abs() < 1e-12 {
        return 0.0;
    }
    let f0 = ((1.0 - eta) / (1.0 + eta)).powi(2);
    f0 + (1.0 - f0) * (1.0 - cos_i.clamp(0.0, 1.0)).powi(5)
}

/// Per-pixel refraction geometry of layer `k`: screen offset of the refracted
/// lookup, Schlick reflectance, and whether total internal reflection occurred.
/// Zero outside the layer's matte.
pub(crate) fn refraction_geometry(scene: &MockScene, k: usize, eta: f64) -> Field2D<(Vec2, f64, bool)> {
    let layer = &scene.layers[k];
    Field2D::from_fn(scene.width, scene.height, |i, j| {
        if layer.matte_at(i, j) <= 0.0 {
            return (Vec2::zeros(), 0.0, false);
        }
        let u = (i as f64 + 0.5) / scene.width as f64;
        let v = (j as f64 + 0.5) / scene.height as f64;
        let depth = layer.shape.thickness().map_or(layer.c, |th| th.get(i, j));
        let p = Vec3::new(u, v, layer.surface_height(i, j));
        let d = -scene.camera.to_viewer(p);
        let mut n = layer.shape.normals().get(i, j);
        if n.dot(&d) > 0.0 {
            n = -n;
        }
        match snell(d, n, eta) {
            None => (Vec2::zeros(), 1.0, true),
            Some(tdir) => {
                let offset = if tdir.z.abs() > 1e-12 {
                    Vec2::new(tdir.x, tdir.y) * (depth / tdir.z.abs())
                } else {
                    Vec2::zeros()
                };
                (offset, schlick(-n.dot(&d), eta), false)
            }
        }
    })
}

/// Checks that layer `id` is transmissive and `eta` usable; returns its index.
pub(crate) fn transmissive_layer(scene: &MockScene, id: &str, eta: f64) -> Result<usize, IlluminationError> {
    let k = find_layer(scene, id)?;
    if !scene.layers[k].material.transmissive {
        return Err(IlluminationError::NotTransmissive(id.to_string()));
    }
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(IlluminationError::BadEta(eta));
    }
    Ok(k)
}

/// Blends `reflection` and `behind` sampled at the refracted offsets, masked by
/// the matte of layer `k`.
pub(crate) fn blend_refraction(
    scene: &MockScene,
    k: usize,
    geometry: &Field2D<(Vec2, f64, bool)>,
    behind: &Field2D<Rgba>,
    reflection: Option<&Field2D<Rgba>>,
) -> Field2D<Rgba> {
    let layer = &scene.layers[k];
    Field2D::from_fn(scene.width, scene.height, |i, j| {
        let m = layer.matte_at(i, j);
        if m <= 0.0 {
            return Rgba::ZERO;
        }
        let (offset, f, _) = geometry.get(i, j);
        let refl = reflection.map_or(Rgba::ZERO, |r| r.get(i, j));
        if f >= 1.0 {
            return refl;
        }
        let (u, v) = behind.pixel_center(i, j);
        refl * f + behind.sample_bilinear(u + offset.x, v + offset.y) * ((1.0 - f) * m)
    })
}

/// Refraction through the transmissive layer `id` with relative index `eta`.
///
/// The view ray is bent by the layer normal; the lookup into the scene behind
/// the layer moves by the horizontal part of the bent ray, scaled to the
/// layer's thickness (shape maps) or its plane offset `c` (other shapes).
pub fn refract_offset(scene: &MockScene, id: &str, eta: f64, t: f64) -> Result<Refraction, IlluminationError> {
    let k = transmissive_layer(scene, id, eta)?;
    let ctx = Ctx::new(scene, t, Effects::default());
    let behind = sum_groups(radiance_groups(&ctx, &[k]));
    let reflection = scene.layers[k]
        .material
        .mirror
        .map(|_| sum_groups(reflect_groups(&ctx, k)));
    let geometry = refraction_geometry(scene, k, eta);
    Ok(Refraction {
        image: blend_refraction(scene, k, &geometry, &behind, reflection.as_ref()),
        offsets: geometry.map(|g| g.0),
        fresnel: geometry.map(|g| g.1),
        tir_count: geometry.values().iter().filter(|g| g.2).count(),
    })
}
