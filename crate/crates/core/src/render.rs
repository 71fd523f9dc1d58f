//! The full pipeline: illumination, then each layer's barycentric shading
//! composited front to back by matte over the background.

use thiserror::Error;

use crate::baryshade::{select_w, shade_pixel, specular_w, ShadeError};
use crate::color::Rgba;
use crate::field::Field2D;
use crate::illumination::{
    blend_refraction, compute_w, reflect_groups, refraction_geometry, sum_groups, transmissive_layer, Ctx, Effects,
    IlluminationError, IlluminationImage,
};
use crate::scene::MockScene;

#[derive(Debug, Error, PartialEq)]
pub enum RenderError {
    #[error("layer '{layer}': {source}")]
    Shade {
        layer: String,
        #[source]
        source: ShadeError,
    },
    #[error(transparent)]
    Shading(#[from] ShadeError),
    #[error(transparent)]
    Illumination(#[from] IlluminationError),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Rendered {
    pub illumination: IlluminationImage,
    /// Linear, unclamped, premultiplied.
    pub image: Field2D<Rgba>,
}

/// Renders a valid scene at time `t`.
pub fn render(scene: &MockScene, t: f64) -> Result<Rendered, RenderError> {
    let illumination = compute_w(scene, t);
    let image = shade_scene(scene, &illumination)?;
    Ok(Rendered { illumination, image })
}

/// Stage two over a precomputed illumination image. A transmissive layer
/// shows the styled image of everything else, looked up through its
/// refraction offsets.
pub fn shade_scene(scene: &MockScene, image: &IlluminationImage) -> Result<Field2D<Rgba>, RenderError> {
    let mut refractions = vec![None; scene.layers.len()];
    for (k, layer) in scene.layers.iter().enumerate() {
        if !layer.material.transmissive {
            continue;
        }
        transmissive_layer(scene, &layer.id, layer.material.eta)?;
        let geometry = refraction_geometry(scene, k, layer.material.eta);
        let (behind, _) = shade_layers(scene, image, &|q| q != k, &[], true)?;
        let reflection = layer
            .material
            .mirror
            .map(|_| sum_groups(reflect_groups(&Ctx::new(scene, image.t, Effects::default()), k)));
        refractions[k] = Some(blend_refraction(scene, k, &geometry, &behind, reflection.as_ref()));
    }
    let (color, _) = shade_layers(scene, image, &|_| true, &refractions, true)?;
    Ok(color)
}

/// Shades the layers selected by `include`, returning premultiplied color and
/// coverage. `refractions[k]`, when present, replaces layer `k`'s shading and
/// is already weighted by that layer's matte.
pub(crate) fn shade_layers(
    scene: &MockScene,
    image: &IlluminationImage,
    include: &(dyn Fn(usize) -> bool + Sync),
    refractions: &[Option<Field2D<Rgba>>],
    background: bool,
) -> Result<(Field2D<Rgba>, Field2D<f64>), RenderError> {
    let cfg = &scene.shading;
    for (k, layer) in scene.layers.iter().enumerate() {
        if include(k) {
            cfg.spec_for(layer).validate().map_err(|source| RenderError::Shade {
                layer: layer.id.clone(),
                source,
            })?;
        }
    }
    let w = select_w(image, cfg.w_source)?;
    let overlay = cfg.specular_overlay.as_ref().map(|o| (o, specular_w(image)));
    let (width, height) = (scene.width, scene.height);
    let pixels = Field2D::from_fn(width, height, |i, j| {
        let mut order = Vec::with_capacity(scene.layers.len());
        scene.layer_order(i, j, &mut order);
        let wp = w.get(i, j);
        let mut out = Rgba::ZERO;
        let mut transmit = 1.0;
        for &k in &order {
            if !include(k) {
                continue;
            }
            let layer = &scene.layers[k];
            let m = layer.matte_at(i, j);
            out += match refractions.get(k).and_then(Option::as_ref) {
                Some(r) => r.get(i, j) * transmit,
                None => {
                    let mut c = shade_pixel(&cfg.basis, &layer.control_textures, wp, i, j);
                    if let Some((o, ws)) = &overlay {
                        c += shade_pixel(&o.basis, &o.textures, ws.get(i, j), i, j);
                    }
                    c * (m * transmit)
                }
            };
            transmit *= 1.0 - m;
            if transmit <= 0.0 {
                break;
            }
        }
        if background {
            if let Some(bg) = &scene.background {
                out += bg.get(i, j) * transmit;
            }
        }
        (out, 1.0 - transmit)
    });
    Ok((pixels.map(|p| p.0), pixels.map(|p| p.1)))
}
