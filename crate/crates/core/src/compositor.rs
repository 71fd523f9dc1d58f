//! Augmentation: the impact of virtual layers on a proxy scene, and its
//! composite over a background photograph. All colors are premultiplied.

use thiserror::Error;

use crate::color::Rgba;
use crate::field::Field2D;
use crate::illumination::{compute_w, Ctx, Effects};
use crate::render::{shade_layers, RenderError};
use crate::scene::MockScene;

#[derive(Debug, Error, PartialEq)]
pub enum CompositeError {
    #[error("resolution mismatch: expected {expected:?}, got {actual:?}")]
    ResolutionMismatch {
        expected: (usize, usize),
        actual: (usize, usize),
    },
    #[error("invalid recipe: {0}")]
    InvalidRecipe(String),
    #[error("no layer with id '{0}'")]
    UnknownLayer(String),
    #[error(transparent)]
    Render(#[from] RenderError),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ImpactSet {
    /// Premultiplied by `object_matte`.
    pub object_color: Field2D<Rgba>,
    pub object_matte: Field2D<f64>,
    /// Occlusion fraction on proxy receivers.
    pub shadow: Field2D<f64>,
    /// Premultiplied by its own alpha.
    pub reflection: Field2D<Rgba>,
    pub refraction: Option<Field2D<Rgba>>,
}

fn over(top: Rgba, bottom: Rgba) -> Rgba {
    top + bottom * (1.0 - top.a())
}

impl ImpactSet {
    pub fn empty(width: usize, height: usize) -> Self {
        ImpactSet {
            object_color: Field2D::new(width, height, Rgba::ZERO),
            object_matte: Field2D::new(width, height, 0.0),
            shadow: Field2D::new(width, height, 0.0),
            reflection: Field2D::new(width, height, Rgba::ZERO),
            refraction: None,
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        self.object_matte.dims()
    }

    fn check_dims(&self, expected: (usize, usize)) -> Result<(), CompositeError> {
        let dims = [
            self.object_color.dims(),
            self.object_matte.dims(),
            self.shadow.dims(),
            self.reflection.dims(),
        ];
        let refr = self.refraction.as_ref().map(|r| r.dims());
        for actual in dims.into_iter().chain(refr) {
            if actual != expected {
                return Err(CompositeError::ResolutionMismatch { expected, actual });
            }
        }
        Ok(())
    }

    /// Checks value ranges: mattes and shadow in [0,1], premultiplied colors
    /// within their mattes (to 1e-6).
    pub fn validate(&self) -> Result<(), CompositeError> {
        self.check_dims(self.dims())?;
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        let within = |c: Rgba, m: f64| (0..3).all(|q| c[q] <= m + 1e-6) && unit(m);
        let bad = |what: &str| Err(CompositeError::InvalidRecipe(format!("{what} out of range")));
        if !self.object_matte.values().iter().all(|&m| unit(m)) {
            return bad("object matte");
        }
        if !self.shadow.values().iter().all(|&s| unit(s)) {
            return bad("shadow");
        }
        let obj = self.object_color.values().iter().zip(self.object_matte.values());
        if !obj.into_iter().all(|(c, &m)| within(*c, m)) {
            return bad("object color");
        }
        if !self.reflection.values().iter().all(|c| within(*c, c.a())) {
            return bad("reflection");
        }
        if let Some(r) = &self.refraction {
            if !r.values().iter().all(|c| within(*c, c.a())) {
                return bad("refraction");
            }
        }
        Ok(())
    }

    /// One impact set equivalent to applying `self` and then `top`. Exact when
    /// the supports of the two sets do not overlap.
    pub fn merge(&self, top: &ImpactSet) -> Result<ImpactSet, CompositeError> {
        top.check_dims(self.dims())?;
        let zip = |a: &Field2D<Rgba>, b: &Field2D<Rgba>, f: fn(Rgba, Rgba) -> Rgba| {
            a.zip_map(b, move |x, y| f(x, y)).expect("dims checked")
        };
        let refraction = match (&self.refraction, &top.refraction) {
            (None, None) => None,
            (Some(a), None) => Some(a.clone()),
            (None, Some(b)) => Some(b.clone()),
            (Some(a), Some(b)) => Some(zip(b, a, over)),
        };
        Ok(ImpactSet {
            object_color: top
                .object_color
                .zip_map(
                    &self.object_color.zip_map(&top.object_matte, |c, m| c * (1.0 - m)).expect("dims checked"),
                    |t, b| t + b,
                )
                .expect("dims checked"),
            object_matte: self
                .object_matte
                .zip_map(&top.object_matte, |a, b| b + a * (1.0 - b))
                .expect("dims checked"),
            shadow: self
                .shadow
                .zip_map(&top.shadow, |a, b| 1.0 - (1.0 - a) * (1.0 - b))
                .expect("dims checked"),
            reflection: zip(&self.reflection, &top.reflection, |a, b| {
                let rgb = a + b;
                rgb.with_alpha(a.a() + b.a() * (1.0 - a.a()))
            }),
            refraction,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CompositeRecipe {
    pub background: Field2D<Rgba>,
    pub impacts: Vec<ImpactSet>,
    /// `k` in [0,1].
    pub shadow_strength: f64,
    /// Per-channel multiplier in [0,1]; 1 means the shadow leaves that channel alone.
    pub shadow_tint: [f64; 3],
}

impl CompositeRecipe {
    pub fn new(background: Field2D<Rgba>, impacts: Vec<ImpactSet>) -> Self {
        CompositeRecipe {
            background,
            impacts,
            shadow_strength: 1.0,
            shadow_tint: [0.0; 3],
        }
    }

    pub fn validate(&self) -> Result<(), CompositeError> {
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        if !unit(self.shadow_strength) {
            return Err(CompositeError::InvalidRecipe(format!(
                "shadow strength must be in [0,1], got {}",
                self.shadow_strength
            )));
        }
        if !self.shadow_tint.iter().all(|&x| unit(x)) {
            return Err(CompositeError::InvalidRecipe(format!(
                "shadow tint must be in [0,1], got {:?}",
                self.shadow_tint
            )));
        }
        for imp in &self.impacts {
            imp.check_dims(self.background.dims())?;
        }
        Ok(())
    }
}

/// One impact applied to a background pixel: darken, add reflection,
/// refraction over, object over.
#[inline]
fn apply(bg: Rgba, imp: &ImpactSet, p: usize, k: f64, tint: [f64; 3]) -> Rgba {
    let mut b = bg;
    let s = imp.shadow.values()[p];
    if s != 0.0 {
        for q in 0..3 {
            b.0[q] *= 1.0 - k * s * (1.0 - tint[q]);
        }
    }
    let r = imp.reflection.values()[p];
    if r != Rgba::ZERO {
        b = (b + r).with_alpha(b.a() + r.a() * (1.0 - b.a()));
    }
    if let Some(refr) = &imp.refraction {
        let r = refr.values()[p];
        if r != Rgba::ZERO {
            b = over(r, b);
        }
    }
    let m = imp.object_matte.values()[p];
    if m != 0.0 {
        b = imp.object_color.values()[p] + b * (1.0 - m);
    }
    b
}

/// Folds every impact set, in order, into the background.
pub fn composite(recipe: &CompositeRecipe) -> Result<Field2D<Rgba>, CompositeError> {
    recipe.validate()?;
    let bg = &recipe.background;
    let (k, tint) = (recipe.shadow_strength, recipe.shadow_tint);
    let w = bg.width();
    Ok(Field2D::from_fn(w, bg.height(), |i, j| {
        let p = j * w + i;
        recipe
            .impacts
            .iter()
            .fold(bg.values()[p], |b, imp| apply(b, imp, p, k, tint))
    }))
}

/// The impact of the layers `virtual_ids` on the rest of the scene (the proxies).
///
/// The shadow is the relative loss of direct diffuse illumination on the proxy
/// surfaces once the virtual layers join the occluders. The reflection is the
/// radiance of the virtual layers alone, mirrored by every proxy mirror. The
/// object is the virtual layers shaded under the full scene's illumination.
pub fn render_impacts(scene: &MockScene, virtual_ids: &[&str], t: f64) -> Result<ImpactSet, CompositeError> {
    let mut virt = Vec::with_capacity(virtual_ids.len());
    for id in virtual_ids {
        let k = scene
            .layers
            .iter()
            .position(|l| l.id == *id)
            .ok_or_else(|| CompositeError::UnknownLayer(id.to_string()))?;
        if !virt.contains(&k) {
            virt.push(k);
        }
    }
    let (w, h) = (scene.width, scene.height);
    if virt.is_empty() {
        return Ok(ImpactSet::empty(w, h));
    }
    let proxy_ids: Vec<usize> = (0..scene.layers.len()).filter(|k| !virt.contains(k)).collect();
    let mut proxies = scene.clone();
    proxies.layers = proxy_ids.iter().map(|&k| scene.layers[k].clone()).collect();

    let direct = Effects {
        shadows: true,
        specular: false,
        mirrors: false,
        bleed: false,
        caustics: false,
    };
    let luminance = |planes: &[Field2D<Rgba>]| {
        Field2D::from_fn(w, h, |i, j| planes.iter().map(|p| p.get(i, j).luminance()).sum::<f64>())
    };
    let before = luminance(&Ctx::new(&proxies, t, direct).composite_frame(&[], false, &[]).0);
    let full = Ctx::new(scene, t, direct);
    let after = luminance(&full.composite_frame(&virt, false, &[]).0);
    let shadow = before
        .zip_map(&after, |b, a| if b > 1e-12 { (1.0 - a / b).clamp(0.0, 1.0) } else { 0.0 })
        .expect("same resolution");

    let mut reflection = Field2D::new(w, h, Rgba::ZERO);
    let mirrors: Vec<usize> = proxy_ids
        .iter()
        .copied()
        .filter(|&k| scene.layers[k].material.mirror.is_some())
        .collect();
    if !mirrors.is_empty() {
        let lit = Ctx::new(scene, t, Effects::default());
        let (d, s, transmit) = lit.composite_frame(&proxy_ids, true, &[]);
        let radiance = Field2D::from_fn(w, h, |i, j| {
            let c = d.iter().chain(&s).fold(Rgba::ZERO, |acc, p| acc + p.get(i, j));
            c.with_alpha(1.0 - transmit.get(i, j))
        });
        for &k in &mirrors {
            let planes = crate::illumination::reflect_planes(&lit, k, std::slice::from_ref(&radiance));
            reflection = reflection
                .zip_map(&planes[0], |a, b| (a + b).with_alpha(a.a() + b.a() * (1.0 - a.a())))
                .expect("same resolution");
        }
        // Clamped so the premultiplied color stays within its alpha.
        reflection = reflection.map(|c| {
            let a = c.a().clamp(0.0, 1.0);
            Rgba::new(c.r().clamp(0.0, a), c.g().clamp(0.0, a), c.b().clamp(0.0, a), a)
        });
    }

    let illumination = compute_w(scene, t);
    let (color, coverage) = shade_layers(scene, &illumination, &|k| virt.contains(&k), &[], false)?;
    let object_color = color
        .zip_map(&coverage, |c, m| {
            let m = m.clamp(0.0, 1.0);
            Rgba::new(c.r().clamp(0.0, m), c.g().clamp(0.0, m), c.b().clamp(0.0, m), m)
        })
        .expect("same resolution");

    Ok(ImpactSet {
        object_color,
        object_matte: coverage.map(|m| m.clamp(0.0, 1.0)),
        shadow,
        reflection,
        refraction: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const RED: Rgba = Rgba::new(1.0, 0.0, 0.0, 1.0);

    #[test]
    fn empty_impacts_are_identity() {
        let bg = Field2D::from_fn(5, 3, |i, j| Rgba::new(i as f64 * 0.1, j as f64 * 0.3, 0.7, 1.0));
        let out = composite(&CompositeRecipe::new(bg.clone(), vec![])).unwrap();
        assert_eq!(out, bg);
        let out = composite(&CompositeRecipe::new(bg.clone(), vec![ImpactSet::empty(5, 3)])).unwrap();
        assert_eq!(out, bg);
    }

    #[test]
    fn opaque_object_replaces_background() {
        let bg = Field2D::new(4, 4, Rgba::gray(0.3));
        let mut imp = ImpactSet::empty(4, 4);
        imp.object_color = Field2D::new(4, 4, RED);
        imp.object_matte = Field2D::new(4, 4, 1.0);
        let out = composite(&CompositeRecipe::new(bg, vec![imp])).unwrap();
        assert!(out.values().iter().all(|p| *p == RED));
    }

    #[test]
    fn half_matte_over_black() {
        let bg = Field2D::new(2, 2, Rgba::new(0.0, 0.0, 0.0, 0.0));
        let mut imp = ImpactSet::empty(2, 2);
        imp.object_color = Field2D::new(2, 2, RED * 0.5);
        imp.object_matte = Field2D::new(2, 2, 0.5);
        let out = composite(&CompositeRecipe::new(bg, vec![imp])).unwrap();
        assert!(out.values().iter().all(|p| *p == RED * 0.5));
    }

    #[test]
    fn tinted_shadow_darkens_per_channel() {
        let bg = Field2D::new(1, 1, Rgba::WHITE);
        let mut imp = ImpactSet::empty(1, 1);
        imp.shadow = Field2D::new(1, 1, 1.0);
        let mut recipe = CompositeRecipe::new(bg, vec![imp]);
        recipe.shadow_strength = 0.5;
        recipe.shadow_tint = [0.0, 0.5, 1.0];
        let p = composite(&recipe).unwrap().get(0, 0);
        assert_eq!(p, Rgba::new(0.5, 0.75, 1.0, 1.0));
    }

    #[test]
    fn mismatched_resolution_is_rejected() {
        let recipe = CompositeRecipe::new(Field2D::new(2, 2, Rgba::WHITE), vec![ImpactSet::empty(3, 2)]);
        assert!(matches!(composite(&recipe), Err(CompositeError::ResolutionMismatch { .. })));
    }

    #[test]
    fn tint_outside_unit_range_is_rejected() {
        let mut recipe = CompositeRecipe::new(Field2D::new(1, 1, Rgba::WHITE), vec![]);
        recipe.shadow_tint = [1.5, 0.0, 0.0];
        assert!(matches!(composite(&recipe), Err(CompositeError::InvalidRecipe(_))));
    }
}
