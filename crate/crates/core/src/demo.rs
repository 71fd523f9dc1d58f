//! Built-in scenes: a small demo still life and a corpus of scenes that each
//! exercise one illumination feature.

use crate::color::Rgba;
use crate::field::{Field2D, Vec3};
use crate::scene::{Caustic, Layer, Light, LightKind, Material, MockScene, ShapeChannel};

/// Smooth step of width `soft` around the edge `d = 0` (inside where `d < 0`).
fn edge(d: f64, soft: f64) -> f64 {
    (0.5 - d / soft).clamp(0.0, 1.0)
}

fn textures(n: usize, dark: Rgba, light: Rgba, stripes: f64) -> Vec<Field2D<Rgba>> {
    let shade = move |base: Rgba| {
        Field2D::from_uv_fn(n, n, move |u, v| {
            let s = 0.92 + 0.08 * (stripes * (u + 0.5 * v) * std::f64::consts::TAU).sin();
            Rgba::new(base.r() * s, base.g() * s, base.b() * s, 1.0)
        })
    };
    vec![shade(dark), shade(light)]
}

fn floor(n: usize) -> Layer {
    let mut material = Material::simple(n, n);
    material.diffuse_albedo = Field2D::new(n, n, Rgba::gray(0.7));
    Layer {
        id: "floor".into(),
        c: 0.0,
        z_deform: None,
        shape: ShapeChannel::height_field(Field2D::new(n, n, 0.0), Field2D::new(n, n, 1.0)),
        control_textures: textures(n, Rgba::new(0.08, 0.1, 0.22, 1.0), Rgba::new(0.95, 0.86, 0.66, 1.0), 14.0),
        material,
    }
}

/// A dome of radius `r` (in uv) and peak `height` centered at `(cx, cy)`.
pub fn dome(id: &str, n: usize, (cx, cy): (f64, f64), r: f64, height: f64) -> Layer {
    let soft = 1.5 / n as f64;
    let dist = move |u: f64, v: f64| ((u - cx).powi(2) + (v - cy).powi(2)).sqrt();
    let h = Field2D::from_uv_fn(n, n, move |u, v| {
        let d = dist(u, v) / r;
        height * (1.0 - d * d).max(0.0).sqrt()
    });
    let matte = Field2D::from_uv_fn(n, n, move |u, v| edge(dist(u, v) - r, soft));
    let mut material = Material::simple(n, n);
    material.diffuse_albedo = Field2D::new(n, n, Rgba::new(0.8, 0.3, 0.25, 1.0));
    material.specular_strength = 0.4;
    material.shininess = 40.0;
    Layer {
        id: id.into(),
        c: 0.05,
        z_deform: None,
        shape: ShapeChannel::height_field(h, matte),
        control_textures: textures(n, Rgba::new(0.25, 0.02, 0.08, 1.0), Rgba::new(1.0, 0.55, 0.35, 1.0), 0.0),
        material,
    }
}

/// A flat-topped box over the uv rectangle `[x0, x1] × [y0, y1]`.
pub fn block(id: &str, n: usize, (x0, x1): (f64, f64), (y0, y1): (f64, f64), height: f64) -> Layer {
    let inside = move |u: f64, v: f64| x0 <= u && u <= x1 && y0 <= v && v <= y1;
    let h = Field2D::from_uv_fn(n, n, move |u, v| if inside(u, v) { height } else { 0.0 });
    let matte = Field2D::from_uv_fn(n, n, move |u, v| if inside(u, v) { 1.0 } else { 0.0 });
    let mut material = Material::simple(n, n);
    material.diffuse_albedo = Field2D::new(n, n, Rgba::new(0.3, 0.5, 0.75, 1.0));
    Layer {
        id: id.into(),
        c: 0.02,
        z_deform: None,
        shape: ShapeChannel::height_field(h, matte),
        control_textures: textures(n, Rgba::new(0.05, 0.12, 0.2, 1.0), Rgba::new(0.55, 0.8, 0.95, 1.0), 6.0),
        material,
    }
}

/// Two objects on a floor under a warm key light and a cool point fill in a
/// second light group.
pub fn demo_scene(n: usize) -> MockScene {
    let key = Light::from_elevation(0.5, 0.75, Rgba::new(1.0, 0.95, 0.85, 1.0));
    let fill = Light::point(Vec3::new(0.85, 0.15, 0.9), Rgba::new(0.2, 0.25, 0.35, 1.0)).with_group(1);
    let mut scene = MockScene::new(n, n, vec![key, fill]);
    scene.layers.push(floor(n));
    scene.layers.push(dome("dome", n, (0.38, 0.56), 0.17, 0.12));
    scene.layers.push(block("block", n, (0.62, 0.8), (0.3, 0.52), 0.08));
    scene.background = Some(Field2D::new(n, n, Rgba::gray(0.1)));
    scene
}

/// Named scenes covering shadows, area lights, mirrors, refraction, bleed and
/// caustics, at resolution `n`.
pub fn corpus(n: usize) -> Vec<(&'static str, MockScene)> {
    let mut out = vec![("demo", demo_scene(n))];

    let mut soft = demo_scene(n);
    soft.lights[0] = Light {
        kind: LightKind::AreaRect {
            position: Vec3::new(-0.2, 0.2, 1.0),
            extent: (0.3, 0.3),
            samples: 4,
        },
        intensity: Rgba::gray(1.5),
        group: 0,
    };
    out.push(("area", soft));

    let mut mirror = demo_scene(n);
    let mut pool = floor(n);
    pool.id = "pool".into();
    pool.c = 0.01;
    pool.shape = pool
        .shape
        .with_matte(Field2D::from_uv_fn(n, n, |_, v| if v > 0.78 { 1.0 } else { 0.0 }));
    pool.material.mirror = Some(0.22);
    mirror.layers.push(pool);
    out.push(("mirror", mirror));

    let mut glass = demo_scene(n);
    let mut lens = dome("lens", n, (0.7, 0.75), 0.15, 0.05);
    lens.c = 0.2;
    lens.material.transmissive = true;
    lens.material.eta = 1.33;
    glass.layers.push(lens);
    out.push(("glass", glass));

    let mut bleed = demo_scene(n);
    bleed.bleed = 0.3;
    bleed.caustics.push(Caustic {
        texture: Field2D::from_uv_fn(n, n, |u, v| Rgba::gray(0.2 * (0.5 + 0.5 * (40.0 * u).sin() * (37.0 * v).cos()))),
        group: 0,
        strength: 0.5,
    });
    out.push(("bleed_caustic", bleed));

    out
}
