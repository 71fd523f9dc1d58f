//! Mock-3D scenes: layers as textured unit rectangles `P(u, v) = (u, v, c)`.

mod analysis;
mod doc;
mod path;

pub use analysis::{
    curl_residual, discrete_circulation, flag_nonconservative, integrate_normals, normals_to_slopes, CurlReport,
    IntegrationError, IntegrationResult, DEFAULT_EPS_Z,
};
pub use doc::{
    apply_patch, parse_scene, parse_scene_file, resolve_doc, scene_to_doc, serialize_scene, CausticDoc, ColorValue,
    GridDoc, LayerDoc, LayerPatch, LightDoc, MaterialDoc, MirrorDoc, OverlayDoc, SceneDoc, SceneError, SceneErrors,
    ScenePatch, ShadingDoc, ShapeDoc, Source,
};
pub use path::{LightKey, LightPath, LightPathError};

use serde::{Deserialize, Serialize};

use crate::baryshade::{ShadingSpec, SpecularOverlay, WSource, WeightBasis};
use crate::camera::Camera;
use crate::color::Rgba;
use crate::field::{height_to_normals, Field2D, Vec3};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapeKind {
    HeightField,
    NormalField,
    ShapeMap,
}

/// Proxy shape of a layer. Normals are always available; for height fields
/// they are derived from the height by central differences.
#[derive(Clone, Debug, PartialEq)]
pub struct ShapeChannel {
    kind: ShapeKind,
    height: Option<Field2D<f64>>,
    normals: Field2D<Vec3>,
    thickness: Option<Field2D<f64>>,
    matte: Field2D<f64>,
}

impl ShapeChannel {
    pub fn height_field(height: Field2D<f64>, matte: Field2D<f64>) -> Self {
        ShapeChannel {
            kind: ShapeKind::HeightField,
            normals: height_to_normals(&height),
            height: Some(height),
            thickness: None,
            matte,
        }
    }

    pub fn normal_field(normals: Field2D<Vec3>, matte: Field2D<f64>) -> Self {
        ShapeChannel {
            kind: ShapeKind::NormalField,
            height: None,
            normals,
            thickness: None,
            matte,
        }
    }

    pub fn shape_map(normals: Field2D<Vec3>, thickness: Field2D<f64>, matte: Field2D<f64>) -> Self {
        ShapeChannel {
            kind: ShapeKind::ShapeMap,
            height: None,
            normals,
            thickness: Some(thickness),
            matte,
        }
    }

    pub fn kind(&self) -> ShapeKind {
        self.kind
    }
    pub fn height(&self) -> Option<&Field2D<f64>> {
        self.height.as_ref()
    }
    pub fn normals(&self) -> &Field2D<Vec3> {
        &self.normals
    }
    pub fn thickness(&self) -> Option<&Field2D<f64>> {
        self.thickness.as_ref()
    }
    pub fn matte(&self) -> &Field2D<f64> {
        &self.matte
    }

    pub fn with_matte(mut self, matte: Field2D<f64>) -> Self {
        self.matte = matte;
        self
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Material {
    pub diffuse_albedo: Field2D<Rgba>,
    pub specular_strength: f64,
    pub shininess: f64,
    /// Height of the horizontal mirror plane, when the layer is a planar mirror.
    pub mirror: Option<f64>,
    pub transmissive: bool,
    /// Relative index of refraction used when `transmissive`.
    pub eta: f64,
}

impl Material {
    pub fn simple(width: usize, height: usize) -> Self {
        Material {
            diffuse_albedo: Field2D::new(width, height, Rgba::gray(0.5)),
            specular_strength: 0.0,
            shininess: 16.0,
            mirror: None,
            transmissive: false,
            eta: 1.5,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    pub id: String,
    /// Constant plane offset `c`.
    pub c: f64,
    pub z_deform: Option<Field2D<f64>>,
    pub shape: ShapeChannel,
    pub control_textures: Vec<Field2D<Rgba>>,
    pub material: Material,
}

impl Layer {
    /// Depth used for per-pixel layer ordering: `c + z_deform`.
    #[inline]
    pub fn depth_at(&self, i: usize, j: usize) -> f64 {
        self.c + self.z_deform.as_ref().map_or(0.0, |z| z.get(i, j))
    }

    /// Height of the layer's surface: `c + z_deform + relief`.
    #[inline]
    pub fn surface_height(&self, i: usize, j: usize) -> f64 {
        self.depth_at(i, j) + self.shape.height().map_or(0.0, |h| h.get(i, j))
    }

    #[inline]
    pub fn matte_at(&self, i: usize, j: usize) -> f64 {
        self.shape.matte().get(i, j)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LightKind {
    /// `direction` is the unit propagation direction (from the light into the scene).
    Directional { direction: Vec3 },
    Point { position: Vec3 },
    /// Horizontal rectangle centered at `position`, sampled with `samples` stratified points.
    AreaRect {
        position: Vec3,
        extent: (f64, f64),
        samples: usize,
    },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Light {
    pub kind: LightKind,
    pub intensity: Rgba,
    pub group: usize,
}

impl Light {
    pub fn directional(direction: Vec3, intensity: Rgba) -> Self {
        Light {
            kind: LightKind::Directional {
                direction: direction.normalize(),
            },
            intensity,
            group: 0,
        }
    }

    /// Directional light arriving from azimuth `azimuth` (radians, 0 = from -x) at `elevation`.
    pub fn from_elevation(azimuth: f64, elevation: f64, intensity: Rgba) -> Self {
        let (se, ce) = elevation.sin_cos();
        let (sa, ca) = azimuth.sin_cos();
        Light::directional(Vec3::new(ce * ca, ce * sa, -se), intensity)
    }

    pub fn point(position: Vec3, intensity: Rgba) -> Self {
        Light {
            kind: LightKind::Point { position },
            intensity,
            group: 0,
        }
    }

    pub fn with_group(mut self, group: usize) -> Self {
        self.group = group;
        self
    }
}

/// An artist-supplied caustic pattern added to the diffuse plane of a light group.
#[derive(Clone, Debug, PartialEq)]
pub struct Caustic {
    pub texture: Field2D<Rgba>,
    pub group: usize,
    pub strength: f64,
}

/// Scene-wide shading configuration; per-layer textures come from each layer.
#[derive(Clone, Debug, PartialEq)]
pub struct ShadingConfig {
    pub basis: WeightBasis,
    pub w_source: WSource,
    pub specular_overlay: Option<SpecularOverlay>,
}

impl Default for ShadingConfig {
    fn default() -> Self {
        ShadingConfig {
            basis: WeightBasis::Linear,
            w_source: WSource::Combined,
            specular_overlay: None,
        }
    }
}

impl ShadingConfig {
    /// The shading spec of one layer.
    pub fn spec_for(&self, layer: &Layer) -> ShadingSpec {
        ShadingSpec {
            basis: self.basis.clone(),
            textures: layer.control_textures.clone(),
            w_source: self.w_source,
            specular_overlay: self.specular_overlay.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MockScene {
    pub width: usize,
    pub height: usize,
    /// Back to front.
    pub layers: Vec<Layer>,
    pub lights: Vec<Light>,
    pub camera: Camera,
    pub background: Option<Field2D<Rgba>>,
    pub shading: ShadingConfig,
    /// Scale from illumination luminance to `w`; `None` means `1 / Σ intensities`.
    pub exposure: Option<f64>,
    /// Strength of the single ambient color-bleeding bounce.
    pub bleed: f64,
    pub caustics: Vec<Caustic>,
    pub light_path: Option<LightPath>,
}

impl MockScene {
    /// A scene with one light and no layers; add layers before rendering.
    pub fn new(width: usize, height: usize, lights: Vec<Light>) -> Self {
        MockScene {
            width,
            height,
            layers: Vec::new(),
            lights,
            camera: Camera::OrthoFrontal,
            background: None,
            shading: ShadingConfig::default(),
            exposure: None,
            bleed: 0.0,
            caustics: Vec::new(),
            light_path: None,
        }
    }

    pub fn layer(&self, id: &str) -> Option<&Layer> {
        self.layers.iter().find(|l| l.id == id)
    }

    pub fn exposure(&self) -> f64 {
        self.exposure.unwrap_or_else(|| {
            let total: f64 = self.lights.iter().map(|l| l.intensity.luminance()).sum();
            if total > 0.0 {
                1.0 / total
            } else {
                1.0
            }
        })
    }

    pub fn group_count(&self) -> usize {
        self.lights.iter().map(|l| l.group + 1).max().unwrap_or(1)
    }

    /// Lights at time `t`, with the light path applied when present.
    pub fn lights_at(&self, t: f64) -> Vec<Light> {
        match &self.light_path {
            Some(path) => path.apply(&self.lights, t),
            None => self.lights.clone(),
        }
    }

    /// Layers covering pixel `(i, j)`, front to back by depth; ties put later
    /// layers in front.
    pub fn layer_order(&self, i: usize, j: usize, buf: &mut Vec<usize>) {
        buf.clear();
        let layers = &self.layers;
        buf.extend((0..layers.len()).filter(|&k| layers[k].matte_at(i, j) > 0.0));
        buf.sort_by(|&a, &b| {
            layers[b]
                .depth_at(i, j)
                .total_cmp(&layers[a].depth_at(i, j))
                .then(b.cmp(&a))
        });
    }

    /// Checks the structural invariants of a programmatically built scene.
    pub fn validate(&self) -> Result<(), SceneErrors> {
        doc::validate_scene(self)
    }
}
