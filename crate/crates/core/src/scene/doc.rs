//! The JSON scene document: schema, resolution into a [`MockScene`], validation
//! and normalized serialization.
//!
//! Every image-valued entry is a [`Source`]: a constant, a path relative to the
//! scene file (PNG or PFM), or an inline grid. Serialization writes constants
//! where a field is uniform and inline grids otherwise, so a serialized scene
//! is self-contained and reparses to an equal scene.

use std::collections::HashSet;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Caustic, Layer, Light, LightKind, LightPath, Material, MockScene, ShadingConfig, ShapeChannel, ShapeKind};
use crate::baryshade::{SpecularOverlay, WSource, WeightBasis};
use crate::camera::Camera;
use crate::color::Rgba;
use crate::field::{Field2D, Filter, Vec3};
use crate::io;

const DEFAULT_RESOLUTION: [usize; 2] = [256, 256];
const DEFAULT_AREA_SAMPLES: usize = 16;
const NORMAL_TOLERANCE: f64 = 1e-6;

/// An image-valued entry of the scene document.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Source {
    Constant(f64),
    Vector(Vec<f64>),
    Path(String),
    Grid(GridDoc),
}

/// Inline pixel data, row-major, `channels` interleaved values per pixel.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridDoc {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

/// A light intensity: gray, RGB (alpha 1) or RGBA.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ColorValue {
    Gray(f64),
    Rgb([f64; 3]),
    Rgba([f64; 4]),
}

impl ColorValue {
    pub fn to_rgba(self) -> Rgba {
        match self {
            ColorValue::Gray(g) => Rgba::gray(g),
            ColorValue::Rgb([r, g, b]) => Rgba::new(r, g, b, 1.0),
            ColorValue::Rgba(c) => Rgba(c),
        }
    }
}

impl Default for ColorValue {
    fn default() -> Self {
        ColorValue::Gray(1.0)
    }
}

fn default_resolution() -> [usize; 2] {
    DEFAULT_RESOLUTION
}
fn default_one() -> f64 {
    1.0
}
fn default_matte() -> Source {
    Source::Constant(1.0)
}
fn default_albedo() -> Source {
    Source::Constant(0.5)
}
fn default_shininess() -> f64 {
    16.0
}
fn default_eta() -> f64 {
    1.5
}
fn default_samples() -> usize {
    DEFAULT_AREA_SAMPLES
}
fn is_one(x: &f64) -> bool {
    *x == 1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneDoc {
    #[serde(default = "default_resolution")]
    pub resolution: [usize; 2],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exposure: Option<f64>,
    #[serde(default)]
    pub bleed: f64,
    #[serde(default)]
    pub layers: Vec<LayerDoc>,
    #[serde(default)]
    pub lights: Vec<LightDoc>,
    #[serde(default)]
    pub camera: Camera,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub background: Option<Source>,
    #[serde(default)]
    pub shading: ShadingDoc,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub caustics: Vec<CausticDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub light_path: Option<LightPath>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerDoc {
    pub id: String,
    #[serde(default)]
    pub c: f64,
    #[serde(default)]
    pub shape: Option<ShapeDoc>,
    #[serde(default = "default_matte")]
    pub matte: Source,
    #[serde(default)]
    pub textures: Vec<Source>,
    #[serde(default)]
    pub material: MaterialDoc,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z_deform: Option<Source>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShapeDoc {
    pub kind: ShapeKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub height: Option<Source>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub normals: Option<Source>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub thickness: Option<Source>,
    /// Multiplier applied to loaded height and thickness values.
    #[serde(default = "default_one", skip_serializing_if = "is_one")]
    pub scale: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialDoc {
    #[serde(default = "default_albedo")]
    pub albedo: Source,
    #[serde(default)]
    pub specular: f64,
    #[serde(default = "default_shininess")]
    pub shininess: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mirror: Option<MirrorDoc>,
    #[serde(default)]
    pub transmissive: bool,
    #[serde(default = "default_eta")]
    pub eta: f64,
}

impl Default for MaterialDoc {
    fn default() -> Self {
        MaterialDoc {
            albedo: default_albedo(),
            specular: 0.0,
            shininess: default_shininess(),
            mirror: None,
            transmissive: false,
            eta: default_eta(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MirrorDoc {
    pub plane_height: f64,
}

/// A light. Directional lights take either a propagation `direction` or an
/// `azimuth`/`elevation` pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LightDoc {
    Directional {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        direction: Option<Vec3>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        azimuth: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        elevation: Option<f64>,
        #[serde(default)]
        intensity: ColorValue,
        #[serde(default)]
        group: usize,
    },
    Point {
        position: Vec3,
        #[serde(default)]
        intensity: ColorValue,
        #[serde(default)]
        group: usize,
    },
    AreaRect {
        position: Vec3,
        extent: [f64; 2],
        #[serde(default = "default_samples")]
        samples: usize,
        #[serde(default)]
        intensity: ColorValue,
        #[serde(default)]
        group: usize,
    },
}

impl LightDoc {
    pub fn from_light(light: &Light) -> Self {
        let intensity = ColorValue::Rgba(light.intensity.0);
        let group = light.group;
        match light.kind {
            LightKind::Directional { direction } => LightDoc::Directional {
                direction: Some(direction),
                azimuth: None,
                elevation: None,
                intensity,
                group,
            },
            LightKind::Point { position } => LightDoc::Point {
                position,
                intensity,
                group,
            },
            LightKind::AreaRect {
                position,
                extent,
                samples,
            } => LightDoc::AreaRect {
                position,
                extent: [extent.0, extent.1],
                samples,
                intensity,
                group,
            },
        }
    }

    fn resolve(&self, path: &str, errors: &mut Vec<SceneError>) -> Option<Light> {
        let (kind, intensity, group) = match *self {
            LightDoc::Directional {
                direction,
                azimuth,
                elevation,
                intensity,
                group,
            } => {
                let direction = match (direction, azimuth, elevation) {
                    (Some(d), None, None) => d,
                    (None, Some(a), Some(e)) => {
                        let (se, ce) = e.sin_cos();
                        Vec3::new(ce * a.cos(), ce * a.sin(), -se)
                    }
                    _ => {
                        errors.push(SceneError::invariant(
                            "",
                            path,
                            "directional light needs either `direction` or both `azimuth` and `elevation`",
                        ));
                        return None;
                    }
                };
                (LightKind::Directional { direction }, intensity, group)
            }
            LightDoc::Point {
                position,
                intensity,
                group,
            } => (LightKind::Point { position }, intensity, group),
            LightDoc::AreaRect {
                position,
                extent,
                samples,
                intensity,
                group,
            } => (
                LightKind::AreaRect {
                    position,
                    extent: (extent[0], extent[1]),
                    samples,
                },
                intensity,
                group,
            ),
        };
        Some(Light {
            kind,
            intensity: intensity.to_rgba(),
            group,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct ShadingDoc {
    #[serde(default)]
    pub basis: WeightBasis,
    #[serde(default)]
    pub w_source: WSource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub specular_overlay: Option<OverlayDoc>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OverlayDoc {
    pub basis: WeightBasis,
    pub textures: Vec<Source>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CausticDoc {
    pub texture: Source,
    #[serde(default)]
    pub group: usize,
    #[serde(default = "default_one")]
    pub strength: f64,
}

/// A partial edit of a scene. Absent keys leave the scene unchanged.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenePatch {
    /// When present, the edit applies only if the scene is still at this revision.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub revision: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exposure: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bleed: Option<f64>,
    /// Replaces the whole light list.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lights: Option<Vec<LightDoc>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shading: Option<ShadingDoc>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub layers: Vec<LayerPatch>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerPatch {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub textures: Option<Vec<Source>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub albedo: Option<Source>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub specular: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Error)]
pub enum SceneError {
    #[error("malformed scene document: {0}")]
    Syntax(String),
    #[error("layer '{layer}': missing channel at {path}")]
    MissingChannel { layer: String, path: String },
    #[error("layer '{layer}': cannot load {file} at {path}: {reason}")]
    BadReference {
        layer: String,
        path: String,
        file: PathBuf,
        reason: String,
    },
    #[error("layer '{layer}': {path}: {message}")]
    InvariantViolation {
        layer: String,
        path: String,
        message: String,
    },
}

impl SceneError {
    fn invariant(layer: &str, path: impl Into<String>, message: impl Into<String>) -> Self {
        SceneError::InvariantViolation {
            layer: layer.to_string(),
            path: path.into(),
            message: message.into(),
        }
    }

    /// Field path of the error within the document.
    pub fn path(&self) -> &str {
        match self {
            SceneError::Syntax(_) => "",
            SceneError::MissingChannel { path, .. }
            | SceneError::BadReference { path, .. }
            | SceneError::InvariantViolation { path, .. } => path,
        }
    }
}

/// All problems found in a scene, in document order.
#[derive(Clone, Debug, PartialEq)]
pub struct SceneErrors(pub Vec<SceneError>);

impl fmt::Display for SceneErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, e) in self.0.iter().enumerate() {
            if k > 0 {
                writeln!(f)?;
            }
            write!(f, "{e}")?;
        }
        Ok(())
    }
}

impl std::error::Error for SceneErrors {}

impl From<SceneError> for SceneErrors {
    fn from(e: SceneError) -> Self {
        SceneErrors(vec![e])
    }
}

/// Resolves sources against a base directory at a fixed output resolution.
struct Resolver<'a> {
    base_dir: &'a Path,
    width: usize,
    height: usize,
    errors: Vec<SceneError>,
}

impl Resolver<'_> {
    fn fit<T: crate::field::Texel>(&self, field: Field2D<T>) -> Field2D<T> {
        if field.dims() == (self.width, self.height) {
            field
        } else {
            field.resample(self.width, self.height, Filter::Bilinear)
        }
    }

    fn load<T>(
        &mut self,
        layer: &str,
        path: &str,
        file: &str,
        loader: fn(&Path) -> Result<Field2D<T>, io::ImageIoError>,
    ) -> Option<Field2D<T>>
    where
        T: crate::field::Texel,
    {
        let full = self.base_dir.join(file);
        match loader(&full) {
            Ok(f) => Some(self.fit(f)),
            Err(e) => {
                self.errors.push(SceneError::BadReference {
                    layer: layer.to_string(),
                    path: path.to_string(),
                    file: full,
                    reason: e.to_string(),
                });
                None
            }
        }
    }

    fn grid<T: crate::field::Texel>(
        &mut self,
        layer: &str,
        path: &str,
        grid: &GridDoc,
        channels: usize,
        make: impl Fn(&[f64]) -> T,
    ) -> Option<Field2D<T>> {
        let n = grid.width * grid.height;
        if n == 0 || grid.data.len() != n * channels {
            self.errors.push(SceneError::invariant(
                layer,
                path,
                format!(
                    "inline grid {}x{} needs {} values, found {}",
                    grid.width,
                    grid.height,
                    n * channels,
                    grid.data.len()
                ),
            ));
            return None;
        }
        let values = grid.data.chunks_exact(channels).map(make).collect();
        let field = Field2D::from_vec(grid.width, grid.height, values).expect("length checked");
        Some(self.fit(field))
    }

    fn scalar(&mut self, layer: &str, path: &str, src: &Source) -> Option<Field2D<f64>> {
        match src {
            Source::Constant(v) => Some(Field2D::new(self.width, self.height, *v)),
            Source::Path(p) => self.load(layer, path, p, io::load_scalar),
            Source::Grid(g) => self.grid(layer, path, g, 1, |c| c[0]),
            Source::Vector(_) => {
                self.errors
                    .push(SceneError::invariant(layer, path, "expected a scalar channel, found a vector"));
                None
            }
        }
    }

    fn color(&mut self, layer: &str, path: &str, src: &Source) -> Option<Field2D<Rgba>> {
        match src {
            Source::Constant(v) => Some(Field2D::new(self.width, self.height, Rgba::gray(*v))),
            Source::Vector(c) if c.len() == 4 => {
                Some(Field2D::new(self.width, self.height, Rgba::new(c[0], c[1], c[2], c[3])))
            }
            Source::Vector(c) if c.len() == 3 => {
                Some(Field2D::new(self.width, self.height, Rgba::new(c[0], c[1], c[2], 1.0)))
            }
            Source::Vector(c) => {
                self.errors.push(SceneError::invariant(
                    layer,
                    path,
                    format!("a color needs 3 or 4 components, found {}", c.len()),
                ));
                None
            }
            Source::Path(p) => self.load(layer, path, p, io::load_color),
            Source::Grid(g) => self.grid(layer, path, g, 4, |c| Rgba::new(c[0], c[1], c[2], c[3])),
        }
    }

    fn normals(&mut self, layer: &str, path: &str, src: &Source) -> Option<Field2D<Vec3>> {
        match src {
            Source::Vector(c) if c.len() == 3 => Some(Field2D::new(self.width, self.height, Vec3::new(c[0], c[1], c[2]))),
            Source::Path(p) => self.load(layer, path, p, io::load_normals),
            Source::Grid(g) => self.grid(layer, path, g, 3, |c| Vec3::new(c[0], c[1], c[2])),
            _ => {
                self.errors
                    .push(SceneError::invariant(layer, path, "normals must be a path, a grid or a 3-vector"));
                None
            }
        }
    }

    fn shape(&mut self, layer: &str, base: &str, doc: &ShapeDoc, matte: Field2D<f64>) -> Option<ShapeChannel> {
        let scale = doc.scale;
        let required = |this: &mut Self, name: &str, src: &Option<Source>| -> Option<Source> {
            if src.is_none() {
                this.errors.push(SceneError::MissingChannel {
                    layer: layer.to_string(),
                    path: format!("{base}.{name}"),
                });
            }
            src.clone()
        };
        match doc.kind {
            ShapeKind::HeightField => {
                let src = required(self, "height", &doc.height)?;
                let h = self.scalar(layer, &format!("{base}.height"), &src)?;
                let h = if scale == 1.0 { h } else { h.map(|x| x * scale) };
                Some(ShapeChannel::height_field(h, matte))
            }
            ShapeKind::NormalField => {
                let src = required(self, "normals", &doc.normals)?;
                let n = self.normals(layer, &format!("{base}.normals"), &src)?;
                Some(ShapeChannel::normal_field(n, matte))
            }
            ShapeKind::ShapeMap => {
                let nsrc = required(self, "normals", &doc.normals);
                let tsrc = required(self, "thickness", &doc.thickness);
                let n = self.normals(layer, &format!("{base}.normals"), &nsrc?);
                let t = self.scalar(layer, &format!("{base}.thickness"), &tsrc?)?;
                let t = if scale == 1.0 { t } else { t.map(|x| x * scale) };
                Some(ShapeChannel::shape_map(n?, t, matte))
            }
        }
    }
}

/// Parses and resolves a scene document. Relative paths resolve against `base_dir`.
/// All problems are reported together.
pub fn parse_scene(text: &str, base_dir: &Path) -> Result<MockScene, SceneErrors> {
    let doc: SceneDoc = serde_json::from_str(text).map_err(|e| SceneError::Syntax(e.to_string()))?;
    resolve_doc(&doc, base_dir)
}

pub fn parse_scene_file(path: &Path) -> Result<MockScene, SceneErrors> {
    let text = std::fs::read_to_string(path).map_err(|e| SceneError::BadReference {
        layer: String::new(),
        path: String::new(),
        file: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    parse_scene(&text, path.parent().unwrap_or(Path::new(".")))
}

/// Resolves an already deserialized document.
pub fn resolve_doc(doc: &SceneDoc, base_dir: &Path) -> Result<MockScene, SceneErrors> {
    let [width, height] = doc.resolution;
    if width == 0 || height == 0 {
        return Err(SceneError::invariant("", "resolution", "resolution must be at least 1x1").into());
    }
    let mut r = Resolver {
        base_dir,
        width,
        height,
        errors: Vec::new(),
    };

    let mut layers = Vec::new();
    for (k, ld) in doc.layers.iter().enumerate() {
        let base = format!("layers[{k}]");
        let id = ld.id.as_str();
        let matte = r.scalar(id, &format!("{base}.matte"), &ld.matte);
        let shape = match (&ld.shape, matte) {
            (None, _) => {
                r.errors.push(SceneError::MissingChannel {
                    layer: id.to_string(),
                    path: format!("{base}.shape"),
                });
                None
            }
            (Some(sd), Some(m)) => r.shape(id, &format!("{base}.shape"), sd, m),
            (Some(_), None) => None,
        };
        let textures: Vec<Option<Field2D<Rgba>>> = ld
            .textures
            .iter()
            .enumerate()
            .map(|(t, s)| r.color(id, &format!("{base}.textures[{t}]"), s))
            .collect();
        let albedo = r.color(id, &format!("{base}.material.albedo"), &ld.material.albedo);
        let z_deform = ld
            .z_deform
            .as_ref()
            .map(|s| r.scalar(id, &format!("{base}.z_deform"), s));
        let (Some(shape), Some(albedo)) = (shape, albedo) else {
            continue;
        };
        if textures.iter().any(Option::is_none) || matches!(z_deform, Some(None)) {
            continue;
        }
        layers.push(Layer {
            id: ld.id.clone(),
            c: ld.c,
            z_deform: z_deform.flatten(),
            shape,
            control_textures: textures.into_iter().flatten().collect(),
            material: Material {
                diffuse_albedo: albedo,
                specular_strength: ld.material.specular,
                shininess: ld.material.shininess,
                mirror: ld.material.mirror.map(|m| m.plane_height),
                transmissive: ld.material.transmissive,
                eta: ld.material.eta,
            },
        });
    }

    let lights: Vec<Light> = doc
        .lights
        .iter()
        .enumerate()
        .filter_map(|(k, l)| l.resolve(&format!("lights[{k}]"), &mut r.errors))
        .collect();
    let background = doc.background.as_ref().and_then(|s| r.color("", "background", s));
    let shading = resolve_shading(&mut r, &doc.shading);
    let caustics: Vec<Caustic> = doc
        .caustics
        .iter()
        .enumerate()
        .filter_map(|(k, c)| {
            let texture = r.color("", &format!("caustics[{k}].texture"), &c.texture)?;
            Some(Caustic {
                texture,
                group: c.group,
                strength: c.strength,
            })
        })
        .collect();

    let errors = std::mem::take(&mut r.errors);
    if !errors.is_empty() {
        return Err(SceneErrors(errors));
    }
    let scene = MockScene {
        width,
        height,
        layers,
        lights,
        camera: doc.camera,
        background,
        shading: shading.expect("errors reported above"),
        exposure: doc.exposure,
        bleed: doc.bleed,
        caustics,
        light_path: doc.light_path.clone(),
    };
    scene.validate()?;
    Ok(scene)
}

fn resolve_shading(r: &mut Resolver<'_>, doc: &ShadingDoc) -> Option<ShadingConfig> {
    let overlay = match &doc.specular_overlay {
        None => None,
        Some(o) => {
            let textures: Vec<Option<Field2D<Rgba>>> = o
                .textures
                .iter()
                .enumerate()
                .map(|(t, s)| r.color("", &format!("shading.specular_overlay.textures[{t}]"), s))
                .collect();
            if textures.iter().any(Option::is_none) {
                return None;
            }
            Some(SpecularOverlay {
                basis: o.basis.clone(),
                textures: textures.into_iter().flatten().collect(),
            })
        }
    };
    Some(ShadingConfig {
        basis: doc.basis.clone(),
        w_source: doc.w_source,
        specular_overlay: overlay,
    })
}

/// Aggregated structural validation of a resolved scene.
pub(crate) fn validate_scene(scene: &MockScene) -> Result<(), SceneErrors> {
    let mut errs = Vec::new();
    let dims = (scene.width, scene.height);
    let inv = |errs: &mut Vec<SceneError>, layer: &str, path: String, msg: String| {
        errs.push(SceneError::invariant(layer, path, msg));
    };
    let check_dims = |errs: &mut Vec<SceneError>, layer: &str, path: String, d: (usize, usize)| {
        if d != dims {
            errs.push(SceneError::invariant(
                layer,
                path,
                format!("resolution {}x{} differs from scene {}x{}", d.0, d.1, dims.0, dims.1),
            ));
        }
    };

    if scene.layers.is_empty() {
        inv(&mut errs, "", "layers".into(), "a scene needs at least one layer".into());
    }
    if scene.lights.is_empty() {
        inv(&mut errs, "", "lights".into(), "a scene needs at least one light".into());
    }
    let n_weights = scene.shading.basis.n_weights();
    if let Err(e) = scene.shading.basis.validate() {
        inv(&mut errs, "", "shading.basis".into(), e.to_string());
    }

    let mut seen = HashSet::new();
    for (k, layer) in scene.layers.iter().enumerate() {
        let id = layer.id.as_str();
        let base = format!("layers[{k}]");
        if !seen.insert(id) {
            inv(&mut errs, id, format!("{base}.id"), format!("duplicate layer id '{id}'"));
        }
        if !layer.c.is_finite() {
            inv(&mut errs, id, format!("{base}.c"), "plane offset must be finite".into());
        }
        let shape = &layer.shape;
        let matte = shape.matte();
        check_dims(&mut errs, id, format!("{base}.matte"), matte.dims());
        if matte.values().iter().any(|m| !(0.0..=1.0).contains(m)) {
            inv(&mut errs, id, format!("{base}.matte"), "matte values must lie in [0, 1]".into());
        }
        if let Some(h) = shape.height() {
            check_dims(&mut errs, id, format!("{base}.shape.height"), h.dims());
            if h.values().iter().any(|x| !x.is_finite()) {
                inv(&mut errs, id, format!("{base}.shape.height"), "height must be finite".into());
            }
        }
        check_dims(&mut errs, id, format!("{base}.shape.normals"), shape.normals().dims());
        if shape.normals().dims() == matte.dims() {
            let bad = shape
                .normals()
                .values()
                .iter()
                .zip(matte.values())
                .any(|(n, &m)| m > 0.0 && !((n.norm() - 1.0).abs() <= NORMAL_TOLERANCE));
            if bad {
                inv(
                    &mut errs,
                    id,
                    format!("{base}.shape.normals"),
                    "normals must be unit length wherever matte > 0".into(),
                );
            }
        }
        if let Some(t) = shape.thickness() {
            check_dims(&mut errs, id, format!("{base}.shape.thickness"), t.dims());
            if t.values().iter().any(|x| !(*x >= 0.0)) {
                inv(&mut errs, id, format!("{base}.shape.thickness"), "thickness must be nonnegative".into());
            }
        }
        if let Some(z) = &layer.z_deform {
            check_dims(&mut errs, id, format!("{base}.z_deform"), z.dims());
        }
        let nt = layer.control_textures.len();
        if nt < 2 {
            inv(
                &mut errs,
                id,
                format!("{base}.textures"),
                format!("at least 2 control textures are required, found {nt}"),
            );
        } else if nt != n_weights {
            inv(
                &mut errs,
                id,
                format!("{base}.textures"),
                format!("the shading basis needs {n_weights} textures, found {nt}"),
            );
        }
        for (t, tex) in layer.control_textures.iter().enumerate() {
            check_dims(&mut errs, id, format!("{base}.textures[{t}]"), tex.dims());
        }
        let m = &layer.material;
        check_dims(&mut errs, id, format!("{base}.material.albedo"), m.diffuse_albedo.dims());
        if !(m.specular_strength >= 0.0) {
            inv(&mut errs, id, format!("{base}.material.specular"), "specular strength must be >= 0".into());
        }
        if !(m.shininess >= 1.0) {
            inv(&mut errs, id, format!("{base}.material.shininess"), "shininess must be >= 1".into());
        }
        if !(m.eta > 0.0 && m.eta.is_finite()) {
            inv(&mut errs, id, format!("{base}.material.eta"), "eta must be positive".into());
        }
        if m.mirror.is_some_and(|h| !h.is_finite()) {
            inv(&mut errs, id, format!("{base}.material.mirror"), "plane height must be finite".into());
        }
    }

    for (k, light) in scene.lights.iter().enumerate() {
        let base = format!("lights[{k}]");
        if light.intensity.0.iter().any(|c| !(*c >= 0.0 && c.is_finite())) {
            inv(&mut errs, "", format!("{base}.intensity"), "intensity must be finite and >= 0".into());
        }
        match light.kind {
            LightKind::Directional { direction } => {
                if !((direction.norm() - 1.0).abs() <= NORMAL_TOLERANCE) {
                    inv(&mut errs, "", format!("{base}.direction"), "direction must be a unit vector".into());
                } else if !(direction.z < 0.0) {
                    inv(
                        &mut errs,
                        "",
                        format!("{base}.direction"),
                        "directional light must shine downward (elevation > 0)".into(),
                    );
                }
            }
            LightKind::Point { position } => {
                if !position.iter().all(|x| x.is_finite()) {
                    inv(&mut errs, "", format!("{base}.position"), "position must be finite".into());
                }
            }
            LightKind::AreaRect {
                position,
                extent,
                samples,
            } => {
                if samples < 1 {
                    inv(&mut errs, "", format!("{base}.samples"), "area lights need at least one sample".into());
                }
                if !(extent.0 >= 0.0 && extent.1 >= 0.0) {
                    inv(&mut errs, "", format!("{base}.extent"), "extent must be nonnegative".into());
                }
                if !position.iter().all(|x| x.is_finite()) {
                    inv(&mut errs, "", format!("{base}.position"), "position must be finite".into());
                }
            }
        }
    }

    if let Err(e) = scene.camera.validate() {
        inv(&mut errs, "", "camera".into(), e.to_string());
    }
    if let Some(bg) = &scene.background {
        check_dims(&mut errs, "", "background".into(), bg.dims());
    }
    if scene.exposure.is_some_and(|e| !(e > 0.0 && e.is_finite())) {
        inv(&mut errs, "", "exposure".into(), "exposure must be positive".into());
    }
    if !(scene.bleed >= 0.0 && scene.bleed.is_finite()) {
        inv(&mut errs, "", "bleed".into(), "bleed must be >= 0".into());
    }
    let groups = scene.group_count();
    for (k, c) in scene.caustics.iter().enumerate() {
        check_dims(&mut errs, "", format!("caustics[{k}].texture"), c.texture.dims());
        if c.group >= groups {
            inv(
                &mut errs,
                "",
                format!("caustics[{k}].group"),
                format!("no light belongs to group {}", c.group),
            );
        }
    }
    if let WSource::PerGroup { group, .. } = scene.shading.w_source {
        if group >= groups {
            inv(&mut errs, "", "shading.w_source.group".into(), format!("no light belongs to group {group}"));
        }
    }
    if let Some(o) = &scene.shading.specular_overlay {
        if let Err(e) = o.basis.validate() {
            inv(&mut errs, "", "shading.specular_overlay.basis".into(), e.to_string());
        } else if o.textures.len() != o.basis.n_weights() {
            inv(
                &mut errs,
                "",
                "shading.specular_overlay.textures".into(),
                format!("the overlay basis needs {} textures, found {}", o.basis.n_weights(), o.textures.len()),
            );
        }
        for (t, tex) in o.textures.iter().enumerate() {
            check_dims(&mut errs, "", format!("shading.specular_overlay.textures[{t}]"), tex.dims());
        }
    }
    if let Some(path) = &scene.light_path {
        if let Err(e) = path.validate(scene.lights.len()) {
            inv(&mut errs, "", "light_path".into(), e.to_string());
        }
    }

    if errs.is_empty() {
        Ok(())
    } else {
        Err(SceneErrors(errs))
    }
}

fn uniform<T: Copy + PartialEq>(f: &Field2D<T>) -> Option<T> {
    let first = f.values()[0];
    f.values().iter().all(|v| *v == first).then_some(first)
}

fn scalar_source(f: &Field2D<f64>) -> Source {
    match uniform(f) {
        Some(v) => Source::Constant(v),
        None => Source::Grid(GridDoc {
            width: f.width(),
            height: f.height(),
            data: f.values().to_vec(),
        }),
    }
}

fn color_source(f: &Field2D<Rgba>) -> Source {
    match uniform(f) {
        Some(c) => Source::Vector(c.0.to_vec()),
        None => Source::Grid(GridDoc {
            width: f.width(),
            height: f.height(),
            data: f.values().iter().flat_map(|c| c.0).collect(),
        }),
    }
}

fn normals_source(f: &Field2D<Vec3>) -> Source {
    match uniform(f) {
        Some(n) => Source::Vector(vec![n.x, n.y, n.z]),
        None => Source::Grid(GridDoc {
            width: f.width(),
            height: f.height(),
            data: f.values().iter().flat_map(|n| [n.x, n.y, n.z]).collect(),
        }),
    }
}

/// The normalized, self-contained document of a scene.
pub fn scene_to_doc(scene: &MockScene) -> SceneDoc {
    let layers = scene
        .layers
        .iter()
        .map(|l| {
            let s = &l.shape;
            let shape = ShapeDoc {
                kind: s.kind(),
                height: s.height().map(scalar_source),
                normals: (s.kind() != ShapeKind::HeightField).then(|| normals_source(s.normals())),
                thickness: s.thickness().map(scalar_source),
                scale: 1.0,
            };
            LayerDoc {
                id: l.id.clone(),
                c: l.c,
                shape: Some(shape),
                matte: scalar_source(s.matte()),
                textures: l.control_textures.iter().map(color_source).collect(),
                material: MaterialDoc {
                    albedo: color_source(&l.material.diffuse_albedo),
                    specular: l.material.specular_strength,
                    shininess: l.material.shininess,
                    mirror: l.material.mirror.map(|h| MirrorDoc { plane_height: h }),
                    transmissive: l.material.transmissive,
                    eta: l.material.eta,
                },
                z_deform: l.z_deform.as_ref().map(scalar_source),
            }
        })
        .collect();
    SceneDoc {
        resolution: [scene.width, scene.height],
        exposure: scene.exposure,
        bleed: scene.bleed,
        layers,
        lights: scene.lights.iter().map(LightDoc::from_light).collect(),
        camera: scene.camera,
        background: scene.background.as_ref().map(color_source),
        shading: ShadingDoc {
            basis: scene.shading.basis.clone(),
            w_source: scene.shading.w_source,
            specular_overlay: scene.shading.specular_overlay.as_ref().map(|o| OverlayDoc {
                basis: o.basis.clone(),
                textures: o.textures.iter().map(color_source).collect(),
            }),
        },
        caustics: scene
            .caustics
            .iter()
            .map(|c| CausticDoc {
                texture: color_source(&c.texture),
                group: c.group,
                strength: c.strength,
            })
            .collect(),
        light_path: scene.light_path.clone(),
    }
}

/// Serializes a scene as a normalized JSON document with every default spelled out.
pub fn serialize_scene(scene: &MockScene) -> String {
    serde_json::to_string_pretty(&scene_to_doc(scene)).expect("scene documents always serialize")
}

/// Applies a partial edit, returning the edited scene only if it is valid.
/// The revision precondition is checked by the caller.
pub fn apply_patch(scene: &MockScene, patch: &ScenePatch, base_dir: &Path) -> Result<MockScene, SceneErrors> {
    let mut next = scene.clone();
    let mut r = Resolver {
        base_dir,
        width: scene.width,
        height: scene.height,
        errors: Vec::new(),
    };
    if let Some(e) = patch.exposure {
        next.exposure = Some(e);
    }
    if let Some(b) = patch.bleed {
        next.bleed = b;
    }
    if let Some(lights) = &patch.lights {
        next.lights = lights
            .iter()
            .enumerate()
            .filter_map(|(k, l)| l.resolve(&format!("lights[{k}]"), &mut r.errors))
            .collect();
    }
    if let Some(sd) = &patch.shading {
        if let Some(cfg) = resolve_shading(&mut r, sd) {
            next.shading = cfg;
        }
    }
    for (k, lp) in patch.layers.iter().enumerate() {
        let base = format!("layers[{k}]");
        let Some(layer) = next.layers.iter_mut().find(|l| l.id == lp.id) else {
            r.errors.push(SceneError::invariant(&lp.id, format!("{base}.id"), "no layer with this id"));
            continue;
        };
        if let Some(ts) = &lp.textures {
            let textures: Vec<_> = ts
                .iter()
                .enumerate()
                .map(|(t, s)| r.color(&lp.id, &format!("{base}.textures[{t}]"), s))
                .collect();
            if textures.iter().all(Option::is_some) {
                layer.control_textures = textures.into_iter().flatten().collect();
            }
        }
        if let Some(a) = &lp.albedo {
            if let Some(f) = r.color(&lp.id, &format!("{base}.albedo"), a) {
                layer.material.diffuse_albedo = f;
            }
        }
        if let Some(s) = lp.specular {
            layer.material.specular_strength = s;
        }
        if let Some(c) = lp.c {
            layer.c = c;
        }
    }
    if !r.errors.is_empty() {
        return Err(SceneErrors(r.errors));
    }
    next.validate()?;
    Ok(next)
}
