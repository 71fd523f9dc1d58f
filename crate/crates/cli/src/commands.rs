//! The batch subcommands. Each returns a [`CliError`] whose exit code tells
//! scene problems (1) apart from file-system problems (2).

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use mockshade::anamorph::{bake_with, render_view, BakeOptions, BakedAnamorph, Receiver, Rect};
use mockshade::camera::Camera;
use mockshade::compositor::{composite, render_impacts, CompositeRecipe};
use mockshade::illumination::IlluminationImage;
use mockshade::io::{encode_color_png, encode_pfm_gray, load_color, load_scalar, PngDepth};
use mockshade::render::{render, Rendered};
use mockshade::scene::{
    curl_residual, flag_nonconservative, integrate_normals, parse_scene, LightPath, MockScene, DEFAULT_EPS_Z,
};
use mockshade::{Field2D, Rgba, Vec3};
use serde::{Deserialize, Serialize};

#[derive(Debug)]
pub enum CliError {
    /// The input was read but is not a valid scene or spec.
    Invalid(String),
    /// Reading or writing a file failed.
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Invalid(_) => 1,
            CliError::Io(_) => 2,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Invalid(m) | CliError::Io(m) => f.write_str(m),
        }
    }
}

impl std::error::Error for CliError {}

fn io_err(path: &Path, e: impl fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

fn invalid(e: impl fmt::Display) -> CliError {
    CliError::Invalid(e.to_string())
}

fn read_text(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| io_err(path, e))
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    std::fs::write(path, bytes).map_err(|e| io_err(path, e))
}

fn base_dir(path: &Path) -> PathBuf {
    path.parent().map(Path::to_path_buf).unwrap_or_default()
}

pub fn load_scene(path: &Path) -> Result<MockScene, CliError> {
    let text = read_text(path)?;
    parse_scene(&text, &base_dir(path)).map_err(invalid)
}

/// Converts a premultiplied image to straight alpha for export.
pub fn unpremultiply(image: &Field2D<Rgba>) -> Field2D<Rgba> {
    image.map(|p| {
        let a = p.a();
        if a > 0.0 && a < 1.0 {
            Rgba::new(p.r() / a, p.g() / a, p.b() / a, a)
        } else {
            p
        }
    })
}

pub fn encode_final_png(image: &Field2D<Rgba>) -> Vec<u8> {
    encode_color_png(&unpremultiply(image), PngDepth::Eight).expect("in-memory PNG encoding")
}

/// Summary written next to the illumination image.
#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct WSidecar {
    pub t: f64,
    pub width: usize,
    pub height: usize,
    pub exposure: f64,
    pub groups: usize,
    pub w_min: f64,
    pub w_max: f64,
    pub w_mean: f64,
}

impl WSidecar {
    pub fn new(w: &IlluminationImage) -> Self {
        let (width, height) = w.dims();
        let (w_min, w_max) = w.combined_w.min_max();
        WSidecar {
            t: w.t,
            width,
            height,
            exposure: w.exposure,
            groups: w.groups(),
            w_min,
            w_max,
            w_mean: w.combined_w.mean(),
        }
    }
}

/// Files written by one render.
#[derive(Debug)]
pub struct RenderFiles {
    pub w_pfm: PathBuf,
    pub final_png: Option<PathBuf>,
    pub sidecar: PathBuf,
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

pub fn write_render(rendered: &Rendered, prefix: &Path, w_only: bool) -> Result<RenderFiles, CliError> {
    let w = &rendered.illumination;
    let files = RenderFiles {
        w_pfm: with_suffix(prefix, "_w.pfm"),
        final_png: (!w_only).then(|| with_suffix(prefix, "_final.png")),
        sidecar: with_suffix(prefix, "_w.json"),
    };
    write_bytes(&files.w_pfm, &encode_pfm_gray(&w.combined_w))?;
    let sidecar = serde_json::to_string_pretty(&WSidecar::new(w)).expect("sidecar serializes");
    write_bytes(&files.sidecar, sidecar.as_bytes())?;
    if let Some(p) = &files.final_png {
        write_bytes(p, &encode_final_png(&rendered.image))?;
    }
    Ok(files)
}

pub fn cmd_render(scene: &Path, t: f64, out: &Path, w_only: bool) -> Result<RenderFiles, CliError> {
    let scene = load_scene(scene)?;
    let rendered = render(&scene, t).map_err(invalid)?;
    write_render(&rendered, out, w_only)
}

/// Renders `frames` frames at `t = i / fps`, each under the prefix `{out}_{i:04}`.
pub fn cmd_animate(
    scene: &Path,
    light_path: Option<&Path>,
    frames: usize,
    fps: f64,
    out: &Path,
    w_only: bool,
) -> Result<Vec<RenderFiles>, CliError> {
    if frames == 0 {
        return Err(invalid("--frames must be at least 1"));
    }
    if !(fps > 0.0 && fps.is_finite()) {
        return Err(invalid(format!("--fps must be positive, got {fps}")));
    }
    let mut scene = load_scene(scene)?;
    if let Some(p) = light_path {
        let path: LightPath = serde_json::from_str(&read_text(p)?).map_err(invalid)?;
        path.validate(scene.lights.len()).map_err(invalid)?;
        scene.light_path = Some(path);
    }
    (0..frames)
        .map(|i| {
            let rendered = render(&scene, i as f64 / fps).map_err(invalid)?;
            write_render(&rendered, &with_suffix(out, &format!("_{i:04}")), w_only)
        })
        .collect()
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct LayerAnalysis {
    /// Largest curl residual over unmasked pixels.
    pub max_curl: f64,
    /// RMS residual of the least-squares height; absent when the solver failed.
    pub residual_norm: Option<f64>,
    pub masked_fraction: f64,
    /// Fraction of pixels whose curl exceeds ten times the median.
    pub flagged_fraction: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

pub fn analyze_scene(scene: &MockScene) -> BTreeMap<String, LayerAnalysis> {
    scene
        .layers
        .iter()
        .map(|layer| {
            let normals = layer.shape.normals();
            let report = curl_residual(normals, DEFAULT_EPS_Z);
            let flags = flag_nonconservative(&report, 10.0);
            let flagged = flags.values().iter().filter(|&&f| f).count() as f64 / flags.values().len() as f64;
            let (residual_norm, error) = match integrate_normals(normals, DEFAULT_EPS_Z) {
                Ok(r) => (Some(r.residual_norm), None),
                Err(e) => (None, Some(e.to_string())),
            };
            let analysis = LayerAnalysis {
                max_curl: report.max_interior(),
                residual_norm,
                masked_fraction: report.masked_fraction(),
                flagged_fraction: flagged,
                error,
            };
            (layer.id.clone(), analysis)
        })
        .collect()
}

pub fn cmd_analyze(scene: &Path) -> Result<String, CliError> {
    let scene = load_scene(scene)?;
    let report = analyze_scene(&scene);
    Ok(serde_json::to_string_pretty(&report).expect("report serializes"))
}

/// Composites the impact of `virtual_ids` over `background`, or over a render
/// of the proxy layers when no background image is given.
pub fn cmd_composite(
    scene_path: &Path,
    virtual_ids: &[String],
    background: Option<&Path>,
    t: f64,
    shadow_strength: f64,
    shadow_tint: [f64; 3],
    out: &Path,
) -> Result<(), CliError> {
    let scene = load_scene(scene_path)?;
    let ids: Vec<&str> = virtual_ids.iter().map(String::as_str).collect();
    let impacts = render_impacts(&scene, &ids, t).map_err(invalid)?;
    let background = match background {
        Some(p) => load_color(p).map_err(|e| io_err(p, e))?,
        None => {
            let mut proxies = scene.clone();
            proxies.layers.retain(|l| !ids.contains(&l.id.as_str()));
            if proxies.layers.is_empty() {
                return Err(invalid("the scene has no proxy layers to render as background"));
            }
            render(&proxies, t).map_err(invalid)?.image
        }
    };
    let recipe = CompositeRecipe {
        background,
        impacts: vec![impacts],
        shadow_strength,
        shadow_tint,
    };
    let image = composite(&recipe).map_err(invalid)?;
    write_bytes(out, &encode_final_png(&image))
}

/// Receiver geometry in a bake spec.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ReceiverSpec {
    Plane {
        normal: Vec3,
        offset: f64,
    },
    HeightField {
        /// Grayscale image, relative to the spec file.
        height: PathBuf,
        #[serde(default = "default_scale")]
        scale: f64,
        /// `[x0, y0, x1, y1]`.
        placement: [f64; 4],
    },
}

fn default_scale() -> f64 {
    1.0
}

fn default_supersample() -> usize {
    2
}

/// Everything `bake` and `view` need: the picture, where it is seen from and
/// what it is painted on.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct BakeSpec {
    pub source: PathBuf,
    pub vantage: Camera,
    pub receiver: ReceiverSpec,
    #[serde(default = "default_supersample")]
    pub supersample: usize,
}

pub fn load_bake(spec_path: &Path) -> Result<(BakedAnamorph, (usize, usize)), CliError> {
    let spec: BakeSpec = serde_json::from_str(&read_text(spec_path)?).map_err(invalid)?;
    let dir = base_dir(spec_path);
    let source_path = dir.join(&spec.source);
    let source = load_color(&source_path).map_err(|e| io_err(&source_path, e))?;
    let receiver = match &spec.receiver {
        ReceiverSpec::Plane { normal, offset } => Receiver::Plane {
            normal: *normal,
            offset: *offset,
        },
        ReceiverSpec::HeightField {
            height,
            scale,
            placement,
        } => {
            let p = dir.join(height);
            let h = load_scalar(&p).map_err(|e| io_err(&p, e))?;
            let [x0, y0, x1, y1] = *placement;
            Receiver::HeightField {
                height: h.map(|x| x * scale),
                placement: Rect { x0, y0, x1, y1 },
            }
        }
    };
    let options = BakeOptions {
        supersample: spec.supersample.max(1),
        ..BakeOptions::default()
    };
    let baked = bake_with(&source, &spec.vantage, &receiver, options).map_err(invalid)?;
    Ok((baked, source.dims()))
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct BakeReport {
    pub texture_width: usize,
    pub texture_height: usize,
    pub uv_rect: [f64; 4],
    pub occluded_texels: usize,
}

/// Bakes and writes `{out}_texture.png` and `{out}_bake.json`.
pub fn cmd_bake(spec: &Path, out: &Path) -> Result<BakeReport, CliError> {
    let (baked, _) = load_bake(spec)?;
    let r = baked.uv_rect;
    let report = BakeReport {
        texture_width: baked.texture.width(),
        texture_height: baked.texture.height(),
        uv_rect: [r.x0, r.y0, r.x1, r.y1],
        occluded_texels: baked.occluded_count(),
    };
    write_bytes(&with_suffix(out, "_texture.png"), &encode_final_png(&baked.texture))?;
    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    write_bytes(&with_suffix(out, "_bake.json"), json.as_bytes())?;
    Ok(report)
}

/// Views a bake from `viewer` (default: the vantage) at the source resolution
/// unless `size` is given.
pub fn cmd_view(spec: &Path, viewer: Option<&Path>, size: Option<(usize, usize)>, out: &Path) -> Result<(), CliError> {
    let (baked, dims) = load_bake(spec)?;
    let camera = match viewer {
        Some(p) => serde_json::from_str::<Camera>(&read_text(p)?).map_err(invalid)?,
        None => baked.vantage,
    };
    let (w, h) = size.unwrap_or(dims);
    let image = render_view(&baked, &camera, w, h);
    write_bytes(out, &encode_final_png(&image))
}
