//! PNG and PFM image I/O.
//!
//! Color PNGs are sRGB-decoded into linear light on load and encoded on save
//! (clamped to [0,1] only here). Scalar and normal-map PNGs are read as raw
//! linear values; normals decode as `n = 2c - 1`. PFM carries unclamped floats,
//! little-endian (negative scale), rows stored bottom-to-top.

use std::fs;
use std::io::Cursor;
use std::path::Path;

use thiserror::Error;

use crate::color::{linear_to_srgb, srgb_to_linear, Rgba};
use crate::field::{Field2D, FieldError, Vec3};

#[derive(Debug, Error)]
pub enum ImageIoError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("PNG decode failed: {0}")]
    PngDecode(#[from] png::DecodingError),
    #[error("PNG encode failed: {0}")]
    PngEncode(#[from] png::EncodingError),
    #[error("malformed PFM: {0}")]
    Pfm(String),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error("unsupported image file extension: {0}")]
    UnsupportedExtension(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum PngDepth {
    #[default]
    Eight,
    Sixteen,
}

/// Raw decoded pixels, channel values normalized to [0,1], no transfer curve applied.
struct RawImage {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f64>,
}

impl RawImage {
    fn pixel(&self, idx: usize) -> &[f64] {
        &self.data[idx * self.channels..(idx + 1) * self.channels]
    }
}

fn decode_png(bytes: &[u8]) -> Result<RawImage, ImageIoError> {
    let mut decoder = png::Decoder::new(Cursor::new(bytes));
    decoder.set_transformations(png::Transformations::EXPAND);
    let mut reader = decoder.read_info()?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| ImageIoError::Pfm("PNG too large".into()))?;
    let mut buf = vec![0u8; size];
    let info = reader.next_frame(&mut buf)?;
    let channels = info.color_type.samples();
    let (width, height) = (info.width as usize, info.height as usize);
    let n = width * height * channels;
    let data = match info.bit_depth {
        png::BitDepth::Sixteen => buf
            .chunks_exact(2)
            .take(n)
            .map(|b| u16::from_be_bytes([b[0], b[1]]) as f64 / 65535.0)
            .collect(),
        _ => buf.iter().take(n).map(|&b| b as f64 / 255.0).collect(),
    };
    Ok(RawImage {
        width,
        height,
        channels,
        data,
    })
}

fn read_bytes(path: &Path) -> Result<Vec<u8>, ImageIoError> {
    fs::read(path).map_err(|source| ImageIoError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<(), ImageIoError> {
    fs::write(path, bytes).map_err(|source| ImageIoError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn is_pfm(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("pfm"))
}

/// Loads a color image into linear light. PNG RGB is sRGB-decoded; PFM is taken as-is.
pub fn load_color(path: &Path) -> Result<Field2D<Rgba>, ImageIoError> {
    let bytes = read_bytes(path)?;
    if is_pfm(path) {
        return Ok(decode_pfm(&bytes)?.into_color());
    }
    let raw = decode_png(&bytes)?;
    let values = (0..raw.width * raw.height)
        .map(|k| {
            let p = raw.pixel(k);
            match raw.channels {
                1 => Rgba::gray(srgb_to_linear(p[0])),
                2 => Rgba::gray(srgb_to_linear(p[0])).with_alpha(p[1]),
                3 => Rgba::new(srgb_to_linear(p[0]), srgb_to_linear(p[1]), srgb_to_linear(p[2]), 1.0),
                _ => Rgba::new(
                    srgb_to_linear(p[0]),
                    srgb_to_linear(p[1]),
                    srgb_to_linear(p[2]),
                    p[3],
                ),
            }
        })
        .collect();
    Ok(Field2D::from_vec(raw.width, raw.height, values)?)
}

/// Loads a scalar channel (first channel, no transfer curve).
pub fn load_scalar(path: &Path) -> Result<Field2D<f64>, ImageIoError> {
    let bytes = read_bytes(path)?;
    if is_pfm(path) {
        return Ok(decode_pfm(&bytes)?.into_scalar());
    }
    let raw = decode_png(&bytes)?;
    let values = (0..raw.width * raw.height).map(|k| raw.pixel(k)[0]).collect();
    Ok(Field2D::from_vec(raw.width, raw.height, values)?)
}

/// Loads a normal map. PNG components decode as `2c - 1`; PFM stores normals directly.
/// Results are renormalized; zero-length entries become `+z`.
pub fn load_normals(path: &Path) -> Result<Field2D<Vec3>, ImageIoError> {
    let bytes = read_bytes(path)?;
    let raw_normals: Field2D<Vec3> = if is_pfm(path) {
        let img = decode_pfm(&bytes)?;
        Field2D::from_vec(
            img.width,
            img.height,
            (0..img.width * img.height)
                .map(|k| {
                    let p = &img.data[k * img.channels..(k + 1) * img.channels];
                    if img.channels == 3 {
                        Vec3::new(p[0], p[1], p[2])
                    } else {
                        Vec3::new(0.0, 0.0, 1.0)
                    }
                })
                .collect(),
        )?
    } else {
        let raw = decode_png(&bytes)?;
        if raw.channels < 3 {
            return Err(ImageIoError::Pfm("normal map PNG needs RGB channels".into()));
        }
        Field2D::from_vec(
            raw.width,
            raw.height,
            (0..raw.width * raw.height)
                .map(|k| {
                    let p = raw.pixel(k);
                    Vec3::new(2.0 * p[0] - 1.0, 2.0 * p[1] - 1.0, 2.0 * p[2] - 1.0)
                })
                .collect(),
        )?
    };
    Ok(raw_normals.map(|n| {
        let len = n.norm();
        if len > 0.0 {
            n / len
        } else {
            Vec3::new(0.0, 0.0, 1.0)
        }
    }))
}

fn encode_png(
    width: usize,
    height: usize,
    color: png::ColorType,
    depth: PngDepth,
    samples: impl Iterator<Item = f64>,
) -> Result<Vec<u8>, ImageIoError> {
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, width as u32, height as u32);
        enc.set_color(color);
        // Lossless either way; live frames favor encode time over size.
        enc.set_compression(png::Compression::Fast);
        let data: Vec<u8> = match depth {
            PngDepth::Eight => {
                enc.set_depth(png::BitDepth::Eight);
                samples.map(|s| (s.clamp(0.0, 1.0) * 255.0).round() as u8).collect()
            }
            PngDepth::Sixteen => {
                enc.set_depth(png::BitDepth::Sixteen);
                samples
                    .flat_map(|s| ((s.clamp(0.0, 1.0) * 65535.0).round() as u16).to_be_bytes())
                    .collect()
            }
        };
        let mut writer = enc.write_header()?;
        writer.write_image_data(&data)?;
        writer.finish()?;
    }
    Ok(out)
}

/// Encodes a linear color field as sRGB PNG (RGBA).
pub fn encode_color_png(field: &Field2D<Rgba>, depth: PngDepth) -> Result<Vec<u8>, ImageIoError> {
    let samples = field.values().iter().flat_map(|p| {
        [
            linear_to_srgb(p[0]),
            linear_to_srgb(p[1]),
            linear_to_srgb(p[2]),
            p[3],
        ]
    });
    encode_png(field.width(), field.height(), png::ColorType::Rgba, depth, samples)
}

/// Encodes a scalar field as linear grayscale PNG.
pub fn encode_scalar_png(field: &Field2D<f64>, depth: PngDepth) -> Result<Vec<u8>, ImageIoError> {
    encode_png(
        field.width(),
        field.height(),
        png::ColorType::Grayscale,
        depth,
        field.values().iter().copied(),
    )
}

/// Encodes a normal field as RGB PNG with `c = (n + 1) / 2`.
pub fn encode_normals_png(field: &Field2D<Vec3>, depth: PngDepth) -> Result<Vec<u8>, ImageIoError> {
    let samples = field
        .values()
        .iter()
        .flat_map(|n| [(n.x + 1.0) * 0.5, (n.y + 1.0) * 0.5, (n.z + 1.0) * 0.5]);
    encode_png(field.width(), field.height(), png::ColorType::Rgb, depth, samples)
}

pub fn save_color_png(field: &Field2D<Rgba>, path: &Path, depth: PngDepth) -> Result<(), ImageIoError> {
    write_bytes(path, &encode_color_png(field, depth)?)
}

pub fn save_scalar_png(field: &Field2D<f64>, path: &Path, depth: PngDepth) -> Result<(), ImageIoError> {
    write_bytes(path, &encode_scalar_png(field, depth)?)
}

pub fn save_normals_png(field: &Field2D<Vec3>, path: &Path, depth: PngDepth) -> Result<(), ImageIoError> {
    write_bytes(path, &encode_normals_png(field, depth)?)
}

/// A decoded Portable FloatMap.
#[derive(Clone, Debug, PartialEq)]
pub struct PfmImage {
    pub width: usize,
    pub height: usize,
    /// 1 (`Pf`) or 3 (`PF`).
    pub channels: usize,
    /// Top row first.
    pub data: Vec<f64>,
}

impl PfmImage {
    pub fn into_scalar(self) -> Field2D<f64> {
        let c = self.channels;
        let values = self.data.chunks_exact(c).map(|p| p[0]).collect();
        Field2D::from_vec(self.width, self.height, values).expect("PFM dimensions checked on decode")
    }

    pub fn into_color(self) -> Field2D<Rgba> {
        let c = self.channels;
        let values = self
            .data
            .chunks_exact(c)
            .map(|p| if c == 3 { Rgba::new(p[0], p[1], p[2], 1.0) } else { Rgba::gray(p[0]) })
            .collect();
        Field2D::from_vec(self.width, self.height, values).expect("PFM dimensions checked on decode")
    }
}

fn encode_pfm(width: usize, height: usize, channels: usize, pixel: impl Fn(usize, usize, &mut Vec<u8>)) -> Vec<u8> {
    let tag = if channels == 3 { "PF" } else { "Pf" };
    let mut out = format!("{tag}\n{width} {height}\n-1.0\n").into_bytes();
    out.reserve(width * height * channels * 4);
    for j in (0..height).rev() {
        for i in 0..width {
            pixel(i, j, &mut out);
        }
    }
    out
}

/// Three-channel PFM of the RGB components (alpha dropped).
pub fn encode_pfm_rgb(field: &Field2D<Rgba>) -> Vec<u8> {
    encode_pfm(field.width(), field.height(), 3, |i, j, out| {
        let p = field.get(i, j);
        for c in 0..3 {
            out.extend_from_slice(&(p[c] as f32).to_le_bytes());
        }
    })
}

/// Single-channel PFM.
pub fn encode_pfm_gray(field: &Field2D<f64>) -> Vec<u8> {
    encode_pfm(field.width(), field.height(), 1, |i, j, out| {
        out.extend_from_slice(&(field.get(i, j) as f32).to_le_bytes());
    })
}

pub fn decode_pfm(bytes: &[u8]) -> Result<PfmImage, ImageIoError> {
    let bad = |m: &str| ImageIoError::Pfm(m.to_string());
    // Header: three whitespace-separated tokens lines, then a single whitespace byte.
    let mut tokens = Vec::new();
    let mut pos = 0;
    while tokens.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(bad("truncated header"));
        }
        tokens.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| bad("non-ASCII header"))?);
    }
    pos += 1;
    let channels = match tokens[0] {
        "PF" => 3,
        "Pf" => 1,
        other => return Err(bad(&format!("unknown tag {other:?}"))),
    };
    let width: usize = tokens[1].parse().map_err(|_| bad("bad width"))?;
    let height: usize = tokens[2].parse().map_err(|_| bad("bad height"))?;
    let scale: f64 = tokens[3].parse().map_err(|_| bad("bad scale"))?;
    if width == 0 || height == 0 {
        return Err(bad("empty image"));
    }
    let little = scale < 0.0;
    let n = width * height * channels;
    let body = bytes.get(pos..pos + n * 4).ok_or_else(|| bad("truncated body"))?;
    let floats: Vec<f64> = body
        .chunks_exact(4)
        .map(|b| {
            let b = [b[0], b[1], b[2], b[3]];
            (if little { f32::from_le_bytes(b) } else { f32::from_be_bytes(b) }) as f64
        })
        .collect();
    let mut data = vec![0.0; n];
    let row = width * channels;
    for j in 0..height {
        let src = (height - 1 - j) * row;
        data[j * row..(j + 1) * row].copy_from_slice(&floats[src..src + row]);
    }
    Ok(PfmImage {
        width,
        height,
        channels,
        data,
    })
}

pub fn save_pfm(bytes: &[u8], path: &Path) -> Result<(), ImageIoError> {
    write_bytes(path, bytes)
}
