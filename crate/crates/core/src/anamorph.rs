//! Anamorphic projection: paint a picture onto arbitrary receiver geometry so
//! that it reads correctly from one vantage point.
//!
//! Baking stores, for every receiver texel, the source color along the
//! vantage ray through that texel. Viewing ray-casts the receiver and looks the
//! texture up again; from the vantage the two steps cancel, from elsewhere the
//! geometry shows through.

use rayon::prelude::*;
use thiserror::Error;

use crate::camera::{Camera, Ray};
use crate::color::Rgba;
use crate::field::{Field2D, Filter, Vec3};

/// Axis-aligned rectangle in scene units.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rect {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl Rect {
    pub const UNIT: Rect = Rect {
        x0: 0.0,
        y0: 0.0,
        x1: 1.0,
        y1: 1.0,
    };

    fn width(&self) -> f64 {
        self.x1 - self.x0
    }
    fn height(&self) -> f64 {
        self.y1 - self.y0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Receiver {
    /// The plane `normal · p = offset`.
    Plane { normal: Vec3, offset: f64 },
    /// `z = height(x, y)` over `placement`, zero-free outside.
    HeightField { height: Field2D<f64>, placement: Rect },
}

#[derive(Debug, Error, PartialEq)]
pub enum AnamorphError {
    #[error("receiver plane normal must be nonzero and finite")]
    BadNormal,
    #[error("receiver height field must be finite")]
    NonFiniteHeight,
    #[error("placement rectangle must have positive area")]
    BadPlacement,
    #[error("the vantage camera does not see the receiver")]
    NotVisible,
    #[error("invalid vantage camera: {0}")]
    Camera(#[from] crate::camera::CameraError),
}

/// Orthonormal frame of a plane receiver.
#[derive(Clone, Copy, Debug)]
struct PlaneFrame {
    normal: Vec3,
    offset: f64,
    origin: Vec3,
    t1: Vec3,
    t2: Vec3,
}

impl PlaneFrame {
    fn new(normal: Vec3, offset: f64) -> Result<Self, AnamorphError> {
        let len = normal.norm();
        if !(len > 1e-12 && len.is_finite()) {
            return Err(AnamorphError::BadNormal);
        }
        let n = normal / len;
        let offset = offset / len;
        let axis = if n.x.abs() < 0.9 {
            Vec3::new(1.0, 0.0, 0.0)
        } else {
            Vec3::new(0.0, 1.0, 0.0)
        };
        let t1 = (axis - n * axis.dot(&n)).normalize();
        let t2 = n.cross(&t1);
        Ok(PlaneFrame {
            normal: n,
            offset,
            origin: n * offset,
            t1,
            t2,
        })
    }
}

/// Receiver geometry prepared for ray casting.
#[derive(Clone, Debug)]
enum Geometry {
    Plane(PlaneFrame),
    Height {
        height: Field2D<f64>,
        placement: Rect,
        zmin: f64,
        zmax: f64,
    },
}

impl Geometry {
    fn new(receiver: &Receiver) -> Result<Self, AnamorphError> {
        match receiver {
            Receiver::Plane { normal, offset } => Ok(Geometry::Plane(PlaneFrame::new(*normal, *offset)?)),
            Receiver::HeightField { height, placement } => {
                if !(placement.width() > 0.0 && placement.height() > 0.0) {
                    return Err(AnamorphError::BadPlacement);
                }
                if height.values().iter().any(|h| !h.is_finite()) {
                    return Err(AnamorphError::NonFiniteHeight);
                }
                let (zmin, zmax) = height.min_max();
                Ok(Geometry::Height {
                    height: height.clone(),
                    placement: *placement,
                    zmin,
                    zmax,
                })
            }
        }
    }

    /// Parametric surface coordinates of a surface point.
    fn surface_coords(&self, p: Vec3) -> (f64, f64) {
        match self {
            Geometry::Plane(f) => ((p - f.origin).dot(&f.t1), (p - f.origin).dot(&f.t2)),
            Geometry::Height { .. } => (p.x, p.y),
        }
    }

    /// Surface point with the given surface coordinates.
    fn point_at(&self, a: f64, b: f64) -> Vec3 {
        match self {
            Geometry::Plane(f) => f.origin + f.t1 * a + f.t2 * b,
            Geometry::Height { .. } => Vec3::new(a, b, self.height_at(a, b)),
        }
    }

    fn height_at(&self, x: f64, y: f64) -> f64 {
        match self {
            Geometry::Plane(_) => unreachable!("planes have no height function"),
            Geometry::Height { height, placement, .. } => height.sample_bilinear(
                (x - placement.x0) / placement.width(),
                (y - placement.y0) / placement.height(),
            ),
        }
    }

    /// First intersection parameter of `ray` with the receiver.
    fn intersect(&self, ray: &Ray) -> Option<f64> {
        match self {
            Geometry::Plane(f) => {
                let denom = f.normal.dot(&ray.dir);
                if denom.abs() < 1e-12 {
                    return None;
                }
                let t = (f.offset - f.normal.dot(&ray.origin)) / denom;
                (t > 0.0).then_some(t)
            }
            Geometry::Height {
                height,
                placement,
                zmin,
                zmax,
            } => {
                let (t0, t1) = slab(ray, placement, *zmin, *zmax)?;
                let texel = (placement.width() / height.width() as f64).min(placement.height() / height.height() as f64);
                let horiz = (ray.dir.x * ray.dir.x + ray.dir.y * ray.dir.y).sqrt();
                let vert = ray.dir.z.abs();
                // Half a texel horizontally, or a fraction of the slab vertically.
                let step_h = if horiz > 1e-12 { 0.5 * texel / horiz } else { f64::INFINITY };
                let step_v = if vert > 1e-12 { ((zmax - zmin).max(1e-9) / 64.0) / vert } else { f64::INFINITY };
                let step = step_h.min(step_v).min((t1 - t0).max(1e-12));
                let f = |t: f64| {
                    let p = ray.at(t);
                    p.z - self.height_at(p.x, p.y)
                };
                let mut ta = t0;
                if f(ta) <= 0.0 {
                    return (ta > 0.0).then_some(ta);
                }
                loop {
                    let tb = (ta + step).min(t1);
                    let fb = f(tb);
                    if fb <= 0.0 {
                        let (mut lo, mut hi) = (ta, tb);
                        for _ in 0..60 {
                            let mid = 0.5 * (lo + hi);
                            if f(mid) > 0.0 {
                                lo = mid;
                            } else {
                                hi = mid;
                            }
                        }
                        return Some(hi);
                    }
                    if tb >= t1 {
                        return None;
                    }
                    ta = tb;
                }
            }
        }
    }
}

/// Parameter interval of `ray` inside the box `rect × [zmin, zmax]`, clipped to `t ≥ 0`.
fn slab(ray: &Ray, rect: &Rect, zmin: f64, zmax: f64) -> Option<(f64, f64)> {
    let mut lo: f64 = 0.0;
    let mut hi = f64::INFINITY;
    let bounds = [(rect.x0, rect.x1), (rect.y0, rect.y1), (zmin, zmax)];
    for (axis, (a, b)) in bounds.iter().enumerate() {
        let o = ray.origin[axis];
        let d = ray.dir[axis];
        if d.abs() < 1e-15 {
            if o < *a || o > *b {
                return None;
            }
        } else {
            let (t0, t1) = ((a - o) / d, (b - o) / d);
            lo = lo.max(t0.min(t1));
            hi = hi.min(t0.max(t1));
        }
    }
    (lo <= hi).then_some((lo, hi))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BakeOptions {
    /// Filter for source lookups while baking and texture lookups while viewing.
    pub filter: Filter,
    /// Texture resolution as a multiple of the source resolution.
    pub supersample: usize,
}

impl Default for BakeOptions {
    fn default() -> Self {
        BakeOptions {
            filter: Filter::Bilinear,
            supersample: 2,
        }
    }
}

#[derive(Clone, Debug)]
pub struct BakedAnamorph {
    pub receiver: Receiver,
    /// Premultiplied texture; texels not visible from the vantage are transparent.
    pub texture: Field2D<Rgba>,
    /// Region of surface coordinates covered by the texture.
    pub uv_rect: Rect,
    pub vantage: Camera,
    /// Texels hidden from the vantage by another part of the receiver.
    pub occluded: Field2D<bool>,
    pub options: BakeOptions,
    geometry: Geometry,
}

impl BakedAnamorph {
    /// Texture coordinates of a receiver point.
    pub fn uv_map(&self, p: Vec3) -> (f64, f64) {
        let (a, b) = self.geometry.surface_coords(p);
        let r = &self.uv_rect;
        ((a - r.x0) / r.width(), (b - r.y0) / r.height())
    }

    pub fn occluded_count(&self) -> usize {
        self.occluded.values().iter().filter(|&&o| o).count()
    }
}

/// Bounding box, in surface coordinates, of the receiver region seen by `vantage`.
fn footprint(geometry: &Geometry, vantage: &Camera, aspect: f64, clip: Option<Rect>) -> Option<Rect> {
    const GRID: usize = 33;
    let mut r = Rect {
        x0: f64::INFINITY,
        y0: f64::INFINITY,
        x1: f64::NEG_INFINITY,
        y1: f64::NEG_INFINITY,
    };
    for gj in 0..GRID {
        for gi in 0..GRID {
            let (u, v) = (gi as f64 / (GRID - 1) as f64, gj as f64 / (GRID - 1) as f64);
            let ray = vantage.ray(u, v, aspect);
            if let Some(t) = geometry.intersect(&ray) {
                let (a, b) = geometry.surface_coords(ray.at(t));
                r.x0 = r.x0.min(a);
                r.x1 = r.x1.max(a);
                r.y0 = r.y0.min(b);
                r.y1 = r.y1.max(b);
            }
        }
    }
    if !(r.x1 > r.x0 && r.y1 > r.y0) {
        return None;
    }
    Some(match clip {
        Some(c) => Rect {
            x0: r.x0.max(c.x0),
            y0: r.y0.max(c.y0),
            x1: r.x1.min(c.x1),
            y1: r.y1.min(c.y1),
        },
        None => r,
    })
}

pub fn bake(source: &Field2D<Rgba>, vantage: &Camera, receiver: &Receiver) -> Result<BakedAnamorph, AnamorphError> {
    bake_with(source, vantage, receiver, BakeOptions::default())
}

pub fn bake_with(
    source: &Field2D<Rgba>,
    vantage: &Camera,
    receiver: &Receiver,
    options: BakeOptions,
) -> Result<BakedAnamorph, AnamorphError> {
    vantage.validate()?;
    let geometry = Geometry::new(receiver)?;
    let aspect = source.width() as f64 / source.height() as f64;
    let (tw, th) = (source.width() * options.supersample.max(1), source.height() * options.supersample.max(1));
    let clip = match receiver {
        Receiver::HeightField { placement, .. } => Some(*placement),
        Receiver::Plane { .. } => None,
    };
    let mut rect = footprint(&geometry, vantage, aspect, clip).ok_or(AnamorphError::NotVisible)?;
    if !matches!(vantage, Camera::OrthoFrontal) {
        // Two texels of margin so bilinear lookups at the border stay inside.
        let (px, py) = (2.0 * rect.width() / tw as f64, 2.0 * rect.height() / th as f64);
        rect = Rect {
            x0: rect.x0 - px,
            y0: rect.y0 - py,
            x1: rect.x1 + px,
            y1: rect.y1 + py,
        };
    }

    let texel = |i: usize, j: usize| {
        let a = rect.x0 + (i as f64 + 0.5) / tw as f64 * rect.width();
        let b = rect.y0 + (j as f64 + 0.5) / th as f64 * rect.height();
        geometry.point_at(a, b)
    };
    let mut values = vec![(Rgba::ZERO, false); tw * th];
    values.par_chunks_mut(tw).enumerate().for_each(|(j, row)| {
        for (i, out) in row.iter_mut().enumerate() {
            let p = texel(i, j);
            let Some((u, v, dist)) = vantage.project(p, aspect) else {
                continue;
            };
            if !(0.0..=1.0).contains(&u) || !(0.0..=1.0).contains(&v) {
                continue;
            }
            let ray = vantage.ray(u, v, aspect);
            let hit = geometry.intersect(&ray);
            if hit.is_some_and(|t| t < dist - 1e-6 * (1.0 + dist)) {
                *out = (Rgba::ZERO, true);
                continue;
            }
            let c = match options.filter {
                Filter::Nearest => source.sample_nearest(u, v),
                Filter::Bilinear => source.sample_bilinear(u, v),
            };
            *out = (c, false);
        }
    });
    Ok(BakedAnamorph {
        receiver: receiver.clone(),
        texture: Field2D::from_vec(tw, th, values.iter().map(|v| v.0).collect()).expect("sized"),
        occluded: Field2D::from_vec(tw, th, values.iter().map(|v| v.1).collect()).expect("sized"),
        uv_rect: rect,
        vantage: *vantage,
        options,
        geometry,
    })
}

/// Ray-casts the baked receiver from `viewer`; misses are transparent.
pub fn render_view(baked: &BakedAnamorph, viewer: &Camera, width: usize, height: usize) -> Field2D<Rgba> {
    let aspect = width as f64 / height as f64;
    Field2D::from_uv_fn(width, height, |u, v| {
        let ray = viewer.ray(u, v, aspect);
        let Some(t) = baked.geometry.intersect(&ray) else {
            return Rgba::ZERO;
        };
        let (tu, tv) = baked.uv_map(ray.at(t));
        if !(0.0..=1.0).contains(&tu) || !(0.0..=1.0).contains(&tv) {
            return Rgba::ZERO;
        }
        match baked.options.filter {
            Filter::Nearest => baked.texture.sample_nearest(tu, tv),
            Filter::Bilinear => baked.texture.sample_bilinear(tu, tv),
        }
    })
}

/// Peak signal-to-noise ratio in dB over linear RGB (peak 1), restricted to
/// pixels where `reference` has nonzero alpha. Infinite for identical images.
pub fn psnr(reference: &Field2D<Rgba>, test: &Field2D<Rgba>) -> f64 {
    let mut sum = 0.0;
    let mut count = 0usize;
    for (a, b) in reference.values().iter().zip(test.values()) {
        if a.a() <= 0.0 {
            continue;
        }
        for c in 0..3 {
            sum += (a.0[c] - b.0[c]).powi(2);
        }
        count += 3;
    }
    if count == 0 || sum == 0.0 {
        return f64::INFINITY;
    }
    10.0 * (1.0 / (sum / count as f64)).log10()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn checker(n: usize) -> Field2D<Rgba> {
        Field2D::from_uv_fn(n, n, |u, v| {
            let s = (8.0 * std::f64::consts::PI * u).sin() * (8.0 * std::f64::consts::PI * v).sin();
            Rgba::gray(0.5 + 0.4 * (6.0 * s).tanh())
        })
    }

    #[test]
    fn frontal_plane_identity_is_exact() {
        let src = checker(64);
        let receiver = Receiver::Plane {
            normal: Vec3::new(0.0, 0.0, 1.0),
            offset: 0.0,
        };
        let opts = BakeOptions {
            filter: Filter::Nearest,
            supersample: 1,
        };
        let baked = bake_with(&src, &Camera::OrthoFrontal, &receiver, opts).unwrap();
        assert_eq!(baked.texture, src);
        assert_eq!(baked.occluded_count(), 0);
    }

    #[test]
    fn looking_away_is_transparent() {
        let src = checker(32);
        let vantage = Camera::vantage(Vec3::new(0.5, -0.8, 1.6), Vec3::new(0.5, 0.5, 0.0), 0.9);
        let receiver = Receiver::Plane {
            normal: Vec3::new(0.0, 0.0, 1.0),
            offset: 0.0,
        };
        let baked = bake(&src, &vantage, &receiver).unwrap();
        let away = Camera::vantage(Vec3::new(0.5, 0.5, 1.0), Vec3::new(0.5, 0.5, 3.0), 0.5);
        let img = render_view(&baked, &away, 32, 32);
        assert!(img.values().iter().all(|c| *c == Rgba::ZERO));
    }

    #[test]
    fn height_field_self_occlusion_is_flagged() {
        let src = checker(32);
        let vantage = Camera::vantage(Vec3::new(0.5, -1.5, 0.4), Vec3::new(0.5, 0.5, 0.0), 0.9);
        // A tall ridge across the middle hides the ground behind it.
        let height = Field2D::from_uv_fn(64, 64, |_, v| if (0.45..0.55).contains(&v) { 0.5 } else { 0.0 });
        let receiver = Receiver::HeightField {
            height,
            placement: Rect::UNIT,
        };
        let baked = bake(&src, &vantage, &receiver).unwrap();
        assert!(baked.occluded_count() > 0);
    }
}
