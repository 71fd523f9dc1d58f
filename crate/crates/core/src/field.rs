//! Discrete fields over the unit square.
//!
//! A [`Field2D`] stores `width × height` values row-major. Pixel `(i, j)`
//! (column `i`, row `j`) is centered at `((i + 0.5) / width, (j + 0.5) / height)`
//! in `(u, v)`, so a 1×1 field behaves as a constant under every filter.
//! Out-of-range coordinates are resolved by the field's [`WrapMode`].

use std::ops::{Add, Mul};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::color::Rgba;

pub type Vec2 = nalgebra::Vector2<f64>;
pub type Vec3 = nalgebra::Vector3<f64>;

/// Values that can be filtered: closed under addition and real scaling.
pub trait Texel: Copy + Send + Sync + Add<Output = Self> + Mul<f64, Output = Self> {
    fn zero() -> Self;
}

impl Texel for f64 {
    fn zero() -> Self {
        0.0
    }
}

impl Texel for Vec2 {
    fn zero() -> Self {
        Vec2::zeros()
    }
}

impl Texel for Vec3 {
    fn zero() -> Self {
        Vec3::zeros()
    }
}

impl Texel for Rgba {
    fn zero() -> Self {
        Rgba::ZERO
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WrapMode {
    #[default]
    Clamp,
    Repeat,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Filter {
    Nearest,
    #[default]
    Bilinear,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SampleSpec {
    pub filter: Filter,
    pub u: f64,
    pub v: f64,
}

impl SampleSpec {
    pub fn nearest(u: f64, v: f64) -> Self {
        SampleSpec { filter: Filter::Nearest, u, v }
    }

    pub fn bilinear(u: f64, v: f64) -> Self {
        SampleSpec { filter: Filter::Bilinear, u, v }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FieldError {
    #[error("field dimensions must be at least 1x1, got {width}x{height}")]
    EmptyDimensions { width: usize, height: usize },
    #[error("expected {expected} values for the field, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("field resolution {actual:?} does not match expected {expected:?}")]
    ResolutionMismatch {
        expected: (usize, usize),
        actual: (usize, usize),
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Field2D<T> {
    width: usize,
    height: usize,
    values: Vec<T>,
    wrap: WrapMode,
}

impl<T: Copy> Field2D<T> {
    /// A field filled with `fill`.
    ///
    /// # Panics
    /// If either dimension is zero.
    pub fn new(width: usize, height: usize, fill: T) -> Self {
        assert!(width >= 1 && height >= 1, "empty field {width}x{height}");
        Field2D {
            width,
            height,
            values: vec![fill; width * height],
            wrap: WrapMode::Clamp,
        }
    }

    pub fn from_vec(width: usize, height: usize, values: Vec<T>) -> Result<Self, FieldError> {
        if width == 0 || height == 0 {
            return Err(FieldError::EmptyDimensions { width, height });
        }
        if values.len() != width * height {
            return Err(FieldError::LengthMismatch {
                expected: width * height,
                actual: values.len(),
            });
        }
        Ok(Field2D {
            width,
            height,
            values,
            wrap: WrapMode::Clamp,
        })
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn wrap_mode(&self) -> WrapMode {
        self.wrap
    }

    pub fn with_wrap(mut self, wrap: WrapMode) -> Self {
        self.wrap = wrap;
        self
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.values[j * self.width + i]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, value: T) {
        self.values[j * self.width + i] = value;
    }

    pub fn row(&self, j: usize) -> &[T] {
        &self.values[j * self.width..(j + 1) * self.width]
    }

    /// `(u, v)` of the center of pixel `(i, j)`.
    #[inline]
    pub fn pixel_center(&self, i: usize, j: usize) -> (f64, f64) {
        (
            (i as f64 + 0.5) / self.width as f64,
            (j as f64 + 0.5) / self.height as f64,
        )
    }

    /// Value at an integer pixel index, out-of-range indices resolved by the wrap mode.
    #[inline]
    pub fn get_wrapped(&self, i: isize, j: isize) -> T {
        let i = resolve_index(i, self.width, self.wrap);
        let j = resolve_index(j, self.height, self.wrap);
        self.values[j * self.width + i]
    }

    pub fn map<U: Copy + Send>(&self, f: impl Fn(T) -> U + Sync) -> Field2D<U>
    where
        T: Sync,
    {
        Field2D {
            width: self.width,
            height: self.height,
            values: self.values.par_iter().map(|&v| f(v)).collect(),
            wrap: self.wrap,
        }
    }

    /// Combines two fields of equal resolution pixel by pixel.
    pub fn zip_map<U: Copy + Sync, R: Copy + Send>(
        &self,
        other: &Field2D<U>,
        f: impl Fn(T, U) -> R + Sync,
    ) -> Result<Field2D<R>, FieldError>
    where
        T: Sync,
    {
        if self.dims() != other.dims() {
            return Err(FieldError::ResolutionMismatch {
                expected: self.dims(),
                actual: other.dims(),
            });
        }
        Ok(Field2D {
            width: self.width,
            height: self.height,
            values: self
                .values
                .par_iter()
                .zip(other.values.par_iter())
                .map(|(&a, &b)| f(a, b))
                .collect(),
            wrap: self.wrap,
        })
    }
}

impl<T: Copy + Send> Field2D<T> {
    /// Builds a field from a per-pixel function of `(i, j)`, rows in parallel.
    ///
    /// # Panics
    /// If either dimension is zero.
    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> T + Sync) -> Self {
        assert!(width >= 1 && height >= 1, "empty field {width}x{height}");
        let values: Vec<T> = (0..width * height)
            .into_par_iter()
            .map(|k| f(k % width, k / width))
            .collect();
        Field2D {
            width,
            height,
            values,
            wrap: WrapMode::Clamp,
        }
    }

    /// Builds a field by evaluating `f(u, v)` at pixel centers.
    pub fn from_uv_fn(width: usize, height: usize, f: impl Fn(f64, f64) -> T + Sync) -> Self {
        let (w, h) = (width as f64, height as f64);
        Self::from_fn(width, height, |i, j| {
            f((i as f64 + 0.5) / w, (j as f64 + 0.5) / h)
        })
    }
}

#[inline]
fn resolve_index(i: isize, n: usize, wrap: WrapMode) -> usize {
    match wrap {
        WrapMode::Clamp => i.clamp(0, n as isize - 1) as usize,
        WrapMode::Repeat => i.rem_euclid(n as isize) as usize,
    }
}

impl<T: Texel> Field2D<T> {
    pub fn sample(&self, spec: SampleSpec) -> T {
        match spec.filter {
            Filter::Nearest => self.sample_nearest(spec.u, spec.v),
            Filter::Bilinear => self.sample_bilinear(spec.u, spec.v),
        }
    }

    #[inline]
    pub fn sample_nearest(&self, u: f64, v: f64) -> T {
        let i = (u * self.width as f64).floor() as isize;
        let j = (v * self.height as f64).floor() as isize;
        self.get_wrapped(i, j)
    }

    /// Convex combination of the four pixels surrounding `(u, v)`.
    #[inline]
    pub fn sample_bilinear(&self, u: f64, v: f64) -> T {
        let x = u * self.width as f64 - 0.5;
        let y = v * self.height as f64 - 0.5;
        let x0 = x.floor();
        let y0 = y.floor();
        let fx = x - x0;
        let fy = y - y0;
        let (x0, y0) = (x0 as isize, y0 as isize);
        let a = self.get_wrapped(x0, y0);
        let b = self.get_wrapped(x0 + 1, y0);
        let c = self.get_wrapped(x0, y0 + 1);
        let d = self.get_wrapped(x0 + 1, y0 + 1);
        let top = a * (1.0 - fx) + b * fx;
        let bottom = c * (1.0 - fx) + d * fx;
        top * (1.0 - fy) + bottom * fy
    }

    pub fn resample(&self, width: usize, height: usize, filter: Filter) -> Field2D<T> {
        if (width, height) == self.dims() {
            return self.clone();
        }
        let mut out = Field2D::from_uv_fn(width, height, |u, v| {
            self.sample(SampleSpec { filter, u, v })
        });
        out.wrap = self.wrap;
        out
    }

    /// Separable Gaussian blur. The kernel is truncated at ±3σ (in pixels) and
    /// renormalized to unit sum; `sigma == 0` returns an identical copy.
    pub fn gaussian_blur(&self, sigma: f64) -> Field2D<T> {
        if sigma <= 0.0 {
            return self.clone();
        }
        let kernel = gaussian_kernel(sigma);
        let radius = (kernel.len() / 2) as isize;
        let (w, h) = self.dims();

        let horizontal = {
            let mut f = Field2D::from_fn(w, h, |i, j| {
                let mut acc = T::zero();
                for (k, &wt) in kernel.iter().enumerate() {
                    acc = acc + self.get_wrapped(i as isize + k as isize - radius, j as isize) * wt;
                }
                acc
            });
            f.wrap = self.wrap;
            f
        };
        let mut out = Field2D::from_fn(w, h, |i, j| {
            let mut acc = T::zero();
            for (k, &wt) in kernel.iter().enumerate() {
                acc = acc + horizontal.get_wrapped(i as isize, j as isize + k as isize - radius) * wt;
            }
            acc
        });
        out.wrap = self.wrap;
        out
    }
}

/// Normalized 1D Gaussian weights over `[-r, r]`, `r = ceil(3σ)`.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as isize;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|x| (-(x * x) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = k.iter().sum();
    k.iter_mut().for_each(|w| *w /= sum);
    k
}

/// Slope field of a height channel, in height units per unit-square length.
/// Central differences in the interior, one-sided at the borders. An axis with
/// a single pixel has zero slope along it.
pub fn finite_diff_gradient(height: &Field2D<f64>) -> Field2D<Vec2> {
    let (w, h) = height.dims();
    let du = 1.0 / w as f64;
    let dv = 1.0 / h as f64;
    let mut out = Field2D::from_fn(w, h, |i, j| {
        let gx = if w < 2 {
            0.0
        } else if i == 0 {
            (height.get(1, j) - height.get(0, j)) / du
        } else if i == w - 1 {
            (height.get(w - 1, j) - height.get(w - 2, j)) / du
        } else {
            (height.get(i + 1, j) - height.get(i - 1, j)) / (2.0 * du)
        };
        let gy = if h < 2 {
            0.0
        } else if j == 0 {
            (height.get(i, 1) - height.get(i, 0)) / dv
        } else if j == h - 1 {
            (height.get(i, h - 1) - height.get(i, h - 2)) / dv
        } else {
            (height.get(i, j + 1) - height.get(i, j - 1)) / (2.0 * dv)
        };
        Vec2::new(gx, gy)
    });
    out.wrap = height.wrap;
    out
}

/// Unit normals `normalize(-∂h/∂u, -∂h/∂v, 1)` of a slope field.
pub fn gradient_to_normals(gradient: &Field2D<Vec2>) -> Field2D<Vec3> {
    gradient.map(|g| Vec3::new(-g.x, -g.y, 1.0).normalize())
}

/// Normals of a height field.
pub fn height_to_normals(height: &Field2D<f64>) -> Field2D<Vec3> {
    gradient_to_normals(&finite_diff_gradient(height))
}

impl Field2D<f64> {
    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }
}
