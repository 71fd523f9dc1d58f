//! Stage two: barycentric shading.
//!
//! The final color of a pixel is `Σ_i B_i(w) · T_i`, a convex combination of
//! control textures `T_i` with weights from a basis evaluated at the pixel's
//! illumination value `w ∈ [0,1]`. Every basis here is nonnegative and sums to
//! one, so outputs never leave the per-pixel convex hull of the textures.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::color::Rgba;
use crate::field::{Field2D, FieldError};
use crate::illumination::IlluminationImage;

/// Upper bound on weights per basis; keeps per-pixel evaluation allocation-free.
pub const MAX_WEIGHTS: usize = 32;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum WeightBasis {
    /// `(1 - w, w)`.
    #[default]
    Linear,
    /// Bernstein polynomials of the given degree.
    Bezier { degree: usize },
    /// Piecewise-constant indicators of knot intervals, right-open, last closed.
    Bspline0 { knots: Vec<f64> },
}

#[derive(Debug, Error, PartialEq)]
pub enum ShadeError {
    #[error("invalid basis: {0}")]
    InvalidBasis(String),
    #[error("basis needs {expected} textures, got {actual}")]
    TextureCountMismatch { expected: usize, actual: usize },
    #[error(transparent)]
    ResolutionMismatch(#[from] FieldError),
    #[error("the degree-0 B-spline basis is not Lipschitz continuous")]
    NonLipschitzBasis,
    #[error("illumination image has no light group {0}")]
    UnknownGroup(usize),
}

impl WeightBasis {
    pub fn n_weights(&self) -> usize {
        match self {
            WeightBasis::Linear => 2,
            WeightBasis::Bezier { degree } => degree + 1,
            WeightBasis::Bspline0 { knots } => knots.len().saturating_sub(1),
        }
    }

    pub fn validate(&self) -> Result<(), ShadeError> {
        match self {
            WeightBasis::Linear => Ok(()),
            WeightBasis::Bezier { degree } => {
                if *degree < 1 || degree + 1 > MAX_WEIGHTS {
                    Err(ShadeError::InvalidBasis(format!(
                        "bezier degree must be in 1..={}, got {degree}",
                        MAX_WEIGHTS - 1
                    )))
                } else {
                    Ok(())
                }
            }
            WeightBasis::Bspline0 { knots } => {
                if knots.len() < 2 || knots.len() - 1 > MAX_WEIGHTS {
                    return Err(ShadeError::InvalidBasis(format!(
                        "bspline0 needs 2..={} knots, got {}",
                        MAX_WEIGHTS + 1,
                        knots.len()
                    )));
                }
                if knots[0] != 0.0 || knots[knots.len() - 1] != 1.0 {
                    return Err(ShadeError::InvalidBasis("bspline0 knots must start at 0 and end at 1".into()));
                }
                if knots.windows(2).any(|k| !(k[0] <= k[1])) {
                    return Err(ShadeError::InvalidBasis("bspline0 knots must be sorted".into()));
                }
                Ok(())
            }
        }
    }

    /// Lipschitz constant of each weight function (`None` when discontinuous).
    pub fn lipschitz(&self) -> Option<f64> {
        match self {
            WeightBasis::Linear => Some(1.0),
            WeightBasis::Bezier { degree } => Some(*degree as f64),
            WeightBasis::Bspline0 { .. } => None,
        }
    }

    /// Writes the weights at `w` (clamped to [0,1]) into `out[..n_weights]`.
    pub fn eval_into(&self, w: f64, out: &mut [f64]) {
        let w = if w.is_nan() { 0.0 } else { w.clamp(0.0, 1.0) };
        match self {
            WeightBasis::Linear => {
                out[0] = 1.0 - w;
                out[1] = w;
            }
            WeightBasis::Bezier { degree } => {
                let d = *degree;
                let s = 1.0 - w;
                // out[i] = C(d, i) w^i s^(d-i), built from running powers.
                let mut binom = 1.0;
                let mut wp = 1.0;
                for (i, o) in out.iter_mut().enumerate().take(d + 1) {
                    *o = binom * wp * s.powi((d - i) as i32);
                    binom = binom * (d - i) as f64 / (i + 1) as f64;
                    wp *= w;
                }
            }
            WeightBasis::Bspline0 { knots } => {
                let n = knots.len() - 1;
                out[..n].iter_mut().for_each(|o| *o = 0.0);
                // Last interval with knots[i] <= w, skipping zero-length intervals;
                // w == 1 falls into the final (closed) interval.
                let upper = knots.partition_point(|&k| k <= w);
                let mut idx = upper.saturating_sub(1).min(n - 1);
                while idx > 0 && knots[idx] == knots[idx + 1] {
                    idx -= 1;
                }
                out[idx] = 1.0;
            }
        }
    }

    pub fn eval(&self, w: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.n_weights()];
        self.eval_into(w, &mut out);
        out
    }
}

/// Where the scalar shading parameter `w` comes from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum WSource {
    #[default]
    Combined,
    PerGroup { group: usize, plane: Plane },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Plane {
    Diffuse,
    Specular,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpecularOverlay {
    pub basis: WeightBasis,
    pub textures: Vec<Field2D<Rgba>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ShadingSpec {
    pub basis: WeightBasis,
    pub textures: Vec<Field2D<Rgba>>,
    pub w_source: WSource,
    pub specular_overlay: Option<SpecularOverlay>,
}

impl ShadingSpec {
    pub fn new(basis: WeightBasis, textures: Vec<Field2D<Rgba>>) -> Self {
        ShadingSpec {
            basis,
            textures,
            w_source: WSource::Combined,
            specular_overlay: None,
        }
    }

    pub fn validate(&self) -> Result<(), ShadeError> {
        check_textures(&self.basis, &self.textures)?;
        if let Some(o) = &self.specular_overlay {
            check_textures(&o.basis, &o.textures)?;
        }
        Ok(())
    }
}

fn check_textures(basis: &WeightBasis, textures: &[Field2D<Rgba>]) -> Result<(), ShadeError> {
    basis.validate()?;
    if textures.len() != basis.n_weights() {
        return Err(ShadeError::TextureCountMismatch {
            expected: basis.n_weights(),
            actual: textures.len(),
        });
    }
    for t in &textures[1..] {
        if t.dims() != textures[0].dims() {
            return Err(FieldError::ResolutionMismatch {
                expected: textures[0].dims(),
                actual: t.dims(),
            }
            .into());
        }
    }
    Ok(())
}

/// Barycentric combination at one pixel.
#[inline]
pub fn shade_pixel(basis: &WeightBasis, textures: &[Field2D<Rgba>], w: f64, i: usize, j: usize) -> Rgba {
    let mut weights = [0.0; MAX_WEIGHTS];
    let n = basis.n_weights();
    basis.eval_into(w, &mut weights[..n]);
    let mut acc = Rgba::ZERO;
    for (k, t) in textures.iter().enumerate().take(n) {
        if weights[k] != 0.0 {
            acc += t.get(i, j) * weights[k];
        }
    }
    acc
}

/// Styles a scalar `w` field with a basis and its textures.
pub fn shade_w(w: &Field2D<f64>, basis: &WeightBasis, textures: &[Field2D<Rgba>]) -> Result<Field2D<Rgba>, ShadeError> {
    check_textures(basis, textures)?;
    if textures[0].dims() != w.dims() {
        return Err(FieldError::ResolutionMismatch {
            expected: w.dims(),
            actual: textures[0].dims(),
        }
        .into());
    }
    Ok(Field2D::from_fn(w.width(), w.height(), |i, j| {
        shade_pixel(basis, textures, w.get(i, j), i, j)
    }))
}

/// Normalized luminance of an illumination plane: `clamp(exposure · Y, 0, 1)`.
pub fn plane_to_w(plane: &Field2D<Rgba>, exposure: f64) -> Field2D<f64> {
    plane.map(|p| (exposure * p.luminance()).clamp(0.0, 1.0))
}

/// The `w` field selected by a shading spec.
pub fn select_w(image: &IlluminationImage, source: WSource) -> Result<Field2D<f64>, ShadeError> {
    match source {
        WSource::Combined => Ok(image.combined_w.clone()),
        WSource::PerGroup { group, plane } => {
            let planes = match plane {
                Plane::Diffuse => &image.diffuse,
                Plane::Specular => &image.specular,
            };
            let p = planes.get(group).ok_or(ShadeError::UnknownGroup(group))?;
            Ok(plane_to_w(p, image.exposure))
        }
    }
}

/// `w` for the specular overlay: the normalized luminance of all specular planes.
pub fn specular_w(image: &IlluminationImage) -> Field2D<f64> {
    plane_to_w(&image.total_specular(), image.exposure)
}

/// Stage two over an illumination image. Output is unclamped.
pub fn shade(image: &IlluminationImage, spec: &ShadingSpec) -> Result<Field2D<Rgba>, ShadeError> {
    spec.validate()?;
    let w = select_w(image, spec.w_source)?;
    let mut out = shade_w(&w, &spec.basis, &spec.textures)?;
    if let Some(overlay) = &spec.specular_overlay {
        let ws = specular_w(image);
        let styled = shade_w(&ws, &overlay.basis, &overlay.textures)?;
        out = out.zip_map(&styled, |a, b| a + b)?;
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RobustnessReport {
    /// `max_p |shade(w1) - shade(w2)|_∞`.
    pub observed: f64,
    /// `L · max_p |w1 - w2| · max_p (max_i T_i(p) - min_i T_i(p))_∞`.
    pub bound: f64,
}

impl RobustnessReport {
    pub fn holds(&self) -> bool {
        self.observed <= self.bound + 1e-12
    }
}

/// Compares the styled outputs of two `w` fields against the Lipschitz bound of
/// the basis. Because the weights sum to one, a change `Δw` moves the output by
/// at most `L · Δw` times the per-pixel spread of the textures.
pub fn robustness_bound(spec: &ShadingSpec, w1: &Field2D<f64>, w2: &Field2D<f64>) -> Result<RobustnessReport, ShadeError> {
    let lip = spec.basis.lipschitz().ok_or(ShadeError::NonLipschitzBasis)?;
    if w1.dims() != w2.dims() {
        return Err(FieldError::ResolutionMismatch {
            expected: w1.dims(),
            actual: w2.dims(),
        }
        .into());
    }
    let a = shade_w(w1, &spec.basis, &spec.textures)?;
    let b = shade_w(w2, &spec.basis, &spec.textures)?;
    let observed = a
        .values()
        .iter()
        .zip(b.values())
        .map(|(x, y)| (*x - *y).max_abs())
        .fold(0.0, f64::max);
    let dw = w1
        .values()
        .iter()
        .zip(w2.values())
        .map(|(x, y)| (x.clamp(0.0, 1.0) - y.clamp(0.0, 1.0)).abs())
        .fold(0.0, f64::max);
    let mut spread = 0.0f64;
    for idx in 0..w1.values().len() {
        for c in 0..4 {
            let (lo, hi) = spec.textures.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), t| {
                let v = t.values()[idx][c];
                (lo.min(v), hi.max(v))
            });
            spread = spread.max(hi - lo);
        }
    }
    Ok(RobustnessReport {
        observed,
        bound: lip * dw * spread,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: &[f64], b: &[f64]) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() < 1e-12)
    }

    #[test]
    fn linear_endpoints() {
        assert_eq!(WeightBasis::Linear.eval(0.0), vec![1.0, 0.0]);
        assert_eq!(WeightBasis::Linear.eval(1.0), vec![0.0, 1.0]);
    }

    #[test]
    fn bezier_cubic_midpoint() {
        let b = WeightBasis::Bezier { degree: 3 };
        assert!(close(&b.eval(0.5), &[0.125, 0.375, 0.375, 0.125]));
        assert!(close(&b.eval(0.0), &[1.0, 0.0, 0.0, 0.0]));
        assert!(close(&b.eval(1.0), &[0.0, 0.0, 0.0, 1.0]));
    }

    #[test]
    fn bspline0_selects_interval() {
        let b = WeightBasis::Bspline0 {
            knots: vec![0.0, 0.25, 0.5, 0.75, 1.0],
        };
        assert_eq!(b.eval(0.6), vec![0.0, 0.0, 1.0, 0.0]);
        assert_eq!(b.eval(0.5), vec![0.0, 0.0, 1.0, 0.0]);
        assert_eq!(b.eval(0.0), vec![1.0, 0.0, 0.0, 0.0]);
        assert_eq!(b.eval(1.0), vec![0.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn bspline0_skips_empty_intervals() {
        let b = WeightBasis::Bspline0 {
            knots: vec![0.0, 0.5, 0.5, 1.0],
        };
        assert_eq!(b.eval(0.5), vec![0.0, 0.0, 1.0]);
        assert_eq!(b.eval(0.49), vec![1.0, 0.0, 0.0]);
        let tail = WeightBasis::Bspline0 {
            knots: vec![0.0, 0.5, 1.0, 1.0],
        };
        assert_eq!(tail.eval(1.0), vec![0.0, 1.0, 0.0]);
    }

    #[test]
    fn invalid_bases_rejected() {
        assert!(WeightBasis::Bezier { degree: 0 }.validate().is_err());
        assert!(WeightBasis::Bspline0 { knots: vec![0.0, 0.7, 0.5, 1.0] }.validate().is_err());
        assert!(WeightBasis::Bspline0 { knots: vec![0.1, 1.0] }.validate().is_err());
    }

    #[test]
    fn zero_w_reproduces_first_texture() {
        let t0 = Field2D::from_fn(8, 8, |i, j| Rgba::new(i as f64 * 0.1, j as f64 * 0.05, 0.3, 1.0));
        let t1 = Field2D::new(8, 8, Rgba::WHITE);
        let w = Field2D::new(8, 8, 0.0);
        let out = shade_w(&w, &WeightBasis::Linear, &[t0.clone(), t1]).unwrap();
        assert_eq!(out, t0);
    }

    #[test]
    fn midpoint_gray() {
        let t0 = Field2D::new(4, 4, Rgba::BLACK);
        let t1 = Field2D::new(4, 4, Rgba::WHITE);
        let out = shade_w(&Field2D::new(4, 4, 0.5), &WeightBasis::Linear, &[t0, t1]).unwrap();
        assert!(out.values().iter().all(|p| (p.r() - 0.5).abs() < 1e-15 && p.a() == 1.0));
    }

    #[test]
    fn shade_matches_scalar_loop_oracle() {
        let n = 64;
        let hash = |i: usize, j: usize, s: u64| {
            let mut x = (i as u64) << 32 ^ j as u64 ^ s.wrapping_mul(0x9E3779B97F4A7C15);
            x ^= x >> 33;
            x = x.wrapping_mul(0xff51afd7ed558ccd);
            x ^= x >> 33;
            (x >> 11) as f64 / (1u64 << 53) as f64
        };
        let w = Field2D::from_fn(n, n, |i, j| hash(i, j, 1));
        let t0 = Field2D::from_fn(n, n, |i, j| Rgba::new(hash(i, j, 2), hash(i, j, 3), hash(i, j, 4), 1.0));
        let t1 = Field2D::from_fn(n, n, |i, j| Rgba::new(hash(i, j, 5), hash(i, j, 6), hash(i, j, 7), 1.0));
        let out = shade_w(&w, &WeightBasis::Linear, &[t0.clone(), t1.clone()]).unwrap();
        for j in 0..n {
            for i in 0..n {
                let wv = w.get(i, j);
                for c in 0..4 {
                    let expected = (1.0 - wv) * t0.get(i, j)[c] + wv * t1.get(i, j)[c];
                    assert!((out.get(i, j)[c] - expected).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn texture_count_checked() {
        let t = Field2D::new(2, 2, Rgba::BLACK);
        let err = shade_w(&Field2D::new(2, 2, 0.0), &WeightBasis::Bezier { degree: 2 }, &[t.clone(), t]).unwrap_err();
        assert_eq!(err, ShadeError::TextureCountMismatch { expected: 3, actual: 2 });
    }

    #[test]
    fn robustness_examples() {
        let t0 = Field2D::new(16, 16, Rgba::splat(0.0));
        let t1 = Field2D::new(16, 16, Rgba::splat(1.0));
        let spec = ShadingSpec::new(WeightBasis::Linear, vec![t0, t1]);
        let w1 = Field2D::from_fn(16, 16, |i, _| i as f64 / 20.0);
        let same = robustness_bound(&spec, &w1, &w1).unwrap();
        assert_eq!((same.observed, same.bound), (0.0, 0.0));

        let w2 = w1.map(|x| x + 0.1);
        let r = robustness_bound(&spec, &w1, &w2).unwrap();
        assert!((r.observed - 0.1).abs() < 1e-12, "{r:?}");
        assert!((r.bound - 0.1).abs() < 1e-12, "{r:?}");
        assert!(r.holds());

        let spline = ShadingSpec::new(
            WeightBasis::Bspline0 { knots: vec![0.0, 0.5, 1.0] },
            spec.textures.clone(),
        );
        assert_eq!(robustness_bound(&spline, &w1, &w2), Err(ShadeError::NonLipschitzBasis));
    }

    #[test]
    fn bspline0_quantizes_constant_textures() {
        let knots = vec![0.0, 0.3, 0.6, 1.0];
        let textures: Vec<_> = (0..3).map(|k| Field2D::new(32, 32, Rgba::gray(k as f64 * 0.4))).collect();
        let w = Field2D::from_uv_fn(32, 32, |u, v| u * v);
        let out = shade_w(&w, &WeightBasis::Bspline0 { knots }, &textures).unwrap();
        let mut distinct: Vec<f64> = out.values().iter().map(|p| p.r()).collect();
        distinct.sort_by(f64::total_cmp);
        distinct.dedup();
        assert!(distinct.len() <= 3);
    }

    fn basis_strategy() -> impl Strategy<Value = WeightBasis> {
        prop_oneof![
            Just(WeightBasis::Linear),
            (1usize..=8).prop_map(|degree| WeightBasis::Bezier { degree }),
            proptest::collection::vec(0.0f64..1.0, 0..6).prop_map(|mut inner| {
                inner.sort_by(f64::total_cmp);
                let mut knots = vec![0.0];
                knots.extend(inner);
                knots.push(1.0);
                WeightBasis::Bspline0 { knots }
            }),
        ]
    }

    proptest! {
        #[test]
        fn partition_of_unity_and_nonnegativity(basis in basis_strategy(), w in -0.5f64..1.5) {
            let weights = basis.eval(w);
            prop_assert_eq!(weights.len(), basis.n_weights());
            prop_assert!(weights.iter().all(|&x| x >= 0.0));
            prop_assert!((weights.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }

        #[test]
        fn monotone_response_of_linear_basis(a in 0.0f64..1.0, b in 0.0f64..1.0, lo in 0.0f64..1.0, gap in 0.0f64..1.0) {
            let t0 = vec![Field2D::new(1, 1, Rgba::splat(lo)), Field2D::new(1, 1, Rgba::splat(lo + gap))];
            let (w_lo, w_hi) = if a <= b { (a, b) } else { (b, a) };
            let x = shade_pixel(&WeightBasis::Linear, &t0, w_lo, 0, 0);
            let y = shade_pixel(&WeightBasis::Linear, &t0, w_hi, 0, 0);
            prop_assert!(x.r() <= y.r() + 1e-15);
        }

        #[test]
        fn identical_textures_collapse(basis in basis_strategy(), w in 0.0f64..1.0, c in 0.0f64..2.0) {
            let textures = vec![Field2D::new(1, 1, Rgba::new(c, 0.5 * c, 0.1, 1.0)); basis.n_weights()];
            let out = shade_pixel(&basis, &textures, w, 0, 0);
            prop_assert!((out - textures[0].get(0, 0)).max_abs() < 1e-12);
        }
    }
}
