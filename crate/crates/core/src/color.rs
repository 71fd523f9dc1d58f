//! Linear-light RGBA values.

use std::ops::{Add, AddAssign, Index, Mul, Sub};

use serde::{Deserialize, Serialize};

/// Rec. 709 luma weights, applied to linear RGB.
pub const LUMA: [f64; 3] = [0.2126, 0.7152, 0.0722];

/// A linear-light RGBA value. Components are unclamped.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Rgba(pub [f64; 4]);

impl Rgba {
    pub const ZERO: Rgba = Rgba([0.0; 4]);
    pub const BLACK: Rgba = Rgba([0.0, 0.0, 0.0, 1.0]);
    pub const WHITE: Rgba = Rgba([1.0; 4]);

    pub const fn new(r: f64, g: f64, b: f64, a: f64) -> Self {
        Rgba([r, g, b, a])
    }

    pub const fn gray(v: f64) -> Self {
        Rgba([v, v, v, 1.0])
    }

    /// The same value in every channel, alpha included.
    pub const fn splat(v: f64) -> Self {
        Rgba([v; 4])
    }

    pub fn r(&self) -> f64 {
        self.0[0]
    }
    pub fn g(&self) -> f64 {
        self.0[1]
    }
    pub fn b(&self) -> f64 {
        self.0[2]
    }
    pub fn a(&self) -> f64 {
        self.0[3]
    }

    pub fn luminance(&self) -> f64 {
        LUMA[0] * self.0[0] + LUMA[1] * self.0[1] + LUMA[2] * self.0[2]
    }

    pub fn map(self, f: impl Fn(f64) -> f64) -> Self {
        Rgba(self.0.map(f))
    }

    pub fn zip(self, other: Rgba, f: impl Fn(f64, f64) -> f64) -> Self {
        Rgba(std::array::from_fn(|c| f(self.0[c], other.0[c])))
    }

    /// Componentwise product.
    pub fn modulate(self, other: Rgba) -> Self {
        self.zip(other, |a, b| a * b)
    }

    pub fn with_alpha(mut self, a: f64) -> Self {
        self.0[3] = a;
        self
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().fold(0.0f64, |m, c| m.max(c.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|c| c.is_finite())
    }
}

impl Add for Rgba {
    type Output = Rgba;
    fn add(self, rhs: Rgba) -> Rgba {
        self.zip(rhs, |a, b| a + b)
    }
}

impl AddAssign for Rgba {
    fn add_assign(&mut self, rhs: Rgba) {
        for c in 0..4 {
            self.0[c] += rhs.0[c];
        }
    }
}

impl Sub for Rgba {
    type Output = Rgba;
    fn sub(self, rhs: Rgba) -> Rgba {
        self.zip(rhs, |a, b| a - b)
    }
}

impl Mul<f64> for Rgba {
    type Output = Rgba;
    fn mul(self, s: f64) -> Rgba {
        self.map(|c| c * s)
    }
}

impl Index<usize> for Rgba {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// sRGB transfer function, decode direction.
pub fn srgb_to_linear(c: f64) -> f64 {
    if c <= 0.04045 {
        c / 12.92
    } else {
        ((c + 0.055) / 1.055).powf(2.4)
    }
}

/// sRGB transfer function, encode direction. Input is clamped to [0,1].
pub fn linear_to_srgb(c: f64) -> f64 {
    let c = c.clamp(0.0, 1.0);
    if c <= 0.003_130_8 {
        c * 12.92
    } else {
        1.055 * c.powf(1.0 / 2.4) - 0.055
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn srgb_round_trip() {
        for i in 0..=255 {
            let c = i as f64 / 255.0;
            assert!((linear_to_srgb(srgb_to_linear(c)) - c).abs() < 1e-12);
        }
    }

    #[test]
    fn luminance_of_white_is_one() {
        assert!((Rgba::WHITE.luminance() - 1.0).abs() < 1e-12);
    }
}
