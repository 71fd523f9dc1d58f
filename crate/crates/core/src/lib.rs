//! Mock-3D illumination and barycentric shading.
//!
//! Rendering runs in two stages. [`illumination::compute_w`] lights the proxy
//! layers of a [`scene::MockScene`] without their materials and produces an
//! [`illumination::IlluminationImage`]; [`baryshade::shade`] then maps that
//! image onto style textures. The remaining modules cover anamorphic baking,
//! augmentation compositing and image I/O.

pub mod anamorph;
pub mod baryshade;
pub mod camera;
pub mod color;
pub mod compositor;
pub mod demo;
pub mod field;
pub mod illumination;
pub mod io;
pub mod render;
pub mod rng;
pub mod scene;

pub use color::Rgba;
pub use field::{Field2D, Vec2, Vec3};
