//! Global illumination by minimizing the rendering-equation residual of a
//! neural radiance field over scene surfaces.

pub mod color;
pub mod diff;
pub mod field;
pub mod geometry;
pub mod io;
pub mod materials;
pub mod render;
pub mod rng;
pub mod scene;
pub mod solver;

pub use color::Rgb;
pub use scene::Scene;
