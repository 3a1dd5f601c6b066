//! Images from a radiance field (LHS, RHS, residual), the reference path
//! tracer, and image metrics.

mod camera;
mod field;
mod path;

pub use camera::Camera;
pub use field::{render, render_lhs, render_residual, render_rhs, RenderJob, RenderMode};
pub use path::{path_trace, radiance_from, scattered_radiance, RR_START_DEPTH};

use thiserror::Error;

use crate::color::Rgb;
use crate::field::FieldError;

#[derive(Debug, Error, PartialEq)]
pub enum RenderError {
    #[error("image dimensions differ: {0:?} vs {1:?}")]
    Dimensions((usize, usize), (usize, usize)),
    #[error("invalid render settings: {0}")]
    Config(String),
    #[error(transparent)]
    Field(#[from] FieldError),
}

/// Linear HDR image with per-pixel sample counts. Row 0 is the top row.
#[derive(Clone, Debug, PartialEq)]
pub struct Film {
    width: usize,
    height: usize,
    pixels: Vec<f32>,
    counts: Vec<u32>,
}

impl Film {
    pub fn new(width: usize, height: usize) -> Self {
        Film { width, height, pixels: vec![0.0; width * height * 3], counts: vec![0; width * height] }
    }

    /// Film from resolved pixel values, each counted as one sample.
    pub fn from_pixels(width: usize, height: usize, pixels: Vec<f32>) -> Self {
        assert_eq!(pixels.len(), width * height * 3, "pixel buffer does not match {width}x{height}");
        Film { width, height, pixels, counts: vec![1; width * height] }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    /// Interleaved RGB values, top row first.
    pub fn pixels(&self) -> &[f32] {
        &self.pixels
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    pub fn get(&self, x: usize, y: usize) -> Rgb {
        let i = 3 * (y * self.width + x);
        Rgb::new(self.pixels[i] as f64, self.pixels[i + 1] as f64, self.pixels[i + 2] as f64)
    }

    /// Stores the resolved value of pixel `index` estimated from `count` samples.
    pub fn set(&mut self, index: usize, value: Rgb, count: u32) {
        for c in 0..3 {
            self.pixels[3 * index + c] = value[c] as f32;
        }
        self.counts[index] = count;
    }

    pub fn is_finite(&self) -> bool {
        self.pixels.iter().all(|v| v.is_finite())
    }

    /// Mean over all pixels and channels.
    pub fn mean(&self) -> f64 {
        self.pixels.iter().map(|&v| v as f64).sum::<f64>() / self.pixels.len().max(1) as f64
    }

    pub fn map(&self, f: impl Fn(f32) -> f32) -> Film {
        Film { width: self.width, height: self.height, pixels: self.pixels.iter().map(|&v| f(v)).collect(), counts: self.counts.clone() }
    }
}

fn check_dims(img: &Film, reference: &Film) -> Result<(), RenderError> {
    if img.dims() != reference.dims() {
        return Err(RenderError::Dimensions(img.dims(), reference.dims()));
    }
    Ok(())
}

/// Mean squared error over pixels and channels.
pub fn mse(img: &Film, reference: &Film) -> Result<f64, RenderError> {
    check_dims(img, reference)?;
    let n = img.pixels.len().max(1) as f64;
    Ok(img.pixels.iter().zip(&reference.pixels).map(|(&a, &b)| (a as f64 - b as f64).powi(2)).sum::<f64>() / n)
}

/// Mean of `|img - ref| / (ref + 0.01)` over pixels and channels.
pub fn mape(img: &Film, reference: &Film) -> Result<f64, RenderError> {
    check_dims(img, reference)?;
    let n = img.pixels.len().max(1) as f64;
    Ok(img
        .pixels
        .iter()
        .zip(&reference.pixels)
        .map(|(&a, &b)| (a as f64 - b as f64).abs() / (b as f64 + 0.01))
        .sum::<f64>()
        / n)
}
