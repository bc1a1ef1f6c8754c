//! RGB observation frames and binary PPM output.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub const CHANNELS: usize = 3;

/// An `height × width × 3` image with channel values in `[0, 1]`, stored
/// row-major as `f32`.
#[derive(Clone, Debug, PartialEq)]
pub struct Frame {
    height: usize,
    width: usize,
    data: Vec<f32>,
}

impl Frame {
    pub fn new(height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        if height == 0 || width == 0 || data.len() != height * width * CHANNELS {
            return Err(Error::config(format!(
                "frame {height}x{width}x3 needs {} values, got {}",
                height * width * CHANNELS,
                data.len()
            )));
        }
        Ok(Self { height, width, data })
    }

    pub fn filled(height: usize, width: usize, value: f32) -> Self {
        Self {
            height,
            width,
            data: vec![value; height * width * CHANNELS],
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn pixel(&self, y: usize, x: usize) -> [f32; 3] {
        let i = (y * self.width + x) * CHANNELS;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn set_pixel(&mut self, y: usize, x: usize, rgb: [f32; 3]) {
        let i = (y * self.width + x) * CHANNELS;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    /// Places `self` and `right` next to each other; heights must agree.
    pub fn side_by_side(&self, right: &Frame) -> Result<Frame> {
        if self.height != right.height {
            return Err(Error::config("side-by-side frames need equal heights"));
        }
        let width = self.width + right.width;
        let mut data = Vec::with_capacity(self.height * width * CHANNELS);
        for y in 0..self.height {
            for f in [self, right] {
                data.extend_from_slice(&f.data[y * f.width * CHANNELS..(y + 1) * f.width * CHANNELS]);
            }
        }
        Frame::new(self.height, width, data)
    }

    /// Binary P6 encoding with `round(v·255)` clamped to `[0, 255]`.
    pub fn to_ppm(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend(self.data.iter().map(|&v| quantize(v)));
        out
    }

    pub fn write_ppm(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(&self.to_ppm())?;
        w.flush()?;
        Ok(())
    }
}

pub fn quantize(v: f32) -> u8 {
    (v * 255.0).round().clamp(0.0, 255.0) as u8
}

/// Mean absolute difference over all `H·W·3` channel values.
pub fn recon_error(a: &Frame, b: &Frame) -> Result<f64> {
    if a.dims() != b.dims() {
        return Err(Error::config(format!(
            "frame dimensions differ: {:?} vs {:?}",
            a.dims(),
            b.dims()
        )));
    }
    Ok(mean_abs_diff(a.data(), b.data().iter().map(|&v| v as f64)))
}

pub(crate) fn mean_abs_diff(a: &[f32], b: impl Iterator<Item = f64>) -> f64 {
    let n = a.len() as f64;
    a.iter().zip(b).map(|(&x, y)| (x as f64 - y).abs()).sum::<f64>() / n
}
