use alloc::vec::Vec;

use ndarray::Array4;

use crate::error::{Error, Result};
use crate::real::Real;

/// Single-channel image with intensities in `[0, 1]`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    height: usize,
    width: usize,
    data: Vec<f32>,
}

impl Image {
    pub fn zeros(height: usize, width: usize) -> Self {
        Self { height, width, data: alloc::vec![0.0; height * width] }
    }

    pub fn from_vec(height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::Shape(alloc::format!(
                "{} pixels for a {height}x{width} image",
                data.len()
            )));
        }
        Ok(Self { height, width, data })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn pixels(&self) -> &[f32] {
        &self.data
    }

    pub fn pixels_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f32 {
        self.data[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, v: f32) {
        self.data[row * self.width + col] = v;
    }

    pub fn clip_unit(&mut self) {
        for v in &mut self.data {
            *v = v.clamp(0.0, 1.0);
        }
    }

    pub fn in_unit_range(&self) -> bool {
        self.data.iter().all(|v| (0.0..=1.0).contains(v))
    }

    pub fn mirrored(&self) -> Self {
        let mut out = self.clone();
        for r in 0..self.height {
            out.data[r * self.width..(r + 1) * self.width].reverse();
        }
        out
    }

    /// Quantize to 8-bit grayscale, round-to-nearest.
    pub fn to_u8(&self) -> Vec<u8> {
        self.data.iter().map(|v| libm_round(v.clamp(0.0, 1.0) * 255.0) as u8).collect()
    }

    pub fn from_u8(height: usize, width: usize, bytes: &[u8]) -> Result<Self> {
        Self::from_vec(height, width, bytes.iter().map(|&b| b as f32 / 255.0).collect())
    }
}

#[inline]
fn libm_round(x: f32) -> f32 {
    num_traits::Float::round(x)
}

/// Stack equally sized images into a `batch x 1 x height x width` array.
pub fn stack_batch<T: Real>(images: &[&Image]) -> Result<Array4<T>> {
    let first = images.first().ok_or(Error::Empty("image batch"))?;
    let (h, w) = (first.height, first.width);
    let mut out = Array4::<T>::zeros((images.len(), 1, h, w));
    for (b, img) in images.iter().enumerate() {
        if img.height != h || img.width != w {
            return Err(Error::Shape(alloc::format!(
                "image {b} is {}x{}, batch is {h}x{w}",
                img.height, img.width
            )));
        }
        let mut dst = out.slice_mut(ndarray::s![b, 0, .., ..]);
        for (d, &s) in dst.iter_mut().zip(img.data.iter()) {
            *d = T::of_f32(s);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mirror_is_involution() {
        let img = Image::from_vec(2, 3, alloc::vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6]).unwrap();
        assert_eq!(img.mirrored().pixels(), &[0.3, 0.2, 0.1, 0.6, 0.5, 0.4]);
        assert_eq!(img.mirrored().mirrored(), img);
    }

    #[test]
    fn stack_rejects_mixed_sizes() {
        let a = Image::zeros(4, 4);
        let b = Image::zeros(5, 4);
        assert!(stack_batch::<f32>(&[&a, &b]).is_err());
        let batch = stack_batch::<f64>(&[&a, &a]).unwrap();
        assert_eq!(batch.shape(), &[2, 1, 4, 4]);
    }

    #[test]
    fn u8_quantization_round_trips() {
        let bytes: Vec<u8> = (0..=255).collect();
        let img = Image::from_u8(16, 16, &bytes).unwrap();
        assert_eq!(img.to_u8(), bytes);
    }
}
