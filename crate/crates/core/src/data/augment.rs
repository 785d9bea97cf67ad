use alloc::vec::Vec;

#[cfg_attr(feature = "std", allow(unused_imports))]
use num_traits::Float;
use rand::Rng as _;

use super::image::Image;
use crate::error::{Error, Result};
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ColorJitter {
    pub prob: f32,
    pub brightness: f32,
    pub contrast: f32,
    /// No effect on single-channel images.
    pub saturation: f32,
    /// No effect on single-channel images.
    pub hue: f32,
}

/// Asymmetric two-view augmentation (t, t'). Defaults follow the BYOL recipe.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentConfig {
    pub crop_scale_range: (f32, f32),
    pub crop_ratio_range: (f32, f32),
    pub flip_prob: f32,
    pub color_jitter: ColorJitter,
    /// No effect on single-channel images.
    pub grayscale_prob: f32,
    pub blur_prob_view1: f32,
    pub blur_prob_view2: f32,
    /// Gaussian blur standard deviation range, in pixels.
    pub blur_sigma_range: (f32, f32),
    pub solarize_prob_view1: f32,
    pub solarize_prob_view2: f32,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            crop_scale_range: (0.08, 1.0),
            crop_ratio_range: (3.0 / 4.0, 4.0 / 3.0),
            flip_prob: 0.5,
            color_jitter: ColorJitter {
                prob: 0.8,
                brightness: 0.4,
                contrast: 0.4,
                saturation: 0.2,
                hue: 0.1,
            },
            grayscale_prob: 0.2,
            blur_prob_view1: 1.0,
            blur_prob_view2: 0.1,
            blur_sigma_range: (0.1, 1.0),
            solarize_prob_view1: 0.0,
            solarize_prob_view2: 0.2,
        }
    }
}

impl AugmentConfig {
    /// Every random operation disabled and crops pinned to the full image.
    pub fn identity() -> Self {
        Self {
            crop_scale_range: (1.0, 1.0),
            crop_ratio_range: (1.0, 1.0),
            flip_prob: 0.0,
            color_jitter: ColorJitter { prob: 0.0, brightness: 0.0, contrast: 0.0, saturation: 0.0, hue: 0.0 },
            grayscale_prob: 0.0,
            blur_prob_view1: 0.0,
            blur_prob_view2: 0.0,
            blur_sigma_range: (0.1, 1.0),
            solarize_prob_view1: 0.0,
            solarize_prob_view2: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let probs = [
            self.flip_prob,
            self.color_jitter.prob,
            self.grayscale_prob,
            self.blur_prob_view1,
            self.blur_prob_view2,
            self.solarize_prob_view1,
            self.solarize_prob_view2,
        ];
        if probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::Config("augmentation probabilities must lie in [0, 1]".into()));
        }
        let (lo, hi) = self.crop_scale_range;
        if !(lo > 0.0 && lo <= hi && hi <= 1.0) {
            return Err(Error::Config("crop_scale_range must be ordered within (0, 1]".into()));
        }
        let (rlo, rhi) = self.crop_ratio_range;
        if !(rlo > 0.0 && rlo <= rhi) {
            return Err(Error::Config("crop_ratio_range must be positive and ordered".into()));
        }
        let (slo, shi) = self.blur_sigma_range;
        if !(slo > 0.0 && slo <= shi) {
            return Err(Error::Config("blur_sigma_range must be positive and ordered".into()));
        }
        let j = &self.color_jitter;
        if [j.brightness, j.contrast, j.saturation, j.hue].iter().any(|v| v.is_nan() || *v < 0.0) {
            return Err(Error::Config("color jitter strengths must be non-negative".into()));
        }
        Ok(())
    }
}

struct Branch {
    blur_prob: f32,
    solarize_prob: f32,
}

fn uniform(rng: &mut Rng, lo: f32, hi: f32) -> f32 {
    if lo < hi {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

fn coin(rng: &mut Rng, p: f32) -> bool {
    p > 0.0 && rng.random::<f32>() < p
}

/// Returns `(top, left, height, width)` of the crop window.
fn sample_crop(rng: &mut Rng, h: usize, w: usize, cfg: &AugmentConfig) -> (f32, f32, f32, f32) {
    let area = (h * w) as f32;
    let (lo, hi) = cfg.crop_ratio_range;
    let (log_lo, log_hi) = (lo.ln(), hi.ln());
    for _ in 0..10 {
        let target = area * uniform(rng, cfg.crop_scale_range.0, cfg.crop_scale_range.1);
        let ratio = uniform(rng, log_lo, log_hi).exp();
        let cw = (target * ratio).sqrt().round();
        let ch = (target / ratio).sqrt().round();
        if cw >= 1.0 && ch >= 1.0 && cw <= w as f32 && ch <= h as f32 {
            let top = rng.random_range(0..=(h - ch as usize)) as f32;
            let left = rng.random_range(0..=(w - cw as usize)) as f32;
            return (top, left, ch, cw);
        }
    }
    // Fallback: central crop clamped to the ratio range.
    let in_ratio = w as f32 / h as f32;
    let (ch, cw) = if in_ratio < lo {
        ((w as f32 / lo).round(), w as f32)
    } else if in_ratio > hi {
        (h as f32, (h as f32 * hi).round())
    } else {
        (h as f32, w as f32)
    };
    (((h as f32 - ch) / 2.0).floor(), ((w as f32 - cw) / 2.0).floor(), ch, cw)
}

/// Bilinear resample of the crop window back to the full image size.
fn resized_crop(img: &Image, (top, left, ch, cw): (f32, f32, f32, f32)) -> Image {
    let (h, w) = (img.height(), img.width());
    if top == 0.0 && left == 0.0 && ch == h as f32 && cw == w as f32 {
        return img.clone();
    }
    let mut out = Image::zeros(h, w);
    let sy = ch / h as f32;
    let sx = cw / w as f32;
    for r in 0..h {
        let y = (top + (r as f32 + 0.5) * sy - 0.5).clamp(0.0, (h - 1) as f32);
        let y0 = y.floor() as usize;
        let y1 = (y0 + 1).min(h - 1);
        let fy = y - y0 as f32;
        for c in 0..w {
            let x = (left + (c as f32 + 0.5) * sx - 0.5).clamp(0.0, (w - 1) as f32);
            let x0 = x.floor() as usize;
            let x1 = (x0 + 1).min(w - 1);
            let fx = x - x0 as f32;
            let top_row = img.get(y0, x0) * (1.0 - fx) + img.get(y0, x1) * fx;
            let bottom_row = img.get(y1, x0) * (1.0 - fx) + img.get(y1, x1) * fx;
            out.set(r, c, top_row * (1.0 - fy) + bottom_row * fy);
        }
    }
    out
}

fn jitter(img: &mut Image, j: &ColorJitter, rng: &mut Rng) {
    // Brightness and contrast in random order; saturation and hue are identity
    // on a single channel but still consume their draws.
    let order_brightness_first = rng.random::<bool>();
    let b = uniform(rng, (1.0 - j.brightness).max(0.0), 1.0 + j.brightness);
    let c = uniform(rng, (1.0 - j.contrast).max(0.0), 1.0 + j.contrast);
    let _saturation = uniform(rng, (1.0 - j.saturation).max(0.0), 1.0 + j.saturation);
    let _hue = uniform(rng, -j.hue, j.hue);
    let brightness = |img: &mut Image| {
        img.pixels_mut().iter_mut().for_each(|v| *v = (*v * b).clamp(0.0, 1.0));
    };
    let contrast = |img: &mut Image| {
        let mean = img.pixels().iter().sum::<f32>() / img.pixels().len() as f32;
        img.pixels_mut()
            .iter_mut()
            .for_each(|v| *v = (mean + c * (*v - mean)).clamp(0.0, 1.0));
    };
    if order_brightness_first {
        brightness(img);
        contrast(img);
    } else {
        contrast(img);
        brightness(img);
    }
}

fn gaussian_blur(img: &Image, sigma: f32) -> Image {
    let (h, w) = (img.height(), img.width());
    let radius = ((3.0 * sigma).ceil() as usize).clamp(1, h.min(w) / 2);
    let kernel: Vec<f32> = (0..=2 * radius)
        .map(|i| {
            let d = i as f32 - radius as f32;
            (-d * d / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let norm: f32 = kernel.iter().sum();
    let reflect = |i: i64, n: usize| -> usize {
        let n = n as i64;
        let mut i = i;
        if i < 0 {
            i = -i;
        }
        if i >= n {
            i = 2 * n - 2 - i;
        }
        i.clamp(0, n - 1) as usize
    };
    let mut tmp = Image::zeros(h, w);
    for r in 0..h {
        for c in 0..w {
            let acc: f32 = kernel
                .iter()
                .enumerate()
                .map(|(k, wk)| wk * img.get(r, reflect(c as i64 + k as i64 - radius as i64, w)))
                .sum();
            tmp.set(r, c, acc / norm);
        }
    }
    let mut out = Image::zeros(h, w);
    for r in 0..h {
        for c in 0..w {
            let acc: f32 = kernel
                .iter()
                .enumerate()
                .map(|(k, wk)| wk * tmp.get(reflect(r as i64 + k as i64 - radius as i64, h), c))
                .sum();
            out.set(r, c, acc / norm);
        }
    }
    out
}

fn augment_one(image: &Image, rng: &mut Rng, cfg: &AugmentConfig, branch: &Branch) -> Image {
    let crop = sample_crop(rng, image.height(), image.width(), cfg);
    let mut out = resized_crop(image, crop);
    if coin(rng, cfg.flip_prob) {
        out = out.mirrored();
    }
    if coin(rng, cfg.color_jitter.prob) {
        jitter(&mut out, &cfg.color_jitter, rng);
    }
    // Grayscale conversion is the identity for one channel.
    let _ = coin(rng, cfg.grayscale_prob);
    if coin(rng, branch.blur_prob) {
        let sigma = uniform(rng, cfg.blur_sigma_range.0, cfg.blur_sigma_range.1);
        out = gaussian_blur(&out, sigma);
    }
    if coin(rng, branch.solarize_prob) {
        out.pixels_mut().iter_mut().for_each(|v| {
            if *v >= 0.5 {
                *v = 1.0 - *v;
            }
        });
    }
    out.clip_unit();
    out
}

/// Draw the two views `(t(x), t'(x))` of one image.
pub fn augment_pair(image: &Image, rng: &mut Rng, cfg: &AugmentConfig) -> Result<(Image, Image)> {
    if image.height() == 0 || image.width() == 0 {
        return Err(Error::Shape("empty image".into()));
    }
    if !image.in_unit_range() {
        return Err(Error::OutOfRange("image intensities must lie in [0, 1]".into()));
    }
    let v1 = Branch { blur_prob: cfg.blur_prob_view1, solarize_prob: cfg.solarize_prob_view1 };
    let v2 = Branch { blur_prob: cfg.blur_prob_view2, solarize_prob: cfg.solarize_prob_view2 };
    let a = augment_one(image, rng, cfg, &v1);
    let b = augment_one(image, rng, cfg, &v2);
    Ok((a, b))
}
