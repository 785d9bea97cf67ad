#![allow(dead_code)]

use byel_core::nn::{ArchConfig, EncoderConfig, Parameters};
use byel_core::EmotionLabel;
use ndarray::Array4;
use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn tiny_arch() -> ArchConfig {
    ArchConfig {
        encoder: EncoderConfig { image_size: 8, in_channels: 1, channels: vec![3, 4] },
        head_hidden: 5,
        projection_dim: 6,
    }
}

pub fn random_images(rng: &mut ChaCha8Rng, batch: usize, size: usize) -> Array4<f64> {
    Array4::from_shape_simple_fn((batch, 1, size, size), || rng.random_range(0.0..1.0))
}

pub fn labels(n: usize) -> Vec<EmotionLabel> {
    (0..n).map(|i| EmotionLabel::try_from(i % 6).unwrap()).collect()
}

pub fn flatten<M: Parameters<f64>>(m: &M) -> Vec<f64> {
    m.params("").iter().flat_map(|p| p.value.iter().copied().collect::<Vec<_>>()).collect()
}

pub fn unflatten<M: Parameters<f64>>(m: &mut M, values: &[f64]) {
    let mut it = values.iter();
    m.visit_mut("", &mut |mut p| p.value.iter_mut().for_each(|v| *v = *it.next().unwrap()));
    assert!(it.next().is_none());
}

/// `|a - b| / max(|a|, |b|)` over whole vectors.
pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    diff / na.max(nb).max(1e-300)
}

/// Central differences of `f` at `x` with step `eps`.
pub fn numeric_grad(x: &[f64], eps: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut p = x.to_vec();
    (0..x.len())
        .map(|i| {
            p[i] = x[i] + eps;
            let up = f(&p);
            p[i] = x[i] - eps;
            let down = f(&p);
            p[i] = x[i];
            (up - down) / (2.0 * eps)
        })
        .collect()
}
