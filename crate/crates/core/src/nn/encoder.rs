use alloc::format;
use alloc::vec::Vec;

use ndarray::{Array2, Array4, ArrayView4, Axis};

use super::layers::{relu, relu_backward, Conv2d, ConvCache, SampleNorm, SampleNormCache};
use super::params::{child, ParamView, ParamViewMut, Parameters};
use crate::error::{Error, Result};
use crate::real::Real;
use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncoderConfig {
    pub image_size: usize,
    pub in_channels: usize,
    /// One stride-2 conv block per entry; the last entry is the feature width.
    pub channels: Vec<usize>,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self { image_size: 32, in_channels: 1, channels: alloc::vec![16, 32, 64] }
    }
}

/// Blocks of stride-2 conv, per-example normalization and ReLU, followed by
/// global average pooling.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoder<T> {
    pub image_size: usize,
    pub blocks: Vec<Conv2d<T>>,
    pub norms: Vec<SampleNorm<T>>,
}

pub struct EncoderCache<T> {
    convs: Vec<ConvCache<T>>,
    norms: Vec<SampleNormCache<T>>,
    activations: Vec<Array4<T>>,
}

impl<T: Real> Encoder<T> {
    pub fn new(config: &EncoderConfig, rng: &mut Rng) -> Result<Self> {
        if config.channels.is_empty() || config.channels.contains(&0) || config.in_channels == 0 {
            return Err(Error::Config("encoder needs at least one non-empty block".into()));
        }
        let mut blocks = Vec::with_capacity(config.channels.len());
        let mut norms = Vec::with_capacity(config.channels.len());
        let mut cin = config.in_channels;
        for &cout in &config.channels {
            blocks.push(Conv2d::he_uniform(cin, cout, 2, rng));
            norms.push(SampleNorm::new(cout));
            cin = cout;
        }
        Ok(Self { image_size: config.image_size, blocks, norms })
    }

    pub fn feature_dim(&self) -> usize {
        self.blocks.last().map_or(0, Conv2d::out_channels)
    }

    pub fn in_channels(&self) -> usize {
        self.blocks[0].in_channels()
    }

    /// `batch` is `batch x channels x height x width`; returns `batch x F`.
    pub fn forward(&self, batch: ArrayView4<T>) -> Result<(Array2<T>, EncoderCache<T>)> {
        let (_, c, h, w) = batch.dim();
        if c != self.in_channels() || h != self.image_size || w != self.image_size {
            return Err(Error::Shape(format!(
                "encoder expects {}x{s}x{s} inputs, got {c}x{h}x{w}",
                self.in_channels(),
                s = self.image_size
            )));
        }
        let mut x: Array4<T> = batch.permuted_axes([0, 2, 3, 1]).as_standard_layout().into_owned();
        let mut convs = Vec::with_capacity(self.blocks.len());
        let mut norms = Vec::with_capacity(self.blocks.len());
        let mut activations = Vec::with_capacity(self.blocks.len());
        for (conv, norm) in self.blocks.iter().zip(&self.norms) {
            let (pre, cache) = conv.forward(x.view())?;
            let (mut y, norm_cache) = norm.forward(pre);
            relu(&mut y);
            convs.push(cache);
            norms.push(norm_cache);
            activations.push(y.clone());
            x = y;
        }
        let (b, ho, wo, f) = x.dim();
        let pooled = x
            .into_shape_with_order((b, ho * wo, f))
            .expect("contiguous")
            .mean_axis(Axis(1))
            .expect("non-empty spatial grid");
        Ok((pooled, EncoderCache { convs, norms, activations }))
    }

    pub fn features(&self, batch: ArrayView4<T>) -> Result<Array2<T>> {
        self.forward(batch).map(|(y, _)| y)
    }

    pub fn backward(&self, cache: &EncoderCache<T>, dy: ndarray::ArrayView2<T>, grad: &mut Self) {
        let last = cache.activations.last().expect("at least one block");
        let (b, ho, wo, f) = last.dim();
        let scale = T::one() / T::from_usize(ho * wo).unwrap();
        let mut d = Array4::<T>::zeros((b, ho, wo, f));
        for (n, row) in dy.outer_iter().enumerate() {
            let mut slab = d.index_axis_mut(Axis(0), n);
            for mut px in slab.lanes_mut(Axis(2)) {
                px.zip_mut_with(&row, |o, &g| *o = g * scale);
            }
        }
        for i in (0..self.blocks.len()).rev() {
            relu_backward(&cache.activations[i], &mut d);
            let d_pre = self.norms[i].backward(&cache.norms[i], d, &mut grad.norms[i]);
            match self.blocks[i].backward(&cache.convs[i], d_pre, &mut grad.blocks[i], i > 0) {
                Some(dx) => d = dx,
                None => break,
            }
        }
    }
}

impl<T: Real> Parameters<T> for Encoder<T> {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(ParamView<'a, T>)) {
        for (i, (b, n)) in self.blocks.iter().zip(&self.norms).enumerate() {
            b.visit(&child(prefix, &format!("conv{i}")), f);
            n.visit(&child(prefix, &format!("norm{i}")), f);
        }
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, f: &mut dyn FnMut(ParamViewMut<'a, T>)) {
        for (i, (b, n)) in self.blocks.iter_mut().zip(self.norms.iter_mut()).enumerate() {
            b.visit_mut(&child(prefix, &format!("conv{i}")), f);
            n.visit_mut(&child(prefix, &format!("norm{i}")), f);
        }
    }
}
