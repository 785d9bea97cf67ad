use alloc::format;

use ndarray::linalg::general_mat_mul;
use ndarray::{Array1, Array2, Array4, ArrayView2, ArrayView4, Axis, Zip};
use rand::Rng as _;

use super::params::{leaf, leaf_mut, ParamKind, ParamView, ParamViewMut, Parameters};
use crate::error::{Error, Result};
use crate::real::Real;
use crate::rng::Rng;

pub fn relu<T: Real, D: ndarray::Dimension>(a: &mut ndarray::Array<T, D>) {
    a.mapv_inplace(|v| if v > T::zero() { v } else { T::zero() });
}

/// Zero the upstream gradient wherever the ReLU output was clamped.
pub(crate) fn relu_backward<T: Real, D: ndarray::Dimension>(
    out: &ndarray::Array<T, D>,
    grad: &mut ndarray::Array<T, D>,
) {
    Zip::from(grad).and(out).for_each(|g, &o| {
        if o <= T::zero() {
            *g = T::zero();
        }
    });
}

fn uniform_array<T: Real>(shape: (usize, usize), bound: f64, rng: &mut Rng) -> Array2<T> {
    Array2::from_shape_simple_fn(shape, || T::lit(rng.random_range(-bound..=bound)))
}

/// Affine map `y = x W + b` with `W` stored as `in x out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear<T> {
    pub weight: Array2<T>,
    pub bias: Array1<T>,
}

impl<T: Real> Linear<T> {
    pub fn zeros(input: usize, output: usize) -> Self {
        Self { weight: Array2::zeros((input, output)), bias: Array1::zeros(output) }
    }

    /// Weights uniform in `[-bound, bound]`, zero bias.
    pub fn uniform(input: usize, output: usize, bound: f64, rng: &mut Rng) -> Self {
        Self { weight: uniform_array((input, output), bound, rng), bias: Array1::zeros(output) }
    }

    /// Weights and bias uniform in `[-1/sqrt(in), 1/sqrt(in)]`.
    pub fn fan_in_uniform(input: usize, output: usize, rng: &mut Rng) -> Self {
        let bound = 1.0 / num_traits::Float::sqrt(input as f64);
        let weight = uniform_array((input, output), bound, rng);
        let bias = Array1::from_shape_simple_fn(output, || T::lit(rng.random_range(-bound..=bound)));
        Self { weight, bias }
    }

    pub fn input_dim(&self) -> usize {
        self.weight.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.ncols()
    }

    pub fn forward(&self, x: ArrayView2<T>) -> Result<Array2<T>> {
        if x.ncols() != self.input_dim() {
            return Err(Error::Shape(format!(
                "linear layer expects width {}, got {}",
                self.input_dim(),
                x.ncols()
            )));
        }
        let mut y = x.dot(&self.weight);
        y += &self.bias;
        Ok(y)
    }

    /// Accumulates into `grad` and returns the input gradient.
    pub fn backward(&self, x: ArrayView2<T>, dy: ArrayView2<T>, grad: &mut Self) -> Array2<T> {
        general_mat_mul(T::one(), &x.t(), &dy, T::one(), &mut grad.weight);
        grad.bias += &dy.sum_axis(Axis(0));
        dy.dot(&self.weight.t())
    }
}

impl<T: Real> Parameters<T> for Linear<T> {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(ParamView<'a, T>)) {
        leaf(f, prefix, "weight", ParamKind::Weight, &self.weight);
        leaf(f, prefix, "bias", ParamKind::Bias, &self.bias);
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, f: &mut dyn FnMut(ParamViewMut<'a, T>)) {
        leaf_mut(f, prefix, "weight", ParamKind::Weight, &mut self.weight);
        leaf_mut(f, prefix, "bias", ParamKind::Bias, &mut self.bias);
    }
}

/// Per-example feature normalization with learned gain and shift. Unlike batch
/// normalization it never mixes rows, so a forward pass over one example
/// matches the same example inside any batch.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerNorm<T> {
    pub gain: Array1<T>,
    pub shift: Array1<T>,
}

pub struct LayerNormCache<T> {
    normalized: Array2<T>,
    inv_std: Array1<T>,
}

impl<T: Real> LayerNorm<T> {
    pub const EPS: f64 = 1e-5;

    pub fn new(width: usize) -> Self {
        Self { gain: Array1::ones(width), shift: Array1::zeros(width) }
    }

    pub fn forward(&self, x: ArrayView2<T>) -> (Array2<T>, LayerNormCache<T>) {
        let n = T::from_usize(x.ncols()).unwrap();
        let eps = T::lit(Self::EPS);
        let mut normalized = x.to_owned();
        let mut inv_std = Array1::zeros(x.nrows());
        for (mut row, s) in normalized.outer_iter_mut().zip(inv_std.iter_mut()) {
            let mean = row.sum() / n;
            row.mapv_inplace(|v| v - mean);
            let var = row.iter().map(|&v| v * v).sum::<T>() / n;
            *s = T::one() / (var + eps).sqrt();
            let k = *s;
            row.mapv_inplace(|v| v * k);
        }
        let mut y = &normalized * &self.gain;
        y += &self.shift;
        (y, LayerNormCache { normalized, inv_std })
    }

    pub fn backward(&self, cache: &LayerNormCache<T>, dy: ArrayView2<T>, grad: &mut Self) -> Array2<T> {
        let xhat = &cache.normalized;
        grad.gain += &(&dy * xhat).sum_axis(Axis(0));
        grad.shift += &dy.sum_axis(Axis(0));
        let n = T::from_usize(dy.ncols()).unwrap();
        let mut dx = &dy * &self.gain;
        for ((mut row, xrow), &s) in dx.outer_iter_mut().zip(xhat.outer_iter()).zip(cache.inv_std.iter()) {
            let sum_d = row.sum();
            let sum_dx = row.iter().zip(xrow.iter()).map(|(&d, &x)| d * x).sum::<T>();
            Zip::from(&mut row).and(&xrow).for_each(|d, &x| {
                *d = s * (*d - sum_d / n - x * sum_dx / n);
            });
        }
        dx
    }
}

impl<T: Real> Parameters<T> for LayerNorm<T> {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(ParamView<'a, T>)) {
        leaf(f, prefix, "gain", ParamKind::Norm, &self.gain);
        leaf(f, prefix, "shift", ParamKind::Norm, &self.shift);
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, f: &mut dyn FnMut(ParamViewMut<'a, T>)) {
        leaf_mut(f, prefix, "gain", ParamKind::Norm, &mut self.gain);
        leaf_mut(f, prefix, "shift", ParamKind::Norm, &mut self.shift);
    }
}

/// Normalizes each example over all of its positions and channels (a single
/// group), followed by a per-channel gain and shift. Channels-last input.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleNorm<T> {
    pub gain: Array1<T>,
    pub shift: Array1<T>,
}

pub struct SampleNormCache<T> {
    normalized: Array4<T>,
    inv_std: Array1<T>,
}

impl<T: Real> SampleNorm<T> {
    pub const EPS: f64 = 1e-5;

    pub fn new(channels: usize) -> Self {
        Self { gain: Array1::ones(channels), shift: Array1::zeros(channels) }
    }

    pub fn forward(&self, x: Array4<T>) -> (Array4<T>, SampleNormCache<T>) {
        let eps = T::lit(Self::EPS);
        let mut normalized = x;
        let mut inv_std = Array1::zeros(normalized.dim().0);
        for (mut ex, s) in normalized.outer_iter_mut().zip(inv_std.iter_mut()) {
            let n = T::from_usize(ex.len()).unwrap();
            let mean = ex.sum() / n;
            ex.mapv_inplace(|v| v - mean);
            let var = ex.iter().map(|&v| v * v).sum::<T>() / n;
            *s = T::one() / (var + eps).sqrt();
            let k = *s;
            ex.mapv_inplace(|v| v * k);
        }
        let mut y = &normalized * &self.gain;
        y += &self.shift;
        (y, SampleNormCache { normalized, inv_std })
    }

    pub fn backward(&self, cache: &SampleNormCache<T>, dy: Array4<T>, grad: &mut Self) -> Array4<T> {
        let xhat = &cache.normalized;
        let c = self.gain.len();
        let rows = dy.len() / c;
        let prod = (&dy * xhat).into_shape_with_order((rows, c)).expect("contiguous");
        grad.gain += &prod.sum_axis(Axis(0));
        grad.shift += &dy.view().into_shape_with_order((rows, c)).expect("contiguous").sum_axis(Axis(0));
        let mut dx = dy * &self.gain;
        for ((mut d, x), &s) in dx.outer_iter_mut().zip(xhat.outer_iter()).zip(cache.inv_std.iter()) {
            let n = T::from_usize(d.len()).unwrap();
            let sum_d = d.sum();
            let sum_dx = d.iter().zip(x.iter()).map(|(&g, &v)| g * v).sum::<T>();
            Zip::from(&mut d).and(&x).for_each(|g, &v| {
                *g = s * (*g - sum_d / n - v * sum_dx / n);
            });
        }
        dx
    }
}

impl<T: Real> Parameters<T> for SampleNorm<T> {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(ParamView<'a, T>)) {
        leaf(f, prefix, "gain", ParamKind::Norm, &self.gain);
        leaf(f, prefix, "shift", ParamKind::Norm, &self.shift);
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, f: &mut dyn FnMut(ParamViewMut<'a, T>)) {
        leaf_mut(f, prefix, "gain", ParamKind::Norm, &mut self.gain);
        leaf_mut(f, prefix, "shift", ParamKind::Norm, &mut self.shift);
    }
}

/// 3x3 convolution with padding 1 over channels-last activations.
///
/// The kernel is stored unrolled as `(9 * in_channels) x out_channels`, rows
/// ordered `(ky, kx, in_channel)`, which is the im2col column layout.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d<T> {
    pub weight: Array2<T>,
    pub bias: Array1<T>,
    pub stride: usize,
}

pub struct ConvCache<T> {
    cols: Array2<T>,
    input_dims: (usize, usize, usize, usize),
}

const K: usize = 3;

impl<T: Real> Conv2d<T> {
    /// He-uniform weights, bias uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`.
    pub fn he_uniform(in_channels: usize, out_channels: usize, stride: usize, rng: &mut Rng) -> Self {
        let fan_in = (K * K * in_channels) as f64;
        let bound = num_traits::Float::sqrt(6.0 / fan_in);
        let weight = uniform_array((K * K * in_channels, out_channels), bound, rng);
        let b = 1.0 / num_traits::Float::sqrt(fan_in);
        let bias = Array1::from_shape_simple_fn(out_channels, || T::lit(rng.random_range(-b..=b)));
        Self { weight, bias, stride }
    }

    pub fn in_channels(&self) -> usize {
        self.weight.nrows() / (K * K)
    }

    pub fn out_channels(&self) -> usize {
        self.weight.ncols()
    }

    pub fn output_size(&self, input: usize) -> usize {
        (input + 2 - K) / self.stride + 1
    }

    fn im2col(&self, x: ArrayView4<T>) -> Array2<T> {
        let (b, h, w, c) = x.dim();
        let (ho, wo) = (self.output_size(h), self.output_size(w));
        let mut cols = Array2::<T>::zeros((b * ho * wo, K * K * c));
        let x = x.as_standard_layout();
        let src = x.as_slice().expect("standard layout");
        let dst = cols.as_slice_mut().expect("fresh array");
        let row_len = K * K * c;
        for n in 0..b {
            for oy in 0..ho {
                for ox in 0..wo {
                    let row = ((n * ho + oy) * wo + ox) * row_len;
                    for ky in 0..K {
                        let iy = (oy * self.stride + ky) as isize - 1;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        for kx in 0..K {
                            let ix = (ox * self.stride + kx) as isize - 1;
                            if ix < 0 || ix >= w as isize {
                                continue;
                            }
                            let s = ((n * h + iy as usize) * w + ix as usize) * c;
                            let d = row + (ky * K + kx) * c;
                            dst[d..d + c].copy_from_slice(&src[s..s + c]);
                        }
                    }
                }
            }
        }
        cols
    }

    fn col2im(&self, dcols: &Array2<T>, (b, h, w, c): (usize, usize, usize, usize)) -> Array4<T> {
        let (ho, wo) = (self.output_size(h), self.output_size(w));
        let mut dx = Array4::<T>::zeros((b, h, w, c));
        let dst = dx.as_slice_mut().expect("fresh array");
        let src = dcols.as_slice().expect("standard layout");
        let row_len = K * K * c;
        for n in 0..b {
            for oy in 0..ho {
                for ox in 0..wo {
                    let row = ((n * ho + oy) * wo + ox) * row_len;
                    for ky in 0..K {
                        let iy = (oy * self.stride + ky) as isize - 1;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        for kx in 0..K {
                            let ix = (ox * self.stride + kx) as isize - 1;
                            if ix < 0 || ix >= w as isize {
                                continue;
                            }
                            let d = ((n * h + iy as usize) * w + ix as usize) * c;
                            let s = row + (ky * K + kx) * c;
                            for (o, &g) in dst[d..d + c].iter_mut().zip(&src[s..s + c]) {
                                *o += g;
                            }
                        }
                    }
                }
            }
        }
        dx
    }

    /// Pre-activation output, channels-last.
    pub fn forward(&self, x: ArrayView4<T>) -> Result<(Array4<T>, ConvCache<T>)> {
        let dims = x.dim();
        if dims.3 != self.in_channels() {
            return Err(Error::Shape(format!(
                "convolution expects {} channels, got {}",
                self.in_channels(),
                dims.3
            )));
        }
        let cols = self.im2col(x);
        let mut y = cols.dot(&self.weight);
        y += &self.bias;
        let (ho, wo) = (self.output_size(dims.1), self.output_size(dims.2));
        let y = y
            .into_shape_with_order((dims.0, ho, wo, self.out_channels()))
            .expect("row count matches");
        Ok((y, ConvCache { cols, input_dims: dims }))
    }

    /// `dy` is the gradient w.r.t. the pre-activation output. Returns the
    /// input gradient only when asked.
    pub fn backward(
        &self,
        cache: &ConvCache<T>,
        dy: Array4<T>,
        grad: &mut Self,
        need_input_grad: bool,
    ) -> Option<Array4<T>> {
        let rows = cache.cols.nrows();
        let dy = dy
            .as_standard_layout()
            .into_owned()
            .into_shape_with_order((rows, self.out_channels()))
            .expect("row count matches");
        general_mat_mul(T::one(), &cache.cols.t(), &dy, T::one(), &mut grad.weight);
        grad.bias += &dy.sum_axis(Axis(0));
        need_input_grad.then(|| self.col2im(&dy.dot(&self.weight.t()), cache.input_dims))
    }
}

impl<T: Real> Parameters<T> for Conv2d<T> {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(ParamView<'a, T>)) {
        leaf(f, prefix, "weight", ParamKind::Weight, &self.weight);
        leaf(f, prefix, "bias", ParamKind::Bias, &self.bias);
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, f: &mut dyn FnMut(ParamViewMut<'a, T>)) {
        leaf_mut(f, prefix, "weight", ParamKind::Weight, &mut self.weight);
        leaf_mut(f, prefix, "bias", ParamKind::Bias, &mut self.bias);
    }
}
