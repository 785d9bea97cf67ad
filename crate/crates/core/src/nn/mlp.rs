use ndarray::{Array2, ArrayView2};

use super::layers::{relu, relu_backward, LayerNorm, LayerNormCache, Linear};
use super::params::{child, ParamView, ParamViewMut, Parameters};
use crate::error::Result;
use crate::real::Real;
use crate::rng::Rng;

/// Two-layer head: Linear, LayerNorm, ReLU, Linear.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp<T> {
    pub hidden: Linear<T>,
    pub norm: LayerNorm<T>,
    pub output: Linear<T>,
}

pub struct MlpCache<T> {
    input: Array2<T>,
    norm: LayerNormCache<T>,
    activated: Array2<T>,
}

impl<T: Real> Mlp<T> {
    pub fn new(input: usize, hidden: usize, output: usize, rng: &mut Rng) -> Self {
        Self {
            hidden: Linear::fan_in_uniform(input, hidden, rng),
            norm: LayerNorm::new(hidden),
            output: Linear::fan_in_uniform(hidden, output, rng),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.hidden.input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.output.output_dim()
    }

    pub fn forward(&self, x: ArrayView2<T>) -> Result<(Array2<T>, MlpCache<T>)> {
        let h = self.hidden.forward(x)?;
        let (mut a, norm) = self.norm.forward(h.view());
        relu(&mut a);
        let y = self.output.forward(a.view())?;
        Ok((y, MlpCache { input: x.to_owned(), norm, activated: a }))
    }

    pub fn backward(&self, cache: &MlpCache<T>, dy: ArrayView2<T>, grad: &mut Self) -> Array2<T> {
        let mut da = self.output.backward(cache.activated.view(), dy, &mut grad.output);
        relu_backward(&cache.activated, &mut da);
        let dh = self.norm.backward(&cache.norm, da.view(), &mut grad.norm);
        self.hidden.backward(cache.input.view(), dh.view(), &mut grad.hidden)
    }
}

impl<T: Real> Parameters<T> for Mlp<T> {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(ParamView<'a, T>)) {
        self.hidden.visit(&child(prefix, "hidden"), f);
        self.norm.visit(&child(prefix, "norm"), f);
        self.output.visit(&child(prefix, "output"), f);
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, f: &mut dyn FnMut(ParamViewMut<'a, T>)) {
        self.hidden.visit_mut(&child(prefix, "hidden"), f);
        self.norm.visit_mut(&child(prefix, "norm"), f);
        self.output.visit_mut(&child(prefix, "output"), f);
    }
}
