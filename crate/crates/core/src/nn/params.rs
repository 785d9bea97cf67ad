use alloc::string::String;
use alloc::vec::Vec;

use ndarray::{ArrayViewD, ArrayViewMutD};

use crate::real::Real;

/// How optimizers treat a tensor: weights get decay and trust scaling, biases
/// and normalization gains do not.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    Weight,
    Bias,
    Norm,
}

impl ParamKind {
    pub fn is_excluded_from_decay(self) -> bool {
        !matches!(self, ParamKind::Weight)
    }
}

pub struct ParamView<'a, T> {
    pub path: String,
    pub kind: ParamKind,
    pub value: ArrayViewD<'a, T>,
}

pub struct ParamViewMut<'a, T> {
    pub path: String,
    pub kind: ParamKind,
    pub value: ArrayViewMutD<'a, T>,
}

fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.into()
    } else {
        alloc::format!("{prefix}.{name}")
    }
}

/// Visitor over the named tensors of a module, in a stable order.
///
/// Gradients are stored in a module of the same type, so walking a module and
/// its gradient side by side always pairs matching tensors.
pub trait Parameters<T: Real> {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(ParamView<'a, T>));

    fn visit_mut<'a>(&'a mut self, prefix: &str, f: &mut dyn FnMut(ParamViewMut<'a, T>));

    fn params<'a>(&'a self, prefix: &str) -> Vec<ParamView<'a, T>> {
        let mut out = Vec::new();
        self.visit(prefix, &mut |p| out.push(p));
        out
    }

    fn params_mut<'a>(&'a mut self, prefix: &str) -> Vec<ParamViewMut<'a, T>> {
        let mut out = Vec::new();
        self.visit_mut(prefix, &mut |p| out.push(p));
        out
    }

    fn num_scalars(&self) -> usize {
        let mut n = 0;
        self.visit("", &mut |p| n += p.value.len());
        n
    }

    fn zero_(&mut self) {
        self.visit_mut("", &mut |mut p| p.value.fill(T::zero()));
    }

    fn zeros_like(&self) -> Self
    where
        Self: Clone + Sized,
    {
        let mut g = self.clone();
        g.zero_();
        g
    }

    fn all_finite(&self) -> bool {
        let mut ok = true;
        self.visit("", &mut |p| ok &= p.value.iter().all(|v| v.is_finite()));
        ok
    }
}

pub(crate) fn leaf<'a, T, D: ndarray::Dimension>(
    f: &mut dyn FnMut(ParamView<'a, T>),
    prefix: &str,
    name: &str,
    kind: ParamKind,
    a: &'a ndarray::Array<T, D>,
) {
    f(ParamView { path: join(prefix, name), kind, value: a.view().into_dyn() });
}

pub(crate) fn leaf_mut<'a, T, D: ndarray::Dimension>(
    f: &mut dyn FnMut(ParamViewMut<'a, T>),
    prefix: &str,
    name: &str,
    kind: ParamKind,
    a: &'a mut ndarray::Array<T, D>,
) {
    f(ParamViewMut { path: join(prefix, name), kind, value: a.view_mut().into_dyn() });
}

pub(crate) fn child(prefix: &str, name: &str) -> String {
    join(prefix, name)
}
