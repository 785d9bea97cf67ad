//! LARS, momentum SGD and Adam over the named tensors of a module.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use ndarray::{ArrayD, Zip};

use crate::error::{Error, Result};
use crate::nn::{ParamView, ParamViewMut};
use crate::real::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimizerKind {
    Lars,
    MomentumSgd,
    Adam,
}

impl OptimizerKind {
    pub fn as_str(self) -> &'static str {
        match self {
            OptimizerKind::Lars => "lars",
            OptimizerKind::MomentumSgd => "momentum_sgd",
            OptimizerKind::Adam => "adam",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "lars" => Ok(Self::Lars),
            "momentum_sgd" => Ok(Self::MomentumSgd),
            "adam" => Ok(Self::Adam),
            other => Err(Error::Config(format!("unknown optimizer {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub weight_decay: f64,
    pub momentum: f64,
    /// Added to the update norm in the LARS trust ratio.
    pub lars_eps: f64,
    /// Multiplier on the LARS trust ratio.
    pub trust_coefficient: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
}

impl OptimizerConfig {
    pub fn lars(weight_decay: f64) -> Self {
        Self {
            kind: OptimizerKind::Lars,
            weight_decay,
            momentum: 0.9,
            lars_eps: 1e-9,
            trust_coefficient: 1.0,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
        }
    }

    pub fn momentum_sgd(weight_decay: f64) -> Self {
        Self { kind: OptimizerKind::MomentumSgd, ..Self::lars(weight_decay) }
    }

    pub fn adam() -> Self {
        Self { kind: OptimizerKind::Adam, ..Self::lars(0.0) }
    }
}

/// Per-tensor buffers. `first` is the momentum (or Adam first moment),
/// `second` the Adam second moment.
#[derive(Debug, Clone, PartialEq)]
pub struct Slot<T> {
    pub path: String,
    pub first: ArrayD<T>,
    pub second: Option<ArrayD<T>>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct OptimizerState<T> {
    pub slots: Vec<Slot<T>>,
    /// Number of completed steps.
    pub steps: u64,
}

impl<T: Real> OptimizerState<T> {
    pub fn new() -> Self {
        Self { slots: Vec::new(), steps: 0 }
    }

    fn ensure_slots(&mut self, params: &[ParamViewMut<'_, T>], with_second: bool) -> Result<()> {
        if self.slots.is_empty() {
            self.slots = params
                .iter()
                .map(|p| Slot {
                    path: p.path.clone(),
                    first: ArrayD::zeros(p.value.raw_dim()),
                    second: with_second.then(|| ArrayD::zeros(p.value.raw_dim())),
                })
                .collect();
            return Ok(());
        }
        if self.slots.len() != params.len()
            || self.slots.iter().zip(params).any(|(s, p)| s.first.shape() != p.value.shape())
        {
            return Err(Error::Shape("optimizer buffers do not mirror the parameters".into()));
        }
        Ok(())
    }
}

fn check_grads<T: Real>(params: &[ParamViewMut<'_, T>], grads: &[ParamView<'_, T>]) -> Result<()> {
    if params.len() != grads.len()
        || params.iter().zip(grads).any(|(p, g)| p.value.shape() != g.value.shape())
    {
        return Err(Error::Shape("gradients do not mirror the parameters".into()));
    }
    if grads.iter().any(|g| !g.value.iter().all(|v| v.is_finite())) {
        return Err(Error::NonFinite("gradients"));
    }
    Ok(())
}

fn norm<T: Real>(a: impl IntoIterator<Item = T>) -> f64 {
    num_traits::Float::sqrt(a.into_iter().map(|v| v * v).sum::<T>().as_f64())
}

fn momentum_family<T: Real>(
    state: &mut OptimizerState<T>,
    mut params: Vec<ParamViewMut<'_, T>>,
    grads: &[ParamView<'_, T>],
    lr: f64,
    cfg: &OptimizerConfig,
    layer_adaptive: bool,
) -> Result<()> {
    check_grads(&params, grads)?;
    state.ensure_slots(&params, false)?;
    let momentum = T::lit(cfg.momentum);
    let lr = T::lit(lr);
    for ((p, g), slot) in params.iter_mut().zip(grads).zip(&mut state.slots) {
        let decay = !p.kind.is_excluded_from_decay();
        let wd = T::lit(if decay { cfg.weight_decay } else { 0.0 });
        let mut update = g.value.to_owned();
        if decay && cfg.weight_decay != 0.0 {
            update.scaled_add(wd, &p.value);
        }
        let trust = if layer_adaptive && decay {
            let pn = norm(p.value.iter().copied());
            let un = norm(update.iter().copied());
            if pn > 0.0 && un > 0.0 {
                cfg.trust_coefficient * pn / (un + cfg.lars_eps)
            } else {
                1.0
            }
        } else {
            1.0
        };
        let trust = T::lit(trust);
        Zip::from(&mut slot.first).and(&update).for_each(|v, &u| *v = momentum * *v + trust * u);
        Zip::from(&mut p.value).and(&slot.first).for_each(|w, &v| *w -= lr * v);
    }
    state.steps += 1;
    Ok(())
}

/// One LARS step. For each weight tensor the update `g + wd p` is rescaled by
/// the trust ratio `eta |p| / (|g + wd p| + eps)` (1 when either norm is zero)
/// and folded into the momentum buffer; biases and normalization gains skip
/// both decay and trust scaling.
pub fn lars_step<T: Real>(
    state: &mut OptimizerState<T>,
    params: Vec<ParamViewMut<'_, T>>,
    grads: &[ParamView<'_, T>],
    lr: f64,
    cfg: &OptimizerConfig,
) -> Result<()> {
    momentum_family(state, params, grads, lr, cfg, true)
}

/// Heavy-ball SGD with decoupled-from-bias weight decay.
pub fn momentum_sgd_step<T: Real>(
    state: &mut OptimizerState<T>,
    params: Vec<ParamViewMut<'_, T>>,
    grads: &[ParamView<'_, T>],
    lr: f64,
    cfg: &OptimizerConfig,
) -> Result<()> {
    momentum_family(state, params, grads, lr, cfg, false)
}

pub fn adam_step<T: Real>(
    state: &mut OptimizerState<T>,
    mut params: Vec<ParamViewMut<'_, T>>,
    grads: &[ParamView<'_, T>],
    lr: f64,
    cfg: &OptimizerConfig,
) -> Result<()> {
    check_grads(&params, grads)?;
    state.ensure_slots(&params, true)?;
    let t = state.steps + 1;
    let (b1, b2) = (cfg.beta1, cfg.beta2);
    let correction1 = 1.0 - num_traits::Float::powi(b1, t as i32);
    let correction2 = 1.0 - num_traits::Float::powi(b2, t as i32);
    let step_size = T::lit(lr / correction1);
    let correction2 = T::lit(correction2);
    let (b1, b2, eps) = (T::lit(b1), T::lit(b2), T::lit(cfg.adam_eps));
    let wd = T::lit(cfg.weight_decay);
    for ((p, g), slot) in params.iter_mut().zip(grads).zip(&mut state.slots) {
        let second = slot.second.as_mut().ok_or_else(|| Error::Shape("adam state lacks second moments".into()))?;
        let decay = cfg.weight_decay != 0.0 && !p.kind.is_excluded_from_decay();
        Zip::from(&mut p.value)
            .and(&g.value)
            .and(&mut slot.first)
            .and(second)
            .for_each(|w, &g, m, v| {
                let g = if decay { g + wd * *w } else { g };
                *m = b1 * *m + (T::one() - b1) * g;
                *v = b2 * *v + (T::one() - b2) * g * g;
                *w -= step_size * *m / ((*v / correction2).sqrt() + eps);
            });
    }
    state.steps = t;
    Ok(())
}

/// Dispatch on `cfg.kind`.
pub fn optimizer_step<T: Real>(
    state: &mut OptimizerState<T>,
    params: Vec<ParamViewMut<'_, T>>,
    grads: &[ParamView<'_, T>],
    lr: f64,
    cfg: &OptimizerConfig,
) -> Result<()> {
    match cfg.kind {
        OptimizerKind::Lars => lars_step(state, params, grads, lr, cfg),
        OptimizerKind::MomentumSgd => momentum_sgd_step(state, params, grads, lr, cfg),
        OptimizerKind::Adam => adam_step(state, params, grads, lr, cfg),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Linear, Parameters};
    use ndarray::{arr1, arr2};

    fn scalar(w: f64) -> Linear<f64> {
        Linear { weight: arr2(&[[w]]), bias: arr1(&[0.0]) }
    }

    #[test]
    fn worked_scalar_example() {
        let mut p = scalar(2.0);
        let g = Linear { weight: arr2(&[[1.0]]), bias: arr1(&[0.0]) };
        let mut st = OptimizerState::new();
        lars_step(&mut st, p.params_mut(""), &g.params(""), 0.1, &OptimizerConfig::lars(0.0)).unwrap();
        // trust 2 / 1, update 0.1 * 2 * 1
        assert!((p.weight[[0, 0]] - 1.8).abs() < 1e-9);
    }

    #[test]
    fn zero_grads_leave_params() {
        let mut p = Linear { weight: arr2(&[[1.0, -2.0], [0.5, 3.0]]), bias: arr1(&[0.1, 0.2]) };
        let before = p.clone();
        let g = p.zeros_like();
        let mut st = OptimizerState::new();
        for _ in 0..3 {
            lars_step(&mut st, p.params_mut(""), &g.params(""), 0.2, &OptimizerConfig::lars(0.0)).unwrap();
        }
        assert_eq!(p, before);
    }

    #[test]
    fn non_finite_grads_rejected_without_mutation() {
        let mut p = scalar(1.0);
        let g = Linear { weight: arr2(&[[f64::INFINITY]]), bias: arr1(&[0.0]) };
        let mut st = OptimizerState::new();
        let err = lars_step(&mut st, p.params_mut(""), &g.params(""), 0.1, &OptimizerConfig::lars(0.0));
        assert_eq!(err, Err(Error::NonFinite("gradients")));
        assert_eq!(p, scalar(1.0));
    }

    #[test]
    fn bias_is_not_trust_scaled() {
        let mut p = Linear { weight: arr2(&[[0.0f64]]), bias: arr1(&[5.0]) };
        let g = Linear { weight: arr2(&[[0.0]]), bias: arr1(&[1.0]) };
        let mut st = OptimizerState::new();
        lars_step(&mut st, p.params_mut(""), &g.params(""), 0.1, &OptimizerConfig::lars(0.5)).unwrap();
        assert!((p.bias[0] - 4.9).abs() < 1e-12);
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        let mut p = scalar(1.0);
        let g = Linear { weight: arr2(&[[0.3]]), bias: arr1(&[-2.0]) };
        let mut st = OptimizerState::new();
        adam_step(&mut st, p.params_mut(""), &g.params(""), 0.01, &OptimizerConfig::adam()).unwrap();
        // bias-corrected first step is lr * sign(g) up to eps
        assert!((p.weight[[0, 0]] - 0.99).abs() < 1e-6);
        assert!((p.bias[0] - 0.01).abs() < 1e-6);
        assert_eq!(st.steps, 1);
    }

    #[test]
    fn zero_learning_rate_is_noop() {
        let mut p = scalar(1.5);
        let g = Linear { weight: arr2(&[[0.7]]), bias: arr1(&[0.2]) };
        for cfg in [OptimizerConfig::lars(1e-3), OptimizerConfig::momentum_sgd(1e-3), OptimizerConfig::adam()] {
            let mut st = OptimizerState::new();
            optimizer_step(&mut st, p.params_mut(""), &g.params(""), 0.0, &cfg).unwrap();
            assert_eq!(p, scalar(1.5));
        }
    }
}
