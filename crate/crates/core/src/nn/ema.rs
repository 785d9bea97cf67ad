use alloc::format;

use ndarray::Zip;

use super::params::Parameters;
use crate::error::{Error, Result};
use crate::real::Real;

/// `target <- tau * target + (1 - tau) * online`, tensor by tensor.
pub fn ema_update<T: Real, M: Parameters<T>>(target: &mut M, online: &M, tau: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&tau) {
        return Err(Error::OutOfRange(format!("tau {tau} outside [0, 1]")));
    }
    let online = online.params("");
    let mut target = target.params_mut("");
    if online.len() != target.len()
        || online.iter().zip(&target).any(|(o, t)| o.value.shape() != t.value.shape())
    {
        return Err(Error::Shape("online and target parameters differ in shape".into()));
    }
    let keep = T::lit(tau);
    let mix = T::lit(1.0 - tau);
    for (t, o) in target.iter_mut().zip(&online) {
        Zip::from(&mut t.value).and(&o.value).for_each(|t, &o| *t = keep * *t + mix * o);
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TauMode {
    /// `1 - (1 - base) (cos(pi k / K) + 1) / 2`.
    Cosine,
    Constant,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TauSchedule {
    pub tau_base: f64,
    pub total_steps: u64,
    pub mode: TauMode,
}

impl TauSchedule {
    pub fn cosine(tau_base: f64, total_steps: u64) -> Self {
        Self { tau_base, total_steps, mode: TauMode::Cosine }
    }
}

pub fn tau_for_step(schedule: &TauSchedule, step: u64) -> Result<f64> {
    if !(0.0..=1.0).contains(&schedule.tau_base) {
        return Err(Error::OutOfRange(format!("tau_base {} outside [0, 1]", schedule.tau_base)));
    }
    if step > schedule.total_steps {
        return Err(Error::OutOfRange(format!(
            "step {step} beyond schedule length {}",
            schedule.total_steps
        )));
    }
    let base = schedule.tau_base;
    Ok(match schedule.mode {
        TauMode::Constant => base,
        TauMode::Cosine if schedule.total_steps == 0 => 1.0,
        TauMode::Cosine => {
            let progress = core::f64::consts::PI * step as f64 / schedule.total_steps as f64;
            let tau = 1.0 - (1.0 - base) * (num_traits::Float::cos(progress) + 1.0) / 2.0;
            tau.clamp(base, 1.0)
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Linear;
    use ndarray::{arr1, arr2};

    fn pair() -> (Linear<f64>, Linear<f64>) {
        let target = Linear { weight: arr2(&[[1.0, 2.0]]), bias: arr1(&[3.0, 4.0]) };
        let online = Linear { weight: arr2(&[[0.0, -2.0]]), bias: arr1(&[1.0, 0.5]) };
        (target, online)
    }

    #[test]
    fn tau_one_is_fixed_point() {
        let (mut target, online) = pair();
        let before = target.clone();
        ema_update(&mut target, &online, 1.0).unwrap();
        assert_eq!(target, before);
    }

    #[test]
    fn tau_zero_copies_online() {
        let (mut target, online) = pair();
        ema_update(&mut target, &online, 0.0).unwrap();
        assert_eq!(target, online);
    }

    #[test]
    fn scalar_arithmetic() {
        let mut target = Linear { weight: arr2(&[[1.0f64]]), bias: arr1(&[1.0]) };
        let online = Linear { weight: arr2(&[[0.0]]), bias: arr1(&[0.0]) };
        ema_update(&mut target, &online, 0.99).unwrap();
        assert!((target.weight[[0, 0]] - 0.99).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_tau_and_shapes() {
        let (mut target, online) = pair();
        assert!(ema_update(&mut target, &online, 1.5).is_err());
        let other = Linear::<f64>::zeros(2, 2);
        assert!(ema_update(&mut target, &other, 0.5).is_err());
    }

    #[test]
    fn cosine_schedule_endpoints() {
        let s = TauSchedule::cosine(0.996, 100);
        assert_eq!(tau_for_step(&s, 0).unwrap(), 0.996);
        assert_eq!(tau_for_step(&s, 100).unwrap(), 1.0);
        // (cos(pi/2) + 1) / 2 = 1/2, so tau = 1 - 0.004 / 2
        assert!((tau_for_step(&s, 50).unwrap() - 0.998).abs() < 1e-12);
        assert!(tau_for_step(&s, 101).is_err());
        let mut prev = 0.0;
        for k in 0..=100 {
            let t = tau_for_step(&s, k).unwrap();
            assert!(t >= prev && (0.996..=1.0).contains(&t));
            prev = t;
        }
    }

    #[test]
    fn constant_schedule() {
        let s = TauSchedule { tau_base: 0.99, total_steps: 10, mode: TauMode::Constant };
        assert_eq!(tau_for_step(&s, 10).unwrap(), 0.99);
    }
}
