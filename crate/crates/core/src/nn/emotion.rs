use alloc::format;

use ndarray::{Array2, ArrayView2};
use rand::Rng as _;

use super::params::{leaf, leaf_mut, ParamKind, ParamView, ParamViewMut, Parameters};
use crate::error::{Error, Result};
use crate::label::{EmotionLabel, NUM_CLASSES};
use crate::real::Real;
use crate::rng::Rng;

/// `D x C` matrix whose column `k` is the emotion vector of class `k`.
/// No bias term.
#[derive(Debug, Clone, PartialEq)]
pub struct EmotionMatrix<T> {
    pub weights: Array2<T>,
}

impl<T: Real> EmotionMatrix<T> {
    pub fn new(weights: Array2<T>) -> Result<Self> {
        if weights.ncols() != NUM_CLASSES {
            return Err(Error::Shape(format!(
                "emotion matrix needs {NUM_CLASSES} columns, got {}",
                weights.ncols()
            )));
        }
        if !weights.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("emotion matrix"));
        }
        Ok(Self { weights })
    }

    /// Entries uniform with variance `1 / D`, so columns start near unit norm.
    pub fn random(dim: usize, rng: &mut Rng) -> Self {
        let bound = num_traits::Float::sqrt(3.0 / dim as f64);
        Self {
            weights: Array2::from_shape_simple_fn((dim, NUM_CLASSES), || {
                T::lit(rng.random_range(-bound..=bound))
            }),
        }
    }

    pub fn dim(&self) -> usize {
        self.weights.nrows()
    }
}

impl<T: Real> Parameters<T> for EmotionMatrix<T> {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(ParamView<'a, T>)) {
        leaf(f, prefix, "weights", ParamKind::Weight, &self.weights);
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, f: &mut dyn FnMut(ParamViewMut<'a, T>)) {
        leaf_mut(f, prefix, "weights", ParamKind::Weight, &mut self.weights);
    }
}

fn check_width<T>(v: &ArrayView2<T>, w: &Array2<T>) -> Result<()> {
    if v.ncols() != w.nrows() {
        return Err(Error::Shape(format!(
            "vectors of width {} against an emotion matrix with {} rows",
            v.ncols(),
            w.nrows()
        )));
    }
    Ok(())
}

/// `logits = v W_E`.
pub fn emotion_logits<T: Real>(w: &EmotionMatrix<T>, v: ArrayView2<T>) -> Result<Array2<T>> {
    check_width(&v, &w.weights)?;
    Ok(v.dot(&w.weights))
}

/// Row `i` minus the emotion vector of `labels[i]`.
pub fn subtract_emotion_vector<T: Real>(
    v: ArrayView2<T>,
    w: &EmotionMatrix<T>,
    labels: &[EmotionLabel],
) -> Result<Array2<T>> {
    check_width(&v, &w.weights)?;
    if labels.len() != v.nrows() {
        return Err(Error::Shape(format!("{} labels for {} rows", labels.len(), v.nrows())));
    }
    let mut out = v.to_owned();
    for (mut row, label) in out.outer_iter_mut().zip(labels) {
        row -= &w.weights.column(label.index());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_for;

    fn identity() -> EmotionMatrix<f64> {
        EmotionMatrix::new(Array2::eye(6)).unwrap()
    }

    fn basis(k: usize) -> Array2<f64> {
        Array2::from_shape_fn((1, 6), |(_, j)| if j == k { 1.0 } else { 0.0 })
    }

    #[test]
    fn identity_logits() {
        assert_eq!(emotion_logits(&identity(), basis(2).view()).unwrap(), basis(2));
        let zero = Array2::<f64>::zeros((3, 6));
        assert_eq!(emotion_logits(&identity(), zero.view()).unwrap(), zero);
    }

    #[test]
    fn subtracting_own_basis_vector_gives_zero() {
        let out = subtract_emotion_vector(basis(3).view(), &identity(), &[EmotionLabel::HAPPINESS]).unwrap();
        assert!(out.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn fear_uses_column_two() {
        let mut rng = rng_for(5, &[]);
        let w = EmotionMatrix::<f64>::random(8, &mut rng);
        let v = Array2::zeros((1, 8));
        let out = subtract_emotion_vector(v.view(), &w, &[EmotionLabel::FEAR]).unwrap();
        for d in 0..8 {
            assert_eq!(out[[0, d]], -w.weights[[d, 2]]);
        }
    }

    #[test]
    fn dimension_errors() {
        let v = Array2::<f64>::zeros((2, 5));
        assert!(emotion_logits(&identity(), v.view()).is_err());
        let v = Array2::<f64>::zeros((2, 6));
        assert!(subtract_emotion_vector(v.view(), &identity(), &[EmotionLabel::ANGER]).is_err());
        assert!(EmotionMatrix::<f64>::new(Array2::zeros((6, 5))).is_err());
    }
}
