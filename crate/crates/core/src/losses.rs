//! Pre-training objectives: cross-entropy on emotion logits, the L1
//! orthogonality penalty on the emotion matrix, the normalized-MSE bootstrap
//! loss, and their symmetrized sum.
//!
//! All batch losses are means over the batch. Each `*_with_grad` variant
//! returns the analytic gradient alongside the value.

use alloc::format;

use ndarray::{Array2, ArrayView2, Zip};

use crate::error::{Error, Result};
use crate::label::{EmotionLabel, NUM_CLASSES};
use crate::nn::{emotion_logits, subtract_emotion_vector, EmotionMatrix};
use crate::real::Real;

const MIN_NORM: f64 = 1e-12;

fn check_labels<T>(rows: &ArrayView2<T>, labels: &[EmotionLabel]) -> Result<()> {
    if rows.nrows() != labels.len() {
        return Err(Error::Shape(format!("{} labels for {} rows", labels.len(), rows.nrows())));
    }
    if rows.nrows() == 0 {
        return Err(Error::Empty("loss batch"));
    }
    Ok(())
}

/// Mean negative log-softmax probability of the true class.
pub fn classify_loss<T: Real>(logits: ArrayView2<T>, labels: &[EmotionLabel]) -> Result<T> {
    classify_loss_with_grad(logits, labels).map(|(l, _)| l)
}

pub fn classify_loss_with_grad<T: Real>(
    logits: ArrayView2<T>,
    labels: &[EmotionLabel],
) -> Result<(T, Array2<T>)> {
    check_labels(&logits, labels)?;
    if logits.ncols() != NUM_CLASSES {
        return Err(Error::Shape(format!("{} logits per row, expected {NUM_CLASSES}", logits.ncols())));
    }
    if !logits.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("classification logits"));
    }
    let n = T::from_usize(labels.len()).unwrap();
    let mut grad = Array2::zeros(logits.raw_dim());
    let mut total = T::zero();
    for ((row, mut g), label) in logits.outer_iter().zip(grad.outer_iter_mut()).zip(labels) {
        let max = row.fold(T::neg_infinity(), |m, &v| m.max(v));
        let sum_exp = row.iter().map(|&v| (v - max).exp()).sum::<T>();
        let log_norm = max + sum_exp.ln();
        total += log_norm - row[label.index()];
        Zip::from(&mut g).and(&row).for_each(|g, &v| *g = (v - log_norm).exp() / n);
        g[label.index()] -= T::one() / n;
    }
    Ok((total / n, grad))
}

fn orthogonality_residual<T: Real>(w: ArrayView2<T>) -> Result<Array2<T>> {
    if !w.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("emotion matrix"));
    }
    let mut g = w.t().dot(&w);
    for i in 0..g.nrows() {
        g[[i, i]] -= T::one();
    }
    Ok(g)
}

/// `sum_ij |W^T W - I|_ij`.
pub fn orthogonal_loss<T: Real>(w: ArrayView2<T>) -> Result<T> {
    Ok(orthogonality_residual(w)?.iter().map(|v| v.abs()).sum())
}

/// Subgradient uses sign 0 at exactly-zero residual entries.
pub fn orthogonal_loss_with_grad<T: Real>(w: ArrayView2<T>) -> Result<(T, Array2<T>)> {
    let g = orthogonality_residual(w)?;
    let loss = g.iter().map(|v| v.abs()).sum();
    let sign = g.mapv(|v| {
        if v > T::zero() {
            T::one()
        } else if v < T::zero() {
            -T::one()
        } else {
            T::zero()
        }
    });
    // d/dW sum |W^T W - I| = W (S + S^T), and S is symmetric here.
    let grad = w.dot(&sign) * T::lit(2.0);
    Ok((loss, grad))
}

fn check_pair<T: Real>(a: &ArrayView2<T>, b: &ArrayView2<T>) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::Shape(format!("bootstrap pair {:?} vs {:?}", a.dim(), b.dim())));
    }
    if a.nrows() == 0 {
        return Err(Error::Empty("loss batch"));
    }
    Ok(())
}

fn row_norm<T: Real>(row: ndarray::ArrayView1<T>, what: &str, i: usize) -> Result<T> {
    let norm = row.iter().map(|&v| v * v).sum::<T>().sqrt();
    if norm.as_f64().is_nan() || norm.as_f64() < MIN_NORM {
        return Err(Error::Degenerate(format!("{what} row {i} has norm {norm}")));
    }
    Ok(norm)
}

/// Mean of `2 - 2 cos(q, z)` over rows. Range `[0, 4]`.
pub fn byol_loss<T: Real>(q: ArrayView2<T>, z: ArrayView2<T>) -> Result<T> {
    byol_loss_with_grad(q, z).map(|(l, _)| l)
}

/// Gradient with respect to `q` only; `z` is the stop-gradient target.
pub fn byol_loss_with_grad<T: Real>(q: ArrayView2<T>, z: ArrayView2<T>) -> Result<(T, Array2<T>)> {
    check_pair(&q, &z)?;
    let n = T::from_usize(q.nrows()).unwrap();
    let two = T::lit(2.0);
    let mut total = T::zero();
    let mut grad = Array2::zeros(q.raw_dim());
    for (i, ((qr, zr), mut g)) in q.outer_iter().zip(z.outer_iter()).zip(grad.outer_iter_mut()).enumerate() {
        let qn = row_norm(qr, "prediction", i)?;
        let zn = row_norm(zr, "target projection", i)?;
        let dot = qr.dot(&zr);
        let cos = dot / (qn * zn);
        total += two - two * cos;
        // d cos / dq = z / (|q||z|) - cos q / |q|^2
        Zip::from(&mut g).and(&qr).and(&zr).for_each(|g, &qv, &zv| {
            *g = -two * (zv / (qn * zn) - cos * qv / (qn * qn)) / n;
        });
    }
    Ok((total / n, grad))
}

/// Unweighted loss components and their weighted total.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossBreakdown {
    pub byol: f64,
    pub byol_swapped: f64,
    pub classify: f64,
    pub classify_swapped: f64,
    pub orthogonal: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn is_finite(&self) -> bool {
        [self.byol, self.byol_swapped, self.classify, self.classify_swapped, self.orthogonal, self.total]
            .iter()
            .all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub byol: f64,
    pub classify: f64,
    pub orthogonal: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { byol: 1.0, classify: 1.0, orthogonal: 1.0 }
    }
}

/// Where the classification gradient is allowed to flow.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClassifyBackprop {
    /// Into the emotion matrix and back through q, g and h.
    Full,
    /// Into the emotion matrix only.
    EmotionMatrixOnly,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ByelOptions {
    pub weights: LossWeights,
    /// Subtract the label's emotion vector before the bootstrap loss. Off
    /// turns the objective into plain BYOL plus the (weighted) auxiliaries.
    pub subtract: bool,
    /// Block the bootstrap-loss gradient into the subtracted emotion vector.
    pub stop_grad_emotion_vector: bool,
    pub classify_backprop: ClassifyBackprop,
}

impl Default for ByelOptions {
    fn default() -> Self {
        Self {
            weights: LossWeights::default(),
            subtract: true,
            stop_grad_emotion_vector: true,
            classify_backprop: ClassifyBackprop::Full,
        }
    }
}

impl ByelOptions {
    /// The BYOL ablation: identity subtraction, no auxiliary losses.
    pub fn byol() -> Self {
        Self {
            weights: LossWeights { byol: 1.0, classify: 0.0, orthogonal: 0.0 },
            subtract: false,
            ..Self::default()
        }
    }
}

/// Gradients of the total with respect to both online predictions and W_E.
#[derive(Debug, Clone)]
pub struct ByelGrads<T> {
    pub d_prediction_v1: Array2<T>,
    pub d_prediction_v2: Array2<T>,
    pub d_emotion: Array2<T>,
}

pub struct ByelInputs<'a, T> {
    /// q(z) of view 1 and view 2 from the online branch.
    pub online_v1: ArrayView2<'a, T>,
    pub online_v2: ArrayView2<'a, T>,
    /// z' of view 1 and view 2 from the target branch.
    pub target_v1: ArrayView2<'a, T>,
    pub target_v2: ArrayView2<'a, T>,
}

/// Symmetrized total with default options.
pub fn byel_total<T: Real>(
    online_v1: ArrayView2<T>,
    target_v2: ArrayView2<T>,
    online_v2: ArrayView2<T>,
    target_v1: ArrayView2<T>,
    labels: &[EmotionLabel],
    w: &EmotionMatrix<T>,
) -> Result<LossBreakdown> {
    let inputs = ByelInputs { online_v1, online_v2, target_v1, target_v2 };
    byel_forward_backward(&inputs, labels, w, &ByelOptions::default()).map(|(b, _)| b)
}

pub fn byel_forward_backward<T: Real>(
    inputs: &ByelInputs<'_, T>,
    labels: &[EmotionLabel],
    w: &EmotionMatrix<T>,
    options: &ByelOptions,
) -> Result<(LossBreakdown, ByelGrads<T>)> {
    let d = w.dim();
    for v in [&inputs.online_v1, &inputs.online_v2, &inputs.target_v1, &inputs.target_v2] {
        if v.ncols() != d {
            return Err(Error::Shape(format!("branch width {} vs emotion dim {d}", v.ncols())));
        }
        check_labels(v, labels)?;
    }
    let wt = &options.weights;
    let mut d_emotion = Array2::<T>::zeros(w.weights.raw_dim());

    let remove = |v: ArrayView2<T>| -> Result<Array2<T>> {
        if options.subtract {
            subtract_emotion_vector(v, w, labels)
        } else {
            Ok(v.to_owned())
        }
    };
    let q1 = remove(inputs.online_v1)?;
    let q2 = remove(inputs.online_v2)?;
    let z1 = remove(inputs.target_v1)?;
    let z2 = remove(inputs.target_v2)?;

    let (byol, mut d_prediction_v1) = byol_loss_with_grad(q1.view(), z2.view())?;
    let (byol_swapped, mut d_prediction_v2) = byol_loss_with_grad(q2.view(), z1.view())?;
    let byol_w = T::lit(wt.byol);
    d_prediction_v1 *= byol_w;
    d_prediction_v2 *= byol_w;
    if options.subtract && !options.stop_grad_emotion_vector {
        // q_bar = q - w_idx, so the bootstrap gradient reaches column idx negated.
        for dq in [&d_prediction_v1, &d_prediction_v2] {
            for (row, label) in dq.outer_iter().zip(labels) {
                let mut col = d_emotion.column_mut(label.index());
                col -= &row;
            }
        }
    }

    let mut classify_branch = |v: ArrayView2<T>, dq: &mut Array2<T>| -> Result<f64> {
        let logits = emotion_logits(w, v)?;
        let (loss, dlogits) = classify_loss_with_grad(logits.view(), labels)?;
        if wt.classify != 0.0 {
            let dlogits = dlogits * T::lit(wt.classify);
            d_emotion += &v.t().dot(&dlogits);
            if options.classify_backprop == ClassifyBackprop::Full {
                *dq += &dlogits.dot(&w.weights.t());
            }
        }
        Ok(loss.as_f64())
    };
    let classify = classify_branch(inputs.online_v1, &mut d_prediction_v1)?;
    let classify_swapped = classify_branch(inputs.online_v2, &mut d_prediction_v2)?;

    let (orthogonal, d_orth) = orthogonal_loss_with_grad(w.weights.view())?;
    if wt.orthogonal != 0.0 {
        d_emotion.scaled_add(T::lit(wt.orthogonal), &d_orth);
    }

    let (byol, byol_swapped, orthogonal) = (byol.as_f64(), byol_swapped.as_f64(), orthogonal.as_f64());
    let total = wt.byol * (byol + byol_swapped)
        + wt.classify * (classify + classify_swapped)
        + wt.orthogonal * orthogonal;
    let breakdown = LossBreakdown { byol, byol_swapped, classify, classify_swapped, orthogonal, total };
    Ok((breakdown, ByelGrads { d_prediction_v1, d_prediction_v2, d_emotion }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::arr2;

    fn labels(n: usize) -> alloc::vec::Vec<EmotionLabel> {
        (0..n).map(|i| EmotionLabel::try_from(i % NUM_CLASSES).unwrap()).collect()
    }

    #[test]
    fn uniform_logits_give_ln6() {
        let logits = Array2::<f64>::zeros((4, 6));
        let l = classify_loss(logits.view(), &labels(4)).unwrap();
        assert!((l - 6f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn saturated_logit_gives_zero_loss() {
        let mut logits = Array2::<f64>::zeros((1, 6));
        logits[[0, 0]] = 1000.0;
        let l = classify_loss(logits.view(), &labels(1)).unwrap();
        assert!(l.abs() < 1e-12);
    }

    #[test]
    fn non_finite_logits_rejected() {
        let mut logits = Array2::<f64>::zeros((1, 6));
        logits[[0, 2]] = f64::NAN;
        assert_eq!(classify_loss(logits.view(), &labels(1)), Err(Error::NonFinite("classification logits")));
    }

    #[test]
    fn orthogonal_identity_and_double() {
        let eye = Array2::<f64>::eye(6);
        assert_eq!(orthogonal_loss(eye.view()).unwrap(), 0.0);
        let twice = &eye * 2.0;
        assert_eq!(orthogonal_loss(twice.view()).unwrap(), 18.0);
    }

    #[test]
    fn byol_reference_values() {
        let a = arr2(&[[1.0f64, 0.0]]);
        let b = arr2(&[[0.0f64, 1.0]]);
        let c = arr2(&[[-1.0f64, 0.0]]);
        assert!((byol_loss(a.view(), a.view()).unwrap()).abs() < 1e-12);
        assert!((byol_loss(a.view(), b.view()).unwrap() - 2.0).abs() < 1e-12);
        assert!((byol_loss(a.view(), c.view()).unwrap() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn byol_zero_row_is_degenerate() {
        let a = arr2(&[[1.0f64, 0.0], [0.0, 0.0]]);
        assert!(matches!(byol_loss(a.view(), a.view()), Err(Error::Degenerate(_))));
    }

    #[test]
    fn collapse_case() {
        // Identical branches, zero emotion matrix: bootstrap terms vanish and
        // the penalty is |0 - I| summed, i.e. 6.
        let v = arr2(&[[0.3f64, -0.2, 0.5, 0.1, 0.0, 0.7], [1.0, 0.2, -0.4, 0.0, 0.3, 0.1]]);
        let w = EmotionMatrix::new(Array2::<f64>::zeros((6, 6))).unwrap();
        let b = byel_total(v.view(), v.view(), v.view(), v.view(), &labels(2), &w).unwrap();
        assert!(b.byol.abs() < 1e-12 && b.byol_swapped.abs() < 1e-12);
        assert_eq!(b.orthogonal, 6.0);
        assert!((b.classify - 6f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn aligned_orthonormal_case_is_classify_only() {
        let w = EmotionMatrix::new(Array2::<f64>::eye(6)).unwrap();
        let q = arr2(&[[2.0f64, 0.5, 0.0, 0.0, 0.1, 0.0]]);
        let z = &q * 3.0 + &w.weights.column(0).insert_axis(ndarray::Axis(0)) * -2.0;
        // z - w0 = 3 q - 3 w0 = 3 (q - w0), aligned with q - w0.
        let l = [EmotionLabel::ANGER];
        let b = byel_total(q.view(), z.view(), q.view(), z.view(), &l, &w).unwrap();
        assert!(b.byol.abs() < 1e-12 && b.byol_swapped.abs() < 1e-12);
        assert!((b.total - (b.classify + b.classify_swapped)).abs() < 1e-12);
    }
}
