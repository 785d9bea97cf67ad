//! Algebraic invariants of the losses, the network and the metrics.

#![allow(clippy::needless_range_loop)]

mod common;

use byel_core::data::{class_distribution, DatasetManifest, ManifestEntry};
use byel_core::eval::{argmax_predictions, confusion, f1_scores, AbsentClassPolicy, MetricsReport};
use byel_core::losses::{byel_total, byol_loss};
use byel_core::nn::{encoder_forward, subtract_emotion_vector, EmotionMatrix, NetworkState};
use byel_core::{Domain, EmotionLabel};
use common::*;
use ndarray::{Array2, Axis};
use proptest::prelude::*;

fn label() -> impl Strategy<Value = EmotionLabel> {
    (0usize..6).prop_map(|k| EmotionLabel::try_from(k).unwrap())
}

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = Array2<f64>> {
    proptest::collection::vec(-2.0f64..2.0, rows * cols)
        .prop_map(move |v| Array2::from_shape_vec((rows, cols), v).unwrap())
        .prop_filter("rows away from zero", |m| m.rows().into_iter().all(|r| r.dot(&r) > 1e-3))
}

fn permutation(n: usize) -> impl Strategy<Value = Vec<usize>> {
    Just((0..n).collect::<Vec<_>>()).prop_shuffle()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn byol_is_scale_invariant_and_symmetric(q in matrix(3, 5), z in matrix(3, 5), a in 0.1f64..10.0, b in 0.1f64..10.0) {
        let base = byol_loss(q.view(), z.view()).unwrap();
        let scaled = byol_loss((&q * a).view(), (&z * b).view()).unwrap();
        prop_assert!((base - scaled).abs() < 1e-9);
        let swapped = byol_loss(z.view(), q.view()).unwrap();
        prop_assert!((base - swapped).abs() < 1e-12);
        prop_assert!((-1e-12..=4.0 + 1e-12).contains(&base));
    }

    #[test]
    fn byel_total_is_invariant_to_swapping_views(
        q1 in matrix(4, 6), q2 in matrix(4, 6), z1 in matrix(4, 6), z2 in matrix(4, 6),
        w in proptest::collection::vec(-1.0f64..1.0, 36),
        labels in proptest::collection::vec(label(), 4),
    ) {
        let w = EmotionMatrix::new(Array2::from_shape_vec((6, 6), w).unwrap()).unwrap();
        let subtracted_ok = [&q1, &q2, &z1, &z2].iter().all(|m| {
            subtract_emotion_vector(m.view(), &w, &labels).unwrap().rows().into_iter().all(|r| r.dot(&r) > 1e-6)
        });
        prop_assume!(subtracted_ok);
        let a = byel_total(q1.view(), z2.view(), q2.view(), z1.view(), &labels, &w).unwrap();
        let b = byel_total(q2.view(), z1.view(), q1.view(), z2.view(), &labels, &w).unwrap();
        prop_assert!((a.total - b.total).abs() < 1e-12 * a.total.abs().max(1.0));
    }

    #[test]
    fn subtraction_is_linear(
        v in matrix(3, 6), u in matrix(3, 6), a in -3.0f64..3.0,
        w in proptest::collection::vec(-1.0f64..1.0, 36),
        labels in proptest::collection::vec(label(), 3),
    ) {
        let w = EmotionMatrix::new(Array2::from_shape_vec((6, 6), w).unwrap()).unwrap();
        // s(v) - s(u) = v - u and s(a v) = a v - w_idx.
        let d = subtract_emotion_vector(v.view(), &w, &labels).unwrap() - subtract_emotion_vector(u.view(), &w, &labels).unwrap();
        prop_assert!((d - (&v - &u)).iter().all(|x| x.abs() < 1e-12));
        let s = subtract_emotion_vector((&v * a).view(), &w, &labels).unwrap();
        let zero = Array2::zeros((3, 6));
        let expect = &v * a + subtract_emotion_vector(zero.view(), &w, &labels).unwrap();
        prop_assert!((s - expect).iter().all(|x| x.abs() < 1e-12));
    }

    #[test]
    fn class_distribution_sums_to_len(labels in proptest::collection::vec(label(), 1..200)) {
        let entries = labels.iter().enumerate()
            .map(|(i, &label)| ManifestEntry { image: format!("{i}"), label, domain: Domain::Source })
            .collect();
        let m = DatasetManifest::new(entries).unwrap();
        let d = class_distribution(&m);
        prop_assert_eq!(d.iter().sum::<usize>(), labels.len());
        for k in 0..6 {
            prop_assert_eq!(d[k], labels.iter().filter(|l| l.index() == k).count());
        }
    }

    #[test]
    fn argmax_picks_a_maximal_lowest_index(rows in proptest::collection::vec(proptest::collection::vec(-2i32..3, 6), 1..20)) {
        let flat: Vec<f64> = rows.iter().flatten().map(|&v| v as f64).collect();
        let logits = Array2::from_shape_vec((rows.len(), 6), flat).unwrap();
        let preds = argmax_predictions(logits.view()).unwrap();
        for (row, p) in rows.iter().zip(preds) {
            let max = *row.iter().max().unwrap();
            prop_assert_eq!(p.index(), row.iter().position(|&v| v == max).unwrap());
        }
    }

    #[test]
    fn metrics_ignore_order_and_follow_relabeling(
        pairs in proptest::collection::vec((label(), label()), 1..100),
        order in Just(()).prop_flat_map(|_| permutation(6)),
        seed in any::<u64>(),
    ) {
        let preds: Vec<EmotionLabel> = pairs.iter().map(|p| p.0).collect();
        let truths: Vec<EmotionLabel> = pairs.iter().map(|p| p.1).collect();
        let base = MetricsReport::from_confusion(confusion(&preds, &truths).unwrap(), AbsentClassPolicy::Zero);

        let mut idx: Vec<usize> = (0..pairs.len()).collect();
        let mut r = rng(seed);
        rand::seq::SliceRandom::shuffle(idx.as_mut_slice(), &mut r);
        let p2: Vec<_> = idx.iter().map(|&i| preds[i]).collect();
        let t2: Vec<_> = idx.iter().map(|&i| truths[i]).collect();
        let shuffled = MetricsReport::from_confusion(confusion(&p2, &t2).unwrap(), AbsentClassPolicy::Zero);
        prop_assert_eq!(&shuffled, &base);

        let pi = |l: &EmotionLabel| EmotionLabel::try_from(order[l.index()]).unwrap();
        let p3: Vec<_> = preds.iter().map(pi).collect();
        let t3: Vec<_> = truths.iter().map(pi).collect();
        let relabeled = MetricsReport::from_confusion(confusion(&p3, &t3).unwrap(), AbsentClassPolicy::Zero);
        for c in 0..6 {
            prop_assert_eq!(relabeled.per_class_f1[order[c]], base.per_class_f1[c]);
        }
        prop_assert!((relabeled.macro_f1 - base.macro_f1).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&base.macro_f1));
        let perfect = f1_scores(&confusion(&truths, &truths).unwrap());
        let all_present = (0..6).all(|c| truths.iter().any(|t| t.index() == c));
        prop_assert_eq!(perfect.f1.iter().all(|&f| f == 1.0), all_present);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn encoder_rows_are_batch_independent_and_permutation_equivariant(seed in 0u64..1000, perm in permutation(5)) {
        let state = NetworkState::<f64>::new(&tiny_arch(), seed).unwrap();
        let batch = random_images(&mut rng(seed), 5, 8);
        let full = encoder_forward(&state.online.encoder, batch.view()).unwrap();
        for i in 0..5 {
            let one = batch.select(Axis(0), &[i]);
            let single = encoder_forward(&state.online.encoder, one.view()).unwrap();
            prop_assert!(single.row(0).iter().zip(full.row(i)).all(|(a, b)| (a - b).abs() < 1e-12));
        }
        let permuted = encoder_forward(&state.online.encoder, batch.select(Axis(0), &perm).view()).unwrap();
        let expect = full.select(Axis(0), &perm);
        prop_assert!(permuted.iter().zip(expect.iter()).all(|(a, b)| (a - b).abs() < 1e-12));
    }
}
