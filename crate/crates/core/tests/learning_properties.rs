use ndarray::{Array2, Axis};
use pec_core::dataset::{kfold, split_indices, ScalerParams, SplitSpec};
use pec_core::metrics::{classification_metrics, pointwise_metrics};
use pec_core::nn::{self, Activation, LossKind, Mode, Network, NetworkSpec, TrainConfig};
use pec_core::rng;
use proptest::prelude::*;
use rand::Rng;

#[test]
fn separable_toy_reaches_full_train_accuracy() {
    let mut r = rng::seeded(1);
    let x = Array2::from_shape_fn((100, 2), |_| r.random_range(-1.0..1.0));
    let y = Array2::from_shape_fn((100, 1), |(i, _)| {
        f64::from(u8::from(x[[i, 0]] + 0.5 * x[[i, 1]] > 0.1))
    });
    let spec = NetworkSpec::mlp(
        2,
        &[8],
        1,
        Activation::Relu,
        Activation::Sigmoid,
        0.0,
        LossKind::BinaryCrossEntropy,
    )
    .unwrap();
    let mut net = Network::new(spec, 2).unwrap();
    let cfg = TrainConfig {
        epochs: 500,
        lr: 0.01,
        batch_size: 16,
        seed: 3,
    };
    let history = nn::train(&mut net, x.view(), y.view(), &cfg, None).unwrap();
    assert!(history.iter().any(|e| e.train_accuracy == Some(1.0)));
}

#[test]
fn inverted_dropout_preserves_expected_activation() {
    let spec = NetworkSpec::mlp(
        3,
        &[16],
        2,
        Activation::Relu,
        Activation::Identity,
        0.3,
        LossKind::SquaredError,
    )
    .unwrap();
    let net = Network::new(spec, 4).unwrap();
    let x = Array2::from_shape_fn((1, 3), |(_, j)| 0.5 + j as f64);
    let mut r = rng::seeded(5);
    let infer = net.forward(x.view(), Mode::Infer, &mut r).unwrap();
    let infer_mean = infer.layer_input(1).mean().unwrap();
    let batch = x.broadcast((10_000, 3)).unwrap().to_owned();
    let sampled = net.forward(batch.view(), Mode::Train, &mut r).unwrap();
    let sampled_mean = sampled.layer_input(1).mean().unwrap();
    assert!(
        (sampled_mean - infer_mean).abs() <= 0.02 * infer_mean.abs(),
        "{sampled_mean} vs {infer_mean}"
    );
}

#[test]
fn scaler_fit_on_train_is_reproducible_on_test() {
    let mut r = rng::seeded(6);
    let data = Array2::from_shape_fn((300, 4), |(_, j)| r.random_range(0.0..10.0) * (j + 1) as f64);
    let (train, test) = split_indices(300, &SplitSpec::default()).unwrap();
    let transform = || {
        let s = ScalerParams::fit(data.select(Axis(0), &train).view()).unwrap();
        s.apply(data.select(Axis(0), &test).view()).unwrap()
    };
    assert_eq!(transform(), transform());
}

fn matrix() -> impl Strategy<Value = Array2<f64>> {
    (2usize..20, 1usize..5).prop_flat_map(|(n, d)| {
        proptest::collection::vec(-1e3..1e3f64, n * d).prop_map(move |v| Array2::from_shape_vec((n, d), v).unwrap())
    })
}

proptest! {
    #[test]
    fn scaler_round_trips(x in matrix()) {
        let s = ScalerParams::fit(x.view()).unwrap();
        let back = s.invert(s.apply(x.view()).unwrap().view()).unwrap();
        for (a, b) in x.iter().zip(back.iter()) {
            prop_assert!((a - b).abs() <= 1e-9 * (1.0 + a.abs()));
        }
    }

    #[test]
    fn split_is_a_partition(n in 2usize..500, frac in 0.05..0.95f64, seed in any::<u64>()) {
        let spec = SplitSpec { test_fraction: frac, k: 5, seed };
        let (train, test) = split_indices(n, &spec).unwrap();
        let mut all: Vec<usize> = train.iter().chain(&test).copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
        prop_assert!(!train.is_empty() && !test.is_empty());
    }

    #[test]
    fn folds_partition_rows(n in 2usize..300, k in 2usize..10, seed in any::<u64>()) {
        prop_assume!(k <= n);
        let folds = kfold(n, k, seed).unwrap();
        let sizes: Vec<usize> = folds.iter().map(Vec::len).collect();
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        let mut all: Vec<usize> = folds.concat();
        all.sort_unstable();
        prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
    }

    #[test]
    fn classification_counts_and_ranges(
        pairs in proptest::collection::vec((0.0..=1.0f64, any::<bool>()), 1..200)
    ) {
        let probs: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let labels: Vec<f64> = pairs.iter().map(|p| f64::from(u8::from(p.1))).collect();
        let rep = classification_metrics(&probs, &labels, 0.5).unwrap();
        prop_assert_eq!(rep.tp + rep.fp + rep.tn + rep.fn_, probs.len());
        for v in [rep.accuracy, rep.precision, rep.recall, rep.f1, rep.auc_pr] {
            prop_assert!((0.0..=1.0).contains(&v));
        }
        prop_assert!(rep.bce >= 0.0);
    }

    #[test]
    fn rmse_dominates_mae(
        pairs in proptest::collection::vec((-1e3..1e3f64, -1e3..1e3f64), 2..100)
    ) {
        let t: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let p: Vec<f64> = pairs.iter().map(|p| p.1).collect();
        let m = pointwise_metrics(&t, &p).unwrap();
        prop_assert!(m.rmse >= m.mae - 1e-12 && m.mae >= 0.0);
    }
}
