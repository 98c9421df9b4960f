use ndarray::Array2;
use pec_core::classifier::{train_classifier, ClassifierConfig};
use pec_core::converter::{ConverterModel, ParameterBounds};
use pec_core::dataset::{self, SplitSpec};
use pec_core::metrics::{classification_metrics, pointwise_metrics, probabilistic_metrics};
use pec_core::nn::{Activation, LossKind, Network, NetworkSpec};
use pec_core::regress::mc_dropout::mc_predict;
use pec_core::regress::ngboost::{fit_ngboost, NgboostConfig};
use pec_core::regress::GaussianPrediction;
use pec_core::rng;
use rand::Rng;
use rand_distr::{Distribution, Normal};

#[test]
fn classifier_on_5k_rows() {
    let data = ConverterModel::default().generate_dataset(5000, 2024).unwrap();
    let (train, test) = dataset::split(&data, &SplitSpec::default()).unwrap();
    let model = train_classifier(&train, &ClassifierConfig::default(), None)
        .unwrap()
        .model;

    let probs = model.predict_samples(&test).unwrap();
    let rep = classification_metrics(&probs, &dataset::labels(&test), 0.5).unwrap();
    assert!(rep.accuracy >= 0.95, "held-out accuracy {}", rep.accuracy);

    let coolest = train
        .iter()
        .filter(|s| s.feasible)
        .min_by(|a, b| a.y2.total_cmp(&b.y2))
        .unwrap();
    assert!(model.predict_proba(&coolest.x).unwrap() > 0.9);
    let hot = data.iter().find(|s| s.y2 >= 200.0).expect("a design above 200 degC");
    assert!(model.predict_proba(&hot.x).unwrap() < 0.1);

    let mut r = rng::seeded(1);
    for _ in 0..10_000 {
        let p = model.predict_proba(&ParameterBounds::default().sample(&mut r)).unwrap();
        assert!((0.0..=1.0).contains(&p));
    }
}

fn toy(n: usize, seed: u64) -> (Array2<f64>, Vec<f64>) {
    let mut r = rng::seeded(seed);
    let noise = Normal::new(0.0, 0.1).unwrap();
    let x = Array2::from_shape_fn((n, 1), |_| r.random_range(0.0..1.0));
    let y = x.column(0).iter().map(|v| v + noise.sample(&mut r)).collect();
    (x, y)
}

#[test]
fn ngboost_recovers_a_noisy_line() {
    let (x, y) = toy(2000, 11);
    let (xt, yt) = toy(2000, 12);
    let cfg = NgboostConfig {
        seed: 13,
        ..NgboostConfig::default()
    };
    let (model, history) = fit_ngboost(x.view(), &y, &cfg, None).unwrap();
    assert_eq!(history.len(), 500);
    for w in history.windows(2) {
        assert!(w[1].train_nll <= w[0].train_nll + 1e-6);
    }

    let preds: Vec<GaussianPrediction> = xt.outer_iter().map(|r| model.predict(r.as_slice().unwrap())).collect();
    let means: Vec<f64> = preds.iter().map(|p| p.mean).collect();
    let pw = pointwise_metrics(&yt, &means).unwrap();
    let pr = probabilistic_metrics(&preds, &yt, 0.95).unwrap();
    assert!(pw.rmse <= 0.15, "rmse {}", pw.rmse);
    assert!((0.9..=0.98).contains(&pr.picp), "picp {}", pr.picp);

    // Replay: the recorded final train NLL equals a fresh recomputation from
    // the stored stages.
    let replayed: f64 = x
        .outer_iter()
        .zip(&y)
        .map(|(row, yi)| {
            let p = model.predict(row.as_slice().unwrap());
            0.5 * (2.0 * std::f64::consts::PI).ln() + p.std.ln() + 0.5 * ((yi - p.mean) / p.std).powi(2)
        })
        .sum::<f64>()
        / y.len() as f64;
    assert!((replayed - history.last().unwrap().train_nll).abs() < 1e-9);
}

#[test]
fn ngboost_prediction_replays_the_update_recurrence() {
    let (x, y) = toy(2000, 21);
    let cfg = NgboostConfig {
        iterations: 100,
        seed: 22,
        ..NgboostConfig::default()
    };
    let (model, _) = fit_ngboost(x.view(), &y, &cfg, None).unwrap();
    let q = [0.5];
    let (mut mu, mut ls) = (model.mu0, model.log_sigma0);
    for stage in &model.stages {
        mu -= cfg.lr * stage.scale * stage.trees[0].predict(&q);
        ls -= cfg.lr * stage.scale * stage.trees[1].predict(&q);
    }
    let p = model.predict(&q);
    assert!((p.mean - mu).abs() < 1e-12);
    assert!((p.std - ls.exp()).abs() < 1e-12);
    assert!((p.mean - 0.5).abs() < 0.05);
}

#[test]
fn mc_dropout_spread_converges() {
    let spec = NetworkSpec::mlp(
        9,
        &[32, 16],
        2,
        Activation::Relu,
        Activation::Identity,
        0.1,
        LossKind::SquaredError,
    )
    .unwrap();
    let net = Network::new(spec, 31).unwrap();
    let row = [0.3, -0.2, 0.5, 1.0, -1.1, 0.0, 0.7, -0.4, 0.2];
    let a = mc_predict(&net, &row, 10_000, 1).unwrap();
    let b = mc_predict(&net, &row, 100_000, 2).unwrap();
    for (pa, pb) in a.iter().zip(&b) {
        assert!(pb.std > 0.0);
        assert!((pa.std - pb.std).abs() <= 0.05 * pb.std, "{} vs {}", pa.std, pb.std);
    }
}
