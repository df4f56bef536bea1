use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use trawlkit::forecast::{affine_forecast, dm_test, predict, rolling_forecast, Predictor, RollingOptions};
use trawlkit::simulator::TimeSeries;

fn white_noise(n: usize, seed: u64) -> TimeSeries {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    TimeSeries::new(0.1, (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()).unwrap()
}

#[test]
fn white_noise_favours_the_mean() {
    let x = white_noise(1600, 5);
    let preds = [Predictor::TrawlSum, Predictor::EmpiricalAcf, Predictor::Naive];
    let r = rolling_forecast(&x, 500, 8, &preds, &RollingOptions::default()).unwrap();
    assert_eq!(r.origins, 1600 - 500 - 8);
    for p in &preds[..2] {
        for h in 2..=8 {
            let ratio = r.loss(h, p).unwrap().ratio_vs_naive_mse.unwrap();
            assert!(ratio < 1.0, "{} h={h}: ratio {ratio}", p.name());
        }
    }
    // The trawl predictor is the reference and should beat naive decisively.
    let dm = r.dm.iter().find(|c| c.h == 4 && c.other == Predictor::Naive && c.power == 2).unwrap();
    assert!(dm.result.p_value < 0.001, "p = {}", dm.result.p_value);
}

#[test]
fn shifted_losses_are_dominance() {
    let lb: Vec<f64> = (0..100).map(|i| 2.0 + (i as f64).sin()).collect();
    let la: Vec<f64> = lb.iter().map(|v| v - 1.0).collect();
    let r = dm_test(&la, &lb, 1, 1).unwrap();
    assert!(r.dominance);
    assert_eq!(r.p_value, 0.0);
    let r = dm_test(&lb, &la, 1, 1).unwrap();
    assert!(r.dominance);
    assert_eq!(r.p_value, 1.0);
}

#[test]
fn unit_weight_reproduces_the_naive_forecast() {
    let x = white_noise(200, 9);
    let naive = predict(&x, &Predictor::Naive, 1).unwrap().value;
    assert_eq!(naive, x.last());
    for w in [1.0, 1.4] {
        assert_eq!(affine_forecast(w, x.last(), x.mean()), naive);
    }
}

#[test]
fn predictors_share_the_affine_form() {
    let x = white_noise(300, 11);
    for p in [Predictor::TrawlSum, Predictor::EmpiricalAcf] {
        for h in 1..4 {
            let pred = predict(&x, &p, h).unwrap();
            let w = (pred.value - x.mean()) / (x.last() - x.mean());
            assert!((-1e-12..=1.0 + 1e-12).contains(&w), "{} h={h}: weight {w}", p.name());
        }
    }
}

#[test]
fn too_short_series_names_the_requirement() {
    let x = white_noise(50, 1);
    let err = rolling_forecast(&x, 40, 20, &[Predictor::Naive], &RollingOptions::default()).unwrap_err();
    assert!(err.to_string().contains("61"), "{err}");
}
