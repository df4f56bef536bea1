use proptest::prelude::*;

use trawlkit::estimator::{
    default_stride, estimate_avar, estimate_derivative, estimate_derivative_subsampled, estimate_slices,
    estimate_trawl, quarticity, sample_acf, sample_acf_upto, SliceEstimator,
};
use trawlkit::inference::mean_sd;
use trawlkit::simulator::{simulate, simulate_stream, SimConfig, TimeSeries};
use trawlkit::{SeedSpec, SliceMethod, TrawlSpec};

fn series_strategy() -> impl Strategy<Value = (f64, Vec<f64>)> {
    (0.05f64..2.0, prop::collection::vec(-10i32..10, 5..40))
        .prop_map(|(d, v)| (d, v.into_iter().map(|x| x as f64 / 4.0).collect()))
}

proptest! {
    #[test]
    fn scaling_the_series(
        (delta, v) in series_strategy(),
        c in prop::sample::select(vec![0.5f64, 2.0, 4.0, -2.0]),
    ) {
        // Dyadic inputs and power-of-two scales keep the identities exact.
        let x = TimeSeries::new(delta, v.clone()).unwrap();
        let y = TimeSeries::new(delta, v.iter().map(|a| a * c).collect()).unwrap();
        let n = v.len();
        let c2 = c * c;
        let (gx, gy) = (sample_acf(&x), sample_acf(&y));
        for (a, b) in gx.gamma_hat.iter().zip(&gy.gamma_hat) {
            prop_assert_eq!(b, &(a * c2));
        }
        let (ax, ay) = (estimate_trawl(&x, n - 2).unwrap(), estimate_trawl(&y, n - 2).unwrap());
        for (a, b) in ax.iter().zip(&ay) {
            prop_assert_eq!(b, &(a * c2));
        }
        let (dx, dy) = (estimate_derivative(&x, n - 3).unwrap(), estimate_derivative(&y, n - 3).unwrap());
        for (a, b) in dx.iter().zip(&dy) {
            prop_assert_eq!(b, &(a * c2));
        }
        prop_assert_eq!(quarticity(&y), quarticity(&x) * c2 * c2);
    }

    #[test]
    fn trawl_sums_telescope((delta, v) in series_strategy(), frac in 0.0f64..1.0) {
        let x = TimeSeries::new(delta, v.clone()).unwrap();
        let n = v.len();
        let l_max = 1 + ((n - 3) as f64 * frac) as usize;
        let a = estimate_trawl(&x, l_max).unwrap();
        let g = sample_acf(&x);
        let lhs: f64 = a[1..].iter().map(|v| v * delta).sum();
        let rhs = g.gamma(1) - g.gamma(l_max + 1);
        prop_assert!((lhs - rhs).abs() <= 1e-12 * g.gamma(0).max(1e-300));
    }

    #[test]
    fn empirical_acf_slices((delta, v) in series_strategy(), steps in 0usize..6) {
        let x = TimeSeries::new(delta, v).unwrap();
        let g = sample_acf(&x);
        prop_assume!(g.gamma(0) > 0.0);
        let h = steps as f64 * delta;
        let s = estimate_slices(&x, h, SliceMethod::EmpiricalAcf).unwrap();
        prop_assert_eq!(s.leb_cap_raw, g.gamma(steps));
        prop_assert_eq!(s.leb_a - s.leb_cap_raw, g.gamma(0) - g.gamma(steps));
        prop_assert!(s.ratio_cap >= 0.0 && s.ratio_cap <= 1.0);
        prop_assert!((s.leb_cap + s.leb_minus - s.leb_a).abs() <= 1e-15 * s.leb_a);
    }
}

#[test]
fn subsampled_derivative_on_small_series() {
    let x = TimeSeries::new(1.0, vec![1.0, 2.0, 0.0, 1.0, 3.0, 1.0, 2.0, 4.0, 0.0]).unwrap();
    // Subseries (1, 0, 3, 2, 0): δ = (-1, 3, -1, -2), M = 4, Δ̃ = 2.
    let sub = [1.0, 0.0, 3.0, 2.0, 0.0];
    for l in 0..2usize {
        let mut s = 0.0;
        for k in l + 1..=3 {
            s += (sub[k + 1] - sub[k]) * (sub[k - l] - sub[k - l - 1]);
        }
        let want = s / (4.0 * 4.0);
        let got = estimate_derivative_subsampled(&x, 2, l as f64 * 2.0).unwrap();
        assert!((got - want).abs() < 1e-15, "l={l}: {got} vs {want}");
    }
    assert!(estimate_derivative_subsampled(&x, 3, 0.0).is_err());
    assert!(estimate_derivative_subsampled(&x, 0, 0.0).is_err());
}

#[test]
fn iid_noise_has_flat_derivative() {
    let seed = SeedSpec::gaussian_unchecked(0.0, 1.0).unwrap();
    // Independent draws: a single-step trawl sampled once per support length.
    let vals: Vec<f64> = (0..20_000)
        .map(|r| simulate_stream(&SimConfig::new(TrawlSpec::exponential(1.0).unwrap(), seed, 1.0, 2, 3), r).unwrap().values()[0])
        .collect();
    let x = TimeSeries::new(1.0, vals).unwrap();
    let d = estimate_derivative(&x, 5).unwrap();
    let q = estimate_trawl(&x, 0).unwrap()[0];
    // Each â'(l), l >= 1, is a mean of n products of increments with variance ~ (2γ₀)².
    let se = 2.0 * 2.0 * q / (x.len() as f64).sqrt();
    for (l, v) in d.iter().enumerate().skip(1) {
        assert!(v.abs() <= 3.0 * se, "l={l}: {v} vs se {se}");
    }
}

#[test]
fn acf_ratio_of_long_path() {
    let trawl = TrawlSpec::exponential(1.0).unwrap();
    let x = simulate(&SimConfig::new(trawl, SeedSpec::negbin_normalized(0.2).unwrap(), 0.1, 50_000, 4)).unwrap();
    let g = sample_acf_upto(&x, 10).unwrap();
    assert!((g.gamma(10) - (-1.0f64).exp()).abs() <= 0.05);
}

#[test]
fn quarticity_tracks_fourth_cumulant() {
    // A single path is dominated by a few large jumps, so the check is on
    // the mean over independent paths.
    let trawl = TrawlSpec::exponential(1.0).unwrap();
    let cfg = SimConfig::new(trawl, SeedSpec::negbin_normalized(0.2).unwrap(), 0.01, 10_000, 6);
    let q: Vec<f64> = (0..400).map(|r| quarticity(&simulate_stream(&cfg, r).unwrap())).collect();
    let (m, _) = mean_sd(&q);
    assert!((m - 2.875).abs() <= 0.3, "mean Q_n = {m}");
}

#[test]
fn subsampled_derivative_at_zero_gaussian() {
    // a'(0) = -1 for the unit exponential trawl.
    let trawl = TrawlSpec::exponential(1.0).unwrap();
    let seed = SeedSpec::gaussian_normalized(0.0).unwrap();
    let vals: Vec<f64> = (0..50)
        .map(|r| {
            let x = simulate_stream(&SimConfig::new(trawl, seed, 0.01, 10_000, 11), r).unwrap();
            estimate_derivative_subsampled(&x, default_stride(x.len()), 0.0).unwrap()
        })
        .collect();
    let (m, _) = mean_sd(&vals);
    assert!((m + 1.0).abs() <= 0.3, "mean ã'(0) = {m}");
}

#[test]
fn avar_truncation_invariance_on_exact_grid() {
    let delta = 0.01;
    let grid: Vec<f64> = (0..=8000).map(|l| (-(l as f64) * delta).exp()).collect();
    // â(NΔ) < 1e-4 at N = 1000.
    let a = estimate_avar(&grid, 1.0, delta, Some(1000), 0.7).unwrap();
    let b = estimate_avar(&grid, 1.0, delta, Some(2000), 0.7).unwrap();
    assert!((a.value - b.value).abs() < 1e-4);
}

fn mc_slices(trawl: TrawlSpec, method: SliceMethod, h: &[f64], runs: usize) -> Vec<(f64, f64)> {
    let seed = SeedSpec::negbin_normalized(0.2).unwrap();
    let cfg = SimConfig::new(trawl, seed, 0.1, 5000, 321);
    let per_run: Vec<Vec<(f64, f64)>> = (0..runs as u64)
        .map(|r| {
            let x = simulate_stream(&cfg, r).unwrap();
            let est = SliceEstimator::new(&x, method, 12).unwrap();
            h.iter().map(|&h| {
                let s = est.estimate(h).unwrap();
                (s.leb_cap, s.ratio_cap)
            }).collect()
        })
        .collect();
    (0..h.len())
        .map(|k| {
            let cap: Vec<f64> = per_run.iter().map(|v| v[k].0).collect();
            let ratio: Vec<f64> = per_run.iter().map(|v| v[k].1).collect();
            (mean_sd(&cap).0, mean_sd(&ratio).0)
        })
        .collect()
}

#[test]
fn trawl_sum_cap_for_exponential_trawl() {
    // Mean of the Riemann tail sum from 0.4 onwards; reference value 0.666.
    let out = mc_slices(TrawlSpec::exponential(1.0).unwrap(), SliceMethod::TrawlSum, &[0.0, 0.4], 200);
    assert_eq!(out[0].1, 1.0);
    assert!((out[1].0 - 0.666).abs() <= 0.02, "mean cap {}", out[1].0);
}

#[test]
fn empirical_acf_ratio_long_memory() {
    let out = mc_slices(TrawlSpec::sup_gamma(0.1, 1.5).unwrap(), SliceMethod::EmpiricalAcf, &[0.1], 200);
    assert!((out[0].1 - 0.681).abs() <= 0.03, "mean ratio {}", out[0].1);
}
