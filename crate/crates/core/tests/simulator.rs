use statrs::distribution::{ChiSquared, ContinuousCDF};

use trawlkit::rng::stream_rng;
use trawlkit::simulator::{draw_seed, moment_check, simulate, simulate_stream, MomentReport, SimConfig};
use trawlkit::{SeedSpec, TrawlSpec};

fn exp1() -> TrawlSpec {
    TrawlSpec::exponential(1.0).unwrap()
}

fn nb() -> SeedSpec {
    SeedSpec::negbin_normalized(0.2).unwrap()
}

/// Asymptotic two-sample Kolmogorov–Smirnov p-value.
fn ks_two_sample(mut a: Vec<f64>, mut b: Vec<f64>) -> f64 {
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len(), b.len());
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < na && j < nb {
        let x = a[i].min(b[j]);
        while i < na && a[i] <= x {
            i += 1;
        }
        while j < nb && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na as f64 - j as f64 / nb as f64).abs());
    }
    let ne = (na * nb) as f64 / (na + nb) as f64;
    let lambda = (ne.sqrt() + 0.12 + 0.11 / ne.sqrt()) * d;
    let mut p = 0.0;
    for k in 1..=100 {
        let k = k as f64;
        p += 2.0 * (-1f64).powf(k - 1.0) * (-2.0 * k * k * lambda * lambda).exp();
    }
    p.clamp(0.0, 1.0)
}

#[test]
fn slice_draws_are_additive_in_area() {
    let seeds = [
        nb(),
        SeedSpec::gamma_normalized(0.64).unwrap(),
        SeedSpec::gaussian_normalized(0.8).unwrap(),
    ];
    for (k, seed) in seeds.iter().enumerate() {
        let mut rng = stream_rng(42, k as u64);
        let (s1, s2) = (0.3, 0.45);
        let sums: Vec<f64> = (0..100_000)
            .map(|_| draw_seed(seed, s1, &mut rng) + draw_seed(seed, s2, &mut rng))
            .collect();
        let single: Vec<f64> = (0..100_000).map(|_| draw_seed(seed, s1 + s2, &mut rng)).collect();
        let p = ks_two_sample(sums, single);
        assert!(p > 1e-3, "{seed:?}: KS p = {p}");
    }
}

#[test]
fn small_area_negbin_draws_have_the_right_mean() {
    // Small areas exercise the inversion and skip paths.
    let mut rng = stream_rng(7, 0);
    let area = 1e-4;
    let draws: Vec<f64> = (0..1_000_000).map(|_| draw_seed(&nb(), area, &mut rng)).collect();
    let mean = draws.iter().sum::<f64>() / draws.len() as f64;
    let want = 0.8 * area;
    assert!((mean - want).abs() < 5.0 * (area / draws.len() as f64).sqrt(), "{mean} vs {want}");
}

fn negbin_pmf(r: f64, theta: f64, kmax: usize) -> Vec<f64> {
    let mut p = vec![(1.0 - theta).powf(r)];
    for k in 1..=kmax {
        let prev = p[k - 1];
        p.push(prev * theta * (r + k as f64 - 1.0) / k as f64);
    }
    p
}

#[test]
fn marginal_is_negbin_on_independent_paths() {
    // X_0 of 10^4 independent paths against NegBin(3.2, 0.2).
    let cfg = SimConfig::new(exp1(), nb(), 0.1, 2, 2024);
    let samples: Vec<usize> = (0..10_000)
        .map(|r| simulate_stream(&cfg, r).unwrap().values()[0] as usize)
        .collect();
    let n = samples.len() as f64;
    let pmf = negbin_pmf(3.2, 0.2, 100);
    let mut stat = 0.0;
    let mut cells = 0;
    let mut used = 0.0;
    for (k, p) in pmf.iter().enumerate() {
        let tail = 1.0 - used - p;
        if tail * n < 5.0 {
            let count = samples.iter().filter(|&&v| v >= k).count() as f64;
            let e = (1.0 - used) * n;
            stat += (count - e).powi(2) / e;
            cells += 1;
            break;
        }
        let count = samples.iter().filter(|&&v| v == k).count() as f64;
        stat += (count - n * p).powi(2) / (n * p);
        used += p;
        cells += 1;
    }
    let pval = 1.0 - ChiSquared::new((cells - 1) as f64).unwrap().cdf(stat);
    assert!(pval > 1e-3, "chi-square p = {pval}");
}

#[test]
fn centered_gaussian_long_path() {
    let seed = SeedSpec::gaussian_unchecked(0.0, 1.0).unwrap();
    let x = simulate(&SimConfig::new(exp1(), seed, 0.1, 100_000, 8)).unwrap();
    assert!(x.mean().abs() <= 0.05);
}

#[test]
fn negbin_exponential_moment_report() {
    // Single-path moments scatter by about one tolerance width, so the
    // empirical side is averaged over independent paths.
    let cfg = SimConfig::new(exp1(), nb(), 0.1, 10_000, 99);
    let reports: Vec<_> = (0..200)
        .map(|r| moment_check(&simulate_stream(&cfg, r).unwrap(), &exp1(), &nb(), 10).unwrap())
        .collect();
    let avg = |f: &dyn Fn(&MomentReport) -> f64| {
        reports.iter().map(f).sum::<f64>() / reports.len() as f64
    };
    let r = &reports[0];
    assert!((r.mean.1 - 0.8).abs() < 1e-12);
    assert!((r.variance.1 - 1.0).abs() < 1e-12);
    assert!((r.acf[10].1 - (-1.0f64).exp()).abs() < 1e-12);
    let mean = avg(&|r| r.mean.0);
    let var = avg(&|r| r.variance.0);
    let ratio = avg(&|r| r.acf[10].0 / r.acf[0].0);
    assert!((mean - 0.8).abs() <= 0.05, "mean {mean}");
    assert!((var - 1.0).abs() <= 0.1, "variance {var}");
    assert!((ratio - (-1.0f64).exp()).abs() <= 0.05, "acf ratio {ratio}");
}

#[test]
fn halves_of_a_long_path_agree() {
    for (trawl, seed) in [
        (exp1(), nb()),
        (TrawlSpec::exponential(2.0).unwrap(), SeedSpec::gamma_normalized(0.64).unwrap()),
    ] {
        let x = simulate(&SimConfig::new(trawl, seed, 0.1, 100_000, 5)).unwrap();
        let v = x.values();
        let (a, b) = v.split_at(v.len() / 2);
        let stats = |s: &[f64]| {
            let m = s.iter().sum::<f64>() / s.len() as f64;
            let var = s.iter().map(|x| (x - m).powi(2)).sum::<f64>() / s.len() as f64;
            (m, var)
        };
        let (ma, va) = stats(a);
        let (mb, vb) = stats(b);
        // Standard error of a half-sample mean inflated by the integrated ACF.
        let se_mean = (2.0 * trawl.leb_a() / (a.len() as f64 * 0.1)).sqrt() * va.sqrt();
        assert!((ma - mb).abs() < 3.0 * std::f64::consts::SQRT_2 * se_mean, "means {ma} {mb}");
        assert!((va - vb).abs() < 0.1 * va, "variances {va} {vb}");
    }
}

#[test]
fn supgamma_gaussian_variance_matches_leb_a() {
    // Long memory: lumping beyond the grid end keeps the marginal exact.
    let seed = SeedSpec::gaussian_normalized(0.0).unwrap();
    let trawl = TrawlSpec::sup_gamma(0.1, 1.5).unwrap();
    let cfg = SimConfig::new(trawl, seed, 0.1, 5, 1);
    let x0: Vec<f64> = (0..20_000).map(|r| simulate_stream(&cfg, r).unwrap().values()[4]).collect();
    let m = x0.iter().sum::<f64>() / x0.len() as f64;
    let v = x0.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (x0.len() - 1) as f64;
    assert!((v - 0.2).abs() < 0.01, "variance {v}");
}
