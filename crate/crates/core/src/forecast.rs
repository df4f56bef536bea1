//! Conditional-mean forecasts, rolling-window evaluation and Diebold–Mariano
//! comparisons.
//!
//! The nonparametric predictors share the affine form
//! `X̂_{t+h} = w·X_t + (1-w)·X̄` with `w = Leb(A∩A_h)/Leb(A)` estimated from
//! the window; they differ only in the slice estimator.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::estimator::{SliceEstimator, SliceMethod};
use crate::simulator::TimeSeries;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Predictor {
    /// Slices from Riemann sums of `â`.
    TrawlSum,
    /// Slices from the sample autocovariance.
    EmpiricalAcf,
    /// Last observed value.
    Naive,
    /// Negative binomial seed with trawl `c(1+s/ᾱ)^{-H}`.
    ParametricSupGammaNb { alpha: f64, h: f64, c: f64, theta: f64 },
}

impl Predictor {
    pub fn parametric(alpha: f64, h: f64, c: f64, theta: f64) -> Result<Self> {
        if !(alpha > 0.0 && h > 1.0 && c > 0.0 && theta > 0.0 && theta < 1.0) {
            return Err(Error::domain(format!(
                "parametric predictor needs alpha > 0, H > 1, c > 0, theta in (0,1); got ({alpha}, {h}, {c}, {theta})"
            )));
        }
        Ok(Predictor::ParametricSupGammaNb { alpha, h, c, theta })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Predictor::TrawlSum => "trawl",
            Predictor::EmpiricalAcf => "acf",
            Predictor::Naive => "naive",
            Predictor::ParametricSupGammaNb { .. } => "parametric",
        }
    }

    fn slice_method(&self) -> Option<SliceMethod> {
        match self {
            Predictor::TrawlSum => Some(SliceMethod::TrawlSum),
            Predictor::EmpiricalAcf => Some(SliceMethod::EmpiricalAcf),
            _ => None,
        }
    }
}

impl std::str::FromStr for Predictor {
    type Err = Error;

    /// `trawl`, `acf`, `naive` or `parametric:alpha,H,c,theta`.
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "trawl" => Ok(Predictor::TrawlSum),
            "acf" => Ok(Predictor::EmpiricalAcf),
            "naive" => Ok(Predictor::Naive),
            other => {
                let params = other
                    .strip_prefix("parametric:")
                    .ok_or_else(|| Error::domain(format!("unknown predictor '{other}'")))?;
                let v: Vec<f64> = params
                    .split(',')
                    .map(|p| p.trim().parse::<f64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|e| Error::domain(format!("bad parametric predictor '{other}': {e}")))?;
                if v.len() != 4 {
                    return Err(Error::domain("parametric predictor takes alpha,H,c,theta"));
                }
                Predictor::parametric(v[0], v[1], v[2], v[3])
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub value: f64,
    /// `Leb(A)` was not positive and the last value was used instead.
    pub fallback: bool,
}

/// `w·x_t + (1-w)·mean` with `w` clamped to `[0, 1]`.
pub fn affine_forecast(weight: f64, last: f64, mean: f64) -> f64 {
    let w = weight.clamp(0.0, 1.0);
    w * last + (1.0 - w) * mean
}

fn parametric_forecast(alpha: f64, hexp: f64, c: f64, theta: f64, last: f64, horizon: f64) -> f64 {
    let rho = (1.0 + horizon / alpha).powf(1.0 - hexp);
    let leb_minus = c * alpha / (hexp - 1.0) * (1.0 - rho);
    rho * last + leb_minus * (1.0 - theta)
}

/// Forecast `h_steps` grid steps ahead of the last observation of `window`.
pub fn predict(window: &TimeSeries, predictor: &Predictor, h_steps: usize) -> Result<Prediction> {
    Ok(predict_horizons(window, predictor, h_steps)?[h_steps - 1])
}

/// Forecasts for `1..=h_max` steps from one window.
pub fn predict_horizons(window: &TimeSeries, predictor: &Predictor, h_max: usize) -> Result<Vec<Prediction>> {
    if window.len() < 3 {
        return Err(Error::InsufficientData { needed: 3, got: window.len() });
    }
    if h_max == 0 {
        return Err(Error::domain("forecast horizon must be >= 1 step"));
    }
    let last = window.last();
    let delta = window.delta();
    let naive = Prediction { value: last, fallback: false };
    match *predictor {
        Predictor::Naive => Ok(vec![naive; h_max]),
        Predictor::ParametricSupGammaNb { alpha, h, c, theta } => Ok((1..=h_max)
            .map(|k| Prediction {
                value: parametric_forecast(alpha, h, c, theta, last, k as f64 * delta),
                fallback: false,
            })
            .collect()),
        Predictor::TrawlSum | Predictor::EmpiricalAcf => {
            let method = predictor.slice_method().expect("nonparametric predictor");
            let est = SliceEstimator::new(window, method, h_max)?;
            let mean = window.mean();
            (1..=h_max)
                .map(|k| match est.estimate(k as f64 * delta) {
                    Ok(s) => Ok(Prediction { value: affine_forecast(s.ratio_cap, last, mean), fallback: false }),
                    Err(e) if e.is_degenerate() => Ok(Prediction { value: last, fallback: true }),
                    Err(e) => Err(e),
                })
                .collect()
        }
    }
}

/// Mean squared and absolute error of one predictor at one horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct HorizonLoss {
    pub h: usize,
    pub predictor: Predictor,
    pub mse: f64,
    pub mae: f64,
    /// Ratios against the naive predictor, when it is part of the run.
    pub ratio_vs_naive_mse: Option<f64>,
    pub ratio_vs_naive_mae: Option<f64>,
}

/// Diebold–Mariano comparison of the reference predictor against another.
#[derive(Debug, Clone, PartialEq)]
pub struct DmComparison {
    pub h: usize,
    pub reference: Predictor,
    pub other: Predictor,
    pub power: u32,
    pub result: DmResult,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForecastReport {
    pub window: usize,
    pub h_max: usize,
    pub origins: usize,
    pub predictors: Vec<Predictor>,
    /// Grouped by horizon, then predictor.
    pub losses: Vec<HorizonLoss>,
    /// The first predictor against every other one, per horizon and power.
    pub dm: Vec<DmComparison>,
    /// `errors[p][h-1][o]`: forecast minus outcome for predictor `p`.
    pub errors: Vec<Vec<Vec<f64>>>,
    /// Forecasts that fell back to the last value.
    pub fallbacks: usize,
}

impl ForecastReport {
    pub fn loss(&self, h: usize, predictor: &Predictor) -> Option<&HorizonLoss> {
        self.losses.iter().find(|l| l.h == h && l.predictor == *predictor)
    }
}

/// Options of [`rolling_forecast`].
#[derive(Debug, Clone, PartialEq)]
pub struct RollingOptions {
    /// Re-estimate the slices every `stride` origins.
    pub stride: usize,
    /// Loss powers used in the Diebold–Mariano comparisons.
    pub dm_powers: Vec<u32>,
}

impl Default for RollingOptions {
    fn default() -> Self {
        RollingOptions { stride: 1, dm_powers: vec![1, 2] }
    }
}

/// Rolling-window forecasts: windows `[i, i+W)` for `i = 0..n-W-h_max`, each
/// forecasting `1..=h_max` steps past its last observation.
pub fn rolling_forecast(
    series: &TimeSeries,
    window_n: usize,
    h_max: usize,
    predictors: &[Predictor],
    opts: &RollingOptions,
) -> Result<ForecastReport> {
    let n = series.len();
    let needed = window_n + h_max + 1;
    if n < needed {
        return Err(Error::InsufficientData { needed, got: n });
    }
    if window_n < 3 || h_max == 0 || predictors.is_empty() || opts.stride == 0 {
        return Err(Error::domain("need window >= 3, h_max >= 1, a predictor and stride >= 1"));
    }
    if let Some(p) = opts.dm_powers.iter().find(|p| !matches!(p, 1 | 2)) {
        return Err(Error::domain(format!("loss power must be 1 or 2, got {p}")));
    }
    let origins = n - window_n - h_max;
    let x = series.values();
    let delta = series.delta();

    // weights[p][block][h-1] for nonparametric predictors, refreshed per stride block
    let blocks: Vec<usize> = (0..origins).step_by(opts.stride).collect();
    let weights: Vec<Vec<Option<Vec<Option<f64>>>>> = predictors
        .iter()
        .map(|p| {
            blocks
                .par_iter()
                .map(|&i| -> Result<Option<Vec<Option<f64>>>> {
                    let Some(method) = p.slice_method() else { return Ok(None) };
                    let window = TimeSeries::new(delta, x[i..i + window_n].to_vec())?;
                    let est = SliceEstimator::new(&window, method, h_max)?;
                    (1..=h_max)
                        .map(|k| match est.estimate(k as f64 * delta) {
                            Ok(s) => Ok(Some(s.ratio_cap)),
                            Err(e) if e.is_degenerate() => Ok(None),
                            Err(e) => Err(e),
                        })
                        .collect::<Result<Vec<_>>>()
                        .map(Some)
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;

    let mut errors = vec![vec![Vec::with_capacity(origins); h_max]; predictors.len()];
    let mut fallbacks = 0usize;
    let mut sum = 0.0;
    for i in 0..origins {
        // Running window sum keeps the mean O(1) per origin.
        if i == 0 {
            sum = x[..window_n].iter().sum();
        } else {
            sum += x[i + window_n - 1] - x[i - 1];
        }
        let mean = sum / window_n as f64;
        let t = i + window_n - 1;
        let last = x[t];
        let block = i / opts.stride;
        for (p, predictor) in predictors.iter().enumerate() {
            for k in 1..=h_max {
                let value = match *predictor {
                    Predictor::Naive => last,
                    Predictor::ParametricSupGammaNb { alpha, h, c, theta } => {
                        parametric_forecast(alpha, h, c, theta, last, k as f64 * delta)
                    }
                    Predictor::TrawlSum | Predictor::EmpiricalAcf => {
                        match weights[p][block].as_ref().expect("nonparametric")[k - 1] {
                            Some(w) => affine_forecast(w, last, mean),
                            None => {
                                fallbacks += 1;
                                last
                            }
                        }
                    }
                };
                errors[p][k - 1].push(value - x[t + k]);
            }
        }
    }

    let naive_idx = predictors.iter().position(|p| *p == Predictor::Naive);
    let mut losses = Vec::with_capacity(h_max * predictors.len());
    for k in 1..=h_max {
        let stats: Vec<(f64, f64)> = errors.iter().map(|e| mse_mae(&e[k - 1])).collect();
        for (p, predictor) in predictors.iter().enumerate() {
            let (mse, mae) = stats[p];
            losses.push(HorizonLoss {
                h: k,
                predictor: *predictor,
                mse,
                mae,
                ratio_vs_naive_mse: naive_idx.map(|j| mse / stats[j].0),
                ratio_vs_naive_mae: naive_idx.map(|j| mae / stats[j].1),
            });
        }
    }

    let mut dm = Vec::new();
    if origins >= 10 {
        for k in 1..=h_max {
            for (p, other) in predictors.iter().enumerate().skip(1) {
                for &power in &opts.dm_powers {
                    let la = losses_of(&errors[0][k - 1], power);
                    let lb = losses_of(&errors[p][k - 1], power);
                    let result = match dm_test(&la, &lb, k, power) {
                        Ok(r) => r,
                        Err(e) if e.is_degenerate() => DmResult::undefined(power),
                        Err(e) => return Err(e),
                    };
                    dm.push(DmComparison { h: k, reference: predictors[0], other: *other, power, result });
                }
            }
        }
    }

    Ok(ForecastReport {
        window: window_n,
        h_max,
        origins,
        predictors: predictors.to_vec(),
        losses,
        dm,
        errors,
        fallbacks,
    })
}

fn mse_mae(e: &[f64]) -> (f64, f64) {
    let n = e.len() as f64;
    (e.iter().map(|v| v * v).sum::<f64>() / n, e.iter().map(|v| v.abs()).sum::<f64>() / n)
}

/// `|e|^power` elementwise.
pub fn losses_of(errors: &[f64], power: u32) -> Vec<f64> {
    errors.iter().map(|e| e.abs().powi(power as i32)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DmResult {
    pub statistic: f64,
    /// One-sided `Φ(DM)`: small values favour the first loss sequence.
    pub p_value: f64,
    pub power: u32,
    /// The loss differential is a nonzero constant.
    pub dominance: bool,
}

impl DmResult {
    fn undefined(power: u32) -> Self {
        DmResult { statistic: f64::NAN, p_value: f64::NAN, power, dominance: false }
    }
}

/// Diebold–Mariano test of equal accuracy against "`loss_a` is smaller",
/// with a rectangular-kernel long-run variance over `h-1` lags.
pub fn dm_test(loss_a: &[f64], loss_b: &[f64], h: usize, power: u32) -> Result<DmResult> {
    if loss_a.len() != loss_b.len() {
        return Err(Error::domain(format!("loss lengths differ: {} vs {}", loss_a.len(), loss_b.len())));
    }
    if !matches!(power, 1 | 2) {
        return Err(Error::domain(format!("loss power must be 1 or 2, got {power}")));
    }
    if h == 0 {
        return Err(Error::domain("horizon must be >= 1"));
    }
    let t = loss_a.len();
    if t < 10 {
        return Err(Error::InsufficientData { needed: 10, got: t });
    }
    let d: Vec<f64> = loss_a.iter().zip(loss_b).map(|(a, b)| a - b).collect();
    let tf = t as f64;
    let mean = d.iter().sum::<f64>() / tf;
    if d.iter().all(|v| *v == 0.0) {
        return Ok(DmResult { statistic: 0.0, p_value: 0.5, power, dominance: false });
    }
    let spread = d.iter().map(|v| (v - mean).abs()).fold(0.0, f64::max);
    if spread <= 1e-12 * mean.abs() {
        let statistic = mean.signum() * f64::INFINITY;
        let p_value = if mean < 0.0 { 0.0 } else { 1.0 };
        return Ok(DmResult { statistic, p_value, power, dominance: true });
    }
    let autocov = |k: usize| (k..t).map(|s| (d[s] - mean) * (d[s - k] - mean)).sum::<f64>() / tf;
    let mut lrv = autocov(0);
    for k in 1..h.min(t) {
        lrv += 2.0 * autocov(k);
    }
    let lrv = lrv.max(0.0);
    if lrv == 0.0 {
        return Err(Error::degenerate("long-run variance of the loss differential is zero"));
    }
    let statistic = mean / (lrv / tf).sqrt();
    let p_value = Normal::standard().cdf(statistic);
    Ok(DmResult { statistic, p_value, power, dominance: false })
}

/// Significance marks: `***` p≤0.001, `**` p≤0.01, `*` p≤0.05, `+` p≤0.1.
pub fn stars(p: f64) -> &'static str {
    if p <= 0.001 {
        "***"
    } else if p <= 0.01 {
        "**"
    } else if p <= 0.05 {
        "*"
    } else if p <= 0.1 {
        "+"
    } else {
        ""
    }
}
