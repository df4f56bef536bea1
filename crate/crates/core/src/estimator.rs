//! Nonparametric estimators built on the sample autocovariance.
//!
//! With `δ_k = X_{(k+1)Δ} - X_{kΔ}` and `Γ̂_l` the sample autocovariance
//! (divisor `n`):
//!
//! ```text
//! â(lΔ)  = -(Γ̂_{l+1} - Γ̂_l) / Δ                 l >= 1
//! â(0)   = (1 / 2Δn) Σ_{k=0}^{n-2} δ_k²
//! â'(lΔ) = (1 / nΔ²) Σ_{k=l+1}^{n-2} δ_k δ_{k-l-1}
//! Q_n    = (1 / 2Δn) Σ_{k=0}^{n-2} δ_k⁴
//! ```
//!
//! `â` is piecewise constant: a time `t` maps to the grid index `⌊t/Δ⌋`.

use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::grid_index;
use crate::simulator::TimeSeries;

/// Above this many multiply-adds lagged sums switch to the FFT.
const DIRECT_WORK_LIMIT: usize = 4_000_000;

/// Floor applied to a non-positive variance estimate.
pub const SIGMA2_FLOOR: f64 = 1e-10;

/// `R(j) = Σ_{k=j}^{len-1} y_k y_{k-j}` for `j = 0..=max_lag`.
pub(crate) fn lagged_products(y: &[f64], max_lag: usize) -> Vec<f64> {
    let len = y.len();
    let mut out = vec![0.0; max_lag + 1];
    let top = max_lag.min(len.saturating_sub(1));
    if len == 0 {
        return out;
    }
    if len.saturating_mul(top + 1) <= DIRECT_WORK_LIMIT {
        for (j, r) in out.iter_mut().enumerate().take(top + 1) {
            *r = y[j..].iter().zip(y).map(|(a, b)| a * b).sum();
        }
        return out;
    }
    let size = (len + top + 1).next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    let forward: Arc<dyn rustfft::Fft<f64>> = planner.plan_fft_forward(size);
    let inverse = planner.plan_fft_inverse(size);
    let mut buf: Vec<Complex<f64>> = y.iter().map(|&v| Complex::new(v, 0.0)).collect();
    buf.resize(size, Complex::new(0.0, 0.0));
    forward.process(&mut buf);
    for c in buf.iter_mut() {
        *c = Complex::new(c.norm_sqr(), 0.0);
    }
    inverse.process(&mut buf);
    let scale = 1.0 / size as f64;
    for (j, r) in out.iter_mut().enumerate().take(top + 1) {
        *r = buf[j].re * scale;
    }
    out
}

fn increments(x: &[f64]) -> Vec<f64> {
    x.windows(2).map(|w| w[1] - w[0]).collect()
}

fn need(series: &TimeSeries, n: usize) -> Result<()> {
    if series.len() < n {
        Err(Error::InsufficientData { needed: n, got: series.len() })
    } else {
        Ok(())
    }
}

/// Sample autocovariances `Γ̂_0..Γ̂_L` of a series.
#[derive(Debug, Clone, PartialEq)]
pub struct AcfTable {
    /// Grid width of the underlying series.
    pub delta: f64,
    /// `Γ̂_l` for `l = 0..=L`, with divisor `n`.
    pub gamma_hat: Vec<f64>,
    /// Sample mean `X̄`.
    pub mean: f64,
    /// Number of observations.
    pub n: usize,
}

impl AcfTable {
    /// `Γ̂_l`; zero for `l >= n` (empty sum).
    ///
    /// # Panics
    /// If `l` lies below `n` but beyond the computed range.
    pub fn gamma(&self, l: usize) -> f64 {
        if l >= self.n {
            return 0.0;
        }
        self.gamma_hat[l]
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn max_lag(&self) -> usize {
        self.gamma_hat.len() - 1
    }
}

/// Full sample autocovariance `Γ̂_0..Γ̂_{n-1}`.
pub fn sample_acf(series: &TimeSeries) -> AcfTable {
    let n = series.len();
    sample_acf_upto(series, n - 1).expect("lag n-1 is always in range")
}

/// Sample autocovariance up to lag `max_lag <= n-1`.
pub fn sample_acf_upto(series: &TimeSeries, max_lag: usize) -> Result<AcfTable> {
    let n = series.len();
    if max_lag >= n {
        return Err(Error::InsufficientData { needed: max_lag + 1, got: n });
    }
    let mean = series.mean();
    let y: Vec<f64> = series.values().iter().map(|v| v - mean).collect();
    let nf = n as f64;
    let gamma_hat = lagged_products(&y, max_lag).into_iter().map(|r| r / nf).collect();
    Ok(AcfTable { delta: series.delta(), gamma_hat, mean, n })
}

/// `â(0)` from the averaged realised variance.
pub fn estimate_trawl_at_zero(series: &TimeSeries) -> f64 {
    let x = series.values();
    let rv: f64 = x.windows(2).map(|w| (w[1] - w[0]).powi(2)).sum();
    rv / (2.0 * series.delta() * series.len() as f64)
}

/// `â(lΔ)` for `l = 0..=max_lag`, requires `max_lag <= n-2`.
pub fn estimate_trawl(series: &TimeSeries, max_lag: usize) -> Result<Vec<f64>> {
    need(series, 3)?;
    if max_lag + 2 > series.len() {
        return Err(Error::InsufficientData { needed: max_lag + 2, got: series.len() });
    }
    let acf = sample_acf_upto(series, max_lag + 1)?;
    Ok(trawl_from_acf(series, &acf, max_lag))
}

fn trawl_from_acf(series: &TimeSeries, acf: &AcfTable, max_lag: usize) -> Vec<f64> {
    let delta = series.delta();
    let mut a = Vec::with_capacity(max_lag + 1);
    a.push(estimate_trawl_at_zero(series));
    for l in 1..=max_lag {
        a.push(-(acf.gamma(l + 1) - acf.gamma(l)) / delta);
    }
    a
}

/// `â'(lΔ)` for `l = 0..=max_lag`, requires `max_lag <= n-3`.
pub fn estimate_derivative(series: &TimeSeries, max_lag: usize) -> Result<Vec<f64>> {
    need(series, 3)?;
    if max_lag + 3 > series.len() {
        return Err(Error::InsufficientData { needed: max_lag + 3, got: series.len() });
    }
    Ok(derivative_from_increments(series.values(), series.delta(), max_lag, series.len()))
}

/// Cross-increment sums of `x` normalised by `norm · Δ²`.
fn derivative_from_increments(x: &[f64], delta: f64, max_lag: usize, norm: usize) -> Vec<f64> {
    let d = increments(x);
    let r = lagged_products(&d, max_lag + 1);
    let scale = 1.0 / (norm as f64 * delta * delta);
    r[1..].iter().map(|v| v * scale).collect()
}

/// Smallest `k` with `k³ >= n`.
pub fn default_stride(n: usize) -> usize {
    let mut k = (n as f64).cbrt().round().max(1.0) as usize;
    while k * k * k < n {
        k += 1;
    }
    while k > 1 && (k - 1).pow(3) >= n {
        k -= 1;
    }
    k
}

/// `ã'(t)`: the derivative estimator applied to `X_{iKΔ}`, `i = 0..=M`,
/// `M = ⌊(n-1)/K⌋`, normalised by `M·(KΔ)²`.
pub fn estimate_derivative_subsampled(series: &TimeSeries, stride: usize, t: f64) -> Result<f64> {
    if stride == 0 {
        return Err(Error::domain("subsample stride must be >= 1"));
    }
    if !(t >= 0.0) {
        return Err(Error::domain(format!("time must be >= 0, got {t}")));
    }
    let m = (series.len() - 1) / stride;
    let sub: Vec<f64> = series.values().iter().step_by(stride).take(m + 1).copied().collect();
    let delta_sub = stride as f64 * series.delta();
    let l = grid_index(t, delta_sub);
    // The sum over k = l+1..=M-1 must be non-empty and M >= 3.
    if m < 3 || l + 2 > m {
        return Err(Error::InsufficientData { needed: stride * (l + 2).max(3) + 1, got: series.len() });
    }
    Ok(derivative_from_increments(&sub, delta_sub, l, m)[l])
}

/// `Q_n = (1 / 2Δn) Σ δ_k⁴`.
pub fn quarticity(series: &TimeSeries) -> f64 {
    let x = series.values();
    let s: f64 = x.windows(2).map(|w| (w[1] - w[0]).powi(4)).sum();
    s / (2.0 * series.delta() * series.len() as f64)
}

/// `σ̂²(t)` together with its four terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AvarEstimate {
    /// `v̂_1 + v̂_2 + v̂_3 + v̂_4`, floored at [`SIGMA2_FLOOR`].
    pub value: f64,
    pub terms: [f64; 4],
    /// Set when the raw sum was not positive.
    pub degenerate: bool,
}

/// Step-function estimate of the asymptotic variance of `â(t)`.
///
/// `a_hat` holds `â(lΔ)` for `l = 0..=L`; `n_n` defaults to `L`. The cross
/// term `v̂_3` runs over `l = 0..=min(i, L-i)`.
pub fn estimate_avar(a_hat: &[f64], q_n: f64, delta: f64, n_n: Option<usize>, t: f64) -> Result<AvarEstimate> {
    if a_hat.is_empty() {
        return Err(Error::domain("empty trawl grid"));
    }
    if !(delta > 0.0) || !(t >= 0.0) || !q_n.is_finite() {
        return Err(Error::domain("need delta > 0, t >= 0 and finite Q_n"));
    }
    let last = a_hat.len() - 1;
    let nn = n_n.unwrap_or(last);
    if nn > last {
        return Err(Error::domain(format!("N = {nn} exceeds the grid length {}", a_hat.len())));
    }
    let i = grid_index(t, delta);
    if i > last {
        return Err(Error::domain(format!("t = {t} lies beyond the trawl grid")));
    }
    let a0 = a_hat[0];
    if !(a0 > 0.0) {
        return Err(Error::degenerate(format!("â(0) = {a0} is not positive")));
    }
    let v1 = q_n / a0 * a_hat[i];
    let v2 = 2.0 * delta * a_hat[..=nn].iter().map(|a| a * a).sum::<f64>();
    let v3 = 2.0 * delta * (0..=i.min(last - i)).map(|l| a_hat[i - l] * a_hat[i + l]).sum::<f64>();
    let v4 = if nn >= 2 * i {
        -2.0 * delta * (i..=nn - i).map(|l| a_hat[l - i] * a_hat[i + l]).sum::<f64>()
    } else {
        0.0
    };
    let raw = v1 + v2 + v3 + v4;
    let degenerate = !(raw > 0.0);
    Ok(AvarEstimate {
        value: if degenerate { SIGMA2_FLOOR } else { raw },
        terms: [v1, v2, v3, v4],
        degenerate,
    })
}

/// Two-sided `1-β` normal interval `â ± z·sqrt(σ̂² / nΔ)`.
pub fn confidence_interval(a_hat_t: f64, sigma2_t: f64, n: usize, delta: f64, beta: f64) -> Result<(f64, f64)> {
    if !(beta > 0.0 && beta < 1.0) {
        return Err(Error::domain(format!("level must lie in (0, 1), got {beta}")));
    }
    if !(sigma2_t > 0.0) {
        return Err(Error::degenerate(format!("variance {sigma2_t} is not positive")));
    }
    let z = normal_quantile(1.0 - beta / 2.0);
    let half = z * (sigma2_t / (n as f64 * delta)).sqrt();
    Ok((a_hat_t - half, a_hat_t + half))
}

pub(crate) fn normal_quantile(p: f64) -> f64 {
    Normal::standard().inverse_cdf(p)
}

/// Options for [`TrawlEstimate::compute`].
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EstimateOptions {
    /// Largest grid index `L`; defaults to `n-3`.
    #[serde(default)]
    pub max_lag: Option<usize>,
    /// Truncation `N_n` of the variance sums; defaults to `L`.
    #[serde(default)]
    pub n_n: Option<usize>,
    /// Subsample stride `K_n`; defaults to `⌈n^{1/3}⌉`.
    #[serde(default)]
    pub k_n: Option<usize>,
}

/// Trawl function estimate on the grid `0, Δ, …, LΔ`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrawlEstimate {
    pub delta: f64,
    pub n: usize,
    /// `â(lΔ)`
    pub a_hat: Vec<f64>,
    /// `â'(lΔ)`
    pub a_hat_prime: Vec<f64>,
    /// `â(lΔ) - ½Δ â'(lΔ)`
    pub a_hat_bc: Vec<f64>,
    pub q_n: f64,
    /// `σ̂²(lΔ)`, filled by [`TrawlEstimate::with_avar`].
    pub sigma2_hat: Option<Vec<f64>>,
    /// Per-entry flag for floored variances.
    pub sigma2_degenerate: Option<Vec<bool>>,
    /// `(K_n, N_n)`
    pub tuning: (usize, usize),
}

impl TrawlEstimate {
    pub fn compute(series: &TimeSeries, opts: &EstimateOptions) -> Result<Self> {
        let n = series.len();
        need(series, 4)?;
        let max_lag = opts.max_lag.unwrap_or(n - 3);
        if max_lag + 3 > n {
            return Err(Error::InsufficientData { needed: max_lag + 3, got: n });
        }
        let acf = sample_acf_upto(series, max_lag + 1)?;
        let a_hat = trawl_from_acf(series, &acf, max_lag);
        let a_hat_prime = derivative_from_increments(series.values(), series.delta(), max_lag, n);
        let delta = series.delta();
        let a_hat_bc = a_hat
            .iter()
            .zip(&a_hat_prime)
            .map(|(a, d)| a - 0.5 * delta * d)
            .collect();
        let n_n = opts.n_n.unwrap_or(max_lag);
        if n_n > max_lag {
            return Err(Error::domain(format!("N = {n_n} exceeds the grid index {max_lag}")));
        }
        let k_n = opts.k_n.unwrap_or_else(|| default_stride(n));
        Ok(TrawlEstimate {
            delta,
            n,
            a_hat,
            a_hat_prime,
            a_hat_bc,
            q_n: quarticity(series),
            sigma2_hat: None,
            sigma2_degenerate: None,
            tuning: (k_n, n_n),
        })
    }

    pub fn max_lag(&self) -> usize {
        self.a_hat.len() - 1
    }

    /// Grid index of `t`, checked against the grid length.
    pub fn index(&self, t: f64) -> Result<usize> {
        if !(t >= 0.0) {
            return Err(Error::domain(format!("time must be >= 0, got {t}")));
        }
        let i = grid_index(t, self.delta);
        if i > self.max_lag() {
            return Err(Error::domain(format!("t = {t} lies beyond the estimated grid")));
        }
        Ok(i)
    }

    /// `σ̂²` at grid index `i`.
    pub fn avar_at(&self, i: usize) -> Result<AvarEstimate> {
        estimate_avar(&self.a_hat, self.q_n, self.delta, Some(self.tuning.1), i as f64 * self.delta)
    }

    /// Fill `sigma2_hat` on the whole grid.
    pub fn with_avar(mut self) -> Result<Self> {
        let mut values = Vec::with_capacity(self.a_hat.len());
        let mut flags = Vec::with_capacity(self.a_hat.len());
        for i in 0..self.a_hat.len() {
            let est = self.avar_at(i)?;
            values.push(est.value);
            flags.push(est.degenerate);
        }
        self.sigma2_hat = Some(values);
        self.sigma2_degenerate = Some(flags);
        Ok(self)
    }
}

/// Estimator of the slice areas `Leb(A)`, `Leb(A∩A_h)`, `Leb(A∖A_h)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SliceMethod {
    /// Riemann sums of `â` over the whole grid.
    TrawlSum,
    /// Riemann sums of the bias-corrected `â - ½Δâ'`.
    TrawlSumBC,
    /// `Γ̂_0` and `Γ̂_{⌊h/Δ⌋}`.
    EmpiricalAcf,
}

impl SliceMethod {
    pub fn name(&self) -> &'static str {
        match self {
            SliceMethod::TrawlSum => "trawl_sum",
            SliceMethod::TrawlSumBC => "trawl_sum_bc",
            SliceMethod::EmpiricalAcf => "empirical_acf",
        }
    }
}

impl std::str::FromStr for SliceMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "trawl_sum" | "trawl" => Ok(SliceMethod::TrawlSum),
            "trawl_sum_bc" | "trawl_bc" => Ok(SliceMethod::TrawlSumBC),
            "empirical_acf" | "acf" => Ok(SliceMethod::EmpiricalAcf),
            other => Err(Error::domain(format!("unknown slice method '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SliceEstimate {
    pub method: SliceMethod,
    pub h: f64,
    pub leb_a: f64,
    /// Estimate of `Leb(A∩A_h)` after clamping to `[0, Leb(A)]`.
    pub leb_cap: f64,
    /// Unclamped estimate of `Leb(A∩A_h)`.
    pub leb_cap_raw: f64,
    pub leb_minus: f64,
    pub ratio_cap: f64,
    pub ratio_minus: f64,
}

/// Slice estimates for many horizons from one pass over a series.
///
/// Tail sums of `â` telescope into autocovariances, so only lags up to the
/// largest horizon are needed:
/// `Σ_{l=l0}^{n-2} â(lΔ)Δ = Γ̂_{l0} - Γ̂_{n-1}` for `l0 >= 1`.
#[derive(Debug, Clone)]
pub struct SliceEstimator {
    method: SliceMethod,
    delta: f64,
    n: usize,
    acf: AcfTable,
    gamma_last: f64,
    gamma_second_last: f64,
    /// Cumulative `Σ_{j=1}^{l} R_δ(j)` for `l = 0..=max_lag` (bias-corrected only).
    deriv_prefix: Vec<f64>,
    deriv_total: f64,
    leb_a: f64,
}

impl SliceEstimator {
    /// Prepare estimates for horizons `h` with `h/Δ <= max_steps`.
    pub fn new(series: &TimeSeries, method: SliceMethod, max_steps: usize) -> Result<Self> {
        let n = series.len();
        need(series, 4)?;
        let delta = series.delta();
        let top = (max_steps + 1).min(n - 1);
        let acf = sample_acf_upto(series, top)?;
        let x = series.values();
        let mean = acf.mean;
        let gamma_last = (x[n - 1] - mean) * (x[0] - mean) / n as f64;
        let gamma_second_last = if n >= 3 {
            ((x[n - 2] - mean) * (x[0] - mean) + (x[n - 1] - mean) * (x[1] - mean)) / n as f64
        } else {
            0.0
        };
        let a0 = estimate_trawl_at_zero(series);
        let mut deriv_prefix = Vec::new();
        let mut deriv_total = 0.0;
        let leb_a = match method {
            SliceMethod::EmpiricalAcf => acf.gamma(0),
            SliceMethod::TrawlSum => a0 * delta + acf.gamma(1) - gamma_last,
            SliceMethod::TrawlSumBC => {
                // Grid l = 0..=n-3: Σ (â - ½Δâ')Δ.
                let d = increments(x);
                let r = lagged_products(&d, top);
                let mut acc = 0.0;
                deriv_prefix.push(0.0);
                for v in &r[1..] {
                    acc += v;
                    deriv_prefix.push(acc);
                }
                let sum_d: f64 = d.iter().sum();
                let sum_d2: f64 = d.iter().map(|v| v * v).sum();
                deriv_total = 0.5 * (sum_d * sum_d - sum_d2);
                let sum_prime = deriv_total / (n as f64 * delta * delta);
                a0 * delta + acf.gamma(1) - gamma_second_last - 0.5 * delta * delta * sum_prime
            }
        };
        Ok(SliceEstimator {
            method,
            delta,
            n,
            acf,
            gamma_last,
            gamma_second_last,
            deriv_prefix,
            deriv_total,
            leb_a,
        })
    }

    pub fn leb_a(&self) -> f64 {
        self.leb_a
    }

    pub fn estimate(&self, h: f64) -> Result<SliceEstimate> {
        if !(h >= 0.0) {
            return Err(Error::domain(format!("horizon must be >= 0, got {h}")));
        }
        let leb_a = self.leb_a;
        if !(leb_a > 0.0) {
            return Err(Error::degenerate(format!("estimated Leb(A) = {leb_a} is not positive")));
        }
        let n = self.n;
        let raw = match self.method {
            SliceMethod::EmpiricalAcf => {
                let l = grid_index(h, self.delta);
                self.gamma_checked(l)?
            }
            SliceMethod::TrawlSum => {
                let l0 = ceil_index(h, self.delta);
                if l0 == 0 {
                    leb_a
                } else if l0 > n - 2 {
                    0.0
                } else {
                    self.gamma_checked(l0)? - self.gamma_last
                }
            }
            SliceMethod::TrawlSumBC => {
                let l0 = ceil_index(h, self.delta);
                let last = n - 3;
                if l0 == 0 {
                    leb_a
                } else if l0 > last {
                    0.0
                } else {
                    // Σ_{l=l0}^{n-3} â(lΔ)Δ = Γ̂_{l0} - Γ̂_{n-2}
                    let x_part = self.gamma_checked(l0)? - self.gamma_second_last;
                    // Σ_{l=l0}^{n-3} â'(lΔ) = Σ_{j=l0+1}^{n-2} R_δ(j) / (nΔ²)
                    let tail = self.deriv_total - self.deriv_prefix[l0];
                    let prime = tail / (n as f64 * self.delta * self.delta);
                    x_part - 0.5 * self.delta * self.delta * prime
                }
            }
        };
        let cap = raw.clamp(0.0, leb_a);
        let minus = leb_a - cap;
        Ok(SliceEstimate {
            method: self.method,
            h,
            leb_a,
            leb_cap: cap,
            leb_cap_raw: raw,
            leb_minus: minus,
            ratio_cap: cap / leb_a,
            ratio_minus: minus / leb_a,
        })
    }

    fn gamma_checked(&self, l: usize) -> Result<f64> {
        if l >= self.n {
            return Ok(0.0);
        }
        if l > self.acf.max_lag() {
            return Err(Error::domain(format!("lag {l} exceeds the prepared horizon")));
        }
        Ok(self.acf.gamma(l))
    }
}

/// `⌈t/Δ⌉`, treating values within rounding distance of a multiple as exact.
fn ceil_index(t: f64, delta: f64) -> usize {
    let x = t / delta;
    let r = x.round();
    if (x - r).abs() <= 1e-9 * r.abs().max(1.0) {
        r.max(0.0) as usize
    } else {
        x.ceil().max(0.0) as usize
    }
}

/// Slice estimate at one horizon.
pub fn estimate_slices(series: &TimeSeries, h: f64, method: SliceMethod) -> Result<SliceEstimate> {
    if !(h >= 0.0) {
        return Err(Error::domain(format!("horizon must be >= 0, got {h}")));
    }
    let steps = ceil_index(h, series.delta()).min(series.len());
    SliceEstimator::new(series, method, steps)?.estimate(h)
}
