//! Exact slice-grid simulation of trawl processes on an equidistant grid.
//!
//! For a grid `t_i = iΔ`, a point `(s, y)` of the plane with `s` in the column
//! `(t_{k-1}, t_k]` belongs to the trawl sets `A_{t_k}, …, A_{t_{k+m}}` for some
//! duration `m` and to no others. Grouping points by `(k, m)` partitions the
//! union of all trawl sets into slices whose areas depend on `m` only:
//!
//! ```text
//! strip  S_m = ∫_{mΔ}^{(m+1)Δ} a(u) du        (points alive at least m steps)
//! slice  D_m = S_m - S_{m+1}                  (points alive exactly m steps)
//! ```
//!
//! Every slice gets an independent draw of the seed law scaled to its area,
//! and `X_{t_i}` is the sum of the draws of the slices alive at `t_i`. Slices
//! that outlive the last observation are merged, so the path is exact when the
//! truncation reaches the end of the grid. Otherwise slices longer than `J`
//! steps are merged into one remainder slice per column.

use rand::Rng;
use rand_distr::{Distribution, Gamma, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{stream_rng, StreamRng};
use crate::trawl_model::{SeedSpec, TrawlSpec};

/// Default relative tail mass beyond the truncation time.
pub const DEFAULT_TAIL_TOLERANCE: f64 = 1e-6;

const MAX_OBSERVATIONS: usize = 200_000_000;
const MAX_SLICE_DRAWS: u128 = 1 << 34;

/// Equidistant observations `x_0, …, x_{n-1}` with grid width `Δ`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    delta: f64,
    values: Vec<f64>,
}

impl TimeSeries {
    pub fn new(delta: f64, values: Vec<f64>) -> Result<Self> {
        if !(delta.is_finite() && delta > 0.0) {
            return Err(Error::domain(format!("grid width must be > 0, got {delta}")));
        }
        if values.len() < 2 {
            return Err(Error::InsufficientData { needed: 2, got: values.len() });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::domain(format!("observation {i} is not finite")));
        }
        Ok(TimeSeries { delta, values })
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn last(&self) -> f64 {
        self.values[self.values.len() - 1]
    }

    /// Every `stride`-th observation, starting from the first.
    pub fn subsample(&self, stride: usize) -> Result<TimeSeries> {
        if stride == 0 {
            return Err(Error::domain("subsampling stride must be >= 1"));
        }
        let values: Vec<f64> = self.values.iter().step_by(stride).copied().collect();
        TimeSeries::new(self.delta * stride as f64, values)
    }

    /// Observations `start..end` as a new series.
    pub fn window(&self, start: usize, end: usize) -> Result<TimeSeries> {
        if start > end || end > self.values.len() {
            return Err(Error::domain(format!("window {start}..{end} out of range")));
        }
        TimeSeries::new(self.delta, self.values[start..end].to_vec())
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}

/// Configuration of one simulated path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub trawl: TrawlSpec,
    #[serde(rename = "marginal")]
    pub seed: SeedSpec,
    pub delta: f64,
    pub n: usize,
    /// Truncation time `T_max`; defaults to the point where the remaining
    /// trawl mass is `1e-6 · Leb(A)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tail_cutoff: Option<f64>,
    #[serde(rename = "seed", default)]
    pub rng_seed: u64,
}

impl SimConfig {
    pub fn new(trawl: TrawlSpec, seed: SeedSpec, delta: f64, n: usize, rng_seed: u64) -> Self {
        SimConfig { trawl, seed, delta, n, tail_cutoff: None, rng_seed }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.delta.is_finite() && self.delta > 0.0) {
            return Err(Error::config(format!("delta must be > 0, got {}", self.delta)));
        }
        if self.n < 2 {
            return Err(Error::config(format!("n must be >= 2, got {}", self.n)));
        }
        if self.n > MAX_OBSERVATIONS {
            return Err(Error::config(format!("n = {} exceeds the memory budget", self.n)));
        }
        if let Some(t) = self.tail_cutoff {
            if !(t > 0.0) {
                return Err(Error::config(format!("tail cutoff must be > 0, got {t}")));
            }
        }
        if !matches!(self.seed, SeedSpec::NegBin { .. }) {
            let draws = self.n as u128 * (self.truncation_columns() as u128 + 1);
            if draws > MAX_SLICE_DRAWS {
                return Err(Error::config(format!(
                    "{draws} slice draws exceed the budget; lower n or the tail cutoff"
                )));
            }
        }
        Ok(())
    }

    pub fn tail_cutoff(&self) -> f64 {
        self.tail_cutoff
            .unwrap_or_else(|| self.trawl.tail_cutoff(DEFAULT_TAIL_TOLERANCE))
    }

    /// Number of individually simulated slice durations `J`, capped at `n-1`
    /// (beyond which merging is exact).
    pub fn truncation_columns(&self) -> usize {
        let cols = (self.tail_cutoff() / self.delta).ceil();
        let cap = (self.n - 1).max(1);
        if cols.is_finite() && cols < cap as f64 {
            (cols as usize).max(1)
        } else {
            cap
        }
    }
}

/// Slice areas of the grid partition of a trawl set, truncated at `J` steps.
#[derive(Debug, Clone, PartialEq)]
pub struct SliceGrid {
    delta: f64,
    strips: Vec<f64>,
    slices: Vec<f64>,
}

impl SliceGrid {
    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// Truncation `J`.
    pub fn columns(&self) -> usize {
        self.slices.len()
    }

    /// `S_m = ∫_{mΔ}^{(m+1)Δ} a`, for `m = 0..=J`.
    pub fn strip(&self, m: usize) -> f64 {
        self.strips[m]
    }

    /// Area of a slice alive for exactly `m + 1` grid times, `m < J`.
    pub fn slice(&self, m: usize) -> f64 {
        self.slices[m]
    }

    /// Area of the merged slice of all durations `>= J`.
    pub fn remainder(&self) -> f64 {
        self.strips[self.slices.len()]
    }

    /// Slices contained in one trawl set `A_t`: row `r` holds the slices of
    /// the column `r` steps before `t` (durations `r..J`, then the remainder).
    /// Row `r` sums to the strip `S_r`.
    pub fn matrix(&self) -> Vec<Vec<f64>> {
        let j = self.columns();
        (0..=j)
            .map(|r| {
                let mut row: Vec<f64> = self.slices[r.min(j)..].to_vec();
                row.push(self.remainder());
                row
            })
            .collect()
    }

    /// Sum of every slice in [`SliceGrid::matrix`]; equals
    /// `Leb(A) - ∫_{(J+1)Δ}^∞ a`.
    pub fn total(&self) -> f64 {
        self.matrix().iter().flatten().sum()
    }
}

pub fn slice_areas(trawl: &TrawlSpec, delta: f64, columns: usize) -> Result<SliceGrid> {
    if !(delta.is_finite() && delta > 0.0) {
        return Err(Error::domain(format!("grid width must be > 0, got {delta}")));
    }
    if columns == 0 {
        return Err(Error::domain("truncation must be >= 1 column"));
    }
    let strips: Vec<f64> = (0..=columns)
        .map(|m| trawl.integral(m as f64 * delta, (m + 1) as f64 * delta))
        .collect();
    let slices = strips.windows(2).map(|w| (w[0] - w[1]).max(0.0)).collect();
    Ok(SliceGrid { delta, strips, slices })
}

/// Draws of the seed law scaled to a slice area (Lévy-basis additivity).
#[derive(Debug, Clone, Copy)]
struct SliceSampler {
    seed: SeedSpec,
}

const NEGBIN_INVERSION_MAX_MEAN: f64 = 30.0;
const NEGBIN_SKIP_MAX_PROB: f64 = 0.25;
const INVERSION_STEP_CAP: u32 = 100_000;

impl SliceSampler {
    fn draw(&self, area: f64, rng: &mut StreamRng) -> f64 {
        if area <= 0.0 {
            return 0.0;
        }
        match self.seed {
            SeedSpec::NegBin { m, theta } => {
                let r = m * area;
                if r * theta / (1.0 - theta) > NEGBIN_INVERSION_MAX_MEAN {
                    negbin_mixture(r, theta, rng)
                } else {
                    let p0 = (r * (1.0 - theta).ln()).exp();
                    let u: f64 = rng.random();
                    if u < p0 {
                        0.0
                    } else {
                        negbin_positive(r, theta, p0, u - p0, rng)
                    }
                }
            }
            SeedSpec::Gamma { shape, scale } => Gamma::new(shape * area, scale)
                .map(|g| g.sample(rng))
                .unwrap_or(0.0),
            SeedSpec::Gaussian { mean, variance } => {
                let z: f64 = StandardNormal.sample(rng);
                mean * area + (variance * area).sqrt() * z
            }
        }
    }

    /// `count` i.i.d. draws with the same area; `emit(index, value)` is called
    /// for every non-zero draw, in increasing index order.
    fn fill_iid<F: FnMut(usize, f64)>(&self, area: f64, count: usize, rng: &mut StreamRng, mut emit: F) {
        if count == 0 || area <= 0.0 {
            return;
        }
        if let SeedSpec::NegBin { m, theta } = self.seed {
            let r = m * area;
            let log_p0 = r * (1.0 - theta).ln();
            let q = -log_p0.exp_m1();
            if q < NEGBIN_SKIP_MAX_PROB && q > 0.0 {
                let p0 = log_p0.exp();
                let mut idx = 0usize;
                loop {
                    let u: f64 = 1.0 - rng.random::<f64>();
                    let gap = (u.ln() / log_p0).floor();
                    if gap >= (count - idx) as f64 {
                        break;
                    }
                    idx += gap as usize;
                    let v = rng.random::<f64>() * q;
                    emit(idx, negbin_positive(r, theta, p0, v, rng));
                    idx += 1;
                    if idx >= count {
                        break;
                    }
                }
                return;
            }
        }
        for idx in 0..count {
            let v = self.draw(area, rng);
            if v != 0.0 {
                emit(idx, v);
            }
        }
    }
}

/// One draw of the seed law scaled to a set of Lebesgue measure `area`.
pub fn draw_seed(seed: &SeedSpec, area: f64, rng: &mut StreamRng) -> f64 {
    SliceSampler { seed: *seed }.draw(area, rng)
}

/// Gamma–Poisson mixture draw of NegBin(r, θ).
fn negbin_mixture(r: f64, theta: f64, rng: &mut StreamRng) -> f64 {
    let lambda = match Gamma::new(r, theta / (1.0 - theta)) {
        Ok(g) => g.sample(rng),
        Err(_) => return 0.0,
    };
    match Poisson::new(lambda) {
        Ok(p) => p.sample(rng),
        Err(_) => 0.0,
    }
}

/// Inversion for the NegBin(r, θ) law restricted to `{1, 2, …}`: returns the
/// smallest `x >= 1` with `P(1) + … + P(x) > v`, where `v` is uniform on
/// `[0, 1 - p0)`.
fn negbin_positive(r: f64, theta: f64, p0: f64, v: f64, rng: &mut StreamRng) -> f64 {
    let mut x = 1u32;
    let mut p = p0 * r * theta;
    let mut cum = p;
    while v >= cum {
        x += 1;
        if x > INVERSION_STEP_CAP {
            // Rounding starved the cumulative sum; fall back to rejection.
            loop {
                let y = negbin_mixture(r, theta, rng);
                if y > 0.0 {
                    return y;
                }
            }
        }
        p *= theta * (r + (x - 1) as f64) / x as f64;
        cum += p;
    }
    x as f64
}

/// Simulate one path using RNG stream 0.
pub fn simulate(cfg: &SimConfig) -> Result<TimeSeries> {
    simulate_stream(cfg, 0)
}

/// Simulate one path using the RNG stream `(cfg.rng_seed, stream)`.
pub fn simulate_stream(cfg: &SimConfig, stream: u64) -> Result<TimeSeries> {
    cfg.validate()?;
    let n = cfg.n;
    let delta = cfg.delta;
    let trawl = &cfg.trawl;
    let j = cfg.truncation_columns();
    let grid = slice_areas(trawl, delta, j)?;
    let sampler = SliceSampler { seed: cfg.seed };
    let mut rng = stream_rng(cfg.rng_seed, stream);

    // diff[k] += v, diff[end + 1] -= v marks a slice alive on k..=end.
    let mut diff = vec![0.0f64; n + 1];

    // Column of the whole past (s <= 0): slices ending at 0..n-2, then the
    // rest, alive through the last observation.
    for end in 0..n - 1 {
        let area = trawl.integral(end as f64 * delta, (end + 1) as f64 * delta);
        let v = sampler.draw(area, &mut rng);
        diff[0] += v;
        diff[end + 1] -= v;
    }
    diff[0] += sampler.draw(trawl.tail((n - 1) as f64 * delta), &mut rng);

    // Columns k >= 1: slices of duration m < J that die before n-1.
    for m in 0..j {
        let count = n.saturating_sub(m + 2);
        sampler.fill_iid(grid.slice(m), count, &mut rng, |idx, v| {
            let k = idx + 1;
            diff[k] += v;
            diff[k + m + 1] -= v;
        });
    }
    // Merged remainders alive on k..=k+J.
    sampler.fill_iid(grid.remainder(), n.saturating_sub(j + 1), &mut rng, |idx, v| {
        let k = idx + 1;
        diff[k] += v;
        diff[k + j + 1] -= v;
    });
    // Columns close to the end: everything alive at n-1 merged into one slice.
    let start = (n - j).max(1);
    for (k, slot) in diff.iter_mut().enumerate().take(n).skip(start) {
        *slot += sampler.draw(grid.strip(n - 1 - k), &mut rng);
    }

    let mut acc = 0.0;
    let values: Vec<f64> = diff[..n]
        .iter()
        .map(|d| {
            acc += d;
            acc
        })
        .collect();
    TimeSeries::new(delta, values)
}

/// Empirical versus theoretical moments of a simulated path.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentReport {
    /// `(empirical, Leb(A)·E L')`
    pub mean: (f64, f64),
    /// `(empirical, Leb(A)·Var L')`
    pub variance: (f64, f64),
    /// `(Γ̂_l, Var(L')·∫_{lΔ}^∞ a)` for `l = 0..=max_lag`
    pub acf: Vec<(f64, f64)>,
}

pub fn moment_check(
    series: &TimeSeries,
    trawl: &TrawlSpec,
    seed: &SeedSpec,
    max_lag: usize,
) -> Result<MomentReport> {
    let moments = seed.moments();
    let acf = crate::estimator::sample_acf_upto(series, max_lag)?;
    let leb = trawl.leb_a();
    let pairs = (0..=max_lag)
        .map(|l| {
            let h = l as f64 * series.delta();
            (acf.gamma(l), moments.variance * trawl.theoretical_acf(h))
        })
        .collect();
    Ok(MomentReport {
        mean: (acf.mean(), leb * moments.mean),
        variance: (acf.gamma(0), leb * moments.variance),
        acf: pairs,
    })
}
