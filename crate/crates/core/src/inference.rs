//! Central limit statistics for the trawl estimator and their coverage.
//!
//! ```text
//! infeasible      √(nΔ) (â(t) - a(t)) / √σ²(t)
//! feasible        √(nΔ) (â(t) - a(t)) / √σ̂²(t)
//! bias corrected  √(nΔ) (â(t) - ½Δâ'(t) - a(t)) / √σ̂²(t)
//! t = 0           √(nΔ/Q_n) (â(0) - a(0) - ½Δâ'(0))
//! ```
//!
//! For a purely Gaussian basis the `t = 0` statistic uses the subsampled
//! derivative and is rescaled by `√3` to a standard normal target.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{estimate_derivative_subsampled, normal_quantile, TrawlEstimate};
use crate::quad::integrate;
use crate::simulator::TimeSeries;
use crate::trawl_model::{SeedSpec, TrawlSpec};

/// Nominal levels reported in coverage tables.
pub const COVERAGE_LEVELS: [f64; 6] = [0.75, 0.80, 0.85, 0.90, 0.95, 0.99];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StatisticKind {
    Infeasible,
    Feasible,
    FeasibleBiasCorrected,
    FeasibleT0,
    FeasibleT0Gaussian,
}

impl StatisticKind {
    pub fn name(&self) -> &'static str {
        match self {
            StatisticKind::Infeasible => "infeasible",
            StatisticKind::Feasible => "feasible",
            StatisticKind::FeasibleBiasCorrected => "feasible_bc",
            StatisticKind::FeasibleT0 => "feasible_t0",
            StatisticKind::FeasibleT0Gaussian => "feasible_t0_gaussian",
        }
    }

    fn zero_only(&self) -> bool {
        matches!(self, StatisticKind::FeasibleT0 | StatisticKind::FeasibleT0Gaussian)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CltStatistic {
    pub kind: StatisticKind,
    pub t: f64,
    pub value: f64,
    /// The variance in the denominator was floored or not positive.
    pub degenerate: bool,
}

impl CltStatistic {
    /// Wrap a raw statistic; the Gaussian `t = 0` kind is rescaled by `√3`.
    pub fn new(kind: StatisticKind, t: f64, raw: f64, degenerate: bool) -> Result<Self> {
        if kind.zero_only() && t != 0.0 {
            return Err(Error::domain(format!("{} is defined at t = 0 only", kind.name())));
        }
        let value = match kind {
            StatisticKind::FeasibleT0Gaussian => 3f64.sqrt() * raw,
            _ => raw,
        };
        let degenerate = degenerate || !value.is_finite();
        Ok(CltStatistic { kind, t, value, degenerate })
    }
}

/// Closed-form model supplying `a(t)` and `σ²(t)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Truth {
    pub trawl: TrawlSpec,
    pub seed: SeedSpec,
}

impl Truth {
    pub fn a(&self, t: f64) -> f64 {
        self.trawl.a(t)
    }

    pub fn sigma2(&self, t: f64) -> f64 {
        closed_form_sigma2(&self.trawl, self.seed.moments().c4, t)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StatisticOptions {
    /// Centre at `a(⌊t/Δ⌋Δ)` instead of `a(t)`.
    #[serde(default)]
    pub grid_centering: bool,
    /// Replace `σ̂²(t)` by this value in the feasible statistics.
    #[serde(default)]
    pub sigma2_override: Option<f64>,
}

/// `σ²(t) = c₄a(t) + 2{∫₀^∞a² + ∫₀^t a(t-s)a(t+s)ds - ∫_t^∞ a(s-t)a(t+s)ds}`.
pub fn closed_form_sigma2(trawl: &TrawlSpec, c4: f64, t: f64) -> f64 {
    let t = t.max(0.0);
    match *trawl {
        TrawlSpec::Exponential { lambda } => {
            let e2 = (-2.0 * lambda * t).exp();
            c4 * (-lambda * t).exp() + 1.0 / lambda + (2.0 * t - 1.0 / lambda) * e2
        }
        TrawlSpec::SupGamma { .. } => {
            let a = |s: f64| trawl.a(s);
            let cross = integrate(|s| a(t - s) * a(t + s), 0.0, t, 1e-12);
            // ∫_t^∞ a(s-t)a(s+t)ds = ∫_0^∞ a(u)a(u+2t)du
            let tail = crate::quad::integrate_to_infinity(|u| a(u) * a(u + 2.0 * t), 0.0, 1e-12);
            c4 * a(t) + 2.0 * (trawl.integral_a_squared() + cross - tail)
        }
    }
}

/// Statistics of several kinds at one time, from a precomputed estimate.
pub fn statistics_from_estimate(
    est: &TrawlEstimate,
    series: Option<&TimeSeries>,
    t: f64,
    truth: Option<&Truth>,
    kinds: &[StatisticKind],
    opts: &StatisticOptions,
) -> Result<Vec<CltStatistic>> {
    let i = est.index(t)?;
    let delta = est.delta;
    let scale = (est.n as f64 * delta).sqrt();
    let centre = |truth: &Truth| {
        if opts.grid_centering {
            truth.a(i as f64 * delta)
        } else {
            truth.a(t)
        }
    };
    let require_truth = |kind: StatisticKind| {
        truth.ok_or_else(|| Error::domain(format!("{} needs the true trawl function", kind.name())))
    };
    let mut avar = None;
    let mut out = Vec::with_capacity(kinds.len());
    for &kind in kinds {
        let truth = require_truth(kind)?;
        let target = centre(truth);
        let at_zero = i == 0 && t == 0.0;
        let stat = match kind {
            StatisticKind::Infeasible => {
                let s2 = truth.sigma2(t);
                let degenerate = !(s2 > 0.0);
                CltStatistic::new(kind, t, scale * (est.a_hat[i] - target) / s2.sqrt(), degenerate)?
            }
            StatisticKind::Feasible | StatisticKind::FeasibleBiasCorrected => {
                let numerator = if kind == StatisticKind::Feasible {
                    est.a_hat[i] - target
                } else {
                    est.a_hat_bc[i] - target
                };
                let (s2, degenerate) = if let Some(s2) = opts.sigma2_override {
                    (s2, !(s2 > 0.0))
                } else if at_zero {
                    (est.q_n, !(est.q_n > 0.0))
                } else {
                    match avar {
                        Some(e) => e,
                        None => {
                            let e = match est.avar_at(i) {
                                Ok(e) => (e.value, e.degenerate),
                                Err(err) if err.is_degenerate() => (f64::NAN, true),
                                Err(err) => return Err(err),
                            };
                            avar = Some(e);
                            e
                        }
                    }
                };
                CltStatistic::new(kind, t, scale * numerator / s2.sqrt(), degenerate)?
            }
            StatisticKind::FeasibleT0 => {
                let q = est.q_n;
                CltStatistic::new(kind, t, scale * (est.a_hat_bc[0] - target) / q.sqrt(), !(q > 0.0))?
            }
            StatisticKind::FeasibleT0Gaussian => {
                let series = series.ok_or_else(|| Error::domain("the Gaussian t = 0 statistic needs the series"))?;
                let q = est.q_n;
                let d = estimate_derivative_subsampled(series, est.tuning.0, 0.0)?;
                let raw = scale * (est.a_hat[0] - target - 0.5 * delta * d) / q.sqrt();
                CltStatistic::new(kind, t, raw, !(q > 0.0))?
            }
        };
        out.push(stat);
    }
    Ok(out)
}

/// One statistic computed from a series.
pub fn statistic(
    series: &TimeSeries,
    t: f64,
    truth: Option<&Truth>,
    kind: StatisticKind,
    est_opts: &crate::estimator::EstimateOptions,
    opts: &StatisticOptions,
) -> Result<CltStatistic> {
    let est = TrawlEstimate::compute(series, est_opts)?;
    Ok(statistics_from_estimate(&est, Some(series), t, truth, &[kind], opts)?[0])
}

/// Summary of statistics over Monte Carlo runs.
#[derive(Debug, Clone, PartialEq)]
pub struct CoverageSummary {
    pub levels: Vec<f64>,
    /// Fraction of non-degenerate statistics with `|T| <= z_{(1+q)/2}`.
    pub coverage: Vec<f64>,
    /// Mean and SD over non-degenerate statistics.
    pub mean: f64,
    pub sd: f64,
    /// Mean and SD over all finite statistics, degenerate included.
    pub mean_all: f64,
    pub sd_all: f64,
    pub used: usize,
    pub degenerate: usize,
}

/// Sample mean and `(R-1)`-divisor standard deviation.
pub fn mean_sd(values: &[f64]) -> (f64, f64) {
    let r = values.len();
    if r == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / r as f64;
    if r < 2 {
        return (mean, f64::NAN);
    }
    let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
    (mean, (ss / (r - 1) as f64).sqrt())
}

pub fn coverage(stats: &[CltStatistic], levels: &[f64]) -> Result<CoverageSummary> {
    if stats.is_empty() {
        return Err(Error::InsufficientData { needed: 2, got: 0 });
    }
    if let Some(q) = levels.iter().find(|q| !(**q > 0.0 && **q < 1.0)) {
        return Err(Error::domain(format!("coverage level {q} outside (0, 1)")));
    }
    let good: Vec<f64> = stats.iter().filter(|s| !s.degenerate).map(|s| s.value).collect();
    if good.len() < 2 {
        return Err(Error::InsufficientData { needed: 2, got: good.len() });
    }
    let all: Vec<f64> = stats.iter().map(|s| s.value).filter(|v| v.is_finite()).collect();
    let coverage = levels
        .iter()
        .map(|q| {
            let z = normal_quantile(0.5 * (1.0 + q));
            good.iter().filter(|v| v.abs() <= z).count() as f64 / good.len() as f64
        })
        .collect();
    let (mean, sd) = mean_sd(&good);
    let (mean_all, sd_all) = mean_sd(&all);
    Ok(CoverageSummary {
        levels: levels.to_vec(),
        coverage,
        mean,
        sd,
        mean_all,
        sd_all,
        used: good.len(),
        degenerate: stats.len() - good.len(),
    })
}
