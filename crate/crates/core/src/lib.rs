//! Trawl processes: simulation, nonparametric estimation of the trawl
//! function, feasible central limit statistics, slice estimation and
//! forecasting.
//!
//! A trawl process is a Lévy basis evaluated over a translated trawl set,
//! `X_t = L(A_t)`. Under the unit-variance normalisation of the Lévy seed,
//! the autocovariance is `Γ(h) = ∫_{|h|}^∞ a(u) du`, so the trawl function is
//! recovered as `a = -Γ'`. The [`estimator`] module builds every estimator on
//! top of the sample autocovariance of equidistant observations.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod estimator;
pub mod forecast;
pub mod inference;
pub mod montecarlo;
pub mod quad;
pub mod rng;
pub mod simulator;
pub mod trawl_model;

pub use error::{Error, Result};
pub use estimator::{AcfTable, SliceEstimate, SliceMethod, TrawlEstimate};
pub use forecast::{ForecastReport, Predictor};
pub use inference::{CltStatistic, StatisticKind};
pub use montecarlo::{CellResult, StudyCell};
pub use simulator::{SimConfig, TimeSeries};
pub use trawl_model::{SeedSpec, TrawlSpec};

/// Map a time to its grid index `⌊t/Δ⌋`, treating values within rounding
/// distance of an exact multiple as that multiple.
pub fn grid_index(t: f64, delta: f64) -> usize {
    let x = t / delta;
    let r = x.round();
    if (x - r).abs() <= 1e-9 * r.abs().max(1.0) {
        r.max(0.0) as usize
    } else {
        x.floor().max(0.0) as usize
    }
}
