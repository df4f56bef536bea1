//! Monte Carlo cells: simulate, estimate, aggregate and emit tables.
//!
//! Run `r` of a cell always uses RNG stream `(seed, r)` and results are
//! reduced in run order, so output does not depend on the worker count.

use std::fmt::Write as _;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{EstimateOptions, SliceEstimator, SliceMethod, TrawlEstimate};
use crate::inference::{coverage, mean_sd, statistics_from_estimate, CoverageSummary, StatisticKind, StatisticOptions, Truth, COVERAGE_LEVELS};
use crate::simulator::{simulate_stream, SimConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportMode {
    /// Report at fixed times `t`, mapped to `⌊t/Δ⌋`.
    FixedT(Vec<f64>),
    /// Report at fixed grid indices.
    FixedI(Vec<usize>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    Consistency,
    Coverage,
    Slices,
}

impl Target {
    pub fn name(&self) -> &'static str {
        match self {
            Target::Consistency => "consistency",
            Target::Coverage => "coverage",
            Target::Slices => "slices",
        }
    }
}

impl std::str::FromStr for Target {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "consistency" => Ok(Target::Consistency),
            "coverage" => Ok(Target::Coverage),
            "slices" => Ok(Target::Slices),
            other => Err(Error::domain(format!("unknown table layout '{other}'"))),
        }
    }
}

/// Estimator tuning shared by all runs of a cell.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Tuning {
    /// Largest grid index of `â`; defaults to `n-3`.
    #[serde(default)]
    pub max_lag: Option<usize>,
    #[serde(default)]
    pub n_n: Option<usize>,
    #[serde(default)]
    pub k_n: Option<usize>,
    #[serde(default)]
    pub grid_centering: bool,
}

fn default_runs() -> usize {
    200
}

fn default_targets() -> Vec<Target> {
    vec![Target::Consistency]
}

fn default_slice_method() -> SliceMethod {
    SliceMethod::EmpiricalAcf
}

/// One simulation–estimation cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyCell {
    #[serde(flatten)]
    pub sim: SimConfig,
    #[serde(default = "default_runs")]
    pub runs: usize,
    pub report: ReportMode,
    #[serde(default = "default_targets")]
    pub targets: Vec<Target>,
    /// Horizons for the slice table; defaults to the report times.
    #[serde(default)]
    pub slice_h: Option<Vec<f64>>,
    #[serde(default = "default_slice_method")]
    pub slice_method: SliceMethod,
    #[serde(default)]
    pub tuning: Tuning,
    /// Simulate paths of this length and keep the first `n` observations.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subset_of: Option<usize>,
}

impl StudyCell {
    pub fn validate(&self) -> Result<()> {
        self.sim.validate()?;
        if self.runs < 2 {
            return Err(Error::config(format!("runs must be >= 2, got {}", self.runs)));
        }
        if let Some(m) = self.subset_of {
            if m < self.sim.n {
                return Err(Error::config(format!("subset_of = {m} is shorter than n = {}", self.sim.n)));
            }
            SimConfig { n: m, ..self.sim.clone() }.validate()?;
        }
        if self.targets.is_empty() {
            return Err(Error::config("no targets requested"));
        }
        if let ReportMode::FixedT(ts) = &self.report {
            if let Some(t) = ts.iter().find(|t| !(**t >= 0.0)) {
                return Err(Error::config(format!("report time {t} is negative")));
            }
        }
        let max_lag = self.max_lag();
        if let Some(&i) = self.indices().iter().max() {
            if i > max_lag {
                return Err(Error::config(format!("report index {i} beyond the estimated grid {max_lag}")));
            }
        }
        if let Some(h) = self.slice_horizons().iter().find(|h| !(**h >= 0.0)) {
            return Err(Error::config(format!("slice horizon {h} is negative")));
        }
        Ok(())
    }

    fn max_lag(&self) -> usize {
        self.tuning.max_lag.unwrap_or(self.sim.n.saturating_sub(3))
    }

    /// Report points as `(label, t, index)`.
    pub fn points(&self) -> Vec<(f64, f64, usize)> {
        let delta = self.sim.delta;
        match &self.report {
            ReportMode::FixedT(ts) => ts.iter().map(|&t| (t, t, crate::grid_index(t, delta))).collect(),
            ReportMode::FixedI(is) => is.iter().map(|&i| (i as f64, i as f64 * delta, i)).collect(),
        }
    }

    fn indices(&self) -> Vec<usize> {
        self.points().into_iter().map(|p| p.2).collect()
    }

    pub fn slice_horizons(&self) -> Vec<f64> {
        match &self.slice_h {
            Some(h) => h.clone(),
            None => self.points().into_iter().map(|p| p.1).collect(),
        }
    }

    fn truth(&self) -> Truth {
        Truth { trawl: self.sim.trawl, seed: self.sim.seed }
    }
}

/// Mean, bias and SD of `â` and of the bias-corrected `â`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConsistencyRow {
    /// Report label: `t` or `i`.
    pub label: f64,
    pub t: f64,
    pub n: usize,
    pub truth: f64,
    pub mean: f64,
    pub bias: f64,
    pub sd: f64,
    pub mean_bc: f64,
    pub bias_bc: f64,
    pub sd_bc: f64,
}

/// Coverage summaries of the infeasible, feasible and bias-corrected
/// statistics at one report point.
#[derive(Debug, Clone, PartialEq)]
pub struct CoverageRow {
    pub label: f64,
    pub t: f64,
    pub n: usize,
    /// Indexed like [`COVERAGE_KINDS`]; `None` if undefined at this point.
    pub summaries: [Option<CoverageSummary>; 3],
}

/// Column groups of the coverage table.
pub const COVERAGE_KINDS: [&str; 3] = ["infeasible", "feasible", "feasible_bc"];

#[derive(Debug, Clone, PartialEq)]
pub struct SliceRow {
    pub h: f64,
    pub n: usize,
    pub method: SliceMethod,
    /// `(mean, bias, sd)` of `Leb(A)`, `Leb(A∩A_h)` and the ratio.
    pub leb_a: (f64, f64, f64),
    pub leb_cap: (f64, f64, f64),
    pub ratio: (f64, f64, f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellResult {
    pub n: usize,
    pub delta: f64,
    pub runs: usize,
    pub consistency: Option<Vec<ConsistencyRow>>,
    pub coverage: Option<Vec<CoverageRow>>,
    pub slices: Option<Vec<SliceRow>>,
    /// Runs whose slice estimate was degenerate, per horizon.
    pub slice_degenerate: Vec<usize>,
    pub wall_time_secs: f64,
}

/// Everything one run contributes.
#[derive(Debug, Clone, Default)]
struct RunOutput {
    a: Vec<f64>,
    a_bc: Vec<f64>,
    /// `stats[point][kind]`
    stats: Vec<[Option<crate::inference::CltStatistic>; 3]>,
    /// `(leb_a, leb_cap, ratio)` per horizon, `None` if degenerate.
    slices: Vec<Option<(f64, f64, f64)>>,
}

fn coverage_kinds(t: f64, gaussian: bool) -> [Option<StatisticKind>; 3] {
    if t == 0.0 {
        if gaussian {
            [None, Some(StatisticKind::Feasible), Some(StatisticKind::FeasibleT0Gaussian)]
        } else {
            [Some(StatisticKind::Infeasible), Some(StatisticKind::Feasible), Some(StatisticKind::FeasibleT0)]
        }
    } else {
        [
            Some(StatisticKind::Infeasible),
            Some(StatisticKind::Feasible),
            Some(StatisticKind::FeasibleBiasCorrected),
        ]
    }
}

fn run_once(cell: &StudyCell, run: usize) -> Result<RunOutput> {
    let series = match cell.subset_of {
        Some(m) => simulate_stream(&SimConfig { n: m, ..cell.sim.clone() }, run as u64)?.window(0, cell.sim.n)?,
        None => simulate_stream(&cell.sim, run as u64)?,
    };
    let mut out = RunOutput::default();
    let points = cell.points();
    let wants = |t: Target| cell.targets.contains(&t);
    if wants(Target::Consistency) || wants(Target::Coverage) {
        let opts = EstimateOptions { max_lag: Some(cell.max_lag()), n_n: cell.tuning.n_n, k_n: cell.tuning.k_n };
        let est = TrawlEstimate::compute(&series, &opts)?;
        for &(_, _, i) in &points {
            out.a.push(est.a_hat[i]);
            out.a_bc.push(est.a_hat_bc[i]);
        }
        if wants(Target::Coverage) {
            let truth = cell.truth();
            let sopts = StatisticOptions { grid_centering: cell.tuning.grid_centering, sigma2_override: None };
            for &(_, t, i) in &points {
                // Off-grid fixed-t times are evaluated at their grid point.
                let t_eval = if i == 0 { 0.0 } else { t };
                let kinds = coverage_kinds(t_eval, cell.sim.seed.is_gaussian());
                let mut row = [None, None, None];
                for (slot, kind) in row.iter_mut().zip(kinds) {
                    if let Some(kind) = kind {
                        let s = statistics_from_estimate(&est, Some(&series), t_eval, Some(&truth), &[kind], &sopts)?;
                        *slot = Some(s[0]);
                    }
                }
                out.stats.push(row);
            }
        }
    }
    if wants(Target::Slices) {
        let hs = cell.slice_horizons();
        let max_steps = hs
            .iter()
            .map(|h| (h / cell.sim.delta).ceil() as usize + 1)
            .max()
            .unwrap_or(1);
        let est = SliceEstimator::new(&series, cell.slice_method, max_steps.min(series.len()))?;
        for &h in &hs {
            out.slices.push(match est.estimate(h) {
                Ok(s) => Some((s.leb_a, s.leb_cap, s.ratio_cap)),
                Err(e) if e.is_degenerate() => None,
                Err(e) => return Err(e),
            });
        }
    }
    Ok(out)
}

/// Simulate and estimate every run of a cell on `jobs` worker threads.
pub fn run_cell(cell: &StudyCell, jobs: usize) -> Result<CellResult> {
    cell.validate()?;
    let start = Instant::now();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::config(format!("cannot start worker pool: {e}")))?;
    let outputs: Vec<Result<RunOutput>> =
        pool.install(|| (0..cell.runs).into_par_iter().map(|r| run_once(cell, r)).collect());
    let mut runs = Vec::with_capacity(cell.runs);
    for (r, out) in outputs.into_iter().enumerate() {
        match out {
            Ok(o) => runs.push(o),
            Err(e) => return Err(Error::Run { run: r, source: Box::new(e) }),
        }
    }
    let points = cell.points();
    let n = cell.sim.n;
    let truth = cell.truth();
    let variance = cell.sim.seed.moments().variance;

    let consistency = cell.targets.contains(&Target::Consistency).then(|| {
        points
            .iter()
            .enumerate()
            .map(|(p, &(label, t, i))| {
                let a: Vec<f64> = runs.iter().map(|r| r.a[p]).collect();
                let a_bc: Vec<f64> = runs.iter().map(|r| r.a_bc[p]).collect();
                let target = if cell.tuning.grid_centering { truth.a(i as f64 * cell.sim.delta) } else { truth.a(t) };
                let (mean, sd) = mean_sd(&a);
                let (mean_bc, sd_bc) = mean_sd(&a_bc);
                ConsistencyRow {
                    label,
                    t,
                    n,
                    truth: target,
                    mean,
                    bias: mean - target,
                    sd,
                    mean_bc,
                    bias_bc: mean_bc - target,
                    sd_bc,
                }
            })
            .collect()
    });

    let coverage_rows = if cell.targets.contains(&Target::Coverage) {
        let mut rows = Vec::with_capacity(points.len());
        for (p, &(label, t, _)) in points.iter().enumerate() {
            let mut summaries: [Option<CoverageSummary>; 3] = [None, None, None];
            for (k, slot) in summaries.iter_mut().enumerate() {
                let stats: Vec<_> = runs.iter().filter_map(|r| r.stats[p][k]).collect();
                if stats.is_empty() {
                    continue;
                }
                *slot = match coverage(&stats, &COVERAGE_LEVELS) {
                    Ok(s) => Some(s),
                    Err(Error::InsufficientData { .. }) => None,
                    Err(e) => return Err(e),
                };
            }
            rows.push(CoverageRow { label, t, n, summaries });
        }
        Some(rows)
    } else {
        None
    };

    let mut slice_degenerate = Vec::new();
    let slices = cell.targets.contains(&Target::Slices).then(|| {
        let leb = truth.trawl.leb_a() * variance;
        cell.slice_horizons()
            .iter()
            .enumerate()
            .map(|(k, &h)| {
                let vals: Vec<(f64, f64, f64)> = runs.iter().filter_map(|r| r.slices[k]).collect();
                slice_degenerate.push(runs.len() - vals.len());
                let cap_true = truth.trawl.theoretical_acf(h) * variance;
                let summarize = |f: fn(&(f64, f64, f64)) -> f64, truth: f64| {
                    let v: Vec<f64> = vals.iter().map(f).collect();
                    let (m, s) = mean_sd(&v);
                    (m, m - truth, s)
                };
                SliceRow {
                    h,
                    n,
                    method: cell.slice_method,
                    leb_a: summarize(|v| v.0, leb),
                    leb_cap: summarize(|v| v.1, cap_true),
                    ratio: summarize(|v| v.2, cap_true / leb),
                }
            })
            .collect()
    });

    Ok(CellResult {
        n,
        delta: cell.sim.delta,
        runs: cell.runs,
        consistency,
        coverage: coverage_rows,
        slices,
        slice_degenerate,
        wall_time_secs: start.elapsed().as_secs_f64(),
    })
}

/// `x` rounded to `digits` significant digits, printed without trailing noise.
pub fn format_sig(x: f64, digits: usize) -> String {
    if !x.is_finite() {
        return if x.is_nan() { "NaN".into() } else if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let rounded: f64 = format!("{:.*e}", digits.max(1) - 1, x).parse().expect("valid float");
    format!("{rounded}")
}

/// Render one target of a cell as CSV.
pub fn emit_table(result: &CellResult, layout: Target, digits: usize) -> Result<String> {
    let f = |x: f64| format_sig(x, digits);
    let mut out = String::new();
    let missing = || Error::domain(format!("result holds no {} table", layout.name()));
    match layout {
        Target::Consistency => {
            let rows = result.consistency.as_ref().ok_or_else(missing)?;
            out.push_str("t,n,mean,bias,sd,mean_bc,bias_bc,sd_bc\n");
            for r in rows {
                let cols = [r.mean, r.bias, r.sd, r.mean_bc, r.bias_bc, r.sd_bc].map(f);
                writeln!(out, "{},{},{}", f(r.label), r.n, cols.join(",")).expect("string write");
            }
        }
        Target::Coverage => {
            let rows = result.coverage.as_ref().ok_or_else(missing)?;
            let mut header = vec!["t".to_string(), "n".to_string()];
            for kind in COVERAGE_KINDS {
                header.push(format!("{kind}_mean"));
                header.push(format!("{kind}_sd"));
                for q in COVERAGE_LEVELS {
                    header.push(format!("{kind}_{}", (q * 100.0).round() as u32));
                }
            }
            for kind in COVERAGE_KINDS {
                header.push(format!("{kind}_degenerate"));
                header.push(format!("{kind}_mean_all"));
                header.push(format!("{kind}_sd_all"));
            }
            out.push_str(&header.join(","));
            out.push('\n');
            for r in rows {
                let mut cols = vec![f(r.label), r.n.to_string()];
                for s in &r.summaries {
                    match s {
                        Some(s) => {
                            cols.push(f(s.mean));
                            cols.push(f(s.sd));
                            cols.extend(s.coverage.iter().map(|c| f(*c)));
                        }
                        None => cols.extend(std::iter::repeat_n(String::new(), 2 + COVERAGE_LEVELS.len())),
                    }
                }
                for s in &r.summaries {
                    match s {
                        Some(s) => {
                            cols.push(s.degenerate.to_string());
                            cols.push(f(s.mean_all));
                            cols.push(f(s.sd_all));
                        }
                        None => cols.extend(std::iter::repeat_n(String::new(), 3)),
                    }
                }
                out.push_str(&cols.join(","));
                out.push('\n');
            }
        }
        Target::Slices => {
            let rows = result.slices.as_ref().ok_or_else(missing)?;
            out.push_str(
                "h,n,method,leb_a_mean,leb_a_bias,leb_a_sd,leb_cap_mean,leb_cap_bias,leb_cap_sd,ratio_mean,ratio_bias,ratio_sd,degenerate\n",
            );
            for (k, r) in rows.iter().enumerate() {
                let mut cols = vec![f(r.h), r.n.to_string(), r.method.name().to_string()];
                for (m, b, s) in [r.leb_a, r.leb_cap, r.ratio] {
                    cols.extend([f(m), f(b), f(s)]);
                }
                cols.push(result.slice_degenerate.get(k).copied().unwrap_or(0).to_string());
                out.push_str(&cols.join(","));
                out.push('\n');
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trawl_model::{SeedSpec, TrawlSpec};

    fn gaussian_cell(targets: Vec<Target>) -> StudyCell {
        StudyCell {
            sim: SimConfig::new(
                TrawlSpec::exponential(1.0).unwrap(),
                SeedSpec::gaussian_normalized(1.0).unwrap(),
                0.1,
                300,
                17,
            ),
            runs: 4,
            report: ReportMode::FixedT(vec![0.0, 0.5]),
            targets,
            slice_h: Some(vec![0.0, 0.3]),
            slice_method: SliceMethod::EmpiricalAcf,
            tuning: Tuning { max_lag: Some(40), ..Default::default() },
            subset_of: None,
        }
    }

    #[test]
    fn smoke_cell_is_reproducible_across_worker_counts() {
        let cell = gaussian_cell(vec![Target::Consistency, Target::Coverage, Target::Slices]);
        let a = run_cell(&cell, 1).unwrap();
        let b = run_cell(&cell, 3).unwrap();
        for t in [Target::Consistency, Target::Coverage, Target::Slices] {
            assert_eq!(emit_table(&a, t, 6).unwrap(), emit_table(&b, t, 6).unwrap());
        }
        let rows = a.consistency.as_ref().unwrap();
        assert!(rows.iter().all(|r| r.sd.is_finite()));
        for r in rows {
            assert_eq!(r.bias, r.mean - r.truth);
        }
        let s = &a.slices.as_ref().unwrap()[0];
        assert_eq!(s.ratio.0, 1.0);
    }

    #[test]
    fn layouts() {
        let cell = gaussian_cell(vec![Target::Consistency]);
        let r = run_cell(&cell, 1).unwrap();
        let csv = emit_table(&r, Target::Consistency, 6).unwrap();
        assert!(csv.starts_with("t,n,mean,bias,sd,mean_bc,bias_bc,sd_bc\n"));
        assert_eq!(csv.lines().count(), 3);
        assert!(emit_table(&r, Target::Coverage, 6).is_err());
        let empty = CellResult { consistency: Some(vec![]), ..r };
        assert_eq!(emit_table(&empty, Target::Consistency, 6).unwrap().lines().count(), 1);
    }

    #[test]
    fn coverage_header_has_eight_columns_per_kind() {
        let cell = gaussian_cell(vec![Target::Coverage]);
        let r = run_cell(&cell, 1).unwrap();
        let csv = emit_table(&r, Target::Coverage, 6).unwrap();
        let header: Vec<&str> = csv.lines().next().unwrap().split(',').collect();
        assert_eq!(header.len(), 2 + 3 * 8 + 3 * 3);
        assert_eq!(&header[2..10], ["infeasible_mean", "infeasible_sd", "infeasible_75", "infeasible_80", "infeasible_85", "infeasible_90", "infeasible_95", "infeasible_99"]);
        for line in csv.lines() {
            assert_eq!(line.split(',').count(), header.len());
        }
    }

    #[test]
    fn config_json_schema() {
        let cell: StudyCell = serde_json::from_str(
            r#"{"marginal":{"kind":"negbin","theta":0.2},"trawl":{"kind":"supgamma","alpha":0.1,"H":1.5},
                "delta":0.1,"n":5000,"runs":10,"report":{"fixed_t":[0.0,1.0]},
                "targets":["consistency","slices"],"seed":3}"#,
        )
        .unwrap();
        assert_eq!(cell.sim.rng_seed, 3);
        assert_eq!(cell.runs, 10);
        assert_eq!(cell.report, ReportMode::FixedT(vec![0.0, 1.0]));
        assert_eq!(cell.targets, vec![Target::Consistency, Target::Slices]);
        assert!(cell.validate().is_ok());
        let bad = StudyCell { runs: 1, ..cell };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn subsets_are_prefixes_of_longer_paths() {
        let mut cell = gaussian_cell(vec![Target::Consistency]);
        cell.subset_of = Some(700);
        let r = run_cell(&cell, 2).unwrap();
        let a0: Vec<f64> = (0..cell.runs as u64)
            .map(|run| {
                let long = simulate_stream(&SimConfig { n: 700, ..cell.sim.clone() }, run).unwrap();
                crate::estimator::estimate_trawl_at_zero(&long.window(0, 300).unwrap())
            })
            .collect();
        assert_eq!(r.consistency.unwrap()[0].mean, mean_sd(&a0).0);
        cell.subset_of = Some(299);
        assert!(cell.validate().is_err());
    }

    #[test]
    fn sig_digit_formatting() {
        assert_eq!(format_sig(0.3471234, 6), "0.347123");
        assert_eq!(format_sig(-0.0529999999, 3), "-0.053");
        assert_eq!(format_sig(2.0, 6), "2");
        assert_eq!(format_sig(f64::NAN, 6), "NaN");
    }
}
