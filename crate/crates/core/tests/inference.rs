use trawlkit::inference::{coverage, statistic, StatisticKind, StatisticOptions, Truth, COVERAGE_LEVELS};
use trawlkit::estimator::EstimateOptions;
use trawlkit::montecarlo::{run_cell, ReportMode, StudyCell, Target, Tuning};
use trawlkit::simulator::{simulate_stream, SimConfig};
use trawlkit::{SeedSpec, SliceMethod, TrawlSpec};

fn nb_exp_cell(delta: f64, n: usize, t: f64, seed: u64) -> StudyCell {
    StudyCell {
        sim: SimConfig::new(TrawlSpec::exponential(1.0).unwrap(), SeedSpec::negbin_normalized(0.2).unwrap(), delta, n, seed),
        runs: 200,
        report: ReportMode::FixedT(vec![t]),
        targets: vec![Target::Coverage],
        slice_h: None,
        slice_method: SliceMethod::EmpiricalAcf,
        tuning: Tuning::default(),
        subset_of: None,
    }
}

#[test]
fn infeasible_statistic_is_standard_normal() {
    let r = run_cell(&nb_exp_cell(0.01, 10_000, 0.5, 77), 4).unwrap();
    let row = &r.coverage.unwrap()[0];
    let s = row.summaries[0].as_ref().unwrap();
    let bound = 3.0 / (200f64).sqrt();
    assert!(s.mean.abs() <= bound, "mean {}", s.mean);
    assert!((s.sd - 1.0).abs() <= 0.15, "sd {}", s.sd);
    for summary in row.summaries.iter().flatten() {
        for w in summary.coverage.windows(2) {
            assert!(w[0] <= w[1], "coverage not monotone: {:?}", summary.coverage);
        }
    }
}

#[test]
fn closed_form_override_aligns_feasible_and_infeasible() {
    let trawl = TrawlSpec::exponential(1.0).unwrap();
    let seed = SeedSpec::negbin_normalized(0.2).unwrap();
    let truth = Truth { trawl, seed };
    let x = simulate_stream(&SimConfig::new(trawl, seed, 0.1, 2000, 3), 0).unwrap();
    let est = EstimateOptions::default();
    for t in [0.3, 1.0, 2.5] {
        let opts = StatisticOptions { grid_centering: false, sigma2_override: Some(truth.sigma2(t)) };
        let inf = statistic(&x, t, Some(&truth), StatisticKind::Infeasible, &est, &opts).unwrap();
        let fea = statistic(&x, t, Some(&truth), StatisticKind::Feasible, &est, &opts).unwrap();
        assert_eq!(inf.value, fea.value, "t = {t}");
    }
}

#[test]
fn zero_only_kinds_reject_positive_times() {
    let trawl = TrawlSpec::exponential(1.0).unwrap();
    let seed = SeedSpec::gaussian_normalized(0.0).unwrap();
    let truth = Truth { trawl, seed };
    let x = simulate_stream(&SimConfig::new(trawl, seed, 0.1, 500, 3), 0).unwrap();
    let est = EstimateOptions::default();
    let opts = StatisticOptions::default();
    for kind in [StatisticKind::FeasibleT0, StatisticKind::FeasibleT0Gaussian] {
        assert!(statistic(&x, 0.5, Some(&truth), kind, &est, &opts).is_err());
        assert!(statistic(&x, 0.0, Some(&truth), kind, &est, &opts).unwrap().value.is_finite());
    }
}

#[test]
fn coverage_needs_input() {
    assert!(coverage(&[], &COVERAGE_LEVELS).is_err());
}
