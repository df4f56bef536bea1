use trawlkit::montecarlo::{emit_table, run_cell, ReportMode, StudyCell, Target, Tuning};
use trawlkit::simulator::SimConfig;
use trawlkit::{SeedSpec, SliceMethod, TrawlSpec};

fn cell(trawl: TrawlSpec, n: usize, report: ReportMode, targets: Vec<Target>, runs: usize, seed: u64) -> StudyCell {
    StudyCell {
        sim: SimConfig::new(trawl, SeedSpec::negbin_normalized(0.2).unwrap(), 0.1, n, seed),
        runs,
        report,
        targets,
        slice_h: Some(vec![0.1, 0.5]),
        slice_method: SliceMethod::EmpiricalAcf,
        tuning: Tuning::default(),
        subset_of: None,
    }
}

#[test]
fn tables_do_not_depend_on_worker_count() {
    let c = cell(
        TrawlSpec::sup_gamma(0.1, 1.5).unwrap(),
        800,
        ReportMode::FixedI(vec![0, 3]),
        vec![Target::Consistency, Target::Coverage, Target::Slices],
        12,
        31,
    );
    let a = run_cell(&c, 1).unwrap();
    let b = run_cell(&c, 5).unwrap();
    for layout in [Target::Consistency, Target::Coverage, Target::Slices] {
        assert_eq!(emit_table(&a, layout, 6).unwrap(), emit_table(&b, layout, 6).unwrap());
    }
}

#[test]
fn short_memory_trawl_at_zero() {
    // Mean 0.947 and SD 0.078 in the reference table.
    let trawl = TrawlSpec::exponential(1.0).unwrap();
    let c = cell(trawl, 5000, ReportMode::FixedT(vec![0.0]), vec![Target::Consistency], 200, 404);
    let r = run_cell(&c, 4).unwrap();
    let row = &r.consistency.unwrap()[0];
    assert!((row.mean - 0.947).abs() <= 0.02, "mean {}", row.mean);
    assert!((row.sd - 0.078).abs() <= 0.02, "sd {}", row.sd);
    assert_eq!(row.truth, 1.0);
    assert_eq!(row.bias, row.mean - row.truth);
}

#[test]
fn missing_target_is_a_layout_error() {
    let c = cell(TrawlSpec::exponential(1.0).unwrap(), 200, ReportMode::FixedT(vec![0.5]), vec![Target::Consistency], 3, 1);
    let r = run_cell(&c, 2).unwrap();
    assert!(emit_table(&r, Target::Slices, 6).is_err());
    let csv = emit_table(&r, Target::Consistency, 6).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "t,n,mean,bias,sd,mean_bc,bias_bc,sd_bc");
    assert_eq!(csv.lines().count(), 2);
}
