//! `trawlkit`: simulate, estimate, Monte Carlo and forecast from the shell.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::fmt::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use trawlkit::estimator::{confidence_interval, EstimateOptions};
use trawlkit::forecast::{dm_test, rolling_forecast, stars, Predictor, RollingOptions};
use trawlkit::montecarlo::{emit_table, format_sig, run_cell, Target};
use trawlkit::{SimConfig, StudyCell, TrawlEstimate};
use trawlkit_cli::{parse_loss_pair, parse_series, read_json, write_series, write_text, CliError, Result};

#[derive(Parser)]
#[command(name = "trawlkit", version, about = "Simulate, estimate and forecast trawl processes")]
#[command(arg_required_else_help = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a path from a JSON configuration.
    Simulate(SimulateArgs),
    /// Estimate the trawl function, its variance and confidence bounds.
    Estimate(EstimateArgs),
    /// Run a Monte Carlo cell and print one of its tables.
    Mc(McArgs),
    /// Run a Monte Carlo cell and print its coverage table.
    McCoverage(McArgs),
    /// Rolling-window forecasts with losses and Diebold–Mariano tests.
    Forecast(ForecastArgs),
    /// Diebold–Mariano test on two loss columns.
    DmTest(DmArgs),
}

#[derive(Args)]
struct Output {
    /// Output file; stdout if omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Significant digits of numeric output.
    #[arg(long, default_value_t = 6, value_parser = clap::value_parser!(u8).range(1..=17))]
    precision: u8,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the RNG seed of the configuration.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EstimateArgs {
    #[arg(long = "in")]
    input: PathBuf,
    /// Largest grid index of the estimate.
    #[arg(long)]
    max_lag: usize,
    /// Truncation of the variance sums; defaults to the largest lag.
    #[arg(long)]
    n_trunc: Option<usize>,
    /// Subsampling stride of the derivative at zero.
    #[arg(long)]
    k_stride: Option<usize>,
    /// Error level β of the two-sided bounds.
    #[arg(long, alias = "levels", default_value_t = 0.05)]
    level: f64,
    /// Subtracted from every observation.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    offset: f64,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct McArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the number of runs.
    #[arg(long)]
    runs: Option<usize>,
    /// Overrides the master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; defaults to all cores.
    #[arg(long, env = "TRAWLKIT_JOBS")]
    jobs: Option<usize>,
    /// Table to print: consistency, coverage or slices; defaults to the first target.
    #[arg(long)]
    table: Option<Target>,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct ForecastArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    window: usize,
    #[arg(long)]
    hmax: usize,
    /// Comma-separated: trawl, acf, naive, parametric:alpha,H,c,theta. The first is the reference of the tests.
    #[arg(long, default_value = "trawl,acf,naive")]
    predictors: String,
    /// Loss powers of the Diebold–Mariano tests.
    #[arg(long, value_delimiter = ',', default_value = "1,2")]
    dm_power: Vec<u32>,
    /// Re-estimate every `stride` origins.
    #[arg(long, default_value_t = 1)]
    stride: usize,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    offset: f64,
    #[arg(long, env = "TRAWLKIT_JOBS")]
    jobs: Option<usize>,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct DmArgs {
    /// CSV whose first two columns are the losses of the two forecasts.
    #[arg(long = "in")]
    input: PathBuf,
    /// Forecast horizon in steps.
    #[arg(long, default_value_t = 1)]
    h: usize,
    /// Power the losses were raised to.
    #[arg(long, default_value_t = 1)]
    power: u32,
    #[command(flatten)]
    output: Output,
}

fn jobs(requested: Option<usize>) -> usize {
    requested
        .filter(|j| *j > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
}

fn simulate(a: SimulateArgs) -> Result<()> {
    let mut cfg: SimConfig = read_json(&a.config)?;
    if let Some(seed) = a.seed {
        cfg.rng_seed = seed;
    }
    let series = trawlkit::simulator::simulate(&cfg)?;
    write_series(a.out.as_deref(), &series)
}

fn estimate(a: EstimateArgs) -> Result<()> {
    if !(a.level > 0.0 && a.level < 1.0) {
        return Err(CliError::Usage(format!("--level must lie in (0, 1), got {}", a.level)));
    }
    let x = parse_series(&a.input, a.offset)?;
    let opts = EstimateOptions { max_lag: Some(a.max_lag), n_n: a.n_trunc, k_n: a.k_stride };
    let est = TrawlEstimate::compute(&x, &opts)?;
    if !(est.q_n > 0.0) {
        return Err(trawlkit::Error::Degenerate("the series has no variation".into()).into());
    }
    let est = est.with_avar()?;
    let sigma2 = est.sigma2_hat.as_deref().unwrap_or_default();
    let floored = est.sigma2_degenerate.as_deref().unwrap_or_default();
    let f = |v: f64| format_sig(v, a.output.precision as usize);
    let mut out = String::from("t,a_hat,a_hat_bc,a_prime,sigma2,ci_lo,ci_hi,flag\n");
    for i in 0..est.a_hat.len() {
        let (lo, hi) = confidence_interval(est.a_hat[i], sigma2[i], est.n, est.delta, a.level)?;
        let flag = if floored[i] { "floored" } else { "ok" };
        let cols = [i as f64 * est.delta, est.a_hat[i], est.a_hat_bc[i], est.a_hat_prime[i], sigma2[i], lo, hi].map(f);
        writeln!(out, "{},{flag}", cols.join(",")).expect("string write");
    }
    write_text(a.output.out.as_deref(), &out)
}

fn mc(a: McArgs, force: Option<Target>) -> Result<()> {
    let mut cell: StudyCell = read_json(&a.config)?;
    if let Some(runs) = a.runs {
        cell.runs = runs;
    }
    if let Some(seed) = a.seed {
        cell.sim.rng_seed = seed;
    }
    let table = force.or(a.table).unwrap_or(cell.targets.first().copied().unwrap_or(Target::Consistency));
    if !cell.targets.contains(&table) {
        cell.targets.push(table);
    }
    let result = run_cell(&cell, jobs(a.jobs))?;
    let csv = emit_table(&result, table, a.output.precision as usize)?;
    write_text(a.output.out.as_deref(), &csv)
}

/// Split a predictor list, keeping the three parameters of `parametric:` together.
fn parse_predictors(list: &str) -> Result<Vec<Predictor>> {
    let tokens: Vec<&str> = list.split(',').map(str::trim).collect();
    let mut out = Vec::new();
    let mut k = 0;
    while k < tokens.len() {
        let token = if tokens[k].starts_with("parametric:") {
            let end = (k + 4).min(tokens.len());
            let joined = tokens[k..end].join(",");
            k = end;
            joined
        } else {
            k += 1;
            tokens[k - 1].to_string()
        };
        out.push(token.parse::<Predictor>().map_err(|e| CliError::Usage(e.to_string()))?);
    }
    Ok(out)
}

fn forecast(a: ForecastArgs) -> Result<()> {
    let predictors = parse_predictors(&a.predictors)?;
    if let Some(p) = a.dm_power.iter().find(|p| !matches!(p, 1 | 2)) {
        return Err(CliError::Usage(format!("--dm-power accepts 1 and 2, got {p}")));
    }
    if a.stride == 0 {
        return Err(CliError::Usage("--stride must be >= 1".into()));
    }
    let x = parse_series(&a.input, a.offset)?;
    let opts = RollingOptions { stride: a.stride, dm_powers: a.dm_power.clone() };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs(a.jobs))
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start worker pool: {e}")))?;
    let report = pool.install(|| rolling_forecast(&x, a.window, a.hmax, &predictors, &opts))?;
    if report.fallbacks > 0 {
        eprintln!("note: {} forecasts fell back to the last value", report.fallbacks);
    }
    let f = |v: f64| format_sig(v, a.output.precision as usize);
    let opt = |v: Option<f64>| v.map(f).unwrap_or_default();
    let mut out =
        String::from("h,predictor,mse,mae,ratio_vs_naive_mse,ratio_vs_naive_mae,dm_power,dm_stat,dm_p,dm_stars\n");
    for loss in &report.losses {
        let head = format!(
            "{},{},{},{},{},{}",
            loss.h,
            loss.predictor.name(),
            f(loss.mse),
            f(loss.mae),
            opt(loss.ratio_vs_naive_mse),
            opt(loss.ratio_vs_naive_mae)
        );
        let tests: Vec<_> = report.dm.iter().filter(|d| d.h == loss.h && d.other == loss.predictor).collect();
        if tests.is_empty() {
            writeln!(out, "{head},,,,").expect("string write");
        }
        for d in tests {
            let r = &d.result;
            let mark = if r.p_value.is_nan() { "" } else { stars(r.p_value) };
            writeln!(out, "{head},{},{},{},{mark}", d.power, f(r.statistic), f(r.p_value)).expect("string write");
        }
    }
    write_text(a.output.out.as_deref(), &out)
}

fn dm(a: DmArgs) -> Result<()> {
    let (la, lb) = parse_loss_pair(&a.input)?;
    let r = dm_test(&la, &lb, a.h, a.power)?;
    let f = |v: f64| format_sig(v, a.output.precision as usize);
    let text = format!(
        "dm_stat,dm_p,dm_stars,dominance\n{},{},{},{}\n",
        f(r.statistic),
        f(r.p_value),
        stars(r.p_value),
        r.dominance
    );
    write_text(a.output.out.as_deref(), &text)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Estimate(a) => estimate(a),
        Command::Mc(a) => mc(a, None),
        Command::McCoverage(a) => mc(a, Some(Target::Coverage)),
        Command::Forecast(a) => forecast(a),
        Command::DmTest(a) => dm(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
