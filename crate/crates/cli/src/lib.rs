//! Series and table I/O for the `trawlkit` binary.
//!
//! Series files are CSV with a `time,value` header, optionally preceded by a
//! `# delta=<Δ>` comment line. Times must form an equidistant grid.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::fs::File;
use std::io::{self, BufReader, Read, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;
use trawlkit::TimeSeries;

/// Relative tolerance of the grid check.
pub const GRID_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    /// Malformed input file.
    #[error("{path}: {msg}")]
    Input { path: PathBuf, msg: String },

    #[error("{0}")]
    Usage(String),

    #[error(transparent)]
    Core(#[from] trawlkit::Error),
}

impl CliError {
    /// Process exit code: 2 usage, 3 data, 4 degenerate estimate.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Core(e) if e.is_degenerate() => 4,
            _ => 3,
        }
    }

    fn input(path: &Path, msg: impl Into<String>) -> Self {
        CliError::Input { path: path.to_path_buf(), msg: msg.into() }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|source| CliError::Io { path: path.to_path_buf(), source })
}

/// Read a JSON document into `T`.
pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    serde_json::from_reader(BufReader::new(open(path)?)).map_err(|e| CliError::input(path, e.to_string()))
}

fn header_delta(path: &Path, line: &str) -> Result<Option<f64>> {
    let body = line.trim_start_matches('#').trim();
    let Some(v) = body.strip_prefix("delta=") else { return Ok(None) };
    let d: f64 = v.trim().parse().map_err(|_| CliError::input(path, format!("bad delta in header: '{}'", v.trim())))?;
    if !(d > 0.0 && d.is_finite()) {
        return Err(CliError::input(path, format!("delta must be positive, got {d}")));
    }
    Ok(Some(d))
}

/// Parse a series file; `offset` is subtracted from every value.
pub fn parse_series(path: &Path, offset: f64) -> Result<TimeSeries> {
    let mut text = String::new();
    BufReader::new(open(path)?)
        .read_to_string(&mut text)
        .map_err(|source| CliError::Io { path: path.to_path_buf(), source })?;
    let mut delta_header = None;
    for line in text.lines().map(str::trim).take_while(|l| l.is_empty() || l.starts_with('#')) {
        if let Some(d) = header_delta(path, line)? {
            delta_header = Some(d);
        }
    }
    let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(text.as_bytes());
    let headers = reader.headers().map_err(|e| CliError::input(path, e.to_string()))?.clone();
    let col = |name: &str| headers.iter().position(|h| h.eq_ignore_ascii_case(name));
    let (Some(ti), Some(vi)) = (col("time"), col("value")) else {
        return Err(CliError::input(path, "expected a 'time,value' header"));
    };
    let mut times = Vec::new();
    let mut values = Vec::new();
    for (k, rec) in reader.records().enumerate() {
        let row = k + 1;
        let rec = rec.map_err(|e| CliError::input(path, format!("row {row}: {e}")))?;
        let field = |i: usize, what: &str| -> Result<f64> {
            let s = rec.get(i).unwrap_or("");
            if s.is_empty() {
                return Err(CliError::input(path, format!("row {row}: missing {what}")));
            }
            s.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| CliError::input(path, format!("row {row}: invalid {what} '{s}'")))
        };
        times.push(field(ti, "time")?);
        values.push(field(vi, "value")? - offset);
    }
    if times.is_empty() {
        return Err(CliError::input(path, "no observations"));
    }
    let delta = match (delta_header, times.len()) {
        (Some(d), _) => d,
        (None, 1) => return Err(CliError::input(path, "cannot infer delta from a single row without a header")),
        (None, _) => times[1] - times[0],
    };
    let tol = |t: f64| GRID_TOLERANCE * t.abs().max(delta);
    for k in 1..times.len() {
        let expected = times[0] + k as f64 * delta;
        if !(times[k] > times[k - 1]) || (times[k] - expected).abs() > tol(times[k]) {
            return Err(CliError::input(
                path,
                format!("row {}: time {} is off the grid with delta {delta}", k + 1, times[k]),
            ));
        }
    }
    Ok(TimeSeries::new(delta, values)?)
}

/// Where a command writes its result.
pub fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    match path {
        Some(p) => {
            let f = File::create(p).map_err(|source| CliError::Io { path: p.to_path_buf(), source })?;
            Ok(Box::new(io::BufWriter::new(f)))
        }
        None => Ok(Box::new(io::BufWriter::new(io::stdout().lock()))),
    }
}

fn io_err(path: Option<&Path>) -> impl Fn(io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.map_or_else(|| PathBuf::from("<stdout>"), Path::to_path_buf), source }
}

/// Write text to `path` or stdout.
pub fn write_text(path: Option<&Path>, text: &str) -> Result<()> {
    let mut out = output(path)?;
    out.write_all(text.as_bytes()).and_then(|_| out.flush()).map_err(io_err(path))
}

/// Write a series with shortest round-trip float formatting.
pub fn write_series(path: Option<&Path>, series: &TimeSeries) -> Result<()> {
    let mut out = output(path)?;
    let delta = series.delta();
    let mut write = || -> io::Result<()> {
        writeln!(out, "# delta={delta}")?;
        writeln!(out, "time,value")?;
        for (i, v) in series.values().iter().enumerate() {
            writeln!(out, "{},{v}", i as f64 * delta)?;
        }
        out.flush()
    };
    write().map_err(io_err(path))
}

/// Read two loss columns (the first two columns of a headed CSV).
pub fn parse_loss_pair(path: &Path) -> Result<(Vec<f64>, Vec<f64>)> {
    let reader = BufReader::new(open(path)?);
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(reader);
    let (mut a, mut b) = (Vec::new(), Vec::new());
    for (k, rec) in rdr.records().enumerate() {
        let row = k + 1;
        let rec = rec.map_err(|e| CliError::input(path, format!("row {row}: {e}")))?;
        let get = |i: usize| -> Result<f64> {
            rec.get(i)
                .filter(|s| !s.is_empty())
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| CliError::input(path, format!("row {row}: column {} is missing or not a number", i + 1)))
        };
        a.push(get(0)?);
        b.push(get(1)?);
    }
    Ok((a, b))
}
