use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use super::estimators::Estimator;
use super::EvalError;
use crate::data_pipeline::{Dataset, OUTPUT_DIM, OUTPUT_NAMES};
use crate::io::FormatError;
use crate::mkf::StateEstimate;

/// Frames excluded at the start of every evaluated stream, for every estimator alike.
pub const EVAL_WARMUP: usize = 200;

/// States in the headline comparison; ax is reported too but flagged.
pub const REPORTED_STATES: [bool; OUTPUT_DIM] = [true, true, true, false, true];

pub fn rmse(pred: &[f64], reference: &[f64]) -> Result<f64, EvalError> {
    if pred.len() != reference.len() {
        return Err(EvalError::LengthMismatch(pred.len(), reference.len()));
    }
    if pred.is_empty() {
        return Err(EvalError::NoSamples);
    }
    let ss: f64 = pred.iter().zip(reference).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok((ss / pred.len() as f64).sqrt())
}

pub fn percent_error(rmse: f64, normalizer: f64) -> Result<f64, EvalError> {
    if !(normalizer > 0.0) {
        return Err(EvalError::ZeroNormalizer(normalizer));
    }
    Ok(100.0 * rmse / normalizer)
}

/// Per-state sums of squared error, mergeable across datasets.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SquaredErrorSums {
    pub sum_sq: [f64; OUTPUT_DIM],
    pub count: usize,
}

impl SquaredErrorSums {
    pub fn add(&mut self, pred: &StateEstimate, reference: &StateEstimate) {
        let (p, r) = (pred.to_array(), reference.to_array());
        for c in 0..OUTPUT_DIM {
            self.sum_sq[c] += (p[c] - r[c]) * (p[c] - r[c]);
        }
        self.count += 1;
    }

    pub fn merge(&mut self, other: &Self) {
        for c in 0..OUTPUT_DIM {
            self.sum_sq[c] += other.sum_sq[c];
        }
        self.count += other.count;
    }

    pub fn rmse(&self) -> Result<[f64; OUTPUT_DIM], EvalError> {
        if self.count == 0 {
            return Err(EvalError::NoSamples);
        }
        Ok(self.sum_sq.map(|s| (s / self.count as f64).sqrt()))
    }
}

/// What estimates are scored against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ReferenceSource {
    /// Simulator ground truth.
    #[default]
    Truth,
    /// Smoothed reference-mode filter output (the training targets).
    Targets,
}

impl ReferenceSource {
    pub fn name(self) -> &'static str {
        match self {
            ReferenceSource::Truth => "truth",
            ReferenceSource::Targets => "targets",
        }
    }

    pub fn series(self, ds: &Dataset) -> Result<&[StateEstimate], EvalError> {
        let s = match self {
            ReferenceSource::Truth => ds.truth.as_deref(),
            ReferenceSource::Targets => ds.targets.as_deref(),
        };
        s.ok_or_else(|| EvalError::MissingSeries {
            dataset: ds.id(),
            series: self.name(),
        })
    }
}

impl std::str::FromStr for ReferenceSource {
    type Err = EvalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "truth" => Ok(ReferenceSource::Truth),
            "targets" | "reference" => Ok(ReferenceSource::Targets),
            _ => Err(EvalError::Invalid(format!("unknown reference source `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalOptions {
    pub warmup: usize,
    pub source: ReferenceSource,
    /// Overrides the default normalizer (max |reference| per state).
    pub normalizers: Option<[f64; OUTPUT_DIM]>,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            warmup: EVAL_WARMUP,
            source: ReferenceSource::Truth,
            normalizers: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorMetrics {
    pub name: String,
    pub rmse: [f64; OUTPUT_DIM],
    pub percent_error: [f64; OUTPUT_DIM],
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub source: ReferenceSource,
    pub warmup: usize,
    pub normalizers: [f64; OUTPUT_DIM],
    pub rows: Vec<EstimatorMetrics>,
}

pub const REPORT_HEADER: [&str; 6] = ["estimator", "state", "rmse", "percent_error", "normalizer", "reported"];

impl MetricReport {
    pub fn row(&self, name: &str) -> Option<&EstimatorMetrics> {
        self.rows.iter().find(|r| r.name == name)
    }

    /// Long-format CSV, one line per estimator and state.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), FormatError> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(REPORT_HEADER)?;
        for r in &self.rows {
            for c in 0..OUTPUT_DIM {
                out.write_record([
                    r.name.clone(),
                    OUTPUT_NAMES[c].to_string(),
                    r.rmse[c].to_string(),
                    r.percent_error[c].to_string(),
                    self.normalizers[c].to_string(),
                    (REPORTED_STATES[c] as u8).to_string(),
                ])?;
            }
        }
        out.flush()?;
        Ok(())
    }

    pub fn write(&self, path: &Path) -> Result<(), FormatError> {
        self.write_csv(std::io::BufWriter::new(std::fs::File::create(path)?))
    }

    /// Fixed-width text table: RMSE and %error per state, one line per estimator.
    pub fn format_table(&self) -> String {
        let mut s = String::new();
        let width = self.rows.iter().map(|r| r.name.len()).max().unwrap_or(0).max(9);
        let _ = write!(s, "{:width$}", "estimator");
        for (c, name) in OUTPUT_NAMES.iter().enumerate() {
            let mark = if REPORTED_STATES[c] { "" } else { "*" };
            let _ = write!(s, " | {:>17}", format!("{name}{mark} rmse (%err)"));
        }
        s.push('\n');
        for r in &self.rows {
            let _ = write!(s, "{:width$}", r.name);
            for c in 0..OUTPUT_DIM {
                let _ = write!(s, " | {:>9.4} ({:>5.2})", r.rmse[c], r.percent_error[c]);
            }
            s.push('\n');
        }
        let _ = writeln!(
            s,
            "scored against {}, first {} frames of each stream excluded; * not a headline state",
            self.source.name(),
            self.warmup
        );
        s
    }
}

/// Pooled RMSE and %error from per-dataset estimate series.
///
/// `series[e][d]` is estimator `e` on dataset `d`; `references[d]` is what it is scored
/// against. Frames before `opts.warmup` are dropped from every stream.
pub fn compare_series(
    names: &[String],
    series: &[Vec<Vec<StateEstimate>>],
    references: &[&[StateEstimate]],
    opts: &EvalOptions,
) -> Result<MetricReport, EvalError> {
    let mut max_abs = [0.0f64; OUTPUT_DIM];
    for r in references {
        for s in r.iter().skip(opts.warmup) {
            for (m, v) in max_abs.iter_mut().zip(s.to_array()) {
                *m = m.max(v.abs());
            }
        }
    }
    let normalizers = opts.normalizers.unwrap_or(max_abs);
    let mut rows = Vec::with_capacity(names.len());
    for (name, per_ds) in names.iter().zip(series) {
        if per_ds.len() != references.len() {
            return Err(EvalError::LengthMismatch(per_ds.len(), references.len()));
        }
        let mut sums = SquaredErrorSums::default();
        for (est, r) in per_ds.iter().zip(references) {
            if est.len() != r.len() {
                return Err(EvalError::LengthMismatch(est.len(), r.len()));
            }
            for (p, q) in est.iter().zip(r.iter()).skip(opts.warmup) {
                sums.add(p, q);
            }
        }
        let rmse = sums.rmse()?;
        let mut pct = [0.0; OUTPUT_DIM];
        for c in 0..OUTPUT_DIM {
            pct[c] = percent_error(rmse[c], normalizers[c])?;
        }
        rows.push(EstimatorMetrics {
            name: name.clone(),
            rmse,
            percent_error: pct,
            samples: sums.count,
        });
    }
    Ok(MetricReport {
        source: opts.source,
        warmup: opts.warmup,
        normalizers,
        rows,
    })
}

/// Runs every estimator on every dataset and scores them against the chosen reference.
pub fn compare_estimators(
    datasets: &[&Dataset],
    estimators: &[Estimator],
    opts: &EvalOptions,
) -> Result<MetricReport, EvalError> {
    let references = datasets
        .iter()
        .map(|d| opts.source.series(d))
        .collect::<Result<Vec<_>, _>>()?;
    let mut series = Vec::with_capacity(estimators.len());
    for e in estimators {
        series.push(
            datasets
                .iter()
                .map(|d| e.estimate(d))
                .collect::<Result<Vec<_>, _>>()?,
        );
    }
    let names: Vec<String> = estimators.iter().map(|e| e.name().to_string()).collect();
    compare_series(&names, &series, &references, opts)
}
