//! Tabular ingestion, gap filling, rolling windows, scaling and splitting.

mod csvio;
mod scale;
mod synth;
mod window;

use serde::{Deserialize, Serialize};

pub use csvio::{load_csv, read_csv, write_csv, LoadedData, Schema};
pub use scale::{scale_data, ScalingParams};
pub use synth::{synth_dataset, SynthConfig, SynthOutput};
pub use window::{generate_rolling_window, split_data, WindowedDataset};

/// Default rolling-window length: one hour at five-minute sampling.
pub const DEFAULT_WINDOW: usize = 12;

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("no rows")]
    NoRows,
    #[error("unparseable timestamp `{value}` at row {row}")]
    BadTimestamp { row: usize, value: String },
    #[error("timestamps not strictly increasing: row {row} has {current} after {previous}")]
    NonMonotone { row: usize, previous: f64, current: f64 },
    #[error("bad label `{value}` at row {row}")]
    BadLabel { row: usize, value: String },
    #[error("column `{0}` is entirely missing")]
    AllMissing(String),
    #[error("table still has missing values; fill them first")]
    HasMissing,
    #[error("window {window} longer than series of {rows} rows")]
    WindowTooLong { window: usize, rows: usize },
    #[error("{0}")]
    Invalid(String),
}

/// Timestamped multivariate series with a missing-value mask.
///
/// `values` is row-major `N×F`; missing cells hold `NaN` and are flagged
/// in `missing`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeSeriesTable {
    timestamps: Vec<f64>,
    feature_names: Vec<String>,
    values: Vec<f64>,
    missing: Vec<bool>,
}

impl TimeSeriesTable {
    /// Builds a table; `NaN` cells are treated as missing.
    pub fn new(timestamps: Vec<f64>, feature_names: Vec<String>, values: Vec<f64>) -> Result<Self, DataError> {
        let n = timestamps.len();
        let f = feature_names.len();
        if values.len() != n * f {
            return Err(DataError::Invalid(format!(
                "{} values for a {n}x{f} table",
                values.len()
            )));
        }
        check_monotone(&timestamps)?;
        let missing = values.iter().map(|v| !v.is_finite()).collect();
        let values = values.into_iter().map(|v| if v.is_finite() { v } else { f64::NAN }).collect();
        Ok(TimeSeriesTable {
            timestamps,
            feature_names,
            values,
            missing,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.timestamps.len()
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn timestamps(&self) -> &[f64] {
        &self.timestamps
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn missing_mask(&self) -> &[bool] {
        &self.missing
    }

    pub fn value(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.n_features() + col]
    }

    pub fn is_missing(&self, row: usize, col: usize) -> bool {
        self.missing[row * self.n_features() + col]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        let f = self.n_features();
        &self.values[row * f..(row + 1) * f]
    }

    pub fn column(&self, col: usize) -> Vec<f64> {
        (0..self.n_rows()).map(|r| self.value(r, col)).collect()
    }

    pub fn has_missing(&self) -> bool {
        self.missing.iter().any(|&m| m)
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.feature_names.iter().position(|n| n == name)
    }

    /// Keeps only the listed columns, in the given order.
    pub fn select_columns(&self, cols: &[usize]) -> TimeSeriesTable {
        let f = self.n_features();
        let mut values = Vec::with_capacity(self.n_rows() * cols.len());
        let mut missing = Vec::with_capacity(values.capacity());
        for r in 0..self.n_rows() {
            for &c in cols {
                values.push(self.values[r * f + c]);
                missing.push(self.missing[r * f + c]);
            }
        }
        TimeSeriesTable {
            timestamps: self.timestamps.clone(),
            feature_names: cols.iter().map(|&c| self.feature_names[c].clone()).collect(),
            values,
            missing,
        }
    }

    /// Rows `start..end` as a new table.
    pub fn slice_rows(&self, start: usize, end: usize) -> TimeSeriesTable {
        let f = self.n_features();
        TimeSeriesTable {
            timestamps: self.timestamps[start..end].to_vec(),
            feature_names: self.feature_names.clone(),
            values: self.values[start * f..end * f].to_vec(),
            missing: self.missing[start * f..end * f].to_vec(),
        }
    }

    /// Largest relative deviation of any step from the median step.
    pub fn spacing_deviation(&self) -> f64 {
        if self.n_rows() < 3 {
            return 0.0;
        }
        let mut steps: Vec<f64> = self.timestamps.windows(2).map(|w| w[1] - w[0]).collect();
        let worst = |median: f64, s: &[f64]| {
            s.iter().map(|d| ((d - median) / median).abs()).fold(0.0, f64::max)
        };
        let copy = steps.clone();
        steps.sort_by(f64::total_cmp);
        worst(steps[steps.len() / 2], &copy)
    }
}

fn check_monotone(ts: &[f64]) -> Result<(), DataError> {
    for (i, w) in ts.windows(2).enumerate() {
        if !(w[1] > w[0]) {
            return Err(DataError::NonMonotone {
                row: i + 1,
                previous: w[0],
                current: w[1],
            });
        }
    }
    Ok(())
}

/// Gap-filling policy.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FillPolicy {
    /// Drop columns with no observed value instead of failing.
    pub drop_all_missing_columns: bool,
}

impl Default for FillPolicy {
    fn default() -> Self {
        FillPolicy {
            drop_all_missing_columns: true,
        }
    }
}

/// Forward-fills each column, then backward-fills any leading gap.
pub fn preprocess(table: &TimeSeriesTable, policy: FillPolicy) -> Result<TimeSeriesTable, DataError> {
    let n = table.n_rows();
    let mut keep = Vec::new();
    for c in 0..table.n_features() {
        if (0..n).all(|r| table.is_missing(r, c)) {
            let name = &table.feature_names[c];
            if !policy.drop_all_missing_columns {
                return Err(DataError::AllMissing(name.clone()));
            }
            log::warn!("dropping column `{name}`: no observed values");
        } else {
            keep.push(c);
        }
    }
    let mut out = table.select_columns(&keep);
    let f = out.n_features();
    for c in 0..f {
        let mut last: Option<f64> = None;
        for r in 0..n {
            let i = r * f + c;
            if out.missing[i] {
                if let Some(v) = last {
                    out.values[i] = v;
                    out.missing[i] = false;
                }
            } else {
                last = Some(out.values[i]);
            }
        }
        let first = (0..n).find(|&r| !out.missing[r * f + c]).expect("column has a value");
        let v = out.values[first * f + c];
        for r in 0..first {
            out.values[r * f + c] = v;
            out.missing[r * f + c] = false;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(col: Vec<f64>) -> TimeSeriesTable {
        let ts = (0..col.len()).map(|i| i as f64 * 300.0).collect();
        TimeSeriesTable::new(ts, vec!["a".into()], col).unwrap()
    }

    #[test]
    fn forward_fill_interior_gap() {
        let t = preprocess(&table(vec![1.0, f64::NAN, 3.0]), FillPolicy::default()).unwrap();
        assert_eq!(t.values(), &[1.0, 1.0, 3.0]);
        assert!(!t.has_missing());
    }

    #[test]
    fn backward_fill_leading_gap() {
        let t = preprocess(&table(vec![f64::NAN, 2.0]), FillPolicy::default()).unwrap();
        assert_eq!(t.values(), &[2.0, 2.0]);
    }

    #[test]
    fn complete_table_is_unchanged() {
        let t = table(vec![4.0, 5.0, 6.0]);
        assert_eq!(preprocess(&t, FillPolicy::default()).unwrap(), t);
    }

    #[test]
    fn all_missing_column_dropped_or_rejected() {
        let ts = vec![0.0, 300.0];
        let t = TimeSeriesTable::new(ts, vec!["a".into(), "b".into()], vec![1.0, f64::NAN, 2.0, f64::NAN]).unwrap();
        let kept = preprocess(&t, FillPolicy::default()).unwrap();
        assert_eq!(kept.feature_names(), &["a".to_string()]);
        let strict = FillPolicy {
            drop_all_missing_columns: false,
        };
        assert!(matches!(preprocess(&t, strict), Err(DataError::AllMissing(c)) if c == "b"));
    }

    #[test]
    fn non_monotone_timestamps_rejected() {
        let err = TimeSeriesTable::new(vec![0.0, 300.0, 200.0], vec!["a".into()], vec![1.0; 3]).unwrap_err();
        assert!(matches!(err, DataError::NonMonotone { row: 2, .. }));
    }

    #[test]
    fn spacing_deviation_detects_gap() {
        let t = TimeSeriesTable::new(vec![0.0, 300.0, 600.0, 1200.0], vec!["a".into()], vec![0.0; 4]).unwrap();
        assert!((t.spacing_deviation() - 1.0).abs() < 1e-12);
    }
}
