use serde::{Deserialize, Serialize};

use super::{DataError, WindowedDataset};

/// Per-feature z-score parameters fitted on a training set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingParams {
    pub feature_names: Vec<String>,
    pub mean: Vec<f64>,
    /// Population standard deviation; always positive.
    pub std: Vec<f64>,
    /// Zero-variance features removed during fitting.
    pub dropped: Vec<String>,
}

impl ScalingParams {
    /// Fits on every cell of every training window.
    pub fn fit(train: &WindowedDataset) -> Result<Self, DataError> {
        if train.is_empty() {
            return Err(DataError::Invalid("cannot fit scaling on an empty training set".into()));
        }
        let f = train.n_features();
        let mut sum = vec![0.0; f];
        let mut count = 0usize;
        for row in train.samples().chunks(f) {
            for (s, v) in sum.iter_mut().zip(row) {
                *s += v;
            }
            count += 1;
        }
        let mean: Vec<f64> = sum.iter().map(|s| s / count as f64).collect();
        let mut sq = vec![0.0; f];
        for row in train.samples().chunks(f) {
            for j in 0..f {
                let d = row[j] - mean[j];
                sq[j] += d * d;
            }
        }
        let mut params = ScalingParams {
            feature_names: Vec::new(),
            mean: Vec::new(),
            std: Vec::new(),
            dropped: Vec::new(),
        };
        for j in 0..f {
            let std = (sq[j] / count as f64).sqrt();
            let name = &train.feature_names()[j];
            if std <= 1e-12 * mean[j].abs().max(1.0) {
                log::warn!("dropping zero-variance feature `{name}`");
                params.dropped.push(name.clone());
            } else {
                params.feature_names.push(name.clone());
                params.mean.push(mean[j]);
                params.std.push(std);
            }
        }
        if params.feature_names.is_empty() {
            return Err(DataError::Invalid("every feature has zero variance".into()));
        }
        Ok(params)
    }

    fn column_map(&self, names: &[String]) -> Result<Vec<usize>, DataError> {
        self.feature_names
            .iter()
            .map(|n| {
                names
                    .iter()
                    .position(|m| m == n)
                    .ok_or_else(|| DataError::MissingColumn(n.clone()))
            })
            .collect()
    }

    /// Selects the retained features (by name) and standardizes them.
    pub fn transform(&self, data: &WindowedDataset) -> Result<WindowedDataset, DataError> {
        let cols = self.column_map(data.feature_names())?;
        let mut out = data.select_features(&cols);
        self.standardize_in_place(out.samples_mut());
        Ok(out)
    }

    /// Standardizes flat rows laid out with columns `names`, returning rows
    /// over the retained features only.
    pub fn transform_rows(&self, rows: &[f64], names: &[String]) -> Result<Vec<f64>, DataError> {
        let cols = self.column_map(names)?;
        let f = names.len();
        let mut out = Vec::with_capacity(rows.len() / f * cols.len());
        for row in rows.chunks(f) {
            out.extend(cols.iter().map(|&c| row[c]));
        }
        self.standardize_in_place(&mut out);
        Ok(out)
    }

    fn standardize_in_place(&self, rows: &mut [f64]) {
        let f = self.feature_names.len();
        for row in rows.chunks_mut(f) {
            for j in 0..f {
                row[j] = (row[j] - self.mean[j]) / self.std[j];
            }
        }
    }

    /// Maps scaled data back to original units. Expects the retained features.
    pub fn inverse_transform(&self, data: &WindowedDataset) -> Result<WindowedDataset, DataError> {
        if data.feature_names() != self.feature_names.as_slice() {
            return Err(DataError::Invalid("feature set does not match scaling parameters".into()));
        }
        let mut out = data.clone();
        let f = self.feature_names.len();
        for row in out.samples_mut().chunks_mut(f) {
            for j in 0..f {
                row[j] = row[j] * self.std[j] + self.mean[j];
            }
        }
        Ok(out)
    }
}

/// Fits on `train` and applies the same transform to each of `others`.
pub fn scale_data(
    train: &WindowedDataset,
    others: &[&WindowedDataset],
) -> Result<(WindowedDataset, Vec<WindowedDataset>, ScalingParams), DataError> {
    let params = ScalingParams::fit(train)?;
    let scaled_train = params.transform(train)?;
    let scaled_others = others.iter().map(|d| params.transform(d)).collect::<Result<_, _>>()?;
    Ok((scaled_train, scaled_others, params))
}
