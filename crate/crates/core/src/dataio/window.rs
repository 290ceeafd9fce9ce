use serde::{Deserialize, Serialize};

use super::{DataError, TimeSeriesTable};

/// Rolling-window samples, row-major `M×w×F`, each labelled with the
/// class of its final timestep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindowedDataset {
    samples: Vec<f64>,
    labels: Vec<usize>,
    window: usize,
    feature_names: Vec<String>,
    /// Timestamp of the last row of each window.
    end_times: Vec<f64>,
}

impl WindowedDataset {
    pub fn new(
        samples: Vec<f64>,
        labels: Vec<usize>,
        window: usize,
        feature_names: Vec<String>,
        end_times: Vec<f64>,
    ) -> Result<Self, DataError> {
        let m = labels.len();
        if window == 0 || samples.len() != m * window * feature_names.len() || end_times.len() != m {
            return Err(DataError::Invalid(format!(
                "inconsistent windowed dataset: {} values, {m} labels, window {window}, {} features",
                samples.len(),
                feature_names.len()
            )));
        }
        Ok(WindowedDataset {
            samples,
            labels,
            window,
            feature_names,
            end_times,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn end_times(&self) -> &[f64] {
        &self.end_times
    }

    /// All samples, flat.
    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub(crate) fn samples_mut(&mut self) -> &mut [f64] {
        &mut self.samples
    }

    pub fn sample_len(&self) -> usize {
        self.window * self.n_features()
    }

    /// Sample `m` as a flat `w×F` slice.
    pub fn sample(&self, m: usize) -> &[f64] {
        let s = self.sample_len();
        &self.samples[m * s..(m + 1) * s]
    }

    /// Samples at the given indices, in that order.
    pub fn subset(&self, idx: &[usize]) -> WindowedDataset {
        let samples = idx.iter().flat_map(|&i| self.sample(i).iter().copied()).collect();
        WindowedDataset {
            samples,
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            window: self.window,
            feature_names: self.feature_names.clone(),
            end_times: idx.iter().map(|&i| self.end_times[i]).collect(),
        }
    }

    /// Projects every sample onto the listed feature columns.
    pub fn select_features(&self, cols: &[usize]) -> WindowedDataset {
        let f = self.n_features();
        let mut samples = Vec::with_capacity(self.len() * self.window * cols.len());
        for row in self.samples.chunks(f) {
            samples.extend(cols.iter().map(|&c| row[c]));
        }
        WindowedDataset {
            samples,
            labels: self.labels.clone(),
            window: self.window,
            feature_names: cols.iter().map(|&c| self.feature_names[c].clone()).collect(),
            end_times: self.end_times.clone(),
        }
    }

    pub fn with_labels(mut self, labels: Vec<usize>) -> Result<Self, DataError> {
        if labels.len() != self.len() {
            return Err(DataError::Invalid("label count does not match samples".into()));
        }
        self.labels = labels;
        Ok(self)
    }
}

/// Slides a length-`w` window over `table`. Sample `m` covers rows
/// `m..m+w` and takes the label of row `m+w−1`.
pub fn generate_rolling_window(
    table: &TimeSeriesTable,
    labels: &[usize],
    w: usize,
) -> Result<WindowedDataset, DataError> {
    let n = table.n_rows();
    if labels.len() != n {
        return Err(DataError::Invalid(format!("{} labels for {n} rows", labels.len())));
    }
    if w == 0 {
        return Err(DataError::Invalid("window must be at least 1".into()));
    }
    if w > n {
        return Err(DataError::WindowTooLong { window: w, rows: n });
    }
    if table.has_missing() {
        return Err(DataError::HasMissing);
    }
    let f = table.n_features();
    let m = n - w + 1;
    let mut samples = Vec::with_capacity(m * w * f);
    for start in 0..m {
        samples.extend_from_slice(&table.values()[start * f..(start + w) * f]);
    }
    WindowedDataset::new(
        samples,
        labels[w - 1..].to_vec(),
        w,
        table.feature_names().to_vec(),
        table.timestamps()[w - 1..].to_vec(),
    )
}

/// Temporal split: the first `⌈ratio·M⌉` windows train, the rest test.
pub fn split_data(dataset: &WindowedDataset, ratio: f64) -> Result<(WindowedDataset, WindowedDataset), DataError> {
    let m = dataset.len();
    if m == 0 {
        return Err(DataError::Invalid("cannot split an empty dataset".into()));
    }
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(DataError::Invalid(format!("split ratio {ratio} outside (0, 1)")));
    }
    // The small slack keeps products such as 0.7·10 from rounding up past an integer.
    let n_train = ((ratio * m as f64) - 1e-9).ceil() as usize;
    if n_train == 0 || n_train >= m {
        return Err(DataError::Invalid(format!(
            "ratio {ratio} on {m} samples leaves one side empty"
        )));
    }
    let train: Vec<usize> = (0..n_train).collect();
    let test: Vec<usize> = (n_train..m).collect();
    Ok((dataset.subset(&train), dataset.subset(&test)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn table(n: usize, f: usize) -> TimeSeriesTable {
        let ts = (0..n).map(|i| i as f64 * 300.0).collect();
        let names = (0..f).map(|j| format!("s{j}")).collect();
        let values = (0..n * f).map(|i| i as f64).collect();
        TimeSeriesTable::new(ts, names, values).unwrap()
    }

    #[test]
    fn window_shape() {
        let t = table(5, 2);
        let d = generate_rolling_window(&t, &[0, 1, 2, 3, 4], 3).unwrap();
        assert_eq!((d.len(), d.window(), d.n_features()), (3, 3, 2));
        assert_eq!(d.labels(), &[2, 3, 4]);
        assert_eq!(d.sample(1), &t.values()[2..8]);
    }

    #[test]
    fn degenerate_windows() {
        let t = table(4, 1);
        let d1 = generate_rolling_window(&t, &[0; 4], 1).unwrap();
        assert_eq!(d1.len(), 4);
        assert_eq!(d1.sample(2), &[2.0]);
        let dn = generate_rolling_window(&t, &[0; 4], 4).unwrap();
        assert_eq!(dn.len(), 1);
        assert_eq!(dn.sample(0), t.values());
        assert!(matches!(
            generate_rolling_window(&t, &[0; 4], 5),
            Err(DataError::WindowTooLong { .. })
        ));
    }

    #[test]
    fn split_sizes() {
        let d = generate_rolling_window(&table(10, 1), &(0..10).collect::<Vec<_>>(), 1).unwrap();
        let (tr, te) = split_data(&d, 0.8).unwrap();
        assert_eq!((tr.len(), te.len()), (8, 2));
        assert_eq!(tr.labels(), &[0, 1, 2, 3, 4, 5, 6, 7]);
        assert_eq!(te.labels(), &[8, 9]);
        let (tr, te) = split_data(&d, 0.7).unwrap();
        assert_eq!((tr.len(), te.len()), (7, 3));

        let d3 = d.subset(&[0, 1, 2]);
        let (tr, te) = split_data(&d3, 0.5).unwrap();
        assert_eq!((tr.len(), te.len()), (2, 1));
        assert!(split_data(&d3, 0.99).is_err());
        assert!(split_data(&d3, 1.0).is_err());
    }

    proptest! {
        #[test]
        fn last_row_aligns_with_table(n in 1usize..60, w in 1usize..60, f in 1usize..4) {
            prop_assume!(w <= n);
            let t = table(n, f);
            let labels: Vec<usize> = (0..n).collect();
            let d = generate_rolling_window(&t, &labels, w).unwrap();
            prop_assert_eq!(d.len(), n - w + 1);
            for m in 0..d.len() {
                prop_assert_eq!(&d.sample(m)[(w - 1) * f..], t.row(m + w - 1));
                prop_assert_eq!(d.labels()[m], m + w - 1);
            }
        }

        #[test]
        fn temporal_split_is_ordered(m in 2usize..80, ratio in 0.05f64..0.95) {
            let d = generate_rolling_window(&table(m, 1), &vec![0; m], 1).unwrap();
            if let Ok((tr, te)) = split_data(&d, ratio) {
                let max_train = tr.end_times().iter().copied().fold(f64::MIN, f64::max);
                let min_test = te.end_times().iter().copied().fold(f64::MAX, f64::min);
                prop_assert!(max_train < min_test);
                prop_assert_eq!(tr.len() + te.len(), m);
            }
        }
    }
}
