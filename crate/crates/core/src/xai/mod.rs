//! Explanations: exact and kernel Shapley values, LIME surrogates, VSN
//! importance, rank fusion and importance-driven feature selection.

mod fusion;
mod lime;
mod shap;

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::dataio::WindowedDataset;
use crate::report::bar_chart;
use crate::tft::{TftError, TftModel};
use crate::train::TrainError;

pub use fusion::{
    fine_tune_feature_selection, retune_feature_importance, vsn_global_importance, FineTuneResult, FusedImportance,
};
pub use lime::{lime_explain, LimeConfig, TrainStats};
pub use shap::{exact_shapley, kernel_shap, kernel_shap_values, ShapConfig, ShapleyValues, EXACT_MAX_FEATURES};

#[derive(Debug, thiserror::Error)]
pub enum XaiError {
    #[error(transparent)]
    Model(#[from] TftError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("exact Shapley values enumerate 2^n coalitions and are limited to n ≤ {max}, got {n}; use sampled KernelSHAP instead")]
    TooManyFeatures { n: usize, max: usize },
    #[error("KernelSHAP regression stayed singular after {0} re-samplings; raise n_coalitions")]
    Singular(usize),
    #[error("all LIME perturbations are identical; use more perturbations or a larger noise scale")]
    Degenerate,
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

/// Anything that maps flattened `w×F` windows to per-class scores.
pub trait Classifier {
    fn n_classes(&self) -> usize;
    fn window(&self) -> usize;
    fn n_features(&self) -> usize;
    /// Scores for a batch of windows, `n×K` row-major.
    fn predict_proba(&self, samples: &[f64]) -> Result<Vec<f64>, XaiError>;

    fn sample_len(&self) -> usize {
        self.window() * self.n_features()
    }
}

impl Classifier for TftModel {
    fn n_classes(&self) -> usize {
        self.config().n_classes
    }
    fn window(&self) -> usize {
        self.config().window
    }
    fn n_features(&self) -> usize {
        self.config().n_features
    }
    fn predict_proba(&self, samples: &[f64]) -> Result<Vec<f64>, XaiError> {
        Ok(TftModel::predict_proba(self, samples)?)
    }
}

/// Wraps a plain function of one window as a classifier.
pub struct FnClassifier<F> {
    pub window: usize,
    pub n_features: usize,
    pub n_classes: usize,
    pub f: F,
}

impl<F: Fn(&[f64]) -> Vec<f64>> Classifier for FnClassifier<F> {
    fn n_classes(&self) -> usize {
        self.n_classes
    }
    fn window(&self) -> usize {
        self.window
    }
    fn n_features(&self) -> usize {
        self.n_features
    }
    fn predict_proba(&self, samples: &[f64]) -> Result<Vec<f64>, XaiError> {
        Ok(samples.chunks(self.sample_len()).flat_map(|s| (self.f)(s)).collect())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Vsn,
    Shap,
    Lime,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", content = "index")]
pub enum Scope {
    Global,
    PerClass(usize),
    PerInstance(usize),
}

/// What one explained unit is. `Feature` masks all timesteps of a sensor
/// together; `FeatureTimestep` treats every cell of the window separately.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Granularity {
    #[default]
    Feature,
    FeatureTimestep,
}

impl Granularity {
    /// Indices into a flattened window belonging to each explained unit.
    pub fn groups(self, window: usize, n_features: usize) -> Vec<Vec<usize>> {
        match self {
            Granularity::Feature => (0..n_features).map(|f| (0..window).map(|t| t * n_features + f).collect()).collect(),
            Granularity::FeatureTimestep => (0..window * n_features).map(|i| vec![i]).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Attribution {
    pub method: Method,
    pub scope: Scope,
    pub granularity: Granularity,
    pub feature_names: Vec<String>,
    pub window: usize,
    /// `F` scores, or `w×F` row-major (timestep-major) at cell granularity.
    pub scores: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub phi0: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub params: BTreeMap<String, Value>,
}

impl Attribution {
    /// Display label of each score.
    pub fn labels(&self) -> Vec<String> {
        match self.granularity {
            Granularity::Feature => self.feature_names.clone(),
            Granularity::FeatureTimestep => {
                let f = self.feature_names.len();
                (0..self.scores.len())
                    .map(|i| {
                        let lag = self.window - 1 - i / f;
                        format!("{}[t-{lag}]", self.feature_names[i % f])
                    })
                    .collect()
            }
        }
    }

    /// Per-feature scores; cell scores are summed over timesteps.
    pub fn feature_scores(&self) -> Vec<f64> {
        match self.granularity {
            Granularity::Feature => self.scores.clone(),
            Granularity::FeatureTimestep => {
                let f = self.feature_names.len();
                let mut out = vec![0.0; f];
                for (i, s) in self.scores.iter().enumerate() {
                    out[i % f] += s;
                }
                out
            }
        }
    }

    /// The `n` largest scores by magnitude, ties kept in index order.
    pub fn top(&self, n: usize) -> Vec<(String, f64)> {
        let labels = self.labels();
        let mut idx: Vec<usize> = (0..self.scores.len()).collect();
        idx.sort_by(|&a, &b| self.scores[b].abs().total_cmp(&self.scores[a].abs()));
        idx.into_iter().take(n).map(|i| (labels[i].clone(), self.scores[i])).collect()
    }

    pub fn check(&self) -> Result<(), XaiError> {
        let f = self.feature_names.len();
        let want = match self.granularity {
            Granularity::Feature => f,
            Granularity::FeatureTimestep => f * self.window,
        };
        if self.scores.len() != want {
            return Err(XaiError::Invalid(format!("{} scores for {want} explained units", self.scores.len())));
        }
        if self.scores.iter().any(|s| !s.is_finite()) {
            return Err(XaiError::Invalid("non-finite attribution score".into()));
        }
        Ok(())
    }

    /// Writes `<stem>.json` and a top-10 `<stem>.svg` bar chart.
    pub fn write(&self, dir: impl AsRef<Path>, stem: &str) -> Result<(), XaiError> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        fs::write(dir.join(format!("{stem}.json")), serde_json::to_string_pretty(self)?)?;
        let top = self.top(10);
        let (labels, values): (Vec<String>, Vec<f64>) = top.into_iter().unzip();
        let title = format!("{stem}: top {} by |score|", labels.len());
        fs::write(dir.join(format!("{stem}.svg")), bar_chart(&title, &labels, &values))?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Attribution, XaiError> {
        let a: Attribution = serde_json::from_str(&fs::read_to_string(path)?)?;
        a.check()?;
        Ok(a)
    }
}

/// Seeded random subset of `size` windows used as the SHAP background.
pub fn select_background(data: &WindowedDataset, size: usize, seed: u64) -> Result<Vec<f64>, XaiError> {
    use rand::SeedableRng;
    if data.is_empty() || size == 0 {
        return Err(XaiError::Invalid("background needs at least one window".into()));
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut idx = rand::seq::index::sample(&mut rng, data.len(), size.min(data.len())).into_vec();
    idx.sort_unstable();
    Ok(idx.iter().flat_map(|&i| data.sample(i).iter().copied()).collect())
}

/// Up to `per_class` window indices of each class, in dataset order.
pub fn stratified_probe(labels: &[usize], n_classes: usize, per_class: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new(); n_classes];
    for (i, &l) in labels.iter().enumerate() {
        if l < n_classes && out[l].len() < per_class {
            out[l].push(i);
        }
    }
    out
}

/// Mean absolute score over per-instance explanations.
pub fn mean_abs(attrs: &[Attribution], scope: Scope) -> Result<Attribution, XaiError> {
    let first = attrs.first().ok_or_else(|| XaiError::Invalid("no explanations to aggregate".into()))?;
    let mut scores = vec![0.0; first.scores.len()];
    for a in attrs {
        if a.scores.len() != scores.len() || a.granularity != first.granularity {
            return Err(XaiError::Invalid("explanations of different shapes".into()));
        }
        for (s, v) in scores.iter_mut().zip(&a.scores) {
            *s += v.abs();
        }
    }
    scores.iter_mut().for_each(|s| *s /= attrs.len() as f64);
    let mut params = first.params.clone();
    params.insert("n_instances".into(), attrs.len().into());
    Ok(Attribution {
        method: first.method,
        scope,
        granularity: first.granularity,
        feature_names: first.feature_names.clone(),
        window: first.window,
        scores,
        phi0: None,
        seed: first.seed,
        params,
    })
}

pub(crate) fn check_instance(model: &dyn Classifier, instance: &[f64], target: usize) -> Result<(), XaiError> {
    if instance.len() != model.sample_len() {
        return Err(XaiError::Invalid(format!(
            "instance has {} values, model expects {}",
            instance.len(),
            model.sample_len()
        )));
    }
    if target >= model.n_classes() {
        return Err(XaiError::Invalid(format!("target class {target} outside 0..{}", model.n_classes())));
    }
    if instance.iter().any(|v| !v.is_finite()) {
        return Err(XaiError::Invalid("instance contains non-finite values".into()));
    }
    Ok(())
}
