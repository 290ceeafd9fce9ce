use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{Attribution, Granularity, Method, Scope, XaiError};
use crate::dataio::WindowedDataset;
use crate::tft::{ModelConfig, TftModel};
use crate::train::{loss_and_accuracy, predict, train, TrainConfig, TrainHistory};

/// Mean VSN selection weight of every feature over all windows and
/// timesteps of `data`, normalized to sum to one.
pub fn vsn_global_importance(model: &TftModel, data: &WindowedDataset) -> Result<Attribution, XaiError> {
    let p = predict(model, data)?;
    let mut params = BTreeMap::new();
    params.insert("n_windows".into(), data.len().into());
    Ok(Attribution {
        method: Method::Vsn,
        scope: Scope::Global,
        granularity: Granularity::Feature,
        feature_names: data.feature_names().to_vec(),
        window: data.window(),
        scores: p.vsn_importance,
        phi0: None,
        seed: None,
        params,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FusedImportance {
    pub feature_names: Vec<String>,
    /// Sums to one.
    pub scores: Vec<f64>,
    /// 1-based ranks per contributing method, ties averaged.
    pub ranks: BTreeMap<String, Vec<f64>>,
    pub methods: Vec<Method>,
}

impl FusedImportance {
    /// Feature indices by decreasing fused score, ties in index order.
    pub fn ranking(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.scores.len()).collect();
        idx.sort_by(|&a, &b| self.scores[b].total_cmp(&self.scores[a]));
        idx
    }

    /// Smallest prefix of the ranking whose cumulative score reaches `tau`,
    /// returned in original feature order. `tau ≥ 1` keeps every feature.
    pub fn retained(&self, tau: f64) -> Result<Vec<usize>, XaiError> {
        if !(tau > 0.0) || tau.is_nan() {
            return Err(XaiError::Invalid(format!("threshold {tau} must be positive")));
        }
        let mut keep = Vec::new();
        if tau >= 1.0 {
            keep.extend(0..self.scores.len());
        } else {
            let mut acc = 0.0;
            for i in self.ranking() {
                keep.push(i);
                acc += self.scores[i];
                if acc >= tau {
                    break;
                }
            }
        }
        if keep.is_empty() {
            return Err(XaiError::Invalid("no feature retained".into()));
        }
        keep.sort_unstable();
        Ok(keep)
    }
}

/// 1-based descending ranks; tied scores share the mean of their ranks.
pub(crate) fn average_ranks(scores: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut ranks = vec![0.0; scores.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && scores[idx[j + 1]] == scores[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Rank fusion of global per-feature scores. Each method's rank `r` maps to
/// `(F − r) / (F(F−1)/2)`; the fused score is the normalized mean of these.
pub fn retune_feature_importance(inputs: &[&Attribution]) -> Result<FusedImportance, XaiError> {
    let first = inputs.first().ok_or_else(|| XaiError::Invalid("no importance to fuse".into()))?;
    let names = first.feature_names.clone();
    let f = names.len();
    if f == 0 {
        return Err(XaiError::Invalid("no features".into()));
    }
    let mut sum = vec![0.0; f];
    let mut ranks = BTreeMap::new();
    let mut methods = Vec::new();
    for a in inputs {
        if a.feature_names != names {
            return Err(XaiError::Invalid("importances cover different features".into()));
        }
        let scores = a.feature_scores();
        if scores.iter().any(|s| !s.is_finite()) {
            return Err(XaiError::Invalid("non-finite importance".into()));
        }
        let r = average_ranks(&scores);
        let denom = (f * (f - 1)) as f64 / 2.0;
        for (s, &ri) in sum.iter_mut().zip(&r) {
            *s += if f == 1 { 1.0 } else { (f as f64 - ri) / denom };
        }
        let key = serde_json::to_value(a.method)?.as_str().unwrap_or("unknown").to_string();
        ranks.insert(key, r);
        methods.push(a.method);
    }
    let total: f64 = sum.iter().sum();
    Ok(FusedImportance { feature_names: names, scores: sum.iter().map(|s| s / total).collect(), ranks, methods })
}

#[derive(Clone, Debug)]
pub struct FineTuneResult {
    pub retained: Vec<usize>,
    pub retained_names: Vec<String>,
    pub model: TftModel,
    pub history: TrainHistory,
    pub accuracy_before: f64,
    pub accuracy_after: f64,
}

/// Retrains a fresh model on the features kept by `fused.retained(tau)` and
/// compares test accuracy with `model`.
pub fn fine_tune_feature_selection(
    model: &TftModel,
    fused: &FusedImportance,
    tau: f64,
    train_set: &WindowedDataset,
    test_set: &WindowedDataset,
    cfg: &TrainConfig,
) -> Result<FineTuneResult, XaiError> {
    if fused.feature_names.as_slice() != train_set.feature_names() {
        return Err(XaiError::Invalid("fused importance and dataset cover different features".into()));
    }
    let retained = fused.retained(tau)?;
    let k = model.config().n_classes;
    let (_, accuracy_before) = loss_and_accuracy(model, test_set, &vec![1.0; k])?;
    let tr = train_set.select_features(&retained);
    let te = test_set.select_features(&retained);
    let mc = ModelConfig { n_features: retained.len(), ..model.config().clone() };
    let mut tuned = TftModel::new(mc, cfg.seed)?;
    let history = train(&mut tuned, &tr, Some(&te), cfg)?;
    let (_, accuracy_after) = loss_and_accuracy(&tuned, &te, &vec![1.0; k])?;
    Ok(FineTuneResult {
        retained_names: retained.iter().map(|&i| fused.feature_names[i].clone()).collect(),
        retained,
        model: tuned,
        history,
        accuracy_before,
        accuracy_after,
    })
}
