use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{check_instance, Attribution, Classifier, Granularity, Method, Scope, XaiError};
use crate::dataio::WindowedDataset;

/// Per-feature mean and standard deviation of the (scaled) training windows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl TrainStats {
    pub fn from_dataset(data: &WindowedDataset) -> Result<TrainStats, XaiError> {
        if data.is_empty() {
            return Err(XaiError::Invalid("training statistics need at least one window".into()));
        }
        let f = data.n_features();
        let rows = data.samples().chunks(f);
        let n = (data.len() * data.window()) as f64;
        let mut mean = vec![0.0; f];
        for r in rows.clone() {
            for (m, v) in mean.iter_mut().zip(r) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; f];
        for r in rows {
            for ((s, v), m) in var.iter_mut().zip(r).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        Ok(TrainStats { mean, std: var.into_iter().map(|s| (s / n).sqrt()).collect() })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LimeConfig {
    pub n_perturbations: usize,
    /// Kernel width; `None` means `0.75·√M` for `M` explained units.
    pub kernel_width: Option<f64>,
    pub ridge: f64,
    pub n_top: usize,
    pub seed: u64,
    pub granularity: Granularity,
}

impl Default for LimeConfig {
    fn default() -> Self {
        LimeConfig { n_perturbations: 1000, kernel_width: None, ridge: 1.0, n_top: 10, seed: 0, granularity: Granularity::Feature }
    }
}

/// Fidelity below this R² is flagged in the explanation's parameters.
pub const LOW_FIDELITY_R2: f64 = 0.8;

/// LIME for one window.
///
/// Each perturbation switches off a random set of units and redraws their
/// cells from `N(mean_f, std_f)`. The surrogate is a ridge regression of the
/// target score on the presence mask with an unpenalized intercept, weighted
/// by `exp(−d²/σ²)` where `d` is the Euclidean distance from the all-present
/// mask (so `d²` is the number of switched-off units).
pub fn lime_explain(
    model: &dyn Classifier,
    feature_names: &[String],
    stats: &TrainStats,
    instance: &[f64],
    target: usize,
    cfg: &LimeConfig,
) -> Result<Attribution, XaiError> {
    check_instance(model, instance, target)?;
    let f = model.n_features();
    if feature_names.len() != f || stats.mean.len() != f || stats.std.len() != f {
        return Err(XaiError::Invalid("feature names or training statistics do not match the model".into()));
    }
    if cfg.n_perturbations < 2 {
        return Err(XaiError::Invalid("LIME needs at least 2 perturbations".into()));
    }
    if !(cfg.ridge >= 0.0 && cfg.ridge.is_finite()) {
        return Err(XaiError::Invalid("ridge penalty must be finite and non-negative".into()));
    }
    let groups = cfg.granularity.groups(model.window(), f);
    let m = groups.len();
    let width = cfg.kernel_width.unwrap_or(0.75 * (m as f64).sqrt());
    if !(width > 0.0 && width.is_finite()) {
        return Err(XaiError::Invalid("kernel width must be positive".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n = cfg.n_perturbations;
    let len = instance.len();
    let mut masks = vec![true; n * m];
    let mut samples = Vec::with_capacity(n * len);
    samples.extend_from_slice(instance);
    for p in 1..n {
        let start = samples.len();
        samples.extend_from_slice(instance);
        let n_off = rng.random_range(1..=m);
        for u in sample(&mut rng, m, n_off) {
            masks[p * m + u] = false;
            for &i in &groups[u] {
                let feat = i % f;
                samples[start + i] = stats.mean[feat] + stats.std[feat] * rng.sample::<f64, _>(StandardNormal);
            }
        }
    }
    if samples.chunks(len).all(|s| s == instance) {
        return Err(XaiError::Degenerate);
    }
    let probs = model.predict_proba(&samples)?;
    let k = model.n_classes();
    let y: Vec<f64> = probs.chunks(k).map(|r| r[target]).collect();
    let weights: Vec<f64> = (0..n)
        .map(|p| {
            let off = masks[p * m..(p + 1) * m].iter().filter(|b| !**b).count() as f64;
            (-off / (width * width)).exp()
        })
        .collect();
    let x: Vec<f64> = masks.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
    let (coef, intercept, r2) = weighted_ridge(&x, &y, &weights, m, cfg.ridge)?;

    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| coef[b].abs().total_cmp(&coef[a].abs()));
    let top: Vec<usize> = order.into_iter().take(cfg.n_top).collect();
    let mut params = BTreeMap::new();
    params.insert("target_class".into(), target.into());
    params.insert("n_perturbations".into(), n.into());
    params.insert("kernel_width".into(), width.into());
    params.insert("ridge".into(), cfg.ridge.into());
    params.insert("intercept".into(), intercept.into());
    params.insert("r2".into(), if r2.is_finite() { r2.into() } else { serde_json::Value::Null });
    params.insert("low_fidelity".into(), (r2.is_finite() && r2 < LOW_FIDELITY_R2).into());
    params.insert("top".into(), serde_json::json!(top));
    Ok(Attribution {
        method: Method::Lime,
        scope: Scope::PerInstance(0),
        granularity: cfg.granularity,
        feature_names: feature_names.to_vec(),
        window: model.window(),
        scores: coef,
        phi0: None,
        seed: Some(cfg.seed),
        params,
    })
}

/// Weighted ridge with an unpenalized intercept: `(coef, intercept, R²)`.
/// R² is NaN when the target has no weighted variance.
pub(crate) fn weighted_ridge(x: &[f64], y: &[f64], w: &[f64], m: usize, lambda: f64) -> Result<(Vec<f64>, f64, f64), XaiError> {
    let n = y.len();
    let sw: f64 = w.iter().sum();
    if sw <= 0.0 {
        return Err(XaiError::Degenerate);
    }
    let mut xm = vec![0.0; m];
    let mut ym = 0.0;
    for i in 0..n {
        ym += w[i] * y[i];
        for j in 0..m {
            xm[j] += w[i] * x[i * m + j];
        }
    }
    ym /= sw;
    xm.iter_mut().for_each(|v| *v /= sw);
    let mut a = DMatrix::<f64>::zeros(m, m);
    let mut b = DVector::<f64>::zeros(m);
    let mut xc = vec![0.0; m];
    for i in 0..n {
        for j in 0..m {
            xc[j] = x[i * m + j] - xm[j];
        }
        let yc = y[i] - ym;
        for j in 0..m {
            b[j] += w[i] * xc[j] * yc;
            for l in 0..m {
                a[(j, l)] += w[i] * xc[j] * xc[l];
            }
        }
    }
    for j in 0..m {
        a[(j, j)] += lambda;
    }
    let coef: Vec<f64> = match a.clone().cholesky() {
        Some(c) => c.solve(&b).iter().copied().collect(),
        None => a.lu().solve(&b).ok_or(XaiError::Degenerate)?.iter().copied().collect(),
    };
    let intercept = ym - coef.iter().zip(&xm).map(|(c, m)| c * m).sum::<f64>();
    let (mut ss_res, mut ss_tot) = (0.0, 0.0);
    for i in 0..n {
        let pred = intercept + (0..m).map(|j| coef[j] * x[i * m + j]).sum::<f64>();
        ss_res += w[i] * (y[i] - pred).powi(2);
        ss_tot += w[i] * (y[i] - ym).powi(2);
    }
    let r2 = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { f64::NAN };
    Ok((coef, intercept, r2))
}
