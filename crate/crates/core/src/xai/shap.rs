use std::collections::{BTreeMap, HashMap};

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{check_instance, Attribution, Classifier, Granularity, Method, Scope, XaiError};

/// Largest player count [`exact_shapley`] accepts.
pub const EXACT_MAX_FEATURES: usize = 12;
const MAX_RETRIES: usize = 3;
const MAX_ENUMERATED: usize = 20;
const EVAL_CHUNK: usize = 4096;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShapleyValues {
    /// Value of the empty coalition.
    pub phi0: f64,
    /// Value of the full coalition.
    pub full: f64,
    pub phi: Vec<f64>,
}

impl ShapleyValues {
    /// `|Σφ − (v(full) − φ₀)|`.
    pub fn efficiency_gap(&self) -> f64 {
        (self.phi.iter().sum::<f64>() - (self.full - self.phi0)).abs()
    }
}

/// Shapley values by the classical formula, enumerating every coalition.
pub fn exact_shapley(n: usize, mut value: impl FnMut(&[bool]) -> f64) -> Result<ShapleyValues, XaiError> {
    if n > EXACT_MAX_FEATURES {
        return Err(XaiError::TooManyFeatures { n, max: EXACT_MAX_FEATURES });
    }
    let total = 1usize << n;
    let mut mask = vec![false; n];
    let v: Vec<f64> = (0..total)
        .map(|s| {
            for (i, m) in mask.iter_mut().enumerate() {
                *m = s >> i & 1 == 1;
            }
            value(&mask)
        })
        .collect();
    // weight[k] = k!(n-k-1)!/n!
    let mut fact = vec![1.0f64; n + 1];
    for i in 1..=n {
        fact[i] = fact[i - 1] * i as f64;
    }
    let weight: Vec<f64> = (0..n).map(|k| fact[k] * fact[n - k - 1] / fact[n]).collect();
    let mut phi = vec![0.0; n];
    for (i, p) in phi.iter_mut().enumerate() {
        let bit = 1usize << i;
        for s in (0..total).filter(|s| s & bit == 0) {
            *p += weight[s.count_ones() as usize] * (v[s | bit] - v[s]);
        }
    }
    Ok(ShapleyValues { phi0: v[0], full: v[total - 1], phi })
}

/// Diagnostics of one KernelSHAP solve.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelInfo {
    pub full_enumeration: bool,
    /// Distinct coalitions whose value was computed, including ∅ and the full set.
    pub evaluated: usize,
    pub attempts: usize,
}

fn kernel_weight(m: usize, s: usize) -> f64 {
    let mut binom = 1.0f64;
    for i in 0..s {
        binom = binom * (m - i) as f64 / (i + 1) as f64;
    }
    (m - 1) as f64 / (binom * s as f64 * (m - s) as f64)
}

/// KernelSHAP over an abstract set function evaluated in batches.
///
/// Full enumeration when `n_coalitions ≥ 2^m − 2`, otherwise paired sampling
/// with coalition sizes drawn from the kernel's mass. The efficiency
/// identity is imposed exactly by eliminating the last player.
pub fn kernel_shap_values(
    m: usize,
    n_coalitions: usize,
    seed: u64,
    mut value: impl FnMut(&[Vec<bool>]) -> Result<Vec<f64>, XaiError>,
) -> Result<(ShapleyValues, KernelInfo), XaiError> {
    if m == 0 {
        return Err(XaiError::Invalid("no players to attribute".into()));
    }
    let ends = value(&[vec![false; m], vec![true; m]])?;
    let (v0, v1) = (ends[0], ends[1]);
    if m == 1 {
        let info = KernelInfo { full_enumeration: true, evaluated: 2, attempts: 1 };
        return Ok((ShapleyValues { phi0: v0, full: v1, phi: vec![v1 - v0] }, info));
    }
    let full = m <= MAX_ENUMERATED && n_coalitions >= (1usize << m) - 2;
    if !full && n_coalitions < 2 {
        return Err(XaiError::Invalid("sampled KernelSHAP needs at least 2 coalitions".into()));
    }
    let mut cache: HashMap<Vec<bool>, f64> = HashMap::new();
    for attempt in 0..=MAX_RETRIES {
        let design = if full { enumerate(m) } else { sample_pairs(m, n_coalitions, seed.wrapping_add(attempt as u64)) };
        let missing: Vec<Vec<bool>> = design.keys().filter(|z| !cache.contains_key(*z)).cloned().collect();
        let vals = value(&missing)?;
        cache.extend(missing.into_iter().zip(vals));
        if let Some(phi) = solve(m, &design, &cache, v0, v1) {
            let info = KernelInfo { full_enumeration: full, evaluated: cache.len() + 2, attempts: attempt + 1 };
            return Ok((ShapleyValues { phi0: v0, full: v1, phi }, info));
        }
        if full {
            break;
        }
    }
    Err(XaiError::Singular(MAX_RETRIES))
}

fn enumerate(m: usize) -> BTreeMap<Vec<bool>, f64> {
    (1..(1usize << m) - 1)
        .map(|s| {
            let z: Vec<bool> = (0..m).map(|i| s >> i & 1 == 1).collect();
            let w = kernel_weight(m, s.count_ones() as usize);
            (z, w)
        })
        .collect()
}

fn sample_pairs(m: usize, n: usize, seed: u64) -> BTreeMap<Vec<bool>, f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mass: Vec<f64> = (1..m).map(|s| 1.0 / (s * (m - s)) as f64).collect();
    let total: f64 = mass.iter().sum();
    let mut out = BTreeMap::new();
    for _ in 0..n.div_ceil(2) {
        let mut u = rng.random::<f64>() * total;
        let mut size = m - 1;
        for (k, w) in mass.iter().enumerate() {
            if u < *w {
                size = k + 1;
                break;
            }
            u -= w;
        }
        let mut z = vec![false; m];
        for i in sample(&mut rng, m, size) {
            z[i] = true;
        }
        let comp: Vec<bool> = z.iter().map(|b| !b).collect();
        *out.entry(z).or_insert(0.0) += 1.0;
        *out.entry(comp).or_insert(0.0) += 1.0;
    }
    out
}

fn solve(m: usize, design: &BTreeMap<Vec<bool>, f64>, values: &HashMap<Vec<bool>, f64>, v0: f64, v1: f64) -> Option<Vec<f64>> {
    let k = m - 1;
    let delta = v1 - v0;
    let mut a = DMatrix::<f64>::zeros(k, k);
    let mut b = DVector::<f64>::zeros(k);
    let mut x = vec![0.0; k];
    for (z, &w) in design {
        let last = if z[k] { 1.0 } else { 0.0 };
        for (j, xj) in x.iter_mut().enumerate() {
            *xj = (z[j] as u8) as f64 - last;
        }
        let y = values[z] - v0 - last * delta;
        for i in 0..k {
            if x[i] == 0.0 {
                continue;
            }
            b[i] += w * x[i] * y;
            for j in 0..k {
                a[(i, j)] += w * x[i] * x[j];
            }
        }
    }
    let scale = (0..k).map(|i| a[(i, i)]).fold(0.0, f64::max);
    if scale <= 0.0 {
        return None;
    }
    let chol = a.cholesky()?;
    let l = chol.l_dirty();
    let min_pivot = (0..k).map(|i| l[(i, i)] * l[(i, i)]).fold(f64::INFINITY, f64::min);
    if min_pivot < 1e-10 * scale {
        return None;
    }
    let sol = chol.solve(&b);
    let mut phi: Vec<f64> = sol.iter().copied().collect();
    phi.push(delta - phi.iter().sum::<f64>());
    Some(phi)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ShapConfig {
    pub n_coalitions: usize,
    pub seed: u64,
    pub granularity: Granularity,
}

impl Default for ShapConfig {
    fn default() -> Self {
        ShapConfig { n_coalitions: 2048, seed: 0, granularity: Granularity::Feature }
    }
}

/// KernelSHAP for one window. Units outside a coalition take the values of
/// each background window in turn; the coalition's value is the mean
/// target-class score over the background.
pub fn kernel_shap(
    model: &dyn Classifier,
    feature_names: &[String],
    background: &[f64],
    instance: &[f64],
    target: usize,
    cfg: &ShapConfig,
) -> Result<Attribution, XaiError> {
    check_instance(model, instance, target)?;
    let len = model.sample_len();
    if background.is_empty() || background.len() % len != 0 {
        return Err(XaiError::Invalid(format!("background length {} is not a positive multiple of {len}", background.len())));
    }
    if feature_names.len() != model.n_features() {
        return Err(XaiError::Invalid("feature name count does not match the model".into()));
    }
    let n_bg = background.len() / len;
    let groups = cfg.granularity.groups(model.window(), model.n_features());
    let k = model.n_classes();
    let coalitions_per_call = (EVAL_CHUNK / n_bg).max(1);
    let value = |zs: &[Vec<bool>]| -> Result<Vec<f64>, XaiError> {
        let mut out = Vec::with_capacity(zs.len());
        for chunk in zs.chunks(coalitions_per_call) {
            let mut batch = Vec::with_capacity(chunk.len() * background.len());
            for z in chunk {
                for b in background.chunks(len) {
                    let start = batch.len();
                    batch.extend_from_slice(b);
                    for (g, &on) in groups.iter().zip(z) {
                        if on {
                            for &i in g {
                                batch[start + i] = instance[i];
                            }
                        }
                    }
                }
            }
            let probs = model.predict_proba(&batch)?;
            for rows in probs.chunks(n_bg * k) {
                out.push(rows.chunks(k).map(|r| r[target]).sum::<f64>() / n_bg as f64);
            }
        }
        Ok(out)
    };
    let (sv, info) = kernel_shap_values(groups.len(), cfg.n_coalitions, cfg.seed, value)?;
    let mut params = BTreeMap::new();
    params.insert("target_class".into(), target.into());
    params.insert("background_size".into(), n_bg.into());
    params.insert("n_coalitions".into(), cfg.n_coalitions.into());
    params.insert("evaluated_coalitions".into(), info.evaluated.into());
    params.insert("full_enumeration".into(), info.full_enumeration.into());
    params.insert("attempts".into(), info.attempts.into());
    params.insert("prediction".into(), sv.full.into());
    params.insert("efficiency_gap".into(), sv.efficiency_gap().into());
    Ok(Attribution {
        method: Method::Shap,
        scope: Scope::PerInstance(0),
        granularity: cfg.granularity,
        feature_names: feature_names.to_vec(),
        window: model.window(),
        scores: sv.phi,
        phi0: Some(sv.phi0),
        seed: Some(cfg.seed),
        params,
    })
}
