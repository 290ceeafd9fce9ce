use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{DataError, LoadedData, TimeSeriesTable};

/// Parameters of the synthetic greenhouse-like generator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_rows: usize,
    pub n_features: usize,
    pub n_classes: usize,
    pub seed: u64,
    /// Std of the measurement noise added on top of the smooth latent signals.
    pub noise: f64,
    /// Window length the labelling rule is designed for; the lagged causal
    /// input sits `window / 2` steps back.
    pub window: usize,
    pub n_actuators: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_rows: 5000,
            n_features: 10,
            n_classes: 4,
            seed: 7,
            noise: 0.06,
            window: super::DEFAULT_WINDOW,
            n_actuators: 16,
        }
    }
}

/// Generated data together with the ground truth it was built from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthOutput {
    pub sensors: TimeSeriesTable,
    pub actuators: TimeSeriesTable,
    pub labels: Vec<usize>,
    /// Indices of the three features the labelling rule reads.
    pub causal_features: Vec<usize>,
    pub lag: usize,
    /// Class boundaries on the latent score.
    pub thresholds: Vec<f64>,
    pub class_histogram: Vec<usize>,
    /// Accuracy of the labelling rule applied to the noisy observations.
    pub rule_accuracy: f64,
    /// Ground-truth class of each actuator.
    pub actuator_classes: Vec<usize>,
}

impl SynthOutput {
    pub fn as_loaded(&self) -> LoadedData {
        LoadedData {
            sensors: self.sensors.clone(),
            actuators: self.actuators.clone(),
            labels: Some(self.labels.clone()),
        }
    }
}

const START_EPOCH: f64 = 1_577_836_800.0;
const PERIOD_SECONDS: f64 = 300.0;

/// Builds a smooth multivariate series whose class at time `t` is a
/// piecewise-constant function of
/// `z[c0][t] + z[c1][t − lag] − z[c2][t]` over the noise-free latents `z`,
/// binned at the score's `k/K` quantiles.
pub fn synth_dataset(cfg: &SynthConfig) -> Result<SynthOutput, DataError> {
    let (n, f, k) = (cfg.n_rows, cfg.n_features, cfg.n_classes);
    if f < 3 {
        return Err(DataError::Invalid("need at least 3 features".into()));
    }
    if k < 2 {
        return Err(DataError::Invalid("need at least 2 classes".into()));
    }
    if n < 10 * f {
        return Err(DataError::Invalid(format!("need at least {} rows for {f} features", 10 * f)));
    }
    if cfg.window == 0 || cfg.window > n {
        return Err(DataError::Invalid("window must be in 1..=n_rows".into()));
    }
    if !(cfg.noise >= 0.0 && cfg.noise.is_finite()) {
        return Err(DataError::Invalid("noise must be a finite non-negative number".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let mut latent = vec![0.0; n * f];
    for j in 0..f {
        let col = smooth_process(n, &mut rng);
        for (t, v) in col.into_iter().enumerate() {
            latent[t * f + j] = v;
        }
    }

    let mut causal: Vec<usize> = sample(&mut rng, f, 3).into_vec();
    causal.sort_unstable();
    let lag = cfg.window / 2;
    let score_of = |vals: &[f64], t: usize| {
        let lagged = t.saturating_sub(lag);
        vals[t * f + causal[0]] + vals[lagged * f + causal[1]] - vals[t * f + causal[2]]
    };
    let scores: Vec<f64> = (0..n).map(|t| score_of(&latent, t)).collect();
    let mut sorted = scores.clone();
    sorted.sort_by(f64::total_cmp);
    let thresholds: Vec<f64> = (1..k).map(|q| sorted[q * n / k]).collect();
    let classify = |s: f64| thresholds.iter().filter(|&&th| s >= th).count();
    let labels: Vec<usize> = scores.iter().map(|&s| classify(s)).collect();

    let observed: Vec<f64> = latent
        .iter()
        .map(|&v| v + cfg.noise * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let agree = (0..n).filter(|&t| classify(score_of(&observed, t)) == labels[t]).count();

    let mut class_histogram = vec![0; k];
    for &l in &labels {
        class_histogram[l] += 1;
    }

    let timestamps: Vec<f64> = (0..n).map(|t| START_EPOCH + PERIOD_SECONDS * t as f64).collect();
    let sensor_names = (0..f).map(|j| format!("sensor_{j:02}")).collect();
    let sensors = TimeSeriesTable::new(timestamps.clone(), sensor_names, observed)?;

    // Each actuator follows one class: raised while that class is active.
    let a = cfg.n_actuators;
    let actuator_classes: Vec<usize> = (0..a).map(|i| i % k).collect();
    let gains: Vec<f64> = (0..a).map(|_| rng.random_range(0.5..2.0)).collect();
    let offsets: Vec<f64> = (0..a).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut act = Vec::with_capacity(n * a);
    for &l in &labels {
        for i in 0..a {
            let on = if l == actuator_classes[i] { 1.0 } else { 0.0 };
            act.push(offsets[i] + gains[i] * on + 0.05 * rng.sample::<f64, _>(StandardNormal));
        }
    }
    let act_names = (0..a).map(|i| format!("act_{i:02}")).collect();
    let actuators = TimeSeriesTable::new(timestamps, act_names, act)?;

    Ok(SynthOutput {
        sensors,
        actuators,
        labels,
        causal_features: causal,
        lag,
        thresholds,
        class_histogram,
        rule_accuracy: agree as f64 / n as f64,
        actuator_classes,
    })
}

/// Two seeded sinusoids plus an AR(1) component, standardized.
fn smooth_process(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let p1 = rng.random_range(24.0..96.0);
    let p2 = rng.random_range(6.0..24.0);
    let (ph1, ph2) = (rng.random_range(0.0..std::f64::consts::TAU), rng.random_range(0.0..std::f64::consts::TAU));
    let a2 = rng.random_range(0.2..0.6);
    let rho: f64 = 0.8;
    let innov = (1.0 - rho * rho).sqrt();
    let mut ar = rng.sample::<f64, _>(StandardNormal);
    let mut out = Vec::with_capacity(n);
    for t in 0..n {
        let tt = t as f64;
        let s = (std::f64::consts::TAU * tt / p1 + ph1).sin() + a2 * (std::f64::consts::TAU * tt / p2 + ph2).sin();
        out.push(s + 1.2 * ar);
        ar = rho * ar + innov * rng.sample::<f64, _>(StandardNormal);
    }
    let mean = out.iter().sum::<f64>() / n as f64;
    let std = (out.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
    out.iter_mut().for_each(|v| *v = (*v - mean) / std);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SynthConfig {
        SynthConfig {
            n_rows: 600,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn noiseless_labels_are_recoverable() {
        let out = synth_dataset(&SynthConfig { noise: 0.0, ..small() }).unwrap();
        assert_eq!(out.rule_accuracy, 1.0);
    }

    #[test]
    fn same_seed_same_tables() {
        let a = synth_dataset(&small()).unwrap();
        let b = synth_dataset(&small()).unwrap();
        assert_eq!(a, b);
        let c = synth_dataset(&SynthConfig { seed: 8, ..small() }).unwrap();
        assert_ne!(a.sensors, c.sensors);
    }

    #[test]
    fn histogram_matches_labels() {
        let out = synth_dataset(&small()).unwrap();
        assert_eq!(out.class_histogram.iter().sum::<usize>(), 600);
        for (c, &count) in out.class_histogram.iter().enumerate() {
            assert_eq!(count, out.labels.iter().filter(|&&l| l == c).count());
            // Quantile thresholds give near-balanced classes.
            assert!((count as i64 - 150).abs() <= 2, "{:?}", out.class_histogram);
        }
        assert_eq!(out.causal_features.len(), 3);
    }

    #[test]
    fn rejects_short_series() {
        assert!(synth_dataset(&SynthConfig { n_rows: 50, ..SynthConfig::default() }).is_err());
    }
}
