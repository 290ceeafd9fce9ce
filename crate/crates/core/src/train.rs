//! Mini-batch training, prediction and classification metrics.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::dataio::WindowedDataset;
use crate::report;
use crate::tft::{argmax, TftError, TftModel, TftParams};

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("E ≥ 1 required: epochs must be at least 1")]
    NoEpochs,
    #[error("B ≥ 1 required: batch size must be at least 1")]
    NoBatch,
    #[error("invalid training setting: {0}")]
    Invalid(String),
    #[error("label {label} outside [0, {k})")]
    LabelOutOfRange { label: usize, k: usize },
    #[error("dataset does not match the model: {0}")]
    Mismatch(String),
    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFinite { epoch: usize, batch: usize },
    #[error(transparent)]
    Model(#[from] TftError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Optimizer {
    SgdMomentum,
    Adam,
}

/// Learning-rate schedule over all optimizer steps of a run.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LrSchedule {
    #[default]
    Constant,
    /// Half-cosine decay from `lr` to zero at the last step.
    Cosine,
}

impl LrSchedule {
    /// Rate for 0-based `step` out of `total`.
    pub fn rate(self, lr: f64, step: usize, total: usize) -> f64 {
        match self {
            LrSchedule::Constant => lr,
            LrSchedule::Cosine => 0.5 * lr * (1.0 + (std::f64::consts::PI * step as f64 / total.max(1) as f64).cos()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub optimizer: Optimizer,
    pub schedule: LrSchedule,
    /// Momentum for SGD, first-moment decay for Adam.
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub seed: u64,
    /// Weight each sample by `n / (K·n_c)` for its class `c`.
    pub class_weighting: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 30,
            batch_size: 64,
            lr: 1e-3,
            optimizer: Optimizer::Adam,
            schedule: LrSchedule::Constant,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            seed: 0,
            class_weighting: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.epochs == 0 {
            return Err(TrainError::NoEpochs);
        }
        if self.batch_size == 0 {
            return Err(TrainError::NoBatch);
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(TrainError::Invalid(format!("learning rate {} must be finite and ≥ 0", self.lr)));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || self.adam_eps <= 0.0 {
            return Err(TrainError::Invalid("moment decays must lie in [0, 1) and eps must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean per-sample (weighted) cross-entropy of the training passes.
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub val_loss: Option<f64>,
    pub val_accuracy: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochStats>,
}

impl TrainHistory {
    pub fn train_loss(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.train_loss).collect()
    }

    pub fn train_accuracy(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.train_accuracy).collect()
    }

    fn val(&self, f: impl Fn(&EpochStats) -> Option<f64>) -> Vec<f64> {
        self.epochs.iter().map(|e| f(e).unwrap_or(f64::NAN)).collect()
    }

    /// Writes `history.json`, `history.csv`, `loss.svg` and `accuracy.svg` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<(), TrainError> {
        std::fs::write(dir.join("history.json"), serde_json::to_string_pretty(self)?)?;
        let mut w = csv::Writer::from_path(dir.join("history.csv"))?;
        w.write_record(["epoch", "train_loss", "train_accuracy", "val_loss", "val_accuracy"])?;
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for e in &self.epochs {
            w.write_record([
                e.epoch.to_string(),
                e.train_loss.to_string(),
                e.train_accuracy.to_string(),
                opt(e.val_loss),
                opt(e.val_accuracy),
            ])?;
        }
        w.flush()?;
        let has_val = self.epochs.iter().any(|e| e.val_loss.is_some());
        let (tl, vl) = (self.train_loss(), self.val(|e| e.val_loss));
        let (ta, va) = (self.train_accuracy(), self.val(|e| e.val_accuracy));
        let mut loss: Vec<(&str, &[f64])> = vec![("train", &tl)];
        let mut acc: Vec<(&str, &[f64])> = vec![("train", &ta)];
        if has_val {
            loss.push(("validation", &vl));
            acc.push(("validation", &va));
        }
        std::fs::write(dir.join("loss.svg"), report::line_chart("Loss", "epoch", "cross-entropy", &loss))?;
        std::fs::write(dir.join("accuracy.svg"), report::line_chart("Accuracy", "epoch", "accuracy", &acc))?;
        Ok(())
    }
}

enum OptState {
    Sgd { velocity: TftParams<Tensor> },
    Adam { m: TftParams<Tensor>, v: TftParams<Tensor>, t: i32 },
}

impl OptState {
    fn new(cfg: &TrainConfig, params: &TftParams<Tensor>) -> Self {
        match cfg.optimizer {
            Optimizer::SgdMomentum => OptState::Sgd {
                velocity: params.zeros_like(),
            },
            Optimizer::Adam => OptState::Adam {
                m: params.zeros_like(),
                v: params.zeros_like(),
                t: 0,
            },
        }
    }

    /// Applies one step with gradient `grads` already averaged over the batch.
    fn step(&mut self, cfg: &TrainConfig, lr: f64, params: &mut TftParams<Tensor>, grads: &TftParams<Tensor>) {
        let grads = grads.blocks();
        match self {
            OptState::Sgd { velocity } => {
                for ((p, v), g) in params.blocks_mut().into_iter().zip(velocity.blocks_mut()).zip(grads) {
                    for ((p, v), g) in p.data_mut().iter_mut().zip(v.data_mut()).zip(g.data()) {
                        *v = cfg.beta1 * *v + g;
                        *p -= lr * *v;
                    }
                }
            }
            OptState::Adam { m, v, t } => {
                *t += 1;
                let c1 = 1.0 - cfg.beta1.powi(*t);
                let c2 = 1.0 - cfg.beta2.powi(*t);
                let blocks = params.blocks_mut().into_iter().zip(m.blocks_mut()).zip(v.blocks_mut()).zip(grads);
                for (((p, m), v), g) in blocks {
                    let it = p.data_mut().iter_mut().zip(m.data_mut()).zip(v.data_mut()).zip(g.data());
                    for (((p, m), v), &g) in it {
                        *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
                        *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
                        *p -= lr * (*m / c1) / ((*v / c2).sqrt() + cfg.adam_eps);
                    }
                }
            }
        }
    }
}

fn check_dataset(model: &TftModel, data: &WindowedDataset) -> Result<(), TrainError> {
    let c = model.config();
    if data.window() != c.window || data.n_features() != c.n_features {
        return Err(TrainError::Mismatch(format!(
            "windows are {}×{}, model expects {}×{}",
            data.window(),
            data.n_features(),
            c.window,
            c.n_features
        )));
    }
    if data.is_empty() {
        return Err(TrainError::Mismatch("dataset is empty".into()));
    }
    if let Some(&label) = data.labels().iter().find(|&&l| l >= c.n_classes) {
        return Err(TrainError::LabelOutOfRange { label, k: c.n_classes });
    }
    Ok(())
}

/// `n / (K·n_c)` per class; classes absent from `labels` get weight 0.
pub fn inverse_frequency_weights(labels: &[usize], k: usize) -> Vec<f64> {
    let mut counts = vec![0usize; k];
    for &l in labels {
        counts[l] += 1;
    }
    counts
        .iter()
        .map(|&c| if c == 0 { 0.0 } else { labels.len() as f64 / (k as f64 * c as f64) })
        .collect()
}

/// Trains `model` in place. Each epoch visits the samples in an order
/// drawn from a generator seeded with `cfg.seed`; dropout masks come from
/// the same generator.
pub fn train(
    model: &mut TftModel,
    train_set: &WindowedDataset,
    validation: Option<&WindowedDataset>,
    cfg: &TrainConfig,
) -> Result<TrainHistory, TrainError> {
    cfg.validate()?;
    check_dataset(model, train_set)?;
    if let Some(v) = validation {
        check_dataset(model, v)?;
    }
    let k = model.config().n_classes;
    let class_w = if cfg.class_weighting {
        inverse_frequency_weights(train_set.labels(), k)
    } else {
        vec![1.0; k]
    };
    let n = train_set.len();
    let s = train_set.sample_len();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut opt = OptState::new(cfg, model.params());
    let mut order: Vec<usize> = (0..n).collect();
    let mut history = TrainHistory::default();
    let mut per_sample_loss = vec![0.0; n];
    let mut correct = vec![false; n];
    let mut batch_x = Vec::with_capacity(cfg.batch_size * s);
    let total_steps = cfg.epochs * n.div_ceil(cfg.batch_size);
    let mut step = 0;
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for (batch, idx) in order.chunks(cfg.batch_size).enumerate() {
            batch_x.clear();
            for &i in idx {
                batch_x.extend_from_slice(train_set.sample(i));
            }
            let ys: Vec<usize> = idx.iter().map(|&i| train_set.labels()[i]).collect();
            let ws: Vec<f64> = ys.iter().map(|&y| class_w[y]).collect();
            let bg = match model.loss_and_grad(&batch_x, &ys, &ws, Some(&mut rng)) {
                Ok(bg) => bg,
                Err(TftError::NonFinite { .. }) => return Err(TrainError::NonFinite { epoch, batch }),
                Err(e) => return Err(e.into()),
            };
            if !bg.loss.is_finite() || !bg.grads.all_finite() {
                return Err(TrainError::NonFinite { epoch, batch });
            }
            for (j, &i) in idx.iter().enumerate() {
                let p = &bg.probs[j * k..(j + 1) * k];
                per_sample_loss[i] = -ws[j] * p[ys[j]].max(f64::MIN_POSITIVE).ln();
                correct[i] = argmax(p) == ys[j];
            }
            let inv = 1.0 / idx.len() as f64;
            let grads = bg.grads.map(|t| t.map(|g| g * inv));
            let lr = cfg.schedule.rate(cfg.lr, step, total_steps);
            opt.step(cfg, lr, model.params_mut(), &grads);
            step += 1;
        }
        // Fixed summation order keeps the epoch loss independent of the shuffle.
        let train_loss = per_sample_loss.iter().sum::<f64>() / n as f64;
        let train_accuracy = correct.iter().filter(|&&c| c).count() as f64 / n as f64;
        let (val_loss, val_accuracy) = match validation {
            Some(v) => {
                let (l, a) = loss_and_accuracy(model, v, &class_w)?;
                (Some(l), Some(a))
            }
            None => (None, None),
        };
        log::info!(
            "epoch {}: loss {train_loss:.4} acc {train_accuracy:.4}{}",
            epoch + 1,
            val_accuracy.map(|a| format!(" val acc {a:.4}")).unwrap_or_default()
        );
        history.epochs.push(EpochStats {
            epoch: epoch + 1,
            train_loss,
            train_accuracy,
            val_loss,
            val_accuracy,
        });
    }
    Ok(history)
}

/// Evaluation-mode mean weighted cross-entropy and accuracy.
pub fn loss_and_accuracy(model: &TftModel, data: &WindowedDataset, class_w: &[f64]) -> Result<(f64, f64), TrainError> {
    check_dataset(model, data)?;
    let k = model.config().n_classes;
    let probs = model.predict_proba(data.samples())?;
    let mut loss = 0.0;
    let mut correct = 0;
    for (p, &y) in probs.chunks(k).zip(data.labels()) {
        loss -= class_w[y] * p[y].max(f64::MIN_POSITIVE).ln();
        correct += usize::from(argmax(p) == y);
    }
    Ok((loss / data.len() as f64, correct as f64 / data.len() as f64))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub labels: Vec<usize>,
    /// `M×K`, row-major.
    pub probs: Vec<f64>,
    /// Mean selection weight of each feature over all samples and timesteps, summing to 1.
    pub vsn_importance: Vec<f64>,
}

pub fn predict(model: &TftModel, data: &WindowedDataset) -> Result<Prediction, TrainError> {
    let c = model.config();
    if data.window() != c.window || data.n_features() != c.n_features || data.is_empty() {
        return Err(TrainError::Mismatch("dataset shape does not match the model".into()));
    }
    let outs = model.predict(data.samples())?;
    let f = c.n_features;
    let mut imp = vec![0.0; f];
    for o in &outs {
        for row in o.vsn_weights.chunks(f) {
            for (a, w) in imp.iter_mut().zip(row) {
                *a += w;
            }
        }
    }
    let total: f64 = imp.iter().sum();
    imp.iter_mut().for_each(|v| *v /= total);
    Ok(Prediction {
        labels: outs.iter().map(|o| o.class()).collect(),
        probs: outs.iter().flat_map(|o| o.probs.iter().copied()).collect(),
        vsn_importance: imp,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n_classes: usize,
    pub accuracy: f64,
    /// Rows are true classes, columns predicted classes.
    pub confusion: Vec<Vec<usize>>,
    pub support: Vec<usize>,
    /// Zero when a class is never predicted.
    pub precision: Vec<f64>,
    pub recall: Vec<f64>,
    /// Zero when precision + recall is zero.
    pub f1: Vec<f64>,
    pub macro_f1: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub history: Option<TrainHistory>,
}

pub fn evaluate(y_pred: &[usize], y_true: &[usize], k: usize) -> Result<EvalReport, TrainError> {
    if y_pred.len() != y_true.len() {
        return Err(TrainError::Invalid(format!(
            "{} predictions for {} labels",
            y_pred.len(),
            y_true.len()
        )));
    }
    if y_true.is_empty() {
        return Err(TrainError::Invalid("nothing to evaluate".into()));
    }
    let mut confusion = vec![vec![0usize; k]; k];
    for (&p, &t) in y_pred.iter().zip(y_true) {
        if let Some(&label) = [p, t].iter().find(|&&l| l >= k) {
            return Err(TrainError::LabelOutOfRange { label, k });
        }
        confusion[t][p] += 1;
    }
    let support: Vec<usize> = confusion.iter().map(|r| r.iter().sum()).collect();
    let predicted: Vec<usize> = (0..k).map(|c| confusion.iter().map(|r| r[c]).sum()).collect();
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let precision: Vec<f64> = (0..k).map(|c| ratio(confusion[c][c], predicted[c])).collect();
    let recall: Vec<f64> = (0..k).map(|c| ratio(confusion[c][c], support[c])).collect();
    let f1: Vec<f64> = precision
        .iter()
        .zip(&recall)
        .map(|(&p, &r)| if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) })
        .collect();
    let diag: usize = (0..k).map(|c| confusion[c][c]).sum();
    Ok(EvalReport {
        n_classes: k,
        accuracy: diag as f64 / y_true.len() as f64,
        macro_f1: f1.iter().sum::<f64>() / k as f64,
        confusion,
        support,
        precision,
        recall,
        f1,
        history: None,
    })
}

impl EvalReport {
    /// Writes `<stem>.json` and `<stem>_confusion.csv` into `dir`.
    pub fn write(&self, dir: &Path, stem: &str) -> Result<(), TrainError> {
        std::fs::write(dir.join(format!("{stem}.json")), serde_json::to_string_pretty(self)?)?;
        let mut w = csv::Writer::from_path(dir.join(format!("{stem}_confusion.csv")))?;
        let mut header = vec!["true\\pred".to_string()];
        header.extend((0..self.n_classes).map(|c| c.to_string()));
        w.write_record(&header)?;
        for (c, row) in self.confusion.iter().enumerate() {
            let mut rec = vec![c.to_string()];
            rec.extend(row.iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tft::ModelConfig;
    use approx::assert_abs_diff_eq;
    use rand::Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn perfect_predictions() {
        let r = evaluate(&[0, 1, 2, 1], &[0, 1, 2, 1], 3).unwrap();
        assert_eq!(r.accuracy, 1.0);
        assert_eq!(r.confusion, vec![vec![1, 0, 0], vec![0, 2, 0], vec![0, 0, 1]]);
        assert_eq!(r.macro_f1, 1.0);
    }

    #[test]
    fn hand_computed_metrics() {
        let r = evaluate(&[0, 1, 1, 1], &[0, 0, 1, 1], 2).unwrap();
        assert_eq!(r.accuracy, 0.75);
        assert_eq!(r.precision[0], 1.0);
        assert_eq!(r.recall[0], 0.5);
        assert_abs_diff_eq!(r.precision[1], 2.0 / 3.0, epsilon = 1e-15);
        assert_eq!(r.recall[1], 1.0);
        for c in 0..2 {
            assert_abs_diff_eq!(r.recall[c] * r.support[c] as f64, r.confusion[c][c] as f64, epsilon = 1e-12);
        }
    }

    #[test]
    fn constant_predictor_macro_f1() {
        let r = evaluate(&[1, 1, 1, 1], &[0, 0, 1, 1], 2).unwrap();
        assert_eq!(r.f1[0], 0.0);
        assert_abs_diff_eq!(r.macro_f1, 1.0 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn bad_labels_are_rejected() {
        assert!(matches!(evaluate(&[0, 3], &[0, 1], 2), Err(TrainError::LabelOutOfRange { label: 3, .. })));
        assert!(evaluate(&[0], &[0, 1], 2).is_err());
    }

    fn dataset(m: usize, w: usize, f: usize, k: usize, seed: u64, separable: bool) -> WindowedDataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut samples = Vec::with_capacity(m * w * f);
        let mut labels = Vec::with_capacity(m);
        for i in 0..m {
            let y = i % k;
            for _ in 0..w * f {
                let noise: f64 = rng.sample(StandardNormal);
                let shift = if separable { 2.0 * y as f64 - 1.0 } else { 0.0 };
                samples.push(shift + 0.3 * noise);
            }
            labels.push(y);
        }
        let names = (0..f).map(|j| format!("f{j}")).collect();
        WindowedDataset::new(samples, labels, w, names, (0..m).map(|i| i as f64).collect()).unwrap()
    }

    #[test]
    fn zero_epochs_rejected() {
        let ds = dataset(8, 3, 2, 2, 0, true);
        let mut model = TftModel::new(ModelConfig::new(3, 2, 2), 0).unwrap();
        let err = train(&mut model, &ds, None, &TrainConfig { epochs: 0, ..Default::default() }).unwrap_err();
        assert!(err.to_string().contains("E ≥ 1"));
    }

    #[test]
    fn zero_learning_rate_changes_nothing() {
        let ds = dataset(24, 3, 2, 2, 1, false);
        let cfg = ModelConfig { dropout: 0.0, ..ModelConfig::new(3, 2, 2) };
        let mut model = TftModel::new(cfg, 1).unwrap();
        let before = model.clone();
        let tc = TrainConfig { epochs: 3, batch_size: 5, lr: 0.0, ..Default::default() };
        let h = train(&mut model, &ds, None, &tc).unwrap();
        assert_eq!(model, before);
        let l = h.train_loss();
        assert!(l.iter().all(|&v| v == l[0]), "{l:?}");
    }

    #[test]
    fn separable_classes_are_learned() {
        let ds = dataset(120, 4, 3, 2, 2, true);
        let mut model = TftModel::new(ModelConfig::new(4, 3, 2), 2).unwrap();
        let tc = TrainConfig { epochs: 30, batch_size: 16, lr: 5e-3, ..Default::default() };
        let h = train(&mut model, &ds, None, &tc).unwrap();
        let (_, acc) = loss_and_accuracy(&model, &ds, &[1.0, 1.0]).unwrap();
        assert!(acc >= 0.99, "eval accuracy {acc}, history {:?}", h.train_accuracy());
    }

    #[test]
    fn full_batch_descent_does_not_increase_loss() {
        let ds = dataset(12, 4, 3, 3, 3, false);
        let cfg = ModelConfig::tiny();
        let mut model = TftModel::new(cfg, 3).unwrap();
        let tc = TrainConfig { epochs: 1, batch_size: 12, lr: 1e-3, optimizer: Optimizer::SgdMomentum, beta1: 0.0, ..Default::default() };
        let mut last = f64::INFINITY;
        for _ in 0..20 {
            let (loss, _) = loss_and_accuracy(&model, &ds, &[1.0; 3]).unwrap();
            assert!(loss <= last + 1e-12, "{loss} > {last}");
            last = loss;
            train(&mut model, &ds, None, &tc).unwrap();
        }
    }

    #[test]
    fn same_seed_same_run() {
        let ds = dataset(30, 3, 2, 3, 4, true);
        let val = dataset(9, 3, 2, 3, 5, true);
        let run = |seed| {
            let mut model = TftModel::new(ModelConfig::new(3, 2, 3), 7).unwrap();
            let tc = TrainConfig { epochs: 3, batch_size: 7, seed, class_weighting: true, ..Default::default() };
            let h = train(&mut model, &ds, Some(&val), &tc).unwrap();
            (model, h)
        };
        let (m1, h1) = run(9);
        let (m2, h2) = run(9);
        assert_eq!(h1, h2);
        assert_eq!(m1, m2);
        assert!(h1.epochs[0].val_accuracy.is_some());
        let (m3, _) = run(10);
        assert_ne!(m1, m3);
    }

    #[test]
    fn prediction_importance_is_normalized() {
        let ds = dataset(5, 3, 4, 2, 6, false);
        let model = TftModel::new(ModelConfig::new(3, 4, 2), 8).unwrap();
        let p = predict(&model, &ds).unwrap();
        assert_abs_diff_eq!(p.vsn_importance.iter().sum::<f64>(), 1.0, epsilon = 1e-12);

        let one = ds.subset(&[2]);
        let p1 = predict(&model, &one).unwrap();
        let out = model.forward(one.sample(0)).unwrap();
        for j in 0..4 {
            let mean = out.vsn_weights.chunks(4).map(|r| r[j]).sum::<f64>() / 3.0;
            assert_abs_diff_eq!(p1.vsn_importance[j], mean, epsilon = 1e-12);
        }
    }

    #[test]
    fn inverse_frequency() {
        let w = inverse_frequency_weights(&[0, 0, 0, 1], 3);
        assert_eq!(w, vec![4.0 / 9.0, 4.0 / 3.0, 0.0]);
    }

    #[test]
    fn cosine_schedule() {
        let c = LrSchedule::Cosine;
        assert_eq!(c.rate(0.1, 0, 10), 0.1);
        assert_abs_diff_eq!(c.rate(0.1, 5, 10), 0.05, epsilon = 1e-15);
        assert_abs_diff_eq!(c.rate(0.1, 10, 10), 0.0, epsilon = 1e-15);
        assert!((1..10).all(|s| c.rate(0.1, s, 10) < c.rate(0.1, s - 1, 10)));
        assert_eq!(LrSchedule::Constant.rate(0.1, 7, 10), 0.1);
    }
}
