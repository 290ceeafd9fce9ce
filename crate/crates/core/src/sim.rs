//! Discrete-time closed loop of sensors, a classifying gateway and
//! actuators, with transmission delays, packet drops and a quadratic
//! actuator energy cost.
//!
//! Time is measured in sampling periods. The first `w` source rows form a
//! history the gateway already holds at step 0; step `t` senses row `w + t`.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dataio::{ScalingParams, TimeSeriesTable};
use crate::tft::TftModel;

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("invalid simulation setting: {0}")]
    Invalid(String),
    #[error("controller failed at step {step}: {message}")]
    Controller { step: usize, message: String },
    #[error("cost has {cost} coefficients but commands have {actuators} actuators")]
    CostLength { cost: usize, actuators: usize },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    /// Number of simulated steps `T`.
    pub horizon: usize,
    /// Sensor → gateway delay in steps.
    pub d_s: usize,
    /// Gateway → actuator delay in steps.
    pub d_a: usize,
    /// Energy coefficient per actuator; empty means all ones.
    pub cost: Vec<f64>,
    /// Independent loss probability of each packet on either link.
    pub drop_prob: f64,
    /// Std of the Gaussian sensing noise added to every reading.
    pub noise_std: f64,
    pub seed: u64,
    /// Command vector of each class.
    pub command_map: Vec<Vec<f64>>,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            horizon: 288,
            d_s: 1,
            d_a: 1,
            cost: Vec::new(),
            drop_prob: 0.0,
            noise_std: 0.0,
            seed: 0,
            command_map: Vec::new(),
        }
    }
}

impl SimConfig {
    pub fn n_actuators(&self) -> usize {
        self.command_map.first().map_or(0, Vec::len)
    }

    /// Effective cost vector.
    pub fn costs(&self) -> Vec<f64> {
        if self.cost.is_empty() {
            vec![1.0; self.n_actuators()]
        } else {
            self.cost.clone()
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: &str| Err(SimError::Invalid(m.into()));
        if self.horizon == 0 {
            return bad("horizon must be at least 1");
        }
        if self.d_s + self.d_a >= self.horizon {
            return bad("d_s + d_a must be smaller than the horizon");
        }
        if !(0.0..1.0).contains(&self.drop_prob) {
            return bad("drop probability must lie in [0, 1)");
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return bad("noise std must be finite and non-negative");
        }
        let n = self.n_actuators();
        if self.command_map.is_empty() || n == 0 {
            return bad("command map needs at least one class with one actuator");
        }
        if self.command_map.iter().any(|u| u.len() != n || u.iter().any(|v| !v.is_finite())) {
            return bad("every command must be a finite vector of the same length");
        }
        let c = self.costs();
        if c.len() != n {
            return Err(SimError::CostLength { cost: c.len(), actuators: n });
        }
        if c.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
            return bad("cost coefficients must be positive and finite");
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<SimConfig, SimError> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }
}

/// Gateway policy: the last `w` delivered readings (`w×F`, oldest first)
/// and the source row each came from, to a class id.
pub trait Controller {
    fn classify(&mut self, window: &[f64], rows: &[usize]) -> Result<usize, String>;
}

/// Always issues the same class.
pub struct ConstantController(pub usize);

impl Controller for ConstantController {
    fn classify(&mut self, _: &[f64], _: &[usize]) -> Result<usize, String> {
        Ok(self.0)
    }
}

/// Replays the recorded label of the newest delivered reading.
pub struct ReplayController {
    pub labels: Vec<usize>,
}

impl Controller for ReplayController {
    fn classify(&mut self, _: &[f64], rows: &[usize]) -> Result<usize, String> {
        let r = *rows.last().ok_or("empty window")?;
        self.labels.get(r).copied().ok_or_else(|| format!("no recorded label for row {r}"))
    }
}

/// Wraps a closure over the window values.
pub struct FnController<F>(pub F);

impl<F: FnMut(&[f64]) -> Result<usize, String>> Controller for FnController<F> {
    fn classify(&mut self, window: &[f64], _: &[usize]) -> Result<usize, String> {
        (self.0)(window)
    }
}

/// A trained classifier fed with readings standardized by `scaling`.
pub struct TftController<'a> {
    pub model: &'a TftModel,
    pub scaling: Option<&'a ScalingParams>,
    /// Column names of the readings.
    pub feature_names: Vec<String>,
}

impl Controller for TftController<'_> {
    fn classify(&mut self, window: &[f64], _: &[usize]) -> Result<usize, String> {
        let x = match self.scaling {
            Some(s) => s.transform_rows(window, &self.feature_names).map_err(|e| e.to_string())?,
            None => window.to_vec(),
        };
        let out = self.model.forward(&x).map_err(|e| e.to_string())?;
        Ok(out.class())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: usize,
    pub source_row: usize,
    pub sensed: Vec<f64>,
    pub sensor_dropped: bool,
    /// Step at which the reading reaches the gateway, if it does within the horizon.
    pub delivered_at: Option<usize>,
    /// Source row of the newest reading the gateway classified on.
    pub newest_row: usize,
    pub class: usize,
    pub command_dropped: bool,
    /// Issue step of the command in force, `None` before the first arrives.
    pub applied_from: Option<usize>,
    pub applied_class: Option<usize>,
    pub applied: Vec<f64>,
    pub energy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimTrace {
    pub window: usize,
    pub config: SimConfig,
    pub steps: Vec<StepRecord>,
    pub total_energy: f64,
}

impl SimTrace {
    /// Changes of the issued class among commands issued early enough to
    /// reach the actuators within the horizon.
    pub fn issued_changes(&self) -> usize {
        let last = self.steps.len().saturating_sub(self.config.d_a);
        self.steps[..last].windows(2).filter(|p| p[0].class != p[1].class).count()
    }

    /// Changes of the class in force at the actuators.
    pub fn applied_changes(&self) -> usize {
        self.steps
            .windows(2)
            .filter(|p| matches!((p[0].applied_class, p[1].applied_class), (Some(a), Some(b)) if a != b))
            .count()
    }

    pub fn classes(&self) -> Vec<usize> {
        self.steps.iter().map(|s| s.class).collect()
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<(), SimError> {
        let mut w = csv::Writer::from_path(path)?;
        let n = self.config.n_actuators();
        let mut header: Vec<String> = [
            "t",
            "source_row",
            "sensor_dropped",
            "delivered_at",
            "newest_row",
            "class",
            "command_dropped",
            "applied_from",
            "applied_class",
            "energy",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        header.extend((0..n).map(|i| format!("u_{i}")));
        w.write_record(&header)?;
        let opt = |v: Option<usize>| v.map(|x| x.to_string()).unwrap_or_default();
        for s in &self.steps {
            let mut rec = vec![
                s.t.to_string(),
                s.source_row.to_string(),
                s.sensor_dropped.to_string(),
                opt(s.delivered_at),
                s.newest_row.to_string(),
                s.class.to_string(),
                s.command_dropped.to_string(),
                opt(s.applied_from),
                opt(s.applied_class),
                s.energy.to_string(),
            ];
            rec.extend(s.applied.iter().map(|u| u.to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn summary(&self) -> SimSummary {
        let sensor_drops = self.steps.iter().filter(|s| s.sensor_dropped).count();
        let command_drops = self.steps.iter().filter(|s| s.command_dropped).count();
        let mut class_counts = BTreeMap::new();
        for s in &self.steps {
            *class_counts.entry(s.class).or_insert(0) += 1;
        }
        SimSummary {
            horizon: self.steps.len(),
            total_energy: self.total_energy,
            sensor_drops,
            command_drops,
            issued_changes: self.issued_changes(),
            applied_changes: self.applied_changes(),
            class_counts,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimSummary {
    pub horizon: usize,
    pub total_energy: f64,
    pub sensor_drops: usize,
    pub command_drops: usize,
    pub issued_changes: usize,
    pub applied_changes: usize,
    pub class_counts: BTreeMap<usize, usize>,
}

/// `Σ_t Σ_i c_i·u_{i,t}²` over the applied commands, in step then actuator order.
pub fn energy_cost(commands: &[Vec<f64>], cost: &[f64]) -> Result<f64, SimError> {
    let mut total = 0.0;
    for u in commands {
        total += step_energy(u, cost)?;
    }
    Ok(total)
}

fn step_energy(u: &[f64], cost: &[f64]) -> Result<f64, SimError> {
    if u.len() != cost.len() {
        return Err(SimError::CostLength { cost: cost.len(), actuators: u.len() });
    }
    Ok(u.iter().zip(cost).map(|(u, c)| c * u * u).sum())
}

/// Runs the loop for `cfg.horizon` steps over `source` with window `w`.
pub fn run(cfg: &SimConfig, controller: &mut dyn Controller, source: &TimeSeriesTable, w: usize) -> Result<SimTrace, SimError> {
    cfg.validate()?;
    if w == 0 {
        return Err(SimError::Invalid("window must be at least 1".into()));
    }
    let big_t = cfg.horizon;
    if source.n_rows() < big_t + w {
        return Err(SimError::Invalid(format!(
            "source has {} rows, need horizon + window = {}",
            source.n_rows(),
            big_t + w
        )));
    }
    if source.has_missing() {
        return Err(SimError::Invalid("source contains missing values".into()));
    }
    let f = source.n_features();
    let cost = cfg.costs();
    let n_act = cfg.n_actuators();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    // Gateway buffer of (row, values), oldest first.
    let mut buffer: Vec<(usize, Vec<f64>)> = (0..w).map(|r| (r, source.row(r).to_vec())).collect();
    let mut sensor_queue: BTreeMap<usize, Vec<(usize, Vec<f64>)>> = BTreeMap::new();
    let mut command_queue: BTreeMap<usize, (usize, usize)> = BTreeMap::new();
    let mut applied_from: Option<usize> = None;
    let mut applied_class: Option<usize> = None;
    let mut steps = Vec::with_capacity(big_t);
    let mut total = 0.0;
    let mut window = Vec::with_capacity(w * f);
    let mut rows = Vec::with_capacity(w);

    for t in 0..big_t {
        let row = w + t;
        let sensed: Vec<f64> = source
            .row(row)
            .iter()
            .map(|&x| if cfg.noise_std > 0.0 { x + cfg.noise_std * rng.sample::<f64, _>(StandardNormal) } else { x })
            .collect();
        let sensor_dropped = rng.random::<f64>() < cfg.drop_prob;
        let command_roll = rng.random::<f64>();
        let delivered_at = (!sensor_dropped && t + cfg.d_s < big_t).then_some(t + cfg.d_s);
        if let Some(at) = delivered_at {
            sensor_queue.entry(at).or_default().push((row, sensed.clone()));
        }

        if let Some(arrived) = sensor_queue.remove(&t) {
            buffer.extend(arrived);
            let excess = buffer.len().saturating_sub(w);
            buffer.drain(..excess);
        }
        window.clear();
        rows.clear();
        for (r, v) in &buffer {
            window.extend_from_slice(v);
            rows.push(*r);
        }
        let class = controller
            .classify(&window, &rows)
            .map_err(|message| SimError::Controller { step: t, message })?;
        if class >= cfg.command_map.len() {
            return Err(SimError::Controller { step: t, message: format!("class {class} has no command") });
        }
        let command_dropped = command_roll < cfg.drop_prob;
        if !command_dropped {
            command_queue.insert(t + cfg.d_a, (t, class));
        }

        if let Some((issued, c)) = command_queue.remove(&t) {
            applied_from = Some(issued);
            applied_class = Some(c);
        }
        let applied = applied_class.map_or_else(|| vec![0.0; n_act], |c| cfg.command_map[c].clone());
        let energy = step_energy(&applied, &cost)?;
        total += energy;
        steps.push(StepRecord {
            t,
            source_row: row,
            sensed,
            sensor_dropped,
            delivered_at,
            newest_row: *rows.last().expect("window is never empty"),
            class,
            command_dropped,
            applied_from,
            applied_class,
            applied,
            energy,
        });
    }
    Ok(SimTrace { window: w, config: cfg.clone(), steps, total_energy: total })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyRow {
    pub name: String,
    pub total_energy: f64,
    /// Fraction of steps whose class equals the recorded label of the newest delivered row.
    pub agreement: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyReport {
    /// Sorted by energy, then name.
    pub rows: Vec<PolicyRow>,
}

/// Runs every controller on the same configuration and source.
pub fn compare_policies(
    cfg: &SimConfig,
    controllers: &mut [(String, Box<dyn Controller + '_>)],
    source: &TimeSeriesTable,
    w: usize,
    labels: Option<&[usize]>,
) -> Result<(PolicyReport, Vec<SimTrace>), SimError> {
    let mut rows = Vec::new();
    let mut traces = Vec::new();
    for (name, c) in controllers.iter_mut() {
        let trace = run(cfg, c.as_mut(), source, w)?;
        let agreement = labels.map(|l| {
            let hits = trace.steps.iter().filter(|s| l.get(s.newest_row) == Some(&s.class)).count();
            hits as f64 / trace.steps.len() as f64
        });
        rows.push(PolicyRow { name: name.clone(), total_energy: trace.total_energy, agreement });
        traces.push(trace);
    }
    rows.sort_by(|a, b| a.total_energy.total_cmp(&b.total_energy).then_with(|| a.name.cmp(&b.name)));
    Ok((PolicyReport { rows }, traces))
}

impl PolicyReport {
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<(), SimError> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        fs::write(dir.join("policies.json"), serde_json::to_string_pretty(self)?)?;
        let mut w = csv::Writer::from_path(dir.join("policies.csv"))?;
        w.write_record(["rank", "name", "total_energy", "agreement"])?;
        for (i, r) in self.rows.iter().enumerate() {
            let agree = r.agreement.map(|a| a.to_string()).unwrap_or_default();
            w.write_record([(i + 1).to_string(), r.name.clone(), r.total_energy.to_string(), agree])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests;
