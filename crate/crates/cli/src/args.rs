//! Flags of every subcommand. All settings are optional on the command line
//! so that a `--config` JSON file can supply them; flags given explicitly
//! override the file.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

#[derive(Parser, Debug)]
#[command(name = "serra", version, about = "Explainable actuator-class prediction for greenhouse sensor data")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a synthetic sensor/actuator CSV with known causal features.
    Synth(SynthArgs),
    /// Group actuators into setting classes with kernel k-means and label every frame.
    Cluster(ClusterArgs),
    /// Train the classifier on rolling windows.
    Train(TrainArgs),
    /// Score a trained model on the held-out split.
    Evaluate(EvaluateArgs),
    /// VSN, SHAP or LIME explanations of a trained model.
    Explain(ExplainArgs),
    /// Fuse explanation rankings and retrain on the selected features.
    Retune(RetuneArgs),
    /// Closed-loop simulation with delays, drops and actuator energy.
    Simulate(SimulateArgs),
    /// Compare analytic and finite-difference gradients of the model.
    Gradcheck(GradcheckArgs),
}

#[derive(Args, Debug, Default, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct Common {
    /// JSON file of settings; explicit flags take precedence.
    #[arg(long, global = true)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Args, Debug, Default, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct DataArgs {
    /// Input CSV.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Column-role JSON; defaults to `schema.json` next to the data.
    #[arg(long)]
    pub schema: Option<PathBuf>,
    /// CSV with a `label` column, one row per data row (e.g. from `cluster`).
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Fraction of windows, in time order, used for training.
    #[arg(long)]
    pub ratio: Option<f64>,
}

#[derive(Args, Debug, Default, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
    /// Number of rows.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub features: Option<usize>,
    #[arg(long)]
    pub classes: Option<usize>,
    #[arg(long)]
    pub actuators: Option<usize>,
    #[arg(long)]
    pub noise: Option<f64>,
    #[arg(long)]
    pub window: Option<usize>,
}

#[derive(Args, Debug, Default, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ClusterArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
    #[command(flatten)]
    #[serde(flatten)]
    pub data: DataArgs,
    /// Number of actuator classes.
    #[arg(long)]
    pub classes: Option<usize>,
    /// `rbf` or `linear`.
    #[arg(long)]
    pub kernel: Option<String>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub restarts: Option<usize>,
    /// Smallest and largest K in the selection report.
    #[arg(long)]
    pub k_min: Option<usize>,
    #[arg(long)]
    pub k_max: Option<usize>,
}

#[derive(Args, Debug, Default, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelArgs {
    #[arg(long)]
    pub window: Option<usize>,
    /// Number of classes; inferred from the labels when absent.
    #[arg(long)]
    pub classes: Option<usize>,
    #[arg(long)]
    pub d_model: Option<usize>,
    #[arg(long)]
    pub heads: Option<usize>,
    #[arg(long)]
    pub dropout: Option<f64>,
}

#[derive(Args, Debug, Default, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct FitArgs {
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    /// `adam` or `sgd-momentum`.
    #[arg(long)]
    pub optimizer: Option<String>,
    /// `constant` or `cosine`.
    #[arg(long)]
    pub schedule: Option<String>,
    #[arg(long)]
    pub class_weighting: bool,
}

#[derive(Args, Debug, Default, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
    #[command(flatten)]
    #[serde(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub fit: FitArgs,
}

#[derive(Args, Debug, Default, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct EvaluateArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
    #[command(flatten)]
    #[serde(flatten)]
    pub data: DataArgs,
    /// Model checkpoint written by `train`.
    #[arg(long)]
    pub model: Option<PathBuf>,
}

#[derive(Args, Debug, Default, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ExplainArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
    #[command(flatten)]
    #[serde(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// `vsn`, `shap` or `lime`.
    #[arg(long)]
    pub method: Option<String>,
    /// Explain only this class.
    #[arg(long)]
    pub class_id: Option<usize>,
    /// `feature` or `feature-timestep`.
    #[arg(long)]
    pub granularity: Option<String>,
    /// SHAP background windows drawn from the training split.
    #[arg(long)]
    pub background: Option<usize>,
    /// Test windows explained per class.
    #[arg(long)]
    pub probe: Option<usize>,
    #[arg(long)]
    pub coalitions: Option<usize>,
    #[arg(long)]
    pub perturbations: Option<usize>,
}

#[derive(Args, Debug, Default, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct RetuneArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
    #[command(flatten)]
    #[serde(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Global explanation JSON files to fuse.
    #[arg(long, num_args = 1..)]
    pub attributions: Vec<PathBuf>,
    /// Cumulative fused-importance threshold; without it only the fusion is written.
    #[arg(long)]
    pub tau: Option<f64>,
    #[command(flatten)]
    #[serde(flatten)]
    pub fit: FitArgs,
}

#[derive(Args, Debug, Default, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SimulateArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
    #[command(flatten)]
    #[serde(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Per-class command vectors (`command_map.json` from `cluster`).
    #[arg(long)]
    pub commands: Option<PathBuf>,
    #[arg(long)]
    pub horizon: Option<usize>,
    /// Sensor → gateway delay in steps.
    #[arg(long)]
    pub ds: Option<usize>,
    /// Gateway → actuator delay in steps.
    #[arg(long)]
    pub da: Option<usize>,
    #[arg(long)]
    pub drop: Option<f64>,
    #[arg(long)]
    pub noise: Option<f64>,
    /// Comma-separated cost coefficient per actuator.
    #[arg(long, value_delimiter = ',')]
    pub cost: Vec<f64>,
}

#[derive(Args, Debug, Default, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct GradcheckArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
    /// Tiny model: window 4, 3 features, width 8, 2 heads, 3 classes.
    #[arg(long)]
    pub tiny: bool,
    #[arg(long)]
    pub window: Option<usize>,
    #[arg(long)]
    pub features: Option<usize>,
    #[arg(long)]
    pub classes: Option<usize>,
    #[arg(long)]
    pub eps: Option<f64>,
}

fn strip_unset(v: Value) -> Value {
    match v {
        Value::Object(m) => Value::Object(
            m.into_iter()
                .filter(|(_, v)| !matches!(v, Value::Null | Value::Bool(false)) && v.as_array().is_none_or(|a| !a.is_empty()))
                .map(|(k, v)| (k, strip_unset(v)))
                .collect(),
        ),
        other => other,
    }
}

/// Settings file contents: either a plain object of settings or a run
/// manifest, whose recorded settings are replayed.
fn read_config(path: &Path, command: &str) -> Result<Map<String, Value>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    let v: Value = serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
    let Value::Object(mut m) = v else { bail!("config {} is not a JSON object", path.display()) };
    if let (Some(Value::String(cmd)), Some(Value::Object(_))) = (m.get("command"), m.get("settings")) {
        if cmd != command {
            bail!("manifest {} records `{cmd}`, not `{command}`", path.display());
        }
        let Some(Value::Object(s)) = m.remove("settings") else { unreachable!() };
        return Ok(s);
    }
    Ok(m)
}

/// Overlays explicitly given flags on the optional config file.
pub fn resolve<T: Serialize + DeserializeOwned>(cli: &T, config: Option<&Path>, command: &str) -> Result<T> {
    let mut merged = match config {
        Some(p) => read_config(p, command)?,
        None => Map::new(),
    };
    if let Value::Object(flags) = strip_unset(serde_json::to_value(cli)?) {
        merged.extend(flags);
    }
    serde_json::from_value(Value::Object(merged)).context("invalid settings")
}
