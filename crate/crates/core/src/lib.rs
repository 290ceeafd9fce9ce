//! Explainable actuator-class prediction from greenhouse sensor windows:
//! a temporal fusion classifier with variable-selection, SHAP and LIME
//! explanations, kernel k-means actuator classes and a delayed-link
//! closed-loop simulator.

pub mod autodiff;
pub mod cluster;
pub mod dataio;
pub mod report;
pub mod sim;
pub mod tft;
pub mod train;
pub mod xai;

pub use cluster::{ClusterAssignment, KMeansConfig, Kernel};
pub use dataio::{ScalingParams, Schema, TimeSeriesTable, WindowedDataset};
pub use sim::{SimConfig, SimTrace};
pub use tft::{ModelConfig, PredictionOutput, TftModel};
pub use train::{EvalReport, TrainConfig, TrainHistory};
pub use xai::{Attribution, Classifier, FusedImportance, Granularity, Method, Scope};
