//! Fixtures shared by the benchmarks.

use serra_core::dataio::{generate_rolling_window, scale_data, split_data, synth_dataset, SynthConfig, SynthOutput, WindowedDataset};
use serra_core::tft::{ModelConfig, TftModel};

pub fn synth(n_rows: usize) -> SynthOutput {
    synth_dataset(&SynthConfig { n_rows, ..SynthConfig::default() }).expect("synthetic data")
}

/// Scaled training windows of a synthetic run.
pub fn windows(n_rows: usize, window: usize) -> WindowedDataset {
    let s = synth(n_rows);
    let ds = generate_rolling_window(&s.sensors, &s.labels, window).expect("windows");
    let (tr, te) = split_data(&ds, 0.8).expect("split");
    scale_data(&tr, &[&te]).expect("scale").0
}

pub fn model(d_model: usize, window: usize, n_features: usize, n_classes: usize) -> TftModel {
    let cfg = ModelConfig { d_model, n_heads: 2, dropout: 0.0, ..ModelConfig::new(window, n_features, n_classes) };
    TftModel::new(cfg, 0).expect("model")
}
