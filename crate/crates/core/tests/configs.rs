//! The example configs in `configs/` stay loadable and match the presets.

use std::path::PathBuf;

use subband_esc::harness::ExperimentConfig;

fn config(name: &str) -> ExperimentConfig {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name);
    ExperimentConfig::load(&path).unwrap()
}

#[test]
fn toy_config_is_the_toy_preset() {
    assert_eq!(config("toy.toml"), ExperimentConfig::toy("toy-data", "runs/toy"));
}

#[test]
fn esc50_config_is_the_esc50_preset() {
    let cfg = config("esc50.toml");
    assert_eq!(cfg, ExperimentConfig::esc50("ESC-50-master/audio", "runs/esc50"));
    assert_eq!(cfg.bands.n_bands(), 4);
    assert_eq!(cfg.folds.splits().len(), 5);
}
