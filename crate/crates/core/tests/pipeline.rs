//! Extract / train / evaluate on a 10-clip fixture.

use std::fs;
use std::path::Path;

use rand::SeedableRng;
use subband_esc::dsp::BandScheme;
use subband_esc::fusion::FusionWeights;
use subband_esc::harness::{
    cmd_evaluate, cmd_extract, cmd_fusion_curve, cmd_sweep, cmd_train, evaluate, flag_product, generate_toy_dataset,
    ExperimentConfig, FeatureStore, ReportTable, RunOptions, ToySpec,
};
use subband_esc::model::{train_branch, Architecture, BranchData, CrnnModel, TrainConfig};
use subband_esc::seed::Rng;
use subband_esc::{Error, ErrorClass};

fn fixture(dir: &Path) -> ExperimentConfig {
    let spec = ToySpec {
        n_classes: 2,
        clips_per_class: 5,
        ..ToySpec::default()
    };
    generate_toy_dataset(dir.join("data"), &spec, 3).unwrap();
    let mut cfg = ExperimentConfig::toy(dir.join("data"), dir.join("out"));
    cfg.bands = BandScheme::from_inner_khz(&[10.0], 44100).unwrap();
    cfg.training.epochs = 1;
    cfg.training.batch_size = 4;
    cfg
}

#[test]
fn extract_counts_and_is_idempotent() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = fixture(dir.path());
    let opts = RunOptions::default();
    let first = cmd_extract(&cfg, &opts).unwrap();
    assert!(first.recomputed);
    assert_eq!(first.n_clips, 10);
    // 1 s clips give two 60-frame windows each
    assert_eq!(first.records_per_band, 20);
    assert_eq!(first.cache_files.len(), 2);
    let bytes: Vec<Vec<u8>> = first.cache_files.iter().map(|p| fs::read(p).unwrap()).collect();

    let second = cmd_extract(&cfg, &opts).unwrap();
    assert!(!second.recomputed);
    assert_eq!(second.cache_files, first.cache_files);
    for (p, b) in second.cache_files.iter().zip(&bytes) {
        assert_eq!(&fs::read(p).unwrap(), b);
    }
    let store = FeatureStore::open(&cfg).unwrap();
    for band in 0..2 {
        let records = store.load_band(band).unwrap();
        assert_eq!(records.len(), 20);
        assert!(records.iter().all(|r| r.band_index == band && r.n_frames == 60 && r.n_mels == 60));
    }
}

#[test]
fn stages_point_at_the_missing_step() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = fixture(dir.path());
    let e = cmd_train(&cfg, &RunOptions::default()).unwrap_err();
    assert!(matches!(e, Error::Cache(_)) && e.to_string().contains("extract"), "{e}");
    assert_eq!(e.class(), ErrorClass::Data);

    cmd_extract(&cfg, &RunOptions::default()).unwrap();
    let e = evaluate(&cfg, None).unwrap_err();
    assert!(matches!(e, Error::Cache(_)) && e.to_string().contains("train"), "{e}");

    let mut three = cfg.clone();
    three.bands = BandScheme::from_inner_khz(&[6.0, 10.0], 44100).unwrap();
    let e = cmd_fusion_curve(&three).unwrap_err();
    assert!(matches!(e, Error::Config(_)), "{e}");
}

#[test]
fn train_evaluate_and_weight_handling() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = fixture(dir.path());
    let opts = RunOptions::default();
    cmd_extract(&cfg, &opts).unwrap();
    let summary = cmd_train(&cfg, &opts).unwrap();
    assert!(summary.retrained);
    assert_eq!(summary.branches.len(), 2);
    assert!(!cmd_train(&cfg, &opts).unwrap().retrained);

    let searched = cmd_evaluate(&cfg, None).unwrap();
    let fold = &searched.folds[0];
    let search = fold.search.as_ref().expect("search ran");
    assert_eq!(search.grid.len(), 11);
    assert_eq!(fold.weights, search.best_weights);
    assert!(fold.val_accuracy >= fold.branch_val_accuracy.iter().cloned().fold(0.0, f64::max));
    assert!(cfg.output_dir.join("evaluation.csv").is_file());
    assert!(cfg.output_dir.join("evaluation/fold1_predictions.csv").is_file());
    assert!(cfg.output_dir.join("evaluation/fold1_fusion_surface.csv").is_file());
    let csv = fs::read_to_string(cfg.output_dir.join("evaluation.csv")).unwrap();
    assert!(csv.starts_with("n_ss,f_l_khz,cuts_khz,f_h_khz,weights,accuracy,fold_accuracy,config_hash,seed,code_version,status\n"));

    let mut uniform = cfg.clone();
    uniform.fusion.search = false;
    let ev = evaluate(&uniform, None).unwrap();
    assert_eq!(ev.folds[0].weights.as_slice(), &[0.5, 0.5]);
    assert!(ev.folds[0].search.is_none());

    let fixed = FusionWeights::new(vec![1.0, 0.0]).unwrap();
    let ev = evaluate(&cfg, Some(&fixed)).unwrap();
    assert_eq!(ev.folds[0].test_accuracy, ev.folds[0].branch_test_accuracy[0]);

    let e = evaluate(&cfg, Some(&FusionWeights::uniform(3).unwrap())).unwrap_err();
    assert!(matches!(e, Error::Config(_)), "{e}");

    let curve = cmd_fusion_curve(&cfg).unwrap();
    assert_eq!(curve.len(), 11);
    assert_eq!(curve[10].accuracy, ev.folds[0].test_accuracy);
    let fig = fs::read_to_string(cfg.output_dir.join("fig3.csv")).unwrap();
    assert_eq!(fig.lines().count(), 12);
}

#[test]
fn learning_rate_drops_after_epoch_100() {
    let mut rng = Rng::seed_from_u64(0);
    let mut model = CrnnModel::new(2, 0, Architecture::CnnOnly, &mut rng).unwrap();
    let x = vec![subband_esc::dsp::LogmelTensor {
        data: vec![0.1; 60 * 60 * 3],
        n_frames: 60,
        n_mels: 60,
        band_index: 0,
        clip_id: "a".into(),
        window_index: 0,
    }];
    let y = vec![1];
    let cfg = TrainConfig {
        epochs: 101,
        batch_size: 1,
        ..TrainConfig::default()
    };
    let mixup = subband_esc::augment::MixupConfig {
        enabled: false,
        alpha: 0.2,
    };
    let out = train_branch(&mut model, &BranchData::new(&x, &y).unwrap(), None, &mixup, &cfg, 1).unwrap();
    assert_eq!(out.log.len(), 101);
    assert_eq!(out.log[99].epoch, 100);
    assert_eq!(out.log[99].lr, 0.1);
    assert_eq!(out.log[100].epoch, 101);
    assert!((out.log[100].lr - 0.01).abs() < 1e-15);
}

#[test]
fn sweep_keeps_going_past_a_failing_row() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = fixture(dir.path());
    cfg.spectrogram.allow_empty_filters = false;
    // the 0-1 kHz band has mel filters without an FFT bin
    let narrow = BandScheme::from_inner_khz(&[1.0], 44100).unwrap();
    let runs = flag_product(&[narrow], &[Architecture::Crnn], &[true], &[true]);
    let report = cmd_sweep(&cfg, &runs, &RunOptions::default()).unwrap();
    assert_eq!(report.rows.len(), 1);
    assert!(report.rows[0].error.is_some());
    let csv = report.to_csv(ReportTable::Table1).unwrap();
    let row = csv.lines().nth(1).unwrap();
    assert!(row.contains("failed:"), "{row}");
}
