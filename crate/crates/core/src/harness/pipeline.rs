use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::{hex_digest, ExperimentConfig, Split};
use super::report::{ExperimentReport, ReportRow, ReportTable};
use crate::audio_io::{scan_dataset, DatasetManifest, ManifestLayout};
use crate::dsp::{normalize_features, read_cache, write_cache, FeatureExtractor, LogmelTensor, NormStats};
use crate::error::{Error, IoContext, Result};
use crate::fusion::{accuracy, argmax, fuse, grid_search_weights, write_surface_csv, FusionSearchResult, FusionWeights};
use crate::model::{clip_scores, train_branch, write_training_log, BranchData, CrnnModel, EpochRecord};
use crate::seed::{derive_seed, rng_for};

const STAMP: &str = "stamp.txt";
const CLIPS_CSV: &str = "clips.csv";

/// Settings that change speed but never results.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOptions {
    pub threads: usize,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self { threads: 1 }
    }
}

/// Maps `f` over `items` on up to `threads` scoped threads, keeping order.
fn parallel_map<T: Sync, R: Send>(items: &[T], threads: usize, f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    let threads = threads.clamp(1, items.len().max(1));
    if threads == 1 {
        return items.iter().map(f).collect();
    }
    let f = &f;
    let chunk = items.len().div_ceil(threads);
    std::thread::scope(|s| {
        let handles: Vec<_> = items
            .chunks(chunk)
            .map(|c| s.spawn(move || c.iter().map(f).collect::<Vec<_>>()))
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("worker thread panicked"))
            .collect()
    })
}

pub fn band_cache_path(features_dir: &Path, band: usize) -> PathBuf {
    features_dir.join(format!("band{band}.sslm"))
}

/// Seed of everything trained for one test fold.
pub fn split_seed(master: u64, test_fold: u32) -> u64 {
    derive_seed(master, &format!("split/test{test_fold}"))
}

/// Name of the weight-initialisation stream of a band model.
pub fn init_stream(band: usize) -> String {
    format!("init/band{band}")
}

pub fn split_dir(models_dir: &Path, test_fold: u32) -> PathBuf {
    models_dir.join(format!("fold{test_fold}"))
}

pub fn checkpoint_path(split_dir: &Path, band: usize) -> PathBuf {
    split_dir.join(format!("band{band}.ckpt"))
}

fn norm_path(split_dir: &Path, band: usize) -> PathBuf {
    split_dir.join(format!("band{band}_norm.txt"))
}

fn log_path(split_dir: &Path, band: usize) -> PathBuf {
    split_dir.join(format!("band{band}_log.csv"))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).ctx(|| format!("creating {}", dir.display()))
}

/// One row of `clips.csv` in a feature cache directory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClipInfo {
    pub clip_id: String,
    pub fold: u32,
    pub target: usize,
    pub windows: usize,
}

fn manifest(cfg: &ExperimentConfig) -> Result<DatasetManifest> {
    let layout = ManifestLayout {
        csv_index: cfg.csv_index.clone(),
    };
    scan_dataset(&cfg.dataset_root, &layout)
}

fn feature_stamp(cfg: &ExperimentConfig, manifest: &DatasetManifest) -> Result<String> {
    let mut text = cfg.feature_hash()?;
    for c in manifest.clips() {
        text.push_str(&format!("\n{},{},{}", c.clip_id, c.fold, c.class_index));
    }
    Ok(hex_digest(text.as_bytes()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExtractSummary {
    pub dir: PathBuf,
    pub n_clips: usize,
    /// Records per band cache (clips x windows).
    pub records_per_band: usize,
    pub cache_files: Vec<PathBuf>,
    /// `false` when an up-to-date cache was found and nothing was computed.
    pub recomputed: bool,
}

fn read_clip_table(dir: &Path) -> Result<Vec<ClipInfo>> {
    let mut r = csv::Reader::from_path(dir.join(CLIPS_CSV))?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

/// Extracts features for every clip into one cache file per band. The cache
/// directory is keyed by the feature settings; a rerun with a matching stamp
/// does nothing. Clips that fail are all listed in the returned error.
pub fn cmd_extract(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<ExtractSummary> {
    cfg.validate()?;
    let manifest = manifest(cfg)?;
    let dir = cfg.features_dir()?;
    let stamp = feature_stamp(cfg, &manifest)?;
    let n_bands = cfg.bands.n_bands();
    let cache_files: Vec<PathBuf> = (0..n_bands).map(|b| band_cache_path(&dir, b)).collect();

    let up_to_date = fs::read_to_string(dir.join(STAMP)).is_ok_and(|s| s == stamp)
        && cache_files.iter().all(|f| f.is_file())
        && dir.join(CLIPS_CSV).is_file();
    if up_to_date {
        let clips = read_clip_table(&dir)?;
        return Ok(ExtractSummary {
            dir,
            n_clips: clips.len(),
            records_per_band: clips.iter().map(|c| c.windows).sum(),
            cache_files,
            recomputed: false,
        });
    }

    create_dir(&dir)?;
    let _ = fs::remove_file(dir.join(STAMP));
    let extractor = FeatureExtractor::new(&cfg.spectrogram, &cfg.bands)?;
    let rate = cfg.spectrogram.sample_rate_hz;
    let results = parallel_map(manifest.clips(), opts.threads, |c| {
        manifest.load(c, rate).and_then(|clip| extractor.extract(&clip))
    });

    let mut bands: Vec<Vec<LogmelTensor>> = vec![Vec::new(); n_bands];
    let mut clips = Vec::with_capacity(results.len());
    let mut failures = Vec::new();
    for (c, r) in manifest.clips().iter().zip(results) {
        match r {
            Ok(features) => {
                clips.push(ClipInfo {
                    clip_id: c.clip_id.clone(),
                    fold: c.fold,
                    target: c.class_index,
                    windows: features.len() / n_bands,
                });
                for f in features {
                    let b = f.band_index;
                    bands[b].push(f);
                }
            }
            Err(e) => failures.push(format!("{}: {e}", c.path.display())),
        }
    }
    if !failures.is_empty() {
        return Err(Error::Extraction(failures));
    }

    for (b, records) in bands.iter().enumerate() {
        write_cache(&cache_files[b], records)?;
    }
    let path = dir.join(CLIPS_CSV);
    let mut w = csv::Writer::from_path(&path)?;
    for c in &clips {
        w.serialize(c)?;
    }
    w.flush().ctx(|| format!("writing {}", path.display()))?;
    fs::write(dir.join(STAMP), &stamp).ctx(|| format!("writing stamp in {}", dir.display()))?;
    Ok(ExtractSummary {
        dir,
        n_clips: clips.len(),
        records_per_band: bands.first().map_or(0, |b| b.len()),
        cache_files,
        recomputed: true,
    })
}

/// A completed feature cache.
#[derive(Debug, Clone)]
pub struct FeatureStore {
    pub dir: PathBuf,
    pub clips: Vec<ClipInfo>,
    pub n_classes: usize,
    pub n_bands: usize,
    stamp: String,
}

impl FeatureStore {
    /// Opens the cache for `cfg`, failing with a pointer to the `extract`
    /// command when it is missing or out of date.
    pub fn open(cfg: &ExperimentConfig) -> Result<Self> {
        let dir = cfg.features_dir()?;
        let stamp = fs::read_to_string(dir.join(STAMP)).map_err(|_| {
            Error::Cache(format!(
                "no feature cache for this configuration in {}; run `subband-esc extract --config <config>` first",
                dir.display()
            ))
        })?;
        if stamp != feature_stamp(cfg, &manifest(cfg)?)? {
            return Err(Error::Cache(format!(
                "feature cache in {} does not match the dataset; rerun `subband-esc extract --config <config>`",
                dir.display()
            )));
        }
        let clips = read_clip_table(&dir)?;
        let n_classes = 1 + clips.iter().map(|c| c.target).max().unwrap_or(0);
        Ok(Self {
            dir,
            clips,
            n_classes,
            n_bands: cfg.bands.n_bands(),
            stamp,
        })
    }

    pub fn load_band(&self, band: usize) -> Result<Vec<LogmelTensor>> {
        let records = read_cache(band_cache_path(&self.dir, band))?;
        let expected: usize = self.clips.iter().map(|c| c.windows).sum();
        if records.len() != expected || records.iter().any(|r| r.band_index != band) {
            return Err(Error::Cache(format!(
                "band {band} cache holds {} records, expected {expected}",
                records.len()
            )));
        }
        Ok(records)
    }

    fn by_id(&self) -> HashMap<&str, &ClipInfo> {
        self.clips.iter().map(|c| (c.clip_id.as_str(), c)).collect()
    }
}

/// Windows and labels of the clips in `folds`, in cache order.
fn select(store: &FeatureStore, records: &[LogmelTensor], folds: &[u32]) -> Result<(Vec<LogmelTensor>, Vec<usize>)> {
    let ids = store.by_id();
    let mut x = Vec::new();
    let mut y = Vec::new();
    for r in records {
        let info = ids
            .get(r.clip_id.as_str())
            .ok_or_else(|| Error::Cache(format!("record for unknown clip {}", r.clip_id)))?;
        if folds.contains(&info.fold) {
            x.push(r.clone());
            y.push(info.target);
        }
    }
    Ok((x, y))
}

#[derive(Debug, Clone, PartialEq)]
pub struct BranchSummary {
    pub test_fold: u32,
    pub band: usize,
    pub best_epoch: Option<usize>,
    pub last: Option<EpochRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSummary {
    pub dir: PathBuf,
    pub branches: Vec<BranchSummary>,
    /// `false` when up-to-date checkpoints were found.
    pub retrained: bool,
}

fn train_one(cfg: &ExperimentConfig, store: &FeatureStore, split: &Split, band: usize, dir: &Path) -> Result<BranchSummary> {
    let records = store.load_band(band)?;
    let (mut train_x, train_y) = select(store, &records, &split.train_folds)?;
    let (mut val_x, val_y) = select(store, &records, &[split.val_fold])?;
    drop(records);
    let stats = normalize_features(&mut train_x, None)?;
    normalize_features(&mut val_x, Some(&stats))?;

    let sdir = split_dir(dir, split.test_fold);
    create_dir(&sdir)?;
    stats.save(norm_path(&sdir, band))?;
    let seed = split_seed(cfg.seed, split.test_fold);
    let mut model = CrnnModel::new(store.n_classes, band, cfg.network, &mut rng_for(seed, &init_stream(band)))?;
    let train = BranchData::new(&train_x, &train_y)?;
    let val = BranchData::new(&val_x, &val_y)?;
    let outcome = train_branch(&mut model, &train, Some(&val), &cfg.mixup, &cfg.training, seed)?;
    model.save(&checkpoint_path(&sdir, band), Some(&outcome.optimizer))?;
    write_training_log(&log_path(&sdir, band), &outcome.log)?;
    Ok(BranchSummary {
        test_fold: split.test_fold,
        band,
        best_epoch: outcome.best_epoch,
        last: outcome.log.last().cloned(),
    })
}

/// Trains one model per (test fold, band). Each keeps the parameters of its
/// best validation epoch. Outputs go to a directory keyed by the settings
/// that affect training; an up-to-date directory is left untouched.
pub fn cmd_train(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<TrainSummary> {
    cfg.validate()?;
    let store = FeatureStore::open(cfg)?;
    let dir = cfg.models_dir()?;
    let stamp = format!("{}\n{}", cfg.model_hash()?, store.stamp);
    let splits = cfg.folds.splits();
    let jobs: Vec<(&Split, usize)> = splits.iter().flat_map(|s| (0..store.n_bands).map(move |b| (s, b))).collect();

    let done = fs::read_to_string(dir.join(STAMP)).is_ok_and(|s| s == stamp)
        && jobs.iter().all(|(s, b)| checkpoint_path(&split_dir(&dir, s.test_fold), *b).is_file());
    if done {
        return Ok(TrainSummary {
            dir,
            branches: Vec::new(),
            retrained: false,
        });
    }
    create_dir(&dir)?;
    let _ = fs::remove_file(dir.join(STAMP));
    let mut snapshot = cfg.clone();
    snapshot.output_dir = PathBuf::new();
    snapshot.save(dir.join("config.toml"))?;

    let branches = parallel_map(&jobs, opts.threads, |(s, b)| train_one(cfg, &store, s, *b, &dir))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    fs::write(dir.join(STAMP), &stamp).ctx(|| format!("writing stamp in {}", dir.display()))?;
    Ok(TrainSummary {
        dir,
        branches,
        retrained: true,
    })
}

/// Per-branch clip scores for one evaluation fold.
#[derive(Debug, Clone, PartialEq)]
pub struct FoldScores {
    pub clip_ids: Vec<String>,
    pub labels: Vec<usize>,
    /// `[band][clip][class]`.
    pub scores: Vec<Vec<Vec<f64>>>,
}

impl FoldScores {
    pub fn branch_accuracy(&self, band: usize) -> Result<f64> {
        accuracy(&self.scores[band], &self.labels)
    }

    pub fn fused(&self, weights: &FusionWeights) -> Result<Vec<Vec<f64>>> {
        (0..self.labels.len())
            .map(|c| {
                let per: Vec<&[f64]> = self.scores.iter().map(|b| b[c].as_slice()).collect();
                fuse(&per, weights)
            })
            .collect()
    }
}

fn missing_models(dir: &Path) -> Error {
    Error::Cache(format!(
        "no trained models for this configuration in {}; run `subband-esc train --config <config>` first",
        dir.display()
    ))
}

/// Scores of every band model on the clips of `folds`, one entry per fold.
/// Each clip's windows are predicted as one batch and averaged.
pub fn fold_scores(cfg: &ExperimentConfig, store: &FeatureStore, test_fold: u32, folds: &[u32]) -> Result<Vec<FoldScores>> {
    let dir = cfg.models_dir()?;
    if !dir.join(STAMP).is_file() {
        return Err(missing_models(&dir));
    }
    let sdir = split_dir(&dir, test_fold);
    let ids = store.by_id();
    let mut out: Vec<FoldScores> = folds
        .iter()
        .map(|&f| {
            let clips: Vec<&ClipInfo> = store.clips.iter().filter(|c| c.fold == f).collect();
            FoldScores {
                clip_ids: clips.iter().map(|c| c.clip_id.clone()).collect(),
                labels: clips.iter().map(|c| c.target).collect(),
                scores: Vec::new(),
            }
        })
        .collect();
    for band in 0..store.n_bands {
        let ckpt = checkpoint_path(&sdir, band);
        if !ckpt.is_file() {
            return Err(missing_models(&dir));
        }
        let (mut model, _) = CrnnModel::load(&ckpt, store.n_classes, band, cfg.network)?;
        let stats = NormStats::load(norm_path(&sdir, band))?;
        let mut by_clip: HashMap<String, Vec<LogmelTensor>> = HashMap::new();
        for mut r in store.load_band(band)? {
            if ids.get(r.clip_id.as_str()).is_some_and(|c| folds.contains(&c.fold)) {
                stats.apply(&mut r);
                by_clip.entry(r.clip_id.clone()).or_default().push(r);
            }
        }
        for fs in out.iter_mut() {
            let scores = fs
                .clip_ids
                .iter()
                .map(|id| {
                    let windows: Vec<&LogmelTensor> = by_clip.get(id).map(|v| v.iter().collect()).unwrap_or_default();
                    clip_scores(&mut model, &windows)
                })
                .collect::<Result<Vec<_>>>()?;
            fs.scores.push(scores);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClipPrediction {
    pub clip_id: String,
    pub label: usize,
    pub scores: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FoldResult {
    pub split: Split,
    pub weights: FusionWeights,
    pub val_accuracy: f64,
    pub test_accuracy: f64,
    pub branch_val_accuracy: Vec<f64>,
    pub branch_test_accuracy: Vec<f64>,
    /// The weight search on the validation fold, when it ran.
    pub search: Option<FusionSearchResult>,
    pub predictions: Vec<ClipPrediction>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub row: ReportRow,
    pub folds: Vec<FoldResult>,
}

/// Weights precedence: `weights`, then `fusion.weights` in the config, then
/// the validation-fold grid search when `fusion.search` is on, otherwise
/// uniform.
pub fn evaluate(cfg: &ExperimentConfig, weights: Option<&FusionWeights>) -> Result<Evaluation> {
    let mut cfg = cfg.clone();
    if let Some(w) = weights {
        cfg.fusion.weights = Some(w.as_slice().to_vec());
    }
    let n_bands = cfg.bands.n_bands();
    if let Some(w) = &cfg.fusion.weights {
        if w.len() != n_bands {
            return Err(Error::Config(format!(
                "{} fusion weights given for a {n_bands}-band scheme",
                w.len()
            )));
        }
    }
    cfg.validate()?;
    let store = FeatureStore::open(&cfg)?;
    let fixed = cfg.fusion.weights.clone().map(FusionWeights::new).transpose()?;

    let mut folds = Vec::new();
    for split in cfg.folds.splits() {
        let mut scores = fold_scores(&cfg, &store, split.test_fold, &[split.val_fold, split.test_fold])?;
        let test = scores.pop().expect("two folds");
        let val = scores.pop().expect("two folds");
        let (weights, search) = match &fixed {
            Some(w) => (w.clone(), None),
            None if n_bands == 1 => (FusionWeights::uniform(1)?, None),
            None if cfg.fusion.search => {
                let r = grid_search_weights(&val.scores, &val.labels, cfg.fusion.step)?;
                (r.best_weights.clone(), Some(r))
            }
            None => (FusionWeights::uniform(n_bands)?, None),
        };
        let fused_test = test.fused(&weights)?;
        let predictions = test
            .clip_ids
            .iter()
            .zip(&test.labels)
            .zip(&fused_test)
            .map(|((id, &label), s)| ClipPrediction {
                clip_id: id.clone(),
                label,
                scores: s.clone(),
            })
            .collect();
        folds.push(FoldResult {
            val_accuracy: accuracy(&val.fused(&weights)?, &val.labels)?,
            test_accuracy: accuracy(&fused_test, &test.labels)?,
            branch_val_accuracy: (0..n_bands).map(|b| val.branch_accuracy(b)).collect::<Result<_>>()?,
            branch_test_accuracy: (0..n_bands).map(|b| test.branch_accuracy(b)).collect::<Result<_>>()?,
            split,
            weights,
            search,
            predictions,
        });
    }
    let row = ReportRow::new(
        cfg.network,
        cfg.mixup.enabled,
        fixed.is_some() || cfg.fusion.search,
        cfg.bands.clone(),
        folds.iter().map(|f| f.weights.clone()).collect(),
        folds.iter().map(|f| (f.split.test_fold, f.test_accuracy)).collect(),
        cfg.hash()?,
        cfg.seed,
    )?;
    Ok(Evaluation { row, folds })
}

fn write_predictions(path: &Path, preds: &[ClipPrediction]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let n = preds.first().map_or(0, |p| p.scores.len());
    let mut header = vec!["clip_id".to_string(), "label".into(), "predicted".into()];
    header.extend((0..n).map(|c| format!("p{c}")));
    w.write_record(&header)?;
    for p in preds {
        let mut row = vec![p.clip_id.clone(), p.label.to_string(), argmax(&p.scores).to_string()];
        row.extend(p.scores.iter().map(|s| format!("{s:e}")));
        w.write_record(&row)?;
    }
    w.flush().ctx(|| format!("writing {}", path.display()))
}

/// Runs [`evaluate`] and writes `evaluation.csv` (one row in the `table5.csv` layout)
/// plus per-fold predictions and weight-search surfaces under
/// `evaluation/`.
pub fn cmd_evaluate(cfg: &ExperimentConfig, weights: Option<&FusionWeights>) -> Result<Evaluation> {
    let ev = evaluate(cfg, weights)?;
    let dir = cfg.output_dir.join("evaluation");
    create_dir(&dir)?;
    for f in &ev.folds {
        write_predictions(&dir.join(format!("fold{}_predictions.csv", f.split.test_fold)), &f.predictions)?;
        if let Some(s) = &f.search {
            write_surface_csv(&dir.join(format!("fold{}_fusion_surface.csv", f.split.test_fold)), s)?;
        }
    }
    ExperimentReport { rows: vec![ev.row.clone()] }.write_csv(&cfg.output_dir.join("evaluation.csv"), ReportTable::Table5)?;
    Ok(ev)
}

/// One point of the two-band weight curve.
#[derive(Debug, Clone, PartialEq)]
pub struct CurvePoint {
    pub w1: f64,
    /// Mean test accuracy over the configured test folds.
    pub accuracy: f64,
}

/// Test accuracy at `ω¹ = 0.0, 0.1, ..., 1.0` for a two-band scheme,
/// written to `fig3.csv`.
pub fn cmd_fusion_curve(cfg: &ExperimentConfig) -> Result<Vec<CurvePoint>> {
    cfg.validate()?;
    if cfg.bands.n_bands() != 2 {
        return Err(Error::Config(format!(
            "the fusion curve needs a two-band scheme (N_ss = 2), this configuration has {} bands",
            cfg.bands.n_bands()
        )));
    }
    let store = FeatureStore::open(cfg)?;
    let mut per_fold: Vec<Vec<(f64, f64)>> = Vec::new();
    for split in cfg.folds.splits() {
        let test = fold_scores(cfg, &store, split.test_fold, &[split.test_fold])?.remove(0);
        let r = grid_search_weights(&test.scores, &test.labels, 0.1)?;
        per_fold.push(r.grid.iter().map(|(w, a)| (w.as_slice()[0], *a)).collect());
    }
    let points: Vec<CurvePoint> = (0..per_fold[0].len())
        .map(|i| CurvePoint {
            w1: per_fold[0][i].0,
            accuracy: per_fold.iter().map(|f| f[i].1).sum::<f64>() / per_fold.len() as f64,
        })
        .collect();

    create_dir(&cfg.output_dir)?;
    let path = cfg.output_dir.join("fig3.csv");
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(["w1", "w2", "accuracy", "config_hash"])?;
    let hash = cfg.hash()?;
    for p in &points {
        w.write_record([
            format!("{:.1}", p.w1),
            format!("{:.1}", 1.0 - p.w1),
            format!("{:.6}", p.accuracy),
            hash.clone(),
        ])?;
    }
    w.flush().ctx(|| format!("writing {}", path.display()))?;
    Ok(points)
}
