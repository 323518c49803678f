use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::crnn::{to_batch, CrnnModel};
use crate::augment::{mix_minibatch, MixupConfig};
use crate::dsp::LogmelTensor;
use crate::error::{Error, IoContext, Result};
use crate::fusion::{accuracy, argmax};
use crate::nn::{one_hot, softmax_cross_entropy, LrSchedule, SgdNesterov, Tensor};
use crate::seed::rng_for;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub momentum: f64,
    pub lr: LrSchedule,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            batch_size: 200,
            momentum: 0.9,
            lr: LrSchedule::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config(format!("momentum must be in [0, 1), got {}", self.momentum)));
        }
        self.lr.validate()
    }
}

/// Windows of one band with their labels.
#[derive(Debug, Clone, Copy)]
pub struct BranchData<'a> {
    pub features: &'a [LogmelTensor],
    pub labels: &'a [usize],
}

impl<'a> BranchData<'a> {
    pub fn new(features: &'a [LogmelTensor], labels: &'a [usize]) -> Result<Self> {
        if features.len() != labels.len() {
            return Err(Error::Shape(format!("{} features for {} labels", features.len(), labels.len())));
        }
        Ok(Self { features, labels })
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub train_acc: f64,
    pub val_acc: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub log: Vec<EpochRecord>,
    /// 1-based epoch whose parameters were kept, `None` when no epoch ran.
    pub best_epoch: Option<usize>,
    pub optimizer: SgdNesterov<f32>,
}

/// Clip-level accuracy of one branch: window scores are averaged per clip.
pub fn clip_accuracy(model: &mut CrnnModel, data: &BranchData, batch_size: usize) -> Result<f64> {
    let mut per_clip: BTreeMap<&str, (Vec<f64>, usize, usize)> = BTreeMap::new();
    for (chunk, labels) in data.features.chunks(batch_size.max(1)).zip(data.labels.chunks(batch_size.max(1))) {
        let refs: Vec<&LogmelTensor> = chunk.iter().collect();
        for ((f, &l), s) in chunk.iter().zip(labels).zip(model.predict_batch(&refs)?) {
            let e = per_clip
                .entry(f.clip_id.as_str())
                .or_insert_with(|| (vec![0.0; s.probs.len()], 0, l));
            if e.2 != l {
                return Err(Error::Label(format!("clip {} has windows with different labels", f.clip_id)));
            }
            for (a, p) in e.0.iter_mut().zip(&s.probs) {
                *a += p;
            }
            e.1 += 1;
        }
    }
    let (preds, labels): (Vec<Vec<f64>>, Vec<usize>) = per_clip
        .into_values()
        .map(|(s, n, l)| (s.into_iter().map(|v| v / n as f64).collect(), l))
        .unzip();
    accuracy(&preds, &labels)
}

/// Mini-batch training with Nesterov SGD and optional mixup.
///
/// Random streams are derived from `seed` and the model's band index:
/// `shuffle` orders the epoch, `mixup` drives pairing and λ. With mixup
/// disabled the `mixup` stream is never touched. When `val` is given the
/// parameters of the best validation epoch (latest on ties) are kept.
///
/// A non-finite loss or gradient restores the last good parameters and
/// returns a numeric error.
pub fn train_branch(
    model: &mut CrnnModel,
    train: &BranchData,
    val: Option<&BranchData>,
    mixup: &MixupConfig,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if mixup.enabled {
        mixup.validate()?;
    }
    let mut optimizer = SgdNesterov::<f32>::new(cfg.lr, cfg.momentum)?;
    if cfg.epochs == 0 {
        return Ok(TrainOutcome {
            log: Vec::new(),
            best_epoch: None,
            optimizer,
        });
    }
    if train.is_empty() {
        return Err(Error::Config(format!("band {} has no training windows", model.band_index)));
    }
    if let Some(&l) = train.labels.iter().find(|&&l| l >= model.n_classes) {
        return Err(Error::Label(format!("label {l} out of range for {} classes", model.n_classes)));
    }
    let band = model.band_index;
    let mut shuffle_rng = rng_for(seed, &format!("shuffle/band{band}"));
    let mut mixup_rng = rng_for(seed, &format!("mixup/band{band}"));

    let mut log = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, usize, Vec<Vec<f32>>)> = None;
    let mut order: Vec<usize> = (0..train.len()).collect();

    for epoch in 0..cfg.epochs {
        optimizer.epoch = epoch;
        let snapshot = snapshot(model);
        order.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0;
        let mut hits = 0usize;
        for idx in order.chunks(cfg.batch_size) {
            let refs: Vec<&LogmelTensor> = idx.iter().map(|&i| &train.features[i]).collect();
            let labels: Vec<usize> = idx.iter().map(|&i| train.labels[i]).collect();
            let mut x = to_batch(&refs)?;
            let mut y: Tensor<f32> = one_hot(&labels, model.n_classes)?;
            if mixup.enabled {
                mix_minibatch(&mut x, &mut y, mixup, &mut mixup_rng)?;
            }
            let step = (|| -> Result<(f64, usize)> {
                model.net.zero_grad();
                let logits = model.net.forward(&x)?;
                let ce = softmax_cross_entropy(&logits, &y)?;
                if !ce.loss.is_finite() {
                    return Err(Error::NonFinite(format!("loss is {} at epoch {}", ce.loss, epoch + 1)));
                }
                model.net.backward(&ce.grad)?;
                optimizer.step(&mut model.net.params_mut())?;
                let c = model.n_classes;
                let hits = ce
                    .probs
                    .data
                    .chunks_exact(c)
                    .zip(y.data.chunks_exact(c))
                    .filter(|(p, t)| {
                        let p: Vec<f64> = p.iter().map(|&v| v as f64).collect();
                        let t: Vec<f64> = t.iter().map(|&v| v as f64).collect();
                        argmax(&p) == argmax(&t)
                    })
                    .count();
                Ok((ce.loss as f64 * idx.len() as f64, hits))
            })();
            match step {
                Ok((l, h)) => {
                    loss_sum += l;
                    hits += h;
                }
                Err(e @ Error::NonFinite(_)) => {
                    restore(model, &snapshot);
                    return Err(e);
                }
                Err(e) => return Err(e),
            }
        }
        let val_acc = match val {
            Some(v) if !v.is_empty() => Some(clip_accuracy(model, v, cfg.batch_size)?),
            _ => None,
        };
        log.push(EpochRecord {
            epoch: epoch + 1,
            lr: optimizer.lr(),
            train_loss: loss_sum / train.len() as f64,
            train_acc: hits as f64 / train.len() as f64,
            val_acc,
        });
        if let Some(acc) = val_acc {
            if best.as_ref().is_none_or(|(b, _, _)| acc >= *b) {
                best = Some((acc, epoch + 1, self::snapshot(model)));
            }
        }
    }
    let best_epoch = match best {
        Some((_, e, params)) => {
            restore(model, &params);
            Some(e)
        }
        None => Some(cfg.epochs),
    };
    Ok(TrainOutcome {
        log,
        best_epoch,
        optimizer,
    })
}

fn snapshot(model: &CrnnModel) -> Vec<Vec<f32>> {
    model.net.params().into_iter().map(|(_, t)| t.data.clone()).collect()
}

fn restore(model: &mut CrnnModel, params: &[Vec<f32>]) {
    for (p, v) in model.net.params_mut().into_iter().zip(params) {
        p.data.clone_from(v);
        p.grad = None;
    }
}

/// `epoch,lr,train_loss,train_acc,val_acc`; `val_acc` is empty when absent.
pub fn write_training_log(path: &Path, log: &[EpochRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::io(format!("creating {}", path.display()), e.into()))?;
    w.write_record(["epoch", "lr", "train_loss", "train_acc", "val_acc"])?;
    for r in log {
        w.write_record([
            r.epoch.to_string(),
            format!("{:e}", r.lr),
            format!("{:.8}", r.train_loss),
            format!("{:.6}", r.train_acc),
            r.val_acc.map(|v| format!("{v:.6}")).unwrap_or_default(),
        ])?;
    }
    w.flush().ctx(|| format!("writing {}", path.display()))
}
