use super::crnn::{CrnnModel, ScoreVector};
use crate::dsp::LogmelTensor;
use crate::error::{Error, Result};
use crate::fusion::{fuse, FusionWeights};

/// Mean score over one clip's windows of a single band, predicted as one
/// batch in the given order.
pub fn clip_scores(model: &mut CrnnModel, windows: &[&LogmelTensor]) -> Result<Vec<f64>> {
    if windows.is_empty() {
        return Err(Error::Config(format!("no features for band {}", model.band_index)));
    }
    let scores = model.predict_batch(windows)?;
    let mut mean = vec![0.0; model.n_classes];
    for s in &scores {
        for (m, p) in mean.iter_mut().zip(&s.probs) {
            *m += p;
        }
    }
    mean.iter_mut().for_each(|m| *m /= scores.len() as f64);
    Ok(mean)
}

/// Mean window score of every branch for one clip. `windows` holds the
/// clip's features for all bands (any order); the result is indexed by band.
pub fn clip_branch_scores(models: &mut [CrnnModel], windows: &[LogmelTensor]) -> Result<Vec<Vec<f64>>> {
    let mut out = Vec::with_capacity(models.len());
    for (b, model) in models.iter_mut().enumerate() {
        if model.band_index != b {
            return Err(Error::Config(format!("model at position {b} is for band {}", model.band_index)));
        }
        let mine: Vec<&LogmelTensor> = windows.iter().filter(|f| f.band_index == b).collect();
        out.push(clip_scores(model, &mine)?);
    }
    if let Some(f) = windows.iter().find(|f| f.band_index >= models.len()) {
        return Err(Error::Config(format!(
            "feature for band {} but only {} band models",
            f.band_index,
            models.len()
        )));
    }
    Ok(out)
}

/// Fused clip score: per window `Σ ω_i p_i`, then the mean over windows.
/// Both steps are linear, so this equals fusing the per-branch window means.
pub fn predict_clip(models: &mut [CrnnModel], windows: &[LogmelTensor], weights: &FusionWeights) -> Result<ScoreVector> {
    if weights.len() != models.len() {
        return Err(Error::Config(format!(
            "{} fusion weights for {} band models",
            weights.len(),
            models.len()
        )));
    }
    let per_band = clip_branch_scores(models, windows)?;
    let refs: Vec<&[f64]> = per_band.iter().map(|v| v.as_slice()).collect();
    ScoreVector::new(fuse(&refs, weights)?)
}
