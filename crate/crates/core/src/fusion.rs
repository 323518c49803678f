//! Score-level fusion `p = Σ ω_i p_i` and the exhaustive simplex search for
//! the weights.

use std::path::Path;

use crate::error::{Error, IoContext, Result};

pub const WEIGHT_SUM_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct FusionWeights {
    weights: Vec<f64>,
}

impl FusionWeights {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::Config("fusion needs at least one weight".into()));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::Config(format!("fusion weights must be non-negative: {weights:?}")));
        }
        let s: f64 = weights.iter().sum();
        if (s - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::Config(format!("fusion weights sum to {s}, not 1")));
        }
        Ok(Self { weights })
    }

    pub fn uniform(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::Config("fusion needs at least one weight".into()));
        }
        Self::new(vec![1.0 / n as f64; n])
    }

    pub fn one_hot(n: usize, j: usize) -> Result<Self> {
        if j >= n {
            return Err(Error::Config(format!("branch {j} out of range for {n} branches")));
        }
        let mut w = vec![0.0; n];
        w[j] = 1.0;
        Self::new(w)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Comma-separated with one decimal per weight when exact, e.g. `0.4,0.2,0.2,0.2`.
    pub fn display(&self) -> String {
        self.weights.iter().map(|w| format_weight(*w)).collect::<Vec<_>>().join(",")
    }
}

pub fn format_weight(w: f64) -> String {
    let r = (w * 10.0).round() / 10.0;
    if (w - r).abs() < 1e-12 {
        if r == 1.0 || r == 0.0 {
            format!("{r:.0}")
        } else {
            format!("{r:.1}")
        }
    } else {
        format!("{w}")
    }
}

/// `Σ ω_i p_i` over branch score vectors of equal length.
pub fn fuse(scores: &[&[f64]], weights: &FusionWeights) -> Result<Vec<f64>> {
    if scores.len() != weights.len() {
        return Err(Error::Shape(format!(
            "{} branch scores for {} fusion weights",
            scores.len(),
            weights.len()
        )));
    }
    let c = scores[0].len();
    if scores.iter().any(|s| s.len() != c) {
        return Err(Error::Shape("branch score vectors differ in length".into()));
    }
    let mut out = vec![0.0; c];
    for (s, &w) in scores.iter().zip(weights.as_slice()) {
        for (o, &p) in out.iter_mut().zip(s.iter()) {
            *o += w * p;
        }
    }
    Ok(out)
}

/// Index of the largest entry, lowest index on ties.
pub fn argmax(p: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in p.iter().enumerate() {
        if v > p[best] {
            best = i;
        }
    }
    best
}

/// Top-1 accuracy.
pub fn accuracy(predictions: &[Vec<f64>], labels: &[usize]) -> Result<f64> {
    if predictions.is_empty() {
        return Err(Error::Metric("accuracy of an empty prediction set".into()));
    }
    if predictions.len() != labels.len() {
        return Err(Error::Metric(format!(
            "{} predictions for {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    let hits = predictions.iter().zip(labels).filter(|(p, &l)| argmax(p) == l).count();
    Ok(hits as f64 / labels.len() as f64)
}

fn grid_units(step: f64) -> Result<usize> {
    if !(step > 0.0 && step <= 1.0) {
        return Err(Error::Search(format!("grid step must be in (0, 1], got {step}")));
    }
    let units = (1.0 / step).round();
    if (units * step - 1.0).abs() > 1e-9 {
        return Err(Error::Search(format!("grid step {step} does not divide 1")));
    }
    Ok(units as usize)
}

/// All weight vectors of `n` non-negative multiples of `step` summing to 1,
/// in ascending lexicographic order.
pub fn simplex_grid(n: usize, step: f64) -> Result<Vec<Vec<f64>>> {
    if n == 0 {
        return Err(Error::Search("grid over zero branches".into()));
    }
    let units = grid_units(step)?;
    let mut out = Vec::new();
    let mut parts = vec![0usize; n];
    fn rec(i: usize, left: usize, units: usize, parts: &mut Vec<usize>, out: &mut Vec<Vec<f64>>) {
        let n = parts.len();
        if i + 1 == n {
            parts[i] = left;
            out.push(parts.iter().map(|&k| k as f64 / units as f64).collect());
            return;
        }
        for k in 0..=left {
            parts[i] = k;
            rec(i + 1, left - k, units, parts, out);
        }
    }
    rec(0, units, units, &mut parts, &mut out);
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FusionSearchResult {
    pub best_weights: FusionWeights,
    pub best_accuracy: f64,
    /// Every grid point in lexicographic order with its accuracy.
    pub grid: Vec<(FusionWeights, f64)>,
}

/// Exhaustive search over [`simplex_grid`]. `branch_scores[i][c]` is the
/// score vector of branch `i` on clip `c`. Ties keep the lexicographically
/// smallest weights.
pub fn grid_search_weights(branch_scores: &[Vec<Vec<f64>>], labels: &[usize], step: f64) -> Result<FusionSearchResult> {
    if branch_scores.is_empty() {
        return Err(Error::Search("no branches to fuse".into()));
    }
    if labels.is_empty() || branch_scores.iter().any(|b| b.is_empty()) {
        return Err(Error::Search("empty validation set".into()));
    }
    if branch_scores.iter().any(|b| b.len() != labels.len()) {
        return Err(Error::Search("branch score counts differ from the label count".into()));
    }
    let n = branch_scores.len();
    let mut grid = Vec::new();
    let mut best: Option<(usize, f64)> = None;
    for (gi, w) in simplex_grid(n, step)?.into_iter().enumerate() {
        let w = FusionWeights::new(w)?;
        let mut fused = Vec::with_capacity(labels.len());
        for c in 0..labels.len() {
            let per: Vec<&[f64]> = branch_scores.iter().map(|b| b[c].as_slice()).collect();
            fused.push(fuse(&per, &w)?);
        }
        let acc = accuracy(&fused, labels)?;
        if best.is_none_or(|(_, a)| acc > a) {
            best = Some((gi, acc));
        }
        grid.push((w, acc));
    }
    let (bi, best_accuracy) = best.expect("grid is never empty");
    Ok(FusionSearchResult {
        best_weights: grid[bi].0.clone(),
        best_accuracy,
        grid,
    })
}

/// Writes `w1,..,wN,accuracy` rows, one per grid point.
pub fn write_surface_csv(path: &Path, result: &FusionSearchResult) -> Result<()> {
    let n = result.best_weights.len();
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::io(format!("creating {}", path.display()), e.into()))?;
    let mut header: Vec<String> = (1..=n).map(|i| format!("w{i}")).collect();
    header.push("accuracy".into());
    w.write_record(&header)?;
    for (weights, acc) in &result.grid {
        let mut row: Vec<String> = weights.as_slice().iter().map(|v| format_weight(*v)).collect();
        row.push(format!("{acc:.6}"));
        w.write_record(&row)?;
    }
    w.flush().ctx(|| format!("writing {}", path.display()))
}
