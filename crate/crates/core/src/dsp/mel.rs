use super::config::SpectrogramConfig;
use crate::error::{Error, Result};

/// HTK mel scale.
pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// K triangular filters over one frequency band.
///
/// Filter k rises linearly from the centre of filter k-1 to its own centre
/// and falls to the centre of filter k+1; the band edges act as the outer
/// virtual centres. The triangles are sampled at the DFT bin frequencies
/// `m * f_s / T` (m = 1 ..= T/2) and each row is scaled so that its largest
/// sample, at the bin nearest the centre, is exactly 1.
#[derive(Debug, Clone, PartialEq)]
pub struct MelFilterBank {
    pub band_low_hz: f64,
    pub band_high_hz: f64,
    pub center_freqs_hz: Vec<f64>,
    /// `n_filters` rows by `n_bins` columns; column j is bin m = j + 1.
    pub weights: Vec<f64>,
    pub n_filters: usize,
    pub n_bins: usize,
    /// Inclusive column range of the nonzero weights of each row
    /// (`None` for an empty filter).
    supports: Vec<Option<(usize, usize)>>,
}

impl MelFilterBank {
    pub fn new(cfg: &SpectrogramConfig, band_low_hz: f64, band_high_hz: f64) -> Result<Self> {
        cfg.validate()?;
        let nyquist = cfg.nyquist_hz();
        let invalid = |reason: &str| Error::InvalidBand {
            low: band_low_hz,
            high: band_high_hz,
            reason: reason.into(),
        };
        if !(band_low_hz.is_finite() && band_high_hz.is_finite()) {
            return Err(invalid("edges must be finite"));
        }
        if band_high_hz <= band_low_hz {
            return Err(invalid("upper edge must exceed lower edge"));
        }
        if band_low_hz < 0.0 || band_high_hz > nyquist {
            return Err(invalid("edges must lie within [0, f_s/2]"));
        }

        let k = cfg.n_mels;
        let n_bins = cfg.n_bins();
        let mel_lo = hz_to_mel(band_low_hz);
        let mel_hi = hz_to_mel(band_high_hz);
        let step = (mel_hi - mel_lo) / (k + 1) as f64;
        let mut points: Vec<f64> = (0..k + 2).map(|i| mel_to_hz(mel_lo + step * i as f64)).collect();
        // pin the outer points exactly to the band edges
        points[0] = band_low_hz;
        points[k + 1] = band_high_hz;

        let bin_hz = cfg.sample_rate_hz as f64 / cfg.fft_size as f64;
        let mut weights = vec![0.0; k * n_bins];
        let mut supports = Vec::with_capacity(k);
        let mut empty = Vec::new();
        for f in 0..k {
            let (lo, mid, hi) = (points[f], points[f + 1], points[f + 2]);
            let row = &mut weights[f * n_bins..(f + 1) * n_bins];
            let mut support: Option<(usize, usize)> = None;
            for (j, w) in row.iter_mut().enumerate() {
                let hz = (j + 1) as f64 * bin_hz;
                let v = if hz > lo && hz < hi {
                    if hz <= mid {
                        (hz - lo) / (mid - lo)
                    } else {
                        (hi - hz) / (hi - mid)
                    }
                } else {
                    0.0
                };
                if v > 0.0 {
                    *w = v;
                    support = Some(support.map_or((j, j), |(a, _)| (a, j)));
                }
            }
            match support {
                Some((a, b)) => {
                    let peak = row[a..=b].iter().copied().fold(0.0, f64::max);
                    row[a..=b].iter_mut().for_each(|w| *w /= peak);
                }
                None => empty.push(f),
            }
            supports.push(support);
        }
        if !empty.is_empty() && !cfg.allow_empty_filters {
            return Err(Error::DegenerateBand {
                low: band_low_hz,
                high: band_high_hz,
                filters: empty,
            });
        }

        Ok(Self {
            band_low_hz,
            band_high_hz,
            center_freqs_hz: points[1..=k].to_vec(),
            weights,
            n_filters: k,
            n_bins,
            supports,
        })
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.weights[k * self.n_bins..(k + 1) * self.n_bins]
    }

    /// Weight of filter `k` at DFT bin `m` (1-based).
    pub fn get(&self, k: usize, bin_m: usize) -> f64 {
        self.weights[k * self.n_bins + bin_m - 1]
    }

    pub fn support(&self, k: usize) -> Option<(usize, usize)> {
        self.supports[k]
    }
}

/// Free-function form of [`MelFilterBank::new`].
pub fn build_mel_filterbank(cfg: &SpectrogramConfig, band_low_hz: f64, band_high_hz: f64) -> Result<MelFilterBank> {
    MelFilterBank::new(cfg, band_low_hz, band_high_hz)
}
