use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Frame, filterbank and windowing parameters for Logmel extraction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrogramConfig {
    /// DFT length T. Frames hop by T/2.
    pub fft_size: usize,
    /// Frames per feature window (N).
    pub n_frames: usize,
    /// Mel filters per band (K).
    pub n_mels: usize,
    pub sample_rate_hz: u32,
    /// Added to the mel energy before the natural log.
    pub log_floor: f64,
    /// Hop between consecutive feature windows, in frames.
    pub window_hop_frames: usize,
    /// Multiply each frame by a periodic Hann window before the DFT.
    #[serde(default)]
    pub hann_window: bool,
    /// Keep filters that contain no FFT bin (all-zero rows) instead of
    /// rejecting the band.
    #[serde(default)]
    pub allow_empty_filters: bool,
}

impl Default for SpectrogramConfig {
    fn default() -> Self {
        Self {
            fft_size: 1024,
            n_frames: 60,
            n_mels: 60,
            sample_rate_hz: 44100,
            log_floor: 1e-10,
            window_hop_frames: 30,
            hann_window: false,
            allow_empty_filters: false,
        }
    }
}

impl SpectrogramConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(format!("spectrogram: {msg}")));
        if self.fft_size < 2 || self.fft_size % 2 != 0 {
            return bad("fft_size must be a positive even integer");
        }
        if self.n_frames == 0 {
            return bad("n_frames must be positive");
        }
        if self.n_mels < 2 {
            return bad("n_mels must be at least 2");
        }
        if self.sample_rate_hz == 0 {
            return bad("sample_rate_hz must be positive");
        }
        if !(self.log_floor > 0.0 && self.log_floor.is_finite()) {
            return bad("log_floor must be a small positive number");
        }
        if self.window_hop_frames == 0 {
            return bad("window_hop_frames must be positive");
        }
        Ok(())
    }

    pub fn hop(&self) -> usize {
        self.fft_size / 2
    }

    /// Number of energy bins per frame (m = 1 ..= T/2).
    pub fn n_bins(&self) -> usize {
        self.fft_size / 2
    }

    pub fn nyquist_hz(&self) -> f64 {
        self.sample_rate_hz as f64 / 2.0
    }

    /// Complete T-sample frames in a signal of `n_samples`.
    pub fn frames_in(&self, n_samples: usize) -> usize {
        if n_samples < self.fft_size {
            0
        } else {
            (n_samples - self.fft_size) / self.hop() + 1
        }
    }

    /// Feature windows for a clip of `n_samples`; a trailing partial
    /// window is counted (and zero padded at extraction time).
    pub fn windows_in(&self, n_samples: usize) -> usize {
        let frames = self.frames_in(n_samples);
        if frames <= self.n_frames {
            return 1;
        }
        let extra = frames - self.n_frames;
        extra / self.window_hop_frames + 1 + usize::from(extra % self.window_hop_frames != 0)
    }

    /// Samples needed so window `window_index` is fully backed by data.
    pub fn samples_for_window(&self, window_index: usize) -> usize {
        let last_frame = window_index * self.window_hop_frames + self.n_frames - 1;
        last_frame * self.hop() + self.fft_size
    }
}

/// Ordered cut points f_0 < f_1 < ... < f_Nss in Hz.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BandScheme {
    cut_points_hz: Vec<f64>,
}

impl BandScheme {
    pub fn new(cut_points_hz: Vec<f64>, sample_rate_hz: u32) -> Result<Self> {
        let scheme = Self { cut_points_hz };
        scheme.validate(sample_rate_hz)?;
        Ok(scheme)
    }

    /// The single band (0, f_s/2).
    pub fn whole_band(sample_rate_hz: u32) -> Self {
        Self {
            cut_points_hz: vec![0.0, sample_rate_hz as f64 / 2.0],
        }
    }

    /// (0, inner..., f_s/2) with the inner cut points given in kHz.
    pub fn from_inner_khz(inner_khz: &[f64], sample_rate_hz: u32) -> Result<Self> {
        let mut cuts = Vec::with_capacity(inner_khz.len() + 2);
        cuts.push(0.0);
        cuts.extend(inner_khz.iter().map(|k| k * 1000.0));
        cuts.push(sample_rate_hz as f64 / 2.0);
        Self::new(cuts, sample_rate_hz)
    }

    pub fn validate(&self, sample_rate_hz: u32) -> Result<()> {
        let c = &self.cut_points_hz;
        if c.len() < 2 {
            return Err(Error::Config("band scheme needs at least two cut points".into()));
        }
        if c.iter().any(|f| !f.is_finite()) || c[0] < 0.0 {
            return Err(Error::Config(format!("band scheme has invalid cut points {c:?}")));
        }
        if c.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config(format!("band scheme cut points not strictly increasing: {c:?}")));
        }
        let nyquist = sample_rate_hz as f64 / 2.0;
        if c[c.len() - 1] > nyquist {
            return Err(Error::Config(format!(
                "band scheme upper edge {} Hz exceeds Nyquist {nyquist} Hz",
                c[c.len() - 1]
            )));
        }
        Ok(())
    }

    pub fn cut_points_hz(&self) -> &[f64] {
        &self.cut_points_hz
    }

    pub fn n_bands(&self) -> usize {
        self.cut_points_hz.len() - 1
    }

    pub fn band(&self, i: usize) -> (f64, f64) {
        (self.cut_points_hz[i], self.cut_points_hz[i + 1])
    }

    pub fn bands(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.cut_points_hz.windows(2).map(|w| (w[0], w[1]))
    }

    pub fn inner_cut_points_hz(&self) -> &[f64] {
        &self.cut_points_hz[1..self.cut_points_hz.len() - 1]
    }
}
