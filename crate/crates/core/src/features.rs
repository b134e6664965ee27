//! Hann-windowed STFT, HTK mel filterbank and natural-log mel spectrogram.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::signal::Waveform;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureConfig {
    pub sample_rate_hz: u32,
    pub n_fft: usize,
    pub hop: usize,
    pub n_mels: usize,
    pub fmin_hz: f64,
    pub fmax_hz: f64,
    pub target_frames: usize,
    pub log_floor: f64,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            sample_rate_hz: 16_000,
            n_fft: 1024,
            hop: 385,
            n_mels: 128,
            fmin_hz: 0.0,
            fmax_hz: 8000.0,
            target_frames: 208,
            log_floor: 1e-2,
        }
    }
}

impl FeatureConfig {
    pub fn validate(&self) -> Result<()> {
        if self.sample_rate_hz == 0 {
            return Err(invalid("sample rate must be positive"));
        }
        if !self.n_fft.is_power_of_two() || self.n_fft < 2 {
            return Err(invalid(format!("n_fft {} is not a power of two", self.n_fft)));
        }
        if self.hop == 0 || self.hop > self.n_fft {
            return Err(invalid(format!("hop {} must be in [1, n_fft]", self.hop)));
        }
        if self.n_mels == 0 {
            return Err(invalid("n_mels must be positive"));
        }
        if self.target_frames == 0 {
            return Err(invalid("target_frames must be positive"));
        }
        let nyq = self.sample_rate_hz as f64 / 2.0;
        if !(self.fmin_hz >= 0.0 && self.fmin_hz < self.fmax_hz && self.fmax_hz <= nyq) {
            return Err(invalid(format!(
                "mel range [{}, {}] Hz must satisfy 0 <= fmin < fmax <= {nyq}",
                self.fmin_hz, self.fmax_hz
            )));
        }
        if !(self.log_floor > 0.0 && self.log_floor.is_finite()) {
            return Err(invalid("log floor must be positive"));
        }
        Ok(())
    }

    pub fn n_bins(&self) -> usize {
        self.n_fft / 2 + 1
    }

    pub fn floor_value(&self) -> f64 {
        self.log_floor.ln()
    }
}

/// HTK mel scale.
pub fn mel_scale(f_hz: f64) -> Result<f64> {
    if !(f_hz >= 0.0) {
        return Err(invalid(format!("frequency must be non-negative, got {f_hz}")));
    }
    Ok(2595.0 * (1.0 + f_hz / 700.0).log10())
}

pub fn inverse_mel_scale(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// One triangular filter stored as a dense run starting at `first_bin`.
#[derive(Debug, Clone, PartialEq)]
struct FilterRow {
    first_bin: usize,
    weights: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MelFilterbank {
    rows: Vec<FilterRow>,
    n_bins: usize,
    centers_hz: Vec<f64>,
}

impl MelFilterbank {
    pub fn n_mels(&self) -> usize {
        self.rows.len()
    }

    pub fn n_bins(&self) -> usize {
        self.n_bins
    }

    pub fn centers_hz(&self) -> &[f64] {
        &self.centers_hz
    }

    /// Dense `n_mels x n_bins` weight matrix, row-major.
    pub fn dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.rows.len() * self.n_bins];
        for (m, row) in self.rows.iter().enumerate() {
            let base = m * self.n_bins + row.first_bin;
            out[base..base + row.weights.len()].copy_from_slice(&row.weights);
        }
        out
    }

    fn apply(&self, power: &[f64], out: &mut [f64]) {
        for (o, row) in out.iter_mut().zip(&self.rows) {
            *o = row
                .weights
                .iter()
                .zip(&power[row.first_bin..])
                .map(|(w, p)| w * p)
                .sum();
        }
    }
}

/// Triangular filters with centers equally spaced in mel between `fmin` and `fmax`.
pub fn build_mel_filterbank(cfg: &FeatureConfig) -> Result<MelFilterbank> {
    cfg.validate()?;
    let m = cfg.n_mels;
    let lo = mel_scale(cfg.fmin_hz)?;
    let hi = mel_scale(cfg.fmax_hz)?;
    let step = (hi - lo) / (m + 1) as f64;
    let edges_hz: Vec<f64> = (0..m + 2)
        .map(|i| inverse_mel_scale(lo + step * i as f64))
        .collect();
    let n_bins = cfg.n_bins();
    let bin_hz = cfg.sample_rate_hz as f64 / cfg.n_fft as f64;

    let mut rows = Vec::with_capacity(m);
    for i in 0..m {
        let (left, center, right) = (edges_hz[i], edges_hz[i + 1], edges_hz[i + 2]);
        let weight = |k: usize| {
            let f = k as f64 * bin_hz;
            let up = (f - left) / (center - left);
            let down = (right - f) / (right - center);
            up.min(down).max(0.0)
        };
        let nonzero: Vec<usize> = (0..n_bins).filter(|&k| weight(k) > 0.0).collect();
        let (Some(&first), Some(&last)) = (nonzero.first(), nonzero.last()) else {
            return Err(invalid(format!(
                "mel filter {i} (center {center:.1} Hz) covers no FFT bin; \
                 n_mels {m} is too large for n_fft {}",
                cfg.n_fft
            )));
        };
        rows.push(FilterRow {
            first_bin: first,
            weights: (first..=last).map(weight).collect(),
        });
    }
    Ok(MelFilterbank {
        rows,
        n_bins,
        centers_hz: edges_hz[1..=m].to_vec(),
    })
}

/// `n_mels x n_frames` natural-log mel power, row 0 = lowest band.
#[derive(Debug, Clone, PartialEq)]
pub struct LogMelSpectrogram {
    n_mels: usize,
    n_frames: usize,
    values: Vec<f64>,
    mel_centers_hz: Vec<f64>,
}

impl LogMelSpectrogram {
    pub fn new(
        n_mels: usize,
        n_frames: usize,
        values: Vec<f64>,
        mel_centers_hz: Vec<f64>,
    ) -> Result<Self> {
        if values.len() != n_mels * n_frames {
            return Err(Error::ShapeMismatch(format!(
                "{} values for a {n_mels}x{n_frames} spectrogram",
                values.len()
            )));
        }
        if mel_centers_hz.len() != n_mels {
            return Err(Error::ShapeMismatch(format!(
                "{} mel centers for {n_mels} mel rows",
                mel_centers_hz.len()
            )));
        }
        Ok(Self {
            n_mels,
            n_frames,
            values,
            mel_centers_hz,
        })
    }

    pub fn n_mels(&self) -> usize {
        self.n_mels
    }

    pub fn n_frames(&self) -> usize {
        self.n_frames
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, mel: usize, frame: usize) -> f64 {
        self.values[mel * self.n_frames + frame]
    }

    pub fn row(&self, mel: usize) -> &[f64] {
        &self.values[mel * self.n_frames..(mel + 1) * self.n_frames]
    }

    pub fn mel_centers_hz(&self) -> &[f64] {
        &self.mel_centers_hz
    }

    /// Time-averaged value of each mel row.
    pub fn row_means(&self) -> Vec<f64> {
        (0..self.n_mels)
            .map(|m| self.row(m).iter().sum::<f64>() / self.n_frames as f64)
            .collect()
    }
}

/// Reusable front end: window, FFT plan and filterbank for one config.
#[derive(Clone)]
pub struct LogMelExtractor {
    cfg: FeatureConfig,
    filterbank: MelFilterbank,
    window: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for LogMelExtractor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LogMelExtractor").field("cfg", &self.cfg).finish()
    }
}

impl LogMelExtractor {
    pub fn new(cfg: &FeatureConfig) -> Result<Self> {
        let filterbank = build_mel_filterbank(cfg)?;
        let n = cfg.n_fft;
        // periodic Hann
        let window = (0..n)
            .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos())
            .collect();
        let fft = FftPlanner::new().plan_fft_forward(n);
        Ok(Self {
            cfg: cfg.clone(),
            filterbank,
            window,
            fft,
        })
    }

    pub fn config(&self) -> &FeatureConfig {
        &self.cfg
    }

    pub fn filterbank(&self) -> &MelFilterbank {
        &self.filterbank
    }

    /// Log-mel frames for the whole clip, without cropping or padding.
    ///
    /// Frames are centered: the clip is zero-padded by `n_fft / 2` on each
    /// side, giving `1 + len / hop` frames.
    pub fn frames(&self, x: &Waveform) -> Result<LogMelSpectrogram> {
        let cfg = &self.cfg;
        if x.sample_rate_hz() != cfg.sample_rate_hz {
            return Err(Error::SampleRateMismatch {
                expected: cfg.sample_rate_hz,
                actual: x.sample_rate_hz(),
            });
        }
        let n_fft = cfg.n_fft;
        if x.len() < n_fft {
            return Err(invalid(format!(
                "clip of {} samples is shorter than one FFT frame ({n_fft})",
                x.len()
            )));
        }
        let half = n_fft / 2;
        let samples = x.samples();
        let n_frames = 1 + x.len() / cfg.hop;
        let m = cfg.n_mels;
        let floor = cfg.log_floor;

        let mut values = vec![0.0; m * n_frames];
        let mut buf = vec![Complex::new(0.0, 0.0); n_fft];
        let mut scratch = vec![Complex::new(0.0, 0.0); self.fft.get_inplace_scratch_len()];
        let mut power = vec![0.0; cfg.n_bins()];
        let mut mel = vec![0.0; m];
        for frame in 0..n_frames {
            let start = (frame * cfg.hop) as isize - half as isize;
            for (i, (b, w)) in buf.iter_mut().zip(&self.window).enumerate() {
                let idx = start + i as isize;
                let s = if idx >= 0 && (idx as usize) < samples.len() {
                    samples[idx as usize]
                } else {
                    0.0
                };
                *b = Complex::new(s * w, 0.0);
            }
            self.fft.process_with_scratch(&mut buf, &mut scratch);
            for (p, c) in power.iter_mut().zip(&buf) {
                *p = c.norm_sqr();
            }
            self.filterbank.apply(&power, &mut mel);
            for (row, v) in mel.iter().enumerate() {
                values[row * n_frames + frame] = v.max(floor).ln();
            }
        }
        LogMelSpectrogram::new(m, n_frames, values, self.filterbank.centers_hz.clone())
    }

    /// Log-mel spectrogram center-cropped or floor-padded to exactly `target_frames`.
    pub fn extract(&self, x: &Waveform) -> Result<LogMelSpectrogram> {
        let raw = self.frames(x)?;
        Ok(fit_frames(&raw, self.cfg.target_frames, self.cfg.floor_value()))
    }

    /// Spectrogram of an all-zero clip: every entry equals `ln(log_floor)`.
    pub fn silence(&self) -> LogMelSpectrogram {
        let m = self.cfg.n_mels;
        let t = self.cfg.target_frames;
        LogMelSpectrogram {
            n_mels: m,
            n_frames: t,
            values: vec![self.cfg.floor_value(); m * t],
            mel_centers_hz: self.filterbank.centers_hz.clone(),
        }
    }
}

fn fit_frames(raw: &LogMelSpectrogram, target: usize, floor_value: f64) -> LogMelSpectrogram {
    let m = raw.n_mels;
    let have = raw.n_frames;
    let offset = have.saturating_sub(target) / 2;
    let mut values = vec![floor_value; m * target];
    let copy = have.min(target);
    for row in 0..m {
        let src = &raw.values[row * have + offset..row * have + offset + copy];
        values[row * target..row * target + copy].copy_from_slice(src);
    }
    LogMelSpectrogram {
        n_mels: m,
        n_frames: target,
        values,
        mel_centers_hz: raw.mel_centers_hz.clone(),
    }
}

pub fn log_mel(x: &Waveform, cfg: &FeatureConfig) -> Result<LogMelSpectrogram> {
    LogMelExtractor::new(cfg)?.extract(x)
}
