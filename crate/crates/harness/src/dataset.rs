//! Synthetic labelled corpus.
//!
//! Each class is a fixed set of amplitude-modulated low tones; every clip
//! also carries random high-band tones shared by all classes and a low-passed
//! ambient noise bed whose level varies from clip to clip. The class evidence
//! sits entirely below the channel cutoff and the tonal nuisance entirely
//! above it.

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use tfish_core::signal::{design_butterworth_lowpass, gaussian_samples, snr_gain};
use tfish_core::{wav, Waveform};

use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetSpec {
    pub num_classes: usize,
    pub clips_per_class: usize,
    pub train_fraction: f64,
    pub duration_s: f64,
    pub sample_rate_hz: u32,
    pub tones_per_class: usize,
    /// Class tones are drawn from this band.
    pub tone_band_hz: [f64; 2],
    /// Per-class amplitude-modulation rates are drawn from this range.
    pub am_rate_hz: [f64; 2],
    pub am_depth: f64,
    pub tone_amplitude: f64,
    /// Shared nuisance content lives in this band.
    pub distractor_band_hz: [f64; 2],
    /// Upper bound; each clip carries a random number of distractor tones up to this.
    pub distractor_tones: usize,
    pub distractor_amplitude: f64,
    /// Per-clip tone-to-ambient power ratio range in dB.
    pub ambient_snr_db: [f64; 2],
    /// The ambient bed is white noise low-passed at this frequency.
    pub ambient_cutoff_hz: f64,
    pub ambient_order: usize,
    /// Tones must stay strictly below and distractors strictly above this.
    pub cutoff_hz: f64,
    pub seed: u64,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        Self {
            num_classes: 10,
            clips_per_class: 40,
            train_fraction: 0.75,
            duration_s: 5.0,
            sample_rate_hz: 16_000,
            tones_per_class: 3,
            tone_band_hz: [100.0, 600.0],
            am_rate_hz: [0.5, 4.0],
            am_depth: 0.8,
            tone_amplitude: 0.1,
            distractor_band_hz: [2000.0, 6000.0],
            distractor_tones: 3,
            distractor_amplitude: 0.05,
            ambient_snr_db: [10.0, 30.0],
            ambient_cutoff_hz: 600.0,
            ambient_order: 4,
            cutoff_hz: 1000.0,
            seed: 0,
        }
    }
}

impl DatasetSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(HarnessError::Config(m));
        if self.num_classes < 2 || self.clips_per_class == 0 || self.tones_per_class == 0 {
            return bad("need >= 2 classes, >= 1 clip per class and >= 1 tone per class".into());
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return bad(format!("train fraction {} outside (0, 1)", self.train_fraction));
        }
        let [lo, hi] = self.tone_band_hz;
        let [dlo, dhi] = self.distractor_band_hz;
        let nyq = self.sample_rate_hz as f64 / 2.0;
        if !(0.0 < lo && lo < hi && dlo < dhi && dhi < nyq) {
            return bad("tone and distractor bands must be ordered and below Nyquist".into());
        }
        if !(hi < self.cutoff_hz && self.cutoff_hz < dlo) {
            return bad(format!(
                "signature band [{lo}, {hi}] Hz and distractor band [{dlo}, {dhi}] Hz \
                 must sit on either side of the {} Hz cutoff",
                self.cutoff_hz
            ));
        }
        let [ra, rb] = self.am_rate_hz;
        if !(0.0 < ra && ra <= rb) || !(0.0..1.0).contains(&self.am_depth) {
            return bad("invalid amplitude-modulation settings".into());
        }
        let [alo, ahi] = self.ambient_snr_db;
        if !(alo <= ahi && alo.is_finite() && ahi.is_finite())
            || !(1..=4).contains(&self.ambient_order)
            || !(self.ambient_cutoff_hz > 0.0 && self.ambient_cutoff_hz < nyq)
        {
            return bad("invalid ambient settings".into());
        }
        let peak = self.tones_per_class as f64 * self.tone_amplitude * 1.3
            + self.distractor_tones as f64 * self.distractor_amplitude;
        if peak > 1.0 {
            return bad(format!("clip peak could reach {peak:.2}, above full scale"));
        }
        tfish_core::signal::sample_count(self.duration_s, self.sample_rate_hz)?;
        Ok(())
    }

    pub fn train_per_class(&self) -> usize {
        ((self.clips_per_class as f64 * self.train_fraction).round() as usize)
            .clamp(1, self.clips_per_class.max(2) - 1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Eval,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Clip {
    pub class: usize,
    pub index: usize,
    pub split: Split,
    pub waveform: Waveform,
}

impl Clip {
    pub fn file_name(&self) -> String {
        format!("c{:02}_{:03}.wav", self.class, self.index)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub spec: DatasetSpec,
    pub signatures: Vec<Vec<f64>>,
    pub am_rates_hz: Vec<f64>,
    pub clips: Vec<Clip>,
}

impl Dataset {
    pub fn split(&self, split: Split) -> impl Iterator<Item = &Clip> {
        self.clips.iter().filter(move |c| c.split == split)
    }

    pub fn train(&self) -> Vec<&Clip> {
        self.split(Split::Train).collect()
    }

    pub fn eval(&self) -> Vec<&Clip> {
        self.split(Split::Eval).collect()
    }
}

fn class_signatures(spec: &DatasetSpec) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x5151_0000);
    let [lo, hi] = spec.tone_band_hz;
    let [ra, rb] = spec.am_rate_hz;
    let mut tones = Vec::with_capacity(spec.num_classes);
    let mut rates = Vec::with_capacity(spec.num_classes);
    for _ in 0..spec.num_classes {
        let mut t: Vec<f64> = (0..spec.tones_per_class)
            .map(|_| rng.random_range(lo..hi))
            .collect();
        t.sort_by(f64::total_cmp);
        tones.push(t);
        rates.push(if ra == rb { ra } else { rng.random_range(ra..rb) });
    }
    (tones, rates)
}

fn clip_seed(spec: &DatasetSpec, class: usize, index: usize) -> u64 {
    spec.seed
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add((class as u64) << 32 | index as u64)
}

fn synth_clip(spec: &DatasetSpec, tones: &[f64], am_rate: f64, class: usize, index: usize) -> Result<Waveform> {
    let n = tfish_core::signal::sample_count(spec.duration_s, spec.sample_rate_hz)?;
    let fs = spec.sample_rate_hz as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(clip_seed(spec, class, index));
    let mut x = vec![0.0f64; n];

    let am_phase = rng.random_range(0.0..2.0 * PI);
    let depth = spec.am_depth;
    for &f0 in tones {
        let f = f0 * rng.random_range(0.99..1.01);
        let a = spec.tone_amplitude * rng.random_range(0.7..1.3);
        let phase = rng.random_range(0.0..2.0 * PI);
        for (i, v) in x.iter_mut().enumerate() {
            let t = i as f64 / fs;
            let env = (1.0 + depth * (2.0 * PI * am_rate * t + am_phase).sin()) / (1.0 + depth);
            *v += a * env * (2.0 * PI * f * t + phase).sin();
        }
    }
    add_ambient(spec, &mut x, &mut rng)?;
    let [dlo, dhi] = spec.distractor_band_hz;
    let n_distractors = rng.random_range(0..=spec.distractor_tones);
    for _ in 0..n_distractors {
        let f = rng.random_range(dlo..dhi);
        let a = spec.distractor_amplitude * rng.random_range(0.0..1.0);
        let rate = rng.random_range(spec.am_rate_hz[0]..=spec.am_rate_hz[1]);
        let (phase, env_phase) = (rng.random_range(0.0..2.0 * PI), rng.random_range(0.0..2.0 * PI));
        for (i, v) in x.iter_mut().enumerate() {
            let t = i as f64 / fs;
            let env = (1.0 + depth * (2.0 * PI * rate * t + env_phase).sin()) / (1.0 + depth);
            *v += a * env * (2.0 * PI * f * t + phase).sin();
        }
    }
    // stored clips are f32; keep the in-memory copy identical
    let x = x.into_iter().map(|v| v as f32 as f64).collect();
    Ok(Waveform::new(x, spec.sample_rate_hz)?)
}

fn add_ambient(spec: &DatasetSpec, x: &mut [f64], rng: &mut ChaCha8Rng) -> Result<()> {
    let [lo, hi] = spec.ambient_snr_db;
    let snr_db = if lo == hi { lo } else { rng.random_range(lo..hi) };
    let seed = rng.random::<u64>();
    let lp = design_butterworth_lowpass(spec.ambient_order, spec.ambient_cutoff_hz, spec.sample_rate_hz)?;
    let bed = lp.filter_samples(&gaussian_samples(x.len(), 1.0, seed));
    let power = |v: &[f64]| v.iter().map(|s| s * s).sum::<f64>() / v.len() as f64;
    let g = snr_gain(power(x), power(&bed), snr_db)?;
    for (v, b) in x.iter_mut().zip(&bed) {
        *v += g * b;
    }
    Ok(())
}

/// Deterministic corpus with a per-class stratified train/eval split.
pub fn gen_dataset(spec: &DatasetSpec) -> Result<Dataset> {
    spec.validate()?;
    let (signatures, am_rates_hz) = class_signatures(spec);
    let n_train = spec.train_per_class();
    let jobs: Vec<(usize, usize)> = (0..spec.num_classes)
        .flat_map(|c| (0..spec.clips_per_class).map(move |i| (c, i)))
        .collect();
    let clips = jobs
        .par_iter()
        .map(|&(class, index)| {
            Ok(Clip {
                class,
                index,
                split: if index < n_train { Split::Train } else { Split::Eval },
                waveform: synth_clip(spec, &signatures[class], am_rates_hz[class], class, index)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset {
        spec: spec.clone(),
        signatures,
        am_rates_hz,
        clips,
    })
}

#[derive(Debug, Serialize, Deserialize)]
struct ManifestClip {
    file: String,
    class: usize,
    index: usize,
    split: Split,
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    spec: DatasetSpec,
    signatures: Vec<Vec<f64>>,
    am_rates_hz: Vec<f64>,
    clips: Vec<ManifestClip>,
}

pub const MANIFEST: &str = "dataset.json";

impl Dataset {
    /// Writes `dataset.json` plus one 32-bit float WAV per clip under `clips/`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        let clip_dir = dir.join("clips");
        fs::create_dir_all(&clip_dir)?;
        self.clips
            .par_iter()
            .map(|c| Ok(wav::write_f32(clip_dir.join(c.file_name()), &c.waveform)?))
            .collect::<Result<Vec<()>>>()?;
        let manifest = Manifest {
            spec: self.spec.clone(),
            signatures: self.signatures.clone(),
            am_rates_hz: self.am_rates_hz.clone(),
            clips: self
                .clips
                .iter()
                .map(|c| ManifestClip {
                    file: format!("clips/{}", c.file_name()),
                    class: c.class,
                    index: c.index,
                    split: c.split,
                })
                .collect(),
        };
        fs::write(dir.join(MANIFEST), serde_json::to_string_pretty(&manifest)?)?;
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let path: PathBuf = dir.join(MANIFEST);
        let text = fs::read_to_string(&path)
            .map_err(|e| HarnessError::Config(format!("cannot read {}: {e}", path.display())))?;
        let manifest: Manifest = serde_json::from_str(&text)?;
        let clips = manifest
            .clips
            .par_iter()
            .map(|c| {
                Ok(Clip {
                    class: c.class,
                    index: c.index,
                    split: c.split,
                    waveform: wav::read(dir.join(&c.file))?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            spec: manifest.spec,
            signatures: manifest.signatures,
            am_rates_hz: manifest.am_rates_hz,
            clips,
        })
    }
}
