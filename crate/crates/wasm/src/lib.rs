//! wasm-bindgen surface for the static demo page in `www/`.
//!
//! Grids are returned flat and row-major; the page reads their shape from the
//! accessor methods on [`Demo`].

use tfish_core::adaptation::adaptation_interventions;
use tfish_core::probes::ProbeRecord;
use tfish_core::signal::{design_butterworth_lowpass, synth_sine, synth_square, synth_white_noise};
use tfish_core::{
    capture_silent_reference, corrupt, init_model, AdaptationSpec, CorruptionSpec, EncoderModel,
    FeatureConfig, LogMelExtractor, LogMelSpectrogram, ModelConfig, SilentReference, Site, Waveform,
};
use wasm_bindgen::prelude::*;

const DURATION_S: f64 = 5.0;

fn js(e: tfish_core::Error) -> JsError {
    JsError::new(&e.to_string())
}

/// Magnitude response in dB of the channel low-pass at each frequency.
#[wasm_bindgen]
pub fn filter_response_db(
    order: usize,
    cutoff_hz: f64,
    sample_rate_hz: u32,
    freqs_hz: &[f64],
) -> Result<Vec<f64>, JsError> {
    response_db(order, cutoff_hz, sample_rate_hz, freqs_hz).map_err(js)
}

pub fn response_db(
    order: usize,
    cutoff_hz: f64,
    sample_rate_hz: u32,
    freqs_hz: &[f64],
) -> tfish_core::Result<Vec<f64>> {
    let f = design_butterworth_lowpass(order, cutoff_hz, sample_rate_hz)?;
    Ok(freqs_hz.iter().map(|&hz| f.magnitude_db(hz)).collect())
}

/// Test signal by name: `sine` (1 kHz), `square` (1 Hz), `noise`, or
/// `chord` (three low tones plus one high tone).
pub fn test_signal(name: &str, sample_rate_hz: u32, seed: u64) -> tfish_core::Result<Waveform> {
    match name {
        "sine" => synth_sine(1000.0, 0.5, DURATION_S, sample_rate_hz),
        "square" => synth_square(1.0, 0.5, DURATION_S, sample_rate_hz),
        "noise" => synth_white_noise(0.5, DURATION_S, sample_rate_hz, seed),
        "chord" => {
            let mut acc = vec![0.0; tfish_core::signal::sample_count(DURATION_S, sample_rate_hz)?];
            for (f, a) in [(220.0, 0.2), (440.0, 0.15), (660.0, 0.1), (3000.0, 0.1)] {
                let s = synth_sine(f, a, DURATION_S, sample_rate_hz)?;
                acc.iter_mut().zip(s.samples()).for_each(|(x, v)| *x += v);
            }
            Waveform::new(acc, sample_rate_hz)
        }
        other => Err(tfish_core::Error::InvalidArgument(format!("unknown signal {other:?}"))),
    }
}

/// Channel settings for one demo query; `snr_db = None` skips the channel.
#[derive(Debug, Clone, Copy)]
pub struct Channel {
    pub order: usize,
    pub cutoff_hz: f64,
    pub snr_db: Option<f64>,
    pub seed: u64,
}

#[wasm_bindgen]
pub struct Demo {
    model: EncoderModel,
    reference: SilentReference,
    extractor: LogMelExtractor,
}

impl Demo {
    pub fn build(seed: u64) -> tfish_core::Result<Self> {
        let features = FeatureConfig::default();
        let model = init_model(&ModelConfig { seed, ..ModelConfig::default() }, &features)?;
        let reference = capture_silent_reference(&model, &features)?;
        Ok(Self {
            extractor: LogMelExtractor::new(&features)?,
            model,
            reference,
        })
    }

    pub fn features(&self, signal: &str, ch: Channel) -> tfish_core::Result<LogMelSpectrogram> {
        let sr = self.extractor.config().sample_rate_hz;
        let mut x = test_signal(signal, sr, ch.seed)?;
        if let Some(snr_db) = ch.snr_db {
            x = corrupt(
                &x,
                &CorruptionSpec {
                    order: ch.order,
                    cutoff_hz: ch.cutoff_hz,
                    snr_db,
                    noise_seed: ch.seed,
                },
            )?;
        }
        self.extractor.extract(&x)
    }

    /// Unfolded activations at `site`, optionally with band filtering through `ending_block`.
    pub fn activations(
        &self,
        spec: &LogMelSpectrogram,
        site: Site,
        filter: Option<&AdaptationSpec>,
    ) -> tfish_core::Result<tfish_core::ActivationTensor> {
        let ivs = filter
            .map(|a| adaptation_interventions(a, &self.reference))
            .unwrap_or_default();
        let out = self.model.forward(std::slice::from_ref(spec), &ivs)?;
        Ok(match site {
            Site::Embedding => out.embedding,
            Site::Block(l) => out.blocks[l].clone(),
        })
    }

    pub fn model(&self) -> &EncoderModel {
        &self.model
    }

    fn site(&self, block: i32) -> tfish_core::Result<Site> {
        match block {
            -1 => Ok(Site::Embedding),
            b if b >= 0 && (b as usize) < self.model.num_blocks() => Ok(Site::Block(b as usize)),
            b => Err(tfish_core::Error::InvalidArgument(format!("no block {b}"))),
        }
    }

    fn channel(order: usize, cutoff_hz: f64, snr_db: f64, seed: u64) -> Channel {
        Channel {
            order,
            cutoff_hz,
            snr_db: snr_db.is_finite().then_some(snr_db),
            seed,
        }
    }
}

#[wasm_bindgen]
impl Demo {
    /// Randomly initialized encoder for `seed` with its silent reference.
    #[wasm_bindgen(constructor)]
    pub fn new(seed: u64) -> Result<Demo, JsError> {
        Self::build(seed).map_err(js)
    }

    pub fn n_mels(&self) -> usize {
        self.extractor.config().n_mels
    }

    pub fn n_frames(&self) -> usize {
        self.extractor.config().target_frames
    }

    pub fn freq_patches(&self) -> usize {
        self.model.grid().0
    }

    pub fn time_patches(&self) -> usize {
        self.model.grid().1
    }

    pub fn embed_dim(&self) -> usize {
        self.model.config().embed_dim
    }

    pub fn num_blocks(&self) -> usize {
        self.model.num_blocks()
    }

    /// Patch-grid bin mapped from a physical cutoff.
    pub fn cutoff_bin(&self, cutoff_hz: f64) -> Result<usize, JsError> {
        Ok(AdaptationSpec::from_cutoff(&self.model, cutoff_hz, 0).map_err(js)?.cutoff_bin)
    }

    /// Log-mel spectrogram (mel rows x frames) of a test signal after the
    /// channel; a non-finite `snr_db` leaves the signal clean.
    pub fn spectrogram(
        &self,
        signal: &str,
        order: usize,
        cutoff_hz: f64,
        snr_db: f64,
        seed: u64,
    ) -> Result<Vec<f64>, JsError> {
        let s = self
            .features(signal, Self::channel(order, cutoff_hz, snr_db, seed))
            .map_err(js)?;
        Ok(s.values().to_vec())
    }

    /// One embedding dimension of the unfolded activations at `block`
    /// (`-1` for the embedding output), frequency patches x time patches.
    #[allow(clippy::too_many_arguments)]
    pub fn activation_map(
        &self,
        signal: &str,
        order: usize,
        cutoff_hz: f64,
        snr_db: f64,
        seed: u64,
        block: i32,
        dim: usize,
        filtered: bool,
    ) -> Result<Vec<f32>, JsError> {
        let site = self.site(block).map_err(js)?;
        if dim >= self.embed_dim() {
            return Err(JsError::new(&format!("no embedding dimension {dim}")));
        }
        let spec = self
            .features(signal, Self::channel(order, cutoff_hz, snr_db, seed))
            .map_err(js)?;
        let ending = match site {
            Site::Embedding => 0,
            Site::Block(l) => l,
        };
        let adapt = filtered
            .then(|| {
                AdaptationSpec::from_cutoff(&self.model, cutoff_hz, ending).map(|mut a| {
                    a.include_embedding = true;
                    a
                })
            })
            .transpose()
            .map_err(js)?;
        let x = self.activations(&spec, site, adapt.as_ref()).map_err(js)?;
        let (nf, nt) = self.model.grid();
        Ok((0..nf).flat_map(|f| x.time_row(0, dim, f).to_vec()).take(nf * nt).collect())
    }

    /// `[time_diff, freq_diff, kurtosis]` per site, embedding first; kurtosis
    /// is NaN where every row is degenerate.
    pub fn probe(&self, signal: &str, seed: u64) -> Result<Vec<f64>, JsError> {
        let spec = self
            .features(signal, Self::channel(1, 1000.0, f64::NAN, seed))
            .map_err(js)?;
        let out = self.model.forward(&[spec], &[]).map_err(js)?;
        let sites = std::iter::once((Site::Embedding, &out.embedding))
            .chain(out.blocks.iter().enumerate().map(|(l, x)| (Site::Block(l), x)));
        let mut v = Vec::new();
        for (site, x) in sites {
            let r = ProbeRecord::measure(site, x).map_err(js)?;
            v.extend([r.time_diff, r.freq_diff, r.kurtosis.value().unwrap_or(f64::NAN)]);
        }
        Ok(v)
    }
}
