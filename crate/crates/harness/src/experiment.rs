//! Baseline-vs-adapted evaluation over corruption grids and ending-block sweeps.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use tfish_core::adaptation::adaptation_interventions;
use tfish_core::container::{Container, Tensor};
use tfish_core::{
    capture_silent_reference, classify, corrupt, AdaptationSpec, CorruptionSpec, EncoderModel,
    LogMelExtractor, LogMelSpectrogram, ModelConfig, SilentReference, Waveform,
};

use crate::dataset::{Clip, Dataset};
use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub model_seed: u64,
    pub snr_db: Option<f64>,
    pub order: Option<usize>,
    pub cutoff_hz: Option<f64>,
    pub ending_block: Option<usize>,
    pub cutoff_bin: Option<usize>,
    pub adapted: bool,
    pub accuracy: f64,
    pub correct: usize,
    pub n_eval: usize,
}

/// Corruption grid; the channel cutoff is fixed across cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub snr_db: Vec<f64>,
    pub orders: Vec<usize>,
    pub cutoff_hz: f64,
    pub noise_seed: u64,
}

impl Default for Grid {
    fn default() -> Self {
        Self {
            snr_db: vec![-5.0, -10.0, -15.0],
            orders: vec![1, 2, 3, 4],
            cutoff_hz: 1000.0,
            noise_seed: 1234,
        }
    }
}

impl Grid {
    pub fn cell(&self, snr_db: f64, order: usize) -> CorruptionSpec {
        CorruptionSpec {
            order,
            cutoff_hz: self.cutoff_hz,
            snr_db,
            noise_seed: self.noise_seed,
        }
    }
}

/// Frozen model, its silent reference and a shared front end.
pub struct Evaluator {
    pub model: EncoderModel,
    pub reference: SilentReference,
    extractor: LogMelExtractor,
}

impl Evaluator {
    pub fn new(model: EncoderModel) -> Result<Self> {
        let reference = capture_silent_reference(&model, model.feature_config())?;
        Self::with_reference(model, reference)
    }

    pub fn with_reference(model: EncoderModel, reference: SilentReference) -> Result<Self> {
        let extractor = LogMelExtractor::new(model.feature_config())?;
        Ok(Self {
            model,
            reference,
            extractor,
        })
    }

    pub fn extractor(&self) -> &LogMelExtractor {
        &self.extractor
    }

    pub fn features(&self, clips: &[&Clip]) -> Result<Vec<LogMelSpectrogram>> {
        clips
            .par_iter()
            .map(|c| Ok(self.extractor.extract(&c.waveform)?))
            .collect()
    }

    /// Features of each clip after the channel; the noise realization depends
    /// on the grid seed and the clip identity only.
    pub fn corrupted_features(
        &self,
        clips: &[&Clip],
        spec: &CorruptionSpec,
    ) -> Result<Vec<LogMelSpectrogram>> {
        clips
            .par_iter()
            .map(|c| {
                let cell = CorruptionSpec {
                    noise_seed: noise_seed_for(spec.noise_seed, c),
                    ..*spec
                };
                Ok(self.extractor.extract(&corrupt(&c.waveform, &cell)?)?)
            })
            .collect()
    }

    /// Predicted class per spectrogram, optionally with band substitution.
    pub fn predict(
        &self,
        specs: &[LogMelSpectrogram],
        adapt: Option<&AdaptationSpec>,
    ) -> Result<Vec<usize>> {
        if let Some(a) = adapt {
            a.validate(&self.model)?;
        }
        let ivs = adapt
            .map(|a| adaptation_interventions(a, &self.reference))
            .unwrap_or_default();
        specs
            .par_iter()
            .map(|s| {
                let out = self.model.forward(std::slice::from_ref(s), &ivs)?;
                Ok(classify(&out.logits[0]))
            })
            .collect()
    }

    fn score(
        &self,
        specs: &[LogMelSpectrogram],
        labels: &[usize],
        adapt: Option<&AdaptationSpec>,
    ) -> Result<(usize, usize)> {
        let pred = self.predict(specs, adapt)?;
        let correct = pred.iter().zip(labels).filter(|(p, l)| p == l).count();
        Ok((correct, labels.len()))
    }

    fn check_trained(&self) -> Result<()> {
        if !self.model.head_trained() {
            return Err(tfish_core::Error::UntrainedHead.into());
        }
        Ok(())
    }

    /// Accuracy on the clean eval split, no adaptation.
    pub fn clean_accuracy(&self, dataset: &Dataset) -> Result<ResultRow> {
        self.check_trained()?;
        let eval = dataset.eval();
        let labels: Vec<usize> = eval.iter().map(|c| c.class).collect();
        let (correct, n) = self.score(&self.features(&eval)?, &labels, None)?;
        Ok(self.row(None, None, false, correct, n))
    }

    fn row(
        &self,
        corruption: Option<&CorruptionSpec>,
        adapt: Option<&AdaptationSpec>,
        adapted: bool,
        correct: usize,
        n_eval: usize,
    ) -> ResultRow {
        ResultRow {
            model_seed: self.model.config().seed,
            snr_db: corruption.map(|c| c.snr_db),
            order: corruption.map(|c| c.order),
            cutoff_hz: corruption.map(|c| c.cutoff_hz),
            ending_block: adapt.map(|a| a.ending_block),
            cutoff_bin: adapt.map(|a| a.cutoff_bin),
            adapted,
            accuracy: correct as f64 / n_eval as f64,
            correct,
            n_eval,
        }
    }

    /// Two rows per grid cell (baseline, then adapted), in grid order.
    pub fn run_table(
        &self,
        dataset: &Dataset,
        grid: &Grid,
        adapt: &AdaptationSpec,
    ) -> Result<Vec<ResultRow>> {
        self.check_trained()?;
        adapt.validate(&self.model)?;
        let eval = dataset.eval();
        let labels: Vec<usize> = eval.iter().map(|c| c.class).collect();
        let mut rows = Vec::with_capacity(2 * grid.snr_db.len() * grid.orders.len());
        for &snr in &grid.snr_db {
            for &order in &grid.orders {
                let cell = grid.cell(snr, order);
                let specs = self.corrupted_features(&eval, &cell)?;
                let (c0, n) = self.score(&specs, &labels, None)?;
                rows.push(self.row(Some(&cell), None, false, c0, n));
                let (c1, n) = self.score(&specs, &labels, Some(adapt))?;
                rows.push(self.row(Some(&cell), Some(adapt), true, c1, n));
            }
        }
        Ok(rows)
    }

    /// One adapted row per ending block `0..L`; everything else in `template` is kept.
    pub fn sweep_ending_block(
        &self,
        dataset: &Dataset,
        corruption: &CorruptionSpec,
        template: &AdaptationSpec,
    ) -> Result<Vec<ResultRow>> {
        self.check_trained()?;
        let eval = dataset.eval();
        let labels: Vec<usize> = eval.iter().map(|c| c.class).collect();
        let specs = self.corrupted_features(&eval, corruption)?;
        (0..self.model.num_blocks())
            .map(|ending_block| {
                let adapt = AdaptationSpec {
                    ending_block,
                    ..template.clone()
                };
                let (c, n) = self.score(&specs, &labels, Some(&adapt))?;
                Ok(self.row(Some(corruption), Some(&adapt), true, c, n))
            })
            .collect()
    }

    /// Baseline row for one corruption cell.
    pub fn baseline(&self, dataset: &Dataset, corruption: &CorruptionSpec) -> Result<ResultRow> {
        self.check_trained()?;
        let eval = dataset.eval();
        let labels: Vec<usize> = eval.iter().map(|c| c.class).collect();
        let specs = self.corrupted_features(&eval, corruption)?;
        let (c, n) = self.score(&specs, &labels, None)?;
        Ok(self.row(Some(corruption), None, false, c, n))
    }
}

fn noise_seed_for(base: u64, clip: &Clip) -> u64 {
    base.wrapping_mul(0xD1B5_4A32_D192_ED03)
        .wrapping_add(((clip.class as u64) << 32) | clip.index as u64)
}

/// Frozen random encoder with a ridge head fitted on the clean train split.
pub fn train_model(
    config: &ModelConfig,
    features: &tfish_core::FeatureConfig,
    dataset: &Dataset,
    ridge_lambda: f64,
) -> Result<EncoderModel> {
    if dataset.spec.num_classes != config.num_classes {
        return Err(HarnessError::Config(format!(
            "dataset has {} classes, model expects {}",
            dataset.spec.num_classes, config.num_classes
        )));
    }
    if dataset.spec.sample_rate_hz != features.sample_rate_hz {
        return Err(HarnessError::Config(format!(
            "dataset is sampled at {} Hz, features expect {} Hz",
            dataset.spec.sample_rate_hz, features.sample_rate_hz
        )));
    }
    let mut model = EncoderModel::new(config, features)?;
    let train = dataset.train();
    let extractor = LogMelExtractor::new(features)?;
    let pooled = train
        .par_iter()
        .map(|c| {
            let spec = extractor.extract(&c.waveform)?;
            Ok(model.forward(&[spec], &[])?.pooled.remove(0))
        })
        .collect::<Result<Vec<_>>>()?;
    let labels: Vec<usize> = train.iter().map(|c| c.class).collect();
    model.train_head_from_pooled(&pooled, &labels, ridge_lambda)?;
    Ok(model)
}

pub fn write_rows(path: impl AsRef<Path>, rows: &[ResultRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_rows_to(out: impl Write, rows: &[ResultRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_rows(path: impl AsRef<Path>) -> Result<Vec<ResultRow>> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<std::result::Result<_, _>>()?)
}

/// Writes one container per requested block with its unfolded `(1, D, F', T')` tensor.
pub fn dump_activations(
    model: &EncoderModel,
    clip: &Waveform,
    blocks: &[usize],
    dir: impl AsRef<Path>,
) -> Result<Vec<std::path::PathBuf>> {
    let dir = dir.as_ref();
    if let Some(&bad) = blocks.iter().find(|&&b| b >= model.num_blocks()) {
        return Err(HarnessError::Config(format!(
            "block {bad} out of range for a {}-block model",
            model.num_blocks()
        )));
    }
    std::fs::create_dir_all(dir)?;
    let spec = LogMelExtractor::new(model.feature_config())?.extract(clip)?;
    let out = model.forward(&[spec], &[])?;
    let (nf, nt) = model.grid();
    blocks
        .iter()
        .map(|&b| {
            let tap = &out.blocks[b];
            let mut c = Container::new(
                "activation",
                serde_json::json!({
                    "block": b,
                    "embed_dim": model.config().embed_dim,
                    "freq_patches": nf,
                    "time_patches": nt,
                }),
            );
            c.fingerprint = Some(model.fingerprint());
            c.push(Tensor::new("activation", tap.dims(), tap.data().to_vec())?);
            let path = dir.join(format!("block_{b:02}.tfsh"));
            c.save(&path)?;
            Ok(path)
        })
        .collect()
}

/// Reads an activation dump back as an unfolded tensor.
pub fn read_activation(path: impl AsRef<Path>) -> Result<tfish_core::ActivationTensor> {
    let c = Container::load(path)?;
    c.expect_kind("activation")?;
    let t = c.tensor("activation")?;
    match t.dims[..] {
        [b, d, f, tt] => Ok(tfish_core::ActivationTensor::unfolded(t.data.clone(), b, d, f, tt)?),
        _ => Err(HarnessError::Config(format!("activation dims {:?} are not 4-d", t.dims))),
    }
}
