//! Trainingless band filtering inside the encoder.
//!
//! A silent clip is run through the unmodified model once and its unfolded
//! activations are kept as a reference. At adaptation time every patch-grid
//! frequency row at or above the cutoff bin is overwritten with the
//! reference row at each filtered block, so the model sees "nothing" in the
//! band the channel has destroyed.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::container::{Container, Tensor};
use crate::encoder::{EncoderModel, Intervention, Site};
use crate::error::{invalid, Error, Result};
use crate::features::{FeatureConfig, LogMelExtractor, LogMelSpectrogram};
use crate::tensor::ActivationTensor;

/// Nearest mel band to `cutoff_hz` and its patch-grid row `floor(F' * m / M)`.
///
/// Distance is absolute; ties go to the lower band.
pub fn map_cutoff_bin(cutoff_hz: f64, mel_centers_hz: &[f64], freq_patches: usize) -> Result<(usize, usize)> {
    if mel_centers_hz.is_empty() {
        return Err(invalid("mel center table is empty"));
    }
    if freq_patches == 0 {
        return Err(invalid("F' must be at least 1"));
    }
    if !cutoff_hz.is_finite() {
        return Err(invalid("cutoff must be finite"));
    }
    if mel_centers_hz.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(invalid("mel centers must be strictly increasing"));
    }
    // first center at or above the cutoff; the nearest is it or its predecessor
    let hi = mel_centers_hz.partition_point(|&c| c < cutoff_hz);
    let m = match hi {
        0 => 0,
        i if i == mel_centers_hz.len() => i - 1,
        i => {
            let below = cutoff_hz - mel_centers_hz[i - 1];
            let above = mel_centers_hz[i] - cutoff_hz;
            if below <= above {
                i - 1
            } else {
                i
            }
        }
    };
    Ok((m, freq_patches * m / mel_centers_hz.len()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FilterMode {
    /// Replace every row `f >= f'_c`.
    #[default]
    Band,
    /// Replace only row `f == f'_c` (literal single-bin reading).
    SingleBin,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaptationSpec {
    pub cutoff_hz: f64,
    pub cutoff_bin: usize,
    /// Deepest filtered block, inclusive.
    pub ending_block: usize,
    #[serde(default)]
    pub include_embedding: bool,
    #[serde(default)]
    pub mode: FilterMode,
}

impl AdaptationSpec {
    /// Spec whose cutoff bin is mapped from `cutoff_hz` for `model`'s grid.
    pub fn from_cutoff(model: &EncoderModel, cutoff_hz: f64, ending_block: usize) -> Result<Self> {
        let ex = LogMelExtractor::new(model.feature_config())?;
        let (nf, _) = model.grid();
        let (_, bin) = map_cutoff_bin(cutoff_hz, ex.filterbank().centers_hz(), nf)?;
        Ok(Self {
            cutoff_hz,
            cutoff_bin: bin,
            ending_block,
            include_embedding: false,
            mode: FilterMode::Band,
        })
    }

    pub fn with_bin(mut self, cutoff_bin: usize) -> Self {
        self.cutoff_bin = cutoff_bin;
        self
    }

    pub fn validate(&self, model: &EncoderModel) -> Result<()> {
        let (nf, _) = model.grid();
        if self.cutoff_bin > nf {
            return Err(invalid(format!("cutoff bin {} exceeds F' = {nf}", self.cutoff_bin)));
        }
        if self.ending_block >= model.num_blocks() {
            return Err(invalid(format!(
                "ending block {} outside [0, {}]",
                self.ending_block,
                model.num_blocks() - 1
            )));
        }
        Ok(())
    }
}

/// Unfolded activations of the silent clip at every tap of one model.
#[derive(Debug, Clone, PartialEq)]
pub struct SilentReference {
    pub fingerprint: String,
    pub embedding: ActivationTensor,
    pub blocks: Vec<ActivationTensor>,
}

impl SilentReference {
    pub fn at(&self, site: Site) -> Option<&ActivationTensor> {
        match site {
            Site::Embedding => Some(&self.embedding),
            Site::Block(l) => self.blocks.get(l),
        }
    }

    /// Number of stored tensors, including the embedding tap.
    pub fn len(&self) -> usize {
        self.blocks.len() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn to_container(&self) -> Container {
        let mut c = Container::new("silent_reference", json!({ "num_blocks": self.blocks.len() }));
        c.fingerprint = Some(self.fingerprint.clone());
        c.push(Tensor {
            name: "embedding".into(),
            dims: self.embedding.dims(),
            data: self.embedding.data().to_vec(),
        });
        for (l, b) in self.blocks.iter().enumerate() {
            c.push(Tensor {
                name: format!("block.{l}"),
                dims: b.dims(),
                data: b.data().to_vec(),
            });
        }
        c
    }

    pub fn from_container(c: &Container) -> Result<Self> {
        c.expect_kind("silent_reference")?;
        let fingerprint = c
            .fingerprint
            .clone()
            .ok_or_else(|| Error::Format("silent reference without fingerprint".into()))?;
        let n = c.config["num_blocks"]
            .as_u64()
            .ok_or_else(|| Error::Format("missing num_blocks".into()))? as usize;
        let grid = |t: &Tensor| match t.dims[..] {
            [b, d, f, tt] => ActivationTensor::unfolded(t.data.clone(), b, d, f, tt),
            _ => Err(Error::Format(format!("tensor {} is not 4-d", t.name))),
        };
        let embedding = grid(c.tensor("embedding")?)?;
        let blocks = (0..n)
            .map(|l| grid(c.tensor(&format!("block.{l}"))?))
            .collect::<Result<_>>()?;
        Ok(Self {
            fingerprint,
            embedding,
            blocks,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_container().save(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_container(&Container::load(path)?)
    }

    fn check(&self, model: &EncoderModel) -> Result<()> {
        let fp = model.fingerprint();
        if fp != self.fingerprint || self.blocks.len() != model.num_blocks() {
            return Err(Error::StaleReference {
                reference: self.fingerprint.clone(),
                model: fp,
            });
        }
        Ok(())
    }
}

/// Taps of a plain forward pass over the all-floor spectrogram of a silent clip.
pub fn capture_silent_reference(model: &EncoderModel, cfg: &FeatureConfig) -> Result<SilentReference> {
    if cfg != model.feature_config() {
        return Err(invalid("feature config differs from the one the model was built with"));
    }
    let silence = LogMelExtractor::new(cfg)?.silence();
    let out = model.forward(&[silence], &[])?;
    Ok(SilentReference {
        fingerprint: model.fingerprint(),
        embedding: out.embedding,
        blocks: out.blocks,
    })
}

fn check_filter_shapes(x: &ActivationTensor, reference: &ActivationTensor, cutoff_bin: usize) -> Result<(usize, usize)> {
    let (nf, nt) = x.expect_grid()?;
    if reference.batch() != 1 || reference.dim() != x.dim() || reference.grid() != Some((nf, nt)) {
        return Err(Error::ShapeMismatch(format!(
            "reference {:?} is not compatible with activations {:?}",
            reference.dims(),
            x.dims()
        )));
    }
    if cutoff_bin > nf {
        return Err(invalid(format!("cutoff bin {cutoff_bin} exceeds F' = {nf}")));
    }
    Ok((nf, nt))
}

/// Overwrite rows `f >= cutoff_bin` of every item with the reference rows.
pub fn apply_tf_filter(x: &mut ActivationTensor, reference: &ActivationTensor, cutoff_bin: usize) -> Result<()> {
    let (nf, _) = check_filter_shapes(x, reference, cutoff_bin)?;
    for b in 0..x.batch() {
        for d in 0..x.dim() {
            for f in cutoff_bin..nf {
                x.time_row_mut(b, d, f).copy_from_slice(reference.time_row(0, d, f));
            }
        }
    }
    Ok(())
}

/// Overwrite only row `f == bin` (no-op when `bin == F'`).
pub fn apply_single_bin_filter(x: &mut ActivationTensor, reference: &ActivationTensor, bin: usize) -> Result<()> {
    let (nf, _) = check_filter_shapes(x, reference, bin)?;
    if bin < nf {
        for b in 0..x.batch() {
            for d in 0..x.dim() {
                x.time_row_mut(b, d, bin).copy_from_slice(reference.time_row(0, d, bin));
            }
        }
    }
    Ok(())
}

/// Interventions for every filtered site of `adapt`.
pub fn adaptation_interventions<'a>(
    adapt: &'a AdaptationSpec,
    reference: &'a SilentReference,
) -> Vec<Intervention<'a>> {
    let sites = adapt
        .include_embedding
        .then_some(Site::Embedding)
        .into_iter()
        .chain((0..=adapt.ending_block).map(Site::Block));
    sites
        .filter_map(|site| {
            let r = reference.at(site)?;
            let bin = adapt.cutoff_bin;
            Some(match adapt.mode {
                FilterMode::Band => Intervention::new(site, move |x| apply_tf_filter(x, r, bin)),
                FilterMode::SingleBin => {
                    Intervention::new(site, move |x| apply_single_bin_filter(x, r, bin))
                }
            })
        })
        .collect()
}

/// Logits of `model` with band substitution at blocks `0..=ending_block`.
pub fn adapted_forward(
    model: &EncoderModel,
    specs: &[LogMelSpectrogram],
    adapt: &AdaptationSpec,
    reference: &SilentReference,
) -> Result<Vec<Vec<f32>>> {
    reference.check(model)?;
    adapt.validate(model)?;
    let ivs = adaptation_interventions(adapt, reference);
    Ok(model.forward(specs, &ivs)?.logits)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::{init_model, ModelConfig};
    use crate::signal::synth_white_noise;

    fn model() -> EncoderModel {
        let cfg = ModelConfig {
            embed_dim: 16,
            num_blocks: 3,
            mlp_hidden: 32,
            num_classes: 4,
            seed: 3,
            ..ModelConfig::default()
        };
        let mut m = init_model(&cfg, &FeatureConfig::default()).unwrap();
        let w = (0..4 * 16).map(|i| ((i % 7) as f32 - 3.0) * 0.1).collect();
        m.set_head(w, vec![0.0, 0.1, 0.2, 0.3]).unwrap();
        m
    }

    fn noise_spec(seed: u64) -> LogMelSpectrogram {
        let f = FeatureConfig::default();
        let x = synth_white_noise(0.2, 5.0, 16_000, seed).unwrap();
        LogMelExtractor::new(&f).unwrap().extract(&x).unwrap()
    }

    #[test]
    fn mapping_examples() {
        let centers: Vec<f64> = (0..128).map(|i| 50.0 + 60.0 * i as f64).collect();
        assert_eq!(map_cutoff_bin(centers[64], &centers, 8).unwrap(), (64, 4));
        assert_eq!(map_cutoff_bin(1.0, &centers, 8).unwrap(), (0, 0));
        assert_eq!(map_cutoff_bin(1e6, &centers, 8).unwrap(), (127, 7));
        // midpoint tie goes low
        assert_eq!(map_cutoff_bin(80.0, &centers, 8).unwrap().0, 0);
        assert!(map_cutoff_bin(100.0, &[], 8).is_err());
        assert!(map_cutoff_bin(100.0, &[1.0, 1.0], 8).is_err());
        assert!(map_cutoff_bin(100.0, &centers, 0).is_err());
    }

    #[test]
    fn default_cutoff_maps_to_row_two() {
        let m = model();
        let spec = AdaptationSpec::from_cutoff(&m, 1000.0, 2).unwrap();
        assert_eq!(spec.cutoff_bin, 2);
    }

    #[test]
    fn capture_is_deterministic_and_complete() {
        let m = model();
        let f = FeatureConfig::default();
        let a = capture_silent_reference(&m, &f).unwrap();
        let b = capture_silent_reference(&m, &f).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.blocks.len(), 3);
        assert_eq!(a.len(), 4);
        assert_eq!(a.embedding.dims(), vec![1, 16, 8, 13]);
        let other = FeatureConfig { log_floor: 1e-8, ..f };
        assert!(capture_silent_reference(&m, &other).is_err());
    }

    #[test]
    fn filter_rows() {
        let m = model();
        let r = capture_silent_reference(&m, m.feature_config()).unwrap();
        let x = m.forward(&[noise_spec(1), noise_spec(2)], &[]).unwrap().blocks[0].clone();
        let reference = &r.blocks[0];

        let mut same = x.clone();
        apply_tf_filter(&mut same, reference, 8).unwrap();
        assert_eq!(same, x);

        let mut full = x.clone();
        apply_tf_filter(&mut full, reference, 0).unwrap();
        let broadcast = ActivationTensor::stack(&[reference.clone(), reference.clone()]).unwrap();
        assert_eq!(full, broadcast);

        let mut half = x.clone();
        apply_tf_filter(&mut half, reference, 4).unwrap();
        for b in 0..2 {
            for d in 0..16 {
                for f in 0..8 {
                    let expect = if f < 4 { x.time_row(b, d, f) } else { reference.time_row(0, d, f) };
                    assert_eq!(half.time_row(b, d, f), expect);
                }
            }
        }
        assert!(apply_tf_filter(&mut half, reference, 9).is_err());
        assert!(apply_tf_filter(&mut half, &x, 2).is_err());
    }

    #[test]
    fn single_bin_replaces_one_row() {
        let m = model();
        let r = capture_silent_reference(&m, m.feature_config()).unwrap();
        let x = m.forward(&[noise_spec(3)], &[]).unwrap().blocks[1].clone();
        let mut y = x.clone();
        apply_single_bin_filter(&mut y, &r.blocks[1], 5).unwrap();
        for d in 0..16 {
            for f in 0..8 {
                let expect = if f == 5 { r.blocks[1].time_row(0, d, f) } else { x.time_row(0, d, f) };
                assert_eq!(y.time_row(0, d, f), expect);
            }
        }
        let mut z = x.clone();
        apply_single_bin_filter(&mut z, &r.blocks[1], 8).unwrap();
        assert_eq!(z, x);
    }

    #[test]
    fn degenerate_identities() {
        let m = model();
        let r = capture_silent_reference(&m, m.feature_config()).unwrap();
        let specs = [noise_spec(4), noise_spec(5)];
        let plain = m.forward(&specs, &[]).unwrap().logits;

        let ident = AdaptationSpec::from_cutoff(&m, 1000.0, 2).unwrap().with_bin(8);
        assert_eq!(adapted_forward(&m, &specs, &ident, &r).unwrap(), plain);

        let silent_logits = m
            .forward(&[LogMelExtractor::new(m.feature_config()).unwrap().silence()], &[])
            .unwrap()
            .logits[0]
            .clone();
        let all = AdaptationSpec::from_cutoff(&m, 1000.0, 2).unwrap().with_bin(0);
        for l in adapted_forward(&m, &specs, &all, &r).unwrap() {
            assert_eq!(l, silent_logits);
        }
    }

    #[test]
    fn identical_items_stay_identical() {
        let m = model();
        let r = capture_silent_reference(&m, m.feature_config()).unwrap();
        let s = noise_spec(6);
        let adapt = AdaptationSpec::from_cutoff(&m, 1000.0, 1).unwrap();
        let logits = adapted_forward(&m, &[s.clone(), s.clone(), s], &adapt, &r).unwrap();
        assert_eq!(logits[0], logits[1]);
        assert_eq!(logits[1], logits[2]);
    }

    #[test]
    fn stale_reference_rejected() {
        let m = model();
        let r = capture_silent_reference(&m, m.feature_config()).unwrap();
        let other = init_model(
            &ModelConfig { seed: 99, ..m.config().clone() },
            m.feature_config(),
        )
        .unwrap();
        let adapt = AdaptationSpec::from_cutoff(&m, 1000.0, 0).unwrap();
        assert!(matches!(
            adapted_forward(&other, &[noise_spec(7)], &adapt, &r),
            Err(Error::StaleReference { .. })
        ));
        let bad_end = AdaptationSpec { ending_block: 3, ..adapt };
        assert!(adapted_forward(&m, &[noise_spec(7)], &bad_end, &r).is_err());
    }

    #[test]
    fn reference_cache_round_trip() {
        let m = model();
        let r = capture_silent_reference(&m, m.feature_config()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ref.tfsh");
        r.save(&path).unwrap();
        let back = SilentReference::load(&path).unwrap();
        assert_eq!(back, r);
        let c = Container::load(&path).unwrap();
        assert_eq!(c.fingerprint.as_deref(), Some(m.fingerprint().as_str()));
    }
}
