//! Metrics for time-frequency structure in unfolded activations.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::encoder::{EncoderModel, Site};
use crate::error::{invalid, Result};
use crate::features::{FeatureConfig, LogMelExtractor};
use crate::signal::{synth_sine, synth_square, synth_white_noise, Waveform};
use crate::tensor::ActivationTensor;

/// Rows whose variance falls below this are left out of the kurtosis mean.
pub const DEGENERATE_VARIANCE: f64 = 1e-12;

fn normalizer(x: &ActivationTensor, nf: usize, nt: usize) -> f64 {
    (x.batch() * x.dim() * nf * nt) as f64
}

/// Mean absolute difference between neighbouring time patches, normalized by `B D F' T'`.
pub fn time_differentiation(x: &ActivationTensor) -> Result<f64> {
    let (nf, nt) = x.expect_grid()?;
    if nt < 2 {
        return Err(invalid(format!("time differentiation needs T' >= 2, got {nt}")));
    }
    let total: f64 = x
        .data()
        .chunks_exact(nt)
        .map(|row| {
            row.windows(2)
                .map(|w| (w[0] as f64 - w[1] as f64).abs())
                .sum::<f64>()
        })
        .sum();
    Ok(total / normalizer(x, nf, nt))
}

/// Mean absolute difference between neighbouring frequency patches, normalized by `B D F' T'`.
pub fn freq_differentiation(x: &ActivationTensor) -> Result<f64> {
    let (nf, nt) = x.expect_grid()?;
    if nf < 2 {
        return Err(invalid(format!("frequency differentiation needs F' >= 2, got {nf}")));
    }
    let total: f64 = x
        .data()
        .chunks_exact(nf * nt)
        .map(|plane| {
            plane
                .chunks_exact(nt)
                .zip(plane.chunks_exact(nt).skip(1))
                .map(|(lo, hi)| {
                    lo.iter()
                        .zip(hi)
                        .map(|(a, b)| (*a as f64 - *b as f64).abs())
                        .sum::<f64>()
                })
                .sum::<f64>()
        })
        .sum();
    Ok(total / normalizer(x, nf, nt))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Kurtosis {
    Value(f64),
    /// Every row had (near) zero variance.
    Degenerate,
}

impl Kurtosis {
    pub fn value(self) -> Option<f64> {
        match self {
            Kurtosis::Value(v) => Some(v),
            Kurtosis::Degenerate => None,
        }
    }
}

impl std::fmt::Display for Kurtosis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Kurtosis::Value(v) => write!(f, "{v}"),
            Kurtosis::Degenerate => write!(f, "degenerate"),
        }
    }
}

/// Excess kurtosis (population moments) of one sequence, `None` if degenerate.
pub fn excess_kurtosis(values: impl Iterator<Item = f64> + Clone) -> Option<f64> {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    let (m2, m4) = values.fold((0.0, 0.0), |(m2, m4), v| {
        let c = (v - mean) * (v - mean);
        (m2 + c, m4 + c * c)
    });
    let (m2, m4) = (m2 / n, m4 / n);
    (m2 >= DEGENERATE_VARIANCE).then(|| m4 / (m2 * m2) - 3.0)
}

/// Excess kurtosis along time for every `(b, d, f)` row, averaged over non-degenerate rows.
pub fn kurtosis_metric(x: &ActivationTensor) -> Result<Kurtosis> {
    let (_, nt) = x.expect_grid()?;
    if nt < 4 {
        return Err(invalid(format!("kurtosis needs T' >= 4, got {nt}")));
    }
    let (sum, count) = x
        .data()
        .chunks_exact(nt)
        .filter_map(|row| excess_kurtosis(row.iter().map(|&v| v as f64)))
        .fold((0.0, 0usize), |(s, c), k| (s + k, c + 1));
    Ok(if count == 0 {
        Kurtosis::Degenerate
    } else {
        Kurtosis::Value(sum / count as f64)
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InputLabel {
    Sine,
    Pulse,
    Noise,
    Custom,
}

impl std::fmt::Display for InputLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            InputLabel::Sine => "sine",
            InputLabel::Pulse => "pulse",
            InputLabel::Noise => "noise",
            InputLabel::Custom => "custom",
        })
    }
}

/// Probe stimuli: 1 kHz sine, 1 Hz square, white Gaussian noise; 5 s each.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TestSignal {
    Sine,
    Square,
    Noise { seed: u64 },
}

pub const PROBE_DURATION_S: f64 = 5.0;
pub const PROBE_AMPLITUDE: f64 = 0.5;

impl TestSignal {
    pub fn label(self) -> InputLabel {
        match self {
            TestSignal::Sine => InputLabel::Sine,
            TestSignal::Square => InputLabel::Pulse,
            TestSignal::Noise { .. } => InputLabel::Noise,
        }
    }

    pub fn synthesize(self, sample_rate_hz: u32) -> Result<Waveform> {
        match self {
            TestSignal::Sine => synth_sine(1000.0, PROBE_AMPLITUDE, PROBE_DURATION_S, sample_rate_hz),
            TestSignal::Square => synth_square(1.0, PROBE_AMPLITUDE, PROBE_DURATION_S, sample_rate_hz),
            TestSignal::Noise { seed } => {
                synth_white_noise(PROBE_AMPLITUDE, PROBE_DURATION_S, sample_rate_hz, seed)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeRecord {
    pub site: Site,
    pub time_diff: f64,
    pub freq_diff: f64,
    pub kurtosis: Kurtosis,
}

impl ProbeRecord {
    pub fn measure(site: Site, x: &ActivationTensor) -> Result<Self> {
        Ok(Self {
            site,
            time_diff: time_differentiation(x)?,
            freq_diff: freq_differentiation(x)?,
            kurtosis: kurtosis_metric(x)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeReport {
    pub input_label: InputLabel,
    pub embedding: ProbeRecord,
    /// One record per transformer block.
    pub blocks: Vec<ProbeRecord>,
}

impl ProbeReport {
    /// `block,time_diff,freq_diff,kurtosis,input_label`; the embedding row
    /// uses `embedding` in the block column.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("block,time_diff,freq_diff,kurtosis,input_label\n");
        for r in std::iter::once(&self.embedding).chain(&self.blocks) {
            let block = match r.site {
                Site::Embedding => "embedding".to_string(),
                Site::Block(l) => l.to_string(),
            };
            let _ = writeln!(
                out,
                "{block},{},{},{},{}",
                r.time_diff, r.freq_diff, r.kurtosis, self.input_label
            );
        }
        out
    }
}

pub fn run_probe_on(model: &EncoderModel, label: InputLabel, x: &Waveform) -> Result<ProbeReport> {
    let spec = LogMelExtractor::new(model.feature_config())?.extract(x)?;
    let out = model.forward(&[spec], &[])?;
    let embedding = ProbeRecord::measure(Site::Embedding, &out.embedding)?;
    let blocks = out
        .blocks
        .iter()
        .enumerate()
        .map(|(l, t)| ProbeRecord::measure(Site::Block(l), t))
        .collect::<Result<_>>()?;
    Ok(ProbeReport {
        input_label: label,
        embedding,
        blocks,
    })
}

pub fn run_probe(model: &EncoderModel, signal: TestSignal, cfg: &FeatureConfig) -> Result<ProbeReport> {
    if cfg != model.feature_config() {
        return Err(invalid("feature config differs from the one the model was built with"));
    }
    let x = signal.synthesize(cfg.sample_rate_hz)?;
    run_probe_on(model, signal.label(), &x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::{init_model, ModelConfig};
    use approx::assert_abs_diff_eq;

    fn tensor(b: usize, d: usize, f: usize, t: usize, gen: impl Fn(usize, usize, usize, usize) -> f32) -> ActivationTensor {
        let mut data = Vec::with_capacity(b * d * f * t);
        for bb in 0..b {
            for dd in 0..d {
                for ff in 0..f {
                    for tt in 0..t {
                        data.push(gen(bb, dd, ff, tt));
                    }
                }
            }
        }
        ActivationTensor::unfolded(data, b, d, f, t).unwrap()
    }

    #[test]
    fn ramp_time_diff() {
        let x = tensor(1, 1, 1, 4, |_, _, _, t| t as f32);
        assert_abs_diff_eq!(time_differentiation(&x).unwrap(), 0.75, epsilon = 1e-12);
    }

    #[test]
    fn constant_axes_give_zero() {
        let along_time = tensor(2, 3, 4, 5, |b, d, f, _| (b + 2 * d + 3 * f) as f32);
        assert_eq!(time_differentiation(&along_time).unwrap(), 0.0);
        assert!(freq_differentiation(&along_time).unwrap() > 0.0);
        let along_freq = tensor(2, 3, 4, 5, |b, d, _, t| (b + d + t * t) as f32);
        assert_eq!(freq_differentiation(&along_freq).unwrap(), 0.0);
        assert!(time_differentiation(&along_freq).unwrap() > 0.0);
    }

    #[test]
    fn transpose_symmetry() {
        let x = tensor(2, 2, 3, 6, |b, d, f, t| ((b * 31 + d * 17 + f * 7 + t * t * 3) % 11) as f32);
        let xt = x.transpose_grid().unwrap();
        assert_abs_diff_eq!(
            freq_differentiation(&x).unwrap(),
            time_differentiation(&xt).unwrap(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn axis_length_preconditions() {
        let x = tensor(1, 1, 1, 3, |_, _, _, t| t as f32);
        assert!(freq_differentiation(&x).is_err());
        assert!(kurtosis_metric(&x).is_err());
        let y = tensor(1, 1, 2, 1, |_, _, f, _| f as f32);
        assert!(time_differentiation(&y).is_err());
    }

    #[test]
    fn sine_row_kurtosis() {
        let n = 4096;
        let x = tensor(1, 1, 1, n, |_, _, _, t| {
            (2.0 * std::f64::consts::PI * t as f64 / n as f64).sin() as f32
        });
        let k = kurtosis_metric(&x).unwrap().value().unwrap();
        assert_abs_diff_eq!(k, -1.5, epsilon = 0.01);
    }

    #[test]
    fn constant_is_degenerate() {
        let x = tensor(1, 2, 2, 8, |_, _, _, _| 3.0);
        assert_eq!(kurtosis_metric(&x).unwrap(), Kurtosis::Degenerate);
        // degenerate rows are ignored when others exist
        let mixed = tensor(1, 1, 2, 4, |_, _, f, t| if f == 0 { 1.0 } else { [0.0, 0.0, 0.0, 1.0][t] });
        let k = kurtosis_metric(&mixed).unwrap().value().unwrap();
        // [0,0,0,1]: mean 1/4, m2 = 3/16, m4 = 21/256 -> 21/9 - 3
        assert_abs_diff_eq!(k, 21.0 / 9.0 - 3.0, epsilon = 1e-9);
    }

    #[test]
    fn scale_equivariance() {
        let x = tensor(1, 3, 4, 9, |_, d, f, t| ((d * 5 + f * 3 + t * t) % 7) as f32 - 2.5);
        let y = tensor(1, 3, 4, 9, |_, d, f, t| 4.0 * (((d * 5 + f * 3 + t * t) % 7) as f32 - 2.5));
        assert_abs_diff_eq!(
            4.0 * time_differentiation(&x).unwrap(),
            time_differentiation(&y).unwrap(),
            epsilon = 1e-9
        );
        assert_abs_diff_eq!(
            4.0 * freq_differentiation(&x).unwrap(),
            freq_differentiation(&y).unwrap(),
            epsilon = 1e-9
        );
        assert_abs_diff_eq!(
            kurtosis_metric(&x).unwrap().value().unwrap(),
            kurtosis_metric(&y).unwrap().value().unwrap(),
            epsilon = 1e-9
        );
    }

    #[test]
    fn report_layout_and_csv() {
        let cfg = ModelConfig {
            embed_dim: 8,
            num_blocks: 3,
            num_heads: 2,
            mlp_hidden: 8,
            num_classes: 2,
            ..ModelConfig::default()
        };
        let f = FeatureConfig::default();
        let m = init_model(&cfg, &f).unwrap();
        let r = run_probe(&m, TestSignal::Sine, &f).unwrap();
        assert_eq!(r.blocks.len(), 3);
        assert_eq!(r, run_probe(&m, TestSignal::Sine, &f).unwrap());
        let csv = r.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "block,time_diff,freq_diff,kurtosis,input_label");
        assert_eq!(lines.len(), 5);
        assert!(lines[1].starts_with("embedding,"));
        assert!(lines[4].starts_with("2,") && lines[4].ends_with(",sine"));
    }
}
