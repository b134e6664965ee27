//! Waveform synthesis, Butterworth low-pass design and the low-pass + noise
//! channel used to simulate the fiber-optic target domain.
//!
//! Filters are designed from the analog Butterworth prototype with a
//! prewarped bilinear transform and evaluated as a cascade of second-order
//! sections in direct form II transposed.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// A mono clip of real samples at a fixed integer sample rate.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    samples: Vec<f64>,
    sample_rate_hz: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate_hz: u32) -> Result<Self> {
        if sample_rate_hz == 0 {
            return Err(invalid("sample rate must be positive"));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(invalid(format!("sample {i} is not finite")));
        }
        Ok(Self {
            samples,
            sample_rate_hz,
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn sample_rate_hz(&self) -> u32 {
        self.sample_rate_hz
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate_hz as f64
    }

    /// Mean of squared samples over the whole clip.
    pub fn mean_power(&self) -> f64 {
        mean_power(&self.samples)
    }
}

pub(crate) fn mean_power(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64
}

/// Number of samples for `duration_s` at `sample_rate_hz`; the product must be integral.
pub fn sample_count(duration_s: f64, sample_rate_hz: u32) -> Result<usize> {
    if sample_rate_hz == 0 {
        return Err(invalid("sample rate must be positive"));
    }
    if !(duration_s.is_finite() && duration_s > 0.0) {
        return Err(invalid(format!("duration must be positive, got {duration_s}")));
    }
    let exact = duration_s * sample_rate_hz as f64;
    let n = exact.round();
    if (exact - n).abs() > 1e-6 {
        return Err(invalid(format!(
            "duration {duration_s} s is not an integral number of samples at {sample_rate_hz} Hz"
        )));
    }
    Ok(n as usize)
}

fn nyquist(sample_rate_hz: u32) -> f64 {
    sample_rate_hz as f64 / 2.0
}

pub fn synth_sine(
    freq_hz: f64,
    amplitude: f64,
    duration_s: f64,
    sample_rate_hz: u32,
) -> Result<Waveform> {
    let n = sample_count(duration_s, sample_rate_hz)?;
    if !(freq_hz > 0.0 && freq_hz < nyquist(sample_rate_hz)) {
        return Err(invalid(format!(
            "sine frequency {freq_hz} Hz outside (0, {}) Hz",
            nyquist(sample_rate_hz)
        )));
    }
    let w = 2.0 * PI * freq_hz / sample_rate_hz as f64;
    let samples = (0..n).map(|i| amplitude * (w * i as f64).sin()).collect();
    Waveform::new(samples, sample_rate_hz)
}

/// 50% duty square wave starting high at phase zero.
pub fn synth_square(
    freq_hz: f64,
    amplitude: f64,
    duration_s: f64,
    sample_rate_hz: u32,
) -> Result<Waveform> {
    let n = sample_count(duration_s, sample_rate_hz)?;
    if !(freq_hz > 0.0 && freq_hz.is_finite()) {
        return Err(invalid(format!("square frequency must be positive, got {freq_hz}")));
    }
    let cycles_per_sample = freq_hz / sample_rate_hz as f64;
    let samples = (0..n)
        .map(|i| {
            if (cycles_per_sample * i as f64).fract() < 0.5 {
                amplitude
            } else {
                -amplitude
            }
        })
        .collect();
    Waveform::new(samples, sample_rate_hz)
}

/// Seeded i.i.d. zero-mean Gaussian samples.
pub fn gaussian_samples(n: usize, std_dev: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            std_dev * z
        })
        .collect()
}

pub fn synth_white_noise(
    std_dev: f64,
    duration_s: f64,
    sample_rate_hz: u32,
    seed: u64,
) -> Result<Waveform> {
    if !(std_dev >= 0.0 && std_dev.is_finite()) {
        return Err(invalid(format!("noise std dev must be >= 0, got {std_dev}")));
    }
    let n = sample_count(duration_s, sample_rate_hz)?;
    Waveform::new(gaussian_samples(n, std_dev, seed), sample_rate_hz)
}

pub fn synth_silence(duration_s: f64, sample_rate_hz: u32) -> Result<Waveform> {
    let n = sample_count(duration_s, sample_rate_hz)?;
    Waveform::new(vec![0.0; n], sample_rate_hz)
}

/// One second-order section, `a0` normalized to 1.
///
/// Transfer function `(b0 + b1 z^-1 + b2 z^-2) / (1 + a1 z^-1 + a2 z^-2)`.
/// First-order sections carry `b2 = a2 = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Biquad {
    pub b0: f64,
    pub b1: f64,
    pub b2: f64,
    pub a1: f64,
    pub a2: f64,
}

impl Biquad {
    fn response(&self, z_inv: Complex64) -> Complex64 {
        let z_inv2 = z_inv * z_inv;
        let num = self.b0 + self.b1 * z_inv + self.b2 * z_inv2;
        let den = 1.0 + self.a1 * z_inv + self.a2 * z_inv2;
        num / den
    }

    /// Roots of `z^2 + a1 z + a2` (one root for a first-order section).
    pub fn poles(&self) -> Vec<Complex64> {
        if self.a2 == 0.0 {
            return vec![Complex64::new(-self.a1, 0.0)];
        }
        let disc = Complex64::new(self.a1 * self.a1 - 4.0 * self.a2, 0.0).sqrt();
        vec![(-self.a1 + disc) / 2.0, (-self.a1 - disc) / 2.0]
    }
}

/// Cascaded second-order-section IIR filter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IirFilter {
    pub sections: Vec<Biquad>,
    pub order: usize,
    pub cutoff_hz: f64,
    pub sample_rate_hz: u32,
}

pub const MAX_BUTTERWORTH_ORDER: usize = 4;

/// Digital Butterworth low-pass of order 1..=4 with its -3 dB point at `cutoff_hz`.
pub fn design_butterworth_lowpass(
    order: usize,
    cutoff_hz: f64,
    sample_rate_hz: u32,
) -> Result<IirFilter> {
    if !(1..=MAX_BUTTERWORTH_ORDER).contains(&order) {
        return Err(invalid(format!("filter order {order} outside [1, 4]")));
    }
    if sample_rate_hz == 0 {
        return Err(invalid("sample rate must be positive"));
    }
    if !(cutoff_hz > 0.0 && cutoff_hz < nyquist(sample_rate_hz)) {
        return Err(invalid(format!(
            "cutoff {cutoff_hz} Hz outside (0, {}) Hz",
            nyquist(sample_rate_hz)
        )));
    }
    let fs = sample_rate_hz as f64;
    let two_fs = 2.0 * fs;
    // prewarped analog cutoff so the digital -3 dB point lands on cutoff_hz
    let wc = two_fs * (PI * cutoff_hz / fs).tan();
    let bilinear = |s: Complex64| (two_fs + s) / (two_fs - s);

    let n = order as f64;
    let mut sections = Vec::with_capacity(order.div_ceil(2));
    // conjugate pairs: take the upper-half-plane member of each pair
    for k in 0..order / 2 {
        let theta = PI * (2.0 * k as f64 + n + 1.0) / (2.0 * n);
        let p = wc * Complex64::from_polar(1.0, theta);
        let z = bilinear(p);
        let a1 = -2.0 * z.re;
        let a2 = z.norm_sqr();
        let gain = (1.0 + a1 + a2) / 4.0;
        sections.push(Biquad {
            b0: gain,
            b1: 2.0 * gain,
            b2: gain,
            a1,
            a2,
        });
    }
    if order % 2 == 1 {
        let z = bilinear(Complex64::new(-wc, 0.0)).re;
        let gain = (1.0 - z) / 2.0;
        sections.push(Biquad {
            b0: gain,
            b1: gain,
            b2: 0.0,
            a1: -z,
            a2: 0.0,
        });
    }
    Ok(IirFilter {
        sections,
        order,
        cutoff_hz,
        sample_rate_hz,
    })
}

impl IirFilter {
    pub fn poles(&self) -> Vec<Complex64> {
        self.sections.iter().flat_map(Biquad::poles).collect()
    }

    pub fn response(&self, freq_hz: f64) -> Complex64 {
        let w = 2.0 * PI * freq_hz / self.sample_rate_hz as f64;
        let z_inv = Complex64::from_polar(1.0, -w);
        self.sections
            .iter()
            .map(|s| s.response(z_inv))
            .product()
    }

    pub fn magnitude_db(&self, freq_hz: f64) -> f64 {
        20.0 * self.response(freq_hz).norm().log10()
    }

    /// Zero-state cascade evaluation over a raw sample slice.
    pub fn filter_samples(&self, x: &[f64]) -> Vec<f64> {
        let mut y = x.to_vec();
        for s in &self.sections {
            let (mut z1, mut z2) = (0.0, 0.0);
            for v in y.iter_mut() {
                let input = *v;
                let out = s.b0 * input + z1;
                z1 = s.b1 * input - s.a1 * out + z2;
                z2 = s.b2 * input - s.a2 * out;
                *v = out;
            }
        }
        y
    }

    pub fn apply(&self, x: &Waveform) -> Result<Waveform> {
        if x.sample_rate_hz() != self.sample_rate_hz {
            return Err(Error::SampleRateMismatch {
                expected: self.sample_rate_hz,
                actual: x.sample_rate_hz(),
            });
        }
        Waveform::new(self.filter_samples(x.samples()), self.sample_rate_hz)
    }
}

/// Analytic magnitude (dB) of the bilinear Butterworth low-pass.
pub fn butterworth_reference_db(order: usize, cutoff_hz: f64, sample_rate_hz: u32, freq_hz: f64) -> f64 {
    let fs = sample_rate_hz as f64;
    let ratio = (PI * freq_hz / fs).tan() / (PI * cutoff_hz / fs).tan();
    -10.0 * (1.0 + ratio.powi(2 * order as i32)).log10()
}

pub fn apply_filter(filter: &IirFilter, x: &Waveform) -> Result<Waveform> {
    filter.apply(x)
}

/// Gain applied to `noise` so that signal power over scaled-noise power equals `snr_db`.
pub fn snr_gain(signal_power: f64, noise_power: f64, snr_db: f64) -> Result<f64> {
    if !(signal_power > 0.0) {
        return Err(invalid("signal has zero power; SNR is undefined"));
    }
    if !(noise_power > 0.0) {
        return Err(invalid("noise has zero power; SNR is undefined"));
    }
    if !snr_db.is_finite() {
        return Err(invalid(format!("SNR must be finite, got {snr_db}")));
    }
    Ok((signal_power / (noise_power * 10f64.powf(snr_db / 10.0))).sqrt())
}

pub fn mix_at_snr(signal: &Waveform, noise: &Waveform, snr_db: f64) -> Result<Waveform> {
    if signal.sample_rate_hz() != noise.sample_rate_hz() {
        return Err(Error::SampleRateMismatch {
            expected: signal.sample_rate_hz(),
            actual: noise.sample_rate_hz(),
        });
    }
    if signal.len() != noise.len() {
        return Err(Error::ShapeMismatch(format!(
            "signal has {} samples, noise has {}",
            signal.len(),
            noise.len()
        )));
    }
    let g = snr_gain(signal.mean_power(), noise.mean_power(), snr_db)?;
    let mixed = signal
        .samples()
        .iter()
        .zip(noise.samples())
        .map(|(s, n)| s + g * n)
        .collect();
    Waveform::new(mixed, signal.sample_rate_hz())
}

/// Parameters of the simulated target-domain channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorruptionSpec {
    pub order: usize,
    pub cutoff_hz: f64,
    pub snr_db: f64,
    pub noise_seed: u64,
}

impl CorruptionSpec {
    pub fn validate(&self, sample_rate_hz: u32) -> Result<()> {
        if !(1..=MAX_BUTTERWORTH_ORDER).contains(&self.order) {
            return Err(invalid(format!("filter order {} outside [1, 4]", self.order)));
        }
        if !(self.cutoff_hz > 0.0 && self.cutoff_hz < nyquist(sample_rate_hz)) {
            return Err(invalid(format!(
                "cutoff {} Hz outside (0, {}) Hz",
                self.cutoff_hz,
                nyquist(sample_rate_hz)
            )));
        }
        if !self.snr_db.is_finite() {
            return Err(invalid("SNR must be finite"));
        }
        Ok(())
    }
}

/// Low-pass `x`, then add seeded white Gaussian noise at the requested SNR
/// relative to the filtered signal.
pub fn corrupt(x: &Waveform, spec: &CorruptionSpec) -> Result<Waveform> {
    spec.validate(x.sample_rate_hz())?;
    let filter = design_butterworth_lowpass(spec.order, spec.cutoff_hz, x.sample_rate_hz())?;
    let filtered = filter.apply(x)?;
    let noise = Waveform::new(
        gaussian_samples(x.len(), 1.0, spec.noise_seed),
        x.sample_rate_hz(),
    )?;
    mix_at_snr(&filtered, &noise, spec.snr_db)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    const SR: u32 = 16_000;

    #[test]
    fn sine_basics() {
        let s = synth_sine(1000.0, 1.0, 5.0, SR).unwrap();
        assert_eq!(s.len(), 80_000);
        assert_eq!(s.samples()[0], 0.0);
        assert_abs_diff_eq!(s.mean_power(), 0.5, epsilon = 1e-6);

        let q = synth_sine(SR as f64 / 4.0, 1.0, 0.01, SR).unwrap();
        for (i, v) in q.samples().iter().enumerate() {
            let expected = [0.0, 1.0, 0.0, -1.0][i % 4];
            assert_abs_diff_eq!(*v, expected, epsilon = 1e-9);
        }
    }

    #[test]
    fn sine_above_nyquist_rejected() {
        assert!(synth_sine(8000.0, 1.0, 1.0, SR).is_err());
        assert!(synth_sine(9000.0, 1.0, 1.0, SR).is_err());
        assert!(synth_sine(0.0, 1.0, 1.0, SR).is_err());
    }

    #[test]
    fn non_integral_duration_rejected() {
        assert!(sample_count(1.0 / 3.0, SR).is_err());
        assert!(sample_count(0.0, SR).is_err());
        assert_eq!(sample_count(0.5, SR).unwrap(), 8000);
    }

    #[test]
    fn square_basics() {
        let s = synth_square(1.0, 1.0, 5.0, SR).unwrap();
        let x = s.samples();
        let rising = (0..x.len())
            .filter(|&i| x[i] > 0.0 && (i == 0 || x[i - 1] < 0.0))
            .count();
        assert_eq!(rising, 5);
        assert_abs_diff_eq!(s.mean_power(), 1.0, epsilon = 1e-12);

        let one = synth_square(1.0, 1.0, 1.0, SR).unwrap();
        assert!(one.samples()[..8000].iter().all(|&v| v == 1.0));
        assert!(one.samples()[8000..].iter().all(|&v| v == -1.0));

        let amp = synth_square(3.0, 0.25, 1.0, SR).unwrap();
        assert_abs_diff_eq!(amp.mean_power(), 0.0625, epsilon = 1e-12);
    }

    #[test]
    fn white_noise_deterministic_and_unit_variance() {
        let a = synth_white_noise(1.0, 5.0, SR, 7).unwrap();
        let b = synth_white_noise(1.0, 5.0, SR, 7).unwrap();
        assert_eq!(a, b);
        for seed in [0u64, 1, 7, 1234] {
            let x = synth_white_noise(1.0, 5.0, SR, seed).unwrap();
            let n = x.len() as f64;
            let mean = x.samples().iter().sum::<f64>() / n;
            let var = x.samples().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
            // 6-sigma chi-square band for 80000 samples is about +/-0.03
            assert!((var - 1.0).abs() < 0.03, "seed {seed}: var {var}");
        }
        let z = synth_white_noise(0.0, 1.0, SR, 3).unwrap();
        assert!(z.samples().iter().all(|&v| v == 0.0));
        assert!(synth_white_noise(-1.0, 1.0, SR, 3).is_err());
    }

    #[test]
    fn silence_stays_silent_through_filters() {
        let s = synth_silence(5.0, SR).unwrap();
        assert_eq!(s.len(), 80_000);
        assert_eq!(s.mean_power(), 0.0);
        for order in 1..=4 {
            let f = design_butterworth_lowpass(order, 1000.0, SR).unwrap();
            let y = f.apply(&s).unwrap();
            assert!(y.samples().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn butterworth_section_count_and_stability() {
        for order in 1..=4 {
            let f = design_butterworth_lowpass(order, 1000.0, SR).unwrap();
            assert_eq!(f.sections.len(), order.div_ceil(2));
            assert_eq!(f.poles().len(), order);
            for p in f.poles() {
                assert!(p.norm() < 1.0 - 1e-9, "order {order}: pole {p}");
            }
        }
    }

    #[test]
    fn butterworth_half_power_and_rolloff() {
        for order in 1..=4 {
            let f = design_butterworth_lowpass(order, 1000.0, SR).unwrap();
            assert_abs_diff_eq!(f.magnitude_db(1000.0), -3.0103, epsilon = 0.1);
            assert_abs_diff_eq!(f.magnitude_db(0.0), 0.0, epsilon = 1e-9);
        }
        // cutoff far below Nyquist so the bilinear warp is negligible
        let f = design_butterworth_lowpass(4, 200.0, SR).unwrap();
        let expected = -10.0 * (1.0f64 + 2f64.powi(8)).log10();
        assert_abs_diff_eq!(f.magnitude_db(400.0), expected, epsilon = 0.5);
    }

    #[test]
    fn butterworth_rejects_bad_arguments() {
        assert!(design_butterworth_lowpass(0, 1000.0, SR).is_err());
        assert!(design_butterworth_lowpass(5, 1000.0, SR).is_err());
        assert!(design_butterworth_lowpass(2, 0.0, SR).is_err());
        assert!(design_butterworth_lowpass(2, 8000.0, SR).is_err());
    }

    #[test]
    fn apply_filter_checks_rate() {
        let f = design_butterworth_lowpass(2, 1000.0, SR).unwrap();
        let x = synth_sine(100.0, 1.0, 0.1, 8000).unwrap();
        assert!(matches!(
            apply_filter(&f, &x),
            Err(Error::SampleRateMismatch { .. })
        ));
    }

    #[test]
    fn first_order_attenuates_cutoff_sine() {
        let f = design_butterworth_lowpass(1, 1000.0, SR).unwrap();
        let x = synth_sine(1000.0, 1.0, 1.0, SR).unwrap();
        let y = f.apply(&x).unwrap();
        let tail = &y.samples()[8000..];
        let peak = tail.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let expected = 1.0 / 2f64.sqrt();
        assert!((peak - expected).abs() / expected < 0.02, "peak {peak}");
    }

    #[test]
    fn mix_gain_and_measured_snr() {
        let s = synth_white_noise(1.0, 1.0, SR, 1).unwrap();
        let n = synth_white_noise(1.0, 1.0, SR, 2).unwrap();
        let n = Waveform::new(
            n.samples().iter().map(|v| v * (s.mean_power() / n.mean_power()).sqrt()).collect(),
            SR,
        )
        .unwrap();
        assert_abs_diff_eq!(
            snr_gain(s.mean_power(), n.mean_power(), 0.0).unwrap(),
            1.0,
            epsilon = 1e-12
        );

        let g = snr_gain(s.mean_power(), n.mean_power(), -10.0).unwrap();
        let scaled_power = g * g * n.mean_power();
        let ratio_db = 10.0 * (scaled_power / (10.0 * s.mean_power())).log10();
        assert!(ratio_db.abs() < 0.1);

        let mixed = mix_at_snr(&s, &n, -10.0).unwrap();
        let residual: Vec<f64> = mixed
            .samples()
            .iter()
            .zip(s.samples())
            .map(|(m, x)| m - x)
            .collect();
        let measured = 10.0 * (s.mean_power() / mean_power(&residual)).log10();
        assert_abs_diff_eq!(measured, -10.0, epsilon = 0.01);
    }

    #[test]
    fn mix_rejects_zero_power_and_length_mismatch() {
        let s = synth_sine(100.0, 1.0, 1.0, SR).unwrap();
        let z = synth_silence(1.0, SR).unwrap();
        assert!(mix_at_snr(&z, &s, 0.0).is_err());
        assert!(mix_at_snr(&s, &z, 0.0).is_err());
        let short = synth_sine(100.0, 1.0, 0.5, SR).unwrap();
        assert!(matches!(mix_at_snr(&s, &short, 0.0), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn corrupt_is_deterministic_and_rejects_silence() {
        let x = synth_sine(300.0, 0.5, 1.0, SR).unwrap();
        let spec = CorruptionSpec {
            order: 3,
            cutoff_hz: 1000.0,
            snr_db: -5.0,
            noise_seed: 11,
        };
        assert_eq!(corrupt(&x, &spec).unwrap(), corrupt(&x, &spec).unwrap());
        let z = synth_silence(1.0, SR).unwrap();
        assert!(corrupt(&z, &spec).is_err());
    }

    #[test]
    fn corrupt_at_high_snr_is_just_lowpass() {
        let x = synth_white_noise(0.3, 1.0, SR, 5).unwrap();
        let spec = CorruptionSpec {
            order: 2,
            cutoff_hz: 1000.0,
            snr_db: 100.0,
            noise_seed: 9,
        };
        let y = corrupt(&x, &spec).unwrap();
        let lp = design_butterworth_lowpass(2, 1000.0, SR).unwrap().apply(&x).unwrap();
        let err: f64 = y
            .samples()
            .iter()
            .zip(lp.samples())
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt();
        let norm: f64 = lp.samples().iter().map(|v| v * v).sum::<f64>().sqrt();
        // amplitude ratio at 100 dB is 1e-5
        assert!(err / norm < 1e-4, "relative error {}", err / norm);
    }
}
