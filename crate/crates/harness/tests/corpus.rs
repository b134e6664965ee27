use rustfft::{num_complex::Complex, FftPlanner};

use tfish_harness::{gen_dataset, DatasetSpec, Split};

fn band_energy(samples: &[f64], fs: f64, lo: f64, hi: f64) -> f64 {
    let mut buf: Vec<Complex<f64>> = samples.iter().map(|&v| Complex::new(v, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(buf.len()).process(&mut buf);
    let df = fs / buf.len() as f64;
    buf[..buf.len() / 2]
        .iter()
        .enumerate()
        .filter(|(k, _)| (lo..=hi).contains(&(*k as f64 * df)))
        .map(|(_, c)| c.norm_sqr())
        .sum()
}

fn small() -> DatasetSpec {
    DatasetSpec {
        num_classes: 4,
        clips_per_class: 4,
        duration_s: 1.0,
        ..DatasetSpec::default()
    }
}

#[test]
fn default_split_is_300_train_100_eval() {
    let spec = DatasetSpec::default();
    assert_eq!(spec.train_per_class() * spec.num_classes, 300);
    assert_eq!((spec.clips_per_class - spec.train_per_class()) * spec.num_classes, 100);
}

#[test]
fn split_is_stratified() {
    let d = gen_dataset(&small()).unwrap();
    for class in 0..4 {
        let n = |s: Split| d.split(s).filter(|c| c.class == class).count();
        assert_eq!((n(Split::Train), n(Split::Eval)), (3, 1));
    }
}

#[test]
fn same_seed_same_clips() {
    assert_eq!(gen_dataset(&small()).unwrap(), gen_dataset(&small()).unwrap());
    let other = gen_dataset(&DatasetSpec { seed: 9, ..small() }).unwrap();
    assert_ne!(other.clips, gen_dataset(&small()).unwrap().clips);
}

#[test]
fn every_clip_has_energy_in_the_signature_band() {
    let d = gen_dataset(&small()).unwrap();
    let fs = d.spec.sample_rate_hz as f64;
    for c in &d.clips {
        let x = c.waveform.samples();
        let total = band_energy(x, fs, 0.0, fs / 2.0);
        let sig = band_energy(x, fs, 100.0, 900.0);
        assert!(sig > 0.0 && sig > 0.5 * total, "clip {}: {sig} of {total}", c.file_name());
    }
}

#[test]
fn signatures_stay_below_cutoff_and_distractors_above() {
    let d = gen_dataset(&small()).unwrap();
    assert!(d.signatures.iter().flatten().all(|&f| f < d.spec.cutoff_hz));
    assert!(d.spec.distractor_band_hz[0] > d.spec.cutoff_hz);
}

#[test]
fn overlapping_bands_are_rejected() {
    let spec = DatasetSpec {
        distractor_band_hz: [800.0, 6000.0],
        ..small()
    };
    assert!(gen_dataset(&spec).is_err());
}
