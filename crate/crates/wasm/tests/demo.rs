use tfish_core::{AdaptationSpec, Site};
use tfish_wasm::{response_db, test_signal, Channel, Demo};

const CLEAN: Channel = Channel {
    order: 4,
    cutoff_hz: 1000.0,
    snr_db: None,
    seed: 3,
};

#[test]
fn response_is_minus_three_db_at_cutoff() {
    let r = response_db(2, 1000.0, 16_000, &[10.0, 1000.0, 6000.0]).unwrap();
    assert!(r[0].abs() < 0.01);
    assert!((r[1] + 3.0103).abs() < 0.01);
    assert!(r[2] < -30.0);
    assert!(response_db(5, 1000.0, 16_000, &[1.0]).is_err());
}

#[test]
fn signals_are_five_seconds() {
    for name in ["sine", "square", "noise", "chord"] {
        assert_eq!(test_signal(name, 16_000, 0).unwrap().samples().len(), 80_000);
    }
    assert!(test_signal("saw", 16_000, 0).is_err());
}

#[test]
fn demo_shapes_and_identity_filter() {
    let demo = Demo::build(1).unwrap();
    let spec = demo.features("chord", CLEAN).unwrap();
    let cfg = demo.model().feature_config();
    assert_eq!((spec.n_mels(), spec.n_frames()), (cfg.n_mels, cfg.target_frames));

    let (nf, nt) = demo.model().grid();
    let plain = demo.activations(&spec, Site::Block(2), None).unwrap();
    assert_eq!(plain.grid(), Some((nf, nt)));
    let mut a = AdaptationSpec::from_cutoff(demo.model(), 1000.0, 2).unwrap().with_bin(nf);
    a.include_embedding = true;
    assert_eq!(demo.activations(&spec, Site::Block(2), Some(&a)).unwrap(), plain);

    let a = AdaptationSpec::from_cutoff(demo.model(), 1000.0, 2).unwrap();
    let filtered = demo.activations(&spec, Site::Block(2), Some(&a)).unwrap();
    assert_ne!(filtered, plain);
    assert_eq!(demo.activations(&spec, Site::Block(2), Some(&a)).unwrap(), filtered);
}

#[test]
fn channel_changes_only_with_snr() {
    let demo = Demo::build(0).unwrap();
    let clean = demo.features("sine", CLEAN).unwrap();
    let noisy = demo.features("sine", Channel { snr_db: Some(-10.0), ..CLEAN }).unwrap();
    assert_ne!(clean, noisy);
    assert_eq!(noisy, demo.features("sine", Channel { snr_db: Some(-10.0), ..CLEAN }).unwrap());
}
