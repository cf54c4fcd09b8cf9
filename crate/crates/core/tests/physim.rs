use advface::featnet::{Architecture, ExtractorSpec, FeatureExtractor, Metric};
use advface::imagecore::{gaussian_blur, tv_loss, BinaryMask, ImageTensor};
use advface::physim::*;
use advface::rng::rng_from;
use advface::synth::SyntheticFaces;
use proptest::prelude::*;
use rand::Rng;

fn random_image(seed: u64, h: usize, w: usize, c: usize) -> ImageTensor {
    let mut rng = rng_from(seed);
    ImageTensor::from_fn(h, w, c, |_, _, _| rng.random::<f64>())
}

fn neutral(oversample: usize) -> CaptureParams {
    CaptureParams {
        oversample,
        ..CaptureParams::neutral()
    }
}

// Tanner Helland's fit evaluated by an independent script, relative to 6500 K.
const GAINS_3000: [f64; 3] = [1.0, 0.6973366127, 0.4395952898];
const GAINS_5000: [f64; 3] = [1.0, 0.8972981176, 0.8235836199];

#[test]
fn white_balance_gains_match_the_oracle() {
    for (k, want) in [(3000.0, GAINS_3000), (5000.0, GAINS_5000)] {
        let got = white_balance_gains(k);
        for c in 0..3 {
            assert!((got[c] - want[c]).abs() < 1e-9, "{k}K channel {c}");
        }
    }
    let raw = kelvin_to_rgb(3000.0);
    assert!((raw[1] - 0.6949030006).abs() < 1e-9);
    assert!((raw[2] - 0.4310480202).abs() < 1e-9);
}

#[test]
fn default_grid_retains_about_twenty_captures_of_a_face() {
    let faces = SyntheticFaces::new(7, 32, 32);
    let model = FeatureExtractor::new(ExtractorSpec::new(Architecture::A, 1).with_input(32, 32, 3))
        .unwrap();
    let grid = CaptureGrid::standard(5);
    assert_eq!(grid.len(), 20);
    for id in 0..3 {
        let face = faces.face(id);
        let o = physical_evaluation(&face, &face, &grid, &model, 1.0, Metric::L2).unwrap();
        assert!(o.retained() >= 16, "face {id}: {} retained", o.retained());
    }
}

#[test]
fn all_discarded_is_a_degenerate_grid() {
    let x = random_image(3, 16, 16, 3);
    let model = FeatureExtractor::new(ExtractorSpec::new(Architecture::B, 1).with_input(16, 16, 3))
        .unwrap();
    let mut p = CaptureParams::new(1200.0, 6500.0, 0.0);
    p.blur_sigma = 3.0;
    let grid = CaptureGrid::new(vec![p], 0.9).unwrap();
    let o = physical_evaluation(&x, &x, &grid, &model, 1.0, Metric::L2).unwrap();
    assert_eq!(o.retained(), 0);
    assert!(o.asr().is_err());
}

#[test]
fn oversampling_keeps_the_neutral_capture_exact() {
    let x = random_image(4, 9, 11, 3);
    for k in [1, 2, 4] {
        let y = print_and_capture(&x, &neutral(k)).unwrap();
        assert_eq!(y.dims(), x.dims());
        assert!(y.max_abs_diff(&x) <= 2.0 / 255.0, "oversample {k}");
    }
    let stages = capture_stages(&x, &neutral(3)).unwrap();
    assert_eq!(stages.printed.dims(), x.dims());
    assert_eq!(stages.captured.dims(), x.dims());
}

#[test]
fn oversampling_preserves_noise_level() {
    let x = ImageTensor::filled(24, 24, 1, 0.5);
    let mut p = neutral(4);
    p.sensor_noise_sigma = 0.02;
    p.seed = 9;
    let y = simulate_capture(
        &ImageTensor::filled(96, 96, 1, 0.5),
        &p.at_print_resolution(),
    )
    .unwrap();
    let fine_std = std(y.data());
    assert!((fine_std - 0.08).abs() < 0.005, "{fine_std}");
    let coarse = print_and_capture(&x, &p).unwrap();
    let s = std(coarse.data());
    // 8-bit readout adds about 1/(255 sqrt 12) per fine pixel
    assert!((s - 0.02).abs() < 0.004, "{s}");
}

fn std(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n).sqrt()
}

#[test]
fn blur_never_increases_tv() {
    let mut rng = rng_from(0xB1);
    for _ in 0..100 {
        let (h, w) = (rng.random_range(3..12), rng.random_range(3..12));
        let x = random_image(rng.random(), h, w, 3);
        let sigma = rng.random_range(0.2..2.5);
        let full = BinaryMask::full(h, w);
        let before = tv_loss(&x, &full).unwrap();
        let after = tv_loss(&gaussian_blur(&x, sigma), &full).unwrap();
        assert!(
            after <= before + 1e-12,
            "{after} > {before} at sigma {sigma}"
        );
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn neutral_print_and_capture_is_identity(seed in any::<u64>(), h in 2usize..10, w in 2usize..10, k in 1usize..4) {
        let x = random_image(seed, h, w, 3);
        let y = print_and_capture(&x, &neutral(k)).unwrap();
        prop_assert!(y.max_abs_diff(&x) <= 2.0 / 255.0);
    }

    #[test]
    fn capture_is_deterministic_given_seed(seed in any::<u64>(), yaw in -22.5f64..22.5, lux in prop::sample::select(vec![800.0, 1200.0])) {
        let x = random_image(seed, 8, 8, 3);
        let mut p = CaptureParams::new(lux, 3000.0, yaw);
        p.seed = seed;
        let a = print_and_capture(&x, &p).unwrap();
        let b = print_and_capture(&x, &p).unwrap();
        prop_assert_eq!(a.data(), b.data());
        prop_assert!(a.in_unit_range());
    }

    #[test]
    fn asr_is_monotone_in_threshold(seed in 0u64..500, t1 in 0.0f64..40.0, dt in 0.0f64..20.0) {
        let model = FeatureExtractor::new(ExtractorSpec::new(Architecture::C, 2).with_input(12, 12, 3)).unwrap();
        let (x, t) = (random_image(seed, 12, 12, 3), random_image(seed + 1, 12, 12, 3));
        let grid = CaptureGridConfig { n_angles: 2, seed, ..Default::default() }.build().unwrap();
        let o = physical_evaluation(&x, &t, &grid, &model, t1, Metric::L2).unwrap();
        let strict = o.rethreshold(Metric::L2, t1);
        let relaxed = o.rethreshold(Metric::L2, t1 + dt);
        prop_assert_eq!(&strict, &o);
        prop_assert!(relaxed.successes() >= strict.successes());
        let cos = o.rethreshold(Metric::Cosine, 0.5);
        prop_assert!(cos.successes() <= cos.retained());
    }
}
