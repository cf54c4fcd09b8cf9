use std::sync::Arc;

use advface::featnet::*;
use advface::imagecore::ImageTensor;
use advface::rng::rng_from;
use proptest::prelude::*;
use rand::Rng;

fn random_image(seed: u64, h: usize, w: usize) -> ImageTensor {
    let mut rng = rng_from(seed);
    ImageTensor::from_fn(h, w, 3, |_, _, _| rng.random::<f64>())
}

fn model(arch: Architecture, seed: u64) -> Arc<dyn Embedder> {
    let spec = ExtractorSpec::new(arch, seed).with_input(16, 16, 3);
    Arc::new(FeatureExtractor::new(spec).unwrap())
}

fn archs() -> impl Strategy<Value = Architecture> {
    prop::sample::select(vec![
        Architecture::A,
        Architecture::B,
        Architecture::C,
        Architecture::D,
    ])
}

#[test]
fn rebuilt_extractors_are_bit_identical() {
    let x = random_image(1, 16, 16);
    for arch in [
        Architecture::A,
        Architecture::B,
        Architecture::C,
        Architecture::D,
    ] {
        let (a, b) = (model(arch, 9), model(arch, 9));
        assert_eq!(a.embed(&x).unwrap(), b.embed(&x).unwrap());
        assert_ne!(a.embed(&x).unwrap(), model(arch, 10).embed(&x).unwrap());
    }
}

#[test]
fn spec_file_reproduces_the_extractor() {
    let spec = ExtractorSpec::new(Architecture::D, 4).with_input(16, 16, 3);
    let back = ExtractorSpec::from_toml(&spec.to_toml()).unwrap();
    let x = random_image(2, 16, 16);
    let a = FeatureExtractor::new(spec).unwrap().embed(&x).unwrap();
    let b = FeatureExtractor::new(back).unwrap().embed(&x).unwrap();
    assert_eq!(a, b);
}

#[test]
fn ensemble_of_identical_members_is_the_single_distance() {
    let (x, t) = (random_image(3, 16, 16), random_image(4, 16, 16));
    let m = model(Architecture::B, 1);
    let single = EnsembleSpec::equal(vec![m.clone()]).unwrap();
    let double = EnsembleSpec::equal(vec![m.clone(), m.clone()]).unwrap();
    let (d1, g1) = ensemble_distance(&single, &x, &t, Metric::L2).unwrap();
    let (d2, g2) = ensemble_distance(&double, &x, &t, Metric::L2).unwrap();
    assert!((d1 - d2).abs() < 1e-12);
    assert!(g1.max_abs_diff(&g2) < 1e-12);
    let direct =
        feature_distance(&m.embed(&x).unwrap(), &m.embed(&t).unwrap(), Metric::L2).unwrap();
    assert!((d1 - direct).abs() < 1e-12);
    assert!(EnsembleSpec::equal(vec![]).is_err());
}

#[test]
fn crop_bound_at_112_pixels_is_seven() {
    let cfg = DiversityConfig::enabled(5);
    assert_eq!(cfg.max_crop(112), 7);
    let x = ImageTensor::filled(112, 112, 1, 0.5);
    let mut rng = rng_from(5);
    let mut seen_max = 0;
    for _ in 0..200 {
        let (_, t) = apply_input_diversity(&x, &cfg, &mut rng).unwrap();
        for c in [t.top, t.bottom, t.left, t.right] {
            assert!(c <= 7);
            seen_max = seen_max.max(c);
        }
    }
    assert_eq!(seen_max, 7);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn input_gradient_is_linear_in_upstream(arch in archs(), seed in 0u64..1000) {
        let m = model(arch, seed);
        let x = random_image(seed, 16, 16);
        let mut rng = rng_from(seed ^ 0xFF);
        let dim = m.embed(&x).unwrap().len();
        let u1: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let u2: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let sum: Vec<f64> = u1.iter().zip(&u2).map(|(a, b)| a + b).collect();
        let mut g = m.embed_input_grad(&x, &u1).unwrap();
        g.add_scaled(&m.embed_input_grad(&x, &u2).unwrap(), 1.0);
        let together = m.embed_input_grad(&x, &sum).unwrap();
        prop_assert!(g.max_abs_diff(&together) < 1e-10);
        let zero = m.embed_input_grad(&x, &vec![0.0; dim]).unwrap();
        prop_assert_eq!(zero.max_abs(), 0.0);
    }

    #[test]
    fn ensemble_gradient_is_the_weighted_member_sum(seed in 0u64..1000, w in 0.05f64..0.95) {
        let (x, t) = (random_image(seed, 16, 16), random_image(seed + 7, 16, 16));
        let (a, b) = (model(Architecture::A, seed), model(Architecture::C, seed));
        let spec = EnsembleSpec::new(vec![a.clone(), b.clone()], vec![w, 1.0 - w]).unwrap();
        let (d, g) = ensemble_distance(&spec, &x, &t, Metric::Cosine).unwrap();
        let (da, ga) = ensemble_distance(&EnsembleSpec::equal(vec![a]).unwrap(), &x, &t, Metric::Cosine).unwrap();
        let (db, gb) = ensemble_distance(&EnsembleSpec::equal(vec![b]).unwrap(), &x, &t, Metric::Cosine).unwrap();
        prop_assert!((d - (w * da + (1.0 - w) * db)).abs() < 1e-10);
        let mut want = ga.clone();
        want.scale(w);
        want.add_scaled(&gb, 1.0 - w);
        prop_assert!(g.max_abs_diff(&want) < 1e-10);
    }

    #[test]
    fn distances_stay_in_range(v in prop::collection::vec(-5.0f64..5.0, 2..40), s in 0.1f64..3.0) {
        let u: Vec<f64> = v.iter().map(|x| x * 0.5 + 1.0).collect();
        prop_assume!(v.iter().any(|x| x.abs() > 1e-6) && u.iter().any(|x| x.abs() > 1e-6));
        let l2 = feature_distance(&v, &u, Metric::L2).unwrap();
        let cos = feature_distance(&v, &u, Metric::Cosine).unwrap();
        prop_assert!(l2 >= 0.0);
        prop_assert!((-1e-12..=2.0 + 1e-12).contains(&cos));
        prop_assert_eq!(feature_distance(&v, &v, Metric::L2).unwrap(), 0.0);
        let scaled: Vec<f64> = v.iter().map(|x| x * s).collect();
        prop_assert!(feature_distance(&v, &scaled, Metric::Cosine).unwrap().abs() < 1e-12);
    }

    #[test]
    fn zero_crop_fraction_is_the_identity(seed in any::<u64>()) {
        let x = random_image(seed, 9, 13);
        let cfg = DiversityConfig { enabled: true, max_crop_fraction: 0.0, seed };
        let mut rng = rng_from(seed);
        let (y, t) = apply_input_diversity(&x, &cfg, &mut rng).unwrap();
        prop_assert!(t.is_identity());
        prop_assert_eq!(y, x);
    }

    #[test]
    fn seeded_diversity_repeats(seed in any::<u64>()) {
        let x = random_image(seed, 20, 20);
        let cfg = DiversityConfig::enabled(seed);
        let a = apply_input_diversity(&x, &cfg, &mut rng_from(seed)).unwrap();
        let b = apply_input_diversity(&x, &cfg, &mut rng_from(seed)).unwrap();
        prop_assert_eq!(a, b);
    }
}
