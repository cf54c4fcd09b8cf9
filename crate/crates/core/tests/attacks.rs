use std::sync::Arc;

use advface::attacks::*;
use advface::featnet::{
    Architecture, Embedder, EnsembleSpec, ExtractorSpec, FeatureExtractor, LinearEmbedder, Metric,
};
use advface::imagecore::{BinaryMask, ImageTensor};
use advface::rng::rng_from;
use proptest::prelude::*;
use rand::Rng;

const SIDE: usize = 12;

fn random_image(seed: u64, h: usize, w: usize) -> ImageTensor {
    let mut rng = rng_from(seed);
    ImageTensor::from_fn(h, w, 3, |_, _, _| rng.random_range(0.05..0.95))
}

fn toy_models(archs: &[Architecture]) -> EnsembleSpec {
    let members: Vec<Arc<dyn Embedder>> = archs
        .iter()
        .map(|&a| {
            let spec = ExtractorSpec::new(a, 3).with_input(SIDE, SIDE, 3);
            Arc::new(FeatureExtractor::new(spec).unwrap()) as Arc<dyn Embedder>
        })
        .collect();
    EnsembleSpec::equal(members).unwrap()
}

fn centre_patch() -> BinaryMask {
    BinaryMask::from_fn(SIDE, SIDE, |i, j| {
        (3..8).contains(&i) && (2..10).contains(&j)
    })
}

fn config(alg: Algorithm, layout: Layout, iterations: usize) -> AttackConfig {
    let mut c = AttackConfig::new(alg, layout);
    c.iterations = iterations;
    c.seed = 17;
    c
}

fn collect_iterates(
    x_s: &ImageTensor,
    x_t: &ImageTensor,
    masks: &NoiseMasks,
    cfg: &AttackConfig,
    models: &EnsembleSpec,
) -> (AttackResult, Vec<ImageTensor>) {
    let mut seen = Vec::new();
    let r = run_attack_observed(x_s, x_t, masks, cfg, models, &mut |info| {
        seen.push(info.image.clone())
    })
    .unwrap();
    (r, seen)
}

#[test]
fn pgd_without_start_noise_is_ifgsm() {
    let models = toy_models(&[Architecture::A]);
    let (x_s, x_t) = (random_image(1, SIDE, SIDE), random_image(2, SIDE, SIDE));
    let masks = NoiseMasks::for_layout(Layout::PatchNoiseCombo, &centre_patch());
    let mut pgd = config(Algorithm::Pgd, Layout::PatchNoiseCombo, 25);
    pgd.init_sigma = 0.0;
    pgd.smoothness = SmoothnessConfig::masked(0.5, 0.01);
    let mut ifgsm = pgd.clone();
    ifgsm.algorithm = Algorithm::Ifgsm;
    let a = run_pgd(&x_s, &x_t, &masks, &pgd, &models).unwrap();
    let b = run_ifgsm(&x_s, &x_t, &masks, &ifgsm, &models).unwrap();
    assert_eq!(a.loss_trace, b.loss_trace);
    assert_eq!(a.adversarial, b.adversarial);
}

#[test]
fn ifgsm_starts_clean_and_pgd_does_not() {
    let models = toy_models(&[Architecture::B]);
    let (x_s, x_t) = (random_image(3, SIDE, SIDE), random_image(4, SIDE, SIDE));
    let masks = NoiseMasks::for_layout(Layout::PatchOnly, &centre_patch());
    let (_, it) = collect_iterates(
        &x_s,
        &x_t,
        &masks,
        &config(Algorithm::Ifgsm, Layout::PatchOnly, 3),
        &models,
    );
    assert_eq!(it[0], x_s);
    let (_, it) = collect_iterates(
        &x_s,
        &x_t,
        &masks,
        &config(Algorithm::Pgd, Layout::PatchOnly, 3),
        &models,
    );
    assert_ne!(it[0], x_s);
}

/// Embedding is the first pixel itself, so the L2 feature gradient there is
/// `sign(x - t)` and zero elsewhere.
fn first_pixel_model(dims: (usize, usize, usize)) -> EnsembleSpec {
    let n = dims.0 * dims.1 * dims.2;
    let mut row = vec![0.0; n];
    row[0] = 1.0;
    let m = LinearEmbedder::new("first", dims, vec![row]).unwrap();
    EnsembleSpec::equal(vec![Arc::new(m) as Arc<dyn Embedder>]).unwrap()
}

#[test]
fn one_sign_step_moves_a_pixel_by_alpha_then_clips() {
    let dims = (2, 2, 1);
    let models = first_pixel_model(dims);
    let x_s = ImageTensor::from_vec(2, 2, 1, vec![0.5, 0.3, 0.3, 0.3]).unwrap();
    let x_t = ImageTensor::from_vec(2, 2, 1, vec![0.2, 0.3, 0.3, 0.3]).unwrap();
    let patch = BinaryMask::from_fn(2, 2, |i, j| i == 0 && j == 0);
    let masks = NoiseMasks::for_layout(Layout::PatchOnly, &patch);
    let mut cfg = config(Algorithm::Ifgsm, Layout::PatchOnly, 2);
    let (_, it) = collect_iterates(&x_s, &x_t, &masks, &cfg, &models);
    assert!((it[1].data()[0] - 0.49).abs() < 1e-15);
    assert_eq!(&it[1].data()[1..], &x_s.data()[1..]);

    // a pixel near 0 with the same gradient sign stops at the box
    let x_s = ImageTensor::from_vec(2, 2, 1, vec![0.004, 0.3, 0.3, 0.3]).unwrap();
    let x_t = ImageTensor::from_vec(2, 2, 1, vec![-1.0, 0.3, 0.3, 0.3]).unwrap();
    cfg.iterations = 3;
    let (_, it) = collect_iterates(&x_s, &x_t, &masks, &cfg, &models);
    assert_eq!(it[1].data()[0], 0.0);
    assert_eq!(it[2].data()[0], 0.0);
}

#[test]
fn zero_gradient_leaves_iterates_fixed() {
    let models = toy_models(&[Architecture::A]);
    let x = random_image(5, SIDE, SIDE);
    let masks = NoiseMasks::for_layout(Layout::PatchOnly, &centre_patch());
    for alg in [Algorithm::Ifgsm, Algorithm::Lots] {
        let (r, it) = collect_iterates(&x, &x, &masks, &config(alg, Layout::PatchOnly, 4), &models);
        assert!(it.iter().all(|im| im == &x), "{alg:?}");
        assert!(r.loss_trace.iter().all(|&l| l == 0.0));
    }
}

#[test]
fn lots_step_is_the_normalized_closed_form_direction() {
    let dims = (3, 3, 1);
    let n = 9;
    let mut rng = rng_from(41);
    let rows: Vec<Vec<f64>> = (0..4)
        .map(|_| (0..n).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    let m = LinearEmbedder::new("lin", dims, rows.clone()).unwrap();
    let models = EnsembleSpec::equal(vec![Arc::new(m) as Arc<dyn Embedder>]).unwrap();
    let x_s = ImageTensor::from_fn(3, 3, 1, |_, i, j| 0.3 + 0.05 * (i * 3 + j) as f64);
    let x_t = ImageTensor::from_fn(3, 3, 1, |_, i, j| 0.6 - 0.03 * (i + j) as f64);
    let masks = NoiseMasks::for_layout(Layout::NoiseOnly, &BinaryMask::empty(3, 3));
    let mut cfg = config(Algorithm::Lots, Layout::NoiseOnly, 2);
    cfg.epsilon_small = 1.0;
    let (_, it) = collect_iterates(&x_s, &x_t, &masks, &cfg, &models);

    // g = J^T (J x - J x_t)
    let jx = |x: &ImageTensor| -> Vec<f64> {
        rows.iter()
            .map(|r| r.iter().zip(x.data()).map(|(a, b)| a * b).sum())
            .collect()
    };
    let (e, t) = (jx(&x_s), jx(&x_t));
    let g: Vec<f64> = (0..n)
        .map(|k| {
            rows.iter()
                .zip(e.iter().zip(&t))
                .map(|(r, (a, b))| r[k] * (a - b))
                .sum()
        })
        .collect();
    let gmax = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    for k in 0..n {
        let want = x_s.data()[k] - cfg.step_size * g[k] / gmax;
        assert!((it[1].data()[k] - want).abs() < 1e-12);
    }
    let step = it[1].sub(&x_s).max_abs();
    assert!((step - cfg.step_size).abs() < 1e-12);
}

#[test]
fn cw_transform_values() {
    assert_eq!(cw_to_pixel(0.0), 0.5);
    assert!((cw_from_pixel(0.75) - 0.5f64.atanh()).abs() < 1e-15);
    assert!((cw_from_pixel(0.75) - 0.54931).abs() < 1e-5);
}

#[test]
fn cw_stays_inside_the_open_box_without_clipping() {
    let models = toy_models(&[Architecture::C]);
    let (x_s, x_t) = (random_image(6, SIDE, SIDE), random_image(7, SIDE, SIDE));
    let masks = NoiseMasks::for_layout(Layout::PatchNoiseCombo, &centre_patch());
    let mut cfg = config(Algorithm::Cw, Layout::PatchNoiseCombo, 40);
    cfg.step_size = 0.5;
    cfg.epsilon_small = 0.05;
    let mut report = ConstraintReport::default();
    run_cw_observed(&x_s, &x_t, &masks, &cfg, &models, &mut |info| {
        assert_eq!(info.box_clips, 0);
        report.check(info, &x_s, &masks, &cfg);
    })
    .unwrap();
    assert_eq!(report.iterates, 40);
    assert!(report.is_clean(), "{report:?}");
}

#[test]
fn best_iterate_is_the_minimum_of_the_trace() {
    let models = toy_models(&[Architecture::A, Architecture::B]);
    let (x_s, x_t) = (random_image(8, SIDE, SIDE), random_image(9, SIDE, SIDE));
    let masks = NoiseMasks::for_layout(Layout::PatchOnly, &centre_patch());
    // a large step makes the sign iteration oscillate
    let mut cfg = config(Algorithm::Ifgsm, Layout::PatchOnly, 30);
    cfg.step_size = 0.2;
    let (r, it) = collect_iterates(&x_s, &x_t, &masks, &cfg, &models);
    let min = r.loss_trace.iter().cloned().fold(f64::INFINITY, f64::min);
    assert_eq!(r.best_loss, min);
    assert_eq!(r.loss_trace[r.best_iteration], min);
    assert_eq!(r.adversarial, it[r.best_iteration]);
    assert!(
        r.loss_trace.windows(2).any(|w| w[1] > w[0]),
        "expected oscillation"
    );
}

#[test]
fn wrong_runner_is_rejected() {
    let models = toy_models(&[Architecture::A]);
    let x = random_image(10, SIDE, SIDE);
    let masks = NoiseMasks::for_layout(Layout::PatchOnly, &centre_patch());
    let cfg = config(Algorithm::Pgd, Layout::PatchOnly, 2);
    assert!(run_cw(&x, &x, &masks, &cfg, &models).is_err());
    assert!(run_lots(&x, &x, &masks, &cfg, &models).is_err());
}

#[test]
fn grid_cardinality() {
    let spec = GridSpec::full();
    let cells = spec.cells();
    assert_eq!(cells.len(), 80);
    assert_eq!(
        cells.iter().filter(|k| k.technique.is_baseline()).count(),
        48
    );
    assert_eq!(
        cells.iter().filter(|k| !k.technique.is_baseline()).count(),
        32
    );
    for k in &cells {
        assert_eq!(CellKey::from_slug(&k.slug()).unwrap(), *k);
    }
}

#[test]
fn loss_without_smoothness_is_the_ensemble_distance() {
    let models = toy_models(&[Architecture::A, Architecture::D]);
    let (x_s, x_t) = (random_image(11, SIDE, SIDE), random_image(12, SIDE, SIDE));
    let masks = NoiseMasks::for_layout(Layout::PatchOnly, &centre_patch());
    let cfg = config(Algorithm::Pgd, Layout::PatchOnly, 1);
    let eval = adversarial_loss(&x_s, &x_t, &x_s, &masks, &cfg, &models).unwrap();
    let want = advface::featnet::ensemble_distance(&models, &x_s, &x_t, Metric::L2)
        .unwrap()
        .0;
    assert!((eval.total - want).abs() < 1e-12);
    assert_eq!(eval.smooth, 0.0);
    let at_target = adversarial_loss(&x_t, &x_t, &x_s, &masks, &cfg, &models).unwrap();
    assert_eq!(at_target.total, 0.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn iterates_respect_masks_and_budgets(
        seed in 0u64..1000,
        alg in prop::sample::select(vec![Algorithm::Pgd, Algorithm::Ifgsm, Algorithm::Lots, Algorithm::Cw]),
        eps in prop::sample::select(vec![0.02, 0.05, 0.25]),
        masked in any::<bool>(),
    ) {
        let models = toy_models(&[Architecture::D]);
        let (x_s, x_t) = (random_image(seed, SIDE, SIDE), random_image(seed + 1, SIDE, SIDE));
        let masks = NoiseMasks::for_layout(Layout::PatchNoiseCombo, &centre_patch());
        let mut cfg = config(alg, Layout::PatchNoiseCombo, 8);
        cfg.seed = seed;
        cfg.epsilon_small = eps;
        cfg.step_size = if alg == Algorithm::Cw { 0.5 } else { 0.03 };
        if masked {
            cfg.smoothness = SmoothnessConfig::masked(0.5, 0.01);
        }
        let mut report = ConstraintReport::default();
        let r = run_attack_observed(&x_s, &x_t, &masks, &cfg, &models, &mut |info| {
            report.check(info, &x_s, &masks, &cfg)
        }).unwrap();
        prop_assert!(report.is_clean(), "{:?}", report);
        prop_assert_eq!(report.iterates, r.iterations_run);
        prop_assert_eq!(r.loss_trace.len(), r.iterations_run);
        prop_assert!(r.loss_trace.iter().all(|&l| r.best_loss <= l));
    }
}
