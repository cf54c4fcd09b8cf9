use advface::imagecore::*;
use advface::rng::rng_from;
use proptest::prelude::*;
use rand::Rng;

fn random_image(seed: u64, h: usize, w: usize, c: usize) -> ImageTensor {
    let mut rng = rng_from(seed);
    ImageTensor::from_fn(h, w, c, |_, _, _| rng.random::<f64>())
}

fn random_mask(seed: u64, h: usize, w: usize, p: f64) -> BinaryMask {
    let mut rng = rng_from(seed);
    BinaryMask::from_fn(h, w, |_, _| rng.random::<f64>() < p)
}

fn dims() -> impl Strategy<Value = (usize, usize, usize)> {
    (2usize..9, 2usize..9, prop::sample::select(vec![1usize, 3]))
}

#[test]
fn tv_of_a_single_step_is_its_height() {
    // one vertical edge of height 0.25 crossed by every row
    let r = ImageTensor::from_fn(3, 4, 1, |_, _, j| if j < 2 { 0.0 } else { 0.25 });
    let full = BinaryMask::full(3, 4);
    assert!((tv_loss(&r, &full).unwrap() - 0.75).abs() < 1e-15);
    assert_eq!(tv_loss(&r, &BinaryMask::empty(3, 4)).unwrap(), 0.0);
    assert!(tv_loss(&ImageTensor::zeros(1, 4, 1), &BinaryMask::full(1, 4)).is_err());
}

#[test]
fn threshold_grid_round_trips_through_text() {
    let z = parse_threshold_grid("0.01 0.02\n0.03 0.04\n").unwrap();
    assert_eq!((z.height(), z.width()), (2, 2));
    assert_eq!(z.data(), &[0.01, 0.02, 0.03, 0.04]);
    assert!(parse_threshold_grid("0.1 0.2\n0.3\n").is_err());
    assert!(ThresholdMatrix::uniform(2, 2, -0.1).is_err());
}

#[test]
fn overlapping_combo_masks_are_rejected() {
    let x = ImageTensor::filled(4, 4, 3, 0.5);
    let d = ImageTensor::zeros(4, 4, 3);
    let m = BinaryMask::from_fn(4, 4, |i, _| i == 0);
    assert!(compose_combo(&x, &d, &d, &m, &m).is_err());
}

#[test]
fn saved_images_reload_within_one_level() {
    let dir = tempfile::tempdir().unwrap();
    for (k, c) in [(0u64, 1usize), (1, 3)] {
        let x = random_image(k, 7, 5, c);
        let path = dir.path().join(format!("img{k}.png"));
        save_image(&x, &path).unwrap();
        let y = load_image(&path).unwrap();
        assert_eq!(y.dims(), x.dims());
        assert!(y.max_abs_diff(&x) <= 0.5 / 255.0 + 1e-12);
        assert_eq!(y, x.quantize_u8());
    }
}

#[test]
fn masks_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let m = random_mask(3, 6, 9, 0.4);
    let path = dir.path().join("m.png");
    save_mask(&m, &path).unwrap();
    assert_eq!(load_mask(&path).unwrap(), m);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn tv_is_nonnegative_and_zero_on_constants((h, w, c) in dims(), seed in any::<u64>(), v in 0.0f64..1.0) {
        let region = random_mask(seed, h, w, 0.7);
        prop_assert!(tv_loss(&random_image(seed, h, w, c), &region).unwrap() >= 0.0);
        let flat = ImageTensor::filled(h, w, c, v);
        prop_assert_eq!(tv_loss(&flat, &region).unwrap(), 0.0);
        prop_assert_eq!(tv_loss_grad(&flat, &region).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn tv_is_positively_homogeneous((h, w, c) in dims(), seed in any::<u64>(), s in 0.0f64..10.0) {
        let r = random_image(seed, h, w, c).map(|v| v - 0.5);
        let region = random_mask(seed ^ 1, h, w, 0.8);
        let mut scaled = r.clone();
        scaled.scale(s);
        let (a, b) = (tv_loss(&scaled, &region).unwrap(), tv_loss(&r, &region).unwrap());
        prop_assert!((a - s * b).abs() <= 1e-12 * (1.0 + a));
    }

    #[test]
    fn tv_gradient_matches_finite_differences((h, w, c) in dims(), seed in any::<u64>()) {
        let r = random_image(seed, h, w, c);
        let region = BinaryMask::full(h, w);
        let g = tv_loss_grad(&r, &region).unwrap();
        let e = 1e-6;
        let k = (seed as usize) % r.data().len();
        let mut plus = r.clone();
        plus.data_mut()[k] += e;
        let mut minus = r.clone();
        minus.data_mut()[k] -= e;
        let fd = (tv_loss(&plus, &region).unwrap() - tv_loss(&minus, &region).unwrap()) / (2.0 * e);
        prop_assert!((fd - g.data()[k]).abs() < 1e-5, "{} vs {}", fd, g.data()[k]);
    }

    #[test]
    fn zero_thresholds_reduce_to_tv((h, w, c) in dims(), seed in any::<u64>()) {
        let x = random_image(seed, h, w, c);
        let reference = random_image(seed ^ 7, h, w, c);
        let region = random_mask(seed, h, w, 0.6);
        let spec = SmoothnessSpec::masked(0.5, ThresholdMatrix::uniform(h, w, 0.0).unwrap(), reference.clone()).unwrap();
        let p = x.sub(&reference);
        prop_assert_eq!(masked_smoothness(&x, &spec, &region).unwrap(), tv_loss(&p, &region).unwrap());
        let gm = masked_smoothness_grad(&x, &spec, &region).unwrap();
        let gt = tv_loss_grad(&p, &region).unwrap();
        prop_assert_eq!(gm.data(), gt.data());
    }

    #[test]
    fn raising_one_threshold_never_raises_the_loss((h, w, c) in dims(), seed in any::<u64>(), bump in 0.0f64..0.5) {
        let mut rng = rng_from(seed);
        let x = random_image(seed, h, w, c);
        let reference = random_image(seed ^ 3, h, w, c);
        let region = random_mask(seed, h, w, 0.8);
        let base: Vec<f64> = (0..h * w).map(|_| rng.random_range(0.0..0.5)).collect();
        let mut raised = base.clone();
        raised[rng.random_range(0..h * w)] += bump;
        let loss = |z: Vec<f64>| {
            let spec = SmoothnessSpec::masked(1.0, ThresholdMatrix::from_vec(h, w, z).unwrap(), reference.clone()).unwrap();
            masked_smoothness(&x, &spec, &region).unwrap()
        };
        prop_assert!(loss(raised) <= loss(base) + 1e-12);
    }

    #[test]
    fn combo_stays_in_box_and_copies_outside((h, w) in (2usize..9, 2usize..9), seed in any::<u64>()) {
        let x = random_image(seed, h, w, 3);
        let dp = random_image(seed ^ 1, h, w, 3).map(|v| 4.0 * v - 2.0);
        let ds = random_image(seed ^ 2, h, w, 3).map(|v| 0.2 * v - 0.1);
        let mp = random_mask(seed, h, w, 0.3);
        let ms = BinaryMask::from_fn(h, w, |i, j| !mp.get(i, j) && (i + j) % 2 == 0);
        let y = compose_combo(&x, &dp, &ds, &mp, &ms).unwrap();
        prop_assert!(y.in_unit_range());
        let outside = mp.union(&ms).complement();
        for c in 0..3 {
            for i in 0..h {
                for j in 0..w {
                    if outside.get(i, j) {
                        prop_assert_eq!(y.get(c, i, j).to_bits(), x.get(c, i, j).to_bits());
                    }
                }
            }
        }
    }

    #[test]
    fn quantization_is_idempotent((h, w, c) in dims(), seed in any::<u64>()) {
        let q = random_image(seed, h, w, c).quantize_u8();
        prop_assert_eq!(q.quantize_u8(), q);
    }
}
