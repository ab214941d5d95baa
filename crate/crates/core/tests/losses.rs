use aqua_core::losses::*;
use aqua_core::ops;
use aqua_core::Error;
use candle_core::{DType, Device, Tensor, Var};
use ndarray::Array2;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn grid(h: usize, w: usize, v: &[f64]) -> Tensor {
    Tensor::from_slice(v, (1, 1, h, w), &Device::Cpu).unwrap()
}

fn random_grid(rng: &mut impl Rng, h: usize, w: usize) -> Vec<f64> {
    (0..h * w).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn val(t: &Tensor) -> f64 {
    ops::scalar(t).unwrap()
}

fn cfg() -> RegressionLossConfig {
    RegressionLossConfig::default()
}

#[test]
fn huber_examples() {
    let z = grid(1, 3, &[0.0, 0.0, 0.0]);
    let p = grid(1, 3, &[0.0, 0.5, 2.0]);
    let h = ops::to_f64_vec(&huber(&p, &z, 1.0).unwrap()).unwrap();
    assert_eq!(h, vec![0.0, 0.125, 1.5]);
    assert!(matches!(huber(&p, &z, 0.0), Err(Error::InvalidArgument(_))));
}

#[test]
fn downscale_examples() {
    let c = grid(4, 4, &[0.7; 16]);
    for f in [2, 3, 4] {
        let (d, _) = downscale(&c, None, f).unwrap();
        for v in ops::to_f64_vec(&d).unwrap() {
            assert!((v - 0.7).abs() < 1e-15);
        }
    }
    let (d, _) = downscale(&grid(2, 2, &[0.0, 0.0, 1.0, 1.0]), None, 2).unwrap();
    assert_eq!(ops::to_f64_vec(&d).unwrap(), vec![0.5]);
    assert!(downscale(&c, None, 1).is_err());
}

#[test]
fn downscale_odd_extent_averages_real_pixels() {
    let v: Vec<f64> = (0..25).map(|i| i as f64).collect();
    let (d, m) = downscale(&grid(5, 5, &v), None, 2).unwrap();
    assert_eq!(d.dims(), &[1, 1, 3, 3]);
    assert_eq!(ops::to_f64_vec(&m).unwrap(), vec![1.0; 9]);
    let d = ops::to_f64_vec(&d).unwrap();
    for r in 0..3 {
        for c in 0..3 {
            let cells: Vec<f64> = (2 * r..(2 * r + 2).min(5))
                .flat_map(|y| (2 * c..(2 * c + 2).min(5)).map(move |x| (y * 5 + x) as f64))
                .collect();
            let mean = cells.iter().sum::<f64>() / cells.len() as f64;
            assert!((d[r * 3 + c] - mean).abs() < 1e-12);
        }
    }
}

#[test]
fn multiscale_constant_offset() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let t = random_grid(&mut rng, 8, 8);
    let c = 0.3;
    let p: Vec<f64> = t.iter().map(|v| v + c).collect();
    let (p, t) = (grid(8, 8, &p), grid(8, 8, &t));
    let one = RegressionLossConfig { scales: vec![2], ..cfg() };
    assert!((val(&multiscale_loss(&p, &t, None, &one).unwrap()) - c * c).abs() < 1e-9);
    // With S = {2, 2} the full-scale term and two pooled terms share 1/M = 1/2.
    let dup = RegressionLossConfig { scales: vec![2, 2], ..cfg() };
    assert!((val(&multiscale_loss(&p, &t, None, &dup).unwrap()) - 0.75 * c * c).abs() < 1e-9);
    assert_eq!(val(&multiscale_loss(&t, &t, None, &one).unwrap()), 0.0);
}

#[test]
fn multiscale_ignores_invalid_pixels() {
    let t = grid(2, 2, &[0.0; 4]);
    let p = grid(2, 2, &[0.5, 9.0, 0.5, 0.5]);
    let m = grid(2, 2, &[1.0, 0.0, 1.0, 1.0]);
    let one = RegressionLossConfig { scales: vec![2], ..cfg() };
    // Full scale: mean of three 0.125 terms; pooled: one cell of mean error 0.5.
    let got = val(&multiscale_loss(&p, &t, Some(&m), &one).unwrap());
    assert!((got - 0.25).abs() < 1e-12);
    let none = grid(2, 2, &[0.0; 4]);
    assert!(matches!(multiscale_loss(&p, &t, Some(&none), &one), Err(Error::EmptyLossSupport)));
}

#[test]
fn haar_constant_block() {
    let c = 0.37;
    let d = dwt2(&Array2::from_elem((2, 2), c), 1, WaveletFamily::Haar).unwrap();
    assert!((d.approx[[0, 0]] - 2.0 * c).abs() < 1e-15);
    let b = &d.details[0];
    assert_eq!((b.horizontal[[0, 0]], b.vertical[[0, 0]], b.diagonal[[0, 0]]), (0.0, 0.0, 0.0));
}

#[test]
fn haar_too_small_is_rejected() {
    assert!(dwt2(&Array2::zeros((2, 2)), 2, WaveletFamily::Haar).is_err());
    assert!(dwt2(&Array2::zeros((1, 8)), 1, WaveletFamily::Haar).is_err());
    assert!(dwt2_tensor(&grid(2, 2, &[0.0; 4]), 2, WaveletFamily::Haar).is_err());
}

#[test]
fn haar_odd_extent_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let x = Array2::from_shape_vec((7, 5), random_grid(&mut rng, 7, 5)).unwrap();
    let d = dwt2(&x, 2, WaveletFamily::Haar).unwrap();
    assert_eq!(d.approx.dim(), (2, 2));
    let r = idwt2(&d);
    assert!(r.iter().zip(&x).all(|(a, b)| (a - b).abs() < 1e-12));
}

#[test]
fn haar_tensor_matches_array_route() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for (h, w) in [(8, 8), (7, 9), (6, 10)] {
        let v = random_grid(&mut rng, h, w);
        let a = dwt2(&Array2::from_shape_vec((h, w), v.clone()).unwrap(), 2, WaveletFamily::Haar).unwrap();
        let (ta, td) = dwt2_tensor(&grid(h, w, &v), 2, WaveletFamily::Haar).unwrap();
        let close = |t: &Tensor, arrays: &[&Array2<f64>]| {
            let got = ops::to_f64_vec(t).unwrap();
            let want: Vec<f64> = arrays.iter().flat_map(|a| a.iter().copied()).collect();
            assert_eq!(got.len(), want.len());
            assert!(got.iter().zip(&want).all(|(x, y)| (x - y).abs() < 1e-12));
        };
        close(&ta, &[&a.approx]);
        for (t, b) in td.iter().zip(&a.details) {
            close(t, &[&b.horizontal, &b.vertical, &b.diagonal]);
        }
    }
}

#[test]
fn wavelet_constant_offset_hits_only_approximation() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let t = random_grid(&mut rng, 8, 8);
    let c = 0.1;
    let p: Vec<f64> = t.iter().map(|v| v + c).collect();
    let (p, t) = (grid(8, 8, &p), grid(8, 8, &t));
    let cfg = cfg();
    // Two Haar levels scale a constant by 2 each: dY_L = 4c.
    let want = cfg.alpha_low * 0.5 * (4.0 * c) * (4.0 * c);
    assert!((val(&wavelet_loss(&p, &t, None, &cfg).unwrap()) - want).abs() < 1e-9);
    let only_details = RegressionLossConfig { alpha_low: 0.0, ..cfg.clone() };
    assert!(val(&wavelet_loss(&p, &t, None, &only_details).unwrap()).abs() < 1e-12);
    assert_eq!(val(&wavelet_loss(&t, &t, None, &cfg).unwrap()), 0.0);
}

#[test]
fn wavelet_single_pixel_touches_every_level() {
    let t = vec![0.0; 64];
    let mut p = t.clone();
    p[9] = 1.0;
    for level in 0..2 {
        let mut weights = vec![0.0, 0.0];
        weights[level] = 1.0;
        let c = RegressionLossConfig { alpha_low: 0.0, detail_weights: weights, ..cfg() };
        assert!(val(&wavelet_loss(&grid(8, 8, &p), &grid(8, 8, &t), None, &c).unwrap()) > 0.0);
    }
}

#[test]
fn total_loss_boundaries() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (p, t) = (grid(8, 8, &random_grid(&mut rng, 8, 8)), grid(8, 8, &random_grid(&mut rng, 8, 8)));
    let full_ms = RegressionLossConfig { alpha_total: 1.0, ..cfg() };
    assert_eq!(
        val(&total_regression_loss(&p, &t, None, &full_ms).unwrap()),
        val(&multiscale_loss(&p, &t, None, &full_ms).unwrap())
    );
    let d = cfg();
    assert_eq!(d.alpha_total, 0.5);
    let mix = 0.5 * val(&multiscale_loss(&p, &t, None, &d).unwrap()) + 0.5 * val(&wavelet_loss(&p, &t, None, &d).unwrap());
    assert!((val(&total_regression_loss(&p, &t, None, &d).unwrap()) - mix).abs() < 1e-12);
    assert_eq!(val(&total_regression_loss(&t, &t, None, &d).unwrap()), 0.0);
}

#[test]
fn config_validation() {
    assert!(cfg().validate().is_ok());
    for bad in [
        RegressionLossConfig { scales: vec![1], ..cfg() },
        RegressionLossConfig { scales: vec![], ..cfg() },
        RegressionLossConfig { alpha_total: 1.5, ..cfg() },
        RegressionLossConfig { detail_weights: vec![1.0], ..cfg() },
        RegressionLossConfig { huber_delta: -1.0, ..cfg() },
    ] {
        assert!(bad.validate().is_err(), "{bad:?}");
    }
}

/// Central differences of `total_regression_loss` against autograd, f64.
#[test]
fn total_loss_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let cfg = RegressionLossConfig { huber_delta: 0.5, ..cfg() };
    let t = grid(8, 8, &random_grid(&mut rng, 8, 8));
    let p0 = random_grid(&mut rng, 8, 8);
    let mask: Vec<f64> = (0..64).map(|i| if i % 11 == 0 { 0.0 } else { 1.0 }).collect();
    let m = grid(8, 8, &mask);
    let var = Var::from_tensor(&grid(8, 8, &p0)).unwrap();
    let loss = total_regression_loss(var.as_tensor(), &t, Some(&m), &cfg).unwrap();
    let grads = loss.backward().unwrap();
    let analytic = ops::to_f64_vec(grads.get(var.as_tensor()).unwrap()).unwrap();
    let eps = 1e-6;
    for i in 0..64 {
        let eval = |d: f64| {
            let mut p = p0.clone();
            p[i] += d;
            val(&total_regression_loss(&grid(8, 8, &p), &t, Some(&m), &cfg).unwrap())
        };
        let numeric = (eval(eps) - eval(-eps)) / (2.0 * eps);
        let tol = 1e-3 * analytic[i].abs().max(numeric.abs()) + 1e-9;
        assert!((analytic[i] - numeric).abs() <= tol, "pixel {i}: {} vs {numeric}", analytic[i]);
    }
}

fn labels(h: usize, w: usize, v: &[u8]) -> Tensor {
    Tensor::from_slice(v, (1, h, w), &Device::Cpu).unwrap()
}

#[test]
fn combo_uniform_binary_logits() {
    let logits = Tensor::zeros((1, 1, 2, 2), DType::F64, &Device::Cpu).unwrap();
    let y = labels(2, 2, &[0, 1, 0, 1]);
    let focal_only = ComboLossConfig { dice_weight: 0.0, ..Default::default() };
    let f = val(&combo_classification_loss(&logits, &y, &focal_only).unwrap());
    assert!((f - 0.25 * 2f64.ln()).abs() < 1e-12);
    // p = 1/2 everywhere: intersection n/4 per class, union n per class.
    let both = val(&combo_classification_loss(&logits, &y, &ComboLossConfig::default()).unwrap());
    assert!((both - (0.5 + 0.25 * 2f64.ln())).abs() < 1e-12);
}

#[test]
fn combo_uniform_three_class_logits() {
    let logits = Tensor::zeros((1, 3, 1, 3), DType::F64, &Device::Cpu).unwrap();
    let y = labels(1, 3, &[0, 1, 2]);
    let focal_only = ComboLossConfig { dice_weight: 0.0, ..Default::default() };
    let f = val(&combo_classification_loss(&logits, &y, &focal_only).unwrap());
    assert!((f - (4.0 / 9.0) * 3f64.ln()).abs() < 1e-12);
}

#[test]
fn combo_saturated_correct_logits_vanish() {
    let y = [0u8, 2, 1, 1, 0, 2];
    let mut v = vec![-40.0f64; 18];
    for (i, &c) in y.iter().enumerate() {
        v[c as usize * 6 + i] = 40.0;
    }
    let logits = Tensor::from_vec(v, (1, 3, 2, 3), &Device::Cpu).unwrap();
    let l = val(&combo_classification_loss(&logits, &labels(2, 3, &y), &ComboLossConfig::default()).unwrap());
    assert!(l.abs() < 1e-12, "{l}");
}

#[test]
fn combo_ignores_labelled_pixels() {
    let y = labels(1, 4, &[0, 1, 255, 255]);
    let a = Tensor::new(&[[[[0.3, -1.0, 5.0, -7.0]]]], &Device::Cpu).unwrap();
    let b = Tensor::new(&[[[[0.3, -1.0, -2.0, 9.0]]]], &Device::Cpu).unwrap();
    let c = ComboLossConfig::default();
    assert_eq!(
        val(&combo_classification_loss(&a, &y, &c).unwrap()),
        val(&combo_classification_loss(&b, &y, &c).unwrap())
    );
    let all = labels(1, 4, &[255; 4]);
    let err = combo_classification_loss(&a, &all, &c).unwrap_err();
    assert_eq!(err.to_string(), "empty loss support");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn regression_losses_vanish_only_at_target(seed in any::<u64>(), h in 4usize..11, w in 4usize..11) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t = random_grid(&mut rng, h, w);
        let mut p = t.clone();
        let i = rng.random_range(0..h * w);
        p[i] += rng.random_range(0.01..1.0);
        let (gp, gt) = (grid(h, w, &p), grid(h, w, &t));
        let c = cfg();
        prop_assert!(val(&multiscale_loss(&gp, &gt, None, &c).unwrap()) > 0.0);
        prop_assert!(val(&wavelet_loss(&gp, &gt, None, &c).unwrap()) > 0.0);
        prop_assert!(val(&total_regression_loss(&gp, &gt, None, &c).unwrap()) > 0.0);
        prop_assert_eq!(val(&total_regression_loss(&gt, &gt, None, &c).unwrap()), 0.0);
    }

    #[test]
    fn regression_losses_symmetric_in_error(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t = random_grid(&mut rng, 8, 8);
        let e = random_grid(&mut rng, 8, 8);
        let plus: Vec<f64> = t.iter().zip(&e).map(|(a, b)| a + b).collect();
        let minus: Vec<f64> = t.iter().zip(&e).map(|(a, b)| a - b).collect();
        let gt = grid(8, 8, &t);
        let c = cfg();
        let a = val(&total_regression_loss(&grid(8, 8, &plus), &gt, None, &c).unwrap());
        let b = val(&total_regression_loss(&grid(8, 8, &minus), &gt, None, &c).unwrap());
        prop_assert!((a - b).abs() <= 1e-12 * a.max(1.0));
    }

    #[test]
    fn haar_reconstruction_and_energy(seed in any::<u64>(), hh in 1usize..9, hw in 1usize..9, levels in 1usize..3) {
        let (h, w) = (hh * 4, hw * 4);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Array2::from_shape_vec((h, w), random_grid(&mut rng, h, w)).unwrap();
        let d = dwt2(&x, levels, WaveletFamily::Haar).unwrap();
        let r = idwt2(&d);
        let norm = x.iter().map(|v| v * v).sum::<f64>();
        prop_assert!(r.iter().zip(&x).all(|(a, b)| (a - b).abs() <= 1e-6 * b.abs().max(1e-6)));
        prop_assert!((d.energy() - norm).abs() <= 1e-6 * norm);
    }
}
