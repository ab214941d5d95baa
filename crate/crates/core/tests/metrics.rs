use aqua_core::data::{SceneSeries, Sensor};
use aqua_core::metrics::*;
use aqua_core::raster::{Direction, Grid2D, TargetPack, IGNORE_LABEL};
use aqua_core::Task;
use chrono::NaiveDate;
use ndarray::{Array2, Array3, Array4};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Brute-force per-class P/R/F in percent; `None` where a denominator is 0.
fn oracle_prf(pred: &[u8], gt: &[u8], class: u8) -> (Option<f64>, Option<f64>, Option<f64>) {
    let mut tp = 0;
    let mut fp = 0;
    let mut fneg = 0;
    for (&p, &g) in pred.iter().zip(gt) {
        if g == IGNORE_LABEL {
            continue;
        }
        match (p == class, g == class) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fneg += 1,
            _ => {}
        }
    }
    let p = (tp + fp > 0).then(|| 100.0 * tp as f64 / (tp + fp) as f64);
    let r = (tp + fneg > 0).then(|| 100.0 * tp as f64 / (tp + fneg) as f64);
    let f = match (p, r) {
        (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
        (Some(_), Some(_)) => Some(0.0),
        _ => None,
    };
    (p, r, f)
}

fn random_labels(rng: &mut impl Rng, n: usize, classes: u8, ignore: bool) -> Vec<u8> {
    (0..n)
        .map(|_| {
            if ignore && rng.random_bool(0.1) {
                IGNORE_LABEL
            } else {
                rng.random_range(0..classes)
            }
        })
        .collect()
}

#[test]
fn confusion_matches_counting_oracle_on_random_masks() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..200 {
        let (h, w) = (rng.random_range(1..=16), rng.random_range(1..=16));
        let k = rng.random_range(2..=3u8);
        let gt = random_labels(&mut rng, h * w, k, true);
        let pred = random_labels(&mut rng, h * w, k, false);
        let mut acc = ConfusionAccumulator::new(k as usize);
        acc.add(&pred, &gt).unwrap();
        let evaluated = gt.iter().filter(|g| **g != IGNORE_LABEL).count() as u64;
        assert_eq!(acc.total(), evaluated);
        for c in 0..k {
            let s = acc.scores(c as usize);
            let (p, r, f) = oracle_prf(&pred, &gt, c);
            assert_eq!(s.precision, p.unwrap_or(0.0));
            assert_eq!(s.recall, r.unwrap_or(0.0));
            assert!((s.f1 - f.unwrap_or(0.0)).abs() <= 1e-9);
            assert_eq!(s.undefined, p.is_none() || r.is_none());
        }
    }
}

#[test]
fn confusion_examples() {
    let gt = [0u8, 1, 1, 0];
    let mut acc = ConfusionAccumulator::new(3);
    acc.add(&gt, &gt).unwrap();
    for c in 0..2 {
        let s = acc.scores(c);
        assert_eq!((s.precision, s.recall, s.f1, s.undefined), (100.0, 100.0, 100.0, false));
    }
    let absent = acc.scores(2);
    assert_eq!((absent.precision, absent.recall, absent.f1), (0.0, 0.0, 0.0));
    assert!(absent.undefined);
    assert!(acc.add(&[5], &[0]).is_err());
}

#[test]
fn confusion_merge_and_order_invariance() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let gt = random_labels(&mut rng, 200, 3, true);
    let pred = random_labels(&mut rng, 200, 3, false);
    let mut whole = ConfusionAccumulator::new(3);
    whole.add(&pred, &gt).unwrap();
    let mut parts = ConfusionAccumulator::new(3);
    let mut other = ConfusionAccumulator::new(3);
    parts.add(&pred[..70], &gt[..70]).unwrap();
    other.add(&pred[70..], &gt[70..]).unwrap();
    parts.merge(&other).unwrap();
    assert_eq!(parts, whole);
    let mut idx: Vec<usize> = (0..200).collect();
    idx.reverse();
    idx.swap(3, 150);
    let (p2, g2): (Vec<u8>, Vec<u8>) = idx.iter().map(|&i| (pred[i], gt[i])).unzip();
    let mut shuffled = ConfusionAccumulator::new(3);
    shuffled.add(&p2, &g2).unwrap();
    assert_eq!(shuffled, whole);
}

fn oracle_mae_top(pred: &[f64], gt: &[f64], valid: &[bool], frac: f64) -> f64 {
    let mut idx: Vec<usize> = (0..gt.len()).filter(|&i| valid[i]).collect();
    // Insertion sort by |gt| descending keeps equal keys in pixel order.
    for i in 1..idx.len() {
        let mut j = i;
        while j > 0 && gt[idx[j - 1]].abs() < gt[idx[j]].abs() {
            idx.swap(j - 1, j);
            j -= 1;
        }
    }
    let k = ((frac * idx.len() as f64).ceil() as usize).max(1);
    idx[..k].iter().map(|&i| (pred[i] - gt[i]).abs()).sum::<f64>() / k as f64
}

fn oracle_pearson(pred: &[f64], gt: &[f64], valid: &[bool]) -> f64 {
    let pairs: Vec<(f64, f64)> = (0..gt.len()).filter(|&i| valid[i]).map(|i| (pred[i], gt[i])).collect();
    let n = pairs.len() as f64;
    let mp = pairs.iter().map(|p| p.0).sum::<f64>() / n;
    let mg = pairs.iter().map(|p| p.1).sum::<f64>() / n;
    let cov: f64 = pairs.iter().map(|(p, g)| (p - mp) * (g - mg)).sum();
    let vp: f64 = pairs.iter().map(|(p, _)| (p - mp).powi(2)).sum();
    let vg: f64 = pairs.iter().map(|(_, g)| (g - mg).powi(2)).sum();
    cov / (vp * vg).sqrt()
}

#[test]
fn regression_metrics_match_oracles_on_random_grids() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..200 {
        let n = rng.random_range(2..=16) * rng.random_range(2..=16);
        // Coarse values produce ties in the ground truth ranking.
        let gt: Vec<f64> = (0..n).map(|_| (rng.random_range(0..20) as f64) / 10.0).collect();
        let pred: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..2.0)).collect();
        let mut valid: Vec<bool> = (0..n).map(|_| rng.random_bool(0.9)).collect();
        valid[0] = true;
        valid[1] = true;
        let m = valid.iter().filter(|v| **v).count() as f64;
        let want_mae = (0..n).filter(|&i| valid[i]).map(|i| (pred[i] - gt[i]).abs()).sum::<f64>() / m;
        assert!((mae(&pred, &gt, &valid).unwrap() - want_mae).abs() <= 1e-9);
        for f in [0.1, 0.2, 0.5, 1.0] {
            let got = mae_at_top(&pred, &gt, &valid, f).unwrap();
            assert!((got - oracle_mae_top(&pred, &gt, &valid, f)).abs() <= 1e-9);
        }
        let want_pc = oracle_pearson(&pred, &gt, &valid);
        if want_pc.is_finite() {
            assert!((pearson(&pred, &gt, &valid).unwrap() - want_pc).abs() <= 1e-9);
        }
        for t in REGRESSION_THRESHOLDS {
            let s = thresholded_metrics(&pred, &gt, &valid, t).unwrap();
            let bp: Vec<u8> = pred.iter().map(|v| u8::from(*v > t)).collect();
            let bg: Vec<u8> = (0..n).map(|i| if valid[i] { u8::from(gt[i] > t) } else { IGNORE_LABEL }).collect();
            let (p, r, f) = oracle_prf(&bp, &bg, 1);
            assert_eq!(s.precision, p.unwrap_or(0.0));
            assert_eq!(s.recall, r.unwrap_or(0.0));
            assert!((s.f1 - f.unwrap_or(0.0)).abs() <= 1e-9);
        }
    }
}

#[test]
fn regression_examples() {
    let all = [true, true];
    assert!((mae_at_top(&[0.1, 0.5], &[0.1, 0.9], &all, 0.5).unwrap() - 0.4).abs() < 1e-12);
    let g = [0.1, 0.9, 0.4];
    let v = [true; 3];
    assert_eq!(mae_at_top(&g, &g, &v, 0.2).unwrap(), 0.0);
    let p = [0.3, 0.2, 0.7];
    assert_eq!(mae_at_top(&p, &g, &v, 1.0).unwrap(), mae(&p, &g, &v).unwrap());
    assert!(mae_at_top(&p, &g, &v, 0.0).is_err());
    assert!(mae(&p, &g, &[false; 3]).is_err());

    assert!((pearson(&g, &g, &v).unwrap() - 1.0).abs() < 1e-12);
    let neg: Vec<f64> = g.iter().map(|x| -x).collect();
    assert!((pearson(&neg, &g, &v).unwrap() + 1.0).abs() < 1e-12);
    let aff: Vec<f64> = g.iter().map(|x| 3.0 * x - 1.0).collect();
    assert!((pearson(&aff, &g, &v).unwrap() - 1.0).abs() < 1e-12);
    assert!(pearson(&[1.0; 3], &g, &v).is_err());

    let s = thresholded_metrics(&g, &g, &v, 0.1).unwrap();
    assert_eq!((s.precision, s.recall, s.f1), (100.0, 100.0, 100.0));
    assert_eq!(thresholded_metrics(&[0.0; 3], &g, &v, 0.1).unwrap().recall, 0.0);
}

#[test]
fn regression_merge_matches_single_pass() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let g: Vec<f64> = (0..300).map(|_| rng.random_range(0.0..2.0)).collect();
    let p: Vec<f64> = (0..300).map(|_| rng.random_range(0.0..2.0)).collect();
    let v = vec![true; 300];
    let mut whole = RegressionAccumulator::new();
    whole.add(&p, &g, &v).unwrap();
    let mut a = RegressionAccumulator::new();
    let mut b = RegressionAccumulator::new();
    a.add(&p[..123], &g[..123], &v[..123]).unwrap();
    b.add(&p[123..], &g[123..], &v[123..]).unwrap();
    a.merge(&b);
    assert!((a.pearson().unwrap() - whole.pearson().unwrap()).abs() < 1e-12);
    assert!((a.mae().unwrap() - whole.mae().unwrap()).abs() < 1e-12);
    assert_eq!(a.mae_at_top(0.1).unwrap(), whole.mae_at_top(0.1).unwrap());
}

/// Two-sided Student-t tail via `t = sqrt(v) tan(theta)`:
/// `p = int_{theta0}^{pi/2} cos^{v-1} / int_0^{pi/2} cos^{v-1}`.
fn simpson_t_pvalue(t: f64, df: f64) -> f64 {
    let f = |x: f64| x.cos().powf(df - 1.0);
    let simpson = |a: f64, b: f64| {
        let n = 20_000;
        let h = (b - a) / n as f64;
        let mut s = f(a) + f(b);
        for i in 1..n {
            s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        s * h / 3.0
    };
    let half = std::f64::consts::FRAC_PI_2;
    let theta0 = (t.abs() / df.sqrt()).atan();
    simpson(theta0, half) / simpson(0.0, half)
}

#[test]
fn ttest_matches_independent_integral() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    for _ in 0..40 {
        let n = rng.random_range(2..40);
        let a: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
        let shift = rng.random_range(-0.3..0.3);
        let b: Vec<f64> = a.iter().map(|x| x + shift + rng.random_range(-0.4..0.4)).collect();
        let r = paired_ttest(&a, &b).unwrap();
        let want = simpson_t_pvalue(r.t, r.df);
        assert!((r.p - want).abs() <= 1e-9, "n={n}: {} vs {want}", r.p);
    }
}

#[test]
fn ttest_degenerate_cases() {
    let a = [0.2, 0.5, 0.9];
    let same = paired_ttest(&a, &a).unwrap();
    assert_eq!(same.p, 1.0);
    assert!(same.degenerate);
    let shifted: Vec<f64> = a.iter().map(|x| x + 0.25).collect();
    let c = paired_ttest(&shifted, &a).unwrap();
    assert!(c.degenerate && c.p < 1e-12);
    assert!(paired_ttest(&[1.0], &[2.0]).is_err());
    assert!(paired_ttest(&[1.0, 2.0], &[2.0]).is_err());
}

/// Series whose MNDWI at every pixel is exactly the given value per frame.
fn scene_with_mndwi(values: &[f64], h: usize, w: usize) -> SceneSeries {
    let t = values.len();
    let mut images = Array4::<f32>::from_elem((t, 6, h, w), 0.1);
    for (i, &m) in values.iter().enumerate() {
        images.slice_mut(ndarray::s![i, 1, .., ..]).fill(((1.0 + m) / 2.0) as f32);
        images.slice_mut(ndarray::s![i, 4, .., ..]).fill(((1.0 - m) / 2.0) as f32);
    }
    let dates = (0..t).map(|i| NaiveDate::from_ymd_opt(2000 + i as i32, 6, 1).unwrap()).collect();
    SceneSeries::new(images, Array3::from_elem((t, h, w), true), vec![false; t], dates, Sensor::Sentinel2, "USA", "b").unwrap()
}

#[test]
fn persistence_hand_median_example() {
    let scene = scene_with_mndwi(&[0.1, 0.3, 0.2, 0.5], 2, 2);
    let d = persistence_delta(&scene).unwrap();
    assert!(d.values.iter().all(|v| (v - 0.3).abs() < 1e-6));
    let Prediction::Classes(c) = persistence_predict(&scene, Task::Change, 0.1, PersistenceConvention::Literal).unwrap() else { panic!() };
    assert!(c.iter().all(|v| *v == 1));
    let Prediction::Classes(dir) = persistence_predict(&scene, Task::Direction, 0.1, PersistenceConvention::Literal).unwrap() else { panic!() };
    assert!(dir.iter().all(|v| *v == Direction::Pos as u8));
    // A rising index means the forecast target median(past) - median(future) is negative.
    let Prediction::Classes(al) = persistence_predict(&scene, Task::Direction, 0.1, PersistenceConvention::TargetAligned).unwrap() else { panic!() };
    assert!(al.iter().all(|v| *v == Direction::Neg as u8));
    let Prediction::Values(m) = persistence_predict(&scene, Task::Magnitude, 0.1, PersistenceConvention::Literal).unwrap() else { panic!() };
    assert!(m.iter().all(|v| (v - 0.3).abs() < 1e-6));
}

#[test]
fn persistence_constant_series_and_errors() {
    let scene = scene_with_mndwi(&[0.4; 5], 3, 3);
    for task in [Task::Change, Task::Direction] {
        let Prediction::Classes(c) = persistence_predict(&scene, task, 0.1, PersistenceConvention::default()).unwrap() else { panic!() };
        assert_eq!(c, constant_predict(task, (3, 3)).clone().into_classes());
    }
    let mut one = scene_with_mndwi(&[0.4, 0.2], 1, 1);
    one.imputed[0] = true;
    assert!(persistence_delta(&one).is_err());
}

trait IntoClasses {
    fn into_classes(self) -> Array2<u8>;
}

impl IntoClasses for Prediction {
    fn into_classes(self) -> Array2<u8> {
        match self {
            Prediction::Classes(c) => c,
            Prediction::Values(_) => panic!("not a class map"),
        }
    }
}

fn pack(values: Array2<f64>) -> TargetPack {
    TargetPack::from_target(Grid2D::from_values(values).unwrap(), 0.1).unwrap()
}

#[test]
fn constant_baseline_structure() {
    let static_pack = pack(Array2::zeros((4, 4)));
    let mut ev = TaskEvaluator::new(Task::Change);
    ev.add("s", &constant_predict(Task::Change, (4, 4)), &static_pack).unwrap();
    let r = ev.report("constant");
    assert_eq!(r.get("NoCHG_R"), Some(100.0));
    assert_eq!(r.get("CHG_F"), Some(0.0));

    let t = Array2::from_shape_fn((4, 4), |(y, x)| (y as f64 - x as f64) * 0.1);
    let p = pack(t.clone());
    let mut ev = TaskEvaluator::new(Task::Magnitude);
    ev.add("s", &constant_predict(Task::Magnitude, (4, 4)), &p).unwrap();
    let want = t.iter().map(|v| v.abs()).sum::<f64>() / 16.0;
    assert!((ev.report("constant").get("MAE").unwrap() - want).abs() < 1e-12);
}

#[test]
fn report_csv_round_trip_and_columns() {
    let t = Array2::from_shape_fn((4, 4), |(y, x)| (y as f64 - x as f64) * 0.1);
    let p = pack(t.clone());
    for task in Task::ALL {
        let mut ev = TaskEvaluator::new(task);
        let pred = match task {
            Task::Magnitude => Prediction::Values(t.mapv(f64::abs)),
            _ => Prediction::Classes(task.labels(&p).unwrap().clone()),
        };
        ev.add("a", &pred, &p).unwrap();
        let r = ev.report("model");
        let back = MetricReport::from_csv(&r.to_csv()).unwrap();
        assert_eq!(back, r);
        let keys: Vec<&str> = r.keys().collect();
        let want: &[&str] = match task {
            Task::Change => &["NoCHG_P", "NoCHG_R", "NoCHG_F", "CHG_P", "CHG_R", "CHG_F"],
            Task::Direction => &["NEG_F", "NONE_F", "POS_F", "NEG_POS_mean_F"],
            Task::Magnitude => &["MAE", "MAE@10", "MAE@20", "PC", "P@0.1", "R@0.1", "F@0.1", "P@0.2", "R@0.2", "F@0.2"],
        };
        for k in want {
            assert!(keys.contains(k), "{task}: {k}");
        }
    }
}

proptest! {
    #[test]
    fn persistence_change_is_direction_not_none(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (h, w) = (4, 5);
        let t = 4;
        let mut images = Array4::<f32>::zeros((t, 6, h, w));
        images.mapv_inplace(|_| rng.random_range(0.01f32..0.6));
        let valid = Array3::from_shape_fn((t, h, w), |_| rng.random_bool(0.8));
        let dates = (0..t).map(|i| NaiveDate::from_ymd_opt(2000 + i as i32, 6, 1).unwrap()).collect();
        let scene = SceneSeries::new(images, valid, vec![false; t], dates, Sensor::Landsat5, "USA", "b").unwrap();
        for conv in [PersistenceConvention::Literal, PersistenceConvention::TargetAligned] {
            let c = persistence_predict(&scene, Task::Change, 0.1, conv).unwrap().into_classes();
            let d = persistence_predict(&scene, Task::Direction, 0.1, conv).unwrap().into_classes();
            for (a, b) in c.iter().zip(&d) {
                prop_assert_eq!(*a == 1, *b != Direction::None as u8);
            }
        }
    }
}
