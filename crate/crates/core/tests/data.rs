use aqua_core::data::io::{load_sample, save_sample, Manifest, ManifestEntry, META_FILE};
use aqua_core::data::standardize::ChannelStats;
use aqua_core::data::*;
use aqua_core::raster::*;
use aqua_core::Error;
use chrono::NaiveDate;
use ndarray::{Array2, Array3, Array4};
use proptest::prelude::*;

fn date(y: i32) -> NaiveDate {
    NaiveDate::from_ymd_opt(y, 7, 1).unwrap()
}

fn stack_of(frames: Vec<Array2<f64>>) -> GridStack {
    let dates = (0..frames.len()).map(|i| date(2000 + i as i32)).collect();
    GridStack::new(frames.into_iter().map(|v| Grid2D::from_values(v).unwrap()).collect(), dates).unwrap()
}

/// Single pixel series whose frames have the given (green, swir) reflectances.
fn pixel_series(gs: &[(f32, f32)], first_year: i32) -> SceneSeries {
    let t = gs.len();
    let mut images = Array4::from_elem((t, 6, 1, 1), 0.1f32);
    for (i, (g, s)) in gs.iter().enumerate() {
        images[[i, GREEN, 0, 0]] = *g;
        images[[i, SWIR1, 0, 0]] = *s;
    }
    let dates = (0..t).map(|i| date(first_year + i as i32)).collect();
    SceneSeries::new(images, Array3::from_elem((t, 1, 1), true), vec![false; t], dates, Sensor::Landsat5, "USA", "b").unwrap()
}

#[test]
fn hand_built_receding_shore_is_positive() {
    // Past frame: water (G=0.09, SWIR=0.02); future frame: land (G=0.08, SWIR=0.24).
    let past = pixel_series(&[(0.09, 0.02)], 2000);
    let future = pixel_series(&[(0.08, 0.24)], 2001);
    let r = SampleRecord::assemble("x", past, future, None, None, 0.1).unwrap();
    let want = (0.09f32 as f64 - 0.02f32 as f64) / (0.09f32 as f64 + 0.02f32 as f64)
        - (0.08f32 as f64 - 0.24f32 as f64) / (0.08f32 as f64 + 0.24f32 as f64);
    assert!((r.targets.target.values[[0, 0]] - want).abs() < 1e-12);
    assert!(want > 0.0);
    assert_eq!(r.targets.direction_mask[[0, 0]], Direction::Pos as u8);
    assert_eq!(r.targets.change_mask[[0, 0]], change::CHANGE);

    // The reverse transition floods the pixel.
    let past = pixel_series(&[(0.08, 0.24)], 2000);
    let future = pixel_series(&[(0.09, 0.02)], 2001);
    let r = SampleRecord::assemble("y", past, future, None, None, 0.1).unwrap();
    assert_eq!(r.targets.direction_mask[[0, 0]], Direction::Neg as u8);
}

fn grid_strategy(h: usize, w: usize, lo: f64, hi: f64) -> impl Strategy<Value = Array2<f64>> {
    proptest::collection::vec(lo..hi, h * w).prop_map(move |v| Array2::from_shape_vec((h, w), v).unwrap())
}

proptest! {
    #[test]
    fn mndwi_is_bounded(g in grid_strategy(3, 4, 0.0, 1.0), s in grid_strategy(3, 4, 0.0, 1.0)) {
        let out = compute_mndwi(&Grid2D::from_values(g).unwrap(), &Grid2D::from_values(s).unwrap()).unwrap();
        for (v, ok) in out.values.iter().zip(&out.valid) {
            if *ok {
                prop_assert!((-1.0..=1.0).contains(v));
            }
        }
    }

    #[test]
    fn target_bounded_and_zero_on_identity(
        p in proptest::collection::vec(grid_strategy(2, 3, -1.0, 1.0), 1..5),
        f in proptest::collection::vec(grid_strategy(2, 3, -1.0, 1.0), 1..5),
    ) {
        let ps = stack_of(p.clone());
        let t = build_target(&ps, &stack_of(f)).unwrap();
        prop_assert!(t.values.iter().all(|v| v.abs() <= 2.0));
        let same = build_target(&ps, &stack_of(p)).unwrap();
        prop_assert!(same.values.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn median_is_permutation_invariant(frames in proptest::collection::vec(grid_strategy(2, 2, -1.0, 1.0), 1..6), rot in 0usize..6) {
        let mut shuffled = frames.clone();
        let k = rot % shuffled.len();
        shuffled.rotate_left(k);
        shuffled.reverse();
        let a = temporal_median(&stack_of(frames)).unwrap();
        let b = temporal_median(&stack_of(shuffled)).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn median_idempotent_on_constant_stack(c in -1.0f64..1.0, n in 1usize..6) {
        let m = temporal_median(&stack_of(vec![Array2::from_elem((2, 2), c); n])).unwrap();
        prop_assert!(m.values.iter().all(|v| *v == c));
    }

    #[test]
    fn change_mask_equals_direction_not_none(t in grid_strategy(4, 4, -2.0, 2.0), thr in 0.01f64..1.0) {
        let g = Grid2D::from_values(t).unwrap();
        let c = change_mask(&g, thr).unwrap();
        let d = direction_mask(&g, thr).unwrap();
        for (a, b) in c.iter().zip(&d) {
            prop_assert_eq!(*a == change::CHANGE, *b != Direction::None as u8);
        }
    }

    #[test]
    fn normalize_round_trip(t in grid_strategy(3, 3, -2.0, 2.0)) {
        let g = Grid2D::from_values(t).unwrap();
        let back = denormalize_target(&normalize_target(&g).unwrap());
        for (a, b) in back.values.iter().zip(&g.values) {
            prop_assert!((a - b).abs() <= 1e-12 * b.abs().max(1e-300));
        }
    }

    #[test]
    fn split_rule_is_total(region in prop_oneof![Just("USA"), Just("Europe"), Just("Brazil")]) {
        prop_assert_eq!(split_assign(Sensor::Landsat5, region).unwrap(), Split::Pretrain);
        prop_assert_ne!(split_assign(Sensor::Sentinel2, region).unwrap(), Split::Pretrain);
    }
}

fn quiet_cfg(dynamics: Dynamics) -> SyntheticConfig {
    SyntheticConfig {
        height: 16,
        width: 16,
        dynamics,
        ..Default::default()
    }
}

#[test]
fn standardize_examples() {
    let s = ChannelStats { mean: 0.2, std: 0.1 };
    assert!((s.apply(0.3) - 1.0).abs() < 1e-6);
    assert_eq!(ChannelStats { mean: 0.25, std: 0.1 }.apply(0.25), 0.0);
    assert_eq!(ChannelStats { mean: 5.0, std: 0.0 }.apply(0.7), 0.7);
}

#[test]
fn standardized_pretrain_split_has_unit_moments() {
    let recs: Vec<SampleRecord> = (0..6)
        .map(|i| generate_synthetic_scene(&quiet_cfg(Dynamics::ALL[i % 4]), i as u64).unwrap())
        .collect();
    assert!(recs.iter().all(|r| r.split == Split::Pretrain));
    let stats = NormStats::fit(&recs).unwrap();
    let inputs: Vec<ModelInput> = recs.iter().map(|r| standardize(r, &stats).unwrap()).collect();
    let moments = |vals: Vec<f64>| {
        let n = vals.len() as f64;
        let mean = vals.iter().sum::<f64>() / n;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        (mean, var.sqrt())
    };
    for c in 0..6 {
        let mut vals = Vec::new();
        for (r, inp) in recs.iter().zip(&inputs) {
            for ((t, y, x), ok) in r.scene.valid.indexed_iter() {
                if *ok {
                    vals.push(inp.images[[t, c, y, x]] as f64);
                }
            }
        }
        let (m, s) = moments(vals);
        assert!(m.abs() < 1e-6 && (s - 1.0).abs() < 1e-6, "band {c}: mean {m} std {s}");
    }
    let (m, s) = moments(inputs.iter().flat_map(|i| i.dem.as_ref().unwrap().iter().map(|v| *v as f64)).collect());
    assert!(m.abs() < 1e-6 && (s - 1.0).abs() < 1e-6, "dem: mean {m} std {s}");
    for v in 0..5 {
        let (m, s) = moments(
            inputs
                .iter()
                .flat_map(|i| i.climate.as_ref().unwrap().index_axis(ndarray::Axis(2), v).iter().map(|x| *x as f64).collect::<Vec<_>>())
                .collect(),
        );
        assert!(m.abs() < 1e-6 && (s - 1.0).abs() < 1e-6, "climate {v}: mean {m} std {s}");
    }
    // Cloud-masked pixels become the zero token.
    for (r, inp) in recs.iter().zip(&inputs) {
        for ((t, y, x), ok) in r.scene.valid.indexed_iter() {
            if !*ok {
                assert!((0..6).all(|c| inp.images[[t, c, y, x]] == 0.0));
            }
        }
    }
}

#[test]
fn zero_variance_channel_passes_through() {
    let mut r = generate_synthetic_scene(&quiet_cfg(Dynamics::Static), 1).unwrap();
    r.scene.images.index_axis_mut(ndarray::Axis(1), 0).fill(0.25);
    let stats = NormStats::fit([&r]).unwrap();
    assert_eq!(stats.zero_variance_channels(), vec!["Blue".to_string()]);
    let inp = standardize(&r, &stats).unwrap();
    let (t, y, x) = (0..5)
        .flat_map(|t| (0..16).flat_map(move |y| (0..16).map(move |x| (t, y, x))))
        .find(|&(t, y, x)| r.scene.valid[[t, y, x]])
        .unwrap();
    assert_eq!(inp.images[[t, 0, y, x]], 0.25);
    assert!(NormStats::fit(std::iter::empty::<&SampleRecord>()).is_err());
}

#[test]
fn sample_round_trip_is_lossless() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = SyntheticConfig { cloud_fraction: 0.1, ..quiet_cfg(Dynamics::MeanderingRiver) };
    let r = generate_synthetic_scene(&cfg, 4).unwrap();
    save_sample(&r, &dir.path().join("s")).unwrap();
    assert_eq!(load_sample(&dir.path().join("s")).unwrap(), r);

    let bare = generate_synthetic_scene(
        &SyntheticConfig {
            with_climate: false,
            with_dem: false,
            ..cfg
        },
        4,
    )
    .unwrap();
    save_sample(&bare, &dir.path().join("bare")).unwrap();
    let back = load_sample(&dir.path().join("bare")).unwrap();
    assert!(back.climate.is_none() && back.dem.is_none());
    assert_eq!(back, bare);
}

#[test]
fn tampered_container_fails_checksum() {
    let dir = tempfile::tempdir().unwrap();
    let r = generate_synthetic_scene(&quiet_cfg(Dynamics::GrowingLake), 2).unwrap();
    save_sample(&r, dir.path()).unwrap();
    let path = dir.path().join("dem.safetensors");
    let mut bytes = std::fs::read(&path).unwrap();
    let last = bytes.len() - 1;
    bytes[last] ^= 0x5a;
    std::fs::write(&path, bytes).unwrap();
    match load_sample(dir.path()) {
        Err(Error::Checksum { field, .. }) => assert_eq!(field, "dem"),
        other => panic!("expected checksum error, got {other:?}"),
    }
}

#[test]
fn missing_declared_container_names_field() {
    let dir = tempfile::tempdir().unwrap();
    let r = generate_synthetic_scene(&quiet_cfg(Dynamics::GrowingLake), 2).unwrap();
    save_sample(&r, dir.path()).unwrap();
    std::fs::remove_file(dir.path().join("climate.safetensors")).unwrap();
    match load_sample(dir.path()) {
        Err(Error::CorruptField { field, .. }) => assert!(field.contains("climate"), "{field}"),
        other => panic!("expected corrupt-field error, got {other:?}"),
    }
    std::fs::write(dir.path().join(META_FILE), "{}").unwrap();
    assert!(matches!(load_sample(dir.path()), Err(Error::CorruptField { .. })));
}

#[test]
fn manifest_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let mut m = Manifest::new(dir.path());
    for (i, region) in ["USA", "Brazil", "Europe"].into_iter().enumerate() {
        let cfg = SyntheticConfig {
            sensor: if i == 0 { Sensor::Landsat5 } else { Sensor::Sentinel2 },
            region: region.into(),
            ..quiet_cfg(Dynamics::Static)
        };
        let r = generate_synthetic_scene(&cfg, i as u64).unwrap();
        let rel = std::path::PathBuf::from(format!("samples/{i}"));
        save_sample(&r, &dir.path().join(&rel)).unwrap();
        m.samples.push(ManifestEntry { id: r.id.clone(), path: rel, split: r.split });
    }
    let file = m.save().unwrap();
    let back = Manifest::load(&file).unwrap();
    assert_eq!(back.samples, m.samples);
    assert_eq!(back.load_split(Split::Finetune).unwrap().len(), 1);
    assert_eq!(Manifest::load(dir.path()).unwrap().load_split(Split::Test).unwrap()[0].scene.region, "Europe");
}

#[test]
fn noiseless_generator_target_is_reproducible() {
    for d in Dynamics::ALL {
        let cfg = SyntheticConfig { noise: 0.0, cloud_fraction: 0.0, ..quiet_cfg(d) };
        let r = generate_synthetic_scene(&cfg, 17).unwrap();
        let t = build_target(&r.scene.mndwi_stack().unwrap(), &r.future.mndwi_stack().unwrap()).unwrap();
        assert_eq!(t, r.targets.target, "{d}");
        assert!(r.targets.target.values.iter().all(|v| v.abs() <= 2.0));
    }
}
