use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use remkit::eval::{crossval, CrossValidation, MethodOutcome};
use remkit::geo_grid::{GridSpec, LocalPoint};
use remkit::interp::{IdwParams, InterpolatorConfig, Method, RbfParams, TrainingSet};
use remkit::pipeline::{build_map, build_map_detailed, compare_maps, MapOptions};
use remkit::scene::{ground_truth_raster, sample_scene, synth_walk_path, SceneConfig, Transmitter};
use remkit::Error;

fn noiseless_scene() -> SceneConfig<f64> {
    SceneConfig {
        extent: GridSpec::new(LocalPoint::new(0.0, 0.0), 5.0, 40, 30).unwrap(),
        transmitters: vec![Transmitter::omni(LocalPoint::new(-30.0, 70.0), 43.0, 38.0, 3.2)],
        shadow_sigma: 0.0,
        shadow_correlation_length: 0.0,
        seed: 9,
    }
}

#[test]
fn noiseless_walk_map_tracks_truth_near_the_path() {
    let scene = noiseless_scene();
    let path = synth_walk_path(&scene.extent, 5.0, scene.seed).unwrap();
    let samples = sample_scene(&scene, &path).unwrap();
    let truth = ground_truth_raster(&scene, &scene.extent).unwrap();
    let map = build_map(&samples, &scene.extent, &InterpolatorConfig::default_map()).unwrap();

    let mut sq = 0.0;
    let mut n = 0;
    for (i, c) in scene.extent.centers().iter().enumerate() {
        if path.iter().any(|p| p.dist(c) <= 10.0) {
            let d = map.values[i].unwrap() - truth.values[i].unwrap();
            sq += d * d;
            n += 1;
        }
    }
    assert!(n > 100);
    let rmse = (sq / n as f64).sqrt();
    assert!(rmse < 3.0, "rmse {rmse} over {n} bins");
}

#[test]
fn idw_crossval_on_noiseless_walk_is_accurate() {
    let scene = noiseless_scene();
    let path = synth_walk_path(&scene.extent, 5.0, scene.seed).unwrap();
    let samples = sample_scene(&scene, &path).unwrap();
    let report = crossval(&[InterpolatorConfig::new(Method::Idw(IdwParams::default()))], &samples, 5, 1).unwrap();
    let s = report.methods[0].summary().unwrap();
    assert!(s.rmse.mean < 2.0, "{:?}", s.rmse);
    assert_eq!(s.folds.len(), 5);
}

fn random_set(n: usize, seed: u64) -> TrainingSet<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut t = TrainingSet::empty();
    for _ in 0..n {
        let p = LocalPoint::new(rng.random_range(0.0..100.0), rng.random_range(0.0..100.0));
        t.push(p, -60.0 - 0.2 * p.x + rng.random_range(-2.0..2.0), None);
    }
    t
}

#[test]
fn five_folds_of_one_hundred_hold_out_twenty_each() {
    let data = random_set(100, 3);
    let mut sizes = Vec::new();
    CrossValidation::new(5, 11)
        .run_inspect(&[InterpolatorConfig::new(Method::Idw(IdwParams::default()))], &data, |_, _, train, test| {
            sizes.push((train.len(), test.len()));
        })
        .unwrap();
    assert_eq!(sizes, vec![(80, 20); 5]);
}

#[test]
fn empty_method_list_and_small_sets() {
    let data = random_set(100, 4);
    let report = crossval(&[], &data, 5, 0).unwrap();
    assert!(report.methods.is_empty());
    assert_eq!(report.n_samples, 100);

    let small = random_set(9, 4);
    let idw = InterpolatorConfig::new(Method::Idw(IdwParams::default()));
    assert!(matches!(crossval(&[idw], &small, 5, 0), Err(Error::Size(_))));
}

#[test]
fn failing_method_is_flagged_while_others_run() {
    let mut data = TrainingSet::empty();
    for i in 0..50 {
        let x = i as f64 * 2.0;
        data.push(LocalPoint::new(x, 0.5 * x), -70.0 - 0.1 * x, None);
    }
    let methods = [
        InterpolatorConfig::new(Method::Rbf(RbfParams::default())),
        InterpolatorConfig::new(Method::Idw(IdwParams::default())),
    ];
    let report = crossval(&methods, &data, 5, 2).unwrap();
    assert!(matches!(report.methods[0].outcome, MethodOutcome::Failed { .. }));
    assert!(report.methods[1].summary().is_some());
}

#[test]
fn map_building_is_deterministic() {
    let data = random_set(300, 5);
    let grid = GridSpec::new(LocalPoint::new(0.0, 0.0), 4.0, 25, 25).unwrap();
    for cfg in [
        InterpolatorConfig::default_map(),
        InterpolatorConfig::new(Method::Rbf(RbfParams::default())),
    ] {
        let a = build_map(&data, &grid, &cfg).unwrap();
        let b = build_map(&data, &grid, &cfg).unwrap();
        assert_eq!(a, b);
        let cmp = compare_maps(&a, &b).unwrap();
        assert_eq!(cmp.rmse, Some(0.0));
    }
}

#[test]
fn pinned_bins_hold_their_sample_means() {
    let data = random_set(200, 6);
    let grid = GridSpec::new(LocalPoint::new(0.0, 0.0), 10.0, 10, 10).unwrap();
    let opts = MapOptions { pin_sampled_bins: true, prebin: false };
    let out = build_map_detailed(&data, &grid, &InterpolatorConfig::default_map(), opts).unwrap();
    let mut sums = vec![(0.0, 0u32); grid.len()];
    for (p, v) in data.points.iter().zip(&data.values) {
        let (c, r) = remkit::geo_grid::bin_index(&grid, p).unwrap();
        let i = grid.flat_index(c, r);
        sums[i].0 += v;
        sums[i].1 += 1;
    }
    for (i, (s, n)) in sums.iter().enumerate() {
        if *n > 0 {
            assert!((out.raster.values[i].unwrap() - s / *n as f64).abs() < 1e-9);
        }
    }
}
