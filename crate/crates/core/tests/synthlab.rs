use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use splatpose::geometry::Pose;
use splatpose::metrics_io::load_trajectory;
use splatpose::renderer::{render_model, RenderSettings};
use splatpose::synthlab::{
    fit_canonical_model, generate_dataset, generate_sequence, load_manifest, look_at, DatasetSpec, FitConfig,
    FitView, SequenceSpec, GROUND_TRUTH_FILE, MANIFEST_FILE,
};
use splatpose::tool_model::{default_tool_model, jaws_non_crossing, GaussianPrimitive, ToolModel};
use splatpose::{Error, ErrorKind};

fn small_spec(seed: u64) -> DatasetSpec {
    DatasetSpec {
        n_canonical: 2,
        n_posed: 3,
        views_per_config: 2,
        seed,
        width: 48,
        height: 40,
        ..DatasetSpec::default()
    }
}

fn model() -> ToolModel<f64> {
    default_tool_model()
}

#[test]
fn dataset_has_expected_records() {
    let dir = tempfile::tempdir().unwrap();
    let m = generate_dataset(&model(), &small_spec(1), dir.path()).unwrap();
    assert_eq!(m.records.len(), 10);
    let neutral = model().limits().neutral();
    for (i, r) in m.records.iter().enumerate() {
        assert_eq!(r.frame_index, i as u64);
        if r.canonical {
            assert_eq!(r.joints(), neutral);
        }
        assert!(dir.path().join(&r.image).exists());
        assert!(dir.path().join(&r.mask).exists());
    }
    assert_eq!(m.records.iter().filter(|r| r.canonical).count(), 4);
    assert_eq!(load_manifest(&dir.path().join(MANIFEST_FILE)).unwrap().records, m.records);
}

#[test]
fn same_seed_gives_identical_bytes() {
    let (a, b, c) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let mut spec = small_spec(5);
    spec.noise_std = 0.02;
    let ma = generate_dataset(&model(), &spec, a.path()).unwrap();
    generate_dataset(&model(), &spec, b.path()).unwrap();
    let read = |d: &std::path::Path, f: &str| std::fs::read(d.join(f)).unwrap();
    assert_eq!(read(a.path(), MANIFEST_FILE), read(b.path(), MANIFEST_FILE));
    for r in &ma.records {
        assert_eq!(read(a.path(), &r.image), read(b.path(), &r.image));
        assert_eq!(read(a.path(), &r.mask), read(b.path(), &r.mask));
    }
    spec.seed = 6;
    generate_dataset(&model(), &spec, c.path()).unwrap();
    assert_ne!(read(a.path(), MANIFEST_FILE), read(c.path(), MANIFEST_FILE));
}

#[test]
fn records_rerender_within_noise_bound() {
    let m = model();
    for noise in [0.0, 0.02] {
        let dir = tempfile::tempdir().unwrap();
        let mut spec = small_spec(11);
        spec.noise_std = noise;
        let manifest = generate_dataset(&m, &spec, dir.path()).unwrap();
        let manifest = load_manifest(&manifest.path()).unwrap();
        for r in &manifest.records {
            let loaded = r.load(&manifest.dir).unwrap();
            let out = render_model(&m, &loaded.pose, &loaded.q, &loaded.intrinsics, &RenderSettings::default()).unwrap();
            let worst = out
                .image
                .pixels
                .iter()
                .zip(&loaded.frame.pixels)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            assert!(worst <= r.noise_bound() + 1e-12, "record {}: {worst}", r.frame_index);
            for (a, s) in out.alpha.iter().zip(&loaded.mask.data) {
                assert_eq!(*a > spec.alpha_support, *s);
            }
            assert!(loaded.mask.count() > 0, "record {} shows nothing", r.frame_index);
        }
    }
}

#[test]
fn sampled_joints_respect_limits_and_jaws() {
    let dir = tempfile::tempdir().unwrap();
    let spec = DatasetSpec {
        n_canonical: 1,
        n_posed: 200,
        views_per_config: 1,
        width: 16,
        height: 16,
        ..DatasetSpec::default()
    };
    let m = model();
    let manifest = generate_dataset(&m, &spec, dir.path()).unwrap();
    for r in &manifest.records {
        let q = r.joints();
        assert!(m.limits().contains(&q) && jaws_non_crossing(&q), "{q:?}");
    }
}

#[test]
fn invalid_specs_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    for spec in [
        DatasetSpec {
            n_posed: 0,
            ..small_spec(0)
        },
        DatasetSpec {
            distance: [0.0, 0.1],
            ..small_spec(0)
        },
        DatasetSpec {
            noise_std: 2.0,
            ..small_spec(0)
        },
    ] {
        let e = generate_dataset(&model(), &spec, dir.path()).unwrap_err();
        assert!(matches!(e, Error::InvalidSpec(_)), "{e}");
        assert_eq!(e.kind(), ErrorKind::Usage);
    }
}

#[test]
fn look_at_centers_the_target() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..50 {
        let eye = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-0.5..0.5));
        let target = Vector3::new(rng.random_range(-0.1..0.1), rng.random_range(-0.1..0.1), 0.0);
        let pose = look_at(&eye, &target, &Vector3::z()).unwrap();
        let p = pose.transform_point(&target);
        assert!(p.x.abs() < 1e-12 && p.y.abs() < 1e-12);
        assert!((p.z - (target - eye).norm()).abs() < 1e-12);
        // World up appears above the target in the image (y points down).
        let above = pose.transform_point(&(target + Vector3::z() * 0.01));
        assert!(above.y < 0.0);
    }
    assert!(look_at(&Vector3::zeros(), &Vector3::z(), &Vector3::z()).is_err());
}

fn seq_spec() -> SequenceSpec {
    SequenceSpec {
        n_frames: 30,
        width: 48,
        height: 48,
        seed: 4,
        ..SequenceSpec::default()
    }
}

#[test]
fn zero_bounds_give_a_static_sequence() {
    let dir = tempfile::tempdir().unwrap();
    let spec = SequenceSpec {
        translation_bound: 0.0,
        rotation_bound: 0.0,
        joint_velocity_bound: 0.0,
        n_frames: 6,
        ..seq_spec()
    };
    let out = generate_sequence(&model(), &spec, dir.path()).unwrap();
    let first = &out.truth.records()[0];
    for (r, (f, m)) in out.truth.records().iter().zip(&out.frames) {
        assert_eq!(r.pose, first.pose);
        assert_eq!(r.q, first.q);
        assert_eq!(f.pixels, out.frames[0].0.pixels);
        assert_eq!(m.data, out.frames[0].1.data);
    }
}

#[test]
fn consecutive_frames_respect_motion_bounds() {
    let m = model();
    for seed in 0..5 {
        let dir = tempfile::tempdir().unwrap();
        let spec = SequenceSpec { seed, ..seq_spec() };
        let out = generate_sequence(&m, &spec, dir.path()).unwrap();
        let recs = out.truth.records();
        assert_eq!(recs.len(), 30);
        for w in recs.windows(2) {
            let dt = (w[1].pose.translation - w[0].pose.translation).norm();
            assert!(dt <= spec.translation_bound + 1e-15, "{dt}");
            let dr = w[1].pose.rotation.angle_to(&w[0].pose.rotation);
            assert!(dr <= spec.rotation_bound + 1e-12, "{dr}");
            let dq = (w[1].q.0 - w[0].q.0).amax();
            assert!(dq <= spec.joint_velocity_bound + 1e-15, "{dq}");
            assert!(m.limits().contains(&w[1].q) && jaws_non_crossing(&w[1].q));
        }
        assert_eq!(load_trajectory(&dir.path().join(GROUND_TRUTH_FILE)).unwrap(), out.truth);
        assert!(out.frames.iter().all(|(_, mask)| mask.count() > 0));
    }
}

#[test]
fn sequence_noise_stays_within_five_sigma() {
    let dir = tempfile::tempdir().unwrap();
    let sigma = 0.01;
    let spec = SequenceSpec {
        noise_std: sigma,
        n_frames: 5,
        ..seq_spec()
    };
    let m = model();
    let out = generate_sequence(&m, &spec, dir.path()).unwrap();
    let mut noisy = 0usize;
    for (r, (f, _)) in out.truth.records().iter().zip(&out.frames) {
        let clean = render_model(&m, &r.pose, &r.q, &out.intrinsics, &RenderSettings::default()).unwrap();
        for (a, b) in clean.image.pixels.iter().zip(&f.pixels) {
            assert!((0.0..=1.0).contains(b));
            assert!((a - b).abs() <= 5.0 * sigma, "{a} vs {b}");
            noisy += usize::from((a - b).abs() > 1.0 / 255.0);
        }
    }
    assert!(noisy > 0, "noise was not applied");
}

fn fit_views(m: &ToolModel<f64>, n: usize, size: usize) -> Vec<FitView> {
    let k = splatpose::geometry::Intrinsics::centered(size, size, 1.5).unwrap();
    let q = m.limits().neutral();
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let centroid = Vector3::new(-0.004, 0.0, 0.0);
    (0..n)
        .map(|_| {
            let az: f64 = rng.random_range(0.0..std::f64::consts::TAU);
            let el: f64 = rng.random_range(-1.0..1.0);
            let d = rng.random_range(0.08..0.1);
            let dir = Vector3::new(el.cos() * az.cos(), el.cos() * az.sin(), el.sin());
            let pose: Pose<f64> = look_at(&(centroid + dir * d), &centroid, &Vector3::z()).unwrap();
            let frame = render_model(m, &pose, &q, &k, &RenderSettings::default()).unwrap().image;
            FitView {
                frame,
                pose,
                intrinsics: k,
            }
        })
        .collect()
}

#[test]
fn fit_needs_two_views() {
    let m = model();
    let views = fit_views(&m, 1, 32);
    let e = fit_canonical_model(&m, &views, &FitConfig::default()).unwrap_err();
    assert!(matches!(e, Error::InsufficientViews(1)));
}

#[test]
fn fit_is_a_fixed_point_at_the_true_model() {
    let m = model();
    let views = fit_views(&m, 4, 48);
    let cfg = FitConfig {
        iters: 20,
        ..FitConfig::default()
    };
    let r = fit_canonical_model(&m, &views, &cfg).unwrap();
    assert!(r.initial_loss < 1e-6, "{}", r.initial_loss);
    for (a, b) in r.model.gaussians().iter().zip(m.gaussians()) {
        assert!((a.mean_local - b.mean_local).amax() < 1e-4);
        assert!((a.scale - b.scale).amax() < 1e-4);
        assert!((a.opacity - b.opacity).abs() < 1e-4);
        assert!((a.color - b.color).amax() < 1e-4);
    }
}

#[test]
fn fit_recovers_from_jittered_means() {
    let m = model();
    let views = fit_views(&m, 12, 64);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let jittered: Vec<GaussianPrimitive<f64>> = m
        .gaussians()
        .iter()
        .map(|g| {
            let dir = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            GaussianPrimitive {
                mean_local: g.mean_local + dir.normalize() * 0.001,
                ..g.clone()
            }
        })
        .collect();
    let init = m.with_gaussians(jittered).unwrap();
    let r = fit_canonical_model(&init, &views, &FitConfig::default()).unwrap();
    println!("fit loss {:.3e} -> {:.3e}", r.initial_loss, r.final_loss);
    assert!(r.final_loss <= 0.1 * r.initial_loss);
    for g in r.model.gaussians() {
        assert!(g.scale.iter().all(|s| *s > 0.0));
        assert!((0.0..=1.0).contains(&g.opacity));
    }
}
