use dsgen::dataset::{load_sample, save_sample};
use dsgen::synth::{SceneSpec, TextureKind};
use dsgen::warp::generate_view;
use dsgen::{extract_observations, fit_model, render_planar_scene, FitConfig, Interpolation, ObservationsF64, SyntheticScene};

/// Mean absolute difference over masked pixels and all channels, in gray levels.
fn masked_mae(a: &dsgen::Image, b: &dsgen::Image, mask: &dsgen::BinaryMask) -> f64 {
    let c = a.channels();
    let (mut sum, mut n) = (0.0, 0usize);
    for (i, &road) in mask.values().iter().enumerate() {
        if road {
            for k in 0..c {
                sum += (a.data()[i * c + k] as f64 - b.data()[i * c + k] as f64).abs();
                n += 1;
            }
        }
    }
    sum / n as f64
}

fn render(spec: &SceneSpec) -> (SyntheticScene, dsgen::dataset::StereoSample) {
    let scene = SyntheticScene::from_spec(spec).unwrap();
    let sample = render_planar_scene(&scene).unwrap();
    (scene, sample)
}

#[test]
fn rendered_pair_is_consistent_under_true_model() {
    let (scene, sample) = render(&SceneSpec::kitti_like(0));
    let model = scene.model().unwrap();
    let view = generate_view(&sample.ref_image, &sample.tgt_image, &model, Interpolation::Bilinear).unwrap();
    let mae = masked_mae(&view.image, &sample.ref_image, &sample.road_mask);
    eprintln!("true-model mae = {mae:.4} gray levels");
    assert!(mae <= 2.0, "{mae}");
}

#[test]
fn fit_and_warp_close_the_loop() {
    let (scene, sample) = render(&SceneSpec::kitti_like(1));
    let truth = scene.model().unwrap();
    let cfg = FitConfig::default();
    let obs: ObservationsF64 = extract_observations(&sample.disparity, &sample.road_mask, &cfg).unwrap();
    let fit = fit_model(&obs, &cfg).unwrap();
    assert!((fit.model.roll() - truth.roll()).abs() <= 1e-4, "{fit:?} vs {truth:?}");
    assert!((fit.model.gain() / truth.gain() - 1.0).abs() <= 1e-3);
    assert!((fit.model.offset() / truth.offset() - 1.0).abs() <= 1e-3);

    let view = generate_view(&sample.ref_image, &sample.tgt_image, &fit.model, Interpolation::Bilinear).unwrap();
    assert_eq!(view.branches.total(), (sample.dims().0 * sample.dims().1) as u64);
    let mae = masked_mae(&view.image, &sample.ref_image, &sample.road_mask);
    eprintln!("fitted-model mae = {mae:.4} gray levels");
    assert!(mae <= 2.0, "{mae}");
}

#[test]
fn roll_covariance() {
    for gamma in [-0.1f64, -0.02, 0.04, 0.15] {
        let mut spec = SceneSpec::kitti_like(2);
        spec.plane.normal = [-gamma.sin(), gamma.cos(), 0.0];
        let (_, sample) = render(&spec);
        let cfg = FitConfig::default();
        let obs: ObservationsF64 = extract_observations(&sample.disparity, &sample.road_mask, &cfg).unwrap();
        let fit = fit_model(&obs, &cfg).unwrap();
        assert!((fit.model.roll() - gamma).abs() <= 1e-3, "{gamma}: {:?}", fit.model);
    }
}

#[test]
fn disk_roundtrip_preserves_rendered_sample() {
    let mut spec = SceneSpec::kitti_like(5);
    spec.width = 200;
    spec.height = 80;
    spec.calibration.o_u = 100.0;
    spec.calibration.o_v = 30.0;
    spec.texture.kind = TextureKind::Checkerboard;
    let (_, sample) = render(&spec);
    let dir = tempfile::tempdir().unwrap();
    save_sample(dir.path(), &sample, false).unwrap();
    let loaded = load_sample(dir.path(), &sample.sample_id).unwrap();
    assert_eq!(loaded, sample);
}

#[test]
fn noisy_render_still_fits() {
    let mut spec = SceneSpec::kitti_like(9);
    spec.disparity_noise_sigma = Some(0.5);
    let (scene, sample) = render(&spec);
    let truth = scene.model().unwrap();
    let cfg = FitConfig::default();
    let obs: ObservationsF64 = extract_observations(&sample.disparity, &sample.road_mask, &cfg).unwrap();
    let fit = fit_model(&obs, &cfg).unwrap();
    assert!((fit.model.gain() / truth.gain() - 1.0).abs() < 0.03);
    assert!((fit.model.roll() - truth.roll()).abs() < 1e-2);
}
