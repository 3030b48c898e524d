use paad::diffcore::Tensor;
use paad::fieldsim::{
    episode_world, run_episode, EpisodeConfig, ObservationFrame, WorldConfig, LIDAR_MAX_RANGE,
};
use paad::geometry::{project_bev, project_path, CameraModel, PathImage, PlannedPath};
use paad::loss::{gaussian_recon_nll, kl_to_standard_normal};
use paad::metrics::{f1_at_half, kde_bounded, pr_auc};
use paad::model::{assemble_batch, FusionMode, NetworkInput, Paad, PaadConfig};
use paad::monitor::{anomaly_score, beta, discount_sum, step, MonitorConfig, MonitorState};
use proptest::prelude::*;

// ---- metric oracles ----

fn brute_f1(preds: &[f64], labels: &[u8]) -> (f64, f64, f64) {
    let pos = |i: usize| preds[i] > 0.5;
    let n = preds.len();
    let tp = (0..n).filter(|&i| pos(i) && labels[i] == 1).count();
    let fp = (0..n).filter(|&i| pos(i) && labels[i] == 0).count();
    let fneg = (0..n).filter(|&i| !pos(i) && labels[i] == 1).count();
    let p = if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 };
    let r = if tp + fneg == 0 { 0.0 } else { tp as f64 / (tp + fneg) as f64 };
    let f = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
    (p, r, f)
}

/// Every distinct score is tried as a threshold from scratch.
fn brute_ap(preds: &[f64], labels: &[u8]) -> (Vec<(f64, f64, f64)>, f64) {
    let mut thresholds = preds.to_vec();
    thresholds.sort_by(|a, b| b.total_cmp(a));
    thresholds.dedup();
    let positives = labels.iter().filter(|&&l| l == 1).count();
    let mut points = Vec::new();
    let mut ap = 0.0;
    let mut prev = 0.0;
    for &t in &thresholds {
        let mut tp = 0;
        let mut fp = 0;
        for (p, l) in preds.iter().zip(labels) {
            if *p >= t {
                if *l == 1 {
                    tp += 1
                } else {
                    fp += 1
                }
            }
        }
        let precision = tp as f64 / (tp + fp) as f64;
        let recall = tp as f64 / positives as f64;
        ap += (recall - prev) * precision;
        prev = recall;
        points.push((t, precision, recall));
    }
    (points, ap)
}

fn scored_instance() -> impl Strategy<Value = (Vec<f64>, Vec<u8>)> {
    (2usize..=16).prop_flat_map(|n| {
        (
            // Coarse grid so ties are common.
            prop::collection::vec((0u32..=20).prop_map(|k| k as f64 / 20.0), n),
            prop::collection::vec(0u8..=1, n),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn f1_matches_brute_force((preds, labels) in scored_instance()) {
        let s = f1_at_half(&preds, &labels).unwrap();
        let (p, r, f) = brute_f1(&preds, &labels);
        prop_assert_eq!((s.precision, s.recall, s.f1), (p, r, f));
    }

    #[test]
    fn pr_auc_matches_brute_force((preds, mut labels) in scored_instance()) {
        labels[0] = 1;
        labels[1] = 0;
        let curve = pr_auc(&preds, &labels).unwrap();
        let (points, ap) = brute_ap(&preds, &labels);
        prop_assert_eq!(curve.auc, ap);
        let got: Vec<_> = curve.points.iter().map(|p| (p.threshold, p.precision, p.recall)).collect();
        prop_assert_eq!(got, points);
        prop_assert!((0.0..=1.0).contains(&curve.auc));
        for w in curve.points.windows(2) {
            // Thresholds fall along the list, so recall never falls.
            prop_assert!(w[1].recall >= w[0].recall);
        }
    }

    #[test]
    fn pr_auc_is_invariant_to_monotone_maps((preds, mut labels) in scored_instance()) {
        labels[0] = 1;
        labels[1] = 0;
        let base = pr_auc(&preds, &labels).unwrap().auc;
        let maps: [fn(f64) -> f64; 3] = [|x| x * x * x, |x| (3.0 * x).exp(), |x| -1.0 / (x + 1.0)];
        for f in maps {
            let mapped: Vec<f64> = preds.iter().map(|&x| f(x)).collect();
            prop_assert_eq!(pr_auc(&mapped, &labels).unwrap().auc, base);
        }
    }

    #[test]
    fn kde_is_a_density(samples in prop::collection::vec(0.0f64..=1.0, 2..200), grid in 50usize..400) {
        let d = kde_bounded(&samples, grid).unwrap();
        prop_assert!(d.density.iter().all(|&v| v >= 0.0 && v.is_finite()));
        prop_assert!((d.integral() - 1.0).abs() <= 1e-3);
    }
}

// ---- monitor ----

/// Alert at `i` exactly when scores `i-2..=i` exceed the threshold and the
/// run started at `i-2`.
fn rule_trace(scores: &[f64]) -> Vec<bool> {
    (0..scores.len())
        .map(|i| {
            i >= 2
                && scores[i - 2..=i].iter().all(|&s| s > 0.5)
                && (i == 2 || scores[i - 3] <= 0.5)
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn trigger_matches_rule_trace(scores in prop::collection::vec(
        prop_oneof![Just(0.5), 0.0f64..=1.0, 0.45f64..0.55], 0..60)) {
        let cfg = MonitorConfig::default();
        let mut st = MonitorState::default();
        let got: Vec<bool> = scores.iter().map(|&s| {
            let (n, a) = step(st, s, &cfg);
            st = n;
            a
        }).collect();
        prop_assert_eq!(got, rule_trace(&scores));
    }
}

proptest! {
    #[test]
    fn score_is_bounded(profile in prop::collection::vec(0.0f64..=1.0, 1..20), gamma in 0.01f64..=1.0) {
        let s = anomaly_score(&profile, gamma).unwrap();
        prop_assert!((0.0..=1.0).contains(&s));
        let ones = vec![1.0; profile.len()];
        let zeros = vec![0.0; profile.len()];
        prop_assert_eq!(anomaly_score(&ones, gamma).unwrap(), 1.0);
        prop_assert_eq!(anomaly_score(&zeros, gamma).unwrap(), 0.0);
        if profile.iter().any(|&p| p < 1.0) {
            prop_assert!(s < 1.0);
        }
        if profile.iter().any(|&p| p > 0.0) {
            prop_assert!(s > 0.0);
        }
    }

    #[test]
    fn beta_normalizes_within_four_ulp(horizon in 1usize..64, gamma in 0.01f64..=1.0) {
        let prod = beta(horizon, gamma) * discount_sum(horizon, gamma);
        prop_assert!((prod - 1.0).abs() <= 4.0 * f64::EPSILON);
    }
}

// ---- loss ----

proptest! {
    #[test]
    fn kl_is_non_negative(mu in prop::collection::vec(-5.0f64..5.0, 1..16), ls in prop::collection::vec(-3.0f64..3.0, 16)) {
        let sigma: Vec<f64> = ls[..mu.len()].iter().map(|l| l.exp()).collect();
        prop_assert!(kl_to_standard_normal(&mu, &sigma).unwrap() >= 0.0);
    }

    #[test]
    fn recon_grows_with_error(
        x in prop::collection::vec(-2.0f64..2.0, 1..12),
        i in 0usize..12,
        d in 0.0f64..1.0,
        extra in 0.0f64..1.0,
        sigma in 0.1f64..3.0,
    ) {
        let i = i % x.len();
        let mut near = x.clone();
        near[i] += d;
        let mut far = x.clone();
        far[i] += d + extra;
        let a = gaussian_recon_nll(&x, &near, sigma).unwrap();
        let b = gaussian_recon_nll(&x, &far, sigma).unwrap();
        prop_assert!(b >= a);
    }
}

// ---- geometry ----

fn arc_path(curvature: f64, heading: f64, lateral: f64) -> PlannedPath {
    let mut wps = Vec::new();
    let (mut x, mut y, mut h) = (0.0f64, lateral, heading);
    for _ in 0..10 {
        wps.push([x as f32, y as f32]);
        x += 0.2 * h.cos();
        y += 0.2 * h.sin();
        h += 0.2 * curvature;
    }
    PlannedPath::new(wps)
}

/// Every set pixel has a partner within one column on the mirrored side.
/// Every set pixel of `a`, reflected about column `axis`, has a set pixel of
/// `b` within one pixel (line tie-breaking may move a pixel by one step).
/// Reflections landing off the frame are not checked.
fn mirrors(a: &PathImage, b: &PathImage, axis: f64) -> bool {
    a.set_pixels().iter().all(|&(r, c)| {
        let m = (2.0 * axis - c as f64).round() as i64;
        if m < 1 || m > b.cols as i64 - 2 {
            return true;
        }
        (r.saturating_sub(1)..=(r + 1).min(b.rows - 1))
            .any(|mr| (m - 1..=m + 1).any(|mc| b.get(mr, mc as usize) != 0))
    })
}

proptest! {
    #[test]
    fn mirrored_paths_mirror_images(k in -1.5f64..1.5, h in -0.4f64..0.4, y in -0.2f64..0.2) {
        let p = arc_path(k, h, y);
        let m = p.mirrored();
        let cam = CameraModel::default();
        let (a, b) = (project_path(&p, &cam).unwrap(), project_path(&m, &cam).unwrap());
        prop_assert!(mirrors(&a, &b, cam.principal_col) && mirrors(&b, &a, cam.principal_col));
        let (a, b) = (project_bev(&p, 18.0, 40), project_bev(&m, 18.0, 40));
        prop_assert!(mirrors(&a, &b, 20.0) && mirrors(&b, &a, 20.0));
    }

    #[test]
    fn path_pixels_stay_in_roi_and_bounded(k in -2.0f64..2.0, h in -0.6f64..0.6, y in -0.3f64..0.3) {
        let p = arc_path(k, h, y);
        let cam = CameraModel::default();
        let img = project_path(&p, &cam).unwrap();
        let (start, _) = cam.roi_rows().unwrap();
        prop_assert!(img.set_pixels().iter().all(|&(r, _)| r >= start));
        // Longest possible segment spans the image diagonal.
        let diag = ((cam.rows.pow(2) + cam.cols.pow(2)) as f64).sqrt().ceil() as usize + 1;
        prop_assert!(img.count_set() <= p.len() * diag);
        let any_visible = p.waypoints.iter().any(|&[x, y]| {
            cam.project_point(x as f64, y as f64, 0.0).is_some_and(|(c, r, _)| {
                // Pixel k covers [k - 0.5, k + 0.5).
                (-0.5..cam.cols as f64 - 0.5).contains(&c)
                    && (start as f64 - 0.5..cam.rows as f64 - 0.5).contains(&r)
            })
        });
        if any_visible {
            prop_assert!(img.count_set() > 0);
        }
    }
}

// ---- simulator ----

fn short_episode(world: &WorldConfig, frames: usize) -> Vec<ObservationFrame> {
    let ep = EpisodeConfig { frames, ..EpisodeConfig::default() };
    run_episode(world, &ep, 0).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn labels_agree_with_distance_oracle(seed in 0u64..10_000) {
        let wc = WorldConfig { seed, heading_corruption_probability: 0.1, ..WorldConfig::default() };
        let ep = EpisodeConfig { frames: 120, ..EpisodeConfig::default() };
        let frames = run_episode(&wc, &ep, 0).unwrap();
        let world = episode_world(&wc, &ep).unwrap();
        let half = wc.row_spacing / 2.0;
        for f in &frames {
            let (s, c) = f.pose.heading.sin_cos();
            let mut failed = false;
            for (k, &[px, py]) in f.path.waypoints.iter().enumerate() {
                let (px, py) = (px as f64, py as f64);
                let (wx, wy) = (f.pose.x + c * px - s * py, f.pose.y + s * px + c * py);
                let hit = world.obstacles().iter().any(|o| {
                    ((o.x - wx).powi(2) + (o.y - wy).powi(2)).sqrt() < wc.robot_radius + o.radius
                });
                failed |= hit || wy.abs() > half;
                prop_assert_eq!(f.labels[k], failed as u8, "frame {} step {}", f.index, k);
            }
        }
    }

    #[test]
    fn simulator_is_deterministic_and_ranges_valid(seed in 0u64..10_000) {
        let wc = WorldConfig { seed, ..WorldConfig::default() };
        let a = short_episode(&wc, 40);
        prop_assert_eq!(&a, &short_episode(&wc, 40));
        for f in &a {
            prop_assert!(f.lidar.iter().all(|&r| r > 0.0 && r <= LIDAR_MAX_RANGE as f32));
        }
    }

    #[test]
    fn occlusion_channels_are_independent(seed in 0u64..10_000) {
        let base = WorldConfig { seed, ..WorldConfig::default() };
        let no_cam = WorldConfig { camera_occlusion_probability: 0.0, ..base.clone() };
        let no_lidar = WorldConfig { lidar_occlusion_probability: 0.0, ..base.clone() };
        let (a, b, c) = (short_episode(&base, 60), short_episode(&no_cam, 60), short_episode(&no_lidar, 60));
        for ((fa, fb), fc) in a.iter().zip(&b).zip(&c) {
            prop_assert_eq!(&fa.lidar, &fb.lidar);
            prop_assert_eq!(&fa.image, &fc.image);
        }
    }
}

// ---- model ----

fn random_input(cfg: &PaadConfig, seed: u64, batch: usize) -> NetworkInput<f32> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut t = |shape: &[usize]| {
        let n: usize = shape.iter().product();
        Tensor::from_vec(shape, (0..n).map(|_| rng.random_range(0.0f32..1.0)).collect()).unwrap()
    };
    let (pr, pc) = cfg.path_input_hw().unwrap();
    NetworkInput {
        images: Some(t(&[batch, 1, cfg.image_rows, cfg.image_cols])),
        lidar: Some(t(&[batch, cfg.lidar_len])),
        paths: t(&[batch, 1, pr, pc]).map(|v| if v > 0.8 { 1.0 } else { 0.0 }),
        noise: None,
    }
}

#[test]
fn single_sensor_models_ignore_the_other_sensor() {
    for (mode, perturb_lidar) in [(FusionMode::CameraOnly, true), (FusionMode::LidarOnly, false)] {
        let cfg = PaadConfig { fusion_mode: mode, ..PaadConfig::compact() };
        let model = Paad::<f32>::new(cfg.clone()).unwrap();
        let a = random_input(&cfg, 1, 3);
        let mut b = a.clone();
        let other = random_input(&cfg, 2, 3);
        if perturb_lidar {
            b.lidar = other.lidar;
        } else {
            b.images = other.images;
        }
        assert_eq!(model.predict(&a).unwrap(), model.predict(&b).unwrap());
    }
}

#[test]
fn zero_attention_output_gives_identity_fusion() {
    let cfg = PaadConfig::compact();
    let mut model = Paad::<f32>::new(cfg.clone()).unwrap();
    for name in ["fusion.mha.output.weight", "fusion.mha.output.bias"] {
        let shape = model.params.get(name).unwrap().value.shape().to_vec();
        model.params.set_value(name, Tensor::zeros(&shape)).unwrap();
    }
    let d = cfg.token_dim;
    let cam = random_input(&cfg, 3, 2).lidar.unwrap();
    let cam = Tensor::from_vec(&[2, d], cam.data()[..2 * d].to_vec()).unwrap();
    let lid = Tensor::from_vec(&[2, d], cam.data().iter().map(|v| v * 2.0 - 1.0).collect()).unwrap();
    let fused = model.fuse_observation(Some(&cam), Some(&lid)).unwrap();
    assert_eq!(fused, Tensor::concat_features(&cam, &lid).unwrap());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn profiles_are_strictly_inside_unit_interval(seed in 0u64..1000, scale in 0.0f32..200.0) {
        let cfg = PaadConfig { init_seed: seed, ..PaadConfig::compact() };
        let mut model = Paad::<f32>::new(cfg.clone()).unwrap();
        // Blow up the head so the logits saturate.
        let w = model.params.get("head.out.weight").unwrap().value.map(|v| v * scale);
        model.params.set_value("head.out.weight", w).unwrap();
        let input = random_input(&cfg, seed, 2);
        for p in model.predict(&input).unwrap() {
            prop_assert_eq!(p.probs.len(), cfg.horizon);
            prop_assert!(p.probs.iter().all(|&v| v > 0.0 && v < 1.0));
        }
        // Inference is deterministic.
        prop_assert_eq!(model.predict(&input).unwrap(), model.predict(&input).unwrap());
    }
}

#[test]
fn prepared_frames_assemble_for_every_path_view() {
    use paad::model::{prepare_frame, PathView};
    let frames = short_episode(&WorldConfig::default(), 3);
    for view in [PathView::Front, PathView::Bev] {
        let cfg = PaadConfig { path_view: view, ..PaadConfig::default() };
        let prepared: Vec<_> = frames.iter().map(|f| prepare_frame(f, &cfg).unwrap()).collect();
        let refs: Vec<_> = prepared.iter().collect();
        let input = assemble_batch::<f32>(&refs, &cfg, None).unwrap();
        let (pr, pc) = cfg.path_input_hw().unwrap();
        assert_eq!(input.paths.shape(), &[3, 1, pr, pc]);
    }
}
