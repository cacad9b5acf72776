use cad_core::dataset::{load_csv, standardize, write_csv};
use cad_core::geometry::Termination;
use cad_core::prototype::one_nn_accuracy;
use cad_core::synth::{gaussian_noise_at_mse, salt_pepper_at_mse, synthetic_frames};
use cad_core::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

const MSE_625: f64 = 625.0 / (255.0 * 255.0);

fn blob_with_outlier(seed: u64) -> LabeledDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 1.0).unwrap();
    let mut pts: Vec<Point> = (0..150)
        .map(|_| Point::new(vec![noise.sample(&mut rng), noise.sample(&mut rng)]).unwrap())
        .collect();
    pts.push(Point::new(vec![6.0, -5.0]).unwrap());
    LabeledDataset::new(pts).unwrap()
}

#[test]
fn csv_fit_json_predict() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("data.csv");
    let data = run_synthetic(Shape::HomoClusters, 120, 0.05, 3).unwrap();
    write_csv(&data, &path, "y").unwrap();
    let loaded = load_csv(&path, Some("y"), LabelKind::Anomaly).unwrap();
    assert_eq!(loaded.points(), data.points());
    assert_eq!(loaded.anomaly_labels(), data.anomaly_labels());

    let (scaled, params) = standardize(&loaded).unwrap();
    let model = fit(&scaled, 10, &KernelSpec::linear()).unwrap().with_standardization(params);
    let restored = CadModel::from_json(&model.to_json().unwrap()).unwrap();
    for p in loaded.points().iter().take(10) {
        assert_eq!(model.predict(p).unwrap(), restored.predict(p).unwrap());
    }
    let labels = model.training_labels();
    let truth = loaded.anomaly_labels().unwrap();
    assert!((0..loaded.len()).filter(|&i| truth[i]).all(|i| labels[i].is_anomaly()));
}

#[test]
fn path_is_deterministic_and_mostly_descends() {
    let data = blob_with_outlier(40);
    let model = fit(&data, 10, &KernelSpec::linear()).unwrap();
    let path = anomaly_path(&model, &[6.0, -5.0], 0.05, 2000).unwrap();
    assert_eq!(path, anomaly_path(&model, &[6.0, -5.0], 0.05, 2000).unwrap());
    assert_eq!(path.terminated_by, Termination::ReachedNormal);
    assert!(*path.scores.last().unwrap() <= model.split().midpoint());

    // increases only where the neighbor set changed between waypoints
    let nbrs: Vec<Vec<usize>> = path
        .waypoints
        .iter()
        .map(|w| model.neighbors_from(w, NeighborSource::NormalOnly).unwrap().indices)
        .collect();
    for i in 1..path.len() {
        if path.scores[i] > path.scores[i - 1] + 1e-9 {
            assert_ne!(nbrs[i], nbrs[i - 1], "score rose at waypoint {i} with fixed neighbors");
        }
    }
}

#[test]
fn denoising_a_training_frame_is_immediate() {
    let frames = synthetic_frames(60, 20, 28, 1).unwrap();
    let out = denoise(&frames, &frames.points()[10], 3, 0.01, 500, None).unwrap();
    assert_eq!(out.path.len(), 1);
    assert_eq!(out.path.terminated_by, Termination::ReachedNormal);
    assert_eq!(out.mse_trace, vec![0.0]);
}

#[test]
fn denoising_reduces_error() {
    let frames = synthetic_frames(80, 20, 28, 2).unwrap();
    let held = 33;
    let train = frames.subset(&(0..80).filter(|&i| i != held).collect::<Vec<_>>());
    let clean = &frames.points()[held];
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let noisy = [
        gaussian_noise_at_mse(clean, MSE_625, &mut rng).unwrap(),
        salt_pepper_at_mse(clean, MSE_625, &mut rng).unwrap(),
    ];
    for n in &noisy {
        let out = denoise(&train, n, 3, 0.01, 500, Some(clean)).unwrap();
        assert_eq!(out.mse_trace.len(), out.path.len());
        assert!(out.mse_trace.last().unwrap() < &out.mse_trace[0]);
        assert!(out.path.waypoints.iter().all(|w| w.iter().all(|v| (0.0..=1.0).contains(v))));
    }
}

#[test]
fn prototypes_keep_one_nn_accuracy() {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let noise = Normal::new(0.0, 1.0).unwrap();
    let mut make = |n: usize| {
        let pts: Vec<Point> = (0..n)
            .map(|i| {
                let c = if i % 2 == 0 { -1.5 } else { 1.5 };
                Point::new(vec![c + noise.sample(&mut rng), noise.sample(&mut rng)]).unwrap()
            })
            .collect();
        let classes = (0..n).map(|i| (i % 2).to_string()).collect();
        LabeledDataset::new(pts).unwrap().with_labels(Labels::Class(classes)).unwrap()
    };
    let (train, test) = (make(200), make(200));
    let full = one_nn_accuracy(&train, &test).unwrap();
    let kept = select_for_task(&train, Task::Classification, Policy::Top(0.5), 10, &KernelSpec::linear()).unwrap();
    assert_eq!(kept.len(), 100);
    let reduced = one_nn_accuracy(&train.subset(&kept), &test).unwrap();
    assert!((reduced - full).abs() <= 0.05, "full {full}, reduced {reduced}");
}

#[test]
fn kernel_ranking_is_deterministic_and_flags_outlier_last() {
    let data = blob_with_outlier(42);
    let r = rank(&data, 10, &KernelSpec::linear()).unwrap();
    assert_eq!(*r.order.last().unwrap(), 150);
    let poly = KernelSpec::polynomial(3, None).unwrap();
    assert_eq!(rank(&data, 10, &poly).unwrap(), rank(&data, 10, &poly).unwrap());
}
